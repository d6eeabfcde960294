"""Posterior state and prediction rules for the ensemble-weight estimators.

Three posterior families, one per ensemble loss variant:

* ``GammaPosterior``: exponential likelihood with a Gamma prior.  Conjugacy
  gives a closed-form Gamma posterior per weight: after t steps the shape is
  ``prior_shape + t`` and the rate is ``prior_rate + theta * sum of losses``,
  so the posterior mean costs O(m) per step.
* ``ShapePosterior``: Gamma likelihood where each weight is the shape.  The
  posterior density per weight is known up to normalization but its mean has
  no closed form; it is computed by deterministic adaptive quadrature.
* ``ShapeRatePosterior``: Gamma likelihood with a (shape, rate) pair per
  weight.  The rate coordinate integrates out analytically (conditionally a
  Gamma), leaving one-dimensional quadrature over the shape.

All quadrature runs in log space with max-subtraction, on a bracket located
from the density mode (solved by bisection on the log-density derivative) and
widened until the log-integrand falls 745 under its peak, i.e. to where the
integrand underflows float64.  Nodes follow a fixed schedule: Gauss-Legendre
panels whose node count doubles until two successive refinements agree to the
requested relative tolerance, falling back to a doubling trapezoid rule, so
identical inputs always produce bit-identical results.

The growing likelihood exponents (b + t, c + t, r + t, s + t) are capped
(defaults 1000, 1000, 200.5, 200) because the integrands degenerate
numerically as the exponents grow without bound; after the cap, new
observations still enter through the running loss statistics.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import digamma, polygamma

from .errors import QuadratureError
from .losses import log_gamma

__all__ = [
    "GammaPosterior",
    "ShapePosterior",
    "ShapeRatePosterior",
    "QuadratureSpec",
    "predict_weighted",
    "predict_shape",
    "predict_shape_rate",
]


# ---------------------------------------------------------------------------
# Closed-form variant


@dataclass
class GammaPosterior:
    """Per-weight Gamma posterior under the exponential-likelihood loss.

    State is the O(m) sufficient statistic (running loss sums plus the step
    count); the raw history is never stored.  Updates commute, so any
    permutation of the same loss vectors yields an identical posterior.
    """

    m: int
    prior_shape: float = 1.0
    prior_rate: float = 1.0
    theta: float = 0.1
    t: int = 0
    loss_sums: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.prior_shape <= 0 or self.prior_rate <= 0 or self.theta <= 0:
            raise ValueError("prior_shape, prior_rate, and theta must be positive")
        if self.loss_sums is None:
            self.loss_sums = np.zeros(self.m, dtype=np.float64)
        else:
            self.loss_sums = np.asarray(self.loss_sums, dtype=np.float64).copy()

    def update(self, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.m,):
            raise ValueError(f"expected loss vector of length {self.m}, got {g.shape}")
        if np.any(g < 0.0) or not np.all(np.isfinite(g)):
            raise ValueError("losses must be finite and non-negative")
        self.loss_sums += g
        self.t += 1

    def rates(self) -> np.ndarray:
        return self.prior_rate + self.theta * self.loss_sums

    def posterior_mean(self) -> np.ndarray:
        return (self.prior_shape + self.t) / self.rates()

    def map_estimate(self) -> np.ndarray:
        """Posterior mode, i.e. the cumulative-loss minimizer."""
        return (self.prior_shape + self.t - 1.0) / self.rates()

    def posterior_variance(self) -> np.ndarray:
        return (self.prior_shape + self.t) / self.rates() ** 2

    def snapshot(self) -> str:
        buf = io.StringIO()
        buf.write(
            f"gamma_posterior m={self.m} prior_shape={self.prior_shape!r} "
            f"prior_rate={self.prior_rate!r} theta={self.theta!r} t={self.t}\n"
        )
        buf.write("loss_sums: " + " ".join(repr(float(v)) for v in self.loss_sums) + "\n")
        return buf.getvalue()

    @classmethod
    def from_snapshot(cls, text: str) -> "GammaPosterior":
        lines = text.strip().splitlines()
        head = dict(part.split("=", 1) for part in lines[0].split()[1:])
        sums = np.array([float(v) for v in lines[1].split(":", 1)[1].split()])
        return cls(
            m=int(head["m"]),
            prior_shape=float(head["prior_shape"]),
            prior_rate=float(head["prior_rate"]),
            theta=float(head["theta"]),
            t=int(head["t"]),
            loss_sums=sums,
        )


# ---------------------------------------------------------------------------
# Quadrature machinery shared by the two Gamma-likelihood variants


@dataclass(frozen=True)
class QuadratureSpec:
    """Deterministic refinement schedule for the posterior-mean integrals."""

    rel_tol: float = 1e-8
    initial_nodes: int = 65
    max_doublings: int = 10
    log_tail_drop: float = 745.0  # float64 exp underflow span

    def __post_init__(self):
        if self.rel_tol <= 0 or self.initial_nodes < 2 or self.max_doublings < 1:
            raise ValueError("invalid quadrature spec")


DEFAULT_QUADRATURE = QuadratureSpec()


@lru_cache(maxsize=32)
def _unit_gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _bisect_increasing(fn, target: np.ndarray, lo: float = 1e-12) -> np.ndarray:
    """Solve fn(x) = target per component for an increasing fn on (0, inf)."""
    target = np.asarray(target, dtype=np.float64)
    low = np.full_like(target, lo)
    high = np.ones_like(target)
    for _ in range(700):
        expand = fn(high) < target
        if not expand.any():
            break
        high[expand] *= 2.0
    else:
        raise QuadratureError("mode bracket expansion failed", {"target_max": float(target.max())})
    for _ in range(120):
        mid = 0.5 * (low + high)
        below = fn(mid) < target
        low = np.where(below, mid, low)
        high = np.where(below, high, mid)
    return 0.5 * (low + high)


def _bracket(log_density, mode: np.ndarray, sigma: np.ndarray, drop: float):
    """Expand [lo, hi] around the mode until log density falls `drop` under the peak."""
    peak = log_density(mode)
    lo = np.maximum(mode - 8.0 * sigma, mode / 16.0)
    for _ in range(700):
        open_mask = (log_density(lo) > peak - drop) & (lo > 1e-300)
        if not open_mask.any():
            break
        lo = np.where(open_mask, lo / 4.0, lo)
    hi = mode + 8.0 * sigma
    for _ in range(700):
        open_mask = log_density(hi) > peak - drop
        if not open_mask.any():
            break
        hi = np.where(open_mask, mode + (hi - mode) * 2.0, hi)
    else:
        raise QuadratureError("bracket expansion failed", {"hi_max": float(hi.max())})
    return lo, hi, peak


def _refine(log_density, moments, lo, hi, peak, spec: QuadratureSpec, kind: str):
    """Integrate the requested moment ratios with a doubling node schedule.

    ``moments`` maps each output name to a function of the node matrix; every
    output is the ratio  integral(moment * density) / integral(density).
    """
    drift = float("inf")
    for use_trapezoid in (False, True):
        results_prev = None  # each rule must converge against itself
        n = spec.initial_nodes
        for _ in range(spec.max_doublings):
            if use_trapezoid:
                x01 = np.linspace(0.0, 1.0, n)
                w01 = np.full(n, 1.0 / (n - 1))
                w01[0] *= 0.5
                w01[-1] *= 0.5
            else:
                x01, w01 = _unit_gauss_legendre(n)
            width = hi - lo
            nodes = lo[:, None] + width[:, None] * x01[None, :]
            log_w = log_density(nodes) - peak[:, None]
            density = np.exp(log_w) * w01[None, :]
            total = density.sum(axis=1)
            results = {
                name: (moment(nodes) * density).sum(axis=1) / total
                for name, moment in moments.items()
            }
            if results_prev is not None:
                drift = max(
                    float(
                        np.max(
                            np.abs(results[name] - results_prev[name])
                            / np.maximum(np.abs(results[name]), 1e-300)
                        )
                    )
                    for name in results
                )
                if drift <= spec.rel_tol:
                    return results
            results_prev = results
            n = 2 * n
    raise QuadratureError(
        f"{kind} posterior-mean quadrature did not converge",
        {"nodes": n // 2, "rel_tol": spec.rel_tol, "drift": drift},
    )


# ---------------------------------------------------------------------------
# Gamma-likelihood variant 1: weights are Gamma shapes


@dataclass
class ShapePosterior:
    """Posterior for shape-valued weights under the Gamma likelihood.

    Hyperparameters: ``a`` seeds the running product of losses, ``b`` counts
    how many Gamma normalizers divide the density, and ``c`` scales the
    log(theta) tilt.  The effective exponents ``b + t`` and ``c + t`` are
    capped (default 1000) to keep the integrands numerically tractable.
    Requires strictly positive losses; feed logistic losses or floor them.
    """

    m: int
    theta: float = 0.1
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    b_cap: float = 1000.0
    c_cap: float = 1000.0
    t: int = 0
    log_prod: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if min(self.theta, self.a, self.b, self.c) <= 0:
            raise ValueError("theta, a, b, c must be positive")
        if self.log_prod is None:
            self.log_prod = np.zeros(self.m, dtype=np.float64)
        else:
            self.log_prod = np.asarray(self.log_prod, dtype=np.float64).copy()

    def update(self, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.m,):
            raise ValueError(f"expected loss vector of length {self.m}, got {g.shape}")
        if np.any(g <= 0.0) or not np.all(np.isfinite(g)):
            raise ValueError("this variant requires strictly positive finite losses")
        self.log_prod += np.log(g)
        self.t += 1

    def effective_exponents(self) -> tuple[float, float]:
        return min(self.b + self.t, self.b_cap), min(self.c + self.t, self.c_cap)

    def posterior_mean(self, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
        b_eff, c_eff = self.effective_exponents()
        # Folding the c_eff*log(theta) tilt into the (lam - 1) factor rescales
        # the unnormalized density by a constant, which the moment ratio drops.
        tilt = np.log(self.a) + self.log_prod + c_eff * np.log(self.theta)

        def log_density(lam):
            if lam.ndim == 2:
                return (lam - 1.0) * tilt[:, None] - b_eff * log_gamma(lam)
            return (lam - 1.0) * tilt - b_eff * log_gamma(lam)

        # Mode: digamma(lam) = tilt / b_eff, unique since digamma is increasing.
        mode = _bisect_increasing(digamma, tilt / b_eff)
        sigma = 1.0 / np.sqrt(b_eff * polygamma(1, mode))
        lo, hi, peak = _bracket(log_density, mode, sigma, spec.log_tail_drop)
        results = _refine(
            log_density, {"mean": lambda lam: lam}, lo, hi, peak, spec, "shape"
        )
        return results["mean"]

    def snapshot(self) -> str:
        head = (
            f"shape_posterior m={self.m} theta={self.theta!r} a={self.a!r} b={self.b!r} "
            f"c={self.c!r} b_cap={self.b_cap!r} c_cap={self.c_cap!r} t={self.t}\n"
        )
        return head + "log_prod: " + " ".join(repr(float(v)) for v in self.log_prod) + "\n"

    @classmethod
    def from_snapshot(cls, text: str) -> "ShapePosterior":
        lines = text.strip().splitlines()
        head = dict(part.split("=", 1) for part in lines[0].split()[1:])
        log_prod = np.array([float(v) for v in lines[1].split(":", 1)[1].split()])
        return cls(
            m=int(head["m"]),
            theta=float(head["theta"]),
            a=float(head["a"]),
            b=float(head["b"]),
            c=float(head["c"]),
            b_cap=float(head["b_cap"]),
            c_cap=float(head["c_cap"]),
            t=int(head["t"]),
            log_prod=log_prod,
        )


# ---------------------------------------------------------------------------
# Gamma-likelihood variant 2: weights are (shape, rate) pairs


@dataclass
class ShapeRatePosterior:
    """Posterior for (shape, rate) weight pairs under the Gamma likelihood.

    The rate coordinate is conditionally Gamma given the shape, with shape
    ``alpha * s_eff + 1`` and rate ``q + sum of losses``, so only the shape
    marginal needs quadrature.  The exponent caps (200.5 and 200 by default)
    preserve ``s_eff < r_eff``, which the shape marginal needs to remain
    integrable.
    """

    m: int
    p: float = 1.0
    q: float = 1.0
    r: float = 1.5
    s: float = 1.0
    r_cap: float = 200.5
    s_cap: float = 200.0
    t: int = 0
    log_prod: np.ndarray = field(default=None)  # type: ignore[assignment]
    loss_sums: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if min(self.p, self.q, self.r, self.s) <= 0:
            raise ValueError("p, q, r, s must be positive")
        if self.s >= self.r:
            raise ValueError(f"s must stay below r, got s={self.s}, r={self.r}")
        if self.s_cap >= self.r_cap:
            raise ValueError("s_cap must stay below r_cap")
        if self.log_prod is None:
            self.log_prod = np.zeros(self.m, dtype=np.float64)
        else:
            self.log_prod = np.asarray(self.log_prod, dtype=np.float64).copy()
        if self.loss_sums is None:
            self.loss_sums = np.zeros(self.m, dtype=np.float64)
        else:
            self.loss_sums = np.asarray(self.loss_sums, dtype=np.float64).copy()

    def update(self, g) -> None:
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.m,):
            raise ValueError(f"expected loss vector of length {self.m}, got {g.shape}")
        if np.any(g <= 0.0) or not np.all(np.isfinite(g)):
            raise ValueError("this variant requires strictly positive finite losses")
        self.log_prod += np.log(g)
        self.loss_sums += g
        self.t += 1

    def effective_exponents(self) -> tuple[float, float]:
        return min(self.r + self.t, self.r_cap), min(self.s + self.t, self.s_cap)

    def conditional_rate_mean(self, shapes) -> np.ndarray:
        """E[rate | shape]: mean of the analytic conditional Gamma."""
        _, s_eff = self.effective_exponents()
        return (np.asarray(shapes, dtype=np.float64) * s_eff + 1.0) / (self.q + self.loss_sums)

    def posterior_means(
        self, spec: QuadratureSpec = DEFAULT_QUADRATURE
    ) -> tuple[np.ndarray, np.ndarray]:
        """(E[shape], E[rate]) per weight; the rate mean averages the
        conditional Gamma mean over the shape marginal."""
        r_eff, s_eff = self.effective_exponents()
        rate_total = self.q + self.loss_sums
        tilt = np.log(self.p) + self.log_prod
        log_rate_total = np.log(rate_total)

        def log_density(alpha):
            if alpha.ndim == 2:
                t_col, lr_col = tilt[:, None], log_rate_total[:, None]
            else:
                t_col, lr_col = tilt, log_rate_total
            return (
                (alpha - 1.0) * t_col
                - r_eff * log_gamma(alpha)
                + log_gamma(alpha * s_eff + 1.0)
                - (alpha * s_eff + 1.0) * lr_col
            )

        def neg_dlog(alpha):
            # Negated derivative of log density; increasing by log-concavity.
            if alpha.ndim == 1:
                t_col, lr_col = tilt, log_rate_total
            else:
                t_col, lr_col = tilt[:, None], log_rate_total[:, None]
            return -(
                t_col
                - r_eff * digamma(alpha)
                + s_eff * digamma(alpha * s_eff + 1.0)
                - s_eff * lr_col
            )

        mode = _bisect_increasing(neg_dlog, np.zeros(self.m))
        curvature = r_eff * polygamma(1, mode) - s_eff**2 * polygamma(1, mode * s_eff + 1.0)
        sigma = 1.0 / np.sqrt(np.maximum(curvature, 1e-300))
        lo, hi, peak = _bracket(log_density, mode, sigma, spec.log_tail_drop)
        results = _refine(
            log_density,
            {
                "shape": lambda alpha: alpha,
                "rate": lambda alpha: (alpha * s_eff + 1.0) / rate_total[:, None],
            },
            lo,
            hi,
            peak,
            spec,
            "shape_rate",
        )
        return results["shape"], results["rate"]

    def snapshot(self) -> str:
        head = (
            f"shape_rate_posterior m={self.m} p={self.p!r} q={self.q!r} r={self.r!r} "
            f"s={self.s!r} r_cap={self.r_cap!r} s_cap={self.s_cap!r} t={self.t}\n"
        )
        return (
            head
            + "log_prod: " + " ".join(repr(float(v)) for v in self.log_prod) + "\n"
            + "loss_sums: " + " ".join(repr(float(v)) for v in self.loss_sums) + "\n"
        )

    @classmethod
    def from_snapshot(cls, text: str) -> "ShapeRatePosterior":
        lines = text.strip().splitlines()
        head = dict(part.split("=", 1) for part in lines[0].split()[1:])
        log_prod = np.array([float(v) for v in lines[1].split(":", 1)[1].split()])
        loss_sums = np.array([float(v) for v in lines[2].split(":", 1)[1].split()])
        return cls(
            m=int(head["m"]),
            p=float(head["p"]),
            q=float(head["q"]),
            r=float(head["r"]),
            s=float(head["s"]),
            r_cap=float(head["r_cap"]),
            s_cap=float(head["s_cap"]),
            t=int(head["t"]),
            log_prod=log_prod,
            loss_sums=loss_sums,
        )


# ---------------------------------------------------------------------------
# Prediction rules


def predict_weighted(weights, g_pos, g_neg) -> int:
    """+1 iff the weighted loss pretending +1 is no larger than pretending -1."""
    w = np.asarray(weights, dtype=np.float64)
    return 1 if float(w @ g_pos) <= float(w @ g_neg) else -1


def predict_shape(weights, g_pos, g_neg, theta: float) -> int:
    """Discriminant rule for shape-valued weights; needs positive losses."""
    w = np.asarray(weights, dtype=np.float64)
    g_pos = np.asarray(g_pos, dtype=np.float64)
    g_neg = np.asarray(g_neg, dtype=np.float64)
    if np.any(g_pos <= 0.0) or np.any(g_neg <= 0.0):
        raise ValueError("this rule requires strictly positive losses")
    disc = float(
        ((1.0 - w) * (np.log(g_pos) - np.log(g_neg))).sum()
        + theta * (g_pos - g_neg).sum()
    )
    return 1 if disc <= 0.0 else -1


def predict_shape_rate(shapes, rates, g_pos, g_neg) -> int:
    """Discriminant rule for (shape, rate) weight pairs; needs positive losses."""
    a = np.asarray(shapes, dtype=np.float64)
    b = np.asarray(rates, dtype=np.float64)
    g_pos = np.asarray(g_pos, dtype=np.float64)
    g_neg = np.asarray(g_neg, dtype=np.float64)
    if np.any(g_pos <= 0.0) or np.any(g_neg <= 0.0):
        raise ValueError("this rule requires strictly positive losses")
    disc = float(
        ((1.0 - a) * (np.log(g_pos) - np.log(g_neg))).sum()
        + (b * (g_pos - g_neg)).sum()
    )
    return 1 if disc <= 0.0 else -1
