"""Prequential experiment runner and report generation.

The protocol per evaluation sample: predict with the current ensemble
weights, reveal the true label, compute the per-learner base losses, update
the weight estimator, and (only when the pool is not frozen) update the weak
learners.  Predictions therefore never see the current label.

Two pool modes:

* ``frozen_pool=True``: the dataset is split per trial, the pool is
  pretrained on the small split and held fixed, and the evaluation split is
  streamed in a per-trial random order.
* ``frozen_pool=False``: no split; untrained learners stream over the whole
  dataset and update online after each step.

When several methods are configured they form a compare run: every method
consumes the identical ordering and the identical pretrained pool (unfrozen
pools are copied per method so online updates stay independent).

Config files are flat ``key = value`` text; ``#`` starts a comment.  Keys
match ExperimentConfig field names; ``methods`` takes a comma-separated list.
CLI flags override file values.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import PolyakState, SagState, SgdState, voting_predict
from .data import Dataset, SplitPlan, load_dataset, ordering, split, to_dense_matrix
from .errors import BayensError, ConfigError
from .losses import BASE_LOSS_KINDS, loss_pair
from .posterior import (
    DEFAULT_QUADRATURE,
    GammaPosterior,
    ShapePosterior,
    ShapeRatePosterior,
    predict_shape,
    predict_shape_rate,
    predict_weighted,
)
from .weak import LEARNER_KINDS, WeakPool, build_pool

METHODS = (
    "single",
    "voting",
    "sgd",
    "sgd_avg",
    "sag",
    "bayes_basic",
    "bayes_shape",
    "bayes_shape_rate",
)

_SHAPE_METHODS = ("bayes_shape", "bayes_shape_rate")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    methods: tuple[str, ...] = ("bayes_basic",)
    learner_kind: str = "perceptron"
    base_loss: str = "ramp"
    shape_base_loss: str = "logistic"  # used by the Gamma-likelihood methods
    m: int = 100
    trials: int = 5
    seed: int = 0
    train_fraction: float = 0.1
    frozen_pool: bool = True
    binarize: bool = True
    subset_prob: float = 0.5
    learning_rate: float = 1.0
    variance_floor: float = 1e-9
    theta: float = 0.1
    prior_shape: float = 1.0
    prior_rate: float = 1.0
    gamma: float = 1.0
    sag_step_multiplier: float = 0.0625  # the classic 1/(16 L) theory step
    weight_floor: float = 1e-6
    loss_floor: float = 1e-12
    shape_a: float = 1.0
    shape_b: float = 1.0
    shape_c: float = 1.0
    shape_b_cap: float = 1000.0
    shape_c_cap: float = 1000.0
    sr_p: float = 1.0
    sr_q: float = 1.0
    sr_r: float = 1.5
    sr_s: float = 1.0
    sr_r_cap: float = 200.5
    sr_s_cap: float = 200.0

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("at least one method is required")
        for method in self.methods:
            if method not in METHODS:
                raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
        if self.learner_kind not in LEARNER_KINDS:
            raise ConfigError(f"unknown learner_kind {self.learner_kind!r}")
        for kind in (self.base_loss, self.shape_base_loss):
            if kind not in BASE_LOSS_KINDS:
                raise ConfigError(f"unknown base loss {kind!r}")
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.theta <= 0 or self.prior_shape <= 0 or self.prior_rate <= 0:
            raise ConfigError("theta, prior_shape, prior_rate must be positive")

    def loss_kind_for(self, method: str) -> str:
        return self.shape_base_loss if method in _SHAPE_METHODS else self.base_loss


def _coerce(name: str, raw: str, target_type):
    raw = raw.strip()
    if target_type is bool:
        lowered = raw.lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        raise ConfigError(f"config key {name}: expected a boolean, got {raw!r}")
    if target_type is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {name}: expected an integer, got {raw!r}") from None
    if target_type is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {name}: expected a number, got {raw!r}") from None
    if name == "methods":
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def config_from_mapping(mapping: dict[str, str]) -> ExperimentConfig:
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for key, raw in mapping.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        if not isinstance(raw, str):
            values[key] = raw
            continue
        annotation = fields[key].type
        if key == "methods":
            values[key] = _coerce(key, raw, tuple)
        elif annotation in ("int", int):
            values[key] = _coerce(key, raw, int)
        elif annotation in ("float", float):
            values[key] = _coerce(key, raw, float)
        elif annotation in ("bool", bool):
            values[key] = _coerce(key, raw, bool)
        else:
            values[key] = raw.strip()
    if "dataset" not in values:
        raise ConfigError("config requires a dataset path")
    config = ExperimentConfig(**values)
    config.validate()
    return config


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    mapping: dict[str, str] = {}
    for line_number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition("=")
        if not sep:
            raise ConfigError(f"config line {line_number}: expected 'key = value', got {text!r}")
        mapping[key.strip()] = value.strip()
    if overrides:
        mapping.update(overrides)
    return config_from_mapping(mapping)


# ---------------------------------------------------------------------------
# Trial records


@dataclass
class TrialRecord:
    """Prequential error trace of one (method, trial) run."""

    dataset: str
    method: str
    trial_index: int
    seed: int
    cumulative_errors: np.ndarray
    predictions: np.ndarray
    wall_time: float

    @property
    def steps(self) -> int:
        return len(self.cumulative_errors)

    @property
    def final_error_rate(self) -> float:
        return float(self.cumulative_errors[-1]) / self.steps

    def error_rates(self) -> np.ndarray:
        return self.cumulative_errors / np.arange(1, self.steps + 1, dtype=np.float64)

    def to_csv(self) -> str:
        """Deterministic CSV trace; volatile fields (wall time) are excluded."""
        lines = ["step,cumulative_errors,error_rate"]
        rates = self.error_rates()
        for i in range(self.steps):
            lines.append(f"{i + 1},{int(self.cumulative_errors[i])},{float(rates[i])!r}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Per-method weight state


class _Runner:
    """Weight state plus the prediction/update rules of one method."""

    def __init__(
        self,
        method: str,
        config: ExperimentConfig,
        m: int,
        horizon: int,
        train_mean_loss: float | None = None,
    ):
        self.method = method
        c = config
        if method == "sgd":
            self.state = SgdState(
                m, gamma=c.gamma, theta=c.theta,
                initial_weight=c.prior_shape / c.prior_rate, weight_floor=c.weight_floor,
            )
        elif method == "sgd_avg":
            self.state = PolyakState(
                SgdState(
                    m, gamma=c.gamma, theta=c.theta,
                    initial_weight=c.prior_shape / c.prior_rate, weight_floor=c.weight_floor,
                )
            )
        elif method == "sag":
            # Step multiplier/L_est, where L_est = theta^2 * (mean loss)^2 is
            # the objective curvature at the limit weight, estimated from a
            # pass over the pretraining split (1.0 when there is none) and
            # floored so a too-clean split cannot produce an absurd step.
            # The default multiplier is the 1/16 of classic step theory;
            # larger values often help and the knob is exposed for that.
            mean_loss = max(train_mean_loss if train_mean_loss is not None else 1.0, 0.1)
            step_size = c.sag_step_multiplier / (c.theta**2 * mean_loss**2)
            self.state = SagState(
                m, horizon=horizon, step_size=step_size, theta=c.theta,
                initial_weight=c.prior_shape / c.prior_rate, weight_floor=c.weight_floor,
            )
        elif method == "bayes_basic":
            self.state = GammaPosterior(
                m, prior_shape=c.prior_shape, prior_rate=c.prior_rate, theta=c.theta
            )
            self.weights = self.state.posterior_mean()
        elif method == "bayes_shape":
            self.state = ShapePosterior(
                m, theta=c.theta, a=c.shape_a, b=c.shape_b, c=c.shape_c,
                b_cap=c.shape_b_cap, c_cap=c.shape_c_cap,
            )
            self.weights = self.state.posterior_mean(DEFAULT_QUADRATURE)
        elif method == "bayes_shape_rate":
            self.state = ShapeRatePosterior(
                m, p=c.sr_p, q=c.sr_q, r=c.sr_r, s=c.sr_s,
                r_cap=c.sr_r_cap, s_cap=c.sr_s_cap,
            )
            self.shapes, self.rates = self.state.posterior_means(DEFAULT_QUADRATURE)
        self.theta = c.theta

    def predict(self, scores: np.ndarray, g_pos: np.ndarray, g_neg: np.ndarray) -> int:
        method = self.method
        if method == "single":
            return 1 if scores[0] >= 0.0 else -1
        if method == "voting":
            return voting_predict(scores)
        if method == "bayes_basic":
            return predict_weighted(self.weights, g_pos, g_neg)
        if method == "bayes_shape":
            return predict_shape(self.weights, g_pos, g_neg, self.theta)
        if method == "bayes_shape_rate":
            return predict_shape_rate(self.shapes, self.rates, g_pos, g_neg)
        return predict_weighted(self.state.weights, g_pos, g_neg)

    def update(self, g_true: np.ndarray, step_index: int) -> None:
        method = self.method
        if method in ("single", "voting"):
            return
        if method == "sag":
            self.state.step(g_true, step_index)
        elif method in ("sgd", "sgd_avg"):
            self.state.step(g_true)
        elif method == "bayes_basic":
            self.state.update(g_true)
            self.weights = self.state.posterior_mean()
        elif method == "bayes_shape":
            self.state.update(g_true)
            self.weights = self.state.posterior_mean(DEFAULT_QUADRATURE)
        elif method == "bayes_shape_rate":
            self.state.update(g_true)
            self.shapes, self.rates = self.state.posterior_means(DEFAULT_QUADRATURE)


# ---------------------------------------------------------------------------
# Trial execution


def _build_pools(
    config: ExperimentConfig, train: Dataset | None, dimension: int, trial_index: int
) -> dict[str, WeakPool]:
    pools: dict[str, WeakPool] = {}
    if any(method != "single" for method in config.methods):
        pools["ensemble"] = build_pool(
            train,
            config.m,
            config.learner_kind,
            config.seed,
            trial=trial_index,
            dimension=dimension,
            include_prob=config.subset_prob,
            frozen=config.frozen_pool,
            learning_rate=config.learning_rate,
            variance_floor=config.variance_floor,
        )
    if "single" in config.methods:
        pools["single"] = build_pool(
            train,
            1,
            config.learner_kind,
            config.seed,
            trial=trial_index,
            dimension=dimension,
            all_features=True,
            frozen=config.frozen_pool,
            learning_rate=config.learning_rate,
            variance_floor=config.variance_floor,
        )
    return pools


def _pool_key(method: str) -> str:
    return "single" if method == "single" else "ensemble"


def run_trial(
    config: ExperimentConfig, trial_index: int, dataset: Dataset | None = None
) -> dict[str, TrialRecord]:
    """Run every configured method over one trial's stream.

    Returns one TrialRecord per method, all sharing the trial's ordering and
    initial pool.  Deterministic given (config, trial_index).
    """
    config.validate()
    if dataset is None:
        dataset = load_dataset(config.dataset)

    if config.frozen_pool:
        plan = SplitPlan(config.train_fraction, config.seed, config.trials)
        train, eval_set = split(dataset, plan, trial_index)
    else:
        train, eval_set = None, dataset
    if len(eval_set) == 0:
        raise ConfigError("evaluation sequence is empty")

    order = ordering(eval_set, config.seed, trial_index)
    x_eval = to_dense_matrix(eval_set.samples, dataset.dimension)[order]
    y_eval = eval_set.labels[order]

    pools = _build_pools(config, train, dataset.dimension, trial_index)

    train_mean_loss = None
    if "sag" in config.methods and train is not None and len(train) > 0:
        pool = pools[_pool_key("sag")]
        x_train = to_dense_matrix(train.samples, dataset.dimension)
        g_pos, g_neg = loss_pair(
            pool.scores_matrix(x_train),
            config.loss_kind_for("sag"),
            binarize_scores=config.binarize,
        )
        g_true = np.where((train.labels > 0)[:, None], g_pos, g_neg)
        train_mean_loss = float(g_true.mean())

    records: dict[str, TrialRecord] = {}
    for method in config.methods:
        pool = pools[_pool_key(method)]
        started = time.perf_counter()
        if config.frozen_pool:
            record = _run_frozen(
                config, method, pool, x_eval, y_eval, trial_index, train_mean_loss
            )
        else:
            record = _run_online(
                config, method, pool.copy(), x_eval, y_eval, trial_index, train_mean_loss
            )
        record.wall_time = time.perf_counter() - started
        records[method] = record
    return records


def _finish_record(
    config: ExperimentConfig,
    method: str,
    trial_index: int,
    dataset_name: str,
    errors: np.ndarray,
    predictions: np.ndarray,
) -> TrialRecord:
    return TrialRecord(
        dataset=dataset_name,
        method=method,
        trial_index=trial_index,
        seed=config.seed,
        cumulative_errors=np.cumsum(errors, dtype=np.int64),
        predictions=predictions,
        wall_time=0.0,
    )


def _run_frozen(
    config: ExperimentConfig,
    method: str,
    pool: WeakPool,
    x_eval: np.ndarray,
    y_eval: np.ndarray,
    trial_index: int,
    train_mean_loss: float | None = None,
) -> TrialRecord:
    kind = config.loss_kind_for(method)
    scores = pool.scores_matrix(x_eval)
    floor = config.loss_floor if method in _SHAPE_METHODS else None
    g_pos_all, g_neg_all = loss_pair(
        scores, kind, binarize_scores=config.binarize, floor=floor
    )
    horizon = len(y_eval)
    runner = _Runner(method, config, pool.m, horizon, train_mean_loss)
    errors = np.zeros(horizon, dtype=np.int64)
    predictions = np.zeros(horizon, dtype=np.int8)
    for t in range(horizon):
        try:
            predicted = runner.predict(scores[t], g_pos_all[t], g_neg_all[t])
            predictions[t] = predicted
            errors[t] = int(predicted != y_eval[t])
            g_true = g_pos_all[t] if y_eval[t] > 0 else g_neg_all[t]
            runner.update(g_true, t)
        except BayensError:
            raise
        except Exception as exc:  # attach the stream position to module errors
            raise BayensError(f"{method} failed at step {t + 1}: {exc}") from exc
    return _finish_record(config, method, trial_index, Path(config.dataset).stem, errors, predictions)


def _run_online(
    config: ExperimentConfig,
    method: str,
    pool: WeakPool,
    x_eval: np.ndarray,
    y_eval: np.ndarray,
    trial_index: int,
    train_mean_loss: float | None = None,
) -> TrialRecord:
    kind = config.loss_kind_for(method)
    floor = config.loss_floor if method in _SHAPE_METHODS else None
    horizon = len(y_eval)
    runner = _Runner(method, config, pool.m, horizon, train_mean_loss)
    errors = np.zeros(horizon, dtype=np.int64)
    predictions = np.zeros(horizon, dtype=np.int8)
    for t in range(horizon):
        try:
            x = x_eval[t]
            label = int(y_eval[t])
            scores = pool.scores(x)
            g_pos, g_neg = loss_pair(
                scores, kind, binarize_scores=config.binarize, floor=floor
            )
            predicted = runner.predict(scores, g_pos, g_neg)
            predictions[t] = predicted
            errors[t] = int(predicted != label)
            runner.update(g_pos if label > 0 else g_neg, t)
            pool.update(x, label)
        except BayensError:
            raise
        except Exception as exc:
            raise BayensError(f"{method} failed at step {t + 1}: {exc}") from exc
    return _finish_record(config, method, trial_index, Path(config.dataset).stem, errors, predictions)


# ---------------------------------------------------------------------------
# Experiments and reports


@dataclass
class ExperimentSummary:
    config: ExperimentConfig
    dataset_name: str
    records: dict[str, list[TrialRecord]] = field(default_factory=dict)

    def trial_errors(self, method: str) -> list[float]:
        return [r.final_error_rate for r in self.records[method]]

    def mean_error(self, method: str) -> float:
        errors = self.trial_errors(method)
        return sum(errors) / len(errors)


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> ExperimentSummary:
    """Average the prequential error over the configured number of trials."""
    config.validate()
    if dataset is None:
        dataset = load_dataset(config.dataset)
    summary = ExperimentSummary(config=config, dataset_name=Path(config.dataset).stem)
    summary.records = {method: [] for method in config.methods}
    for trial_index in range(config.trials):
        try:
            trial_records = run_trial(config, trial_index, dataset)
        except BayensError as exc:
            raise BayensError(
                f"trial {trial_index} failed ({exc}); "
                f"{sum(len(v) for v in summary.records.values())} partial records kept"
            ) from exc
        for method, record in trial_records.items():
            summary.records[method].append(record)
    return summary


def record_filename(record: TrialRecord) -> str:
    return f"{record.dataset}__{record.method}__trial{record.trial_index}.csv"


def write_records(summary: ExperimentSummary, out_dir: str | Path) -> list[Path]:
    """Write per-trial curve CSVs plus a summary.csv of final error rates."""
    out_dir = Path(out_dir)
    records_dir = out_dir / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    written = []
    summary_lines = ["dataset,method,trial,steps,errors,error_rate"]
    for method in summary.config.methods:
        for record in summary.records[method]:
            path = records_dir / record_filename(record)
            path.write_text(record.to_csv(), encoding="utf-8")
            written.append(path)
            summary_lines.append(
                f"{record.dataset},{record.method},{record.trial_index},"
                f"{record.steps},{int(record.cumulative_errors[-1])},{record.final_error_rate!r}"
            )
    summary_path = out_dir / "summary.csv"
    summary_path.write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    written.append(summary_path)
    return written


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    method: str
    trial: int
    steps: int
    errors: int
    error_rate: float


def load_summary_rows(in_dir: str | Path) -> list[SummaryRow]:
    path = Path(in_dir) / "summary.csv"
    if not path.exists():
        raise ConfigError(f"no summary.csv under {in_dir}")
    rows = []
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    for line in lines[1:]:
        dataset, method, trial, steps, errors, rate = line.split(",")
        rows.append(
            SummaryRow(dataset, method, int(trial), int(steps), int(errors), float(rate))
        )
    return rows


def make_table(rows: list[SummaryRow], fmt: str = "csv") -> str:
    """Dataset x method table of mean error rates over trials."""
    datasets = sorted({r.dataset for r in rows})
    methods = [m for m in METHODS if any(r.method == m for r in rows)]
    means: dict[tuple[str, str], float] = {}
    for ds in datasets:
        for method in methods:
            cell = [r.error_rate for r in rows if r.dataset == ds and r.method == method]
            if cell:
                means[(ds, method)] = sum(cell) / len(cell)
    if fmt == "csv":
        lines = ["dataset," + ",".join(methods)]
        for ds in datasets:
            cells = [
                repr(means[(ds, m)]) if (ds, m) in means else "" for m in methods
            ]
            lines.append(ds + "," + ",".join(cells))
        return "\n".join(lines) + "\n"
    if fmt == "md":
        header = "| dataset | " + " | ".join(methods) + " |"
        rule = "|---" * (len(methods) + 1) + "|"
        lines = [header, rule]
        for ds in datasets:
            cells = [
                f"{means[(ds, m)]:.4f}" if (ds, m) in means else "" for m in methods
            ]
            lines.append("| " + ds + " | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown report format {fmt!r}")


def write_report(in_dir: str | Path, fmt: str = "csv", out_dir: str | Path | None = None) -> Path:
    """Build the error table and mean curves from a run directory."""
    in_dir = Path(in_dir)
    out_dir = Path(out_dir) if out_dir is not None else in_dir
    rows = load_summary_rows(in_dir)
    table_path = out_dir / f"table.{fmt}"
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path.write_text(make_table(rows, fmt), encoding="utf-8")

    curves_dir = out_dir / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple[str, str], list[SummaryRow]] = {}
    for row in rows:
        groups.setdefault((row.dataset, row.method), []).append(row)
    for (ds, method), group in sorted(groups.items()):
        traces = []
        for row in sorted(group, key=lambda r: r.trial):
            record_path = in_dir / "records" / f"{ds}__{method}__trial{row.trial}.csv"
            lines = record_path.read_text(encoding="utf-8").strip().splitlines()[1:]
            traces.append(np.array([float(line.split(",")[2]) for line in lines]))
        mean_curve = np.mean(traces, axis=0)
        out_lines = ["step,error_rate"]
        out_lines.extend(f"{i + 1},{float(v)!r}" for i, v in enumerate(mean_curve))
        (curves_dir / f"{ds}__{method}__mean.csv").write_text(
            "\n".join(out_lines) + "\n", encoding="utf-8"
        )
    return table_path
