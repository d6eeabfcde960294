"""Dataset parsing, splits, and orderings."""

import numpy as np
import pytest

from bayens.data import (
    Dataset,
    SplitPlan,
    ordering,
    parse_libsvm,
    serialize_libsvm,
    split,
    to_dense_matrix,
)
from bayens.errors import ConfigError, EmptyDatasetError, ParseError

from conftest import make_synthetic_text


class TestParse:
    def test_basic_record(self):
        ds = parse_libsvm("+1 1:0.5 3:-2\n")
        sample = ds.samples[0]
        assert sample.label == 1
        assert sample.features == {1: 0.5, 3: -2.0}
        assert sample.max_index == 3

    def test_dimension_is_global_max(self):
        ds = parse_libsvm("-1 2:1\n+1 5:1\n")
        assert ds.dimension == 5

    def test_malformed_value_names_line(self):
        with pytest.raises(ParseError) as err:
            parse_libsvm("+1 3:a\n")
        assert err.value.line_number == 1

    def test_malformed_second_line(self):
        with pytest.raises(ParseError) as err:
            parse_libsvm("+1 1:1\n-1 2:x\n")
        assert err.value.line_number == 2

    @pytest.mark.parametrize(
        "token,expected",
        [("+1", 1), ("1", 1), ("-1", -1), ("0", -1), ("2", -1)],
    )
    def test_label_conventions(self, token, expected):
        ds = parse_libsvm(f"{token} 1:1\n")
        assert ds.samples[0].label == expected

    def test_unknown_label_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm("3 1:1\n")

    def test_duplicate_index_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm("+1 2:1 2:3\n")

    def test_non_increasing_index_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm("+1 3:1 2:1\n")

    def test_zero_index_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm("+1 0:1\n")

    def test_non_finite_value_rejected(self):
        with pytest.raises(ParseError):
            parse_libsvm("+1 1:inf\n")

    def test_empty_input(self):
        with pytest.raises(EmptyDatasetError):
            parse_libsvm("")

    def test_comments_and_blank_lines(self):
        ds = parse_libsvm("# header\n\n+1 1:1 # trailing\n")
        assert len(ds) == 1
        assert ds.samples[0].features == {1: 1.0}

    def test_featureless_record(self):
        ds = parse_libsvm("+1 1:1\n-1\n")
        assert ds.samples[1].features == {}

    def test_round_trip(self):
        text = make_synthetic_text(n=50, d=7, seed=3, sparsity=0.4)
        first = parse_libsvm(text, name="x")
        second = parse_libsvm(serialize_libsvm(first), name="x")
        assert first == second

    def test_dense_matrix(self):
        ds = parse_libsvm("+1 1:2 3:4\n-1 2:1\n")
        x = to_dense_matrix(ds.samples, ds.dimension)
        np.testing.assert_array_equal(x, [[2, 0, 4], [0, 1, 0]])


class TestSplit:
    def setup_method(self):
        self.dataset = parse_libsvm(make_synthetic_text(n=100, d=5, seed=1), name="s")

    def test_sizes(self):
        plan = SplitPlan(0.1, seed=4, trial_count=2)
        train, ev = split(self.dataset, plan, 0)
        assert len(train) == 10 and len(ev) == 90

    def test_deterministic(self):
        plan = SplitPlan(0.1, seed=4, trial_count=2)
        assert split(self.dataset, plan, 1) == split(self.dataset, plan, 1)

    def test_trials_differ(self):
        plan = SplitPlan(0.1, seed=4, trial_count=2)
        first, _ = split(self.dataset, plan, 0)
        second, _ = split(self.dataset, plan, 1)
        assert first != second

    def test_partition(self):
        plan = SplitPlan(0.1, seed=9, trial_count=1)
        train, ev = split(self.dataset, plan, 0)
        combined = sorted(
            (s.label, s.indices, s.values) for s in train.samples + ev.samples
        )
        original = sorted((s.label, s.indices, s.values) for s in self.dataset.samples)
        assert combined == original

    def test_empty_train_rejected(self):
        small = Dataset("t", self.dataset.samples[:5], self.dataset.dimension)
        with pytest.raises(ConfigError):
            split(small, SplitPlan(0.1, seed=0), 0)

    def test_trial_index_bounds(self):
        with pytest.raises(ConfigError):
            split(self.dataset, SplitPlan(0.1, seed=0, trial_count=2), 2)

    def test_fraction_cap(self):
        with pytest.raises(ConfigError):
            SplitPlan(0.2, seed=0)
        with pytest.raises(ConfigError):
            SplitPlan(0.0, seed=0)


class TestOrdering:
    def setup_method(self):
        self.dataset = parse_libsvm(make_synthetic_text(n=64, d=4, seed=2), name="o")

    def test_singleton(self):
        one = Dataset("one", self.dataset.samples[:1], self.dataset.dimension)
        np.testing.assert_array_equal(ordering(one, seed=0, trial_index=0), [0])

    def test_bijective(self):
        perm = ordering(self.dataset, seed=5, trial_index=3)
        np.testing.assert_array_equal(np.sort(perm), np.arange(64))

    def test_reproducible(self):
        a = ordering(self.dataset, seed=5, trial_index=3)
        b = ordering(self.dataset, seed=5, trial_index=3)
        assert a.tobytes() == b.tobytes()

    def test_trials_differ(self):
        a = ordering(self.dataset, seed=5, trial_index=0)
        b = ordering(self.dataset, seed=5, trial_index=1)
        assert not np.array_equal(a, b)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            ordering(Dataset("e", (), 1), seed=0, trial_index=0)
