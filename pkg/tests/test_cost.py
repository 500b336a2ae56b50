"""Timing logs, the cost regressor, and cost normalization."""

import numpy as np
import pytest

from ruleblock.errors import ConfigError
from ruleblock.planner.cost import (
    CostModel,
    TimingLog,
    estimate_cost,
    estimate_costs,
    predicate_features,
    sample_timings,
    train_cost_model,
)
from ruleblock.relation import Kind, Relation, Schema, TupleRecord
from ruleblock.rules import Predicate


def wordy_relation(n=40, seed=1) -> Relation:
    import random

    rng = random.Random(seed)
    schema = Schema(attributes=(("cat", Kind.CATEGORICAL), ("text", Kind.LONG_TEXT)))
    words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
    tuples = []
    for i in range(n):
        tuples.append(
            TupleRecord(
                tid=i,
                eid=None,
                values=(rng.choice("abc"), " ".join(rng.choices(words, k=rng.randint(10, 28)))),
            )
        )
    return Relation(schema=schema, tuples=tuple(tuples))


EQ_CAT = Predicate(lhs_attr="cat", comparator="eq", rhs_attr="cat")
JAC_TEXT = Predicate(lhs_attr="text", comparator="sim", rhs_attr="text", measure="jaccard", threshold=0.5)


class TestSampleTimings:
    def test_zero_samples_rejected(self):
        with pytest.raises(ConfigError):
            sample_timings(wordy_relation(), [EQ_CAT], n_samples=0)

    def test_empty_relation_rejected(self):
        schema = Schema(attributes=(("cat", Kind.CATEGORICAL),))
        with pytest.raises(ConfigError):
            sample_timings(Relation(schema=schema, tuples=()), [EQ_CAT], n_samples=5)

    def test_constant_time_predicate_low_variation(self):
        # Median over three sampling runs: a single host stall can put
        # one multi-millisecond outlier into a run of 6us samples.
        rel = wordy_relation()
        cvs = []
        for trial in range(3):
            log = sample_timings(rel, [EQ_CAT], n_samples=1000, rng_seed=trial)
            times = np.array(log.seconds)
            cvs.append(times.std() / times.mean())
        assert sorted(cvs)[1] < 1.0

    def test_jaccard_slower_than_categorical_eq(self):
        rel = wordy_relation()
        log = sample_timings(rel, [EQ_CAT, JAC_TEXT], n_samples=400, rng_seed=0)
        times = np.array(log.seconds)
        preds = log.predicates
        eq_mean = times[[i for i, p in enumerate(preds) if p == EQ_CAT]].mean()
        jac_mean = times[[i for i, p in enumerate(preds) if p == JAC_TEXT]].mean()
        assert jac_mean > eq_mean

    def test_log_shape(self):
        rel = wordy_relation(10)
        log = sample_timings(rel, [EQ_CAT, JAC_TEXT], n_samples=7)
        assert len(log) == 14
        assert log.feature_matrix().shape == (14, predicate_features(EQ_CAT, rel, 0, 0).size)


def synthetic_log(n=400, seed=0, noise=0.0) -> TimingLog:
    """Log whose target is exactly 2 * (len_t + len_s)."""
    import random

    rng = random.Random(seed)
    rel_schema = Schema(attributes=(("text", Kind.SHORT_TEXT),))
    tuples = []
    for i in range(80):
        tuples.append(TupleRecord(tid=i, eid=None, values=("x" * rng.randint(1, 60),)))
    rel = Relation(schema=rel_schema, tuples=tuple(tuples))
    p = Predicate(lhs_attr="text", comparator="sim", rhs_attr="text", measure="edit", threshold=0.5)
    log = TimingLog()
    for _ in range(n):
        a, b = rng.randrange(80), rng.randrange(80)
        feats = predicate_features(p, rel, a, b)
        target = 2.0 * (feats[-2] + feats[-1])
        if noise:
            target *= 1 + rng.uniform(-noise, noise)
        log.append(p, a, b, target, feats)
    return log


class TestTrainCostModel:
    def test_deterministic_given_seed(self):
        log = synthetic_log()
        m1 = train_cost_model(log, epochs=50, rng_seed=3)
        m2 = train_cost_model(log, epochs=50, rng_seed=3)
        for w1, w2 in zip(m1.weights, m2.weights):
            np.testing.assert_array_equal(w1, w2)

    def test_learns_linear_length_law(self):
        train = synthetic_log(n=500, seed=0)
        test = synthetic_log(n=200, seed=99)
        model = train_cost_model(train, epochs=600, lr=0.02, rng_seed=0)
        pred = model.predict(test.feature_matrix())
        want = test.targets()
        rel_err = np.abs(pred - want) / np.maximum(want, 1e-12)
        assert rel_err.mean() <= 0.20

    def test_single_sample_memorized(self):
        log = synthetic_log(n=1, seed=4)
        model = train_cost_model(log, epochs=300, rng_seed=0)
        pred = model.predict(log.feature_matrix())[0]
        assert pred == pytest.approx(log.targets()[0], rel=0.10)

    def test_empty_log_rejected(self):
        with pytest.raises(ConfigError):
            train_cost_model(TimingLog())

    def test_degenerate_log_still_trains(self):
        # Identical features, different targets: fit the mean, report MSE.
        log = TimingLog()
        rel = wordy_relation(4)
        feats = predicate_features(EQ_CAT, rel, 0, 1)
        log.append(EQ_CAT, 0, 1, 1.0, feats)
        log.append(EQ_CAT, 0, 1, 3.0, feats.copy())
        model = train_cost_model(log, epochs=200, rng_seed=0)
        assert np.isfinite(model.final_mse)

    def test_predictions_clamped_nonnegative(self):
        log = synthetic_log(n=200)
        model = train_cost_model(log, epochs=100, rng_seed=1)
        x = log.feature_matrix().copy()
        x[:, -2:] = -50.0  # absurd inputs
        assert (model.predict(x) >= 0).all()

    def test_architecture_matches_config(self):
        model = CostModel(np.random.default_rng(0), input_dim=15)
        sizes = [w.shape for w in model.weights]
        assert sizes == [(15, 2), (2, 6), (6, 1), (1, 1)]


class TestEstimateCosts:
    def test_costliest_predicate_normalizes_to_one(self):
        rel = wordy_relation()
        log = sample_timings(rel, [EQ_CAT, JAC_TEXT], n_samples=120, rng_seed=0)
        model = train_cost_model(log, epochs=150, rng_seed=0)
        costs = estimate_costs([EQ_CAT, JAC_TEXT], rel, model, n_pairs=400, rng_seed=0)
        assert max(costs.values()) == pytest.approx(1.0)
        assert costs[JAC_TEXT] == pytest.approx(1.0)
        assert 0 < costs[EQ_CAT] <= 1.0

    def test_singleton_universe_is_one(self):
        rel = wordy_relation()
        log = sample_timings(rel, [EQ_CAT], n_samples=60, rng_seed=0)
        model = train_cost_model(log, epochs=100, rng_seed=0)
        assert estimate_cost(EQ_CAT, rel, model, n_pairs=200) == pytest.approx(1.0)
