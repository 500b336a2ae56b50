"""Per-predicate evaluation-cost estimation.

Summing measured wall time over every tuple pair is exact but
quadratic, so a small feed-forward regressor learns per-pair check time
from cheap features (comparator, attribute kinds, value lengths) and the
plan generator sums its predictions over a pair sample instead,
extrapolating linearly to the full pair count.  Costs are then
normalized so the most expensive predicate in the universe gets 1.0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ruleblock.errors import ConfigError
from ruleblock.measures import MeasureRegistry, eval_predicate
from ruleblock.relation import Kind, Relation, is_missing
from ruleblock.rules import Predicate

_COMPARATOR_SLOTS = ("eq", "sim:edit", "sim:jaccard", "sim:exact_token", "sim:other")
_KINDS = (Kind.CATEGORICAL, Kind.NUMERIC, Kind.SHORT_TEXT, Kind.LONG_TEXT)

FEATURE_DIM = len(_COMPARATOR_SLOTS) + 2 * len(_KINDS) + 2


def _comparator_slot(p: Predicate) -> int:
    if p.comparator == "eq":
        return 0
    name = f"sim:{p.measure}"
    return _COMPARATOR_SLOTS.index(name) if name in _COMPARATOR_SLOTS else len(_COMPARATOR_SLOTS) - 1


def _value_len(value) -> float:
    if is_missing(value):
        return 0.0
    if isinstance(value, float):
        return float(len(repr(value)))
    return float(len(value))


def predicate_features(p: Predicate, relation: Relation, t_tid: int, s_tid: int) -> np.ndarray:
    """Encode (predicate, pair): comparator one-hot, both sides' attribute
    kind one-hots, both sides' value lengths."""
    schema = relation.schema
    x = np.zeros(FEATURE_DIM, dtype=np.float64)
    x[_comparator_slot(p)] = 1.0
    base = len(_COMPARATOR_SLOTS)
    lhs_kind = schema.kind_of(p.lhs_attr)
    x[base + _KINDS.index(lhs_kind)] = 1.0
    rhs_attr = p.rhs_attr if p.rhs_attr is not None else p.lhs_attr
    rhs_kind = schema.kind_of(rhs_attr)
    x[base + len(_KINDS) + _KINDS.index(rhs_kind)] = 1.0
    lhs_idx = schema.index_of(p.lhs_attr)
    rhs_idx = schema.index_of(rhs_attr)
    x[-2] = _value_len(relation.tuples[t_tid].values[lhs_idx])
    x[-1] = _value_len(relation.tuples[s_tid].values[rhs_idx])
    return x


@dataclass
class TimingLog:
    """Measured per-pair check times, with features cached for training."""

    predicates: list[Predicate] = field(default_factory=list)
    t_tids: list[int] = field(default_factory=list)
    s_tids: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    features: list[np.ndarray] = field(default_factory=list)

    def append(self, p: Predicate, t_tid: int, s_tid: int, measured: float, feats: np.ndarray) -> None:
        if measured < 0:
            raise ConfigError("measured time must be >= 0")
        self.predicates.append(p)
        self.t_tids.append(t_tid)
        self.s_tids.append(s_tid)
        self.seconds.append(measured)
        self.features.append(feats)

    def __len__(self) -> int:
        return len(self.seconds)

    def feature_matrix(self) -> np.ndarray:
        return np.vstack(self.features)

    def targets(self) -> np.ndarray:
        return np.asarray(self.seconds, dtype=np.float64)


def sample_timings(
    relation: Relation,
    preds: Sequence[Predicate],
    n_samples: int,
    rng_seed: int = 0,
    reg: Optional[MeasureRegistry] = None,
) -> TimingLog:
    """Evaluate each predicate on n_samples uniformly sampled pairs,
    recording wall time per check."""
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    if len(relation) == 0:
        raise ConfigError("cannot sample timings from an empty relation")
    from ruleblock.measures import default_registry

    reg = reg or default_registry()
    rng = np.random.default_rng(rng_seed)
    log = TimingLog()
    n = len(relation)
    for p in preds:
        t_ids = rng.integers(0, n, size=n_samples)
        s_ids = rng.integers(0, n, size=n_samples)
        # One untimed evaluation first, so one-off costs (kernel JIT,
        # cold caches) don't land in the first sample.
        eval_predicate(p, relation.tuples[int(t_ids[0])], relation.tuples[int(s_ids[0])], reg, relation.schema)
        for t_tid, s_tid in zip(t_ids, s_ids):
            t = relation.tuples[int(t_tid)]
            s = relation.tuples[int(s_tid)]
            start = time.perf_counter()
            eval_predicate(p, t, s, reg, relation.schema)
            elapsed = time.perf_counter() - start
            log.append(p, int(t_tid), int(s_tid), elapsed, predicate_features(p, relation, int(t_tid), int(s_tid)))
    return log


_LOG_EPS = 1e-9  # one nanosecond; measured times are never negative


class CostModel:
    """Small feed-forward regressor (hidden sizes 2, 6, 1; ReLU) trained
    with MSE on standardized features.  Targets are fitted in log space:
    timing noise is multiplicative and raw outliers would otherwise
    dominate the loss.  Predictions are clamped at zero."""

    HIDDEN = (2, 6, 1)

    def __init__(self, rng: np.random.Generator, input_dim: int = FEATURE_DIM):
        dims = [input_dim, *self.HIDDEN, 1]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, limit, size=(fan_in, fan_out)))
            self.biases.append(np.full(fan_out, 0.1))
        self.x_mean = np.zeros(input_dim)
        self.x_std = np.ones(input_dim)
        self.y_mean = 0.0
        self.y_std = 1.0
        self.final_mse = float("nan")

    def _forward(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts, h

    def predict(self, features: np.ndarray) -> np.ndarray:
        x = (np.atleast_2d(features) - self.x_mean) / self.x_std
        _, out = self._forward(x)
        y = np.exp(out.ravel() * self.y_std + self.y_mean) - _LOG_EPS
        return np.maximum(y, 0.0)


def train_cost_model(
    log: TimingLog,
    epochs: int = 400,
    lr: float = 0.01,
    rng_seed: int = 0,
    restarts: int = 3,
) -> CostModel:
    """Fit the regressor on a timing log; deterministic given the seed.

    Seeded restarts guard against a dead bottleneck unit (the 2- and
    1-wide layers can zero out under an unlucky init); the restart with
    the lowest training MSE wins, and extra restarts kick in while the
    fit stays no better than predicting the mean.
    """
    if len(log) == 0:
        raise ConfigError("cannot train on an empty timing log")
    x_raw = log.feature_matrix()
    y_raw = log.targets()

    best: Optional[CostModel] = None
    max_restarts = max(1, restarts) + 9
    for r in range(max_restarts):
        model = _train_once(x_raw, y_raw, epochs, lr, rng_seed + 1000 * r)
        if best is None or model.final_mse < best.final_mse:
            best = model
        # Keep restarting while the fit is no better than mediocre: the
        # narrow layers leave length-only local optima around 0.2-0.5.
        if r + 1 >= max(1, restarts) and best.final_mse < 0.12:
            break
    assert best is not None
    return best


def _train_once(x_raw: np.ndarray, y_raw: np.ndarray, epochs: int, lr: float, rng_seed: int) -> CostModel:
    rng = np.random.default_rng(rng_seed)
    model = CostModel(rng, input_dim=x_raw.shape[1])
    model.x_mean = x_raw.mean(axis=0)
    model.x_std = np.where(x_raw.std(axis=0) > 1e-12, x_raw.std(axis=0), 1.0)

    y_log = np.log(np.maximum(y_raw, 0.0) + _LOG_EPS)
    model.y_mean = float(y_log.mean())
    model.y_std = float(y_log.std()) if y_log.std() > 1e-15 else 1.0

    x = (x_raw - model.x_mean) / model.x_std
    y = (y_log - model.y_mean) / model.y_std

    # Adam on full batches: logs are small and this stays deterministic.
    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    n = len(y)
    step = 0
    for _ in range(epochs):
        step += 1
        acts, out = model._forward(x)
        err = out.ravel() - y
        grad_out = (2.0 / n) * err.reshape(-1, 1)

        grads_w = []
        grads_b = []
        delta = grad_out
        last = len(model.weights) - 1
        for i in range(last, -1, -1):
            a_prev = acts[i]
            grads_w.append(a_prev.T @ delta)
            grads_b.append(delta.sum(axis=0))
            if i > 0:
                delta = delta @ model.weights[i].T
                delta = delta * (acts[i] > 0)
        grads_w.reverse()
        grads_b.reverse()

        for i in range(len(model.weights)):
            m_w[i] = beta1 * m_w[i] + (1 - beta1) * grads_w[i]
            v_w[i] = beta2 * v_w[i] + (1 - beta2) * grads_w[i] ** 2
            m_hat = m_w[i] / (1 - beta1**step)
            v_hat = v_w[i] / (1 - beta2**step)
            model.weights[i] -= lr * m_hat / (np.sqrt(v_hat) + eps)

            m_b[i] = beta1 * m_b[i] + (1 - beta1) * grads_b[i]
            v_b[i] = beta2 * v_b[i] + (1 - beta2) * grads_b[i] ** 2
            mb_hat = m_b[i] / (1 - beta1**step)
            vb_hat = v_b[i] / (1 - beta2**step)
            model.biases[i] -= lr * mb_hat / (np.sqrt(vb_hat) + eps)

    _, out = model._forward(x)
    model.final_mse = float(np.mean((out.ravel() - y) ** 2))
    return model


def estimate_costs(
    universe: Sequence[Predicate],
    relation: Relation,
    model: CostModel,
    n_pairs: int = 10_000,
    rng_seed: int = 0,
) -> dict[Predicate, float]:
    """Normalized cost per predicate: predicted per-pair times summed
    over a shared pair sample, extrapolated to |D|^2 pairs, then divided
    by the maximum so the costliest predicate gets exactly 1.0."""
    if not universe:
        return {}
    n = len(relation)
    rng = np.random.default_rng(rng_seed)
    count = min(n_pairs, n * n)
    t_ids = rng.integers(0, n, size=count)
    s_ids = rng.integers(0, n, size=count)
    raw: dict[Predicate, float] = {}
    for p in universe:
        feats = np.vstack([predicate_features(p, relation, int(t), int(s)) for t, s in zip(t_ids, s_ids)])
        per_pair = model.predict(feats)
        raw[p] = float(per_pair.sum()) * (n * n / count)
    max_cost = max(raw.values())
    if max_cost <= 0:
        # Degenerate model output; fall back to uniform costs.
        return {p: 1.0 for p in universe}
    return {p: max(raw[p] / max_cost, 1e-9) for p in universe}


def estimate_cost(
    p: Predicate,
    relation: Relation,
    model: CostModel,
    n_pairs: int = 10_000,
    rng_seed: int = 0,
    universe: Optional[Sequence[Predicate]] = None,
) -> float:
    """Normalized cost of one predicate within its universe (defaults to
    the singleton universe, whose only member costs 1.0)."""
    uni = list(universe) if universe is not None else [p]
    if p not in uni:
        uni.append(p)
    return estimate_costs(uni, relation, model, n_pairs=n_pairs, rng_seed=rng_seed)[p]
