"""Online discriminative ranker for next-activated-node prediction.

Score of node i at time t:

    sco_i(t) = h(g_i; phi) + bias_i
               + sum_{events e, t_e < t} theta . f_{s_e -> i} k_w(t - t_e)

where g_i is the node's (finetunable) spectral embedding pushed through a
one-hidden-layer feedforward net h, and f are binary dyadic features
(self-excitation, social exposure along network edges, covariate matches)
scaled by the exponential kernel and accumulated over the whole history.

Training minimizes the WARP loss through the WSABIE sampled
approximation: at each event, inactive nodes are sampled uniformly
without replacement until one violates the unit margin; the rank of the
true node is approximated from the number of trials, and a single SGD
step is taken on every parameter group. The "one-best" rank error
L(k) = 1[k > 1] is used throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .exceptions import DataValidationError
from .hawkes import Cascade
from .netgraph import Embedding, Network
from .seeding import seed_stream

DEFAULT_HIDDEN = 16
DEFAULT_LEARNING_RATE = 0.05

# sub-stream ids of the schedule seed
_STREAM_INIT = 0
_STREAM_JITTER = 1
_STREAM_SAMPLING = 2

CHECKPOINT_FORMAT = "ranker-ckpt-v1"


@dataclass(frozen=True)
class FeatureConfig:
    """Feature switches. The m0/m1 pair of the influence test differs only
    in use_social."""

    use_social: bool = True
    use_self: bool = True
    covariate_match_attrs: tuple = ()
    use_per_node_bias: bool = False
    omega: float = 1.0

    def __post_init__(self):
        if self.omega <= 0:
            raise DataValidationError("kernel bandwidth omega must be > 0")
        object.__setattr__(
            self, "covariate_match_attrs", tuple(self.covariate_match_attrs)
        )

    @property
    def channels(self) -> tuple:
        names = []
        if self.use_self:
            names.append("self")
        if self.use_social:
            names.append("social")
        names.extend(f"match:{a}" for a in self.covariate_match_attrs)
        return tuple(names)


@dataclass(eq=False)
class RankerModel:
    """Mutable parameter bundle: finetunable embeddings, MLP weights,
    dyadic feature weights theta (one per configured channel), optional
    per-node bias."""

    embeddings: np.ndarray  # (M, K)
    w1: np.ndarray  # (H, K)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: float
    theta: np.ndarray  # (n_channels,)
    node_bias: Optional[np.ndarray]  # (M,) or None
    omega: float
    train_seed: Optional[int] = None

    def clone(self) -> "RankerModel":
        return RankerModel(
            embeddings=self.embeddings.copy(),
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=float(self.b2),
            theta=self.theta.copy(),
            node_bias=None if self.node_bias is None else self.node_bias.copy(),
            omega=self.omega,
            train_seed=self.train_seed,
        )

    @property
    def node_count(self) -> int:
        return self.embeddings.shape[0]


def init_model(
    embedding: Embedding,
    cfg: FeatureConfig,
    seed: int,
    hidden: int = DEFAULT_HIDDEN,
) -> RankerModel:
    """Fresh model: embeddings copied from the spectral embedding, MLP
    weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), theta and bias zero.
    Deterministic per seed."""
    rng = seed_stream(seed, _STREAM_INIT)
    m, k = embedding.vectors.shape
    bound1 = 1.0 / np.sqrt(k)
    bound2 = 1.0 / np.sqrt(hidden)
    return RankerModel(
        embeddings=embedding.vectors.copy(),
        w1=rng.uniform(-bound1, bound1, size=(hidden, k)),
        b1=rng.uniform(-bound1, bound1, size=hidden),
        w2=rng.uniform(-bound2, bound2, size=hidden),
        b2=float(rng.uniform(-bound2, bound2)),
        theta=np.zeros(len(cfg.channels)),
        node_bias=np.zeros(m) if cfg.use_per_node_bias else None,
        omega=cfg.omega,
    )


def mlp_forward(model: RankerModel, rows: Optional[np.ndarray] = None) -> np.ndarray:
    """h(g; phi) for all nodes (or the given rows): w2 . tanh(W1 g + b1) + b2."""
    g = model.embeddings if rows is None else model.embeddings[rows]
    return np.tanh(g @ model.w1.T + model.b1) @ model.w2 + model.b2


class ScoreState:
    """Decayed per-node dyadic feature accumulators over the history.

    One (M,) vector per channel; advancing to a later time decays all of
    them by exp(-omega * dt), recording an event applies its unit bumps
    scaled by k_w(0) = omega. All reads at a time t must happen before
    events at t are recorded (strict t_e < t semantics).
    """

    def __init__(self, cfg: FeatureConfig, net: Network):
        self.cfg = cfg
        self.net = net
        self.omega = cfg.omega
        self.time = 0.0
        m = net.node_count
        self.values = {name: np.zeros(m) for name in cfg.channels}
        self._match_groups = {}
        for attr in cfg.covariate_match_attrs:
            if attr not in net.covariates:
                raise DataValidationError(f"network has no covariate {attr!r}")
            groups = {}
            for node, value in enumerate(net.covariates[attr]):
                if value is not None:
                    groups.setdefault(value, []).append(node)
            self._match_groups[attr] = {
                v: np.asarray(nodes, dtype=np.int64) for v, nodes in groups.items()
            }

    def advance_to(self, t: float) -> None:
        if t < self.time:
            raise DataValidationError("non-causal query: time moves backwards")
        if t > self.time:
            decay = np.exp(-self.omega * (t - self.time))
            for arr in self.values.values():
                arr *= decay
            self.time = t

    def record(self, source: int) -> None:
        w = self.omega
        if "self" in self.values:
            self.values["self"][source] += w
        if "social" in self.values:
            nbrs = self.net.out_neighbors[source]
            if nbrs.size:
                self.values["social"][nbrs] += w
        for attr in self.cfg.covariate_match_attrs:
            value = self.net.covariates[attr][source]
            if value is None:
                continue
            group = self._match_groups[attr].get(value)
            if group is not None:
                arr = self.values[f"match:{attr}"]
                arr[group] += w
                arr[source] -= w  # matches exclude the source itself

    def replay(self, times: np.ndarray, sources: np.ndarray) -> None:
        for t, s in zip(times, sources):
            self.advance_to(float(t))
            self.record(int(s))


def score_all(
    model: RankerModel,
    state: ScoreState,
    h_all: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Scores of every node at the state's current time."""
    scores = mlp_forward(model) if h_all is None else h_all.copy()
    if model.node_bias is not None:
        scores = scores + model.node_bias
    for idx, name in enumerate(state.cfg.channels):
        scores = scores + model.theta[idx] * state.values[name]
    return scores


def score(
    model: RankerModel,
    cfg: FeatureConfig,
    net: Network,
    history: Cascade,
    t: float,
    i: int,
) -> float:
    """sco_i(t) given an explicit history; all history times must be < t."""
    if len(history) and history.times[-1] >= t:
        raise DataValidationError("non-causal query: history reaches past t")
    state = ScoreState(cfg, net)
    state.replay(history.times, history.sources)
    state.advance_to(t)
    return float(score_all(model, state)[i])


def margin_penalized_rank(
    scores: np.ndarray, i: int, active: Optional[Sequence[int]] = None
) -> int:
    """Number of margin violations for active node i:
    #{j not active : 1 + sco_j > sco_i}."""
    active_set = {i} if active is None else set(int(x) for x in active)
    sco_i = scores[i]
    count = 0
    for j, sco_j in enumerate(scores):
        if j in active_set:
            continue
        if 1.0 + sco_j > sco_i:
            count += 1
    return count


def rank_error(k: int) -> float:
    """"One-best" WARP rank error: 1 if k > 1 else 0."""
    return 1.0 if k > 1 else 0.0


def warp_loss_exact(scores: np.ndarray, active_set: Sequence[int]) -> float:
    """Exact WARP loss at one query time:

        sum_{i in A} [L(rank1_i) / rank1_i] sum_{j not in A} (1 - sco_i + sco_j)+

    with 0/0 := 0 when rank1_i = 0. Quadratic in the node count; used as
    the oracle the WSABIE estimator is checked against.
    """
    active = [int(x) for x in active_set]
    if not active:
        raise DataValidationError("active set must be nonempty")
    active_mask = np.zeros(len(scores), dtype=bool)
    active_mask[active] = True
    inactive_scores = np.asarray(scores)[~active_mask]
    total = 0.0
    for i in active:
        r1 = margin_penalized_rank(scores, i, active)
        if r1 == 0:
            continue
        hinge_sum = np.maximum(0.0, 1.0 - scores[i] + inactive_scores).sum()
        total += rank_error(r1) / r1 * hinge_sum
    return float(total)


# ---------------------------------------------------------------------------
# Learning
# ---------------------------------------------------------------------------


def _pair_backprop(model: RankerModel, state: ScoreState, i: int, j: int):
    """Gradients of loss = 1 - sco_i + sco_j w.r.t. every parameter group.

    Node i enters with sign -1 and node j with +1. Returns a dict of
    arrays aligned with the model fields (embedding gradients only for
    rows i and j).
    """
    grads = {
        "w1": np.zeros_like(model.w1),
        "b1": np.zeros_like(model.b1),
        "w2": np.zeros_like(model.w2),
        "b2": 0.0,
        "theta": np.zeros_like(model.theta),
        "emb_i": np.zeros(model.embeddings.shape[1]),
        "emb_j": np.zeros(model.embeddings.shape[1]),
    }
    for node, sign, emb_key in ((i, -1.0, "emb_i"), (j, 1.0, "emb_j")):
        g = model.embeddings[node]
        u = np.tanh(model.w1 @ g + model.b1)
        dz = sign * model.w2 * (1.0 - u * u)
        grads["w2"] += sign * u
        grads["b2"] += sign
        grads["w1"] += np.outer(dz, g)
        grads["b1"] += dz
        grads[emb_key] += model.w1.T @ dz
    for idx, name in enumerate(state.cfg.channels):
        grads["theta"][idx] = state.values[name][j] - state.values[name][i]
    return grads


def _apply_step(model, state, i, j, grads, lr):
    model.w1 -= lr * grads["w1"]
    model.b1 -= lr * grads["b1"]
    model.w2 -= lr * grads["w2"]
    model.b2 -= lr * grads["b2"]
    model.theta -= lr * grads["theta"]
    model.embeddings[i] -= lr * grads["emb_i"]
    model.embeddings[j] -= lr * grads["emb_j"]
    if model.node_bias is not None:
        model.node_bias[i] -= lr * -1.0
        model.node_bias[j] -= lr * 1.0


def wsabie_step(
    model: RankerModel,
    cfg: FeatureConfig,
    net: Network,
    state: ScoreState,
    active: int,
    rng: np.random.Generator,
    learning_rate: float,
) -> float:
    """One WSABIE update at the state's current time for active node i.

    Samples inactive nodes uniformly without replacement until one
    violates the unit margin (or all M-1 are exhausted). With a violator
    j found after ``trials`` draws, the loss is

        L(floor((M - 1) / trials)) * (1 - sco_i + sco_j)+

    and, when nonzero, a single SGD step is taken on theta, the MLP, the
    two touched embedding rows, and the bias. Returns the loss (0 when no
    violator or when the rank estimate collapses to 1).

    The state itself is not mutated; recording the event afterwards is
    the caller's responsibility.
    """
    scores = score_all(model, state)
    m = len(scores)
    sco_i = scores[active]
    candidates = np.concatenate([np.arange(active), np.arange(active + 1, m)])
    order = rng.permutation(m - 1)
    violator = -1
    trials = 0
    for idx in order:
        trials += 1
        j = int(candidates[idx])
        if 1.0 + scores[j] > sco_i:
            violator = j
            break
    if violator < 0:
        return 0.0
    if rank_error((m - 1) // trials) == 0.0:
        return 0.0
    loss = float(1.0 - sco_i + scores[violator])
    if learning_rate != 0.0:
        grads = _pair_backprop(model, state, active, violator)
        _apply_step(model, state, active, violator, grads, learning_rate)
    return loss


@dataclass(frozen=True)
class TrainSchedule:
    learning_rate: float = DEFAULT_LEARNING_RATE
    jitter_scale: Optional[float] = None  # None: 1e-6 * min positive gap
    seed: int = 0


def _jitter_ties(cascade: Cascade, scale: Optional[float], rng: np.random.Generator):
    """Add uniform(0, scale) jitter to events sharing a timestamp and
    stably re-sort. Cascades with all-distinct times come back unchanged
    and consume no randomness."""
    times = cascade.times.astype(np.float64).copy()
    sources = cascade.sources.copy()
    n = times.size
    if n < 2:
        return times, sources
    diffs = np.diff(times)
    if not np.any(diffs == 0):
        return times, sources
    if scale is None:
        positive = diffs[diffs > 0]
        base = positive.min() if positive.size else max(cascade.horizon, 1.0)
        scale = 1e-6 * base
    idx = 0
    while idx < n:
        stop = idx
        while stop < n and times[stop] == times[idx]:
            stop += 1
        if stop - idx >= 2:
            times[idx:stop] += rng.uniform(0.0, scale, size=stop - idx)
        idx = stop
    order = np.argsort(times, kind="stable")
    return times[order], sources[order]


def train(
    model: RankerModel,
    cfg: FeatureConfig,
    net: Network,
    cascade: Cascade,
    schedule: TrainSchedule = TrainSchedule(),
) -> RankerModel:
    """Single online pass of WSABIE updates over the cascade.

    Simultaneous events are separated by seeded tie jitter before the
    pass. The input model is untouched; a trained clone is returned.
    Identical seeds give bitwise-identical results.
    """
    trained = model.clone()
    trained.train_seed = schedule.seed
    times, sources = _jitter_ties(
        cascade, schedule.jitter_scale, seed_stream(schedule.seed, _STREAM_JITTER)
    )
    rng = seed_stream(schedule.seed, _STREAM_SAMPLING)
    state = ScoreState(cfg, net)
    for t, s in zip(times, sources):
        state.advance_to(float(t))
        wsabie_step(trained, cfg, net, state, int(s), rng, schedule.learning_rate)
        state.record(int(s))
    return trained


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _rank_of(scores: np.ndarray, i: int) -> int:
    """1-based rank of node i; ties broken toward lower node ids."""
    sco_i = scores[i]
    higher = int(np.sum(scores > sco_i))
    tied_before = int(np.sum(scores[:i] == sco_i))
    return 1 + higher + tied_before


def evaluate_mrr(
    model: RankerModel,
    cfg: FeatureConfig,
    net: Network,
    cascade: Cascade,
    test_range: tuple,
) -> np.ndarray:
    """Reciprocal rank of the true source for every event in
    test_range = (start, stop).

    Scoring is online: history holds all events before the query
    (training prefix plus already-scored test events); parameters stay
    frozen. Events sharing a timestamp are scored from the same state
    before any of them is recorded.
    """
    start, stop = test_range
    n = len(cascade)
    if not (0 <= start < stop <= n):
        raise DataValidationError(f"empty or invalid test range {test_range!r}")
    state = ScoreState(cfg, net)
    state.replay(cascade.times[:start], cascade.sources[:start])
    h_all = mlp_forward(model)  # parameters frozen during evaluation
    out = np.empty(stop - start)
    idx = start
    while idx < stop:
        t = cascade.times[idx]
        group_stop = idx
        while group_stop < stop and cascade.times[group_stop] == t:
            group_stop += 1
        state.advance_to(float(t))
        scores = score_all(model, state, h_all=h_all)
        for e in range(idx, group_stop):
            out[e - start] = 1.0 / _rank_of(scores, int(cascade.sources[e]))
        for e in range(idx, group_stop):
            state.record(int(cascade.sources[e]))
        idx = group_stop
    return out


def average_precision(scores: np.ndarray, relevant: Sequence[int]) -> float:
    """AP of the score-ranked node list (ties to lower ids) against a
    relevant set."""
    relevant = list(dict.fromkeys(int(r) for r in relevant))
    if not relevant:
        raise DataValidationError("relevant set must be nonempty")
    order = np.lexsort((np.arange(len(scores)), -scores))
    positions = {int(node): pos + 1 for pos, node in enumerate(order)}
    ranks = sorted(positions[r] for r in relevant)
    return float(np.mean([(k + 1) / p for k, p in enumerate(ranks)]))


def evaluate_map(
    model: RankerModel,
    cfg: FeatureConfig,
    net: Network,
    cascades_test: Sequence[Cascade],
) -> list:
    """Mean average precision per test cascade.

    Events sharing a timestamp form one query with several true sources;
    each query is scored before its events join the history.
    """
    results = []
    h_all = mlp_forward(model)
    for cascade in cascades_test:
        state = ScoreState(cfg, net)
        aps = []
        idx = 0
        n = len(cascade)
        while idx < n:
            t = cascade.times[idx]
            stop = idx
            while stop < n and cascade.times[stop] == t:
                stop += 1
            state.advance_to(float(t))
            scores = score_all(model, state, h_all=h_all)
            aps.append(average_precision(scores, cascade.sources[idx:stop]))
            for e in range(idx, stop):
                state.record(int(cascade.sources[e]))
            idx = stop
        results.append(float(np.mean(aps)) if aps else 0.0)
    return results


def baseline_rank(
    kind: str, net: Network, history: Optional[Cascade], seed: int = 0
) -> np.ndarray:
    """Non-learned reference rankings.

    "random": seeded shuffle. "activity_then_degree": past event count
    descending, then out-degree descending, then node id.
    """
    m = net.node_count
    if kind == "random":
        return seed_stream(seed, 0).permutation(m)
    if kind == "activity_then_degree":
        counts = np.zeros(m, dtype=np.int64)
        if history is not None and len(history):
            np.add.at(counts, history.sources, 1)
        return np.lexsort((np.arange(m), -net.out_degree, -counts))
    raise DataValidationError(f"unknown baseline kind {kind!r}")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _array_to_hex(arr: np.ndarray) -> list:
    return [float(x).hex() for x in np.asarray(arr, dtype=np.float64).ravel()]


def _array_from_hex(data, shape) -> np.ndarray:
    return np.array([float.fromhex(x) for x in data], dtype=np.float64).reshape(shape)


def save_model(model: RankerModel, cfg: FeatureConfig, path) -> None:
    """Textual checkpoint; floats stored as C99 hex so load(save(m)) is
    bitwise identical."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": {
            "use_social": cfg.use_social,
            "use_self": cfg.use_self,
            "covariate_match_attrs": list(cfg.covariate_match_attrs),
            "use_per_node_bias": cfg.use_per_node_bias,
            "omega": float(cfg.omega).hex(),
        },
        "omega": float(model.omega).hex(),
        "train_seed": model.train_seed,
        "arrays": {
            name: {"shape": list(arr.shape), "data": _array_to_hex(arr)}
            for name, arr in (
                ("embeddings", model.embeddings),
                ("w1", model.w1),
                ("b1", model.b1),
                ("w2", model.w2),
                ("theta", model.theta),
            )
        },
        "b2": float(model.b2).hex(),
        "node_bias": None if model.node_bias is None else _array_to_hex(model.node_bias),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Inverse of save_model; returns (model, cfg)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataValidationError(
            f"unsupported checkpoint format {payload.get('format')!r}"
        )
    raw_cfg = payload["config"]
    cfg = FeatureConfig(
        use_social=raw_cfg["use_social"],
        use_self=raw_cfg["use_self"],
        covariate_match_attrs=tuple(raw_cfg["covariate_match_attrs"]),
        use_per_node_bias=raw_cfg["use_per_node_bias"],
        omega=float.fromhex(raw_cfg["omega"]),
    )
    arrays = payload["arrays"]

    def arr(name):
        spec = arrays[name]
        return _array_from_hex(spec["data"], tuple(spec["shape"]))

    model = RankerModel(
        embeddings=arr("embeddings"),
        w1=arr("w1"),
        b1=arr("b1"),
        w2=arr("w2"),
        b2=float.fromhex(payload["b2"]),
        theta=arr("theta"),
        node_bias=(
            None
            if payload["node_bias"] is None
            else _array_from_hex(payload["node_bias"], (-1,))
        ),
        omega=float.fromhex(payload["omega"]),
        train_seed=payload["train_seed"],
    )
    return model, cfg
