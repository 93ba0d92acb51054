"""The three social-influence hypothesis tests plus shared statistics.

1. Ranker comparison: train rankers with and without the social feature
   on a cascade prefix, compare heldout mean reciprocal rank through a
   paired sign-flip permutation test.
2. Hawkes goodness of fit: likelihood-ratio test between the full model
   and the b = 0 constrained model, chi-square with one degree of
   freedom.
3. Shuffle test: compare the observed infection risk (adopters over
   innovators, first activations only) against its distribution under
   random re-orderings of the event sources.

Empirical p-values use add-one smoothing, (1 + #extreme) / (1 + n), so
they are never exactly zero and stay valid at finite resample counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import hawkes, ranker
from .exceptions import DataValidationError, NumericError
from .hawkes import Cascade
from .netgraph import Embedding, Network
from .seeding import seed_stream

DEFAULT_N_PERM = 2000
DEFAULT_N_SHUFFLES = 1000

# sub-stream ids of a test's seed
_STREAM_TRAIN = 0
_STREAM_PERM = 1
_STREAM_SHUFFLE = 2


@dataclass(frozen=True)
class TestReport:
    """Outcome of one hypothesis test, JSON-serializable with stable key
    order: {test, statistic, p_value, n, seed, extras}."""

    test: str
    statistic: float
    p_value: float
    n: int
    seed: Optional[int] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise NumericError(f"p-value {self.p_value} outside [0, 1]")

    def to_json(self) -> str:
        def clean(obj):
            if isinstance(obj, (np.floating, float)):
                return float(obj)
            if isinstance(obj, (np.integer, int)):
                return int(obj)
            if isinstance(obj, np.ndarray):
                return [clean(x) for x in obj.tolist()]
            if isinstance(obj, (list, tuple)):
                return [clean(x) for x in obj]
            if isinstance(obj, dict):
                return {str(k): clean(v) for k, v in sorted(obj.items())}
            return obj

        payload = {
            "test": self.test,
            "statistic": clean(self.statistic),
            "p_value": clean(self.p_value),
            "n": int(self.n),
            "seed": self.seed,
            "extras": clean(self.extras),
        }
        return json.dumps(payload)


# ---------------------------------------------------------------------------
# Statistical primitives
# ---------------------------------------------------------------------------

_EPS = 1e-15
_MAX_ITER = 10000


def _gamma_p_series(a: float, x: float) -> float:
    """Lower regularized incomplete gamma P(a, x) by power series."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_q_contfrac(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) by continued fraction
    (modified Lentz)."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_q(a: float, x: float) -> float:
    if a <= 0 or x < 0:
        raise DataValidationError("regularized gamma needs a > 0, x >= 0")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi_square_sf(x: float, df: int) -> float:
    """Chi-square survival function Q(df/2, x/2); absolute error below
    1e-10 over the tested range."""
    if df < 1:
        raise DataValidationError("degrees of freedom must be >= 1")
    if x < 0:
        return 1.0
    return min(1.0, max(0.0, regularized_gamma_q(df / 2.0, x / 2.0)))


def _beta_contfrac(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def regularized_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta I_x(a, b), continued-fraction form."""
    if a <= 0 or b <= 0:
        raise DataValidationError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_contfrac(a, b, x) / a
    return 1.0 - front * _beta_contfrac(b, a, 1.0 - x) / b


def paired_t_test(xs: Sequence[float], ys: Sequence[float]):
    """Two-sided paired t-test; returns (t, p). The p-value comes from
    the incomplete beta representation of the t distribution."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DataValidationError("paired t-test needs two equal-length vectors")
    n = xs.size
    if n < 2:
        raise DataValidationError("paired t-test needs n >= 2")
    d = xs - ys
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DataValidationError("degenerate pairs: zero variance of differences")
    t = float(d.mean() / (sd / math.sqrt(n)))
    nu = n - 1
    p = regularized_beta(nu / (nu + t * t), nu / 2.0, 0.5)
    return t, min(1.0, max(0.0, p))


def sign_flip_pvalue(diffs: np.ndarray, n_perm: int, rng: np.random.Generator):
    """Right-tailed paired permutation (sign-flip) p-value.

    The observed statistic is mean(diffs); each permutation independently
    negates every pair's difference with probability 1/2. Returns
    (d_obs, p) with p = (1 + #{perm >= obs}) / (1 + n_perm).
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    d_obs = float(diffs.mean())
    signs = rng.integers(0, 2, size=(n_perm, diffs.size)) * 2 - 1
    d_perm = (signs * diffs).mean(axis=1)
    p = (1.0 + int(np.sum(d_perm >= d_obs))) / (1.0 + n_perm)
    return d_obs, p


# ---------------------------------------------------------------------------
# Test 1: ranker comparison
# ---------------------------------------------------------------------------


def ranker_influence_test(
    net: Network,
    embedding: Embedding,
    cascade: Cascade,
    split: float = 0.7,
    seed: int = 0,
    n_perm: int = DEFAULT_N_PERM,
    omega: float = 1.0,
    learning_rate: float = ranker.DEFAULT_LEARNING_RATE,
    hidden: int = ranker.DEFAULT_HIDDEN,
) -> TestReport:
    """Granger-style ranker comparison.

    m0 (no social feature) and m1 (with it) are trained on the cascade
    prefix with identical seeds; per-event reciprocal ranks on the suffix
    are compared via D = mean(RR1) - mean(RR0) under a right-tailed
    sign-flip permutation test.
    """
    if not 0.0 < split < 1.0:
        raise DataValidationError("split must be in (0, 1)")
    n = len(cascade)
    train_len = int(split * n)
    n_test = n - train_len
    if n_test < 30:
        raise DataValidationError(
            f"test suffix has {n_test} events; need >= 30 (shrink split)"
        )
    if train_len < 1:
        raise DataValidationError("empty training prefix")

    cfg0 = ranker.FeatureConfig(use_social=False, use_self=True, omega=omega)
    cfg1 = ranker.FeatureConfig(use_social=True, use_self=True, omega=omega)
    schedule = ranker.TrainSchedule(learning_rate=learning_rate, seed=seed)
    prefix = cascade.slice(0, train_len)
    rr = {}
    for name, cfg in (("m0", cfg0), ("m1", cfg1)):
        model = ranker.init_model(embedding, cfg, seed=seed, hidden=hidden)
        trained = ranker.train(model, cfg, net, prefix, schedule)
        rr[name] = ranker.evaluate_mrr(trained, cfg, net, cascade, (train_len, n))

    rr0, rr1 = rr["m0"], rr["m1"]
    extras = {
        "mean_rr_m0": float(rr0.mean()),
        "mean_rr_m1": float(rr1.mean()),
        "rr_m0": rr0.tolist(),
        "rr_m1": rr1.tolist(),
        "n_test_events": int(n_test),
    }
    if np.array_equal(rr0, rr1):
        extras["degenerate"] = "identical predictions"
        return TestReport(
            test="ranker_permutation", statistic=0.0, p_value=1.0,
            n=n_perm, seed=seed, extras=extras,
        )
    rng = seed_stream(seed, _STREAM_PERM)
    d_obs, p = sign_flip_pvalue(rr1 - rr0, n_perm, rng)
    return TestReport(
        test="ranker_permutation", statistic=d_obs, p_value=p,
        n=n_perm, seed=seed, extras=extras,
    )


# ---------------------------------------------------------------------------
# Test 2: Hawkes goodness of fit
# ---------------------------------------------------------------------------


def hp_influence_test(
    net: Network,
    embedding: Embedding,
    cascade: Cascade,
    omega: float,
) -> TestReport:
    """Likelihood-ratio test between the full Hawkes model and the b = 0
    constrained one. Statistic 2 (LL_full - LL_null) clipped at zero,
    chi-square reference with one degree of freedom."""
    try:
        params_null, ll_null, params_full, ll_full = hawkes.fit_nested(
            net, embedding, cascade, omega
        )
    except NumericError as exc:
        raise NumericError(f"optimizer failure in hp_influence_test: {exc}") from exc
    lam = max(0.0, 2.0 * (ll_full - ll_null))
    p = chi_square_sf(lam, 1)
    extras = {
        "ll_null": ll_null,
        "ll_full": ll_full,
        "fit_null": {"a": params_null.a, "b": params_null.b,
                     "beta": params_null.beta, "eta": params_null.eta},
        "fit_full": {"a": params_full.a, "b": params_full.b,
                     "beta": params_full.beta, "eta": params_full.eta},
        "omega": omega,
    }
    return TestReport(test="hp_lrt", statistic=lam, p_value=p, n=1, extras=extras)


# ---------------------------------------------------------------------------
# Test 3: shuffle test on infection risk
# ---------------------------------------------------------------------------


def _risk_given_first_times(net: Network, first_time: np.ndarray):
    src, dst = net._edge_arrays
    activated = np.isfinite(first_time)
    adopter = np.zeros(net.node_count, dtype=bool)
    if src.size:
        exposure = (first_time[src] < first_time[dst]) & np.isfinite(first_time[dst])
        adopter[dst[exposure]] = True
    n_adopters = int(np.sum(adopter & activated))
    n_innovators = int(np.sum(activated & ~adopter))
    if n_innovators == 0:
        raise NumericError("undefined risk: no innovators")
    return n_adopters / n_innovators, n_adopters, n_innovators


def _first_activation_times(
    node_count: int, times: np.ndarray, sources: np.ndarray
) -> np.ndarray:
    first = np.full(node_count, np.inf)
    np.minimum.at(first, sources, times)
    return first


def infection_risk(net: Network, cascade: Cascade):
    """Infection risk = adopters / innovators over first activations.

    A node is an adopter when at least one in-neighbor's first activation
    strictly precedes its own; otherwise it is an innovator. Nodes that
    never activate count as neither.
    """
    if not len(cascade):
        raise DataValidationError("cascade is empty")
    first = _first_activation_times(net.node_count, cascade.times, cascade.sources)
    return _risk_given_first_times(net, first)


def shuffle_test(
    net: Network,
    cascade: Cascade,
    n_shuffles: int = DEFAULT_N_SHUFFLES,
    seed: int = 0,
) -> TestReport:
    """Shuffle test: permute the source labels over the fixed timestamps
    and compare the observed risk against the shuffled distribution,
    right-tailed with add-one smoothing."""
    if n_shuffles < 100:
        raise DataValidationError("need at least 100 shuffles")
    risk_obs, n_adopt, n_innov = infection_risk(net, cascade)
    rng = seed_stream(seed, _STREAM_SHUFFLE)
    n = len(cascade)
    exceed = 0
    shuffled = np.empty(n_shuffles)
    for k in range(n_shuffles):
        perm_sources = cascade.sources[rng.permutation(n)]
        first = _first_activation_times(net.node_count, cascade.times, perm_sources)
        shuffled[k], _, _ = _risk_given_first_times(net, first)
        if shuffled[k] >= risk_obs:
            exceed += 1
    p = (1.0 + exceed) / (1.0 + n_shuffles)
    extras = {
        "n_adopters": n_adopt,
        "n_innovators": n_innov,
        "shuffled_risk_mean": float(shuffled.mean()),
        "shuffled_risks": shuffled.tolist(),
    }
    return TestReport(
        test="shuffle", statistic=risk_obs, p_value=p,
        n=n_shuffles, seed=seed, extras=extras,
    )
