"""Multivariate Hawkes process over a static network.

Intensity of node i at time t:

    lambda_i(t) = mu_i + sum_{events e, t_e < t} alpha(s_e -> i) * k_w(t - t_e)

with excitation alpha(j -> i) = a for j = i, b for network edges j -> i,
0 otherwise, base rate mu_i = sigmoid(beta * v2_i + eta) driven by the
Laplacian second eigenvector v2 (homophily), and exponential kernel
k_w(d) = w * exp(-w * d). The kernel integrates to one, so alpha entries
are branching ratios and the stability proxy max_i sum_j alpha(j -> i)
is dimensionless.

Events strictly at t do not contribute to lambda(t): ties are resolved
by reading all intensities of a tie group before applying its bumps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np
from scipy.special import expit, logit

from .exceptions import DataValidationError, NumericError
from .netgraph import Embedding, Network
from .seeding import seed_stream


class Event(NamedTuple):
    time: float
    source: int


@dataclass(frozen=True, eq=False)
class Cascade:
    """Time-ordered events over a network, observed on [0, horizon].

    Stored columnar (times, sources) for vectorized work; ``events``
    iterates (time, source) pairs. Arrays are frozen after validation.
    """

    times: np.ndarray
    sources: np.ndarray
    horizon: float
    network_hash: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        sources = np.ascontiguousarray(self.sources, dtype=np.int64)
        if times.ndim != 1 or sources.shape != times.shape:
            raise DataValidationError("times and sources must be 1-d and equal length")
        if times.size and not np.all(np.isfinite(times)):
            raise DataValidationError("event times must be finite")
        if times.size and np.any(np.diff(times) < 0):
            raise DataValidationError("cascade not time-ordered")
        if times.size and (times[0] < 0 or times[-1] > self.horizon + 1e-12):
            raise DataValidationError("event times must lie in [0, horizon]")
        if sources.size and sources.min() < 0:
            raise DataValidationError("negative source id")
        times.setflags(write=False)
        sources.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "horizon", float(self.horizon))

    def __len__(self) -> int:
        return self.times.size

    @property
    def events(self) -> Iterator[Event]:
        return (Event(float(t), int(s)) for t, s in zip(self.times, self.sources))

    def slice(self, start: int, stop: int) -> "Cascade":
        return Cascade(
            times=self.times[start:stop].copy(),
            sources=self.sources[start:stop].copy(),
            horizon=self.horizon,
            network_hash=self.network_hash,
            seed=self.seed,
        )


@dataclass(frozen=True)
class HawkesParams:
    """Generative knobs: a self-excitation, b social excitation on edges,
    beta homophily strength, eta base-rate offset, omega kernel bandwidth.
    """

    a: float
    b: float
    beta: float
    eta: float
    omega: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise DataValidationError("excitation parameters a, b must be >= 0")
        if self.omega <= 0:
            raise DataValidationError("kernel bandwidth omega must be > 0")


def kernel(omega: float, delta) -> np.ndarray:
    """Unit-mass exponential kernel k_w(d) = w * exp(-w * d)."""
    return omega * np.exp(-omega * np.asarray(delta, dtype=np.float64))


def base_rates(params: HawkesParams, embedding: Embedding) -> np.ndarray:
    """mu_i = sigmoid(beta * v2_i + eta); entries in (0, 1)."""
    return expit(params.beta * embedding.second_eigvec + params.eta)


def alpha(params: HawkesParams, net: Network, j: int, i: int) -> float:
    """Pairwise excitation: a on the diagonal, b along edges, else 0."""
    if j == i:
        return params.a
    if net.has_edge(j, i):
        return params.b
    return 0.0


def branching_proxy(params: HawkesParams, net: Network) -> float:
    """max_i sum_j alpha(j -> i) = max_i (a + b * in_degree_i).

    Upper bound proxy for the spectral radius of the branching matrix;
    >= 1 flags a supercritical process.
    """
    if net.node_count == 0:
        return 0.0
    return float(params.a + params.b * (net.in_degree.max() if net.edge_count else 0))


class IntensityState:
    """O(1)-per-event intensity recursion for the exponential kernel.

    Keeps a per-node excitation accumulator R with lambda = mu + R once
    decayed to the query time. ``advance_to`` decays, ``record`` applies
    the alpha bumps of an event at the current time.
    """

    def __init__(self, params: HawkesParams, net: Network, embedding: Embedding):
        self.params = params
        self.net = net
        self.mu = base_rates(params, embedding)
        self.excitation = np.zeros(net.node_count)
        self.time = 0.0

    def advance_to(self, t: float) -> None:
        if t < self.time:
            raise DataValidationError("non-causal query: time before current state")
        if t > self.time:
            self.excitation *= np.exp(-self.params.omega * (t - self.time))
            self.time = t

    def record(self, source: int) -> None:
        p = self.params
        self.excitation[source] += p.a * p.omega
        nbrs = self.net.out_neighbors[source]
        if nbrs.size:
            self.excitation[nbrs] += p.b * p.omega

    def intensities(self) -> np.ndarray:
        return self.mu + self.excitation


def intensity(
    params: HawkesParams,
    net: Network,
    embedding: Embedding,
    prefix: Cascade,
    t: float,
    i: int,
) -> float:
    """Direct evaluation of lambda_i(t) over an event prefix.

    Events at times >= t are excluded (strict inequality); querying
    before the last prefix event is a non-causal error.
    """
    if len(prefix) and t < prefix.times[-1]:
        raise DataValidationError("non-causal query: t precedes the last prefix event")
    mu_i = float(base_rates(params, embedding)[i])
    if not len(prefix):
        return mu_i
    mask = prefix.times < t
    if not mask.any():
        return mu_i
    times = prefix.times[mask]
    sources = prefix.sources[mask]
    in_nbrs = set(net.in_neighbors[i].tolist())
    coef = np.where(
        sources == i,
        params.a,
        np.array([params.b if int(s) in in_nbrs else 0.0 for s in sources]),
    )
    return mu_i + float(np.sum(coef * kernel(params.omega, t - times)))


def simulate(
    params: HawkesParams,
    net: Network,
    embedding: Embedding,
    target_length: int,
    seed: int,
    allow_supercritical: bool = False,
) -> Cascade:
    """Exact sample by Ogata thinning, stopping after ``target_length``
    events; the horizon is the last event time.

    The proposal bound is the total intensity at the left edge of each
    inter-event interval, valid because the exponential kernel is
    nonincreasing between events. Deterministic per seed.
    """
    if target_length < 1:
        raise DataValidationError("target_length must be >= 1")
    ratio = branching_proxy(params, net)
    if ratio >= 1.0 and not allow_supercritical:
        raise NumericError(
            f"supercritical process: branching proxy {ratio:.3f} >= 1 "
            "(pass allow_supercritical=True to simulate anyway)"
        )
    rng = seed_stream(seed, stream_id=0)
    mu = base_rates(params, embedding)
    sum_mu = float(mu.sum())
    if sum_mu <= 0:
        raise NumericError("total base rate is zero; process cannot start")
    omega = params.omega
    excitation = np.zeros(net.node_count)
    bump_self = params.a * omega
    bump_social = params.b * omega
    out_nbrs = net.out_neighbors

    times = np.empty(target_length)
    sources = np.empty(target_length, dtype=np.int64)
    t = 0.0
    n = 0
    while n < target_length:
        total_before = sum_mu + excitation.sum()
        gap = rng.standard_exponential() / total_before
        t += gap
        excitation *= np.exp(-omega * gap)
        rates = mu + excitation
        total = rates.sum()
        if rng.random() * total_before <= total:
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(rates), u, side="right"))
            s = min(idx, net.node_count - 1)
            times[n] = t
            sources[n] = s
            excitation[s] += bump_self
            if bump_social != 0.0:
                nbrs = out_nbrs[s]
                if nbrs.size:
                    excitation[nbrs] += bump_social
            n += 1
    return Cascade(
        times=times,
        sources=sources,
        horizon=float(times[-1]),
        network_hash=net.fingerprint,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _ExcitationStats:
    """Parameter-free per-event sufficient statistics for a fixed omega.

    s_self[n], s_soc[n]: decayed kernel mass from the source's own past
    events and from its in-neighbors' past events at event n, so that
    lambda_{s_n}(t_n) = mu_{s_n} + a * s_self[n] + b * s_soc[n].
    g[n] = 1 - exp(-omega (T - t_n)) is the kernel mass each event leaves
    inside the observation window (compensator term).
    """

    s_self: np.ndarray
    s_soc: np.ndarray
    g: np.ndarray
    out_deg_e: np.ndarray
    v_e: np.ndarray
    src: np.ndarray
    v2: np.ndarray
    horizon: float


def _excitation_stats(
    omega: float, net: Network, embedding: Embedding, cascade: Cascade
) -> _ExcitationStats:
    times, sources = cascade.times, cascade.sources
    n = times.size
    m = net.node_count
    r_self = np.zeros(m)
    r_soc = np.zeros(m)
    last = np.zeros(m)
    s_self = np.zeros(n)
    s_soc = np.zeros(n)
    out_nbrs = net.out_neighbors

    idx = 0
    while idx < n:
        t = times[idx]
        stop = idx
        while stop < n and times[stop] == t:
            stop += 1
        # read all intensities of the tie group before any of its bumps
        for e in range(idx, stop):
            s = sources[e]
            if last[s] < t:
                decay = np.exp(-omega * (t - last[s]))
                r_self[s] *= decay
                r_soc[s] *= decay
                last[s] = t
            s_self[e] = r_self[s]
            s_soc[e] = r_soc[s]
        for e in range(idx, stop):
            s = sources[e]
            if last[s] < t:
                decay = np.exp(-omega * (t - last[s]))
                r_self[s] *= decay
                r_soc[s] *= decay
                last[s] = t
            r_self[s] += omega
            for k in out_nbrs[s]:
                if last[k] < t:
                    decay = np.exp(-omega * (t - last[k]))
                    r_self[k] *= decay
                    r_soc[k] *= decay
                    last[k] = t
                r_soc[k] += omega
        idx = stop

    horizon = cascade.horizon
    g = 1.0 - np.exp(-omega * (horizon - times))
    return _ExcitationStats(
        s_self=s_self,
        s_soc=s_soc,
        g=g,
        out_deg_e=net.out_degree[sources].astype(np.float64) if n else np.zeros(0),
        v_e=embedding.second_eigvec[sources] if n else np.zeros(0),
        src=sources,
        v2=embedding.second_eigvec,
        horizon=horizon,
    )


def _ll_and_grad(theta: np.ndarray, stats: _ExcitationStats):
    """Log-likelihood and gradient in natural parameters (a, b, beta, eta).

    Returns (-inf, None) when some event intensity underflows to zero,
    which backtracking treats as an infeasible step.
    """
    a, b, beta, eta = theta
    mu = expit(beta * stats.v2 + eta)
    lam = mu[stats.src] + a * stats.s_self + b * stats.s_soc
    if lam.size and lam.min() <= 0.0:
        return -np.inf, None
    t_total = stats.horizon
    ll = (
        float(np.log(lam).sum())
        - t_total * float(mu.sum())
        - a * float(stats.g.sum())
        - b * float((stats.out_deg_e * stats.g).sum())
    )
    inv_lam = 1.0 / lam
    smu = mu * (1.0 - mu)
    smu_e = smu[stats.src]
    grad = np.array(
        [
            float((stats.s_self * inv_lam).sum() - stats.g.sum()),
            float((stats.s_soc * inv_lam).sum() - (stats.out_deg_e * stats.g).sum()),
            float((smu_e * stats.v_e * inv_lam).sum() - t_total * (smu * stats.v2).sum()),
            float((smu_e * inv_lam).sum() - t_total * smu.sum()),
        ]
    )
    return ll, grad


def log_likelihood(
    params: HawkesParams,
    net: Network,
    embedding: Embedding,
    cascade: Cascade,
):
    """Exact log-likelihood and gradient over (a, b, beta, eta).

    LL = sum_n log lambda_{s_n}(t_n)
         - sum_i [ mu_i T + sum_e alpha(s_e -> i) (1 - exp(-w (T - t_e))) ]

    omega is taken from params but treated as fixed (never a gradient
    coordinate). Cost is O(#events * (1 + max out-degree)).
    """
    stats = _excitation_stats(params.omega, net, embedding, cascade)
    theta = np.array([params.a, params.b, params.beta, params.eta])
    ll, grad = _ll_and_grad(theta, stats)
    if grad is None:
        raise NumericError(
            "nonpositive event intensity in log-likelihood; data or "
            "parameters are corrupted"
        )
    return ll, grad


def compensator_increments(
    params: HawkesParams, net: Network, embedding: Embedding, cascade: Cascade
) -> np.ndarray:
    """Total-process compensator increments between consecutive events.

    Under the true parameters these are i.i.d. Exp(1) (time-rescaling
    theorem), which is the simulator's goodness-of-fit handle.
    """
    mu_sum = float(base_rates(params, embedding).sum())
    omega = params.omega
    out_deg = net.out_degree
    total_r = 0.0
    prev_t = 0.0
    out = np.empty(len(cascade))
    for k, (t, s) in enumerate(zip(cascade.times, cascade.sources)):
        delta = t - prev_t
        decay = np.exp(-omega * delta)
        out[k] = mu_sum * delta + total_r * (1.0 - decay) / omega
        total_r = total_r * decay + params.a * omega + params.b * omega * out_deg[s]
        prev_t = t
    return out


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

_FIT_MAX_ITER = 500
_ARMIJO_C = 1e-4
_REL_TOL = 1e-7


def _softplus(x: float) -> float:
    return float(np.logaddexp(0.0, x))


def _softplus_inv(y: float) -> float:
    if y <= 0:
        raise ValueError("softplus inverse needs y > 0")
    return float(y + np.log1p(-np.exp(-y))) if y > 1e-10 else float(np.log(np.expm1(y)))


def _ascend(objective, z0: np.ndarray, max_iter: int):
    """Backtracking gradient ascent; returns the best iterate seen.

    objective(z) -> (value, grad) with value possibly -inf (infeasible).
    Armijo condition value_new >= value + c * s * |grad|^2; the accepted
    step seeds the next trial step (doubled).
    """
    z = np.asarray(z0, dtype=np.float64)
    val, grad = objective(z)
    if not np.isfinite(val):
        raise NumericError(f"non-finite objective at initial iterate {z0!r}")
    best_val, best_z = val, z.copy()
    step = 1.0
    for _ in range(max_iter):
        gnorm2 = float(grad @ grad)
        if gnorm2 <= 1e-18:
            break
        s = step
        accepted = False
        while s >= 1e-14:
            z_new = z + s * grad
            val_new, grad_new = objective(z_new)
            if np.isnan(val_new):
                raise NumericError(f"objective became NaN at iterate {z_new!r}")
            if np.isfinite(val_new) and val_new >= val + _ARMIJO_C * s * gnorm2:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            break
        improvement = val_new - val
        z, val, grad = z_new, val_new, grad_new
        if val > best_val:
            best_val, best_z = val, z.copy()
        step = min(s * 2.0, 1e3)
        if abs(improvement) < _REL_TOL * (1.0 + abs(val)):
            break
    return best_val, best_z


def _scaled_stats(stats: _ExcitationStats):
    """Standardize the eigenvector inside the optimizer so the beta and
    eta coordinates have comparable gradient scales (the raw entries are
    O(1/sqrt(M)) and condition plain gradient ascent terribly). Pure
    reparameterization: beta_reported = beta_internal / sigma."""
    sigma = float(stats.v2.std())
    if sigma <= 0:
        return stats, 1.0
    scaled = _ExcitationStats(
        s_self=stats.s_self,
        s_soc=stats.s_soc,
        g=stats.g,
        out_deg_e=stats.out_deg_e,
        v_e=stats.v_e / sigma,
        src=stats.src,
        v2=stats.v2 / sigma,
        horizon=stats.horizon,
    )
    return scaled, sigma


def _ascend_constrained(stats: _ExcitationStats, z0: np.ndarray):
    def constrained(z):
        a = _softplus(z[0])
        val, grad = _ll_and_grad(np.array([a, 0.0, z[1], z[2]]), stats)
        if grad is None:
            return -np.inf, None
        sig = expit(z[0])
        return val, np.array([grad[0] * sig, grad[2], grad[3]])

    return _ascend(constrained, z0, _FIT_MAX_ITER)


def _ascend_full(stats: _ExcitationStats, z0: np.ndarray):
    def full(z):
        a, b = _softplus(z[0]), _softplus(z[1])
        val, grad = _ll_and_grad(np.array([a, b, z[2], z[3]]), stats)
        if grad is None:
            return -np.inf, None
        return val, np.array(
            [grad[0] * expit(z[0]), grad[1] * expit(z[1]), grad[2], grad[3]]
        )

    return _ascend(full, z0, _FIT_MAX_ITER)


def _fit_pair(stats: _ExcitationStats, need_full: bool):
    """Converge b = 0 and full fits in internal (scaled) coordinates.

    The full fit warm-starts from the null optimum; the null fit is then
    re-polished from the full optimum's shared parameters, so the
    likelihood-ratio statistic measures the gain from b alone rather
    than unequal convergence. b = 0 is a valid boundary point of the
    full space and remains a candidate, guaranteeing
    LL(full) >= LL(null).
    """
    stats_s, sigma = _scaled_stats(stats)
    n = stats_s.src.size
    t_total = max(stats_s.horizon, 1e-12)
    m = stats_s.v2.size
    rate = min(max(n / (m * t_total), 1e-8), 0.5)
    z0 = np.array([_softplus_inv(0.1), 0.0, float(logit(rate))])

    val_n, z_n = _ascend_constrained(stats_s, z0)
    theta_null = np.array([_softplus(z_n[0]), 0.0, z_n[1], z_n[2]])
    if not need_full:
        return (theta_null, val_n, sigma, None, None)

    z0_full = np.array([z_n[0], _softplus_inv(1e-3), z_n[1], z_n[2]])
    val_f, z_f = _ascend_full(stats_s, z0_full)

    # polish the null from the full solution's shared parameters
    val_n2, z_n2 = _ascend_constrained(stats_s, np.array([z_f[0], z_f[2], z_f[3]]))
    if val_n2 > val_n:
        val_n, z_n = val_n2, z_n2
        theta_null = np.array([_softplus(z_n[0]), 0.0, z_n[1], z_n[2]])

    if val_f >= val_n:
        theta_full = np.array([_softplus(z_f[0]), _softplus(z_f[1]), z_f[2], z_f[3]])
        val_full = val_f
    else:
        theta_full, val_full = theta_null.copy(), val_n
    return (theta_null, val_n, sigma, theta_full, val_full)


def _unscale(theta: np.ndarray, sigma: float) -> np.ndarray:
    out = theta.copy()
    out[2] = out[2] / sigma
    return out


def _fit_from_stats(stats: _ExcitationStats, omega: float, constrain_b_zero: bool):
    theta_n, val_n, sigma, theta_f, val_f = _fit_pair(
        stats, need_full=not constrain_b_zero
    )
    if constrain_b_zero:
        return _unscale(theta_n, sigma), val_n
    return _unscale(theta_f, sigma), val_f


def fit_nested(
    net: Network,
    embedding: Embedding,
    cascade: Cascade,
    omega: float,
):
    """Fit the b = 0 constrained and the full model off one shared
    precompute pass. Returns (params_null, ll_null, params_full, ll_full)
    with ll_full >= ll_null by construction."""
    if len(cascade) < 50:
        warnings.warn(
            f"fitting on only {len(cascade)} events; estimates may be unstable",
            stacklevel=2,
        )
    stats = _excitation_stats(omega, net, embedding, cascade)
    theta_n, ll_n, sigma, theta_f, ll_f = _fit_pair(stats, need_full=True)
    theta_n, theta_f = _unscale(theta_n, sigma), _unscale(theta_f, sigma)

    def to_params(th):
        return HawkesParams(
            a=float(th[0]), b=float(th[1]), beta=float(th[2]),
            eta=float(th[3]), omega=omega,
        )

    return to_params(theta_n), ll_n, to_params(theta_f), ll_f


def fit(
    net: Network,
    embedding: Embedding,
    cascade: Cascade,
    omega: float,
    constrain_b_zero: bool = False,
):
    """Maximize the likelihood over (a, b, beta, eta) at fixed omega.

    Deterministic full-batch gradient ascent on the softplus
    reparameterization of (a, b); the unconstrained fit warm-starts from
    the constrained optimum, which guarantees the nesting property
    LL(full) >= LL(b = 0).

    Returns (HawkesParams, log-likelihood).
    """
    if omega <= 0:
        raise DataValidationError("omega must be > 0")
    if len(cascade) < 50:
        warnings.warn(
            f"fitting on only {len(cascade)} events; estimates may be unstable",
            stacklevel=2,
        )
    stats = _excitation_stats(omega, net, embedding, cascade)
    theta, ll = _fit_from_stats(stats, omega, constrain_b_zero)
    params = HawkesParams(
        a=float(theta[0]), b=float(theta[1]), beta=float(theta[2]),
        eta=float(theta[3]), omega=omega,
    )
    return params, ll
