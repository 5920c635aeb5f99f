"""Exact finite-n ground truth for the sparse spiked Wigner model.

Every posterior quantity is obtained by enumerating all ``len(atoms)**n``
signal configurations in the log domain. On top of that sit disorder Monte
Carlo estimators for the mutual information and numerical checks of the
interpolation argument: boundary values, the sum rule, the adaptive ODE for
the interpolation SNR and the Nishimori identity.

The interpolating model at time t in [0, 1] observes

    W_ij(t) = sqrt((1 - t) lam / n) X_i X_j + Z_ij      (i < j)
    W~_i    = sqrt(R) X_i + Z~_i

with R = eps + lam * int_0^t q(s) ds. Its Hamiltonian is

    H(x) = sum_{i<j} [s^2 x_i^2 x_j^2 / 2 - s x_i x_j W_ij(t)] + R |x|^2 / 2 - sqrt(R) x . W~
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import channel
from .exceptions import ParameterError, ResourceError
from .prior import Prior, moments

ENUMERATION_BUDGET = 10 ** 8
_CONFIG_CHUNK = 1 << 15
_WORK_LIMIT = 1 << 22  # instances * configs * n per vectorized block


# ---------------------------------------------------------------- instances

@dataclass(frozen=True, eq=False)
class FiniteInstance:
    """One draw of the disorder: signal, matrix noise and scalar-channel noise."""

    n: int
    prior: Prior
    lam: float
    signal: np.ndarray
    noise: np.ndarray
    scalar_noise: np.ndarray
    seed: int
    index: int = 0
    data: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "data", self.data_at(0.0))

    def data_at(self, t: float) -> np.ndarray:
        """Symmetric observation matrix of the interpolating model; zero diagonal."""
        s = math.sqrt((1.0 - t) * self.lam / self.n)
        w = s * np.outer(self.signal, self.signal) + self.noise
        np.fill_diagonal(w, 0.0)
        return w


def _check_finite_prior(prior):
    if prior.is_gaussian:
        raise ParameterError("exact enumeration needs a finite-atom prior")


def sample_instance(n: int, prior: Prior, lam: float, seed: int, index: int = 0) -> FiniteInstance:
    """Draw an instance from a Philox stream keyed by ``(seed, index)``.

    Instances are reproducible individually, so batches can be built in any
    order or in parallel.
    """
    _check_finite_prior(prior)
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not (math.isfinite(lam) and lam >= 0):
        raise ParameterError("lambda must be finite and >= 0")
    ss = np.random.SeedSequence([int(seed) & (2 ** 64 - 1), int(index)])
    rng = np.random.Generator(np.random.Philox(ss))
    signal = rng.choice(prior.values, size=n, p=prior.weights / prior.weights.sum())
    iu = np.triu_indices(n, 1)
    noise = np.zeros((n, n))
    noise[iu] = rng.standard_normal(len(iu[0]))
    noise = noise + noise.T
    scalar_noise = rng.standard_normal(n)
    return FiniteInstance(n, prior, float(lam), signal, noise, scalar_noise, int(seed), int(index))


def sample_batch(n: int, prior: Prior, lam: float, n_disorder: int, seed: int) -> list[FiniteInstance]:
    return [sample_instance(n, prior, lam, seed, i) for i in range(n_disorder)]


@dataclass(frozen=True)
class InterpolationState:
    """Time t, perturbation eps and the current scalar SNR R of the interpolating model."""

    t: float
    epsilon: float
    s_n: float
    R: float
    q_path: Callable[[float], float] | None = None

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ParameterError("t must lie in [0, 1]")
        if not self.s_n > 0:
            raise ParameterError("s_n must be > 0")
        if not self.s_n * (1 - 1e-12) <= self.epsilon <= 2 * self.s_n * (1 + 1e-12):
            raise ParameterError("epsilon must lie in [s_n, 2 s_n]")
        if self.R < self.epsilon * (1 - 1e-12):
            raise ParameterError("R must be >= epsilon")

    @classmethod
    def constant_path(cls, t: float, epsilon: float, s_n: float, lam: float, q: float):
        return cls(t, epsilon, s_n, epsilon + lam * q * t, lambda _s: q)

    def scalar_observations(self, inst: FiniteInstance) -> np.ndarray:
        return math.sqrt(self.R) * inst.signal + inst.scalar_noise


# ---------------------------------------------------------------- enumeration

def configurations(prior: Prior, n: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Rows ``start:stop`` of all atom configurations in lexicographic order."""
    k = len(prior.atoms)
    total = k ** n
    stop = total if stop is None else min(stop, total)
    idx = np.arange(start, stop, dtype=np.int64)
    digits = np.empty((idx.size, n), dtype=np.int64)
    for pos in range(n - 1, -1, -1):
        digits[:, pos] = idx % k
        idx //= k
    return digits


def _check_budget(prior, n):
    total = len(prior.atoms) ** n
    if total > ENUMERATION_BUDGET:
        raise ResourceError(
            f"{len(prior.atoms)}^{n} = {total} configurations exceed the enumeration "
            f"budget of {ENUMERATION_BUDGET:.0e}")
    return total


class BatchStats(NamedTuple):
    """Per-instance posterior statistics (first axis indexes instances)."""

    log_z: np.ndarray
    mean_x: np.ndarray
    second_x: np.ndarray
    q1: np.ndarray
    q2: np.ndarray


def _block_stats(instances, t, R, keep_probs):
    inst0 = instances[0]
    n, prior = inst0.n, inst0.prior
    total = _check_budget(prior, n)
    vals = prior.values
    logp = np.asarray(prior.log_weights)
    s = math.sqrt((1.0 - t) * inst0.lam / n)
    sqrt_r = math.sqrt(R)
    b = len(instances)
    w = np.stack([inst.data_at(t) for inst in instances])
    sig = np.stack([inst.signal for inst in instances])
    y = sqrt_r * sig + np.stack([inst.scalar_noise for inst in instances])

    m = np.full(b, -np.inf)
    s0 = np.zeros(b)
    sx = np.zeros((b, n))
    sxx = np.zeros((b, n, n))
    sq = np.zeros(b)
    sq2 = np.zeros(b)
    probs = [] if keep_probs else None
    for start in range(0, total, _CONFIG_CHUNK):
        dig = configurations(prior, n, start, start + _CONFIG_CHUNK)
        c = vals[dig]
        lp = logp[dig].sum(axis=1)
        c2 = (c * c).sum(axis=1)
        c4 = (c ** 4).sum(axis=1)
        quad = np.einsum("kn,bnm,km->bk", c, w, c, optimize=True)
        logw = (lp - 0.25 * s * s * (c2 * c2 - c4) - 0.5 * R * c2)[None, :] \
            + 0.5 * s * quad + sqrt_r * (y @ c.T)
        m_new = np.maximum(m, logw.max(axis=1))
        shrink = np.exp(m - m_new)
        e = np.exp(logw - m_new[:, None])
        q = sig @ c.T / n
        s0 = s0 * shrink + e.sum(axis=1)
        sx = sx * shrink[:, None] + e @ c
        sxx = sxx * shrink[:, None, None] + np.einsum("bk,ki,kj->bij", e, c, c, optimize=True)
        sq = sq * shrink + (e * q).sum(axis=1)
        sq2 = sq2 * shrink + (e * q * q).sum(axis=1)
        m = m_new
        if keep_probs:
            probs.append(logw)
    stats = BatchStats(m + np.log(s0), sx / s0[:, None], sxx / s0[:, None, None], sq / s0, sq2 / s0)
    if keep_probs:
        logw = np.concatenate(probs, axis=1)
        return stats, np.exp(logw - stats.log_z[:, None])
    return stats, None


def posterior_batch(instances, interp: InterpolationState | None = None,
                    threads: int = 1) -> BatchStats:
    """Exact posterior statistics for a batch of instances sharing n, prior and lambda.

    ``interp=None`` is the plain model (t = 0, no scalar channel). Results
    depend only on the instances, not on ``threads`` or blocking.
    """
    if not instances:
        raise ParameterError("empty instance batch")
    inst0 = instances[0]
    for inst in instances:
        if inst.n != inst0.n or inst.prior != inst0.prior or inst.lam != inst0.lam:
            raise ParameterError("all instances in a batch must share n, prior and lambda")
    t, R = (0.0, 0.0) if interp is None else (interp.t, interp.R)
    k = min(len(inst0.prior.atoms) ** inst0.n, _CONFIG_CHUNK)
    step = max(1, _WORK_LIMIT // (k * inst0.n * inst0.n))
    blocks = [instances[i:i + step] for i in range(0, len(instances), step)]

    def run(block):
        return _block_stats(block, t, R, False)[0]

    if threads and threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(blk) for blk in blocks]
    return BatchStats(*(np.concatenate(arrs) for arrs in zip(*parts)))


@dataclass(frozen=True)
class PosteriorSummary:
    mean_overlap: float
    mean_overlap_sq: float
    vector_mmse: float
    matrix_mmse: float
    matrix_mmse_offdiag: float
    free_energy: float
    posterior_mean: np.ndarray = field(repr=False)
    per_config_posterior: np.ndarray | None = field(default=None, repr=False)


def _errors(inst, mean_x, second_x):
    n = inst.n
    x = inst.signal
    vec = float(np.sum((x - mean_x) ** 2) / n)
    diff = np.outer(x, x) - second_x
    full = float(np.sum(diff ** 2) / n ** 2)
    off = full - float(np.sum(np.diag(diff) ** 2) / n ** 2)
    return vec, full, off


def exact_posterior(inst: FiniteInstance, interp: InterpolationState | None = None,
                    keep_probs: bool = False) -> PosteriorSummary:
    """All posterior summaries of one instance, by enumeration.

    Overlaps are <Q> and <Q^2> for Q = x.X/n. The matrix MMSE is
    |XX^T - <xx^T>|_F^2 / n^2 (``matrix_mmse_offdiag`` drops the diagonal),
    the vector MMSE |X - <x>|^2 / n and the free energy -ln Z / n.
    """
    t, R = (0.0, 0.0) if interp is None else (interp.t, interp.R)
    stats, probs = _block_stats([inst], t, R, keep_probs)
    vec, full, off = _errors(inst, stats.mean_x[0], stats.second_x[0])
    return PosteriorSummary(
        mean_overlap=float(stats.q1[0]),
        mean_overlap_sq=float(stats.q2[0]),
        vector_mmse=vec,
        matrix_mmse=full,
        matrix_mmse_offdiag=off,
        free_energy=float(-stats.log_z[0] / inst.n),
        posterior_mean=stats.mean_x[0],
        per_config_posterior=None if probs is None else probs[0],
    )


# ---------------------------------------------------------------- Monte Carlo helpers

def jackknife(stat: Callable[..., float], columns, n_blocks: int = 20) -> tuple[float, float]:
    """Full-sample estimate of ``stat(*means)`` and its delete-one-block jackknife error.

    ``columns`` are arrays whose first axis indexes disorder samples; ``stat``
    receives their sample means.
    """
    columns = [np.asarray(c, dtype=float) for c in columns]
    n = len(columns[0])
    est = float(stat(*(c.mean(axis=0) for c in columns)))
    g = min(n_blocks, n)
    if g < 2:
        return est, math.nan
    edges = np.linspace(0, n, g + 1).astype(int)
    sums = [c.sum(axis=0) for c in columns]
    reps = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        means = [(tot - c[lo:hi].sum(axis=0)) / (n - (hi - lo)) for tot, c in zip(sums, columns)]
        reps.append(stat(*means))
    reps = np.asarray(reps)
    return est, float(math.sqrt((g - 1) / g * np.sum((reps - reps.mean()) ** 2)))


def _mi_samples(stats, n, lam, m2, t=0.0, R=0.0):
    """Per-instance i_n(t, eps) = -ln Z / n + (n-1)/n m2^2 lam (1-t)/4 + m2 R/2."""
    return -stats.log_z / n + (n - 1) / n * m2 ** 2 * lam * (1 - t) / 4 + m2 * R / 2


def _validate(n, prior, lam, n_disorder, min_disorder=2):
    _check_finite_prior(prior)
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not (math.isfinite(lam) and lam >= 0):
        raise ParameterError("lambda must be finite and >= 0")
    if n_disorder < min_disorder:
        raise ParameterError(f"n_disorder must be >= {min_disorder}")
    _check_budget(prior, n)


class Estimate(NamedTuple):
    value: float
    std_err: float


def mutual_information_mc(n: int, prior: Prior, lam: float, n_disorder: int, seed: int,
                          threads: int = 1) -> Estimate:
    """Disorder average of the exact I(X; W)/n with its jackknife error."""
    _validate(n, prior, lam, n_disorder)
    if n == 1:
        return Estimate(0.0, 0.0)
    _, m2, _ = moments(prior)
    stats = posterior_batch(sample_batch(n, prior, lam, n_disorder, seed), threads=threads)
    return Estimate(*jackknife(lambda a: a, [_mi_samples(stats, n, lam, m2)]))


class NishimoriResult(NamedTuple):
    violation: float
    std_err: float
    lhs: float
    rhs: float


def nishimori_check(inst_batch, interp: InterpolationState | None = None) -> NishimoriResult:
    """Disorder average of |<x>|^2 - X.<x>; only its mean vanishes, not each term."""
    if len(inst_batch) < 2:
        raise ParameterError("need at least two instances")
    stats = posterior_batch(inst_batch, interp)
    sig = np.stack([inst.signal for inst in inst_batch])
    lhs = np.sum(stats.mean_x ** 2, axis=1)
    rhs = np.sum(sig * stats.mean_x, axis=1)
    d = lhs - rhs
    return NishimoriResult(abs(float(d.mean())), float(d.std(ddof=1) / math.sqrt(len(d))),
                           float(lhs.mean()), float(rhs.mean()))


class OverlapFluctuation(NamedTuple):
    thermal_var: float
    quenched_var: float


def overlap_fluctuation(inst_batch, interp: InterpolationState | None = None) -> OverlapFluctuation:
    """E<(Q - <Q>)^2> and E[(<Q> - E<Q>)^2]."""
    if not inst_batch:
        raise ParameterError("empty instance batch")
    stats = posterior_batch(inst_batch, interp)
    thermal = float(np.mean(np.maximum(stats.q2 - stats.q1 ** 2, 0.0)))
    quenched = float(np.var(stats.q1))
    return OverlapFluctuation(thermal, quenched)


# ---------------------------------------------------------------- interpolation checks

def _check_sn(s_n):
    if not 0.0 < s_n < 0.5:
        raise ParameterError("s_n must lie in (0, 1/2)")


class BoundaryCheck(NamedTuple):
    gap_t0: float
    gap_t1: float
    mc_err_t0: float
    mc_err_t1: float
    c_emp: float


def boundary_values_check(n: int, prior: Prior, lam: float, s_n: float, n_disorder: int,
                          seed: int, q_const: float | None = None, epsilon: float | None = None,
                          threads: int = 1) -> BoundaryCheck:
    """Gaps of the interpolating mutual information at t=0 and t=1 for a constant q-path.

    gap_t0 = |i_n(0, eps) - I/n| and gap_t1 = |i_n(1, eps) - I_scalar(lam q)|,
    both with common random numbers. ``c_emp`` is the largest gap over
    rho s_n.
    """
    _validate(n, prior, lam, n_disorder)
    _check_sn(s_n)
    _, m2, _ = moments(prior)
    q = 0.5 * prior.rho if q_const is None else float(q_const)
    if not 0.0 <= q <= m2:
        raise ParameterError("q_const must lie in [0, rho]")
    eps = s_n if epsilon is None else float(epsilon)
    batch = sample_batch(n, prior, lam, n_disorder, seed)
    plain = _mi_samples(posterior_batch(batch, threads=threads), n, lam, m2)
    st0 = InterpolationState.constant_path(0.0, eps, s_n, lam, q)
    st1 = InterpolationState.constant_path(1.0, eps, s_n, lam, q)
    i0 = _mi_samples(posterior_batch(batch, st0, threads), n, lam, m2, 0.0, st0.R)
    i1 = _mi_samples(posterior_batch(batch, st1, threads), n, lam, m2, 1.0, st1.R)
    gap0, err0 = jackknife(lambda a: abs(a), [i0 - plain])
    target = channel.mutual_information(prior, lam * q)
    gap1, err1 = jackknife(lambda a: abs(a - target), [i1])
    return BoundaryCheck(gap0, gap1, err0, err1, max(gap0, gap1) / (prior.rho * s_n))


class SumRuleCheck(NamedTuple):
    residual: float
    remainder_r1: float
    remainder_r2: float
    remainder_r3: float
    mc_err: float
    lhs: float
    rhs: float
    c_emp: float


def sum_rule_check(n: int, prior: Prior, lam: float, q_const: float, s_n: float,
                   n_disorder: int, n_time_nodes: int = 16, seed: int = 0,
                   epsilon: float | None = None, threads: int = 1) -> SumRuleCheck:
    """Compare I/n with i_pot(q) + lam/4 (R1 - R2 - R3) along a constant q-path.

    R1 = int (q - mean q)^2 (zero here), R2 = int E<(Q - E<Q>_t)^2>_t and
    R3 = int (q - E<Q>_t)^2, with the time integrals done by Gauss-Legendre
    quadrature. The same disorder samples are reused at every time node and
    for the left-hand side, and the residual error is a block jackknife over
    them. ``c_emp`` is the constant c needed for
    |residual| <= c (rho s_n + lam/n) + 3 mc_err.
    """
    _validate(n, prior, lam, n_disorder)
    _check_sn(s_n)
    _, m2, _ = moments(prior)
    if not 0.0 <= q_const <= m2:
        raise ParameterError("q_const must lie in [0, rho]")
    if n_time_nodes < 1:
        raise ParameterError("n_time_nodes must be >= 1")
    eps = s_n if epsilon is None else float(epsilon)
    q = float(q_const)
    x, w = np.polynomial.legendre.leggauss(n_time_nodes)
    ts, ws = 0.5 * (x + 1.0), 0.5 * w
    batch = sample_batch(n, prior, lam, n_disorder, seed)
    mi = _mi_samples(posterior_batch(batch, threads=threads), n, lam, m2)
    q1 = np.empty((n_disorder, n_time_nodes))
    q2 = np.empty((n_disorder, n_time_nodes))
    for k, t in enumerate(ts):
        st = posterior_batch(batch, InterpolationState.constant_path(float(t), eps, s_n, lam, q), threads)
        q1[:, k], q2[:, k] = st.q1, st.q2
    i_pot = 0.25 * lam * (q - m2) ** 2 + channel.mutual_information(prior, lam * q)
    r1 = 0.0

    def parts(mi_m, q1_m, q2_m):
        r2 = float(np.dot(ws, q2_m - q1_m ** 2))
        r3 = float(np.dot(ws, (q - q1_m) ** 2))
        return mi_m, r2, r3

    def residual(mi_m, q1_m, q2_m):
        lhs, r2, r3 = parts(mi_m, q1_m, q2_m)
        return lhs - (i_pot + 0.25 * lam * (r1 - r2 - r3))

    res, err = jackknife(residual, [mi, q1, q2])
    lhs, r2, r3 = parts(mi.mean(), q1.mean(axis=0), q2.mean(axis=0))
    rhs = i_pot + 0.25 * lam * (r1 - r2 - r3)
    c_emp = max(0.0, abs(res) - 3 * err) / (prior.rho * s_n + lam / n)
    return SumRuleCheck(res, r1, r2, r3, err, lhs, rhs, c_emp)


class ODEPath(NamedTuple):
    R_path: list
    q_path: list


def _euler(batch, lam, m2, eps, s_n, n_steps, threads):
    dt = 1.0 / n_steps
    R = eps
    r_path, q_path = [(0.0, R)], []
    for k in range(n_steps):
        t = k * dt
        st = InterpolationState(t, eps, s_n, R)
        q = float(np.clip(posterior_batch(batch, st, threads).q1.mean(), 0.0, m2))
        q_path.append((t, q))
        R = R + lam * q * dt
        r_path.append(((k + 1) * dt, R))
    return ODEPath(r_path, q_path)


def adaptive_ode_solve(n: int, prior: Prior, lam: float, epsilon: float, n_steps: int = 32,
                       n_disorder: int = 200, seed: int = 0, s_n: float | None = None,
                       threads: int = 1) -> ODEPath:
    """Explicit Euler for R'(t) = lam E<Q>_{t, R(t)}, R(0) = eps.

    The drift is the disorder-averaged exact overlap, clipped to [0, rho],
    so that R = eps + lam * int q with q the emitted q-path.
    """
    _validate(n, prior, lam, n_disorder)
    if not epsilon > 0:
        raise ParameterError("epsilon must be > 0")
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    s_n = epsilon if s_n is None else s_n
    _, m2, _ = moments(prior)
    batch = sample_batch(n, prior, lam, n_disorder, seed)
    return _euler(batch, lam, m2, epsilon, s_n, n_steps, threads)


def epsilon_sensitivity(n: int, prior: Prior, lam: float, s_n: float, n_steps: int = 32,
                        n_disorder: int = 200, seed: int = 0, n_blocks: int = 10,
                        threads: int = 1) -> Estimate:
    """(R(1; 2 s_n) - R(1; s_n)) / s_n with common disorder, and its jackknife error."""
    _validate(n, prior, lam, n_disorder, min_disorder=max(2, n_blocks))
    _check_sn(s_n)
    _, m2, _ = moments(prior)
    batch = sample_batch(n, prior, lam, n_disorder, seed)

    def slope(sub):
        lo = _euler(sub, lam, m2, s_n, s_n, n_steps, threads).R_path[-1][1]
        hi = _euler(sub, lam, m2, 2 * s_n, s_n, n_steps, threads).R_path[-1][1]
        return (hi - lo) / s_n

    est = slope(batch)
    edges = np.linspace(0, n_disorder, n_blocks + 1).astype(int)
    reps = np.array([slope(batch[:lo] + batch[hi:]) for lo, hi in zip(edges[:-1], edges[1:])])
    g = n_blocks
    err = math.sqrt((g - 1) / g * np.sum((reps - reps.mean()) ** 2))
    return Estimate(float(est), float(err))


# ---------------------------------------------------------------- check reports

CHECK_COLUMNS = ("check", "parameters", "statistic", "value", "std_err", "passed")


@dataclass(frozen=True)
class CheckRow:
    check: str
    parameters: dict
    statistic: str
    value: float
    std_err: float
    passed: bool

    def as_record(self) -> dict:
        return {
            "check": self.check,
            "parameters": json.dumps(self.parameters, sort_keys=True),
            "statistic": self.statistic,
            "value": self.value,
            "std_err": self.std_err,
            "passed": self.passed,
        }
