"""Variational problems behind the asymptotic mutual information.

``solve_wigner`` minimizes the 1D Wigner potential over q in [0, rho];
``solve_wishart`` computes inf over q_u of sup over q_v of the Wishart
potential. Near the transition the potentials have two competing minima at
very different scales (q of order rho^2 and q close to rho), so both
solvers start from a mixed log/linear scan and refine every local optimum
found, reporting all of them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import channel
from .channel import ChannelSettings
from .exceptions import ParameterError
from .potential import (
    Model,
    WignerSpec,
    WishartSpec,
    wigner_potential,
    wigner_potential_many,
    wigner_stationarity_residual,
)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
SCAN_NODES = 512
DEGENERACY_TOL = 1e-3
BARRIER_RTOL = 1e-9


@dataclass(frozen=True)
class VariationalSolution:
    model: Model
    value: float
    argmin_q: float | tuple[float, float]
    rescaled_value: float
    local_optima: tuple
    near_degenerate: bool

    def to_dict(self) -> dict:
        d = {
            "model": self.model.value,
            "value": self.value,
            "rescaled_value": self.rescaled_value,
            "near_degenerate": self.near_degenerate,
        }
        if self.model is Model.WIGNER:
            d["argmin_q"] = self.argmin_q
            d["local_optima"] = [{"q": q, "value": v} for q, v in self.local_optima]
        else:
            d["argmin_q_u"], d["argsup_q_v"] = self.argmin_q
            d["local_optima"] = [{"q_u": qu, "q_v": qv, "value": v}
                                 for qu, qv, v in self.local_optima]
        return d


class FixedPoint(NamedTuple):
    q_star: float
    iterations: int


def scan_nodes(upper: float, n_nodes: int = SCAN_NODES) -> np.ndarray:
    """0, then log-spaced nodes up to upper/2, then linear nodes up to upper.

    The log part reaches down to ``upper * 1e-3 * min(upper, 1e-3)``, below
    the order-upper^2 scale of the low-overlap minimum.
    """
    n_log = (n_nodes - 1) // 2
    n_lin = n_nodes - 1 - n_log
    lo = upper * 1e-3 * min(upper, 1e-3)
    log_part = np.geomspace(lo, upper / 2, n_log)
    lin_part = np.linspace(upper / 2, upper, n_lin + 1)[1:]
    return np.concatenate([[0.0], log_part, lin_part])


def golden_section(f, a, b, tol, fa=None, fb=None, max_iter=300):
    """Minimize a unimodal ``f`` on [a, b]; returns the best (x, f(x)) seen.

    The bracket ends take part in the comparison so an endpoint minimum is
    returned exactly.
    """
    fa = f(a) if fa is None else fa
    fb = f(b) if fb is None else fb
    best = min((fa, a), (fb, b))
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    best = min(best, (fc, c), (fd, d))
    return best[1], best[0]


def _golden_max_many(h, template, hi, tol):
    """Elementwise maximize ``h(qv)`` (vectorized like ``template``) on [0, hi]."""
    n_iter = max(1, math.ceil(math.log(tol / hi) / math.log(INV_PHI)))
    a = np.zeros_like(template)
    b = np.full_like(template, hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    hc, hd = h(c), h(d)
    for _ in range(n_iter):
        left = hc >= hd
        # keep [a, d] where the max is on the left, else [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - INV_PHI * (b - a)
        new_d = a + INV_PHI * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        probe = np.where(left, new_c, new_d)
        hp = h(probe)
        hc, hd = np.where(left, hp, hd), np.where(left, hc, hp)
        c, d = c_next, d_next
    cands = np.stack([np.zeros_like(a), np.full_like(a, hi), c, d])
    vals = np.stack([h(cands[0]), h(cands[1]), hc, hd])
    k = np.argmax(vals, axis=0)
    idx = np.arange(a.size)
    return cands[k, idx], vals[k, idx]


def _local_min_indices(v):
    n = len(v)
    out = []
    for i in range(n):
        left_ok = i == 0 or v[i] < v[i - 1]
        right_ok = i == n - 1 or v[i] <= v[i + 1]
        if i == n - 1:
            left_ok = n == 1 or v[i] < v[i - 1]
        if left_ok and right_ok:
            out.append(i)
    return out


def _basin_minima(values, value_tol):
    """Scan-level local minima, one per basin (lowest node kept).

    Neighbouring minima whose separating maximum does not rise more than
    ``value_tol`` above the higher of the two are rounding wiggles of a
    single basin and are refined only once.
    """
    idx = _local_min_indices(values)
    groups = []
    for i in idx:
        if groups:
            j = groups[-1][-1]
            barrier = values[j:i + 1].max()
            if barrier <= max(values[i], values[j]) + value_tol:
                groups[-1].append(i)
                continue
        groups.append([i])
    return [min(g, key=lambda k: values[k]) for g in groups]


def _merge_basins(cands, nodes, values, key_tol, value_tol):
    """Merge refined minima that are not separated by a genuine barrier.

    In flat stretches the scan sees rounding-level wiggles as local minima;
    two candidates only count as distinct when the scanned potential between
    them rises more than ``value_tol`` above the higher of the two. Inside a
    basin, any candidate within ``value_tol`` of the lowest is acceptable and
    the one listed first in ``cands`` is kept.
    """
    order = sorted(range(len(cands)), key=lambda k: cands[k][0])
    basins = []
    for k in order:
        c = cands[k]
        if basins:
            prev = basins[-1][-1][1]
            between = values[(nodes > prev[0]) & (nodes < c[0])]
            barrier = between.max() if between.size else -math.inf
            if abs(c[0] - prev[0]) <= key_tol or barrier <= max(prev[-1], c[-1]) + value_tol:
                basins[-1].append((k, c))
                continue
        basins.append([(k, c)])
    kept = []
    for basin in basins:
        low = min(c[-1] for _, c in basin)
        kept.append(min((kc for kc in basin if kc[1][-1] <= low + value_tol), key=lambda kc: kc[0])[1])
    return sorted(kept, key=lambda c: (c[-1], c[0]))


def _value_tol(scale, values):
    return BARRIER_RTOL * max(scale, float(np.max(np.abs(values))))


def _near_degenerate(kept, scale):
    if len(kept) < 2:
        return False
    return abs(kept[1][-1] - kept[0][-1]) < DEGENERACY_TOL * scale


def _stationary_candidates(spec, nodes, values, resid, settings):
    """Minima located as -/+ sign changes of the stationarity residual.

    Where the potential is flat to rounding (the low-overlap minimum sits at
    q ~ rho^2) values cannot locate the minimizer but the residual, built
    from the MMSE, still can.
    """
    def r(x):
        return wigner_stationarity_residual(spec, x, settings)

    out = []
    if resid[0] >= 0.0:
        out.append((float(nodes[0]), float(values[0])))
    if resid[-1] <= 0.0:
        out.append((float(nodes[-1]), float(values[-1])))
    for i in np.flatnonzero((resid[:-1] < 0.0) & (resid[1:] > 0.0)):
        root = brentq(r, nodes[i], nodes[i + 1], xtol=1e-300,
                      rtol=4 * np.finfo(float).eps, maxiter=200)
        out.append((float(root), wigner_potential(spec, root, settings)))
    return out


def solve_wigner(spec: WignerSpec, settings: ChannelSettings | None = None) -> VariationalSolution:
    rho = spec.rho
    nodes = scan_nodes(rho)
    mi, mm, _, _ = channel.channel_arrays(spec.prior, spec.lam * nodes, settings)
    values = 0.25 * spec.lam * (nodes - rho) ** 2 + mi
    resid = 0.5 * spec.lam * (nodes - rho + mm)
    tol = 1e-12 * rho
    scale = spec.scale
    value_tol = _value_tol(scale, values)

    def f(q):
        return wigner_potential(spec, q, settings)

    # stationary roots come first so that, inside one basin, they win ties
    # against golden-section points that only differ by rounding
    cands = _stationary_candidates(spec, nodes, values, resid, settings)
    for i in _basin_minima(values, value_tol):
        lo_i, hi_i = max(i - 1, 0), min(i + 1, len(nodes) - 1)
        q, v = golden_section(f, nodes[lo_i], nodes[hi_i], tol,
                              fa=values[lo_i], fb=values[hi_i])
        if values[i] < v:
            q, v = nodes[i], values[i]
        cands.append((float(q), float(v)))
    kept = _merge_basins(cands, nodes, values, 1e-9 * rho, value_tol)
    q_best, v_best = kept[0]
    return VariationalSolution(
        model=Model.WIGNER,
        value=v_best,
        argmin_q=q_best,
        rescaled_value=v_best / scale if scale > 0 else math.nan,
        local_optima=tuple(sorted(kept)),
        near_degenerate=_near_degenerate(kept, scale),
    )


class _WishartOuter:
    """q_u -> sup over q_v of the Wishart potential, vectorized in q_u."""

    def __init__(self, spec, settings):
        self.spec = spec
        self.settings = settings
        self.la = spec.lam * spec.alpha
        self.tol = 1e-12 * spec.rho_v

    def _u_term(self, snr):
        if self.spec.prior_u.is_gaussian:
            return 0.5 * np.log1p(snr)
        return channel.channel_arrays(self.spec.prior_u, snr.ravel(), self.settings)[0].reshape(snr.shape)

    def __call__(self, q_u):
        spec = self.spec
        q_u = np.atleast_1d(np.asarray(q_u, dtype=float))
        slope = 0.5 * self.la * (q_u - spec.rho_u)

        def h(q_v):
            return slope * q_v + self._u_term(self.la * q_v)

        q_v, hv = _golden_max_many(h, q_u, spec.rho_v, self.tol)
        i_v = channel.channel_arrays(spec.prior_v, spec.lam * q_u, self.settings)[0]
        value = hv - slope * spec.rho_v + spec.alpha * i_v
        return value, q_v


def wishart_inner_sup(spec: WishartSpec, q_u, settings: ChannelSettings | None = None):
    """(sup value, argsup q_v) over q_v in [0, rho_v] for each q_u."""
    value, q_v = _WishartOuter(spec, settings)(q_u)
    return value, q_v


def solve_wishart(spec: WishartSpec, settings: ChannelSettings | None = None) -> VariationalSolution:
    outer = _WishartOuter(spec, settings)
    nodes = scan_nodes(spec.rho_u)
    values, qvs = outer(nodes)
    tol = 1e-12 * spec.rho_u
    scale = spec.scale
    value_tol = _value_tol(scale, values)

    def g(q):
        return float(outer([q])[0][0])

    cands = []
    for i in _basin_minima(values, value_tol):
        lo_i, hi_i = max(i - 1, 0), min(i + 1, len(nodes) - 1)
        q, v = golden_section(g, nodes[lo_i], nodes[hi_i], tol,
                              fa=values[lo_i], fb=values[hi_i])
        if values[i] < v:
            q, v = nodes[i], values[i]
        v_arr, qv_arr = outer([q])
        cands.append((float(q), float(qv_arr[0]), float(v_arr[0])))
    kept = _merge_basins(cands, nodes, values, 1e-9 * spec.rho_u, value_tol)
    qu_best, qv_best, v_best = kept[0]
    return VariationalSolution(
        model=Model.WISHART,
        value=v_best,
        argmin_q=(qu_best, qv_best),
        rescaled_value=v_best / scale if scale > 0 else math.nan,
        local_optima=tuple(sorted(kept)),
        near_degenerate=_near_degenerate(kept, scale),
    )


def fixed_point_iterate(spec: WignerSpec, q0: float, damping: float = 1.0,
                        settings: ChannelSettings | None = None,
                        max_iter: int = 10_000) -> FixedPoint:
    """Damped iteration q <- (1 - d) q + d (rho - mmse(lam q)).

    Stops when |dq| <= 1e-12 rho. Non-convergence is reported through a
    RuntimeWarning together with the last iterate.
    """
    if not 0.0 <= q0 <= spec.rho:
        raise ParameterError(f"q0 must lie in [0, {spec.rho}]")
    if not 0.0 < damping <= 1.0:
        raise ParameterError("damping must lie in (0, 1]")
    q = float(q0)
    tol = 1e-12 * spec.rho
    for it in range(1, max_iter + 1):
        target = spec.rho - channel.mmse(spec.prior, spec.lam * q, settings)
        new = min(max((1.0 - damping) * q + damping * target, 0.0), spec.rho)
        if abs(new - q) <= tol:
            return FixedPoint(new, it)
        q = new
    warnings.warn(f"fixed point iteration did not converge in {max_iter} steps", RuntimeWarning,
                  stacklevel=2)
    return FixedPoint(q, max_iter)
