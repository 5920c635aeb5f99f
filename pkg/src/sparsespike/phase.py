"""Phase-transition diagnostics: thresholds and limiting curves versus gamma.

For the Wigner model gamma = lam / lam_c; for the spiked covariance model
gamma = (lam / lam_c)^2 (see ``wishart_curve``). Both put the transition at
gamma = 1.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .channel import ChannelSettings
from .exceptions import DomainError, ParameterError, SearchError, SparseSpikeError
from .potential import Model, WignerSpec, WishartSpec, wishart_lambda
from .prior import bernoulli_rademacher, make_prior, moments, standard_gaussian
from .varsolve import solve_wigner, solve_wishart

WIGNER_COLUMNS = ("gamma", "lambda", "rho", "rescaled_mi", "matrix_mmse_rescaled",
                  "argmin_q_over_rho", "near_degenerate")
WISHART_COLUMNS = ("gamma", "lambda", "q_u_star", "q_v_star", "mmse_vv_rescaled",
                   "mmse_uu_rescaled", "mmse_uv_rescaled")


@dataclass(frozen=True)
class PhaseCurveRow:
    gamma: float
    lam: float
    rho: float
    rescaled_mi: float = math.nan
    matrix_mmse_rescaled: float = math.nan
    argmin_q_over_rho: float = math.nan
    near_degenerate: bool = False
    error: str | None = None

    def as_record(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


@dataclass(frozen=True)
class WishartMMSERow:
    gamma: float
    lam: float
    q_u_star: float = math.nan
    q_v_star: float = math.nan
    mmse_vv_rescaled: float = math.nan
    mmse_uu_rescaled: float = math.nan
    mmse_uv_rescaled: float = math.nan
    error: str | None = None

    def as_record(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


class Threshold(NamedTuple):
    gamma_c: float
    certificate: tuple[float, float]


def lambda_critical(model, rho: float, alpha: float | None = None) -> float:
    """4|ln rho|/rho (Wigner) or sqrt(4|ln rho| / (alpha rho)) (Wishart)."""
    model = Model(model)
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (0, 1), got {rho!r}")
    if model is Model.WIGNER:
        if alpha is not None:
            raise ParameterError("alpha only applies to the Wishart model")
        return 4.0 * abs(math.log(rho)) / rho
    if alpha is None or not alpha > 0:
        raise ParameterError("Wishart threshold needs alpha > 0")
    return math.sqrt(4.0 * abs(math.log(rho)) / (alpha * rho))


def limiting_rescaled_mi(gamma: float) -> float:
    """Limit of I / (n rho |ln rho|): gamma below the threshold, 1 above it."""
    if gamma < 0:
        raise ParameterError("gamma must be >= 0")
    return min(gamma, 1.0)


def theorem_rate_bound(model, n: int, beta: float) -> float:
    """(ln n)^(1/3) / n^e with e = (1 - 6 beta)/7 (Wigner) or (4 - 12 beta)/18 (Wishart).

    The unknown constant of the bound is left out; the value is only a
    diagnostic of how fast the error bound decays.
    """
    model = Model(model)
    limit = 1 / 6 if model is Model.WIGNER else 1 / 3
    if not 0.0 <= beta < limit:
        raise DomainError(f"beta must lie in [0, {limit:.6g}) for the {model.value} bound")
    if n < 1:
        raise ParameterError("n must be >= 1")
    exponent = (1 - 6 * beta) / 7 if model is Model.WIGNER else (4 - 12 * beta) / 18
    return math.log(n) ** (1 / 3) / n ** exponent


def default_gamma_grid(gamma_min: float = 0.0, gamma_max: float = 2.0, n_points: int = 81,
                       dense: tuple[float, float] = (0.9, 1.1), dense_step: float = 0.005):
    """n_points uniform nodes, merged with a fine grid over the dense window."""
    coarse = np.linspace(gamma_min, gamma_max, n_points)
    lo, hi = max(dense[0], gamma_min), min(dense[1], gamma_max)
    fine = np.arange(round((hi - lo) / dense_step) + 1) * dense_step + lo if hi > lo else []
    grid = np.unique(np.round(np.concatenate([coarse, fine]), 12))
    return [float(g) for g in grid]


def _wigner_row(prior, rho, gamma, settings):
    if gamma < 0:
        raise ParameterError("gamma must be >= 0")
    if gamma == 0:
        return PhaseCurveRow(gamma, 0.0, rho, 0.0, 1.0, 0.0, False)
    lam = gamma * lambda_critical(Model.WIGNER, rho)
    sol = solve_wigner(WignerSpec(prior, lam), settings)
    _, m2, _ = moments(prior)
    q = sol.argmin_q
    return PhaseCurveRow(
        gamma=gamma, lam=lam, rho=rho,
        rescaled_mi=sol.rescaled_value,
        matrix_mmse_rescaled=(m2 ** 2 - q ** 2) / m2 ** 2,
        argmin_q_over_rho=q / rho,
        near_degenerate=sol.near_degenerate,
    )


def _wishart_row(rho_v, alpha, gamma, settings):
    if gamma < 0:
        raise ParameterError("gamma must be >= 0")
    if gamma == 0:
        return WishartMMSERow(gamma, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0)
    lam = wishart_lambda(gamma, rho_v, alpha)
    spec = WishartSpec(standard_gaussian(), bernoulli_rademacher(rho_v), lam, alpha)
    sol = solve_wishart(spec, settings)
    q_u, q_v = sol.argmin_q
    return WishartMMSERow(
        gamma=gamma, lam=lam, q_u_star=q_u, q_v_star=q_v,
        mmse_vv_rescaled=(rho_v ** 2 - q_v ** 2) / rho_v ** 2,
        mmse_uu_rescaled=1.0 - q_u ** 2,
        mmse_uv_rescaled=(rho_v - q_u * q_v) / rho_v,
    )


def _run_rows(fn, gammas, failed_row, threads, progress):
    def one(g):
        try:
            return fn(g)
        except SparseSpikeError as exc:
            return failed_row(g, f"{type(exc).__name__}: {exc}")

    gammas = [float(g) for g in gammas]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = []
            for i, row in enumerate(pool.map(one, gammas)):
                rows.append(row)
                if progress:
                    progress(i + 1, len(gammas))
            return rows
    rows = []
    for i, g in enumerate(gammas):
        rows.append(one(g))
        if progress:
            progress(i + 1, len(gammas))
    return rows


def wigner_curve(prior_family: str, rho: float, gamma_grid, settings: ChannelSettings | None = None,
                 threads: int = 1, progress=None) -> list[PhaseCurveRow]:
    """One row per gamma, solving the Wigner problem at lam = gamma lam_c(rho).

    The matrix MMSE uses the overlap identification E<Q^2> ~ q*^2, normalized
    by E[X^2]^2 (= rho^2 for the binary priors). Failed rows carry their error
    and NaN values; ``pool.map`` keeps grid order whatever the thread count.
    """
    if prior_family.lower() not in ("ber", "bernoulli", "berrad", "bernoulli_rademacher", "ber-rad"):
        raise ParameterError("wigner_curve supports the ber and berrad families")
    prior = make_prior(prior_family, rho)
    lambda_critical(Model.WIGNER, rho)
    return _run_rows(
        lambda g: _wigner_row(prior, rho, g, settings), gamma_grid,
        lambda g, err: PhaseCurveRow(g, g * lambda_critical(Model.WIGNER, rho), rho, error=err),
        threads, progress)


def wishart_curve(rho_v: float, alpha: float, gamma_grid, settings: ChannelSettings | None = None,
                  threads: int = 1, progress=None) -> list[WishartMMSERow]:
    """Spiked covariance model: Gaussian U, Bernoulli-Rademacher V.

    Here gamma enters through lam = sqrt(4 gamma |ln rho_v| / (alpha rho_v)),
    i.e. gamma = (lam / lam_c)^2; the transition still sits at gamma = 1 and
    the leading-order mutual information reads sqrt(alpha gamma).
    """
    lambda_critical(Model.WISHART, rho_v, alpha)
    return _run_rows(
        lambda g: _wishart_row(rho_v, alpha, g, settings), gamma_grid,
        lambda g, err: WishartMMSERow(g, wishart_lambda(g, rho_v, alpha), error=err),
        threads, progress)


def _argmin_ratio(model, prior_family, rho, alpha, gamma, settings):
    if model is Model.WIGNER:
        return _wigner_row(make_prior(prior_family, rho), rho, gamma, settings).argmin_q_over_rho
    return _wishart_row(rho, alpha, gamma, settings).q_v_star / rho


def locate_threshold(model, rho: float, alpha: float | None = None,
                     bracket: tuple[float, float] = (0.5, 1.5), prior_family: str = "ber",
                     tol: float = 1e-4, settings: ChannelSettings | None = None) -> Threshold:
    """Bisect gamma until the jump of argmin q / rho across 1/2 is bracketed within ``tol``."""
    model = Model(model)
    lo, hi = (float(b) for b in bracket)
    if not 0 < lo < hi:
        raise ParameterError("bracket must satisfy 0 < lo < hi")
    lambda_critical(model, rho, alpha if model is Model.WISHART else None)
    r_lo = _argmin_ratio(model, prior_family, rho, alpha, lo, settings)
    r_hi = _argmin_ratio(model, prior_family, rho, alpha, hi, settings)
    trace = [(lo, r_lo), (hi, r_hi)]
    if not (r_lo < 0.5 <= r_hi):
        raise SearchError("no jump of argmin q/rho across 1/2 inside the bracket", {"trace": trace})
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r_mid = _argmin_ratio(model, prior_family, rho, alpha, mid, settings)
        trace.append((mid, r_mid))
        if r_mid < 0.5:
            lo, r_lo = mid, r_mid
        else:
            hi, r_hi = mid, r_mid
    return Threshold(0.5 * (lo + hi), (r_lo, r_hi))
