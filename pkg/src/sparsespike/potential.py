"""Replica-symmetric potentials for the sparse spiked Wigner and Wishart models.

Wigner:   i(q)      = lam/4 (q - rho)^2 + I(X; sqrt(lam q) X + Z),    q in [0, rho]
Wishart:  i(qu, qv) = lam alpha/2 (qu - rho_u)(qv - rho_v)
                      + I(U; sqrt(lam alpha qv) U + Z) + alpha I(V; sqrt(lam qu) V + Z)

Both are evaluated through the scalar channel module. Arguments outside the
domain box raise DomainError rather than being clamped.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import channel
from .channel import ChannelSettings
from .exceptions import DomainError, ParameterError
from .prior import Prior


class Model(str, enum.Enum):
    WIGNER = "wigner"
    WISHART = "wishart"


def _check_rho(rho, name="rho"):
    if not 0.0 < rho <= 1.0:
        raise ParameterError(f"{name} must lie in (0, 1], got {rho!r}")


def wigner_lambda(gamma: float, rho: float) -> float:
    """lam = 4 gamma |ln rho| / rho."""
    return 4.0 * gamma * abs(math.log(rho)) / rho


def wishart_lambda(gamma: float, rho_v: float, alpha: float) -> float:
    """lam = sqrt(4 gamma |ln rho_v| / (alpha rho_v))."""
    return math.sqrt(4.0 * gamma * abs(math.log(rho_v)) / (alpha * rho_v))


@dataclass(frozen=True)
class ScalingRegime:
    """rho_n = Theta(n^-beta) with lam indexed by gamma = lam / lam_c."""

    beta: float
    gamma: float
    model: Model = Model.WIGNER

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.beta < 0 or not self.gamma > 0:
            raise ParameterError("need beta >= 0 and gamma > 0")
        limit = 1 / 6 if self.model is Model.WIGNER else 1 / 3
        if self.beta >= limit:
            warnings.warn(
                f"beta={self.beta} outside the range beta < {limit:.4g} covered by the "
                f"{self.model.value} error bound", stacklevel=2)

    def lam(self, rho: float, alpha: float | None = None) -> float:
        if self.model is Model.WIGNER:
            return wigner_lambda(self.gamma, rho)
        if alpha is None:
            raise ParameterError("Wishart scaling needs alpha")
        return wishart_lambda(self.gamma, rho, alpha)


@dataclass(frozen=True)
class WignerSpec:
    prior: Prior
    lam: float
    rho: float | None = None

    def __post_init__(self):
        rho = self.prior.rho if self.rho is None else float(self.rho)
        object.__setattr__(self, "rho", rho)
        _check_rho(rho)
        if abs(rho - self.prior.rho) > 1e-12 * max(1.0, rho):
            raise ParameterError(f"rho={rho!r} does not match prior.rho={self.prior.rho!r}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"lambda must be finite and > 0, got {self.lam!r}")

    @classmethod
    def from_gamma(cls, prior: Prior, gamma: float) -> WignerSpec:
        return cls(prior, wigner_lambda(gamma, prior.rho))

    @property
    def scale(self) -> float:
        """rho |ln rho|, the natural size of the potential."""
        return self.rho * abs(math.log(self.rho))


@dataclass(frozen=True)
class WishartSpec:
    prior_u: Prior
    prior_v: Prior
    lam: float
    alpha: float
    rho_u: float | None = None
    rho_v: float | None = None

    def __post_init__(self):
        for name, p in (("rho_u", self.prior_u), ("rho_v", self.prior_v)):
            val = getattr(self, name)
            val = p.rho if val is None else float(val)
            object.__setattr__(self, name, val)
            _check_rho(val, name)
            if abs(val - p.rho) > 1e-12 * max(1.0, val):
                raise ParameterError(f"{name}={val!r} does not match the prior's rho={p.rho!r}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ParameterError(f"lambda must be finite and > 0, got {self.lam!r}")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ParameterError(f"alpha must be finite and > 0, got {self.alpha!r}")

    @classmethod
    def from_gamma(cls, prior_u: Prior, prior_v: Prior, alpha: float, gamma: float) -> WishartSpec:
        return cls(prior_u, prior_v, wishart_lambda(gamma, prior_v.rho, alpha), alpha)

    @property
    def scale(self) -> float:
        """sqrt(rho_v |ln rho_v|)."""
        return math.sqrt(self.rho_v * abs(math.log(self.rho_v)))


def _check_box(x, hi, name):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x > hi):
        raise DomainError(f"{name} must lie in [0, {hi!r}]")
    return x


def wigner_potential_many(spec: WignerSpec, qs, settings: ChannelSettings | None = None) -> np.ndarray:
    qs = _check_box(np.atleast_1d(qs), spec.rho, "q")
    mi = channel.channel_arrays(spec.prior, spec.lam * qs, settings)[0]
    return 0.25 * spec.lam * (qs - spec.rho) ** 2 + mi


def wigner_potential(spec: WignerSpec, q: float, settings: ChannelSettings | None = None) -> float:
    return float(wigner_potential_many(spec, [q], settings)[0])


def wigner_stationarity_residual(spec: WignerSpec, q: float,
                                 settings: ChannelSettings | None = None) -> float:
    """d/dq of the Wigner potential: lam/2 (q - rho + mmse(lam q))."""
    q = float(_check_box(q, spec.rho, "q"))
    mm = channel.mmse(spec.prior, spec.lam * q, settings)
    return 0.5 * spec.lam * (q - spec.rho + mm)


def _u_term(spec, snr, settings):
    if spec.prior_u.is_gaussian:
        return 0.5 * np.log1p(snr)
    return channel.channel_arrays(spec.prior_u, snr, settings)[0]


def wishart_potential_many(spec: WishartSpec, q_u, q_v,
                           settings: ChannelSettings | None = None) -> np.ndarray:
    q_u, q_v = np.broadcast_arrays(np.atleast_1d(np.asarray(q_u, dtype=float)),
                                   np.atleast_1d(np.asarray(q_v, dtype=float)))
    _check_box(q_u, spec.rho_u, "q_u")
    _check_box(q_v, spec.rho_v, "q_v")
    la = spec.lam * spec.alpha
    cross = 0.5 * la * (q_u - spec.rho_u) * (q_v - spec.rho_v)
    i_u = _u_term(spec, la * q_v.ravel(), settings).reshape(q_v.shape)
    i_v = channel.channel_arrays(spec.prior_v, spec.lam * q_u.ravel(), settings)[0].reshape(q_u.shape)
    return cross + i_u + spec.alpha * i_v


def wishart_potential(spec: WishartSpec, q_u: float, q_v: float,
                      settings: ChannelSettings | None = None) -> float:
    return float(wishart_potential_many(spec, [q_u], [q_v], settings)[0])


def wishart_stationary_qu(lam: float, alpha: float, q_v: float) -> float:
    """q_u solving the q_v-stationarity condition for a Gaussian U prior."""
    if q_v < 0:
        raise DomainError("q_v must be >= 0")
    x = lam * alpha * q_v
    if math.isinf(x):
        return 1.0
    return x / (1.0 + x)


def asymptotic_wigner_branch_values(gamma: float, rho: float) -> tuple[float, float]:
    """Leading-order potential values at the low-overlap and high-overlap minima.

    low  = gamma rho |ln rho|
    high = rho |ln rho|          if gamma > 1/2
           2 gamma rho |ln rho|  otherwise
    """
    if not 0 < rho < 1 or not gamma > 0:
        raise ParameterError("need 0 < rho < 1 and gamma > 0")
    s = rho * abs(math.log(rho))
    return gamma * s, (s if gamma > 0.5 else 2.0 * gamma * s)


def asymptotic_wishart_branch_values(gamma: float, rho: float, alpha: float) -> tuple[float, float]:
    """Same for the spiked covariance model (Gaussian U, sparse V).

    low  = sqrt(alpha gamma rho |ln rho|)
    high = low + alpha (1 - gamma) rho |ln rho|   if gamma > 1/2
           low + alpha gamma rho |ln rho|         otherwise
    """
    if not 0 < rho < 1 or not gamma > 0 or not alpha > 0:
        raise ParameterError("need 0 < rho < 1, gamma > 0 and alpha > 0")
    s = rho * abs(math.log(rho))
    low = math.sqrt(alpha * gamma * s)
    high = low + alpha * ((1.0 - gamma) if gamma > 0.5 else gamma) * s
    return low, high
