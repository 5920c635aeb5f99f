"""Signal priors: sparse finite-atom distributions and the standard Gaussian."""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError

WEIGHT_SUM_TOL = 1e-12
_NORMALIZE_TOL = 1e-9


class PriorKind(str, enum.Enum):
    FINITE_ATOMS = "atoms"
    STANDARD_GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class Prior:
    """A scalar signal distribution.

    ``atoms`` is a tuple of ``(value, weight)`` pairs sorted by value and is
    empty for the standard Gaussian. ``rho`` is the mass off zero.

    Log-weights are kept alongside the weights because for tiny ``rho`` the
    zero atom has weight ``1 - rho`` and ``log(1 - rho)`` must be computed
    as ``log1p(-rho)`` to keep relative precision in the channel integrals.
    """

    kind: PriorKind
    atoms: tuple = ()
    rho: float = 1.0
    support_bound: float = math.inf
    log_weights: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.kind is PriorKind.STANDARD_GAUSSIAN:
            if self.atoms or self.rho != 1.0:
                raise ParameterError("standard Gaussian prior has rho=1 and no atoms")
            return
        if not self.atoms:
            raise ParameterError("finite prior needs at least one atom")
        if not 0.0 < self.rho <= 1.0:
            raise ParameterError(f"rho must lie in (0, 1], got {self.rho!r}")
        weights = [w for _, w in self.atoms]
        if any(w < 0 for w in weights):
            raise ParameterError("atom weights must be non-negative")
        if abs(math.fsum(weights) - 1.0) > WEIGHT_SUM_TOL:
            raise ParameterError(f"weights sum to {math.fsum(weights)!r}, not 1")
        values = [v for v, _ in self.atoms]
        if list(values) != sorted(values) or len(set(values)) != len(values):
            raise ParameterError("atom values must be distinct and sorted")
        if self.support_bound < max(abs(v) for v in values):
            raise ParameterError("support_bound smaller than the largest |atom|")
        if not self.log_weights:
            object.__setattr__(self, "log_weights", _log_weights(self.atoms, self.rho))

    @property
    def is_gaussian(self) -> bool:
        return self.kind is PriorKind.STANDARD_GAUSSIAN

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    def negated(self) -> Prior:
        """The law of ``-X``."""
        if self.is_gaussian:
            return self
        atoms = tuple(sorted((-v if v != 0 else 0.0, w) for v, w in self.atoms))
        return Prior(PriorKind.FINITE_ATOMS, atoms, self.rho, self.support_bound)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "atoms": [[v, w] for v, w in self.atoms],
            "rho": self.rho,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> Prior:
        kind = PriorKind(d["kind"])
        if kind is PriorKind.STANDARD_GAUSSIAN:
            return standard_gaussian()
        atoms = tuple((float(v), float(w)) for v, w in d["atoms"])
        return cls(kind, atoms, float(d["rho"]), max(abs(v) for v, _ in atoms))

    @classmethod
    def from_json(cls, s: str) -> Prior:
        return cls.from_dict(json.loads(s))


def _log_weights(atoms, rho):
    out = []
    for v, w in atoms:
        if v == 0.0 and abs(w - (1.0 - rho)) <= 1e-15:
            out.append(math.log1p(-rho) if rho < 1.0 else -math.inf)
        else:
            out.append(math.log(w) if w > 0 else -math.inf)
    return tuple(out)


def _check_rho(rho):
    if not (isinstance(rho, (int, float)) and 0.0 < rho <= 1.0):
        raise ParameterError(f"rho must lie in (0, 1], got {rho!r}")
    return float(rho)


def bernoulli(rho: float) -> Prior:
    """Ber(rho): atoms {0: 1 - rho, 1: rho}."""
    rho = _check_rho(rho)
    if rho == 1.0:
        atoms = ((1.0, 1.0),)
    else:
        atoms = ((0.0, 1.0 - rho), (1.0, rho))
    return Prior(PriorKind.FINITE_ATOMS, atoms, rho, 1.0)


def bernoulli_rademacher(rho: float) -> Prior:
    """(1 - rho) delta_0 + rho/2 (delta_-1 + delta_1)."""
    rho = _check_rho(rho)
    half = rho / 2.0
    if rho == 1.0:
        atoms = ((-1.0, 0.5), (1.0, 0.5))
    else:
        atoms = ((-1.0, half), (0.0, 1.0 - rho), (1.0, half))
    return Prior(PriorKind.FINITE_ATOMS, atoms, rho, 1.0)


def standard_gaussian() -> Prior:
    return Prior(PriorKind.STANDARD_GAUSSIAN)


def finite(values, weights, *, check_unit_second_moment: str = "warn") -> Prior:
    """Generic finite prior from raw values and weights.

    Weights summing to 1 within 1e-9 are renormalized, anything further off
    is rejected. ``rho`` is the mass off zero. The nonzero part is expected
    to have unit second moment (so that ``E[X^2] == rho``); set
    ``check_unit_second_moment`` to "warn" (default), "raise" or "ignore".
    """
    values = [float(v) for v in values]
    weights = [float(w) for w in weights]
    if len(values) != len(weights) or not values:
        raise ParameterError("values and weights must be non-empty and equally long")
    if any(w < 0 for w in weights):
        raise ParameterError("weights must be non-negative")
    total = math.fsum(weights)
    if abs(total - 1.0) > _NORMALIZE_TOL:
        raise ParameterError(f"weights sum to {total!r}; expected 1 within {_NORMALIZE_TOL}")
    merged: dict[float, float] = {}
    for v, w in zip(values, weights):
        merged[v] = merged.get(v, 0.0) + w / total
    atoms = tuple(sorted((v, w) for v, w in merged.items() if w > 0))
    rho = math.fsum(w for v, w in atoms if v != 0.0)
    if rho <= 0.0:
        raise ParameterError("prior has no mass off zero")
    rho = min(rho, 1.0)
    m2 = math.fsum(w * v * v for v, w in atoms)
    if abs(m2 - rho) > 1e-9 and check_unit_second_moment != "ignore":
        msg = f"nonzero part has second moment {m2 / rho:.6g}, not 1"
        if check_unit_second_moment == "raise":
            raise ParameterError(msg)
        warnings.warn(msg, stacklevel=2)
    return Prior(PriorKind.FINITE_ATOMS, atoms, rho, max(abs(v) for v, _ in atoms))


def moments(p: Prior) -> tuple[float, float, float]:
    """(mean, second moment, variance)."""
    if p.is_gaussian:
        return 0.0, 1.0, 1.0
    mean = math.fsum(v * w for v, w in p.atoms)
    m2 = math.fsum(v * v * w for v, w in p.atoms)
    var = math.fsum((v - mean) ** 2 * w for v, w in p.atoms)
    return mean, m2, var


def entropy(p: Prior) -> float:
    """Shannon entropy (nats) of a finite prior."""
    if p.is_gaussian:
        return math.inf
    return -math.fsum(w * lw for (_, w), lw in zip(p.atoms, p.log_weights) if w > 0)


def make_prior(family: str, rho: float = 1.0) -> Prior:
    """Build a prior from a short family name: ber, berrad, gaussian."""
    family = family.lower()
    if family in ("ber", "bernoulli"):
        return bernoulli(rho)
    if family in ("berrad", "bernoulli_rademacher", "ber-rad"):
        return bernoulli_rademacher(rho)
    if family in ("gaussian", "normal"):
        return standard_gaussian()
    raise ParameterError(f"unknown prior family {family!r}")
