"""Domain types and the per-packet timing algebra of a two-node FCFS tandem.

Packet ``i`` is generated at ``g_i``, crosses system 1 (exponential service,
rate ``mu1``) and then system 2 (deterministic service ``D`` or exponential
service ``mu2``).  With ``Y_i = g_i - g_{i-1}`` and per-system times
``T_{i,j} = W_{i,j} + S_{i,j}``, the peak age at reception of packet ``i`` is
``Delta_i = Y_i + T_{i,1} + T_{i,2}``.  The signed *extended waiting time*
``Omega_{i,j} = T_{i-1,j} - Y_{i,j}`` has the real wait as positive part and
its sign pattern over the two systems picks one of four cases.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np


class UnstableParametersError(ValueError):
    """Raised when an analytic evaluator gets a load at or above capacity."""


class DomainError(ValueError):
    """Raised for arguments outside a function's domain (NaN, negative probability...)."""


@dataclass(frozen=True)
class Deterministic:
    D: float

    def __post_init__(self):
        if not self.D > 0 or not math.isfinite(self.D):
            raise ValueError(f"deterministic service time must be positive, got {self.D}")

    @property
    def mean(self) -> float:
        return self.D


@dataclass(frozen=True)
class Exponential:
    mu2: float

    def __post_init__(self):
        if not self.mu2 > 0 or not math.isfinite(self.mu2):
            raise ValueError(f"service rate must be positive, got {self.mu2}")

    @property
    def mean(self) -> float:
        return 1.0 / self.mu2


ServerSpec = Union[Deterministic, Exponential]


@dataclass(frozen=True)
class TandemParams:
    """Poisson source at rate ``lam`` feeding an M/M/1 node and then ``second``.

    Construction only checks positivity; stability is checked by the analytic
    evaluators (``require_stable``) so that the simulator can still run
    overloaded systems.
    """

    lam: float
    mu1: float
    second: ServerSpec

    def __post_init__(self):
        for name in ("lam", "mu1"):
            v = getattr(self, name)
            if not v > 0 or not math.isfinite(v):
                raise ValueError(f"{name} must be a positive finite rate, got {v}")
        if not isinstance(self.second, (Deterministic, Exponential)):
            raise TypeError(f"second server must be Deterministic or Exponential, got {self.second!r}")

    @classmethod
    def md1(cls, lam: float, mu1: float, D: float) -> "TandemParams":
        return cls(lam, mu1, Deterministic(D))

    @classmethod
    def mm1(cls, lam: float, mu1: float, mu2: float) -> "TandemParams":
        return cls(lam, mu1, Exponential(mu2))

    @property
    def kind(self) -> str:
        return "md1" if isinstance(self.second, Deterministic) else "mm1"

    @property
    def D(self) -> float:
        if not isinstance(self.second, Deterministic):
            raise AttributeError("exponential second server has no deterministic service time")
        return self.second.D

    @property
    def mu2(self) -> float:
        if not isinstance(self.second, Exponential):
            raise AttributeError("deterministic second server has no service rate")
        return self.second.mu2

    @property
    def alpha1(self) -> float:
        return self.mu1 - self.lam

    @property
    def alpha2(self) -> float:
        return self.mu2 - self.lam

    @property
    def rho1(self) -> float:
        return self.lam / self.mu1

    @property
    def rho2(self) -> float:
        return self.lam * self.second.mean

    @property
    def is_stable(self) -> bool:
        return self.rho1 < 1.0 and self.rho2 < 1.0

    def require_stable(self) -> "TandemParams":
        if not self.is_stable:
            raise UnstableParametersError(
                f"unstable tandem: rho1={self.rho1:.6g}, rho2={self.rho2:.6g} (both must be < 1)"
            )
        return self

    def as_dict(self) -> dict:
        d = {"tandem": self.kind, "lambda": self.lam, "mu1": self.mu1}
        if self.kind == "md1":
            d["D"] = self.D
        else:
            d["mu2"] = self.mu2
        return d


class CaseLabel(str, enum.Enum):
    """Queueing pattern seen by a packet: A both busy, B only first, C only second, D neither."""

    A = "A"
    B = "B"
    C = "C"
    D = "D"


CASES = (CaseLabel.A, CaseLabel.B, CaseLabel.C, CaseLabel.D)


def classify_case(omega1: float, omega2: float) -> CaseLabel:
    """Case label from the signs of the two extended waiting times.

    ``Omega == 0`` counts as "not queued".
    """
    if not (math.isfinite(omega1) and math.isfinite(omega2)):
        raise DomainError(f"extended waiting times must be finite, got ({omega1}, {omega2})")
    if omega1 > 0:
        return CaseLabel.A if omega2 > 0 else CaseLabel.B
    return CaseLabel.C if omega2 > 0 else CaseLabel.D


def paoi_from_record(y: float, t1: float, t2: float) -> float:
    """Peak age of a packet: interarrival time plus the two system times."""
    return y + t1 + t2


@dataclass(frozen=True, slots=True)
class PacketRecord:
    index: int
    g: float
    y: float
    s1: float
    s2: float
    omega1: float
    omega2: float
    w1: float
    w2: float
    t1: float
    t2: float
    delta: float
    case: CaseLabel

    FIELDS = ("index", "g", "y", "s1", "s2", "omega1", "omega2", "t1", "t2", "delta", "case")


@dataclass(frozen=True)
class MixedDistribution:
    """Density on ``[support_lower, inf)`` plus point masses.

    ``density`` must accept a numpy array and return an array of the same
    shape.  ``breakpoints`` lists points where the density is not smooth
    (quadrature splits there) and ``tail_rate`` is an exponential decay rate
    bounding the upper tail; both are hints for numerical integration.
    """

    density: Callable[[np.ndarray], np.ndarray]
    atoms: tuple[tuple[float, float], ...] = ()
    support_lower: float = 0.0
    breakpoints: tuple[float, ...] = ()
    tail_rate: float | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        for loc, mass in self.atoms:
            if not 0.0 <= mass <= 1.0:
                raise DomainError(f"atom mass must lie in [0, 1], got {mass} at {loc}")
            if loc < self.support_lower:
                raise DomainError(f"atom at {loc} lies below support_lower={self.support_lower}")

    @property
    def atom_mass(self) -> float:
        return sum(m for _, m in self.atoms)

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = x >= self.support_lower
        if np.any(inside):
            out[inside] = self.density(x[inside])
        return out
