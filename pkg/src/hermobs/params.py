"""Propagator parameters and resonance classification against pi*Z."""

from __future__ import annotations

import math
from dataclasses import dataclass

EPS_PI = 1e-9


class ResonanceError(ValueError):
    """A transform order or time sits on pi*Z, where the kernel degenerates."""


def distance_to_pi_multiple(x: float) -> tuple[float, int]:
    m = round(x / math.pi)
    return abs(x - m * math.pi), int(m)


def classify_order(alpha: float, tol: float = EPS_PI) -> str:
    """``'generic'``, ``'even_multiple'`` (2 pi Z) or ``'odd_multiple'`` ((2Z+1) pi)."""
    dist, m = distance_to_pi_multiple(alpha)
    if dist >= tol:
        return "generic"
    return "even_multiple" if m % 2 == 0 else "odd_multiple"


def is_resonant(x: float, tol: float = EPS_PI) -> bool:
    return classify_order(x, tol) != "generic"


@dataclass(frozen=True)
class PropagatorParams:
    """``(lam, t, d)``; the validity flags are derived, never stored."""

    lam: float
    t: float
    d: int = 1

    def __post_init__(self):
        if self.lam == 0:
            raise ValueError("lambda must be nonzero")
        if not math.isfinite(self.t) or self.t == 0:
            raise ValueError("t must be a nonzero finite real")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def hermite_valid(self) -> bool:
        """``2|lam| t`` off pi*Z (Hermite-Schroedinger flow is an frft there)."""
        return not is_resonant(2 * abs(self.lam) * self.t)

    @property
    def special_valid(self) -> bool:
        """``lam t`` off pi*Z (twisted Schroedinger kernel exists)."""
        return not is_resonant(self.lam * self.t)

    @property
    def period(self) -> float:
        return 2 * math.pi / abs(self.lam)

    def at_time(self, t: float) -> "PropagatorParams":
        return PropagatorParams(self.lam, t, self.d)

    def require_hermite_valid(self) -> None:
        if not self.hermite_valid:
            raise ResonanceError(f"2|lambda|t = {2 * abs(self.lam) * self.t} lies in pi*Z")

    def require_special_valid(self) -> None:
        if not self.special_valid:
            raise ResonanceError(f"lambda*t = {self.lam * self.t} lies in pi*Z")

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "t": self.t,
            "d": self.d,
            "hermite_valid": self.hermite_valid,
            "special_valid": self.special_valid,
        }
