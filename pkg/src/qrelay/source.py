"""Photon-pair source amplitudes.

Each elementary segment holds two sources, each a pair of two-mode
squeezers (one per polarization), so a chain of N segments has 4N squeezers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class SourceParams:
    """Pump parameter chi, uniform across segments unless ``per_segment`` is set."""

    chi: float = 0.24
    per_segment: tuple[float, ...] = field(default=())

    def __post_init__(self):
        for c in (self.chi, *self.per_segment):
            if c < 0 or not math.isfinite(c):
                raise ValueError(f"pump parameter {c} must be finite and >= 0")

    def chi_for(self, segment: int) -> float:
        """chi of segment ``segment`` (0-based)."""
        if self.per_segment:
            return self.per_segment[segment]
        return self.chi


@dataclass(frozen=True)
class TruncationConfig:
    n_max: int = 3

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")


def pair_amplitude(n: int, chi: float) -> complex:
    """Coefficient of |n, n> in one squeezer's output, (i tanh chi)^n / cosh chi."""
    if n < 0:
        raise ValueError("photon number must be >= 0")
    return (1j * math.tanh(chi)) ** n / math.cosh(chi)


def squeezers_in_chain(N: int) -> int:
    return 4 * N


def chain_weight(totals: Sequence[int], chi: float, N: int) -> float:
    """Source prefactor (tanh chi)^(sum totals) / cosh(chi)^(4N).

    ``totals`` are the per-segment pair totals.  The i^n phases of the pair
    amplitudes are dropped: for fixed detector counts they are a global phase.
    """
    s = sum(totals)
    if any(t < 0 for t in totals):
        raise ValueError("photon totals must be >= 0")
    return math.tanh(chi) ** s / math.cosh(chi) ** squeezers_in_chain(N)


def truncation_error_bound(chi: float, n_max: int) -> float:
    """Rough tail estimate (tanh chi)^(n_max + 1) for a per-mode cut at n_max."""
    return math.tanh(chi) ** (n_max + 1)
