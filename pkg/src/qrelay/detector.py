"""Photon detector response models.

Two families are supported: photon-number-resolving (PNR) detectors, which
report an integer count, and threshold detectors, which report click (1) or
no click (0).  In both, ``eta`` is the overall efficiency including any
transmission loss in front of the detector and ``dark`` is the dark-count
probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .specfun import DEFAULT_CACHE, b_ratio


class Family(str, Enum):
    PNR = "pnr"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class DetectorModel:
    family: Family = Family.THRESHOLD
    eta: float = 1.0
    dark: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"detector efficiency {self.eta} outside (0, 1]")
        if not 0.0 <= self.dark < 1.0:
            raise ValueError(f"dark-count probability {self.dark} outside [0, 1)")

    @property
    def perfect(self) -> bool:
        return self.eta == 1.0 and self.dark == 0.0

    def prob(self, readout: int, true_count: int) -> float:
        """p(readout | true_count) for this detector."""
        if self.family is Family.THRESHOLD:
            if readout not in (0, 1):
                return 0.0
            return threshold_prob(bool(readout), true_count, self)
        return pnr_prob(readout, true_count, self)


def perfect_detector(family: Family | str = Family.PNR) -> DetectorModel:
    return DetectorModel(family, 1.0, 0.0)


@dataclass(frozen=True)
class LossModel:
    """Fibre loss folded into an effective detector efficiency."""

    eta0: float
    alpha_db_per_km: float = 0.2
    length_km: float = 0.0

    @property
    def effective_eta(self) -> float:
        return loss_to_eta(self.eta0, self.alpha_db_per_km, self.length_km)


def loss_to_eta(eta0: float, alpha_db: float, length_km: float) -> float:
    """eta0 * 10^(-alpha * l / 10)."""
    return eta0 * 10.0 ** (-alpha_db * length_km / 10.0)


class OutcomeTuple(NamedTuple):
    """Counts at one detector fourtuple, ordered (b_H, b_V, c_V, c_H).

    For the end-station analyzers the same slots hold (a_H, a_V, d_V, d_H).
    """

    q: int
    r: int
    s: int
    t: int


def pnr_prob(q: int, i: int, det: DetectorModel) -> float:
    """Probability that a PNR detector reports ``q`` given ``i`` incident photons."""
    if q < 0 or i < 0:
        return 0.0
    eta, dark = det.eta, det.dark
    if eta == 1.0:
        if dark == 0.0:
            return 1.0 if q == i else 0.0
        return _added_noise_prob(q, i, dark / (1.0 - dark))
    pre = (1.0 - eta) * (1.0 - dark) / (1.0 - eta * (1.0 - dark))
    if i >= q:
        return pre * (eta / (1.0 - eta)) ** q * (1.0 - eta) ** i * DEFAULT_CACHE.g(i, q, eta, dark)
    b = b_ratio(eta, dark)
    if b == 0.0:
        return 0.0
    return pre * ((1.0 - eta) / eta * b) ** (q - i) * eta**i * DEFAULT_CACHE.g(q, i, eta, dark)


@lru_cache(maxsize=4096)
def _added_noise_prob(q: int, i: int, nbar: float) -> float:
    """eta -> 1 limit of the PNR formula: thermal noise of mean ``nbar`` added to |i>.

    p(q|i) = int P(alpha) |<q|D(alpha)|i>|^2 with a Gaussian P of mean
    photon number nbar.  The radial integrand is a polynomial of degree
    q + i times an exponential, so Gauss-Laguerre quadrature is exact.
    """
    lo, hi = min(q, i), max(q, i)
    a = hi - lo
    nodes, weights = np.polynomial.laguerre.laggauss(lo + a // 2 + lo + 2)
    r = nodes * nbar / (1.0 + nbar)
    # generalized Laguerre L_lo^(a)(r) by its three-term recurrence
    prev, cur = np.zeros_like(r), np.ones_like(r)
    for k in range(lo):
        prev, cur = cur, ((2 * k + 1 + a - r) * cur - (k + a) * prev) / (k + 1)
    log_pref = a * np.log(r) + math.lgamma(lo + 1) - math.lgamma(hi + 1)
    g = np.exp(log_pref) * cur**2
    return float(np.dot(weights, g) / (1.0 + nbar))


def threshold_prob(click: bool, i: int, det: DetectorModel) -> float:
    """Click / no-click probability of a threshold detector given ``i`` photons."""
    p0 = (1.0 - det.dark) * (1.0 - det.eta * (1.0 - det.dark)) ** i
    return 1.0 - p0 if click else p0


def fourtuple_prob(
    readout: Sequence[int],
    truth: Sequence[int],
    det: DetectorModel | Sequence[DetectorModel],
) -> float:
    """Joint readout probability of four independent detectors."""
    dets = [det] * 4 if isinstance(det, DetectorModel) else list(det)
    if len(dets) != 4 or len(readout) != 4 or len(truth) != 4:
        raise ValueError("a fourtuple needs four readouts, four counts and four detectors")
    p = 1.0
    for d, q, i in zip(dets, readout, truth):
        p *= d.prob(q, i)
        if p == 0.0:
            break
    return p


def pnr_normalization(i: int, det: DetectorModel, q_max: int | None = None) -> float:
    """Sum of p(q|i) over q = 0..q_max (default i + 64)."""
    q_max = i + 64 if q_max is None else q_max
    return math.fsum(pnr_prob(q, i, det) for q in range(q_max + 1))
