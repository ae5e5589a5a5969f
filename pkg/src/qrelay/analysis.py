"""Post-selection, coincidence probabilities, correlation and visibility.

Two evaluation paths produce the same numbers:

``method="blocks"`` (default)
    contracts per-polarization density matrices along the chain
    (:mod:`qrelay.blocks`); cost is independent of the number of ideal-count
    multi-indices.
``method="formula"``
    enumerates every ideal-count multi-index up to ``n_max``, builds its end
    ket from the nested-sum formula and forms the posterior mixture
    explicitly.  Only practical for N = 1, or N = 2 at n_max <= 2.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import blocks
from .chain import ChainSpec, Ket, general_n_ket, ideal_swap_state, ket_norm2, rotate_ket
from .detector import DetectorModel, Family, OutcomeTuple, fourtuple_prob

log = logging.getLogger(__name__)

PATTERNS = {
    "1010": OutcomeTuple(1, 0, 1, 0),
    "0101": OutcomeTuple(0, 1, 0, 1),
    "1001": OutcomeTuple(1, 0, 0, 1),
    "0110": OutcomeTuple(0, 1, 1, 0),
}

#: Posterior normalizers below this are treated as an impossible readout.
MASS_FLOOR = 1e-300


class PosteriorUnderflow(ArithmeticError):
    """The requested readout has (numerically) zero probability."""


@dataclass(frozen=True)
class AnalyzerAngles:
    alpha_tilde: float = 0.0
    delta_tilde: float = 0.0

    def as_tuple(self) -> tuple[float, float]:
        return (self.alpha_tilde, self.delta_tilde)


def _angles(a) -> tuple[float, float]:
    return a.as_tuple() if isinstance(a, AnalyzerAngles) else (float(a[0]), float(a[1]))


def _readout_sets(readouts, spec: ChainSpec) -> list[list[tuple[int, int, int, int]]]:
    """Normalize readouts to one list of allowed fourtuples per station."""
    if readouts is None:
        return [[tuple(p) for p in st] for st in spec.postselect_patterns]
    readouts = list(readouts)
    if len(readouts) == 4 and all(isinstance(x, (int, np.integer)) for x in readouts):
        readouts = [readouts] * spec.n_stations
    out = []
    for st in readouts:
        st = list(st)
        out.append([tuple(st)] if st and isinstance(st[0], (int, np.integer)) else [tuple(p) for p in st])
    if len(out) != spec.n_stations:
        raise ValueError(f"need readouts for {spec.n_stations} stations, got {len(out)}")
    return out


def readout_likelihood(readout_sets, counts, spec: ChainSpec) -> float:
    """p(readout | ideal counts), summing over allowed patterns per station."""
    p = 1.0
    for st, c, dets in zip(readout_sets, counts, spec.bell_detectors):
        p *= math.fsum(fourtuple_prob(r, c, dets) for r in st)
        if p == 0.0:
            return 0.0
    return p


@dataclass
class EnsembleState:
    """Post-selected end state.

    ``components`` maps each station-count multi-index to
    ``(posterior weight, normalized end ket)`` and is filled only by the
    formula path.  ``sectors`` holds the block form, whose trace is
    ``trace``.
    """

    spec: ChainSpec
    components: dict[tuple, tuple[float, Ket]] | None = None
    sectors: list | None = None
    trace: float = 1.0

    def density(self) -> np.ndarray:
        """Normalized rho[aH, aV, dV, dH, aH', aV', dV', dH']."""
        n = self.spec.n_max
        if self.sectors is not None:
            return blocks.end_density(self.sectors, n) / self.trace
        dim = 2 * n + 1
        rho = np.zeros((dim,) * 8, dtype=complex)
        for w, ket in self.components.values():
            v = np.zeros((dim,) * 4, dtype=complex)
            for k, a in ket.items():
                v[k] = a
            rho += w * np.multiply.outer(v, v.conj())
        return rho

    @property
    def total_weight(self) -> float:
        if self.components is None:
            return 1.0
        return math.fsum(w for w, _ in self.components.values())


def multi_indices(spec: ChainSpec):
    rng = range(spec.n_max + 1)
    per_station = list(itertools.product(rng, repeat=4))
    return itertools.product(per_station, repeat=spec.n_stations)


def end_ket(spec: ChainSpec, counts, mode: str = "pruned") -> Ket:
    if spec.N == 1:
        c = counts[0]
        chi = spec.source.chi_for(0)
        w = math.tanh(chi) ** sum(c) / math.cosh(chi) ** 4
        return {k: v * w for k, v in ideal_swap_state(*c).items()}
    return general_n_ket(spec, counts, mode=mode)


def posterior(readouts, spec: ChainSpec, method: str = "blocks", mode: str = "pruned") -> EnsembleState:
    """Condition the chain on imperfect readouts at every Bell station."""
    sets = _readout_sets(readouts, spec)
    if method == "blocks":
        sectors = blocks.sector_densities(spec, sets)
        tr = blocks.sectors_trace(sectors)
        if not tr > MASS_FLOOR:
            raise PosteriorUnderflow(f"readout has zero probability at n_max={spec.n_max}")
        return EnsembleState(spec, sectors=sectors, trace=tr)
    if method != "formula":
        raise ValueError(f"unknown method {method!r}")
    raw = {}
    for counts in multi_indices(spec):
        like = readout_likelihood(sets, counts, spec)
        if like == 0.0:
            continue
        ket = end_ket(spec, counts, mode=mode)
        n2 = ket_norm2(ket)
        if n2 == 0.0:
            continue
        raw[counts] = (like * n2, ket, n2)
    total = math.fsum(v[0] for v in raw.values())
    if not total > MASS_FLOOR:
        raise PosteriorUnderflow(f"readout has zero probability at n_max={spec.n_max}")
    comps = {
        c: (w / total, {k: a / math.sqrt(n2) for k, a in ket.items()}) for c, (w, ket, n2) in raw.items()
    }
    return EnsembleState(spec, components=comps)


def analyzer_distribution(ens: EnsembleState, angles) -> np.ndarray:
    """p(i', j', k', l' | readouts) as an array over (a_H, a_V, d_V, d_H)."""
    ang = _angles(angles)
    n = ens.spec.n_max
    if ens.sectors is not None:
        P, tr = blocks.analyzer_probabilities(ens.sectors, ang, n)
        return P / tr
    dim = 4 * n + 1
    P = np.zeros((dim,) * 4)
    for w, ket in ens.components.values():
        for k, a in rotate_ket(ket, ang).items():
            P[k] += w * abs(a) ** 2
    return P


@dataclass
class CoincidenceResult:
    Q1010: float
    Q0101: float
    Q0110: float
    Q1001: float
    alpha_tilde: float = 0.0
    delta_tilde: float = 0.0
    context: dict = field(default_factory=dict)

    @property
    def parallel(self) -> float:
        return self.Q1010 + self.Q0101

    @property
    def crossed(self) -> float:
        return self.Q1001 + self.Q0110

    @property
    def correlation(self) -> float:
        tot = self.parallel + self.crossed
        if tot == 0.0:
            return float("nan")
        return (self.parallel - self.crossed) / tot

    def as_row(self) -> dict:
        return {
            "delta_tilde": self.delta_tilde,
            "Q1010": self.Q1010,
            "Q0101": self.Q0101,
            "Q1001": self.Q1001,
            "Q0110": self.Q0110,
            "Qsum_parallel": self.parallel,
            "Qsum_crossed": self.crossed,
            "correlation": self.correlation,
        }


def _analyzer_dets(analyzer_detectors) -> tuple[DetectorModel, ...]:
    if analyzer_detectors is None:
        return (DetectorModel(Family.PNR, 1.0, 0.0),) * 4
    if isinstance(analyzer_detectors, DetectorModel):
        return (analyzer_detectors,) * 4
    dets = tuple(analyzer_detectors)
    if len(dets) != 4:
        raise ValueError("need four analyzer detectors (a_H, a_V, d_V, d_H)")
    return dets


def pattern_probabilities(P: np.ndarray, analyzer_detectors) -> dict[str, float]:
    """Fold an ideal analyzer distribution through imperfect detectors."""
    dets = _analyzer_dets(analyzer_detectors)
    dim = P.shape[0]
    resp = [blocks.response_matrix(d, 2, dim) for d in dets]
    out = {}
    for name, (q, r, s, t) in PATTERNS.items():
        out[name] = float(
            np.einsum("i,j,k,l,ijkl->", resp[0][q], resp[1][r], resp[2][s], resp[3][t], P)
        )
    return out


def coincidence_q(
    readouts,
    angles,
    analyzer_detectors,
    spec: ChainSpec,
    method: str = "blocks",
    ensemble: EnsembleState | None = None,
) -> CoincidenceResult:
    """The four two-party coincidence probabilities given the station readouts."""
    ens = ensemble if ensemble is not None else posterior(readouts, spec, method=method)
    ang = _angles(angles)
    Qs = pattern_probabilities(analyzer_distribution(ens, ang), analyzer_detectors)
    return CoincidenceResult(
        Qs["1010"], Qs["0101"], Qs["0110"], Qs["1001"], ang[0], ang[1],
        context={"N": spec.N, "n_max": spec.n_max, "chi": spec.source.chi},
    )


@dataclass
class VisibilityResult:
    visibility: float
    v_max: float
    v_min: float
    delta_at_max: float
    delta_at_min: float
    alpha_tilde: float
    delta_grid: np.ndarray
    parallel: np.ndarray
    crossed: np.ndarray
    rows: list[CoincidenceResult] = field(default_factory=list)


def refine_extremum(grid: np.ndarray, values: np.ndarray, idx: int, period: float | None = 2 * np.pi):
    """Three-point parabolic refinement around grid index ``idx``.

    Returns ``(x, y)``.  The grid is treated as periodic when ``period`` is
    given and the grid spans one period.
    """
    n = len(grid)
    step = grid[1] - grid[0]
    if period is not None and math.isclose(step * n, period, rel_tol=1e-9):
        ym, y0, yp = values[(idx - 1) % n], values[idx], values[(idx + 1) % n]
    elif 0 < idx < n - 1:
        ym, y0, yp = values[idx - 1], values[idx], values[idx + 1]
    else:
        return grid[idx], values[idx]
    denom = ym - 2 * y0 + yp
    if denom == 0.0:
        return grid[idx], y0
    shift = 0.5 * (ym - yp) / denom
    if abs(shift) > 1.0:
        warnings.warn("extremum refinement moved by more than one grid step", RuntimeWarning)
        return grid[idx], y0
    return grid[idx] + shift * step, y0 - 0.25 * (ym - yp) * shift


def visibility_sweep(
    spec: ChainSpec,
    alpha_tilde: float,
    delta_grid: Sequence[float] | None = None,
    analyzer_detectors=None,
    readouts=None,
    method: str = "blocks",
) -> VisibilityResult:
    """Sweep delta, collect Q1010 + Q0101, and report (max - min)/(max + min)."""
    grid = np.linspace(0, 2 * np.pi, 64, endpoint=False) if delta_grid is None else np.asarray(delta_grid, float)
    if np.ptp(grid) + (grid[1] - grid[0]) < 2 * np.pi - 1e-9:
        raise ValueError("delta grid must cover one full period")
    ens = posterior(readouts, spec, method=method)
    dets = _analyzer_dets(analyzer_detectors)
    rows = []
    if ens.sectors is not None:
        dim = 2 * spec.n_max + 1
        T = blocks.a_side(ens.sectors, alpha_tilde, dim)
        for d in grid:
            P = blocks.d_side(T, d, dim) / ens.trace
            Qs = pattern_probabilities(P, dets)
            rows.append(CoincidenceResult(Qs["1010"], Qs["0101"], Qs["0110"], Qs["1001"], alpha_tilde, float(d)))
    else:
        for d in grid:
            rows.append(coincidence_q(None, (alpha_tilde, d), dets, spec, ensemble=ens))
    par = np.array([r.parallel for r in rows])
    crs = np.array([r.crossed for r in rows])
    imax, imin = int(np.argmax(par)), int(np.argmin(par))
    xmax, vmax = refine_extremum(grid, par, imax)
    xmin, vmin = refine_extremum(grid, -par, imin)
    vmin = max(-vmin, 0.0)  # the parabola may dip below a true zero
    vis = (vmax - vmin) / (vmax + vmin)
    log.info("N=%d n_max=%d V=%.4f", spec.N, spec.n_max, vis)
    return VisibilityResult(vis, vmax, vmin, xmax, xmin, alpha_tilde, grid, par, crs, rows)
