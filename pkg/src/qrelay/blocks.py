"""Fast evaluation of the post-selected end state by block contraction.

The chain amplitudes factor into an H sector (counts i, l at every station)
and a V sector (counts j, k), and the detector likelihood of a fixed readout
factors the same way.  The detector-weighted mixture over ideal counts is
therefore a sum, over the readout patterns allowed at each station, of
products rho_H (x) rho_V of two-mode density matrices on (d_1, a_N).

Each sector matrix is built segment by segment: a segment contributes
sum_x w(x) |phi_x><phi_x| on its (d, a) modes, and a Bell station joining
two blocks contracts the inner modes through the beamsplitter matrix
elements, weighted by that station's detector likelihoods.  Everything is
dense numpy with dimension 2 * n_max + 1 per mode.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .chain import ChainSpec, TopologyMap, rotator_amplitude
from .detector import DetectorModel
from .specfun import DEFAULT_CACHE, binomial


@lru_cache(maxsize=None)
def segment_tensor(n_max: int, tanh_chi: float) -> np.ndarray:
    """S[x, y, a, d]: Fock amplitude of one polarization sector of a segment.

    ``x`` is the count at the b-side detector, ``y`` at the c-side detector;
    ``a + d = x + y``.  Photons of the c-side pair that end up in ``a`` carry
    the beamsplitter's minus sign.
    """
    n = n_max
    S = np.zeros((n + 1, n + 1, 2 * n + 1, 2 * n + 1))
    for x in range(n + 1):
        for y in range(n + 1):
            pref = tanh_chi ** (x + y) / math.sqrt(2.0 ** (x + y) * math.factorial(x) * math.factorial(y))
            for a in range(x + y + 1):
                d = x + y - a
                c = sum(
                    (-1) ** (a - mu) * binomial(x, mu) * binomial(y, a - mu)
                    for mu in range(max(0, a - y), min(x, a) + 1)
                )
                S[x, y, a, d] = pref * c * math.sqrt(math.factorial(a) * math.factorial(d))
    S.setflags(write=False)
    return S


@lru_cache(maxsize=None)
def station_tensor(n_max: int) -> np.ndarray:
    """B[u, v, m, n] = <u, v| U_B |m, n> in the Fock basis (u on the a side)."""
    n = n_max
    dim = 2 * n + 1
    B = np.zeros((n + 1, n + 1, dim, dim))
    for u in range(n + 1):
        for v in range(n + 1):
            for m in range(min(u + v, dim - 1) + 1):
                k = u + v - m
                if k >= dim:
                    continue
                om = DEFAULT_CACHE.omega(m, u, v)
                B[u, v, m, k] = om * math.sqrt(
                    math.factorial(u) * math.factorial(v) / (2.0 ** (u + v) * math.factorial(m) * math.factorial(k))
                )
    B.setflags(write=False)
    return B


def response_matrix(det: DetectorModel, readouts: int, counts: int) -> np.ndarray:
    """D[q, i] = p(q | i) for q < readouts, i < counts."""
    return np.array([[det.prob(q, i) for i in range(counts)] for q in range(readouts)])


def _station_weights(dets, pattern, n_max):
    """Per-sector likelihood tables (H: (i, l), V: (j, k)) of one station."""
    rng = range(n_max + 1)
    q, r, s, t = pattern
    pi = np.array([dets[0].prob(q, i) for i in rng])
    pj = np.array([dets[1].prob(r, j) for j in rng])
    pk = np.array([dets[2].prob(s, k) for k in rng])
    pl = np.array([dets[3].prob(t, l) for l in rng])
    return np.outer(pi, pl), np.outer(pj, pk)


def _segment_rho(S, W):
    # rho[d, a, d', a'] = sum_xy W S[x,y,a,d] S[x,y,a',d']
    return np.einsum("xy,xyad,xyAD->daDA", W, S, S, optimize=True)


def _join(B, W, left, right):
    # contract left block's a end with right block's d end through station (u, v)
    return np.einsum("uv,uvmn,uvMN,xmXM,nyNY->xyXY", W, B, B, left, right, optimize=True)


def sector_densities(spec: ChainSpec, readouts) -> list[tuple[np.ndarray, np.ndarray]]:
    """(rho_H, rho_V) pairs, one per combination of per-station readouts.

    ``readouts[s]`` is either one fourtuple or a collection of fourtuples for
    station ``s + 1``; a collection means "any of these".  Matrices are
    indexed ``[d_1, a_N, d_1', a_N']`` and are unnormalized.
    """
    n = spec.n_max
    N = spec.N
    per_station = []
    for st in readouts:
        st = list(st)
        if st and isinstance(st[0], int):
            st = [tuple(st)]
        per_station.append([tuple(p) for p in st])
    if len(per_station) != spec.n_stations:
        raise ValueError(f"need readouts for {spec.n_stations} stations")
    B = station_tensor(n)
    topo = TopologyMap(N)
    out = []
    for combo in itertools.product(*per_station):
        sectors = []
        for sec in (0, 1):
            blocks = {}
            for p in range(1, N + 1):
                S = segment_tensor(n, math.tanh(spec.source.chi_for(p - 1)))
                W = _station_weights(spec.bell_detectors[p - 1], combo[p - 1], n)[sec]
                blocks[(p, p)] = _segment_rho(S, W)
            for alpha, beta in topo.joins():
                (lo, _), (_, hi) = _find_span(blocks, beta)
                W = _station_weights(spec.bell_detectors[alpha - 1], combo[alpha - 1], n)[sec]
                left = blocks.pop((lo, beta))
                right = blocks.pop((beta + 1, hi))
                blocks[(lo, hi)] = _join(B, W, left, right)
            (rho,) = blocks.values()
            sectors.append(rho)
        out.append((sectors[0], sectors[1]))
    return out


def _find_span(blocks, beta):
    left = next(k for k in blocks if k[1] == beta)
    right = next(k for k in blocks if k[0] == beta + 1)
    return left, right


def rotation_matrix(angle: float, n_in: int, n_out: int) -> np.ndarray:
    """U[h', v', h, v] = <h', v'| U(angle) |h, v> between Fock states."""
    U = np.zeros((n_out, n_out, n_in, n_in), dtype=complex)
    for h in range(n_in):
        for v in range(n_in):
            tot = h + v
            norm = math.sqrt(math.factorial(h) * math.factorial(v))
            for hp in range(min(tot, n_out - 1) + 1):
                vp = tot - hp
                if vp >= n_out:
                    continue
                U[hp, vp, h, v] = rotator_amplitude(h, v, hp, vp, angle) / norm
    return U


def a_side(sectors, alpha: float, dim: int) -> np.ndarray:
    """Rotate and contract the a_N end for every readout combination.

    Returns T[i', j', dH, dV, dH', dV'], summed over combinations; it does
    not depend on the d-side angle, so sweeps reuse it.
    """
    n_out = 2 * dim - 1
    Ua = rotation_matrix(alpha, dim, n_out)
    T = 0.0
    for rH, rV in sectors:
        # rH[dH, aH, dH', aH'], rV[dV, aV, dV', aV']
        T = T + np.einsum("ijab,ijAB,xaXA,ybYB->ijxyXY", Ua, Ua.conj(), rH, rV, optimize=True)
    return T


def d_side(T: np.ndarray, delta: float, dim: int) -> np.ndarray:
    """Finish the contraction: P[i', j', k', l'] on (a_H, a_V, d_V, d_H)."""
    Ud = rotation_matrix(delta, dim, 2 * dim - 1)
    return np.einsum("lkxy,lkXY,ijxyXY->ijkl", Ud, Ud.conj(), T, optimize=True).real


def sectors_trace(sectors) -> float:
    return math.fsum(
        float(np.einsum("xaxa->", rH).real * np.einsum("xaxa->", rV).real) for rH, rV in sectors
    )


def analyzer_probabilities(sectors, angles, n_max: int) -> tuple[np.ndarray, float]:
    """Unnormalized P[i', j', k', l'] after the rotators, and the trace.

    Slots follow the analyzer order (a_H, a_V, d_V, d_H).
    """
    dim = 2 * n_max + 1
    T = a_side(sectors, angles[0], dim)
    return d_side(T, angles[1], dim), sectors_trace(sectors)


def end_density(sectors, n_max: int) -> np.ndarray:
    """Full four-mode matrix rho[aH, aV, dV, dH, aH', aV', dV', dH'] (unnormalized)."""
    dim = 2 * n_max + 1
    rho = np.zeros((dim,) * 8, dtype=complex)
    for rH, rV in sectors:
        rho += np.einsum("xaXA,ybYB->abyxABYX", rH, rV)
    return rho
