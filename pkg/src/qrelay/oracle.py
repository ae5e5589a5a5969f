"""Brute-force reference: sparse Fock-space state vectors.

The whole chain is built by operator application on the vacuum of all 8N
optical modes: squeezers, Bell-station beamsplitters, rotators, then
projection.  Detectors are modelled from first principles as a
beamsplitter that mixes the signal with thermal noise in front of an ideal
counter.  Nothing here reuses the closed-form machinery, so it can check it.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .detector import DetectorModel, Family

SparseKet = dict[tuple[int, ...], complex]

PRUNE = 1e-15

# per-segment mode offsets
A_H, A_V, B_H, B_V, C_H, C_V, D_H, D_V = range(8)
MODES_PER_SEGMENT = 8


def mode(segment: int, offset: int) -> int:
    return MODES_PER_SEGMENT * segment + offset


def vacuum(n_modes: int) -> SparseKet:
    return {(0,) * n_modes: 1.0 + 0j}


def _prune(ket: SparseKet) -> SparseKet:
    return {k: v for k, v in ket.items() if abs(v) >= PRUNE}


def norm2(ket: SparseKet) -> float:
    return math.fsum(abs(v) ** 2 for v in ket.values())


def apply_squeezer(ket: SparseKet, mode_pair: tuple[int, int], chi: float, cutoff: int) -> SparseKet:
    """exp[i chi (x^dag y^dag + x y)] on modes that are still in vacuum.

    Uses the pair expansion sum_n (i tanh chi)^n / cosh chi |n, n>, cut at
    ``cutoff`` pairs.  Raises if either mode is already occupied, since the
    pair form only holds on vacuum.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    x, y = mode_pair
    t, c = math.tanh(chi), math.cosh(chi)
    amps = [(1j * t) ** n / c for n in range(cutoff + 1)]
    out: SparseKet = {}
    for occ, amp in ket.items():
        if occ[x] or occ[y]:
            raise ValueError("squeezer pair expansion applied to occupied modes")
        for n, a in enumerate(amps):
            if a == 0:
                continue
            new = list(occ)
            new[x] = n
            new[y] = n
            out[tuple(new)] = out.get(tuple(new), 0) + amp * a
    return _prune(out)


@lru_cache(maxsize=None)
def _bs_table(m: int, n: int, t: float):
    """Output amplitudes of |m, n> through a beamsplitter of transmissivity t.

    x^dag -> sqrt(t) x^dag - sqrt(1-t) y^dag,  y^dag -> sqrt(1-t) x^dag + sqrt(t) y^dag.
    Returns {(m', n'): amplitude} between normalized Fock states.
    """
    st, sr = math.sqrt(t), math.sqrt(1 - t)
    # expand (st X - sr Y)^m (sr X + st Y)^n
    poly = defaultdict(float)
    for p in range(m + 1):
        cp = math.comb(m, p) * st**p * (-sr) ** (m - p)
        for q in range(n + 1):
            poly[p + q] += cp * math.comb(n, q) * sr**q * st ** (n - q)
    norm = 1.0 / math.sqrt(math.factorial(m) * math.factorial(n))
    out = {}
    for px, c in poly.items():
        if c != 0.0:
            py = m + n - px
            out[(px, py)] = c * norm * math.sqrt(math.factorial(px) * math.factorial(py))
    return out


def apply_beamsplitter(ket: SparseKet, mode_pair: tuple[int, int], transmissivity: float = 0.5) -> SparseKet:
    """Substitute x^dag -> (x^dag - y^dag)/sqrt2, y^dag -> (x^dag + y^dag)/sqrt2 (50:50 case)."""
    x, y = mode_pair
    out: SparseKet = defaultdict(complex)
    for occ, amp in ket.items():
        for (px, py), c in _bs_table(occ[x], occ[y], transmissivity).items():
            new = list(occ)
            new[x], new[y] = px, py
            out[tuple(new)] += amp * c
    return _prune(dict(out))


def apply_phase(ket: SparseKet, m: int, phi: float) -> SparseKet:
    """exp(i phi n_m)."""
    return {k: v * complex(math.cos(phi * k[m]), math.sin(phi * k[m])) for k, v in ket.items()}


@lru_cache(maxsize=None)
def _rot_table(h: int, v: int, angle: float):
    """Fock amplitudes of U(angle)|h, v> with h^dag -> c h^dag + i s v^dag, v^dag -> c v^dag + i s h^dag."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    poly = defaultdict(complex)
    for p in range(h + 1):  # p of the h photons stay H
        cp = math.comb(h, p) * c**p * (1j * s) ** (h - p)
        for q in range(v + 1):  # q of the v photons stay V
            poly[(p + v - q, q + h - p)] += cp * math.comb(v, q) * c**q * (1j * s) ** (v - q)
    norm = 1.0 / math.sqrt(math.factorial(h) * math.factorial(v))
    return {
        k: a * norm * math.sqrt(math.factorial(k[0]) * math.factorial(k[1]))
        for k, a in poly.items()
        if a != 0
    }


def apply_rotator(ket: SparseKet, mode_pair: tuple[int, int], angle: float) -> SparseKet:
    """exp[i angle/2 (V^dag H + V H^dag)] on the (H, V) pair ``mode_pair``."""
    h, v = mode_pair
    out: SparseKet = defaultdict(complex)
    for occ, amp in ket.items():
        for (ph, pv), c in _rot_table(occ[h], occ[v], angle).items():
            new = list(occ)
            new[h], new[v] = ph, pv
            out[tuple(new)] += amp * c
    return _prune(dict(out))


def project_counts(ket: SparseKet, modes: Sequence[int], counts: Sequence[int]) -> SparseKet:
    """<counts| on ``modes``; the result lives on the remaining modes (unnormalized)."""
    keep = [i for i in range(len(next(iter(ket)))) if i not in set(modes)] if ket else []
    target = tuple(counts)
    out: SparseKet = defaultdict(complex)
    for occ, amp in ket.items():
        if tuple(occ[m] for m in modes) == target:
            out[tuple(occ[i] for i in keep)] += amp
    return dict(out)


# ---------------------------------------------------------------------------
# detectors from first principles


def thermal_noise_mean(det: DetectorModel) -> float:
    """Geometric ratio x of the noise port so that p(0 | 0) = 1 - dark."""
    return det.dark / (1 - det.eta + det.eta * det.dark)


def _mixing_amplitude(i: int, m: int, q: int, t: float) -> float:
    """<q, i+m-q| U_t |i, m> for Fock inputs, summed in log space.

    Same substitution as the beamsplitter above; the signal count ``i`` and
    the output ``q`` are small while the noise count ``m`` may be large, so
    the huge binomials and factorials are handled through lgamma.
    """
    n = i + m
    if not 0 <= q <= n:
        return 0.0
    lt, lr = 0.5 * math.log(t), 0.5 * math.log1p(-t)
    norm = 0.5 * (math.lgamma(q + 1) + math.lgamma(n - q + 1) - math.lgamma(i + 1) - math.lgamma(m + 1))
    logs, signs = [], []
    for p in range(max(0, q - m), min(i, q) + 1):
        # p signal photons stay on the counter side, q - p noise photons cross over
        logs.append(
            math.lgamma(i + 1) - math.lgamma(p + 1) - math.lgamma(i - p + 1)
            + math.lgamma(m + 1) - math.lgamma(q - p + 1) - math.lgamma(m - q + p + 1)
            + (m - q + 2 * p) * lt + (i + q - 2 * p) * lr + norm
        )
        signs.append(-1.0 if (i - p) % 2 else 1.0)
    if not logs:
        return 0.0
    top = max(logs)
    return math.exp(top) * math.fsum(s * math.exp(v - top) for s, v in zip(signs, logs))


def oracle_pnr_prob(q: int, i: int, det: DetectorModel, rel_tail: float = 1e-15) -> float:
    """p(q | i): signal on a beamsplitter (transmissivity eta) with thermal noise.

    The other input port holds a thermal state p(m) = (1 - x) x^m; the ideal
    counter sees one output port.  The m-sum runs until the thermal tail
    x^m drops below ``rel_tail``.  At eta = 1 the noise port would need
    infinite occupation, so that limit is taken by displacing |i> with
    Gaussian-distributed coherent amplitudes instead.
    """
    if det.eta == 1.0:
        if det.dark == 0.0:
            return float(q == i)
        return _displaced_fock_prob(q, i, det.dark / (1 - det.dark))
    x = thermal_noise_mean(det)
    if x == 0.0:
        return _mixing_amplitude(i, 0, q, det.eta) ** 2
    log_x, log_1mx = math.log(x), math.log1p(-x)
    m_stop = q + int(math.log(rel_tail) / log_x) + 2
    total = []
    for m in range(max(0, q - i), m_stop):
        lw = log_1mx + m * log_x
        if lw < -745:
            break
        total.append(math.exp(lw) * _mixing_amplitude(i, m, q, det.eta) ** 2)
    return math.fsum(total)


def _displaced_fock_prob(q: int, i: int, nbar: float, nodes: int = 120) -> float:
    """Average of |<q|D(alpha)|i>|^2 over a Gaussian P(alpha) of mean nbar.

    The matrix element comes from the normal-ordered expansion of D(alpha);
    the radial integral uses Gauss-Laguerre nodes and the phase integral
    is done by hand (only |alpha| enters).
    """
    import numpy as np

    s, w = np.polynomial.laguerre.laggauss(nodes)
    total = 0.0
    for sk, wk in zip(s, w):
        r2 = sk * nbar / (1 + nbar)  # |alpha|^2
        amp = 0.0
        for k in range(min(q, i) + 1):
            amp += (
                (-1) ** (i - k)
                * math.sqrt(math.factorial(q) * math.factorial(i))
                / (math.factorial(k) * math.factorial(q - k) * math.factorial(i - k))
                * r2 ** ((q + i - 2 * k) / 2)
            )
        total += wk * amp * amp  # e^{-|alpha|^2} sits in the Laguerre weight
    return total / (1 + nbar)


def oracle_detector_prob(readout: int, i: int, det: DetectorModel) -> float:
    p0 = oracle_pnr_prob(0, i, det)
    if det.family is Family.THRESHOLD:
        return p0 if readout == 0 else (1 - p0 if readout == 1 else 0.0)
    return oracle_pnr_prob(readout, i, det)


# ---------------------------------------------------------------------------
# the full chain


@dataclass
class ChainState:
    """Sparse chain amplitudes grouped by station readout.

    ``table[(station_counts, end_occupations)]`` is the amplitude, with
    ``station_counts`` one ``(b_H, b_V, c_V, c_H)``-ordered fourtuple per
    station and end occupations ordered ``(a_H, a_V, d_V, d_H)``.
    """

    N: int
    table: dict


def station_modes(N: int) -> list[tuple[int, int, int, int]]:
    """Output modes read by each station's fourtuple, station order 1..2N-1."""
    from .chain import TopologyMap

    out = [(mode(p, B_H), mode(p, B_V), mode(p, C_V), mode(p, C_H)) for p in range(N)]
    for alpha, beta in TopologyMap(N).joins():
        # the a end of the left block plays the b role, the d end of the right block the c role
        left, right = beta - 1, beta
        out.append((mode(left, A_H), mode(left, A_V), mode(right, D_V), mode(right, D_H)))
    return out


def end_modes(N: int) -> tuple[int, int, int, int]:
    return (mode(N - 1, A_H), mode(N - 1, A_V), mode(0, D_V), mode(0, D_H))


def estimate_support(N: int, n_max: int) -> int:
    """Upper bound on amplitudes held by one readout branch (memory guard).

    With a segment's station counts fixed, each polarization sector splits a
    known photon total between its two ends, so an open segment has at most
    (2 n_max + 1)^2 configurations and at most N segments are open at once.
    """
    return (2 * n_max + 1) ** (2 * N)


@lru_cache(maxsize=None)
def segment_branches(chi: float, n_max: int) -> dict:
    """One segment on its own 8 modes, split by the segment station's counts.

    Four squeezers on vacuum, then a 50:50 beamsplitter per polarization
    between b and c.  Returns
    ``{(b_H, b_V, c_V, c_H): SparseKet}`` for counts up to ``n_max``.
    """
    ket = vacuum(MODES_PER_SEGMENT)
    for x, y in ((A_H, B_H), (A_V, B_V), (C_H, D_H), (C_V, D_V)):
        ket = apply_squeezer(ket, (x, y), chi, 2 * n_max)
    for b, c in ((B_H, C_H), (B_V, C_V)):
        ket = apply_beamsplitter(ket, (b, c))
    out: dict = defaultdict(dict)
    for occ, amp in ket.items():
        counts = (occ[B_H], occ[B_V], occ[C_V], occ[C_H])
        if max(counts) <= n_max:
            out[counts][occ] = amp
    return dict(out)


def _circuit(N: int):
    """Station order of the circuit: each segment, then every tree join it completes."""
    from .chain import TopologyMap

    pending = list(TopologyMap(N).joins())
    ops = []
    for p in range(N):
        ops.append(("segment", p + 1, p))
        for alpha, beta in list(pending):
            if _join_span(N, alpha, beta)[1] <= p + 1:
                pending.remove((alpha, beta))
                ops.append(("join", alpha, beta))
    return ops


def _join_span(N: int, alpha: int, beta: int) -> tuple[int, int]:
    """Segments (1-based, inclusive) that must exist before station alpha can act."""
    from .chain import TopologyMap

    left, right = TopologyMap(N).block_of(alpha)
    return left[0], right[-1]


def iter_readouts(
    N: int,
    chi: float | Sequence[float],
    n_max: int,
    angles=None,
    station_filter=None,
    budget: int = 2 * 10**6,
):
    """Yield ``(station_counts, end_ket)`` for every ideal readout, depth first.

    Station modes are measured right after their beamsplitter, so each
    branch holds only the amplitudes consistent with its readout history;
    counts above ``n_max`` are discarded there, which is the truncation of
    the closed form.  ``end_ket`` maps ``(a_H, a_V, d_V, d_H)`` occupations
    of the chain ends (rotated by ``angles`` if given) to amplitudes.
    ``station_filter(station, counts)`` may prune branches early.
    """
    chis = [chi] * N if isinstance(chi, (int, float)) else list(chi)
    if len(chis) != N:
        raise ValueError("need one chi per segment")
    if estimate_support(N, n_max) > budget:
        raise MemoryError(f"oracle branch support estimate {estimate_support(N, n_max)} exceeds {budget}")
    smodes = station_modes(N)
    ends = end_modes(N)
    ops = _circuit(N)
    n_modes = MODES_PER_SEGMENT * N

    def branches(op, ket):
        kind, station, arg = op
        if kind == "segment":
            base = MODES_PER_SEGMENT * arg
            for counts, seg in sorted(segment_branches(chis[arg], n_max).items()):
                out = {}
                for occ, a in ket.items():
                    for socc, b in seg.items():
                        new = occ[:base] + socc + occ[base + MODES_PER_SEGMENT:]
                        out[new] = a * b
                yield counts, out
            return
        left, right = arg - 1, arg
        for pl, pr in ((A_H, D_H), (A_V, D_V)):
            ket = apply_beamsplitter(ket, (mode(left, pl), mode(right, pr)))
        groups: dict = defaultdict(dict)
        for occ, a in ket.items():
            counts = tuple(occ[m] for m in smodes[station - 1])
            if max(counts) <= n_max:
                groups[counts][occ] = a
        yield from sorted(groups.items())

    def walk(k, ket, readout):
        if k == len(ops):
            if angles is not None:
                ket = apply_rotator(ket, (ends[0], ends[1]), angles[0])
                ket = apply_rotator(ket, (ends[3], ends[2]), angles[1])
            key = tuple(readout[s] for s in range(1, 2 * N))
            yield key, {tuple(occ[m] for m in ends): a for occ, a in ket.items()}
            return
        station = ops[k][1]
        for counts, sub in branches(ops[k], ket):
            if station_filter is not None and not station_filter(station, counts):
                continue
            if len(sub) > budget:
                raise MemoryError(f"oracle branch support {len(sub)} exceeds {budget}")
            yield from walk(k + 1, sub, {**readout, station: counts})

    yield from walk(0, vacuum(n_modes), {})


def build_chain(N: int, chi, n_max: int, angles=None, budget: int = 2 * 10**6) -> ChainState:
    """Collect :func:`iter_readouts` into one table (small chains only)."""
    table = {}
    for sc, ket in iter_readouts(N, chi, n_max, angles, budget=budget):
        for end, a in ket.items():
            table[(sc, end)] = a
    return ChainState(N, table)


def oracle_end_ket(N: int, chi, n_max: int, counts) -> SparseKet:
    """End ket (unrotated) for fixed ideal station counts."""
    want = [tuple(c) for c in counts]
    smap = dict(enumerate(want, start=1))
    for sc, ket in iter_readouts(N, chi, n_max, station_filter=lambda s, c: c == smap[s]):
        return ket
    return {}


def oracle_coincidence(
    spec,
    readouts,
    angles,
    analyzer_detectors: Sequence[DetectorModel] | DetectorModel | None = None,
    budget: int = 2 * 10**6,
):
    """Q for the four analyzer patterns, end to end by brute force.

    ``readouts`` is ``None`` (the chain's default post-selection patterns), one
    fourtuple used at every station, or one fourtuple / set of fourtuples
    per station.  Detector likelihoods use the thermal-noise beamsplitter
    model above, not the closed-form expressions.
    """
    from .analysis import CoincidenceResult, _angles

    alpha, delta = _angles(angles)
    N, n_max = spec.N, spec.n_max
    if readouts is None:
        sets = [[tuple(p) for p in st] for st in spec.postselect_patterns]
    else:
        readouts = list(readouts)
        if len(readouts) == 4 and all(isinstance(r, int) for r in readouts):
            readouts = [tuple(readouts)] * spec.n_stations
        sets = [[tuple(st)] if isinstance(st[0], int) else [tuple(p) for p in st] for st in readouts]
    if analyzer_detectors is None:
        adets = [DetectorModel(Family.PNR)] * 4
    elif isinstance(analyzer_detectors, DetectorModel):
        adets = [analyzer_detectors] * 4
    else:
        adets = list(analyzer_detectors)

    @lru_cache(maxsize=None)
    def station_like(station, counts):
        dets = spec.bell_detectors[station - 1]
        return math.fsum(
            math.prod(oracle_detector_prob(r, x, d) for r, x, d in zip(pat, counts, dets))
            for pat in sets[station - 1]
        )

    @lru_cache(maxsize=None)
    def ana(pat, end):
        return math.prod(oracle_detector_prob(r, x, d) for r, x, d in zip(pat, end, adets))

    patterns = {"1010": (1, 0, 1, 0), "0101": (0, 1, 0, 1), "1001": (1, 0, 0, 1), "0110": (0, 1, 1, 0)}
    num = dict.fromkeys(patterns, 0.0)
    den = 0.0
    chis = [spec.source.chi_for(p) for p in range(N)]
    keep = lambda s, c: station_like(s, c) > 0.0  # noqa: E731
    for sc, ket in iter_readouts(N, chis, n_max, (alpha, delta), keep, budget):
        like = math.prod(station_like(s, c) for s, c in enumerate(sc, start=1))
        for end, amp in ket.items():
            w = like * abs(amp) ** 2
            den += w
            for name, pat in patterns.items():
                num[name] += w * ana(pat, end)
    if den == 0.0:
        raise ArithmeticError("readout impossible in oracle state")
    q = {k: v / den for k, v in num.items()}
    return CoincidenceResult(
        q["1010"], q["0101"], q["0110"], q["1001"], alpha, delta,
        {"N": N, "n_max": n_max, "source": "oracle"},
    )


def oracle_transition_probability(spec, counts, analyzer_counts, angles) -> float:
    """|A|^2 for ideal station and analyzer counts, by brute force."""
    chis = [spec.source.chi_for(p) for p in range(spec.N)]
    smap = {s: tuple(c) for s, c in enumerate(counts, start=1)}
    for _, ket in iter_readouts(spec.N, chis, spec.n_max, angles, lambda s, c: c == smap[s]):
        return abs(ket.get(tuple(analyzer_counts), 0.0)) ** 2
    return 0.0
