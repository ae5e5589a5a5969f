"""Closed-form amplitude engine for a chain of N = 2^k swapping segments.

Conventions
-----------
Segment ``p`` (1-based) owns a left end mode ``d_p`` and a right end mode
``a_p``.  Its own Bell station (station ``p``) records the fourtuple
``(i, j, k, l)`` at detectors ``(b_H, b_V, c_V, c_H)``.  Stations
``N+1 .. 2N-1`` join the right end of one block with the left end of the
next, following :class:`TopologyMap`.  Every station count is an *ideal*
count, capped at ``n_max``.

End kets are dicts keyed by the occupations ``(a_H, a_V, d_V, d_H)`` of the
outer modes ``a_N`` and ``d_1``, which is also the slot order of the
analyzer fourtuple ``(i', j', k', l')``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .detector import DetectorModel, OutcomeTuple, perfect_detector
from .source import SourceParams, TruncationConfig
from .specfun import DEFAULT_CACHE, binomial

Ket = dict[tuple[int, int, int, int], complex]
Counts = tuple[int, int, int, int]

SINGLET_PATTERNS = (OutcomeTuple(1, 0, 1, 0), OutcomeTuple(0, 1, 0, 1))

#: Refuse kets whose pruned loop nest would exceed this many visits.
DEFAULT_TERM_BUDGET = 5 * 10**7


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _levels(N: int) -> int:
    if not is_power_of_two(N):
        raise ValueError(f"chain length N={N} is not a power of two")
    return N.bit_length() - 1


@dataclass(frozen=True)
class TopologyMap:
    """Which segments each tree-level Bell station joins.

    Station ``alpha(m, n)`` joins the right end ``a`` of segment
    ``beta(m, n)`` with the left end ``d`` of segment ``beta(m, n) + 1``.
    """

    N: int

    def __post_init__(self):
        _levels(self.N)

    @property
    def levels(self) -> int:
        return _levels(self.N)

    def alpha(self, m: int, n: int) -> int:
        return int(round(self.N * (1 - 0.5**m) / 0.5)) + n

    @staticmethod
    def beta(m: int, n: int) -> int:
        return 2 ** (m - 1) * (2 * n - 1)

    def joins(self) -> list[tuple[int, int]]:
        """``(alpha, beta)`` for every tree station, level by level."""
        out = []
        for m in range(1, self.levels + 1):
            for n in range(1, self.N // 2**m + 1):
                out.append((self.alpha(m, n), self.beta(m, n)))
        return out

    def n_stations(self) -> int:
        return 2 * self.N - 1

    def block_of(self, station: int) -> tuple[range, range]:
        """Segments on the left and right of a tree station (for inspection)."""
        for m in range(1, self.levels + 1):
            for n in range(1, self.N // 2**m + 1):
                if self.alpha(m, n) == station:
                    width = 2 ** (m - 1)
                    start = (n - 1) * 2 * width + 1
                    return range(start, start + width), range(start + width, start + 2 * width)
        raise KeyError(station)


@dataclass(frozen=True)
class ChainSpec:
    N: int = 2
    source: SourceParams = field(default_factory=SourceParams)
    trunc: TruncationConfig = field(default_factory=TruncationConfig)
    bell_detectors: tuple[tuple[DetectorModel, ...], ...] = ()
    postselect_patterns: tuple[tuple[OutcomeTuple, ...], ...] = ()

    def __post_init__(self):
        _levels(self.N)
        ns = 2 * self.N - 1
        dets = self.bell_detectors or ((perfect_detector("threshold"),) * 4,) * ns
        if isinstance(dets, DetectorModel):
            dets = ((dets,) * 4,) * ns
        if isinstance(dets[0], DetectorModel):
            dets = (tuple(dets),) * ns
        dets = tuple(tuple(d) if len(d) == 4 else (d[0],) * 4 for d in dets)
        if len(dets) == 1:
            dets = dets * ns
        if len(dets) != ns:
            raise ValueError(f"need detector fourtuples for {ns} stations, got {len(dets)}")
        object.__setattr__(self, "bell_detectors", dets)
        pats = self.postselect_patterns or (SINGLET_PATTERNS,) * ns
        pats = tuple(tuple(OutcomeTuple(*p) for p in st) for st in pats)
        if len(pats) == 1:
            pats = pats * ns
        if len(pats) != ns:
            raise ValueError(f"need post-selection patterns for {ns} stations")
        object.__setattr__(self, "postselect_patterns", pats)
        if self.source.per_segment and len(self.source.per_segment) != self.N:
            raise ValueError("per-segment chi list must have N entries")

    @property
    def n_max(self) -> int:
        return self.trunc.n_max

    @property
    def n_stations(self) -> int:
        return 2 * self.N - 1

    @property
    def topology(self) -> TopologyMap:
        return TopologyMap(self.N)

    def non_default_patterns(self) -> bool:
        return any(p not in SINGLET_PATTERNS for st in self.postselect_patterns for p in st)


@dataclass(frozen=True)
class IndexAssignment:
    """Bound summation indices: one ``(mu, nu, kappa, lam)`` per segment."""

    bound: tuple[Counts, ...]


# ---------------------------------------------------------------------------
# single-segment and single-station pieces


def segment_coefficient(counts: Counts, bound: Counts) -> float:
    """Sign, binomials and 1/sqrt(2^n i!j!k!l!) of one segment's sum.

    ``kappa`` and ``lam`` count the c-detector photons whose partners sit in
    ``a``; under b^dag -> (b^dag - c^dag)/sqrt2 each of them brings a minus
    sign, hence (-1)^(kappa + lam).
    """
    i, j, k, l = counts
    mu, nu, ka, la = bound
    c = binomial(i, mu) * binomial(j, nu) * binomial(k, ka) * binomial(l, la)
    if c == 0:
        return 0.0
    sign = -1.0 if (ka + la) & 1 else 1.0
    return sign * c / math.sqrt(2.0 ** (i + j + k + l) * _fact(i) * _fact(j) * _fact(k) * _fact(l))


def _fact(n: int) -> int:
    return math.factorial(n)


def ideal_swap_state(i: int, j: int, k: int, l: int) -> Ket:
    """End ket of one segment for ideal station counts (b_H, b_V, c_V, c_H).

    Unnormalized, with no source prefactor.  Amplitudes are in the Fock basis,
    so each operator power a^n|vac> contributes sqrt(n!).
    """
    ket: Ket = {}
    for mu, nu, ka, la in itertools.product(range(i + 1), range(j + 1), range(k + 1), range(l + 1)):
        coef = segment_coefficient((i, j, k, l), (mu, nu, ka, la))
        aH, aV = mu + la, nu + ka
        dH, dV = i + l - aH, j + k - aV
        key = (aH, aV, dV, dH)
        amp = coef * math.sqrt(_fact(aH) * _fact(aV) * _fact(dH) * _fact(dV))
        ket[key] = ket.get(key, 0.0) + amp
    return _clean(ket)


def beamsplitter_matrix_element(m_in: int, n_in: int, i3: int, l3: int) -> float:
    """<i3, l3| U_B (a^dag)^m_in (d^dag)^n_in |vac>.

    Port ``i3`` is the detector on the ``a`` side.  Inputs are operator powers
    on vacuum, not normalized Fock states.
    """
    if i3 + l3 != m_in + n_in:
        return 0.0
    om = DEFAULT_CACHE.omega(m_in, i3, l3)
    return om * math.sqrt(_fact(i3) * _fact(l3) / 2.0 ** (i3 + l3))


def station_factor(counts: Counts, m_h: int, m_v: int) -> float:
    """Omega kernels and sqrt(i!j!k!l!/2^n) of a tree station.

    ``m_h`` / ``m_v`` are the photons the left block's right end carries into
    the station in each polarization.  The Kronecker deltas are handled by
    the caller.
    """
    i, j, k, l = counts
    oh = DEFAULT_CACHE.omega(m_h, i, l)
    if oh == 0:
        return 0.0
    ov = DEFAULT_CACHE.omega(m_v, j, k)
    if ov == 0:
        return 0.0
    return oh * ov * math.sqrt(_fact(i) * _fact(j) * _fact(k) * _fact(l) / 2.0 ** (i + j + k + l))


# ---------------------------------------------------------------------------
# enumeration


@dataclass
class EnumerationStats:
    """Innermost-loop candidates tried (``visited``) and kept (``yielded``)."""

    visited: int = 0
    yielded: int = 0


def naive_visit_count(N: int, station_counts: Sequence[Counts]) -> int:
    """Size of the full Cartesian product of bound-index ranges."""
    total = 1
    for c in station_counts[:N]:
        for x in c:
            total *= x + 1
    return total


def _delta_ok(spec_topology: TopologyMap, counts, bound) -> bool:
    for alpha, beta in spec_topology.joins():
        i, j, k, l = counts[alpha - 1]
        mu, nu, ka, la = bound[beta - 1]
        ir, jr, kr, lr = counts[beta]
        mur, nur, kar, lar = bound[beta]
        if i + l != mu + la + ir + lr - mur - lar:
            return False
        if j + k != nu + ka + jr + kr - nur - kar:
            return False
    return True


def enumerate_constrained(
    spec: ChainSpec | int,
    station_counts: Sequence[Counts],
    mode: str = "pruned",
    stats: EnumerationStats | None = None,
) -> Iterator[IndexAssignment]:
    """Bound-index assignments whose Kronecker-delta product is nonzero.

    ``naive`` walks the full Cartesian product and filters; ``pruned`` solves
    each tree-station delta pair for ``lam`` and ``kappa`` of the right-hand
    segment, so both modes yield the same assignments in the same order.
    """
    N = spec if isinstance(spec, int) else spec.N
    topo = TopologyMap(N)
    counts = [tuple(c) for c in station_counts]
    if len(counts) != 2 * N - 1:
        raise ValueError(f"expected {2 * N - 1} station fourtuples, got {len(counts)}")
    stats = stats if stats is not None else EnumerationStats()
    segs = counts[:N]
    if mode == "naive":
        ranges = [range(x + 1) for c in segs for x in c]
        for flat in itertools.product(*ranges):
            stats.visited += 1
            bound = tuple(tuple(flat[4 * p : 4 * p + 4]) for p in range(N))
            if _delta_ok(topo, counts, bound):
                stats.yielded += 1
                yield IndexAssignment(bound)
        return
    if mode != "pruned":
        raise ValueError(f"unknown enumeration mode {mode!r}")

    # station joining segment p (1-based, p >= 2) to its left neighbour
    join_for = {beta + 1: counts[alpha - 1] for alpha, beta in topo.joins()}

    def rec(p: int, bound: list):
        if p > N:
            stats.yielded += 1
            yield IndexAssignment(tuple(bound))
            return
        i, j, k, l = segs[p - 1]
        if p == 1:
            for b in itertools.product(range(i + 1), range(j + 1), range(k + 1), range(l + 1)):
                stats.visited += N == 1
                bound.append(b)
                yield from rec(p + 1, bound)
                bound.pop()
            return
        si, sj, sk, sl = join_for[p]
        mu0, nu0, ka0, la0 = bound[-1]
        for mu in range(i + 1):
            la = mu0 + la0 + i + l - mu - (si + sl)
            if not 0 <= la <= l:
                stats.visited += (p == N) * (j + 1)
                continue
            for nu in range(j + 1):
                stats.visited += p == N
                ka = nu0 + ka0 + j + k - nu - (sj + sk)
                if not 0 <= ka <= k:
                    continue
                bound.append((mu, nu, ka, la))
                yield from rec(p + 1, bound)
                bound.pop()

    yield from rec(1, [])


def estimate_terms(N: int, n_max: int) -> int:
    """Upper bound on pruned visits for a single multi-index at cap n_max."""
    per = (n_max + 1) ** 4
    tail = (n_max + 1) ** 2
    return per * tail ** (N - 1)


# ---------------------------------------------------------------------------
# kets


def _source_prefactor(spec: ChainSpec, segs: Sequence[Counts]) -> float:
    w = 1.0
    for p, c in enumerate(segs):
        chi = spec.source.chi_for(p)
        w *= math.tanh(chi) ** sum(c) / math.cosh(chi) ** 4
    return w


def _assignment_term(topo: TopologyMap, counts, bound) -> float:
    """Product of segment and station factors for one assignment."""
    N = topo.N
    val = 1.0
    for p in range(N):
        val *= segment_coefficient(counts[p], bound[p])
        if val == 0.0:
            return 0.0
    for alpha, beta in topo.joins():
        mu, nu, ka, la = bound[beta - 1]
        val *= station_factor(counts[alpha - 1], mu + la, nu + ka)
        if val == 0.0:
            return 0.0
    return val


def _end_powers(counts, bound, N) -> tuple[int, int, int, int]:
    """Operator powers (a_NH, a_NV, d_1V, d_1H) of the outer modes."""
    i1, j1, k1, l1 = counts[0]
    mu1, nu1, ka1, la1 = bound[0]
    muN, nuN, kaN, laN = bound[N - 1]
    return (muN + laN, nuN + kaN, j1 + k1 - nu1 - ka1, i1 + l1 - mu1 - la1)


def general_n_ket(
    spec: ChainSpec,
    counts: Sequence[Counts],
    mode: str = "pruned",
    include_source: bool = True,
    budget: int = DEFAULT_TERM_BUDGET,
    stats: EnumerationStats | None = None,
) -> Ket:
    """Unnormalized end ket of the whole chain for ideal counts at every station."""
    N = spec.N
    counts = [tuple(c) for c in counts]
    est = naive_visit_count(N, counts) if mode == "naive" else estimate_terms(N, max(max(c) for c in counts))
    if est > budget:
        raise MemoryError(f"ket needs ~{est} term visits, budget {budget}")
    topo = TopologyMap(N)
    ket: Ket = {}
    for asg in enumerate_constrained(N, counts, mode=mode, stats=stats):
        val = _assignment_term(topo, counts, asg.bound)
        if val == 0.0:
            continue
        key = _end_powers(counts, asg.bound, N)
        aH, aV, dV, dH = key
        if min(key) < 0:
            raise AssertionError(f"photon conservation violated at {asg}")
        val *= math.sqrt(_fact(aH) * _fact(aV) * _fact(dV) * _fact(dH))
        ket[key] = ket.get(key, 0.0) + val
    if include_source:
        w = _source_prefactor(spec, counts[:N])
        ket = {k: v * w for k, v in ket.items()}
    return _clean(ket)


def n2_conditioned_ket(spec: ChainSpec, counts: Sequence[Counts], include_source: bool = True) -> Ket:
    """N = 2 end ket written out as an explicit loop nest.

    The two deltas of the middle station are solved for ``lam_2`` and
    ``kappa_2``; this is kept independent of :func:`general_n_ket` so the two
    can check each other.
    """
    if spec.N != 2:
        raise ValueError("n2_conditioned_ket needs N = 2")
    (i1, j1, k1, l1), (i2, j2, k2, l2), (i3, j3, k3, l3) = [tuple(c) for c in counts]
    pref1 = 1.0 / math.sqrt(2.0 ** (i1 + j1 + k1 + l1) * _fact(i1) * _fact(j1) * _fact(k1) * _fact(l1))
    pref2 = 1.0 / math.sqrt(2.0 ** (i2 + j2 + k2 + l2) * _fact(i2) * _fact(j2) * _fact(k2) * _fact(l2))
    pref3 = math.sqrt(_fact(i3) * _fact(j3) * _fact(k3) * _fact(l3) / 2.0 ** (i3 + j3 + k3 + l3))
    ket: Ket = {}
    for mu1 in range(i1 + 1):
        for la1 in range(l1 + 1):
            oh = DEFAULT_CACHE.omega(mu1 + la1, i3, l3)
            if oh == 0:
                continue
            for nu1 in range(j1 + 1):
                for ka1 in range(k1 + 1):
                    ov = DEFAULT_CACHE.omega(nu1 + ka1, j3, k3)
                    if ov == 0:
                        continue
                    c1 = (-1) ** (ka1 + la1) * binomial(i1, mu1) * binomial(j1, nu1) * binomial(k1, ka1) * binomial(l1, la1)
                    for mu2 in range(i2 + 1):
                        la2 = mu1 + la1 + i2 + l2 - mu2 - i3 - l3
                        if not 0 <= la2 <= l2:
                            continue
                        for nu2 in range(j2 + 1):
                            ka2 = nu1 + ka1 + j2 + k2 - nu2 - j3 - k3
                            if not 0 <= ka2 <= k2:
                                continue
                            c2 = (-1) ** (ka2 + la2) * binomial(i2, mu2) * binomial(j2, nu2) * binomial(k2, ka2) * binomial(l2, la2)
                            dH, dV = i1 + l1 - mu1 - la1, j1 + k1 - nu1 - ka1
                            aH, aV = mu2 + la2, nu2 + ka2
                            amp = c1 * c2 * oh * ov * math.sqrt(_fact(aH) * _fact(aV) * _fact(dV) * _fact(dH))
                            key = (aH, aV, dV, dH)
                            ket[key] = ket.get(key, 0.0) + amp
    scale = pref1 * pref2 * pref3
    if include_source:
        scale *= _source_prefactor(spec, [(i1, j1, k1, l1), (i2, j2, k2, l2)])
    return _clean({k: v * scale for k, v in ket.items()})


def _clean(ket: Ket, atol: float = 0.0) -> Ket:
    return {k: v for k, v in ket.items() if abs(v) > atol}


def ket_norm2(ket: Ket) -> float:
    return math.fsum(abs(v) ** 2 for v in ket.values())


def normalized(ket: Ket) -> Ket:
    n = math.sqrt(ket_norm2(ket))
    if n == 0.0:
        raise ZeroDivisionError("cannot normalize the zero ket")
    return {k: v / n for k, v in ket.items()}


# ---------------------------------------------------------------------------
# polarization rotators and the transition amplitude


def rotator_amplitude(p: int, q: int, out_h: int, out_v: int, angle: float) -> complex:
    """<out_h, out_v| U(angle) (h^dag)^p (v^dag)^q |vac> by direct expansion.

    U(angle) = exp[i angle/2 (v^dag h + v h^dag)] maps h^dag to
    cos(angle/2) h^dag + i sin(angle/2) v^dag (and h <-> v).
    """
    if out_h + out_v != p + q:
        return 0.0
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    total = 0.0
    for n in range(max(0, out_v - p), min(q, out_v) + 1):
        # n vertical photons stay vertical, out_v - n horizontal ones flip
        e = q - n + out_v - n
        total += math.comb(q, n) * math.comb(p, out_v - n) * c ** (p + q - e) * s**e * (1j) ** e
    return total * math.sqrt(_fact(out_h) * _fact(out_v))


def rotator_amplitude_nested(p: int, q: int, out_h: int, out_v: int, angle: float) -> complex:
    """Same matrix element via the tan/cos nested sum over ``n``.

    Singular where cos(angle/2) = 0 and loses digits to cancellation as it
    gets close, so it is kept as a cross-check of :func:`rotator_amplitude`.
    """
    if out_h + out_v != p + q:
        return 0.0
    th = angle / 2
    c, t = math.cos(th), math.tan(th)
    total = 0.0
    for n in range(min(out_v, q) + 1):
        total += (
            (1j * t) ** (q + out_v - 2 * n)
            * c ** (out_h + out_v - 2 * n)
            * _fact(out_h + out_v - n)
            / (_fact(n) * _fact(out_v - n) * _fact(q - n))
        )
    return total * _fact(q) * math.sqrt(_fact(out_v) / _fact(out_h))


def transition_amplitude(
    counts: Sequence[Counts],
    analyzer: Counts,
    angles: tuple[float, float],
    spec: ChainSpec,
    mode: str = "pruned",
) -> complex:
    """Amplitude <i'j'k'l'| U_a(alpha) U_d(delta) |Phi> for ideal station counts.

    ``analyzer`` is ``(i', j', k', l')`` on ``(a_H, a_V, d_V, d_H)``; the
    transition probability is the squared modulus.
    """
    N = spec.N
    _levels(N)
    alpha_t, delta_t = angles
    ip, jp, kp, lp = analyzer
    counts = [tuple(c) for c in counts]
    topo = TopologyMap(N)
    total = 0.0
    for asg in enumerate_constrained(N, counts, mode=mode):
        aH, aV, dV, dH = _end_powers(counts, asg.bound, N)
        if ip + jp != aH + aV or kp + lp != dH + dV:
            continue
        val = _assignment_term(topo, counts, asg.bound)
        if val == 0.0:
            continue
        ra = rotator_amplitude(aH, aV, ip, jp, alpha_t)
        rd = rotator_amplitude(dH, dV, lp, kp, delta_t)
        total += val * ra * rd
    return total * _source_prefactor(spec, counts[:N])


def rotate_ket(ket: Ket, angles: tuple[float, float]) -> Ket:
    """Apply both end-station rotators to a Fock-basis end ket."""
    alpha_t, delta_t = angles
    out: Ket = {}
    for (aH, aV, dV, dH), amp in ket.items():
        norm = math.sqrt(_fact(aH) * _fact(aV) * _fact(dV) * _fact(dH))
        ta, td = aH + aV, dH + dV
        for ip in range(ta + 1):
            ra = rotator_amplitude(aH, aV, ip, ta - ip, alpha_t)
            if ra == 0:
                continue
            for lp in range(td + 1):
                rd = rotator_amplitude(dH, dV, lp, td - lp, delta_t)
                if rd == 0:
                    continue
                key = (ip, ta - ip, td - lp, lp)
                out[key] = out.get(key, 0.0) + amp * ra * rd / norm
    return out
