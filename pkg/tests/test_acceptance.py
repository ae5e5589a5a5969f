"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict that the conftest prints in
the terminal summary.  Run on its own with ``python tests/test_acceptance.py``.
"""

import csv
import itertools
import math
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from qrelay import cli
from qrelay.analysis import coincidence_q, multi_indices, posterior, readout_likelihood, visibility_sweep
from qrelay.chain import (
    ChainSpec,
    EnumerationStats,
    general_n_ket,
    ideal_swap_state,
    n2_conditioned_ket,
    naive_visit_count,
    normalized,
)
from qrelay.detector import DetectorModel, Family, pnr_normalization
from qrelay.oracle import oracle_coincidence
from qrelay.source import SourceParams, TruncationConfig

SINGLET_4 = {(1, 0, 1, 0): 0.5, (0, 1, 0, 1): -0.5, (0, 0, 1, 1): 0.5, (1, 1, 0, 0): -0.5}
PATTERNS = ("Q1010", "Q0101", "Q1001", "Q0110")
HALF_PI = math.pi / 2
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def chain(N, n_max, chi=0.24, eta=0.04, dark=1e-5, family="threshold"):
    det = DetectorModel(Family(family), eta, dark)
    return ChainSpec(N=N, source=SourceParams(chi), trunc=TruncationConfig(n_max), bell_detectors=det)


def analyzers(eta=0.04, dark=1e-5):
    return DetectorModel(Family.PNR, eta, dark)


def ket_error(ket, ref):
    return max(abs(ket.get(k, 0.0) - ref.get(k, 0.0)) for k in ket.keys() | ref.keys())


def reference_visibility(N, n_max, chi=0.24):
    return visibility_sweep(chain(N, n_max, chi), HALF_PI, analyzer_detectors=analyzers()).visibility


def test_criterion_01_single_swap_ket(record_acceptance):
    t0 = time.perf_counter()
    ket = normalized(ideal_swap_state(1, 0, 1, 0))
    err = ket_error(ket, SINGLET_4)
    wall = time.perf_counter() - t0
    ok = err < 1e-12 and wall < 1.0
    assert record_acceptance(1, ok, f"max |amplitude - printed| = {err:.1e}, {wall * 1e3:.1f} ms")


def test_criterion_02_two_segment_ket(record_acceptance):
    t0 = time.perf_counter()
    ket = normalized(n2_conditioned_ket(chain(2, 1), [(1, 0, 1, 0)] * 3))
    err = ket_error(ket, SINGLET_4)
    wall = time.perf_counter() - t0
    ok = err < 1e-12 and wall < 1.0
    assert record_acceptance(2, ok, f"max |amplitude - printed| = {err:.1e}, {wall * 1e3:.1f} ms")


def test_criterion_03_ideal_correlation(record_acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    grid = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    for family in ("pnr", "threshold"):
        spec = chain(2, 1, eta=1.0, dark=0.0, family=family)
        ens = posterior(None, spec)
        for alpha in (0.0, HALF_PI):
            for delta in grid:
                res = coincidence_q(None, (alpha, delta), analyzers(1.0, 0.0), spec, ensemble=ens)
                worst = max(worst, abs(res.correlation - math.cos(alpha - delta)))
    wall = time.perf_counter() - t0
    ok = worst < 1e-9 and wall < 60
    assert record_acceptance(3, ok, f"max |P - cos(a - d)| = {worst:.1e} over 2 x 64 points, {wall:.1f} s")


def _random_point(rng, N, n_max):
    return dict(
        N=N,
        n_max=n_max,
        chi=rng.uniform(0.05, 0.4),
        eta=rng.uniform(0.02, 0.98),
        dark=10 ** rng.uniform(-6, -3),
        family=rng.choice(["threshold", "pnr"]),
        angles=(rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi)),
    )


def _oracle_gap(p):
    spec = chain(p["N"], p["n_max"], p["chi"], p["eta"], p["dark"], p["family"])
    ana = analyzers(p["eta"], p["dark"])
    closed = coincidence_q(None, p["angles"], ana, spec)
    brute = oracle_coincidence(spec, None, p["angles"], ana)
    return max(abs(getattr(closed, q) - getattr(brute, q)) / getattr(brute, q) for q in PATTERNS)


@pytest.mark.slow
def test_criterion_04_oracle_equivalence(record_acceptance):
    rng = random.Random(2024)
    t0 = time.perf_counter()
    single = [_random_point(rng, 1, rng.choice([1, 2, 3])) for _ in range(20)]
    double = [_random_point(rng, 2, n) for n in [1] * 5 + [2] * 5]
    gap_a = max(_oracle_gap(p) for p in single)
    gap_b = max(_oracle_gap(p) for p in double)
    wall = time.perf_counter() - t0
    ok = gap_a < 1e-9 and gap_b < 1e-9 and wall < 1800
    detail = f"max rel diff N=1: {gap_a:.1e} (20 tuples), N=2: {gap_b:.1e} (10 tuples), {wall:.0f} s"
    assert record_acceptance(4, ok, detail)


def test_criterion_05_single_swap_visibility(record_acceptance):
    v = reference_visibility(1, 4)
    assert record_acceptance(5, abs(v - 0.70) <= 0.05, f"V(N=1, n_max=4) = {v:.4f}")


@pytest.mark.slow
def test_criterion_06_two_segment_visibility(record_acceptance):
    t0 = time.perf_counter()
    v = reference_visibility(2, 3)
    wall = time.perf_counter() - t0
    assert record_acceptance(6, abs(v - 0.32) <= 0.05, f"V(N=2, n_max=3) = {v:.4f}, {wall:.1f} s")


@pytest.mark.slow
def test_criterion_07_pump_degradation(record_acceptance):
    v1 = [reference_visibility(1, 3, c) for c in (0.15, 0.30)]
    v2 = [reference_visibility(2, 3, c) for c in (0.15, 0.30)]
    d1, d2 = v1[1] - v1[0], v2[1] - v2[0]
    ok = d1 < 0 and d2 < 0 and d2 < d1
    detail = f"N=1: {v1[0]:.4f} -> {v1[1]:.4f} ({d1:+.4f}); N=2: {v2[0]:.4f} -> {v2[1]:.4f} ({d2:+.4f})"
    assert record_acceptance(7, ok, detail)


def test_criterion_08_complementary_curves(tmp_path, record_acceptance):
    out = tmp_path / "fig4.csv"
    assert cli.main(["--config", str(CONFIGS / "fig4.cfg"), "--out", str(out)]) == cli.EXIT_OK
    with out.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    delta = np.array([float(r["delta_tilde"]) for r in rows])
    par = np.array([float(r["Qsum_parallel"]) for r in rows])
    crs = np.array([float(r["Qsum_crossed"]) for r in rows])
    step = delta[1] - delta[0]
    gap = abs(delta[par.argmax()] - delta[crs.argmax()]) % (2 * math.pi)
    gap = min(gap, 2 * math.pi - gap)
    ok = abs(gap - math.pi) <= step
    detail = f"argmax parallel {delta[par.argmax()]:.4f}, crossed {delta[crs.argmax()]:.4f}, step {step:.4f}"
    assert record_acceptance(8, ok, detail)


def test_criterion_09_detector_normalization(record_acceptance):
    t0 = time.perf_counter()
    worst, threshold_ok = 0.0, True
    for eta, dark, i in itertools.product((0.04, 0.5, 0.93), (0.0, 1e-5, 1e-3), range(7)):
        pnr = DetectorModel(Family.PNR, eta, dark)
        worst = max(worst, abs(1.0 - pnr_normalization(i, pnr, q_max=i + 64)))
        thr = DetectorModel(Family.THRESHOLD, eta, dark)
        threshold_ok &= thr.prob(0, i) + thr.prob(1, i) == 1.0
    wall = time.perf_counter() - t0
    ok = worst < 1e-10 and threshold_ok and wall < 1.0
    detail = f"max |1 - sum p(q|i)| = {worst:.1e}, threshold sums exact: {threshold_ok}, {wall * 1e3:.0f} ms"
    assert record_acceptance(9, ok, detail)


@pytest.mark.slow
def test_criterion_10_enumeration_soundness(record_acceptance):
    t0 = time.perf_counter()
    worst_ket, counts_ok, worst_weight, n_kets = 0.0, True, 0.0, 0
    for N, n_max in itertools.product((1, 2), (1, 2)):
        spec = chain(N, n_max)
        sets = [[(1, 0, 1, 0), (0, 1, 0, 1)]] * spec.n_stations
        weights = {"naive": {}, "pruned": {}}
        for counts in multi_indices(spec):
            kets = {}
            for mode in ("naive", "pruned"):
                stats = EnumerationStats()
                kets[mode] = general_n_ket(spec, counts, mode=mode, stats=stats, budget=10**9)
                if mode == "naive":
                    counts_ok &= stats.visited == naive_visit_count(N, counts)
                like = readout_likelihood(sets, counts, spec)
                weights[mode][counts] = like * sum(abs(v) ** 2 for v in kets[mode].values())
            scale = max((abs(v) for v in kets["naive"].values()), default=0.0)
            if scale:
                worst_ket = max(worst_ket, ket_error(kets["naive"], kets["pruned"]) / scale)
            n_kets += 1
        tot = {m: math.fsum(w.values()) for m, w in weights.items()}
        for c, w in weights["naive"].items():
            if w:
                worst_weight = max(worst_weight, abs(w / tot["naive"] - weights["pruned"][c] / tot["pruned"]) / (w / tot["naive"]))
    # the same comparison carried through to coincidence probabilities
    worst_q = 0.0
    for N, n_max in ((1, 1), (1, 2), (2, 1)):
        spec = chain(N, n_max)
        qs = [
            coincidence_q(None, (HALF_PI, 0.9), analyzers(), spec, ensemble=posterior(None, spec, "formula", mode))
            for mode in ("naive", "pruned")
        ]
        worst_q = max(worst_q, max(abs(getattr(qs[0], q) - getattr(qs[1], q)) / getattr(qs[1], q) for q in PATTERNS))
    wall = time.perf_counter() - t0
    ok = worst_ket < 1e-12 and worst_weight < 1e-12 and worst_q < 1e-12 and counts_ok and wall < 600
    detail = (
        f"{n_kets} multi-indices: ket rel diff {worst_ket:.1e}, posterior weight rel diff {worst_weight:.1e}, "
        f"Q rel diff {worst_q:.1e}, naive visit counts match: {counts_ok}, {wall:.0f} s"
    )
    assert record_acceptance(10, ok, detail)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
