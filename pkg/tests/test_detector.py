import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qrelay.detector import (
    DetectorModel,
    Family,
    LossModel,
    OutcomeTuple,
    fourtuple_prob,
    loss_to_eta,
    perfect_detector,
    pnr_normalization,
    pnr_prob,
    threshold_prob,
)
from qrelay.oracle import oracle_pnr_prob

ETAS = [0.04, 0.15, 0.5, 0.93, 1.0]
DARKS = [0.0, 1e-5, 1e-3, 0.1]


@pytest.mark.parametrize("eta", ETAS)
@pytest.mark.parametrize("dark", DARKS)
@pytest.mark.parametrize("i", range(6))
def test_pnr_probabilities_sum_to_one(eta, dark, i):
    det = DetectorModel(Family.PNR, eta, dark)
    assert pnr_normalization(i, det, q_max=i + 80) == pytest.approx(1.0, abs=1e-10)


@given(st.floats(0.01, 1.0), st.floats(0.0, 0.9), st.integers(0, 30))
def test_threshold_outcomes_sum_to_one(eta, dark, i):
    det = DetectorModel(Family.THRESHOLD, eta, dark)
    assert det.prob(0, i) + det.prob(1, i) == 1.0
    assert det.prob(2, i) == 0.0


@pytest.mark.parametrize("eta", [0.04, 0.3, 0.8])
@pytest.mark.parametrize("dark", [1e-5, 0.01, 0.2])
@pytest.mark.parametrize("q,i", [(0, 0), (1, 0), (0, 2), (2, 2), (1, 3), (4, 1), (3, 5)])
def test_pnr_matches_thermal_noise_model(eta, dark, q, i):
    # noise photons mixed in on a beamsplitter of transmissivity eta
    det = DetectorModel(Family.PNR, eta, dark)
    assert pnr_prob(q, i, det) == pytest.approx(oracle_pnr_prob(q, i, det), rel=1e-10, abs=1e-300)


@given(st.floats(0.01, 0.99), st.integers(0, 12), st.integers(0, 12))
def test_pnr_without_dark_counts_is_binomial_thinning(eta, q, i):
    det = DetectorModel(Family.PNR, eta, 0.0)
    assert pnr_prob(q, i, det) == pytest.approx(stats.binom.pmf(q, i, eta), rel=1e-9, abs=1e-15)


@settings(deadline=None)
@given(st.one_of(st.floats(0.01, 0.99), st.just(1.0)), st.floats(0.0, 0.5), st.integers(0, 10))
def test_no_click_equals_zero_count(eta, dark, i):
    pnr = DetectorModel(Family.PNR, eta, dark)
    thr = DetectorModel(Family.THRESHOLD, eta, dark)
    assert thr.prob(0, i) == pytest.approx(pnr.prob(0, i), rel=1e-10)


def test_perfect_detectors():
    pnr, thr = perfect_detector(Family.PNR), perfect_detector("threshold")
    assert pnr.perfect and thr.perfect
    assert [pnr.prob(q, 2) for q in range(4)] == [0, 0, 1, 0]
    assert thr.prob(1, 3) == 1.0 and thr.prob(0, 0) == 1.0


@pytest.mark.parametrize("dark", [1e-5, 0.01, 0.3])
def test_unit_efficiency_with_dark_counts(dark):
    # the closed form tends to thermal noise added on top of the signal
    det = DetectorModel(Family.PNR, 1.0, dark)
    for i in range(5):
        assert pnr_prob(0, i, det) == pytest.approx((1 - dark) * dark**i, rel=1e-12)
        assert pnr_normalization(i, det) == pytest.approx(1.0, abs=1e-10)
        for q in range(8):
            assert pnr_prob(q, i, det) == pytest.approx(oracle_pnr_prob(q, i, det), rel=1e-9, abs=1e-15)


def test_unit_efficiency_is_continuous():
    near = DetectorModel(Family.PNR, 1 - 1e-4, 0.3)
    at = DetectorModel(Family.PNR, 1.0, 0.3)
    for q in range(5):
        for i in range(4):
            assert pnr_prob(q, i, near) == pytest.approx(pnr_prob(q, i, at), abs=2e-4)


@pytest.mark.parametrize("eta,dark", [(0.0, 0.0), (1.2, 0.0), (0.5, -0.1), (0.5, 1.0)])
def test_invalid_parameters_rejected(eta, dark):
    with pytest.raises(ValueError):
        DetectorModel(Family.PNR, eta, dark)


def test_threshold_formula():
    det = DetectorModel(Family.THRESHOLD, 0.04, 1e-5)
    assert threshold_prob(False, 3, det) == pytest.approx((1 - 1e-5) * (1 - 0.04 * (1 - 1e-5)) ** 3)


def test_fourtuple_is_product():
    dets = [DetectorModel(Family.PNR, e, 1e-3) for e in (0.2, 0.4, 0.6, 0.8)]
    r, t = OutcomeTuple(1, 0, 2, 1), (1, 1, 2, 0)
    expect = math.prod(d.prob(q, i) for d, q, i in zip(dets, r, t))
    assert fourtuple_prob(r, t, dets) == pytest.approx(expect)
    with pytest.raises(ValueError):
        fourtuple_prob((1, 0, 1), t, dets[0])


@pytest.mark.parametrize(
    "eta0,alpha,length,expect",
    [
        (0.15, 0.2, 30, 0.15 * 10**-0.6),
        (0.93, 0.2, 70, 0.93 * 10**-1.4),
        (0.5, 0.2, 0, 0.5),
    ],
)
def test_loss_to_eta(eta0, alpha, length, expect):
    assert loss_to_eta(eta0, alpha, length) == pytest.approx(expect, rel=1e-12)
    assert LossModel(eta0, alpha, length).effective_eta == pytest.approx(expect, rel=1e-12)


def test_thirty_km_is_about_four_percent():
    assert loss_to_eta(0.15, 0.2, 30) == pytest.approx(0.0377, abs=5e-5)


@settings(max_examples=25)
@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_loss_composes_over_length(l1, l2):
    assert loss_to_eta(loss_to_eta(0.8, 0.2, l1), 0.2, l2) == pytest.approx(loss_to_eta(0.8, 0.2, l1 + l2))


@given(st.floats(0.01, 1.0), st.floats(0.0, 0.5), st.integers(0, 20))
def test_click_probability_grows_with_photons(eta, dark, i):
    det = DetectorModel(Family.THRESHOLD, eta, dark)
    assert det.prob(1, i + 1) >= det.prob(1, i)


@given(st.floats(0.01, 0.98), st.floats(0.0, 0.5), st.integers(0, 20))
def test_click_probability_grows_with_efficiency(eta, dark, i):
    lo = DetectorModel(Family.THRESHOLD, eta, dark)
    hi = DetectorModel(Family.THRESHOLD, eta + 0.01, dark)
    assert hi.prob(1, i) >= lo.prob(1, i)


def test_dark_counts_are_not_classical_convolution():
    # the closed form mixes in thermal noise coherently; adding independent
    # geometric dark counts to binomially thinned photons gives another number
    eta, dark = 0.5, 0.01
    det = DetectorModel(Family.PNR, eta, dark)
    conv = eta * (1 - dark) + (1 - eta) * (1 - dark) * dark
    assert abs(pnr_prob(1, 1, det) - conv) > 1e-4
    assert pnr_prob(1, 1, det) == pytest.approx(oracle_pnr_prob(1, 1, det), rel=1e-12)
