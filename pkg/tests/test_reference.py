import math

import pytest
from hypothesis import given, strategies as st

from pairpurify import reference

a2s = st.floats(0.0, 1.0)
etas = st.floats(1e-3, 1.0)
gammas = st.floats(0.0, 0.5)


def ab(a2):
    return math.sqrt(a2), math.sqrt(1 - a2)


@given(a2s, etas)
def test_ideal_probabilities_add_up(a2, eta):
    for fn in (reference.ideal_conventional, reference.ideal_single):
        r = fn(*ab(a2), eta)
        assert r.P == pytest.approx(r.P_s + r.P_e, abs=1e-15)
        if r.P > 0:
            assert sum(r.weights) == pytest.approx(1.0, abs=1e-12)
            assert r.fidelity == pytest.approx(r.P_s / r.P, abs=1e-12)


@given(a2s)
def test_ideal_minimum_errors(a2):
    a, b = ab(a2)
    assert reference.ideal_conventional(a, b, 1.0).P_e == pytest.approx(b ** 4 / 4, abs=1e-15)
    assert reference.ideal_single(a, b, 1.0).P_e == 0.0
    # perfect number-resolving detectors: success probability of each combination
    assert reference.ideal_single(a, b, 1.0).P_s == pytest.approx(a2 * (1 - a2) / 2, abs=1e-15)


@given(a2s, etas, gammas)
def test_pdc_probabilities_add_up(a2, eta, gamma):
    for fn in (reference.pdc_conventional, reference.pdc_single_photon):
        r = fn(*ab(a2), eta, gamma)
        assert r.P == pytest.approx(r.P_s + r.P_e0 + r.P_e1, rel=1e-12, abs=1e-300)
        assert sum(r.weights) == pytest.approx(1.0, abs=1e-12)
        assert r.P_e0_no_veto >= r.P_e0 - 1e-18


@given(a2s, gammas)
def test_pdc_minima_are_values_at_unit_efficiency(a2, gamma):
    a, b = ab(a2)
    for fn in (reference.pdc_conventional, reference.pdc_single_photon):
        r = fn(a, b, 1.0, gamma)
        assert r.P_e0 == pytest.approx(r.P_e0_min, rel=1e-12, abs=1e-300)
        assert r.P_e1 == pytest.approx(r.P_e1_min, rel=1e-12, abs=1e-300)
        assert r.P_e0_no_veto == pytest.approx(r.P_e0_no_veto_min, rel=1e-12, abs=1e-300)


def test_g_factor():
    assert reference.g_factor(1, 0, 0.5) == pytest.approx(0.75)
    assert reference.g_factor(1 / math.sqrt(2), 1 / math.sqrt(2), 0.0) == 1.0


def test_pdc_success_scales_as_gamma_fourth():
    a, b = ab(0.3)
    r1 = reference.pdc_single_photon(a, b, 1.0, 0.01, g=1.0)
    r2 = reference.pdc_single_photon(a, b, 1.0, 0.02, g=1.0)
    assert r2.P_s / r1.P_s == pytest.approx(16.0)
