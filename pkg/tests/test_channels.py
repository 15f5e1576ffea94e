import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pairpurify.channels import (ChannelSample, FluctuationProcess, ProcrusteanInapplicable, classify_fiber_case,
                                 compensate, density_ensemble, f_factors, fiber_scenario, pair_coefficients,
                                 procrustean, purifiability, transmit)
from pairpurify.fockspace import MixedEnsemble, overlap
from pairpurify.sources import PairSpec, ideal_pair, ideal_two_pairs

mus = st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False)


def random_sample(rng):
    return ChannelSample(rng.random((4, 2)) * np.exp(2j * np.pi * rng.random((4, 2))))


def brute_P(mu):
    """Four-photon weight written out directly from the transmission coefficients."""
    m = {f"{k + 1}{p}": mu[k, j] for k in range(4) for j, p in enumerate("HV")}
    return 0.25 * (abs(m["1H"] * m["2H"]) ** 2 + abs(m["1V"] * m["2V"]) ** 2) * \
        (abs(m["3H"] * m["4H"]) ** 2 + abs(m["3V"] * m["4V"]) ** 2)


def test_sample_validation():
    with pytest.raises(ValueError):
        ChannelSample(np.full((4, 2), 1.2))
    with pytest.raises(ValueError):
        ChannelSample(np.ones((3, 2)))
    with pytest.raises(ValueError):
        ChannelSample.from_mapping({"5H": 1.0})
    s = ChannelSample.from_mapping({"2V": 0.5j})
    assert s["2V"] == 0.5j and s["1H"] == 1


def test_lossless_transmission_is_identity():
    r = transmit(ChannelSample.lossless())
    assert r.four_photon_weight == pytest.approx(1.0)
    assert abs(overlap(r.conditional, ideal_two_pairs(PairSpec(1 / math.sqrt(2), 1 / math.sqrt(2))))) \
        == pytest.approx(1.0)


def test_blocked_vertical_mode_gives_product_pair():
    r = transmit(ChannelSample.from_mapping({"1V": 0.0}))
    a12, b12, a34, b34 = r.coefficients
    assert b12 == 0 and abs(a12) == pytest.approx(1.0)


def test_transmit_weight_and_state_on_random_samples(rng):
    for _ in range(30):
        s = random_sample(rng)
        r = transmit(s)
        assert r.four_photon_weight == pytest.approx(brute_P(s.mu), abs=1e-10)
        assert abs(overlap(r.conditional, r.expected_conditional)) ** 2 == pytest.approx(1.0, abs=1e-10)
        assert r.ensemble.trace == pytest.approx(1.0, abs=1e-12)


def test_pair_coefficients_vectorized(rng):
    mu = FluctuationProcess.uniform().sample(100, rng)
    P, a12, b12, a34, b34 = pair_coefficients(mu)
    assert np.allclose(P, [brute_P(m) for m in mu], atol=1e-14)
    assert np.allclose(np.abs(a12) ** 2 + np.abs(b12) ** 2, 1)
    assert np.allclose(np.abs(a34) ** 2 + np.abs(b34) ** 2, 1)


@given(st.lists(mus, min_size=8, max_size=8))
def test_f_equals_fa_fb(values):
    s = ChannelSample(np.array(values).reshape(4, 2))
    F, FA, FB = f_factors(s)
    m = s.mu
    den = m[0, 1] * m[1, 1] * m[2, 0] * m[3, 0]
    if abs(den) > 1e-100:
        assert F == pytest.approx(m[0, 0] * m[1, 0] * m[2, 1] * m[3, 1] / den, rel=1e-9, abs=1e-300)
        assert FA * FB == pytest.approx(F, rel=1e-9, abs=1e-300)
    if F is not None:
        P, a12, b12, a34, b34 = pair_coefficients(s.mu)
        if abs(b12 * a34) > 1e-6:
            assert F == pytest.approx(a12 * b34 / (b12 * a34), rel=1e-6)


def test_f_undefined_on_zero_denominator():
    F, FA, FB = f_factors(ChannelSample.from_mapping({"1V": 0}))
    assert F is None and FA is None and FB is not None


def test_phase_on_one_mode_rotates_f():
    s = ChannelSample.from_mapping({"1H": cmath.exp(0.4j)})
    F, _, _ = f_factors(s)
    assert abs(F) == pytest.approx(1.0) and cmath.phase(F) == pytest.approx(0.4)
    assert f_factors(ChannelSample.lossless())[0] == 1


def test_constant_factors_are_purifiable():
    rep = purifiability(FluctuationProcess.common_mode(), 2000, seed=1)
    assert rep.condition <= 1e-12 and rep.purifiable
    assert rep.post_fidelity == pytest.approx(1.0, abs=1e-9)


def test_fluctuating_phase_is_not_purifiable():
    rep = purifiability(FluctuationProcess.phase_noise(), 4000, seed=1)
    assert rep.condition > 10 * rep.condition_stderr
    assert not rep.purifiable and rep.post_fidelity < 0.9


def test_deterministic_channel_reduces_to_single_sample():
    s = ChannelSample.from_mapping({"1H": 0.5, "3V": 0.8j})
    rep = purifiability(FluctuationProcess.constant(s), 10_000)
    assert rep.n_samples == 1
    P, a12, b12, a34, b34 = pair_coefficients(s.mu)
    assert rep.condition == pytest.approx(P * abs(a12 * b34 - b12 * a34) ** 2)


def test_condition_zero_iff_fidelity_one(rng):
    for _ in range(10):
        s = random_sample(rng)
        rep = purifiability(FluctuationProcess.constant(s))
        assert (rep.condition <= 1e-12) == (abs(rep.post_fidelity - 1) <= 1e-9)
        fixed = purifiability(FluctuationProcess.constant(s).compensated(compensate(s)))
        assert fixed.condition <= 1e-12 and fixed.post_fidelity == pytest.approx(1.0, abs=1e-9)


def test_compensation_cases():
    assert compensate(1.0).is_identity
    F = 0.5 * cmath.exp(1j * math.pi / 3)
    c = compensate(F)
    assert str(c.mode) == "3H" and c.factor == pytest.approx(F)
    big = compensate(2 * cmath.exp(0.3j))
    assert str(big.mode) == "3V" and abs(big.factor) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        compensate(0)


def test_compensation_transform_matches_sample_update():
    c = compensate(0.5 * cmath.exp(1j * math.pi / 3))
    s = ChannelSample.from_mapping({"1H": 0.5 * cmath.exp(1j * math.pi / 3)})
    assert f_factors(ChannelSample(c.apply_to(s.mu)))[0] == pytest.approx(1.0)
    assert c.transform().matrix[0, 0] == pytest.approx(c.factor)


def test_density_ensemble_reproduces_matrix(rng):
    v = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    rho = v @ v.conj().T
    rho /= np.trace(rho)
    e = density_ensemble(rho)
    assert e.trace == pytest.approx(1.0)
    assert len(e.components) == 3


# -- Procrustean --------------------------------------------------------------------

@given(st.floats(0.01, 0.99), st.floats(-math.pi, math.pi))
def test_procrustean_success_and_fidelity(a2, ph):
    r = procrustean(PairSpec.from_weight(a2, ph))
    assert r.success_probability == pytest.approx(2 * min(a2, 1 - a2), abs=1e-12)
    assert r.fidelity == pytest.approx(1.0, abs=1e-12)


def test_procrustean_examples():
    assert procrustean(PairSpec.from_weight(0.5)).attenuated is None
    r = procrustean(PairSpec.from_weight(0.8))
    assert r.success_probability == pytest.approx(0.4)
    assert str(r.attenuated) == "1H"


def test_procrustean_needs_known_pure_pair():
    mixed = MixedEnsemble.from_unnormalized([(0.5, ideal_pair(PairSpec.from_weight(0.3))),
                                             (0.5, ideal_pair(PairSpec.from_weight(0.7)))])
    with pytest.raises(ProcrusteanInapplicable):
        procrustean(mixed)
    with pytest.raises(ProcrusteanInapplicable):
        procrustean(FluctuationProcess.uniform())
    assert procrustean(MixedEnsemble.from_pure(ideal_pair(PairSpec.from_weight(0.8)))).success_probability \
        == pytest.approx(0.4)


# -- fiber -----------------------------------------------------------------------------

def test_classification():
    assert classify_fiber_case(1e3, 1e3, 1) == "a"
    assert classify_fiber_case(1e-3, 1e3, 1) == "b"
    assert classify_fiber_case(1e3, 1e-3, 1) == "c"
    assert classify_fiber_case(1e-3, 1e-3, 1) == "d"
    assert classify_fiber_case(1, 1, 1) is None


def test_case_a_needs_no_purification():
    r = fiber_scenario("a", n_samples=2000)
    assert r.swap == "1V-3H"
    assert r.direct_fidelity == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("case", ["b", "c"])
def test_cases_b_and_c_purify(case):
    r = fiber_scenario(case, n_samples=2000)
    assert r.direct_fidelity < 0.9
    assert r.purified_fidelity == pytest.approx(1.0, abs=1e-9) and r.purifiable


def test_case_c_without_swap_fails():
    assert fiber_scenario("c", n_samples=2000, swap_strategy="none").purified_fidelity < 0.99


def test_case_a_without_swap_still_purifies():
    r = fiber_scenario("a", n_samples=2000, swap_strategy="none")
    assert r.direct_fidelity < 0.9 and r.purified_fidelity == pytest.approx(1.0, abs=1e-9)


def test_case_d_fails():
    r = fiber_scenario("d", n_samples=10_000)
    assert r.fidelity < 0.99 and not r.purifiable


def test_ou_process_approaches_idealized_limits():
    near_b = fiber_scenario(None, 1e-3, 1e4, 1.0, 4000, process="ou")
    assert near_b.case == "b" and near_b.purified_fidelity > 0.99
    near_d = fiber_scenario(None, 1e-3, 1e-3, 1.0, 4000, process="ou")
    assert near_d.purified_fidelity < 0.6


def test_fiber_rejects_bad_input():
    with pytest.raises(ValueError):
        fiber_scenario("e")
    with pytest.raises(ValueError):
        fiber_scenario(None, 1, 1, 1)
    with pytest.raises(ValueError):
        fiber_scenario("a", swap_strategy="3H-3V")
