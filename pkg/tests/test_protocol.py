import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import R, ideal_weights, pdc_weights
from pairpurify import reference
from pairpurify.detection import DetectorModel, outcome_set, probability
from pairpurify.fockspace import PureState, modes_of
from pairpurify.optics import Conventions
from pairpurify.protocol import (COMBINATIONS, EXPECTED_ORDERS, RunConfig, correction_phases, dark_count_budget,
                                 fourfold_contributions, postselect, propagate, run, run_mixture,
                                 sample_statistics, source_ensemble)
from pairpurify.sources import PairSpec, PdcSpec, ideal_two_pairs

a2s = st.floats(0.01, 0.99)
etas = st.floats(0.05, 1.0)
KINDS = ("conventional", "single_photon")


def psi_5a(alpha, beta) -> PureState:
    """Expected amplitude pattern after R90, PBS and both R45 plates, written out by hand."""
    items = []
    for b4 in ("H", "V"):
        items.append(({f"4'{b4}": 1, "6H": 1, "6V": 1, "2H": 1}, alpha ** 2 * R))
    for a5, b4, sign in (("H", "H", 1), ("H", "V", -1), ("V", "H", -1), ("V", "V", 1)):
        items.append(({f"5'{a5}": 2, f"4'{b4}": 1, "2V": 1}, sign * beta ** 2 / 2))
    for a5, b4, sign, which in (("H", "H", 1, "+"), ("H", "V", -1, "-"), ("V", "H", 1, "-"), ("V", "V", -1, "+")):
        s = 1 if which == "+" else -1
        items.append(({f"5'{a5}": 1, f"4'{b4}": 1, "6H": 1, "2H": 1}, sign * alpha * beta * R * R))
        items.append(({f"5'{a5}": 1, f"4'{b4}": 1, "6V": 1, "2V": 1}, s * sign * alpha * beta * R * R))
    return PureState.from_occupations(items)


@given(a2s, st.floats(-math.pi, math.pi))
def test_circuit_reproduces_expected_amplitudes(a2, ph):
    p = PairSpec.from_weight(a2, ph)
    out = propagate(ideal_two_pairs(p))
    ref = psi_5a(p.alpha, p.beta)
    diff = (out.with_modes(ref.modes) - ref.with_modes(out.modes))
    assert diff.norm() < 1e-12


@given(a2s, st.floats(-math.pi, math.pi))
def test_ideal_source_perfect_detectors(a2, ph):
    p = PairSpec.from_weight(a2, ph)
    s = run(RunConfig.uniform(p, "single_photon", 1.0))
    assert s.P_total == pytest.approx(2 * abs(p.alpha * p.beta) ** 2, abs=1e-12)
    assert s.fidelity == pytest.approx(1.0, abs=1e-12)
    probs = [c.probability for c in s.combinations.values()]
    assert max(probs) - min(probs) < 1e-15


@pytest.mark.parametrize("kind", KINDS)
@given(a2s, etas)
def test_ideal_source_matches_closed_form(kind, a2, eta):
    p = PairSpec.from_weight(a2)
    s = run(RunConfig.uniform(p, kind, eta))
    fn = reference.ideal_conventional if kind == "conventional" else reference.ideal_single
    r = fn(p.alpha, p.beta, eta)
    assert s.P == pytest.approx(r.P, abs=1e-12)
    assert s.P_s == pytest.approx(r.P_s, abs=1e-12)
    assert s.P_e == pytest.approx(r.P_e, abs=1e-12)
    assert ideal_weights(s) == pytest.approx(r.weights, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("veto", [True, False])
@given(a2s, etas, st.floats(0.01, 0.2))
def test_pdc_matches_closed_form(kind, veto, a2, eta, gamma):
    spec = PdcSpec.from_pair(gamma, a2)
    s = run(RunConfig.uniform(spec, kind, eta, veto=veto))
    fn = reference.pdc_conventional if kind == "conventional" else reference.pdc_single_photon
    r = fn(spec.alpha, spec.beta, eta, gamma, spec.g)
    P_e0 = r.P_e0 if veto else r.P_e0_no_veto
    assert s.P == pytest.approx(r.P_s + P_e0 + r.P_e1, rel=1e-9, abs=1e-15)
    assert s.P_s == pytest.approx(r.P_s, rel=1e-9, abs=1e-15)
    assert s.P_e0 == pytest.approx(P_e0, rel=1e-9, abs=1e-15)
    assert s.P_e1 == pytest.approx(r.P_e1, rel=1e-9, abs=1e-15)
    assert s.P_e_other < 1e-15
    if veto:
        assert pdc_weights(s) == pytest.approx(r.weights, abs=1e-10)


def test_combinations_symmetric_for_pdc():
    s = run(RunConfig.uniform(PdcSpec.from_pair(0.1, 0.3), "conventional", 0.6))
    probs = [s.combinations[c].probability for c in COMBINATIONS]
    assert max(probs) - min(probs) < 1e-18


@pytest.mark.parametrize("source", [PairSpec.from_weight(0.3, 0.4), PdcSpec.from_pair(0.1, 0.3, 0.4)])
@pytest.mark.parametrize("kind", KINDS)
def test_gauge_invariance(source, kind):
    rng = np.random.default_rng(7)
    base = run(RunConfig.uniform(source, kind, 0.7))
    for _ in range(5):
        s = run(RunConfig.uniform(source, kind, 0.7, conventions=Conventions.random(rng)))
        for k in ("P", "P_total", "P_s", "P_e0", "P_e1", "fidelity"):
            assert getattr(s, k) == pytest.approx(getattr(base, k), abs=1e-12)


def test_correction_phases_default_and_rotation():
    ph = correction_phases(Conventions())
    assert ph[("H", "H")] == pytest.approx(0.0, abs=1e-12)
    assert abs(abs(ph[("H", "V")]) - math.pi) < 1e-12
    rot = correction_phases(Conventions.rotation())
    assert set(rot) == set(ph)


@pytest.mark.parametrize("kind", KINDS)
@given(etas)
def test_postselection_removes_errors(kind, eta):
    for src in (PairSpec.from_weight(0.3), PdcSpec.from_pair(0.1, 0.3)):
        s = postselect(RunConfig.uniform(src, kind, eta))
        assert s.fidelity == pytest.approx(1.0, abs=1e-12)
        assert s.P == pytest.approx(s.P_s, abs=1e-15)


@given(etas)
def test_postselected_stats_independent_of_detector_type_and_veto(eta):
    src = PdcSpec.from_pair(0.1, 0.3)
    conv = postselect(RunConfig.uniform(src, "conventional", eta))
    single = postselect(RunConfig.uniform(src, "single_photon", eta))
    no_veto = postselect(RunConfig.uniform(src, "conventional", eta, veto=False))
    assert conv.P == pytest.approx(single.P, abs=1e-15)
    assert conv.P == pytest.approx(no_veto.P, abs=1e-15)
    assert no_veto.fidelity == pytest.approx(1.0, abs=1e-12)


def test_mixture_of_identical_pairs_purifies(rng):
    comps = [(w, PairSpec.from_weight(a, ph)) for w, a, ph in
             zip(rng.random(6), rng.uniform(0.05, 0.95, 6), rng.uniform(-3, 3, 6))]
    s = run_mixture(comps, RunConfig.uniform(comps[0][1], "single_photon", 1.0))
    assert s.identical_pairs
    assert s.fidelity == pytest.approx(1.0, abs=1e-12)


def test_mixture_of_different_pairs_does_not_purify():
    comps = [(0.5, PairSpec.from_weight(0.5), PairSpec.from_weight(0.5, math.pi))]
    s = run_mixture(comps, RunConfig.uniform(comps[0][1], "single_photon", 1.0))
    assert not s.identical_pairs
    assert s.fidelity < 0.5


def test_sample_statistics_converge(rng):
    s = run(RunConfig.uniform(PairSpec.from_weight(0.3), "conventional", 0.8))
    est = sample_statistics(s, 400_000, rng)
    for k in ("P", "P_s"):
        ref = getattr(s, k)
        assert abs(est[k] - ref) < 5 * math.sqrt(ref * (1 - ref) / 400_000)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(PairSpec.from_weight(0.5), {})
    with pytest.raises(ValueError):
        RunConfig.uniform(PairSpec.from_weight(0.5), combination=("H", "X"))


def test_stats_serialize():
    s = run(RunConfig.uniform(PairSpec.from_weight(0.3), "conventional", 0.8))
    j = s.to_json()
    assert set(j["combinations"]) == {"HH", "VV", "HV", "VH"}
    assert j["P"] == s.P


# -- dark counts ------------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("nu", [1e-6, 1e-4, 1e-2])
def test_dark_count_terms_sum_to_fourfold_probability(kind, nu):
    """sum_i P_i equals the coincidence probability computed with dark-count POVMs."""
    gamma, eta = 0.1, 0.8
    contrib = fourfold_contributions(gamma, nu, eta, kind)
    ens = source_ensemble(PdcSpec.from_pair(gamma, 0.5)).map_states(propagate)
    model = DetectorModel(kind, eta, nu)
    fire = "click" if kind == "conventional" else "one"
    povms = [outcome_set(model, m)[fire] for m in (["5'H"], ["4'H"], modes_of("6"), modes_of("2"))]
    assert sum(contrib) == pytest.approx(probability(ens, povms), rel=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_dark_count_orders(kind):
    b = dark_count_budget(1e-4, 1e-6, kind=kind)
    for name, (eg, en) in EXPECTED_ORDERS.items():
        got = b.exponents[name]
        assert got[0] == pytest.approx(eg, abs=0.05)
        assert got[1] == pytest.approx(en, abs=0.05)
    assert b.negligible


def test_large_dark_counts_not_negligible():
    assert not dark_count_budget(1e-4, 0.05).negligible
    assert not dark_count_budget(1e-6, 1e-3).negligible   # nu^2 / gamma^2 = 1
