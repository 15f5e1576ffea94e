"""The two-pair purification circuit and the statistics it produces.

Pipeline: source on modes 1-4 -> R90 on mode 3 -> PBS (1, 3 -> 6, 5) ->
R45 on 5 and 4 (relabelled 5', 4') -> coincidence at D5'a, D4'b -> phase
correction on Bob's mode 2V -> optional post-selection on counts at D6, D2.
"""
from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from . import detection as det
from .detection import DetectorKind, DetectorModel, PovmElement
from .fockspace import MixedEnsemble, PureState, fidelity_to_bell, modes_of, trace_out
from .optics import Conventions, LinearTransform, apply_all, half_wave_plate, pbs, phase_shift
from .sources import PairSpec, PdcSpec, ideal_two_pairs, pdc_double, phase_averaged_pdc

__all__ = [
    "RunConfig",
    "RunStatistics",
    "CombinationResult",
    "DarkCountBudget",
    "circuit",
    "source_ensemble",
    "correction_phases",
    "run",
    "run_mixture",
    "postselect",
    "dark_count_budget",
    "sample_statistics",
    "COMBINATIONS",
    "DETECTOR_NAMES",
]

COMBINATIONS = (("H", "H"), ("V", "V"), ("H", "V"), ("V", "H"))
DETECTOR_NAMES = ("5'H", "5'V", "4'H", "4'V", "6", "2")
OUTPUT_MODES = modes_of("6", "2")

SourceLike = PairSpec | PdcSpec | MixedEnsemble | PureState


@dataclass(frozen=True)
class RunConfig:
    """One configuration of source, detectors and classical post-processing.

    ``source`` may be a :class:`PairSpec` (identical ideal pairs), a
    :class:`PdcSpec` (double-pulse down-conversion) or any ensemble/state on
    modes 1-4 (e.g. delivered by a channel). ``detectors`` maps the names in
    :data:`DETECTOR_NAMES` to models; D6 and D2 are only needed when
    ``postselect`` is set.
    """

    source: SourceLike
    detectors: Mapping[str, DetectorModel]
    combination: tuple[str, str] = ("H", "H")
    veto: bool = True
    postselect: bool = False
    n_max: int = 4
    phase_average: bool = True
    conventions: Conventions = field(default_factory=Conventions)

    def __post_init__(self):
        need = {"5'H", "5'V", "4'H", "4'V"} | ({"6", "2"} if self.postselect else set())
        missing = need - set(self.detectors)
        if missing:
            raise ValueError(f"missing detector models: {sorted(missing)}")
        if tuple(self.combination) not in COMBINATIONS:
            raise ValueError(f"bad coincidence combination {self.combination}")
        if self.n_max < 2:
            raise ValueError("n_max must be >= 2")

    @classmethod
    def uniform(cls, source: SourceLike, kind: DetectorKind | str = "single_photon",
                eta: float = 1.0, nu: float = 0.0, **kw) -> "RunConfig":
        """All six detectors share one model."""
        d = DetectorModel(kind, eta, nu)
        return cls(source, {n: d for n in DETECTOR_NAMES}, **kw)


@dataclass(frozen=True)
class CombinationResult:
    combination: tuple[str, str]
    probability: float
    conditional: MixedEnsemble | None
    fidelity: float
    photon_weights: dict[int, float]


@dataclass(frozen=True)
class RunStatistics:
    """Statistics of one coincidence combination plus totals over all four.

    ``P`` is the probability of the reference combination; ``P_s`` its
    share ending in |Phi+>_62 after correction, ``P_e0``/``P_e1`` its share
    with zero / one photon in modes 6 and 2 and ``P_e_other`` the remainder
    (two or more photons but not |Phi+>). ``fidelity`` refers to the output
    aggregated over all four combinations.
    """

    P: float
    P_total: float
    P_s: float
    P_e0: float
    P_e1: float
    P_e_other: float
    fidelity: float
    output: MixedEnsemble | None
    dropped_weight: float
    combinations: dict[tuple[str, str], CombinationResult]
    identical_pairs: bool = True

    @property
    def P_e(self) -> float:
        return self.P_e0 + self.P_e1 + self.P_e_other

    @property
    def P_s_total(self) -> float:
        return sum(c.probability * c.fidelity for c in self.combinations.values())

    def to_record(self) -> dict:
        return {
            "P": self.P, "P_total": self.P_total, "P_s": self.P_s, "P_e": self.P_e,
            "P_e0": self.P_e0, "P_e1": self.P_e1, "P_e_other": self.P_e_other,
            "fidelity": self.fidelity, "dropped_weight": self.dropped_weight,
            "identical_pairs": self.identical_pairs,
        }

    def to_json(self) -> dict:
        rec = self.to_record()
        rec["combinations"] = {
            "".join(k): {"probability": c.probability, "fidelity": c.fidelity}
            for k, c in self.combinations.items()}
        rec["output"] = None if self.output is None else self.output.to_json()
        return rec


# -- circuit ------------------------------------------------------------------

@lru_cache(maxsize=64)
def circuit(conventions: Conventions = Conventions()) -> tuple[LinearTransform, ...]:
    return (
        half_wave_plate(("3H", "3V"), 90, conventions=conventions),
        pbs("1", "3", out_t="6", out_r="5", conventions=conventions),
        half_wave_plate(("5H", "5V"), 45, out="5'"),
        half_wave_plate(("4H", "4V"), 45, out="4'"),
    )


def propagate(state: PureState, conventions: Conventions = Conventions(), n_max: int | None = None) -> PureState:
    """Send a state on modes 1-4 through the linear optics."""
    return apply_all(circuit(conventions), state, n_max)


def source_ensemble(source: SourceLike, n_max: int = 4, phase_average: bool = True) -> MixedEnsemble:
    if isinstance(source, PairSpec):
        return MixedEnsemble.from_pure(ideal_two_pairs(source))
    if isinstance(source, PdcSpec):
        if phase_average:
            return phase_averaged_pdc(source, n_max)
        return MixedEnsemble.from_pure(pdc_double(source, n_max))
    if isinstance(source, PureState):
        return MixedEnsemble.from_pure(source)
    if isinstance(source, MixedEnsemble):
        return source
    raise TypeError(f"unsupported source {type(source).__name__}")


def _flip(p: str) -> str:
    return "V" if p == "H" else "H"


def _hit(model: DetectorModel, modes) -> PovmElement:
    outs = model.outcomes(modes)
    return outs["click"] if model.kind is DetectorKind.CONVENTIONAL else outs["one"]


def _none(model: DetectorModel, modes) -> PovmElement:
    return model.outcomes(modes)["none"]


def _at_least_one(model: DetectorModel, modes) -> PovmElement:
    outs = model.outcomes(modes)
    if model.kind is DetectorKind.CONVENTIONAL:
        return outs["click"]
    return det.combine([outs["one"], outs["multi"]], "s>=1")


@lru_cache(maxsize=64)
def correction_phases(conventions: Conventions = Conventions()) -> dict[tuple[str, str], float]:
    """Phase Bob applies to mode 2V after each coincidence so the output is |Phi+>.

    Calibrated once per set of optical conventions with a maximally entangled
    reference input and ideal detectors.
    """
    ref = propagate(ideal_two_pairs(PairSpec(1 / math.sqrt(2), 1 / math.sqrt(2))), conventions)
    perfect = DetectorModel("single_photon", 1.0, 0.0)
    out = {}
    for a, b in COMBINATIONS:
        res = det.measure(ref, [_hit(perfect, f"5'{a}"), _hit(perfect, f"4'{b}"),
                                _none(perfect, f"5'{_flip(a)}"), _none(perfect, f"4'{_flip(b)}")])
        (_, st), = res.conditional.components
        hh = st.amplitude({"6H": 1, "2H": 1})
        vv = st.amplitude({"6V": 1, "2V": 1})
        out[(a, b)] = -cmath.phase(vv / hh)
    return out


def _combination(ens: MixedEnsemble, config: RunConfig, combo: tuple[str, str]) -> CombinationResult:
    a, b = combo
    d = config.detectors
    povms = [_hit(d[f"5'{a}"], f"5'{a}"), _hit(d[f"4'{b}"], f"4'{b}")]
    if config.veto:
        povms += [_none(d[f"5'{_flip(a)}"], f"5'{_flip(a)}"), _none(d[f"4'{_flip(b)}"], f"4'{_flip(b)}")]
    res = det.measure(ens, povms)
    if res.zero:
        return CombinationResult(combo, 0.0, None, 0.0, {})
    cond = trace_out(res.conditional, [m for m in res.conditional.modes if m not in OUTPUT_MODES])
    fix = phase_shift("2V", correction_phases(config.conventions)[combo])
    cond = cond.map_states(lambda s: fix(s))
    p = res.probability
    if config.postselect:
        ps, filt = det.filter_ensemble(cond, [_at_least_one(d["6"], modes_of("6")),
                                              _at_least_one(d["2"], modes_of("2"))])
        p *= ps
        if ps < det.ZERO_PROB:
            return CombinationResult(combo, 0.0, None, 0.0, {})
        cond = filt.normalized()
    cond = cond.compact()
    return CombinationResult(combo, p, cond, fidelity_to_bell(cond, "+", ("6", "2")),
                             cond.photon_number_weights())


def run(config: RunConfig) -> RunStatistics:
    src = source_ensemble(config.source, config.n_max, config.phase_average)
    ens = src.map_states(lambda s: propagate(s, config.conventions, config.n_max))
    results = {c: _combination(ens, config, c) for c in COMBINATIONS}
    ref = results[tuple(config.combination)]
    P = ref.probability
    pw = ref.photon_weights
    P_s = P * ref.fidelity
    P_e0 = P * pw.get(0, 0.0)
    P_e1 = P * pw.get(1, 0.0)
    P_other = max(0.0, P - P_s - P_e0 - P_e1)
    total = math.fsum(r.probability for r in results.values())
    if total > 0:
        output = MixedEnsemble.mix((r.probability / total, r.conditional)
                                   for r in results.values() if r.conditional is not None).compact()
        fid = fidelity_to_bell(output, "+", ("6", "2"))
    else:
        output, fid = None, 0.0
    return RunStatistics(P, total, P_s, P_e0, P_e1, P_other, fid, output,
                         ens.dropped_weight, results, _identical_pairs(src))


def _identical_pairs(src: MixedEnsemble, tol: float = 1e-12) -> bool:
    """Every component has the product form |a,b>_12 |a,b>_34 (up to phase)."""
    for _, s in src.components:
        if s.total_photons() != {4}:
            continue
        c = {}
        for k in ("HHHH", "HHVV", "VVHH", "VVVV"):
            occ = {f"1{k[0]}": 1, f"2{k[1]}": 1, f"3{k[2]}": 1, f"4{k[3]}": 1}
            c[k] = s.amplitude(occ)
        if abs(sum(abs(v) ** 2 for v in c.values()) - 1) > 1e-9:
            return False
        # product form requires c_HHVV c_VVHH = c_HHHH c_VVVV; identical pairs also c_HHVV = c_VVHH
        if abs(c["HHVV"] * c["VVHH"] - c["HHHH"] * c["VVVV"]) > tol:
            return False
        if abs(c["HHVV"] - c["VVHH"]) > 1e-9:
            return False
    return True


def run_mixture(components: Sequence[tuple[float, PairSpec] | tuple[float, PairSpec, PairSpec]] | MixedEnsemble,
                config: RunConfig) -> RunStatistics:
    """Run a classical mixture of two-pair inputs.

    ``components`` is ``[(w, pair)]`` (both pairs identical), ``[(w, pair12, pair34)]``
    or a ready ensemble on modes 1-4. Non-identical components are accepted and
    reported through ``identical_pairs``.
    """
    if isinstance(components, MixedEnsemble):
        ens = components
    else:
        parts = []
        for item in components:
            w, p12 = item[0], item[1]
            p34 = item[2] if len(item) > 2 else p12
            parts.append((w, ideal_two_pairs(p12, p34)))
        total = math.fsum(w for w, _ in parts)
        ens = MixedEnsemble.from_unnormalized([(w / total, s) for w, s in parts])
    return run(replace(config, source=ens))


def postselect(config: RunConfig) -> RunStatistics:
    """Same run, additionally conditioned on at least one count at both D6 and D2."""
    return run(replace(config, postselect=True))


# -- shot noise ---------------------------------------------------------------

def sample_statistics(stats: RunStatistics, shots: int, rng: np.random.Generator) -> dict[str, float]:
    """Finite-shot estimates of (P, P_s, P_e0, P_e1) for the reference combination."""
    p = np.array([stats.P_s, stats.P_e0, stats.P_e1, stats.P_e_other])
    p = np.append(p, max(0.0, 1 - p.sum()))
    counts = rng.multinomial(shots, p / p.sum())
    est = counts / shots
    return {"P": float(est[:4].sum()), "P_s": float(est[0]), "P_e0": float(est[1]), "P_e1": float(est[2])}


# -- dark counts ----------------------------------------------------------------

FOURFOLD = ("5'H", "4'H", "6", "2")


@dataclass(frozen=True)
class DarkCountBudget:
    gamma_sq: float
    nu: float
    contributions: tuple[float, float, float, float, float]
    exponents: dict[str, tuple[float, float]]
    expected: dict[str, tuple[int, int]]
    negligible: bool
    dominance: float

    def to_json(self) -> dict:
        return {
            "gamma_sq": self.gamma_sq, "nu": self.nu,
            "P": list(self.contributions),
            "exponents": {k: {"gamma": g, "nu": n} for k, (g, n) in self.exponents.items()},
            "expected": {k: {"gamma": g, "nu": n} for k, (g, n) in self.expected.items()},
            "negligible": self.negligible, "dominance": self.dominance,
        }


EXPECTED_ORDERS = {"P0": (4, 0), "P1": (4, 1), "P2": (2, 2), "P3": (2, 3), "P4": (0, 4)}


def _detector_modes(name: str):
    return modes_of(name) if name in ("6", "2") else (name,)


@lru_cache(maxsize=256)
def _propagated_pdc(gamma: float, alpha_sq: float, n_max: int) -> MixedEnsemble:
    src = phase_averaged_pdc(PdcSpec.from_pair(gamma, alpha_sq), n_max)
    return src.map_states(lambda s: propagate(s, Conventions(), n_max))


def fourfold_contributions(gamma: float, nu: float, eta: float = 1.0,
                           kind: DetectorKind | str = "conventional",
                           alpha_sq: float = 0.5, n_max: int = 4) -> tuple[float, ...]:
    """P_i: probability of a D5'H-D4'H-D6-D2 coincidence in which exactly i detectors fire on dark counts only."""
    kind = DetectorKind(kind)
    ens = _propagated_pdc(gamma, alpha_sq, n_max)
    base = DetectorModel(kind, eta, 0.0)
    # per detector: fired on real photons (Pi_hit) or only on dark counts (Pi_none)
    if kind is DetectorKind.CONVENTIONAL:
        f_real, f_dark = 1.0, -math.expm1(-nu)
    else:
        f_real, f_dark = math.exp(-nu), nu * math.exp(-nu)
    out = [0.0] * 5
    for mask in itertools.product((False, True), repeat=4):
        povms = [(_none if is_dark else _hit)(base, _detector_modes(n)) for n, is_dark in zip(FOURFOLD, mask)]
        i = sum(mask)
        out[i] += det.probability(ens, povms) * f_dark ** i * f_real ** (4 - i)
    return tuple(out)


def _slope(x: np.ndarray, y: np.ndarray) -> float:
    ok = y > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def dark_count_budget(gamma_sq: float, nu: float, eta: float = 1.0,
                      kind: DetectorKind | str = "conventional", alpha_sq: float = 0.5,
                      threshold: float = 100.0, n_max: int = 4, points: int = 5) -> DarkCountBudget:
    """Dark-count contributions to the fourfold coincidence and their scaling.

    Exponents are log-log slopes over one decade of gamma (at fixed nu) and
    one decade of nu (at fixed gamma) centred on the operating point.
    ``negligible`` holds when nu and nu^2/gamma^2 are both below
    ``1/threshold``.
    """
    gamma = math.sqrt(gamma_sq)
    contrib = fourfold_contributions(gamma, nu, eta, kind, alpha_sq, n_max)
    gs = gamma * np.logspace(-0.5, 0.5, points)
    gs = gs[gs < 1]
    ns = (nu if nu > 0 else 1e-6) * np.logspace(-0.5, 0.5, points)
    vs_g = np.array([fourfold_contributions(g, nu if nu > 0 else 1e-6, eta, kind, alpha_sq, n_max) for g in gs])
    vs_n = np.array([fourfold_contributions(gamma, n, eta, kind, alpha_sq, n_max) for n in ns])
    exps = {f"P{i}": (_slope(gs, vs_g[:, i]), _slope(ns, vs_n[:, i])) for i in range(5)}
    negligible = nu <= 1 / threshold and (nu ** 2 / gamma_sq if gamma_sq > 0 else math.inf) <= 1 / threshold
    worst = max(contrib[1:])
    dominance = contrib[0] / worst if worst > 0 else math.inf
    return DarkCountBudget(gamma_sq, nu, contrib, exps, dict(EXPECTED_ORDERS), negligible, dominance)
