"""Photon-number-diagonal detector POVMs, dark counts and conditional measurement.

Every POVM element here is diagonal in the total photon number ``m`` seen by
the detector, so it is stored as a table ``diag[m]``. A detector may cover
several modes (the polarization-insensitive detectors on modes 6 and 2); it
then responds to the summed photon number.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import comb

from .fockspace import MixedEnsemble, Mode, ModeError, PureState, mode, trace_out

__all__ = [
    "DetectorKind",
    "DetectorModel",
    "PovmElement",
    "povm_n",
    "povm_conventional",
    "povm_single",
    "with_dark_counts",
    "outcome_set",
    "measure",
    "filter_ensemble",
    "probability",
    "MeasureResult",
    "sample_outcomes",
]

TABLE_SIZE = 16
ZERO_PROB = 1e-300


class DetectorKind(str, enum.Enum):
    CONVENTIONAL = "conventional"
    SINGLE_PHOTON = "single_photon"


@dataclass(frozen=True)
class DetectorModel:
    kind: DetectorKind = DetectorKind.SINGLE_PHOTON
    eta: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DetectorKind(self.kind))
        _check_eta(self.eta)
        if not self.nu >= 0:
            raise ValueError(f"dark-count mean nu={self.nu} must be >= 0")

    def outcomes(self, modes: Sequence[Mode | str] | Mode | str, size: int = TABLE_SIZE) -> dict[str, "PovmElement"]:
        return outcome_set(self, modes, size)


@dataclass(frozen=True, eq=False)
class PovmElement:
    """diag[m] for m = 0 .. len(diag)-1 photons on ``modes`` (summed)."""

    modes: tuple[Mode, ...]
    diag: np.ndarray
    label: str = ""

    def __post_init__(self):
        ms = (self.modes,) if isinstance(self.modes, (str, Mode)) else self.modes
        object.__setattr__(self, "modes", tuple(mode(m) for m in ms))
        d = np.asarray(self.diag, dtype=float)
        if d.ndim != 1 or np.any(d < -1e-15) or np.any(d > 1 + 1e-15):
            raise ValueError("POVM diagonal entries must lie in [0, 1]")
        d.setflags(write=False)
        object.__setattr__(self, "diag", d)

    def __call__(self, m: int) -> float:
        if m >= len(self.diag):
            raise IndexError(f"photon number {m} beyond POVM table size {len(self.diag)}")
        return float(self.diag[m])

    def on(self, modes) -> "PovmElement":
        return PovmElement(modes, self.diag, self.label)


def _check_eta(eta: float) -> None:
    if not 0 <= eta <= 1:
        raise ValueError(f"efficiency eta={eta} outside [0, 1]")


def _m(size: int) -> np.ndarray:
    return np.arange(size)


def povm_n(eta: float, n: int, modes=("DH",), size: int = TABLE_SIZE) -> PovmElement:
    """Exactly ``n`` photocounts: C(m,n) eta^n (1-eta)^(m-n)."""
    _check_eta(eta)
    if n < 0:
        raise ValueError("n must be >= 0")
    m = _m(size)
    d = np.where(m >= n, comb(m, n) * eta ** n * (1 - eta) ** np.clip(m - n, 0, None), 0.0)
    return PovmElement(_as_modes(modes), d, f"n{n}")


def povm_conventional(eta: float, clicked: bool, modes=("DH",), size: int = TABLE_SIZE) -> PovmElement:
    _check_eta(eta)
    none = (1 - eta) ** _m(size)
    return PovmElement(_as_modes(modes), 1 - none if clicked else none, "c1" if clicked else "c0")


def povm_single(eta: float, outcome: str, modes=("DH",), size: int = TABLE_SIZE) -> PovmElement:
    """Number-resolving detector with outcomes ``none``, ``one``, ``multi``."""
    _check_eta(eta)
    m = _m(size)
    p0 = (1 - eta) ** m
    p1 = m * eta * (1 - eta) ** np.clip(m - 1, 0, None)
    if outcome == "none":
        d = p0
    elif outcome == "one":
        d = p1
    elif outcome == "multi":
        # 1 - (1 - eta + m eta)(1 - eta)^(m-1), written as the complement
        d = np.clip(1 - p0 - p1, 0.0, 1.0)
    else:
        raise ValueError(f"unknown outcome {outcome!r}")
    return PovmElement(_as_modes(modes), d, f"s{ {'none': 0, 'one': 1, 'multi': 2}[outcome] }")


def _as_modes(modes) -> tuple[Mode, ...]:
    if isinstance(modes, (str, Mode)):
        modes = (modes,)
    return tuple(mode(m) for m in modes)


def with_dark_counts(outcomes: dict[str, PovmElement], nu: float, kind: DetectorKind | str) -> dict[str, PovmElement]:
    """Fold independent Poisson(nu) dark counts into an outcome set.

    Reported counts are real + dark. For conventional detectors the click
    outcome becomes ``I - e^{-nu} Pi_c0``; for number-resolving detectors the
    count distribution is convolved with the Poisson law.
    """
    if not nu >= 0:
        raise ValueError(f"nu={nu} must be >= 0")
    if nu == 0:
        return dict(outcomes)
    kind = DetectorKind(kind)
    if kind is DetectorKind.CONVENTIONAL:
        c0 = outcomes["none"]
        none = math.exp(-nu) * c0.diag
        return {"none": PovmElement(c0.modes, none, "c0'"),
                "click": PovmElement(c0.modes, 1 - none, "c1'")}
    p0 = outcomes["none"]
    p1 = outcomes["one"]
    e = math.exp(-nu)
    none = e * p0.diag
    one = e * (p1.diag + nu * p0.diag)
    multi = np.clip(1 - none - one, 0.0, 1.0)
    return {"none": PovmElement(p0.modes, none, "s0'"),
            "one": PovmElement(p0.modes, one, "s1'"),
            "multi": PovmElement(p0.modes, multi, "s2'")}


def outcome_set(model: DetectorModel, modes, size: int = TABLE_SIZE) -> dict[str, PovmElement]:
    """Complete outcome set of a detector (dark counts included)."""
    ms = _as_modes(modes)
    if model.kind is DetectorKind.CONVENTIONAL:
        base = {"none": povm_conventional(model.eta, False, ms, size),
                "click": povm_conventional(model.eta, True, ms, size)}
    else:
        base = {o: povm_single(model.eta, o, ms, size) for o in ("none", "one", "multi")}
    return with_dark_counts(base, model.nu, model.kind)


def combine(elements: Iterable[PovmElement], label: str = "") -> PovmElement:
    """Sum of POVM elements on the same modes (e.g. 'one or more counts')."""
    els = list(elements)
    return PovmElement(els[0].modes, np.clip(sum(e.diag for e in els), 0.0, 1.0), label)


@dataclass(frozen=True)
class MeasureResult:
    probability: float
    conditional: MixedEnsemble | None

    @property
    def zero(self) -> bool:
        return self.conditional is None


def _weight_fn(state_modes: tuple[Mode, ...], povms: Sequence[PovmElement]):
    idx = []
    for p in povms:
        try:
            idx.append(([state_modes.index(m) for m in p.modes], p.diag))
        except ValueError:
            raise ModeError(f"POVM modes {[str(m) for m in p.modes]} not in state registry") from None

    def fn(key):
        w = 1.0
        for ii, d in idx:
            n = sum(key[i] for i in ii)
            if n >= len(d):
                raise IndexError(f"photon number {n} beyond POVM table size {len(d)}")
            w *= d[n]
        return w

    return fn


def _check_distinct(povms: Sequence[PovmElement]) -> None:
    seen: set[Mode] = set()
    for p in povms:
        if seen & set(p.modes):
            raise ModeError("POVM elements act on overlapping modes")
        seen |= set(p.modes)


def filter_ensemble(e: MixedEnsemble, povms: Sequence[PovmElement]) -> tuple[float, MixedEnsemble]:
    """Apply the Kraus maps sqrt(Pi) without discarding the measured modes.

    Returns (probability, unnormalized filtered ensemble whose trace is that
    probability). Diagonal POVMs keep each pure component pure.
    """
    _check_distinct(povms)
    if not e.components:
        return 0.0, e
    fn = _weight_fn(e.modes, povms)
    out = [(w, s.diag_scale(lambda k: math.sqrt(fn(k)))) for w, s in e.components]
    res = MixedEnsemble.from_unnormalized(out, 0.0)
    object.__setattr__(res, "modes", e.modes)
    return res.trace, res


def probability(e: MixedEnsemble, povms: Sequence[PovmElement]) -> float:
    """Tr[(prod Pi) rho]."""
    _check_distinct(povms)
    if not e.components:
        return 0.0
    fn = _weight_fn(e.modes, povms)
    return math.fsum(w * abs(v) ** 2 * fn(k) for w, s in e.components for k, v in s.terms.items())


def measure(e: MixedEnsemble | PureState, povms: Sequence[PovmElement]) -> MeasureResult:
    """Outcome probability and normalized post-measurement state on the unmeasured modes."""
    if isinstance(e, PureState):
        e = MixedEnsemble.from_pure(e)
    p, filt = filter_ensemble(e, povms)
    if p < ZERO_PROB:
        return MeasureResult(0.0, None)
    measured = [m for q in povms for m in q.modes]
    red = trace_out(filt, measured)
    return MeasureResult(p, red.normalized())


def sample_outcomes(photons: np.ndarray, model: DetectorModel, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo detector response: binomial(m, eta) real counts plus Poisson(nu) dark counts.

    Returns the reported count per shot; map to outcomes with ``np.minimum(counts, 2)``
    (number-resolving) or ``counts > 0`` (conventional).
    """
    photons = np.asarray(photons)
    real = rng.binomial(photons, model.eta)
    dark = rng.poisson(model.nu, size=photons.shape) if model.nu > 0 else 0
    return real + dark
