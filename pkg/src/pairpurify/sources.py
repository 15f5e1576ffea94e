"""Input states: ideal partially entangled pairs and down-conversion sources."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .fockspace import MixedEnsemble, Mode, Pol, PureState, tensor

__all__ = [
    "PairSpec",
    "PdcSpec",
    "ideal_pair",
    "ideal_two_pairs",
    "pdc_single",
    "pdc_double",
    "pdc_sectors",
    "phase_averaged_pdc",
]

_TOL = 1e-12


@dataclass(frozen=True)
class PairSpec:
    """alpha |HH> + beta |VV> with |alpha|^2 + |beta|^2 = 1."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        n = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(n - 1) > _TOL:
            raise ValueError(f"|alpha|^2 + |beta|^2 = {n!r}, expected 1")

    @classmethod
    def from_weight(cls, alpha_sq: float, phase: float = 0.0) -> "PairSpec":
        """Parameterize by |alpha|^2 and the relative phase of beta."""
        if not 0 <= alpha_sq <= 1:
            raise ValueError(f"alpha_sq={alpha_sq} outside [0, 1]")
        return cls(math.sqrt(alpha_sq), cmath.exp(1j * phase) * math.sqrt(1 - alpha_sq))


@dataclass(frozen=True)
class PdcSpec:
    """Two-crystal down-conversion source set by complex pump couplings.

    ``gamma_h = |gamma_h| exp(i(phi_p + dphi_p/2))`` and
    ``gamma_v = |gamma_v| exp(i(phi_p - dphi_p/2))``. The derived pair
    parameter ``gamma``, polarization amplitudes ``alpha``/``beta`` (which
    absorb ``dphi_p``) and vacuum factor ``g`` follow from these.
    """

    gamma_h: complex
    gamma_v: complex

    def __post_init__(self):
        object.__setattr__(self, "gamma_h", complex(self.gamma_h))
        object.__setattr__(self, "gamma_v", complex(self.gamma_v))
        if self.gamma >= 1:
            raise ValueError(f"gamma = {self.gamma} >= 1")

    @classmethod
    def from_pair(cls, gamma: float, alpha_sq: float = 0.5, phase: float = 0.0,
                  pump_phase: float = 0.0) -> "PdcSpec":
        """Source producing ``gamma`` with first-order pair ``PairSpec.from_weight(alpha_sq, phase)``."""
        if not 0 <= gamma < 1:
            raise ValueError(f"gamma={gamma} outside [0, 1)")
        a = gamma * math.sqrt(alpha_sq)
        b = gamma * math.sqrt(1 - alpha_sq)
        return cls(math.atanh(a) * cmath.exp(1j * pump_phase),
                   math.atanh(b) * cmath.exp(1j * (pump_phase + phase)))

    @property
    def phi_p(self) -> float:
        return (cmath.phase(self.gamma_h) + cmath.phase(self.gamma_v)) / 2

    @property
    def dphi_p(self) -> float:
        return cmath.phase(self.gamma_h) - cmath.phase(self.gamma_v)

    @property
    def gamma(self) -> float:
        return math.sqrt(math.tanh(abs(self.gamma_h)) ** 2 + math.tanh(abs(self.gamma_v)) ** 2)

    def _unit(self, z: complex) -> complex:
        return z / abs(z) if z != 0 else 1.0

    @property
    def alpha(self) -> complex:
        g = self.gamma
        if g == 0:
            return 1 / math.sqrt(2)
        return self._unit(self.gamma_h) * math.tanh(abs(self.gamma_h)) / g * cmath.exp(-1j * self.phi_p)

    @property
    def beta(self) -> complex:
        g = self.gamma
        if g == 0:
            return 1 / math.sqrt(2)
        return self._unit(self.gamma_v) * math.tanh(abs(self.gamma_v)) / g * cmath.exp(-1j * self.phi_p)

    @property
    def g(self) -> float:
        return 1 / (math.cosh(abs(self.gamma_h)) ** 2 * math.cosh(abs(self.gamma_v)) ** 2)

    @property
    def pair(self) -> PairSpec:
        return PairSpec(self.alpha, self.beta)


def _pair_modes(a: str, b: str):
    return (Mode(a, Pol.H), Mode(b, Pol.H), Mode(a, Pol.V), Mode(b, Pol.V))


def ideal_pair(spec: PairSpec, modes: tuple[str, str] = ("1", "2")) -> PureState:
    ah, bh, av, bv = _pair_modes(*modes)
    return PureState.from_occupations(
        [({ah: 1, bh: 1}, spec.alpha), ({av: 1, bv: 1}, spec.beta)], modes=(ah, bh, av, bv))


def ideal_two_pairs(spec12: PairSpec, spec34: PairSpec | None = None) -> PureState:
    """|a,b>_12 (x) |a,b>_34 on modes 1..4."""
    return tensor(ideal_pair(spec12, ("1", "2")), ideal_pair(spec34 or spec12, ("3", "4")))


def pdc_single(spec: PdcSpec, modes: tuple[str, str] = ("1", "2"), n_max: int = 4) -> PureState:
    """sqrt(g) sum_{n,m} (gamma alpha e^{i phi})^n (gamma beta e^{i phi})^m |n n m m>, 2(n+m) <= n_max.

    The discarded tail weight is stored on the result.
    """
    ah, bh, av, bv = _pair_modes(*modes)
    th = math.tanh(abs(spec.gamma_h)) * spec._unit(spec.gamma_h)
    tv = math.tanh(abs(spec.gamma_v)) * spec._unit(spec.gamma_v)
    root_g = math.sqrt(spec.g)
    kmax = n_max // 2
    terms = {}
    for n in range(kmax + 1):
        for m in range(kmax + 1 - n):
            terms[(n, n, m, m)] = root_g * th ** n * tv ** m
    kept = math.fsum(abs(v) ** 2 for v in terms.values())
    return PureState((ah, bh, av, bv), terms, dropped_weight=max(0.0, 1 - kept))


def pdc_double(spec: PdcSpec, n_max: int = 4) -> PureState:
    """Two independent pulses on modes (1,2) and (3,4), truncated at ``n_max`` photons in total."""
    a = pdc_single(spec, ("1", "2"), n_max)
    b = pdc_single(spec, ("3", "4"), n_max)
    full = tensor(PureState(a.modes, a.terms), PureState(b.modes, b.terms))
    kept = full.truncate(n_max)
    dropped = max(0.0, 1 - kept.norm_sq())
    return PureState(kept.modes, kept.terms, dropped)


def pdc_sectors(spec: PdcSpec, n_max: int = 4) -> dict[int, PureState]:
    """Pair-number sectors k -> g gamma^k e^{ik phi} |Psi^(k)>_1234 (unnormalized)."""
    return {n // 2: s for n, s in pdc_double(spec, n_max).photon_sectors().items()}


def phase_averaged_pdc(spec: PdcSpec, n_max: int = 4) -> MixedEnsemble:
    """Pump-phase average of :func:`pdc_double`: drop coherences between sectors."""
    st = pdc_double(spec, n_max)
    return MixedEnsemble.from_unnormalized(
        [(1.0, s) for s in st.photon_sectors().values()], st.dropped_weight)
