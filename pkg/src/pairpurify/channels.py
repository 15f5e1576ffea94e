"""Fluctuating polarization-dependent lossy channels.

Transmission coefficients are held as complex arrays of shape ``(4, 2)``:
row ``k-1`` is spatial mode ``k``, column 0 is H and column 1 is V. Batches
of samples have shape ``(n, 4, 2)``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .detection import DetectorKind
from .fockspace import MixedEnsemble, Mode, Pol, PureState, fidelity_to_bell, mode, trace_out
from .optics import apply, apply_all, lossy_channel, phase_shift
from .protocol import RunConfig, RunStatistics, run
from .sources import PairSpec, ideal_pair, ideal_two_pairs

__all__ = [
    "ChannelSample",
    "FluctuationProcess",
    "TransmitResult",
    "transmit",
    "pair_coefficients",
    "f_factors",
    "PurifiabilityReport",
    "purifiability",
    "Compensation",
    "compensate",
    "ProcrusteanInapplicable",
    "ProcrusteanResult",
    "procrustean",
    "FiberReport",
    "classify_fiber_case",
    "fiber_scenario",
    "SWAPS",
]

_POLS = (Pol.H, Pol.V)
_SQRT_HALF = 1 / math.sqrt(2)


def _check_mu(mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=complex)
    if mu.shape[-2:] != (4, 2):
        raise ValueError(f"transmission array must end in shape (4, 2), got {mu.shape}")
    if not np.all(np.isfinite(mu)) or np.any(np.abs(mu) > 1 + 1e-12):
        raise ValueError("transmission coefficients must satisfy |mu| <= 1")
    return mu


@dataclass(frozen=True, eq=False)
class ChannelSample:
    """One draw of the eight transmission coefficients mu_kL."""

    mu: np.ndarray

    def __post_init__(self):
        mu = _check_mu(self.mu).copy()
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def from_mapping(cls, values: Mapping[str, complex], default: complex = 1.0) -> "ChannelSample":
        """Build from labels like ``{"1V": 0.5}``; unspecified coefficients get ``default``."""
        mu = np.full((4, 2), default, dtype=complex)
        for label, v in values.items():
            m = mode(label)
            k = int(m.spatial)
            if not 1 <= k <= 4:
                raise ValueError(f"channel mode {label!r} is not one of 1..4")
            mu[k - 1, _POLS.index(m.pol)] = v
        return cls(mu)

    @classmethod
    def lossless(cls) -> "ChannelSample":
        return cls(np.ones((4, 2), dtype=complex))

    def __getitem__(self, label: str) -> complex:
        m = mode(label)
        return complex(self.mu[int(m.spatial) - 1, _POLS.index(m.pol)])

    def to_json(self) -> dict:
        return {f"{k + 1}{p.value}": [self.mu[k, j].real, self.mu[k, j].imag]
                for k in range(4) for j, p in enumerate(_POLS)}


Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class FluctuationProcess:
    """Distribution over channel samples; ``sampler(rng, n)`` returns an ``(n, 4, 2)`` array."""

    sampler: Sampler
    name: str = "custom"
    deterministic: bool = False

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return _check_mu(self.sampler(rng, n)).reshape(n, 4, 2)

    @classmethod
    def constant(cls, sample: ChannelSample | np.ndarray) -> "FluctuationProcess":
        mu = sample.mu if isinstance(sample, ChannelSample) else _check_mu(sample)
        return cls(lambda rng, n: np.broadcast_to(mu, (n, 4, 2)).copy(), "constant", True)

    @classmethod
    def common_mode(cls, base: ChannelSample | None = None, depth: float = 0.5) -> "FluctuationProcess":
        """Each spatial channel gets one random complex factor shared by H and V.

        The factors cancel in F_A and F_B, which therefore stay constant.
        """
        mu0 = (base or ChannelSample.lossless()).mu

        def draw(rng, n):
            amp = 1 - depth * rng.random((n, 4, 1))
            ph = np.exp(2j * np.pi * rng.random((n, 4, 1)))
            return mu0 * amp * ph
        return cls(draw, "common_mode")

    @classmethod
    def phase_noise(cls, base: ChannelSample | None = None, modes=("1H",), spread: float = 2 * np.pi) -> "FluctuationProcess":
        """Independent uniform phases in ``[0, spread)`` on the listed modes."""
        mu0 = (base or ChannelSample.lossless()).mu
        idx = [(int(mode(m).spatial) - 1, _POLS.index(mode(m).pol)) for m in modes]

        def draw(rng, n):
            out = np.broadcast_to(mu0, (n, 4, 2)).copy()
            for k, j in idx:
                out[:, k, j] *= np.exp(1j * spread * rng.random(n))
            return out
        return cls(draw, "phase_noise")

    @classmethod
    def uniform(cls) -> "FluctuationProcess":
        """All eight coefficients independent: |mu| ~ U[0,1], phase ~ U[0, 2pi)."""
        def draw(rng, n):
            return rng.random((n, 4, 2)) * np.exp(2j * np.pi * rng.random((n, 4, 2)))
        return cls(draw, "uniform")

    def compensated(self, comp: "Compensation") -> "FluctuationProcess":
        return FluctuationProcess(lambda rng, n: comp.apply_to(self.sampler(rng, n)),
                                  f"{self.name}+comp", self.deterministic)


# -- transmission -------------------------------------------------------------

def pair_coefficients(mu) -> tuple[np.ndarray, ...]:
    """(P, a12, b12, a34, b34) for samples of shape (..., 4, 2).

    Coefficients are NaN where a pair is lost entirely (P = 0).
    """
    mu = np.asarray(mu, dtype=complex)
    h12 = mu[..., 0, 0] * mu[..., 1, 0]
    v12 = mu[..., 0, 1] * mu[..., 1, 1]
    h34 = mu[..., 2, 0] * mu[..., 3, 0]
    v34 = mu[..., 2, 1] * mu[..., 3, 1]
    n12 = np.abs(h12) ** 2 + np.abs(v12) ** 2
    n34 = np.abs(h34) ** 2 + np.abs(v34) ** 2
    P = n12 * n34 / 4
    with np.errstate(invalid="ignore", divide="ignore"):
        r12 = np.where(n12 > 0, 1 / np.sqrt(n12), np.nan)
        r34 = np.where(n34 > 0, 1 / np.sqrt(n34), np.nan)
    return P, h12 * r12, v12 * r12, h34 * r34, v34 * r34


@dataclass(frozen=True)
class TransmitResult:
    ensemble: MixedEnsemble          # received state on modes 1..4
    four_photon_weight: float
    conditional: PureState | None    # normalized four-photon component
    coefficients: tuple[complex, complex, complex, complex] | None

    @property
    def expected_conditional(self) -> PureState | None:
        if self.coefficients is None:
            return None
        a12, b12, a34, b34 = self.coefficients
        return ideal_two_pairs(PairSpec(a12, b12), PairSpec(a34, b34))


def _ancilla(m: Mode) -> Mode:
    return Mode(f"{m.spatial}~", m.pol)


def transmit(sample: ChannelSample, pairs: PureState | None = None) -> TransmitResult:
    """Send two pairs through the eight lossy channels and trace out the loss ports."""
    if not isinstance(sample, ChannelSample):
        sample = ChannelSample(sample)
    state = pairs if pairs is not None else ideal_two_pairs(PairSpec(_SQRT_HALF, _SQRT_HALF))
    transforms = []
    for k in range(4):
        for j, p in enumerate(_POLS):
            m = Mode(str(k + 1), p)
            transforms.append(lossy_channel(m, sample.mu[k, j], _ancilla(m)))
    out = apply_all(transforms, state)
    received = trace_out(out, [_ancilla(Mode(str(k), p)) for k in range(1, 5) for p in _POLS])
    four = [(w, s) for w, s in received.components if s.total_photons() == {4}]
    weight = math.fsum(w for w, _ in four)
    cond = four[0][1] if len(four) == 1 else None
    P, a12, b12, a34, b34 = pair_coefficients(sample.mu)
    coeffs = None if P == 0 else tuple(complex(x) for x in (a12, b12, a34, b34))
    return TransmitResult(received, weight, cond, coeffs)


def f_factors(sample: ChannelSample | np.ndarray):
    """(F, F_A, F_B); an entry is None when its denominator vanishes."""
    mu = sample.mu if isinstance(sample, ChannelSample) else _check_mu(sample)
    m = {f"{k + 1}{p.value}": complex(mu[k, j]) for k in range(4) for j, p in enumerate(_POLS)}

    def ratio(num, den):
        return None if den == 0 else num / den

    FA = ratio(m["1H"] * m["3V"], m["1V"] * m["3H"])
    FB = ratio(m["2H"] * m["4V"], m["2V"] * m["4H"])
    # F's denominator vanishes iff one of the halves does; the product form
    # also avoids underflow of the eight-fold products
    F = None if FA is None or FB is None else FA * FB
    return F, FA, FB


# -- purifiability --------------------------------------------------------------

_BASIS = ((1, 1, 1, 1), (1, 1, 0, 0), (0, 0, 1, 1), (0, 0, 0, 0))   # H-occupation of 1,2 / 3,4
_MODES_1234 = tuple(Mode(str(k), p) for k in range(1, 5) for p in _POLS)


def _basis_state(v: np.ndarray) -> PureState:
    """sum_i v_i |b_i> on modes 1..4 for the basis HHHH, HHVV, VVHH, VVVV."""
    items = []
    for (h12, _, h34, _), amp in zip(_BASIS, v):
        occ = {}
        for k, h in ((1, h12), (2, h12), (3, h34), (4, h34)):
            occ[Mode(str(k), Pol.H if h else Pol.V)] = 1
        items.append((occ, complex(amp)))
    return PureState.from_occupations(items, modes=_MODES_1234)


def density_ensemble(rho: np.ndarray, tol: float = 1e-14) -> MixedEnsemble:
    """Eigen-decompose a normalized 4x4 density on the two-pair basis into an ensemble."""
    rho = (rho + rho.conj().T) / 2
    vals, vecs = np.linalg.eigh(rho)
    comps = [(float(w), _basis_state(vecs[:, i])) for i, w in enumerate(vals) if w > tol]
    total = math.fsum(w for w, _ in comps)
    return MixedEnsemble.from_unnormalized([(w / total, s) for w, s in comps])


def _purification_config(ens: MixedEnsemble, config: RunConfig | None) -> RunConfig:
    if config is None:
        return RunConfig.uniform(ens, DetectorKind.SINGLE_PHOTON, 1.0, 0.0, postselect=True)
    from dataclasses import replace
    return replace(config, source=ens)


@dataclass(frozen=True)
class PurifiabilityReport:
    condition: float          # <P |a12 b34 - b12 a34|^2>
    condition_stderr: float
    purifiable: bool
    post_fidelity: float
    mean_P: float
    density: np.ndarray       # <P rho>/<P> on HHHH, HHVV, VVHH, VVVV
    n_samples: int
    stats: RunStatistics | None = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"condition": self.condition, "condition_stderr": self.condition_stderr,
                "purifiable": self.purifiable, "post_fidelity": self.post_fidelity,
                "mean_P": self.mean_P, "n_samples": self.n_samples}


def _report_from_coefficients(P, a12, b12, a34, b34, tol, config, use_numba) -> PurifiabilityReport:
    n = len(P)
    keep = P > 0
    P, a12, b12, a34, b34 = (x[keep] for x in (P, a12, b12, a34, b34))
    cond_i = np.zeros(n)
    cond_i[keep] = P * np.abs(a12 * b34 - b12 * a34) ** 2
    condition = float(cond_i.mean())
    stderr = float(cond_i.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    mean_P = float(P.sum() / n)
    if mean_P == 0:
        return PurifiabilityReport(condition, stderr, False, float("nan"), 0.0,
                                   np.full((4, 4), np.nan), n)
    rho = _kernels.pair_density(a12, b12, a34, b34, P, use_numba) / (mean_P * n)
    stats = run(_purification_config(density_ensemble(rho), config))
    return PurifiabilityReport(condition, stderr, condition <= tol, stats.fidelity,
                               mean_P, rho, n, stats)


def purifiability(process: FluctuationProcess, n_samples: int = 10_000, seed: int | None = 0,
                  tol: float = 1e-12, config: RunConfig | None = None,
                  use_numba: bool | None = None) -> PurifiabilityReport:
    """Monte Carlo estimate of the purification condition and the post-selected output fidelity.

    ``config`` supplies detectors for the purification run (defaults to
    perfect number-resolving detectors with post-selection). A deterministic
    process is evaluated with a single sample.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = 1 if process.deterministic else n_samples
    coeffs = pair_coefficients(process.sample(n, rng))
    return _report_from_coefficients(*coeffs, tol=tol, config=config, use_numba=use_numba)


# -- compensation ---------------------------------------------------------------

@dataclass(frozen=True)
class Compensation:
    """Attenuation and phase ``factor`` applied to one channel mode."""

    mode: Mode
    factor: complex

    @property
    def is_identity(self) -> bool:
        return abs(self.factor - 1) < 1e-15

    def apply_to(self, mu) -> np.ndarray:
        out = np.array(mu, dtype=complex)
        out[..., int(self.mode.spatial) - 1, _POLS.index(self.mode.pol)] *= self.factor
        return out

    def transform(self, ancilla: Mode | str | None = None):
        return lossy_channel(self.mode, self.factor, ancilla or _ancilla(self.mode))


def compensate(target: ChannelSample | complex, rtol: float = 1e-12) -> Compensation:
    """Local attenuation + phase on Alice's mode 3 that brings a constant F to 1.

    F scales as 1/mu_3H and as mu_3V, so |F| <= 1 is fixed by multiplying
    mu_3H by F, and |F| > 1 by multiplying mu_3V by 1/F.
    """
    if isinstance(target, ChannelSample):
        F = f_factors(target)[0]
        if F is None:
            raise ValueError("F is undefined for this sample (zero denominator)")
    else:
        F = complex(target)
    if F == 0:
        raise ValueError("F = 0 cannot be compensated by attenuation")
    if abs(F - 1) <= rtol:
        return Compensation(Mode("3", Pol.H), 1.0 + 0j)
    if abs(F) <= 1:
        return Compensation(Mode("3", Pol.H), F)
    return Compensation(Mode("3", Pol.V), 1 / F)


# -- Procrustean concentration --------------------------------------------------

class ProcrusteanInapplicable(ValueError):
    """The pair is not a known pure alpha|HH> + beta|VV> state."""


@dataclass(frozen=True)
class ProcrusteanResult:
    success_probability: float
    fidelity: float
    attenuated: Mode | None
    output: MixedEnsemble


def _known_pair(pair, modes) -> tuple[complex, complex]:
    if isinstance(pair, PairSpec):
        return pair.alpha, pair.beta
    if isinstance(pair, MixedEnsemble):
        pair = pair.compact()
        if len(pair.components) != 1:
            raise ProcrusteanInapplicable("pair is a mixture, not a known pure state")
        pair = pair.components[0][1]
    if not isinstance(pair, PureState):
        raise ProcrusteanInapplicable(f"cannot read a pair state from {type(pair).__name__}")
    a, b = modes
    hh = {Mode(a, Pol.H): 1, Mode(b, Pol.H): 1}
    vv = {Mode(a, Pol.V): 1, Mode(b, Pol.V): 1}
    alpha, beta = pair.amplitude(hh), pair.amplitude(vv)
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - pair.norm_sq()) > 1e-12:
        raise ProcrusteanInapplicable("state has support outside alpha|HH> + beta|VV>")
    n = pair.norm()
    return alpha / n, beta / n


def procrustean(pair: PairSpec | PureState | MixedEnsemble,
                modes: tuple[str, str] = ("1", "2")) -> ProcrusteanResult:
    """Attenuate the larger polarization on Alice's photon and keep runs where it survives."""
    alpha, beta = _known_pair(pair, modes)
    a, b = modes
    state = ideal_pair(PairSpec(alpha, beta), modes)
    big, small = (alpha, beta) if abs(alpha) >= abs(beta) else (beta, alpha)
    target = None
    if abs(abs(big) - abs(small)) > 1e-15:
        target = Mode(a, Pol.H if abs(alpha) >= abs(beta) else Pol.V)
        state = apply(lossy_channel(target, abs(small) / abs(big), _ancilla(target)), state)
        kept = trace_out(state, [_ancilla(target)])
    else:
        kept = MixedEnsemble.from_pure(state)
    pair_modes = [Mode(a, Pol.H), Mode(a, Pol.V), Mode(b, Pol.H), Mode(b, Pol.V)]
    survived = [(w, s) for w, s in kept.components if s.total_photons() == {2}]
    success = math.fsum(w for w, _ in survived)
    if success == 0:
        raise ProcrusteanInapplicable("one polarization amplitude is zero; nothing to concentrate")
    # Bob removes the relative phase between the HH and VV terms
    fix = phase_shift(Mode(b, Pol.V), cmath.phase(alpha) - cmath.phase(beta))
    out = MixedEnsemble.from_unnormalized(
        [(w / success, apply(fix, s).with_modes(pair_modes)) for w, s in survived])
    return ProcrusteanResult(success, fidelity_to_bell(out, "+", modes), target, out)


# -- fiber delay scenario ----------------------------------------------------------

SWAPS: dict[str, dict[str, str]] = {
    "none": {},
    "1V-3H": {"1V": "3H", "3H": "1V"},
    "1V-3V": {"1V": "3V", "3V": "1V"},
}
_AUTO_SWAP = {"a": "1V-3H", "b": "none", "c": "1V-3V", "d": "none"}


def classify_fiber_case(tau_plus: float, tau_minus: float, dt: float, ratio: float = 10.0) -> str | None:
    """Regime from correlation times; None when some ratio is below ``ratio``."""
    def regime(tau):
        if tau >= ratio * dt:
            return "equal"
        if dt >= ratio * tau:
            return "independent"
        return None
    rp, rm = regime(tau_plus), regime(tau_minus)
    table = {("equal", "equal"): "a", ("independent", "equal"): "b",
             ("equal", "independent"): "c", ("independent", "independent"): "d"}
    return table.get((rp, rm))


@dataclass(frozen=True)
class FiberReport:
    case: str | None
    swap: str
    process: str
    direct_fidelity: float     # two-pair fidelity to |Phi+>|Phi+> without purification
    condition: float
    purifiable: bool
    purified_fidelity: float
    n_samples: int

    @property
    def fidelity(self) -> float:
        """Best achievable: direct sharing or purification."""
        return max(self.direct_fidelity, self.purified_fidelity)

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("case", "swap", "process", "direct_fidelity", "condition",
                                              "purifiable", "purified_fidelity", "n_samples")} | \
            {"fidelity": self.fidelity}


def _idealized_phases(case: str, n: int, rng: np.random.Generator):
    """phi_+/- at t and t+dt, exactly equal or independent uniform."""
    same_plus, same_minus = {"a": (True, True), "b": (False, True),
                             "c": (True, False), "d": (False, False)}[case]
    p0, m0 = 2 * np.pi * rng.random(n), 2 * np.pi * rng.random(n)
    p1 = p0 if same_plus else 2 * np.pi * rng.random(n)
    m1 = m0 if same_minus else 2 * np.pi * rng.random(n)
    return p0, m0, p1, m1


def _ou_phases(tau_plus, tau_minus, dt, sigma, steps, n, rng, use_numba):
    """Stationary OU paths for phi_+ and phi_- sampled at t and t+dt."""
    out = []
    for tau in (tau_plus, tau_minus):
        rho = math.exp(-dt / steps / tau) if tau > 0 else 0.0
        x0 = sigma * rng.standard_normal(n)
        path = _kernels.ou_paths(x0, rho, sigma * math.sqrt(1 - rho ** 2),
                                 rng.standard_normal((n, steps)), use_numba)
        out.append((path[:, 0], path[:, -1]))
    (p0, p1), (m0, m1) = out
    return p0, m0, p1, m1


def fiber_scenario(case: str | None = None, tau_plus: float = 1.0, tau_minus: float = 1.0,
                   dt: float = 1.0, n_samples: int = 10_000, swap_strategy: str = "auto",
                   process: str = "idealized", sigma: float = math.pi, steps: int = 8,
                   seed: int | None = 0, tol: float = 1e-9, config: RunConfig | None = None,
                   use_numba: bool | None = None) -> FiberReport:
    """Two pairs whose Alice photons share one fiber, separated by a delay ``dt``.

    Slot phases: 1H -> phi_H(t), 1V -> phi_V(t), 3H -> phi_H(t+dt),
    3V -> phi_V(t+dt) with phi_H = phi_+ + phi_-, phi_V = phi_+ - phi_-.
    A swap routes a logical mode through another slot (Bob swaps before
    sending, Alice swaps back). ``process`` is ``idealized`` (needs a case)
    or ``ou`` (Ornstein-Uhlenbeck phases with std ``sigma``).
    """
    if case is None:
        case = classify_fiber_case(tau_plus, tau_minus, dt)
    if case is not None and case not in _AUTO_SWAP:
        raise ValueError(f"unknown fiber case {case!r}")
    swap = swap_strategy
    if swap == "auto":
        swap = _AUTO_SWAP[case] if case else "none"
    if swap not in SWAPS:
        raise ValueError(f"unknown swap strategy {swap!r}; choose from {sorted(SWAPS)} or 'auto'")
    rng = np.random.default_rng(seed)
    if process == "idealized":
        if case is None:
            raise ValueError("idealized phases need a case (or clearly separated time scales)")
        p0, m0, p1, m1 = _idealized_phases(case, n_samples, rng)
    elif process == "ou":
        if min(tau_plus, tau_minus) <= 0 or dt < 0 or steps < 1:
            raise ValueError("OU process needs tau > 0, dt >= 0 and steps >= 1")
        p0, m0, p1, m1 = _ou_phases(tau_plus, tau_minus, dt, sigma, steps, n_samples, rng, use_numba)
    else:
        raise ValueError(f"unknown phase process {process!r}")
    slot = {"1H": p0 + m0, "1V": p0 - m0, "3H": p1 + m1, "3V": p1 - m1}
    route = SWAPS[swap]
    phase = {m: slot[route.get(m, m)] for m in slot}
    a12, b12 = _SQRT_HALF * np.exp(1j * phase["1H"]), _SQRT_HALF * np.exp(1j * phase["1V"])
    a34, b34 = _SQRT_HALF * np.exp(1j * phase["3H"]), _SQRT_HALF * np.exp(1j * phase["3V"])
    direct = float(np.mean(np.abs(a12 + b12) ** 2 / 2 * np.abs(a34 + b34) ** 2 / 2))
    rep = _report_from_coefficients(np.ones(n_samples), a12, b12, a34, b34, tol, config, use_numba)
    purifiable = rep.post_fidelity >= 1 - tol
    return FiberReport(case, swap, process, direct, rep.condition, purifiable,
                       rep.post_fidelity, n_samples)
