"""Sparse multi-mode Fock states and classical mixtures of them.

A :class:`PureState` stores amplitudes keyed by occupation tuples aligned
with a canonically sorted tuple of :class:`Mode` labels. A
:class:`MixedEnsemble` is a weighted list of normalized pure states; every
mixed state produced by the purification circuit (phase-averaged down-
conversion, post-measurement conditionals, channel averages) is of this form.
"""
from __future__ import annotations

import contextlib
import contextvars
import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Pol",
    "Mode",
    "mode",
    "modes_of",
    "PureState",
    "MixedEnsemble",
    "ModeError",
    "tensor",
    "overlap",
    "trace_out",
    "bell_state",
    "fidelity_to_bell",
    "prune_tolerance",
    "get_prune_tolerance",
]

NORM_TOL = 1e-12

_PRUNE_TOL: contextvars.ContextVar[float] = contextvars.ContextVar("prune_tol", default=1e-15)


class ModeError(ValueError):
    """Raised on inconsistent mode registries."""


class Pol(str, enum.Enum):
    H = "H"
    V = "V"


class Mode(NamedTuple):
    spatial: str
    pol: Pol

    def __str__(self) -> str:
        return f"{self.spatial}{self.pol.value}"


def mode(label: str | Mode) -> Mode:
    """Parse a label such as ``"5'H"`` or ``"2V"`` into a :class:`Mode`."""
    if isinstance(label, Mode):
        return label
    label = str(label)
    if len(label) < 2 or label[-1] not in "HV":
        raise ModeError(f"bad mode label {label!r}")
    return Mode(label[:-1], Pol(label[-1]))


def modes_of(*spatial: str) -> tuple[Mode, ...]:
    """Both polarization modes of each spatial label, in canonical order."""
    return tuple(sorted(Mode(str(s), p) for s in spatial for p in Pol))


def get_prune_tolerance() -> float:
    return _PRUNE_TOL.get()


@contextlib.contextmanager
def prune_tolerance(tol: float) -> Iterator[None]:
    """Temporarily change the amplitude prune tolerance (``0`` keeps everything nonzero)."""
    token = _PRUNE_TOL.set(float(tol))
    try:
        yield
    finally:
        _PRUNE_TOL.reset(token)


def _canonical(modes: Iterable[Mode], terms: Mapping[tuple[int, ...], complex]):
    modes = tuple(mode(m) for m in modes)
    if len(set(modes)) != len(modes):
        raise ModeError(f"duplicate modes in {[str(m) for m in modes]}")
    order = sorted(range(len(modes)), key=lambda i: modes[i])
    tol = _PRUNE_TOL.get()
    out: dict[tuple[int, ...], complex] = defaultdict(complex)
    for occ, amp in terms.items():
        if len(occ) != len(modes):
            raise ModeError("occupation length does not match registry")
        if any(n < 0 for n in occ):
            raise ValueError(f"negative occupation {occ}")
        out[tuple(int(occ[i]) for i in order)] += complex(amp)
    cleaned = {k: v for k, v in out.items() if abs(v) > tol or (tol == 0 and v != 0)}
    return tuple(modes[i] for i in order), cleaned


@dataclass(frozen=True, eq=False)
class PureState:
    """Unnormalized-allowed pure state: occupation tuple -> complex amplitude."""

    modes: tuple[Mode, ...]
    terms: Mapping[tuple[int, ...], complex]
    dropped_weight: float = 0.0

    def __init__(self, modes: Iterable[Mode | str], terms: Mapping[tuple[int, ...], complex],
                 dropped_weight: float = 0.0):
        ms, ts = _canonical(modes, terms)
        object.__setattr__(self, "modes", ms)
        object.__setattr__(self, "terms", ts)
        object.__setattr__(self, "dropped_weight", float(dropped_weight))

    # -- construction -------------------------------------------------
    @classmethod
    def from_occupations(cls, items: Iterable[tuple[Mapping[Mode | str, int], complex]],
                         modes: Iterable[Mode | str] | None = None) -> "PureState":
        """Build from ``[({mode: count, ...}, amplitude), ...]``; absent modes are vacuum."""
        items = [({mode(k): int(v) for k, v in occ.items()}, amp) for occ, amp in items]
        if modes is None:
            ms = sorted({m for occ, _ in items for m in occ})
        else:
            ms = sorted(mode(m) for m in modes)
        index = {m: i for i, m in enumerate(ms)}
        terms: dict[tuple[int, ...], complex] = defaultdict(complex)
        for occ, amp in items:
            key = [0] * len(ms)
            for m, n in occ.items():
                if m not in index:
                    raise ModeError(f"mode {m} not in registry")
                key[index[m]] = n
            terms[tuple(key)] += amp
        return cls(ms, terms)

    @classmethod
    def vacuum(cls, modes: Iterable[Mode | str] = ()) -> "PureState":
        ms = [mode(m) for m in modes]
        return cls(ms, {(0,) * len(ms): 1.0})

    # -- basic queries ------------------------------------------------
    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, PureState) and self.modes == other.modes
                and self.terms == other.terms)

    def __hash__(self):
        return hash((self.modes, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        return f"PureState({self.ket()})"

    def norm_sq(self) -> float:
        return math.fsum(abs(a) ** 2 for a in self.terms.values())

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def is_normalized(self) -> bool:
        return abs(self.norm_sq() - 1.0) <= NORM_TOL

    def normalized(self) -> "PureState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return self.scale(1.0 / n)

    def scale(self, c: complex) -> "PureState":
        return PureState(self.modes, {k: c * v for k, v in self.terms.items()}, self.dropped_weight)

    def __add__(self, other: "PureState") -> "PureState":
        a, b = _aligned(self, other)
        terms = dict(a.terms)
        for k, v in b.terms.items():
            terms[k] = terms.get(k, 0) + v
        return PureState(a.modes, terms, a.dropped_weight + b.dropped_weight)

    def __sub__(self, other: "PureState") -> "PureState":
        return self + other.scale(-1)

    def __mul__(self, c: complex) -> "PureState":
        return self.scale(c)

    __rmul__ = __mul__

    def amplitude(self, occ: Mapping[Mode | str, int]) -> complex:
        occ = {mode(k): v for k, v in occ.items()}
        unknown = set(occ) - set(self.modes)
        if any(occ[m] for m in unknown):
            return 0j
        key = tuple(occ.get(m, 0) for m in self.modes)
        return self.terms.get(key, 0j)

    def occupation(self, key: tuple[int, ...]) -> dict[Mode, int]:
        return {m: n for m, n in zip(self.modes, key) if n}

    def total_photons(self) -> set[int]:
        return {sum(k) for k in self.terms}

    def photon_sectors(self) -> dict[int, "PureState"]:
        """Split into fixed-total-photon-number pieces (unnormalized)."""
        groups: dict[int, dict] = defaultdict(dict)
        for k, v in self.terms.items():
            groups[sum(k)][k] = v
        return {n: PureState(self.modes, t) for n, t in sorted(groups.items())}

    def truncate(self, n_max: int | None) -> "PureState":
        """Drop terms with more than ``n_max`` photons, recording their weight."""
        if n_max is None:
            return self
        kept = {k: v for k, v in self.terms.items() if sum(k) <= n_max}
        lost = math.fsum(abs(v) ** 2 for k, v in self.terms.items() if sum(k) > n_max)
        return PureState(self.modes, kept, self.dropped_weight + lost)

    # -- registry manipulation ----------------------------------------
    def with_modes(self, modes: Iterable[Mode | str]) -> "PureState":
        """Extend the registry with extra modes in vacuum."""
        extra = [mode(m) for m in modes if mode(m) not in self.modes]
        if not extra:
            return self
        ms = self.modes + tuple(extra)
        pad = (0,) * len(extra)
        return PureState(ms, {k + pad: v for k, v in self.terms.items()}, self.dropped_weight)

    def without_vacuum_modes(self, modes: Iterable[Mode | str]) -> "PureState":
        """Remove modes that are empty in every term."""
        drop = {mode(m) for m in modes}
        idx = [i for i, m in enumerate(self.modes) if m in drop]
        for k in self.terms:
            if any(k[i] for i in idx):
                raise ModeError("mode is not in vacuum")
        keep = [i for i, m in enumerate(self.modes) if m not in drop]
        return PureState([self.modes[i] for i in keep],
                         {tuple(k[i] for i in keep): v for k, v in self.terms.items()},
                         self.dropped_weight)

    def relabel(self, mapping: Mapping[Mode | str, Mode | str]) -> "PureState":
        mp = {mode(k): mode(v) for k, v in mapping.items()}
        return PureState([mp.get(m, m) for m in self.modes], self.terms, self.dropped_weight)

    def diag_scale(self, fn) -> "PureState":
        """Multiply each amplitude by ``fn(occupation_tuple)``."""
        return PureState(self.modes, {k: v * fn(k) for k, v in self.terms.items()},
                         self.dropped_weight)

    # -- serialization ------------------------------------------------
    def to_json(self) -> list[dict]:
        out = []
        for key in sorted(self.terms):
            amp = self.terms[key]
            out.append({
                "occupation": {str(m): n for m, n in zip(self.modes, key) if n},
                "re": float(amp.real),
                "im": float(amp.imag),
            })
        return out

    @classmethod
    def from_json(cls, data: Sequence[Mapping], modes: Iterable[Mode | str] | None = None) -> "PureState":
        return cls.from_occupations(
            [(d["occupation"], complex(d["re"], d["im"])) for d in data], modes=modes)

    def ket(self, digits: int = 4) -> str:
        parts = []
        for key in sorted(self.terms):
            amp = self.terms[key]
            occ = " ".join(f"{n}_{m}" for m, n in zip(self.modes, key) if n) or "vac"
            parts.append(f"({amp.real:+.{digits}f}{amp.imag:+.{digits}f}j)|{occ}>")
        return " ".join(parts) or "0"


def _aligned(a: PureState, b: PureState) -> tuple[PureState, PureState]:
    if a.modes == b.modes:
        return a, b
    if set(a.modes) != set(b.modes):
        raise ModeError("states live on different mode registries")
    return a, _reorder(b, a.modes)


def _reorder(s: PureState, modes: tuple[Mode, ...]) -> PureState:
    pos = [s.modes.index(m) for m in modes]
    return PureState(modes, {tuple(k[p] for p in pos): v for k, v in s.terms.items()},
                     s.dropped_weight)


def tensor(a: PureState, b: PureState) -> PureState:
    """Product state on the disjoint union of the two registries."""
    if set(a.modes) & set(b.modes):
        raise ModeError("tensor factors share modes")
    terms = {ka + kb: va * vb for ka, va in a.terms.items() for kb, vb in b.terms.items()}
    return PureState(a.modes + b.modes, terms, a.dropped_weight + b.dropped_weight)


def overlap(a: PureState, b: PureState) -> complex:
    """<a|b>."""
    a, b = _aligned(a, b)
    small, big = (a, b) if len(a) <= len(b) else (b, a)
    s = 0j
    for k, v in small.terms.items():
        w = big.terms.get(k)
        if w is not None:
            s += (v.conjugate() * w) if small is a else (w.conjugate() * v)
    return s


@dataclass(frozen=True)
class MixedEnsemble:
    """Classical mixture ``sum_i w_i |psi_i><psi_i|`` of normalized pure states.

    The weights need not sum to one: a sub-normalized ensemble carries the
    probability of whatever event produced it, and ``dropped_weight`` records
    probability lost to photon-number truncation.
    """

    components: tuple[tuple[float, PureState], ...]
    dropped_weight: float = 0.0
    modes: tuple[Mode, ...] = field(default=(), compare=False)

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components if w > 0)
        if comps:
            ms = comps[0][1].modes
            fixed = []
            for w, s in comps:
                if s.modes != ms:
                    s = _reorder(s, ms) if set(s.modes) == set(ms) else None
                    if s is None:
                        raise ModeError("ensemble components on different registries")
                fixed.append((w, s))
            comps = tuple(fixed)
            object.__setattr__(self, "modes", ms)
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_pure(cls, state: PureState, weight: float = 1.0) -> "MixedEnsemble":
        n2 = state.norm_sq()
        if n2 == 0:
            return cls((), state.dropped_weight * weight, state.modes)
        return cls(((weight * n2, state.scale(1 / math.sqrt(n2))),),
                   state.dropped_weight * weight, state.modes)

    @classmethod
    def from_unnormalized(cls, items: Iterable[tuple[float, PureState]],
                          dropped_weight: float = 0.0) -> "MixedEnsemble":
        """Components given as ``(w, psi)`` with psi possibly unnormalized."""
        comps = []
        modes: tuple[Mode, ...] = ()
        for w, s in items:
            modes = s.modes
            n2 = s.norm_sq()
            if n2 > 0 and w > 0:
                comps.append((w * n2, s.scale(1 / math.sqrt(n2))))
        return cls(tuple(comps), dropped_weight, modes)

    @staticmethod
    def mix(parts: Iterable[tuple[float, "MixedEnsemble"]]) -> "MixedEnsemble":
        comps: list[tuple[float, PureState]] = []
        dropped = 0.0
        modes: tuple[Mode, ...] = ()
        for p, e in parts:
            comps.extend((p * w, s) for w, s in e.components)
            dropped += p * e.dropped_weight
            modes = modes or e.modes
        return MixedEnsemble(tuple(comps), dropped, modes)

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    @property
    def trace(self) -> float:
        return math.fsum(w for w, _ in self.components)

    def normalized(self) -> "MixedEnsemble":
        t = self.trace
        if t == 0:
            raise ValueError("empty ensemble")
        return MixedEnsemble(tuple((w / t, s) for w, s in self.components), 0.0, self.modes)

    def is_normalized(self) -> bool:
        return abs(self.trace - 1.0) <= NORM_TOL and all(s.is_normalized() for _, s in self.components)

    def map_states(self, fn) -> "MixedEnsemble":
        """Apply a linear map to each component; weights pick up the squared norm."""
        out = []
        dropped = self.dropped_weight
        for w, s in self.components:
            t = fn(s)
            dropped += w * t.dropped_weight
            out.append((w, PureState(t.modes, t.terms)))
        ens = MixedEnsemble.from_unnormalized(out, dropped)
        if not ens.components and out:
            object.__setattr__(ens, "modes", out[0][1].modes)
        return ens

    def population(self, phi: PureState) -> float:
        """<phi| rho |phi>."""
        return math.fsum(w * abs(overlap(phi, s)) ** 2 for w, s in self.components)

    def coherence(self, a: PureState, b: PureState) -> complex:
        """<a| rho |b>."""
        return sum(w * overlap(a, s) * overlap(s, b) for w, s in self.components)

    def photon_number_weights(self, modes: Iterable[Mode | str] | None = None) -> dict[int, float]:
        """Weight carried by each total photon number (over ``modes`` if given)."""
        sel = None if modes is None else {mode(m) for m in modes}
        out: dict[int, float] = defaultdict(float)
        for w, s in self.components:
            idx = [i for i, m in enumerate(s.modes) if sel is None or m in sel]
            for k, v in s.terms.items():
                out[sum(k[i] for i in idx)] += w * abs(v) ** 2
        return dict(sorted(out.items()))

    def compact(self, digits: int = 12) -> "MixedEnsemble":
        """Merge components equal up to a global phase."""
        buckets: dict = {}
        for w, s in self.components:
            key = _phase_key(s, digits)
            if key in buckets:
                buckets[key] = (buckets[key][0] + w, buckets[key][1])
            else:
                buckets[key] = (w, s)
        return MixedEnsemble(tuple(buckets.values()), self.dropped_weight, self.modes)

    def density_matrix(self, basis: Sequence[PureState]) -> np.ndarray:
        """Matrix elements <b_i| rho |b_j> over a list of basis states."""
        amps = np.array([[overlap(b, s) for b in basis] for _, s in self.components], dtype=complex)
        w = np.array([w for w, _ in self.components])
        if not len(w):
            return np.zeros((len(basis), len(basis)), dtype=complex)
        return (amps.T * w) @ amps.conj()

    def to_json(self) -> dict:
        return {
            "dropped_weight": self.dropped_weight,
            "components": [{"weight": w, "state": s.to_json()} for w, s in self.components],
        }


def _phase_key(s: PureState, digits: int):
    lead = max(s.terms.items(), key=lambda kv: (round(abs(kv[1]), digits), kv[0]))[1]
    ph = lead / abs(lead)
    return (s.modes,) + tuple(sorted(
        (k, round((v / ph).real, digits) + 0.0, round((v / ph).imag, digits) + 0.0)
        for k, v in s.terms.items()))


def trace_out(e: MixedEnsemble | PureState, modes: Iterable[Mode | str]) -> MixedEnsemble:
    """Reduced state on the remaining modes as a classical mixture.

    Components are split by the occupation of the discarded modes; the partial
    trace of each pure component is exactly the sum of those projections.
    """
    if isinstance(e, PureState):
        e = MixedEnsemble.from_pure(e)
    drop = {mode(m) for m in modes}
    unknown = drop - set(e.modes)
    if unknown and e.components:
        raise ModeError(f"unknown modes {sorted(str(m) for m in unknown)}")
    keep_idx = [i for i, m in enumerate(e.modes) if m not in drop]
    drop_idx = [i for i, m in enumerate(e.modes) if m in drop]
    kept_modes = tuple(e.modes[i] for i in keep_idx)
    out: list[tuple[float, PureState]] = []
    for w, s in e.components:
        groups: dict[tuple, dict] = defaultdict(dict)
        for k, v in s.terms.items():
            groups[tuple(k[i] for i in drop_idx)][tuple(k[i] for i in keep_idx)] = v
        for g in groups.values():
            out.append((w, PureState(kept_modes, g)))
    res = MixedEnsemble.from_unnormalized(out, e.dropped_weight)
    object.__setattr__(res, "modes", kept_modes)
    return res


def bell_state(which: str = "+", a: str = "6", b: str = "2") -> PureState:
    """(|1>_aH|1>_bH +/- |1>_aV|1>_bV)/sqrt(2) on the four modes of spatial labels a, b."""
    sign = {"+": 1.0, "-": -1.0}[which[-1]]
    r = 1 / math.sqrt(2)
    return PureState.from_occupations(
        [({Mode(a, Pol.H): 1, Mode(b, Pol.H): 1}, r),
         ({Mode(a, Pol.V): 1, Mode(b, Pol.V): 1}, sign * r)],
        modes=modes_of(a, b))


def fidelity_to_bell(e: MixedEnsemble | PureState, which: str = "+",
                     pair: tuple[str, str] = ("6", "2")) -> float:
    """sum_i w_i |<Phi|psi_i>|^2 for a normalized ensemble on the two named pairs."""
    if isinstance(e, PureState):
        e = MixedEnsemble.from_pure(e)
    target = bell_state(which, *pair)
    if e.components and set(e.modes) != set(target.modes):
        raise ModeError("ensemble must live on exactly the two named spatial modes")
    f = e.population(target)
    return min(max(f, 0.0), 1.0)
