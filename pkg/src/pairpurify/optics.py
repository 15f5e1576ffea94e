"""Linear optical elements acting on mode creation operators.

A :class:`LinearTransform` maps each input creation operator to a linear
combination of output creation operators::

    a_in[j]^dag  ->  sum_i U[i, j] a_out[i]^dag

Input and output mode lists may differ (a wave plate relabels ``5`` to
``5'``). Modes of a state not named in ``inputs`` pass through unchanged.
"""
from __future__ import annotations

import cmath
import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .fockspace import Mode, ModeError, PureState, Pol, mode

__all__ = [
    "LinearTransform",
    "Conventions",
    "half_wave_plate",
    "pbs",
    "phase_shift",
    "lossy_channel",
    "mode_swap",
    "apply",
    "apply_all",
    "random_unitary",
    "compose",
]

UNITARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class LinearTransform:
    inputs: tuple[Mode, ...]
    outputs: tuple[Mode, ...]
    matrix: np.ndarray
    unitary: bool = True
    name: str = ""

    def __post_init__(self):
        ins = tuple(mode(m) for m in self.inputs)
        outs = tuple(mode(m) for m in self.outputs)
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (len(outs), len(ins)):
            raise ValueError(f"matrix shape {m.shape} does not match {len(outs)}x{len(ins)} modes")
        if len(set(ins)) != len(ins) or len(set(outs)) != len(outs):
            raise ModeError("duplicate modes in transform")
        m.setflags(write=False)
        object.__setattr__(self, "inputs", ins)
        object.__setattr__(self, "outputs", outs)
        object.__setattr__(self, "matrix", m)
        if self.unitary and not self.is_unitary():
            raise ValueError(f"{self.name or 'transform'} flagged unitary but U^dag U != I")

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        m = self.matrix
        return m.shape[0] == m.shape[1] and np.allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=tol, rtol=0)

    def __matmul__(self, other: "LinearTransform") -> "LinearTransform":
        return compose(self, other)

    def __call__(self, state: PureState, n_max: int | None = None) -> PureState:
        return apply(self, state, n_max)


@dataclass(frozen=True)
class Conventions:
    """Phase conventions that no measured quantity depends on.

    ``r90_h``/``r90_v`` are the phases picked up by H->V and V->H in the
    90-degree plate; ``pbs_r1``/``pbs_r2`` are the reflection phases of the
    two PBS input ports. The defaults give the amplitude signs used throughout this package.
    """

    r90_h: float = 0.0
    r90_v: float = 0.0
    pbs_r1: float = 0.0
    pbs_r2: float = 0.0

    @classmethod
    def rotation(cls) -> "Conventions":
        """Proper-rotation plate: V -> -H."""
        return cls(r90_v=math.pi)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Conventions":
        return cls(*rng.uniform(0, 2 * math.pi, size=4))


def half_wave_plate(mode_pair: tuple[Mode | str, Mode | str], angle: int,
                    out: str | None = None, conventions: Conventions = Conventions()) -> LinearTransform:
    """Polarization rotation by 45 or 90 degrees on one spatial mode.

    45: H -> (H+V)/sqrt2, V -> (H-V)/sqrt2.
    90: H -> V, V -> H with the phases in ``conventions``.
    ``out`` relabels the spatial mode on the output side (``"5"`` -> ``"5'"``).
    """
    h, v = mode(mode_pair[0]), mode(mode_pair[1])
    if h.spatial != v.spatial:
        raise ModeError("wave plate modes must share a spatial label")
    if h.pol != Pol.H or v.pol != Pol.V:
        raise ModeError("mode_pair must be (H, V)")
    if out is not None and not isinstance(out, str):
        raise TypeError("out is a spatial label such as \"5'\"")
    s = h.spatial if out is None else out
    outs = (Mode(s, Pol.H), Mode(s, Pol.V))
    if angle == 45:
        r = 1 / math.sqrt(2)
        u = np.array([[r, r], [r, -r]])
    elif angle == 90:
        u = np.array([[0, cmath.exp(1j * conventions.r90_v)],
                      [cmath.exp(1j * conventions.r90_h), 0]])
    else:
        raise ValueError("angle must be 45 or 90")
    return LinearTransform((h, v), outs, u, name=f"R{angle}({h.spatial})")


def pbs(in1: str, in2: str, out_t: str, out_r: str,
        conventions: Conventions = Conventions()) -> LinearTransform:
    """Polarizing beam splitter: H transmitted, V reflected.

    in1 H -> out_t H, in1 V -> out_r V, in2 H -> out_r H, in2 V -> out_t V.
    """
    if in1 == in2 or out_t == out_r:
        raise ModeError("PBS ports must be distinct")
    ins = (Mode(in1, Pol.H), Mode(in1, Pol.V), Mode(in2, Pol.H), Mode(in2, Pol.V))
    outs = (Mode(out_t, Pol.H), Mode(out_t, Pol.V), Mode(out_r, Pol.H), Mode(out_r, Pol.V))
    r1 = cmath.exp(1j * conventions.pbs_r1)
    r2 = cmath.exp(1j * conventions.pbs_r2)
    u = np.zeros((4, 4), dtype=complex)
    u[0, 0] = 1     # in1 H -> out_t H
    u[3, 1] = r1    # in1 V -> out_r V
    u[2, 2] = r2    # in2 H -> out_r H
    u[1, 3] = 1     # in2 V -> out_t V
    return LinearTransform(ins, outs, u, name=f"PBS({in1},{in2})")


def phase_shift(m: Mode | str, theta: float) -> LinearTransform:
    m = mode(m)
    return LinearTransform((m,), (m,), np.array([[cmath.exp(1j * theta)]]), name=f"phase({m})")


def mode_swap(a: Mode | str, b: Mode | str) -> LinearTransform:
    a, b = mode(a), mode(b)
    return LinearTransform((a, b), (a, b), np.array([[0, 1], [1, 0]]), name=f"swap({a},{b})")


def lossy_channel(m: Mode | str, mu: complex, ancilla: Mode | str) -> LinearTransform:
    """Beam-splitter loss: a^dag -> mu a^dag + sqrt(1-|mu|^2) b^dag on ancilla ``b``.

    The 2x2 block is completed to a unitary so the ancilla mode is a genuine
    loss port; trace it out afterwards.
    """
    m, anc = mode(m), mode(ancilla)
    if m == anc:
        raise ModeError("ancilla must differ from the channel mode")
    mu = complex(mu)
    if abs(mu) > 1 + 1e-15:
        raise ValueError(f"|mu| = {abs(mu)} > 1")
    t = math.sqrt(max(0.0, 1 - abs(mu) ** 2))
    u = np.array([[mu, -t], [t, mu.conjugate()]])
    return LinearTransform((m, anc), (m, anc), u, name=f"loss({m})")


def compose(t2: LinearTransform, t1: LinearTransform) -> LinearTransform:
    """The transform equal to applying ``t1`` then ``t2``."""
    # extend both to act on a common mode set, identity elsewhere
    mid = list(t1.outputs) + [m for m in t2.inputs if m not in t1.outputs]
    ins = list(t1.inputs) + [m for m in mid if m not in t1.outputs and m not in t1.inputs]
    if set(t1.inputs) & (set(mid) - set(t1.outputs)):
        raise ModeError("cannot compose: passthrough mode collides with t1 input")
    a = np.zeros((len(mid), len(ins)), dtype=complex)
    a[: len(t1.outputs), : len(t1.inputs)] = t1.matrix
    for m in mid[len(t1.outputs):]:
        a[mid.index(m), ins.index(m)] = 1
    outs = list(t2.outputs) + [m for m in mid if m not in t2.inputs]
    b = np.zeros((len(outs), len(mid)), dtype=complex)
    for j, m in enumerate(mid):
        if m in t2.inputs:
            b[: len(t2.outputs), j] = t2.matrix[:, t2.inputs.index(m)]
        else:
            b[outs.index(m), j] = 1
    if len(set(outs)) != len(outs):
        raise ModeError("cannot compose: output modes collide")
    return LinearTransform(tuple(ins), tuple(outs), b @ a,
                           unitary=t1.unitary and t2.unitary and len(ins) == len(outs),
                           name=f"{t2.name}*{t1.name}")


@lru_cache(maxsize=4096)
def _expand_occupation(key: tuple[int, ...], cols: tuple[tuple[complex, ...], ...]):
    """Expand prod_j (sum_i U_ij b_i^dag)^{n_j} / sqrt(n_j!) |0> into Fock amplitudes.

    Returns a dict output-occupation -> amplitude.
    """
    n_out = len(cols[0]) if cols else 0
    poly: dict[tuple[int, ...], complex] = {(0,) * n_out: 1.0 + 0j}
    norm = 1.0
    for n_j, col in zip(key, cols):
        nz = [(i, c) for i, c in enumerate(col) if c != 0]
        for _ in range(n_j):
            nxt: dict[tuple[int, ...], complex] = defaultdict(complex)
            for mono, coef in poly.items():
                for i, c in nz:
                    mm = list(mono)
                    mm[i] += 1
                    nxt[tuple(mm)] += coef * c
            poly = nxt
        norm *= math.factorial(n_j)
    scale = 1 / math.sqrt(norm)
    out = {}
    for mono, coef in poly.items():
        f = 1.0
        for k in mono:
            f *= math.factorial(k)
        out[mono] = coef * math.sqrt(f) * scale
    return out


def apply(t: LinearTransform, s: PureState, n_max: int | None = None) -> PureState:
    """Apply ``t`` to ``s``; input modes absent from ``s`` are treated as vacuum.

    Result modes are the untouched modes of ``s`` plus ``t.outputs``.
    """
    s = s.with_modes(t.inputs)
    passthrough = [m for m in s.modes if m not in t.inputs]
    if set(passthrough) & set(t.outputs):
        raise ModeError("transform output collides with an untouched mode of the state")
    in_idx = [s.modes.index(m) for m in t.inputs]
    pass_idx = [s.modes.index(m) for m in passthrough]
    cols = tuple(tuple(complex(x) for x in t.matrix[:, j]) for j in range(len(t.inputs)))
    out: dict[tuple[int, ...], complex] = defaultdict(complex)
    for key, amp in s.terms.items():
        rest = tuple(key[i] for i in pass_idx)
        sub = tuple(key[i] for i in in_idx)
        for okey, oamp in _expand_occupation(sub, cols).items():
            out[rest + okey] += amp * oamp
    res = PureState(tuple(passthrough) + t.outputs, out, s.dropped_weight)
    return res.truncate(n_max)


def apply_all(transforms: Sequence[LinearTransform], s: PureState, n_max: int | None = None) -> PureState:
    for t in transforms:
        s = apply(t, s, n_max)
    return s


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / abs(d))

