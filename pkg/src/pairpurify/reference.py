"""Closed-form coincidence statistics, kept independent of the simulator.

Each function takes the pair amplitudes (and for the down-conversion source
``gamma`` and ``g``) and returns the probabilities of one coincidence
combination together with the weights of the output mixture. Expressions are
written out term by term, without simplification, so a transcription slip
shows up as disagreement with :mod:`pairpurify.protocol`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "IdealFormulas",
    "PdcFormulas",
    "ideal_conventional",
    "ideal_single",
    "pdc_conventional",
    "pdc_single_photon",
    "g_factor",
]


@dataclass(frozen=True)
class IdealFormulas:
    P: float
    P_s: float
    P_e: float
    weights: tuple[float, float]    # (|Phi+>, |0>_6 |1>_2V), normalized

    @property
    def fidelity(self) -> float:
        return self.weights[0]


@dataclass(frozen=True)
class PdcFormulas:
    P: float
    P_s: float
    P_e0: float
    P_e1: float
    C: float
    # (|Phi+>, vacuum, |0>_6|1>_2V, |1>_6V|0>_2), normalized by C
    weights: tuple[float, float, float, float]
    P_e0_no_veto: float
    P_e0_min: float
    P_e1_min: float
    P_e0_no_veto_min: float

    @property
    def P_e(self) -> float:
        return self.P_e0 + self.P_e1


def _ratio(parts, norm):
    # no coincidences at all: the conditional mixture is undefined
    return tuple(x / norm if norm else math.nan for x in parts)


def g_factor(alpha, beta, gamma: float) -> float:
    return (1 - gamma ** 2 * abs(alpha) ** 2) * (1 - gamma ** 2 * abs(beta) ** 2)


def ideal_conventional(alpha, beta, eta: float) -> IdealFormulas:
    a2, b2 = abs(alpha) ** 2, abs(beta) ** 2
    P = eta ** 2 * b2 * (2 * a2 + (2 - eta) * b2) / 4
    P_s = eta ** 2 * a2 * b2 / 2
    P_e = eta ** 2 * (2 - eta) * b2 ** 2 / 4
    norm = 1 - eta / 2 * b2
    return IdealFormulas(P, P_s, P_e, _ratio((a2, (1 - eta / 2) * b2), norm))


def ideal_single(alpha, beta, eta: float) -> IdealFormulas:
    a2, b2 = abs(alpha) ** 2, abs(beta) ** 2
    P = eta ** 2 * b2 * (a2 + (1 - eta) * b2) / 2
    P_s = eta ** 2 * a2 * b2 / 2
    P_e = eta ** 2 * (1 - eta) * b2 ** 2 / 2
    norm = 1 - eta * b2
    return IdealFormulas(P, P_s, P_e, _ratio((a2, (1 - eta) * b2), norm))


def pdc_conventional(alpha, beta, eta: float, gamma: float, g: float | None = None) -> PdcFormulas:
    a2, b2 = abs(alpha) ** 2, abs(beta) ** 2
    g = g_factor(alpha, beta, gamma) if g is None else g
    y2 = gamma ** 2
    C = 4 + 4 * (4 - eta) * y2 * a2 + (24 - 28 * eta + 9 * eta ** 2) * y2 * b2
    P = eta ** 2 * g ** 2 * y2 * b2 * C / 16
    P_s = eta ** 2 * g ** 2 * y2 ** 2 * a2 * b2 / 2
    P_e0 = eta ** 2 * g ** 2 * y2 * b2 * (4 + (4 - 3 * eta) ** 2 * y2 * b2) / 16
    P_e1 = eta ** 2 * (2 - eta) * g ** 2 * y2 ** 2 * b2 / 4
    weights = (8 * y2 * a2 / C,
               (4 + (4 - 3 * eta) ** 2 * y2 * b2) / C,
               4 * (2 - eta) * y2 * b2 / C,
               4 * (2 - eta) * y2 * a2 / C)
    return PdcFormulas(
        P, P_s, P_e0, P_e1, C, weights,
        P_e0_no_veto=eta ** 2 * g ** 2 * y2 * b2 * (4 + (4 - eta) ** 2 * y2 * b2) / 16,
        P_e0_min=g ** 2 * y2 * b2 * (4 + y2 * b2) / 16,
        P_e1_min=g ** 2 * y2 ** 2 * b2 / 4,
        P_e0_no_veto_min=g ** 2 * y2 * b2 * (4 + 9 * y2 * b2) / 16,
    )


def pdc_single_photon(alpha, beta, eta: float, gamma: float, g: float | None = None) -> PdcFormulas:
    a2, b2 = abs(alpha) ** 2, abs(beta) ** 2
    g = g_factor(alpha, beta, gamma) if g is None else g
    y2 = gamma ** 2
    C = 1 + 2 * (2 - eta) * y2 * a2 + 2 * (3 - 2 * eta) * (1 - eta) * y2 * b2
    P = eta ** 2 * g ** 2 * y2 * b2 * C / 4
    P_s = eta ** 2 * g ** 2 * y2 ** 2 * a2 * b2 / 2
    P_e0 = eta ** 2 * g ** 2 * y2 * b2 * (1 + 4 * (1 - eta) ** 2 * y2 * b2) / 4
    P_e1 = eta ** 2 * (1 - eta) * g ** 2 * y2 ** 2 * b2 / 2
    weights = (2 * y2 * a2 / C,
               (1 + 4 * (1 - eta) ** 2 * y2 * b2) / C,
               2 * (1 - eta) * y2 * b2 / C,
               2 * (1 - eta) * y2 * a2 / C)
    return PdcFormulas(
        P, P_s, P_e0, P_e1, C, weights,
        P_e0_no_veto=eta ** 2 * g ** 2 * y2 * b2 * (1 + (2 - eta) ** 2 * y2 * b2) / 4,
        P_e0_min=g ** 2 * y2 * b2 / 4,
        P_e1_min=0.0,
        P_e0_no_veto_min=g ** 2 * y2 * b2 * (1 + y2 * b2) / 4,
    )
