"""Exact simulation of two-pair polarization entanglement purification with linear optics."""
from .fockspace import Mode, MixedEnsemble, Pol, PureState, bell_state, fidelity_to_bell, mode
from .sources import PairSpec, PdcSpec
from .detection import DetectorKind, DetectorModel
from .protocol import RunConfig, RunStatistics, run, run_mixture, postselect, dark_count_budget
from .channels import (ChannelSample, FluctuationProcess, transmit, f_factors, purifiability,
                       compensate, procrustean, fiber_scenario)

__version__ = "0.1.0"

__all__ = [
    "Mode", "MixedEnsemble", "Pol", "PureState", "bell_state", "fidelity_to_bell", "mode",
    "PairSpec", "PdcSpec", "DetectorKind", "DetectorModel",
    "RunConfig", "RunStatistics", "run", "run_mixture", "postselect", "dark_count_budget",
    "ChannelSample", "FluctuationProcess", "transmit", "f_factors", "purifiability",
    "compensate", "procrustean", "fiber_scenario",
]
