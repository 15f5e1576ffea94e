"""Small shared oracles for the protocol and acceptance tests."""
import math

from pairpurify.fockspace import PureState, bell_state, modes_of

OUT = modes_of("6", "2")


def ket62(occ: dict) -> PureState:
    return PureState.from_occupations([(occ, 1.0)], modes=OUT)


ERROR_STATES = {
    "vac": ket62({}),
    "2V": ket62({"2V": 1}),
    "6V": ket62({"6V": 1}),
}


def ideal_weights(stats, combo=("H", "H")):
    """(Phi+, |0>_6|1>_2V) populations of one combination's output."""
    c = stats.combinations[combo].conditional
    return c.population(bell_state("+", "6", "2")), c.population(ERROR_STATES["2V"])


def pdc_weights(stats, combo=("H", "H")):
    """(Phi+, vacuum, |0>_6|1>_2V, |1>_6V|0>_2) populations."""
    c = stats.combinations[combo].conditional
    return (c.population(bell_state("+", "6", "2")), c.population(ERROR_STATES["vac"]),
            c.population(ERROR_STATES["2V"]), c.population(ERROR_STATES["6V"]))


R = 1 / math.sqrt(2)
