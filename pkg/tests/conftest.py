import numpy as np
import pytest

from coneflow import builtin_chem, continue_curve
from coneflow.lyapunov import LyapunovEvaluator


def closed_form_level_coord(h: float) -> float:
    """Mass-action equilibrium coordinate a(h) for unit rates.

    At equilibrium x1 = x2 = a and x3 = a^2, so the conserved quantity is
    2a + 2a^2 = h; the positive root is a = (-1 + sqrt(1 + 2h)) / 2.
    """
    return 0.5 * (np.sqrt(1.0 + 2.0 * h) - 1.0)


def closed_form_equilibrium(h: float) -> np.ndarray:
    a = closed_form_level_coord(h)
    return np.array([a, a, a * a])


@pytest.fixture(scope="session")
def chem():
    return builtin_chem()


@pytest.fixture(scope="session")
def chem_curve(chem):
    """Coarse branch over [0, 10] used by ordering and structure tests."""
    return continue_curve(chem, np.round(np.arange(0.0, 10.05, 0.1), 10),
                          multistart=4, seed=0)


@pytest.fixture(scope="session")
def chem_evaluator(chem):
    curve = continue_curve(chem, np.round(np.arange(0.0, 5.15, 0.05), 10),
                           multistart=0, seed=0)
    return LyapunovEvaluator(chem, curve)
