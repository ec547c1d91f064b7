import numpy as np
import pytest

from agprop import FreeParticle, HarmonicOscillator, QuarticAnharmonic, DrivenOscillator
from agprop.packet import Grid


BUILTINS = {
    "free": lambda: FreeParticle(),
    "harmonic": lambda: HarmonicOscillator(1.0),
    "quartic": lambda: QuarticAnharmonic(1.0, 0.1),
    "driven": lambda: DrivenOscillator(),
}


@pytest.fixture(params=sorted(BUILTINS))
def builtin_model(request):
    return BUILTINS[request.param]()


def box_around(centers, hbar, n, n_sigma=12.0, widths=None):
    """Grid covering every center by n_sigma widths (default width sqrt(hbar/2))."""
    c = np.atleast_1d(np.asarray(centers, float))
    w = np.sqrt(hbar / 2) if widths is None else np.max(widths)
    return Grid(float(c.min() - n_sigma * w), float(c.max() + n_sigma * w), n)
