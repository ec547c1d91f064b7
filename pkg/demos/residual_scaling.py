"""
How good is a single packet?
============================

For an anharmonic potential the Gaussian ansatz leaves a residual
``(i hbar d/dt - H) G``.  Only the cubic and higher Taylor terms of the
potential around the packet center contribute, and a packet of width
``sqrt(hbar)`` sees them with weight ``hbar^{3/2}``.  The sweep below
measures the residual norm and fits the exponent.
"""

import numpy as np

from agprop import FreeParticle, Grid, HarmonicOscillator, PhasePoint, QuarticAnharmonic
from agprop import integrate_characteristics
from agprop.reference import residual_norm

x0 = PhasePoint([1.0], [0.0])
t = 0.5


def residual(model, hbar):
    s = integrate_characteristics(model, x0, 0.0, t, tolerance=1e-12).final
    w = 12 * np.sqrt(hbar)
    return residual_norm(model, s, x0, hbar, Grid(s.q[0] - w, s.q[0] + w, 1024))


# quadratic models are solved exactly, so their residual is rounding noise
for model in (FreeParticle(), HarmonicOscillator(1.0)):
    print(f"{type(model).__name__:20s} residual {residual(model, 0.1):.1e}")

hbars = np.array([0.4, 0.2, 0.1, 0.05])
res = np.array([residual(QuarticAnharmonic(1.0, 0.1), hb) for hb in hbars])
print("\n hbar    residual    residual / hbar^1.5")
for hb, r in zip(hbars, res):
    print(f"{hb:5.2f}   {r:.3e}   {r / hb**1.5:.4f}")
print("\nfitted log-log slope:", round(np.polyfit(np.log(hbars), np.log(res), 1)[0], 4))
