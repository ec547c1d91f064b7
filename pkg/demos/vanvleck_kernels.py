"""
Classical orbits, Maslov phases and the Van Vleck kernel
========================================================

The semiclassical kernel sums over the classical orbits that leave ``y``
and arrive at ``x`` after time ``t``.  Each orbit contributes its action,
the Jacobian ``|det dq_t/dp|^{-1}`` and a phase ``-pi m / 2`` where ``m``
counts the focal points passed on the way.  For quadratic Hamiltonians
the formula is exact.
"""

import numpy as np

from agprop import HarmonicOscillator, QuarticAnharmonic, find_branches, vanvleck_kernel
from agprop.errors import CausticAtRootError
from agprop.reference import mehler_kernel

hbar = 0.1
osc = HarmonicOscillator(1.0)
x, y = 0.3, -0.2

# the Maslov index steps up by one each time the orbit passes a focal time t = k pi
print("   t     m   |VV - Mehler| / |Mehler|")
for t in (np.pi / 4, 2.0, 3 * np.pi / 2, 5.0, 5 * np.pi / 2):
    (b,) = find_branches(osc, [y], [x], 0.0, t)
    k = vanvleck_kernel([x], [y], 0.0, t, hbar, [b])
    ref = mehler_kernel(x, y, t, hbar)
    print(f"{t:6.3f}  {b.m_r}   {abs(k - ref) / abs(ref):.1e}")

# in two isotropic dimensions both directions focus at once
(b,) = find_branches(HarmonicOscillator(1.0, dim=2), [0.3, -0.2], [0.1, 0.5], 0.0, 3 * np.pi / 2)
print("\nisotropic d = 2 at t = 3 pi / 2: m =", b.m_r)

# exactly at a focal time the endpoints are joined by a whole family of orbits
try:
    find_branches(osc, [0.0], [0.0], 0.0, np.pi)
except CausticAtRootError as exc:
    print("at t = pi:", type(exc).__name__)

# an anharmonic potential has several orbits with distinct indices
branches = find_branches(QuarticAnharmonic(1.0, 0.1), [0.2], [0.5], 0.0, 2.0, search_box=4.0)
print("\nquartic, y = 0.2, x = 0.5, t = 2")
print("  p_r        S_r        amp_det    m")
for b in branches:
    print(f"  {b.p_r[0]:+.5f}  {b.S_r:+.5f}  {b.amp_det:.5f}  {b.m_r}")
