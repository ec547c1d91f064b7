"""
Structure preserved by the variational flow
===========================================

The pair ``(A, B)`` solving the linearized flow keeps the Lagrangian and
Poisson relations that make ``Z = B A^{-1}`` a point of the Siegel upper
half space.  The same ``Z`` and amplitude arise from ``(A U, B U)`` for any
special unitary ``U``.  Both facts are checked numerically along an
anharmonic orbit.
"""

import numpy as np

from agprop import (PhasePoint, QuarticAnharmonic, gauge_orbit_check, integrate_characteristics,
                    random_special_unitary, relation_residuals)
from agprop.invariants import RelationReport

model = QuarticAnharmonic(1.0, 0.1, dim=2)
x0 = PhasePoint([1.0, -0.3], [0.2, 0.6])
traj = integrate_characteristics(model, x0, 0.0, 6.0, output_times=np.linspace(0, 6, 7),
                                 tolerance=1e-12)

print("   t    worst relation   min eig Im Z")
for s in traj.states:
    rep = relation_residuals(s.A, s.B)
    rel = rep.relative()
    worst = max(rel[k] for k in RelationReport.RELATIONS)
    print(f"{s.t:5.2f}   {worst:.1e}          {rep.siegel_pos:.4f}")

# gauge freedom: rotating the frame by U in SU(2) changes neither Z nor a
final = traj.final
dz, da = zip(*(gauge_orbit_check(final.A, final.B, random_special_unitary(2, k), final.log_det_A)
               for k in range(100)))
print(f"\n100 random U: max |dZ| = {max(dz):.1e}, max |da| = {max(da):.1e}")
