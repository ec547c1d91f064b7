"""
Quadrature propagator against the Van Vleck formula
===================================================

For an anharmonic potential neither kernel is exact, but both describe the
same leading-order semiclassics.  Their relative deviation on a small panel
of endpoints should shrink as ``hbar`` decreases.  Only orbits starting
inside the plateau of the phase-space cutoff are compared, since the
quadrature has no support beyond it.
"""

from agprop import QuarticAnharmonic, build_quadrature, find_branches, kernel_quadrature
from agprop import vanvleck_kernel

model, t = QuarticAnharmonic(1.0, 0.1), 0.8
xs, ys = [0.2, 0.6], [-0.3, 0.0, 0.3]
rho, width = 4.0, 1.0

branches = {}
for i, x in enumerate(xs):
    for j, y in enumerate(ys):
        found = find_branches(model, [y], [x], 0.0, t, search_box=6.0, n_starts=16,
                              cutoff_params=(rho, width))
        branches[i, j] = [b for b in found if b.in_plateau]

print(" hbar   nodes   max relative deviation")
for hbar in (0.2, 0.1, 0.05):
    quad = build_quadrature(rho, width, hbar, 0.5)
    K = kernel_quadrature(model, xs, ys, 0.0, t, quad)
    dev = 0.0
    for (i, j), br in branches.items():
        V = vanvleck_kernel([xs[i]], [ys[j]], 0.0, t, hbar, br)
        dev = max(dev, abs(K[i, j] - V) / abs(V))
    print(f"{hbar:5.2f}  {quad.node_count:6d}   {dev:.3e}")
