"""
Gaussian packets carried by the characteristic flow
===================================================

A coherent state launched at ``(q, p)`` stays Gaussian under a quadratic
Hamiltonian.  Its center follows the classical orbit, its width and chirp
are encoded by the complex symmetric matrix ``Z = B A^{-1}``, and its
amplitude follows the tracked branch of ``det(A)^{-1/2}``.  Here the packet
is compared against a split-step Fourier solution of the Schroedinger
equation, and its closed-form observables are read off.
"""

import numpy as np

from agprop import (AnisotropicPacket, Grid, HarmonicOscillator, PhasePoint, QuarticAnharmonic,
                    coherent_state, integrate_characteristics, observables, packet_eval)
from agprop.reference import SplitStepConfig, l2_distance, split_step_solve

hbar = 0.1
x0 = PhasePoint([1.0], [0.0])

# integrate the characteristic system over one period of the oscillator
model = HarmonicOscillator(1.0)
times = np.linspace(0, 2 * np.pi, 9)[1:]
traj = integrate_characteristics(model, x0, 0.0, 2 * np.pi, output_times=times)

# the amplitude picks up the half-angle phase exp(-i t / 2); at t = pi it is -i, not +i
half = integrate_characteristics(model, x0, 0.0, np.pi).final
print("a(pi) =", np.round(np.exp(-0.5 * half.log_det_A), 12))

# the spectral reference solves the same problem on a periodic grid
grid = Grid(-4, 4, 1024)
cfg = SplitStepConfig.from_model(model, grid, 1e-4, hbar)
reference = split_step_solve(cfg, coherent_state(grid, x0.q, x0.p, hbar), 0.0, times)

print("\n   t      L2(packet - split-step)")
for state, ref in zip(traj.states[1:], reference):
    pk = AnisotropicPacket.from_state(state, x0, hbar)
    print(f"{state.t:6.3f}   {l2_distance(packet_eval(grid, pk), ref):.2e}")

# beyond quadratic potentials the packet is only asymptotic, but its
# observables still come in closed form
quartic = QuarticAnharmonic(1.0, 0.1)
s = integrate_characteristics(quartic, x0, 0.0, 1.5).final
ob = observables(AnisotropicPacket.from_state(s, x0, hbar))
print("\nquartic packet at t = 1.5")
print("  <q>, <p>       :", ob.mean_q, ob.mean_p)
print("  dq dp / (hbar/2):", ob.uncertainty_products() / (hbar / 2))
