"""Anisotropic Gaussian semiclassical propagation.

Characteristic flows of Gaussian wave packets, the phase-space quadrature
propagator built from them, Van Vleck kernels from classical shooting, and
independent spectral references to check all of the above.
"""

__version__ = "0.1.0"

from .errors import (AgpropError, BudgetExceededError, CausticAtRootError, CausticProximityError,
                     ConfigError, DomainCoverageError, GridMismatchError, ModelEvaluationError,
                     NoBranchFoundError, NotUnitaryError, NumericalError, SiegelViolationError,
                     StabilityGuardError, StepSizeUnderflow, UnresolvedCrossingError)
from .model import (DrivenOscillator, FreeParticle, HamiltonianModel, HarmonicOscillator,
                    PhasePoint, QuarticAnharmonic, evaluate, finite_difference_audit, make_model)
from .flow import (CharacteristicState, Trajectory, amplitude, anisotropy, characteristic_rhs,
                   integrate_batch, integrate_characteristics, monodromy)
from .packet import (AnisotropicPacket, Grid, GridFunction, coherent_state, observables, overlap,
                     packet_eval)
from .invariants import (gauge_orbit_check, random_special_unitary, relation_residuals,
                         square_root_correspondence)
from .propagator import (FlowCache, PhaseSpaceQuadrature, build_quadrature, cutoff,
                         kernel_quadrature, propagate_state, write_kernel_csv)
from .vanvleck import VanVleckBranch, find_branches, maslov_index, shoot_branch, vanvleck_kernel
from .reference import (SplitStepConfig, free_gaussian_exact, free_kernel, l2_distance,
                        mehler_kernel, residual_norm, split_step_solve)
