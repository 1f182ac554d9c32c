"""Desk-scale numerical laboratory for parabolic harmonic analysis.

Anisotropic space-time metrics and their ellipsoids, generalized Morrey /
bounded-mean-oscillation norms, singular integral operators with their
commutators and half-space reflected counterparts, a Cauchy-Dirichlet
finite-difference solver, and a reproducible experiment harness.
"""

__version__ = "0.1.0"

from .geometry import (Region, SpaceTimePoint, SphereRule, QuadratureGrid,
                       build_grid, generalized_reflection, reflection_row,
                       rho, sphere_rule, varrho)
from .coefficients import CoefficientField, identity_coefficients
from .fields import DerivativeBundle, ScalarField, bump_field, default_battery
from .norms import (NormReport, SupSampler, bmo_norm, lp_norm, mean_integral,
                    mean_oscillation, morrey_norm, sobolev_morrey_norm,
                    vmo_modulus, weak_l1_norm, weak_morrey_norm)
from .weights import (WeightFunction, check_condition_A, check_condition_B,
                      hardy_constant, hardy_transform, power_weight)
from .kernels import Kernel, KernelJet, czk_audit, gaussian_jet
from .operators import (PVConfig, PVResult, commutator_apply,
                        comparability_audit, dominating_potential,
                        reflected_apply, reflected_commutator, singular_apply)
from .solver import (ProblemInstance, SolveResult, apriori_ratio,
                     boundary_correction, make_manufactured,
                     representation_audit, solve_cdp)
