"""Cartan development of flat Lie-algebra valued 1-forms on matrix groups."""
from .lie_core import (Ad, AlgebraElement, GroupElement, LieError, MatrixLieGroup,
                       ad, bracket, compose, dexpinv, exp, group, invert,
                       kappa_left, kappa_right, log_derivative_sampled)
from .forms import (Domain, GFunction, GMap, OneForm, evaluate, exterior_derivative,
                    is_flat, leibniz_check, linearized_mc_residual, mc_residual,
                    pullback_form, wedge_bracket)
from .evolution import (AlgebraCurve, DevelopedMap, EvolConfig, PathCurve,
                        connection_omega, develop, develop_path, evol_left,
                        evol_right, holonomy, naturality_check, reparam_rhs)
from .flat_group import (ClosedOneForm, certify_closed, flat_bracket, poincare_inverse,
                         reconstruct_h, star, star_inverse, variation_form)
from .tangent_semidirect import (SemidirectAlgebra, SemidirectElement, evol_sd, sd_Ad,
                                 sd_bracket, sd_exp, sd_invert, sd_multiply,
                                 tangent_develop, tangent_evol)

__version__ = "0.1.0"
