"""Numerical laboratory for non-local Feynman-Kac semigroups on finite
state spaces: reversible jump models, path sampling, perturbed semigroups,
L^p decay rates, and Kato-class certification.
"""

__version__ = "0.1.0"

from .chain import (ReversibleModel, StateSpace, alpha_subprocess, build_model,
                    dirichlet_energy, generator, green_density, model_from_json,
                    model_to_json, resolvent, tilt_model, transition_semigroup)
from .errors import (DetailedBalanceViolation, EigenFailure,
                     InterpolationBracketViolation, NotApplicable,
                     NotIrreducible, NotTransient, PowerIterationDivergence,
                     SingularOperator, WindowViolation)
from .feynman_kac import (PerturbedOperator, fk_apply_exact, fk_apply_mc,
                          fk_generator, girsanov_mc_check, reduce_via_girsanov)
from .measures import JumpFunction, Perturbation, SmoothMeasure
from .paths import (PathSample, PathSampler, continuous_af, energy_measure,
                    girsanov_weight, girsanov_weight_product, jump_af,
                    martingale_part, nu_domination_gap, nu_measure, sample_path,
                    zero_energy_af)
from .spectral import (SpectralReport, independence_verdict, lambda2_eigen,
                       lambda2_variational, lambda_p_fit, lambda_p_fixed,
                       lp_norm, log_lp_norm)
from .kato import (KatoCertificate, jclass_density, k1_beta, kato_modulus,
                   kinf_check, stable_kato_criterion, stollmann_voigt_check)
from .lattice import (DiffusionChainSpec, StableLatticeSpec,
                      build_diffusion_chain, build_F_gamma, build_stable_lattice,
                      build_u_bump, cauchy_kernel, estimate_window,
                      green1_bound_check, heat_kernel_estimate_check)

__all__ = [name for name in dir() if not name.startswith("_")]
