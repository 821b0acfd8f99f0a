"""Branching Brownian motion with measure-driven branching.

A simulator plus deterministic Feynman-Kac numerics for branching Brownian
particle systems whose splitting clocks are driven by a compactly supported
Kato-class measure, with estimators for the extreme-value limit laws of the
maximal displacement.
"""

from .measures import (Atoms, BranchingModel, Density, KatoMeasure, PathSegment,
                       SphereShell, additive_increment, is_kato_and_compact)
from .kernels import (FreeKernels, VolterraSolution, fk_expectation_tail,
                      resolvent_asymptotic_check, solve_volterra)
from .spectral import (SpectralData, SubcriticalModelError, eigen_residual_report,
                       principal_eigenvalue, principal_eigenvalue_shell)
from .fronts import (CorrectionSpec, FrontSpec, LimitConstants, constants, eta,
                     predicted_tail)
from .simulator import (EnsembleResult, Observables, ParticleSystem, run_ensemble,
                        run_replicate, second_moment_oracle, many_to_one_oracle,
                        martingale_moments_oracle, step)
from .stats import (GumbelMixtureFit, TailEstimate, estimate_tail, gumbel_mixture_test,
                    speed_and_centring_fit, wilson_interval, yaglom_front_count)
from .experiment import ExperimentConfig, analyze, run_experiment
from .rng import RngStream

__version__ = "0.1.0"
