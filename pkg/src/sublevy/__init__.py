"""Worst-case expectations for jump diffusions with coefficient uncertainty.

Layers: symbol/measure algebra (levy), pointwise generators (generator),
monotone explicit schemes (hjb), Monte-Carlo and dynamic programming
(simulate), spectral/closed-form references (oracle), and a problem-file CLI.
"""

from .generator import (TestFunction, apply_generator, apply_generator_grid,
                        apply_sup_generator, combine, cosine, gaussian_bump,
                        inverse_quadratic, mollifier, quadratic, sine)
from .grids import Field, Grid, GridError
from .hjb import SchemeConfig, SchemeError, cfl_dt, grid_generator_values, solve, step_explicit
from .levy import (Atoms, CoefficientField, Density, EffectiveTriplet,
                   LevyTriplet, StableLike, StableRay, TightnessReport,
                   TruncationSpec, UncertaintySet, ValidationError,
                   ball_probes, bound_M_r, effective_triplet, levy_mass,
                   sde_pushforward, symbol_decay_check, symbol_eval,
                   symbol_sup_bound, symbol_values, tightness_report,
                   truncation_bound_constant)
from .oracle import OracleError, fft_semigroup, gheat_closed_form
from .problem import MODES, ProblemError, ProblemSpec, parse_problem, to_text
from .quadrature import QuadConfig, QuadratureError, composite, refined
from .report import RunReport, write_field_csv, write_report_json, write_table_csv
from .simulate import (EmpiricalEstimate, IncrementSampler, SimConfig,
                       SimulationError, Z_99, block_rng, constant_c,
                       dp_sup_semigroup, dynkin_residual,
                       estimate_semigroup_single, maximal_inequality_check,
                       sample_increment, wilson_upper)

__version__ = "0.1.0"
