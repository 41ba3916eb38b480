"""ldpkit: free energies, conjugates, and rate-function checks on the line.

The package estimates scaled log-moment (free-energy) functions along nets
of finite-support sub-probability measures, computes classical and abstract
Legendre-Fenchel conjugates on grids, builds empirical local rate functions,
and mechanically checks the derivative-range conditions under which a vague
or narrow large deviation principle holds.
"""

from .conjugate import (
    FamilyEvaluation,
    abstract_lf,
    evaluate_family,
    linear_restriction_conjugate,
    stable_abstract_lf,
)
from .convex import (
    DerivativeRange,
    GridFunction,
    brute_force_conjugate,
    convex_lsc_hull,
    conv_lemma_check,
    derivative_range,
    effective_domain,
    essential_smoothness_check,
    inf_over_open,
    interior_effective_domain,
    lf_transform,
    load_grid_csv,
    one_sided_derivatives,
    save_grid_csv,
)
from .free_energy import (
    L_grid,
    LimitEstimate,
    WindowSpec,
    lambda_family_table,
    lambda_of,
    window_for_t_range,
)
from .measures import (
    FiniteSupportMeasure,
    RegionSet,
    ScaledMeasureNet,
    bernoulli_half_base,
    coin_example_net,
    demzei_example_net,
    exp_power_integral,
    iid_mean_example_net,
    load_measure,
    region_power_mass,
    save_measure,
    tail_condition_check,
)
from .scenario import Scenario, load_scenario
from .pipeline import run_free_energy, run_scenario
from .tilts import (
    TiltFamily,
    TiltFunction,
    explicit_family,
    family_union,
    linear_family,
    q_bump_tilt,
    qn_family,
    two_slope_family,
)
from .verifier import (
    ConditionReport,
    RangeTargets,
    RateFunctionEstimate,
    derivative_bound_check,
    derivative_bound_scan,
    exponential_tightness_check,
    ldp_bounds_check,
    local_rate,
    range_condition_check,
    rate_comparison,
    rate_grid,
    sandwich_check,
    vague_ldp_check,
    varadhan_identity_check,
)

__version__ = "0.1.0"
