"""Hawkes-driven birth-death population model: simulation and analysis."""

from .core import (
    AdmissibilityReport,
    DegenerateParametersError,
    Event,
    EventLog,
    ExpKernel,
    GeneralKernel,
    IntensityState,
    KernelBank,
    Mark,
    UnsupportedKernelError,
    apply_jump,
    bank_from_json,
    bank_to_json,
    intensities_at,
    is_markov_admissible,
    kernel_eval,
    l1_norm,
    propagate,
    shot_noise_from_history,
)
from .expectations import (
    ABCCoefficients,
    ExpectationCurve,
    NoStationaryRateError,
    NumericFailureError,
    RegimeKind,
    RegimeReport,
    Stability,
    abc_coefficients,
    asymptotic_rates,
    classify_regime,
    critical_fitness,
    expectation_curve,
    expected_count,
    expected_intensity_paper,
    expected_intensity_renewal,
    stability_check,
    univariate_remark_intensity,
)
from .experiments import (
    DriftCheck,
    GofEntry,
    MCReport,
    RhoReport,
    SweepResult,
    generator_apply,
    generator_drift_check,
    gof_report,
    mc_mean_intensity,
    phase_transition_sweep,
    rho_convergence_check,
    zero_occupation_fraction,
)
from .population import (
    FitnessPartition,
    PopulationPath,
    Provenance,
    RemovedSite,
    SiteSample,
    apply_population_event,
    empirical_site_cdf,
    left_right_counts,
    rho_limit,
    simulate_epsilon_chain,
    simulate_population,
    theoretical_site_cdf,
)
from .simulate import (
    SimConfig,
    SimPath,
    rng_for,
    sample_mark,
    simulate,
    simulate_markov,
    simulate_thinning_general,
    time_rescale_residuals,
)

__version__ = "0.1.0"
