"""Covariance-adaptive slice samplers with a correlation-length benchmark harness."""

from .diagnostics import DegenerateSeriesError, FigureOfMerit, ar1_tau, chain_tau, figures_of_merit
from .harness import (
    ExperimentSpec,
    ResultRow,
    default_tunings,
    emit_plot_script,
    parse_spec_file,
    read_csv,
    run_experiment,
    write_csv,
)
from .linalg import (
    DegenerateDirectionError,
    InvalidInputError,
    OrthonormalColumns,
    TriangularFactor,
    append_orthonormal_column,
    chud,
    project_orthogonal,
    solve_upper,
    solve_upper_transpose,
)
from .samplers import (
    COVARIANCE_MATCHING,
    METHOD_NAMES,
    METROPOLIS_TRIALS,
    NONADAPTIVE_CRUMB,
    SHRINKING_RANK,
    ChainResult,
    MaxCrumbsExceeded,
    NotAPeakError,
    SamplerConfig,
    StepStats,
    cm_step,
    conditional_variance,
    crumb_precision_update,
    draw_slice_level,
    fit_kappa,
    metropolis_trials_run,
    na_step,
    parabola_peak,
    run_chain,
    sr_step,
)
from .targets import (
    TARGET_NAMES,
    Target,
    make_eight_schools,
    make_equicorrelated_gaussian,
    make_gaussian_mixture,
    make_target,
)

__version__ = "0.1.0"
