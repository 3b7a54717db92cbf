"""Nonparametric heteroscedasticity tests for high-frequency prices.

Plain, jump-robust (truncated) and noise-robust (pre-averaged) variants
of a spot-versus-integrated-volatility test, a path simulator, a seeded
Monte Carlo harness and a tick-data pipeline.
"""

from .errors import (
    BlockIndexError,
    ConfigurationError,
    DataError,
    DegenerateDataError,
    HfhetError,
    ParameterError,
)
from .estimators import (
    DerivedWindows,
    TuningParams,
    bipower_variation,
    preavg_increments,
    preavg_iv,
    preavg_params,
    preavg_spot,
    preavg_weights,
    realized_volatility,
    refined_threshold,
    spot_volatility,
    truncated_rv,
    truncated_spot,
    truncation_threshold,
    window_kn,
)
from .het import (
    TestOutcome,
    VARIANTS,
    decision,
    run_test,
    spot_profile,
    test_continuous,
    test_preaveraged,
    test_truncated,
    variation_functional,
)
from .montecarlo import (
    ExperimentSpec,
    McReport,
    McRow,
    export_qq,
    normal_quantile,
    rejection_table,
    run_experiment,
)
from .normal import normal_cdf, normal_pdf, normal_sf
from .pipeline import (
    CleanSeries,
    DailyReport,
    SpanSpec,
    TickRecord,
    VariantPlan,
    clean,
    daily_report,
    load_ticks,
    restrict_span,
    sample_calendar,
    spot_curve,
    subsample,
    synthetic_tick_csv,
)
from .simulate import (
    ConstantVol,
    Heston,
    JumpSpec,
    ModelSpec,
    NoiseSpec,
    SamplePath,
    SimGrid,
    overlay_jumps,
    overlay_noise,
    read_path_csv,
    simulate,
    simulate_constant,
    simulate_heston,
    write_path_csv,
)

__version__ = "0.1.0"
