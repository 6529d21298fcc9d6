"""Sequential control charts for an increase in the variance of a Gaussian time series."""

__version__ = "0.1.0"

from .calibrate import CalibrationResult, CalibrationTarget, bracket_limit, calibrate_limit
from .charts import (
    GENERALIZED_SCHEMES,
    REFERENCE_SCHEMES,
    SCHEMES,
    ChartConfig,
    make_chart,
    run_statistic,
)
from .errors import (
    CalibrationError,
    CausalityError,
    ConfigError,
    DomainError,
    EstimationError,
    NumericalError,
    UnsupportedScheme,
    VarChartError,
)
from .experiments import ExperimentGrid, TableCell, run_arl_table, run_delay_table, run_sensitivity
from .process import (
    ChangeSpec,
    InnovationsState,
    PathGenerator,
    ProcessSpec,
    causality_check,
    innovations_step,
    stationary_variance,
)
from .runlength import (
    ArlEstimate,
    CensoringWarning,
    DelayEstimate,
    RunLengthSample,
    estimate_arl,
    estimate_delay,
    first_passage,
    worst_delay,
)
from .store import MemoryCache, ResultsStore
