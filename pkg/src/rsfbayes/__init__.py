"""Rate-and-state friction simulation and Bayesian inversion for the critical slip distance."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DataFormatError,
    DegenerateNoiseError,
    IntegrationError,
    InversionError,
    ModelDomainError,
    RsfError,
    SampleRangeError,
    SchemaVersionError,
)
from .model import (  # noqa: E402
    CONSISTENT,
    LITERAL,
    ForcingConfig,
    PhysicalConstants,
    RsfParams,
    SliderState,
    load_point,
    rhs,
    slip_rate,
)
from .solver import SolverConfig, Trajectory, integrate, integrate_fixed_rk4, sample_at  # noqa: E402
from .inversion import (  # noqa: E402
    ForwardModel,
    NoiseModel,
    ObservationSet,
    PriorConfig,
    grid_posterior,
    least_squares_fit,
    log_likelihood,
    mcmc_sample,
    posterior_summary,
)

__all__ = [
    "__version__",
    "RsfError", "ConfigError", "ModelDomainError", "IntegrationError", "SampleRangeError",
    "InversionError", "DegenerateNoiseError", "DataFormatError", "SchemaVersionError",
    "LITERAL", "CONSISTENT", "RsfParams", "PhysicalConstants", "SliderState", "ForcingConfig",
    "slip_rate", "load_point", "rhs",
    "SolverConfig", "Trajectory", "integrate", "integrate_fixed_rk4", "sample_at",
    "ObservationSet", "NoiseModel", "PriorConfig", "ForwardModel", "log_likelihood",
    "least_squares_fit", "grid_posterior", "mcmc_sample", "posterior_summary",
]
