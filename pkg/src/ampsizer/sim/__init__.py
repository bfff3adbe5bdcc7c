"""Simulation backends: external SPICE and the analytic surrogate."""
from .spice import (
    AMP_MEASURES,
    DEFAULT_ALIASES,
    SPICE_BIN_ENV,
    ExternalSpice,
    FailureStore,
    SpiceJob,
    load_alias_map,
    parse_measures,
    render_deck,
    run_spice,
)
from .surrogate import (
    SURROGATE_VERSION,
    CornerModel,
    SurrogateConfig,
    SurrogateConstants,
    corner_modifiers,
    nominal_metrics,
    surrogate_eval,
    surrogate_sweep,
)
from .sweep import SpiceBackend, SurrogateBackend, SweepResult, sweep, with_derived

__all__ = [
    "AMP_MEASURES", "DEFAULT_ALIASES", "SPICE_BIN_ENV", "ExternalSpice", "FailureStore",
    "SpiceJob", "load_alias_map", "parse_measures", "render_deck", "run_spice",
    "SURROGATE_VERSION", "CornerModel", "SurrogateConfig", "SurrogateConstants",
    "corner_modifiers", "nominal_metrics", "surrogate_eval", "surrogate_sweep",
    "SpiceBackend", "SurrogateBackend", "SweepResult", "sweep", "with_derived",
]
