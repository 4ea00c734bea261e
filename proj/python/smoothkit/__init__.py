"""Teacher-model smoothing: TMA, spatial ensemble (SE) and spatial-temporal smoothing (STS)."""

from ._smoothkit import (
    CongruenceError,
    ConfigError,
    ConstructionError,
    DivergenceError,
    Error,
    FormatError,
    Granularity,
    IoError,
    MaskError,
    MaskSample,
    Method,
    ParamStore,
    ShapeError,
    SmoothingConfig,
    UnitKind,
    apply_tma,
    config_to_json,
    effective_momentum,
    enumerate_slot_count,
    load_snapshot,
    monte_carlo_mean_update,
    mse,
    run_config,
    sample_mask,
    save_snapshot,
    smooth_step,
    snapshot_from_json,
    snapshot_to_json,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
