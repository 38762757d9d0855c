"""Basic-block performance prediction: reuse-distance memory model, pipeline
simulation and regression-based input scaling."""
from .cache import effective_memory, hit_given_distance, hit_rates
from .model import (
    BasicBlockModel,
    CacheLevel,
    CfgEdge,
    Graphlet,
    HardwareConfig,
    MemoryTrace,
    PipelineSpec,
    PredictionReport,
    ProgramModel,
    RamSpec,
    ReuseProfile,
    ScalingModel,
    validate_hardware,
    validate_program,
)
from .predict import predict, runtime_polynomial, sweep

__version__ = "0.1.0"
