"""Streaming multiband dynamics processing: crossover filterbank, per-band
compressors and limiters, mixer, full-band limiter, and measurement tools."""

from mbdp.compressor import Compressor, CompressorParams, EventDetectParams
from mbdp.errors import ConfigError, SampleRateMismatch
from mbdp.filterbank import BandSplitter, CrossoverSpec, build_splitter
from mbdp.limiter import Limiter, LimiterParams
from mbdp.pipeline import BandParams, Pipeline, PipelineConfig, reported_latency

__all__ = [
    "BandParams",
    "BandSplitter",
    "Compressor",
    "CompressorParams",
    "ConfigError",
    "CrossoverSpec",
    "EventDetectParams",
    "Limiter",
    "LimiterParams",
    "Pipeline",
    "PipelineConfig",
    "SampleRateMismatch",
    "build_splitter",
    "reported_latency",
]

__version__ = "0.1.0"
