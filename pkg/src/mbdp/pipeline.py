"""End-to-end processing chain and its configuration.

    input volume -> crossover split -> per-band compressor -> per-band
    limiter -> mixer -> full-band limiter

Configuration is a key-value tree (YAML or JSON on disk). Volume presets
are partial trees overlaid on the base parameters and selected by integer
step at run time.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from mbdp.compressor import Compressor, CompressorParams, EventDetectParams
from mbdp.errors import ConfigError, SampleRateMismatch
from mbdp.filterbank import BandSplitter, CrossoverSpec
from mbdp.limiter import Limiter, LimiterParams, check_equal_lookahead, db_to_amp

# config key -> dataclass field
COMPRESSOR_KEYS = {
    "thre_lw_db": "thre_lw",
    "thre_hi_db": "thre_hi",
    "cr1": "cr1",
    "cr2": "cr2",
    "rms_window_ms": "rms_window_ms",
    "attack_ms": "attack_ms",
    "release_ms": "release_ms",
    "lookahead_ms": "lookahead_ms",
    "curve_mode": "curve_mode",
}
OPTIONAL_COMPRESSOR_KEYS = {"curve_mode", "event_detect"}
EVENT_KEYS = {
    "enabled": "enabled",
    "fast_window_ms": "fast_window_ms",
    "slow_window_ms": "slow_window_ms",
    "trigger_db": "trigger_db",
}
LIMITER_KEYS = {
    "threshold_dbfs": "threshold",
    "lookahead_ms": "lookahead_ms",
    "attack_ms": "attack_ms",
    "release_ms": "release_ms",
}
TOP_KEYS = ("sample_rate", "input_volume_db", "crossover_hz", "bands", "fbl", "presets")

_COMPRESSOR_FIELD_TO_KEY = {v: k for k, v in COMPRESSOR_KEYS.items()} | {"event_detect": "event_detect"}
_LIMITER_FIELD_TO_KEY = {v: k for k, v in LIMITER_KEYS.items()} | {"threshold_dbfs": "threshold_dbfs"}


@dataclass(frozen=True)
class BandParams:
    compressor: CompressorParams = field(default_factory=CompressorParams)
    limiter: LimiterParams = field(default_factory=LimiterParams)


@dataclass(frozen=True)
class PipelineConfig:
    """Validated parameters for one processing chain.

    ``presets`` maps a volume step to a raw overlay tree using the same keys
    as the config file (everything except ``sample_rate`` and ``presets``).
    """

    sample_rate: float
    crossover: CrossoverSpec
    bands: tuple[BandParams, ...]
    fbl: LimiterParams = field(default_factory=LimiterParams)
    input_volume_db: float = 0.0
    presets: Mapping[int, dict] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bands", tuple(self.bands))
        self.validate()

    @property
    def n_bands(self) -> int:
        return self.crossover.n_bands

    @classmethod
    def uniform(
        cls,
        sample_rate: float,
        crossovers=(),
        compressor: CompressorParams | None = None,
        limiter: LimiterParams | None = None,
        fbl: LimiterParams | None = None,
        input_volume_db: float = 0.0,
    ) -> "PipelineConfig":
        """Same compressor/limiter settings in every band."""
        spec = CrossoverSpec(sample_rate, tuple(crossovers))
        band = BandParams(compressor or CompressorParams(), limiter or LimiterParams())
        return cls(sample_rate, spec, (band,) * spec.n_bands, fbl or LimiterParams(), input_volume_db)

    def validate(self) -> None:
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise ConfigError("sample_rate", f"must be positive, got {self.sample_rate!r}")
        if self.crossover.sample_rate != self.sample_rate:
            raise ConfigError("crossover_hz", "crossover sample rate differs from sample_rate")
        if not math.isfinite(self.input_volume_db):
            raise ConfigError("input_volume_db", "must be finite")
        if len(self.bands) != self.n_bands:
            raise ConfigError(
                "bands", f"{len(self.bands)} band entries for {self.n_bands} bands ({len(self.crossover.crossovers)} crossovers)"
            )
        for k, band in enumerate(self.bands):
            _validate_mapped(band.compressor, f"bands[{k}].compressor", _COMPRESSOR_FIELD_TO_KEY)
            _validate_mapped(band.limiter, f"bands[{k}].limiter", _LIMITER_FIELD_TO_KEY)
        _validate_mapped(self.fbl, "fbl", _LIMITER_FIELD_TO_KEY)
        fs = self.sample_rate
        check_equal_lookahead([b.compressor.lookahead_samples(fs) for b in self.bands], "bands[*].compressor.lookahead_ms")
        check_equal_lookahead([b.limiter.lookahead_samples(fs) for b in self.bands], "bands[*].limiter.lookahead_ms")

    # -- tree conversion ---------------------------------------------------------

    @classmethod
    def from_dict(cls, tree: Mapping[str, Any]) -> "PipelineConfig":
        if not isinstance(tree, Mapping):
            raise ConfigError("", "config root must be a mapping")
        _reject_unknown(tree, TOP_KEYS, "")
        fs = _number(_require(tree, "sample_rate", ""), "sample_rate")
        if fs <= 0:
            raise ConfigError("sample_rate", f"must be positive, got {fs}")
        volume = _number(_require(tree, "input_volume_db", ""), "input_volume_db")
        xo = _parse_crossovers(_require(tree, "crossover_hz", ""), fs)
        bands_tree = _require(tree, "bands", "")
        if not isinstance(bands_tree, list):
            raise ConfigError("bands", "must be a list")
        bands = tuple(_parse_band(b, f"bands[{k}]", None) for k, b in enumerate(bands_tree))
        fbl = _parse_limiter(_require(tree, "fbl", ""), "fbl", None)
        presets = _parse_preset_map(tree.get("presets") or {})
        config = cls(fs, xo, bands, fbl, volume, presets)
        for step in presets:
            config.with_preset(step)
        return config

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        text = Path(path).read_text()
        try:
            tree = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("", f"cannot parse {path}: {exc}".splitlines()[0]) from exc
        return cls.from_dict(tree)

    def to_dict(self) -> dict:
        def comp(p: CompressorParams) -> dict:
            d = {key: getattr(p, f) for key, f in COMPRESSOR_KEYS.items()}
            if p.event_detect != EventDetectParams():
                d["event_detect"] = {key: getattr(p.event_detect, f) for key, f in EVENT_KEYS.items()}
            return d

        def lim(p: LimiterParams) -> dict:
            return {
                "threshold_dbfs": p.threshold_dbfs,
                "lookahead_ms": p.lookahead_ms,
                "attack_ms": p.attack_ms,
                "release_ms": p.release_ms,
            }

        tree = {
            "sample_rate": self.sample_rate,
            "input_volume_db": self.input_volume_db,
            "crossover_hz": list(self.crossover.crossovers),
            "bands": [{"compressor": comp(b.compressor), "limiter": lim(b.limiter)} for b in self.bands],
            "fbl": lim(self.fbl),
        }
        if self.presets:
            tree["presets"] = {step: copy.deepcopy(o) for step, o in self.presets.items()}
        return tree

    # -- presets -------------------------------------------------------------------

    def with_preset(self, step: int) -> "PipelineConfig":
        """This config with the overlay for volume ``step`` applied."""
        if step not in self.presets:
            raise ConfigError("presets", f"unknown volume step {step}; available steps: {sorted(self.presets)}")
        return self.apply_overlay(self.presets[step], f"presets.{step}")

    def apply_overlay(self, overlay: Mapping[str, Any], path: str = "overlay") -> "PipelineConfig":
        if not isinstance(overlay, Mapping):
            raise ConfigError(path, "overlay must be a mapping")
        _reject_unknown(overlay, ("input_volume_db", "crossover_hz", "bands", "fbl"), path)
        volume = self.input_volume_db
        if "input_volume_db" in overlay:
            volume = _number(overlay["input_volume_db"], f"{path}.input_volume_db")
        xo = self.crossover
        if "crossover_hz" in overlay:
            xo = _parse_crossovers(overlay["crossover_hz"], self.sample_rate, f"{path}.crossover_hz")
        bands = list(self.bands)
        if "bands" in overlay:
            entries = overlay["bands"]
            if not isinstance(entries, list):
                raise ConfigError(f"{path}.bands", "must be a list")
            for k, entry in enumerate(entries):
                base = bands[k] if k < len(bands) else None
                parsed = _parse_band(entry or {}, f"{path}.bands[{k}]", base)
                if k < len(bands):
                    bands[k] = parsed
                else:
                    bands.append(parsed)
        bands = bands[: xo.n_bands]
        fbl = self.fbl
        if "fbl" in overlay:
            fbl = _parse_limiter(overlay["fbl"], f"{path}.fbl", self.fbl)
        try:
            return PipelineConfig(self.sample_rate, xo, tuple(bands), fbl, volume, self.presets)
        except ConfigError as exc:
            raise ConfigError(f"{path}.{exc.path}" if exc.path else path, exc.message) from None


# -- parsing helpers ---------------------------------------------------------------


def _require(tree: Mapping, key: str, path: str):
    if key not in tree:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
    return tree[key]


def _reject_unknown(tree: Mapping, allowed, path: str) -> None:
    for key in tree:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(path, f"must be finite, got {value!r}")
    return v


def _parse_crossovers(value, fs: float, path: str = "crossover_hz") -> CrossoverSpec:
    if not isinstance(value, list):
        raise ConfigError(path, "must be a list of frequencies")
    freqs = tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))
    try:
        return CrossoverSpec(fs, freqs)
    except ConfigError as exc:
        suffix = exc.path.removeprefix("crossover_hz")
        raise ConfigError(path + suffix, exc.message) from None


def _parse_fields(tree, path: str, keymap: dict, optional: set, base):
    if not isinstance(tree, Mapping):
        raise ConfigError(path, "must be a mapping")
    _reject_unknown(tree, set(keymap) | optional, path)
    out = {}
    for key, fname in keymap.items():
        kpath = f"{path}.{key}"
        if key in tree:
            value = tree[key]
            if key == "curve_mode":
                if not isinstance(value, str):
                    raise ConfigError(kpath, f"expected a string, got {value!r}")
                out[fname] = value
            elif key == "enabled":
                if not isinstance(value, bool):
                    raise ConfigError(kpath, f"expected true/false, got {value!r}")
                out[fname] = value
            else:
                out[fname] = _number(value, kpath)
        elif base is None and key not in optional:
            raise ConfigError(kpath, "missing required key")
    return out


def _parse_compressor(tree, path: str, base: CompressorParams | None) -> CompressorParams:
    values = _parse_fields(tree, path, COMPRESSOR_KEYS, OPTIONAL_COMPRESSOR_KEYS, base)
    if "event_detect" in tree:
        ev_base = base.event_detect if base is not None else EventDetectParams()
        ev = _parse_fields(tree["event_detect"], f"{path}.event_detect", EVENT_KEYS, set(EVENT_KEYS), ev_base)
        values["event_detect"] = replace(ev_base, **ev)
    params = replace(base, **values) if base is not None else CompressorParams(**values)
    _validate_mapped(params, path, _COMPRESSOR_FIELD_TO_KEY)
    return params


def _parse_limiter(tree, path: str, base: LimiterParams | None) -> LimiterParams:
    values = _parse_fields(tree, path, LIMITER_KEYS, set(), base)
    if "threshold" in values:
        values["threshold"] = db_to_amp(values["threshold"])
    params = replace(base, **values) if base is not None else LimiterParams(**values)
    _validate_mapped(params, path, _LIMITER_FIELD_TO_KEY)
    return params


def _parse_band(tree, path: str, base: BandParams | None) -> BandParams:
    if not isinstance(tree, Mapping):
        raise ConfigError(path, "must be a mapping")
    _reject_unknown(tree, ("compressor", "limiter"), path)
    if base is None:
        comp = _parse_compressor(_require(tree, "compressor", path), f"{path}.compressor", None)
        lim = _parse_limiter(_require(tree, "limiter", path), f"{path}.limiter", None)
    else:
        comp = base.compressor
        lim = base.limiter
        if "compressor" in tree:
            comp = _parse_compressor(tree["compressor"], f"{path}.compressor", comp)
        if "limiter" in tree:
            lim = _parse_limiter(tree["limiter"], f"{path}.limiter", lim)
    return BandParams(comp, lim)


def _parse_preset_map(tree) -> dict[int, dict]:
    if not isinstance(tree, Mapping):
        raise ConfigError("presets", "must be a mapping of volume step -> overlay")
    presets = {}
    for key, overlay in tree.items():
        try:
            step = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"presets.{key}", "volume step must be an integer") from None
        presets[step] = copy.deepcopy(overlay) if overlay is not None else {}
    return presets


def _validate_mapped(params, path: str, field_to_key: dict) -> None:
    try:
        params.validate()
    except ConfigError as exc:
        key = field_to_key.get(exc.path, exc.path)
        raise ConfigError(f"{path}.{key}", exc.message) from None


# -- processing --------------------------------------------------------------------


def apply_input_volume(block, volume_db: float, out: np.ndarray | None = None) -> np.ndarray:
    """Scale by ``10 ** (volume_db / 20)``; no clipping."""
    return np.multiply(block, 10.0 ** (volume_db / 20.0), out=out)


def reported_latency(config: PipelineConfig) -> int:
    """Total delay in samples: compressor + band limiter + full-band limiter look-aheads."""
    fs = config.sample_rate
    band = config.bands[0]
    return band.compressor.lookahead_samples(fs) + band.limiter.lookahead_samples(fs) + config.fbl.lookahead_samples(fs)


class Pipeline:
    """Streaming processor for one mono channel.

    After the first block of a given size, ``process_block(block, out=...)``
    works entirely in preallocated buffers.
    """

    def __init__(self, config: PipelineConfig, max_block: int = 1024):
        self.base_config = config
        self.config = config
        self.sample_rate = config.sample_rate
        self.volume_step: int | None = None
        self._capacity = 0
        self.splitter = BandSplitter(config.crossover)
        self.compressors = [Compressor(b.compressor, self.sample_rate) for b in config.bands]
        self.limiters = [Limiter(b.limiter, self.sample_rate) for b in config.bands]
        self.fbl = Limiter(config.fbl, self.sample_rate)
        self._volume_gain = 10.0 ** (config.input_volume_db / 20.0)
        self._reserve(max_block)

    @property
    def n_bands(self) -> int:
        return self.splitter.n_bands

    @property
    def latency(self) -> int:
        return self.compressors[0].latency + self.limiters[0].latency + self.fbl.latency

    def _reserve(self, n: int, force: bool = False) -> None:
        if n <= self._capacity and not force:
            return
        cap = max(n, self._capacity)
        self._capacity = cap
        self._vol = np.zeros(cap)
        self._bands = np.zeros((self.n_bands, cap))
        self._mix = np.zeros(cap)

    def reset(self) -> None:
        self.splitter.reset()
        for stage in (*self.compressors, *self.limiters, self.fbl):
            stage.reset()

    def process_block(self, block, out: np.ndarray | None = None, sample_rate: float | None = None) -> np.ndarray:
        if sample_rate is not None and sample_rate != self.sample_rate:
            raise SampleRateMismatch(f"block sample rate {sample_rate} Hz != pipeline rate {self.sample_rate} Hz")
        x = np.asarray(block)
        n = x.shape[0]
        if n > self._capacity:
            self._reserve(n)
        vol = self._vol[:n]
        np.multiply(x, self._volume_gain, out=vol)
        bands = self._bands[:, :n]
        self.splitter.split(vol, out=bands)
        for k in range(bands.shape[0]):
            row = bands[k]
            self.compressors[k].process(row, out=row)
            self.limiters[k].process(row, out=row)
        # in-place adds: a strided np.sum(axis=0, out=...) allocates a temporary
        mix = self._mix[:n]
        np.copyto(mix, bands[0])
        for k in range(1, bands.shape[0]):
            np.add(mix, bands[k], out=mix)
        if out is None:
            out = np.empty(n)
        self.fbl.process(mix, out=out)
        return out

    def process(self, signal, block_size: int = 1024) -> np.ndarray:
        """Run a whole mono signal through in ``block_size`` pieces."""
        x = np.asarray(signal, dtype=float)
        y = np.empty_like(x)
        for start in range(0, x.shape[0], block_size):
            self.process_block(x[start:start + block_size], out=y[start:start + block_size])
        return y

    def set_volume_step(self, step: int) -> PipelineConfig:
        """Activate the preset for ``step``, keeping filter and delay state where possible."""
        config = self.base_config.with_preset(step)
        self._activate(config)
        self.volume_step = step
        return config

    def _activate(self, config: PipelineConfig) -> None:
        if config.crossover != self.config.crossover:
            self.splitter = BandSplitter(config.crossover)
            self._reserve(self._capacity, force=True)
        fs = self.sample_rate
        for k, band in enumerate(config.bands):
            if k < len(self.compressors):
                self.compressors[k].set_params(band.compressor)
                self.limiters[k].set_params(band.limiter)
            else:
                self.compressors.append(Compressor(band.compressor, fs))
                self.limiters.append(Limiter(band.limiter, fs))
        del self.compressors[config.n_bands:]
        del self.limiters[config.n_bands:]
        self.fbl.set_params(config.fbl)
        self._volume_gain = 10.0 ** (config.input_volume_db / 20.0)
        self.config = config

    def gain_reduction_summary(self) -> dict:
        """Deepest gain reduction (dB, positive) per stage since construction."""

        def gr(g: float) -> float:
            return max(0.0, -20.0 * math.log10(g)) if g > 0 else math.inf

        return {
            "latency_samples": self.latency,
            "bands": [
                {
                    "band": k + 1,
                    "compressor_max_gr_db": gr(c.state.min_gain),
                    "limiter_max_gr_db": gr(lim.state.min_gain),
                    "limiter_clamped_samples": lim.state.clamp_count,
                }
                for k, (c, lim) in enumerate(zip(self.compressors, self.limiters))
            ],
            "fbl": {"max_gr_db": gr(self.fbl.state.min_gain), "clamped_samples": self.fbl.state.clamp_count},
        }
