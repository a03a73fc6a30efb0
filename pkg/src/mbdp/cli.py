"""Command-line front end.

Subcommands: ``process``, ``filterbank-response``, ``curve``, ``analyze``
and ``generate``. Failures print one ``kind: message`` line to stderr and
exit with 1 (bad config or options), 2 (unreadable/unsupported input) or
3 (output write failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings

import numpy as np

from mbdp import analysis, plotting, signals
from mbdp.compressor import curve_table
from mbdp.errors import ConfigError
from mbdp.filterbank import BandSplitter, log_grid, response_table
from mbdp.pipeline import Pipeline, PipelineConfig
from mbdp.wavio import WavError, read_wav, write_wav

EXIT_CONFIG = 1
EXIT_INPUT = 2
EXIT_WRITE = 3


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.message = message


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for bad input here
    def error(self, message):
        raise CliError(EXIT_CONFIG, "usage_error", f"{message} (see {self.prog} --help)")


def _load_config(path) -> PipelineConfig:
    try:
        return PipelineConfig.load(path)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, "config_error", str(exc)) from exc
    except OSError as exc:
        raise CliError(EXIT_CONFIG, "config_error", f"cannot read config {path}: {exc.strerror or exc}") from exc


def _read_input(path):
    try:
        return read_wav(path)
    except WavError as exc:
        raise CliError(EXIT_INPUT, "input_error", str(exc)) from exc


def _write(path, fn, *args, **kw):
    try:
        fn(*args, **kw)
    except OSError as exc:
        raise CliError(EXIT_WRITE, "write_error", f"cannot write {path}: {exc.strerror or exc}") from exc


def _emit_rows(rows, path, fmt):
    if path is None:
        if fmt == "json":
            json.dump(rows, sys.stdout, indent=2)
            sys.stdout.write("\n")
        else:
            writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]) if rows else [])
            writer.writeheader()
            writer.writerows(rows)
        return
    _write(path, analysis.write_rows, path, rows, fmt)


# -- subcommands ---------------------------------------------------------------


def cmd_process(args) -> int:
    config = _load_config(args.config)
    audio = _read_input(args.input)
    if audio.sample_rate != config.sample_rate:
        raise CliError(
            EXIT_INPUT, "input_error",
            f"sample rate mismatch: {args.input} is {audio.sample_rate} Hz, config expects {config.sample_rate:g} Hz",
        )
    out = np.empty_like(audio.samples)
    summaries = []
    for ch in range(audio.channels):
        pipe = Pipeline(config, max_block=args.block_size)
        if args.volume_step is not None:
            try:
                pipe.set_volume_step(args.volume_step)
            except ConfigError as exc:
                raise CliError(EXIT_CONFIG, "config_error", str(exc)) from exc
        out[:, ch] = pipe.process(np.ascontiguousarray(audio.samples[:, ch]), block_size=args.block_size)
        summaries.append(pipe.gain_reduction_summary())
    _write(args.output, write_wav, args.output, out, audio.sample_rate, audio.bits, audio.is_float)
    latency = summaries[0]["latency_samples"] if summaries else 0
    if args.format == "json":
        print(json.dumps({"latency_samples": latency, "channels": summaries}, indent=2))
    else:
        print(f"latency: {latency} samples ({1000.0 * latency / config.sample_rate:.3f} ms)")
        for ch, s in enumerate(summaries):
            for b in s["bands"]:
                print(
                    f"ch{ch} band{b['band']}: compressor max GR {b['compressor_max_gr_db']:.2f} dB, "
                    f"limiter max GR {b['limiter_max_gr_db']:.2f} dB, clamped {b['limiter_clamped_samples']}"
                )
            print(f"ch{ch} fbl: max GR {s['fbl']['max_gr_db']:.2f} dB, clamped {s['fbl']['clamped_samples']}")
    return 0


def cmd_filterbank_response(args) -> int:
    config = _load_config(args.config)
    splitter = BandSplitter(config.crossover)
    rows = response_table(splitter, log_grid(10.0, config.sample_rate / 2.0, args.points))
    _emit_rows(rows, args.output, args.format)
    if args.plot:
        _write(args.plot, plotting.plot_filterbank_response, rows, args.plot)
    return 0


def cmd_curve(args) -> int:
    config = _load_config(args.config)
    if not 1 <= args.band <= config.n_bands:
        raise CliError(EXIT_CONFIG, "usage_error", f"--band {args.band} out of range 1..{config.n_bands}")
    params = config.bands[args.band - 1].compressor
    rows = curve_table(params)
    _emit_rows(rows, args.output, args.format)
    if args.plot:
        _write(args.plot, plotting.plot_curve, rows, args.plot, title=f"Band {args.band} ({params.curve_mode})")
    return 0


def cmd_analyze(args) -> int:
    if args.kind == "thd" and args.f0 is None:
        raise CliError(EXIT_CONFIG, "usage_error", "analyze thd requires --f0")
    audio = _read_input(args.input)
    if not 0 <= args.channel < audio.channels:
        raise CliError(EXIT_CONFIG, "usage_error", f"--channel {args.channel} out of range 0..{audio.channels - 1}")
    x = audio.samples[:, args.channel]
    fs = audio.sample_rate
    try:
        if args.kind == "par":
            peak = float(np.max(np.abs(x))) if x.size else 0.0
            rms = float(np.sqrt(np.mean(x * x))) if x.size else 0.0
            rows = [{
                "par_db": analysis.par(x),
                "peak_dbfs": float(analysis.db20(peak)),
                "rms_dbfs": float(analysis.db20(rms)),
            }]
        elif args.kind == "psd":
            f, p = analysis.psd_welch(x, fs, args.segment_length, args.overlap)
            rows = [{"frequency_hz": float(a), "psd_db_per_hz": float(b)} for a, b in zip(f, p)]
            if args.plot:
                _write(args.plot, plotting.plot_psd, f, p, args.plot)
        elif args.kind == "thd":
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                value = analysis.thd(x, fs, args.f0, args.harmonics)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            rows = [{"f0_hz": args.f0, "n_harmonics": args.harmonics, "thd_percent": value}]
        else:
            t, pk, rm = analysis.peak_stats(x, fs, args.window_ms)
            rows = [{"start_s": float(a), "peak_dbfs": float(b), "rms_dbfs": float(c)} for a, b, c in zip(t, pk, rm)]
            if args.plot:
                _write(args.plot, plotting.plot_peaks, t, pk, rm, args.plot)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, "input_error", str(exc)) from exc
    _emit_rows(rows, args.output, args.format)
    return 0


def cmd_generate(args) -> int:
    try:
        x = signals.generate(args.kind, args.duration, args.sample_rate, args.amplitude, args.freq, args.seed)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "usage_error", str(exc)) from exc
    _write(args.output, write_wav, args.output, x, args.sample_rate, args.bits, args.bits == 32)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mbdp", description="Multiband dynamics processing toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("process", help="run a WAV file through the configured pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--volume-step", type=int, default=None)
    p.add_argument("--block-size", type=int, default=1024)
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="summary format (csv = plain text)")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("filterbank-response", help="dump band magnitude/phase responses")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--plot", default=None, help="also render a figure to this path")
    p.set_defaults(func=cmd_filterbank_response)

    p = sub.add_parser("curve", help="dump the static compression curve of one band")
    p.add_argument("--config", required=True)
    p.add_argument("--band", type=int, required=True, help="band number, 1-based")
    p.add_argument("--output", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--plot", default=None)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("analyze", help="measure PAR, PSD, THD or windowed peaks of a WAV file")
    p.add_argument("kind", choices=("par", "psd", "thd", "peaks"))
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--f0", type=float, default=None)
    p.add_argument("--harmonics", type=int, default=5)
    p.add_argument("--segment-length", type=int, default=8192)
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--window-ms", type=float, default=10.0)
    p.add_argument("--plot", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("generate", help="write a synthetic test signal")
    p.add_argument("--kind", choices=signals.GENERATORS, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--sample-rate", type=int, default=48000)
    p.add_argument("--freq", type=float, default=1000.0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--bits", type=int, choices=(16, 24, 32), default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"{exc.kind}: {exc.message}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
