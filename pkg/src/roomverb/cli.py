"""Command-line entry point: synth-rir, render, replay, eval, calibrate."""

from __future__ import annotations

import argparse
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio import read_wav, write_wav
from .config import load_settings
from .context import (CalibrationEntry, ParameterGrid, SceneType, calibrate, load_param_table,
                      save_param_table)
from .errors import MissingPair, ParseError, RateMismatch, RoomverbError
from .metrics import error_summary, measure_bands, parse_rt60_table, write_report
from .pipeline import DecayModelSynthesizer, MeasuredSynthesizer, PipelineMode, synthesize_scene
from .renderer import LATE_SLOT, Renderer, render_offline
from .replay import replay
from .scenes import load_calibration_dataset, load_grid, load_scene, load_stream
from .synthesis import RoomImpulseResponse

log = logging.getLogger("roomverb")


def _settings(args):
    return load_settings(args.config, seed=args.seed, sample_rate=args.sample_rate)


def _table(args):
    return load_param_table(args.table) if getattr(args, "table", None) else None


def cmd_synth_rir(args) -> int:
    settings = _settings(args)
    scene = load_scene(args.scene)
    rirs = synthesize_scene(scene, args.mode, settings, _table(args))
    if args.source is not None and args.source not in rirs.early:
        raise ParseError(f"scene has no source {args.source!r}")
    rir = rirs.combined(args.source)
    write_wav(args.out, rir.samples, rir.sample_rate)
    log.info("RT60 targets %s", np.round(rirs.rt60, 3).tolist())
    return 0


def cmd_render(args) -> int:
    settings = _settings(args)
    signals = []
    for path in args.inputs:
        x, rate = read_wav(path)
        if rate != settings.sample_rate:
            raise RateMismatch(f"{path} is {rate} Hz, engine runs at {settings.sample_rate} Hz")
        signals.append(x[0])
    if args.rir:
        samples, rate = read_wav(args.rir)
        if rate != settings.sample_rate:
            raise RateMismatch(f"{args.rir} is {rate} Hz, engine runs at {settings.sample_rate} Hz")
        rir = RoomImpulseResponse(samples, rate)
        renderer = Renderer(rate, settings.offline_block_size, rir.channels,
                            max_rir_seconds=len(rir) / rate + 1.0)
        signals = [np.sum(signals, axis=0)] if len(signals) > 1 else signals
        renderer.add_source("input", rir)
        tail = len(rir) - 1
    else:
        rirs = synthesize_scene(load_scene(args.scene), args.mode, settings, _table(args))
        ids = list(rirs.early)
        if len(signals) == 1 and len(ids) > 1:
            signals = signals * len(ids)
        if len(signals) != len(ids):
            raise ParseError(f"scene has {len(ids)} sources but {len(signals)} inputs were given")
        renderer = Renderer(settings.sample_rate, settings.offline_block_size, settings.channels,
                            max_rir_seconds=settings.rir_length + 1.0)
        for sid in ids:
            renderer.add_source(sid, rirs.early[sid])
        renderer.install_rir(LATE_SLOT, rirs.late)
        tail = max(len(rirs.late), *(len(r) for r in rirs.early.values())) - 1
    if max(s.size for s in signals) == 0:
        out = np.zeros((renderer.channels, 0))
    else:
        out = render_offline(renderer, signals, tail)
    write_wav(args.out, out, settings.sample_rate)
    return 0


def cmd_replay(args) -> int:
    settings = _settings(args)
    stream = load_stream(args.stream)
    x, rate = read_wav(args.input)
    if rate != settings.sample_rate:
        raise RateMismatch(f"{args.input} is {rate} Hz, engine runs at {settings.sample_rate} Hz")
    result = replay(stream, x, settings, args.mode, _table(args))
    write_wav(args.out, result.audio, settings.sample_rate)
    log_path = Path(args.log) if args.log else Path(args.out).with_suffix(".rt60.tsv")
    log_path.write_text(result.log_text())
    return 0


def _metrics_set(path, sample_rate_hint=None) -> dict:
    p = Path(path)
    if p.is_dir():
        out = {}
        for wav in sorted(p.glob("*.wav")):
            x, rate = read_wav(wav)
            out[wav.stem] = measure_bands(x[0], rate)
        if not out:
            raise ParseError(f"no .wav files in {p}")
        return out
    if p.suffix.lower() == ".wav":
        x, rate = read_wav(p)
        return {p.stem: measure_bands(x[0], rate)}
    try:
        return parse_rt60_table(p.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc}") from None


def cmd_eval(args) -> int:
    estimates = _metrics_set(args.estimates)
    truth = _metrics_set(args.ground_truth)
    missing = sorted(set(estimates) ^ set(truth))
    if missing:
        raise MissingPair(f"scene ids without a counterpart: {', '.join(missing)}")
    summary = error_summary(estimates, truth)
    buf = io.StringIO()
    write_report(buf, estimates, truth, summary)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_calibrate(args) -> int:
    settings = _settings(args)
    pairs = load_calibration_dataset(args.dataset)
    grid = ParameterGrid.from_mapping(load_grid(args.grid)) if args.grid else ParameterGrid()
    synth = (MeasuredSynthesizer if args.synthesizer == "measured" else DecayModelSynthesizer)(settings)
    entries = [CalibrationEntry(scene, scene.scene_type, rt) for scene, rt in pairs]
    types = None if args.scene_types is None else [SceneType.parse(s) for s in args.scene_types.split(",")]
    result = calibrate(entries, grid, synth, types, workers=args.workers)
    table = dict(load_param_table(args.table) if args.table else load_param_table())
    table.update(result.table)
    save_param_table(table, args.out)
    for scene_type, mae in result.mae.items():
        print(f"{scene_type.value}\tMAE\t{mae:.6f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (default: $ROOMVERB_CONFIG)")
    common.add_argument("--mode", default="full", choices=[m.value for m in PipelineMode])
    common.add_argument("--seed", type=int)
    common.add_argument("--sample-rate", type=int)
    common.add_argument("--table", help="scene parameter table (default: shipped table)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="roomverb", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-rir", parents=[common], help="synthesize a scene's RIR")
    p.add_argument("scene")
    p.add_argument("--source", help="source id (default: first source)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_rir)

    p = sub.add_parser("render", parents=[common], help="convolve input audio with a scene or RIR")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene")
    src.add_argument("--rir")
    p.add_argument("inputs", nargs="+", help="input WAV files, one per source")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("replay", parents=[common], help="render audio along an observation stream")
    p.add_argument("stream")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="RT60 snapshot log (default: next to --out)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("eval", parents=[common], help="compare estimated and ground-truth decay times")
    p.add_argument("estimates", help="directory of RIR WAVs, a WAV, or an RT60 table")
    p.add_argument("ground_truth", help="directory of RIR WAVs, a WAV, or an RT60 table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("calibrate", parents=[common], help="grid-search scene parameter vectors")
    p.add_argument("dataset")
    p.add_argument("--grid", help="JSON grid file (default: built-in grid)")
    p.add_argument("--scene-types", help="comma-separated subset to calibrate (default: all)")
    p.add_argument("--synthesizer", choices=("model", "measured"), default="model")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RoomverbError as exc:
        msg = " ".join(str(exc).split())
        print(f"{exc.category}: {msg}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"Error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
