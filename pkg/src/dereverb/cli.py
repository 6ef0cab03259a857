"""Batch command-line front end: scene simulation, dereverberation,
evaluation, parameter sweeps and convergence traces.

Exit codes: 0 success, 2 bad arguments, 3 I/O errors, 4 numeric/metric
errors, 5 external denoiser failures.
"""
from __future__ import annotations

import argparse
import csv
import os
import shlex
import sys
import tempfile

import numpy as np

from .denoisers import DenoiserSpec
from .errors import (AlignmentError, ArgumentError, DenoiserError,
                     FormatError, GeometryError, MetricError, ProtocolError,
                     SingularBandError)
from .metrics import evaluate_pair
from .pnpwpe import PnpParams, plateau_iteration, run_pnpwpe
from .roomsim import PRESETS, render_scene, sample_room, white_noise
from .signals import MultichannelTimeSignal, read_wav, write_wav
from .stft import StftConfig, analyze_multichannel, synthesize
from .wpe import WpeParams, run_wpe

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_DENOISER = 5

PRESET_FILTER_ORDER = {"A": 28, "B": 35}


class UsageError(Exception):
    pass


def _atomic_write_wav(signal, path, encoding="float32"):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        write_wav(signal, tmp, encoding)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(text, path):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _add_stft_flags(parser):
    parser.add_argument("--frame-len", type=int, default=512)
    parser.add_argument("--hop", type=int, default=128)


def _add_wpe_flags(parser):
    parser.add_argument("--filter-order", type=int, default=None,
                        help="taps per channel (default 28; 35 for preset B)")
    parser.add_argument("--delay", type=int, default=2)
    parser.add_argument("--epsilon", type=float, default=1e-4)
    parser.add_argument("--iterations", type=int, default=10)
    parser.add_argument("--reference-channel", type=int, default=0)
    parser.add_argument("--preset", choices=sorted(PRESETS), default=None)


def _add_pnp_flags(parser):
    parser.add_argument("--rho", type=float, default=0.1)
    parser.add_argument("--mu", type=float, default=0.5)
    parser.add_argument("--inner-iters", type=int, default=1)
    parser.add_argument("--stop-tol", type=float, default=1e-4)
    parser.add_argument("--denoiser", default="identity",
                        choices=["identity", "soft_threshold", "wiener",
                                 "median2d", "external"])
    parser.add_argument("--threshold", type=float, default=0.5)
    parser.add_argument("--quantile", type=float, default=0.3)
    parser.add_argument("--min-gain", type=float, default=0.1)
    parser.add_argument("--median-half-frames", type=int, default=1)
    parser.add_argument("--median-half-bins", type=int, default=1)
    parser.add_argument("--denoiser-command", default=None,
                        help="command line for the external denoiser")


def _filter_order(args):
    if args.filter_order is not None:
        return args.filter_order
    if args.preset is not None:
        return PRESET_FILTER_ORDER[args.preset]
    return 28


def _wpe_params(args, iterations=None):
    return WpeParams(
        filter_order=_filter_order(args),
        delay=args.delay,
        epsilon=args.epsilon,
        iterations=iterations if iterations is not None else args.iterations,
        reference_channel=args.reference_channel,
    )


def _denoiser_spec(args, kind=None):
    kind = kind if kind is not None else args.denoiser
    command = ()
    if kind == "external":
        if not args.denoiser_command:
            raise UsageError("--denoiser-command required for external")
        command = tuple(shlex.split(args.denoiser_command))
    return DenoiserSpec(
        kind=kind,
        threshold=args.threshold,
        quantile=args.quantile,
        min_gain=args.min_gain,
        half_frames=args.median_half_frames,
        half_bins=args.median_half_bins,
        command=command,
    )


def _pnp_params(args, denoiser_kind=None, rho=None, mu=None,
                filter_order=None):
    wpe_params = _wpe_params(args)
    if filter_order is not None:
        wpe_params = WpeParams(
            filter_order=filter_order, delay=wpe_params.delay,
            epsilon=wpe_params.epsilon, iterations=wpe_params.iterations,
            reference_channel=wpe_params.reference_channel)
    return PnpParams(
        wpe=wpe_params,
        rho=rho if rho is not None else args.rho,
        mu=mu if mu is not None else args.mu,
        inner_iters=args.inner_iters,
        outer_iters=args.iterations,
        denoiser=_denoiser_spec(args, denoiser_kind),
        stop_tol=args.stop_tol,
    )


def _write_trace_csv(path, error_trace, error_eq24_trace):
    lines = ["iteration,error,error_eq24"]
    for i, (err, err24) in enumerate(zip(error_trace, error_eq24_trace), 1):
        lines.append(f"{i},{err:.12g},{err24:.12g}")
    _atomic_write_text("\n".join(lines) + "\n", path)


def cmd_simulate(args):
    clean_mc = read_wav(args.clean)
    if clean_mc.sample_rate != 16000:
        raise UsageError("clean input must be sampled at 16 kHz")
    clean = clean_mc.channels[0]
    spec = sample_room(args.preset, args.seed)
    noise = None
    if args.noise == "wgn":
        noise = white_noise(len(clean) + clean.sample_rate,
                            args.seed + 1, clean.sample_rate)
    elif args.noise != "none":
        noise_mc = read_wav(args.noise)
        noise = noise_mc.channels[0]
    snr_db = args.snr_db if noise is not None else None
    scene = render_scene(spec, clean, noise, snr_db, noise_seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    _atomic_write_wav(scene.observed,
                      os.path.join(args.out_dir, "observed.wav"))
    _atomic_write_wav(MultichannelTimeSignal((scene.reference,)),
                      os.path.join(args.out_dir, "reference.wav"))
    _atomic_write_wav(MultichannelTimeSignal((scene.clean,)),
                      os.path.join(args.out_dir, "clean.wav"))
    _atomic_write_wav(MultichannelTimeSignal(scene.rirs),
                      os.path.join(args.out_dir, "rirs.wav"))
    meta = {
        "preset": args.preset,
        "seed": args.seed,
        "t60": f"{spec.t60:.6f}",
        "snr_db": "none" if snr_db is None else f"{snr_db:g}",
        "noise": args.noise,
    }
    meta_text = "".join(f"{key}={value}\n" for key, value in meta.items())
    _atomic_write_text(meta_text, os.path.join(args.out_dir, "meta"))
    sys.stdout.write(meta_text)
    return EXIT_OK


def _load_observed(path, config):
    signal = read_wav(path)
    return analyze_multichannel(signal, config)


def cmd_dereverb(args):
    config = StftConfig(frame_len=args.frame_len, hop=args.hop)
    observed = _load_observed(args.input, config)
    if args.method == "wpe":
        estimate, _, _ = run_wpe(observed, _wpe_params(args))
        trace = None
    else:
        params = _pnp_params(args)
        estimate, state, _ = run_pnpwpe(observed, params)
        trace = (state.error_trace, state.error_eq24_trace)
    out = synthesize(estimate)
    _atomic_write_wav(MultichannelTimeSignal((out,)), args.out)
    if trace is not None and args.trace_csv:
        _write_trace_csv(args.trace_csv, *trace)
    return EXIT_OK


def cmd_evaluate(args):
    reference = read_wav(args.reference).channels[0]
    estimate = read_wav(args.estimate).channels[0]
    report = evaluate_pair(reference, estimate)
    row = [args.estimate, f"{report.cd:.6f}", f"{report.fwsegsnr:.6f}",
           str(report.frames_used)]
    new_file = not os.path.exists(args.csv)
    with open(args.csv, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(["file", "cd", "fwsegsnr", "frames_used"])
        writer.writerow(row)
    sys.stdout.write(",".join(row) + "\n")
    return EXIT_OK


def _parse_grid(text, cast):
    if text is None or not text.strip():
        return []
    return [cast(tok) for tok in text.split(",") if tok.strip()]


def cmd_sweep(args):
    rhos = _parse_grid(args.rho_grid, float) or [args.rho]
    mus = _parse_grid(args.mu_grid, float) or [args.mu]
    orders = _parse_grid(args.filter_order_grid, int) or [_filter_order(args)]
    denoisers = (args.denoiser_grid.split(",") if args.denoiser_grid
                 else [args.denoiser])
    denoisers = [d for d in denoisers if d.strip()]
    if not (rhos and mus and orders and denoisers and args.scenes):
        raise UsageError("sweep grid and scene list must be nonempty")
    config = StftConfig(frame_len=args.frame_len, hop=args.hop)
    rows = []
    for scene_dir in args.scenes:
        try:
            observed = _load_observed(
                os.path.join(scene_dir, "observed.wav"), config)
            reference = read_wav(
                os.path.join(scene_dir, "reference.wav")).channels[0]
        except Exception as exc:
            for rho in rhos:
                for mu in mus:
                    for order in orders:
                        for kind in denoisers:
                            rows.append([scene_dir, rho, mu, order, kind,
                                         "", "", "", "", f"error:{exc}"])
            continue
        for rho in rhos:
            for mu in mus:
                for order in orders:
                    for kind in denoisers:
                        try:
                            params = _pnp_params(args, denoiser_kind=kind,
                                                 rho=rho, mu=mu,
                                                 filter_order=order)
                            estimate, state, trace = run_pnpwpe(observed,
                                                                params)
                            out = synthesize(estimate)
                            report = evaluate_pair(reference, out)
                            plateau = plateau_iteration(state.r_change_trace)
                            rows.append([
                                scene_dir, rho, mu, order, kind,
                                f"{report.cd:.6f}",
                                f"{report.fwsegsnr:.6f}",
                                f"{trace[-1]:.12g}", plateau, "ok"])
                        except Exception as exc:
                            rows.append([scene_dir, rho, mu, order, kind,
                                         "", "", "", "", f"error:{exc}"])
    lines = ["scene,rho,mu,L,denoiser,cd,fwsegsnr,final_error,plateau_iter,"
             "status"]
    lines += [",".join(str(v) for v in row) for row in rows]
    _atomic_write_text("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_convergence(args):
    config = StftConfig(frame_len=args.frame_len, hop=args.hop)
    observed = _load_observed(args.input, config)
    params = _pnp_params(args)
    _, state, _ = run_pnpwpe(observed, params)
    _write_trace_csv(args.trace_csv, state.error_trace,
                     state.error_eq24_trace)
    plateau = plateau_iteration(state.r_change_trace)
    sys.stdout.write(f"iterations={len(state.error_trace)} "
                     f"plateau_iter={plateau}\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dereverb",
        description="Multichannel speech dereverberation toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="render a reverberant scene bundle")
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--noise", default="none",
                   help="'wgn', 'none', or a WAV path")
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dereverb", help="dereverberate a multichannel WAV")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=["wpe", "pnpwpe"], default="pnpwpe")
    p.add_argument("--out", required=True)
    p.add_argument("--trace-csv", default=None)
    _add_stft_flags(p)
    _add_wpe_flags(p)
    _add_pnp_flags(p)
    p.set_defaults(func=cmd_dereverb)

    p = sub.add_parser("evaluate", help="compute CD and F-SNR")
    p.add_argument("--reference", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid sweep over scenes")
    p.add_argument("--scenes", nargs="+", required=True,
                   help="scene bundle directories")
    p.add_argument("--rho-grid", default=None)
    p.add_argument("--mu-grid", default=None)
    p.add_argument("--filter-order-grid", default=None)
    p.add_argument("--denoiser-grid", default=None)
    p.add_argument("--out", required=True)
    _add_stft_flags(p)
    _add_wpe_flags(p)
    _add_pnp_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("convergence", help="emit the solver error trace")
    p.add_argument("--input", required=True)
    p.add_argument("--trace-csv", required=True)
    _add_stft_flags(p)
    _add_wpe_flags(p)
    _add_pnp_flags(p)
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_ARGS
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ARGS
    except ArgumentError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ARGS
    except (DenoiserError, ProtocolError) as exc:
        sys.stderr.write(f"denoiser error: {exc}\n")
        return EXIT_DENOISER
    except (FileNotFoundError, OSError, FormatError) as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO
    except (SingularBandError, GeometryError, MetricError,
            AlignmentError) as exc:
        sys.stderr.write(f"numeric error: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
