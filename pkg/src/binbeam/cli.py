"""Command-line entry point: ``binbeam validate | process | synth``.

Every long option can also come from a config file (``--config``) holding
``key = value`` lines; keys are option names with dashes or underscores,
``#`` starts a comment, and options given on the command line win. The
worker count is read from the ``BINBEAM_WORKERS`` environment variable.

Exit status: 0 on success, 2 for invalid input, 3 for numerical
degeneracy.
"""

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .beamformers import Algorithm
from .errors import BinbeamError, ChannelMismatch, NumericalError, ParseError, PreconditionError
from .estimation import oracle_vad, read_vad, write_vad
from .pipeline import ProcessConfig, run_pipeline
from .scene import SceneSpec, default_scene, load_atf, mix_components
from .simulate import render_scene
from .stft import StftConfig
from .validate import ValidateJob, run_validate, write_csv
from .wavio import wav_read, wav_write

log = logging.getLogger("binbeam")

EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 2, 3


def float_list(text):
    """Comma-separated floats; an item ``start:stop:step`` expands inclusively."""
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        try:
            if ":" in item:
                start, stop, step = (float(v) for v in item.split(":"))
                if step <= 0:
                    raise ValueError("step must be positive")
                n = int(np.floor((stop - start) / step + 1e-9)) + 1
                out.extend(float(np.round(start + i * step, 12)) for i in range(n))
            else:
                out.append(float(item))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad number list {text!r}: {exc}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def freq_list(text):
    return None if str(text).strip().lower() == "all" else float_list(text)


def algo_list(text):
    try:
        return [Algorithm.parse(a.strip()) for a in str(text).split(",") if a.strip()]
    except PreconditionError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def path_list(text):
    return [Path(p.strip()) for p in str(text).split(",")]


def _flag(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


ALL_ALGOS = ",".join(a.value for a in Algorithm)


def build_parser():
    p = argparse.ArgumentParser(prog="binbeam", description="Binaural beamforming with partial noise estimation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="closed-form versus filter sweeps on a matrix-level scene")
    v.add_argument("--config", type=Path)
    v.add_argument("--scene", type=Path, help="scene JSON (default: built-in two-device scene)")
    v.add_argument("--atf", type=Path, help="impulse-response database for steering vectors and noise field")
    v.add_argument("--delta", type=float_list, default="0:1:0.1")
    v.add_argument("--eta", type=float_list, default="0:1:0.1")
    v.add_argument("--freqs", type=freq_list, default="all")
    v.add_argument("--algos", type=algo_list, default=ALL_ALGOS)
    v.add_argument("--out", type=Path)

    r = sub.add_parser("process", help="run the STFT pipeline on recorded signals")
    r.add_argument("--config", type=Path)
    r.add_argument("--in", dest="input", type=Path, help="noisy multichannel WAV")
    r.add_argument("--components", type=path_list, help="x.wav,u.wav,n.wav (summed to form the input)")
    r.add_argument("--vad", type=Path, help="per-frame labels (default: derived from components)")
    r.add_argument("--oracle", type=_flag, default="false", help="covariances from the components")
    r.add_argument("--delta", type=float, default="0.3")
    r.add_argument("--eta", type=float, default="0.3")
    r.add_argument("--algos", type=algo_list, default=ALL_ALGOS)
    r.add_argument("--frame-len", type=int, default="8192")
    r.add_argument("--ref-left", type=int, default="0")
    r.add_argument("--ref-right", type=int, default="2")
    r.add_argument("--snr", type=float, help="rescale noise to this input SNR (dB) at the right reference")
    r.add_argument("--sir", type=float, help="rescale interferer to this input SIR (dB) at the right reference")
    r.add_argument("--format", default="float32", choices=("float32", "pcm16", "pcm24"))
    r.add_argument("--out-dir", type=Path)

    s = sub.add_parser("synth", help="render a synthetic scene as component WAVs and VAD")
    s.add_argument("--config", type=Path)
    s.add_argument("--scene", type=Path)
    s.add_argument("--duration", type=float, default="30")
    s.add_argument("--seed", type=int, default="0")
    s.add_argument("--snr", type=float, default="10")
    s.add_argument("--sir", type=float, default="5")
    s.add_argument("--frame-len", type=int, default="8192")
    s.add_argument("--out-dir", type=Path)
    return p, {"validate": v, "process": r, "synth": s}


def read_config(path, subparser):
    """``key = value`` lines mapped onto ``subparser``'s option names."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string("[job]\n" + Path(path).read_text())
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    dests = {}
    for action in subparser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                dests[opt[2:].replace("-", "_")] = action.dest
    out = {}
    for key, value in cp["job"].items():
        k = key.replace("-", "_")
        if k not in dests or k == "config":
            raise ParseError(f"{path}: unknown option {key!r}")
        out[dests[k]] = value
    return out


def parse_args(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is not None:
        subs[args.command].set_defaults(**read_config(args.config, subs[args.command]))
        args = parser.parse_args(argv)
    return args


def _load_scene(path):
    return default_scene() if path is None else SceneSpec.load(path)


def cmd_validate(args):
    if args.out is None:
        raise PreconditionError("validate needs --out")
    spec = _load_scene(args.scene)
    db = None
    if args.atf is not None:
        db = load_atf(args.atf, fft_len=spec.fft_len, num_channels=spec.num_channels)
    job = ValidateJob(spec, args.delta, args.eta, args.algos, args.freqs, db, str(args.out))
    rows = run_validate(job)
    write_csv(rows, args.out)
    log.info("wrote %d rows to %s", len(rows), args.out)


def _read_inputs(args):
    rate = None
    components = None
    if args.components is not None:
        if len(args.components) != 3:
            raise PreconditionError("--components needs exactly three files: x,u,n")
        comps = []
        for p in args.components:
            data, fs = wav_read(p)
            if rate is not None and fs != rate:
                raise PreconditionError(f"{p}: sample rate {fs} differs from {rate}")
            rate = fs
            comps.append(data)
        if len({c.shape for c in comps}) != 1:
            raise ChannelMismatch("component files differ in length or channel count")
        x, u, n = comps
        if args.snr is not None or args.sir is not None:
            mix = mix_components(
                x, u, n,
                10.0 if args.snr is None else args.snr,
                5.0 if args.sir is None else args.sir,
                args.ref_right,
            )
            x, u, n = mix.x, mix.u, mix.n
        components = (x, u, n)
    if args.input is not None:
        y, fs = wav_read(args.input)
        if rate is not None and fs != rate:
            raise PreconditionError(f"{args.input}: sample rate {fs} differs from the components")
        if components is not None and y.shape != components[0].shape:
            raise ChannelMismatch("input and component files differ in shape")
        rate = fs
    elif components is not None:
        y = components[0] + components[1] + components[2]
    else:
        raise PreconditionError("process needs --in or --components")
    return y, rate, components


def cmd_process(args):
    if args.out_dir is None:
        raise PreconditionError("process needs --out-dir")
    y, rate, components = _read_inputs(args)
    m = y.shape[1]
    if not 0 <= args.ref_left < m or not 0 <= args.ref_right < m or args.ref_left == args.ref_right:
        raise PreconditionError(f"reference channels must be distinct indices below {m}")
    cfg = ProcessConfig(
        stft=StftConfig(frame_len=args.frame_len, sample_rate_hz=rate),
        ref_left=args.ref_left,
        ref_right=args.ref_right,
        delta=args.delta,
        eta=args.eta,
        algorithms=tuple(args.algos),
    )
    labels = None
    if not args.oracle:
        if args.vad is not None:
            labels = read_vad(args.vad)
        elif components is not None:
            labels = oracle_vad(components[0], components[1], cfg.stft)
        else:
            raise PreconditionError("process needs --vad unless component files are given")
    result = run_pipeline(y, cfg, labels=labels, components=components, oracle=args.oracle)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for alg, z in result.outputs.items():
        wav_write(out / f"z_{alg.value}.wav", z, rate, args.format)
    if result.report is not None:
        result.report.to_json(out / "report.json")
        result.report.to_csv(out / "report.csv")
    else:
        (out / "report.json").write_text(json.dumps({"degenerate_bins": result.degenerate_bins}, indent=1))
    log.info("wrote outputs to %s", out)


def cmd_synth(args):
    if args.out_dir is None:
        raise PreconditionError("synth needs --out-dir")
    spec = _load_scene(args.scene)
    comps = render_scene(spec, args.duration, seed=args.seed)
    mix = mix_components(comps.x, comps.u, comps.n, args.snr, args.sir, spec.ref_right)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for name, sig in (("x", mix.x), ("u", mix.u), ("n", mix.n), ("y", mix.y)):
        wav_write(out / f"{name}.wav", sig, spec.sample_rate_hz)
    cfg = StftConfig(frame_len=args.frame_len, sample_rate_hz=spec.sample_rate_hz)
    write_vad(out / "vad.txt", oracle_vad(mix.x, mix.u, cfg))
    (out / "scene.json").write_text(json.dumps(spec.to_dict(), indent=1))
    log.info("wrote scene to %s", out)


COMMANDS = {"validate": cmd_validate, "process": cmd_process, "synth": cmd_synth}


def main(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except BinbeamError as exc:
        print(f"binbeam: error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_PRECONDITION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"binbeam: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PreconditionError, OSError) as exc:
        print(f"binbeam: error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
