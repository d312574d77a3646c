"""Command-line interface.

Subcommands::

    obtain track FILE.wav [-o OUT] [--json] [--debug-csv DIR]
    obtain stream [--rate 44100] [--channels 1] [--json] < pcm_s16le
    obtain eval DETECTED REFERENCE [--tempo-tol ...] [--skip-transient]
    obtain sweep DETECTED REFERENCE [--tolerances 0.05 0.1 ...]

Exit status is 0 on success, 1 on input errors (unreadable or undecodable
audio, malformed annotations) and 2 on usage errors (bad flags or
parameter values).
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
import time

import numpy as np

from .audio import SAMPLE_RATE, FrameConfig, read_wav
from .beat_detect import DetectorConfig
from .cbss import CbssConfig
from .errors import ObtainError, ParameterError
from .metrics import EvalConfig, evaluate, read_annotations, sweep_csv, tolerance_sweep
from .oss import CompressionConfig, SmootherConfig
from .pipeline import Pipeline, PipelineConfig, pcm16_chunks, run_stream
from .tempo import TempoConfig

log = logging.getLogger("obtain")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2

# (config section, field, flag, help)
PIPELINE_FLAGS = [
    ("frame", "window_len", "--window-len", "analysis window length in samples"),
    ("frame", "hop", "--hop", "hop size in samples"),
    ("compression", "gamma", "--gamma", "log-compression strength"),
    ("compression", "noise_floor_db", "--noise-floor-db",
     "noise gate level below the reference maximum, dB"),
    ("compression", "ref_span_frames", "--ref-span-frames",
     "frames over which the normalization maximum is tracked"),
    ("smoother", "length", "--smooth-len", "Hamming smoother length in OSS samples"),
    ("tempo", "buffer_len", "--tempo-buffer", "tempo analysis buffer in OSS samples"),
    ("tempo", "buffer_hop", "--tempo-hop", "OSS samples between tempo updates"),
    ("tempo", "min_bpm", "--min-bpm", "slowest tempo considered"),
    ("tempo", "max_bpm", "--max-bpm", "fastest tempo considered"),
    ("tempo", "n_candidates", "--n-candidates", "autocorrelation peaks scored per update"),
    ("tempo", "history_sec", "--history-sec", "tempo history length, s"),
    ("tempo", "change_threshold_bpm", "--change-threshold",
     "largest jump followed without persistence, BPM"),
    ("tempo", "change_delay_sec", "--change-delay", "persistence required before a tempo change, s"),
    ("tempo", "accumulator_kernel_bpm", "--acc-kernel", "accumulator Gaussian width, BPM"),
    ("tempo", "accumulator_halflife_sec", "--acc-halflife", "accumulator half-life, s"),
    ("tempo", "harmonic_tolerance", "--harmonic-tol", "relative tolerance for octave detection"),
    ("tempo", "n_pulses", "--n-pulses", "pulses per scoring train (0 = whole buffer)"),
    ("tempo", "remove_mean", "--remove-mean", "subtract the buffer mean before pulse scoring"),
    ("tempo", "eacf_weight", "--eacf-weight", "weight of the autocorrelation term in scoring"),
    ("cbss", "alpha", "--alpha", "CBSS feedback weight"),
    ("cbss", "eta", "--eta", "log-Gaussian window tightness"),
    ("detector", "frame_len", "--frame-len", "CBSS samples per peak-detection frame"),
    ("detector", "early_margin", "--early-margin", "beat gate opens this many samples before BP"),
    ("detector", "late_margin", "--late-margin", "beat gate closes this many samples after BP"),
    ("detector", "rng_seed", "--seed", "seed for the scalogram random draws"),
    ("detector", "phase_agreement", "--phase-agreement",
     "max distance (OSS samples) at which both systems agree"),
]

_SECTIONS = {
    "frame": FrameConfig,
    "compression": CompressionConfig,
    "smoother": SmootherConfig,
    "tempo": TempoConfig,
    "cbss": CbssConfig,
    "detector": DetectorConfig,
}


def _dest(section, name):
    return f"{section}__{name}"


def _add_pipeline_flags(parser):
    for section, name, flag, help_ in PIPELINE_FLAGS:
        fld = {f.name: f for f in dataclasses.fields(_SECTIONS[section])}[name]
        kw = dict(dest=_dest(section, name), default=fld.default, help=help_)
        if fld.type in (bool, "bool"):
            kw["action"] = argparse.BooleanOptionalAction
        else:
            kw["type"] = float if fld.type in (float, "float") else int
            kw["metavar"] = "N" if kw["type"] is int else "X"
        parser.add_argument(flag, **kw)


def pipeline_config(args):
    """Build a PipelineConfig from parsed pipeline flags."""
    parts = {s: {} for s in _SECTIONS}
    for section, name, _, _ in PIPELINE_FLAGS:
        parts[section][name] = getattr(args, _dest(section, name))
    frame = FrameConfig(**parts["frame"])
    rate = SAMPLE_RATE / frame.hop
    return PipelineConfig(
        frame=frame,
        compression=CompressionConfig(**parts["compression"]),
        smoother=SmootherConfig(**parts["smoother"]),
        tempo=TempoConfig(oss_rate=rate, **parts["tempo"]),
        cbss=CbssConfig(**parts["cbss"]),
        detector=DetectorConfig(hop=frame.hop, **parts["detector"]),
    )


def _add_eval_flags(parser):
    d = EvalConfig()
    parser.add_argument("--tempo-tol", type=float, default=d.tempo_tolerance,
                        help="continuity tempo tolerance (fraction of the beat interval)")
    parser.add_argument("--phase-tol", type=float, default=d.phase_tolerance,
                        help="continuity phase tolerance (fraction of the beat interval)")
    parser.add_argument("--f-window", type=float, default=d.fmeasure_window,
                        help="P-score / F-measure matching window (fraction of the beat interval)")
    parser.add_argument("--skip-transient", action="store_true",
                        help="ignore beats before --skip-sec")
    parser.add_argument("--skip-sec", type=float, default=d.skip_sec,
                        help="start-up transient skipped with --skip-transient, s")


def eval_config(args):
    return EvalConfig(
        tempo_tolerance=args.tempo_tol,
        phase_tolerance=args.phase_tol,
        fmeasure_window=args.f_window,
        skip_sec=args.skip_sec,
        skip_transient=args.skip_transient,
    )


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def format_events(events, as_json):
    if as_json:
        return "".join(json.dumps(e.to_json()) + "\n" for e in events)
    return "".join(f"{e.time_sec:.6f}\n" for e in events)


def _g(v):
    return f"{v:.9g}"


def debug_tables(traces):
    """Render the OSS, CBSS and tempo traces as CSV strings keyed by file name."""
    oss = ["frame_index,time_sec,flux,oss"]
    oss += [f"{i},{_g(t)},{_g(f)},{_g(o)}" for i, t, f, o in traces.oss]
    cbss = ["frame_index,time_sec,oss,cbss"]
    cbss += [f"{i},{_g(t)},{_g(o)},{_g(c)}" for i, t, o, c in traces.cbss]
    tempo = ["time_sec,instant_bpm,accumulated_bpm,adopted_bpm"]
    tempo += [
        f"{_g(u.time_sec)},{_g(u.instant_bpm)},{_g(u.accumulated_bpm)},{_g(u.adopted_bpm)}"
        for u in traces.tempo
    ]
    return {name: "\n".join(rows) + "\n"
            for name, rows in (("oss.csv", oss), ("cbss.csv", cbss), ("tempo.csv", tempo))}


def _atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".obtain-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_track(args):
    cfg = pipeline_config(args)
    samples = read_wav(args.input).samples
    if args.lowpass is not None:
        from .perturb import lowpass
        samples = lowpass(samples, args.lowpass)
    if args.noise_snr is not None:
        from .perturb import add_noise
        samples = add_noise(samples, args.noise_snr, args.noise_seed)

    t0 = time.perf_counter()
    pipe = Pipeline(cfg, traces=args.debug_csv is not None)
    events = pipe.process(samples)
    wall = time.perf_counter() - t0
    lat = pipe.latency.summary()
    log.info("%d beats in %.2f s of audio; wall %.3f s; p99 hop %.3f ms",
             len(events), samples.shape[0] / SAMPLE_RATE, wall, lat["p99_ms"])

    text = format_events(events, args.json)
    if args.debug_csv is not None:
        os.makedirs(args.debug_csv, exist_ok=True)
        for name, body in debug_tables(pipe.traces).items():
            _atomic_write(os.path.join(args.debug_csv, name), body)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        _atomic_write(args.output, text)
    return EXIT_OK


def cmd_stream(args):
    cfg = pipeline_config(args)
    out = sys.stdout

    def sink(event):
        out.write(format_events([event], args.json))
        out.flush()

    if args.input == "-":
        fh = sys.stdin.buffer
    else:
        fh = open(args.input, "rb")
    try:
        chunks = pcm16_chunks(fh, args.channels, args.chunk_bytes, args.rate)
        status = run_stream(chunks, sink, cfg, queue_size=args.queue)
    finally:
        if fh is not sys.stdin.buffer:
            fh.close()
    if status:
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    pipe = run_stream.last_pipeline
    lat = pipe.latency.summary()
    log.info("hops %d, mean %.3f ms, p99 %.3f ms, max %.3f ms, overruns %d",
             lat["hops"], lat["mean_ms"], lat["p99_ms"], lat["max_ms"], lat["overruns"])
    if args.stats:
        print(json.dumps({k: round(v, 4) if isinstance(v, float) else v
                          for k, v in lat.items()}), file=sys.stderr)
    return status


def _by_stem(directory):
    return {os.path.splitext(f)[0]: os.path.join(directory, f)
            for f in sorted(os.listdir(directory)) if not f.startswith(".")}


def _pairs(detected, reference):
    """(name, detected_path, reference_path) for files or matching directory entries."""
    if os.path.isdir(detected) != os.path.isdir(reference):
        raise ParameterError("DETECTED and REFERENCE must both be files or both directories")
    if not os.path.isdir(detected):
        return [(os.path.basename(reference), detected, reference)]
    det, ref = _by_stem(detected), _by_stem(reference)
    common = sorted(set(det) & set(ref))
    if not common:
        raise ParameterError("no annotation files with matching names")
    return [(s, det[s], ref[s]) for s in common]


def cmd_eval(args):
    cfg = eval_config(args)
    pairs = _pairs(args.detected, args.reference)
    if len(pairs) == 1:
        _, d, r = pairs[0]
        print(evaluate(read_annotations(d), read_annotations(r), cfg).to_json())
        return EXIT_OK
    reports = []
    for name, d, r in pairs:
        rep = evaluate(read_annotations(d), read_annotations(r), cfg)
        reports.append(rep.as_dict())
        print(json.dumps({"file": name, **rep.as_dict()}))
    mean = {k: round(float(np.mean([r[k] for r in reports])), 4) for k in reports[0]}
    print(json.dumps({"file": "MEAN", **mean}))
    return EXIT_OK


def cmd_sweep(args):
    cfg = eval_config(args)
    det = read_annotations(args.detected)
    ref = read_annotations(args.reference)
    text = sweep_csv(tolerance_sweep(det, ref, args.tolerances, cfg))
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        _atomic_write(args.output, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _tolerance(s):
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"tolerance must lie in (0, 1), got {s}")
    return v


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="obtain", description="Real-time beat tracker.",
                                     formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress to stderr (repeat for debug output)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("track", help="track beats in a WAV file", formatter_class=fmt)
    p.add_argument("input", help="input WAV file")
    p.add_argument("-o", "--output", default=None, help="output file (default: stdout)")
    fmt_group = p.add_mutually_exclusive_group()
    fmt_group.add_argument("--json", action="store_true",
                           help="JSON lines with time and source per beat")
    fmt_group.add_argument("--text", dest="json", action="store_false",
                           help="one beat time per line")
    p.add_argument("--debug-csv", metavar="DIR", default=None,
                   help="write oss.csv, cbss.csv and tempo.csv traces into DIR")
    p.add_argument("--noise-snr", type=float, default=None, metavar="DB",
                   help="add white noise at this SNR before tracking")
    p.add_argument("--noise-seed", type=int, default=0, help="seed for --noise-snr")
    p.add_argument("--lowpass", type=float, default=None, metavar="HZ",
                   help="low-pass the input at this cutoff before tracking")
    _add_pipeline_flags(p.add_argument_group("pipeline parameters"))
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("stream", help="track raw s16le PCM from stdin or a file",
                       formatter_class=fmt)
    p.add_argument("input", nargs="?", default="-", help="PCM source ('-' for stdin)")
    p.add_argument("--rate", type=int, default=SAMPLE_RATE, help="input sample rate, Hz")
    p.add_argument("--channels", type=int, default=1, help="interleaved channel count")
    p.add_argument("--chunk-bytes", type=int, default=4096, help="read size in bytes")
    p.add_argument("--queue", type=int, default=64, help="reader queue depth in chunks")
    fmt_group = p.add_mutually_exclusive_group()
    fmt_group.add_argument("--json", action="store_true",
                           help="JSON lines with time and source per beat")
    fmt_group.add_argument("--text", dest="json", action="store_false",
                           help="one beat time per line")
    p.add_argument("--stats", action="store_true",
                   help="print a per-hop latency summary to stderr at end of stream")
    _add_pipeline_flags(p.add_argument_group("pipeline parameters"))
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("eval", help="score detected beats against a reference",
                       formatter_class=fmt)
    p.add_argument("detected", help="detected beat times (file or directory)")
    p.add_argument("reference", help="reference beat times (file or directory)")
    _add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="continuity metrics over a range of phase tolerances",
                       formatter_class=fmt)
    p.add_argument("detected", help="detected beat times")
    p.add_argument("reference", help="reference beat times")
    p.add_argument("--tolerances", type=_tolerance, nargs="+",
                   default=[round(0.05 * k, 2) for k in range(1, 11)],
                   help="phase tolerances to evaluate")
    p.add_argument("-o", "--output", default=None, help="output CSV (default: stdout)")
    _add_eval_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        status = args.func(args)
        sys.stdout.flush()
        return status
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_INPUT
    except ParameterError as exc:
        print(f"obtain {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ObtainError, OSError) as exc:
        print(f"obtain {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
