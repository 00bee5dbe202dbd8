"""Command-line front end.

Sub-commands::

    lrtc synth     write a random low-rank tensor (TNS1)
    lrtc mask      write a uniform random observation mask (MSK1)
    lrtc complete  run model 1 or 2 on an observed tensor
    lrtc metrics   PSNR / SSIM / ERGAS / SAM report
    lrtc report    merge traces or reports into a long-format CSV

Exit status: 0 success, 2 argument error, 3 I/O or format error,
4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import io as tio
from .metrics import evaluate
from .solver import NumericalError, SolverConfig, run, suggest_ranks
from .tensor import numerical_ranks, random_mask, synth_lowrank

log = logging.getLogger("lrtc")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

LONG_COLUMNS = ["run_id", "index", "metric", "value"]


class ArgError(Exception):
    pass


def _int_tuple(text):
    try:
        vals = tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return vals


def _float_list(text):
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    return vals[0] if len(vals) == 1 else vals


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# name -> (type, help); every entry is a flag, a config-file key and a SolverConfig field
SOLVER_PARAMS = {
    "model": (int, "1 (double nuclear norm) or 2 (adds TV on the mode-3 encoding)"),
    "ranks": (_int_tuple, "comma-separated mode ranks"),
    "alpha": (_float_list, "mode weights, summing to 1 (default 1/N each)"),
    "tau": (_float_list, "nuclear-norm weight on the encodings X_n"),
    "lam": (_float_list, "nuclear-norm weight on the libraries A_n"),
    "mu": (float, "TV weight (model 2)"),
    "beta": (float, "TV penalty parameter (model 2)"),
    "rho": (_float_list, "proximal / penalty parameter"),
    "tol": (float, "stopping threshold on the relative change of Y"),
    "max_outer": (int, "maximum outer iterations"),
    "max_inner": (int, "maximum TV inner iterations"),
    "inner_tol": (float, "relative-change exit of the TV inner loop"),
    "adaptive_penalty": (_bool, "grow rho geometrically each iteration"),
    "penalty_growth": (float, "growth factor of the adaptive penalty"),
    "penalty_max": (float, "cap of the adaptive penalty"),
    "dual_step": (str, "multiplier step: 'scaled' (rho times the residual) or 'unit' (the bare residual)"),
    "descent_check": (_bool, "only accept block sweeps that decrease the block surrogate"),
    "max_sweeps": (int, "ALM sweeps allowed per block when the descent check rejects"),
    "seed": (int, "seed of the random factor initialization"),
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ArgError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in SOLVER_PARAMS:
                raise ArgError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = SOLVER_PARAMS[key][0](value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ArgError(f"{path}:{lineno}: {exc}")
    return out


def _write_text(path, text):
    Path(path).write_text(text, encoding="utf-8")


def cmd_synth(args):
    t = synth_lowrank(args.dims, args.ranks, seed=args.seed, smooth=args.smooth)
    tio.write_tensor(args.out, t)
    achieved = numerical_ranks(t)
    print(f"wrote {args.out}: dims {','.join(map(str, t.shape))}, "
          f"mode ranks {','.join(map(str, achieved))}")
    return EXIT_OK


def cmd_mask(args):
    if args.dims is None:
        if args.like is None:
            raise ArgError("mask needs --dims or --like")
        _, dims, _, _ = tio.read_header(args.like)
    else:
        dims = args.dims
    m = random_mask(dims, args.sr, seed=args.seed)
    tio.write_mask(args.out, m)
    print(f"wrote {args.out}: {m.count} of {m.size} entries, SR = {m.count}/{m.size} = {m.ratio:.6g}")
    return EXIT_OK


def _solver_settings(args):
    settings = {}
    if getattr(args, "from_manifest", None):
        with open(args.from_manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
        settings.update(manifest["config"])
        for key in ("input", "mask", "out", "trace"):
            if getattr(args, key, None) is None and manifest.get(key):
                setattr(args, key, manifest[key])
    if args.config:
        settings.update(read_config_file(args.config))
    for key in SOLVER_PARAMS:
        if key in vars(args):
            settings[key] = getattr(args, key)
    return settings


def cmd_complete(args):
    settings = _solver_settings(args)
    for key in ("input", "mask", "out"):
        if getattr(args, key, None) is None:
            raise ArgError(f"complete needs --{key}")
    f = tio.read_tensor(args.input)
    mask = tio.read_mask(args.mask)
    if mask.dims != f.shape:
        raise tio.FormatError(f"mask dims {mask.dims} do not match tensor dims {f.shape}")
    if "ranks" not in settings:
        if not args.auto_ranks:
            raise ArgError("complete needs --ranks (or --auto-ranks)")
        settings["ranks"] = suggest_ranks(f, mask)
        log.info("suggested ranks %s", settings["ranks"])
    settings.setdefault("model", 1)
    try:
        config = SolverConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise ArgError(str(exc))

    t0 = time.perf_counter()
    status = EXIT_OK
    trace = None
    try:
        y, trace = run(f, mask, config)
    except NumericalError:
        status = EXIT_NUMERIC
        raise
    finally:
        elapsed = time.perf_counter() - t0
        if trace is not None:
            tio.write_tensor(args.out, y)
            if args.trace:
                _write_text(args.trace, trace.to_csv())
        if args.manifest:
            manifest = {
                "command": "complete",
                "config": config.to_dict(),
                "input": str(args.input),
                "mask": str(args.mask),
                "out": str(args.out),
                "trace": str(args.trace) if args.trace else None,
                "seed": config.seed,
                "runtime_seconds": elapsed,
                "iterations": len(trace) if trace is not None else None,
                "converged": trace.converged if trace is not None else None,
                "exit_status": status,
            }
            _write_text(args.manifest, json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {args.out}: {len(trace)} iterations, converged={trace.converged}, "
          f"objective {trace.objective[-1]:.6g}, {elapsed:.2f} s")
    return EXIT_OK


def cmd_metrics(args):
    ref = tio.read_tensor(args.ref)
    est = tio.read_tensor(args.est)
    if ref.shape != est.shape:
        raise tio.FormatError(f"dimension mismatch: {ref.shape} vs {est.shape}")
    rep = evaluate(ref, est, peak=args.peak, sr_scale=args.sr_scale,
                   meta={"dims": list(ref.shape), "ref": str(args.ref), "est": str(args.est)})
    _write_text(args.out, rep.to_csv())
    if args.json:
        _write_text(args.json, rep.to_json() + "\n")
    m = rep.means
    print(f"PSNR {m['psnr']:.4f} dB  SSIM {m['ssim']:.4f}  ERGAS {m['ergas']:.4f}  SAM {m['sam']:.4f} deg")
    return EXIT_OK


def _long_rows(path, run_id):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise tio.FormatError(f"{path}: empty CSV")
        rows = list(reader)
    if header == LONG_COLUMNS:
        return header, rows
    out = []
    for row in rows:
        if len(row) != len(header):
            raise tio.FormatError(f"{path}: ragged row {row!r}")
        for name, value in zip(header[1:], row[1:]):
            if value != "":
                out.append([run_id, row[0], name, value])
    return header, out


def cmd_report(args):
    merged, first_header, seen = [], None, {}
    for path in args.inputs:
        stem = Path(path).stem
        seen[stem] = seen.get(stem, 0) + 1
        run_id = stem if seen[stem] == 1 else f"{stem}.{seen[stem]}"
        header, rows = _long_rows(path, run_id)
        if first_header is None:
            first_header = header
        elif header != first_header:
            raise tio.FormatError(f"{path}: header {header} differs from {first_header}")
        merged.extend(rows)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        w.writerows(merged)
    print(f"wrote {args.out}: {len(merged)} rows")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ArgError(message)


def build_parser():
    p = _Parser(prog="lrtc", description="Low-rank tensor completion toolkit.")
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS threads (default: $LRTC_THREADS or all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="random tensor of given multilinear rank")
    s.add_argument("--dims", type=_int_tuple, required=True)
    s.add_argument("--ranks", type=_int_tuple, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--smooth", action="store_true", help="smooth mode-1/2 factors")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("mask", help="uniform random observation mask")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--dims", type=_int_tuple)
    g.add_argument("--like", help="take dims from an existing TNS1 file")
    s.add_argument("--sr", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("complete", help="complete a tensor from observed entries")
    s.add_argument("--input")
    s.add_argument("--mask")
    s.add_argument("--out")
    s.add_argument("--trace", help="per-iteration CSV")
    s.add_argument("--manifest", help="write a JSON run manifest")
    s.add_argument("--from-manifest", help="reuse the configuration and paths of a manifest")
    s.add_argument("--config", help="'key = value' parameter file (flags win)")
    s.add_argument("--auto-ranks", action="store_true",
                   help="pick ranks from 99%% singular-value energy (heuristic)")
    for name, (typ, help_) in SOLVER_PARAMS.items():
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=typ,
                       default=argparse.SUPPRESS, help=help_)
    s.set_defaults(func=cmd_complete)

    s = sub.add_parser("metrics", help="PQI report of an estimate against a reference")
    s.add_argument("--ref", required=True)
    s.add_argument("--est", required=True)
    s.add_argument("--out", required=True, help="per-slice CSV")
    s.add_argument("--json", help="JSON summary")
    s.add_argument("--peak", type=float, default=None, help="PSNR peak (default max |ref|)")
    s.add_argument("--sr-scale", type=float, default=1.0, help="ERGAS resolution factor")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("report", help="merge traces or reports into long format")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("LRTC_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ArgError(f"LRTC_THREADS must be an integer, got {env!r}")
    return None


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        threads = _threads(args)
        if threads is not None and threads < 1:
            raise ArgError("--threads must be >= 1")
        with threadpool_limits(limits=threads):
            return args.func(args)
    except ArgError as exc:
        print(f"lrtc: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (tio.FormatError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"lrtc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"lrtc: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"lrtc: error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
