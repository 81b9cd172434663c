"""Command-line entry point: ``mgiou {eval,fit,audit,bench,gen}``.

Exit codes: 0 success, 1 property violation, 2 input error, 3 divergence.

Every output carries a run manifest (command, config echo, version, seed).
JSONL outputs start with a ``{"manifest": ...}`` line, which ``eval`` skips
on input; CSV outputs start with a ``# manifest {...}`` comment. Only
``bench`` records wall-clock timings, so every other command is byte-for-byte
reproducible. ``MGIOU_THREADS`` caps the worker threads used by ``eval``.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from itertools import islice

from . import __version__
from .audit import DEFAULT_TRIALS, SUITES, run_suite
from .bench import SHAPES, run_bench
from .errors import DivergenceDetected, MGIoUError
from .fit import FitConfig, fit_separation, fit_shape
from .gen import KINDS, corpus
from .losses import Mode, MgiouConfig, mgiou_plus
from .overlap import TrajectoryBatch, mgiou_minus
from .shapes import from_dict

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_DIVERGED = 0, 1, 2, 3
MIN_AUDIT_TRIALS = 100
EVAL_CHUNK = 256


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


def manifest(command: str, config: dict, seed=None, timings=None) -> dict:
    m = {"command": command, "config": config, "version": __version__, "seed": seed}
    if timings is not None:
        m["timings"] = timings
    return m


def threads() -> int:
    raw = os.environ.get("MGIOU_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"MGIOU_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"MGIOU_THREADS must be a positive integer, got {raw!r}")
    return n


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(d, dict) and "manifest" in d:
        d = d.get("shape", d.get("batch", d))
    return d


# ----------------------------------------------------------------------------
# eval


def evaluate_record(rec, mode: str, lam: float) -> dict:
    """Result dict for one JSONL record (a shape pair or a trajectory batch)."""
    if not isinstance(rec, dict):
        raise MGIoUError("record must be a JSON object")
    if "agents" in rec:
        return mgiou_minus(TrajectoryBatch.from_dict(rec)).to_dict()
    if "p" not in rec or "g" not in rec:
        raise MGIoUError("pair record needs 'p' and 'g' shapes")
    try:
        cfg = MgiouConfig(float(rec.get("lambda", lam)), Mode(rec.get("mode", mode)))
    except (TypeError, ValueError) as exc:
        raise MGIoUError(str(exc)) from exc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return mgiou_plus(from_dict(rec["p"]), from_dict(rec["g"]), cfg).to_dict()


def _eval_line(item, mode, lam):
    lineno, text = item
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        return lineno, None, f"invalid JSON ({exc.msg})"
    if isinstance(rec, dict) and "manifest" in rec:
        return lineno, "skip", None
    try:
        return lineno, evaluate_record(rec, mode, lam), None
    except MGIoUError as exc:
        return lineno, None, f"{type(exc).__name__}: {exc}"


def cmd_eval(args) -> int:
    workers = threads()
    if args.input == "-":
        src = contextlib.nullcontext(sys.stdin)
    else:
        try:
            src = open(args.input, encoding="utf-8")
        except OSError as exc:
            raise InputError(f"{args.input}: {exc.strerror}") from exc
    with src as fh, _open_out(args.output) as out:
        items = ((i, line) for i, line in enumerate(fh, start=1) if line.strip())
        head = manifest("eval", {"input": args.input, "mode": args.mode, "lambda": args.lam})
        out.write(json.dumps({"manifest": head}) + "\n")
        pool = ThreadPoolExecutor(workers) if workers > 1 else None
        try:
            while chunk := list(islice(items, EVAL_CHUNK)):
                fn = lambda it: _eval_line(it, args.mode, args.lam)  # noqa: E731
                results = pool.map(fn, chunk) if pool else map(fn, chunk)
                for lineno, res, err in results:
                    if err is not None:
                        out.flush()
                        raise InputError(f"line {lineno}: {err}")
                    if res != "skip":
                        out.write(json.dumps(res) + "\n")
        finally:
            if pool:
                pool.shutdown()
    return EXIT_OK


# ----------------------------------------------------------------------------
# fit


def _fit_config(args) -> FitConfig:
    try:
        return FitConfig(
            steps=args.steps,
            lr=args.lr,
            momentum=args.momentum,
            lam=args.lam,
            seed=args.seed,
            tol=args.tol,
            snapshot_every=args.snapshot_every,
            final_lr_scale=args.final_lr_scale,
            plateau_kick=args.plateau_kick,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_fit(args) -> int:
    cfg = _fit_config(args)
    init = _read_json(args.init)
    echo = dataclasses.asdict(cfg)
    echo.update(init=args.init, target=args.target)
    head = manifest("fit", echo, seed=cfg.seed)
    try:
        if isinstance(init, dict) and "agents" in init:
            if args.target is not None:
                raise InputError("a trajectory fit takes no target")
            trace = fit_separation(TrajectoryBatch.from_dict(init), cfg)
            final = {"manifest": head, "batch": trace.final.to_dict()}
        else:
            if args.target is None:
                raise InputError("shape fits need a target file")
            target = from_dict(_read_json(args.target))
            trace = fit_shape(from_dict(init), target, cfg)
            final = {"manifest": head, "shape": trace.final.to_dict(), "converged": trace.converged}
    except DivergenceDetected as exc:
        print(f"mgiou fit: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (MGIoUError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    with _open_out(args.trace) as out:
        out.write(trace.to_csv(["manifest " + json.dumps(head)]))
    if args.final:
        with _open_out(args.final) as out:
            out.write(json.dumps(final) + "\n")
    return EXIT_OK


# ----------------------------------------------------------------------------
# audit / bench / gen


def cmd_audit(args) -> int:
    trials = args.trials if args.trials is not None else DEFAULT_TRIALS[args.suite]
    if trials < MIN_AUDIT_TRIALS:
        raise InputError(f"--trials must be >= {MIN_AUDIT_TRIALS}, got {trials}")
    report = run_suite(args.suite, trials, args.seed)
    head = manifest("audit", {"suite": args.suite, "trials": trials}, seed=args.seed)
    with _open_out(args.output) as out:
        out.write("# manifest " + json.dumps(head) + "\n")
        out.write("\n".join(report.lines()) + "\n")
        out.write(("PASS" if report.passed else "FAIL") + "\n")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"manifest": head, "report": report.to_dict()}, fh, default=str)
            fh.write("\n")
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_bench(args) -> int:
    if args.pairs < 1 or args.repeat < 1:
        raise InputError("--pairs and --repeat must be >= 1")
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = run_bench(args.pairs, args.shape, args.repeat, args.seed, per_pair_loop=not args.no_loop)
    for w in caught:
        print(f"mgiou bench: warning: {w.message}", file=sys.stderr)
    timings = {"wall_s": round(time.perf_counter() - t0, 6)}
    timings.update({r.method + "_ms": r.median_ms for r in result.rows})
    config = {"pairs": args.pairs, "shape": args.shape, "repeat": args.repeat}
    head = manifest("bench", config, seed=args.seed, timings=timings)
    with _open_out(args.output) as out:
        out.write(result.to_csv(["manifest " + json.dumps(head)]))
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.count < 0:
        raise InputError("--count must be >= 0")
    head = manifest("gen", {"kind": args.kind, "count": args.count}, seed=args.seed)
    with _open_out(args.output) as out:
        out.write(json.dumps({"manifest": head}) + "\n")
        for rec in corpus(args.kind, args.count, args.seed):
            out.write(json.dumps(rec) + "\n")
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mgiou", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"mgiou {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate losses on a JSONL file of pairs or trajectories")
    p.add_argument("input", help="JSONL file, '-' for stdin")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.STRUCTURED.value)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="convexity weight")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit", help="fit a shape to a target, or separate a trajectory batch")
    p.add_argument("init", help="JSON shape, or a trajectory batch")
    p.add_argument("target", nargs="?", help="JSON target shape")
    d = FitConfig()
    p.add_argument("--steps", type=int, default=d.steps)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--momentum", type=float, default=d.momentum)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--snapshot-every", type=int, default=d.snapshot_every)
    p.add_argument("--final-lr-scale", type=float, default=d.final_lr_scale)
    p.add_argument("--plateau-kick", type=float, default=d.plateau_kick, help="separation only; 0 disables")
    p.add_argument("--trace", default="-", help="trace CSV path (default stdout)")
    p.add_argument("--final", help="final shape JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("audit", help="run a property suite")
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--json", help="also write the full report as JSON")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bench", help="time batched MGIoU against the exact oracle")
    p.add_argument("--pairs", type=int, default=10_000)
    p.add_argument("--shape", choices=SHAPES, default="rect")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-loop", action="store_true", help="skip the per-pair MGIoU loop")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="write a seeded random JSONL corpus")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"mgiou {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
