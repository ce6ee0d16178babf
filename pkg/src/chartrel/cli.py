"""Command-line front end.

Exit status: 0 success, 1 usage or model error, 2 condition never observed,
3 input/output error.  Every randomised command takes ``--seed`` (default
59813); outputs depend only on model files, flags and seed.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .benchmark import BenchmarkSpec, format_table, run_benchmark
from .executor import Engine
from .faults import FaultTableError, exponentialize, load_fault_table, scale_rates
from .inference import (ConditionNeverObserved, conditional_lifetime, export_histogram,
                        fit_weibull, sensitivity, summarize_lifetime)
from .loader import ModelError, bundled_model_dir, load_model
from .oracle import build_ctmc, solve_ctmc
from .presim import (DEFAULT_SEED, NonAbsorbingModelError, default_workers, read_outcomes,
                     run_batch, write_outcomes)

EXIT_OK, EXIT_INVALID, EXIT_NEVER_OBSERVED, EXIT_IO = 0, 1, 2, 3
MODES = {"ss": "SelfSteering", "loa": "LossOfAssist"}
DEFAULT_SPECS = "2x3,2x6,4x6,4x12"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chartrel", description="Reliability analysis of statechart composites.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, randomised=True):
        sp.add_argument("--model", type=Path, default=None,
                        help="model directory (default: bundled EPAS)")
        sp.add_argument("--faults", type=Path, default=None,
                        help="fault table (default: the *.faults.csv in the model directory)")
        sp.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default=None,
                        help="output format (default: from the --out suffix, else json)")
        if randomised:
            sp.add_argument("--seed", type=_u64, default=DEFAULT_SEED,
                            help=f"master seed, 64-bit unsigned (default {DEFAULT_SEED} = 0xE9A5)")
            sp.add_argument("--n", type=_positive_int, default=10_000)
            sp.add_argument("--workers", type=_positive_int, default=None,
                            help="worker processes (default: available CPUs)")

    sp = sub.add_parser("validate", help="parse and validate a model directory")
    sp.add_argument("--model", type=Path, default=None)
    sp.add_argument("--faults", type=Path, default=None)

    sp = sub.add_parser("simulate", help="Monte Carlo lifetimes")
    common(sp)
    sp.add_argument("--horizon", type=_positive_float, default=None, help="mission time in hours")

    sp = sub.add_parser("fit", help="fit a Weibull distribution to simulated lifetimes")
    common(sp)
    sp.add_argument("--steps", type=int, default=10_000)
    sp.add_argument("--lr", type=_positive_float, default=0.05)
    sp.add_argument("--samples", type=Path, default=None,
                    help="fit an existing outcome file instead of simulating")
    sp.add_argument("--trace", type=Path, default=None,
                    help="objective trace CSV (default: next to --out)")

    sp = sub.add_parser("conditional", help="lifetime given the failure mode")
    common(sp)
    sp.add_argument("--mode", required=True, help="ss, loa or a failure state name")
    sp.add_argument("--bins", type=_positive_int, default=50)
    sp.add_argument("--histogram", type=Path, default=None,
                    help="histogram CSV (default: next to --out)")

    sp = sub.add_parser("sensitivity", help="lifetime given an early component fault")
    common(sp)
    sp.add_argument("--target", required=True, help="instance name")
    sp.add_argument("--horizon", type=_positive_float, required=True, help="hours")

    sp = sub.add_parser("bench", help="runtime on scaled models")
    common(sp)
    sp.set_defaults(model=None)
    sp.add_argument("--specs", default=DEFAULT_SPECS, help="comma separated NxS list")
    sp.add_argument("--repeats", type=_positive_int, default=5)

    sp = sub.add_parser("oracle", help="compare simulation with the exact CTMC solution")
    common(sp)
    sp.add_argument("--scale", type=_positive_float, default=1e6,
                    help="multiply every fault rate (time axis only)")
    sp.set_defaults(n=100_000)
    return p


# --------------------------------------------------------------------------

def _load(args):
    model = load_model(args.model if args.model is not None else bundled_model_dir())
    path = args.faults if args.faults is not None else model.fault_table_path()
    return model, load_fault_table(path, model.composite)


def _engine(model) -> Engine:
    return Engine(model.composite, model.library)


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


@contextlib.contextmanager
def _output(path: Optional[Path]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fp:
            yield fp


def _sibling(path: Optional[Path], suffix: str) -> Optional[Path]:
    return None if path is None else path.with_name(path.stem + suffix)


def _write_dict(obj: dict, fp, fmt: str) -> None:
    if fmt == "json":
        fp.write(_dump(obj))
        return
    flat = {}

    def walk(prefix, v):
        if isinstance(v, dict):
            for k in sorted(v):
                walk(f"{prefix}.{k}" if prefix else str(k), v[k])
        else:
            flat[prefix] = v
    walk("", obj)
    fp.write("key,value\n")
    for k, v in flat.items():
        fp.write(f"{k},{v!r}\n" if isinstance(v, float) else f"{k},{v}\n")


def cmd_validate(args) -> int:
    model_dir = args.model if args.model is not None else bundled_model_dir()
    try:
        model = load_model(model_dir)
    except ModelError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_INVALID
    tables = [args.faults] if args.faults is not None else sorted(Path(model_dir).glob("*.faults.csv"))
    for t in tables:
        load_fault_table(t, model.composite)
    c = model.composite
    print(f"{c.name}: {len(c.instances)} instances, {len(c.channels)} channels, "
          f"{len(model.library)} statecharts, {len(tables)} fault table(s): ok")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model, table = _load(args)
    outcomes = run_batch(_engine(model), table, args.seed, args.n, horizon=args.horizon,
                         workers=_workers(args))
    if args.out is not None:
        with open(args.out, "w", newline="") as fp:
            write_outcomes(outcomes, fp, args.format)
    summary = summarize_lifetime(outcomes).to_dict()
    summary.update(seed=args.seed, rng="philox4x64-10")
    sys.stdout.write(_dump(summary))
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.steps < 1:
        raise UsageError("chartrel fit: --steps must be at least 1")
    if args.samples is not None:
        with open(args.samples) as fp:
            outcomes = read_outcomes(fp)
    else:
        model, table = _load(args)
        outcomes = run_batch(_engine(model), table, args.seed, args.n, workers=_workers(args))
    times = np.array([o.failure_time for o in outcomes if not o.survived])
    fit = fit_weibull(times, n_steps=args.steps, learning_rate=args.lr, seed=args.seed)
    result = fit.to_dict()
    result["samples"] = int(times.size)
    with _output(args.out) as fp:
        _write_dict(result, fp, args.format)
    trace = args.trace or _sibling(args.out, ".elbo.csv")
    if trace is not None:
        with open(trace, "w", newline="") as fp:
            fp.write("step,elbo\n")
            for i, v in enumerate(fit.elbo_trace):
                fp.write(f"{i},{float(v)!r}\n")
    return EXIT_OK


def cmd_conditional(args) -> int:
    model, table = _load(args)
    mode = MODES.get(args.mode.lower(), args.mode)
    ws = conditional_lifetime(_engine(model), table, args.seed, mode, args.n,
                              workers=_workers(args))
    result = ws.summary().to_dict()
    result.update(condition=ws.condition, effective_sample_size=ws.effective_sample_size,
                  seed=args.seed, simulations=args.n)
    with _output(args.out) as fp:
        _write_dict(result, fp, args.format)
    hist_path = args.histogram or _sibling(args.out, ".hist.csv")
    if hist_path is not None:
        hist = export_histogram(ws.times, ws.weights, bin_count=args.bins)
        with open(hist_path, "w", newline="") as fp:
            hist.write_csv(fp)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    model, table = _load(args)
    res = sensitivity(_engine(model), table, args.seed, args.target, args.horizon, args.n,
                      workers=_workers(args))
    out = res.to_dict()
    out["seed"] = args.seed
    with _output(args.out) as fp:
        _write_dict(out, fp, args.format)
    return EXIT_OK


def cmd_bench(args) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        specs = [BenchmarkSpec.parse(s) for s in args.specs.split(",") if s.strip()]
    rows = run_benchmark(specs, n=args.n, seed=args.seed, repeats=args.repeats,
                         workers=_workers(args))
    print(format_table(rows))
    if args.out is not None:
        with open(args.out, "w", newline="") as fp:
            if args.format == "json":
                fp.write(_dump([r.to_dict() for r in rows]))
            else:
                keys = list(rows[0].to_dict())
                fp.write(",".join(keys) + "\n")
                for r in rows:
                    fp.write(",".join(str(v) for v in r.to_dict().values()) + "\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    model, table = _load(args)
    table = scale_rates(exponentialize(table), args.scale)
    engine = _engine(model)
    exact = solve_ctmc(build_ctmc(engine, table))
    outcomes = run_batch(engine, table, args.seed, args.n, workers=_workers(args))
    summary = summarize_lifetime(outcomes)
    checks = {"mttf": (summary.mean_ttf, summary.std_error, exact.mttf)}
    for mode, p in exact.probabilities.items():
        p_hat = summary.mode_split.get(mode, 0.0)
        checks[f"p[{mode}]"] = (p_hat, math.sqrt(max(p * (1 - p), 1e-300) / args.n), p)
        try:
            s = conditional_lifetime(engine, table, args.seed, mode, args.n,
                                     outcomes=outcomes).summary()
            checks[f"mttf[{mode}]"] = (s.mean_ttf, s.std_error, exact.conditional_mttf[mode])
        except ConditionNeverObserved:
            checks[f"mttf[{mode}]"] = (math.nan, math.nan, exact.conditional_mttf[mode])
    report = {}
    ok = True
    for name, (est, se, ref) in checks.items():
        z = (est - ref) / se if se > 0 else (0.0 if est == ref else math.inf)
        ok &= abs(z) <= 3
        report[name] = {"simulated": est, "std_error": se, "exact": ref, "z": z}
    report.update(scale=args.scale, seed=args.seed, n=args.n, within_3_se=bool(ok))
    with _output(args.out) as fp:
        _write_dict(report, fp, args.format)
    return EXIT_OK if ok else EXIT_INVALID


COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate, "fit": cmd_fit,
            "conditional": cmd_conditional, "sensitivity": cmd_sensitivity,
            "bench": cmd_bench, "oracle": cmd_oracle}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if hasattr(args, "format") and args.format is None:
            out = getattr(args, "out", None)
            args.format = "csv" if out is not None and out.suffix.lower() == ".csv" else "json"
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except ConditionNeverObserved as exc:
        print(exc, file=sys.stderr)
        return EXIT_NEVER_OBSERVED
    except ModelError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_INVALID
    except (FaultTableError, NonAbsorbingModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
