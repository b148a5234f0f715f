"""Command-line entry point: ``polymatch {solve,m3g,flow,train,bench,compare}``.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from contextlib import nullcontext
from dataclasses import fields

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from . import io
from .costs import CSD, circular_variance
from .errors import FormatError, NumericalError, ValidationError
from .experiments import bench as bench_mod
from .experiments.flow import PRESETS, TRAJECTORY_COLUMNS, FlowConfig, run_flow
from .experiments.train import SyntheticTrainConfig, run_compare, run_train
from .m3g import value_and_grad
from .solver import SolverConfig, mm_sinkhorn
from .tensor import set_max_elements

log = logging.getLogger("polymatch")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

EPILOG = """\
CSV outputs:
  flow   step,loss,delta,iters   (one row per state, step 0 is the start)
  bench  n,k,epsilon,iterations,wall_time,delta
  compare (when --out ends in .csv) loss,probe_accuracy,baseline_probe_accuracy,view_alignment,final_train_loss,steps

Every subcommand accepts --config FILE.json; keys are option names
(dashes or underscores) and explicit flags override file values.
Set POLYMATCH_THREADS to cap native worker threads.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def _add_solver_flags(p, epsilon=0.2):
    p.add_argument("--epsilon", type=float, default=epsilon, help="entropic regularization (default %(default)s)")
    p.add_argument("--tol", type=float, default=1e-3, help="marginal-deviation tolerance (default %(default)s)")
    p.add_argument("--max-iters", type=int, default=1000, help="sweep budget (default %(default)s)")


def _add_train_flags(p):
    defaults = SyntheticTrainConfig()
    for f in fields(SyntheticTrainConfig):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        value = getattr(defaults, f.name)
        p.add_argument(flag, type=type(value), default=value, help=f"(default {value})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="polymatch",
        description="Multi-marginal Sinkhorn and matching-gap loss tools.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path (stdout when omitted)")
        return p

    p = add("solve", "solve entropic MM-OT for a PMT1 cost tensor")
    p.add_argument("--cost-file", help="PMT1 cost tensor (required)")
    _add_solver_flags(p)
    p.add_argument("--check-every", type=int, default=1)
    p.add_argument("--coupling", help="write the coupling as PMT1")

    p = add("m3g", "matching-gap loss of a PME1 embedding batch")
    p.add_argument("--embeddings", help="PME1 embedding batch (required)")
    _add_solver_flags(p)
    p.add_argument("--cost", choices=("cv", "csd"), default="cv")
    p.add_argument("--cv-coefficient", choices=("mean", "printed"), default="mean")
    p.add_argument("--grad", help="write the gradient as PME1")

    p = add("flow", "projected gradient flow on toy embeddings (CSV trajectory)")
    p.add_argument("--preset", choices=PRESETS, default="paper_fig1")
    for name in ("n", "k", "d"):
        p.add_argument(f"--{name}", type=int, default=getattr(FlowConfig, name))
    p.add_argument("--epsilon", type=float, default=FlowConfig.epsilon)
    p.add_argument("--cost", choices=("cv", "csd"), default="cv")
    p.add_argument("--step-size", type=float, default=FlowConfig.step_size)
    p.add_argument("--steps", type=int, default=FlowConfig.steps)
    p.add_argument("--tol", type=float, default=FlowConfig.tol)
    p.add_argument("--max-iters", type=int, default=FlowConfig.max_iters)
    p.add_argument("--final", help="write the final embeddings as PME1")

    p = add("train", "train the toy encoder on synthetic clusters (JSON metrics)")
    _add_train_flags(p)

    p = add("compare", "train one encoder per loss at an identical budget")
    _add_train_flags(p)
    p.add_argument("--losses", default="m3g,infonce_pwe,infonce_ave,byol_pwe,byol_ave")

    p = add("bench", "time cost tensor + solve over an (n, k, epsilon) grid (CSV)")
    p.add_argument("--ns", type=_ints, default=list(bench_mod.DEFAULT_NS))
    p.add_argument("--ks", type=_ints, default=list(bench_mod.DEFAULT_KS))
    p.add_argument("--epsilons", type=_floats, default=list(bench_mod.DEFAULT_EPSILONS))
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--max-elements", type=int, default=2**24, help="skip cells with n**k above this")
    p.add_argument("--crosscheck", action="store_true", help="also compare n=8, k=2 against classical Sinkhorn")
    return parser


def _load_config(path, subparser_dests):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"--config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"--config: {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError("--config: top-level JSON value must be an object")
    out = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in subparser_dests or dest == "config":
            raise ValidationError(f"--config: unknown option {key!r}")
        out[dest] = value
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        sub.set_defaults(**_load_config(args.config, dests))
        args = parser.parse_args(argv)
    return args


def _emit_json(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _writer(out):
    return open(out, "w", newline="") if out else nullcontext(sys.stdout)


def _require(args, name):
    value = getattr(args, name)
    if value is None:
        raise ValidationError(f"--{name.replace('_', '-')} is required (flag or config key)")
    return value


def cmd_solve(args):
    C = io.load_tensor(_require(args, "cost_file"))
    config = SolverConfig(args.epsilon, args.tol, args.max_iters, args.check_every)
    report = mm_sinkhorn(C, config)
    if not np.isfinite(report.ot_value):
        raise NumericalError("solver produced a non-finite OT value")
    if args.coupling:
        io.save_tensor(args.coupling, report.coupling)
    _emit_json(
        {
            "ot_value": report.ot_value,
            "iterations": report.iterations,
            "delta": report.marginal_deviation,
            "converged": report.converged,
            "primal_value": report.primal_value,
            "n": C.shape[0],
            "k": C.ndim,
        },
        args.out,
    )


def cmd_m3g(args):
    X = io.load_embeddings(_require(args, "embeddings"))
    cost = CSD if args.cost == "csd" else circular_variance(args.cv_coefficient)
    config = SolverConfig(epsilon=args.epsilon, tolerance=args.tol, max_iterations=args.max_iters)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        result, grad = value_and_grad(X, cost, config)
    if not (np.isfinite(result.loss) and np.isfinite(grad).all()):
        raise NumericalError("matching gap or its gradient is non-finite")
    if args.grad:
        io.save_embeddings(args.grad, grad)
    d = result.diagnostics
    _emit_json(
        {
            "loss": result.loss,
            "ot_value": result.ot_value,
            "ground_truth_cost": result.ground_truth_cost,
            "iterations": d["iterations"],
            "delta": d["delta"],
            "converged": d["converged"],
            "clamped": d["clamped"],
        },
        args.out,
    )


def cmd_flow(args):
    cfg = FlowConfig(
        n=args.n,
        k=args.k,
        d=args.d,
        epsilon=args.epsilon,
        cost=args.cost,
        step_size=args.step_size,
        steps=args.steps,
        seed=args.seed,
        init=args.preset,
        tol=args.tol,
        max_iters=args.max_iters,
    )
    try:
        result = run_flow(cfg)
    except NumericalError as exc:
        log.error("last finite state:\n%s", np.array2string(exc.state, precision=17))
        raise
    with _writer(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in result.trajectory:
            w.writerow([row["step"], repr(row["loss"]), repr(row["delta"]), row["iters"]])
    if args.final:
        io.save_embeddings(args.final, result.embeddings)


def _train_config(args, **extra):
    values = {f.name: getattr(args, f.name) for f in fields(SyntheticTrainConfig)}
    values.update(extra)
    return SyntheticTrainConfig(**values)


def cmd_train(args):
    metrics = run_train(_train_config(args))
    if not np.isfinite(metrics["final_train_loss"]) and metrics["steps"]:
        raise NumericalError("training loss is non-finite")
    _emit_json(metrics, args.out)


def cmd_compare(args):
    losses = [x for x in args.losses.split(",") if x]
    rows = run_compare(_train_config(args), losses)
    if args.out and args.out.endswith(".csv"):
        cols = ("loss", "probe_accuracy", "baseline_probe_accuracy", "view_alignment", "final_train_loss", "steps")
        with _writer(args.out) as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    else:
        _emit_json(rows, args.out)


def cmd_bench(args):
    previous = set_max_elements(max(args.max_elements, 1))
    sink = bench_mod.CsvSink(args.out) if args.out else None
    try:
        if sink is None:
            w = csv.DictWriter(sys.stdout, fieldnames=bench_mod.BENCH_COLUMNS, lineterminator="\n")
            w.writeheader()
            emit = lambda rec: w.writerow(bench_mod._row(rec))  # noqa: E731
        else:
            emit = sink
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            _, violations = bench_mod.run_bench(
                args.ns, args.ks, args.epsilons, d=args.d, seed=args.seed, tol=args.tol,
                max_iters=args.max_iters, max_elements=args.max_elements, sink=emit,
            )
    finally:
        if sink is not None:
            sink.close()
        set_max_elements(previous)
    if args.crosscheck:
        check = bench_mod.crosscheck_two_marginal(seed=args.seed)
        print(json.dumps(check, sort_keys=True), file=sys.stderr)
        if check["coupling_max_abs_diff"] > 1e-6:
            raise NumericalError(f"two-marginal cross-check failed: {check}")
    if violations:
        raise NumericalError(f"iteration count not monotone in epsilon for cells {violations}")


COMMANDS = {
    "solve": cmd_solve,
    "m3g": cmd_m3g,
    "flow": cmd_flow,
    "train": cmd_train,
    "compare": cmd_compare,
    "bench": cmd_bench,
}


def _thread_limits():
    value = os.environ.get("POLYMATCH_THREADS")
    if not value:
        return nullcontext()
    try:
        limit = int(value)
    except ValueError:
        raise ValidationError(f"POLYMATCH_THREADS must be an integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=limit)


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        with _thread_limits():
            COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
