"""Command-line front end: problem generators, generic runs, benchmarks.

Subcommands build an instance (``pack``, ``mpc``, ``svm``), solve a
serialized graph document (``run``), or time fixed-iteration runs over
size and worker sweeps (``bench``).  Exit codes: 0 success, 1 usage
error, 2 runtime failure.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .engine import RunConfig, run
from .graph import deserialize, serialize
from .operators import LinearSystem
from .problems import (
    MpcSpec,
    PackingSpec,
    SvmSpec,
    build_mpc,
    build_packing,
    build_svm,
    gen_gaussian_data,
    packing_init,
    pendulum_linearization,
    svm_accuracy,
)

BENCH_HEADER = ("problem,size,workers,iters,"
                "t_x,t_m,t_z,t_u,t_n,total,time_per_iter,speedup")


@dataclass
class BenchResult:
    """One timed cell of a benchmark sweep.

    Phase times are mean seconds per iteration; ``total_seconds`` is the
    wall time of the whole run; ``speedup`` is relative to the 1-worker
    cell of the same size.
    """

    problem: str
    size: int
    workers: int
    iterations: int
    phase_means: dict
    total_seconds: float
    speedup: float

    @property
    def time_per_iteration(self):
        return sum(self.phase_means.values())

    def csv_row(self):
        cells = [self.problem, str(self.size), str(self.workers),
                 str(self.iterations)]
        cells += [repr(float(self.phase_means[p]))
                  for p in ("x", "m", "z", "u", "n")]
        cells += [repr(float(self.total_seconds)),
                  repr(float(self.time_per_iteration)),
                  repr(float(self.speedup))]
        return ",".join(cells)


def bench_csv(results):
    """Render sweep results as CSV text."""
    return "\n".join([BENCH_HEADER] + [r.csv_row() for r in results]) + "\n"


class _Parser(argparse.ArgumentParser):
    """Parser whose usage failures exit with status 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _int_list(text):
    try:
        return [int(tok) for tok in text.split(",") if tok != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: "
                                         f"{text!r}")


def _default_workers():
    env = os.environ.get("FGADMM_WORKERS")
    if env is None:
        return 1
    try:
        return int(env)
    except ValueError:
        raise RuntimeError(f"FGADMM_WORKERS must be an integer, got {env!r}")


def _add_run_flags(p, iters):
    p.add_argument("--iters", type=int, default=iters,
                   help=f"iteration budget (default {iters})")
    p.add_argument("--tol", type=float, default=0.0,
                   help="stop when both residuals fall below this "
                        "(0 disables)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default $FGADMM_WORKERS or 1)")
    p.add_argument("--out", help="write the solution as JSON keyed by "
                                 "variable id")
    p.add_argument("--metrics", help="write per-iteration metrics CSV")
    p.add_argument("--graph-out", help="write the built graph document")


def _add_weight_flags(p):
    p.add_argument("--rho", type=float, default=1.0,
                   help="edge weight for generated factors (default 1)")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="relaxation step for generated factors (default 1)")


def _build_parser():
    parser = _Parser(prog="fgadmm",
                     description="Consensus ADMM on factor graphs")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("pack", help="disk packing in a half-plane region")
    p.add_argument("--n", type=int, default=10, help="number of disks")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the initial center placement")
    _add_weight_flags(p)
    _add_run_flags(p, iters=20000)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("mpc", help="finite-horizon cart-pole control")
    p.add_argument("--k", type=int, default=10, help="horizon length")
    _add_weight_flags(p)
    _add_run_flags(p, iters=20000)
    p.set_defaults(func=cmd_mpc)

    p = sub.add_parser("svm", help="soft-margin classifier on Gaussian data")
    p.add_argument("--n", type=int, default=100, help="number of points")
    p.add_argument("--dim", type=int, default=2, help="feature dimension")
    p.add_argument("--sep", type=float, default=4.0,
                   help="class separation along the first axis")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="hinge-loss weight")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the generated data")
    _add_weight_flags(p)
    _add_run_flags(p, iters=5000)
    p.set_defaults(func=cmd_svm)

    p = sub.add_parser("run", help="solve a serialized graph document")
    p.add_argument("--graph-in", required=True, help="graph document to load")
    p.add_argument("--seed", type=int, default=None,
                   help="random-init seed (default: start from zeros)")
    _add_run_flags(p, iters=1000)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench",
                       help="time fixed-iteration runs over size and "
                            "worker sweeps")
    p.add_argument("problem", choices=("pack", "mpc", "svm"))
    p.add_argument("--n", type=_int_list, default=None,
                   help="comma-separated sizes (pack disk counts or svm "
                        "point counts)")
    p.add_argument("--k", type=_int_list, default=None,
                   help="comma-separated mpc horizons")
    p.add_argument("--workers", type=_int_list, default=None,
                   help="comma-separated worker counts (default 1)")
    p.add_argument("--iters", type=int, default=100,
                   help="iteration budget per cell (default 100)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for pack placement / svm data")
    p.add_argument("--out", help="also write the sweep CSV to a file")
    p.set_defaults(func=cmd_bench)

    return parser


def _resolve_workers(args):
    return _default_workers() if args.workers is None else args.workers


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _solution_json(graph, solution):
    doc = {str(v.id): [float(x) for x in vec]
           for v, vec in zip(graph.variables, solution)}
    return json.dumps(doc, indent=1) + "\n"


def _execute(graph, args, state=None, seed=None):
    """Run the engine with the shared flags; write outputs; print the
    common summary lines.  Returns the solution vectors."""
    if args.graph_out:
        _write(args.graph_out, serialize(graph))
    config = RunConfig(max_iterations=args.iters,
                       primal_tol=args.tol, dual_tol=args.tol,
                       workers=_resolve_workers(args), seed=seed)
    solution, report = run(graph, config, state=state)
    if args.metrics:
        _write(args.metrics, report.metrics_csv())
    if args.out:
        _write(args.out, _solution_json(graph, solution))
    z = np.concatenate(solution)
    primal, dual = report.history[-1][6:8] if report.history else (
        float("nan"), float("nan"))
    print(f"iterations={report.iterations} "
          f"converged={'yes' if report.converged else 'no'} "
          f"workers={report.workers}")
    print(f"primal={primal:.6e} dual={dual:.6e}")
    print(f"objective={graph.objective_value(z):.9g} "
          f"violation={graph.constraint_violation(z):.3e}")
    return solution


def cmd_pack(args):
    spec = PackingSpec(args.n, rho=args.rho, alpha=args.alpha)
    graph = build_packing(spec)
    state = packing_init(graph, spec, seed=args.seed)
    print(f"problem=pack n={args.n}")
    solution = _execute(graph, args, state=state)
    radii = [float(solution[2 * i + 1][0]) for i in range(args.n)]
    print(f"min_radius={min(radii):.6g} max_radius={max(radii):.6g}")
    return 0


def _default_mpc_spec(k, rho=1.0, alpha=1.0):
    system = LinearSystem(*pendulum_linearization())
    q0 = np.array([0.0, 0.0, 0.1, 0.0])
    return MpcSpec(k, system, q0, rho=rho, alpha=alpha)


def cmd_mpc(args):
    spec = _default_mpc_spec(args.k, rho=args.rho, alpha=args.alpha)
    graph = build_mpc(spec)
    print(f"problem=mpc k={args.k}")
    _execute(graph, args)
    return 0


def cmd_svm(args):
    points = gen_gaussian_data(args.n, args.dim, args.sep, seed=args.seed)
    spec = SvmSpec(points, lam=args.lam, rho=args.rho, alpha=args.alpha)
    graph = build_svm(spec)
    print(f"problem=svm n={args.n} dim={args.dim} sep={args.sep}")
    solution = _execute(graph, args)
    w, b = solution[0], float(solution[args.n][0])
    print(f"accuracy={svm_accuracy(points, w, b):.4f}")
    return 0


def cmd_run(args):
    with open(args.graph_in) as fh:
        graph = deserialize(fh.read())
    print(f"problem=run graph={args.graph_in}")
    _execute(graph, args, seed=args.seed)
    return 0


def _bench_instance(problem, size, seed):
    """Same construction as the plain subcommands, so a bench cell and a
    plain run with identical settings solve the identical instance."""
    if problem == "pack":
        spec = PackingSpec(size)
        graph = build_packing(spec)
        return graph, packing_init(graph, spec, seed=seed)
    if problem == "mpc":
        return build_mpc(_default_mpc_spec(size)), None
    points = gen_gaussian_data(size, 2, 4.0, seed=seed)
    return build_svm(SvmSpec(points)), None


def cmd_bench(args):
    sizes = args.k if args.problem == "mpc" else args.n
    if args.k is not None and args.problem != "mpc":
        raise RuntimeError("--k sizes only apply to the mpc problem")
    if args.n is not None and args.problem == "mpc":
        raise RuntimeError("mpc sizes are given with --k")
    if sizes is None:
        raise RuntimeError("no sizes given (use --n for pack/svm, --k "
                           "for mpc)")
    worker_list = args.workers or [1]
    results = []
    for size in sizes:
        cells = []
        for workers in worker_list:
            graph, state = _bench_instance(args.problem, size, args.seed)
            config = RunConfig(max_iterations=args.iters, workers=workers)
            _, report = run(graph, config, state=state)
            cells.append(BenchResult(
                problem=args.problem, size=size, workers=workers,
                iterations=report.iterations,
                phase_means=report.mean_phase_seconds(),
                total_seconds=report.total_seconds, speedup=1.0))
        # Normalize to the 1-worker cell (first cell if none was run).
        base = next((c.time_per_iteration for c in cells if c.workers == 1),
                    cells[0].time_per_iteration)
        for c in cells:
            tpi = c.time_per_iteration
            c.speedup = base / tpi if tpi > 0 else float("nan")
        results.extend(cells)
    text = bench_csv(results)
    sys.stdout.write(text)
    if args.out:
        _write(args.out, text)
    return 0


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
