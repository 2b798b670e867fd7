"""End-to-end acceptance gate.

Each test covers one release criterion and prints a single
``[PASS]``/``[FAIL]`` line with the measured numbers before asserting.
"""

import time

import numpy as np
import pytest
from scipy.optimize import minimize

from fgadmm.cli import main
from fgadmm.engine import AdmmState, RunConfig, init_state, iterate, run
from fgadmm.graph import GraphBuilder
from fgadmm.operators import HalfPlane, LinearSystem, Quadratic
from fgadmm.problems import (
    MpcSpec,
    PackingSpec,
    SvmSpec,
    build_mpc,
    build_packing,
    build_svm,
    gen_gaussian_data,
    mpc_qp_solution,
    packing_init,
    pendulum_linearization,
    svm_accuracy,
    svm_objective,
)

from support import random_factor_case, reference_eval, two_quadratic_trace

LIBRARY_KINDS = (
    "collision", "wall", "radius", "mpc_cost", "mpc_dyn", "mpc_init",
    "svm_margin", "svm_slack", "svm_norm", "equality",
)


def _report(capsys, num, text, ok):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num}: {text}")


def test_criterion_1_closed_forms_match_reference_minimizer(capsys):
    start = time.perf_counter()
    worst = 0.0
    for kind in LIBRARY_KINDS:
        rng = np.random.default_rng(hash(kind) % 2**32)
        for _ in range(100):
            op, vals, rhos = random_factor_case(kind, rng)
            got = op.eval(vals, rhos)
            want = reference_eval(op, vals, rhos)
            err = max(float(np.max(np.abs(g - w)))
                      for g, w in zip(got, want))
            worst = max(worst, err)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 60.0
    _report(capsys, 1,
            f"10 operators x 100 random prox cases, worst error "
            f"{worst:.2e} (<= 1e-06), {elapsed:.1f}s (< 60s)", ok)
    assert ok


def test_criterion_2_packing_graph_counts_are_exact(capsys):
    square = (
        HalfPlane((1.0, 0.0), (0.0, 0.0)),
        HalfPlane((0.0, 1.0), (0.0, 0.0)),
        HalfPlane((-1.0, 0.0), (1.0, 0.0)),
        HalfPlane((0.0, -1.0), (0.0, 1.0)),
    )
    pentagon = tuple(
        HalfPlane((-np.cos(a), -np.sin(a)), (np.cos(a), np.sin(a)))
        for a in 2.0 * np.pi * np.arange(5) / 5.0
    )
    plane_sets = {3: None, 4: square, 5: pentagon}
    checked, ok = 0, True
    for s, planes in plane_sets.items():
        for n in range(1, 21):
            spec = PackingSpec(n) if planes is None \
                else PackingSpec(n, planes=planes)
            got = build_packing(spec).counts()
            want = (2 * n, n * (n - 1) // 2 + n + n * s,
                    2 * n * n - n + 2 * n * s)
            ok = ok and got == want
            checked += 1
    _report(capsys, 2,
            f"variable/factor/edge counts exact for N in 1..20, "
            f"S in {{3,4,5}} ({checked} graphs)", ok)
    assert ok


def test_criterion_3_five_phase_trace_and_consensus_limit(capsys):
    b = GraphBuilder()
    w = b.declare_variable(1)
    b.add_factor(Quadratic([[1.0]], [1.0]), [w])
    b.add_factor(Quadratic([[3.0]], [1.0]), [w])
    g = b.freeze()
    state = init_state(g)
    worst = 0.0
    for step in two_quadratic_trace(3):
        iterate(g, state)
        for name in ("x", "m", "u", "n"):
            got = getattr(state, name)
            want = np.array([float(v) for v in step[name]])
            worst = max(worst, float(np.max(np.abs(got - want))))
        worst = max(worst, abs(float(state.z[0]) - float(step["z"])))
    solution, _ = run(g, RunConfig(max_iterations=200))
    gap = abs(solution[0][0] - 2.0)
    ok = worst <= 1e-15 and gap <= 1e-6
    _report(capsys, 3,
            f"3 hand-traced iterations, worst phase error {worst:.1e} "
            f"(<= 1e-15); |z - 2| = {gap:.1e} after 200 iterations "
            f"(<= 1e-06)", ok)
    assert ok


def test_criterion_4_mpc_matches_dense_qp_solve(capsys):
    start = time.perf_counter()
    spec = MpcSpec(10, LinearSystem(*pendulum_linearization()),
                   np.array([0.0, 0.0, 0.1, 0.0]))
    g = build_mpc(spec)
    solution, report = run(g, RunConfig(
        max_iterations=100000, primal_tol=1e-9, dual_tol=1e-9))
    reference = mpc_qp_solution(spec)
    err = max(float(np.max(np.abs(a - b)))
              for a, b in zip(solution, reference))
    elapsed = time.perf_counter() - start
    ok = err <= 1e-4 and report.iterations <= 100000 and elapsed < 30.0
    _report(capsys, 4,
            f"K=10 cart-pole solution within {err:.2e} of the dense KKT "
            f"solve (<= 1e-04), {report.iterations} iterations "
            f"(<= 1e5), {elapsed:.1f}s (< 30s)", ok)
    assert ok


def _brute_force_svm(points, lam):
    """Direct multi-start simplex minimization of the primal objective."""
    dim = points[0].x.shape[0]

    def f(theta):
        return svm_objective(points, lam, theta[:dim], theta[dim])

    best = np.inf
    starts = [np.zeros(dim + 1), np.ones(dim + 1),
              np.array([1.0] * dim + [-1.0]), np.full(dim + 1, -0.5)]
    for x0 in starts:
        for _ in range(3):
            res = minimize(f, x0, method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-12,
                                    "maxiter": 20000, "maxfev": 40000})
            x0 = res.x
        best = min(best, float(res.fun))
    return best


def test_criterion_5_svm_objective_and_training_accuracy(capsys):
    points = gen_gaussian_data(12, 2, 4.0, seed=0)
    g = build_svm(SvmSpec(points, lam=1.0))
    solution, _ = run(g, RunConfig(
        max_iterations=60000, primal_tol=1e-10, dual_tol=1e-10))
    w, b = solution[0], float(solution[12][0])
    obj = svm_objective(points, 1.0, w, b)
    brute = _brute_force_svm(points, 1.0)
    rel = abs(obj - brute) / abs(brute)

    big = gen_gaussian_data(200, 2, 4.0, seed=0)
    g2 = build_svm(SvmSpec(big, lam=1.0))
    sol2, _ = run(g2, RunConfig(max_iterations=5000))
    acc = svm_accuracy(big, sol2[0], float(sol2[200][0]))
    ok = rel <= 1e-3 and acc >= 0.95
    _report(capsys, 5,
            f"N=12 objective within {rel:.2e} relative of brute force "
            f"(<= 1e-03); N=200 training accuracy {acc:.3f} (>= 0.95)", ok)
    assert ok


def test_criterion_6_packing_reaches_feasibility(capsys):
    spec = PackingSpec(10)
    g = build_packing(spec)
    state = packing_init(g, spec, seed=0)
    solution, report = run(g, RunConfig(
        max_iterations=50000, primal_tol=1e-12, dual_tol=1e-12), state=state)
    z = np.concatenate(solution)
    violation = g.constraint_violation(z)
    radii = [float(solution[2 * i + 1][0]) for i in range(10)]
    ok = violation <= 1e-3 and min(radii) > 0.0
    _report(capsys, 6,
            f"N=10 triangle packing: worst constraint violation "
            f"{violation:.2e} (<= 1e-03), min radius {min(radii):.4f} "
            f"(> 0), {report.iterations} of 50000 iterations", ok)
    assert ok


def _z_csv(graph, solution):
    lines = ["variable,component,value"]
    for v, vec in zip(graph.variables, solution):
        for j, val in enumerate(vec):
            lines.append(f"{v.id},{j},{repr(float(val))}")
    return "\n".join(lines) + "\n"


def test_criterion_7_solutions_identical_for_any_worker_count(
        capsys, tmp_path, monkeypatch):
    from fgadmm import engine
    # real threads even on a single-core machine
    monkeypatch.setattr(engine, "_THREAD_CAP", 8)
    pack_spec = PackingSpec(6)
    pack_graph = build_packing(pack_spec)
    pack_state = packing_init(pack_graph, pack_spec, seed=0)
    cases = [
        ("pack", pack_graph, pack_state),
        ("mpc", build_mpc(MpcSpec(8, LinearSystem(*pendulum_linearization()),
                                  np.array([0.0, 0.0, 0.1, 0.0]))), None),
        ("svm", build_svm(SvmSpec(gen_gaussian_data(12, 2, 4.0, seed=0))),
         None),
    ]
    ok = True
    for name, graph, state in cases:
        files = []
        for workers in (1, 2, 8):
            s = None if state is None else AdmmState(
                x=state.x.copy(), m=state.m.copy(), u=state.u.copy(),
                n=state.n.copy(), z=state.z.copy(), iteration=0)
            solution, _ = run(
                graph, RunConfig(max_iterations=300, workers=workers),
                state=s)
            path = tmp_path / f"{name}_w{workers}.csv"
            path.write_text(_z_csv(graph, solution))
            files.append(path.read_bytes())
        ok = ok and files[0] == files[1] == files[2]
    _report(capsys, 7,
            "byte-identical z CSV for workers in {1,2,8} on pack, mpc "
            "and svm", ok)
    assert ok


def test_criterion_8_more_workers_never_slower_per_iteration(
        capsys, tmp_path):
    out = tmp_path / "bench.csv"
    rc = main(["bench", "pack", "--n", "200", "--workers", "1,8",
               "--iters", "100", "--out", str(out)])
    lines = out.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = {int(r[2]): r for r in
            (line.split(",") for line in lines[1:])}
    phase_cols = [header.index(c) for c in
                  ("t_x", "t_m", "t_z", "t_u", "t_n")]
    tpi1 = float(rows[1][header.index("time_per_iter")])
    tpi8 = float(rows[8][header.index("time_per_iter")])
    phases_present = all(float(rows[8][c]) > 0.0 for c in phase_cols)
    ok = rc == 0 and tpi8 <= tpi1 and phases_present
    _report(capsys, 8,
            f"pack N=200, 100 iterations: 8-worker "
            f"{tpi8 * 1e3:.2f} ms/iter <= 1-worker "
            f"{tpi1 * 1e3:.2f} ms/iter; five-phase breakdown reported", ok)
    assert ok


def _median_tpi(graph, state, iterations, repeats=3):
    times = []
    for _ in range(repeats):
        s = None if state is None else AdmmState(
            x=state.x.copy(), m=state.m.copy(), u=state.u.copy(),
            n=state.n.copy(), z=state.z.copy(), iteration=0)
        t0 = time.perf_counter()
        run(graph, RunConfig(max_iterations=iterations), state=s)
        times.append((time.perf_counter() - t0) / iterations)
    return sorted(times)[len(times) // 2]


def test_criterion_9_time_per_iteration_tracks_edge_count(capsys):
    spec_a, spec_b = PackingSpec(70), PackingSpec(140)
    ga, gb = build_packing(spec_a), build_packing(spec_b)
    sa = packing_init(ga, spec_a, seed=0)
    sb = packing_init(gb, spec_b, seed=0)
    q0 = np.array([0.0, 0.0, 0.1, 0.0])
    system = LinearSystem(*pendulum_linearization())
    gma = build_mpc(MpcSpec(300, system, q0))
    gmb = build_mpc(MpcSpec(600, system, q0))
    for g, s in ((ga, sa), (gb, sb), (gma, None), (gmb, None)):
        _median_tpi(g, s, 10, repeats=1)  # warm caches and plans
    pack_ratio = _median_tpi(gb, sb, 80) / _median_tpi(ga, sa, 80)
    pack_pred = gb.counts()[2] / ga.counts()[2]
    mpc_ratio = _median_tpi(gmb, None, 60) / _median_tpi(gma, None, 60)
    mpc_pred = gmb.counts()[2] / gma.counts()[2]
    pack_ok = 0.5 * pack_pred <= pack_ratio <= 1.5 * pack_pred
    mpc_ok = 0.5 * mpc_pred <= mpc_ratio <= 1.5 * mpc_pred
    ok = pack_ok and mpc_ok
    _report(capsys, 9,
            f"time/iteration growth over one doubling: packing "
            f"{pack_ratio:.2f} vs edge ratio {pack_pred:.2f}, mpc "
            f"{mpc_ratio:.2f} vs {mpc_pred:.2f} (both within +/-50%)", ok)
    assert ok
