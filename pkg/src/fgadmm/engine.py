"""Five-phase consensus iteration over a frozen factor graph.

One iteration applies, in order: the per-factor prox update (x), the
message update (m = x + u), the weighted consensus average (z), the
dual step (u += alpha (x - z)) and the incoming-signal update
(n = z - u).  Phases are data-parallel: elements are partitioned into
contiguous ranges, one range per worker lane, with a barrier between
phases.  Lanes execute on at most the machine's core count of threads;
surplus lanes still pay off serially because each lane's batch stays
cache-resident.  The consensus sum runs in incident-edge creation
order regardless of the lane count, so results are bit-identical for
any number of workers.
"""

from __future__ import annotations

import os
import threading
import weakref
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

PHASES = ("x", "m", "z", "u", "n")

METRICS_HEADER = "iter,t_x,t_m,t_z,t_u,t_n,primal,dual"


@dataclass
class AdmmState:
    """The five working arrays plus progress counters.

    ``x``, ``m``, ``u``, ``n`` are flat edge-payload arrays in
    edge-creation order; ``z`` is the consensus vector in variable
    order.
    """

    x: np.ndarray
    m: np.ndarray
    z: np.ndarray
    u: np.ndarray
    n: np.ndarray
    iteration: int = 0
    last_residuals: tuple | None = None


@dataclass
class RunConfig:
    """Iteration budget, stopping tolerances and execution settings.

    A tolerance of 0 disables that residual check; with both disabled
    the run uses the full iteration budget.  ``workers`` sets the
    number of data-parallel lanes; at most the core count of threads
    execute them.  ``seed`` of None starts from zeros, an integer seed
    draws z and u uniformly from [-0.5, 0.5].
    """

    max_iterations: int
    primal_tol: float = 0.0
    dual_tol: float = 0.0
    workers: int = 1
    record_every: int = 1
    seed: int | None = None


@dataclass
class RunReport:
    """Execution record: wall times per phase and residual history."""

    iterations: int
    converged: bool
    workers: int
    phase_seconds: dict
    history: list = field(default_factory=list)
    total_seconds: float = 0.0

    def mean_phase_seconds(self):
        """Mean seconds per iteration for each of the five phases."""
        it = max(self.iterations, 1)
        return {k: v / it for k, v in self.phase_seconds.items()}

    def time_per_iteration(self):
        """Mean seconds per iteration spent inside the five phases."""
        return sum(self.phase_seconds.values()) / max(self.iterations, 1)

    def metrics_csv(self):
        """Render the recorded history as CSV text."""
        lines = [METRICS_HEADER]
        for row in self.history:
            it, tx, tm, tz, tu, tn, primal, dual = row
            lines.append(",".join(
                [str(int(it))] + [repr(float(v)) for v in
                                  (tx, tm, tz, tu, tn, primal, dual)]
            ))
        return "\n".join(lines) + "\n"


def init_state(graph, seed=None):
    """Fresh state: zeros, or a seeded uniform draw of z and u."""
    P = graph.total_edge_payload
    if seed is None:
        z = np.zeros(graph.z_dim)
        u = np.zeros(P)
    else:
        rng = np.random.default_rng(seed)
        z = rng.uniform(-0.5, 0.5, graph.z_dim)
        u = rng.uniform(-0.5, 0.5, P)
    n = z[graph.zmap] - u
    return AdmmState(x=np.zeros(P), m=np.zeros(P), z=z, u=u, n=n)


class _Group:
    """Factors sharing one operator signature, stacked for batch eval."""

    def __init__(self, graph, cls, members):
        self.cls = cls
        self.kind = members[0].operator.kind
        self.factor_ids = np.array([f.id for f in members], dtype=np.int64)
        self.params = cls.stack_params([f.operator for f in members])
        dims = members[0].operator.slot_dims()
        first = np.array([f.edge_range[0] for f in members], dtype=np.int64)
        self.slot_idx = []
        self.slot_edge = []
        for j, d in enumerate(dims):
            edges = first + j
            starts = graph.edge_offsets[edges]
            self.slot_idx.append(starts[:, None] + np.arange(d, dtype=np.int64))
            self.slot_edge.append(edges)

    def _params_slice(self, lo, hi):
        out = {}
        for key, value in self.params.items():
            if isinstance(value, list):
                out[key] = [v[lo:hi] for v in value]
            else:
                out[key] = value[lo:hi]
        return out

    def eval_slice(self, graph, n, x, lo, hi):
        values = [n[idx[lo:hi]] for idx in self.slot_idx]
        rhos = [graph.edge_rho[e[lo:hi]] for e in self.slot_edge]
        try:
            out = self.cls.batch_eval(self._params_slice(lo, hi), values, rhos)
        except Exception as exc:
            raise RuntimeError(
                f"prox evaluation failed for factor "
                f"{self._blame(graph, n, lo, hi)} (kind '{self.kind}'): {exc}"
            ) from exc
        for idx, o in zip(self.slot_idx, out):
            x[idx[lo:hi]] = o

    def _blame(self, graph, n, lo, hi):
        """Identify the first failing factor in a slice, for diagnostics."""
        for i in range(lo, hi):
            fid = int(self.factor_ids[i])
            values = [n[idx[i]] for idx in self.slot_idx]
            rhos = [float(graph.edge_rho[e[i]]) for e in self.slot_edge]
            try:
                graph.factors[fid].operator.eval(values, rhos)
            except Exception:
                return fid
        return int(self.factor_ids[lo])


class _GraphOps:
    """Per-graph precomputation shared by all worker plans."""

    def __init__(self, graph):
        self.groups = []
        order = {}
        buckets = []
        for f in graph.factors:
            key = (f.operator.kind, f.operator.slot_dims())
            if key not in order:
                order[key] = len(buckets)
                buckets.append([])
            buckets[order[key]].append(f)
        for members in buckets:
            cls = type(members[0].operator)
            self.groups.append(_Group(graph, cls, members))

        # consensus sum order: stable sort keeps incident-edge creation
        # order inside every z segment
        self.z_order = np.argsort(graph.zmap, kind="stable")
        sorted_z = graph.zmap[self.z_order]
        self.z_ptr = np.searchsorted(
            sorted_z, np.arange(graph.z_dim + 1, dtype=np.int64), side="left"
        )


_OPS_CACHE = weakref.WeakKeyDictionary()
_PLAN_CACHE = weakref.WeakKeyDictionary()


def _graph_ops(graph):
    ops = _OPS_CACHE.get(graph)
    if ops is None:
        ops = _GraphOps(graph)
        _OPS_CACHE[graph] = ops
    return ops


def _plan(graph, workers):
    plans = _PLAN_CACHE.setdefault(graph, {})
    plan = plans.get(workers)
    if plan is None:
        plan = _Plan(graph, _graph_ops(graph), workers)
        plans[workers] = plan
    return plan


class _Plan:
    """Contiguous per-worker ranges for each phase of one graph."""

    def __init__(self, graph, ops, workers):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.graph = graph
        self.ops = ops
        self.workers = workers
        P = graph.total_edge_payload

        targets = [(P * k) // workers for k in range(workers + 1)]
        self.edge_bounds = [(targets[w], targets[w + 1]) for w in range(workers)]

        factor_start = graph.edge_offsets[
            np.array([f.edge_range[0] for f in graph.factors], dtype=np.int64)
        ]
        fb = np.searchsorted(factor_start, targets, side="left")
        fb[0], fb[-1] = 0, len(graph.factors)
        fb = np.maximum.accumulate(fb)

        zb = np.searchsorted(ops.z_ptr, targets, side="left")
        zb[0], zb[-1] = 0, graph.z_dim
        zb = np.maximum.accumulate(np.minimum(zb, graph.z_dim))
        self.z_bounds = [(int(zb[w]), int(zb[w + 1])) for w in range(workers)]

        self.x_slices = []
        for w in range(workers):
            lo_f, hi_f = int(fb[w]), int(fb[w + 1])
            slices = []
            for g, group in enumerate(ops.groups):
                lo = int(np.searchsorted(group.factor_ids, lo_f, side="left"))
                hi = int(np.searchsorted(group.factor_ids, hi_f, side="left"))
                if hi > lo:
                    slices.append((g, lo, hi))
            self.x_slices.append(slices)

        self.zmap_chunks = [
            graph.zmap[lo:hi] for lo, hi in self.edge_bounds
        ]
        self._scratch = np.empty(P)
        self._zvals = np.empty(P)
        self._zrho = np.empty(P)

    def phase_x(self, state, w):
        for g, lo, hi in self.x_slices[w]:
            self.ops.groups[g].eval_slice(
                self.graph, state.n, state.x, lo, hi
            )

    def phase_m(self, state, w):
        lo, hi = self.edge_bounds[w]
        np.add(state.x[lo:hi], state.u[lo:hi], out=state.m[lo:hi])

    def phase_z(self, state, w):
        zlo, zhi = self.z_bounds[w]
        if zhi <= zlo:
            return
        ptr = self.ops.z_ptr
        base, top = int(ptr[zlo]), int(ptr[zhi])
        idx = self.ops.z_order[base:top]
        vals = self._zvals[base:top]
        rho = self._zrho[base:top]
        np.take(state.m, idx, out=vals)
        np.take(self.graph.rho_flat, idx, out=rho)
        np.multiply(vals, rho, out=vals)
        sums = np.add.reduceat(vals, ptr[zlo:zhi] - base)
        np.divide(sums, self.graph.z_weights[zlo:zhi], out=state.z[zlo:zhi])

    def phase_u(self, state, w):
        lo, hi = self.edge_bounds[w]
        if hi <= lo:
            return
        buf = self._scratch[lo:hi]
        np.take(state.z, self.zmap_chunks[w], out=buf)
        np.subtract(state.x[lo:hi], buf, out=buf)
        np.multiply(buf, self.graph.alpha_flat[lo:hi], out=buf)
        np.add(state.u[lo:hi], buf, out=state.u[lo:hi])

    def phase_n(self, state, w):
        lo, hi = self.edge_bounds[w]
        if hi <= lo:
            return
        out = state.n[lo:hi]
        np.take(state.z, self.zmap_chunks[w], out=out)
        np.subtract(out, state.u[lo:hi], out=out)

    def phase(self, name, state, w):
        getattr(self, f"phase_{name}")(state, w)

    def phase_block(self, name, state, block, nblocks):
        """Run one phase over a contiguous block of lanes."""
        fn = getattr(self, f"phase_{name}")
        lo = (self.workers * block) // nblocks
        hi = (self.workers * (block + 1)) // nblocks
        for w in range(lo, hi):
            fn(state, w)


# Thread-count override used by tests; None means the machine's cores.
_THREAD_CAP = None


def _available_threads():
    cap = _THREAD_CAP
    if cap is None:
        cap = os.cpu_count() or 1
    return max(1, int(cap))


def _check_state(graph, state):
    P = graph.total_edge_payload
    for name in ("x", "m", "u", "n"):
        arr = getattr(state, name)
        if arr.shape != (P,):
            raise ValueError(f"state.{name} must have shape ({P},)")
    if state.z.shape != (graph.z_dim,):
        raise ValueError(f"state.z must have shape ({graph.z_dim},)")


def _check_finite(graph, state, phase, iteration):
    arr = state.z if phase == "z" else getattr(state, phase)
    if np.isfinite(arr).all():
        return
    bad = int(np.nonzero(~np.isfinite(arr))[0][0])
    if phase == "z":
        v = int(np.searchsorted(graph.var_offsets, bad, side="right") - 1)
        raise RuntimeError(
            f"non-finite value after z update at iteration {iteration}: "
            f"variable {v}"
        )
    e = int(np.searchsorted(graph.edge_offsets, bad, side="right") - 1)
    f = int(graph.edge_factor[e])
    kind = graph.factors[f].operator.kind
    raise RuntimeError(
        f"non-finite value after {phase} update at iteration {iteration}: "
        f"edge {e} of factor {f} (kind '{kind}')"
    )


def update_x(graph, state):
    """Per factor, write the prox of its incoming n values into x."""
    _check_state(graph, state)
    _plan(graph, 1).phase_x(state, 0)
    _check_finite(graph, state, "x", state.iteration)


def update_m(graph, state):
    """Per edge, m = x + u."""
    _check_state(graph, state)
    _plan(graph, 1).phase_m(state, 0)
    _check_finite(graph, state, "m", state.iteration)


def update_z(graph, state):
    """Per variable, z = weighted average of incident m values."""
    _check_state(graph, state)
    _plan(graph, 1).phase_z(state, 0)
    _check_finite(graph, state, "z", state.iteration)


def update_u(graph, state):
    """Per edge, u += alpha (x - z)."""
    _check_state(graph, state)
    _plan(graph, 1).phase_u(state, 0)
    _check_finite(graph, state, "u", state.iteration)


def update_n(graph, state):
    """Per edge, n = z - u."""
    _check_state(graph, state)
    _plan(graph, 1).phase_n(state, 0)
    _check_finite(graph, state, "n", state.iteration)


def iterate(graph, state):
    """Apply the five updates in order and advance the counter."""
    update_x(graph, state)
    update_m(graph, state)
    update_z(graph, state)
    update_u(graph, state)
    update_n(graph, state)
    state.iteration += 1


def residuals(graph, state, z_prev):
    """Size-normalized consensus disagreement and weighted z change."""
    P = graph.total_edge_payload
    scale = 1.0 / np.sqrt(P)
    primal = np.linalg.norm(state.x - state.z[graph.zmap]) * scale
    dual = np.linalg.norm(
        graph.rho_flat * (state.z - z_prev)[graph.zmap]
    ) * scale
    return float(primal), float(dual)


class _Pool:
    """Persistent worker threads with a barrier before and after each phase."""

    def __init__(self, workers):
        self._n = workers
        self._go = threading.Barrier(workers + 1)
        self._done = threading.Barrier(workers + 1)
        self._fn = None
        self._stop = False
        self._errors = [None] * workers
        self._threads = [
            threading.Thread(target=self._loop, args=(w,), daemon=True)
            for w in range(workers)
        ]
        for t in self._threads:
            t.start()

    def _loop(self, w):
        while True:
            self._go.wait()
            if self._stop:
                return
            try:
                self._fn(w)
            except BaseException as exc:  # propagated to the caller
                self._errors[w] = exc
            self._done.wait()

    def run(self, fn):
        self._fn = fn
        self._go.wait()
        self._done.wait()
        for w in range(self._n):
            exc = self._errors[w]
            if exc is not None:
                self._errors = [None] * self._n
                raise exc

    def close(self):
        self._stop = True
        self._go.wait()
        for t in self._threads:
            t.join(timeout=5.0)


def run(graph, config, state=None):
    """Iterate to the budget or tolerances; return (solution, report).

    The solution is the consensus vector unpacked per variable.  The
    report carries per-phase wall times, residual history at the
    ``record_every`` stride and the executed iteration count.
    """
    if config.max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    if config.workers < 1:
        raise ValueError("workers must be >= 1")
    if config.record_every < 1:
        raise ValueError("record_every must be >= 1")
    plan = _plan(graph, config.workers)
    if state is None:
        state = init_state(graph, config.seed)
    else:
        _check_state(graph, state)

    tol_check = config.primal_tol > 0.0 or config.dual_tol > 0.0
    z_prev = np.empty_like(state.z)
    phase_totals = dict.fromkeys(PHASES, 0.0)
    history = []
    executed = 0
    converged = False
    threads = min(config.workers, _available_threads())
    pool = _Pool(threads) if threads > 1 else None
    start = perf_counter()
    try:
        for it in range(1, config.max_iterations + 1):
            record = (it % config.record_every == 0) \
                or it == config.max_iterations
            need_res = tol_check or record
            if need_res:
                np.copyto(z_prev, state.z)
            times = []
            for name in PHASES:
                fn = plan.phase_block
                t0 = perf_counter()
                if pool is not None:
                    pool.run(
                        lambda t, name=name: fn(name, state, t, threads))
                else:
                    fn(name, state, 0, 1)
                t1 = perf_counter()
                times.append(t1 - t0)
                phase_totals[name] += t1 - t0
                _check_finite(graph, state, name, it)
            state.iteration += 1
            executed += 1
            if need_res:
                primal, dual = residuals(graph, state, z_prev)
                state.last_residuals = (primal, dual)
                checks = []
                if config.primal_tol > 0.0:
                    checks.append(primal <= config.primal_tol)
                if config.dual_tol > 0.0:
                    checks.append(dual <= config.dual_tol)
                converged = bool(checks) and all(checks)
                if record or converged:
                    history.append((state.iteration, *times, primal, dual))
                if converged:
                    break
    finally:
        if pool is not None:
            pool.close()
    total = perf_counter() - start
    solution = [state.z[graph.variable_slice(v.id)].copy()
                for v in graph.variables]
    report = RunReport(
        iterations=executed,
        converged=converged,
        workers=config.workers,
        phase_seconds=phase_totals,
        history=history,
        total_seconds=total,
    )
    return solution, report
