"""Problem generators: circle packing, finite-horizon control, soft-margin SVM.

Each builder emits a frozen factor graph wired from the operator
library, plus data helpers (Gaussian class samples, a cart-pole
linearization) and small direct solvers used to validate the iterative
results at desk scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .engine import init_state
from .graph import GraphBuilder
from .operators import (
    Collision,
    Equality,
    HalfPlane,
    LabeledPoint,
    LinearSystem,
    MpcCost,
    MpcDyn,
    MpcInit,
    Radius,
    SvmMargin,
    SvmNorm,
    SvmSlack,
    Wall,
)


def unit_triangle():
    """Half-planes of the triangle with vertices (0,0), (1,0), (0,1)."""
    return (
        HalfPlane((1.0, 0.0), (0.0, 0.0)),
        HalfPlane((0.0, 1.0), (0.0, 0.0)),
        HalfPlane((-1.0, -1.0), (1.0, 0.0)),
    )


@dataclass
class PackingSpec:
    """Pack ``n`` disks into the intersection of half-planes.

    ``rho_radius`` is the growth factor's edge weight and must exceed
    the area weight ``kappa`` for its prox to exist.
    """

    n: int
    planes: tuple = field(default_factory=unit_triangle)
    rho_radius: float = 5.0
    kappa: float = 0.5
    rho: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one disk")
        if not self.planes:
            raise ValueError("need at least one half-plane")
        if self.rho_radius <= self.kappa:
            raise ValueError("rho_radius must exceed kappa")
        if self.rho <= 0.0 or self.alpha <= 0.0:
            raise ValueError("rho and alpha must be positive")


@dataclass
class MpcSpec:
    """Finite-horizon control: ``horizon`` steps of a linear system.

    Diagonal stage costs default to identity; ``qf_diag`` applies at the
    final step.
    """

    horizon: int
    system: LinearSystem
    q0: np.ndarray
    q_diag: np.ndarray = None
    r_diag: np.ndarray = None
    qf_diag: np.ndarray = None
    rho: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.rho <= 0.0 or self.alpha <= 0.0:
            raise ValueError("rho and alpha must be positive")
        d, k = self.system.state_dim, self.system.control_dim
        self.q0 = np.atleast_1d(np.asarray(self.q0, dtype=float))
        if self.q0.shape != (d,):
            raise ValueError(f"q0 must have dim {d}")
        self.q_diag = np.ones(d) if self.q_diag is None \
            else np.atleast_1d(np.asarray(self.q_diag, dtype=float))
        self.r_diag = np.ones(k) if self.r_diag is None \
            else np.atleast_1d(np.asarray(self.r_diag, dtype=float))
        self.qf_diag = self.q_diag.copy() if self.qf_diag is None \
            else np.atleast_1d(np.asarray(self.qf_diag, dtype=float))
        if self.q_diag.shape != (d,) or self.qf_diag.shape != (d,):
            raise ValueError(f"state cost diagonals must have dim {d}")
        if self.r_diag.shape != (k,):
            raise ValueError(f"control cost diagonal must have dim {k}")


@dataclass
class SvmSpec:
    """Soft-margin linear classifier on labeled points, hinge weight lam."""

    points: list
    lam: float = 1.0
    rho: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if not self.points:
            raise ValueError("need at least one labeled point")
        if self.lam < 0.0:
            raise ValueError("lam must be nonnegative")
        if self.rho <= 0.0 or self.alpha <= 0.0:
            raise ValueError("rho and alpha must be positive")
        dims = {p.x.shape[0] for p in self.points}
        if len(dims) != 1:
            raise ValueError("all points must share one feature dimension")


def build_packing(spec):
    """Disks as (center, radius) variable pairs; no-overlap, growth and
    wall factors.  The growth factor's edge carries ``rho_radius``."""
    b = GraphBuilder()
    centers, radii = [], []
    for _ in range(spec.n):
        centers.append(b.declare_variable(2))
        radii.append(b.declare_variable(1))
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            b.add_factor(Collision(),
                         [centers[i], radii[i], centers[j], radii[j]],
                         rho=spec.rho, alpha=spec.alpha)
    for i in range(spec.n):
        b.add_factor(Radius(spec.kappa), [radii[i]],
                     rho=spec.rho_radius, alpha=spec.alpha)
    for i in range(spec.n):
        for plane in spec.planes:
            b.add_factor(Wall(plane), [centers[i], radii[i]],
                         rho=spec.rho, alpha=spec.alpha)
    return b.freeze()


def packing_init(graph, spec, seed=0, radius=0.01, min_separation=None):
    """Seeded start: centers drawn inside the region, radii small.

    Centers are rejection-sampled to keep pairwise distance at least
    ``min_separation`` (a density-based default when None).  Clumped
    starts let strong overlap corrections push a radius negative, where
    every constraint deactivates and the growth factor alone drives the
    iterate to overflow; spreading the centers avoids that regime.
    """
    rng = np.random.default_rng(seed)
    pts = np.stack([p.point for p in spec.planes])
    lo = pts.min(axis=0) - 1.0
    hi = pts.max(axis=0) + 1.0
    if min_separation is None:
        # Feasible area by Monte Carlo; anchor points alone do not span it.
        probe = rng.uniform(lo, hi, size=(512, 2))
        inside = np.ones(512, dtype=bool)
        for p in spec.planes:
            inside &= (probe - p.point) @ p.normal > 0.0
        area = float(np.prod(hi - lo)) * inside.mean()
        min_separation = 0.7 * np.sqrt(area / spec.n) if area > 0 else 0.0
    sep = float(min_separation)
    centers = []
    misses = 0
    while len(centers) < spec.n:
        cand = rng.uniform(lo, hi, size=2)
        clearance = min(p.margin(cand) for p in spec.planes)
        far = all(np.hypot(*(cand - c)) >= sep for c in centers)
        if clearance > 2.0 * radius and far:
            centers.append(cand)
            misses = 0
        else:
            misses += 1
            # Too dense for the requested spacing: relax and keep going.
            if misses > 200 * spec.n:
                if sep == 0.0:
                    raise RuntimeError(
                        "could not place disk centers inside the region")
                sep = sep * 0.5 if sep >= 1e-9 else 0.0
                misses = 0
    state = init_state(graph)
    for i, c in enumerate(centers):
        state.z[graph.variable_slice(2 * i)] = c
        state.z[graph.variable_slice(2 * i + 1)] = radius
    state.n[:] = state.z[graph.zmap]
    return state


def build_mpc(spec):
    """One (state, control) node per step; cost, dynamics and initial-state
    factors."""
    b = GraphBuilder()
    d, k = spec.system.state_dim, spec.system.control_dim
    nodes = [b.declare_variable(d + k) for _ in range(spec.horizon + 1)]
    for t in range(spec.horizon + 1):
        qdiag = spec.qf_diag if t == spec.horizon else spec.q_diag
        b.add_factor(MpcCost(qdiag, spec.r_diag), [nodes[t]],
                     rho=spec.rho, alpha=spec.alpha)
    for t in range(spec.horizon):
        b.add_factor(MpcDyn(spec.system), [nodes[t], nodes[t + 1]],
                     rho=spec.rho, alpha=spec.alpha)
    b.add_factor(MpcInit(spec.q0, k), [nodes[0]],
                 rho=spec.rho, alpha=spec.alpha)
    return b.freeze()


def build_svm(spec):
    """N weight copies chained by equality factors, one shared bias, one
    slack per point; ridge, hinge and margin factors."""
    b = GraphBuilder()
    n = len(spec.points)
    dim = spec.points[0].x.shape[0]
    w_vars = [b.declare_variable(dim) for _ in range(n)]
    b_var = b.declare_variable(1)
    xi_vars = [b.declare_variable(1) for _ in range(n)]
    for i in range(n):
        b.add_factor(SvmNorm(1.0 / n, dim), [w_vars[i]],
                     rho=spec.rho, alpha=spec.alpha)
    for i in range(n):
        b.add_factor(SvmSlack(spec.lam), [xi_vars[i]],
                     rho=spec.rho, alpha=spec.alpha)
    for i, p in enumerate(spec.points):
        b.add_factor(SvmMargin(p), [w_vars[i], b_var, xi_vars[i]],
                     rho=spec.rho, alpha=spec.alpha)
    for i in range(n - 1):
        b.add_factor(Equality(dim), [w_vars[i], w_vars[i + 1]],
                     rho=spec.rho, alpha=spec.alpha)
    return b.freeze()


def gen_gaussian_data(n, dim, separation, seed=0):
    """Two unit-covariance Gaussian clouds ``separation`` apart along the
    first axis; first half labeled -1, second half +1."""
    if n < 2:
        raise ValueError("need at least two points")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if separation < 0:
        raise ValueError("separation must be nonnegative")
    rng = np.random.default_rng(seed)
    half = separation / 2.0
    points = []
    n_neg = n // 2
    for _ in range(n_neg):
        x = rng.normal(size=dim)
        x[0] -= half
        points.append(LabeledPoint(x, -1))
    for _ in range(n - n_neg):
        x = rng.normal(size=dim)
        x[0] += half
        points.append(LabeledPoint(x, +1))
    return points


def pendulum_linearization(dt=0.040, cart_mass=1.0, pole_mass=0.1,
                           pole_length=1.0, gravity=9.8):
    """Cart-pole linearized about the upright equilibrium, sampled at
    ``dt`` by forward Euler, in increment form q(t+1) - q(t) = A q + B u.

    State (position, velocity, angle, angular velocity); control is the
    horizontal force on the cart.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    M, m, ell, g = cart_mass, pole_mass, pole_length, gravity
    A_c = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, -m * g / M, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, (M + m) * g / (M * ell), 0.0],
    ])
    B_c = np.array([[0.0], [1.0 / M], [0.0], [-1.0 / (M * ell)]])
    return dt * A_c, dt * B_c


def save_points(path, points):
    """Write labeled points as CSV with header x1,...,xd,y."""
    dim = points[0].x.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(dim)] + ["y"])
        for p in points:
            writer.writerow([repr(float(v)) for v in p.x] + [p.y])


def load_points(path):
    """Read labeled points from a CSV written by ``save_points``."""
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 1
        for row in reader:
            if not row:
                continue
            if len(row) != dim + 1:
                raise ValueError(f"row has {len(row)} fields, expected {dim + 1}")
            points.append(LabeledPoint([float(v) for v in row[:dim]],
                                       int(float(row[dim]))))
    return points


def mpc_qp_solution(spec):
    """Direct solve of the full-horizon control problem.

    Assembles the equality-constrained quadratic program over all
    (state, control) pairs and solves its optimality system with one
    dense linear solve.  Returns one (d+k) vector per step, matching
    the graph's variable order.
    """
    d, k = spec.system.state_dim, spec.system.control_dim
    K = spec.horizon
    nvar = (K + 1) * (d + k)
    diag = np.concatenate([
        np.concatenate([spec.qf_diag if t == K else spec.q_diag, spec.r_diag])
        for t in range(K + 1)
    ])
    H = np.diag(diag)
    ncon = d + K * d
    E = np.zeros((ncon, nvar))
    h = np.zeros(ncon)
    E[:d, :d] = np.eye(d)
    h[:d] = spec.q0
    IA = np.eye(d) + spec.system.A
    for t in range(K):
        r = d + t * d
        c = t * (d + k)
        E[r:r + d, c:c + d] = -IA
        E[r:r + d, c + d:c + d + k] = -spec.system.B
        E[r:r + d, c + d + k:c + 2 * d + k] = np.eye(d)
    kkt = np.block([[H, E.T], [E, np.zeros((ncon, ncon))]])
    rhs = np.concatenate([np.zeros(nvar), h])
    sol = np.linalg.solve(kkt, rhs)[:nvar]
    return [sol[t * (d + k):(t + 1) * (d + k)].copy() for t in range(K + 1)]


def _project_box_hyperplane(v, y, lam):
    """Project onto {0 <= a <= lam, y.a = 0} by bisection on the shift."""
    lo = -(lam + float(np.max(np.abs(v))) + 1.0)
    hi = -lo
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if y @ np.clip(v - mid * y, 0.0, lam) > 0.0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi) * y, 0.0, lam)


def svm_objective(points, lam, w, b):
    """Soft-margin objective of a classifier: ridge plus hinge losses."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    hinge = sum(max(0.0, 1.0 - p.y * (float(w @ p.x) + b)) for p in points)
    return 0.5 * float(w @ w) + lam * hinge


def svm_accuracy(points, w, b):
    """Fraction of points on their labeled side of the hyperplane."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    correct = sum(
        1 for p in points if (1 if float(w @ p.x) + b >= 0.0 else -1) == p.y
    )
    return correct / len(points)


def svm_qp_solution(points, lam, iterations=20000):
    """Direct soft-margin solve via the box-constrained dual.

    Accelerated projected gradient on the dual with exact projection
    onto the box-and-balance set; the bias is recovered from margin
    support vectors (or a breakpoint scan when none are strictly
    inside the box).  Returns a dict with w, b, xi, objective and the
    dual value.
    """
    X = np.stack([p.x for p in points])
    y = np.array([float(p.y) for p in points])
    G = (y[:, None] * X) @ (y[:, None] * X).T
    n = len(points)
    L = float(np.linalg.eigvalsh(G)[-1]) + 1e-12
    step = 1.0 / L
    a = np.zeros(n)
    v = a.copy()
    t_acc = 1.0
    for _ in range(iterations):
        grad = G @ v - 1.0
        a_next = _project_box_hyperplane(v - step * grad, y, lam)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        v = a_next + ((t_acc - 1.0) / t_next) * (a_next - a)
        moved = float(np.linalg.norm(a_next - a))
        a, t_acc = a_next, t_next
        if moved < 1e-14:
            break
    w = (a * y) @ X
    margin = 1e-8 * max(lam, 1.0)
    interior = (a > margin) & (a < lam - margin)
    if interior.any():
        b = float(np.mean(y[interior] - X[interior] @ w))
    else:
        candidates = y - X @ w
        objs = [svm_objective(points, lam, w, float(c)) for c in candidates]
        b = float(candidates[int(np.argmin(objs))])
    xi = np.maximum(0.0, 1.0 - y * (X @ w + b))
    dual = float(a.sum() - 0.5 * a @ G @ a)
    return {
        "w": w,
        "b": b,
        "xi": xi,
        "objective": svm_objective(points, lam, w, b),
        "dual": dual,
        "alpha": a,
    }
