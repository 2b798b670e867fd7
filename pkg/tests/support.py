"""Shared helpers for the test suite.

Independent projections and objective callables used to drive
``prox_reference`` against each closed-form operator, plus an exact
rational mirror of the five-phase iteration on the two-target scalar
consensus instance.
"""

from fractions import Fraction

import numpy as np

from fgadmm.prox import prox_reference


def two_quadratic_trace(iterations):
    """Exact per-phase values for two scalar quadratic factors.

    The instance couples factors with targets 1 and 3 (unit curvature,
    unit edge weights) through one scalar variable; every quantity stays
    a dyadic rational, so float arithmetic reproduces it exactly.
    Returns one dict per iteration with Fraction entries for the five
    phases.
    """
    half = Fraction(1, 2)
    targets = (Fraction(1), Fraction(3))
    u = [Fraction(0), Fraction(0)]
    n = [Fraction(0), Fraction(0)]
    trace = []
    for _ in range(iterations):
        x = [(t + nj) * half for t, nj in zip(targets, n)]
        m = [xj + uj for xj, uj in zip(x, u)]
        z = (m[0] + m[1]) * half
        u = [uj + (xj - z) for uj, xj in zip(u, x)]
        n = [z - uj for uj in u]
        trace.append({"x": x, "m": m, "z": z, "u": list(u), "n": list(n)})
    return trace


def proj_halfspace(normal, offset):
    """Projection onto ``{v : normal . v >= offset}`` for stacked rows."""
    normal = np.asarray(normal, dtype=float)
    step = normal / float(normal @ normal)

    def proj(S):
        gap = offset - S @ normal
        return S + np.maximum(gap, 0.0)[:, None] * step

    return proj


def proj_nullspace(M):
    """Projection onto ``{v : M v = 0}`` for stacked rows."""
    M = np.asarray(M, dtype=float)
    P = np.eye(M.shape[1]) - M.T @ np.linalg.solve(M @ M.T, M)

    def proj(S):
        return S @ P

    return proj


def proj_fix(idx, vals):
    """Projection pinning the listed coordinates to fixed values."""
    idx = np.asarray(idx, dtype=int)
    vals = np.asarray(vals, dtype=float)

    def proj(S):
        out = S.copy()
        out[:, idx] = vals
        return out

    return proj


def proj_nonneg(idx):
    """Projection clamping the listed coordinates at zero."""
    idx = np.asarray(idx, dtype=int)

    def proj(S):
        out = S.copy()
        out[:, idx] = np.maximum(out[:, idx], 0.0)
        return out

    return proj


def proj_disk_separation(S):
    """Euclidean projection onto ``||c1 - c2|| >= r1 + r2``.

    Derived through cone geometry: the orthonormal change of variables
    p = (c1-c2)/sqrt2, b = (r1+r2)/sqrt2 turns the set into the
    complement of the Lorentz cone ``||p|| <= b``, whose boundary
    projection is p -> t p/||p||, b -> t with t = (||p|| + b)/2.
    Rows layout: (c1, r1, c2, r2) flattened to six columns.
    """
    sqrt2 = np.sqrt(2.0)
    c1, r1, c2, r2 = S[:, 0:2], S[:, 2], S[:, 3:5], S[:, 5]
    p = (c1 - c2) / sqrt2
    q = (c1 + c2) / sqrt2
    a = (r1 - r2) / sqrt2
    b = (r1 + r2) / sqrt2
    pn = np.linalg.norm(p, axis=1)
    inside = pn < b
    t = 0.5 * (pn + b)
    dirp = np.where(pn[:, None] > 0.0,
                    p / np.maximum(pn, 1e-300)[:, None],
                    np.array([1.0, 0.0]))
    p_new = np.where(inside[:, None], t[:, None] * dirp, p)
    b_new = np.where(inside, t, b)
    out = np.empty_like(S)
    out[:, 0:2] = (p_new + q) / sqrt2
    out[:, 3:5] = (q - p_new) / sqrt2
    out[:, 2] = (a + b_new) / sqrt2
    out[:, 5] = (b_new - a) / sqrt2
    return out


def reference_eval(op, values, rhos, **kw):
    """Evaluate one factor's prox with the independent reference solver.

    Builds the factor's objective/constraint from first principles (no
    reuse of the closed forms) and picks an exact Euclidean projection
    where the feasible set is affine or a box; the nonconvex collision
    set falls back to the penalty schedule.
    """
    kind = op.kind

    def zero_f(slots):
        return np.zeros(slots[0].shape[0])

    def zero_g(S):
        return np.zeros_like(S)

    if kind == "quadratic":
        t = op.targets
        c = op.curvatures
        t_flat = np.concatenate(t)
        c_flat = np.repeat(c, [tj.shape[0] for tj in t])

        def objective(slots):
            return sum(0.5 * c[j] * ((s - t[j]) ** 2).sum(axis=1)
                       for j, s in enumerate(slots))

        def gradf(S):
            return c_flat * (S - t_flat)

        return prox_reference(objective, None, values, rhos, grad=gradf,
                              **kw)

    if kind == "collision":
        def constraint(slots):
            c1, r1, c2, r2 = slots
            dist = np.linalg.norm(c1 - c2, axis=1)
            return np.maximum(r1[:, 0] + r2[:, 0] - dist, 0.0)

        return prox_reference(zero_f, constraint, values, rhos,
                              projection=proj_disk_separation,
                              grad=zero_g, **kw)

    if kind == "wall":
        a = np.asarray(op.plane.normal, dtype=float)
        offset = float(a @ np.asarray(op.plane.point, dtype=float))

        def constraint(slots):
            c, r = slots
            margin = (c - op.plane.point) @ a
            return np.maximum(r[:, 0] - margin, 0.0)

        proj = proj_halfspace(np.concatenate([a, [-1.0]]), offset)
        return prox_reference(zero_f, constraint, values, rhos,
                              projection=proj, grad=zero_g, **kw)

    if kind == "radius":
        kappa = float(op.kappa)

        def objective(slots):
            return -0.5 * kappa * slots[0][:, 0] ** 2

        def gradf(S):
            return -kappa * S

        return prox_reference(objective, None, values, rhos, grad=gradf,
                              **kw)

    if kind == "mpc_cost":
        diag = np.concatenate([np.asarray(op.qdiag, dtype=float),
                               np.asarray(op.rdiag, dtype=float)])

        def objective(slots):
            return 0.5 * (slots[0] ** 2 * diag).sum(axis=1)

        def gradf(S):
            return diag * S

        return prox_reference(objective, None, values, rhos, grad=gradf,
                              **kw)

    if kind == "mpc_init":
        d = op.q0.shape[0]

        def constraint(slots):
            return np.linalg.norm(slots[0][:, :d] - op.q0, axis=1)

        proj = proj_fix(np.arange(d), op.q0)
        return prox_reference(zero_f, constraint, values, rhos,
                              projection=proj, grad=zero_g, **kw)

    if kind == "mpc_dyn":
        sys_ = op.system
        d, k = sys_.state_dim, sys_.control_dim
        M = np.hstack([sys_.M, np.zeros((d, k))])

        def constraint(slots):
            flat = np.hstack(slots)
            return np.linalg.norm(flat @ M.T, axis=1)

        return prox_reference(zero_f, constraint, values, rhos,
                              projection=proj_nullspace(M), grad=zero_g,
                              **kw)

    if kind == "svm_slack":
        lam = float(op.lam)

        def objective(slots):
            return lam * slots[0][:, 0]

        def constraint(slots):
            return np.maximum(-slots[0][:, 0], 0.0)

        def gradf(S):
            return np.full_like(S, lam)

        return prox_reference(objective, constraint, values, rhos,
                              projection=proj_nonneg([0]), grad=gradf,
                              **kw)

    if kind == "svm_norm":
        scale = float(op.scale)

        def objective(slots):
            return 0.5 * scale * (slots[0] ** 2).sum(axis=1)

        def gradf(S):
            return scale * S

        return prox_reference(objective, None, values, rhos, grad=gradf,
                              **kw)

    if kind == "svm_margin":
        x = np.asarray(op.point.x, dtype=float)
        y = float(op.point.y)
        normal = np.concatenate([y * x, [y, 1.0]])

        def constraint(slots):
            w, b, xi = slots
            act = y * (w @ x + b[:, 0]) + xi[:, 0]
            return np.maximum(1.0 - act, 0.0)

        proj = proj_halfspace(normal, 1.0)
        return prox_reference(zero_f, constraint, values, rhos,
                              projection=proj, grad=zero_g, **kw)

    if kind == "equality":
        dim = values[0].shape[0] if hasattr(values[0], "shape") \
            else len(values[0])
        M = np.hstack([np.eye(dim), -np.eye(dim)])

        def constraint(slots):
            return np.linalg.norm(slots[0] - slots[1], axis=1)

        return prox_reference(zero_f, constraint, values, rhos,
                              projection=proj_nullspace(M), grad=zero_g,
                              **kw)

    raise ValueError(f"no reference recipe for kind {kind!r}")


def random_factor_case(kind, rng):
    """Draw one random (operator, values, rhos) triple for a kind.

    Weights are uniform in [0.1, 10]; parameters respect each
    operator's preconditions.
    """
    from fgadmm.operators import (
        Collision, Equality, HalfPlane, LabeledPoint, LinearSystem,
        MpcCost, MpcDyn, MpcInit, Radius, SvmMargin, SvmNorm, SvmSlack,
        Wall, Quadratic,
    )

    def rho(count):
        return list(rng.uniform(0.1, 10.0, size=count))

    if kind == "quadratic":
        nslots = int(rng.integers(1, 4))
        op = Quadratic([rng.normal(size=1) for _ in range(nslots)],
                       rng.uniform(0.2, 3.0, size=nslots))
        vals = [rng.normal(size=1) for _ in range(nslots)]
        return op, vals, rho(nslots)
    if kind == "collision":
        op = Collision()
        vals = [rng.normal(size=2), rng.uniform(0.05, 1.0, size=1),
                rng.normal(size=2), rng.uniform(0.05, 1.0, size=1)]
        return op, vals, rho(4)
    if kind == "wall":
        normal = rng.normal(size=2)
        normal /= np.linalg.norm(normal)
        op = Wall(HalfPlane(normal, rng.normal(size=2)))
        return op, [rng.normal(size=2), rng.uniform(-0.5, 1.0, size=1)], \
            rho(2)
    if kind == "radius":
        r = rng.uniform(0.1, 10.0)
        op = Radius(kappa=r * rng.uniform(0.05, 0.85))
        return op, [rng.normal(size=1)], [r]
    if kind == "mpc_cost":
        op = MpcCost(rng.uniform(0.0, 2.0, size=2), rng.uniform(0.0, 2.0,
                                                                size=1))
        return op, [rng.normal(size=3)], rho(1)
    if kind == "mpc_init":
        op = MpcInit(rng.normal(size=2), 1)
        return op, [rng.normal(size=3)], rho(1)
    if kind == "mpc_dyn":
        sys_ = LinearSystem(rng.normal(scale=0.5, size=(2, 2)),
                            rng.normal(scale=0.5, size=(2, 1)))
        op = MpcDyn(sys_)
        return op, [rng.normal(size=3), rng.normal(size=3)], rho(2)
    if kind == "svm_slack":
        op = SvmSlack(rng.uniform(0.1, 3.0))
        return op, [rng.normal(size=1)], rho(1)
    if kind == "svm_norm":
        op = SvmNorm(rng.uniform(0.1, 2.0), 3)
        return op, [rng.normal(size=3)], rho(1)
    if kind == "svm_margin":
        point = LabeledPoint(rng.normal(size=2),
                             1 if rng.random() < 0.5 else -1)
        op = SvmMargin(point)
        return op, [rng.normal(size=2), rng.normal(size=1),
                    rng.normal(size=1)], rho(3)
    if kind == "equality":
        op = Equality(2)
        return op, [rng.normal(size=2), rng.normal(size=2)], rho(2)
    raise ValueError(f"no random case recipe for kind {kind!r}")
