"""Closed-form proximal operators for packing, control, and SVM factors.

Each operator solves ``argmin f(s) + sum_j rho_j/2 ||s_j - n_j||^2``
exactly.  The registry classes carry per-factor parameters and support
batched evaluation over many factors of the same signature; the plain
``*_prox`` functions expose the same formulas one factor at a time.
"""

from __future__ import annotations

import warnings

import numpy as np

from .prox import ProxFactor, register


class HalfPlane:
    """Feasible side of a line: points c with ``normal . (c - point) >= 0``.

    The normal is unit-normalized at construction; vectors already unit
    to within 1e-12 pass through unchanged so serialized planes rebuild
    bit-exactly.
    """

    def __init__(self, normal, point):
        normal = np.asarray(normal, dtype=float)
        point = np.asarray(point, dtype=float)
        if normal.shape != point.shape or normal.ndim != 1:
            raise ValueError("normal and point must be 1-D vectors of equal dim")
        length = float(np.linalg.norm(normal))
        if length == 0.0:
            raise ValueError("half-plane normal must be nonzero")
        if abs(length - 1.0) > 1e-12:
            normal = normal / length
        self.normal = normal
        self.point = point

    def margin(self, c, r=0.0):
        """Signed clearance of a disk (center ``c``, radius ``r``)."""
        return float(self.normal @ (np.asarray(c, dtype=float) - self.point)) - r


class LinearSystem:
    """Discrete linear dynamics in increment form: q(t+1) - q(t) = A q + B u.

    Precomputes the constraint matrix ``M = [I + A, B, -I]`` whose null
    space is the set of feasible ``(q_t, u_t, q_t1)`` triples.
    """

    def __init__(self, A, B):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError("B must have one row per state dimension")
        self.A = A
        self.B = B
        self.state_dim = A.shape[0]
        self.control_dim = B.shape[1]
        d = self.state_dim
        self.M = np.hstack([np.eye(d) + A, B, -np.eye(d)])

    def residual(self, q_t, u_t, q_t1):
        """Dynamics defect ``q_t1 - (I+A) q_t - B u_t``."""
        v = np.concatenate([np.atleast_1d(q_t), np.atleast_1d(u_t),
                            np.atleast_1d(q_t1)]).astype(float)
        return self.M @ v


class LabeledPoint:
    """A feature vector with a binary label in {-1, +1}."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise ValueError("x must be a finite 1-D vector")
        y = int(y)
        if y not in (-1, 1):
            raise ValueError("label must be -1 or +1")
        self.x = x
        self.y = y


def _weighted_nullspace_projection(M, nv, w):
    """Batched weighted projection of ``nv`` onto ``{v : M v = 0}``.

    ``M`` is ``(B, r, D)``, ``nv`` and ``w`` are ``(B, D)`` with
    positive weights; minimizes ``sum w_i (v_i - n_i)^2``.
    """
    winv = 1.0 / w
    Mn = np.einsum("bij,bj->bi", M, nv)
    S = np.einsum("bij,bj,bkj->bik", M, winv, M)
    lam = np.linalg.solve(S, Mn[..., None])[..., 0]
    return nv - winv * np.einsum("bij,bi->bj", M, lam)


@register
class Quadratic(ProxFactor):
    """Separable quadratic: sum_j c_j/2 ||s_j - t_j||^2 over the slots.

    Zero curvature on a slot makes the factor the zero function there
    (prox is the identity).
    """

    kind = "quadratic"

    def __init__(self, targets, curvatures):
        self.targets = [np.atleast_1d(np.asarray(t, dtype=float)) for t in targets]
        self.curvatures = [float(c) for c in curvatures]
        if len(self.targets) != len(self.curvatures):
            raise ValueError("need one curvature per target")
        if any(c < 0.0 for c in self.curvatures):
            raise ValueError("curvatures must be nonnegative")

    def slot_dims(self):
        return tuple(t.shape[0] for t in self.targets)

    @classmethod
    def stack_params(cls, instances):
        nslots = len(instances[0].targets)
        return {
            "targets": [np.stack([inst.targets[j] for inst in instances])
                        for j in range(nslots)],
            "curvatures": [np.array([inst.curvatures[j] for inst in instances])
                           for j in range(nslots)],
        }

    @classmethod
    def batch_eval(cls, params, values, rhos):
        out = []
        for T, C, N, R in zip(params["targets"], params["curvatures"], values, rhos):
            out.append((C[:, None] * T + R[:, None] * N) / (C + R)[:, None])
        return out

    def objective(self, values):
        return sum(
            0.5 * c * float(np.sum((np.atleast_1d(v) - t) ** 2))
            for v, t, c in zip(values, self.targets, self.curvatures)
        )

    def to_params(self):
        return {"targets": [t.tolist() for t in self.targets],
                "curvatures": list(self.curvatures)}

    @classmethod
    def from_params(cls, params, dims):
        return cls(params["targets"], params["curvatures"])


@register
class Collision(ProxFactor):
    """Keeps two disks (center, radius) from overlapping.

    Weighted projection onto ``||c1 - c2|| >= r1 + r2``: both centers
    move apart along the center line and both radii shrink, scaled by
    the inverse edge weights.
    """

    kind = "collision"

    def slot_dims(self):
        return (2, 1, 2, 1)

    @classmethod
    def batch_eval(cls, params, values, rhos):
        n1c, n1r, n2c, n2r = values
        rc1, rr1, rc2, rr2 = rhos
        diff = n1c - n2c
        dist = np.sqrt(np.einsum("bi,bi->b", diff, diff))
        safe = np.where(dist > 0.0, dist, 1.0)
        vhat = diff / safe[:, None]
        degenerate = dist == 0.0
        if degenerate.any():
            # unit vector from disk 2 toward disk 1; fixed fallback keeps
            # coincident centers deterministic
            vhat[degenerate] = (-1.0, 0.0)
            gap = n1r[:, 0] + n2r[:, 0] - dist
            if np.any(degenerate & (gap > 0.0)):
                warnings.warn(
                    "collision prox: coincident centers, using fallback direction",
                    RuntimeWarning, stacklevel=2,
                )
        D = np.maximum(n1r[:, 0] + n2r[:, 0] - dist, 0.0)
        mu = D / (1.0 / rc1 + 1.0 / rc2 + 1.0 / rr1 + 1.0 / rr2)
        c1 = n1c + (mu / rc1)[:, None] * vhat
        c2 = n2c - (mu / rc2)[:, None] * vhat
        r1 = n1r - (mu / rr1)[:, None]
        r2 = n2r - (mu / rr2)[:, None]
        return [c1, r1, c2, r2]

    def violation(self, values):
        c1, r1, c2, r2 = values
        gap = float(r1[0] + r2[0] - np.linalg.norm(np.atleast_1d(c1) - c2))
        return max(gap, 0.0)

    @classmethod
    def from_params(cls, params, dims):
        return cls()


@register
class Wall(ProxFactor):
    """Keeps a disk (center, radius) inside a half-plane.

    Weighted projection onto ``normal . (c - point) >= r``.
    """

    kind = "wall"

    def __init__(self, plane):
        if plane.normal.shape != (2,):
            raise ValueError("wall factors operate on 2-D centers")
        self.plane = plane

    def slot_dims(self):
        return (2, 1)

    @classmethod
    def stack_params(cls, instances):
        return {"Q": np.stack([inst.plane.normal for inst in instances]),
                "V": np.stack([inst.plane.point for inst in instances])}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        nc, nr = values
        rc, rr = rhos
        Q, V = params["Q"], params["V"]
        h = np.einsum("bi,bi->b", Q, nc - V) - nr[:, 0]
        mu = np.maximum(-h, 0.0) / (1.0 / rc + 1.0 / rr)
        c = nc + (mu / rc)[:, None] * Q
        r = nr - (mu / rr)[:, None]
        return [c, r]

    def violation(self, values):
        c, r = values
        return max(-self.plane.margin(c, float(r[0])), 0.0)

    def to_params(self):
        return {"normal": self.plane.normal.tolist(),
                "point": self.plane.point.tolist()}

    @classmethod
    def from_params(cls, params, dims):
        return cls(HalfPlane(params["normal"], params["point"]))


@register
class Radius(ProxFactor):
    """Rewards disk growth: objective ``-kappa/2 r^2`` on a radius slot.

    The prox ``r = rho n / (rho - kappa)`` exists only for ``rho > kappa``
    (otherwise the objective is unbounded below).
    """

    kind = "radius"

    def __init__(self, kappa=1.0):
        self.kappa = float(kappa)
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")

    def slot_dims(self):
        return (1,)

    @classmethod
    def stack_params(cls, instances):
        return {"kappa": np.array([inst.kappa for inst in instances])}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        kappa = params["kappa"]
        (N,), (R,) = values, rhos
        if np.any(R <= kappa):
            raise ValueError("radius prox requires rho > kappa")
        return [R[:, None] * N / (R - kappa)[:, None]]

    def objective(self, values):
        return -0.5 * self.kappa * float(values[0][0]) ** 2

    def to_params(self):
        return {"kappa": self.kappa}

    @classmethod
    def from_params(cls, params, dims):
        return cls(params.get("kappa", 1.0))


@register
class MpcCost(ProxFactor):
    """Diagonal quadratic stage cost 1/2 q'Qq + 1/2 u'Ru on one (q, u) slot."""

    kind = "mpc_cost"

    def __init__(self, qdiag, rdiag):
        self.qdiag = np.atleast_1d(np.asarray(qdiag, dtype=float))
        self.rdiag = np.atleast_1d(np.asarray(rdiag, dtype=float))
        if np.any(self.qdiag < 0.0) or np.any(self.rdiag < 0.0):
            raise ValueError("cost diagonals must be nonnegative")

    def slot_dims(self):
        return (self.qdiag.shape[0] + self.rdiag.shape[0],)

    @classmethod
    def stack_params(cls, instances):
        return {"diag": np.stack([
            np.concatenate([inst.qdiag, inst.rdiag]) for inst in instances
        ])}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        (N,), (R,) = values, rhos
        return [R[:, None] * N / (params["diag"] + R[:, None])]

    def objective(self, values):
        v = np.atleast_1d(values[0])
        diag = np.concatenate([self.qdiag, self.rdiag])
        return 0.5 * float(np.sum(diag * v * v))

    def to_params(self):
        return {"q": self.qdiag.tolist(), "r": self.rdiag.tolist()}

    @classmethod
    def from_params(cls, params, dims):
        return cls(params["q"], params["r"])


@register
class MpcInit(ProxFactor):
    """Clamps the state part of a (q, u) slot to the known initial state."""

    kind = "mpc_init"

    def __init__(self, q0, control_dim):
        self.q0 = np.atleast_1d(np.asarray(q0, dtype=float))
        self.control_dim = int(control_dim)
        if self.control_dim < 0:
            raise ValueError("control_dim must be >= 0")

    def slot_dims(self):
        return (self.q0.shape[0] + self.control_dim,)

    @classmethod
    def stack_params(cls, instances):
        return {"q0": np.stack([inst.q0 for inst in instances])}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        (N,) = values
        out = N.copy()
        d = params["q0"].shape[1]
        out[:, :d] = params["q0"]
        return [out]

    def violation(self, values):
        d = self.q0.shape[0]
        return float(np.max(np.abs(np.atleast_1d(values[0])[:d] - self.q0)))

    def to_params(self):
        return {"q0": self.q0.tolist(), "control_dim": self.control_dim}

    @classmethod
    def from_params(cls, params, dims):
        return cls(params["q0"], params["control_dim"])


@register
class MpcDyn(ProxFactor):
    """Couples consecutive (q, u) slots through linear dynamics.

    Weighted projection onto ``q_t1 = (I + A) q_t + B u_t``; the second
    slot's control part is untouched by the constraint.
    """

    kind = "mpc_dyn"

    def __init__(self, system):
        self.system = system

    def slot_dims(self):
        n = self.system.state_dim + self.system.control_dim
        return (n, n)

    @classmethod
    def stack_params(cls, instances):
        return {"M": np.stack([inst.system.M for inst in instances])}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        N0, N1 = values
        R0, R1 = rhos
        M = params["M"]
        d = M.shape[1]
        nslot = N0.shape[1]
        nv = np.concatenate([N0, N1[:, :d]], axis=1)
        w = np.concatenate([
            np.repeat(R0[:, None], nslot, axis=1),
            np.repeat(R1[:, None], d, axis=1),
        ], axis=1)
        v = _weighted_nullspace_projection(M, nv, w)
        out1 = N1.copy()
        out1[:, :d] = v[:, nslot:]
        return [v[:, :nslot], out1]

    def violation(self, values):
        v0, v1 = np.atleast_1d(values[0]), np.atleast_1d(values[1])
        d, k = self.system.state_dim, self.system.control_dim
        res = self.system.residual(v0[:d], v0[d:d + k], v1[:d])
        return float(np.max(np.abs(res)))

    def to_params(self):
        return {"A": self.system.A.tolist(), "B": self.system.B.tolist()}

    @classmethod
    def from_params(cls, params, dims):
        return cls(LinearSystem(params["A"], params["B"]))


@register
class SvmSlack(ProxFactor):
    """Hinge penalty lam * xi with xi >= 0 on one scalar slack slot."""

    kind = "svm_slack"

    def __init__(self, lam):
        self.lam = float(lam)
        if self.lam < 0.0:
            raise ValueError("hinge weight must be nonnegative")

    def slot_dims(self):
        return (1,)

    @classmethod
    def stack_params(cls, instances):
        return {"lam": np.array([inst.lam for inst in instances])}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        (N,), (R,) = values, rhos
        return [np.maximum(N - (params["lam"] / R)[:, None], 0.0)]

    def objective(self, values):
        return self.lam * max(float(values[0][0]), 0.0)

    def violation(self, values):
        return max(-float(values[0][0]), 0.0)

    def to_params(self):
        return {"lam": self.lam}

    @classmethod
    def from_params(cls, params, dims):
        return cls(params["lam"])


@register
class SvmNorm(ProxFactor):
    """Scaled ridge term ``scale/2 ||w||^2`` on one weight-vector slot."""

    kind = "svm_norm"

    def __init__(self, scale, dim):
        self.scale = float(scale)
        self.dim = int(dim)
        if self.scale <= 0.0:
            raise ValueError("scale must be positive")

    def slot_dims(self):
        return (self.dim,)

    @classmethod
    def stack_params(cls, instances):
        return {"scale": np.array([inst.scale for inst in instances])}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        (N,), (R,) = values, rhos
        return [(R / (R + params["scale"]))[:, None] * N]

    def objective(self, values):
        v = np.atleast_1d(values[0])
        return 0.5 * self.scale * float(v @ v)

    def to_params(self):
        return {"scale": self.scale}

    @classmethod
    def from_params(cls, params, dims):
        return cls(params["scale"], dims[0])


@register
class SvmMargin(ProxFactor):
    """Enforces one labeled point's margin ``y (w.x + b) >= 1 - xi``.

    Weighted projection onto the half-space in (w, b, xi); the KKT
    multiplier raises xi and tilts (w, b) toward satisfying the margin.
    """

    kind = "svm_margin"

    def __init__(self, point):
        self.point = point

    def slot_dims(self):
        return (self.point.x.shape[0], 1, 1)

    @classmethod
    def stack_params(cls, instances):
        return {"x": np.stack([inst.point.x for inst in instances]),
                "y": np.array([float(inst.point.y) for inst in instances])}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        N1, N2, N3 = values
        R1, R2, R3 = rhos
        X, Y = params["x"], params["y"]
        slack = 1.0 - N3[:, 0] - Y * (np.einsum("bi,bi->b", N1, X) + N2[:, 0])
        denom = np.einsum("bi,bi->b", X, X) / R1 + 1.0 / R2 + 1.0 / R3
        mu = np.maximum(slack, 0.0) / denom
        w = N1 + (mu / R1 * Y)[:, None] * X
        b = N2 + (mu / R2 * Y)[:, None]
        xi = N3 + (mu / R3)[:, None]
        return [w, b, xi]

    def violation(self, values):
        w, b, xi = values
        gap = 1.0 - float(xi[0]) - self.point.y * (
            float(np.atleast_1d(w) @ self.point.x) + float(b[0])
        )
        return max(gap, 0.0)

    def to_params(self):
        return {"x": self.point.x.tolist(), "y": self.point.y}

    @classmethod
    def from_params(cls, params, dims):
        return cls(LabeledPoint(params["x"], params["y"]))


@register
class Equality(ProxFactor):
    """Forces two equal-dimension slots to agree.

    Both outputs are the rho-weighted average of the inputs.
    """

    kind = "equality"

    def __init__(self, dim):
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def slot_dims(self):
        return (self.dim, self.dim)

    @classmethod
    def batch_eval(cls, params, values, rhos):
        N1, N2 = values
        R1, R2 = rhos
        avg = (R1[:, None] * N1 + R2[:, None] * N2) / (R1 + R2)[:, None]
        return [avg, avg.copy()]

    def violation(self, values):
        return float(np.max(np.abs(np.atleast_1d(values[0])
                                   - np.atleast_1d(values[1]))))

    @classmethod
    def from_params(cls, params, dims):
        return cls(dims[0])


def _scalar(value):
    return float(np.atleast_1d(value)[0])


def collision_prox(n1c, n1r, n2c, n2r, rho1, rho2):
    """No-overlap projection for two disks; one weight per disk."""
    out = Collision().eval([n1c, [n1r], n2c, [n2r]], [rho1, rho1, rho2, rho2])
    return out[0], _scalar(out[1]), out[2], _scalar(out[3])


def wall_prox(nc, nr, plane):
    """Projection of a disk onto the feasible side of a half-plane."""
    out = Wall(plane).eval([nc, [nr]], [1.0, 1.0])
    return out[0], _scalar(out[1])


def radius_prox(nr, rho, kappa=1.0):
    """Prox of the growth reward ``-kappa/2 r^2``; needs rho > kappa."""
    out = Radius(kappa).eval([[nr]], [rho])
    return _scalar(out[0])


def mpc_cost_prox(nx, nu, qdiag, rdiag, rho):
    """Prox of the diagonal stage cost on a stacked (state, control) pair."""
    op = MpcCost(qdiag, rdiag)
    n = np.concatenate([np.atleast_1d(nx), np.atleast_1d(nu)])
    out = op.eval([n], [rho])[0]
    d = op.qdiag.shape[0]
    return out[:d], out[d:]


def mpc_dyn_prox(nx_t, nu_t, nx_t1, system, rho_t, rho_u, rho_t1):
    """Weighted projection onto the dynamics constraint, three weights."""
    nx_t = np.atleast_1d(np.asarray(nx_t, dtype=float))
    nu_t = np.atleast_1d(np.asarray(nu_t, dtype=float))
    nx_t1 = np.atleast_1d(np.asarray(nx_t1, dtype=float))
    d, k = system.state_dim, system.control_dim
    if nx_t.shape != (d,) or nu_t.shape != (k,) or nx_t1.shape != (d,):
        raise ValueError("input dims do not match the system")
    for r in (rho_t, rho_u, rho_t1):
        if float(r) <= 0.0:
            raise ValueError("weights must be positive")
    nv = np.concatenate([nx_t, nu_t, nx_t1])[None, :]
    w = np.concatenate([
        np.full(d, float(rho_t)), np.full(k, float(rho_u)),
        np.full(d, float(rho_t1)),
    ])[None, :]
    v = _weighted_nullspace_projection(system.M[None, :, :], nv, w)[0]
    return v[:d], v[d:d + k], v[d + k:]


def mpc_init_prox(nq, nu, q0):
    """Clamp the state to ``q0`` and pass the control through."""
    nq = np.atleast_1d(np.asarray(nq, dtype=float))
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    if nq.shape != q0.shape:
        raise ValueError("state dims do not match")
    return q0.copy(), np.atleast_1d(np.asarray(nu, dtype=float)).copy()


def svm_slack_prox(n, lam, rho):
    """Prox of the hinge penalty on a nonnegative scalar slack."""
    out = SvmSlack(lam).eval([[n]], [rho])
    return _scalar(out[0])


def svm_norm_prox(n, rho, scale=1.0):
    """Prox of the scaled ridge term on a weight vector."""
    n = np.atleast_1d(np.asarray(n, dtype=float))
    out = SvmNorm(scale, n.shape[0]).eval([n], [rho])
    return out[0]


def svm_margin_prox(n1, n2, n3, point, rho1, rho2, rho3):
    """Weighted projection onto one labeled point's margin constraint."""
    out = SvmMargin(point).eval([n1, [n2], [n3]], [rho1, rho2, rho3])
    return out[0], _scalar(out[1]), _scalar(out[2])


def equality_prox(n1, n2, rho1, rho2):
    """Weighted average enforcing equality of two blocks."""
    n1 = np.atleast_1d(np.asarray(n1, dtype=float))
    out = Equality(n1.shape[0]).eval([n1, n2], [rho1, rho2])
    return out[0], out[1]
