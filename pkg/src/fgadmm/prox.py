"""Proximal-operator contract and an independent reference minimizer.

Every factor implements the same contract: given one incoming vector per
incident edge (``n``) and the per-edge weights (``rho``), return the
minimizer of

    f(s_1, ..., s_k) + sum_j rho_j / 2 * ||s_j - n_j||^2

over the factor's blocks.  ``prox_reference`` solves the same problem by
projected gradient descent with random restarts and is used to validate
the closed forms in :mod:`fgadmm.operators`.
"""

from __future__ import annotations

import numpy as np

_REGISTRY = {}


def register(cls):
    """Class decorator adding an operator to the name registry."""
    _REGISTRY[cls.kind] = cls
    return cls


def operator_class(kind):
    """Look up a registered operator class by its document name."""
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown operator kind {kind!r}") from None


def registered_kinds():
    """Sorted names of all registered operator kinds."""
    return sorted(_REGISTRY)


class ProxFactor:
    """Base class for factor operators.

    Subclasses define ``kind`` (registry name), ``slot_dims`` and the
    vectorized ``batch_eval``; the scalar :meth:`eval` wraps a batch of
    one so both paths share a single numerical code path.  Instances are
    immutable after construction and safe to evaluate concurrently.
    """

    kind = None

    def slot_dims(self):
        """Per-slot dimensions, one entry per incident variable."""
        raise NotImplementedError

    @classmethod
    def stack_params(cls, instances):
        """Stack instance parameters into batch arrays (default: none)."""
        return {}

    @classmethod
    def batch_eval(cls, params, values, rhos):
        """Evaluate a batch of factors of this kind.

        Parameters
        ----------
        params : dict
            Arrays from ``stack_params`` with leading batch axis.
        values : list of ndarray
            One ``(B, dim_j)`` array per slot of incoming ``n`` vectors.
        rhos : list of ndarray
            One ``(B,)`` array per slot of edge weights.

        Returns
        -------
        list of ndarray
            Per-slot minimizers, shapes mirroring ``values``.
        """
        raise NotImplementedError

    def eval(self, values, rhos):
        """Minimize ``f(s) + sum_j rho_j/2 ||s_j - n_j||^2`` for one factor.

        ``values`` holds one vector per slot, ``rhos`` one positive
        weight per slot; returns the per-slot minimizers as 1-D arrays.
        """
        dims = self.slot_dims()
        values, rhos = check_prox_input(dims, values, rhos)
        batch_n = [v.reshape(1, -1) for v in values]
        batch_r = [np.array([r]) for r in rhos]
        params = type(self).stack_params([self])
        out = type(self).batch_eval(params, batch_n, batch_r)
        return [o[0].copy() for o in out]

    def objective(self, values):
        """The factor's own objective term at the given slot values."""
        return 0.0

    def violation(self, values):
        """Constraint violation magnitude at the given slot values."""
        return 0.0

    def to_params(self):
        """JSON-compatible parameter block for the graph document."""
        return {}

    @classmethod
    def from_params(cls, params, dims):
        """Rebuild an instance from a document parameter block."""
        return cls()


def check_prox_input(dims, values, rhos):
    """Validate and normalize one factor's prox input.

    Returns the values as float 1-D arrays and rhos as floats; raises
    ``ValueError`` on dimension mismatches or nonpositive weights.
    """
    if len(values) != len(dims) or len(rhos) != len(dims):
        raise ValueError(
            f"expected {len(dims)} slots, got {len(values)} values "
            f"and {len(rhos)} weights"
        )
    out = []
    for j, (d, v) in enumerate(zip(dims, values)):
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        if arr.shape != (d,):
            raise ValueError(f"slot {j} expects dim {d}, got shape {arr.shape}")
        out.append(arr)
    weights = [float(r) for r in rhos]
    if any(r <= 0.0 for r in weights):
        raise ValueError("rho must be positive")
    return out, weights


# Penalty escalation for constrained reference solves: 10 geometric
# stages from 1e2 to 1e8.
PENALTY_STAGES = tuple(np.geomspace(1e2, 1e8, 10))


def prox_reference(objective, constraint, values, rhos, *, projection=None,
                   grad=None, restarts=16, seed=0, max_steps=4000, tol=1e-10):
    """Numerically minimize ``f(s) + sum_j rho_j/2 ||s_j - n_j||^2``.

    Projected gradient descent with backtracking from ``restarts``
    random starts drawn around ``values``, iterated until the step norm
    falls below ``tol``.  Intended for validation at desk scale (total
    dimension <= 12), not for production solves.

    Parameters
    ----------
    objective : callable
        Maps a list of per-slot arrays, each of shape ``(R, dim_j)``, to
        an ``(R,)`` array of objective values.  Must be finite on the
        feasible set.
    constraint : callable or None
        Same signature, returning an ``(R,)`` violation measure that is
        zero exactly on the feasible set.  Enforced by ``projection``
        when given, otherwise by a quadratic penalty schedule followed
        by a feasibility polish.
    values, rhos : sequences
        Incoming vectors and positive weights, one per slot.
    projection : callable, optional
        Euclidean projection onto the feasible set, acting on a flat
        ``(R, D)`` array.
    grad : callable, optional
        Analytic gradient of ``objective`` as a flat ``(R, D)`` array;
        central finite differences are used when absent.

    Returns
    -------
    list of ndarray
        Per-slot minimizer.

    Raises
    ------
    RuntimeError
        If no restart reaches the step tolerance within ``max_steps``.
    """
    values = [np.atleast_1d(np.asarray(v, dtype=float)) for v in values]
    dims = [v.shape[0] for v in values]
    offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    total = int(offsets[-1])
    if total > 12:
        raise ValueError("prox_reference is limited to total dimension <= 12")
    rho = np.asarray([float(r) for r in rhos])
    if rho.shape != (len(dims),) or np.any(rho <= 0.0):
        raise ValueError("need one positive rho per slot")
    rho_flat = np.repeat(rho, dims)
    n_flat = np.concatenate(values)

    def split(S):
        return [S[:, offsets[j]:offsets[j + 1]] for j in range(len(dims))]

    def f_of(S):
        return np.asarray(objective(split(S)), dtype=float)

    def coupling(S):
        d = S - n_flat
        return 0.5 * (d * d * rho_flat).sum(axis=1)

    def coupling_grad(S):
        return rho_flat * (S - n_flat)

    def fd_grad(fn, S, h):
        G = np.empty_like(S)
        for i in range(total):
            step = np.zeros(total)
            step[i] = h
            G[:, i] = (fn(S + step) - fn(S - step)) / (2.0 * h)
        return G

    def viol_of(S):
        return np.asarray(constraint(split(S)), dtype=float)

    rng = np.random.default_rng(seed)
    R = max(int(restarts), 1)
    S = np.tile(n_flat, (R, 1))
    if R > 1:
        S[1:] += rng.uniform(-0.5, 0.5, size=(R - 1, total))
    if projection is not None:
        S = projection(S)

    def descend(S, total_f, total_g, steps, tol):
        """Backtracking (projected) gradient descent on all rows at once."""
        S = S.copy()
        t = np.full(R, 1.0)
        fS = total_f(S)
        done = np.zeros(R, dtype=bool)
        for _ in range(steps):
            G = total_g(S)
            tt = t.copy()
            trial = S.copy()
            f_trial = fS.copy()
            accepted = done.copy()
            for _ in range(60):
                cand = S - tt[:, None] * G
                if projection is not None:
                    cand = projection(cand)
                diff = cand - S
                fc = total_f(cand)
                # Strict bound: at the rounding floor candidates get
                # rejected, the step collapses and the row terminates.
                bound = fS + (G * diff).sum(axis=1) \
                    + (diff * diff).sum(axis=1) / (2.0 * tt)
                ok = (fc <= bound) & ~accepted
                if ok.any():
                    trial[ok] = cand[ok]
                    f_trial[ok] = fc[ok]
                    accepted |= ok
                if accepted.all():
                    break
                tt = np.where(accepted, tt, tt * 0.5)
            moved = np.linalg.norm(trial - S, axis=1)
            done |= (moved < tol) & accepted
            # Backtracking exhausted at the rounding floor: the row
            # cannot move further, count it as converged where it is.
            done |= ~accepted & (tt * np.linalg.norm(G, axis=1) < tol)
            S, fS = trial, f_trial
            t = np.minimum(tt * 1.3, 1e6)
            if done.all():
                break
        return S, fS, done

    if constraint is None or projection is not None:
        def total_f(S):
            return f_of(S) + coupling(S)

        def total_g(S):
            base = grad(S) if grad is not None else fd_grad(f_of, S, 1e-6)
            return base + coupling_grad(S)

        S, fS, done = descend(S, total_f, total_g, max_steps, tol)
        if not done.any():
            raise RuntimeError(
                "reference prox did not converge within the step budget"
            )
        best = int(np.argmin(np.where(done, fS, np.inf)))
        out = S[best]
    else:
        done = np.zeros(R, dtype=bool)
        for weight in PENALTY_STAGES:
            last = weight == PENALTY_STAGES[-1]
            h = 3e-6 / (1.0 + weight) ** (1.0 / 3.0)

            def total_f(S, w=weight):
                return f_of(S) + coupling(S) + w * viol_of(S) ** 2

            def total_g(S, w=weight, h=h):
                base = grad(S) if grad is not None else fd_grad(f_of, S, 1e-6)
                v = viol_of(S)
                vg = fd_grad(viol_of, S, h)
                return base + coupling_grad(S) + (2.0 * w * v)[:, None] * vg

            stage_tol = tol if last else max(tol, 1e-8)
            stage_steps = max_steps if last else max_steps // 4
            S, _, done = descend(S, total_f, total_g, stage_steps, stage_tol)
        if not done.any():
            raise RuntimeError(
                "reference prox did not converge within the step budget"
            )
        # feasibility polish: Newton steps onto the constraint surface
        for _ in range(20):
            v = viol_of(S)
            if v.max() <= 1e-13:
                break
            vg = fd_grad(viol_of, S, 1e-7)
            norms = (vg * vg).sum(axis=1)
            scale = np.where((v > 0) & (norms > 0), v / np.maximum(norms, 1e-300), 0.0)
            S = S - scale[:, None] * vg
        fS = f_of(S) + coupling(S)
        feasible = viol_of(S) <= 1e-7
        score = np.where(done & feasible, fS, np.inf)
        if not np.isfinite(score).any():
            score = np.where(done, fS + viol_of(S), np.inf)
        best = int(np.argmin(score))
        out = S[best]

    return [out[offsets[j]:offsets[j + 1]].copy() for j in range(len(dims))]
