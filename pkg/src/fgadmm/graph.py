"""Factor-graph construction with flat edge-ordered storage.

A problem is declared as a bipartite graph: variable nodes hold the
unknown blocks, function nodes apply proximal operators to subsets of
variables.  ``GraphBuilder`` collects declarations; ``freeze`` turns
them into an immutable :class:`FactorGraph` whose per-edge quantities
live in flat arrays laid out in edge-creation order, with per-variable
averaging weights precomputed for the consensus update.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DOCUMENT_VERSION = "fgadmm-v1"


@dataclass
class VariableNode:
    """One unknown block: ``id`` is insertion order, ``dim`` its length.

    ``degree`` and ``weight_sum`` (the sum of incident edge weights, in
    incident-edge creation order) are filled in by ``freeze``.
    """

    id: int
    dim: int
    degree: int = 0
    weight_sum: float = 0.0


@dataclass
class FunctionNode:
    """One objective term: a proximal operator applied to ``neighbor_vars``.

    ``edge_range`` is the half-open span of this factor's edges in the
    global edge list; spans are consecutive and disjoint across factors.
    """

    id: int
    operator: object
    neighbor_vars: tuple[int, ...]
    edge_range: tuple[int, int] = (0, 0)


@dataclass
class Edge:
    """Factor-variable incidence carrying the per-edge weights rho, alpha."""

    factor: int
    var: int
    rho: float
    alpha: float
    payload_dim: int


def _as_edge_params(value, count, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(count, float(arr[0]))
    if arr.shape != (count,):
        raise ValueError(
            f"{name} must be a scalar or one value per edge; "
            f"got {arr.size} values for {count} edges"
        )
    if not np.all(arr > 0.0):
        raise ValueError(f"{name} must be positive")
    return arr


class GraphBuilder:
    """Accumulates variable and factor declarations before freezing."""

    def __init__(self):
        self._dims = []
        self._pending = []
        self._frozen = False

    def _check_open(self):
        if self._frozen:
            raise RuntimeError("builder is frozen; create a new GraphBuilder")

    def declare_variable(self, dim):
        """Register an unknown block of length ``dim``; returns its id."""
        self._check_open()
        dim = int(dim)
        if dim < 1:
            raise ValueError("variable dim must be >= 1")
        self._dims.append(dim)
        return len(self._dims) - 1

    def add_factor(self, operator, variables, rho=1.0, alpha=1.0):
        """Attach ``operator`` to the listed variable ids; returns the factor id.

        Creates one edge per (factor, variable) pair in the given order.
        ``rho`` and ``alpha`` are scalars or one value per edge.
        """
        self._check_open()
        var_ids = [int(v) for v in variables]
        if not var_ids:
            raise ValueError("a factor needs at least one variable")
        if len(set(var_ids)) != len(var_ids):
            raise ValueError(f"duplicate variable in factor: {var_ids}")
        for v in var_ids:
            if not 0 <= v < len(self._dims):
                raise ValueError(f"unknown variable id {v}")
        dims = tuple(self._dims[v] for v in var_ids)
        sig = tuple(operator.slot_dims())
        if sig != dims:
            raise ValueError(
                f"operator '{operator.kind}' expects slot dims {sig}, "
                f"variables have dims {dims}"
            )
        nedges = len(var_ids)
        rho = _as_edge_params(rho, nedges, "rho")
        alpha = _as_edge_params(alpha, nedges, "alpha")
        self._pending.append((operator, tuple(var_ids), rho, alpha))
        return len(self._pending) - 1

    def freeze(self):
        """Materialize the flat storage layout and return the graph."""
        self._check_open()
        if not self._pending:
            raise ValueError("graph has no factors")
        degrees = [0] * len(self._dims)
        for _, var_ids, _, _ in self._pending:
            for v in var_ids:
                degrees[v] += 1
        for v, deg in enumerate(degrees):
            if deg == 0:
                raise ValueError(f"variable {v} has no incident factors")
        self._frozen = True
        return FactorGraph._from_builder(self._dims, self._pending)


class FactorGraph:
    """Frozen bipartite graph with edge-ordered flat storage.

    Immutable after construction except for per-edge ``rho``/``alpha``
    via :meth:`set_edge_params`.  Edge payloads occupy flat arrays in
    edge-creation order; the consensus vector ``z`` is ordered by
    variable insertion.
    """

    def __init__(self):
        raise TypeError("use GraphBuilder.freeze() or deserialize()")

    @classmethod
    def _from_builder(cls, dims, pending):
        self = object.__new__(cls)
        self.variables = [VariableNode(i, d) for i, d in enumerate(dims)]
        self.factors = []
        self.edges = []

        edge_var = []
        rho_chunks = []
        alpha_chunks = []
        for fid, (operator, var_ids, rho, alpha) in enumerate(pending):
            start = len(edge_var)
            for v in var_ids:
                edge_var.append(v)
            self.factors.append(
                FunctionNode(fid, operator, var_ids, (start, len(edge_var)))
            )
            rho_chunks.append(rho)
            alpha_chunks.append(alpha)

        self.edge_var = np.asarray(edge_var, dtype=np.int64)
        self.edge_factor = np.concatenate(
            [np.full(f.edge_range[1] - f.edge_range[0], f.id, dtype=np.int64)
             for f in self.factors]
        )
        self.edge_rho = np.concatenate(rho_chunks)
        self.edge_alpha = np.concatenate(alpha_chunks)

        var_dims = np.asarray(dims, dtype=np.int64)
        payload = var_dims[self.edge_var]
        self.edge_offsets = np.zeros(len(edge_var) + 1, dtype=np.int64)
        np.cumsum(payload, out=self.edge_offsets[1:])
        self.total_edge_payload = int(self.edge_offsets[-1])

        self.var_offsets = np.zeros(len(dims) + 1, dtype=np.int64)
        np.cumsum(var_dims, out=self.var_offsets[1:])
        self.z_dim = int(self.var_offsets[-1])

        # payload position -> z position, in edge-creation order
        zmap = np.empty(self.total_edge_payload, dtype=np.int64)
        for e, v in enumerate(edge_var):
            lo, hi = self.edge_offsets[e], self.edge_offsets[e + 1]
            zmap[lo:hi] = np.arange(self.var_offsets[v], self.var_offsets[v + 1])
        self.zmap = zmap

        self.rho_flat = np.repeat(self.edge_rho, payload)
        self.alpha_flat = np.repeat(self.edge_alpha, payload)

        for e, v in enumerate(edge_var):
            self.edges.append(
                Edge(int(self.edge_factor[e]), v,
                     float(self.edge_rho[e]), float(self.edge_alpha[e]),
                     int(payload[e]))
            )

        order = np.argsort(self.edge_var, kind="stable")
        counts = np.bincount(self.edge_var, minlength=len(dims))
        splits = np.cumsum(counts)[:-1]
        self.var_incident_edges = np.split(order, splits)
        self.z_weights = np.empty(self.z_dim)
        for var in self.variables:
            var.degree = int(counts[var.id])
            self._refresh_weight(var.id)
        return self

    def _refresh_weight(self, var_id):
        """Recompute one variable's weight_sum in incident-edge creation order."""
        incident = self.var_incident_edges[var_id]
        total = float(np.add.reduce(self.edge_rho[incident]))
        var = self.variables[var_id]
        var.weight_sum = total
        self.z_weights[self.var_offsets[var_id]:self.var_offsets[var_id + 1]] = total

    def counts(self):
        """Return (variable count, factor count, edge count)."""
        return (len(self.variables), len(self.factors), len(self.edges))

    def variable_slice(self, var_id):
        """Slice of the consensus vector ``z`` holding this variable."""
        return slice(int(self.var_offsets[var_id]), int(self.var_offsets[var_id + 1]))

    def set_edge_params(self, edge_id, rho, alpha):
        """Replace one edge's weights; must not run while a phase is in flight."""
        rho = float(rho)
        alpha = float(alpha)
        if rho <= 0.0 or alpha <= 0.0:
            raise ValueError("rho and alpha must be positive")
        edge = self.edges[edge_id]
        edge.rho = rho
        edge.alpha = alpha
        self.edge_rho[edge_id] = rho
        self.edge_alpha[edge_id] = alpha
        lo, hi = self.edge_offsets[edge_id], self.edge_offsets[edge_id + 1]
        self.rho_flat[lo:hi] = rho
        self.alpha_flat[lo:hi] = alpha
        self._refresh_weight(edge.var)

    def factor_values(self, z, factor_id):
        """Per-slot values of a factor's variables read from ``z``."""
        f = self.factors[factor_id]
        return [z[self.variable_slice(v)] for v in f.neighbor_vars]

    def objective_value(self, z):
        """Sum of factor objectives evaluated at the consensus values."""
        return float(sum(
            f.operator.objective(self.factor_values(z, f.id)) for f in self.factors
        ))

    def constraint_violation(self, z):
        """Largest factor constraint violation at the consensus values."""
        return float(max(
            f.operator.violation(self.factor_values(z, f.id)) for f in self.factors
        ))

    def serialize(self):
        """Render the graph as a versioned JSON document string."""
        doc = {
            "version": DOCUMENT_VERSION,
            "variables": [{"id": v.id, "dim": v.dim} for v in self.variables],
            "factors": [
                {
                    "operator": f.operator.kind,
                    "params": f.operator.to_params(),
                    "vars": list(f.neighbor_vars),
                    "rho": self.edge_rho[f.edge_range[0]:f.edge_range[1]].tolist(),
                    "alpha": self.edge_alpha[f.edge_range[0]:f.edge_range[1]].tolist(),
                }
                for f in self.factors
            ],
        }
        return json.dumps(doc, indent=1)


def serialize(graph):
    """Module-level alias for :meth:`FactorGraph.serialize`."""
    return graph.serialize()


def deserialize(document):
    """Rebuild a frozen graph from a document produced by ``serialize``.

    Accepts the JSON text or the already-parsed dict.  Raises
    ``ValueError`` on malformed documents and unknown operator kinds.
    """
    from .prox import operator_class
    from . import operators  # noqa: F401  (populates the registry)

    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed graph document: {exc}") from exc
    if not isinstance(document, dict):
        raise ValueError("graph document must be a JSON object")
    version = document.get("version")
    if version != DOCUMENT_VERSION:
        raise ValueError(
            f"unsupported graph document version {version!r}; "
            f"expected {DOCUMENT_VERSION!r}"
        )
    for key in ("variables", "factors"):
        if key not in document:
            raise ValueError(f"graph document is missing the '{key}' list")

    builder = GraphBuilder()
    entries = document["variables"]
    for i, entry in enumerate(entries):
        if int(entry.get("id", -1)) != i:
            raise ValueError(
                f"variable ids must be contiguous from 0; entry {i} has id "
                f"{entry.get('id')!r}"
            )
        builder.declare_variable(int(entry["dim"]))
    for i, entry in enumerate(document["factors"]):
        for key in ("operator", "vars"):
            if key not in entry:
                raise ValueError(f"factor entry {i} is missing '{key}'")
        kind = entry["operator"]
        cls = operator_class(kind)
        var_ids = [int(v) for v in entry["vars"]]
        dims = []
        for v in var_ids:
            if not 0 <= v < len(entries):
                raise ValueError(f"factor entry {i} references unknown variable {v}")
            dims.append(int(entries[v]["dim"]))
        op = cls.from_params(entry.get("params", {}), dims)
        builder.add_factor(op, var_ids,
                           rho=entry.get("rho", 1.0),
                           alpha=entry.get("alpha", 1.0))
    return builder.freeze()
