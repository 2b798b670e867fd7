"""Consensus optimization on factor graphs with closed-form prox updates.

Declare variables and factors with :class:`GraphBuilder`, freeze, and
solve with :func:`run`; or generate the packing, control and SVM
instances from :mod:`fgadmm.problems`.
"""

from .engine import (
    AdmmState,
    RunConfig,
    RunReport,
    init_state,
    iterate,
    residuals,
    run,
    update_m,
    update_n,
    update_u,
    update_x,
    update_z,
)
from .graph import Edge, FactorGraph, FunctionNode, GraphBuilder, VariableNode
from .graph import deserialize, serialize
from .operators import (
    Collision,
    Equality,
    HalfPlane,
    LabeledPoint,
    LinearSystem,
    MpcCost,
    MpcDyn,
    MpcInit,
    Quadratic,
    Radius,
    SvmMargin,
    SvmNorm,
    SvmSlack,
    Wall,
    collision_prox,
    equality_prox,
    mpc_cost_prox,
    mpc_dyn_prox,
    mpc_init_prox,
    radius_prox,
    svm_margin_prox,
    svm_norm_prox,
    svm_slack_prox,
    wall_prox,
)
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
    unit_triangle,
)
from .prox import ProxFactor, operator_class, prox_reference, registered_kinds

__version__ = "0.1.0"

__all__ = [
    "AdmmState",
    "Collision",
    "Edge",
    "Equality",
    "FactorGraph",
    "FunctionNode",
    "GraphBuilder",
    "HalfPlane",
    "LabeledPoint",
    "LinearSystem",
    "MpcCost",
    "MpcDyn",
    "MpcInit",
    "MpcSpec",
    "PackingSpec",
    "ProxFactor",
    "Quadratic",
    "Radius",
    "RunConfig",
    "RunReport",
    "SvmMargin",
    "SvmNorm",
    "SvmSlack",
    "SvmSpec",
    "VariableNode",
    "Wall",
    "build_mpc",
    "build_packing",
    "build_svm",
    "collision_prox",
    "deserialize",
    "equality_prox",
    "gen_gaussian_data",
    "init_state",
    "iterate",
    "mpc_cost_prox",
    "mpc_dyn_prox",
    "mpc_init_prox",
    "operator_class",
    "packing_init",
    "pendulum_linearization",
    "prox_reference",
    "radius_prox",
    "registered_kinds",
    "residuals",
    "run",
    "serialize",
    "svm_margin_prox",
    "svm_norm_prox",
    "svm_slack_prox",
    "unit_triangle",
    "update_m",
    "update_n",
    "update_u",
    "update_x",
    "update_z",
    "wall_prox",
]
