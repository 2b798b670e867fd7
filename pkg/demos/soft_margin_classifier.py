"""
Training a soft-margin classifier
=================================

Two Gaussian point clouds, labels -1 and +1, separated along the first
axis.  The graph gives every point its own copy of the weight vector
and its own slack, chains the copies with equality factors, and shares
one bias.  Training is then nothing but consensus between per-point
margin factors and the ridge penalty.
"""

import numpy as np

from fgadmm.engine import RunConfig, run
from fgadmm.problems import (
    SvmSpec,
    build_svm,
    gen_gaussian_data,
    svm_accuracy,
    svm_objective,
    svm_qp_solution,
)

# 100 labeled points, 2 features, clouds 4 apart
points = gen_gaussian_data(100, 2, 4.0, seed=0)
spec = SvmSpec(points, lam=1.0)
graph = build_svm(spec)
print("variables, factors, edges:", graph.counts())

solution, report = run(
    graph, RunConfig(max_iterations=20000, primal_tol=1e-9, dual_tol=1e-9))
print(f"converged={report.converged} after {report.iterations} iterations")

# weights live on variable 0 (all copies agree), the bias after them
w, b = solution[0], float(solution[100][0])
print(f"\nw = ({w[0]:.4f}, {w[1]:.4f})   b = {b:.4f}")
print(f"training accuracy: {svm_accuracy(points, w, b):.3f}")
print(f"objective: {svm_objective(points, spec.lam, w, b):.6f}")

# the box-constrained dual solved directly gives the same classifier
reference = svm_qp_solution(points, spec.lam)
print(f"direct-solve objective: {reference['objective']:.6f}")
print(f"direct-solve w = ({reference['w'][0]:.4f}, {reference['w'][1]:.4f})"
      f"   b = {reference['b']:.4f}")
