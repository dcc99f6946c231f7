"""Built-in example problems.

Two instances ship with the package: a one-variable toy whose regions can be
worked out by hand, and a small input-constrained MPC problem (double
integrator, condensed over the horizon) whose parameter is the initial
state. Run ``python -m certias.examples <dir>`` to write both out as JSON
problem documents.
"""

from __future__ import annotations

import json
import pathlib
import sys

import numpy as np

from certias.geometry import Polyhedron
from certias.mpqp import MpQP


def toy_problem() -> MpQP:
    """1-D instance: minimize 0.5 x^2 + theta x subject to x <= 1, theta in [-3, 3].

    Unconstrained x(theta) = -theta, so the constraint activates exactly for
    theta <= -1 and the slack map at the empty working set is 1 + theta.
    """
    return MpQP(
        H=[[1.0]],
        C=[[1.0]],
        f_lin=[[1.0]],
        f_const=[0.0],
        d_lin=[[0.0]],
        d_const=[1.0],
        theta_set=Polyhedron.box([-3.0], [3.0]),
    )


def double_integrator_problem(horizon: int = 3, u_max: float = 1.0,
                              box: float = 1.5, r_weight: float = 0.1) -> MpQP:
    """Condensed input-constrained MPC for a double integrator.

    States follow x+ = A x + B u with A = [[1, 1], [0, 1]], B = [0.5, 1].
    The decision vector stacks the `horizon` inputs, the parameter is the
    initial state ranging over [-box, box]^2, and |u_k| <= u_max bounds give
    2*horizon constraint rows with a parameter-independent right-hand side.
    """
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    B = np.array([[0.5], [1.0]])
    Q = np.eye(2)
    N = horizon

    # Prediction matrices: x_k = Phi_k x0 + sum_j Gamma_{k,j} u_j.
    Phi = np.vstack([np.linalg.matrix_power(A, k) for k in range(1, N + 1)])
    Gamma = np.zeros((2 * N, N))
    for k in range(1, N + 1):
        for j in range(k):
            Gamma[2 * (k - 1):2 * k, j] = (np.linalg.matrix_power(A, k - 1 - j) @ B).ravel()

    Qbar = np.kron(np.eye(N), Q)
    H = Gamma.T @ Qbar @ Gamma + r_weight * np.eye(N)
    H = 0.5 * (H + H.T)
    f_lin = Gamma.T @ Qbar @ Phi

    C = np.vstack([np.eye(N), -np.eye(N)])
    d_const = np.full(2 * N, u_max)
    return MpQP(
        H=H,
        C=C,
        f_lin=f_lin,
        f_const=np.zeros(N),
        d_lin=np.zeros((2 * N, 2)),
        d_const=d_const,
        theta_set=Polyhedron.box([-box, -box], [box, box]),
    )


def write_problem_files(out_dir) -> list[pathlib.Path]:
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, prob in (("toy", toy_problem()), ("double_integrator", double_integrator_problem())):
        path = out / f"{name}.json"
        path.write_text(json.dumps(prob.to_document(), indent=1) + "\n")
        written.append(path)
    return written


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "problems"
    for p in write_problem_files(target):
        print(p)
