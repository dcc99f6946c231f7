"""Monte-Carlo checks tying certified regions back to actual solver runs.

Certification claims that every parameter's realized state sequence appears
among the certified ones. This module samples parameters (and, with a
nonzero error model, error sequences), runs the solver, and compares. It
also provides a witness search in the opposite direction: given a certified
region, find an error sequence that actually realizes its sequence, and an
enumeration-based optimality oracle independent of the solver iteration.

Samples within a small normalized distance of any certified-region boundary
are skipped rather than judged: tie-breaking on shared boundaries depends on
the region representation, and the guarantees are interior statements.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from certias.certifier import CertificationResult, CertifiedRegion
from certias.geometry import bounding_box, contains
from certias.lpp import KIND_HYPERCUBE, KIND_NONE, ErrorModel
from certias.mpqp import MpQP
from certias.solver import (
    DUAL_CHECK,
    PASS_INDEX,
    SLACK_CHECK,
    TERMINATED_OPTIMAL,
    ErrorInjector,
    Tolerances,
    run,
)

DELTA_MARGIN = 1e-7


class InfeasibleProblemError(RuntimeError):
    """The QP at this parameter has no feasible point."""


@dataclass
class ValidationReport:
    """Outcome of a conformance sweep.

    mismatches holds (theta, realized sequence, ids of regions containing
    theta); conformance passed exactly when it is empty. coverage_gaps are
    parameters no certified region contains. Entries are sorted by theta so
    reports are reproducible regardless of evaluation order.
    """

    samples_total: int = 0
    samples_outside: int = 0
    samples_skipped_boundary: int = 0
    mismatches: list = field(default_factory=list)
    coverage_gaps: list = field(default_factory=list)
    realization_failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches and not self.coverage_gaps

    def summary(self) -> str:
        return (f"samples={self.samples_total} outside={self.samples_outside} "
                f"boundary_skips={self.samples_skipped_boundary} "
                f"mismatches={len(self.mismatches)} "
                f"coverage_gaps={len(self.coverage_gaps)}")


def _tolerances_from_settings(settings: dict) -> Tolerances:
    return Tolerances(eps_primal=settings["eps_primal"],
                      eps_dual=settings["eps_dual"],
                      iter_limit=settings["iter_limit"])


def model_from_description(desc: dict) -> ErrorModel:
    """Rebuild an ErrorModel from its describe() dictionary.

    Only the kinds that round-trip through plain numbers are supported here;
    a polyhedral set does not survive the summary form.
    """
    kind = desc.get("kind", KIND_NONE)
    if kind == "polyhedral":
        raise ValueError("polyhedral error models do not round-trip through "
                         "settings; pass the model explicitly")
    schedule = desc.get("schedule")
    if schedule is not None:
        schedule = tuple(model_from_description(e) for e in schedule)
    return ErrorModel(kind=kind, bound=desc.get("bound", 0.0),
                      rel_bound=desc.get("rel_bound", 0.0),
                      schedule=schedule,
                      perturb_dual=desc.get("perturb_dual", False))


def _boundary_rows(result: CertificationResult) -> tuple[np.ndarray, np.ndarray]:
    """All region rows stacked, with unit-normalized coefficients."""
    blocks_A, blocks_b = [], []
    for r in result.regions:
        if r.region.nrows:
            blocks_A.append(r.region.A)
            blocks_b.append(r.region.b)
    if not blocks_A:
        return np.zeros((0, result.regions[0].region.dim)), np.zeros(0)
    A = np.vstack(blocks_A)
    b = np.concatenate(blocks_b)
    norms = np.linalg.norm(A, axis=1)
    norms[norms == 0.0] = 1.0
    return A / norms[:, None], b / norms


def _draw_injector(model: ErrorModel, rng: np.random.Generator, m: int,
                   n_steps: int) -> ErrorInjector:
    """One admissible error sequence, uniform per step within the model."""
    vecs = []
    for k in range(n_steps):
        mk = model.at(k)
        if mk.kind == KIND_NONE or (mk.kind == KIND_HYPERCUBE and mk.bound == 0.0):
            vecs.append(np.zeros(m))
        elif mk.kind == KIND_HYPERCUBE:
            vecs.append(rng.uniform(-mk.bound, mk.bound, size=m))
        else:
            raise ValueError(f"cannot sample from error model kind {mk.kind!r}")
    return ErrorInjector.from_sequence(vecs, perturb_dual=model.perturb_dual)


def validate_conformance(prob: MpQP, result: CertificationResult,
                         n_samples: int = 10000, seed: int = 0,
                         model: Optional[ErrorModel] = None) -> ValidationReport:
    """Sample parameters, run the solver, and compare realized sequences.

    Parameters are drawn uniformly from the bounding box of the parameter
    set; draws outside the set are counted and ignored, draws within
    DELTA_MARGIN (normalized) of any certified-region boundary are counted
    as skipped. Each remaining draw gets a fresh error sequence admissible
    under the result's model (or the `model` override) and its realized run
    must match the sequence of some certified region containing it.

    Deterministic for a fixed seed.
    """
    if result.problem_digest != prob.digest():
        raise ValueError("certification result belongs to a different problem")
    if model is None:
        model = model_from_description(result.settings["error_model"])
    tol = _tolerances_from_settings(result.settings)
    rng = np.random.default_rng(seed)
    lo, hi = bounding_box(prob.theta_set)
    bound_A, bound_b = _boundary_rows(result)
    n_steps = 2 * tol.iter_limit + 2

    report = ValidationReport(samples_total=n_samples)
    for _ in range(n_samples):
        theta = rng.uniform(lo, hi)
        if not contains(prob.theta_set, theta, slack=1e-9):
            report.samples_outside += 1
            continue
        if bound_A.size and np.min(np.abs(bound_A @ theta - bound_b)) < DELTA_MARGIN:
            report.samples_skipped_boundary += 1
            continue
        injector = _draw_injector(model, rng, prob.m, n_steps)
        realized = tuple(run(prob, theta, injector=injector, tol=tol).sequence)
        host_ids = [i for i, r in enumerate(result.regions)
                    if contains(r.region, theta, slack=1e-9)]
        if not host_ids:
            report.coverage_gaps.append(tuple(theta))
            continue
        if not any(tuple(result.regions[i].sequence) == realized for i in host_ids):
            report.mismatches.append((tuple(theta), realized, host_ids))

    report.mismatches.sort(key=lambda entry: entry[0])
    report.coverage_gaps.sort()
    return report


def _step_indices(sequence) -> list[int]:
    """Decision index taken at each executed state of a certified sequence.

    The final terminal marker consumes no decision itself. A degenerate
    marker still records the add that exposed the singularity (its working
    set ends with the chosen row), so that step must be realized like any
    other add. An iteration-limit marker follows a dual pass.
    """
    out = []
    for state, nxt in zip(sequence, sequence[1:]):
        if state.mode == SLACK_CHECK:
            if nxt.mode == TERMINATED_OPTIMAL:
                out.append(PASS_INDEX)
            else:
                out.append(nxt.working_set[-1])
        elif state.mode == DUAL_CHECK:
            if len(nxt.working_set) == len(state.working_set):
                out.append(PASS_INDEX)
            else:
                remaining = list(nxt.working_set)
                dropped = None
                for w in state.working_set:
                    if w in remaining:
                        remaining.remove(w)
                    else:
                        dropped = w
                out.append(dropped)
        else:
            raise ValueError(f"unexpected mode {state.mode!r} mid-sequence")
    return out


def _vertex_for(index: int, m: int, bound: float) -> np.ndarray:
    """Hypercube vertex most favorable to the decision `index`.

    Every transition condition is monotone in each error component (smaller
    error on the chosen row helps it win, larger error elsewhere keeps the
    competition out), so if any admissible error realizes the decision, this
    vertex does. PASS decisions want every component at the upper bound.
    Dual errors enter through the working set's constraint rows, which is
    exactly the labeling the certified sequence uses.
    """
    eps = np.full(m, bound)
    if index != PASS_INDEX:
        eps[index] = -bound
    return eps


def search_realization(prob: MpQP, region: CertifiedRegion, theta,
                       model: ErrorModel, budget: int = 50,
                       tol: Optional[Tolerances] = None):
    """Look for an error sequence making the solver trace this region's
    sequence at theta.

    Tries the per-step extreme hypercube vertices first (sufficient whenever
    a witness exists at all, by monotonicity of each decision condition in
    the error), then falls back to `budget` random admissible draws. Returns
    (found, witness), the witness being the per-step error vectors.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if not contains(region.region, theta, slack=1e-9):
        raise ValueError("theta lies outside the region")
    tol = tol or Tolerances()
    target = tuple(region.sequence)
    indices = _step_indices(region.sequence)

    def attempt(vectors) -> bool:
        injector = ErrorInjector.from_sequence(vectors,
                                               perturb_dual=model.perturb_dual)
        got = run(prob, theta, injector=injector, tol=tol)
        return tuple(got.sequence) == target

    zero = [np.zeros(prob.m)]
    if attempt(zero):
        return True, zero

    bounds = []
    for k in range(len(indices)):
        mk = model.at(k)
        if mk.kind == KIND_HYPERCUBE:
            bounds.append(mk.bound)
        elif mk.kind == KIND_NONE:
            bounds.append(0.0)
        else:
            raise ValueError(f"cannot search over error model kind {mk.kind!r}")
    vertex = [_vertex_for(idx, prob.m, b) for idx, b in zip(indices, bounds)]
    if attempt(vertex):
        return True, vertex

    rng = np.random.default_rng(0)
    for _ in range(budget):
        draw = [rng.uniform(-b, b, size=prob.m) if b else np.zeros(prob.m)
                for b in bounds]
        if attempt(draw):
            return True, draw
    return False, None


def brute_force_solve(prob: MpQP, theta) -> tuple[np.ndarray, tuple[int, ...]]:
    """Optimality oracle by working-set enumeration; independent of the
    iterative solver.

    Enumerates working sets of size up to n_x with full-row-rank constraint
    blocks, solves each equality-constrained KKT system, and returns the
    point that is primal feasible (1e-9) with nonnegative multipliers
    (-1e-9). Strict convexity makes it unique. Intended for m <= 12.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if prob.m > 12:
        raise ValueError("enumeration oracle limited to m <= 12")
    f = prob.f(theta)
    d = prob.d(theta)
    H, C = prob.H, prob.C
    for size in range(prob.n_x + 1):
        for combo in itertools.combinations(range(prob.m), size):
            C_W = C[list(combo)]
            if size and np.linalg.matrix_rank(C_W, tol=1e-10) < size:
                continue
            K = np.block([[H, C_W.T],
                          [C_W, np.zeros((size, size))]]) if size else H
            rhs = np.concatenate([-f, d[list(combo)]]) if size else -f
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:prob.n_x], sol[prob.n_x:]
            if np.all(C @ x <= d + 1e-9) and np.all(lam >= -1e-9):
                return x, combo
    raise InfeasibleProblemError("no working set satisfies the optimality "
                                 "conditions; the QP is likely infeasible")
