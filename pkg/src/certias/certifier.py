"""Region-wise simulation of the solver automaton.

Where the pointwise solver evaluates one decision vector and branches, the
certifier splits the current parameter region into the subsets on which each
branch is taken, using the same transition rule. Exploring the resulting
tree to its leaves yields, for every parameter in the initial set, the exact
state sequence the solver will execute and hence its iteration count, before
the solver ever runs.

With a nonzero error model the per-branch subsets are inflated by the lpp
module instead of sliced exactly. They may then overlap; each leaf still
certifies that its sequence is realizable only within its region, so a
parameter covered by several leaves gets the worst case over all of them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from certias.geometry import Polyhedron, is_empty, lp_call_count, project_fm, remove_redundant
from certias.lpp import (
    KIND_HYPERCUBE,
    KIND_NONE,
    KIND_POLYHEDRAL,
    KIND_RELATIVE,
    ErrorModel,
    lift_partition_project,
    rel_to_abs,
)
from certias.mpqp import MpQP, subproblem_maps
from certias.solver import (
    DEGENERATE,
    DUAL_CHECK,
    PASS_INDEX,
    SLACK_CHECK,
    TERMINATED_ITER_LIMIT,
    TERMINATED_OPTIMAL,
    SolverState,
    Tolerances,
    transition,
)

__all__ = [
    "BudgetExceededError",
    "CertificationResult",
    "CertifiedRegion",
    "RegionNode",
    "TraceRecord",
    "certify",
    "halfplane_family",
    "partition_step",
    "sequence_key",
    "transition",
]


class BudgetExceededError(RuntimeError):
    """Raised when the live-region frontier outgrows the configured cap."""


_MODE_RANK = {
    SLACK_CHECK: 0,
    DUAL_CHECK: 1,
    TERMINATED_OPTIMAL: 2,
    TERMINATED_ITER_LIMIT: 3,
    DEGENERATE: 4,
}

_STATUS_BY_MODE = {
    TERMINATED_OPTIMAL: "optimal",
    TERMINATED_ITER_LIMIT: "iter_limit",
    DEGENERATE: "degenerate",
}


def sequence_key(sequence) -> tuple:
    """Sort key making region order independent of exploration order."""
    return tuple((_MODE_RANK[s.mode], s.working_set) for s in sequence)


def _slack_count(sequence) -> int:
    return sum(1 for s in sequence if s.mode == SLACK_CHECK)


@dataclass
class RegionNode:
    """One frontier entry: a region, the state about to execute there, and
    the states already executed on the way down."""

    region: Polyhedron
    state: SolverState
    sequence: tuple[SolverState, ...]

    @property
    def depth(self) -> int:
        """Automaton step index k."""
        return len(self.sequence)

    @property
    def slack_depth(self) -> int:
        """Iterations executed so far (slack checks in the sequence)."""
        return _slack_count(self.sequence)


@dataclass
class CertifiedRegion:
    """A leaf of the exploration tree.

    sequence lists executed states plus the final terminal marker, exactly
    as solver.run reports it for any parameter inside the region.
    """

    region: Polyhedron
    sequence: tuple[SolverState, ...]
    status: str
    iterations: int


@dataclass
class TraceRecord:
    """One expansion, kept when tracing: parent region and its children."""

    region: Polyhedron
    state: SolverState
    step_k: int
    slack_depth: int
    children: list[tuple[int, Polyhedron]]


@dataclass
class CertificationResult:
    regions: list[CertifiedRegion]
    problem_digest: str
    settings: dict
    stats: dict
    trace: Optional[list[TraceRecord]] = field(default=None, repr=False)


def _argmin_family(n: int, pick: int, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Half-planes selecting component `pick` as the winner.

    Rows: z_pick <= -threshold, and z_pick <= z_r for every other r. Ties on
    the pairwise boundaries are shared between families; the pointwise rule
    resolves them by lowest index, so shared boundaries are where certified
    regions may touch.
    """
    A = np.zeros((n, n))
    b = np.zeros(n)
    A[0, pick] = 1.0
    b[0] = -threshold
    row = 1
    for other in range(n):
        if other != pick:
            A[row, pick] = 1.0
            A[row, other] = -1.0
            row += 1
    return A, b


def halfplane_family(state: SolverState, m: int, tol: Tolerances
                     ) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """Decision half-planes for a state, as (A, b, index) triples over the
    state's decision vector (slack: length m; dual: length of working set).

    The first triple is the pass branch (terminate, or keep the working
    set); the rest pick each candidate component as the most negative one
    below the threshold. Indices are constraint rows, PASS_INDEX for pass.
    """
    if state.mode == SLACK_CHECK:
        n, threshold = m, tol.eps_primal
        labels = list(range(m))
    elif state.mode == DUAL_CHECK:
        n, threshold = len(state.working_set), tol.dual
        labels = list(state.working_set)
    else:
        raise ValueError(f"no half-plane family for mode {state.mode!r}")
    fams = [(-np.eye(n), threshold * np.ones(n), PASS_INDEX)]
    for pos in range(n):
        A, b = _argmin_family(n, pos, threshold)
        fams.append((A, b, labels[pos]))
    return fams


def _coordinate_slice(err_set: Polyhedron, coords: tuple[int, ...]) -> Polyhedron:
    """Projection of the error set onto the given coordinates, in order."""
    rest = [c for c in range(err_set.dim) if c not in coords]
    perm = list(coords) + rest
    shuffled = Polyhedron(err_set.A[:, perm], err_set.b)
    return project_fm(shuffled, len(coords))


def _effective_model(model: ErrorModel, k: int, state: SolverState,
                     zmap, region: Polyhedron) -> ErrorModel:
    """Error model actually applied at this node.

    Relative bounds are converted against the node's own region and decision
    map, which is as tight as the formulation allows. Dual checks see no
    error unless the model opts in, in which case the working-set slice of
    the error set applies.
    """
    mk = model.at(k)
    if state.mode == DUAL_CHECK:
        if not model.perturb_dual or mk.kind == KIND_NONE:
            return ErrorModel()
        if mk.kind == KIND_HYPERCUBE:
            return ErrorModel(kind=KIND_HYPERCUBE, bound=mk.bound)
        if mk.kind == KIND_POLYHEDRAL:
            return ErrorModel(kind=KIND_POLYHEDRAL,
                              set=_coordinate_slice(mk.set, state.working_set))
        return ErrorModel(kind=KIND_HYPERCUBE,
                          bound=rel_to_abs(zmap, region, mk.rel_bound))
    if mk.kind == KIND_RELATIVE:
        return ErrorModel(kind=KIND_HYPERCUBE,
                          bound=rel_to_abs(zmap, region, mk.rel_bound))
    if mk.schedule is not None:
        return ErrorModel(kind=mk.kind, bound=mk.bound, set=mk.set,
                          rel_bound=mk.rel_bound)
    return mk


def partition_step(region: Polyhedron, state: SolverState, prob: MpQP,
                   tol: Tolerances, model: ErrorModel, k: int
                   ) -> list[tuple[int, Polyhedron]]:
    """Split a region by the decisions the state can take inside it.

    Returns (index, subregion) pairs for every branch whose subregion is
    nonempty; subregions come back in reduced form. With a zero model the
    pairs tile the region exactly; with errors they cover it and overlap.
    """
    maps = subproblem_maps(prob, state.working_set)
    if maps.singular:
        raise ValueError("cannot partition on a singular subproblem")
    zmap = maps.mu_map if state.mode == SLACK_CHECK else maps.lambda_map
    fams = halfplane_family(state, prob.m, tol)
    eff = _effective_model(model, k, state, zmap, region)
    kids = lift_partition_project(region, [(A, b) for A, b, _ in fams], zmap, eff)
    out = []
    for (A, b, idx), kid in zip(fams, kids):
        if is_empty(kid):
            continue
        out.append((idx, remove_redundant(kid)))
    return out


def _expand(node: RegionNode, prob: MpQP, tol: Tolerances, model: ErrorModel,
            record_trace: bool):
    """Process one popped node. Pure: no shared mutable state.

    Returns (children, finals, trace_record, pruned_count). Mirrors the
    pointwise loop exactly: iteration-cap check first, then the singular
    check, then the decision split.
    """
    state = node.state
    if state.mode == SLACK_CHECK and node.slack_depth == tol.iter_limit:
        seq = node.sequence + (SolverState(state.working_set, TERMINATED_ITER_LIMIT),)
        leaf = CertifiedRegion(node.region, seq, "iter_limit", _slack_count(seq))
        return [], [leaf], None, 0
    maps = subproblem_maps(prob, state.working_set)
    if maps.singular:
        seq = node.sequence + (state, SolverState(state.working_set, DEGENERATE))
        leaf = CertifiedRegion(node.region, seq, "degenerate", _slack_count(seq))
        return [], [leaf], None, 0
    kids = partition_step(node.region, state, prob, tol, model, node.depth)
    n_branches = len(halfplane_family(state, prob.m, tol))
    seqx = node.sequence + (state,)
    children, finals = [], []
    for idx, kid_region in kids:
        child_state = transition(state, idx)
        if child_state.terminal:
            seq = seqx + (child_state,)
            finals.append(CertifiedRegion(kid_region, seq,
                                          _STATUS_BY_MODE[child_state.mode],
                                          _slack_count(seq)))
        else:
            children.append(RegionNode(kid_region, child_state, seqx))
    rec = None
    if record_trace:
        rec = TraceRecord(node.region, state, node.depth, node.slack_depth, kids)
    return children, finals, rec, n_branches - len(kids)


def certify(prob: MpQP, tol: Optional[Tolerances] = None,
            model: Optional[ErrorModel] = None, *, workers: int = 1,
            max_live: int = 20000, record_trace: bool = False
            ) -> CertificationResult:
    """Explore the whole parameter set and certify every leaf.

    workers > 1 expands the frontier in parallel batches; the result is
    canonically sorted by sequence, so the output does not depend on the
    worker count or exploration order. max_live caps the frontier size to
    guard against error-model-induced blowup (BudgetExceededError).

    record_trace keeps every expansion (parent region, state, children) for
    post-hoc analysis; leave it off for large problems.
    """
    tol = tol or Tolerances()
    model = model or ErrorModel()
    lp_before = lp_call_count()
    root = RegionNode(remove_redundant(prob.theta_set), SolverState((), SLACK_CHECK), ())
    stack = [root]
    finals: list[CertifiedRegion] = []
    trace: Optional[list[TraceRecord]] = [] if record_trace else None
    explored = 0
    pruned = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while stack:
            if len(stack) > max_live:
                raise BudgetExceededError(
                    f"live regions ({len(stack)}) exceed max_live={max_live}")
            if pool is not None and len(stack) > 1:
                batch, stack = stack, []
                results = list(pool.map(
                    lambda n: _expand(n, prob, tol, model, record_trace), batch))
            else:
                node = stack.pop()
                results = [_expand(node, prob, tol, model, record_trace)]
            for children, leaf_list, rec, n_pruned in results:
                explored += 1
                pruned += n_pruned
                finals.extend(leaf_list)
                stack.extend(children)
                if rec is not None:
                    trace.append(rec)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    finals.sort(key=lambda r: sequence_key(r.sequence))
    settings = {
        "eps_primal": tol.eps_primal,
        "eps_dual": tol.dual,
        "iter_limit": tol.iter_limit,
        "error_model": model.describe(),
    }
    stats = {
        "regions": len(finals),
        "explored": explored,
        "pruned": pruned,
        "lp_calls": lp_call_count() - lp_before,
    }
    return CertificationResult(regions=finals, problem_digest=prob.digest(),
                               settings=settings, stats=stats, trace=trace)
