"""Post-certification analytics: slack profiles, iteration CDFs, sweeps.

Everything here is derived from certification output by linear programming
over the stored regions, so each number is reproducible from a saved
partition document. CSV emitters use fixed headers so downstream plotting
scripts can rely on them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from certias.certifier import CertificationResult, certify
from certias.geometry import solve_lp
from certias.lpp import KIND_HYPERCUBE, ErrorModel
from certias.mpqp import MpQP, subproblem_maps
from certias.solver import SLACK_CHECK, Tolerances

log = logging.getLogger("certias.analysis")

INF = math.inf


@dataclass
class SlackProfile:
    """Worst-case primal constraint violation after k executed iterations.

    per_iteration[k] = (k, worst_slack) where worst_slack maximizes
    -mu_j(theta) over every region live at depth k and every constraint row
    j. Regions whose runs have already ended keep contributing their final
    iterate's slack at later depths, because a stopped solver holds its
    iterate. Regions that ended on a singular working set have no iterate
    map and are skipped (counted in skipped_singular).
    """

    per_iteration: list
    skipped_singular: int = 0
    lp_failures: int = 0

    def values(self) -> list:
        return [v for _, v in self.per_iteration]


@dataclass
class SweepTable:
    """Grid of certified worst-case iteration counts.

    rows: (eps_primal, eps_bar, worst_iterations, region_count) sorted by
    (eps_primal, eps_bar) ascending. worst_iterations is math.inf exactly
    when the cell's partition contains an iteration-limit region; emitters
    render it as the string INF. Cells whose certification failed appear in
    annotations instead of rows.
    """

    rows: list = field(default_factory=list)
    annotations: list = field(default_factory=list)


def _region_worst(prob: MpQP, region, working_set) -> Optional[float]:
    """max over rows j and theta in region of -mu_j(theta), or None on an
    LP failure."""
    maps = subproblem_maps(prob, working_set)
    if maps.singular:
        return None
    F, g = maps.mu_map.F, maps.mu_map.g
    worst = -INF
    for j in range(F.shape[0]):
        res = solve_lp(-F[j], region, sense="max")
        if res.status != "optimal":
            log.warning("slack LP %s on a region with %d rows; excluded",
                        res.status, region.nrows)
            return None
        worst = max(worst, res.value - g[j])
    return worst


def slack_profile(prob: MpQP, result: CertificationResult) -> SlackProfile:
    """Per-depth worst primal slack from a trace-carrying certification.

    Live regions at depth k are the recorded pre-split regions about to run
    their (k+1)-th iteration; their slack map is the one of the working set
    they arrived with. Ended regions join from their final depth onward.
    """
    if result.trace is None:
        raise ValueError("slack_profile needs certify(..., record_trace=True)")
    live: dict[int, list] = {}
    for rec in result.trace:
        if rec.state.mode == SLACK_CHECK:
            live.setdefault(rec.slack_depth, []).append(
                (rec.region, rec.state.working_set))
    holds = []
    skipped = 0
    for reg in result.regions:
        if reg.status == "degenerate":
            skipped += 1
            continue
        holds.append((reg.iterations, reg.region, reg.sequence[-1].working_set))
    depth = max([*live.keys(), *(h[0] for h in holds)], default=0)

    cache: dict = {}
    failures = 0
    per_iteration = []
    for k in range(depth + 1):
        worst = -INF
        candidates = list(live.get(k, []))
        candidates += [(r, w) for start, r, w in holds if start <= k]
        for region, working_set in candidates:
            key = (id(region), tuple(working_set))
            if key not in cache:
                cache[key] = _region_worst(prob, region, working_set)
                if cache[key] is None:
                    failures += 1
            if cache[key] is not None:
                worst = max(worst, cache[key])
        per_iteration.append((k, worst))
    return SlackProfile(per_iteration, skipped_singular=skipped,
                        lp_failures=failures)


def iteration_cdf(result: CertificationResult) -> list:
    """(k, fraction of regions done within k iterations) for k = 1..max.

    Fractions weigh regions by count, not volume. Regions that hit the
    iteration limit never count as done; runs ending on a singular working
    set count at the iteration where they stopped.
    """
    if not result.regions:
        raise ValueError("empty certification result")
    top = max(r.iterations for r in result.regions)
    total = len(result.regions)
    out = []
    for k in range(1, top + 1):
        done = sum(1 for r in result.regions
                   if r.status != "iter_limit" and r.iterations <= k)
        out.append((k, done / total))
    return out


def sweep(prob: MpQP, eps_primal_list, eps_bar_list,
          tol_base: Optional[Tolerances] = None, *, workers: int = 1) -> SweepTable:
    """Certify the cross product of tolerances and error bounds.

    Rows come out sorted by (eps_primal, eps_bar) ascending regardless of
    input order. A cell whose certification raises is recorded as an
    annotation and the sweep moves on.
    """
    if not eps_primal_list or not eps_bar_list:
        raise ValueError("tolerance and error-bound lists must be nonempty")
    if any(ep <= 0 for ep in eps_primal_list):
        raise ValueError("eps_primal values must be positive")
    if any(eb < 0 for eb in eps_bar_list):
        raise ValueError("eps_bar values must be nonnegative")
    tol_base = tol_base or Tolerances()

    table = SweepTable()
    for ep in sorted(eps_primal_list):
        for eb in sorted(eps_bar_list):
            tol = Tolerances(eps_primal=ep, eps_dual=tol_base.eps_dual,
                             iter_limit=tol_base.iter_limit)
            model = (ErrorModel() if eb == 0.0
                     else ErrorModel(kind=KIND_HYPERCUBE, bound=eb))
            try:
                result = certify(prob, tol, model, workers=workers)
            except Exception as exc:
                log.warning("sweep cell (%g, %g) failed: %s", ep, eb, exc)
                table.annotations.append((ep, eb, f"{type(exc).__name__}: {exc}"))
                continue
            capped = any(r.status == "iter_limit" for r in result.regions)
            worst = INF if capped else max(r.iterations for r in result.regions)
            table.rows.append((ep, eb, worst, len(result.regions)))
    return table


def profile_to_csv(profile: SlackProfile) -> str:
    lines = ["k,worst_slack"]
    lines += [f"{k},{float(v)!r}" for k, v in profile.per_iteration]
    return "\n".join(lines) + "\n"


def cdf_to_csv(cdf) -> str:
    lines = ["k,fraction"]
    lines += [f"{k},{float(v)!r}" for k, v in cdf]
    return "\n".join(lines) + "\n"


def sweep_to_csv(table: SweepTable) -> str:
    lines = ["eps_primal,eps_bar,worst_iterations,region_count"]
    for ep, eb, worst, count in table.rows:
        cell = "INF" if math.isinf(worst) else str(int(worst))
        lines.append(f"{float(ep)!r},{float(eb)!r},{cell},{count}")
    return "\n".join(lines) + "\n"


def profile_to_json(profile: SlackProfile) -> dict:
    return {
        "per_iteration": [{"k": k, "worst_slack": float(v)}
                          for k, v in profile.per_iteration],
        "skipped_singular": profile.skipped_singular,
        "lp_failures": profile.lp_failures,
    }


def cdf_to_json(cdf) -> dict:
    return {"cdf": [{"k": k, "fraction": float(v)} for k, v in cdf]}


def sweep_to_json(table: SweepTable) -> dict:
    rows = []
    for ep, eb, worst, count in table.rows:
        rows.append({"eps_primal": float(ep), "eps_bar": float(eb),
                     "worst_iterations": "INF" if math.isinf(worst) else int(worst),
                     "region_count": count})
    notes = [{"eps_primal": float(ep), "eps_bar": float(eb), "message": msg}
             for ep, eb, msg in table.annotations]
    return {"rows": rows, "annotations": notes}
