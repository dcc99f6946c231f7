"""Command-line front end: certify, validate, sweep, and report.

All documents are JSON with matrices as row-major nested arrays; floats are
written in their shortest round-tripping decimal form, so reading a document
back reproduces every matrix bit for bit. Keys are sorted and indentation is
fixed, which makes output documents byte-stable: the same problem, flags,
and seed give identical bytes no matter how many workers ran.

Exit codes: 0 success, 1 validation found mismatches or coverage gaps,
2 input problems (missing or malformed files, bad flag values), 3 anything
unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import pathlib
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from certias.analysis import (
    cdf_to_csv,
    cdf_to_json,
    iteration_cdf,
    profile_to_csv,
    profile_to_json,
    slack_profile,
    sweep,
    sweep_to_csv,
    sweep_to_json,
)
from certias.certifier import CertificationResult, CertifiedRegion, certify
from certias.geometry import Polyhedron
from certias.lpp import (
    KIND_HYPERCUBE,
    KIND_NONE,
    KIND_POLYHEDRAL,
    KIND_RELATIVE,
    ErrorModel,
)
from certias.mpqp import MpQP, load_problem
from certias.solver import SolverState, Tolerances
from certias.validation import validate_conformance

log = logging.getLogger("certias.cli")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


@dataclass
class RunConfig:
    """Effective settings of one invocation.

    Everything except the worker count and the output path is echoed into
    the output document; those two cannot affect the computed content, and
    leaving them out keeps documents byte-identical across machines and
    --workers values.
    """

    command: str
    problem_path: Optional[str] = None
    partition_path: Optional[str] = None
    out: Optional[str] = None
    primal_tol: float = 1e-6
    dual_tol: Optional[float] = None
    iter_limit: int = 15
    eps_bar: Optional[float] = None
    error_model_path: Optional[str] = None
    rel_bound: Optional[float] = None
    samples: int = 10000
    seed: int = 0
    workers: int = 1
    metric: Optional[str] = None
    primal_tols: Optional[list] = None
    eps_bars: Optional[list] = None

    def echo(self) -> dict:
        keep = ("command", "problem_path", "partition_path", "primal_tol",
                "dual_tol", "iter_limit", "eps_bar", "error_model_path",
                "rel_bound", "samples", "seed", "metric", "primal_tols",
                "eps_bars")
        return {k: getattr(self, k) for k in keep}

    def tolerances(self) -> Tolerances:
        return Tolerances(eps_primal=self.primal_tol, eps_dual=self.dual_tol,
                          iter_limit=self.iter_limit)


class InputError(Exception):
    """Anything wrong with files or flag values the user gave us."""


def _setup_logging() -> None:
    name = os.environ.get("CERTIAS_LOG", "warn").lower()
    if name not in _LOG_LEVELS:
        raise InputError(f"CERTIAS_LOG must be one of {sorted(_LOG_LEVELS)}, "
                         f"got {name!r}")
    logging.basicConfig(level=_LOG_LEVELS[name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_json(path: str) -> dict:
    p = pathlib.Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _load_mpqp(path: str) -> MpQP:
    try:
        return load_problem(_load_json(path))
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"bad problem document {path}: {exc}") from exc


def model_to_document(model: ErrorModel) -> dict:
    doc: dict = {"kind": model.kind}
    if model.kind == KIND_HYPERCUBE:
        doc["eps_bar"] = model.bound
    elif model.kind == KIND_POLYHEDRAL:
        doc["set"] = {"A": model.set.A.tolist(), "b": model.set.b.tolist()}
    elif model.kind == KIND_RELATIVE:
        doc["rel_bound"] = model.rel_bound
    if model.perturb_dual:
        doc["perturb_dual"] = True
    if model.schedule is not None:
        doc["schedule"] = [model_to_document(e) for e in model.schedule]
    return doc


def model_from_document(doc: dict) -> ErrorModel:
    kind = doc.get("kind", KIND_NONE)
    schedule = doc.get("schedule")
    if schedule is not None:
        schedule = tuple(model_from_document(e) for e in schedule)
    err_set = None
    if kind == KIND_POLYHEDRAL:
        spec = doc["set"]
        err_set = Polyhedron(np.asarray(spec["A"], dtype=float),
                             np.asarray(spec["b"], dtype=float))
    return ErrorModel(kind=kind, bound=doc.get("eps_bar", 0.0), set=err_set,
                      rel_bound=doc.get("rel_bound", 0.0), schedule=schedule,
                      perturb_dual=doc.get("perturb_dual", False))


def build_model(cfg: RunConfig) -> Optional[ErrorModel]:
    given = [name for name, flag in (("--error-model", cfg.error_model_path),
                                     ("--eps-bar", cfg.eps_bar),
                                     ("--rel-bound", cfg.rel_bound))
             if flag is not None]
    if len(given) > 1:
        raise InputError(f"{' and '.join(given)} are mutually exclusive")
    if cfg.error_model_path is not None:
        try:
            return model_from_document(_load_json(cfg.error_model_path))
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"bad error-model document "
                             f"{cfg.error_model_path}: {exc}") from exc
    if cfg.rel_bound is not None:
        return ErrorModel(kind=KIND_RELATIVE, rel_bound=cfg.rel_bound)
    if cfg.eps_bar is not None and cfg.eps_bar != 0.0:
        return ErrorModel(kind=KIND_HYPERCUBE, bound=cfg.eps_bar)
    return None


def result_to_document(result: CertificationResult, cfg: RunConfig) -> dict:
    regions = []
    for r in result.regions:
        regions.append({
            "A": r.region.A.tolist(),
            "b": r.region.b.tolist(),
            "sequence": [{"working_set": list(s.working_set), "mode": s.mode}
                         for s in r.sequence],
            "status": r.status,
            "iterations": r.iterations,
        })
    return {"config": cfg.echo(), "problem_digest": result.problem_digest,
            "settings": result.settings, "regions": regions,
            "stats": result.stats}


def partition_to_result(doc: dict) -> CertificationResult:
    try:
        regions = []
        for entry in doc["regions"]:
            poly = Polyhedron(np.asarray(entry["A"], dtype=float),
                              np.asarray(entry["b"], dtype=float))
            seq = tuple(SolverState(tuple(s["working_set"]), s["mode"])
                        for s in entry["sequence"])
            regions.append(CertifiedRegion(poly, seq, entry["status"],
                                           entry["iterations"]))
        return CertificationResult(regions=regions,
                                   problem_digest=doc["problem_digest"],
                                   settings=doc["settings"],
                                   stats=doc["stats"])
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"bad partition document: {exc}") from exc


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text_csv: str, json_doc: dict, out: Optional[str]) -> None:
    """Write CSV or a JSON mirror, chosen by the output extension."""
    if out is None:
        sys.stdout.write(text_csv)
        return
    path = pathlib.Path(out)
    if path.suffix == ".json":
        path.write_text(dump_document(json_doc))
    else:
        path.write_text(text_csv)


def _require(cfg: RunConfig, field_name: str, flag: str):
    value = getattr(cfg, field_name)
    if value is None:
        raise InputError(f"{cfg.command} needs {flag}")
    return value


def cmd_certify(cfg: RunConfig) -> int:
    prob = _load_mpqp(_require(cfg, "problem_path", "--problem"))
    result = certify(prob, cfg.tolerances(), build_model(cfg),
                     workers=cfg.workers)
    text = dump_document(result_to_document(result, cfg))
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        pathlib.Path(cfg.out).write_text(text)
    log.info("certified %d regions (%s)", len(result.regions), result.stats)
    return 0


def cmd_validate(cfg: RunConfig) -> int:
    prob = _load_mpqp(_require(cfg, "problem_path", "--problem"))
    doc = _load_json(_require(cfg, "partition_path", "--partition"))
    result = partition_to_result(doc)
    override = None
    if cfg.eps_bar is not None:
        override = (ErrorModel() if cfg.eps_bar == 0.0
                    else ErrorModel(kind=KIND_HYPERCUBE, bound=cfg.eps_bar))
    try:
        report = validate_conformance(prob, result, n_samples=cfg.samples,
                                      seed=cfg.seed, model=override)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if cfg.out is not None:
        out_doc = {
            "config": cfg.echo(),
            "samples_total": report.samples_total,
            "samples_outside": report.samples_outside,
            "samples_skipped_boundary": report.samples_skipped_boundary,
            "mismatches": [{"theta": list(theta),
                            "sequence": [{"working_set": list(s.working_set),
                                          "mode": s.mode} for s in seq],
                            "containing_regions": ids}
                           for theta, seq, ids in report.mismatches],
            "coverage_gaps": [list(t) for t in report.coverage_gaps],
        }
        pathlib.Path(cfg.out).write_text(dump_document(out_doc))
    print(report.summary())
    return 0 if report.passed else 1


def cmd_sweep(cfg: RunConfig) -> int:
    prob = _load_mpqp(_require(cfg, "problem_path", "--problem"))
    eps_list = _require(cfg, "primal_tols", "--primal-tols")
    bar_list = _require(cfg, "eps_bars", "--eps-bars")
    tol_base = Tolerances(eps_primal=eps_list[0], eps_dual=cfg.dual_tol,
                          iter_limit=cfg.iter_limit)
    table = sweep(prob, eps_list, bar_list, tol_base, workers=cfg.workers)
    json_doc = sweep_to_json(table)
    json_doc["config"] = cfg.echo()
    _emit(sweep_to_csv(table), json_doc, cfg.out)
    return 0


def cmd_report(cfg: RunConfig) -> int:
    metric = _require(cfg, "metric", "--metric")
    if metric == "sweep":
        return cmd_sweep(cfg)
    if metric == "cdf":
        doc = _load_json(_require(cfg, "partition_path", "--partition"))
        result = partition_to_result(doc)
        cdf = iteration_cdf(result)
        json_doc = cdf_to_json(cdf)
        json_doc["config"] = cfg.echo()
        _emit(cdf_to_csv(cdf), json_doc, cfg.out)
        return 0
    # metric == "slack": the per-depth trace is not part of any document,
    # so recertify with trace recording on.
    prob = _load_mpqp(_require(cfg, "problem_path", "--problem"))
    result = certify(prob, cfg.tolerances(), build_model(cfg),
                     workers=cfg.workers, record_trace=True)
    profile = slack_profile(prob, result)
    json_doc = profile_to_json(profile)
    json_doc["config"] = cfg.echo()
    _emit(profile_to_csv(profile), json_doc, cfg.out)
    return 0


def _float_list(text: str) -> list:
    try:
        return [float(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma list of numbers: "
                                         f"{text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="certias",
        description="Certify worst-case behaviour of a dual active-set QP "
                    "solver over a parameter set.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, model_flags=True):
        p.add_argument("--problem", dest="problem_path", metavar="PATH",
                       help="problem document (JSON)")
        p.add_argument("--out", metavar="PATH", help="output file; stdout "
                       "when omitted (.json selects the JSON mirror for "
                       "report/sweep)")
        p.add_argument("--primal-tol", dest="primal_tol", type=float,
                       default=1e-6, help="slack tolerance (default 1e-6)")
        p.add_argument("--dual-tol", dest="dual_tol", type=float,
                       default=None,
                       help="multiplier tolerance (default: --primal-tol)")
        p.add_argument("--iter-limit", dest="iter_limit", type=int,
                       default=15, help="iteration cap (default 15)")
        p.add_argument("--workers", type=int,
                       default=max(1, os.cpu_count() or 1),
                       help="parallel workers (default: all cores)")
        if model_flags:
            p.add_argument("--eps-bar", dest="eps_bar", type=float,
                           default=None,
                           help="per-iteration hypercube error bound")
            p.add_argument("--error-model", dest="error_model_path",
                           metavar="PATH",
                           help="error-model document (JSON)")
            p.add_argument("--rel-bound", dest="rel_bound", type=float,
                           default=None, help="relative error bound")

    p_cert = sub.add_parser("certify", help="partition the parameter set")
    common(p_cert)

    p_val = sub.add_parser("validate",
                           help="sample the solver against a partition")
    common(p_val)
    p_val.add_argument("--partition", dest="partition_path", metavar="PATH",
                       help="partition document from certify")
    p_val.add_argument("--samples", type=int, default=10000)
    p_val.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="grid of certifications")
    common(p_sweep, model_flags=False)
    p_sweep.add_argument("--primal-tols", dest="primal_tols",
                         type=_float_list, metavar="A,B,...",
                         help="comma list of slack tolerances")
    p_sweep.add_argument("--eps-bars", dest="eps_bars", type=_float_list,
                         metavar="A,B,...",
                         help="comma list of error bounds")

    p_rep = sub.add_parser("report", help="emit analysis tables")
    common(p_rep)
    p_rep.add_argument("--metric", choices=("slack", "cdf", "sweep"))
    p_rep.add_argument("--partition", dest="partition_path", metavar="PATH",
                       help="partition document (for --metric cdf)")
    p_rep.add_argument("--primal-tols", dest="primal_tols", type=_float_list,
                       metavar="A,B,...")
    p_rep.add_argument("--eps-bars", dest="eps_bars", type=_float_list,
                       metavar="A,B,...")
    return parser


_COMMANDS = {"certify": cmd_certify, "validate": cmd_validate,
             "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    try:
        _setup_logging()
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = RunConfig(**{k: v for k, v in vars(args).items()})
    try:
        return _COMMANDS[cfg.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.exception("internal failure")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
