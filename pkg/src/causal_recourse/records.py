"""Machine-readable result records (JSON, floats at 17 significant digits)."""

from __future__ import annotations

import json
import math
from typing import Any, Mapping

import numpy as np

from .graph import CausalGraph, StabilityReport
from .predictor import Predictor
from .recourse import RecourseProblem, RecourseResult
from .scm import Action, Scm
from .shift_lab import ExperimentReport, InvarianceTable

SCHEMA_VERSION = 1


def _float(x: float) -> str:
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _emit(obj: Any, indent: int, level: int, out: list[str]) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append("null" if obj is None else ("true" if obj else "false"))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, Mapping):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(str(k)) + ": ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, frozenset, set)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(items):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    out: list[str] = []
    _emit(obj, indent, 0, out)
    return "".join(out) + "\n"


def loads(text: str) -> Any:
    return json.loads(text)


def _nodes(g: CausalGraph, nodes) -> list[str]:
    return g.sort_nodes(nodes)


def stability_record(report: StabilityReport, g: CausalGraph, model: str = "") -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "stability",
        "model": model,
        "target": g.target,
        "observed": _nodes(g, g.observed),
        "conditioning_set": _nodes(g, report.conditioning_set),
        "verdicts": {v: "stable" if ok else "unstable" for v, ok in report.verdicts.items()},
        "cause_of_target": dict(report.causal_tag),
        "classes": report.classes(),
        "stable": _nodes(g, report.stable()),
        "unstable": _nodes(g, report.unstable()),
        "stable_non_causes": _nodes(g, {v for v, c in report.classes().items() if c == "stable-non-cause"}),
    }


def action_record(action: Action | None):
    return None if action is None else dict(action.interventions)


def problem_record(p: RecourseProblem, spec: Mapping) -> dict:
    return {
        "spec": spec,
        "predictor": p.predictor.to_record(),
        "instance": dict(p.instance),
        "threshold": p.threshold,
        "regime": p.regime,
        "action_grid": {k: list(v) for k, v in p.action_grid.items()},
        "cost_weights": dict(p.cost_weights),
        "cost_norm": p.cost_norm,
        "max_intervened": p.max_intervened,
        "observed_causes_only": p.observed_causes_only,
    }


def problem_from_record(rec: Mapping) -> RecourseProblem:
    from .specfile import scm_from_document

    return RecourseProblem(
        scm=scm_from_document(rec["spec"], "record"),
        predictor=Predictor.from_record(rec["predictor"]),
        instance=rec["instance"],
        threshold=float(rec["threshold"]),
        regime=rec["regime"],
        action_grid=rec["action_grid"],
        cost_weights=rec["cost_weights"],
        cost_norm=rec["cost_norm"],
        max_intervened=int(rec["max_intervened"]),
        observed_causes_only=bool(rec.get("observed_causes_only", False)),
    )


def result_from_record(rec: Mapping) -> RecourseResult:
    def num(x):
        return math.nan if x is None else float(x)

    return RecourseResult(
        action=None if rec["action"] is None else Action(rec["action"]),
        cost=math.inf if rec["cost"] is None else float(rec["cost"]),
        x_scf={k: num(v) for k, v in rec["x_scf"].items()},
        y_hat_scf=num(rec["y_hat_scf"]),
        y_scf=num(rec["y_scf"]),
        valid=bool(rec["valid"]),
        meaningful=bool(rec["meaningful"]),
        effective=bool(rec["effective"]),
        in_support=bool(rec["in_support"]),
        regime=rec["regime"],
        n_evaluated=int(rec.get("n_evaluated", 0)),
    )


def recourse_record(result: RecourseResult, problem: RecourseProblem, spec: Mapping, audit=None) -> dict:
    rec = {
        "schema_version": SCHEMA_VERSION,
        "kind": "recourse",
        "result": result.to_record(),
        "problem": problem_record(problem, spec),
    }
    if audit is not None:
        rec["verification"] = {"ok": audit.ok, "mismatches": list(audit.mismatches)}
    return rec


def counterfactual_record(m: Scm, factual: Mapping, action: Action, x_scf: Mapping) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "counterfactual",
        "model": m.name,
        "action": dict(action.interventions),
        "factual": {v: factual[v] for v in m.order},
        "counterfactual": {v: x_scf[v] for v in m.order},
        "y_scf": x_scf[m.target],
    }


def experiment_record(report: ExperimentReport) -> dict:
    cfg = report.config
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "experiment",
        "config": {
            "scm": cfg.scm if isinstance(cfg.scm, str) else cfg.scm.name,
            "inputs": list(cfg.inputs),
            "regimes": list(cfg.regimes),
            "n": cfg.n,
            "seeking_fraction": cfg.seeking_fraction,
            "threshold": cfg.threshold,
            "refit_mix": cfg.refit_mix,
            "seed": cfg.seed,
            "predictor_kind": cfg.predictor_kind,
            "cost_norm": cfg.cost_norm,
            "max_intervened": cfg.max_intervened,
        },
        "predictor": report.predictor.to_record(),
        "n_below_threshold": report.n_below,
        "regimes": {k: v.to_record() for k, v in report.regimes.items()},
        "notes": list(report.notes),
    }


def invariance_record(table: InvarianceTable) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "invariance",
        "conditioning_set": list(table.conditioning_set),
        "tolerance": table.tolerance,
        "rows": [{"action": dict(r.action.interventions), "coefficients": r.coefficients,
                  "intercept": r.intercept, "invariant": not table.flagged_against_reference(i)}
                 for i, r in enumerate(table.rows)],
    }
