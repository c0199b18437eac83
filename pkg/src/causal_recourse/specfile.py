"""YAML spec files for models and experiment configs.

Model file layout::

    format_version: 1
    name: chain
    nodes:
      - {id: A, observed: true, actionable: true, intercept: 0.0,
         noise: {kind: gaussian, variance: 1.0}, link: identity}
      - {id: Y, target: true, noise: {kind: gaussian, variance: 1.0}}
    edges:
      A -> Y: 2.0

``link`` is ``identity`` or ``{threshold: <tau>}``.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Mapping

import yaml

from .builtins import get_builtin
from .graph import CausalGraph, GraphError
from .scm import Noise, Scm, ScmError, StructuralEquation

FORMAT_VERSION = 1
BUILTIN_PREFIX = "builtin:"


class SpecError(ValueError):
    """Parse or validation failure, addressed by line or field path."""

    def __init__(self, message: str, where: str = "", source: str = ""):
        self.where = where
        self.source = source
        prefix = ":".join(p for p in (source, where) if p)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def _load_yaml(text: str, source: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise SpecError(f"YAML syntax error: {problem}", where, source) from exc


def _expect(cond: bool, message: str, where: str, source: str):
    if not cond:
        raise SpecError(message, where, source)


def _number(value, where: str, source: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), f"expected a number, got {value!r}",
            where, source)
    _expect(math.isfinite(value), "number must be finite", where, source)
    return float(value)


def _flag(node: Mapping, key: str, default: bool, where: str, source: str) -> bool:
    value = node.get(key, default)
    _expect(isinstance(value, bool), f"expected true/false, got {value!r}", f"{where}.{key}", source)
    return value


def _noise(spec: Any, where: str, source: str) -> Noise:
    if spec is None:
        return Noise()
    _expect(isinstance(spec, Mapping), "noise must be a mapping", where, source)
    kind = spec.get("kind", "gaussian")
    try:
        if kind == "gaussian":
            return Noise("gaussian", variance=_number(spec.get("variance", 1.0), f"{where}.variance", source))
        if kind == "uniform":
            return Noise("uniform", low=_number(spec.get("low", 0.0), f"{where}.low", source),
                         high=_number(spec.get("high", 1.0), f"{where}.high", source))
        if kind == "none":
            return Noise("none")
    except ScmError as exc:
        raise SpecError(str(exc), where, source) from exc
    raise SpecError(f"unknown noise kind {kind!r}", f"{where}.kind", source)


def _link(spec: Any, where: str, source: str) -> float | None:
    if spec is None or spec == "identity":
        return None
    _expect(isinstance(spec, Mapping) and set(spec) == {"threshold"},
            "link must be 'identity' or {threshold: <number>}", where, source)
    return _number(spec["threshold"], f"{where}.threshold", source)


def parse_scm(text: str, source: str = "") -> Scm:
    """Parse a model spec; raises :class:`SpecError` naming the offending line or field."""
    doc = _load_yaml(text, source)
    return scm_from_document(doc, source)


def scm_from_document(doc: Any, source: str = "") -> Scm:
    _expect(isinstance(doc, Mapping), "spec must be a mapping", "", source)
    version = doc.get("format_version")
    _expect(version == FORMAT_VERSION, f"unsupported format_version {version!r} (expected {FORMAT_VERSION})",
            "format_version", source)
    nodes = doc.get("nodes")
    _expect(isinstance(nodes, list) and nodes, "nodes must be a non-empty list", "nodes", source)
    edges_spec = doc.get("edges") or {}
    _expect(isinstance(edges_spec, Mapping), "edges must be a mapping of 'parent -> child': weight", "edges", source)

    ids, observed, actionable, targets = [], set(), set(), []
    per_node = {}
    for i, node in enumerate(nodes):
        where = f"nodes[{i}]"
        _expect(isinstance(node, Mapping), "node entry must be a mapping", where, source)
        nid = node.get("id")
        _expect(isinstance(nid, str) and nid, "node id must be a non-empty string", f"{where}.id", source)
        _expect(nid not in per_node, f"duplicate node id {nid!r}", f"{where}.id", source)
        unknown = set(node) - {"id", "observed", "actionable", "target", "intercept", "noise", "link"}
        _expect(not unknown, f"unknown keys {sorted(unknown)}", where, source)
        ids.append(nid)
        is_target = _flag(node, "target", False, where, source)
        if is_target:
            targets.append(nid)
        if _flag(node, "observed", not is_target, where, source) and not is_target:
            observed.add(nid)
        if _flag(node, "actionable", False, where, source):
            _expect(not is_target, "the target cannot be actionable", f"{where}.actionable", source)
            actionable.add(nid)
        per_node[nid] = (
            _number(node.get("intercept", 0.0), f"{where}.intercept", source),
            _noise(node.get("noise"), f"{where}.noise", source),
            _link(node.get("link"), f"{where}.link", source),
        )
    _expect(len(targets) == 1, f"exactly one node must be the target, found {len(targets)}", "nodes", source)

    coefs = {v: {} for v in ids}
    edges = []
    for key, weight in edges_spec.items():
        where = f"edges[{key!r}]"
        parts = [p.strip() for p in str(key).split("->")]
        _expect(len(parts) == 2 and all(parts), "edge key must look like 'parent -> child'", where, source)
        parent, child = parts
        for v in parts:
            _expect(v in per_node, f"unknown node {v!r}", where, source)
        coefs[child][parent] = _number(weight, where, source)
        edges.append((parent, child))

    try:
        graph = CausalGraph(tuple(ids), edges, targets[0], observed, actionable)
        eqs = [StructuralEquation(v, coefs[v], *per_node[v]) for v in ids]
        return Scm(graph, eqs, name=str(doc.get("name", "")))
    except (GraphError, ScmError) as exc:
        raise SpecError(str(exc), "", source) from exc


def scm_to_document(m: Scm) -> dict:
    g = m.graph
    nodes = []
    for v in g.nodes:
        eq = m.equations[v]
        entry = {"id": v}
        if v == g.target:
            entry["target"] = True
        else:
            entry["observed"] = v in g.observed
            entry["actionable"] = v in g.actionable
        entry["intercept"] = eq.intercept
        n = eq.noise
        if n.kind == "gaussian":
            entry["noise"] = {"kind": "gaussian", "variance": n.variance}
        elif n.kind == "uniform":
            entry["noise"] = {"kind": "uniform", "low": n.low, "high": n.high}
        else:
            entry["noise"] = {"kind": "none"}
        entry["link"] = "identity" if eq.threshold is None else {"threshold": eq.threshold}
        nodes.append(entry)
    edges = {}
    for v in g.nodes:
        for p, w in m.equations[v].coefficients.items():
            edges[f"{p} -> {v}"] = w
    return {"format_version": FORMAT_VERSION, "name": m.name, "nodes": nodes, "edges": edges}


def dump_scm(m: Scm) -> str:
    """Serialize to YAML; floats are written at full round-trip precision."""
    return yaml.safe_dump(scm_to_document(m), sort_keys=False, default_flow_style=None, width=100)


def load_scm(source: str) -> Scm:
    """Load ``builtin:<name>`` or a YAML file path."""
    if source.startswith(BUILTIN_PREFIX):
        try:
            return get_builtin(source[len(BUILTIN_PREFIX):])
        except ScmError as exc:
            raise SpecError(str(exc), "", source) from exc
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file: {exc.strerror}", "", source) from exc
    return parse_scm(text, source)


# --- experiment configs ----------------------------------------------------

_CONFIG_KEYS = {
    "format_version", "scm", "inputs", "regimes", "n", "seeking_fraction", "threshold", "refit_mix",
    "seed", "predictor_kind", "cost_norm", "max_intervened", "cost_weights",
}


def parse_experiment_config(text: str, source: str = "", base_dir: Path | None = None):
    from .shift_lab import ConfigError, ExperimentConfig

    doc = _load_yaml(text, source)
    _expect(isinstance(doc, Mapping), "config must be a mapping", "", source)
    _expect(doc.get("format_version") == FORMAT_VERSION,
            f"unsupported format_version {doc.get('format_version')!r}", "format_version", source)
    unknown = set(doc) - _CONFIG_KEYS
    _expect(not unknown, f"unknown keys {sorted(unknown)}", "", source)
    for key in ("scm", "inputs", "seed", "threshold"):
        _expect(key in doc, "required field is missing", key, source)
    _expect(isinstance(doc["seed"], int) and not isinstance(doc["seed"], bool), "seed must be an integer",
            "seed", source)
    scm = doc["scm"]
    _expect(isinstance(scm, str), "scm must be 'builtin:<name>' or a file path", "scm", source)
    if not scm.startswith(BUILTIN_PREFIX) and base_dir is not None and not Path(scm).is_absolute():
        scm = str(base_dir / scm)
    fields = {k: v for k, v in doc.items() if k != "format_version"}
    fields["scm"] = scm
    fields["threshold"] = _number(doc["threshold"], "threshold", source)
    for key in ("inputs", "regimes"):
        if key in fields:
            _expect(isinstance(fields[key], list), "expected a list", key, source)
            fields[key] = tuple(fields[key])
    try:
        cfg = ExperimentConfig(**fields)
        cfg.resolve_scm()
    except ConfigError as exc:
        raise SpecError(str(exc), "", source) from exc
    return cfg


def load_experiment_config(path: str):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read config file: {exc.strerror}", "", path) from exc
    return parse_experiment_config(text, path, p.parent)
