"""Minimal-cost recourse search under the AR, MAR and EAR regimes.

AR only asks that the prediction cross the threshold. MAR additionally asks
the counterfactual target to cross it. EAR restricts interventions to
actionable causes of the target.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .graph import causes
from .predictor import Predictor
from .scm import Action, Dataset, Scm, counterfactual, counterfactual_batch

REGIMES = ("AR", "MAR", "EAR")
NORMS = ("L1", "L2")


class RecourseError(ValueError):
    pass


def cost(action: Action | Mapping[str, float], x_f: Mapping[str, float], weights: Mapping[str, float],
         norm: str = "L1", actionable=None) -> float:
    """Weighted L1 (or L2) distance between intervened values and the factual ones."""
    interventions = action.interventions if isinstance(action, Action) else dict(action)
    if norm not in NORMS:
        raise RecourseError(f"unknown cost norm {norm!r}")
    total = 0.0
    for v, a in interventions.items():
        if actionable is not None and v not in actionable:
            raise RecourseError(f"{v!r} is not actionable")
        d = a - x_f[v]
        total += weights[v] * (abs(d) if norm == "L1" else d * d)
    return total if norm == "L1" else math.sqrt(total)


def default_grid(m: Scm, data: Dataset, nodes: Sequence[str], instance: Mapping[str, float] | None = None,
                 ) -> dict[str, tuple[float, ...]]:
    """Nine deciles of each node's observational marginal plus its factual value; binary nodes get {0, 1}."""
    grid = {}
    for v in nodes:
        if m.equations[v].threshold is not None:
            vals = {0.0, 1.0}
        else:
            vals = {float(q) for q in np.quantile(data[v], np.linspace(0.1, 0.9, 9))}
        if instance is not None:
            vals.add(float(instance[v]))
        grid[v] = tuple(sorted(vals))
    return grid


@dataclass(frozen=True)
class RecourseProblem:
    scm: Scm
    predictor: Predictor
    instance: Mapping[str, float]
    threshold: float
    regime: str = "AR"
    action_grid: Mapping[str, Sequence[float]] = field(default_factory=dict)
    cost_weights: Mapping[str, float] | None = None
    cost_norm: str = "L1"
    max_intervened: int = 1
    observed_causes_only: bool = False

    def __post_init__(self):
        g = self.scm.graph
        if self.regime not in REGIMES:
            raise RecourseError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.cost_norm not in NORMS:
            raise RecourseError(f"unknown cost norm {self.cost_norm!r}")
        if self.max_intervened < 1:
            raise RecourseError("max_intervened must be at least 1")
        weights = dict(self.cost_weights) if self.cost_weights is not None else {}
        for v in g.sort_nodes(g.actionable):
            weights.setdefault(v, 1.0)
        for v, w in weights.items():
            if v not in g.actionable:
                raise RecourseError(f"cost weight given for non-actionable node {v!r}")
            if not w > 0:
                raise RecourseError(f"cost weight of {v!r} must be positive")
        object.__setattr__(self, "cost_weights", weights)
        grid = {}
        for v, vals in dict(self.action_grid).items():
            if v not in g.actionable:
                raise RecourseError(f"grid given for non-actionable node {v!r}")
            vals = tuple(float(a) for a in vals)
            if not all(math.isfinite(a) for a in vals):
                raise RecourseError(f"grid of {v!r} has non-finite values")
            if list(vals) != sorted(vals):
                raise RecourseError(f"grid of {v!r} must be sorted ascending")
            grid[v] = vals
        object.__setattr__(self, "action_grid", grid)
        object.__setattr__(self, "instance", {k: float(x) for k, x in dict(self.instance).items()})

    @property
    def target_causes(self) -> frozenset:
        return causes(self.scm.graph, self.scm.target, observed_only=self.observed_causes_only)

    def candidate_nodes(self) -> list[str]:
        """Actionable nodes eligible for intervention, in declaration order."""
        g = self.scm.graph
        nodes = g.actionable
        if self.regime == "EAR":
            nodes = nodes & self.target_causes
        return [v for v in g.sort_nodes(nodes) if self.action_grid.get(v)]


def enumerate_actions(p: RecourseProblem, include_null: bool = True) -> Iterator[Action]:
    """Actions by subset size, then node order, then grid index; the null action first."""
    if include_null:
        yield Action()
    nodes = p.candidate_nodes()
    for size in range(1, min(p.max_intervened, len(nodes)) + 1):
        for subset in itertools.combinations(nodes, size):
            for values in itertools.product(*(p.action_grid[v] for v in subset)):
                yield Action(dict(zip(subset, values)))


@dataclass(frozen=True)
class RecourseResult:
    action: Action | None
    cost: float
    x_scf: Mapping[str, float]
    y_hat_scf: float
    y_scf: float
    valid: bool
    meaningful: bool
    effective: bool
    in_support: bool
    regime: str
    n_evaluated: int = 0

    @property
    def found(self) -> bool:
        return self.action is not None

    def to_record(self) -> dict:
        return {
            "found": self.found,
            "regime": self.regime,
            "action": None if self.action is None else dict(self.action.interventions),
            "cost": self.cost if self.found else None,
            "x_scf": dict(self.x_scf),
            "y_hat_scf": self.y_hat_scf,
            "y_scf": self.y_scf,
            "valid": self.valid,
            "meaningful": self.meaningful,
            "effective": self.effective,
            "in_support": self.in_support,
            "n_evaluated": self.n_evaluated,
        }


def _check_threshold(p: RecourseProblem) -> None:
    if p.predictor.kind == "logistic" and not 0.0 < p.threshold < 1.0:
        raise RecourseError("a logistic predictor needs a probability threshold in (0, 1)")


def _result(p: RecourseProblem, action: Action | None, n_evaluated: int) -> RecourseResult:
    m = p.scm
    x_scf = counterfactual(m, p.instance, action)
    y_hat = p.predictor.predict(x_scf)
    y = x_scf[m.target]
    found = action is not None
    return RecourseResult(
        action=action,
        cost=cost(action, p.instance, p.cost_weights, p.cost_norm) if found else math.inf,
        x_scf=x_scf,
        y_hat_scf=y_hat,
        y_scf=y,
        valid=found and y_hat >= p.threshold,
        meaningful=found and y >= p.threshold,
        effective=found and action.nodes <= causes(m.graph, m.target, p.observed_causes_only),
        in_support=p.predictor.in_support(x_scf),
        regime=p.regime,
        n_evaluated=n_evaluated,
    )


def solve(p: RecourseProblem) -> RecourseResult:
    """Exhaustively score every enumerated action and return the cheapest one the regime accepts.

    Ties go to the earliest action in enumeration order. When nothing is
    accepted the result has ``action=None`` and infinite cost.
    """
    _check_threshold(p)
    actions = list(enumerate_actions(p))
    n = len(actions)
    do = {}
    delta = np.zeros(n)
    for v in p.candidate_nodes():
        mask = np.zeros(n, dtype=bool)
        vals = np.zeros(n)
        for i, a in enumerate(actions):
            if v in a.interventions:
                mask[i] = True
                vals[i] = a.interventions[v]
        d = np.where(mask, vals - p.instance[v], 0.0)
        delta = delta + p.cost_weights[v] * (np.abs(d) if p.cost_norm == "L1" else d * d)
        do[v] = (mask, vals)
    costs = delta if p.cost_norm == "L1" else np.sqrt(delta)
    cf = counterfactual_batch(p.scm, p.instance, do, n)
    ok = p.predictor.predict(cf) >= p.threshold
    if p.regime == "MAR":
        ok &= cf[p.scm.target] >= p.threshold
    if not ok.any():
        return _result(p, None, n)
    best = int(np.argmin(np.where(ok, costs, np.inf)))
    return _result(p, actions[best], n)


@dataclass(frozen=True)
class AuditReport:
    ok: bool
    mismatches: tuple[str, ...] = ()


def audit_result(r: RecourseResult, p: RecourseProblem) -> AuditReport:
    """Recompute counterfactual, cost and flags of ``r`` from scratch and compare."""
    problems = []
    if r.regime != p.regime:
        problems.append(f"regime {r.regime} != {p.regime}")
    g = p.scm.graph
    if r.action is not None:
        bad = r.action.nodes - g.actionable
        if bad:
            problems.append(f"action touches non-actionable nodes {sorted(bad)}")
        if p.scm.target in r.action.nodes:
            problems.append("action intervenes on the target")
        if len(r.action) > p.max_intervened:
            problems.append("action exceeds max_intervened")
    fresh = _result(p, r.action, r.n_evaluated)

    def close(a, b):
        return a == b or math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)

    if not close(r.cost, fresh.cost):
        problems.append(f"cost {r.cost!r} != recomputed {fresh.cost!r}")
    for v in g.nodes:
        if v not in r.x_scf or not close(r.x_scf[v], fresh.x_scf[v]):
            problems.append(f"x_scf[{v}] {r.x_scf.get(v)!r} != recomputed {fresh.x_scf[v]!r}")
    if not close(r.y_hat_scf, fresh.y_hat_scf):
        problems.append(f"y_hat_scf {r.y_hat_scf!r} != recomputed {fresh.y_hat_scf!r}")
    if not close(r.y_scf, fresh.y_scf):
        problems.append(f"y_scf {r.y_scf!r} != recomputed {fresh.y_scf!r}")
    for flag in ("valid", "meaningful", "effective", "in_support"):
        if getattr(r, flag) != getattr(fresh, flag):
            problems.append(f"{flag} {getattr(r, flag)} != recomputed {getattr(fresh, flag)}")
    if r.action is not None:
        if p.regime == "MAR" and not (fresh.valid and fresh.meaningful):
            problems.append("MAR result is not valid and meaningful")
        if p.regime == "EAR" and not (fresh.valid and fresh.effective):
            problems.append("EAR result is not valid and effective")
        if p.regime == "AR" and not fresh.valid:
            problems.append("AR result is not valid")
    return AuditReport(not problems, tuple(problems))
