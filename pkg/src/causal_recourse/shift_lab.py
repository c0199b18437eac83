"""Population experiments: agents act on recourse, the model is refit, recommendations are re-scored.

Also hosts the statistical counterpart of the stability check: regress the
target on a feature set under several interventions and compare fits.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, TextIO

import numpy as np

from .builtins import get_builtin
from .predictor import Predictor, fit, perfect_predictor
from .recourse import REGIMES, RecourseProblem, solve
from .scm import Action, Scm, interventional_sample, sample

PREDICTOR_KINDS = ("linear", "logistic", "perfect")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scm: str | Scm
    inputs: tuple[str, ...]
    regimes: tuple[str, ...] = REGIMES
    n: int = 10_000
    seeking_fraction: float = 1.0
    threshold: float = 0.5
    refit_mix: float = 0.5
    seed: int = 0
    predictor_kind: str = "linear"
    cost_norm: str = "L1"
    max_intervened: int = 1
    cost_weights: Mapping[str, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if self.n < 100:
            raise ConfigError("population size n must be at least 100")
        if not 0.0 < self.seeking_fraction <= 1.0:
            raise ConfigError("seeking_fraction must lie in (0, 1]")
        if not 0.0 <= self.refit_mix <= 1.0:
            raise ConfigError("refit_mix must lie in [0, 1]")
        bad = [r for r in self.regimes if r not in REGIMES]
        if bad or not self.regimes:
            raise ConfigError(f"regimes must be a non-empty subset of {REGIMES}, got {list(self.regimes)}")
        if self.predictor_kind not in PREDICTOR_KINDS:
            raise ConfigError(f"predictor_kind must be one of {PREDICTOR_KINDS}")

    def resolve_scm(self) -> Scm:
        if isinstance(self.scm, Scm):
            return self.scm
        from .specfile import load_scm
        return load_scm(self.scm)


@dataclass
class AgentRecord:
    agent: int
    regime: str
    factual: dict
    action: Action | None
    cost: float
    x_scf: dict
    y_hat_scf: float
    y_scf: float
    valid: bool
    improved: bool
    effective: bool
    in_support: bool
    honored: bool | None = None


@dataclass
class RegimeSummary:
    regime: str
    n_sought: int
    n_valid: int
    success_rate: float
    improvement_rate: float
    gaming_rate: float
    honoring_rate: float
    mean_cost: float
    support_violation_rate: float
    refit: Predictor | None = None

    def to_record(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "regime", "n_sought", "n_valid", "success_rate", "improvement_rate", "gaming_rate",
            "honoring_rate", "mean_cost", "support_violation_rate")}
        out["refit_predictor"] = None if self.refit is None else self.refit.to_record()
        return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    predictor: Predictor
    n_below: int
    regimes: dict[str, RegimeSummary]
    agents: list[AgentRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __getitem__(self, regime: str) -> RegimeSummary:
        return self.regimes[regime]


def _rate(num: int, den: int) -> float:
    return num / den if den else math.nan


def summarize(regime: str, agents: Sequence[AgentRecord], refit: Predictor | None = None) -> RegimeSummary:
    """Aggregate rates for one regime from its per-agent records."""
    sought = [a for a in agents if a.regime == regime]
    valid = [a for a in sought if a.valid]
    improved = sum(a.improved for a in valid)
    return RegimeSummary(
        regime=regime,
        n_sought=len(sought),
        n_valid=len(valid),
        success_rate=_rate(len(valid), len(sought)),
        improvement_rate=_rate(improved, len(valid)),
        gaming_rate=_rate(len(valid) - improved, len(valid)),
        honoring_rate=_rate(sum(bool(a.honored) for a in valid), len(valid)),
        mean_cost=float(np.mean([a.cost for a in valid])) if valid else math.nan,
        support_violation_rate=_rate(sum(not a.in_support for a in valid), len(valid)),
        refit=refit,
    )


def _sub_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x5417, stream)))


def run(cfg: ExperimentConfig, keep_agents: bool = True) -> ExperimentReport:
    """Sample, fit, recommend, act, refit, and score each regime; deterministic given ``cfg.seed``."""
    m = cfg.resolve_scm()
    g = m.graph
    y = m.target
    bad = [v for v in cfg.inputs if v not in g.observed]
    if bad:
        raise ConfigError(f"predictor inputs must be observed features: {bad}")

    pre = sample(m, cfg.n, cfg.seed)
    if cfg.predictor_kind == "perfect":
        predictor = perfect_predictor(m, cfg.inputs, pre)
        refit_kind = "linear"
    else:
        predictor = fit(pre, cfg.inputs, cfg.predictor_kind, target=y)
        refit_kind = cfg.predictor_kind

    scores = predictor.predict(pre.as_dict())
    below = np.flatnonzero(scores < cfg.threshold)
    n_seek = int(round(cfg.seeking_fraction * len(below)))
    seekers = np.sort(_sub_rng(cfg.seed, 1).permutation(below)[:n_seek]) if n_seek < len(below) else below
    notes = [] if len(below) else ["no agent scored below the threshold"]

    actionable = g.sort_nodes(g.actionable)
    deciles = {}
    for v in actionable:
        if m.equations[v].threshold is not None:
            deciles[v] = {0.0, 1.0}
        else:
            deciles[v] = {float(q) for q in np.quantile(pre[v], np.linspace(0.1, 0.9, 9))}

    perm = _sub_rng(cfg.seed, 2).permutation(cfg.n)
    n_post = int(round(cfg.refit_mix * cfg.n))
    from_post, from_pre = perm[:n_post], perm[n_post:]

    agents: list[AgentRecord] = []
    summaries = {}
    for regime in cfg.regimes:
        post = pre.values.copy()
        col = {c: j for j, c in enumerate(pre.columns)}
        records = []
        for i in seekers:
            x_f = pre.row(int(i))
            grid = {v: tuple(sorted(deciles[v] | {x_f[v]})) for v in actionable}
            prob = RecourseProblem(m, predictor, x_f, cfg.threshold, regime, grid, cfg.cost_weights,
                                   cfg.cost_norm, cfg.max_intervened)
            r = solve(prob)
            if r.found and not r.action.is_null:
                for v, val in r.x_scf.items():
                    post[i, col[v]] = val
            records.append(AgentRecord(int(i), regime, x_f, r.action, r.cost, dict(r.x_scf), r.y_hat_scf,
                                       r.y_scf, r.valid, r.y_scf >= cfg.threshold, r.effective, r.in_support))
        refit_values = np.concatenate([post[from_post], pre.values[from_pre]])
        refit_data = type(pre)(pre.columns, refit_values, pre.latent)
        refit = fit(refit_data, cfg.inputs, refit_kind, target=y)
        for rec in records:
            if rec.valid:
                rec.honored = bool(refit.predict(rec.x_scf) >= cfg.threshold)
        summaries[regime] = summarize(regime, records, refit)
        agents.extend(records)
    return ExperimentReport(cfg, predictor, int(len(below)), summaries, agents if keep_agents else [], notes)


LOG_FLAGS = ("valid", "improved", "effective", "in_support", "honored")


def write_agent_log(report: ExperimentReport, stream: TextIO) -> None:
    """Per-agent log as CSV, in regime then agent-index order."""
    m = report.config.resolve_scm()
    nodes = list(m.order)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["agent", "regime"] + [f"f_{v}" for v in nodes] + ["action", "cost"]
                    + [f"scf_{v}" for v in nodes] + ["y_hat_scf", "y_scf"] + list(LOG_FLAGS))

    def num(x):
        return format(float(x), ".17g")

    def flag(b):
        return "" if b is None else str(int(bool(b)))

    for a in report.agents:
        action = "" if a.action is None else ";".join(f"{k}={num(v)}" for k, v in a.action.interventions.items())
        writer.writerow([a.agent, a.regime] + [num(a.factual[v]) for v in nodes] + [action, num(a.cost)]
                        + [num(a.x_scf[v]) for v in nodes] + [num(a.y_hat_scf), num(a.y_scf)]
                        + [flag(getattr(a, f)) for f in LOG_FLAGS])


def agent_log_text(report: ExperimentReport) -> str:
    buf = io.StringIO()
    write_agent_log(report, buf)
    return buf.getvalue()


def read_agent_log(stream: TextIO) -> list[dict]:
    """Parse a per-agent log back into rows with typed flags."""
    rows = []
    for row in csv.DictReader(stream):
        for f in LOG_FLAGS:
            row[f] = None if row[f] == "" else row[f] == "1"
        row["cost"] = float(row["cost"])
        rows.append(row)
    return rows


# --- conditional invariance -------------------------------------------------

@dataclass
class InvarianceRow:
    action: Action
    coefficients: dict[str, float]
    intercept: float
    constants: dict[str, float]


@dataclass
class InvarianceTable:
    conditioning_set: tuple[str, ...]
    rows: list[InvarianceRow]
    tolerance: float
    flags: dict[tuple[int, int], bool]

    def flagged_against_reference(self, i: int) -> bool:
        """Whether action ``i`` differs from the null-action reference (row 0)."""
        return self.flags[(0, i)] if i else False

    def verdicts(self) -> dict[str, bool]:
        """``str(action) -> invariant`` relative to the reference row."""
        return {str(r.action): not self.flagged_against_reference(i) for i, r in enumerate(self.rows)}


def _regress(data, s: Sequence[str], y: str) -> InvarianceRow:
    constants = {v: float(data[v][0]) for v in s if np.ptp(data[v]) == 0}
    free = [v for v in s if v not in constants]
    X = np.column_stack([np.ones(len(data))] + [data[v] for v in free])
    beta, *_ = np.linalg.lstsq(X, data[y], rcond=None)
    coefs = {v: math.nan for v in s}
    coefs.update({v: float(b) for v, b in zip(free, beta[1:])})
    return InvarianceRow(Action(), coefs, float(beta[0]), constants)


def rows_differ(a: InvarianceRow, b: InvarianceRow, s: Sequence[str], tol: float) -> bool:
    for v in s:
        ca, cb = a.coefficients[v], b.coefficients[v]
        if not (math.isnan(ca) or math.isnan(cb)) and abs(ca - cb) > tol:
            return True
    # Compare the two regression functions at a point fixing every constant column.
    point = {}
    for v in s:
        if v in a.constants and v in b.constants and a.constants[v] != b.constants[v]:
            return False
        if v in a.constants:
            point[v] = a.constants[v]
        elif v in b.constants:
            point[v] = b.constants[v]

    def level(r):
        return r.intercept + sum(r.coefficients[v] * x for v, x in point.items() if v not in r.constants)

    return abs(level(a) - level(b)) > tol


def stability_experiment(m: Scm, s: Sequence[str], actions: Sequence[Action], n: int = 100_000,
                         seed: int = 0, tolerance: float = 0.05) -> InvarianceTable:
    """Regress the target on ``s`` in interventional samples and flag differing fits.

    Row 0 is always the null action. All rows share one noise draw (seeded by
    ``seed``), so differences reflect the interventions rather than sampling.
    """
    s = tuple(m.graph.sort_nodes(s))
    bad = [v for v in s if v not in m.graph.observed]
    if bad:
        raise ConfigError(f"conditioning set must be observed: {bad}")
    acts = [Action()] + [a for a in actions if not a.is_null]
    rows = []
    for a in acts:
        row = _regress(interventional_sample(m, a, n, seed), s, m.target)
        row.action = a
        rows.append(row)
    flags = {(i, j): rows_differ(rows[i], rows[j], s, tolerance)
             for i, j in itertools.combinations(range(len(rows)), 2)}
    return InvarianceTable(s, rows, tolerance, flags)


def config_for(name: str, **overrides) -> ExperimentConfig:
    """Convenience constructor using a builtin model's observed features as inputs."""
    m = get_builtin(name)
    fields = dict(scm="builtin:" + name, inputs=tuple(m.graph.sort_nodes(m.graph.observed)))
    fields.update(overrides)
    return ExperimentConfig(**fields)
