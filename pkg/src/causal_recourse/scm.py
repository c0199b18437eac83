"""Linear additive-noise structural causal models.

Supports ancestral sampling, abduction of the noise terms, hard
interventions, and the abduction/action/prediction counterfactual.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .graph import CausalGraph, Node

NOISE_KINDS = ("gaussian", "uniform", "none")


class ScmError(ValueError):
    """Raised for malformed structural equations or invalid queries."""


class NonInvertibleError(ScmError):
    """Abduction was requested through a mechanism that cannot be inverted."""


@dataclass(frozen=True)
class Noise:
    """Exogenous noise descriptor.

    ``gaussian`` has mean 0 and the given (strictly positive) variance,
    ``uniform`` lives on ``[low, high]``, and ``none`` is the constant 0
    used for deterministic mechanisms.
    """

    kind: str = "gaussian"
    variance: float = 1.0
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ScmError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.variance > 0:
            raise ScmError("gaussian noise needs variance > 0; use kind 'none' for a deterministic mechanism")
        if self.kind == "uniform" and not self.low < self.high:
            raise ScmError("uniform noise needs low < high")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, np.sqrt(self.variance), size=n)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=n)
        return np.zeros(n)

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high) if self.kind == "uniform" else 0.0

    @property
    def var(self) -> float:
        if self.kind == "gaussian":
            return self.variance
        if self.kind == "uniform":
            return (self.high - self.low) ** 2 / 12.0
        return 0.0


@dataclass(frozen=True)
class StructuralEquation:
    """``x = intercept + sum(w * parent) + u``, optionally passed through ``1[. > threshold]``."""

    node: Node
    coefficients: Mapping[Node, float] = field(default_factory=dict)
    intercept: float = 0.0
    noise: Noise = field(default_factory=Noise)
    threshold: float | None = None

    @property
    def link(self) -> str:
        return "identity" if self.threshold is None else "threshold"

    def pre_activation(self, values: Mapping[Node, np.ndarray], u) -> np.ndarray:
        acc = self.intercept
        for p, w in self.coefficients.items():
            acc = acc + w * values[p]
        return acc + u

    def evaluate(self, values: Mapping[Node, np.ndarray], u) -> np.ndarray:
        pre = self.pre_activation(values, u)
        if self.threshold is None:
            return pre
        return np.where(pre > self.threshold, 1.0, 0.0)


@dataclass(frozen=True)
class Action:
    """A set of hard interventions ``{node := value}``."""

    interventions: Mapping[Node, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "interventions", {k: float(v) for k, v in dict(self.interventions).items()})

    @classmethod
    def do(cls, **assignments: float) -> "Action":
        return cls(assignments)

    @property
    def nodes(self) -> frozenset:
        return frozenset(self.interventions)

    @property
    def is_null(self) -> bool:
        return not self.interventions

    def __len__(self):
        return len(self.interventions)

    def __str__(self):
        if not self.interventions:
            return "do()"
        return "do(" + ", ".join(f"{k}:={v:g}" for k, v in self.interventions.items()) + ")"


@dataclass
class Dataset:
    """Samples in a fixed column order; latent columns kept but not exported by default."""

    columns: tuple[Node, ...]
    values: np.ndarray
    latent: frozenset = frozenset()

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ValueError("values must be an (n, len(columns)) array")
        self._pos = {c: i for i, c in enumerate(self.columns)}

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, column: Node) -> np.ndarray:
        try:
            return self.values[:, self._pos[column]]
        except KeyError:
            raise KeyError(f"dataset has no column {column!r}") from None

    def __contains__(self, column):
        return column in self._pos

    def as_dict(self) -> dict[Node, np.ndarray]:
        return {c: self.values[:, i] for i, c in enumerate(self.columns)}

    def row(self, i: int) -> dict[Node, float]:
        return {c: float(self.values[i, j]) for j, c in enumerate(self.columns)}

    def take(self, rows) -> "Dataset":
        return Dataset(self.columns, self.values[rows], self.latent)

    def select(self, columns: Sequence[Node]) -> "Dataset":
        idx = [self._pos[c] for c in columns]
        return Dataset(tuple(columns), self.values[:, idx], self.latent & set(columns))

    def exported_columns(self, include_latent: bool = False) -> tuple[Node, ...]:
        if include_latent:
            return self.columns
        return tuple(c for c in self.columns if c not in self.latent)

    def write_csv(self, stream: TextIO, include_latent: bool = False) -> None:
        cols = self.exported_columns(include_latent)
        idx = [self._pos[c] for c in cols]
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(cols)
        for row in self.values[:, idx]:
            writer.writerow([format(float(v), ".17g") for v in row])

    def to_csv(self, include_latent: bool = False) -> str:
        buf = io.StringIO()
        self.write_csv(buf, include_latent)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, stream: TextIO) -> "Dataset":
        reader = csv.reader(stream)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
        return cls(tuple(header), np.array(rows, dtype=float).reshape(len(rows), len(header)))


def _stream(seed: int, node: Node) -> np.random.Generator:
    # One generator per (seed, node): adding nodes never perturbs the others' draws.
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(node.encode("utf-8"))))


class Scm:
    """Structural causal model: a :class:`CausalGraph` plus one equation per node."""

    def __init__(self, graph: CausalGraph, equations: Iterable[StructuralEquation] | Mapping[Node, StructuralEquation],
                 name: str = ""):
        if isinstance(equations, Mapping):
            equations = equations.values()
        eqs: dict[Node, StructuralEquation] = {}
        for eq in equations:
            if eq.node in eqs:
                raise ScmError(f"node {eq.node!r} has more than one equation")
            eqs[eq.node] = eq
        missing = set(graph.nodes) - set(eqs)
        if missing:
            raise ScmError(f"nodes without a structural equation: {graph.sort_nodes(missing)}")
        extra = set(eqs) - set(graph.nodes)
        if extra:
            raise ScmError(f"equations for unknown nodes: {sorted(extra)}")
        ordered = {}
        for v in graph.nodes:
            eq = eqs[v]
            if set(eq.coefficients) != set(graph.parents(v)):
                raise ScmError(f"coefficients of {v!r} must cover exactly its parents {graph.sort_nodes(graph.parents(v))}")
            # Fixed summation order keeps evaluation bit-reproducible.
            coefs = {p: float(eq.coefficients[p]) for p in graph.sort_nodes(eq.coefficients)}
            ordered[v] = StructuralEquation(v, coefs, float(eq.intercept), eq.noise, eq.threshold)
        self.graph = graph
        self.equations: dict[Node, StructuralEquation] = ordered
        self.name = name

    def __repr__(self):
        return f"Scm({self.name or 'unnamed'}, nodes={list(self.graph.nodes)})"

    @property
    def target(self) -> Node:
        return self.graph.target

    @property
    def order(self) -> tuple[Node, ...]:
        return self.graph.topological_order

    @property
    def latent(self) -> frozenset:
        return frozenset(self.graph.nodes) - self.graph.observed - {self.target}

    def replace(self, graph: CausalGraph | None = None, name: str | None = None,
                **equation_updates: StructuralEquation) -> "Scm":
        eqs = dict(self.equations)
        eqs.update(equation_updates)
        return Scm(graph or self.graph, eqs, self.name if name is None else name)

    def with_noise(self, node: Node, noise: Noise, name: str | None = None) -> "Scm":
        eq = self.equations[node]
        return self.replace(name=name, **{node: StructuralEquation(node, eq.coefficients, eq.intercept, noise, eq.threshold)})

    def _check_action(self, action: Action | Mapping | None) -> dict[Node, float]:
        if action is None:
            return {}
        interventions = action.interventions if isinstance(action, Action) else dict(action)
        for v in interventions:
            if v not in self.equations:
                raise ScmError(f"unknown node {v!r} in action")
            if v == self.target:
                raise ScmError("the target cannot be intervened on")
        return interventions

    def draw_noise(self, n: int, seed: int) -> dict[Node, np.ndarray]:
        return {v: self.equations[v].noise.draw(_stream(seed, v), n) for v in self.graph.nodes}

    def evaluate(self, noise: Mapping[Node, np.ndarray], action: Action | Mapping | None = None) -> dict[Node, np.ndarray]:
        """Forward pass of the (possibly mutilated) equations on given noise values."""
        do = self._check_action(action)
        values: dict[Node, np.ndarray] = {}
        for v in self.order:
            if v in do:
                values[v] = np.broadcast_to(np.float64(do[v]), np.shape(noise[v])).copy()
            else:
                values[v] = np.asarray(self.equations[v].evaluate(values, noise[v]), dtype=float)
        return values

    def _dataset(self, values: Mapping[Node, np.ndarray]) -> Dataset:
        cols = self.order
        return Dataset(cols, np.column_stack([values[c] for c in cols]), self.latent)


def sample(m: Scm, n: int, seed: int) -> Dataset:
    """Ancestral sample of ``n`` rows; deterministic given ``seed``."""
    if n < 1:
        raise ScmError("n must be at least 1")
    return m._dataset(m.evaluate(m.draw_noise(n, seed)))


def interventional_sample(m: Scm, action: Action | Mapping | None, n: int, seed: int) -> Dataset:
    """Sample from the mutilated model with fresh noise (population-level do)."""
    if n < 1:
        raise ScmError("n must be at least 1")
    return m._dataset(m.evaluate(m.draw_noise(n, seed), action))


def _as_values(m: Scm, x: Mapping[Node, float]) -> tuple[dict[Node, np.ndarray], bool]:
    missing = [v for v in m.graph.nodes if v not in x]
    if missing:
        raise ScmError(f"assignment is missing values for {missing}")
    values = {v: np.asarray(x[v], dtype=float) for v in m.graph.nodes}
    scalar = all(a.ndim == 0 for a in values.values())
    return values, scalar


def _unwrap(values: Mapping[Node, np.ndarray], scalar: bool):
    if scalar:
        return {v: float(a) for v, a in values.items()}
    return dict(values)


def abduct(m: Scm, x: Mapping[Node, float]) -> dict[Node, float]:
    """Recover the noise values that reproduce the full assignment ``x``.

    Threshold mechanisms are invertible only at root nodes, where the noise
    value is taken as ``x - intercept`` by convention; anywhere else a
    :class:`NonInvertibleError` is raised.
    """
    values, scalar = _as_values(m, x)
    u = {}
    for v in m.order:
        eq = m.equations[v]
        if eq.threshold is None:
            u[v] = values[v] - eq.pre_activation(values, 0.0)
            continue
        if eq.coefficients:
            raise NonInvertibleError(f"threshold mechanism of {v!r} has parents and cannot be inverted")
        u[v] = values[v] - eq.intercept
        if not np.array_equal(eq.evaluate(values, u[v]), values[v]):
            raise NonInvertibleError(f"value of binary root {v!r} is not reproducible by its threshold mechanism")
    return _unwrap(u, scalar)


def counterfactual(m: Scm, x_f: Mapping[Node, float], action: Action | Mapping | None = None) -> dict[Node, float]:
    """Structural counterfactual of the full assignment ``x_f`` under ``action``.

    Returns the counterfactual assignment of every node, target included.
    Nodes none of whose parents moved keep their factual value bit-for-bit.
    """
    do = m._check_action(action)
    values, scalar = _as_values(m, x_f)
    u = abduct(m, x_f)
    return _unwrap(_propagate(m, values, u, {v: (True, val) for v, val in do.items()}), scalar)


def _propagate(m: Scm, factual: Mapping[Node, np.ndarray], u: Mapping[Node, np.ndarray],
               do: Mapping[Node, tuple]) -> dict[Node, np.ndarray]:
    # do maps node -> (mask, value); mask/value may be arrays to score many actions at once.
    out: dict[Node, np.ndarray] = {}
    moved: dict[Node, np.ndarray] = {}
    for v in m.order:
        eq = m.equations[v]
        f = factual[v]
        dirty = np.zeros(np.shape(f), dtype=bool)
        for p in eq.coefficients:
            dirty = dirty | moved[p]
        x = np.where(dirty, eq.evaluate(out, u[v]), f) if dirty.any() else f
        if v in do:
            mask, val = do[v]
            x = np.where(mask, val, x)
        x = np.asarray(x, dtype=float)
        out[v] = x
        moved[v] = x != f
    return out


def counterfactual_batch(m: Scm, x_f: Mapping[Node, float], do: Mapping[Node, tuple[np.ndarray, np.ndarray]],
                         size: int) -> dict[Node, np.ndarray]:
    """Counterfactuals of one factual assignment under ``size`` actions at once.

    ``do[node] = (mask, values)`` gives, per action, whether ``node`` is
    intervened on and to which value.
    """
    for v in do:
        m._check_action({v: 0.0})
    values, _ = _as_values(m, x_f)
    u = abduct(m, x_f)
    factual = {v: np.broadcast_to(a, (size,)) for v, a in values.items()}
    return _propagate(m, factual, u, do)


@dataclass(frozen=True)
class Instance:
    """A factual individual: full assignment plus its abducted noise."""

    values: Mapping[Node, float]
    noise: Mapping[Node, float] | None = None

    @classmethod
    def abducted(cls, m: Scm, values: Mapping[Node, float]) -> "Instance":
        values = {v: float(values[v]) for v in m.graph.nodes if v in values}
        return cls(values, abduct(m, values))

    def features(self, nodes: Iterable[Node]) -> dict[Node, float]:
        return {v: self.values[v] for v in nodes}
