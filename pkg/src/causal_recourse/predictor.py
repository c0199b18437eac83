"""Linear and logistic predictors over observed features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .graph import markov_blanket
from .scm import Dataset, Scm

KINDS = ("linear", "logistic")
RIDGE_JITTER = 1e-8
MAX_CONDITION = 1e12
SUPPORT_INFLATION = 0.05


class PredictorError(ValueError):
    pass


@dataclass(frozen=True)
class Predictor:
    """``f(x) = intercept + weights . x[inputs]``, squashed through a sigmoid for ``logistic``.

    ``envelope`` holds the per-input ``(min, max)`` seen in training.
    """

    inputs: tuple[str, ...]
    weights: tuple[float, ...]
    intercept: float
    kind: str = "linear"
    envelope: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "intercept", float(self.intercept))
        if not self.envelope:
            object.__setattr__(self, "envelope", tuple((-math.inf, math.inf) for _ in self.inputs))
        object.__setattr__(self, "envelope", tuple((float(lo), float(hi)) for lo, hi in self.envelope))
        if self.kind not in KINDS:
            raise PredictorError(f"unknown predictor kind {self.kind!r}")
        if len(self.weights) != len(self.inputs) or len(self.envelope) != len(self.inputs):
            raise PredictorError("weights and envelope must align with inputs")
        if len(set(self.inputs)) != len(self.inputs):
            raise PredictorError("duplicate predictor inputs")

    def _columns(self, x: Mapping[str, float]):
        missing = [v for v in self.inputs if v not in x]
        if missing:
            raise PredictorError(f"missing predictor inputs {missing}")
        return [np.asarray(x[v], dtype=float) for v in self.inputs]

    def score(self, x: Mapping[str, float]):
        """Linear score before any link function."""
        s = self.intercept
        for w, col in zip(self.weights, self._columns(x)):
            s = s + w * col
        return s if np.ndim(s) else float(s)

    def predict(self, x: Mapping[str, float]):
        s = self.score(x)
        if self.kind == "logistic":
            s = _sigmoid(s)
        return s if np.ndim(s) else float(s)

    def in_support(self, x: Mapping[str, float], inflation: float = SUPPORT_INFLATION):
        """Whether every input lies within the training envelope widened by ``inflation`` of its range."""
        ok = True
        for (lo, hi), col in zip(self.envelope, self._columns(x)):
            pad = inflation * (hi - lo) if math.isfinite(hi - lo) else 0.0
            ok = ok & (col >= lo - pad) & (col <= hi + pad)
        return ok if np.ndim(ok) else bool(ok)

    def to_record(self) -> dict:
        return {
            "inputs": list(self.inputs),
            "kind": self.kind,
            "weights": list(self.weights),
            "intercept": self.intercept,
            "envelope": [list(b) for b in self.envelope],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Predictor":
        try:
            return cls(tuple(rec["inputs"]), tuple(rec["weights"]), rec["intercept"], rec.get("kind", "linear"),
                       tuple(tuple(b) for b in rec["envelope"]))
        except (KeyError, TypeError) as exc:
            raise PredictorError(f"malformed predictor record: {exc}") from exc


def predict(p: Predictor, x: Mapping[str, float]):
    return p.predict(x)


def in_support(p: Predictor, x: Mapping[str, float]):
    return p.in_support(x)


def _sigmoid(s):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def _design(data: Dataset, inputs: Sequence[str]) -> np.ndarray:
    for v in inputs:
        if v not in data:
            raise PredictorError(f"input {v!r} not present in data")
    cols = [data[v] for v in inputs]
    return np.column_stack([np.ones(len(data))] + cols)


def _envelope(data: Dataset, inputs: Sequence[str]):
    return tuple((float(data[v].min()), float(data[v].max())) for v in inputs)


def _solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    gram = gram + RIDGE_JITTER * np.eye(gram.shape[0])
    if np.linalg.cond(gram) > MAX_CONDITION:
        raise PredictorError("design matrix is rank deficient")
    return np.linalg.solve(gram, rhs)


def log_likelihood(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """Bernoulli log-likelihood of a logistic model with design ``X`` (intercept column included)."""
    s = X @ beta
    return float(np.sum(y * s - np.logaddexp(0.0, s)))


def log_likelihood_grad(beta: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return X.T @ (y - _sigmoid(X @ beta))


def _fit_logistic(X: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-8) -> np.ndarray:
    beta = np.zeros(X.shape[1])
    ll = log_likelihood(beta, X, y)
    for _ in range(max_iter):
        g = log_likelihood_grad(beta, X, y)
        if np.linalg.norm(g) < tol:
            break
        p = _sigmoid(X @ beta)
        hess = X.T @ (X * (p * (1 - p))[:, None])
        step = _solve(hess, g)
        # Halve the Newton step until the likelihood does not decrease.
        t = 1.0
        while t > 1e-10:
            cand = beta + t * step
            cand_ll = log_likelihood(cand, X, y)
            if cand_ll >= ll:
                break
            t *= 0.5
        else:
            break
        beta, ll = cand, cand_ll
    return beta


def fit(data: Dataset, inputs: Sequence[str], kind: str = "linear", target: str = "Y") -> Predictor:
    """Fit ``kind`` on ``data`` using the columns ``inputs`` to predict ``target``.

    Linear models solve the normal equations with a 1e-8 ridge on the Gram
    diagonal; logistic models use damped Newton steps (at most 100).
    """
    inputs = tuple(inputs)
    if kind not in KINDS:
        raise PredictorError(f"unknown predictor kind {kind!r}")
    if target in inputs:
        raise PredictorError("the target cannot be a predictor input")
    if target not in data:
        raise PredictorError(f"target column {target!r} not present in data")
    if len(data) < len(inputs) + 1:
        raise PredictorError("need at least len(inputs) + 1 rows")
    X = _design(data, inputs)
    y = data[target]
    if kind == "linear":
        beta = _solve(X.T @ X, X.T @ y)
    else:
        if not np.all((y == 0) | (y == 1)):
            raise PredictorError("logistic regression needs binary 0/1 labels")
        beta = _fit_logistic(X, y)
    return Predictor(inputs, tuple(beta[1:]), float(beta[0]), kind, _envelope(data, inputs))


def perfect_predictor(m: Scm, inputs: Sequence[str] | None = None, data: Dataset | None = None) -> Predictor:
    """Bayes-optimal linear predictor copying the target's structural equation.

    ``inputs`` defaults to the Markov blanket of the target; inputs that are
    not parents of the target get weight 0. ``data`` only supplies the
    support envelope (unbounded when omitted).
    """
    g = m.graph
    y = g.target
    eq = m.equations[y]
    if eq.threshold is not None:
        raise PredictorError("target mechanism is not linear")
    hidden = g.parents(y) - g.observed
    if hidden:
        raise PredictorError(f"parents of the target are unobserved: {g.sort_nodes(hidden)}")
    if inputs is None:
        inputs = g.sort_nodes(markov_blanket(g) | g.parents(y))
    inputs = tuple(inputs)
    missing = g.parents(y) - set(inputs)
    if missing:
        raise PredictorError(f"perfect prediction needs every parent of the target as input: {g.sort_nodes(missing)}")
    weights = tuple(eq.coefficients.get(v, 0.0) for v in inputs)
    env = _envelope(data, inputs) if data is not None else ()
    return Predictor(inputs, weights, eq.intercept + eq.noise.mean, "linear", env)
