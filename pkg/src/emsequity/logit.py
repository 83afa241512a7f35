"""Dummy-coded logistic regression of a binary outcome on income bracket.

Fitting is plain maximum likelihood by iteratively reweighted least squares
(Newton-Raphson on the Bernoulli log-likelihood) with step-halving.  There
is no regularisation: rank-deficient designs and separated data raise
instead of being quietly patched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, RankDeficiencyError, SeparationError
from .ingest import IncomeBracket

DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITERATIONS = 50
SEPARATION_EPS = 1e-12
MAX_HALVINGS = 40
# log-likelihood decreases smaller than this (relative) are summation noise
LL_NOISE = 1e-12


@dataclass(frozen=True)
class Encoding:
    brackets_present: tuple[IncomeBracket, ...]
    reference_bracket: IncomeBracket

    def __post_init__(self):
        present = tuple(sorted(set(self.brackets_present)))
        object.__setattr__(self, "brackets_present", present)
        if self.reference_bracket not in present:
            raise DomainError(f"reference bracket {self.reference_bracket.name} not among present brackets "
                              f"{[b.name for b in present]}")

    @classmethod
    def infer(cls, outcomes: Iterable[tuple[IncomeBracket, int]], reference=None) -> Encoding:
        """Brackets seen in ``outcomes``; reference defaults to the lowest."""
        present = tuple(sorted({b for b, _ in outcomes}))
        if not present:
            raise DomainError("no observations to encode")
        ref = present[0] if reference is None else IncomeBracket.parse(reference)
        return cls(present, ref)

    @property
    def dummy_brackets(self) -> tuple[IncomeBracket, ...]:
        return tuple(b for b in self.brackets_present if b != self.reference_bracket)

    def row(self, bracket: IncomeBracket) -> np.ndarray:
        if bracket not in self.brackets_present:
            raise DomainError(f"bracket {bracket!r} is not part of this encoding")
        return np.array([1.0] + [1.0 if bracket == b else 0.0 for b in self.dummy_brackets])

    def to_dict(self) -> dict:
        return {
            "brackets_present": [b.name for b in self.brackets_present],
            "reference_bracket": self.reference_bracket.name,
            "dummy_brackets": [b.name for b in self.dummy_brackets],
        }


@dataclass(frozen=True)
class LogitModel:
    encoding: Encoding | None
    beta: tuple[float, ...]
    log_likelihood: float = float("nan")
    iterations: int = 0
    converged: bool = False
    n_observations: int = 0
    gradient_max_norm: float = float("nan")
    history: tuple[float, ...] = field(default=(), repr=False)

    @classmethod
    def from_coefficients(cls, beta: Sequence[float], encoding: Encoding) -> LogitModel:
        """A model with given coefficients (intercept first, then dummies in bracket order)."""
        if len(beta) != 1 + len(encoding.dummy_brackets):
            raise DomainError(f"expected {1 + len(encoding.dummy_brackets)} coefficients, got {len(beta)}")
        return cls(encoding, tuple(float(b) for b in beta))

    def coefficients(self) -> dict[str, float]:
        names = ["intercept"] + [b.name for b in self.encoding.dummy_brackets]
        return dict(zip(names, self.beta))

    def to_dict(self) -> dict:
        return {
            "encoding": None if self.encoding is None else self.encoding.to_dict(),
            "beta": list(self.beta),
            "coefficients": None if self.encoding is None else self.coefficients(),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_observations": self.n_observations,
            "gradient_max_norm": self.gradient_max_norm,
        }


def sigmoid(z):
    """Logistic function, evaluated without overflow for large |z|."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def log_likelihood(beta, X, y) -> float:
    eta = X @ np.asarray(beta, dtype=float)
    # y*eta - log(1 + e^eta)
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def score(beta, X, y) -> np.ndarray:
    return X.T @ (y - sigmoid(X @ np.asarray(beta, dtype=float)))


def build_design(outcomes: Sequence[tuple[IncomeBracket, int]], encoding: Encoding,
                 full_dummies: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix ``[1, dummies...]`` and 0/1 response vector.

    ``full_dummies=True`` also adds the reference bracket's indicator, which
    always makes the columns linearly dependent; it exists so the trap can
    be demonstrated and is rejected with :class:`RankDeficiencyError`.
    """
    levels = encoding.dummy_brackets
    if full_dummies:
        levels = encoding.brackets_present
    n = len(outcomes)
    X = np.zeros((n, 1 + len(levels)))
    X[:, 0] = 1.0
    y = np.empty(n)
    col = {b: j + 1 for j, b in enumerate(levels)}
    present = set(encoding.brackets_present)
    for i, (bracket, outcome) in enumerate(outcomes):
        if bracket not in present:
            raise DomainError(f"observation {i}: bracket {bracket!r} outside the encoding")
        if outcome not in (0, 1):
            raise DomainError(f"observation {i}: outcome must be 0 or 1, got {outcome!r}")
        j = col.get(bracket)
        if j is not None:
            X[i, j] = 1.0
        y[i] = outcome
    if full_dummies:
        _check_rank(X)
    return X, y


def _check_rank(X: np.ndarray) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficiencyError(
            f"design matrix has rank {rank} < {X.shape[1]} columns; drop one dummy (choose a reference)")


def fit(X, y, tolerance: float = DEFAULT_TOLERANCE, max_iterations: int = DEFAULT_MAX_ITERATIONS,
        encoding: Encoding | None = None) -> LogitModel:
    """Maximum-likelihood fit by IRLS starting from beta = 0.

    Stops once the largest coefficient change is at most ``tolerance``.  A
    Newton step that lowers the log-likelihood is halved until it does not.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n < k:
        raise DomainError(f"need at least {k} observations, got {n}")
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("response must be 0/1")
    _check_rank(X)

    beta = np.zeros(k)
    ll = log_likelihood(beta, X, y)
    history = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        p = sigmoid(X @ beta)
        _check_separation(p)
        w = p * (1.0 - p)
        grad = X.T @ (y - p)
        hess = X.T @ (X * w[:, None])
        step = np.linalg.solve(hess, grad)

        t = 1.0
        slack = LL_NOISE * max(1.0, abs(ll))
        for _ in range(MAX_HALVINGS):
            candidate = beta + t * step
            ll_new = log_likelihood(candidate, X, y)
            if ll_new >= ll - slack:
                break
            t *= 0.5
        else:
            # no ascent left at machine precision
            converged = bool(np.max(np.abs(step)) <= math.sqrt(tolerance))
            break
        delta = candidate - beta
        beta, ll = candidate, ll_new
        history.append(ll)
        if np.max(np.abs(delta)) <= tolerance:
            converged = True
            break

    p = sigmoid(X @ beta)
    _check_separation(p)
    grad_norm = float(np.max(np.abs(X.T @ (y - p))))
    return LogitModel(encoding, tuple(beta.tolist()), ll, iterations, converged, n, grad_norm, tuple(history))


def _check_separation(p: np.ndarray) -> None:
    if np.any(p < SEPARATION_EPS) or np.any(p > 1.0 - SEPARATION_EPS):
        raise SeparationError(
            "fitted probabilities reached 0 or 1: the data are (quasi-)separated and the MLE does not exist "
            "(a bracket with all successes or all failures?)")


def fit_outcomes(outcomes: Sequence[tuple[IncomeBracket, int]], reference=None,
                 tolerance: float = DEFAULT_TOLERANCE,
                 max_iterations: int = DEFAULT_MAX_ITERATIONS) -> LogitModel:
    """Encode, build the design and fit in one call."""
    encoding = Encoding.infer(outcomes, reference)
    X, y = build_design(outcomes, encoding)
    return fit(X, y, tolerance, max_iterations, encoding=encoding)


def linear_predictor(model: LogitModel, bracket: IncomeBracket) -> float:
    if model.encoding is None:
        raise DomainError("model has no bracket encoding")
    return float(model.encoding.row(bracket) @ np.asarray(model.beta))


def predict_prob(model: LogitModel, bracket: IncomeBracket) -> float:
    """P(outcome = 1 | bracket) under the fitted model."""
    return sigmoid(linear_predictor(model, bracket))
