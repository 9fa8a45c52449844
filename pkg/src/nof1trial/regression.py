"""Outcome regression and blip estimation from accrued trial history.

A quasi-binomial logistic working model fit by IRLS is the workhorse; a
recursive-origin (time-ordered) cross-validation selector picks among named
candidate prescriptions; the lasso-blip candidate targets the blip directly on
the indicator basis using doubly robust pseudo-outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bliplasso import BlipModel, fit_blip_lasso
from .core import ContextSummary, PositivityError, SpecificationError, ValidationError
from .dgp import expit

DEFAULT_Q_BOUNDS = (0.005, 0.995)

_IRLS_TOL = 1e-8
_IRLS_MAX_ITER = 100
_RIDGE_FALLBACK = 1e-4


class SelectionError(RuntimeError):
    """Every candidate failed to fit; message lists per-candidate failures."""


@dataclass(frozen=True)
class FeatureLayout:
    """Coefficient layout: intercept, optional treatment, features, optional
    treatment-by-feature interactions, in that order."""

    n_features: int
    include_treatment: bool = True
    interactions: bool = False

    @property
    def n_coef(self) -> int:
        n = 1 + self.n_features
        if self.include_treatment:
            n += 1
        if self.interactions:
            n += self.n_features
        return n

    def design(self, contexts: np.ndarray, a) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        n = contexts.shape[0]
        if contexts.shape[1] != self.n_features:
            raise SpecificationError(
                f"feature dimension {contexts.shape[1]} != layout {self.n_features}"
            )
        a_col = np.broadcast_to(np.asarray(a, dtype=float), (n,)).reshape(n, 1)
        cols = [np.ones((n, 1))]
        if self.include_treatment:
            cols.append(a_col)
        cols.append(contexts)
        if self.interactions:
            cols.append(a_col * contexts)
        return np.hstack(cols)


@dataclass(frozen=True)
class WorkingModel:
    """Fitted logistic working model for the conditional outcome mean."""

    coefficients: np.ndarray
    layout: FeatureLayout
    ridge_fallback: bool = False

    def __post_init__(self) -> None:
        if self.coefficients.shape != (self.layout.n_coef,):
            raise SpecificationError("coefficient length differs from layout")
        if not np.all(np.isfinite(self.coefficients)):
            raise SpecificationError("coefficients must be finite")


def _as_matrix(context) -> np.ndarray:
    if isinstance(context, ContextSummary):
        return context.features.reshape(1, -1)
    return np.atleast_2d(np.asarray(context, dtype=float))


def _irls(X, y, weights, ridge):
    n, p = X.shape
    beta = np.zeros(p)
    eye = np.eye(p)
    for _ in range(_IRLS_MAX_ITER):
        mu = expit(X @ beta)
        wv = np.clip(mu * (1.0 - mu), 1e-12, None) * weights
        score = X.T @ (weights * (y - mu)) - ridge * beta
        info = (X * wv[:, None]).T @ X + ridge * eye
        delta = np.linalg.solve(info, score)
        beta = beta + delta
        if np.max(np.abs(delta)) < _IRLS_TOL:
            return beta, True
    return beta, False


def fit_logistic(
    contexts,
    a,
    y,
    weights=None,
    *,
    layout: FeatureLayout,
) -> WorkingModel:
    """Weighted quasi-binomial MLE by IRLS.

    Outcomes may be any values in [0,1]. Complete separation or
    non-convergence falls back to a ridge penalty of 1e-4 and flags the model.
    """
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 1:
        raise ValidationError("rows: need at least one observation")
    if np.any((y < 0.0) | (y > 1.0)):
        raise ValidationError("y: outcomes must lie in [0, 1]")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0.0):
        raise ValidationError("weights: must be nonnegative")
    X = layout.design(contexts, a)
    try:
        beta, converged = _irls(X, y, w, ridge=0.0)
        if converged and np.max(np.abs(beta)) < 1e3:
            return WorkingModel(beta, layout, ridge_fallback=False)
    except np.linalg.LinAlgError:
        pass
    beta, _ = _irls(X, y, w, ridge=_RIDGE_FALLBACK)
    return WorkingModel(beta, layout, ridge_fallback=True)


def predict_qbar(model: WorkingModel, context, a, q_bounds=DEFAULT_Q_BOUNDS):
    """Predicted outcome probability, truncated into q_bounds."""
    contexts = _as_matrix(context)
    X = model.layout.design(contexts, a)
    q = np.clip(expit(X @ model.coefficients), q_bounds[0], q_bounds[1])
    if isinstance(context, ContextSummary) or np.asarray(context).ndim == 1:
        return float(q[0])
    return q


def blip_of(model: WorkingModel, context, q_bounds=DEFAULT_Q_BOUNDS):
    """Estimated treatment effect: difference of truncated arm predictions."""
    contexts = _as_matrix(context)
    q1 = predict_qbar(model, contexts, 1.0, q_bounds)
    q0 = predict_qbar(model, contexts, 0.0, q_bounds)
    diff = q1 - q0
    if isinstance(context, ContextSummary) or np.asarray(context).ndim == 1:
        return float(np.asarray(diff).reshape(-1)[0])
    return diff


def quasi_nll(y, q) -> float:
    """Mean quasi-binomial negative log-likelihood."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(-np.mean(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)))


def d1_pseudo_outcome(y, a, qbar1, qbar0, g_prob, g_floor: float = 0.01):
    """Doubly robust blip pseudo-outcome.

    ((2a-1)/g_a)(y - qbar_a) + (qbar1 - qbar0) with g_a the probability of the
    observed arm; its conditional mean is the true blip when either the
    outcome model or the assignment probability is correct.
    """
    y_arr = np.asarray(y, dtype=float)
    a_arr = np.asarray(a, dtype=float)
    g_arr = np.asarray(g_prob, dtype=float)
    q1 = np.asarray(qbar1, dtype=float)
    q0 = np.asarray(qbar0, dtype=float)
    if np.any((g_arr < g_floor) | (g_arr > 1.0 - g_floor)):
        raise PositivityError("g_prob: outside [g_floor, 1 - g_floor]")
    g_a = np.where(a_arr == 1.0, g_arr, 1.0 - g_arr)
    q_a = np.where(a_arr == 1.0, q1, q0)
    out = (2.0 * a_arr - 1.0) / g_a * (y_arr - q_a) + (q1 - q0)
    if np.isscalar(y) or np.asarray(y).ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class CandidateSpec:
    """Named estimator prescription for the selector."""

    name: str
    lasso_m: float = 5.0

    def __post_init__(self) -> None:
        if self.name not in ("glm_main", "glm_interact", "intercept_only", "lasso_blip"):
            raise ValidationError(f"estimator.candidates: unknown name {self.name!r}")


@dataclass(frozen=True)
class FittedCandidate:
    """A fitted prescription: an outcome model plus the blip it implies.

    For lasso_blip the outcome model is the main-terms fit (used for
    pseudo-outcomes and for scoring) while the blip comes from the budgeted
    indicator regression.
    """

    name: str
    qbar_model: WorkingModel
    blip_model: BlipModel | None = None

    def _model_features(self, contexts) -> np.ndarray:
        # a zero-feature model (intercept_only) ignores whatever context it is handed
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        if self.qbar_model.layout.n_features == 0:
            return np.empty((contexts.shape[0], 0))
        return contexts

    def predict_qbar(self, contexts, a, q_bounds=DEFAULT_Q_BOUNDS):
        return predict_qbar(self.qbar_model, self._model_features(contexts), a, q_bounds)

    def blip(self, contexts, q_bounds=DEFAULT_Q_BOUNDS):
        if self.blip_model is not None:
            return self.blip_model.predict(contexts)
        return blip_of(self.qbar_model, self._model_features(contexts), q_bounds)


def fit_candidate(
    spec: CandidateSpec,
    contexts: np.ndarray,
    a: np.ndarray,
    y: np.ndarray,
    g1: np.ndarray,
    q_bounds=DEFAULT_Q_BOUNDS,
    g_floor: float = 0.01,
) -> FittedCandidate:
    d = contexts.shape[1]
    if spec.name == "intercept_only":
        layout = FeatureLayout(0, include_treatment=False)
        model = fit_logistic(np.empty((len(y), 0)), a, y, layout=layout)
        return FittedCandidate(spec.name, model)
    layout = FeatureLayout(d, include_treatment=True, interactions=spec.name == "glm_interact")
    model = fit_logistic(contexts, a, y, layout=layout)
    if spec.name in ("glm_main", "glm_interact"):
        return FittedCandidate(spec.name, model)
    # lasso_blip: main-terms outcome model feeds doubly robust pseudo-outcomes
    q1 = predict_qbar(model, contexts, 1.0, q_bounds)
    q0 = predict_qbar(model, contexts, 0.0, q_bounds)
    pseudo = d1_pseudo_outcome(y, a, q1, q0, g1, g_floor)
    blip_model = fit_blip_lasso(contexts, pseudo, spec.lasso_m)
    return FittedCandidate(spec.name, model, blip_model)


@dataclass(frozen=True)
class SelectionResult:
    best_index: int
    fitted: FittedCandidate
    val_scores: tuple[float, ...]


def select_recursive_origin(
    candidates: Sequence[CandidateSpec],
    contexts: np.ndarray,
    a: np.ndarray,
    y: np.ndarray,
    g1: np.ndarray,
    val_size: int,
    q_bounds=DEFAULT_Q_BOUNDS,
    g_floor: float = 0.01,
) -> SelectionResult:
    """Time-ordered single-split selection, winner refit on all rows.

    Each candidate trains on rows 1..n-val_size and is scored by quasi-NLL on
    the final val_size rows; ties go to the earliest-listed candidate.
    """
    if not candidates:
        raise ValidationError("candidates: need at least one")
    n = len(y)
    if n < 2 * val_size:
        raise ValidationError("rows: need at least 2*val_size observations")
    cut = n - val_size
    scores = []
    failures = []
    for spec in candidates:
        try:
            fitted = fit_candidate(
                spec, contexts[:cut], a[:cut], y[:cut], g1[:cut], q_bounds, g_floor
            )
            q_val = fitted.predict_qbar(contexts[cut:], a[cut:], q_bounds)
            scores.append(quasi_nll(y[cut:], q_val))
        except Exception as exc:  # scored out of contention, kept for the report
            scores.append(float("inf"))
            failures.append(f"{spec.name}: {exc}")
    if not np.isfinite(min(scores)):
        raise SelectionError("all candidates failed: " + "; ".join(failures))
    best = int(np.argmin(scores))
    refit = fit_candidate(candidates[best], contexts, a, y, g1, q_bounds, g_floor)
    return SelectionResult(best, refit, tuple(scores))
