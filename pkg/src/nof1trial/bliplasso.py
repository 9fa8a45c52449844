"""L1-budgeted blip regression on a zero-order indicator basis.

The basis places one indicator per nonempty coordinate subset and observed
context value (knot): phi(c) = prod_{j in s} 1(c_j >= knot_j). The fit
minimizes mean squared error against pseudo-outcomes subject to a budget on
|intercept| + sum |beta|, solved as a Lagrangian by coordinate descent with
the penalty tuned by bisection until the budget binds.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np

from .core import ValidationError

_CD_TOL = 1e-12
_BUDGET_TOL = 1e-6


def coordinate_subsets(d: int) -> tuple[tuple[int, ...], ...]:
    """Nonempty subsets of {0..d-1}, smallest first, lexicographic within size."""
    out = []
    for size in range(1, d + 1):
        out.extend(combinations(range(d), size))
    return tuple(out)


def build_basis(contexts: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Indicator design: one column per (subset, knot), subset-major order."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    knots = np.atleast_2d(np.asarray(knots, dtype=float))
    n, d = contexts.shape
    subsets = coordinate_subsets(d)
    m = knots.shape[0]
    cols = np.empty((n, len(subsets) * m), dtype=float)
    for si, subset in enumerate(subsets):
        block = np.ones((n, m), dtype=float)
        for j in subset:
            block *= contexts[:, j][:, None] >= knots[:, j][None, :]
        cols[:, si * m : (si + 1) * m] = block
    return cols


def _soft(z: float, lam: float) -> float:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def _cd_solve(
    design: np.ndarray,
    y: np.ndarray,
    lam: float,
    beta: np.ndarray | None = None,
    max_sweeps: int = 5000,
) -> np.ndarray:
    """Coordinate descent for (1/2n)||y - Xb||^2 + lam*||b||_1, all coords penalized."""
    n, k = design.shape
    colsq = np.einsum("ij,ij->j", design, design) / n
    if beta is None:
        beta = np.zeros(k)
    else:
        beta = beta.copy()
    resid = y - design @ beta

    def sweep(indices) -> float:
        nonlocal resid
        max_delta = 0.0
        for j in indices:
            if colsq[j] == 0.0:
                continue
            bj = beta[j]
            zj = design[:, j] @ resid / n + colsq[j] * bj
            bn = _soft(zj, lam) / colsq[j]
            if bn != bj:
                resid += design[:, j] * (bj - bn)
                beta[j] = bn
                max_delta = max(max_delta, abs(bn - bj))
        return max_delta

    for _ in range(max_sweeps):
        # converge on the active set, then confirm with a full sweep
        while True:
            active = np.flatnonzero(beta)
            if active.size == 0 or sweep(active) < _CD_TOL:
                break
        if sweep(range(k)) < _CD_TOL:
            break
    return beta


@dataclass(frozen=True)
class KnotTerm:
    """One active indicator: thresholds for the subset coordinates."""

    subset: tuple[int, ...]
    knot: tuple[float, ...]
    coef: float


@dataclass(frozen=True)
class BlipModel:
    """Fitted indicator expansion of the blip."""

    intercept: float
    knots: tuple[KnotTerm, ...]
    l1_bound: float
    dim: int
    penalty: float = 0.0

    @property
    def budget_used(self) -> float:
        return abs(self.intercept) + sum(abs(k.coef) for k in self.knots)

    def predict(self, contexts) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        out = np.full(contexts.shape[0], self.intercept, dtype=float)
        for term in self.knots:
            ind = np.ones(contexts.shape[0], dtype=float)
            for j, thr in zip(term.subset, term.knot):
                ind *= contexts[:, j] >= thr
            out += term.coef * ind
        return out

    def __call__(self, features) -> float:
        return float(self.predict(np.atleast_2d(features))[0])


def _model_from_beta(
    beta: np.ndarray,
    knots: np.ndarray,
    subsets: tuple[tuple[int, ...], ...],
    m_budget: float,
    dim: int,
    lam: float,
) -> BlipModel:
    m = knots.shape[0]
    terms = []
    for idx in np.flatnonzero(beta[1:]):
        si, ki = divmod(int(idx), m)
        subset = subsets[si]
        terms.append(
            KnotTerm(subset, tuple(float(knots[ki, j]) for j in subset), float(beta[idx + 1]))
        )
    return BlipModel(float(beta[0]), tuple(terms), m_budget, dim, lam)


def fit_blip_lasso(contexts, pseudo, m_budget: float) -> BlipModel:
    """Budgeted lasso of pseudo-outcomes on the indicator basis.

    Knots sit at the observed contexts; the intercept is penalized and counts
    toward the budget, so m_budget = 0 forces the all-zero fit. When the
    unpenalized solution already fits the budget the penalty stays 0.
    """
    if m_budget < 0.0:
        raise ValidationError("m_budget: must be >= 0")
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    pseudo = np.asarray(pseudo, dtype=float)
    n, d = contexts.shape
    if n < 1:
        raise ValidationError("rows: need at least one observation")
    if pseudo.shape != (n,):
        raise ValidationError("rows: pseudo-outcome length differs from contexts")
    subsets = coordinate_subsets(d)
    if m_budget == 0.0:
        return BlipModel(0.0, (), 0.0, d, 0.0)
    design = np.hstack([np.ones((n, 1)), build_basis(contexts, contexts)])

    beta = _cd_solve(design, pseudo, 0.0)
    if np.abs(beta).sum() <= m_budget:
        return _model_from_beta(beta, contexts, subsets, m_budget, d, 0.0)

    lam_hi = float(np.max(np.abs(design.T @ pseudo)) / n)
    lam_lo = 0.0
    feasible = (lam_hi, np.zeros(design.shape[1]))
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        beta = _cd_solve(design, pseudo, lam, beta)
        used = float(np.abs(beta).sum())
        if used <= m_budget:
            feasible = (lam, beta.copy())
        if abs(used - m_budget) <= _BUDGET_TOL:
            return _model_from_beta(beta, contexts, subsets, m_budget, d, lam)
        if used > m_budget:
            lam_lo = lam
        else:
            lam_hi = lam
    lam, beta = feasible
    return _model_from_beta(beta, contexts, subsets, m_budget, d, lam)


def kkt_gaps(model: BlipModel, contexts, pseudo) -> tuple[float, float]:
    """(worst inactive excess, worst active mismatch) of the KKT conditions.

    At an exact solution every column's |correlation with residuals| is at
    most the penalty, with equality on active coordinates; both returns are
    ~0 for a converged fit.
    """
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    pseudo = np.asarray(pseudo, dtype=float)
    n = contexts.shape[0]
    design = np.hstack([np.ones((n, 1)), build_basis(contexts, contexts)])
    resid = pseudo - model.predict(contexts)
    corr = np.abs(design.T @ resid) / n
    # mark active columns; duplicates of an active column share its correlation
    # so which duplicate carries the coefficient does not move the gaps
    subsets = coordinate_subsets(contexts.shape[1])
    beta = np.zeros(design.shape[1])
    beta[0] = model.intercept
    sub_index = {s: i for i, s in enumerate(subsets)}
    for term in model.knots:
        si = sub_index[term.subset]
        matches = [
            ki
            for ki in range(n)
            if all(contexts[ki, j] == thr for j, thr in zip(term.subset, term.knot))
        ]
        beta[1 + si * n + matches[0]] += term.coef
    active = beta != 0.0
    inactive_excess = float(np.max(corr[~active] - model.penalty, initial=0.0))
    active_gap = float(np.max(np.abs(corr[active] - model.penalty), initial=0.0))
    return inactive_excess, active_gap


@dataclass(frozen=True)
class BlipCI:
    """Pointwise bootstrap band around a fitted blip model."""

    level: float
    half_width: Callable[[np.ndarray], float]


def bootstrap_blip_ci(
    fit: BlipModel,
    contexts,
    pseudo,
    n_boot: int,
    level: float,
    rng: np.random.Generator,
) -> BlipCI:
    """Percentile band from refits on resampled rows, basis fixed at the fit.

    Rows are resampled independently with replacement; each replicate refits
    the lasso restricted to the originally selected indicators, keeping the
    same L1 budget. half_width(c) is half the central `level` percentile
    spread of the replicate evaluations at c.
    """
    if n_boot < 2:
        raise ValidationError("n_boot: must be >= 2")
    if not 0.0 < level < 1.0:
        raise ValidationError("level: must lie in (0, 1)")
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    pseudo = np.asarray(pseudo, dtype=float)
    n = contexts.shape[0]

    def active_design(ctx: np.ndarray) -> np.ndarray:
        cols = [np.ones(ctx.shape[0])]
        for term in fit.knots:
            ind = np.ones(ctx.shape[0], dtype=float)
            for j, thr in zip(term.subset, term.knot):
                ind *= ctx[:, j] >= thr
            cols.append(ind)
        return np.column_stack(cols)

    design = active_design(contexts)
    replicates = np.empty((n_boot, design.shape[1]), dtype=float)
    for b in range(n_boot):
        take = rng.integers(0, n, size=n)
        replicates[b] = _restricted_fit(design[take], pseudo[take], fit.l1_bound)

    lo_q = 100.0 * (1.0 - level) / 2.0
    hi_q = 100.0 - lo_q

    def half_width(features) -> float:
        row = active_design(np.atleast_2d(np.asarray(features, dtype=float)))[0]
        vals = replicates @ row
        return float(np.percentile(vals, hi_q) - np.percentile(vals, lo_q)) / 2.0

    return BlipCI(level, half_width)


def _restricted_fit(design: np.ndarray, y: np.ndarray, m_budget: float) -> np.ndarray:
    """Budgeted lasso on an explicit (already built) design."""
    if m_budget == 0.0:
        return np.zeros(design.shape[1])
    n = design.shape[0]
    beta = _cd_solve(design, y, 0.0)
    if np.abs(beta).sum() <= m_budget:
        return beta
    lam_hi = float(np.max(np.abs(design.T @ y)) / n)
    lam_lo = 0.0
    feasible = np.zeros(design.shape[1])
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        beta = _cd_solve(design, y, lam, beta)
        used = float(np.abs(beta).sum())
        if used <= m_budget:
            feasible = beta.copy()
        if abs(used - m_budget) <= _BUDGET_TOL:
            return beta
        if used > m_budget:
            lam_lo = lam
        else:
            lam_hi = lam
    return feasible
