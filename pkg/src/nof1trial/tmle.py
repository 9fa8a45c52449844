"""Targeting of the outcome fit toward the mean under the estimated rule.

One logistic fluctuation with the clever covariate 1(A=d)/g is solved over all
rows simultaneously; the plug-in then reads the updated fit at the rule arm.
Assignment probabilities are the ones used by the design at assignment time,
so no propensity estimation happens here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import norm

from .core import PositivityError, ValidationError
from .dgp import expit, logit

_SCORE_TOL = 1e-10
_EPS_CLAMP = 10.0
_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class TmleInput:
    """Per-time rows of everything the targeting step consumes.

    g1 is the probability of treatment 1 recorded when each row's treatment
    was assigned; d is the rule decision in force at that time. q_obs and
    q_rule are the initial predictions at the observed and rule arms, already
    truncated into q_bounds.
    """

    y: np.ndarray
    a: np.ndarray
    d: np.ndarray
    g1: np.ndarray
    q_obs: np.ndarray
    q_rule: np.ndarray
    g_floor: float = 0.01
    q_bounds: tuple[float, float] = (0.005, 0.995)

    def __post_init__(self) -> None:
        n = self.y.shape[0]
        if n == 0:
            raise ValidationError("rows: input is empty")
        for name in ("a", "d", "g1", "q_obs", "q_rule"):
            if getattr(self, name).shape != (n,):
                raise ValidationError(f"{name}: length differs from y")
        if np.any((self.g1 < self.g_floor) | (self.g1 > 1.0 - self.g_floor)):
            raise PositivityError("g1: outside [g_floor, 1 - g_floor]")
        low, high = self.q_bounds
        for name in ("q_obs", "q_rule"):
            q = getattr(self, name)
            if np.any((q < low) | (q > high)):
                raise ValidationError(f"{name}: prediction outside q_bounds")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def g_obs(self) -> np.ndarray:
        """Assignment probability of the arm actually taken."""
        return np.where(self.a == 1.0, self.g1, 1.0 - self.g1)

    @property
    def g_rule(self) -> np.ndarray:
        """Assignment probability of the rule arm."""
        return np.where(self.d == 1.0, self.g1, 1.0 - self.g1)


def clever_covariate(a, d_decision, g_of_a, g_floor: float = 0.01):
    """1(a = d)/g_of_a, the direction of the logistic fluctuation."""
    g = np.asarray(g_of_a, dtype=float)
    if np.any(g < g_floor):
        raise PositivityError("g_of_a: below g_floor")
    out = (np.asarray(a) == np.asarray(d_decision)).astype(float) / g
    if np.isscalar(a) or np.asarray(a).ndim == 0:
        return float(out)
    return out


class EpsilonResult(NamedTuple):
    epsilon: float
    clamped: bool
    degenerate: bool


def solve_epsilon(y, q_init, h) -> EpsilonResult:
    """Quasi-binomial MLE of the one-dimensional fluctuation coefficient.

    Solves sum h*(y - expit(logit(q_init) + eps*h)) = 0 by Newton steps inside
    a maintained bisection bracket (the score is strictly decreasing). The
    solution is clamped to [-10, 10] with a flag when the bound binds; all-zero
    h returns 0 with the degenerate flag.
    """
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    off = logit(np.asarray(q_init, dtype=float))
    live = h != 0.0
    if not np.any(live):
        return EpsilonResult(0.0, False, True)
    y, h, off = y[live], h[live], off[live]
    n = y.shape[0]

    def score(eps: float) -> float:
        return float(np.sum(h * (y - expit(off + eps * h))) / n)

    lo, hi = -_EPS_CLAMP, _EPS_CLAMP
    if score(hi) > 0.0:
        return EpsilonResult(_EPS_CLAMP, True, False)
    if score(lo) < 0.0:
        return EpsilonResult(-_EPS_CLAMP, True, False)
    eps = 0.0
    for _ in range(100):
        s = score(eps)
        if abs(s) <= _SCORE_TOL:
            return EpsilonResult(eps, False, False)
        if s > 0.0:
            lo = eps
        else:
            hi = eps
        mu = expit(off + eps * h)
        info = float(np.sum(h * h * mu * (1.0 - mu)) / n)
        step = eps + s / info if info > 0.0 else None
        # fall back to bisection whenever Newton leaves the bracket
        eps = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
    return EpsilonResult(eps, False, False)


def fluctuate(q_init, h, epsilon: float):
    """Updated prediction expit(logit(q_init) + epsilon*h).

    A zero offset returns q_init itself, not the logit round trip, so the
    untouched-row and epsilon=0 identities hold exactly.
    """
    q = np.asarray(q_init, dtype=float)
    offset = epsilon * np.asarray(h, dtype=float)
    out = np.where(offset == 0.0, q, expit(logit(q) + offset))
    if np.isscalar(q_init) or np.asarray(q_init).ndim == 0:
        return float(out)
    return out


def eic_value(y, q_star_at_a, a, d_decision, g_of_a, g_floor: float = 0.01):
    """Influence-curve contribution (1(a=d)/g)*(y - q_star_at_a)."""
    h = clever_covariate(a, d_decision, g_of_a, g_floor)
    out = np.asarray(h) * (np.asarray(y, dtype=float) - np.asarray(q_star_at_a, dtype=float))
    if np.isscalar(y) or np.asarray(y).ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class EstimateReport:
    """One checkpoint's targeted estimate and its uncertainty."""

    psi_hat: float
    epsilon: float
    sigma2_hat: float
    ci: tuple[float, float]
    score_residual: float
    n: int
    cond_var_path: tuple[tuple[int, float], ...]
    flags: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "psi_hat": self.psi_hat,
            "epsilon": self.epsilon,
            "sigma2_hat": self.sigma2_hat,
            "ci": list(self.ci),
            "score_residual": self.score_residual,
            "n": self.n,
            "cond_var_path": [[n, v] for n, v in self.cond_var_path],
            "flags": list(self.flags),
        }


def cond_var_path(
    inp: TmleInput, q_star_rule: np.ndarray, grid: Sequence[int]
) -> tuple[tuple[int, float], ...]:
    """Running averages of the conditional influence-curve variance.

    Per row that variance is q_star_rule*(1-q_star_rule)/g_rule under the
    binary-outcome model; stabilization of the running average is the
    design's variance diagnostic.
    """
    per_row = q_star_rule * (1.0 - q_star_rule) / inp.g_rule
    cumulative = np.cumsum(per_row)
    out = []
    for n in grid:
        if not 1 <= n <= inp.n:
            raise ValidationError(f"grid: index {n} outside 1..{inp.n}")
        out.append((int(n), float(cumulative[n - 1] / n)))
    return tuple(out)


def tmle_estimate(
    inp: TmleInput,
    alpha: float = 0.05,
    cond_var_grid: Sequence[int] | None = None,
) -> EstimateReport:
    """Target the initial fit and report the plug-in with a martingale CI.

    The fluctuation is solved on the observed arms; both arms are then
    updated (the rule arm's covariate value is 1/g(rule arm)). The variance
    is the empirical second moment of the influence values, and the interval
    is psi_hat +/- z_{1-alpha/2} * sqrt(sigma2_hat/n).
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha: must lie in (0, 1)")
    h_obs = clever_covariate(inp.a, inp.d, inp.g_obs, inp.g_floor)
    eps, clamped, degenerate = solve_epsilon(inp.y, inp.q_obs, h_obs)
    q_star_obs = fluctuate(inp.q_obs, h_obs, eps)
    q_star_rule = fluctuate(inp.q_rule, 1.0 / inp.g_rule, eps)
    psi_hat = float(np.mean(q_star_rule))
    eic = h_obs * (inp.y - q_star_obs)
    sigma2_hat = float(np.mean(eic * eic))
    score_residual = float(np.mean(eic))
    flags = []
    if clamped:
        flags.append("epsilon_clamped")
    if degenerate:
        flags.append("epsilon_degenerate")
    if not clamped and abs(score_residual) > _RESIDUAL_TOL * max(1.0, np.sqrt(sigma2_hat)):
        raise RuntimeError(
            f"score equation unsolved: residual {score_residual:.3e} with interior epsilon"
        )
    z = float(norm.ppf(1.0 - alpha / 2.0))
    half = z * np.sqrt(sigma2_hat / inp.n)
    grid = tuple(cond_var_grid) if cond_var_grid is not None else (inp.n,)
    path = cond_var_path(inp, q_star_rule, grid)
    return EstimateReport(
        psi_hat=psi_hat,
        epsilon=float(eps),
        sigma2_hat=sigma2_hat,
        ci=(psi_hat - half, psi_hat + half),
        score_residual=score_residual,
        n=inp.n,
        cond_var_path=path,
        flags=tuple(flags),
    )
