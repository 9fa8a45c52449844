"""Structural-equation simulator for single-subject time series.

Specs are declarative (coefficient lists plus lags), never arbitrary code, so
the truth oracles below are exact by construction. Node order within a block
is A, then Y, then the covariates in declared order; a covariate equation may
reference same-step values only for nodes that precede it in that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Block,
    ContextSpec,
    ContextSummary,
    MissingHistoryError,
    TrialHistory,
    ValidationError,
)


def expit(x):
    """Logistic function, stable across the double range (no under/overflow)."""
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        xf = float(x)
        if xf >= 0.0:
            return 1.0 / (1.0 + math.exp(-xf))
        ex = math.exp(xf)
        return ex / (1.0 + ex)
    arr = np.asarray(x, dtype=float)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    arr = np.asarray(p, dtype=float)
    out = np.log(arr) - np.log1p(-arr)
    if np.isscalar(p) or arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class EquationTerm:
    """One additive term: coef * source(t - lag)."""

    source: str
    lag: int
    coef: float


@dataclass(frozen=True)
class OutcomeEquation:
    """Logistic-link outcome model: expit(intercept + treat_coef*A(t) + terms)."""

    treat_coef: float
    terms: tuple[EquationTerm, ...]
    intercept: float = 0.0


@dataclass(frozen=True)
class CovariateEquation:
    """Post-outcome covariate: logistic link if binary, identity+noise if not."""

    name: str
    kind: str  # "binary" or "continuous"
    terms: tuple[EquationTerm, ...]
    intercept: float = 0.0
    noise_sd: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("binary", "continuous"):
            raise ValidationError(f"w_equations[{self.name}]: unknown kind {self.kind!r}")
        if self.kind == "continuous" and self.noise_sd < 0.0:
            raise ValidationError(f"w_equations[{self.name}]: noise_sd must be >= 0")


@dataclass(frozen=True)
class DgpSpec:
    """Structural equations plus the exogenous burn-in law.

    The first burn_in blocks are drawn from marginals (Bern(burn_in_p) for
    binary nodes, Normal(0, burn_in_sd) for continuous ones); afterwards every
    node follows its equation.
    """

    y_equation: OutcomeEquation
    w_equations: tuple[CovariateEquation, ...]
    burn_in: int = 4
    burn_in_p: float = 0.5
    burn_in_sd: float = 1.0

    def __post_init__(self) -> None:
        order = ["A", "Y"] + [eq.name for eq in self.w_equations]
        if len(set(order)) != len(order):
            raise ValidationError("w_equations: duplicate node names")
        for term in self.y_equation.terms:
            if term.lag < 1:
                raise ValidationError("y_equation: every lagged term needs lag >= 1")
            if term.source not in order:
                raise ValidationError(f"y_equation: unknown source {term.source!r}")
        for i, eq in enumerate(self.w_equations):
            earlier = order[: 2 + i]
            for term in eq.terms:
                if term.source not in order:
                    raise ValidationError(
                        f"w_equations[{eq.name}]: unknown source {term.source!r}"
                    )
                if term.lag < 0:
                    raise ValidationError(f"w_equations[{eq.name}]: negative lag")
                if term.lag == 0 and term.source not in earlier:
                    raise ValidationError(
                        f"w_equations[{eq.name}]: lag-0 reference to {term.source!r}"
                        " breaks the within-block node order"
                    )

    @property
    def w_names(self) -> tuple[str, ...]:
        return tuple(eq.name for eq in self.w_equations)

    @property
    def max_lag(self) -> int:
        lags = [t.lag for t in self.y_equation.terms]
        lags += [t.lag for eq in self.w_equations for t in eq.terms]
        return max(lags, default=0)

    def empty_history(self) -> TrialHistory:
        return TrialHistory((), self.w_names, self.burn_in)


def sim1a() -> DgpSpec:
    """First benchmark process: all dependencies at lag 1."""
    return DgpSpec(
        y_equation=OutcomeEquation(
            treat_coef=1.5,
            terms=(
                EquationTerm("Y", 1, 0.5),
                EquationTerm("W1", 1, -1.1),
            ),
        ),
        w_equations=(
            CovariateEquation(
                "W1",
                "binary",
                terms=(
                    EquationTerm("W1", 1, 0.5),
                    EquationTerm("Y", 1, -0.5),
                    EquationTerm("W2", 1, 0.1),
                ),
            ),
            CovariateEquation(
                "W2",
                "continuous",
                terms=(
                    EquationTerm("A", 1, 0.6),
                    EquationTerm("Y", 1, 1.0),
                    EquationTerm("W1", 1, -1.0),
                ),
                noise_sd=1.0,
            ),
        ),
    )


def sim1b() -> DgpSpec:
    """Second benchmark process: the same coefficients at longer lags."""
    return DgpSpec(
        y_equation=OutcomeEquation(
            treat_coef=1.5,
            terms=(
                EquationTerm("Y", 3, 0.5),
                EquationTerm("W1", 4, -1.1),
            ),
        ),
        w_equations=(
            CovariateEquation(
                "W1",
                "binary",
                terms=(
                    EquationTerm("W1", 1, 0.5),
                    EquationTerm("Y", 1, -0.5),
                    EquationTerm("W2", 2, 0.1),
                ),
            ),
            CovariateEquation(
                "W2",
                "continuous",
                terms=(
                    EquationTerm("A", 1, 0.6),
                    EquationTerm("Y", 1, 1.0),
                    EquationTerm("W1", 2, -1.0),
                ),
                noise_sd=1.0,
            ),
        ),
    )


DGP_PRESETS = {"sim1a": sim1a, "sim1b": sim1b}


def resolve_dgp(dgp_id: str) -> DgpSpec:
    try:
        return DGP_PRESETS[dgp_id]()
    except KeyError:
        raise ValidationError(f"dgp: unknown dgp_id {dgp_id!r}") from None


def _lagged_value(history_blocks, current, source, t, lag, w_names):
    """Node value at time t-lag; `current` holds the partially built block."""
    tt = t - lag
    if tt < 1:
        raise MissingHistoryError(f"({source}, lag {lag}) at t={t} precedes time 1")
    if tt <= len(history_blocks):
        block = history_blocks[tt - 1]
        if source == "A":
            return float(block.a)
        if source == "Y":
            return float(block.y)
        return float(block.w[w_names.index(source)])
    # lag 0: the block under construction
    return current[source]


def simulate_burn_in(spec: DgpSpec, rng: np.random.Generator) -> tuple[Block, ...]:
    """The exogenous first blocks, drawn from the burn-in marginals.

    Binary nodes consume one uniform each (A, Y, then binary covariates in
    order); continuous nodes consume one standard normal each.
    """
    blocks = []
    for _ in range(spec.burn_in):
        a = 1 if rng.random() < spec.burn_in_p else 0
        y = 1.0 if rng.random() < spec.burn_in_p else 0.0
        w = []
        for eq in spec.w_equations:
            if eq.kind == "binary":
                w.append(1.0 if rng.random() < spec.burn_in_p else 0.0)
            else:
                w.append(spec.burn_in_sd * rng.standard_normal())
        blocks.append(Block(a, y, tuple(w)))
    return tuple(blocks)


def step(
    spec: DgpSpec, history: TrialHistory, a: int, rng: np.random.Generator
) -> Block:
    """Draw the next block given the supplied treatment.

    Y is drawn first, then the covariates in declared order, each consuming
    one uniform (binary) or one standard normal (continuous).
    """
    t = len(history.blocks) + 1
    current: dict[str, float] = {"A": float(a)}
    eta = spec.y_equation.intercept + spec.y_equation.treat_coef * a
    for term in spec.y_equation.terms:
        eta += term.coef * _lagged_value(
            history.blocks, current, term.source, t, term.lag, spec.w_names
        )
    y = 1.0 if rng.random() < expit(eta) else 0.0
    current["Y"] = y
    w = []
    for eq in spec.w_equations:
        eta = eq.intercept
        for term in eq.terms:
            eta += term.coef * _lagged_value(
                history.blocks, current, term.source, t, term.lag, spec.w_names
            )
        if eq.kind == "binary":
            val = 1.0 if rng.random() < expit(eta) else 0.0
        else:
            val = eta + eq.noise_sd * rng.standard_normal()
        current[eq.name] = val
        w.append(val)
    return Block(int(a), y, tuple(w))


def _y_linear_predictor(spec: DgpSpec, context: ContextSummary, a) -> float:
    layout = context.layout
    eta = spec.y_equation.intercept + spec.y_equation.treat_coef * np.asarray(a, dtype=float)
    for term in spec.y_equation.terms:
        idx = layout.feature_index(term.source, term.lag)
        eta = eta + term.coef * context.features[idx]
    return eta


def true_conditional_mean(spec: DgpSpec, context: ContextSummary, a) -> float:
    """Exact mean outcome under treatment a at this context; no sampling.

    The context must carry every lagged feature the outcome equation uses;
    anything missing raises SpecificationError.
    """
    return expit(_y_linear_predictor(spec, context, a))


def true_blip(spec: DgpSpec, context: ContextSummary) -> float:
    """Exact treatment effect on the next-outcome mean at this context."""
    return true_conditional_mean(spec, context, 1) - true_conditional_mean(
        spec, context, 0
    )


def oracle_mean_matrix(
    spec: DgpSpec, layout: ContextSpec, contexts: np.ndarray, a: np.ndarray
) -> np.ndarray:
    """Vectorized true_conditional_mean over rows of a context matrix."""
    contexts = np.asarray(contexts, dtype=float)
    a = np.asarray(a, dtype=float)
    eta = np.full(contexts.shape[0], spec.y_equation.intercept, dtype=float)
    eta += spec.y_equation.treat_coef * a
    for term in spec.y_equation.terms:
        idx = layout.feature_index(term.source, term.lag)
        eta += term.coef * contexts[:, idx]
    return expit(eta)
