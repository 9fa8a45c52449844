"""Data model for single-subject adaptive trials.

A trial is one time series of blocks (A(t), Y(t), W(t)) with that within-block
ordering: treatment, then outcome, then post-outcome covariates. All estimation
conditions on a fixed-dimensional context assembled from blocks strictly before
t, so nothing here can look ahead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ValidationError(ValueError):
    """A config or argument failed validation; message names the field."""


class MissingHistoryError(LookupError):
    """A requested lag points before the start of the series."""


class SpecificationError(ValueError):
    """Two components of a specification disagree (e.g. feature layout)."""


class PositivityError(ValueError):
    """A treatment probability fell outside the configured floor."""


@dataclass(frozen=True)
class Block:
    """One time step: treatment a, outcome y in [0,1], covariate vector w."""

    a: int
    y: float
    w: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.a not in (0, 1):
            raise ValidationError("a: treatment must be 0 or 1")
        if not 0.0 <= self.y <= 1.0:
            raise ValidationError("y: outcome must lie in [0, 1]")


@dataclass(frozen=True)
class TrialHistory:
    """Blocks observed so far, oldest first; the first burn_in are exogenous."""

    blocks: tuple[Block, ...]
    w_names: tuple[str, ...]
    burn_in: int = 4

    def __post_init__(self) -> None:
        for b in self.blocks:
            if len(b.w) != len(self.w_names):
                raise ValidationError("blocks: covariate width differs from w_names")

    def __len__(self) -> int:
        return len(self.blocks)

    def value(self, source: str, t: int) -> float:
        """Value of a named node at time t (1-based)."""
        if not 1 <= t <= len(self.blocks):
            raise MissingHistoryError(f"time {t} outside recorded history")
        block = self.blocks[t - 1]
        if source == "A":
            return float(block.a)
        if source == "Y":
            return float(block.y)
        try:
            return float(block.w[self.w_names.index(source)])
        except ValueError:
            raise SpecificationError(f"unknown source variable {source!r}") from None


@dataclass(frozen=True)
class ContextSpec:
    """Which lagged values form the context, in declared order.

    lag_map is a tuple of (source, lags) pairs; every lag is >= 1 so the
    context for time t precedes the treatment decision at t. When
    include_blip_estimate is set the caller-supplied running blip estimate is
    appended as the final coordinate.
    """

    lag_map: tuple[tuple[str, tuple[int, ...]], ...]
    include_blip_estimate: bool = False

    def __post_init__(self) -> None:
        for source, lags in self.lag_map:
            if not lags:
                raise ValidationError(f"context.lags[{source}]: empty lag list")
            for lag in lags:
                if lag < 1:
                    raise ValidationError(
                        f"context.lags[{source}]: lag {lag} must be >= 1"
                    )

    @classmethod
    def from_map(cls, lags: dict[str, list[int]], include_blip_estimate: bool = False) -> "ContextSpec":
        entries = tuple((src, tuple(int(l) for l in ls)) for src, ls in lags.items())
        return cls(entries, include_blip_estimate)

    @property
    def dim(self) -> int:
        base = sum(len(lags) for _, lags in self.lag_map)
        return base + (1 if self.include_blip_estimate else 0)

    @property
    def feature_names(self) -> tuple[str, ...]:
        names = [f"{src}_lag{lag}" for src, lags in self.lag_map for lag in lags]
        if self.include_blip_estimate:
            names.append("blip_estimate")
        return tuple(names)

    def pairs(self) -> tuple[tuple[str, int], ...]:
        """Flattened (source, lag) pairs in feature order, blip excluded."""
        return tuple((src, lag) for src, lags in self.lag_map for lag in lags)

    def max_lag(self) -> int:
        return max((lag for _, lags in self.lag_map for lag in lags), default=0)

    def feature_index(self, source: str, lag: int) -> int:
        for i, pair in enumerate(self.pairs()):
            if pair == (source, lag):
                return i
        raise SpecificationError(f"context has no feature ({source}, lag {lag})")


@dataclass(frozen=True)
class ContextSummary:
    """Feature vector for one decision time, plus the layout that built it."""

    features: np.ndarray
    time_index: int
    layout: ContextSpec

    def __post_init__(self) -> None:
        if self.features.shape != (self.layout.dim,):
            raise SpecificationError(
                f"context dimension {self.features.shape} != layout dim {self.layout.dim}"
            )


def extract_context(
    history: TrialHistory,
    t: int,
    spec: ContextSpec,
    blip_estimate: float | None = None,
) -> ContextSummary:
    """Assemble the context for time t from blocks 1..t-1 only.

    Features appear in the declared lag order; when the spec includes the blip
    estimate the supplied value becomes the final coordinate.
    """
    if t < 1:
        raise ValidationError("t: time index must be >= 1")
    values = []
    for source, lag in spec.pairs():
        past = t - lag
        if past < 1:
            raise MissingHistoryError(
                f"feature ({source}, lag {lag}) at t={t} precedes time 1"
            )
        values.append(history.value(source, past))
    if spec.include_blip_estimate:
        if blip_estimate is None:
            raise SpecificationError(
                "context spec includes the blip estimate but none was supplied"
            )
        values.append(float(blip_estimate))
    return ContextSummary(np.asarray(values, dtype=float), t, spec)


def schedule_value(schedule: tuple[float, ...], t: int) -> float:
    """Value of a (possibly constant) schedule at time t; last entry persists."""
    return schedule[min(t - 1, len(schedule) - 1)]


@dataclass(frozen=True)
class TrialConfig:
    """Full description of one adaptive trial run.

    The balanced reference design runs through initial_n; afterwards treatment
    follows the configured policy, refit at every checkpoint_step steps up to
    max_n. Schedules are per-time-step sequences (singletons mean constant).
    """

    dgp_id: str
    initial_n: int
    checkpoint_step: int
    max_n: int
    context: ContextSpec
    c_schedule: tuple[float, ...] = (0.10,)
    e_schedule: tuple[float, ...] = (0.05,)
    alpha: float = 0.05
    q_bounds: tuple[float, float] = (0.005, 0.995)
    g_floor: float = 0.01
    policy_mode: str = "smoother"
    candidates: tuple[str, ...] = ("glm_main", "glm_interact")
    val_size: int = 30
    lasso_m: float = 5.0
    n_boot: int = 200

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.initial_n < 1:
            raise ValidationError("initial_n: must be >= 1")
        # max_n == initial_n is the degenerate single-checkpoint design.
        if self.max_n < self.initial_n:
            raise ValidationError("max_n: must be >= initial_n")
        if self.checkpoint_step < 1:
            raise ValidationError("checkpoint_step: must be >= 1")
        if (self.max_n - self.initial_n) % self.checkpoint_step != 0:
            raise ValidationError(
                "checkpoint_step: must divide (max_n - initial_n)"
            )
        low, high = self.q_bounds
        if not 0.0 < low < high < 1.0:
            raise ValidationError("q_bounds: need 0 < low < high < 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha: must lie in (0, 1)")
        if self.g_floor <= 0.0:
            raise ValidationError("g_floor: must be > 0")
        for name, sched in (("c_schedule", self.c_schedule), ("e_schedule", self.e_schedule)):
            if not sched:
                raise ValidationError(f"{name}: must be non-empty")
            if any(b > a for a, b in zip(sched, sched[1:])):
                raise ValidationError(f"{name}: must be non-increasing")
            if sched[-1] <= 0.0:
                raise ValidationError(f"{name}: limit must be positive")
        if self.c_schedule[0] > 0.5:
            raise ValidationError("c_schedule: values must be <= 1/2")
        if self.g_floor > self.c_schedule[-1]:
            raise ValidationError("g_floor: must be <= the c_schedule limit")
        if self.policy_mode not in ("balanced", "smoother", "hal_ci"):
            raise ValidationError(f"policy.mode: unknown mode {self.policy_mode!r}")
        if not self.candidates:
            raise ValidationError("estimator.candidates: must name at least one")
        if self.val_size < 1:
            raise ValidationError("estimator.val_size: must be >= 1")
        if self.lasso_m < 0.0:
            raise ValidationError("estimator.lasso_m: must be >= 0")
        if self.n_boot < 2:
            raise ValidationError("estimator.n_boot: must be >= 2")
        if self.policy_mode == "hal_ci" and "lasso_blip" not in self.candidates:
            raise ValidationError(
                "policy.mode: hal_ci requires lasso_blip among the candidates"
            )

    @property
    def checkpoints(self) -> tuple[int, ...]:
        return tuple(range(self.initial_n, self.max_n + 1, self.checkpoint_step))

    def c_at(self, t: int) -> float:
        return schedule_value(self.c_schedule, t)

    def e_at(self, t: int) -> float:
        return schedule_value(self.e_schedule, t)
