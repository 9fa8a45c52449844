"""Explore-exploit treatment assignment from a blip estimate.

The smoother maps an estimated blip into a treatment probability that tracks
the implied rule while keeping both arms away from 0: the preferred arm gets
probability >= 1/2 and the other arm >= c. Those two floors are guaranteed in
floating point, not just in exact arithmetic (see _upper_level).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import ContextSummary, ValidationError


def _upper_level(c: float) -> float:
    """Largest double u with u <= 1-c and 1-u >= c, i.e. both arms respect c.

    fl(1-c) may round up past the real 1-c, which would push the opposite
    arm's probability below c by an ulp; step down until both sides hold
    (1-u is exact for u in [1/2, 1] so the check is reliable).
    """
    u = 1.0 - c
    while 1.0 - u < c:
        u = math.nextafter(u, 0.0)
    return u


def smoother(x: float, c: float, e: float) -> float:
    """Treatment probability for blip x: c below -e, 1-c above e, cubic between.

    The cubic is -((1/2-c)/(2e^3))x^3 + (3(1/2-c)/(2e))x + 1/2; output is
    clamped so that min(p, 1-p) >= c and the arm matching sign(x) gets >= 1/2,
    exactly, for any double inputs in range.
    """
    if not 0.0 < c <= 0.5:
        raise ValidationError("c: must lie in (0, 1/2]")
    if not e > 0.0:
        raise ValidationError("e: must be > 0")
    upper = _upper_level(c)
    if x <= -e:
        return c
    if x >= e:
        return upper
    k = 0.5 - c
    # factored form keeps the sign of the correction term exact in fp
    p = 0.5 + (k * x * (3.0 * e * e - x * x)) / (2.0 * e * e * e)
    if x > 0.0:
        return min(max(p, 0.5), upper)
    if x < 0.0:
        return min(max(p, c), 0.5)
    return 0.5


@dataclass(frozen=True)
class PolicyState:
    """Assignment policy in force for a stretch of the trial.

    blip_source maps a context to the current blip estimate; ci_source maps a
    context to a bootstrap half-width (required in hal_ci mode, where the
    smoothing window widens to the half-width but never shrinks below e_t).
    """

    c_t: float
    e_t: float
    mode: str  # "balanced" | "smoother" | "hal_ci"
    blip_source: Optional[Callable[[ContextSummary], float]] = None
    ci_source: Optional[Callable[[ContextSummary], float]] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.c_t <= 0.5:
            raise ValidationError("c_t: must lie in (0, 1/2]")
        if not self.e_t > 0.0:
            raise ValidationError("e_t: must be > 0")
        if self.mode not in ("balanced", "smoother", "hal_ci"):
            raise ValidationError(f"mode: unknown mode {self.mode!r}")


def treatment_prob(state: PolicyState, context: ContextSummary) -> float:
    """Probability of assigning treatment 1 at this context."""
    if state.mode == "balanced":
        return 0.5
    if state.blip_source is None:
        raise ValidationError("blip_source: policy has no fitted blip estimate")
    blip = float(state.blip_source(context))
    if state.mode == "smoother":
        return smoother(blip, state.c_t, state.e_t)
    if state.ci_source is None:
        raise ValidationError("ci_source: hal_ci mode needs a confidence band")
    half_width = float(state.ci_source(context))
    return smoother(blip, state.c_t, max(state.e_t, half_width))


def draw_action(p: float, rng: np.random.Generator) -> int:
    """Bernoulli(p) draw via the inverse-cdf of one uniform."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError("p: probability must lie in [0, 1]")
    return 1 if rng.random() < p else 0
