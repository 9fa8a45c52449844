"""Full adaptive trials and Monte Carlo aggregation.

One trial: exogenous burn-in, balanced assignment through initial_n, then
policy-driven assignment with the blip estimator refit at every checkpoint.
At each checkpoint the targeting step runs over all estimation rows with each
row's assignment-time g, and the data-adaptive truth is computed from the DGP
oracle under the rules actually in force (balanced-phase rows adopt the
first checkpoint's rule estimate; later rows freeze the rule that assigned
them).

All randomness is pre-drawn per trial as one uniform matrix and one normal
matrix, so trajectories are a pure function of (config, seed) regardless of
backend, checkpoint layout, or worker count.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .bliplasso import bootstrap_blip_ci
from .core import ContextSpec, TrialConfig, ValidationError
from .dgp import DgpSpec, oracle_mean_matrix, resolve_dgp
from .policy import smoother
from .regression import (
    CandidateSpec,
    FittedCandidate,
    d1_pseudo_outcome,
    predict_qbar,
    select_recursive_origin,
)
from .tmle import EstimateReport, TmleInput, tmle_estimate

_SOURCE_A = 0
_SOURCE_Y = 1


@dataclass(frozen=True)
class KernelPlan:
    """Flat integer/float encoding of a DgpSpec + ContextSpec for the kernels."""

    y_int: float
    y_treat: float
    y_src: np.ndarray
    y_lag: np.ndarray
    y_coef: np.ndarray
    w_kind: np.ndarray
    w_int: np.ndarray
    w_sd: np.ndarray
    w_off: np.ndarray
    w_src: np.ndarray
    w_lag: np.ndarray
    w_coef: np.ndarray
    w_ucol: np.ndarray
    w_zcol: np.ndarray
    ctx_src: np.ndarray
    ctx_lag: np.ndarray
    n_base: int
    n_ctx: int
    n_w: int
    n_u: int
    n_z: int
    burn_in: int
    burn_p: float
    burn_sd: float


def _source_code(spec: DgpSpec, name: str) -> int:
    if name == "A":
        return _SOURCE_A
    if name == "Y":
        return _SOURCE_Y
    return 2 + spec.w_names.index(name)


def build_plan(spec: DgpSpec, ctx_spec: ContextSpec) -> KernelPlan:
    i64 = lambda xs: np.asarray(xs, dtype=np.int64)
    f64 = lambda xs: np.asarray(xs, dtype=np.float64)
    y_eq = spec.y_equation
    w_src, w_lag, w_coef, w_off = [], [], [], [0]
    w_kind, w_int, w_sd, w_ucol, w_zcol = [], [], [], [], []
    ucol, zcol = 2, 0  # uniform columns 0,1 belong to A and Y
    for eq in spec.w_equations:
        for term in eq.terms:
            w_src.append(_source_code(spec, term.source))
            w_lag.append(term.lag)
            w_coef.append(term.coef)
        w_off.append(len(w_src))
        w_int.append(eq.intercept)
        if eq.kind == "binary":
            w_kind.append(0)
            w_sd.append(0.0)
            w_ucol.append(ucol)
            w_zcol.append(-1)
            ucol += 1
        else:
            w_kind.append(1)
            w_sd.append(eq.noise_sd)
            w_ucol.append(-1)
            w_zcol.append(zcol)
            zcol += 1
    pairs = ctx_spec.pairs()
    return KernelPlan(
        y_int=y_eq.intercept,
        y_treat=y_eq.treat_coef,
        y_src=i64([_source_code(spec, t.source) for t in y_eq.terms]),
        y_lag=i64([t.lag for t in y_eq.terms]),
        y_coef=f64([t.coef for t in y_eq.terms]),
        w_kind=np.asarray(w_kind, dtype=np.int8),
        w_int=f64(w_int),
        w_sd=f64(w_sd),
        w_off=i64(w_off),
        w_src=i64(w_src),
        w_lag=i64(w_lag),
        w_coef=f64(w_coef),
        w_ucol=i64(w_ucol),
        w_zcol=i64(w_zcol),
        ctx_src=i64([_source_code(spec, s) for s, _ in pairs]),
        ctx_lag=i64([lag for _, lag in pairs]),
        n_base=len(pairs),
        n_ctx=ctx_spec.dim,
        n_w=len(spec.w_equations),
        n_u=ucol,
        n_z=zcol,
        burn_in=spec.burn_in,
        burn_p=spec.burn_in_p,
        burn_sd=spec.burn_in_sd,
    )


@dataclass
class SimState:
    """Mutable per-trial arrays, row t-1 holding time t."""

    a: np.ndarray
    y: np.ndarray
    w: np.ndarray
    ctx: np.ndarray
    g1: np.ndarray
    blip: np.ndarray
    d: np.ndarray

    @classmethod
    def allocate(cls, max_n: int, plan: KernelPlan) -> "SimState":
        return cls(
            a=np.zeros(max_n),
            y=np.zeros(max_n),
            w=np.zeros((max_n, plan.n_w)),
            ctx=np.zeros((max_n, plan.n_ctx)),
            g1=np.zeros(max_n),
            blip=np.zeros(max_n),
            d=np.full(max_n, -1, dtype=np.int8),
        )


def _pad2(arr: np.ndarray) -> np.ndarray:
    # the kernels take C-contiguous 2-d views; give zero-width arrays a dummy column
    if arr.shape[1] == 0:
        return np.zeros((arr.shape[0], 1))
    return np.ascontiguousarray(arr)


def _run_fast_segment(plan, state, u, z, c_arr, e_arr, t0, t1, mode, wm_arrays, q_bounds):
    beta0, beta_a, beta_c, beta_ac = wm_arrays
    _kernels.segment_loop(
        plan.y_int, plan.y_treat, plan.y_src, plan.y_lag, plan.y_coef,
        plan.w_kind, plan.w_int, plan.w_sd, plan.w_off, plan.w_src, plan.w_lag,
        plan.w_coef, plan.w_ucol, plan.w_zcol,
        plan.ctx_src, plan.ctx_lag, plan.n_base,
        state.a, state.y, _pad2(state.w), _pad2(state.ctx),
        state.g1, state.blip, state.d,
        _pad2(u), _pad2(z),
        t0, t1, mode,
        c_arr, e_arr,
        beta0, beta_a, beta_c, beta_ac,
        q_bounds[0], q_bounds[1],
    )


def _run_callback_segment(plan, state, u, z, t0, t1, prob_cb):
    _kernels.segment_loop_callback(
        plan.y_int, plan.y_treat, plan.y_src, plan.y_lag, plan.y_coef,
        plan.w_kind, plan.w_int, plan.w_sd, plan.w_off, plan.w_src, plan.w_lag,
        plan.w_coef, plan.w_ucol, plan.w_zcol,
        plan.ctx_src, plan.ctx_lag, plan.n_base,
        state.a, state.y, _pad2(state.w), _pad2(state.ctx),
        state.g1, state.blip, state.d,
        _pad2(u), _pad2(z),
        t0, t1, prob_cb,
    )


def _zero_wm() -> tuple[float, float, np.ndarray, np.ndarray]:
    return 0.0, 0.0, np.zeros(0), np.zeros(0)


def _flatten_working_model(fitted: FittedCandidate, n_ctx: int):
    """(beta0, beta_a, beta_c, beta_ac) padded/projected to the context width."""
    model = fitted.qbar_model
    coef = model.coefficients
    layout = model.layout
    beta0 = float(coef[0])
    pos = 1
    beta_a = 0.0
    if layout.include_treatment:
        beta_a = float(coef[pos])
        pos += 1
    beta_c = np.zeros(n_ctx)
    beta_c[: layout.n_features] = coef[pos : pos + layout.n_features]
    pos += layout.n_features
    beta_ac = np.zeros(n_ctx)
    if layout.interactions:
        beta_ac[: layout.n_features] = coef[pos : pos + layout.n_features]
    return beta0, beta_a, beta_c, beta_ac


@dataclass(frozen=True)
class TrialTrajectory:
    """Raw per-step record of one simulated trial."""

    w_names: tuple[str, ...]
    burn_in: int
    a: np.ndarray
    y: np.ndarray
    w: np.ndarray
    ctx: np.ndarray
    g1: np.ndarray
    blip: np.ndarray
    d: np.ndarray

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class TrialResult:
    """Checkpointed estimates, truths and coverage for one seeded trial."""

    seed: int
    checkpoints: tuple[int, ...]
    reports: tuple[EstimateReport, ...]
    truths: tuple[float, ...]
    covered: tuple[bool, ...]
    selected: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "checkpoints": list(self.checkpoints),
            "reports": [r.to_json_dict() for r in self.reports],
            "truths": list(self.truths),
            "covered": list(self.covered),
            "selected": list(self.selected),
        }


def _validate_run(config: TrialConfig, spec: DgpSpec) -> None:
    if config.context.max_lag() > spec.burn_in:
        raise ValidationError(
            "context: a lag exceeds the burn-in, so the first estimation row"
            " would reach before time 1"
        )
    if spec.max_lag > spec.burn_in:
        raise ValidationError("dgp: an equation lag exceeds the burn-in")
    for term in spec.y_equation.terms:
        config.context.feature_index(term.source, term.lag)  # raises if absent
    n_rows = config.initial_n - spec.burn_in
    if n_rows < 2 * config.val_size:
        raise ValidationError(
            "initial_n: too small for the selector"
            f" (need at least burn_in + 2*val_size = {spec.burn_in + 2 * config.val_size})"
        )


def data_adaptive_truth(
    spec: DgpSpec, ctx_spec: ContextSpec, contexts: np.ndarray, rules: np.ndarray
) -> float:
    """Average true conditional mean over observed contexts under the rules in force."""
    return float(np.mean(oracle_mean_matrix(spec, ctx_spec, contexts, rules)))


def _cond_var_grid(n_rows: int) -> tuple[int, ...]:
    grid = list(range(100, n_rows, 100))
    grid.append(n_rows)
    return tuple(grid)


def fit_and_target(
    config: TrialConfig,
    burn_in: int,
    state: SimState,
    n: int,
    candidates: Sequence[CandidateSpec],
):
    """Select/refit on rows through n, backfill pending rules, run targeting.

    Rows whose d is still the -1 sentinel (assigned under the balanced
    reference design, not yet seen by any checkpoint) adopt this fit's rule;
    the assignment writes through into state.d.
    """
    ctx = state.ctx[burn_in:n]
    a = state.a[burn_in:n]
    y = state.y[burn_in:n]
    g1 = state.g1[burn_in:n]
    sel = select_recursive_origin(
        candidates, ctx, a, y, g1, config.val_size, config.q_bounds, config.g_floor
    )
    fitted = sel.fitted
    blips = np.asarray(fitted.blip(ctx, config.q_bounds), dtype=float)
    pending = state.d[burn_in:n] == -1
    if pending.any():
        state.d[burn_in:n][pending] = blips[pending] > 0.0
    d_vec = state.d[burn_in:n].astype(float)
    q_obs = fitted.predict_qbar(ctx, a, config.q_bounds)
    q_rule = fitted.predict_qbar(ctx, d_vec, config.q_bounds)
    inp = TmleInput(
        y=y, a=a, d=d_vec, g1=g1, q_obs=np.asarray(q_obs), q_rule=np.asarray(q_rule),
        g_floor=config.g_floor, q_bounds=config.q_bounds,
    )
    report = tmle_estimate(inp, config.alpha, _cond_var_grid(n - burn_in))
    return fitted, report


def _checkpoint_estimate(
    config: TrialConfig,
    spec: DgpSpec,
    state: SimState,
    n: int,
    candidates: Sequence[CandidateSpec],
):
    burn = spec.burn_in
    fitted, report = fit_and_target(config, burn, state, n, candidates)
    truth = data_adaptive_truth(
        spec, config.context, state.ctx[burn:n], state.d[burn:n].astype(float)
    )
    return fitted, report, truth


def _policy_for_segment(
    config: TrialConfig,
    spec: DgpSpec,
    state: SimState,
    n: int,
    fitted: FittedCandidate,
    seed: int,
):
    """What the next segment runs: fast-path working model or a callback."""
    include_blip = config.context.include_blip_estimate
    if config.policy_mode == "balanced":
        return 0, _zero_wm(), None
    if (
        config.policy_mode == "smoother"
        and fitted.blip_model is None
        and not include_blip
    ):
        return 1, _flatten_working_model(fitted, config.context.dim), None

    q_bounds = config.q_bounds
    if config.policy_mode == "hal_ci":
        blip_model, ci = _hal_ci_sources(config, spec, state, n, fitted, seed)
        blip_fn = lambda row: blip_model(row)
        hw_fn = lambda row: ci.half_width(row)
    else:
        blip_fn = lambda row: float(np.asarray(fitted.blip(np.asarray(row), q_bounds)).reshape(-1)[0])
        hw_fn = None

    n_base = len(config.context.pairs())

    def prob_cb(crow, t):
        # the appended coordinate is the policy blip itself, evaluated with
        # that coordinate zeroed; it is written back so estimation sees it
        if include_blip:
            crow[n_base] = 0.0
        b = blip_fn(crow)
        window = config.e_at(t)
        if hw_fn is not None:
            window = max(window, hw_fn(crow))
        if include_blip:
            crow[n_base] = b
        p = smoother(b, config.c_at(t), window)
        return p, b, 1 if b > 0.0 else 0

    return 2, None, prob_cb


def _hal_ci_sources(config, spec, state, n, fitted, seed):
    """Budgeted indicator blip plus its bootstrap band for the hal_ci policy."""
    burn = spec.burn_in
    ctx = state.ctx[burn:n]
    a = state.a[burn:n]
    y = state.y[burn:n]
    g1 = state.g1[burn:n]
    if fitted.blip_model is not None:
        blip_model = fitted.blip_model
        base = fitted
    else:
        from .regression import fit_candidate

        base = fit_candidate(
            CandidateSpec("lasso_blip", config.lasso_m),
            ctx, a, y, g1, config.q_bounds, config.g_floor,
        )
        blip_model = base.blip_model
    q1 = predict_qbar(base.qbar_model, ctx, 1.0, config.q_bounds)
    q0 = predict_qbar(base.qbar_model, ctx, 0.0, config.q_bounds)
    pseudo = d1_pseudo_outcome(y, a, q1, q0, g1, config.g_floor)
    rng = np.random.default_rng((seed, n))
    ci = bootstrap_blip_ci(
        blip_model, ctx, pseudo, config.n_boot, 1.0 - config.alpha, rng
    )
    return blip_model, ci


def run_adaptive_trial(
    config: TrialConfig,
    seed: int,
    dgp_spec: DgpSpec | None = None,
    keep_trajectory: bool = False,
):
    """Simulate one full trial and estimate at every checkpoint.

    Returns a TrialResult, or (TrialResult, TrialTrajectory) when
    keep_trajectory is set. Bit-identical across repeat calls with the same
    arguments and across kernel backends.
    """
    spec = resolve_dgp(config.dgp_id) if dgp_spec is None else dgp_spec
    _validate_run(config, spec)
    plan = build_plan(spec, config.context)
    max_n = config.max_n
    if max_n < plan.burn_in:
        raise ValidationError("max_n: shorter than the burn-in")
    state = SimState.allocate(max_n, plan)
    rng = np.random.default_rng(seed)
    u = rng.random((max_n, plan.n_u))
    z = rng.standard_normal((max_n, plan.n_z))
    c_arr = np.asarray([config.c_at(t) for t in range(1, max_n + 1)])
    e_arr = np.asarray([config.e_at(t) for t in range(1, max_n + 1)])
    _kernels.fill_burn_in(
        plan.w_kind, plan.w_ucol, plan.w_zcol, plan.burn_in, plan.burn_p,
        plan.burn_sd, state.a, state.y, state.w, state.g1, state.blip, state.d,
        u, z,
    )
    _run_fast_segment(
        plan, state, u, z, c_arr, e_arr, plan.burn_in + 1, config.initial_n,
        0, _zero_wm(), config.q_bounds,
    )
    candidates = tuple(CandidateSpec(name, config.lasso_m) for name in config.candidates)
    reports, truths, covered, selected = [], [], [], []
    for n in config.checkpoints:
        fitted, report, truth = _checkpoint_estimate(config, spec, state, n, candidates)
        reports.append(report)
        truths.append(truth)
        covered.append(bool(report.ci[0] <= truth <= report.ci[1]))
        selected.append(fitted.name)
        if n < max_n:
            mode, wm, prob_cb = _policy_for_segment(config, spec, state, n, fitted, seed)
            t1 = n + config.checkpoint_step
            if mode == 2:
                _run_callback_segment(plan, state, u, z, n + 1, t1, prob_cb)
            else:
                _run_fast_segment(
                    plan, state, u, z, c_arr, e_arr, n + 1, t1, mode, wm,
                    config.q_bounds,
                )
    result = TrialResult(
        seed=seed,
        checkpoints=config.checkpoints,
        reports=tuple(reports),
        truths=tuple(truths),
        covered=tuple(covered),
        selected=tuple(selected),
    )
    if keep_trajectory:
        trajectory = TrialTrajectory(
            w_names=spec.w_names,
            burn_in=spec.burn_in,
            a=state.a, y=state.y, w=state.w, ctx=state.ctx,
            g1=state.g1, blip=state.blip, d=state.d,
        )
        return result, trajectory
    return result


def rebuild_contexts(
    spec: DgpSpec, ctx_spec: ContextSpec, a, y, w, blip=None
) -> np.ndarray:
    """Context matrix recomputed from stored trajectory columns.

    Rows earlier than a feature's lag keep 0; only estimation rows (t past
    the burn-in, which every lag is validated against) are ever read. The
    appended blip coordinate, when configured, comes from the stored policy
    blip column, which is exactly what the assignment-time callback wrote.
    """
    cols = {"A": np.asarray(a, dtype=float), "Y": np.asarray(y, dtype=float)}
    w = np.asarray(w, dtype=float)
    for j, name in enumerate(spec.w_names):
        cols[name] = w[:, j]
    n = cols["A"].shape[0]
    ctx = np.zeros((n, ctx_spec.dim))
    for k, (src, lag) in enumerate(ctx_spec.pairs()):
        if lag < n:
            ctx[lag:, k] = cols[src][: n - lag]
    if ctx_spec.include_blip_estimate:
        if blip is None:
            raise ValidationError("trajectory: blip column required by the context")
        ctx[:, len(ctx_spec.pairs())] = np.asarray(blip, dtype=float)
    return ctx


def estimate_from_trajectory(
    config: TrialConfig, a, y, w, g1, blip, d
) -> EstimateReport:
    """Refit and target on a stored trajectory, as the final checkpoint would.

    Takes the per-step columns a simulate run emits (assignment-time g and
    rule decisions included) and reruns candidate selection plus the
    targeting step over every estimation row, returning the report with its
    conditional-variance path.
    """
    spec = resolve_dgp(config.dgp_id)
    if config.context.max_lag() > spec.burn_in:
        raise ValidationError("context: a lag exceeds the burn-in")
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n - spec.burn_in < 2 * config.val_size:
        raise ValidationError(
            "trajectory: too few rows for the selector"
            f" (need more than {spec.burn_in + 2 * config.val_size})"
        )
    state = SimState(
        a=a,
        y=np.asarray(y, dtype=float),
        w=np.asarray(w, dtype=float).reshape(n, -1),
        ctx=rebuild_contexts(spec, config.context, a, y, w, blip),
        g1=np.asarray(g1, dtype=float),
        blip=np.asarray(blip, dtype=float),
        d=np.asarray(d, dtype=np.int8),
    )
    candidates = tuple(CandidateSpec(name, config.lasso_m) for name in config.candidates)
    _, report = fit_and_target(config, spec.burn_in, state, n, candidates)
    return report


@dataclass(frozen=True)
class CoverageTable:
    """Across-draw coverage and estimator variance per checkpoint."""

    checkpoints: tuple[int, ...]
    coverage: tuple[float, ...]
    variance: tuple[float, ...]
    n_draws: int


def _trial_worker(args) -> TrialResult:
    config, spec, seed = args
    return run_adaptive_trial(config, seed, spec)


def mc_coverage(
    config: TrialConfig,
    n_draws: int,
    base_seed: int = 0,
    jobs: int = 1,
    dgp_spec: DgpSpec | None = None,
    collect_trials: bool = False,
):
    """Coverage and variance over independent draws seeded base_seed + i.

    Aggregation is ordered by draw index, so the result never depends on
    jobs. Returns a CoverageTable, plus the TrialResult list when
    collect_trials is set.
    """
    if n_draws < 1:
        raise ValidationError("draws: must be >= 1")
    spec = resolve_dgp(config.dgp_id) if dgp_spec is None else dgp_spec
    tasks = [(config, spec, base_seed + i) for i in range(n_draws)]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_worker, tasks, chunksize=8))
    else:
        results = [_trial_worker(t) for t in tasks]
    checkpoints = config.checkpoints
    psi = np.array([[r.psi_hat for r in res.reports] for res in results])
    cov = np.array([res.covered for res in results], dtype=float)
    coverage = tuple(float(100.0 * c) for c in cov.mean(axis=0))
    if n_draws > 1:
        variance = tuple(float(v) for v in psi.var(axis=0, ddof=1))
    else:
        variance = tuple(0.0 for _ in checkpoints)
    table = CoverageTable(checkpoints, coverage, variance, n_draws)
    if collect_trials:
        return table, results
    return table
