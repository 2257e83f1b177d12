"""Projected gradient ascent over phases and powers.

One run draws several random phase initializations, keeps the best after
water-filling power allocation, then alternates analytic gradients,
max-normalization, and Armijo backtracking updates with power projection
until the objective stops improving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .objective import (
    GradientPair,
    ObjectiveReport,
    evaluate_objective,
    gradient,
    gradient_components,
)
from .propagation import PropagationSet
from .scenario import ScenarioConfig
from .wavefield import SimState, input_map, steering_vector

# feasibility slack used when tracking constraint-satisfying iterates
_FEASIBLE_RTOL = 1e-12


def water_filling(gains: np.ndarray, p_t: float, max_bisections: int = 200) -> np.ndarray:
    """Water-filling power allocation over parallel effective channels.

    ``p_k = max(0, level - 1/gains_k)`` with the water level chosen by
    bisection so the powers sum to ``p_t``.  All-zero gains fall back to a
    uniform split.
    """
    gains = np.asarray(gains, dtype=float)
    if np.any(gains < 0):
        raise ValueError("channel gains must be non-negative")
    if p_t <= 0:
        raise ValueError("total power must be positive")
    if not np.any(gains > 0):
        return np.full(gains.shape, p_t / gains.size)

    with np.errstate(divide="ignore"):
        inv = np.where(gains > 0, 1.0 / gains, np.inf)
    lo = float(np.min(inv))
    hi = float(np.min(inv) + p_t + 0.0)
    # ensure the bracket covers the target sum
    while np.sum(np.maximum(0.0, hi - inv)) < p_t:
        hi += p_t + (hi - lo)
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        if np.sum(np.maximum(0.0, mid - inv)) < p_t:
            lo = mid
        else:
            hi = mid
    p = np.maximum(0.0, 0.5 * (lo + hi) - inv)
    total = float(np.sum(p))
    if total > 0:
        p *= p_t / total
    return p


def project_power(p: np.ndarray, p_t: float, floor_fraction: float = 1e-6) -> np.ndarray:
    """Restore feasibility: strictly positive powers summing to ``p_t``.

    Entries are shifted up uniformly whenever the minimum falls below
    ``floor_fraction * p_t / K`` and then rescaled to the budget; the two
    steps are iterated to a fixed point so the projection is idempotent.
    Ordering of the entries is preserved.
    """
    if p_t <= 0:
        raise ValueError("total power must be positive")
    q = np.array(p, dtype=float)
    k = q.size
    eps = floor_fraction * p_t / k
    for _ in range(64):
        total = float(np.sum(q))
        if not np.isfinite(total) or total <= 0:
            q = np.full(k, p_t / k)
            return q
        mn = float(np.min(q))
        if mn < eps:
            q += eps - mn
            total = float(np.sum(q))
        q *= p_t / total
        if np.min(q) >= eps * (1.0 - 1e-12):
            break
    return q


def normalize_gradients(
    grad: GradientPair, p_t: float, num_users: int
) -> tuple[GradientPair, bool, bool]:
    """Max-normalize the gradient blocks.

    The largest-magnitude phase component maps to pi and the largest power
    component to ``p_t / K``.  A block that is identically zero is left
    unscaled; the returned flags report which blocks were zero.
    """
    d_omega = np.asarray(grad.d_omega, dtype=float)
    d_p = np.asarray(grad.d_p, dtype=float)
    if not (np.all(np.isfinite(d_omega)) and np.all(np.isfinite(d_p))):
        raise ValueError("gradient contains non-finite entries")
    eta = float(np.max(np.abs(d_omega))) if d_omega.size else 0.0
    rho = float(np.max(np.abs(d_p))) if d_p.size else 0.0
    phase_zero = eta == 0.0
    power_zero = rho == 0.0
    scaled_omega = d_omega if phase_zero else d_omega * (np.pi / eta)
    scaled_p = d_p if power_zero else d_p * (p_t / (rho * num_users))
    return GradientPair(d_omega=scaled_omega, d_p=scaled_p), phase_zero, power_zero


def init_multistart(
    prop: PropagationSet,
    chan,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
) -> tuple[SimState, ObjectiveReport]:
    """Draw ``n_init`` random phase tensors and keep the best candidate.

    Each candidate gets a water-filling power allocation over its own-link
    effective gains before the objective comparison; candidate ``i`` is
    identical for every ``n_init >= i``, so enlarging the pool can only
    improve the selected objective.
    """
    h_rows = chan.h_rows if isinstance(chan, ChannelSet) else np.asarray(chan, dtype=complex)
    a = steering_vector(cfg.theta_c, cfg.phi_c, cfg.m_x, cfg.m_z, cfg.steering_pitch_ratio)
    best_state = None
    best_report = None
    for _ in range(cfg.n_init):
        omega = rng.uniform(0.0, 2.0 * np.pi, size=(cfg.num_layers, cfg.num_atoms))
        v = input_map(omega, prop)
        own_links = np.abs(np.einsum("km,mk->k", h_rows, v)) ** 2
        p = water_filling(own_links / cfg.noise_power, cfg.p_t)
        p = project_power(p, cfg.p_t)
        state = SimState(omega=omega, p=p)
        report = evaluate_objective(state, prop, chan, cfg, steering=a)
        if best_report is None or report.value > best_report.value:
            best_state, best_report = state, report
    return best_state, best_report


def armijo_update(
    state: SimState,
    grad_norm: GradientPair,
    objective_fn,
    p_t: float,
    mu0: float = 1.0,
    contraction: float = 0.5,
    c1: float = 1e-4,
    max_backtracks: int = 30,
    current: ObjectiveReport | None = None,
    mu_start: float | None = None,
    slope: float | None = None,
) -> tuple[SimState, ObjectiveReport, float, int]:
    """One backtracking ascent step along a normalized search direction.

    Candidates are ``omega + mu * d_omega`` and the projection of
    ``p + mu * d_p``; the step is accepted when the objective improves by at
    least ``c1 * mu * slope``, where ``slope`` is the directional derivative
    of the objective along the direction (``||grad_norm||^2`` when omitted).
    The search contracts from ``min(mu_start, mu0)`` (``mu0`` when not
    given), which lets callers warm start near the previously accepted step.
    When every backtrack fails, or the direction is not an ascent direction,
    the state is returned unchanged with ``mu = 0``.
    """
    if current is None:
        current = objective_fn(state)
    norm_sq = float(np.sum(grad_norm.d_omega**2) + np.sum(grad_norm.d_p**2))
    if norm_sq == 0.0:
        return state, current, 0.0, 0
    if slope is None:
        slope = norm_sq
    if slope <= 0.0:
        return state, current, 0.0, 0
    mu = mu0 if mu_start is None else min(mu_start, mu0)
    for backtracks in range(max_backtracks + 1):
        candidate = SimState(
            omega=state.omega + mu * grad_norm.d_omega,
            p=project_power(state.p + mu * grad_norm.d_p, p_t),
        )
        report = objective_fn(candidate)
        if report.value >= current.value + c1 * mu * slope:
            return candidate, report, mu, backtracks
        mu *= contraction
    return state, current, 0.0, max_backtracks + 1


@dataclass(frozen=True)
class IterationRecord:
    """One accepted iteration of the ascent."""

    iteration: int
    value: float        # combined objective F
    sum_rate: float
    gain_deficit: float
    target_gain: float
    psi: float
    mu: float
    backtracks: int
    p_sum: float
    p_min: float


@dataclass
class OptimizerTrace:
    """Full history plus the state selected at termination.

    ``selected_iteration`` points at the record whose state was returned;
    it differs from the last iteration only when the final iterate hovered
    just below the gain threshold and an earlier feasible iterate (the most
    recent one, which by monotone ascent is also the best) was preferred.
    """

    records: list[IterationRecord] = field(default_factory=list)
    final_state: SimState | None = None
    final_report: ObjectiveReport | None = None
    converged: bool = False
    n_iters: int = 0
    selected_iteration: int = 0
    alpha_frozen: float | None = None

    def values(self) -> np.ndarray:
        return np.array([rec.value for rec in self.records])


def _is_feasible(report: ObjectiveReport) -> bool:
    return report.target_gain >= report.psi * (1.0 - _FEASIBLE_RTOL)


def _ascend(
    prop: PropagationSet,
    chan,
    cfg: ScenarioConfig,
    state: SimState,
    report: ObjectiveReport,
    steering: np.ndarray,
    alpha_frozen: float | None,
    max_iters: int,
) -> OptimizerTrace:
    """The inner ascent loop, shared by the pre-solve and the main run."""

    def objective_fn(s: SimState) -> ObjectiveReport:
        return evaluate_objective(s, prop, chan, cfg, alpha=alpha_frozen, steering=steering)

    trace = OptimizerTrace(alpha_frozen=alpha_frozen)

    def record(it: int, rep: ObjectiveReport, st: SimState, mu: float, bt: int) -> None:
        trace.records.append(
            IterationRecord(
                iteration=it,
                value=rep.value,
                sum_rate=rep.sum_rate,
                gain_deficit=rep.gain_deficit,
                target_gain=rep.target_gain,
                psi=rep.psi,
                mu=mu,
                backtracks=bt,
                p_sum=float(np.sum(st.p)),
                p_min=float(np.min(st.p)),
            )
        )

    record(0, report, state, 0.0, 0)
    incumbent = (0, state, report) if _is_feasible(report) else None

    def attempt(direction, slope_grad, mu_start, current_state, current_report):
        direction_norm, _, _ = normalize_gradients(direction, cfg.p_t, cfg.num_users)
        slope = float(
            np.sum(slope_grad.d_omega * direction_norm.d_omega)
            + np.sum(slope_grad.d_p * direction_norm.d_p)
        )
        return armijo_update(
            current_state,
            direction_norm,
            objective_fn,
            cfg.p_t,
            mu0=cfg.armijo_mu0,
            contraction=cfg.armijo_contraction,
            c1=cfg.armijo_c1,
            max_backtracks=cfg.max_backtracks,
            current=current_report,
            mu_start=mu_start,
            slope=slope,
        )

    converged = False
    iterations = 0
    mu_start = None
    quiet = 0  # consecutive below-tolerance iterations
    for it in range(1, max_iters + 1):
        if cfg.beta > 0.0:
            rate_grad, gain_grad, active = gradient_components(
                state, prop, chan, cfg, alpha=alpha_frozen, steering=steering
            )
            if active and gain_grad is not None:
                grad = GradientPair(
                    d_omega=rate_grad.d_omega + cfg.beta * gain_grad.d_omega,
                    d_p=rate_grad.d_p + cfg.beta * gain_grad.d_p,
                )
            else:
                grad = rate_grad
        else:
            grad = gradient(state, prop, chan, cfg, alpha=alpha_frozen, steering=steering)
            rate_grad, gain_grad = grad, None

        new_state, new_report, mu, backtracks = attempt(grad, grad, mu_start, state, report)
        if mu == 0.0 and gain_grad is not None:
            # the combined direction stalls against the gain-threshold kink;
            # walk the constraint ridge instead: rate gradient projected onto
            # the gain level set (still accepted only if F improves)
            gain_sq = float(np.sum(gain_grad.d_omega**2) + np.sum(gain_grad.d_p**2))
            if gain_sq > 0.0:
                coef = (
                    float(
                        np.sum(rate_grad.d_omega * gain_grad.d_omega)
                        + np.sum(rate_grad.d_p * gain_grad.d_p)
                    )
                    / gain_sq
                )
                ridge = GradientPair(
                    d_omega=rate_grad.d_omega - coef * gain_grad.d_omega,
                    d_p=rate_grad.d_p - coef * gain_grad.d_p,
                )
                ridge_state, ridge_report, ridge_mu, ridge_bt = attempt(
                    ridge, rate_grad, None, state, report
                )
                if ridge_mu > 0.0:
                    new_state, new_report = ridge_state, ridge_report
                    mu, backtracks = ridge_mu, backtracks + ridge_bt

        iterations = it
        record(it, new_report, new_state, mu, backtracks)
        if _is_feasible(new_report):
            incumbent = (it, new_state, new_report)
        delta = abs(new_report.value - report.value)
        state, report = new_state, new_report
        if mu == 0.0:
            # both searches exhausted without moving; the loop is
            # deterministic, so this is a fixed point
            converged = True
            break
        quiet = quiet + 1 if delta <= cfg.convergence_tol * max(1.0, abs(report.value)) else 0
        if quiet >= cfg.convergence_patience:
            converged = True
            break
        # warm start the next search just above the accepted step
        mu_start = min(cfg.armijo_mu0, mu * 4.0)

    trace.converged = converged
    trace.n_iters = iterations
    trace.final_state = state
    trace.final_report = report
    trace.selected_iteration = iterations
    if not _is_feasible(report) and incumbent is not None:
        # the ascent hovers around the gain threshold within line-search
        # resolution; keep the most recent feasible iterate instead of a
        # marginally infeasible last one
        trace.selected_iteration, trace.final_state, trace.final_report = incumbent
    return trace


def optimize(
    prop: PropagationSet,
    chan,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
) -> OptimizerTrace:
    """Run the full ascent for one scenario and channel realization.

    Initialization is a penalty continuation: the multi-start winner is
    improved by a rate-only ascent (up to ``presolve_iters``) and then a
    penalized shaping ascent (up to ``shaping_iters``) that crosses to the
    gain constraint.  Starting the penalty from random phases instead tends
    to collapse onto a single dominant user.  The returned trace covers the
    final penalized loop.
    """
    a = steering_vector(cfg.theta_c, cfg.phi_c, cfg.m_x, cfg.m_z, cfg.steering_pitch_ratio)
    state, report = init_multistart(prop, chan, cfg, rng)

    if cfg.beta > 0.0 and cfg.presolve_iters > 0:
        rate_cfg = cfg.replace(beta=0.0)
        rate_report = evaluate_objective(state, prop, chan, rate_cfg, steering=a)
        pre = _ascend(
            prop, chan, rate_cfg, state, rate_report, a,
            alpha_frozen=None, max_iters=cfg.presolve_iters,
        )
        state = pre.final_state
        report = evaluate_objective(state, prop, chan, cfg, steering=a)

    if cfg.beta > 0.0 and cfg.shaping_iters > 0:
        shaping = _ascend(
            prop, chan, cfg, state, report, a,
            alpha_frozen=None, max_iters=cfg.shaping_iters,
        )
        state = shaping.final_state
        report = evaluate_objective(state, prop, chan, cfg, steering=a)

    alpha_frozen = None
    if cfg.psi_mode == "frozen":
        alpha_frozen = report.alpha
        report = evaluate_objective(state, prop, chan, cfg, alpha=alpha_frozen, steering=a)

    return _ascend(prop, chan, cfg, state, report, a, alpha_frozen, cfg.max_iters)
