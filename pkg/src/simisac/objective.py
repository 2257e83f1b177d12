"""Sum rate, sensing penalty, combined objective, and analytic gradients.

The combined objective is the user sum rate plus a penalty on the shortfall
of the beampattern gain toward the sensed direction.  The gain enters on a
normalized scale: with ``alpha = ||R_t||_F / sqrt(M)`` the omnidirectional
reference level, the penalty is ``beta * min(gain/alpha - threshold, 0)``,
which keeps the two objective terms numerically comparable.

``alpha`` may be recomputed from the current covariance at every evaluation
(the default) or frozen after initialization; gradients are exact for either
choice, including the derivative of ``alpha`` itself in recompute mode.  A
finite-difference oracle over the same objective is provided for checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .propagation import PropagationSet
from .scenario import ScenarioConfig
from .wavefield import SimState, input_map, steering_vector

LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class ObjectiveReport:
    """Decomposed objective value at one state.

    ``gain_deficit`` is the (non-positive) normalized shortfall of the target
    gain below the threshold; the combined objective is
    ``value = sum_rate + beta * gain_deficit``.  ``target_gain`` and ``psi``
    are in watts; ``alpha`` is the current omnidirectional reference level.
    """

    gamma: np.ndarray      # (K,) per-user SINR
    sum_rate: float        # bits/s/Hz
    gain_deficit: float    # <= 0, normalized scale
    value: float           # combined objective
    target_gain: float     # beampattern gain at the sensed direction, watts
    psi: float             # gain threshold in effect, watts
    alpha: float           # ||R_t||_F / sqrt(M) at this state


@dataclass(frozen=True)
class GradientPair:
    """Partial derivatives of the combined objective."""

    d_omega: np.ndarray  # (Q, M)
    d_p: np.ndarray      # (K,)


def _h_rows(chan) -> np.ndarray:
    if isinstance(chan, ChannelSet):
        return chan.h_rows
    return np.asarray(chan, dtype=complex)


def _steering(cfg: ScenarioConfig) -> np.ndarray:
    return steering_vector(
        cfg.theta_c, cfg.phi_c, cfg.m_x, cfg.m_z, cfg.steering_pitch_ratio
    )


def sinr(
    h_rows: np.ndarray,
    g: np.ndarray,
    w_in: np.ndarray,
    p: np.ndarray,
    noise_power: float,
) -> np.ndarray:
    """Per-user SINR for given channels, transfer function, and powers."""
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    v = g @ w_in
    tau = np.asarray(h_rows, dtype=complex) @ v
    return _sinr_from_links(np.abs(tau) ** 2, np.asarray(p, dtype=float), noise_power)[0]


def _sinr_from_links(link_power: np.ndarray, p: np.ndarray, noise_power: float):
    """SINR and interference-plus-noise from squared link magnitudes."""
    signal = np.diag(link_power) * p
    denom = link_power @ p - signal + noise_power
    return signal / denom, denom


class _StateFields:
    """Shared per-state quantities for objective and gradient evaluation.

    ``b[i]`` maps antennas to layer ``i`` inputs (before the layer's phase),
    ``v`` is the full antenna-to-output map, ``tau``/``tau_a`` the complex
    links to users / to the sensed direction.
    """

    def __init__(self, state, prop, h_rows, a, p):
        omega = state.omega
        q_layers = omega.shape[0]
        self.factors = np.exp(1j * omega)
        b = [prop.w_in]
        for i in range(1, q_layers):
            b.append(prop.w_inter[i - 1] @ (self.factors[i - 1][:, None] * b[i - 1]))
        self.b = b
        self.v = self.factors[q_layers - 1][:, None] * b[q_layers - 1]
        self.tau = h_rows @ self.v
        self.tau_a = np.conj(a) @ self.v
        self.link_power = np.abs(self.tau) ** 2
        self.target_gain = float(np.abs(self.tau_a) ** 2 @ p)
        self.c_gram = self.v.conj().T @ self.v
        self.frob_sq = float(np.real(p @ (np.abs(self.c_gram) ** 2 @ p)))
        self.alpha_current = math.sqrt(max(self.frob_sq, 0.0)) / math.sqrt(
            prop.num_atoms
        )

    def backward_maps(self, h_rows, a, prop):
        """Per-layer downstream maps used by the phase gradient."""
        q_layers = len(self.b)
        u = [None] * q_layers
        ua = [None] * q_layers
        sm = [None] * q_layers
        u[q_layers - 1] = h_rows
        ua[q_layers - 1] = np.conj(a)
        sm[q_layers - 1] = self.v
        for i in range(q_layers - 2, -1, -1):
            w_next = prop.w_inter[i]
            f_next = self.factors[i + 1]
            u[i] = (u[i + 1] * f_next[None, :]) @ w_next
            ua[i] = (ua[i + 1] * f_next) @ w_next
            sm[i] = w_next.conj().T @ (np.conj(f_next)[:, None] * sm[i + 1])
        return u, ua, sm


def _penalty_terms(fields: _StateFields, cfg: ScenarioConfig, alpha: float | None):
    """Threshold in watts, normalized deficit, and active flag."""
    alpha_used = fields.alpha_current if alpha is None else float(alpha)
    psi = alpha_used * cfg.gamma_linear
    if alpha_used <= 0.0:
        # degenerate zero covariance: treat the normalized gain as zero
        return 0.0, -cfg.gamma_linear, True, 0.0
    deficit = min((fields.target_gain - psi) / alpha_used, 0.0)
    active = fields.target_gain - psi <= 0.0
    return psi, deficit, active, alpha_used


def evaluate_objective(
    state: SimState,
    prop: PropagationSet,
    chan,
    cfg: ScenarioConfig,
    alpha: float | None = None,
    steering: np.ndarray | None = None,
) -> ObjectiveReport:
    """Evaluate SINRs, sum rate, penalty, and the combined objective.

    ``alpha=None`` recomputes the omnidirectional reference from the current
    covariance (self-normalized objective); a float freezes it.
    """
    h_rows = _h_rows(chan)
    a = _steering(cfg) if steering is None else steering
    fields = _StateFields(state, prop, h_rows, a, state.p)
    gamma, _ = _sinr_from_links(fields.link_power, state.p, cfg.noise_power)
    sum_rate = float(np.sum(np.log1p(gamma)) * LOG2E)
    psi, deficit, _, _ = _penalty_terms(fields, cfg, alpha)
    return ObjectiveReport(
        gamma=gamma,
        sum_rate=sum_rate,
        gain_deficit=deficit,
        value=sum_rate + cfg.beta * deficit,
        target_gain=fields.target_gain,
        psi=psi,
        alpha=fields.alpha_current,
    )


def _gradient_parts(
    state: SimState,
    prop: PropagationSet,
    chan,
    cfg: ScenarioConfig,
    alpha: float | None,
    steering: np.ndarray | None,
    want_gain: bool,
):
    """Rate gradient, normalized-gain gradient, and penalty activity.

    The gain part is the derivative of ``target_gain / alpha`` (with the
    the current or frozen ``alpha`` per the mode) and is computed only when
    requested or when the penalty branch needs it.
    """
    h_rows = _h_rows(chan)
    a = _steering(cfg) if steering is None else steering
    p = state.p
    q_layers, m = state.omega.shape
    fields = _StateFields(state, prop, h_rows, a, p)
    gamma, denom = _sinr_from_links(fields.link_power, p, cfg.noise_power)
    psi, _, active, alpha_used = _penalty_terms(fields, cfg, alpha)
    need_gain = (want_gain or (cfg.beta > 0.0 and active)) and alpha_used > 0.0

    u, ua, sm = fields.backward_maps(h_rows, a, prop)

    # rate coefficients: base_k on the own-link derivative, -gamma_k * base_k
    # on each interfering-link derivative
    base = LOG2E / ((1.0 + gamma) * denom)
    coeff = -(gamma * base)[:, None] * np.ones((1, p.shape[0]))
    np.fill_diagonal(coeff, base)

    z = coeff * p[None, :] * fields.tau
    p_tau_a = p * fields.tau_a

    d_omega = np.zeros((q_layers, m))
    d_target = np.zeros((q_layers, m)) if need_gain else None
    d_frob_sq = np.zeros((q_layers, m)) if (need_gain and alpha is None) else None
    weighted_gram = fields.c_gram * p[None, :] if d_frob_sq is not None else None

    for i in range(q_layers):
        f_conj = np.conj(fields.factors[i])
        b_conj = np.conj(fields.b[i])
        cmat = b_conj @ z.T                       # (M, K)
        s = np.sum(np.conj(u[i]).T * cmat, axis=1)
        d_omega[i] = 2.0 * np.imag(f_conj * s)
        if need_gain:
            w_vec = b_conj @ p_tau_a
            d_target[i] = 2.0 * np.imag(f_conj * np.conj(ua[i]) * w_vec)
            if d_frob_sq is not None:
                e_mat = np.conj(sm[i]) @ weighted_gram.T
                y = np.sum((fields.b[i] * p[None, :]) * e_mat, axis=1)
                d_frob_sq[i] = -4.0 * np.imag(fields.factors[i] * y)

    # power derivatives
    own = np.diag(fields.link_power) * base
    cross = fields.link_power.T @ (gamma * base) - np.diag(fields.link_power) * gamma * base
    d_p = own - cross

    rate = GradientPair(d_omega=d_omega, d_p=d_p)
    gain = None
    if need_gain:
        d_target_p = np.abs(fields.tau_a) ** 2
        if alpha is None:
            # self-normalized: d(gain/alpha) via the quotient rule
            a_cur = alpha_used
            scale = 1.0 / (2.0 * prop.num_atoms * a_cur)
            d_alpha_omega = d_frob_sq * scale
            d_alpha_p = (2.0 * (np.abs(fields.c_gram) ** 2 @ p)) * scale
            gain = GradientPair(
                d_omega=d_target / a_cur - fields.target_gain * d_alpha_omega / a_cur**2,
                d_p=d_target_p / a_cur - fields.target_gain * d_alpha_p / a_cur**2,
            )
        else:
            gain = GradientPair(
                d_omega=d_target / alpha_used, d_p=d_target_p / alpha_used
            )
    return rate, gain, active


def gradient_components(
    state: SimState,
    prop: PropagationSet,
    chan,
    cfg: ScenarioConfig,
    alpha: float | None = None,
    steering: np.ndarray | None = None,
) -> tuple[GradientPair, GradientPair | None, bool]:
    """Rate and normalized-gain gradients plus the penalty-activity flag.

    The gain component is ``None`` only at a degenerate zero covariance.
    """
    return _gradient_parts(state, prop, chan, cfg, alpha, steering, want_gain=True)


def gradient(
    state: SimState,
    prop: PropagationSet,
    chan,
    cfg: ScenarioConfig,
    alpha: float | None = None,
    steering: np.ndarray | None = None,
) -> GradientPair:
    """Analytic gradient of the combined objective at ``state``.

    Exact for the evaluated objective: in recompute mode the derivative of
    the reference level ``alpha`` is included on the active penalty branch.
    """
    rate, gain, active = _gradient_parts(
        state, prop, chan, cfg, alpha, steering, want_gain=False
    )
    if cfg.beta > 0.0 and active and gain is not None:
        return GradientPair(
            d_omega=rate.d_omega + cfg.beta * gain.d_omega,
            d_p=rate.d_p + cfg.beta * gain.d_p,
        )
    return rate


def grad_phase(state, prop, chan, cfg, alpha=None, steering=None) -> np.ndarray:
    """Phase block of :func:`gradient`."""
    return gradient(state, prop, chan, cfg, alpha=alpha, steering=steering).d_omega


def grad_power(state, prop, chan, cfg, alpha=None, steering=None) -> np.ndarray:
    """Power block of :func:`gradient`."""
    return gradient(state, prop, chan, cfg, alpha=alpha, steering=steering).d_p


def fd_gradient(
    state: SimState,
    prop: PropagationSet,
    chan,
    cfg: ScenarioConfig,
    alpha: float | None = None,
    step_phase: float = 1e-6,
    step_power: float | None = None,
    objective_fn=None,
) -> GradientPair:
    """Central finite differences of the objective over each variable.

    ``step_power`` defaults to ``1e-9 * p_t``.  ``objective_fn`` may replace
    the real objective (signature ``state -> float``) for sanity checks.
    """
    if step_phase <= 0:
        raise ValueError("step_phase must be positive")
    if step_power is None:
        step_power = 1e-9 * cfg.p_t
    if step_power <= 0:
        raise ValueError("step_power must be positive")
    if objective_fn is None:
        steering = _steering(cfg)

        def objective_fn(s):
            return evaluate_objective(
                s, prop, chan, cfg, alpha=alpha, steering=steering
            ).value

    q_layers, m = state.omega.shape
    d_omega = np.zeros((q_layers, m))
    for q in range(q_layers):
        for j in range(m):
            for sign in (1.0, -1.0):
                omega = state.omega.copy()
                omega[q, j] += sign * step_phase
                d_omega[q, j] += sign * objective_fn(SimState(omega=omega, p=state.p))
    d_omega /= 2.0 * step_phase

    k = state.p.shape[0]
    d_p = np.zeros(k)
    for j in range(k):
        for sign in (1.0, -1.0):
            p = state.p.copy()
            p[j] += sign * step_power
            d_p[j] += sign * objective_fn(SimState(omega=state.omega, p=p))
    d_p /= 2.0 * step_power
    return GradientPair(d_omega=d_omega, d_p=d_p)
