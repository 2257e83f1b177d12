"""Sklearn-style estimator wrapping the wave-domain precoding optimizer.

``fit`` takes a complex channel matrix (one row per user, one column per
output-layer atom) and optimizes the stack's phase shifts and the per-user
powers for it.  ``transform`` maps channels to the effective per-user link
matrix after precoding, ``predict`` to per-user achievable rates, and
``score`` to the sum rate, so the precoder composes with standard tooling
(``get_params``/``set_params``/``clone``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_generator, check_channel_matrix, check_symbol_block
from .channel import ChannelSet
from .objective import evaluate_objective
from .optimizer import optimize
from .propagation import build_propagation
from .scenario import ScenarioConfig, build_geometry
from .wavefield import beampattern_gain, covariance, input_map, steering_vector


class SimIsacPrecoder(BaseEstimator):
    """Joint phase-shift and power-allocation precoder for a stacked
    metasurface transmitter serving downlink users and one sensed direction.

    Parameters mirror the scenario configuration; the number of users (and
    feed antennas) is taken from the fitted channel matrix.

    Attributes (after ``fit``)
    --------------------------
    omega_ : ndarray of shape (num_layers, m_x * m_z)
        Optimized per-atom phase shifts in radians.
    p_ : ndarray of shape (K,)
        Optimized per-user transmit powers in watts.
    v_ : ndarray of shape (m_x * m_z, K)
        Antenna-to-output map at the optimized phases.
    trace_ : OptimizerTrace
        Full iteration history.
    """

    def __init__(
        self,
        m_x: int = 10,
        m_z: int = 10,
        num_layers: int = 7,
        carrier_frequency_hz: float = 28e9,
        sim_thickness_m: float | None = None,
        atom_spacing_m: float | None = None,
        atom_area_m2: float | None = None,
        total_power_dbm: float = 15.0,
        noise_power_dbm: float = -104.0,
        target_theta_deg: float = 90.0,
        target_phi_deg: float = 45.0,
        gamma_dbi: float = 8.0,
        beta: float = 2.0,
        n_init: int = 16,
        max_iters: int = 200,
        convergence_tol: float = 1e-4,
        psi_mode: str = "recompute",
        random_state=None,
    ):
        self.m_x = m_x
        self.m_z = m_z
        self.num_layers = num_layers
        self.carrier_frequency_hz = carrier_frequency_hz
        self.sim_thickness_m = sim_thickness_m
        self.atom_spacing_m = atom_spacing_m
        self.atom_area_m2 = atom_area_m2
        self.total_power_dbm = total_power_dbm
        self.noise_power_dbm = noise_power_dbm
        self.target_theta_deg = target_theta_deg
        self.target_phi_deg = target_phi_deg
        self.gamma_dbi = gamma_dbi
        self.beta = beta
        self.n_init = n_init
        self.max_iters = max_iters
        self.convergence_tol = convergence_tol
        self.psi_mode = psi_mode
        self.random_state = random_state

    def _scenario(self, num_users: int) -> ScenarioConfig:
        return ScenarioConfig(
            carrier_frequency_hz=self.carrier_frequency_hz,
            m_x=self.m_x,
            m_z=self.m_z,
            num_layers=self.num_layers,
            num_users=num_users,
            sim_thickness_m=self.sim_thickness_m,
            atom_spacing_m=self.atom_spacing_m,
            atom_area_m2=self.atom_area_m2,
            total_power_dbm=self.total_power_dbm,
            noise_power_dbm=self.noise_power_dbm,
            target_theta_deg=self.target_theta_deg,
            target_phi_deg=self.target_phi_deg,
            gamma_dbi=self.gamma_dbi,
            beta=self.beta,
            n_init=self.n_init,
            max_iters=self.max_iters,
            convergence_tol=self.convergence_tol,
            psi_mode=self.psi_mode,
        )

    def fit(self, X, y=None):
        """Optimize phases and powers for the channel matrix ``X``."""
        cfg = self._scenario(num_users=np.asarray(X).shape[0] if np.asarray(X).ndim == 2 else 1)
        X = check_channel_matrix(X, n_atoms=cfg.num_atoms)
        chan = ChannelSet.from_matrix(X)
        layout = build_geometry(cfg)
        prop = build_propagation(layout, cfg)
        rng = as_generator(self.random_state)
        trace = optimize(prop, chan, cfg, rng)

        self.config_ = cfg
        self.propagation_ = prop
        self.trace_ = trace
        self.omega_ = trace.final_state.omega
        self.p_ = trace.final_state.p
        self.report_ = trace.final_report
        self.psi_ = trace.final_report.psi
        self.alpha_ = trace.final_report.alpha
        self.converged_ = trace.converged
        self.n_iter_ = trace.n_iters
        self.v_ = input_map(self.omega_, prop)
        return self

    def transform(self, X):
        """Effective per-user link matrix ``X @ V @ diag(sqrt(p))``.

        Entry (k, k') is the complex gain from the stream of user k' into
        receiver k; the diagonal carries the useful links.
        """
        check_is_fitted(self, "v_")
        X = check_channel_matrix(X, n_atoms=self.config_.num_atoms)
        return X @ (self.v_ * np.sqrt(self.p_))

    def predict(self, X):
        """Per-user achievable rates (bits/s/Hz) on channel matrix ``X``."""
        check_is_fitted(self, "v_")
        X = check_channel_matrix(
            X, n_atoms=self.config_.num_atoms, n_users=self.p_.shape[0]
        )
        report = evaluate_objective(
            self._fitted_state(), self.propagation_, X, self.config_
        )
        return np.log1p(report.gamma) / np.log(2.0)

    def score(self, X, y=None) -> float:
        """Sum rate (bits/s/Hz) achieved on channel matrix ``X``."""
        return float(np.sum(self.predict(X)))

    def precode(self, symbols):
        """Wave-domain transmit field for user symbol rows, shape (n, M)."""
        check_is_fitted(self, "v_")
        s = check_symbol_block(symbols, n_users=self.p_.shape[0])
        return s @ (self.v_ * np.sqrt(self.p_)).T

    def beampattern(self, theta: float, phi: float) -> float:
        """Beampattern gain (watts) of the fitted state toward a direction."""
        check_is_fitted(self, "v_")
        cfg = self.config_
        a = steering_vector(theta, phi, cfg.m_x, cfg.m_z, cfg.steering_pitch_ratio)
        r_t = (self.v_ * self.p_) @ self.v_.conj().T
        return beampattern_gain(a, r_t)

    def _fitted_state(self):
        from .wavefield import SimState

        return SimState(omega=self.omega_, p=self.p_)
