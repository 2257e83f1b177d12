"""Stochastic downlink channels between the output layer and the users.

Channels are flat Rayleigh fading with distance-dependent path loss and
sinc-kernel spatial correlation across the output-layer atoms, as arises in
an isotropic scattering environment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import GeometryLayout, ScenarioConfig


class ChannelError(ValueError):
    """Invalid channel parameterization."""


def path_loss(
    distance_m: float,
    wavelength: float,
    exponent: float,
    reference_distance_m: float = 1.0,
) -> float:
    """Distance-dependent power gain ``C0 * (D/D0)^(-n)``.

    ``C0 = (wavelength / (4 pi D0))^2`` is the free-space gain at the
    reference distance ``D0``.
    """
    if distance_m <= 0:
        raise ChannelError(f"user distance must be positive, got {distance_m}")
    c0 = (wavelength / (4.0 * np.pi * reference_distance_m)) ** 2
    return c0 * (distance_m / reference_distance_m) ** (-exponent)


def spatial_correlation(layout: GeometryLayout, wavelength: float) -> np.ndarray:
    """Correlation matrix of the output-layer atoms under isotropic scattering.

    Entry (m, m') is ``sinc(2 E / wavelength)`` with ``E`` the Euclidean
    distance between atoms m and m' of the output layer; unit diagonal.
    """
    pts = layout.output_layer
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    r = np.sinc(2.0 * dist / wavelength)
    np.fill_diagonal(r, 1.0)
    return r


def correlation_sqrt(r: np.ndarray, negative_tol: float = 1e-10) -> np.ndarray:
    """Symmetric PSD square root of a correlation matrix.

    Eigenvalues are clamped at zero; values below ``-negative_tol`` (relative
    to the largest eigenvalue) indicate a matrix that is not PSD and raise.
    """
    eigval, eigvec = np.linalg.eigh(r)
    scale = max(float(eigval[-1]), 1.0)
    if eigval[0] < -negative_tol * scale:
        raise ChannelError(f"correlation matrix is not PSD (min eigenvalue {eigval[0]:g})")
    eigval = np.clip(eigval, 0.0, None)
    return (eigvec * np.sqrt(eigval)) @ eigvec.T


@dataclass(frozen=True)
class ChannelSet:
    """Per-user channels plus the statistics they were drawn from.

    ``h_rows[k]`` is the conjugate-transposed channel of user k (the row
    vector that left-multiplies the transmit field), so the received sample
    of user k is ``h_rows[k] @ t + noise``.  ``r_q`` and ``r_q_sqrt`` are
    ``None`` for externally supplied channel matrices.
    """

    h_rows: np.ndarray                  # (K, M) complex
    upsilon: np.ndarray                 # (K,) path-loss power gains
    r_q: np.ndarray | None = None       # (M, M) correlation
    r_q_sqrt: np.ndarray | None = None  # (M, M) symmetric PSD root

    def __post_init__(self) -> None:
        self.h_rows.setflags(write=False)
        self.upsilon.setflags(write=False)
        if np.any(self.upsilon <= 0):
            raise ChannelError("path-loss gains must be positive")

    @property
    def num_users(self) -> int:
        return self.h_rows.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.h_rows.shape[1]

    @classmethod
    def from_matrix(cls, h_rows: np.ndarray) -> "ChannelSet":
        """Wrap an externally supplied channel matrix (rows are h_k^H)."""
        h = np.array(h_rows, dtype=complex)
        power = np.mean(np.abs(h) ** 2, axis=1)
        if np.any(power <= 0):
            raise ChannelError("every channel row must carry nonzero power")
        return cls(h_rows=h, upsilon=power)


def user_distances(cfg: ScenarioConfig) -> np.ndarray:
    """Distances from the output-layer center to each user."""
    center = np.array([0.0, cfg.sim_thickness, 0.0])
    pos = np.asarray(cfg.user_positions, dtype=float)
    return np.linalg.norm(pos - center[None, :], axis=1)


def sample_channels(
    cfg: ScenarioConfig,
    r_q_sqrt: np.ndarray,
    rng: np.random.Generator,
    r_q: np.ndarray | None = None,
) -> ChannelSet:
    """Draw one correlated Rayleigh channel realization.

    Each user's channel is ``sqrt(upsilon_k) * r_q_sqrt @ z_k`` with ``z_k``
    standard circularly-symmetric complex Gaussian (real and imaginary parts
    of variance 1/2).  Identical generator state yields bit-identical output.
    """
    k, m = cfg.num_users, cfg.num_atoms
    if r_q_sqrt.shape != (m, m):
        raise ChannelError(f"r_q_sqrt must be ({m}, {m}), got {r_q_sqrt.shape}")
    ups = np.array(
        [
            path_loss(d, cfg.wavelength, cfg.path_loss_exponent, cfg.reference_distance_m)
            for d in user_distances(cfg)
        ]
    )
    re = rng.standard_normal((k, m))
    im = rng.standard_normal((k, m))
    z = (re + 1j * im) / np.sqrt(2.0)
    h = np.sqrt(ups)[:, None] * (z @ r_q_sqrt.T)  # rows are h_k before conjugation
    return ChannelSet(h_rows=np.conj(h), upsilon=ups, r_q=r_q, r_q_sqrt=r_q_sqrt)


def build_channel(
    cfg: ScenarioConfig, layout: GeometryLayout, rng: np.random.Generator
) -> ChannelSet:
    """Convenience wrapper: correlation, square root, then one sample."""
    r = spatial_correlation(layout, cfg.wavelength)
    return sample_channels(cfg, correlation_sqrt(r), rng, r_q=r)
