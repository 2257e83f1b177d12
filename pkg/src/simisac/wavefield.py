"""Wave-domain composition: transfer function, covariance, steering, gain.

The stack's end-to-end map is the alternating product of per-layer phase
factors and inter-layer diffraction matrices.  The output layer acts as a
uniform planar array whose far-field response is a Kronecker steering
vector; the beampattern gain toward a direction is the quadratic form of
the transmit covariance with that steering vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .propagation import PropagationSet


class WavefieldError(ValueError):
    """Invalid wave-domain request (dimension or angle out of range)."""


@dataclass(frozen=True)
class SimState:
    """Optimization variables: per-atom phases and per-user powers.

    Phases are stored unwrapped but only matter modulo 2 pi.  Powers are
    non-negative and sum to the transmit budget after projection.
    """

    omega: np.ndarray  # (Q, M) radians
    p: np.ndarray      # (K,) watts

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", np.array(self.omega, dtype=float))
        object.__setattr__(self, "p", np.array(self.p, dtype=float))
        self.omega.setflags(write=False)
        self.p.setflags(write=False)

    @property
    def num_layers(self) -> int:
        return self.omega.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.omega.shape[1]

    @property
    def num_users(self) -> int:
        return self.p.shape[0]


def phase_matrix(omega_q: np.ndarray) -> np.ndarray:
    """Diagonal unit-modulus phase-shift matrix of one layer."""
    return np.diag(np.exp(1j * np.asarray(omega_q, dtype=float)))


def transfer_function(omega: np.ndarray, prop: PropagationSet) -> np.ndarray:
    """End-to-end M x M map through all layers.

    Equals ``Phi_Q W_Q ... Phi_2 W_2 Phi_1``; for a single layer it reduces
    to the first phase matrix alone.
    """
    omega = np.asarray(omega, dtype=float)
    q_layers, m = omega.shape
    if prop.num_layers != q_layers:
        raise WavefieldError(
            f"phase tensor has {q_layers} layers but propagation set has {prop.num_layers}"
        )
    if prop.num_atoms != m:
        raise WavefieldError(
            f"phase tensor has {m} atoms but propagation set has {prop.num_atoms}"
        )
    factors = np.exp(1j * omega)
    g = np.diag(factors[0])
    for q in range(1, q_layers):
        g = factors[q][:, None] * (prop.w_inter[q - 1] @ g)
    return g


def input_map(omega: np.ndarray, prop: PropagationSet) -> np.ndarray:
    """Antenna-to-output map ``G @ W_in`` (M x K) without forming G."""
    omega = np.asarray(omega, dtype=float)
    factors = np.exp(1j * omega)
    v = factors[0][:, None] * prop.w_in
    for q in range(1, omega.shape[0]):
        v = factors[q][:, None] * (prop.w_inter[q - 1] @ v)
    return v


def covariance(g: np.ndarray, w_in: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Transmit covariance ``(G W_in) diag(p) (G W_in)^H``.

    Hermitian PSD with rank at most K.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise WavefieldError("powers must be non-negative")
    v = g @ w_in
    return (v * p) @ v.conj().T


def steering_vector(
    theta: float, phi: float, m_x: int, m_z: int, pitch_ratio: float = 1.0
) -> np.ndarray:
    """Unit-norm far-field response of the output-layer planar array.

    ``theta`` is elevation in (0, pi), ``phi`` azimuth in [-pi/2, pi/2]
    (boresight along the axial direction at theta = pi/2, phi = 0).  The
    x-axis phase progression is ``-n pi pitch_ratio sin(theta) sin(phi)``
    and the z-axis one ``-n pi pitch_ratio cos(theta)``; ``pitch_ratio`` is
    the atom pitch in half wavelengths (1.0 at the default geometry).
    Atoms are ordered z-fastest, matching the geometry layout.
    """
    if not 0.0 < theta < np.pi:
        raise WavefieldError(f"theta must lie in (0, pi), got {theta}")
    if not -np.pi / 2 <= phi <= np.pi / 2:
        raise WavefieldError(f"phi must lie in [-pi/2, pi/2], got {phi}")
    step = np.pi * pitch_ratio
    a_x = np.exp(-1j * step * np.arange(m_x) * np.sin(theta) * np.sin(phi))
    a_z = np.exp(-1j * step * np.arange(m_z) * np.cos(theta))
    return np.kron(a_x, a_z) / np.sqrt(m_x * m_z)


def beampattern_gain(a: np.ndarray, r_t: np.ndarray) -> float:
    """Quadratic form ``a^H R_t a``; real and non-negative for PSD input."""
    value = complex(np.conj(a) @ r_t @ a)
    scale = max(abs(value), float(np.linalg.norm(r_t, "fro")), 1e-300)
    if abs(value.imag) > 1e-10 * scale:
        raise WavefieldError(f"covariance is not Hermitian (residual {value.imag:g})")
    return max(value.real, 0.0)
