"""Fixed diffraction transmission matrices between stacked layers.

Each entry couples one source element (feed antenna or meta-atom) to one
meta-atom of the next layer through the Rayleigh-Sommerfeld coefficient.
The matrices depend only on geometry and are computed once per scenario.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import GeometryLayout, ScenarioConfig


class PropagationError(ValueError):
    """Invalid propagation geometry (e.g. coincident elements)."""


def rs_coefficient(d, cos_psi, wavelength: float, atom_area: float):
    """Rayleigh-Sommerfeld coupling coefficient between two elements.

    Parameters
    ----------
    d : float or ndarray
        Propagation distance in meters, strictly positive.
    cos_psi : float or ndarray
        Cosine of the angle between the propagation direction and the
        source-layer normal, in [0, 1].
    wavelength : float
        Carrier wavelength in meters.
    atom_area : float
        Receiving meta-atom aperture in m^2.

    Returns
    -------
    complex or ndarray
        ``(atom_area * cos_psi / d) * (1/(2 pi d) - j/wavelength) * exp(j 2 pi d / wavelength)``
    """
    d = np.asarray(d, dtype=float)
    cos_psi = np.asarray(cos_psi, dtype=float)
    if wavelength <= 0:
        raise PropagationError("wavelength must be positive")
    if atom_area <= 0:
        raise PropagationError("atom_area must be positive")
    if np.any(d <= 0):
        raise PropagationError("propagation distance must be positive (coincident elements?)")
    if np.any(cos_psi < -1e-12) or np.any(cos_psi > 1 + 1e-12):
        raise PropagationError("cos_psi must lie in [0, 1]")
    cos_psi = np.clip(cos_psi, 0.0, 1.0)
    amplitude = atom_area * cos_psi / d
    bracket = 1.0 / (2.0 * np.pi * d) - 1j / wavelength
    out = amplitude * bracket * np.exp(2j * np.pi * d / wavelength)
    if out.ndim == 0:
        return complex(out)
    return out


@dataclass(frozen=True)
class PropagationSet:
    """The fixed complex transmission matrices of one scenario.

    ``w_in`` maps the K feed antennas to the first layer (M x K); ``w_inter``
    holds the layer-to-layer matrices (M x M), entry ``q`` mapping layer
    ``q+1`` to layer ``q+2`` in 1-based counting.
    """

    w_in: np.ndarray
    w_inter: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        self.w_in.setflags(write=False)
        for w in self.w_inter:
            w.setflags(write=False)

    @property
    def num_layers(self) -> int:
        return len(self.w_inter) + 1

    @property
    def num_atoms(self) -> int:
        return self.w_in.shape[0]


def _coupling_matrix(
    sources: np.ndarray, sinks: np.ndarray, wavelength: float, atom_area: float
) -> np.ndarray:
    """Coupling matrix with entry (m, n) from source n to sink m."""
    diff = sinks[:, None, :] - sources[None, :, :]
    d = np.linalg.norm(diff, axis=2)
    if np.any(d <= 0):
        raise PropagationError("source and sink elements coincide")
    cos_psi = np.abs(diff[:, :, 1]) / d  # axial gap over distance
    return rs_coefficient(d, cos_psi, wavelength, atom_area)


def build_propagation(layout: GeometryLayout, cfg: ScenarioConfig) -> PropagationSet:
    """Build all transmission matrices for a scenario geometry."""
    lam = cfg.wavelength
    area = cfg.atom_area
    w_in = _coupling_matrix(layout.antenna_positions, layout.atom_positions[0], lam, area)
    w_inter = tuple(
        _coupling_matrix(layout.atom_positions[q - 1], layout.atom_positions[q], lam, area)
        for q in range(1, layout.num_layers)
    )
    return PropagationSet(w_in=w_in, w_inter=w_inter)
