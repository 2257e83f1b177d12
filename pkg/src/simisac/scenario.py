"""Scenario parameters, unit conversions, and transmitter geometry.

All quantities are stored in SI units internally (meters, watts, radians).
The configuration file mirrors the :class:`ScenarioConfig` field names, with
angles in degrees and powers in dBm exactly as the field names state.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8  # m/s, fixed constant; wavelength is derived


class ScenarioError(ValueError):
    """Invalid scenario configuration or geometry request."""


def dbm_to_watts(p_dbm: float) -> float:
    """Convert a power from dBm to watts."""
    if not math.isfinite(p_dbm):
        raise ScenarioError(f"power in dBm must be finite, got {p_dbm!r}")
    return 10.0 ** (p_dbm / 10.0) * 1e-3


def watts_to_dbm(p_watts: float) -> float:
    """Convert a power from watts to dBm."""
    if not (math.isfinite(p_watts) and p_watts > 0.0):
        raise ScenarioError(f"power in watts must be positive, got {p_watts!r}")
    return 10.0 * math.log10(p_watts * 1e3)


def _default_user_positions(num_users: int) -> tuple[tuple[float, float, float], ...]:
    return tuple((10.0 * k, 10.0, 10.0 * k) for k in range(1, num_users + 1))


@dataclass(frozen=True)
class ScenarioConfig:
    """Full physical and algorithmic parameterization of one scenario.

    Immutable after construction; safe to share read-only across workers.
    ``None`` for the geometric fields selects the wavelength-derived default
    noted in the comment.
    """

    carrier_frequency_hz: float = 28e9
    m_x: int = 10                       # meta-atoms per layer along x
    m_z: int = 10                       # meta-atoms per layer along z
    num_layers: int = 7                 # stacked metasurface layers
    num_users: int = 4                  # served users == feed antennas
    sim_thickness_m: float | None = None    # default 5 wavelengths
    atom_spacing_m: float | None = None     # default half wavelength
    atom_area_m2: float | None = None       # default atom_spacing**2
    total_power_dbm: float = 15.0
    noise_power_dbm: float = -104.0
    path_loss_exponent: float = 3.5
    reference_distance_m: float = 1.0
    user_positions: tuple[tuple[float, float, float], ...] | None = None
    target_theta_deg: float = 90.0      # elevation of the sensed direction
    target_phi_deg: float = 45.0        # azimuth of the sensed direction
    gamma_dbi: float = 8.0              # required normalized beam gain
    beta: float = 2.0                   # penalty weight; 0 disables sensing
    n_init: int = 16                    # multi-start candidates
    presolve_iters: int = 400           # rate-only ascent budget during init
    shaping_iters: int = 400            # penalized ascent budget during init
    max_iters: int = 1000
    convergence_tol: float = 1e-5
    convergence_patience: int = 8       # consecutive quiet iterations to stop
    armijo_mu0: float = 1.0
    armijo_contraction: float = 0.5
    armijo_c1: float = 1e-4
    max_backtracks: int = 30
    psi_mode: str = "recompute"         # "recompute" or "frozen"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.user_positions is None:
            object.__setattr__(
                self, "user_positions", _default_user_positions(self.num_users)
            )
        else:
            positions = tuple(tuple(float(c) for c in pos) for pos in self.user_positions)
            object.__setattr__(self, "user_positions", positions)
        self._validate()

    def _validate(self) -> None:
        if self.carrier_frequency_hz <= 0:
            raise ScenarioError("carrier_frequency_hz must be positive")
        if self.m_x < 1 or self.m_z < 1:
            raise ScenarioError("m_x and m_z must be at least 1")
        if self.num_layers < 1:
            raise ScenarioError("num_layers must be at least 1")
        if self.num_users < 1:
            raise ScenarioError("num_users must be at least 1")
        for name in ("sim_thickness", "atom_spacing", "atom_area"):
            value = getattr(self, name)
            if value <= 0:
                raise ScenarioError(f"{name} must be positive, got {value}")
        dbm_to_watts(self.total_power_dbm)
        dbm_to_watts(self.noise_power_dbm)
        if self.path_loss_exponent <= 0:
            raise ScenarioError("path_loss_exponent must be positive")
        if self.reference_distance_m <= 0:
            raise ScenarioError("reference_distance_m must be positive")
        if len(self.user_positions) != self.num_users:
            raise ScenarioError(
                f"user_positions has {len(self.user_positions)} entries, "
                f"expected num_users={self.num_users}"
            )
        if any(len(pos) != 3 for pos in self.user_positions):
            raise ScenarioError("each user position must be a 3-D coordinate")
        if not 0.0 < self.target_theta_deg < 180.0:
            raise ScenarioError("target_theta_deg must lie in (0, 180)")
        if not -90.0 < self.target_phi_deg < 90.0:
            raise ScenarioError("target_phi_deg must lie in (-90, 90)")
        if self.beta < 0:
            raise ScenarioError("beta must be non-negative")
        if self.n_init < 1:
            raise ScenarioError("n_init must be at least 1")
        if self.presolve_iters < 0:
            raise ScenarioError("presolve_iters must be non-negative")
        if self.shaping_iters < 0:
            raise ScenarioError("shaping_iters must be non-negative")
        if self.max_iters < 0:
            raise ScenarioError("max_iters must be non-negative")
        if self.convergence_tol <= 0:
            raise ScenarioError("convergence_tol must be positive")
        if self.convergence_patience < 1:
            raise ScenarioError("convergence_patience must be at least 1")
        if self.armijo_mu0 <= 0:
            raise ScenarioError("armijo_mu0 must be positive")
        if not 0.0 < self.armijo_contraction < 1.0:
            raise ScenarioError("armijo_contraction must lie in (0, 1)")
        if self.armijo_c1 <= 0:
            raise ScenarioError("armijo_c1 must be positive")
        if self.max_backtracks < 0:
            raise ScenarioError("max_backtracks must be non-negative")
        if self.psi_mode not in ("recompute", "frozen"):
            raise ScenarioError("psi_mode must be 'recompute' or 'frozen'")

    # Derived quantities ---------------------------------------------------

    @property
    def wavelength(self) -> float:
        """Carrier wavelength in meters."""
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def num_atoms(self) -> int:
        """Meta-atoms per layer, ``m_x * m_z``."""
        return self.m_x * self.m_z

    @property
    def sim_thickness(self) -> float:
        """Total axial extent of the stack in meters (default 5 wavelengths)."""
        if self.sim_thickness_m is not None:
            return self.sim_thickness_m
        return 5.0 * self.wavelength

    @property
    def layer_spacing(self) -> float:
        """Axial gap between adjacent layers, ``sim_thickness / num_layers``."""
        return self.sim_thickness / self.num_layers

    @property
    def atom_spacing(self) -> float:
        """Grid pitch within a layer in meters (default half wavelength)."""
        if self.atom_spacing_m is not None:
            return self.atom_spacing_m
        return self.wavelength / 2.0

    @property
    def atom_area(self) -> float:
        """Effective aperture of one meta-atom in m^2 (default pitch squared)."""
        if self.atom_area_m2 is not None:
            return self.atom_area_m2
        return self.atom_spacing ** 2

    @property
    def p_t(self) -> float:
        """Total transmit power in watts."""
        return dbm_to_watts(self.total_power_dbm)

    @property
    def noise_power(self) -> float:
        """Per-user noise power in watts."""
        return dbm_to_watts(self.noise_power_dbm)

    @property
    def theta_c(self) -> float:
        """Target elevation in radians."""
        return math.radians(self.target_theta_deg)

    @property
    def phi_c(self) -> float:
        """Target azimuth in radians."""
        return math.radians(self.target_phi_deg)

    @property
    def gamma_linear(self) -> float:
        """Required normalized beampattern gain on a linear scale."""
        return 10.0 ** (self.gamma_dbi / 10.0)

    @property
    def steering_pitch_ratio(self) -> float:
        """Output-layer pitch in half wavelengths; 1.0 at the default pitch."""
        return 2.0 * self.atom_spacing / self.wavelength

    # Serialization --------------------------------------------------------

    def replace(self, **changes) -> "ScenarioConfig":
        """Return a copy with the given fields replaced."""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["user_positions"] = [list(pos) for pos in self.user_positions]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = dict(data)
        if kwargs.get("user_positions") is not None:
            kwargs["user_positions"] = tuple(
                tuple(float(c) for c in pos) for pos in kwargs["user_positions"]
            )
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        """Load a configuration from a JSON key/value document."""
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise ScenarioError(f"config file {path} is not valid JSON: {err}") from err
        if not isinstance(data, dict):
            raise ScenarioError(f"config file {path} must contain a JSON object")
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def config_hash(self) -> str:
        """Stable hash of the full configuration, for output provenance."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class GeometryLayout:
    """Positions of the feed antennas and of every meta-atom.

    ``atom_positions[q, m]`` is the 3-D location of atom ``m`` on layer ``q``
    (0-based).  Atoms are indexed z-fastest: ``m = ix * m_z + iz``, matching
    the Kronecker ordering of the steering vector.  The axial direction is y.
    """

    antenna_positions: np.ndarray  # (K, 3)
    atom_positions: np.ndarray     # (Q, M, 3)

    def __post_init__(self) -> None:
        self.antenna_positions.setflags(write=False)
        self.atom_positions.setflags(write=False)

    @property
    def num_layers(self) -> int:
        return self.atom_positions.shape[0]

    @property
    def num_atoms(self) -> int:
        return self.atom_positions.shape[1]

    @property
    def output_layer(self) -> np.ndarray:
        """Atom positions of the last (user-facing) layer, shape (M, 3)."""
        return self.atom_positions[-1]


def build_geometry(cfg: ScenarioConfig) -> GeometryLayout:
    """Lay out antennas and meta-atoms for a scenario.

    Layers sit at axial offsets ``q * layer_spacing`` for ``q = 1..Q`` so the
    stack spans exactly ``sim_thickness``.  Each layer is a centered
    ``m_x x m_z`` grid in the x-z plane.  The K feed antennas form a centered
    line along x at the atom pitch, one layer gap behind the first layer.
    """
    if cfg.num_layers < 1 or cfg.num_atoms < 1:
        raise ScenarioError("geometry requires at least one layer and one atom")
    pitch = cfg.atom_spacing
    xs = (np.arange(cfg.m_x) - (cfg.m_x - 1) / 2.0) * pitch
    zs = (np.arange(cfg.m_z) - (cfg.m_z - 1) / 2.0) * pitch
    grid_x = np.repeat(xs, cfg.m_z)
    grid_z = np.tile(zs, cfg.m_x)
    atoms = np.empty((cfg.num_layers, cfg.num_atoms, 3))
    for q in range(cfg.num_layers):
        atoms[q, :, 0] = grid_x
        atoms[q, :, 1] = (q + 1) * cfg.layer_spacing
        atoms[q, :, 2] = grid_z
    ant_x = (np.arange(cfg.num_users) - (cfg.num_users - 1) / 2.0) * pitch
    antennas = np.zeros((cfg.num_users, 3))
    antennas[:, 0] = ant_x
    return GeometryLayout(antenna_positions=antennas, atom_positions=atoms)
