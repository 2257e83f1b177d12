"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numbers

import numpy as np


def check_channel_matrix(
    x, n_atoms: int | None = None, n_users: int | None = None
) -> np.ndarray:
    """Validate a complex channel matrix with user rows and atom columns."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"channel matrix must be 2-D, got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"channel matrix must be non-empty, got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.number):
        raise ValueError(f"channel matrix must be numeric, got dtype {x.dtype}")
    x = x.astype(complex)
    if not np.all(np.isfinite(x.real)) or not np.all(np.isfinite(x.imag)):
        raise ValueError("channel matrix contains non-finite entries")
    if n_atoms is not None and x.shape[1] != n_atoms:
        raise ValueError(
            f"channel matrix has {x.shape[1]} columns, expected {n_atoms} "
            "(one per output-layer atom)"
        )
    if n_users is not None and x.shape[0] != n_users:
        raise ValueError(f"channel matrix has {x.shape[0]} rows, expected {n_users}")
    return x


def check_symbol_block(s, n_users: int) -> np.ndarray:
    """Validate a block of user symbols, shape (n_samples, K)."""
    s = np.asarray(s)
    if s.ndim == 1:
        s = s[None, :]
    if s.ndim != 2 or s.shape[1] != n_users:
        raise ValueError(f"symbols must have shape (n, {n_users}), got {s.shape}")
    return s.astype(complex)


def as_generator(seed) -> np.random.Generator:
    """Coerce None, an integer seed, or a Generator into a Generator."""
    if seed is None:
        return np.random.default_rng()
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, numbers.Integral):
        return np.random.default_rng(int(seed))
    raise ValueError(f"random_state must be None, an int, or a Generator, got {seed!r}")
