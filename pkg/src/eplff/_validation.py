"""Input validation helpers shared across the package."""
from __future__ import annotations

import numpy as np


def as_matrix(X, n_features: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce to a 2D float64 array of finite values."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2D (n_samples, n_features), got shape {A.shape}")
    if A.shape[0] == 0:
        raise ValueError(f"{name} has no rows")
    if not np.isfinite(A).all():
        raise ValueError(f"{name} contains non-finite values")
    if n_features is not None and A.shape[1] != n_features:
        raise ValueError(f"{name} has {A.shape[1]} features, expected {n_features}")
    return A


def as_vector(x, length: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a 1D float64 array of finite values."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
    if length is not None and a.shape[0] != length:
        raise ValueError(f"{name} has length {a.shape[0]}, expected {length}")
    return a


def check_interval(pair, name: str, *, lo_gt: float | None = None,
                   allow_equal: bool = False) -> tuple[float, float]:
    """Validate a (lo, hi) pair, returning it as floats."""
    try:
        lo, hi = (float(pair[0]), float(pair[1]))
    except (TypeError, ValueError, IndexError) as exc:
        raise ValueError(f"{name} must be a (lo, hi) pair") from exc
    if allow_equal:
        if lo > hi:
            raise ValueError(f"{name} is inverted: ({lo}, {hi})")
    elif lo >= hi:
        raise ValueError(f"{name} must satisfy lo < hi, got ({lo}, {hi})")
    if lo_gt is not None and lo <= lo_gt:
        raise ValueError(f"{name} lower bound must be > {lo_gt}, got {lo}")
    return lo, hi


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent child seeds from one base seed."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(n)]
