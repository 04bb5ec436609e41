"""Reproducible random sampling: Poisson point process and sphere directions.

Every stochastic routine takes an explicit Seed.  Identical seeds reproduce
identical outputs bit for bit; distinct streams of the same seed value give
independent draws.  The generator is counter-based (Philox) so streams can
be handed to parallel workers without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import Window

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Seed:
    """A (value, stream) pair selecting one reproducible random stream."""

    value: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = (self.value & _MASK64, self.stream & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, i: int) -> "Seed":
        """Derived seed for sub-task i; disjoint from this stream."""
        return Seed(self.value, (self.stream * 1_000_003 + i + 1) & _MASK64)


@dataclass(frozen=True)
class PoissonConfig:
    """Homogeneous Poisson intensity (points per unit volume) on a window."""

    lam: float
    window: Window

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"intensity must be nonnegative, got {self.lam}")


def sample_poisson(cfg: PoissonConfig, seed: Seed) -> np.ndarray:
    """Sample one realization of the process; returns an (N, d) array.

    N is Poisson(lam * L^d); given N the points are independent and uniform
    on the window.  Output order is the generation order, so a fixed seed
    always yields the same array.
    """
    rng = seed.generator()
    mean = cfg.lam * cfg.window.volume()
    n = int(rng.poisson(mean)) if mean > 0 else 0
    return rng.random((n, cfg.window.d)) * cfg.window.side


def uniform_direction(d: int, seed: Seed, n: int | None = None) -> np.ndarray:
    """Uniform direction(s) on the unit sphere S^{d-1}.

    Returns shape (d,) when n is None, else (n, d).  Implemented as a
    normalized isotropic Gaussian draw.
    """
    if d < 2:
        raise ConfigError(f"dimension must be >= 2, got {d}")
    rng = seed.generator()
    size = (1 if n is None else n, d)
    g = rng.standard_normal(size)
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # A zero draw has probability ~0; fall back to e_0 rather than divide by 0.
    degenerate = norms[:, 0] < 1e-300
    if np.any(degenerate):
        g[degenerate] = 0.0
        g[degenerate, 0] = 1.0
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    out = g / norms
    return out[0] if n is None else out


def uniform_points(w: Window, n: int, seed: Seed) -> np.ndarray:
    """n independent uniform points on the window, shape (n, d)."""
    rng = seed.generator()
    return rng.random((n, w.d)) * w.side
