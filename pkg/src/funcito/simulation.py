"""Seeded simulation of Brownian and Itô-process paths.

Each path draws its Gaussian increments from its own Philox stream keyed by
``(seed, path_index)``, so any subset of paths can be regenerated in any order
(or on any worker) and comes out bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import AssumptionViolation, DomainError
from .paths import LiftedPath

MODELS = ("brownian", "scaled_brownian", "state_dependent")
DET_FLOOR = 1e-8
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SimulationConfig:
    model: str = "brownian"
    dimension: int = 1
    horizon: float = 1.0
    steps: int = 256
    seed: int = 0
    path_count: int = 1000
    sigma: Union[float, Callable, None] = None
    x0: float = 0.0
    det_floor: float = DET_FLOOR

    def __post_init__(self):
        if self.model not in MODELS:
            raise DomainError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.steps < 1 or self.horizon <= 0 or self.dimension < 1 or self.path_count < 1:
            raise DomainError("need steps >= 1, horizon > 0, dimension >= 1, path_count >= 1")
        if self.model == "scaled_brownian" and not np.isscalar(self.sigma):
            raise DomainError("scaled_brownian needs a scalar sigma")
        if self.model == "state_dependent" and not callable(self.sigma):
            raise DomainError("state_dependent needs a callable sigma(t, x)")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


def stream(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based generator for one path."""
    key = ((int(seed) & _MASK64) << 64) | (int(path_index) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def gaussian_increments(cfg: SimulationConfig, path_index: int) -> np.ndarray:
    """Standard normal draws, shape ``(steps, d)``."""
    return stream(cfg.seed, path_index).standard_normal((cfg.steps, cfg.dimension))


@dataclass(frozen=True)
class PathBatch:
    """Paths on a shared grid: ``x`` is ``(m, n+1, d)`` and ``v`` ``(m, n+1, d, d)``."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def path(self, k: int) -> LiftedPath:
        return LiftedPath.from_arrays(self.times, self.x[k], self.v[k])

    def paths(self) -> list[LiftedPath]:
        return [self.path(k) for k in range(len(self))]


def _sigma_matrix(cfg: SimulationConfig, t: float, x: np.ndarray) -> np.ndarray:
    m, d = x.shape
    s = np.asarray(cfg.sigma(t, x), dtype=float)
    if s.shape in ((m,), (m, 1)) and d == 1:
        s = s.reshape(m, 1, 1)
    if s.shape == (d, d):
        s = np.broadcast_to(s, (m, d, d))
    if s.shape != (m, d, d):
        raise DomainError(f"sigma returned shape {s.shape}, expected {(m, d, d)}")
    return s


def _check_det(cfg: SimulationConfig, sig: np.ndarray, t: float, indices) -> None:
    det = np.linalg.det(sig) if sig.shape[-1] > 1 else sig[..., 0, 0]
    bad = np.abs(det) < cfg.det_floor
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise AssumptionViolation(
            f"|det sigma| = {abs(det[k]):.3g} < det_floor {cfg.det_floor:g} at t={t:g} "
            f"on path {int(indices[k])}: nonsingular volatility assumption violated"
        )


def simulate(cfg: SimulationConfig, indices=None) -> PathBatch:
    """Simulate the paths with the given indices (default: all ``path_count``)."""
    idx = np.arange(cfg.path_count) if indices is None else np.asarray(indices, dtype=int).reshape(-1)
    times = cfg.times
    n, d = cfg.steps, cfg.dimension
    dt = np.diff(times)
    z = np.stack([gaussian_increments(cfg, int(i)) for i in idx]) if idx.size else np.zeros((0, n, d))
    dw = z * np.sqrt(dt)[None, :, None]
    x = np.empty((idx.size, n + 1, d))
    x[:, 0, :] = cfg.x0
    if cfg.model == "brownian":
        x[:, 1:, :] = cfg.x0 + np.cumsum(dw, axis=1)
        v = np.broadcast_to(np.eye(d), (idx.size, n + 1, d, d))
    elif cfg.model == "scaled_brownian":
        c = float(cfg.sigma)
        sig = np.broadcast_to(c * np.eye(d), (max(idx.size, 1), d, d))
        _check_det(cfg, sig, 0.0, idx if idx.size else [0])
        x[:, 1:, :] = cfg.x0 + np.cumsum(c * dw, axis=1)
        v = np.broadcast_to(c * c * np.eye(d), (idx.size, n + 1, d, d))
    else:
        v = np.empty((idx.size, n + 1, d, d))
        for i in range(n + 1):
            sig = _sigma_matrix(cfg, times[i], x[:, i, :])
            _check_det(cfg, sig, times[i], idx)
            v[:, i] = sig @ np.swapaxes(sig, -1, -2)
            if i < n:
                x[:, i + 1, :] = x[:, i, :] + np.einsum("mij,mj->mi", sig, dw[:, i, :])
    return PathBatch(times, x, v, idx)


def sample_brownian(cfg: SimulationConfig, path_index: int) -> LiftedPath:
    if cfg.model != "brownian":
        raise DomainError("sample_brownian requires model='brownian'")
    return simulate(cfg, [path_index]).path(0)


def sample_ito_process(cfg: SimulationConfig, path_index: int) -> LiftedPath:
    """Euler scheme ``X_{i+1} = X_i + sigma(t_i, X_i) dW_i`` with ``v = sigma sigma^T``."""
    if cfg.model == "brownian":
        raise DomainError("sample_ito_process requires a non-Brownian model")
    return simulate(cfg, [path_index]).path(0)


def sample_path(cfg: SimulationConfig, path_index: int) -> LiftedPath:
    return simulate(cfg, [path_index]).path(0)


def realized_covariation(x: np.ndarray) -> np.ndarray:
    """``sum dX dX^T`` over a path (or batch), shape ``(..., d, d)``."""
    dx = np.diff(x, axis=-2)
    return np.einsum("...ni,...nj->...ij", dx, dx)


def tanh_vol(t, x):
    """``1 + 0.5 tanh x``: bounded away from zero, ``0.5 <= sigma <= 1.5``."""
    return 1.0 + 0.5 * np.tanh(x[:, 0])


def zero_vol(t, x):
    """Degenerate volatility; simulating with it raises :class:`AssumptionViolation`."""
    return np.zeros(x.shape[0])


SIGMA_MODELS: dict[str, Callable] = {"tanh": tanh_vol, "zero": zero_vol}
