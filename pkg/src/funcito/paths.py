"""Discretised cadlag paths and the elementary path operations.

A :class:`GridPath` stores samples on an explicit, strictly increasing time
grid starting at 0.  Off-grid evaluation uses the cadlag-hold rule: the value
at ``u`` is the sample at the largest grid time ``<= u``.  Jumps are explicit:
at a flagged index the stored sample is the right limit and a separately
stored left limit differs from it.  Everywhere else the left limit equals the
sample.

A :class:`LiftedPath` pairs the path ``x`` with the path ``v`` of the
quadratic-variation density on the same grid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError

TOL_PSD = 1e-10
_TIME_RTOL = 1e-12


def _time_tol(t: float) -> float:
    return _TIME_RTOL * max(1.0, abs(t))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridPath:
    """Samples of a cadlag path on a finite grid.

    ``values`` has shape ``(len(times), *value_shape)``; ``value_shape`` is
    ``(d,)`` for the underlying path and ``(d, d)`` for the QV density.
    """

    times: np.ndarray
    values: np.ndarray
    jump_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    jump_left: np.ndarray | None = None

    def __post_init__(self):
        times = _frozen(self.times)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.size == 0:
            raise DomainError("times must be a non-empty 1-d array")
        if times[0] != 0.0:
            raise DomainError("grid must start at time 0")
        if np.any(np.diff(times) <= 0):
            raise DomainError("grid times must be strictly increasing")
        if values.shape[0] != times.size:
            raise DomainError("one value per grid time is required")
        if not np.all(np.isfinite(values)):
            raise DomainError("path values must be finite")

        idx = np.asarray(self.jump_index, dtype=int).reshape(-1)
        if idx.size:
            if self.jump_left is None:
                raise DomainError("jump_left is required when jump_index is given")
            left = np.asarray(self.jump_left, dtype=float).reshape((idx.size,) + values.shape[1:])
            if np.any(idx < 0) or np.any(idx >= times.size):
                raise DomainError("jump indices must lie in 0..n")
            if np.unique(idx).size != idx.size:
                raise DomainError("duplicate jump index")
            if not np.all(np.isfinite(left)):
                raise DomainError("left limits must be finite")
            order = np.argsort(idx)
            idx, left = idx[order], left[order]
            # a "jump" whose left limit equals the sample is no jump at all
            keep = np.array([not np.array_equal(left[k], values[i]) for k, i in enumerate(idx)], dtype=bool)
            idx, left = idx[keep], left[keep]
        else:
            left = np.zeros((0,) + values.shape[1:])

        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", _frozen(values))
        idx = np.array(idx, dtype=int)
        idx.setflags(write=False)
        object.__setattr__(self, "jump_index", idx)
        object.__setattr__(self, "jump_left", _frozen(left))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    def __len__(self) -> int:
        return self.times.size

    @property
    def left_values(self) -> np.ndarray:
        """Left limits at every grid time (sample itself where there is no jump)."""
        out = np.array(self.values, copy=True)
        if self.jump_index.size:
            out[self.jump_index] = self.jump_left
        return out

    @property
    def jump_mask(self) -> np.ndarray:
        mask = np.zeros(self.times.size, dtype=bool)
        mask[self.jump_index] = True
        return mask

    def hold_index(self, u) -> np.ndarray | int:
        return hold_index(self.times, u)

    def __call__(self, u):
        """Cadlag-hold evaluation at time(s) ``u``."""
        return self.values[self.hold_index(u)]

    def same_as(self, other: "GridPath") -> bool:
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.jump_index, other.jump_index)
            and np.array_equal(self.jump_left, other.jump_left)
        )


def hold_index(times: np.ndarray, u):
    """Index of the largest grid time ``<= u`` (times before 0 map to 0)."""
    u_arr = np.asarray(u, dtype=float)
    tol = _TIME_RTOL * max(1.0, float(times[-1]))
    idx = np.searchsorted(times, u_arr + tol, side="right") - 1
    idx = np.clip(idx, 0, times.size - 1)
    return int(idx) if np.ndim(idx) == 0 else idx


@dataclass(frozen=True, eq=False)
class LiftedPath:
    """A path ``x`` together with the path ``v`` of its QV density."""

    x: GridPath
    v: GridPath

    def __post_init__(self):
        if not np.array_equal(self.x.times, self.v.times):
            raise DomainError("x and v must share the same time grid")
        if len(self.x.value_shape) != 1:
            raise DomainError("x values must be vectors")
        d = self.x.value_shape[0]
        if self.v.value_shape != (d, d):
            raise DomainError(f"v values must be {d}x{d} matrices")
        check_psd(self.v.values)
        if self.v.jump_index.size:
            check_psd(self.v.jump_left)

    @classmethod
    def from_arrays(cls, times, x, v=None, jump_index=(), jump_left=None) -> "LiftedPath":
        """Build from raw arrays; ``v`` defaults to the identity (Brownian case)."""
        times = np.asarray(times, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        d = x.shape[1]
        if v is None:
            v = np.broadcast_to(np.eye(d), (times.size, d, d))
        else:
            v = np.asarray(v, dtype=float)
            if v.ndim == 1:
                v = v[:, None, None]
        jl = None if jump_left is None else np.asarray(jump_left, dtype=float).reshape(-1, d)
        return cls(GridPath(times, x, np.asarray(jump_index, dtype=int), jl), GridPath(times, v))

    @property
    def times(self) -> np.ndarray:
        return self.x.times

    @property
    def horizon(self) -> float:
        return self.x.horizon

    @property
    def dim(self) -> int:
        return self.x.value_shape[0]

    def same_as(self, other: "LiftedPath") -> bool:
        return self.x.same_as(other.x) and self.v.same_as(other.v)


def check_psd(mats: np.ndarray, tol: float = TOL_PSD) -> None:
    """Raise unless every matrix is symmetric and PSD up to ``tol`` (relative)."""
    mats = np.asarray(mats, dtype=float)
    if mats.size == 0:
        return
    scale = np.max(np.abs(mats), axis=(-2, -1), keepdims=True)
    asym = np.abs(mats - np.swapaxes(mats, -1, -2))
    if np.any(asym > 1e-12 * np.maximum(scale, 1.0)):
        raise DomainError("v values must be symmetric")
    if mats.shape[-1] == 1:
        eig_min = mats[..., 0, 0]
        eig_max = eig_min
    else:
        eig = np.linalg.eigvalsh(mats)
        eig_min, eig_max = eig[..., 0], eig[..., -1]
    if np.any(eig_min < -tol * np.maximum(np.abs(eig_max), np.finfo(float).tiny)):
        raise DomainError("v values must be positive semi-definite")


def restrict(p, t: float):
    """Restriction of ``p`` to ``[0, t]``.

    If ``t`` falls between grid points a new final point is inserted that
    holds the value of the preceding grid point.
    """
    if isinstance(p, LiftedPath):
        return LiftedPath(restrict(p.x, t), restrict(p.v, t))
    tol = _time_tol(p.horizon)
    if t < -tol or t > p.horizon + tol:
        raise DomainError(f"restriction time {t} outside [0, {p.horizon}]")
    k = hold_index(p.times, t)
    keep = p.jump_index <= k
    if abs(p.times[k] - t) <= tol:
        if k == p.times.size - 1:
            return p
        return GridPath(p.times[: k + 1], p.values[: k + 1], p.jump_index[keep], p.jump_left[keep])
    times = np.append(p.times[: k + 1], t)
    values = np.concatenate([p.values[: k + 1], p.values[k : k + 1]])
    return GridPath(times, values, p.jump_index[keep], p.jump_left[keep])


def horizontal_extend(p, h: float, step: float | None = None):
    """Freeze the path at its endpoint and prolong it to ``[0, t + h]``.

    New grid points continue the last grid step (or ``step``); the final
    point is exactly ``t + h``.
    """
    if isinstance(p, LiftedPath):
        return LiftedPath(horizontal_extend(p.x, h, step), horizontal_extend(p.v, h, step))
    if h < 0:
        raise DomainError("horizontal extension requires h >= 0")
    if h <= _time_tol(p.horizon):
        # below the grid's time resolution: nothing to add
        return p
    t = p.horizon
    if step is None:
        step = p.times[-1] - p.times[-2] if p.times.size > 1 else h
    if step <= 0:
        raise DomainError("extension step must be positive")
    n_new = max(1, int(np.ceil(h / step - 1e-9)))
    new = t + step * np.arange(1, n_new + 1, dtype=float)
    new[-1] = t + h
    times = np.concatenate([p.times, new])
    values = np.concatenate([p.values, np.repeat(p.values[-1:], n_new, axis=0)])
    return GridPath(times, values, p.jump_index, p.jump_left)


def vertical_bump(p, e):
    """Shift only the endpoint by ``e``; the left limit at the endpoint is kept."""
    if isinstance(p, LiftedPath):
        return LiftedPath(vertical_bump(p.x, e), p.v)
    e = np.asarray(e, dtype=float)
    if e.ndim == 0:
        e = np.full(p.value_shape, float(e)) if p.value_shape == (1,) else e
    if e.shape != p.value_shape:
        raise DomainError(f"bump of shape {e.shape} does not match path values {p.value_shape}")
    if not np.any(e):
        return p
    last = p.times.size - 1
    values = np.array(p.values, copy=True)
    values[last] += e
    idx = list(p.jump_index)
    left = list(p.jump_left)
    if last not in idx:
        idx.append(last)
        left.append(p.values[last])
    return GridPath(p.times, values, np.array(idx, dtype=int), np.array(left))


def _sup_diff(a: GridPath, b: GridPath, grid: np.ndarray) -> float:
    diff = a.values[hold_index(a.times, grid)] - b.values[hold_index(b.times, grid)]
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def d_infinity(a: LiftedPath, b: LiftedPath) -> float:
    """Distance between lifted paths, possibly on different horizons.

    The shorter path is horizontally extended to the longer horizon; the
    result is ``sup|x - x'| + sup|v - v'| + h`` with suprema (max-abs norm)
    taken on the union of both grids.
    """
    if a.dim != b.dim:
        raise DomainError("dimension mismatch")
    if a.horizon > b.horizon:
        a, b = b, a
    h = b.horizon - a.horizon
    if h <= _time_tol(b.horizon):
        h = 0.0
    if h > 0:
        a = horizontal_extend(a, h)
    grid = np.union1d(a.times, b.times)
    grid = grid[grid <= b.horizon + _time_tol(b.horizon)]
    return _sup_diff(a.x, b.x, grid) + _sup_diff(a.v, b.v, grid) + h


@dataclass(frozen=True)
class StepApproximation:
    partition: np.ndarray
    levels: np.ndarray
    sup_error: float

    def __call__(self, u):
        return self.levels[hold_index(self.partition, u)]


def _jump_sizes(p: GridPath) -> np.ndarray:
    if not p.jump_index.size:
        return np.zeros(0)
    d = p.values[p.jump_index] - p.jump_left
    return np.max(np.abs(d.reshape(d.shape[0], -1)), axis=1)


def step_approximate(p, N: int) -> StepApproximation:
    """Piecewise-constant approximation on the dyadic grid of level ``N``.

    The partition is the dyadic grid of mesh ``2**-N * t`` merged with every
    declared jump time whose magnitude exceeds ``1/N``; levels are the path
    values at the left end of each cell.  ``sup_error`` is the max-abs
    deviation over the original grid, left limits at jumps included.
    """
    if isinstance(p, LiftedPath):
        p = p.x
    if int(N) != N or N < 1:
        raise DomainError("N must be a positive integer")
    N = int(N)
    t = p.horizon
    dyadic = t * np.arange(2**N + 1, dtype=float) / 2**N
    big = p.jump_index[_jump_sizes(p) > 1.0 / N]
    part = np.union1d(dyadic, p.times[big])
    # merge points closer than round-off so a jump time is not duplicated
    keep = np.concatenate([[True], np.diff(part) > _time_tol(t)])
    part = part[keep]
    for j in p.times[big]:
        part[np.argmin(np.abs(part - j))] = j
    levels = p(part)
    approx = StepApproximation(part, levels, 0.0)

    err = np.abs(p.values - approx(p.times))
    sup = float(np.max(err)) if err.size else 0.0
    if p.jump_index.size:
        jt = p.times[p.jump_index]
        # step function just before a jump time: cell of the largest tau < t_j
        k = np.searchsorted(part, jt - _time_tol(t), side="left") - 1
        before = levels[np.clip(k, 0, part.size - 1)]
        sup = max(sup, float(np.max(np.abs(p.jump_left - before))))
    return StepApproximation(part, levels, sup)


# ---------------------------------------------------------------------------
# CSV serialisation


def _header(d: int, with_left: bool) -> list[str]:
    cols = ["t"] + [f"x_{i + 1}" for i in range(d)]
    cols += [f"v_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    cols.append("jump_flag")
    if with_left:
        cols += [f"xl_{i + 1}" for i in range(d)]
    return cols


def write_csv(p: LiftedPath, path) -> None:
    """One row per grid time; left limits of ``x`` go to trailing ``xl_*`` columns."""
    d = p.dim
    with_left = bool(p.x.jump_index.size)
    if p.v.jump_index.size:
        raise DomainError("jumps in v cannot be serialised in the path CSV format")
    mask = p.x.jump_mask
    left = p.x.left_values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(d, with_left))
        for i, t in enumerate(p.times):
            row = [repr(float(t))]
            row += [repr(float(a)) for a in p.x.values[i]]
            row += [repr(float(a)) for a in p.v.values[i].ravel()]
            row.append("1" if mask[i] else "0")
            if with_left:
                row += [repr(float(a)) for a in left[i]] if mask[i] else [""] * d
            w.writerow(row)


def read_csv(path) -> LiftedPath:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for c in header if c.startswith("x_"))
    if header[: 2 + d + d * d] != _header(d, False):
        raise DomainError(f"unexpected path CSV header: {header}")
    with_left = len(header) > 2 + d + d * d
    times = np.array([float(r[0]) for r in body])
    x = np.array([[float(a) for a in r[1 : 1 + d]] for r in body])
    v = np.array([[float(a) for a in r[1 + d : 1 + d + d * d]] for r in body]).reshape(-1, d, d)
    flags = np.array([int(r[1 + d + d * d]) for r in body], dtype=bool)
    idx = np.flatnonzero(flags)
    if with_left:
        left = np.array([[float(a) for a in body[i][2 + d + d * d :]] for i in idx]).reshape(-1, d)
    else:
        # no stored left limit: hold the previous sample
        left = x[np.maximum(idx - 1, 0)]
    return LiftedPath(GridPath(times, x, idx, left), GridPath(times, v))
