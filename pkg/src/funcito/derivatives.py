"""Finite-difference estimators of horizontal and vertical derivatives.

Two routes are provided.  The per-path functions (``horizontal_derivative_fd``,
``vertical_derivative_fd``, ``second_vertical_fd``) follow the definitions
literally with explicit path operations.  The ``*_along`` functions compute the
same estimates on many prefixes at once through bumped/extended
:class:`PrefixView` objects; the Itô engine uses those.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError
from .functionals import Functional, PrefixView
from .paths import LiftedPath, horizontal_extend, vertical_bump

EPS_REL = 1e-4


@dataclass(frozen=True)
class FDConfig:
    """Finite-difference settings.

    ``eps_vertical=None`` means ``1e-4 * (1 + |x(t)|)``; ``h_horizontal=None``
    means one grid step.
    """

    eps_vertical: float | None = None
    h_horizontal: float | None = None
    scheme: str = "central"
    nondiff_tol: float = 1e-3

    def __post_init__(self):
        if self.eps_vertical is not None and self.eps_vertical <= 0:
            raise DomainError("eps_vertical must be positive")
        if self.h_horizontal is not None and self.h_horizontal <= 0:
            raise DomainError("h_horizontal must be positive")
        if self.scheme not in ("central", "forward"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.nondiff_tol <= 0:
            raise DomainError("nondiff_tol must be positive")

    def eps_for(self, x: np.ndarray) -> np.ndarray:
        """Bump size per prefix; ``x`` has shape ``(..., d)``."""
        if self.eps_vertical is not None:
            return np.full(x.shape[:-1], float(self.eps_vertical))
        return EPS_REL * (1.0 + np.linalg.norm(x, axis=-1))


@dataclass(frozen=True)
class VerticalDerivative:
    """Vertical gradient estimate with its one-sided companions."""

    gradient: np.ndarray
    right: np.ndarray
    left: np.ndarray
    nondifferentiable: np.ndarray = field(default_factory=lambda: np.array(False))

    @property
    def preferred(self) -> np.ndarray:
        """Central estimate, or the right derivative where the flag is set."""
        return np.where(np.asarray(self.nondifferentiable)[..., None], self.right, self.gradient)


def _flag(central, right, left, tol):
    return np.any(np.abs(right - left) > tol * (1.0 + np.abs(central)), axis=-1)


# ---------------------------------------------------------------------------
# per-path estimators built from explicit path operations


def _step(p: LiftedPath) -> float:
    if p.times.size < 2:
        raise DomainError("horizontal step undefined on a single-point path; set h_horizontal")
    return float(p.times[-1] - p.times[-2])


def horizontal_derivative_fd(F: Functional, p: LiftedPath, cfg: FDConfig = FDConfig(), horizon: float | None = None) -> float:
    """Forward difference ``[F(x_{t,h}) - F(x_t)] / h``.

    With ``horizon`` given, ``h`` shrinks to ``(T - t)/2`` rather than cross it.
    """
    h = cfg.h_horizontal if cfg.h_horizontal is not None else _step(p)
    if horizon is not None:
        room = horizon - p.horizon
        if room <= 0:
            raise DomainError("no room for a horizontal extension before the horizon")
        if p.horizon + h > horizon:
            h = room / 2.0
    return (F.evaluate(horizontal_extend(p, h)) - F.evaluate(p)) / h


def vertical_derivative_fd(F: Functional, p: LiftedPath, cfg: FDConfig = FDConfig()) -> VerticalDerivative:
    d = p.dim
    eps = float(cfg.eps_for(p.x.values[-1]))
    f0 = F.evaluate(p)
    up = np.empty(d)
    down = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = eps
        up[i] = F.evaluate(vertical_bump(p, e))
        down[i] = F.evaluate(vertical_bump(p, -e))
    right = (up - f0) / eps
    left = (f0 - down) / eps
    central = (up - down) / (2 * eps)
    grad = central if cfg.scheme == "central" else right
    return VerticalDerivative(grad, right, left, np.array(bool(_flag(central, right, left, cfg.nondiff_tol))))


def second_vertical_fd(F: Functional, p: LiftedPath, cfg: FDConfig = FDConfig()) -> np.ndarray:
    d = p.dim
    eps = float(cfg.eps_for(p.x.values[-1]))
    basis = np.eye(d) * eps
    f0 = F.evaluate(p)

    def at(e):
        return F.evaluate(vertical_bump(p, e))

    hess = np.empty((d, d))
    for i in range(d):
        hess[i, i] = (at(basis[i]) - 2 * f0 + at(-basis[i])) / eps**2
        for j in range(i + 1, d):
            pp = at(basis[i] + basis[j])
            pm = at(basis[i] - basis[j])
            mp = at(-basis[i] + basis[j])
            mm = at(-basis[i] - basis[j])
            hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4 * eps**2)
    return hess


# ---------------------------------------------------------------------------
# vectorised estimators over many prefixes


def _unit_bumps(view: PrefixView, eps: np.ndarray) -> list[np.ndarray]:
    d = view.dim
    shape = eps.shape + (d,)
    out = []
    for i in range(d):
        b = np.zeros(shape)
        b[..., i] = eps
        out.append(b)
    return out


def vertical_along(F: Functional, view: PrefixView, cfg: FDConfig = FDConfig(), f0=None) -> VerticalDerivative:
    eps = cfg.eps_for(view.end)
    if f0 is None:
        f0 = F.values(view)
    cols_c, cols_r, cols_l = [], [], []
    for b in _unit_bumps(view, eps):
        up = F.values(view.bumped(b))
        down = F.values(view.bumped(-b))
        cols_c.append((up - down) / (2 * eps))
        cols_r.append((up - f0) / eps)
        cols_l.append((f0 - down) / eps)
    central = np.stack(cols_c, axis=-1)
    right = np.stack(cols_r, axis=-1)
    left = np.stack(cols_l, axis=-1)
    grad = central if cfg.scheme == "central" else right
    return VerticalDerivative(grad, right, left, _flag(central, right, left, cfg.nondiff_tol))


def second_vertical_along(F: Functional, view: PrefixView, cfg: FDConfig = FDConfig(), f0=None) -> np.ndarray:
    eps = cfg.eps_for(view.end)
    if f0 is None:
        f0 = F.values(view)
    bumps = _unit_bumps(view, eps)
    d = view.dim
    out = np.empty(f0.shape + (d, d))
    e2 = eps**2

    def at(b):
        return F.values(view.bumped(b))

    for i in range(d):
        out[..., i, i] = (at(bumps[i]) - 2 * f0 + at(-bumps[i])) / e2
        for j in range(i + 1, d):
            pp = at(bumps[i] + bumps[j])
            pm = at(bumps[i] - bumps[j])
            mp = at(-bumps[i] + bumps[j])
            mm = at(-bumps[i] - bumps[j])
            out[..., i, j] = out[..., j, i] = (pp - pm - mp + mm) / (4 * e2)
    return out


def horizontal_steps(view: PrefixView, cfg: FDConfig = FDConfig(), horizon: float | None = None) -> np.ndarray:
    """Horizontal step per prefix: ``h_horizontal`` or the next grid step."""
    times, idx = view.times, view.index
    T = float(times[-1]) if horizon is None else float(horizon)
    if cfg.h_horizontal is not None:
        h = np.full(idx.shape, float(cfg.h_horizontal))
    else:
        nxt = np.minimum(idx + 1, times.size - 1)
        prv = np.maximum(idx - 1, 0)
        h = np.where(idx + 1 < times.size, times[nxt] - times[idx], times[idx] - times[prv])
    room = T - times[idx]
    if np.any(room <= 0):
        raise DomainError("no room for a horizontal extension before the horizon")
    return np.where(times[idx] + h > T + 1e-12 * max(1.0, T), room / 2.0, h)


def horizontal_along(F: Functional, view: PrefixView, cfg: FDConfig = FDConfig(), horizon=None, f0=None, h=None) -> np.ndarray:
    if h is None:
        h = horizontal_steps(view, cfg, horizon)
    if f0 is None:
        f0 = F.values(view)
    return (F.values(view.extended(h)) - f0) / h


def fd_jets(F: Functional, view: PrefixView, cfg: FDConfig = FDConfig(), horizon=None):
    """``(horizontal, vertical, hessian)`` by finite differences on every prefix."""
    f0 = F.values(view)
    hor = horizontal_along(F, view, cfg, horizon, f0=f0)
    vert = vertical_along(F, view, cfg, f0=f0)
    hess = second_vertical_along(F, view, cfg, f0=f0)
    return hor, vert, hess


def horizontal_mesh_agreement(F: Functional, p: LiftedPath, h: float, tol: float = 1e-2, horizon=None) -> tuple[float, float, bool]:
    """Horizontal estimates at ``h`` and ``h/2`` and whether they agree.

    Disagreement beyond ``tol * (1 + |estimate|)`` marks a mesh-dependent
    (non-differentiable) horizontal behaviour.
    """
    a = horizontal_derivative_fd(F, p, FDConfig(h_horizontal=h), horizon)
    b = horizontal_derivative_fd(F, p, FDConfig(h_horizontal=h / 2), horizon)
    return a, b, bool(abs(a - b) <= tol * (1.0 + abs(a)))


# ---------------------------------------------------------------------------
# analytic jet vs finite differences


def relative_error(estimate, exact) -> np.ndarray:
    """``|estimate - exact| / max(1, |exact|)``."""
    exact = np.asarray(exact)
    return np.abs(np.asarray(estimate) - exact) / np.maximum(1.0, np.abs(exact))


@dataclass
class JetCheckReport:
    functional: str
    max_error: dict[str, float]
    tolerance: dict[str, float]
    points: int

    @property
    def passed(self) -> bool:
        return all(self.max_error[k] <= self.tolerance[k] for k in self.tolerance)


DEFAULT_JET_TOLERANCE = {"horizontal": 1e-2, "gradient": 1e-6, "hessian": 1e-4}


def jet_consistency_check(F: Functional, paths, cfg: FDConfig = FDConfig(), tolerance=None, horizon=None) -> JetCheckReport:
    """Compare the analytic jet with finite differences at every interior grid time.

    ``paths`` is a sequence of :class:`LiftedPath` on a common grid, or a
    ``(times, x, v)`` batch.  Errors are relative with a unit floor.
    """
    if not F.has_jet:
        raise ContractError(f"{F.name} has no analytic jet to check")
    tolerance = dict(DEFAULT_JET_TOLERANCE if tolerance is None else tolerance)
    if isinstance(paths, tuple):
        times, x, v = paths
        x_left = x
    else:
        paths = list(paths)
        times = paths[0].times
        x = np.stack([p.x.values for p in paths])
        x_left = np.stack([p.x.left_values for p in paths])
        v = np.stack([p.v.values for p in paths])
    view = PrefixView.along(times, x, v, x_left=x_left, index=np.arange(len(times) - 1))
    an_h, an_g, an_H = F.jets(view)
    fd_h, fd_v, fd_H = fd_jets(F, view, cfg, horizon)
    errs = {
        "horizontal": float(np.max(relative_error(fd_h, an_h))),
        "gradient": float(np.max(relative_error(fd_v.gradient, an_g))),
        "hessian": float(np.max(relative_error(fd_H, an_H))),
    }
    return JetCheckReport(F.name, errs, tolerance, int(an_h.size))
