"""Non-anticipative functionals and the catalog of worked examples.

Every functional is evaluated through a :class:`PrefixView`: a set of
prefixes ``[0, t_i]`` of one grid path (or a batch of paths sharing a grid),
each optionally bumped at its endpoint or horizontally extended.  Evaluators
only ever read samples with index ``<= i`` for prefix ``i``; this is what makes
the functional non-anticipative, and it lets the Itô engine sweep a whole path
in a handful of array operations instead of one call per grid point.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, DomainError
from .paths import LiftedPath, hold_index

C00_L = "C00_l"
C12_B = "C12_b"
IRREGULAR = "irregular"

_TIME_RTOL = 1e-12


@dataclass(frozen=True)
class DerivativeJet:
    horizontal: float
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        if not np.allclose(h, h.T, rtol=0.0, atol=1e-12 * max(1.0, np.max(np.abs(h), initial=0.0))):
            raise DomainError("hessian must be symmetric")


@dataclass(frozen=True)
class PrefixView:
    """Prefixes ``[0, times[i]]`` of grid paths, for each ``i`` in ``index``.

    ``x``/``x_left`` have shape ``(..., n+1, d)`` and ``v`` ``(..., n+1, d, d)``;
    leading axes index independent paths on the shared grid ``times``.
    ``bump`` (shape ``(..., k, d)``) shifts each prefix endpoint, keeping its
    left limit; ``extension`` (shape ``(k,)``) freezes each prefix at its
    endpoint and prolongs it by that much time.
    """

    times: np.ndarray
    x: np.ndarray
    x_left: np.ndarray
    v: np.ndarray
    index: np.ndarray
    bump: Optional[np.ndarray] = None
    extension: Optional[np.ndarray] = None

    @classmethod
    def of_path(cls, p: LiftedPath, index=None) -> "PrefixView":
        idx = np.array([p.times.size - 1]) if index is None else np.asarray(index, dtype=int)
        return cls(p.times, p.x.values, p.x.left_values, p.v.values, idx)

    @classmethod
    def along(cls, times, x, v, x_left=None, index=None) -> "PrefixView":
        times = np.asarray(times, dtype=float)
        x = np.asarray(x, dtype=float)
        idx = np.arange(times.size) if index is None else np.asarray(index, dtype=int)
        return cls(times, x, x if x_left is None else np.asarray(x_left, dtype=float), np.asarray(v), idx)

    def bumped(self, bump) -> "PrefixView":
        return replace(self, bump=np.asarray(bump, dtype=float))

    def extended(self, h) -> "PrefixView":
        h = np.broadcast_to(np.asarray(h, dtype=float), self.index.shape)
        return replace(self, extension=h)

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.x.shape[:-2]

    @property
    def t(self) -> np.ndarray:
        """Horizon of each prefix, shape ``(k,)``."""
        t = self.times[self.index]
        return t if self.extension is None else t + self.extension

    @property
    def end(self) -> np.ndarray:
        """Endpoint value of each prefix (bump included), shape ``(..., k, d)``."""
        e = self.x[..., self.index, :]
        return e if self.bump is None else e + self.bump

    @property
    def end_left(self) -> np.ndarray:
        return self.x_left[..., self.index, :]

    @property
    def v_end(self) -> np.ndarray:
        return self.v[..., self.index, :, :]

    def _tol(self) -> float:
        return _TIME_RTOL * max(1.0, float(self.times[-1]))

    def cumulative(self, rate: np.ndarray) -> np.ndarray:
        """Left-rectangle integral of a per-sample ``rate`` over each prefix.

        ``rate`` has shape ``(..., n+1, *rest)``; the extension piece uses the
        frozen endpoint rate.
        """
        rest = rate.ndim - len(self.batch_shape) - 1
        dt = np.diff(self.times)
        dt = dt.reshape(dt.shape + (1,) * rest)
        axis = len(self.batch_shape)
        head = np.take(rate, np.arange(self.times.size - 1), axis=axis)
        cum = np.cumsum(head * dt, axis=axis)
        zero = np.zeros_like(np.take(rate, [0], axis=axis))
        cum = np.concatenate([zero, cum], axis=axis)
        out = np.take(cum, self.index, axis=axis)
        if self.extension is not None:
            ext = self.extension.reshape(self.extension.shape + (1,) * rest)
            out = out + np.take(rate, self.index, axis=axis) * ext
        return out

    def _gather(self, arr: np.ndarray, j: np.ndarray) -> np.ndarray:
        return arr[..., j, :]

    def value_at(self, s) -> np.ndarray:
        """Cadlag-hold value ``x(s)`` on each prefix; ``s`` scalar or shape ``(k,)``."""
        s = np.broadcast_to(np.asarray(s, dtype=float), self.index.shape)
        j = hold_index(self.times, s)
        j = np.atleast_1d(j)
        before_zero = s < -self._tol()
        past = (j < self.index) & ~before_zero
        out = np.where(past[:, None], self._gather(self.x, np.minimum(j, self.index)), self.end)
        # times before 0 read x(0-), which ignores any bump or jump at 0
        return np.where(before_zero[:, None], self.x_left[..., :1, :], out)

    def left_value_at(self, s) -> np.ndarray:
        """Left limit ``x(s-)`` on each prefix (``x(0-)`` is read as ``x(0)``)."""
        s = np.broadcast_to(np.asarray(s, dtype=float), self.index.shape)
        j = np.atleast_1d(hold_index(self.times, s))
        on_grid = np.abs(self.times[j] - s) <= self._tol()
        jj = np.minimum(j, self.index)
        from_left = self._gather(self.x_left, jj)
        from_value = self._gather(self.x, jj)
        cand = np.where(on_grid[:, None], from_left, from_value)
        # at the prefix endpoint itself the left limit ignores any bump
        at_end = on_grid & (j == self.index)
        cand = np.where(at_end[:, None], self.end_left, cand)
        inside = (j < self.index) | at_end
        return np.where(inside[:, None], cand, self.end)


@dataclass(frozen=True)
class Functional:
    """A non-anticipative functional ``F_t(x_t, v_t)``.

    ``evaluator`` maps a :class:`PrefixView` to values of shape ``(..., k)``.
    ``jet_evaluator``, when present, returns ``(horizontal, gradient,
    hessian)`` arrays of shapes ``(..., k)``, ``(..., k, d)``, ``(..., k, d, d)``.
    ``declared_class`` is a label asserted by the constructor, never checked.
    """

    name: str
    evaluator: Callable[[PrefixView], np.ndarray]
    jet_evaluator: Optional[Callable[[PrefixView], tuple]] = None
    declared_class: str = C12_B
    predictable_in_v: bool = True
    dim: Optional[int] = None
    one_sided: Optional[Callable[[PrefixView], tuple]] = field(default=None, compare=False)

    @property
    def has_jet(self) -> bool:
        return self.jet_evaluator is not None

    def _check_dim(self, view: PrefixView) -> None:
        if self.dim is not None and view.dim != self.dim:
            raise DomainError(f"{self.name} requires d={self.dim}, got d={view.dim}")

    def values(self, view: PrefixView) -> np.ndarray:
        self._check_dim(view)
        return np.asarray(self.evaluator(view), dtype=float)

    def jets(self, view: PrefixView) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.jet_evaluator is None:
            raise ContractError(f"{self.name} has no analytic jet")
        self._check_dim(view)
        d = view.dim
        shape = view.batch_shape + view.index.shape
        dt, g, h = self.jet_evaluator(view)
        return (
            np.broadcast_to(np.asarray(dt, dtype=float), shape),
            np.broadcast_to(np.asarray(g, dtype=float), shape + (d,)),
            np.broadcast_to(np.asarray(h, dtype=float), shape + (d, d)),
        )

    def evaluate(self, p: LiftedPath) -> float:
        return float(self.values(PrefixView.of_path(p))[0])

    def jet(self, p: LiftedPath) -> DerivativeJet:
        dt, g, h = self.jets(PrefixView.of_path(p))
        return DerivativeJet(float(dt[0]), np.array(g[0]), np.array(h[0]))

    def along(self, p: LiftedPath) -> np.ndarray:
        """Values on every prefix of ``p``."""
        return self.values(PrefixView.of_path(p, np.arange(p.times.size)))


def _scalar(x: np.ndarray) -> np.ndarray:
    return x[..., 0]


def _trace(v: np.ndarray) -> np.ndarray:
    return np.trace(v, axis1=-2, axis2=-1)


# ---------------------------------------------------------------------------
# worked examples


def smooth_functional(f, dt_f=None, grad_f=None, hess_f=None, name="smooth") -> Functional:
    """``F_t(x, v) = f(t, x(t))``.

    ``f(t, x)`` receives ``t`` of shape ``(k,)`` and ``x`` of shape
    ``(..., k, d)`` and returns ``(..., k)``; the derivative callables follow
    the same convention and return ``(..., k)``, ``(..., k, d)`` and
    ``(..., k, d, d)``.
    """

    def evaluator(view):
        return f(view.t, view.end)

    jet = None
    if dt_f is not None and grad_f is not None and hess_f is not None:

        def jet(view):
            t, x = view.t, view.end
            return dt_f(t, x), grad_f(t, x), hess_f(t, x)

    return Functional(name, evaluator, jet, C12_B, True)


def _check_increasing(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise DomainError("cylinder times must be non-negative and strictly increasing")
    return times


def cylindrical_functional(times, g, h, dh=None, d2h=None, horizon=None, dim=1, name="cylindrical") -> Functional:
    """``h(x(t) - x(t_n-)) 1_{t >= t_n} g(x(t_1-), ..., x(t_n-))``.

    ``g`` takes the stacked left limits, shape ``(..., k, n, d)``; ``h`` and
    its derivatives take increments of shape ``(..., k, d)``.
    """
    times = _check_increasing(times)
    if horizon is not None and times[-1] >= horizon:
        raise DomainError("last cylinder time must lie before the horizon")
    if abs(float(np.asarray(h(np.zeros((1, dim))))[0])) > 0:
        raise DomainError("h must vanish at 0")
    t_n = times[-1]

    def parts(view):
        lefts = np.stack([view.left_value_at(s) for s in times], axis=-2)
        incr = view.end - lefts[..., -1, :]
        on = (view.t >= t_n - _TIME_RTOL * max(1.0, t_n)).astype(float)
        return incr, on * g(lefts)

    def evaluator(view):
        incr, weight = parts(view)
        return h(incr) * weight

    jet = None
    if dh is not None and d2h is not None:

        def jet(view):
            incr, weight = parts(view)
            return 0.0, dh(incr) * weight[..., None], d2h(incr) * weight[..., None, None]

    return Functional(name, evaluator, jet, C12_B, True)


def qv_integral_functional(g, name="qv_integral") -> Functional:
    """``F_t = int_0^t g(x(u)) tr v(u) du`` by left-rectangle quadrature.

    For ``d = 1`` the trace is just ``v``.
    """

    def rate(view):
        return g(view.x) * _trace(view.v)

    def evaluator(view):
        return view.cumulative(rate(view))

    def jet(view):
        hor = g(view.end) * _trace(view.v_end)
        return hor, 0.0, 0.0

    return Functional(name, evaluator, jet, C12_B, True)


def _qv(view) -> np.ndarray:
    return view.cumulative(view.v[..., 0, 0])


def quadratic_martingale_functional() -> Functional:
    """``x(t)^2 - int_0^t v(u) du`` (d = 1)."""

    def evaluator(view):
        return _scalar(view.end) ** 2 - _qv(view)

    def jet(view):
        x = view.end
        return -view.v_end[..., 0, 0], 2.0 * x, 2.0 * np.ones_like(x)[..., None]

    return Functional("quadratic_martingale", evaluator, jet, C12_B, True, dim=1)


def doleans_functional() -> Functional:
    """``exp(x(t) - 0.5 int_0^t v(u) du)`` (d = 1)."""

    def evaluator(view):
        return np.exp(_scalar(view.end) - 0.5 * _qv(view))

    def jet(view):
        f = evaluator(view)
        return -0.5 * view.v_end[..., 0, 0] * f, f[..., None], f[..., None, None]

    return Functional("doleans", evaluator, jet, C12_B, True, dim=1)


# ---------------------------------------------------------------------------
# obstructions to regularity


def delayed_functional(eps: float) -> Functional:
    """``x(t - eps)``; ``x`` before time 0 is read as ``x(0-)``."""
    if eps <= 0:
        raise DomainError("delay must be positive")

    def evaluator(view):
        return _scalar(view.value_at(view.t - eps))

    return Functional(f"delayed:{eps:g}", evaluator, None, IRREGULAR, True, dim=1)


def current_jump_functional() -> Functional:
    def evaluator(view):
        return _scalar(view.end - view.left_value_at(view.t))

    return Functional("current_jump", evaluator, None, IRREGULAR, True, dim=1)


def fixed_time_jump_functional(t0: float) -> Functional:
    if t0 <= 0:
        raise DomainError("jump time must be positive")

    def evaluator(view):
        on = (view.t >= t0 - _TIME_RTOL * max(1.0, t0)).astype(float)
        return on * _scalar(view.value_at(t0) - view.left_value_at(t0))

    return Functional(f"fixed_time_jump:{t0:g}", evaluator, None, IRREGULAR, True, dim=1)


def _running_max_before(view) -> np.ndarray:
    """sup of x over [0, t) on each prefix, left limit at t included."""
    both = np.maximum(view.x[..., 0], view.x_left[..., 0])
    cm = np.maximum.accumulate(both, axis=-1)
    shifted = np.concatenate([np.full(cm.shape[:-1] + (1,), -np.inf), cm[..., :-1]], axis=-1)
    prior = shifted[..., view.index]
    return np.maximum(prior, view.end_left[..., 0])


def running_max_functional() -> Functional:
    """``sup_{s <= t} x(s)`` (d = 1).

    Not vertically differentiable where the endpoint attains the running
    max; ``one_sided`` reports the right and left vertical derivatives and
    the non-differentiability flag.
    """

    def evaluator(view):
        return np.maximum(_running_max_before(view), view.end[..., 0])

    def one_sided(view):
        m = _running_max_before(view)
        x = view.end[..., 0]
        right = (x >= m).astype(float)
        left = (x > m).astype(float)
        return right, left, x == m

    return Functional("running_max", evaluator, None, C00_L, True, dim=1, one_sided=one_sided)


def obstruction_functionals(eps: float = 0.25, t0: float = 0.5) -> dict[str, Functional]:
    return {
        "delayed": delayed_functional(eps),
        "current_jump": current_jump_functional(),
        "fixed_time_jump": fixed_time_jump_functional(t0),
        "running_max": running_max_functional(),
    }


# ---------------------------------------------------------------------------
# string ids used by the CLI


def _poly_smooth(kind: str) -> Functional:
    def zero_t(t, x):
        return np.zeros(x.shape[:-1])

    if kind == "x":
        return smooth_functional(
            lambda t, x: x[..., 0], zero_t, lambda t, x: np.ones_like(x), lambda t, x: np.zeros(x.shape + (1,)), "smooth:x"
        )
    if kind == "x2":
        return smooth_functional(
            lambda t, x: x[..., 0] ** 2,
            zero_t,
            lambda t, x: 2.0 * x,
            lambda t, x: 2.0 * np.ones(x.shape + (1,)),
            "smooth:x2",
        )
    if kind == "t":
        return smooth_functional(
            lambda t, x: np.broadcast_to(t, x.shape[:-1]) + 0.0,
            lambda t, x: np.ones(x.shape[:-1]),
            lambda t, x: np.zeros_like(x),
            lambda t, x: np.zeros(x.shape + (1,)),
            "smooth:t",
        )
    if kind == "tx":
        return smooth_functional(
            lambda t, x: t * x[..., 0],
            lambda t, x: x[..., 0] + 0.0,
            lambda t, x: np.broadcast_to(t[:, None], x.shape) + 0.0,
            lambda t, x: np.zeros(x.shape + (1,)),
            "smooth:tx",
        )
    if kind == "sin":
        # exp(-t) sin(x): exercises both the time and space derivatives
        return smooth_functional(
            lambda t, x: np.exp(-t) * np.sin(x[..., 0]),
            lambda t, x: -np.exp(-t) * np.sin(x[..., 0]),
            lambda t, x: (np.exp(-t) * np.cos(x[..., 0]))[..., None],
            lambda t, x: (-np.exp(-t) * np.sin(x[..., 0]))[..., None, None],
            "smooth:sin",
        )
    raise DomainError(f"unknown smooth functional {kind!r}")


_QV_G = {
    "1": lambda x: np.ones(x.shape[:-1]),
    "x": lambda x: x[..., 0],
    "x2": lambda x: x[..., 0] ** 2,
}


def _cylindrical_from_id(arg: str) -> Functional:
    times_s, _, kind = arg.partition(":")
    times = [float(s) for s in times_s.split(",") if s]

    def g(lefts):
        return np.ones(lefts.shape[:-2])

    if kind in ("", "x"):
        return cylindrical_functional(
            times, g, lambda y: y[..., 0], lambda y: np.ones_like(y), lambda y: np.zeros(y.shape + (1,)),
            name=f"cylindrical:{arg}",
        )
    if kind == "x2":
        return cylindrical_functional(
            times, g, lambda y: y[..., 0] ** 2, lambda y: 2.0 * y, lambda y: 2.0 * np.ones(y.shape + (1,)),
            name=f"cylindrical:{arg}",
        )
    raise DomainError(f"unknown cylindrical kernel {kind!r}")


def resolve(functional_id: str) -> Functional:
    """Look up a catalog functional by its string id, e.g. ``smooth:x2``."""
    head, _, arg = functional_id.partition(":")
    if head == "smooth":
        return _poly_smooth(arg or "x")
    if head == "qv_integral":
        if (arg or "1") not in _QV_G:
            raise DomainError(f"unknown qv_integral integrand {arg!r}")
        return qv_integral_functional(_QV_G[arg or "1"], name=f"qv_integral:{arg or '1'}")
    if head == "quadratic_martingale":
        return quadratic_martingale_functional()
    if head == "doleans":
        return doleans_functional()
    if head == "cylindrical":
        return _cylindrical_from_id(arg or "0.5")
    if head == "running_max":
        return running_max_functional()
    if head == "delayed":
        return delayed_functional(float(arg or 0.25))
    if head == "current_jump":
        return current_jump_functional()
    if head == "fixed_time_jump":
        return fixed_time_jump_functional(float(arg or 0.5))
    raise DomainError(f"unknown functional id {functional_id!r}")


CATALOG_IDS = (
    "smooth:x",
    "smooth:x2",
    "smooth:t",
    "smooth:tx",
    "smooth:sin",
    "qv_integral:1",
    "qv_integral:x",
    "quadratic_martingale",
    "doleans",
    "cylindrical:0.25,0.5",
    "cylindrical:0.5:x2",
    "running_max",
    "delayed:0.25",
    "current_jump",
    "fixed_time_jump:0.5",
)
