"""Martingale representation: hedge ratios and the Malliavin lift.

``Y(t) = E[H | F_t]`` for Brownian payoffs is computed by deterministic
Gauss-Hermite smoothing, so ``Y`` is itself a smooth non-anticipative
functional and its vertical derivative can be taken by finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .derivatives import FDConfig, relative_error, vertical_along
from .errors import DomainError
from .functionals import C12_B, IRREGULAR, Functional, PrefixView
from .paths import GridPath, LiftedPath, hold_index, horizontal_extend, restrict, vertical_bump
from .simulation import PathBatch, SimulationConfig, simulate

DEFAULT_NODES = 64
MIN_NODES = 5


def gauss_hermite(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against the standard normal density."""
    if nodes < MIN_NODES:
        raise DomainError(f"need at least {MIN_NODES} quadrature nodes, got {nodes}")
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    return z, w / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MartingaleFunctional:
    """``Y(t) = E[H | F_t]`` as a functional, with the payoff it comes from.

    ``malliavin_derivative(path, t)`` is the anticipative ``D_t H`` on a full
    path; ``conditional_malliavin(view)`` evaluates ``E[D_t H | F_t]`` on
    prefixes (the right-hand side of the lifting relation).
    """

    base: Functional
    terminal_payoff: Callable[[GridPath], float]
    horizon: float
    malliavin_derivative: Optional[Callable[[GridPath, float], np.ndarray]] = None
    conditional_malliavin: Optional[Callable[[PrefixView], np.ndarray]] = None
    integrand: Optional[Callable[[PrefixView], np.ndarray]] = None
    # analytic vertical gradient alone, cheaper than the full jet
    gradient: Optional[Callable[[PrefixView], np.ndarray]] = None

    @property
    def name(self) -> str:
        return self.base.name


@dataclass(frozen=True)
class TerminalPayoff:
    """``H = g(W(T))`` with derivatives ``dg``, ``d2g`` (d = 1)."""

    g: Callable
    dg: Callable
    d2g: Optional[Callable] = None
    name: str = "terminal"


@dataclass(frozen=True)
class CylindricalIncrement:
    """``H = f(W(t_1), ..., W(t_n)) (W(T) - W(t_n))``."""

    times: tuple
    f: Callable
    name: str = "cylindrical_increment"


def _smoothing(view: PrefixView, T: float, fn: Callable, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    s = np.sqrt(np.maximum(T - view.t, 0.0))
    x = view.end[..., 0]
    # accumulate node by node: a (paths, prefixes, nodes) array does not fit in memory
    out = np.zeros(x.shape)
    for zk, wk in zip(z, w):
        out += wk * fn(x + s * zk)
    return out


def terminal_functional(payoff: TerminalPayoff, horizon: float = 1.0, nodes: int = DEFAULT_NODES) -> MartingaleFunctional:
    z, w = gauss_hermite(nodes)
    T = float(horizon)

    def evaluator(view):
        return _smoothing(view, T, payoff.g, z, w)

    jet = None
    if payoff.d2g is not None:

        def jet(view):
            d1 = _smoothing(view, T, payoff.dg, z, w)
            d2 = _smoothing(view, T, payoff.d2g, z, w)
            # backward heat equation: dY/dt = -0.5 d2Y/dx2
            return -0.5 * d2, d1[..., None], d2[..., None, None]

    base = Functional(f"terminal:{payoff.name}", evaluator, jet, C12_B, True, dim=1)

    def gradient(view):
        return _smoothing(view, T, payoff.dg, z, w)[..., None]

    def cond_malliavin(view):
        # E[g'(W(T)) | F_t]: same smoothing as the gradient, applied to D_t H
        return _smoothing(view, T, payoff.dg, z, w)[..., None]

    return MartingaleFunctional(
        base,
        terminal_payoff=lambda path: float(payoff.g(path(T)[0])),
        horizon=T,
        malliavin_derivative=lambda path, t: np.atleast_1d(payoff.dg(path(T)[0])).astype(float),
        conditional_malliavin=cond_malliavin,
        gradient=gradient,
    )


def nested_mc_functional(payoff: TerminalPayoff, horizon: float = 1.0, samples: int = 20000, seed: int = 0) -> MartingaleFunctional:
    """Slow oracle: ``E[g(x(t) + sqrt(T-t) Z)]`` by Monte Carlo with frozen draws."""
    z = np.random.default_rng(seed).standard_normal(samples)
    w = np.full(samples, 1.0 / samples)
    T = float(horizon)

    def evaluator(view):
        return _smoothing(view, T, payoff.g, z, w)

    base = Functional(f"terminal_mc:{payoff.name}", evaluator, None, C12_B, True, dim=1)
    return MartingaleFunctional(base, lambda path: float(payoff.g(path(T)[0])), T)


def stochastic_integral_functional(terms, horizon: float = 1.0, name="stochastic_integral") -> MartingaleFunctional:
    """``Y = int phi dX`` for a sum of cylindrical integrands.

    Each term ``(times, f)`` stands for ``phi(t) = f(X(t_1), .., X(t_n)) 1_{t > t_n}``
    and contributes ``f(x(t_1-), .., x(t_n-)) (x(t) - x(t_n-)) 1_{t >= t_n}``.
    On a grid the integrand at ``t_i`` is the value carried on ``(t_i, t_{i+1}]``,
    so it switches on at ``t_n`` itself and the left-point sum telescopes.
    ``f`` maps stacked values of shape ``(..., n)`` to ``(...)``.
    """
    terms = [(np.asarray(ts, dtype=float).reshape(-1), f) for ts, f in terms]
    for ts, _ in terms:
        if ts.size == 0 or np.any(np.diff(ts) <= 0) or ts[0] < 0 or ts[-1] >= horizon:
            raise DomainError("cylinder times must be increasing in [0, T)")
    T = float(horizon)

    def parts(view, ts, f):
        lefts = np.stack([view.left_value_at(s)[..., 0] for s in ts], axis=-1)
        on = (view.t >= ts[-1] - 1e-12 * max(1.0, T)).astype(float)
        return lefts, on * f(lefts)

    def integrand(view):
        out = 0.0
        for ts, f in terms:
            out = out + parts(view, ts, f)[1]
        return out

    def evaluator(view):
        out = 0.0
        for ts, f in terms:
            lefts, weight = parts(view, ts, f)
            out = out + weight * (view.end[..., 0] - lefts[..., -1])
        return out + np.zeros(view.batch_shape + view.index.shape)

    def jet(view):
        phi = integrand(view) + np.zeros(view.batch_shape + view.index.shape)
        return 0.0, phi[..., None], 0.0

    def payoff(path: GridPath) -> float:
        lp = LiftedPath(path, GridPath(path.times, np.ones((path.times.size, 1, 1))))
        return float(evaluator(PrefixView.of_path(lp))[0])

    base = Functional(name, evaluator, jet, C12_B, True, dim=1)
    return MartingaleFunctional(base, payoff, T, integrand=integrand)


def conditional_expectation_functional(payoff, quadrature_nodes: int = DEFAULT_NODES, horizon: float = 1.0, method: str = "quadrature", **kw) -> MartingaleFunctional:
    """``Y(t) = E[H | F_t]`` under Brownian motion for the supported payoff families."""
    if isinstance(payoff, TerminalPayoff):
        if method == "quadrature":
            return terminal_functional(payoff, horizon, quadrature_nodes)
        if method == "nested_mc":
            return nested_mc_functional(payoff, horizon, **kw)
        raise DomainError(f"unknown method {method!r}")
    if isinstance(payoff, CylindricalIncrement):
        gauss_hermite(quadrature_nodes)
        return stochastic_integral_functional([(payoff.times, payoff.f)], horizon, name=payoff.name)
    raise DomainError(f"unsupported payoff {payoff!r}")


def lookback_functional(horizon: float = 1.0, inner_steps: int = 64, samples: int = 4000, seed: int = 0) -> MartingaleFunctional:
    """``E[max_{u<=T} W(u) | F_t]`` by nested Monte Carlo (experimental).

    The remaining maximum is sampled once from scaled discrete random walks
    and reused, so the functional is deterministic.  No closed form is used.
    """
    rng = np.random.default_rng(seed)
    walks = np.cumsum(rng.standard_normal((samples, inner_steps)) / math.sqrt(inner_steps), axis=1)
    unit_max = np.maximum(walks.max(axis=1), 0.0)
    T = float(horizon)

    def evaluator(view):
        both = np.maximum(view.x[..., 0], view.x_left[..., 0])
        cm = np.maximum.accumulate(both, axis=-1)
        prior = np.concatenate([np.full(cm.shape[:-1] + (1,), -np.inf), cm[..., :-1]], axis=-1)[..., view.index]
        m = np.maximum(prior, view.end_left[..., 0])
        x = view.end[..., 0]
        s = np.sqrt(np.maximum(T - view.t, 0.0))
        cur = np.maximum(m, x)
        total = np.zeros(x.shape)
        for block in np.array_split(unit_max, max(1, unit_max.size // 256)):
            fut = x[..., None] + s[:, None] * block
            total += np.sum(np.maximum(cur[..., None], fut), axis=-1)
        return total / unit_max.size

    base = Functional("lookback", evaluator, None, IRREGULAR, True, dim=1)

    def payoff(path: GridPath) -> float:
        return float(max(np.max(path.values[:, 0]), np.max(path.left_values[:, 0])))

    return MartingaleFunctional(base, payoff, T)


# ---------------------------------------------------------------------------
# hedging and representation residuals


def _arrays(p):
    if isinstance(p, LiftedPath):
        return p.times, p.x.values, p.x.left_values, p.v.values
    if isinstance(p, PathBatch):
        return p.times, p.x, p.x, p.v
    raise TypeError(f"expected LiftedPath or PathBatch, got {type(p).__name__}")


def hedge_process(Y: MartingaleFunctional, p, cfg: FDConfig = FDConfig(), jet_source: str = "fd") -> np.ndarray:
    """Vertical derivative of ``Y.base`` on every prefix of ``p``, shape ``(..., n+1, d)``."""
    times, x, x_left, v = _arrays(p)
    if abs(times[-1] - Y.horizon) > 1e-12 * max(1.0, Y.horizon):
        raise DomainError("path must span [0, T]")
    view = PrefixView.along(times, x, v, x_left=x_left)
    if jet_source == "fd":
        return vertical_along(Y.base, view, cfg).gradient
    if jet_source == "analytic":
        if Y.gradient is not None:
            return np.asarray(Y.gradient(view), dtype=float)
        return np.array(Y.base.jets(view)[1])
    raise DomainError(f"unknown jet source {jet_source!r}")


def representation_residual(Y: MartingaleFunctional, p, cfg: FDConfig = FDConfig(), jet_source: str = "fd"):
    """``Y(T) - Y(0) - sum phi(t_i) . (X_{i+1} - X_i)`` (float or per-path array)."""
    times, x, x_left, v = _arrays(p)
    phi = hedge_process(Y, p, cfg, jet_source)
    ends = Y.base.values(PrefixView.along(times, x, v, x_left=x_left, index=np.array([0, len(times) - 1])))
    gains = np.sum(np.einsum("...ni,...ni->...n", phi[..., :-1, :], np.diff(x, axis=-2)), axis=-1)
    res = ends[..., 1] - ends[..., 0] - gains
    return float(res) if isinstance(p, LiftedPath) else res


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    samples: int

    @classmethod
    def of(cls, values) -> "MCEstimate":
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size < 2:
            raise DomainError("need at least two samples")
        return cls(float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size)), int(values.size))


@dataclass(frozen=True)
class IBPResult:
    lhs: MCEstimate
    rhs: MCEstimate

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.lhs.stderr, self.rhs.stderr)

    @property
    def z_score(self) -> float:
        gap = abs(self.lhs.mean - self.rhs.mean)
        if self.combined_stderr == 0:
            return 0.0 if gap == 0 else math.inf
        return gap / self.combined_stderr


def _chunks(total: int, size: int):
    for start in range(0, total, size):
        yield np.arange(start, min(total, start + size))


def ibp_samples(pairs, batch: PathBatch, cfg: FDConfig = FDConfig(), jet_source="analytic"):
    """Per-path ``(Y(T)-Y(0))(Z(T)-Z(0))`` and ``sum phi_Y A phi_Z dt`` for each pair.

    Each distinct martingale is evaluated and differentiated once per batch.
    """
    times = batch.times
    dt = np.diff(times)
    view = PrefixView.along(times, batch.x, batch.v, index=np.array([0, len(times) - 1]))
    ends, hedges = {}, {}
    for Y in {id(m): m for pair in pairs for m in pair}.values():
        y = Y.base.values(view)
        ends[id(Y)] = y[:, 1] - y[:, 0]
        hedges[id(Y)] = hedge_process(Y, batch, cfg, jet_source)[:, :-1]
    v = batch.v[:, :-1]
    out = []
    for Y, Z in pairs:
        lhs = ends[id(Y)] * ends[id(Z)]
        rhs = np.sum(np.einsum("mni,mnij,mnj->mn", hedges[id(Y)], v, hedges[id(Z)]) * dt, axis=-1)
        out.append((lhs, rhs))
    return out


def integration_by_parts_many(
    pairs,
    sim: SimulationConfig,
    cfg: FDConfig = FDConfig(),
    jet_source: str = "analytic",
    chunk: int = 1000,
    executor=None,
) -> list[IBPResult]:
    """Monte Carlo of both sides of ``E[Y(T)Z(T)] = E[int grad Y grad Z d[X]]``.

    Both martingales are centred by their time-0 values.  All ``(Y, Z)``
    pairs share the same seeded paths.  Paths are processed in chunks of
    consecutive indices; ``executor`` (a ``concurrent.futures`` executor) may
    run chunks in parallel, results are reassembled in index order.
    """
    if sim.model != "brownian":
        raise DomainError("integration by parts check runs under model='brownian'")
    pairs = list(pairs)

    def work(idx):
        return ibp_samples(pairs, simulate(sim, idx), cfg, jet_source)

    parts = list(_chunks(sim.path_count, chunk))
    results = list(executor.map(work, parts)) if executor is not None else [work(i) for i in parts]
    out = []
    for k in range(len(pairs)):
        lhs = np.concatenate([r[k][0] for r in results])
        rhs = np.concatenate([r[k][1] for r in results])
        out.append(IBPResult(MCEstimate.of(lhs), MCEstimate.of(rhs)))
    return out


def integration_by_parts_mc(Y, Z, sim: SimulationConfig, cfg: FDConfig = FDConfig(), jet_source="analytic", chunk=1000, executor=None) -> IBPResult:
    return integration_by_parts_many([(Y, Z)], sim, cfg, jet_source, chunk, executor)[0]


@dataclass
class LiftingReport:
    functional: str
    checkpoints: np.ndarray
    max_discrepancy: float
    per_checkpoint: np.ndarray


def checkpoint_indices(times: np.ndarray, count: int) -> np.ndarray:
    """``count`` grid indices at (or just below) ``j T / count``, ``j = 0..count-1``."""
    T = times[-1]
    target = T * np.arange(count) / count
    idx = np.searchsorted(times, target + 1e-12 * max(1.0, T), side="right") - 1
    return np.unique(idx)


def lifting_check(Y: MartingaleFunctional, sim: SimulationConfig, cfg: FDConfig = FDConfig(), checkpoints=8) -> LiftingReport:
    """Compare ``grad_W E[H|F_t]`` (finite differences) with ``E[D_t H | F_t]``.

    ``checkpoints`` is a count of equally spaced times or a list of times in
    ``[0, T]`` (held to the grid).  Discrepancies are relative with a unit floor.
    """
    if sim.model != "brownian":
        raise DomainError("lifting check requires model='brownian'")
    if Y.conditional_malliavin is None:
        raise DomainError(f"{Y.name} has no Malliavin derivative")
    batch = simulate(sim)
    if np.ndim(checkpoints) == 0:
        idx = checkpoint_indices(batch.times, int(checkpoints))
    else:
        ts = np.asarray(checkpoints, dtype=float)
        if np.any(ts < 0) or np.any(ts > sim.horizon):
            raise DomainError("checkpoints must lie in [0, T]")
        idx = np.unique(np.atleast_1d(hold_index(batch.times, ts)))
    view = PrefixView.along(batch.times, batch.x, batch.v, index=idx)
    left = vertical_along(Y.base, view, cfg).gradient
    right = Y.conditional_malliavin(view)
    err = np.max(relative_error(left, right), axis=(0, -1))
    return LiftingReport(Y.name, batch.times[idx], float(np.max(err)), err)


def scenario_conditional_malliavin(Y: MartingaleFunctional, p: LiftedPath, t: float, nodes: int = DEFAULT_NODES) -> np.ndarray:
    """``E[D_t H | F_t]`` for a terminal payoff, built from explicit scenario paths.

    For each quadrature node the prefix ``[0, t]`` is frozen up to ``T`` and
    its endpoint shifted by ``sqrt(T - t) z_k``; this reproduces the law of
    ``W(T)`` given ``F_t``.  Slow, used to cross-check ``conditional_malliavin``.
    """
    if Y.malliavin_derivative is None:
        raise DomainError(f"{Y.name} has no Malliavin derivative")
    z, w = gauss_hermite(nodes)
    pre = restrict(p.x, t)
    s = math.sqrt(max(Y.horizon - t, 0.0))
    base = horizontal_extend(pre, Y.horizon - t, step=Y.horizon - t) if Y.horizon > t else pre
    total = 0.0
    for zk, wk in zip(z, w):
        scen = vertical_bump(base, np.array([s * zk]))
        total = total + wk * Y.malliavin_derivative(scen, t)
    return np.asarray(total, dtype=float)


# ---------------------------------------------------------------------------
# string ids

TERMINAL_PAYOFFS = {
    "x": TerminalPayoff(lambda y: y, lambda y: np.ones_like(y), lambda y: np.zeros_like(y), "x"),
    "x2": TerminalPayoff(lambda y: y * y, lambda y: 2.0 * y, lambda y: 2.0 * np.ones_like(y), "x2"),
}


def exp_payoff(horizon: float = 1.0) -> TerminalPayoff:
    """``H = exp(W(T) - T/2)``, so ``D_t H = H``."""
    c = 0.5 * horizon
    return TerminalPayoff(lambda y: np.exp(y - c), lambda y: np.exp(y - c), lambda y: np.exp(y - c), "exp")


def _doleans_martingale(horizon: float) -> MartingaleFunctional:
    from .functionals import doleans_functional

    base = doleans_functional()

    def payoff(path: GridPath) -> float:
        lp = LiftedPath(path, GridPath(path.times, np.ones((path.times.size, 1, 1))))
        return base.evaluate(lp)

    return MartingaleFunctional(base, payoff, float(horizon))


def resolve_martingale(mid: str, horizon: float = 1.0, nodes: int = DEFAULT_NODES, experimental: bool = False) -> MartingaleFunctional:
    """Martingale functional by id: ``terminal:x|x2|exp``, ``doleans``,
    ``cylindrical_increment:t1,..,tn`` (with ``f = 1``), ``lookback``."""
    head, _, arg = mid.partition(":")
    if head == "terminal":
        if arg == "exp":
            return terminal_functional(exp_payoff(horizon), horizon, nodes)
        if arg in TERMINAL_PAYOFFS:
            return terminal_functional(TERMINAL_PAYOFFS[arg], horizon, nodes)
        raise DomainError(f"unknown terminal payoff {arg!r}")
    if head == "doleans":
        return _doleans_martingale(horizon)
    if head == "cylindrical_increment":
        times = tuple(float(s) for s in (arg or "0.5").split(","))
        pay = CylindricalIncrement(times, lambda y: np.ones(y.shape[:-1]), f"cylindrical_increment:{arg or '0.5'}")
        return conditional_expectation_functional(pay, nodes, horizon)
    if head == "lookback":
        if not experimental:
            raise DomainError("the lookback payoff is experimental; pass --experimental")
        return lookback_functional(horizon)
    raise DomainError(f"unknown martingale id {mid!r}")
