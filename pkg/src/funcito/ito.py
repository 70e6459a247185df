"""Reconstruction of ``F_t(X_t, A_t) - F_0`` from the derivative jet along a path.

The three sums are non-anticipating Riemann sums: the ``i``-th summand only
uses the jet on the prefix ``[0, t_i]`` and the increment ``X_{i+1} - X_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .derivatives import FDConfig, fd_jets
from .errors import DomainError
from .functionals import Functional, PrefixView
from .paths import LiftedPath
from .simulation import PathBatch

QV_MODES = ("instantaneous", "realized")
JET_SOURCES = ("analytic", "fd")


@dataclass
class ItoDecomposition:
    """Terms of the functional Itô formula; fields are floats or per-path arrays."""

    lhs: float | np.ndarray
    drift_term: float | np.ndarray
    martingale_term: float | np.ndarray
    trace_term: float | np.ndarray
    residual: float | np.ndarray
    nondiff_flags: int | np.ndarray
    qv_mode: str

    def row(self, k: int | None = None) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = val if k is None or np.ndim(val) == 0 else val[k]
        return out


def _batch_arrays(p):
    if isinstance(p, LiftedPath):
        return p.times, p.x.values, p.x.left_values, p.v.values
    if isinstance(p, PathBatch):
        return p.times, p.x, p.x, p.v
    raise TypeError(f"expected LiftedPath or PathBatch, got {type(p).__name__}")


def jets_along(F: Functional, times, x, v, x_left=None, jet_source="analytic", cfg: FDConfig = FDConfig()):
    """Jets on the prefixes ``[0, t_i]``, ``i = 0..n-1``; returns ``(hor, grad, hess, flags)``."""
    view = PrefixView.along(times, x, v, x_left=x_left, index=np.arange(len(times) - 1))
    if jet_source == "analytic":
        hor, grad, hess = F.jets(view)
        flags = np.zeros(hor.shape, dtype=bool)
    elif jet_source == "fd":
        hor, vert, hess = fd_jets(F, view, cfg)
        grad, flags = vert.preferred, np.asarray(vert.nondifferentiable)
    else:
        raise DomainError(f"unknown jet source {jet_source!r}")
    return hor, grad, hess, flags


def ito_reconstruct(F: Functional, p, jet_source="analytic", cfg: FDConfig = FDConfig(), qv_mode="instantaneous") -> ItoDecomposition:
    """The three sums of the functional Itô formula, one entry per path.

    ``p`` is a :class:`LiftedPath` (float fields) or a :class:`PathBatch`
    (per-path array fields).  ``qv_mode='instantaneous'`` uses ``A(t_i) dt``
    for ``d[X]``; ``'realized'`` uses ``dX dX^T``.
    """
    if qv_mode not in QV_MODES:
        raise DomainError(f"unknown qv_mode {qv_mode!r}")
    times, x, x_left, v = _batch_arrays(p)
    if len(times) < 2:
        raise DomainError("need at least one time step")
    hor, grad, hess, flags = jets_along(F, times, x, v, x_left, jet_source, cfg)
    dt = np.diff(times)
    dx = np.diff(x, axis=-2)
    if qv_mode == "instantaneous":
        q = v[..., :-1, :, :] * dt[:, None, None]
    else:
        q = dx[..., :, None] * dx[..., None, :]
    drift = np.sum(hor * dt, axis=-1)
    mart = np.sum(np.einsum("...ni,...ni->...n", grad, dx), axis=-1)
    trace = 0.5 * np.sum(np.einsum("...nij,...nji->...n", hess, q), axis=-1)

    ends = F.values(PrefixView.along(times, x, v, x_left=x_left, index=np.array([0, len(times) - 1])))
    lhs = ends[..., 1] - ends[..., 0]
    residual = lhs - (drift + mart + trace)
    nflags = np.sum(flags, axis=-1)
    if isinstance(p, LiftedPath):
        return ItoDecomposition(float(lhs), float(drift), float(mart), float(trace), float(residual), int(nflags), qv_mode)
    return ItoDecomposition(lhs, drift, mart, trace, residual, nflags, qv_mode)


@dataclass
class FiniteVariationReport:
    functional: str
    sup_gradient: float
    realized_qv: float
    predicted_qv: float
    gradient_zero: bool
    qv_zero: bool

    @property
    def inconsistent(self) -> bool:
        return self.gradient_zero != self.qv_zero


def finite_variation_diagnostic(
    F: Functional,
    paths: PathBatch,
    cfg: FDConfig = FDConfig(),
    jet_source="fd",
    grad_tol=1e-8,
    qv_tol=1e-2,
) -> FiniteVariationReport:
    """Compare ``sup |grad F|`` with the empirical quadratic variation of ``t -> F_t``.

    A martingale-driven ``F`` has finite variation iff its vertical gradient
    vanishes; the report is inconsistent when exactly one of the two is
    (numerically) zero.  ``predicted_qv`` is the mean of
    ``sum grad A grad dt``, the QV implied by the martingale term.
    """
    times, x, x_left, v = _batch_arrays(paths)
    _, grad, _, _ = jets_along(F, times, x, v, x_left, jet_source, cfg)
    vals = F.values(PrefixView.along(times, x, v, x_left=x_left))
    rqv = float(np.mean(np.sum(np.diff(vals, axis=-1) ** 2, axis=-1)))
    dt = np.diff(times)
    pqv = float(np.mean(np.sum(np.einsum("...ni,...nij,...nj->...n", grad, v[..., :-1, :, :], grad) * dt, axis=-1)))
    sup = float(np.max(np.abs(grad)))
    return FiniteVariationReport(F.name, sup, rqv, pqv, sup <= grad_tol, rqv <= qv_tol)
