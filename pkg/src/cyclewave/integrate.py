"""Travelling-frame propagation with an optional compiled core.

Shooting and continuation spend nearly all their time integrating the
travelling-frame field together with its first variation.  A Cython stepper
(cyclewave._fastpath) handles that when the extension built; otherwise the
same trajectories come from scipy's DOP853 via solve_ivp.  Set
CYCLEWAVE_PURE=1 to force the scipy path even when the extension exists.

Both paths integrate the same augmented system: the 2n-dimensional state
followed by optional variation columns (each of length 2n), the last of which
may carry the gamma-sensitivity inhomogeneity.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import NumericalError
from .model import ModelParams

__all__ = ["BACKEND", "propagate", "propagate_matrix",
           "propagate_matrix_tangent", "propagate_tangent"]


def _dop853_tableau():
    from scipy.integrate._ivp import dop853_coefficients as dc

    return (
        np.ascontiguousarray(dc.A[:12, :12], dtype=float),
        np.ascontiguousarray(dc.B, dtype=float),
        np.ascontiguousarray(dc.E3, dtype=float),
        np.ascontiguousarray(dc.E5, dtype=float),
    )


if os.environ.get("CYCLEWAVE_PURE"):
    _fast = None
else:
    try:
        from . import _fastpath as _fast
    except ImportError:
        _fast = None

BACKEND = "compiled" if _fast is not None else "pure"

_TABLEAU = _dop853_tableau() if _fast is not None else None

_STATUS_MESSAGES = {
    1: "step size underflow",
    2: "step budget exhausted",
    3: "state left the finite range",
}


def _augmented_rhs(B: np.ndarray, gamma: float, log_coords: bool,
                   mcols: int, gamma_col: bool):
    n = B.shape[0]

    def rhs(_z, Y):
        out = np.empty_like(Y)
        X = Y[:n]
        U = Y[n:2 * n]
        x = np.exp(X) if log_coords else X
        bx = B @ x
        out[:n] = U
        if log_coords:
            out[n:2 * n] = gamma * U - U * U - 1.0 - bx
        else:
            out[n:2 * n] = gamma * U - x * (1.0 + bx)
        if mcols:
            W = Y[2 * n:].reshape(mcols, 2 * n)
            Wd = out[2 * n:].reshape(mcols, 2 * n)
            wX = W[:, :n]
            wU = W[:, n:]
            Wd[:, :n] = wU
            if log_coords:
                Wd[:, n:] = -(wX * x) @ B.T + (gamma - 2.0 * U) * wU
            else:
                Wd[:, n:] = -((1.0 + bx) * wX + x * (wX @ B.T)) + gamma * wU
            if gamma_col:
                Wd[-1, n:] += U
        return out

    return rhs


def _run(B: np.ndarray, gamma: float, Y0: np.ndarray,
         z0: float, z1: float, log_coords: bool, mcols: int, gamma_col: bool,
         samples, rtol: float, atol: float, max_step: float):
    B = np.ascontiguousarray(B, dtype=float)
    if samples is not None:
        samples = np.ascontiguousarray(samples, dtype=float)
        direction = 1.0 if z1 >= z0 else -1.0
        if np.any(direction * np.diff(samples) < 0):
            raise ValueError("sample points must be ordered along the integration")
        if samples.size and (direction * (samples[0] - z0) < 0
                             or direction * (z1 - samples[-1]) < 0):
            raise ValueError("sample points must lie between z0 and z1")

    if _fast is not None:
        sample_out = (np.empty((samples.size, Y0.size))
                      if samples is not None else None)
        y_end, status, _, _ = _fast.integrate(
            B, float(gamma), log_coords, Y0, float(z0), float(z1),
            rtol, atol, *_TABLEAU, mcols, gamma_col,
            samples, sample_out, max_step, 10_000_000)
        if status != 0:
            raise NumericalError(
                f"propagation failed: {_STATUS_MESSAGES[status]}")
        return y_end, sample_out

    from scipy.integrate import solve_ivp

    rhs = _augmented_rhs(B, gamma, log_coords, mcols, gamma_col)
    t_eval = samples if samples is not None and samples.size else None
    sol = solve_ivp(rhs, (z0, z1), Y0, method="DOP853", rtol=rtol, atol=atol,
                    t_eval=t_eval, max_step=max_step,
                    dense_output=t_eval is not None)
    if not sol.success:
        raise NumericalError(f"propagation failed: {sol.message}")
    if t_eval is not None:
        sample_out = sol.y.T.copy()
        y_end = sol.sol(z1)
    else:
        y_end = sol.y[:, -1]
        sample_out = np.empty((0, Y0.size)) if samples is not None else None
    if not np.all(np.isfinite(y_end)):
        raise NumericalError("propagation failed: state left the finite range")
    return np.asarray(y_end, dtype=float), sample_out


def propagate(params: ModelParams, gamma: float, y0, dz: float, *,
              log_coords: bool = True, samples=None,
              rtol: float = 1e-10, atol: float = 1e-12,
              max_step: float = np.inf):
    """Advance a travelling-frame state by dz.

    y0 is the 2n-vector (positions then derivatives; log coordinates by
    default).  With samples (offsets from the start, sorted, within [0, dz])
    returns (y_end, states_at_samples); otherwise just y_end.
    """
    y0 = np.ascontiguousarray(y0, dtype=float)
    if y0.shape != (2 * params.n,):
        raise ValueError(f"state must have length {2 * params.n}")
    abs_samples = None if samples is None else np.asarray(samples, float)
    y_end, taken = _run(params.interaction_matrix(), gamma, y0, 0.0,
                        float(dz), log_coords, 0, False, abs_samples,
                        rtol, atol, max_step)
    if samples is None:
        return y_end
    return y_end, taken


def propagate_matrix(B, gamma: float, y0, dz: float, *,
                     log_coords: bool = False, samples=None,
                     rtol: float = 1e-10, atol: float = 1e-12,
                     max_step: float = np.inf):
    """Advance a travelling-frame state for an explicit interaction matrix.

    The field is the same as propagate's but with the m-by-m matrix B given
    directly, so restrictions of the model to invariant subspaces (where B
    is a submatrix, not a full cyclic matrix) can use the same stepper.
    Plain coordinates by default, since shooting iterates may cross zero.
    """
    B = np.asarray(B, dtype=float)
    m = B.shape[0]
    y0 = np.ascontiguousarray(y0, dtype=float)
    if B.shape != (m, m) or y0.shape != (2 * m,):
        raise ValueError("state must have length twice the matrix dimension")
    abs_samples = None if samples is None else np.asarray(samples, float)
    y_end, taken = _run(B, gamma, y0, 0.0, float(dz), log_coords,
                        0, False, abs_samples, rtol, atol, max_step)
    if samples is None:
        return y_end
    return y_end, taken


def propagate_matrix_tangent(B, gamma: float, y0, dz: float, *,
                             log_coords: bool = False,
                             rtol: float = 1e-10, atol: float = 1e-12,
                             max_step: float = np.inf):
    """propagate_matrix plus the flow-map derivative.

    Returns (y_end, M) with M the 2m-by-2m derivative of the endpoint with
    respect to the initial state.
    """
    B = np.asarray(B, dtype=float)
    m = B.shape[0]
    y0 = np.ascontiguousarray(y0, dtype=float)
    if B.shape != (m, m) or y0.shape != (2 * m,):
        raise ValueError("state must have length twice the matrix dimension")
    Y0 = np.concatenate([y0, np.eye(2 * m).ravel()])
    y_end, _ = _run(B, gamma, Y0, 0.0, float(dz), log_coords,
                    2 * m, False, None, rtol, atol, max_step)
    return y_end[:2 * m], y_end[2 * m:].reshape(2 * m, 2 * m).T.copy()


def propagate_tangent(params: ModelParams, gamma: float, y0, dz: float, *,
                      log_coords: bool = True, with_gamma: bool = False,
                      rtol: float = 1e-10, atol: float = 1e-12,
                      max_step: float = np.inf):
    """Advance a state together with its first variation.

    Returns (y_end, M) where M is the 2n-by-2n derivative of the flow map
    with respect to the initial state; with_gamma adds a third element, the
    derivative of the endpoint with respect to the wave speed.
    """
    n = params.n
    y0 = np.ascontiguousarray(y0, dtype=float)
    if y0.shape != (2 * n,):
        raise ValueError(f"state must have length {2 * n}")
    mcols = 2 * n + (1 if with_gamma else 0)
    Y0 = np.concatenate([y0, np.eye(2 * n).ravel(),
                         np.zeros(2 * n if with_gamma else 0)])
    y_end, _ = _run(params.interaction_matrix(), gamma, Y0, 0.0, float(dz),
                    log_coords, mcols, with_gamma, None, rtol, atol, max_step)
    state = y_end[:2 * n]
    cols = y_end[2 * n:].reshape(mcols, 2 * n)
    M = cols[:2 * n].T.copy()
    if with_gamma:
        return state, M, cols[-1].copy()
    return state, M
