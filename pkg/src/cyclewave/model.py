"""Cyclic competition model and its travelling-frame vector field.

The population model couples n species in a ring.  Species j is pressured by
its cyclic successor (coefficient c1), relieved by its predecessor
(coefficient e1), and pressured by each of the n-3 species in between
(transverse coefficients t_1..t_{n-3}):

    dx_j/dt = x_j * (1 - X - c1*x_{j+1} - t_1*x_{j+2} - ... + e1*x_{j-1}),

with X the total population and indices mod n.  Writing the bracket as
1 + sum_k B[j,k] x_k gives the interaction matrix B used throughout.

For synchronous fronts u(x, t) = U(z), z = x + gamma*t, the reaction-diffusion
system reduces to the 2n-dimensional travelling-frame ODE

    dX/dz = U,   dU/dz = gamma*U - f(X),

whose heteroclinic structure this package analyses.  Orbit computations run in
logarithmic coordinates (log x_j, u_j/x_j), which keep the on-axis equilibria
at finite distance in the directions that matter and remove the positivity
constraint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ModelParams:
    """Parameter set (n, c1, e1, t_1..t_{n-3}) with basic validation."""

    n: int
    c1: float
    e1: float
    t: tuple[float, ...] = ()

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 3:
            raise ValidationError(f"need an integer species count n >= 3, got {self.n!r}")
        object.__setattr__(self, "t", tuple(float(v) for v in self.t))
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(self, "e1", float(self.e1))
        if len(self.t) != self.n - 3:
            raise ValidationError(
                f"n={self.n} needs {self.n - 3} transverse coefficients, got {len(self.t)}"
            )
        vals = (self.c1, self.e1, *self.t)
        if not all(np.isfinite(v) and v > 0 for v in vals):
            raise ValidationError(f"all interaction coefficients must be finite and positive: {vals}")

    @property
    def alpha(self) -> float:
        """Inverse coexistence density: n + c1 + sum(t) - e1."""
        return self.n + self.c1 + sum(self.t) - self.e1

    def interaction_matrix(self) -> np.ndarray:
        return _interaction_matrix(self.n, self.c1, self.e1, self.t).copy()

    def label(self) -> str:
        ts = ",".join(f"{v:g}" for v in self.t)
        return f"n={self.n} c1={self.c1:g} e1={self.e1:g} t=({ts})"

    def with_e1(self, e1: float) -> "ModelParams":
        return ModelParams(n=self.n, c1=self.c1, e1=e1, t=self.t)


@lru_cache(maxsize=64)
def _interaction_matrix(n, c1, e1, t):
    B = -np.ones((n, n))
    for j in range(n):
        B[j, (j + 1) % n] -= c1
        B[j, (j - 1) % n] += e1
        for i, ti in enumerate(t, start=1):
            B[j, (j + 1 + i) % n] -= ti
    return B


def reaction(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Reaction term f(x).  Accepts shape (n,) or batched (n, m)."""
    B = _interaction_matrix(params.n, params.c1, params.e1, params.t)
    return x * (1.0 + B @ x)


def reaction_jacobian(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """df/dx at a single point, shape (n, n)."""
    B = _interaction_matrix(params.n, params.c1, params.e1, params.t)
    return np.diag(1.0 + B @ x) + x[:, None] * B


@dataclass(frozen=True)
class Equilibria:
    """Species-space equilibria: extinction, the n single-species states, coexistence."""

    origin: np.ndarray
    on_axis: np.ndarray  # row j is the state with species j at density 1
    coexistence: np.ndarray


def equilibria(params: ModelParams) -> Equilibria:
    n = params.n
    return Equilibria(
        origin=np.zeros(n),
        on_axis=np.eye(n),
        coexistence=np.full(n, 1.0 / params.alpha),
    )


def frame_state(x: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
    """Pack species densities (and optional derivatives) into a frame state [x | u]."""
    x = np.asarray(x, dtype=float)
    if u is None:
        u = np.zeros_like(x)
    return np.concatenate([x, u])


def travelling_rhs(params: ModelParams, gamma: float, y: np.ndarray) -> np.ndarray:
    """Travelling-frame field in plain coordinates, y = [x (n), u (n)]."""
    n = params.n
    x, u = y[:n], y[n:]
    return np.concatenate([u, gamma * u - reaction(params, x)])


def travelling_jacobian(params: ModelParams, gamma: float, y: np.ndarray) -> np.ndarray:
    n = params.n
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -reaction_jacobian(params, y[:n])
    J[n:, n:] = gamma * np.eye(n)
    return J


def travelling_rhs_log(params: ModelParams, gamma: float, y: np.ndarray) -> np.ndarray:
    """Travelling-frame field in log coordinates, y = [log x (n), u/x (n)].

    dX_j/dz = U_j,  dU_j/dz = gamma*U_j - U_j^2 - (1 + (B exp(X))_j).
    Species pushed far below machine range simply stop contributing, which is
    exactly the behaviour wanted near the heteroclinic network.
    """
    n = params.n
    X, U = y[:n], y[n:]
    B = _interaction_matrix(params.n, params.c1, params.e1, params.t)
    return np.concatenate([U, gamma * U - U * U - (1.0 + B @ np.exp(X))])


def travelling_jacobian_log(params: ModelParams, gamma: float, y: np.ndarray) -> np.ndarray:
    n = params.n
    X, U = y[:n], y[n:]
    B = _interaction_matrix(params.n, params.c1, params.e1, params.t)
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -B * np.exp(X)[None, :]
    J[n:, n:] = np.diag(gamma - 2.0 * U)
    return J


def log_state(y: np.ndarray, n: int | None = None) -> np.ndarray:
    """Transform a plain frame state [x | u] to log coordinates [log x | u/x]."""
    n = len(y) // 2 if n is None else n
    x, u = y[:n], y[n:]
    if np.any(x <= 0):
        raise ValidationError("log coordinates need strictly positive densities")
    return np.concatenate([np.log(x), u / x])


def linear_state(ylog: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse of log_state."""
    n = len(ylog) // 2 if n is None else n
    x = np.exp(ylog[:n])
    return np.concatenate([x, ylog[n:] * x])


def mu_shift(x: np.ndarray, k: int = 1) -> np.ndarray:
    """Cyclic relabelling on species vectors: (mu x)_j = x_{j+k}."""
    return np.roll(x, -k, axis=0)


def mu_shift_state(y: np.ndarray, k: int = 1) -> np.ndarray:
    """The same relabelling on frame states [x | u] (plain or log)."""
    n = len(y) // 2
    return np.concatenate([np.roll(y[:n], -k), np.roll(y[n:], -k)])


def mu_state_matrix(n: int, k: int = 1) -> np.ndarray:
    """Matrix of mu_shift_state acting on R^{2n}."""
    P = np.zeros((n, n))
    for j in range(n):
        P[j, (j + k) % n] = 1.0
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = P
    M[n:, n:] = P
    return M
