"""Heteroclinic connections between on-axis equilibria, and orbit-flip loci.

The travelling-frame system leaves subspaces with a block of consecutive
species invariant.  Restricted to two consecutive species the frame flow is
four-dimensional and carries a connection from the first on-axis equilibrium
to the second; restricted to three consecutive species it is six-dimensional
and carries a connection from the first to the third, passing near the
middle one.  Both connections are codimension zero inside their subspace
(the unstable manifold of the source and the stable manifold of the target
intersect transversally along a single orbit).

A single flow map over the whole flight is useless for locating them: the
flight time times the largest unstable rate is far beyond ln(1/eps), so a
one-piece shooting function cannot resolve the landing conditions in double
precision.  The orbit is therefore pinned at interior matching points.  The
unknowns are the departure coefficients d on an orthonormal basis of the
source's unstable subspace, the flight time T, and the states at M-1
equispaced interior times; the equations are segment-to-segment matching,
the landing conditions (the arrival point sits on the target's stable
subspace at radius h), and the unit norm of d.  Per-segment error growth is
then modest and Newton converges quadratically.

Cold starts first integrate a trial arc: the departure ray is carried
through the linear regime with the matrix exponential of the source
Jacobian, handed to the nonlinear integrator at a moderate radius, and
truncated at its closest approach to the target with a synthetic
exponential-approach tail appended; interior points are read off that
path.  The weak ray usually misses by an O(1) distance (the true departure
carries admixtures of the faster unstable directions far below machine
precision at any usable radius), in which case the same boundary problem
is solved by adaptive collocation, launched from the handoff radius so
the quiet stretch near the source stays out of the mesh, and its solution
is read off at the matching points.  When that mesh fails to converge the
seed falls back to a smooth switching path between the two axis points,
which carries no dynamical information at all but keeps every matching
residual evaluable; the pinned Newton iteration has a wide enough basin
to pull it in.  The
three-species connection is seeded by chaining the two-species connection
with its own relabelling (the reduced pair problem is identical for every
starting species), since its middle passage shadows that pair of
connections.  If all of that fails at the requested wavespeed, the
connection is walked in from an anchor just above the wavespeed where the
expanding pair turns real.

The departure angle is read off in the expanding eigenplane at the source,
in coordinates aligned with the eigenvectors: with s the successor species,
x_e = lam_e_minus*x_s - u_s and y_e = lam_e_plus*x_s - u_s, and the angle
is atan2(y_e, x_e) where the orbit first crosses radius h in that plane.
A physical connection leaves along the weak direction (angle pi/2 at
leading order); when the weak component vanishes the orbit becomes tangent
to the strong unstable manifold at angle pi, the orbit flip.  The loci of
such flips in the (gamma, e1) plane end where the expanding pair turns
complex, on gamma = 2 sqrt(e1), beyond which there is no strong/weak split.

Shooting directions are represented as coefficient vectors on an
orthonormal (Schur) basis of the unstable subspace together with a unit
norm constraint, rather than as hyperspherical angles, which keeps Newton
away from coordinate poles; the equivalent angles are exposed on the
Connection record.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_bvp
from scipy.linalg import expm, schur
from scipy.optimize import brentq

from .errors import (BracketError, NewtonError, NumericalError,
                     ValidationError)
from .integrate import propagate_matrix, propagate_matrix_tangent
from .linear import onaxis_spectrum
from .model import ModelParams
from .returnmap import FOUR_SADDLE, TWO_SADDLE

__all__ = [
    "Connection",
    "OrbitFlipLocus",
    "Subspace",
    "connection_residual",
    "connection_to_csv",
    "departure_angle",
    "expanding_angle",
    "find_connection",
    "mu_image",
    "orbitflip_locus",
    "pair_subspace",
    "triple_subspace",
]

_ESCAPE = 30.0        # trial arcs stop when any component passes this
_TRIAL_RADIUS = 2e-3  # handoff radius from the linearized ray to the field
_SEG = 1.25           # target shooting-segment length; short enough that a
                      # crude seed path stays evaluable under the fastest
                      # unstable rate over one segment
_M_CAP = 192          # most segments a mesh may hold; keeps the dense
                      # matching system affordable


@dataclass(frozen=True)
class Subspace:
    """A block of consecutive species (1-based, cyclic order), all others zero."""

    n: int
    species: tuple

    def __post_init__(self):
        if self.n < 4:
            raise ValidationError("the model needs at least four species")
        m = len(self.species)
        if m not in (2, 3):
            raise ValidationError("subspaces hold two or three species")
        if m >= self.n:
            raise ValidationError("subspace must be proper")
        for s in self.species:
            if not 1 <= s <= self.n:
                raise ValidationError(f"species index {s} out of range")
        for a, b in zip(self.species, self.species[1:]):
            if b != a % self.n + 1:
                raise ValidationError(
                    "species must be consecutive in cycle order")

    @property
    def source(self) -> int:
        return self.species[0]

    @property
    def target(self) -> int:
        return self.species[-1]

    @property
    def indices(self) -> tuple:
        """0-based positions of the active species in the full state."""
        return tuple(s - 1 for s in self.species)


def pair_subspace(n: int, start: int = 1) -> Subspace:
    """The invariant subspace of species start and its successor."""
    return Subspace(n=n, species=(start, start % n + 1))


def triple_subspace(n: int, start: int = 1) -> Subspace:
    """The invariant subspace of species start and its two successors."""
    s2 = start % n + 1
    return Subspace(n=n, species=(start, s2, s2 % n + 1))


@dataclass(frozen=True)
class Connection:
    """A computed heteroclinic connection inside an invariant subspace.

    trajectory holds plain-coordinate samples of the reduced system
    (densities of the active species, then their frame derivatives) at the
    sample times; densities down at integration-noise level are clamped to
    zero.  direction is the unit departure offset in reduced coordinates,
    so the orbit starts at source + delta*direction, and shooting_points
    are the interior matching states that pin the orbit between there and
    the arrival at radius h of the target.  near_miss maps each
    intermediate on-axis equilibrium (by species) to the trajectory's
    closest approach.  departure_angle is NaN when the source's expanding
    pair is complex.
    """

    params: ModelParams
    gamma: float
    subspace: Subspace
    source: int
    target: int
    delta: float
    h: float
    direction: np.ndarray
    T: float
    shooting_points: np.ndarray
    trajectory: np.ndarray
    times: np.ndarray
    departure_angle: float
    near_miss: dict
    residual: float
    iterations: int

    @property
    def angles(self) -> tuple:
        """Hyperspherical angles of the departure direction on its basis."""
        d = np.asarray(self.direction, dtype=float)
        out = []
        for i in range(d.size - 1):
            out.append(math.atan2(float(np.linalg.norm(d[i + 1:])), d[i]))
        return tuple(out)

    def full_trajectory(self) -> np.ndarray:
        """Samples in the full 2n state, exact zeros outside the subspace."""
        n = self.params.n
        m = len(self.subspace.species)
        out = np.zeros((self.trajectory.shape[0], 2 * n))
        for col, s in enumerate(self.subspace.indices):
            out[:, s] = self.trajectory[:, col]
            out[:, n + s] = self.trajectory[:, m + col]
        return out


@dataclass(frozen=True)
class OrbitFlipLocus:
    """Curve in (e1, gamma) where a connection is tangent to the strong
    unstable manifold, plus why the trace stopped."""

    cycle: str
    kind: str
    e1: np.ndarray
    gamma: np.ndarray
    note: str

    def rows(self) -> list:
        return [{"e1": float(e), "gamma": float(g), "kind": self.kind}
                for e, g in zip(self.e1, self.gamma)]


def _reduced_matrix(params: ModelParams, subspace: Subspace) -> np.ndarray:
    B = params.interaction_matrix()
    ix = np.array(subspace.indices)
    return np.ascontiguousarray(B[np.ix_(ix, ix)])


def _frame_jacobian(Bsub: np.ndarray, x: np.ndarray, gamma: float):
    m = len(x)
    Jf = np.diag(1.0 + Bsub @ x) + x[:, None] * Bsub
    J = np.zeros((2 * m, 2 * m))
    J[:m, m:] = np.eye(m)
    J[m:, :m] = -Jf
    J[m:, m:] = gamma * np.eye(m)
    return J


def _axis_point(m: int, resident: int) -> np.ndarray:
    p = np.zeros(2 * m)
    p[resident] = 1.0
    return p


def _unstable_basis(J: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the unstable invariant subspace (real Schur)."""
    _, Z, sdim = schur(J, output="real", sort="rhp")
    if sdim == 0:
        raise NumericalError("equilibrium has no unstable directions")
    return Z[:, :sdim]


def _rhs(Bsub: np.ndarray, gamma: float, y: np.ndarray) -> np.ndarray:
    m = Bsub.shape[0]
    x, u = y[:m], y[m:]
    return np.concatenate([u, gamma * u - x * (1.0 + Bsub @ x)])


class _Shooter:
    """Multi-segment shooting problem for one (params, gamma, subspace).

    The unknown vector is [d (k coefficients), T, interior states raveled];
    M (the segment count) is fixed when a seed is built.
    """

    def __init__(self, params, gamma, subspace, delta, h, rtol, atol):
        self.gamma = float(gamma)
        self.delta = float(delta)
        self.h = float(h)
        self.rtol = rtol
        self.atol = atol
        self.B = _reduced_matrix(params, subspace)
        self.m = self.B.shape[0]
        self.p_src = _axis_point(self.m, 0)
        self.p_tgt = _axis_point(self.m, self.m - 1)
        self.J_src = _frame_jacobian(self.B, self.p_src[:self.m], gamma)
        self.J_tgt = _frame_jacobian(self.B, self.p_tgt[:self.m], gamma)
        self.U = _unstable_basis(self.J_src)
        self.Lu = _unstable_basis(self.J_tgt.T).T
        self.k = self.U.shape[1]
        if self.Lu.shape[0] + 1 != self.k:
            raise NumericalError(
                "shooting problem is not balanced: unstable dimensions "
                f"{self.k} at the source, {self.Lu.shape[0]} at the target")
        self.M = None

    def start_state(self, d: np.ndarray) -> np.ndarray:
        return self.p_src + self.delta * (self.U @ d)

    def flow(self, y0: np.ndarray, T: float, samples=None):
        return propagate_matrix(self.B, self.gamma, y0, T, samples=samples,
                                rtol=self.rtol, atol=self.atol)

    def flow_tangent(self, y0: np.ndarray, T: float):
        return propagate_matrix_tangent(self.B, self.gamma, y0, T,
                                        rtol=self.rtol, atol=self.atol)

    def rhs(self, y: np.ndarray) -> np.ndarray:
        return _rhs(self.B, self.gamma, y)

    def pack(self, d, T, points) -> np.ndarray:
        return np.concatenate(
            [np.asarray(d, float), [float(T)], np.ravel(points)])

    def unpack(self, z: np.ndarray):
        d = z[:self.k]
        T = float(z[self.k])
        pts = z[self.k + 1:].reshape(self.M - 1, 2 * self.m)
        return d, T, pts

    def segment_starts(self, z: np.ndarray) -> np.ndarray:
        d, _, pts = self.unpack(z)
        return np.vstack([self.start_state(d), pts])

    def residual(self, z: np.ndarray) -> np.ndarray:
        d, T, _ = self.unpack(z)
        starts = self.segment_starts(z)
        s = T / self.M
        w = 2 * self.m
        F = np.empty(z.size)
        for i in range(self.M - 1):
            F[i * w:(i + 1) * w] = self.flow(starts[i], s) - starts[i + 1]
        r = self.flow(starts[-1], s) - self.p_tgt
        base = (self.M - 1) * w
        F[base:base + self.k - 1] = (self.Lu @ r) / self.h
        F[base + self.k - 1] = (float(np.linalg.norm(r)) - self.h) / self.h
        F[base + self.k] = float(d @ d) - 1.0
        return F

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        d, T, _ = self.unpack(z)
        starts = self.segment_starts(z)
        s = T / self.M
        w = 2 * self.m
        J = np.zeros((z.size, z.size))
        col_T = self.k
        for i in range(self.M):
            y_end, Mi = self.flow_tangent(starts[i], s)
            f_end = self.rhs(y_end) / self.M
            if i < self.M - 1:
                rows = slice(i * w, (i + 1) * w)
                if i == 0:
                    J[rows, :self.k] = Mi @ (self.delta * self.U)
                else:
                    lo = self.k + 1 + (i - 1) * w
                    J[rows, lo:lo + w] = Mi
                J[rows, col_T] = f_end
                lo = self.k + 1 + i * w
                J[rows, lo:lo + w] -= np.eye(w)
            else:
                r = y_end - self.p_tgt
                rhat = r / np.linalg.norm(r)
                base = (self.M - 1) * w
                lo = self.k + 1 + (i - 1) * w
                J[base:base + self.k - 1, lo:lo + w] = (self.Lu @ Mi) / self.h
                J[base + self.k - 1, lo:lo + w] = (rhat @ Mi) / self.h
                J[base:base + self.k - 1, col_T] = (self.Lu @ f_end) / self.h
                J[base + self.k - 1, col_T] = float(rhat @ f_end) / self.h
                J[base + self.k, :self.k] = 2.0 * d
        return J

    def newton(self, z0: np.ndarray, tol: float | None = None,
               max_iter: int = 40):
        if tol is None:
            # A three-species orbit hugs the middle equilibrium, and the
            # passage depth is a near-null direction of the system; the
            # residual attainable there is a few orders above the
            # two-species case.
            tol = 1e-9 if self.m == 2 else 1e-7
        z = np.asarray(z0, dtype=float).copy()
        try:
            F = self.residual(z)
        except NumericalError:
            raise NewtonError("seed arc for the shooting problem is unusable",
                              residual=None, iterations=0)
        best = math.inf
        hist: list[float] = []
        hist2: list[float] = []
        hump_budget = 2
        for it in range(1, max_iter + 1):
            ref = float(np.max(np.abs(F)))
            r2 = float(np.linalg.norm(F))
            if ref <= tol:
                d, T, pts = self.unpack(z)
                return d, T, pts, ref, it - 1
            hist.append(ref)
            hist2.append(r2)
            if len(hist) >= 6 and ref < 1e3 * tol and ref > 0.9 * hist[-6]:
                # Monotone but sub-percent progress this close to tol is the
                # integration-accuracy floor of the landing rows, not a bad
                # iterate; return what was attained.
                d, T, pts = self.unpack(z)
                return d, T, pts, ref, it - 1
            best = min(best, ref)
            if (len(hist) >= 9 and ref > 0.5 * max(hist[-9:-1])
                    and r2 > 0.5 * max(hist2[-9:-1])):
                # Nine iterations without halving either norm against its
                # recent peak: recovery from a hump makes steady
                # multiplicative progress, a wandering iteration holds its
                # magnitude.
                if ref <= 1e3 * tol:
                    d, T, pts = self.unpack(z)
                    return d, T, pts, ref, it - 1
                raise NewtonError("shooting Newton stalled",
                                  residual=best, iterations=it)
            try:
                J = self.jacobian(z)
                # Two-sided equilibration: the launch columns carry a
                # factor delta and the landing rows a factor 1/h, and on
                # long flights the raw system is numerically singular.
                rs = np.maximum(np.abs(J).max(axis=1), 1e-30)
                Js = J / rs[:, None]
                cs = np.maximum(np.abs(Js).max(axis=0), 1e-30)
                Js = Js / cs[None, :]
                Fs = F / rs
                step = np.linalg.solve(Js, -Fs) / cs
            except (np.linalg.LinAlgError, NumericalError):
                raise NewtonError("singular shooting system",
                                  residual=best, iterations=it)
            if self.m == 2 and ref < 1e-3 and hump_budget > 0:
                # Local phase: pure Newton.  Near a solution the full step
                # can cross a residual hump (a long flat valley in T
                # inflates the step) and still land inside the quadratic
                # basin; a descent condition would either refuse it
                # forever or creep along in microscopic accepted steps.
                # Each sharp rise spends budget, so an iteration that only
                # ever humps falls back to the descent methods for good.
                # A full step that simply descends needs no tolerance for
                # humps, so three-species systems, whose conditioning makes
                # an uphill full step unrecoverable, skip straight to the
                # line search.
                z_try = z + step
                if z_try[self.k] > 0.5:
                    try:
                        F_try = self.residual(z_try)
                    except NumericalError:
                        F_try = None
                    if F_try is not None:
                        r_try = float(np.max(np.abs(F_try)))
                        if r_try <= 1e4 * ref:
                            if r_try > 10.0 * ref:
                                hump_budget -= 1
                            z, F = z_try, F_try
                            continue
            # Steps are accepted on Euclidean descent: that is what the
            # Newton and damped directions actually promise, and near the
            # attainable floor the max norm is a kinked landscape whose
            # argmax row flips between steps, refusing progress the full
            # residual vector is plainly making.
            z_acc, F_acc = self._try_step(z, step, r2)
            if z_acc is None:
                # The full Newton direction cannot descend: take damped
                # least-squares steps, which bend toward steepest descent,
                # until the quadratic model is trustworthy again.
                z_acc, F_acc = self._marquardt_step(z, Js, Fs, cs, r2)
            elif float(np.linalg.norm(F_acc)) > 0.7 * r2:
                # The backtracked step barely descends: its direction is
                # dominated by a near-null component of the system, which
                # shrinking the step cannot repair but damping can.
                z_lm, F_lm = self._marquardt_step(
                    z, Js, Fs, cs, float(np.linalg.norm(F_acc)))
                if z_lm is not None:
                    z_acc, F_acc = z_lm, F_lm
            if z_acc is None:
                if ref <= 1e3 * tol:
                    # No direction descends because the warm seed already
                    # sits on the attainable floor; there is nothing left
                    # to gain, so hand it back.
                    d, T, pts = self.unpack(z)
                    return d, T, pts, ref, it - 1
                raise NewtonError("shooting Newton stalled",
                                  residual=best, iterations=it)
            z, F = z_acc, F_acc
        ref = float(np.max(np.abs(F)))
        if ref <= 1e3 * tol:
            d, T, pts = self.unpack(z)
            return d, T, pts, ref, max_iter
        raise NewtonError("shooting Newton did not converge",
                          residual=ref, iterations=max_iter)

    def _try_step(self, z, step, bar):
        lam = 1.0
        for _ in range(12):
            z_new = z + lam * step
            if z_new[self.k] > 0.5:
                try:
                    F_new = self.residual(z_new)
                except NumericalError:
                    F_new = None
                if F_new is not None and \
                        float(np.linalg.norm(F_new)) < bar:
                    return z_new, F_new
            lam *= 0.5
        return None, None

    def _marquardt_step(self, z, Js, Fs, cs, bar):
        JtJ = Js.T @ Js
        g = Js.T @ Fs
        eye = np.eye(JtJ.shape[0])
        mu = 1e-6 * float(np.max(np.abs(np.diag(JtJ)))) + 1e-30
        for _ in range(16):
            try:
                step = -np.linalg.solve(JtJ + mu * eye, g) / cs
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            z_new = z + step
            if z_new[self.k] > 0.5:
                try:
                    F_new = self.residual(z_new)
                except NumericalError:
                    F_new = None
                if F_new is not None and \
                        float(np.linalg.norm(F_new)) < bar:
                    return z_new, F_new
            mu *= 10.0
        return None, None


def _weak_direction(shooter: _Shooter):
    """Coefficients of the slowest unstable eigenvector, successor-positive."""
    evals, V = np.linalg.eig(shooter.J_src)
    idx = [i for i in range(evals.size) if evals[i].real > 1e-9]
    i_weak = min(idx, key=lambda i: evals[i].real)
    v = V[:, i_weak].real
    if np.linalg.norm(v) < 1e-8:
        v = V[:, i_weak].imag
    v = v / np.linalg.norm(v)
    if v[1] < 0.0:
        v = -v
    d = shooter.U.T @ v
    return d / np.linalg.norm(d), float(evals[i_weak].real)


def _departure_ray(shooter: _Shooter, d: np.ndarray):
    """Linearized departure offset as a callable of time.

    Carried on the eigenbasis of the source Jacobian when that basis is
    well conditioned, so a slow weak ray keeps no numerical residue of the
    fast directions (the matrix exponential would amplify eigenvector
    roundoff at the fastest rate and bury the weak signal).  A degenerate
    pair on the boundary makes the basis ill conditioned, and then the
    matrix exponential takes over, carrying the secular growth exactly.
    """
    w = shooter.U @ d
    evals, V = np.linalg.eig(shooter.J_src)
    cond = np.linalg.cond(V)
    if np.isfinite(cond) and cond < 1e8:
        c = np.linalg.solve(V, w.astype(complex))
        # Flush pure-roundoff coefficients: a 1e-16 residue of the fastest
        # mode would dominate a slow weak ray long before it reaches any
        # usable radius.
        c[np.abs(c) < 1e-12 * np.max(np.abs(c))] = 0.0

        def ray(tau):
            return (V @ (c * np.exp(evals * tau))).real
    else:
        def ray(tau):
            return expm(shooter.J_src * tau) @ w
    return ray


def _linear_state(shooter: _Shooter, d: np.ndarray, tau: float) -> np.ndarray:
    """Departure ray carried by the linearized flow at the source."""
    return shooter.p_src + shooter.delta * _departure_ray(shooter, d)(tau)


def _switch_time(shooter: _Shooter, d: np.ndarray) -> float:
    """Time for the linearized ray to grow from delta to the trial radius."""
    if shooter.delta >= _TRIAL_RADIUS:
        return 0.0
    ray = _departure_ray(shooter, d)

    def radius(tau):
        return shooter.delta * float(np.linalg.norm(ray(tau))) - _TRIAL_RADIUS

    hi = 1.0
    while radius(hi) < 0.0:
        hi *= 2.0
        if hi > 8192.0:
            raise NumericalError("departure ray never leaves the source")
    return brentq(radius, 0.0, hi, xtol=1e-6)


def _trial(shooter: _Shooter, d: np.ndarray, horizon: float,
           dt: float = 0.5, nsamp: int = 17):
    """Integrate a departure direction, tracking the approach to the target.

    Returns (dmin, tmin, times, states) with times measured from the
    delta-sphere; the recorded arc starts where the linearized ray is
    handed to the nonlinear field.
    """
    t0 = _switch_time(shooter, d)
    y0 = _linear_state(shooter, d, t0) if t0 > 0.0 else shooter.start_state(d)
    offsets = np.linspace(0.0, dt, nsamp)
    ts = [np.array([t0])]
    ys = [y0[None, :]]
    dmin, tmin = math.inf, t0
    y, t = y0, t0
    for _ in range(int(math.ceil(horizon / dt))):
        try:
            y_end, states = shooter.flow(y, dt, samples=offsets)
        except NumericalError:
            break
        dist = np.linalg.norm(states - shooter.p_tgt, axis=1)
        i = int(np.argmin(dist))
        if dist[i] < dmin:
            dmin, tmin = float(dist[i]), t + offsets[i]
        ts.append(t + offsets[1:])
        ys.append(states[1:])
        y, t = y_end, t + dt
        if float(np.max(np.abs(y))) > _ESCAPE:
            break
        if dmin < 0.25 and dist[-1] > 4.0 * dmin + 0.05:
            break
    return dmin, tmin, np.concatenate(ts), np.vstack(ys)


def _slow_stable_rate(shooter: _Shooter) -> float:
    rates = [l.real for l in np.linalg.eigvals(shooter.J_tgt)
             if l.real < -1e-9]
    if not rates:
        raise NumericalError("target equilibrium has no stable directions")
    return max(rates)


def _seed_from_arc(shooter: _Shooter, d: np.ndarray, dmin: float,
                   tmin: float, ts: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Interior points from a trial arc.

    The arc is truncated at its closest approach to the target and finished
    with an exponential-approach tail at the target's slowest stable rate;
    before the arc's own start the linearized departure ray fills in.
    """
    lam_s = _slow_stable_rate(shooter)
    tail = max(math.log(max(dmin, shooter.h) / shooter.h), 0.0) / abs(lam_s)
    T0 = max(float(tmin) + tail + 1.0, 4.0)
    keep = ts <= tmin
    ts_k, ys_k = ts[keep], ys[keep]
    y_close = ys_k[-1]
    M = int(np.clip(round(T0 / _SEG), 4, _M_CAP))
    shooter.M = M
    pts = np.empty((M - 1, 2 * shooter.m))
    for j in range(1, M):
        tau = T0 * j / M
        if tau < ts_k[0]:
            pts[j - 1] = _linear_state(shooter, d, tau)
        elif tau <= ts_k[-1]:
            for c in range(2 * shooter.m):
                pts[j - 1, c] = np.interp(tau, ts_k, ys_k[:, c])
        else:
            fade = math.exp(lam_s * (tau - ts_k[-1]))
            pts[j - 1] = shooter.p_tgt + fade * (y_close - shooter.p_tgt)
    return shooter.pack(d, T0, pts)


def _path_seed(shooter: _Shooter, d: np.ndarray) -> np.ndarray:
    """Interior points on a logistic switching path between the axis points.

    The target species rises exponentially at the weak unstable rate up to
    the crossover, placed where the linear departure from radius delta
    would actually reach order one, and then settles at the target's
    slowest stable rate; the source species is its complement and the
    derivative rows are the path slope.  The middle passage is dynamically
    wrong, but with short segments every matching residual stays finite
    and Newton corrects it.
    """
    _, lam_weak = _weak_direction(shooter)
    lam_up = max(lam_weak, 0.02)
    lam_dn = _slow_stable_rate(shooter)
    m = shooter.m
    c_in = max(abs(float((shooter.U @ d)[m - 1])), 1e-3)
    tau_star = math.log(0.5 / (shooter.delta * c_in)) / lam_up
    T0 = tau_star + (math.log(0.5 / shooter.h) + 2.0) / abs(lam_dn)
    M = int(np.clip(round(T0 / _SEG), 4, _M_CAP))
    shooter.M = M
    pts = np.empty((M - 1, 2 * m))
    for j in range(1, M):
        tau = T0 * j / M
        if tau <= tau_star:
            s = 0.5 * math.exp(lam_up * (tau - tau_star))
            sp = lam_up * s
        else:
            s = 1.0 - 0.5 * math.exp(lam_dn * (tau - tau_star))
            sp = -lam_dn * (1.0 - s)
        pts[j - 1, :m] = ((1.0 - s) * shooter.p_src[:m]
                          + s * shooter.p_tgt[:m])
        pts[j - 1, m:] = sp * (shooter.p_tgt[:m] - shooter.p_src[:m])
    return shooter.pack(d, T0, pts)


def _bvp_seed(shooter: _Shooter):
    """Collocation seed for the shooting unknowns, or None.

    The boundary problem mirrors the shooting formulation, but with the
    launch ball inflated from delta to the handoff radius so the quiet
    stretch along the departure ray stays out of the mesh (collocation
    would spend its entire node budget resolving it); the analytic ray
    fills that stretch back in when the matching points are read off.
    The adaptive mesh resolves the slow-weak crossover that defeats both
    the trial arc and the switching path.  Mesh failures return None and
    the cruder seeds take over.
    """
    m, k = shooter.m, shooter.k
    B = shooter.B
    d_weak, lam_w = _weak_direction(shooter)
    try:
        t_sw = _switch_time(shooter, d_weak)
    except NumericalError:
        return None
    ray = _departure_ray(shooter, d_weak)
    y_sw = shooter.p_src + shooter.delta * ray(t_sw)
    w0 = (y_sw - shooter.p_src) / _TRIAL_RADIUS
    lam_up = max(lam_w, 0.02)
    lam_dn = _slow_stable_rate(shooter)
    T1 = math.log(0.5 / _TRIAL_RADIUS) / lam_up \
        + (math.log(0.5 / shooter.h) + 2.0) / abs(lam_dn)
    tau_star = math.log(
        0.5 / (_TRIAL_RADIUS * max(abs(w0[m - 1]), 1e-3))) / lam_up

    def fun(sig, y, p):
        T = p[k]
        x, u = y[:m], y[m:]
        return T * np.vstack([u, shooter.gamma * u - x * (1.0 + B @ x)])

    def bc(ya, yb, p):
        dr = p[:k]
        r = yb - shooter.p_tgt
        return np.concatenate([
            ya - shooter.p_src - _TRIAL_RADIUS * (shooter.U @ dr),
            shooter.Lu @ r / shooter.h,
            [(float(np.linalg.norm(r)) - shooter.h) / shooter.h],
            [float(dr @ dr) - 1.0]])

    sig = np.linspace(0.0, 1.0, 101)
    Y = np.empty((2 * m, sig.size))
    for i, sg in enumerate(sig):
        tau = sg * T1
        if tau <= tau_star:
            s = 0.5 * math.exp(lam_up * (tau - tau_star))
            sp = lam_up * s
        else:
            s = 1.0 - 0.5 * math.exp(lam_dn * (tau - tau_star))
            sp = -lam_dn * (1.0 - s)
        Y[:m, i] = (1.0 - s) * shooter.p_src[:m] + s * shooter.p_tgt[:m]
        Y[m:, i] = sp * (shooter.p_tgt[:m] - shooter.p_src[:m])
    dr0 = shooter.U.T @ w0
    dr0 = dr0 / np.linalg.norm(dr0)
    with np.errstate(all="ignore"), warnings.catch_warnings():
        # solve_bvp probes its finite-difference Jacobians straight through
        # overflow territory while the mesh is still wrong; that is routine
        # for it, not a signal.
        warnings.simplefilter("ignore", RuntimeWarning)
        sol = solve_bvp(fun, bc, sig, Y, p=np.concatenate([dr0, [T1]]),
                        tol=1e-8, max_nodes=20000)
    if sol.status != 0:
        return None
    T_bvp = float(sol.p[k])
    T_full = t_sw + T_bvp
    M = int(np.clip(round(T_full / _SEG), 4, _M_CAP))
    shooter.M = M
    pts = np.empty((M - 1, 2 * m))
    for j in range(1, M):
        tau = T_full * j / M
        if tau < t_sw:
            pts[j - 1] = shooter.p_src + shooter.delta * ray(tau)
        else:
            pts[j - 1] = sol.sol((tau - t_sw) / T_bvp)
    return shooter.pack(d_weak, T_full, pts)


def _cold_seed(shooter: _Shooter) -> np.ndarray:
    """Seed without any prior solution.

    A weak-eigenvector trial arc is used when it gets close to the target;
    otherwise a collocation solve supplies the seed, and when its mesh
    fails the switching path stands in.
    """
    d_weak, lam_weak = _weak_direction(shooter)
    lam = max(lam_weak, 0.05)
    horizon = 3.0 * math.log(0.5 / _TRIAL_RADIUS) / lam + 40.0
    dmin, tmin, ts, ys = _trial(shooter, d_weak, horizon)
    if dmin < 0.12:
        return _seed_from_arc(shooter, d_weak, dmin, tmin, ts, ys)
    z0 = _bvp_seed(shooter)
    if z0 is not None:
        return z0
    return _path_seed(shooter, d_weak)


def _chain_seed(shooter: _Shooter, pair_conn: "Connection") -> np.ndarray:
    """Seed the three-species connection by gluing two pair connections.

    The reduced pair problem is the same matrix for every starting
    species, so the second leg is the first one relabelled a species
    along.  Where the legs overlap both are small deviations from the
    middle equilibrium and superpose; the offset between the legs is
    chosen so both deviations pass the glue level together, and past its
    own span a leg is continued with the linear rates at its endpoint.
    """
    T12 = float(pair_conn.T)
    sh2 = _Shooter(pair_conn.params, pair_conn.gamma, pair_conn.subspace,
                   pair_conn.delta, pair_conn.h, shooter.rtol, shooter.atol)
    d1 = sh2.U.T @ np.asarray(pair_conn.direction, float)
    d1 = d1 / np.linalg.norm(d1)
    starts = np.vstack([sh2.start_state(d1),
                        np.asarray(pair_conn.shooting_points, float)])
    M1 = starts.shape[0]
    s1 = T12 / M1

    def pair_state(tau):
        i = min(int(tau / s1), M1 - 1)
        dt = tau - i * s1
        return starts[i] if dt < 1e-13 else sh2.flow(starts[i], dt)

    lam_land = _slow_stable_rate(sh2)
    _, lam_dep = _weak_direction(sh2)
    rho = max(min(1e-4, 0.1 * sh2.h), 10.0 * sh2.delta)
    dt_land = math.log(rho / sh2.h) / lam_land
    sig_rho = math.log(rho / sh2.delta) / max(lam_dep, 1e-6)
    T_off = max(T12 + dt_land - sig_rho, 0.25 * T12)
    T0 = T_off + T12
    end1 = pair_state(T12) - sh2.p_tgt
    dep2 = starts[0] - sh2.p_src

    def state(tau):
        y = np.zeros(6)
        y[1] = 1.0
        if tau <= T12:
            dev1 = pair_state(tau) - sh2.p_tgt
        else:
            dev1 = end1 * math.exp(lam_land * (tau - T12))
        y[[0, 1, 3, 4]] += dev1
        sg = tau - T_off
        if sg >= 0.0:
            dev2 = pair_state(min(sg, T12)) - sh2.p_src
        else:
            dev2 = dep2 * math.exp(lam_dep * sg)
        y[[1, 2, 4, 5]] += dev2
        return y

    M = int(np.clip(round(T0 / _SEG), 4, _M_CAP))
    shooter.M = M
    pts = np.array([state(T0 * j / M) for j in range(1, M)])
    w = np.zeros(6)
    pair_dir = np.asarray(pair_conn.direction, float)
    w[[0, 1]] = pair_dir[:2]
    w[[3, 4]] = pair_dir[2:]
    d0 = shooter.U.T @ w
    d0 = d0 / np.linalg.norm(d0)
    return shooter.pack(d0, T0, pts)


def _guess_seed(shooter: _Shooter, guess) -> np.ndarray:
    if isinstance(guess, Connection):
        pts = np.asarray(guess.shooting_points, float)
        shooter.M = pts.shape[0] + 1
        d0 = shooter.U.T @ np.asarray(guess.direction, float)
        nrm = float(np.linalg.norm(d0))
        if nrm < 1e-8:
            raise ValidationError("guess direction has no unstable component")
        return shooter.pack(d0 / nrm, guess.T, pts)
    w, T0 = guess
    d0 = shooter.U.T @ np.asarray(w, dtype=float)
    nrm = float(np.linalg.norm(d0))
    if nrm < 1e-8:
        raise ValidationError("guess direction has no unstable component")
    d0 = d0 / nrm
    dmin, tmin, ts, ys = _trial(shooter, d0, 1.5 * float(T0) + 10.0)
    if dmin < 0.12:
        return _seed_from_arc(shooter, d0, dmin, tmin, ts, ys)
    return _path_seed(shooter, d0)


def _solve(params, gamma, subspace, delta, h, rtol, atol, guess):
    shooter = _Shooter(params, gamma, subspace, delta, h, rtol, atol)
    extra_its = 0
    if guess is not None:
        z0 = _guess_seed(shooter, guess)
    elif shooter.m == 3:
        z0 = None
        try:
            pair = find_connection(
                params, gamma, pair_subspace(params.n, subspace.source),
                delta=delta, h=h, rtol=rtol, atol=atol)
            extra_its = pair.iterations
            z0 = _chain_seed(shooter, pair)
        except (NewtonError, NumericalError, ValidationError):
            z0 = None
        if z0 is not None:
            try:
                d, T, pts, res, its = shooter.newton(z0)
                return shooter, d, T, pts, res, its + extra_its
            except NewtonError:
                pass
        z0 = _cold_seed(shooter)
    else:
        z0 = _cold_seed(shooter)
    d, T, pts, res, its = shooter.newton(z0)
    return shooter, d, T, pts, res, its + extra_its


def _remesh(shooter, d, T, pts, M_new) -> np.ndarray:
    """Resample a converged orbit onto M_new equal segments."""
    starts = np.vstack([shooter.start_state(d), pts])
    s = T / shooter.M
    out = np.empty((M_new - 1, 2 * shooter.m))
    for j in range(1, M_new):
        tau = T * j / M_new
        i = min(int(tau / s), shooter.M - 1)
        dt = tau - i * s
        out[j - 1] = starts[i] if dt < 1e-13 else shooter.flow(starts[i], dt)
    return out


def _newton_at(params, subspace, delta, h, rtol, atol, gamma, M, w, T, pts):
    """Solve the shooting problem at one wavespeed from explicit data.

    w is the departure direction in ambient (reduced plain) coordinates,
    which survives the basis change between shooters; the Schur basis
    itself has no continuity in gamma.
    """
    sh = _Shooter(params, gamma, subspace, delta, h, rtol, atol)
    sh.M = int(M)
    d0 = sh.U.T @ np.asarray(w, float)
    nrm = float(np.linalg.norm(d0))
    if nrm < 1e-8:
        raise NewtonError("direction lost its unstable component",
                          residual=None, iterations=0)
    # A warm-started step that is going to succeed does so quickly; a
    # tight budget keeps the cost of a failed prediction small so the
    # caller can retry with a shorter step.
    d, T_new, pts_new, res, its = sh.newton(sh.pack(d0 / nrm, float(T), pts),
                                            max_iter=24)
    return sh, d, T_new, pts_new, res, its


def _walk_gamma(params, subspace, delta, h, rtol, atol, state, g_target,
                *, on_point=None, min_step=1e-7, max_step=0.25):
    """Continue a solved shooting state in wavespeed to g_target.

    state is (shooter, d, T, pts, res); the walk predicts each next point
    by secant extrapolation of (direction, T, interior states) in gamma,
    which is what keeps it alive where the flight time dives steeply near
    an orbit flip.  The mesh is rebuilt when segments drift too far from
    the target length.  on_point, when given, is called with each accepted
    state and may return True to stop early.  Returns the final
    (shooter, d, T, pts, res) and the accumulated Newton iterations.
    """
    sh, d, T, pts, res = state
    M = sh.M
    g1, w1, T1, P1 = sh.gamma, sh.U @ d, float(T), np.asarray(pts, float)
    g2 = w2 = T2 = P2 = None
    total = 0
    if g_target == g1:
        return (sh, d, T1, P1, res), total
    dg = (g_target - g1) / 8.0
    dg = math.copysign(min(abs(dg), max_step), dg)
    for _ in range(1200):
        if g1 == g_target:
            break
        g_new = g_target if abs(g_target - g1) <= abs(dg) else g1 + dg
        if g2 is not None and g1 != g2:
            r = (g_new - g1) / (g1 - g2)
            w_p = w1 + r * (w1 - w2)
            T_p = T1 + r * (T1 - T2)
            P_p = P1 + r * (P1 - P2)
        else:
            w_p, T_p, P_p = w1, T1, P1
        if T_p < 1.0:
            T_p = 1.0
        try:
            sh_n, d_n, T_n, P_n, res, its = _newton_at(
                params, subspace, delta, h, rtol, atol, g_new, M,
                w_p, T_p, P_p)
        except (NewtonError, NumericalError):
            dg *= 0.4
            if abs(dg) < min_step:
                raise NewtonError(
                    "continuation in wavespeed stalled at "
                    f"gamma={g1:.6g}", residual=None, iterations=total)
            continue
        total += its
        g2, w2, T2, P2 = g1, w1, T1, P1
        g1, w1, T1, P1 = g_new, sh_n.U @ d_n, float(T_n), np.asarray(P_n)
        sh, d = sh_n, d_n
        seg = T1 / M
        if (seg > 1.6 * _SEG and M < _M_CAP) or (seg < 0.4 * _SEG and M > 8):
            M_new = int(np.clip(round(T1 / _SEG), 8, _M_CAP))
            if M_new != M:
                pts_r = _remesh(sh, d, T1, P1, M_new)
                try:
                    sh_r, d_r, T_r, P_r, res_r, its_r = _newton_at(
                        params, subspace, delta, h, rtol, atol, g1, M_new,
                        sh.U @ d, T1, pts_r)
                except (NewtonError, NumericalError):
                    pass
                else:
                    total += its_r
                    if g2 is not None:
                        # Resample the secant partner onto the new mesh so
                        # the predictor survives; its points sit on a
                        # converged orbit, so no re-solve is needed.
                        sh_p = _Shooter(params, g2, subspace, delta, h,
                                        rtol, atol)
                        sh_p.M = M
                        d_p = sh_p.U.T @ w2
                        d_p = d_p / np.linalg.norm(d_p)
                        try:
                            P2 = _remesh(sh_p, d_p, T2, P2, M_new)
                        except (NewtonError, NumericalError):
                            g2 = None
                    sh, d, T1, P1, res = sh_r, d_r, float(T_r), P_r, res_r
                    w1, M = sh.U @ d, M_new
        if on_point is not None and on_point((sh, d, T1, P1, res)):
            break
        if its <= 6:
            dg = math.copysign(min(abs(dg) * 1.5, max_step), dg)
        elif its > 12:
            dg *= 0.7
    else:
        raise NewtonError("continuation in wavespeed did not finish",
                          residual=None, iterations=total)
    return (sh, d, T1, P1, res), total


def expanding_angle(lam_plus: float, lam_minus: float, x: float,
                    u: float) -> float:
    """Angle in the expanding eigenplane, in (0, 2 pi].

    (x, u) are the successor species density and derivative near the
    source.  The weak axis y_e = lam_plus*x - u is positive along a
    departure tangent to the weak eigenvector, which therefore sits at
    angle pi/2; tangency to the strong eigenvector (with positive
    density) gives angle pi.
    """
    x_e = lam_minus * x - u
    y_e = lam_plus * x - u
    ang = math.atan2(y_e, x_e)
    if ang <= 0.0:
        ang += 2.0 * math.pi
    return ang


def _expanding_rates(params: ModelParams, gamma: float):
    pair = onaxis_spectrum(params, gamma).lambda_e_pm
    if pair[0].imag != 0.0 or pair[0].real - pair[1].real <= 1e-9:
        raise ValidationError(
            "expanding eigenvalues are complex or equal: no strong/weak "
            "split, the departure angle is undefined")
    return pair[0].real, pair[1].real


def _ladder_angle(shooter, params, starts, s, h):
    """Departure angle at the first crossing of eigenplane radius h.

    Walks the pinned segment starts, so every integration is at most one
    segment long and stays well conditioned.
    """
    lam_p, lam_m = _expanding_rates(params, shooter.gamma)

    def radius(y):
        x, u = y[1], y[shooter.m + 1]
        return math.hypot(lam_m * x - u, lam_p * x - u)

    if radius(starts[0]) >= h:
        raise BracketError(
            "departure radius starts outside h; reduce delta or raise h")
    for i in range(len(starts)):
        y0 = starts[i]
        y1 = shooter.flow(y0, s)
        if radius(y1) < h and radius(y0) < h:
            continue

        def g(dt):
            return radius(shooter.flow(y0, dt)) - h if dt > 0.0 \
                else radius(y0) - h

        dt_star = brentq(g, 0.0, s, xtol=1e-13, rtol=8.9e-16)
        y_h = shooter.flow(y0, dt_star) if dt_star > 0.0 else y0
        return expanding_angle(lam_p, lam_m, y_h[1], y_h[shooter.m + 1])
    raise BracketError("trajectory never reaches eigenplane radius h")


def departure_angle(conn: Connection, h: float | None = None) -> float:
    """Expanding-plane angle where the connection crosses radius h.

    The radius is measured in the eigenplane coordinates (x_e, y_e) at the
    source, the plane the outgoing section lives in.  Defaults to the
    connection's own h.
    """
    if h is None:
        h = conn.h
    if not h > 0.0:
        raise ValidationError("section radius h must be positive")
    shooter = _Shooter(conn.params, conn.gamma, conn.subspace,
                       conn.delta, h, 1e-12, 1e-15)
    starts = np.vstack([
        shooter.p_src + conn.delta * np.asarray(conn.direction, float),
        np.asarray(conn.shooting_points, float)])
    s = conn.T / len(starts)
    return _ladder_angle(shooter, conn.params, starts, s, h)


def _near_misses(shooter, starts, s, times, states):
    """Closest approach to each intermediate equilibrium, refined by a
    parabolic fit and one short re-integration from a pinned start."""
    out = {}
    for mid in range(1, shooter.m - 1):
        p_mid = _axis_point(shooter.m, mid)
        dist = np.linalg.norm(states - p_mid, axis=1)
        i = int(np.argmin(dist))
        value = float(dist[i])
        if 0 < i < len(times) - 1:
            t0, t1, t2 = times[i - 1:i + 2]
            f0, f1, f2 = dist[i - 1:i + 2] ** 2
            denom = f0 - 2.0 * f1 + f2
            if denom > 0.0:
                t_star = t1 + 0.5 * (f0 - f2) / denom * (t2 - t1)
                t_star = min(max(t_star, t0), t2)
                seg = min(int(t_star / s), len(starts) - 1)
                y = shooter.flow(starts[seg], t_star - seg * s)
                value = min(value, float(np.linalg.norm(y - p_mid)))
        out[mid] = value
    return out


def find_connection(params: ModelParams, gamma: float, subspace: Subspace,
                    *, delta: float = 1e-6, h: float = 1e-3,
                    guess=None, homotopy: bool = True, samples: int = 401,
                    rtol: float = 1e-11, atol: float = 1e-13) -> Connection:
    """Locate the connection from the subspace's first equilibrium to its
    last by multi-segment shooting.

    guess warm-starts Newton from a nearby solution (a Connection reuses
    its matching points directly; a (direction, T) pair rebuilds an arc).
    Without one, a seed arc is integrated from the weak unstable ray (the
    three-species problem chains the two-species connection instead); if
    Newton then fails and homotopy is allowed, the connection is walked in
    from a wavespeed anchor just above 2 sqrt(e1).  Raises NewtonError
    when nothing lands.
    """
    if gamma <= 0.0:
        raise ValidationError("wavespeed must be positive")
    if subspace.n != params.n:
        raise ValidationError(
            f"subspace is for n={subspace.n}, params have n={params.n}")
    if not 0.0 < delta < h:
        raise ValidationError("need 0 < delta < h")

    try:
        shooter, d, T, pts, res, its = _solve(
            params, gamma, subspace, delta, h, rtol, atol, guess)
    except NewtonError as err:
        if not homotopy or guess is not None:
            raise
        shooter, d, T, pts, res, its = _homotopy_solve(
            params, gamma, subspace, delta, h, rtol, atol, err)

    M = shooter.M
    s = T / M
    starts = np.vstack([shooter.start_state(d), pts])
    r = max(1, math.ceil((samples - 1) / M))
    offsets = np.linspace(0.0, s, r + 1)
    chunks_t, chunks_y = [], []
    for i in range(M):
        _, states = shooter.flow(starts[i], s, samples=offsets)
        if i < M - 1:
            chunks_t.append(i * s + offsets[:-1])
            chunks_y.append(states[:-1])
        else:
            chunks_t.append(i * s + offsets)
            chunks_y.append(states)
    times = np.concatenate(chunks_t)
    traj = np.vstack(chunks_y)
    dens = traj[:, :shooter.m]
    if float(dens.min()) < -1e-9:
        raise NumericalError("connection trajectory left the positive cone")
    np.clip(dens, 0.0, None, out=dens)
    try:
        angle = _ladder_angle(shooter, params, starts, s, h)
    except ValidationError:
        angle = math.nan
    miss = _near_misses(shooter, starts, s, times, traj)
    near_miss = {subspace.species[mid]: dist for mid, dist in miss.items()}
    return Connection(
        params=params, gamma=gamma, subspace=subspace,
        source=subspace.source, target=subspace.target,
        delta=delta, h=h, direction=shooter.U @ d,
        T=float(T), shooting_points=pts, trajectory=traj, times=times,
        departure_angle=float(angle), near_miss=near_miss,
        residual=float(res), iterations=int(its))


def _homotopy_solve(params, gamma, subspace, delta, h, rtol, atol, err):
    """Walk the connection in wavespeed from an anchor where a cold start
    lands, preferring anchors in the weak-departure regime."""
    floor = 2.0 * math.sqrt(params.e1)
    for factor in (1.9, 1.35, 2.6, 1.10, 1.02):
        anchor = floor * factor
        if math.isclose(anchor, gamma, rel_tol=1e-9):
            continue
        try:
            shooter, d, T, pts, res, its = _solve(
                params, anchor, subspace, delta, h, rtol, atol, None)
        except (NewtonError, NumericalError):
            continue
        try:
            state, walked = _walk_gamma(
                params, subspace, delta, h, rtol, atol,
                (shooter, d, T, pts, res), gamma)
        except (NewtonError, NumericalError):
            continue
        shooter, d, T, pts, res = state
        return shooter, d, T, pts, res, its + walked
    raise NewtonError(
        "no connection found in the homotopy from the boundary anchor",
        residual=err.residual, iterations=err.iterations)


def connection_residual(params: ModelParams, gamma: float,
                        conn: Connection) -> float:
    """Largest shooting defect of a connection's stored data, recomputed.

    Interior matching rows are in state units, the landing rows relative
    to h.  A connection's relabelled image under the cyclic symmetry
    reproduces the original value, since the reduced problem is the same
    matrix.
    """
    shooter = _Shooter(params, gamma, conn.subspace, conn.delta, conn.h,
                       1e-11, 1e-13)
    pts = np.asarray(conn.shooting_points, float)
    shooter.M = pts.shape[0] + 1
    d = shooter.U.T @ np.asarray(conn.direction, float)
    z = shooter.pack(d, conn.T, pts)
    F = shooter.residual(z)
    return float(np.max(np.abs(F[:-1])))


def mu_image(conn: Connection, k: int = 1) -> Connection:
    """Relabel a connection under the cyclic symmetry (species j -> j+k).

    The reduced shooting problem only sees relative species positions, so
    the image is a valid connection between the shifted equilibria with
    the same reduced data.
    """
    n = conn.params.n
    shifted = tuple((s - 1 + k) % n + 1 for s in conn.subspace.species)
    sub = Subspace(n=n, species=shifted)
    miss = {(s - 1 + k) % n + 1: v for s, v in conn.near_miss.items()}
    return replace(conn, subspace=sub, source=sub.source, target=sub.target,
                   near_miss=miss)


def connection_to_csv(conn: Connection, path) -> None:
    """Write the sampled trajectory as CSV in full plain coordinates."""
    full = conn.full_trajectory()
    n = conn.params.n
    header = "z," + ",".join(f"x{j + 1}" for j in range(n)) \
        + "," + ",".join(f"u{j + 1}" for j in range(n))
    rows = np.column_stack([conn.times, full])
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header,
               comments="")


_CYCLE_SUBSPACE = {FOUR_SADDLE: pair_subspace, TWO_SADDLE: triple_subspace}
_CYCLE_KIND = {FOUR_SADDLE: "orbitflip-sigma", TWO_SADDLE: "orbitflip-xi"}


def orbitflip_locus(params: ModelParams, e1_grid, cycle: str, *,
                    delta: float = 1e-6, h: float = 1e-3,
                    angle_tol: float = 1e-5,
                    gamma_start: float | None = None,
                    gamma_max: float = 6.0) -> OrbitFlipLocus:
    """Trace the orbit-flip curve gamma(e1) for one cycle type.

    For each e1 the wavespeed is root-found so the departure angle equals
    pi: the connection leaves tangent to the strong unstable manifold.
    The four-equilibria cycle uses the two-species subspace, the
    two-equilibria cycle the three-species one.  The trace stops when the
    root would cross gamma = 2 sqrt(e1), where the expanding pair turns
    complex and the flip condition dissolves; the note records why the
    curve ended.
    """
    if cycle not in _CYCLE_SUBSPACE:
        raise ValidationError(
            f"unknown cycle {cycle!r}; expected {FOUR_SADDLE!r} "
            f"or {TWO_SADDLE!r}")
    e1_grid = [float(e) for e in e1_grid]
    if not e1_grid:
        raise ValidationError("e1 grid is empty")
    subspace = _CYCLE_SUBSPACE[cycle](params.n)
    rtol, atol = 1e-11, 1e-13
    es, gammas = [], []
    note = "grid exhausted"
    g_prev = None

    def state_angle(p, state):
        sh, d, T, pts, _ = state
        starts = np.vstack([sh.start_state(d), pts])
        return _ladder_angle(sh, p, starts, T / sh.M, h)

    def eval_from(p, state, g):
        st, _ = _walk_gamma(p, subspace, delta, h, rtol, atol, state, g)
        return state_angle(p, st) - math.pi, st

    for e1 in e1_grid:
        p = params.with_e1(e1)
        floor = 2.0 * math.sqrt(e1)
        if g_prev is not None:
            g_start = max(g_prev, floor) + 0.05
        elif gamma_start is not None:
            g_start = max(gamma_start, floor + 1e-6)
        else:
            g_start = floor + 0.2
        try:
            shooter, d, T, pts, res, _ = _solve(
                p, g_start, subspace, delta, h, rtol, atol, None)
        except (NewtonError, NumericalError) as exc:
            try:
                shooter, d, T, pts, res, _ = _homotopy_solve(
                    p, g_start, subspace, delta, h, rtol, atol, exc)
            except (NewtonError, NumericalError):
                note = f"no connection at e1={e1:g}"
                break
        state = (shooter, d, T, pts, res)
        try:
            f0 = state_angle(p, state) - math.pi
        except (ValidationError, BracketError, NumericalError):
            note = f"departure angle undefined at e1={e1:g}"
            break
        # Walk until the angle crosses pi, watching each accepted point.
        trail = [(g_start, f0, state)]

        def monitor(st):
            try:
                f = state_angle(p, st) - math.pi
            except (ValidationError, BracketError, NumericalError):
                return True
            trail.append((st[0].gamma, f, st))
            return f * trail[0][1] <= 0.0

        target = floor * (1.0 + 1e-7) if f0 < 0.0 else gamma_max
        try:
            st_end, _ = _walk_gamma(p, subspace, delta, h, rtol, atol,
                                    state, target, on_point=monitor,
                                    max_step=0.06)
            stop_g = st_end[0].gamma
        except (NewtonError, NumericalError):
            stop_g = trail[-1][0]
        if f0 < 0.0 and trail[-1][1] * f0 > 0.0:
            # The crossing window narrows to nothing where the locus meets
            # the floor; rewalk the last stretch in fine steps before
            # giving up on a bracket.
            i_base = next((i for i in range(len(trail) - 1, -1, -1)
                           if trail[i][0] > floor + 1e-3), None)
            if i_base is not None:
                base = trail[i_base]
                del trail[i_base + 1:]
                try:
                    st_end, _ = _walk_gamma(
                        p, subspace, delta, h, rtol, atol, base[2],
                        target, on_point=monitor, max_step=3e-4)
                    stop_g = st_end[0].gamma
                except (NewtonError, NumericalError):
                    stop_g = trail[-1][0]
        lo = trail[-1]
        if lo[1] * f0 > 0.0:
            # No sign change: the walk ran out at the floor, the ceiling,
            # or stalled on the way.
            near_floor = stop_g - floor < 1e-3 * max(floor, 1.0)
            if f0 < 0.0 and near_floor:
                note = ("terminated on gamma = 2 sqrt(e1): expanding pair "
                        f"turns complex at e1={e1:g}")
            else:
                note = f"no bracket at e1={e1:g}"
            break
        hi = trail[-2]
        # Illinois iteration on the walked branch; every evaluation is
        # warm-started from the nearer bracket edge.
        g_lo, f_lo, st_lo = lo
        g_hi, f_hi, st_hi = hi
        side = 0
        root = None
        for _ in range(60):
            if abs(f_lo) <= angle_tol:
                root = (g_lo, f_lo, st_lo)
                break
            if abs(f_hi) <= angle_tol:
                root = (g_hi, f_hi, st_hi)
                break
            if abs(g_hi - g_lo) < 1e-12 * max(1.0, abs(g_hi)):
                break
            denom = f_hi - f_lo
            g_new = (g_lo * f_hi - g_hi * f_lo) / denom if denom != 0.0 \
                else 0.5 * (g_lo + g_hi)
            span = abs(g_hi - g_lo)
            lo_end, hi_end = min(g_lo, g_hi), max(g_lo, g_hi)
            if not lo_end + 0.01 * span <= g_new <= hi_end - 0.01 * span:
                g_new = 0.5 * (g_lo + g_hi)
            src = st_lo if abs(g_new - g_lo) <= abs(g_new - g_hi) else st_hi
            try:
                f_new, st_new = eval_from(p, src, g_new)
            except (NewtonError, NumericalError, ValidationError,
                    BracketError):
                break
            if f_new * f_lo < 0.0:
                g_hi, f_hi, st_hi = g_new, f_new, st_new
                if side == -1:
                    f_lo *= 0.5
                side = -1
            else:
                g_lo, f_lo, st_lo = g_new, f_new, st_new
                if side == 1:
                    f_hi *= 0.5
                side = 1
        if root is None:
            note = f"root lost at e1={e1:g}"
            break
        es.append(e1)
        gammas.append(float(root[0]))
        g_prev = float(root[0])
    return OrbitFlipLocus(cycle=cycle, kind=_CYCLE_KIND[cycle],
                          e1=np.array(es), gamma=np.array(gammas),
                          note=note)
