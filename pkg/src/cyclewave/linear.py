"""Closed-form linear analysis at the travelling-frame equilibria.

Everything here reduces to quadratics.  At an on-axis equilibrium the frame
Jacobian decouples, in the kinetics eigenbasis, into 2x2 companion blocks
[[0, 1], [k, gamma]] whose eigenvalues are the roots of

    lambda^2 - gamma*lambda - k = 0,

one block per species direction: k = 1 for the radial direction, k = c1 for
the contracting one, k = t_i for each transverse one and k = -e1 for the
expanding one (complex pair when gamma^2 < 4*e1).  At the coexistence point
the Jacobian is block circulant and the same reduction runs over the n
Fourier symbols of the interaction matrix.

On top of the spectra sit the scalar bifurcation conditions: the Hopf
crossing of the coexistence spectrum (closed form and numeric detection,
which disagree and are both reported), the resonance sum
lambda_e^- + lambda_c^- + sum_i lambda_t_i^-, the boundary gamma = 2*sqrt(e1)
where the expanding pair turns complex, and the parameter-region
classification built from those predicates.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, NumericalError, ValidationError
from .model import ModelParams

__all__ = [
    "EquilibriumSpectrum",
    "HopfPoint",
    "RegionLabel",
    "bd_curve",
    "bd_locus",
    "block_symbols",
    "block_shift",
    "classify_region",
    "coexistence_eigenvector",
    "coexistence_spectrum",
    "detect_hopf",
    "hopf_point",
    "onaxis_spectrum",
    "quadratic_pair",
    "resonance_locus",
    "resonance_root",
    "resonance_value",
]


def quadratic_pair(gamma: float, k: float):
    """Roots of lambda^2 - gamma*lambda - k, ordered (plus, minus).

    Real roots are returned as floats ordered by value; for k < -gamma^2/4
    the pair is complex conjugate and 'plus' carries the positive imaginary
    part.
    """
    disc = gamma * gamma + 4.0 * k
    if disc >= 0.0:
        r = math.sqrt(disc)
        return (gamma + r) / 2.0, (gamma - r) / 2.0
    r = math.sqrt(-disc)
    return complex(gamma, r) / 2.0, complex(gamma, -r) / 2.0


@dataclass(frozen=True)
class EquilibriumSpectrum:
    """Eigenvalues and eigenvectors of the frame Jacobian at an on-axis point.

    Pairs are (plus, minus).  Eigenvectors are 2n-vectors in plain (not log)
    coordinates at the equilibrium with species 1 resident; the ones for the
    expanding pair are complex when gamma^2 < 4*e1.  lambda_t_pm[i] goes with
    transverse coefficient t_{i+1}.
    """

    gamma: float
    lambda_r_pm: tuple
    lambda_c_pm: tuple
    lambda_t_pm: tuple
    lambda_e_pm: tuple
    vectors: dict

    @property
    def complex_expanding(self) -> bool:
        return self.lambda_e_pm[0].imag != 0.0

    def pair(self, name: str):
        """Eigenvalue pair by short name: 'r', 'c', 'e', 't1', 't2', ..."""
        if name == "r":
            return self.lambda_r_pm
        if name == "c":
            return self.lambda_c_pm
        if name == "e":
            return self.lambda_e_pm
        if name.startswith("t"):
            return self.lambda_t_pm[int(name[1:]) - 1]
        raise KeyError(name)


def _frame_vector(n: int, species: int, lam, kinetics_vec) -> np.ndarray:
    v = np.zeros(2 * n, dtype=complex if isinstance(lam, complex) else float)
    for idx, val in kinetics_vec.items():
        v[idx] = val
        v[n + idx] = lam * val
    return v


def onaxis_spectrum(params: ModelParams, gamma: float) -> EquilibriumSpectrum:
    """Spectrum of the travelling-frame Jacobian at the species-1 equilibrium.

    The kinetics Jacobian at that point is triangular, so each off-axis
    direction pairs with a feedback entry on the resident species; the frame
    eigenvector for kinetics direction m is (v, lambda*v) with v supported on
    species m and the resident.  Spectra at the other on-axis equilibria are
    the cyclic shifts of this one.
    """
    if gamma <= 0:
        raise ValidationError("wavespeed must be positive")
    n = params.n
    B = params.interaction_matrix()
    vectors = {}

    def add(tag, k, species, coupling):
        pair = quadratic_pair(gamma, k)
        for sign, lam in zip("+-", pair):
            kin = {species: 1.0}
            if coupling is not None:
                kin[0] = coupling
            vectors[tag + sign] = _frame_vector(n, species, lam, kin)
        return pair

    lam_r = add("r", 1.0, 0, None)
    # kinetics eigenvalue kappa = e1 at the successor species; feedback
    # entry B[0,1] couples it back to the resident: v0 = B[0,1]/(kappa+1)
    lam_e = add("e", -params.e1, 1, B[0, 1] / (params.e1 + 1.0))
    lam_t = []
    for i in range(1, n - 2):
        m = n - 1 - i  # species direction carrying t_i (0-based)
        denom = 1.0 - params.t[i - 1]
        if abs(denom) < 1e-12:
            raise NumericalError(
                f"defective eigenbasis: t_{i} = 1 collides with the radial pair")
        lam_t.append(add(f"t{i}", params.t[i - 1], m, B[0, m] / denom))
    denom = 1.0 - params.c1
    if abs(denom) < 1e-12:
        raise NumericalError(
            "defective eigenbasis: c1 = 1 collides with the radial pair")
    lam_c = add("c", params.c1, n - 1, B[0, n - 1] / denom)

    if isinstance(lam_e[0], float):
        lam_e = (complex(lam_e[0]), complex(lam_e[1]))
    return EquilibriumSpectrum(gamma=gamma, lambda_r_pm=lam_r,
                               lambda_c_pm=lam_c, lambda_t_pm=tuple(lam_t),
                               lambda_e_pm=lam_e, vectors=vectors)


def block_symbols(params: ModelParams) -> np.ndarray:
    """Fourier symbols q_k of the coexistence-point frame Jacobian.

    q_k = (1 + (c1+1) rho + sum_i (t_i+1) rho^(1+i) + (1-e1) rho^(n-1)) / alpha
    with rho = exp(2 pi i k / n); q_0 = 1 exactly.
    """
    n = params.n
    rho = np.exp(2j * np.pi * np.arange(n) / n)
    q = 1.0 + (params.c1 + 1.0) * rho + (1.0 - params.e1) * rho ** (n - 1)
    for i, ti in enumerate(params.t, start=1):
        q = q + (ti + 1.0) * rho ** (1 + i)
    q = q / params.alpha
    q[0] = 1.0
    return q


def coexistence_spectrum(params: ModelParams, gamma: float) -> np.ndarray:
    """All 2n frame eigenvalues at the coexistence point, block by block.

    Ordered as (plus root, minus root) for blocks k = 0..n-1, where the
    plus root takes the principal square root branch.
    """
    q = block_symbols(params)
    w = np.sqrt(gamma * gamma + 4.0 * q + 0j)
    roots = np.empty(2 * params.n, dtype=complex)
    roots[0::2] = (gamma + w) / 2.0
    roots[1::2] = (gamma - w) / 2.0
    return roots


def coexistence_eigenvector(params: ModelParams, gamma: float, block: int,
                            root: complex) -> np.ndarray:
    """Frame eigenvector for one coexistence-block root, as a 2n vector.

    The block-k eigenvector lifts to x_j = rho^j, u_j = root * rho^j; these
    are deviations from the coexistence point in plain coordinates.
    """
    n = params.n
    rho = np.exp(2j * np.pi * block * np.arange(n) / n)
    return np.concatenate([rho, root * rho])


def block_shift(n: int, block: int):
    """Label shift m with s(z + Lambda/n) = mu^m s(z) for a block-k wave.

    Solves block * m = 1 (mod n); None when no inverse exists (the mode is
    not a primitive rotating wave).
    """
    if math.gcd(block % n, n) != 1:
        return None
    return pow(block % n, -1, n)


@dataclass(frozen=True)
class HopfPoint:
    gamma_H: float
    omega_H: float
    Lambda_H: float
    source: str  # "formula" | "numeric-detection"
    block: int | None = None


def hopf_point(params: ModelParams) -> HopfPoint:
    """Closed-form Hopf point of the coexistence spectrum.

    Evaluates gamma_H = (c1 + t1)/sqrt(alpha t1), omega_H^2 = t1/alpha.
    The numerically detected crossing (detect_hopf) sits at a different
    gamma for generic parameters; both are exposed so callers can report
    the discrepancy.  Requires at least one transverse coefficient.
    """
    if len(params.t) < 1:
        raise ValidationError("closed-form Hopf point needs n >= 4")
    t1 = params.t[0]
    omega = math.sqrt(t1 / params.alpha)
    gamma = (params.c1 + t1) / math.sqrt(params.alpha * t1)
    return HopfPoint(gamma_H=gamma, omega_H=omega,
                     Lambda_H=2.0 * math.pi / omega, source="formula")


def _block_root_real_part(params, block_q, sign):
    def g(gamma):
        w = cmath.sqrt(gamma * gamma + 4.0 * block_q)
        return ((gamma + sign * w) / 2.0).real

    return g


def detect_hopf(params: ModelParams, gamma_range=(0.05, 10.0),
                block: int | None = None, samples: int = 400) -> HopfPoint:
    """Numeric Hopf detection on the coexistence spectrum.

    Scans the real part of each complex block root over the range and
    bisects its zero crossing.  When several blocks cross (conjugate blocks
    always pair up), the crossing with the largest gamma is returned; pass
    block to select a specific one.
    """
    lo, hi = gamma_range
    if not (0 < lo < hi):
        raise ValidationError("gamma range must be positive and increasing")
    q = block_symbols(params)
    blocks = [block] if block is not None else range(1, params.n)
    grid = np.linspace(lo, hi, samples)
    best = None
    for k in blocks:
        if abs(q[k].imag) < 1e-14:
            continue
        for sign in (+1.0, -1.0):
            g = _block_root_real_part(params, q[k], sign)
            vals = np.array([g(x) for x in grid])
            flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
            for idx in flips:
                gamma_c = brentq(g, grid[idx], grid[idx + 1], xtol=1e-12)
                w = cmath.sqrt(gamma_c * gamma_c + 4.0 * q[k])
                omega = abs(((gamma_c + sign * w) / 2.0).imag)
                if omega < 1e-12:
                    continue
                if best is None or gamma_c > best.gamma_H + 1e-10:
                    best = HopfPoint(gamma_H=gamma_c, omega_H=omega,
                                     Lambda_H=2.0 * math.pi / omega,
                                     source="numeric-detection", block=k)
    if best is None:
        raise BracketError(
            f"no Hopf crossing of the coexistence spectrum in {gamma_range}")
    return best


def resonance_value(params: ModelParams, gamma: float):
    """The sum lambda_e^- + lambda_c^- + sum_i lambda_t_i^-.

    Returns a float for real expanding eigenvalues (gamma^2 >= 4 e1) and a
    complex value otherwise; a complex return flags that the sign of the sum
    is not meaningful there.
    """
    spec = onaxis_spectrum(params, gamma)
    s = spec.lambda_e_pm[1] + spec.lambda_c_pm[1]
    for pair in spec.lambda_t_pm:
        s += pair[1]
    if isinstance(s, complex) and s.imag == 0.0:
        return s.real
    return s


def resonance_root(params: ModelParams, gamma_max: float = 50.0) -> float:
    """The gamma where the resonance sum vanishes, by bisection.

    The sum decreases through its only sign change just past gamma =
    2 sqrt(e1) (it can creep back toward zero from below much later, but
    never recrosses), so bracketing against gamma_max is safe.
    """
    lo = 2.0 * math.sqrt(params.e1) * (1.0 + 1e-12) + 1e-300

    def s(g):
        return resonance_value(params, g)

    s_lo, s_hi = s(lo), s(gamma_max)
    if not (s_lo > 0 > s_hi):
        raise BracketError(
            f"resonance sum does not change sign on ({lo:.6g}, {gamma_max:.6g})")
    return brentq(s, lo, gamma_max, xtol=1e-10)


def resonance_locus(params: ModelParams, e1_values, gamma_max: float = 50.0):
    """Resonance curve over an e1 grid, as {e1, gamma, kind} records.

    Grid points with no root in range are skipped.
    """
    curve = []
    for e1 in e1_values:
        p = params.with_e1(float(e1))
        try:
            gamma = resonance_root(p, gamma_max)
        except (BracketError, ValidationError):
            continue
        curve.append({"e1": float(e1), "gamma": gamma, "kind": "resonance"})
    return curve


def bd_locus(e1: float) -> float:
    """Boundary gamma = 2 sqrt(e1) where the expanding pair turns complex."""
    if e1 <= 0:
        raise ValidationError("e1 must be positive")
    return 2.0 * math.sqrt(e1)


def bd_curve(e1_values):
    return [{"e1": float(e1), "gamma": bd_locus(float(e1)), "kind": "bd"}
            for e1 in e1_values]


@dataclass(frozen=True)
class RegionLabel:
    """Parameter-region classification from the on-axis spectrum.

    label 1: expanding pair complex (gamma^2 < 4 e1).
    label 2: real expanding pair and positive resonance sum.
    label 34: real expanding pair and non-positive resonance sum (the two
    sub-regions are not separable by a closed-form predicate).
    """

    label: int
    complex_expanding: bool
    resonance_sum: float | None


def classify_region(params: ModelParams, gamma: float) -> RegionLabel:
    if gamma * gamma - 4.0 * params.e1 < 0.0:
        return RegionLabel(label=1, complex_expanding=True, resonance_sum=None)
    s = resonance_value(params, gamma)
    return RegionLabel(label=2 if s > 0 else 34, complex_expanding=False,
                       resonance_sum=float(s))
