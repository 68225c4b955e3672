"""Fixed points of the return maps around the axis heteroclinic cycles.

In the travelling frame with four species the axis saddles support two
kinds of heteroclinic cycle: a four-saddle loop visiting every axis
equilibrium once per circuit, and a two-saddle loop between a mutually
opposite pair.  Close to either cycle, the return map to a small section
is the composition of a linear pass by each saddle (transit time T, rates
from the on-axis spectrum) with an affine global map whose coefficients
collect what the flow does along the connecting orbits.  Periodic orbits
near the cycle are fixed points of that composition; eliminating the
section coordinates gives closed-form relations that decide where the
orbits exist, how the transit time grows, and where the family folds.

The solvers work on the fixed-point systems directly.  Internally every
section coordinate is scaled by the exponential it picks up during the
saddle pass (x_c e^{lam_c^+ T} and so on), which keeps each term of each
equation bounded however long the transit time gets; reported solutions
are unscaled back to section coordinates.  T enters Newton as an ordinary
unknown.  In the spiral regime (complex expanding pair) the winding
relation lam_e^I T = pi - K lam_e^I is built into the system and the
phase constant K replaces T as the unknown.

Scale convention: the section radius h fixes the units, so solutions for
radius s*h are the solutions for radius h with all coordinates times s
and the same T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from random import Random

import numpy as np

from .errors import NewtonError, ValidationError
from .linear import EquilibriumSpectrum

__all__ = [
    "FixedPointSolution",
    "OrbitFlipCurve",
    "ReturnMapConstants",
    "ReturnTimePrediction",
    "asymptotic_coords",
    "asymptotic_return_time",
    "bifurcation_residual",
    "orbit_flip_curve",
    "random_constants",
    "solve_four_saddle_fixed_point",
    "solve_spiral_fixed_point",
    "solve_two_saddle_fixed_point",
    "spiral_phase_constant",
]

FOUR_SADDLE = "four-saddle"
TWO_SADDLE = "two-saddle"
SPIRAL = "four-saddle-spiral"

_COEFFICIENTS = ("A1", "A2", "A3", "A4", "A5", "A6",
                 "B1", "B2", "B3", "B4",
                 "C1", "C2", "C3", "C4",
                 "D1", "D2", "D3", "D4", "D5", "D6",
                 "E1", "E2")


def _eexp(x: float) -> float:
    """exp with the overflow branch mapped to inf instead of raising."""
    if x > 700.0:
        return math.inf
    return math.exp(x)


@dataclass(frozen=True)
class ReturnMapConstants:
    """Global-map coefficients plus the section geometry.

    The A row sends the outgoing section back to the incoming one around
    the long connection; B/C feed the expanding pair, D/E the transverse
    pair.  The two-saddle map reuses the same slots with B/C driven by
    (x_c, y_c) and a single transverse row D; its coefficient pairs
    (A5, A6) and (D5, D6) describe one departure direction seen through
    two rows, so D5 A6 == D6 A5 is required there.

    h is the section radius, theta_c the entry angle splitting the
    incoming radius between the contracting and transverse directions
    (two-saddle map only), x_t_ref the reference transverse offset in
    units of h, and K the spiral phase constant (None until a spiral
    solve fills it in, and an initial guess when set beforehand).
    """

    A1: float
    A2: float
    A3: float
    A4: float
    A5: float
    A6: float
    B1: float
    B2: float
    B3: float
    B4: float
    C1: float
    C2: float
    C3: float
    C4: float
    D1: float
    D2: float
    D3: float
    D4: float
    D5: float
    D6: float
    E1: float
    E2: float
    h: float = 1e-3
    theta_c: float = math.pi / 4.0
    x_t_ref: float = 0.0
    K: float | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "K":
                if v is None:
                    continue
                v = float(v)
            else:
                v = float(v)
            if not math.isfinite(v):
                raise ValidationError(f"constant {f.name} must be finite")
            object.__setattr__(self, f.name, v)
        if self.h <= 0.0:
            raise ValidationError("section radius h must be positive")
        if not 0.0 < self.theta_c < 2.0 * math.pi:
            raise ValidationError("entry angle theta_c must lie in (0, 2 pi)")
        if abs(math.sin(self.theta_c)) <= 1e-12:
            raise ValidationError("entry angle theta_c must not be a "
                                  "multiple of pi")


def random_constants(seed: int = 0, *, h: float = 1e-3,
                     theta_c: float = math.pi / 4.0) -> ReturnMapConstants:
    """Unit-magnitude coefficients with random signs.

    D5 is tied to D6 A5 / A6 so the same set is usable for the two-saddle
    map; with A6 = +-1 the product is exact.
    """
    rng = Random(seed)
    vals = {name: rng.choice((-1.0, 1.0)) for name in _COEFFICIENTS}
    vals["D5"] = vals["D6"] * vals["A5"] * vals["A6"]
    return ReturnMapConstants(h=h, theta_c=theta_c, **vals)


@dataclass(frozen=True)
class FixedPointSolution:
    """A converged return-map fixed point in section coordinates.

    y_t is None for the two-saddle map (its transverse pair has a single
    row).  K is None outside the spiral regime.  residual is the largest
    equation residual relative to the size of that equation's terms.
    """

    cycle: str
    x_c: float
    x_e: float
    y_e: float
    x_t: float
    y_t: float | None
    T: float
    residual: float
    iterations: int
    K: float | None = None

    @property
    def coords(self):
        if self.y_t is None:
            return (self.x_c, self.x_e, self.y_e, self.x_t)
        return (self.x_c, self.x_e, self.y_e, self.x_t, self.y_t)


@dataclass(frozen=True)
class ReturnTimePrediction:
    """Leading-order transit time from the closed-form existence relation.

    kind "resonance" (real expanding pair): T = log(M)/S with S the
    resonance sum and M the leading coefficient ratio; side labels the
    parameter region (2 or 34) the long-period family lives on, and T is
    inf exactly on the resonance.  kind "spiral": T = pi/lam_e^I plus the
    phase correction, with lambda_imag carrying lam_e^I.
    """

    kind: str
    T: float
    S: float | None = None
    M: float | None = None
    side: int | None = None
    lambda_imag: float | None = None


@dataclass(frozen=True)
class OrbitFlipCurve:
    """The departure coefficient A5 balanced along a flip family.

    value(T) = P e^{aT} - Q e^{bT}.  T_star is where the curve is
    stationary (the fold of the family), or None with a note when the
    two exponents coincide or the stationary point is absent or at
    non-positive T.
    """

    cycle: str
    P: float
    a: float
    Q: float
    b: float
    T_star: float | None
    note: str

    def value(self, T: float) -> float:
        return self.P * _eexp(self.a * T) - self.Q * _eexp(self.b * T)

    __call__ = value


def _require_nonzero(c: ReturnMapConstants, names):
    for name in names:
        if getattr(c, name) == 0.0:
            raise ValidationError(f"constant {name} appears in a denominator "
                                  "and must be nonzero")


def _real_rates(spectrum: EquilibriumSpectrum):
    if len(spectrum.lambda_t_pm) != 1:
        raise ValidationError("return maps need exactly one transverse pair "
                              "(four species)")
    if spectrum.complex_expanding:
        raise ValidationError("real-regime return maps need a real expanding "
                              "pair (gamma^2 >= 4 e1)")
    lcp, lcm = spectrum.lambda_c_pm
    ltp, ltm = spectrum.lambda_t_pm[0]
    lep, lem = spectrum.lambda_e_pm[0].real, spectrum.lambda_e_pm[1].real
    return lcp, lcm, ltp, ltm, lep, lem


def _spiral_rates(spectrum: EquilibriumSpectrum):
    if len(spectrum.lambda_t_pm) != 1:
        raise ValidationError("return maps need exactly one transverse pair "
                              "(four species)")
    if not spectrum.complex_expanding:
        raise ValidationError("spiral fixed points need a complex expanding "
                              "pair (gamma^2 < 4 e1)")
    lcp, lcm = spectrum.lambda_c_pm
    ltp, ltm = spectrum.lambda_t_pm[0]
    ler = spectrum.lambda_e_pm[0].real
    lei = spectrum.lambda_e_pm[0].imag
    if lcm + ltm + ler >= 0.0:
        raise ValidationError(
            "spiral fixed points need lam_c^- + lam_t^- + lam_e^R < 0; "
            f"got {lcm + ltm + ler:.6g}")
    return lcp, lcm, ltp, ltm, ler, lei


_SCALE_FLOOR = 1e-280


def _newton(fun, u0, *, tol=1e-13, maxiter=80):
    """Damped Newton on fun(u) -> (F, J, sc) with sc the per-equation scales.

    Convergence is measured on max_i |F_i| / sc_i.  The equations live at
    wildly different magnitudes (the radius equation at h^2, the saddle
    rows at h e^{-rate T} for whatever T currently is), so an absolute
    norm would declare victory while some rows are barely resolved; each
    row is judged against the size of its own terms instead, and the
    linear solves are row-equilibrated the same way.
    """
    u = np.asarray(u0, dtype=float)
    F, J, sc = fun(u)
    res = float(np.max(np.abs(F) / sc))
    if not math.isfinite(res):
        raise NewtonError("initial guess evaluates to a non-finite residual",
                          residual=res, iterations=0)
    for it in range(1, maxiter + 1):
        if res <= tol:
            return u, res, it - 1
        try:
            step = np.linalg.solve(J / sc[:, None], -F / sc)
        except np.linalg.LinAlgError:
            raise NewtonError("singular jacobian in the return-map solve",
                              residual=res, iterations=it - 1)
        lam = 1.0
        accepted = False
        for _ in range(50):
            trial = u + lam * step
            Ft, Jt, st = fun(trial)
            rt = float(np.max(np.abs(Ft) / st))
            if math.isfinite(rt) and rt < res:
                u, F, J, sc, res = trial, Ft, Jt, st, rt
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            if res <= 1e-11:
                return u, res, it
            raise NewtonError("line search stalled in the return-map solve",
                              residual=res, iterations=it)
    if res <= 1e-11:
        return u, res, maxiter
    raise NewtonError("return-map Newton did not converge",
                      residual=res, iterations=maxiter)


# ---------------------------------------------------------------------------
# four-saddle cycle, real expanding pair

def _four_saddle_system(c: ReturnMapConstants, rates):
    lcp, lcm, ltp, ltm, lep, lem = rates
    h = c.h

    def fun(u):
        zc, ze, zye, zt, zyt, T = u
        if T <= 0.0:
            return np.full(6, math.inf), np.zeros((6, 6)), np.ones(6)
        ecp = _eexp(-lcp * T)
        ecm = _eexp(lcm * T)
        eep = _eexp(-lep * T)
        eem = _eexp(-lem * T)
        etp = _eexp(-ltp * T)
        etm = _eexp(-ltm * T)
        F = np.array([
            zc * ecp - c.A1 * zc - c.A2 * h * ecm - c.A3 * zt - c.A4 * zyt
            - c.A5 * ze - c.A6 * zye,
            ze * eep - c.B3 * zt - c.B4 * zyt,
            zye * eem - c.C3 * zt - c.C4 * zyt,
            zt * etp - c.D1 * zc - c.D2 * h * ecm,
            zyt * etm - c.E1 * zc - c.E2 * h * ecm,
            h * h - ze * ze - zye * zye,
        ])
        J = np.array([
            [ecp - c.A1, -c.A5, -c.A6, -c.A3, -c.A4,
             -lcp * zc * ecp - lcm * c.A2 * h * ecm],
            [0.0, eep, 0.0, -c.B3, -c.B4, -lep * ze * eep],
            [0.0, 0.0, eem, -c.C3, -c.C4, -lem * zye * eem],
            [-c.D1, 0.0, 0.0, etp, 0.0,
             -ltp * zt * etp - lcm * c.D2 * h * ecm],
            [-c.E1, 0.0, 0.0, 0.0, etm,
             -ltm * zyt * etm - lcm * c.E2 * h * ecm],
            [0.0, -2.0 * ze, -2.0 * zye, 0.0, 0.0, 0.0],
        ])
        sc = np.array([
            max(abs(zc * ecp), abs(c.A1 * zc), abs(c.A2 * h * ecm),
                abs(c.A3 * zt), abs(c.A4 * zyt), abs(c.A5 * ze),
                abs(c.A6 * zye), _SCALE_FLOOR),
            max(abs(ze * eep), abs(c.B3 * zt), abs(c.B4 * zyt),
                _SCALE_FLOOR),
            max(abs(zye * eem), abs(c.C3 * zt), abs(c.C4 * zyt),
                _SCALE_FLOOR),
            max(abs(zt * etp), abs(c.D1 * zc), abs(c.D2 * h * ecm),
                _SCALE_FLOOR),
            max(abs(zyt * etm), abs(c.E1 * zc), abs(c.E2 * h * ecm),
                _SCALE_FLOOR),
            h * h,
        ])
        return F, J, sc

    return fun


def _four_saddle_closed(c: ReturnMapConstants, rates, T: float):
    """Leading closed-form scaled coordinates near a four-saddle solution."""
    lcp, lcm, ltp, ltm, lep, lem = rates
    h = c.h
    dde = c.D1 * c.E2 - c.D2 * c.E1
    dbc = c.B3 * c.C4 - c.B4 * c.C3
    dab = c.A3 * c.B4 - c.A4 * c.B3
    dac = c.A3 * c.C4 - c.A4 * c.C3
    rt = math.hypot(c.A5, c.A6)
    if dde == 0.0 or dbc == 0.0 or rt == 0.0:
        raise ValidationError("degenerate coefficients: D1 E2 - D2 E1, "
                              "B3 C4 - B4 C3 and (A5, A6) must be nonzero")
    sgd = math.copysign(1.0, dde)
    epn = _eexp(-lep * T)
    emn = _eexp(-lem * T)
    scale = abs(dbc) * rt
    ze = h * sgd * (dab * emn - c.A6 * dbc) / scale
    zye = h * sgd * (dac * epn + c.A5 * dbc) / scale
    zt = -h * sgd * (c.A5 * c.B4 * emn + c.A6 * c.C4 * epn
                     + c.A4 * emn * epn) / scale
    zyt = h * sgd * (c.A5 * c.B3 * emn + c.A6 * c.C3 * epn
                     + c.A3 * emn * epn) / scale
    zc = -h * (c.A5 * c.B3 * c.D2 * _eexp(-(ltm + lem) * T)
               + c.A6 * c.C3 * c.D2 * _eexp(-(ltm + lep) * T)
               + c.A3 * c.D2 * _eexp(-(ltm + lep + lem) * T)
               + c.A5 * c.B4 * c.E2 * _eexp(-(ltp + lem) * T)
               + c.A6 * c.C4 * c.E2 * _eexp(-(ltp + lep) * T)
               + c.A4 * c.E2 * _eexp(-(ltp + lep + lem) * T)) \
        / (abs(dde * dbc) * rt)
    return zc, ze, zye, zt, zyt


def solve_four_saddle_fixed_point(constants: ReturnMapConstants,
                                  spectrum: EquilibriumSpectrum,
                                  T_guess: float) -> FixedPointSolution:
    """Newton solve of the four-saddle fixed-point system near T_guess."""
    rates = _real_rates(spectrum)
    _require_nonzero(constants, ("B3", "D1"))
    if T_guess <= 0.0:
        raise ValidationError("T_guess must be positive")
    zc, ze, zye, zt, zyt = _four_saddle_closed(constants, rates, T_guess)
    u0 = (zc, ze, zye, zt, zyt, T_guess)
    u, res, its = _newton(_four_saddle_system(constants, rates), u0)
    zc, ze, zye, zt, zyt, T = u
    if T <= 0.0:
        raise NewtonError("converged to a non-positive transit time",
                          residual=res, iterations=its)
    lcp, lcm, ltp, ltm, lep, lem = rates
    return FixedPointSolution(
        cycle=FOUR_SADDLE,
        x_c=zc * _eexp(-lcp * T),
        x_e=ze * _eexp(-lep * T),
        y_e=zye * _eexp(-lem * T),
        x_t=zt * _eexp(-ltp * T),
        y_t=zyt * _eexp(-ltm * T),
        T=T, residual=res, iterations=its)


# ---------------------------------------------------------------------------
# two-saddle cycle

def _two_saddle_system(c: ReturnMapConstants, rates):
    lcp, lcm, ltp, ltm, lep, lem = rates
    h = c.h
    s = math.sin(c.theta_c)
    co = math.cos(c.theta_c)
    xtr = c.x_t_ref * h

    def fun(u):
        zc, ze, zye, zt, T = u
        if T <= 0.0:
            return np.full(5, math.inf), np.zeros((5, 5)), np.ones(5)
        ecp = _eexp(-lcp * T)
        ecm = _eexp(lcm * T)
        eep = _eexp(-lep * T)
        eem = _eexp(-lem * T)
        etp = _eexp(-ltp * T)
        etm = _eexp(ltm * T)
        F = np.array([
            zc * ecp - c.A1 * zc - c.A2 * h * s * ecm - c.A3 * (zt - xtr)
            - c.A4 * h * co * etm - c.A5 * ze - c.A6 * zye,
            ze * eep - c.B1 * zc - c.B2 * h * s * ecm,
            zye * eem - c.C1 * zc - c.C2 * h * s * ecm,
            zt * etp - c.D1 * zc - c.D2 * h * s * ecm - c.D3 * (zt - xtr)
            - c.D4 * h * co * etm - c.D5 * ze - c.D6 * zye,
            h * h - ze * ze - zye * zye,
        ])
        J = np.array([
            [ecp - c.A1, -c.A5, -c.A6, -c.A3,
             -lcp * zc * ecp - lcm * c.A2 * h * s * ecm
             - ltm * c.A4 * h * co * etm],
            [-c.B1, eep, 0.0, 0.0,
             -lep * ze * eep - lcm * c.B2 * h * s * ecm],
            [-c.C1, 0.0, eem, 0.0,
             -lem * zye * eem - lcm * c.C2 * h * s * ecm],
            [-c.D1, -c.D5, -c.D6, etp - c.D3,
             -ltp * zt * etp - lcm * c.D2 * h * s * ecm
             - ltm * c.D4 * h * co * etm],
            [0.0, -2.0 * ze, -2.0 * zye, 0.0, 0.0],
        ])
        sc = np.array([
            max(abs(zc * ecp), abs(c.A1 * zc), abs(c.A2 * h * s * ecm),
                abs(c.A3 * (zt - xtr)), abs(c.A4 * h * co * etm),
                abs(c.A5 * ze), abs(c.A6 * zye), _SCALE_FLOOR),
            max(abs(ze * eep), abs(c.B1 * zc), abs(c.B2 * h * s * ecm),
                _SCALE_FLOOR),
            max(abs(zye * eem), abs(c.C1 * zc), abs(c.C2 * h * s * ecm),
                _SCALE_FLOOR),
            max(abs(zt * etp), abs(c.D1 * zc), abs(c.D2 * h * s * ecm),
                abs(c.D3 * (zt - xtr)), abs(c.D4 * h * co * etm),
                abs(c.D5 * ze), abs(c.D6 * zye), _SCALE_FLOOR),
            h * h,
        ])
        return F, J, sc

    return fun


def _two_saddle_closed(c: ReturnMapConstants, rates, T: float):
    """Closed-form scaled coordinates for the two-saddle system.

    Exact linear-chain elimination with only the strong-rate feedbacks
    (e^{-lam_c^+ T}, e^{-lam_t^+ T}) dropped, factored so every
    exponential that appears is bounded near solutions.
    """
    lcp, lcm, ltp, ltm, lep, lem = rates
    h = c.h
    s = math.sin(c.theta_c)
    co = math.cos(c.theta_c)
    d31 = c.A3 * c.D1 - c.A1 * c.D3
    d32 = c.A3 * c.D2 - c.A2 * c.D3
    d34 = c.A3 * c.D4 - c.A4 * c.D3
    d35 = c.A3 * c.D5 - c.A5 * c.D3
    d36 = c.A3 * c.D6 - c.A6 * c.D3
    dbc = c.B1 * c.C2 - c.B2 * c.C1
    eta = h * s * _eexp(lcm * T)
    etm = _eexp(ltm * T)
    epn = _eexp(-lep * T)
    gap = _eexp(-(lep - lem) * T)
    den = d35 * c.B1 + d36 * c.C1 * gap + d31 * epn
    if den == 0.0:
        den = 1e-300
    zc = -(eta * (d35 * c.B2 + d36 * c.C2 * gap + d32 * epn)
           + d34 * co * h * etm * epn) / den
    ze = (eta * (-d36 * dbc * _eexp(lem * T) + (c.B2 * d31 - c.B1 * d32))
          - c.B1 * d34 * co * h * etm) / den
    zye = _eexp(lem * T) * (eta * (d35 * dbc + (c.C2 * d31 - c.C1 * d32) * epn)
                            - c.C1 * d34 * co * h * etm * epn) / den
    w = (eta * (c.D5 * (d31 * c.B2 - d32 * c.B1)
                + c.D6 * (d31 * c.C2 - d32 * c.C1) * gap)
         - d34 * co * h * etm * (c.D5 * c.B1 + c.D6 * c.C1 * gap)) / den
    g = -(c.D1 * zc + c.D2 * eta + c.D4 * co * h * etm + w) / c.D3
    zt = c.x_t_ref * h + g
    return zc, ze, zye, zt


def solve_two_saddle_fixed_point(constants: ReturnMapConstants,
                                 spectrum: EquilibriumSpectrum,
                                 T_guess: float) -> FixedPointSolution:
    """Newton solve of the two-saddle fixed-point system near T_guess."""
    rates = _real_rates(spectrum)
    _require_nonzero(constants, ("D3",))
    lhs = constants.D5 * constants.A6
    rhs = constants.D6 * constants.A5
    if abs(lhs - rhs) > 1e-12 * max(1.0, abs(lhs), abs(rhs)):
        raise ValidationError("two-saddle solves need D5 A6 == D6 A5 (one "
                              "departure direction seen through two rows)")
    if T_guess <= 0.0:
        raise ValidationError("T_guess must be positive")
    zc, ze, zye, zt = _two_saddle_closed(constants, rates, T_guess)
    u0 = (zc, ze, zye, zt, T_guess)
    u, res, its = _newton(_two_saddle_system(constants, rates), u0)
    zc, ze, zye, zt, T = u
    if T <= 0.0:
        raise NewtonError("converged to a non-positive transit time",
                          residual=res, iterations=its)
    lcp, lcm, ltp, ltm, lep, lem = rates
    return FixedPointSolution(
        cycle=TWO_SADDLE,
        x_c=zc * _eexp(-lcp * T),
        x_e=ze * _eexp(-lep * T),
        y_e=zye * _eexp(-lem * T),
        x_t=zt * _eexp(-ltp * T),
        y_t=None,
        T=T, residual=res, iterations=its)


# ---------------------------------------------------------------------------
# four-saddle cycle, complex expanding pair

def _spiral_system(c: ReturnMapConstants, rates):
    lcp, lcm, ltp, ltm, ler, lei = rates
    h = c.h

    def fun(u):
        zc, ze, zye, zt, zyt, K = u
        T = math.pi / lei - K
        if T <= 0.0:
            return np.full(6, math.inf), np.zeros((6, 6)), np.ones(6)
        ecp = _eexp(-lcp * T)
        ecm = _eexp(lcm * T)
        eer = _eexp(-ler * T)
        etp = _eexp(-ltp * T)
        etm = _eexp(-ltm * T)
        ae = c.A5 + K * c.A6
        F = np.array([
            zc * ecp - c.A1 * zc - c.A2 * h * ecm - c.A3 * zt - c.A4 * zyt
            + ae * ze + c.A6 * zye,
            ze * eer - c.B3 * zt - c.B4 * zyt,
            zye * eer - c.C3 * zt - c.C4 * zyt,
            zt * etp - c.D1 * zc - c.D2 * h * ecm,
            zyt * etm - c.E1 * zc - c.E2 * h * ecm,
            h * h - ze * ze - zye * zye,
        ])
        # d/dK at fixed scaled coords; dT/dK = -1 feeds the exponentials.
        J = np.array([
            [ecp - c.A1, ae, c.A6, -c.A3, -c.A4,
             c.A6 * ze + lcp * zc * ecp + lcm * c.A2 * h * ecm],
            [0.0, eer, 0.0, -c.B3, -c.B4, ler * ze * eer],
            [0.0, 0.0, eer, -c.C3, -c.C4, ler * zye * eer],
            [-c.D1, 0.0, 0.0, etp, 0.0,
             ltp * zt * etp + lcm * c.D2 * h * ecm],
            [-c.E1, 0.0, 0.0, 0.0, etm,
             ltm * zyt * etm + lcm * c.E2 * h * ecm],
            [0.0, -2.0 * ze, -2.0 * zye, 0.0, 0.0, 0.0],
        ])
        sc = np.array([
            max(abs(zc * ecp), abs(c.A1 * zc), abs(c.A2 * h * ecm),
                abs(c.A3 * zt), abs(c.A4 * zyt), abs(ae * ze),
                abs(c.A6 * zye), _SCALE_FLOOR),
            max(abs(ze * eer), abs(c.B3 * zt), abs(c.B4 * zyt),
                _SCALE_FLOOR),
            max(abs(zye * eer), abs(c.C3 * zt), abs(c.C4 * zyt),
                _SCALE_FLOOR),
            max(abs(zt * etp), abs(c.D1 * zc), abs(c.D2 * h * ecm),
                _SCALE_FLOOR),
            max(abs(zyt * etm), abs(c.E1 * zc), abs(c.E2 * h * ecm),
                _SCALE_FLOOR),
            h * h,
        ])
        return F, J, sc

    return fun


def _spiral_closed(c: ReturnMapConstants, rates, T: float, K: float):
    """Leading closed-form scaled coordinates in the spiral regime."""
    lcp, lcm, ltp, ltm, ler, lei = rates
    h = c.h
    dde = c.D1 * c.E2 - c.D2 * c.E1
    dbc = c.B3 * c.C4 - c.B4 * c.C3
    dab = c.A3 * c.B4 - c.A4 * c.B3
    dac = c.A3 * c.C4 - c.A4 * c.C3
    ae = c.A5 + K * c.A6
    rtc = math.hypot(c.A6, ae)
    if dde == 0.0 or dbc == 0.0 or rtc == 0.0:
        raise ValidationError("degenerate coefficients: D1 E2 - D2 E1, "
                              "B3 C4 - B4 C3 and (A6, A5 + K A6) must be "
                              "nonzero")
    sgd = math.copysign(1.0, dde)
    ern = _eexp(-ler * T)
    scale = abs(dbc) * rtc
    ze = h * sgd * (dab * ern + c.A6 * dbc) / scale
    zye = h * sgd * (dac * ern - ae * dbc) / scale
    zt = -h * sgd * ern * (c.A4 * ern - (ae * c.B4 + c.A6 * c.C4)) / scale
    zyt = h * sgd * ern * (c.A3 * ern - (ae * c.B3 + c.A6 * c.C3)) / scale
    zc = -h * (c.A3 * c.D2 * _eexp(-(ltm + 2.0 * ler) * T)
               + c.A4 * c.E2 * _eexp(-(ltp + 2.0 * ler) * T)
               - ae * (c.B3 * c.D2 * _eexp(-(ltm + ler) * T)
                       + c.B4 * c.E2 * _eexp(-(ltp + ler) * T))
               - c.A6 * (c.C3 * c.D2 * _eexp(-(ltm + ler) * T)
                         + c.C4 * c.E2 * _eexp(-(ltp + ler) * T))) \
        / (abs(dde * dbc) * rtc)
    return zc, ze, zye, zt, zyt


def spiral_phase_constant(constants: ReturnMapConstants) -> float:
    """Closed-form large-T value of the spiral phase constant K.

    Newton's K converges to this as the transit time grows; comparing the
    two is the standard consistency check on a spiral solve.
    """
    _require_nonzero(constants, ("A6", "B3"))
    return -(constants.A5 / constants.A6 + constants.C3 / constants.B3)


def solve_spiral_fixed_point(constants: ReturnMapConstants,
                             spectrum: EquilibriumSpectrum,
                             T_guess: float | None = None
                             ) -> FixedPointSolution:
    """Newton solve in the spiral regime; the phase constant K is the
    sixth unknown and T = pi / lam_e^I - K.

    T_guess, when given, only seeds K; constants.K takes precedence.
    Without either, the closed-form phase constant seeds the solve, which
    is the reliable route when lam_e^I is small: seeding K far off at a
    long transit time starts the slaved coordinates (x_c and the
    transverse pair scale like exponentials of the phase error) so many
    orders above their true size that the downward correction rounds to
    zero, and the solve stops with a NewtonError instead of converging.
    """
    rates = _spiral_rates(spectrum)
    _require_nonzero(constants, ("A6", "B3"))
    lei = rates[5]
    if constants.K is not None:
        K0 = constants.K
    elif T_guess is not None:
        K0 = math.pi / lei - T_guess
    else:
        K0 = spiral_phase_constant(constants)
    T0 = math.pi / lei - K0
    if T0 <= 0.0:
        raise ValidationError("initial spiral phase implies a non-positive "
                              "transit time")
    zc, ze, zye, zt, zyt = _spiral_closed(constants, rates, T0, K0)
    u0 = (zc, ze, zye, zt, zyt, K0)
    u, res, its = _newton(_spiral_system(constants, rates), u0)
    zc, ze, zye, zt, zyt, K = u
    T = math.pi / lei - K
    if T <= 0.0:
        raise NewtonError("converged to a non-positive transit time",
                          residual=res, iterations=its)
    lcp, lcm, ltp, ltm, ler, _ = rates
    return FixedPointSolution(
        cycle=SPIRAL,
        x_c=zc * _eexp(-lcp * T),
        x_e=ze * _eexp(-ler * T),
        y_e=zye * _eexp(-ler * T),
        x_t=zt * _eexp(-ltp * T),
        y_t=zyt * _eexp(-ltm * T),
        T=T, residual=res, iterations=its, K=K)


# ---------------------------------------------------------------------------
# closed-form relations

def asymptotic_coords(constants: ReturnMapConstants,
                      spectrum: EquilibriumSpectrum,
                      T: float, *, cycle: str = FOUR_SADDLE,
                      K: float | None = None):
    """Closed-form section coordinates at transit time T.

    Returns the same tuple layout as FixedPointSolution.coords.  These are
    the leading-order expressions the existence relations come from; they
    match Newton solutions ever more closely as T grows and degrade
    gracefully as it shrinks.
    """
    if T <= 0.0:
        raise ValidationError("T must be positive")
    if cycle == FOUR_SADDLE:
        rates = _real_rates(spectrum)
        lcp, lcm, ltp, ltm, lep, lem = rates
        zc, ze, zye, zt, zyt = _four_saddle_closed(constants, rates, T)
        return (zc * _eexp(-lcp * T), ze * _eexp(-lep * T),
                zye * _eexp(-lem * T), zt * _eexp(-ltp * T),
                zyt * _eexp(-ltm * T))
    if cycle == TWO_SADDLE:
        rates = _real_rates(spectrum)
        lcp, lcm, ltp, ltm, lep, lem = rates
        zc, ze, zye, zt = _two_saddle_closed(constants, rates, T)
        return (zc * _eexp(-lcp * T), ze * _eexp(-lep * T),
                zye * _eexp(-lem * T), zt * _eexp(-ltp * T))
    if cycle == SPIRAL:
        rates = _spiral_rates(spectrum)
        lcp, lcm, ltp, ltm, ler, lei = rates
        if K is None:
            K = constants.K
        if K is None:
            K = spiral_phase_constant(constants)
        zc, ze, zye, zt, zyt = _spiral_closed(constants, rates, T, K)
        return (zc * _eexp(-lcp * T), ze * _eexp(-ler * T),
                zye * _eexp(-ler * T), zt * _eexp(-ltp * T),
                zyt * _eexp(-ltm * T))
    raise ValidationError(f"unknown cycle {cycle!r}")


def bifurcation_residual(constants: ReturnMapConstants,
                         spectrum: EquilibriumSpectrum,
                         T: float, *, cycle: str = FOUR_SADDLE,
                         K: float | None = None) -> float:
    """The closed-form existence relation, normalised to O(1) terms.

    Vanishes at fixed points in the long-T regime.  The real-cycle forms
    compare magnitudes, so they are insensitive to the orientation of the
    solution branch; the spiral form is signed for the branch the solver
    produces.
    """
    c = constants
    if cycle == FOUR_SADDLE:
        lcp, lcm, ltp, ltm, lep, lem = _real_rates(spectrum)
        S = lcm + ltm + lem
        dde = c.D1 * c.E2 - c.D2 * c.E1
        dbc = c.B3 * c.C4 - c.B4 * c.C3
        lhs = (c.A5 * c.B3 * c.D1 * _eexp(-S * T)
               + c.A6 * c.C3 * c.D1 * _eexp(-(S + lep - lem) * T))
        return abs(lhs) - abs(dde * dbc) * math.hypot(c.A5, c.A6)
    if cycle == TWO_SADDLE:
        lcp, lcm, ltp, ltm, lep, lem = _real_rates(spectrum)
        d35 = c.A3 * c.D5 - c.A5 * c.D3
        d36 = c.A3 * c.D6 - c.A6 * c.D3
        dbc = c.B1 * c.C2 - c.B2 * c.C1
        lhs = (d35 * c.B1 * _eexp(-(lcm + lem) * T)
               + d36 * c.C1 * _eexp(-(lcm + lep) * T))
        return abs(lhs) - abs(math.sin(c.theta_c) * dbc) * math.hypot(d36, d35)
    if cycle == SPIRAL:
        lcp, lcm, ltp, ltm, ler, lei = _spiral_rates(spectrum)
        if K is None:
            K = c.K
        if K is None:
            K = spiral_phase_constant(c)
        dde = c.D1 * c.E2 - c.D2 * c.E1
        dbc = c.B3 * c.C4 - c.B4 * c.C3
        ae = c.A5 + K * c.A6
        return (c.B3 * c.D1 * ae + c.A6 * c.C3 * c.D1
                - c.A3 * c.D1 * _eexp(-ler * T)
                + abs(dde * dbc) * math.hypot(c.A6, ae)
                * _eexp((lcm + ltm + ler) * T))
    raise ValidationError(f"unknown cycle {cycle!r}")


def asymptotic_return_time(constants: ReturnMapConstants,
                           spectrum: EquilibriumSpectrum
                           ) -> ReturnTimePrediction:
    """Leading-order transit time of the four-saddle fixed point.

    Real expanding pair: T = log(M)/S, infinite exactly on the resonance
    (S = 0), with side 2 when M > 1 and 34 when M < 1.  Complex pair:
    T = pi/lam_e^I - K with the closed-form phase constant.
    """
    c = constants
    if spectrum.complex_expanding:
        lcp, lcm, ltp, ltm, ler, lei = _spiral_rates(spectrum)
        _require_nonzero(c, ("A3", "A6", "B3"))
        T = math.pi / lei + (c.B3 / c.A3 + c.A5 / c.A6)
        return ReturnTimePrediction(kind="spiral", T=T, lambda_imag=lei)
    lcp, lcm, ltp, ltm, lep, lem = _real_rates(spectrum)
    _require_nonzero(c, ("B3", "D1"))
    S = lcm + ltm + lem
    dde = c.D1 * c.E2 - c.D2 * c.E1
    dbc = c.B3 * c.C4 - c.B4 * c.C3
    if dde * dbc == 0.0:
        raise ValidationError("degenerate coefficients: D1 E2 - D2 E1 and "
                              "B3 C4 - B4 C3 must be nonzero")
    M = c.A5 * c.B3 * c.D1 / (abs(dde * dbc) * math.hypot(c.A5, c.A6))
    if M <= 0.0:
        raise ValidationError("resonance prediction needs a positive leading "
                              "coefficient ratio")
    side = 2 if M > 1.0 else 34
    if S == 0.0:
        return ReturnTimePrediction(kind="resonance", T=math.inf, S=S, M=M,
                                    side=side)
    return ReturnTimePrediction(kind="resonance", T=math.log(M) / S, S=S,
                                M=M, side=side)


def orbit_flip_curve(constants: ReturnMapConstants,
                     spectrum: EquilibriumSpectrum, *,
                     cycle: str = FOUR_SADDLE) -> OrbitFlipCurve:
    """The A5 value that keeps a fixed point at transit time T, as the
    two-exponential curve P e^{aT} - Q e^{bT}, with its stationary point.

    Along this curve the expanding-pair departure flips orientation; the
    stationary point T_star is where the flip family folds.
    """
    c = constants
    if cycle == FOUR_SADDLE:
        lcp, lcm, ltp, ltm, lep, lem = _real_rates(spectrum)
        _require_nonzero(c, ("B3", "D1"))
        dde = c.D1 * c.E2 - c.D2 * c.E1
        dbc = c.B3 * c.C4 - c.B4 * c.C3
        P = abs(dde * dbc) * c.A6 / (c.B3 * c.D1)
        a = lcm + ltm + lem
        Q = c.A6 * c.C3 / c.B3
        b = lem - lep
    elif cycle == TWO_SADDLE:
        lcp, lcm, ltp, ltm, lep, lem = _real_rates(spectrum)
        _require_nonzero(c, ("B1",))
        d36 = c.A3 * c.D6 - c.A6 * c.D3
        dbc = c.B1 * c.C2 - c.B2 * c.C1
        P = c.A6 * c.C1 / c.B1
        a = lem - lep
        Q = (c.A6 * abs(dbc) * math.copysign(1.0, d36)
             * math.sin(c.theta_c) / c.B1)
        b = lcm + lem
    else:
        raise ValidationError(f"unknown cycle {cycle!r}")
    if a == b:
        return OrbitFlipCurve(cycle=cycle, P=P, a=a, Q=Q, b=b, T_star=None,
                              note="degenerate: the two exponents coincide")
    if Q == 0.0 or P == 0.0 or (a * P) / (b * Q) <= 0.0:
        return OrbitFlipCurve(cycle=cycle, P=P, a=a, Q=Q, b=b, T_star=None,
                              note="no stationary point")
    T_star = math.log((a * P) / (b * Q)) / (b - a)
    if T_star <= 0.0:
        return OrbitFlipCurve(cycle=cycle, P=P, a=a, Q=Q, b=b, T_star=None,
                              note="stationary point at non-positive T")
    return OrbitFlipCurve(cycle=cycle, P=P, a=a, Q=Q, b=b, T_star=T_star,
                          note="")
