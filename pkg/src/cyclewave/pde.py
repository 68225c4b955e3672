"""Spectral integration of the reaction-diffusion system on a periodic interval.

Space is handled pseudospectrally (FFT of each species, unit diffusion, so
the linear symbol is the diagonal -(2 pi k / L)^2) and time by the ETDRK4
exponential integrator.  The phi-function coefficients are averaged over a
32-point contour around each symbol value, which keeps them accurate when
the symbol is close to zero; the diffusion-free mode (k = 0) needs this as
much as the near-marginal long modes.

The nonlinearity x_j (1 + (Bx)_j) is evaluated pointwise in physical space.
It is quadratic, and at the default resolution (N = 2048 on L = 500)
aliasing sits below integration error, so no dealiasing is applied unless
asked for.  Species that start identically zero have an identically zero
reaction row and zero diffusion, so they stay exactly zero; the integrator
preserves that bit for bit.

Travelling waves are measured from snapshot pairs: the speed comes from the
circular cross-correlation of species 1 (integer argmax, then a Newton
polish on the band-limited correlation, so the shift is not quantised to
the grid), the wavelength from its dominant spatial Fourier mode, and the
band order from the per-species dominance runs.  The reported `band_order`
is the temporal succession (the spatial sequence read against the
propagation direction), which is independent of which chirality the initial
condition happened to select; `band_order_spatial` is the same sequence
read along +x.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import model
from .errors import BlowUpError, ValidationError
from .model import ModelParams

__all__ = [
    "Field",
    "WaveMeasurement",
    "export_spacetime",
    "measure_wave",
    "random_ic",
    "read_spacetime",
    "seeded_ic",
    "simulate",
    "travelling_residual",
]

_BLOWUP = 1e3
_UNDERSHOOT = -1e-6


@dataclass(frozen=True)
class Field:
    """Periodic 1D state of n species on an equispaced grid.

    values has shape (n, N); grid point i sits at x = i L / N.
    """

    L: float
    N: int
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if not self.L > 0.0:
            raise ValidationError("domain length L must be positive")
        if self.N < 16 or self.N % 2:
            raise ValidationError("grid size N must be even and at least 16")
        v = np.array(self.values, dtype=float, order="C")
        if v.ndim != 2 or v.shape[1] != self.N:
            raise ValidationError("values must have shape (n, N)")
        if not np.all(np.isfinite(v)):
            raise ValidationError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.N) * (self.L / self.N)


@dataclass(frozen=True)
class WaveMeasurement:
    """What a snapshot pair says about an emergent travelling wave.

    band_order is the temporal succession of dominant species (1-based,
    rotated to start at the smallest index); band_order_spatial the same
    bands read along +x.  shift_residual is the relative L2 mismatch
    between the last snapshot and the previous one advected by the
    measured speed; is_wave marks whether that mismatch stays under the
    threshold and the state has spatial structure at all.
    """

    speed: float
    wavelength: float
    band_order: tuple
    band_order_spatial: tuple
    shift_residual: float
    is_wave: bool


def random_ic(params: ModelParams, L: float, N: int, amplitude: float,
              seed: int) -> Field:
    """Independent uniform values in (0, amplitude), reproducible by seed."""
    if not amplitude > 0.0:
        raise ValidationError("amplitude must be positive")
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, amplitude, size=(params.n, N))
    return Field(L=L, N=N, values=values, time=0.0)


def seeded_ic(profile, L: float, N: int, noise: float = 0.0,
              seed: int = 0) -> Field:
    """Tile a periodic-orbit profile across the domain, plus optional noise.

    profile needs a wavelength `Lambda` and log-state samples `profile`
    of shape (M, 2n) at equispaced points over one period.  L must be an
    integer number of wavelengths.  When the PDE grid puts exactly M
    points on each period the samples are copied verbatim; otherwise the
    density profile is resampled through its Fourier series.  Noise is
    uniform in (-noise, noise) per entry, clamped at zero.
    """
    lam = float(profile.Lambda)
    if not lam > 0.0:
        raise ValidationError("profile wavelength must be positive")
    copies = L / lam
    m = int(round(copies))
    if m < 1 or abs(copies - m) > 1e-8 * max(1.0, copies):
        best = max(1, m) * lam
        raise ValidationError(
            f"domain length {L:g} is not an integer number of wavelengths "
            f"{lam:g}; nearest admissible L is {best:.12g}")
    P = np.asarray(profile.profile, dtype=float)
    if P.ndim != 2 or P.shape[1] % 2:
        raise ValidationError("profile samples must have shape (M, 2n)")
    n = P.shape[1] // 2
    M = P.shape[0]
    X = np.exp(P[:, :n].T)  # (n, M) densities over one period
    if N % m == 0 and N // m == M:
        values = np.tile(X, m)
    else:
        # Evaluate the density Fourier series at the PDE grid points,
        # reduced modulo one period.
        coef = np.fft.rfft(X, axis=1) / M
        k = np.arange(coef.shape[1])
        theta = 2.0 * np.pi * ((np.arange(N) * m) % N) / N
        basis = np.exp(1j * np.outer(k, theta))  # (M//2+1, N)
        weights = np.full(coef.shape[1], 2.0)
        weights[0] = 1.0
        if M % 2 == 0:
            weights[-1] = 1.0
        values = np.real((coef * weights[None, :]) @ basis)
    if noise != 0.0:
        if noise < 0.0:
            raise ValidationError("noise amplitude must be non-negative")
        rng = np.random.default_rng(seed)
        values = values + rng.uniform(-noise, noise, size=values.shape)
        values = np.maximum(values, 0.0)
    return Field(L=L, N=N, values=values, time=0.0)


def _etdrk4_tables(symbol: np.ndarray, dt: float):
    """ETDRK4 coefficients for a diagonal real symbol.

    Each phi-function is averaged over 32 points on the unit circle around
    symbol*dt, so the small-|z| cancellations never surface.
    """
    z = symbol * dt
    E = np.exp(z)
    E2 = np.exp(z / 2.0)
    npts = 32
    r = np.exp(1j * np.pi * (np.arange(npts) + 0.5) / npts)
    zr = z[:, None] + r[None, :]
    ez = np.exp(zr)
    Q = dt * np.mean((np.exp(zr / 2.0) - 1.0) / zr, axis=1).real
    f1 = dt * np.mean(
        (-4.0 - zr + ez * (4.0 - 3.0 * zr + zr * zr)) / zr ** 3, axis=1).real
    f2 = dt * np.mean(
        (2.0 + zr + ez * (-2.0 + zr)) / zr ** 3, axis=1).real
    f3 = dt * np.mean(
        (-4.0 - 3.0 * zr - zr * zr + ez * (4.0 - zr)) / zr ** 3, axis=1).real
    return E, E2, Q, f1, f2, f3


def simulate(params: ModelParams, field: Field, dt: float, steps: int,
             record_every: int, *, reaction: bool = True,
             dealias: bool = False):
    """Advance the field by `steps` ETDRK4 steps of size dt.

    Returns the list of snapshots: the initial state, every
    record_every-th step, and the final state.  reaction=False integrates
    pure diffusion (a diagnostic; the linear part is then advanced
    exactly).  Aborts with BlowUpError when any |x| exceeds 1e3 or stops
    being finite.  Negative undershoots from spectral ringing are left
    alone but reported once per run if they pass -1e-6.
    """
    if field.n != params.n:
        raise ValidationError(
            f"field has {field.n} species, params have {params.n}")
    if not dt > 0.0:
        raise ValidationError("dt must be positive")
    if steps < 0:
        raise ValidationError("steps must be non-negative")
    if record_every < 1:
        raise ValidationError("record_every must be at least 1")
    N = field.N
    k = np.arange(N // 2 + 1)
    symbol = -((2.0 * np.pi / field.L) * k) ** 2
    E, E2, Q, f1, f2, f3 = _etdrk4_tables(symbol, dt)
    mask = None
    if dealias:
        mask = k < (N // 3)

    def nonlin(v):
        r = np.fft.rfft(model.reaction(params, v), axis=1)
        if mask is not None:
            r *= mask
        return r

    t0 = field.time
    vhat = np.fft.rfft(field.values, axis=1)
    snapshots = [Field(L=field.L, N=N, values=field.values, time=t0)]
    undershoot = 0.0
    for it in range(steps):
        v = np.fft.irfft(vhat, n=N, axis=1)
        lo = float(v.min()) if v.size else 0.0
        hi = float(v.max()) if v.size else 0.0
        t = t0 + it * dt
        if math.isnan(lo) or math.isnan(hi):
            raise BlowUpError(f"field became non-finite at t = {t:.6g}",
                              time=t)
        if max(abs(lo), abs(hi)) > _BLOWUP:
            raise BlowUpError(
                f"field magnitude exceeded {_BLOWUP:g} at t = {t:.6g}",
                time=t, max_value=max(abs(lo), abs(hi)))
        undershoot = min(undershoot, lo)
        if reaction:
            Nv = nonlin(v)
            a = E2 * vhat + Q * Nv
            Na = nonlin(np.fft.irfft(a, n=N, axis=1))
            b = E2 * vhat + Q * Na
            Nb = nonlin(np.fft.irfft(b, n=N, axis=1))
            c = E2 * a + Q * (2.0 * Nb - Nv)
            Nc = nonlin(np.fft.irfft(c, n=N, axis=1))
            vhat = E * vhat + f1 * Nv + 2.0 * f2 * (Na + Nb) + f3 * Nc
        else:
            vhat = E * vhat
        if (it + 1) % record_every == 0 or it + 1 == steps:
            snapshots.append(Field(L=field.L, N=N,
                                   values=np.fft.irfft(vhat, n=N, axis=1),
                                   time=t0 + (it + 1) * dt))
    if undershoot < _UNDERSHOOT:
        warnings.warn(f"negative undershoot reached {undershoot:.3e} "
                      "(spectral ringing)", RuntimeWarning, stacklevel=2)
    return snapshots


def _spectral_shift(values: np.ndarray, shift_grid: float) -> np.ndarray:
    """Translate each row right by shift_grid grid units (non-integer ok)."""
    N = values.shape[1]
    k = np.arange(N // 2 + 1)
    phase = np.exp(-2j * np.pi * k * (shift_grid / N))
    return np.fft.irfft(np.fft.rfft(values, axis=1) * phase, n=N, axis=1)


def _polish_shift(ahat, bhat, N, s0):
    """Newton-maximise the band-limited correlation near grid lag s0."""
    k = np.arange(ahat.size)
    mult = np.full(ahat.size, 2.0)
    mult[0] = 1.0
    if N % 2 == 0:
        mult[-1] = 1.0
    cross = mult * np.conj(ahat) * bhat
    w = 2.0 * np.pi * k / N

    def derivs(s):
        ph = cross * np.exp(1j * w * s)
        d1 = float(np.real(np.sum(1j * w * ph)))
        d2 = float(np.real(np.sum(-(w * w) * ph)))
        return d1, d2

    s = float(s0)
    for _ in range(12):
        d1, d2 = derivs(s)
        if d2 >= 0.0:
            break
        step = -d1 / d2
        if abs(step) > 1.0:
            step = math.copysign(1.0, step)
        s += step
        if abs(step) <= 1e-12:
            break
    return s


def _dominance_bands(values: np.ndarray):
    """Spatial order of dominant species: each species' longest run start."""
    dom = np.argmax(values, axis=0)
    N = dom.size
    # Run-length encode around the circle, starting at a run boundary.
    change = np.nonzero(np.diff(dom))[0]
    if change.size == 0:
        return (int(dom[0]) + 1,)
    start = int(change[0]) + 1
    rolled = np.roll(dom, -start)
    edges = np.concatenate(([0], np.nonzero(np.diff(rolled))[0] + 1, [N]))
    best = {}
    for lo, hi in zip(edges[:-1], edges[1:]):
        sp = int(rolled[lo])
        length = hi - lo
        if sp not in best or length > best[sp][0]:
            best[sp] = (length, (lo + start) % N)
    order = sorted(best, key=lambda sp: best[sp][1])
    return tuple(sp + 1 for sp in order)


def _canonical(cycle: tuple) -> tuple:
    if not cycle:
        return cycle
    i = cycle.index(min(cycle))
    return cycle[i:] + cycle[:i]


def measure_wave(snapshots, *, wave_tol: float = 0.05) -> WaveMeasurement:
    """Speed, wavelength, and band structure from the last snapshot pair."""
    if len(snapshots) < 2:
        raise ValidationError("measure_wave needs at least two snapshots")
    a, b = snapshots[-2], snapshots[-1]
    if a.N != b.N or a.n != b.n or a.L != b.L:
        raise ValidationError("snapshots live on different grids")
    dt = b.time - a.time
    if not dt > 0.0:
        raise ValidationError("snapshots must be separated by positive time")
    N, L = b.N, b.L
    s1a = a.values[0] - a.values[0].mean()
    s1b = b.values[0] - b.values[0].mean()
    scale = float(np.max(np.abs(b.values))) if b.values.size else 0.0
    structured = float(np.ptp(b.values[0])) > 1e-12 * max(1.0, scale)

    spec_b = np.fft.rfft(b.values[0])
    k_dom = 1 + int(np.argmax(np.abs(spec_b[1:]))) if spec_b.size > 1 else 1
    wavelength = L / k_dom

    if structured:
        ahat = np.fft.rfft(s1a)
        bhat = np.fft.rfft(s1b)
        corr = np.fft.irfft(np.conj(ahat) * bhat, n=N)
        s0 = int(np.argmax(corr))
        s = _polish_shift(ahat, bhat, N, s0)
        s = (s + N / 2.0) % N - N / 2.0  # signed shift in grid units
        speed = s * (L / N) / dt
        shifted = _spectral_shift(a.values, s)
        num = float(np.linalg.norm(shifted - b.values))
        den = float(np.linalg.norm(b.values))
        shift_residual = num / den if den > 0.0 else 0.0
    else:
        speed = 0.0
        shift_residual = float(np.linalg.norm(a.values - b.values)) \
            / max(float(np.linalg.norm(b.values)), 1e-300)

    spatial = _dominance_bands(b.values)
    if speed > 0.0:
        succession = tuple(reversed(spatial))
    else:
        succession = spatial
    return WaveMeasurement(
        speed=speed,
        wavelength=wavelength,
        band_order=_canonical(succession),
        band_order_spatial=_canonical(spatial),
        shift_residual=shift_residual,
        is_wave=bool(structured and shift_residual <= wave_tol),
    )


def travelling_residual(params: ModelParams, field: Field, gamma: float, *,
                        method: str = "spectral") -> float:
    """Max-norm defect of X'' + gamma X' + f(X) on the periodic grid.

    A travelling solution x(x, t) = X(x - gamma t) of the PDE makes this
    zero; method "fd" uses second-order central differences instead of
    spectral derivatives.
    """
    v = field.values
    if method == "spectral":
        k = 2.0 * np.pi / field.L * np.arange(field.N // 2 + 1)
        vhat = np.fft.rfft(v, axis=1)
        d1 = np.fft.irfft(1j * k * vhat, n=field.N, axis=1)
        d2 = np.fft.irfft(-(k * k) * vhat, n=field.N, axis=1)
    elif method == "fd":
        dx = field.L / field.N
        d1 = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * dx)
        d2 = (np.roll(v, -1, axis=1) - 2.0 * v
              + np.roll(v, 1, axis=1)) / (dx * dx)
    else:
        raise ValidationError(f"unknown derivative method {method!r}")
    res = d2 + gamma * d1 + model.reaction(params, v)
    return float(np.max(np.abs(res)))


def export_spacetime(trajectory, path, *, params: ModelParams | None = None,
                     gamma: float | None = None, dt: float | None = None,
                     seed: int | None = None, settings: dict | None = None,
                     measurement: WaveMeasurement | None = None) -> Path:
    """Write snapshots as CSV (t,x,s1..sn) plus a metadata JSON sidecar.

    Rows are ordered by (t, x) and printed with 17 significant digits, so
    a read-back reproduces the float64 values exactly.  The sidecar
    (same name, .json) records the grid and whatever run context is
    passed in.
    """
    if not trajectory:
        raise ValidationError("trajectory is empty")
    path = Path(path)
    first = trajectory[0]
    n, N, L = first.n, first.N, first.L
    for f in trajectory:
        if f.n != n or f.N != N or f.L != L:
            raise ValidationError("snapshots live on different grids")
    x = np.arange(N) * (L / N)
    rows = np.empty((len(trajectory) * N, 2 + n))
    for i, f in enumerate(trajectory):
        block = rows[i * N:(i + 1) * N]
        block[:, 0] = f.time
        block[:, 1] = x
        block[:, 2:] = f.values.T
    header = "t,x," + ",".join(f"s{j + 1}" for j in range(n))
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header,
               comments="")
    meta = {
        "grid": {"L": L, "N": N, "n": n},
        "times": [f.time for f in trajectory],
        "params": None if params is None else {
            "n": params.n, "c1": params.c1, "e1": params.e1,
            "t": list(params.t)},
        "gamma": gamma,
        "dt": dt,
        "seed": seed,
        "settings": settings,
        "measurement": None if measurement is None else asdict(measurement),
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_spacetime(path):
    """Read a spacetime CSV back into the list of Field snapshots."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        if len(header) < 3 or header[:2] != ["t", "x"]:
            raise ValidationError("not a spacetime CSV (bad header)")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = len(header) - 2
    if data.shape[1] != 2 + n:
        raise ValidationError("column count does not match header")
    t = data[:, 0]
    starts = np.concatenate(([0], np.nonzero(np.diff(t))[0] + 1,
                             [t.size]))
    sizes = np.diff(starts)
    if np.any(sizes != sizes[0]):
        raise ValidationError("snapshots have unequal grid sizes")
    N = int(sizes[0])
    dx = data[1, 1] - data[0, 1]
    L = dx * N
    fields = []
    for lo, hi in zip(starts[:-1], starts[1:]):
        fields.append(Field(L=L, N=N, values=data[lo:hi, 2:].T,
                            time=float(t[lo])))
    return fields
