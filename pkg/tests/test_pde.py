import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from cyclewave import pde
from cyclewave.errors import BlowUpError, ValidationError
from cyclewave.model import ModelParams, reaction

P4 = ModelParams(n=4, c1=3.3, e1=1.0, t=(2.0,))


def smooth_field(L=40.0, N=64, n=4, base=0.2, amp=0.05, time=0.0):
    x = np.arange(N) * (L / N)
    values = np.empty((n, N))
    for j in range(n):
        values[j] = base + amp * np.sin(2 * np.pi * x / L + 1.7 * j)
    return pde.Field(L=L, N=N, values=values, time=time)


def translating_pair(shift, L=100.0, N=256, dt=2.5, t0=10.0):
    # Four bands in spatial order 1,2,3,4 along +x, plus a second harmonic
    # so the correlation peak is sharp.
    x = np.arange(N) * (L / N)

    def prof(s):
        v = np.empty((4, N))
        for j in range(4):
            v[j] = (0.3 + 0.2 * np.cos(2 * np.pi * (x - s) / L - j * np.pi / 2)
                    + 0.05 * np.cos(4 * np.pi * (x - s) / L + j))
        return v

    a = pde.Field(L=L, N=N, values=prof(0.0), time=t0)
    b = pde.Field(L=L, N=N, values=prof(shift), time=t0 + dt)
    return a, b, dt


def test_field_validation():
    ok = np.zeros((3, 16))
    with pytest.raises(ValidationError):
        pde.Field(L=0.0, N=16, values=ok)
    with pytest.raises(ValidationError):
        pde.Field(L=10.0, N=15, values=np.zeros((3, 15)))
    with pytest.raises(ValidationError):
        pde.Field(L=10.0, N=8, values=np.zeros((3, 8)))
    with pytest.raises(ValidationError):
        pde.Field(L=10.0, N=16, values=np.zeros(16))
    with pytest.raises(ValidationError):
        pde.Field(L=10.0, N=16, values=np.zeros((3, 20)))
    bad = ok.copy()
    bad[1, 3] = np.nan
    with pytest.raises(ValidationError):
        pde.Field(L=10.0, N=16, values=bad)
    f = pde.Field(L=10.0, N=16, values=ok)
    assert f.n == 3
    assert f.x[1] == pytest.approx(10.0 / 16)


def test_simulate_argument_validation():
    f = smooth_field()
    with pytest.raises(ValidationError):
        pde.simulate(ModelParams(n=5, c1=3.3, e1=1.0, t=(2.0, 2.0)),
                     f, 0.05, 10, 10)
    with pytest.raises(ValidationError):
        pde.simulate(P4, f, 0.0, 10, 10)
    with pytest.raises(ValidationError):
        pde.simulate(P4, f, 0.05, -1, 10)
    with pytest.raises(ValidationError):
        pde.simulate(P4, f, 0.05, 10, 0)


def test_snapshot_schedule():
    f = smooth_field()
    snaps = pde.simulate(P4, f, 0.05, 10, 4)
    assert [s.time for s in snaps] == pytest.approx(
        [0.0, 0.2, 0.4, 0.5])
    assert pde.simulate(P4, f, 0.05, 0, 1) \
        and len(pde.simulate(P4, f, 0.05, 0, 1)) == 1


def test_zero_field_stays_zero():
    f = pde.Field(L=40.0, N=64, values=np.zeros((4, 64)))
    snaps = pde.simulate(P4, f, 0.05, 30, 30)
    assert np.all(snaps[-1].values == 0.0)


def test_extinct_species_stays_exactly_zero():
    # The reaction is multiplicative and diffusion is diagonal, so a species
    # that starts identically zero can never be reseeded, not even by
    # round-off.
    rng = np.random.default_rng(5)
    values = rng.uniform(0.05, 0.2, (4, 64))
    values[2] = 0.0
    f = pde.Field(L=40.0, N=64, values=values)
    snaps = pde.simulate(P4, f, 0.05, 200, 200)
    assert np.all(snaps[-1].values[2] == 0.0)
    assert np.any(snaps[-1].values[0] != values[0])


def test_pure_diffusion_is_exact():
    # With reaction=False the update is vhat *= exp(symbol dt): a single
    # Fourier mode must decay by exp(-(2 pi k/L)^2 t) to round-off.
    L, N, k = 50.0, 128, 3
    x = np.arange(N) * (L / N)
    ic = np.tile(0.5 + 0.1 * np.cos(2 * np.pi * k * x / L), (4, 1))
    f = pde.Field(L=L, N=N, values=ic)
    snaps = pde.simulate(P4, f, 0.05, 20, 20, reaction=False)
    t = snaps[-1].time
    decay = np.exp(-((2 * np.pi * k / L) ** 2) * t)
    expect = 0.5 + 0.1 * decay * np.cos(2 * np.pi * k * x / L)
    assert np.max(np.abs(snaps[-1].values - expect)) < 1e-12


def test_etdrk4_order():
    # Halving dt four times against a dt/64 reference: local fits give
    # observed orders slightly above 4; anything >= 3.8 passes.
    f = smooth_field()
    ref = pde.simulate(P4, f, 0.0015625, 640, 640)[-1].values
    errs = []
    for dt, steps in [(0.1, 10), (0.05, 20), (0.025, 40), (0.0125, 80)]:
        out = pde.simulate(P4, f, dt, steps, steps)[-1].values
        errs.append(np.max(np.abs(out - ref)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.8)


def test_translation_equivariance():
    # Rolling the initial data by a whole number of grid cells commutes
    # with the integrator up to FFT round-off.
    rng = np.random.default_rng(11)
    values = rng.uniform(0.05, 0.25, (4, 64))
    f = pde.Field(L=40.0, N=64, values=values)
    g = pde.Field(L=40.0, N=64, values=np.roll(values, 37, axis=1))
    a = pde.simulate(P4, f, 0.05, 40, 40)[-1].values
    b = pde.simulate(P4, g, 0.05, 40, 40)[-1].values
    assert_allclose(np.roll(a, 37, axis=1), b, rtol=0.0,
                    atol=1e-12 * np.max(np.abs(a)))


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=1, max_value=63))
def test_translation_equivariance_any_roll(shift):
    rng = np.random.default_rng(11)
    values = rng.uniform(0.05, 0.25, (4, 64))
    f = pde.Field(L=40.0, N=64, values=values)
    g = pde.Field(L=40.0, N=64, values=np.roll(values, shift, axis=1))
    a = pde.simulate(P4, f, 0.05, 5, 5)[-1].values
    b = pde.simulate(P4, g, 0.05, 5, 5)[-1].values
    assert_allclose(np.roll(a, shift, axis=1), b, rtol=0.0, atol=1e-13)


def test_dealias_close_on_smooth_data():
    f = smooth_field()
    a = pde.simulate(P4, f, 0.05, 40, 40)[-1].values
    b = pde.simulate(P4, f, 0.05, 40, 40, dealias=True)[-1].values
    assert_allclose(a, b, rtol=1e-6, atol=1e-9)


def test_blowup_aborts():
    f = pde.Field(L=40.0, N=64, values=np.full((4, 64), 900.0))
    with pytest.raises(BlowUpError) as exc:
        pde.simulate(P4, f, 0.05, 100, 100)
    assert exc.value.time is not None
    assert exc.value.max_value is None or exc.value.max_value > 1e3


def test_undershoot_warns():
    values = np.full((4, 64), 0.1)
    values[0, 5] = -1e-4
    f = pde.Field(L=40.0, N=64, values=values)
    with pytest.warns(RuntimeWarning, match="undershoot"):
        pde.simulate(P4, f, 0.05, 2, 2)


def test_random_ic_reproducible_and_in_range():
    a = pde.random_ic(P4, 500.0, 256, 1e-3, seed=42)
    b = pde.random_ic(P4, 500.0, 256, 1e-3, seed=42)
    c = pde.random_ic(P4, 500.0, 256, 1e-3, seed=43)
    assert np.array_equal(a.values, b.values)
    assert np.mean(a.values != c.values) > 0.99
    assert a.values.shape == (4, 256)
    assert np.all(a.values >= 0.0) and np.all(a.values < 1e-3)
    with pytest.raises(ValidationError):
        pde.random_ic(P4, 500.0, 256, 0.0, seed=1)


class FakeOrbit:
    # Quacks like a periodic-orbit record: wavelength plus log-state
    # samples over one period.
    def __init__(self, Lambda=10.0, M=20, n=4):
        self.Lambda = Lambda
        s = np.arange(M) / M
        dens = 0.3 + 0.1 * np.cos(
            2 * np.pi * np.add.outer(np.arange(n) * 0.25, s))
        self.profile = np.concatenate(
            [np.log(dens).T, np.zeros((M, n))], axis=1)
        self.dens = dens


def test_seeded_ic_tiles_exactly():
    # When the grid puts exactly M points on each period, the density
    # samples exp(log-state) are copied verbatim, bit for bit.
    orb = FakeOrbit()
    f = pde.seeded_ic(orb, 40.0, 80)
    samples = np.exp(np.asarray(orb.profile)[:, :4].T)
    assert np.array_equal(f.values, np.tile(samples, 4))


def test_seeded_ic_resamples_spectrally():
    orb = FakeOrbit()
    f = pde.seeded_ic(orb, 40.0, 96)
    x = np.arange(96) * (40.0 / 96)
    exact = 0.3 + 0.1 * np.cos(
        2 * np.pi * (np.add.outer(np.arange(4) * 0.25 * 10.0, x)) / 10.0)
    assert_allclose(f.values, exact, rtol=0.0, atol=1e-12)


def test_seeded_ic_rejects_incompatible_length():
    orb = FakeOrbit(Lambda=10.0)
    with pytest.raises(ValidationError, match="40"):
        pde.seeded_ic(orb, 43.0, 96)


def test_seeded_ic_noise_clamped():
    orb = FakeOrbit()
    f = pde.seeded_ic(orb, 40.0, 80, noise=0.5, seed=3)
    g = pde.seeded_ic(orb, 40.0, 80, noise=0.5, seed=3)
    assert np.array_equal(f.values, g.values)
    assert f.values.min() >= 0.0
    assert not np.array_equal(f.values, np.tile(orb.dens, 4))
    with pytest.raises(ValidationError):
        pde.seeded_ic(orb, 40.0, 80, noise=-0.1)


@pytest.mark.parametrize("shift_x", [0.0, 1.171875, 3.7, -2.31, 17.0])
def test_measured_speed_matches_imposed_shift(shift_x):
    # The Newton polish on the band-limited correlation recovers shifts
    # that are not multiples of the grid spacing.
    a, b, dt = translating_pair(shift_x)
    m = pde.measure_wave([a, b])
    assert m.speed == pytest.approx(shift_x / dt, abs=1e-9)
    assert m.shift_residual < 1e-10
    assert m.is_wave
    assert m.wavelength == pytest.approx(100.0)


def test_band_order_conventions():
    # Spatial order is 1,2,3,4 along +x by construction.  For a
    # right-moving wave the succession at a fixed point runs against the
    # spatial order; for a left-moving wave it runs with it.
    a, b, _ = translating_pair(3.7)
    m = pde.measure_wave([a, b])
    assert m.band_order_spatial == (1, 2, 3, 4)
    assert m.band_order == (1, 4, 3, 2)
    a, b, _ = translating_pair(-3.7)
    m = pde.measure_wave([a, b])
    assert m.speed < 0.0
    assert m.band_order_spatial == (1, 2, 3, 4)
    assert m.band_order == (1, 2, 3, 4)


def test_uniform_state_is_not_a_wave():
    u = np.full((4, 64), 0.25)
    a = pde.Field(L=40.0, N=64, values=u, time=0.0)
    b = pde.Field(L=40.0, N=64, values=u, time=1.0)
    m = pde.measure_wave([a, b])
    assert not m.is_wave
    assert m.speed == 0.0


def test_measure_wave_validation():
    a, b, _ = translating_pair(1.0)
    with pytest.raises(ValidationError):
        pde.measure_wave([a])
    with pytest.raises(ValidationError):
        pde.measure_wave([b, a])  # time runs backwards
    other = pde.Field(L=50.0, N=256, values=b.values, time=b.time)
    with pytest.raises(ValidationError):
        pde.measure_wave([a, other])


def test_travelling_residual_manufactured():
    # v_j = base + amp sin(2 pi x/L + phase_j) has known derivatives, so
    # both derivative methods must reproduce d2 + gamma d1 + f(v).
    L, N, gamma = 40.0, 256, 1.3
    x = np.arange(N) * (L / N)
    w = 2 * np.pi / L
    v = np.empty((4, N))
    d1 = np.empty((4, N))
    d2 = np.empty((4, N))
    for j in range(4):
        v[j] = 0.2 + 0.05 * np.sin(w * x + 1.7 * j)
        d1[j] = 0.05 * w * np.cos(w * x + 1.7 * j)
        d2[j] = -0.05 * w * w * np.sin(w * x + 1.7 * j)
    f = pde.Field(L=L, N=N, values=v)
    expect = float(np.max(np.abs(d2 + gamma * d1 + reaction(P4, v))))
    got = pde.travelling_residual(P4, f, gamma)
    assert got == pytest.approx(expect, rel=1e-10)
    got_fd = pde.travelling_residual(P4, f, gamma, method="fd")
    assert got_fd == pytest.approx(expect, rel=5e-4)
    with pytest.raises(ValidationError):
        pde.travelling_residual(P4, f, gamma, method="cheb")


def test_spacetime_roundtrip(tmp_path):
    a, b, _ = translating_pair(2.5)
    m = pde.measure_wave([a, b])
    path = tmp_path / "run.csv"
    pde.export_spacetime([a, b], path, params=P4, gamma=1.2, dt=0.05,
                         seed=7, settings={"dealias": False}, measurement=m)
    text = path.read_text().splitlines()
    assert text[0] == "t,x,s1,s2,s3,s4"
    assert len(text) == 1 + 2 * 256
    back = pde.read_spacetime(path)
    assert len(back) == 2
    assert np.array_equal(back[0].values, a.values)
    assert np.array_equal(back[1].values, b.values)
    assert back[0].time == a.time and back[1].time == b.time
    assert back[0].L == a.L and back[0].N == a.N
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["grid"] == {"L": 100.0, "N": 256, "n": 4}
    assert meta["gamma"] == 1.2
    assert meta["params"]["t"] == [2.0]
    assert meta["measurement"]["speed"] == m.speed
    assert meta["measurement"]["band_order"] == list(m.band_order)


def test_export_validation(tmp_path):
    with pytest.raises(ValidationError):
        pde.export_spacetime([], tmp_path / "x.csv")
    a, b, _ = translating_pair(1.0)
    other = pde.Field(L=b.L, N=b.N, values=b.values[:3], time=b.time)
    with pytest.raises(ValidationError):
        pde.export_spacetime([a, other], tmp_path / "x.csv")


def test_read_rejects_foreign_csv(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValidationError):
        pde.read_spacetime(path)
