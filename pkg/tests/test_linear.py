import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cyclewave.errors import BracketError, ValidationError
from cyclewave.linear import (
    HopfPoint,
    bd_curve,
    bd_locus,
    block_shift,
    block_symbols,
    classify_region,
    coexistence_eigenvector,
    coexistence_spectrum,
    detect_hopf,
    hopf_point,
    onaxis_spectrum,
    quadratic_pair,
    resonance_locus,
    resonance_root,
    resonance_value,
)
from cyclewave.model import (
    ModelParams,
    equilibria,
    frame_state,
    travelling_jacobian,
)

P_E1 = ModelParams(n=4, c1=3.3, e1=1.0, t=(2.0,))
P_E4 = ModelParams(n=4, c1=3.3, e1=4.0, t=(2.0,))
P5 = ModelParams(n=5, c1=3.3, e1=0.1, t=(2.3, 1.7))


def random_params(rng, n=None):
    if n is None:
        n = int(rng.integers(3, 7))
    draw = lambda: float(rng.uniform(0.1, 5.0))
    return ModelParams(n=n, c1=draw(), e1=draw(),
                       t=tuple(draw() for _ in range(n - 3)))


def test_quadratic_pair_oracle():
    # roots of l^2 - 2l - 3.3: 1 +- sqrt(17.2)/2
    plus, minus = quadratic_pair(2.0, 3.3)
    assert plus == pytest.approx(3.073644135332772, abs=1e-14)
    assert minus == pytest.approx(-1.073644135332772, abs=1e-14)
    # complex branch: k < -gamma^2/4
    cp, cm = quadratic_pair(2.0, -4.0)
    assert cp == pytest.approx(complex(1.0, math.sqrt(3.0)))
    assert cm == cp.conjugate()


def test_vieta_identities_over_draws():
    rng = np.random.default_rng(42)
    for _ in range(100):
        p = random_params(rng)
        gamma = float(rng.uniform(0.2, 6.0))
        spec = onaxis_spectrum(p, gamma)
        named = [(spec.lambda_r_pm, -1.0), (spec.lambda_c_pm, -p.c1),
                 (spec.lambda_e_pm, p.e1)]
        named += [(pair, -ti) for pair, ti in zip(spec.lambda_t_pm, p.t)]
        for (plus, minus), product in named:
            assert abs(plus + minus - gamma) < 1e-12
            assert abs(plus * minus - product) < 1e-12


def test_onaxis_eigen_residuals():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = random_params(rng)
        gamma = float(rng.uniform(0.2, 6.0))
        spec = onaxis_spectrum(p, gamma)
        y = frame_state(equilibria(p).on_axis[0])
        A = travelling_jacobian(p, gamma, y)
        pairs = {"r": spec.lambda_r_pm, "c": spec.lambda_c_pm,
                 "e": spec.lambda_e_pm}
        pairs.update({f"t{i}": pr
                      for i, pr in enumerate(spec.lambda_t_pm, start=1)})
        for tag, (plus, minus) in pairs.items():
            for sign, lam in zip("+-", (plus, minus)):
                v = spec.vectors[tag + sign]
                assert np.max(np.abs(A @ v - lam * v)) <= 1e-9


def test_spectrum_pair_accessor():
    spec = onaxis_spectrum(P5, 1.0)
    assert spec.pair("t2") == spec.lambda_t_pm[1]
    assert spec.pair("c") == spec.lambda_c_pm
    with pytest.raises(KeyError):
        spec.pair("z")


def test_complex_expanding_flag():
    assert onaxis_spectrum(P_E4, 1.0).complex_expanding
    assert not onaxis_spectrum(P_E4, 5.0).complex_expanding
    # boundary gamma^2 = 4 e1 counts as real (zero discriminant)
    assert not onaxis_spectrum(P_E1, 2.0).complex_expanding


def test_block_symbols_base_block():
    q = block_symbols(P_E4)
    assert q[0] == 1.0
    # n=4 block 2 has rho = -1: (1 - (c1+1) + (t1+1) - (1-e1))/alpha
    assert q[2] == pytest.approx((2.0 - 3.3 + 4.0) / 5.3)
    # block 3 conjugates block 1
    assert q[3] == pytest.approx(np.conj(q[1]))


def test_coexistence_matches_dense_eigensolver():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = random_params(rng)
        gamma = float(rng.uniform(0.2, 6.0))
        roots = coexistence_spectrum(p, gamma)
        y = frame_state(equilibria(p).coexistence)
        dense = np.linalg.eigvals(travelling_jacobian(p, gamma, y))
        unused = list(dense)
        worst = 0.0
        for r in roots:
            dists = [abs(r - d) for d in unused]
            i = int(np.argmin(dists))
            worst = max(worst, dists[i])
            unused.pop(i)
        assert worst <= 1e-9


def test_coexistence_eigenvector_residual():
    gamma = 1.7
    roots = coexistence_spectrum(P5, gamma)
    y = frame_state(equilibria(P5).coexistence)
    A = travelling_jacobian(P5, gamma, y)
    for block in (1, 2, 3):
        lam = roots[2 * block]
        v = coexistence_eigenvector(P5, gamma, block, lam)
        assert np.max(np.abs(A @ v - lam * v)) <= 1e-9


def test_hopf_formula_point():
    # (c1+t1)/sqrt(alpha*t1) with alpha=8.3: 5.3/sqrt(16.6)
    hp = hopf_point(P_E1)
    assert hp.source == "formula"
    assert hp.gamma_H == pytest.approx(1.3008338382356122, abs=1e-13)
    assert hp.omega_H**2 == pytest.approx(2.0 / 8.3, abs=1e-15)
    assert hp.Lambda_H == pytest.approx(12.799821602588192, abs=1e-10)
    # omega^2 * alpha = t1 identically
    assert abs(hp.omega_H**2 * 8.3 - 2.0) < 1e-12


def test_hopf_formula_needs_transverse_species():
    with pytest.raises(ValidationError):
        hopf_point(ModelParams(n=3, c1=3.3, e1=1.0, t=()))


def test_detect_hopf_numeric_crossing():
    hp = detect_hopf(P_E1, (0.5, 2.0))
    assert hp.source == "numeric-detection"
    # the detected crossing follows (c1+e1)/sqrt(alpha*t1), not the
    # closed-form point above; block-symbol algebra for n=4 gives
    # Re q = -t1/alpha, |Im q| = (c1+e1)/alpha
    assert hp.gamma_H == pytest.approx((3.3 + 1.0) / math.sqrt(8.3 * 2.0),
                                       abs=1e-9)
    assert hp.gamma_H == pytest.approx(1.0553934913987042, abs=1e-8)
    assert hp.omega_H**2 == pytest.approx(2.0 / 8.3, abs=1e-6)
    # a spectrum pair sits on the imaginary axis to 1e-8
    roots = coexistence_spectrum(P_E1, hp.gamma_H)
    off_axis = [abs(r.real) for r in roots if abs(r.imag) > 1e-6]
    assert min(off_axis) <= 1e-8
    # the formula point is materially different here (reported, not equal)
    assert abs(hopf_point(P_E1).gamma_H - hp.gamma_H) > 1e-3


def test_detect_hopf_respects_block_choice():
    # five-species family: the first crossing comes from blocks 1/4,
    # the mode with succession shift 3 comes from blocks 2/3 at lower gamma
    first = detect_hopf(P5, (0.05, 1.0))
    assert first.block in (1, 4)
    assert first.gamma_H == pytest.approx(0.6849203667175155, abs=1e-8)
    inner = detect_hopf(P5, (0.05, 1.0), block=2)
    assert inner.gamma_H == pytest.approx(0.3514663744861756, abs=1e-8)
    assert inner.omega_H == pytest.approx(0.3329926898843229, abs=1e-8)
    assert inner.Lambda_H == pytest.approx(18.86883856027674, abs=1e-6)


def test_detect_hopf_no_crossing():
    with pytest.raises(BracketError):
        detect_hopf(P_E1, (5.0, 9.0))


def test_block_shift_inverses():
    assert block_shift(4, 1) == 1
    assert block_shift(4, 3) == 3
    assert block_shift(4, 2) is None
    assert block_shift(5, 2) == 3
    assert block_shift(5, 3) == 2
    assert block_shift(6, 3) is None


def test_resonance_values():
    # lambda^-(k) = (gamma - sqrt(gamma^2+4k))/2 summed over k = -e1, c1, t1
    assert resonance_value(P_E4, 4.0) == pytest.approx(0.8486590399955629,
                                                       abs=1e-13)
    assert resonance_value(P_E4, 5.0) == pytest.approx(0.03741124865849699,
                                                       abs=1e-13)
    assert resonance_value(P_E4, 6.0) == pytest.approx(-0.05982835120522623,
                                                       abs=1e-13)


def test_resonance_complex_flag():
    s = resonance_value(P_E4, 1.0)  # gamma^2 < 4 e1
    assert isinstance(s, complex) and s.imag != 0.0


def test_resonance_reduces_for_n3():
    p = ModelParams(n=3, c1=3.3, e1=4.0, t=())
    gamma = 5.0
    expected = quadratic_pair(gamma, p.c1)[1] + quadratic_pair(gamma, -p.e1)[1]
    assert resonance_value(p, gamma) == pytest.approx(expected, abs=1e-14)


def test_resonance_root_and_monotonicity():
    root = resonance_root(P_E4)
    assert root == pytest.approx(5.256721653920195, abs=1e-8)
    # decreasing through the crossing (it flattens out much further right)
    gammas = np.linspace(2.0 * math.sqrt(4.0) + 1e-6, 7.0, 200)
    values = [resonance_value(P_E4, g) for g in gammas]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert all(resonance_value(P_E4, g) < 0 for g in (8.0, 12.0, 30.0))


def test_resonance_locus_records():
    curve = resonance_locus(P_E4, [3.0, 4.0, 5.0])
    assert [pt["e1"] for pt in curve] == [3.0, 4.0, 5.0]
    assert all(pt["kind"] == "resonance" for pt in curve)
    at4 = next(pt for pt in curve if pt["e1"] == 4.0)
    assert at4["gamma"] == pytest.approx(5.256721653920195, abs=1e-8)


def test_bd_locus_values():
    assert bd_locus(1.0) == 2.0
    assert bd_locus(0.25) == 1.0
    with pytest.raises(ValidationError):
        bd_locus(-1.0)
    curve = bd_curve([1.0, 4.0])
    assert curve[1] == {"e1": 4.0, "gamma": 4.0, "kind": "bd"}
    # zero discriminant on the curve: both expanding eigenvalues = gamma/2
    spec = onaxis_spectrum(P_E1, 2.0)
    assert spec.lambda_e_pm[0] == spec.lambda_e_pm[1] == 1.0


def test_classify_region_examples():
    assert classify_region(P_E1, 1.0).label == 1
    assert classify_region(P_E1, 1.0).complex_expanding
    r2 = classify_region(P_E4, 5.0)
    assert r2.label == 2 and r2.resonance_sum == pytest.approx(0.0374112486,
                                                               abs=1e-9)
    assert classify_region(P_E4, 6.0).label == 34


def test_classify_region_flips_at_bd_curve():
    for e1, p in ((1.0, P_E1), (4.0, P_E4)):
        g = bd_locus(e1)
        assert classify_region(p, g).label != 1
        assert classify_region(p, math.nextafter(g, 0.0)).label == 1


def test_hopf_point_type_is_frozen_record():
    hp = HopfPoint(gamma_H=1.0, omega_H=2.0, Lambda_H=math.pi, source="formula")
    with pytest.raises(AttributeError):
        hp.gamma_H = 3.0
