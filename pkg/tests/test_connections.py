"""Tests for heteroclinic connection shooting and the orbit-flip loci."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cyclewave.connections import (
    Subspace,
    connection_residual,
    connection_to_csv,
    departure_angle,
    expanding_angle,
    find_connection,
    mu_image,
    orbitflip_locus,
    pair_subspace,
    triple_subspace,
)
from cyclewave.errors import (BracketError, NewtonError, ValidationError)
from cyclewave.model import ModelParams
from cyclewave.returnmap import FOUR_SADDLE, TWO_SADDLE

P_UNIT = ModelParams(n=4, c1=3.3, e1=1.0, t=(2.0,))
P_WEAK = ModelParams(n=4, c1=3.3, e1=0.1, t=(2.0,))
P_FLIP = ModelParams(n=4, c1=3.3, e1=0.35, t=(2.0,))

# Solver outputs frozen from verified runs.  Pair flight times reproduce
# to 1e-8; the three-species transit time trades against the passage
# depth along a direction the residual barely sees, so it is compared
# loosely (see the triple tests).
T_PAIR_G2 = 35.42211340
DIR_PAIR_G2 = np.array([-0.66174586, 0.30778884, -0.61986731, 0.28831054])
T_PAIR_G22 = 42.07394607
ANGLE_PAIR_G22 = 1.5671939161
ANGLE_PAIR_G22_HALF_H = 1.5689070606
T_PAIR_WEAK = 142.34645406
T_TRIPLE_G2 = 71.798
T_TRIPLE_WEAK3 = 86.374
SIGMA_ROOTS = {0.3: 1.15244873, 0.35: 1.20885660,
               0.4: 1.27097113, 0.42: 1.29744647}


@pytest.fixture(scope="module")
def pair_g2():
    return find_connection(P_UNIT, 2.0, pair_subspace(4))


@pytest.fixture(scope="module")
def pair_g22():
    return find_connection(P_UNIT, 2.2, pair_subspace(4))


@pytest.fixture(scope="module")
def triple_g2():
    return find_connection(P_UNIT, 2.0, triple_subspace(4))


@pytest.fixture(scope="module")
def sigma_locus():
    return orbitflip_locus(P_WEAK.with_e1(0.3),
                           [0.3, 0.35, 0.4, 0.42, 0.44, 0.5, 0.6],
                           FOUR_SADDLE)


def test_subspace_shapes():
    assert pair_subspace(4).species == (1, 2)
    assert pair_subspace(4, start=4).species == (4, 1)
    assert triple_subspace(5, start=4).species == (4, 5, 1)
    assert pair_subspace(4).indices == (0, 1)
    assert triple_subspace(4).source == 1
    assert triple_subspace(4).target == 3


def test_subspace_validation():
    with pytest.raises(ValidationError):
        Subspace(n=3, species=(1, 2))
    with pytest.raises(ValidationError):
        Subspace(n=4, species=(1,))
    with pytest.raises(ValidationError):
        Subspace(n=4, species=(1, 2, 3, 4))
    with pytest.raises(ValidationError):
        Subspace(n=4, species=(1, 5))
    with pytest.raises(ValidationError):
        Subspace(n=4, species=(1, 3))


def test_pair_connection_exists(pair_g2):
    c = pair_g2
    assert c.source == 1 and c.target == 2
    assert c.residual <= 1e-8
    assert abs(c.T - T_PAIR_G2) <= 1e-5
    assert np.max(np.abs(np.asarray(c.direction) - DIR_PAIR_G2)) <= 1e-5
    assert abs(np.linalg.norm(c.direction) - 1.0) <= 1e-12


def test_pair_connection_leaves_inactive_species_exactly_zero(pair_g2):
    full = pair_g2.full_trajectory()
    # columns: x1..x4 then u1..u4; species 3 and 4 never move
    assert np.all(full[:, [2, 3, 6, 7]] == 0.0)
    assert np.all(full[:, [0, 1]] >= 0.0)


def test_pair_connection_endpoints(pair_g2):
    """The orbit starts delta off the source axis point and lands on the
    target's h-sphere."""
    c = pair_g2
    start = np.zeros(4)
    start[0] = 1.0
    start += c.delta * np.asarray(c.direction)
    assert np.max(np.abs(c.trajectory[0] - start)) <= 1e-12
    p_tgt = np.array([0.0, 1.0, 0.0, 0.0])
    r = c.trajectory[-1] - p_tgt
    assert abs(np.linalg.norm(r) - c.h) <= 1e-8
    assert c.times[0] == 0.0
    assert abs(c.times[-1] - c.T) <= 1e-12


def test_pair_angle_undefined_when_expanding_pair_has_no_split(pair_g2):
    # gamma^2 = 4 e1 exactly: the expanding pair is degenerate
    assert math.isnan(pair_g2.departure_angle)
    with pytest.raises(ValidationError):
        departure_angle(pair_g2)


def test_pair_angle_near_weak_axis(pair_g22):
    assert abs(pair_g22.departure_angle - ANGLE_PAIR_G22) <= 1e-8
    assert abs(pair_g22.T - T_PAIR_G22) <= 1e-5


def test_angle_moves_linearly_with_section_radius(pair_g22):
    a_half = departure_angle(pair_g22, h=5e-4)
    assert abs(a_half - ANGLE_PAIR_G22_HALF_H) <= 1e-8
    assert abs(a_half - pair_g22.departure_angle) <= 5.0 * 1e-3


def test_pair_connection_small_repulsion():
    c = find_connection(P_WEAK, 1.2, pair_subspace(4))
    assert c.residual <= 1e-8
    assert abs(c.T - T_PAIR_WEAK) <= 1e-4


def test_triple_connection_passes_near_middle_equilibrium(triple_g2):
    c = triple_g2
    assert c.source == 1 and c.target == 3
    assert c.residual <= 1e-5
    assert abs(c.T - T_TRIPLE_G2) <= 0.1
    assert set(c.near_miss) == {2}
    assert 5e-5 <= c.near_miss[2] <= 5e-4
    full = c.full_trajectory()
    assert np.all(full[:, [3, 7]] == 0.0)


def test_triple_connection_small_repulsion():
    c = find_connection(P_WEAK.with_e1(0.3), 1.2, triple_subspace(4))
    assert c.residual <= 1e-5
    assert abs(c.T - T_TRIPLE_WEAK3) <= 0.1


def test_mu_image_is_shifted_connection(pair_g22):
    img = mu_image(pair_g22)
    assert img.subspace.species == (2, 3)
    assert img.source == 2 and img.target == 3
    r0 = connection_residual(P_UNIT, 2.2, pair_g22)
    r1 = connection_residual(P_UNIT, 2.2, img)
    assert r1 == r0
    full = img.full_trajectory()
    assert np.all(full[:, [0, 3, 4, 7]] == 0.0)


def test_mu_image_shifts_near_miss_keys(triple_g2):
    img = mu_image(triple_g2, k=2)
    assert img.subspace.species == (3, 4, 1)
    assert set(img.near_miss) == {4}
    assert img.near_miss[4] == triple_g2.near_miss[2]


def test_equivariance_of_the_reduced_problem():
    """Starting species is a relabelling: the reduced problem is the same
    matrix, so the solve is bitwise identical."""
    a = find_connection(P_UNIT, 2.2, pair_subspace(4, start=1))
    b = find_connection(P_UNIT, 2.2, pair_subspace(4, start=3))
    assert b.T == a.T
    assert b.residual == a.residual
    assert b.departure_angle == a.departure_angle
    assert np.array_equal(np.asarray(b.direction), np.asarray(a.direction))


def test_recomputed_residual_matches_reported(pair_g2):
    assert connection_residual(P_UNIT, 2.0, pair_g2) <= 1e-8


def test_angle_grows_monotonically_into_the_flip():
    gammas = [1.233, 1.224, 1.215, 1.2035]
    angles = [find_connection(P_FLIP, g, pair_subspace(4)).departure_angle
              for g in gammas]
    assert angles[0] < angles[1] < angles[2] < math.pi
    assert angles[3] > math.pi


def test_sigma_locus_values(sigma_locus):
    loc = sigma_locus
    assert loc.kind == "orbitflip-sigma"
    assert list(loc.e1) == [0.3, 0.35, 0.4, 0.42]
    for e1, g in zip(loc.e1, loc.gamma):
        assert abs(g - SIGMA_ROOTS[float(e1)]) <= 5e-4


def test_sigma_locus_terminates_on_the_complex_boundary(sigma_locus):
    loc = sigma_locus
    assert "terminated" in loc.note and "0.44" in loc.note
    g_last, e_last = float(loc.gamma[-1]), float(loc.e1[-1])
    floor = 2.0 * math.sqrt(e_last)
    assert abs(g_last - floor) / floor <= 0.02


def test_locus_rows_are_plot_ready(sigma_locus):
    rows = sigma_locus.rows()
    assert len(rows) == len(sigma_locus.e1)
    assert rows[0] == {"e1": 0.3,
                       "gamma": pytest.approx(1.15244873, abs=5e-4),
                       "kind": "orbitflip-sigma"}


def test_locus_insensitive_to_section_radius():
    fine = orbitflip_locus(P_FLIP, [0.35], FOUR_SADDLE, h=5e-4,
                           gamma_start=1.205)
    assert len(fine.gamma) == 1
    assert abs(float(fine.gamma[0]) - SIGMA_ROOTS[0.35]) <= 2e-4


def test_locus_rejects_unknown_cycle():
    with pytest.raises(ValidationError):
        orbitflip_locus(P_FLIP, [0.35], "pentagon")
    with pytest.raises(ValidationError):
        orbitflip_locus(P_FLIP, [], FOUR_SADDLE)


def test_find_connection_validation():
    with pytest.raises(ValidationError):
        find_connection(P_UNIT, -1.0, pair_subspace(4))
    with pytest.raises(ValidationError):
        find_connection(P_UNIT, 2.0, pair_subspace(5))
    with pytest.raises(ValidationError):
        find_connection(P_UNIT, 2.0, pair_subspace(4), delta=1e-2, h=1e-3)


def test_hostile_guess_fails_with_residual():
    bad = np.array([0.9, -0.1, 0.43, -0.05])
    bad /= np.linalg.norm(bad)
    with pytest.raises(NewtonError) as err:
        find_connection(P_UNIT, 2.0, pair_subspace(4), guess=(bad, 3.0))
    assert err.value.residual is not None


def test_no_connection_below_the_branch_fold():
    """For weak repulsion the pair branch folds above gamma = 2 sqrt(e1);
    past the fold there is nothing to find and the solver says so."""
    with pytest.raises(NewtonError) as err:
        find_connection(P_WEAK, 0.8, pair_subspace(4), homotopy=False)
    assert err.value.residual is not None


def test_departure_angle_section_errors(pair_g22):
    with pytest.raises(ValidationError):
        departure_angle(pair_g22, h=-1.0)
    with pytest.raises(ValidationError):
        departure_angle(pair_g22, h=1e-8)
    with pytest.raises(BracketError):
        departure_angle(pair_g22, h=50.0)


def test_connection_csv_round_trip(tmp_path, pair_g22):
    path = tmp_path / "conn.csv"
    connection_to_csv(pair_g22, path)
    header = path.read_text().splitlines()[0]
    assert header == "z,x1,x2,x3,x4,u1,u2,u3,u4"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], pair_g22.times)
    assert np.array_equal(data[:, 1:], pair_g22.full_trajectory())


def test_expanding_angle_axis_conventions():
    # launched along the weak eigenvector: x_e = 0 exactly, angle pi/2;
    # tangent to the strong one with positive density: y_e = 0, angle pi
    assert expanding_angle(2.0, 0.5, 1.3, 0.5 * 1.3) == math.pi / 2.0
    assert expanding_angle(2.0, 0.5, 1.3, 2.0 * 1.3) == math.pi


@given(lam_m=st.floats(-3.0, 0.9), gap=st.floats(0.1, 5.0),
       x=st.floats(1e-3, 10.0), u=st.floats(-10.0, 10.0))
def test_expanding_angle_range(lam_m, gap, x, u):
    ang = expanding_angle(lam_m + gap, lam_m, x, u)
    assert 0.0 < ang <= 2.0 * math.pi
