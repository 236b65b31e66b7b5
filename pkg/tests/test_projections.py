import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import least_squares

from orthoform import geometry as geo
from orthoform.errors import DegenerateFaceError
from orthoform.framework import (
    SEED_EDGES,
    DesiredFormation,
    Framework,
    build_henneberg,
    build_planar,
    edge_function,
    pairwise_distances,
    regular_tetrahedron_formation,
    volume_vector,
)
from orthoform.projections import (
    desired_normal_norm,
    desired_projection_vector,
    lambda_layout,
    make_normal_cache,
    normal_ijk,
    projection_vector,
    projections_l,
    select_n123_plus,
    zeta2,
    zeta3_varphi3,
    zeta_star,
)
from support import (
    REGULAR_LAMBDA,
    REGULAR_TET,
    chain_target,
    random_framework,
    random_reflection,
    random_rotation,
    rel_err,
    six_agent_target,
)

S = 1 / math.sqrt(2)


@pytest.mark.parametrize(
    "p31, p32, expected",
    [
        ((0, 0, 0), (0, 0, 0), (0, 0, 1)),
        ((0, 0, 2), (0, 0, 5), (S, S, 0)),
        ((3, 0, 0), (6, 0, 0), (0, S, S)),
        ((0, 2, 0), (0, -1, 0), (S, 0, S)),
        ((0, 0, 0), (0, 0, 4), (S, S, 0)),
    ],
)
def test_select_n123_plus_traces(p31, p32, expected):
    assert select_n123_plus(p31, p32) == pytest.approx(expected, abs=1e-15)


unit_dirs = st.tuples(*[st.floats(-1, 1) for _ in range(3)]).filter(lambda v: np.linalg.norm(v) > 0.1)


@given(unit_dirs, st.floats(-20, 20), st.floats(-20, 20))
def test_select_n123_plus_orthogonal_on_collinear_inputs(u, a, b):
    u = np.array(u) / np.linalg.norm(u)
    n = select_n123_plus(a * u, b * u)
    assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)
    for c in (a, b):
        # inputs shorter than eps are only promised orthogonality within eps
        tol = 1e-9 * max(1.0, abs(c)) if abs(c) > 1e-3 else 1e-3
        assert abs(n @ (c * u)) <= tol


def test_cache_all_collocated():
    c = make_normal_cache(np.zeros((4, 3)))
    assert c.degenerate_12_at_t0 and c.degenerate_123_at_t0
    assert c.n123_fallback == pytest.approx([0, 0, 1])
    assert c.n2_fallback == pytest.approx([1, 0, 0])


def test_cache_generic_has_no_fallbacks(rng):
    c = make_normal_cache(rng.normal(size=(5, 3)))
    assert not c.degenerate_12_at_t0 and not c.degenerate_123_at_t0
    assert c.n2_fallback is None and c.n123_fallback is None


def test_cache_collinear_on_x_axis():
    p = np.array([[0.0, 0, 0], [2.0, 0, 0], [5.0, 0, 0], [1.0, 1.0, 1.0]])
    c = make_normal_cache(p)
    assert not c.degenerate_12_at_t0 and c.degenerate_123_at_t0
    assert c.n2_fallback is None
    assert c.n123_fallback @ [1, 0, 0] == pytest.approx(0, abs=1e-12)
    assert np.linalg.norm(c.n123_fallback) == pytest.approx(1, abs=1e-12)


def test_cache_collocated_12_normal_is_orthogonal_to_n2(rng):
    for _ in range(50):
        p = rng.uniform(-5, 5, size=(4, 3))
        p[1] = p[0]
        n2_plus = rng.normal(size=3)
        c = make_normal_cache(p, n2_plus=n2_plus)
        n2 = n2_plus / np.linalg.norm(n2_plus)
        assert c.n2_fallback == pytest.approx(n2)
        assert abs(c.n123_fallback @ n2) < 1e-12
        assert abs(c.n123_fallback @ (p[0] - p[2])) < 1e-9
        assert np.linalg.norm(c.n123_fallback) == pytest.approx(1, abs=1e-12)


def test_cache_batched_matches_single(rng):
    p = rng.normal(size=(6, 4, 3))
    p[2, 1] = p[2, 0]
    batched = make_normal_cache(p)
    for r in range(6):
        single = make_normal_cache(p[r])
        assert np.array_equal(batched.n2_t0[r], single.n2_t0)
        assert np.array_equal(batched.n123_t0[r], single.n123_t0)
        assert batched.degenerate_12_at_t0[r] == single.degenerate_12_at_t0


def test_normal_examples():
    p = np.array([[9.0, 9, 9], [0, 0, 0], [1, 0, 0], [0, 1, 0]])
    assert normal_ijk(p, 2, 3, 4, make_normal_cache(p)) == pytest.approx([0, 0, 1])
    c = make_normal_cache(REGULAR_TET)
    assert normal_ijk(REGULAR_TET, 1, 2, 3, c) == pytest.approx([0, 0, 1], abs=1e-15)
    line = np.array([[0.0, 0, 0], [1, 1, 0], [2, 2, 0], [0, 0, 1]])
    c = make_normal_cache(line)
    n = normal_ijk(line, 1, 2, 3, c)
    assert n == pytest.approx(c.n123_fallback)
    assert n @ (line[0] - line[2]) == pytest.approx(0, abs=1e-12)


def test_normal_midrun_degeneracy_raises():
    c = make_normal_cache(REGULAR_TET)
    flat = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 0, 1]])
    with pytest.raises(DegenerateFaceError):
        normal_ijk(flat, 1, 2, 3, c)


def test_projections_regular_tetrahedron():
    c = make_normal_cache(REGULAR_TET)
    z, f, t = projections_l(REGULAR_TET, 1, 2, 3, 4, c)
    assert (z, f, t) == pytest.approx((0.5, math.sqrt(3) / 6, -math.sqrt(2 / 3)), abs=1e-15)
    p = REGULAR_TET.copy()
    p[3] = p[0]
    assert projections_l(p, 1, 2, 3, 4, c) == pytest.approx((0, 0, 0), abs=1e-15)


def test_zeta2_and_agent3():
    p = np.array([[0.0, 0, 0], [2, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert zeta2(p, make_normal_cache(p)) == 2.0
    p[1] = p[0]
    assert zeta2(p, make_normal_cache(p)) == 0.0
    z3, f3 = zeta3_varphi3(REGULAR_TET, make_normal_cache(REGULAR_TET))
    assert z3 == pytest.approx(0.5, abs=1e-15)
    assert f3 == pytest.approx(math.sqrt(3) / 2, abs=1e-15)


def test_varphi3_is_twice_the_triangle_area(rng):
    for _ in range(100):
        p = rng.normal(size=(4, 3))
        _, f3 = zeta3_varphi3(p, make_normal_cache(p))
        assert f3 == pytest.approx(np.linalg.norm(np.cross(p[0] - p[2], p[1] - p[2])), rel=1e-12)


def test_lambda_regular_tetrahedron():
    g = build_henneberg(SEED_EDGES, [(4, 1, 2, 3)])
    assert projection_vector(Framework(g, REGULAR_TET)) == pytest.approx(REGULAR_LAMBDA, abs=1e-15)
    assert lambda_layout(g) == [(2, "zeta"), (3, "zeta"), (3, "varphi"), (4, "zeta"), (4, "varphi"), (4, "vartheta")]


def test_vartheta_is_volume(rng):
    for n in (5, 6) * 20:
        fw = random_framework(rng, n)
        lam = projection_vector(fw)
        p = fw.positions
        s123 = 0.5 * np.linalg.norm(np.cross(p[0] - p[2], p[1] - p[2]))
        for a, (cell, v) in zip(range(4, n + 1), zip(fw.graph.cells, volume_vector(fw))):
            theta = lam[3 * a - 7]
            expected = -3 * v / s123 if cell[:3] == (1, 2, 3) else -6 * v
            assert theta == pytest.approx(expected, rel=1e-8)


def test_lambda_rigid_motion_and_reflection(rng):
    for n in (4, 5, 6) * 10:
        fw = random_framework(rng, n)
        lam = projection_vector(fw)
        moved = fw.transformed(random_rotation(rng), rng.uniform(-5, 5, size=3))
        assert rel_err(projection_vector(moved), lam) < 1e-9
        mirror = Framework(fw.graph, fw.positions @ random_reflection(rng).T)
        flip = np.array([-1.0 if name == "vartheta" else 1.0 for _, name in lambda_layout(fw.graph)])
        assert rel_err(projection_vector(mirror), flip * lam) < 1e-9


def _solve_same_lambda(fw, rng, tries=100):
    """Brute-force oracle: another N=4 framework with the same projections."""
    target = projection_vector(fw)
    g = fw.graph

    def unpack(x):
        p = np.zeros((4, 3))
        p[1, 0], p[2, :2], p[3] = x[0], x[1:3], x[3:]
        return p

    def residual(x):
        return projection_vector(Framework(g, unpack(x))) - target

    for _ in range(tries):
        sol = least_squares(residual, rng.uniform(-2, 2, size=6), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.max(np.abs(sol.fun)) < 1e-11:
            return unpack(sol.x)
    raise AssertionError("no solution found")


def test_equal_lambda_implies_strong_congruence(rng):
    g = build_henneberg(SEED_EDGES, [(4, 1, 2, 3)])
    for _ in range(10):
        fw = random_framework(rng, graph=g)
        p_hat = _solve_same_lambda(fw, rng)
        assert np.allclose(pairwise_distances(p_hat), pairwise_distances(fw.positions), atol=1e-6)
        assert np.allclose(volume_vector(Framework(g, p_hat)), volume_vector(fw), atol=1e-6)


def test_desired_lambda_regular_tetrahedron():
    assert desired_projection_vector(regular_tetrahedron_formation()) == pytest.approx(REGULAR_LAMBDA, abs=1e-15)


def test_zeta_star_isoceles():
    assert zeta_star(1.7, 2.2, 1.7) == pytest.approx(2.2 ** 2 / 2)


def test_flipping_one_sign_negates_one_vartheta():
    d = chain_target()
    flipped_signs = dict(d.signs)
    flipped_signs[(1, 3, 4, 5)] *= -1
    e = DesiredFormation.create(d.graph, d.distances, flipped_signs)
    a, b = desired_projection_vector(d), desired_projection_vector(e)
    assert b[-1] == pytest.approx(-a[-1], rel=1e-12)
    assert b[:-1] == pytest.approx(a[:-1], rel=1e-12)


def test_desired_lambda_matches_embedding(rng):
    for n in (4, 5, 6) * 10:
        fw = random_framework(rng, n)
        d = DesiredFormation.create(
            fw.graph,
            dict(zip(fw.graph.edges, edge_function(fw))),
            {c: int(s) for c, s in zip(fw.graph.cells, np.sign(volume_vector(fw)))},
        )
        assert rel_err(desired_projection_vector(d), projection_vector(fw)) < 1e-9


def test_desired_lambda_fixed_targets():
    for d in (six_agent_target(), chain_target()):
        assert rel_err(desired_projection_vector(d), projection_vector(d.framework())) < 1e-12


def test_desired_normal_norm():
    d = chain_target()
    p = d.desired_positions
    assert desired_normal_norm(d, (1, 2, 3)) == 1.0
    assert desired_normal_norm(d, (1, 3, 4)) == pytest.approx(np.linalg.norm(np.cross(p[0] - p[3], p[2] - p[3])))


def test_planar_lambda_matches_desired():
    g = build_planar(4, [(4, 1, 3)])
    sq = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    d = DesiredFormation.create(g, desired_positions=sq)
    lam = projection_vector(d.framework())
    assert lam == pytest.approx([1, 1, 1, 1, 1], abs=1e-15)
    assert desired_projection_vector(d) == pytest.approx(lam, abs=1e-12)
    mirror = DesiredFormation.create(g, desired_positions=sq * [1, -1, 0])
    assert desired_projection_vector(mirror) == pytest.approx([1, 1, -1, 1, -1], abs=1e-12)


def test_orthogonal_basis(rng):
    for _ in range(200):
        p = rng.normal(size=(5, 3))
        cache = make_normal_cache(p)
        for i, j, k in ((1, 2, 3), (2, 3, 4), (1, 3, 4)):
            n = normal_ijk(p, i, j, k, cache)
            pji = p[i - 1] - p[j - 1]
            m = geo.cross(n, pji)
            scale = np.linalg.norm(n) * np.linalg.norm(pji)
            assert abs(pji @ n) <= 1e-9 * scale
            assert abs(pji @ m) <= 1e-9 * scale * np.linalg.norm(pji)
            assert abs(n @ m) <= 1e-9 * scale * np.linalg.norm(n)


def test_select_n123_plus_short_components():
    # norm above eps while no single component is: the dominant one is solved for
    v = np.array([0.9e-3, 0.5e-3, -0.8e-3])
    n = select_n123_plus(v, 2 * v, eps=1e-3)
    assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)
    assert abs(n @ v) < 1e-15
