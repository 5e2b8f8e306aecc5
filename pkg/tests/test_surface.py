import numpy as np
import pytest

from lieform import catalog, surface as sf
from lieform.coframe import extract_q, form_pack
from lieform.fields import Grid
from lieform.liequadric import inner

from conftest import order

CENTRE = (16, 16)  # node (1, 1) on the 33-point grid over [0.5, 1.5]


def test_enneper_position_and_forms(enneper33):
    # x = u - u^3/3 + u v^2, y = -v + v^3/3 - u^2 v, z = u^2 - v^2 at (1, 1)
    assert np.allclose(enneper33.F[CENTRE], [5 / 3, -5 / 3, 0.0])
    C = sf.curvature_data(enneper33)
    i, j = CENTRE
    assert C.e.values[i, j] == pytest.approx(9.0)
    assert C.g.values[i, j] == pytest.approx(9.0)
    assert C.f.values[i, j] == pytest.approx(0.0, abs=1e-12)
    # n = F_u x F_v / |.| = (2, 2, 1)/3 at (1, 1), so L = F_uu . n = -2
    assert C.k1.values[i, j] == pytest.approx(-2 / 9)
    assert C.k2.values[i, j] == pytest.approx(2 / 9)


def test_enneper_curvatures_everywhere(enneper_grid, enneper33):
    # E = G = (1 + u^2 + v^2)^2, L = -2, N = 2 for the normal F_u x F_v
    C = sf.curvature_data(enneper33)
    uu, vv = enneper_grid.mesh()
    E = (1 + uu**2 + vv**2) ** 2
    assert np.allclose(C.k1.values, -2 / E)
    assert np.allclose(C.k2.values, 2 / E)


def test_plane_and_torus_curvatures():
    g = Grid.square(0.2, 1.2, 17)
    C = sf.curvature_data(catalog.plane(g))
    assert np.all(C.k1.values == 0) and np.all(C.k2.values == 0)
    T = sf.curvature_data(catalog.torus(2.0, 0.5, g))
    assert np.allclose(np.abs(T.k1.values), 1 / 0.5)


def test_not_curvature_line_coordinates():
    g = Grid.square(0.2, 1.2, 17)
    uu, vv = g.mesh()
    F = np.stack([uu + 0.5 * vv, vv, uu * vv], -1)  # sheared graph: f != 0
    with pytest.raises(sf.NotCurvatureLineError):
        sf.curvature_data(sf.SurfacePatch(g, F))


def test_immersion_error():
    g = Grid.square(0.2, 1.2, 17)
    uu, vv = g.mesh()
    F = np.stack([uu, uu, uu], -1)
    with pytest.raises(sf.ImmersionError):
        sf.curvature_data(sf.SurfacePatch(g, F))


def test_parallel_surface_zero_shift(enneper33):
    P = sf.parallel_surface(enneper33, 0.0)
    assert np.array_equal(P.F, enneper33.F)


def test_parallel_surface_focal_shift_is_rejected():
    g = Grid(0.2, 1.2, 0.1, 1.1, 17, 17)
    S = catalog.sphere(1.0, g)
    k = sf.curvature_data(S).k1.values[8, 8]
    with pytest.raises(sf.ImmersionError):
        sf.parallel_surface(S, 1.0 / k)


def test_parallel_surface_curvature_law():
    errs = []
    t = 0.05
    for n in (33, 65):
        g = Grid.square(0.5, 1.5, n)
        S = catalog.enneper(g)
        C = sf.curvature_data(S)
        P = sf.curvature_data(sf.parallel_surface(S, t, C))
        sl = g.interior(n // 8)
        expect = C.k1.values / (1 - t * C.k1.values)
        errs.append(float(np.max(np.abs(P.k1.values - expect)[sl])))
    assert errs[1] < 1e-3
    assert order(*errs) > 1.7


def test_lift_identities(enneper33):
    lift = sf.legendre_lift(enneper33)
    assert lift.isotropy_residual() <= 1e-12


def test_lift_of_origin():
    f0, f1 = sf.lift_point(np.zeros(3), np.array([1.0, 0.0, 0.0]))
    assert np.array_equal(f0, [1, 0, 0, 0, 0, 0])
    assert abs(inner(f1, f1)) < 1e-15


def test_lift_contact_residual_is_second_order():
    res = []
    for n in (33, 65, 129):
        S = catalog.enneper(Grid.square(0.5, 1.5, n))
        res.append(sf.legendre_lift(S).contact_residual())
    assert res[0] / res[1] >= 3.5 and res[1] / res[2] >= 3.5


def test_beta_gamma_at_enneper_centre(enneper33):
    # beta = (k1-k2)^-1 (k1)_u with e = g: (9/4)(-8/27) = -2/3 at (1, 1)
    bg = sf.beta_gamma(sf.curvature_data(enneper33))
    i, j = CENTRE
    assert bg.beta.values[i, j] == pytest.approx(-2 / 3, rel=5e-3)
    assert bg.gamma.values[i, j] == pytest.approx(-2 / 3, rel=5e-3)


def test_beta_vanishes_on_torus_and_revolution():
    g = Grid.square(0.3, 1.3, 17)
    bg = sf.beta_gamma(sf.curvature_data(catalog.torus(2.0, 1.0, g)))
    assert bg.beta.max_abs() < 1e-10 and bg.gamma.max_abs() < 1e-10
    bg = sf.beta_gamma(sf.curvature_data(catalog.catenoid(g)))
    assert bg.gamma.max_abs() < 1e-10 < bg.beta.max_abs()


def test_umbilic_error_lists_nodes():
    g = Grid(0.2, 1.2, 0.1, 1.1, 9, 9)
    with pytest.raises(sf.UmbilicError) as info:
        sf.beta_gamma(sf.curvature_data(catalog.sphere(2.0, g)))
    assert len(info.value.nodes) == 81


def test_euclidean_coframe_at_centre(enneper33):
    C = sf.curvature_data(enneper33)
    co = sf.euclidean_coframe(C)
    i, j = CENTRE
    assert co.alpha1.Q.values[i, j] == pytest.approx(-2 / 3, rel=5e-3)
    assert co.alpha2.P.values[i, j] == pytest.approx(-2 / 3, rel=5e-3)
    assert co.alpha1.P.values[i, j] == 0 and co.alpha2.Q.values[i, j] == 0
    assert co.orientation == -1
    assert co.volume().values[i, j] == pytest.approx(4 / 9, rel=1e-2)
    pack = form_pack(co)
    # X = d/du: a = 0, b = -2/3
    assert pack.quadratic(1.0, 0.0)[i, j] == 0.0
    assert pack.cubic(1.0, 0.0)[i, j] == pytest.approx(-8 / 27, rel=1e-2)


def test_wedge_equals_abs_beta_gamma(enneper33):
    C = sf.curvature_data(enneper33)
    bg = sf.beta_gamma(C)
    co = sf.euclidean_coframe(C)
    assert np.allclose(co.volume().values, np.abs(bg.beta.values * bg.gamma.values), rtol=1e-12)


def test_phi_two_paths(enneper33):
    C = sf.curvature_data(enneper33)
    co = sf.euclidean_coframe(C)
    phi = sf.phi_closed_form(C).values
    quad = form_pack(co).quadratic(1.0, 1.0)  # -a b with a = alpha1(du+dv), b = alpha2(du+dv)
    assert np.max(np.abs(quad - phi) / np.maximum(1.0, np.abs(phi))) <= 1e-10
    assert phi[CENTRE] == pytest.approx(-4 / 9, rel=1e-2)


def test_psi_closed_form(enneper33):
    C = sf.curvature_data(enneper33)
    co = sf.euclidean_coframe(C)
    pu, pv = sf.psi_closed_form(C)
    pack = form_pack(co)
    # cubic form -a^3 + b^3: du^3 coefficient from b = alpha2(du), dv^3 from a = alpha1(dv)
    assert np.allclose(pack.cubic(1.0, 0.0), pu.values, rtol=1e-10)
    assert np.allclose(pack.cubic(0.0, 1.0), pv.values, rtol=1e-10)


def test_degenerate_coframe_error():
    g = Grid.square(0.3, 1.3, 17)
    with pytest.raises(sf.DegenerateError) as info:
        sf.euclidean_coframe(sf.curvature_data(catalog.torus(2.0, 1.0, g)))
    assert info.value.report.verdict == "dupin"


def test_q_from_constant_beta_gamma():
    g = Grid.square(0.0, 1.0, 9)
    from lieform.fields import ScalarField
    bg = sf.BetaGamma(ScalarField.constant(g, 0.7), ScalarField.constant(g, -1.3))
    q1, q2 = sf.q_from_betagamma(bg)
    assert q1.max_abs() < 1e-14 and q2.max_abs() < 1e-14


def test_q_cross_path_converges():
    errs = []
    for n in (33, 65, 129):
        g = Grid.square(0.5, 1.5, n)
        C = sf.curvature_data(catalog.enneper(g))
        a1, a2 = sf.q_from_betagamma(sf.beta_gamma(C))
        b1, b2 = extract_q(sf.euclidean_coframe(C))
        m = n // 8
        errs.append(max((a1 - b1).max_abs(m), (a2 - b2).max_abs(m)))
    for e0, e1 in zip(errs, errs[1:]):
        assert 1.7 <= order(e0, e1) <= 2.3


def test_q_on_diagonal_pattern(enneper33):
    # Enneper has beta = gamma on u = v (but not beta_v = gamma_v), so there
    # q1 = -(2 beta_v + gamma_v) / (3 (beta^3)^(2/3))
    bg = sf.beta_gamma(sf.curvature_data(enneper33))
    q1, _ = sf.q_from_betagamma(bg)
    idx = np.arange(33)
    b = bg.beta.values[idx, idx]
    assert np.array_equal(b, bg.gamma.values[idx, idx])
    bv, cv = bg.beta.dv().values[idx, idx], bg.gamma.dv().values[idx, idx]
    expect = -(2 * bv + cv) / (3 * np.cbrt(b**3) ** 2)
    assert np.allclose(q1.values[idx, idx], expect, rtol=1e-12)


def test_classification():
    g = Grid.square(0.5, 1.5, 33)
    assert sf.classify(catalog.enneper(g)).verdict == "nondegenerate"
    assert sf.classify(catalog.torus(2.0, 1.0, g)).verdict == "dupin"
    assert sf.is_canal(sf.classify(catalog.paraboloid(g)).verdict)
    assert sf.is_canal(sf.classify(catalog.catenoid(g)).verdict)
    report = sf.classify(catalog.torus(2.0, 1.0, g)).to_dict()
    assert report["offending_total"] == 33 * 33


def test_curvature_spheres_enneper(enneper33):
    cs = sf.curvature_spheres(enneper33)
    assert cs.immersive
    # the sphere K_i is a light-cone vector and its derivative along X_i stays in the plane
    assert np.max(np.abs(inner(cs.k1, cs.k1))) < 1e-10
    assert np.all(np.isfinite(cs.t1)) and np.all(np.isfinite(cs.t2))
    assert cs.solve_ratio < 1e-2


def test_curvature_spheres_sphere_and_plane():
    g = Grid(0.2, 1.2, 0.1, 1.1, 9, 9)
    with pytest.raises(sf.UmbilicError):
        sf.curvature_spheres(catalog.sphere(1.0, g))
    cs = sf.curvature_spheres(catalog.plane(g), allow_umbilic=True)
    # zero curvature: the sphere is the oriented tangent plane F1 (no F0 component)
    assert np.max(np.abs(cs.coeffs1[..., 0])) < 1e-12
