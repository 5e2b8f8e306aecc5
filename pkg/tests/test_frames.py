import numpy as np
import pytest

from lieform import catalog, frames as fr, surface as sf
from lieform.coframe import extract_invariants
from lieform.fields import Grid, GridError, ScalarField
from lieform.liequadric import G, algebra_residual, g_inverse
from lieform.surface import SurfacePatch

from conftest import order


def interior_max(x, grid):
    return float(np.max(np.abs(np.asarray(x)[grid.interior(fr.report_margin(grid))])))


def test_assembled_form_is_in_the_algebra_with_canonical_pattern(flat0):
    mc = fr.assemble_mc(flat0.invariants, flat0.coframe)
    assert max(algebra_residual(mc.P), algebra_residual(mc.Q)) < 1e-12
    assert fr.pattern_residual(mc) == 0.0
    # omega^1, omega^2 sit in the (3, 0) and (2, 1) slots
    assert np.array_equal(mc.P[..., 3, 0], flat0.coframe.alpha1.P.values)
    assert np.array_equal(mc.Q[..., 2, 1], flat0.coframe.alpha2.Q.values)


def test_structure_residual_is_second_order():
    errs = []
    for n in (17, 33, 65):
        spec = catalog.FlatWebSpec(0.0, "u", "v", "u*(u+v)", "v*(u+v)")
        F = catalog.flatweb(spec, Grid.square(0.5, 1.5, n), solve=False)
        errs.append(fr.structure_residual(fr.assemble_mc(F.invariants, F.coframe)).max_abs(fr.report_margin(F.coframe.grid)))
    assert errs[2] < errs[1] < errs[0]
    assert 1.7 < order(errs[1], errs[2]) < 2.5


def test_structure_residual_sees_a_wrong_r(flat0):
    I = flat0.invariants
    bad = I.with_r(I.r1 + 1.0, I.r2)
    good = fr.structure_residual(fr.assemble_mc(I, flat0.coframe)).max_abs(4)
    worse = fr.structure_residual(fr.assemble_mc(bad, flat0.coframe)).max_abs(4)
    assert worse > 100 * good


def test_read_invariants_inverts_assembly(flat0):
    I = flat0.invariants
    J = fr.read_invariants(fr.assemble_mc(I, flat0.coframe), flat0.coframe)
    for name in ("q1", "q2", "p1", "p2", "r1", "r2"):
        assert np.allclose(getattr(J, name).values, getattr(I, name).values, rtol=1e-12, atol=1e-12)


def test_integrated_frame_stays_in_group_and_reproduces_coframe(flat0):
    mc = fr.assemble_mc(flat0.invariants, flat0.coframe)
    A = fr.integrate_frame(mc, substeps=2)
    assert np.max(A.drift()) < 1e-8
    assert np.allclose(A.base_value, np.eye(6))
    grid = flat0.coframe.grid
    C = A.coframe()
    assert interior_max(C.alpha1.P.values - flat0.coframe.alpha1.P.values, grid) < 50 * grid.h**2
    assert interior_max(C.alpha2.Q.values - flat0.coframe.alpha2.Q.values, grid) < 50 * grid.h**2
    assert np.allclose(A.inverse() @ A.A, np.eye(6), atol=1e-8)


def test_integration_paths_agree_for_integrable_forms(flat0):
    mc = fr.assemble_mc(flat0.invariants, flat0.coframe)
    row = fr.integrate_frame(mc, order="row", substeps=2)
    col = fr.integrate_frame(mc, order="col", substeps=2)
    assert np.max(np.abs(row.A - col.A)) < 1e-5


def test_integration_from_a_group_element(flat0):
    mc = fr.assemble_mc(flat0.invariants, flat0.coframe)
    # a Lie sphere transformation: swap of the isotropic pairs composed with a rotation of e2, e3
    t = 0.3
    A0 = np.zeros((6, 6))
    A0[5, 0] = A0[0, 5] = A0[4, 1] = A0[1, 4] = 1.0
    A0[2:4, 2:4] = [[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]]
    assert np.allclose(A0.T @ G @ A0, G)
    A = fr.integrate_frame(mc, A0=A0)
    B = fr.integrate_frame(mc)
    # left translation: integral curves starting at A0 are A0 times those starting at I
    assert np.allclose(A.A, A0 @ B.A, atol=1e-9)


def test_drift_error_carries_location(flat0):
    mc = fr.assemble_mc(flat0.invariants, flat0.coframe)
    with pytest.raises(fr.IntegrationDriftError) as info:
        fr.integrate_frame(mc, drift_tol=0.0)
    assert len(info.value.worst_node) == 2 and info.value.drift > 0


def rotated_enneper(grid, R):
    base = catalog.enneper(grid)

    def ev(u, v):
        return {k: x @ R.T for k, x in base.evaluator(u, v).items()}

    return SurfacePatch.from_evaluator(grid, ev, "rotated enneper")


@pytest.fixture(scope="module")
def enneper_reduction(enneper33):
    cd = sf.curvature_data(enneper33)
    C = sf.euclidean_coframe(cd)
    red = fr.canonical_reduction(sf.legendre_lift(enneper33, cd), orientation=C.orientation)
    return C, red


def test_canonical_reduction_matches_coframe_route(enneper_reduction):
    C, red = enneper_reduction
    frame, inv, Cr = red
    grid = C.grid
    # the reduction rebuilds the coframe from sphere pencils: O(h^2) inside, O(h) at the edge
    diff = np.abs(Cr.components() - C.components())
    assert interior_max(diff, grid) < 2 * grid.h**2
    assert red.report["det_min"] > 0
    # built from nested differences: in the group to O(h^2) inside, not at the corners
    assert red.report["group_residual_interior"] < 5 * grid.h**2
    assert red.report["coframe_residual_interior"] < 50 * grid.h**2
    assert red.report["pattern_residual_interior"] < 50 * grid.h**2
    # q from the frame agrees with the coframe route to discretisation accuracy
    I = extract_invariants(C)
    assert interior_max(inv.q1.values - I.q1.values, grid) < 1e-2
    assert inv.has_r and np.all(np.isfinite(inv.r1.values))


def test_canonical_reduction_is_rotation_equivariant(enneper_grid, enneper_reduction):
    _, red = enneper_reduction
    t = 0.7
    R = np.array([[np.cos(t), -np.sin(t), 0], [np.sin(t), np.cos(t), 0], [0, 0, 1.0]]) @ \
        np.array([[1.0, 0, 0], [0, np.cos(2 * t), -np.sin(2 * t)], [0, np.sin(2 * t), np.cos(2 * t)]])
    S = rotated_enneper(enneper_grid, R)
    cd = sf.curvature_data(S)
    C = sf.euclidean_coframe(cd)
    other = fr.canonical_reduction(sf.legendre_lift(S, cd), orientation=C.orientation)
    assert fr.congruent(red.invariants, other.invariants, tol=1e-7)


def test_reduction_group_residual_is_second_order(enneper_reduction):
    _, coarse = enneper_reduction
    S = catalog.enneper(Grid.square(0.5, 1.5, 65))
    cd = sf.curvature_data(S)
    fine = fr.canonical_reduction(sf.legendre_lift(S, cd), orientation=sf.euclidean_coframe(cd).orientation)
    key = "group_residual_interior"
    assert 1.8 < order(coarse.report[key], fine.report[key]) < 2.2


def test_orientation_picks_the_labelling(enneper_reduction, enneper33):
    C, red = enneper_reduction
    lift = sf.legendre_lift(enneper33)
    flipped = fr.canonical_reduction(lift, orientation=-C.orientation)
    assert flipped.coframe.orientation == -C.orientation
    assert flipped.report["labelling"] != red.report["labelling"]


def test_congruent(flat0):
    I = flat0.invariants
    assert fr.congruent(I, I)
    shifted = I.with_r(I.r1 + 1e-6, I.r2)
    assert not fr.congruent(I, shifted)
    assert fr.congruent(I, shifted, tol=1e-5)
    with pytest.raises(ValueError):
        fr.congruent(I, extract_invariants(flat0.coframe))
    other = catalog.flatweb(catalog.FlatWebSpec(0.0, "u", "v", "u*(u+v)", "v*(u+v)"), Grid.square(0.5, 1.5, 17),
                            solve=False)
    with pytest.raises(GridError):
        fr.congruent(I, other.invariants)


def test_contact_order_of_a_map_with_itself(flat0):
    A = fr.integrate_frame(fr.assemble_mc(flat0.invariants, flat0.coframe))
    f = A.legendre()
    for p in fr.sample_nodes(A.grid):
        assert fr.contact_order(f, f, np.eye(6), p) == 2


def test_contact_order_sees_a_different_surface(flat0, flat0_grid):
    A = fr.integrate_frame(fr.assemble_mc(flat0.invariants, flat0.coframe))
    spec = catalog.FlatWebSpec(0.0, "2*u", "v", init=(0.0, 0.0, 0.0))
    other = catalog.flatweb(spec, flat0_grid, solve=False)
    B = fr.integrate_frame(fr.assemble_mc(other.invariants, other.coframe))
    D = B.A @ g_inverse(A.A)
    p = fr.sample_nodes(flat0_grid)[1]
    # the frames agree at p after D(p), so 0-jets match but the coframes differ
    assert fr.contact_order(A.legendre(), B.legendre(), D[p], p) == 0
    with pytest.raises(ValueError):
        fr.contact_order(A.legendre(), B.legendre(), D[p], (1, 5))


def test_sample_nodes_are_interior():
    grid = Grid.square(0, 1, 33)
    nodes = fr.sample_nodes(grid)
    assert len(nodes) == 5 and len(set(nodes)) == 5
    assert all(2 <= i < 31 and 2 <= j < 31 for i, j in nodes)
    assert fr.report_margin(grid) == 4 and fr.report_margin(Grid.square(0, 1, 9)) == 2
