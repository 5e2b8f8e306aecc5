"""Maurer-Cartan forms, frame integration, canonical frames and contact order.

The canonical frame (A0, ..., A5) of a nondegenerate Legendre surface has
Maurer-Cartan form ``alpha = A^{-1} dA`` whose only independent entries are

    alpha[3,0] = alpha[0,1] = alpha1,    alpha[2,1] = alpha[1,0] = alpha2,
    alpha[0,0] = -2 q1 alpha1 + q2 alpha2,   alpha[1,1] = -q1 alpha1 + 2 q2 alpha2,
    alpha[0,3] = r1 alpha1 + p2 alpha2,      alpha[1,2] = p1 alpha1 + r2 alpha2,
    alpha[0,4] = -r2 alpha1 + r1 alpha2,

with the zeros alpha[4,0] = alpha[2,0] = alpha[3,1] = alpha[3,2] = alpha[0,2] =
alpha[1,3] = 0 and everything else fixed by the algebra relation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coframe import (
    Coframe,
    InvariantSet,
    extract_p,
    extract_q,
    form_coefficients,
)
from .fields import (
    Grid,
    GridError,
    MatrixForm,
    OneForm,
    ScalarField,
    check_same_grid,
    combine,
    diff_u,
    diff_v,
    transport,
)
from .liequadric import (
    LieQuadricError,
    chart_coordinates,
    complete_algebra,
    g_inverse,
    inner,
    isotropy_completion,
)
from .surface import LegendreField, pencil_sphere

#: entries that vanish on a canonical frame (row, column)
CANONICAL_ZEROS = ((4, 0), (2, 0), (3, 1), (3, 2), (0, 2), (1, 3))
#: pairs of entries that coincide on a canonical frame
CANONICAL_EQUAL = (((3, 0), (0, 1)), ((2, 1), (1, 0)))


class IntegrationDriftError(RuntimeError):
    def __init__(self, message: str, worst_node=None, drift: float = float("nan")):
        super().__init__(message)
        self.worst_node = worst_node
        self.drift = drift


class ReductionError(ValueError):
    """Canonical reduction failed (degenerate input or inconsistent labelling)."""


def _coefficient_table(I: InvariantSet) -> dict:
    q1, q2, p1, p2 = I.q1, I.q2, I.p1, I.p2
    r1, r2 = I.require_r()
    return {
        (3, 0): (1.0, 0.0), (0, 1): (1.0, 0.0),
        (2, 1): (0.0, 1.0), (1, 0): (0.0, 1.0),
        (0, 0): (-2.0 * q1, q2), (1, 1): (-1.0 * q1, 2.0 * q2),
        (0, 3): (r1, p2), (1, 2): (p1, r2), (0, 4): (-1.0 * r2, r1),
    }


def assemble_mc(I: InvariantSet, C: Coframe) -> MatrixForm:
    """Full Maurer-Cartan form of the canonical frame from invariants and coframe."""
    grid = check_same_grid(I.grid, C.grid)
    entries = {k: combine(v, grid, C.alpha1, C.alpha2) for k, v in _coefficient_table(I).items()}
    zero = OneForm.zero(grid)
    for k in CANONICAL_ZEROS:
        entries[k] = zero
    full = complete_algebra(entries, zero=zero)
    return MatrixForm.from_entries(grid, 6, full)


def structure_residual(alpha: MatrixForm) -> ScalarField:
    """Per node, max over entries of the du^dv coefficient of d alpha + alpha ^ alpha."""
    s = alpha.structure()
    return ScalarField(alpha.grid, np.max(np.abs(s), axis=(-2, -1)))


def pattern_residual(alpha: MatrixForm) -> float:
    """Largest violation of the canonical zero and equality pattern."""
    out = 0.0
    for i, j in CANONICAL_ZEROS:
        out = max(out, float(np.max(np.abs(alpha.P[..., i, j]))), float(np.max(np.abs(alpha.Q[..., i, j]))))
    for (a, b), (c, d) in CANONICAL_EQUAL:
        out = max(out, float(np.max(np.abs(alpha.P[..., a, b] - alpha.P[..., c, d]))),
                  float(np.max(np.abs(alpha.Q[..., a, b] - alpha.Q[..., c, d]))))
    return out


@dataclass
class FrameField:
    """A group element per node (array (nu, nv, 6, 6), columns A_J)."""

    grid: Grid
    A: np.ndarray
    base: tuple[int, int] = (0, 0)

    @property
    def base_value(self) -> np.ndarray:
        return self.A[self.base]

    def inverse(self) -> np.ndarray:
        return g_inverse(self.A)

    def drift(self) -> np.ndarray:
        """Per-node group residual max |A^T g A - g|."""
        from .liequadric import G

        return np.max(np.abs(np.swapaxes(self.A, -1, -2) @ G @ self.A - G), axis=(-2, -1))

    def mc_form(self) -> MatrixForm:
        """A^{-1} dA by finite differences."""
        inv = self.inverse()
        return MatrixForm(self.grid, inv @ diff_u(self.A, self.grid), inv @ diff_v(self.A, self.grid))

    def legendre(self) -> LegendreField:
        return LegendreField(self.grid, self.A[..., :, 0].copy(), self.A[..., :, 1].copy())

    def coframe(self) -> Coframe:
        """(alpha1, alpha2) read from the finite-difference Maurer-Cartan form."""
        mc = self.mc_form()
        return Coframe(mc.entry(3, 0), mc.entry(2, 1))


def integrate_frame(alpha: MatrixForm, A0: Optional[np.ndarray] = None, base: Optional[tuple[int, int]] = None,
                    order: str = "row", drift_tol: float = 1e-6, substeps: int = 1) -> FrameField:
    """RK4 integration of dA = A alpha from ``A0`` at ``base`` (default: identity at the centre)."""
    grid = alpha.grid
    if base is None:
        base = (grid.nu // 2, grid.nv // 2)
    if A0 is None:
        A0 = np.eye(alpha.n)
    A = transport(alpha, A0, base=base, order=order, kind="frame", substeps=substeps)
    frame = FrameField(grid, A, base)
    drift = frame.drift()
    worst = np.unravel_index(int(np.argmax(drift)), drift.shape)
    if drift[worst] > drift_tol:
        raise IntegrationDriftError(
            f"frame drift {drift[worst]:.3e} exceeds {drift_tol:.1e} at node {tuple(int(x) for x in worst)}",
            tuple(int(x) for x in worst), float(drift[worst]))
    return frame


def read_invariants(mc: MatrixForm, C: Coframe) -> InvariantSet:
    """Invariant functions read off a (canonical) Maurer-Cartan form against ``C``."""
    a00, b00 = form_coefficients(mc.entry(0, 0), C)
    r1, p2 = form_coefficients(mc.entry(0, 3), C)
    p1, r2 = form_coefficients(mc.entry(1, 2), C)
    return InvariantSet(-0.5 * a00, b00, p1, p2, r1, r2, provenance="read")


# -- canonical reduction ---------------------------------------------------------


@dataclass
class CanonicalReduction:
    frame: FrameField
    invariants: InvariantSet
    coframe: Coframe
    report: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.frame, self.invariants, self.coframe))


def _deriv(x: np.ndarray, grid: Grid, direction: str) -> np.ndarray:
    return diff_u(x, grid) if direction == "u" else diff_v(x, grid)


def _decompose(y: np.ndarray, k_a: np.ndarray, k_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients of y in span(k_a, k_b), per node."""
    basis = np.stack([k_a, k_b], axis=-1)
    gram = np.swapaxes(basis, -1, -2) @ basis
    rhs = np.swapaxes(basis, -1, -2) @ y[..., None]
    c = np.linalg.solve(gram, rhs)[..., 0]
    return c[..., 0], c[..., 1]


def _build_frame(lift: LegendreField, k_2: np.ndarray, k_1: np.ndarray, d1: str, d2: str, sign_a: float):
    grid = lift.grid
    y2k2 = _deriv(k_2, grid, d2)
    y1k1 = _deriv(k_1, grid, d1)
    _, e1 = _decompose(y2k2, k_2, k_1)
    _, e3 = _decompose(y1k1, k_1, k_2)
    kappa1 = inner(_deriv(k_2, grid, d1), _deriv(k_2, grid, d1))
    kappa2 = inner(_deriv(k_1, grid, d2), _deriv(k_1, grid, d2))
    if np.any(kappa1 <= 0) or np.any(kappa2 <= 0):
        raise ReductionError("curvature-sphere derivatives are not spacelike (degenerate input)")
    if np.any(e1 == 0) or np.any(e3 == 0):
        raise ReductionError("curvature-sphere map degenerates (beta or gamma vanishes)")
    a = sign_a * (e1**2 * e3**4 / (kappa1**2 * kappa2)) ** (1.0 / 6.0)
    b = a**2 * np.sqrt(kappa1) / np.abs(e3)
    m = b * e3 / a
    n = a * e1 / b
    zero = ScalarField.constant(grid, 0.0)
    m_f, n_f = ScalarField(grid, m), ScalarField(grid, n)
    if d1 == "u":
        coframe = Coframe(OneForm(m_f, zero), OneForm(zero, n_f))
    else:
        coframe = Coframe(OneForm(zero, m_f), OneForm(n_f, zero))
    q1, q2 = extract_q(coframe)
    A0 = a[..., None] * k_2
    A1 = b[..., None] * k_1
    A3 = _deriv(A0, grid, d1) / m[..., None] + 2.0 * q1.values[..., None] * A0
    A2 = _deriv(A1, grid, d2) / n[..., None] - 2.0 * q2.values[..., None] * A1
    z2 = _deriv(A2, grid, d2) / n[..., None]
    r2 = -0.5 * inner(z2, z2)
    A4 = z2 - r2[..., None] * A1
    z1 = _deriv(A3, grid, d1) / m[..., None]
    r1 = -0.5 * inner(z1, z1)
    A5 = z1 - r1[..., None] * A0
    A = np.stack([A0, A1, A2, A3, A4, A5], axis=-1)
    p1, p2 = extract_p(coframe, q1, q2)
    inv = InvariantSet(q1, q2, p1, p2, ScalarField(grid, r1), ScalarField(grid, r2), provenance="reduced")
    return A, coframe, inv


def canonical_reduction(lift: LegendreField, orientation: Optional[int] = 1,
                        base: Optional[tuple[int, int]] = None) -> CanonicalReduction:
    """Canonical frame, coframe and invariants of a Legendre map in curvature-line coordinates.

    The frame is built directly from the normal form: A0 and A1 are the
    curvature spheres scaled so that the spacelike columns A2, A3 have unit
    length, which fixes the coframe; A2..A5 then follow from the derivative
    relations of the canonical form.  ``orientation`` picks the labelling of
    the two principal directions by the sign of alpha1 ^ alpha2 (the two
    labellings are the only admissible ones).  The sign of A0 is chosen so
    that det A > 0.
    """
    grid = lift.grid
    if base is None:
        base = (grid.nu // 2, grid.nv // 2)
    k_u, _, ratio_u = pencil_sphere(lift, "u")  # stationary along u
    k_v, _, ratio_v = pencil_sphere(lift, "v")
    # labelling X1 = d/du: A0 ~ sphere stationary along X2 = d/dv
    candidates = {"u": (k_v, k_u, "u", "v"), "v": (k_u, k_v, "v", "u")}
    chosen, last = None, None
    for key in ("u", "v"):
        k_2, k_1, d1, d2 = candidates[key]
        try:
            A, C, inv = _build_frame(lift, k_2, k_1, d1, d2, 1.0)
        except Exception as exc:  # noqa: BLE001 - surface degeneracy reported below
            last = exc
            continue
        if orientation is None or C.orientation == orientation:
            chosen = (key, A, C, inv)
            break
    if chosen is None:
        raise ReductionError(f"no labelling with orientation {orientation}: {last}")
    key, A, C, inv = chosen
    k_2, k_1, d1, d2 = candidates[key]
    dets = np.linalg.det(A)
    if dets[base] < 0:
        A, C, inv = _build_frame(lift, k_2, k_1, d1, d2, -1.0)
        dets = np.linalg.det(A)
    frame = FrameField(grid, A, base)
    mc = frame.mc_form()
    read = read_invariants(mc, C)
    sl = grid.interior(report_margin(grid))
    report = {
        "labelling": f"alpha1 annihilates d/d{d2}",
        "orientation": int(C.orientation),
        "det_min": float(np.min(dets)),
        "group_residual": float(np.max(frame.drift())),
        "group_residual_interior": float(np.max(frame.drift()[sl])),
        "pattern_residual_interior": _pattern_interior(mc, sl),
        "coframe_residual_interior": float(max(
            (mc.entry(3, 0) - C.alpha1).max_abs(report_margin(grid)),
            (mc.entry(2, 1) - C.alpha2).max_abs(report_margin(grid)))),
        "r_readback_interior": float(max(np.max(np.abs((read.r1 - inv.r1).values[sl])),
                                         np.max(np.abs((read.r2 - inv.r2).values[sl])))),
        "pencil_solve_ratio": max(ratio_u, ratio_v),
    }
    return CanonicalReduction(frame, inv, C, report)


def report_margin(grid: Grid) -> int:
    """Node margin for interior residual reports: a fixed fraction (1/8) of the patch.

    Nested one-sided stencils lose accuracy in the outer layers; a margin that
    scales with the grid keeps the reported region fixed under refinement.
    """
    return max(2, min(grid.nu, grid.nv) // 8)


def _pattern_interior(mc: MatrixForm, sl) -> float:
    sub = MatrixForm.__new__(MatrixForm)
    sub.P, sub.Q = mc.P[sl], mc.Q[sl]
    sub.grid, sub.fn = mc.grid, None
    return pattern_residual(sub)


# -- comparisons -------------------------------------------------------------------


def congruent(I: InvariantSet, J: InvariantSet, tol: float = 1e-9) -> bool:
    """True iff all six invariant fields agree within ``tol`` (relative to max(1, |field|))."""
    if I.grid != J.grid:
        raise GridError("invariant sets live on different grids")
    if not (I.has_r and J.has_r):
        raise ValueError("congruence needs complete invariant sets (with r)")
    a, b = I.fields(), J.fields()
    for name in ("q1", "q2", "p1", "p2", "r1", "r2"):
        scale = max(1.0, a[name].max_abs(), b[name].max_abs())
        if np.max(np.abs(a[name].values - b[name].values)) > tol * scale:
            return False
    return True


def _jets(y: np.ndarray, i: int, j: int, hu: float, hv: float, s: int):
    """0-, 1- and 2-jets of chart coordinates y (nu, nv, 5) at (i, j) with stencil step s."""
    du, dv = s * hu, s * hv
    c = y[i, j]
    yu = (y[i + s, j] - y[i - s, j]) / (2 * du)
    yv = (y[i, j + s] - y[i, j - s]) / (2 * dv)
    yuu = (y[i + s, j] - 2 * c + y[i - s, j]) / du**2
    yvv = (y[i, j + s] - 2 * c + y[i, j - s]) / dv**2
    yuv = (y[i + s, j + s] - y[i + s, j - s] - y[i - s, j + s] + y[i - s, j - s]) / (4 * du * dv)
    return [c, np.concatenate([yu, yv]), np.concatenate([yuu, yuv, yvv])]


def contact_order(f: LegendreField, ft: LegendreField, B, p: tuple[int, int],
                  margin: float = 10.0, floor: float = 1e-8) -> Optional[int]:
    """Highest order k in {0, 1, 2} at which B(p) f and ft have the same k-jet at p.

    Both maps are moved by the group element taking ft(p) to [eps0 ^ eps1],
    read through the affine chart, and differentiated with central stencils
    at steps h and 2h.  Jets agree when their difference is within
    ``margin`` times the Richardson error estimate of either jet plus
    ``floor``.  Returns None when even the 0-jets differ.
    """
    grid = check_same_grid(f.grid, ft.grid)
    i, j = p
    if not (2 <= i < grid.nu - 2 and 2 <= j < grid.nv - 2):
        raise ValueError("contact order needs nodes at distance >= 2 from the boundary")
    Bp = B.A[p] if isinstance(B, FrameField) else np.asarray(B, dtype=float)
    X = g_inverse(isotropy_completion(ft.f0[p], ft.f1[p]))
    sl = (slice(i - 2, i + 3), slice(j - 2, j + 3))
    M = X @ Bp
    try:
        y = chart_coordinates(f.f0[sl] @ M.T, f.f1[sl] @ M.T)
        yt = chart_coordinates(ft.f0[sl] @ X.T, ft.f1[sl] @ X.T)
    except LieQuadricError as exc:
        raise LieQuadricError(f"contact order at {p}: {exc}") from exc
    jets = {}
    for name, arr in (("f", y), ("ft", yt)):
        jets[name] = (_jets(arr, 2, 2, grid.hu, grid.hv, 1), _jets(arr, 2, 2, grid.hu, grid.hv, 2))
    order = None
    for k in range(3):
        diff = np.max(np.abs(jets["f"][0][k] - jets["ft"][0][k]))
        err = (np.max(np.abs(jets["f"][0][k] - jets["f"][1][k])) + np.max(np.abs(jets["ft"][0][k] - jets["ft"][1][k]))) / 3.0
        scale = max(1.0, float(np.max(np.abs(jets["ft"][0][k]))))
        if diff <= margin * err + floor * scale:
            order = k
        else:
            break
    return order


def sample_nodes(grid: Grid, count: int = 5, margin: int = 2) -> list[tuple[int, int]]:
    """Deterministic interior sample: the centre and four off-centre nodes."""
    ci, cj = grid.nu // 2, grid.nv // 2
    qi, qj = max(margin, grid.nu // 4), max(margin, grid.nv // 4)
    pts = [(ci, cj), (qi, qj), (grid.nu - 1 - qi, qj), (qi, grid.nv - 1 - qj), (grid.nu - 1 - qi, grid.nv - 1 - qj)]
    return pts[:count]
