"""Second-order deformations: the sigma-connection, its parallel sections, and synthesis.

A parallel section w = (w1, w2, w3) of the sigma-connection (dw + sigma w = 0)
yields an infinitesimal deformation eta(w1, w2), a 1-form with values in the
abelian subalgebra that kills eps0 and eps1.  Integrating the canonical
frame A of f and the frame A~ of the shifted form alpha - eta from the same
base value gives the deformed surface f~ = [A~0 ^ A~1] and the map
D = A~ A^{-1}, whose logarithmic derivative is -A eta A^{-1}.  The sign is
chosen so that the deformed invariants are r~ = r - w.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coframe import Coframe, InvariantSet, MissingInvariantError, dual_derivatives, form_coefficients
from .fields import Grid, MatrixForm, OneForm, ScalarField, check_same_grid, combine, diff_u, diff_v, transport
from .frames import (
    FrameField,
    assemble_mc,
    congruent,
    contact_order,
    integrate_frame,
    report_margin,
    sample_nodes,
    structure_residual,
)
from .liequadric import algebra_residual, complete_algebra, g_inverse

#: relative singular-value threshold separating kernel from non-kernel
KERNEL_THRESHOLD = 1e-8


@dataclass
class SigmaConnection:
    """The 3x3 connection form together with the data it was built from."""

    form: MatrixForm
    coframe: Coframe
    p1: ScalarField
    p2: ScalarField

    @property
    def grid(self) -> Grid:
        return self.form.grid

    def entry(self, i: int, j: int) -> OneForm:
        return self.form.entry(i, j)


def sigma(I: InvariantSet, C: Coframe) -> SigmaConnection:
    """sigma-connection built from q, p and the coframe (r is not used)."""
    for name in ("q1", "q2", "p1", "p2"):
        if getattr(I, name, None) is None:
            raise MissingInvariantError(f"sigma needs {name}")
    grid = check_same_grid(I.grid, C.grid)
    q1, q2, p1, p2 = I.q1, I.q2, I.p1, I.p2
    table = {
        (0, 0): (-4.0 * q1, 2.0 * q2),
        (1, 1): (-2.0 * q1, 4.0 * q2),
        (2, 2): (-3.0 * q1, 3.0 * q2),
        (0, 2): (-1.0, 0.0),
        (1, 2): (0.0, 1.0),
        (2, 0): (0.0, 2.0 * (p2 - 1.0)),
        (2, 1): (-2.0 * (p1 - 1.0), 0.0),
    }
    entries = {k: combine(v, grid, C.alpha1, C.alpha2) for k, v in table.items()}
    return SigmaConnection(MatrixForm.from_entries(grid, 3, entries), C, p1, p2)


@dataclass
class CurvatureReport:
    numeric: np.ndarray  # (nu, nv, 3, 3) du^dv coefficients of d sigma + sigma ^ sigma
    closed: np.ndarray
    grid: Grid

    @property
    def difference(self) -> ScalarField:
        return ScalarField(self.grid, np.max(np.abs(self.numeric - self.closed), axis=(-2, -1)))

    def max_difference(self, margin: int = 1) -> float:
        return self.difference.max_abs(margin)

    def max_numeric(self, margin: int = 1) -> float:
        return float(np.max(np.abs(self.numeric[self.grid.interior(margin)])))


def sigma_curvature(s: SigmaConnection) -> CurvatureReport:
    """Curvature of sigma, numerically and from the closed form (only the last row survives)."""
    numeric = s.form.structure()
    C = s.coframe
    d1p2, _ = dual_derivatives(s.p2, C)
    _, d2p1 = dual_derivatives(s.p1, C)
    w = C.wedge().values
    closed = np.zeros_like(numeric)
    closed[..., 2, 0] = 2.0 * d1p2.values * w
    closed[..., 2, 1] = 2.0 * d2p1.values * w
    closed[..., 2, 2] = 3.0 * (s.p2.values - s.p1.values) * w
    return CurvatureReport(numeric, closed, s.grid)


# -- parallel sections -------------------------------------------------------------


def _section_fields(grid: Grid, values: np.ndarray) -> tuple[ScalarField, ScalarField, ScalarField]:
    return tuple(ScalarField(grid, values[..., k]) for k in range(3))


def parallel_residual(s: SigmaConnection, w) -> ScalarField:
    """Per node, max component of dw + sigma w (both the du and dv parts)."""
    grid = s.grid
    vals = np.stack([x.values if isinstance(x, ScalarField) else np.broadcast_to(x, grid.shape) for x in w], -1)
    ru = diff_u(vals, grid) + (s.form.P @ vals[..., None])[..., 0]
    rv = diff_v(vals, grid) + (s.form.Q @ vals[..., None])[..., 0]
    return ScalarField(grid, np.maximum(np.max(np.abs(ru), -1), np.max(np.abs(rv), -1)))


@dataclass
class ParallelSpace:
    dim: int
    initial: np.ndarray  # (3, dim) orthonormal initial vectors at the base node
    basis: list  # dim triples of ScalarField
    spectrum: np.ndarray  # normalised singular values, descending
    threshold: float
    gap: Optional[float]
    residuals: list  # max |dw + sigma w| (interior) per basis section
    base: tuple[int, int]
    fundamental: np.ndarray  # (nu, nv, 3, 3), row-then-column transport
    grid: Grid

    def section(self, coeffs) -> tuple[ScalarField, ScalarField, ScalarField]:
        """The parallel section with the given coefficients on the basis."""
        v = self.initial @ np.asarray(coeffs, dtype=float)
        return _section_fields(self.grid, (self.fundamental @ v))

    def span_residual(self, w) -> float:
        """Relative least-squares residual of a section field against the basis span."""
        target = np.stack([x.values for x in w], -1).reshape(-1)
        if self.dim == 0:
            return 1.0
        cols = np.stack([np.stack([x.values for x in b], -1).reshape(-1) for b in self.basis], -1)
        c, *_ = np.linalg.lstsq(cols, target, rcond=None)
        return float(np.max(np.abs(cols @ c - target)) / max(np.max(np.abs(target)), 1e-300))

    def to_dict(self) -> dict:
        return {
            "dim": int(self.dim),
            "spectrum": [float(x) for x in self.spectrum],
            "threshold": self.threshold,
            "gap": None if self.gap is None else float(self.gap),
            "base_node": list(self.base),
            "initial_vectors": self.initial.T.tolist(),
            "section_residuals": [float(x) for x in self.residuals],
        }


def solve_parallel(s: SigmaConnection, base: Optional[tuple[int, int]] = None,
                   threshold: float = KERNEL_THRESHOLD, substeps: int = 4) -> ParallelSpace:
    """Space of parallel sections, decided by a rank test on path consistency.

    The fundamental solution of dw = -sigma w is transported along two
    independent path families (base row then columns, base column then
    rows).  An initial vector v gives a parallel section exactly when both
    transports agree at every node, so the kernel of the stacked difference
    (Phi_row - Phi_col) is the space of initial values.  Singular values are
    normalised by the norm of the stacked fundamental solution; those below
    ``threshold`` count as kernel.
    """
    grid = s.grid
    if base is None:
        base = (grid.nu // 2, grid.nv // 2)
    eye = np.eye(3)
    phi_row = transport(s.form, eye, base, "row", "section", substeps)
    phi_col = transport(s.form, eye, base, "col", "section", substeps)
    ref = float(np.linalg.norm(phi_row.reshape(-1, 3), 2))
    _, sv, vt = np.linalg.svd((phi_row - phi_col).reshape(-1, 3), full_matrices=False)
    spectrum = sv / ref
    kernel = spectrum < threshold
    dim = int(np.sum(kernel))
    if dim > 3:
        raise AssertionError("parallel space dimension exceeds 3")
    initial = vt[kernel].T if dim else np.zeros((3, 0))
    if dim == 3:
        initial = eye  # any basis of R^3 works; keep the canonical one
    kept, rejected = spectrum[~kernel], spectrum[kernel]
    if dim == 0:
        gap = None
    elif kept.size:
        gap = float(np.min(kept) / max(np.max(rejected), np.finfo(float).eps))
    else:
        gap = float(1.0 / max(np.max(rejected), np.finfo(float).eps))
    basis = [_section_fields(grid, phi_row @ initial[:, k]) for k in range(dim)]
    m = report_margin(grid)
    residuals = [parallel_residual(s, b).max_abs(m) for b in basis]
    return ParallelSpace(dim, initial, basis, spectrum, threshold, gap, residuals, base, phi_row, grid)


# -- infinitesimal deformations ----------------------------------------------------


@dataclass
class InfinitesimalDeformation:
    w1: ScalarField
    w2: ScalarField
    form: MatrixForm


def eta(w1, w2, C: Coframe) -> InfinitesimalDeformation:
    """The subalgebra-valued 1-form attached to (w1, w2)."""
    grid = C.grid
    w1 = w1 if isinstance(w1, ScalarField) else ScalarField.constant(grid, float(w1))
    w2 = w2 if isinstance(w2, ScalarField) else ScalarField.constant(grid, float(w2))
    zero = OneForm.zero(grid)
    seeds = {
        (0, 3): combine((w1, 0.0), grid, C.alpha1, C.alpha2),
        (0, 4): combine((-w2, w1), grid, C.alpha1, C.alpha2),
        (1, 2): combine((0.0, w2), grid, C.alpha1, C.alpha2),
    }
    full = complete_algebra(seeds, zero=zero)
    form = MatrixForm.from_entries(grid, 6, {k: v for k, v in full.items() if v is not zero})
    if max(algebra_residual(form.P), algebra_residual(form.Q)) > 1e-12 * max(1.0, form.max_abs()):
        raise AssertionError("eta left the Lie algebra")
    return InfinitesimalDeformation(w1, w2, form)


@dataclass
class DeltaResult:
    delta: MatrixForm
    closed_residual: ScalarField  # |d delta| per node
    gauge_residual: ScalarField  # |d eta + alpha ^ eta + eta ^ alpha| per node

    def max_closed(self, margin: int = 1) -> float:
        return self.closed_residual.max_abs(margin)

    def max_gauge(self, margin: int = 1) -> float:
        return self.gauge_residual.max_abs(margin)


def delta(A: FrameField, e: InfinitesimalDeformation, alpha: Optional[MatrixForm] = None) -> DeltaResult:
    """delta = A eta A^{-1} and two closedness residuals.

    ``alpha`` defaults to the finite-difference Maurer-Cartan form of A.
    """
    grid = check_same_grid(A.grid, e.form.grid)
    inv = g_inverse(A.A)
    d = e.form.conjugate(A.A, inv)
    closed = np.max(np.abs(d.d()), axis=(-2, -1))
    if alpha is None:
        alpha = A.mc_form()
    ef = e.form
    gauge = ef.d() + alpha.P @ ef.Q - alpha.Q @ ef.P + ef.P @ alpha.Q - ef.Q @ alpha.P
    return DeltaResult(d, ScalarField(grid, closed), ScalarField(grid, np.max(np.abs(gauge), axis=(-2, -1))))


# -- synthesis -----------------------------------------------------------------------


class DeformationVerificationError(RuntimeError):
    def __init__(self, message: str, result: "DeformationResult"):
        super().__init__(message)
        self.result = result


@dataclass
class DeformationResult:
    original: InvariantSet
    deformed: InvariantSet
    A: FrameField
    At: FrameField
    D: FrameField
    f: object
    ft: object
    report: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def deform(I: InvariantSet, C: Coframe, w, A0: Optional[np.ndarray] = None,
           base: Optional[tuple[int, int]] = None, substeps: int = 4,
           r_tol: Optional[float] = None, strict: bool = False, r_factor: float = 50.0) -> DeformationResult:
    """Build the deformed surface for a parallel section ``w`` and verify it.

    Checks: the coframe of alpha - eta equals that of alpha entry by entry,
    the deformed r read back from the integrated frame equals r - w within
    ``r_tol`` (default ``r_factor`` h^2 times max(1, |r|)), and contact order 2 holds
    at five interior sample nodes.  Failures are collected in ``failures``;
    with ``strict`` they raise.
    """
    grid = check_same_grid(I.grid, C.grid)
    r1, r2 = I.require_r()
    w1, w2 = w[0], w[1]
    e = eta(w1, w2, C)
    alpha = assemble_mc(I, C)
    alpha_t = alpha - e.form
    if base is None:
        base = (grid.nu // 2, grid.nv // 2)
    A = integrate_frame(alpha, A0, base, substeps=substeps)
    At = integrate_frame(alpha_t, A0, base, substeps=substeps)
    D = FrameField(grid, At.A @ g_inverse(A.A), base)

    failures = []
    coframe_shift = max(np.max(np.abs(alpha_t.P[..., 3, 0] - alpha.P[..., 3, 0])),
                        np.max(np.abs(alpha_t.Q[..., 3, 0] - alpha.Q[..., 3, 0])),
                        np.max(np.abs(alpha_t.P[..., 2, 1] - alpha.P[..., 2, 1])),
                        np.max(np.abs(alpha_t.Q[..., 2, 1] - alpha.Q[..., 2, 1])))
    if coframe_shift != 0.0:
        failures.append(f"deformed coframe differs by {coframe_shift:.3e}")

    mc_t = At.mc_form()
    rt1, p2t = form_coefficients(mc_t.entry(0, 3), C)
    p1t, rt2 = form_coefficients(mc_t.entry(1, 2), C)
    deformed = InvariantSet(I.q1, I.q2, I.p1, I.p2, rt1.drop_evaluator(), rt2.drop_evaluator(),
                            provenance="deformed")
    m = report_margin(grid)
    scale = max(1.0, r1.max_abs(), r2.max_abs())
    r_err = max((rt1 - (r1 - w1)).max_abs(m), (rt2 - (r2 - w2)).max_abs(m))
    if r_tol is None:
        r_tol = r_factor * grid.h**2 * scale
    if r_err > r_tol:
        failures.append(f"deformed r deviates from r - w by {r_err:.3e} (tol {r_tol:.3e})")

    f, ft = A.legendre(), At.legendre()
    nodes = sample_nodes(grid)
    orders = [contact_order(f, ft, D, p) for p in nodes]
    if any(o != 2 for o in orders):
        failures.append(f"contact orders {orders} (expected 2)")

    report = {
        "structure_residual": structure_residual(alpha).max_abs(1),
        "structure_residual_deformed": structure_residual(alpha_t).max_abs(1),
        "coframe_shift": float(coframe_shift),
        "r_readback_error": float(r_err),
        "r_tol": float(r_tol),
        "p_readback_error": float(max((p1t - I.p1).max_abs(m), (p2t - I.p2).max_abs(m))),
        "frame_drift": float(np.max(A.drift())),
        "frame_drift_deformed": float(np.max(At.drift())),
        "contact_orders": [{"node": list(p), "order": o} for p, o in zip(nodes, orders)],
        # read-back r carries discretisation error, so compare at the r tolerance
        "congruent": bool(congruent(I, deformed, tol=r_tol / scale)),
        "trivial": bool(max(w1.max_abs() if isinstance(w1, ScalarField) else abs(w1),
                            w2.max_abs() if isinstance(w2, ScalarField) else abs(w2)) == 0.0),
    }
    # the deformed set carries exact q, p and the law r - w; the read-back r is in extras
    deformed_law = InvariantSet(I.q1, I.q2, I.p1, I.p2, r1 - w1, r2 - w2, provenance="deformed",
                                extras={"r1_readback": deformed.r1, "r2_readback": deformed.r2})
    result = DeformationResult(I, deformed_law, A, At, D, f, ft, report, failures)
    if strict and failures:
        raise DeformationVerificationError("; ".join(failures), result)
    return result


def classify_deformation(w, tol: float = 1e-9) -> str:
    """generic (w1 w2 nowhere zero), special (w1 w2 identically zero) or mixed."""
    w1, w2 = w[0], w[1]
    prod = np.abs(np.asarray(getattr(w1, "values", w1), float) * np.asarray(getattr(w2, "values", w2), float))
    if np.min(prod) > tol:
        return "generic"
    if np.max(prod) < tol:
        return "special"
    return "mixed"
