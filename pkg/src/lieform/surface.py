"""Euclidean surface patches in curvature-line coordinates.

Fundamental forms, principal curvatures, the Legendre lift into R^{4,2},
the beta/gamma invariants, the Euclidean formulas for the canonical coframe,
curvature spheres, and the nondegeneracy classification.

The lift of a point F with unit normal n is

    F0 = (1, F1/sqrt2, F2, F3, -F1/sqrt2, F.F/2)
    F1 = (0, (1+n1)/sqrt2, n2, n3, (1-n1)/sqrt2, n.F) / sqrt2

Both vectors are null, mutually orthogonal, and <dF0, F1> = 0.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .coframe import Coframe
from .fields import Grid, OneForm, ScalarField, diff_u, diff_v
from .liequadric import inner

SQRT2 = np.sqrt(2.0)

#: evaluator returning {(a, b): d^a_u d^b_v F} with arrays of shape (..., 3)
PatchEvaluator = Callable[[np.ndarray, np.ndarray], dict]

LABELS = ("nondegenerate", "canal-beta", "canal-gamma", "dupin", "umbilic")
_SEVERITY = {"nondegenerate": 0, "canal-beta": 1, "canal-gamma": 1, "dupin": 2, "umbilic": 3}


class SurfaceError(ValueError):
    """Base class for geometric precondition failures on surfaces."""


class ImmersionError(SurfaceError):
    pass


class NotCurvatureLineError(SurfaceError):
    pass


class UmbilicError(SurfaceError):
    def __init__(self, message: str, nodes=()):
        super().__init__(message)
        self.nodes = list(nodes)


class DegenerateError(SurfaceError):
    def __init__(self, message: str, report: "ClassificationReport"):
        super().__init__(message)
        self.report = report


class IllConditionedError(SurfaceError):
    pass


@dataclass
class SurfacePatch:
    """Positions F on a grid, optionally with an exact derivative evaluator."""

    grid: Grid
    F: np.ndarray
    evaluator: Optional[PatchEvaluator] = None
    name: str = "patch"

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        if self.F.shape != self.grid.shape + (3,):
            raise ValueError(f"positions must have shape {self.grid.shape + (3,)}")

    @classmethod
    def from_evaluator(cls, grid: Grid, evaluator: PatchEvaluator, name: str = "patch") -> "SurfacePatch":
        uu, vv = grid.mesh()
        return cls(grid, evaluator(uu, vv)[(0, 0)], evaluator, name)

    def partials(self) -> dict:
        """First and second partials, exact when an evaluator is present."""
        if self.evaluator is not None:
            uu, vv = self.grid.mesh()
            d = self.evaluator(uu, vv)
            return {k: d[k] for k in ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))}
        g = self.grid
        fu = diff_u(self.F, g)
        fv = diff_v(self.F, g)
        return {(0, 0): self.F, (1, 0): fu, (0, 1): fv,
                (2, 0): diff_u(fu, g), (1, 1): 0.5 * (diff_v(fu, g) + diff_u(fv, g)), (0, 2): diff_v(fv, g)}


@dataclass
class CurvatureData:
    """Normal, fundamental forms and principal curvatures of a patch."""

    surface: SurfacePatch
    n: np.ndarray
    e: ScalarField
    f: ScalarField
    g: ScalarField
    L: ScalarField
    M: ScalarField
    N: ScalarField
    k1: ScalarField
    k2: ScalarField

    @property
    def grid(self) -> Grid:
        return self.surface.grid


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def curvature_data(S: SurfacePatch, tol: Optional[float] = None) -> CurvatureData:
    """Fundamental forms and k1 = L/e, k2 = N/g, validating curvature-line coordinates.

    ``tol`` bounds |f|/sqrt(eg) and |M|/sqrt(LL+NN+eg) on interior nodes; the
    default is 1e-8 with an exact evaluator and 1e-3 for sampled data.
    """
    grid = S.grid
    d = S.partials()
    fu, fv = d[(1, 0)], d[(0, 1)]
    cross = np.cross(fu, fv)
    norm = np.linalg.norm(cross, axis=-1)
    scale = np.sqrt(_dot(fu, fu) * _dot(fv, fv))
    bad = norm <= 1e-10 * np.maximum(np.max(scale), 1e-300)
    if np.any(bad):
        idx = np.argwhere(bad)[:5].tolist()
        raise ImmersionError(f"F_u x F_v vanishes at {int(bad.sum())} node(s), e.g. {idx}")
    n = cross / norm[..., None]
    e, f, g = _dot(fu, fu), _dot(fu, fv), _dot(fv, fv)
    L, M, N = _dot(d[(2, 0)], n), _dot(d[(1, 1)], n), _dot(d[(0, 2)], n)
    if tol is None:
        tol = 1e-8 if S.evaluator is not None else 1e-3
    inner_sl = grid.interior(1)
    rel_f = np.abs(f) / np.sqrt(e * g)
    rel_m = np.abs(M) / np.maximum(np.sqrt(L * L + N * N + 1e-300), np.sqrt(e * g) * 1e-12)
    rel_m = np.where(np.abs(M) < 1e-12 * np.sqrt(e * g), 0.0, rel_m)
    if np.max(rel_f[inner_sl]) > tol or np.max(rel_m[inner_sl]) > tol:
        raise NotCurvatureLineError(
            f"not curvature-line coordinates: max |f| rel {np.max(rel_f[inner_sl]):.3e}, "
            f"max |M| rel {np.max(rel_m[inner_sl]):.3e} (tol {tol:.1e})")
    sf = lambda x: ScalarField(grid, x)  # noqa: E731
    return CurvatureData(S, n, sf(e), sf(f), sf(g), sf(L), sf(M), sf(N), sf(L / e), sf(N / g))


def parallel_surface(S: SurfacePatch, t: float, C: Optional[CurvatureData] = None) -> SurfacePatch:
    """The Euclidean parallel patch F + t n (sampled; derivatives by differences)."""
    if C is None:
        C = curvature_data(S)
    shifted = SurfacePatch(S.grid, S.F + t * C.n, None, f"{S.name}+{t:g}n")
    fu, fv = diff_u(shifted.F, S.grid), diff_v(shifted.F, S.grid)
    area = np.linalg.norm(np.cross(fu, fv), axis=-1)
    ref = np.linalg.norm(np.cross(diff_u(S.F, S.grid), diff_v(S.F, S.grid)), axis=-1)
    if np.any(area <= 1e-8 * np.max(ref)):
        focal = sorted({float(np.round(x, 12)) for x in np.concatenate(
            [1.0 / C.k1.values[C.k1.values != 0], 1.0 / C.k2.values[C.k2.values != 0]]).ravel()[:50]})
        raise ImmersionError(f"parallel shift t={t:g} hits the focal set (focal values 1/k_i include {focal[:4]})")
    return shifted


@dataclass
class LegendreField:
    """Per-node spanning pairs (F0, F1) of a Legendre map; arrays (nu, nv, 6)."""

    grid: Grid
    f0: np.ndarray
    f1: np.ndarray

    def isotropy_residual(self) -> float:
        """Largest relative |<Fa, Fb>| over nodes and pairs."""
        s = np.maximum(np.max(np.abs(self.f0), axis=-1), np.max(np.abs(self.f1), axis=-1)) ** 2
        s = np.maximum(s, 1.0)
        vals = [inner(self.f0, self.f0), inner(self.f0, self.f1), inner(self.f1, self.f1)]
        return float(max(np.max(np.abs(v) / s) for v in vals))

    def contact_residual(self, margin: int = 1) -> float:
        """max |<dF0, F1>| over interior nodes with central differences."""
        sl = self.grid.interior(margin)
        cu = inner(diff_u(self.f0, self.grid), self.f1)[sl]
        cv = inner(diff_v(self.f0, self.grid), self.f1)[sl]
        return float(max(np.max(np.abs(cu)), np.max(np.abs(cv))))

    def element(self, i: int, j: int):
        from .liequadric import LegendreElement

        return LegendreElement(self.f0[i, j], self.f1[i, j])


def lift_point(F: np.ndarray, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lie-sphere lift of positions and unit normals (arrays (..., 3))."""
    F = np.asarray(F, dtype=float)
    n = np.asarray(n, dtype=float)
    one = np.ones(F.shape[:-1])
    f0 = np.stack([one, F[..., 0] / SQRT2, F[..., 1], F[..., 2], -F[..., 0] / SQRT2,
                   0.5 * _dot(F, F)], axis=-1)
    f1 = np.stack([0.0 * one, (1.0 + n[..., 0]) / SQRT2, n[..., 1], n[..., 2], (1.0 - n[..., 0]) / SQRT2,
                   _dot(n, F)], axis=-1) / SQRT2
    return f0, f1


def legendre_lift(S: SurfacePatch, C: Optional[CurvatureData] = None) -> LegendreField:
    if C is None:
        C = curvature_data(S)
    f0, f1 = lift_point(S.F, C.n)
    return LegendreField(S.grid, f0, f1)


@dataclass
class BetaGamma:
    beta: ScalarField
    gamma: ScalarField


def _umbilic_mask(C: CurvatureData) -> np.ndarray:
    k1, k2 = C.k1.values, C.k2.values
    return np.abs(k1 - k2) < 1e-6 * np.maximum.reduce([np.abs(k1), np.abs(k2), np.ones_like(k1)])


def _beta_gamma_raw(C: CurvatureData) -> tuple[np.ndarray, np.ndarray]:
    grid = C.grid
    k1, k2 = C.k1.values, C.k2.values
    k1u = diff_u(k1, grid)
    k2v = diff_v(k2, grid)
    ratio = np.sqrt(C.e.values / C.g.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = ratio * k1u / (k1 - k2)
        gamma = k2v / (ratio * (k2 - k1))
    return beta, gamma


def beta_gamma(C: CurvatureData) -> BetaGamma:
    """beta = (k1-k2)^-1 sqrt(e/g) (k1)_u, gamma = (k2-k1)^-1 sqrt(g/e) (k2)_v."""
    umb = _umbilic_mask(C)
    if np.any(umb):
        nodes = [tuple(x) for x in np.argwhere(umb).tolist()]
        raise UmbilicError(f"umbilic at {len(nodes)} node(s)", nodes)
    beta, gamma = _beta_gamma_raw(C)
    return BetaGamma(ScalarField(C.grid, beta), ScalarField(C.grid, gamma))


@dataclass
class ClassificationReport:
    labels: np.ndarray
    verdict: str
    offending: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    scale: float = 1.0

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "counts": dict(sorted(self.counts.items())),
                "offending_nodes": [list(x) for x in self.offending[:20]],
                "offending_total": len(self.offending), "degeneracy_scale": self.scale}


def classify_curvature(C: CurvatureData, rel: float = 1e-6) -> ClassificationReport:
    """Per-node labels from |k1-k2|, |beta|, |gamma|; verdict is the worst label.

    The degeneracy scale is max(1, median of |beta|, |gamma| over the
    non-umbilic nodes of the patch).
    """
    umb = _umbilic_mask(C)
    beta, gamma = _beta_gamma_raw(C)
    ok = ~umb
    if np.any(ok):
        scale = float(max(1.0, np.median(np.concatenate([np.abs(beta[ok]), np.abs(gamma[ok])]))))
    else:
        scale = 1.0
    small_b = np.abs(beta) < rel * scale
    small_g = np.abs(gamma) < rel * scale
    labels = np.full(C.grid.shape, "nondegenerate", dtype=object)
    labels[small_b & ~small_g] = "canal-beta"
    labels[small_g & ~small_b] = "canal-gamma"
    labels[small_b & small_g] = "dupin"
    labels[umb] = "umbilic"
    counts = Counter(labels.ravel().tolist())
    worst = max(counts, key=lambda k: (_SEVERITY[k], counts[k]))
    offending = [tuple(x) for x in np.argwhere(labels != "nondegenerate").tolist()]
    return ClassificationReport(labels, worst, offending, dict(counts), scale)


def classify(S: SurfacePatch) -> ClassificationReport:
    return classify_curvature(curvature_data(S))


def is_canal(label: str) -> bool:
    return label.startswith("canal")


def euclidean_coframe(C: CurvatureData) -> Coframe:
    """alpha1 = cbrt(beta gamma^2) dv, alpha2 = cbrt(beta^2 gamma) du (real cube roots)."""
    report = classify_curvature(C)
    if report.verdict != "nondegenerate":
        raise DegenerateError(f"surface is not nondegenerate ({report.verdict})", report)
    bg = beta_gamma(C)
    b, c = bg.beta, bg.gamma
    zero = ScalarField.constant(C.grid, 0.0)
    a1 = OneForm(zero, (b * c * c).map(np.cbrt))
    a2 = OneForm((b * b * c).map(np.cbrt), zero)
    return Coframe(a1, a2)


def phi_closed_form(C: CurvatureData) -> ScalarField:
    """du dv coefficient of the quadratic form, (k1-k2)^-2 (k1)_u (k2)_v."""
    k1, k2 = C.k1.values, C.k2.values
    return ScalarField(C.grid, diff_u(k1, C.grid) * diff_v(k2, C.grid) / (k1 - k2) ** 2)


def psi_closed_form(C: CurvatureData) -> tuple[ScalarField, ScalarField]:
    """du^3 and dv^3 coefficients of the cubic form from curvature data."""
    k1, k2 = C.k1.values, C.k2.values
    k1u, k2v = diff_u(k1, C.grid), diff_v(k2, C.grid)
    e, g = C.e.values, C.g.values
    pre = -k1u * k2v / ((k1 - k2) ** 3 * np.sqrt(e * g))
    return ScalarField(C.grid, pre * e * k1u), ScalarField(C.grid, pre * g * k2v)


def _two_thirds(x: ScalarField) -> ScalarField:
    return x.map(lambda a: np.cbrt(a) ** 2)


def q_from_betagamma(bg: BetaGamma) -> tuple[ScalarField, ScalarField]:
    """q1 = -(2 beta_v + (beta/gamma) gamma_v) / (3 (beta^2 gamma)^(2/3)),
    q2 = ((gamma/beta) beta_u + 2 gamma_u) / (3 (beta gamma^2)^(2/3))."""
    b, c = bg.beta, bg.gamma
    q1 = -(2.0 * b.dv() + (b / c) * c.dv()) / (3.0 * _two_thirds(b * b * c))
    q2 = ((c / b) * b.du() + 2.0 * c.du()) / (3.0 * _two_thirds(b * c * c))
    return q1, q2


@dataclass
class CurvatureSpheres:
    """Curvature-sphere fields K1 (u-direction) and K2 (v-direction), arrays (nu, nv, 6)."""

    k1: np.ndarray
    k2: np.ndarray
    coeffs1: np.ndarray
    coeffs2: np.ndarray
    rank1: np.ndarray
    rank2: np.ndarray
    solve_ratio: float

    @property
    def t1(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.coeffs1[..., 0] != 0, self.coeffs1[..., 1] / self.coeffs1[..., 0], np.inf)

    @property
    def t2(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.coeffs2[..., 0] != 0, self.coeffs2[..., 1] / self.coeffs2[..., 0], np.inf)

    @property
    def immersive(self) -> bool:
        return bool(np.all(self.rank1 == 2) and np.all(self.rank2 == 2))


def _complement_projection(f0: np.ndarray, f1: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Euclidean projection of x onto the orthogonal complement of span(f0, f1)."""
    basis = np.stack([f0, f1], axis=-1)  # (..., 6, 2)
    gram = np.swapaxes(basis, -1, -2) @ basis
    coef = np.linalg.solve(gram, np.swapaxes(basis, -1, -2) @ x[..., None])
    return x - (basis @ coef)[..., 0]


def align_signs(vecs: np.ndarray, base: Optional[tuple[int, int]] = None) -> np.ndarray:
    """Flip per-node vectors so neighbouring values point the same way.

    Propagates along the base row, then along every column.
    """
    out = vecs.copy()
    nu, nv = out.shape[:2]
    i0, j0 = base if base is not None else (nu // 2, nv // 2)

    def fix(dst, src):
        if np.dot(out[dst], out[src]) < 0:
            out[dst] = -out[dst]

    for i in range(i0 + 1, nu):
        fix((i, j0), (i - 1, j0))
    for i in range(i0 - 1, -1, -1):
        fix((i, j0), (i + 1, j0))
    for i in range(nu):
        for j in range(j0 + 1, nv):
            fix((i, j), (i, j - 1))
        for j in range(j0 - 1, -1, -1):
            fix((i, j), (i, j + 1))
    return out


def pencil_sphere(lift: LegendreField, direction: str, cond_max: float = 1e8):
    """The pencil member c0 F0 + c1 F1 whose derivative along ``direction`` stays in the plane.

    Returns (K, coeffs, ratio) where ``ratio`` is the worst s_min/s_max of the
    per-node 6x2 least-squares systems.
    """
    grid = lift.grid
    diff = diff_u if direction == "u" else diff_v
    d0 = _complement_projection(lift.f0, lift.f1, diff(lift.f0, grid))
    d1 = _complement_projection(lift.f0, lift.f1, diff(lift.f1, grid))
    m = np.stack([d0, d1], axis=-1)  # (nu, nv, 6, 2)
    _, s, vt = np.linalg.svd(m)
    ref = np.linalg.norm(diff(lift.f0, grid), axis=-1) + np.linalg.norm(diff(lift.f1, grid), axis=-1)
    if np.any(s[..., 0] * cond_max < ref):
        raise IllConditionedError(f"curvature-sphere solve ill-conditioned along {direction}")
    coeffs = align_signs(vt[..., -1, :])
    K = coeffs[..., 0:1] * lift.f0 + coeffs[..., 1:2] * lift.f1
    ratio = float(np.max(s[..., 1] / s[..., 0]))
    return K, coeffs, ratio


def sphere_rank(K: np.ndarray, grid: Grid, rel: float = 1e-6) -> np.ndarray:
    """Rank of d[K] as a map into projective space (2 = immersive)."""
    kn = K / np.linalg.norm(K, axis=-1, keepdims=True)
    m = np.stack([kn, diff_u(kn, grid), diff_v(kn, grid)], axis=-1)
    s = np.linalg.svd(m, compute_uv=False)
    return np.sum(s > rel * s[..., :1], axis=-1) - 1


def curvature_spheres(S: SurfacePatch, allow_umbilic: bool = False) -> CurvatureSpheres:
    """Curvature spheres for the u- and v-directions plus a rank report."""
    C = curvature_data(S)
    if not allow_umbilic:
        umb = _umbilic_mask(C)
        if np.any(umb):
            nodes = [tuple(x) for x in np.argwhere(umb).tolist()]
            raise UmbilicError(f"umbilic at {len(nodes)} node(s)", nodes)
    lift = legendre_lift(S, C)
    K1, c1, r1 = pencil_sphere(lift, "u")
    K2, c2, r2 = pencil_sphere(lift, "v")
    return CurvatureSpheres(K1, K2, c1, c2, sphere_rank(K1, S.grid), sphere_rank(K2, S.grid), max(r1, r2))
