"""Finite-difference exterior calculus on coframes and the invariant functions.

A coframe (alpha1, alpha2) is stored by its components against du, dv, so no
algorithm assumes which coordinate differential carries alpha1.  With the
dual derivatives ``dg = d1g alpha1 + d2g alpha2`` the structure equations give

    q2 = -d(alpha1)/W,   q1 = -d(alpha2)/W,       (W = alpha1 ^ alpha2)
    p2 = 1 + q1 q2 + 2 d2q1 + d1q2,
    p1 = 1 + q1 q2 - d2q1 - 2 d1q2,

and the web curvature d2q1 + d1q2 = (p2 - p1)/3.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .fields import (
    Grid,
    OneForm,
    ScalarField,
    SingularCoframeError,
    check_same_grid,
    exterior_d,
    wedge,
)

__all__ = [
    "Coframe",
    "InvariantSet",
    "WebData",
    "FormPack",
    "exterior_d",
    "dual_derivatives",
    "extract_q",
    "extract_p",
    "extract_invariants",
    "gauss_residual",
    "codazzi_residual",
    "web",
    "form_pack",
    "anticyclidic_directions",
    "MissingInvariantError",
]

#: relative floor on |W| below which a coframe counts as singular
WEDGE_FLOOR = 1e-12


class MissingInvariantError(ValueError):
    """An operation needs r1, r2 (or q, p) that the invariant set lacks."""


@dataclass
class Coframe:
    """A pair of independent 1-forms with an orientation flag.

    ``orientation`` is +1 or -1 and satisfies ``orientation * W > 0`` at
    every node.  Extraction formulas are ratios of forms and do not depend
    on the flag; it only records which labelling of the coordinates gives a
    positive area form.
    """

    alpha1: OneForm
    alpha2: OneForm
    orientation: int = 0

    def __post_init__(self):
        check_same_grid(self.alpha1.grid, self.alpha2.grid)
        w = self.wedge().values
        wmax = float(np.max(np.abs(w)))
        if wmax == 0.0 or not np.all(np.isfinite(w)):
            raise SingularCoframeError("coframe wedge coefficient vanishes identically")
        small = np.abs(w) <= WEDGE_FLOOR * wmax
        if np.any(small):
            raise SingularCoframeError(f"coframe degenerates at {int(np.sum(small))} node(s)")
        sign = np.sign(w)
        if np.all(sign > 0):
            found = 1
        elif np.all(sign < 0):
            found = -1
        else:
            raise SingularCoframeError("wedge coefficient changes sign on the patch")
        if self.orientation == 0:
            self.orientation = found
        elif self.orientation != found:
            raise SingularCoframeError(f"orientation flag {self.orientation} contradicts wedge sign {found}")

    @property
    def grid(self) -> Grid:
        return self.alpha1.grid

    @classmethod
    def coordinate(cls, grid: Grid) -> "Coframe":
        """The constant coframe (du, dv)."""
        return cls(OneForm.du(grid), OneForm.dv(grid))

    def wedge(self) -> ScalarField:
        """Coefficient W of alpha1 ^ alpha2 against du ^ dv."""
        return wedge(self.alpha1, self.alpha2)

    def volume(self) -> ScalarField:
        """Orientation-normalised wedge coefficient (positive)."""
        return self.wedge() * float(self.orientation)

    def negated(self) -> "Coframe":
        """The other sign representative (-alpha1, -alpha2)."""
        return Coframe(-self.alpha1, -self.alpha2, self.orientation)

    def components(self) -> np.ndarray:
        """Array (nu, nv, 2, 2): rows alpha1, alpha2; columns du, dv."""
        a1, a2 = self.alpha1, self.alpha2
        return np.stack([np.stack([a1.P.values, a1.Q.values], -1),
                         np.stack([a2.P.values, a2.Q.values], -1)], -2)

    def equals(self, other: "Coframe", tol: float = 0.0) -> bool:
        if self.grid != other.grid:
            return False
        return bool(np.max(np.abs(self.components() - other.components())) <= tol)


@dataclass
class InvariantSet:
    """Invariant functions q1, q2, p1, p2 and optionally r1, r2."""

    q1: ScalarField
    q2: ScalarField
    p1: ScalarField
    p2: ScalarField
    r1: Optional[ScalarField] = None
    r2: Optional[ScalarField] = None
    provenance: str = "extracted"
    extras: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.q1.grid

    @property
    def has_r(self) -> bool:
        return self.r1 is not None and self.r2 is not None

    def require_r(self) -> tuple[ScalarField, ScalarField]:
        if not self.has_r:
            raise MissingInvariantError("r1, r2 unavailable for this invariant set")
        return self.r1, self.r2

    def with_r(self, r1: ScalarField, r2: ScalarField) -> "InvariantSet":
        return replace(self, r1=r1, r2=r2)

    def fields(self) -> dict[str, ScalarField]:
        out = {"q1": self.q1, "q2": self.q2, "p1": self.p1, "p2": self.p2}
        if self.has_r:
            out.update(r1=self.r1, r2=self.r2)
        return out


def _wedge_checked(C: Coframe) -> ScalarField:
    w = C.wedge()
    wmax = float(np.max(np.abs(w.values)))
    if np.any(np.abs(w.values) <= WEDGE_FLOOR * wmax):
        raise SingularCoframeError("wedge coefficient below floor")
    return w


def dual_derivatives(g: ScalarField, C: Coframe) -> tuple[ScalarField, ScalarField]:
    """(d1 g, d2 g) with dg = d1g alpha1 + d2g alpha2."""
    check_same_grid(g.grid, C.grid)
    w = _wedge_checked(C)
    gu, gv = g.du(), g.dv()
    a1, a2 = C.alpha1, C.alpha2
    d1 = (gu * a2.Q - gv * a2.P) / w
    d2 = (gv * a1.P - gu * a1.Q) / w
    return d1.drop_evaluator(), d2.drop_evaluator()


def form_coefficients(w: OneForm, C: Coframe) -> tuple[ScalarField, ScalarField]:
    """Coefficients (a, b) of a 1-form against the coframe: w = a alpha1 + b alpha2."""
    wedge_c = _wedge_checked(C)
    a1, a2 = C.alpha1, C.alpha2
    a = (w.P * a2.Q - w.Q * a2.P) / wedge_c
    b = (w.Q * a1.P - w.P * a1.Q) / wedge_c
    return a, b


def extract_q(C: Coframe) -> tuple[ScalarField, ScalarField]:
    """q1, q2 from d(alpha1) = -q2 alpha1^alpha2 and d(alpha2) = -q1 alpha1^alpha2."""
    w = _wedge_checked(C)
    q2 = -exterior_d(C.alpha1) / w
    q1 = -exterior_d(C.alpha2) / w
    return q1, q2


def extract_p(C: Coframe, q1: ScalarField, q2: ScalarField) -> tuple[ScalarField, ScalarField]:
    """p1, p2 solved from the second-order Gauss equations."""
    d1q1, d2q1 = dual_derivatives(q1, C)
    d1q2, d2q2 = dual_derivatives(q2, C)
    qq = q1 * q2
    p2 = 1.0 + qq + 2.0 * d2q1 + d1q2
    p1 = 1.0 + qq - d2q1 - 2.0 * d1q2
    return p1.drop_evaluator(), p2.drop_evaluator()


def extract_invariants(C: Coframe) -> InvariantSet:
    q1, q2 = extract_q(C)
    p1, p2 = extract_p(C, q1, q2)
    return InvariantSet(q1, q2, p1, p2, provenance="extracted")


def gauss_residual(I: InvariantSet, C: Coframe) -> dict[str, ScalarField]:
    """Left-minus-right coefficients (of alpha1^alpha2) of the Gauss equations.

    First order: d(alpha1) + q2 alpha1^alpha2 and d(alpha2) + q1 alpha1^alpha2.
    Second order: -2dq1^alpha1 + dq2^alpha2 - (p2 - q1q2 - 1) alpha1^alpha2 and
    -dq1^alpha1 + 2dq2^alpha2 - (-p1 + q1q2 + 1) alpha1^alpha2.
    """
    w = _wedge_checked(C)
    d1q1, d2q1 = dual_derivatives(I.q1, C)
    d1q2, d2q2 = dual_derivatives(I.q2, C)
    qq = I.q1 * I.q2
    # dq ^ alpha1 = -d2q alpha1^alpha2, dq ^ alpha2 = d1q alpha1^alpha2
    return {
        "dalpha1": exterior_d(C.alpha1) / w + I.q2,
        "dalpha2": exterior_d(C.alpha2) / w + I.q1,
        "gauss1": 2.0 * d2q1 + d1q2 - (I.p2 - qq - 1.0),
        "gauss2": d2q1 + 2.0 * d1q2 - (-I.p1 + qq + 1.0),
    }


def codazzi_residual(I: InvariantSet, C: Coframe) -> tuple[ScalarField, ScalarField, ScalarField]:
    """The three Codazzi-Mainardi residuals (coefficients of alpha1^alpha2).

        dr1^alpha1 + dp2^alpha2 - (2 q2 r1 + 3 q1 p2) alpha1^alpha2
        dp1^alpha1 + dr2^alpha2 - (2 q1 r2 + 3 q2 p1) alpha1^alpha2
        -dr2^alpha1 + dr1^alpha2 - 4 (q1 r1 - q2 r2) alpha1^alpha2
    """
    r1, r2 = I.require_r()
    d1r1, d2r1 = dual_derivatives(r1, C)
    d1r2, d2r2 = dual_derivatives(r2, C)
    d1p1, d2p1 = dual_derivatives(I.p1, C)
    d1p2, d2p2 = dual_derivatives(I.p2, C)
    q1, q2 = I.q1, I.q2
    c1 = -d2r1 + d1p2 - (2.0 * q2 * r1 + 3.0 * q1 * I.p2)
    c2 = -d2p1 + d1r2 - (2.0 * q1 * r2 + 3.0 * q2 * I.p1)
    c3 = d2r2 + d1r1 - 4.0 * (q1 * r1 - q2 * r2)
    return c1.drop_evaluator(), c2.drop_evaluator(), c3.drop_evaluator()


@dataclass
class WebData:
    """Connection form and curvature of the 3-web alpha1 = 0, alpha2 = 0, alpha1 = alpha2."""

    zeta: OneForm
    curvature: ScalarField
    identity_residual: ScalarField
    diagonally_cyclidic: bool


def web(C: Coframe, q1: ScalarField, q2: ScalarField, tol: float = 1e-6) -> WebData:
    """zeta_w = -q1 alpha1 + q2 alpha2 and R_w = (p2 - p1)/3.

    ``identity_residual`` is d(zeta_w)/W - R_w, computed along an independent
    path (an exterior derivative instead of the dual derivatives).
    """
    zeta = C.alpha1 * (-q1) + C.alpha2 * q2
    p1, p2 = extract_p(C, q1, q2)
    rw = (p2 - p1) / 3.0
    w = _wedge_checked(C)
    resid = exterior_d(zeta) / w - rw
    scale = max(1.0, p1.max_abs(), p2.max_abs())
    return WebData(zeta, rw, resid, bool(rw.max_abs() <= tol * scale))


class UndefinedDirectionError(ValueError):
    """The Fubini-Blaschke quotient is 0/0 (zero tangent vector)."""


@dataclass
class FormPack:
    """Evaluators of the quadratic form, the cubic form and their quotient."""

    coframe: Coframe

    def _ab(self, xu, xv):
        a = self.coframe.alpha1(xu, xv).values
        b = self.coframe.alpha2(xu, xv).values
        return a, b

    def quadratic(self, xu, xv) -> np.ndarray:
        a, b = self._ab(xu, xv)
        return -a * b

    def cubic(self, xu, xv) -> np.ndarray:
        a, b = self._ab(xu, xv)
        return -a**3 + b**3

    def quotient(self, xu, xv) -> np.ndarray:
        """Psi/Phi as an extended real; +inf encodes the infinite value."""
        a, b = self._ab(xu, xv)
        return quotient_value(a, b)


def quotient_value(a, b) -> np.ndarray:
    """(a^3 - b^3)/(a b) with inf where ab = 0 and a^3 != b^3."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    num = a**3 - b**3
    den = a * b
    if np.any((num == 0) & (den == 0)):
        raise UndefinedDirectionError("Fubini-Blaschke quotient undefined (0/0)")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den == 0, np.inf, num / np.where(den == 0, 1.0, den))
    return out


def form_pack(C: Coframe) -> FormPack:
    return FormPack(C)


def anticyclidic_directions(C: Coframe):
    """Not implemented: orthogonality with respect to the split quadratic form
    is not fixed by the source for the anti-cyclidic system."""
    raise NotImplementedError(
        "anti-cyclidic directions are undefined: the quadratic form is split, and the intended "
        "orthogonality is not specified"
    )
