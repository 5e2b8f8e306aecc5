"""Closed-form example families.

Surfaces (Enneper, torus, surfaces of revolution), isothermic and
L-isothermic coframes with their potentials, the generic and special
normal forms, and the flat-web family built from solutions of the
Liouville equation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coframe import Coframe, InvariantSet
from .expr import Expression, Num, add, call, mul, parse
from .fields import Grid, MatrixForm, OneForm, ScalarField, diff_u, diff_v, exterior_d, transport
from .surface import SurfacePatch

# -- surfaces -------------------------------------------------------------------


def _stack3(x, y, z):
    x, y, z = np.broadcast_arrays(x, y, z)
    return np.stack([x, y, z], axis=-1)


def enneper(grid: Grid) -> SurfacePatch:
    """x = u - u^3/3 + u v^2, y = -v + v^3/3 - u^2 v, z = u^2 - v^2."""
    if grid.u0 <= 0.0 <= grid.u1 or grid.v0 <= 0.0 <= grid.v1:
        warnings.warn("Enneper grid meets a coordinate axis; degeneracy expected there", stacklevel=2)

    def ev(u, v):
        z0 = np.zeros_like(u * v)
        one = z0 + 1.0
        return {
            (0, 0): _stack3(u - u**3 / 3 + u * v**2, -v + v**3 / 3 - u**2 * v, u**2 - v**2),
            (1, 0): _stack3(1 - u**2 + v**2, -2 * u * v, 2 * u),
            (0, 1): _stack3(2 * u * v, -1 + v**2 - u**2, -2 * v),
            (2, 0): _stack3(-2 * u, -2 * v, 2 * one),
            (1, 1): _stack3(2 * v, -2 * u, z0),
            (0, 2): _stack3(2 * u, 2 * v, -2 * one),
            (3, 0): _stack3(-2 * one, z0, z0),
            (2, 1): _stack3(z0, -2 * one, z0),
            (1, 2): _stack3(2 * one, z0, z0),
            (0, 3): _stack3(z0, 2 * one, z0),
        }

    return SurfacePatch.from_evaluator(grid, ev, "enneper")


def revolution(rho: "str | Expression", height: "str | Expression", grid: Grid,
               name: str = "revolution") -> SurfacePatch:
    """F = (rho(u) cos v, rho(u) sin v, z(u)) for profile expressions in u."""
    r = [parse(rho)]
    z = [parse(height)]
    for k in range(3):
        r.append(r[-1].diff("u"))
        z.append(z[-1].diff("u"))

    def ev(u, v):
        c, s = np.cos(v), np.sin(v)
        rv = [f(u, v) for f in r]
        zv = [f(u, v) for f in z]
        out = {}
        for a in range(4):
            for b in range(4 - a):
                # d^b/dv^b of (cos v, sin v) cycles through (-sin, cos), (-cos, -sin), (sin, -cos)
                cb = [c, -s, -c, s][b % 4]
                sb = [s, c, -s, -c][b % 4]
                zz = zv[a] if b == 0 else np.zeros_like(rv[a])
                out[(a, b)] = _stack3(rv[a] * cb, rv[a] * sb, zz)
        return out

    return SurfacePatch.from_evaluator(grid, ev, name)


def torus(R: float, r: float, grid: Grid) -> SurfacePatch:
    """Torus of revolution; u is the meridian angle, so k1 = 1/r."""
    return revolution(f"{R!r} + {r!r}*cos(u)", f"{r!r}*sin(u)", grid, "torus")


def catenoid(grid: Grid) -> SurfacePatch:
    """Surface of revolution of the catenary rho = cosh(u)."""
    return revolution("(exp(u) + exp(-u))/2", "u", grid, "catenoid")


def paraboloid(grid: Grid) -> SurfacePatch:
    return revolution("u", "u^2", grid, "paraboloid")


def sphere(radius: float, grid: Grid) -> SurfacePatch:
    return revolution(f"{radius!r}*cos(u)", f"{radius!r}*sin(u)", grid, "sphere")


def plane(grid: Grid) -> SurfacePatch:
    def ev(u, v):
        z0 = np.zeros_like(u * v)
        one = z0 + 1.0
        out = {(a, b): _stack3(z0, z0, z0) for a in range(4) for b in range(4 - a)}
        out[(0, 0)] = _stack3(u + z0, v + z0, z0)
        out[(1, 0)] = _stack3(one, z0, z0)
        out[(0, 1)] = _stack3(z0, one, z0)
        return out

    return SurfacePatch.from_evaluator(grid, ev, "plane")


# -- potentials and isothermic coframes ------------------------------------------


class CatalogError(ValueError):
    """Invalid catalog parameters."""


class GeometryError(CatalogError):
    """Well-formed parameters that describe no admissible surface or net on the grid."""


class _Derivs:
    """Lazily differentiated expression: ``d[(a, b)]`` is the (a, b) partial as an Expression."""

    def __init__(self, expr: "str | Expression"):
        self._cache = {(0, 0): parse(expr)}

    def __getitem__(self, key: tuple[int, int]) -> Expression:
        if key not in self._cache:
            a, b = key
            base = self[(a - 1, b)] if a > 0 else self[(a, b - 1)]
            self._cache[key] = base.diff("u" if a > 0 else "v")
        return self._cache[key]


def _field(grid: Grid, fn) -> ScalarField:
    return ScalarField.from_fn(grid, fn)


@dataclass
class IsothermicSpec:
    """Potential psi = log(phi) and the kind of net it belongs to."""

    psi: "str | Expression"
    mode: str = "isothermic"  # or "l-isothermic"

    def __post_init__(self):
        if self.mode not in ("isothermic", "l-isothermic"):
            raise CatalogError(f"unknown mode {self.mode!r}")
        self.d = _Derivs(self.psi)


def _check_nondegenerate(d: _Derivs, grid: Grid) -> None:
    uu, vv = grid.mesh()
    prod = d[(1, 0)](uu, vv) * d[(0, 1)](uu, vv)
    if not np.all(np.isfinite(prod)) or np.min(np.abs(prod)) == 0.0 or (np.min(prod) < 0 < np.max(prod)):
        raise GeometryError("psi_u * psi_v vanishes on the grid (degenerate net)")


def _cbrt_forms(d: _Derivs, grid: Grid) -> tuple[ScalarField, ScalarField]:
    """(cbrt(psi_u^2 psi_v), cbrt(psi_u psi_v^2)) as analytic fields."""
    pu, pv = d[(1, 0)], d[(0, 1)]
    a = _field(grid, lambda u, v: np.cbrt(pu(u, v) ** 2 * pv(u, v)))
    b = _field(grid, lambda u, v: np.cbrt(pu(u, v) * pv(u, v) ** 2))
    return a, b


def isothermic_coframe(S: IsothermicSpec, grid: Grid) -> Coframe:
    """Canonical coframe of an isothermic (or L-isothermic) net with potential psi.

    isothermic:   alpha1 = cbrt(psi_u psi_v^2) dv,  alpha2 = cbrt(psi_u^2 psi_v) du
    l-isothermic: alpha1 = cbrt(psi_u^2 psi_v) du,  alpha2 = cbrt(psi_u psi_v^2) dv
    """
    _check_nondegenerate(S.d, grid)
    a, b = _cbrt_forms(S.d, grid)
    zero = ScalarField.constant(grid, 0.0)
    if S.mode == "isothermic":
        return Coframe(OneForm(zero, b), OneForm(a, zero))
    return Coframe(OneForm(a, zero), OneForm(zero, b))


def compat_residual(S: IsothermicSpec, grid: Grid) -> ScalarField:
    """Potential equation residual by nested central differences.

    isothermic:   Lap(phi_uv / phi) + 2 (phi^2)_uv
    l-isothermic: Lap(phi_uv / phi)
    """
    uu, vv = grid.mesh()
    phi = np.exp(S.d[(0, 0)](uu, vv))
    hq = diff_u(diff_v(phi, grid), grid) / phi
    res = diff_u(diff_u(hq, grid), grid) + diff_v(diff_v(hq, grid), grid)
    if S.mode == "isothermic":
        res = res + 2.0 * diff_u(diff_v(phi**2, grid), grid)
    return ScalarField(grid, res)


def alpha_phi(S: IsothermicSpec, grid: Grid) -> tuple[OneForm, ScalarField]:
    """The 1-form whose closedness encodes the potential equation, and its d-residual.

    With g = exp(-2 psi) Lap(psi) and k = 1 (isothermic) or 0 (l-isothermic):
    alpha_phi = -e^{2psi}(g_u/2 + 2 psi_u (k + g)) du + e^{2psi}(g_v/2 + 2 psi_v (k + g)) dv.
    """
    k = 1.0 if S.mode == "isothermic" else 0.0
    psi = S.d[(0, 0)].node
    lap = add(S.d[(2, 0)].node, S.d[(0, 2)].node)
    g = Expression(mul(call("exp", mul(Num(-2.0), psi)), lap))
    gu, gv = g.diff("u"), g.diff("v")
    pu, pv, p0, gg = S.d[(1, 0)], S.d[(0, 1)], S.d[(0, 0)], g

    def P(u, v):
        return -np.exp(2 * p0(u, v)) * (0.5 * gu(u, v) + 2 * pu(u, v) * (k + gg(u, v)))

    def Q(u, v):
        return np.exp(2 * p0(u, v)) * (0.5 * gv(u, v) + 2 * pv(u, v) * (k + gg(u, v)))

    form = OneForm(_field(grid, P), _field(grid, Q))
    return form, exterior_d(form)


def isothermic_candidate(S: IsothermicSpec, grid: Grid) -> tuple[ScalarField, ScalarField, ScalarField]:
    """Closed-form parallel section attached to the potential.

    For the l-isothermic (generic normal form) labelling
    w = (cbrt(psi_u^-4 psi_v^-2), -cbrt(psi_u^-2 psi_v^-4), 2 psi_u^-2 psi_v^-2 psi_uv);
    the isothermic labelling swaps the roles of psi_u and psi_v in w1, w2.
    """
    d = S.d
    pu, pv, puv = d[(1, 0)], d[(0, 1)], d[(1, 1)]
    a, b = (pu, pv) if S.mode == "l-isothermic" else (pv, pu)
    w1 = _field(grid, lambda u, v: np.cbrt(a(u, v) ** -4 * b(u, v) ** -2))
    w2 = _field(grid, lambda u, v: -np.cbrt(a(u, v) ** -2 * b(u, v) ** -4))
    w3 = _field(grid, lambda u, v: 2.0 * (pu(u, v) * pv(u, v)) ** -2 * puv(u, v))
    return w1, w2, w3


def _section_report(C: Coframe, w, label: str) -> dict:
    from .coframe import extract_invariants
    from .deformation import parallel_residual, sigma
    from .frames import report_margin

    s = sigma(extract_invariants(C), C)
    res = parallel_residual(s, w)
    return {"label": label, "residual": res.max_abs(report_margin(C.grid))}


def generic_candidate(psi: "str | Expression", grid: Grid):
    """Generic normal-form coframe, its printed parallel-section candidate and a residual report.

    The coframe is alpha1 = cbrt(psi_u^2 psi_v) du, alpha2 = cbrt(psi_u psi_v^2) dv.
    """
    S = IsothermicSpec(psi, "l-isothermic")
    C = isothermic_coframe(S, grid)
    w = isothermic_candidate(S, grid)
    report = _section_report(C, w, "generic")
    prod = w[0].values * w[1].values
    report["w1w2_max"] = float(np.max(prod))
    return C, w, report


@dataclass
class SpecialSpec:
    psi: "str | Expression"

    def __post_init__(self):
        self.d = _Derivs(self.psi)


def special_coframe(S: SpecialSpec, grid: Grid) -> tuple[Coframe, dict]:
    """Coframe alpha1 = psi^(2/3) du, alpha2 = psi^(1/3) dv and its p2 = 1 check."""
    from .coframe import extract_invariants
    from .frames import report_margin

    uu, vv = grid.mesh()
    p0 = S.d[(0, 0)]
    if np.min(p0(uu, vv)) <= 0:
        raise GeometryError("special normal form needs psi > 0")
    zero = ScalarField.constant(grid, 0.0)
    C = Coframe(OneForm(_field(grid, lambda u, v: np.cbrt(p0(u, v) ** 2)), zero),
                OneForm(zero, _field(grid, lambda u, v: np.cbrt(p0(u, v)))))
    inv = extract_invariants(C)
    m = report_margin(grid)
    return C, {"p2_minus_1": (inv.p2 - 1.0).max_abs(m), "p1_range": inv.p1.summary()}


def special_candidate(S: SpecialSpec, grid: Grid, exponent: float = -4.0 / 3.0, sign: float = 1.0):
    """Section (w1, 0, w3) with w1 = sign * psi^exponent and w3 solved from the first row.

    The first row of dw + sigma w = 0 reads dw1 + sigma_00 w1 = alpha1 w3; its du
    part fixes w3.  The exponent that makes the section parallel is -4/3.
    """
    p0 = S.d[(0, 0)]
    pu = S.d[(1, 0)]

    def w1f(u, v):
        return sign * p0(u, v) ** exponent

    def w3f(u, v):
        psi = p0(u, v)
        # q1 = -psi_u psi^(-5/3) / 3, sigma_00 du-part = -4 q1 psi^(2/3)
        s00 = 4.0 / 3.0 * pu(u, v) / psi
        w1u = sign * exponent * psi ** (exponent - 1.0) * pu(u, v)
        return (w1u + s00 * w1f(u, v)) / np.cbrt(psi**2)

    return _field(grid, w1f), ScalarField.constant(grid, 0.0), _field(grid, w3f)


# -- flat-web family -----------------------------------------------------------------


class Profile:
    """A function of one coordinate with derivatives up to order 3."""

    var = "u"

    def derivs(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError


class ExpressionProfile(Profile):
    def __init__(self, expr: "str | Expression", var: str):
        e = parse(expr)
        bad = e.variables() - {var}
        if bad:
            raise CatalogError(f"profile in {var} depends on {sorted(bad)}")
        self.var = var
        self.source = e.source
        self._d = [e]
        for _ in range(3):
            self._d.append(self._d[-1].diff(var))

    def derivs(self, x):
        x = np.asarray(x, dtype=float)
        args = (x, 0.0) if self.var == "u" else (0.0, x)
        return tuple(np.broadcast_to(f(*args), x.shape) for f in self._d)

    def __repr__(self):
        return f"ExpressionProfile({self.source!r}, {self.var!r})"


class BranchPointError(GeometryError):
    """P(lambda) reached zero: the real cube root branch ends there."""

    def __init__(self, message: str, x: np.ndarray, values: np.ndarray):
        super().__init__(message)
        self.x = x
        self.values = values


class PolynomialProfile(Profile):
    """Solution of (lambda')^3 = P(lambda) with lambda(x0) = lam0 (real cube root).

    A dense RK4 table on [lo, hi] is built once; off-table points take one RK4
    step from the nearest table node.  Derivatives use the ODE:
    lambda'' = P'/(3 P^(1/3)), lambda''' = P''/3 - P'^2/(9 P).
    """

    def __init__(self, coeffs, lo: float, hi: float, x0: float, lam0: float, var: str = "u",
                 intervals: int = 4096):
        self.coeffs = np.asarray(coeffs, dtype=float)  # highest degree first (np.polyval order)
        self.P = np.poly1d(self.coeffs)
        self.dP, self.ddP = self.P.deriv(1), self.P.deriv(2)
        self.var = var
        if not (lo <= x0 <= hi):
            raise CatalogError("initial point outside the profile range")
        if self.P(lam0) == 0.0:
            raise BranchPointError("P(lambda0) = 0", np.array([x0]), np.array([lam0]))
        n_left = max(1, int(round(intervals * (x0 - lo) / (hi - lo)))) if x0 > lo else 0
        n_right = max(1, int(round(intervals * (hi - x0) / (hi - lo)))) if x0 < hi else 0
        xl = np.linspace(x0, lo, n_left + 1)[1:] if n_left else np.empty(0)
        xr = np.linspace(x0, hi, n_right + 1)[1:] if n_right else np.empty(0)
        left = self._march(lam0, x0, xl)
        right = self._march(lam0, x0, xr)
        self.x = np.concatenate([xl[::-1], [x0], xr])
        self.lam = np.concatenate([left[::-1], [lam0], right])
        self.lo, self.hi = lo, hi

    def _rhs(self, lam):
        return np.cbrt(self.P(lam))

    def _stages(self, lam, h):
        k1 = self._rhs(lam)
        y2 = lam + 0.5 * h * k1
        k2 = self._rhs(y2)
        y3 = lam + 0.5 * h * k2
        k3 = self._rhs(y3)
        y4 = lam + h * k3
        k4 = self._rhs(y4)
        return lam + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), (y2, y3, y4)

    def _step(self, lam, h):
        return self._stages(lam, h)[0]

    def _march(self, lam0, x0, xs):
        out = np.empty(xs.shape)
        lam, x = lam0, x0
        sign0 = np.sign(self.P(lam0))
        for k, xn in enumerate(xs):
            lam, stages = self._stages(lam, xn - x)
            # near a simple root RK4 can stall just short of it; the stages still cross
            if any(np.sign(self.P(y)) != sign0 for y in (lam, *stages)):
                raise BranchPointError(f"P(lambda) changes sign near {self.var} = {xn:.6g}",
                                       np.asarray(xs[:k]), out[:k].copy())
            out[k] = lam
            x = xn
        return out

    def values(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo - 1e-12) or np.any(x > self.hi + 1e-12):
            raise CatalogError("profile evaluated outside its range")
        idx = np.clip(np.searchsorted(self.x, x), 1, len(self.x) - 1)
        idx = np.where(np.abs(self.x[idx - 1] - x) < np.abs(self.x[idx] - x), idx - 1, idx)
        return self._step(self.lam[idx], x - self.x[idx])

    def derivs(self, x):
        lam = self.values(x)
        P, dP, ddP = self.P(lam), self.dP(lam), self.ddP(lam)
        l1 = np.cbrt(P)
        return lam, l1, dP / (3.0 * l1), ddP / 3.0 - dP**2 / (9.0 * P)


def polynomial_lambda(coeffs, lo: float, hi: float, x0: Optional[float] = None, lam0: float = 1.0,
                      var: str = "u") -> PolynomialProfile:
    """Profile solving (d lambda/dx)^3 = P(lambda); coefficients highest degree first."""
    return PolynomialProfile(coeffs, lo, hi, lo if x0 is None else x0, lam0, var)


def mirror_polynomial(coeffs) -> np.ndarray:
    """Coefficients of Q(T) = -P(-T) for the partner profile mu."""
    c = np.asarray(coeffs, dtype=float)
    deg = len(c) - 1
    return np.array([-a * (-1.0) ** (deg - k) for k, a in enumerate(c)])


def _as_profile(p, var: str) -> Profile:
    if isinstance(p, Profile):
        if p.var != var:
            raise CatalogError(f"profile variable {p.var!r} where {var!r} was expected")
        return p
    return ExpressionProfile(p, var)


@dataclass
class FlatWebSpec:
    """Flat-web data: constant c and profiles lambda(u), mu(v).

    r-fields come from closed-form (A, B) expressions, or from integrating the
    linear system for (A, B, R) from initial values ``init`` at the base node.
    """

    c: float
    lam: "str | Profile" = "u"
    mu: "str | Profile" = "v"
    A: "Optional[str]" = None
    B: "Optional[str]" = None
    init: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        self.c = float(self.c)
        self.lam = _as_profile(self.lam, "u")
        self.mu = _as_profile(self.mu, "v")

    def psi_fns(self):
        """Analytic evaluators for psi and its partials up to order 2."""
        c, L, M = self.c, self.lam, self.mu

        def parts(u, v):
            lu = L.derivs(u)
            mv = M.derivs(v)
            return lu, mv

        def fns(u, v):
            (l0, l1, l2, l3), (m0, m1, m2, m3) = parts(u, v)
            out = {}
            if c == 1.0:
                out["e2psi"] = l1 * m1
                out["psi_u"] = 0.5 * l2 / l1 + 0.0 * m1
                out["psi_v"] = 0.5 * m2 / m1 + 0.0 * l1
                out["psi_uu"] = 0.5 * (l3 / l1 - (l2 / l1) ** 2) + 0.0 * m1
                out["psi_vv"] = 0.5 * (m3 / m1 - (m2 / m1) ** 2) + 0.0 * l1
                out["psi_uv"] = 0.0 * (l1 * m1)
            else:
                s = l0 + m0
                out["e2psi"] = l1 * m1 / ((1.0 - c) * s**2)
                out["psi_u"] = 0.5 * l2 / l1 - l1 / s
                out["psi_v"] = 0.5 * m2 / m1 - m1 / s
                out["psi_uu"] = 0.5 * (l3 / l1 - (l2 / l1) ** 2) - l2 / s + l1**2 / s**2
                out["psi_vv"] = 0.5 * (m3 / m1 - (m2 / m1) ** 2) - m2 / s + m1**2 / s**2
                out["psi_uv"] = l1 * m1 / s**2
            out["psi"] = 0.5 * np.log(out["e2psi"])
            return out

        return fns


@dataclass
class FlatWeb:
    spec: FlatWebSpec
    coframe: Coframe
    invariants: InvariantSet
    psi: dict  # name -> ScalarField (psi, psi_u, ...)
    liouville_residual: ScalarField
    candidates: list  # (label, section triple)
    report: dict = field(default_factory=dict)
    parallel: object = None


def _flat_fields(spec: FlatWebSpec, grid: Grid) -> dict:
    fns = spec.psi_fns()
    uu, vv = grid.mesh()
    with np.errstate(invalid="ignore", divide="ignore"):
        sample = fns(uu, vv)
    if not np.all(np.isfinite(sample["e2psi"])) or np.min(sample["e2psi"]) <= 0:
        raise GeometryError(
            "flat-web branch inconsistent: e^{2psi} = lambda' mu' / ((1-c)(lambda+mu)^2) must be positive"
            if spec.c != 1.0 else "flat-web branch inconsistent: lambda' mu' must be positive")
    return {k: ScalarField(grid, sample[k], (lambda u, v, k=k: fns(u, v)[k])) for k in sample}


def _eq48_residual(spec: FlatWebSpec, grid: Grid, psi: dict):
    """Residuals of A_v + A psi_v - 3c e^psi psi_u, B_u + B psi_u - 3c e^psi psi_v and
    A_u + B_v + 3 A psi_u + 3 B psi_v for closed-form A, B."""
    c = spec.c
    A, B = _Derivs(spec.A), _Derivs(spec.B)
    uu, vv = grid.mesh()
    ev = {k: f.values for k, f in psi.items()}
    ep = np.exp(ev["psi"])
    a, b = A[(0, 0)](uu, vv), B[(0, 0)](uu, vv)
    e1 = A[(0, 1)](uu, vv) + a * ev["psi_v"] - 3 * c * ep * ev["psi_u"]
    e2 = B[(1, 0)](uu, vv) + b * ev["psi_u"] - 3 * c * ep * ev["psi_v"]
    e3 = A[(1, 0)](uu, vv) + B[(0, 1)](uu, vv) + 3 * a * ev["psi_u"] + 3 * b * ev["psi_v"]
    return float(max(np.max(np.abs(e1)), np.max(np.abs(e2)), np.max(np.abs(e3)))), A, B


def _abr_form(spec: FlatWebSpec, grid: Grid, psi: dict) -> MatrixForm:
    """-N for the affine system d(A, B, R, 1) = N (A, B, R, 1) (section transport solves dX = -M X)."""
    c = spec.c
    f = {k: v for k, v in psi.items()}
    ep = f["psi"].map(np.exp)
    e2 = f["e2psi"]
    pu, pv, puu, pvv = f["psi_u"], f["psi_v"], f["psi_uu"], f["psi_vv"]
    zero = ScalarField.constant(grid, 0.0)
    one = ScalarField.constant(grid, 1.0)
    # du coefficients
    Nu = {(0, 0): -3.0 * pu, (0, 2): one,
          (1, 1): -1.0 * pu, (1, 3): 3.0 * c * ep * pv,
          (2, 2): -1.0 * pu, (2, 1): -2.0 * (1.0 - c) * e2, (2, 3): -3.0 * c * ep * (pvv + 4.0 * pv * pv)}
    Nv = {(0, 0): -1.0 * pv, (0, 3): 3.0 * c * ep * pu,
          (1, 1): -3.0 * pv, (1, 2): -1.0 * one,
          (2, 2): -1.0 * pv, (2, 0): 2.0 * (1.0 - c) * e2, (2, 3): 3.0 * c * ep * (puu + 4.0 * pu * pu)}
    entries = {}
    for key in set(Nu) | set(Nv):
        entries[key] = OneForm(-Nu.get(key, zero), -Nv.get(key, zero))
    return MatrixForm.from_entries(grid, 4, entries)


def flat_compat_residuals(spec: FlatWebSpec, grid: Grid, psi: dict) -> dict:
    """Integrability condition of the (A, B, R) system, with cubes and with squares.

    3c e^psi (psi_uuu + psi_vvv + 10 psi_u psi_uu + 10 psi_v psi_vv + 8 (psi_u^k + psi_v^k)), k = 3 or 2.
    """
    c = spec.c
    pu, pv = psi["psi_u"].values, psi["psi_v"].values
    puu, pvv = psi["psi_uu"].values, psi["psi_vv"].values
    puuu = diff_u(puu, grid)
    pvvv = diff_v(pvv, grid)
    ep = np.exp(psi["psi"].values)
    core = puuu + pvvv + 10 * pu * puu + 10 * pv * pvv
    m = max(2, min(grid.nu, grid.nv) // 8)
    sl = grid.interior(m)
    cubes = 3 * c * ep * (core + 8 * (pu**3 + pv**3))
    squares = 3 * c * ep * (core + 8 * (pu**2 + pv**2))
    return {"cubes": float(np.max(np.abs(cubes[sl]))), "squares": float(np.max(np.abs(squares[sl])))}


def _printed_candidates(spec: FlatWebSpec, grid: Grid, psi: dict) -> list:
    L, M = spec.lam, spec.mu
    fns = spec.psi_fns()

    def make(fn3):
        def comp(k):
            return lambda u, v: fn3(u, v)[k]
        return tuple(_field(grid, comp(k)) for k in range(3))

    def pre(u, v):
        (l0, l1, _, _), (m0, m1, _, _) = L.derivs(u), M.derivs(v)
        p = fns(u, v)["psi"]
        return l0, l1, m0, m1, np.exp(-2 * p), np.exp(-p)

    out = []
    if spec.c == 1.0:
        def s0(u, v):
            l0, l1, m0, m1, e2, e1 = pre(u, v)
            return e2 / l1, -e2 / m1, 0.0 * e2

        def s1(u, v):
            l0, l1, m0, m1, e2, e1 = pre(u, v)
            return e2 * l0 / l1, -e2 * m0 / m1, e2 * e1

        def s2(u, v):
            l0, l1, m0, m1, e2, e1 = pre(u, v)
            k = e2 * m0 * l0
            return k * l0 / l1, -k * m0 / m1, 2.0 * k * e1
    else:
        def s0(u, v):
            l0, l1, m0, m1, e2, e1 = pre(u, v)
            return -e2 / l1, e2 / m1, 2.0 * e2 * e1 / (l0 + m0)

        def s1(u, v):
            l0, l1, m0, m1, e2, e1 = pre(u, v)
            return e2 * l0 / l1, e2 * m0 / m1, e2 * e1 * (m0 - l0) / (l0 + m0)

        def s2(u, v):
            l0, l1, m0, m1, e2, e1 = pre(u, v)
            return e2 * l0**2 / l1, -e2 * m0**2 / m1, 2.0 * e2 * m0 * l0 * e1 / (l0 + m0)
    for k, fn in enumerate((s0, s1, s2)):
        out.append((f"printed_s{k}", make(fn)))
    if spec.c == 1.0:
        # the two sections that replace the printed s0, s2 pair
        def t0(u, v):
            l0, l1, m0, m1, e2, e1 = pre(u, v)
            return e2 / l1, 0.0 * e2, 0.0 * e2

        def t1(u, v):
            l0, l1, m0, m1, e2, e1 = pre(u, v)
            return 0.0 * e2, e2 / m1, 0.0 * e2

        out += [("derived_a", make(t0)), ("derived_b", make(t1))]
    return out


def flatweb(spec: FlatWebSpec, grid: Grid, solve: bool = True, base: Optional[tuple[int, int]] = None,
            tol: float = 1e-8) -> FlatWeb:
    """Flat-web instance: coframe e^psi (du, dv), q from psi, p1 = p2 = c, optional r.

    r1 = A e^{-psi}, r2 = B e^{-psi}.  With ``solve`` the parallel space of the
    sigma-connection is computed by brute force and the printed candidate
    sections are located against it.
    """
    from .deformation import parallel_residual, sigma, solve_parallel
    from .frames import report_margin

    psi = _flat_fields(spec, grid)
    ep = psi["psi"].map(np.exp)
    emp = psi["psi"].map(lambda x: np.exp(-x))
    zero = ScalarField.constant(grid, 0.0)
    C = Coframe(OneForm(ep, zero), OneForm(zero, ep))
    q1 = -1.0 * psi["psi_u"] * emp
    q2 = psi["psi_v"] * emp
    p = ScalarField.constant(grid, spec.c)
    report = {"c": spec.c, "lambda": repr(spec.lam), "mu": repr(spec.mu)}
    m = report_margin(grid)

    psi_uv_fd = diff_u(diff_v(psi["psi"].values, grid), grid)
    liou = ScalarField(grid, psi_uv_fd - (1.0 - spec.c) * psi["e2psi"].values)
    report["liouville_residual"] = liou.max_abs(m)
    report["compat"] = flat_compat_residuals(spec, grid, psi)

    r1 = r2 = None
    if spec.A is not None and spec.B is not None:
        res, A, B = _eq48_residual(spec, grid, psi)
        scale = max(1.0, float(np.max(np.abs(A[(0, 0)](*grid.mesh())))), float(np.max(np.abs(B[(0, 0)](*grid.mesh())))))
        report["r_source"] = "closed-form"
        report["ab_system_residual"] = res
        if res > tol * scale:
            raise CatalogError(f"supplied A, B violate the flat-web linear system (residual {res:.3e})")
        r1 = _field(grid, lambda u, v: A[(0, 0)](u, v) * np.exp(-psi["psi"].fn(u, v)))
        r2 = _field(grid, lambda u, v: B[(0, 0)](u, v) * np.exp(-psi["psi"].fn(u, v)))
    elif spec.init is not None:
        if base is None:
            base = (grid.nu // 2, grid.nv // 2)
        form = _abr_form(spec, grid, psi)
        x0 = np.array([*map(float, spec.init), 1.0])[:, None]
        xr = transport(form, x0, base, "row", "section", 4)[..., 0]
        xc = transport(form, x0, base, "col", "section", 4)[..., 0]
        report["r_source"] = "integrated"
        report["abr_path_discrepancy"] = float(np.max(np.abs(xr - xc)))
        r1 = ScalarField(grid, xr[..., 0] * emp.values)
        r2 = ScalarField(grid, xr[..., 1] * emp.values)
    else:
        report["r_source"] = "none"
    inv = InvariantSet(q1, q2, p, p, r1, r2, provenance="flatweb")

    candidates = _printed_candidates(spec, grid, psi)
    s = sigma(inv, C)
    cand_report = []
    parallel = solve_parallel(s, base) if solve else None
    for label, w in candidates:
        entry = {"label": label, "residual": parallel_residual(s, w).max_abs(m)}
        if parallel is not None:
            entry["span_residual"] = parallel.span_residual(w)
        cand_report.append(entry)
    report["candidates"] = cand_report
    if parallel is not None:
        report["parallel"] = parallel.to_dict()
    return FlatWeb(spec, C, inv, psi, liou, candidates, report, parallel)
