"""Grid-sampled fields: scalars, 1-forms, matrix-valued 1-forms, and RK4 transport.

A field is sampled on a uniform rectangular grid with array index ``[i, j]``
for the node ``(u0 + i*hu, v0 + j*hv)`` (row-major in ``u``).  Fields may also
carry an analytic evaluator ``fn(u, v)``; arithmetic keeps evaluators alive when
every operand has one, which lets transport use exact mid-segment values.

Derivatives are second-order finite differences: central in the interior,
one-sided at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class GridError(ValueError):
    """Invalid grid or mismatched grids."""


class SingularCoframeError(ValueError):
    """The coframe's wedge coefficient vanishes somewhere."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [u0, u1] x [v0, v1] with nu x nv nodes."""

    u0: float
    u1: float
    v0: float
    v1: float
    nu: int
    nv: int

    def __post_init__(self):
        if self.nu < 5 or self.nv < 5:
            raise GridError(f"grid needs at least 5 nodes per axis (got {self.nu}x{self.nv})")
        if not (self.u1 > self.u0 and self.v1 > self.v0):
            raise GridError("grid bounds must satisfy u1 > u0 and v1 > v0")

    @classmethod
    def square(cls, lo: float, hi: float, n: int) -> "Grid":
        return cls(lo, hi, lo, hi, n, n)

    @property
    def hu(self) -> float:
        return (self.u1 - self.u0) / (self.nu - 1)

    @property
    def hv(self) -> float:
        return (self.v1 - self.v0) / (self.nv - 1)

    @property
    def h(self) -> float:
        return max(self.hu, self.hv)

    @property
    def u(self) -> np.ndarray:
        return np.linspace(self.u0, self.u1, self.nu)

    @property
    def v(self) -> np.ndarray:
        return np.linspace(self.v0, self.v1, self.nv)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nu, self.nv)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.u, self.v, indexing="ij")

    def node(self, i: int, j: int) -> tuple[float, float]:
        return (self.u0 + i * self.hu, self.v0 + j * self.hv)

    def refined(self) -> "Grid":
        """Same domain with the spacing halved."""
        return Grid(self.u0, self.u1, self.v0, self.v1, 2 * self.nu - 1, 2 * self.nv - 1)

    def interior(self, margin: int = 1) -> tuple[slice, slice]:
        return (slice(margin, self.nu - margin), slice(margin, self.nv - margin))

    def to_dict(self) -> dict:
        return {"u0": self.u0, "u1": self.u1, "v0": self.v0, "v1": self.v1, "nu": self.nu, "nv": self.nv}


def check_same_grid(*grids: Grid) -> Grid:
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridError(f"grid mismatch: {first} vs {g}")
    return first


def diff_u(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.gradient(values, grid.hu, axis=0, edge_order=2)


def diff_v(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.gradient(values, grid.hv, axis=1, edge_order=2)


def cubic_midpoints(values: np.ndarray, axis: int) -> np.ndarray:
    """Values halfway between consecutive samples along ``axis`` (4-point cubic)."""
    f = np.moveaxis(values, axis, 0)
    n = f.shape[0]
    if n < 4:
        raise GridError("cubic midpoints need at least 4 samples")
    mid = np.empty((n - 1,) + f.shape[1:])
    mid[1:-1] = (-f[:-3] + 9.0 * f[1:-2] + 9.0 * f[2:-1] - f[3:]) / 16.0
    mid[0] = (5.0 * f[0] + 15.0 * f[1] - 5.0 * f[2] + f[3]) / 16.0
    mid[-1] = (f[-4] - 5.0 * f[-3] + 15.0 * f[-2] + 5.0 * f[-1]) / 16.0
    return np.moveaxis(mid, 0, axis)


def _lift(x, grid: Grid) -> "ScalarField":
    if isinstance(x, ScalarField):
        check_same_grid(x.grid, grid)
        return x
    return ScalarField.constant(grid, float(x))


class ScalarField:
    """A function sampled on a grid, with an optional analytic evaluator."""

    __array_priority__ = 1000

    def __init__(self, grid: Grid, values, fn: Optional[Evaluator] = None):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridError(f"field shape {values.shape} does not match grid {grid.shape}")
        self.grid = grid
        self.values = values
        self.fn = fn

    @classmethod
    def from_fn(cls, grid: Grid, fn: Evaluator) -> "ScalarField":
        uu, vv = grid.mesh()
        return cls(grid, fn(uu, vv), fn)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        c = float(c)
        return cls(grid, np.full(grid.shape, c), lambda u, v: np.full(np.broadcast(u, v).shape, c))

    @classmethod
    def sampled(cls, grid: Grid, values) -> "ScalarField":
        return cls(grid, values, None)

    # -- evaluation and derivatives -----------------------------------------
    def at(self, u, v) -> np.ndarray:
        if self.fn is None:
            raise ValueError("field has no analytic evaluator")
        return self.fn(np.asarray(u, float), np.asarray(v, float))

    @property
    def analytic(self) -> bool:
        return self.fn is not None

    def du(self) -> "ScalarField":
        return ScalarField(self.grid, diff_u(self.values, self.grid))

    def dv(self) -> "ScalarField":
        return ScalarField(self.grid, diff_v(self.values, self.grid))

    def d(self) -> "OneForm":
        return OneForm(self.du(), self.dv())

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        fn = None if self.fn is None else (lambda u, v, f=self.fn: func(f(u, v)))
        return ScalarField(self.grid, func(self.values), fn)

    def drop_evaluator(self) -> "ScalarField":
        return ScalarField(self.grid, self.values)

    def max_abs(self, margin: int = 0) -> float:
        return float(np.max(np.abs(self.values[self.grid.interior(margin)] if margin else self.values)))

    def summary(self) -> dict:
        return {"min": float(np.min(self.values)), "max": float(np.max(self.values)),
                "mean": float(np.mean(self.values))}

    # -- arithmetic ------------------------------------------------------------
    def _binop(self, other, op):
        if isinstance(other, OneForm):
            return NotImplemented
        o = _lift(other, self.grid)
        fn = None
        if self.fn is not None and o.fn is not None:
            f1, f2 = self.fn, o.fn
            fn = lambda u, v: op(f1(u, v), f2(u, v))  # noqa: E731
        return ScalarField(self.grid, op(self.values, o.values), fn)

    def __add__(self, other):
        return self._binop(other, np.add)

    def __radd__(self, other):
        return _lift(other, self.grid)._binop(self, np.add)

    def __sub__(self, other):
        return self._binop(other, np.subtract)

    def __rsub__(self, other):
        return _lift(other, self.grid)._binop(self, np.subtract)

    def __mul__(self, other):
        if isinstance(other, OneForm):
            return other.scale(self)
        return self._binop(other, np.multiply)

    def __rmul__(self, other):
        return _lift(other, self.grid)._binop(self, np.multiply)

    def __truediv__(self, other):
        return self._binop(other, np.divide)

    def __rtruediv__(self, other):
        return _lift(other, self.grid)._binop(self, np.divide)

    def __neg__(self):
        return self.map(np.negative)

    def __pow__(self, k: float):
        return self.map(lambda x: np.power(x, k))

    def __repr__(self):
        s = self.summary()
        return f"ScalarField(min={s['min']:.4g}, max={s['max']:.4g}, analytic={self.analytic})"


class OneForm:
    """The 1-form P du + Q dv."""

    def __init__(self, P: ScalarField, Q: ScalarField):
        check_same_grid(P.grid, Q.grid)
        self.P = P
        self.Q = Q

    @property
    def grid(self) -> Grid:
        return self.P.grid

    @classmethod
    def zero(cls, grid: Grid) -> "OneForm":
        z = ScalarField.constant(grid, 0.0)
        return cls(z, z)

    @classmethod
    def du(cls, grid: Grid) -> "OneForm":
        return cls(ScalarField.constant(grid, 1.0), ScalarField.constant(grid, 0.0))

    @classmethod
    def dv(cls, grid: Grid) -> "OneForm":
        return cls(ScalarField.constant(grid, 0.0), ScalarField.constant(grid, 1.0))

    def __call__(self, xu, xv) -> ScalarField:
        """Evaluate on the tangent vector xu d/du + xv d/dv."""
        return self.P * xu + self.Q * xv

    def scale(self, f) -> "OneForm":
        return OneForm(self.P * f, self.Q * f)

    def __add__(self, other: "OneForm") -> "OneForm":
        return OneForm(self.P + other.P, self.Q + other.Q)

    def __sub__(self, other: "OneForm") -> "OneForm":
        return OneForm(self.P - other.P, self.Q - other.Q)

    def __neg__(self) -> "OneForm":
        return OneForm(-self.P, -self.Q)

    def __mul__(self, f) -> "OneForm":
        return self.scale(f)

    __rmul__ = __mul__

    def max_abs(self, margin: int = 0) -> float:
        return max(self.P.max_abs(margin), self.Q.max_abs(margin))

    def __repr__(self):
        return f"OneForm(P={self.P!r}, Q={self.Q!r})"


def wedge(a: OneForm, b: OneForm) -> ScalarField:
    """du^dv coefficient of a ^ b."""
    return a.P * b.Q - a.Q * b.P


def exterior_d(w: OneForm) -> ScalarField:
    """du^dv coefficient of dw, i.e. Q_u - P_v."""
    return ScalarField(w.grid, diff_u(w.Q.values, w.grid) - diff_v(w.P.values, w.grid))


def combine(terms, grid: Grid, alpha1: OneForm, alpha2: OneForm) -> OneForm:
    """The 1-form a*alpha1 + b*alpha2 for a coefficient pair (a, b) of fields or numbers."""
    a, b = terms
    out = OneForm.zero(grid)
    if not (isinstance(a, (int, float)) and a == 0):
        out = out + alpha1 * a
    if not (isinstance(b, (int, float)) and b == 0):
        out = out + alpha2 * b
    return out


class MatrixForm:
    """A matrix-valued 1-form M = P du + Q dv with P, Q of shape (nu, nv, n, n)."""

    def __init__(self, grid: Grid, P: np.ndarray, Q: np.ndarray,
                 fn: Optional[Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]] = None):
        self.grid = grid
        self.P = np.asarray(P, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        self.fn = fn
        if self.P.shape[:2] != grid.shape or self.P.shape != self.Q.shape:
            raise GridError("matrix form arrays do not match the grid")

    @property
    def n(self) -> int:
        return self.P.shape[-1]

    @classmethod
    def from_entries(cls, grid: Grid, n: int, entries: dict) -> "MatrixForm":
        """Build from ``{(i, j): OneForm}``; missing entries are zero."""
        P = np.zeros(grid.shape + (n, n))
        Q = np.zeros(grid.shape + (n, n))
        analytic = True
        items = []
        for (i, j), w in entries.items():
            if isinstance(w, (int, float)):
                if w != 0:
                    raise ValueError("scalar entries must be zero")
                continue
            P[..., i, j] = w.P.values
            Q[..., i, j] = w.Q.values
            items.append(((i, j), w.P.fn, w.Q.fn))
            analytic = analytic and w.P.fn is not None and w.Q.fn is not None
        fn = None
        if analytic:
            def fn(u, v, items=items, n=n):
                shape = np.broadcast(u, v).shape
                p = np.zeros(shape + (n, n))
                q = np.zeros(shape + (n, n))
                for (i, j), fp, fq in items:
                    p[..., i, j] = fp(u, v)
                    q[..., i, j] = fq(u, v)
                return p, q
        return cls(grid, P, Q, fn)

    def entry(self, i: int, j: int) -> OneForm:
        return OneForm(ScalarField(self.grid, self.P[..., i, j]), ScalarField(self.grid, self.Q[..., i, j]))

    def __add__(self, other: "MatrixForm") -> "MatrixForm":
        fn = None
        if self.fn is not None and other.fn is not None:
            f1, f2 = self.fn, other.fn

            def fn(u, v):
                a, b = f1(u, v)
                c, d = f2(u, v)
                return a + c, b + d
        return MatrixForm(self.grid, self.P + other.P, self.Q + other.Q, fn)

    def __neg__(self) -> "MatrixForm":
        fn = None
        if self.fn is not None:
            f = self.fn
            fn = lambda u, v: tuple(-x for x in f(u, v))  # noqa: E731
        return MatrixForm(self.grid, -self.P, -self.Q, fn)

    def __sub__(self, other: "MatrixForm") -> "MatrixForm":
        return self + (-other)

    def d(self) -> np.ndarray:
        """du^dv coefficient of dM."""
        return diff_u(self.Q, self.grid) - diff_v(self.P, self.grid)

    def structure(self) -> np.ndarray:
        """du^dv coefficient of dM + M ^ M."""
        return self.d() + self.P @ self.Q - self.Q @ self.P

    def conjugate(self, a: np.ndarray, a_inv: np.ndarray) -> "MatrixForm":
        """Pointwise A M A^{-1} (arrays of shape (nu, nv, n, n))."""
        return MatrixForm(self.grid, a @ self.P @ a_inv, a @ self.Q @ a_inv)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.P)), np.max(np.abs(self.Q))))


def wedge_bracket(a: MatrixForm, b: MatrixForm) -> np.ndarray:
    """du^dv coefficient of a ^ b + b ^ a."""
    return a.P @ b.Q - a.Q @ b.P + b.P @ a.Q - b.Q @ a.P


# -- transport ----------------------------------------------------------------


@dataclass
class _Segments:
    """Coefficient samples along every grid segment for RK4 sub-steps.

    ``u[k]`` holds the du-coefficient at the fractional position ``k/(2s)`` of
    each u-segment (shape (2s+1, nu-1, nv, n, n)); ``v`` likewise for v-segments.
    """

    u: np.ndarray
    v: np.ndarray
    substeps: int
    analytic: bool = field(default=False)


def _segments(mform: MatrixForm, substeps: int) -> _Segments:
    grid = mform.grid
    if mform.fn is None:
        su = np.stack([mform.P[:-1], cubic_midpoints(mform.P, 0), mform.P[1:]])
        sv = np.stack([mform.Q[:, :-1], cubic_midpoints(mform.Q, 1), mform.Q[:, 1:]])
        return _Segments(su, sv, 1, False)
    s = max(1, int(substeps))
    uu, vv = grid.mesh()
    fr = np.arange(2 * s + 1) / (2 * s)
    su = np.stack([mform.fn(uu[:-1] + t * grid.hu, vv[:-1])[0] for t in fr])
    sv = np.stack([mform.fn(uu[:, :-1], vv[:, :-1] + t * grid.hv)[1] for t in fr])
    return _Segments(su, sv, s, True)


def _rk4_segment(x, samples, h, forward: bool, rhs):
    """Advance ``x`` across one segment; ``samples`` has shape (2s+1, k, n, n)."""
    s = (samples.shape[0] - 1) // 2
    dt = h / s if forward else -h / s
    order = range(s) if forward else range(s - 1, -1, -1)
    for k in order:
        m0 = samples[2 * k] if forward else samples[2 * k + 2]
        mm = samples[2 * k + 1]
        m1 = samples[2 * k + 2] if forward else samples[2 * k]
        k1 = rhs(x, m0)
        k2 = rhs(x + 0.5 * dt * k1, mm)
        k3 = rhs(x + 0.5 * dt * k2, mm)
        k4 = rhs(x + dt * k3, m1)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def _right(x, m):
    return x @ m


def _left_neg(x, m):
    return -(m @ x)


def transport(mform: MatrixForm, x0: np.ndarray, base: tuple[int, int] = (0, 0),
              order: str = "row", kind: str = "frame", substeps: int = 1) -> np.ndarray:
    """Integrate a matrix ODE driven by ``mform`` over the whole grid.

    ``kind="frame"`` solves dX = X M (frames, dA = A alpha); ``kind="section"``
    solves dX = -M X (fundamental solutions of dw + sigma w = 0).  ``order``
    is ``"row"`` (base row along u first, then every column along v) or
    ``"col"`` (the transposed path).  Returns an array (nu, nv, n, m).
    """
    grid = mform.grid
    rhs = _right if kind == "frame" else _left_neg
    seg = _segments(mform, substeps)
    x0 = np.asarray(x0, dtype=float)
    out = np.empty(grid.shape + x0.shape)
    i0, j0 = base
    if order not in ("row", "col"):
        raise ValueError("order must be 'row' or 'col'")
    # first leg: along u at j0 (row) or along v at i0 (col)
    if order == "row":
        out[i0, j0] = x0
        for i in range(i0, grid.nu - 1):
            out[i + 1, j0] = _rk4_segment(out[i, j0][None], seg.u[:, i, j0][:, None], grid.hu, True, rhs)[0]
        for i in range(i0, 0, -1):
            out[i - 1, j0] = _rk4_segment(out[i, j0][None], seg.u[:, i - 1, j0][:, None], grid.hu, False, rhs)[0]
        for j in range(j0, grid.nv - 1):
            out[:, j + 1] = _rk4_segment(out[:, j], seg.v[:, :, j], grid.hv, True, rhs)
        for j in range(j0, 0, -1):
            out[:, j - 1] = _rk4_segment(out[:, j], seg.v[:, :, j - 1], grid.hv, False, rhs)
    else:
        out[i0, j0] = x0
        for j in range(j0, grid.nv - 1):
            out[i0, j + 1] = _rk4_segment(out[i0, j][None], seg.v[:, i0, j][:, None], grid.hv, True, rhs)[0]
        for j in range(j0, 0, -1):
            out[i0, j - 1] = _rk4_segment(out[i0, j][None], seg.v[:, i0, j - 1][:, None], grid.hv, False, rhs)[0]
        for i in range(i0, grid.nu - 1):
            out[i + 1] = _rk4_segment(out[i], seg.u[:, i], grid.hu, True, rhs)
        for i in range(i0, 0, -1):
            out[i - 1] = _rk4_segment(out[i], seg.u[:, i - 1], grid.hu, False, rhs)
    return out
