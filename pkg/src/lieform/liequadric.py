"""Linear algebra of R^{4,2}: the Lie quadric, Legendre elements, G and its Lie algebra.

Coordinates are (x0, ..., x5) with the pairing

    <X, Y> = -(x0 y5 + x5 y0) - (x1 y4 + x4 y1) + x2 y2 + x3 y3.

Matrices act on column vectors; a frame ``A`` has columns ``A_J`` and its
Maurer-Cartan form satisfies ``dA_J = sum_I alpha[I, J] A_I``, i.e. entry
``[I, J]`` holds the component with upper index ``I`` and lower index ``J``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: the metric, single source of truth for every pairing
G = np.zeros((6, 6))
G[0, 5] = G[5, 0] = -1.0
G[1, 4] = G[4, 1] = -1.0
G[2, 2] = G[3, 3] = 1.0

#: index partner of each basis vector under the pairing, and the sign of that pairing
PARTNER = np.array([5, 4, 2, 3, 1, 0])
PAIR_SIGN = np.array([-1.0, -1.0, 1.0, 1.0, -1.0, -1.0])

DEFAULT_TOL = 1e-9


class LieQuadricError(ValueError):
    """Raised for degenerate or ill-formed Lie-sphere data."""


def basis(j: int) -> np.ndarray:
    """The standard basis vector epsilon_j."""
    e = np.zeros(6)
    e[j] = 1.0
    return e


def inner(x, y):
    """The (4,2) pairing; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.einsum("...i,ij,...j->...", x, G, y)


def g_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a group element via the metric relation (g^{-1} A^T g).

    Works on stacks of matrices (``...x6x6``).  For matrices outside G this
    is not an inverse; callers check :func:`group_residual` when it matters.
    """
    a = np.asarray(a, dtype=float)
    return G @ np.swapaxes(a, -1, -2) @ G


def group_residual(a) -> float:
    """max |A^T g A - g| (zero exactly on O(4,2))."""
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(np.swapaxes(a, -1, -2) @ G @ a - G)))


def algebra_residual(b) -> float:
    """max |B^T g + g B| (zero exactly on the Lie algebra)."""
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(np.swapaxes(b, -1, -2) @ G + G @ b)))


def mirror(i: int, j: int) -> tuple[tuple[int, int], float]:
    """Algebra symmetry: ``B[PARTNER[i], j] = s * B[PARTNER[j], i]``.

    Returns ``((PARTNER[j], i), s)`` so that the entry ``(PARTNER[i], j)``
    of an algebra element equals ``s`` times the returned entry.
    """
    return (int(PARTNER[j]), i), float(-PAIR_SIGN[i] * PAIR_SIGN[j])


def complete_algebra(entries: dict, zero=0.0) -> dict:
    """Fill a sparse set of entries to a full algebra element.

    ``entries`` maps ``(I, J)`` to values supporting negation (floats,
    arrays, field objects).  Each given entry determines its mirror
    ``B[PARTNER[J], PARTNER[I]]``; entries forced by nothing are ``zero``.
    Conflicting input raises :class:`LieQuadricError` when values are numeric.
    """
    full = dict(entries)
    for (i, j), val in entries.items():
        a = int(PARTNER[i])
        dst = (int(PARTNER[j]), a)
        s = -PAIR_SIGN[a] * PAIR_SIGN[j]
        mirrored = val if s > 0 else -val
        if dst in full:
            other = full[dst]
            if isinstance(other, (int, float, np.ndarray)) and not np.allclose(other, mirrored):
                raise LieQuadricError(f"entries {(i, j)} and {dst} violate the algebra relation")
            continue
        full[dst] = mirrored
    for i in range(6):
        for j in range(6):
            full.setdefault((i, j), zero)
    return full


def to_algebra(b: np.ndarray) -> np.ndarray:
    """Project a matrix onto the Lie algebra (the g-antisymmetric part)."""
    b = np.asarray(b, dtype=float)
    return 0.5 * (b - G @ np.swapaxes(b, -1, -2) @ G)


def expm_series(b: np.ndarray, tol: float = 1e-17, max_terms: int = 200) -> np.ndarray:
    """Matrix exponential by a scaled and squared truncated Taylor series."""
    b = np.asarray(b, dtype=float)
    norm = np.max(np.sum(np.abs(b), axis=1))
    k = max(0, int(np.ceil(np.log2(norm))) + 1) if norm > 0.5 else 0
    x = b / 2.0**k
    out = np.eye(6)
    term = np.eye(6)
    for n in range(1, max_terms):
        term = term @ x / n
        out = out + term
        if np.max(np.abs(term)) < tol:
            break
    for _ in range(k):
        out = out @ out
    return out


@dataclass(frozen=True)
class LegendreElement:
    """An isotropic 2-plane [F0 ^ F1] given by a spanning pair."""

    f0: np.ndarray
    f1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "f0", np.asarray(self.f0, dtype=float))
        object.__setattr__(self, "f1", np.asarray(self.f1, dtype=float))

    def matrix(self) -> np.ndarray:
        return np.stack([self.f0, self.f1])

    def isotropy_residual(self) -> float:
        """Largest of |<F0,F0>|, |<F0,F1>|, |<F1,F1>| relative to the entry scale."""
        scale = max(np.max(np.abs(self.f0)), np.max(np.abs(self.f1)), 1.0) ** 2
        vals = (inner(self.f0, self.f0), inner(self.f0, self.f1), inner(self.f1, self.f1))
        return float(max(abs(x) for x in vals) / scale)

    def rank(self, tol: float = DEFAULT_TOL) -> int:
        s = np.linalg.svd(self.matrix(), compute_uv=False)
        return int(np.sum(s > tol * max(s[0], 1e-300)))

    def validate(self, tol: float = DEFAULT_TOL) -> "LegendreElement":
        if self.rank(tol) < 2:
            raise LieQuadricError("Legendre element has rank < 2")
        if self.isotropy_residual() > tol:
            raise LieQuadricError(f"plane is not isotropic (residual {self.isotropy_residual():.3e})")
        return self


def lambda_chart(y) -> LegendreElement:
    """Affine chart of the Legendre elements centred at [eps0 ^ eps1].

    ``y`` holds five coordinates (y1, ..., y5).
    """
    y1, y2, y3, y4, y5 = (float(t) for t in y)
    x0 = np.array([1.0, 0.0, y1, y2, y3, 0.5 * (y1 * y1 + y2 * y2)])
    x1 = np.array([0.0, 1.0, y4, y5, 0.5 * (y4 * y4 + y5 * y5), y1 * y4 + y2 * y5 - y3])
    return LegendreElement(x0, x1)


def chart_coordinates(x0, x1) -> np.ndarray:
    """Inverse of :func:`lambda_chart` for planes in the chart domain.

    Works on stacks (``x0``, ``x1`` of shape ``(..., 6)``); raises when the
    leading 2x2 block of the spanning pair is singular (plane outside the chart).
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    y = np.stack([x0, x1], axis=-1)  # (..., 6, 2)
    top = y[..., :2, :]
    det = top[..., 0, 0] * top[..., 1, 1] - top[..., 0, 1] * top[..., 1, 0]
    scale = np.max(np.abs(y), axis=(-2, -1))
    if np.any(np.abs(det) <= 1e-12 * scale**2):
        raise LieQuadricError("plane lies outside the chart domain")
    z = y @ np.linalg.inv(top)
    z0, z1 = z[..., 0], z[..., 1]
    return np.stack([z0[..., 2], z0[..., 3], z0[..., 4], z1[..., 2], z1[..., 3]], axis=-1)


def _projector(p: LegendreElement, tol: float) -> np.ndarray:
    m = p.matrix()
    u, s, _ = np.linalg.svd(m.T, full_matrices=False)
    if s[-1] <= tol * max(s[0], 1e-300):
        raise LieQuadricError("degenerate Legendre element (rank < 2)")
    return u @ u.T


def plane_equal(p: LegendreElement, q: LegendreElement, tol: float = DEFAULT_TOL) -> bool:
    """True iff the two pairs span the same 2-plane (Euclidean projectors agree)."""
    return bool(np.max(np.abs(_projector(p, tol) - _projector(q, tol))) < tol)


def isotropy_completion(f0, f1) -> np.ndarray:
    """A group element A with A eps0 = f0 and A eps1 = f1 and det A > 0.

    ``f0``, ``f1`` must span an isotropic plane.  The partner columns A5, A4
    are seeded with g f0, g f1 and corrected inside the hyperbolic pairs; the
    two spacelike columns come from Gram-Schmidt on the standard basis.
    """
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    c5, c4 = G @ f0, G @ f1
    m = np.array([[inner(c5, f0), inner(c4, f0)], [inner(c5, f1), inner(c4, f1)]])
    t = np.linalg.solve(m, -np.eye(2))
    a5 = c5 * t[0, 0] + c4 * t[1, 0]
    a4 = c5 * t[0, 1] + c4 * t[1, 1]
    # null and mutually orthogonal, without touching the pairings with f0, f1
    a5 = a5 + 0.5 * inner(a5, a5) * f0
    a4 = a4 + 0.5 * inner(a4, a4) * f1
    a5 = a5 + inner(a5, a4) * f1
    comp: list[np.ndarray] = []
    for cand in range(6):
        x = basis(cand)
        x = x + inner(x, a5) * f0 + inner(x, f0) * a5 + inner(x, a4) * f1 + inner(x, f1) * a4
        for vec in comp:
            x = x - inner(x, vec) * vec
        nrm = inner(x, x)
        if nrm > 1e-8:
            comp.append(x / np.sqrt(nrm))
        if len(comp) == 2:
            break
    if len(comp) < 2:
        raise LieQuadricError("could not complete the Legendre element to a frame")
    frame = np.column_stack([f0, f1, comp[0], comp[1], a4, a5])
    if np.linalg.det(frame) < 0:
        frame[:, 2] = -frame[:, 2]
    return frame
