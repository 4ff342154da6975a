"""Pointwise type classification of difference operators.

The coefficient matrix of a stencil at a point x has entries

    A[k, l] = sum_i  shift_i[k] * shift_i[l] * coeff_i(x),

a symmetric matrix whose definiteness class labels the operator: definite is
elliptic, indefinite is hyperbolic, semidefinite (a near-zero eigenvalue and
no sign conflict) is parabolic.  The overall h^(-p) scale of the stencil is a
positive factor and is ignored.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import expr as ex
from .grid import GridSpec
from .stencil import Stencil

__all__ = [
    "CoefficientMatrix",
    "ClassificationReport",
    "DEFAULT_TOL",
    "coefficient_matrix",
    "eigen_symmetric",
    "classify_at",
    "classify_region",
]

DEFAULT_TOL = 1e-9

LABELS = ("elliptic", "hyperbolic", "parabolic")


@dataclass(frozen=True)
class CoefficientMatrix:
    """Symmetric coefficient matrix of a stencil evaluated at one point."""

    dim: int
    entries: np.ndarray
    point: tuple[float, ...]

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.shape != (self.dim, self.dim):
            raise ValueError(f"entries must be {self.dim}x{self.dim}, got {arr.shape}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))


@dataclass(frozen=True)
class ClassificationReport:
    """Per-point eigenvalues and labels over a probe region."""

    points: np.ndarray  # (m, dim)
    eigenvalues: np.ndarray  # (m, dim), ascending per row
    labels: tuple[str, ...]
    tol: float
    counts: dict[str, int]


def coefficient_matrix(s: Stencil, x: Sequence[float]) -> CoefficientMatrix:
    """Assemble the symmetric coefficient matrix of ``s`` at the point ``x``."""
    point = tuple(float(v) for v in x)
    if len(point) != s.dim:
        raise ValueError(f"point has dimension {len(point)}, stencil has {s.dim}")
    coeffs = [ex.evaluate(t.coeff, point) for t in s.terms]
    n = s.dim
    entries = np.zeros((n, n))
    for k in range(n):
        for l in range(k, n):
            a = math.fsum(t.shift[k] * t.shift[l] * g for t, g in zip(s.terms, coeffs))
            entries[k, l] = a
            entries[l, k] = a
    return CoefficientMatrix(n, entries, point)


def eigen_symmetric(matrix: Union[CoefficientMatrix, np.ndarray]) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.

    Converges quadratically; the sweep loop stops once the off-diagonal mass
    drops below 1e-15 of the Frobenius norm, comfortably inside 1e-12
    relative accuracy.
    """
    a = matrix.entries if isinstance(matrix, CoefficientMatrix) else matrix
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    if n == 1:
        return a[0, :1].copy()
    scale = float(np.sqrt((a * a).sum()))
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(50):
        off = float(np.sqrt(2.0 * (np.tril(a, -1) ** 2).sum()))
        if off <= 1e-15 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                rot_p = c * a[:, p] - sn * a[:, q]
                rot_q = sn * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - sn * a[q, :]
                rot_q = sn * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
    return np.sort(np.diag(a))


def _label(eig: np.ndarray, tol: float) -> str:
    lam_scale = max(1.0, float(np.abs(eig).max()))
    threshold = tol * lam_scale
    positive = eig > threshold
    negative = eig < -threshold
    if positive.all() or negative.all():
        return "elliptic"
    if positive.any() and negative.any():
        return "hyperbolic"
    return "parabolic"


def classify_at(s: Stencil, x: Sequence[float], tol: float = DEFAULT_TOL) -> str:
    """Label the operator at one point: elliptic, hyperbolic, or parabolic."""
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    return _label(eigen_symmetric(coefficient_matrix(s, x)), tol)


def classify_region(s: Stencil, probe: GridSpec, tol: float = DEFAULT_TOL) -> ClassificationReport:
    """Classify at every node of a probe grid (pointwise sampling)."""
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if probe.dim != s.dim:
        raise ValueError(f"probe dimension {probe.dim} does not match stencil {s.dim}")
    meshes = probe.meshes()
    points = np.stack([m.reshape(-1) for m in meshes], axis=1)
    m = points.shape[0]
    n = s.dim
    # Vectorized coefficient evaluation per term, then the rank-1 accumulation.
    coords = [points[:, a] for a in range(n)]
    entries = np.zeros((m, n, n))
    for t in s.terms:
        c = t.constant
        if c is not None:
            gamma = np.full(m, c)
        else:
            gamma = ex.evaluate_arrays(t.coeff, coords)
            finite = np.isfinite(gamma)
            if not finite.all():
                bad = int(np.argmin(finite))
                point = tuple(points[bad])
                try:
                    ex.evaluate(t.coeff, point)
                    cause = "non-finite result"
                except ex.ExprEvalError as exc:
                    cause = str(exc)
                raise ex.ExprEvalError(f"coefficient evaluation failed: {cause}", point)
        rho = np.asarray(t.shift, dtype=float)
        entries += gamma[:, None, None] * np.outer(rho, rho)[None, :, :]
    eigenvalues = np.empty((m, n))
    labels = []
    for k in range(m):
        eig = eigen_symmetric(entries[k])
        eigenvalues[k] = eig
        labels.append(_label(eig, tol))
    counts = dict(Counter(labels))
    return ClassificationReport(points, eigenvalues, tuple(labels), tol, counts)
