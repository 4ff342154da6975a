"""Dirichlet solvers, fundamental-solution potentials, and harmonicity validators.

Boundary-value problems use the centered second-difference operator

    sum_a [u(x + h e_a) - 2 u(x) + u(x - h e_a)]

with a red-black SOR iteration (relaxation factor from the model-problem
optimum for the box).  The forward-shifted operator remains available through
the stencil module for verification of the difference equations themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .expr import CoeffExpr
from .grid import GridFunction, GridSpec, Margins, _normalize_margins, sample, shrink
from .stencil import laplace_stencil

__all__ = [
    "FundamentalSolution",
    "SolveReport",
    "HarnackVerdict",
    "sphere_area",
    "newtonian_potential",
    "solve_laplace_dirichlet",
    "solve_poisson_dirichlet",
    "solve_biharmonic",
    "mean_value_check",
    "max_principle_check",
    "harnack_limit",
    "harmonicity_residual",
]


def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere in ``dim`` dimensions: 2 pi^(n/2) / Gamma(n/2)."""
    if dim < 2:
        raise ValueError(f"sphere area needs dimension >= 2, got {dim}")
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


@dataclass(frozen=True)
class FundamentalSolution:
    """Free-space kernel whose Laplacian is the unit point source.

    Logarithmic in the plane, ``-|x|^(2-n) / ((n-2) s_n)`` for n >= 3 with
    ``s_n`` the unit sphere area.
    """

    dim: int
    unit_sphere_area: float = 0.0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"fundamental solutions need dimension >= 2, got {self.dim}")
        object.__setattr__(self, "unit_sphere_area", sphere_area(self.dim))

    def radial(self, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Kernel value at distance ``r > 0`` from the source."""
        if self.dim == 2:
            return np.log(r) / (2.0 * math.pi)
        return -(r ** (2.0 - self.dim)) / ((self.dim - 2.0) * self.unit_sphere_area)

    def evaluate(self, x: Sequence[float]) -> float:
        point = tuple(float(v) for v in x)
        if len(point) != self.dim:
            raise ValueError(f"point must have dimension {self.dim}")
        # fsum is exactly rounded, so the value is invariant under coordinate
        # permutations and sign flips, not merely close.
        r = math.sqrt(math.fsum(v * v for v in point))
        if r == 0.0:
            raise ValueError(
                "fundamental solution is singular at the origin; use cell_average"
            )
        return float(self.radial(r))

    def cell_average(self, h: float, subdivisions: int = 8) -> float:
        """Average over the h-cell centered at the singularity, by midpoint subcells."""
        if subdivisions < 2:
            raise ValueError("cell averaging needs at least 2 subdivisions per axis")
        offsets = -h / 2.0 + (np.arange(subdivisions) + 0.5) * (h / subdivisions)
        meshes = np.meshgrid(*([offsets] * self.dim), indexing="ij")
        r = np.sqrt(sum(m * m for m in meshes))
        return float(np.mean(self.radial(r)))


def newtonian_potential(
    fs: FundamentalSolution,
    source: GridFunction,
    targets: GridSpec,
    singular_subdivisions: int = 8,
) -> GridFunction:
    """Volume potential of a compactly supported source, by direct lattice summation.

    ``u(x) = h^n * sum_y K(x - y) f(y)`` where the self cell (target on a
    source node) contributes the cell average of the kernel instead of the
    singular point value.  The source must vanish on its grid boundary layer.
    """
    n = fs.dim
    if source.spec.dim != n or targets.dim != n:
        raise ValueError("source and target dimensions must match the kernel dimension")
    boundary = _boundary_mask(source.spec.extents)
    if np.any(source.values[boundary] != 0.0):
        bad = np.argwhere(boundary & (source.values != 0.0))[0]
        raise ValueError(
            f"source is not compactly supported: nonzero boundary value at node "
            f"{tuple(int(i) for i in bad)}"
        )
    h = source.spec.h
    src_meshes = source.spec.meshes()
    keep = source.values != 0.0
    src_points = np.stack([m[keep] for m in src_meshes], axis=1)
    weights = source.values[keep]
    tgt_meshes = targets.meshes()
    tgt_points = np.stack([m.reshape(-1) for m in tgt_meshes], axis=1)
    out = np.zeros(tgt_points.shape[0])
    if src_points.shape[0] > 0:
        self_value = fs.cell_average(h, singular_subdivisions)
        near_sq = (1e-9 * h) ** 2
        chunk = max(1, int(4_000_000 // max(1, src_points.shape[0])))
        for start in range(0, tgt_points.shape[0], chunk):
            block = tgt_points[start : start + chunk]
            diff = block[:, 0, None] - src_points[None, :, 0]
            d2 = diff * diff
            for a in range(1, n):
                diff = block[:, a, None] - src_points[None, :, a]
                d2 += diff * diff
            near = d2 <= near_sq
            with np.errstate(divide="ignore"):
                if n == 2:
                    # log(r) = log(r^2) / 2, skipping the sqrt pass
                    vals = np.log(d2)
                    vals *= 1.0 / (4.0 * math.pi)
                else:
                    vals = d2 ** ((2.0 - n) / 2.0)
                    vals *= -1.0 / ((n - 2.0) * fs.unit_sphere_area)
            vals[near] = self_value
            out[start : start + chunk] = h**n * (vals @ weights)
    return GridFunction(targets, out.reshape(targets.extents))


@dataclass(frozen=True)
class SolveReport:
    """Result of an iterative solve.

    ``final_residual`` is the max-norm residual of the discrete operator the
    solver targets; for the biharmonic splitting it is the residual of the
    composed fourth-order operator while ``converged`` refers to the stage
    tolerances.
    """

    solution: GridFunction
    iterations: int
    final_residual: float
    converged: bool
    stage_residuals: tuple[float, ...] | None = None


def _boundary_mask(extents: Sequence[int]) -> np.ndarray:
    mask = np.zeros(tuple(extents), dtype=bool)
    for a in range(len(extents)):
        edge = [slice(None)] * len(extents)
        edge[a] = 0
        mask[tuple(edge)] = True
        edge[a] = extents[a] - 1
        mask[tuple(edge)] = True
    return mask


def _neighbor_sum(u: np.ndarray) -> np.ndarray:
    n = u.ndim
    s = np.zeros(tuple(e - 2 for e in u.shape))
    for a in range(n):
        up = [slice(1, -1)] * n
        dn = [slice(1, -1)] * n
        up[a] = slice(2, None)
        dn[a] = slice(None, -2)
        s += u[tuple(up)] + u[tuple(dn)]
    return s


def _sor_dirichlet(
    boundary: GridFunction,
    rhs_values: np.ndarray | None,
    tol: float,
    max_iter: int,
    residual_scale: float,
) -> SolveReport:
    """Red-black SOR for the centered operator with Dirichlet data.

    The boundary ring of ``boundary`` is held fixed; its interior is the
    initial guess.  The relaxation factor is the model-problem optimum
    ``2 / (1 + sin(pi h / L))`` with L the longest box side.
    """
    spec = boundary.spec
    n = spec.dim
    if any(e < 3 for e in spec.extents):
        raise ValueError("solver needs at least 3 nodes per axis")
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    h = spec.h
    u = boundary.values.copy()
    interior = tuple(slice(1, -1) for _ in range(n))
    b_int = (
        np.zeros(tuple(e - 2 for e in spec.extents))
        if rhs_values is None
        else (h * h) * rhs_values[interior]
    )
    parity = np.indices(tuple(e - 2 for e in spec.extents)).sum(axis=0) % 2
    colors = (parity == 0, parity == 1)
    length = max((e - 1) * h for e in spec.extents)
    omega = 2.0 / (1.0 + math.sin(math.pi * h / length))
    two_n = 2.0 * n

    iterations = 0
    best = math.inf
    for iterations in range(1, max_iter + 1):
        for color in colors:
            target = (_neighbor_sum(u) - b_int) / two_n
            ui = u[interior]
            ui[color] = (1.0 - omega) * ui[color] + omega * target[color]
        res = _neighbor_sum(u) - two_n * u[interior] - b_int
        best = float(np.abs(res).max()) * residual_scale
        if best <= tol:
            break
    return SolveReport(
        solution=GridFunction(spec, u),
        iterations=iterations,
        final_residual=best,
        converged=best <= tol,
    )


def solve_laplace_dirichlet(
    boundary: GridFunction, tol: float = 1e-10, max_iter: int = 100_000
) -> SolveReport:
    """Solve the centered discrete Laplace equation with the given Dirichlet ring.

    The residual is the max norm of the unscaled centered sum over the
    interior.  Non-convergence is reported, not raised.
    """
    return _sor_dirichlet(boundary, None, tol, max_iter, 1.0)


def solve_poisson_dirichlet(
    f: GridFunction, boundary: GridFunction, tol: float = 1e-10, max_iter: int = 100_000
) -> SolveReport:
    """Solve the centered discrete Poisson equation; residual against the h^(-2) operator."""
    if f.spec != boundary.spec:
        raise ValueError("right-hand side and boundary data must share one grid")
    h = boundary.spec.h
    return _sor_dirichlet(boundary, f.values, tol, max_iter, 1.0 / (h * h))


def _centered_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Scaled centered second-difference sum on the interior (shrinks by one)."""
    n = values.ndim
    interior = tuple(slice(1, -1) for _ in range(n))
    return (_neighbor_sum(values) - 2.0 * n * values[interior]) / (h * h)


def solve_biharmonic(
    rhs: GridFunction,
    boundary: GridFunction,
    laplacian_boundary: GridFunction,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> SolveReport:
    """Solve the fourth-order problem by splitting into two Poisson solves.

    First the Laplacian surrogate v with boundary ``laplacian_boundary`` and
    right-hand side ``rhs``, then u with boundary ``boundary`` and right-hand
    side v.  ``final_residual`` is the composed centered fourth-order residual
    on the doubly shrunk interior; ``converged`` means both stages met ``tol``.
    """
    spec = boundary.spec
    if rhs.spec != spec or laplacian_boundary.spec != spec:
        raise ValueError("rhs and both boundary grids must share one grid")
    if any(e < 5 for e in spec.extents):
        raise ValueError("biharmonic splitting needs at least 5 nodes per axis")
    stage1 = solve_poisson_dirichlet(rhs, laplacian_boundary, tol, max_iter)
    stage2 = solve_poisson_dirichlet(stage1.solution, boundary, tol, max_iter)
    h = spec.h
    composed = _centered_laplacian(_centered_laplacian(stage2.solution.values, h), h)
    inner2 = tuple(slice(2, -2) for _ in range(spec.dim))
    residual = float(np.abs(composed - rhs.values[inner2]).max())
    return SolveReport(
        solution=stage2.solution,
        iterations=stage1.iterations + stage2.iterations,
        final_residual=residual,
        converged=stage1.converged and stage2.converged,
        stage_residuals=(stage1.final_residual, stage2.final_residual),
    )


def _interpolate(u: GridFunction, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at arbitrary in-hull points, shape (m, dim)."""
    spec = u.spec
    n = spec.dim
    if any(e < 2 for e in spec.extents):
        raise ValueError("interpolation needs at least 2 nodes per axis")
    t = (points - np.asarray(spec.origin)) / spec.h
    upper = np.asarray(spec.extents) - 1
    if np.any(t < -1e-9) or np.any(t > upper + 1e-9):
        bad = points[np.argmax(np.any((t < -1e-9) | (t > upper + 1e-9), axis=1))]
        raise ValueError(f"point {tuple(bad)} is outside the grid")
    base = np.clip(np.floor(t).astype(int), 0, upper - 1)
    frac = t - base
    out = np.zeros(points.shape[0])
    for corner in np.ndindex(*([2] * n)):
        weight = np.ones(points.shape[0])
        for a in range(n):
            weight *= frac[:, a] if corner[a] else 1.0 - frac[:, a]
        idx = tuple(base[:, a] + corner[a] for a in range(n))
        out += weight * u.values[idx]
    return out


def _sphere_directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        angles = 2.0 * math.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if dim == 3:
        # Fibonacci lattice: near-uniform coverage without randomness.
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        golden = math.pi * (3.0 - math.sqrt(5.0))
        phi = golden * k
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(12345)
    vecs = rng.standard_normal((count, dim))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def mean_value_check(
    u: GridFunction, center: Sequence[float], radius: float, num_points: int = 64
) -> float:
    """Deviation between the center value and the sphere average at ``radius``.

    Sphere samples are interpolated multilinearly; for discretely harmonic
    data the deviation is bounded by the interpolation error.
    """
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if num_points < 1:
        raise ValueError("need at least one sphere point")
    center_arr = np.asarray(center, dtype=float).reshape(1, -1)
    if center_arr.shape[1] != u.spec.dim:
        raise ValueError("center dimension does not match the grid")
    directions = _sphere_directions(u.spec.dim, num_points)
    points = center_arr + radius * directions
    try:
        sphere_vals = _interpolate(u, points)
        center_val = _interpolate(u, center_arr)[0]
    except ValueError as exc:
        raise ValueError(f"sphere of radius {radius} exits the grid: {exc}") from None
    return float(abs(center_val - sphere_vals.mean()))


def max_principle_check(
    u: GridFunction, tol: float = 0.0
) -> tuple[bool, tuple[int, ...] | None]:
    """Check that both extrema are attained on the boundary ring (ties allowed).

    Returns ``(True, None)`` or ``(False, witness_node)`` with the witness an
    interior node whose value escapes the boundary range by more than ``tol``.
    """
    extents = u.spec.extents
    if any(e < 3 for e in extents):
        raise ValueError("max principle check needs a nonempty interior")
    boundary = _boundary_mask(extents)
    bvals = u.values[boundary]
    bmax = float(bvals.max())
    bmin = float(bvals.min())
    interior = tuple(slice(1, -1) for _ in extents)
    ivals = u.values[interior]
    if ivals.max() > bmax + tol:
        witness = np.unravel_index(int(np.argmax(ivals)), ivals.shape)
        return False, tuple(int(i) + 1 for i in witness)
    if ivals.min() < bmin - tol:
        witness = np.unravel_index(int(np.argmin(ivals)), ivals.shape)
        return False, tuple(int(i) + 1 for i in witness)
    return True, None


@dataclass(frozen=True)
class HarnackVerdict:
    """Outcome of the monotone-sequence limit check.

    ``finite_limit`` carries the margin-shrunk limit grid and its forward
    difference harmonicity residual; ``violation`` carries a witness
    ``(step, node)`` where monotonicity fails.
    """

    outcome: str  # finite_limit | divergent | violation
    deviations: tuple[float, ...]
    limit: GridFunction | None = None
    limit_residual: float | None = None
    witness: tuple | None = None


def harnack_limit(
    seq: Sequence[GridFunction], compact_margin: Margins, tol: float
) -> HarnackVerdict:
    """Classify a pointwise monotone sequence of grids on a compact sub-box.

    Monotonicity ``u_k <= u_{k+1}`` is required everywhere (else a violation
    with witness).  On the margin-shrunk sub-box the sequence is a finite
    limit when the last successive max-norm deviation falls below ``tol``,
    and divergent when the minimum of the last grid exceeds ``1/tol``; a
    monotone sequence still moving at ``tol`` but below the threshold is also
    reported divergent (not settled).
    """
    grids = list(seq)
    if len(grids) < 3:
        raise ValueError(f"need at least 3 grids, got {len(grids)}")
    spec = grids[0].spec
    if any(g.spec != spec for g in grids[1:]):
        raise ValueError("all grids must share one spec")
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    pairs = _normalize_margins(compact_margin, spec.dim)
    window = tuple(slice(lo, e - hi) for (lo, hi), e in zip(pairs, spec.extents))
    for k in range(len(grids) - 1):
        diff = grids[k + 1].values - grids[k].values
        if np.any(diff < 0.0):
            witness = np.unravel_index(int(np.argmin(diff)), diff.shape)
            return HarnackVerdict(
                outcome="violation",
                deviations=(),
                witness=(k, tuple(int(i) for i in witness)),
            )
    deviations = tuple(
        float(np.abs(grids[k + 1].values[window] - grids[k].values[window]).max())
        for k in range(len(grids) - 1)
    )
    last = grids[-1].values[window]
    if float(last.min()) > 1.0 / tol:
        return HarnackVerdict(outcome="divergent", deviations=deviations)
    if deviations[-1] <= tol:
        limit = shrink(grids[-1], compact_margin)
        residual = None
        if all(e >= 3 for e in limit.spec.extents):
            applied = laplace_stencil(spec.dim, spec.h).apply(limit)
            residual = float(np.abs(applied.values).max())
        return HarnackVerdict(
            outcome="finite_limit",
            deviations=deviations,
            limit=limit,
            limit_residual=residual,
        )
    return HarnackVerdict(outcome="divergent", deviations=deviations)


def harmonicity_residual(
    expression: Union[CoeffExpr, str],
    origin: Sequence[float],
    lengths: Sequence[float],
    h_list: Sequence[float],
) -> tuple[list[tuple[float, float]], float | None]:
    """Sup-residual of the forward difference Laplace operator per spacing.

    Samples the expression on boxes ``origin + [0, length]`` per axis at each
    spacing, applies the unscaled forward operator, and fits the observed
    order (slope of log residual vs log h).  Returns ``(pairs, order)`` with
    ``order`` None when the residuals sit at roundoff (discretely exact).
    """
    origin = tuple(float(v) for v in origin)
    lengths = tuple(float(v) for v in lengths)
    if len(lengths) != len(origin):
        raise ValueError("origin and lengths must have one entry per axis")
    if not h_list:
        raise ValueError("h_list must not be empty")
    dim = len(origin)
    pairs: list[tuple[float, float]] = []
    floors: list[float] = []
    for h in h_list:
        extents = tuple(int(round(length / h)) + 1 for length in lengths)
        spec = GridSpec(origin, h, extents)
        u = sample(expression, spec)
        applied = laplace_stencil(dim, h).apply(u)
        res = float(np.abs(applied.values).max())
        pairs.append((float(h), res))
        floors.append(1e-13 * max(1.0, float(np.abs(u.values).max())))
    meaningful = [(h, r) for (h, r), fl in zip(pairs, floors) if r > fl]
    order: float | None = None
    if len(meaningful) >= 2:
        logs_h = np.log([h for h, _ in meaningful])
        logs_r = np.log([r for _, r in meaningful])
        order = float(np.polyfit(logs_h, logs_r, 1)[0])
    return pairs, order
