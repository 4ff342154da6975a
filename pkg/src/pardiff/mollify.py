"""Smoothing kernels with compact support and discrete convolution.

The kernel family is built from the bump profile ``exp(-1/(1-s))`` composed
with the squared radius, normalized to unit integral and scaled to support
radius eps.  Kernels are sampled on the same lattice pitch as the grid they
will smooth, so convolution is a plain lattice sum with no interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .grid import GridFunction, GridSpec, norm, restrict, shrink

__all__ = [
    "MollifierKernel",
    "MollifierError",
    "bump",
    "make_mollifier",
    "convolve",
    "l1_convergence",
    "derivative_commute",
]


class MollifierError(ValueError):
    """Raised when a kernel cannot be constructed or applied as requested."""


def bump(s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """The compactly supported profile: ``exp(-1/(1-s))`` for s < 1, else 0."""
    scalar = np.ndim(s) == 0
    arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.zeros_like(arr)
    mask = arr < 1.0
    with np.errstate(under="ignore", over="ignore", divide="ignore"):
        out[mask] = np.exp(-1.0 / (1.0 - arr[mask]))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class MollifierKernel:
    """A sampled, normalized smoothing kernel with support radius ``eps``.

    ``samples`` covers [-eps, eps]^dim on a lattice of pitch ``spacing``
    centered at the origin.  ``mass`` is the discrete integral (1 after
    normalization); ``normalization`` is the integral of the unscaled profile
    over the unit box, used during construction.
    """

    dim: int
    eps: float
    spacing: float
    samples: GridFunction
    mass: float
    normalization: float
    raw_mass: float

    @property
    def radius_cells(self) -> int:
        """Nodes from the center to the support edge along one axis."""
        return (self.samples.spec.extents[0] - 1) // 2


def _profile_box_integral(dim: int, panels: int) -> float:
    """Midpoint tensor quadrature of bump(|x|^2) over [-1, 1]^dim."""
    t = -1.0 + (np.arange(panels) + 0.5) * (2.0 / panels)
    sq = t * t
    if dim == 1:
        total = float(bump(sq).sum())
    else:
        base_iter = np.ndindex(*((panels,) * (dim - 2)))
        plane = sq[:, None] + sq[None, :]
        total = 0.0
        for idx in base_iter:
            offset = sum(sq[i] for i in idx)
            total += float(bump(plane + offset).sum())
    return total * (2.0 / panels) ** dim


def make_mollifier(dim: int, eps: float, spacing: float, refine: int = 8) -> MollifierKernel:
    """Build a kernel of support radius ``eps`` sampled at pitch ``spacing``.

    ``refine`` is the number of quadrature subsamples per lattice cell used
    for the normalization integral.  The discrete mass is renormalized to
    exactly 1; a pre-normalization mass off by more than 10% means the lattice
    under-resolves the kernel and is an error, as is ``eps < spacing``.
    """
    if dim < 1:
        raise ValueError(f"dimension must be at least 1, got {dim}")
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValueError(f"support radius must be positive, got {eps}")
    if not (spacing > 0.0 and math.isfinite(spacing)):
        raise ValueError(f"spacing must be positive, got {spacing}")
    if refine < 1:
        raise ValueError(f"refine must be at least 1, got {refine}")
    if eps < spacing:
        raise MollifierError(
            f"support radius {eps} is below the lattice pitch {spacing}: "
            "the kernel would be sub-resolved"
        )
    panels = int(math.ceil(2.0 * eps * refine / spacing - 1e-12))
    normalization = _profile_box_integral(dim, panels)

    r = int(math.ceil(eps / spacing - 1e-12))
    axis = np.arange(-r, r + 1) * spacing
    meshes = np.meshgrid(*([axis] * dim), indexing="ij")
    s2 = sum((m / eps) ** 2 for m in meshes)
    values = bump(s2) / (normalization * eps**dim)

    raw_mass = float(spacing**dim * values.sum())
    if abs(raw_mass - 1.0) > 0.1:
        raise MollifierError(
            f"kernel resolution too coarse: discrete mass {raw_mass:.6f} "
            "deviates from 1 by more than 10% before normalization"
        )
    values = values / raw_mass
    mass = float(spacing**dim * values.sum())
    spec = GridSpec((-r * spacing,) * dim, spacing, (2 * r + 1,) * dim)
    return MollifierKernel(
        dim=dim,
        eps=float(eps),
        spacing=float(spacing),
        samples=GridFunction(spec, values),
        mass=mass,
        normalization=normalization,
        raw_mass=raw_mass,
    )


def _lattice_convolve(f_values: np.ndarray, kernel: np.ndarray, weight: float) -> np.ndarray:
    """Valid-region convolution sum ``out[m] = weight * sum_j k[j] f[m + K-1 - j]``."""
    out_shape = tuple(fs - ks + 1 for fs, ks in zip(f_values.shape, kernel.shape))
    if any(e < 1 for e in out_shape):
        raise MollifierError("empty valid region: the grid does not contain the kernel support")
    out = np.zeros(out_shape)
    for idx in np.ndindex(kernel.shape):
        c = kernel[idx]
        if c == 0.0:
            continue
        window = tuple(
            slice(ks - 1 - i, ks - 1 - i + e)
            for i, ks, e in zip(idx, kernel.shape, out_shape)
        )
        out += c * f_values[window]
    out *= weight
    return out


def convolve(f: GridFunction, kernel: MollifierKernel) -> GridFunction:
    """Smooth ``f`` by the kernel on the interior shrunk by the kernel radius.

    The value at node z is ``h^dim * sum_x f(x) k(z - x)``; the kernel pitch
    must equal the grid spacing.
    """
    spec = f.spec
    if spec.dim != kernel.dim:
        raise ValueError(f"kernel dimension {kernel.dim} does not match grid {spec.dim}")
    if not math.isclose(spec.h, kernel.spacing, rel_tol=1e-12):
        raise MollifierError(
            f"kernel pitch {kernel.spacing} does not match grid spacing {spec.h}"
        )
    h = spec.h
    out = _lattice_convolve(f.values, kernel.samples.values, h**spec.dim)
    r = kernel.radius_cells
    out_spec = spec.shrunk([r] * spec.dim, [r] * spec.dim)
    return GridFunction(out_spec, out)


def l1_convergence(
    f: GridFunction, eps_list: Sequence[float], refine: int = 8
) -> tuple[list[float], bool]:
    """Discrete L1 distances between ``f`` and its smoothings, per support radius.

    ``eps_list`` must be descending and positive.  Errors are measured on the
    common interior (that of the widest kernel).  Returns the error sequence
    and whether it is non-increasing within 5% slack.
    """
    radii = [float(e) for e in eps_list]
    if not radii:
        raise ValueError("eps_list must not be empty")
    if any(e <= 0.0 for e in radii):
        raise ValueError(f"support radii must be positive, got {radii}")
    if any(a <= b for a, b in zip(radii, radii[1:])):
        raise ValueError(f"eps_list must be strictly descending, got {radii}")
    kernels = [make_mollifier(f.spec.dim, e, f.spec.h, refine) for e in radii]
    smoothed = [convolve(f, k) for k in kernels]
    common = smoothed[0].spec  # widest kernel shrinks the most
    f_common = restrict(f, common)
    errors = []
    for s in smoothed:
        diff = restrict(s, common).values - f_common.values
        errors.append(float(f.spec.h ** f.spec.dim * np.abs(diff).sum()))
    non_increasing = all(b <= a * 1.05 for a, b in zip(errors, errors[1:]))
    return errors, non_increasing


def derivative_commute(f: GridFunction, kernel: MollifierKernel, axis: int) -> float:
    """Max deviation between differencing after and before smoothing.

    Compares the centered difference along the 1-based ``axis`` of the
    smoothed grid against convolution with the centered-differenced kernel.
    The two are rearrangements of the same finite double sum, so the
    deviation is pure roundoff.
    """
    dim = f.spec.dim
    if not 1 <= axis <= dim:
        raise ValueError(f"axis {axis} out of range for dimension {dim}")
    a = axis - 1
    h = f.spec.h
    smoothed = convolve(f, kernel)
    if smoothed.spec.extents[a] < 3:
        raise MollifierError("insufficient margin for the centered difference")
    up = [slice(None)] * dim
    dn = [slice(None)] * dim
    up[a] = slice(2, None)
    dn[a] = slice(None, -2)
    side_a = (smoothed.values[tuple(up)] - smoothed.values[tuple(dn)]) / (2.0 * h)

    kv = kernel.samples.values
    pad = [(0, 0)] * dim
    pad[a] = (2, 2)
    kp = np.pad(kv, pad)
    hi = [slice(None)] * dim
    lo = [slice(None)] * dim
    hi[a] = slice(2, None)
    lo[a] = slice(None, -2)
    dk = (kp[tuple(hi)] - kp[tuple(lo)]) / (2.0 * h)

    side_b = _lattice_convolve(f.values, dk, h**dim)
    if side_a.shape != side_b.shape:
        raise MollifierError("insufficient margin for the centered difference")
    return float(np.abs(side_a - side_b).max())
