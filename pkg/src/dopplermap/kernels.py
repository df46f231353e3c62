"""2D field kernels: outgoing cylindrical waves and their evanescent tails.

The building block is the order-0 Hankel function of the first kind,
matching the exp(-i omega t) time convention: arguments with positive
squared 2D wavenumber radiate, negative ones decay exponentially via the
continuation H0^(1)(i x) = -(2i/pi) K0(x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, KernelCollarSignal


def hankel0_h1(x):
    """H0^(1)(x) = J0(x) + i Y0(x) for strictly positive real x."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise DomainError("hankel0_h1 requires x > 0")
    result = special.hankel1(0, x_arr)
    if np.ndim(x) == 0:
        return complex(result)
    return result


def evanescent_kernel(kappa, r2):
    """H0^(1) continued to imaginary argument: -(2i/pi) K0(kappa r2).

    Monotonically decaying in kappa * r2; underflows to 0 for arguments
    beyond ~700, long after any quadrature truncation cut.
    """
    arg = np.asarray(kappa, dtype=float) * np.asarray(r2, dtype=float)
    if np.any(arg <= 0):
        raise DomainError("evanescent_kernel requires kappa > 0 and r2 > 0")
    result = -2j / np.pi * special.k0(arg)
    if np.ndim(arg) == 0:
        return complex(result)
    return result


@dataclass(frozen=True)
class Kernel2D:
    """Cross-sectional (y-z) field solution selector.

    "free_field" is a single outgoing cylindrical wave; "half_plane" adds
    the image of the source mirrored about the fully reflecting plane
    z = z_plane.
    """

    kind: str = "free_field"
    z_plane: float | None = None

    def __post_init__(self):
        if self.kind not in ("free_field", "half_plane"):
            raise DomainError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "half_plane" and self.z_plane is None:
            raise DomainError("half_plane kernel needs z_plane")

    def radii(self, source_yz, receiver_yz) -> tuple[float, ...]:
        """Cross-plane distances of the direct (and mirrored) source."""
        ys, zs = source_yz
        yr, zr = receiver_yz
        r_direct = float(np.hypot(yr - ys, zr - zs))
        if self.kind == "free_field":
            return (r_direct,)
        z_img = 2.0 * self.z_plane - zs
        return (r_direct, float(np.hypot(yr - ys, zr - z_img)))

    def describe(self) -> dict:
        return {"kind": self.kind, "z_plane": self.z_plane}


def _single_radius_field(r2: float, k2_squared: np.ndarray) -> np.ndarray:
    values = np.empty(k2_squared.shape, dtype=complex)
    prop = k2_squared > 0
    if np.any(prop):
        values[prop] = special.hankel1(0, r2 * np.sqrt(k2_squared[prop]))
    if np.any(~prop):
        values[~prop] = -2j / np.pi * special.k0(r2 * np.sqrt(-k2_squared[~prop]))
    return 0.25j * values


def q2d(kernel: Kernel2D, source_yz, receiver_yz, k2_squared, collar_eps_sq: float | None = None):
    """Cross-sectional field at the receiver for squared 2D wavenumber(s).

    Positive k2_squared uses the propagating branch (i/4) H0^(1)(r2 k2),
    negative values the exponentially decaying continuation.  Values inside
    the singular collar raise :class:`KernelCollarSignal` so the quadrature
    engine can clamp them; this is a control signal, not a failure.
    """
    k2sq = np.atleast_1d(np.asarray(k2_squared, dtype=float))
    if collar_eps_sq is not None and np.any(np.abs(k2sq) < collar_eps_sq):
        offending = k2sq[np.abs(k2sq) < collar_eps_sq]
        raise KernelCollarSignal(float(offending[0]))
    if np.any(k2sq == 0):
        raise KernelCollarSignal(0.0)
    radii = kernel.radii(source_yz, receiver_yz)
    if min(radii) <= 0:
        raise DomainError("source and receiver coincide in the y-z plane")
    total = _single_radius_field(radii[0], k2sq)
    for r2 in radii[1:]:
        total = total + _single_radius_field(r2, k2sq)
    if np.ndim(k2_squared) == 0:
        return complex(total[0])
    return total
