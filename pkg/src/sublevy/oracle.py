"""Reference solutions: spectral semigroups for constant coefficients and
closed-form worst-case heat values for two-sigma quadratic data.

The spectral route treats grid data as one period of a periodic signal, so it
is only trustworthy for fields that are effectively zero near the box edge
(or genuinely periodic, e.g. commensurate cosines).
"""

from __future__ import annotations

import numpy as np

from .grids import Field, Grid
from .levy import LevyTriplet, symbol_values

__all__ = ["OracleError", "fft_semigroup", "gheat_closed_form"]


class OracleError(ValueError):
    pass


def _grid_frequencies(grid: Grid) -> np.ndarray:
    """Smallest-magnitude frequency representatives, shape (n^d, d)."""
    ax = 2.0 * np.pi * np.fft.fftfreq(grid.points, d=grid.dx)
    if grid.dim == 1:
        return ax[:, None]
    fx, fy = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([fx.ravel(), fy.ravel()], axis=1)


def fft_semigroup(triplet: LevyTriplet, field: Field, time: float,
                  residue_tol: float = 1e-8) -> tuple[Field, float]:
    """Evolve `field` for `time` under the constant-coefficient semigroup.

    Multiplies the discrete transform by exp(-time * psi(xi_k)) at the grid
    frequencies and inverts.  Returns (evolved field, imaginary residue).
    The residue must stay below residue_tol * sup|f|; a violation means the
    data wraps around the periodic box (domain too small / horizon too long).
    """
    if time < 0:
        raise OracleError("time must be nonnegative")
    grid = field.grid
    vals = np.asarray(field.values, dtype=float)
    if time == 0.0:
        return field.copy_with(vals.copy()), 0.0

    xi = _grid_frequencies(grid)
    psi = symbol_values(triplet, xi).reshape(grid.shape)
    mult = np.exp(-time * psi)
    if grid.dim == 1:
        out = np.fft.ifft(np.fft.fft(vals) * mult)
    else:
        out = np.fft.ifft2(np.fft.fft2(vals) * mult)
    residue = float(np.max(np.abs(out.imag)))
    scale = float(np.max(np.abs(vals)))
    if scale > 0 and residue >= residue_tol * scale:
        raise OracleError(
            f"imaginary residue {residue:.3e} exceeds {residue_tol:.1e}*sup|f|;"
            " data is aliasing across the periodic box (enlarge the domain or"
            " shorten the horizon)")
    return field.copy_with(out.real.copy()), residue


def gheat_closed_form(kind: str, sigma_min: float, sigma_max: float,
                      t: float, x) -> np.ndarray | float:
    """Worst-case heat value for quadratic data under sigma in {min, max}.

    The diffusion coefficient stores the full matrix (Q = sigma^2), so the
    generator on x^2 is (1/2) * sigma^2 * 2 = sigma^2:
      convex-quadratic  f(x) = |x|^2  ->  |x|^2 + sigma_max^2 * t
      concave-quadratic f(x) = -|x|^2 -> -|x|^2 - sigma_min^2 * t
    """
    if not (0 < sigma_min <= sigma_max):
        raise OracleError("need 0 < sigma_min <= sigma_max")
    if t < 0:
        raise OracleError("time must be nonnegative")
    xq = np.sum(np.square(np.atleast_1d(np.asarray(x, dtype=float))), axis=-1) \
        if np.ndim(x) > 1 else np.square(np.asarray(x, dtype=float))
    if kind == "convex-quadratic":
        out = xq + sigma_max ** 2 * t
    elif kind == "concave-quadratic":
        out = -xq - sigma_min ** 2 * t
    else:
        raise OracleError(f"unsupported kind {kind!r}")
    return float(out) if np.ndim(out) == 0 else out
