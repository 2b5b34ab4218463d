"""Levy triplets under coefficient uncertainty and their state-space symbols.

A model is a finite family of coefficient fields alpha -> (b, Q, nu) sharing
one truncation convention.  This module owns the measure representations
(finite atoms, ray-wise power-law tails, custom densities), the symbol

    q(xi) = -i b.xi + xi.Q xi / 2 + integral (1 - e^{i y.xi} + i xi.h(y)) nu(dy),

its diagnostics (mass, sup bounds over balls, tightness and decay profiles)
and the pushforward of a triplet under a state-dependent linear map, which is
how SDE-style coefficient fields are built.

Conventions: vectors are measured in the Euclidean norm, matrices in the
spectral norm.  The truncation h(y) = y 1_{|y| <= cutoff} is sharp and the
boundary is inclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .quadrature import QuadConfig, QuadratureError, refined

__all__ = [
    "TruncationSpec", "Atoms", "StableRay", "StableLike", "Density",
    "LevyTriplet", "CoefficientField", "UncertaintySet", "EffectiveTriplet",
    "symbol_eval", "symbol_values", "levy_mass", "bound_M_r",
    "symbol_sup_bound", "symbol_decay_check", "tightness_report",
    "TightnessReport", "sde_pushforward", "effective_triplet", "ball_probes",
    "truncation_bound_constant", "ValidationError",
]

_SYM_TOL = 1e-10
_EIG_TOL = 1e-10


class ValidationError(ValueError):
    """A triplet or uncertainty set failed its construction checks."""


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationSpec:
    """Sharp truncation h(y) = y for |y| <= cutoff, else 0 (boundary in)."""

    cutoff: float = 1.0

    def __post_init__(self):
        if not (self.cutoff > 0.0 and math.isfinite(self.cutoff)):
            raise ValidationError(f"cutoff must be positive and finite, got {self.cutoff}")

    def h(self, y: np.ndarray) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        keep = np.linalg.norm(y, axis=-1) <= self.cutoff
        return y * keep[..., None]


def _stable_one_minus_exp_plus_is(s: np.ndarray) -> np.ndarray:
    """1 - e^{is} + is for real s, without cancellation near s = 0."""
    s = np.asarray(s, dtype=float)
    real = 2.0 * np.sin(s / 2.0) ** 2
    s2 = s * s
    series = s * s2 / 6.0 * (1.0 - s2 / 20.0 * (1.0 - s2 / 42.0))
    imag = np.where(np.abs(s) < 0.5, series, s - np.sin(s))
    return real + 1j * imag


# ---------------------------------------------------------------------------
# jump measures
# ---------------------------------------------------------------------------

class LevyMeasure:
    """Base interface; every integral uses |y| as radial variable."""

    dim: int

    # subclasses implement the primitive radial integrals below
    def min_one_y2_mass(self) -> float:
        raise NotImplementedError

    def tail_mass(self, radius: float) -> float:
        """nu({|y| > radius})."""
        raise NotImplementedError

    def small_second_moment(self, radius: float) -> float:
        """integral of |y|^2 over 0 < |y| <= radius."""
        raise NotImplementedError

    def second_moment_matrix(self, radius: float) -> np.ndarray:
        """integral of y y^T over 0 < |y| < radius (strict, the scheme's small side)."""
        raise NotImplementedError

    def compensator(self, lo: float, hi: float) -> np.ndarray:
        """integral of y over lo <= |y| <= hi (both ends inclusive)."""
        raise NotImplementedError

    def rate_above(self, eps: float) -> float:
        """nu({|y| >= eps})."""
        raise NotImplementedError

    def discretize(self, eps: float, quad: QuadConfig, panels_per_decade: int = 48
                   ) -> tuple[np.ndarray, np.ndarray]:
        """Finite atom approximation of nu restricted to |y| >= eps."""
        raise NotImplementedError

    def symbol_jump(self, xi: np.ndarray, trunc: TruncationSpec, eps: float,
                    quad: QuadConfig) -> np.ndarray:
        """integral of (1 - e^{iy.xi} + i xi.h(y)) nu(dy), batched over xi rows."""
        raise NotImplementedError

    def pushforward(self, sigma: np.ndarray) -> "LevyMeasure":
        """Image measure under y -> sigma y with mass mapped to 0 removed."""
        raise NotImplementedError

    def pushforward_drift_gap(self, sigma: np.ndarray, trunc: TruncationSpec,
                              hat_trunc: TruncationSpec, quad: QuadConfig) -> np.ndarray:
        """integral of (sigma h(y) - h_hat(sigma y)) nu(dy)."""
        raise NotImplementedError

    @property
    def is_empty(self) -> bool:
        return False


def _as_locations(locations, dim: int | None) -> np.ndarray:
    arr = np.asarray(locations, dtype=float)
    if arr.size == 0:
        return np.zeros((0, dim or 1))
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


@dataclass(frozen=True, eq=False)
class Atoms(LevyMeasure):
    """Finite atomic measure sum_j masses[j] * delta_{locations[j]}."""

    locations: np.ndarray   # (m, d)
    masses: np.ndarray      # (m,)
    dim_hint: int = 1

    def __post_init__(self):
        locs = _as_locations(self.locations, self.dim_hint)
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if locs.shape[0] != masses.shape[0]:
            raise ValidationError("locations and masses disagree in length")
        if masses.size and np.any(masses <= 0):
            raise ValidationError("atom masses must be positive")
        radii = np.linalg.norm(locs, axis=1) if locs.size else np.zeros(0)
        if locs.size and np.any(radii == 0.0):
            raise ValidationError("atoms must avoid the origin")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "_radii", radii)
        object.__setattr__(self, "dim_hint", locs.shape[1] if locs.size else self.dim_hint)

    @classmethod
    def of(cls, *pairs: tuple, dim: int | None = None) -> "Atoms":
        """Atoms.of((y, mass), ...) with scalar or vector y."""
        if not pairs:
            return cls(np.zeros((0, dim or 1)), np.zeros(0), dim_hint=dim or 1)
        locs = [np.atleast_1d(np.asarray(p[0], dtype=float)) for p in pairs]
        return cls(np.stack(locs), np.asarray([p[1] for p in pairs], dtype=float))

    @classmethod
    def empty(cls, dim: int = 1) -> "Atoms":
        return cls(np.zeros((0, dim)), np.zeros(0), dim_hint=dim)

    @property
    def dim(self) -> int:
        return self.dim_hint

    @property
    def is_empty(self) -> bool:
        return self.masses.size == 0

    def min_one_y2_mass(self) -> float:
        r = self._radii
        return float(np.sum(self.masses * np.minimum(1.0, r * r)))

    def tail_mass(self, radius: float) -> float:
        return float(np.sum(self.masses[self._radii > radius]))

    def small_second_moment(self, radius: float) -> float:
        sel = self._radii <= radius
        return float(np.sum(self.masses[sel] * self._radii[sel] ** 2))

    def second_moment_matrix(self, radius: float) -> np.ndarray:
        sel = self._radii < radius
        locs = self.locations[sel]
        return np.einsum("j,ja,jb->ab", self.masses[sel], locs, locs) if locs.size \
            else np.zeros((self.dim, self.dim))

    def compensator(self, lo: float, hi: float) -> np.ndarray:
        sel = (self._radii >= lo) & (self._radii <= hi)
        return self.masses[sel] @ self.locations[sel] if np.any(sel) else np.zeros(self.dim)

    def rate_above(self, eps: float) -> float:
        return float(np.sum(self.masses[self._radii >= eps]))

    def discretize(self, eps, quad, panels_per_decade=48):
        sel = self._radii >= eps
        return self.locations[sel], self.masses[sel]

    def symbol_jump(self, xi, trunc, eps, quad):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.is_empty:
            return np.zeros(xi.shape[0], dtype=complex)
        phase = xi @ self.locations.T                      # (k, m)
        truncated = self._radii <= trunc.cutoff
        vals = np.where(truncated[None, :],
                        _stable_one_minus_exp_plus_is(phase),
                        1.0 - np.exp(1j * phase))
        return vals @ self.masses

    def pushforward(self, sigma):
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        new = self.locations @ sigma.T
        keep = np.linalg.norm(new, axis=1) > 0.0
        return Atoms(new[keep], self.masses[keep], dim_hint=sigma.shape[0])

    def pushforward_drift_gap(self, sigma, trunc, hat_trunc, quad):
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        h_base = self.locations * (self._radii <= trunc.cutoff)[:, None]
        mapped = self.locations @ sigma.T
        h_hat = mapped * (np.linalg.norm(mapped, axis=1) <= hat_trunc.cutoff)[:, None]
        gap = h_base @ sigma.T - h_hat
        return self.masses @ gap if self.masses.size else np.zeros(sigma.shape[0])


@dataclass(frozen=True)
class StableRay:
    """One ray of a power-law measure: weight * r^{-1-index} e^{-tempering r} dr."""

    direction: tuple
    weight: float
    tempering: float = 0.0


@dataclass(frozen=True, eq=False)
class StableLike(LevyMeasure):
    """Stable-like measure supported on finitely many rays (d <= 2).

    Closed forms are used when a ray is untempered; tempered rays fall back to
    the shared adaptive quadrature.  The representation is closed under linear
    pushforward: a map rescales each ray's weight by |sigma e|^index and its
    tempering by 1/|sigma e|.
    """

    index: float
    rays: tuple

    def __post_init__(self):
        if not (0.0 < self.index < 2.0):
            raise ValidationError(f"stability index must lie in (0, 2), got {self.index}")
        if not self.rays:
            raise ValidationError("StableLike needs at least one ray")
        norm_rays = []
        for ray in self.rays:
            e = np.asarray(ray.direction, dtype=float).reshape(-1)
            n = np.linalg.norm(e)
            if n == 0.0 or ray.weight <= 0.0 or ray.tempering < 0.0:
                raise ValidationError("ray needs a nonzero direction, positive weight, "
                                      "nonnegative tempering")
            norm_rays.append(StableRay(tuple(e / n), float(ray.weight), float(ray.tempering)))
        if len({len(r.direction) for r in norm_rays}) != 1:
            raise ValidationError("rays disagree in dimension")
        if len(norm_rays[0].direction) > 2:
            raise ValidationError("StableLike supports d <= 2")
        object.__setattr__(self, "rays", tuple(norm_rays))

    @classmethod
    def symmetric(cls, index: float, scale: float = 1.0, tempering: float = 0.0) -> "StableLike":
        """Two-sided d=1 measure scale * |y|^{-1-index} e^{-tempering |y|} dy."""
        return cls(index, (StableRay((1.0,), scale, tempering),
                           StableRay((-1.0,), scale, tempering)))

    @property
    def dim(self) -> int:
        return len(self.rays[0].direction)

    # radial primitive: integral of r^{power} * r^{-1-index} e^{-tempering r}
    def _radial(self, ray: StableRay, power: float, lo: float, hi: float,
                quad: QuadConfig) -> float:
        a = self.index
        if hi <= lo:
            return 0.0
        if ray.tempering == 0.0:
            p = power - a
            if not math.isinf(hi):
                if abs(p) < 1e-14:
                    return ray.weight * math.log(hi / lo)
                return ray.weight * (hi ** p - lo ** p) / p
            if p >= 0.0:
                raise ValidationError("divergent radial integral")
            return ray.weight * (-(lo ** p) / p)
        # tempered: quadrature in log radius with decay-aware truncation
        if math.isinf(hi):
            hi = max(lo * 2.0, quad.tail_decay / ray.tempering, 1.0)
        if lo <= 0.0:
            lo = hi * math.exp(-quad.tail_decay / max(power - a, 1e-2))
        u0, u1 = math.log(lo), math.log(hi)

        def integrand(u):
            r = np.exp(u)
            return ray.weight * r ** (power - a) * np.exp(-ray.tempering * r)

        return float(refined(integrand, u0, u1, quad))

    def min_one_y2_mass(self) -> float:
        quad = QuadConfig()
        return sum(self._radial(r, 2.0, 0.0, 1.0, quad) + self._radial(r, 0.0, 1.0, math.inf, quad)
                   for r in self.rays)

    def tail_mass(self, radius: float) -> float:
        quad = QuadConfig()
        return sum(self._radial(r, 0.0, radius, math.inf, quad) for r in self.rays)

    def small_second_moment(self, radius: float) -> float:
        quad = QuadConfig()
        return sum(self._radial(r, 2.0, 0.0, radius, quad) for r in self.rays)

    def second_moment_matrix(self, radius: float) -> np.ndarray:
        quad = QuadConfig()
        out = np.zeros((self.dim, self.dim))
        for ray in self.rays:
            e = np.asarray(ray.direction)
            out += self._radial(ray, 2.0, 0.0, radius, quad) * np.outer(e, e)
        return out

    def compensator(self, lo: float, hi: float) -> np.ndarray:
        quad = QuadConfig()
        out = np.zeros(self.dim)
        for ray in self.rays:
            out += self._radial(ray, 1.0, lo, hi, quad) * np.asarray(ray.direction)
        return out

    def rate_above(self, eps: float) -> float:
        # the radial profile carries no atoms, so >= eps and > eps agree
        return self.tail_mass(eps)

    def _cap_radius(self, ray: StableRay, lo: float, quad: QuadConfig) -> float:
        """Radius beyond which the remaining intensity is ~e^{-tail_decay} relative."""
        r_pow = lo * math.exp(quad.tail_decay / self.index)
        if ray.tempering > 0.0:
            r_exp = lo + quad.tail_decay / ray.tempering
            return min(r_pow, max(2.0 * lo, r_exp))
        return r_pow

    def discretize(self, eps, quad, panels_per_decade=48):
        locs, masses = [], []
        for ray in self.rays:
            cap = self._cap_radius(ray, eps, quad)
            n_panels = max(4, int(math.ceil(panels_per_decade * math.log10(cap / eps))))
            edges = np.geomspace(eps, cap, n_panels + 1)
            gl_x, gl_w = np.polynomial.legendre.leggauss(6)
            mid = (edges[:-1, None] + edges[1:, None]) / 2.0
            half = (edges[1:, None] - edges[:-1, None]) / 2.0
            nodes = mid + half * gl_x[None, :]
            dens = ray.weight * nodes ** (-1.0 - self.index) * np.exp(-ray.tempering * nodes)
            pmass = (dens * gl_w[None, :] * half).sum(axis=1)
            pcent = (dens * nodes * gl_w[None, :] * half).sum(axis=1) / np.maximum(pmass, 1e-300)
            keep = pmass > 1e-300
            pmass, pcent = pmass[keep], pcent[keep]
            rest = self._radial(ray, 0.0, cap, math.inf, quad)
            if rest > 0.0:
                pmass = np.append(pmass, rest)
                pcent = np.append(pcent, cap)
            e = np.asarray(ray.direction)
            locs.append(pcent[:, None] * e[None, :])
            masses.append(pmass)
        return np.concatenate(locs, axis=0), np.concatenate(masses)

    def _tail_char_piece(self, z: np.ndarray, ray: StableRay, cutoff: float) -> np.ndarray:
        """integral over (cutoff, inf) of e^{irz} r^{-1-a} e^{-theta r} dr (no weight)."""
        import mpmath

        a = self.index
        out = np.empty(z.shape, dtype=complex)
        for k, zk in enumerate(z):
            s = complex(ray.tempering, -float(zk))
            if s == 0:
                out[k] = cutoff ** (-a) / a
                continue
            val = mpmath.power(s, a) * mpmath.gammainc(-a, a=cutoff * s)
            out[k] = complex(val)
        return out

    def symbol_jump(self, xi, trunc, eps, quad):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        cutoff = trunc.cutoff
        eps = min(eps, cutoff)
        out = np.zeros(xi.shape[0], dtype=complex)
        for ray in self.rays:
            e = np.asarray(ray.direction)
            z = xi @ e                                     # (k,)
            zmax = float(np.max(np.abs(z))) if z.size else 0.0

            def compensated(u, z=z, ray=ray):
                r = np.exp(u)
                dens = ray.weight * r ** (-self.index) * np.exp(-ray.tempering * r)
                return _stable_one_minus_exp_plus_is(np.outer(r, z)) * dens[:, None]

            # inner part (0, cutoff], integrand ~ r^{2-a} near 0 in log coords
            r_lo = eps * math.exp(-quad.tail_decay / (2.0 - self.index))
            osc_panels = int(math.ceil(zmax * cutoff / 4.0))
            if eps < cutoff:
                out += refined(compensated, math.log(r_lo), math.log(eps), quad)
                out += refined(compensated, math.log(eps), math.log(cutoff), quad,
                               min_panels=osc_panels)
            else:
                out += refined(compensated, math.log(r_lo), math.log(cutoff), quad,
                               min_panels=osc_panels)
            # tail: (1 - e^{irz}) on (cutoff, inf) = tail mass - characteristic piece
            tail = self._radial(ray, 0.0, cutoff, math.inf, quad)
            out += ray.weight * (-self._tail_char_piece(z, ray, cutoff)) + tail
        return out

    def pushforward(self, sigma):
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        if sigma.shape[0] > 2:
            raise ValidationError("StableLike pushforward supports image dimension <= 2")
        new_rays = []
        for ray in self.rays:
            v = sigma @ np.asarray(ray.direction)
            ell = float(np.linalg.norm(v))
            if ell == 0.0:
                continue
            new_rays.append(StableRay(tuple(v / ell), ray.weight * ell ** self.index,
                                      ray.tempering / ell))
        if not new_rays:
            return Atoms.empty(sigma.shape[0])
        return StableLike(self.index, tuple(new_rays))

    def pushforward_drift_gap(self, sigma, trunc, hat_trunc, quad):
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        out = np.zeros(sigma.shape[0])
        for ray in self.rays:
            e = np.asarray(ray.direction)
            v = sigma @ e
            ell = float(np.linalg.norm(v))
            if ell == 0.0:
                continue
            lo, hi = sorted((trunc.cutoff, hat_trunc.cutoff / ell))
            sign = 1.0 if trunc.cutoff > hat_trunc.cutoff / ell else -1.0
            out += sign * self._radial(ray, 1.0, lo, hi, quad) * v
        return out


@dataclass(frozen=True, eq=False)
class Density(LevyMeasure):
    """Custom d=1 measure density(y) dy on 0 < |y| <= support_radius.

    small_exponent is the claimed singularity order near zero
    (density = O(|y|^{-1-small_exponent}), small_exponent < 2); it controls
    where the quadrature truncates the origin.
    """

    density: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    small_exponent: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.support_radius < math.inf):
            raise ValidationError("Density needs a finite positive support radius")
        if not (0.0 <= self.small_exponent < 2.0):
            raise ValidationError("small_exponent must lie in [0, 2)")
        # integrability check doubles as validation
        self.min_one_y2_mass()

    @property
    def dim(self) -> int:
        return 1

    def _side(self, fn_of_r: Callable, lo: float, hi: float, sign: float,
              quad: QuadConfig, power_at_zero: float, min_panels: int = 0):
        hi = min(hi, self.support_radius)
        if hi <= 0 or hi <= lo:
            return 0.0
        if lo <= 0.0:
            lo = hi * math.exp(-quad.tail_decay / max(power_at_zero, 1e-2))

        def integrand(u):
            r = np.exp(u)
            dens = np.asarray(self.density(sign * r), dtype=float)
            return fn_of_r(r) * dens * r

        return refined(integrand, math.log(lo), math.log(hi), quad, min_panels=min_panels)

    def _both(self, fn, lo, hi, quad, power_at_zero, min_panels=0):
        total = 0.0
        for sign in (1.0, -1.0):
            total = total + self._side(lambda r: fn(sign * r), lo, hi, sign, quad,
                                       power_at_zero, min_panels)
        return total

    def min_one_y2_mass(self) -> float:
        quad = QuadConfig()
        return float(self._both(lambda y: np.minimum(1.0, y * y), 0.0,
                                self.support_radius, quad, 2.0 - self.small_exponent))

    def tail_mass(self, radius: float) -> float:
        quad = QuadConfig()
        return float(self._both(lambda y: np.ones_like(y), radius, self.support_radius,
                                quad, 1.0)) if radius < self.support_radius else 0.0

    def small_second_moment(self, radius: float) -> float:
        quad = QuadConfig()
        return float(self._both(lambda y: y * y, 0.0, radius, quad,
                                2.0 - self.small_exponent))

    def second_moment_matrix(self, radius: float) -> np.ndarray:
        return np.asarray([[self.small_second_moment(radius * (1 - 1e-15))]])

    def compensator(self, lo: float, hi: float) -> np.ndarray:
        quad = QuadConfig()
        return np.asarray([self._both(lambda y: y, lo, hi, quad,
                                      1.0 - self.small_exponent)])

    def rate_above(self, eps: float) -> float:
        quad = QuadConfig()
        return float(self._both(lambda y: np.ones_like(y), eps * (1 - 1e-15),
                                self.support_radius, quad, 1.0))

    def discretize(self, eps, quad, panels_per_decade=48):
        locs, masses = [], []
        gl_x, gl_w = np.polynomial.legendre.leggauss(6)
        for sign in (1.0, -1.0):
            cap = self.support_radius
            if cap <= eps:
                continue
            n_panels = max(4, int(math.ceil(panels_per_decade * math.log10(cap / eps))))
            edges = np.geomspace(eps, cap, n_panels + 1)
            mid = (edges[:-1, None] + edges[1:, None]) / 2.0
            half = (edges[1:, None] - edges[:-1, None]) / 2.0
            nodes = mid + half * gl_x[None, :]
            dens = np.asarray(self.density(sign * nodes.ravel()), dtype=float).reshape(nodes.shape)
            pmass = (dens * gl_w[None, :] * half).sum(axis=1)
            pcent = (dens * nodes * gl_w[None, :] * half).sum(axis=1) / np.maximum(pmass, 1e-300)
            keep = pmass > 1e-300
            locs.append(sign * pcent[keep][:, None])
            masses.append(pmass[keep])
        if not masses:
            return np.zeros((0, 1)), np.zeros(0)
        return np.concatenate(locs, axis=0), np.concatenate(masses)

    def symbol_jump(self, xi, trunc, eps, quad):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))[:, 0]
        cutoff = min(trunc.cutoff, self.support_radius)
        eps = min(eps, cutoff)
        zmax = float(np.max(np.abs(xi))) if xi.size else 0.0
        out = np.zeros(xi.shape[0], dtype=complex)
        for sign in (1.0, -1.0):
            def inner(u, sign=sign):
                r = np.exp(u)
                dens = np.asarray(self.density(sign * r), dtype=float)
                return _stable_one_minus_exp_plus_is(np.outer(sign * r, xi)) * (dens * r)[:, None]

            r_lo = eps * math.exp(-quad.tail_decay / max(2.0 - self.small_exponent, 1e-2))
            osc = int(math.ceil(zmax * cutoff / 4.0))
            out += refined(inner, math.log(r_lo), math.log(eps), quad)
            if eps < cutoff:
                out += refined(inner, math.log(eps), math.log(cutoff), quad, min_panels=osc)
            if self.support_radius > trunc.cutoff:
                def tail(u, sign=sign):
                    r = np.exp(u)
                    dens = np.asarray(self.density(sign * r), dtype=float)
                    return (1.0 - np.exp(1j * np.outer(sign * r, xi))) * (dens * r)[:, None]

                osc_t = int(math.ceil(zmax * self.support_radius / 4.0))
                out += refined(tail, math.log(trunc.cutoff), math.log(self.support_radius),
                               quad, min_panels=osc_t)
        return out

    def pushforward(self, sigma):
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        if sigma.shape != (1, 1):
            raise ValidationError("Density pushforward is d=1 only")
        s = float(sigma[0, 0])
        if s == 0.0:
            return Atoms.empty(1)
        base = self.density
        return Density(lambda y, base=base, s=s: np.asarray(base(np.asarray(y) / s)) / abs(s),
                       support_radius=self.support_radius * abs(s),
                       small_exponent=self.small_exponent)

    def pushforward_drift_gap(self, sigma, trunc, hat_trunc, quad):
        s = float(np.atleast_2d(np.asarray(sigma, dtype=float))[0, 0])
        if s == 0.0:
            return np.zeros(1)
        lo, hi = sorted((trunc.cutoff, hat_trunc.cutoff / abs(s)))
        sign = 1.0 if trunc.cutoff > hat_trunc.cutoff / abs(s) else -1.0
        if hi <= lo:
            return np.zeros(1)
        val = self._both(lambda y: y, lo, min(hi, self.support_radius), quad, 1.0)
        return np.asarray([sign * s * val])


# ---------------------------------------------------------------------------
# triplet
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevyTriplet:
    """Drift, covariance, jump measure and the truncation they are stated in."""

    b: np.ndarray
    Q: np.ndarray
    nu: LevyMeasure | None = None
    trunc: TruncationSpec = TruncationSpec()

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        d = b.shape[0]
        if Q.shape != (d, d):
            raise ValidationError(f"Q shape {Q.shape} does not match drift dimension {d}")
        scale = 1.0 + float(np.max(np.abs(Q))) if Q.size else 1.0
        if float(np.max(np.abs(Q - Q.T))) > _SYM_TOL * scale:
            raise ValidationError("Q is not symmetric within 1e-10")
        Q = (Q + Q.T) / 2.0
        if d and float(np.min(np.linalg.eigvalsh(Q))) < -_EIG_TOL * scale:
            raise ValidationError("Q has an eigenvalue below -1e-10")
        nu = self.nu if self.nu is not None else Atoms.empty(d)
        if nu.dim != d:
            raise ValidationError(f"measure dimension {nu.dim} != triplet dimension {d}")
        mass = nu.min_one_y2_mass()
        if not math.isfinite(mass):
            raise ValidationError("jump measure is not integrable against min(1, |y|^2)")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "_mass", float(mass))

    @classmethod
    def d1(cls, b: float, q: float, nu: LevyMeasure | None = None,
           cutoff: float = 1.0) -> "LevyTriplet":
        return cls(np.asarray([float(b)]), np.asarray([[float(q)]]), nu,
                   TruncationSpec(cutoff))

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def levy_mass(self) -> float:
        return self._mass


def levy_mass(obj) -> float:
    """min(1, |y|^2)-mass of a measure or of a triplet's measure."""
    if isinstance(obj, LevyTriplet):
        return obj.levy_mass()
    return float(obj.min_one_y2_mass())


# ---------------------------------------------------------------------------
# symbol evaluation
# ---------------------------------------------------------------------------

def symbol_values(triplet: LevyTriplet, xi: np.ndarray, eps: float | None = None,
                  quad: QuadConfig = QuadConfig()) -> np.ndarray:
    """q(xi) for a batch of rows xi, shape (k, d) -> complex (k,)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != triplet.dim:
        raise ValidationError(f"xi dimension {xi.shape[1]} != triplet dimension {triplet.dim}")
    split = eps if eps is not None else 1e-3 * triplet.trunc.cutoff
    drift = -1j * (xi @ triplet.b)
    diffusion = 0.5 * np.einsum("ka,ab,kb->k", xi, triplet.Q, xi)
    jump = triplet.nu.symbol_jump(xi, triplet.trunc, split, quad)
    return drift + diffusion + jump


def symbol_eval(triplet: LevyTriplet, xi, eps: float | None = None,
                quad: QuadConfig = QuadConfig()) -> complex:
    """State-space symbol q(xi) of a single triplet at one frequency."""
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
    return complex(symbol_values(triplet, xi_arr[None, :], eps, quad)[0])


# ---------------------------------------------------------------------------
# coefficient fields and uncertainty sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoefficientField:
    """One labelled coefficient choice x -> (b, Q, nu)(x).

    structure is a scheme hint: "constant" (triplet independent of x),
    "drift" (only the drift varies, via drift_fn) or "general".
    """

    label: str
    triplet_at: Callable[[np.ndarray], LevyTriplet]
    constant: bool = False
    structure: str = "general"
    base: LevyTriplet | None = None
    drift_fn: Callable[[np.ndarray], np.ndarray] | None = None
    dim_hint: int = 0

    @classmethod
    def constant_field(cls, label: str, triplet: LevyTriplet) -> "CoefficientField":
        return cls(label, lambda x, t=triplet: t, constant=True, structure="constant",
                   base=triplet, dim_hint=triplet.dim)

    @classmethod
    def drift_field(cls, label: str, base: LevyTriplet,
                    drift_fn: Callable[[np.ndarray], np.ndarray]) -> "CoefficientField":
        def at(x, base=base, drift_fn=drift_fn):
            return LevyTriplet(np.atleast_1d(np.asarray(drift_fn(x), dtype=float)),
                               base.Q, base.nu, base.trunc)
        return cls(label, at, constant=False, structure="drift", base=base,
                   drift_fn=drift_fn, dim_hint=base.dim)

    @classmethod
    def affine_drift(cls, label: str, base: LevyTriplet, slope) -> "CoefficientField":
        slope = np.atleast_2d(np.asarray(slope, dtype=float))
        return cls.drift_field(label, base,
                               lambda x, b0=base.b, A=slope: b0 + A @ np.atleast_1d(x))

    @classmethod
    def function_field(cls, label: str, fn: Callable[[np.ndarray], LevyTriplet],
                       dim: int = 1) -> "CoefficientField":
        return cls(label, fn, constant=False, structure="general", dim_hint=dim)

    @classmethod
    def sde_field(cls, label: str, base: LevyTriplet, sigma_fn: Callable,
                  hat_trunc: TruncationSpec, dim: int | None = None,
                  quad: QuadConfig = QuadConfig()) -> "CoefficientField":
        """Field whose triplet at x is the pushforward of `base` under sigma_fn(x)."""
        def at(x, base=base, sigma_fn=sigma_fn, hat_trunc=hat_trunc, quad=quad):
            return sde_pushforward(base, sigma_fn(x), hat_trunc, quad)
        if dim is None:
            dim = np.atleast_2d(np.asarray(sigma_fn(np.zeros(base.dim)), dtype=float)).shape[0]
        return cls(label, at, constant=False, structure="general", dim_hint=dim)

    @property
    def dim(self) -> int:
        if self.dim_hint:
            return self.dim_hint
        if self.base is not None:
            return self.base.dim
        return self.triplet_at(np.zeros(1)).dim


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """Finite family of coefficient fields sharing one truncation."""

    fields: tuple
    trunc: TruncationSpec

    def __post_init__(self):
        if not self.fields:
            raise ValidationError("uncertainty set must be nonempty")
        fields = tuple(self.fields)
        dims = set()
        for f in fields:
            probe = f.base if f.base is not None else f.triplet_at(np.zeros(f.dim))
            dims.add(probe.dim)
            if abs(probe.trunc.cutoff - self.trunc.cutoff) > 0:
                raise ValidationError(
                    f"field {f.label!r} uses cutoff {probe.trunc.cutoff}, set uses "
                    f"{self.trunc.cutoff}")
        if len(dims) != 1:
            raise ValidationError("fields disagree in dimension")
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "_dim", dims.pop())

    @classmethod
    def of(cls, *fields: CoefficientField) -> "UncertaintySet":
        probe = fields[0].base if fields[0].base is not None else \
            fields[0].triplet_at(np.zeros(fields[0].dim))
        return cls(tuple(fields), probe.trunc)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def labels(self) -> tuple:
        return tuple(f.label for f in self.fields)


# ---------------------------------------------------------------------------
# probes and diagnostics
# ---------------------------------------------------------------------------

def ball_probes(center, radius: float, count: int, dim: int) -> np.ndarray:
    """Deterministic probes of the closed ball: lattice points plus boundary."""
    center = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (dim,))
    if radius == 0.0 or count <= 1:
        return center[None, :]
    if dim == 1:
        n = max(count, 3)
        n += (n + 1) % 2            # odd, so the center is a probe
        return (center[0] + np.linspace(-radius, radius, n))[:, None]
    if dim == 2:
        side = max(3, int(math.ceil(math.sqrt(count))))
        axis = np.linspace(-radius, radius, side)
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        pts = pts[np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)]
        ang = np.linspace(0.0, 2.0 * math.pi, max(8, count // 2), endpoint=False)
        ring = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        pts = np.concatenate([pts, ring, np.zeros((1, 2))], axis=0)
        return center[None, :] + pts
    if dim == 3:
        side = max(3, int(round(count ** (1.0 / 3.0))))
        axis = np.linspace(-radius, radius, side)
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
        pts = pts[np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)]
        k = np.arange(max(16, count // 2))
        golden = math.pi * (3.0 - math.sqrt(5.0))
        zc = 1.0 - 2.0 * (k + 0.5) / len(k)
        rho = np.sqrt(np.maximum(0.0, 1.0 - zc * zc))
        ring = radius * np.stack([rho * np.cos(golden * k), rho * np.sin(golden * k), zc], axis=1)
        pts = np.concatenate([pts, ring, np.zeros((1, 3))], axis=0)
        return center[None, :] + pts
    raise ValidationError(f"probes support d <= 3, got {dim}")


def _field_triplets_near(field: CoefficientField, x0, radius: float, probes: int,
                         dim: int) -> list:
    if field.constant and field.base is not None:
        return [field.base]
    pts = ball_probes(x0, radius, probes, dim)
    return [field.triplet_at(p) for p in pts]


def bound_M_r(us: UncertaintySet, x0, radius: float, probes: int = 33) -> float:
    """sup_alpha sup_{|z - x0| <= radius} (|b| + |Q|_spec + levy mass), by probing."""
    best = 0.0
    for f in us.fields:
        for t in _field_triplets_near(f, x0, radius, probes, us.dim):
            val = float(np.linalg.norm(t.b))
            if t.Q.size:
                val += float(np.linalg.norm(t.Q, 2))
            val += t.levy_mass()
            best = max(best, val)
    if not math.isfinite(best):
        raise ValidationError("bound_M_r is infinite on the probe set")
    return best


def _symbol_sup_on_ball(us: UncertaintySet, x0, space_radius: float, xi_radius: float,
                        space_probes: int, xi_probes: int,
                        quad: QuadConfig = QuadConfig()) -> float:
    xi = ball_probes(np.zeros(us.dim), xi_radius, xi_probes, us.dim)
    best = 0.0
    for f in us.fields:
        for t in _field_triplets_near(f, x0, space_radius, space_probes, us.dim):
            vals = symbol_values(t, xi, quad=quad)
            best = max(best, float(np.max(np.abs(vals))))
    return best


def symbol_sup_bound(us: UncertaintySet, x0, radius: float, space_probes: int = 17,
                     xi_probes: int = 33, quad: QuadConfig = QuadConfig()) -> float:
    """sup_alpha sup_{|z-x0|<=r} sup_{|xi|<=1/r} |q_alpha(z, xi)| on deterministic probes.

    This is the state-space factor in the maximal inequality bound
    c * t * symbol_sup_bound(r).
    """
    if radius <= 0:
        raise ValidationError("radius must be positive")
    return _symbol_sup_on_ball(us, x0, radius, 1.0 / radius, space_probes, xi_probes, quad)


def symbol_decay_check(us: UncertaintySet, x0=0.0, radii: Sequence[float] | None = None,
                       space_radius: float = 0.0, xi_probes: int = 33,
                       quad: QuadConfig = QuadConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Table of sup_alpha sup_{|xi| <= r} |q_alpha(xi)| over a shrinking radius grid.

    Under uniform tightness of the family the table must decay to 0 as r -> 0;
    callers assert monotonicity and the final/initial ratio.
    """
    if radii is None:
        radii = np.geomspace(1.0, 1e-2, 9)
    radii = np.asarray(list(radii), dtype=float)
    vals = np.asarray([
        _symbol_sup_on_ball(us, x0, space_radius, r, 9, xi_probes, quad) for r in radii
    ])
    return radii, vals


@dataclass(frozen=True)
class TightnessReport:
    radii: np.ndarray
    small_profile: np.ndarray       # sup_alpha int_{0<|y|<=r} |y|^2 nu
    tail_profile: np.ndarray        # sup_alpha nu({|y| > r})
    small_jump_ok: bool
    large_jump_ok: bool
    threshold: float


def tightness_report(us: UncertaintySet, radii: Sequence[float] | None = None,
                     threshold: float = 1e-2, probes: int = 9) -> TightnessReport:
    """Uniform-tightness profiles over the family, probed at the origin.

    Flags pass when the relevant profile at the extreme radius has dropped
    below `threshold` times its maximum (an all-zero profile passes).
    """
    if radii is None:
        radii = np.geomspace(1e-3, 1e3, 25)
    radii = np.asarray(list(radii), dtype=float)
    measures = []
    for f in us.fields:
        for t in _field_triplets_near(f, np.zeros(us.dim), 0.0, probes, us.dim):
            measures.append(t.nu)
    small = np.asarray([max(m.small_second_moment(r) for m in measures) for r in radii])
    tail = np.asarray([max(m.tail_mass(r) for m in measures) for r in radii])
    small_ok = bool(small[0] <= threshold * (float(np.max(small)) + 1e-300))
    tail_ok = bool(tail[-1] <= threshold * (float(np.max(tail)) + 1e-300))
    return TightnessReport(radii, small, tail, small_ok, tail_ok, threshold)


_TRUNC_CONST_CACHE: dict[tuple, float] = {}


def truncation_bound_constant(trunc: TruncationSpec, dim: int = 1,
                              scale_lo: float = 1e-2, scale_hi: float = 1e2,
                              points: int = 121) -> float:
    """Scan constant C with |1 - e^{iy.xi} + i h(y).xi| <= C min(1, |y|^2 |xi|^2).

    The bound cannot hold globally for a compactly supported h (the left side
    is linear in xi for |y| > cutoff), so C is taken as the max ratio over a
    documented box of radial scales [scale_lo, scale_hi] * cutoff for |y| and
    [scale_lo, scale_hi] for |xi|; it is only valid on that box.
    """
    key = (round(trunc.cutoff, 12), dim, scale_lo, scale_hi, points)
    if key in _TRUNC_CONST_CACHE:
        return _TRUNC_CONST_CACHE[key]
    rad = np.geomspace(scale_lo, scale_hi, points)
    ys = np.concatenate([rad * trunc.cutoff, -rad * trunc.cutoff])
    xis = np.concatenate([rad, -rad])
    yy, xx = np.meshgrid(ys, xis, indexing="ij")
    phase = yy * xx
    hterm = np.where(np.abs(yy) <= trunc.cutoff, yy, 0.0) * xx
    lhs = np.abs(1.0 - np.exp(1j * phase) + 1j * hterm)
    rhs = np.minimum(1.0, (yy * xx) ** 2)
    const = float(np.max(lhs / rhs))
    _TRUNC_CONST_CACHE[key] = const
    return const


# ---------------------------------------------------------------------------
# pushforward and effective (discretized) form
# ---------------------------------------------------------------------------

def sde_pushforward(base: LevyTriplet, sigma, hat_trunc: TruncationSpec | None = None,
                    quad: QuadConfig = QuadConfig()) -> LevyTriplet:
    """Triplet of sigma . X for X with constant triplet `base`.

    drift:      sigma b - integral (sigma h(y) - h_hat(sigma y)) nu(dy)
    covariance: sigma Q sigma^T
    measure:    image of nu under y -> sigma y, mass mapped to 0 removed.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape[1] != base.dim:
        raise ValidationError(f"sigma columns {sigma.shape[1]} != base dimension {base.dim}")
    hat = hat_trunc if hat_trunc is not None else TruncationSpec(base.trunc.cutoff)
    gap = base.nu.pushforward_drift_gap(sigma, base.trunc, hat, quad)
    b_hat = sigma @ base.b - gap
    q_hat = sigma @ base.Q @ sigma.T
    nu_hat = base.nu.pushforward(sigma)
    return LevyTriplet(b_hat, q_hat, nu_hat, hat)


@dataclass(frozen=True, eq=False)
class EffectiveTriplet:
    """Triplet prepared for a scheme or sampler at small-jump split eps.

    Jumps below eps became extra covariance, the compensator of mid-range
    jumps (eps <= |y| <= cutoff) is folded into the drift, and the remaining
    measure is a finite atom list.
    """

    b_eff: np.ndarray
    q_eff: np.ndarray
    jump_locs: np.ndarray
    jump_masses: np.ndarray
    rate: float
    eps: float

    @property
    def dim(self) -> int:
        return self.b_eff.shape[0]


def effective_triplet(t: LevyTriplet, eps: float, quad: QuadConfig = QuadConfig(),
                      panels_per_decade: int = 48) -> EffectiveTriplet:
    if not (0.0 < eps <= t.trunc.cutoff):
        raise ValidationError(f"split eps must lie in (0, cutoff], got {eps}")
    b_eff = t.b - t.nu.compensator(eps, t.trunc.cutoff)
    q_eff = t.Q + t.nu.second_moment_matrix(eps)
    locs, masses = t.nu.discretize(eps, quad, panels_per_decade)
    return EffectiveTriplet(b_eff, q_eff, locs, masses, float(masses.sum()), eps)
