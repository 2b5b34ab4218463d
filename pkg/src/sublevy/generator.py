"""Generator application for Levy-type coefficient fields.

For a field alpha and a C^2_b test function f,

    A f(x) = b(x).grad f(x) + tr(Q(x) hess f(x))/2
             + integral (f(x+y) - f(x) - grad f(x).h(y)) nu(x, dy),

with the jump integral exact for atomic measures and adaptive-quadrature for
radial ones.  The sup-generator maximizes over the family with first-index
tie-breaking.  The grid variant applies the same operator to a sampled field
using monotone finite differences (see hjb module).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .levy import (Atoms, CoefficientField, Density, LevyTriplet, StableLike,
                   UncertaintySet, ValidationError)
from .quadrature import QuadConfig, refined

__all__ = ["TestFunction", "apply_generator", "apply_sup_generator",
           "apply_generator_grid", "cosine", "sine", "gaussian_bump",
           "quadratic", "inverse_quadratic", "mollifier", "combine"]


@dataclass(frozen=True)
class TestFunction:
    """Twice-differentiable probe with explicit derivatives and sup bounds.

    value/gradient/hessian are vectorized over point rows (m, d) and return
    (m,), (m, d), (m, d, d).  bounds = (sup |f|, sup |grad f|, sup |hess f|)
    over the ball of radius box_radius (Euclidean / spectral norms).
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    bounds: tuple
    dim: int = 1
    box_radius: float = math.inf
    label: str = ""

    def norm_c2(self) -> float:
        return float(sum(self.bounds))

    def check_bounds(self, probe_radius: float | None = None, count: int = 257,
                     tol: float = 1e-8) -> bool:
        """Bounds must dominate sampled values on a dense probe ball."""
        from .levy import ball_probes
        r = probe_radius if probe_radius is not None else min(self.box_radius, 10.0)
        pts = ball_probes(np.zeros(self.dim), r, count, self.dim)
        b0, b1, b2 = self.bounds
        ok = float(np.max(np.abs(self.value(pts)))) <= b0 + tol
        ok &= float(np.max(np.linalg.norm(self.gradient(pts), axis=1))) <= b1 + tol
        hess = self.hessian(pts)
        ok &= float(np.max(np.abs(np.linalg.eigvalsh(hess)))) <= b2 + tol
        return bool(ok)


def _rows(pts) -> np.ndarray:
    return np.atleast_2d(np.asarray(pts, dtype=float))


def cosine(freq=1.0, dim: int = 1, phase: float = 0.0, label: str = "cos") -> TestFunction:
    k = np.broadcast_to(np.atleast_1d(np.asarray(freq, dtype=float)), (dim,)).copy()
    knorm = float(np.linalg.norm(k))

    def val(p):
        return np.cos(_rows(p) @ k + phase)

    def grad(p):
        return -np.sin(_rows(p) @ k + phase)[:, None] * k[None, :]

    def hess(p):
        return -np.cos(_rows(p) @ k + phase)[:, None, None] * np.outer(k, k)[None]

    return TestFunction(val, grad, hess, (1.0, knorm, knorm ** 2), dim, label=label)


def sine(freq=1.0, dim: int = 1, label: str = "sin") -> TestFunction:
    return cosine(freq, dim, phase=-math.pi / 2.0, label=label)


def gaussian_bump(center=0.0, width: float = 1.0, dim: int = 1,
                  label: str = "bump") -> TestFunction:
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (dim,)).copy()
    w2 = float(width) ** 2

    def val(p):
        d = _rows(p) - c
        return np.exp(-np.sum(d * d, axis=1) / (2 * w2))

    def grad(p):
        d = _rows(p) - c
        return -val(p)[:, None] * d / w2

    def hess(p):
        d = _rows(p) - c
        eye = np.eye(len(c))
        return val(p)[:, None, None] * (np.einsum("ma,mb->mab", d, d) / w2 ** 2 - eye / w2)

    return TestFunction(val, grad, hess, (1.0, 1.0 / width, 2.0 / w2), dim, label=label)


def quadratic(center=0.0, dim: int = 1, box_radius: float = 10.0, sign: float = 1.0,
              label: str = "quad") -> TestFunction:
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (dim,)).copy()
    reach = box_radius + float(np.linalg.norm(c))

    def val(p):
        d = _rows(p) - c
        return sign * np.sum(d * d, axis=1)

    def grad(p):
        return 2.0 * sign * (_rows(p) - c)

    def hess(p):
        m = _rows(p).shape[0]
        return np.broadcast_to(2.0 * sign * np.eye(len(c)), (m, len(c), len(c))).copy()

    return TestFunction(val, grad, hess, (reach ** 2, 2 * reach, 2.0), dim,
                        box_radius=box_radius, label=label)


def inverse_quadratic(center=0.0, dim: int = 1, label: str = "peak") -> TestFunction:
    """1 / (1 + |x - c|^2); global max 1 at the center, good for max-principle probes."""
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (dim,)).copy()

    def val(p):
        d = _rows(p) - c
        return 1.0 / (1.0 + np.sum(d * d, axis=1))

    def grad(p):
        d = _rows(p) - c
        return -2.0 * (val(p) ** 2)[:, None] * d

    def hess(p):
        d = _rows(p) - c
        v = val(p)
        eye = np.eye(len(c))
        return (8.0 * (v ** 3)[:, None, None] * np.einsum("ma,mb->mab", d, d)
                - 2.0 * (v ** 2)[:, None, None] * eye[None])

    return TestFunction(val, grad, hess, (1.0, 2.0, 8.0), dim, label=label)


def mollifier(dim: int = 1, label: str = "mollifier") -> TestFunction:
    """exp(1 - 1/(1 - |x|^2)) inside the unit ball, 0 outside; peak value 1."""

    def val(p):
        p = _rows(p)
        r2 = np.sum(p * p, axis=1)
        out = np.zeros(p.shape[0])
        inside = r2 < 1.0
        v = 1.0 - r2[inside]
        out[inside] = np.exp(1.0 - 1.0 / v)
        return out

    def grad(p):
        p = _rows(p)
        r2 = np.sum(p * p, axis=1)
        out = np.zeros_like(p)
        inside = r2 < 1.0
        v = 1.0 - r2[inside]
        u = np.exp(1.0 - 1.0 / v)
        out[inside] = -2.0 * (u / v ** 2)[:, None] * p[inside]
        return out

    def hess(p):
        p = _rows(p)
        m, d = p.shape
        r2 = np.sum(p * p, axis=1)
        out = np.zeros((m, d, d))
        inside = r2 < 1.0
        x = p[inside]
        v = (1.0 - r2[inside])[:, None, None]
        u = np.exp(1.0 - 1.0 / v)
        xx = np.einsum("ma,mb->mab", x, x)
        eye = np.eye(d)[None]
        out[inside] = u * (4.0 * xx / v ** 4 - 2.0 * eye / v ** 2 - 8.0 * xx / v ** 3)
        return out

    # derivative sups found by dense scan, padded 10%
    probe = np.linspace(-0.999, 0.999, 4001)[:, None]
    if dim > 1:
        probe = np.concatenate([probe * np.eye(dim)[None, 0], probe * np.eye(dim)[None, 1]])
    g1 = float(np.max(np.linalg.norm(grad(probe), axis=1))) * 1.1
    g2 = float(np.max(np.abs(np.linalg.eigvalsh(hess(probe))))) * 1.1
    return TestFunction(val, grad, hess, (1.0, g1, g2), dim, box_radius=1.0, label=label)


def combine(a: float, f: TestFunction, b: float, g: TestFunction,
            label: str = "combo") -> TestFunction:
    if f.dim != g.dim:
        raise ValidationError("combined test functions disagree in dimension")
    bounds = tuple(abs(a) * bf + abs(b) * bg for bf, bg in zip(f.bounds, g.bounds))
    return TestFunction(
        lambda p: a * f.value(p) + b * g.value(p),
        lambda p: a * f.gradient(p) + b * g.gradient(p),
        lambda p: a * f.hessian(p) + b * g.hessian(p),
        bounds, f.dim, box_radius=min(f.box_radius, g.box_radius), label=label)


# ---------------------------------------------------------------------------
# pointwise application
# ---------------------------------------------------------------------------

def _triplet_of(field_or_triplet, x) -> LevyTriplet:
    if isinstance(field_or_triplet, LevyTriplet):
        return field_or_triplet
    if isinstance(field_or_triplet, CoefficientField):
        return field_or_triplet.triplet_at(np.atleast_1d(np.asarray(x, dtype=float)))
    raise ValidationError(f"expected a coefficient field or triplet, got "
                          f"{type(field_or_triplet).__name__}")


def _jump_apply_atoms(nu: Atoms, trunc, f: TestFunction, x: np.ndarray,
                      fx: float, gx: np.ndarray) -> float:
    if nu.is_empty:
        return 0.0
    pts = x[None, :] + nu.locations
    vals = f.value(pts)
    radii = np.linalg.norm(nu.locations, axis=1)
    hterm = (nu.locations * (radii <= trunc.cutoff)[:, None]) @ gx
    return float(np.sum(nu.masses * (vals - fx - hterm)))


def _jump_apply_radial(nu, trunc, f: TestFunction, x: np.ndarray, fx: float,
                       gx: np.ndarray, hx: np.ndarray, eps: float,
                       quad: QuadConfig, tail_tol: float) -> float:
    """Ray-wise radial quadrature of the compensated jump integrand."""
    total = 0.0
    if isinstance(nu, StableLike):
        sides = [(np.asarray(r.direction), r) for r in nu.rays]
    else:   # Density, d = 1
        sides = [(np.asarray([s]), None) for s in (1.0, -1.0)]
    cutoff = trunc.cutoff
    for e, ray in sides:
        ge = float(gx @ e)
        quad_form = float(e @ hx @ e)
        r_switch = 1e-4 * cutoff

        def density_of(r):
            if ray is not None:
                return ray.weight * r ** (-1.0 - nu.index) * np.exp(-ray.tempering * r)
            return np.asarray(nu.density(float(e[0]) * r), dtype=float)

        def compensated(u):
            r = np.exp(u)
            pts = x[None, :] + r[:, None] * e[None, :]
            direct = f.value(pts) - fx - r * ge
            taylor = 0.5 * quad_form * r * r
            g = np.where(r < r_switch, taylor, direct)
            return g * density_of(r) * r

        p_small = 2.0 - (nu.index if ray is not None else nu.small_exponent)
        inner_hi = min(cutoff, getattr(nu, "support_radius", math.inf))
        r_lo = inner_hi * math.exp(-quad.tail_decay / max(p_small, 1e-2))
        split = min(eps, inner_hi)
        if r_lo < split:
            total += float(refined(compensated, math.log(r_lo), math.log(split), quad))
        if split < inner_hi:
            total += float(refined(compensated, math.log(split), math.log(inner_hi), quad,
                                   min_panels=8))
        # beyond the truncation radius there is no compensator
        if ray is not None:
            cap = (nu.index * tail_tol / ray.weight) ** (-1.0 / nu.index)
            if ray.tempering > 0.0:
                cap = min(cap, max(2.0 * cutoff, quad.tail_decay / ray.tempering))
            cap = max(cap, 2.0 * cutoff)
        else:
            cap = nu.support_radius
        if cap > cutoff:
            def beyond(u):
                r = np.exp(u)
                pts = x[None, :] + r[:, None] * e[None, :]
                return (f.value(pts) - fx) * density_of(r) * r

            osc = int(math.ceil((cap - cutoff) / 8.0))
            total += float(refined(beyond, math.log(cutoff), math.log(cap), quad,
                                   min_panels=osc))
    return total


def apply_generator(field, f: TestFunction, x, eps: float | None = None,
                    quad: QuadConfig = QuadConfig(), tail_tol: float = 1e-7) -> float:
    """A f(x) for one coefficient field (or a bare triplet)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = _triplet_of(field, x)
    if f.dim != t.dim:
        raise ValidationError(f"test function dimension {f.dim} != field dimension {t.dim}")
    fx = float(f.value(x[None])[0])
    gx = f.gradient(x[None])[0]
    hx = f.hessian(x[None])[0]
    out = float(t.b @ gx) + 0.5 * float(np.trace(t.Q @ hx))
    split = eps if eps is not None else 1e-3 * t.trunc.cutoff
    if isinstance(t.nu, Atoms):
        out += _jump_apply_atoms(t.nu, t.trunc, f, x, fx, gx)
    else:
        out += _jump_apply_radial(t.nu, t.trunc, f, x, fx, gx, hx, split, quad, tail_tol)
    return out


def apply_sup_generator(us: UncertaintySet, f: TestFunction, x,
                        eps: float | None = None, quad: QuadConfig = QuadConfig()
                        ) -> tuple[float, str]:
    """max_alpha A^alpha f(x) and the first label attaining the max."""
    best = -math.inf
    best_label = us.fields[0].label
    for fld in us.fields:
        val = apply_generator(fld, f, x, eps, quad)
        if val > best:
            best, best_label = val, fld.label
    return best, best_label


def apply_generator_grid(field, u, index, extension: str = "constant-boundary",
                         eps: float | None = None) -> float:
    """Monotone finite-difference generator at one grid index of a sampled field.

    Central second differences, drift upwinded on the compensated drift, jump
    integral as an interpolated quadrature sum with small jumps folded into an
    effective diffusion.  Off-grid arguments follow the extension policy.
    """
    from .hjb import grid_generator_values

    vals = grid_generator_values(field, u, extension=extension, eps=eps)
    idx = tuple(np.atleast_1d(np.asarray(index, dtype=int)))
    return float(vals[idx])
