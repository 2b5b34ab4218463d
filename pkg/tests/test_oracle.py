"""Spectral reference semigroup and closed-form two-sigma heat values."""

import numpy as np
import pytest

from sublevy.grids import Field, Grid
from sublevy.levy import Atoms, LevyTriplet
from sublevy.oracle import OracleError, fft_semigroup, gheat_closed_form


def _periodic_freq(grid: Grid, j: int) -> float:
    # j-th discrete frequency of the n*dx-periodic box
    return 2.0 * np.pi * j / (grid.points * grid.dx)


def test_zero_time_is_identity_copy():
    g = Grid(1, 2.0, 33)
    f = Field.sample(g, lambda m: np.tanh(m[:, 0]))
    out, residue = fft_semigroup(LevyTriplet.d1(0.3, 1.0), f, 0.0)
    assert residue == 0.0
    assert out is not f
    np.testing.assert_array_equal(out.values, f.values)


def test_negative_time_rejected():
    g = Grid(1, 2.0, 33)
    f = Field(g, np.zeros(g.shape))
    with pytest.raises(OracleError):
        fft_semigroup(LevyTriplet.d1(0.0, 1.0), f, -0.1)


def test_cosine_eigenfunction_decay():
    # a commensurate cosine is an exact discrete eigenfunction:
    # u(t) = e^{-t Q k^2 / 2} cos(k x)
    g = Grid(1, 4.0, 128)
    k = _periodic_freq(g, 3)
    f = Field.sample(g, lambda m: np.cos(k * m[:, 0]))
    t, q = 0.7, 1.5
    out, residue = fft_semigroup(LevyTriplet.d1(0.0, q), f, t)
    want = np.exp(-t * q * k * k / 2.0) * f.values
    np.testing.assert_allclose(out.values, want, atol=1e-13)
    assert residue < 1e-13


def test_drift_transport_is_circular_shift():
    # pure drift moves data by b*t; with b*t an exact cell count the
    # periodic evolution is a roll of the samples
    g = Grid(1, 3.0, 60)
    rng = np.random.default_rng(5)
    # band-limited random data so the shift is exactly representable
    spec = np.zeros(g.points, dtype=complex)
    spec[1:6] = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    spec[-5:] = np.conj(spec[5:0:-1])
    vals = np.fft.ifft(spec).real
    f = Field(g, vals)
    b = 2.0
    t = 3.0 * g.dx / b
    out, _ = fft_semigroup(LevyTriplet.d1(b, 0.0), f, t)
    np.testing.assert_allclose(out.values, np.roll(vals, -3), atol=1e-12)


def test_gaussian_heat_kernel_closed_form():
    g = Grid(1, 12.0, 512)
    w, q, t = 0.8, 1.0, 0.5
    f = Field.sample(g, lambda m: np.exp(-m[:, 0] ** 2 / (2 * w * w)))
    out, _ = fft_semigroup(LevyTriplet.d1(0.0, q), f, t)
    s2 = w * w + q * t
    want = w / np.sqrt(s2) * np.exp(-g.axis() ** 2 / (2 * s2))
    np.testing.assert_allclose(out.values, want, atol=1e-8)


def test_semigroup_law():
    g = Grid(1, 8.0, 256)
    t = LevyTriplet.d1(0.2, 0.7, Atoms.of((0.5, 1.0), (-1.3, 0.4)))
    f = Field.sample(g, lambda m: np.exp(-m[:, 0] ** 2))
    one, _ = fft_semigroup(t, f, 0.6)
    two_a, _ = fft_semigroup(t, f, 0.25)
    two_b, _ = fft_semigroup(t, two_a, 0.35)
    np.testing.assert_allclose(one.values, two_b.values, atol=1e-10)


def test_jump_semigroup_poisson_mixture():
    # single atom, no compensation beyond cutoff: u(t,x) = E f(x + y N_t)
    g = Grid(1, 16.0, 640)
    lam, y0 = 0.8, 2.0
    t = 0.9
    trip = LevyTriplet.d1(0.0, 0.0, Atoms.of((y0, lam)))
    f = Field.sample(g, lambda m: np.exp(-m[:, 0] ** 2))
    out, _ = fft_semigroup(trip, f, t)
    x = g.axis()
    want = np.zeros_like(x)
    from math import exp, factorial
    for k in range(40):
        want += exp(-lam * t) * (lam * t) ** k / factorial(k) * np.exp(-(x + k * y0) ** 2)
    # the jump ladder marches mass around the circle; compare where the
    # wrap-around needs a negligible Poisson count
    inner = np.abs(x) <= 8.0
    np.testing.assert_allclose(out.values[inner], want[inner], atol=1e-6)


def test_residue_error_on_aliasing():
    # alternating data has pure Nyquist content; a strong drift rotates it
    # into the imaginary part, which the oracle must refuse
    g = Grid(1, 1.0, 64)
    f = Field(g, np.cos(np.pi * np.arange(64)))
    with pytest.raises(OracleError, match="aliasing"):
        fft_semigroup(LevyTriplet.d1(1.0, 0.0), f, 0.01)


def test_2d_matches_1d_tensor_data():
    # separable data under a diagonal triplet evolves separably
    g1 = Grid(1, 6.0, 64)
    g2 = Grid(2, 6.0, 64)
    fx = np.exp(-g1.axis() ** 2)
    f1 = Field(g1, fx)
    t1 = LevyTriplet.d1(0.0, 1.2)
    out1, _ = fft_semigroup(t1, f1, 0.4)

    f2 = Field(g2, np.outer(fx, fx))
    t2 = LevyTriplet(np.zeros(2), 1.2 * np.eye(2))
    out2, _ = fft_semigroup(t2, f2, 0.4)
    np.testing.assert_allclose(out2.values, np.outer(out1.values, out1.values),
                               atol=1e-10)


def test_gheat_closed_form_values():
    assert gheat_closed_form("convex-quadratic", 1.0, 2.0, 1.0, 0.5) == 4.25
    assert gheat_closed_form("concave-quadratic", 1.0, 2.0, 0.0625, 0.25) == -0.125
    got = gheat_closed_form("convex-quadratic", 0.5, 1.5, 2.0, np.array([0.0, 1.0]))
    np.testing.assert_allclose(got, [4.5, 5.5])


def test_gheat_validation():
    with pytest.raises(OracleError):
        gheat_closed_form("convex-quadratic", 0.0, 1.0, 1.0, 0.0)
    with pytest.raises(OracleError):
        gheat_closed_form("convex-quadratic", 2.0, 1.0, 1.0, 0.0)
    with pytest.raises(OracleError):
        gheat_closed_form("convex-quadratic", 1.0, 2.0, -1.0, 0.0)
    with pytest.raises(OracleError):
        gheat_closed_form("cubic", 1.0, 2.0, 1.0, 0.0)
