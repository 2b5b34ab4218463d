"""Path sampling, worst-case DP, probability bounds, stopped-process residual."""

import math

import numpy as np
import pytest

from sublevy.generator import gaussian_bump, mollifier, quadratic
from sublevy.grids import Field, Grid
from sublevy.levy import (Atoms, CoefficientField, LevyTriplet, StableLike,
                          UncertaintySet, ValidationError, symbol_eval)
from sublevy.oracle import fft_semigroup
from sublevy.simulate import (EmpiricalEstimate, IncrementSampler, SimConfig,
                              SimulationError, Z_99, block_rng, constant_c,
                              dp_sup_semigroup, dynkin_residual,
                              estimate_semigroup_single,
                              maximal_inequality_check, sample_increment,
                              wilson_upper)


def _const_set(*triplets, labels=None) -> UncertaintySet:
    labels = labels or [f"m{i}" for i in range(len(triplets))]
    return UncertaintySet.of(*(CoefficientField.constant_field(l, t)
                               for l, t in zip(labels, triplets)))


# ---------------------------------------------------------------------------
# configuration and streams
# ---------------------------------------------------------------------------

def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(delta=0.0)
    with pytest.raises(ValidationError):
        SimConfig(horizon=-1.0)
    with pytest.raises(ValidationError):
        SimConfig(n_paths=0)
    with pytest.raises(ValidationError):
        SimConfig(seed=1 << 64)
    with pytest.raises(ValidationError):
        EmpiricalEstimate(0.0, -1.0, 10)


def test_block_rng_reproducible_and_disjoint():
    a = block_rng(7, 1, 3).standard_normal(8)
    b = block_rng(7, 1, 3).standard_normal(8)
    np.testing.assert_array_equal(a, b)
    c = block_rng(7, 2, 3).standard_normal(8)
    d = block_rng(8, 1, 3).standard_normal(8)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_sample_increment_validation():
    rng = block_rng(0, 1, 0)
    with pytest.raises(ValidationError):
        sample_increment(LevyTriplet.d1(0.0, 1.0), 0.0, rng)


def test_rate_cap_raises():
    t = LevyTriplet.d1(0.0, 0.0, StableLike.symmetric(1.5))
    sampler = IncrementSampler(t, 1e-4, rate_delta_cap=10.0)
    with pytest.raises(SimulationError, match="small-jump split"):
        sampler.check_rate(1.0)


# ---------------------------------------------------------------------------
# increment law
# ---------------------------------------------------------------------------

def test_increment_moments_brownian_with_drift():
    t = LevyTriplet.d1(2.0, 1.5)
    rng = block_rng(3, 1, 0)
    delta = 0.25
    inc = IncrementSampler(t, 1e-3).draw(rng, 200_000, delta)[:, 0]
    se_mean = math.sqrt(1.5 * delta / inc.size)
    assert abs(inc.mean() - 2.0 * delta) < 4 * se_mean
    assert abs(inc.var() - 1.5 * delta) < 0.01 * 1.5 * delta


def test_increment_compensated_atom_has_zero_mean():
    # atom inside the cutoff is compensated: E increment = b*delta = 0
    t = LevyTriplet.d1(0.0, 0.0, Atoms.of((1.0, 2.0)))
    rng = block_rng(4, 1, 0)
    delta = 1.0
    inc = IncrementSampler(t, 0.5).draw(rng, 200_000, delta)[:, 0]
    se = math.sqrt(2.0 * delta / inc.size)    # Var = mass * y^2 * delta
    assert abs(inc.mean()) < 4 * se


def test_increment_char_function_matches_symbol_atoms():
    t = LevyTriplet.d1(0.4, 0.8, Atoms.of((0.6, 1.5), (-1.4, 0.5)))
    rng = block_rng(5, 1, 0)
    delta = 0.2
    inc = IncrementSampler(t, 1e-3).draw(rng, 100_000, delta)
    for xi in (0.5, 1.0, 2.0):
        want = np.exp(-delta * symbol_eval(t, xi))
        phases = np.exp(1j * xi * inc[:, 0])
        got = phases.mean()
        se = np.abs(phases - got).std() / math.sqrt(inc.shape[0])
        assert abs(got - want) < 4 * se + 1e-12


def test_increment_char_function_matches_symbol_stable():
    # small-jump refolding leaves a cubic-order gap, far below the MC noise
    t = LevyTriplet.d1(0.0, 0.0, StableLike.symmetric(1.4, 0.5))
    rng = block_rng(6, 1, 0)
    delta = 0.1
    inc = IncrementSampler(t, 1e-3).draw(rng, 100_000, delta)
    for xi in (0.5, 1.5):
        want = np.exp(-delta * symbol_eval(t, xi))
        phases = np.exp(1j * xi * inc[:, 0])
        se = np.abs(phases - phases.mean()).std() / math.sqrt(inc.shape[0])
        assert abs(phases.mean() - want) < 4 * se + 1e-6


def test_increment_2d_covariance():
    q = np.array([[1.0, 0.6], [0.6, 2.0]])
    t = LevyTriplet(np.zeros(2), q)
    rng = block_rng(9, 1, 0)
    inc = IncrementSampler(t, 1e-3).draw(rng, 300_000, 1.0)
    got = np.cov(inc.T)
    np.testing.assert_allclose(got, q, atol=0.03)


# ---------------------------------------------------------------------------
# plain-expectation estimates
# ---------------------------------------------------------------------------

def test_estimate_zero_triplet_is_exact():
    t = LevyTriplet.d1(0.0, 0.0)
    est = estimate_semigroup_single(t, lambda p: p[:, 0] ** 2 + 3.0, 2.0,
                                    SimConfig(n_paths=500))
    assert est.value == 7.0
    assert est.std_error == 0.0


def test_estimate_constant_payoff():
    t = LevyTriplet.d1(0.3, 1.0, Atoms.of((0.5, 1.0)))
    est = estimate_semigroup_single(t, lambda p: np.full(p.shape[0], 2.5), 0.0,
                                    SimConfig(n_paths=1000, horizon=0.5))
    assert est.value == 2.5 and est.std_error == 0.0


def test_estimate_brownian_cosine():
    # E cos(B_1) = e^{-1/2}
    t = LevyTriplet.d1(0.0, 1.0)
    cfg = SimConfig(delta=0.05, horizon=1.0, n_paths=40_000, seed=1)
    est = estimate_semigroup_single(t, lambda p: np.cos(p[:, 0]), 0.0, cfg)
    assert abs(est.value - math.exp(-0.5)) < 4 * est.std_error
    assert est.n == 40_000


def test_estimate_reproducible_and_seed_sensitive():
    t = LevyTriplet.d1(0.2, 1.0)
    f = lambda p: np.tanh(p[:, 0])
    cfg = SimConfig(n_paths=2000, horizon=0.3, seed=11)
    a = estimate_semigroup_single(t, f, 0.0, cfg)
    b = estimate_semigroup_single(t, f, 0.0, cfg)
    assert a == b
    c = estimate_semigroup_single(t, f, 0.0, SimConfig(n_paths=2000, horizon=0.3,
                                                       seed=12))
    assert a.value != c.value
    # the chunk size is part of the configuration, not a tuning knob
    d = estimate_semigroup_single(t, f, 0.0, SimConfig(n_paths=2000, horizon=0.3,
                                                       seed=11, chunk=1000))
    assert a.value != d.value


# ---------------------------------------------------------------------------
# worst-case dynamic programming
# ---------------------------------------------------------------------------

def test_dp_preserves_constants():
    us = _const_set(LevyTriplet.d1(0.5, 1.0, Atoms.of((0.7, 1.0))),
                    LevyTriplet.d1(-0.5, 2.0))
    g = Grid(1, 4.0, 81)
    out = dp_sup_semigroup(us, lambda m: np.full(m.shape[0], 4.0), g,
                           SimConfig(horizon=0.2, delta=0.02))
    np.testing.assert_allclose(out.values, 4.0, atol=1e-12)


def test_dp_zero_horizon_returns_samples():
    us = _const_set(LevyTriplet.d1(0.0, 1.0))
    g = Grid(1, 2.0, 21)
    info = {}
    out = dp_sup_semigroup(us, lambda m: m[:, 0], g,
                           SimConfig(horizon=0.0), info=info)
    np.testing.assert_allclose(out.values, g.axis())
    assert info["n_steps"] == 0


def test_dp_monotone_in_data():
    us = _const_set(LevyTriplet.d1(0.3, 1.0), LevyTriplet.d1(-0.3, 0.5))
    g = Grid(1, 4.0, 81)
    cfg = SimConfig(horizon=0.1, delta=0.02)
    lo = dp_sup_semigroup(us, lambda m: np.tanh(m[:, 0]), g, cfg)
    hi = dp_sup_semigroup(us, lambda m: np.tanh(m[:, 0]) + 0.25, g, cfg)
    assert float(np.min(hi.values - lo.values)) >= -1e-12


def test_dp_single_member_matches_fft_oracle():
    # the interpolation bias scales like steps * dx^2, so the grid is fine
    t = LevyTriplet.d1(0.0, 1.0)
    us = _const_set(t)
    g = Grid(1, 8.0, 641)
    cfg = SimConfig(horizon=0.2, delta=0.01)
    info = {}
    got = dp_sup_semigroup(us, gaussian_bump(width=1.0), g, cfg, info=info)
    want, _ = fft_semigroup(t, Field.sample(g, gaussian_bump(width=1.0).value), 0.2)
    inner = slice(80, 561)
    err = float(np.max(np.abs(got.values[inner] - want.values[inner])))
    assert err < 1e-3
    assert info["methods"]["m0"].startswith("quadrature")


def test_dp_matches_single_path_estimate():
    t = LevyTriplet.d1(0.2, 0.6, Atoms.of((0.8, 0.5)))
    us = _const_set(t)
    g = Grid(1, 8.0, 641)
    cfg = SimConfig(horizon=0.25, delta=0.01, n_paths=40_000, seed=3)
    dp = dp_sup_semigroup(us, gaussian_bump(width=1.0), g, cfg)
    mc = estimate_semigroup_single(t, gaussian_bump(width=1.0).value, 0.0, cfg)
    x0_idx = 320
    assert abs(dp.values[x0_idx] - mc.value) < 4 * mc.std_error + 1e-3


def test_dp_two_member_worst_case_dominates_each_member():
    us = _const_set(LevyTriplet.d1(0.0, 0.5), LevyTriplet.d1(0.0, 2.0))
    g = Grid(1, 6.0, 121)
    cfg = SimConfig(horizon=0.2, delta=0.01)
    both = dp_sup_semigroup(us, gaussian_bump(width=1.0), g, cfg)
    for q in (0.5, 2.0):
        one = dp_sup_semigroup(_const_set(LevyTriplet.d1(0.0, q)),
                               gaussian_bump(width=1.0), g, cfg)
        assert float(np.min(both.values - one.values)) >= -1e-12


def test_dp_step_count_adjustment_reported():
    us = _const_set(LevyTriplet.d1(0.0, 1.0))
    g = Grid(1, 2.0, 21)
    info = {}
    dp_sup_semigroup(us, lambda m: m[:, 0] * 0.0, g,
                     SimConfig(horizon=1.0, delta=0.3), info=info)
    assert info["n_steps"] == 4
    assert abs(info["delta"] - 0.25) < 1e-15


def test_dp_drift_member_runs():
    base = LevyTriplet.d1(0.0, 1.0)
    fld = CoefficientField.affine_drift("aff", base, [[-0.5]])
    us = UncertaintySet.of(fld)
    g = Grid(1, 4.0, 81)
    info = {}
    out = dp_sup_semigroup(us, gaussian_bump(width=1.0), g,
                           SimConfig(horizon=0.1, delta=0.02), info=info)
    assert np.all(np.isfinite(out.values))
    assert info["methods"]["aff"].startswith("quadrature")


def test_dp_rejects_general_structure():
    fld = CoefficientField.function_field(
        "gen", lambda x: LevyTriplet.d1(float(x[0]), 1.0), dim=1)
    us = UncertaintySet.of(fld)
    g = Grid(1, 2.0, 21)
    with pytest.raises(SimulationError, match="constant"):
        dp_sup_semigroup(us, lambda m: m[:, 0], g, SimConfig(horizon=0.1))


# ---------------------------------------------------------------------------
# Wilson bound and the Fourier constant
# ---------------------------------------------------------------------------

def test_wilson_upper_closed_forms():
    z = Z_99
    n = 100
    assert abs(wilson_upper(0, n) - z * z / (n + z * z)) < 1e-15
    assert abs(wilson_upper(n, n) - 1.0) < 1e-15
    ups = [wilson_upper(k, n) for k in range(0, n + 1, 10)]
    assert all(a < b for a, b in zip(ups, ups[1:]))
    assert wilson_upper(10, 100) > 0.1     # upper endpoint exceeds the MLE
    with pytest.raises(ValidationError):
        wilson_upper(0, 0)


def test_constant_c_frozen_mollifier():
    c = constant_c(mollifier(1))
    assert abs(c - 64.88490716275122) < 1e-8


def test_constant_c_gaussian_closed_form():
    # unit-mass transform of a width-w bump: c = 2 (1 + 1/w^2) in d=1
    assert abs(constant_c(gaussian_bump(width=1.0)) - 4.0) < 1e-6
    assert abs(constant_c(gaussian_bump(width=0.5)) - 10.0) < 1e-6
    # and 2 (1 + 2/w^2) in d=2
    assert abs(constant_c(gaussian_bump(width=1.0, dim=2)) - 6.0) < 1e-6


def test_constant_c_at_least_two():
    for bump in (mollifier(1), gaussian_bump(width=1.0), mollifier(2)):
        assert constant_c(bump) >= 2.0 - 1e-9


def test_constant_c_frozen_mollifier_2d():
    c = constant_c(mollifier(2))
    assert abs(c - 333.427165744024) < 1e-6


def test_constant_c_direct_quadrature_cross_check():
    # same integral by plain quadrature: Gauss-Legendre in x for the
    # transform, trapezoid in xi for the weighted mass.  Slow decay of
    # the mollifier spectrum (kinky integrand) keeps agreement to ~0.1%.
    bump = mollifier(1)
    nodes, weights = np.polynomial.legendre.leggauss(2000)
    x = nodes  # support is [-1, 1] already
    fx = bump.value(x[:, None]) * weights
    xi = np.arange(0.0, 2000.0, 0.1)
    hat = np.empty_like(xi)
    for lo in range(0, xi.size, 8000):
        block = xi[lo:lo + 8000]
        hat[lo:lo + 8000] = np.cos(np.outer(block, x)) @ fx
    hat /= 2.0 * np.pi
    direct = 2.0 * np.trapezoid((1.0 + xi**2) * np.abs(hat), xi) * 2.0
    c = constant_c(bump)
    assert abs(direct - c) / c < 1e-2


def test_constant_c_refuses_unresolved_bump():
    with pytest.raises(SimulationError, match="tail"):
        constant_c(gaussian_bump(width=1e-3))


def test_constant_c_dimension_mismatch():
    with pytest.raises(ValidationError):
        constant_c(mollifier(2), dim=1)


# ---------------------------------------------------------------------------
# maximal inequality check
# ---------------------------------------------------------------------------

def test_max_inequality_zero_triplet_passes_zero_bound():
    us = _const_set(LevyTriplet.d1(0.0, 0.0))
    rows = maximal_inequality_check(us, 0.0, 0.5, [0.5, 1.0],
                                    SimConfig(n_paths=500, delta=0.05))
    for row in rows:
        assert row["emp_prob"] == 0.0
        assert row["bound"] == 0.0
        assert row["passed"]


def test_max_inequality_brownian_rows():
    us = _const_set(LevyTriplet.d1(0.0, 1.0), LevyTriplet.d1(0.5, 0.5))
    info = {}
    cfg = SimConfig(n_paths=2000, delta=5e-3, seed=2)
    rows = maximal_inequality_check(us, 0.0, 0.25, [1.0, 2.0], cfg, info=info)
    assert len(rows) == 2
    assert rows[0]["r"] == 1.0 and rows[1]["r"] == 2.0
    for row in rows:
        assert row["n_strategies"] == 3          # two members + switching
        assert row["wilson_upper"] >= row["emp_prob"]
        assert row["passed"]
    assert info["labels"][-1] == "switching"
    assert abs(info["c"] - 64.88490716275122) < 1e-8


def test_max_inequality_empirical_matches_reflection():
    # P(sup |B_s| >= r on [0, t]) via the barrier series, within noise + O(sqrt(delta))
    us = _const_set(LevyTriplet.d1(0.0, 1.0))
    t, r = 0.25, 1.0
    cfg = SimConfig(n_paths=4000, delta=1e-3, seed=5)
    rows = maximal_inequality_check(us, 0.0, t, [r], cfg,
                                    include_switching=False)
    series = sum((-1.0) ** ((k - 1) // 2) / k * math.exp(-k * k * math.pi ** 2
                                                         * t / (8 * r * r))
                 for k in (1, 3, 5, 7))
    want = 1.0 - 4.0 / math.pi * series
    assert abs(rows[0]["emp_prob"] - want) < 0.015


def test_max_inequality_radii_validation():
    us = _const_set(LevyTriplet.d1(0.0, 1.0))
    with pytest.raises(ValidationError):
        maximal_inequality_check(us, 0.0, 0.1, [], SimConfig(n_paths=10))
    with pytest.raises(ValidationError):
        maximal_inequality_check(us, 0.0, 0.1, [-1.0], SimConfig(n_paths=10))


def test_max_inequality_drift_member_runs():
    base = LevyTriplet.d1(0.0, 1.0)
    us = UncertaintySet.of(CoefficientField.constant_field("c", base),
                           CoefficientField.affine_drift("a", base, [[-1.0]]))
    rows = maximal_inequality_check(us, 0.0, 0.1, [1.5],
                                    SimConfig(n_paths=400, delta=0.01))
    assert rows[0]["n_strategies"] == 3


# ---------------------------------------------------------------------------
# stopped-process residual
# ---------------------------------------------------------------------------

def test_dynkin_constant_function_is_exact_zero():
    t = LevyTriplet.d1(0.5, 1.0, Atoms.of((0.4, 1.0)))
    one = quadratic(box_radius=3.0)
    const = type(one)(lambda p: np.full(p.shape[0], 2.0),
                      lambda p: np.zeros_like(p),
                      lambda p: np.zeros((p.shape[0], 1, 1)),
                      (2.0, 0.0, 0.0), 1)
    est = dynkin_residual(t, const, 0.0, 0.2, 1.0,
                          SimConfig(n_paths=500, delta=0.02))
    assert est.value == 0.0 and est.std_error == 0.0


def test_dynkin_brownian_quadratic_unbiased():
    # f = x^2 under Brownian motion: the skeleton optional-stopping identity
    # is exact, so the residual is pure Monte-Carlo noise
    t = LevyTriplet.d1(0.0, 1.0)
    f = quadratic(box_radius=6.0)
    info = {}
    est = dynkin_residual(t, f, 0.0, 0.5, 2.0,
                          SimConfig(n_paths=20_000, delta=1e-3, seed=7),
                          info=info)
    assert abs(est.value) < 4 * est.std_error + 1e-9
    assert 0.0 <= info["exit_fraction"] <= 1.0
    assert info["n_steps"] == 500
    assert math.isfinite(info["bias_bound"]) and info["bias_bound"] >= 0.0


def test_dynkin_compensated_poisson_unbiased():
    t = LevyTriplet.d1(0.0, 0.0, Atoms.of((1.0, 2.0)))
    f = quadratic(box_radius=8.0)
    est = dynkin_residual(t, f, 0.0, 0.5, 3.0,
                          SimConfig(n_paths=20_000, delta=1e-3, seed=8))
    assert abs(est.value) < 4 * est.std_error + 1e-9


def test_dynkin_bump_residual_within_bias_budget():
    t = LevyTriplet.d1(0.3, 0.8, Atoms.of((0.5, 1.0)))
    f = gaussian_bump(width=1.0)
    info = {}
    est = dynkin_residual(t, f, 0.0, 0.4, 2.5,
                          SimConfig(n_paths=30_000, delta=2e-3, seed=9),
                          info=info)
    assert abs(est.value) < 4 * est.std_error + info["bias_bound"] + 1e-3


def test_dynkin_validation():
    t = LevyTriplet.d1(0.0, 1.0)
    f = quadratic(box_radius=3.0)
    with pytest.raises(ValidationError):
        dynkin_residual(t, f, 0.0, 0.0, 1.0, SimConfig(n_paths=10))
    with pytest.raises(ValidationError):
        dynkin_residual(t, f, 0.0, 1.0, -1.0, SimConfig(n_paths=10))


def test_dynkin_reproducible():
    t = LevyTriplet.d1(0.0, 1.0, Atoms.of((0.6, 1.0)))
    f = gaussian_bump(width=1.0)
    cfg = SimConfig(n_paths=3000, delta=5e-3, seed=21)
    a = dynkin_residual(t, f, 0.0, 0.2, 1.5, cfg)
    b = dynkin_residual(t, f, 0.0, 0.2, 1.5, cfg)
    assert a == b
