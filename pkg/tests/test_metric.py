import math

import numpy as np
import pytest

import oracles
from absdyn.drift import invariant_estimate
from absdyn.measures import AtomicMeasure, EmpiricalMeasure, dirac, exponential_grid, uniform_grid
from absdyn.metric import (
    ABCViolation,
    abc_check,
    decrease_experiment,
    fit_poly_rate,
    loglog_slopes,
    rate_bound,
    wasserstein_p,
    wasserstein_pp,
    wp_of_coupling,
)
from absdyn.transfer import Coupling2D, push_avg

BERN = AtomicMeasure([0.0, 1.0], [0.5, 0.5])


class TestWasserstein:
    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
    def test_diracs(self, p):
        assert wasserstein_p(dirac(0.0), dirac(2.5), p) == pytest.approx(2.5, abs=1e-15)

    def test_exponentials(self, exp1, exp2):
        assert wasserstein_p(exp1, exp2, 1) == pytest.approx(0.5, abs=1e-5)

    def test_exponentials_p2(self, exp1, exp2):
        # quantiles are -ln(1-u)/rate, so W_2^2 = (1 - 1/2)^2 E[ln(1-u)^2] = 2/4
        assert wasserstein_p(exp1, exp2, 2) == pytest.approx(math.sqrt(0.5), abs=1e-4)

    def test_bernoulli_vs_midpoint(self):
        assert wasserstein_p(BERN, dirac(0.5), 1) == pytest.approx(0.5, abs=1e-15)

    def test_against_quadrature(self, exp1):
        u = uniform_grid(0.0, 2.0, x_max=30.0, n=2**14)
        ref = oracles.integrate_w1_quantiles(lambda s: -math.log1p(-s), lambda s: 2.0 * s)
        assert wasserstein_p(exp1, u, 1) == pytest.approx(ref, abs=1e-5)

    def test_pp_and_p(self, exp1, exp2):
        assert wasserstein_pp(exp1, exp2, 2) == pytest.approx(wasserstein_p(exp1, exp2, 2) ** 2, rel=1e-12)

    def test_lp_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            a = AtomicMeasure(rng.random(4) * 2, rng.dirichlet(np.ones(4)))
            b = AtomicMeasure(rng.random(3) * 2, rng.dirichlet(np.ones(3)))
            lp = oracles.lp_transport_pp(a.locs, a.weights, b.locs, b.weights, 2.0)
            assert wasserstein_pp(a, b, 2.0) == pytest.approx(lp, abs=1e-9)

    def test_empirical(self):
        a = EmpiricalMeasure([0.0, 1.0, 2.0])
        b = EmpiricalMeasure([0.5, 1.5, 2.5])
        assert wasserstein_p(a, b, 1) == pytest.approx(0.5)

    def test_p_below_one(self):
        with pytest.raises(ValueError):
            wasserstein_p(BERN, BERN, 0.5)


class TestCouplingCost:
    def test_unit_gap(self):
        assert wp_of_coupling(Coupling2D.from_atoms([(0.0, 1.0, 1.0)]), 2) == 1.0

    def test_diagonal(self):
        assert wp_of_coupling(Coupling2D.from_atoms([(0.3, 0.3, 0.5), (2.0, 2.0, 0.5)]), 1) == 0.0

    def test_product_coupling(self):
        g = Coupling2D.product(BERN, BERN)
        assert wp_of_coupling(g, 1) == pytest.approx(0.5)
        assert wasserstein_p(*g.marginals(), 1) == 0.0


class TestDecrease:
    def test_equal_inputs(self, exp2):
        assert decrease_experiment(exp2, exp2, exponential_grid(1.0, 30.0, 2**14), 1, 3) == [0.0] * 4

    def test_exponential_strict(self, exp1, exp2, exp3):
        ws = decrease_experiment(exp2, exp3, exp1, 1, 10)
        assert len(ws) == 11
        assert ws[0] == pytest.approx(1 / 2 - 1 / 3, abs=1e-5)
        assert all(a > b for a, b in zip(ws, ws[1:]))

    def test_dirac_reference_is_nonstrict(self):
        ws = decrease_experiment(dirac(0.0), dirac(0.5), dirac(2.0), 1, 6)
        assert ws == pytest.approx([0.5] * 7, abs=1e-15)

    def test_nonincreasing_atomic(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            mu = AtomicMeasure(rng.random(3) * 2, rng.dirichlet(np.ones(3)))
            rho = AtomicMeasure(rng.random(3) * 2, rng.dirichlet(np.ones(3)))
            pi = AtomicMeasure(rng.random(3) * 2, rng.dirichlet(np.ones(3)))
            ws = decrease_experiment(rho, pi, mu, 2, 5)
            assert all(b <= a + 1e-12 for a, b in zip(ws, ws[1:]))


class TestABC:
    def test_uniform_probe_exact(self, unif):
        wit = abc_check(unif, 0.5, 1.0, 0.5, intervals=[(0.2, 0.6)])
        probe = wit.interval_probe[0]
        assert (probe.L, probe.U) == pytest.approx((0.3, 0.5))
        assert probe.margin_mass == pytest.approx(0.0, abs=1e-12)
        assert probe.margin_geom >= -1e-12

    def test_uniform_random_probes(self, unif):
        wit = abc_check(unif, 0.5, 1.0, 0.5, probes=500, seed=3)
        assert len(wit.interval_probe) == 500
        assert all(p.x < p.L < p.U < p.y for p in wit.interval_probe)

    def test_uniform_large_c_fails(self, unif):
        with pytest.raises(ABCViolation) as err:
            abc_check(unif, 0.5, 1.0, 0.9, intervals=[(0.2, 0.6)])
        assert err.value.probe.margin_mass == pytest.approx(0.2 - 0.9 * 0.4, abs=1e-12)

    def test_exponential_wide_interval_violates(self):
        # mass ratio of any admissible candidate decays like exp(-kappa w)
        expo = exponential_grid(1.0, 40.0, 2**16)
        kappa, c = 0.2, 1.0
        big_c = min(math.exp(-c) * (1.0 - math.exp(-1.0)), oracles.exp_abc_iota(kappa, c))
        with pytest.raises(ABCViolation):
            abc_check(expo, 1.0 - 2.0 * kappa, 1.0, big_c, c=c, intervals=[(0.0, 10.0)])

    def test_exponential_short_interval_passes(self):
        expo = exponential_grid(1.0, 40.0, 2**16)
        abc_check(expo, 0.6, 1.0, 0.2, c=1.0, intervals=[(0.0, 1.0), (3.0, 5.0)])

    def test_bad_constants(self, unif):
        with pytest.raises(ValueError):
            abc_check(unif, 1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            abc_check(unif, 0.5, 1.0, 0.5, intervals=[(0.6, 0.2)])


class TestRates:
    def test_induction_bound(self):
        rb = rate_bound(1.0, 0.0, 1.0, 0.1, 1.0, 100)
        assert rb.values[100] <= 1.0 / 11.0
        assert np.all(rb.values <= rb.closed_bound + 1e-15)

    def test_zero_rate(self):
        rb = rate_bound(0.7, 1.0 - 1e-16, 1.0, 1e-300, 1.0, 10)
        assert np.allclose(rb.values, 0.7)

    def test_nonincreasing_nonnegative(self):
        rb = rate_bound(50.0, 0.2, 2.0, 0.9, 1.0, 50)
        assert np.all(np.diff(rb.values) <= 0) and np.all(rb.values >= 0)

    def test_fit_power_law(self):
        k = np.arange(1, 201, dtype=float)
        assert fit_poly_rate(k**-2.0, offset=1) == pytest.approx(-2.0, abs=0.05)

    def test_fit_constant(self):
        assert fit_poly_rate(np.full(64, 0.3)) == pytest.approx(0.0, abs=0.05)

    def test_fit_rate_bound(self):
        rb = rate_bound(1.0, 0.0, 1.0, 0.1, 1.0, 1000)
        assert fit_poly_rate(rb.values) <= -0.9

    def test_fit_rejects(self):
        with pytest.raises(ValueError):
            fit_poly_rate(np.ones(8))
        with pytest.raises(ValueError):
            fit_poly_rate(np.r_[np.ones(20), 0.0])

    def test_loglog_slopes_length(self):
        s = loglog_slopes(1.0 / np.arange(1, 20))
        assert s.size == 19

    def test_one_step_recursion_at_invariant(self, unif):
        # invariant estimate for the uniform reference against a far start
        pi_star = invariant_estimate(unif, 0.3, 1000, 4000, seed=0).as_atomic()
        rho = AtomicMeasure([0.05, 0.95], [0.5, 0.5])
        A, B, C, p = 0.5, 1.0, 0.5, 1.0
        abc_check(unif, A, B, C, probes=200, seed=1)
        before = wasserstein_pp(pi_star, rho, p)
        after = wasserstein_pp(push_avg(pi_star, unif), push_avg(rho, unif), p)
        bound = before - C * (1 - A**p) * wasserstein_p(pi_star, rho, p) ** (p + B)
        assert after <= bound + 2 * 0.02
