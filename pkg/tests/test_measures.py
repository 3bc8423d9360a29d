import json
import math

import numpy as np
import pytest

from absdyn.measures import (
    AtomicMeasure,
    EmpiricalMeasure,
    GridMeasure,
    TailMassError,
    TrivialMeasureError,
    cdf,
    dirac,
    dump_measure,
    exponential_atoms,
    exponential_grid,
    grid_mixture,
    load_measure,
    measure_from_dict,
    moments,
    partial_mean,
    quantile,
    require_nontrivial,
    sample,
    uniform_grid,
)

BERN = AtomicMeasure([0.0, 1.0], [0.5, 0.5])


class TestAtomic:
    def test_half_open_cdf_excludes_atom(self):
        assert cdf(BERN, 1.0) == 0.5
        assert BERN.cdf_right(1.0) == 1.0

    def test_cdf_at_zero_counts_atom_only_past_zero(self):
        assert cdf(BERN, 0.0) == 0.0
        assert cdf(BERN, 1e-12) == 0.5

    def test_partial_mean_half_open(self):
        assert partial_mean(BERN, 1.0) == 0.0
        assert partial_mean(BERN, 1.5) == 0.5

    def test_quantiles(self):
        assert quantile(BERN, 0.25) == 0.0
        assert quantile(BERN, 0.75) == 1.0

    def test_moments(self):
        m = moments(BERN)
        assert (m.mean, m.second_moment, m.variance) == (0.5, 0.5, 0.25)
        # quantile(1/2) = inf{y: F(y) >= 1/2} = 0 with the right-closed F
        assert m.median == 0.0

    def test_dirac_moments(self):
        m = moments(dirac(0.0))
        assert (m.mean, m.second_moment, m.variance, m.median) == (0.0, 0.0, 0.0, 0.0)

    def test_merge_and_sort(self):
        a = AtomicMeasure([1.0, 0.0, 1.0 + 1e-12], [0.25, 0.5, 0.25])
        assert a.locs.tolist() == pytest.approx([0.0, 1.0])
        assert a.weights.tolist() == [0.5, 0.5]

    def test_zero_weights_dropped(self):
        assert len(AtomicMeasure([0.0, 2.0, 3.0], [0.5, 0.0, 0.5])) == 2

    @pytest.mark.parametrize(
        "locs,weights",
        [([0.0, 1.0], [0.5, 0.6]), ([-1.0, 1.0], [0.5, 0.5]), ([0.0, 1.0], [1.5, -0.5]), ([], [])],
    )
    def test_rejects_invalid(self, locs, weights):
        with pytest.raises(ValueError):
            AtomicMeasure(locs, weights)

    def test_immutable(self):
        with pytest.raises(ValueError):
            BERN.locs[0] = 3.0

    def test_quantile_domain(self):
        for u in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                quantile(BERN, u)


class TestGrid:
    def test_exponential_cdf_and_quantile(self, exp1):
        assert cdf(exp1, math.log(2.0)) == pytest.approx(0.5, abs=1e-6)
        assert quantile(exp1, 0.5) == pytest.approx(math.log(2.0), abs=1e-6)

    def test_exponential_partial_means(self, exp1):
        assert partial_mean(exp1, 1.0) == pytest.approx(1.0 - 2.0 * math.exp(-1.0), abs=1e-6)
        assert partial_mean(exp1, 1e9) == pytest.approx(1.0, abs=1e-6)

    def test_exponential_moments(self, exp1):
        m = moments(exp1)
        assert m.mean == pytest.approx(1.0, abs=1e-6)
        assert m.second_moment == pytest.approx(2.0, abs=1e-5)
        assert m.variance == pytest.approx(1.0, abs=1e-5)
        assert m.median == pytest.approx(math.log(2.0), abs=1e-6)

    def test_atomless_cdf_at_zero(self, exp1):
        assert cdf(exp1, 0.0) == 0.0

    def test_mass_invariant(self):
        with pytest.raises(ValueError):
            GridMeasure(1.0, 4, [1.0, 1.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            GridMeasure(1.0, 2, [-1.0, 3.0])

    def test_tail_guard(self):
        g = exponential_grid(1.0, 5.0, 256)
        assert g.tail_mass == pytest.approx(math.exp(-5.0))
        with pytest.raises(TailMassError):
            g.check_tail()
        assert g.renormalized().tail_mass == 0.0

    def test_regrid_preserves_mass_and_cdf(self, exp1):
        r = exp1.regrid(40.0, 2**12)
        assert r.h * r.values.sum() + r.tail_mass == pytest.approx(1.0, abs=1e-12)
        for y in (0.5, 2.0, 7.3):
            assert r.cdf(y) == pytest.approx(exp1.cdf(y), abs=1e-4)

    def test_mixture(self, exp1, exp2):
        mix = grid_mixture([exp1, exp2], [0.25, 0.75])
        assert mix.mean == pytest.approx(0.25 + 0.75 * 0.5, abs=1e-6)

    def test_uniform_exact(self):
        u = uniform_grid(0.0, 1.0, x_max=2.0, n=64)
        assert u.cdf(0.3) == pytest.approx(0.3, abs=1e-15)
        assert u.mean == pytest.approx(0.5, abs=1e-15)

    def test_tail_decay(self, exp1):
        # y (1 - m(y)) -> 0, bounded by the tail mean beyond y
        for y in (5.0, 10.0, 20.0):
            tail_mean = exp1.mean - exp1.partial_mean(y)
            assert y * (1.0 - exp1.cdf(y)) <= 10.0 * tail_mean


class TestExponentialAtoms:
    def test_mean_is_exact(self):
        a = exponential_atoms(1.0, 40.0, 2**12)
        assert a.mean == pytest.approx(1.0, abs=1e-12)

    def test_cdf_at_cell_edges(self):
        a = exponential_atoms(2.0, 30.0, 300)
        assert a.cdf(1.0) == pytest.approx(-math.expm1(-2.0), abs=1e-12)


class TestEmpirical:
    def test_sorted_and_nonempty(self):
        e = EmpiricalMeasure([3.0, 1.0, 2.0])
        assert e.samples.tolist() == [1.0, 2.0, 3.0]
        with pytest.raises(ValueError):
            EmpiricalMeasure([])

    def test_quantile_convention(self):
        e = EmpiricalMeasure([0.0, 1.0])
        assert e.quantile(0.5) == 0.0
        assert e.quantile(0.51) == 1.0


class TestSampling:
    def test_dirac_samples(self):
        assert sample(dirac(0.0), 3, 5).samples.tolist() == [0.0] * 5

    def test_bernoulli_fraction(self):
        s = sample(BERN, 123, 10**5)
        assert np.mean(s.samples == 1.0) == pytest.approx(0.5, abs=0.01)

    def test_determinism(self):
        a = sample(uniform_grid(), 9, 100).samples
        b = sample(uniform_grid(), 9, 100).samples
        assert np.array_equal(a, b)

    def test_nontrivial(self):
        with pytest.raises(TrivialMeasureError):
            require_nontrivial(dirac(2.0))
        require_nontrivial(BERN)


class TestSerialization:
    @pytest.mark.parametrize(
        "m",
        [BERN, uniform_grid(0.0, 1.0, n=16), EmpiricalMeasure([0.1, 0.4, 0.4])],
        ids=["atomic", "grid", "empirical"],
    )
    def test_roundtrip(self, m, tmp_path):
        path = tmp_path / "m.json"
        dump_measure(m, path)
        back = load_measure(path)
        assert back.to_dict() == m.to_dict()
        assert json.loads(path.read_text())["type"] == m.to_dict()["type"]

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            measure_from_dict({"type": "spline"})
