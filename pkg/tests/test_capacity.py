"""Capacities, equilibrium potentials, measure splits, quasi-supports."""

import numpy as np
import pytest

from dirichletlab import ValidationError, build_form, energy, energy_1, minimal_edm
from dirichletlab.capacity import (capacity, capacity0, capacity_qp_oracle,
                                   energy_dominance_of_m0,
                                   full_quasi_support_check, split_measure,
                                   transience_check, weak_cap_inequality_check,
                                   zero_capacity_set, zero_level_check)
from dirichletlab.fixtures import (random_connected_form, random_form,
                                   three_point_inactive_form, two_point_form)


def null_point_fixture():
    """Three points: an edge pair with killing, plus an isolated point
    with zero base mass (zero capacity)."""
    c = np.zeros((3, 3))
    c[0, 1] = c[1, 0] = 1.0
    return build_form(c, killing=[1.0, 0.0, 0.0], base_measure=[1.0, 1.0, 0.0],
                      allow_null_base=True)


class TestCapacity:
    def test_two_point_worked_value(self):
        form = two_point_form()
        rep = capacity(form, [0])
        assert rep.value == 1.5
        np.testing.assert_allclose(rep.potential, [1.0, 0.5])
        assert rep.kkt_min_multiplier >= 0.0

    def test_all_points(self):
        form = two_point_form(kappa=(0.5, 0.0), mu=(1.0, 2.0))
        rep = capacity(form, [0, 1])
        np.testing.assert_allclose(rep.potential, 1.0)
        assert rep.value == pytest.approx(0.5 + 3.0, rel=1e-12)

    def test_singleton_at_least_mu(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            form = random_form(rng)
            x = int(rng.integers(form.n))
            assert capacity(form, [x]).value >= form.mu[x] - 1e-12

    def test_empty_set_rejected(self):
        with pytest.raises(ValidationError, match="nonempty"):
            capacity(two_point_form(), [])

    def test_matches_oracle_on_random_forms(self):
        rng = np.random.default_rng(1)
        for _ in range(40):
            form = random_form(rng, max_points=6)
            size = int(rng.integers(1, form.n + 1))
            A = rng.choice(form.n, size=size, replace=False)
            rep = capacity(form, A, cross_check=True)
            assert rep.oracle_value == pytest.approx(rep.value, rel=1e-8,
                                                     abs=1e-10)
            assert -1e-10 <= rep.potential.min() and rep.potential.max() <= 1 + 1e-10
            assert rep.value == pytest.approx(energy_1(form, rep.potential),
                                              rel=1e-12)

    def test_monotone_and_subadditive(self):
        rng = np.random.default_rng(2)
        for _ in range(60):
            form = random_form(rng, max_points=9)
            size_b = int(rng.integers(1, form.n + 1))
            B = rng.choice(form.n, size=size_b, replace=False)
            size_a = int(rng.integers(1, size_b + 1))
            A = rng.choice(B, size=size_a, replace=False)
            ca, cb = capacity(form, A).value, capacity(form, B).value
            assert ca <= cb + 1e-10 * max(1.0, cb)
            other = rng.choice(form.n, size=int(rng.integers(1, form.n + 1)),
                               replace=False)
            cu = capacity(form, np.union1d(A, other)).value
            co = capacity(form, other).value
            assert cu <= ca + co + 1e-9 * max(1.0, ca + co)


class TestCapacityZeroOrder:
    def test_two_point_with_killing(self):
        form = two_point_form(kappa=(1.0, 1.0))
        rep = capacity0(form, [0])
        assert rep.value == pytest.approx(1.5, rel=1e-12)
        assert rep.kind == "cap0"

    def test_requires_transience(self):
        form = two_point_form()  # no killing: constants are null
        with pytest.raises(ValidationError, match="transience required"):
            capacity0(form, [0])

    def test_all_points_gives_total_killing(self):
        form = two_point_form(kappa=(0.7, 0.4))
        rep = capacity0(form, [0, 1])
        assert rep.value == pytest.approx(1.1, rel=1e-12)

    def test_cap1_dominates_cap0(self):
        rng = np.random.default_rng(3)
        count = 0
        while count < 30:
            form = random_form(rng, killing_prob=0.9)
            if not transience_check(form)[0]:
                continue
            count += 1
            A = [int(rng.integers(form.n))]
            assert capacity0(form, A).value <= capacity(form, A).value + 1e-10


class TestSplitMeasure:
    def test_standard_form_has_empty_zero_set(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            form = random_form(rng)
            assert len(zero_capacity_set(form)) == 0
            m = rng.uniform(0, 1, form.n)
            split = split_measure(form, m)
            np.testing.assert_array_equal(split.m0, m)
            assert np.all(split.m1 == 0.0)

    def test_null_point_mass_goes_to_m1(self):
        form = null_point_fixture()
        assert zero_capacity_set(form).tolist() == [2]
        # solver agrees with the structural zero-capacity criterion
        assert capacity(form, [2], cross_check=False).value == pytest.approx(0.0, abs=1e-12)
        assert capacity(form, [0], cross_check=False).value > 0.1
        m = np.array([0.5, 0.25, 2.0])
        split = split_measure(form, m)
        np.testing.assert_array_equal(split.m1, [0.0, 0.0, 2.0])
        np.testing.assert_array_equal(split.m0 + split.m1, m)
        again = split_measure(form, split.m0)
        np.testing.assert_array_equal(again.m0, split.m0)
        assert np.all(again.m1 == 0.0)

    def test_zero_measure(self):
        form = null_point_fixture()
        split = split_measure(form, np.zeros(3))
        assert np.all(split.m0 == 0.0) and np.all(split.m1 == 0.0)


class TestDominanceOfM0:
    def test_standard_minimal_edm(self):
        form = two_point_form()
        rep = energy_dominance_of_m0(form, minimal_edm(form))
        assert rep.passed and rep.m0_dominant

    def test_fixture_with_m1_mass(self):
        form = null_point_fixture()
        m = np.array([0.5, 0.25, 2.0])  # dominant: active points covered
        rep = energy_dominance_of_m0(form, m)
        assert rep.passed
        assert rep.gamma_charge_on_zero_set == 0.0

    def test_nondominant_rejected(self):
        form = two_point_form()
        with pytest.raises(ValidationError, match="not energy dominant"):
            energy_dominance_of_m0(form, np.array([1.0, 0.0]))


class TestQuasiSupport:
    def test_irreducible_minimal_edm(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            form = random_connected_form(rng)
            rep = full_quasi_support_check(form, minimal_edm(form))
            assert rep.full and rep.reference_passes
            assert rep.hypothesis in ("irreducible", "transient")

    def test_missing_point(self):
        form = two_point_form()
        rep = full_quasi_support_check(form, np.array([1.0, 0.0]))
        assert not rep.full
        assert rep.missing_points.tolist() == [1]

    def test_disconnected_without_killing_rejected(self):
        c = np.zeros((4, 4))
        c[0, 1] = c[1, 0] = 1.0
        c[2, 3] = c[3, 2] = 1.0
        form = build_form(c)
        with pytest.raises(ValidationError, match="hypothesis"):
            full_quasi_support_check(form, np.ones(4))


class TestZeroLevel:
    def test_zero_function(self):
        form = two_point_form()
        rep = zero_level_check(form, np.zeros(2))
        assert rep.passed

    def test_inactive_support(self):
        form = three_point_inactive_form()
        u = np.array([0.0, 0.0, 5.0])
        rep = zero_level_check(form, u)
        assert rep.passed
        assert rep.mass_on_zero_level == 0.0

    def test_hypothesis_failure_named(self):
        form = two_point_form()
        with pytest.raises(ValidationError, match="Gamma\\(u\\)\\(1\\)"):
            zero_level_check(form, np.array([0.0, 1.0]))

    def test_jump_symmetry_bound(self):
        form = three_point_inactive_form()
        rep = zero_level_check(form, np.array([0.0, 0.0, 2.0]))
        assert rep.jump_mass_zero_side <= rep.jump_mass_nonzero_side + 1e-14


class TestWeakCapacityInequality:
    def test_zero_function(self):
        form = two_point_form()
        rep = weak_cap_inequality_check(form, np.zeros(2), 0.5, np.ones(2))
        assert rep.passed and rep.lhs == 0.0

    def test_two_point_worked_example(self):
        form = two_point_form()
        rep = weak_cap_inequality_check(form, np.array([0.0, 1.0]), 0.5,
                                        np.ones(2))
        assert rep.level_set.tolist() == [1]
        assert rep.rhs == pytest.approx(4.0 * 2.0, rel=1e-12)
        assert rep.lhs == pytest.approx(1.5, rel=1e-12)
        assert rep.passed

    def test_random_instances(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            form = random_form(rng, max_points=8)
            u = rng.uniform(-2, 2, form.n)
            eps = rng.uniform(0.1, 1.5)
            m = rng.uniform(0.1, 2.0, form.n)
            rep = weak_cap_inequality_check(form, u, eps, m)
            assert rep.passed

    def test_epsilon_positive(self):
        form = two_point_form()
        with pytest.raises(ValidationError, match="epsilon"):
            weak_cap_inequality_check(form, np.zeros(2), 0.0, np.ones(2))
