"""Gasket forms: harmonic extension, cell measures, Kusuoka diagnostics."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize

from dirichletlab import ValidationError, energy
from dirichletlab.sg import (cell_energy_measure, cell_mutual_energy_measure,
                             harmonic_extend, harmonic_pair, kusuoka_measure,
                             local_truncation_equality, locality_check,
                             product_rule_defect, sg_level_form,
                             sg_restriction_indices, singularity_diagnostic)


def scipy_midpoint_oracle(boundary):
    """Minimize the raw level-1 edge sum with an off-the-shelf optimizer."""
    b = np.asarray(boundary, dtype=float)

    def raw(y):
        cells = [(b[0], y[0], y[1]), (y[0], b[1], y[2]), (y[1], y[2], b[2])]
        return sum((s[i] - s[j]) ** 2
                   for s in cells for i, j in ((0, 1), (0, 2), (1, 2)))

    res = minimize(raw, np.full(3, b.mean()), method="BFGS",
                   options={"gtol": 1e-14})
    return res.x, res.fun


class TestConstruction:
    def test_vertex_counts(self):
        for n, count in ((0, 3), (1, 6), (2, 15), (3, 42)):
            assert sg_level_form(n).graph.n == count

    def test_level_conductances(self):
        assert np.all(sg_level_form(0).graph.edge_c == 1.0)
        np.testing.assert_allclose(sg_level_form(1).graph.edge_c, 5.0 / 3.0)

    def test_base_measure_is_probability(self):
        for n in (0, 1, 4):
            assert sg_level_form(n).graph.mu.sum() == pytest.approx(1.0, rel=1e-12)

    def test_level_range_guard(self):
        with pytest.raises(ValidationError):
            sg_level_form(15)
        with pytest.raises(ValidationError):
            sg_level_form(-1)

    def test_edge_count(self):
        for n in (0, 1, 2, 3):
            assert sg_level_form(n).graph.n_edges == 3 ** (n + 1)


class TestHarmonicExtension:
    def test_constant_boundary(self):
        h = harmonic_extend([1.0, 1.0, 1.0], 3)
        np.testing.assert_allclose(h, 1.0)
        assert energy(sg_level_form(3).graph, h) == pytest.approx(0.0, abs=1e-14)

    def test_midpoint_rule_worked_example(self):
        form = sg_level_form(1)
        h = harmonic_extend([1.0, 0.0, 0.0], 1)
        assert sorted(np.round(h, 12)) == [0.0, 0.0, 0.2, 0.4, 0.4, 1.0]
        assert energy(form.graph, h) == pytest.approx(2.0, rel=1e-12)

    def test_matches_scipy_minimizer(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            b = rng.uniform(-2.0, 2.0, 3)
            y_opt, s_min = scipy_midpoint_oracle(b)
            h = harmonic_extend(b, 1)
            e0 = energy(sg_level_form(0).graph, b)
            # conductance factor recovered from the optimizer
            if s_min > 1e-12:
                assert e0 / s_min == pytest.approx(5.0 / 3.0, rel=1e-7)
            mids = sorted(v for v in np.round(h, 9) if v not in np.round(b, 9))
            assert mids == sorted(np.round(y_opt, 9)) or len(mids) <= 3

    def test_renormalization_across_levels(self):
        b = [1.0, 0.0, 0.0]
        for n in range(13):
            h = harmonic_extend(b, n)
            assert energy(sg_level_form(n).graph, h) == pytest.approx(
                2.0, rel=1e-9)

    def test_unique_minimizer_random_perturbations(self):
        n = 3
        form = sg_level_form(n)
        h = harmonic_extend([0.7, -0.4, 1.3], n)
        base = energy(form.graph, h)
        rng = np.random.default_rng(1)
        boundary = form.corner_ids
        for _ in range(100):
            delta = rng.normal(0.0, 0.1, form.graph.n)
            delta[boundary] = 0.0
            if np.abs(delta).max() < 1e-12:
                continue
            assert energy(form.graph, h + delta) > base


class TestCellMeasures:
    def test_constant_gives_zero(self):
        form = sg_level_form(2)
        cm = cell_energy_measure(form, np.full(form.graph.n, 3.0), 1)
        assert np.all(cm.masses == 0.0)

    def test_total_matches_energy(self):
        form = sg_level_form(4)
        rng = np.random.default_rng(2)
        f = rng.uniform(-1, 1, form.graph.n)
        for l in (0, 2, 4):
            cm = cell_energy_measure(form, f, l)
            assert cm.total() == pytest.approx(energy(form.graph, f), rel=1e-12)

    def test_refinement_additivity(self):
        form = sg_level_form(4)
        rng = np.random.default_rng(3)
        f = rng.uniform(-1, 1, form.graph.n)
        coarse = cell_energy_measure(form, f, 2).masses
        fine = cell_energy_measure(form, f, 3).masses
        np.testing.assert_allclose(fine.reshape(9, 3).sum(axis=1), coarse,
                                   rtol=1e-12)

    def test_harmonic_level1_masses(self):
        form = sg_level_form(1)
        h = harmonic_extend([1.0, 0.0, 0.0], 1)
        cm = cell_energy_measure(form, h, 1)
        assert cm.total() == pytest.approx(2.0, rel=1e-12)
        # corner cell keeps most of the energy
        assert cm.masses[0] > cm.masses[1]

    def test_mutual_polarization(self):
        form = sg_level_form(3)
        rng = np.random.default_rng(4)
        f, g = rng.uniform(-1, 1, form.graph.n), rng.uniform(-1, 1, form.graph.n)
        lhs = cell_mutual_energy_measure(form, f, g, 2).masses
        plus = cell_energy_measure(form, f + g, 2).masses
        minus = cell_energy_measure(form, f - g, 2).masses
        np.testing.assert_allclose(lhs, 0.25 * (plus - minus), rtol=1e-10,
                                   atol=1e-13)


class TestKusuoka:
    def test_level_zero_mass_one(self):
        cm = kusuoka_measure(0, 0)
        assert cm.masses.shape == (1,)
        assert cm.total() == pytest.approx(1.0, rel=1e-12)

    def test_probability_vector(self):
        for l in (1, 3, 6):
            cm = kusuoka_measure(l, l)
            assert np.all(cm.masses > 0.0)
            assert cm.total() == pytest.approx(1.0, rel=1e-12)

    def test_level_one_symmetric_level_two_not(self):
        # the dihedral symmetry forces equal level-1 masses; the measure
        # departs from the uniform weights from level 2 on
        m1 = kusuoka_measure(1, 1).masses
        np.testing.assert_allclose(m1, 1.0 / 3.0, rtol=1e-12)
        m2 = kusuoka_measure(2, 2).masses
        assert m2.max() / m2.min() > 1.5

    def test_refinement_stability_for_harmonics(self):
        np.testing.assert_allclose(kusuoka_measure(5, 3).masses,
                                   kusuoka_measure(3, 3).masses, rtol=1e-10)

    def test_harmonic_densities_finite(self):
        l = 4
        form = sg_level_form(l)
        m = kusuoka_measure(l, l).masses
        rng = np.random.default_rng(5)
        for _ in range(10):
            h = harmonic_extend(rng.uniform(-1, 1, 3), l)
            gm = cell_energy_measure(form, h, l).masses
            assert np.all(np.isfinite(gm / m))

    def test_orthonormal_pair(self):
        form = sg_level_form(2)
        h1, h2 = harmonic_pair(2)
        assert energy(form.graph, h1) == pytest.approx(1.0, rel=1e-12)
        assert energy(form.graph, h2) == pytest.approx(1.0, rel=1e-12)
        assert energy(form.graph, h1, h2) == pytest.approx(0.0, abs=1e-13)


class TestSingularityDiagnostic:
    def test_level_zero_conventions(self):
        rep = singularity_diagnostic(0)
        assert rep.log_ratios[0] == pytest.approx(0.0, abs=1e-12)
        assert rep.normalized_entropies[0] == 1.0

    def test_trends_to_level_eight(self):
        rep = singularity_diagnostic(8)
        assert rep.spread_nondecreasing
        assert rep.spreads[8] > 100.0
        ent = rep.normalized_entropies
        assert np.all(np.diff(ent[2:]) < 0.0)

    def test_level_cap(self):
        with pytest.raises(ValidationError):
            singularity_diagnostic(13)


class TestLocalTruncation:
    def test_alpha_above_range(self):
        form = sg_level_form(3)
        h = harmonic_extend([0.5, -0.5, 0.2], 3)
        rep = local_truncation_equality(form, h, 10.0, 2)
        assert rep.energy_tail == 0.0 and rep.inside_mass == 0.0
        assert rep.within_straddle

    def test_harmonic_defect_within_straddle(self):
        form = sg_level_form(5)
        h = harmonic_extend([1.0, 0.0, 0.0], 5)
        rep = local_truncation_equality(form, h, 0.5, 5)
        assert rep.within_straddle

    def test_plateau_exact_equality(self):
        # a function constant on whole cells: no straddling, exact match
        form = sg_level_form(2)
        f = np.zeros(form.graph.n)
        cell0 = form.cell_vertices[:3]  # the three level-2 cells of cell "0"
        f[np.unique(cell0)] = 2.0
        rep = local_truncation_equality(form, f, 1.0, 1)
        assert rep.energy_tail == pytest.approx(rep.inside_mass +
                                                rep.defect, abs=1e-15)
        assert rep.within_straddle


class TestValidators:
    def test_locality_of_clipped_transform(self):
        form = sg_level_form(4)
        h = harmonic_extend([1.0, 0.0, -1.0], 4)
        # soft threshold: vanishes identically on (-0.3, 0.3)
        rep = locality_check(form, h, lambda v: v - np.clip(v, -0.3, 0.3),
                             -0.3, 0.3, 3)
        assert rep.passed
        assert rep.inside_cells > 0

    def test_product_rule_defect_small_for_harmonics(self):
        form = sg_level_form(6)
        h1, h2 = harmonic_pair(6)
        rep = product_rule_defect(form, h1, h2, h1 + h2, 1)
        assert rep.relative_defect < 0.2

    def test_restriction_compatibility(self):
        rng = np.random.default_rng(6)
        for n in (1, 2, 3):
            fine = sg_level_form(n)
            coarse = sg_level_form(n - 1)
            idx = sg_restriction_indices(n)
            f = rng.uniform(-1, 1, fine.graph.n)
            assert energy(fine.graph, f) >= energy(coarse.graph, f[idx]) - 1e-12
            b = rng.uniform(-1, 1, 3)
            h = harmonic_extend(b, n)
            assert energy(fine.graph, h) == pytest.approx(
                energy(coarse.graph, h[idx]), rel=1e-12)
