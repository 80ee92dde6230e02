"""Energy dominant measures, energy densities and the measure-change quotient.

A measure m is energy dominant when every energy measure Gamma(f) has a
density with respect to m; on a finite space this means supp(m) covers
every point carrying an edge or killing.  The minimal such measure is the
one supported exactly on those points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (ABS_FLOOR, REL_TOL, GraphForm, NotEnergyDominantError,
                   ValidationError, as_vector, energy, energy_measure,
                   exact_sum, form_from_edges, support, validate_measure)


def _basis_gammas(form: GraphForm):
    """Energy measures of the indicator basis, one row per point."""
    out = np.zeros((form.n, form.n))
    eye = np.eye(form.n)
    for k in range(form.n):
        out[k] = energy_measure(form, eye[k], check="off")
    return out


def minimal_edm(form: GraphForm, family=None) -> np.ndarray:
    """Minimal energy dominant measure sum_n 2^-n Gamma(f_n).

    The spanning family defaults to the indicator basis; each member is
    rescaled to unit energy and members with zero energy are dropped.  The
    result vanishes exactly where every energy measure vanishes.
    """
    if family is None:
        family = [np.eye(form.n)[k] for k in range(form.n)]
    rescaled = []
    for f in family:
        f = as_vector(form, f)
        e = energy(form, f)
        if e > 0.0:
            rescaled.append(f / math.sqrt(e))
    if not rescaled:
        raise ValidationError(
            "degenerate form, no energy-dominant measure with nonempty support")
    m = np.zeros(form.n)
    for k, f in enumerate(rescaled, start=1):
        m += 2.0 ** (-k) * energy_measure(form, f, check="off")
    return m


@dataclass(frozen=True)
class DominanceReport:
    dominant: bool
    violations: np.ndarray  # active points with zero measure


def is_energy_dominant(form: GraphForm, m) -> DominanceReport:
    """m dominates iff every point charged by some basis energy measure has mass."""
    m = validate_measure(form, m)
    violations = np.flatnonzero(form.active_mask() & (m == 0.0))
    return DominanceReport(len(violations) == 0, violations)


@dataclass(frozen=True)
class MinimalityReport:
    minimal: bool
    extra_support: np.ndarray  # charged points never seen by energy measures


def is_minimal_edm(form: GraphForm, m) -> MinimalityReport:
    """Check m > 0 only where some basis energy measure charges.

    Requires m to be energy dominant; combined with dominance this makes
    the null sets of m exactly the common null sets of all Gamma(f).
    """
    m = validate_measure(form, m)
    rep = is_energy_dominant(form, m)
    if not rep.dominant:
        raise NotEnergyDominantError(
            f"measure is not energy dominant; uncovered points {rep.violations.tolist()}",
            witness=rep.violations)
    extra = np.flatnonzero((m > 0.0) & ~form.active_mask())
    return MinimalityReport(len(extra) == 0, extra)


@dataclass(frozen=True)
class DensityVector:
    """Pointwise density of an energy measure on the support of m.

    Points with zero reference mass are excluded rather than reported as
    zero; they lie outside the quotient space.
    """

    points: np.ndarray
    values: np.ndarray

    def integral(self, m) -> float:
        m = np.asarray(m, dtype=float)
        return exact_sum(self.values * m[self.points])

    def dense(self, n, fill=0.0) -> np.ndarray:
        out = np.full(n, fill)
        out[self.points] = self.values
        return out


def energy_density(form: GraphForm, f, m) -> DensityVector:
    """Gamma(f)/m on the support of m; errors where Gamma(f) escapes m."""
    m = validate_measure(form, m)
    gamma = energy_measure(form, as_vector(form, f))
    uncovered = np.flatnonzero((gamma > 0.0) & (m == 0.0))
    if len(uncovered):
        x = int(uncovered[0])
        raise NotEnergyDominantError(
            f"not energy dominant: Gamma(f)({x}) = {gamma[x]} but m({x}) = 0",
            witness=x)
    pts = support(m)
    return DensityVector(pts, gamma[pts] / m[pts])


@dataclass(frozen=True)
class QuotientForm:
    """Restriction of a form to the support of an energy dominant measure."""

    retained_points: np.ndarray
    form: GraphForm
    parent: GraphForm

    def project(self, f) -> np.ndarray:
        return as_vector(self.parent, f)[self.retained_points]

    def inject(self, f_quotient, fill=0.0) -> np.ndarray:
        out = np.full(self.parent.n, fill)
        out[self.retained_points] = np.asarray(f_quotient, dtype=float)
        return out


def change_measure(form: GraphForm, m, n_samples=100, seed=0) -> QuotientForm:
    """Descend the form to m-equivalence classes of functions.

    Well-definedness (energies agree for functions equal on supp m) holds
    exactly when every point outside supp(m) carries no edge and no
    killing.  The structural check is cross-validated by sampling random
    function pairs that agree on the support.
    """
    m = validate_measure(form, m)
    rep = is_energy_dominant(form, m)
    if not rep.dominant:
        x = int(rep.violations[0])
        f = np.zeros(form.n)
        f[x] = 1.0
        g = np.zeros(form.n)
        raise NotEnergyDominantError(
            f"m is not energy dominant: functions equal m-a.e. may differ in "
            f"energy, e.g. the indicator of point {x} "
            f"(E = {energy(form, f)}) versus zero (E = 0.0)",
            witness=(f, g))
    pts = support(m)
    pos = np.full(form.n, -1)
    pos[pts] = np.arange(len(pts))
    edges = [(int(pos[i]), int(pos[j]), float(c))
             for i, j, c in zip(form.edge_i, form.edge_j, form.edge_c)]
    quotient = form_from_edges(
        len(pts), edges, killing=form.kappa[pts], base_measure=m[pts],
        labels=[form.labels[i] for i in pts],
        positions=None if form.positions is None else form.positions[pts])

    rng = np.random.default_rng(seed)
    null = np.flatnonzero(m == 0.0)
    for _ in range(n_samples if len(null) else 0):
        f = rng.uniform(-1.0, 1.0, form.n)
        g = f.copy()
        g[null] = rng.uniform(-1.0, 1.0, len(null))
        if energy(form, f) != energy(form, g):
            raise NotEnergyDominantError(
                "sampled witness: energies differ for functions equal on supp(m)",
                witness=(f, g))
    return QuotientForm(pts, quotient, form)


@dataclass(frozen=True)
class TriangleReport:
    max_defect: float
    passed: bool


def density_triangle_check(form: GraphForm, f, g, m) -> TriangleReport:
    """Pointwise |Gamma(f)^1/2 - Gamma(g)^1/2| <= Gamma(f-g)^1/2 on supp(m)."""
    m = validate_measure(form, m)
    rep = is_energy_dominant(form, m)
    if not rep.dominant:
        raise NotEnergyDominantError("m is not energy dominant",
                                     witness=rep.violations)
    f, g = as_vector(form, f), as_vector(form, g)
    pts = support(m)
    df = energy_measure(form, f, check="off")[pts] / m[pts]
    dg = energy_measure(form, g, check="off")[pts] / m[pts]
    dfg = energy_measure(form, f - g, check="off")[pts] / m[pts]
    lhs = np.abs(np.sqrt(df) - np.sqrt(dg))
    rhs = np.sqrt(dfg)
    defect = float((lhs - rhs).max(initial=0.0))
    slack = REL_TOL * float(rhs.max(initial=0.0)) + 1e-7 * ABS_FLOOR ** 0.5
    return TriangleReport(defect, defect <= max(slack, math.sqrt(ABS_FLOOR)))


@dataclass(frozen=True)
class CarreReport:
    admits: bool
    violations: np.ndarray
    density_operator: Callable | None


def carre_du_champ_check(form: GraphForm, m) -> CarreReport:
    """True iff m is energy dominant; then f -> Gamma(f)/m is the density map."""
    m = validate_measure(form, m)
    rep = is_energy_dominant(form, m)
    if not rep.dominant:
        return CarreReport(False, rep.violations, None)
    return CarreReport(True, rep.violations,
                       lambda f: energy_density(form, f, m))


@dataclass(frozen=True)
class AtomClassification:
    """Verdict for a reference measure augmented by a point atom.

    ``minimal_fixed_level`` is the support-based verdict at the given
    resolution; ``minimal_refinement_trend`` tracks whether the atom's
    reference mass survives grid refinement.  An atom sitting on a point
    whose reference mass vanishes under refinement is dominant but not
    minimal in the refinement limit.
    """

    dominant: bool
    minimal_fixed_level: bool
    minimal_refinement_trend: bool
    atom_reference_masses: tuple
    classification: str


def classify_reference_plus_atom(form_builder, atom_position=0.5,
                                 levels=(99, 299, 999)) -> AtomClassification:
    """Classify m = minimal_edm + Dirac at a grid point across refinements.

    ``form_builder(n)`` must return a form with vertex positions; the atom
    is placed at the vertex nearest ``atom_position`` on each grid.
    """
    from .fixtures import midpoint_index  # local import to avoid cycles

    masses = []
    dominant = True
    minimal_fixed = True
    for n in levels:
        form = form_builder(n)
        ref = minimal_edm(form)
        idx = midpoint_index(form) if atom_position == 0.5 else int(
            np.argmin(np.abs(form.positions - atom_position)))
        m = ref.copy()
        m[idx] += 1.0
        dominant &= is_energy_dominant(form, m).dominant
        minimal_fixed &= is_minimal_edm(form, m).minimal
        masses.append(float(ref[idx]))
    # the atom keeps unit mass while its reference mass dies out with the grid
    trend_minimal = not all(b < a for a, b in zip(masses, masses[1:]))
    label = "dominant-not-minimal" if (dominant and not trend_minimal) else (
        "dominant-minimal" if dominant else "not-dominant")
    return AtomClassification(dominant, minimal_fixed, trend_minimal,
                              tuple(masses), label)
