"""Capacities, equilibrium potentials, measure splitting and quasi-supports.

Capacity of a set A is the least E_1-energy among functions dominating 1
on A; the zero-order variant uses E instead and needs a trivial energy
kernel ("transient" at this scale).  On finite spaces the kernel is
trivial exactly when every conductance component carries some killing,
and a singleton has zero capacity exactly when its component carries
neither base mass nor killing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (ABS_FLOOR, REL_TOL, GraphForm, ValidationError, as_vector,
                   energy, energy_1, energy_measure, exact_sum, leq, support,
                   validate_measure)
from .dominance import is_energy_dominant, minimal_edm

_TRANSIENCE_NOTE = ("transience kernel criterion: E(f) = 0 forces f = 0, i.e. "
                    "every conductance component carries killing")


def transience_check(form: GraphForm):
    """(is_transient, reason).  Exact structural kernel test."""
    bad = []
    for comp in form.components():
        if exact_sum(form.kappa[comp]) == 0.0:
            bad.append(comp)
    if bad:
        labels = [form.labels[i] for i in bad[0]]
        return False, (f"component {labels} carries no killing; its indicator "
                       "combinations have zero energy")
    return True, _TRANSIENCE_NOTE


def _normalize_set(form: GraphForm, A) -> np.ndarray:
    pts = []
    for a in A:
        pts.append(a if isinstance(a, (int, np.integer)) else form.index_of(a))
    idx = np.unique(np.asarray(pts, dtype=int))
    if len(idx) == 0:
        raise ValidationError("point set must be nonempty")
    if idx.min() < 0 or idx.max() >= form.n:
        raise ValidationError(f"point index out of range: {idx}")
    return idx


def _solve_psd(Q, b):
    try:
        return np.linalg.solve(Q, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(Q, b, rcond=None)[0]


@dataclass(frozen=True)
class EquilibriumReport:
    value: float
    potential: np.ndarray
    active_set: np.ndarray
    kind: str                    # "cap1" or "cap0"
    kkt_min_multiplier: float
    resolve_iterations: int
    max_range_violation: float
    oracle_value: float | None
    transience: str


def _equilibrium(form: GraphForm, A, zero_order, cross_check):
    A = _normalize_set(form, A)
    if zero_order:
        ok, reason = transience_check(form)
        if not ok:
            raise ValidationError(f"transience required for zero-order capacity: {reason}")
    Q = form.energy_matrix()
    if not zero_order:
        Q = Q + np.diag(form.mu)
    n = form.n

    fixed = {int(i): 1.0 for i in A}
    iterations = 0
    for _ in range(n + 1):
        iterations += 1
        free = np.array([i for i in range(n) if i not in fixed], dtype=int)
        u = np.zeros(n)
        for i, v in fixed.items():
            u[i] = v
        if len(free):
            rhs = -Q[np.ix_(free, list(fixed))] @ np.array(list(fixed.values()))
            u[free] = _solve_psd(Q[np.ix_(free, free)], rhs)
        grad = Q @ u
        # release constraints with negative multipliers, clip range escapes
        bad_mult = [i for i in A if i in fixed and grad[i] < -ABS_FLOOR]
        too_high = [i for i in free if u[i] > 1.0 + 1e-12]
        too_low = [i for i in free if u[i] < -1e-12]
        if not bad_mult and not too_high and not too_low:
            break
        for i in bad_mult:
            del fixed[i]
        for i in too_high:
            fixed[i] = 1.0
        for i in too_low:
            fixed[i] = 0.0

    value = energy(form, u) if zero_order else energy_1(form, u)
    grad = Q @ u
    kkt = float(min((grad[i] for i in A), default=0.0))
    range_violation = float(max(np.max(u - 1.0, initial=0.0),
                                np.max(-u, initial=0.0)))
    oracle = None
    if cross_check == "auto":
        cross_check = form.n <= 6
    if cross_check:
        oracle = capacity_qp_oracle(form, A, zero_order=zero_order)
        gap = abs(oracle - value) / max(abs(oracle), abs(value), 1e-12)
        if gap > 1e-8 and abs(oracle - value) > 1e-12:
            raise ValidationError(
                f"equilibrium solve disagrees with the QP oracle: "
                f"{value} vs {oracle} (relative gap {gap:.3e})")
    kind = "cap0" if zero_order else "cap1"
    return EquilibriumReport(value, u, A, kind, kkt, iterations,
                             range_violation, oracle, _TRANSIENCE_NOTE)


def capacity(form: GraphForm, A, cross_check="auto") -> EquilibriumReport:
    """Equilibrium problem for E_1: minimize over u >= 1 on A.

    Solved by a linear stationarity system with KKT verification and
    clip-and-resolve; on forms with at most six points the value is
    cross-checked against an off-the-shelf QP solver.
    """
    return _equilibrium(form, A, zero_order=False, cross_check=cross_check)


def capacity0(form: GraphForm, A, cross_check="auto") -> EquilibriumReport:
    """Zero-order capacity, using E alone; requires a trivial energy kernel."""
    return _equilibrium(form, A, zero_order=True, cross_check=cross_check)


def capacity_qp_oracle(form: GraphForm, A, zero_order=False) -> float:
    """Independent quadratic-programming route via scipy SLSQP."""
    from scipy.optimize import minimize

    A = _normalize_set(form, A)
    Q = form.energy_matrix()
    if not zero_order:
        Q = Q + np.diag(form.mu)

    def fun(u):
        return float(u @ Q @ u)

    def jac(u):
        return 2.0 * Q @ u

    cons = [{"type": "ineq", "fun": lambda u, i=i: u[i] - 1.0,
             "jac": lambda u, i=i: np.eye(form.n)[i]} for i in A]
    res = minimize(fun, np.ones(form.n), jac=jac, constraints=cons,
                   method="SLSQP", options={"maxiter": 400, "ftol": 1e-14})
    if not res.success and res.status != 8:
        raise ValidationError(f"QP oracle failed: {res.message}")
    return float(res.fun)


def zero_capacity_set(form: GraphForm) -> np.ndarray:
    """Points whose singleton capacity vanishes: components carrying
    neither base mass nor killing."""
    out = []
    for comp in form.components():
        if exact_sum(form.mu[comp]) == 0.0 and exact_sum(form.kappa[comp]) == 0.0:
            out.extend(comp.tolist())
    return np.array(sorted(out), dtype=int)


@dataclass(frozen=True)
class MeasureSplit:
    m0: np.ndarray               # charges only positive-capacity points
    m1: np.ndarray               # charges only the zero-capacity set
    zero_set: np.ndarray


def split_measure(form: GraphForm, m) -> MeasureSplit:
    """Split m into its parts on and off the zero-capacity set."""
    m = validate_measure(form, m)
    N = zero_capacity_set(form)
    m1 = np.zeros(form.n)
    m1[N] = m[N]
    m0 = m - m1
    return MeasureSplit(m0, m1, N)


@dataclass(frozen=True)
class DominanceOfM0Report:
    passed: bool
    m0_dominant: bool
    gamma_charge_on_zero_set: float
    zero_set: np.ndarray


def energy_dominance_of_m0(form: GraphForm, m) -> DominanceOfM0Report:
    """The capacity-continuous part of an energy dominant measure stays
    dominant; verified by checking that no basis energy measure charges
    the zero-capacity set."""
    m = validate_measure(form, m)
    rep = is_energy_dominant(form, m)
    if not rep.dominant:
        raise ValidationError(
            f"precondition violated: m is not energy dominant "
            f"(uncovered points {rep.violations.tolist()})")
    split = split_measure(form, m)
    charge = 0.0
    for k in range(form.n):
        e = np.zeros(form.n)
        e[k] = 1.0
        charge = max(charge, exact_sum(energy_measure(form, e, check="off")[split.zero_set]))
    m0_ok = is_energy_dominant(form, split.m0).dominant
    return DominanceOfM0Report(m0_ok and charge <= ABS_FLOOR, m0_ok, charge,
                               split.zero_set)


@dataclass(frozen=True)
class QuasiSupportReport:
    full: bool
    missing_points: np.ndarray   # positive-capacity points without mass
    m_mass_on_zero_set: float
    dominant: bool
    hypothesis: str
    transience: str
    reference_passes: bool       # the canonical minimal measure passes


def full_quasi_support_check(form: GraphForm, m) -> QuasiSupportReport:
    """Full quasi-support at finite scale: supp(m) covers every point of
    positive capacity.  Requires irreducibility (connected conductance
    graph) or transience."""
    m = validate_measure(form, m)
    components = form.components()
    irreducible = len(components) == 1
    transient, reason = transience_check(form)
    if not (irreducible or transient):
        raise ValidationError(
            "hypothesis violated: form is neither irreducible (connected) "
            f"nor transient ({reason})")
    hypothesis = "irreducible" if irreducible else "transient"
    N = zero_capacity_set(form)
    positive = np.setdiff1d(np.arange(form.n), N)
    missing = positive[m[positive] == 0.0]
    try:
        ref = minimal_edm(form)
        ref_positive = np.setdiff1d(np.arange(form.n), N)
        reference_passes = bool(np.all(ref[ref_positive] > 0.0)) if irreducible else True
    except ValidationError:
        reference_passes = False
    return QuasiSupportReport(len(missing) == 0, missing,
                              exact_sum(m[N]),
                              is_energy_dominant(form, m).dominant,
                              hypothesis, _TRANSIENCE_NOTE, reference_passes)


@dataclass(frozen=True)
class ZeroLevelReport:
    passed: bool
    mass_on_zero_level: float
    jump_mass_zero_side: float
    jump_mass_nonzero_side: float


def zero_level_check(form: GraphForm, u) -> ZeroLevelReport:
    """If Gamma(u) puts no mass where u is nonzero, it puts none at all.

    The jump part obeys the symmetry bound Gamma_j(u)({u = 0}) <=
    Gamma_j(u)({u != 0}), which drives the conclusion.
    """
    u = as_vector(form, u)
    gamma = energy_measure(form, u, check="off")
    nonzero = u != 0.0
    hyp = exact_sum(gamma[nonzero])
    if hyp > ABS_FLOOR:
        x = int(np.flatnonzero(nonzero & (gamma > ABS_FLOOR))[0])
        raise ValidationError(
            f"hypothesis violated: Gamma(u)({x}) = {gamma[x]} with "
            f"u({x}) = {u[x]} != 0")
    # jump-only masses, separating the two sides of the level set
    jump = gamma - 0.5 * form.kappa * u * u
    zero_mass = exact_sum(gamma[~nonzero])
    return ZeroLevelReport(zero_mass <= ABS_FLOOR, zero_mass,
                           exact_sum(jump[~nonzero]), exact_sum(jump[nonzero]))


@dataclass(frozen=True)
class WeakCapacityReport:
    lhs: float                   # cap0 of {|u| > eps} for the augmented form
    rhs: float                   # E^m(u) / eps^2
    epsilon: float
    level_set: np.ndarray
    passed: bool
    transience: str


def weak_cap_inequality_check(form: GraphForm, u, eps, m) -> WeakCapacityReport:
    """Weak capacitary inequality for the measure-augmented form.

    E^m adds the L2(m) mass to the energy (killing gains m); the
    zero-order capacity of {|u| > eps} is then at most E^m(u) / eps^2.
    """
    if eps <= 0:
        raise ValidationError(f"epsilon must be positive, got {eps}")
    u = as_vector(form, u)
    m = validate_measure(form, m)
    augmented = GraphForm(form.labels, form.edge_i, form.edge_j, form.edge_c,
                          form.kappa + m, form.mu, form.positions)
    ok, reason = transience_check(augmented)
    if not ok:
        raise ValidationError(
            f"augmented form must be transient (m too thin): {reason}")
    level_set = np.flatnonzero(np.abs(u) > eps)
    rhs = energy(augmented, u) / (eps * eps)
    if len(level_set) == 0:
        return WeakCapacityReport(0.0, rhs, float(eps), level_set, True,
                                  _TRANSIENCE_NOTE)
    lhs = capacity0(augmented, level_set).value
    return WeakCapacityReport(lhs, rhs, float(eps), level_set,
                              leq(lhs, rhs, rel=1e-9), _TRANSIENCE_NOTE)
