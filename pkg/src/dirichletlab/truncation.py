"""Truncation bounds, uniform integrability and closability experiments.

The machinery mirrors a standard closability argument: an energy-Cauchy
sequence that is null in L2(m) admits a subsequence whose two-sided
truncations at shrinking levels 1/k_j lose vanishing energy, which forces
the energies themselves to vanish whenever m is energy dominant.  The
experiment below runs that selection numerically and reports a witness
when the conclusion fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (ABS_FLOOR, REL_TOL, GraphForm, NotEnergyDominantError,
                   ValidationError, as_vector, energy, energy_measure,
                   exact_sum, leq, support, validate_measure)
from .dominance import is_energy_dominant, minimal_edm

#: worst-case constant in E(f - T_a f) <= C * Gamma(f)({|f| >= a});
#: jump part contributes 8, killing 4 against Gamma's kappa/2, local 1.
TRUNCATION_CONSTANT = 8.0


def truncate(f, alpha) -> np.ndarray:
    """Two-sided clipping T_alpha(f) = (-alpha v f) ^ alpha."""
    if alpha <= 0:
        raise ValidationError(f"truncation level must be positive, got {alpha}")
    return np.clip(np.asarray(f, dtype=float), -alpha, alpha)


@dataclass(frozen=True)
class FunctionSequence:
    """Ordered functions over a fixed form."""

    functions: tuple
    labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "functions",
                           tuple(np.asarray(f, dtype=float) for f in self.functions))
        if not self.labels:
            object.__setattr__(self, "labels",
                               tuple(f"u{k}" for k in range(len(self.functions))))

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)


def _as_sequence(seq) -> FunctionSequence:
    if isinstance(seq, FunctionSequence):
        return seq
    return FunctionSequence(tuple(seq))


@dataclass(frozen=True)
class TruncationBoundReport:
    alpha: float
    energy_tail: float            # E(f - T_alpha f)
    gamma_high_set: float         # Gamma(f)({|f| >= alpha})
    constant: float
    observed_ratio: float
    passed: bool
    jump_tail: float = 0.0
    jump_high_set: float = 0.0
    local_report: object = None   # filled for gasket forms


def truncation_energy_bound(form, f, alpha) -> TruncationBoundReport:
    """Check E(f - T_alpha f) <= 8 Gamma(f)({|f| >= alpha}).

    For jump-only graph forms the sharper jump bound is reported as well.
    Gasket level forms additionally receive the local-part comparison at
    cell resolution.
    """
    local_report = None
    graph = form
    if hasattr(form, "graph") and hasattr(form, "level"):
        graph = form.graph
        from .sg import local_truncation_equality
        local_report = local_truncation_equality(form, f, alpha, form.level)
    f = as_vector(graph, f)
    if alpha <= 0:
        raise ValidationError(f"truncation level must be positive, got {alpha}")
    tail = f - truncate(f, alpha)
    e_tail = energy(graph, tail)
    gamma = energy_measure(graph, f, check="off")
    high = np.abs(f) >= alpha
    g_high = exact_sum(gamma[high])
    bound = TRUNCATION_CONSTANT * g_high
    ratio = e_tail / g_high if g_high > 0 else (0.0 if e_tail <= ABS_FLOOR else math.inf)

    dt = tail[graph.edge_i] - tail[graph.edge_j]
    jump_tail = exact_sum(graph.edge_c * dt * dt)
    df = f[graph.edge_i] - f[graph.edge_j]
    jump_contrib = 0.5 * graph.edge_c * df * df
    jump_high = exact_sum(np.concatenate([
        jump_contrib[high[graph.edge_i]], jump_contrib[high[graph.edge_j]]]))

    passed = leq(e_tail, bound) and leq(jump_tail, TRUNCATION_CONSTANT * jump_high)
    return TruncationBoundReport(float(alpha), e_tail, g_high,
                                 TRUNCATION_CONSTANT, ratio, passed,
                                 jump_tail, jump_high, local_report)


class _SmallSetProfile:
    """Supremum of Gamma-mass over sets of small m-mass, queryable in delta.

    Points with zero m-mass are free and always included.  On at most
    ``exact_limit`` charged points all subsets are enumerated with exactly
    rounded sums; beyond that a greedy density packing provides the
    reported value and fractional/participation fills certify an upper
    bound.
    """

    def __init__(self, gamma, m, exact_limit=12):
        gamma = np.asarray(gamma, dtype=float)
        m = np.asarray(m, dtype=float)
        free = m == 0.0
        self.base = exact_sum(gamma[free])
        g, w = gamma[~free], m[~free]
        order = np.argsort(-np.divide(g, w, out=np.zeros_like(g), where=w > 0),
                           kind="stable")
        self.g, self.w = g[order], w[order]
        self.exact = len(g) <= exact_limit
        if self.exact:
            k = len(g)
            masses = np.empty(2 ** k)
            gains = np.empty(2 ** k)
            for mask in range(2 ** k):
                sel = [t for t in range(k) if mask >> t & 1]
                masses[mask] = exact_sum(self.w[sel])
                gains[mask] = exact_sum(self.g[sel])
            srt = np.argsort(masses, kind="stable")
            self.masses = masses[srt]
            self.best_gains = np.maximum.accumulate(gains[srt])

    def query(self, delta):
        """Return (best, certified_upper) for sets with m(A) < delta."""
        if delta <= 0:
            return self.base, self.base
        if self.exact:
            pos = int(np.searchsorted(self.masses, delta, side="left"))
            best = self.base + (self.best_gains[pos - 1] if pos else 0.0)
            return best, best
        budget, frac_upper = delta, self.base
        for gi, wi in zip(self.g, self.w):
            if budget <= 0:
                break
            take = min(1.0, budget / wi)
            frac_upper += take * gi
            budget -= take * wi
        participation = self.base + exact_sum(self.g[self.w < delta])
        upper = min(frac_upper, participation)
        got, used = self.base, 0.0
        for gi, wi in zip(self.g, self.w):
            if used + wi < delta:
                got += gi
                used += wi
        return got, max(min(upper, participation), got)


def _sup_mass_on_small_sets(gamma, m, delta, exact_limit=12):
    return _SmallSetProfile(gamma, m, exact_limit).query(delta)


@dataclass(frozen=True)
class UIModulus:
    """Table delta -> sup_n Gamma(u_n)(A) over sets with m(A) < delta."""

    deltas: np.ndarray
    eps: np.ndarray
    eps_upper: np.ndarray
    method: str
    l1_distances: np.ndarray
    cauchy_tail_start: int | None
    pair_bound_max_excess: float
    warnings: tuple = ()


def _cauchy_tail_start(energies_of_differences, tol):
    """Smallest N with E(u_n - u_m) < tol for all n, m >= N, or None.

    The tail must keep at least two members for the check to say anything.
    """
    n = energies_of_differences.shape[0]
    if n == 1:
        return 0
    for start in range(n - 1):
        if np.all(energies_of_differences[start:, start:] < tol):
            return start
    return None


def uniform_integrability_modulus(form: GraphForm, seq, m, n_deltas=24,
                                  cauchy_tol=1e-6) -> UIModulus:
    """Uniform integrability of the energy densities of a sequence.

    For each dyadic delta the supremum of Gamma(u_n)-mass over m-small
    sets is computed exactly on small spaces (subset enumeration) and
    bracketed by greedy/fractional bounds on large ones.  The report also
    carries the pairwise L1(m) distances of the densities together with
    the Cauchy-style bound linking them to energy differences.
    """
    m = validate_measure(form, m)
    rep = is_energy_dominant(form, m)
    if not rep.dominant:
        raise NotEnergyDominantError("m is not energy dominant",
                                     witness=rep.violations)
    seq = _as_sequence(seq)
    gammas = [energy_measure(form, f, check="off") for f in seq]
    energies = [energy(form, f) for f in seq]

    warnings = []
    nf = len(seq)
    ediff = np.zeros((nf, nf))
    for a in range(nf):
        for b in range(a + 1, nf):
            ediff[a, b] = ediff[b, a] = energy(form, seq.functions[a] - seq.functions[b])
    tail = _cauchy_tail_start(ediff, cauchy_tol)
    if tail is None:
        warnings.append(f"sequence is not energy-Cauchy at tolerance {cauchy_tol}")

    total = exact_sum(m)
    deltas = total * 2.0 ** (-np.arange(n_deltas, dtype=float))
    profiles = [_SmallSetProfile(g, m) for g in gammas]
    method = "exact" if all(p.exact for p in profiles) else "greedy"
    eps = np.zeros(n_deltas)
    eps_up = np.zeros(n_deltas)
    for k, d in enumerate(deltas):
        vals = [p.query(d) for p in profiles]
        eps[k] = max(v[0] for v in vals)
        eps_up[k] = max(v[1] for v in vals)

    pts = support(m)
    dens = np.array([g[pts] / m[pts] for g in gammas])
    l1 = np.zeros((nf, nf))
    sup_e = math.sqrt(max(energies, default=0.0)) if energies else 0.0
    worst_excess = 0.0
    for a in range(nf):
        for b in range(a + 1, nf):
            l1[a, b] = l1[b, a] = exact_sum(np.abs(dens[a] - dens[b]) * m[pts])
            root_gap = exact_sum((np.sqrt(dens[a]) - np.sqrt(dens[b])) ** 2 * m[pts])
            bound = 2.0 * math.sqrt(root_gap) * sup_e
            worst_excess = max(worst_excess, l1[a, b] - bound)
    return UIModulus(deltas, eps, eps_up, method, l1, tail, worst_excess,
                     tuple(warnings))


@dataclass(frozen=True)
class JumpTightnessReport:
    value: float                 # sup_n of the double sum escaping K
    per_function: np.ndarray
    kept: np.ndarray             # the set K used
    epsilon: float | None = None


def jump_tightness(form: GraphForm, seq, K=None, epsilon=None, m=None) -> JumpTightnessReport:
    """sup_n of sum_x sum_{y not in K} (w_n(x)-w_n(y))^2 J(x,y).

    When ``epsilon`` is given instead of K, points are added greedily in
    decreasing m-mass order until the escaping jump mass drops below it.
    """
    seq = _as_sequence(seq)

    def escaping(mask_in):
        out = np.zeros(len(seq))
        # ordered pairs (x, y): an edge counts once per endpoint outside K
        weight = ((~mask_in[form.edge_i]).astype(float)
                  + (~mask_in[form.edge_j]).astype(float))
        for t, f in enumerate(seq):
            f = as_vector(form, f)
            df = f[form.edge_i] - f[form.edge_j]
            out[t] = exact_sum(0.5 * form.edge_c * df * df * weight)
        return out

    if K is not None:
        mask = np.zeros(form.n, dtype=bool)
        mask[np.asarray(list(K), dtype=int)] = True
        per = escaping(mask)
        return JumpTightnessReport(float(per.max(initial=0.0)), per,
                                   np.flatnonzero(mask))
    if epsilon is None:
        raise ValidationError("provide either K or epsilon")
    weights = validate_measure(form, m) if m is not None else form.mu
    order = np.argsort(-weights, kind="stable")
    mask = np.zeros(form.n, dtype=bool)
    per = escaping(mask)
    k = 0
    while per.max(initial=0.0) >= epsilon and k < form.n:
        mask[order[k]] = True
        k += 1
        per = escaping(mask)
    return JumpTightnessReport(float(per.max(initial=0.0)), per,
                               np.flatnonzero(mask), float(epsilon))


@dataclass(frozen=True)
class SelectionObstruction:
    """Why no truncation threshold could be certified."""

    target: float
    achievable: float
    null_set: np.ndarray
    charging_index: int
    message: str


@dataclass(frozen=True)
class SelectionResult:
    success: bool
    js: tuple = ()
    ks: tuple = ()               # k_j values (powers of two)
    levels: tuple = ()           # truncation levels 1/k_j as floats
    picked_indices: tuple = ()   # indices into the input sequence
    functions: tuple = ()
    realized_bounds: tuple = ()  # E(v_j - T_{1/k_j} v_j)
    targets: tuple = ()          # 1/j
    obstruction: SelectionObstruction | None = None
    notes: tuple = ()


def _ui_upper_for_threshold(profiles, delta):
    return max(p.query(delta)[1] for p in profiles)


def extract_subsequence(form: GraphForm, seq, m, j_max=12, cauchy_tol=1e-6,
                        null_tol=1e-6, max_doublings=4096) -> SelectionResult:
    """Two-threshold subsequence selection along the closability argument.

    For each j a level k_j is certified so that sets of m-mass below
    1/k_j carry Gamma-mass below 1/(8 j) for every member, and an index
    n_{k_j} so that m(|u_n| >= 1/k_j) < 1/k_j from there on.  The
    truncation bound then forces E(v_j - T_{1/k_j} v_j) < 1/j, which is
    re-verified directly and reported.
    """
    m = validate_measure(form, m)
    seq = _as_sequence(seq)
    if len(seq) == 0:
        raise ValidationError("empty sequence")
    fns = [as_vector(form, f) for f in seq]

    nf = len(fns)
    ediff = np.zeros((nf, nf))
    for a in range(nf):
        for b in range(a + 1, nf):
            ediff[a, b] = ediff[b, a] = energy(form, fns[a] - fns[b])
    if _cauchy_tail_start(ediff, cauchy_tol) is None:
        raise ValidationError(
            f"precondition violated: sequence is not energy-Cauchy at tolerance {cauchy_tol}")
    norms = np.array([math.sqrt(max(exact_sum(m * f * f), 0.0)) for f in fns])
    if norms[-1] > null_tol:
        raise ValidationError(
            f"precondition violated: sequence is not L2(m)-null "
            f"(final norm {norms[-1]:.3e} > {null_tol})")

    gammas = [energy_measure(form, f, check="off") for f in fns]
    profiles = [_SmallSetProfile(g, m) for g in gammas]
    free = m == 0.0
    free_mass = max(exact_sum(g[free]) for g in gammas)
    min_mass = float(m[m > 0.0].min()) if np.any(m > 0.0) else math.inf

    js, ks, levels, picks, realized, targets, notes = [], [], [], [], [], [], []
    exp_prev = -1  # thresholds 1/k run over k = 2**exp
    for j in range(1, j_max + 1):
        target = 1.0 / (TRUNCATION_CONSTANT * j)
        if free_mass >= target:
            null_set = np.flatnonzero(free)
            idx = int(np.argmax([exact_sum(g[free]) for g in gammas]))
            return SelectionResult(
                False, tuple(js), tuple(ks), tuple(levels), tuple(picks),
                tuple(), tuple(realized), tuple(targets),
                SelectionObstruction(
                    target, free_mass, null_set, idx,
                    "energy measures charge an m-null set: no truncation "
                    f"threshold reaches the uniform-integrability target {target:.3e} "
                    f"(stuck at {free_mass:.3e}); m is not energy dominant "
                    "for this sequence"),
                tuple(notes))
        # smallest certified k = 2**exp: grow until the certified upper
        # bound drops below target; 1/k <= min positive mass leaves only
        # m-null sets, which were handled above.  The levels must still
        # increase strictly so that sup|w_j| <= 1/k_j tends to zero.
        exp = max(exp_prev + 1, 0)
        while exp < max_doublings:
            delta = math.ldexp(1.0, -exp)
            if delta <= min_mass or _ui_upper_for_threshold(profiles, delta) < target:
                break
            exp += 1
        else:
            notes.append(f"threshold search exhausted at j = {j}")
            break
        exp_prev = exp
        level = math.ldexp(1.0, -exp)
        # first index from which m(|u_n| >= 1/k) < 1/k
        n_k = None
        for n in range(nf):
            masses = [exact_sum(m[np.abs(fns[q]) >= level]) for q in range(n, nf)]
            if all(v < level for v in masses):
                n_k = n
                break
        if n_k is None:
            notes.append(f"no sequence index realizes the level-set bound for k = 2^{exp}")
            break
        v = fns[n_k]
        bound = energy(form, v - truncate(v, level))
        js.append(j)
        ks.append(2 ** exp)
        levels.append(level)
        picks.append(n_k)
        realized.append(bound)
        targets.append(1.0 / j)
    if not js:
        return SelectionResult(False, obstruction=None,
                               notes=tuple(notes or ("no index produced",)))
    return SelectionResult(True, tuple(js), tuple(ks), tuple(levels),
                           tuple(picks), tuple(fns[i] for i in picks),
                           tuple(realized), tuple(targets), None, tuple(notes))


@dataclass(frozen=True)
class ClosabilityReport:
    passed: bool
    trace: tuple                 # rows (n, E(u_n), L2(m) norm)
    selection: SelectionResult
    w_energies: tuple
    w_sup_bounds_ok: bool
    final_energy: float
    message: str
    witness: object = None


def closability_experiment(form, seq, m=None, j_max=12, cauchy_tol=1e-6,
                           null_tol=1e-6, conclusion_tol=1e-3):
    """Run the truncation-selection argument end to end on one form.

    Passing a RefinementFamily instead of a form evaluates the sequence of
    callables per level and reports one experiment per level.
    """
    if isinstance(form, RefinementFamily):
        return form.run_experiments(seq, m, j_max=j_max, cauchy_tol=cauchy_tol,
                                    null_tol=null_tol, conclusion_tol=conclusion_tol)
    if m is None:
        m = minimal_edm(form)
    m = validate_measure(form, m)
    seq = _as_sequence(seq)
    fns = [as_vector(form, f) for f in seq]
    trace = tuple((n, energy(form, f), math.sqrt(max(exact_sum(m * f * f), 0.0)))
                  for n, f in enumerate(fns))
    sel = extract_subsequence(form, seq, m, j_max=j_max, cauchy_tol=cauchy_tol,
                              null_tol=null_tol)
    if not sel.success:
        witness = None
        msg = "selection failed: " + "; ".join(sel.notes)
        if sel.obstruction is not None:
            idx = sel.obstruction.charging_index
            witness = fns[idx]
            msg = (f"closability fails: {sel.obstruction.message}; witness "
                   f"member {idx} keeps energy {energy(form, fns[idx]):.6g}")
        return ClosabilityReport(False, trace, sel, (), False,
                                 trace[-1][1], msg, witness)
    w_energies = []
    sup_ok = True
    for level, v in zip(sel.levels, sel.functions):
        w = truncate(v, level)
        sup_ok &= bool(np.abs(w).max(initial=0.0) <= level + ABS_FLOOR)
        w_energies.append(energy(form, w))
    bounds_ok = all(leq(b, t) for b, t in zip(sel.realized_bounds, sel.targets))
    final = trace[-1][1]
    w_final = w_energies[-1] if w_energies else 0.0
    passed = (bounds_ok and sup_ok and final <= conclusion_tol
              and w_final <= conclusion_tol)
    msg = ("energies vanish within resolution" if passed else
           f"conclusion not reached: final E(u_n) = {final:.3e}, "
           f"final E(w_j) = {w_final:.3e}, tolerance {conclusion_tol}")
    return ClosabilityReport(passed, trace, sel, tuple(w_energies), sup_ok,
                             final, msg, None)


@dataclass(frozen=True)
class RefinementFamily:
    """Nested forms with vertex-inclusion restriction maps.

    ``inclusions[k]`` maps indices of level k into level k+1; functions
    are produced per level by evaluating callables on vertex positions.
    """

    forms: tuple
    inclusions: tuple

    def restrict(self, level_from, f):
        """Restrict a function on level ``level_from`` to the level below."""
        incl = self.inclusions[level_from - 1]
        return np.asarray(f, dtype=float)[incl]

    def evaluate(self, fn):
        return [fn(form.positions) for form in self.forms]

    def run_experiments(self, callables, measure_rule=None, **kwargs):
        if measure_rule is None:
            measure_rule = minimal_edm
        reports = []
        for form in self.forms:
            seq = [fn(form.positions) for fn in callables]
            reports.append(closability_experiment(form, seq, measure_rule(form),
                                                  **kwargs))
        return tuple(reports)


def path_family(depths=(3, 4, 5, 6)) -> RefinementFamily:
    """Dyadic grids on [0, 1] with 2^d + 1 vertices per depth."""
    from .fixtures import interval_form

    forms = tuple(interval_form(2 ** d + 1) for d in depths)
    inclusions = []
    for a, b in zip(depths, depths[1:]):
        step = 2 ** (b - a)
        inclusions.append(np.arange(2 ** a + 1) * step)
    return RefinementFamily(forms, tuple(inclusions))
