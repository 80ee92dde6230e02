"""Sierpinski gasket graph approximations with cell-resolved energy measures.

Level-n cells are words over {0, 1, 2}; cell k at level n is the base-3
expansion of k.  Vertices live on the integer lattice spanned by the two
triangle edge directions at scale 2^n, so subdivision stays exact.  Each
level-n edge lies inside exactly one level-n cell, and its level-l owner
is the length-l prefix of that cell's word, which makes cell measures a
true partition of the energy.

The harmonic midpoint rule and the conductance renormalization factor are
not hard-coded on trust: a brute-force quadratic minimization over the
three level-1 midpoints recovers both, and construction fails if they
disagree with the closed forms beyond 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (GraphForm, InternalCheckError, ValidationError, _freeze,
                   as_vector, energy, exact_sum)

MAX_LEVEL = 14  # keeps the level-n graph under ~2 GB

#: slot order of the three midpoints: (0,1), (0,2), (1,2)
_MID_PAIRS = ((0, 1), (0, 2), (1, 2))


def _level1_minimization_oracle():
    """Recover the midpoint rule and conductance factor by minimization.

    Minimizes the raw level-1 edge sum over the three midpoint values for
    each boundary basis vector; returns (rule, factor) where ``rule`` maps
    boundary values to midpoints and ``factor`` rescales level-1
    conductances so the minimum matches the level-0 energy.
    """
    def raw_level1_sum(b, y):
        cells = [(b[0], y[0], y[1]), (y[0], b[1], y[2]), (y[1], y[2], b[2])]
        return sum((s[i] - s[j]) ** 2 for s in cells for i, j in _MID_PAIRS)

    # quadratic in y: assemble the stationarity system numerically
    rule = np.zeros((3, 3))
    for col in range(3):
        b = np.zeros(3)
        b[col] = 1.0
        A = np.zeros((3, 3))
        rhs = np.zeros(3)
        h = 1.0
        for r in range(3):
            for c in range(3):
                e_r, e_c = np.zeros(3), np.zeros(3)
                e_r[r], e_c[c] = h, h
                A[r, c] = (raw_level1_sum(np.zeros(3), e_r + e_c)
                           - raw_level1_sum(np.zeros(3), e_r)
                           - raw_level1_sum(np.zeros(3), e_c)) / (2 * h * h)
            y0 = np.zeros(3)
            y0[r] = h
            rhs[r] = -(raw_level1_sum(b, y0) - raw_level1_sum(b, np.zeros(3))
                       - raw_level1_sum(np.zeros(3), y0)) / (2 * h)
        rule[:, col] = np.linalg.solve(A, rhs)

    b = np.array([1.0, 0.0, 0.0])
    e0 = sum((b[i] - b[j]) ** 2 for i, j in _MID_PAIRS)
    factor = e0 / raw_level1_sum(b, rule @ b)
    return rule, factor


@lru_cache(maxsize=1)
def _verified_extension_rule():
    """Oracle-derived midpoint rule, cross-checked against (2a+2b+c)/5."""
    rule, factor = _level1_minimization_oracle()
    expected = np.array([[0.4, 0.4, 0.2],
                         [0.4, 0.2, 0.4],
                         [0.2, 0.4, 0.4]])
    if np.abs(rule - expected).max() > 1e-12:
        raise InternalCheckError(
            f"midpoint rule oracle disagrees with (2a+2b+c)/5: {rule}")
    if abs(factor - 5.0 / 3.0) > 1e-12:
        raise InternalCheckError(
            f"renormalization oracle disagrees with 5/3: {factor}")
    return rule, factor


def _child_matrices(rule):
    """Per-contraction 3x3 maps from parent corner values to child corners."""
    mats = []
    for i in range(3):
        A = np.zeros((3, 3))
        for j in range(3):
            if j == i:
                A[j, i] = 1.0
            else:
                pair = _MID_PAIRS.index((min(i, j), max(i, j)))
                A[j] = rule[pair]
        mats.append(A)
    return mats


def _subdivide_coords(coords):
    """Subdivide integer corner coordinates once; child i slot j = mid(i, j)."""
    ncells = coords.shape[0]
    out = np.empty((3 * ncells, 3, 2), dtype=coords.dtype)
    for i in range(3):
        for j in range(3):
            out[i::3, j] = (coords[:, i] + coords[:, j]) // 2
    return out


@lru_cache(maxsize=16)
def _geometry(n):
    """Cell corner coordinates and unified vertex ids at level n."""
    scale = 2 ** n
    coords = np.array([[[0, 0], [scale, 0], [0, scale]]], dtype=np.int64)
    for _ in range(n):
        coords = _subdivide_coords(coords)
    keys = coords[..., 0] * (scale + 1) + coords[..., 1]
    unique_keys, inverse = np.unique(keys.ravel(), return_inverse=True)
    cell_vertices = inverse.reshape(-1, 3)
    va, vb = np.divmod(unique_keys, scale + 1)
    lattice = np.stack([va, vb], axis=1)
    # planar positions: basis (1, 0) and (1/2, sqrt(3)/2)
    xy = np.empty((len(unique_keys), 2))
    xy[:, 0] = (va + 0.5 * vb) / scale
    xy[:, 1] = (math.sqrt(3.0) / 2.0) * vb / scale
    return cell_vertices, lattice, xy


@dataclass(frozen=True)
class SGLevelForm:
    """Level-n gasket graph form with its cell index."""

    level: int
    graph: GraphForm
    cell_vertices: np.ndarray    # (3^n, 3) vertex ids per cell, slot order
    vertex_xy: np.ndarray        # planar vertex coordinates
    corner_ids: np.ndarray       # the three boundary vertices

    @property
    def n_cells(self) -> int:
        return self.cell_vertices.shape[0]

    def cell_word(self, index) -> str:
        if self.level == 0:
            return ""
        digits = np.base_repr(index, base=3)
        return digits.rjust(self.level, "0")

    def cell_values(self, f) -> np.ndarray:
        f = as_vector(self.graph, f)
        return f[self.cell_vertices]


@lru_cache(maxsize=16)
def sg_level_form(n) -> SGLevelForm:
    """Gasket graph at level n: conductance (5/3)^n per cell edge, base
    measure the self-similar measure split evenly over cell vertices."""
    if not 0 <= n <= MAX_LEVEL:
        raise ValidationError(f"level must lie in [0, {MAX_LEVEL}], got {n}")
    _verified_extension_rule()
    cell_vertices, lattice, xy = _geometry(n)
    nv = lattice.shape[0]
    expected = (3 ** (n + 1) + 3) // 2
    if nv != expected:
        raise InternalCheckError(f"vertex count {nv} != {expected} at level {n}")

    pairs = np.concatenate([cell_vertices[:, [i, j]] for i, j in _MID_PAIRS])
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    order = np.lexsort((hi, lo))
    conductance = (5.0 / 3.0) ** n

    mu = np.zeros(nv)
    np.add.at(mu, cell_vertices.ravel(), 3.0 ** (-n) / 3.0)

    graph = GraphForm(tuple(str(k) for k in range(nv)),
                      _freeze(lo[order]), _freeze(hi[order]),
                      _freeze(np.full(len(lo), conductance)),
                      _freeze(np.zeros(nv)), _freeze(mu), None)
    scale = 2 ** n
    corner_keys = np.array([0, scale * (scale + 1), scale])
    all_keys = lattice[:, 0] * (scale + 1) + lattice[:, 1]
    corner_ids = np.searchsorted(all_keys, corner_keys)
    return SGLevelForm(n, graph, _freeze(cell_vertices), _freeze(xy),
                       _freeze(corner_ids))


def harmonic_extend(boundary, n) -> np.ndarray:
    """Energy-minimizing extension of three corner values to level n.

    Applies the verified midpoint rule cell by cell; the result is the
    unique minimizer and its level-n energy equals the level-0 energy of
    the boundary data.
    """
    boundary = np.asarray(boundary, dtype=float)
    if boundary.shape != (3,):
        raise ValidationError("boundary data must have exactly three values")
    rule, _ = _verified_extension_rule()
    mats = _child_matrices(rule)
    vals = boundary[None, :]
    for _ in range(n):
        nxt = np.empty((3 * vals.shape[0], 3))
        for i, A in enumerate(mats):
            nxt[i::3] = vals @ A.T
        vals = nxt
    form = sg_level_form(n)
    out = np.empty(form.graph.n)
    out[form.cell_vertices] = vals
    return out


@dataclass(frozen=True)
class CellMeasure:
    """Nonnegative mass per level-l cell, indexed in word order."""

    level: int
    masses: np.ndarray

    def total(self) -> float:
        return exact_sum(self.masses)

    def words(self):
        if self.level == 0:
            return [""]
        return [np.base_repr(k, base=3).rjust(self.level, "0")
                for k in range(len(self.masses))]


def _per_cell_energies(form: SGLevelForm, f) -> np.ndarray:
    vals = form.cell_values(f)
    raw = np.zeros(form.n_cells)
    for i, j in _MID_PAIRS:
        raw += (vals[:, i] - vals[:, j]) ** 2
    return (5.0 / 3.0) ** form.level * raw


def _aggregate(form: SGLevelForm, per_cell, l) -> np.ndarray:
    if not 0 <= l <= form.level:
        raise ValidationError(
            f"cell level must lie in [0, {form.level}], got {l}")
    return per_cell.reshape(3 ** l, -1).sum(axis=1)


def cell_energy_measure(form: SGLevelForm, f, l) -> CellMeasure:
    """Energy mass per level-l cell; cells partition the edges by word
    prefix, so the masses are refinement-additive and total to E_n(f)."""
    return CellMeasure(l, _aggregate(form, _per_cell_energies(form, f), l))


def cell_mutual_energy_measure(form: SGLevelForm, f, g, l) -> CellMeasure:
    vals_f, vals_g = form.cell_values(f), form.cell_values(g)
    raw = np.zeros(form.n_cells)
    for i, j in _MID_PAIRS:
        raw += (vals_f[:, i] - vals_f[:, j]) * (vals_g[:, i] - vals_g[:, j])
    per_cell = (5.0 / 3.0) ** form.level * raw
    return CellMeasure(l, _aggregate(form, per_cell, l))


def harmonic_pair(n):
    """Two energy-orthonormal nonconstant harmonic functions at level n.

    Built from the symmetric boundary patterns (1, 0, -1) and (1, -2, 1),
    normalized by their computed level-0 energies.
    """
    form0 = sg_level_form(0)
    b1 = np.array([1.0, 0.0, -1.0])
    b2 = np.array([1.0, -2.0, 1.0])
    e1, e2 = energy(form0.graph, b1), energy(form0.graph, b2)
    cross = energy(form0.graph, b1, b2)
    if abs(cross) > 1e-12 * max(e1, e2):
        raise InternalCheckError("harmonic pair is not energy orthogonal")
    return (harmonic_extend(b1 / math.sqrt(e1), n),
            harmonic_extend(b2 / math.sqrt(e2), n))


def kusuoka_measure(n, l) -> CellMeasure:
    """Trace measure (Gamma(h1) + Gamma(h2)) / 2 at cell resolution l.

    For harmonic functions cell masses are refinement-stable, so any
    n >= l gives the same level-l values; total mass is one.
    """
    if l > n:
        raise ValidationError(f"cell level {l} exceeds graph level {n}")
    form = sg_level_form(n)
    h1, h2 = harmonic_pair(n)
    per_cell = 0.5 * (_per_cell_energies(form, h1) + _per_cell_energies(form, h2))
    return CellMeasure(l, _aggregate(form, per_cell, l))


@dataclass(frozen=True)
class SingularityReport:
    level: int
    log_ratios: np.ndarray       # log(mass * 3^l) per cell
    min_log_ratio: float
    max_log_ratio: float
    histogram: tuple             # (counts, bin_edges)
    spreads: np.ndarray          # max/min cell mass per level 0..l
    spread_nondecreasing: bool
    normalized_entropies: np.ndarray
    entropy: float


def singularity_diagnostic(l) -> SingularityReport:
    """Compare Kusuoka cell masses against the uniform self-similar weights.

    Reports the log ratios log(m(w) 3^l), their histogram, the max/min
    spread per level up to l and the normalized entropies H_j/(j log 3)
    (1 at level 0 by convention).
    """
    if l > 12:
        raise ValidationError("diagnostic capped at cell level 12")
    spreads = np.empty(l + 1)
    entropies = np.empty(l + 1)
    log_ratios = None
    for j in range(l + 1):
        masses = kusuoka_measure(j, j).masses
        spreads[j] = float(masses.max() / masses.min())
        h = -exact_sum(masses * np.log(masses))
        entropies[j] = 1.0 if j == 0 else h / (j * math.log(3.0))
        if j == l:
            log_ratios = np.log(masses * 3.0 ** j)
            entropy = h
    hist = np.histogram(log_ratios, bins=20)
    nondec = bool(np.all(np.diff(spreads) >= -1e-9 * spreads[:-1]))
    return SingularityReport(l, log_ratios, float(log_ratios.min()),
                             float(log_ratios.max()), hist, spreads, nondec,
                             entropies, entropy)


@dataclass(frozen=True)
class LocalTruncationReport:
    alpha: float
    energy_tail: float           # E_n(f - T_alpha f)
    inside_mass: float           # Gamma(f) over cells fully in {|f| >= alpha}
    straddle_mass: float         # Gamma(f) over partly covered cells
    defect: float
    within_straddle: bool


def local_truncation_equality(form: SGLevelForm, f, alpha, l) -> LocalTruncationReport:
    """Compare the truncation-tail energy with the strictly-inside cell mass.

    For functions resolved by the mesh the two agree up to the mass of
    straddling cells; the report attributes the defect accordingly.
    """
    if alpha <= 0:
        raise ValidationError(f"truncation level must be positive, got {alpha}")
    f = as_vector(form.graph, f)
    tail = f - np.clip(f, -alpha, alpha)
    e_tail = energy(form.graph, tail)
    vals = form.cell_values(f)
    high = np.abs(vals) >= alpha
    cell_all = high.all(axis=1)
    cell_any = high.any(axis=1)
    per_cell = _per_cell_energies(form, f)
    lvl_all = cell_all.reshape(3 ** l, -1).all(axis=1)
    lvl_any = cell_any.reshape(3 ** l, -1).any(axis=1)
    masses = _aggregate(form, per_cell, l)
    inside = exact_sum(masses[lvl_all])
    straddle = exact_sum(masses[lvl_any & ~lvl_all])
    defect = e_tail - inside
    return LocalTruncationReport(float(alpha), e_tail, inside, straddle,
                                 defect, abs(defect) <= straddle + 1e-12)


@dataclass(frozen=True)
class ProductRuleReport:
    max_defect: float
    scale: float
    relative_defect: float


def product_rule_defect(form: SGLevelForm, f, g, h, l) -> ProductRuleReport:
    """Cell-level defect of Gamma(fg, h) = f Gamma(g, h) + g Gamma(f, h).

    Functions multiply cell measures through their per-cell vertex means,
    so the identity is exact only in the refinement limit; the report
    quantifies the defect at the requested resolution.
    """
    f = as_vector(form.graph, f)
    g = as_vector(form.graph, g)
    h = as_vector(form.graph, h)
    lhs = cell_mutual_energy_measure(form, f * g, h, l).masses
    f_cells = _aggregate(form, form.cell_values(f).mean(axis=1), l) / 3 ** (form.level - l)
    g_cells = _aggregate(form, form.cell_values(g).mean(axis=1), l) / 3 ** (form.level - l)
    rhs = (f_cells * cell_mutual_energy_measure(form, g, h, l).masses
           + g_cells * cell_mutual_energy_measure(form, f, h, l).masses)
    scale = float(np.abs(lhs).max(initial=0.0) + np.abs(rhs).max(initial=0.0))
    defect = float(np.abs(lhs - rhs).max(initial=0.0))
    return ProductRuleReport(defect, scale, defect / scale if scale else 0.0)


@dataclass(frozen=True)
class LocalityReport:
    inside_cells: int
    max_inside_mass: float
    passed: bool


def locality_check(form: SGLevelForm, f, transform, a, b, l) -> LocalityReport:
    """Cells with all values in (a, b) carry no energy of transform(f)
    whenever the transform is constant on (a, b)."""
    f = as_vector(form.graph, f)
    u = np.asarray(transform(f), dtype=float)
    vals = form.cell_values(f)
    inside = ((vals > a) & (vals < b)).all(axis=1)
    lvl_inside = inside.reshape(3 ** l, -1).all(axis=1)
    masses = cell_energy_measure(form, u, l).masses
    worst = float(masses[lvl_inside].max(initial=0.0))
    return LocalityReport(int(lvl_inside.sum()), worst, worst <= 1e-14)


def sg_restriction_indices(n) -> np.ndarray:
    """Indices embedding level-(n-1) vertices into the level-n vertex set."""
    if n < 1:
        raise ValidationError("need n >= 1")
    _, coarse, _ = _geometry(n - 1)
    _, fine, _ = _geometry(n)
    scale = 2 ** n
    fine_keys = fine[:, 0] * (scale + 1) + fine[:, 1]
    coarse_keys = 2 * coarse[:, 0] * (scale + 1) + 2 * coarse[:, 1]
    idx = np.searchsorted(fine_keys, coarse_keys)
    if not np.array_equal(fine_keys[idx], coarse_keys):
        raise InternalCheckError("coarse vertices are not nested in fine level")
    return idx
