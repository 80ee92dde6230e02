"""Finite symmetric Dirichlet forms with jump and killing parts.

A form is specified by a symmetric nonnegative conductance table c(x,y)
with zero diagonal, a nonnegative killing weight kappa(x) and a positive
base measure mu(x).  The energy convention is

    E(f) = 1/2 * sum_{x,y} c(x,y) (f(x)-f(y))^2 + sum_x kappa(x) f(x)^2,

so the jump kernel of the Beurling-Deny split is J = c/2 and the energy
measure satisfies Gamma(f)(X) + E_k(f)/2 = E(f).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

#: relative tolerance for value comparisons
REL_TOL = 1e-10
#: absolute floor below which differences are treated as zero
ABS_FLOOR = 1e-14


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class WitnessError(Exception):
    """A property failed; ``witness`` holds a concrete counterexample."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotEnergyDominantError(WitnessError):
    """The measure misses points charged by some energy measure."""


class InternalCheckError(RuntimeError):
    """Two independent computation routes disagreed beyond tolerance."""


def close(a, b, rel=REL_TOL, floor=ABS_FLOOR):
    """True if a and b agree up to relative tolerance with absolute floor."""
    return abs(a - b) <= max(floor, rel * max(abs(a), abs(b)))


def leq(a, b, rel=REL_TOL, floor=ABS_FLOOR):
    """True if a <= b up to float slack."""
    return a <= b + max(floor, rel * max(abs(a), abs(b)))


def exact_sum(values):
    """Exactly rounded sum; independent of summation order."""
    return math.fsum(values)


@dataclass(frozen=True)
class GraphForm:
    """Immutable finite symmetric Dirichlet form.

    Edges are stored once per unordered pair with i < j in row-major
    order.  Arrays are frozen after construction; all operations on a
    form are pure functions and safe to call concurrently.
    """

    labels: tuple
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_c: np.ndarray
    kappa: np.ndarray
    mu: np.ndarray
    positions: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self.edge_c)

    def index_of(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown point label {label!r}") from None

    def degree(self) -> np.ndarray:
        """Sum of conductances incident to each point."""
        deg = np.zeros(self.n)
        np.add.at(deg, self.edge_i, self.edge_c)
        np.add.at(deg, self.edge_j, self.edge_c)
        return deg

    def active_mask(self) -> np.ndarray:
        """Points carrying an edge or killing; the others are energy inert."""
        return (self.degree() > 0.0) | (self.kappa > 0.0)

    def components(self) -> list[np.ndarray]:
        """Connected components of the conductance graph (point indices)."""
        parent = np.arange(self.n)

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in zip(self.edge_i, self.edge_j):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
        roots = np.array([find(i) for i in range(self.n)])
        return [np.flatnonzero(roots == r) for r in np.unique(roots)]

    def conductance_matrix(self) -> np.ndarray:
        if self.n > 20000:
            raise ValidationError("dense conductance matrix too large")
        c = np.zeros((self.n, self.n))
        c[self.edge_i, self.edge_j] = self.edge_c
        c[self.edge_j, self.edge_i] = self.edge_c
        return c

    def laplacian_matrix(self) -> np.ndarray:
        """Matrix Q with E(f) = f.T @ Q @ f, excluding killing."""
        c = self.conductance_matrix()
        return np.diag(c.sum(axis=1)) - c

    def energy_matrix(self) -> np.ndarray:
        """Matrix of the full quadratic form E."""
        return self.laplacian_matrix() + np.diag(self.kappa)


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def build_form(conductance, killing=None, base_measure=None, labels=None,
               positions=None, allow_null_base=False) -> GraphForm:
    """Validate a conductance table and assemble a GraphForm.

    Parameters
    ----------
    conductance : (n, n) array_like
        Symmetric nonnegative table with zero diagonal.
    killing : (n,) array_like, optional
        Nonnegative killing weights, default zero.
    base_measure : (n,) array_like, optional
        Strictly positive point weights, default one.
    labels : sequence, optional
        Point labels, default "0", "1", ...
    allow_null_base : bool
        Permit zero base-measure entries (capacity fixtures only).
    """
    c = np.asarray(conductance, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValidationError(f"conductance table must be square, got shape {c.shape}")
    n = c.shape[0]
    bad = np.argwhere(c != c.T)
    if len(bad):
        i, j = bad[0]
        raise ValidationError(
            f"asymmetric conductance at ({i},{j}): {c[i, j]} vs {c[j, i]}")
    neg = np.argwhere(c < 0)
    if len(neg):
        i, j = neg[0]
        raise ValidationError(f"negative conductance at ({i},{j}): {c[i, j]}")
    diag = np.flatnonzero(np.diag(c) != 0)
    if len(diag):
        raise ValidationError(f"nonzero diagonal conductance at point {diag[0]}")

    kappa = np.zeros(n) if killing is None else np.asarray(killing, dtype=float)
    if kappa.shape != (n,):
        raise ValidationError(f"killing must have shape ({n},), got {kappa.shape}")
    if np.any(kappa < 0):
        raise ValidationError(
            f"negative killing at point {np.flatnonzero(kappa < 0)[0]}")

    mu = np.ones(n) if base_measure is None else np.asarray(base_measure, dtype=float)
    if mu.shape != (n,):
        raise ValidationError(f"base measure must have shape ({n},), got {mu.shape}")
    limit = 0.0 if allow_null_base else None
    if limit is None and np.any(mu <= 0):
        raise ValidationError(
            f"nonpositive base measure at point {np.flatnonzero(mu <= 0)[0]}")
    if allow_null_base and np.any(mu < 0):
        raise ValidationError(
            f"negative base measure at point {np.flatnonzero(mu < 0)[0]}")

    ii, jj = np.nonzero(np.triu(c, 1))
    order = np.lexsort((jj, ii))
    ii, jj = ii[order], jj[order]
    if labels is None:
        labels = tuple(str(k) for k in range(n))
    else:
        labels = tuple(labels)
        if len(labels) != n:
            raise ValidationError("label count does not match table size")
    pos = None if positions is None else _freeze(np.asarray(positions, dtype=float))
    return GraphForm(labels, _freeze(ii), _freeze(jj), _freeze(c[ii, jj]),
                     _freeze(kappa), _freeze(mu), pos)


def form_from_edges(n_points, edges, killing=None, base_measure=None,
                    labels=None, positions=None, allow_null_base=False) -> GraphForm:
    """Assemble a GraphForm from an (i, j, c) edge list without a dense table."""
    if edges:
        ei, ej, ec = (np.asarray(a) for a in zip(*edges))
    else:
        ei = ej = np.zeros(0, dtype=int)
        ec = np.zeros(0)
    ei, ej = ei.astype(int), ej.astype(int)
    ec = ec.astype(float)
    if np.any(ei == ej):
        k = np.flatnonzero(ei == ej)[0]
        raise ValidationError(f"self edge at point {ei[k]}")
    if np.any(ec < 0):
        k = np.flatnonzero(ec < 0)[0]
        raise ValidationError(f"negative conductance on edge ({ei[k]},{ej[k]})")
    lo, hi = np.minimum(ei, ej), np.maximum(ei, ej)
    if len(lo) and (lo.min() < 0 or hi.max() >= n_points):
        raise ValidationError("edge endpoint out of range")
    order = np.lexsort((hi, lo))
    lo, hi, ec = lo[order], hi[order], ec[order]
    dup = np.flatnonzero((lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1]))
    if len(dup):
        raise ValidationError(f"duplicate edge ({lo[dup[0]]},{hi[dup[0]]})")
    keep = ec > 0
    lo, hi, ec = lo[keep], hi[keep], ec[keep]

    kappa = np.zeros(n_points) if killing is None else np.asarray(killing, dtype=float)
    mu = np.ones(n_points) if base_measure is None else np.asarray(base_measure, dtype=float)
    if np.any(kappa < 0):
        raise ValidationError(
            f"negative killing at point {np.flatnonzero(kappa < 0)[0]}")
    if allow_null_base:
        if np.any(mu < 0):
            raise ValidationError("negative base measure")
    elif np.any(mu <= 0):
        raise ValidationError(
            f"nonpositive base measure at point {np.flatnonzero(mu <= 0)[0]}")
    if labels is None:
        labels = tuple(str(k) for k in range(n_points))
    else:
        labels = tuple(labels)
    pos = None if positions is None else _freeze(np.asarray(positions, dtype=float))
    return GraphForm(labels, _freeze(lo), _freeze(hi), _freeze(ec),
                     _freeze(kappa), _freeze(mu), pos)


def as_vector(form: GraphForm, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (form.n,):
        raise ValidationError(
            f"dimension mismatch: function has shape {f.shape}, form has {form.n} points")
    return f


def energy(form: GraphForm, f, g=None) -> float:
    """Bilinear energy E(f, g); E(f) when g is omitted."""
    f = as_vector(form, f)
    g = f if g is None else as_vector(form, g)
    df = f[form.edge_i] - f[form.edge_j]
    dg = g[form.edge_i] - g[form.edge_j] if g is not f else df
    return exact_sum(np.concatenate([form.edge_c * df * dg, form.kappa * f * g]))


def energy_1(form: GraphForm, f, g=None) -> float:
    """E_1(f, g) = E(f, g) + <f, g> in L2(mu)."""
    f = as_vector(form, f)
    g = f if g is None else as_vector(form, g)
    return energy(form, f, g) + exact_sum(form.mu * f * g)


def _gamma_closed_form(form: GraphForm, f: np.ndarray) -> np.ndarray:
    contrib = 0.5 * form.edge_c * (f[form.edge_i] - f[form.edge_j]) ** 2
    gamma = 0.5 * form.kappa * f * f
    np.add.at(gamma, form.edge_i, contrib)
    np.add.at(gamma, form.edge_j, contrib)
    return gamma


def _representation_defect(form, f, gamma, phi):
    lhs = exact_sum(phi * gamma)
    e1 = energy(form, phi * f, f)
    e2 = energy(form, f * f, phi)
    rhs = e1 - 0.5 * e2
    # scale by the terms entering the cancellation, not the cancelled result
    scale = max(abs(lhs), abs(rhs), abs(e1), 0.5 * abs(e2))
    diff = abs(lhs - rhs)
    if diff <= max(ABS_FLOOR, REL_TOL * scale):
        return 0.0
    return diff / max(scale, ABS_FLOOR)


def energy_measure(form: GraphForm, f, check="auto") -> np.ndarray:
    """Energy measure Gamma(f) as a nonnegative weight per point.

    Computed from the closed form J(x,y)(f(x)-f(y))^2 + kappa f^2 / 2 and
    cross-checked against the defining functional E(phi f, f) - E(f^2, phi)/2:
    on small forms against every indicator, on large forms against probe
    functions.  A disagreement beyond tolerance raises InternalCheckError.
    """
    f = as_vector(form, f)
    gamma = _gamma_closed_form(form, f)
    if check == "off":
        return gamma
    if check == "auto" and form.n <= 32:
        check = "full"
    if check == "full":
        probes = [np.eye(form.n)[k] for k in range(form.n)]
    else:
        probes = [np.ones(form.n), f.copy(),
                  np.cos(np.arange(form.n, dtype=float))]
    for phi in probes:
        defect = _representation_defect(form, f, gamma, phi)
        if defect > 0.0:
            raise InternalCheckError(
                f"energy measure routes disagree (relative defect {defect:.3e})")
    return gamma


def mutual_energy_measure(form: GraphForm, f, g, check="auto") -> np.ndarray:
    """Signed measure Gamma(f, g), bilinear with Gamma(f, f) = Gamma(f)."""
    f, g = as_vector(form, f), as_vector(form, g)
    contrib = 0.5 * form.edge_c * ((f[form.edge_i] - f[form.edge_j])
                                   * (g[form.edge_i] - g[form.edge_j]))
    gamma = 0.5 * form.kappa * f * g
    np.add.at(gamma, form.edge_i, contrib)
    np.add.at(gamma, form.edge_j, contrib)
    if check != "off":
        polar = 0.25 * (_gamma_closed_form(form, f + g) - _gamma_closed_form(form, f - g))
        scale = max(float(np.abs(gamma).max(initial=0.0)), 1.0)
        if np.any(np.abs(gamma - polar) > REL_TOL * scale + ABS_FLOOR):
            raise InternalCheckError("mutual energy measure disagrees with polarization")
    return gamma


@dataclass(frozen=True)
class BeurlingDenyTriple:
    """Split of a graph form into local, jump and killing parts.

    The local part is identically zero for pure graph forms; gasket cell
    forms report their local content through cell measures instead.
    """

    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_jump: np.ndarray
    killing: np.ndarray
    n: int
    max_reconstruction_defect: float

    def local_part(self, f) -> np.ndarray:
        return np.zeros(self.n)

    def jump_energy(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return exact_sum(2.0 * self.edge_jump * (f[self.edge_i] - f[self.edge_j]) ** 2)

    def killing_energy(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return exact_sum(self.killing * f * f)

    def local_energy(self, f) -> float:
        return 0.0

    def jump_kernel_matrix(self) -> np.ndarray:
        if self.n > 20000:
            raise ValidationError("dense jump kernel too large")
        J = np.zeros((self.n, self.n))
        J[self.edge_i, self.edge_j] = self.edge_jump
        J[self.edge_j, self.edge_i] = self.edge_jump
        return J


def beurling_deny(form: GraphForm, n_check=100, seed=0) -> BeurlingDenyTriple:
    """Extract (local, jump, killing) with J = c/2 and verify reconstruction.

    The identity E = E_c + E_j + E_k is recomputed for ``n_check`` random
    functions; the largest relative defect is recorded on the triple.
    """
    triple = BeurlingDenyTriple(form.edge_i, form.edge_j, 0.5 * form.edge_c,
                                form.kappa.copy(), form.n, 0.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_check):
        f = rng.uniform(-1.0, 1.0, form.n)
        total = energy(form, f)
        split = triple.local_energy(f) + triple.jump_energy(f) + triple.killing_energy(f)
        if not close(total, split):
            raise InternalCheckError(
                f"decomposition does not reconstruct the energy: {total} vs {split}")
        worst = max(worst, abs(total - split))
    object.__setattr__(triple, "max_reconstruction_defect", worst)
    return triple


def unit_contraction(f) -> np.ndarray:
    """Pointwise (0 v f) ^ 1."""
    return np.clip(np.asarray(f, dtype=float), 0.0, 1.0)


@dataclass(frozen=True)
class ContractionReport:
    energy_before: float
    rows: tuple          # (name, alpha or None, energy_after, ok)
    passed: bool


def contraction_check(form: GraphForm, f, alphas=None) -> ContractionReport:
    """Verify that the unit contraction and two-sided clippings at levels
    alpha do not increase the energy."""
    f = as_vector(form, f)
    before = energy(form, f)
    if alphas is None:
        top = float(np.abs(f).max(initial=0.0))
        alphas = [a for a in (0.25 * top, 0.5 * top, top) if a > 0] or [1.0]
    rows = []
    after = energy(form, unit_contraction(f))
    rows.append(("unit", None, after, leq(after, before)))
    for a in alphas:
        clipped = np.clip(f, -a, a)
        e = energy(form, clipped)
        rows.append(("clip", float(a), e, leq(e, before)))
    return ContractionReport(before, tuple(rows), all(r[3] for r in rows))


@dataclass(frozen=True)
class AlgebraBoundReport:
    lhs: float
    rhs: float
    passed: bool


def algebra_bound_check(form: GraphForm, f, g) -> AlgebraBoundReport:
    """Check E(fg)^1/2 <= E(f)^1/2 |g|_inf + E(g)^1/2 |f|_inf."""
    f, g = as_vector(form, f), as_vector(form, g)
    lhs = math.sqrt(max(energy(form, f * g), 0.0))
    rhs = (math.sqrt(max(energy(form, f), 0.0)) * float(np.abs(g).max(initial=0.0))
           + math.sqrt(max(energy(form, g), 0.0)) * float(np.abs(f).max(initial=0.0)))
    return AlgebraBoundReport(lhs, rhs, leq(lhs, rhs))


def support(m) -> np.ndarray:
    """Indices carrying positive weight."""
    return np.flatnonzero(np.asarray(m) > 0.0)


def validate_measure(form: GraphForm, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (form.n,):
        raise ValidationError(
            f"dimension mismatch: measure has shape {m.shape}, form has {form.n} points")
    if np.any(m < 0):
        raise ValidationError(
            f"negative measure weight at point {np.flatnonzero(m < 0)[0]}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("measure has non-finite weights")
    return m
