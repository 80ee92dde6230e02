"""Finite-scale spectrum transfer: quotient a form by a function algebra.

A finite family of generators splits the carrier into joint level sets;
those classes are the characters of the generated algebra, and the
measure and form push forward to them.  The pushed form represents the
original energy for every class-constant function; the transfer is
declared well defined only when no energy lives inside a class, i.e.
merged points carry no edge and no killing.  Otherwise a concrete
witness pair with equal class averages but different energies is raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (GraphForm, ValidationError, WitnessError, as_vector,
                   energy, exact_sum, form_from_edges, validate_measure)
from .dominance import carre_du_champ_check, change_measure, minimal_edm


class TransferError(WitnessError):
    """The energy does not descend to the algebra quotient."""


@dataclass(frozen=True)
class AlgebraSpec:
    """Finite carrier with a measure and a generating function family."""

    mu: np.ndarray
    generators: tuple
    labels: tuple

    @property
    def n(self) -> int:
        return len(self.mu)


def build_algebra(mu, generators, labels=None) -> AlgebraSpec:
    """Validate that the generators vanish nowhere jointly."""
    mu = np.asarray(mu, dtype=float)
    gens = tuple(np.asarray(g, dtype=float) for g in generators)
    if not gens:
        raise ValidationError("generator list must be nonempty")
    for g in gens:
        if g.shape != mu.shape:
            raise ValidationError("generator length does not match the carrier")
    stacked = np.stack(gens)
    dead = np.flatnonzero(np.all(stacked == 0.0, axis=0))
    if len(dead):
        raise ValidationError(
            f"every generator vanishes at point {dead[0]}; the algebra must "
            "vanish nowhere")
    if labels is None:
        labels = tuple(str(k) for k in range(len(mu)))
    return AlgebraSpec(mu, gens, tuple(labels))


def nowhere_vanishing_witness(spec: AlgebraSpec) -> np.ndarray:
    """A single strictly positive member of the algebra: the sum of the
    squared generators."""
    chi = np.zeros(spec.n)
    for g in spec.generators:
        chi += g * g
    if np.any(chi == 0.0):
        raise ValidationError("generators vanish jointly; no witness exists")
    return chi


@dataclass(frozen=True)
class SpectrumQuotient:
    """Partition of the carrier by joint level sets of the generators."""

    classes: tuple               # tuple of index arrays
    embedding: np.ndarray        # point -> class index
    pushed_measure: np.ndarray
    pushforward_defect: float    # worst generator integral mismatch

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def push_function(self, f) -> np.ndarray:
        """Class values of a class-constant function."""
        f = np.asarray(f, dtype=float)
        out = np.empty(self.n_classes)
        for k, cls in enumerate(self.classes):
            vals = f[cls]
            if np.any(vals != vals[0]):
                raise ValidationError(
                    f"function is not constant on class {k} (points {cls.tolist()})")
            out[k] = vals[0]
        return out

    def pull_function(self, fhat) -> np.ndarray:
        fhat = np.asarray(fhat, dtype=float)
        return fhat[self.embedding]


def spectrum(spec: AlgebraSpec) -> SpectrumQuotient:
    """Identify points that no generator separates; push the measure.

    The integral of every generator is preserved by construction; the
    realized defect is recorded.
    """
    stacked = np.stack(spec.generators).T  # rows = points
    seen: dict = {}
    embedding = np.empty(spec.n, dtype=int)
    classes: list = []
    for x in range(spec.n):
        key = stacked[x].tobytes()
        if key not in seen:
            seen[key] = len(classes)
            classes.append([])
        embedding[x] = seen[key]
        classes[seen[key]].append(x)
    class_arrays = tuple(np.asarray(c, dtype=int) for c in classes)
    pushed = np.array([exact_sum(spec.mu[c]) for c in class_arrays])
    defect = 0.0
    for g in spec.generators:
        total = exact_sum(g * spec.mu)
        pushed_total = exact_sum(np.array([g[c[0]] for c in class_arrays]) * pushed)
        defect = max(defect, abs(total - pushed_total))
    return SpectrumQuotient(class_arrays, embedding, pushed, defect)


@dataclass(frozen=True)
class TransferReport:
    quotient: SpectrumQuotient
    merged_points: int
    sampled_max_defect: float


def _class_mean_zero_witness(form: GraphForm, spec: AlgebraSpec, cls) -> np.ndarray:
    """A function with zero class averages but positive energy, supported
    on one class containing an active point."""
    x = next(int(i) for i in cls if form.active_mask()[i])
    y = next(int(i) for i in cls if int(i) != x)
    h = np.zeros(form.n)
    wx = spec.mu[x] if spec.mu[x] > 0 else 1.0
    wy = spec.mu[y] if spec.mu[y] > 0 else 1.0
    h[x] = 1.0 / wx
    h[y] = -1.0 / wy
    return h


def transfer(form: GraphForm, spec: AlgebraSpec, n_samples=50, seed=0):
    """Push the form to the spectrum; returns (transferred form, report).

    Well-definedness demands that functions with equal class averages
    have equal energy, which on a finite space means merged points are
    energy inert.  The structural test is cross-checked by sampling
    class-constant functions (energies must transfer exactly) and random
    class-mean-zero perturbations (energies must not move).
    """
    if form.n != spec.n:
        raise ValidationError("algebra carrier does not match the form")
    quot = spectrum(spec)
    active = form.active_mask()
    for cls in quot.classes:
        if len(cls) > 1 and np.any(active[cls]):
            h = _class_mean_zero_witness(form, spec, cls)
            zero = np.zeros(form.n)
            raise TransferError(
                "energy does not descend to the quotient: points "
                f"{[form.labels[i] for i in cls]} merge but carry energy; "
                f"witness pair has energies {energy(form, h)} vs 0.0",
                witness=(h, zero))

    pos = quot.embedding
    edge_acc: dict = {}
    for i, j, c in zip(form.edge_i, form.edge_j, form.edge_c):
        a, b = int(pos[i]), int(pos[j])
        if a == b:
            raise TransferError("conductance inside a class", witness=None)
        key = (min(a, b), max(a, b))
        edge_acc[key] = edge_acc.get(key, 0.0) + float(c)
    kappa_hat = np.zeros(quot.n_classes)
    np.add.at(kappa_hat, pos, form.kappa)
    transferred = form_from_edges(
        quot.n_classes, [(a, b, c) for (a, b), c in sorted(edge_acc.items())],
        killing=kappa_hat, base_measure=quot.pushed_measure,
        labels=[form.labels[c[0]] for c in quot.classes],
        allow_null_base=bool(np.any(quot.pushed_measure == 0.0)))

    rng = np.random.default_rng(seed)
    worst = 0.0
    merged = sum(len(c) - 1 for c in quot.classes)
    for _ in range(n_samples):
        fhat = rng.uniform(-1.0, 1.0, quot.n_classes)
        f = quot.pull_function(fhat)
        defect = abs(energy(transferred, fhat) - energy(form, f))
        worst = max(worst, defect)
        if defect != 0.0:
            raise TransferError(
                "sampled class-constant function changed energy under transfer",
                witness=(f, fhat))
        # perturbations inside merged classes must leave the energy as is
        g = f.copy()
        for cls in quot.classes:
            if len(cls) > 1:
                g[cls] += rng.uniform(-1.0, 1.0, len(cls))
        if energy(form, g) != energy(form, f):
            raise TransferError(
                "in-class perturbation changed the energy", witness=(f, g))
    return transferred, TransferReport(quot, merged, worst)


@dataclass(frozen=True)
class TransferredCarreReport:
    passed: bool
    admits_carre: bool
    retained_classes: np.ndarray
    minimal_measure: np.ndarray


def transferred_carre_check(transferred: GraphForm) -> TransferredCarreReport:
    """After transfer, the minimal energy dominant measure admits a
    density operator on its quotient; composes the measure build, the
    measure change and the density check."""
    m = minimal_edm(transferred)
    quotient = change_measure(transferred, m)
    rep = carre_du_champ_check(quotient.form, m[quotient.retained_points])
    return TransferredCarreReport(rep.admits, rep.admits,
                                  quotient.retained_points, m)
