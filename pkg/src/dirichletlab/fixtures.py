"""Reference fixtures and random generators used by tests and the selftest."""

from __future__ import annotations

import numpy as np

from .core import GraphForm, build_form, form_from_edges


def two_point_form(c=1.0, kappa=(0.0, 0.0), mu=(1.0, 1.0)) -> GraphForm:
    return build_form([[0.0, c], [c, 0.0]], killing=kappa, base_measure=mu)


def killing_only_form(kappa=2.0, mu=1.0) -> GraphForm:
    return build_form([[0.0]], killing=[kappa], base_measure=[mu])


def three_point_inactive_form(c=1.0) -> GraphForm:
    """Edge between points 0 and 1; point 2 carries no edge and no killing."""
    table = [[0.0, c, 0.0], [c, 0.0, 0.0], [0.0, 0.0, 0.0]]
    return build_form(table)


def path_form(n, conductance=1.0, killing=None, base_measure=None,
              positions=None) -> GraphForm:
    """Path graph on n points with constant edge conductance."""
    edges = [(i, i + 1, conductance) for i in range(n - 1)]
    return form_from_edges(n, edges, killing=killing, base_measure=base_measure,
                           positions=positions)


def interval_form(n=1000) -> GraphForm:
    """Grid discretization of the unit interval including both endpoints.

    n points at i/(n-1), spacing h, conductance 1/h per consecutive pair,
    base measure h per point (discrete Lebesgue).  The coordinate function
    has energy exactly 1 and interior energy density exactly 1.
    """
    if n < 2:
        raise ValueError("need at least two points")
    h = 1.0 / (n - 1)
    x = np.arange(n) * h
    return path_form(n, conductance=1.0 / h, base_measure=np.full(n, h),
                     positions=x)


def interior_interval_form(n_interior=999) -> GraphForm:
    """Open-interval grid: n interior points at i/(n+1), no boundary vertices."""
    h = 1.0 / (n_interior + 1)
    x = (np.arange(n_interior) + 1) * h
    return path_form(n_interior, conductance=1.0 / h,
                     base_measure=np.full(n_interior, h), positions=x)


def midpoint_index(form: GraphForm) -> int:
    """Index of the vertex closest to coordinate 1/2."""
    if form.positions is None:
        return form.n // 2
    return int(np.argmin(np.abs(form.positions - 0.5)))


def dirac_measure(form: GraphForm, index, mass=1.0) -> np.ndarray:
    m = np.zeros(form.n)
    m[index] = mass
    return m


def adversarial_nondominant():
    """Two-point form, measure charging only the inert side of the pair.

    The constant sequence u_n = 1_{point 1} is Cauchy in energy and null in
    L2(m), yet E(u_n) = c stays away from zero: the closability conclusion
    fails because m is not energy dominant.
    """
    form = two_point_form()
    m = np.array([1.0, 0.0])
    seq = [np.array([0.0, 1.0]) for _ in range(8)]
    return form, m, seq


def geometric_sequence(base, count=10, ratio=0.5):
    """u_k = ratio^k * base, k = 1..count."""
    base = np.asarray(base, dtype=float)
    return [ratio ** k * base for k in range(1, count + 1)]


def shrinking_plateau_sequence(form: GraphForm, count=10):
    """Plateau bumps with geometrically shrinking height and width.

    Defined through vertex coordinates; heights 2^-k force an E-Cauchy,
    L2-null sequence whose energies tend to zero.
    """
    x = form.positions
    if x is None:
        x = np.linspace(0.0, 1.0, form.n)
    seqs = []
    for k in range(1, count + 1):
        width = 0.5 / (k + 1)
        ramp = 0.25
        center = 0.5
        d = np.abs(x - center)
        profile = np.clip((width + ramp - d) / ramp, 0.0, 1.0)
        seqs.append(2.0 ** (-k) * profile)
    return seqs


def random_form(rng, max_points=12, min_points=2, edge_prob=0.45,
                killing_prob=0.3, inactive_prob=0.0, zero_mu_at=None,
                ensure_active=True) -> GraphForm:
    """Random small form: sparse symmetric conductances, optional killing.

    ``inactive_prob`` marks points that receive no edges and no killing.
    ``zero_mu_at`` (indices) zeroes the base measure there, enabling the
    capacity fixtures that need null sets.
    """
    n = int(rng.integers(min_points, max_points + 1))
    inactive = rng.random(n) < inactive_prob
    c = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if inactive[i] or inactive[j]:
                continue
            if rng.random() < edge_prob:
                c[i, j] = c[j, i] = rng.uniform(0.1, 3.0)
    kappa = np.where((rng.random(n) < killing_prob) & ~inactive,
                     rng.uniform(0.1, 2.0, n), 0.0)
    if ensure_active and c.sum() == 0 and kappa.sum() == 0:
        if n >= 2 and not (inactive[0] or inactive[1]):
            c[0, 1] = c[1, 0] = rng.uniform(0.5, 2.0)
        else:
            k = int(np.flatnonzero(~inactive)[0]) if (~inactive).any() else 0
            kappa[k] = rng.uniform(0.5, 2.0)
    mu = rng.uniform(0.2, 2.0, n)
    allow_null = zero_mu_at is not None
    if allow_null:
        mu[np.asarray(zero_mu_at, dtype=int)] = 0.0
    return build_form(c, killing=kappa, base_measure=mu, allow_null_base=allow_null)


def random_function(rng, form: GraphForm, lo=-1.0, hi=1.0) -> np.ndarray:
    return rng.uniform(lo, hi, form.n)


def random_connected_form(rng, max_points=12, min_points=2,
                          killing_prob=0.3) -> GraphForm:
    """Random form whose conductance graph is connected (spanning tree plus noise)."""
    n = int(rng.integers(min_points, max_points + 1))
    c = np.zeros((n, n))
    for j in range(1, n):
        i = int(rng.integers(0, j))
        c[i, j] = c[j, i] = rng.uniform(0.2, 3.0)
    extra = rng.random((n, n)) < 0.2
    for i in range(n):
        for j in range(i + 1, n):
            if extra[i, j] and c[i, j] == 0.0:
                c[i, j] = c[j, i] = rng.uniform(0.1, 2.0)
    kappa = np.where(rng.random(n) < killing_prob, rng.uniform(0.1, 2.0, n), 0.0)
    mu = rng.uniform(0.2, 2.0, n)
    return build_form(c, killing=kappa, base_measure=mu)
