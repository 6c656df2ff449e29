"""Scalar field layer over a finite site set.

The central object is the concave field ``f(x) = -dist^2(x, K)/2`` whose
extended gradient (minimal-norm subgradient selection) drives the action
functionals in :mod:`voract.action`. This module computes:

- ``f_eval`` / ``g_eval``: the field and its convex companion
  ``g(x) = f(x) + |x|^2/2``.
- ``extended_gradient``: nearest-site class, its hull projection
  ``eta(x)``, the gradient ``eta(x) - x`` and the squared slope.
- ``slope_sup_oracle``: an independent sampled estimate of the slope via
  difference quotients, used to cross-validate the gradient formula.
- ``zone_table``: sampled discovery of the distinct ``eta`` values (the
  potential zones), the minimal squared separation ``beta`` between them,
  and a balancedness verdict (does the nearest-site partition coincide
  with the zone partition on the witnessed cells?).
- ``in_p_eta``: membership of a zone value in the subgradient of ``g``
  at a point.

Everything is pure and immutable; zone discovery takes an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GeometryError,
    OptClass,
    PointSet,
    cell_frame,
    min_norm_point,
    opt_class,
    sq_dists_to_sites,
    _as_vector,
)

__all__ = [
    "GradientInfo",
    "ZoneTable",
    "f_eval",
    "g_eval",
    "extended_gradient",
    "slope_sup_oracle",
    "zone_table",
    "in_p_eta",
    "batch_field",
    "batch_field_light",
]

ETA_DEDUP_TOL = 1e-7  # absolute dedup radius for discovered zone values


def f_eval(x, kset: PointSet) -> float:
    """-(squared distance to the nearest site)/2."""
    xv = _as_vector(x, kset.dim)
    return -0.5 * float(np.min(sq_dists_to_sites(xv, kset)))


def g_eval(x, kset: PointSet) -> float:
    """max_i (x·p_i - |p_i|^2/2); equals f(x) + |x|^2/2 identically."""
    xv = _as_vector(x, kset.dim)
    vals = kset.points @ xv - 0.5 * np.einsum("ij,ij->i", kset.points, kset.points)
    return float(np.max(vals))


@dataclass(frozen=True)
class GradientInfo:
    """Extended-gradient data at a query point.

    ``grad`` equals ``eta - x`` by construction; ``slope_sq`` is its
    squared norm and never exceeds ``-2 f_value`` (equality iff the
    nearest site is unique).
    """

    x: np.ndarray
    opt: OptClass
    eta: np.ndarray
    grad: np.ndarray
    f_value: float
    slope_sq: float

    def __post_init__(self):
        for name in ("x", "eta", "grad"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.slope_sq > -2.0 * self.f_value + 1e-9:
            raise GeometryError(
                f"slope_sq {self.slope_sq:g} exceeds squared distance {-2.0 * self.f_value:g}"
            )
        if len(self.opt) == 1 and abs(self.slope_sq + 2.0 * self.f_value) > 1e-9 * (1.0 + self.slope_sq):
            raise GeometryError("unique-nearest-site slope must equal the distance")


def _eta_for_class(indices: tuple[int, ...], witness: np.ndarray, kset: PointSet) -> np.ndarray:
    if len(indices) == 1:
        return kset.points[indices[0]].copy()
    pts = kset.points[list(indices)]
    if len(indices) == 2:
        # Segment projection in closed form.
        a, b = pts
        ab = b - a
        denom = float(ab @ ab)
        t = float((witness - a) @ ab) / denom
        t = min(1.0, max(0.0, t))
        return a + t * ab
    return min_norm_point(pts, witness)


def extended_gradient(x, kset: PointSet) -> GradientInfo:
    """Class, hull projection, gradient and squared slope at ``x``."""
    xv = _as_vector(x, kset.dim)
    cls = opt_class(xv, kset)
    eta = _eta_for_class(cls.indices, xv, kset)
    grad = eta - xv
    return GradientInfo(
        x=xv,
        opt=cls,
        eta=eta,
        grad=grad,
        f_value=f_eval(xv, kset),
        slope_sq=float(grad @ grad),
    )


def batch_field(nodes: np.ndarray, kset: PointSet):
    """Vectorized class/eta/slope data for a stack of query points.

    Returns ``(classes, etas, slope_sq)`` where ``classes`` is a list of
    sorted index tuples, ``etas`` an (n, d) array and ``slope_sq`` an (n,)
    array. Multi-site classes are resolved through the same projection
    used by :func:`extended_gradient`; the projection is cached per class
    (it does not depend on the query point within a cell).
    """
    pts = kset.points
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    n = nodes.shape[0]
    sq_pts = np.einsum("ij,ij->i", pts, pts)
    d2 = np.maximum(
        np.einsum("ij,ij->i", nodes, nodes)[:, None] + sq_pts[None, :] - 2.0 * nodes @ pts.T,
        0.0,
    )
    dmin = np.min(d2, axis=1)
    ties = d2 <= (1.0 + kset.tie_tolerance) * dmin[:, None]
    tie_counts = np.sum(ties, axis=1)
    nearest = np.argmin(d2, axis=1)

    etas = pts[nearest].copy()
    classes: list[tuple[int, ...]] = [None] * n  # type: ignore[list-item]
    single = tie_counts == 1
    for k in np.flatnonzero(single):
        classes[k] = (int(nearest[k]),)
    multi_rows = np.flatnonzero(~single)
    if multi_rows.size:
        patterns, inverse = np.unique(ties[multi_rows], axis=0, return_inverse=True)
        for pi in range(patterns.shape[0]):
            idx = tuple(int(i) for i in np.flatnonzero(patterns[pi]))
            rows = multi_rows[inverse == pi]
            eta = _eta_for_class(idx, nodes[rows[0]], kset)
            etas[rows] = eta
            for r in rows:
                classes[int(r)] = idx
    diff = etas - nodes
    slope_sq = np.einsum("ij,ij->i", diff, diff)
    return classes, etas, slope_sq


def batch_field_light(nodes: np.ndarray, kset: PointSet, eta_cache: dict | None = None):
    """Lean variant of :func:`batch_field` for solver inner loops.

    Returns ``(etas, slope_sq, tie_mask, groups)`` where ``tie_mask``
    flags nodes whose class has several sites and ``groups`` lists
    ``(class_tuple, row_indices)`` per distinct tie class. Hull
    projections are class-determined, so callers may pass a persistent
    ``eta_cache`` (class tuple -> projection) to amortize them.
    """
    pts = kset.points
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    sq_pts = np.einsum("ij,ij->i", pts, pts)
    d2 = np.maximum(
        np.einsum("ij,ij->i", nodes, nodes)[:, None] + sq_pts[None, :] - 2.0 * nodes @ pts.T,
        0.0,
    )
    dmin = np.min(d2, axis=1)
    ties = d2 <= (1.0 + kset.tie_tolerance) * dmin[:, None]
    tie_mask = np.sum(ties, axis=1) >= 2
    nearest = np.argmin(d2, axis=1)
    etas = pts[nearest].copy()
    groups: list[tuple[tuple[int, ...], np.ndarray]] = []
    tie_rows = np.flatnonzero(tie_mask)
    if tie_rows.size:
        patterns, inverse = np.unique(ties[tie_rows], axis=0, return_inverse=True)
        for pi in range(patterns.shape[0]):
            idx = tuple(int(i) for i in np.flatnonzero(patterns[pi]))
            rows = tie_rows[inverse == pi]
            eta = None if eta_cache is None else eta_cache.get(idx)
            if eta is None:
                eta = _eta_for_class(idx, nodes[rows[0]], kset)
                if eta_cache is not None:
                    eta_cache[idx] = eta
            etas[rows] = eta
            groups.append((idx, rows))
    diff = etas - nodes
    slope_sq = np.einsum("ij,ij->i", diff, diff)
    return etas, slope_sq, tie_mask, groups


def slope_sup_oracle(x, kset: PointSet, sample_count: int = 400, seed: int = 0) -> float:
    """Sampled lower estimate of the local slope of the distance field.

    Evaluates the positive part of ``(f(x) - f(y) - |x-y|^2/2) / |x-y|``
    over points y on shrinking spheres around x, over the sites
    themselves, over the hull projection of x, and along the ray pointing
    away from that projection. Every sample is a valid difference
    quotient, so the maximum is a lower bound on the true supremum; it is
    used to cross-validate ``|grad|`` from :func:`extended_gradient`.
    """
    if sample_count < 100:
        raise GeometryError("sample_count must be at least 100")
    xv = _as_vector(x, kset.dim)
    rng = np.random.default_rng(seed)
    info = extended_gradient(xv, kset)
    fx = info.f_value

    radii = np.array([1e-2, 3e-3, 1e-3, 3e-4, 1e-4])
    per_sphere = max(sample_count // len(radii), 20)

    candidates = [kset.points, info.eta[None, :]]
    for r in radii:
        dirs = rng.standard_normal((per_sphere, kset.dim))
        norms = np.linalg.norm(dirs, axis=1)
        norms[norms == 0] = 1.0
        dirs = dirs / norms[:, None]
        candidates.append(xv[None, :] + r * dirs)
        if info.slope_sq > 0:
            away = -info.grad / np.sqrt(info.slope_sq)
            candidates.append((xv + r * away)[None, :])
    ys = np.vstack(candidates)

    sq_pts = np.einsum("ij,ij->i", kset.points, kset.points)
    d2 = np.einsum("ij,ij->i", ys, ys)[:, None] + sq_pts[None, :] - 2.0 * ys @ kset.points.T
    f_ys = -0.5 * np.min(np.maximum(d2, 0.0), axis=1)
    gaps = ys - xv[None, :]
    dist = np.linalg.norm(gaps, axis=1)
    ok = dist > 1e-13
    numer = fx - f_ys[ok] - 0.5 * dist[ok] ** 2
    ratios = np.maximum(numer, 0.0) / dist[ok]
    return float(np.max(ratios, initial=0.0))


@dataclass(frozen=True)
class ZoneTable:
    """Witnessed zone values of a site set.

    ``etas`` holds the distinct hull projections discovered by probing
    (dedup radius :data:`ETA_DEDUP_TOL`); ``beta`` is the minimal squared
    separation between them. ``cell_to_zone`` maps each witnessed class
    to the index of its zone value. ``balanced`` is true when no two
    distinct witnessed classes share a zone value; otherwise
    ``unbalanced_witness`` stores one offending class pair. The verdict
    is certified only on witnessed cells; ``coverage`` records how many
    probes each candidate source contributed.
    """

    etas: np.ndarray
    beta: float
    cell_to_zone: dict[tuple[int, ...], int]
    balanced: bool
    unbalanced_witness: tuple[tuple[int, ...], tuple[int, ...]] | None
    class_witness: dict[tuple[int, ...], np.ndarray] = field(repr=False)
    coverage: dict[str, int] = field(default_factory=dict)

    @property
    def witnessed_cells(self) -> int:
        return len(self.cell_to_zone)


def _bisector_basis(direction: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to ``direction``."""
    d = direction.shape[0]
    u = direction / np.linalg.norm(direction)
    basis = np.linalg.svd(u[None, :], full_matrices=True)[2][1:]
    assert basis.shape == (d - 1, d)
    return basis


def _circumcenter(pts: np.ndarray) -> np.ndarray | None:
    """Point equidistant from all rows of pts, if the system is consistent."""
    diffs = 2.0 * (pts[1:] - pts[0][None, :])
    rhs = np.einsum("ij,ij->i", pts[1:], pts[1:]) - float(pts[0] @ pts[0])
    sol, *_ = np.linalg.lstsq(diffs, rhs, rcond=None)
    if np.max(np.abs(diffs @ sol - rhs), initial=0.0) > 1e-8 * (1.0 + np.max(np.abs(pts)) ** 2):
        return None
    return sol


def zone_table(
    kset: PointSet,
    probe_box,
    probe_count: int = 2000,
    seed: int = 0,
    max_pairs: int = 20000,
    max_triple_sites: int = 40,
) -> ZoneTable:
    """Probe the zone structure of ``kset`` inside ``probe_box``.

    Probes are uniform samples plus structured candidates: the sites, all
    pairwise midpoints, offsets from each midpoint along the pair's
    bisector hyperplane (these witness the positive-codimension pair
    cells that midpoints alone miss), circumcenters of site triples
    (d >= 2, skipped above ``max_triple_sites`` sites), and the frame
    pivots of all witnessed classes. Candidates outside the box are
    dropped, so the verdict is scoped to the probed region.
    """
    lo = np.asarray(probe_box[0], dtype=float).reshape(-1)
    hi = np.asarray(probe_box[1], dtype=float).reshape(-1)
    d = kset.dim
    if lo.shape[0] != d or hi.shape[0] != d:
        raise GeometryError("probe_box dimension mismatch")
    if np.any(kset.points < lo[None, :] - 1e-12) or np.any(kset.points > hi[None, :] + 1e-12):
        raise GeometryError("probe_box must contain every site")

    rng = np.random.default_rng(seed)
    sources: list[tuple[str, np.ndarray]] = []
    sources.append(("uniform", lo + rng.random((probe_count, d)) * (hi - lo)))
    sources.append(("sites", kset.points.copy()))

    n = kset.n
    pair_idx = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if len(pair_idx) > max_pairs:
        keep = rng.choice(len(pair_idx), size=max_pairs, replace=False)
        pair_idx = [pair_idx[k] for k in sorted(keep)]
    mids = []
    offsets = []
    for i, j in pair_idx:
        pi, pj = kset.points[i], kset.points[j]
        mid = 0.5 * (pi + pj)
        mids.append(mid)
        if d > 1:
            basis = _bisector_basis(pj - pi)
            span = 0.5 * float(np.linalg.norm(pj - pi))
            for t in (0.05, 0.15, 0.35):
                step = t * span
                offsets.extend([mid + step * b for b in basis])
                offsets.extend([mid - step * b for b in basis])
    if mids:
        sources.append(("midpoints", np.array(mids)))
    if offsets:
        sources.append(("bisector_offsets", np.array(offsets)))

    if d >= 2 and n <= max_triple_sites:
        centers = []
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    c = _circumcenter(kset.points[[i, j, k]])
                    if c is not None:
                        centers.append(c)
        if centers:
            sources.append(("circumcenters", np.array(centers)))

    etas: list[np.ndarray] = []
    cell_to_zone: dict[tuple[int, ...], int] = {}
    class_witness: dict[tuple[int, ...], np.ndarray] = {}
    coverage: dict[str, int] = {}

    def zone_index(eta: np.ndarray) -> int:
        for i, known in enumerate(etas):
            if float(np.linalg.norm(known - eta)) <= ETA_DEDUP_TOL:
                return i
        etas.append(eta)
        return len(etas) - 1

    def absorb(name: str, pts: np.ndarray) -> None:
        inside = np.all((pts >= lo[None, :] - 1e-12) & (pts <= hi[None, :] + 1e-12), axis=1)
        pts = pts[inside]
        coverage[name] = coverage.get(name, 0) + pts.shape[0]
        chunk = max(1, 20_000_000 // max(kset.n, 1))
        for start in range(0, pts.shape[0], chunk):
            block = pts[start:start + chunk]
            classes, eta_arr, _ = batch_field(block, kset)
            for cls, eta, x in zip(classes, eta_arr, block):
                if cls not in cell_to_zone:
                    cell_to_zone[cls] = zone_index(eta)
                    class_witness[cls] = x.copy()

    for name, pts in sources:
        absorb(name, pts)

    # Refinement pass: frame pivots of every witnessed multi-site class.
    pivots = []
    for cls in list(cell_to_zone):
        if len(cls) >= 2:
            try:
                pivots.append(cell_frame(OptClass(cls, class_witness[cls]), kset).p_h)
            except GeometryError:
                continue
    if pivots:
        absorb("frame_pivots", np.array(pivots))

    eta_arr = np.array(etas) if etas else np.zeros((0, d))
    if len(etas) >= 2:
        gaps = eta_arr[:, None, :] - eta_arr[None, :, :]
        sq = np.einsum("ijk,ijk->ij", gaps, gaps)
        np.fill_diagonal(sq, np.inf)
        beta = float(np.min(sq))
    else:
        beta = float("inf")

    balanced = True
    witness = None
    by_zone: dict[int, tuple[int, ...]] = {}
    for cls in sorted(cell_to_zone):
        z = cell_to_zone[cls]
        if z in by_zone:
            balanced = False
            witness = (by_zone[z], cls)
            break
        by_zone[z] = cls

    return ZoneTable(
        etas=eta_arr,
        beta=beta,
        cell_to_zone=cell_to_zone,
        balanced=balanced,
        unbalanced_witness=witness,
        class_witness=class_witness,
        coverage=coverage,
    )


def in_p_eta(x, eta, kset: PointSet, tol: float = 1e-8) -> bool:
    """True iff ``eta`` lies in the subgradient of ``g`` at ``x``.

    Membership is distance of ``eta`` to the convex hull of the class
    sites of ``x`` being at most ``tol``.
    """
    xv = _as_vector(x, kset.dim)
    ev = _as_vector(eta, kset.dim)
    cls = opt_class(xv, kset)
    proj = min_norm_point(kset.points[list(cls.indices)], ev)
    return float(np.linalg.norm(proj - ev)) <= tol
