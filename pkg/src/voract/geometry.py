"""Tolerance-aware computational geometry for finite point sets.

This module provides the geometric substrate the rest of the package is
built on:

- ``PointSet``: an immutable finite set of sites in R^d with a relative
  tie tolerance controlling nearest-site tie detection.
- ``opt_class``: the set of sites (co-)nearest to a query point.
- ``min_norm_point``: projection of a point onto the convex hull of a
  small vertex set (Wolfe's minimum-norm-point algorithm, with exhaustive
  face enumeration for tiny inputs).
- ``cell_frame``: the orthogonal splitting attached to a nearest-site
  class: the affine span of the class sites versus their equidistance
  locus, and the unique intersection point of the two.
- ``Polytope``: bounded halfspace intersections with certified
  nonemptiness/boundedness and projection-based distances (Dykstra).
- ``polytope_distance_ratio``: empirical bound on dist_{A∩B} / dist_B
  over samples drawn in A.

All types are immutable after construction and all operations are pure,
so everything here is safe to call concurrently. Sampling operations take
explicit seeds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "GeometryError",
    "MinNormError",
    "FrameError",
    "PolytopeError",
    "PointSet",
    "OptClass",
    "CellFrame",
    "Polytope",
    "opt_class",
    "min_norm_point",
    "cell_frame",
    "polytope_distance_ratio",
    "load_point_set",
    "save_point_set",
    "load_polytope",
]


class GeometryError(ValueError):
    """Base error for geometric precondition or convergence failures."""


class MinNormError(GeometryError):
    """Minimum-norm-point iteration failed to converge (numerical degeneracy)."""


class FrameError(GeometryError):
    """Cell frame construction hit a rank decision or an empty equidistance locus."""


class PolytopeError(GeometryError):
    """Polytope is empty/unbounded, or a projection failed to converge."""


def _as_vector(x, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise GeometryError(f"expected a {dim}-vector, got shape {np.shape(x)}")
    if not np.all(np.isfinite(v)):
        raise GeometryError("vector contains non-finite entries")
    return v


def _as_points(arr) -> np.ndarray:
    pts = np.asarray(arr, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
        raise GeometryError(f"expected an (N, d) array of points, got shape {np.shape(arr)}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("points contain non-finite entries")
    return pts


@dataclass(frozen=True)
class PointSet:
    """Immutable finite site set in R^d.

    ``tie_tolerance`` is the relative slack used when deciding nearest-site
    ties: a site belongs to the class of ``x`` when its squared distance is
    within a factor (1 + tie_tolerance) of the minimum. Sites must be
    separated well beyond that slack for class queries to be meaningful.
    """

    points: np.ndarray
    tie_tolerance: float = 1e-9

    def __post_init__(self):
        pts = _as_points(self.points)
        object.__setattr__(self, "points", pts)
        if self.tie_tolerance < 0:
            raise GeometryError("tie_tolerance must be nonnegative")
        scale = 1.0 + float(np.max(np.linalg.norm(pts, axis=1)))
        floor = 10.0 * self.tie_tolerance * scale
        n = pts.shape[0]
        if n <= 4096:
            if n > 1:
                d2 = _pairwise_sq_dists(pts)
                np.fill_diagonal(d2, np.inf)
                dmin = float(np.sqrt(np.min(d2)))
                if dmin <= floor:
                    raise GeometryError(
                        f"points are not pairwise distinct at tolerance: min gap {dmin:g} <= {floor:g}"
                    )
        else:
            # Large lattices: exact-duplicate scan via lexicographic sort only.
            order = np.lexsort(pts.T[::-1])
            gaps = np.linalg.norm(np.diff(pts[order], axis=0), axis=1)
            if gaps.size and float(np.min(gaps)) <= floor:
                raise GeometryError("points contain (near-)duplicates")
        pts.flags.writeable = False

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _pairwise_sq_dists(pts: np.ndarray) -> np.ndarray:
    g = pts @ pts.T
    sq = np.diag(g)
    return np.maximum(sq[:, None] + sq[None, :] - 2.0 * g, 0.0)


@dataclass(frozen=True)
class OptClass:
    """Sorted indices of the sites (co-)nearest to ``witness``.

    Equality and hashing use the index tuple only; the witness is carried
    for diagnostics.
    """

    indices: tuple[int, ...]
    witness: np.ndarray = field(compare=False, repr=False)

    def __post_init__(self):
        if len(self.indices) == 0:
            raise GeometryError("optimality class must be nonempty")
        idx = tuple(sorted(int(i) for i in self.indices))
        object.__setattr__(self, "indices", idx)
        w = np.array(self.witness, dtype=float)
        w.flags.writeable = False
        object.__setattr__(self, "witness", w)

    def __len__(self) -> int:
        return len(self.indices)


def sq_dists_to_sites(x: np.ndarray, kset: PointSet) -> np.ndarray:
    diff = kset.points - x[None, :]
    return np.einsum("ij,ij->i", diff, diff)


def tie_indices(sq: np.ndarray, tie_tolerance: float) -> np.ndarray:
    """Indices within relative ``tie_tolerance`` of the minimal squared distance."""
    dmin = float(np.min(sq))
    return np.flatnonzero(sq <= (1.0 + tie_tolerance) * dmin + 0.0)


def opt_class(x, kset: PointSet) -> OptClass:
    """All site indices whose squared distance to ``x`` ties the minimum.

    Deterministic: the result depends only on the distances and the point
    set's relative tie tolerance.
    """
    xv = _as_vector(x, kset.dim)
    sq = sq_dists_to_sites(xv, kset)
    idx = tie_indices(sq, kset.tie_tolerance)
    return OptClass(indices=tuple(int(i) for i in idx), witness=xv)


# ---------------------------------------------------------------------------
# Minimum-norm point / convex hull projection


def _affine_min_norm(q: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of the min-norm point in the affine hull of rows of q."""
    m = q.shape[0]
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = q @ q.T
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:m]


def _project_exhaustive(vertices: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Projection of x onto conv(vertices) by scanning every face.

    Exact up to linear algebra roundoff; intended for small vertex counts
    (every nonempty subset is solved as an equality-constrained least
    squares problem and kept when its barycentric coordinates are
    feasible).
    """
    m = vertices.shape[0]
    best = None
    best_d = np.inf
    for r in range(1, m + 1):
        for subset in itertools.combinations(range(m), r):
            pts = vertices[list(subset)]
            if r == 1:
                cand = pts[0]
            else:
                q = pts - x[None, :]
                lam = _affine_min_norm(q)
                if np.any(lam < -1e-12):
                    continue
                # Reject inconsistent solutions of singular KKT systems.
                if abs(float(np.sum(lam)) - 1.0) > 1e-8:
                    continue
                cand = lam @ pts
            d = float(np.linalg.norm(cand - x))
            if d < best_d - 1e-15:
                best_d = d
                best = cand
    assert best is not None
    return best


def _project_wolfe(vertices: np.ndarray, x: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Wolfe's minimum-norm-point algorithm on the translated vertex set."""
    q = vertices - x[None, :]
    norms2 = np.einsum("ij,ij->i", q, q)
    start = int(np.argmin(norms2))
    corral = [start]
    lam = np.array([1.0])
    z = q[start].copy()
    scale = 1.0 + float(np.max(norms2))

    for _ in range(max_iter):
        scores = q @ z
        j = int(np.argmin(scores))
        zz = float(z @ z)
        if zz - float(scores[j]) <= tol * scale:
            return z + x
        if j in corral:
            # No progress possible: the optimality gap is pure roundoff.
            return z + x
        corral.append(j)
        lam = np.append(lam, 0.0)

        for _ in range(max_iter):
            sub = q[corral]
            mu = _affine_min_norm(sub)
            if np.all(mu > 1e-12):
                lam = mu
                z = mu @ sub
                break
            # Step from lam toward mu, stopping at the simplex boundary.
            neg = mu <= 1e-12
            denom = lam[neg] - mu[neg]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 1e-15, lam[neg] / denom, np.inf)
            theta = min(1.0, float(np.min(ratios)))
            lam = (1.0 - theta) * lam + theta * mu
            keep = lam > 1e-12
            if not np.any(keep):
                keep[int(np.argmax(lam))] = True
            corral = [c for c, k in zip(corral, keep) if k]
            lam = lam[keep]
            lam = lam / float(np.sum(lam))
            z = lam @ q[corral]
        else:
            raise MinNormError("minor cycle failed to converge")

    raise MinNormError(f"Wolfe iteration cap ({max_iter}) exceeded")


def min_norm_point(vertices, x, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Unique projection of ``x`` onto the convex hull of ``vertices``.

    Uses exhaustive face enumeration when there are at most d+1 vertices,
    Wolfe's minimum-norm-point algorithm otherwise (iteration cap
    10*(len(vertices)+d)). The returned point satisfies the variational
    inequality (p - x)·(v - p) >= -1e-9·scale for every vertex v; a
    violation raises :class:`MinNormError`.
    """
    verts = _as_points(vertices)
    xv = _as_vector(x, verts.shape[1])
    m, d = verts.shape
    cap = max_iter if max_iter is not None else 10 * (m + d)
    if m <= d + 1:
        p = _project_exhaustive(verts, xv)
    else:
        p = _project_wolfe(verts, xv, tol, cap)
    scale = 1.0 + float(np.max(np.abs(verts - xv[None, :]))) ** 2
    resid = float(np.min((verts - p[None, :]) @ (p - xv)))
    if resid < -1e-9 * scale:
        raise MinNormError(f"variational inequality violated by {-resid:g}")
    return p


# ---------------------------------------------------------------------------
# Cell frames


@dataclass(frozen=True)
class CellFrame:
    """Orthogonal frame of a nearest-site class.

    ``basis_a`` spans the directions between the class sites; ``basis_b``
    spans their equidistance locus. Both are orthonormal row stacks and
    together span R^d. ``p_h`` is the unique point lying in both affine
    pieces.
    """

    opt: OptClass
    basis_a: np.ndarray
    basis_b: np.ndarray
    p_h: np.ndarray

    def __post_init__(self):
        for name in ("basis_a", "basis_b", "p_h"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def cell_frame(opt: OptClass, kset: PointSet) -> CellFrame:
    """Frame of the class: site-span directions, equidistance directions, pivot.

    Rank decisions use an SVD cutoff of 1e-10 times the largest singular
    value. Raises :class:`FrameError` when the equidistance system is
    inconsistent beyond tolerance (the class has no equidistance locus).
    """
    d = kset.dim
    pts = kset.points[list(opt.indices)]
    m = pts.shape[0]
    if m == 1:
        return CellFrame(
            opt=opt,
            basis_a=np.zeros((0, d)),
            basis_b=np.eye(d),
            p_h=pts[0].copy(),
        )
    diffs = pts[1:] - pts[0][None, :]
    _, sing, vt = np.linalg.svd(diffs, full_matrices=True)
    cutoff = 1e-10 * float(sing[0]) if sing.size else 0.0
    rank = int(np.sum(sing > cutoff))
    basis_a = vt[:rank]
    basis_b = vt[rank:]

    # Equidistance system: 2(p_j - p_0)·x = |p_j|^2 - |p_0|^2, solved on the
    # site-span so the intersection point with the equidistance locus pops out.
    lhs_full = 2.0 * diffs
    rhs = np.einsum("ij,ij->i", pts[1:], pts[1:]) - float(pts[0] @ pts[0])
    lhs = lhs_full @ basis_a.T
    rhs_rel = rhs - lhs_full @ pts[0]
    t, *_ = np.linalg.lstsq(lhs, rhs_rel, rcond=None)
    p_h = pts[0] + basis_a.T @ t
    scale = 1.0 + float(np.max(np.abs(pts)))
    resid = float(np.max(np.abs(lhs_full @ p_h - rhs)))
    if resid > 1e-7 * scale * scale:
        raise FrameError(
            f"class {opt.indices} has no equidistance locus (residual {resid:g}); "
            "near-degenerate site configuration"
        )
    return CellFrame(opt=opt, basis_a=basis_a, basis_b=basis_b, p_h=p_h)


# ---------------------------------------------------------------------------
# Polytopes


@dataclass(frozen=True)
class Polytope:
    """Bounded intersection of halfspaces {x : n·x <= b} with unit normals.

    Construction certifies nonemptiness and boundedness by linear programs
    (feasibility, then min/max of every coordinate); the per-coordinate
    bounds are kept for sampling. Raises :class:`PolytopeError` otherwise.
    """

    normals: np.ndarray
    offsets: np.ndarray
    lo: np.ndarray = field(init=False, compare=False)
    hi: np.ndarray = field(init=False, compare=False)

    def __post_init__(self):
        normals = np.atleast_2d(np.asarray(self.normals, dtype=float))
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        if normals.shape[0] != offsets.shape[0]:
            raise PolytopeError("normals/offsets length mismatch")
        lengths = np.linalg.norm(normals, axis=1)
        if np.any(lengths <= 0):
            raise PolytopeError("zero normal vector")
        normals = normals / lengths[:, None]
        offsets = offsets / lengths
        d = normals.shape[1]

        res = linprog(np.zeros(d), A_ub=normals, b_ub=offsets, bounds=[(None, None)] * d,
                      method="highs")
        if not res.success:
            raise PolytopeError("empty polytope (infeasible halfspace system)")
        lo = np.empty(d)
        hi = np.empty(d)
        for i in range(d):
            c = np.zeros(d)
            c[i] = 1.0
            for sign, store in ((1.0, lo), (-1.0, hi)):
                r = linprog(sign * c, A_ub=normals, b_ub=offsets,
                            bounds=[(None, None)] * d, method="highs")
                if r.status == 3:
                    raise PolytopeError("unbounded polytope")
                if not r.success:
                    raise PolytopeError(f"boundedness certification failed: {r.message}")
                store[i] = sign * r.fun
        for arr, name in ((normals, "normals"), (offsets, "offsets"), (lo, "lo"), (hi, "hi")):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    @classmethod
    def from_box(cls, lo, hi) -> "Polytope":
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        d = lo.shape[0]
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    def intersection(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise PolytopeError("dimension mismatch")
        return Polytope(np.vstack([self.normals, other.normals]),
                        np.concatenate([self.offsets, other.offsets]))

    def contains(self, x, tol: float = 1e-9) -> np.ndarray | bool:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        scale = 1.0 + float(np.max(np.abs(self.offsets), initial=0.0))
        ok = np.all(pts @ self.normals.T <= self.offsets[None, :] + tol * scale, axis=1)
        return bool(ok[0]) if np.asarray(x).ndim == 1 else ok

    def project(self, x, tol: float = 1e-8, max_sweeps: int = 50000) -> np.ndarray:
        """Dykstra projection onto the polytope (batched over rows of x)."""
        single = np.asarray(x).ndim == 1
        pts = np.atleast_2d(np.asarray(x, dtype=float)).copy()
        n, d = pts.shape
        m = self.normals.shape[0]
        corr = np.zeros((m, n, d))
        prev = pts.copy()
        for _ in range(max_sweeps):
            for i in range(m):
                y = pts + corr[i]
                viol = y @ self.normals[i] - self.offsets[i]
                step = np.maximum(viol, 0.0)
                proj = y - step[:, None] * self.normals[i][None, :]
                corr[i] = y - proj
                pts = proj
            move = float(np.max(np.linalg.norm(pts - prev, axis=1)))
            if move <= tol:
                res = pts[0] if single else pts
                return res
            prev = pts.copy()
        raise PolytopeError("Dykstra projection failed to converge")

    def distance(self, x, tol: float = 1e-8) -> np.ndarray | float:
        proj = self.project(x, tol=tol)
        if np.asarray(x).ndim == 1:
            return float(np.linalg.norm(np.asarray(x, dtype=float) - proj))
        return np.linalg.norm(np.atleast_2d(np.asarray(x, dtype=float)) - proj, axis=1)

    def sample(self, count: int, rng: np.random.Generator, max_draws: int = 10_000_000) -> np.ndarray:
        """First ``count`` accepted rejection samples, uniform on the polytope.

        The accepted stream is a prefix-stable function of the generator
        state, so doubling ``count`` extends the sample rather than
        reshuffling it.
        """
        out = []
        drawn = 0
        width = self.hi - self.lo
        while sum(len(o) for o in out) < count:
            if drawn > max_draws:
                raise PolytopeError("rejection sampling budget exceeded (thin polytope?)")
            block = self.lo + rng.random((max(256, count), self.dim)) * width
            drawn += block.shape[0]
            out.append(block[self.contains(block)])
        return np.vstack(out)[:count]


def polytope_distance_ratio(a: Polytope, b: Polytope, samples: int, seed: int) -> float:
    """Empirical max of dist_{A∩B}(x) / dist_B(x) over samples x drawn in A, x outside B.

    The intersection must be nonempty (certified by LP at construction of
    the intersection polytope). Samples already in B contribute 0/0 and are
    skipped; with a fixed seed the sample stream is prefix-stable in
    ``samples``, so the estimate is monotone nondecreasing in the sample
    count.
    """
    inter = a.intersection(b)  # raises PolytopeError when A∩B is empty
    rng = np.random.default_rng(seed)
    pts = a.sample(samples, rng)
    scale = 1.0 + float(np.max(np.abs(pts)))
    d_b = np.asarray(b.distance(pts))
    outside = d_b > 1e-9 * scale
    if not np.any(outside):
        return 0.0
    d_ib = np.asarray(inter.distance(pts[outside]))
    ratios = d_ib / d_b[outside]
    return float(np.max(ratios))


# ---------------------------------------------------------------------------
# Text interchange formats


def load_point_set(path, tie_tolerance: float = 1e-9) -> PointSet:
    """Read a point set: first line ``d N``, then N rows of d coordinates."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise GeometryError(f"{path}: truncated point-set file")
    d, n = int(tokens[0]), int(tokens[1])
    vals = [float(t) for t in tokens[2:]]
    if len(vals) != d * n:
        raise GeometryError(f"{path}: expected {d * n} coordinates, found {len(vals)}")
    return PointSet(np.array(vals).reshape(n, d), tie_tolerance=tie_tolerance)


def save_point_set(path, kset: PointSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{kset.dim} {kset.n}\n")
        for row in kset.points:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_polytope(path) -> Polytope:
    """Read a polytope: first line ``d m``, then m rows ``n_1 .. n_d b``."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise PolytopeError(f"{path}: truncated polytope file")
    d, m = int(tokens[0]), int(tokens[1])
    vals = [float(t) for t in tokens[2:]]
    if len(vals) != (d + 1) * m:
        raise PolytopeError(f"{path}: expected {(d + 1) * m} numbers, found {len(vals)}")
    rows = np.array(vals).reshape(m, d + 1)
    return Polytope(rows[:, :d], rows[:, d])
