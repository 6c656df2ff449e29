"""Discrete gravitational model driven by optimal assignment distance.

``m`` equal particles live on the n-torus; a configuration is lifted to
R^(n*m) and its potential is the squared distance to the union of the m!
permuted copies of the base-point lattice, truncated to integer
translates with max-norm at most a window ``W``. Trajectories are local
minimizers of the action functional from :mod:`voract.action` over that
site set; particle collisions show up as boundary (tie-class) riding and
shocks of the lifted path.

`window_certificate` checks that the truncation is inert: no nearest-site
class along a path touches a translate on the window shell, so enlarging
the window cannot change any class. `stability_run` solves a sequence of
site sets/endpoints for convergence inspection of minimal actions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .action import MinimizeResult, Shape, SolverConfig, Path, minimize
from .geometry import PointSet, _as_vector
from .potential import batch_field

__all__ = [
    "MagError",
    "MagSystem",
    "build_mag",
    "default_window",
    "window_certificate",
    "particle_paths",
    "stability_run",
    "interior_balance_verdict",
]

SITE_BUDGET = 1_000_000
MAX_PARTICLES = 5


class MagError(ValueError):
    """Invalid model construction or budget overflow."""


@dataclass(frozen=True)
class MagSystem:
    """Truncated permutation-lattice site set for m particles on the n-torus.

    ``kset`` holds exactly the points (a_{sigma(1)}, ..., a_{sigma(m)}) + z
    over all permutations sigma and integer translates z with
    ``max|z| <= window``; ``labels`` records (sigma, z) per site row.
    """

    n: int
    m: int
    base_points: np.ndarray
    window: int
    kset: PointSet
    labels: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]

    def __post_init__(self):
        arr = np.array(self.base_points, dtype=float)
        arr.flags.writeable = False
        object.__setattr__(self, "base_points", arr)

    @property
    def dim(self) -> int:
        return self.n * self.m

    def translate_sup(self, site_index: int) -> int:
        """Max-norm of the integer translate generating the given site."""
        return max(abs(z) for z in self.labels[site_index][1])


def build_mag(base_points, n: int, m: int, window: int) -> MagSystem:
    """Enumerate the truncated permutation lattice and validate it.

    ``base_points`` are m distinct points in [0,1)^n. Budgets: m <= 5 and
    at most 10^6 sites.
    """
    base = np.atleast_2d(np.asarray(base_points, dtype=float))
    if base.shape != (m, n):
        raise MagError(f"expected {m} base points of dimension {n}, got shape {base.shape}")
    if np.any(base < 0.0) or np.any(base >= 1.0):
        raise MagError("base points must lie in [0, 1)^n")
    if m > MAX_PARTICLES:
        raise MagError(f"particle count capped at {MAX_PARTICLES} (factorial growth)")
    if window < 1:
        raise MagError("window must be at least 1")
    count = math.factorial(m) * (2 * window + 1) ** (n * m)
    if count > SITE_BUDGET:
        raise MagError(f"site budget exceeded: {count} > {SITE_BUDGET}")

    translates = list(itertools.product(range(-window, window + 1), repeat=n * m))
    rows = []
    labels = []
    for sigma in itertools.permutations(range(m)):
        stacked = base[list(sigma)].reshape(-1)
        for z in translates:
            rows.append(stacked + np.array(z, dtype=float))
            labels.append((sigma, z))
    pts = np.array(rows)
    # Distinctness is structural for distinct base points; verify anyway.
    order = np.lexsort(pts.T[::-1])
    gaps = np.linalg.norm(np.diff(pts[order], axis=0), axis=1)
    if gaps.size and float(np.min(gaps)) < 1e-9:
        raise MagError("duplicate sites: base points too close or not distinct")
    return MagSystem(
        n=n, m=m, base_points=base, window=window,
        kset=PointSet(pts),
        labels=tuple(labels),
    )


def default_window(base_points, n: int, m: int, *endpoints) -> int:
    """Window policy: ceil of the largest lifted coordinate magnitude, plus one.

    A path staying within that magnitude cannot have nearest sites beyond
    the window shell; `window_certificate` verifies this after the fact and
    a failure means the window must be raised.
    """
    coords = [np.asarray(e, dtype=float).reshape(-1) for e in endpoints]
    coords.append(np.asarray(base_points, dtype=float).reshape(-1))
    spread = max(float(np.max(np.abs(c))) for c in coords)
    return int(np.ceil(spread)) + 1


def window_certificate(system: MagSystem, path: Path) -> bool:
    """True iff no class along the path touches the translate shell.

    When every nearest-site class only uses translates with max-norm
    strictly below the window, enlarging the window cannot change any
    class along the path, so the truncation is sound.
    """
    if path.dim != system.dim:
        raise MagError("path dimension does not match the lifted configuration space")
    classes, _, _ = batch_field(path.nodes, system.kset)
    shell = system.window
    for cls in classes:
        for idx in cls:
            if system.translate_sup(idx) >= shell:
                return False
    return True


def particle_paths(system: MagSystem, path: Path):
    """Split a lifted trajectory into per-particle lifted and torus tracks.

    Returns ``(lifted, torus)``: each a list of m arrays of shape
    (nodes, n); the torus track is the lifted one reduced mod 1.
    """
    if path.dim != system.dim:
        raise MagError("path dimension does not match the lifted configuration space")
    blocks = path.nodes.reshape(path.nodes.shape[0], system.m, system.n)
    lifted = [blocks[:, i, :].copy() for i in range(system.m)]
    torus = [np.mod(b, 1.0) for b in lifted]
    return lifted, torus


def interior_balance_verdict(system: MagSystem, probe_count: int = 2000, seed: int = 0):
    """Balancedness verdict restricted to truncation-inert cells.

    Probes one lattice period around the base cell (every inert cell type
    has a representative there by periodicity): uniform samples plus
    midpoints of nearby inert site pairs and offsets along their bisector
    hyperplanes. A witnessed class counts only when none of its sites
    touches the translate shell, so its structure agrees with the
    untruncated lattice. Returns ``(balanced, witness_pair, cell_count)``.
    """
    k = system.kset
    d = system.dim
    rng = np.random.default_rng(seed)
    lo = np.full(d, -0.25)
    hi = np.full(d, 1.25)
    probes = [lo + rng.random((probe_count, d)) * (hi - lo)]

    inert_sites = [i for i in range(k.n) if system.translate_sup(i) < system.window]
    pts = k.points[inert_sites]
    period = np.max(np.linalg.norm(system.base_points, axis=1)) + 1.0
    for i in range(len(inert_sites)):
        for j in range(i + 1, len(inert_sites)):
            pi, pj = pts[i], pts[j]
            mid = 0.5 * (pi + pj)
            if np.any(mid < lo) or np.any(mid > hi):
                continue
            gap = pj - pi
            span = float(np.linalg.norm(gap))
            if span > period:
                continue
            probes.append(mid[None, :])
            basis = np.linalg.svd((gap / span)[None, :], full_matrices=True)[2][1:]
            for t in (0.05, 0.15, 0.35):
                step = 0.5 * t * span
                probes.append(mid[None, :] + step * basis)
                probes.append(mid[None, :] - step * basis)

    shell = system.window
    cell_eta: dict[tuple[int, ...], np.ndarray] = {}
    for block in probes:
        classes, etas, _ = batch_field(block, k)
        for cls, eta in zip(classes, etas):
            if cls not in cell_eta and all(system.translate_sup(i) < shell for i in cls):
                cell_eta[cls] = eta

    seen: list[tuple[np.ndarray, tuple[int, ...]]] = []
    for cls in sorted(cell_eta):
        eta = cell_eta[cls]
        for other_eta, other_cls in seen:
            if float(np.linalg.norm(other_eta - eta)) <= 1e-7:
                return False, (other_cls, cls), len(cell_eta)
        seen.append((eta, cls))
    return True, None, len(cell_eta)


def stability_run(k_sequence, endpoints_sequence, delta: float, shape: Shape,
                  cfg: SolverConfig) -> list[MinimizeResult]:
    """Minimize over a sequence of site sets and endpoint pairs.

    All sets must share one ambient dimension; results are returned in
    order for convergence inspection of the minimal actions.
    """
    k_sequence = list(k_sequence)
    endpoints_sequence = list(endpoints_sequence)
    if len(k_sequence) != len(endpoints_sequence):
        raise MagError("site-set and endpoint sequences must have equal length")
    dims = {k.dim for k in k_sequence}
    if len(dims) != 1:
        raise MagError("all site sets must share one dimension")
    results = []
    for kset, (x0, x1) in zip(k_sequence, endpoints_sequence):
        a = _as_vector(x0, kset.dim)
        b = _as_vector(x1, kset.dim)
        results.append(minimize(a, b, delta, kset, shape, cfg))
    return results
