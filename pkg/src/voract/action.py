"""Discretized action functionals over site-set distance potentials.

The functional is the time integral of ``|path'|^2 + h(slope_sq(path))``
where ``slope_sq`` is the squared extended gradient of the opposite
squared distance field of a :class:`~voract.geometry.PointSet` and ``h``
is an increasing C^1 potential shape. Paths are uniform-time node chains
with fixed endpoints; the kinetic term is the forward-difference square
sum and the potential term is the trapezoid rule on node values.

The minimizer runs multi-start preconditioned descent with mesh doubling.
The potential is discontinuous across nearest-site cell boundaries, so
nodes sitting exactly on a boundary (tie class) are treated as pinned:
their descent direction is projected onto the boundary's equidistance
directions, and dedicated release/capture trial moves (single-node move
plus a short relaxation, accepted only on strict objective decrease) let
boundary-riding segments shrink or grow across the potential jump, which
no smooth line search can cross.

A layered-graph dynamic program (`dp_oracle`) provides an independent
lower-fidelity solution used both as a solver seed and as a
cross-validation oracle, and `constrained_minimize` solves the smooth
convex-constrained companion problem by projected descent.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, OptClass, PointSet, Polytope, cell_frame, _as_vector
from .potential import batch_field, batch_field_light

__all__ = [
    "ActionError",
    "GridBudgetError",
    "Shape",
    "Path",
    "ActionBreakdown",
    "SolverConfig",
    "GridSpec",
    "MinimizeResult",
    "StartSummary",
    "evaluate_action",
    "action_gradient",
    "minimize",
    "dp_oracle",
    "constrained_minimize",
    "seed_grid_spec",
]


class ActionError(ValueError):
    """Invalid solver input or failed action computation."""


class GridBudgetError(ActionError):
    """Dynamic-programming grid exceeds the node/edge budget."""


# ---------------------------------------------------------------------------
# Shapes, paths, breakdowns, configs


@dataclass(frozen=True)
class Shape:
    """Increasing C^1 potential shape applied to the squared slope.

    Supported kinds: ``identity``, ``power`` (s^p, p > 0) and ``affine``
    (a*s + b, a > 0, b >= 0). Construction validates monotonicity on a
    grid and the closed-form derivative against centered differences.
    """

    kind: str = "identity"
    p: float = 1.0
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "power", "affine"):
            raise ActionError(f"unknown shape kind {self.kind!r}")
        if self.kind == "power" and self.p <= 0:
            raise ActionError("power shape needs p > 0")
        if self.kind == "affine" and (self.a <= 0 or self.b < 0):
            raise ActionError("affine shape needs a > 0 and b >= 0")
        grid = np.linspace(0.0, 10.0, 101)
        vals = self.h(grid)
        if vals[0] < 0 or np.any(np.diff(vals) <= 0):
            raise ActionError("shape must be nonnegative at 0 and strictly increasing")
        s = np.linspace(0.05, 10.0, 64)
        eps = 1e-5 * (1.0 + s)
        fd = (self.h(s + eps) - self.h(s - eps)) / (2.0 * eps)
        rel = np.abs(fd - self.h_prime(s)) / np.maximum(np.abs(fd), 1e-12)
        if float(np.max(rel)) > 1e-6:
            raise ActionError("shape derivative disagrees with finite differences")

    def h(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "identity":
            return s.copy()
        if self.kind == "power":
            return np.power(s, self.p)
        return self.a * s + self.b

    def h_prime(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "identity":
            return np.ones_like(s)
        if self.kind == "power":
            with np.errstate(divide="ignore"):
                out = self.p * np.power(s, self.p - 1.0)
            return out
        return np.full_like(s, self.a)

    @classmethod
    def identity(cls) -> "Shape":
        return cls("identity")

    @classmethod
    def power(cls, p: float) -> "Shape":
        return cls("power", p=float(p))

    @classmethod
    def affine(cls, a: float, b: float) -> "Shape":
        return cls("affine", a=float(a), b=float(b))


@dataclass(frozen=True)
class Path:
    """Uniform-time node chain on [0, delta].

    The endpoint-fixed flags record the boundary conditions carried by the
    chain; every solver in this module requires both to be set (free
    endpoints are unsupported).
    """

    delta: float
    nodes: np.ndarray
    fixed_start: bool = True
    fixed_end: bool = True

    def __post_init__(self):
        nodes = np.atleast_2d(np.array(self.nodes, dtype=float))
        if self.delta <= 0:
            raise ActionError("delta must be positive")
        if nodes.shape[0] < 3:
            raise ActionError("a path needs at least 2 intervals")
        if not np.all(np.isfinite(nodes)):
            raise ActionError("path nodes must be finite")
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @property
    def m_intervals(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def dt(self) -> float:
        return self.delta / self.m_intervals

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.delta, self.nodes.shape[0])

    @classmethod
    def from_line(cls, x0, x1, delta: float, m_intervals: int) -> "Path":
        a = _as_vector(x0)
        b = _as_vector(x1, a.shape[0])
        t = np.linspace(0.0, 1.0, m_intervals + 1)[:, None]
        return cls(delta, a[None, :] * (1.0 - t) + b[None, :] * t)

    def refined(self) -> "Path":
        """Mesh-doubled path: old nodes kept, midpoints linearly interpolated."""
        m = self.m_intervals
        out = np.empty((2 * m + 1, self.dim))
        out[::2] = self.nodes
        out[1::2] = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        return Path(self.delta, out, self.fixed_start, self.fixed_end)


@dataclass(frozen=True)
class ActionBreakdown:
    kinetic: float
    potential: float
    total: float
    kinetic_terms: np.ndarray = field(repr=False)
    potential_terms: np.ndarray = field(repr=False)

    @property
    def per_interval(self) -> list[tuple[float, float]]:
        return list(zip(self.kinetic_terms.tolist(), self.potential_terms.tolist()))


@dataclass(frozen=True)
class SolverConfig:
    """Minimizer knobs: final mesh, doubling stages, starts, tolerances."""

    M: int = 512
    refinements: int = 3
    starts: int = 4
    seed: int = 0
    step_init: float = 1.0
    grad_tol: float = 1e-5
    max_iters: int = 4000

    def __post_init__(self):
        if min(self.M, self.refinements + 1, self.starts, self.max_iters) <= 0:
            raise ActionError("solver config fields must be positive")
        if self.step_init <= 0:
            raise ActionError("step_init must be positive")
        if self.grad_tol < 1e-12:
            raise ActionError("grad_tol must be at least 1e-12")
        if self.M >> self.refinements < 4:
            raise ActionError("too many refinements for this M (coarse mesh < 4)")


@dataclass(frozen=True)
class StartSummary:
    label: str
    action: float
    converged: bool
    dev_from_best: float


@dataclass(frozen=True)
class MinimizeResult:
    path: Path
    breakdown: ActionBreakdown
    converged: bool
    grad_norm: float
    starts: tuple[StartSummary, ...]
    prev_path: Path
    prev_breakdown: ActionBreakdown


# ---------------------------------------------------------------------------
# Evaluation and gradient


def _slope_sq(nodes: np.ndarray, kset: PointSet):
    return batch_field(nodes, kset)


def evaluate_action(path: Path, kset: PointSet, shape: Shape) -> ActionBreakdown:
    """Discrete action of the path: forward-difference kinetic terms plus
    trapezoid potential terms on node values."""
    if path.dim != kset.dim:
        raise ActionError("path/point-set dimension mismatch")
    dt = path.dt
    diffs = np.diff(path.nodes, axis=0)
    kin = np.einsum("ij,ij->i", diffs, diffs) / dt
    _, _, s = _slope_sq(path.nodes, kset)
    hvals = shape.h(s)
    pot = dt * 0.5 * (hvals[:-1] + hvals[1:])
    return ActionBreakdown(
        kinetic=float(np.sum(kin)),
        potential=float(np.sum(pot)),
        total=float(np.sum(kin) + np.sum(pot)),
        kinetic_terms=kin,
        potential_terms=pot,
    )


def _interior_gradient(nodes: np.ndarray, etas: np.ndarray, slope_sq: np.ndarray,
                       dt: float, shape: Shape) -> np.ndarray:
    """Gradient of the discrete action at interior nodes, eta frozen per node."""
    kin = 2.0 * (2.0 * nodes[1:-1] - nodes[:-2] - nodes[2:]) / dt
    hp = shape.h_prime(slope_sq[1:-1])
    pot = dt * hp[:, None] * 2.0 * (nodes[1:-1] - etas[1:-1])
    return kin + pot


def action_gradient(path: Path, kset: PointSet, shape: Shape) -> np.ndarray:
    """Exact gradient of the discrete action at interior nodes.

    Where a node lies on a cell boundary (its class has several sites) the
    deterministic subgradient choice is the cell of the lexicographically
    smallest class, i.e. the singleton of the smallest site index.
    """
    classes, etas, s = _slope_sq(path.nodes, kset)
    etas = etas.copy()
    s = s.copy()
    for k, cls in enumerate(classes):
        if len(cls) >= 2:
            p = kset.points[cls[0]]
            etas[k] = p
            diff = path.nodes[k] - p
            s[k] = float(diff @ diff)
    return _interior_gradient(path.nodes, etas, s, path.dt, shape)


# ---------------------------------------------------------------------------
# Descent engine


class _Descent:
    """Preconditioned descent on the interior nodes of one mesh.

    Pinned nodes (tie classes) move only along their boundary's
    equidistance directions; release/capture trial moves handle the
    discontinuous jumps. Deterministic throughout.
    """

    RELAX_ITERS = 60

    def __init__(self, kset: PointSet, shape: Shape, delta: float, cfg: SolverConfig):
        self.kset = kset
        self.shape = shape
        self.delta = delta
        self.cfg = cfg
        self._frames: dict[tuple[int, ...], np.ndarray] = {}
        self._etas: dict[tuple[int, ...], np.ndarray] = {}

    # -- objective pieces ---------------------------------------------------

    def value(self, nodes: np.ndarray) -> float:
        dt = self.delta / (nodes.shape[0] - 1)
        diffs = np.diff(nodes, axis=0)
        kin = float(np.sum(np.einsum("ij,ij->i", diffs, diffs))) / dt
        _, s, _, _ = batch_field_light(nodes, self.kset, self._etas)
        h = self.shape.h(s)
        pot = dt * (0.5 * h[0] + float(np.sum(h[1:-1])) + 0.5 * h[-1])
        return kin + pot

    def _tangent(self, cls: tuple[int, ...]) -> np.ndarray:
        basis = self._frames.get(cls)
        if basis is None:
            frame = cell_frame(OptClass(cls, self.kset.points[cls[0]]), self.kset)
            basis = frame.basis_b
            self._frames[cls] = basis
        return basis

    def _project_pinned(self, arr: np.ndarray, pin_groups) -> np.ndarray:
        """Project the rows of pinned interior nodes onto their tangent spaces."""
        for cls, rows in pin_groups:
            basis = self._tangent(cls)
            if basis.shape[0]:
                arr[rows] = (arr[rows] @ basis.T) @ basis
            else:
                arr[rows] = 0.0
        return arr

    def _state(self, nodes: np.ndarray):
        dt = self.delta / (nodes.shape[0] - 1)
        n_int = nodes.shape[0] - 2
        etas, s, tie_mask, groups = batch_field_light(nodes, self.kset, self._etas)
        g = _interior_gradient(nodes, etas, s, dt, self.shape)
        pin_groups = []
        for cls, rows in groups:
            interior = rows[(rows >= 1) & (rows <= n_int)] - 1
            if interior.size:
                pin_groups.append((cls, interior))
        g_eff = self._project_pinned(g.copy(), pin_groups)
        return s, g_eff, pin_groups, dt

    def _direction(self, g_eff: np.ndarray, pin_groups, s: np.ndarray, dt: float) -> np.ndarray:
        """Newton-like step: tridiagonal solve, then tangent projection.

        Pinned rows with a nontrivial tangent stay coupled (Newton along
        boundary-riding valleys; the post-projected solve remains a
        descent direction for the projected gradient). Fully pinned rows
        (zero-dimensional tangent) cannot move at all and are decoupled,
        so their free neighbors see them as Dirichlet data.
        """
        n = g_eff.shape[0]
        diag = np.full(n, 4.0 / dt) + 2.0 * dt * np.maximum(self.shape.h_prime(s[1:-1]), 0.0) + 1e-12
        lower = np.full(n, -2.0 / dt)
        upper = np.full(n, -2.0 / dt)
        lower[0] = 0.0
        upper[-1] = 0.0
        fixed = [rows for cls, rows in pin_groups if self._tangent(cls).shape[0] == 0]
        if fixed:
            idx = np.concatenate(fixed)
            lower[idx] = 0.0
            upper[idx] = 0.0
            after = idx[idx + 1 < n] + 1
            lower[after] = 0.0
            before = idx[idx - 1 >= 0] - 1
            upper[before] = 0.0
        # Thomas algorithm, vectorized over coordinates.
        rhs = g_eff.copy()
        cp = np.empty(n)
        cp[0] = upper[0] / diag[0]
        rhs[0] = rhs[0] / diag[0]
        for i in range(1, n):
            denom = diag[i] - lower[i] * cp[i - 1]
            cp[i] = upper[i] / denom
            rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom
        for i in range(n - 2, -1, -1):
            rhs[i] -= cp[i] * rhs[i + 1]
        return self._project_pinned(rhs, pin_groups)

    # -- main loop ------------------------------------------------------------

    def solve(self, nodes: np.ndarray, max_iters: int, allow_moves: bool = True):
        nodes = nodes.copy()
        f0 = self.value(nodes)
        alpha = self.cfg.step_init
        grad_norm = np.inf
        it = 0
        while it < max_iters:
            it += 1
            s, g_eff, pin_groups, dt = self._state(nodes)
            grad_norm = float(np.max(np.linalg.norm(g_eff, axis=1), initial=0.0))
            if grad_norm <= self.cfg.grad_tol:
                if allow_moves:
                    moved, nodes, f0 = self._trial_moves(nodes, f0)
                    if moved:
                        continue
                return nodes, True, grad_norm, it
            direction = self._direction(g_eff, pin_groups, s, dt)
            slope = float(np.sum(g_eff * direction))
            if slope <= 0:
                direction = g_eff
                slope = float(np.sum(g_eff * g_eff))
            accepted = False
            step = alpha
            for _ in range(45):
                trial = nodes.copy()
                trial[1:-1] -= step * direction
                f_trial = self.value(trial)
                if f_trial <= f0 - 1e-4 * step * slope:
                    nodes, f0 = trial, f_trial
                    alpha = min(step * 1.6, 16.0)
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                if allow_moves:
                    moved, nodes, f0 = self._trial_moves(nodes, f0)
                    if moved:
                        alpha = self.cfg.step_init
                        continue
                return nodes, grad_norm <= self.cfg.grad_tol, grad_norm, it
        return nodes, grad_norm <= self.cfg.grad_tol, grad_norm, it

    # -- release / capture ------------------------------------------------------

    def _trial_moves(self, nodes, f0):
        """Try boundary release/capture moves; keep the best strict improvement.

        Each candidate moves one node across the potential jump and then
        relaxes briefly with moves disabled; the loop is monotone in the
        objective by construction.
        """
        n_total = nodes.shape[0]
        moved_any = False
        for _ in range(64):
            _, _, tie_mask, groups = batch_field_light(nodes, self.kset, self._etas)
            tie_classes = {int(r): cls for cls, rows in groups for r in rows}
            candidates = []
            for k in range(1, n_total - 1):
                for nb in (k - 1, k + 1):
                    if tie_mask[k] and not tie_mask[nb]:
                        # Release: slide the boundary node toward the free side.
                        base = nodes[k]
                        target = nodes[nb]
                        for w in (0.5, 1.0):
                            candidates.append((k, base + w * (target - base)))
                    elif not tie_mask[k] and tie_mask[nb]:
                        # Capture: project the free node onto the neighbor's boundary plane.
                        cls = tie_classes[nb]
                        try:
                            frame = cell_frame(OptClass(cls, nodes[nb]), self.kset)
                        except GeometryError:
                            continue
                        rel = nodes[k] - frame.p_h
                        proj = frame.p_h + (frame.basis_b.T @ (frame.basis_b @ rel)
                                            if frame.basis_b.shape[0] else 0.0)
                        candidates.append((k, proj))
            if not candidates:
                return moved_any, nodes, f0
            best = None
            for k, pos in candidates:
                trial = nodes.copy()
                trial[k] = pos
                relaxed, _, _, _ = self.solve(trial, self.RELAX_ITERS, allow_moves=False)
                f_trial = self.value(relaxed)
                if f_trial < f0 - 1e-12 * (1.0 + abs(f0)) and (best is None or f_trial < best[0]):
                    best = (f_trial, relaxed)
            if best is None:
                return moved_any, nodes, f0
            f0, nodes = best
            moved_any = True
        return moved_any, nodes, f0


# ---------------------------------------------------------------------------
# Multi-start minimization with mesh refinement


def _interp_to_mesh(path_nodes: np.ndarray, delta: float, m_target: int) -> np.ndarray:
    t_src = np.linspace(0.0, delta, path_nodes.shape[0])
    t_dst = np.linspace(0.0, delta, m_target + 1)
    out = np.empty((m_target + 1, path_nodes.shape[1]))
    for j in range(path_nodes.shape[1]):
        out[:, j] = np.interp(t_dst, t_src, path_nodes[:, j])
    return out


def seed_grid_spec(x0, xdelta, delta: float, kset: PointSet) -> "GridSpec":
    """Grid specification used when seeding the minimizer from the DP oracle.

    The box covers the endpoints with a unit-order margin; per-axis grids
    snap to endpoint, site and pairwise-midpoint coordinates so boundary
    wells are exactly representable.
    """
    a = _as_vector(x0, kset.dim)
    b = _as_vector(xdelta, kset.dim)
    span = float(np.linalg.norm(b - a))
    margin = max(1.0, 0.5 * span)
    lo = np.minimum(a, b) - margin
    hi = np.maximum(a, b) + margin
    d = kset.dim
    points_per_axis = {1: 481, 2: 61, 3: 25}[d]
    res = float(np.max(hi - lo)) / (points_per_axis - 1)
    snap = []
    for ax in range(d):
        vals = [a[ax], b[ax]]
        vals.extend(kset.points[:, ax].tolist())
        if kset.n <= 60:
            pts = kset.points[:, ax]
            vals.extend((0.5 * (pts[:, None] + pts[None, :])).ravel().tolist())
        snap.append(tuple(sorted(set(float(np.round(v, 12)) for v in vals))))
    dist0 = float(np.min(np.linalg.norm(kset.points - a[None, :], axis=1)))
    dist1 = float(np.min(np.linalg.norm(kset.points - b[None, :], axis=1)))
    v_scale = max(1.0, span / delta, dist0, dist1)
    # Time slicing is tied to the spatial resolution so the speed quantum
    # res * T / delta stays a usable fraction of the typical speed.
    t_slices = int(np.clip(round(delta * 0.5 * v_scale / res), 20, 400))
    return GridSpec(lo=lo, hi=hi, resolution=res, time_slices=t_slices,
                    vmax=4.0 * v_scale, snap_axes=tuple(snap))


def minimize(x0, xdelta, delta: float, kset: PointSet, shape: Shape,
             cfg: SolverConfig = SolverConfig()) -> MinimizeResult:
    """Multi-start minimization of the discrete action with mesh doubling.

    Starts: the straight chord, a DP-oracle seed (dimension <= 3), and
    seeded smooth Gaussian perturbations of the chord. Every start is
    descended through all refinement stages; the result is the best final
    minimizer ordered by (action, start index). Deterministic for a fixed
    seed. If no start meets the gradient tolerance the best iterate is
    returned flagged non-converged.
    """
    a = _as_vector(x0, kset.dim)
    b = _as_vector(xdelta, kset.dim)
    if delta <= 0:
        raise ActionError("delta must be positive")
    m0 = max(cfg.M >> cfg.refinements, 4)
    meshes = [m0 * (1 << i) for i in range(cfg.refinements + 1)]
    if meshes[-1] != cfg.M:
        meshes = sorted(set(meshes + [cfg.M]))

    starts: list[tuple[str, np.ndarray]] = []
    chord = Path.from_line(a, b, delta, m0).nodes.copy()
    starts.append(("straight", chord))
    if kset.dim <= 3:
        try:
            dp_path = dp_oracle(a, b, delta, kset, shape, seed_grid_spec(a, b, delta, kset))
            starts.append(("dp", _interp_to_mesh(dp_path.nodes, delta, m0)))
        except GridBudgetError:
            pass
    rng = np.random.default_rng(cfg.seed)
    scale = 0.1 * max(1.0, float(np.linalg.norm(b - a)))
    n_perturb = max(cfg.starts - len(starts), 0)
    t_env = np.sin(np.pi * np.linspace(0.0, 1.0, m0 + 1))[:, None]
    for i in range(n_perturb):
        noise = rng.standard_normal((m0 + 1, kset.dim))
        for _ in range(2):  # cheap smoothing
            noise[1:-1] = (noise[:-2] + noise[1:-1] + noise[2:]) / 3.0
        starts.append((f"perturb{i}", chord + scale * t_env * noise))

    engine = _Descent(kset, shape, delta, cfg)
    results = []
    for label, nodes in starts:
        prev_nodes = None
        converged = False
        gnorm = np.inf
        for mi, m in enumerate(meshes):
            if nodes.shape[0] != m + 1:
                nodes = _interp_to_mesh(nodes, delta, m)
            nodes[0], nodes[-1] = a, b
            nodes, converged, gnorm, _ = engine.solve(nodes, cfg.max_iters)
            if mi == len(meshes) - 2:
                prev_nodes = nodes.copy()
        if prev_nodes is None:
            prev_nodes = nodes.copy()
        results.append((label, nodes, prev_nodes, converged, gnorm))

    actions = [engine.value(r[1]) for r in results]
    order = sorted(range(len(results)), key=lambda i: (actions[i], i))
    best = order[0]
    label, nodes, prev_nodes, converged, gnorm = results[best]
    best_path = Path(delta, nodes)
    prev_path = Path(delta, prev_nodes)
    summaries = []
    for i, (lab, nds, _, conv, _) in enumerate(results):
        dev = float(np.max(np.linalg.norm(_interp_to_mesh(nds, delta, meshes[-1]) - nodes, axis=1)))
        summaries.append(StartSummary(label=lab, action=actions[i], converged=conv, dev_from_best=dev))
    return MinimizeResult(
        path=best_path,
        breakdown=evaluate_action(best_path, kset, shape),
        converged=converged,
        grad_norm=gnorm,
        starts=tuple(summaries),
        prev_path=prev_path,
        prev_breakdown=evaluate_action(prev_path, kset, shape),
    )


# ---------------------------------------------------------------------------
# Dynamic-programming oracle


@dataclass(frozen=True)
class GridSpec:
    """Spatial box, resolution and time slicing for the DP oracle.

    ``snap_axes`` optionally lists per-axis coordinates that replace their
    nearest uniform grid point (endpoint coordinates are always injected);
    ``vmax`` bounds the speed of admissible transitions.
    """

    lo: np.ndarray
    hi: np.ndarray
    resolution: float
    time_slices: int
    vmax: float | None = None
    snap_axes: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if np.any(hi <= lo):
            raise ActionError("grid box must have positive extent")
        if self.resolution <= 0 or self.time_slices < 2:
            raise ActionError("invalid grid resolution or time slicing")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


NODE_BUDGET = 10_000_000
EDGE_BUDGET = 400_000_000


def _axis_coords(lo: float, hi: float, res: float, snap) -> np.ndarray:
    n = max(int(round((hi - lo) / res)) + 1, 2)
    coords = np.linspace(lo, hi, n)
    if snap:
        for s in snap:
            if lo <= s <= hi:
                coords[int(np.argmin(np.abs(coords - s)))] = s
    return np.unique(coords)


def dp_oracle(x0, xdelta, delta: float, kset: PointSet, shape: Shape,
              grid_spec: GridSpec) -> Path:
    """Exact shortest path of the grid-discretized action (dimension <= 3).

    Nodes are (time slice, grid point) pairs; an edge of spatial step dx
    over one slice costs ``|dx|^2/dt + dt*(h_src + h_dst)/2``, so the DP
    value equals :func:`evaluate_action` of the returned path. Endpoints
    snap to their nearest grid points (their coordinates are injected into
    the per-axis grids).
    """
    a = _as_vector(x0, kset.dim)
    b = _as_vector(xdelta, kset.dim)
    d = kset.dim
    if d > 3:
        raise ActionError("dp_oracle supports dimension <= 3")
    t_slices = grid_spec.time_slices
    dt = delta / t_slices

    snap_axes = grid_spec.snap_axes or tuple(() for _ in range(d))
    axes = []
    for ax in range(d):
        snap = tuple(snap_axes[ax]) + (float(a[ax]), float(b[ax]))
        axes.append(_axis_coords(float(grid_spec.lo[ax]), float(grid_spec.hi[ax]),
                                 grid_spec.resolution, snap))
    shape_g = tuple(len(c) for c in axes)
    g_total = int(np.prod(shape_g))
    if g_total * (t_slices + 1) > NODE_BUDGET:
        raise GridBudgetError(f"{g_total} grid points x {t_slices + 1} slices exceeds the budget")

    if grid_spec.vmax is None:
        vmax = 4.0 * max(1.0, float(np.linalg.norm(b - a)) / delta)
    else:
        vmax = grid_spec.vmax
    k_off = max(1, int(np.ceil(vmax * dt / grid_spec.resolution)))
    offsets = list(itertools.product(range(-k_off, k_off + 1), repeat=d))
    if g_total * t_slices * len(offsets) > EDGE_BUDGET:
        raise GridBudgetError("edge relaxation budget exceeded; coarsen the grid")

    mesh = np.meshgrid(*axes, indexing="ij")
    grid_pts = np.stack([m.ravel() for m in mesh], axis=1)
    _, _, s = batch_field(grid_pts, kset)
    h_grid = shape.h(s).reshape(shape_g)

    def nearest_index(x):
        return tuple(int(np.argmin(np.abs(axes[ax] - x[ax]))) for ax in range(d))

    start = nearest_index(a)
    goal = nearest_index(b)

    def slices_for(off):
        src, dst = [], []
        for ax, o in enumerate(off):
            n = shape_g[ax]
            if o >= 0:
                src.append(slice(0, n - o))
                dst.append(slice(o, n))
            else:
                src.append(slice(-o, n))
                dst.append(slice(0, n + o))
        return tuple(src), tuple(dst)

    kin_blocks = {}
    for off in offsets:
        src, dst = slices_for(off)
        block = np.zeros(tuple(sl.stop - sl.start for sl in dst))
        for ax, o in enumerate(off):
            diff2 = (axes[ax][dst[ax]] - axes[ax][src[ax]]) ** 2
            shp = [1] * d
            shp[ax] = diff2.shape[0]
            block = block + diff2.reshape(shp)
        kin_blocks[off] = block / dt

    cost = np.full(shape_g, np.inf)
    cost[start] = 0.0
    parents = np.zeros((t_slices,) + shape_g, dtype=np.int32)
    for t in range(t_slices):
        new = np.full(shape_g, np.inf)
        parent = np.zeros(shape_g, dtype=np.int32)
        for oid, off in enumerate(offsets):
            src, dst = slices_for(off)
            cand = cost[src] + kin_blocks[off] + dt * 0.5 * (h_grid[src] + h_grid[dst])
            better = cand < new[dst]
            new[dst] = np.where(better, cand, new[dst])
            parent[dst] = np.where(better, oid, parent[dst])
        cost = new
        parents[t] = parent
    if not np.isfinite(cost[goal]):
        raise ActionError("endpoint unreachable on this grid (raise vmax or widen the box)")

    idx = goal
    rev = [idx]
    for t in range(t_slices - 1, -1, -1):
        off = offsets[int(parents[t][idx])]
        idx = tuple(i - o for i, o in zip(idx, off))
        rev.append(idx)
    rev.reverse()
    nodes = np.array([[axes[ax][i[ax]] for ax in range(d)] for i in rev])
    return Path(delta, nodes)


# ---------------------------------------------------------------------------
# Convex-constrained companion problem


@dataclass(frozen=True)
class ConstrainedResult:
    path: Path
    breakdown: ActionBreakdown
    converged: bool
    pg_norm: float


def constrained_minimize(x0, xdelta, delta: float, polytope: Polytope, psi_center,
                         shape: Shape, cfg: SolverConfig = SolverConfig()) -> ConstrainedResult:
    """Projected descent for the smooth potential ``h(|x - psi_center|^2)``
    constrained to a polytope.

    Every accepted step projects all interior nodes back onto the
    polytope; convergence is measured by the gradient mapping at a fixed
    dt/4 step (max nodal norm <= grad_tol).
    """
    a = _as_vector(x0, polytope.dim)
    b = _as_vector(xdelta, polytope.dim)
    center = _as_vector(psi_center, polytope.dim)
    if not (polytope.contains(a) and polytope.contains(b)):
        raise ActionError("endpoints must lie in the constraint polytope")

    def psi_and_grad(nodes):
        rel = nodes - center[None, :]
        s = np.einsum("ij,ij->i", rel, rel)
        return shape.h(s), 2.0 * shape.h_prime(s)[:, None] * rel, s

    def value(nodes, dt):
        diffs = np.diff(nodes, axis=0)
        kin = float(np.sum(np.einsum("ij,ij->i", diffs, diffs))) / dt
        h, _, _ = psi_and_grad(nodes)
        return kin + dt * (0.5 * h[0] + float(np.sum(h[1:-1])) + 0.5 * h[-1]), kin

    m0 = max(cfg.M >> cfg.refinements, 4)
    meshes = [m0 * (1 << i) for i in range(cfg.refinements + 1)]
    if meshes[-1] != cfg.M:
        meshes = sorted(set(meshes + [cfg.M]))
    nodes = Path.from_line(a, b, delta, m0).nodes.copy()
    nodes[1:-1] = polytope.project(nodes[1:-1], tol=1e-10)

    converged = False
    pg_norm = np.inf
    for m in meshes:
        if nodes.shape[0] != m + 1:
            nodes = _interp_to_mesh(nodes, delta, m)
            nodes[1:-1] = polytope.project(nodes[1:-1], tol=1e-10)
        nodes[0], nodes[-1] = a, b
        dt = delta / m
        alpha = cfg.step_init
        f0, _ = value(nodes, dt)
        for _ in range(cfg.max_iters):
            h, gpsi, s = psi_and_grad(nodes)
            g = (2.0 * (2.0 * nodes[1:-1] - nodes[:-2] - nodes[2:]) / dt
                 + dt * gpsi[1:-1])
            ref = 0.25 * dt
            mapped = nodes[1:-1] - polytope.project(nodes[1:-1] - ref * g, tol=1e-10)
            pg_norm = float(np.max(np.linalg.norm(mapped, axis=1), initial=0.0)) / ref
            if pg_norm <= cfg.grad_tol:
                converged = True
                break
            diag = 4.0 / dt + 2.0 * dt * np.maximum(shape.h_prime(s[1:-1]), 0.0)
            direction = g / diag[:, None]
            accepted = False
            aa = alpha
            for _ in range(45):
                trial = nodes.copy()
                trial[1:-1] = polytope.project(nodes[1:-1] - aa * direction, tol=1e-10)
                f_trial, _ = value(trial, dt)
                step_sq = float(np.sum((trial[1:-1] - nodes[1:-1]) ** 2))
                if f_trial <= f0 - 1e-4 * step_sq / max(aa, 1e-30):
                    nodes, f0 = trial, f_trial
                    alpha = min(aa * 1.6, 16.0)
                    accepted = True
                    break
                aa *= 0.5
            if not accepted:
                converged = pg_norm <= cfg.grad_tol
                break

    path = Path(delta, nodes)
    dt = path.dt
    diffs = np.diff(nodes, axis=0)
    kin = np.einsum("ij,ij->i", diffs, diffs) / dt
    h, _, _ = psi_and_grad(nodes)
    pot = dt * 0.5 * (h[:-1] + h[1:])
    breakdown = ActionBreakdown(
        kinetic=float(np.sum(kin)),
        potential=float(np.sum(pot)),
        total=float(np.sum(kin) + np.sum(pot)),
        kinetic_terms=kin,
        potential_terms=pot,
    )
    return ConstrainedResult(path=path, breakdown=breakdown, converged=converged, pg_norm=pg_norm)
