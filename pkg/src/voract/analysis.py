"""Numerical verification of structural properties on computed paths.

Given a discrete path over a site set, this module measures:

- the first integral ``|path'|^2 - h(slope_sq)`` (energy), whose
  constancy away from shocks certifies the autonomous Euler condition;
- shock events: nodes where the nearest-site class changes, classified
  as degenerate (hull projection unchanged), nondegenerate, or effective
  left/right (clean one-sided passage between strictly nested classes);
- the velocity-jump identity at effective shocks,
  ``|v- - v+|^2 = h(|x - eta_low|^2) - h(|x - eta_high|^2)``;
- a second-difference bound check against ``h'(|x-eta|^2)|x-eta|`` away
  from nondegenerate shocks, plus momentum continuity of the velocity
  component along the boundary's equidistance directions.

Shock times are resolved at node resolution: the continuum event lies in
the interval between the last node of the old class and the first node of
the new one. One-sided velocities extrapolate two 3-node least-squares
slopes (windows offset 2 and 5 nodes from the event) to the event time,
which removes the O(dt) bias a single offset window would carry.

All functions are pure over immutable paths and safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .action import Path, Shape
from .geometry import GeometryError, OptClass, PointSet, cell_frame
from .potential import ETA_DEDUP_TOL, batch_field

__all__ = [
    "AnalysisError",
    "ShockEvent",
    "EnergyProfile",
    "RegularityReport",
    "energy_profile",
    "detect_shocks",
    "jump_residual",
    "regularity_report",
]


class AnalysisError(ValueError):
    """Invalid analysis input (window too large, wrong event kind, ...)."""


@dataclass(frozen=True)
class ShockEvent:
    """One detected class change along a path.

    ``node_index`` is the first node carrying the new class; the continuum
    event lies in [time - dt, time]. ``x_event`` is the node on the
    larger-class side of the boundary (the event node for left/merged
    events, its predecessor for right events). Kinds: ``degenerate``
    (projection unchanged within tolerance), ``nondegenerate``,
    ``effective_left`` / ``effective_right`` (strictly nested classes with
    a window-clean passage).
    """

    node_index: int
    time: float
    kind: str
    class_before: tuple[int, ...]
    class_after: tuple[int, ...]
    eta_before: np.ndarray
    eta_after: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray
    jump_sq: float
    x_event: np.ndarray
    merged_class: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("eta_before", "eta_after", "v_minus", "v_plus", "x_event"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.jump_sq < -1e-12:
            raise AnalysisError("jump_sq must be nonnegative")
        if self.kind == "degenerate":
            if float(np.linalg.norm(self.eta_before - self.eta_after)) > ETA_DEDUP_TOL:
                raise AnalysisError("degenerate event with a projection jump")
        if self.kind == "effective_left" and not _strict_subset(self.class_before, self.class_after):
            raise AnalysisError("left effective event requires class_before < class_after")
        if self.kind == "effective_right" and not _strict_subset(self.class_after, self.class_before):
            raise AnalysisError("right effective event requires class_after < class_before")


def _strict_subset(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    return set(a) < set(b)


@dataclass(frozen=True)
class EnergyProfile:
    values: np.ndarray
    constant: float
    deviations: np.ndarray = field(repr=False)


def energy_profile(path: Path, kset: PointSet, shape: Shape) -> EnergyProfile:
    """Per-interval energy: forward-difference speed squared minus h at
    the interval's left node. The constant estimate is the median."""
    if path.m_intervals < 4:
        raise AnalysisError("energy profile needs at least 4 intervals")
    dt = path.dt
    diffs = np.diff(path.nodes, axis=0)
    speed_sq = np.einsum("ij,ij->i", diffs, diffs) / dt**2
    _, _, s = batch_field(path.nodes, kset)
    values = speed_sq - shape.h(s[:-1])
    constant = float(np.median(values))
    return EnergyProfile(values=values, constant=constant, deviations=values - constant)


def _class_runs(classes: list[tuple[int, ...]]) -> list[tuple[int, int, tuple[int, ...]]]:
    runs = []
    start = 0
    for k in range(1, len(classes)):
        if classes[k] != classes[start]:
            runs.append((start, k - 1, classes[start]))
            start = k
    runs.append((start, len(classes) - 1, classes[start]))
    return runs


def _one_sided_velocity(nodes: np.ndarray, dt: float, boundary: int, side: str) -> np.ndarray:
    """Velocity at the event boundary, extrapolated from two least-squares
    slope windows (3 nodes each, offsets 2 and 5) on the given side.

    Falls back to a single window or a plain difference when the run is
    short. ``boundary`` is the index of the first node of the new class;
    the event time is t[boundary] for the minus side convention used here.
    """

    def ls_slope(first: int) -> np.ndarray | None:
        idx = [first, first + 1, first + 2] if side == "plus" else [first - 2, first - 1, first]
        if min(idx) < 0 or max(idx) >= nodes.shape[0]:
            return None
        pts = nodes[idx]
        return (pts[2] - pts[0]) / (2.0 * dt)

    if side == "minus":
        near = ls_slope(boundary - 2)   # centered 3 dt before the boundary
        far = ls_slope(boundary - 5)    # centered 6 dt before the boundary
    else:
        near = ls_slope(boundary + 1)   # centered 2 dt after the boundary
        far = ls_slope(boundary + 4)    # centered 5 dt after the boundary
    if near is not None and far is not None:
        return 2.0 * near - far
    if near is not None:
        return near
    # Short run: plain one-sided difference.
    if side == "minus":
        k = max(boundary - 1, 1)
        return (nodes[k] - nodes[k - 1]) / dt
    k = min(boundary, nodes.shape[0] - 2)
    return (nodes[k + 1] - nodes[k]) / dt


def detect_shocks(path: Path, kset: PointSet, window: int = 2) -> list[ShockEvent]:
    """Class-change events along the path, classified at node resolution.

    A single-node visit of a class strictly containing both neighbouring
    runs is coalesced into one crossing event (a transversal passage
    through a lower-dimensional cell). Effective classification requires
    strict class nesting, a projection jump and class constancy over
    ``window`` nodes on both sides.
    """
    if window < 2:
        raise AnalysisError("window must be at least 2")
    if window >= path.m_intervals:
        raise AnalysisError("window exceeds the path length")
    classes, etas, _ = batch_field(path.nodes, kset)
    runs = _class_runs(classes)
    dt = path.dt
    times = path.times

    # Coalesce transversal single-node visits of a superset class.
    merged_runs = []
    i = 0
    while i < len(runs):
        s, e, cls = runs[i]
        if (
            s == e
            and 0 < i < len(runs) - 1
            and _strict_subset(runs[i - 1][2], cls)
            and _strict_subset(runs[i + 1][2], cls)
        ):
            merged_runs[-1] = merged_runs[-1] + [(s, cls)]
            i += 1
            continue
        merged_runs.append([(s, e, cls)])
        i += 1

    # Rebuild a run list where each entry may carry a trailing merged node.
    events: list[ShockEvent] = []
    flat: list[tuple[int, int, tuple[int, ...], tuple[int, ...] | None]] = []
    for group in merged_runs:
        s, e, cls = group[0]
        merged = group[1][1] if len(group) > 1 else None
        flat.append((s, e, cls, merged))

    for i in range(len(flat) - 1):
        s0, e0, cls_before, merged = flat[i]
        s1, e1, cls_after, _ = flat[i + 1]
        boundary = s1
        if merged is not None:
            # The merged node itself is the crossing locus.
            event_node = e0 + 1
            x_event = path.nodes[event_node]
            eta_b = etas[e0]
            eta_a = etas[s1]
            v_minus = _one_sided_velocity(path.nodes, dt, event_node, "minus")
            v_plus = _one_sided_velocity(path.nodes, dt, event_node + 1, "plus")
        else:
            event_node = boundary
            eta_b = etas[boundary - 1]
            eta_a = etas[boundary]
            v_minus = _one_sided_velocity(path.nodes, dt, boundary, "minus")
            v_plus = _one_sided_velocity(path.nodes, dt, boundary, "plus")
            bigger_side = boundary if len(cls_after) >= len(cls_before) else boundary - 1
            x_event = path.nodes[bigger_side]

        jump = v_minus - v_plus
        jump_sq = float(jump @ jump)
        eta_jump = float(np.linalg.norm(eta_b - eta_a))

        if eta_jump <= ETA_DEDUP_TOL:
            kind = "degenerate"
        else:
            kind = "nondegenerate"
            if merged is None:
                before_ok = (boundary - window >= 0
                             and all(classes[j] == cls_before for j in range(boundary - window, boundary)))
                after_ok = (boundary + window - 1 <= path.m_intervals
                            and all(classes[j] == cls_after for j in range(boundary, boundary + window)))
                if before_ok and after_ok:
                    if _strict_subset(cls_before, cls_after):
                        kind = "effective_left"
                    elif _strict_subset(cls_after, cls_before):
                        kind = "effective_right"

        events.append(ShockEvent(
            node_index=int(event_node),
            time=float(times[event_node]),
            kind=kind,
            class_before=cls_before,
            class_after=cls_after,
            eta_before=eta_b,
            eta_after=eta_a,
            v_minus=v_minus,
            v_plus=v_plus,
            jump_sq=jump_sq,
            x_event=x_event,
            merged_class=merged,
        ))
    return events


def jump_residual(event: ShockEvent, shape: Shape) -> float:
    """Absolute defect of the velocity-jump identity at an effective shock.

    For a left event the potential drops from the old zone to the new one;
    for a right event the roles are mirrored. Raises on non-effective
    events.
    """
    if event.kind not in ("effective_left", "effective_right"):
        raise AnalysisError(f"jump_residual needs an effective event, got {event.kind!r}")
    x = event.x_event
    d_before = float(np.sum((x - event.eta_before) ** 2))
    d_after = float(np.sum((x - event.eta_after) ** 2))
    if event.kind == "effective_left":
        h_diff = float(shape.h(d_before) - shape.h(d_after))
    else:
        h_diff = float(shape.h(d_after) - shape.h(d_before))
    return abs(event.jump_sq - h_diff)


@dataclass(frozen=True)
class RegularityReport:
    energy_values: np.ndarray
    energy_constant: float
    energy_std_away_from_shocks: float
    second_diff_violations: list[tuple[int, float, float]]
    max_second_diff_excess: float
    shock_count_by_kind: dict[str, int]
    momentum_residuals: list[tuple[int, float]]
    events: list[ShockEvent]


def _momentum_class(event: ShockEvent) -> tuple[int, ...]:
    union = tuple(sorted(set(event.class_before) | set(event.class_after)))
    if event.merged_class is not None:
        union = tuple(sorted(set(union) | set(event.merged_class)))
    return union


def regularity_report(path: Path, kset: PointSet, shape: Shape, window: int = 2,
                      slack: float | None = None) -> RegularityReport:
    """Second-difference bound, energy constancy and momentum continuity.

    Central second differences at nodes at least 2 away from any
    nondegenerate shock are compared against
    ``h'(|x-eta|^2)|x-eta| + slack`` (default slack 20*dt). Momentum
    residuals compare the one-sided velocities projected on the
    equidistance directions of the union class at every shock.
    """
    events = detect_shocks(path, kset, window=window)
    dt = path.dt
    if slack is None:
        slack = 20.0 * dt
    nodes = path.nodes
    _, etas, s = batch_field(nodes, kset)

    nondeg_nodes = [ev.node_index for ev in events if ev.kind != "degenerate"]
    excluded = np.zeros(nodes.shape[0], dtype=bool)
    for k in nondeg_nodes:
        lo = max(k - 2, 0)
        hi = min(k + 2, nodes.shape[0] - 1)
        excluded[lo:hi + 1] = True

    second = (nodes[2:] - 2.0 * nodes[1:-1] + nodes[:-2]) / dt**2
    sec_norm = np.linalg.norm(second, axis=1)
    bound = shape.h_prime(s[1:-1]) * np.sqrt(s[1:-1])
    violations: list[tuple[int, float, float]] = []
    max_excess = -np.inf
    for k in range(1, nodes.shape[0] - 1):
        if excluded[k]:
            continue
        est = float(sec_norm[k - 1])
        b = float(bound[k - 1])
        max_excess = max(max_excess, est - b)
        if est > b + slack:
            violations.append((k, est, b))

    prof = energy_profile(path, kset, shape)
    interval_excluded = excluded[:-1] | excluded[1:]
    kept = prof.values[~interval_excluded]
    energy_std = float(np.std(kept)) if kept.size else 0.0

    counts: dict[str, int] = {}
    for ev in events:
        counts[ev.kind] = counts.get(ev.kind, 0) + 1

    momentum: list[tuple[int, float]] = []
    for ev in events:
        try:
            frame = cell_frame(OptClass(_momentum_class(ev), ev.x_event), kset)
        except GeometryError:
            continue
        basis = frame.basis_b
        if basis.shape[0]:
            res = float(np.linalg.norm(basis @ (ev.v_minus - ev.v_plus)))
        else:
            res = 0.0
        momentum.append((ev.node_index, res))

    return RegularityReport(
        energy_values=prof.values,
        energy_constant=prof.constant,
        energy_std_away_from_shocks=energy_std,
        second_diff_violations=violations,
        max_second_diff_excess=float(max_excess) if np.isfinite(max_excess) else 0.0,
        shock_count_by_kind=counts,
        momentum_residuals=momentum,
        events=events,
    )
