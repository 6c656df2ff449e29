import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from voract import (
    FrameError,
    GeometryError,
    PointSet,
    Polytope,
    PolytopeError,
    cell_frame,
    load_point_set,
    load_polytope,
    min_norm_point,
    opt_class,
    polytope_distance_ratio,
    save_point_set,
)


# ---------------------------------------------------------------------------
# point sets and optimality classes


def test_point_set_validation():
    with pytest.raises(GeometryError):
        PointSet([[0.0], [0.0]])
    with pytest.raises(GeometryError):
        PointSet(np.zeros((0, 2)))
    k = PointSet([[0.0, 1.0], [2.0, 3.0]])
    assert k.n == 2 and k.dim == 2
    with pytest.raises(ValueError):
        k.points[0, 0] = 5.0  # immutable


def test_opt_class_examples(line_k):
    assert opt_class([-0.3], line_k).indices == (0,)
    assert opt_class([0.0], line_k).indices == (0, 1)
    assert opt_class([1.0], line_k).indices == (1,)


def test_opt_class_dimension_mismatch(line_k):
    with pytest.raises(GeometryError):
        opt_class([0.0, 0.0], line_k)


def test_opt_class_tie_tolerance_rescaling_robustness():
    # Away from bisectors the class must not depend on moderate tolerance changes.
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(6, 2))
    for _ in range(50):
        x = rng.normal(size=2) * 1.5
        base = PointSet(pts, tie_tolerance=1e-9)
        d2 = np.sort(np.sum((pts - x) ** 2, axis=1))
        if d2[1] - d2[0] < 1e-6:
            continue
        got = opt_class(x, base).indices
        for factor in (0.5, 0.75, 1.0):
            other = PointSet(pts, tie_tolerance=1e-9 * factor)
            assert opt_class(x, other).indices == got


# ---------------------------------------------------------------------------
# minimum-norm point


def test_min_norm_examples():
    assert np.allclose(min_norm_point([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]), [0.5, 0.5])
    assert np.allclose(min_norm_point([[-1.0], [1.0]], [0.0]), [0.0])


def _grid_oracle(vertices: np.ndarray, x: np.ndarray) -> np.ndarray:
    m = vertices.shape[0]
    if m == 1:
        return vertices[0]
    center = np.full(m, 1.0 / m)
    scale = 1.0
    divs = 6
    simplex = [np.array(c, dtype=float) / divs
               for c in itertools.product(range(divs + 1), repeat=m) if sum(c) == divs]
    best = center
    for _ in range(26):
        cands = []
        for g in simplex:
            lam = center + scale * (g - np.full(m, 1.0 / m))
            lam = np.maximum(lam, 0.0)
            s = lam.sum()
            if s > 0:
                cands.append(lam / s)
        pts = np.array(cands) @ vertices
        d2 = np.einsum("ij,ij->i", pts - x[None, :], pts - x[None, :])
        best = np.array(cands)[int(np.argmin(d2))]
        center = best
        scale *= 0.5
    return best @ vertices


def test_min_norm_matches_grid_oracle():
    rng = np.random.default_rng(42)
    for _ in range(20):
        d = int(rng.integers(1, 4))
        m = int(rng.integers(2, 5))
        verts = rng.normal(size=(m, d)) * 1.5
        x = rng.normal(size=d) * 1.5
        p = min_norm_point(verts, x)
        q = _grid_oracle(verts, x)
        assert np.linalg.norm(p - q) <= 1e-6


def test_min_norm_variational_inequality():
    rng = np.random.default_rng(5)
    for _ in range(30):
        verts = rng.normal(size=(4, 3))
        x = rng.normal(size=3) * 2
        p = min_norm_point(verts, x)
        assert np.min((verts - p) @ (p - x)) >= -1e-9 * 20


def test_min_norm_identity_on_members():
    # x in conv(V) (certified by LP) must project to itself.
    rng = np.random.default_rng(9)
    for _ in range(20):
        verts = rng.normal(size=(5, 2)) * 2
        lam = rng.random(5)
        lam /= lam.sum()
        x = lam @ verts
        res = linprog(np.zeros(5), A_eq=np.vstack([verts.T, np.ones(5)]),
                      b_eq=np.append(x, 1.0), bounds=[(0, None)] * 5, method="highs")
        assert res.success
        assert np.linalg.norm(min_norm_point(verts, x) - x) <= 1e-8


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_min_norm_is_one_lipschitz(seed_a, seed_b):
    rng = np.random.default_rng(seed_a * 31 + 7)
    verts = rng.normal(size=(5, 2)) * 2
    rng2 = np.random.default_rng(seed_b * 17 + 3)
    x = rng2.normal(size=2) * 3
    y = rng2.normal(size=2) * 3
    px = min_norm_point(verts, x)
    py = min_norm_point(verts, y)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-8


def test_min_norm_wolfe_branch_many_vertices():
    from voract.geometry import _project_exhaustive

    rng = np.random.default_rng(77)
    verts = rng.normal(size=(9, 2)) * 2  # forces the Wolfe branch (m > d+1)
    for _ in range(10):
        x = rng.normal(size=2) * 3
        p = min_norm_point(verts, x)
        q = _project_exhaustive(verts, x)  # exact face scan, independent of Wolfe
        assert np.linalg.norm(p - q) <= 1e-8


# ---------------------------------------------------------------------------
# cell frames


def test_cell_frame_pair_1d(line_k):
    fr = cell_frame(opt_class([0.0], line_k), line_k)
    assert fr.basis_b.shape == (0, 1)
    assert fr.basis_a.shape == (1, 1)
    assert np.allclose(fr.p_h, [0.0])


def test_cell_frame_pair_2d(triangle_k):
    fr = cell_frame(opt_class([0.0, -0.5], triangle_k), triangle_k)
    assert np.allclose(np.abs(fr.basis_a), [[1.0, 0.0]])
    assert np.allclose(np.abs(fr.basis_b), [[0.0, 1.0]])
    assert np.allclose(fr.p_h, [0.0, 0.0], atol=1e-12)


def test_cell_frame_singleton(triangle_k):
    fr = cell_frame(opt_class([1.0, 0.05], triangle_k), triangle_k)
    assert fr.basis_a.shape == (0, 2)
    assert np.allclose(fr.basis_b, np.eye(2))
    assert np.allclose(fr.p_h, [1.0, 0.0])


def test_cell_frame_invariants_random():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(7, 3)) * 2
    k = PointSet(pts)
    for _ in range(40):
        x = rng.normal(size=3) * 2
        cls = opt_class(x, k)
        fr = cell_frame(cls, k)
        assert fr.basis_a.shape[0] + fr.basis_b.shape[0] == 3
        if fr.basis_a.shape[0] and fr.basis_b.shape[0]:
            assert np.max(np.abs(fr.basis_a @ fr.basis_b.T)) <= 1e-10
        # every class site is equidistant from p_h and from p_h + B-basis rows
        sites = k.points[list(cls.indices)]
        for probe in [fr.p_h] + [fr.p_h + b for b in fr.basis_b]:
            dists = np.linalg.norm(sites - probe, axis=1)
            assert np.max(dists) - np.min(dists) <= 1e-8


def test_cell_frame_empty_equidistance_rejected():
    # three collinear sites cannot be co-equidistant
    k = PointSet([[0.0], [1.0], [2.0]])
    cls = opt_class([0.5], k)
    bogus = type(cls)(indices=(0, 1, 2), witness=np.array([0.5]))
    with pytest.raises(FrameError):
        cell_frame(bogus, k)


# ---------------------------------------------------------------------------
# polytopes


def test_polytope_certification():
    box = Polytope.from_box([0.0, 0.0], [1.0, 1.0])
    assert box.contains([0.5, 0.5])
    assert not box.contains([1.5, 0.5])
    with pytest.raises(PolytopeError):  # empty
        Polytope(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([-1.0, -1.0]))
    with pytest.raises(PolytopeError):  # unbounded
        Polytope(np.array([[1.0, 0.0]]), np.array([1.0]))


def test_polytope_projection_and_distance():
    box = Polytope.from_box([0.0, 0.0], [1.0, 1.0])
    assert np.allclose(box.project([2.0, 0.5]), [1.0, 0.5], atol=1e-8)
    assert abs(box.distance([2.0, 0.5]) - 1.0) <= 1e-8
    assert np.allclose(box.project([0.3, 0.4]), [0.3, 0.4])
    batch = box.project(np.array([[2.0, 2.0], [-1.0, 0.5]]))
    assert np.allclose(batch, [[1.0, 1.0], [0.0, 0.5]], atol=1e-7)


def test_ratio_shared_facet_is_one():
    a = Polytope.from_box([0.0, 0.0], [1.0, 1.0])
    b = Polytope.from_box([1.0, 0.0], [2.0, 1.0])
    ratio = polytope_distance_ratio(a, b, samples=400, seed=3)
    assert abs(ratio - 1.0) <= 1e-6


def test_ratio_corner_sqrt2():
    a = Polytope.from_box([0.0, 0.0], [1.0, 1.0])
    b = Polytope(np.vstack([[1.0, 1.0], np.eye(2), -np.eye(2)]),
                 np.array([0.0, 2.0, 2.0, 2.0, 2.0]))
    ratio = polytope_distance_ratio(a, b, samples=2000, seed=7)
    assert abs(ratio - np.sqrt(2.0)) <= 0.05


def test_ratio_identical_sets():
    a = Polytope.from_box([0.0], [1.0])
    assert polytope_distance_ratio(a, a, samples=100, seed=0) <= 1.0


def test_ratio_monotone_in_samples():
    a = Polytope.from_box([0.0, 0.0], [1.0, 1.0])
    b = Polytope(np.vstack([[1.0, 1.0], np.eye(2), -np.eye(2)]),
                 np.array([0.0, 2.0, 2.0, 2.0, 2.0]))
    r1 = polytope_distance_ratio(a, b, samples=500, seed=1)
    r2 = polytope_distance_ratio(a, b, samples=1000, seed=1)
    assert r2 >= r1 - 1e-12


def test_ratio_empty_intersection_rejected():
    a = Polytope.from_box([0.0], [1.0])
    b = Polytope.from_box([2.0], [3.0])
    with pytest.raises(PolytopeError):
        polytope_distance_ratio(a, b, samples=10, seed=0)


# ---------------------------------------------------------------------------
# text formats


def test_point_set_round_trip(tmp_path, triangle_k):
    path = tmp_path / "points.txt"
    save_point_set(path, triangle_k)
    back = load_point_set(path)
    assert back.dim == 2 and back.n == 3
    assert np.array_equal(back.points, triangle_k.points)


def test_polytope_loader(tmp_path):
    path = tmp_path / "poly.txt"
    path.write_text("2 4\n1 0 1\n-1 0 0\n0 1 1\n0 -1 0\n")
    poly = load_polytope(path)
    assert poly.contains([0.5, 0.5])
    assert not poly.contains([2.0, 0.0])
