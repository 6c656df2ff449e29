import numpy as np
import pytest

from voract import (
    GeometryError,
    extended_gradient,
    f_eval,
    g_eval,
    in_p_eta,
    slope_sup_oracle,
    zone_table,
)
from voract.potential import batch_field, batch_field_light


def test_field_values(line_k):
    assert f_eval([0.0], line_k) == pytest.approx(-0.5)
    assert f_eval([-0.3], line_k) == pytest.approx(-0.245)
    assert f_eval([1.0], line_k) == 0.0
    assert g_eval([1.0], line_k) == pytest.approx(0.5)


def test_f_g_identity_random(grid3_k):
    rng = np.random.default_rng(2)
    for _ in range(200):
        x = rng.normal(size=2) * 3
        assert g_eval(x, grid3_k) - f_eval(x, grid3_k) - 0.5 * float(x @ x) == pytest.approx(0.0, abs=1e-12)


def test_extended_gradient_examples(line_k, triangle_k):
    info = extended_gradient([0.0], line_k)
    assert np.allclose(info.eta, [0.0]) and np.allclose(info.grad, [0.0])
    assert info.slope_sq == 0.0

    info = extended_gradient([0.0, -1.0], triangle_k)
    assert info.opt.indices == (0, 2)
    assert np.allclose(info.eta, [0.0, 0.0])
    assert np.allclose(info.grad, [0.0, 1.0])

    info = extended_gradient([-0.3], line_k)
    assert np.allclose(info.eta, [-1.0])
    assert np.allclose(info.grad, [-0.7])
    assert info.slope_sq == pytest.approx(0.49)


def test_gradient_invariants_random(grid3_k):
    rng = np.random.default_rng(8)
    for _ in range(200):
        x = rng.normal(size=2) * 2 + 1.0
        info = extended_gradient(x, grid3_k)
        assert np.array_equal(info.grad, info.eta - info.x)
        assert info.slope_sq <= -2.0 * info.f_value + 1e-9
        if len(info.opt) == 1:
            assert info.slope_sq == pytest.approx(-2.0 * info.f_value, abs=1e-9)


def test_batch_matches_scalar(triangle_k):
    rng = np.random.default_rng(4)
    probes = rng.normal(size=(60, 2)) * 1.5
    probes = np.vstack([probes, [[0.0, -0.5], [0.0, 0.0]]])
    classes, etas, s = batch_field(probes, triangle_k)
    etas2, s2, tie_mask, groups = batch_field_light(probes, triangle_k)
    assert np.allclose(etas, etas2) and np.allclose(s, s2)
    for k in range(probes.shape[0]):
        info = extended_gradient(probes[k], triangle_k)
        assert classes[k] == info.opt.indices
        assert np.allclose(etas[k], info.eta, atol=1e-9)
        assert tie_mask[k] == (len(info.opt) >= 2)


def test_slope_sup_examples(line_k):
    assert slope_sup_oracle([0.0], line_k, 400, 1) == pytest.approx(0.0, abs=1e-9)
    assert slope_sup_oracle([-0.3], line_k, 400, 1) == pytest.approx(0.7, abs=1e-3)
    assert slope_sup_oracle([1.0], line_k, 400, 1) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(GeometryError):
        slope_sup_oracle([0.0], line_k, 50, 1)


def test_slope_sup_band(grid3_k):
    rng = np.random.default_rng(12)
    count = 0
    while count < 60:
        x = rng.random(2) * 4 - 1
        info = extended_gradient(x, grid3_k)
        if len(info.opt) > 1:
            continue
        d2 = np.sort(np.sum((grid3_k.points - x) ** 2, axis=1))
        if d2[1] - d2[0] < 0.05:
            continue
        count += 1
        est = slope_sup_oracle(x, grid3_k, 150, count)
        grad = float(np.sqrt(info.slope_sq))
        assert est <= grad + 1e-6
        assert est >= grad - 5e-3


def test_zone_table_line(line_k):
    zt = zone_table(line_k, ([-3.0], [3.0]), probe_count=400, seed=0)
    assert zt.balanced
    assert zt.beta == pytest.approx(1.0, abs=1e-9)
    assert sorted(zt.etas.ravel().tolist()) == pytest.approx([-1.0, 0.0, 1.0])
    assert zt.witnessed_cells == 3


def test_zone_table_triangle_witness(triangle_k):
    zt = zone_table(triangle_k, ([-2.0, -2.0], [2.0, 2.0]), probe_count=1500, seed=0)
    assert not zt.balanced
    assert set(zt.unbalanced_witness) == {(0, 1, 2), (0, 2)}
    # both witness classes map to the same zone value (0, 0)
    z = zt.cell_to_zone[(0, 1, 2)]
    assert zt.cell_to_zone[(0, 2)] == z
    assert np.allclose(zt.etas[z], [0.0, 0.0], atol=1e-9)


def test_zone_table_grid3(grid3_k):
    zt = zone_table(grid3_k, ([-1.0, -1.0], [3.0, 3.0]), probe_count=2000, seed=0)
    assert zt.balanced
    assert zt.beta == pytest.approx(0.25, abs=1e-9)


def test_zone_table_box_must_contain_sites(line_k):
    with pytest.raises(GeometryError):
        zone_table(line_k, ([-0.5], [0.5]), probe_count=10, seed=0)


def test_zone_table_pair_budget_is_deterministic(grid3_k):
    z1 = zone_table(grid3_k, ([-1.0, -1.0], [3.0, 3.0]), probe_count=500, seed=2,
                    max_pairs=10)
    z2 = zone_table(grid3_k, ([-1.0, -1.0], [3.0, 3.0]), probe_count=500, seed=2,
                    max_pairs=10)
    assert z1.cell_to_zone == z2.cell_to_zone
    assert z1.balanced == z2.balanced


def test_in_p_eta_examples(line_k):
    assert in_p_eta([0.0], [0.0], line_k)
    assert not in_p_eta([0.5], [0.0], line_k)


def test_q_subset_p(line_k, triangle_k):
    rng = np.random.default_rng(3)
    for kset in (line_k, triangle_k):
        for _ in range(60):
            x = rng.normal(size=kset.dim) * 1.5
            info = extended_gradient(x, kset)
            assert in_p_eta(x, info.eta, kset)


def test_separation_inequality(triangle_k, grid3_k):
    # distinct zone values eta != eta-bar with x in Q_eta and eta-bar in dg(x);
    # such x live on boundary cells, so probe the witnessed class points.
    for kset, box in ((triangle_k, ([-2.0, -2.0], [2.0, 2.0])),
                      (grid3_k, ([-1.0, -1.0], [3.0, 3.0]))):
        zt = zone_table(kset, box, probe_count=1500, seed=1)
        beta = zt.beta
        checked = 0
        for x in zt.class_witness.values():
            info = extended_gradient(x, kset)
            for eta_bar in zt.etas:
                if np.linalg.norm(eta_bar - info.eta) <= 1e-7:
                    continue
                if in_p_eta(x, eta_bar, kset):
                    checked += 1
                    lhs = float(np.sum((eta_bar - x) ** 2))
                    rhs = float(np.sum((info.eta - x) ** 2)) + beta
                    assert lhs >= rhs - 1e-6
        assert checked > 0


def test_zone_constancy(grid3_k):
    rng = np.random.default_rng(10)
    by_class = {}
    for _ in range(400):
        x = rng.random(2) * 4 - 1
        info = extended_gradient(x, grid3_k)
        key = info.opt.indices
        if key in by_class:
            assert np.linalg.norm(by_class[key] - info.eta) <= 1e-9
        else:
            by_class[key] = info.eta
    assert len(by_class) >= 9


def test_lower_semicontinuity_at_bisector(line_k, triangle_k):
    # one-sided slope limits dominate the boundary value
    cases = [
        (line_k, np.array([0.0]), np.array([1.0])),
        (triangle_k, np.array([0.0, -0.5]), np.array([1.0, 0.0])),
    ]
    for kset, xb, direction in cases:
        boundary = float(np.sqrt(extended_gradient(xb, kset).slope_sq))
        for side in (1.0, -1.0):
            vals = []
            for eps in (1e-3, 1e-4, 1e-5):
                x = xb + side * eps * direction
                vals.append(float(np.sqrt(extended_gradient(x, kset).slope_sq)))
            assert min(vals) >= boundary - 1e-6


def test_oracle_consistency_band(line_k):
    rng = np.random.default_rng(20)
    for i in range(40):
        x = np.array([rng.uniform(-2.5, 2.5)])
        if abs(x[0]) < 0.01:
            continue
        info = extended_gradient(x, line_k)
        est = slope_sup_oracle(x, line_k, 120, i)
        grad = float(np.sqrt(info.slope_sq))
        assert grad - 5e-3 <= est <= grad + 1e-6
