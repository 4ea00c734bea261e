import json

import numpy as np
import pytest

import smoothkit as sk


def make_store(values):
    store = sk.ParamStore()
    store.add_unit("w", [2, 3], sk.UnitKind.Weight, list(values[:6]))
    store.add_unit("b", [3], sk.UnitKind.Bias, list(values[6:9]))
    return store


def test_tma_endpoints_and_arithmetic():
    teacher = make_store(np.arange(9.0))
    student = make_store(-np.arange(9.0))
    frozen = teacher.copy()
    sk.apply_tma(frozen, student, 1.0)
    assert frozen == teacher
    copied = teacher.copy()
    sk.apply_tma(copied, student, 0.0)
    assert copied == student
    mixed = teacher.copy()
    sk.apply_tma(mixed, student, 0.75)
    np.testing.assert_allclose(mixed["w"], 0.5 * np.arange(6.0).reshape(2, 3))


def test_sts_with_p_zero_matches_tma():
    rng = np.random.default_rng(0)
    teacher = make_store(rng.normal(size=9))
    student = make_store(rng.normal(size=9))
    a, b = teacher.copy(), teacher.copy()
    sk.smooth_step(sk.SmoothingConfig(sk.Method.STS, p=0.0, m=0.9), a, student, 1)
    sk.smooth_step(sk.SmoothingConfig(sk.Method.TMA, m=0.9), b, student, 1)
    assert a == b


def test_mask_is_reproducible():
    m1 = sk.sample_mask(1000, 0.3, 7, 2)
    m2 = sk.sample_mask(1000, 0.3, 7, 2)
    assert m1.to_hex() == m2.to_hex()
    assert len(m1) == 1000
    assert abs(m1.preserved_fraction() - 0.3) < 0.06


def test_effective_momentum_and_errors():
    assert sk.effective_momentum(0.5, 0.9) == pytest.approx(0.95)
    with pytest.raises(sk.ConfigError) as info:
        sk.SmoothingConfig(sk.Method.STS, p=1.5)
    assert info.value.field == "smoothing.p"
    with pytest.raises(sk.CongruenceError):
        sk.apply_tma(make_store(np.zeros(9)), sk.ParamStore(), 0.5)


def test_snapshot_round_trip(tmp_path):
    store = make_store([-0.0, 5e-324, 1.0 / 3.0, 1e300, -2.5, 0.1, 0.2, 0.3, 0.4])
    assert sk.snapshot_from_json(sk.snapshot_to_json(store)) == store
    path = str(tmp_path / "s.json")
    sk.save_snapshot(store, path)
    assert sk.load_snapshot(path) == store


def test_tiny_run_is_deterministic():
    cfg = json.dumps({
        "task": "fixmatch_lite",
        "epochs": 1,
        "hidden_dims": [8],
        "probe_size": 16,
        "dataset": {"n": 200},
    })
    rows_a, teacher_a = sk.run_config(cfg, seed=1)
    rows_b, teacher_b = sk.run_config(cfg, seed=1)
    assert rows_a == rows_b
    assert teacher_a == teacher_b
    assert rows_a[0]["step"] == 0
    assert 0.0 <= rows_a[-1]["eval_accuracy_teacher"] <= 1.0
