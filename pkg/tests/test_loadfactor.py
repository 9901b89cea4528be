import pytest
from hypothesis import given
from hypothesis.strategies import floats, integers, lists

from pcn.loadfactor import (
    LinkLoadMonitor,
    LoadFactorConfig,
    LoadWindowStats,
    compute_load_factor,
    update_persistent_queue,
)

CFG = LoadFactorConfig(capacity=1000.0)


def test_load_factor_formula():
    sample = compute_load_factor(LoadWindowStats(lambda_=100, qhat=0.0, window_index=4), CFG)
    assert sample.rho == pytest.approx(100.0 * 100 / (0.98 * 1000 * 0.2))
    assert sample.window_index == 4

    with_queue = compute_load_factor(LoadWindowStats(lambda_=100, qhat=20.0, window_index=0), CFG)
    assert with_queue.rho == pytest.approx(100.0 * 110 / 196)


def test_load_factor_clips_but_keeps_raw_value():
    sample = compute_load_factor(LoadWindowStats(lambda_=500, qhat=80.0, window_index=0), CFG)
    assert sample.rho == 100.0
    assert sample.raw_rho == pytest.approx(100.0 * 540 / 196)

    idle = compute_load_factor(LoadWindowStats(lambda_=0, qhat=0.0, window_index=0), CFG)
    assert idle.rho == 0.0


def test_affine_transform_applies_before_clipping():
    cfg = LoadFactorConfig(capacity=1000.0, transform_a=0.5, transform_b=10.0)
    sample = compute_load_factor(LoadWindowStats(lambda_=98, qhat=0.0, window_index=0), cfg)
    assert sample.rho == pytest.approx(0.5 * 50.0 + 10.0)

    shifted = LoadFactorConfig(capacity=1000.0, transform_b=-20.0)
    assert compute_load_factor(LoadWindowStats(lambda_=10, qhat=0.0, window_index=0), shifted).rho == 0.0


def test_window_stats_reject_negative_values():
    with pytest.raises(ValueError):
        LoadWindowStats(lambda_=-1, qhat=0.0, window_index=0)
    with pytest.raises(ValueError):
        LoadWindowStats(lambda_=0, qhat=-0.5, window_index=0)


@given(integers(min_value=0, max_value=5000), integers(min_value=0, max_value=5000),
       floats(min_value=0, max_value=500), floats(min_value=0, max_value=500))
def test_load_factor_monotone_and_bounded(l1, l2, q1, q2):
    low = compute_load_factor(LoadWindowStats(lambda_=min(l1, l2), qhat=min(q1, q2), window_index=0), CFG)
    high = compute_load_factor(LoadWindowStats(lambda_=max(l1, l2), qhat=max(q1, q2), window_index=0), CFG)
    assert 0.0 <= low.rho <= high.rho <= 100.0


@given(integers(min_value=0, max_value=2000), floats(min_value=0, max_value=100),
       integers(min_value=1, max_value=20))
def test_load_factor_scale_equivariant(arrivals, qhat, scale):
    base = compute_load_factor(LoadWindowStats(lambda_=arrivals, qhat=qhat, window_index=0), CFG)
    scaled_cfg = LoadFactorConfig(capacity=1000.0 * scale)
    scaled = compute_load_factor(
        LoadWindowStats(lambda_=arrivals * scale, qhat=qhat * scale, window_index=0), scaled_cfg
    )
    assert scaled.raw_rho == pytest.approx(base.raw_rho, rel=1e-9, abs=1e-9)


def test_persistent_queue_update():
    assert update_persistent_queue(0.0, 8.0, 0.125) == pytest.approx(1.0)
    assert update_persistent_queue(4.0, 0.0, 0.5) == pytest.approx(2.0)
    assert update_persistent_queue(3.0, 9.0, 1.0) == 9.0
    with pytest.raises(ValueError):
        update_persistent_queue(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        update_persistent_queue(0.0, 1.0, 1.5)


def test_monitor_windows():
    monitor = LinkLoadMonitor("R1-R2", CFG, smoothing_weight=0.5)
    for _ in range(49):
        monitor.record_arrival()
    monitor.sample_queue(4)
    monitor.sample_queue(0)

    first = monitor.close_window()
    assert first.lambda_ == 49 and first.window_index == 0
    assert first.qhat == pytest.approx(1.0)
    assert monitor.current_rho == pytest.approx(100.0 * (49 + 0.5) / 196)
    assert monitor.max_queue_seen == 4

    second = monitor.close_window()
    assert second.lambda_ == 0 and second.window_index == 1
    assert [s.window_index for s in monitor.samples] == [0, 1]


@given(lists(integers(min_value=0, max_value=500), min_size=1, max_size=200),
       floats(min_value=0.01, max_value=1.0))
def test_persistent_queue_never_exceeds_largest_sample(queue_lengths, weight):
    monitor = LinkLoadMonitor("R1-R2", CFG, smoothing_weight=weight)
    for q in queue_lengths:
        monitor.sample_queue(q)
        assert 0.0 <= monitor.qhat <= monitor.max_queue_seen + 1e-9
    assert monitor.max_queue_seen == max(queue_lengths)
