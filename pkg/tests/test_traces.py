import numpy as np
import pytest

from pcn.error_handling import TraceFormatError
from pcn.traces import (
    TraceFlow,
    gen_synthetic_trace,
    load_trace,
    parse_model_params,
    validate_model_params,
    write_trace,
)


def test_poisson_trace_rate_and_determinism():
    trace = gen_synthetic_trace("poisson", {"rate": 500}, 20.0, seed=9)
    again = gen_synthetic_trace("poisson", {"rate": 500}, 20.0, seed=9)
    other = gen_synthetic_trace("poisson", {"rate": 500}, 20.0, seed=10)

    expected = 500 * 20.0
    assert abs(len(trace) - expected) <= 4 * np.sqrt(expected)
    assert np.array_equal(trace.times, again.times)
    assert not np.array_equal(trace.times[:50], other.times[:50])
    assert np.all(np.diff(trace.times) >= 0)
    assert trace.times[-1] < 20.0
    assert set(trace.sizes) == {1000}


def test_onoff_trace_mean_rate():
    params = {"on_rate": 400, "off_rate": 100, "mean_on": 1.0, "mean_off": 1.0}
    trace = gen_synthetic_trace("onoff-mmpp", params, 400.0, seed=3, size=500)
    assert 0.8 * 250 <= len(trace) / 400.0 <= 1.2 * 250
    assert set(trace.sizes) == {500}


def test_onoff_with_silent_off_state():
    params = {"on_rate": 200, "off_rate": 0, "mean_on": 0.5, "mean_off": 0.5}
    trace = gen_synthetic_trace("onoff-mmpp", params, 50.0, seed=1)
    gaps = np.diff(trace.times)
    assert len(trace) > 0
    assert gaps.max() > 10 / 200


def test_generator_rejects_bad_arguments():
    with pytest.raises(ValueError):
        gen_synthetic_trace("pareto", {"rate": 1}, 10.0, seed=0)
    with pytest.raises(ValueError):
        gen_synthetic_trace("poisson", {}, 10.0, seed=0)
    with pytest.raises(ValueError):
        gen_synthetic_trace("poisson", {"rate": 10}, 0.0, seed=0)
    with pytest.raises(ValueError):
        validate_model_params("poisson", {"rate": 10, "burst": 2})


def test_parse_model_params():
    assert parse_model_params("on_rate=400, off_rate=100") == {"on_rate": 400.0, "off_rate": 100.0}
    assert parse_model_params("") == {}
    with pytest.raises(ValueError):
        parse_model_params("rate")
    with pytest.raises(ValueError):
        parse_model_params("rate=fast")


def test_written_trace_loads_back(tmp_path):
    trace = gen_synthetic_trace("poisson", {"rate": 100}, 5.0, seed=4)
    path = tmp_path / "bg.trace"
    write_trace(trace, path, header="poisson rate=100")
    loaded = load_trace(path, source="S1", sink="K1")

    assert path.read_text().startswith("# poisson rate=100\n")
    assert np.allclose(loaded.times, trace.times - trace.times[0], atol=2e-9)
    assert np.array_equal(loaded.sizes, trace.sizes)
    assert (loaded.source, loaded.sink) == ("S1", "K1")


def test_load_trace_shifts_to_zero(tmp_path):
    path = tmp_path / "t.trace"
    path.write_text("# recorded\n\n10.5 1500\n10.75 40\n10.75 576\n")
    trace = load_trace(path)
    assert list(trace.times) == [0.0, 0.25, 0.25]
    assert list(trace.sizes) == [1500, 40, 576]
    assert trace.duration == 0.25


@pytest.mark.parametrize("content, line", [
    ("0.0 100\n0.1\n", 2),
    ("0.0 100\nabc 100\n", 2),
    ("0.0 100\n0.5 100\n0.4 100\n", 3),
    ("0.0 0\n", 1),
    ("0.0 12.5\n", 1),
    ("inf 100\n", 1),
])
def test_load_trace_reports_bad_lines(tmp_path, content, line):
    path = tmp_path / "bad.trace"
    path.write_text(content)
    with pytest.raises(TraceFormatError) as excinfo:
        load_trace(path)
    assert excinfo.value.line == line
    assert str(path) in excinfo.value.format_error()


def test_load_trace_missing_and_empty(tmp_path):
    with pytest.raises(TraceFormatError, match="not found"):
        load_trace(tmp_path / "absent.trace")
    empty = tmp_path / "empty.trace"
    empty.write_text("# nothing\n")
    with pytest.raises(TraceFormatError, match="no packets"):
        load_trace(empty)


def test_trace_flow_len():
    flow = TraceFlow(times=np.array([0.0, 1.0]), sizes=np.array([1, 2]))
    assert len(flow) == 2 and flow.duration == 1.0
