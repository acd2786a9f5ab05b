import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcakit.telemetry import (
    FaultScenario,
    LogLevel,
    MetricRecord,
    TelemetryFormatError,
    TelemetrySet,
    TelemetrySource,
    filter_gap_scenarios,
    filter_overlapping_scenarios,
    load_scenarios,
    load_telemetry,
    slice_window,
)

MIN = 60_000


def scenario(sid, start_s, end_s, loc="svc1", ftype="high memory usage"):
    return FaultScenario(
        id=sid,
        window_start=start_s * 1000,
        window_end=end_s * 1000,
        gt_location=loc,
        gt_fault_type=ftype,
        dataset_tag="test",
    )


def metrics_set(timestamps):
    return TelemetrySet(metrics=[MetricRecord(ts, "e", "m", 1.0) for ts in timestamps])


# --- loading ---------------------------------------------------------------

METRIC_COLUMNS = {"timestamp": "ts", "entity": "entity", "metric_name": "name", "value": "value"}


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_metrics_sorted(tmp_path):
    path = write(
        tmp_path / "m.csv",
        "ts,entity,name,value\n3000,b,cpu,2.0\n1000,a,cpu,1.0\n2000,a,mem,3.5\n",
    )
    out = load_telemetry(metrics=TelemetrySource(path, METRIC_COLUMNS))
    assert [r.timestamp for r in out.metrics] == [1000, 2000, 3000]
    assert out.metrics[0] == MetricRecord(1000, "a", "cpu", 1.0)
    assert not out.issues


def test_non_numeric_value_strict_names_row(tmp_path):
    path = write(tmp_path / "m.csv", "ts,entity,name,value\n1000,a,cpu,1.0\n2000,a,cpu,oops\n")
    with pytest.raises(TelemetryFormatError, match="row 3"):
        load_telemetry(metrics=TelemetrySource(path, METRIC_COLUMNS))


def test_non_numeric_value_lenient_skips_and_reports(tmp_path):
    path = write(tmp_path / "m.csv", "ts,entity,name,value\n1000,a,cpu,1.0\n2000,a,cpu,oops\n")
    out = load_telemetry(metrics=TelemetrySource(path, METRIC_COLUMNS), strict=False)
    assert len(out.metrics) == 1
    assert len(out.issues) == 1
    assert out.issues[0].line_no == 3


def test_missing_required_column_fatal_even_lenient(tmp_path):
    path = write(tmp_path / "m.csv", "ts,entity,value\n1000,a,1.0\n")
    with pytest.raises(TelemetryFormatError, match="name"):
        load_telemetry(metrics=TelemetrySource(path, METRIC_COLUMNS), strict=False)


def test_negative_span_duration_rejected(tmp_path):
    columns = {
        "trace_id": "tid", "span_id": "sid", "caller": "caller", "callee": "callee",
        "start": "start", "duration": "dur", "status_code": "status",
    }
    path = write(
        tmp_path / "t.csv",
        "tid,sid,caller,callee,start,dur,status\nt1,s1,a,b,1000,-1,200\n",
    )
    with pytest.raises(TelemetryFormatError, match="duration"):
        load_telemetry(traces=TelemetrySource(path, columns))


def test_log_level_parsing(tmp_path):
    columns = {"timestamp": "ts", "entity": "e", "level": "lvl", "message": "msg"}
    path = write(
        tmp_path / "l.csv",
        "ts,e,lvl,msg\n1000,a,warning,w\n2000,a,ERROR,e\n3000,a,trace,t\n",
    )
    out = load_telemetry(logs=TelemetrySource(path, columns))
    assert [r.level for r in out.logs] == [LogLevel.WARN, LogLevel.ERROR, LogLevel.OTHER]


def test_load_scenarios_validates_fault_category(tmp_path):
    path = write(
        tmp_path / "s.csv",
        "id,window_start,window_end,gt_location,gt_fault_type,dataset_tag\n"
        "s1,1000,2000,svc1,weird fault,demo\n",
    )
    with pytest.raises(TelemetryFormatError, match="weird fault"):
        load_scenarios(path, fault_categories=["high memory usage"])
    scenarios, _ = load_scenarios(path)  # no declared set: accepted
    assert scenarios[0].gt_fault_type == "weird fault"


# --- overlap filter ----------------------------------------------------------

def test_disjoint_windows_kept():
    a, b = scenario("a", 0, 100), scenario("b", 220, 300)  # 120 s apart
    assert filter_overlapping_scenarios([a, b]) == [a, b]


def test_overlapping_window_drops_later():
    a, b = scenario("a", 0, 100), scenario("b", 50, 150)
    assert filter_overlapping_scenarios([a, b]) == [a]


def test_gap_below_min_gap_drops_second():
    a, b = scenario("a", 0, 100), scenario("b", 130, 200)  # 30 s apart
    assert filter_overlapping_scenarios([a, b], min_gap_s=45) == [a]
    assert filter_overlapping_scenarios([a, b], min_gap_s=30) == [a, b]


def test_unsorted_input_rejected():
    a, b = scenario("a", 100, 200), scenario("b", 0, 50)
    with pytest.raises(ValueError, match="sorted"):
        filter_overlapping_scenarios([a, b])


@st.composite
def scenario_lists(draw):
    n = draw(st.integers(min_value=0, max_value=8))
    out = []
    cursor = 1
    for i in range(n):
        start = cursor + draw(st.integers(min_value=0, max_value=200))
        end = start + draw(st.integers(min_value=1, max_value=120))
        out.append(scenario(f"s{i}", start, end))
        cursor = start + 1  # keep sorted by window_start, overlaps allowed
    return out


@settings(max_examples=100)
@given(scenario_lists())
def test_overlap_filter_idempotent_and_gapped(scenarios):
    once = filter_overlapping_scenarios(scenarios)
    assert filter_overlapping_scenarios(once) == once
    for prev, cur in zip(once, once[1:]):
        assert cur.window_start - prev.window_end >= 45_000


# --- gap filter --------------------------------------------------------------

def test_continuous_telemetry_keeps_all():
    telemetry = metrics_set(range(1000, 4_000_000, 1000))  # 1 Hz
    scenarios = [scenario("a", 100, 700), scenario("b", 800, 1400)]
    assert filter_gap_scenarios(scenarios, telemetry) == scenarios


def test_long_silence_inside_window_removes_scenario():
    # 40-minute hole between 600 s and 3000 s
    timestamps = list(range(1000, 600_001, 1000)) + list(range(3_000_000, 3_600_001, 1000))
    telemetry = metrics_set(timestamps)
    hit = scenario("hit", 500, 1200)       # spans the hole
    clean = scenario("clean", 3100, 3300)  # fully inside the second stretch
    assert filter_gap_scenarios([hit, clean], telemetry) == [clean]


def test_short_silence_kept():
    # 20-minute hole: below the 30-minute default
    timestamps = list(range(1000, 600_001, 1000)) + list(range(1_800_000, 2_400_001, 1000))
    telemetry = metrics_set(timestamps)
    sc = scenario("a", 500, 1900)
    assert filter_gap_scenarios([sc], telemetry) == [sc]


def test_empty_telemetry_removes_all_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        out = filter_gap_scenarios([scenario("a", 0, 10)], TelemetrySet())
    assert out == []
    assert any("empty" in rec.message for rec in caplog.records)


# --- slicing -----------------------------------------------------------------

def test_slice_window_counts():
    telemetry = metrics_set(range(1000, 101_000, 1000))  # 100 records, 1..100 s
    sc = scenario("a", 40, 49)
    bundle = slice_window(sc, telemetry)
    assert len(bundle.metrics) == 10  # closed interval: 40..49 s inclusive


def test_slice_window_end_boundary_included():
    telemetry = metrics_set([10_000, 20_000, 30_000])
    sc = scenario("a", 5, 20)
    bundle = slice_window(sc, telemetry)
    assert [r.timestamp for r in bundle.metrics] == [10_000, 20_000]


def test_slice_window_baseline_free_flag():
    telemetry = metrics_set([100_000, 110_000])
    sc = scenario("a", 95, 115)
    bundle = slice_window(sc, telemetry, baseline_min=1.0)
    assert bundle.baseline_free
    with_baseline = slice_window(scenario("b", 101, 115), telemetry, baseline_min=1.0)
    assert not with_baseline.baseline_free


@settings(max_examples=60)
@given(
    start=st.integers(min_value=100, max_value=5000),
    length=st.integers(min_value=1, max_value=2000),
    stamps=st.lists(st.integers(min_value=1, max_value=10_000_000), min_size=0, max_size=60),
)
def test_slice_window_bounds_property(start, length, stamps):
    telemetry = metrics_set(sorted(set(stamps)))
    sc = scenario("a", start, start + length)
    bundle = slice_window(sc, telemetry, baseline_min=15.0)
    lo = sc.window_start - 15 * MIN
    for record in bundle.metrics:
        assert sc.window_start <= record.timestamp <= sc.window_end
    for record in bundle.baseline_metrics:
        assert lo <= record.timestamp < sc.window_start
