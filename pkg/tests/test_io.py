import logging
import struct
from dataclasses import replace

import numpy as np
import pytest

from config import ConfigError, InitialSpec
from db import db_finish_run, db_get_checks, db_get_run, db_init, db_log_checks, db_start_run
from diagnostics import CheckReport, DiagnosticsSeries, SeriesRecord, column_names
from grid import GridSpec, mean
from helpers import LCG_A, LCG_C, Lcg64, atomic_write_bytes, init_state, state_from_snapshot
from logs import log_verdicts
from snapshots import (
    MAGIC,
    SnapshotError,
    decode_snapshot,
    encode_snapshot,
    read_series_csv,
    read_snapshot,
    series_to_csv,
    state_fields,
    verdicts_text,
    write_series_csv,
    write_snapshot,
)

SPEC = InitialSpec(m=(0.3, 0.3, 0.4), amplitude=0.05, seed=12345)


# ---------- генератор и начальное состояние ----------


def test_lcg_recurrence_and_range() -> None:
    gen = Lcg64(1)
    assert gen.next_u64() == (LCG_A + LCG_C) % 2**64
    u = Lcg64(42).uniform(10_000)
    assert u.min() >= -1.0 and u.max() < 1.0
    assert abs(u.mean()) < 0.05
    assert np.array_equal(u, Lcg64(42).uniform(10_000))
    assert not np.array_equal(u, Lcg64(43).uniform(10_000))


def test_lcg_accepts_full_u64_seed() -> None:
    gen = Lcg64(2**64 - 1)
    assert 0 <= gen.next_u64() < 2**64


def test_init_state_deterministic_with_exact_means() -> None:
    grid = GridSpec(16, 12)
    a = init_state(grid, SPEC)
    b = init_state(grid, SPEC)
    assert np.array_equal(a.c, b.c)
    assert np.max(np.abs(np.asarray(mean(grid, a.c)) - np.array(SPEC.m))) <= 1e-14
    assert a.sum_violation() <= 1e-15
    assert not np.array_equal(a.c, init_state(grid, replace(SPEC, seed=1)).c)


def test_init_state_zero_amplitude_is_uniform() -> None:
    grid = GridSpec(8, 8)
    st = init_state(grid, replace(SPEC, amplitude=0.0))
    assert np.all(st.c[0] == 0.3)
    assert np.all(st.c[2] == 0.4)


def test_init_state_rejects_margin_violation() -> None:
    with pytest.raises(ConfigError, match="reduce amplitude"):
        init_state(GridSpec(8, 8), replace(SPEC, margin=0.28))


def test_state_from_snapshot_roundtrip(tmp_path) -> None:
    grid = GridSpec(8, 6)
    st = init_state(grid, SPEC)
    path = tmp_path / "s.pfch"
    write_snapshot(path, state_fields(st.c, np.zeros(grid.shape)))
    back = state_from_snapshot(grid, path)
    assert np.array_equal(back.c, st.c)
    loaded = init_state(grid, InitialSpec(kind="file", path=str(path)))
    assert np.array_equal(loaded.c, st.c)


def test_state_from_snapshot_mismatches(tmp_path) -> None:
    path = tmp_path / "s.pfch"
    write_snapshot(path, {"c_a": np.zeros((4, 4)), "c_b": np.zeros((4, 4))})
    with pytest.raises(ConfigError, match="lacks fields c_s"):
        state_from_snapshot(GridSpec(4, 4), path)
    write_snapshot(path, state_fields(np.zeros((3, 4, 4))))
    with pytest.raises(ConfigError, match="does not match"):
        state_from_snapshot(GridSpec(8, 8), path)
    with pytest.raises(ConfigError, match="cannot load"):
        state_from_snapshot(GridSpec(4, 4), tmp_path / "missing.pfch")


def test_init_state_rejects_inadmissible_snapshot(tmp_path) -> None:
    grid = GridSpec(4, 4)
    c = np.full((3, 4, 4), 0.4)
    c[0, 0, 0] = -0.7
    path = tmp_path / "bad.pfch"
    write_snapshot(path, state_fields(c))
    with pytest.raises(ConfigError, match="deviates from 1"):
        init_state(grid, InitialSpec(kind="file", path=str(path)))


def test_init_state_rejects_snapshot_outside_margin(tmp_path) -> None:
    grid = GridSpec(4, 4)
    c = np.broadcast_to(np.array([0.3, 0.3, 0.4])[:, None, None], (3, 4, 4)).copy()
    c[0, 1, 1] = 0.0
    c[2, 1, 1] = 0.7
    path = tmp_path / "edge.pfch"
    write_snapshot(path, state_fields(c))
    with pytest.raises(ConfigError, match="leaves"):
        init_state(grid, InitialSpec(kind="file", path=str(path)))


def test_atomic_write_leaves_no_temporaries(tmp_path) -> None:
    target = tmp_path / "sub" / "f.bin"
    atomic_write_bytes(target, b"one")
    atomic_write_bytes(target, b"two")
    assert target.read_bytes() == b"two"
    assert [p.name for p in target.parent.iterdir()] == ["f.bin"]


# ---------- снимки ----------


def test_snapshot_roundtrip_is_bitwise(tmp_path, rng) -> None:
    fields = {"c_a": rng.normal(size=(5, 7)), "phi": rng.normal(size=(5, 7)), "поле": np.full((5, 7), np.pi)}
    path = tmp_path / "x.pfch"
    write_snapshot(path, fields)
    back = read_snapshot(path)
    assert list(back) == list(fields)
    for k in fields:
        assert back[k].tobytes() == fields[k].tobytes()


def test_snapshot_layout() -> None:
    data = encode_snapshot({"c_a": np.ones((2, 3))})
    assert data[:5] == MAGIC
    assert struct.unpack_from("<III", data, 5) == (3, 2, 1)
    assert struct.unpack_from("<I", data, 17) == (3,)
    assert data[21:24] == b"c_a"
    assert len(data) == 24 + 6 * 8


def test_empty_snapshot() -> None:
    data = encode_snapshot({}, shape=(4, 4))
    assert decode_snapshot(data) == {}
    assert struct.unpack_from("<III", data, 5) == (4, 4, 0)


def test_snapshot_rejects_bad_input() -> None:
    good = encode_snapshot({"c_a": np.ones((3, 3))})
    with pytest.raises(SnapshotError, match="bad magic"):
        decode_snapshot(b"XXXX1" + good[5:])
    with pytest.raises(SnapshotError, match="truncated"):
        decode_snapshot(good[:-1])
    with pytest.raises(SnapshotError, match="truncated"):
        decode_snapshot(good[:10])
    with pytest.raises(SnapshotError, match="trailing"):
        decode_snapshot(good + b"\0")
    with pytest.raises(SnapshotError, match="overflow"):
        decode_snapshot(good, max_cells=4)
    with pytest.raises(SnapshotError, match="share one 2-D shape"):
        encode_snapshot({"a": np.ones((3, 3)), "b": np.ones((3, 4))})
    with pytest.raises(SnapshotError, match="declared shape"):
        encode_snapshot({"a": np.ones((3, 3))}, shape=(4, 4))


# ---------- CSV и вердикты ----------


def _record(step: int) -> SeriesRecord:
    values = {name: 0.1 * step + 1e-17 for name in column_names()}
    values.update(step=step, inner_iters=7, converged=1)
    return SeriesRecord(**values)


def test_series_csv_roundtrip(tmp_path) -> None:
    series = DiagnosticsSeries([_record(0), _record(1), _record(2)])
    path = tmp_path / "series.csv"
    write_series_csv(path, series)
    text = path.read_text(encoding="utf-8")
    assert text.splitlines()[0] == ",".join(column_names())
    back = read_series_csv(path)
    assert back.records == series.records
    assert series_to_csv(back) == text


def test_series_csv_rejects_bad_files(tmp_path) -> None:
    path = tmp_path / "series.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(SnapshotError, match="empty"):
        read_series_csv(path)
    path.write_text("step,time\n0,0.0\n", encoding="utf-8")
    with pytest.raises(SnapshotError, match="header"):
        read_series_csv(path)
    good = series_to_csv(DiagnosticsSeries([_record(0)]))
    path.write_text(good + "1,2,3\n", encoding="utf-8")
    with pytest.raises(SnapshotError, match="line 3"):
        read_series_csv(path)
    path.write_text(good.replace(",7,1\n", ",seven,1\n"), encoding="utf-8")
    with pytest.raises(SnapshotError, match="line 2"):
        read_series_csv(path)


def test_verdicts_text() -> None:
    reports = [CheckReport("mass", 0.0, 1e-10, True), CheckReport("sum_constraint", 1.0, 1e-10, False)]
    assert verdicts_text(reports) == "mass,0.0,1e-10,pass\nsum_constraint,1.0,1e-10,fail\n"


# ---------- журнал запусков ----------


def test_run_ledger(tmp_path) -> None:
    path = tmp_path / "out" / "runs.db"
    db_init(path)
    db_init(path)
    rid = db_start_run(path, "run", "a.cfg")
    assert db_get_run(path, rid)["exit_code"] is None
    reports = [CheckReport("mass", 1e-12, 1e-10, True), CheckReport("energy_step", 0.5, 1e-10, False)]
    db_log_checks(path, rid, reports)
    db_log_checks(path, rid, [CheckReport("mass", 2e-12, 1e-10, True)])
    db_finish_run(path, rid, 1)
    run = db_get_run(path, rid)
    assert run["command"] == "run"
    assert run["config_path"] == "a.cfg"
    assert run["exit_code"] == 1
    assert run["finished_at"] >= run["started_at"]
    assert db_get_checks(path, rid) == [("energy_step", 0.5, 1e-10, False), ("mass", 2e-12, 1e-10, True)]
    assert db_start_run(path, "check", None) == rid + 1
    assert db_get_run(path, 999) is None


def test_ledger_checks_without_tables(tmp_path) -> None:
    assert db_get_checks(tmp_path / "empty.db", 1) == []


# ---------- логи ----------


def test_log_verdicts(caplog) -> None:
    caplog.set_level(logging.INFO, logger="pfch")
    log_verdicts([CheckReport("mass", 0.0, 1e-10, True), CheckReport("energy_step", 0.5, 1e-10, False, 4)])
    ok, bad = caplog.records
    assert ok.levelno == logging.INFO and "✅ mass" in ok.getMessage()
    assert bad.levelno == logging.ERROR and "(index 4)" in bad.getMessage()
