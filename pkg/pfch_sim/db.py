# db.py
import sqlite3
import time
from pathlib import Path

from diagnostics import CheckReport

# ==========================================================
#                      DB HELPERS
# ==========================================================
# Журнал запусков лежит рядом с результатами; только здесь есть время.


def db_init(db_path: Path) -> None:
    Path(db_path).parent.mkdir(parents=True, exist_ok=True)
    with sqlite3.connect(db_path) as con:
        con.execute(
            "CREATE TABLE IF NOT EXISTS runs ("
            "run_id INTEGER PRIMARY KEY AUTOINCREMENT, "
            "command TEXT NOT NULL, "
            "config_path TEXT, "
            "started_at INTEGER NOT NULL, "
            "finished_at INTEGER, "
            "exit_code INTEGER"
            ");"
        )
        con.execute(
            "CREATE TABLE IF NOT EXISTS checks ("
            "run_id INTEGER NOT NULL, "
            "name TEXT NOT NULL, "
            "worst REAL NOT NULL, "
            "threshold REAL NOT NULL, "
            "passed INTEGER NOT NULL, "
            "created_at INTEGER NOT NULL, "
            "PRIMARY KEY (run_id, name)"
            ");"
        )


def db_start_run(db_path: Path, command: str, config_path: str | None) -> int:
    with sqlite3.connect(db_path) as con:
        cur = con.execute(
            "INSERT INTO runs(command, config_path, started_at) VALUES(?, ?, ?);",
            (command, config_path, int(time.time())),
        )
        return int(cur.lastrowid)


def db_finish_run(db_path: Path, run_id: int, exit_code: int) -> None:
    with sqlite3.connect(db_path) as con:
        con.execute(
            "UPDATE runs SET finished_at=?, exit_code=? WHERE run_id=?;",
            (int(time.time()), exit_code, run_id),
        )


def db_log_checks(db_path: Path, run_id: int, reports: list[CheckReport]) -> None:
    with sqlite3.connect(db_path) as con:
        for r in reports:
            con.execute(
                "INSERT INTO checks(run_id, name, worst, threshold, passed, created_at) VALUES(?, ?, ?, ?, ?, ?) "
                "ON CONFLICT(run_id, name) DO UPDATE SET worst=excluded.worst, threshold=excluded.threshold, "
                "passed=excluded.passed, created_at=excluded.created_at;",
                (run_id, r.name, float(r.worst), float(r.threshold), int(r.passed), int(time.time())),
            )


def db_get_run(db_path: Path, run_id: int) -> dict | None:
    with sqlite3.connect(db_path) as con:
        row = con.execute(
            "SELECT command, config_path, started_at, finished_at, exit_code FROM runs WHERE run_id=?;",
            (run_id,),
        ).fetchone()
    if not row:
        return None
    keys = ("command", "config_path", "started_at", "finished_at", "exit_code")
    return dict(zip(keys, row))


def db_get_checks(db_path: Path, run_id: int) -> list[tuple[str, float, float, bool]]:
    try:
        with sqlite3.connect(db_path) as con:
            rows = con.execute(
                "SELECT name, worst, threshold, passed FROM checks WHERE run_id=? ORDER BY name;",
                (run_id,),
            ).fetchall()
    except sqlite3.OperationalError:
        return []
    return [(n, w, t, bool(p)) for n, w, t, p in rows]
