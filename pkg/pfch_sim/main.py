# main.py
"""Точка входа симулятора.

Подкоманды:
  run              — шаги до t_end, ряд series.csv, снимки snap_NNNNNN.pfch, verdicts.txt
  stationary       — шаги до стационарного состояния, снимки snap_NNNNNN.pfch
                     и итоговый stationary.pfch
  check            — прогон сохранённого series.csv через проверки
  derivative-test  — тейлоровские отношения и устойчивость электростатики

Коды выхода: 0 — все проверки прошли, 1 — есть провал (или неожиданная
ошибка), 2 — ошибка конфигурации/использования/отсутствует файл.

Окружение:
  PFCH_MAX_CELLS, PFCH_LOG_LEVEL, PFCH_DB (см. config.py)
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import db
from config import (
    STANDARD_SCENARIO,
    ConfigError,
    RunConfig,
    build_e0,
    db_name,
    load_config,
    log_level,
    parse_config,
    with_overrides,
)
from diagnostics import (
    CheckReport,
    DiagnosticsSeries,
    default_checks,
    derivative_suite,
    holder_quotient,
)
from helpers import init_state
from logs import log_step, log_verdicts, setup_logging
from snapshots import SnapshotError, read_series_csv, state_fields, write_series_csv, write_snapshot, write_verdicts
from stepper import StepError, StepResult, Stepper, run, run_to_stationary

log = logging.getLogger("pfch")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
RESTART_DRIFT = 1e-9


class UsageError(Exception):
    pass


# ==========================================================
#                       ARGUMENTS
# ==========================================================


def _u64(raw: str) -> int:
    v = int(raw, 10)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfch_sim", description="Phase-field copolymer/homopolymer simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool) -> None:
        p.add_argument("--config", required=config_required, help="scenario file ([grid], [model], ...)")
        p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
        p.add_argument("--log-level", default=None, help="DEBUG/INFO/WARNING (overrides PFCH_LOG_LEVEL)")

    for name in ("run", "stationary"):
        p = sub.add_parser(name)
        common(p, config_required=True)
        p.add_argument("--t-end", type=float, default=None)
        p.add_argument("--seed", type=_u64, default=None)
        p.add_argument("--snapshot-every", type=int, default=None)

    p = sub.add_parser("check")
    p.add_argument("series", help="series.csv written by `run`")
    p.add_argument("--config", default=None, help="scenario used for the run (target means, grad_tol)")
    p.add_argument("--out", default=None, help="where to write verdicts.txt (default: next to the series)")
    p.add_argument("--log-level", default=None)

    p = sub.add_parser("derivative-test")
    common(p, config_required=False)
    p.add_argument("--triples", type=int, default=10)
    p.add_argument("--seed", type=_u64, default=0)
    return parser


def _load(args) -> RunConfig:
    if args.config is None:
        return parse_config(STANDARD_SCENARIO, source="<standard scenario>")
    return load_config(args.config)


# ==========================================================
#                       COMMANDS
# ==========================================================


def print_table(reports: Sequence[CheckReport]) -> None:
    print(f"{'check':<20} {'worst':>16} {'threshold':>16}  verdict")
    for r in reports:
        print(f"{r.name:<20} {r.worst:>16.8g} {r.threshold:>16.8g}  {'pass' if r.passed else 'FAIL'}")


def _snapshot_writer(out_dir: Path, every: int):
    def _cb(index: int, time: float, result: StepResult) -> None:
        if every and index % every == 0:
            write_snapshot(out_dir / f"snap_{index:06d}.pfch", state_fields(result.state.c, result.phi))

    return _cb


def _step_logger(every: int):
    def _cb(index: int, time: float, result: StepResult) -> None:
        if every and index % every == 0:
            log_step(index, time, result)

    return _cb


def cmd_run(cfg: RunConfig) -> tuple[int, list[CheckReport]]:
    out_dir = Path(cfg.output.dir)
    grid = cfg.grid
    e0 = build_e0(grid, cfg.efield)
    c0 = init_state(grid, cfg.initial)
    series = DiagnosticsSeries()
    log.info("[RUN] %dx%d grid, tau=%g, t_end=%g -> %s", grid.nx, grid.ny, cfg.step.tau, cfg.output.t_end, out_dir)

    traj = run(
        grid,
        c0,
        e0,
        cfg.params,
        cfg.step,
        cfg.output.t_end,
        callbacks=[
            series.collector(grid, cfg.params),
            _snapshot_writer(out_dir, cfg.output.snapshot_every),
            _step_logger(cfg.output.log_every),
        ],
        keep_states=cfg.output.holder_pairs > 0,
        max_steps=cfg.output.max_steps,
    )
    n = len(traj.results)
    final = traj.final
    write_snapshot(out_dir / f"snap_{n:06d}.pfch", state_fields(final.state.c, final.phi))
    write_series_csv(out_dir / "series.csv", series)

    reports = default_checks(series, c0.target_mean, cfg.step.grad_tol)
    if cfg.output.holder_pairs > 0 and len(traj.states) == len(traj.times):
        q = holder_quotient(grid, traj.times, traj.states, cfg.output.holder_pairs)
        reports.append(CheckReport("holder_quotient", q, math.inf, math.isfinite(q)))
    write_verdicts(out_dir / "verdicts.txt", reports)
    log.info("[IO] ✅ %d steps written to %s", n, out_dir)
    return (EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL), reports


def cmd_stationary(cfg: RunConfig) -> tuple[int, list[CheckReport]]:
    out_dir = Path(cfg.output.dir)
    grid = cfg.grid
    e0 = build_e0(grid, cfg.efield)
    c0 = init_state(grid, cfg.initial)
    series = DiagnosticsSeries()
    log.info("[RUN] stationary search, stat_tol=%g, budget %d steps", cfg.output.stat_tol, cfg.output.max_steps)

    res = run_to_stationary(
        grid,
        c0,
        e0,
        cfg.params,
        cfg.step,
        cfg.output.stat_tol,
        cfg.output.max_steps,
        callbacks=[
            series.collector(grid, cfg.params),
            _snapshot_writer(out_dir, cfg.output.snapshot_every),
            _step_logger(cfg.output.log_every),
        ],
    )
    final = res.result
    write_snapshot(out_dir / "stationary.pfch", state_fields(final.state.c, final.phi))
    write_series_csv(out_dir / "series.csv", series)

    reports = default_checks(series, c0.target_mean, cfg.step.grad_tol)
    stat = final.stationarity / (1.0 + final.w_norm)
    reports.append(CheckReport("stationarity", stat, cfg.output.stat_tol, res.converged, res.steps))

    # один шаг из найденного состояния почти не меняет энергию
    again = Stepper(grid, e0, cfg.params, cfg.step).step(final.state)
    drift = abs(again.report.total - final.report.total)
    reports.append(CheckReport("restart_energy_drift", drift, RESTART_DRIFT, drift <= RESTART_DRIFT))

    write_verdicts(out_dir / "verdicts.txt", reports)
    log.info("[IO] ✅ stationary state after %d steps (t=%g) written to %s", res.steps, res.time, out_dir)
    return (EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL), reports


def cmd_check(args) -> tuple[int, list[CheckReport]]:
    path = Path(args.series)
    if not path.exists():
        raise UsageError(f"series file not found: {path}")
    out_dir = Path(args.out) if args.out else path.parent
    try:
        series = read_series_csv(path)
    except SnapshotError as e:
        log.error("[CHECK] ❌ series cannot be replayed: %s", e)
        report = CheckReport("series_readable", 1.0, 0.0, False)
        write_verdicts(out_dir / "verdicts_check.txt", [report])
        return EXIT_FAIL, [report]

    target = None
    grad_tol = 1e-8
    if args.config is not None:
        cfg = load_config(args.config)
        target = cfg.initial.m if cfg.initial.kind == "noise" else None
        grad_tol = cfg.step.grad_tol
    reports = default_checks(series, target, grad_tol)
    write_verdicts(out_dir / "verdicts_check.txt", reports)
    return (EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL), reports


def cmd_derivative_test(cfg: RunConfig, triples: int, seed: int) -> tuple[int, list[CheckReport]]:
    if triples < 1:
        raise UsageError("--triples must be at least 1")
    grid = cfg.grid
    e0 = build_e0(grid, cfg.efield)
    log.info("[CHECK] derivative suite on %dx%d, %d triples, seed %d", grid.nx, grid.ny, triples, seed)
    reports = derivative_suite(grid, cfg.params.permittivity, e0, triples=triples, seed=seed, tol=cfg.step.cg_tol)
    return (EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL), reports


# ==========================================================
#                       ENTRYPOINT
# ==========================================================


def _ledger_path(args, cfg: RunConfig | None) -> Path | None:
    if args.command in ("run", "stationary") and cfg is not None:
        return Path(cfg.output.dir) / db_name()
    if args.command == "derivative-test" and args.out:
        return Path(args.out) / db_name()
    if args.command == "check":
        return (Path(args.out) if args.out else Path(args.series).parent) / db_name()
    return None


def cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(args.log_level or log_level())
    cfg = None
    ledger = None
    run_id = None
    code = EXIT_FAIL
    reports: list[CheckReport] = []
    try:
        if args.command != "check":
            cfg = _load(args)
            if args.command in ("run", "stationary"):
                cfg = with_overrides(
                    cfg, out=args.out, t_end=args.t_end, seed=args.seed, snapshot_every=args.snapshot_every
                )
            elif args.out:
                cfg = with_overrides(cfg, out=args.out)

        ledger = _ledger_path(args, cfg)
        if ledger is not None:
            db.db_init(ledger)
            run_id = db.db_start_run(ledger, args.command, getattr(args, "config", None))

        if args.command == "run":
            code, reports = cmd_run(cfg)
        elif args.command == "stationary":
            code, reports = cmd_stationary(cfg)
        elif args.command == "check":
            code, reports = cmd_check(args)
        else:
            code, reports = cmd_derivative_test(cfg, args.triples, args.seed)
            if args.out:
                write_verdicts(Path(cfg.output.dir) / "verdicts_derivatives.txt", reports)
            print_table(reports)

        log_verdicts(reports)
    except ConfigError as e:
        log.error("[BOOT] ❌ %s", e)
        code = EXIT_USAGE
    except UsageError as e:
        log.error("[BOOT] ❌ %s", e)
        code = EXIT_USAGE
    except StepError:
        logging.exception("[RUN] ❌ time stepping failed")
        code = EXIT_FAIL
    except Exception:
        logging.exception("[RUN] ❌ unexpected error")
        code = EXIT_FAIL

    if ledger is not None and run_id is not None:
        try:
            db.db_log_checks(ledger, run_id, reports)
            db.db_finish_run(ledger, run_id, code)
        except Exception:
            logging.exception("[IO] ❌ run ledger update failed")
    return code


def _main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    _main()
