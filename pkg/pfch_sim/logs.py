# logs.py
import logging
import os
import sys

from diagnostics import CheckReport
from stepper import StepResult

log = logging.getLogger("pfch")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def enable_line_buffered_io() -> None:
    """Чтобы логи появлялись сразу, а не пачкой в конце."""
    try:
        sys.stdout.reconfigure(line_buffering=True)
        sys.stderr.reconfigure(line_buffering=True)
    except Exception:
        os.environ.setdefault("PYTHONUNBUFFERED", "1")


def setup_logging(level: str = "INFO") -> None:
    enable_line_buffered_io()
    numeric = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(level=numeric, format=LOG_FORMAT, stream=sys.stderr)
    # basicConfig молчит, если обработчики уже есть
    logging.getLogger().setLevel(numeric)


def log_step(index: int, time: float, result: StepResult) -> None:
    rep = result.report
    flag = "" if result.converged else " (inner budget exhausted)"
    log.info(
        "[STEP] n=%d t=%.6g E=%.10g diss=%.3e iters=%d res=%.2e tau=%g%s",
        index,
        time,
        rep.total,
        rep.dissipation,
        result.inner_iters,
        result.residual,
        result.accepted_tau,
        flag,
    )


def log_verdicts(reports: list[CheckReport]) -> None:
    for r in reports:
        if r.passed:
            log.info("[CHECK] ✅ %s worst=%.6g threshold=%.6g", r.name, r.worst, r.threshold)
        else:
            log.error("[CHECK] ❌ %s worst=%.6g threshold=%.6g (index %d)", r.name, r.worst, r.threshold, r.index)
