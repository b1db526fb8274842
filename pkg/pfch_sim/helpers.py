# helpers.py
import os
import tempfile
from pathlib import Path

import numpy as np

from config import ConfigError, InitialSpec, Violation
from grid import GridSpec, mean
from operators import PhaseState

# ==========================================================
#                   SEEDED GENERATOR
# ==========================================================

# 64-битный LCG: x <- a*x + c mod 2^64 (константы MMIX Кнута)
LCG_A = 6364136223846793005
LCG_C = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (LCG_A * self.state + LCG_C) & _MASK
        return self.state

    def uniform(self, n: int) -> np.ndarray:
        """n чисел в [-1, 1) из старших 53 бит."""
        out = np.empty(n)
        for i in range(n):
            out[i] = (self.next_u64() >> 11) * (2.0 / (1 << 53)) - 1.0
        return out


# ==========================================================
#                   INITIAL STATE
# ==========================================================

SUM_TOL = 1e-12


def check_admissible(c: np.ndarray, margin: float, key: str, advice: str) -> None:
    """c_A + c_B + c_S = 1 поточечно и все компоненты в [margin, 1 - margin]."""
    problems = []
    if not np.all(np.isfinite(c)):
        problems.append(Violation("initial", key, 0, f"initial state contains non-finite values; {advice}"))
    else:
        sum_violation = float(np.max(np.abs(np.sum(c, axis=0) - 1.0)))
        if sum_violation > SUM_TOL:
            problems.append(
                Violation(
                    "initial", key, 0,
                    f"c_A + c_B + c_S deviates from 1 by {sum_violation:.3e} (> {SUM_TOL:g}); {advice}",
                )
            )
        lo = float(c.min())
        hi = float(c.max())
        if lo < margin or hi > 1.0 - margin:
            problems.append(
                Violation(
                    "initial", key, 0,
                    f"initial state leaves [{margin:g}, {1 - margin:g}] (range {lo:.4g}..{hi:.4g}); {advice}",
                )
            )
    if problems:
        raise ConfigError(problems)


def init_state(grid: GridSpec, spec: InitialSpec) -> PhaseState:
    m = np.asarray(spec.m, dtype=float)
    if spec.kind == "file":
        return state_from_snapshot(grid, Path(spec.path), spec.margin)

    if spec.amplitude == 0.0:
        c = np.broadcast_to(m[:, None, None], (3, *grid.shape)).copy()
        return PhaseState(c, m)

    gen = Lcg64(spec.seed)
    c = np.empty((3, *grid.shape))
    for i in range(2):
        u = gen.uniform(grid.nx * grid.ny).reshape(grid.shape)
        u = u - mean(grid, u)
        c[i] = m[i] + spec.amplitude * u
        # точное среднее после округлений
        c[i] = c[i] + (m[i] - mean(grid, c[i]))
    c[2] = 1.0 - c[0] - c[1]

    check_admissible(c, spec.margin, "amplitude", "reduce amplitude or move m away from the simplex boundary")
    return PhaseState(c, m)


def state_from_snapshot(grid: GridSpec, path: Path, margin: float = 1e-3) -> PhaseState:
    from snapshots import SnapshotError, read_snapshot

    try:
        fields = read_snapshot(path, max_cells=grid.max_cells)
    except (OSError, SnapshotError) as e:
        raise ConfigError([Violation("initial", "path", 0, f"cannot load {path}: {e}")]) from None
    missing = [n for n in ("c_a", "c_b", "c_s") if n not in fields]
    if missing:
        raise ConfigError([Violation("initial", "path", 0, f"snapshot lacks fields {', '.join(missing)}")])
    c = np.stack([fields["c_a"], fields["c_b"], fields["c_s"]])
    if c.shape[1:] != grid.shape:
        raise ConfigError(
            [Violation("initial", "path", 0, f"snapshot grid {c.shape[2]}x{c.shape[1]} does not match [grid]")]
        )
    check_admissible(
        c, margin, "path", f"{path} is not an admissible state; regenerate it or keep c_S = 1 - c_A - c_B inside the margin"
    )
    return PhaseState(c, np.asarray(mean(grid, c)))


# ==========================================================
#                    ATOMIC WRITES
# ==========================================================


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Пишем во временный файл в той же папке, затем os.replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
