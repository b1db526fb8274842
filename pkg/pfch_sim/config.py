# config.py
"""Конфигурация симулятора.

Два источника:
  1) Файл сценария (текст `[section]` + `key = value`, комментарии `#`) —
     сетка, модель, шаг, начальное состояние, внешнее поле, вывод.
  2) Окружение — то, что относится к машине, а не к сценарию:
       PFCH_MAX_CELLS  — предел nx*ny (по умолчанию 2**22)
       PFCH_LOG_LEVEL  — уровень логов (INFO)
       PFCH_DB         — имя файла журнала запусков (runs.db)
     Приоритет: ENV, затем .env (python-dotenv), затем значения по умолчанию.

Все нарушения в файле сценария собираются вместе и выдаются одним
ConfigError со строками и ключами.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
from dotenv import dotenv_values

from grid import DEFAULT_MAX_CELLS, GridError, GridSpec
from physics import ModelParams, MobilitySpec, PermittivitySpec, model_violations
from stepper import StepConfig

log = logging.getLogger(__name__)

# ==========================================================
#                     ENVIRONMENT
# ==========================================================


def _clean_value(raw: str | None) -> str:
    """Чистим значение от пробелов и кавычек."""
    v = (raw or "").strip()
    if (v.startswith('"') and v.endswith('"')) or (v.startswith("'") and v.endswith("'")):
        v = v[1:-1].strip()
    return v


def _first_env(*names: str) -> tuple[str | None, str | None]:
    for n in names:
        val = os.getenv(n)
        if val and val.strip():
            return _clean_value(val), n
    return None, None


def _env_candidates() -> list[Path]:
    # .env рядом с модулями, в корне проекта и в текущей папке
    here = Path(__file__).resolve().parent
    return [here / ".env", here.parent / ".env", Path.cwd() / ".env"]


def _first_from_envfile(*names: str) -> tuple[str | None, str | None]:
    for env_path in _env_candidates():
        if not env_path.exists():
            continue
        parsed = dotenv_values(env_path)
        for n in names:
            val = parsed.get(n)
            if val and val.strip():
                return _clean_value(val), f"{env_path}::{n}"
    return None, None


def env_setting(name: str, default: str) -> tuple[str, str]:
    """(значение, источник) для машинной настройки."""
    val, src = _first_env(name)
    if val is None:
        val, src = _first_from_envfile(name)
    if val is None:
        return default, "default"
    return val, src or name


def max_cells() -> int:
    raw, src = env_setting("PFCH_MAX_CELLS", str(DEFAULT_MAX_CELLS))
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError([Violation("env", "PFCH_MAX_CELLS", 0, f"not an integer: {raw!r} (from {src})")])
    if value < 16:
        raise ConfigError([Violation("env", "PFCH_MAX_CELLS", 0, "cap must allow at least a 4x4 grid")])
    return value


def log_level() -> str:
    return env_setting("PFCH_LOG_LEVEL", "INFO")[0].upper()


def db_name() -> str:
    return env_setting("PFCH_DB", "runs.db")[0]


# ==========================================================
#                       ERRORS
# ==========================================================


@dataclass(frozen=True)
class Violation:
    section: str
    key: str
    line: int  # 0: нет строки (отсутствующий ключ, окружение)
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}" if self.line else "-"
        return f"[{self.section}] {self.key} ({where}): {self.message}"


class ConfigError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {v}" for v in self.violations))


# ==========================================================
#                     RUN CONFIG
# ==========================================================


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "noise"  # noise | file
    m: tuple[float, float, float] = (0.3, 0.3, 0.4)
    amplitude: float = 0.05
    seed: int | None = None
    path: str | None = None
    margin: float = 1e-3


@dataclass(frozen=True)
class FieldSpec:
    kind: str = "constant"  # constant | gradient
    ex: float = 1.0
    ey: float = 0.0
    coeffs: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)  # c00 c10 c01 c20 c11 c02


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    t_end: float = 0.2
    snapshot_every: int = 50
    log_every: int = 10
    stat_tol: float = 1e-6
    max_steps: int = 100_000
    holder_pairs: int = 200


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: ModelParams
    step: StepConfig
    initial: InitialSpec = field(default_factory=InitialSpec)
    efield: FieldSpec = field(default_factory=FieldSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    source: str = "<text>"


# ==========================================================
#                      VALUE PARSERS
# ==========================================================

REQUIRED = object()


def _p_int(raw: str) -> int:
    return int(raw, 10)


def _p_float(raw: str) -> float:
    v = float(raw)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _p_floats(n: int) -> Callable[[str], tuple[float, ...]]:
    def parse(raw: str) -> tuple[float, ...]:
        parts = [p for p in raw.replace(",", " ").split() if p]
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers, got {len(parts)}")
        return tuple(_p_float(p) for p in parts)

    return parse


def _p_choice(*options: str) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        v = raw.strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v

    return parse


def _p_str(raw: str) -> str:
    if not raw:
        raise ValueError("empty value")
    return raw


def _p_seed(raw: str) -> int:
    v = int(raw, 10)
    if not 0 <= v < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


# (parser, default); REQUIRED означает обязательный ключ
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "grid": {
        "nx": (_p_int, REQUIRED),
        "ny": (_p_int, REQUIRED),
        "lx": (_p_float, 1.0),
        "ly": (_p_float, 1.0),
    },
    "model": {
        "gamma": (_p_floats(3), (1e-3, 1e-3, 1e-3)),
        "theta": (_p_floats(3), (1.0, 1.0, 1.0)),
        "alpha_aa": (_p_float, 0.0),
        "alpha_ab": (_p_float, 0.0),
        "alpha_bb": (_p_float, 0.0),
        "interaction": (_p_floats(6), (0.0, 1.0, 1.0, 0.0, 1.0, 0.0)),
        "delta": (_p_float, 1e-4),
        "mobility": (_p_choice("projector", "matrix", "scaled_projector"), "projector"),
        "mobility_matrix": (_p_floats(9), None),
        "mobility_kappa": (_p_float, 0.5),
        "eps_a": (_p_float, 3.0),
        "eps_b": (_p_float, 1.0),
        "eps_s": (_p_float, 2.0),
        "eps_cutoff": (_p_float, 2.0),
    },
    "step": {
        "tau": (_p_float, REQUIRED),
        "grad_tol": (_p_float, 1e-8),
        "max_inner": (_p_int, 500),
        "armijo_c": (_p_float, 1e-4),
        "backtrack": (_p_float, 0.5),
        "tau_min": (_p_float, 1e-8),
        "cg_tol": (_p_float, 1e-12),
        "cg_max_iter": (_p_int, 0),
    },
    "initial": {
        "kind": (_p_choice("noise", "file"), "noise"),
        "m": (_p_floats(3), (0.3, 0.3, 0.4)),
        "amplitude": (_p_float, 0.05),
        "seed": (_p_seed, None),
        "path": (_p_str, None),
        "margin": (_p_float, 1e-3),
    },
    "field": {
        "kind": (_p_choice("constant", "gradient"), "constant"),
        "ex": (_p_float, 1.0),
        "ey": (_p_float, 0.0),
        "coeffs": (_p_floats(6), (1.0, 0.0, 0.0, 0.0, 0.0, 0.0)),
    },
    "output": {
        "dir": (_p_str, "out"),
        "t_end": (_p_float, 0.2),
        "snapshot_every": (_p_int, 50),
        "log_every": (_p_int, 10),
        "stat_tol": (_p_float, 1e-6),
        "max_steps": (_p_int, 100_000),
        "holder_pairs": (_p_int, 200),
    },
}


# ==========================================================
#                     TEXT PARSER
# ==========================================================


def _parse_sections(text: str) -> tuple[dict[tuple[str, str], tuple[str, int]], list[Violation]]:
    """Построчный разбор: [section] и key = value. Возвращает сырые значения с номерами строк."""
    entries: dict[tuple[str, str], tuple[str, int]] = {}
    problems: list[Violation] = []
    section: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("[") and s.endswith("]"):
            name = s[1:-1].strip().lower()
            if name not in SCHEMA:
                problems.append(Violation(name, "-", lineno, "unknown section"))
                section = "?"
            else:
                section = name
            continue
        if "=" not in s:
            problems.append(Violation(section or "-", s, lineno, "expected `key = value`"))
            continue
        k, v = s.split("=", 1)
        k = k.strip().lower()
        v = _clean_value(v)
        if section is None:
            problems.append(Violation("-", k, lineno, "key outside of any section"))
            continue
        if section == "?":
            continue  # ключи неизвестной секции уже покрыты её нарушением
        if k not in SCHEMA[section]:
            problems.append(Violation(section, k, lineno, "unknown key"))
            continue
        if (section, k) in entries:
            problems.append(Violation(section, k, lineno, f"duplicate key (first on line {entries[(section, k)][1]})"))
            continue
        entries[(section, k)] = (v, lineno)
    return entries, problems


def _resolve(entries, problems) -> tuple[dict[str, dict[str, Any]], dict[tuple[str, str], int]]:
    values: dict[str, dict[str, Any]] = {}
    lines: dict[tuple[str, str], int] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parser, default) in keys.items():
            if (section, key) in entries:
                raw, lineno = entries[(section, key)]
                lines[(section, key)] = lineno
                try:
                    values[section][key] = parser(raw)
                except ValueError as e:
                    problems.append(Violation(section, key, lineno, f"cannot parse {raw!r}: {e}"))
                    values[section][key] = None if default is REQUIRED else default
            elif default is REQUIRED:
                problems.append(Violation(section, key, 0, "missing mandatory key"))
                values[section][key] = None
            else:
                values[section][key] = default
    return values, lines


def parse_config(text: str, source: str = "<text>", cap: int | None = None) -> RunConfig:
    entries, problems = _parse_sections(text)
    values, lines = _resolve(entries, problems)

    def bad(section: str, key: str, message: str) -> None:
        problems.append(Violation(section, key, lines.get((section, key), 0), message))

    g = values["grid"]
    mo = values["model"]
    st = values["step"]
    ini = values["initial"]
    fl = values["field"]
    out = values["output"]

    # ---- сетка ----
    grid = None
    if g["nx"] is not None and g["ny"] is not None:
        for key in ("nx", "ny"):
            if g[key] < 4:
                bad("grid", key, "at least 4 cells per direction")
        for key in ("lx", "ly"):
            if not g[key] > 0:
                bad("grid", key, "domain length must be positive")
        if not any(v.section == "grid" for v in problems):
            try:
                grid = GridSpec(g["nx"], g["ny"], g["lx"], g["ly"], max_cells=cap if cap is not None else max_cells())
            except GridError as e:
                bad("grid", "nx", str(e))

    # ---- модель ----
    mob = MobilitySpec(
        kind=mo["mobility"],
        matrix=mo["mobility_matrix"],
        kappa=mo["mobility_kappa"],
    )
    perm = PermittivitySpec(mo["eps_s"], mo["eps_a"], mo["eps_b"], mo["eps_cutoff"])
    model_fields = dict(
        gamma=mo["gamma"],
        theta=mo["theta"],
        alpha=(mo["alpha_aa"], mo["alpha_ab"], mo["alpha_bb"]),
        chi=mo["interaction"],
        delta=mo["delta"],
        tau=st["tau"] if st["tau"] is not None else 1.0,
        mobility=mob,
        permittivity=perm,
    )
    params = None
    model_problems = model_violations(**model_fields)
    for key, message in model_problems:
        section = "step" if key == "tau" else "model"
        bad(section, "alpha_aa" if key == "alpha" else key, message)
    if not model_problems:
        params = ModelParams(**model_fields)

    # ---- шаг ----
    step_cfg = None
    if st["tau"] is not None:
        step_cfg = StepConfig(
            tau=st["tau"],
            grad_tol=st["grad_tol"],
            max_inner=st["max_inner"],
            armijo_c=st["armijo_c"],
            backtrack=st["backtrack"],
            tau_min=st["tau_min"],
            cg_tol=st["cg_tol"],
            cg_max_iter=st["cg_max_iter"],
        )
        for key, message in step_cfg.violations():
            if key == "tau" and any(v.key == "tau" for v in problems):
                continue
            bad("step", key, message)

    # ---- начальное состояние ----
    m = ini["m"]
    if ini["kind"] == "noise":
        if abs(sum(m) - 1.0) > 1e-12:
            bad("initial", "m", f"mean composition must sum to 1 (got {sum(m):.12g})")
        if ini["seed"] is None:
            bad("initial", "seed", "seed is mandatory for noise initial data")
        if ini["amplitude"] < 0:
            bad("initial", "amplitude", "must be non-negative")
        if not 0 <= ini["margin"] < 0.5:
            bad("initial", "margin", "must lie in [0, 0.5)")
        low = ini["amplitude"] + ini["margin"]
        if any(mi < low for mi in m):
            bad("initial", "m", f"every m_i must be at least amplitude + margin = {low:g}")
    elif ini["path"] is None:
        bad("initial", "path", "path is mandatory for file initial data")

    # ---- вывод ----
    if not out["t_end"] >= 0:
        bad("output", "t_end", "must be non-negative")
    for key in ("snapshot_every", "log_every", "max_steps", "holder_pairs"):
        if out[key] < 0:
            bad("output", key, "must be non-negative")
    if not out["stat_tol"] > 0:
        bad("output", "stat_tol", "must be positive")

    if problems:
        raise ConfigError(problems)

    return RunConfig(
        grid=grid,
        params=params,
        step=step_cfg,
        initial=InitialSpec(ini["kind"], tuple(m), ini["amplitude"], ini["seed"], ini["path"], ini["margin"]),
        efield=FieldSpec(fl["kind"], fl["ex"], fl["ey"], tuple(fl["coeffs"])),
        output=OutputSpec(**out),
        source=source,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError([Violation("-", "-", 0, f"config file not found: {path}")]) from None
    except UnicodeDecodeError as e:
        raise ConfigError([Violation("-", "-", 0, f"config file is not UTF-8: {e}")]) from None
    cfg = parse_config(text, source=str(path))
    log.info("[BOOT] ✅ config loaded from %s", path)
    return cfg


def with_overrides(
    cfg: RunConfig,
    *,
    out: str | None = None,
    t_end: float | None = None,
    seed: int | None = None,
    snapshot_every: int | None = None,
) -> RunConfig:
    problems = []
    output = cfg.output
    initial = cfg.initial
    if out is not None:
        output = replace(output, dir=out)
    if t_end is not None:
        if not t_end >= 0:
            problems.append(Violation("cli", "--t-end", 0, "must be non-negative"))
        output = replace(output, t_end=t_end)
    if snapshot_every is not None:
        if snapshot_every < 0:
            problems.append(Violation("cli", "--snapshot-every", 0, "must be non-negative"))
        output = replace(output, snapshot_every=snapshot_every)
    if seed is not None:
        if not 0 <= seed < 2**64:
            problems.append(Violation("cli", "--seed", 0, "seed must be an unsigned 64-bit integer"))
        initial = replace(initial, seed=seed)
    if problems:
        raise ConfigError(problems)
    return replace(cfg, output=output, initial=initial)


# ==========================================================
#                 APPLIED FIELD E0
# ==========================================================

# показатели (i, j) одночленов x^i y^j в порядке coeffs
_MONOMIALS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def build_e0(grid: GridSpec, spec: FieldSpec) -> np.ndarray:
    """E₀ в центрах ячеек: константа или ∇g, g = p(x, y)·x(lx-x)·y(ly-y)."""
    if spec.kind == "constant":
        return np.stack([np.full(grid.shape, spec.ex), np.full(grid.shape, spec.ey)])
    x, y = grid.cell_centers()
    return np.stack(gradient_potential(x, y, grid.lx, grid.ly, spec.coeffs)[1:])


def gradient_potential(x, y, lx: float, ly: float, coeffs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(g, ∂g/∂x, ∂g/∂y) для g = p·b, b = x(lx-x)y(ly-y)."""
    p = np.zeros_like(x)
    px = np.zeros_like(x)
    py = np.zeros_like(x)
    for c, (i, j) in zip(coeffs, _MONOMIALS):
        if c == 0.0:
            continue
        p = p + c * x**i * y**j
        if i:
            px = px + c * i * x ** (i - 1) * y**j
        if j:
            py = py + c * j * x**i * y ** (j - 1)
    bx = x * (lx - x)
    by = y * (ly - y)
    b = bx * by
    b_x = (lx - 2 * x) * by
    b_y = bx * (ly - 2 * y)
    return p * b, px * b + p * b_x, py * b + p * b_y


# Стандартный сценарий (тот же, что в config.example.cfg)
STANDARD_SCENARIO = """\
[grid]
nx = 64
ny = 64
lx = 1.0
ly = 1.0

[model]
gamma = 1e-3, 1e-3, 1e-3
theta = 1, 1, 1
alpha_aa = 100
alpha_ab = 0
alpha_bb = 100
interaction = 0, 1, 1, 0, 1, 0
delta = 1e-4
mobility = projector
eps_a = 3
eps_b = 1
eps_s = 2
eps_cutoff = 2.0

[step]
tau = 1e-3
grad_tol = 1e-8
max_inner = 500

[initial]
kind = noise
m = 0.3, 0.3, 0.4
amplitude = 0.05
seed = 12345

[field]
kind = constant
ex = 1
ey = 0

[output]
dir = out
t_end = 0.2
snapshot_every = 50
log_every = 10
stat_tol = 1e-6
max_steps = 100000
holder_pairs = 200
"""
