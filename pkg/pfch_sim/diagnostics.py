# diagnostics.py
"""Проверки на траекториях: сохранение массы, энергетическое неравенство,
симплекс, невязки, гёльдеровы частные, непрерывная зависимость и набор
тестов производных электростатики. Всё это чистые функции записанных рядов.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from electrostatics import d2s_map, ds_map, solve_potential, stability_check, taylor_ratios
from energy import assemble_w, psi_prime_norms
from grid import BC, GridSpec, h1_seminorm, l2_norm, mean
from operators import DEFAULT_CG_TOL, PhaseState, dual_norm_plain, remove_means
from physics import ModelParams, PermittivitySpec
from stepper import StepConfig, StepResult, Stepper

log = logging.getLogger(__name__)

ENERGY_SLACK = 1e-10
MASS_TOL = 1e-10
SUM_TOL = 1e-10
SIMPLEX_FLOOR = -0.05
TAYLOR_STEPS = (1e-2, 5e-3, 2.5e-3)
TAYLOR_WINDOW = (3.6, 4.4)


# ==========================================================
#                        SERIES
# ==========================================================


@dataclass(frozen=True)
class SeriesRecord:
    step: int
    time: float
    tau: float
    mass_a: float
    mass_b: float
    mass_s: float
    e1: float
    e2: float
    e3: float
    e4: float
    total: float
    augmented: float
    dissipation: float
    min_a: float
    max_a: float
    min_b: float
    max_b: float
    min_s: float
    max_s: float
    sum_violation: float
    w_norm: float
    w_mean_a: float
    w_mean_b: float
    w_mean_s: float
    psi_prime_a: float
    psi_prime_b: float
    psi_prime_s: float
    stationarity: float
    residual: float
    inner_iters: int
    converged: int


INT_COLUMNS = {"step", "inner_iters", "converged"}


def column_names() -> list[str]:
    return [f.name for f in fields(SeriesRecord)]


def record_from_result(
    grid: GridSpec, index: int, time: float, result: StepResult, params: ModelParams
) -> SeriesRecord:
    c = np.asarray(result.state.c)
    masses = np.asarray(mean(grid, c))
    pp = psi_prime_norms(grid, c, params.delta)
    rep = result.report
    return SeriesRecord(
        step=index,
        time=time,
        tau=result.accepted_tau,
        mass_a=float(masses[0]),
        mass_b=float(masses[1]),
        mass_s=float(masses[2]),
        e1=rep.e1,
        e2=rep.e2,
        e3=rep.e3,
        e4=rep.e4,
        total=rep.total,
        augmented=rep.augmented,
        dissipation=rep.dissipation,
        min_a=float(c[0].min()),
        max_a=float(c[0].max()),
        min_b=float(c[1].min()),
        max_b=float(c[1].max()),
        min_s=float(c[2].min()),
        max_s=float(c[2].max()),
        sum_violation=result.state.sum_violation(),
        w_norm=result.w_norm,
        w_mean_a=float(result.w_mean[0]),
        w_mean_b=float(result.w_mean[1]),
        w_mean_s=float(result.w_mean[2]),
        psi_prime_a=float(pp[0]),
        psi_prime_b=float(pp[1]),
        psi_prime_s=float(pp[2]),
        stationarity=result.stationarity,
        residual=result.residual,
        inner_iters=result.inner_iters,
        converged=int(result.converged),
    )


class DiagnosticsSeries:
    """Построчный ряд записей; индекс 0 это начальное состояние."""

    def __init__(self, records: Iterable[SeriesRecord] = ()):
        self.records: list[SeriesRecord] = list(records)

    def append(self, record: SeriesRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> SeriesRecord:
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def rows(self) -> list[dict]:
        return [asdict(r) for r in self.records]

    def collector(self, grid: GridSpec, params: ModelParams):
        def _cb(index: int, time: float, result: StepResult) -> None:
            self.append(record_from_result(grid, index, time, result, params))

        return _cb


# ==========================================================
#                        CHECKS
# ==========================================================


@dataclass(frozen=True)
class CheckReport:
    name: str
    worst: float
    threshold: float
    passed: bool
    index: int = -1  # где достигнут худший случай

    def line(self) -> str:
        return f"{self.name},{self.worst!r},{self.threshold!r},{'pass' if self.passed else 'fail'}"


def _worst(name: str, values: np.ndarray, threshold: float) -> CheckReport:
    if values.size == 0:
        return CheckReport(name, 0.0, threshold, True)
    idx = int(np.argmax(values))
    worst = float(values[idx])
    return CheckReport(name, worst, threshold, bool(worst <= threshold), idx)


def check_energy_inequality(series: DiagnosticsSeries, slack: float = ENERGY_SLACK) -> CheckReport:
    """E(t_n) + Σ_{k<=n} D_k <= E(0) с допуском slack·(1 + |E(0)|)."""
    total = series.column("total")
    if total.size == 0:
        return CheckReport("energy_inequality", 0.0, 0.0, True)
    diss = np.cumsum(series.column("dissipation"))
    excess = total + diss - total[0]
    threshold = slack * (1.0 + abs(total[0]))
    return _worst("energy_inequality", excess, threshold)


def check_energy_steps(series: DiagnosticsSeries, slack: float = ENERGY_SLACK) -> CheckReport:
    """Пошаговое неравенство: E_n + D_n <= E_{n-1}."""
    total = series.column("total")
    if total.size < 2:
        return CheckReport("energy_step", 0.0, slack, True)
    diss = series.column("dissipation")
    excess = (total[1:] + diss[1:] - total[:-1]) / (1.0 + np.abs(total[:-1]))
    rep = _worst("energy_step", excess, slack)
    return CheckReport(rep.name, rep.worst, rep.threshold, rep.passed, rep.index + 1 if rep.index >= 0 else -1)


def check_mass(series: DiagnosticsSeries, target: Sequence[float] | None = None, tol: float = MASS_TOL) -> CheckReport:
    masses = np.stack([series.column("mass_a"), series.column("mass_b"), series.column("mass_s")], axis=1)
    if masses.size == 0:
        return CheckReport("mass", 0.0, tol, True)
    ref = np.asarray(target, dtype=float) if target is not None else masses[0]
    return _worst("mass", np.max(np.abs(masses - ref), axis=1), tol)


def check_sum(series: DiagnosticsSeries, tol: float = SUM_TOL) -> CheckReport:
    return _worst("sum_constraint", series.column("sum_violation"), tol)


def check_simplex_floor(series: DiagnosticsSeries, floor: float = SIMPLEX_FLOOR) -> CheckReport:
    mins = np.min(np.stack([series.column("min_a"), series.column("min_b"), series.column("min_s")], axis=1), axis=1)
    # худший = наибольшее превышение вниз
    return _worst("simplex_floor", -mins, -floor)


def check_residuals(series: DiagnosticsSeries, grad_tol: float) -> CheckReport:
    res = series.column("residual")[1:]
    return _worst("euler_lagrange", res, grad_tol)


def default_checks(series: DiagnosticsSeries, target: Sequence[float] | None, grad_tol: float) -> list[CheckReport]:
    return [
        check_energy_inequality(series),
        check_energy_steps(series),
        check_mass(series, target),
        check_sum(series),
        check_simplex_floor(series),
        check_residuals(series, grad_tol),
    ]


# ==========================================================
#                  HÖLDER QUOTIENT, STATIONARITY
# ==========================================================


def holder_quotient(
    grid: GridSpec,
    times: Sequence[float],
    states: Sequence[PhaseState | np.ndarray],
    pairs: int = 200,
    seed: int = 0,
) -> float:
    """max ‖c̃(t1) - c̃(t2)‖_H / |t1 - t2|^¼ для кусочно-линейного интерполянта c̃.

    Точки выборки: узлы и середины интервалов (в середине c̃ равен полусумме
    соседних состояний). Внутри одного интервала частное растёт с |t1 - t2|,
    поэтому более мелкое деление интервалов максимум не увеличивает.
    """
    if len(states) < 2:
        return 0.0
    nodes = [np.asarray(s.c if isinstance(s, PhaseState) else s, dtype=float) for s in states]
    pts_t = [float(times[0])]
    pts_c = [nodes[0]]
    for k in range(1, len(nodes)):
        pts_t.append(0.5 * (float(times[k - 1]) + float(times[k])))
        pts_c.append(0.5 * (nodes[k - 1] + nodes[k]))
        pts_t.append(float(times[k]))
        pts_c.append(nodes[k])

    n = len(pts_c)
    all_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if len(all_pairs) > pairs:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(all_pairs), size=pairs, replace=False)
        all_pairs = [all_pairs[k] for k in sorted(chosen)]
    best = 0.0
    for i, j in all_pairs:
        dt = abs(pts_t[j] - pts_t[i])
        if dt <= 0:
            continue
        best = max(best, l2_norm(grid, pts_c[j] - pts_c[i]) / dt**0.25)
    return best


def stationarity_residual(
    grid: GridSpec,
    c: np.ndarray,
    e0: np.ndarray,
    params: ModelParams,
    tol: float = DEFAULT_CG_TOL,
    phi: np.ndarray | None = None,
) -> float:
    """‖w - mean(w)‖_H."""
    if phi is None:
        phi = solve_potential(grid, c[:2], e0, params.permittivity, tol)
    w = assemble_w(grid, c, phi, e0, params, tol).w
    return l2_norm(grid, remove_means(grid, w))


# ==========================================================
#                  CONTINUOUS DEPENDENCE
# ==========================================================


@dataclass(frozen=True)
class DependenceReport:
    lhs: float
    rhs: float
    sup_dual: float  # sup_t ‖Δc‖_V*
    l2_v: float  # ‖Δc‖_L²(0,T;V)
    l2_phi: float  # ‖ΔΦ‖_L²(0,T;V₀)
    lhs_curve: tuple[float, ...]


def dual_norm_with_mean(grid: GridSpec, f: np.ndarray) -> float:
    """‖f‖_V* = ‖∇N(f - f̄)‖_H + |Ω|^½ |f̄|, по компонентам в квадратуре."""
    f = np.asarray(f, dtype=float)
    fbar = np.asarray(mean(grid, f))
    centered = remove_means(grid, f)
    return dual_norm_plain(grid, centered) + math.sqrt(grid.area) * float(np.sqrt(np.sum(fbar**2)))


def continuous_dependence(
    grid: GridSpec,
    c0_a: PhaseState,
    c0_b: PhaseState,
    e0: np.ndarray,
    params: ModelParams,
    cfg: StepConfig,
    n_steps: int,
) -> DependenceReport:
    """Две траектории с общими данными; левая и правая части оценки устойчивости."""
    if not params.mobility.is_constant:
        raise ValueError("continuous dependence is checked for state-independent mobility only")
    if np.shape(c0_a.c) != np.shape(c0_b.c):
        raise ValueError("initial states live on different grids")
    run_a = Stepper(grid, e0, params, cfg)
    run_b = Stepper(grid, e0, params, cfg)
    ra = run_a.evaluate(c0_a)
    rb = run_b.evaluate(c0_b)

    curve = []
    sup_dual = dual_norm_with_mean(grid, ra.state.c - rb.state.c)
    curve.append(sup_dual)
    v_sq = 0.0
    phi_sq = 0.0
    for _ in range(n_steps):
        ra = run_a.step(ra.state)
        rb = run_b.step(rb.state)
        if ra.accepted_tau != rb.accepted_tau:
            raise ValueError("the two runs used different time steps; fix tau (no stalls) for this check")
        diff = np.asarray(ra.state.c) - np.asarray(rb.state.c)
        d = dual_norm_with_mean(grid, diff)
        sup_dual = max(sup_dual, d)
        curve.append(d)
        h1 = h1_seminorm(grid, diff, BC.NEUMANN)
        v_sq += ra.accepted_tau * (h1**2 + l2_norm(grid, diff) ** 2)
        phi_sq += ra.accepted_tau * h1_seminorm(grid, np.asarray(ra.phi) - np.asarray(rb.phi), BC.DIRICHLET) ** 2

    d0 = np.asarray(c0_a.c) - np.asarray(c0_b.c)
    mean_gap = float(np.sqrt(np.sum(np.asarray(mean(grid, d0)) ** 2)))
    rhs = dual_norm_with_mean(grid, d0) + math.sqrt(mean_gap)
    lhs = sup_dual + math.sqrt(v_sq) + math.sqrt(phi_sq)
    return DependenceReport(lhs, rhs, sup_dual, math.sqrt(v_sq), math.sqrt(phi_sq), tuple(curve))


# ==========================================================
#               ELECTROSTATIC DERIVATIVE SUITE
# ==========================================================


def smooth_field(grid: GridSpec, rng: np.random.Generator, modes: int = 3, scale: float = 1.0) -> np.ndarray:
    """Гладкое поле из нескольких косинусных мод со случайными амплитудами."""
    x, y = grid.cell_centers()
    out = np.zeros(grid.shape)
    for kx in range(modes):
        for ky in range(modes):
            a = rng.uniform(-1.0, 1.0) / (1.0 + kx + ky) ** 2
            out += a * np.cos(math.pi * kx * x / grid.lx) * np.cos(math.pi * ky * y / grid.ly)
    return scale * out


def random_eta(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    """η внутри симплекса (в области, где ε аффинна) плюс гладкая вариация."""
    base = np.array([0.3, 0.3])[:, None, None]
    return base + np.stack([smooth_field(grid, rng, scale=0.1), smooth_field(grid, rng, scale=0.1)])


def random_direction(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    return np.stack([smooth_field(grid, rng), smooth_field(grid, rng)])


def derivative_suite(
    grid: GridSpec,
    spec: PermittivitySpec,
    e0: np.ndarray,
    triples: int = 10,
    seed: int = 0,
    tol: float = 1e-12,
    base_scale: float = 1.0,
) -> list[CheckReport]:
    """Тейлоровские отношения DS и D²S, симметрия D²S, липшицевость S и DS.

    base_scale > 1 выводит η в полосы срезки, где ε'' ≠ 0.
    """
    rng = np.random.default_rng(seed)
    ds_ratios: list[float] = []
    d2s_ratios: list[float] = []
    sym_gaps: list[float] = []
    lip_ratios: list[float] = []
    lip_const = 0.0
    ds_lip: list[float] = []

    for _ in range(triples):
        eta = random_eta(grid, rng)
        if base_scale != 1.0:
            eta = 0.5 + base_scale * (eta - 0.5)
        h = random_direction(grid, rng)
        k = random_direction(grid, rng)
        phi = solve_potential(grid, eta, e0, spec, tol)
        u_h = ds_map(grid, eta, e0, h, spec, tol, phi)
        u_k = ds_map(grid, eta, e0, k, spec, tol, phi)
        u_kh = d2s_map(grid, eta, e0, h, k, spec, tol, phi, ds_h=u_h, ds_k=u_k)
        u_hk = d2s_map(grid, eta, e0, k, h, spec, tol, phi, ds_h=u_k, ds_k=u_h)

        errs1 = []
        errs2 = []
        for t in TAYLOR_STEPS:
            phi_t = solve_potential(grid, eta + t * h, e0, spec, tol, x0=phi)
            errs1.append(h1_seminorm(grid, phi_t - phi - t * u_h, BC.DIRICHLET))
            u_h_t = ds_map(grid, eta + t * k, e0, h, spec, tol)
            errs2.append(h1_seminorm(grid, u_h_t - u_h - t * u_kh, BC.DIRICHLET))
        ds_ratios.extend(taylor_ratios(errs1))
        d2s_ratios.extend(taylor_ratios(errs2))

        norm_sharp = h1_seminorm(grid, u_kh, BC.DIRICHLET)
        sym_gaps.append(h1_seminorm(grid, u_kh - u_hk, BC.DIRICHLET) / (norm_sharp + 1.0))

        eta2 = eta + 0.05 * random_direction(grid, rng)
        rep = stability_check(grid, eta, eta2, e0, spec, tol)
        lip_ratios.append(rep.ratio)
        lip_const = rep.constant
        u_h2 = ds_map(grid, eta2, e0, h, spec, tol)
        denom = rep.dist_inputs * float(np.max(np.abs(h)))
        if denom > 0:
            ds_lip.append(h1_seminorm(grid, u_h2 - u_h, BC.DIRICHLET) / denom)

    lo, hi = TAYLOR_WINDOW

    def window(name: str, ratios: list[float]) -> CheckReport:
        arr = np.asarray(ratios)
        # расстояние от середины окна; внутри окна <= половины ширины
        dev = np.abs(arr - 0.5 * (lo + hi))
        idx = int(np.argmax(dev)) if arr.size else -1
        worst = float(arr[idx]) if arr.size else 4.0
        return CheckReport(name, worst, hi, bool(np.all((arr >= lo) & (arr <= hi))), idx)

    reports = [
        window("ds_taylor_ratio", ds_ratios),
        window("d2s_taylor_ratio", d2s_ratios),
        _worst("d2s_symmetry", np.asarray(sym_gaps), 1e-8),
        _worst("lipschitz_ratio", np.asarray(lip_ratios), 1.1 * lip_const),
    ]
    if ds_lip:
        # ограниченность: без константы, только конечность
        worst = float(max(ds_lip))
        reports.append(CheckReport("ds_lipschitz", worst, math.inf, math.isfinite(worst)))
    log.debug("[CHECK] derivative suite: %d DS ratios, %d D²S ratios", len(ds_ratios), len(d2s_ratios))
    return reports
