# stepper.py
"""Один шаг схемы минимизирующих движений и циклы по времени.

Шаг минимизирует E(v, S(v)) + (1/2τ)‖v - c_prev‖²_{*,M(c_prev)}
проекционным градиентным спуском в метрике H с поиском Армихо.
Все линейные решения, кроме Φ, вдоль луча v - s g обновляются
линейно и не пересчитываются на пробных шагах.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from electrostatics import solve_potential
from energy import EnergyReport, assemble_w, deviations, total_energy
from grid import GridSpec, inner, l2_norm, mean
from operators import MetricOperator, PhaseState, inv_neumann_laplacian, project_tangent_field
from physics import ModelParams

log = logging.getLogger(__name__)

STEP_FLOOR = 1e-14
# допуск округления в условии Армихо, в долях (1 + |E|)
ROUNDING_SLACK = 1e-13


class StepError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepConfig:
    tau: float
    grad_tol: float = 1e-8
    max_inner: int = 500
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    tau_min: float = 1e-8
    cg_tol: float = 1e-12
    cg_max_iter: int = 0  # 0 -> 10·nx·ny
    initial_step: float = 1.0
    bb_min: float = 1e-10
    bb_max: float = 1e4

    def violations(self) -> list[tuple[str, str]]:
        out = []
        if not self.tau > 0:
            out.append(("tau", "time step must be positive"))
        if not self.grad_tol > 0:
            out.append(("grad_tol", "must be positive"))
        if not self.max_inner >= 1:
            out.append(("max_inner", "at least one inner iteration is required"))
        if not 0 < self.armijo_c < 1:
            out.append(("armijo_c", "must lie in (0, 1)"))
        if not 0 < self.backtrack < 1:
            out.append(("backtrack", "must lie in (0, 1)"))
        if not 0 < self.tau_min <= max(self.tau, 0.0):
            out.append(("tau_min", "must lie in (0, tau]"))
        if not self.cg_tol > 0:
            out.append(("cg_tol", "must be positive"))
        if self.cg_max_iter < 0:
            out.append(("cg_max_iter", "must be >= 0"))
        return out


@dataclass(frozen=True)
class StepResult:
    state: PhaseState
    phi: np.ndarray
    report: EnergyReport
    inner_iters: int
    accepted_tau: float
    residual: float  # ‖g‖_H / (1 + ‖w‖_H)
    converged: bool = True
    w_norm: float = 0.0
    w_mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stationarity: float = 0.0  # ‖w - mean(w)‖_H


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[PhaseState] = field(default_factory=list)
    results: list[StepResult] = field(default_factory=list)
    initial: StepResult | None = None

    @property
    def final(self) -> StepResult | None:
        return self.results[-1] if self.results else self.initial


@dataclass(frozen=True)
class StationaryResult:
    result: StepResult
    steps: int
    time: float
    converged: bool


class _Stall(Exception):
    pass


# ==========================================================
#                         STEPPER
# ==========================================================


class Stepper:
    """Держит сетку, E₀ и параметры; тёплые старты Φ и шага BB между шагами."""

    def __init__(self, grid: GridSpec, e0: np.ndarray, params: ModelParams, cfg: StepConfig):
        self.grid = grid
        self.e0 = np.asarray(e0, dtype=float)
        self.params = params
        self.cfg = cfg
        self.max_iter = cfg.cg_max_iter or None
        self._phi: np.ndarray | None = None
        self._bb: float | None = None

    # ---------- helpers ----------

    def _phi_for(self, c: np.ndarray, x0: np.ndarray | None) -> np.ndarray:
        return solve_potential(
            self.grid, c[:2], self.e0, self.params.permittivity, self.cfg.cg_tol, self.max_iter, x0
        )

    def _nc(self, c: np.ndarray) -> np.ndarray | None:
        if not np.any(self.params.alpha_matrix):
            return None
        return inv_neumann_laplacian(self.grid, deviations(self.grid, c), self.cfg.cg_tol, self.max_iter)

    def _chem(self, c, phi, nc, params):
        chem = assemble_w(self.grid, c, phi, self.e0, params, self.cfg.cg_tol, nc)
        w_mean = np.asarray(mean(self.grid, chem.w))
        w0 = chem.w - w_mean[:, None, None]
        return chem.w, w0, w_mean

    def evaluate(self, state: PhaseState) -> StepResult:
        """Отчёт для состояния без шага (начальная точка, стационарные проверки)."""
        c = np.asarray(state.c, dtype=float)
        phi = self._phi_for(c, self._phi)
        nc = self._nc(c)
        report = total_energy(self.grid, c, phi, self.e0, self.params, self.cfg.cg_tol, nc)
        w, w0, w_mean = self._chem(c, phi, nc, self.params)
        w_norm = l2_norm(self.grid, w)
        stat = l2_norm(self.grid, w0)
        self._phi = phi
        return StepResult(
            state=state.frozen(),
            phi=_readonly(phi),
            report=report,
            inner_iters=0,
            accepted_tau=0.0,
            residual=stat / (1.0 + w_norm),
            converged=True,
            w_norm=w_norm,
            w_mean=w_mean,
            stationarity=stat,
        )

    # ---------- one step ----------

    def step(self, c_prev: PhaseState) -> StepResult:
        tau = self.cfg.tau
        while True:
            try:
                return self._attempt(c_prev, tau)
            except _Stall:
                new_tau = 0.5 * tau
                if new_tau < self.cfg.tau_min:
                    raise StepError(
                        f"line search stalled and tau would drop below tau_min={self.cfg.tau_min:g}"
                    ) from None
                log.warning("[STEP] line search stalled at tau=%g, retrying with tau=%g", tau, new_tau)
                tau = new_tau
                self._bb = None

    def _attempt(self, c_prev: PhaseState, tau: float) -> StepResult:
        grid, cfg = self.grid, self.cfg
        params = replace(self.params, tau=tau)
        prev = np.asarray(c_prev.c, dtype=float)
        metric = MetricOperator(grid, prev, params.mobility, cfg.cg_tol, self.max_iter)

        v = prev.copy()
        nm_d = np.zeros_like(v)  # N_M(v - c_prev)
        nc = self._nc(v)
        phi = self._phi_for(v, self._phi)
        rep = total_energy(grid, v, phi, self.e0, params, cfg.cg_tol, nc)
        aug = rep.total
        penalty = 0.0

        s = self._bb if self._bb is not None else cfg.initial_step
        g_old = None
        dv_old = None
        converged = False
        iters = 0
        gnorm = math.inf
        w_norm = 0.0

        while True:
            w, w0, w_mean = self._chem(v, phi, nc, params)
            w_norm = l2_norm(grid, w)
            g = project_tangent_field(grid, w0 + nm_d / tau)
            gnorm = l2_norm(grid, g)
            if gnorm <= cfg.grad_tol * (1.0 + w_norm):
                converged = True
                break
            if iters >= cfg.max_inner:
                break

            if g_old is not None and dv_old is not None:
                dg = g - g_old
                curv = inner(grid, dv_old, dg)
                if curv > 0:
                    s = inner(grid, dv_old, dv_old) / curv
            s = min(max(s, cfg.bb_min), cfg.bb_max)

            nm_g = metric.solve(g)
            ng = None if nc is None else inv_neumann_laplacian(grid, deviations(grid, g), cfg.cg_tol, self.max_iter)
            slope = gnorm**2
            slack = ROUNDING_SLACK * (1.0 + abs(aug))
            d = v - prev
            while True:
                v_try = v - s * g
                nm_try = nm_d - s * nm_g
                nc_try = None if nc is None else nc - s * ng
                phi_try = self._phi_for(v_try, phi)
                rep_try = total_energy(grid, v_try, phi_try, self.e0, params, cfg.cg_tol, nc_try)
                pen_try = inner(grid, nm_try, d - s * g) / (2.0 * tau)
                aug_try = rep_try.total + pen_try
                if aug_try <= aug - cfg.armijo_c * s * slope + slack:
                    break
                s *= cfg.backtrack
                if s < STEP_FLOOR:
                    raise _Stall()

            log.debug("[STEP] inner %d: s=%.3e |g|=%.3e aug=%.12e", iters, s, gnorm, aug_try)
            dv_old = v_try - v
            g_old = g
            v, nm_d, nc, phi = v_try, nm_try, nc_try, phi_try
            rep, penalty, aug = rep_try, pen_try, aug_try
            iters += 1

        if not converged:
            log.warning(
                "[STEP] inner iterations exhausted (%d), residual %.3e", iters, gnorm / (1.0 + w_norm)
            )
        self._phi = phi
        self._bb = s
        report = replace(rep, augmented=rep.total + penalty, dissipation=penalty)
        stat = l2_norm(grid, w0)
        return StepResult(
            state=PhaseState(v, np.array(c_prev.target_mean, copy=True)).frozen(),
            phi=_readonly(phi),
            report=report,
            inner_iters=iters,
            accepted_tau=tau,
            residual=gnorm / (1.0 + w_norm),
            converged=converged,
            w_norm=w_norm,
            w_mean=w_mean,
            stationarity=stat,
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


# ==========================================================
#                      FUNCTIONAL API
# ==========================================================

Callback = Callable[[int, float, StepResult], None]


def step(
    grid: GridSpec, c_prev: PhaseState, e0: np.ndarray, params: ModelParams, cfg: StepConfig
) -> StepResult:
    return Stepper(grid, e0, params, cfg).step(c_prev)


def run(
    grid: GridSpec,
    c0: PhaseState,
    e0: np.ndarray,
    params: ModelParams,
    cfg: StepConfig,
    t_end: float,
    callbacks: Iterable[Callback] = (),
    keep_states: bool = True,
    max_steps: int | None = None,
) -> Trajectory:
    """Шаги до t >= t_end. Колбэки получают (индекс, время, результат); индекс 0 это начальное состояние."""
    stepper = Stepper(grid, e0, params, cfg)
    callbacks = list(callbacks)
    traj = Trajectory()
    first = stepper.evaluate(c0)
    traj.initial = first
    traj.times.append(0.0)
    traj.states.append(first.state)
    for cb in callbacks:
        cb(0, 0.0, first)

    t = 0.0
    n = 0
    state = first.state
    eps_t = 1e-12 * max(1.0, abs(t_end))
    while t < t_end - eps_t:
        if max_steps is not None and n >= max_steps:
            log.warning("[RUN] step budget %d exhausted at t=%g", max_steps, t)
            break
        result = stepper.step(state)
        n += 1
        t += result.accepted_tau
        state = result.state
        traj.results.append(result)
        traj.times.append(t)
        if keep_states:
            traj.states.append(state)
        for cb in callbacks:
            cb(n, t, result)
    if not keep_states and traj.results:
        traj.states.append(state)
    return traj


def run_to_stationary(
    grid: GridSpec,
    c0: PhaseState,
    e0: np.ndarray,
    params: ModelParams,
    cfg: StepConfig,
    stat_tol: float,
    max_steps: int = 100_000,
    callbacks: Iterable[Callback] = (),
) -> StationaryResult:
    """Шаги до ‖w - mean(w)‖_H <= stat_tol·(1 + ‖w‖_H) или до исчерпания бюджета."""
    stepper = Stepper(grid, e0, params, cfg)
    callbacks = list(callbacks)
    result = stepper.evaluate(c0)
    for cb in callbacks:
        cb(0, 0.0, result)
    t = 0.0
    n = 0
    while True:
        if result.stationarity <= stat_tol * (1.0 + result.w_norm):
            return StationaryResult(result, n, t, True)
        if n >= max_steps:
            log.warning("[RUN] no stationary state within %d steps (residual %.3e)", n, result.stationarity)
            return StationaryResult(result, n, t, False)
        result = stepper.step(result.state)
        n += 1
        t += result.accepted_tau
        for cb in callbacks:
            cb(n, t, result)
