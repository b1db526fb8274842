# electrostatics.py
"""Отображение решения S(η): div(ε(η)(E₀ - ∇Φ)) = 0, Φ = 0 на границе,
его первая и вторая производные и оценка устойчивости.

η = (c_A, c_B): массив формы (2, ny, nx); E₀ хранится в центрах ячеек
той же формы (E₀ₓ, E₀ᵧ) и интерполируется на грани.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from grid import (
    BC,
    FaceField,
    GridSpec,
    divergence,
    elliptic_matrix,
    face_average,
    gradient,
    h1_seminorm,
    l2_norm,
    solve_unit_laplacian,
)
from operators import DEFAULT_CG_TOL, conjugate_gradient
from physics import PermittivitySpec, epsilon, permittivity_bounds, sup_grad_epsilon

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ElectroState:
    phi: np.ndarray
    e0: np.ndarray  # (2, ny, nx)


@dataclass(frozen=True)
class StabilityReport:
    dist_solutions: float  # дискретная H¹₀-полунорма S(η¹) - S(η²)
    dist_inputs: float  # max-норма η¹ - η²
    constant: float

    @property
    def ratio(self) -> float:
        return self.dist_solutions / self.dist_inputs if self.dist_inputs > 0 else 0.0


def applied_field_faces(grid: GridSpec, e0: np.ndarray) -> FaceField:
    grid.check(e0)
    return FaceField(face_average(grid, e0[0]).x, face_average(grid, e0[1]).y)


def permittivity_faces(grid: GridSpec, eta: np.ndarray, spec: PermittivitySpec) -> FaceField:
    return face_average(grid, np.asarray(epsilon("value", eta[0], eta[1], spec)))


def electric_field(grid: GridSpec, phi: np.ndarray, e0: np.ndarray) -> FaceField:
    """E = E₀ - ∇Φ на гранях (нормальные компоненты)."""
    return applied_field_faces(grid, e0) - gradient(grid, phi, BC.DIRICHLET)


def _solve_dirichlet(
    grid: GridSpec,
    k: FaceField,
    source_flux: FaceField,
    tol: float,
    max_iter: int | None,
    x0: np.ndarray | None,
    label: str,
) -> np.ndarray:
    """Решает -div(k ∇u) = -div(source_flux), u = 0 на границе.

    Матрица собирается в scipy.sparse, предобуславливатель это точный
    обратный единичного лапласиана Дирихле (DST); число итераций
    ограничено отношением max k / min k.
    """
    rhs = -divergence(grid, source_flux)
    a = elliptic_matrix(grid, k, BC.DIRICHLET)
    res = conjugate_gradient(
        grid,
        lambda u: (a @ u.ravel()).reshape(u.shape),
        rhs,
        precond=lambda r: solve_unit_laplacian(grid, r, BC.DIRICHLET),
        tol=tol,
        max_iter=max_iter,
        x0=x0,
        label=label,
    )
    return res.x


def solve_potential(
    grid: GridSpec,
    eta: np.ndarray,
    e0: np.ndarray,
    spec: PermittivitySpec,
    tol: float = DEFAULT_CG_TOL,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Φ = S(η): точный дискретный минимизатор ½ Σ ε_f |E₀ - ∇Φ|² по граням."""
    eps_f = permittivity_faces(grid, eta, spec)
    return _solve_dirichlet(grid, eps_f, eps_f * applied_field_faces(grid, e0), tol, max_iter, x0, "potential")


def _eps_direction(grid: GridSpec, eta: np.ndarray, h: np.ndarray, spec: PermittivitySpec) -> FaceField:
    g = epsilon("grad", eta[0], eta[1], spec)
    return face_average(grid, g[0] * h[0] + g[1] * h[1])


def ds_map(
    grid: GridSpec,
    eta: np.ndarray,
    e0: np.ndarray,
    h: np.ndarray,
    spec: PermittivitySpec,
    tol: float = DEFAULT_CG_TOL,
    phi: np.ndarray | None = None,
) -> np.ndarray:
    """u* = DS(η)[h]: -div(ε ∇u*) = -div((ε'·h)(E₀ - ∇Φ))."""
    if phi is None:
        phi = solve_potential(grid, eta, e0, spec, tol)
    eps_f = permittivity_faces(grid, eta, spec)
    deps = _eps_direction(grid, eta, h, spec)
    return _solve_dirichlet(grid, eps_f, deps * electric_field(grid, phi, e0), tol, None, None, "ds")


def d2s_map(
    grid: GridSpec,
    eta: np.ndarray,
    e0: np.ndarray,
    h: np.ndarray,
    k: np.ndarray,
    spec: PermittivitySpec,
    tol: float = DEFAULT_CG_TOL,
    phi: np.ndarray | None = None,
    ds_h: np.ndarray | None = None,
    ds_k: np.ndarray | None = None,
) -> np.ndarray:
    """u♯ = D²S(η)[k, h]:
    -div(ε ∇u♯) = -div((ε''k·h)(E₀ - ∇Φ) - (ε'·h)∇DS[k] - (ε'·k)∇DS[h]).
    """
    if phi is None:
        phi = solve_potential(grid, eta, e0, spec, tol)
    if ds_h is None:
        ds_h = ds_map(grid, eta, e0, h, spec, tol, phi)
    if ds_k is None:
        ds_k = ds_map(grid, eta, e0, k, spec, tol, phi)
    eps_f = permittivity_faces(grid, eta, spec)
    hess = epsilon("hess", eta[0], eta[1], spec)
    d2 = np.einsum("i...,ij...,j...->...", k, hess, h)
    d2_f = face_average(grid, d2)
    flux = (
        d2_f * electric_field(grid, phi, e0)
        - _eps_direction(grid, eta, h, spec) * gradient(grid, ds_k, BC.DIRICHLET)
        - _eps_direction(grid, eta, k, spec) * gradient(grid, ds_h, BC.DIRICHLET)
    )
    return _solve_dirichlet(grid, eps_f, flux, tol, None, None, "d2s")


def stability_constant(grid: GridSpec, e0: np.ndarray, spec: PermittivitySpec) -> float:
    """C = 2 ε* ε_*⁻² (1 + ε*/ε_*) ‖E₀‖²_H sup|∇ε|."""
    lo, hi = permittivity_bounds(spec)
    e0_norm = l2_norm(grid, e0)
    return 2.0 * hi / lo**2 * (1.0 + hi / lo) * e0_norm**2 * sup_grad_epsilon(spec)


def stability_check(
    grid: GridSpec,
    eta1: np.ndarray,
    eta2: np.ndarray,
    e0: np.ndarray,
    spec: PermittivitySpec,
    tol: float = DEFAULT_CG_TOL,
) -> StabilityReport:
    phi1 = solve_potential(grid, eta1, e0, spec, tol)
    phi2 = solve_potential(grid, eta2, e0, spec, tol)
    return StabilityReport(
        dist_solutions=h1_seminorm(grid, phi1 - phi2, BC.DIRICHLET),
        dist_inputs=float(np.max(np.abs(np.asarray(eta1) - np.asarray(eta2)))),
        constant=stability_constant(grid, e0, spec),
    )


def potential_bound(grid: GridSpec, e0: np.ndarray, spec: PermittivitySpec) -> float:
    """‖Φ‖_V₀ <= (ε*/ε_*) ‖E₀‖_H."""
    lo, hi = permittivity_bounds(spec)
    return hi / lo * l2_norm(grid, e0)


def taylor_ratios(errors: list[float]) -> list[float]:
    """Отношения соседних ошибок при делении шага пополам (≈ 4 для O(t²))."""
    out = []
    for a, b in zip(errors, errors[1:]):
        out.append(a / b if b > 0 else math.inf)
    return out
