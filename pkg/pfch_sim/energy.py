# energy.py
"""Функционалы энергии и химические потенциалы.

E = e1 + e2 + e3 + e4:
  e1 — градиентная часть, Σ θ_i Ψ_δ(c_i) и δ Σ c_i⁴;
  e2 — ∫ I(c);
  e3 — нелокальный член через N;
  e4 — ½ ∫ ε |E₀ - ∇Φ|² по граням.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from electrostatics import electric_field, permittivity_faces, solve_potential
from grid import BC, FaceField, GridSpec, face_average_adjoint, face_dot, gradient, inner, laplace_neumann, mean
from operators import DEFAULT_CG_TOL, MetricOperator, inv_neumann_laplacian, project_tangent
from physics import ModelParams, epsilon, interaction, psi_delta


@dataclass(frozen=True)
class EnergyReport:
    e1: float
    e2: float
    e3: float
    e4: float
    total: float
    augmented: float
    dissipation: float


@dataclass(frozen=True)
class ChemPotential:
    w: np.ndarray  # P(-ΓΔc + μ̃), поточечно касательное
    mu_tilde: np.ndarray


def deviations(grid: GridSpec, c: np.ndarray) -> np.ndarray:
    """c_A - c̄_A, c_B - c̄_B."""
    ab = np.asarray(c[:2], dtype=float)
    return ab - np.asarray(mean(grid, ab))[:, None, None]


def nonlocal_potential(grid: GridSpec, c: np.ndarray, tol: float = DEFAULT_CG_TOL) -> np.ndarray:
    """N(c_A - c̄_A), N(c_B - c̄_B) одним блочным решением."""
    return inv_neumann_laplacian(grid, deviations(grid, c), tol)


# ==========================================================
#                        ENERGIES
# ==========================================================


def gradient_energy(grid: GridSpec, c: np.ndarray, gamma) -> float:
    g = gradient(grid, c, BC.NEUMANN)
    return sum(0.5 * gamma[i] * face_dot(grid, FaceField(g.x[i], g.y[i]), FaceField(g.x[i], g.y[i])) for i in range(3))


def energy_e1(grid: GridSpec, c: np.ndarray, params: ModelParams) -> float:
    local = sum(params.theta[i] * np.asarray(psi_delta(0, c[i], params.delta)) for i in range(3))
    local = local + params.delta * np.sum(c**4, axis=0)
    return gradient_energy(grid, c, params.gamma) + float(np.sum(local) * grid.cell_volume)


def energy_e2(grid: GridSpec, c: np.ndarray, params: ModelParams) -> float:
    return float(np.sum(interaction("value", c, params.chi_matrix)) * grid.cell_volume)


def energy_e3(
    grid: GridSpec,
    c: np.ndarray,
    params: ModelParams,
    tol: float = DEFAULT_CG_TOL,
    nc: np.ndarray | None = None,
) -> float:
    """Σ α_ij/2 (N(c_i - c̄_i), c_j - c̄_j), i, j ∈ {A, B}."""
    alpha = params.alpha_matrix
    if not np.any(alpha):
        return 0.0
    dev = deviations(grid, c)
    if nc is None:
        nc = nonlocal_potential(grid, c, tol)
    total = 0.0
    for i in range(2):
        for j in range(2):
            if alpha[i, j] != 0.0:
                total += 0.5 * alpha[i, j] * inner(grid, nc[i], dev[j])
    return total


def energy_e4(grid: GridSpec, c: np.ndarray, phi: np.ndarray, e0: np.ndarray, params: ModelParams) -> float:
    eps_f = permittivity_faces(grid, c[:2], params.permittivity)
    e = electric_field(grid, phi, e0)
    return 0.5 * face_dot(grid, eps_f * e, e)


def total_energy(
    grid: GridSpec,
    c: np.ndarray,
    phi: np.ndarray,
    e0: np.ndarray,
    params: ModelParams,
    tol: float = DEFAULT_CG_TOL,
    nc: np.ndarray | None = None,
    dissipation: float = 0.0,
) -> EnergyReport:
    e1 = energy_e1(grid, c, params)
    e2 = energy_e2(grid, c, params)
    e3 = energy_e3(grid, c, params, tol, nc)
    e4 = energy_e4(grid, c, phi, e0, params)
    total = e1 + e2 + e3 + e4
    return EnergyReport(e1, e2, e3, e4, total, total + dissipation, dissipation)


def reduced_energy(
    grid: GridSpec, c: np.ndarray, e0: np.ndarray, params: ModelParams, tol: float = DEFAULT_CG_TOL
) -> float:
    """E(c, S(c)): энергия с заново решённым потенциалом."""
    phi = solve_potential(grid, c[:2], e0, params.permittivity, tol)
    return total_energy(grid, c, phi, e0, params, tol).total


def metric_penalty(metric: MetricOperator, d: np.ndarray, tau: float, nm_d: np.ndarray | None = None) -> float:
    """(1/2τ) ‖d‖²_{*,M} = (N_M d, d)/(2τ)."""
    if nm_d is None:
        nm_d = metric.solve(d)
    return inner(metric.grid, nm_d, d) / (2.0 * tau)


def augmented_energy(
    grid: GridSpec,
    v: np.ndarray,
    c_prev: np.ndarray,
    phi: np.ndarray,
    e0: np.ndarray,
    params: ModelParams,
    tol: float = DEFAULT_CG_TOL,
    metric: MetricOperator | None = None,
) -> EnergyReport:
    """E(v, Φ) + (1/2τ)‖v - c_prev‖²_{*,M(c_prev)}."""
    d = np.asarray(v) - np.asarray(c_prev)
    gap = np.asarray(mean(grid, d))
    scale = max(1.0, float(np.max(np.abs(v))))
    if np.max(np.abs(gap)) > 1e-10 * scale:
        raise ValueError(f"v and c_prev carry different means (max gap {float(np.max(np.abs(gap))):.3e})")
    if metric is None:
        metric = MetricOperator(grid, c_prev, params.mobility, tol)
    penalty = metric_penalty(metric, d - gap[:, None, None], params.tau)
    return total_energy(grid, v, phi, e0, params, tol, dissipation=penalty)


# ==========================================================
#                  CHEMICAL POTENTIALS
# ==========================================================


def electric_density(grid: GridSpec, phi: np.ndarray, e0: np.ndarray) -> np.ndarray:
    """|E|² с граней в ячейки, сопряжённо к усреднению ε на грани."""
    e = electric_field(grid, phi, e0)
    return face_average_adjoint(grid, e * e)


def assemble_mu_tilde(
    grid: GridSpec,
    c: np.ndarray,
    phi: np.ndarray,
    e0: np.ndarray,
    params: ModelParams,
    tol: float = DEFAULT_CG_TOL,
    nc: np.ndarray | None = None,
) -> np.ndarray:
    mu = interaction("grad", c, params.chi_matrix) + 4.0 * params.delta * c**3
    for i in range(3):
        mu[i] = mu[i] + params.theta[i] * np.asarray(psi_delta(1, c[i], params.delta))

    alpha = params.alpha_matrix
    if np.any(alpha):
        if nc is None:
            nc = nonlocal_potential(grid, c, tol)
        mu[:2] = mu[:2] + np.einsum("ij,j...->i...", alpha, nc)

    deps = epsilon("grad", c[0], c[1], params.permittivity)
    if np.any(deps):
        q = electric_density(grid, phi, e0)
        mu[:2] = mu[:2] + 0.5 * deps * q
    return mu


def assemble_w(
    grid: GridSpec,
    c: np.ndarray,
    phi: np.ndarray,
    e0: np.ndarray,
    params: ModelParams,
    tol: float = DEFAULT_CG_TOL,
    nc: np.ndarray | None = None,
) -> ChemPotential:
    mu = assemble_mu_tilde(grid, c, phi, e0, params, tol, nc)
    gamma = np.asarray(params.gamma)[:, None, None]
    w = project_tangent(-gamma * laplace_neumann(grid, c) + mu)
    return ChemPotential(w, mu)


def psi_prime_norms(grid: GridSpec, c: np.ndarray, delta: float, q: float = 4.0) -> np.ndarray:
    """‖Ψ_δ'(c_i)‖ в норме L^{q/2} по каждой компоненте."""
    p = q / 2.0
    return np.array(
        [(float(np.sum(np.abs(np.asarray(psi_delta(1, c[i], delta))) ** p)) * grid.cell_volume) ** (1.0 / p)
         for i in range(3)]
    )


def energy_gradient_error(
    grid: GridSpec,
    c: np.ndarray,
    h: np.ndarray,
    e0: np.ndarray,
    params: ModelParams,
    t: float,
    tol: float = 1e-12,
) -> tuple[float, float]:
    """(центральная разность E вдоль h, inner(w, h)) с пересчётом Φ в каждой точке."""
    fd = (reduced_energy(grid, c + t * h, e0, params, tol) - reduced_energy(grid, c - t * h, e0, params, tol)) / (2 * t)
    phi = solve_potential(grid, c[:2], e0, params.permittivity, tol)
    w = assemble_w(grid, c, phi, e0, params, tol).w
    return fd, inner(grid, w, h)


def relative_gap(a: float, b: float) -> float:
    return abs(a - b) / (1.0 + abs(b)) if math.isfinite(a) and math.isfinite(b) else math.inf
