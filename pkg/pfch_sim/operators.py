# operators.py
"""Проектор P, обратный лапласиан Неймана N, взвешенный обратный N_φ
и двойственные нормы. Все обращения делает `scipy.sparse.linalg.cg`
с проекцией на каждой итерации и спектральным предобуславливателем.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from grid import (
    BC,
    FaceField,
    GridSpec,
    divergence,
    face_average,
    face_dot,
    face_weights,
    gradient,
    inner,
    lp_norm,
    mean,
    solve_unit_laplacian,
)
from physics import TANGENT_BASIS, TANGENT_PROJECTOR, MobilitySpec, mobility, mobility_constants

log = logging.getLogger(__name__)

DEFAULT_CG_TOL = 1e-10
MEAN_TOL = 1e-10


class SolverError(RuntimeError):
    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # относительная невязка ‖b - A x‖ / ‖b‖


# ==========================================================
#                         STATES
# ==========================================================


@dataclass(frozen=True)
class PhaseState:
    c: np.ndarray  # (3, ny, nx): c_A, c_B, c_S
    target_mean: np.ndarray  # (3,)

    def masses(self, grid: GridSpec) -> np.ndarray:
        return np.asarray(mean(grid, self.c))

    def sum_violation(self) -> float:
        return float(np.max(np.abs(np.sum(self.c, axis=0) - 1.0)))

    def frozen(self) -> "PhaseState":
        c = np.array(self.c, copy=True)
        c.setflags(write=False)
        return PhaseState(c, np.array(self.target_mean, copy=True))


def project_tangent(v: np.ndarray) -> np.ndarray:
    """(Pv)_i = v_i - (v_1 + v_2 + v_3)/3, поточечно по оси 0."""
    v = np.asarray(v, dtype=float)
    return v - np.sum(v, axis=0) / 3.0


def remove_means(grid: GridSpec, v: np.ndarray) -> np.ndarray:
    m = np.asarray(mean(grid, v))
    return v - m[..., None, None]


def project_tangent_field(grid: GridSpec, v: np.ndarray) -> np.ndarray:
    return remove_means(grid, project_tangent(v))


def is_tangent_field(grid: GridSpec, v: np.ndarray, sum_tol: float = 1e-10, mean_tol: float = 1e-12) -> bool:
    scale = max(1.0, float(np.max(np.abs(v))))
    return bool(
        np.max(np.abs(np.sum(v, axis=0))) <= sum_tol * scale
        and np.max(np.abs(mean(grid, v))) <= mean_tol * scale
    )


# ==========================================================
#                   CONJUGATE GRADIENTS
# ==========================================================


def conjugate_gradient(
    grid: GridSpec,
    apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    *,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = DEFAULT_CG_TOL,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
    label: str = "cg",
) -> CGResult:
    """scipy `cg` для симметричного положительного оператора на подпространстве project.

    Проекция стоит внутри matvec и предобуславливателя, поэтому все итерации
    остаются в подпространстве. info != 0 превращается в SolverError.
    """
    proj = project if project is not None else (lambda z: z)
    if max_iter is None or max_iter <= 0:
        max_iter = 10 * grid.nx * grid.ny
    b = proj(np.asarray(b, dtype=float))
    shape = b.shape
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0)

    n = b.size
    op = LinearOperator((n, n), matvec=lambda z: proj(apply(proj(z.reshape(shape)))).ravel(), dtype=float)
    m = None
    if precond is not None:
        m = LinearOperator((n, n), matvec=lambda z: proj(precond(proj(z.reshape(shape)))).ravel(), dtype=float)
    start = None if x0 is None else proj(np.asarray(x0, dtype=float)).ravel()

    iters = 0

    def _count(_xk: np.ndarray) -> None:
        nonlocal iters
        iters += 1

    x, info = cg(op, b.ravel(), x0=start, rtol=tol, atol=0.0, maxiter=max_iter, M=m, callback=_count)
    x = proj(x.reshape(shape))
    rel = float(np.linalg.norm(proj(b - apply(x)))) / bnorm
    if info < 0:
        raise SolverError(f"[CG] {label}: breakdown (info = {info}), operator is not positive definite", iters, rel)
    # scipy проверяет невязку в начале итерации: сходимость на последней
    # разрешённой итерации приходит как info == maxiter
    if info > 0 and rel > tol:
        raise SolverError(
            f"[CG] {label}: no convergence after {iters} iterations (rel. residual {rel:.3e} > {tol:.1e})",
            iters,
            rel,
        )
    log.debug("[CG] %s converged in %d iterations (rel. residual %.2e)", label, iters, rel)
    return CGResult(x, iters, rel)


# ==========================================================
#                 INVERSE NEUMANN LAPLACIAN
# ==========================================================


def _neg_laplacian(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    g = gradient(grid, u, BC.NEUMANN)
    return -divergence(grid, g)


def inv_neumann_laplacian(
    grid: GridSpec,
    f: np.ndarray,
    tol: float = DEFAULT_CG_TOL,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """u = N f: -Δu = f, среднее u равно нулю. Стек решается покомпонентно."""
    f = np.asarray(f, dtype=float)
    grid.check(f)
    rms = np.sqrt(np.mean(f**2, axis=(-2, -1)))
    m = np.abs(np.asarray(mean(grid, f)))
    if np.any(m > MEAN_TOL * rms):
        raise SolverError(f"N is defined on mean-zero data only (|mean| = {float(np.max(m)):.3e})")
    res = conjugate_gradient(
        grid,
        lambda u: _neg_laplacian(grid, u),
        f,
        project=lambda u: remove_means(grid, u),
        precond=lambda r: solve_unit_laplacian(grid, r, BC.NEUMANN),
        tol=tol,
        max_iter=max_iter,
        x0=x0,
        label="neumann",
    )
    return res.x


def dual_norm_plain(grid: GridSpec, f: np.ndarray, tol: float = DEFAULT_CG_TOL) -> float:
    """‖f‖_* = ‖∇N f‖_H для полей с нулевым средним."""
    u = inv_neumann_laplacian(grid, f, tol)
    g = gradient(grid, u, BC.NEUMANN)
    return math.sqrt(max(face_dot(grid, g, g), 0.0))


# ==========================================================
#               MOBILITY-WEIGHTED OPERATOR
# ==========================================================


class MetricOperator:
    """Блочный оператор (A u)_i = -div(Σ_j F_ij(φ) ∇u_j) с F на гранях, замороженным в φ.

    Предобуславливатель B (Bᵀ M B)⁻¹ Bᵀ N, где B базис TΣ, а M постоянная
    матрица подвижности (для scaled_projector берётся сам проектор). Для
    постоянной подвижности он совпадает с точным обратным.
    """

    def __init__(self, grid: GridSpec, phi: np.ndarray, spec: MobilitySpec, tol: float = DEFAULT_CG_TOL,
                 max_iter: int | None = None):
        self.grid = grid
        self.spec = spec
        self.tol = tol
        self.max_iter = max_iter
        if spec.is_constant:
            m = spec.constant_matrix()
            restricted = TANGENT_BASIS.T @ m @ TANGENT_BASIS
            self.block = TANGENT_BASIS @ np.linalg.inv(restricted) @ TANGENT_BASIS.T
            self.faces = FaceField(m[:, :, None, None], m[:, :, None, None])
        else:
            grid.check(phi)
            self.block = TANGENT_PROJECTOR
            self.faces = face_average(grid, mobility(phi, spec))

    def flux(self, u: np.ndarray) -> FaceField:
        g = gradient(self.grid, u, BC.NEUMANN)
        return FaceField(
            np.einsum("ij...,j...->i...", self.faces.x, g.x),
            np.einsum("ij...,j...->i...", self.faces.y, g.y),
        )

    def apply(self, u: np.ndarray) -> np.ndarray:
        return -divergence(self.grid, self.flux(u))

    def energy(self, u: np.ndarray) -> float:
        """(F ∇u, ∇u)_H по граням."""
        g = gradient(self.grid, u, BC.NEUMANN)
        return face_dot(self.grid, self.flux(u), g)

    def precondition(self, r: np.ndarray) -> np.ndarray:
        return np.einsum("ij,j...->i...", self.block, solve_unit_laplacian(self.grid, r, BC.NEUMANN))

    def solve(self, eta: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if eta.shape[0] != 3:
            raise ValueError("weighted inverse acts on three-component tangent fields")
        res = conjugate_gradient(
            self.grid,
            self.apply,
            eta,
            project=lambda v: project_tangent_field(self.grid, v),
            precond=self.precondition,
            tol=self.tol,
            max_iter=self.max_iter,
            x0=x0,
            label="mobility",
        )
        return res.x


def weighted_inverse(
    grid: GridSpec, phi: np.ndarray, eta: np.ndarray, spec: MobilitySpec, tol: float = DEFAULT_CG_TOL
) -> np.ndarray:
    return MetricOperator(grid, phi, spec, tol).solve(eta)


def dual_norm(
    grid: GridSpec, phi: np.ndarray, eta: np.ndarray, spec: MobilitySpec, tol: float = DEFAULT_CG_TOL
) -> float:
    op = MetricOperator(grid, phi, spec, tol)
    u = op.solve(eta)
    return math.sqrt(max(op.energy(u), 0.0))


# ==========================================================
#               LIPSCHITZ DEPENDENCE ON THE STATE
# ==========================================================


@dataclass(frozen=True)
class MobilityLipschitzResult:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-6) + 1e-14


def gradient_gap(grid: GridSpec, u1: np.ndarray, u2: np.ndarray) -> float:
    d = gradient(grid, u1 - u2, BC.NEUMANN)
    return math.sqrt(max(face_dot(grid, d, d), 0.0))


def _face_l4(grid: GridSpec, g: FaceField) -> float:
    w = face_weights(grid)
    qx = np.sum(g.x**2, axis=0) ** 2
    qy = np.sum(g.y**2, axis=0) ** 2
    return float((np.sum(w.x * qx) + np.sum(w.y * qy)) ** 0.25)


def mobility_lipschitz_check(
    grid: GridSpec,
    phi1: np.ndarray,
    phi2: np.ndarray,
    eta: np.ndarray,
    spec: MobilitySpec,
    tol: float = 1e-12,
) -> MobilityLipschitzResult:
    """Обе стороны ‖∇N_φ1 η - ∇N_φ2 η‖ <= 2^¼ (C_F/λ_F) ‖φ1-φ2‖_L4 ‖∇N_φ2 η‖_L4.

    Множитель 2^¼ возникает из усреднения ячеек на грани (неравенство Йенсена).
    """
    if spec.is_constant:
        raise ValueError("state-independent mobility: the Lipschitz estimate is trivial (lhs = 0)")
    lam_f, _, c_f = mobility_constants(spec)
    u1 = MetricOperator(grid, phi1, spec, tol).solve(eta)
    u2 = MetricOperator(grid, phi2, spec, tol).solve(eta)
    lhs = gradient_gap(grid, u1, u2)
    dphi = np.sqrt(np.sum((np.asarray(phi1) - np.asarray(phi2)) ** 2, axis=0))
    rhs = 2.0**0.25 * (c_f / lam_f) * lp_norm(grid, dphi, 4.0) * _face_l4(grid, gradient(grid, u2, BC.NEUMANN))
    return MobilityLipschitzResult(lhs, rhs)
