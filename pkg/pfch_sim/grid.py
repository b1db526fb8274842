# grid.py
"""Равномерная прямоугольная сетка с ячейками-центрами и разностные операторы.

Поля хранятся как numpy-массивы формы (..., ny, nx) в C-порядке, то есть
`values.ravel()` даёт построчный список ячеек. Ведущие оси допускаются:
трёхкомпонентное поле (c_A, c_B, c_S) имеет форму (3, ny, nx).

Потоки живут на гранях:
  x-грани: (..., ny, nx + 1), грань i лежит в x = i * hx;
  y-грани: (..., ny + 1, nx), грань j лежит в y = j * hy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import fft, sparse

DEFAULT_MAX_CELLS = 2**22

# Скалярное поле = массив формы grid.shape (или стек таких массивов).
ScalarField = np.ndarray


class GridError(ValueError):
    pass


class BC(str, Enum):
    NEUMANN = "neumann"      # зеркальная фиктивная ячейка, нулевой поток
    DIRICHLET = "dirichlet"  # фиктивная ячейка = -u, значение 0 на грани


# ==========================================================
#                        GRID SPEC
# ==========================================================


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    max_cells: int = field(default=DEFAULT_MAX_CELLS, compare=False, repr=False)

    def __post_init__(self) -> None:
        problems = []
        if int(self.nx) < 4 or int(self.ny) < 4:
            problems.append(f"nx, ny must be >= 4 (got {self.nx}x{self.ny})")
        if not (self.lx > 0 and self.ly > 0):
            problems.append(f"lx, ly must be positive (got {self.lx}, {self.ly})")
        if int(self.nx) * int(self.ny) > int(self.max_cells):
            problems.append(
                f"nx*ny = {int(self.nx) * int(self.ny)} exceeds the cell cap {self.max_cells} "
                "(raise PFCH_MAX_CELLS to allow it)"
            )
        if problems:
            raise GridError("; ".join(problems))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y)  # каждая формы (ny, nx)

    def zeros(self, *lead: int) -> np.ndarray:
        return np.zeros((*lead, self.ny, self.nx))

    def ones(self, *lead: int) -> np.ndarray:
        return np.ones((*lead, self.ny, self.nx))

    def check(self, f: np.ndarray) -> None:
        if np.shape(f)[-2:] != self.shape:
            raise GridError(f"field of shape {np.shape(f)} does not live on a {self.ny}x{self.nx} grid")


# ==========================================================
#                        FACE FIELDS
# ==========================================================


@dataclass
class FaceField:
    """Значения на x- и y-гранях (потоки, градиенты или коэффициенты)."""

    x: np.ndarray
    y: np.ndarray

    def __mul__(self, other: "FaceField") -> "FaceField":
        return FaceField(self.x * other.x, self.y * other.y)

    def scaled(self, a: float) -> "FaceField":
        return FaceField(a * self.x, a * self.y)

    def __add__(self, other: "FaceField") -> "FaceField":
        return FaceField(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "FaceField") -> "FaceField":
        return FaceField(self.x - other.x, self.y - other.y)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)))


# Коэффициенты на гранях хранятся в том же контейнере.
FaceCoefficients = FaceField


def unit_faces(grid: GridSpec) -> FaceField:
    return FaceField(np.ones((grid.ny, grid.nx + 1)), np.ones((grid.ny + 1, grid.nx)))


def face_weights(grid: GridSpec) -> FaceField:
    """Квадратурные веса граней: hx*hy внутри, половина на границе."""
    v = grid.cell_volume
    wx = np.full((grid.ny, grid.nx + 1), v)
    wx[:, 0] = wx[:, -1] = 0.5 * v
    wy = np.full((grid.ny + 1, grid.nx), v)
    wy[0, :] = wy[-1, :] = 0.5 * v
    return FaceField(wx, wy)


def face_average(grid: GridSpec, cells: np.ndarray) -> FaceField:
    """Арифметическое среднее соседних ячеек; на границе берём значение ячейки."""
    grid.check(cells)
    lead = cells.shape[:-2]
    fx = np.empty((*lead, grid.ny, grid.nx + 1))
    fx[..., 1:-1] = 0.5 * (cells[..., :, :-1] + cells[..., :, 1:])
    fx[..., 0] = cells[..., :, 0]
    fx[..., -1] = cells[..., :, -1]
    fy = np.empty((*lead, grid.ny + 1, grid.nx))
    fy[..., 1:-1, :] = 0.5 * (cells[..., :-1, :] + cells[..., 1:, :])
    fy[..., 0, :] = cells[..., 0, :]
    fy[..., -1, :] = cells[..., -1, :]
    return FaceField(fx, fy)


def face_average_adjoint(grid: GridSpec, faces: FaceField) -> np.ndarray:
    """Сопряжённое к face_average относительно весов граней и ячеек.

    Возвращает q с inner(q, c) == face_dot(faces, face_average(c)) для любых c.
    """
    w = face_weights(grid)
    ax = w.x * faces.x
    ay = w.y * faces.y
    lead = np.broadcast_shapes(ax.shape[:-2], ay.shape[:-2])
    q = np.zeros((*lead, grid.ny, grid.nx))
    q[..., :, :-1] += 0.5 * ax[..., 1:-1]
    q[..., :, 1:] += 0.5 * ax[..., 1:-1]
    q[..., :, 0] += ax[..., 0]
    q[..., :, -1] += ax[..., -1]
    q[..., :-1, :] += 0.5 * ay[..., 1:-1, :]
    q[..., 1:, :] += 0.5 * ay[..., 1:-1, :]
    q[..., 0, :] += ay[..., 0, :]
    q[..., -1, :] += ay[..., -1, :]
    return q / grid.cell_volume


def face_dot(grid: GridSpec, a: FaceField, b: FaceField) -> float:
    """Дискретное (a, b) по граням, с суммированием по ведущим осям."""
    w = face_weights(grid)
    return float(np.sum(w.x * a.x * b.x) + np.sum(w.y * a.y * b.y))


# ==========================================================
#                   DIFFERENTIAL OPERATORS
# ==========================================================


def gradient(grid: GridSpec, u: np.ndarray, bc: BC) -> FaceField:
    grid.check(u)
    hx, hy = grid.hx, grid.hy
    lead = u.shape[:-2]
    gx = np.zeros((*lead, grid.ny, grid.nx + 1))
    gx[..., 1:-1] = (u[..., :, 1:] - u[..., :, :-1]) / hx
    gy = np.zeros((*lead, grid.ny + 1, grid.nx))
    gy[..., 1:-1, :] = (u[..., 1:, :] - u[..., :-1, :]) / hy
    if bc is BC.DIRICHLET:
        # центр ячейки -> грань со значением 0 на расстоянии h/2
        gx[..., 0] = 2.0 * u[..., :, 0] / hx
        gx[..., -1] = -2.0 * u[..., :, -1] / hx
        gy[..., 0, :] = 2.0 * u[..., 0, :] / hy
        gy[..., -1, :] = -2.0 * u[..., -1, :] / hy
    return FaceField(gx, gy)


def divergence(grid: GridSpec, flux: FaceField) -> np.ndarray:
    """Разность потоков по граням ячейки (граничные потоки берутся как есть)."""
    return (flux.x[..., :, 1:] - flux.x[..., :, :-1]) / grid.hx + (
        flux.y[..., 1:, :] - flux.y[..., :-1, :]
    ) / grid.hy


def apply_elliptic(grid: GridSpec, k: FaceField, u: np.ndarray, bc: BC) -> np.ndarray:
    """-div(k grad u) в потоковой форме."""
    return -divergence(grid, k * gradient(grid, u, bc))


def laplace_neumann(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    return -apply_elliptic(grid, unit_faces(grid), f, BC.NEUMANN)


# ==========================================================
#                   SPARSE ASSEMBLY
# ==========================================================


def _gradient_1d(n: int, h: float, bc: BC) -> sparse.csr_matrix:
    """(n+1) x n: ячейки -> грани одной оси."""
    g = sparse.diags([np.full(n, -1.0 / h), np.full(n, 1.0 / h)], offsets=[-1, 0], shape=(n + 1, n))
    edge = 2.0 if bc is BC.DIRICHLET else 0.0
    rows = np.ones(n + 1)
    rows[0] = rows[-1] = edge
    return (sparse.diags(rows) @ g).tocsr()


def _divergence_1d(n: int, h: float) -> sparse.csr_matrix:
    return sparse.diags([np.full(n, -1.0 / h), np.full(n, 1.0 / h)], offsets=[0, 1], shape=(n, n + 1)).tocsr()


@lru_cache(maxsize=16)
def _difference_matrices(grid: GridSpec, bc: BC):
    ix = sparse.identity(grid.nx, format="csr")
    iy = sparse.identity(grid.ny, format="csr")
    gx = sparse.kron(iy, _gradient_1d(grid.nx, grid.hx, bc), format="csr")
    gy = sparse.kron(_gradient_1d(grid.ny, grid.hy, bc), ix, format="csr")
    dx = sparse.kron(iy, _divergence_1d(grid.nx, grid.hx), format="csr")
    dy = sparse.kron(_divergence_1d(grid.ny, grid.hy), ix, format="csr")
    return gx, gy, dx, dy


def elliptic_matrix(grid: GridSpec, k: FaceField, bc: BC) -> sparse.csr_matrix:
    """Матрица -div(k grad ·) на построчно развёрнутых ячейках; совпадает с apply_elliptic."""
    kx = np.broadcast_to(np.asarray(k.x, dtype=float), (grid.ny, grid.nx + 1))
    ky = np.broadcast_to(np.asarray(k.y, dtype=float), (grid.ny + 1, grid.nx))
    gx, gy, dx, dy = _difference_matrices(grid, bc)
    a = dx @ sparse.diags(kx.ravel()) @ gx + dy @ sparse.diags(ky.ravel()) @ gy
    return (-a).tocsr()


# ==========================================================
#              SPECTRAL UNIT-LAPLACIAN SOLVES
# ==========================================================


def _symbol_1d(n: int, h: float, shift: int) -> np.ndarray:
    k = np.arange(n) + shift
    return (2.0 / h * np.sin(np.pi * k / (2 * n))) ** 2


@lru_cache(maxsize=16)
def _inverse_symbol(grid: GridSpec, bc: BC) -> np.ndarray:
    # Неймановский оператор диагонален в базисе DCT-II, дирихлеевский в базисе DST-II
    shift = 1 if bc is BC.DIRICHLET else 0
    lam = _symbol_1d(grid.ny, grid.hy, shift)[:, None] + _symbol_1d(grid.nx, grid.hx, shift)[None, :]
    inv = np.zeros_like(lam)
    np.divide(1.0, lam, out=inv, where=lam > 0)  # нулевая мода Неймана -> решение со средним 0
    inv.setflags(write=False)
    return inv


def solve_unit_laplacian(grid: GridSpec, f: np.ndarray, bc: BC) -> np.ndarray:
    """Точное решение -Δu = f с единичным коэффициентом (для Неймана на нулевом среднем)."""
    f = np.asarray(f, dtype=float)
    grid.check(f)
    inv = _inverse_symbol(grid, bc)
    if bc is BC.DIRICHLET:
        return fft.idstn(fft.dstn(f, type=2, axes=(-2, -1), norm="ortho") * inv, type=2, axes=(-2, -1), norm="ortho")
    return fft.idctn(fft.dctn(f, type=2, axes=(-2, -1), norm="ortho") * inv, type=2, axes=(-2, -1), norm="ortho")


# ==========================================================
#                    QUADRATURE / NORMS
# ==========================================================


def mean(grid: GridSpec, f: np.ndarray) -> float | np.ndarray:
    """Среднее по области; для стека по каждой компоненте."""
    grid.check(f)
    return np.sum(f, axis=(-2, -1)) * grid.cell_volume / grid.area


def inner(grid: GridSpec, f: np.ndarray, g: np.ndarray) -> float:
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != g.shape:
        raise GridError(f"grid mismatch: {f.shape} vs {g.shape}")
    grid.check(f)
    return float(np.sum(f * g) * grid.cell_volume)


def l2_norm(grid: GridSpec, f: np.ndarray) -> float:
    return float(np.sqrt(max(inner(grid, f, f), 0.0)))


def lp_norm(grid: GridSpec, f: np.ndarray, p: float) -> float:
    grid.check(f)
    return float((np.sum(np.abs(f) ** p) * grid.cell_volume) ** (1.0 / p))


def h1_seminorm(grid: GridSpec, u: np.ndarray, bc: BC) -> float:
    g = gradient(grid, u, bc)
    return float(np.sqrt(max(face_dot(grid, g, g), 0.0)))
