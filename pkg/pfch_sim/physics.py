# physics.py
"""Точечные материальные законы: Ψ и Ψ_δ, плотность F_δ, взаимодействие I,
диэлектрическая проницаемость ε и матрица подвижности M.

Все функции векторизованы: компоненты лежат на оси 0
(s формы (3, ...) для состава, (2, ...) для аргументов ε).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

E_INV = math.exp(-1.0)
DELTA_CAP = 1.0 / 3.0

# продолжение Ψ при s > 1: Ψ'' = 1 до EXT_KNEE, Ψ'' = -1 до EXT_END, дальше константа
EXT_KNEE = 5.0
EXT_END = 10.0

# полосы сглаживания σ: [-0.5, 0] и [1, 1.5]
SIGMA_BAND = 0.5
SIGMA_LO = -0.3  # -SIGMA_BAND * 0.6
SIGMA_HI = 1.3

XI = np.ones(3)
TANGENT_PROJECTOR = np.eye(3) - np.outer(XI, XI) / 3.0
# ортонормированный базис TΣ
TANGENT_BASIS = np.array(
    [[1.0, -1.0, 0.0], [1.0, 1.0, -2.0]]
).T / np.array([math.sqrt(2.0), math.sqrt(6.0)])

MobilityKind = Literal["projector", "matrix", "scaled_projector"]
DerivKind = Literal["value", "grad", "hess"]


class DomainError(ValueError):
    pass


# ==========================================================
#                       PARAMETERS
# ==========================================================


@dataclass(frozen=True)
class MobilitySpec:
    kind: MobilityKind = "projector"
    matrix: tuple[float, ...] | None = None  # 9 чисел по строкам, для kind="matrix"
    kappa: float = 0.5  # для kind="scaled_projector"

    def violations(self) -> list[tuple[str, str]]:
        out: list[tuple[str, str]] = []
        if self.kind == "matrix":
            if self.matrix is None or len(self.matrix) != 9:
                out.append(("mobility_matrix", "mobility = matrix needs 9 entries"))
                return out
            m = np.asarray(self.matrix, dtype=float).reshape(3, 3)
            if not np.all(np.isfinite(m)):
                out.append(("mobility_matrix", "entries must be finite"))
                return out
            if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
                out.append(("mobility_matrix", "matrix must be symmetric"))
            if np.max(np.abs(m @ XI)) > 1e-12 * max(1.0, np.max(np.abs(m))):
                out.append(("mobility_matrix", "M [1,1,1] must vanish (conservation of total volume)"))
            restricted = TANGENT_BASIS.T @ m @ TANGENT_BASIS
            if np.min(np.linalg.eigvalsh(0.5 * (restricted + restricted.T))) <= 0:
                out.append(("mobility_matrix", "matrix must be positive definite on the tangent plane"))
        elif self.kind == "scaled_projector":
            if not (0.0 <= self.kappa < 1.0):
                out.append(("mobility_kappa", f"kappa must lie in [0, 1) (got {self.kappa})"))
        elif self.kind != "projector":
            out.append(("mobility", f"unknown mobility kind {self.kind!r}"))
        return out

    @property
    def is_constant(self) -> bool:
        return self.kind != "scaled_projector"

    def constant_matrix(self) -> np.ndarray:
        if self.kind == "matrix":
            return np.asarray(self.matrix, dtype=float).reshape(3, 3)
        if self.kind == "projector":
            return TANGENT_PROJECTOR.copy()
        raise ValueError("state-dependent mobility has no constant matrix")


@dataclass(frozen=True)
class PermittivitySpec:
    eps_s: float = 2.0
    eps_a: float = 3.0
    eps_b: float = 1.0
    cutoff_radius: float = 2.0

    def violations(self) -> list[tuple[str, str]]:
        out: list[tuple[str, str]] = []
        for key in ("eps_s", "eps_a", "eps_b"):
            if not getattr(self, key) > 0:
                out.append((key, "permittivity values must be positive"))
        if not self.cutoff_radius >= 2.0:
            out.append(("eps_cutoff", "cutoff radius must be >= 2 so that eps is affine on [0,1]^2"))
        if not out:
            lo, _ = permittivity_bounds(self)
            if lo <= 1e-6:
                out.append(
                    ("eps_s", f"eps can drop to {lo:.3g} outside [0,1]^2; lower bound must exceed 1e-6")
                )
        return out


@dataclass(frozen=True)
class ModelParams:
    gamma: tuple[float, float, float] = (1e-3, 1e-3, 1e-3)
    theta: tuple[float, float, float] = (1.0, 1.0, 1.0)
    alpha: tuple[float, float, float] = (0.0, 0.0, 0.0)  # (aa, ab, bb)
    chi: tuple[float, ...] = (0.0, 1.0, 1.0, 0.0, 1.0, 0.0)  # aa ab as bb bs ss
    delta: float = 1e-4
    tau: float = 1e-3
    mobility: MobilitySpec = field(default_factory=MobilitySpec)
    permittivity: PermittivitySpec = field(default_factory=PermittivitySpec)

    def __post_init__(self) -> None:
        problems = model_violations(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        if problems:
            raise ValueError("; ".join(f"{k}: {m}" for k, m in problems))

    @property
    def alpha_matrix(self) -> np.ndarray:
        aa, ab, bb = self.alpha
        return np.array([[aa, ab], [ab, bb]], dtype=float)

    @property
    def chi_matrix(self) -> np.ndarray:
        return chi_matrix(self.chi)


def model_violations(
    gamma, theta, alpha, chi, delta: float, tau: float, mobility: MobilitySpec, permittivity: PermittivitySpec
) -> list[tuple[str, str]]:
    """Список (поле, сообщение); пустой, если параметры допустимы."""
    out: list[tuple[str, str]] = []
    if len(gamma) != 3 or not all(g > 0 for g in gamma):
        out.append(("gamma", "three positive values required"))
    if len(theta) != 3 or not all(t > 0 for t in theta):
        out.append(("theta", "three positive values required"))
    if len(alpha) != 3 or not all(math.isfinite(a) for a in alpha):
        out.append(("alpha", "alpha_aa, alpha_ab, alpha_bb must be finite"))
    if len(chi) != 6 or not all(math.isfinite(x) for x in chi):
        out.append(("interaction", "six finite upper-triangle entries required"))
    if not (0.0 < delta < DELTA_CAP):
        out.append(("delta", f"delta must lie in (0, {DELTA_CAP:.6g})"))
    if not tau > 0:
        out.append(("tau", "time step must be positive"))
    out.extend(mobility.violations())
    out.extend(permittivity.violations())
    return out


def chi_matrix(upper: tuple[float, ...]) -> np.ndarray:
    aa, ab, as_, bb, bs, ss = upper
    return np.array([[aa, ab, as_], [ab, bb, bs], [as_, bs, ss]], dtype=float)


# ==========================================================
#                     SINGULAR POTENTIAL
# ==========================================================


def _scalar_out(out: np.ndarray):
    return out[()] if out.ndim == 0 else out


def psi(s):
    return psi_d(0, s)


def psi_d(k: int, s):
    """k-я производная Ψ(s) = s ln s + 1/e, с ограниченным C¹ продолжением при s > 1."""
    if k not in (0, 1, 2, 3, 4):
        raise ValueError(f"derivative order must be 0..4 (got {k})")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or (k >= 1 and np.any(s == 0)):
        raise DomainError(f"Psi^({k}) is undefined at s <= 0 on the logarithmic branch")

    out = np.zeros_like(s)
    core = (s > 0) & (s <= 1.0)
    knee = (s > 1.0) & (s <= EXT_KNEE)
    tail = (s > EXT_KNEE) & (s <= EXT_END)
    flat = s > EXT_END
    x = s[core]
    if k == 0:
        out[s == 0] = E_INV
        out[core] = x * np.log(x) + E_INV
    elif k == 1:
        out[core] = 1.0 + np.log(x)
    elif k == 2:
        out[core] = 1.0 / x
    elif k == 3:
        out[core] = -1.0 / x**2
    else:
        out[core] = 2.0 / x**3

    # Ψ(1) = 1/e, Ψ'(1) = 1
    t = s[knee] - 1.0
    u = s[tail] - EXT_KNEE
    psi_knee = E_INV + (EXT_KNEE - 1.0) + 0.5 * (EXT_KNEE - 1.0) ** 2
    slope_knee = EXT_KNEE
    width = EXT_END - EXT_KNEE
    if k == 0:
        out[knee] = E_INV + t + 0.5 * t**2
        out[tail] = psi_knee + slope_knee * u - 0.5 * u**2
        out[flat] = psi_knee + slope_knee * width - 0.5 * width**2
    elif k == 1:
        out[knee] = 1.0 + t
        out[tail] = slope_knee - u
    elif k == 2:
        out[knee] = 1.0
        out[tail] = -1.0
    return _scalar_out(out)


def psi_delta(k: int, s, delta: float):
    """Ψ_δ: Ψ при s >= δ, ниже δ полином Тейлора четвёртой степени в точке δ."""
    if not (0.0 < delta < DELTA_CAP):
        raise ValueError(f"delta must lie in (0, {DELTA_CAP:.6g})")
    if k not in (0, 1, 2, 3, 4):
        raise ValueError(f"derivative order must be 0..4 (got {k})")
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    upper = s >= delta
    if np.any(upper):
        out[upper] = psi_d(k, s[upper])
    lower = ~upper
    if np.any(lower):
        d = s[lower] - delta
        taylor = np.zeros_like(d)
        for i in range(k, 5):
            taylor += float(psi_d(i, delta)) * d ** (i - k) / math.factorial(i - k)
        out[lower] = taylor
    return _scalar_out(out)


def psi_delta_theta(delta: float) -> float:
    """Нижняя граница Ψ_δ'' на [-2, 2]: min(Ψ'' на [δ, 1]) = 1 и квартичная ветка (>= 3/(4δ))."""
    return min(1.0, 0.75 / delta)


# ==========================================================
#                  INTERACTION AND F_DELTA
# ==========================================================


def interaction(kind: DerivKind, s, chi: np.ndarray):
    """Квадратичное I(s) = ½ sᵀχs; по умолчанию s1 s2 + s2 s3 + s1 s3."""
    s = np.asarray(s, dtype=float)
    chi = np.asarray(chi, dtype=float)
    if kind == "value":
        return _scalar_out(0.5 * np.einsum("i...,ij,j...->...", s, chi, s))
    if kind == "grad":
        return np.einsum("ij,j...->i...", chi, s)
    if kind == "hess":
        return chi.copy()
    raise ValueError(f"unknown derivative kind {kind!r}")


def f_delta(s, params: ModelParams):
    s = np.asarray(s, dtype=float)
    val = np.zeros(s.shape[1:])
    for i in range(3):
        val = val + params.theta[i] * psi_delta(0, s[i], params.delta)
    val = val + interaction("value", s, params.chi_matrix)
    val = val + params.delta * np.sum(s**4, axis=0)
    return _scalar_out(np.asarray(val))


def grad_f_delta(s, params: ModelParams) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    g = interaction("grad", s, params.chi_matrix) + 4.0 * params.delta * s**3
    for i in range(3):
        g[i] = g[i] + params.theta[i] * psi_delta(1, s[i], params.delta)
    return g


def f_delta_lower_constant(params: ModelParams) -> float:
    """C₁ в F_δ(s) >= (δ/2) Σ s_i⁴ - C₁ (Ψ_δ >= 0, I >= -κ|s|², |s|² <= √3 (Σ s_i⁴)^½)."""
    lam_min = float(np.min(np.linalg.eigvalsh(params.chi_matrix)))
    kappa = max(0.0, -lam_min) / 2.0
    return 3.0 * kappa**2 / (2.0 * params.delta)


# ==========================================================
#                       PERMITTIVITY
# ==========================================================


def _band_poly(t):
    return t - t**4 + 0.6 * t**5


def sigma(x, order: int = 0):
    """Срезка: тождество на [0, 1], константа вне [-0.5, 1.5].

    В полосах квинтика t - t⁴ + ⅗t⁵: C³ на стыке с тождеством, C² на выходе в константу.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mid = (x >= 0.0) & (x <= 1.0)
    low = (x > -SIGMA_BAND) & (x < 0.0)
    high = (x > 1.0) & (x < 1.0 + SIGMA_BAND)
    tl = -x[low] / SIGMA_BAND
    th = (x[high] - 1.0) / SIGMA_BAND
    if order == 0:
        out[x <= -SIGMA_BAND] = SIGMA_LO
        out[x >= 1.0 + SIGMA_BAND] = SIGMA_HI
        out[mid] = x[mid]
        out[low] = -SIGMA_BAND * _band_poly(tl)
        out[high] = 1.0 + SIGMA_BAND * _band_poly(th)
    elif order == 1:
        out[mid] = 1.0
        out[low] = 1.0 - 4.0 * tl**3 + 3.0 * tl**4
        out[high] = 1.0 - 4.0 * th**3 + 3.0 * th**4
    elif order == 2:
        out[low] = 12.0 * tl**2 * (1.0 - tl) / SIGMA_BAND
        out[high] = -12.0 * th**2 * (1.0 - th) / SIGMA_BAND
    else:
        raise ValueError("sigma supports orders 0..2")
    return out


def _cutoff(r, radius: float, order: int):
    """Радиальный множитель ρ: 1 до radius-1/2, затем quintic smoothstep до 0."""
    r = np.asarray(r, dtype=float)
    t = np.clip((r - (radius - 0.5)) / 0.5, 0.0, 1.0)
    if order == 0:
        return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)
    if order == 1:
        return -60.0 * t**2 * (1.0 - t) ** 2
    return -240.0 * t * (1.0 - t) * (1.0 - 2.0 * t)


def epsilon(kind: DerivKind, s1, s2, spec: PermittivitySpec):
    """ε(s) = ε_S + ρ(|s|)·[(ε_A-ε_S)σ(s1) + (ε_B-ε_S)σ(s2)].

    grad -> форма (2, ...), hess -> форма (2, 2, ...).
    """
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    s1, s2 = np.broadcast_arrays(s1, s2)
    da = spec.eps_a - spec.eps_s
    db = spec.eps_b - spec.eps_s
    r = np.hypot(s1, s2)
    rho = _cutoff(r, spec.cutoff_radius, 0)
    lin = da * sigma(s1) + db * sigma(s2)
    if kind == "value":
        return _scalar_out(spec.eps_s + rho * lin)

    rho1 = _cutoff(r, spec.cutoff_radius, 1)
    safe_r = np.where(r > 0, r, 1.0)
    e = np.stack([s1 / safe_r, s2 / safe_r])  # там, где r = 0, ρ' = 0
    grad_lin = np.stack([da * sigma(s1, 1), db * sigma(s2, 1)])
    if kind == "grad":
        return rho1 * lin * e + rho * grad_lin
    if kind == "hess":
        rho2 = _cutoff(r, spec.cutoff_radius, 2)
        eye = np.eye(2).reshape(2, 2, *([1] * r.ndim))
        ee = np.einsum("i...,j...->ij...", e, e)
        h = rho2 * lin * ee
        h = h + rho1 * lin * (eye - ee) / safe_r
        h = h + rho1 * (np.einsum("i...,j...->ij...", e, grad_lin) + np.einsum("i...,j...->ij...", grad_lin, e))
        h[0, 0] = h[0, 0] + rho * da * sigma(s1, 2)
        h[1, 1] = h[1, 1] + rho * db * sigma(s2, 2)
        return h
    raise ValueError(f"unknown derivative kind {kind!r}")


def permittivity_bounds(spec: PermittivitySpec) -> tuple[float, float]:
    """Точный диапазон ε на R²: ρ ∈ [0, 1], σ ∈ [-0.3, 1.3] независимо."""
    da = spec.eps_a - spec.eps_s
    db = spec.eps_b - spec.eps_s
    corners = [da * a + db * b for a in (SIGMA_LO, SIGMA_HI) for b in (SIGMA_LO, SIGMA_HI)]
    return spec.eps_s + min(0.0, min(corners)), spec.eps_s + max(0.0, max(corners))


def sup_grad_epsilon(spec: PermittivitySpec) -> float:
    """Верхняя оценка sup|∇ε|: max|ρ'|·max|L| + |∇L|_max, max|ρ'| = 60/16."""
    da = spec.eps_a - spec.eps_s
    db = spec.eps_b - spec.eps_s
    lin_max = max(abs(da * a + db * b) for a in (SIGMA_LO, SIGMA_HI) for b in (SIGMA_LO, SIGMA_HI))
    return 3.75 * lin_max + math.hypot(da, db)


# ==========================================================
#                         MOBILITY
# ==========================================================


def mobility(s, spec: MobilitySpec) -> np.ndarray:
    """M(s): (3, 3) для постоянных видов, (3, 3, ...) для scaled_projector."""
    if spec.is_constant:
        return spec.constant_matrix()
    s = np.asarray(s, dtype=float)
    scale = 1.0 + spec.kappa * np.cos(s[0] - s[1])
    return np.einsum("ij,...->ij...", TANGENT_PROJECTOR, scale)


def mobility_constants(spec: MobilitySpec) -> tuple[float, float, float]:
    """(λ₀ коэрцитивность на TΣ, C_M оценка элементов, C_F константа Липшица)."""
    if spec.kind == "scaled_projector":
        return 1.0 - spec.kappa, (1.0 + spec.kappa) * 2.0 / 3.0, math.sqrt(2.0) * spec.kappa
    m = spec.constant_matrix()
    restricted = TANGENT_BASIS.T @ m @ TANGENT_BASIS
    lam0 = float(np.min(np.linalg.eigvalsh(0.5 * (restricted + restricted.T))))
    return lam0, float(np.max(np.abs(m))), 0.0
