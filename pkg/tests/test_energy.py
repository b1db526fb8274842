import numpy as np
import pytest

from conftest import noisy_state, tangent_direction
from electrostatics import solve_potential
from energy import (
    assemble_w,
    augmented_energy,
    electric_density,
    energy_e3,
    energy_gradient_error,
    gradient_energy,
    nonlocal_potential,
    psi_prime_norms,
    relative_gap,
    total_energy,
)
from grid import GridSpec, mean
from operators import MetricOperator
from physics import ModelParams, MobilitySpec

TOL = 1e-12


def test_total_energy_is_sum_of_parts(grid16, state16, params, e0_x) -> None:
    e0 = e0_x(grid16)
    c = state16.c
    phi = solve_potential(grid16, c[:2], e0, params.permittivity, TOL)
    rep = total_energy(grid16, c, phi, e0, params, TOL)
    assert rep.total == pytest.approx(rep.e1 + rep.e2 + rep.e3 + rep.e4)
    assert rep.augmented == rep.total
    assert rep.dissipation == 0.0
    assert rep.e3 > 0.0
    assert rep.e4 > 0.0


def test_nonlocal_energy_vanishes_without_alpha(grid8, rng) -> None:
    c = noisy_state(grid8, rng).c
    assert energy_e3(grid8, c, ModelParams()) == 0.0
    p = ModelParams(alpha=(1.0, 0.5, 2.0))
    nc = nonlocal_potential(grid8, c, TOL)
    assert energy_e3(grid8, c, p, TOL, nc) == pytest.approx(energy_e3(grid8, c, p, TOL), rel=1e-8)


def test_uniform_state_has_constant_chemical_potential(grid8, params, e0_x) -> None:
    c = np.broadcast_to(np.array([0.3, 0.3, 0.4])[:, None, None], (3, *grid8.shape)).copy()
    e0 = e0_x(grid8)
    phi = solve_potential(grid8, c[:2], e0, params.permittivity, TOL)
    w = assemble_w(grid8, c, phi, e0, params, TOL).w
    assert np.max(np.abs(np.sum(w, axis=0))) < 1e-12
    assert np.max(np.abs(w - np.asarray(mean(grid8, w))[:, None, None])) < 1e-10
    q = electric_density(grid8, phi, e0)
    # E = (1, 0): на x-гранях |E|² = 1, на y-гранях 0
    assert np.allclose(q, 1.0)


@pytest.mark.parametrize(
    "params_",
    [
        ModelParams(alpha=(100.0, 0.0, 100.0)),
        ModelParams(alpha=(10.0, 5.0, 20.0), chi=(0.5, 2.0, 1.0, -0.5, 1.5, 0.0), theta=(1.0, 0.5, 2.0)),
    ],
)
def test_energy_gradient_consistency(grid16, rng, e0_x, params_) -> None:
    e0 = e0_x(grid16, 1.0, 0.3)
    c = noisy_state(grid16, rng).c
    for _ in range(5):
        h = tangent_direction(grid16, rng)
        fd, exact = energy_gradient_error(grid16, c, h, e0, params_, 1e-4, TOL)
        assert relative_gap(fd, exact) <= 1e-4


def test_energy_gradient_consistency_near_cutoff(grid16, rng, e0_x) -> None:
    # компоненты ниже δ: работает ветка Тейлора
    p = ModelParams(delta=0.05)
    c = noisy_state(grid16, rng, m=(0.05, 0.45, 0.5), amp=0.04).c
    e0 = e0_x(grid16)
    h = tangent_direction(grid16, rng)
    fd, exact = energy_gradient_error(grid16, c, h, e0, p, 1e-5, TOL)
    assert relative_gap(fd, exact) <= 1e-4


def test_augmented_energy_penalty(grid8, rng, params, e0_x) -> None:
    e0 = e0_x(grid8)
    st = noisy_state(grid8, rng)
    c = st.c
    phi = solve_potential(grid8, c[:2], e0, params.permittivity, TOL)
    same = augmented_energy(grid8, c, c, phi, e0, params, TOL)
    assert same.dissipation == 0.0
    v = c + 0.01 * tangent_direction(grid8, rng)
    phi_v = solve_potential(grid8, v[:2], e0, params.permittivity, TOL)
    rep = augmented_energy(grid8, v, c, phi_v, e0, params, TOL, MetricOperator(grid8, c, MobilitySpec(), TOL))
    assert rep.dissipation > 0.0
    assert rep.augmented == pytest.approx(rep.total + rep.dissipation)


def test_augmented_energy_rejects_mean_change(grid8, rng, params, e0_x) -> None:
    e0 = e0_x(grid8)
    c = noisy_state(grid8, rng).c
    v = c.copy()
    v[0] += 0.01
    v[2] -= 0.01
    phi = solve_potential(grid8, v[:2], e0, params.permittivity, TOL)
    with pytest.raises(ValueError, match="different means"):
        augmented_energy(grid8, v, c, phi, e0, params, TOL)


def test_psi_prime_norms(grid8) -> None:
    c = np.broadcast_to(np.array([0.3, 0.3, 0.4])[:, None, None], (3, *grid8.shape))
    out = psi_prime_norms(grid8, c, 1e-4)
    assert out.shape == (3,)
    assert out[0] == pytest.approx(abs(1.0 + np.log(0.3)))
    assert out[2] == pytest.approx(abs(1.0 + np.log(0.4)))


def test_relative_gap() -> None:
    assert relative_gap(1.0, 1.0) == 0.0
    assert relative_gap(float("nan"), 1.0) == float("inf")


# ---------- одномодовые аналитические значения ----------


def _single_mode(grid: GridSpec, a: float) -> np.ndarray:
    x, _ = grid.cell_centers()
    c = np.empty((3, *grid.shape))
    c[0] = 0.3 + a * np.cos(np.pi * x / grid.lx)
    c[1] = 0.3
    c[2] = 1.0 - c[0] - c[1]
    return c


def test_single_mode_gradient_energy() -> None:
    grid = GridSpec(64, 32, lx=2.0, ly=1.0)
    a, gamma = 0.05, (2e-3, 1e-3, 1e-3)
    c = _single_mode(grid, a)
    # c_S = 0.7 - c_A несёт ту же моду
    expected = (gamma[0] + gamma[2]) * a**2 * np.pi**2 / (4 * grid.lx**2) * grid.lx * grid.ly
    assert gradient_energy(grid, c, gamma) == pytest.approx(expected, rel=1e-3)


def test_single_mode_nonlocal_energy() -> None:
    grid = GridSpec(64, 32, lx=2.0, ly=1.0)
    a = 0.05
    p = ModelParams(alpha=(100.0, 0.0, 100.0))
    expected = p.alpha[0] * a**2 * grid.lx**3 * grid.ly / (4 * np.pi**2)
    assert energy_e3(grid, _single_mode(grid, a), p, TOL) == pytest.approx(expected, rel=1e-3)
