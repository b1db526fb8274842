import math

import numpy as np
import pytest

from physics import (
    TANGENT_PROJECTOR,
    XI,
    DomainError,
    ModelParams,
    MobilitySpec,
    PermittivitySpec,
    epsilon,
    f_delta,
    f_delta_lower_constant,
    grad_f_delta,
    interaction,
    mobility,
    mobility_constants,
    permittivity_bounds,
    psi,
    psi_d,
    psi_delta,
    psi_delta_theta,
    sigma,
    sup_grad_epsilon,
)

DELTA = 1e-4


# ---------- Ψ и Ψ_δ ----------


def test_psi_values() -> None:
    assert psi(1.0) == pytest.approx(math.exp(-1.0))
    assert psi(0.0) == pytest.approx(math.exp(-1.0))
    assert psi(math.exp(-1.0)) == pytest.approx(0.0, abs=1e-15)
    assert psi_d(1, 0.5) == pytest.approx(1.0 + math.log(0.5))


def test_psi_singular_branch_raises() -> None:
    with pytest.raises(DomainError):
        psi(-0.1)
    with pytest.raises(DomainError):
        psi_d(1, 0.0)
    with pytest.raises(DomainError):
        psi_d(2, np.array([0.5, 0.0]))


def test_psi_extension_is_c1_and_bounded() -> None:
    for s0 in (1.0, 5.0, 10.0):
        lo, hi = s0 - 1e-9, s0 + 1e-9
        assert psi_d(0, lo) == pytest.approx(psi_d(0, hi), abs=1e-8)
        assert psi_d(1, lo) == pytest.approx(psi_d(1, hi), abs=1e-8)
    s = np.linspace(1.0, 50.0, 500)
    assert np.all(np.isfinite(psi_d(0, s)))
    assert np.max(np.abs(psi_d(1, s))) <= 5.0 + 1e-12


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_psi_delta_matches_to_fourth_order(k) -> None:
    below = float(psi_delta(k, DELTA * (1.0 - 1e-12), DELTA))
    at = float(psi_d(k, DELTA))
    assert abs(below - at) <= 1e-10 * max(1.0, abs(at))


def test_psi_delta_below_psi() -> None:
    s = np.linspace(1e-8, 1.0, 4001)
    assert np.all(psi_delta(0, s, DELTA) <= psi(s) + 1e-14)


def test_psi_delta_convex_and_coercive() -> None:
    s = np.linspace(-5.0, 5.0, 20001)
    assert np.all(psi_delta(2, s, DELTA) >= 0.0)
    inner = np.linspace(-2.0, 2.0, 8001)
    assert np.all(psi_delta(2, inner, DELTA) >= psi_delta_theta(DELTA) - 1e-12)
    assert psi_delta_theta(DELTA) == pytest.approx(1.0)


def test_psi_delta_rejects_bad_delta() -> None:
    with pytest.raises(ValueError):
        psi_delta(0, 0.5, 0.5)
    with pytest.raises(ValueError):
        psi_delta(5, 0.5, DELTA)


# ---------- взаимодействие и F_δ ----------


def test_default_interaction_is_pairwise_products() -> None:
    p = ModelParams()
    s = np.array([0.2, 0.3, 0.5])
    assert interaction("value", s, p.chi_matrix) == pytest.approx(0.2 * 0.3 + 0.3 * 0.5 + 0.2 * 0.5)
    assert np.allclose(interaction("grad", s, p.chi_matrix), [0.8, 0.7, 0.5])


def test_grad_f_delta_matches_finite_differences(rng) -> None:
    p = ModelParams(delta=1e-2)
    s = rng.uniform(-0.5, 1.2, size=3)
    g = grad_f_delta(s, p)
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1e-6
        fd = (f_delta(s + e, p) - f_delta(s - e, p)) / 2e-6
        assert fd == pytest.approx(g[i], rel=1e-6, abs=1e-6)


def test_f_delta_lower_bound(rng) -> None:
    p = ModelParams(delta=DELTA)
    c1 = f_delta_lower_constant(p)
    assert c1 == pytest.approx(3.0 * 0.25 / (2.0 * DELTA))
    pts = rng.normal(size=(3, 20000))
    radii = 10.0 * rng.uniform(size=20000) ** (1 / 3)
    pts = pts / np.linalg.norm(pts, axis=0) * radii
    lower = 0.5 * DELTA * np.sum(pts**4, axis=0) - c1
    assert np.all(f_delta(pts, p) >= lower)


def test_model_params_validation() -> None:
    with pytest.raises(ValueError, match="delta"):
        ModelParams(delta=0.5)
    with pytest.raises(ValueError, match="gamma"):
        ModelParams(gamma=(1e-3, 0.0, 1e-3))
    with pytest.raises(ValueError, match="tau"):
        ModelParams(tau=-1.0)


# ---------- проницаемость ----------


def test_sigma_clamp() -> None:
    x = np.linspace(0.0, 1.0, 11)
    assert np.allclose(sigma(x), x)
    assert sigma(np.array([-3.0]))[0] == pytest.approx(-0.3)
    assert sigma(np.array([7.0]))[0] == pytest.approx(1.3)
    for edge in (-0.5, 0.0, 1.0, 1.5):
        for order in (0, 1, 2):
            lo = sigma(np.array([edge - 1e-9]), order)[0]
            hi = sigma(np.array([edge + 1e-9]), order)[0]
            assert lo == pytest.approx(hi, abs=1e-6)


def test_sigma_monotone_and_smooth_at_identity() -> None:
    x = np.linspace(-1.0, 2.0, 3001)
    assert np.all(sigma(x, 1) >= 0.0)
    assert np.all(np.diff(sigma(x)) >= -1e-15)
    # σ''' = 0 по обе стороны стыка с тождеством
    h = 1e-5
    for edge, side in ((0.0, -1.0), (1.0, 1.0)):
        jump = sigma(np.array([edge + side * h]), 2)[0] - sigma(np.array([edge - side * h]), 2)[0]
        assert abs(jump / h) < 1e-2


def test_epsilon_affine_on_unit_square(rng) -> None:
    spec = PermittivitySpec()
    s1, s2 = rng.uniform(size=(2, 100))
    assert np.allclose(epsilon("value", s1, s2, spec), 2.0 + s1 - s2)
    g = epsilon("grad", s1, s2, spec)
    assert np.allclose(g[0], 1.0) and np.allclose(g[1], -1.0)
    assert np.allclose(epsilon("hess", s1, s2, spec), 0.0)


def test_epsilon_flat_beyond_cutoff(rng) -> None:
    spec = PermittivitySpec(cutoff_radius=2.0)
    ang = rng.uniform(0, 2 * np.pi, 200)
    r = rng.uniform(2.0, 6.0, 200)
    s1, s2 = r * np.cos(ang), r * np.sin(ang)
    assert np.allclose(epsilon("value", s1, s2, spec), spec.eps_s)
    assert np.allclose(epsilon("grad", s1, s2, spec), 0.0)


def test_epsilon_derivatives_match_finite_differences(rng) -> None:
    spec = PermittivitySpec()
    # точки в полосах срезки, где ε нелинейна
    s1 = rng.uniform(-0.6, 1.8, 200)
    s2 = rng.uniform(-0.6, 1.8, 200)
    h = 1e-6
    g = epsilon("grad", s1, s2, spec)
    hess = epsilon("hess", s1, s2, spec)
    fd1 = (epsilon("value", s1 + h, s2, spec) - epsilon("value", s1 - h, s2, spec)) / (2 * h)
    fd2 = (epsilon("value", s1, s2 + h, spec) - epsilon("value", s1, s2 - h, spec)) / (2 * h)
    assert np.allclose(fd1, g[0], atol=1e-6)
    assert np.allclose(fd2, g[1], atol=1e-6)
    gx = (epsilon("grad", s1 + h, s2, spec) - epsilon("grad", s1 - h, s2, spec)) / (2 * h)
    assert np.allclose(gx, hess[:, 0], atol=1e-5)
    assert np.allclose(hess[0, 1], hess[1, 0])


def test_permittivity_bounds_are_exact(rng) -> None:
    spec = PermittivitySpec()
    lo, hi = permittivity_bounds(spec)
    assert (lo, hi) == (pytest.approx(0.4), pytest.approx(3.6))
    s1, s2 = rng.uniform(-4, 4, size=(2, 50000))
    vals = epsilon("value", s1, s2, spec)
    assert vals.min() >= lo - 1e-12
    assert vals.max() <= hi + 1e-12
    assert np.max(np.linalg.norm(epsilon("grad", s1, s2, spec), axis=0)) <= sup_grad_epsilon(spec)


def test_permittivity_validation() -> None:
    assert PermittivitySpec().violations() == []
    keys = [k for k, _ in PermittivitySpec(eps_a=-1.0).violations()]
    assert "eps_a" in keys
    keys = [k for k, _ in PermittivitySpec(cutoff_radius=1.0).violations()]
    assert keys == ["eps_cutoff"]
    # σ заходит до -0.3, поэтому ε может стать неположительной
    keys = [k for k, _ in PermittivitySpec(eps_s=1.0, eps_a=5.0, eps_b=5.0).violations()]
    assert keys == ["eps_s"]


# ---------- подвижность ----------


def test_projector_mobility() -> None:
    spec = MobilitySpec()
    m = mobility(None, spec)
    assert np.allclose(m @ XI, 0.0)
    assert np.allclose(m, m.T)
    lam0, _, c_f = mobility_constants(spec)
    assert lam0 == pytest.approx(1.0)
    assert c_f == 0.0


def test_matrix_mobility_validation() -> None:
    good = MobilitySpec("matrix", tuple((2.0 * TANGENT_PROJECTOR).ravel()))
    assert good.violations() == []
    assert mobility_constants(good)[0] == pytest.approx(2.0)
    bad = MobilitySpec("matrix", (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0))
    assert any("vanish" in msg for _, msg in bad.violations())
    skew = MobilitySpec("matrix", (1.0, -1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.0, 1.0))
    assert any("symmetric" in msg for _, msg in skew.violations())
    assert MobilitySpec("matrix", (1.0, 2.0)).violations()


def test_scaled_projector_mobility(rng) -> None:
    spec = MobilitySpec("scaled_projector", kappa=0.5)
    s = rng.uniform(size=(3, 4, 5))
    m = mobility(s, spec)
    assert m.shape == (3, 3, 4, 5)
    assert np.allclose(np.einsum("ij...,j->i...", m, XI), 0.0)
    lam0, c_m, c_f = mobility_constants(spec)
    assert lam0 == pytest.approx(0.5)
    assert c_f == pytest.approx(math.sqrt(2.0) * 0.5)
    assert MobilitySpec("scaled_projector", kappa=1.0).violations()
