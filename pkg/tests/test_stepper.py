import numpy as np
import pytest

from conftest import noisy_state
from operators import PhaseState
from physics import ModelParams, MobilitySpec
from stepper import StepConfig, StepError, Stepper, run, run_to_stationary, step

CFG = StepConfig(tau=1e-3)


def test_step_config_violations() -> None:
    assert CFG.violations() == []
    keys = [k for k, _ in StepConfig(tau=-1.0, armijo_c=2.0, max_inner=0).violations()]
    assert {"tau", "armijo_c", "max_inner"} <= set(keys)
    assert [k for k, _ in StepConfig(tau=1e-3, tau_min=1e-2).violations()] == ["tau_min"]


def test_single_step_properties(grid16, state16, params, e0_x) -> None:
    e0 = e0_x(grid16)
    st = Stepper(grid16, e0, params, CFG)
    before = st.evaluate(state16)
    res = st.step(before.state)

    assert res.converged
    assert res.residual <= CFG.grad_tol
    assert res.accepted_tau == CFG.tau
    assert res.inner_iters > 0
    # дискретное энергетическое неравенство
    rep = res.report
    assert rep.total + rep.dissipation <= before.report.total + 1e-10 * (1.0 + abs(before.report.total))
    assert rep.dissipation > 0.0
    assert rep.augmented == pytest.approx(rep.total + rep.dissipation)
    # масса и сумма
    assert np.max(np.abs(res.state.masses(grid16) - state16.target_mean)) <= 1e-10
    assert res.state.sum_violation() <= 1e-10
    assert not res.state.c.flags.writeable


def test_functional_step_matches_stepper(grid8, rng, params, e0_x) -> None:
    e0 = e0_x(grid8)
    c0 = noisy_state(grid8, rng)
    a = step(grid8, c0, e0, params, CFG)
    b = Stepper(grid8, e0, params, CFG).step(c0)
    assert np.array_equal(a.state.c, b.state.c)


def test_run_reaches_t_end_with_callbacks(grid8, rng, params, e0_x) -> None:
    e0 = e0_x(grid8)
    c0 = noisy_state(grid8, rng)
    seen = []
    traj = run(grid8, c0, e0, params, CFG, 0.005, callbacks=[lambda n, t, r: seen.append((n, t))])
    assert seen[0] == (0, 0.0)
    assert [n for n, _ in seen] == list(range(6))
    assert traj.times[-1] == pytest.approx(0.005)
    assert len(traj.states) == len(traj.times) == 6
    assert traj.final is traj.results[-1]
    energies = [traj.initial.report.total] + [r.report.total for r in traj.results]
    assert all(b <= a + 1e-10 * (1 + abs(a)) for a, b in zip(energies, energies[1:]))


def test_run_without_states_keeps_final(grid8, rng, params, e0_x) -> None:
    traj = run(grid8, noisy_state(grid8, rng), e0_x(grid8), params, CFG, 0.002, keep_states=False)
    assert len(traj.states) == 2
    assert len(traj.results) == 2


def test_run_step_budget(grid8, rng, params, e0_x) -> None:
    traj = run(grid8, noisy_state(grid8, rng), e0_x(grid8), params, CFG, 1.0, max_steps=3)
    assert len(traj.results) == 3


def test_run_is_deterministic(grid8, params, e0_x) -> None:
    e0 = e0_x(grid8)
    a = run(grid8, noisy_state(grid8, np.random.default_rng(5)), e0, params, CFG, 0.003)
    b = run(grid8, noisy_state(grid8, np.random.default_rng(5)), e0, params, CFG, 0.003)
    for sa, sb in zip(a.states, b.states):
        assert np.array_equal(sa.c, sb.c)


def test_state_dependent_mobility_step(grid8, rng, e0_x) -> None:
    p = ModelParams(alpha=(100.0, 0.0, 100.0), mobility=MobilitySpec("scaled_projector", kappa=0.5))
    c0 = noisy_state(grid8, rng)
    st = Stepper(grid8, e0_x(grid8), p, CFG)
    before = st.evaluate(c0)
    res = st.step(c0)
    assert res.converged
    assert res.report.total + res.report.dissipation <= before.report.total + 1e-10 * (1 + abs(before.report.total))


def test_uniform_state_is_stationary(grid8, params, e0_x) -> None:
    m = np.array([0.3, 0.3, 0.4])
    c0 = PhaseState(np.broadcast_to(m[:, None, None], (3, *grid8.shape)).copy(), m)
    res = run_to_stationary(grid8, c0, e0_x(grid8), params, CFG, stat_tol=1e-6)
    assert res.converged
    assert res.steps == 0
    assert res.time == 0.0


def test_stationary_budget_exhausted(grid8, rng, params, e0_x) -> None:
    res = run_to_stationary(grid8, noisy_state(grid8, rng), e0_x(grid8), params, CFG, stat_tol=1e-14, max_steps=2)
    assert not res.converged
    assert res.steps == 2
    assert res.time == pytest.approx(0.002)


def test_stalled_line_search_halves_tau_then_fails(grid8, rng, params, e0_x) -> None:
    # условие Армихо не выполнимо: каждый τ заканчивается остановкой поиска
    cfg = StepConfig(tau=1e-3, tau_min=5e-4, armijo_c=1e6)
    st = Stepper(grid8, e0_x(grid8), params, cfg)
    with pytest.raises(StepError, match="tau_min"):
        st.step(noisy_state(grid8, rng))


def test_inner_budget_exhaustion_is_reported(grid8, rng, params, e0_x) -> None:
    cfg = StepConfig(tau=1e-3, max_inner=1)
    res = Stepper(grid8, e0_x(grid8), params, cfg).step(noisy_state(grid8, rng))
    assert not res.converged
    assert res.inner_iters == 1
    assert res.residual > cfg.grad_tol

