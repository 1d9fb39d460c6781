import math

import numpy as np
import pytest

import goldenrate as gr
from goldenrate.bath import BathModel, ModelError
from goldenrate.rates import FluctuationModel, RateSpec, m_fgr_1, m_fgr_2
from goldenrate.stochastic import (
    OUProcess,
    TelegraphProcess,
    TrajectoryEnsemble,
    _noise_batches,
    jackknife,
    k12_along_trajectory,
    mc_avg_population,
    mc_avg_rate,
    mc_cumulant_check,
    me_propagate,
    sample_ou,
    sample_telegraph,
    trajectory_rate_curve,
)


def _ou_ensemble(n_traj, tau_e=1.0, de_sq=0.1, dt=0.05, n_steps=201, seed=42):
    ens = TrajectoryEnsemble(n_traj=n_traj, master_seed=seed)
    fl = FluctuationModel(tau_e=tau_e, dE_sq=de_sq)
    blocks = [de for de, _ in _noise_batches(ens, fl, n_steps, dt)]
    return np.vstack(blocks), dt


def test_ou_stationary_statistics():
    de, dt = _ou_ensemble(10_000)
    assert abs(de[:, -1].mean()) <= 3.0 * math.sqrt(0.1 / 10_000)
    assert de[:, -1].var() == pytest.approx(0.1, rel=0.05)
    lag = int(round(1.0 / dt))  # one correlation time
    autocorr = np.mean(de[:, lag:] * de[:, :-lag])
    assert autocorr == pytest.approx(0.1 / math.e, rel=0.05)


def test_ou_single_trajectory_matches_ensemble_row():
    ens = TrajectoryEnsemble(n_traj=3, master_seed=9)
    fl = FluctuationModel(tau_e=1.0, dE_sq=0.1)
    grid = np.arange(0.0, 5.0 + 1e-12, 0.05)
    batch = next(iter(_noise_batches(ens, fl, grid.size, 0.05)))[0]
    ou_ss, _ = ens.child_seeds()[0].spawn(2)
    single = sample_ou(OUProcess(1.0, 0.1), grid, np.random.default_rng(ou_ss))
    np.testing.assert_array_equal(batch[0], single)


def test_telegraph_statistics():
    grid = np.arange(0.0, 10.0 + 1e-12, 0.05)
    proc = TelegraphProcess(tau_f=1.0)
    fs = np.vstack([sample_telegraph(proc, grid, np.random.default_rng(i)) for i in range(5000)])
    assert np.all(fs**2 == 1.0)
    lag = int(round(1.0 / 0.05))
    assert np.mean(fs[:, lag:] * fs[:, :-lag]) == pytest.approx(1 / math.e, rel=0.05)


def test_telegraph_frozen_when_tau_infinite():
    grid = np.arange(0.0, 2.0 + 1e-12, 0.05)
    f = sample_telegraph(TelegraphProcess(tau_f=math.inf), grid, np.random.default_rng(0))
    assert np.all(f == f[0])
    assert f[0] in (-1.0, 1.0)


def test_telegraph_rejects_coarse_dt():
    grid = np.arange(0.0, 2.0 + 1e-12, 0.2)
    with pytest.raises(ModelError):
        sample_telegraph(TelegraphProcess(tau_f=1.0), grid, np.random.default_rng(0))


def test_zero_noise_trajectory_rate_matches_continuum(bath_n1):
    grid = np.arange(0.0, 20.0 + 1e-12, 0.01)
    zeros, ones = np.zeros_like(grid), np.ones_like(grid)
    k_traj = k12_along_trajectory(bath_n1, 1.0, zeros, ones, grid, 20.0)
    k_cont = gr.rate_vs_time(RateSpec(bath=bath_n1, delta_E=1.0), np.array([20.0]))[0]
    assert abs(k_traj - k_cont) / k_cont <= 1e-3
    curve = trajectory_rate_curve(bath_n1, 1.0, zeros, ones, grid)
    assert curve[0] == 0.0
    assert curve[-1] == pytest.approx(k_traj, rel=1e-12)


def test_trajectory_rate_requires_grid_time(bath_n1):
    grid = np.arange(0.0, 1.0 + 1e-12, 0.1)
    with pytest.raises(ModelError):
        k12_along_trajectory(bath_n1, 1.0, np.zeros_like(grid), np.ones_like(grid), grid, 0.55)


def test_backward_rate_detailed_balance_zero_noise(bath_n1):
    # forward/backward construction: gap sign flipped, same lineshape
    grid = np.arange(0.0, 25.0 + 1e-12, 0.01)
    zeros, ones = np.zeros_like(grid), np.ones_like(grid)
    kf = k12_along_trajectory(bath_n1, 1.0, zeros, ones, grid, 25.0)
    kb = k12_along_trajectory(bath_n1, 1.0, zeros, ones, grid, 25.0, backward=True)
    # the analytic-coth lineshape violates KMS mildly; 2% window
    assert kf / kb == pytest.approx(math.exp(1.0), rel=0.02)


def test_cumulant_check_within_three_se():
    ens = TrajectoryEnsemble(n_traj=4000, master_seed=77)
    fl = FluctuationModel(tau_e=1.0, dE_sq=0.1)
    tau, mc, se, closed = mc_cumulant_check(ens, fl, n_tau=50, horizon=10.0, dt=0.05)
    assert tau.size == 50
    within = np.abs(mc.real - closed) <= 3.0 * se + 1e-12
    assert np.mean(within) >= 0.95


def test_mc_avg_rate_matches_closed_form(bath_n1):
    fl = FluctuationModel(tau_e=1.0, dE_sq=0.1)
    ens = TrajectoryEnsemble(n_traj=2000, master_seed=123)
    est = mc_avg_rate(ens, bath_n1, 1.0, fl, t_eval=20.0, dt=0.05)
    closed = m_fgr_2(RateSpec(bath=bath_n1, delta_E=1.0, fluctuation=fl)).k
    assert abs(est.mean - closed) <= 3.0 * est.se
    assert est.warning is None


def test_mc_avg_rate_zero_noise_reduces_to_m_fgr_1(bath_n1):
    fl = FluctuationModel(tau_e=1.0, dE_sq=0.0)
    ens = TrajectoryEnsemble(n_traj=8, master_seed=5)
    est = mc_avg_rate(ens, bath_n1, 1.0, fl, t_eval=20.0, dt=0.01)
    m1 = m_fgr_1(RateSpec(bath=bath_n1, delta_E=1.0)).k
    assert est.se == 0.0
    assert abs(est.mean - m1) / m1 <= 1e-3


def test_mc_determinism():
    bath = BathModel(1, 1.0, 1.0)
    fl = FluctuationModel(tau_e=1.0, dE_sq=0.1)
    a = mc_avg_rate(TrajectoryEnsemble(600, 31), bath, 1.0, fl, t_eval=10.0, dt=0.05)
    b = mc_avg_rate(TrajectoryEnsemble(600, 31), bath, 1.0, fl, t_eval=10.0, dt=0.05)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.mean == b.mean and a.se == b.se


def test_se_scales_as_inverse_sqrt_n(bath_n1):
    fl = FluctuationModel(tau_e=1.0, dE_sq=0.1)
    sizes = (100, 1000, 10_000)
    ses = [
        mc_avg_rate(TrajectoryEnsemble(n, 2718), bath_n1, 1.0, fl, t_eval=10.0, dt=0.05).se
        for n in sizes
    ]
    slope = np.polyfit(np.log(sizes), np.log(ses), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_jackknife_matches_standard_error():
    rng = np.random.default_rng(0)
    v = rng.normal(size=400)
    mean, se = jackknife(v)
    assert mean == pytest.approx(v.mean(), rel=1e-12)
    assert se == pytest.approx(v.std(ddof=1) / math.sqrt(v.size), rel=1e-10)


def test_me_propagate_constant_rates_analytic():
    a, b = 0.3, 0.7
    grid = np.linspace(0.0, 10.0, 101)
    sol = me_propagate(a, b, 0.0, grid)
    exact = a / (a + b) * (1.0 - np.exp(-(a + b) * grid))
    assert np.max(np.abs(sol.p2 - exact)) <= 1e-8
    np.testing.assert_array_equal(sol.p1 + sol.p2, np.ones_like(grid))


def test_me_propagate_zero_rates_frozen():
    grid = np.linspace(0.0, 5.0, 21)
    sol = me_propagate(0.0, 0.0, 0.3, grid)
    assert np.all(sol.p2 == 0.3)


def test_me_propagate_time_dependent_matches_quadrature_oracle():
    # independent oracle: p2(t) = int_0^t k1(tau) exp(-int_tau^t (k1+k2)) dtau
    k1 = lambda t: 0.2 * (1.0 + np.sin(t))
    k2 = lambda t: 0.1 * (1.0 + np.cos(2.0 * t))
    grid = np.linspace(0.0, 10.0, 51)
    sol = me_propagate(k1, k2, 0.0, grid)
    fine = np.linspace(0.0, 10.0, 40_001)
    h = fine[1] - fine[0]
    total = k1(fine) + k2(fine)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (total[1:] + total[:-1]) * h)])
    for i, t_end in enumerate(grid):
        j = int(round(t_end / h))
        integrand = k1(fine[: j + 1]) * np.exp(-(cum[j] - cum[: j + 1]))
        ref = np.trapezoid(integrand, dx=h)
        assert abs(sol.p2[i] - ref) <= 1e-6


def test_me_propagate_validation():
    grid = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ModelError):
        me_propagate(-0.5, 0.1, 0.0, grid)
    with pytest.raises(ModelError):
        me_propagate(0.1, 0.1, 1.5, grid)
    me_propagate(lambda t: -0.5 * np.ones(np.shape(t)), 0.1, 0.0, grid, allow_negative=True)


def test_mc_population_zero_noise_equals_single_realization(bath_n1):
    fl = FluctuationModel(tau_e=1.0, dE_sq=0.0)
    grid = np.arange(0.0, 6.0 + 1e-12, 0.02)
    pop = mc_avg_population(TrajectoryEnsemble(4, 3), bath_n1, 1.0, fl, grid, J_sq=0.3)
    zeros, ones = np.zeros_like(grid), np.ones_like(grid)
    k12 = trajectory_rate_curve(bath_n1, 1.0, zeros, ones, grid, J_sq=0.3)
    k21 = trajectory_rate_curve(bath_n1, 1.0, zeros, ones, grid, J_sq=0.3, backward=True)
    single = me_propagate(k12, k21, 0.0, grid, allow_negative=True)
    np.testing.assert_allclose(pop.mean_p2, single.p2, atol=1e-14)
    np.testing.assert_allclose(pop.decoupled_p2, single.p2, atol=1e-14)
    assert np.all(pop.se_p2[1:] < 1e-14)


def test_mc_population_fast_noise_matches_decoupled(bath_n1):
    fl = FluctuationModel(tau_e=0.1, dE_sq=0.1)
    grid = np.arange(0.0, 8.0 + 1e-12, 0.005)
    pop = mc_avg_population(TrajectoryEnsemble(200, 11), bath_n1, 1.0, fl, grid, J_sq=0.1)
    z = np.abs(pop.mean_p2 - pop.decoupled_p2)[1:] / np.maximum(pop.se_p2[1:], 1e-300)
    assert np.max(z) <= 3.0


def test_mc_population_slow_noise_is_dispersive(bath_n1):
    fl = FluctuationModel(tau_e=1e3, dE_sq=0.5)
    grid = np.arange(0.0, 8.0 + 1e-12, 0.05)
    pop = mc_avg_population(TrajectoryEnsemble(800, 12), bath_n1, 1.0, fl, grid, J_sq=1.0)
    z_decoupled = np.abs(pop.mean_p2 - pop.decoupled_p2) / np.maximum(pop.se_p2, 1e-300)
    z_meanfield = np.abs(pop.mean_p2 - pop.meanfield_p2) / np.maximum(pop.se_p2, 1e-300)
    assert np.max(z_decoupled) > 5.0
    assert np.max(z_meanfield) > 5.0


def test_mc_population_bounds(bath_n1):
    fl = FluctuationModel(tau_e=1.0, dE_sq=0.2)
    grid = np.arange(0.0, 5.0 + 1e-12, 0.02)
    pop = mc_avg_population(TrajectoryEnsemble(50, 8), bath_n1, 0.5, fl, grid, J_sq=0.2)
    assert np.all(pop.mean_p2 >= -1e-10)
    assert np.all(pop.mean_p2 <= 1.0 + 1e-10)


def test_ensemble_validation():
    with pytest.raises(ModelError):
        TrajectoryEnsemble(0, 1)
    with pytest.raises(ModelError):
        OUProcess(tau_e=-1.0, dE_sq=0.1)
    with pytest.raises(ModelError):
        TelegraphProcess(tau_f=0.0)
