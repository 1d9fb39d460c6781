"""Monte Carlo validation layer for the fluctuation-averaged rates.

Samples realizations of the fluctuating Hamiltonian parameters (gap
noise dE(t) as a stationary Ornstein-Uhlenbeck process, coupling noise
f(t) as a symmetric +-1 telegraph process), evaluates trajectory-wise
time-dependent rates, propagates the two-state master equation

    dp2/dt = p1(t) k12(t) - p2(t) k21(t),        p1 = 1 - p2,

and averages over the ensemble.  Per-trajectory random streams are
derived from (master_seed, trajectory index) via SeedSequence spawning,
so every ensemble statistic is bit-identical for any worker count or
batch partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bath import BathModel, Lineshape, ModelError
from .rates import FluctuationModel, RateSpec, m_fgr_2

__all__ = [
    "OUProcess",
    "TelegraphProcess",
    "TrajectoryEnsemble",
    "MCEstimate",
    "PopulationCurve",
    "MCPopulation",
    "sample_ou",
    "sample_telegraph",
    "k12_along_trajectory",
    "trajectory_rate_curve",
    "mc_avg_rate",
    "mc_cumulant_check",
    "me_propagate",
    "mc_avg_population",
    "jackknife",
    "default_dt",
]


@dataclass(frozen=True)
class OUProcess:
    """Stationary Gaussian noise with <x(t)x(0)> = dE_sq * e^{-t/tau_e}."""

    tau_e: float
    dE_sq: float

    def __post_init__(self):
        if not (self.tau_e > 0):
            raise ModelError("tau_e must be > 0")
        if self.dE_sq < 0:
            raise ModelError("dE_sq must be >= 0")


@dataclass(frozen=True)
class TelegraphProcess:
    """+-1 jump process, sign flips Poisson at rate 1/(2 tau_f).

    Gives <f(t)f(0)> = e^{-t/tau_f} exactly, with f^2 = 1 and <f> = 0.
    tau_f = math.inf means a frozen sign.
    """

    tau_f: float

    def __post_init__(self):
        if not (self.tau_f > 0):
            raise ModelError("tau_f must be > 0")


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Reproducible ensemble: per-trajectory streams derived from one seed."""

    n_traj: int
    master_seed: int

    def __post_init__(self):
        if self.n_traj < 1:
            raise ModelError("n_traj must be >= 1")

    def child_seeds(self):
        return np.random.SeedSequence(self.master_seed).spawn(self.n_traj)


def _uniform_dt(t_grid: np.ndarray) -> float:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise ModelError("t_grid must be 1-d with at least two points")
    steps = np.diff(t_grid)
    dt = steps[0]
    if dt <= 0 or not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ModelError("t_grid must be uniform and ascending")
    return float(dt)


def default_dt(fluctuation: FluctuationModel) -> float:
    """Sampling step resolving the fastest correlation scale: min(tau_e, tau_f, 1)/20."""
    return min(fluctuation.tau_e, fluctuation.tau_f, 1.0) / 20.0


# ---------------------------------------------------------------------------
# Noise sampling.  Scalar and batched paths consume the per-trajectory
# streams identically (one standard_normal(N) / uniform(N) block each).

def _ou_from_normals(process: OUProcess, dt: float, xi: np.ndarray) -> np.ndarray:
    # exact discrete update: x_{k+1} = x_k e^{-dt/tau} + sqrt(dE_sq(1-e^{-2dt/tau})) xi_k
    rho = math.exp(-dt / process.tau_e)
    innov = math.sqrt(process.dE_sq * (1.0 - rho * rho))
    out = np.empty_like(xi)
    out[..., 0] = math.sqrt(process.dE_sq) * xi[..., 0]  # stationary start
    for k in range(1, xi.shape[-1]):
        out[..., k] = out[..., k - 1] * rho + innov * xi[..., k]
    return out


def sample_ou(process: OUProcess, t_grid, rng: np.random.Generator) -> np.ndarray:
    """One realization of the gap noise on a uniform grid."""
    dt = _uniform_dt(t_grid)
    xi = rng.standard_normal(np.asarray(t_grid).size)
    return _ou_from_normals(process, dt, xi)


def _telegraph_from_uniforms(process: TelegraphProcess, dt: float, u: np.ndarray) -> np.ndarray:
    s0 = np.where(u[..., 0] < 0.5, 1.0, -1.0)
    if math.isinf(process.tau_f):
        return np.broadcast_to(s0[..., None], u.shape).copy() if u.ndim > 1 else np.full(u.shape, s0)
    # odd number of Poisson flips inside one step has probability (1-e^{-dt/tau})/2
    p_odd = 0.5 * (1.0 - math.exp(-dt / process.tau_f))
    flips = np.where(u[..., 1:] < p_odd, -1.0, 1.0)
    out = np.empty_like(u)
    out[..., 0] = s0
    out[..., 1:] = s0[..., None] * np.cumprod(flips, axis=-1) if u.ndim > 1 else s0 * np.cumprod(flips)
    return out


def sample_telegraph(process: TelegraphProcess, t_grid, rng: np.random.Generator) -> np.ndarray:
    """One realization of the coupling sign noise on a uniform grid."""
    dt = _uniform_dt(t_grid)
    if not math.isinf(process.tau_f) and dt > process.tau_f / 20.0:
        raise ModelError("dt must satisfy dt <= tau_f/20 to resolve the coupling noise")
    u = rng.uniform(size=np.asarray(t_grid).size)
    return _telegraph_from_uniforms(process, dt, u)


# ---------------------------------------------------------------------------
# Trajectory-wise rate evaluation.

def _cumulative_phase(delta_e: np.ndarray, dt: float) -> np.ndarray:
    # Phi(t_j) = int_0^{t_j} dE, trapezoidal
    inner = 0.5 * (delta_e[..., 1:] + delta_e[..., :-1]) * dt
    zeros = np.zeros(delta_e.shape[:-1] + (1,))
    return np.concatenate([zeros, np.cumsum(inner, axis=-1)], axis=-1)


def _kernel(bath: BathModel, mean_gap: float, t_grid: np.ndarray,
            lineshape: Optional[Lineshape], backward: bool) -> np.ndarray:
    ls = lineshape if lineshape is not None else Lineshape(bath)
    sign = -1.0 if backward else 1.0
    return np.exp(sign * 1j * mean_gap * t_grid - ls(t_grid))


def trajectory_rate_curve(bath: BathModel, mean_gap: float, delta_e, f, t_grid,
                          J_sq: float = 1.0, lineshape: Optional[Lineshape] = None,
                          backward: bool = False) -> np.ndarray:
    """k(t) along one noise realization, on the whole grid.

    k(t_j) = 2|J|^2 Re sum_m dt_w e^{i dE tau_m} e^{i(Phi_j - Phi_{j-m})}
             f_j f_{j-m} e^{-C(tau_m)}; the sum over m is a direct O(N^2)
    convolution with a precomputed cumulative phase.  `backward` flips
    the sign of the full gap (mean and noise) for the 2 -> 1 rate.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    dt = _uniform_dt(t_grid)
    delta_e = np.asarray(delta_e, dtype=float)
    f = np.asarray(f, dtype=float)
    if delta_e.shape != t_grid.shape or f.shape != t_grid.shape:
        raise ModelError("trajectories must be aligned with t_grid")
    K = _kernel(bath, mean_gap, t_grid, lineshape, backward)
    phi = _cumulative_phase(delta_e, dt)
    sign = -1.0 if backward else 1.0
    B = np.exp(sign * 1j * phi) * f
    A = np.exp(-sign * 1j * phi) * f
    conv = np.convolve(K, A)[: t_grid.size]
    S = dt * (conv - 0.5 * K[0] * A - 0.5 * K * A[0])
    return 2.0 * J_sq * np.real(B * S)


def k12_along_trajectory(bath: BathModel, mean_gap: float, delta_e, f, t_grid, t: float,
                         J_sq: float = 1.0, lineshape: Optional[Lineshape] = None,
                         backward: bool = False) -> float:
    """k(t) along one realization at a single grid time (O(N))."""
    t_grid = np.asarray(t_grid, dtype=float)
    dt = _uniform_dt(t_grid)
    j = int(round((t - t_grid[0]) / dt))
    if j < 0 or j >= t_grid.size or abs(t_grid[j] - t) > 1e-9 * max(1.0, abs(t)):
        raise ModelError(f"t = {t} is not on the trajectory grid")
    delta_e = np.asarray(delta_e, dtype=float)
    f = np.asarray(f, dtype=float)
    K = _kernel(bath, mean_gap, t_grid[: j + 1], lineshape, backward)
    phi = _cumulative_phase(delta_e[: j + 1], dt)
    sign = -1.0 if backward else 1.0
    A = np.exp(-sign * 1j * phi[: j + 1]) * f[: j + 1]
    w = np.full(j + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    s = np.dot(w * K, A[::-1])
    b = np.exp(sign * 1j * phi[j]) * f[j]
    return float(2.0 * J_sq * np.real(b * s))


# ---------------------------------------------------------------------------
# Ensemble averaging.

@dataclass
class MCEstimate:
    mean: float
    se: float
    n_traj: int
    warning: Optional[str] = None
    values: np.ndarray = field(default=None, repr=False)


def jackknife(values) -> tuple[float, float]:
    """Leave-one-out jackknife mean and standard error."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 2:
        return float(np.mean(v)), math.inf
    total = np.sum(v)
    loo = (total - v) / (n - 1)
    center = float(np.mean(loo))
    se = math.sqrt((n - 1) / n * float(np.sum((loo - center) ** 2)))
    return float(np.mean(v)), se


def _noise_batches(ensemble: TrajectoryEnsemble, fluctuation: FluctuationModel,
                   n_steps: int, dt: float, chunk: int = 512):
    """Yield (delta_e, f) arrays of shape (B, n_steps) per fixed-size chunk."""
    ou = OUProcess(fluctuation.tau_e, fluctuation.dE_sq)
    has_coupling_noise = not math.isinf(fluctuation.tau_f)
    tel = TelegraphProcess(fluctuation.tau_f) if has_coupling_noise else None
    seeds = ensemble.child_seeds()
    for lo in range(0, ensemble.n_traj, chunk):
        hi = min(lo + chunk, ensemble.n_traj)
        xi = np.empty((hi - lo, n_steps))
        u = np.empty((hi - lo, n_steps)) if has_coupling_noise else None
        for i, ss in enumerate(seeds[lo:hi]):
            ou_ss, tel_ss = ss.spawn(2)
            xi[i] = np.random.default_rng(ou_ss).standard_normal(n_steps)
            if has_coupling_noise:
                u[i] = np.random.default_rng(tel_ss).uniform(size=n_steps)
        delta_e = _ou_from_normals(ou, dt, xi)
        if has_coupling_noise:
            f = _telegraph_from_uniforms(tel, dt, u)
        else:
            f = np.ones_like(delta_e)
        yield delta_e, f


def mc_avg_rate(ensemble: TrajectoryEnsemble, bath: BathModel, mean_gap: float,
                fluctuation: FluctuationModel, t_eval: float,
                dt: Optional[float] = None, J_sq: float = 1.0,
                lineshape: Optional[Lineshape] = None) -> MCEstimate:
    """Ensemble mean of the trajectory rate at t_eval, with jackknife SE.

    t_eval should be past the plateau of k(t); the warning field is set
    when the standard error exceeds 10% of the mean.
    """
    dt = default_dt(fluctuation) if dt is None else dt
    n_steps = int(round(t_eval / dt)) + 1
    t_grid = np.arange(n_steps) * dt
    j = n_steps - 1
    ls = lineshape if lineshape is not None else Lineshape(bath)
    K = np.exp(1j * mean_gap * t_grid - ls(t_grid))
    w = np.full(n_steps, dt)
    w[0] = w[-1] = 0.5 * dt
    Kw = (w * K)[::-1]  # reversed so S = (A @ Kw) runs over A_{j-m} K_m

    values = np.empty(ensemble.n_traj)
    pos = 0
    for delta_e, f in _noise_batches(ensemble, fluctuation, n_steps, dt):
        phi = _cumulative_phase(delta_e, dt)
        A = np.exp(-1j * phi) * f
        S = A @ Kw
        b = np.exp(1j * phi[:, j]) * f[:, j]
        batch = 2.0 * J_sq * np.real(b * S)
        values[pos:pos + batch.size] = batch
        pos += batch.size
    mean, se = jackknife(values)
    warning = None
    if abs(mean) > 0 and se > 0.1 * abs(mean):
        warning = f"standard error {se:.3e} exceeds 10% of the mean; increase n_traj"
    return MCEstimate(mean=mean, se=se, n_traj=ensemble.n_traj, warning=warning, values=values)


def mc_cumulant_check(ensemble: TrajectoryEnsemble, fluctuation: FluctuationModel,
                      n_tau: int = 50, horizon: Optional[float] = None,
                      dt: Optional[float] = None):
    """MC phase average <e^{i(Phi(T) - Phi(T-tau))}> vs its Gaussian closed form.

    Returns (tau, mc_mean (complex), se_real, closed_form).  The closed
    form is exp{-(tau/tau_e - (1-e^{-tau/tau_e})) <dE^2> tau_e^2}.
    """
    dt = default_dt(fluctuation) if dt is None else dt
    horizon = 10.0 * fluctuation.tau_e if horizon is None else horizon
    n_steps = int(round(horizon / dt)) + 1
    idx = np.unique(np.linspace(0, n_steps - 1, n_tau).astype(int))
    tau = idx * dt

    acc = np.zeros(idx.size, dtype=complex)
    acc_sq = np.zeros(idx.size)
    all_re = np.empty((ensemble.n_traj, idx.size))
    pos = 0
    for delta_e, _ in _noise_batches(ensemble, fluctuation, n_steps, dt):
        phi = _cumulative_phase(delta_e, dt)
        vals = np.exp(1j * (phi[:, -1:] - phi[:, n_steps - 1 - idx]))
        acc += vals.sum(axis=0)
        all_re[pos:pos + vals.shape[0]] = vals.real
        pos += vals.shape[0]
    mc_mean = acc / ensemble.n_traj
    se = np.std(all_re, axis=0, ddof=1) / math.sqrt(ensemble.n_traj)
    kubo = FluctuationModel(fluctuation.tau_e, fluctuation.dE_sq, math.inf)
    closed = np.exp(-kubo.damping_exponent(tau))
    return tau, mc_mean, se, closed


# ---------------------------------------------------------------------------
# Master-equation propagation.

@dataclass
class PopulationCurve:
    t: np.ndarray
    p2: np.ndarray

    @property
    def p1(self) -> np.ndarray:
        return 1.0 - self.p2


RateInput = Union[float, Sequence[float], np.ndarray, Callable[[np.ndarray], np.ndarray]]


def _rate_on_fine_grid(rate: RateInput, t_grid: np.ndarray, fine: np.ndarray,
                       allow_negative: bool) -> np.ndarray:
    if callable(rate):
        vals = np.asarray(rate(fine), dtype=float)
    elif np.ndim(rate) == 0:
        vals = np.full(fine.size, float(rate))
    else:
        arr = np.asarray(rate, dtype=float)
        if arr.shape != t_grid.shape:
            raise ModelError("rate curve must be aligned with t_grid")
        vals = np.interp(fine, t_grid, arr)
    if not allow_negative:
        if np.min(vals) < -1e-9:
            raise ModelError(f"negative rate input (min {np.min(vals):.3e})")
        vals = np.maximum(vals, 0.0)
    return vals


def _rk4_scan(k1: np.ndarray, k2: np.ndarray, p2_0: float, h: float, n_sub: int) -> np.ndarray:
    # k1/k2 sampled on the half-step grid: index 2*m is a node, 2*m+1 a midpoint
    n_fine = (k1.size - 1) // 2
    p = p2_0
    out = np.empty(n_fine // n_sub + 1)
    out[0] = p
    for m in range(n_fine):
        a1, a2 = k1[2 * m], k2[2 * m]
        b1, b2 = k1[2 * m + 1], k2[2 * m + 1]
        c1, c2 = k1[2 * m + 2], k2[2 * m + 2]
        f1 = a1 - p * (a1 + a2)
        p_mid1 = p + 0.5 * h * f1
        f2 = b1 - p_mid1 * (b1 + b2)
        p_mid2 = p + 0.5 * h * f2
        f3 = b1 - p_mid2 * (b1 + b2)
        p_end = p + h * f3
        f4 = c1 - p_end * (c1 + c2)
        p = p + h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        if (m + 1) % n_sub == 0:
            out[(m + 1) // n_sub] = p
    return out


def me_propagate(k12: RateInput, k21: RateInput, p2_0: float, t_grid,
                 tol: float = 1e-8, allow_negative: bool = False,
                 max_refinements: int = 8) -> PopulationCurve:
    """Two-state master equation, classical RK4 with p1 = 1 - p2.

    Rates may be constants, curves on t_grid, or callables.  The substep
    count is doubled until p2(T) changes by less than `tol`.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    _uniform_dt(t_grid)
    if not (0.0 <= p2_0 <= 1.0):
        raise ModelError("p2_0 must lie in [0, 1]")

    def solve(n_sub: int) -> np.ndarray:
        n_fine = (t_grid.size - 1) * n_sub
        fine = np.linspace(t_grid[0], t_grid[-1], 2 * n_fine + 1)  # nodes + midpoints
        r1 = _rate_on_fine_grid(k12, t_grid, fine, allow_negative)
        r2 = _rate_on_fine_grid(k21, t_grid, fine, allow_negative)
        h = (t_grid[-1] - t_grid[0]) / n_fine
        return _rk4_scan(r1, r2, p2_0, h, n_sub)

    n_sub = 1
    p2 = solve(n_sub)
    for _ in range(max_refinements):
        n_sub *= 2
        refined = solve(n_sub)
        if abs(refined[-1] - p2[-1]) < tol:
            return PopulationCurve(t=t_grid, p2=refined)
        p2 = refined
    return PopulationCurve(t=t_grid, p2=p2)


@dataclass
class MCPopulation:
    t: np.ndarray
    mean_p2: np.ndarray
    se_p2: np.ndarray
    meanfield_p2: np.ndarray   # constant steady-state rates
    decoupled_p2: np.ndarray   # ensemble-averaged time-dependent rates


def mc_avg_population(ensemble: TrajectoryEnsemble, bath: BathModel, mean_gap: float,
                      fluctuation: FluctuationModel, t_grid, J_sq: float = 1.0,
                      lineshape: Optional[Lineshape] = None, p2_0: float = 0.0,
                      me_tol: float = 1e-8) -> MCPopulation:
    """<p2(t)> over noise realizations, plus two decoupled comparison curves.

    Each realization propagates the master equation with its own forward
    and backward trajectory rates (backward = gap sign flipped, same
    bath lineshape).  meanfield_p2 propagates constant forward/backward
    rates from the fluctuation-averaged closed form; decoupled_p2
    propagates the ensemble-averaged time-dependent rates <k12(t)>,
    <k21(t)>, which shares the universal bath-kernel transient with the
    realizations and therefore isolates the decoupling error alone.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    dt = _uniform_dt(t_grid)
    n_steps = t_grid.size
    ls = lineshape if lineshape is not None else Lineshape(bath)
    K_f = np.exp(1j * mean_gap * t_grid - ls(t_grid))
    K_b = np.exp(-1j * mean_gap * t_grid - ls(t_grid))

    curves = np.empty((ensemble.n_traj, n_steps))
    k12_sum = np.zeros(n_steps)
    k21_sum = np.zeros(n_steps)
    pos = 0
    for delta_e, f in _noise_batches(ensemble, fluctuation, n_steps, dt):
        phi = _cumulative_phase(delta_e, dt)
        for row in range(delta_e.shape[0]):
            eip = np.exp(1j * phi[row])
            B_f = eip * f[row]
            A_f = np.conj(eip) * f[row]
            conv = np.convolve(K_f, A_f)[:n_steps]
            k12 = 2.0 * J_sq * np.real(B_f * dt * (conv - 0.5 * K_f[0] * A_f - 0.5 * K_f * A_f[0]))
            conv = np.convolve(K_b, B_f)[:n_steps]
            k21 = 2.0 * J_sq * np.real(A_f * dt * (conv - 0.5 * K_b[0] * B_f - 0.5 * K_b * B_f[0]))
            k12_sum += k12
            k21_sum += k21
            sol = me_propagate(k12, k21, p2_0, t_grid, tol=me_tol, allow_negative=True)
            curves[pos + row] = sol.p2
        pos += delta_e.shape[0]

    mean_p2 = curves.mean(axis=0)
    se_p2 = curves.std(axis=0, ddof=1) / math.sqrt(ensemble.n_traj) if ensemble.n_traj > 1 else np.full(n_steps, math.inf)

    spec_f = RateSpec(bath=bath, delta_E=mean_gap, J_sq=J_sq, fluctuation=fluctuation)
    spec_b = RateSpec(bath=bath, delta_E=-mean_gap, J_sq=J_sq, fluctuation=fluctuation)
    k_f = m_fgr_2(spec_f, lineshape=ls).k
    k_b = m_fgr_2(spec_b, lineshape=ls).k
    meanfield = me_propagate(k_f, k_b, p2_0, t_grid, tol=me_tol)
    decoupled = me_propagate(k12_sum / ensemble.n_traj, k21_sum / ensemble.n_traj,
                             p2_0, t_grid, tol=me_tol, allow_negative=True)
    return MCPopulation(t=t_grid, mean_p2=mean_p2, se_p2=se_p2,
                        meanfield_p2=meanfield.p2, decoupled_p2=decoupled.p2)
