"""Golden-rule rate expressions for the two-state, harmonic-bath model.

All variants share the kernel exp{i*dE*t - C(t)} with dE = E1_tilde -
E2_tilde (polaron-shifted gap, hbar = omega_c = 1) and differ in how the
long-time behaviour of the kernel is tamed:

  damped FGR           integrand multiplied by e^{-gamma_d t};
  m-FGR-1              the non-decaying component e^{-C_{R,s}} is
                       subtracted and the resulting delta-function weight
                       is reported separately, never added to the rate;
  disorder-averaged    the final-state energy is averaged over a Gaussian
                       or Lorentzian distribution, equivalent to a
                       characteristic-function factor in the integrand;
  m-FGR-2              Kubo-Anderson damping from exponentially
                       correlated Gaussian energy noise plus exponential
                       coupling-noise decay.

Exactly one taming mechanism may be selected per RateSpec; selecting
none yields m-FGR-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bath import BathModel, Lineshape, ModelError, ConvergenceError, c_r_infinity
from .quad import (
    IntegralResult,
    OscIntegralSpec,
    integrate_oscillatory,
    integrate_window,
    STATUS_CONVERGED,
)

__all__ = [
    "DisorderModel",
    "FluctuationModel",
    "RateSpec",
    "RateResult",
    "kappa_normalize",
    "rate_vs_time",
    "fgr_damped",
    "m_fgr_1",
    "fgr_disorder_avg",
    "m_fgr_2",
    "compute_rate",
]

GAUSSIAN = "gaussian"
LORENTZIAN = "lorentzian"


@dataclass(frozen=True)
class DisorderModel:
    """Static distribution of the final-state energy about its nominal value.

    kind "gaussian" with standard deviation `width` (ensemble of static
    disorder) or "lorentzian" with half-width `width` (finite-lifetime
    final state).
    """

    kind: str
    width: float

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, LORENTZIAN):
            raise ModelError(f"disorder kind must be '{GAUSSIAN}' or '{LORENTZIAN}'")
        if not (self.width > 0):
            raise ModelError("disorder width must be > 0")

    def characteristic(self, t):
        """E[e^{i (E2_nom - E2) t}] for the centered distribution (real)."""
        t = np.asarray(t, dtype=float)
        if self.kind == GAUSSIAN:
            return np.exp(-0.5 * (self.width * t) ** 2)
        return np.exp(-self.width * t)

    def density(self, offset: float) -> float:
        """Probability density at `offset` from the distribution center."""
        if self.kind == GAUSSIAN:
            s = self.width
            return math.exp(-0.5 * (offset / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        g = self.width
        return g / (math.pi * (offset**2 + g**2))


@dataclass(frozen=True)
class FluctuationModel:
    """Stochastic modulation of the gap and of the coupling.

    tau_e: correlation time of the Gaussian energy-gap noise (1/omega_c).
    dE_sq: stationary gap-noise variance <dE^2> ((hbar omega_c)^2).
    tau_f: coupling-noise correlation time; math.inf means no coupling noise.
    """

    tau_e: float
    dE_sq: float
    tau_f: float = math.inf

    def __post_init__(self):
        if not (self.tau_e > 0):
            raise ModelError("tau_e must be > 0")
        if self.dE_sq < 0:
            raise ModelError("<dE^2> must be >= 0")
        if not (self.tau_f > 0):
            raise ModelError("tau_f must be > 0 (math.inf disables coupling noise)")

    @property
    def gamma_e(self) -> float:
        return 1.0 / self.tau_e

    @property
    def gamma_f(self) -> float:
        return 0.0 if math.isinf(self.tau_f) else 1.0 / self.tau_f

    def damping_exponent(self, t):
        """Kubo-Anderson exponent (t/tau_e - (1 - e^{-t/tau_e})) <dE^2> tau_e^2
        plus t/tau_f.  Interpolates between <dE^2> t^2/2 (static) and
        tau_e <dE^2> t (motionally narrowed)."""
        t = np.asarray(t, dtype=float)
        x = t / self.tau_e
        # x + expm1(-x) = x - (1 - e^-x), cancellation-safe for small x
        kubo = (x + np.expm1(-x)) * self.dE_sq * self.tau_e**2
        return kubo + self.gamma_f * t


@dataclass(frozen=True)
class RateSpec:
    """Inputs of one rate evaluation.

    delta_E = E1_tilde - E2_tilde (> 0 means downhill transfer); J_sq is
    the coupling strength |J|^2.  At most one of gamma_d / disorder /
    fluctuation selects the variant; none selected means m-FGR-1.
    """

    bath: BathModel
    delta_E: float
    J_sq: float = 1.0
    gamma_d: Optional[float] = None
    disorder: Optional[DisorderModel] = None
    fluctuation: Optional[FluctuationModel] = None

    def __post_init__(self):
        if not (self.J_sq > 0):
            raise ModelError("coupling strength |J|^2 must be > 0")
        extras = [self.gamma_d is not None, self.disorder is not None, self.fluctuation is not None]
        if sum(extras) > 1:
            raise ModelError(
                "at most one of gamma_d, disorder, fluctuation may be set; "
                "they select mutually exclusive rate variants"
            )
        if self.gamma_d is not None and not (self.gamma_d > 0):
            raise ModelError("gamma_d must be > 0 when given")

    @property
    def variant(self) -> str:
        if self.fluctuation is not None:
            return "m-fgr-2"
        if self.disorder is not None:
            return "fgr-disorder-avg"
        if self.gamma_d is not None:
            return "fgr-damped"
        return "m-fgr-1"


@dataclass
class RateResult:
    """A rate in omega_c units plus the paper-style dimensionless kappa."""

    k: float
    kappa: float
    variant: str
    diagnostics: IntegralResult
    delta_weight: float = 0.0          # m-FGR-1 delta-term weight, reported, never added
    decomposed_k: Optional[float] = None  # disorder-average cross-check route


def kappa_normalize(k: float, bath: BathModel, J_sq: float) -> float:
    """kappa = hbar sqrt(k_B T lam) / (sqrt(pi) |J|^2) * k, with k_B T = 1/theta."""
    return math.sqrt(bath.lam / bath.theta) / (math.sqrt(math.pi) * J_sq) * k


def _lineshape_for(spec: RateSpec, lineshape: Optional[Lineshape]) -> Lineshape:
    if lineshape is None:
        return Lineshape(spec.bath)
    if lineshape.bath != spec.bath:
        raise ModelError("lineshape was built for a different bath model")
    return lineshape


def _kernel_envelope(spec: RateSpec, ls: Lineshape):
    """Envelope of the variant's integrand (everything except e^{i dE t})."""
    if spec.variant == "fgr-damped":
        gd = spec.gamma_d
        return lambda t: np.exp(-gd * np.asarray(t, dtype=float) - ls(t))
    if spec.variant == "fgr-disorder-avg":
        dis = spec.disorder
        return lambda t: dis.characteristic(t) * np.exp(-ls(t))
    if spec.variant == "m-fgr-2":
        fl = spec.fluctuation
        return lambda t: np.exp(-fl.damping_exponent(t) - ls(t))
    e_inf = math.exp(-ls.c_r_infinity)  # 0 when divergent
    return lambda t: np.exp(-ls(t)) - e_inf


def _run(spec: RateSpec, envelope, **quad_kw) -> IntegralResult:
    osc = OscIntegralSpec(phase_frequency=spec.delta_E, envelope=envelope, **quad_kw)
    return integrate_oscillatory(osc)


def _result(spec: RateSpec, res: IntegralResult, **extra) -> RateResult:
    k = 2.0 * spec.J_sq * res.value
    return RateResult(
        k=k,
        kappa=kappa_normalize(k, spec.bath, spec.J_sq),
        variant=spec.variant,
        diagnostics=res,
        **extra,
    )


def rate_vs_time(spec: RateSpec, t_grid, lineshape: Optional[Lineshape] = None):
    """Finite-time rate k(t) = 2|J|^2 Re int_0^t e^{i dE tau - C(tau)} dtau.

    Evaluated cumulatively over an ascending grid; damping or disorder
    factors of the spec are included in the integrand, so the t -> inf
    limit matches the corresponding steady-state variant.  Fluctuation
    specs are time-dependent and are handled by the stochastic layer
    instead.
    """
    if spec.fluctuation is not None:
        raise ModelError("rate_vs_time applies to time-independent variants only")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ModelError("t_grid must be a non-empty 1-d array")
    if np.any(np.diff(t_grid) < 0) or t_grid[0] < 0:
        raise ModelError("t_grid must be ascending and non-negative")
    ls = _lineshape_for(spec, lineshape)
    if spec.variant == "m-fgr-1":
        envelope = lambda t: np.exp(-ls(t))  # plain kernel, no subtraction
    else:
        envelope = _kernel_envelope(spec, ls)
    out = np.empty_like(t_grid)
    cum = 0.0 + 0.0j
    prev = 0.0
    for i, ti in enumerate(t_grid):
        if ti > prev:
            seg, _ = integrate_window(envelope, spec.delta_E, prev, ti)
            cum += seg
            prev = ti
        out[i] = 2.0 * spec.J_sq * cum.real
    return out


def fgr_damped(spec: RateSpec, lineshape: Optional[Lineshape] = None, **quad_kw) -> RateResult:
    """Conventional FGR with an artificial convergence factor e^{-gamma_d t}."""
    if spec.gamma_d is None:
        raise ModelError("fgr_damped requires gamma_d in the spec")
    ls = _lineshape_for(spec, lineshape)
    res = _run(spec, _kernel_envelope(spec, ls), **quad_kw)
    return _result(spec, res)


def m_fgr_1(spec: RateSpec, lineshape: Optional[Lineshape] = None, **quad_kw) -> RateResult:
    """Regularized FGR: the non-decaying integrand component is subtracted.

    k = 2|J|^2 Re int_0^inf e^{i dE t} (e^{-C(t)} - e^{-C_{R,s}}) dt.  The
    omitted delta-function term is reported as delta_weight =
    2 pi |J|^2 e^{-C_{R,s}} (zero for divergent C_{R,s}, in which case
    the expression is the plain convergent FGR rate).
    """
    if spec.variant != "m-fgr-1":
        spec = RateSpec(bath=spec.bath, delta_E=spec.delta_E, J_sq=spec.J_sq)
    ls = _lineshape_for(spec, lineshape)
    res = _run(spec, _kernel_envelope(spec, ls), **quad_kw)
    if res.status != STATUS_CONVERGED:
        raise ConvergenceError(
            f"m-FGR-1 integral ended with status {res.status!r} "
            f"(t_truncation={res.t_truncation}, error={res.error_estimate:.3e})",
            value=res.value,
            error_estimate=res.error_estimate,
        )
    delta_weight = 2.0 * math.pi * spec.J_sq * math.exp(-ls.c_r_infinity)
    return _result(spec, res, delta_weight=delta_weight)


def fgr_disorder_avg(spec: RateSpec, lineshape: Optional[Lineshape] = None, **quad_kw) -> RateResult:
    """FGR averaged over a static distribution of the final-state energy.

    Primary route: the average inserts the distribution's characteristic
    function into the time integrand, which converges for every family.
    The decomposed route (regularized integral averaged the same way,
    plus the delta-term weight times the density at the initial energy)
    is evaluated as well and reported in decomposed_k for cross-checking.
    """
    if spec.disorder is None:
        raise ModelError("fgr_disorder_avg requires a disorder model in the spec")
    ls = _lineshape_for(spec, lineshape)
    res = _run(spec, _kernel_envelope(spec, ls), **quad_kw)

    e_inf = math.exp(-ls.c_r_infinity)
    dis = spec.disorder
    reg_envelope = lambda t: dis.characteristic(t) * (np.exp(-ls(t)) - e_inf)
    reg = _run(spec, reg_envelope, **quad_kw)
    decomposed = 2.0 * spec.J_sq * reg.value + (
        2.0 * math.pi * spec.J_sq * e_inf * dis.density(spec.delta_E)
    )
    return _result(spec, res, decomposed_k=decomposed)


def m_fgr_2(spec: RateSpec, lineshape: Optional[Lineshape] = None, **quad_kw) -> RateResult:
    """Fluctuation-damped FGR (Kubo-Anderson modulation).

    k = 2|J|^2 Re int_0^inf e^{i <dE> t}
        exp{-(t/tau_e - (1-e^{-t/tau_e})) <dE^2> tau_e^2 - t/tau_f - C(t)} dt.

    The fluctuation damping keeps the integral well-defined even when
    C_{R,s} is finite; delta_E is the mean (polaron-absorbed) gap.
    """
    if spec.fluctuation is None:
        raise ModelError("m_fgr_2 requires a fluctuation model in the spec")
    ls = _lineshape_for(spec, lineshape)
    res = _run(spec, _kernel_envelope(spec, ls), **quad_kw)
    return _result(spec, res)


def compute_rate(spec: RateSpec, lineshape: Optional[Lineshape] = None, **quad_kw) -> RateResult:
    """Dispatch to the variant selected by the spec."""
    fn = {
        "fgr-damped": fgr_damped,
        "fgr-disorder-avg": fgr_disorder_avg,
        "m-fgr-2": m_fgr_2,
        "m-fgr-1": m_fgr_1,
    }[spec.variant]
    return fn(spec, lineshape=lineshape, **quad_kw)
