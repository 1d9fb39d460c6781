"""Golden-rule transition rates for a two-state system in a harmonic bath.

Internal units: hbar = 1, omega_c = 1.  Energies are in hbar*omega_c,
times in 1/omega_c, rates in omega_c.
"""

from .bath import (
    BathModel,
    ConvergenceError,
    Lineshape,
    ModelError,
    c_r_infinity,
    lineshape_imag_analytic,
    lineshape_quadrature,
    lineshape_real_analytic,
    reorganization_energy,
    spectral_density,
)
from .quad import (
    IntegralResult,
    OscIntegralSpec,
    STATUS_CAP_REACHED,
    STATUS_CONVERGED,
    STATUS_TAIL_DOMINATED,
    integrate_oscillatory,
    integrate_window,
)
from .rates import (
    DisorderModel,
    FluctuationModel,
    RateResult,
    RateSpec,
    compute_rate,
    fgr_damped,
    fgr_disorder_avg,
    kappa_normalize,
    m_fgr_1,
    m_fgr_2,
    rate_vs_time,
)
from .stochastic import (
    MCEstimate,
    MCPopulation,
    OUProcess,
    PopulationCurve,
    TelegraphProcess,
    TrajectoryEnsemble,
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

__version__ = "0.1.0"
