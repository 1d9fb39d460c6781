"""Adaptive integration of semi-infinite oscillatory rate integrals.

Evaluates Re int_0^inf e^{i*Omega*t} g(t) dt for a smooth complex
envelope g(t) that decays (exponentially, as a Gaussian, or as a power
law) or, in the degenerate cases the caller must handle, stalls at a
plateau.  The integrand is marched panel by panel, each panel integrated
by 15-point Gauss-Legendre with an embedded 7-point error estimate;
panel width starts at min(pi/|Omega|, 0.5/omega_c) and adapts to the
local error.

Termination:

  converged      envelope magnitude below abs_tol/10 over three
                 consecutive panels, or the estimated tail (asymptotic
                 integration-by-parts correction for Omega != 0, fitted
                 power-law tail for Omega = 0) is within tolerance.  The
                 correction is added to the value.
  tail-dominated the envelope has stopped decaying but the oscillation
                 bounds the tail; the reported error estimate includes
                 that bound.
  cap-reached    t_cap was hit first (e.g. a non-decaying envelope at
                 Omega = 0).  The value is the honest partial integral;
                 callers decide whether to damp, regularize, or report
                 divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "OscIntegralSpec",
    "IntegralResult",
    "EnvelopeError",
    "integrate_oscillatory",
    "integrate_window",
    "STATUS_CONVERGED",
    "STATUS_TAIL_DOMINATED",
    "STATUS_CAP_REACHED",
]

STATUS_CONVERGED = "converged"
STATUS_TAIL_DOMINATED = "tail-dominated"
STATUS_CAP_REACHED = "cap-reached"

_X15, _W15 = np.polynomial.legendre.leggauss(15)
_X7, _W7 = np.polynomial.legendre.leggauss(7)

_PANEL_BUDGET = 500_000  # hard cap on accepted panels


class EnvelopeError(RuntimeError):
    """Envelope returned a non-finite value; carries the offending time."""

    def __init__(self, t_bad: float):
        super().__init__(f"envelope returned NaN/Inf at t = {t_bad}")
        self.t_bad = t_bad


@dataclass(frozen=True)
class OscIntegralSpec:
    """One semi-infinite oscillatory integral.

    phase_frequency: oscillation rate Omega (an energy over hbar).
    envelope: callable mapping an ndarray of times to complex values.
    """

    phase_frequency: float
    envelope: Callable[[np.ndarray], np.ndarray]
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    t_cap: float = 1e4

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.t_cap > 0):
            raise ValueError("abs_tol, rel_tol and t_cap must all be > 0")


@dataclass
class IntegralResult:
    value: float
    error_estimate: float
    t_truncation: float
    status: str

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED


def _eval_envelope(envelope, t):
    g = np.asarray(envelope(t), dtype=complex)
    if not np.all(np.isfinite(g)):
        bad = np.asarray(t)[~np.isfinite(g)]
        raise EnvelopeError(float(np.atleast_1d(bad)[0]))
    return g


def _panel(envelope, omega, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    t15 = mid + half * _X15
    g15 = _eval_envelope(envelope, t15)
    i15 = half * np.sum(_W15 * np.exp(1j * omega * t15) * g15)
    t7 = mid + half * _X7
    g7 = _eval_envelope(envelope, t7)
    i7 = half * np.sum(_W7 * np.exp(1j * omega * t7) * g7)
    return i15, abs(i15 - i7), float(np.max(np.abs(g15)))


class _March:
    """Shared panel-marching state for both integration entry points."""

    def __init__(self, envelope, omega, abs_tol, rel_tol):
        self.envelope = envelope
        self.omega = omega
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.total = 0.0 + 0.0j
        self.err_quad = 0.0
        self.t = 0.0
        self.n_panels = 0
        self.log_t: list[float] = []
        self.log_g: list[float] = []
        w_osc = np.pi / abs(omega) if omega else np.inf
        self.w_osc = w_osc
        self.w = min(w_osc, 0.5)
        self.w_min_base = 1e-9

    def tol_value(self):
        return max(self.abs_tol, self.rel_tol * abs(self.total.real))

    def _w_cap(self):
        if self.omega:
            return self.w_osc
        return max(0.5, self.t / 6.0)

    def step(self, t_stop):
        """Advance by one accepted panel (never past t_stop); returns gmax."""
        while True:
            b = min(self.t + self.w, t_stop)
            value, err, gmax = _panel(self.envelope, self.omega, self.t, b)
            budget = self.tol_value() / 32.0
            if err > budget and (b - self.t) > self.w_min_base * max(1.0, self.t):
                self.w *= 0.5
                continue
            self.total += value
            self.err_quad += err
            self.t = b
            self.n_panels += 1
            self.log_t.append(b)  # panel end; only used for decay fits
            self.log_g.append(gmax)
            if err < budget / 128.0:
                self.w = min(self.w * 1.5, self._w_cap())
            if self.n_panels > _PANEL_BUDGET:
                raise RuntimeError("oscillatory integral exceeded the panel budget")
            return gmax


def _decay_exponent(march: _March):
    """Fit |g| ~ a t^-p (1 + c/t) over the most recent span.

    The 1/t basis column removes the O(1/T) bias a plain log-log slope
    would carry from subleading terms.  Returns (p, fit_rms) or None.
    """
    t_arr = np.asarray(march.log_t)
    g_arr = np.asarray(march.log_g)
    lo = march.t / 4.0
    sel = (t_arr >= lo) & (g_arr > 0.0)
    if np.count_nonzero(sel) < 5:
        return None
    ts = t_arr[sel]
    y = np.log(g_arr[sel])
    x = np.log(ts)
    if x[-1] - x[0] < 0.2:
        return None
    design = np.vstack([np.ones(ts.size), x, 1.0 / ts]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    rms = float(np.sqrt(np.mean((y - fitted) ** 2)))
    return -float(coef[1]), rms


def _ibp_correction(march: _March):
    """Asymptotic tail of int_T^inf e^{i Omega t} g dt by parts.

    tail = -e^{i Omega T} [ g(T)/(i Omega) - g'(T)/(i Omega)^2 + ... ];
    valid when the envelope varies slowly over one oscillation.  Returns
    (correction, residual_estimate, g0_abs) or None when the series is
    not safely decreasing.
    """
    om = march.omega
    T = march.t
    h = max(min(0.05 * march.w, 0.05 * T), 1e-6)
    g = _eval_envelope(march.envelope, np.array([T - h, T, T + h]))
    g0 = g[1]
    g1 = (g[2] - g[0]) / (2.0 * h)
    g2 = (g[2] - 2.0 * g[1] + g[0]) / h**2
    iom = 1j * om
    term0 = g0 / iom
    term1 = g1 / iom**2
    # require the asymptotic series to be clearly decreasing
    if abs(term1) > 0.3 * abs(term0) + 1e-300:
        return None
    if abs(g2) / abs(om) ** 3 > 0.3 * abs(term1) + 1e-300:
        return None
    corr = -np.exp(1j * om * T) * (term0 - term1)
    resid = 2.0 * abs(g2) / abs(om) ** 3 + 1e-12 * abs(corr)
    return corr, resid, abs(g0)


def _powerlaw_tail(march: _March, p: float):
    """Two-term fitted tail int_T^inf (a/t^p + b/t^{p+1}) dt, complex."""
    T = march.t
    ts = np.linspace(0.78 * T, T, 8)
    g = _eval_envelope(march.envelope, ts)
    y = g * ts**p
    design = np.vstack([np.ones(ts.size), 1.0 / ts]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    a, b = coef
    return a / ((p - 1.0) * T ** (p - 1.0)) + b / (p * T**p)


def _is_decaying(march: _March) -> bool:
    t_arr = np.asarray(march.log_t)
    g_arr = np.asarray(march.log_g)
    half = march.t / 2.0
    older = g_arr[(t_arr >= half * 0.7) & (t_arr <= half * 1.3)]
    recent = g_arr[t_arr >= march.t - max(4 * march.w, 0.1 * march.t)]
    if older.size == 0 or recent.size == 0:
        return True
    return float(np.max(recent)) <= 0.9 * float(np.max(older)) + 1e-300


def integrate_oscillatory(spec: OscIntegralSpec) -> IntegralResult:
    """Re int_0^inf e^{i Omega t} g(t) dt with convergence diagnostics."""
    march = _March(spec.envelope, spec.phase_frequency, spec.abs_tol, spec.rel_tol)
    quiet = 0
    quiet_level = spec.abs_tol / 10.0
    check_every = 4
    prev_corrected = None  # (corrected value, truncation time) for the Omega = 0 tail
    while march.t < spec.t_cap:
        gmax = march.step(spec.t_cap)

        if gmax < quiet_level:
            quiet += 1
            if quiet >= 3:
                tail = quiet_level * max(10.0 * march.w, 1.0)
                return IntegralResult(
                    value=march.total.real,
                    error_estimate=march.err_quad + tail,
                    t_truncation=march.t,
                    status=STATUS_CONVERGED,
                )
        else:
            quiet = 0

        if march.n_panels % check_every or march.t < max(5.0, 4.0 * min(march.w_osc, 0.5)):
            continue

        tol = march.tol_value()
        if spec.phase_frequency:
            ibp = _ibp_correction(march)
            if ibp is None:
                continue
            corr, resid, g0_abs = ibp
            if march.err_quad + resid > 0.5 * tol:
                continue
            decaying = _is_decaying(march)
            value = (march.total + corr).real
            if decaying:
                return IntegralResult(
                    value=value,
                    error_estimate=march.err_quad + resid,
                    t_truncation=march.t,
                    status=STATUS_CONVERGED,
                )
            # plateau: the cancellation bound is the correction itself
            return IntegralResult(
                value=value,
                error_estimate=march.err_quad + resid + abs(corr),
                t_truncation=march.t,
                status=STATUS_TAIL_DOMINATED,
            )
        else:
            fit = _decay_exponent(march)
            if fit is None:
                continue
            p, rms = fit
            if p <= 1.05 or rms > 0.3:
                continue  # plateau or too-slow decay: run to the cap
            tail = _powerlaw_tail(march, p)
            cand = march.total + tail
            if prev_corrected is not None and march.t >= 1.5 * prev_corrected[1]:
                # empirical error: corrected values at two truncation times
                emp = abs(cand.real - prev_corrected[0])
                err_tail = 1.5 * emp + 1e-5 * abs(tail)
                if march.err_quad + err_tail <= tol:
                    return IntegralResult(
                        value=cand.real,
                        error_estimate=march.err_quad + err_tail,
                        t_truncation=march.t,
                        status=STATUS_CONVERGED,
                    )
            if prev_corrected is None or march.t >= 1.5 * prev_corrected[1]:
                prev_corrected = (cand.real, march.t)

    return IntegralResult(
        value=march.total.real,
        error_estimate=march.err_quad + float(np.mean(march.log_g[-3:])) * min(
            1.0 / abs(spec.phase_frequency) if spec.phase_frequency else spec.t_cap,
            spec.t_cap,
        ),
        t_truncation=march.t,
        status=STATUS_CAP_REACHED,
    )


def integrate_window(envelope, phase_frequency, t_lo, t_hi, abs_tol=1e-12, rel_tol=1e-10):
    """int_{t_lo}^{t_hi} e^{i Omega t} g(t) dt over a finite window.

    Same panel machinery without the semi-infinite termination logic.
    Returns (complex value, error estimate).
    """
    if t_hi < t_lo:
        raise ValueError("window must have t_hi >= t_lo")
    march = _March(envelope, phase_frequency, abs_tol, rel_tol)
    march.t = float(t_lo)
    while march.t < t_hi:
        march.step(float(t_hi))
    return march.total, march.err_quad
