"""Fit NLS kinetics to coercive-voltage vs. slew-rate targets."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .characterization import ExtractionError, peak_voltage, run_triangle_sweep
from .ftj import FtjStack, NlsParams, effective_thickness

VC_TOL = 0.1


class CalibrationError(RuntimeError):
    def __init__(self, message: str, residuals):
        super().__init__(f"{message}; residuals (V): {list(np.round(residuals, 4))}")
        self.residuals = list(residuals)


@dataclass
class CalibrationResult:
    nls: NlsParams
    targets: list[tuple[float, float]]
    achieved: list[float]
    residuals: list[float]
    evaluations: int


def _ramp_switch_voltage(tau0: float, ea: float, n: float, slew: float, L: float) -> float:
    """Voltage at which a single median domain flips under a linear ramp from 0 V."""
    # progress(V) = (L / slew) * integral_0^E dE' / tau(E')
    def progress(v):
        e_end = v / L

        def f(e):
            if e <= 0:
                return 0.0
            x = (ea / e) ** n
            return 0.0 if x > 700 else math.exp(-x) / tau0
        val, _ = integrate.quad(f, 0.0, e_end, limit=200)
        return val * L / slew
    lo, hi = 1e-3, 1.0
    while progress(hi) < 1.0:
        hi *= 2
        if hi > 1e4:
            return float("inf")
    return optimize.brentq(lambda v: progress(v) - 1.0, lo, hi, xtol=1e-6)


def simulated_vc(stack: FtjStack, slew: float, amplitude: float = 5.5, dv_step: float = 5e-3) -> float:
    """Positive switching-peak voltage of a steady-state triangle sweep."""
    tr = run_triangle_sweep(stack, amplitude, slew, 2, dv_step)
    return peak_voltage(tr, 1, stack)


def _initial_guess(targets, stack: FtjStack, fit_tau0: bool):
    L = effective_thickness(stack)
    n = stack.nls.merz_exp
    vbi = stack.v_bi

    def resid(x):
        tau0 = stack.nls.tau0 * math.exp(x[0]) if fit_tau0 else stack.nls.tau0
        ea = stack.nls.ea_mean * math.exp(x[-1])
        return [_ramp_switch_voltage(tau0, ea, n, s, L) + vbi - vc for s, vc in targets]

    x0 = [0.0, 0.0] if fit_tau0 else [0.0]
    sol = optimize.least_squares(resid, x0, bounds=(-12, 12), xtol=1e-10)
    return sol.x


def calibrate_nls(targets, stack: FtjStack, amplitude: float = 5.5, dv_step: float = 5e-3,
                  max_evals: int = 60, tol: float = VC_TOL) -> CalibrationResult:
    """Fit ``tau0`` and ``ea_mean`` so simulated peak voltages hit ``targets``.

    ``targets`` is a list of ``(slew V/s, vc V)``.  With a single target only
    ``ea_mean`` is fitted and ``tau0`` keeps its current value.  Raises
    :class:`CalibrationError` if any residual stays above ``tol``.
    """
    targets = [(float(s), float(v)) for s, v in targets]
    if not targets:
        raise ValueError("need at least one target")
    slews = [s for s, _ in targets]
    if min(slews) <= 0 or len(set(slews)) != len(slews):
        raise ValueError("slews must be positive and distinct")
    fit_tau0 = len(targets) > 1
    x_guess = _initial_guess(targets, stack, fit_tau0)
    evals = 0

    def make(x):
        nls = stack.nls
        tau0 = nls.tau0 * math.exp(x[0]) if fit_tau0 else nls.tau0
        ea = nls.ea_mean * math.exp(x[-1])
        return dataclasses.replace(stack, nls=dataclasses.replace(nls, tau0=tau0, ea_mean=ea))

    def resid(x):
        nonlocal evals
        evals += 1
        st = make(x)
        out = []
        for s, vc in targets:
            try:
                out.append(simulated_vc(st, s, amplitude, dv_step) - vc)
            except ExtractionError:
                out.append(amplitude)
        return np.array(out)

    x = np.asarray(x_guess, dtype=float)
    r = resid(x)
    if np.max(np.abs(r)) > 0.25 * tol:
        sol = optimize.least_squares(resid, x, diff_step=1e-2, max_nfev=max_evals, xtol=1e-6,
                                     ftol=1e-6)
        if np.max(np.abs(sol.fun)) < np.max(np.abs(r)):
            x, r = sol.x, sol.fun
    result_stack = make(x)
    achieved = [vc + float(d) for (_, vc), d in zip(targets, r)]
    if np.max(np.abs(r)) > tol:
        raise CalibrationError("NLS calibration did not converge", r)
    return CalibrationResult(result_stack.nls, targets, achieved, [float(d) for d in r], evals)
