"""Fit the separation correction factors and the Darcy scaling of a cyclone
to target steady-state outputs.

Every residual evaluation is a steady-state solve, warm-started from the
previous one.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .dae import SolverError, report, steady_state

logger = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class CalibrationTarget:
    efficiency: float = None
    solid_density: float = None  # kg/m^3
    pressure: float = None  # Pa
    tuning: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.efficiency is not None and not 0 < self.efficiency < 1:
            raise ValueError("efficiency target must lie in (0, 1)")
        for name in ("solid_density", "pressure"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} target must be positive")


class _Steady:
    """Steady solves with warm starts carried between calls."""

    def __init__(self, system):
        self.system = system
        self.warm = None
        self.calls = 0

    def __call__(self, **flow):
        system = self.system.with_flow(**flow) if flow else self.system
        self.calls += 1
        try:
            ss = steady_state(system, *(self.warm or (None, None)))
        except SolverError:
            if self.warm is None:
                raise
            ss = steady_state(system)
        self.warm = (ss.x, ss.y)
        return ss, report(system, ss.x, ss.y)


def calibrate_separation(system, target, f_N=None, f_c=None, tol=1e-3, max_iter=100):
    """(f_N, f_c) such that the steady efficiency and solid density hit ``target``.

    Damped Newton in log-parameters with a forward-difference Jacobian.
    Starts from the system's current values unless ``f_N``/``f_c`` are given.
    """
    if target.efficiency is None or target.solid_density is None:
        raise ValueError("separation calibration needs efficiency and solid density targets")
    goal = np.array([target.efficiency, target.solid_density])
    steady = _Steady(system)
    trace = []

    def residual(u):
        fN, fc = np.exp(u)
        _, r = steady(f_N=fN, f_c=fc)
        return np.array([r["eta"], r["rho_s"]]) / goal - 1.0

    u = np.log([f_N or system.flow.f_N, f_c or system.flow.f_c])
    F = residual(u)
    for it in range(max_iter):
        trace.append((float(np.exp(u[0])), float(np.exp(u[1])), *map(float, F)))
        logger.info("separation it %d: f_N^-1=%.4g f_c=%.4g res=%s", it, np.exp(-u[0]), np.exp(u[1]), F)
        if np.max(np.abs(F)) < tol:
            return float(np.exp(u[0])), float(np.exp(u[1]))
        h = 1e-4
        J = np.column_stack([(residual(u + h * e) - F) / h for e in np.eye(2)])
        try:
            du = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            # efficiency flat in f_c (no saltation): move along f_N only
            du = np.array([-F[1] / J[1, 0] if J[1, 0] else 0.0, 0.5])
        du = np.clip(du, -1.0, 1.0)
        lam = 1.0
        while True:
            un = u + lam * du
            try:
                Fn = residual(un)
            except SolverError:
                Fn = None
            if Fn is not None and np.linalg.norm(Fn) < (1 - 1e-4 * lam) * np.linalg.norm(F):
                break
            lam *= 0.5
            if lam < 1e-3:
                if Fn is None:
                    raise CalibrationError("steady state failed along the search direction", trace)
                break
        u, F = un, Fn
    raise CalibrationError(f"no convergence after {max_iter} iterations; last residual {F}", trace)


def calibrate_pressure(system, target_P, tol=1e-4 * 1e5, scale0=None):
    """Darcy scaling such that the steady pressure equals ``target_P`` (Pa).

    Brackets the root by geometric expansion around the current scaling,
    then runs Brent's bracketed secant/bisection method.
    """
    steady = _Steady(system)

    def g(log_s):
        try:
            ss, _ = steady(f_D_scale=float(np.exp(log_s)))
        except SolverError as exc:
            raise CalibrationError(f"steady state failed at f_D_scale={np.exp(log_s):.4g} "
                                   f"while fitting {target_P:.6g} Pa: {exc}") from None
        return ss.y[3] - target_P

    u0 = np.log(scale0 or system.flow.f_D_scale)
    g0 = g(u0)
    if abs(g0) < 1e-6 * target_P:
        return float(np.exp(u0))
    step = np.log(2.0) * (-1 if g0 > 0 else 1)
    lo, glo = u0, g0
    for _ in range(40):
        hi = lo + step
        ghi = g(hi)
        if np.sign(ghi) != np.sign(g0):
            break
        lo, glo = hi, ghi
    else:
        raise CalibrationError("could not bracket the target pressure")
    a, b = sorted((lo, hi))
    u = brentq(g, a, b, xtol=1e-9, rtol=1e-12)
    P_err = abs(g(u))
    if P_err > tol:
        raise CalibrationError(f"pressure miss {P_err:.3g} Pa exceeds tolerance")
    return float(np.exp(u))


@dataclass
class CalibrationResult:
    f_N: float
    f_c: float
    f_D_scale: float
    steady: object
    outputs: dict
    rounds: int


def calibrate(system, target, max_rounds=5, tol=1e-3):
    """Alternate separation and pressure fits until both hold together."""
    if target.tuning:
        system = replace(system, reactions=system.reactions.with_tuning(target.tuning))
    for rnd in range(1, max_rounds + 1):
        f_N, f_c = calibrate_separation(system, target, tol=tol)
        system = system.with_flow(f_N=f_N, f_c=f_c)
        if target.pressure is not None:
            f_D = calibrate_pressure(system, target.pressure)
            system = system.with_flow(f_D_scale=f_D)
        ss, out = _Steady(system)()
        res = np.array([out["eta"] / target.efficiency, out["rho_s"] / target.solid_density]) - 1
        if np.max(np.abs(res)) < tol:
            return CalibrationResult(f_N, f_c, system.flow.f_D_scale, ss, out, rnd)
    raise CalibrationError(f"separation and pressure fits did not settle in {max_rounds} rounds")
