"""Material transport: outlet gas velocity, Muschelknautz separation model,
saltation and the port fluxes.

Velocities are positive outward at every port.
"""
import logging
from dataclasses import dataclass
from math import inf, log, pi, sqrt

import numpy as np

logger = logging.getLogger(__name__)

DARCY_COEFF = 0.316
DIRECT_GAS_FRACTION = 0.9  # 10 % of the gas short-circuits to the outlet


@dataclass(frozen=True)
class FlowParameters:
    """Separation and outflow correction parameters.

    ``f_N`` is stored directly; :meth:`from_inverse` accepts ``1/f_N`` as
    tabulated for the calibrated presets.
    """

    d_m: float = 5e-5
    d_med: float = 5e-5
    d_p: float = 5e-5
    f_c: float = 1.0
    f_N: float = 1.0
    f_D_scale: float = 1.0
    u_mf: float = 0.16

    def __post_init__(self):
        for name in ("d_m", "d_med", "d_p", "f_c", "f_N", "f_D_scale", "u_mf"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def f_N_inv(self):
        return 1.0 / self.f_N

    @classmethod
    def from_inverse(cls, f_N_inv, **kw):
        return cls(f_N=1.0 / f_N_inv, **kw)


def inlet_load_ratio(M_s, C_s_in, M_g, C_g_in):
    """Solid-to-gas mass ratio c_0 of the inflow."""
    gas = float(np.dot(M_g, C_g_in))
    if gas <= 0:
        return 0.0
    return float(np.dot(M_s, C_s_in)) / gas


def gas_outlet_velocity(P, P_out, rho_m, mu_m, D_x, h_x, f_D_scale=1.0):
    """Turbulent Darcy-Weisbach velocity through the vortex finder, m/s.

    The Blasius friction coefficient is multiplied by ``f_D_scale``.
    """
    dP = P_out - P
    if dP == 0.0:
        return 0.0
    coeff = 2.0 / (DARCY_COEFF * f_D_scale)
    base = coeff * (D_x**5 / (mu_m * rho_m**3)) ** 0.25 * abs(dP) / h_x
    return base ** (4.0 / 7.0) * (1.0 if -dP / h_x > 0 else -1.0)


def inlet_constriction(beta, c0):
    """Inlet constriction coefficient alpha for width ratio ``beta``."""
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if c0 < 0:
        raise ValueError("c0 must be non-negative")
    b = beta * (2.0 - beta)
    inner = sqrt(1.0 - b * (1.0 - beta**2) / (1.0 + c0))
    return (1.0 - sqrt(1.0 - b * inner)) / beta


def wall_friction_factor(c0):
    return 0.005 * (1.0 + 3.0 * sqrt(c0))


def wall_tangential_velocity(v_in, r_in, r_c, alpha):
    return r_in / (r_c * alpha) * v_in


def tangential_velocity(r, v_in, geo, derived, alpha, c0, f_S=None):
    """Muschelknautz tangential velocity at radius ``r``, m/s.

    ``f_S`` defaults to the load-dependent wall friction factor.
    """
    if not 0 < r <= geo.r_c:
        raise ValueError("radius must lie in (0, r_c]")
    if f_S is None:
        f_S = wall_friction_factor(c0)
    # v_theta_w / v_in, finite as v_in -> 0
    ratio = geo.r_in / (geo.r_c * alpha)
    v_w = ratio * v_in
    drag = f_S * derived.A_sep * ratio / (2.0 * geo.A_in)
    rr = geo.r_c / r
    return rr * v_w / (1.0 + drag * sqrt(rr))


def separation_velocity(d_m, rho_s0, rho_g, mu_m, v_theta, r_eq):
    """Radial particle velocity at the wall of the equivalent cylinder, m/s.

    Returns 0 when the particles are not denser than the gas.
    """
    d_rho = rho_s0 - rho_g
    if d_rho <= 0:
        logger.debug("no separation: particle density %.3g <= gas density %.3g", rho_s0, rho_g)
        return 0.0
    return d_m**2 * d_rho / (18.0 * mu_m) * v_theta**2 / r_eq


def cut_size(mu_m, A_in, v_in, d_rho, h_i, v_theta_rx):
    """Particle cut size d* of the inner vortex, m (inf when nothing separates)."""
    if d_rho <= 0 or v_theta_rx == 0:
        return inf
    return sqrt(18.0 * mu_m * DIRECT_GAS_FRACTION * A_in * v_in
                / (d_rho * 2.0 * pi * h_i * v_theta_rx**2))


def loading_exponent(c0):
    if c0 >= 0.1:
        return 0.15
    return -0.11 - 0.10 * log(c0)


def loading_limit(f_c, d_star, d_med, c0):
    """Loading limit c_0L (solid/gas mass ratio)."""
    if c0 <= 0:
        return 0.0
    return f_c * 0.025 * (d_star / d_med) * (10.0 * c0) ** loading_exponent(c0)


def saltation_efficiency(c0, c0L):
    """Fraction of inflowing solids separated at the inlet."""
    if c0 <= 0:
        return 0.0
    return 1.0 - min(1.0, c0L / c0)


def material_fluxes(C_s, C_g, C_s_in, C_g_in, v_in, v_gx, v_sep, eta_sal, f_N):
    """Per-species port fluxes in mol/(m^2 s).

    Returns a dict with ``s_in``, ``g_in``, ``s_x``, ``g_x`` and ``s_sep``.
    """
    C_s = np.asarray(C_s, dtype=float)
    C_g = np.asarray(C_g, dtype=float)
    v_sx = f_N * v_gx
    return {
        "s_in": (1.0 - eta_sal) * v_in * np.asarray(C_s_in, dtype=float),
        "g_in": v_in * np.asarray(C_g_in, dtype=float),
        "s_x": v_sx * C_s,
        "g_x": v_gx * C_g,
        "s_sep": v_sep * C_s,
    }


def total_efficiency(mdot_sep, mdot_in):
    """Separated over inflowing solid mass rate."""
    if not mdot_in > 0:
        raise ValueError("inflow mass rate must be positive")
    return mdot_sep / mdot_in
