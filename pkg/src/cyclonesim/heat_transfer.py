"""Convective and radiative heat flows between mixture, lining, shell and
surroundings."""
import logging
from dataclasses import dataclass

from .geometry import curved_wall_depth

logger = logging.getLogger(__name__)

SIGMA = 5.670374419e-8
NU_CONSTANT = 702.8


@dataclass(frozen=True)
class HeatTransferParams:
    eps_p: float = 0.9
    eps_r: float = 0.8
    eps_w: float = 0.8
    eps_e: float = 1.0
    sigma: float = SIGMA
    # optional outside film coefficient, W/(m^2 K); None keeps the
    # conduction-only shell/environment coupling
    h_ext: float = None
    # no exchange between shell and surroundings (energy audits)
    adiabatic: bool = False

    def __post_init__(self):
        for name in ("eps_p", "eps_r", "eps_w", "eps_e"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")

    @property
    def F_pr(self):
        return 1.0 / (1.0 / self.eps_p + 1.0 / self.eps_r - 1.0)


def _depth(a, b):
    # layer depth is direction-free; order the radii inner -> outer
    return curved_wall_depth(min(a, b), max(a, b))


def overall_convection_coefficients(geo, derived, beta_m, k_r, k_w, h_ext=None):
    """Series conductances (A*beta) in W/K: mixture-lining, lining-shell,
    shell-environment.

    Each phase temperature sits at the middle of its layer.
    """
    if not beta_m > 0:
        raise ValueError("mixture convection coefficient must be positive")
    r_c, r_r, r_w = geo.r_c, geo.r_r, geo.r_w
    A_c, A_r, A_w = derived.A_c, derived.A_r, derived.A_w
    mid_r = 0.5 * (r_c + r_r)
    mid_w = 0.5 * (r_r + r_w)
    cr = 1.0 / (1.0 / (A_c * beta_m) + _depth(r_c, mid_r) / (k_r * 0.5 * (A_c + A_r)))
    rw = 1.0 / (_depth(r_r, mid_r) / (k_r * A_r) + _depth(mid_w, r_r) / (k_w * 0.5 * (A_r + A_w)))
    we_cond = k_w * A_w / _depth(r_w, mid_w)
    if h_ext is None:
        we = we_cond
    else:
        we = 1.0 / (1.0 / we_cond + 1.0 / (h_ext * A_w))
    return {"cr": cr, "rw": rw, "we": we}


def mixture_convection_coefficient(k_m, D_H, Nu_m):
    return k_m / D_H * Nu_m


def nusselt(v_in, u_mf, d_c, d_p, Re, rho_s, rho_g, cp_s, cp_g, k_s, k_g, dP_c):
    """Mixture Nusselt number of the cyclone (gas-solid correlation)."""
    if v_in <= 0 or rho_g <= 0:
        logger.debug("no inflow: Nusselt number falls back to its constant term")
        return NU_CONSTANT
    g = v_in / u_mf * d_c / d_p * Re
    if rho_s <= 0 or cp_g <= 0 or k_g <= 0:
        ratio = 0.0
    else:
        ratio = rho_s / rho_g * cp_s / cp_g * k_s / k_g
    return NU_CONSTANT + 9.5e-8 * g + (0.03 + 1.2e-13 * g) * ratio * dP_c / (0.5 * rho_g * v_in**2)


def convective_heats(T_m, T_r, T_w, T_e, coefficients):
    """Signed convective flows in W, positive from inner to outer."""
    return {
        "cr": coefficients["cr"] * (T_m - T_r),
        "rw": coefficients["rw"] * (T_r - T_w),
        "we": coefficients["we"] * (T_w - T_e),
    }


def radiative_heats(T_m, T_r, T_w, T_e, params, A_p, A_w):
    """Particle-lining and shell-environment radiation, W.

    The particle temperature is the mixture temperature ``T_m``.
    """
    s = params.sigma
    return {
        "cr": s * A_p * params.F_pr * (T_m**4 - T_r**4),
        "we": s * A_w * (params.eps_w * T_w**4 - params.eps_e * T_e**4),
    }
