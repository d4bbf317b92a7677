"""Index-1 DAE of the cyclone: state layout, right-hand side, algebraic
closure, implicit Euler stepping, steady state and settling analysis.

Differential state ``x = [C_s, C_g, U_m, U_r, U_w]`` (mol/m^3, J/m^3) and
algebraic state ``y = [T_m, T_r, T_w, P]`` (K, Pa). The combined vector
``z = [x, y]`` is what the Newton solvers work on.
"""
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import heat_transfer as ht
from . import transport as tr
from .geometry import derive
from .kinetics import reaction_rates
from .thermo import R_GAS, PropertyDomainError, suspension_viscosity

logger = logging.getLogger(__name__)

P_AMBIENT = 101325.0
AIR = {"N2": 0.79, "O2": 0.21}


class SolverError(RuntimeError):
    """Raised when a nonlinear solve fails; carries the last iterate."""

    def __init__(self, message, z=None, residual=None):
        super().__init__(message)
        self.z = z
        self.residual = residual


class IntegrationError(SolverError):
    # SimulationResult with the samples produced before the failure
    partial = None


@dataclass(frozen=True)
class BoundaryConditions:
    v_in: float
    T_in: float
    C_s_in: np.ndarray
    C_g_in: np.ndarray
    P_out: float
    P_in: float
    T_e: float = 298.15
    false_air: float = 0.0  # m^3/s at ambient conditions
    P_amb: float = P_AMBIENT

    def __post_init__(self):
        if self.v_in < 0:
            raise ValueError("inflow velocity must be non-negative")
        if self.P_out <= 0 or self.P_in <= 0 or self.P_amb <= 0:
            raise ValueError("pressures must be positive")
        if self.T_in <= 0 or self.T_e <= 0:
            raise ValueError("temperatures must be positive")
        if np.any(np.asarray(self.C_s_in) < 0) or np.any(np.asarray(self.C_g_in) < 0):
            raise ValueError("inflow concentrations must be non-negative")


@dataclass(frozen=True)
class SolverSettings:
    dt_init: float = 0.01
    dt_min: float = 1e-6
    dt_max: float = 60.0
    growth: float = 1.5
    rtol: float = 1e-3
    newton_rtol: float = 1e-8
    max_newton: int = 12
    steady_rtol: float = 1e-10
    # initial mixture temperature (None: inlet temperature) and lining and
    # shell temperature (None: ambient)
    initial_temperature: float = None
    initial_lining_temperature: float = None
    initial_solids: float = 1.0  # mol/m^3 of every solid species


@dataclass(frozen=True)
class CycloneSystem:
    """Everything needed to evaluate the model for one cyclone run."""

    db: object
    reactions: object
    geometry: object
    flow: tr.FlowParameters
    heat: ht.HeatTransferParams
    refractory: object
    wall: object
    bc: BoundaryConditions
    settings: SolverSettings = field(default_factory=SolverSettings)

    @cached_property
    def derived(self):
        return derive(self.geometry)

    @cached_property
    def ns(self):
        return len(self.db.solid)

    @cached_property
    def ng(self):
        return len(self.db.gas)

    @property
    def nx(self):
        return self.ns + self.ng + 3

    @property
    def nz(self):
        return self.nx + 4

    @cached_property
    def c0(self):
        return tr.inlet_load_ratio(self.db.solid.M, self.bc.C_s_in, self.db.gas.M, self.bc.C_g_in)

    @cached_property
    def alpha(self):
        return tr.inlet_constriction(self.geometry.w_in / self.geometry.r_c, self.c0)

    @cached_property
    def _vtheta_per_vin(self):
        g, d = self.geometry, self.derived
        return (tr.tangential_velocity(d.r_eq, 1.0, g, d, self.alpha, self.c0),
                tr.tangential_velocity(g.r_x, 1.0, g, d, self.alpha, self.c0))

    @cached_property
    def v_theta_eq(self):
        return self._vtheta_per_vin[0] * self.bc.v_in

    @cached_property
    def v_theta_x(self):
        return self._vtheta_per_vin[1] * self.bc.v_in

    @cached_property
    def false_air_molar(self):
        """Molar false-air inflow per gas species, mol/s."""
        bc = self.bc
        n = bc.false_air * bc.P_amb / (R_GAS * bc.T_e)
        return n * self.db.gas.vector(AIR)

    @cached_property
    def inlet_particle_density(self):
        S = self.db.solid
        vol = float(np.dot(self.bc.C_s_in, S.M / S.rho))
        if vol > 0:
            return float(np.dot(self.bc.C_s_in, S.M)) / vol
        return float(S.rho[0])

    @cached_property
    def h_s_in(self):
        return self.db.solid.molar_enthalpy(self.bc.T_in)

    @cached_property
    def h_g_in(self):
        return self.db.gas.molar_enthalpy(self.bc.T_in)

    @cached_property
    def h_g_amb(self):
        return self.db.gas.molar_enthalpy(self.bc.T_e)

    @cached_property
    def mdot_s_in(self):
        """Solid mass inflow before saltation, kg/s."""
        return self.geometry.A_in * self.bc.v_in * float(np.dot(self.db.solid.M, self.bc.C_s_in))

    @cached_property
    def M_all(self):
        return np.concatenate([self.db.solid.M, self.db.gas.M])

    @cached_property
    def atol(self):
        """Absolute tolerances per z-component for error and convergence norms."""
        a = np.empty(self.nz)
        a[: self.ns + self.ng] = 1e-6
        a[self.ns + self.ng: self.nx] = 1.0
        a[self.nx: self.nx + 3] = 1e-4
        a[self.nx + 3] = 1e-2
        return a

    def with_flow(self, **kw):
        return replace(self, flow=replace(self.flow, **kw))

    def with_bc(self, **kw):
        return replace(self, bc=replace(self.bc, **kw))

    def with_settings(self, **kw):
        return replace(self, settings=replace(self.settings, **kw))

    # layout helpers -------------------------------------------------------
    def split(self, x):
        ns, ng = self.ns, self.ng
        return x[:ns], x[ns:ns + ng], x[ns + ng], x[ns + ng + 1], x[ns + ng + 2]

    def pack(self, C_s, C_g, U_m, U_r, U_w):
        return np.concatenate([C_s, C_g, [U_m, U_r, U_w]])


@dataclass
class Evaluation:
    """Intermediate quantities of one right-hand-side evaluation."""

    rhs: np.ndarray
    V_s: float
    V_g: float
    rho_s: float
    rho_g: float
    mu_g: float
    mu_m: float
    k_g: float
    k_m: float
    v_gx: float
    v_sep: float
    d_star: float
    c0L: float
    eta_sal: float
    Nu: float
    beta_m: float
    rates: np.ndarray
    molar: dict
    heats: dict

    def mass_flows(self, system):
        """Port mass flows in kg/s."""
        Ms, Mg = system.db.solid.M, system.db.gas.M
        m = self.molar
        mdot_in = system.mdot_s_in
        sal = self.eta_sal * mdot_in
        vortex = float(Ms @ m["s_sep"])
        return {
            "s_in": mdot_in,
            "s_saltation": sal,
            "s_enter": float(Ms @ m["s_in"]),
            "s_x": float(Ms @ m["s_x"]),
            "s_sep_vortex": vortex,
            "s_sep": sal + vortex,
            "g_in": float(Mg @ m["g_in"]),
            "g_x": float(Mg @ m["g_x"]),
        }

    def efficiency(self, system):
        """(eta, eta_sal, eta_sep) on a mass basis."""
        flows = self.mass_flows(system)
        if flows["s_in"] <= 0:
            return 0.0, 0.0, 0.0
        eta = tr.total_efficiency(flows["s_sep"], flows["s_in"])
        eta_sep = flows["s_sep_vortex"] / flows["s_in"]
        return eta, eta - eta_sep, eta_sep


def evaluate(system, x, y):
    """Evaluate the right-hand side and its intermediate quantities."""
    db, g, d, fp, hp, bc = system.db, system.geometry, system.derived, system.flow, system.heat, system.bc
    S, G = db.solid, db.gas
    ns, ng = system.ns, system.ng
    C_s = x[:ns]
    C_g = x[ns:ns + ng]
    T_m, T_r, T_w, P = (float(v) for v in y)

    V_s_i = C_s * S.M / S.rho
    V_s = float(V_s_i.sum())
    Cg_tot = float(C_g.sum())
    V_g = Cg_tot * R_GAS * T_m / P
    rho_s = float(S.M @ C_s)
    rho_g = float(G.M @ C_g)
    rho_m = rho_s + rho_g

    mu_g = G.mixture_viscosity(T_m, C_g)
    k_g = G.mixture_conductivity(T_m, C_g)
    if not (mu_g > 0 and k_g > 0):
        raise PropertyDomainError("gas transport properties undefined (negative concentrations?)")
    if not V_s < 0.5:
        raise PropertyDomainError(f"solid volume fraction {V_s:.3g} reached the suspension pole")
    mu_m = suspension_viscosity(mu_g, max(V_s, 0.0))
    inv_k = V_g / k_g + float(np.sum(V_s_i / S.k))
    k_m = 1.0 / inv_k if inv_k > 0 else k_g

    v_gx = 0.0 if rho_m <= 0 else tr.gas_outlet_velocity(P, bc.P_out, rho_m, mu_m, d.D_x, g.h_x, fp.f_D_scale)

    rho_p = rho_s / V_s if V_s > 0 and rho_s > 0 else system.inlet_particle_density
    d_rho = rho_p - rho_g
    v_sep = tr.separation_velocity(fp.d_m, rho_p, rho_g, mu_m, system.v_theta_eq, d.r_eq)
    d_star = tr.cut_size(mu_m, g.A_in, bc.v_in, d_rho, d.h_i, system.v_theta_x)
    c0 = system.c0
    c0L = tr.loading_limit(fp.f_c, d_star, fp.d_med, c0)
    eta_sal = tr.saltation_efficiency(c0, c0L)

    N = tr.material_fluxes(C_s, C_g, bc.C_s_in, bc.C_g_in, bc.v_in, v_gx, v_sep, eta_sal, fp.f_N)
    molar = {
        "s_in": g.A_in * N["s_in"],
        "g_in": g.A_in * N["g_in"],
        "fa": system.false_air_molar,
        "s_x": d.A_x * N["s_x"],
        "g_x": d.A_x * N["g_x"],
        "s_sep": d.A_sep * N["s_sep"],
    }

    rates = reaction_rates(system.reactions, T_m, np.concatenate([C_s, C_g]), strict=False)
    R = system.reactions.nu.T @ rates

    V = d.V_tot
    dC_s = (molar["s_in"] - molar["s_x"] - molar["s_sep"]) / V + R[:ns]
    dC_g = (molar["g_in"] + molar["fa"] - molar["g_x"]) / V + R[ns:]

    h_s = S.molar_enthalpy(T_m)
    h_g = G.molar_enthalpy(T_m)
    dH_s = molar["s_in"] @ system.h_s_in - (molar["s_x"] + molar["s_sep"]) @ h_s
    dH_g = molar["g_in"] @ system.h_g_in + molar["fa"] @ system.h_g_amb - molar["g_x"] @ h_g

    # mixture convection coefficient
    cp_s_mol = S.cp(T_m)
    cp_g_mol = G.cp(T_m)
    cp_s = float(C_s @ cp_s_mol) / rho_s if rho_s > 0 else 0.0
    cp_g = float(C_g @ cp_g_mol) / rho_g if rho_g > 0 else 0.0
    k_s = V_s / float(np.sum(V_s_i / S.k)) if V_s > 0 else 0.0
    Re = rho_g * bc.v_in * d.d_c / mu_g
    Nu = ht.nusselt(bc.v_in, fp.u_mf, d.d_c, fp.d_p, Re, rho_s, rho_g, cp_s, cp_g, k_s, k_g,
                    bc.P_in - bc.P_out)
    beta_m = ht.mixture_convection_coefficient(k_m, d.D_H, Nu)
    coeff = ht.overall_convection_coefficients(g, d, beta_m, system.refractory.conductivity,
                                               system.wall.conductivity, hp.h_ext)
    q_cv = ht.convective_heats(T_m, T_r, T_w, bc.T_e, coeff)
    q_rad = ht.radiative_heats(T_m, T_r, T_w, bc.T_e, hp, d.A_c * max(V_s, 0.0), d.A_w)
    if hp.adiabatic:
        q_cv["we"] = q_rad["we"] = 0.0

    dU_m = (dH_s + dH_g - q_cv["cr"] - q_rad["cr"]) / V
    dU_r = (q_cv["cr"] + q_rad["cr"] - q_cv["rw"]) / d.V_r
    dU_w = (q_cv["rw"] - q_cv["we"] - q_rad["we"]) / d.V_w

    rhs = np.concatenate([dC_s, dC_g, [dU_m, dU_r, dU_w]])
    return Evaluation(
        rhs=rhs, V_s=V_s, V_g=V_g, rho_s=rho_s, rho_g=rho_g, mu_g=mu_g, mu_m=mu_m, k_g=k_g,
        k_m=k_m, v_gx=v_gx, v_sep=v_sep, d_star=d_star, c0L=c0L, eta_sal=eta_sal, Nu=Nu,
        beta_m=beta_m, rates=rates, molar=molar,
        heats={"cr_cv": q_cv["cr"], "rw_cv": q_cv["rw"], "we_cv": q_cv["we"],
               "cr_rad": q_rad["cr"], "we_rad": q_rad["we"]},
    )


def ode_rhs(system, x, y):
    """dx/dt for the differential states."""
    return evaluate(system, np.asarray(x, dtype=float), np.asarray(y, dtype=float)).rhs


# ---------------------------------------------------------------------------
# algebraic closure
# ---------------------------------------------------------------------------

def algebraic_residual(system, x, y):
    """[V_g + V_s - 1, U_m - (H_s + H_g - P V_g), U_r - H_r, U_w - H_w]."""
    db = system.db
    C_s, C_g, U_m, U_r, U_w = system.split(np.asarray(x, dtype=float))
    T_m, T_r, T_w, P = (float(v) for v in y)
    V_s = db.solid.volume(T_m, P, C_s)
    V_g = db.gas.volume(T_m, P, C_g)
    H = db.solid.enthalpy(T_m, C_s) + db.gas.enthalpy(T_m, C_g)
    return np.array([
        V_g + V_s - 1.0,
        U_m - (H - P * V_g),
        U_r - system.refractory.energy_density(T_r),
        U_w - system.wall.energy_density(T_w),
    ])


def _algebraic_scales(system, x, T_m):
    """Heat-capacity densities turning energy residuals into kelvin."""
    db = system.db
    C_s, C_g = system.split(x)[:2]
    c_m = float(C_s @ db.solid.cp(T_m) + C_g @ db.gas.cp(T_m)) - R_GAS * float(C_g.sum())
    c_r = system.refractory.density * system.refractory.specific_heat
    c_w = system.wall.density * system.wall.specific_heat
    return np.array([1.0, max(c_m, 1e-12), c_r, c_w])


def algebraic_jacobian_y(system, x, y):
    """Analytic d g / d y."""
    db = system.db
    C_s, C_g = system.split(x)[:2]
    T_m, T_r, T_w, P = y
    n_g = float(C_g.sum())
    J = np.zeros((4, 4))
    J[0, 0] = n_g * R_GAS / P
    J[0, 3] = -n_g * R_GAS * T_m / P**2
    J[1, 0] = -(float(C_s @ db.solid.cp(T_m) + C_g @ db.gas.cp(T_m)) - R_GAS * n_g)
    J[2, 1] = -system.refractory.density * system.refractory.specific_heat
    J[3, 2] = -system.wall.density * system.wall.specific_heat
    return J


def algebraic_jacobian_x(system, x, y):
    """Analytic d g / d x."""
    db = system.db
    ns, ng = system.ns, system.ng
    T_m, T_r, T_w, P = y
    J = np.zeros((4, system.nx))
    J[0, :ns] = db.solid.M / db.solid.rho
    J[0, ns:ns + ng] = R_GAS * T_m / P
    J[1, :ns] = -db.solid.molar_enthalpy(T_m)
    J[1, ns:ns + ng] = -(db.gas.molar_enthalpy(T_m) - R_GAS * T_m)
    J[1, ns + ng] = 1.0
    J[2, ns + ng + 1] = 1.0
    J[3, ns + ng + 2] = 1.0
    return J


def solve_algebraic(system, x, y_guess, tol=1e-8, max_iter=50):
    """Damped Newton for the temperatures and pressure consistent with ``x``.

    Convergence is judged on residuals scaled to dimensionless volume and
    kelvin. Raises :class:`SolverError` after ``max_iter`` iterations.
    """
    x = np.asarray(x, dtype=float)
    y = np.array(y_guess, dtype=float)
    if np.any(y <= 0):
        raise ValueError("initial temperatures and pressure must be positive")
    res = algebraic_residual(system, x, y)
    for it in range(max_iter + 1):
        scaled = np.abs(res) / _algebraic_scales(system, x, y[0])
        if np.max(scaled) < tol:
            return y
        if it == max_iter:
            break
        J = algebraic_jacobian_y(system, x, y)
        try:
            dy = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            raise SolverError("singular algebraic Jacobian (no gas in the chamber?)", y, res) from None
        lam = 1.0
        while np.any(y + lam * dy <= 0):
            lam *= 0.5
        y = y + lam * dy
        res = algebraic_residual(system, x, y)
    raise SolverError(f"algebraic solve did not converge, scaled residual {np.max(scaled):.3e}", y, res)


# ---------------------------------------------------------------------------
# Newton machinery
# ---------------------------------------------------------------------------

def full_residual(system, z):
    """[f(x, y); g(x, y)] for steady-state solves."""
    x, y = z[: system.nx], z[system.nx:]
    return np.concatenate([evaluate(system, x, y).rhs, algebraic_residual(system, x, y)])


def rhs_jacobian(system, z, f0=None):
    """Forward-difference d f / d z (nx by nz)."""
    nx = system.nx
    if f0 is None:
        f0 = evaluate(system, z[:nx], z[nx:]).rhs
    J = np.empty((nx, system.nz))
    eps = np.sqrt(np.finfo(float).eps)
    # typical magnitudes: 1 mol/m^3, 1e4 J/m^3, 1 K, 100 Pa
    typ = np.maximum(system.atol * 1e4, 1.0)
    for j in range(system.nz):
        h = eps * max(abs(z[j]), typ[j])
        zp = z.copy()
        zp[j] += h
        h = zp[j] - z[j]
        J[:, j] = (evaluate(system, zp[:nx], zp[nx:]).rhs - f0) / h
    return J


def full_jacobian(system, z, f0=None):
    """d [f; g] / d z with a finite-difference f block and analytic g block."""
    nx = system.nx
    x, y = z[:nx], z[nx:]
    Jg = np.hstack([algebraic_jacobian_x(system, x, y), algebraic_jacobian_y(system, x, y)])
    return np.vstack([rhs_jacobian(system, z, f0), Jg])


_EVAL_ERRORS = (PropertyDomainError, ValueError, FloatingPointError, ZeroDivisionError)


def _weights(system, z, rtol):
    return system.atol * (rtol / 1e-4) + rtol * np.abs(z)


def _negative_concentration(system, z):
    n = system.ns + system.ng
    return np.any(z[:n] < -system.atol[:n] * 1e-4)


@dataclass
class StepResult:
    x: np.ndarray
    y: np.ndarray
    iterations: int


class ImplicitEuler:
    """Implicit Euler on the coupled system with a reusable Newton matrix.

    Solves ``x1 = x0 + dt f(x1, y1)`` and ``g(x1, y1) = 0`` simultaneously.
    """

    def __init__(self, system):
        self.system = system
        self._J = None
        self._lu = None
        self._lu_dt = None
        self.n_jac = 0
        self.n_rhs = 0
        self._rate = 0.5

    def refresh(self, z):
        try:
            self._J = full_jacobian(self.system, z)
        except _EVAL_ERRORS as exc:
            raise SolverError(f"Jacobian evaluation failed: {exc}", z) from None
        self._lu = None
        self.n_jac += 1

    def _matrix(self, dt):
        if self._lu is None or self._lu_dt != dt:
            nx = self.system.nx
            A = -self._J.copy()
            A[:nx] *= dt
            A[:nx, :nx] += np.eye(nx)
            A[nx:] = self._J[nx:]
            self._lu = lu_factor(A)
            self._lu_dt = dt
        return self._lu

    def solve(self, x0, z_guess, dt, max_refresh=3):
        """Newton iterations for one step; returns (z1, iterations) or raises.

        The Jacobian is re-evaluated at the current iterate whenever the
        contraction rate drops below one half.
        """
        s = self.system
        nx = s.nx
        rtol = s.settings.newton_rtol
        if self._J is None:
            self.refresh(z_guess)
        z = z_guess.copy()
        prev = np.inf
        refreshes = 0
        total = 0
        it = 0
        while it < s.settings.max_newton:
            it += 1
            total += 1
            try:
                ev = evaluate(s, z[:nx], z[nx:])
            except _EVAL_ERRORS as exc:
                raise SolverError(f"evaluation failed: {exc}", z) from None
            self.n_rhs += 1
            F = np.concatenate([z[:nx] - x0 - dt * ev.rhs, algebraic_residual(s, z[:nx], z[nx:])])
            if not np.all(np.isfinite(F)):
                raise SolverError("non-finite residual", z, F)
            dz = lu_solve(self._matrix(dt), -F)
            z = z + dz
            if np.any(z[nx:] <= 0):
                raise SolverError("non-positive temperature or pressure", z, F)
            norm = np.max(np.abs(dz) / _weights(s, z, rtol))
            # remaining error estimated from the observed contraction rate
            rate = norm / prev if it > 1 else self._rate
            if norm < 1.0 or (rate < 1.0 and rate / (1.0 - rate) * norm < 1.0):
                if it > 1:
                    self._rate = max(rate, 1e-3)
                return z, total
            if it > 1 and norm > 0.5 * prev:
                if refreshes == max_refresh:
                    raise SolverError("Newton stagnated", z, F)
                refreshes += 1
                self.refresh(z)
                it = 0
                prev = np.inf
                continue
            prev = norm
        raise SolverError("Newton did not converge", z)

    def step(self, x, y, dt, guess=None):
        """One implicit Euler step from (x, y); ``guess`` seeds Newton."""
        s = self.system
        z0 = np.concatenate([x, y]) if guess is None else guess
        if np.any(z0[s.nx:] <= 0) or _negative_concentration(s, z0):
            z0 = np.concatenate([x, y])
        z, it = self.solve(np.asarray(x, dtype=float), z0, dt)
        if _negative_concentration(s, z):
            raise SolverError("negative concentration", z)
        y1 = solve_algebraic(s, z[: s.nx], z[s.nx:], tol=1e-10)
        return StepResult(z[: s.nx], y1, it)


def step(system, x, y, dt, integrator=None):
    """Single implicit Euler step of size ``dt`` with step-halving on failure.

    Returns ``(x1, y1)`` at ``t + dt``; the interval is covered by as many
    sub-steps as needed. Raises :class:`IntegrationError` below ``dt_min``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    integ = integrator or ImplicitEuler(system)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    remaining = dt
    h = dt
    while remaining > 0:
        h = min(h, remaining)
        try:
            res = integ.step(x, y, h)
        except SolverError as exc:
            h *= 0.5
            if h < system.settings.dt_min:
                raise IntegrationError(f"step size underflow: {exc}", np.concatenate([x, y])) from None
            continue
        x, y = res.x, res.y
        remaining -= h
        if remaining < 1e-12 * dt:
            break
    return x, y


# ---------------------------------------------------------------------------
# initial state
# ---------------------------------------------------------------------------

def consistent_state(system, C_s, C_g, T_m, T_r, T_w, P):
    """Differential state whose energy densities match the given temperatures."""
    db = system.db
    U_m = db.solid.enthalpy(T_m, C_s) + db.gas.enthalpy(T_m, C_g) - P * db.gas.volume(T_m, P, C_g)
    x = system.pack(np.asarray(C_s, float), np.asarray(C_g, float), U_m,
                    system.refractory.energy_density(T_r), system.wall.energy_density(T_w))
    return x, np.array([T_m, T_r, T_w, P], dtype=float)


def initial_state(system):
    """Start-up state: uniform solids and air at the inlet temperature filling
    the remaining volume at the outlet pressure; cold lining and shell."""
    s, db, bc = system.settings, system.db, system.bc
    T_m = bc.T_in if s.initial_temperature is None else s.initial_temperature
    T_l = bc.T_e if s.initial_lining_temperature is None else s.initial_lining_temperature
    C_s = np.full(system.ns, s.initial_solids)
    V_s = db.solid.volume(T_m, bc.P_out, C_s)
    n_gas = (1.0 - V_s) * bc.P_out / (R_GAS * T_m)
    C_g = n_gas * db.gas.vector(AIR)
    return consistent_state(system, C_s, C_g, T_m, T_l, T_l, bc.P_out)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

@dataclass
class SimulationResult:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    reports: list
    stats: dict

    def column(self, name):
        if name in ("T_m", "T_r", "T_w", "P"):
            return self.y[:, ("T_m", "T_r", "T_w", "P").index(name)]
        return np.array([r[name] for r in self.reports])


def report(system, x, y):
    """Derived outputs for one state."""
    ev = evaluate(system, x, y)
    eta, eta_sal, eta_sep = ev.efficiency(system)
    out = {
        "eta": eta, "eta_sal": eta_sal, "eta_sep": eta_sep,
        "rho_s": ev.rho_s, "rho_g": ev.rho_g, "V_s": ev.V_s,
        "v_gx": ev.v_gx, "v_sep": ev.v_sep, "d_star": ev.d_star, "c0L": ev.c0L,
    }
    out.update({f"mdot_{k}": v for k, v in ev.mass_flows(system).items()})
    out.update({f"Q_{k}": v for k, v in ev.heats.items()})
    return out


def index_condition(system, x, y):
    """Condition number of the row/column-scaled algebraic Jacobian.

    Infinite when dg/dy is singular, i.e. the DAE has lost index 1.
    """
    J = algebraic_jacobian_y(system, x, y)
    J = J / _algebraic_scales(system, x, y[0])[:, None] * np.abs(y)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.linalg.cond(J)
    return float(c) if np.isfinite(c) else np.inf


def simulate(system, t_end, output_grid=None, x0=None, y0=None, callback=None):
    """Adaptive implicit Euler from the start-up state (or ``x0, y0``).

    The step size is controlled by comparing one full step with two half
    steps; samples are produced exactly on ``output_grid`` (default: every
    accepted step).
    """
    s = system.settings
    if x0 is None:
        x0, y0 = initial_state(system)
    x = np.asarray(x0, dtype=float)
    y = solve_algebraic(system, x, y0, tol=1e-10)
    t = 0.0
    grid = None if output_grid is None else np.asarray(output_grid, dtype=float)
    if grid is not None and grid.size and (np.any(np.diff(grid) <= 0) or grid[0] < 0):
        raise ValueError("output grid must be strictly increasing and non-negative")
    ts, xs, ys = [0.0], [x.copy()], [y.copy()]
    if grid is not None:
        grid = grid[(grid > 0) & (grid <= t_end)]
        gi = 0
    integ = ImplicitEuler(system)
    dt = min(s.dt_init, s.dt_max)
    stats = {"accepted": 0, "rejected": 0}
    z_prev, h_prev = None, None
    stats["max_index_condition"] = index_condition(system, x, y)

    def result():
        stats["n_rhs"] = integ.n_rhs
        stats["n_jac"] = integ.n_jac
        xa, ya = np.array(xs), np.array(ys)
        reports = [report(system, xi, yi) for xi, yi in zip(xa, ya)]
        return SimulationResult(np.array(ts), xa, ya, reports, stats)

    try:
        while t < t_end * (1 - 1e-14) and t_end > 0:
            target = t_end if grid is None or gi >= len(grid) else grid[gi]
            h = min(dt, target - t)
            z = np.concatenate([x, y])
            # linear extrapolation of the last accepted step seeds Newton
            slope = 0.0 if z_prev is None else (z - z_prev) / h_prev
            try:
                full = integ.step(x, y, h, z + h * slope)
                half = integ.step(x, y, h / 2, z + 0.5 * h * slope)
                half = integ.step(half.x, half.y, h / 2, z + h * slope)
            except SolverError:
                stats["rejected"] += 1
                dt = h * 0.5
                integ.refresh(np.concatenate([x, y]))
                if dt < s.dt_min:
                    raise IntegrationError(f"step size underflow at t={t:.6g} s", np.concatenate([x, y]))
                continue
            z_full = np.concatenate([full.x, full.y])
            z_half = np.concatenate([half.x, half.y])
            err = np.max(np.abs(z_full - z_half) / (system.atol + s.rtol * np.abs(z_half)))
            if err > 1.0:
                stats["rejected"] += 1
                dt = max(h * max(0.2, 0.9 / np.sqrt(err)), s.dt_min)
                if h <= s.dt_min:
                    raise IntegrationError(f"step size underflow at t={t:.6g} s", z_half)
                continue
            stats["accepted"] += 1
            z_prev, h_prev = z, h
            t = target if h == target - t else t + h
            x, y = half.x, half.y
            if callback is not None:
                callback(t, x, y)
            kappa = index_condition(system, x, y)
            stats["max_index_condition"] = max(stats["max_index_condition"], kappa)
            if kappa > 1e14:
                raise IntegrationError(f"algebraic Jacobian singular at t={t:.6g} s (cond {kappa:.3g})",
                                       np.concatenate([x, y]))
            factor = min(s.growth, 0.9 / np.sqrt(max(err, 1e-12)))
            if max(full.iterations, half.iterations) > 3:
                factor = min(factor, 1.0)
                integ.refresh(np.concatenate([x, y]))
            # only grow from a step that was not truncated by the output grid
            dt = min(max(dt, h) * factor if h >= dt * 0.999 else dt, s.dt_max)
            if grid is None or (gi < len(grid) and t >= grid[gi]):
                ts.append(t)
                xs.append(x.copy())
                ys.append(y.copy())
                if grid is not None:
                    gi += 1
    except IntegrationError as exc:
        # samples up to the failure travel with the error
        exc.partial = result()
        raise
    return result()


# ---------------------------------------------------------------------------
# steady state
# ---------------------------------------------------------------------------

def steady_guess(system):
    """Rough operating point used when no warm start is available."""
    bc, db, d = system.bc, system.db, system.derived
    T_m = bc.T_in
    P = 0.5 * (bc.P_in + bc.P_out)
    C_g = np.asarray(bc.C_g_in) * (bc.T_in / T_m) * (P / bc.P_in)
    C_s = 0.3 * np.asarray(bc.C_s_in)
    T_w = bc.T_e + 1.0
    T_r = 0.5 * (T_m + T_w)
    x, y = consistent_state(system, C_s, C_g, T_m, T_r, T_w, P)
    return x, solve_algebraic(system, x, y)


def steady_residual_norm(system, z, F=None):
    """Scaled norm of [f; g]; f is measured over one second."""
    if F is None:
        F = full_residual(system, z)
    w = _weights(system, z, system.settings.steady_rtol)
    nx = system.nx
    fn = np.max(np.abs(F[:nx]) / w[:nx])
    gn = np.max(np.abs(F[nx:]) / _algebraic_scales(system, z[:nx], z[nx])) / 1e-8
    return max(fn, gn)


@dataclass
class SteadyState:
    x: np.ndarray
    y: np.ndarray
    iterations: int
    residual: float
    method: str


def _newton_steady(system, z, max_iter=30):
    nx = system.nx
    F = full_residual(system, z)
    norm = steady_residual_norm(system, z, F)
    for it in range(1, max_iter + 1):
        if norm < 1.0:
            return z, it - 1, norm
        J = full_jacobian(system, z, F[:nx])
        try:
            dz = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise SolverError("singular steady-state Jacobian", z, F) from None
        lam = 1.0
        while True:
            zn = z + lam * dz
            ok = not (np.any(zn[nx:] <= 0) or _negative_concentration(system, zn))
            if ok:
                try:
                    Fn = full_residual(system, zn)
                    nn = steady_residual_norm(system, zn, Fn)
                    ok = np.isfinite(nn) and nn < norm * (1 - 1e-4 * lam) or nn < 1.0
                except _EVAL_ERRORS:
                    ok = False
            if ok:
                break
            lam *= 0.5
            if lam < 1e-4:
                raise SolverError("steady Newton line search failed", z, F)
        z, F, norm = zn, Fn, nn
    if norm < 1.0:
        return z, max_iter, norm
    raise SolverError(f"steady Newton did not converge (residual {norm:.3e})", z, F)


def _pseudo_transient(system, z, max_steps=400):
    """Implicit Euler with step sizes grown by residual reduction."""
    nx = system.nx
    integ = ImplicitEuler(system)
    norm = steady_residual_norm(system, z)
    dt = 0.1
    for k in range(max_steps):
        if norm < 1.0:
            return z, k, norm
        integ.refresh(z)
        try:
            res = integ.step(z[:nx], z[nx:], dt)
        except SolverError:
            dt *= 0.25
            if dt < system.settings.dt_min:
                raise SolverError("pseudo-transient continuation stalled", z)
            continue
        zn = np.concatenate([res.x, res.y])
        nn = steady_residual_norm(system, zn)
        dt = min(dt * min(10.0, max(1.2, norm / max(nn, 1e-300))), 1e9)
        z, norm = zn, nn
        if norm < 1e6:
            try:
                zz, it, nn = _newton_steady(system, z, max_iter=8)
                return zz, k + it, nn
            except SolverError:
                pass
    raise SolverError(f"pseudo-transient continuation did not converge (residual {norm:.3e})", z)


def steady_state(system, x_guess=None, y_guess=None):
    """Solve f(x, y) = 0, g(x, y) = 0.

    Plain Newton from the guess first; pseudo-transient continuation when it
    fails. Raises :class:`SolverError` carrying the best iterate.
    """
    if x_guess is None:
        x_guess, y_guess = steady_guess(system)
    y_guess = solve_algebraic(system, x_guess, y_guess)
    z = np.concatenate([np.asarray(x_guess, float), np.asarray(y_guess, float)])
    try:
        z1, it, norm = _newton_steady(system, z)
        method = "newton"
    except SolverError as exc:
        logger.info("steady Newton failed (%s); switching to pseudo-transient continuation", exc)
        z1, it, norm = _pseudo_transient(system, z)
        method = "ptc"
    nx = system.nx
    y1 = solve_algebraic(system, z1[:nx], z1[nx:], tol=1e-10)
    return SteadyState(z1[:nx], y1, it, norm, method)


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------

def settling_time(t, values, band=0.01):
    """Time after which ``values`` stays within ``band`` of its final value.

    The band is a fraction of the largest excursion from the final value,
    so a decaying exponential settles at ln(1/band) time constants.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    dev = np.abs(v - v[-1])
    excursion = dev.max()
    if excursion == 0:
        return 0.0
    outside = np.nonzero(dev > band * excursion)[0]
    if len(outside) == 0:
        return 0.0
    last = outside[-1]
    if last + 1 >= len(t):
        return float(t[-1] - t[0])
    # interpolate the band crossing between the two samples
    t0, t1 = t[last], t[last + 1]
    d0, d1 = dev[last], dev[last + 1]
    lim = band * excursion
    frac = (d0 - lim) / (d0 - d1) if d0 != d1 else 1.0
    return float(t0 + frac * (t1 - t0) - t[0])
