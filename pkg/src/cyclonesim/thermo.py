"""Species data and thermo-physical property evaluations.

Heat capacities, enthalpy and volume of the solid and gas phases, gas
viscosity and conductivity (Sutherland pure-gas law, Wilke mixing rule),
suspension viscosity and the serial (layered) mixture conductivity.

Enthalpy is referenced to the standard enthalpy of formation at
``T_REF``; all functions are homogeneous of order one in the mole vector.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
import yaml

from .units import to_si

logger = logging.getLogger(__name__)

R_GAS = 8.314462618  # J/(mol K)
T_REF = 298.15
P_REF = 1.0e5


class UnknownSpeciesError(KeyError):
    pass


class PropertyDomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# heat capacity models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolynomialCp:
    """cp = C0 + C1 T + C2 T^2 in J/(mol K), clamped outside ``T_range``."""

    C0: float
    C1: float = 0.0
    C2: float = 0.0
    T_range: tuple = (0.0, np.inf)

    def clamp(self, T):
        return np.clip(T, self.T_range[0], self.T_range[1])

    def raw(self, T):
        return self.C0 + self.C1 * T + self.C2 * T * T

    def cp(self, T):
        return self.raw(self.clamp(T))

    def _F(self, T):
        return self.C0 * T + self.C1 * T**2 / 2 + self.C2 * T**3 / 3

    def antiderivative(self, T):
        lo, hi = self.T_range
        Tc = self.clamp(T)
        return self._F(Tc) + self.raw(Tc) * (T - Tc)

    def integral(self, T0, T):
        return self.antiderivative(T) - self.antiderivative(T0)

    def in_range(self, T):
        return self.T_range[0] <= T <= self.T_range[1]


@dataclass(frozen=True)
class CalciteCp(PolynomialCp):
    """Five-term calcite expression a + bT + cT^2 + dT^-2 + eT^-1/2."""

    coefficients: tuple = ()

    def raw(self, T):
        a, b, c, d, e = self.coefficients
        return a + b * T + c * T * T + d / (T * T) + e / np.sqrt(T)

    def _F(self, T):
        a, b, c, d, e = self.coefficients
        return a * T + b * T**2 / 2 + c * T**3 / 3 - d / T + 2 * e * np.sqrt(T)


# ---------------------------------------------------------------------------
# species records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeciesRecord:
    id: str
    phase: str
    molar_mass: float
    formation_enthalpy: float
    cp_model: PolynomialCp
    elements: dict = field(default_factory=dict)
    solid_density: float = None
    conductivity: object = None  # float (solid) or ((T1, k1), (T2, k2)) (gas)
    viscosity: tuple = None  # (mu0, T0, S_mu)
    viscosity_points: tuple = None
    diffusion_volume: float = None

    def __post_init__(self):
        if not self.molar_mass > 0:
            raise ValueError(f"{self.id}: molar mass must be positive")
        if self.phase == "solid" and not (self.solid_density or 0) > 0:
            raise ValueError(f"{self.id}: solid density must be positive")

    def gas_conductivity(self, T):
        (T1, k1), (T2, k2) = self.conductivity
        return np.interp(T, [T1, T2], [k1, k2])


@dataclass(frozen=True)
class Material:
    """Lining or shell pseudo-species with constant specific heat."""

    name: str
    density: float
    specific_heat: float  # J/(kg K)
    conductivity: float
    molar_mass: float

    @property
    def concentration(self):
        return self.density / self.molar_mass

    @property
    def molar_cp(self):
        return self.specific_heat * self.molar_mass

    def energy_density(self, T):
        return self.density * self.specific_heat * (T - T_REF)

    def temperature(self, U):
        return T_REF + U / (self.density * self.specific_heat)


def fit_sutherland(T0, mu0, T1, mu1):
    """Sutherland constant S reproducing ``mu1`` at ``T1`` given ``mu0`` at ``T0``.

    The two-point condition is linear in S, so no iteration is needed.
    """
    a = (mu1 / mu0) * (T0 / T1) ** 1.5
    if a == 1.0:
        raise PropertyDomainError("degenerate viscosity points")
    return (T0 - a * T1) / (a - 1.0)


def sutherland(T, mu0, T0, S):
    return mu0 * (T / T0) ** 1.5 * (T0 + S) / (T + S)


# ---------------------------------------------------------------------------
# phase containers
# ---------------------------------------------------------------------------

class Phase:
    """Species of one phase with vectorised property evaluation."""

    def __init__(self, name, records):
        self.name = name
        self.records = tuple(records)
        self.ids = tuple(r.id for r in self.records)
        self.index = {s: i for i, s in enumerate(self.ids)}
        self.M = np.array([r.molar_mass for r in self.records])
        self.dHf = np.array([r.formation_enthalpy for r in self.records])
        self.range_violations = set()
        self._poly = [i for i, r in enumerate(self.records) if type(r.cp_model) is PolynomialCp]
        self._special = [i for i, r in enumerate(self.records) if type(r.cp_model) is not PolynomialCp]
        self._C = np.array([[r.cp_model.C0, r.cp_model.C1, r.cp_model.C2] for r in self.records])
        self._lo = np.array([r.cp_model.T_range[0] for r in self.records])
        self._hi = np.array([r.cp_model.T_range[1] for r in self.records])
        if name == "solid":
            self.rho = np.array([r.solid_density for r in self.records])
            self.k = np.array([r.conductivity for r in self.records])
        else:
            self.transport = np.array([r.viscosity is not None for r in self.records])
            self._mu0 = np.array([r.viscosity[0] if r.viscosity else np.nan for r in self.records])
            self._T0 = np.array([r.viscosity[1] if r.viscosity else np.nan for r in self.records])
            self._S = np.array([r.viscosity[2] if r.viscosity else np.nan for r in self.records])
            kt = [r.conductivity if r.conductivity else ((300.0, np.nan), (1000.0, np.nan))
                  for r in self.records]
            self._kT = np.array([[p[0][0], p[1][0]] for p in kt])
            self._kv = np.array([[p[0][1], p[1][1]] for p in kt])

    def __len__(self):
        return len(self.records)

    def vector(self, amounts=None, **kw):
        """Composition vector in this phase's species order from a mapping."""
        amounts = dict(amounts or {}, **kw)
        out = np.zeros(len(self))
        for s, v in amounts.items():
            if s not in self.index:
                raise UnknownSpeciesError(s)
            out[self.index[s]] = v
        return out

    def _note_range(self, T):
        bad = (T < self._lo) | (T > self._hi)
        if bad.any():
            self.range_violations.update(np.asarray(self.ids)[bad].tolist())

    def cp(self, T):
        """Molar heat capacities at ``T``, J/(mol K)."""
        self._note_range(T)
        Tc = np.clip(T, self._lo, self._hi)
        out = self._C[:, 0] + self._C[:, 1] * Tc + self._C[:, 2] * Tc * Tc
        for i in self._special:
            out[i] = self.records[i].cp_model.cp(T)
        return out

    def _antiderivative(self, T):
        Tc = np.clip(T, self._lo, self._hi)
        C0, C1, C2 = self._C.T
        F = C0 * Tc + C1 * Tc**2 / 2 + C2 * Tc**3 / 3
        F += (C0 + C1 * Tc + C2 * Tc * Tc) * (T - Tc)
        for i in self._special:
            F[i] = self.records[i].cp_model.antiderivative(T)
        return F

    def sensible_enthalpy(self, T):
        """Molar enthalpy relative to ``T_REF``, J/mol."""
        self._note_range(T)
        return self._antiderivative(T) - self._antiderivative(T_REF)

    def molar_enthalpy(self, T):
        """Molar enthalpy including formation, J/mol."""
        return self.dHf + self.sensible_enthalpy(T)

    def enthalpy(self, T, n):
        return float(np.dot(n, self.molar_enthalpy(T)))

    def volume(self, T, P, n):
        if self.name == "solid":
            return float(np.dot(n, self.M / self.rho))
        if P <= 0:
            raise PropertyDomainError("pressure must be positive")
        return float(np.sum(n)) * R_GAS * T / P

    def density(self, C):
        return float(np.dot(self.M, C))

    # gas transport --------------------------------------------------------
    def viscosities(self, T):
        return self._mu0 * (T / self._T0) ** 1.5 * (self._T0 + self._S) / (T + self._S)

    def conductivities(self, T):
        lo_T, hi_T = self._kT[:, 0], self._kT[:, 1]
        w = np.clip((T - lo_T) / (hi_T - lo_T), 0.0, 1.0)
        return self._kv[:, 0] + w * (self._kv[:, 1] - self._kv[:, 0])

    def transport_fractions(self, C):
        """Mole fractions restricted to species with transport data."""
        c = np.where(self.transport, np.maximum(C, 0.0), 0.0)
        total = c.sum()
        if total <= 0:
            c = self.transport.astype(float)
            total = c.sum()
        return c / total

    def mixture_viscosity(self, T, C):
        m = self.transport
        x = self.transport_fractions(C)[m]
        mu = self.viscosities(T)[m]
        return wilke_mixture(x, mu, mu, self.M[m])

    def mixture_conductivity(self, T, C):
        m = self.transport
        x = self.transport_fractions(C)[m]
        mu = self.viscosities(T)[m]
        return wilke_mixture(x, self.conductivities(T)[m], mu, self.M[m])


class SpeciesDatabase:
    """Read-only container of both phases plus lining/shell materials."""

    def __init__(self, solids, gases, refractory, wall, diagnostics=()):
        self.solid = Phase("solid", solids)
        self.gas = Phase("gas", gases)
        self.refractory = refractory
        self.wall = wall
        self.diagnostics = list(diagnostics)
        self._by_id = {r.id: r for r in (*solids, *gases)}

    def __getitem__(self, species_id):
        try:
            return self._by_id[species_id]
        except KeyError:
            raise UnknownSpeciesError(species_id) from None

    def __contains__(self, species_id):
        return species_id in self._by_id

    @property
    def ids(self):
        return self.solid.ids + self.gas.ids

    def phase_of(self, species_id):
        return self.solid if self[species_id].phase == "solid" else self.gas


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _range(entry):
    if "range" not in entry:
        return (0.0, np.inf)
    lo, hi = (to_si(v, "K") for v in entry["range"])
    return (lo, hi)


def _cp_model(sid, entry, validation, diagnostics):
    if entry.get("model") == "calcite":
        model = CalciteCp(0.0, 0.0, 0.0, _range(entry), tuple(float(c) for c in entry["coefficients"]))
        T_chk = to_si(validation["calcite_check_temperature"], "K")
        lo = to_si(validation["calcite_min"], "J/(mol*K)")
        hi = to_si(validation["calcite_max"], "J/(mol*K)")
        value = float(model.raw(T_chk))
        if lo <= value <= hi:
            return model
        fallback = to_si(entry["fallback"], "J/(mol*K)")
        msg = (f"{sid}: five-term cp gives {value:.4g} J/(mol K) at {T_chk:g} K, "
               f"outside [{lo:g}, {hi:g}]; using constant {fallback:g} J/(mol K)")
        logger.warning(msg)
        diagnostics.append(msg)
        return PolynomialCp(fallback)
    return PolynomialCp(float(entry["C0"]), float(entry.get("C1", 0.0)),
                        float(entry.get("C2", 0.0)), _range(entry))


def _validate_cp(sid, model, validation):
    lo = to_si(validation["min"], "J/(mol*K)")
    hi = to_si(validation["max"], "J/(mol*K)")
    T_lo, T_hi = model.T_range
    T_hi = T_hi if np.isfinite(T_hi) else 2000.0
    T_lo = max(T_lo, 200.0)
    for T in np.linspace(T_lo, T_hi, 25):
        v = float(model.cp(T))
        if not (np.isfinite(v) and lo <= v <= hi):
            raise ValueError(f"{sid}: cp({T:.1f} K) = {v} outside [{lo}, {hi}]")


def _material(name, entry):
    return Material(
        name,
        to_si(entry["density"], "kg/m^3"),
        to_si(entry["specific_heat"], "J/(kg*K)"),
        to_si(entry["conductivity"], "W/(m*K)"),
        to_si(entry["molar_mass"], "kg/mol"),
    )


def material_from_mapping(name, entry, base):
    """Override fields of ``base`` with any quantities present in ``entry``."""
    return Material(
        name,
        to_si(entry["density"], "kg/m^3") if "density" in entry else base.density,
        to_si(entry["specific_heat"], "J/(kg*K)") if "specific_heat" in entry else base.specific_heat,
        to_si(entry["conductivity"], "W/(m*K)") if "conductivity" in entry else base.conductivity,
        to_si(entry["molar_mass"], "kg/mol") if "molar_mass" in entry else base.molar_mass,
    )


def load_species_database(path=None):
    """Parse a species YAML file (the bundled one by default)."""
    if path is None:
        text = resources.files("cyclonesim.data").joinpath("species.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = yaml.safe_load(text)
    validation = raw["cp_validation"]
    diagnostics = []

    solids = []
    masses = {}
    deferred = []
    for sid, entry in raw["solids"].items():
        mm = entry["molar_mass"]
        if isinstance(mm, dict):
            deferred.append(sid)
            continue
        masses[sid] = to_si(mm, "kg/mol")
    for sid in deferred:
        parts = raw["solids"][sid]["molar_mass"]["sum"]
        masses[sid] = sum(masses[p] * n for p, n in parts.items())

    for sid, entry in raw["solids"].items():
        cp = _cp_model(sid, entry["cp"], validation, diagnostics)
        _validate_cp(sid, cp, validation)
        solids.append(SpeciesRecord(
            id=sid, phase="solid", molar_mass=masses[sid],
            formation_enthalpy=to_si(entry["formation_enthalpy"], "J/mol"),
            cp_model=cp, elements=dict(entry["elements"]),
            solid_density=to_si(entry["density"], "kg/m^3"),
            conductivity=to_si(entry["conductivity"], "W/(m*K)"),
        ))

    gases = []
    for sid, entry in raw["gases"].items():
        cp = _cp_model(sid, entry["cp"], validation, diagnostics)
        _validate_cp(sid, cp, validation)
        visc = vpts = cond = None
        if "viscosity" in entry:
            (Ta, ma), (Tb, mb) = [(to_si(t, "K"), to_si(m, "Pa*s")) for t, m in entry["viscosity"]]
            S = fit_sutherland(Ta, ma, Tb, mb)
            if not min(Ta, Tb) + S > 0:
                raise ValueError(f"{sid}: Sutherland constant {S} leaves a pole inside the data")
            visc = (ma, Ta, S)
            vpts = ((Ta, ma), (Tb, mb))
        if "conductivity" in entry:
            cond = tuple((to_si(t, "K"), to_si(k, "W/(m*K)")) for t, k in entry["conductivity"])
        gases.append(SpeciesRecord(
            id=sid, phase="gas", molar_mass=to_si(entry["molar_mass"], "kg/mol"),
            formation_enthalpy=to_si(entry["formation_enthalpy"], "J/mol"),
            cp_model=cp, elements=dict(entry["elements"]),
            conductivity=cond, viscosity=visc, viscosity_points=vpts,
            diffusion_volume=to_si(entry["diffusion_volume"], "m^3") if "diffusion_volume" in entry else None,
        ))

    mats = raw["materials"]
    return SpeciesDatabase(solids, gases, _material("refractory", mats["refractory"]),
                           _material("wall", mats["wall"]), diagnostics)


@lru_cache(maxsize=None)
def default_database():
    return load_species_database()


def _db(db):
    return default_database() if db is None else db


# ---------------------------------------------------------------------------
# property operations
# ---------------------------------------------------------------------------

def heat_capacity(species, T, db=None):
    """Molar heat capacity of one species, J/(mol K).

    Outside the declared range the temperature is clamped to the nearest
    endpoint and the species is recorded in its phase's ``range_violations``.
    """
    if T <= 0:
        raise PropertyDomainError("temperature must be positive")
    db = _db(db)
    rec = db[species] if isinstance(species, str) else species
    if not rec.cp_model.in_range(T) and rec.id in db:
        db.phase_of(rec.id).range_violations.add(rec.id)
    return float(rec.cp_model.cp(T))


def enthalpy(T, P, n, phase):
    """H(T, P, n) = sum_i n_i (dHf_i + int_Tref^T cp_i), in J."""
    if T <= 0:
        raise PropertyDomainError("temperature must be positive")
    return phase.enthalpy(T, np.asarray(n, dtype=float))


def volume(T, P, n, phase):
    """Phase volume, m^3: sum n M/rho for solids, ideal gas for gases."""
    if T <= 0:
        raise PropertyDomainError("temperature must be positive")
    if P <= 0:
        raise PropertyDomainError("pressure must be positive")
    return phase.volume(T, P, np.asarray(n, dtype=float))


def phase_density(C, phase):
    """Mass density of a phase per total volume, kg/m^3."""
    return phase.density(np.asarray(C, dtype=float))


def sutherland_viscosity(species, T, db=None):
    rec = _db(db)[species] if isinstance(species, str) else species
    if rec.viscosity is None:
        raise PropertyDomainError(f"{rec.id} has no viscosity data")
    mu0, T0, S = rec.viscosity
    return sutherland(T, mu0, T0, S)


def wilke_mixture(x, values, mu, M):
    """Wilke mixing rule for viscosity or conductivity.

    ``values`` are the pure-component properties to mix; the interaction
    parameters are built from the pure viscosities ``mu`` and molar masses.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    M = np.asarray(M, dtype=float)
    values = np.asarray(values, dtype=float)
    if not np.all(mu > 0):
        raise PropertyDomainError("Wilke mixing needs positive pure viscosities")
    ratio_mu = np.sqrt(mu[:, None] / mu[None, :])
    ratio_M = (M[None, :] / M[:, None]) ** 0.25
    phi = (1.0 + ratio_mu * ratio_M) ** 2 / np.sqrt(8.0 * (1.0 + M[:, None] / M[None, :]))
    denom = phi @ x
    return float(np.sum(x * values / denom))


def suspension_viscosity(mu_g, V_s):
    """Gas viscosity corrected for a solid volume fraction ``V_s``."""
    if not 0.0 <= V_s < 0.5:
        raise PropertyDomainError(f"solid volume fraction {V_s} outside [0, 0.5)")
    return mu_g * (1.0 + V_s / 2.0) / (1.0 - 2.0 * V_s)


def serial_conductivity(V_g, k_g, V_s, k_s):
    """Layered-medium conductivity from volume fractions, W/(m K)."""
    V_s = np.asarray(V_s, dtype=float)
    k_s = np.asarray(k_s, dtype=float)
    if V_g + V_s.sum() > 1.0 + 1e-9:
        raise PropertyDomainError("volume fractions exceed one")
    return 1.0 / (V_g / k_g + float(np.sum(V_s / k_s)))


def mixture_internal_energy(T_m, P, C_s, C_g, db=None):
    """Energy density of the solid-gas mixture, J/m^3."""
    db = _db(db)
    H_s = db.solid.enthalpy(T_m, np.asarray(C_s, dtype=float))
    H_g = db.gas.enthalpy(T_m, np.asarray(C_g, dtype=float))
    return H_s + H_g - P * db.gas.volume(T_m, P, np.asarray(C_g, dtype=float))
