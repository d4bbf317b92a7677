"""Scenario files: YAML with explicit units on every physical quantity.

A scenario either spells out its geometry or names a preset (``cy1`` ..
``cy5``); any keys given next to ``preset`` override the preset file.
"""
import os
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .dae import BoundaryConditions, CycloneSystem, SolverSettings
from .geometry import CycloneGeometry, GeometryError
from .heat_transfer import HeatTransferParams
from .kinetics import load_reactions
from .thermo import R_GAS, UnknownSpeciesError, default_database
from .transport import FlowParameters
from .units import UnitError, fmt, to_si

DATA_DIR_ENV = "CYCLONESIM_DATA_DIR"
PRESETS = ("cy1", "cy2", "cy3", "cy4", "cy5")


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` is the dotted key, ``line`` 1-based when known."""

    def __init__(self, message, field=None, line=None, source=None):
        where = ""
        if source or line:
            where = f"{source or '<scenario>'}" + (f":{line}" if line else "") + ": "
        super().__init__(f"{where}{field + ': ' if field else ''}{message}")
        self.field = field
        self.line = line
        self.source = source


def data_path(*parts):
    """Bundled data file, or the same relative path under $CYCLONESIM_DATA_DIR."""
    root = os.environ.get(DATA_DIR_ENV)
    if root:
        return Path(root).joinpath(*parts)
    return Path(str(resources.files("cyclonesim.data").joinpath(*parts)))


@dataclass(frozen=True)
class Inflow:
    volumetric_flow: float  # m^3/s of suspension at inlet conditions
    temperature: float
    pressure_in: float
    pressure_out: float
    gas_mole_fractions: dict
    solid_mass_fractions: dict
    solid_gas_ratio: float = 0.0  # c_0, kg solid per kg gas
    ambient_temperature: float = 298.15
    false_air: float = 0.0
    provenance: str = ""


@dataclass(frozen=True)
class Targets:
    efficiency: float = None
    solid_density: float = None
    pressure: float = None
    saltation: float = None


@dataclass(frozen=True)
class Output:
    t_end: float = 50 * 3600.0
    interval: float = 60.0
    fast_interval: float = 0.1
    fast_window: float = 300.0

    def grid(self, t_end=None):
        t_end = self.t_end if t_end is None else t_end
        fast = np.arange(1, int(round(min(self.fast_window, t_end) / self.fast_interval)) + 1) * self.fast_interval
        slow = np.arange(self.fast_window + self.interval, t_end + 0.5 * self.interval, self.interval)
        grid = np.concatenate([fast, slow])
        grid = grid[grid < t_end * (1 - 1e-12)]
        return np.append(grid, t_end) if t_end > 0 else grid


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    geometry: CycloneGeometry
    inflow: Inflow
    flow: FlowParameters = field(default_factory=FlowParameters)
    heat: HeatTransferParams = field(default_factory=HeatTransferParams)
    refractory: dict = field(default_factory=dict)
    wall: dict = field(default_factory=dict)
    reaction_tuning: dict = field(default_factory=dict)
    solver: SolverSettings = field(default_factory=SolverSettings)
    output: Output = field(default_factory=Output)
    targets: Targets = field(default_factory=Targets)
    # where the scenario came from; not part of its identity
    preset: str = field(default=None, compare=False)

    def replace(self, **kw):
        return replace(self, **kw)

    def with_flow(self, **kw):
        return replace(self, flow=replace(self.flow, **kw))


# ---------------------------------------------------------------------------
# building the model
# ---------------------------------------------------------------------------

def _fractions(mapping, phase, what):
    v = phase.vector(mapping)
    if np.any(v < 0):
        raise ScenarioError("fractions must be non-negative", what)
    total = v.sum()
    if not abs(total - 1.0) <= 1e-6:
        raise ScenarioError(f"fractions sum to {total:.9g}, expected 1", what)
    return v / total


def boundary_conditions(cfg, db=None):
    """Inlet concentrations and velocity from the volumetric inflow.

    The suspension enters at ``pressure_in`` and ``temperature``; the gas
    fills whatever volume the solids leave.
    """
    db = db or default_database()
    inf = cfg.inflow
    x_g = _fractions(inf.gas_mole_fractions, db.gas, "inflow.gas_mole_fractions")
    if inf.solid_gas_ratio > 0:
        w_s = _fractions(inf.solid_mass_fractions, db.solid, "inflow.solid_mass_fractions")
    else:
        w_s = np.zeros(len(db.solid))
    M_g = float(x_g @ db.gas.M)
    a = inf.pressure_in / (R_GAS * inf.temperature)
    b = inf.solid_gas_ratio * M_g * float(np.sum(w_s / db.solid.rho))
    n_gas = a / (1.0 + a * b)
    rho_s = inf.solid_gas_ratio * M_g * n_gas
    return BoundaryConditions(
        v_in=inf.volumetric_flow / cfg.geometry.A_in,
        T_in=inf.temperature,
        C_s_in=rho_s * w_s / db.solid.M,
        C_g_in=n_gas * x_g,
        P_out=inf.pressure_out,
        P_in=inf.pressure_in,
        T_e=inf.ambient_temperature,
        false_air=inf.false_air,
    )


def build_system(cfg, db=None, reactions=None):
    """CycloneSystem for a scenario."""
    db = db or default_database()
    reactions = reactions or load_reactions(db=db)
    if cfg.reaction_tuning:
        try:
            reactions = reactions.with_tuning(cfg.reaction_tuning)
        except ValueError as exc:
            raise ScenarioError(str(exc), "reactions.tuning") from None
    return CycloneSystem(
        db=db, reactions=reactions, geometry=cfg.geometry, flow=cfg.flow, heat=cfg.heat,
        refractory=replace(db.refractory, **cfg.refractory),
        wall=replace(db.wall, **cfg.wall),
        bc=boundary_conditions(cfg, db), settings=cfg.solver,
    )


# ---------------------------------------------------------------------------
# YAML <-> ScenarioConfig
# ---------------------------------------------------------------------------

GEOMETRY_KEYS = ("h_t", "h_c", "h_x", "r_c", "r_r", "r_x", "r_d", "r_in", "wall_thickness", "w_in")
FLOW_LENGTHS = ("d_m", "d_med", "d_p")
MATERIAL_UNITS = {"density": "kg/m^3", "specific_heat": "J/(kg*K)",
                  "conductivity": "W/(m*K)", "molar_mass": "kg/mol"}
SOLVER_UNITS = {"dt_init": "s", "dt_min": "s", "dt_max": "s",
                "initial_temperature": "K", "initial_lining_temperature": "K",
                "initial_solids": "mol/m^3"}
SOLVER_PLAIN = ("growth", "rtol", "newton_rtol", "max_newton", "steady_rtol")


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        # compositions are replaced whole, never blended with the preset's
        nested = isinstance(v, dict) and isinstance(out.get(k), dict) and not k.endswith("_fractions")
        out[k] = _merge(out[k], v) if nested else v
    return out


def _locate(node, path):
    """Line (1-based) of the deepest key of ``path`` present in a composed YAML node."""
    line = None
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            break
        for k, v in node.value:
            if k.value == key:
                line = k.start_mark.line + 1
                node = v
                break
        else:
            break
    return line


class _Reader:
    """Typed access to a raw mapping that reports the offending key."""

    def __init__(self, raw, node, source):
        self.raw = raw
        self.node = node
        self.source = source

    def error(self, path, message):
        return ScenarioError(message, ".".join(path), _locate(self.node, path), self.source)

    def section(self, *path, required=False):
        d = self.raw
        for i, k in enumerate(path):
            if not isinstance(d, dict):
                raise self.error(path[:i], "expected a mapping")
            if k not in d or d[k] is None:
                if required:
                    raise self.error(path, "missing required section")
                return {}
            d = d[k]
        if not isinstance(d, dict):
            raise self.error(path, "expected a mapping")
        return d

    def quantity(self, path, unit, required=True, default=None):
        d = self.section(*path[:-1], required=required)
        if path[-1] not in d or d[path[-1]] is None:
            if required:
                raise self.error(path, "missing required field")
            return default
        try:
            return to_si(d[path[-1]], unit)
        except UnitError as exc:
            raise self.error(path, str(exc)) from None

    def number(self, path, required=False, default=None, kind=float):
        d = self.section(*path[:-1], required=required)
        v = d.get(path[-1])
        if v is None:
            if required:
                raise self.error(path, "missing required field")
            return default
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(path, f"expected a number, got {v!r}")
        if kind is int and v != int(v):
            raise self.error(path, f"expected an integer, got {v!r}")
        return kind(v)


def _load_preset_raw(name):
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}", "preset")
    path = data_path("presets", f"{name}.yaml")
    try:
        with open(path) as fh:
            return yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read preset file {path}: {exc.strerror}", "preset") from None


def parse_scenario(text, source=None):
    """ScenarioConfig from YAML text."""
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None, source=source) from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping", source=source)
    preset = raw.get("preset")
    if preset is not None:
        base = _load_preset_raw(preset)
        raw = _merge(base, {k: v for k, v in raw.items() if k != "preset"})
        raw["preset"] = preset
    return _from_raw(_Reader(raw, node, source))


def _from_raw(r):
    raw = r.raw
    name = raw.get("name") or raw.get("preset") or "scenario"

    g = r.section("geometry", required=True)
    geo_kw = {}
    for key in GEOMETRY_KEYS:
        required = key not in ("wall_thickness", "w_in")
        v = r.quantity(("geometry", key), "m", required=required)
        if v is not None:
            geo_kw[key] = v
    geo_kw["A_in"] = r.quantity(("geometry", "A_in"), "m^2")
    unknown = set(g) - set(GEOMETRY_KEYS) - {"A_in"}
    if unknown:
        raise r.error(("geometry", sorted(unknown)[0]), "unknown geometry field")
    try:
        geometry = CycloneGeometry(**geo_kw)
    except GeometryError as exc:
        raise r.error(("geometry",), str(exc)) from None

    inflow = _inflow(r)

    f = r.section("flow")
    flow_kw = {k: r.quantity(("flow", k), "m", required=False) for k in FLOW_LENGTHS}
    flow_kw["u_mf"] = r.quantity(("flow", "u_mf"), "m/s", required=False)
    for k in ("f_c", "f_D_scale"):
        flow_kw[k] = r.number(("flow", k))
    if "f_N" in f and "f_N_inverse" in f:
        raise r.error(("flow", "f_N"), "give either f_N or f_N_inverse, not both")
    if "f_N_inverse" in f:
        inv = r.number(("flow", "f_N_inverse"))
        if not inv > 0:
            raise r.error(("flow", "f_N_inverse"), "must be positive")
        flow_kw["f_N"] = 1.0 / inv
    else:
        flow_kw["f_N"] = r.number(("flow", "f_N"))
    try:
        flow = FlowParameters(**{k: v for k, v in flow_kw.items() if v is not None})
    except ValueError as exc:
        raise r.error(("flow",), str(exc)) from None

    h = r.section("heat")
    heat_kw = {k: r.number(("heat", k)) for k in ("eps_p", "eps_r", "eps_w", "eps_e")}
    heat_kw["h_ext"] = r.quantity(("heat", "h_ext"), "W/(m^2*K)", required=False)
    adiabatic = h.get("adiabatic", False)
    if not isinstance(adiabatic, bool):
        raise r.error(("heat", "adiabatic"), f"expected true or false, got {adiabatic!r}")
    heat_kw["adiabatic"] = adiabatic
    try:
        heat = HeatTransferParams(**{k: v for k, v in heat_kw.items() if v is not None})
    except ValueError as exc:
        raise r.error(("heat",), str(exc)) from None

    materials = {}
    for which in ("refractory", "wall"):
        sec = r.section("materials", which)
        over = {}
        for key, v in sec.items():
            if key not in MATERIAL_UNITS:
                raise r.error(("materials", which, key), "unknown material property")
            over[key] = r.quantity(("materials", which, key), MATERIAL_UNITS[key])
            if not over[key] > 0:
                raise r.error(("materials", which, key), "must be positive")
        materials[which] = over

    tuning = {}
    for key in r.section("reactions", "tuning"):
        v = r.number(("reactions", "tuning", key))
        if not v > 0:
            raise r.error(("reactions", "tuning", key), "tuning factors must be positive")
        tuning[key] = v

    solver_kw = {k: r.quantity(("solver", k), u, required=False) for k, u in SOLVER_UNITS.items()}
    for k in SOLVER_PLAIN:
        solver_kw[k] = r.number(("solver", k), kind=int if k == "max_newton" else float)
    solver = SolverSettings(**{k: v for k, v in solver_kw.items() if v is not None})

    out_kw = {
        "t_end": r.quantity(("output", "t_end"), "s", required=False),
        "interval": r.quantity(("output", "interval"), "s", required=False),
        "fast_interval": r.quantity(("output", "fast_interval"), "s", required=False),
        "fast_window": r.quantity(("output", "fast_window"), "s", required=False),
    }
    output = Output(**{k: v for k, v in out_kw.items() if v is not None})
    if output.t_end < 0:
        raise r.error(("output", "t_end"), "must be non-negative")

    targets = Targets(
        efficiency=r.number(("targets", "efficiency")),
        solid_density=r.quantity(("targets", "solid_density"), "kg/m^3", required=False),
        pressure=r.quantity(("targets", "pressure"), "Pa", required=False),
        saltation=r.number(("targets", "saltation")),
    )
    if targets.efficiency is not None and not 0 < targets.efficiency < 1:
        raise r.error(("targets", "efficiency"), "must lie in (0, 1)")

    return ScenarioConfig(
        name=str(name), geometry=geometry, inflow=inflow, flow=flow, heat=heat,
        refractory=materials["refractory"], wall=materials["wall"], reaction_tuning=tuning,
        solver=solver, output=output, targets=targets, preset=raw.get("preset"),
    )


def _inflow(r):
    db = default_database()
    kw = {
        "volumetric_flow": r.quantity(("inflow", "volumetric_flow"), "m^3/s"),
        "temperature": r.quantity(("inflow", "temperature"), "K"),
        "pressure_in": r.quantity(("inflow", "pressure_in"), "Pa"),
        "pressure_out": r.quantity(("inflow", "pressure_out"), "Pa"),
        "ambient_temperature": r.quantity(("inflow", "ambient_temperature"), "K", False, 298.15),
        "false_air": r.quantity(("inflow", "false_air"), "m^3/s", False, 0.0),
        "solid_gas_ratio": r.number(("inflow", "solid_gas_ratio"), default=0.0),
        "provenance": str(r.section("inflow").get("provenance") or ""),
    }
    for key in ("volumetric_flow", "false_air", "solid_gas_ratio"):
        if kw[key] < 0:
            raise r.error(("inflow", key), "must be non-negative")
    for key in ("temperature", "pressure_in", "pressure_out", "ambient_temperature"):
        if not kw[key] > 0:
            raise r.error(("inflow", key), "must be positive")
    for key, phase in (("gas_mole_fractions", db.gas), ("solid_mass_fractions", db.solid)):
        required = key == "gas_mole_fractions" or kw["solid_gas_ratio"] > 0
        sec = r.section("inflow", key, required=required)
        comp = {}
        for sid in sec:
            v = r.number(("inflow", key, sid))
            if v < 0:
                raise r.error(("inflow", key, sid), "fractions must be non-negative")
            comp[sid] = v
        try:
            if comp:
                _fractions(comp, phase, key)
        except UnknownSpeciesError as exc:
            raise r.error(("inflow", key), f"unknown species {exc}") from None
        except ScenarioError as exc:
            raise r.error(("inflow", key), str(exc).split(": ", 1)[-1]) from None
        kw[key] = comp
    return Inflow(**kw)


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", source=str(path)) from None
    return parse_scenario(text, source=str(path))


def preset_scenario(name):
    return parse_scenario(f"preset: {name}\n", source=f"preset {name}")


def scenario_to_dict(cfg):
    """Plain mapping in SI units; floats written with round-trip precision."""
    q = fmt
    geo = {k: q(getattr(cfg.geometry, k), "m") for k in GEOMETRY_KEYS}
    geo["A_in"] = q(cfg.geometry.A_in, "m^2")
    inf = cfg.inflow
    flow = {k: q(getattr(cfg.flow, k), "m") for k in FLOW_LENGTHS}
    flow.update(f_c=cfg.flow.f_c, f_N=cfg.flow.f_N, f_D_scale=cfg.flow.f_D_scale,
                u_mf=q(cfg.flow.u_mf, "m/s"))
    heat = {k: getattr(cfg.heat, k) for k in ("eps_p", "eps_r", "eps_w", "eps_e")}
    if cfg.heat.h_ext is not None:
        heat["h_ext"] = q(cfg.heat.h_ext, "W/(m^2*K)")
    if cfg.heat.adiabatic:
        heat["adiabatic"] = True
    solver = {}
    for f in fields(SolverSettings):
        v = getattr(cfg.solver, f.name)
        if v is None:
            continue
        solver[f.name] = q(v, SOLVER_UNITS[f.name]) if f.name in SOLVER_UNITS else v
    out = {
        "name": cfg.name,
        "geometry": geo,
        "inflow": {
            "volumetric_flow": q(inf.volumetric_flow, "m^3/s"),
            "temperature": q(inf.temperature, "K"),
            "pressure_in": q(inf.pressure_in, "Pa"),
            "pressure_out": q(inf.pressure_out, "Pa"),
            "ambient_temperature": q(inf.ambient_temperature, "K"),
            "false_air": q(inf.false_air, "m^3/s"),
            "solid_gas_ratio": inf.solid_gas_ratio,
            "gas_mole_fractions": dict(inf.gas_mole_fractions),
            "solid_mass_fractions": dict(inf.solid_mass_fractions),
            "provenance": inf.provenance,
        },
        "flow": flow,
        "heat": heat,
        "materials": {
            "refractory": {k: q(v, MATERIAL_UNITS[k]) for k, v in cfg.refractory.items()},
            "wall": {k: q(v, MATERIAL_UNITS[k]) for k, v in cfg.wall.items()},
        },
        "reactions": {"tuning": dict(cfg.reaction_tuning)},
        "solver": solver,
        "output": {k: q(getattr(cfg.output, k), "s") for k in ("t_end", "interval", "fast_interval", "fast_window")},
    }
    t = cfg.targets
    targets = {}
    if t.efficiency is not None:
        targets["efficiency"] = t.efficiency
    if t.solid_density is not None:
        targets["solid_density"] = q(t.solid_density, "kg/m^3")
    if t.pressure is not None:
        targets["pressure"] = q(t.pressure, "Pa")
    if t.saltation is not None:
        targets["saltation"] = t.saltation
    if targets:
        out["targets"] = targets
    return out


def dump_scenario(cfg):
    """YAML text that loads back to an equal ScenarioConfig.

    The preset name is kept as the scenario name only; the dump is fully
    explicit so it does not depend on the bundled preset files.
    """
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)


def write_scenario(cfg, path):
    Path(path).write_text(dump_scenario(cfg))
