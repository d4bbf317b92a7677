"""Output artifacts: time-series CSV, steady-state summary, long-format plot
data, and comparison against the bundled reference tables."""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dae import report as derived_outputs
from .scenario import data_path

BAR = 1e5
KELVIN = 273.15
PORTS = ("s_in", "s_saltation", "s_enter", "s_x", "s_sep_vortex", "s_sep", "g_in", "g_x")


def fmt17(v):
    return format(float(v), ".17g")


def timeseries_columns(system):
    cols = ["t", "P", "T_m", "T_r", "T_w"]
    cols += [f"C_s:{sp}" for sp in system.db.solid.ids]
    cols += [f"C_g:{sp}" for sp in system.db.gas.ids]
    cols += ["eta", "eta_sal", "rho_s"]
    cols += [f"mdot_{p}" for p in PORTS]
    return cols


def timeseries_rows(system, result):
    for t, x, y, rep in zip(result.t, result.x, result.y, result.reports):
        C_s, C_g = system.split(x)[:2]
        yield [t, y[3], y[0], y[1], y[2], *C_s, *C_g,
               rep["eta"], rep["eta_sal"], rep["rho_s"], *(rep[f"mdot_{p}"] for p in PORTS)]


def write_timeseries(system, result, path):
    """SI units throughout (s, Pa, K, mol/m^3, kg/m^3, kg/s)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(timeseries_columns(system))
        for row in timeseries_rows(system, result):
            w.writerow([fmt17(v) for v in row])


def write_plot_data(system, result, path):
    """Long format (quantity, unit, t, value) for pressure, temperature and
    concentration profiles."""
    series = [("P", "bar", result.y[:, 3] / BAR)]
    for i, name in enumerate(("T_m", "T_r", "T_w")):
        series.append((name, "degC", result.y[:, i] - KELVIN))
    C = result.x
    for i, sp in enumerate(system.db.solid.ids):
        series.append((f"C_s:{sp}", "mol/m^3", C[:, i]))
    for i, sp in enumerate(system.db.gas.ids):
        series.append((f"C_g:{sp}", "mol/m^3", C[:, system.ns + i]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "unit", "t", "value"])
        for name, unit, values in series:
            for t, v in zip(result.t, values):
                w.writerow([name, unit, fmt17(t), fmt17(v)])


def steady_summary(name, system, x, y):
    """Steady-state results in the layout of the reference tables (bar, degC,
    percent)."""
    rep = derived_outputs(system, x, y)
    bc = system.bc
    flow = system.flow
    return {
        "name": name,
        "pressure": {
            "P": y[3] / BAR,
            "P_in": bc.P_in / BAR,
            "P_out": bc.P_out / BAR,
            "P_mean": 0.5 * (bc.P_in + bc.P_out) / BAR,
        },
        "temperature": {
            "T_m": y[0] - KELVIN,
            "T_in": bc.T_in - KELVIN,
            "T_r": y[1] - KELVIN,
            "T_w": y[2] - KELVIN,
        },
        "efficiency": {
            "eta": 100.0 * rep["eta"],
            "rho_s": rep["rho_s"],
            "eta_sal": rep["eta_sal"],
            "f_N_inverse": 1.0 / flow.f_N,
            "f_c": flow.f_c,
            "f_D_scale": flow.f_D_scale,
        },
        "mass_flows": {p: rep[f"mdot_{p}"] for p in PORTS},
    }


def format_summary(summary):
    lines = [f"Steady state: {summary['name']}"]
    titles = {"pressure": "Pressure [bar]", "temperature": "Temperature [degC]",
              "efficiency": "Efficiency [%], solid density [kg/m^3]", "mass_flows": "Mass flows [kg/s]"}
    for key, title in titles.items():
        block = summary[key]
        lines.append("")
        lines.append(title)
        lines.append("  " + "".join(f"{k:>14}" for k in block))
        lines.append("  " + "".join(f"{v:>14.6g}" for v in block.values()))
    return "\n".join(lines) + "\n"


def write_summary(summary, directory):
    directory = Path(directory)
    plain = {k: ({kk: float(vv) for kk, vv in v.items()} if isinstance(v, dict) else v)
             for k, v in summary.items()}
    (directory / "summary.yaml").write_text(yaml.safe_dump(plain, sort_keys=False))
    (directory / "summary.txt").write_text(format_summary(summary))


def load_summary(path):
    return yaml.safe_load(Path(path).read_text())


# ---------------------------------------------------------------------------
# comparison with the bundled tables
# ---------------------------------------------------------------------------

# summary cell -> (reference table, reference column)
COMPARED = {
    ("pressure", "P"): ("pressure", "P"),
    ("temperature", "T_m"): ("temperature", "T_out_ref"),
    ("efficiency", "eta"): ("efficiency", "eta_ref"),
    ("efficiency", "rho_s"): ("efficiency", "rho_s_ref"),
    ("efficiency", "eta_sal"): ("efficiency", "eta_sal"),
}

# absolute in table units, or relative when given as a string ending in %
DEFAULT_TOLERANCE = {"P": 0.002, "T_m": 5.0, "eta": 0.5, "rho_s": "5%", "eta_sal": 0.05}


def load_reference(path=None):
    """{preset: {table: {column: value}}}."""
    raw = yaml.safe_load(Path(path or data_path("reference_tables.yaml")).read_text())
    out = {}
    for table, entry in raw.items():
        for name, row in entry["rows"].items():
            out.setdefault(name, {})[table] = dict(zip(entry["columns"], map(float, row)))
    return out


def parse_tolerance(text):
    """``"P=0.001,rho_s=2%"`` -> tolerance mapping merged over the defaults."""
    tol = dict(DEFAULT_TOLERANCE)
    if not text:
        return tol
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in tol:
            raise ValueError(f"bad tolerance item {item!r}; keys are {', '.join(tol)}")
        number = value[:-1] if value.endswith("%") else value
        try:
            if float(number) < 0:
                raise ValueError
        except ValueError:
            raise ValueError(f"bad tolerance value {value!r} for {key}") from None
        tol[key] = value if value.endswith("%") else float(value)
    return tol


@dataclass
class Cell:
    table: str
    column: str
    value: float
    reference: float
    tolerance: object

    @property
    def diff(self):
        return self.value - self.reference

    @property
    def rel(self):
        return self.diff / self.reference if self.reference else math.inf * (self.diff != 0)

    @property
    def passed(self):
        if not math.isfinite(self.value):
            return False
        if isinstance(self.tolerance, str):
            return abs(self.rel) <= float(self.tolerance[:-1]) / 100.0
        return abs(self.diff) <= self.tolerance


@dataclass
class Comparison:
    name: str
    cells: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.cells)

    @property
    def failed(self):
        return [f"{c.table}.{c.column}" for c in self.cells if not c.passed]

    def format(self):
        lines = [f"Comparison for {self.name}: {'PASS' if self.passed else 'FAIL'}",
                 f"  {'cell':<22}{'value':>12}{'reference':>12}{'diff':>12}{'rel':>12}{'tol':>8}  status"]
        for c in self.cells:
            lines.append(f"  {c.table + '.' + c.column:<22}{c.value:>12.6g}{c.reference:>12.6g}"
                         f"{c.diff:>12.4g}{c.rel:>12.4g}{str(c.tolerance):>8}  {'ok' if c.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def compare_report(summary, reference, tolerance=None):
    """Cell-by-cell differences of a steady summary against one row of the
    reference tables (as returned by ``load_reference()[name]``).

    Cells missing from the summary count as failures; ``nan`` never passes.
    """
    tol = tolerance or DEFAULT_TOLERANCE
    cmp = Comparison(summary.get("name", "?"))
    for (table, col), (rtable, rcol) in COMPARED.items():
        ref = reference.get(rtable, {}).get(rcol)
        if ref is None:
            continue
        try:
            value = float(summary[table][col])
        except (KeyError, TypeError, ValueError):
            value = math.nan
        cmp.cells.append(Cell(table, col, value, ref, tol[col]))
    return cmp
