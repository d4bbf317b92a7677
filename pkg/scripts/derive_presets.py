"""Regenerate the bundled cy1..cy5 scenario presets.

The plant tables give geometry, volumetric inflow, boundary pressures and
temperatures, false air and the calibrated correction factors, but not the
solids loading or the particle sizes. For each cyclone this script solves
for the solid/gas mass ratio c_0 and the two particle diameters (d_m for the
vortex separation, d_med for the loading limit) such that the steady state
at the tabulated correction factors reproduces the tabulated simulated
efficiency, solid density and saltation fraction. The results are rounded
and written to src/cyclonesim/data/presets/.

Run:  python3 scripts/derive_presets.py [--check]
"""
import argparse
from pathlib import Path

import numpy as np
from scipy.optimize import root

from cyclonesim.dae import report, steady_state
from cyclonesim.scenario import build_system, parse_scenario

OUT = Path(__file__).resolve().parents[1] / "src" / "cyclonesim" / "data" / "presets"

# volumetric inflow m^3/s, false air m^3/s, P_in/P_out bar, T_in degC,
# 1/f_N, f_c, f_D scale, simulated (eta, rho_s kg/m^3, eta_sal),
# reference (eta, rho_s), lining conductivity W/(m K)
TABLE = {
    "cy1": (173.1, 0.95, 0.9529, 0.9452, 321.65, 22, 6.5, 410, (0.9496, 0.499, 0.60), (0.9494, 0.504), 0.4),
    "cy2": (223.83, 0.91, 0.9616, 0.9550, 526.13, 10.1, 4.2, 815, (0.8901, 0.378, 0.56), (0.8900, 0.380), 0.8),
    "cy3": (259.53, 0.45, 0.9710, 0.9631, 676.45, 8.5, 4.85, 890, (0.8694, 0.354, 0.51), (0.8700, 0.354), 0.8),
    "cy4": (289.59, 0.44, 0.9810, 0.9729, 812.79, 7.3, 5.2, 870, (0.8506, 0.380, 0.54), (0.8500, 0.388), 0.8),
    "cy5": (309.34, 0.44, 0.9906, 0.9830, 903.80, 4.2, 6.72, 840, (0.7500, 0.277, 0.37), (0.7500, 0.277), 0.8),
}

# mean of the external pressures as printed, bar
MEAN_P = {"cy1": 0.9490, "cy2": 0.9583, "cy3": 0.9671, "cy4": 0.9770, "cy5": 0.9868}

GAS = "{CO2: 0.30, N2: 0.595, O2: 0.03, Ar: 0.007, H2O: 0.065, CO: 0.003}"
RAW_MEAL = "{CaCO3: 0.78, SiO2: 0.14, Al2O3: 0.035, Fe2O3: 0.025, CaO: 0.02}"
# the lowest stage receives meal already calcined in the calciner
CALCINED_MEAL = "{CaCO3: 0.12, CaO: 0.58, SiO2: 0.19, Al2O3: 0.05, Fe2O3: 0.035, C2S: 0.025}"

TEMPLATE = """\
# Cyclone {n} of the five-stage preheater tower.
# Boundary data, geometry and correction factors are plant reference values.
# Gas and solid compositions are typical preheater values (the per-compound
# inflows are only available graphically) and the solids loading and
# particle sizes are back-solved by scripts/derive_presets.py.
name: {name}
geometry:
  h_t: {h_t} m
  h_c: {h_c} m
  h_x: {h_x} m
  r_c: {r_c} m
  r_r: {r_r} m
  r_x: {r_x} m
  r_d: {r_d} m
  r_in: {r_in} m
  A_in: {A_in} m^2
  wall_thickness: 0.008 m
inflow:
  volumetric_flow: {Vdot} m^3/s
  temperature: {T_in} degC
  pressure_in: {P_in} bar
  pressure_out: {P_out} bar
  ambient_temperature: 25 degC
  false_air: {fa} m^3/s
  solid_gas_ratio: {c0}
  gas_mole_fractions: {gas}
  solid_mass_fractions: {solids}
  provenance: approximated-from-figure
flow:
  d_m: {d_m} um
  d_med: {d_med} um
  d_p: {d_m} um
  f_c: {f_c}
  f_N_inverse: {f_N_inv}
  f_D_scale: {f_D}
  u_mf: 0.16 m/s
materials:
  refractory:
    # effective lining conductivity: {k_r} W/(m K) gives the same
    # conductance per area (4 W/(m^2 K)) for every lining thickness
    conductivity: {k_r} W/(m*K)
reactions:
  tuning:
    calcination: 0.001
output:
  t_end: 50 h
  interval: 60 s
  fast_interval: 0.1 s
  fast_window: 300 s
targets:
  efficiency: {eta_ref}
  solid_density: {rho_ref} kg/m^3
  pressure: {P_mean} bar
  saltation: {sal}
"""

GEOMETRY = {
    "cy1": (18.3, 7.4, 3.5, 3.5, 3.6, 1.9, 0.3, 2.8, 11.0),
    "cy2": (11.4, 7.3, 3.4, 3.4, 3.6, 2.4, 0.5, 2.7, 13.3),
    "cy3": (11.2, 7.8, 3.4, 3.4, 3.6, 2.5, 0.5, 2.7, 13.7),
    "cy4": (12.0, 8.1, 3.5, 3.5, 3.7, 2.6, 0.5, 2.8, 14.8),
    "cy5": (12.0, 8.1, 3.5, 3.5, 3.7, 2.6, 0.5, 2.8, 14.8),
}


def render(name, c0, d_m, d_med):
    Vdot, fa, P_in, P_out, T_in, f_N_inv, f_c, f_D, sim, ref, k_r = TABLE[name]
    geo = dict(zip(("h_t", "h_c", "h_x", "r_c", "r_r", "r_x", "r_d", "r_in", "A_in"), GEOMETRY[name]))
    return TEMPLATE.format(
        n=name[-1], name=name, Vdot=Vdot, T_in=T_in, P_in=P_in, P_out=P_out, fa=fa,
        c0=c0, d_m=d_m, d_med=d_med, f_c=f_c, f_N_inv=f_N_inv, f_D=f_D, k_r=k_r,
        gas=GAS, solids=CALCINED_MEAL if name == "cy5" else RAW_MEAL,
        eta_ref=ref[0], rho_ref=ref[1], P_mean=MEAN_P[name], sal=sim[2], **geo,
    )


def outputs(text, warm=None):
    system = build_system(parse_scenario(text))
    ss = steady_state(system, *(warm or (None, None)))
    r = report(system, ss.x, ss.y)
    return np.array([r["eta"], r["rho_s"], r["eta_sal"]]), ss


def solve(name, guess=(0.8, 25.0, 20.0)):
    target = np.array(TABLE[name][8])
    state = {}

    def F(u):
        c0, d_m, d_med = np.exp(u)
        out, ss = outputs(render(name, c0, d_m, d_med), state.get("warm"))
        state["warm"] = (ss.x, ss.y)
        return (out - target) / target

    sol = root(F, np.log(guess), method="hybr", options={"xtol": 1e-10})
    if not sol.success:
        raise RuntimeError(f"{name}: {sol.message}")
    c0, d_m, d_med = np.exp(sol.x)
    return float(f"{c0:.5g}"), float(f"{d_m:.5g}"), float(f"{d_med:.5g}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="only report the bundled presets")
    args = ap.parse_args()
    for name in TABLE:
        if args.check:
            text = (OUT / f"{name}.yaml").read_text()
        else:
            c0, d_m, d_med = solve(name)
            text = render(name, c0, d_m, d_med)
            (OUT / f"{name}.yaml").write_text(text)
        out, ss = outputs(text)
        print(f"{name}: eta={out[0]:.4f} rho_s={out[1]:.4f} eta_sal={out[2]:.3f} "
              f"P={ss.y[3] / 1e5:.5f} bar T_m={ss.y[0] - 273.15:.2f} degC")


if __name__ == "__main__":
    main()
