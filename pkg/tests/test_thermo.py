import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclonesim import thermo
from cyclonesim.thermo import (R_GAS, T_REF, PropertyDomainError, UnknownSpeciesError, enthalpy,
                               fit_sutherland, heat_capacity, mixture_internal_energy, phase_density,
                               serial_conductivity, suspension_viscosity, sutherland_viscosity, volume,
                               wilke_mixture)

# oracles computed independently (30-digit mpmath) and frozen here
CALCITE_CP_298_15 = -1.41201891611420161
N2_MU_650 = 3.15140067007910265e-05
WILKE_N2_CO2_300 = 1.62405550125497528e-05
SERIAL_09_01 = 0.0554185977714229366


def test_argon_cp_constant(db):
    for T in (300.0, 800.0, 1400.0):
        assert heat_capacity("Ar", T) == pytest.approx(20.79, rel=1e-14)


def test_cao_cp_polynomial(db):
    expected = 71.69 - 3.08e-3 * 200 + 0.22e-5 * 200**2
    assert heat_capacity("CaO", 200.0) == pytest.approx(expected, rel=1e-14)


def test_calcite_five_term_as_printed(db):
    # the printed expression is nonphysical at room temperature
    model = thermo.CalciteCp(0.0, 0.0, 0.0, (298.0, 750.0), (-184.79, 0.32e-3, -0.13e-5, -3.69e6, 3883.5))
    assert float(model.raw(298.15)) == pytest.approx(CALCITE_CP_298_15, rel=1e-12)


def test_calcite_falls_back_to_constant(db):
    assert any("CaCO3" in d for d in db.diagnostics)
    cp = heat_capacity("CaCO3", 298.15)
    assert 60.0 <= cp <= 120.0
    assert type(db["CaCO3"].cp_model) is thermo.PolynomialCp


def test_cp_clamped_outside_range(db):
    # SiO2 is tabulated from 844 K
    assert heat_capacity("SiO2", 500.0) == pytest.approx(heat_capacity("SiO2", 844.0))
    assert "SiO2" in db.solid.range_violations


def test_unknown_species_raises(db):
    with pytest.raises(UnknownSpeciesError):
        heat_capacity("Unobtainium", 300.0)


def test_enthalpy_at_reference_is_formation(db):
    n = db.gas.vector(CO2=2.0, N2=1.0)
    assert enthalpy(T_REF, 1e5, n, db.gas) == pytest.approx(2 * -393.51e3, rel=1e-12)


def test_calcination_enthalpy(db):
    dH = (db["CaO"].formation_enthalpy + db["CO2"].formation_enthalpy
          - db["CaCO3"].formation_enthalpy)
    assert dH == pytest.approx(179.4e3, abs=2e3)


@given(st.floats(300, 1500), st.floats(1e-3, 1e3))
@settings(max_examples=40, deadline=None)
def test_homogeneity(T, lam):
    db = thermo.default_database()
    rng = np.random.default_rng(7)
    for phase in (db.solid, db.gas):
        n = rng.uniform(0, 5, len(phase))
        H1, H2 = enthalpy(T, 1e5, n, phase), enthalpy(T, 1e5, lam * n, phase)
        V1, V2 = volume(T, 1e5, n, phase), volume(T, 1e5, lam * n, phase)
        assert H2 == pytest.approx(lam * H1, rel=1e-12)
        assert V2 == pytest.approx(lam * V1, rel=1e-12)


def test_enthalpy_increases_with_temperature(db):
    n = db.gas.vector(CO2=1.0, N2=3.0, H2O=0.5)
    T = np.linspace(300, 1400, 50)
    H = [enthalpy(t, 1e5, n, db.gas) for t in T]
    assert np.all(np.diff(H) > 0)


def test_gas_volume_ideal(db):
    n = db.gas.vector(N2=1.0)
    assert volume(273.15, 101325.0, n, db.gas) == pytest.approx(0.022414, rel=1e-4)
    with pytest.raises(PropertyDomainError):
        volume(300.0, 0.0, n, db.gas)


def test_solid_volume(db):
    n = db.solid.vector(CaCO3=1.0)
    assert volume(300.0, 1e5, n, db.solid) == pytest.approx(0.10009 / 2710, rel=1e-12)
    assert volume(300.0, 1e5, np.zeros(len(db.solid)), db.solid) == 0.0


def test_phase_density(db):
    assert phase_density(np.zeros(len(db.gas)), db.gas) == 0.0
    assert phase_density(db.gas.vector(CO2=1.0), db.gas) == pytest.approx(0.04401, rel=1e-12)


def test_sutherland_reproduces_both_points(db):
    for sid in ("CO2", "N2", "O2", "Ar", "CO", "H2O", "H2"):
        (Ta, ma), (Tb, mb) = db[sid].viscosity_points
        assert sutherland_viscosity(sid, Ta) == pytest.approx(ma, rel=1e-9)
        assert sutherland_viscosity(sid, Tb) == pytest.approx(mb, rel=1e-9)


def test_sutherland_co2_at_1000K(db):
    assert sutherland_viscosity("CO2", 1000.0) == pytest.approx(41.18e-6, rel=1e-6)


def test_sutherland_n2_against_bisection_oracle(db):
    assert sutherland_viscosity("N2", 650.0) == pytest.approx(N2_MU_650, rel=1e-10)


def test_fit_sutherland_degenerate():
    with pytest.raises(PropertyDomainError):
        # mu growing exactly like T^1.5 needs an infinite constant
        fit_sutherland(300.0, 1e-5, 1200.0, 8e-5)


def test_wilke_single_species():
    assert wilke_mixture([1.0], [2e-5], [2e-5], [0.028]) == pytest.approx(2e-5, rel=1e-15)


def test_wilke_identical_species_exact():
    v = wilke_mixture([0.25, 0.75], [2e-5, 2e-5], [2e-5, 2e-5], [0.03, 0.03])
    assert v == 2e-5


def test_wilke_n2_co2_oracle():
    v = wilke_mixture([0.5, 0.5], [17.89e-6, 15.0e-6], [17.89e-6, 15.0e-6], [28.014, 44.01])
    assert v == pytest.approx(WILKE_N2_CO2_300, rel=1e-12)


def test_wilke_rejects_nonpositive_viscosity():
    with pytest.raises(PropertyDomainError):
        wilke_mixture([0.5, 0.5], [1e-5, 1e-5], [1e-5, -1e-5], [0.03, 0.04])


def test_suspension_viscosity():
    mu = 2e-5
    assert suspension_viscosity(mu, 0.0) == mu
    assert suspension_viscosity(mu, 0.25) == pytest.approx(2.25 * mu, rel=1e-14)
    assert np.isfinite(suspension_viscosity(mu, 0.499))
    with pytest.raises(PropertyDomainError):
        suspension_viscosity(mu, 0.5)
    v = np.linspace(0, 0.499, 200)
    assert np.all(np.diff([suspension_viscosity(mu, x) for x in v]) > 0)


def test_serial_conductivity():
    assert serial_conductivity(1.0, 0.05, [], []) == pytest.approx(0.05)
    assert serial_conductivity(0.5, 2.0, [0.5], [2.0]) == pytest.approx(2.0)
    assert serial_conductivity(0.9, 0.05, [0.1], [2.248]) == pytest.approx(SERIAL_09_01, rel=1e-12)
    with pytest.raises(PropertyDomainError):
        serial_conductivity(0.9, 0.05, [0.2], [1.0])


def test_mixture_internal_energy_compositions(db):
    zero_s, zero_g = np.zeros(len(db.solid)), np.zeros(len(db.gas))
    assert mixture_internal_energy(900.0, 1e5, zero_s, zero_g) == 0.0
    C_s = db.solid.vector(CaCO3=0.5, CaO=3.0)
    assert mixture_internal_energy(900.0, 1e5, C_s, zero_g) == pytest.approx(enthalpy(900.0, 1e5, C_s, db.solid))


def test_mixture_internal_energy_oracle(db):
    # a cyclone-5-like state composed from the enthalpy and volume operations
    T, P = 1173.8, 98670.0
    C_s = db.solid.vector(CaCO3=0.3, CaO=2.9, SiO2=0.9, Al2O3=0.14, Fe2O3=0.06)
    C_g = db.gas.vector(CO2=3.0, N2=5.9, O2=0.3, H2O=0.64, Ar=0.07, CO=0.03)
    expected = (enthalpy(T, P, C_s, db.solid) + enthalpy(T, P, C_g, db.gas)
                - P * volume(T, P, C_g, db.gas))
    got = mixture_internal_energy(T, P, C_s, C_g)
    assert got == pytest.approx(expected, rel=1e-14)
    # the PV term of an ideal gas is n R T
    assert expected == pytest.approx(enthalpy(T, P, C_s, db.solid) + enthalpy(T, P, C_g, db.gas)
                                     - C_g.sum() * R_GAS * T, rel=1e-12)


def test_material_energy_roundtrip(db):
    m = db.refractory
    assert m.temperature(m.energy_density(612.3)) == pytest.approx(612.3)
