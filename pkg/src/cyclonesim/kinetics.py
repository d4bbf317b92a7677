"""Stoichiometry and Arrhenius rates of the clinker formation reactions."""
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
import yaml

from .thermo import R_GAS, default_database
from .units import to_si


class KineticsDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ReactionSet:
    """Reactions over the full species list ``species`` (solids then gases).

    ``nu`` is reactions x species. ``orders`` has the same shape and holds
    the concentration exponents. ``ref`` indexes the species whose molar
    mass converts each mass rate into an extent rate.
    """

    names: tuple
    species: tuple
    nu: np.ndarray
    k0: np.ndarray
    E_A: np.ndarray
    orders: np.ndarray
    ref: np.ndarray
    ref_molar_mass: np.ndarray
    tuning: np.ndarray

    def __post_init__(self):
        if np.any(self.k0 <= 0) or np.any(self.E_A <= 0) or np.any(self.tuning <= 0):
            raise ValueError("k0, activation energies and tuning factors must be positive")

    def __len__(self):
        return len(self.names)

    def with_tuning(self, tuning):
        """Copy with tuning factors replaced; ``tuning`` maps name or index to factor."""
        t = self.tuning.copy()
        for key, v in dict(tuning).items():
            j = self.names.index(key) if isinstance(key, str) else int(key)
            t[j] = float(v)
        return replace(self, tuning=t)


def load_reactions(path=None, db=None):
    db = db or default_database()
    if path is None:
        text = resources.files("cyclonesim.data").joinpath("reactions.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = yaml.safe_load(text)["reactions"]
    species = db.ids
    idx = {s: i for i, s in enumerate(species)}
    M = np.concatenate([db.solid.M, db.gas.M])
    n = len(raw)
    nu = np.zeros((n, len(species)))
    orders = np.zeros_like(nu)
    ref = np.zeros(n, dtype=int)
    for j, r in enumerate(raw):
        for s, v in r["stoichiometry"].items():
            nu[j, idx[s]] = v
        for s, a in r["orders"].items():
            orders[j, idx[s]] = a
        ref[j] = idx[next(s for s, v in r["stoichiometry"].items() if v < 0)]
    return ReactionSet(
        names=tuple(r["name"] for r in raw),
        species=species,
        nu=nu,
        k0=np.array([float(r["k0"]) for r in raw]),
        E_A=np.array([to_si(r["activation_energy"], "J/mol") for r in raw]),
        orders=orders,
        ref=ref,
        ref_molar_mass=M[ref],
        tuning=np.ones(n),
    )


def arrhenius(k0, E_A, T):
    return k0 * np.exp(-E_A / (R_GAS * T))


def mass_rates(reactions, T, C, strict=True):
    """Reaction mass rates in kg/(m^3 s); ``C`` in mol/m^3 over all species."""
    C = np.asarray(C, dtype=float)
    if T <= 0:
        raise KineticsDomainError("temperature must be positive")
    if strict and np.any(C < 0):
        raise KineticsDomainError("negative concentration")
    c_L = np.maximum(C, 0.0) / 1000.0
    # only species with nonzero order contribute to the product
    prod = np.prod(np.where(reactions.orders > 0, c_L[None, :] ** reactions.orders, 1.0), axis=1)
    return reactions.tuning * arrhenius(reactions.k0, reactions.E_A, T) * prod


def reaction_rates(reactions, T, C, strict=True):
    """Extent rates in mol/(m^3 s) for each reaction."""
    return mass_rates(reactions, T, C, strict) / reactions.ref_molar_mass


def production_rates(reactions, r):
    """Per-species production R = nu^T r, mol/(m^3 s)."""
    return reactions.nu.T @ np.asarray(r, dtype=float)


def element_matrix(db=None):
    """Integer atom counts, species x elements, plus the element names."""
    db = db or default_database()
    recs = [db[s] for s in db.ids]
    elements = sorted({e for r in recs for e in r.elements})
    A = np.array([[r.elements.get(e, 0) for e in elements] for r in recs], dtype=np.int64)
    return A, tuple(elements)
