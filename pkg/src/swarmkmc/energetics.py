"""Pairwise energetics and Arrhenius hop rates.

System energy is a sum of bond energies over the first two neighbor
shells, E = sum_i n_i * eps_i, with a 12-entry table (2 shells x 6
unordered species pairs including vacancy pairs). A hop's activation
energy is E_a = E_a0(hopping species) + dE/2, and its rate
Gamma = gamma0 * exp(-E_a / kT). The half-dE split makes detailed
balance exact: Gamma_fwd / Gamma_rev = exp(-dE / kT).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from swarmkmc.errors import ConfigError, SimulationError
from swarmkmc.lattice import CU, FE, VACANCY, Lattice

log = logging.getLogger(__name__)

KB = 8.617333262e-5  # eV/K, CODATA

PAIR_KEYS = {
    "FeFe": (FE, FE),
    "FeCu": (FE, CU),
    "CuCu": (CU, CU),
    "FeVac": (FE, VACANCY),
    "CuVac": (CU, VACANCY),
    "VacVac": (VACANCY, VACANCY),
}

POTENTIAL_SCHEMA = {
    "type": "object",
    "properties": {
        "epsilon": {
            "type": "object",
            "properties": {
                shell: {
                    "type": "object",
                    "properties": {k: {"type": "number"} for k in PAIR_KEYS},
                    "required": list(PAIR_KEYS),
                    "additionalProperties": False,
                }
                for shell in ("shell1", "shell2")
            },
            "required": ["shell1", "shell2"],
            "additionalProperties": False,
        },
        "gamma0": {"type": "number", "exclusiveMinimum": 0},
        "ea0": {
            "type": "object",
            "properties": {
                "Fe": {"type": "number", "minimum": 0},
                "Cu": {"type": "number", "minimum": 0},
            },
            "required": ["Fe", "Cu"],
            "additionalProperties": False,
        },
        "temperature": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["epsilon", "gamma0", "ea0", "temperature"],
    "additionalProperties": False,
}


@dataclass
class PairPotential:
    """Bond-energy table, stored dense and symmetric as table[shell, a, b]."""

    table: np.ndarray  # (2, 3, 3) float64, symmetric in the last two axes

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.shape != (2, 3, 3):
            raise ConfigError(f"potential table shape {t.shape}, expected (2, 3, 3)")
        if not np.isfinite(t).all():
            raise ConfigError("potential table contains non-finite entries")
        if not np.array_equal(t, np.swapaxes(t, 1, 2)):
            raise ConfigError("potential table is not symmetric in the species pair")
        self.table = t

    @classmethod
    def from_pairs(cls, shell1: dict, shell2: dict) -> "PairPotential":
        t = np.zeros((2, 3, 3))
        for s, entries in enumerate((shell1, shell2)):
            missing = set(PAIR_KEYS) - set(entries)
            if missing:
                raise ConfigError(f"shell{s + 1} missing pair energies: {sorted(missing)}")
            for key, (a, b) in PAIR_KEYS.items():
                t[s, a, b] = t[s, b, a] = float(entries[key])
        return cls(t)

    def to_pairs(self) -> dict:
        return {
            f"shell{s + 1}": {key: float(self.table[s, a, b]) for key, (a, b) in PAIR_KEYS.items()}
            for s in range(2)
        }


@dataclass
class RateParams:
    gamma0: float
    ea0_fe: float
    ea0_cu: float
    temperature: float
    kB: float = KB

    def __post_init__(self):
        if self.gamma0 <= 0:
            raise ConfigError(f"gamma0 {self.gamma0} must be positive")
        if self.temperature <= 0:
            raise ConfigError(f"temperature {self.temperature} must be positive")
        if self.ea0_fe < 0 or self.ea0_cu < 0:
            raise ConfigError("reference barriers ea0 must be non-negative")

    @property
    def beta(self) -> float:
        return 1.0 / (self.kB * self.temperature)

    def ea0(self, species: int) -> float:
        if species == FE:
            return self.ea0_fe
        if species == CU:
            return self.ea0_cu
        raise SimulationError("a vacancy cannot be the hopping atom")

    def ea0_array(self) -> np.ndarray:
        """Barrier lookup by species code; vacancy slot poisoned with NaN."""
        return np.array([self.ea0_fe, self.ea0_cu, np.nan])


def total_energy(lat: Lattice, pot: PairPotential) -> float:
    counts = lat.count_bonds()  # upper triangle, each bond once
    e = 0.0
    for s in range(2):
        for a in range(3):
            for b in range(a, 3):
                e += counts[s, a, b] * pot.table[s, a, b]
    return e


def delta_energy_hop(lat: Lattice, pot: PairPotential, vacancy_site: int, target_site: int) -> float:
    """Energy change of swapping the vacancy with a first-shell atom.

    Only bonds touching the two swapped sites change. The direct
    vacancy-target bond keeps the same unordered pair and drops out.
    """
    occ = lat.occupancy
    if occ[vacancy_site] != VACANCY:
        raise SimulationError(f"site {vacancy_site} does not hold a vacancy")
    moved = int(occ[target_site])
    if moved == VACANCY:
        raise SimulationError("vacancy-vacancy swaps are not events")
    t1, t2 = pot.table[0], pot.table[1]

    de = 0.0
    for n in lat.nbr1[vacancy_site]:
        if n == target_site:
            continue
        de += t1[moved, occ[n]] - t1[VACANCY, occ[n]]
    for n in lat.nbr2[vacancy_site]:
        de += t2[moved, occ[n]] - t2[VACANCY, occ[n]]
    for n in lat.nbr1[target_site]:
        if n == vacancy_site:
            continue
        de += t1[VACANCY, occ[n]] - t1[moved, occ[n]]
    for n in lat.nbr2[target_site]:
        de += t2[VACANCY, occ[n]] - t2[moved, occ[n]]
    return float(de)


def activation_energy(delta_e: float, species: int, params: RateParams) -> float:
    return params.ea0(species) + 0.5 * delta_e


def transition_rate(ea: float, params: RateParams) -> float:
    if ea < 0:
        log.warning("negative activation energy %.4f eV, rate exceeds gamma0", ea)
    return params.gamma0 * np.exp(-ea * params.beta)


def transition_rates(ea: np.ndarray, params: RateParams) -> np.ndarray:
    """Vectorized Arrhenius; logs one warning covering all negative entries."""
    ea = np.asarray(ea, dtype=np.float64)
    n_neg = int(np.sum(ea < 0))
    if n_neg:
        log.warning("negative activation energy in %d of %d events", n_neg, ea.size)
    return params.gamma0 * np.exp(-ea * params.beta)


# -- parameter file ------------------------------------------------------


def potential_from_dict(doc: dict) -> tuple[PairPotential, RateParams]:
    """Validate a parameter document and build the two parameter objects.

    All schema violations are collected and reported together, so a file
    missing several keys lists every one of them.
    """
    import jsonschema

    validator = jsonschema.Draft202012Validator(POTENTIAL_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            where = ".".join(str(p) for p in err.absolute_path) or "<root>"
            lines.append(f"{where}: {err.message}")
        raise ConfigError("invalid potential file:\n  " + "\n  ".join(lines))
    pot = PairPotential.from_pairs(doc["epsilon"]["shell1"], doc["epsilon"]["shell2"])
    params = RateParams(
        gamma0=doc["gamma0"],
        ea0_fe=doc["ea0"]["Fe"],
        ea0_cu=doc["ea0"]["Cu"],
        temperature=doc["temperature"],
    )
    return pot, params


def load_potential(path) -> tuple[PairPotential, RateParams]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read potential file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"potential file {path} is not valid JSON: {exc}") from exc
    return potential_from_dict(doc)


def default_potential_path():
    from importlib.resources import files

    return files("swarmkmc.data").joinpath("default_potential.json")


def load_default_potential() -> tuple[PairPotential, RateParams]:
    return potential_from_dict(json.loads(default_potential_path().read_text()))
