"""bcc lattice as two interleaved simple-cubic sublattices.

Site layout
-----------
A site is addressed by (sub, i, j, k) with sub in {0, 1} and cell indices
0 <= i < nx, 0 <= j < ny, 0 <= k < nz. The linear id is

    id = ((sub * nx + i) * ny + j) * nz + k

so sublattice 0 occupies ids [0, nx*ny*nz) and sublattice 1 the rest.
Sublattice 0 sits at integer positions (i, j, k) in lattice-parameter
units; sublattice 1 is displaced by (1/2, 1/2, 1/2).

Neighbor shells and the canonical direction order
-------------------------------------------------
First shell: the 8 sites displaced by (dx, dy, dz)/2 with dx, dy, dz in
{-1, +1}, always on the other sublattice. Directions are numbered 0..7 in
binary order, bit 2 = x, bit 1 = y, bit 0 = z, bit set meaning +:

    0: (-,-,-)  1: (-,-,+)  2: (-,+,-)  3: (-,+,+)
    4: (+,-,-)  5: (+,-,+)  6: (+,+,-)  7: (+,+,+)

Second shell: the 6 axial sites displaced by a full lattice parameter,
same sublattice, numbered (-x, +x, -y, +y, -z, +z).

These orders index actor logits and trajectory logs, so they are a frozen
contract. Boundaries are periodic on all axes.
"""

from __future__ import annotations

import numpy as np

from swarmkmc.errors import ConfigError, SimulationError
from swarmkmc import rng as rngmod

# Species codes are a serialization contract (checkpoints, snapshots,
# trajectory files); do not renumber.
FE = 0
CU = 1
VACANCY = 2

SPECIES_NAMES = ("Fe", "Cu", "X")  # "X" is the conventional dummy symbol

# Half-lattice-unit displacements, canonical order (see module docstring).
FIRST_SHELL_OFFSETS = np.array(
    [
        (-1, -1, -1), (-1, -1, +1), (-1, +1, -1), (-1, +1, +1),
        (+1, -1, -1), (+1, -1, +1), (+1, +1, -1), (+1, +1, +1),
    ],
    dtype=np.int64,
)

# Full-lattice-unit displacements, axis-major order.
SECOND_SHELL_OFFSETS = np.array(
    [
        (-1, 0, 0), (+1, 0, 0),
        (0, -1, 0), (0, +1, 0),
        (0, 0, -1), (0, 0, +1),
    ],
    dtype=np.int64,
)

N_FIRST = 8
N_SECOND = 6


class HopError(SimulationError):
    """A hop precondition was violated."""


class NotAVacancyError(HopError):
    pass


class NotANeighborError(HopError):
    pass


class TargetIsVacancyError(HopError):
    pass


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


class Lattice:
    """Periodic bcc lattice with per-site occupancy.

    Geometry (neighbor tables, positions) is built once in the
    constructor; occupancy mutates only through apply_hop, which is the
    single-writer funnel for the whole package.
    """

    def __init__(self, nx: int, ny: int, nz: int):
        for name, ext in (("nx", nx), ("ny", ny), ("nz", nz)):
            if ext < 2:
                raise ConfigError(f"lattice extent {name}={ext} is below the minimum of 2")
        self.nx, self.ny, self.nz = int(nx), int(ny), int(nz)
        self.n_cells = self.nx * self.ny * self.nz
        self.n_sites = 2 * self.n_cells

        self.nbr1, self.nbr2 = self._build_neighbor_tables()
        self.positions = self._build_positions()
        self.box = np.array([self.nx, self.ny, self.nz], dtype=np.float64)

        self.occupancy = np.full(self.n_sites, FE, dtype=np.int8)
        self.vacancy_index: list[int] = []
        self.cu_index: list[int] = []

    # -- geometry -------------------------------------------------------

    def site_id(self, sub, i, j, k):
        return ((sub * self.nx + i % self.nx) * self.ny + j % self.ny) * self.nz + k % self.nz

    def site_coords(self, site: int):
        """Inverse of site_id: (sub, i, j, k)."""
        k = site % self.nz
        rest = site // self.nz
        j = rest % self.ny
        rest //= self.ny
        i = rest % self.nx
        sub = rest // self.nx
        return sub, i, j, k

    def _build_neighbor_tables(self):
        nx, ny, nz = self.nx, self.ny, self.nz
        sub, i, j, k = np.meshgrid(
            np.arange(2), np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
        )
        sub = sub.ravel()
        i, j, k = i.ravel(), j.ravel(), k.ravel()

        nbr1 = np.empty((self.n_sites, N_FIRST), dtype=np.int32)
        for d, (dx, dy, dz) in enumerate(FIRST_SHELL_OFFSETS):
            # Target cell of a half-step: sub 0 reaches cell i + (dx-1)/2 on
            # sub 1, sub 1 reaches cell i + (dx+1)/2 on sub 0.
            ti = (i + (dx - 1 + 2 * sub) // 2) % nx
            tj = (j + (dy - 1 + 2 * sub) // 2) % ny
            tk = (k + (dz - 1 + 2 * sub) // 2) % nz
            nbr1[:, d] = (((1 - sub) * nx + ti) * ny + tj) * nz + tk

        nbr2 = np.empty((self.n_sites, N_SECOND), dtype=np.int32)
        for d, (dx, dy, dz) in enumerate(SECOND_SHELL_OFFSETS):
            ti, tj, tk = (i + dx) % nx, (j + dy) % ny, (k + dz) % nz
            nbr2[:, d] = ((sub * nx + ti) * ny + tj) * nz + tk

        nbr1.setflags(write=False)
        nbr2.setflags(write=False)
        return nbr1, nbr2

    def _build_positions(self):
        sub, i, j, k = np.meshgrid(
            np.arange(2), np.arange(self.nx), np.arange(self.ny), np.arange(self.nz),
            indexing="ij",
        )
        pos = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1).astype(np.float64)
        pos += 0.5 * sub.ravel()[:, None]
        pos.setflags(write=False)
        return pos

    def neighborhood(self, site: int):
        """(first_shell, second_shell) id arrays in canonical order."""
        if not 0 <= site < self.n_sites:
            raise SimulationError(f"site id {site} out of range [0, {self.n_sites})")
        return self.nbr1[site], self.nbr2[site]

    def shell_relation(self, a: int, b: int) -> int:
        """1 or 2 if b is in a's first or second shell, else 0."""
        if b in self.nbr1[a]:
            return 1
        if b in self.nbr2[a]:
            return 2
        return 0

    def min_image(self, disp):
        """Wrap displacement vectors into the centered periodic box."""
        return disp - self.box * np.round(disp / self.box)

    # -- occupancy ------------------------------------------------------

    @classmethod
    def build(cls, nx, ny, nz, cu_fraction: float, vacancy_count: int, seed) -> "Lattice":
        """Uniformly random fill with exact species counts.

        `seed` is an int master seed or a ready np.random.Generator; an
        int is routed through the "init" substream.
        """
        if not 0.0 <= cu_fraction < 1.0:
            raise ConfigError(f"cu_fraction {cu_fraction} outside [0, 1)")
        if vacancy_count < 1:
            raise ConfigError(f"vacancy_count {vacancy_count} must be at least 1")
        lat = cls(nx, ny, nz)
        n_cu = round_half_up(cu_fraction * lat.n_sites)
        if vacancy_count + n_cu > lat.n_sites:
            raise ConfigError(
                f"overfull lattice: {vacancy_count} vacancies + {n_cu} Cu > {lat.n_sites} sites"
            )
        gen = seed if isinstance(seed, np.random.Generator) else rngmod.substream(seed, rngmod.INIT)
        chosen = gen.choice(lat.n_sites, size=vacancy_count + n_cu, replace=False)
        vac_sites = chosen[:vacancy_count]
        cu_sites = chosen[vacancy_count:]
        lat.occupancy[vac_sites] = VACANCY
        lat.occupancy[cu_sites] = CU
        lat.vacancy_index = sorted(int(s) for s in vac_sites)
        lat.cu_index = sorted(int(s) for s in cu_sites)
        return lat

    def copy(self) -> "Lattice":
        """Independent duplicate; neighbor tables are shared (read-only)."""
        new = object.__new__(Lattice)
        new.__dict__.update(self.__dict__)
        new.occupancy = self.occupancy.copy()
        new.vacancy_index = list(self.vacancy_index)
        new.cu_index = list(self.cu_index)
        return new

    def apply_hop(self, vacancy_site: int, target_site: int) -> None:
        """Swap the vacancy with a first-shell Fe or Cu atom, in place."""
        if self.occupancy[vacancy_site] != VACANCY:
            raise NotAVacancyError(f"site {vacancy_site} does not hold a vacancy")
        if target_site not in self.nbr1[vacancy_site]:
            raise NotANeighborError(f"site {target_site} is not first-shell to {vacancy_site}")
        moved = self.occupancy[target_site]
        if moved == VACANCY:
            raise TargetIsVacancyError(f"target site {target_site} holds a vacancy")
        self.occupancy[vacancy_site] = moved
        self.occupancy[target_site] = VACANCY
        self.vacancy_index[self.vacancy_index.index(vacancy_site)] = int(target_site)
        if moved == CU:
            self.cu_index[self.cu_index.index(target_site)] = int(vacancy_site)

    def species_counts(self):
        return np.bincount(self.occupancy, minlength=3)

    # -- bond counting --------------------------------------------------

    def count_bonds(self) -> np.ndarray:
        """(2, 3, 3) table of bond counts, each bond counted once.

        counts[shell-1, a, b] with a <= b holds the number of
        shell-neighbor pairs whose species are {a, b}; entries below the
        diagonal stay zero.
        """
        counts = np.zeros((2, 3, 3), dtype=np.int64)
        occ = self.occupancy
        # Half of each offset set covers every bond exactly once.
        for shell, table, half in ((0, self.nbr1, range(4, 8)), (1, self.nbr2, (1, 3, 5))):
            for d in half:
                a = occ
                b = occ[table[:, d]]
                lo = np.minimum(a, b).astype(np.int64)
                hi = np.maximum(a, b).astype(np.int64)
                np.add.at(counts[shell], (lo, hi), 1)
        return counts

    def cu_cu_first_shell_bonds(self) -> int:
        cu = (self.occupancy == CU).astype(np.int64)
        total = 0
        for d in range(4, 8):
            total += int(np.sum(cu * cu[self.nbr1[:, d]]))
        return total

    # -- snapshots ------------------------------------------------------

    def write_xyz(self, fh, step: int, time_s: float, all_sites: bool = False) -> None:
        """Append one extended-XYZ frame listing non-Fe sites (or all).

        The header count equals the number of listed lines; the comment
        carries the step, physical time, and the full site count.
        """
        if all_sites:
            sites = np.arange(self.n_sites)
        else:
            sites = np.flatnonzero(self.occupancy != FE)
        fh.write(f"{len(sites)}\n")
        fh.write(
            f"step={step} time_s={time_s:.9e} total_sites={self.n_sites} "
            f'Lattice="{self.nx} 0 0 0 {self.ny} 0 0 0 {self.nz}"\n'
        )
        for s in sites:
            x, y, z = self.positions[s]
            fh.write(f"{SPECIES_NAMES[self.occupancy[s]]} {x:.6f} {y:.6f} {z:.6f}\n")
