"""Evaluation quantities for precipitation runs.

The progress variable behind the advancement factor is the Cu-Cu
first-shell bond count B(t): zeta(t) = (B(t) - B(0)) / (B_eq - B(0)),
clamped to [0, 1], with B_eq taken from a long reference anneal. The
definition is confined to this module so a different order parameter
(largest cluster size, say) could be swapped in without touching the
samplers.

Everything here is offline post-processing: the same numbers fall out of
a trajectory CSV as from a live run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from swarmkmc.energetics import PairPotential, RateParams
from swarmkmc.errors import SimulationError
from swarmkmc.kinetics import run_classical
from swarmkmc.lattice import CU, Lattice


@dataclass
class AdvancementSeries:
    times: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.zeta = np.asarray(self.zeta, dtype=np.float64)
        if self.times.size == 0:
            raise SimulationError("advancement series is empty")
        if self.times.shape != self.zeta.shape:
            raise SimulationError("times and zeta lengths differ")
        if np.any(np.diff(self.times) < 0):
            raise SimulationError("sample times must be nondecreasing")
        if self.zeta.min() < 0.0 or self.zeta.max() > 1.0:
            raise SimulationError("zeta escaped [0, 1], clamp upstream")

    def time_to_level(self, level: float):
        """Earliest sampled time with zeta >= level, or None."""
        hits = np.flatnonzero(self.zeta >= level)
        return float(self.times[hits[0]]) if hits.size else None


def advancement_factor(times, bonds, b_initial: float, b_eq: float) -> AdvancementSeries:
    if b_eq == b_initial:
        raise SimulationError(
            f"degenerate normalization: equilibrium bond count equals initial ({b_eq})"
        )
    b = np.asarray(bonds, dtype=np.float64)
    zeta = np.clip((b - b_initial) / (b_eq - b_initial), 0.0, 1.0)
    return AdvancementSeries(times=np.asarray(times, dtype=np.float64), zeta=zeta)


def moving_average(x, window: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if window < 1 or window > x.size:
        raise SimulationError(f"smoothing window {window} outside [1, {x.size}]")
    kernel = np.full(window, 1.0 / window)
    return np.convolve(x, kernel, mode="valid")


def transition_per_step_energy(de) -> float:
    """Mean absolute energy change per executed hop, in eV."""
    de = np.asarray(de, dtype=np.float64)
    if de.size == 0:
        raise SimulationError("empty trajectory has no per-step energy")
    return float(np.mean(np.abs(de)))


def effective_transition_ratio(vacancy_sites, target_sites, window: int = 1) -> float:
    """Fraction of hops not undone within `window` subsequent hops.

    Hop t is reversed when some hop u in (t, t+window] swaps the same two
    sites back: vac_u == target_t and target_u == vac_t.
    """
    vac = np.asarray(vacancy_sites, dtype=np.int64)
    tgt = np.asarray(target_sites, dtype=np.int64)
    if vac.shape != tgt.shape:
        raise SimulationError("vacancy and target site arrays differ in length")
    T = vac.size
    if T < 2:
        raise SimulationError("need at least two hops to score reversals")
    if window < 1:
        raise SimulationError(f"reversal window {window} must be at least 1")
    if window == 1:
        rev = (vac[1:] == tgt[:-1]) & (tgt[1:] == vac[:-1])
        reversed_count = int(np.count_nonzero(rev))
    else:
        reversed_count = 0
        for t in range(T):
            for u in range(t + 1, min(t + window, T - 1) + 1):
                if vac[u] == tgt[t] and tgt[u] == vac[t]:
                    reversed_count += 1
                    break
    return 1.0 - reversed_count / T


def targets_from_directions(lat: Lattice, vacancy_sites, directions) -> np.ndarray:
    """Recover hop targets from logged (vacancy, direction) pairs.

    This is what makes reversal scoring replayable from a trajectory CSV,
    which stores the direction rather than the target site.
    """
    vac = np.asarray(vacancy_sites, dtype=np.int64)
    dirs = np.asarray(directions, dtype=np.int64)
    return lat.nbr1[vac, dirs].astype(np.int64)


def energy_trajectory(de) -> np.ndarray:
    """Running sum of per-hop energy changes."""
    de = np.asarray(de, dtype=np.float64)
    if de.size == 0:
        raise SimulationError("empty trajectory has no energy series")
    return np.cumsum(de)


def assert_energy_closure(cumulative: float, e_start: float, e_end: float,
                          rtol: float = 1e-8, context: str = "") -> None:
    """Hard check that bookkeeping matches a direct recomputation."""
    expected = e_end - e_start
    scale = max(1.0, abs(e_start), abs(e_end))
    if abs(cumulative - expected) > rtol * scale:
        where = f" at {context}" if context else ""
        raise SimulationError(
            f"energy bookkeeping drift{where}: running sum {cumulative!r} vs "
            f"direct difference {expected!r} (tolerance {rtol * scale:.3e})"
        )


# -- bond tracking -------------------------------------------------------------


def bond_delta_after_hop(lat: Lattice, vacancy_site: int, target_site: int) -> int:
    """Change in the Cu-Cu first-shell bond count caused by the hop just
    applied (call with post-hop occupancy).

    Only a Cu move changes the count: it gains the Cu neighbors at its
    new site and loses the ones at its old site. Post-hop, the old site
    holds the vacancy and sits in the new site's shell, so the pre-hop
    neighbor count at the old site is recovered by discounting the moved
    atom itself.
    """
    occ = lat.occupancy
    moved = occ[vacancy_site]
    if moved != CU:
        return 0
    gained = int(np.count_nonzero(occ[lat.nbr1[vacancy_site]] == CU))
    lost = int(np.count_nonzero(occ[lat.nbr1[target_site]] == CU)) - 1
    return gained - lost


class ZetaSink:
    """Subsampled (step, time, bond-count) series from a classical run.

    Attach to run_classical(track_bonds=True); keeps steps where
    (step + 1) % every == 0. The cadence is anchored to absolute step
    numbers, so the captured rows do not depend on the chunk size.
    """

    def __init__(self, every: int = 1):
        if every < 1:
            raise SimulationError(f"sampling cadence {every} must be at least 1")
        self.every = every
        self.steps: list[int] = []
        self.times: list[float] = []
        self.bonds: list[int] = []

    def on_chunk(self, start_step: int, cols: dict) -> None:
        n = cols["time_s"].shape[0]
        steps = np.arange(start_step, start_step + n)
        keep = (steps + 1) % self.every == 0
        self.steps.extend(steps[keep].tolist())
        self.times.extend(cols["time_s"][keep].tolist())
        self.bonds.extend(cols["b_cucu"][keep].tolist())

    def on_step(self, step, time_s, v, d, de, gtot, dt) -> None:
        raise SimulationError("ZetaSink needs the bond-tracking chunked runner")

    def arrays(self):
        return (
            np.asarray(self.steps, dtype=np.int64),
            np.asarray(self.times, dtype=np.float64),
            np.asarray(self.bonds, dtype=np.int64),
        )


class _TailMeanSink:
    """Mean bond count over steps at or past a threshold index."""

    def __init__(self, first_step: int):
        self.first_step = first_step
        self.total = 0.0
        self.count = 0

    def on_chunk(self, start_step: int, cols: dict) -> None:
        b = cols["b_cucu"]
        lo = max(self.first_step - start_step, 0)
        if lo < b.shape[0]:
            self.total += float(b[lo:].sum())
            self.count += b.shape[0] - lo


def equilibrium_bonds(lat: Lattice, pot: PairPotential, params: RateParams,
                      anneal_steps: int, seed, tail_fraction: float = 0.1,
                      exact_every: int = 10_000) -> float:
    """Saturation Cu-Cu bond count from a reference anneal.

    Runs a classical anneal on a copy of the lattice and averages the
    bond count over the final `tail_fraction` of steps.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise SimulationError(f"tail fraction {tail_fraction} outside (0, 1]")
    work = lat.copy()
    tail = _TailMeanSink(first_step=int(anneal_steps * (1.0 - tail_fraction)))
    run_classical(work, pot, params, anneal_steps, seed, sinks=(tail,),
                  track_bonds=True, exact_every=exact_every)
    return tail.total / tail.count


def measure_advancement(lat: Lattice, pot: PairPotential, params: RateParams,
                        steps: int, seed, b_eq: float, sample_every: int = 1,
                        exact_every: int = 10_000):
    """Classical run + zeta series against a fixed equilibrium reference.

    Mutates `lat` like any run. Returns (series, sink_steps, bonds, result).
    """
    b0 = lat.cu_cu_first_shell_bonds()
    sink = ZetaSink(every=sample_every)
    result = run_classical(lat, pot, params, steps, seed, sinks=(sink,),
                           track_bonds=True, exact_every=exact_every)
    steps_arr, times, bonds = sink.arrays()
    if steps_arr.size == 0 or steps_arr[-1] != steps - 1:
        steps_arr = np.append(steps_arr, steps - 1)
        times = np.append(times, result.time_s)
        bonds = np.append(bonds, result.b_final)
    series = advancement_factor(times, bonds, b0, b_eq)
    return series, steps_arr, bonds, result


# -- paired-run speedup ----------------------------------------------------------


@dataclass
class SpeedupResult:
    ratio: float
    classical_steps: int
    rl_steps: int
    reached_zeta: float
    lower_bound: bool  # true when the step cap cut the classical run short


def speedup_ratio(target_zeta: float, rl_steps: int, classical_runner,
                  step_cap: int, chunk: int = 1024) -> SpeedupResult:
    """How many classical hops the same structural advance costs.

    `classical_runner(n)` must advance the classical trajectory by n hops
    and return its current zeta. The runner is polled every `chunk` hops,
    so the classical step count overshoots by at most chunk - 1; shrink
    chunk when that matters. Hitting `step_cap` before the target is not
    an error: the ratio is then a lower bound and flagged as such.
    """
    if rl_steps < 1:
        raise SimulationError(f"rl step count {rl_steps} must be at least 1")
    if not 0.0 < target_zeta <= 1.0:
        raise SimulationError(f"target zeta {target_zeta} outside (0, 1]")
    steps = 0
    zeta = -np.inf
    while steps < step_cap:
        n = min(chunk, step_cap - steps)
        zeta = float(classical_runner(n))
        steps += n
        if zeta >= target_zeta:
            return SpeedupResult(steps / rl_steps, steps, rl_steps, zeta, False)
    return SpeedupResult(steps / rl_steps, steps, rl_steps, zeta, True)


@dataclass
class BenchmarkReport:
    speedup_ratio: float
    tpe_classical: float
    tpe_swarm: float
    etr_classical: float
    etr_swarm: float
    classical_steps: int
    swarm_steps: int
    target_zeta: float
    lower_bound: bool

    def __post_init__(self):
        for name in ("tpe_classical", "tpe_swarm", "etr_classical", "etr_swarm",
                     "speedup_ratio"):
            if not np.isfinite(getattr(self, name)):
                raise SimulationError(f"benchmark metric {name} is not finite")
        for name in ("etr_classical", "etr_swarm"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SimulationError(f"{name} outside [0, 1]")

    def write_json(self, path) -> None:
        doc = {
            "speedup_ratio": self.speedup_ratio,
            "lower_bound": self.lower_bound,
            "target_zeta": self.target_zeta,
            "steps_used": {"classical": self.classical_steps, "swarm": self.swarm_steps},
            "tpe_eV": {"classical": self.tpe_classical, "swarm": self.tpe_swarm},
            "etr": {"classical": self.etr_classical, "swarm": self.etr_swarm},
        }
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")


# -- metric CSV outputs -----------------------------------------------------------


def write_zeta_csv(path, steps, times, bonds, zeta) -> None:
    with open(path, "w") as fh:
        fh.write("step,time_s,b_cucu,zeta\n")
        for s, t, b, z in zip(steps, times, bonds, zeta):
            fh.write(f"{s},{t:.12e},{int(b)},{z:.12e}\n")


def write_energy_csv(path, steps, times, de, cumulative) -> None:
    with open(path, "w") as fh:
        fh.write("step,time_s,dE_eV,cumulative_eV\n")
        for s, t, d, c in zip(steps, times, de, cumulative):
            fh.write(f"{s},{t:.12e},{d:.12e},{c:.12e}\n")
