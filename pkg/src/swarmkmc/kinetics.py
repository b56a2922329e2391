"""Residence-time kinetic Monte Carlo over the vacancy hop catalog.

Two execution paths share one set of scalar rate routines:

* ClassicalKMC is the plain-Python reference. It carries the catalog
  semantics (enumeration, selection, local update) in readable form and
  is the oracle the compiled path is checked against.
* run_classical drives a numba kernel in chunks for long runs. Draw
  order, accumulation order, and refresh logic replicate the reference
  step for step, so the two paths produce bit-identical trajectories.

Per-step draw contract (both paths): one uniform from the "select"
stream scaled by Gamma_tot picks the event, then one uniform from the
"residence" stream (redrawn while exactly 0.0) gives
dt = -ln(r) / Gamma_tot. Gamma_tot is maintained by compensated
summation with an exact recompute every `exact_every` steps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from swarmkmc import rng
from swarmkmc.energetics import PairPotential, RateParams
from swarmkmc.errors import SimulationError
from swarmkmc.lattice import CU, FE, VACANCY, Lattice

log = logging.getLogger(__name__)

N_DIR = 8
DEFAULT_EXACT_EVERY = 10_000
DEFAULT_CHUNK = 65_536


@dataclass
class HopEvent:
    vacancy_site: int
    direction: int
    target_site: int
    hopping_species: int
    rate: float


@dataclass
class RunResult:
    steps: int
    time_s: float
    energy_delta: float
    gamma_tot: float
    neg_ea_executed: int
    b_final: int | None = None


def kahan_add(s: float, c: float, x: float) -> tuple[float, float]:
    y = x - c
    t = s + y
    return t, (t - s) - y


# -- compiled scalar core (shared by both paths) ---------------------------


@njit(cache=True)
def _kahan_add_nb(s, c, x):
    y = x - c
    t = s + y
    return t, (t - s) - y


@njit(cache=True)
def _de_hop_nb(occ, nbr1, nbr2, eps, v, t):
    """Incremental energy change of swapping vacancy v with the atom at t.

    The direct v-t bond keeps its unordered species pair and cancels.
    """
    sp = occ[t]
    de = 0.0
    for i in range(8):
        n = nbr1[v, i]
        if n != t:
            de += eps[0, sp, occ[n]] - eps[0, 2, occ[n]]
    for i in range(6):
        n = nbr2[v, i]
        de += eps[1, sp, occ[n]] - eps[1, 2, occ[n]]
    for i in range(8):
        n = nbr1[t, i]
        if n != v:
            de += eps[0, 2, occ[n]] - eps[0, sp, occ[n]]
    for i in range(6):
        n = nbr2[t, i]
        de += eps[1, 2, occ[n]] - eps[1, sp, occ[n]]
    return de


@njit(cache=True)
def _refresh_row_nb(occ, nbr1, nbr2, eps, ea0f, ea0c, g0, beta, v, rates_row, de_row):
    """Recompute all 8 rates of one vacancy; returns the plain row sum."""
    row_sum = 0.0
    for d in range(8):
        t = nbr1[v, d]
        sp = occ[t]
        if sp == 2:
            rates_row[d] = 0.0
            de_row[d] = 0.0
        else:
            de = _de_hop_nb(occ, nbr1, nbr2, eps, v, t)
            ea = (ea0f if sp == 0 else ea0c) + 0.5 * de
            rates_row[d] = g0 * math.exp(-ea * beta)
            de_row[d] = de
        row_sum += rates_row[d]
    return row_sum


@njit(cache=True)
def _enumerate_nb(occ, nbr1, nbr2, eps, ea0f, ea0c, g0, beta, vac_sites, rates, de):
    """Full catalog rebuild; Gamma_tot by per-event compensated sum."""
    s = 0.0
    c = 0.0
    for w in range(vac_sites.shape[0]):
        _refresh_row_nb(occ, nbr1, nbr2, eps, ea0f, ea0c, g0, beta, vac_sites[w], rates[w], de[w])
        for d in range(8):
            s, c = _kahan_add_nb(s, c, rates[w, d])
    return s, c


@njit(cache=True)
def _collect_affected_nb(nbr1, nbr2, v, t, scratch):
    ns = 0
    scratch[ns] = v
    ns += 1
    scratch[ns] = t
    ns += 1
    for i in range(8):
        scratch[ns] = nbr1[v, i]
        ns += 1
    for i in range(6):
        scratch[ns] = nbr2[v, i]
        ns += 1
    for i in range(8):
        scratch[ns] = nbr1[t, i]
        ns += 1
    for i in range(6):
        scratch[ns] = nbr2[t, i]
        ns += 1
    return ns


@njit(cache=True)
def _row_needs_refresh_nb(nbr1, vw, scratch, ns):
    # A row changes iff the swap touched the vacancy, one of its targets,
    # or a site within two shells of either; that set is exactly
    # ({vw} u nbr1[vw]) intersecting the affected-site scratch list.
    for j in range(ns):
        if scratch[j] == vw:
            return True
    for i in range(8):
        nb = nbr1[vw, i]
        for j in range(ns):
            if scratch[j] == nb:
                return True
    return False


@njit(cache=True)
def _run_chunk_nb(
    occ, nbr1, nbr2, vac_sites, rates, de, eps, ea0f, ea0c, g0, beta,
    n_steps, gsel, gres, acc, counters, exact_every, track_b,
    log_vac, log_dir, log_de, log_gtot, log_dt, log_time, log_b, scratch,
):
    # acc: 0 time, 1 time comp, 2 gtot, 3 gtot comp, 4 energy delta,
    #      5 energy comp, 6 current Cu-Cu first-shell bond count
    # counters: 0 global step, 1 executed hops with negative E_a
    V = vac_sites.shape[0]
    for n in range(n_steps):
        step = counters[0]
        if exact_every > 0 and step > 0 and step % exact_every == 0:
            s = 0.0
            c = 0.0
            for w in range(V):
                _refresh_row_nb(
                    occ, nbr1, nbr2, eps, ea0f, ea0c, g0, beta, vac_sites[w], rates[w], de[w]
                )
                for d in range(8):
                    s, c = _kahan_add_nb(s, c, rates[w, d])
            acc[2] = s
            acc[3] = c

        gtot = acc[2]
        u = gsel.random() * gtot
        acc_sum = 0.0
        sel_row = -1
        sel_dir = -1
        for w in range(V):
            for d in range(8):
                acc_sum += rates[w, d]
                if u < acc_sum:
                    sel_row = w
                    sel_dir = d
                    break
            if sel_row >= 0:
                break
        if sel_row < 0:
            # float tail: u landed at or beyond the running sum
            for w in range(V - 1, -1, -1):
                for d in range(7, -1, -1):
                    if rates[w, d] > 0.0:
                        sel_row = w
                        sel_dir = d
                        break
                if sel_row >= 0:
                    break

        r = gres.random()
        while r == 0.0:
            r = gres.random()
        dt = -math.log(r) / gtot

        v = vac_sites[sel_row]
        t = nbr1[v, sel_dir]
        sp = occ[t]
        d_e = de[sel_row, sel_dir]
        ea = (ea0f if sp == 0 else ea0c) + 0.5 * d_e
        if ea < 0.0:
            counters[1] += 1

        if track_b and sp == 1:
            old_b = 0
            for i in range(8):
                if occ[nbr1[t, i]] == 1:
                    old_b += 1
            occ[v] = sp
            occ[t] = 2
            new_b = 0
            for i in range(8):
                if occ[nbr1[v, i]] == 1:
                    new_b += 1
            acc[6] += new_b - old_b
        else:
            occ[v] = sp
            occ[t] = 2
        vac_sites[sel_row] = t

        acc[0], acc[1] = _kahan_add_nb(acc[0], acc[1], dt)
        acc[4], acc[5] = _kahan_add_nb(acc[4], acc[5], d_e)

        ns = _collect_affected_nb(nbr1, nbr2, v, t, scratch)
        for w in range(V):
            if _row_needs_refresh_nb(nbr1, vac_sites[w], scratch, ns):
                old = 0.0
                for d in range(8):
                    old += rates[w, d]
                new = _refresh_row_nb(
                    occ, nbr1, nbr2, eps, ea0f, ea0c, g0, beta, vac_sites[w], rates[w], de[w]
                )
                acc[2], acc[3] = _kahan_add_nb(acc[2], acc[3], new - old)

        log_vac[n] = v
        log_dir[n] = sel_dir
        log_de[n] = d_e
        log_gtot[n] = gtot
        log_dt[n] = dt
        log_time[n] = acc[0]
        log_b[n] = acc[6]
        counters[0] += 1


@njit(cache=True)
def _run_grid_nb(
    occ, nbr1, nbr2, vac_sites, cu_sites, rates, de, eps, ea0f, ea0c, g0, beta,
    n_steps, gsel, gres, acc, counters, exact_every, grid, out_sites, scratch,
):
    """Same loop as _run_chunk_nb but samples tracked-site positions on a
    physical-time grid instead of logging per-step records.

    The state between events belongs to the pre-hop configuration, so
    grid points inside [time, time + dt) are recorded before the swap.
    counters[2] is the next grid slot.
    """
    V = vac_sites.shape[0]
    n_cu = cu_sites.shape[0]
    n_grid = grid.shape[0]
    for n in range(n_steps):
        step = counters[0]
        if exact_every > 0 and step > 0 and step % exact_every == 0:
            s = 0.0
            c = 0.0
            for w in range(V):
                _refresh_row_nb(
                    occ, nbr1, nbr2, eps, ea0f, ea0c, g0, beta, vac_sites[w], rates[w], de[w]
                )
                for d in range(8):
                    s, c = _kahan_add_nb(s, c, rates[w, d])
            acc[2] = s
            acc[3] = c

        gtot = acc[2]
        u = gsel.random() * gtot
        acc_sum = 0.0
        sel_row = -1
        sel_dir = -1
        for w in range(V):
            for d in range(8):
                acc_sum += rates[w, d]
                if u < acc_sum:
                    sel_row = w
                    sel_dir = d
                    break
            if sel_row >= 0:
                break
        if sel_row < 0:
            for w in range(V - 1, -1, -1):
                for d in range(7, -1, -1):
                    if rates[w, d] > 0.0:
                        sel_row = w
                        sel_dir = d
                        break
                if sel_row >= 0:
                    break

        r = gres.random()
        while r == 0.0:
            r = gres.random()
        dt = -math.log(r) / gtot

        g = counters[2]
        horizon = acc[0] + dt
        while g < n_grid and grid[g] < horizon:
            for w in range(V):
                out_sites[g, w] = vac_sites[w]
            for w in range(n_cu):
                out_sites[g, V + w] = cu_sites[w]
            g += 1
        counters[2] = g

        v = vac_sites[sel_row]
        t = nbr1[v, sel_dir]
        sp = occ[t]
        d_e = de[sel_row, sel_dir]
        ea = (ea0f if sp == 0 else ea0c) + 0.5 * d_e
        if ea < 0.0:
            counters[1] += 1

        occ[v] = sp
        occ[t] = 2
        vac_sites[sel_row] = t
        if sp == 1:
            for w in range(n_cu):
                if cu_sites[w] == t:
                    cu_sites[w] = v
                    break

        acc[0], acc[1] = _kahan_add_nb(acc[0], acc[1], dt)
        acc[4], acc[5] = _kahan_add_nb(acc[4], acc[5], d_e)

        ns = _collect_affected_nb(nbr1, nbr2, v, t, scratch)
        for w in range(V):
            if _row_needs_refresh_nb(nbr1, vac_sites[w], scratch, ns):
                old = 0.0
                for d in range(8):
                    old += rates[w, d]
                new = _refresh_row_nb(
                    occ, nbr1, nbr2, eps, ea0f, ea0c, g0, beta, vac_sites[w], rates[w], de[w]
                )
                acc[2], acc[3] = _kahan_add_nb(acc[2], acc[3], new - old)

        counters[0] += 1


# -- standalone operations -------------------------------------------------


def residence_time(total_rate: float, gen: np.random.Generator) -> float:
    """dt = -ln(r) / Gamma_tot with r ~ U(0,1), r redrawn while exactly 0."""
    if total_rate <= 0:
        raise SimulationError(f"total rate {total_rate} must be positive")
    r = gen.random()
    while r == 0.0:
        r = gen.random()
    return -math.log(r) / total_rate


def scan_select(rates: np.ndarray, u: float) -> tuple[int, int]:
    """Linear prefix-sum scan over a (V, 8) rate table.

    u is already scaled by Gamma_tot. Zero-rate entries can never newly
    satisfy u < prefix, so no validity check is needed in the scan; the
    fallback for the float tail picks the last positive-rate event.
    """
    acc = 0.0
    V = rates.shape[0]
    for w in range(V):
        for d in range(8):
            acc += rates[w, d]
            if u < acc:
                return w, d
    for w in range(V - 1, -1, -1):
        for d in range(7, -1, -1):
            if rates[w, d] > 0.0:
                return w, d
    raise SimulationError("empty event catalog: no executable hops")


class ClassicalKMC:
    """Reference residence-time loop with an incrementally maintained catalog.

    The catalog is a (V, 8) rate table, one row per vacancy in
    lat.vacancy_index order. Gamma_tot carries a Kahan compensation term
    and is recomputed exactly every `exact_every` steps.
    """

    def __init__(self, lat: Lattice, pot: PairPotential, params: RateParams, seed,
                 exact_every: int = DEFAULT_EXACT_EVERY):
        self.lat = lat
        self.pot = pot
        self.params = params
        self.streams = seed if isinstance(seed, rng.StreamSet) else rng.StreamSet(seed)
        self.exact_every = int(exact_every)
        V = len(lat.vacancy_index)
        if V == 0:
            raise SimulationError("lattice has no vacancies, no events exist")
        self.vac_sites = np.array(lat.vacancy_index, dtype=np.int64)
        self.rates = np.zeros((V, N_DIR))
        self.de = np.zeros((V, N_DIR))
        self.time = 0.0
        self._time_comp = 0.0
        self.step_count = 0
        self.energy_delta = 0.0
        self._e_comp = 0.0
        self.neg_ea_executed = 0
        self.gamma_tot = 0.0
        self._g_comp = 0.0
        self.enumerate_events()

    # -- catalog ---------------------------------------------------------

    def _refresh_row(self, w: int) -> float:
        return _refresh_row_nb(
            self.lat.occupancy, self.lat.nbr1, self.lat.nbr2, self.pot.table,
            self.params.ea0_fe, self.params.ea0_cu, self.params.gamma0, self.params.beta,
            self.vac_sites[w], self.rates[w], self.de[w],
        )

    def enumerate_events(self) -> None:
        self.gamma_tot, self._g_comp = _enumerate_nb(
            self.lat.occupancy, self.lat.nbr1, self.lat.nbr2, self.pot.table,
            self.params.ea0_fe, self.params.ea0_cu, self.params.gamma0, self.params.beta,
            self.vac_sites, self.rates, self.de,
        )

    def events(self) -> list[HopEvent]:
        out = []
        for w, v in enumerate(self.vac_sites):
            for d in range(N_DIR):
                if self.rates[w, d] > 0.0:
                    t = int(self.lat.nbr1[v, d])
                    out.append(
                        HopEvent(int(v), d, t, int(self.lat.occupancy[t]), float(self.rates[w, d]))
                    )
        return out

    def local_update(self, site_a: int, site_b: int) -> None:
        """Refresh rows affected by a swap of sites a and b.

        A row changes iff a or b lies on the row's vacancy, one of its
        targets, or within two shells of either, which reduces to
        ({vac} u its 1NN) hitting {a, b} u shells12(a) u shells12(b).
        """
        lat = self.lat
        affected = {site_a, site_b}
        affected.update(int(x) for x in lat.nbr1[site_a])
        affected.update(int(x) for x in lat.nbr2[site_a])
        affected.update(int(x) for x in lat.nbr1[site_b])
        affected.update(int(x) for x in lat.nbr2[site_b])
        for w in range(self.vac_sites.shape[0]):
            vw = int(self.vac_sites[w])
            hit = vw in affected or any(int(n) in affected for n in lat.nbr1[vw])
            if hit:
                old = 0.0
                for d in range(N_DIR):
                    old += self.rates[w, d]
                new = self._refresh_row(w)
                self.gamma_tot, self._g_comp = kahan_add(self.gamma_tot, self._g_comp, new - old)

    # -- loop ------------------------------------------------------------

    def select(self) -> tuple[int, int]:
        if self.gamma_tot <= 0:
            raise SimulationError("empty event catalog: total rate is not positive")
        u = self.streams.get(rng.SELECT).random() * self.gamma_tot
        return scan_select(self.rates, u)

    def step(self) -> tuple:
        """One select-apply-advance-update cycle.

        Returns (step, time_s, vacancy_site, direction, dE_eV, gamma_tot,
        dt_s) with gamma_tot the selection-time total and time_s the
        post-advance clock.
        """
        if self.exact_every > 0 and self.step_count > 0 and self.step_count % self.exact_every == 0:
            self.enumerate_events()
        gtot = self.gamma_tot
        sel_row, sel_dir = self.select()
        dt = residence_time(gtot, self.streams.get(rng.RESIDENCE))

        v = int(self.vac_sites[sel_row])
        t = int(self.lat.nbr1[v, sel_dir])
        sp = int(self.lat.occupancy[t])
        d_e = float(self.de[sel_row, sel_dir])
        if self.params.ea0(sp) + 0.5 * d_e < 0.0:
            self.neg_ea_executed += 1

        self.lat.apply_hop(v, t)
        self.vac_sites[sel_row] = t
        self.time, self._time_comp = kahan_add(self.time, self._time_comp, dt)
        self.energy_delta, self._e_comp = kahan_add(self.energy_delta, self._e_comp, d_e)
        self.local_update(v, t)
        rec = (self.step_count, self.time, v, sel_dir, d_e, gtot, dt)
        self.step_count += 1
        return rec

    def run(self, steps: int, sinks=()) -> RunResult:
        if steps < 1:
            raise SimulationError(f"step count {steps} must be at least 1")
        for _ in range(steps):
            rec = self.step()
            for sink in sinks:
                sink.on_step(*rec)
        return RunResult(
            steps=self.step_count,
            time_s=self.time,
            energy_delta=self.energy_delta,
            gamma_tot=self.gamma_tot,
            neg_ea_executed=self.neg_ea_executed,
        )


# -- compiled driver ---------------------------------------------------------


def run_classical(
    lat: Lattice,
    pot: PairPotential,
    params: RateParams,
    steps: int,
    seed,
    sinks=(),
    track_bonds: bool = False,
    exact_every: int = DEFAULT_EXACT_EVERY,
    chunk: int = DEFAULT_CHUNK,
) -> RunResult:
    """Run the compiled residence-time loop for `steps` hops.

    Mutates `lat` in place. Sinks receive per-step arrays one chunk at a
    time through on_chunk(start_step, columns). Draw order matches
    ClassicalKMC exactly, so both paths yield the same trajectory for the
    same seed.
    """
    if steps < 1:
        raise SimulationError(f"step count {steps} must be at least 1")
    streams = seed if isinstance(seed, rng.StreamSet) else rng.StreamSet(seed)
    V = len(lat.vacancy_index)
    if V == 0:
        raise SimulationError("lattice has no vacancies, no events exist")

    occ = lat.occupancy
    vac_sites = np.array(lat.vacancy_index, dtype=np.int64)
    rates = np.zeros((V, N_DIR))
    de = np.zeros((V, N_DIR))
    acc = np.zeros(7)
    counters = np.zeros(2, dtype=np.int64)
    scratch = np.empty(30, dtype=np.int64)

    acc[2], acc[3] = _enumerate_nb(
        occ, lat.nbr1, lat.nbr2, pot.table,
        params.ea0_fe, params.ea0_cu, params.gamma0, params.beta,
        vac_sites, rates, de,
    )
    if acc[2] <= 0:
        raise SimulationError("empty event catalog: total rate is not positive")
    b0 = lat.cu_cu_first_shell_bonds() if track_bonds else 0
    acc[6] = b0

    gsel = streams.get(rng.SELECT)
    gres = streams.get(rng.RESIDENCE)

    n_buf = min(chunk, steps)
    log_vac = np.empty(n_buf, dtype=np.int64)
    log_dir = np.empty(n_buf, dtype=np.int8)
    log_de = np.empty(n_buf)
    log_gtot = np.empty(n_buf)
    log_dt = np.empty(n_buf)
    log_time = np.empty(n_buf)
    log_b = np.empty(n_buf, dtype=np.int64)

    done = 0
    while done < steps:
        n = min(chunk, steps - done)
        _run_chunk_nb(
            occ, lat.nbr1, lat.nbr2, vac_sites, rates, de, pot.table,
            params.ea0_fe, params.ea0_cu, params.gamma0, params.beta,
            n, gsel, gres, acc, counters, exact_every, track_bonds,
            log_vac, log_dir, log_de, log_gtot, log_dt, log_time, log_b, scratch,
        )
        if sinks:
            cols = {
                "vacancy_site": log_vac[:n],
                "direction": log_dir[:n],
                "dE_eV": log_de[:n],
                "gamma_tot": log_gtot[:n],
                "dt_s": log_dt[:n],
                "time_s": log_time[:n],
                "b_cucu": log_b[:n],
            }
            for sink in sinks:
                sink.on_chunk(done, cols)
        done += n

    lat.vacancy_index = [int(s) for s in vac_sites]
    lat.cu_index = np.flatnonzero(occ == CU).tolist()
    if counters[1]:
        log.warning("%d executed hops had negative activation energy", counters[1])
    return RunResult(
        steps=int(counters[0]),
        time_s=float(acc[0]),
        energy_delta=float(acc[4]),
        gamma_tot=float(acc[2]),
        neg_ea_executed=int(counters[1]),
        b_final=int(acc[6]) if track_bonds else None,
    )


def run_grid_sampled(
    lat: Lattice,
    pot: PairPotential,
    params: RateParams,
    steps: int,
    seed,
    grid_times: np.ndarray,
    exact_every: int = DEFAULT_EXACT_EVERY,
) -> tuple[np.ndarray, int, RunResult]:
    """Run the compiled loop, recording tracked-site ids on a time grid.

    Tracks every vacancy and every Cu atom, so it is only meant for
    micro-systems (enforced cap). Returns (samples, n_sampled, result)
    where samples[g] = [vacancy sites..., Cu sites...] of the state
    occupying grid_times[g].
    """
    if steps < 1:
        raise SimulationError(f"step count {steps} must be at least 1")
    streams = seed if isinstance(seed, rng.StreamSet) else rng.StreamSet(seed)
    V = len(lat.vacancy_index)
    n_cu = len(lat.cu_index)
    if V + n_cu > 64:
        raise SimulationError("grid sampling tracks all vacancies and Cu; too many for this mode")

    occ = lat.occupancy
    vac_sites = np.array(lat.vacancy_index, dtype=np.int64)
    cu_sites = np.array(lat.cu_index, dtype=np.int64)
    rates = np.zeros((V, N_DIR))
    de = np.zeros((V, N_DIR))
    acc = np.zeros(7)
    counters = np.zeros(3, dtype=np.int64)
    scratch = np.empty(30, dtype=np.int64)
    grid = np.asarray(grid_times, dtype=np.float64)
    out = np.full((grid.shape[0], V + n_cu), -1, dtype=np.int64)

    acc[2], acc[3] = _enumerate_nb(
        occ, lat.nbr1, lat.nbr2, pot.table,
        params.ea0_fe, params.ea0_cu, params.gamma0, params.beta,
        vac_sites, rates, de,
    )
    if acc[2] <= 0:
        raise SimulationError("empty event catalog: total rate is not positive")

    _run_grid_nb(
        occ, lat.nbr1, lat.nbr2, vac_sites, cu_sites, rates, de, pot.table,
        params.ea0_fe, params.ea0_cu, params.gamma0, params.beta,
        steps, streams.get(rng.SELECT), streams.get(rng.RESIDENCE),
        acc, counters, exact_every, grid, out, scratch,
    )

    lat.vacancy_index = [int(s) for s in vac_sites]
    lat.cu_index = np.flatnonzero(occ == CU).tolist()
    result = RunResult(
        steps=int(counters[0]),
        time_s=float(acc[0]),
        energy_delta=float(acc[4]),
        gamma_tot=float(acc[2]),
        neg_ea_executed=int(counters[1]),
    )
    return out, int(counters[2]), result


# -- sinks -----------------------------------------------------------------


class TrajectoryCSV:
    """Per-step trajectory log.

    Columns: step, time_s, vacancy_site, direction, dE_eV, gamma_tot,
    dt_s. Float formats are fixed so identical runs produce identical
    bytes.
    """

    HEADER = "step,time_s,vacancy_site,direction,dE_eV,gamma_tot,dt_s"

    def __init__(self, path):
        self._fh = open(path, "w")
        self._fh.write(self.HEADER + "\n")

    def on_step(self, step, time_s, vac, direction, d_e, gtot, dt):
        self._fh.write(
            f"{step},{time_s:.12e},{vac},{direction},{d_e:.12e},{gtot:.12e},{dt:.12e}\n"
        )

    def on_chunk(self, start_step, cols):
        t, v = cols["time_s"], cols["vacancy_site"]
        d, e = cols["direction"], cols["dE_eV"]
        g, dt = cols["gamma_tot"], cols["dt_s"]
        lines = [
            f"{start_step + i},{t[i]:.12e},{v[i]},{d[i]},{e[i]:.12e},{g[i]:.12e},{dt[i]:.12e}\n"
            for i in range(len(t))
        ]
        self._fh.write("".join(lines))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
