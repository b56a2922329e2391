"""Policy-reweighted event sampling with importance-weight bookkeeping.

The physical law picks event a with p(a) = Gamma_a / Z. The sampler
instead draws from q(a) = pi(a) * Gamma_a / Z', where pi is the masked
global policy and Z' = sum pi * Gamma. Statistics under p are recovered
by importance weights: per-sample 1/pi(a) for the self-normalized
estimator, and per-trajectory log w = sum_t (log Z'_t - log Z_t -
log pi_t), accumulated in log domain because linear products underflow
long before T = 1e4.

The physical clock is untouched: dt is still drawn from the unmodified
total rate Z, so reweighting changes which event fires, never how fast
time passes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from swarmkmc import rng
from swarmkmc.agents import MLP, GlobalPolicy, global_softmax, observe_all
from swarmkmc.energetics import PairPotential, RateParams
from swarmkmc.errors import SimulationError
from swarmkmc.kinetics import ClassicalKMC, kahan_add, residence_time
from swarmkmc.lattice import Lattice

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 64


@dataclass
class ProposalDistribution:
    p: np.ndarray       # physical probabilities, Gamma/Z
    q: np.ndarray       # reweighted probabilities, pi*Gamma/Z'
    Z: float            # total physical rate (1/s)
    Zprime: float       # policy-modulated normalizer (1/s)


@dataclass
class StepWeight:
    pi_a: float
    inv_pi: float


@dataclass
class TrajectoryRecord:
    """Per-step IS bookkeeping for one sampled trajectory."""

    actions: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    des: list = field(default_factory=list)
    pis: list = field(default_factory=list)
    Zs: list = field(default_factory=list)
    Zprimes: list = field(default_factory=list)

    def append(self, action: int, dt: float, de: float, pi_a: float, Z: float, Zprime: float):
        if pi_a <= 0:
            raise SimulationError(f"recorded pi_a {pi_a} must be positive")
        self.actions.append(int(action))
        self.dts.append(float(dt))
        self.des.append(float(de))
        self.pis.append(float(pi_a))
        self.Zs.append(float(Z))
        self.Zprimes.append(float(Zprime))

    @property
    def horizon(self) -> int:
        return len(self.actions)


def reweighted_distribution(policy: GlobalPolicy, rates: np.ndarray,
                            total_rate: float | None = None) -> ProposalDistribution:
    """Fuse policy probabilities with physical rates.

    `rates` is the flat event-rate vector aligned entry by entry with the
    policy (agent-major, 8 directions per agent); zero rate marks an
    invalid event and must coincide with the policy mask.
    """
    gamma = np.asarray(rates, dtype=np.float64).ravel()
    if gamma.shape != policy.probs.shape:
        raise SimulationError(
            f"rate vector length {gamma.shape} does not match policy {policy.probs.shape}"
        )
    valid = gamma > 0.0
    if not np.array_equal(valid, policy.mask):
        raise SimulationError("policy mask and positive-rate support disagree")
    Z = float(gamma.sum()) if total_rate is None else float(total_rate)
    if Z <= 0:
        raise SimulationError("total physical rate must be positive")
    fused = policy.probs * gamma
    Zprime = float(fused.sum())
    if Zprime <= 0:
        raise SimulationError("policy-modulated normalizer Z' collapsed to zero")
    return ProposalDistribution(p=gamma / Z, q=fused / Zprime, Z=Z, Zprime=Zprime)


def sample_action(dist: ProposalDistribution, policy: GlobalPolicy,
                  gen: np.random.Generator) -> tuple[int, StepWeight]:
    """Draw one event index from q; the weight captures pi at that index."""
    cum = np.cumsum(dist.q)
    u = gen.random()
    idx = int(np.searchsorted(cum, u, side="right"))
    if idx >= dist.q.size or dist.q[idx] <= 0.0:
        # float tail: fall back to the last event with positive q
        idx = int(np.flatnonzero(dist.q > 0.0)[-1])
    pi_a = float(policy.probs[idx])
    return idx, StepWeight(pi_a=pi_a, inv_pi=1.0 / pi_a)


def is_estimate(f_values, weights) -> float:
    """Self-normalized importance estimate of E_p[f] from q-samples.

    weights are StepWeight objects or raw pi values; each sample
    contributes with weight 1/pi.
    """
    f = np.asarray(f_values, dtype=np.float64)
    if f.size == 0:
        raise SimulationError("importance estimate needs at least one sample")
    inv = np.array(
        [w.inv_pi if isinstance(w, StepWeight) else 1.0 / float(w) for w in weights]
    )
    if inv.shape != f.shape:
        raise SimulationError("sample and weight counts differ")
    return float(np.sum(f * inv) / np.sum(inv))


def trajectory_weight(record: TrajectoryRecord) -> tuple[float, float]:
    """(w, log w) for a whole trajectory; the log value is authoritative.

    log w = sum_t (log Z'_t - log Z_t - log pi_t); the linear value is
    exp(log w) and may overflow to inf for strongly biased policies.
    """
    logw = 0.0
    for pi_a, Z, Zp in zip(record.pis, record.Zs, record.Zprimes):
        if pi_a <= 0:
            raise SimulationError("trajectory weight undefined for pi_a <= 0")
        logw += math.log(Zp) - math.log(Z) - math.log(pi_a)
    with np.errstate(over="ignore"):
        w = float(np.exp(logw))
    return w, logw


def windowed_log_weights(record: TrajectoryRecord, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Per-window cumulative log weights (bounded-horizon segments)."""
    if window < 1:
        raise SimulationError(f"window {window} must be at least 1")
    per_step = (
        np.log(np.asarray(record.Zprimes))
        - np.log(np.asarray(record.Zs))
        - np.log(np.asarray(record.pis))
    )
    return np.array(
        [per_step[i : i + window].sum() for i in range(0, record.horizon, window)]
    )


def windowed_estimate(record: TrajectoryRecord, f_per_step, window: int = DEFAULT_WINDOW) -> float:
    """Trajectory observable via per-window self-normalization.

    Windows act as replicas: each carries exp(log w_window) and the mean
    of f over its steps. Log weights are centered before exponentiation
    so the ratio never over/underflows.
    """
    f = np.asarray(f_per_step, dtype=np.float64)
    if f.size != record.horizon:
        raise SimulationError("per-step values must match the trajectory horizon")
    logw = windowed_log_weights(record, window)
    fw = np.array([f[i : i + window].mean() for i in range(0, record.horizon, window)])
    shifted = np.exp(logw - logw.max())
    return float(np.sum(shifted * fw) / np.sum(shifted))


# -- the reweighted sampling loop --------------------------------------------


@dataclass
class StepOutput:
    step: int
    obs: np.ndarray          # (N, 42) one-hot observations, pre-hop
    mask: np.ndarray         # (N*8,) valid-event mask
    action: int              # flat index into the (N*8) event vector
    vacancy_site: int
    target_site: int
    direction: int
    pi_a: float
    log_q_a: float
    p_a: float
    q_a: float
    Z: float
    Zprime: float
    de: float
    dt: float
    time_s: float


class SwarmSampler:
    """Drives the KMC state with actions drawn from q instead of p.

    Owns a ClassicalKMC for catalog maintenance and the physical clock;
    only event selection changes. Draw order per step: one uniform from
    the "select" stream for the action, one from "residence" for dt.
    """

    def __init__(self, lat: Lattice, pot: PairPotential, params: RateParams,
                 actor: MLP, seed, exact_every: int = 10_000):
        self.sim = ClassicalKMC(lat, pot, params, seed, exact_every=exact_every)
        self.actor = actor

    @property
    def lat(self) -> Lattice:
        return self.sim.lat

    @property
    def streams(self) -> rng.StreamSet:
        return self.sim.streams

    def policy_for_state(self) -> tuple[GlobalPolicy, np.ndarray]:
        """(policy, obs) for the current catalog and occupancy."""
        sim = self.sim
        obs = observe_all(sim.lat, sim.vac_sites)
        logits, _ = self.actor.forward(obs)
        mask = (sim.rates > 0.0).ravel()
        return global_softmax(logits.ravel(), mask), obs

    def step(self) -> StepOutput:
        sim = self.sim
        if sim.exact_every > 0 and sim.step_count > 0 and sim.step_count % sim.exact_every == 0:
            sim.enumerate_events()
        Z = sim.gamma_tot
        if Z <= 0:
            raise SimulationError("empty event catalog: total rate is not positive")
        policy, obs = self.policy_for_state()
        dist = reweighted_distribution(policy, sim.rates.ravel(), total_rate=Z)
        idx, weight = sample_action(dist, policy, self.streams.get(rng.SELECT))
        dt = residence_time(Z, self.streams.get(rng.RESIDENCE))

        row, direction = divmod(idx, 8)
        v = int(sim.vac_sites[row])
        t = int(sim.lat.nbr1[v, direction])
        de = float(sim.de[row, direction])
        rate_a = float(sim.rates[row, direction])
        if sim.params.ea0(int(sim.lat.occupancy[t])) + 0.5 * de < 0.0:
            sim.neg_ea_executed += 1

        sim.lat.apply_hop(v, t)
        sim.vac_sites[row] = t
        sim.time, sim._time_comp = kahan_add(sim.time, sim._time_comp, dt)
        sim.energy_delta, sim._e_comp = kahan_add(sim.energy_delta, sim._e_comp, de)
        sim.local_update(v, t)
        out = StepOutput(
            step=sim.step_count,
            obs=obs,
            mask=policy.mask,
            action=idx,
            vacancy_site=v,
            target_site=t,
            direction=direction,
            pi_a=weight.pi_a,
            log_q_a=float(policy.log_probs[idx]) + math.log(rate_a) - math.log(dist.Zprime),
            p_a=float(dist.p[idx]),
            q_a=float(dist.q[idx]),
            Z=dist.Z,
            Zprime=dist.Zprime,
            de=de,
            dt=dt,
            time_s=sim.time,
        )
        sim.step_count += 1
        return out

    def run(self, steps: int, sinks=()) -> TrajectoryRecord:
        if steps < 1:
            raise SimulationError(f"step count {steps} must be at least 1")
        record = TrajectoryRecord()
        log_w = 0.0
        for _ in range(steps):
            out = self.step()
            record.append(out.action, out.dt, out.de, out.pi_a, out.Z, out.Zprime)
            log_w += math.log(out.Zprime) - math.log(out.Z) - math.log(out.pi_a)
            for sink in sinks:
                sink.on_swarm_step(out, log_w)
        return record


def run_swarm(lat: Lattice, pot: PairPotential, params: RateParams, actor: MLP,
              steps: int, seed, sinks=(), exact_every: int = 10_000) -> TrajectoryRecord:
    """Convenience wrapper: build a SwarmSampler and run it."""
    return SwarmSampler(lat, pot, params, actor, seed, exact_every=exact_every).run(steps, sinks)


class ISAuditCSV:
    """Per-step importance-sampling audit log.

    Columns: step, action_index, pi_a, Z, Zprime, log_w_cum, dt_s, dE_eV.
    """

    HEADER = "step,action_index,pi_a,Z,Zprime,log_w_cum,dt_s,dE_eV"

    def __init__(self, path):
        self._fh = open(path, "w")
        self._fh.write(self.HEADER + "\n")

    def on_swarm_step(self, out: StepOutput, log_w_cum: float):
        self._fh.write(
            f"{out.step},{out.action},{out.pi_a:.12e},{out.Z:.12e},"
            f"{out.Zprime:.12e},{log_w_cum:.12e},{out.dt:.12e},{out.de:.12e}\n"
        )

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
