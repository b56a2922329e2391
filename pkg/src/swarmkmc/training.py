"""PPO training of the hop policy against the energy-descent reward.

Centralized-critic, decentralized-actor scheme: rollouts are collected
with actions drawn from the fused distribution q (policy times physical
rates), the critic scores whole configurations, and the PPO ratio is
taken over q itself. Because q is a masked softmax of
(logits + log Gamma) and Gamma carries no parameters, the analytic
gradient d log q(a)/d logits = onehot(a) - q, which keeps the whole
update in closed form.

Reward per step is the negative energy change, r_t = -dE_t, so episode
return telescopes to E_0 - E_T.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from swarmkmc import rng
from swarmkmc.agents import (
    CRITIC_FEATURES,
    MLP,
    OBS_ONEHOT,
    critic_features,
    entropy_and_grad,
    make_actor,
    make_critic,
    masked_softmax_batch,
)
from swarmkmc.energetics import PairPotential, RateParams
from swarmkmc.errors import ConfigError, SimulationError
from swarmkmc.lattice import Lattice
from swarmkmc.reweight import SwarmSampler

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 5e-4
    minibatch: int = 256
    epochs_per_update: int = 10
    clip: float = 0.2
    grad_clip: float = 0.2
    episode_length: int = 2048
    train_lattice: tuple = (10, 10, 10)
    cu_fraction: float = 0.0134
    vacancy_count: int = 1
    episodes: int = 5000
    checkpoint_every: int = 500
    exact_every: int = 10_000

    def __post_init__(self):
        for name in ("gamma", "gae_lambda", "entropy_coef", "value_coef",
                     "learning_rate", "minibatch", "epochs_per_update",
                     "episode_length", "episodes", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"PPO setting {name} must be positive")
        if not 0.0 < self.clip < 1.0:
            raise ConfigError(f"clip {self.clip} must lie in (0, 1)")
        self.train_lattice = tuple(int(x) for x in self.train_lattice)
        if len(self.train_lattice) != 3:
            raise ConfigError("train_lattice must have three extents")


def reward(prev_energy: float, new_energy: float) -> float:
    return -(new_energy - prev_energy)


def compute_gae(rewards, values, bootstrap_value: float, gamma: float, lam: float):
    """Reverse-recursion generalized advantage estimate.

    delta_t = r_t + gamma*v_{t+1} - v_t with v_T = bootstrap;
    A_t = delta_t + gamma*lam*A_{t+1}; returns = A + v.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise SimulationError(f"rewards shape {r.shape} != values shape {v.shape}")
    T = r.size
    adv = np.empty(T)
    nxt = 0.0
    v_next = float(bootstrap_value)
    for t in range(T - 1, -1, -1):
        delta = r[t] + gamma * v_next - v[t]
        nxt = delta + gamma * lam * nxt
        adv[t] = nxt
        v_next = v[t]
    return adv, adv + v


class Adam:
    """First-order adaptive-moment optimizer over one flat vector."""

    def __init__(self, n_params: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Returns the additive parameter update for this gradient."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return -self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self):
        return {"adam_m": self.m, "adam_v": self.v, "adam_t": np.int64(self.t)}

    def load_state_dict(self, d):
        self.m = np.asarray(d["adam_m"], dtype=np.float64).copy()
        self.v = np.asarray(d["adam_v"], dtype=np.float64).copy()
        self.t = int(d["adam_t"])


# -- rollout collection -------------------------------------------------------


@dataclass
class Rollout:
    obs: np.ndarray        # (T, N, 42)
    mask: np.ndarray       # (T, M) bool
    log_gamma: np.ndarray  # (T, M), 0 at masked entries
    action: np.ndarray     # (T,) flat event index
    log_q_old: np.ndarray  # (T,) behavior log-probability at collection
    rewards: np.ndarray    # (T,)
    features: np.ndarray   # (T, F) critic features of the pre-hop state
    bootstrap_features: np.ndarray  # (F,) features of the final state

    @property
    def horizon(self) -> int:
        return self.action.size


def collect_rollout(sampler: SwarmSampler, steps: int) -> Rollout:
    sim = sampler.sim
    N = sim.vac_sites.size
    M = N * 8
    obs = np.empty((steps, N, OBS_ONEHOT))
    mask = np.empty((steps, M), dtype=bool)
    log_gamma = np.zeros((steps, M))
    action = np.empty(steps, dtype=np.int64)
    log_q_old = np.empty(steps)
    rewards = np.empty(steps)
    feats = np.empty((steps, CRITIC_FEATURES))
    for t in range(steps):
        # the sampler refreshes the catalog on its cadence at the top of
        # step(); run that here first so the stored rates are the ones
        # the step actually uses (the repeat inside step() is idempotent)
        if sim.exact_every > 0 and sim.step_count > 0 and sim.step_count % sim.exact_every == 0:
            sim.enumerate_events()
        feats[t] = critic_features(sim.lat, sim.vac_sites).vector()
        rates_flat = sim.rates.ravel()
        valid = rates_flat > 0
        log_gamma[t, valid] = np.log(rates_flat[valid])
        out = sampler.step()
        obs[t] = out.obs
        mask[t] = out.mask
        action[t] = out.action
        log_q_old[t] = out.log_q_a
        rewards[t] = -out.de
    bootstrap = critic_features(sim.lat, sim.vac_sites).vector()
    return Rollout(obs, mask, log_gamma, action, log_q_old, rewards, feats, bootstrap)


# -- PPO loss ------------------------------------------------------------------


def ppo_loss_and_grads(actor: MLP, critic: MLP, batch: dict, cfg: PPOConfig):
    """Clipped-surrogate loss and exact parameter gradients for one minibatch.

    batch keys: obs (B,N,42), mask (B,M), log_gamma (B,M), action (B,),
    log_q_old (B,), adv (B,), returns (B,), features (B,F).
    Returns (loss, actor_grad_flat, critic_grad_flat, diagnostics).
    """
    obs = batch["obs"]
    B, N, _ = obs.shape
    M = batch["mask"].shape[1]
    acts = np.arange(B)

    logits, a_cache = actor.forward(obs.reshape(B * N, 42))
    logits = logits.reshape(B, M)
    q, log_q = masked_softmax_batch(logits + batch["log_gamma"], batch["mask"])
    pi, _ = masked_softmax_batch(logits, batch["mask"])

    log_q_a = log_q[acts, batch["action"]]
    ratio = np.exp(log_q_a - batch["log_q_old"])
    adv = batch["adv"]
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    s1 = ratio * adv
    s2 = clipped * adv
    policy_loss = -float(np.mean(np.minimum(s1, s2)))

    entropy, d_h = entropy_and_grad(pi)
    mean_entropy = float(np.mean(entropy))

    values, c_cache = critic.forward(batch["features"])
    values = values[:, 0]
    err = values - batch["returns"]
    value_loss = float(np.mean(err ** 2))

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * mean_entropy
    if not np.isfinite(loss):
        raise SimulationError(
            f"non-finite PPO loss: policy {policy_loss}, value {value_loss}, "
            f"entropy {mean_entropy}"
        )

    # gradient flows through the surrogate only where the unclipped
    # branch is the active minimum
    use = (s1 <= s2).astype(np.float64)
    coeff = -(adv * ratio * use) / B  # d policy_loss / d log_q_a
    d_logits = coeff[:, None] * (-q)
    d_logits[acts, batch["action"]] += coeff
    # entropy bonus: loss includes -c_H * mean(H)
    d_logits += (-cfg.entropy_coef / B) * d_h

    actor_grads, _ = actor.backward(a_cache, d_logits.reshape(B * N, 8))
    d_values = (cfg.value_coef * 2.0 / B) * err
    critic_grads, _ = critic.backward(c_cache, d_values[:, None])

    diag = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": mean_entropy,
        "clip_fraction": float(np.mean(use < 0.5)),
    }
    return loss, MLP.flat_grads(actor_grads), MLP.flat_grads(critic_grads), diag


def ppo_update(actor: MLP, critic: MLP, rollout: Rollout, values: np.ndarray,
               bootstrap_value: float, cfg: PPOConfig, adam: Adam,
               shuffle_gen: np.random.Generator) -> dict:
    """One full PPO update over the rollout; mutates networks in place."""
    adv, returns = compute_gae(rollout.rewards, values, bootstrap_value,
                               cfg.gamma, cfg.gae_lambda)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    T = rollout.horizon
    diagnostics = []
    grad_norms = []
    for _ in range(cfg.epochs_per_update):
        order = shuffle_gen.permutation(T)
        for lo in range(0, T, cfg.minibatch):
            idx = order[lo : lo + cfg.minibatch]
            batch = {
                "obs": rollout.obs[idx],
                "mask": rollout.mask[idx],
                "log_gamma": rollout.log_gamma[idx],
                "action": rollout.action[idx],
                "log_q_old": rollout.log_q_old[idx],
                "adv": adv[idx],
                "returns": returns[idx],
                "features": rollout.features[idx],
            }
            loss, ga, gc, diag = ppo_loss_and_grads(actor, critic, batch, cfg)
            g = np.concatenate([ga, gc])
            norm = float(np.linalg.norm(g))
            grad_norms.append(norm)
            if norm > cfg.grad_clip:
                g *= cfg.grad_clip / norm
            theta = np.concatenate([actor.get_flat(), critic.get_flat()])
            theta += adam.step(g)
            na = actor.n_params
            actor.set_flat(theta[:na])
            critic.set_flat(theta[na:])
            diagnostics.append(diag)

    return {
        "policy_loss": float(np.mean([d["policy_loss"] for d in diagnostics])),
        "value_loss": float(np.mean([d["value_loss"] for d in diagnostics])),
        "entropy": float(np.mean([d["entropy"] for d in diagnostics])),
        "grad_norm": float(np.mean(grad_norms)),
        "clip_fraction": float(np.mean([d["clip_fraction"] for d in diagnostics])),
    }


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(path, actor: MLP, critic: MLP, adam: Adam, episode: int,
                    streams: rng.StreamSet, cfg: PPOConfig) -> None:
    payload = {"version": np.int64(CHECKPOINT_VERSION), "episode": np.int64(episode)}
    payload.update({f"actor_{k}": v for k, v in actor.state_dict().items()})
    payload.update({f"critic_{k}": v for k, v in critic.state_dict().items()})
    payload.update(adam.state_dict())
    payload["rng_state"] = np.frombuffer(
        json.dumps(_encode_rng(streams.state())).encode(), dtype=np.uint8
    )
    payload["config_json"] = np.frombuffer(
        json.dumps(asdict(cfg)).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        data = {k: z[k] for k in z.files}
    version = int(data["version"])
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"checkpoint version {version} not supported")
    return data


def _encode_rng(state: dict) -> dict:
    def conv(x):
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, np.ndarray):
            return {"__nd__": x.dtype.str, "data": x.tolist()}
        if isinstance(x, (np.integer,)):
            return int(x)
        return x

    return conv(state)


def _decode_rng(state: dict):
    def conv(x):
        if isinstance(x, dict):
            if "__nd__" in x:
                return np.array(x["data"], dtype=np.dtype(x["__nd__"]))
            return {k: conv(v) for k, v in x.items()}
        return x

    return conv(state)


def restore_networks(data: dict) -> tuple[MLP, MLP]:
    actor = make_actor()
    critic = make_critic()
    actor.load_state_dict({k[len("actor_"):]: v for k, v in data.items() if k.startswith("actor_")})
    critic.load_state_dict({k[len("critic_"):]: v for k, v in data.items() if k.startswith("critic_")})
    return actor, critic


def load_policy(path) -> MLP:
    """Actor network from a checkpoint, for deployment."""
    return restore_networks(load_checkpoint(path))[0]


# -- training loop -------------------------------------------------------------


class TrainingCSV:
    HEADER = "episode,mean_reward,policy_loss,value_loss,entropy,grad_norm,wall_ms"

    def __init__(self, path, append=False):
        exists = Path(path).exists()
        self._fh = open(path, "a" if append else "w")
        if not (append and exists):
            self._fh.write(self.HEADER + "\n")

    def write(self, episode, mean_reward, d, wall_ms):
        self._fh.write(
            f"{episode},{mean_reward:.9e},{d['policy_loss']:.9e},{d['value_loss']:.9e},"
            f"{d['entropy']:.9e},{d['grad_norm']:.9e},{wall_ms:.3f}\n"
        )
        self._fh.flush()

    def close(self):
        self._fh.close()


def train(cfg: PPOConfig, pot: PairPotential, params: RateParams, seed: int,
          out_dir, resume=None, progress=None) -> dict:
    """Full training loop; returns {'history': [...], 'checkpoint': path}.

    Episode e builds a fresh random lattice seeded from the "episode"
    stream, collects cfg.episode_length reweighted steps, and runs one
    PPO update. Checkpoints land in out_dir as ckpt_{episode}.bin with a
    latest.json manifest; training resumes bit-identically from one.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    streams = rng.StreamSet(seed)
    if resume is not None:
        data = load_checkpoint(resume)
        actor, critic = restore_networks(data)
        adam = Adam(actor.n_params + critic.n_params, cfg.learning_rate)
        adam.load_state_dict(data)
        start_episode = int(data["episode"])
        streams.restore(_decode_rng(json.loads(bytes(data["rng_state"]).decode())))
    else:
        init_gen = streams.get(rng.INIT)
        actor = make_actor(init_gen)
        critic = make_critic(init_gen)
        adam = Adam(actor.n_params + critic.n_params, cfg.learning_rate)
        start_episode = 0

    ep_gen = streams.get(rng.EPISODE)
    shuffle_gen = streams.get(rng.SHUFFLE)
    csv = TrainingCSV(out_dir / "training.csv", append=resume is not None)
    history = []
    ckpt_path = None
    nx, ny, nz = cfg.train_lattice

    try:
        for episode in range(start_episode, cfg.episodes):
            t0 = time.perf_counter()
            ep_seed = int(ep_gen.integers(0, 2 ** 62))
            lat = Lattice.build(nx, ny, nz, cfg.cu_fraction, cfg.vacancy_count, seed=ep_seed)
            sampler = SwarmSampler(lat, pot, params, actor, seed=ep_seed,
                                   exact_every=cfg.exact_every)
            rollout = collect_rollout(sampler, cfg.episode_length)
            values = critic.forward(rollout.features)[0][:, 0]
            bootstrap = float(critic.forward(rollout.bootstrap_features[None, :])[0][0, 0])
            diag = ppo_update(actor, critic, rollout, values, bootstrap, cfg, adam, shuffle_gen)
            mean_reward = float(rollout.rewards.mean())
            wall_ms = (time.perf_counter() - t0) * 1e3
            row = {"episode": episode, "mean_reward": mean_reward, **diag, "wall_ms": wall_ms}
            history.append(row)
            csv.write(episode, mean_reward, diag, wall_ms)
            if progress is not None:
                progress(row)

            last = episode == cfg.episodes - 1
            if (episode + 1) % cfg.checkpoint_every == 0 or last:
                ckpt_path = out_dir / f"ckpt_{episode + 1}.bin"
                save_checkpoint(ckpt_path, actor, critic, adam, episode + 1, streams, cfg)
                manifest = {"checkpoint": ckpt_path.name, "episode": episode + 1}
                (out_dir / "latest.json").write_text(json.dumps(manifest, indent=1))
                log.info("saved checkpoint %s", ckpt_path)
    finally:
        csv.close()

    return {"history": history, "checkpoint": str(ckpt_path), "actor": actor, "critic": critic}
