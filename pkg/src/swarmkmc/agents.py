"""Actor, critic, and their gradients, in plain numpy.

Each vacancy is an agent observing the species of its 14 neighbors
(8 first-shell then 6 second-shell, canonical order). A weight-shared
MLP maps the one-hot encoded observation (42 inputs) to 8 hop-direction
logits; all agents' logits are flattened and arbitrated by one masked
softmax, so the number of agents never touches parameter shapes.

The critic scores the whole configuration from a fixed-length feature
vector: elementwise mean and max over the agents' one-hot observations
(84 values) plus six scalars of Cu geometry (mu, sigma per axis, octant
count variance c, mean vacancy-to-nearest-Cu distance d, shell Cu
fraction rho), 93 inputs total. Both networks are 5 hidden layers of
256 ReLU units, float64, with hand-written reverse mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from swarmkmc.errors import SimulationError
from swarmkmc.lattice import CU, VACANCY, Lattice

N_OBS = 14
N_SPECIES = 3
OBS_ONEHOT = N_OBS * N_SPECIES  # 42
K_DIR = 8
CRITIC_FEATURES = 2 * OBS_ONEHOT + 3 + 3 + 3  # mean, max, mu, sigma, (c, d, rho)

ACTOR_SIZES = (OBS_ONEHOT, 256, 256, 256, 256, 256, K_DIR)
CRITIC_SIZES = (CRITIC_FEATURES, 256, 256, 256, 256, 256, 1)


# -- observations -----------------------------------------------------------


def observe(lat: Lattice, vacancy_site: int) -> np.ndarray:
    """Species codes of the 14 neighbors, first shell then second."""
    if lat.occupancy[vacancy_site] != VACANCY:
        raise SimulationError(f"site {vacancy_site} does not hold a vacancy, cannot observe")
    return np.concatenate(
        [lat.occupancy[lat.nbr1[vacancy_site]], lat.occupancy[lat.nbr2[vacancy_site]]]
    ).astype(np.int8)


def one_hot(obs: np.ndarray) -> np.ndarray:
    """(..., 14) species codes -> (..., 42) floats, layout slot*3 + code."""
    obs = np.asarray(obs)
    out = np.zeros(obs.shape + (N_SPECIES,))
    np.put_along_axis(out, obs[..., None].astype(np.int64), 1.0, axis=-1)
    return out.reshape(obs.shape[:-1] + (OBS_ONEHOT,))


def observe_all(lat: Lattice, vac_sites) -> np.ndarray:
    """(N, 42) one-hot observation matrix for the given vacancies."""
    codes = np.concatenate(
        [lat.occupancy[lat.nbr1[vac_sites]], lat.occupancy[lat.nbr2[vac_sites]]], axis=1
    )
    return one_hot(codes)


# -- MLP with manual reverse mode -------------------------------------------


def he_uniform(fan_in: int, fan_out: int, gen: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return gen.uniform(-limit, limit, size=(fan_in, fan_out))


class MLP:
    """Dense ReLU network, linear output, float64, hand-written backprop."""

    def __init__(self, sizes, gen: np.random.Generator | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        self.W = []
        self.b = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if gen is None:
                self.W.append(np.zeros((fan_in, fan_out)))
            else:
                self.W.append(he_uniform(fan_in, fan_out, gen))
            self.b.append(np.zeros(fan_out))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.W, self.b))

    def forward(self, X: np.ndarray):
        """Returns (Y, cache); X is (B, in) or (in,)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        acts = [X]
        pre = []
        h = X
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            pre.append(z)
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return h, (acts, pre)

    def backward(self, cache, dY: np.ndarray):
        """Exact gradients for the cached forward pass.

        Returns (grads, dX) with grads a flat list [dW0, db0, dW1, ...].
        """
        acts, pre = cache
        d = np.atleast_2d(np.asarray(dY, dtype=np.float64))
        grads = [None] * (2 * len(self.W))
        for i in range(len(self.W) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.W[i].T
            if i > 0:
                d = d * (pre[i - 1] > 0.0)
        return grads, d

    # -- flat parameter views (optimizer and finite-difference probes) --

    def get_flat(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.W, self.b):
            parts.append(W.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_params:
            raise SimulationError(f"parameter vector size {vec.size} != {self.n_params}")
        if not np.isfinite(vec).all():
            raise SimulationError("non-finite network parameters")
        at = 0
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            self.W[i] = vec[at : at + W.size].reshape(W.shape).copy()
            at += W.size
            self.b[i] = vec[at : at + b.size].copy()
            at += b.size

    @staticmethod
    def flat_grads(grads) -> np.ndarray:
        return np.concatenate([g.ravel() for g in grads])

    def state_dict(self) -> dict:
        out = {"sizes": np.array(self.sizes, dtype=np.int64)}
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            out[f"W{i}"] = W
            out[f"b{i}"] = b
        return out

    def load_state_dict(self, d) -> None:
        sizes = tuple(int(s) for s in np.asarray(d["sizes"]))
        if sizes != self.sizes:
            raise SimulationError(f"architecture mismatch: checkpoint {sizes} vs model {self.sizes}")
        for i in range(len(self.W)):
            W = np.asarray(d[f"W{i}"], dtype=np.float64)
            b = np.asarray(d[f"b{i}"], dtype=np.float64)
            if W.shape != self.W[i].shape or b.shape != self.b[i].shape:
                raise SimulationError("architecture mismatch in layer shapes")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise SimulationError("non-finite network parameters in checkpoint")
            self.W[i] = W.copy()
            self.b[i] = b.copy()


def make_actor(gen: np.random.Generator | None = None) -> MLP:
    return MLP(ACTOR_SIZES, gen)


def make_critic(gen: np.random.Generator | None = None) -> MLP:
    return MLP(CRITIC_SIZES, gen)


# -- global masked softmax ---------------------------------------------------


@dataclass
class GlobalPolicy:
    logits: np.ndarray  # (M,) flat, agent-major
    mask: np.ndarray    # (M,) bool, True = selectable
    probs: np.ndarray   # exact zeros at masked entries
    log_probs: np.ndarray  # -inf at masked entries


def global_softmax(logits: np.ndarray, mask: np.ndarray) -> GlobalPolicy:
    """Stable softmax over the unmasked entries of the flat logit vector.

    Masked entries get probability exactly 0 and never touch the
    normalizer. Raises if nothing is selectable or an unmasked entry
    underflows to zero probability (the policy must keep full support).
    """
    z = np.asarray(logits, dtype=np.float64).ravel()
    m = np.asarray(mask, dtype=bool).ravel()
    if z.shape != m.shape:
        raise SimulationError(f"logits shape {z.shape} does not match mask {m.shape}")
    if not m.any():
        raise SimulationError("all events masked, the policy has nothing to select")
    zmax = z[m].max()
    shifted = np.where(m, z - zmax, -np.inf)
    ex = np.exp(shifted)
    total = ex.sum()
    probs = ex / total
    log_probs = shifted - np.log(total)
    if not (probs[m] > 0.0).all():
        raise SimulationError("policy probability underflowed to zero on a valid event")
    return GlobalPolicy(logits=z, mask=m, probs=probs, log_probs=log_probs)


def masked_softmax_batch(logits: np.ndarray, mask: np.ndarray):
    """(B, M) batched variant used by the trainer; returns (probs, log_probs)."""
    z = np.asarray(logits, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    neg = np.where(m, z, -np.inf)
    zmax = neg.max(axis=1, keepdims=True)
    ex = np.exp(neg - zmax)
    total = ex.sum(axis=1, keepdims=True)
    probs = ex / total
    log_probs = (neg - zmax) - np.log(total)
    return probs, log_probs


def grad_log_prob_logits(probs: np.ndarray, action) -> np.ndarray:
    """d log softmax(z)[a] / dz = onehot(a) - probs; rows at masked entries
    are zero automatically because their probability is zero."""
    g = -probs.copy()
    if g.ndim == 1:
        g[action] += 1.0
    else:
        g[np.arange(g.shape[0]), action] += 1.0
    return g


def entropy_and_grad(probs: np.ndarray):
    """Shannon entropy of the masked distribution and dH/dlogits.

    H = -sum pi log pi over the support; dH/dz_j = -pi_j (log pi_j + H).
    """
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    if p.ndim == 1:
        h = -float(np.sum(p * logp))
        grad = -p * (logp + h)
        return h, grad
    h = -np.sum(p * logp, axis=1)
    grad = -p * (logp + h[:, None])
    return h, grad


# -- critic features ---------------------------------------------------------


@dataclass
class CriticFeaturesV:
    obs_mean: np.ndarray   # (42,)
    obs_max: np.ndarray    # (42,)
    mu: np.ndarray         # (3,) Cu centroid, absolute box coordinates
    sigma: np.ndarray      # (3,) per-axis population variance around mu
    c: float               # octant Cu-count population variance
    d: float               # mean vacancy -> nearest-Cu min-image distance
    rho: float             # mean Cu fraction in the vacancies' 14-shells

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.obs_mean, self.obs_max, self.mu, self.sigma, [self.c, self.d, self.rho]]
        )


def _circular_centroid(coords: np.ndarray, length: float) -> float:
    """Mean position on a ring of the given circumference."""
    theta = coords * (2.0 * np.pi / length)
    mean = np.arctan2(np.sin(theta).mean(), np.cos(theta).mean())
    return (mean * length / (2.0 * np.pi)) % length


def critic_features(lat: Lattice, vac_sites=None) -> CriticFeaturesV:
    if not lat.cu_index:
        raise SimulationError("critic features need at least one Cu atom")
    if vac_sites is None:
        vac_sites = lat.vacancy_index
    vac_sites = np.asarray(vac_sites, dtype=np.int64)
    if vac_sites.size == 0:
        raise SimulationError("critic features need at least one vacancy")

    oh = observe_all(lat, vac_sites)
    obs_mean = oh.mean(axis=0)
    obs_max = oh.max(axis=0)

    cu_pos = lat.positions[np.asarray(lat.cu_index, dtype=np.int64)]
    center = np.array(
        [_circular_centroid(cu_pos[:, ax], lat.box[ax]) for ax in range(3)]
    )
    rel = lat.min_image(cu_pos - center)
    mu = (center + rel.mean(axis=0)) % lat.box
    sigma = rel.var(axis=0)

    octant = (
        (cu_pos[:, 0] >= lat.box[0] / 2).astype(np.int64)
        + 2 * (cu_pos[:, 1] >= lat.box[1] / 2)
        + 4 * (cu_pos[:, 2] >= lat.box[2] / 2)
    )
    counts = np.bincount(octant, minlength=8)
    c = float(counts.var())

    vac_pos = lat.positions[vac_sites]
    disp = lat.min_image(vac_pos[:, None, :] - cu_pos[None, :, :])
    dist = np.sqrt((disp ** 2).sum(axis=2))
    d = float(dist.min(axis=1).mean())

    shell = np.concatenate([lat.nbr1[vac_sites], lat.nbr2[vac_sites]], axis=1)
    rho = float((lat.occupancy[shell] == CU).mean())

    return CriticFeaturesV(obs_mean, obs_max, mu, sigma, c, d, rho)
