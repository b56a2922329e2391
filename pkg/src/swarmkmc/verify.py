"""On-demand verification oracles.

Five suites, each an independent statistical or numerical check of a
load-bearing property: brute-force bond counting, Boltzmann equilibrium
of the classical sampler, self-normalized importance-sampling
unbiasedness, finite-difference gradient checks, and the advantage
recursion against its quadratic-time definition. The acceptance tests
call the same entry points with larger budgets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from swarmkmc import rng
from swarmkmc.agents import MLP, entropy_and_grad, grad_log_prob_logits, masked_softmax_batch
from swarmkmc.energetics import RateParams, load_default_potential
from swarmkmc.errors import ConfigError
from swarmkmc.kinetics import ClassicalKMC, run_classical, run_grid_sampled
from swarmkmc.lattice import CU, FE, VACANCY, Lattice
from swarmkmc.training import PPOConfig, compute_gae, ppo_loss_and_grads


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "measured": self.measured,
            "detail": self.detail,
        }


# -- bond-count oracle -----------------------------------------------------------


def brute_force_bonds(lat: Lattice) -> np.ndarray:
    """O(N^2 * images) recount of the per-shell species-pair bond table.

    Counts every periodic image separately: at extent 2 a pair can be
    second-shell adjacent through both boundaries at once, and each such
    image is a distinct bond in the production convention.
    """
    counts = np.zeros((2, 3, 3), dtype=np.int64)
    pos = lat.positions
    occ = lat.occupancy
    shifts = np.array(
        [(lx, ly, lz) for lx in (-1, 0, 1) for ly in (-1, 0, 1) for lz in (-1, 0, 1)],
        dtype=np.float64,
    ) * lat.box
    for i in range(lat.n_sites):
        disp = pos[i + 1 :] - pos[i]
        for off in range(disp.shape[0]):
            r2 = ((disp[off] + shifts) ** 2).sum(axis=1)
            m1 = int(np.count_nonzero(np.abs(r2 - 0.75) < 1e-9))
            m2 = int(np.count_nonzero(np.abs(r2 - 1.0) < 1e-9))
            if m1 or m2:
                a, b = sorted((int(occ[i]), int(occ[i + 1 + off])))
                counts[0, a, b] += m1
                counts[1, a, b] += m2
    return counts


def check_bond_count(seed: int = 5, cases=((2, 3, 4), (4, 4, 4), (3, 5, 2))) -> CheckResult:
    for idx, (nx, ny, nz) in enumerate(cases):
        lat = Lattice.build(nx, ny, nz, cu_fraction=0.15, vacancy_count=2, seed=seed + idx)
        if not np.array_equal(lat.count_bonds(), brute_force_bonds(lat)):
            return CheckResult("bond-count", False, {"case": [nx, ny, nz]},
                               f"mismatch on {nx}x{ny}x{nz}")
    return CheckResult("bond-count", True, {"cases": len(cases)}, "exact match on all cases")


# -- Boltzmann equilibrium ---------------------------------------------------------


def defect_pair_weights(pot) -> tuple[np.ndarray, np.ndarray]:
    """Interaction corrections w_s(a, b) relative to an all-Fe matrix.

    The total energy of a dilute state is a constant plus the sum of
    w over defect pairs within two shells, which makes exact state-space
    enumeration O(1) per state.
    """
    eps = pot.table
    w = np.zeros((3, 3, 3))  # [relation, species_a, species_b], relation 0 = none
    for s in (1, 2):
        for a in range(3):
            for b in range(3):
                w[s, a, b] = eps[s - 1, a, b] - eps[s - 1, a, FE] - eps[s - 1, FE, b] + eps[s - 1, FE, FE]
    return w[:, VACANCY, CU], w[:, CU, CU]


def interaction_matrices(lat: Lattice, pot) -> tuple[np.ndarray, np.ndarray]:
    """(N, N) pairwise correction energies W_vc and W_cc.

    Counts periodic-image multiplicity: at extent 2 the +axis and -axis
    second-shell images of a pair collapse onto one site and both bonds
    enter the energy, exactly as the production bond sums count them.
    """
    w_vc, w_cc = defect_pair_weights(pot)
    N = lat.n_sites
    m1 = np.zeros((N, N))
    m2 = np.zeros((N, N))
    rows1 = np.repeat(np.arange(N), lat.nbr1.shape[1])
    rows2 = np.repeat(np.arange(N), lat.nbr2.shape[1])
    np.add.at(m1, (rows1, lat.nbr1.ravel()), 1.0)
    np.add.at(m2, (rows2, lat.nbr2.ravel()), 1.0)
    return m1 * w_vc[1] + m2 * w_vc[2], m1 * w_cc[1] + m2 * w_cc[2]


def enumerate_two_cu_classes(lat: Lattice, pot, beta: float):
    """Exact Boltzmann class probabilities for 1 vacancy + 2 Cu.

    States are classed by relative energy; returns (keys, probs, lookup)
    where lookup maps an integer energy key to a class index.
    """
    W_vc, W_cc = interaction_matrices(lat, pot)
    N = lat.n_sites
    tri = np.triu(np.ones((N, N), dtype=bool), k=1)

    boltz: dict[int, float] = {}
    counts: dict[int, int] = {}
    for v in range(N):
        rv = W_vc[v]
        e = rv[:, None] + rv[None, :] + W_cc
        valid = tri.copy()
        valid[v, :] = False
        valid[:, v] = False
        energies = e[valid]
        keys = np.round(energies * 1e9).astype(np.int64)
        uniq, inv, cnt = np.unique(keys, return_inverse=True, return_counts=True)
        sums = np.bincount(inv, weights=np.exp(-beta * energies))
        for k, c, s in zip(uniq, cnt, sums):
            boltz[int(k)] = boltz.get(int(k), 0.0) + float(s)
            counts[int(k)] = counts.get(int(k), 0) + int(c)

    keys = sorted(boltz)
    z = sum(boltz[k] for k in keys)
    probs = np.array([boltz[k] / z for k in keys])
    lookup = {k: i for i, k in enumerate(keys)}
    return keys, probs, lookup


def state_energy_key(W_vc, W_cc, v: int, c1: int, c2: int) -> int:
    e = W_vc[v, c1] + W_vc[v, c2] + W_cc[c1, c2]
    return int(round(e * 1e9))


def merge_low_expectation(observed: np.ndarray, expected: np.ndarray, floor: float = 5.0):
    """Pool cells until every expected count reaches the floor."""
    order = np.argsort(expected)
    obs_bins, exp_bins = [], []
    o_acc = e_acc = 0.0
    for i in order:
        o_acc += observed[i]
        e_acc += expected[i]
        if e_acc >= floor:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0:
        if exp_bins:
            obs_bins[-1] += o_acc
            exp_bins[-1] += e_acc
        else:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
    return np.array(obs_bins), np.array(exp_bins)


def check_boltzmann(extent: int = 4, n_cu: int = 2, steps: int = 2_000_000,
                    n_samples: int = 5_000, burn_in: float = 0.1,
                    alpha: float = 0.01, seed: int = 11,
                    temperature: float = 663.0) -> CheckResult:
    """Chi-square test of the sampled state distribution against the exact
    Boltzmann law over the enumerated micro state space.

    The jump chain itself is not Boltzmann distributed; states are sampled
    on a uniform grid of physical time (two passes with one seed: the
    first finds the total simulated time, the second records the states
    occupying the grid points).
    """
    from scipy import stats

    if n_cu != 2:
        raise ConfigError("exact enumeration is implemented for exactly 2 Cu atoms")
    pot, base = load_default_potential()
    params = RateParams(gamma0=base.gamma0, ea0_fe=base.ea0_fe, ea0_cu=base.ea0_cu,
                        temperature=temperature)

    lat0 = Lattice.build(extent, extent, extent, cu_fraction=0.0, vacancy_count=1, seed=seed)
    # exact Cu count, placed like any other random fill
    gen = rng.substream(seed, "boltzmann-cu")
    free = np.flatnonzero(lat0.occupancy == FE)
    cu_sites = gen.choice(free, size=n_cu, replace=False)
    lat0.occupancy[cu_sites] = CU
    lat0.cu_index = sorted(int(s) for s in cu_sites)

    first = lat0.copy()
    result = run_classical(first, pot, params, steps, seed=seed)
    total_time = result.time_s
    start = burn_in * total_time
    grid = start + (total_time - start) * (np.arange(n_samples) + 0.5) / n_samples

    second = lat0.copy()
    samples, n_got, _ = run_grid_sampled(second, pot, params, steps, seed=seed, grid_times=grid)
    if n_got != n_samples:
        return CheckResult("boltzmann", False, {"sampled": int(n_got)},
                           "time grid not fully covered by the trajectory")

    keys, probs, lookup = enumerate_two_cu_classes(lat0, pot, params.beta)
    W_vc, W_cc = interaction_matrices(lat0, pot)
    observed = np.zeros(len(keys))
    for v, c1, c2 in samples:
        observed[lookup[state_energy_key(W_vc, W_cc, int(v), int(c1), int(c2))]] += 1

    expected = probs * n_samples
    obs_b, exp_b = merge_low_expectation(observed, expected)
    dof = obs_b.size - 1
    stat = float(np.sum((obs_b - exp_b) ** 2 / exp_b))
    threshold = float(stats.chi2.ppf(1.0 - alpha, dof))
    return CheckResult(
        "boltzmann",
        stat <= threshold,
        {
            "chi2": stat,
            "threshold": threshold,
            "dof": int(dof),
            "classes": len(keys),
            "samples": int(n_samples),
            "steps": int(steps),
            "alpha": alpha,
        },
        f"chi2 {stat:.2f} vs critical {threshold:.2f} at alpha {alpha}",
    )


# -- IS unbiasedness ----------------------------------------------------------------


def _micro_lattice() -> Lattice:
    """Fixed 4x4x4 micro-system: two distant vacancies, three Cu atoms
    placed so every observable has support near each vacancy."""
    lat = Lattice(4, 4, 4)
    v1 = lat.site_id(0, 0, 0, 0)
    v2 = lat.site_id(0, 2, 2, 2)
    cu = [int(lat.nbr1[v1, 0]), int(lat.nbr1[v2, 3]), lat.site_id(1, 1, 0, 0)]
    lat.occupancy[[v1, v2]] = VACANCY
    lat.occupancy[cu] = CU
    lat.vacancy_index = sorted((v1, v2))
    lat.cu_index = sorted(set(cu))
    return lat


def check_is_unbiasedness(reps: int = 20, samples: int = 100_000,
                          rel_tol: float = 0.02, min_pass: int = 18,
                          n_policies: int = 5, seed: int = 13) -> CheckResult:
    """Self-normalized estimates from policy-tilted draws versus exact
    per-event enumeration, three observables per repetition."""
    pot, base = load_default_potential()
    params = RateParams(gamma0=base.gamma0, ea0_fe=base.ea0_fe, ea0_cu=base.ea0_cu,
                        temperature=663.0)
    lat = _micro_lattice()
    sim = ClassicalKMC(lat, pot, params, seed=seed)
    rates = sim.rates.ravel()
    valid = rates > 0.0
    z = rates.sum()
    p = rates / z

    de = sim.de.ravel()
    species = np.zeros(rates.size)
    for w, v in enumerate(sim.vac_sites):
        for d in range(8):
            t = int(lat.nbr1[int(v), d])
            species[w * 8 + d] = 1.0 if lat.occupancy[t] == CU else 0.0
    observables = [np.abs(de), species, p.copy()]
    exact = [float(np.sum(p * f)) for f in observables]

    gen = rng.substream(seed, "is-check")
    policy_gens = [rng.substream(seed, f"is-policy-{k}") for k in range(n_policies)]
    passes = 0
    worst = 0.0
    for rep in range(reps):
        pg = policy_gens[rep % n_policies]
        # unit-scale logits keep 1/pi weights bounded near e^2 so the
        # self-normalized estimator's noise sits well inside the tolerance
        logits = pg.normal(scale=1.0, size=rates.size)
        ex = np.where(valid, np.exp(logits - logits[valid].max()), 0.0)
        pi = ex / ex.sum()
        q = pi * rates
        q = q / q.sum()

        idx = gen.choice(rates.size, size=samples, p=q)
        inv_pi = 1.0 / pi[idx]
        norm = inv_pi.sum()
        ok = True
        for f, ref in zip(observables, exact):
            est = float(np.sum(f[idx] * inv_pi) / norm)
            rel = abs(est - ref) / abs(ref)
            worst = max(worst, rel)
            ok = ok and rel <= rel_tol
        passes += ok

    return CheckResult(
        "is-unbiasedness",
        passes >= min_pass,
        {
            "passes": int(passes),
            "reps": reps,
            "required": min_pass,
            "worst_rel_error": worst,
            "rel_tol": rel_tol,
            "samples": samples,
            "events": int(valid.sum()),
        },
        f"{passes}/{reps} repetitions within {rel_tol:.0%}",
    )


# -- gradient checks -----------------------------------------------------------------


def _fd(f, x, idx, h=1e-6):
    out = np.empty(len(idx))
    for k, i in enumerate(idx):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        out[k] = (f(xp) - f(xm)) / (2.0 * h)
    return out


def _rel_err(analytic, numeric):
    return float(
        np.max(np.abs(analytic - numeric) / np.maximum.reduce(
            [np.abs(analytic), np.abs(numeric), np.full_like(numeric, 1e-6)]
        ))
    )


def check_gradients(probes: int = 100, tol: float = 1e-4, seed: int = 17) -> CheckResult:
    gen = np.random.default_rng(seed)
    sub = {}

    # actor and critic parameter gradients of a random linear functional
    for label, sizes, width in (("actor", (42, 32, 8), 42), ("critic", (93, 32, 1), 93)):
        net = MLP(sizes, gen)
        X = gen.normal(size=(6, width))
        G = gen.normal(size=(6, sizes[-1]))

        def loss_of(theta, net=net, X=X, G=G):
            net.set_flat(theta)
            return float(np.sum(net.forward(X)[0] * G))

        _, cache = net.forward(X)
        grads, _ = net.backward(cache, G)
        analytic = MLP.flat_grads(grads)
        theta0 = net.get_flat()
        idx = gen.choice(theta0.size, size=min(probes, theta0.size), replace=False)
        sub[label] = _rel_err(analytic[idx], _fd(loss_of, theta0, idx))

    # masked softmax: log-probability and entropy gradients in logit space
    M = 16
    mask = np.zeros(M, dtype=bool)
    mask[gen.choice(M, size=10, replace=False)] = True
    z0 = gen.normal(size=M)
    action = int(gen.choice(np.flatnonzero(mask)))

    def logp_of(z):
        _, lp = masked_softmax_batch(z[None, :], mask[None, :])
        return float(lp[0, action])

    probs, _ = masked_softmax_batch(z0[None, :], mask[None, :])
    g_lp = grad_log_prob_logits(probs[0], action)
    idx = np.flatnonzero(mask)
    errs = [_rel_err(g_lp[idx], _fd(logp_of, z0, idx))]

    def ent_of(z):
        pr, _ = masked_softmax_batch(z[None, :], mask[None, :])
        return float(entropy_and_grad(pr[0])[0])

    _, g_h = entropy_and_grad(probs[0])
    errs.append(_rel_err(g_h[idx], _fd(ent_of, z0, idx)))
    sub["masked_softmax"] = max(errs)

    # full PPO loss over both networks' parameters
    actor = MLP((42, 16, 8), gen)
    critic = MLP((93, 16, 1), gen)
    cfg = PPOConfig(episodes=1)
    B, N = 6, 2
    Mb = N * 8
    obs = gen.uniform(size=(B, N, 42))
    bmask = gen.uniform(size=(B, Mb)) < 0.6
    for i in range(B):
        while bmask[i].sum() < 2:
            bmask[i, gen.integers(Mb)] = True
    log_gamma = np.where(bmask, gen.normal(size=(B, Mb)), 0.0)
    act = np.array([gen.choice(np.flatnonzero(bmask[i])) for i in range(B)])
    logits, _ = actor.forward(obs.reshape(B * N, 42))
    _, log_q = masked_softmax_batch(logits.reshape(B, Mb) + log_gamma, bmask)
    batch = {
        "obs": obs,
        "mask": bmask,
        "log_gamma": log_gamma,
        "action": act,
        "log_q_old": log_q[np.arange(B), act] + gen.uniform(-0.5, 0.5, size=B),
        "adv": gen.normal(size=B),
        "returns": gen.normal(size=B),
        "features": gen.normal(size=(B, 93)),
    }
    _, ga, gc, _ = ppo_loss_and_grads(actor, critic, batch, cfg)
    analytic = np.concatenate([ga, gc])
    na = actor.n_params
    theta0 = np.concatenate([actor.get_flat(), critic.get_flat()])

    def ppo_of(theta):
        actor.set_flat(theta[:na])
        critic.set_flat(theta[na:])
        return ppo_loss_and_grads(actor, critic, batch, cfg)[0]

    idx = gen.choice(theta0.size, size=probes, replace=False)
    sub["ppo_loss"] = _rel_err(analytic[idx], _fd(ppo_of, theta0, idx))

    worst = max(sub.values())
    return CheckResult(
        "gradients",
        worst < tol,
        {**{f"rel_err_{k}": v for k, v in sub.items()}, "tol": tol, "probes": probes},
        f"worst relative error {worst:.3e} (tolerance {tol:.0e})",
    )


# -- GAE oracle ------------------------------------------------------------------------


def gae_direct(rewards, values, bootstrap, gamma, lam):
    """Quadratic-time definition: A_t = sum_l (gamma*lam)^l delta_{t+l}."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    T = r.size
    v_ext = np.append(v, bootstrap)
    delta = r + gamma * v_ext[1:] - v
    weights = (gamma * lam) ** np.arange(T)
    adv = np.array([np.dot(delta[t:], weights[: T - t]) for t in range(T)])
    return adv, adv + v


def check_gae(T: int = 2048, random_pairs: int = 10, tol: float = 1e-12,
              seed: int = 19) -> CheckResult:
    gen = np.random.default_rng(seed)
    pairs = [(0.99, 0.95)] + [tuple(gen.uniform(0.0, 1.0, size=2)) for _ in range(random_pairs)]
    worst = 0.0
    for gamma, lam in pairs:
        r = gen.normal(size=T)
        v = gen.normal(size=T)
        boot = float(gen.normal())
        adv, ret = compute_gae(r, v, boot, gamma, lam)
        adv_ref, ret_ref = gae_direct(r, v, boot, gamma, lam)
        for a, b in ((adv, adv_ref), (ret, ret_ref)):
            err = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))
            worst = max(worst, err)
    return CheckResult(
        "gae",
        worst <= tol,
        {"worst_rel_err": worst, "tol": tol, "horizon": T, "pairs": len(pairs)},
        f"worst deviation {worst:.3e} over {len(pairs)} (gamma, lambda) pairs",
    )


# -- suite registry ----------------------------------------------------------------------


SUITES = {
    "bond-count": check_bond_count,
    "boltzmann": check_boltzmann,
    "is-unbiasedness": check_is_unbiasedness,
    "gradients": check_gradients,
    "gae": check_gae,
}


def run_suite(name: str | None = None) -> list[CheckResult]:
    """Run one named suite, or all of them for name None or "all"."""
    if name in (None, "all"):
        return [fn() for fn in SUITES.values()]
    if name not in SUITES:
        known = ", ".join(sorted(SUITES))
        raise ConfigError(f"unknown verification suite {name!r}; available: {known}")
    return [SUITES[name]()]
