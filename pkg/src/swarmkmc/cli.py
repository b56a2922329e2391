"""Command-line front end.

Four subcommands: `run` simulates one trajectory (classical or
policy-reweighted), `train` runs the PPO loop, `verify` executes the
numerical check suites, `bench` runs the paired classical-vs-policy
comparison. Exit codes: 0 success, 1 verification failure, 2 bad
configuration, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from swarmkmc import __version__, rng
from swarmkmc.config import (
    load_json,
    resolve_bench_config,
    resolve_run_config,
    resolve_train_config,
    write_resolved,
)
from swarmkmc.energetics import (
    PairPotential,
    RateParams,
    load_default_potential,
    load_potential,
    total_energy,
)
from swarmkmc.errors import ConfigError, SimulationError, SwarmKMCError, VerificationError
from swarmkmc.kinetics import TrajectoryCSV, run_classical
from swarmkmc.lattice import Lattice
from swarmkmc.metrics import (
    BenchmarkReport,
    ZetaSink,
    advancement_factor,
    assert_energy_closure,
    bond_delta_after_hop,
    effective_transition_ratio,
    equilibrium_bonds,
    speedup_ratio,
    targets_from_directions,
    transition_per_step_energy,
    write_zeta_csv,
)
from swarmkmc.reweight import ISAuditCSV, SwarmSampler
from swarmkmc.training import PPOConfig, load_policy, train
from swarmkmc.verify import run_suite

log = logging.getLogger(__name__)

ENERGY_HEADER = "step,time_s,dE_eV,cumulative_eV"


def _apply_thread_cap() -> None:
    """Honor SWARMKMC_THREADS as an upper bound on numba worker threads."""
    val = os.environ.get("SWARMKMC_THREADS")
    if not val:
        return
    try:
        n = int(val)
    except ValueError:
        raise ConfigError(f"SWARMKMC_THREADS must be an integer, got {val!r}")
    if n < 1:
        raise ConfigError(f"SWARMKMC_THREADS must be at least 1, got {n}")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _potential_for(resolved: dict) -> tuple[PairPotential, RateParams]:
    path = resolved.get("potential")
    if path is None:
        pot, params = load_default_potential()
    else:
        if not Path(path).is_file():
            raise ConfigError(f"potential file not found: {path}")
        pot, params = load_potential(path)
    t = resolved.get("temperature_K")
    if t is not None:
        params = dataclasses.replace(params, temperature=float(t))
    return pot, params


def _anneal_seed(seed: int) -> int:
    # keep the reference anneal off the main run's select/residence streams
    return int(rng.substream(seed, "b-eq-anneal").integers(0, 2 ** 62))


# -- output sinks for the run command -----------------------------------------


class _EnergyCSV:
    """Streaming energy log at a fixed step cadence (chunked interface)."""

    def __init__(self, path, every: int):
        self.every = every
        self.total = 0.0
        self._fh = open(path, "w")
        self._fh.write(ENERGY_HEADER + "\n")

    def on_chunk(self, start_step: int, cols: dict) -> None:
        de = cols["dE_eV"]
        cum = self.total + np.cumsum(de)
        self.total = float(cum[-1])
        steps = np.arange(start_step, start_step + de.shape[0])
        keep = (steps + 1) % self.every == 0
        for s, t, d, c in zip(steps[keep], cols["time_s"][keep], de[keep], cum[keep]):
            self._fh.write(f"{s},{t:.12e},{d:.12e},{c:.12e}\n")

    def close(self) -> None:
        self._fh.close()


class _SnapshotXYZ:
    """Writes an XYZ frame whenever a chunk boundary lands on the cadence.

    The caller aligns the chunk size so every cadence point is a boundary;
    the occupancy array is only current between chunks.
    """

    def __init__(self, path, every: int, lat: Lattice):
        self.every = every
        self.lat = lat
        self._fh = open(path, "w")

    def on_chunk(self, start_step: int, cols: dict) -> None:
        last = start_step + cols["time_s"].shape[0] - 1
        if (last + 1) % self.every == 0:
            self.lat.write_xyz(self._fh, last, float(cols["time_s"][-1]))

    def close(self) -> None:
        self._fh.close()


def _snapshot_chunk(chunk: int, snapshot_every: int) -> int:
    """Largest chunk size <= chunk whose boundaries cover the snapshot cadence."""
    eff = min(chunk, snapshot_every)
    if snapshot_every % eff:
        eff = math.gcd(chunk, snapshot_every)
    return eff


class _SwarmTrajectory:
    """Adapts per-step policy output to the classical trajectory format.

    The gamma_tot column carries the physical total rate Z, so the file
    is directly comparable with classical runs.
    """

    def __init__(self, path):
        self._csv = TrajectoryCSV(path)

    def on_swarm_step(self, out, log_w_cum: float) -> None:
        self._csv.on_step(out.step, out.time_s, out.vacancy_site, out.direction,
                          out.de, out.Z, out.dt)

    def close(self) -> None:
        self._csv.close()


class _SwarmEnergy:
    def __init__(self, path, every: int):
        self.every = every
        self.total = 0.0
        self._fh = open(path, "w")
        self._fh.write(ENERGY_HEADER + "\n")

    def on_swarm_step(self, out, log_w_cum: float) -> None:
        self.total += out.de
        if (out.step + 1) % self.every == 0:
            self._fh.write(f"{out.step},{out.time_s:.12e},{out.de:.12e},{self.total:.12e}\n")

    def close(self) -> None:
        self._fh.close()


class _SwarmZeta:
    """Incrementally tracked Cu-Cu bond series for a policy-driven run."""

    def __init__(self, lat: Lattice, b_initial: int, every: int):
        self.lat = lat
        self.b = b_initial
        self.every = every
        self.steps: list[int] = []
        self.times: list[float] = []
        self.bonds: list[int] = []

    def on_swarm_step(self, out, log_w_cum: float) -> None:
        self.b += bond_delta_after_hop(self.lat, out.vacancy_site, out.target_site)
        if (out.step + 1) % self.every == 0:
            self.steps.append(out.step)
            self.times.append(out.time_s)
            self.bonds.append(self.b)

    def arrays(self, total_steps: int, final_time: float):
        steps = list(self.steps)
        times = list(self.times)
        bonds = list(self.bonds)
        if not steps or steps[-1] != total_steps - 1:
            steps.append(total_steps - 1)
            times.append(final_time)
            bonds.append(self.b)
        return (np.asarray(steps, dtype=np.int64),
                np.asarray(times, dtype=np.float64),
                np.asarray(bonds, dtype=np.int64))


class _SwarmSnapshot:
    def __init__(self, path, every: int, lat: Lattice):
        self.every = every
        self.lat = lat
        self._fh = open(path, "w")

    def on_swarm_step(self, out, log_w_cum: float) -> None:
        if (out.step + 1) % self.every == 0:
            self.lat.write_xyz(self._fh, out.step, out.time_s)

    def close(self) -> None:
        self._fh.close()


# -- run -----------------------------------------------------------------------


def _run_classical_leg(lat, pot, params, resolved, out_dir, b0, b_eq):
    steps = resolved["steps"]
    chunk = resolved["chunk"]
    if resolved["snapshot_every"] > 0:
        chunk = _snapshot_chunk(chunk, resolved["snapshot_every"])

    sinks: list = [TrajectoryCSV(out_dir / "trajectory.csv"),
                   _EnergyCSV(out_dir / "energy.csv", resolved["energy_every"])]
    zsink = None
    if resolved["zeta_sample_every"] > 0:
        zsink = ZetaSink(resolved["zeta_sample_every"])
        sinks.append(zsink)
    if resolved["snapshot_every"] > 0:
        sinks.append(_SnapshotXYZ(out_dir / "snapshots.xyz", resolved["snapshot_every"], lat))

    try:
        result = run_classical(lat, pot, params, steps, resolved["seed"], sinks=sinks,
                               track_bonds=zsink is not None,
                               exact_every=resolved["exact_every"], chunk=chunk)
    finally:
        for s in sinks:
            getattr(s, "close", lambda: None)()

    if zsink is not None:
        steps_arr, times, bonds = zsink.arrays()
        if steps_arr.size == 0 or steps_arr[-1] != steps - 1:
            steps_arr = np.append(steps_arr, steps - 1)
            times = np.append(times, result.time_s)
            bonds = np.append(bonds, result.b_final)
        series = advancement_factor(times, bonds, float(b0), float(b_eq))
        write_zeta_csv(out_dir / "zeta.csv", steps_arr, times, bonds, series.zeta)
    return result.time_s, result.energy_delta, result.steps


def _run_swarm_leg(lat, pot, params, resolved, out_dir, b0, b_eq):
    ckpt = resolved["checkpoint"]
    if not Path(ckpt).is_file():
        raise ConfigError(f"checkpoint file not found: {ckpt}")
    actor = load_policy(ckpt)
    sampler = SwarmSampler(lat, pot, params, actor, seed=resolved["seed"],
                           exact_every=resolved["exact_every"])

    sinks: list = [_SwarmTrajectory(out_dir / "trajectory.csv"),
                   ISAuditCSV(out_dir / "is_audit.csv"),
                   _SwarmEnergy(out_dir / "energy.csv", resolved["energy_every"])]
    zsink = None
    if resolved["zeta_sample_every"] > 0:
        zsink = _SwarmZeta(lat, b0, resolved["zeta_sample_every"])
        sinks.append(zsink)
    if resolved["snapshot_every"] > 0:
        sinks.append(_SwarmSnapshot(out_dir / "snapshots.xyz", resolved["snapshot_every"], lat))

    try:
        sampler.run(resolved["steps"], sinks=sinks)
    finally:
        for s in sinks:
            getattr(s, "close", lambda: None)()

    sim = sampler.sim
    if zsink is not None:
        steps_arr, times, bonds = zsink.arrays(resolved["steps"], sim.time)
        series = advancement_factor(times, bonds, float(b0), float(b_eq))
        write_zeta_csv(out_dir / "zeta.csv", steps_arr, times, bonds, series.zeta)
    return sim.time, sim.energy_delta, sim.step_count


def cmd_run(args) -> int:
    resolved = resolve_run_config(load_json(args.config), args.seed, args.out)
    pot, params = _potential_for(resolved)
    out_dir = Path(resolved["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(out_dir, resolved)

    dims = resolved["lattice"]
    lat = Lattice.build(dims["nx"], dims["ny"], dims["nz"], resolved["cu_fraction"],
                        resolved["vacancy_count"], seed=resolved["seed"])
    e0 = total_energy(lat, pot)
    b0 = lat.cu_cu_first_shell_bonds()

    b_eq = None
    if resolved["zeta_sample_every"] > 0:
        anneal = resolved["zeta_anneal_multiple"] * resolved["steps"]
        log.info("reference anneal for the equilibrium bond count: %d steps", anneal)
        b_eq = equilibrium_bonds(lat, pot, params, anneal, seed=_anneal_seed(resolved["seed"]),
                                 exact_every=resolved["exact_every"])

    if resolved["sampler"] == "classical":
        time_s, d_e, n_steps = _run_classical_leg(lat, pot, params, resolved, out_dir, b0, b_eq)
    else:
        time_s, d_e, n_steps = _run_swarm_leg(lat, pot, params, resolved, out_dir, b0, b_eq)

    assert_energy_closure(d_e, e0, total_energy(lat, pot), context="end of run")
    print(f"{resolved['sampler']} run: {n_steps} steps, time {time_s:.6e} s, "
          f"dE {d_e:+.6f} eV -> {out_dir}")
    return 0


# -- train -----------------------------------------------------------------------


def _resolve_resume(value: str, out_dir: Path) -> Path:
    if value == "latest":
        manifest = out_dir / "latest.json"
        if not manifest.is_file():
            raise ConfigError(f"no latest.json manifest in {out_dir}, nothing to resume")
        name = json.loads(manifest.read_text())["checkpoint"]
        path = out_dir / name
    else:
        path = Path(value)
    if not path.is_file():
        raise ConfigError(f"checkpoint file not found: {path}")
    return path


def cmd_train(args) -> int:
    resolved = resolve_train_config(load_json(args.config), args.seed, args.out)
    pot, params = _potential_for(resolved)
    cfg = PPOConfig(**resolved["ppo"])
    resolved["ppo"] = dataclasses.asdict(cfg)

    out_dir = Path(resolved["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(out_dir, resolved)

    resume = _resolve_resume(args.resume, out_dir) if args.resume is not None else None

    def progress(row):
        if row["episode"] == 0 or (row["episode"] + 1) % 50 == 0:
            log.info("episode %d: mean reward %.4f, policy loss %.4f, entropy %.3f",
                     row["episode"], row["mean_reward"], row["policy_loss"], row["entropy"])

    res = train(cfg, pot, params, resolved["seed"], out_dir, resume=resume, progress=progress)
    if res["history"]:
        print(f"training complete: {len(res['history'])} episodes -> {res['checkpoint']}")
    else:
        print(f"nothing to train: checkpoint already at episode {cfg.episodes}")
    return 0


# -- verify ------------------------------------------------------------------------


def cmd_verify(args) -> int:
    results = run_suite(args.suite)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name:<16} {r.detail}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = {"package_version": __version__,
                  "results": [r.as_dict() for r in results]}
        (out_dir / "verify_report.json").write_text(json.dumps(report, indent=1) + "\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationError(f"{len(failed)} of {len(results)} checks failed: "
                                + ", ".join(failed))
    return 0


# -- bench -------------------------------------------------------------------------


class _BenchCollector:
    """Accumulates per-hop columns across run_classical segments."""

    def __init__(self):
        self.vac: list[np.ndarray] = []
        self.dirs: list[np.ndarray] = []
        self.de: list[np.ndarray] = []

    def on_chunk(self, start_step: int, cols: dict) -> None:
        # buffers are reused between chunks, copy what we keep
        self.vac.append(cols["vacancy_site"].copy())
        self.dirs.append(cols["direction"].copy())
        self.de.append(cols["dE_eV"].copy())

    def concat(self):
        return (np.concatenate(self.vac), np.concatenate(self.dirs),
                np.concatenate(self.de))


def _etr_or_one(vac: np.ndarray, tgt: np.ndarray) -> float:
    if vac.size < 2:
        log.warning("fewer than two hops, reversal ratio defaults to 1")
        return 1.0
    return effective_transition_ratio(vac, tgt)


def cmd_bench(args) -> int:
    resolved = resolve_bench_config(load_json(args.config), args.seed, args.out)
    pot, params = _potential_for(resolved)
    ckpt = resolved["checkpoint"]
    if not Path(ckpt).is_file():
        raise ConfigError(f"checkpoint file not found: {ckpt}")
    actor = load_policy(ckpt)
    out_dir = Path(resolved["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved(out_dir, resolved)

    dims = resolved["lattice"]
    lat0 = Lattice.build(dims["nx"], dims["ny"], dims["nz"], resolved["cu_fraction"],
                         resolved["vacancy_count"], seed=resolved["seed"])
    b0 = lat0.cu_cu_first_shell_bonds()
    log.info("reference anneal: %d steps", resolved["anneal_steps"])
    b_eq = equilibrium_bonds(lat0, pot, params, resolved["anneal_steps"],
                             seed=_anneal_seed(resolved["seed"]),
                             exact_every=resolved["exact_every"])
    if b_eq <= b0:
        raise SimulationError(
            f"annealed bond count {b_eq:.2f} does not exceed the initial {b0}; "
            "advancement toward equilibrium is not measurable here")
    target = resolved["target_zeta"]
    span = b_eq - b0

    # policy leg first, stepped one hop at a time so the crossing step is exact
    lat_s = lat0.copy()
    sampler = SwarmSampler(lat_s, pot, params, actor, seed=resolved["seed"],
                           exact_every=resolved["exact_every"])
    vac_s: list[int] = []
    tgt_s: list[int] = []
    de_s: list[float] = []
    b = b0
    swarm_steps = 0
    for step in range(resolved["swarm_step_cap"]):
        out = sampler.step()
        b += bond_delta_after_hop(lat_s, out.vacancy_site, out.target_site)
        vac_s.append(out.vacancy_site)
        tgt_s.append(out.target_site)
        de_s.append(out.de)
        if (b - b0) / span >= target:
            swarm_steps = step + 1
            break
    if not swarm_steps:
        raise SimulationError(
            f"policy run stalled at zeta={(b - b0) / span:.3f} after "
            f"{resolved['swarm_step_cap']} steps, short of the {target} target")
    log.info("policy leg reached zeta=%.2f in %d steps", target, swarm_steps)

    # classical leg from the identical initial state and seed (paired draws)
    lat_c = lat0.copy()
    streams = rng.StreamSet(resolved["seed"])
    coll = _BenchCollector()

    def classical_runner(n: int) -> float:
        res = run_classical(lat_c, pot, params, n, streams, sinks=(coll,),
                            track_bonds=True, exact_every=resolved["exact_every"],
                            chunk=resolved["poll_chunk"])
        return (res.b_final - b0) / span

    sp = speedup_ratio(target, swarm_steps, classical_runner,
                       resolved["classical_step_cap"], chunk=resolved["poll_chunk"])

    vac_c, dir_c, de_c = coll.concat()
    tgt_c = targets_from_directions(lat_c, vac_c, dir_c)
    vac_sw = np.asarray(vac_s, dtype=np.int64)
    tgt_sw = np.asarray(tgt_s, dtype=np.int64)

    report = BenchmarkReport(
        speedup_ratio=sp.ratio,
        tpe_classical=transition_per_step_energy(de_c),
        tpe_swarm=transition_per_step_energy(np.asarray(de_s)),
        etr_classical=_etr_or_one(vac_c, tgt_c),
        etr_swarm=_etr_or_one(vac_sw, tgt_sw),
        classical_steps=sp.classical_steps,
        swarm_steps=swarm_steps,
        target_zeta=target,
        lower_bound=sp.lower_bound,
    )
    report.write_json(out_dir / "report.json")
    bound = " (lower bound, classical capped)" if sp.lower_bound else ""
    print(f"speedup {sp.ratio:.2f}{bound}: classical {sp.classical_steps} steps vs "
          f"policy {swarm_steps} steps to zeta={target} -> {out_dir}")
    return 0


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmkmc",
        description="Vacancy-mediated Cu precipitation in bcc Fe-Cu: classical and "
                    "policy-reweighted kinetic Monte Carlo.")
    parser.add_argument("--version", action="version", version=f"swarmkmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{run,train,verify,bench}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress logging")

    p = sub.add_parser("run", parents=[common], help="simulate one trajectory")
    p.add_argument("--config", required=True, help="run configuration (JSON)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", parents=[common], help="train the hop policy with PPO")
    p.add_argument("--config", required=True, help="training configuration (JSON)")
    p.add_argument("--resume", nargs="?", const="latest", default=None, metavar="CKPT",
                   help="resume from a checkpoint file, or from latest.json when bare")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", parents=[common], help="run numerical verification suites")
    p.add_argument("suite", nargs="?", default="all",
                   help='one suite name, or "all" (default)')
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", parents=[common],
                       help="paired classical-vs-policy benchmark")
    p.add_argument("--config", required=True, help="benchmark configuration (JSON)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        _apply_thread_cap()
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 1
    except SwarmKMCError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        log.exception("unexpected failure")
        return 3


if __name__ == "__main__":
    sys.exit(main())
