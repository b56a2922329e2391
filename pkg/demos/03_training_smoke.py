"""
A short PPO training run
========================

Trains the shared-weight actor and the configuration critic for a few
episodes on a small box, just long enough to see the machinery move:
reward per episode, losses, entropy, and a resumable checkpoint.

Full production settings live in PPOConfig defaults (5000 episodes,
2048-step episodes on 10x10x10); this demo cuts every budget knob.
"""

import tempfile
from pathlib import Path

from swarmkmc.energetics import load_default_potential
from swarmkmc.training import PPOConfig, train

pot, params = load_default_potential()

cfg = PPOConfig(
    episodes=8,
    episode_length=128,
    minibatch=64,
    epochs_per_update=4,
    train_lattice=(6, 6, 6),
    cu_fraction=0.05,
    vacancy_count=1,
    checkpoint_every=4,
)

out = Path(tempfile.mkdtemp(prefix="swarm_train_demo_"))
print(f"training 8 episodes -> {out}\n")


def progress(row):
    print(f"  episode {row['episode']:2d}  reward {row['mean_reward']:+.5f}  "
          f"entropy {row['entropy']:.3f}  {row['wall_ms']:.0f} ms")


res = train(cfg, pot, params, seed=21, out_dir=out, progress=progress)

rewards = [r["mean_reward"] for r in res["history"]]
print(f"\nmean reward first half {sum(rewards[:4]) / 4:+.5f}, "
      f"second half {sum(rewards[4:]) / 4:+.5f}")
print(f"checkpoint: {res['checkpoint']}")
print(f"training log: {out / 'training.csv'}")
