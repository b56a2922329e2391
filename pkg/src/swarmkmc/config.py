"""JSON run/train/bench configurations with schema validation.

Every command writes its fully resolved configuration (defaults applied,
overrides folded in, package version stamped) next to its outputs, so an
output directory is always replayable from what it contains.
"""

from __future__ import annotations

import json
from pathlib import Path

from swarmkmc.errors import ConfigError

_LATTICE_SCHEMA = {
    "type": "object",
    "properties": {
        "nx": {"type": "integer", "minimum": 2},
        "ny": {"type": "integer", "minimum": 2},
        "nz": {"type": "integer", "minimum": 2},
    },
    "required": ["nx", "ny", "nz"],
    "additionalProperties": False,
}

RUN_SCHEMA = {
    "type": "object",
    "properties": {
        "lattice": _LATTICE_SCHEMA,
        "cu_fraction": {"type": "number", "minimum": 0.0, "exclusiveMaximum": 1.0},
        "vacancy_count": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "sampler": {"enum": ["classical", "swarm"]},
        "checkpoint": {"type": "string"},
        "potential": {"type": "string"},
        "temperature_K": {"type": "number", "exclusiveMinimum": 0.0},
        "output_dir": {"type": "string"},
        "snapshot_every": {"type": "integer", "minimum": 0},
        "energy_every": {"type": "integer", "minimum": 1},
        "zeta_sample_every": {"type": "integer", "minimum": 0},
        "zeta_anneal_multiple": {"type": "integer", "minimum": 1},
        "exact_every": {"type": "integer", "minimum": 0},
        "chunk": {"type": "integer", "minimum": 1},
    },
    "required": ["lattice", "cu_fraction", "vacancy_count", "steps", "seed", "sampler"],
    "additionalProperties": False,
}

RUN_DEFAULTS = {
    "potential": None,
    "temperature_K": None,
    "checkpoint": None,
    "output_dir": "runs/run",
    "snapshot_every": 0,
    "energy_every": 1,
    "zeta_sample_every": 0,
    "zeta_anneal_multiple": 10,
    "exact_every": 10_000,
    "chunk": 65_536,
}

_PPO_FIELDS = {
    "gamma": {"type": "number"},
    "gae_lambda": {"type": "number"},
    "entropy_coef": {"type": "number"},
    "value_coef": {"type": "number"},
    "learning_rate": {"type": "number"},
    "minibatch": {"type": "integer"},
    "epochs_per_update": {"type": "integer"},
    "clip": {"type": "number"},
    "grad_clip": {"type": "number"},
    "episode_length": {"type": "integer"},
    "train_lattice": {
        "type": "array",
        "items": {"type": "integer", "minimum": 2},
        "minItems": 3,
        "maxItems": 3,
    },
    "cu_fraction": {"type": "number"},
    "vacancy_count": {"type": "integer"},
    "episodes": {"type": "integer"},
    "checkpoint_every": {"type": "integer", "minimum": 1},
    "exact_every": {"type": "integer", "minimum": 0},
}

TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "potential": {"type": "string"},
        "temperature_K": {"type": "number", "exclusiveMinimum": 0.0},
        "ppo": {
            "type": "object",
            "properties": _PPO_FIELDS,
            "additionalProperties": False,
        },
    },
    "required": ["seed"],
    "additionalProperties": False,
}

TRAIN_DEFAULTS = {
    "output_dir": "runs/train",
    "potential": None,
    "temperature_K": None,
    "ppo": {},
}

BENCH_SCHEMA = {
    "type": "object",
    "properties": {
        "lattice": _LATTICE_SCHEMA,
        "cu_fraction": {"type": "number", "minimum": 0.0, "exclusiveMaximum": 1.0},
        "vacancy_count": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "checkpoint": {"type": "string"},
        "potential": {"type": "string"},
        "temperature_K": {"type": "number", "exclusiveMinimum": 0.0},
        "output_dir": {"type": "string"},
        "target_zeta": {"type": "number", "exclusiveMinimum": 0.0, "maximum": 1.0},
        "swarm_step_cap": {"type": "integer", "minimum": 1},
        "classical_step_cap": {"type": "integer", "minimum": 1},
        "anneal_steps": {"type": "integer", "minimum": 1},
        "poll_chunk": {"type": "integer", "minimum": 1},
        "exact_every": {"type": "integer", "minimum": 0},
    },
    "required": ["lattice", "cu_fraction", "vacancy_count", "seed", "checkpoint",
                 "swarm_step_cap", "classical_step_cap"],
    "additionalProperties": False,
}

BENCH_DEFAULTS = {
    "potential": None,
    "temperature_K": None,
    "output_dir": "runs/bench",
    "target_zeta": 0.5,
    "anneal_steps": None,  # falls back to 10 x classical_step_cap
    "poll_chunk": 1024,
    "exact_every": 10_000,
}


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def schema_check(doc: dict, schema: dict, what: str) -> None:
    """Collect every schema violation into one ConfigError."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            where = "/".join(str(p) for p in err.absolute_path) or "(top level)"
            lines.append(f"  {where}: {err.message}")
        raise ConfigError(f"invalid {what}:\n" + "\n".join(lines))


def _resolved(doc: dict, schema: dict, defaults: dict, what: str,
              seed_override=None, out_override=None) -> dict:
    schema_check(doc, schema, what)
    out = dict(defaults)
    out.update(doc)
    if seed_override is not None:
        out["seed"] = int(seed_override)
    if out_override is not None:
        out["output_dir"] = str(out_override)
    return out


def resolve_run_config(doc: dict, seed_override=None, out_override=None) -> dict:
    out = _resolved(doc, RUN_SCHEMA, RUN_DEFAULTS, "run config", seed_override, out_override)
    if out["sampler"] == "swarm" and not out["checkpoint"]:
        raise ConfigError("run config: sampler \"swarm\" requires a checkpoint path")
    return out


def resolve_train_config(doc: dict, seed_override=None, out_override=None) -> dict:
    out = _resolved(doc, TRAIN_SCHEMA, TRAIN_DEFAULTS, "train config", seed_override, out_override)
    ppo = dict(TRAIN_DEFAULTS["ppo"])
    ppo.update(doc.get("ppo", {}))
    out["ppo"] = ppo
    return out


def resolve_bench_config(doc: dict, seed_override=None, out_override=None) -> dict:
    out = _resolved(doc, BENCH_SCHEMA, BENCH_DEFAULTS, "bench config", seed_override, out_override)
    if out["anneal_steps"] is None:
        out["anneal_steps"] = 10 * out["classical_step_cap"]
    return out


def write_resolved(out_dir, resolved: dict) -> None:
    from swarmkmc import __version__

    doc = dict(resolved)
    doc["package_version"] = __version__
    path = Path(out_dir) / "resolved_config.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
