"""Versioned checkpoint container shared by networks and buffers.

A checkpoint is a torch-serialized dict carrying named arrays plus a shape
manifest; loading validates every array against the manifest and rejects
mismatches before anything is restored.
"""

from __future__ import annotations

import numpy as np
import torch

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised on malformed containers or shape mismatches."""


def save_container(path, kind: str, arrays: dict, extra: dict | None = None
                   ) -> None:
    manifest = {}
    for name, value in arrays.items():
        if isinstance(value, torch.Tensor):
            manifest[name] = tuple(value.shape)
        elif isinstance(value, np.ndarray):
            manifest[name] = tuple(value.shape)
        else:
            raise CheckpointError(f"array '{name}' has unsupported type "
                                  f"{type(value).__name__}")
    torch.save({
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "manifest": manifest,
        "arrays": arrays,
        "extra": extra or {},
    }, path)


def load_container(path, expect_kind: str | None = None) -> tuple[dict, dict]:
    try:
        blob = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as e:
        raise CheckpointError(f"cannot read checkpoint '{path}': {e}") from e
    for key in ("format_version", "kind", "manifest", "arrays"):
        if key not in blob:
            raise CheckpointError(f"checkpoint '{path}' missing '{key}'")
    if blob["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {blob['format_version']}")
    if expect_kind is not None and blob["kind"] != expect_kind:
        raise CheckpointError(
            f"expected checkpoint kind '{expect_kind}', got '{blob['kind']}'")
    for name, shape in blob["manifest"].items():
        if name not in blob["arrays"]:
            raise CheckpointError(f"manifest entry '{name}' has no array")
        got = tuple(blob["arrays"][name].shape)
        if got != tuple(shape):
            raise CheckpointError(
                f"array '{name}' shape {got} does not match manifest {tuple(shape)}")
    return blob["arrays"], blob["extra"]


def module_arrays(prefix: str, module: torch.nn.Module) -> dict:
    return {f"{prefix}.{name}": tensor.detach().clone()
            for name, tensor in module.state_dict().items()}


def load_module_arrays(prefix: str, module: torch.nn.Module,
                       arrays: dict) -> None:
    state = {}
    own = module.state_dict()
    for name, tensor in own.items():
        key = f"{prefix}.{name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint missing array '{key}'")
        value = arrays[key]
        if tuple(value.shape) != tuple(tensor.shape):
            raise CheckpointError(
                f"shape mismatch for '{key}': checkpoint {tuple(value.shape)}, "
                f"model {tuple(tensor.shape)}")
        state[name] = value.to(dtype=tensor.dtype)
    module.load_state_dict(state)


def learner_arrays(learner) -> tuple[dict, dict]:
    """Flatten a learner into (arrays, extra) for the container."""
    arrays = {}
    arrays.update(module_arrays("encoder", learner.encoder))
    arrays.update(module_arrays("encoder_target", learner.encoder_target))
    arrays.update(module_arrays("critic1", learner.critic1))
    arrays.update(module_arrays("critic2", learner.critic2))
    arrays.update(module_arrays("critic1_target", learner.critic1_target))
    arrays.update(module_arrays("critic2_target", learner.critic2_target))
    arrays.update(module_arrays("policy", learner.policy))
    arrays["log_alpha"] = learner.log_alpha.detach().clone().reshape(1)
    extra = {
        "update_count": learner.update_count,
        "n_robots": learner.n_robots,
        "optim": {
            "critic": learner.critic_opt.state_dict(),
            "policy": learner.policy_opt.state_dict(),
            "alpha": learner.alpha_opt.state_dict(),
        },
        "rng": {
            "rollout": learner.rollout_rng.get_state(),
            "train": learner.train_rng.get_state(),
        },
    }
    return arrays, extra


def restore_learner(learner, arrays: dict, extra: dict) -> None:
    load_module_arrays("encoder", learner.encoder, arrays)
    load_module_arrays("encoder_target", learner.encoder_target, arrays)
    load_module_arrays("critic1", learner.critic1, arrays)
    load_module_arrays("critic2", learner.critic2, arrays)
    load_module_arrays("critic1_target", learner.critic1_target, arrays)
    load_module_arrays("critic2_target", learner.critic2_target, arrays)
    load_module_arrays("policy", learner.policy, arrays)
    if "log_alpha" not in arrays:
        raise CheckpointError("checkpoint missing array 'log_alpha'")
    with torch.no_grad():
        learner.log_alpha.copy_(arrays["log_alpha"].reshape(()).to(
            learner.log_alpha.dtype))
    learner.update_count = extra.get("update_count", 0)
    optim = extra.get("optim", {})
    if optim:
        learner.critic_opt.load_state_dict(optim["critic"])
        learner.policy_opt.load_state_dict(optim["policy"])
        learner.alpha_opt.load_state_dict(optim["alpha"])
    rng = extra.get("rng", {})
    if rng:
        learner.rollout_rng.set_state(rng["rollout"])
        learner.train_rng.set_state(rng["train"])
