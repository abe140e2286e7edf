"""Experiment orchestration: seeded evaluation batteries and the training loop.

Evaluation: a policy-independent seed list (eval.seed + episode index), a
shared step cap, trajectory logs with per-episode headers, and a metrics
report computed from the persisted log so recomputation is the identity.

Training: off-policy collection with the stochastic policy, stage-switched
rewards (stage II enables the lookahead term and the larger collision
penalty), gradient updates on a fixed cadence, and full-state checkpoints
(networks, optimizers, buffer, RNG streams) for bit-exact resumption.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np
import torch

from . import baselines, checkpoint
from .configs import ExperimentConfig, config_fingerprint
from .env import NavEnv
from .learner import MSA3CLearner
from .replay import EpisodeTrajectory, ReplayBuffer
from .sim.trajlog import TrajectoryWriter
from .sim.world import World


def episode_seed(base: int, episode: int) -> int:
    """Deterministic spread of (run seed, episode index) into one integer."""
    return int(np.random.SeedSequence((base, episode)).generate_state(1)[0])


# -- policies -------------------------------------------------------------------


class RandomPolicy:
    """Uniform actions; reseeded per episode for reproducible batteries."""

    needs_world = False

    def __init__(self, seed: int = 0):
        self.base_seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self, episode_seed_: int) -> None:
        self.rng = np.random.default_rng((self.base_seed, episode_seed_))

    def act(self, world: World, observations) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, size=(world.n_robots, 2))


class OrcaPolicy:
    """Reciprocal-avoidance baseline under perfect in-range sensing."""

    needs_world = True

    def __init__(self, config):
        self.config = config

    def reset(self, episode_seed_: int) -> None:
        pass

    def act(self, world: World, observations) -> np.ndarray:
        return np.array([
            baselines.velocity_to_action(
                baselines.orca_step(i, world, self.config), world.robots[i].v_pref)
            for i in range(world.n_robots)])


class SfPolicy:
    """Social-force robot controller."""

    needs_world = True

    def __init__(self):
        pass

    def reset(self, episode_seed_: int) -> None:
        pass

    def act(self, world: World, observations) -> np.ndarray:
        return np.array([
            baselines.velocity_to_action(
                baselines.sf_robot_step(i, world), world.robots[i].v_pref)
            for i in range(world.n_robots)])


class Msa3cPolicy:
    """Learned policy in decentralized execution (local observations only)."""

    needs_world = False

    def __init__(self, learner: MSA3CLearner, mode: str = "deterministic"):
        self.learner = learner
        self.mode = mode
        self.hiddens = None
        self.prev_positions = None

    def reset(self, episode_seed_: int) -> None:
        self.hiddens = None
        self.prev_positions = None

    def act(self, world: World, observations) -> np.ndarray:
        n = len(observations)
        if self.hiddens is None:
            self.hiddens = [None] * n
            deltas = np.zeros((n, 2))
        else:
            deltas = np.array([obs.ego[:2] - prev for obs, prev
                               in zip(observations, self.prev_positions)])
        actions, self.hiddens = self.learner.act_joint(
            observations, deltas, self.hiddens, mode=self.mode)
        self.prev_positions = [obs.ego[:2].copy() for obs in observations]
        return actions


def build_learner(cfg: ExperimentConfig, checkpoint_path=None) -> MSA3CLearner:
    learner = MSA3CLearner(cfg.model, cfg.train, n_robots=cfg.world.n_robots)
    if checkpoint_path:
        arrays, extra = checkpoint.load_container(checkpoint_path, "msa3c")
        checkpoint.restore_learner(learner, arrays, extra)
    return learner


def make_policy(cfg: ExperimentConfig, checkpoint_path=None,
                learner: MSA3CLearner | None = None, mode: str = "deterministic"):
    name = cfg.policy
    if name == "random":
        return RandomPolicy(cfg.seed)
    if name == "orca":
        return OrcaPolicy(cfg.orca)
    if name == "sf":
        return SfPolicy()
    if name in ("msa3c", "msa3c_pred"):
        if learner is None:
            if checkpoint_path is None:
                raise ValueError(f"policy '{name}' needs a checkpoint")
            learner = build_learner(cfg, checkpoint_path)
        return Msa3cPolicy(learner, mode=mode)
    raise ValueError(f"unknown policy '{name}'")


# -- evaluation -------------------------------------------------------------------


def episode_header(world: World, seed: int, episode: int, cfg: ExperimentConfig
                   ) -> dict:
    return {
        "episode": episode,
        "seed": seed,
        "goals": {str(agent_id): [float(s.goal[0]), float(s.goal[1])]
                  for agent_id, _, s in world.agents()},
        "d_comfort": world.config.d_comfort,
        "max_timesteps": world.config.max_timesteps,
        "scenario_radius": world.config.scenario_radius,
        "config_fingerprint": config_fingerprint(cfg),
    }


def run_episode(env: NavEnv, policy, seed: int, writer=None, episode: int = 0,
                cfg: ExperimentConfig | None = None) -> dict:
    """Roll one seeded episode; returns outcome counters."""
    observations = env.reset(seed)
    policy.reset(seed)
    world = env.world
    if writer is not None:
        writer.begin_episode(episode_header(world, seed, episode, cfg))
        writer.write_step_records(world.step_records())
    team_return = 0.0
    result = None
    while True:
        actions = policy.act(world, observations)
        result = env.step(np.clip(actions, -1.0, 1.0))
        observations = result.observations
        team_return += result.team_reward
        if writer is not None:
            writer.write_step_records(world.step_records())
        if result.done:
            break
    return {
        "seed": seed,
        "steps": world.clock,
        "success": all(result.goal_reached),
        "collision": result.collision,
        "timeout": result.timeout and not all(result.goal_reached),
        "team_return": team_return,
    }


def run_evaluation(cfg: ExperimentConfig, out_dir: str, policy=None,
                   checkpoint_path=None, n_episodes: int | None = None,
                   log_name: str = "trajectories.jsonl"):
    """Seeded battery shared across policies; metrics from the persisted log."""
    from .metrics import compute_metrics

    cfg = cfg.resolved()
    os.makedirs(out_dir, exist_ok=True)
    if policy is None:
        policy = make_policy(cfg, checkpoint_path)
    n = n_episodes or cfg.eval.n_episodes
    env = NavEnv(cfg.world, cfg.reward.for_stage("II", cfg.train.stage2_collision_penalty,
                                                 cfg.reward.use_k_step))
    log_path = os.path.join(out_dir, log_name)
    outcomes = []
    with TrajectoryWriter(log_path) as writer:
        for episode in range(n):
            seed = cfg.eval.seed + episode
            outcomes.append(run_episode(env, policy, seed, writer, episode, cfg))
    report = compute_metrics(log_path, config_fingerprint(cfg))
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out_dir, "episodes.jsonl"), "w") as fh:
        for o in outcomes:
            fh.write(json.dumps(o) + "\n")
    return report, outcomes


# -- training ---------------------------------------------------------------------


class TrainingRun:
    """Stateful training loop with full-state checkpointing."""

    def __init__(self, cfg: ExperimentConfig, out_dir: str,
                 resume_from: str | None = None):
        self.cfg = cfg.resolved()
        if self.cfg.policy not in ("msa3c", "msa3c_pred"):
            raise ValueError("training requires policy msa3c or msa3c_pred")
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        t = self.cfg.train
        self.env = NavEnv(self.cfg.world, self._stage_config(0))
        self.learner = MSA3CLearner(self.cfg.model, t,
                                    n_robots=self.cfg.world.n_robots)
        self.buffer = ReplayBuffer(t.buffer_capacity, t.rollout_len,
                                   self.cfg.model.rnn_hidden_dim, seed=t.seed + 7)
        self.episode = 0
        self.env_steps = 0
        self.metrics_path = os.path.join(out_dir, "training_log.jsonl")
        if resume_from:
            self._restore(resume_from)

    def _stage_config(self, episode: int):
        t = self.cfg.train
        stage = "II" if episode >= t.stage2_start_episode else "I"
        return self.cfg.reward.for_stage(
            stage, t.stage2_collision_penalty,
            k_step_in_stage2=self.cfg.reward.use_k_step
            or self.cfg.policy == "msa3c_pred")

    def current_stage(self) -> str:
        return self._stage_config(self.episode).stage

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | None = None) -> str:
        path = path or os.path.join(self.out_dir, "checkpoint.pt")
        arrays, extra = checkpoint.learner_arrays(self.learner)
        extra["trainer"] = {
            "episode": self.episode,
            "env_steps": self.env_steps,
            "buffer": self.buffer.state_dict(),
        }
        checkpoint.save_container(path, "msa3c", arrays, extra)
        return path

    def _restore(self, path: str) -> None:
        arrays, extra = checkpoint.load_container(path, "msa3c")
        checkpoint.restore_learner(self.learner, arrays, extra)
        trainer = extra.get("trainer", {})
        self.episode = trainer.get("episode", 0)
        self.env_steps = trainer.get("env_steps", 0)
        if "buffer" in trainer:
            self.buffer.load_state_dict(trainer["buffer"])
        self.env.set_reward_config(self._stage_config(self.episode))

    # -- collection ------------------------------------------------------------

    def _collect_episode(self, seed: int) -> EpisodeTrajectory:
        t = self.cfg.train
        env, learner = self.env, self.learner
        observations = env.reset(seed)
        n = env.world.n_robots
        traj = EpisodeTrajectory(n)
        hiddens = [None] * n
        deltas = np.zeros((n, 2), dtype=np.float32)
        updates = []
        step_idx = 0
        while True:
            boundary = step_idx % t.rollout_len == 0
            snap = [learner.hidden_snapshot(h) for h in hiddens] if boundary else None
            if self.env_steps < t.warmup_random_steps:
                shape = (n, 2)
                actions = (torch.rand(shape, generator=learner.rollout_rng)
                           .numpy() * 2.0 - 1.0)
                _, hiddens = learner.act_joint(observations, deltas, hiddens,
                                               mode="deterministic")
            else:
                actions, hiddens = learner.act_joint(observations, deltas,
                                                     hiddens, mode="stochastic")
            result = env.step(actions)
            traj.append(observations, deltas, actions, result.rewards,
                        result.done, hiddens=snap)
            deltas = np.array([nxt.ego[:2] - cur.ego[:2] for nxt, cur
                               in zip(result.observations, observations)],
                              dtype=np.float32)
            observations = result.observations
            self.env_steps += 1
            step_idx += 1
            if (self.env_steps % t.update_every == 0
                    and self.buffer.ready(t.batch_size)):
                updates.append(self.learner.train_step(self.buffer))
            if result.done:
                break
        traj.finish(observations, deltas)
        traj.updates = updates
        return traj

    # -- main loop ---------------------------------------------------------------

    def run(self, episodes: int | None = None, log_every: int = 10) -> None:
        t = self.cfg.train
        total = episodes if episodes is not None else t.episodes
        with open(self.metrics_path, "a") as log:
            while self.episode < total:
                self.env.set_reward_config(self._stage_config(self.episode))
                seed = episode_seed(t.seed, self.episode)
                start = time.time()
                traj = self._collect_episode(seed)
                self.buffer.push_episode(traj)
                record = {
                    "episode": self.episode,
                    "stage": self.current_stage(),
                    "steps": len(traj),
                    "env_steps": self.env_steps,
                    "team_return": round(traj.episode_return, 5),
                    "updates": self.learner.update_count,
                    "alpha": round(self.learner.alpha.item(), 6),
                    "wall_s": round(time.time() - start, 3),
                }
                if traj.updates:
                    last = traj.updates[-1]
                    record["critic_loss"] = round(last["critic_loss"], 5)
                    if "policy_loss" in last:
                        record["policy_loss"] = round(last["policy_loss"], 5)
                        record["entropy"] = round(last["entropy"], 5)
                log.write(json.dumps(record) + "\n")
                if log_every and self.episode % log_every == 0:
                    log.flush()
                self.episode += 1
                if t.checkpoint_every and self.episode % t.checkpoint_every == 0:
                    self.save()
                if (t.eval_every and self.episode % t.eval_every == 0):
                    self._eval_snapshot()
        self.save()

    def _eval_snapshot(self) -> None:
        snap_dir = os.path.join(self.out_dir, f"eval_ep{self.episode:06d}")
        policy = Msa3cPolicy(self.learner, mode="deterministic")
        run_evaluation(self.cfg, snap_dir, policy=policy,
                       n_episodes=self.cfg.train.eval_episodes)


def run_training(cfg: ExperimentConfig, out_dir: str,
                 resume_from: str | None = None,
                 episodes: int | None = None) -> TrainingRun:
    run = TrainingRun(cfg, out_dir, resume_from=resume_from)
    run.run(episodes=episodes)
    return run
