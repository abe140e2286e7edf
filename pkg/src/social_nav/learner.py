"""Centralized-training / decentralized-execution soft actor-critic.

All robots share one policy, one social encoder and one pair of attention
critics.  The critics see every robot's social feature and action; at
execution time each robot acts from its own observation stream only.
Twin target heads bootstrap through their elementwise minimum, the policy
is a reparameterized tanh-Gaussian with the change-of-variables correction
in its log-density, and the entropy temperature is trained in log space
toward a fixed target entropy.
"""

from __future__ import annotations

import copy
import math

import numpy as np
import torch
from torch import nn

from .configs import ModelConfig, TrainConfig
from .encoder import HiddenState, PaddedBatch, SocialEncoder, package_batch
from .replay import ReplayBuffer
from .sim.world import ContractViolation, Observation

LOG_2PI = math.log(2.0 * math.pi)


def _embed(in_dim: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_dim, out_dim), nn.LayerNorm(out_dim),
                         nn.LeakyReLU())


class QHead(nn.Module):
    """One centralized Q head with multi-head attention over the other robots.

    The ego robot's (feature, action) pair is embedded and queries the
    embeddings of all other robots; the attention readout is concatenated
    back onto the ego embedding before the scalar output chain.  With a
    single robot the readout is the zero vector.  The ``concat``
    aggregation replaces attention with a flat concatenation of the other
    robots' raw inputs (fixed robot count), for ablations.
    """

    def __init__(self, cfg: ModelConfig, n_robots: int):
        super().__init__()
        self.cfg = cfg
        self.n_robots = n_robots
        in_dim = cfg.feature_dim + cfg.action_dim
        E = cfg.critic_embed_dim
        h = cfg.critic_hidden_dim
        self.ego_embed = _embed(in_dim, E)
        self.aggregation = cfg.critic_aggregation
        if self.aggregation == "attention":
            self.others_embed = _embed(in_dim, E)
            self.w_q = nn.Linear(E, E, bias=False)
            self.w_k = nn.Linear(E, E, bias=False)
            self.w_v = nn.Linear(E, E, bias=False)
        elif n_robots > 1:
            self.others_embed = _embed((n_robots - 1) * in_dim, E)
        self.q_net = nn.Sequential(
            nn.Linear(2 * E, h), nn.LayerNorm(h), nn.LeakyReLU(),
            nn.Linear(h, h), nn.LayerNorm(h), nn.LeakyReLU(),
            nn.Linear(h, 1))

    def forward(self, features: torch.Tensor, actions: torch.Tensor,
                robot_index: int) -> torch.Tensor:
        """Q value for one robot; features/actions are [..., N, dim]."""
        n = features.shape[-2]
        if n != self.n_robots:
            raise ContractViolation(
                f"critic built for {self.n_robots} robots, got {n}")
        if features.shape[:-2] != actions.shape[:-2]:
            raise ContractViolation("feature/action batch shapes disagree")
        x = torch.cat([features, actions], dim=-1)
        ego = self.ego_embed(x.select(-2, robot_index))
        others_idx = [j for j in range(n) if j != robot_index]
        if not others_idx:
            attended = torch.zeros_like(ego)
        elif self.aggregation == "attention":
            others = self.others_embed(x[..., others_idx, :])
            heads = self.cfg.critic_attn_heads
            head_dim = self.cfg.critic_embed_dim // heads
            batch_shape = ego.shape[:-1]
            q = self.w_q(ego).reshape(*batch_shape, heads, head_dim)
            k = self.w_k(others).reshape(*batch_shape, len(others_idx), heads, head_dim)
            v = self.w_v(others).reshape(*batch_shape, len(others_idx), heads, head_dim)
            logits = torch.einsum("...hd,...nhd->...nh", q, k) / (head_dim ** 0.5)
            weights = torch.softmax(logits, dim=-2)
            attended = torch.einsum("...nh,...nhd->...hd", weights, v)
            attended = attended.reshape(*batch_shape, -1)
        else:
            flat = x[..., others_idx, :].reshape(*ego.shape[:-1], -1)
            attended = self.others_embed(flat)
        return self.q_net(torch.cat([attended, ego], dim=-1)).squeeze(-1)

    def attention_weights(self, features, actions, robot_index) -> torch.Tensor:
        """Per-head weights over the other robots (diagnostics/tests)."""
        if self.aggregation != "attention":
            raise ContractViolation("concat critic has no attention weights")
        x = torch.cat([features, actions], dim=-1)
        ego = self.ego_embed(x.select(-2, robot_index))
        others_idx = [j for j in range(features.shape[-2]) if j != robot_index]
        others = self.others_embed(x[..., others_idx, :])
        heads = self.cfg.critic_attn_heads
        head_dim = self.cfg.critic_embed_dim // heads
        batch_shape = ego.shape[:-1]
        q = self.w_q(ego).reshape(*batch_shape, heads, head_dim)
        k = self.w_k(others).reshape(*batch_shape, len(others_idx), heads, head_dim)
        logits = torch.einsum("...hd,...nhd->...nh", q, k) / (head_dim ** 0.5)
        return torch.softmax(logits, dim=-2)


class TanhGaussianPolicy(nn.Module):
    """Squashed-Gaussian policy over [-1, 1]^2, shared by all robots."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        h = cfg.policy_hidden_dim
        self.trunk = nn.Sequential(
            nn.Linear(cfg.feature_dim, h), nn.LeakyReLU(),
            nn.Linear(h, h), nn.LeakyReLU(),
            nn.Linear(h, h), nn.LeakyReLU())
        self.mu_head = nn.Linear(h, cfg.action_dim)
        self.log_std_head = nn.Linear(h, cfg.action_dim)

    def forward(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.trunk(features)
        log_std = torch.clamp(self.log_std_head(x), self.cfg.log_std_min,
                              self.cfg.log_std_max)
        return self.mu_head(x), log_std

    def sample(self, features: torch.Tensor, noise: torch.Tensor | None = None,
               generator: torch.Generator | None = None
               ) -> tuple[torch.Tensor, torch.Tensor]:
        """Reparameterized sample and its log-density.

        a = tanh(mu + sigma * eps).  The log-density includes the tanh
        change-of-variables term via the numerically stable identity
        log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
        """
        mu, log_std = self(features)
        std = log_std.exp()
        if noise is None:
            noise = torch.randn(mu.shape, dtype=mu.dtype, device=mu.device,
                                generator=generator)
        u = mu + std * noise
        action = torch.tanh(u)
        log_prob = (-0.5 * noise.pow(2) - log_std - 0.5 * LOG_2PI).sum(-1)
        log_prob = log_prob - (2.0 * (math.log(2.0) - u
                                      - nn.functional.softplus(-2.0 * u))).sum(-1)
        return action, log_prob

    def deterministic(self, features: torch.Tensor) -> torch.Tensor:
        mu, _ = self(features)
        return torch.tanh(mu)


def soft_update(online: nn.Module, target: nn.Module, tau: float) -> None:
    """Polyak blend: target <- tau * online + (1 - tau) * target."""
    online_params = dict(online.named_parameters())
    target_params = dict(target.named_parameters())
    if online_params.keys() != target_params.keys():
        raise ContractViolation("online/target parameter sets differ")
    with torch.no_grad():
        for name, p_t in target_params.items():
            p_o = online_params[name]
            if p_o.shape != p_t.shape:
                raise ContractViolation(f"shape mismatch for '{name}'")
            p_t.mul_(1.0 - tau).add_(p_o, alpha=tau)


def _frozen_copy(module: nn.Module) -> nn.Module:
    target = copy.deepcopy(module)
    for p in target.parameters():
        p.requires_grad_(False)
    return target


class MSA3CLearner:
    """Owns the networks, optimizers and the update schedule."""

    def __init__(self, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 n_robots: int, device: str = "cpu",
                 dtype: torch.dtype = torch.float32):
        self.model_cfg = model_cfg
        self.train_cfg = train_cfg
        self.n_robots = n_robots
        self.device = torch.device(device)
        self.dtype = dtype

        def build(module):
            return module.to(device=self.device, dtype=dtype)

        self.encoder = build(SocialEncoder(model_cfg))
        self.critic1 = build(QHead(model_cfg, n_robots))
        self.critic2 = build(QHead(model_cfg, n_robots))
        self.encoder_target = _frozen_copy(self.encoder)
        self.critic1_target = _frozen_copy(self.critic1)
        self.critic2_target = _frozen_copy(self.critic2)
        self.policy = build(TanhGaussianPolicy(model_cfg))
        self.log_alpha = torch.tensor(math.log(train_cfg.alpha_init),
                                      dtype=dtype, device=self.device,
                                      requires_grad=True)

        lr = train_cfg.lr
        self.critic_opt = torch.optim.Adam(
            list(self.critic1.parameters()) + list(self.critic2.parameters())
            + list(self.encoder.parameters()), lr=lr)
        self.policy_opt = torch.optim.Adam(self.policy.parameters(), lr=lr)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=lr)

        self.rollout_rng = torch.Generator(device="cpu")
        self.rollout_rng.manual_seed(train_cfg.seed)
        self.train_rng = torch.Generator(device="cpu")
        self.train_rng.manual_seed(train_cfg.seed + 1)
        self.update_count = 0

    @property
    def alpha(self) -> torch.Tensor:
        return self.log_alpha.exp()

    # -- batch plumbing -------------------------------------------------------

    def package(self, per_robot_segments) -> list[PaddedBatch]:
        return [package_batch(segs, dtype=self.dtype, device=self.device)
                for segs in per_robot_segments]

    def _stack_features(self, batches: list[PaddedBatch],
                        encoder: SocialEncoder) -> torch.Tensor:
        feats = [encoder.encode_batch(b) for b in batches]   # N x [B, F, feat]
        return torch.stack(feats, dim=2)                     # [B, F, N, feat]

    # -- losses ---------------------------------------------------------------

    def td_targets(self, batches: list[PaddedBatch],
                   noise: torch.Tensor | None = None) -> torch.Tensor:
        """Soft TD targets y = r + gamma (min target Q - alpha log pi), [B, N, T].

        Next-state features come from the target encoder; next actions are
        fresh policy samples at those features.  Terminal steps bootstrap
        nothing: y = r exactly.
        """
        gamma = self.train_cfg.gamma
        with torch.no_grad():
            feats = self._stack_features(batches, self.encoder_target)
            nxt = feats[:, 1:]                               # [B, T, N, feat]
            b, t, n, _ = nxt.shape
            if noise is None:
                noise = torch.randn(b, t, n, self.model_cfg.action_dim,
                                    dtype=self.dtype, generator=self.train_rng
                                    ).to(self.device)
            a_next, logp_next = self.policy.sample(nxt, noise=noise)
            targets = []
            for i in range(self.n_robots):
                q1 = self.critic1_target(nxt, a_next, i)
                q2 = self.critic2_target(nxt, a_next, i)
                q_min = torch.minimum(q1, q2)
                soft = q_min - self.alpha.detach() * logp_next[..., i]
                r_i = batches[i].rewards
                not_done = (~batches[i].dones).to(self.dtype)
                targets.append(r_i + gamma * not_done * soft)
            return torch.stack(targets, dim=-1)              # [B, T, N]

    @staticmethod
    def masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Mean over unmasked entries; masked entries contribute exactly zero."""
        m = mask.to(values.dtype)
        total = m.sum()
        if total.item() == 0:
            return values.sum() * 0.0
        return (values * m).sum() / total

    def critic_loss(self, batches: list[PaddedBatch],
                    noise: torch.Tensor | None = None
                    ) -> tuple[torch.Tensor, dict]:
        """Masked squared TD error summed over robots and both heads."""
        y = self.td_targets(batches, noise=noise)
        feats = self._stack_features(batches, self.encoder)
        cur = feats[:, :-1]                                  # [B, T, N, feat]
        actions = torch.stack([b.actions for b in batches], dim=2)
        mask = batches[0].step_mask
        loss = cur.new_zeros(())
        q_means = []
        for i in range(self.n_robots):
            for critic in (self.critic1, self.critic2):
                q = critic(cur, actions, i)
                loss = loss + self.masked_mean((q - y[..., i]).pow(2), mask)
                q_means.append(self.masked_mean(q, mask).item())
        return loss, {"q_mean": float(np.mean(q_means)),
                      "target_mean": self.masked_mean(y.mean(dim=-1), mask).item()}

    def policy_objective(self, batches: list[PaddedBatch],
                         noise: torch.Tensor | None = None
                         ) -> tuple[torch.Tensor, torch.Tensor]:
        """Policy loss (to minimize) and the sampled log-probs.

        Social features are detached: the encoder trains through the critic
        loss only, so policy gradients reach the policy parameters alone.
        Other robots' actions come from the batch while robot i's action is
        resampled with gradients.
        """
        with torch.no_grad():
            feats = self._stack_features(batches, self.encoder)[:, :-1]
        actions = torch.stack([b.actions for b in batches], dim=2)
        mask = batches[0].step_mask
        b, t, n, _ = feats.shape
        if noise is None:
            noise = torch.randn(b, t, n, self.model_cfg.action_dim,
                                dtype=self.dtype, generator=self.train_rng
                                ).to(self.device)
        loss = feats.new_zeros(())
        logps = []
        alpha = self.alpha.detach()
        for i in range(self.n_robots):
            a_i, logp_i = self.policy.sample(feats[..., i, :], noise=noise[..., i, :])
            joint = torch.cat([actions[..., :i, :], a_i.unsqueeze(-2),
                               actions[..., i + 1:, :]], dim=-2)
            q1 = self.critic1(feats, joint, i)
            q2 = self.critic2(feats, joint, i)
            q_min = torch.minimum(q1, q2)
            loss = loss + self.masked_mean(alpha * logp_i - q_min, mask)
            logps.append(logp_i)
        return loss, torch.stack(logps, dim=-1)              # [B, T, N]

    def temperature_loss(self, log_probs: torch.Tensor,
                         mask: torch.Tensor) -> torch.Tensor:
        """Drives E[-log pi] toward the target entropy (log-domain update)."""
        excess = (log_probs + self.train_cfg.target_entropy).detach()
        per_step = excess.mean(dim=-1) if excess.dim() == 3 else excess
        return -(self.log_alpha * self.masked_mean(per_step, mask))

    # -- update schedule --------------------------------------------------------

    def soft_update_targets(self, tau: float | None = None) -> None:
        tau = self.train_cfg.tau if tau is None else tau
        soft_update(self.encoder, self.encoder_target, tau)
        soft_update(self.critic1, self.critic1_target, tau)
        soft_update(self.critic2, self.critic2_target, tau)

    def train_step(self, buffer: ReplayBuffer) -> dict:
        """One critic update; policy and temperature every ``policy_delay`` calls."""
        batches = self.package(buffer.sample(self.train_cfg.batch_size))
        self.update_count += 1
        metrics = {"update": self.update_count}

        loss, info = self.critic_loss(batches)
        self.critic_opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(
            [p for g in self.critic_opt.param_groups for p in g["params"]],
            self.train_cfg.grad_clip)
        self.critic_opt.step()
        metrics["critic_loss"] = loss.item()
        metrics.update(info)

        if self.update_count % self.train_cfg.policy_delay == 0:
            p_loss, logps = self.policy_objective(batches)
            self.policy_opt.zero_grad()
            p_loss.backward()
            torch.nn.utils.clip_grad_norm_(self.policy.parameters(),
                                           self.train_cfg.grad_clip)
            self.policy_opt.step()

            a_loss = self.temperature_loss(logps, batches[0].step_mask)
            self.alpha_opt.zero_grad()
            a_loss.backward()
            self.alpha_opt.step()
            metrics["policy_loss"] = p_loss.item()
            metrics["entropy"] = -self.masked_mean(
                logps.mean(dim=-1), batches[0].step_mask).item()
        metrics["alpha"] = self.alpha.item()

        self.soft_update_targets()
        return metrics

    # -- decentralized execution --------------------------------------------------

    def act(self, obs: Observation, delta: np.ndarray,
            hidden: HiddenState | None, mode: str = "stochastic"
            ) -> tuple[np.ndarray, HiddenState]:
        """Action in [-1, 1]^2 from one robot's local observation only."""
        with torch.no_grad():
            feat, hidden = self.encoder.encode_step(obs, delta, hidden)
            if mode == "deterministic":
                action = self.policy.deterministic(feat)
            elif mode == "stochastic":
                action, _ = self.policy.sample(feat, generator=self.rollout_rng)
            else:
                raise ValueError(f"unknown act mode '{mode}'")
        return action.cpu().numpy().astype(np.float64), hidden

    def act_joint(self, observations, deltas, hiddens, mode: str = "stochastic"
                  ) -> tuple[np.ndarray, list]:
        """Batched act() over all robots (one encoder pass per step).

        Functionally each robot still consumes only its own observation
        stream; batching robots along the batch axis is a speed device.
        """
        n = len(observations)
        p = next(self.encoder.parameters())
        occupancies = [len(o.others) for o in observations]
        carried = [0 if h is None else h.h_spatial.shape[1] for h in hiddens]
        slots = max([1] + [max(m, c) for m, c in zip(occupancies, carried)])
        spatial = torch.zeros(n, 1, slots, 2, dtype=p.dtype, device=p.device)
        agent_mask = torch.zeros(n, 1, slots, dtype=torch.bool, device=p.device)
        ego = torch.zeros(n, 1, observations[0].ego.shape[0], dtype=p.dtype,
                          device=p.device)
        temporal = torch.zeros(n, 1, 2, dtype=p.dtype, device=p.device)
        h_sp = torch.zeros(n, slots, self.model_cfg.rnn_hidden_dim, dtype=p.dtype,
                           device=p.device)
        h_tmp = torch.zeros(n, self.model_cfg.rnn_hidden_dim, dtype=p.dtype,
                            device=p.device)
        h_node = torch.zeros_like(h_tmp)
        for i, obs in enumerate(observations):
            for j, other in enumerate(obs.others):
                spatial[i, 0, j] = torch.as_tensor(other.rel_position, dtype=p.dtype)
                agent_mask[i, 0, j] = True
            ego[i, 0] = torch.as_tensor(obs.ego, dtype=p.dtype)
            temporal[i, 0] = torch.as_tensor(deltas[i], dtype=p.dtype)
            if hiddens[i] is not None:
                rows = hiddens[i].h_spatial.shape[1]
                h_sp[i, :rows] = hiddens[i].h_spatial[0]
                h_tmp[i] = hiddens[i].h_temporal[0]
                h_node[i] = hiddens[i].h_node[0]
        time_mask = torch.ones(n, 1, dtype=torch.bool, device=p.device)
        with torch.no_grad():
            feats, new_hidden = self.encoder(
                spatial, temporal, ego, agent_mask, time_mask,
                HiddenState(h_sp, h_tmp, h_node))
            feats = feats[:, 0]
            if mode == "deterministic":
                actions = self.policy.deterministic(feats)
            else:
                actions, _ = self.policy.sample(feats, generator=self.rollout_rng)
        out_hiddens = [HiddenState(new_hidden.h_spatial[i:i + 1],
                                   new_hidden.h_temporal[i:i + 1],
                                   new_hidden.h_node[i:i + 1])
                       for i in range(n)]
        return actions.cpu().numpy().astype(np.float64), out_hiddens

    def hidden_snapshot(self, hidden: HiddenState | None):
        """Numpy copy of a live hidden state, for replay storage."""
        if hidden is None:
            h = self.encoder.init_hidden(1, 0)
            return h.numpy()[0][0], h.numpy()[1][0], h.numpy()[2][0]
        h_sp, h_tmp, h_node = hidden.numpy()
        return h_sp[0], h_tmp[0], h_node[0]
