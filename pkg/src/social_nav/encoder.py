"""Temporal-spatial-graph social encoder.

Maps variable-dimension robot observations to fixed-length social features.
A robot-centric star graph is unrolled over a rollout segment: a recurrent
spatial edge per surrounding agent (shared weights), a recurrent temporal
edge over the robot's own displacement, a dot-product multi-head attention
readout of the spatial edges keyed by the temporal edge, and a recurrent
node that fuses the attention readout with the embedded ego state.

Padding rules (agent slots and timesteps both pad to batch maxima):
masked agent slots and masked frames never update their hidden state, and
masked slots receive strictly zero attention weight, so padded content
cannot leak into any real output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .configs import ModelConfig
from .sim.world import ContractViolation, Observation


@dataclass
class HiddenState:
    """Recurrent state of the encoder for a batch of robot streams."""

    h_spatial: torch.Tensor    # [B, A, H]
    h_temporal: torch.Tensor   # [B, H]
    h_node: torch.Tensor       # [B, H]

    def detach(self) -> "HiddenState":
        return HiddenState(self.h_spatial.detach(), self.h_temporal.detach(),
                           self.h_node.detach())

    def numpy(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.h_spatial.detach().cpu().numpy().copy(),
                self.h_temporal.detach().cpu().numpy().copy(),
                self.h_node.detach().cpu().numpy().copy())


@dataclass
class PaddedBatch:
    """One robot's rollout slice, padded along agents and frames.

    Arrays carry ``F = rollout_len + 1`` observation frames: frame t is the
    observation before step t, and the trailing frame is the final
    next-observation, so current and next slices are views of one tensor.
    """

    spatial_inputs: torch.Tensor   # [B, F, A, 2] relative positions
    temporal_inputs: torch.Tensor  # [B, F, 2] ego position deltas
    ego_inputs: torch.Tensor       # [B, F, 9]
    agent_mask: torch.Tensor       # [B, F, A] bool
    time_mask: torch.Tensor        # [B, F] bool, frame validity
    actions: torch.Tensor          # [B, T, 2]
    rewards: torch.Tensor          # [B, T]
    dones: torch.Tensor            # [B, T] bool, true episode termination
    step_mask: torch.Tensor        # [B, T] bool, real (non-padded) steps
    init_hidden: HiddenState

    @property
    def rollout_len(self) -> int:
        return self.actions.shape[1]


def _embed(in_dim: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_dim, out_dim), nn.LayerNorm(out_dim),
                         nn.LeakyReLU())


class SocialEncoder(nn.Module):
    """Shared (parameter-tied across robots) observation encoder."""

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        cfg = cfg or ModelConfig()
        cfg.validate()
        self.cfg = cfg
        H, E = cfg.rnn_hidden_dim, cfg.edge_embed_dim
        self.spatial_embed = _embed(2, E)
        self.spatial_gru = nn.GRUCell(E, H)
        self.temporal_embed = _embed(2, E)
        self.temporal_gru = nn.GRUCell(E, H)
        self.w_q = nn.Linear(H, cfg.attn_dim, bias=False)
        self.w_k = nn.Linear(H, cfg.attn_dim, bias=False)
        self.w_v = nn.Linear(H, cfg.attn_dim, bias=False)
        self.ego_embed = _embed(cfg.ego_dim, E)
        self.node_embed = _embed(cfg.attn_dim + E, cfg.node_pre_dim)
        self.node_gru = nn.GRUCell(cfg.node_pre_dim, H)
        self.out_embed = _embed(H, cfg.feature_dim)

    # -- hidden management ----------------------------------------------------

    def init_hidden(self, batch: int, n_slots: int, **kw) -> HiddenState:
        H = self.cfg.rnn_hidden_dim
        p = next(self.parameters())
        kw.setdefault("dtype", p.dtype)
        kw.setdefault("device", p.device)
        return HiddenState(torch.zeros(batch, n_slots, H, **kw),
                           torch.zeros(batch, H, **kw),
                           torch.zeros(batch, H, **kw))

    @staticmethod
    def pad_hidden(hidden: HiddenState, n_slots: int) -> HiddenState:
        """Grow the agent-slot axis with zero rows (new slots start blank)."""
        b, a, h = hidden.h_spatial.shape
        if a >= n_slots:
            return hidden
        extra = torch.zeros(b, n_slots - a, h, dtype=hidden.h_spatial.dtype,
                            device=hidden.h_spatial.device)
        return HiddenState(torch.cat([hidden.h_spatial, extra], dim=1),
                           hidden.h_temporal, hidden.h_node)

    # -- single-frame pieces ----------------------------------------------------

    def spatial_edge_forward(self, rel_positions: torch.Tensor,
                             h_spatial: torch.Tensor,
                             update_mask: torch.Tensor) -> torch.Tensor:
        """Advance per-slot spatial hiddens; masked slots are carried unchanged."""
        b, a, _ = rel_positions.shape
        if a == 0:
            return h_spatial
        emb = self.spatial_embed(rel_positions.reshape(b * a, 2))
        new_h = self.spatial_gru(emb, h_spatial.reshape(b * a, -1)).reshape(b, a, -1)
        return torch.where(update_mask[..., None], new_h, h_spatial)

    def temporal_edge_forward(self, deltas: torch.Tensor, h_temporal: torch.Tensor,
                              update_mask: torch.Tensor) -> torch.Tensor:
        emb = self.temporal_embed(deltas)
        new_h = self.temporal_gru(emb, h_temporal)
        return torch.where(update_mask[..., None], new_h, h_temporal)

    def social_attention(self, h_spatial: torch.Tensor, h_temporal: torch.Tensor,
                         agent_mask: torch.Tensor) -> torch.Tensor:
        """Multi-head dot-product readout over agent slots.

        Queries and values come from the spatial-edge hiddens, the single
        key from the temporal-edge hidden.  Masked slots get strictly zero
        weight; with no unmasked slot the readout is the zero vector.
        """
        b, a, _ = h_spatial.shape
        heads = self.cfg.attn_heads
        head_dim = self.cfg.attn_dim // heads
        if a == 0:
            return h_spatial.new_zeros(b, self.cfg.attn_dim)
        q = self.w_q(h_spatial).reshape(b, a, heads, head_dim)
        k = self.w_k(h_temporal).reshape(b, heads, head_dim)
        v = self.w_v(h_spatial).reshape(b, a, heads, head_dim)
        logits = torch.einsum("bahd,bhd->bah", q, k) / (head_dim ** 0.5)
        # Large-negative fill underflows to exactly zero weight after softmax.
        neg = torch.finfo(logits.dtype).min / 2
        logits = logits.masked_fill(~agent_mask[..., None], neg)
        weights = torch.softmax(logits, dim=1)
        attended = torch.einsum("bah,bahd->bhd", weights, v).reshape(b, -1)
        has_agents = agent_mask.any(dim=1, keepdim=True)
        return attended * has_agents

    def node_forward(self, attended: torch.Tensor, ego: torch.Tensor,
                     h_node: torch.Tensor, update_mask: torch.Tensor
                     ) -> tuple[torch.Tensor, torch.Tensor]:
        """Fuse attention readout with the ego state; emit the social feature."""
        x = self.node_embed(torch.cat([attended, self.ego_embed(ego)], dim=-1))
        new_h = self.node_gru(x, h_node)
        new_h = torch.where(update_mask[..., None], new_h, h_node)
        return self.out_embed(new_h), new_h

    # -- sequence forward -------------------------------------------------------

    def forward(self, spatial: torch.Tensor, temporal: torch.Tensor,
                ego: torch.Tensor, agent_mask: torch.Tensor,
                time_mask: torch.Tensor, hidden: HiddenState | None = None
                ) -> tuple[torch.Tensor, HiddenState]:
        """Unroll over frames; returns features [B, F, feature_dim] and state.

        Features at masked frames are computed from carried hiddens and must
        be ignored by the caller (the step mask excludes them from losses).
        """
        b, f, a, _ = spatial.shape
        if hidden is None:
            hidden = self.init_hidden(b, a, dtype=spatial.dtype, device=spatial.device)
        hidden = self.pad_hidden(hidden, a)
        h_sp, h_tmp, h_node = hidden.h_spatial, hidden.h_temporal, hidden.h_node
        feats = []
        for t in range(f):
            frame_ok = time_mask[:, t]
            slot_ok = agent_mask[:, t] & frame_ok[:, None]
            h_sp = self.spatial_edge_forward(spatial[:, t], h_sp, slot_ok)
            h_tmp = self.temporal_edge_forward(temporal[:, t], h_tmp, frame_ok)
            attended = self.social_attention(h_sp, h_tmp, agent_mask[:, t])
            feat, h_node = self.node_forward(attended, ego[:, t], h_node, frame_ok)
            feats.append(feat)
        return torch.stack(feats, dim=1), HiddenState(h_sp, h_tmp, h_node)

    def encode_batch(self, batch: PaddedBatch) -> torch.Tensor:
        features, _ = self.forward(batch.spatial_inputs, batch.temporal_inputs,
                                   batch.ego_inputs, batch.agent_mask,
                                   batch.time_mask, batch.init_hidden)
        return features

    # -- single-observation inference --------------------------------------------

    def encode_step(self, obs: Observation, delta: np.ndarray,
                    hidden: HiddenState | None) -> tuple[torch.Tensor, HiddenState]:
        """Encode one live observation, evolving the recurrent state."""
        p = next(self.parameters())
        m = len(obs.others)
        slots = m if hidden is None else max(m, hidden.h_spatial.shape[1])
        spatial = torch.zeros(1, 1, slots, 2, dtype=p.dtype, device=p.device)
        agent_mask = torch.zeros(1, 1, slots, dtype=torch.bool, device=p.device)
        for j, other in enumerate(obs.others):
            spatial[0, 0, j] = torch.as_tensor(other.rel_position, dtype=p.dtype)
            agent_mask[0, 0, j] = True
        temporal = torch.as_tensor(delta, dtype=p.dtype, device=p.device).reshape(1, 1, 2)
        ego = torch.as_tensor(obs.ego, dtype=p.dtype, device=p.device).reshape(1, 1, -1)
        time_mask = torch.ones(1, 1, dtype=torch.bool, device=p.device)
        features, new_hidden = self.forward(spatial, temporal, ego, agent_mask,
                                            time_mask, hidden)
        return features[0, 0], new_hidden


def package_batch(segments: list, dtype=torch.float32, device="cpu") -> PaddedBatch:
    """Pad a list of one robot's rollout segments into dense tensors.

    Agent slots pad to the largest FOV occupancy in the batch; unpadded
    content is preserved bit-exactly.  Segments must share one rollout
    length.
    """
    if not segments:
        raise ContractViolation("cannot package an empty segment list")
    t_len = segments[0].rollout_len
    if any(s.rollout_len != t_len for s in segments):
        raise ContractViolation("segments have inconsistent rollout lengths")
    b = len(segments)
    f_len = t_len + 1
    a = max((len(frame) for s in segments for frame in s.others), default=0)

    spatial = torch.zeros(b, f_len, a, 2, dtype=dtype, device=device)
    agent_mask = torch.zeros(b, f_len, a, dtype=torch.bool, device=device)
    temporal = torch.zeros(b, f_len, 2, dtype=dtype, device=device)
    ego = torch.zeros(b, f_len, segments[0].ego.shape[1], dtype=dtype, device=device)
    time_mask = torch.zeros(b, f_len, dtype=torch.bool, device=device)
    actions = torch.zeros(b, t_len, 2, dtype=dtype, device=device)
    rewards = torch.zeros(b, t_len, dtype=dtype, device=device)
    dones = torch.zeros(b, t_len, dtype=torch.bool, device=device)
    step_mask = torch.zeros(b, t_len, dtype=torch.bool, device=device)
    h_sp = torch.zeros(b, a, segments[0].h_temporal.shape[0], dtype=dtype, device=device)
    h_tmp = torch.zeros(b, segments[0].h_temporal.shape[0], dtype=dtype, device=device)
    h_node = torch.zeros_like(h_tmp)

    for i, seg in enumerate(segments):
        ego[i] = torch.as_tensor(seg.ego, dtype=dtype)
        temporal[i] = torch.as_tensor(seg.deltas, dtype=dtype)
        time_mask[i] = torch.as_tensor(seg.frame_mask)
        actions[i] = torch.as_tensor(seg.actions, dtype=dtype)
        rewards[i] = torch.as_tensor(seg.rewards, dtype=dtype)
        dones[i] = torch.as_tensor(seg.dones)
        step_mask[i] = torch.as_tensor(seg.step_mask)
        for t, frame in enumerate(seg.others):
            if len(frame):
                spatial[i, t, :len(frame)] = torch.as_tensor(frame, dtype=dtype)
                agent_mask[i, t, :len(frame)] = True
        rows = min(seg.h_spatial.shape[0], a)
        if rows:
            h_sp[i, :rows] = torch.as_tensor(seg.h_spatial[:rows], dtype=dtype)
        h_tmp[i] = torch.as_tensor(seg.h_temporal, dtype=dtype)
        h_node[i] = torch.as_tensor(seg.h_node, dtype=dtype)

    return PaddedBatch(spatial, temporal, ego, agent_mask, time_mask, actions,
                       rewards, dones, step_mask,
                       HiddenState(h_sp, h_tmp, h_node))
