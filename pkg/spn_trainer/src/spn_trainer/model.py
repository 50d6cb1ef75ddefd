"""Shortest-path policy network: induced-attention encoder over the
(start, facilities, destination) token set and a gated-query decoder that
scores successor tokens for the agent's current position.

Two decoder variants are supported: DED scores with LayerNorm-projected
position/destination embeddings directly; DCAD first cross-attends each of
them over the encoder output.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

DECODER_VARIANTS = ("ded", "dcad")


@dataclass(frozen=True)
class ModelConfig:
    d_h: int = 128
    l_enc: int = 3
    m_star: int = 16
    heads: int = 8
    decoder: str = "ded"
    dim: int = 2

    def __post_init__(self) -> None:
        if self.d_h % self.heads != 0:
            raise ValueError("d_h must be divisible by heads")
        if self.m_star < 1:
            raise ValueError("m_star must be >= 1")
        if self.decoder not in DECODER_VARIANTS:
            raise ValueError(f"decoder must be one of {DECODER_VARIANTS}")


class FeedForward(nn.Module):
    """d_h -> 2 d_h -> d_h with ReLU after both transforms."""

    def __init__(self, d_h: int) -> None:
        super().__init__()
        self.expand = nn.Linear(d_h, 2 * d_h)
        self.contract = nn.Linear(2 * d_h, d_h)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.relu(self.contract(torch.relu(self.expand(x))))


class InducedAttentionLayer(nn.Module):
    """Attention through a small learned inducing set: cost linear in the
    token count instead of quadratic."""

    def __init__(self, d_h: int, heads: int, m_star: int) -> None:
        super().__init__()
        self.inducing = nn.Parameter(torch.randn(m_star, d_h) / d_h**0.5)
        self.to_inducing = nn.MultiheadAttention(d_h, heads, batch_first=True)
        self.from_inducing = nn.MultiheadAttention(d_h, heads, batch_first=True)
        self.norm_attn = nn.LayerNorm(d_h)
        self.norm_ff = nn.LayerNorm(d_h)
        self.ff = FeedForward(d_h)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        b = tokens.shape[0]
        inducing = self.inducing.unsqueeze(0).expand(b, -1, -1)
        summary, _ = self.to_inducing(inducing, tokens, tokens)
        spread, _ = self.from_inducing(tokens, summary, summary)
        mixed = self.norm_attn(tokens + spread)
        return self.norm_ff(mixed + self.ff(mixed))


class SPN(nn.Module):
    """Encoder-decoder policy over stage-graph successor tokens."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        d_h = config.d_h
        self.input_proj = nn.Linear(config.dim, d_h)
        self.layers = nn.ModuleList(
            InducedAttentionLayer(d_h, config.heads, config.m_star)
            for _ in range(config.l_enc)
        )
        self.pos_proj = nn.Linear(config.dim, d_h)
        self.dest_proj = nn.Linear(config.dim, d_h)
        self.pos_norm = nn.LayerNorm(d_h)
        self.dest_norm = nn.LayerNorm(d_h)
        self.gate = nn.Linear(2 * d_h, 1)
        if config.decoder == "dcad":
            self.cross_pos = nn.MultiheadAttention(d_h, config.heads, batch_first=True)
            self.cross_dest = nn.MultiheadAttention(d_h, config.heads, batch_first=True)

    def encode(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, M+2, d) coordinates -> (B, M+2, d_h) token embeddings."""
        e = torch.relu(self.input_proj(tokens))
        for layer in self.layers:
            e = layer(e)
        return e

    def decode_logits(
        self,
        encoded: torch.Tensor,
        positions: torch.Tensor,
        dests: torch.Tensor,
        current: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Unnormalized successor scores, (B, M+2); start column at -inf.

        `current` (B,) node indices additionally mask the occupied node:
        a zero-cost self-transition is a no-op that canonicalization would
        strip, so the policy is learned and decoded in canonical form.
        """
        z_pos = self.pos_norm(torch.relu(self.pos_proj(positions)))
        z_dest = self.dest_norm(torch.relu(self.dest_proj(dests)))
        if self.config.decoder == "dcad":
            h_pos, _ = self.cross_pos(z_pos.unsqueeze(1), encoded, encoded)
            h_dest, _ = self.cross_dest(z_dest.unsqueeze(1), encoded, encoded)
            h_pos = h_pos.squeeze(1)
            h_dest = h_dest.squeeze(1)
        else:
            h_pos, h_dest = z_pos, z_dest
        alpha = torch.sigmoid(self.gate(torch.cat([h_pos, h_dest], dim=-1)))
        query = alpha * h_pos + (1.0 - alpha) * h_dest
        logits = torch.einsum("btd,bd->bt", encoded, query) / self.config.d_h**0.5
        logits = logits.clone()
        logits[:, 0] = -torch.inf
        if current is not None:
            dest = encoded.shape[1] - 1
            keep = current == dest  # destination self-transition stays legal
            cols = torch.where(keep, torch.zeros_like(current), current)
            logits[torch.arange(logits.shape[0]), cols] = -torch.inf
        return logits

    def decode_step(
        self,
        encoded: torch.Tensor,
        positions: torch.Tensor,
        dests: torch.Tensor,
        current: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Row-stochastic next-node distribution, (B, M+2)."""
        return torch.softmax(self.decode_logits(encoded, positions, dests, current), dim=-1)

    def gate_values(
        self, encoded: torch.Tensor, positions: torch.Tensor, dests: torch.Tensor
    ) -> torch.Tensor:
        """The gating coefficients alpha in [0,1]^(B,1) (diagnostics)."""
        z_pos = self.pos_norm(torch.relu(self.pos_proj(positions)))
        z_dest = self.dest_norm(torch.relu(self.dest_proj(dests)))
        if self.config.decoder == "dcad":
            z_pos, _ = self.cross_pos(z_pos.unsqueeze(1), encoded, encoded)
            z_dest, _ = self.cross_dest(z_dest.unsqueeze(1), encoded, encoded)
            z_pos = z_pos.squeeze(1)
            z_dest = z_dest.squeeze(1)
        return torch.sigmoid(self.gate(torch.cat([z_pos, z_dest], dim=-1)))
