"""EEG-predictor heads: fused feature [B x F] -> EEG [B x C x T]."""

import torch
from torch import nn
from torch.nn import functional as F

from ...domain.model_types import HeadKind, HeadSpec


class DenseHead(nn.Module):
    """Single linear layer."""

    def __init__(self, in_features: int, spec: HeadSpec):
        super().__init__()
        self.channels, self.timepoints = spec.channels, spec.timepoints
        self.linear = nn.Linear(in_features, spec.output_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.linear(x).view(-1, self.channels, self.timepoints)


class RnnSkipHead(nn.Module):
    """Residual recurrence h <- h + tanh(W_h h + W_x x), unrolled over timepoints."""

    def __init__(self, in_features: int, spec: HeadSpec):
        super().__init__()
        self.timepoints = spec.timepoints
        self.input_map = nn.Linear(in_features, spec.hidden_size)
        self.recurrent = nn.Linear(spec.hidden_size, spec.hidden_size, bias=False)
        self.readout = nn.Linear(spec.hidden_size, spec.channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        drive = self.input_map(x)
        h = torch.zeros_like(drive)
        outputs = []
        for _ in range(self.timepoints):
            h = h + torch.tanh(self.recurrent(h) + drive)
            outputs.append(self.readout(h))
        return torch.stack(outputs, dim=2)


class LstmHead(nn.Module):
    """LSTM fed the fused feature at every timepoint."""

    def __init__(self, in_features: int, spec: HeadSpec):
        super().__init__()
        self.timepoints = spec.timepoints
        self.lstm = nn.LSTM(in_features, spec.hidden_size, num_layers=spec.layers, batch_first=True)
        self.readout = nn.Linear(spec.hidden_size, spec.channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        sequence = x.unsqueeze(1).expand(-1, self.timepoints, -1)
        hidden, _ = self.lstm(sequence)
        return self.readout(hidden).transpose(1, 2)


class TransformerHead(nn.Module):
    """Transformer encoder over one token per timepoint with learned positions."""

    def __init__(self, in_features: int, spec: HeadSpec):
        super().__init__()
        self.token = nn.Linear(in_features, spec.embed_dim)
        self.positions = nn.Parameter(torch.randn(spec.timepoints, spec.embed_dim) * 0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=spec.embed_dim,
            nhead=spec.heads,
            dim_feedforward=2 * spec.embed_dim,
            dropout=spec.dropout,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=spec.layers, enable_nested_tensor=False)
        self.readout = nn.Linear(spec.embed_dim, spec.channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        tokens = self.token(x).unsqueeze(1) + self.positions.unsqueeze(0)
        return self.readout(self.encoder(tokens)).transpose(1, 2)


class SelfAttentionHead(nn.Module):
    """Multi-head self-attention across per-tap tokens, residual, then linear."""

    def __init__(self, in_features: int, spec: HeadSpec):
        super().__init__()
        self.embed_dim = spec.embed_dim
        self.num_tokens = in_features // spec.embed_dim
        self.channels, self.timepoints = spec.channels, spec.timepoints
        self.attention = nn.MultiheadAttention(spec.embed_dim, spec.heads, dropout=spec.dropout, batch_first=True)
        self.readout = nn.Linear(in_features, spec.output_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        tokens = x.view(-1, self.num_tokens, self.embed_dim)
        attended, _ = self.attention(tokens, tokens, tokens, need_weights=False)
        mixed = (tokens + attended).flatten(1)
        return self.readout(mixed).view(-1, self.channels, self.timepoints)


class PositionAttention(nn.Module):
    """Position attention over a [B x C x N] map."""

    def __init__(self, channels: int):
        super().__init__()
        reduced = max(1, channels // 8)
        self.query = nn.Conv1d(channels, reduced, kernel_size=1)
        self.key = nn.Conv1d(channels, reduced, kernel_size=1)
        self.value = nn.Conv1d(channels, channels, kernel_size=1)
        self.gamma = nn.Parameter(torch.zeros(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        energy = torch.bmm(self.query(x).transpose(1, 2), self.key(x))
        attention = F.softmax(energy, dim=-1)
        out = torch.bmm(self.value(x), attention.transpose(1, 2))
        return self.gamma * out + x


class ChannelAttention(nn.Module):
    """Channel attention over a [B x C x N] map."""

    def __init__(self):
        super().__init__()
        self.gamma = nn.Parameter(torch.zeros(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        energy = torch.bmm(x, x.transpose(1, 2))
        energy = energy.max(dim=-1, keepdim=True)[0].expand_as(energy) - energy
        attention = F.softmax(energy, dim=-1)
        return self.gamma * torch.bmm(attention, x) + x


class PamCamHead(nn.Module):
    """Position and channel attention on the reshaped feature, concatenated, then linear."""

    def __init__(self, in_features: int, spec: HeadSpec):
        super().__init__()
        self.map_channels = spec.pam_channels
        self.channels, self.timepoints = spec.channels, spec.timepoints
        self.position = PositionAttention(spec.pam_channels)
        self.channel = ChannelAttention()
        self.readout = nn.Linear(2 * in_features, spec.output_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feature_map = x.view(x.shape[0], self.map_channels, -1)
        fused = torch.cat([self.position(feature_map).flatten(1), self.channel(feature_map).flatten(1)], dim=1)
        return self.readout(fused).view(-1, self.channels, self.timepoints)


HEADS = {
    HeadKind.DENSE: DenseHead,
    HeadKind.RNN_SKIP: RnnSkipHead,
    HeadKind.LSTM: LstmHead,
    HeadKind.TRANSFORMER: TransformerHead,
    HeadKind.SELF_ATTENTION: SelfAttentionHead,
    HeadKind.PAM_CAM: PamCamHead,
}


def build_head(in_features: int, spec: HeadSpec) -> nn.Module:
    """Head module for the architecture, initialized from the current torch RNG state."""
    return HEADS[spec.kind](in_features, spec)
