"""Toy promptable segmentation backbone with a recurrent prompt-feedback loop.

The backbone mirrors the split of a promptable segmenter: a comparatively
heavy image encoder runs once per image, and a light decoder turns the
image embedding plus additive prompt embeddings into a single logits mask.
The recurrent module feeds each logits mask back as the next prompt, with a
hidden state carrying memory of what has already been generated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .errors import InvalidArgumentError
from .mask_ops import soft_dice_loss


@dataclass
class ModelConfig:
    image_size: int = 64
    channels: int = 32
    hidden_channels: int = 8
    downsample: int = 4
    kernel_size: int = 3
    num_heads: int = 3  # MCL baseline head count
    encoder_bias: bool = True
    # no pretrained weights exist for the toy encoder, so it trains by default
    frozen_encoder: bool = False

    def __post_init__(self):
        if self.downsample not in (1, 2, 4, 8):
            raise InvalidArgumentError(f"downsample must be 1, 2, 4 or 8, got {self.downsample}")
        if self.image_size % self.downsample:
            raise InvalidArgumentError("image_size must be divisible by downsample")
        if self.kernel_size % 2 != 1:
            raise InvalidArgumentError("kernel_size must be odd")

    @property
    def embed_size(self) -> int:
        return self.image_size // self.downsample

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


def _conv(cin, cout, k, stride=1, bias=True):
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, bias=bias)


class SeqSegModel(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = cfg = config or ModelConfig()
        C, Ch, k = cfg.channels, cfg.hidden_channels, cfg.kernel_size
        n_strided = int(math.log2(cfg.downsample))
        strides = [2] * n_strided + [1] * (3 - n_strided)
        self.encoder = nn.ModuleList([
            _conv(1, C, 3, strides[0], cfg.encoder_bias),
            _conv(C, C, 3, strides[1], cfg.encoder_bias),
            _conv(C, C, 3, strides[2], cfg.encoder_bias),
        ])
        self.bbox_proj = _conv(1, C, k)
        self.decoder_trunk = _conv(C, C, k)
        self.head = _conv(C, 1, k)
        self.mcl_head = _conv(C, cfg.num_heads, k)
        # conv1: prompt path, conv2: hidden-state path; both linear
        self.prompt_conv = _conv(Ch + 1, C, k)
        self.hidden_conv = _conv(Ch + 1, Ch, k)
        for conv in (self.prompt_conv, self.hidden_conv, self.head, self.mcl_head):
            nn.init.zeros_(conv.bias)
        self.set_frozen_encoder(cfg.frozen_encoder)
        self.encode_calls = 0

    def set_frozen_encoder(self, frozen: bool) -> None:
        self.config.frozen_encoder = frozen
        for p in self.encoder.parameters():
            p.requires_grad_(not frozen)

    # -- backbone ---------------------------------------------------------

    def _as_batch(self, image) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(image) if not isinstance(image, torch.Tensor) else image)
        x = x.to(self.head.weight.dtype)
        if x.dim() == 2:
            x = x.unsqueeze(0)
        s = self.config.image_size
        if x.dim() != 3 or x.shape[-2:] != (s, s):
            raise InvalidArgumentError(f"expected image of shape ({s}, {s}), got {tuple(x.shape)}")
        return x

    def encode(self, image) -> torch.Tensor:
        """(N, S, S) or (S, S) image -> (N, C, S/d, S/d) embedding."""
        x = self._as_batch(image).unsqueeze(1)
        self.encode_calls += 1
        with torch.set_grad_enabled(torch.is_grad_enabled() and not self.config.frozen_encoder):
            for i, conv in enumerate(self.encoder):
                x = conv(x)
                if i < len(self.encoder) - 1:
                    x = F.gelu(x)
        return x

    def bbox_raster(self, bboxes) -> torch.Tensor:
        """Rasterise (x_min, y_min, x_max, y_max) boxes at embedding resolution.

        A cell is set when it overlaps the box. Returns (N, 1, h, w).
        """
        b = np.atleast_2d(np.asarray(bboxes, dtype=np.int64))
        s, d, h = self.config.image_size, self.config.downsample, self.config.embed_size
        if b.shape[1] != 4:
            raise InvalidArgumentError(f"bbox must have 4 coordinates, got {b.shape[1]}")
        x0, y0, x1, y1 = b.T
        if (x0 < 0).any() or (y0 < 0).any() or (x1 >= s).any() or (y1 >= s).any() or (x0 > x1).any() or (y0 > y1).any():
            raise InvalidArgumentError(f"invalid bbox for image size {s}: {b.tolist()}")
        out = np.zeros((len(b), 1, h, h))
        for n, (a0, c0, a1, c1) in enumerate(b):
            out[n, 0, c0 // d: c1 // d + 1, a0 // d: a1 // d + 1] = 1.0
        return torch.as_tensor(out, dtype=self.head.weight.dtype)

    def embed_bbox(self, bboxes) -> torch.Tensor:
        return self.bbox_proj(self.bbox_raster(bboxes))

    def _trunk(self, E, bbox_embed, prompt_embed):
        if bbox_embed.shape != E.shape:
            raise InvalidArgumentError(f"bbox embedding {tuple(bbox_embed.shape)} does not match {tuple(E.shape)}")
        x = E + bbox_embed
        if prompt_embed is not None:
            if prompt_embed.shape != E.shape:
                raise InvalidArgumentError(f"prompt embedding {tuple(prompt_embed.shape)} does not match {tuple(E.shape)}")
            x = x + prompt_embed
        return F.gelu(self.decoder_trunk(x))

    def decode_step(self, E, bbox_embed, prompt_embed=None) -> torch.Tensor:
        """Single-head decode; returns (N, h, w) logits."""
        return self.head(self._trunk(E, bbox_embed, prompt_embed))[:, 0]

    # -- recurrent module -------------------------------------------------

    def init_hidden(self, E) -> torch.Tensor:
        n, _, h, w = E.shape
        return E.new_zeros((n, self.config.hidden_channels, h, w))

    def recurrent_update(self, H, Z, bptt: bool = True):
        """Return (next hidden state, sequence-aware prompt embedding).

        Both come from separate linear convolutions over [H, Z] stacked on
        the channel axis. With ``bptt`` off the logits feeding the prompt
        convolution are detached; the hidden-state path stays connected.
        """
        if Z.dim() == 2:
            Z = Z.unsqueeze(0)
        if H.dim() == 3:
            H = H.unsqueeze(0)
        if H.shape[0] != Z.shape[0] or H.shape[-2:] != Z.shape[-2:] or H.shape[1] != self.config.hidden_channels:
            raise InvalidArgumentError(f"hidden state {tuple(H.shape)} incompatible with logits {tuple(Z.shape)}")
        joint = torch.cat([H, Z.unsqueeze(1)], dim=1)
        H_next = self.hidden_conv(joint)
        prompt_in = joint if bptt else torch.cat([H, Z.detach().unsqueeze(1)], dim=1)
        Z_plus = self.prompt_conv(prompt_in)
        return H_next, Z_plus

    def unroll(self, image, bbox, M: int, bptt: bool = True, return_hidden: bool = False):
        """Generate M logits masks; returns (N, M, h, w).

        The image is encoded once. Step 1 is a plain box-prompted decode;
        every later step is prompted by the recurrent embedding of the
        previous logits.
        """
        if M < 1:
            raise InvalidArgumentError(f"M must be >= 1, got {M}")
        E = self.encode(image)
        B = self.embed_bbox(bbox)
        H = self.init_hidden(E)
        hidden = [H]
        z = self.decode_step(E, B)
        out = [z]
        for _ in range(1, M):
            H, Z_plus = self.recurrent_update(H, z, bptt)
            hidden.append(H)
            z = self.decode_step(E, B, Z_plus)
            out.append(z)
        logits = torch.stack(out, dim=1)
        return (logits, hidden) if return_hidden else logits

    # -- MCL baseline -----------------------------------------------------

    def mcl_forward(self, image, bbox, M: int) -> torch.Tensor:
        """M parallel heads off a single decode; returns (N, M, h, w)."""
        if M != self.config.num_heads:
            raise InvalidArgumentError(f"model has {self.config.num_heads} MCL heads, asked for {M}")
        E = self.encode(image)
        return self.mcl_head(self._trunk(E, self.embed_bbox(bbox), None))

    def generate(self, image, bbox, M: int, variant: str = "seqsam") -> torch.Tensor:
        if variant == "mcl":
            return self.mcl_forward(image, bbox, M)
        return self.unroll(image, bbox, M)


def mcl_loss(preds, labels) -> torch.Tensor:
    """Winner-takes-all loss: mean over labels of the best head's dice loss.

    ``preds`` (..., M, H, W) probabilities, ``labels`` (..., K, H, W).
    """
    if not isinstance(preds, torch.Tensor):
        preds = torch.stack([torch.as_tensor(np.asarray(p, dtype=np.float64)) for p in preds])
    if not isinstance(labels, torch.Tensor):
        labels = torch.as_tensor(np.stack([np.asarray(y) for y in labels]))
    labels = labels.to(preds.dtype)
    if preds.shape[-2:] != labels.shape[-2:]:
        raise InvalidArgumentError(f"shape mismatch: {tuple(preds.shape)} vs {tuple(labels.shape)}")
    pair = soft_dice_loss(preds.unsqueeze(-3), labels.unsqueeze(-4))  # (..., M, K)
    return pair.min(dim=-2).values.mean(dim=-1)


def downsample_labels(labels: torch.Tensor, factor: int) -> torch.Tensor:
    """Area-threshold downsampling: a cell is set when >= half its pixels are."""
    if factor == 1:
        return labels
    lead = labels.shape[:-2]
    x = labels.reshape(-1, 1, *labels.shape[-2:]).to(torch.float64)
    pooled = F.avg_pool2d(x, factor)
    return (pooled >= 0.5).to(labels.dtype).reshape(*lead, *pooled.shape[-2:])


def upsample_nearest(x: torch.Tensor, factor: int) -> torch.Tensor:
    return x.repeat_interleave(factor, dim=-2).repeat_interleave(factor, dim=-1)
