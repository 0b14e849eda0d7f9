"""Patch-feature backbone: a compact ViT over 14x14 patches of a 224x224
input, giving the 16x16 token grid of DINOv2-style encoders.

Pretrained DINOv2 weights are not downloadable in an offline setup, so
the default backbone is seeded: weights are drawn once from a fixed
generator and recorded in the export lock file, which keeps every export
bit-reproducible.  A state-dict path can replace them when real weights
are available; the exported depth simply follows the checkpoint.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torch import nn

PATCH = 14
INPUT = 224
GRID = INPUT // PATCH  # 16


class Block(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.norm2(x))


class PatchEncoder(nn.Module):
    def __init__(self, dim=128, depth=4, heads=4):
        super().__init__()
        self.dim = dim
        self.embed = nn.Conv2d(3, dim, kernel_size=PATCH, stride=PATCH)
        self.cls = nn.Parameter(torch.zeros(1, 1, dim))
        self.pos = nn.Parameter(torch.zeros(1, GRID * GRID + 1, dim))
        self.blocks = nn.ModuleList(Block(dim, heads) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)

    def forward(self, images):
        """images: (B, 3, 224, 224) -> patch tokens (B, 16, 16, dim) and
        the global token (B, dim)."""
        x = self.embed(images)                      # (B, dim, 16, 16)
        x = x.flatten(2).transpose(1, 2)            # (B, 256, dim)
        x = torch.cat([self.cls.expand(len(x), -1, -1), x], dim=1) + self.pos
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        patches = x[:, 1:].reshape(len(x), GRID, GRID, self.dim)
        return patches, x[:, 0]


def build_backbone(seed=0, dim=128, depth=4, heads=4, state_dict_path=None):
    torch.manual_seed(seed)
    model = PatchEncoder(dim=dim, depth=depth, heads=heads)
    with torch.no_grad():
        for p in model.parameters():
            if p.ndim > 1:
                nn.init.xavier_normal_(p)
            else:
                nn.init.normal_(p, std=0.02)
    if state_dict_path:
        model.load_state_dict(torch.load(state_dict_path, map_location="cpu", weights_only=True))
    model.eval()
    return model


def fingerprint(model):
    """SHA-256 over all parameter bytes; pins the backbone revision."""
    digest = hashlib.sha256()
    for name, p in sorted(model.named_parameters()):
        digest.update(name.encode())
        digest.update(p.detach().numpy().tobytes())
    return digest.hexdigest()


def preprocess_image(img):
    """PIL image -> normalized (3, 224, 224) float tensor."""
    img = img.convert("RGB").resize((INPUT, INPUT))
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - 0.5) / 0.5
    return torch.from_numpy(arr.transpose(2, 0, 1))
