"""The noise-prediction network: a 1D U-Net over trajectory tokens with
self-attention, timestep conditioning and cross-attention to patch
tokens at the end of every block.

Data layout: convolutions run channels-first (B, C, L); attention runs
token-major (B, L, C).  The input projection lifts (B, L, 2) gaze
coordinates to embedding width, the shared positional grid is added once
at the input, and mirrored down/up blocks exchange skip connections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import coordembed
from .features import FeatureGrid
from .numeric import (
    NumericError,
    ShapeError,
    Tensor,
    add,
    bias_add,
    channel_add,
    concat,
    conv1d,
    conv1d_transpose,
    layernorm,
    matmul,
    reshape,
    scale,
    silu,
    softmax,
    transpose,
)
from .numeric.checkpoint import load_tensors, save_tensors


@dataclass
class DenoiserConfig:
    length: int = 720
    depth: int = 3
    channels: tuple = (64, 128, 256)
    embed_dim: int = 64
    heads: int = 4
    time_dim: int = 128
    feat_depth: int = 64
    patch_hw: tuple = (32, 32)
    frame_hw: tuple = (224, 224)
    use_cpe: bool = True
    patch_level: bool = True
    cross_attention_everywhere: bool = True
    conditioning: bool = True
    cpe_input_only: bool = True
    cpe_on_uncond: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.patch_hw = tuple(int(v) for v in self.patch_hw)
        self.frame_hw = tuple(int(v) for v in self.frame_hw)
        if len(self.channels) != self.depth:
            raise ValueError(f"channels {self.channels} must list one width per level (depth {self.depth})")
        if self.length % (1 << self.depth):
            raise ValueError(f"length {self.length} not divisible by 2^depth={1 << self.depth}")
        if self.embed_dim % 4:
            raise ValueError("embed_dim must be divisible by 4 for the 2D positional grid")
        for c in (self.embed_dim, *self.channels):
            if c % self.heads:
                raise ValueError(f"width {c} not divisible by {self.heads} heads")
        if not self.cpe_input_only:
            raise ValueError("per-resolution positional lookup is not supported; cpe_input_only must stay true")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d):
        kwargs = {}
        names = {f.name: f for f in fields(cls)}
        for key, raw in d.items():
            if key not in names:
                raise ValueError(f"unknown denoiser config key {key!r}")
            default = names[key].default
            if isinstance(default, bool):
                kwargs[key] = raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, tuple):
                vals = raw if isinstance(raw, (tuple, list)) else str(raw).split(",")
                kwargs[key] = tuple(int(v) for v in vals)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# Parameter store and layers


# Residual-branch outputs start near (not exactly) zero: training begins
# close to identity while conditioning still registers in the forward pass.
_RESIDUAL_SCALE = 0.02


class ParamStore:
    def __init__(self, rng, dtype):
        self.rng = rng
        self.dtype = dtype
        self.tensors = {}

    def make(self, name, shape, std=None):
        if name in self.tensors:
            raise ValueError(f"duplicate parameter {name!r}")
        if std is None:
            arr = np.zeros(shape, dtype=self.dtype)
        elif std == "ones":
            arr = np.ones(shape, dtype=self.dtype)
        else:
            arr = self.rng.normal(0.0, std, size=shape).astype(self.dtype)
        t = Tensor(arr, requires_grad=True, name=name)
        self.tensors[name] = t
        return t


class Linear:
    def __init__(self, ps, name, din, dout, residual=False):
        std = (_RESIDUAL_SCALE if residual else 1.0) / math.sqrt(din)
        self.w = ps.make(f"{name}.w", (din, dout), std)
        self.b = ps.make(f"{name}.b", (dout,))

    def __call__(self, x):
        return bias_add(matmul(x, self.w), self.b)


class Conv:
    def __init__(self, ps, name, cin, cout, k, stride=1, pad=0, residual=False):
        std = (_RESIDUAL_SCALE if residual else 1.0) / math.sqrt(cin * k)
        self.w = ps.make(f"{name}.w", (cout, cin, k), std)
        self.b = ps.make(f"{name}.b", (cout,))
        self.stride, self.pad = stride, pad

    def __call__(self, x):
        return conv1d(x, self.w, self.b, stride=self.stride, pad=self.pad)


class ConvT:
    def __init__(self, ps, name, cin, cout, k, stride, pad):
        self.w = ps.make(f"{name}.w", (cin, cout, k), 1.0 / math.sqrt(cin * k))
        self.b = ps.make(f"{name}.b", (cout,))
        self.stride, self.pad = stride, pad

    def __call__(self, x):
        return conv1d_transpose(x, self.w, self.b, stride=self.stride, pad=self.pad)


class Norm:
    def __init__(self, ps, name, width, axis=-1):
        self.g = ps.make(f"{name}.g", (width,), "ones")
        self.b = ps.make(f"{name}.b", (width,))
        self.axis = axis

    def __call__(self, x):
        return layernorm(x, self.g, self.b, axis=self.axis)


def _split_heads(x, heads):
    B, L, C = x.shape
    return transpose(reshape(x, (B, L, heads, C // heads)), (0, 2, 1, 3))


def _merge_heads(x):
    B, H, L, dh = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (B, L, H * dh))


class SelfAttention:
    """Pre-norm multi-head attention over trajectory tokens, residual.

    Extra key/value tokens (the global-feature token of the ablation
    without patch-level features) may be appended on the KV side only.
    """

    def __init__(self, ps, name, width, heads):
        self.norm = Norm(ps, f"{name}.norm", width)
        self.q = Linear(ps, f"{name}.q", width, width)
        self.k = Linear(ps, f"{name}.k", width, width)
        self.v = Linear(ps, f"{name}.v", width, width)
        self.out = Linear(ps, f"{name}.out", width, width, residual=True)
        self.heads = heads
        self.scale = 1.0 / math.sqrt(width // heads)

    def __call__(self, tokens, extra_kv=None):
        h = self.norm(tokens)
        kv_src = h if extra_kv is None else concat([h, extra_kv], axis=1)
        q = _split_heads(self.q(h), self.heads)
        k = _split_heads(self.k(kv_src), self.heads)
        v = _split_heads(self.v(kv_src), self.heads)
        att = softmax(scale(matmul(q, transpose(k, (0, 1, 3, 2))), self.scale))
        ctx = _merge_heads(matmul(att, v))
        return add(tokens, self.out(ctx))


class CrossAttention:
    """Queries from trajectory tokens, keys/values projected per block
    from the shared conditioned patch tokens."""

    def __init__(self, ps, name, width, cond_dim, heads):
        self.norm = Norm(ps, f"{name}.norm", width)
        self.q = Linear(ps, f"{name}.q", width, width)
        self.k = Linear(ps, f"{name}.k", cond_dim, width)
        self.v = Linear(ps, f"{name}.v", cond_dim, width)
        self.out = Linear(ps, f"{name}.out", width, width, residual=True)
        self.heads = heads
        self.scale = 1.0 / math.sqrt(width // heads)

    def __call__(self, tokens, cond):
        q = _split_heads(self.q(self.norm(tokens)), self.heads)
        k = _split_heads(self.k(cond), self.heads)
        v = _split_heads(self.v(cond), self.heads)
        att = softmax(scale(matmul(q, transpose(k, (0, 1, 3, 2))), self.scale))
        ctx = _merge_heads(matmul(att, v))
        return add(tokens, self.out(ctx))


class ResBlock:
    def __init__(self, ps, name, cin, cout, time_dim):
        self.norm1 = Norm(ps, f"{name}.norm1", cin, axis=1)
        self.conv1 = Conv(ps, f"{name}.conv1", cin, cout, 3, pad=1)
        self.temb = Linear(ps, f"{name}.temb", time_dim, cout)
        self.norm2 = Norm(ps, f"{name}.norm2", cout, axis=1)
        self.conv2 = Conv(ps, f"{name}.conv2", cout, cout, 3, pad=1, residual=True)
        self.skip = Conv(ps, f"{name}.skip", cin, cout, 1) if cin != cout else None

    def __call__(self, x, temb):
        y = self.conv1(silu(self.norm1(x)))
        y = channel_add(y, self.temb(temb))
        y = self.conv2(silu(self.norm2(y)))
        return add(y, self.skip(x) if self.skip else x)


class Stage:
    """One U-Net stage: residual conv block, self-attention, then
    cross-attention when conditioning reaches this block.

    In the global-token mode the stimulus enters as one extra key/value
    token concatenated to the trajectory tokens inside self-attention
    instead of through cross-attention."""

    def __init__(self, ps, name, cin, cout, cfg, cross, global_kv):
        self.res = ResBlock(ps, f"{name}.res", cin, cout, cfg.time_dim)
        self.attn = SelfAttention(ps, f"{name}.attn", cout, cfg.heads)
        self.cross = CrossAttention(ps, f"{name}.cross", cout, cfg.embed_dim, cfg.heads) if cross else None
        self.gkv = Linear(ps, f"{name}.gkv", cfg.embed_dim, cout) if global_kv else None

    def __call__(self, x, temb, cond):
        x = self.res(x, temb)
        tokens = transpose(x, (0, 2, 1))
        extra = self.gkv(cond) if self.gkv is not None and cond is not None else None
        tokens = self.attn(tokens, extra_kv=extra)
        if self.cross is not None and cond is not None:
            tokens = self.cross(tokens, cond)
        return transpose(tokens, (0, 2, 1))


# ---------------------------------------------------------------------------
# The denoiser


class TrajectoryDenoiser:
    def __init__(self, config, seed=0):
        self.config = config
        cfg = config
        ps = ParamStore(np.random.default_rng(seed), cfg.np_dtype)
        self.params = ps
        self.pos_grid = (
            coordembed.build_grid(*cfg.frame_hw, cfg.embed_dim, dtype=cfg.np_dtype)
            if cfg.use_cpe
            else None
        )
        self.patch_pos = (
            coordembed.for_patches(self.pos_grid, cfg.patch_hw).reshape(-1, cfg.embed_dim)
            if cfg.use_cpe
            else None
        )

        self.stem = Conv(ps, "stem", 2, cfg.channels[0], 3, pad=1)
        self.time_in = Linear(ps, "time.in", cfg.embed_dim, cfg.time_dim)
        self.time_out = Linear(ps, "time.out", cfg.time_dim, cfg.time_dim)

        cond = cfg.conditioning
        if cond and cfg.patch_level:
            self.feat_proj = Linear(ps, "feat.proj", cfg.feat_depth, cfg.embed_dim)
            self.global_proj = None
        elif cond:
            self.feat_proj = None
            self.global_proj = Linear(ps, "feat.global", cfg.feat_depth, cfg.embed_dim)
        else:
            self.feat_proj = None
            self.global_proj = None
        cross_inside = cond and cfg.patch_level and cfg.cross_attention_everywhere
        global_kv = cond and not cfg.patch_level
        self.entry_cross = (
            CrossAttention(ps, "entry.cross", cfg.channels[0], cfg.embed_dim, cfg.heads)
            if cond and cfg.patch_level and not cfg.cross_attention_everywhere
            else None
        )

        chans = cfg.channels
        self.downs, self.downsamples = [], []
        for i in range(cfg.depth):
            cin = chans[0] if i == 0 else chans[i]
            self.downs.append(Stage(ps, f"down{i}", cin, chans[i], cfg, cross_inside, global_kv))
            cnext = chans[i + 1] if i + 1 < cfg.depth else chans[-1]
            self.downsamples.append(Conv(ps, f"down{i}.pool", chans[i], cnext, 3, stride=2, pad=1))
        self.mid = Stage(ps, "mid", chans[-1], chans[-1], cfg, cross_inside, global_kv)
        self.ups, self.upsamples = [], []
        for i in reversed(range(cfg.depth)):
            ccur = chans[i + 1] if i + 1 < cfg.depth else chans[-1]
            self.upsamples.append(ConvT(ps, f"up{i}.unpool", ccur, chans[i], 4, stride=2, pad=1))
            self.ups.append(Stage(ps, f"up{i}", 2 * chans[i], chans[i], cfg, cross_inside, global_kv))
        self.head_norm = Norm(ps, "head.norm", chans[0], axis=1)
        self.head = Conv(ps, "head", chans[0], 2, 3, pad=1, residual=True)

    # -- parameters ---------------------------------------------------------

    def named_params(self):
        return dict(self.params.tensors)

    def param_list(self):
        return list(self.params.tensors.values())

    def state_dict(self):
        return {k: t.data.copy() for k, t in self.params.tensors.items()}

    def load_state_dict(self, state):
        own = self.params.tensors
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ValueError(f"state dict mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, t in own.items():
            arr = np.asarray(state[k], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} != model shape {t.data.shape}")
            t.data = arr.copy()

    def save(self, path):
        save_tensors(path, self.state_dict())

    def load(self, path):
        self.load_state_dict(load_tensors(path))

    # -- conditioning -------------------------------------------------------

    def _grid_values(self, grids, batch):
        cfg = self.config
        Hp, Wp = cfg.patch_hw
        vals = np.zeros((batch, Hp, Wp, cfg.feat_depth), dtype=cfg.np_dtype)
        if grids is None:
            return vals
        if isinstance(grids, FeatureGrid):
            grids = [grids] * batch
        if len(grids) != batch:
            raise ShapeError(f"got {len(grids)} grids for batch of {batch}")
        for i, g in enumerate(grids):
            if g is None:
                continue
            if g.values.shape != (Hp, Wp, cfg.feat_depth):
                raise ShapeError(
                    f"grid {g.stimulus_id!r} has shape {g.values.shape}, "
                    f"model expects {(Hp, Wp, cfg.feat_depth)}"
                )
            vals[i] = g.values
        return vals

    def condition_tokens(self, grids, batch):
        """Conditioned patch tokens (B, Np, D) or a single global token
        (B, 1, D); None when this model ignores the stimulus."""
        cfg = self.config
        if not cfg.conditioning:
            return None
        vals = self._grid_values(grids, batch)
        if cfg.patch_level:
            flat = vals.reshape(batch, -1, cfg.feat_depth)
            tokens = self.feat_proj(Tensor(flat))
            if cfg.use_cpe:
                pos = np.broadcast_to(self.patch_pos, tokens.shape).copy()
                if not cfg.cpe_on_uncond:
                    dead = ~np.any(vals.reshape(batch, -1), axis=1)
                    pos[dead] = 0.0
                tokens = add(tokens, Tensor(pos))
            return tokens
        pooled = vals.mean(axis=(1, 2))  # (B, feat_depth)
        return reshape(self.global_proj(Tensor(pooled)), (batch, 1, cfg.embed_dim))

    # -- forward ------------------------------------------------------------

    def _time_embedding(self, t, batch):
        cfg = self.config
        t = np.broadcast_to(np.asarray(t, dtype=np.int64).reshape(-1), (batch,))
        code = coordembed.sinusoid_table(t, cfg.embed_dim).astype(cfg.np_dtype)
        return self.time_out(silu(self.time_in(Tensor(code))))

    @staticmethod
    def _guard(name, tensor):
        if not np.isfinite(tensor.data).all():
            raise NumericError(f"non-finite activation in {name}")
        return tensor

    def embed_input(self, rt):
        """Input projection plus (optionally) the positional lookup; the
        coordinates index the shared grid even when they wander outside
        the frame mid-diffusion."""
        cfg = self.config
        rt = np.asarray(rt, dtype=cfg.np_dtype)
        x = Tensor(np.ascontiguousarray(rt.transpose(0, 2, 1)))
        h = self.stem(x)
        if cfg.use_cpe:
            codes = coordembed.lookup(self.pos_grid, rt)  # (B, L, D)
            h = add(h, Tensor(np.ascontiguousarray(codes.transpose(0, 2, 1))))
        return h

    def forward(self, rt, t, grids=None):
        """Predict the injected noise for a batch.

        rt: (B, L, 2) noisy trajectories; t: scalar or (B,) diffusion
        steps; grids: FeatureGrid, list of per-sample grids (None entries
        mean unconditional), or None for a fully unconditional pass.
        """
        cfg = self.config
        rt = np.asarray(rt, dtype=cfg.np_dtype)
        if rt.ndim != 3 or rt.shape[1] != cfg.length or rt.shape[2] != 2:
            raise ShapeError(f"expected (B, {cfg.length}, 2) input, got {rt.shape}")
        B = rt.shape[0]
        temb = self._time_embedding(t, B)
        cond = self.condition_tokens(grids, B)
        h = self._guard("stem", self.embed_input(rt))
        if self.entry_cross is not None and cond is not None:
            tokens = self.entry_cross(transpose(h, (0, 2, 1)), cond)
            h = transpose(tokens, (0, 2, 1))
        skips = []
        for i, (stage, pool) in enumerate(zip(self.downs, self.downsamples)):
            h = self._guard(f"down{i}", stage(h, temb, cond))
            skips.append(h)
            h = pool(h)
        h = self._guard("mid", self.mid(h, temb, cond))
        for stage, unpool in zip(self.ups, self.upsamples):
            h = unpool(h)
            h = concat([h, skips.pop()], axis=1)
            h = self._guard("up", stage(h, temb, cond))
        out = self.head(silu(self.head_norm(h)))
        out = self._guard("head", transpose(out, (0, 2, 1)))
        return out

    def denoise(self, rt, t, grid=None):
        """Single-trajectory or batched inference; returns numpy."""
        rt = np.asarray(rt)
        single = rt.ndim == 2
        if single:
            rt = rt[None]
        out = self.forward(rt, t, grid).data
        return out[0] if single else out
