"""A small U-Net on top of the autograd ops.

Three resolution levels with channel widths base*(1,2,4); each level is a
residual pair of GN -> SiLU -> conv3x3 units, with average-pool
downsampling, nearest-neighbor upsampling, and encoder-to-decoder skip
concatenation. Group normalization uses 4 groups (batch statistics are too
noisy at desk-scale batch sizes). When time conditioning is enabled, a
sinusoidal embedding of the timestep is projected per level and added as a
per-channel bias.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import ParamStore
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat_channels,
    conv2d,
    group_norm,
    linear,
    reshape,
    silu,
    upsample2_nearest,
    avgpool2,
)

SIN_EMBED_DIM = 32


def sinusoidal_time_embedding(t, dim=SIN_EMBED_DIM, max_period=10000.0):
    """Map integer timesteps (N,) to (N, dim) sin/cos features."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / max(half - 1, 1))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class _ResBlock:
    def __init__(self, store, prefix, cin, cout, groups, time_dim, rng, dtype):
        self.cin, self.cout, self.groups = cin, cout, groups
        he1 = math.sqrt(2.0 / (cin * 9))
        he2 = math.sqrt(2.0 / (cout * 9))
        self.gn1_g = store.add(f"{prefix}.gn1.gamma", np.ones(cin, dtype=dtype))
        self.gn1_b = store.add(f"{prefix}.gn1.beta", np.zeros(cin, dtype=dtype))
        self.conv1_w = store.add(f"{prefix}.conv1.w", rng.normal(0, he1, (cout, cin, 3, 3)).astype(dtype))
        self.conv1_b = store.add(f"{prefix}.conv1.b", np.zeros(cout, dtype=dtype))
        self.tproj_w = self.tproj_b = None
        if time_dim is not None:
            het = math.sqrt(1.0 / time_dim)
            self.tproj_w = store.add(f"{prefix}.temb.w", rng.normal(0, het, (time_dim, cout)).astype(dtype))
            self.tproj_b = store.add(f"{prefix}.temb.b", np.zeros(cout, dtype=dtype))
        self.gn2_g = store.add(f"{prefix}.gn2.gamma", np.ones(cout, dtype=dtype))
        self.gn2_b = store.add(f"{prefix}.gn2.beta", np.zeros(cout, dtype=dtype))
        self.conv2_w = store.add(f"{prefix}.conv2.w", rng.normal(0, he2, (cout, cout, 3, 3)).astype(dtype))
        self.conv2_b = store.add(f"{prefix}.conv2.b", np.zeros(cout, dtype=dtype))
        self.skip_w = self.skip_b = None
        if cin != cout:
            hes = math.sqrt(1.0 / cin)
            self.skip_w = store.add(f"{prefix}.skip.w", rng.normal(0, hes, (cout, cin, 1, 1)).astype(dtype))
            self.skip_b = store.add(f"{prefix}.skip.b", np.zeros(cout, dtype=dtype))

    def __call__(self, x, temb):
        h = group_norm(x, self.gn1_g, self.gn1_b, groups=self.groups)
        h = silu(h)
        h = conv2d(h, self.conv1_w, self.conv1_b, stride=1, padding=1)
        if temb is not None and self.tproj_w is not None:
            tb = linear(silu(temb), self.tproj_w, self.tproj_b)
            n = tb.data.shape[0]
            h = add(h, reshape(tb, (n, self.cout, 1, 1)))
        h = group_norm(h, self.gn2_g, self.gn2_b, groups=self.groups)
        h = silu(h)
        h = conv2d(h, self.conv2_w, self.conv2_b, stride=1, padding=1)
        if self.skip_w is not None:
            sk = conv2d(x, self.skip_w, self.skip_b, stride=1, padding=0)
        else:
            sk = x
        return add(h, sk)


class UNet:
    """Encoder-decoder with skips; optionally time-conditioned (noise predictor)."""

    def __init__(self, in_ch, out_ch, base=16, mults=(1, 2, 4), groups=4, time_embed=False, seed=0, dtype=np.float32):
        if base % groups != 0:
            raise ValueError(f"base width {base} must be divisible by groups {groups}")
        self.in_ch, self.out_ch, self.base = in_ch, out_ch, base
        self.mults, self.groups = tuple(mults), groups
        self.time_embed = bool(time_embed)
        self.divisor = 2 ** (len(self.mults) - 1)
        self.dtype = np.dtype(dtype)
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        widths = [base * m for m in self.mults]
        s = self.store

        self.time_dim = None
        if self.time_embed:
            self.time_dim = 4 * base
            h0 = math.sqrt(1.0 / SIN_EMBED_DIM)
            h1 = math.sqrt(1.0 / self.time_dim)
            self.tmlp1_w = s.add("tmlp.1.w", rng.normal(0, h0, (SIN_EMBED_DIM, self.time_dim)).astype(dtype))
            self.tmlp1_b = s.add("tmlp.1.b", np.zeros(self.time_dim, dtype=dtype))
            self.tmlp2_w = s.add("tmlp.2.w", rng.normal(0, h1, (self.time_dim, self.time_dim)).astype(dtype))
            self.tmlp2_b = s.add("tmlp.2.b", np.zeros(self.time_dim, dtype=dtype))

        he_in = math.sqrt(2.0 / (in_ch * 9))
        self.conv_in_w = s.add("conv_in.w", rng.normal(0, he_in, (base, in_ch, 3, 3)).astype(dtype))
        self.conv_in_b = s.add("conv_in.b", np.zeros(base, dtype=dtype))

        # One residual block per level = two GN->SiLU->conv units per level.
        self.enc = []
        cin = base
        for lvl, wd in enumerate(widths):
            self.enc.append(_ResBlock(s, f"enc{lvl}", cin, wd, groups, self.time_dim, rng, dtype))
            cin = wd

        self.dec = []
        for lvl in range(len(widths) - 2, -1, -1):
            wd = widths[lvl]
            cat = cin + wd  # upsampled channels + skip channels
            self.dec.append((lvl, _ResBlock(s, f"dec{lvl}", cat, wd, groups, self.time_dim, rng, dtype)))
            cin = wd

        self.gn_out_g = s.add("out.gn.gamma", np.ones(base, dtype=dtype))
        self.gn_out_b = s.add("out.gn.beta", np.zeros(base, dtype=dtype))
        # Zero-init final conv: the net starts as the zero map, which keeps
        # the first training steps well-scaled.
        self.conv_out_w = s.add("out.conv.w", np.zeros((out_ch, base, 3, 3), dtype=dtype))
        self.conv_out_b = s.add("out.conv.b", np.zeros(out_ch, dtype=dtype))

    def forward(self, x, t=None):
        x = as_tensor(x, self.dtype)
        if x.data.ndim != 4 or x.data.shape[1] != self.in_ch:
            raise ShapeError(f"expected input (N,{self.in_ch},H,W), got shape {x.data.shape}")
        n, _, h, w = x.data.shape
        if h % self.divisor or w % self.divisor:
            raise ShapeError(f"spatial extents must be divisible by {self.divisor}, got {h}x{w}")

        temb = None
        if self.time_embed:
            if t is None:
                raise ValueError("this network is time-conditioned; pass t")
            e = sinusoidal_time_embedding(t).astype(self.dtype)
            if e.shape[0] == 1 and n > 1:
                e = np.repeat(e, n, axis=0)
            temb = linear(Tensor(e), self.tmlp1_w, self.tmlp1_b)
            temb = linear(silu(temb), self.tmlp2_w, self.tmlp2_b)

        hcur = conv2d(x, self.conv_in_w, self.conv_in_b, stride=1, padding=1)
        skips = []
        for lvl, blk in enumerate(self.enc):
            hcur = blk(hcur, temb)
            if lvl < len(self.enc) - 1:
                skips.append(hcur)
                hcur = avgpool2(hcur)
        for lvl, blk in self.dec:
            hcur = upsample2_nearest(hcur)
            hcur = concat_channels(hcur, skips[lvl])
            hcur = blk(hcur, temb)
        hcur = silu(group_norm(hcur, self.gn_out_g, self.gn_out_b, groups=self.groups))
        return conv2d(hcur, self.conv_out_w, self.conv_out_b, stride=1, padding=1)

    __call__ = forward

    def config(self):
        return {
            "in_ch": self.in_ch,
            "out_ch": self.out_ch,
            "base": self.base,
            "mults": list(self.mults),
            "groups": self.groups,
            "time_embed": self.time_embed,
        }

    def save(self, path):
        save_checkpoint(path, self.store)

    def load(self, path):
        self.store.load_arrays(load_checkpoint(path))
        return self

    @classmethod
    def from_config(cls, cfg, seed=0):
        return cls(
            in_ch=cfg["in_ch"],
            out_ch=cfg["out_ch"],
            base=cfg["base"],
            mults=tuple(cfg["mults"]),
            groups=cfg["groups"],
            time_embed=cfg["time_embed"],
            seed=seed,
        )
