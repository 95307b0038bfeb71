"""Minimal conditional 3D convolutional net with hand-written backpropagation.

Architecture (fixed topology, widths from a JSON-serializable descriptor):
the noisy field and its condition are stacked as two input channels, passed
through one full-resolution conv, average-pooled 2x to a half-resolution
trunk of four convs (where a sinusoidal timestep embedding is injected as a
per-channel bias through small linear heads), upsampled back, merged with the
full-resolution features through an additive skip, and projected to a single
output channel by a zero-initialized conv so the untrained net predicts zero
noise.  With the default widths (16/32, embedding 64) the net has ~1e5
parameters.

Everything is plain numpy: convolutions are im2col + GEMM, and every layer's
backward pass is written out by hand (no autograd).  The math runs in the
dtype of the parameter arrays, so a float64 copy of the parameters turns the
whole net into a float64 net — which is how the finite-difference gradient
checks are run.

Timestep embedding (frozen convention so oracles can reproduce it)::

    half   = width // 2
    freq_i = 10000 ** (-i / (half - 1)),  i = 0..half-1   (freq_0 = 1)
    emb(t) = [sin(t * freq), cos(t * freq)]              # length = width
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import rng
from .errors import ConfigurationError, ShapeError

__all__ = ["default_descriptor", "validate_descriptor", "time_embedding", "CondUNet3d"]

ARCH_KIND = "cond-unet3d-v1"


def default_descriptor(base_width: int = 16, level2_width: int = 32,
                       temb_width: int = 64) -> dict:
    return {"kind": ARCH_KIND, "base_width": base_width,
            "level2_width": level2_width, "temb_width": temb_width,
            "kernel": 3, "in_channels": 2}


def validate_descriptor(d: dict) -> dict:
    if not isinstance(d, dict):
        raise ConfigurationError("architecture descriptor must be a mapping")
    known = {"kind", "base_width", "level2_width", "temb_width", "kernel", "in_channels"}
    unknown = set(d) - known
    if unknown:
        raise ConfigurationError(f"unknown descriptor keys: {sorted(unknown)}")
    if d.get("kind") != ARCH_KIND:
        raise ConfigurationError(f"unsupported architecture kind {d.get('kind')!r}")
    if d.get("kernel", 3) != 3:
        raise ConfigurationError("only kernel size 3 is supported")
    if d.get("in_channels", 2) != 2:
        raise ConfigurationError("net takes exactly two input channels (noisy, condition)")
    out = default_descriptor(int(d["base_width"]), int(d["level2_width"]),
                             int(d["temb_width"]))
    if out["base_width"] < 1 or out["level2_width"] < 1:
        raise ConfigurationError("channel widths must be positive")
    if out["temb_width"] < 2 or out["temb_width"] % 2:
        raise ConfigurationError("temb_width must be an even integer >= 2")
    return out


def time_embedding(t, width: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal embedding of (a batch of) integer timesteps; see module docstring."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = width // 2
    if half > 1:
        freqs = np.power(10000.0, -np.arange(half) / (half - 1))
    else:
        freqs = np.ones(1)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)


# -- primitive layers ---------------------------------------------------------

def _conv3d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded 3x3x3 convolution. x: (B, C, D, H, W); w: (C*27, K); b: (K,)."""
    B, C, D, H, Wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3, 3), axis=(2, 3, 4))   # (B, C, D, H, W, 3,3,3)
    patches = np.ascontiguousarray(win.transpose(0, 2, 3, 4, 1, 5, 6, 7))
    patches = patches.reshape(B * D * H * Wd, C * 27)
    y = patches @ w
    y += b
    y = y.reshape(B, D, H, Wd, -1).transpose(0, 4, 1, 2, 3)
    return np.ascontiguousarray(y), patches


def _conv3d_backward(d_y: np.ndarray, patches: np.ndarray, w: np.ndarray,
                     x_shape: tuple):
    """Gradients of _conv3d_forward. d_y: (B, K, D, H, W)."""
    B, C, D, H, Wd = x_shape
    K = d_y.shape[1]
    dym = np.ascontiguousarray(d_y.transpose(0, 2, 3, 4, 1)).reshape(-1, K)
    dw = patches.T @ dym
    db = dym.sum(axis=0)
    dpatches = dym @ w.T
    dp = dpatches.reshape(B, D, H, Wd, C, 3, 3, 3).transpose(0, 4, 1, 2, 3, 5, 6, 7)
    dxp = np.zeros((B, C, D + 2, H + 2, Wd + 2), dtype=d_y.dtype)
    for kz in range(3):
        for ky in range(3):
            for kx in range(3):
                dxp[:, :, kz:kz + D, ky:ky + H, kx:kx + Wd] += dp[:, :, :, :, :, kz, ky, kx]
    return dw, db, dxp[:, :, 1:-1, 1:-1, 1:-1]


def _avgpool2_forward(x: np.ndarray) -> np.ndarray:
    B, C, D, H, Wd = x.shape
    return x.reshape(B, C, D // 2, 2, H // 2, 2, Wd // 2, 2).mean(axis=(3, 5, 7))


def _avgpool2_backward(d_y: np.ndarray) -> np.ndarray:
    d = d_y / d_y.dtype.type(8)
    return d.repeat(2, axis=2).repeat(2, axis=3).repeat(2, axis=4)


def _upsample2_forward(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=2).repeat(2, axis=3).repeat(2, axis=4)


def _upsample2_backward(d_y: np.ndarray) -> np.ndarray:
    B, C, D, H, Wd = d_y.shape
    return d_y.reshape(B, C, D // 2, 2, H // 2, 2, Wd // 2, 2).sum(axis=(3, 5, 7))


# -- the network ---------------------------------------------------------------

class CondUNet3d:
    """Functional net: parameters live in a plain dict of arrays."""

    def __init__(self, descriptor: dict):
        self.descriptor = validate_descriptor(descriptor)
        w = self.descriptor["base_width"]
        v = self.descriptor["level2_width"]
        e = self.descriptor["temb_width"]
        # (name, shape, fan_in, zero_init); biases are always zero-initialized
        self.param_specs = [
            ("conv_in.w", (2 * 27, w), 2 * 27, False),
            ("conv_in.b", (w,), 0, True),
            ("conv_d1.w", (w * 27, v), w * 27, False),
            ("conv_d1.b", (v,), 0, True),
            ("tproj1.w", (e, v), e, False),
            ("tproj1.b", (v,), 0, True),
            ("conv_d2.w", (v * 27, v), v * 27, False),
            ("conv_d2.b", (v,), 0, True),
            ("tproj2.w", (e, v), e, False),
            ("tproj2.b", (v,), 0, True),
            ("conv_d3.w", (v * 27, v), v * 27, False),
            ("conv_d3.b", (v,), 0, True),
            ("conv_d4.w", (v * 27, w), v * 27, False),
            ("conv_d4.b", (w,), 0, True),
            ("conv_m.w", (w * 27, w), w * 27, False),
            ("conv_m.b", (w,), 0, True),
            ("tproj3.w", (e, w), e, False),
            ("tproj3.b", (w,), 0, True),
            ("conv_out.w", (w * 27, 1), w * 27, True),
            ("conv_out.b", (1,), 0, True),
        ]

    # -- parameter plumbing ----------------------------------------------------

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape, _, _ in self.param_specs)

    def init_params(self, seed: int) -> dict:
        """Fan-in-scaled uniform weights U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
        zero biases, zero final layer; a fixed function of the seed."""
        g = rng.generator(seed, domain="init")
        params = {}
        for name, shape, fan_in, zero in self.param_specs:
            if zero:
                params[name] = np.zeros(shape, dtype=np.float32)
            else:
                lim = 1.0 / np.sqrt(fan_in)
                params[name] = g.uniform(-lim, lim, size=shape).astype(np.float32)
        return params

    def flatten(self, params: dict) -> np.ndarray:
        return np.concatenate([np.asarray(params[name]).ravel()
                               for name, _, _, _ in self.param_specs])

    def unflatten(self, vec: np.ndarray) -> dict:
        if vec.size != self.param_count():
            raise ShapeError(f"parameter vector has {vec.size} entries, "
                             f"expected {self.param_count()}")
        params, pos = {}, 0
        for name, shape, _, _ in self.param_specs:
            n = int(np.prod(shape))
            params[name] = vec[pos:pos + n].reshape(shape).copy()
            pos += n
        return params

    # -- forward / backward ----------------------------------------------------

    def _check_inputs(self, noisy: np.ndarray, cond: np.ndarray):
        if noisy.shape != cond.shape:
            raise ShapeError(f"noisy shape {noisy.shape} != condition shape {cond.shape}")
        if noisy.ndim != 4:
            raise ShapeError(f"expected batched fields (B, d0, d1, d2), got {noisy.shape}")
        if any(d % 2 or d < 2 for d in noisy.shape[1:]):
            raise ShapeError(f"field dims must be even and >= 2 for pooling, got {noisy.shape[1:]}")

    def forward(self, params: dict, noisy, cond, t, want_cache: bool = False):
        """Predict noise for a batch of conditioned fields.

        noisy, cond: (B, d0, d1, d2); t: scalar or (B,) integer timesteps.
        Returns (B, d0, d1, d2) in the parameter dtype.
        """
        dtype = params["conv_in.w"].dtype
        noisy = np.asarray(noisy, dtype=dtype)
        cond = np.asarray(cond, dtype=dtype)
        self._check_inputs(noisy, cond)
        B = noisy.shape[0]
        t = np.broadcast_to(np.atleast_1d(t), (B,))
        temb = time_embedding(t, self.descriptor["temb_width"], dtype)

        x = np.stack([noisy, cond], axis=1)
        c = {"x_shape": {}, "P": {}, "mask": {}, "temb": temb}

        def conv(name, h):
            y, patches = _conv3d_forward(h, params[name + ".w"], params[name + ".b"])
            if want_cache:
                c["x_shape"][name] = h.shape
                c["P"][name] = patches
            return y

        def tproj(name):
            return (temb @ params[name + ".w"] + params[name + ".b"])[:, :, None, None, None]

        def relu(name, a):
            if want_cache:
                c["mask"][name] = a > 0
            return np.maximum(a, 0)

        h1 = relu("r_in", conv("conv_in", x))
        p = _avgpool2_forward(h1)
        h2 = relu("r_d1", conv("conv_d1", p) + tproj("tproj1"))
        h3 = relu("r_d2", conv("conv_d2", h2) + tproj("tproj2"))
        h4 = relu("r_d3", conv("conv_d3", h3))
        h5 = relu("r_d4", conv("conv_d4", h4))
        s = _upsample2_forward(h5) + h1
        h6 = relu("r_m", conv("conv_m", s) + tproj("tproj3"))
        out = conv("conv_out", h6)[:, 0]
        if want_cache:
            return out, c
        return out

    def backward(self, params: dict, cache: dict, d_out) -> dict:
        """Gradients of a scalar loss w.r.t. every parameter, given d loss/d out."""
        dtype = params["conv_in.w"].dtype
        d_out = np.asarray(d_out, dtype=dtype)
        temb = cache["temb"]
        grads = {}

        def conv_back(name, d_y):
            dw, db, dx = _conv3d_backward(d_y, cache["P"][name], params[name + ".w"],
                                          cache["x_shape"][name])
            grads[name + ".w"] = dw
            grads[name + ".b"] = db
            return dx

        def tproj_back(name, d_a):
            d_per_sample = d_a.sum(axis=(2, 3, 4))        # (B, K)
            grads[name + ".w"] = temb.T @ d_per_sample
            grads[name + ".b"] = d_per_sample.sum(axis=0)

        def relu_back(name, d_h):
            return d_h * cache["mask"][name]

        d_h6 = conv_back("conv_out", d_out[:, None])
        d_a6 = relu_back("r_m", d_h6)
        tproj_back("tproj3", d_a6)
        d_s = conv_back("conv_m", d_a6)
        d_h5 = _upsample2_backward(d_s)
        d_h1 = d_s  # additive skip
        d_a5 = relu_back("r_d4", d_h5)
        d_h4 = conv_back("conv_d4", d_a5)
        d_a4 = relu_back("r_d3", d_h4)
        d_h3 = conv_back("conv_d3", d_a4)
        d_a3 = relu_back("r_d2", d_h3)
        tproj_back("tproj2", d_a3)
        d_h2 = conv_back("conv_d2", d_a3)
        d_a2 = relu_back("r_d1", d_h2)
        tproj_back("tproj1", d_a2)
        d_p = conv_back("conv_d1", d_a2)
        d_h1 = d_h1 + _avgpool2_backward(d_p)
        d_a1 = relu_back("r_in", d_h1)
        conv_back("conv_in", d_a1)
        return grads
