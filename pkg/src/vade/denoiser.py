"""Noise-prediction UNet: two downsampling levels with additive skips,
FiLM conditioning at every level from concat(time embedding, text condition),
optional fixed coordinate channels, optional extra control channel whose
input weights start at zero. The final conv is zero-initialized so an
untrained model predicts eps == 0 exactly.

Parameters live in a flat name->float32-array dict; backward returns a
matching gradient dict plus the gradient w.r.t. the text condition so the
embedding head can train jointly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import (
    F32,
    conv_backward,
    conv_forward,
    coord_channels,
    film_backward,
    film_forward,
    relu_backward,
    relu_forward,
    time_embedding,
    upsample2_backward,
    upsample2_forward,
)
from .numerics import SeededRng


@dataclass(frozen=True)
class DenoiserConfig:
    in_channels: int = 1
    widths: tuple = (16, 32, 64)
    cond_dim: int = 32
    time_dim: int = 32
    coord: bool = True
    control: bool = False
    kernel: int = 3

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels, "widths": list(self.widths),
                "cond_dim": self.cond_dim, "time_dim": self.time_dim,
                "coord": self.coord, "control": self.control, "kernel": self.kernel}

    @staticmethod
    def from_dict(d: dict) -> "DenoiserConfig":
        return DenoiserConfig(
            in_channels=d["in_channels"], widths=tuple(d["widths"]),
            cond_dim=d["cond_dim"], time_dim=d["time_dim"],
            coord=d["coord"], control=d["control"], kernel=d["kernel"],
        )


def _he(rng: SeededRng, shape, fan_in: int) -> np.ndarray:
    return (rng.normal(shape) * np.sqrt(2.0 / fan_in)).astype(F32)


def init_denoiser(config: DenoiserConfig, rng: SeededRng) -> dict:
    k = config.kernel
    w0, w1, w2 = config.widths
    cin = config.in_channels + (2 if config.coord else 0) + (1 if config.control else 0)
    cvec = config.time_dim + config.cond_dim
    p = {}
    layer_rng = iter(rng.split(i) for i in range(100))

    def conv(name, ci, co):
        p[f"{name}.w"] = _he(next(layer_rng), (co, ci, k, k), ci * k * k)
        p[f"{name}.b"] = np.zeros(co, dtype=F32)

    def film(name, ch):
        p[f"{name}.w"] = np.zeros((cvec, 2 * ch), dtype=F32)  # identity at init
        p[f"{name}.b"] = np.zeros(2 * ch, dtype=F32)

    conv("enc0", cin, w0)
    film("film0", w0)
    conv("enc1", w0, w1)
    film("film1", w1)
    conv("enc2", w1, w2)
    film("film2", w2)
    conv("dec1", w2, w1)
    film("film3", w1)
    conv("dec0", w1, w0)
    film("film4", w0)
    conv("out", w0, config.in_channels)
    p["out.w"][:] = 0.0  # untrained model must predict exactly zero noise
    if config.control:
        # control enters through the last input channel; start inert
        p["enc0.w"][:, -1] = 0.0
    return p


def param_count(params: dict) -> int:
    return int(sum(v.size for v in params.values()))


def denoise_forward(params: dict, config: DenoiserConfig, x: np.ndarray,
                    t_idx: np.ndarray, cond: np.ndarray, T: int,
                    control: np.ndarray = None):
    """Predict eps for x [B,C,H,W] at step indices t_idx with condition cond.

    Returns (eps, cache); cache feeds denoise_backward.
    """
    dtype = params["enc0.w"].dtype  # follow params so tests can run in float64
    x = np.asarray(x, dtype=dtype)
    cond = np.asarray(cond, dtype=dtype)
    bsz, _, h, w = x.shape
    if h % 4 != 0 or w % 4 != 0:
        raise ValueError(f"spatial size must be divisible by 4, got {h}x{w}")
    feats = [x]
    if config.coord:
        feats.append(coord_channels(bsz, h, w).astype(dtype))
    if config.control:
        if control is None:
            control = np.zeros((bsz, 1, h, w), dtype=dtype)
        feats.append(np.asarray(control, dtype=dtype).reshape(bsz, 1, h, w))
    elif control is not None:
        raise ValueError("control input given but config.control is False")
    xin = np.concatenate(feats, axis=1)
    temb = time_embedding(np.asarray(t_idx), T, config.time_dim).astype(dtype)
    cvec = np.concatenate([temb, cond], axis=1)

    caches = {}

    def block(name, film_name, xin_, stride=1):
        y, c1 = conv_forward(xin_, params[f"{name}.w"], params[f"{name}.b"], stride)
        y, c2 = film_forward(y, cvec, params[f"{film_name}.w"], params[f"{film_name}.b"])
        y, c3 = relu_forward(y)
        caches[name] = (c1, c2, c3)
        return y

    h0 = block("enc0", "film0", xin)
    h1 = block("enc1", "film1", h0, stride=2)
    h2 = block("enc2", "film2", h1, stride=2)

    u1, caches["up1"] = upsample2_forward(h2)
    d1, c1 = conv_forward(u1, params["dec1.w"], params["dec1.b"])
    d1 = d1 + h1  # skip
    d1, c2 = film_forward(d1, cvec, params["film3.w"], params["film3.b"])
    d1, c3 = relu_forward(d1)
    caches["dec1"] = (c1, c2, c3)

    u0, caches["up0"] = upsample2_forward(d1)
    d0, c1 = conv_forward(u0, params["dec0.w"], params["dec0.b"])
    d0 = d0 + h0  # skip
    d0, c2 = film_forward(d0, cvec, params["film4.w"], params["film4.b"])
    d0, c3 = relu_forward(d0)
    caches["dec0"] = (c1, c2, c3)

    eps, caches["out"] = conv_forward(d0, params["out.w"], params["out.b"])
    caches["meta"] = (config, x.shape, cvec.shape)
    return eps, caches


def denoise_backward(params: dict, caches: dict, deps: np.ndarray):
    """Backprop through denoise_forward. Returns (grads, dcond)."""
    config, xshape, cvec_shape = caches["meta"]
    dtype = params["enc0.w"].dtype
    deps = np.asarray(deps, dtype=dtype)
    grads = {}
    dcvec_total = np.zeros(cvec_shape, dtype=dtype)

    def block_back(name, film_name, dy):
        nonlocal dcvec_total
        c1, c2, c3 = caches[name]
        dy = relu_backward(dy, c3)
        dy, dcvec, dfw, dfb = film_backward(dy, c2)
        grads[f"{film_name}.w"] = dfw
        grads[f"{film_name}.b"] = dfb
        dcvec_total += dcvec
        dx, dw, db = conv_backward(dy, c1)
        grads[f"{name}.w"] = dw
        grads[f"{name}.b"] = db
        return dx

    dd0, dow, dob = conv_backward(deps, caches["out"])
    grads["out.w"] = dow
    grads["out.b"] = dob

    c1, c2, c3 = caches["dec0"]
    dd0 = relu_backward(dd0, c3)
    dd0, dcvec, dfw, dfb = film_backward(dd0, c2)
    grads["film4.w"] = dfw
    grads["film4.b"] = dfb
    dcvec_total += dcvec
    dskip0 = dd0  # add-skip passes gradient through unchanged
    du0, dw, db = conv_backward(dd0, c1)
    grads["dec0.w"] = dw
    grads["dec0.b"] = db
    dd1 = upsample2_backward(du0, caches["up0"])

    c1, c2, c3 = caches["dec1"]
    dd1 = relu_backward(dd1, c3)
    dd1, dcvec, dfw, dfb = film_backward(dd1, c2)
    grads["film3.w"] = dfw
    grads["film3.b"] = dfb
    dcvec_total += dcvec
    dskip1 = dd1
    du1, dw, db = conv_backward(dd1, c1)
    grads["dec1.w"] = dw
    grads["dec1.b"] = db
    dh2 = upsample2_backward(du1, caches["up1"])

    dh1 = block_back("enc2", "film2", dh2) + dskip1
    dh0 = block_back("enc1", "film1", dh1) + dskip0
    _ = block_back("enc0", "film0", dh0)

    dcond = dcvec_total[:, -config.cond_dim:].copy()
    return grads, dcond
