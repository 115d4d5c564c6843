"""Latent codec for the diffusion engine. The default is an exact identity
passthrough (pixel-space diffusion, latent objective == pixel objective,
testably bit-for-bit). The learned variant is a small strided-conv
autoencoder to a quarter-resolution 4-channel latent with a mirrored
upsampling decoder, trained on reconstruction MSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (
    F32,
    conv_backward,
    conv_forward,
    relu_backward,
    relu_forward,
    upsample2_backward,
    upsample2_forward,
)
from .numerics import SeededRng

IDENTITY = "identity"
LEARNED = "learned"


class CodecDivergenceError(RuntimeError):
    """Codec training loss became non-finite or exploded."""


@dataclass(frozen=True)
class CodecConfig:
    kind: str = IDENTITY
    image_channels: int = 1
    latent_channels: int = 4
    widths: tuple = (16, 32)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "image_channels": self.image_channels,
                "latent_channels": self.latent_channels, "widths": list(self.widths)}

    @staticmethod
    def from_dict(d: dict) -> "CodecConfig":
        return CodecConfig(kind=d["kind"], image_channels=d["image_channels"],
                           latent_channels=d["latent_channels"], widths=tuple(d["widths"]))


@dataclass
class Codec:
    config: CodecConfig
    params: dict  # empty for identity

    @property
    def is_identity(self) -> bool:
        return self.config.kind == IDENTITY

    @property
    def latent_channels(self) -> int:
        return self.config.image_channels if self.is_identity else self.config.latent_channels

    def encode(self, x: np.ndarray) -> np.ndarray:
        """[B,C,H,W] image batch to latent batch; identity returns x as-is."""
        if self.is_identity:
            return x
        h, _ = _encode_forward(self.params, self.config, np.asarray(x, dtype=F32))
        return h

    def decode(self, z: np.ndarray) -> np.ndarray:
        if self.is_identity:
            return z
        y, _ = _decode_forward(self.params, self.config, np.asarray(z, dtype=F32))
        return y


def identity_codec(image_channels: int = 1) -> Codec:
    return Codec(CodecConfig(kind=IDENTITY, image_channels=image_channels), {})


def init_learned_codec(rng: SeededRng, config: CodecConfig = None) -> Codec:
    config = config or CodecConfig(kind=LEARNED)
    if config.kind != LEARNED:
        raise ValueError("init_learned_codec needs a learned-kind config")
    w0, w1 = config.widths
    ci, cl = config.image_channels, config.latent_channels
    p = {}
    streams = iter(rng.split(i) for i in range(20))

    def conv(name, a, b):
        r = next(streams)
        p[f"{name}.w"] = (r.normal((b, a, 3, 3)) * np.sqrt(2.0 / (a * 9))).astype(F32)
        p[f"{name}.b"] = np.zeros(b, dtype=F32)

    conv("e0", ci, w0)
    conv("e1", w0, w1)
    conv("e2", w1, cl)
    conv("d0", cl, w1)
    conv("d1", w1, w0)
    conv("d2", w0, w0)
    conv("d3", w0, ci)
    return Codec(config, p)


def _encode_forward(p, config, x):
    caches = []
    h, c = conv_forward(x, p["e0.w"], p["e0.b"], stride=2)
    caches.append(("conv", c))
    h, c = relu_forward(h)
    caches.append(("relu", c))
    h, c = conv_forward(h, p["e1.w"], p["e1.b"], stride=2)
    caches.append(("conv", c))
    h, c = relu_forward(h)
    caches.append(("relu", c))
    h, c = conv_forward(h, p["e2.w"], p["e2.b"])
    caches.append(("conv", c))
    return h, caches


def _decode_forward(p, config, z):
    caches = []
    h, c = conv_forward(z, p["d0.w"], p["d0.b"])
    caches.append(("conv", c))
    h, c = relu_forward(h)
    caches.append(("relu", c))
    h, shape = upsample2_forward(h)
    caches.append(("up", shape))
    h, c = conv_forward(h, p["d1.w"], p["d1.b"])
    caches.append(("conv", c))
    h, c = relu_forward(h)
    caches.append(("relu", c))
    h, shape = upsample2_forward(h)
    caches.append(("up", shape))
    h, c = conv_forward(h, p["d2.w"], p["d2.b"])
    caches.append(("conv", c))
    h, c = relu_forward(h)
    caches.append(("relu", c))
    h, c = conv_forward(h, p["d3.w"], p["d3.b"])
    caches.append(("conv", c))
    return h, caches


_ENC_NAMES = ["e0", None, "e1", None, "e2"]
_DEC_NAMES = ["d0", None, None, "d1", None, None, "d2", None, "d3"]


def _backward(caches, names, dy, grads):
    for (kind, cache), name in zip(reversed(caches), reversed(names)):
        if kind == "relu":
            dy = relu_backward(dy, cache)
        elif kind == "up":
            dy = upsample2_backward(dy, cache)
        else:
            dy, dw, db = conv_backward(dy, cache)
            grads[f"{name}.w"] = dw
            grads[f"{name}.b"] = db
    return dy


def reconstruction_loss(codec: Codec, x: np.ndarray):
    """MSE reconstruction loss and parameter gradients for a learned codec."""
    p, config = codec.params, codec.config
    x = np.asarray(x, dtype=F32)
    z, enc_caches = _encode_forward(p, config, x)
    y, dec_caches = _decode_forward(p, config, z)
    diff = y - x
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    dy = (2.0 / diff.size) * diff
    grads = {}
    dz = _backward(dec_caches, _DEC_NAMES, dy, grads)
    _backward(enc_caches, _ENC_NAMES, dz, grads)
    return loss, grads


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB over a [0,1] data range."""
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def train_codec(images: np.ndarray, rng: SeededRng, steps: int = 1500,
                lr: float = 2e-3, batch_size: int = 16,
                config: CodecConfig = None, divergence_factor: float = 50.0):
    """Train a learned codec on [N,C,H,W] images. Returns (codec, loss_trace)."""
    from .training import AdamState, adam_step  # shared optimizer

    codec = init_learned_codec(rng.split(1), config)
    state = AdamState.for_params(codec.params)
    data_rng, = (rng.split(2),)
    trace = []
    init_window = []
    for step in range(steps):
        idx = data_rng.integers(0, len(images), (batch_size,))
        loss, grads = reconstruction_loss(codec, images[idx])
        if not np.isfinite(loss):
            raise CodecDivergenceError(f"non-finite codec loss at step {step}")
        trace.append(loss)
        if step < 20:
            init_window.append(loss)
        elif len(trace) >= 25:
            recent = float(np.mean(trace[-25:]))
            # min of the early window: immune to an explosion that already
            # contaminated the first steps
            if recent > divergence_factor * max(float(np.min(init_window)), 1e-12):
                raise CodecDivergenceError(
                    f"codec loss {recent:.3g} exploded past {divergence_factor}x initial"
                )
        adam_step(codec.params, grads, state, lr)
    return codec, np.asarray(trace, dtype=np.float64)


def save_codec(codec: Codec, path: str) -> None:
    """Persist a codec as .npz: config under a json key, params as arrays."""
    import json
    np.savez(path, __config__=json.dumps(codec.config.to_dict()),
             **{k: v for k, v in codec.params.items()})


def load_codec(path: str) -> Codec:
    import json
    with np.load(path, allow_pickle=False) as z:
        config = CodecConfig.from_dict(json.loads(str(z["__config__"])))
        params = {k: z[k].copy() for k in z.files if k != "__config__"}
    return Codec(config=config, params=params)
