"""Reverse-time sampling: full generation from noise and guide-initialized
editing (noise a guide image to an intermediate step, then integrate the
reverse SDE back to t=0 under classifier-free guidance).

The step path is an evenly spaced integer subgrid of schedule indices. Every
EM step is stochastic; a final deterministic denoise at the last index
converts the remaining eps estimate into the data-domain output, which
otherwise would keep a sigma_min-sized noise floor. Outputs are flushed of
sub-1e-6 magnitudes so that downstream float bookkeeping stays exact.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import Checkpoint
from .denoiser import denoise_forward
from .numerics import SeededRng
from .schedule import VE, cfg_combine, em_reverse_step, score_from_eps
from .text import embed_ids, null_condition, tokenize

F32 = np.float32

DEFAULT_STRENGTH = 0.85
DEFAULT_GUIDANCE = 7.5
DEFAULT_STEPS = 75

STRENGTH_RANGE = (0.0, 1.0)
GUIDANCE_RANGE = (0.0, 9.0)


def index_path(t0: int, steps: int) -> np.ndarray:
    """Descending integer step indices from t0 to 0, at most steps+1 of them."""
    if t0 <= 0:
        return np.array([], dtype=int)
    steps = min(int(steps), t0)
    path = np.unique(np.round(np.linspace(0, t0, steps + 1)).astype(int))[::-1]
    return path


def reverse_from(x_t: np.ndarray, t0: int, eps_fn, sched, rng: SeededRng,
                 steps: int, final_denoise: bool = True) -> np.ndarray:
    """Integrate the reverse SDE from (x_t, t0) to t=0.

    eps_fn(x, i) -> eps predicts noise at step index i; guidance combination
    is the caller's business. Exposed separately so samplers can be exercised
    with analytic noise predictors, no trained model in the loop.
    """
    x = np.asarray(x_t, dtype=F32)
    path = index_path(t0, steps)
    noise = rng.split(1)
    for k in range(len(path) - 1):
        i_next, i = int(path[k]), int(path[k + 1])
        eps = eps_fn(x, i_next)
        score = score_from_eps(eps, i_next, sched).astype(F32)
        z = noise.normal(x.shape, dtype=F32)
        x = em_reverse_step(x, i, i_next, score, z, sched).astype(F32)
    if final_denoise and len(path):
        i0 = int(path[-1])
        eps = eps_fn(x, i0)
        s = sched.sigma[i0]
        x = x - F32(s) * eps
        if sched.kind != VE:
            x = x / F32(sched.alpha[i0])
    return x.astype(F32)


def _flush_tiny(x: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.where(np.abs(x) < floor, F32(0.0), x)


def make_eps_fn(ckpt: Checkpoint, prompt, g: float, control: np.ndarray = None):
    """Classifier-free-guided noise predictor closure over a checkpoint.

    g == 1 or an empty prompt short-circuits to a single branch; otherwise
    the conditional and unconditional branches run as one fused batch.
    """
    null = null_condition(ckpt.text_params).astype(F32)
    if prompt:
        ids = tokenize(prompt, ckpt.vocab)
        cond = embed_ids(ckpt.text_params, ids).astype(F32)
        unconditional = ids == [ckpt.vocab.null_id]
    else:
        cond = null
        unconditional = True
    config, params, T = ckpt.denoiser_config, ckpt.model_params, ckpt.sched.T

    def eps_fn(x, i):
        bsz = x.shape[0]
        t = np.full(bsz, i)
        cond_b = np.broadcast_to(cond, (bsz, cond.size))
        if unconditional or g == 1.0:
            use = np.broadcast_to(null, (bsz, null.size)) if unconditional else cond_b
            ctl = None if control is None else np.broadcast_to(control, (bsz,) + control.shape[-3:])
            eps, _ = denoise_forward(params, config, x, t, use, T, control=ctl)
            return eps
        null_b = np.broadcast_to(null, (bsz, null.size))
        x2 = np.concatenate([x, x])
        t2 = np.concatenate([t, t])
        c2 = np.concatenate([null_b, cond_b])
        ctl = None
        if control is not None:
            c1 = np.broadcast_to(control, (bsz,) + control.shape[-3:])
            ctl = np.concatenate([c1, c1])
        eps2, _ = denoise_forward(params, config, x2, t2, c2, T, control=ctl)
        return cfg_combine(eps2[:bsz], eps2[bsz:], g)

    return eps_fn


def _validate_gen_params(strength: float, g: float, steps: int) -> None:
    if not STRENGTH_RANGE[0] <= strength <= STRENGTH_RANGE[1]:
        raise ValueError(f"strength {strength} outside {STRENGTH_RANGE}")
    if not GUIDANCE_RANGE[0] <= g <= GUIDANCE_RANGE[1]:
        raise ValueError(f"guidance {g} outside {GUIDANCE_RANGE}")
    if steps < 1:
        raise ValueError("steps must be >= 1")


def sample(ckpt: Checkpoint, prompt: str = None, n: int = 1, seed: int = 0,
           g: float = 1.0, steps: int = None, control: np.ndarray = None,
           size: int = 64) -> np.ndarray:
    """Full reverse pass from pure noise; returns [n,H,W] float64 in [0,1]."""
    _validate_gen_params(1.0, g, steps or ckpt.sched.T)
    sched = ckpt.sched
    steps = steps or sched.T
    if ckpt.codec.is_identity:
        lat_shape = (ckpt.denoiser_config.in_channels, size, size)
    else:
        # latent-space generation: infer latent spatial size from the codec
        probe = ckpt.codec.encode(
            np.zeros((1, ckpt.codec.config.image_channels, size, size), dtype=F32))
        lat_shape = probe.shape[1:]
    rng = SeededRng(seed)
    x = (sched.sigma[sched.T] * rng.split(0).normal((n,) + lat_shape)).astype(F32)
    eps_fn = make_eps_fn(ckpt, prompt, g, control)
    x = reverse_from(x, sched.T, eps_fn, sched, rng, steps)
    if not ckpt.codec.is_identity:
        x = ckpt.codec.decode(x)
    x = _flush_tiny(x)
    return np.clip(x[:, 0].astype(np.float64), 0.0, 1.0)


def sample_from_guide(ckpt: Checkpoint, guide: np.ndarray, prompt: str = None,
                      strength: float = DEFAULT_STRENGTH, g: float = DEFAULT_GUIDANCE,
                      steps: int = DEFAULT_STEPS, seed: int = 0,
                      control: np.ndarray = None, clamp: bool = True,
                      final_denoise: bool = True) -> np.ndarray:
    """Edit a guide image: noise it to round(strength*T), reverse to t=0.

    strength 0 returns the guide unchanged; strength 1 starts from (nearly)
    pure noise. clamp=True returns float64 in [0,1]; clamp=False returns the
    raw float32 output (tiny magnitudes flushed) for exact map arithmetic.
    """
    _validate_gen_params(strength, g, steps)
    sched = ckpt.sched
    guide = np.asarray(guide)
    t0 = int(round(strength * sched.T))
    if t0 == 0:
        # identity contract: no noise was added, so hand back the guide
        # exactly, before any dtype or codec round-trip can perturb it
        out = np.clip(guide.astype(np.float64), 0.0, 1.0) if clamp else guide.astype(F32)
        return out.copy()
    squeeze = guide.ndim == 2
    if squeeze:
        guide = guide[None]
    gb = guide.astype(F32)[:, None]  # [B,1,H,W]
    if not ckpt.codec.is_identity:
        gb = ckpt.codec.encode(gb)
    rng = SeededRng(seed)
    z = rng.split(0).normal(gb.shape, dtype=F32)
    x = (F32(sched.alpha[t0]) * gb + F32(sched.sigma[t0]) * z)
    eps_fn = make_eps_fn(ckpt, prompt, g, control)
    x = reverse_from(x, t0, eps_fn, sched, rng, steps, final_denoise=final_denoise)
    if not ckpt.codec.is_identity:
        x = ckpt.codec.decode(x)
    x = _flush_tiny(x)[:, 0]
    if clamp:
        x = np.clip(x.astype(np.float64), 0.0, 1.0)
    if squeeze:
        return x[0]
    return x
