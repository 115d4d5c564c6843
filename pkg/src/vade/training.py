"""Denoiser training: the eps-prediction objective (pixel or latent space),
Adam, conditioning dropout, and the staged fine-tuning recipe — a healthy
stage followed by one stage per disease class with paired healthy batches as
a prior-preservation term.

Stage step counts are the published recipe (1200 healthy, 500 per disease)
times a desk factor that scales the schedule to this machine; the learning
rate and batch size are kept at their published values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .codec import Codec, identity_codec
from .denoiser import DenoiserConfig, denoise_backward, denoise_forward, init_denoiser
from .numerics import SeededRng
from .phantoms import CLASS_NORMAL, Manifest, TRAIN_CLASSES, load_entry_image
from .schedule import NoiseSchedule, make_schedule
from .text import (
    TextParams,
    default_vocab,
    embed_batch,
    embed_backward,
    init_text_params,
    retie_unseen_rows,
    tokenize,
    zero_text_grads,
)

F32 = np.float32


class DivergenceError(RuntimeError):
    """Training loss became non-finite or exploded past the abort threshold."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 2
    steps_normal: int = 1200
    steps_disease: int = 500
    desk_factor: float = 1.0
    prior_weight: float = 1.0
    cond_dropout: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    divergence_factor: float = 20.0
    ema_decay: float = 0.999  # 0 keeps the raw final weights
    # disease batches bias t toward high noise: there the prediction floor is
    # low and the prompt is the only cue left for lesion placement, so the
    # text-conditioned term is a large slice of the reducible loss
    disease_t_band: float = 0.78   # band lower edge as a fraction of T
    disease_t_band_p: float = 0.6  # probability a disease example lands in the band
    seed: int = 0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @staticmethod
    def for_params(params: dict) -> "AdamState":
        return AdamState(m={k: np.zeros_like(p) for k, p in params.items()},
                         v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update in place; missing grads (frozen tensors) are skipped."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        params[k] -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(params[k].dtype)


def forward_marginal_batch(x0: np.ndarray, t_idx: np.ndarray, z: np.ndarray,
                           sched: NoiseSchedule) -> np.ndarray:
    """Per-example forward marginal for a batch with its own step indices."""
    a = sched.alpha[t_idx].astype(x0.dtype)[:, None, None, None]
    s = sched.sigma[t_idx].astype(x0.dtype)[:, None, None, None]
    return a * x0 + s * z


def loss_eps(model_params: dict, config: DenoiserConfig, text_params: TextParams,
             sched: NoiseSchedule, x0: np.ndarray, batch_ids: list,
             rng: SeededRng, weights: np.ndarray = None, codec: Codec = None,
             control: np.ndarray = None, t_idx: np.ndarray = None):
    """One objective evaluation: sample t and z, noise the (encoded) batch,
    predict eps, return (loss, model grads, text grads).

    loss = sum_b w_b * mean_pixels (eps_hat_b - z_b)^2, default w = 1/B. With
    the identity codec this is exactly the pixel-space objective. Pass t_idx
    to pin the per-example step indices; by default they are drawn uniform.
    """
    x0 = np.asarray(x0, dtype=F32)
    bsz = x0.shape[0]
    if codec is not None:
        x0 = codec.encode(x0)  # frozen codec: no gradient flows back
    if weights is None:
        weights = np.full(bsz, 1.0 / bsz)
    if t_idx is None:
        t_idx = np.asarray(rng.integers(1, sched.T + 1, (bsz,)))
    else:
        t_idx = np.asarray(t_idx)
    z = rng.normal(x0.shape, dtype=F32)
    x_t = forward_marginal_batch(x0, t_idx, z, sched)
    cond = embed_batch(text_params, batch_ids).astype(F32)
    eps_hat, caches = denoise_forward(model_params, config, x_t, t_idx, cond,
                                      sched.T, control=control)
    diff = eps_hat - z
    per_example = diff.reshape(bsz, -1).astype(np.float64)
    loss = float(np.sum(weights * np.mean(per_example ** 2, axis=1)))
    npix = diff[0].size
    deps = (2.0 * weights[:, None, None, None] / npix).astype(F32) * diff
    grads, dcond = denoise_backward(model_params, caches, deps)
    tgrads = zero_text_grads(text_params)
    embed_backward(text_params, batch_ids, dcond.astype(np.float64), tgrads)
    return loss, grads, tgrads


def _merge_text_grads(grads: dict, tgrads) -> dict:
    grads = dict(grads)
    grads["text.embedding"] = tgrads.embedding
    grads["text.proj"] = tgrads.proj
    grads["text.bias"] = tgrads.bias
    return grads


@dataclass
class StageInfo:
    name: str
    start: int
    steps: int


def train(manifest: Manifest, config: TrainConfig = TrainConfig(), *,
          denoiser_config: DenoiserConfig = None, sched: NoiseSchedule = None,
          codec: Codec = None, progress=None) -> Checkpoint:
    """Staged fine-tuning on a phantom corpus; returns a full checkpoint.

    Stage 1 trains on healthy scans only; each disease stage draws a disease
    batch plus a healthy batch whose loss enters with prior_weight, fused as
    one weighted forward. Conditioning dropout swaps prompts for the null
    token so the unconditional branch used by guidance keeps training.
    """
    sched = sched or make_schedule()
    denoiser_config = denoiser_config or DenoiserConfig()
    vocab = default_vocab()
    rng = SeededRng(config.seed)
    model_params = init_denoiser(denoiser_config, rng.split(1))
    text_params = init_text_params(vocab, rng.split(2))

    joint = dict(model_params)
    joint["text.embedding"] = text_params.embedding
    joint["text.proj"] = text_params.proj
    joint["text.bias"] = text_params.bias
    state = AdamState.for_params(joint)
    # exponential moving average of the weights; the checkpoint ships the
    # averaged copy because single-step Adam iterates sample noticeably worse
    ema = {k: p.copy() for k, p in joint.items()} if config.ema_decay > 0 else None

    by_class = {c: manifest.by_class(c) for c in TRAIN_CLASSES}
    for cname, entries in by_class.items():
        if cname == CLASS_NORMAL and not entries:
            raise ValueError("corpus has no healthy scans")
    images = {}
    ids = {}
    for cname, entries in by_class.items():
        if not entries:
            continue
        images[cname] = np.stack([load_entry_image(manifest, e) for e in entries]).astype(F32)[:, None]
        ids[cname] = [tokenize(e.label_text, vocab) for e in entries]

    null_ids = [vocab.null_id]
    trace = []
    stages = []
    global_step = 0

    def run_stage(name, n_steps, disease=None):
        nonlocal global_step
        stages.append(StageInfo(name=name, start=global_step, steps=n_steps))
        stage_rng = SeededRng(config.seed, 1000 + len(stages))
        data_rng, noise_rng, drop_rng = stage_rng.split(1), stage_rng.split(2), stage_rng.split(3)
        init_losses = []
        band_lo = min(sched.T, max(1, round(config.disease_t_band * sched.T)))
        for step in range(n_steps):
            if disease is None:
                pick = data_rng.integers(0, len(images[CLASS_NORMAL]), (config.batch_size,))
                x0 = images[CLASS_NORMAL][pick]
                batch_ids = [ids[CLASS_NORMAL][i] for i in pick]
                weights = None
                t_idx = None
            else:
                pick_d = data_rng.integers(0, len(images[disease]), (config.batch_size,))
                pick_h = data_rng.integers(0, len(images[CLASS_NORMAL]), (config.batch_size,))
                x0 = np.concatenate([images[disease][pick_d], images[CLASS_NORMAL][pick_h]])
                batch_ids = [ids[disease][i] for i in pick_d] + [ids[CLASS_NORMAL][i] for i in pick_h]
                w = 1.0 / config.batch_size
                weights = np.array([w] * config.batch_size
                                   + [config.prior_weight * w] * config.batch_size)
                # disease half: mixture of the high-noise band and uniform;
                # healthy prior half stays uniform over the full range
                u = noise_rng.uniform(0, 1, (config.batch_size,))
                t_uni = noise_rng.integers(1, sched.T + 1, (config.batch_size,))
                t_band = noise_rng.integers(band_lo, sched.T + 1, (config.batch_size,))
                t_dis = np.where(u < config.disease_t_band_p, t_band, t_uni)
                t_pri = noise_rng.integers(1, sched.T + 1, (config.batch_size,))
                t_idx = np.concatenate([t_dis, t_pri])
            if config.cond_dropout > 0:
                drops = drop_rng.uniform(0, 1, (len(batch_ids),))
                batch_ids = [null_ids if d < config.cond_dropout else bi
                             for bi, d in zip(batch_ids, drops)]
            loss, grads, tgrads = loss_eps(model_params, denoiser_config, text_params,
                                           sched, x0, batch_ids, noise_rng,
                                           weights=weights, codec=codec, t_idx=t_idx)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at {name} step {step}")
            trace.append(loss)
            if step < 20:
                init_losses.append(loss)
            elif step >= 25:
                recent = float(np.mean(trace[-25:]))
                # min of the early window: immune to an explosion that already
                # contaminated the first steps
                if recent > config.divergence_factor * max(float(np.min(init_losses)), 1e-12):
                    raise DivergenceError(
                        f"loss {recent:.3g} exploded past {config.divergence_factor}x "
                        f"initial at {name} step {step}"
                    )
            adam_step(joint, _merge_text_grads(grads, tgrads), state, config.lr,
                      config.adam_beta1, config.adam_beta2, config.adam_eps)
            if ema is not None:
                d = config.ema_decay
                for k, p in joint.items():
                    ema[k] *= d
                    ema[k] += (1.0 - d) * p
            global_step += 1
            if progress and global_step % 200 == 0:
                progress(name, global_step, loss)

    run_stage("normal", max(1, round(config.steps_normal * config.desk_factor)))
    for cname in TRAIN_CLASSES[1:]:
        if images.get(cname) is not None and len(by_class[cname]):
            run_stage(cname, max(1, round(config.steps_disease * config.desk_factor)),
                      disease=cname)

    if ema is not None:
        for k in joint:
            joint[k][...] = ema[k]

    # tokens that never appeared in a training label get projected into the
    # trained embedding space so zero-shot prompts guide like trained ones
    seen = {vocab.null_id}
    for cname in TRAIN_CLASSES:
        for tok_ids in ids.get(cname, []):
            seen.update(tok_ids)
    retie_unseen_rows(text_params, vocab, seen)

    return Checkpoint(
        denoiser_config=denoiser_config,
        model_params=model_params,
        text_params=text_params,
        vocab=vocab,
        sched=sched,
        codec=codec or identity_codec(denoiser_config.in_channels),
        train_config=config,
        stages=[(s.name, s.start, s.steps) for s in stages],
        loss_trace=np.asarray(trace, dtype=np.float64),
    )
