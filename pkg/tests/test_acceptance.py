"""End-to-end quality gate. One test per shipped guarantee, each printing a
single PASS/FAIL line with the measured numbers at the stated tolerances.

The expensive pieces (desk-scale corpus, one staged training run, one codec)
are session fixtures shared by the criteria that need a trained model, so
the whole file costs one full training run plus the evaluation passes.
"""

import time

import numpy as np
import pytest

from vade.attribution import (GenerationConfig, artifact_bytes, counterfactual,
                              induce, masked_va)
from vade.checkpoint import Checkpoint
from vade.codec import Codec, CodecConfig, init_learned_codec, \
    reconstruction_loss, train_codec
from vade.denoiser import DenoiserConfig, init_denoiser, param_count
from vade.metrics import (CODEC_ENCODER, GaussianStats, MsSsimParams,
                          evaluate_suite, frechet, gaussian_stats, ms_ssim,
                          ssim)
from vade.numerics import SeededRng, finite_diff_grad
from vade.phantoms import (CANONICAL_PROMPTS, CLASS_ENLARGED, CLASS_NORMAL,
                           DESK_MIX, PhantomSpec, central_region_mask,
                           generate_dataset, load_entry_image, load_entry_roi,
                           side_mask)
from vade.runlog import RunLog, replay, scan_id_of, sha256_hex
from vade.sampling import reverse_from
from vade.schedule import VE, VP, forward_marginal, make_schedule
from vade.text import default_vocab, init_text_params, tokenize
from vade.training import TrainConfig, loss_eps, train

LINES = []

DESK_SEED = 11
EVAL_SEED = 777
TRAIN_SEED = 5
DESK_FACTOR = 8
EVAL_STEPS = 75
# the zero-shot criteria pin the prompts and the statistic, not the operating
# point; these are the package defaults for inducing a change in a healthy scan
ZS_STRENGTH = 0.85
ZS_GUIDANCE = 7.5
SIDE_STRENGTH = 0.85
SIDE_GUIDANCE = 7.5


def criterion(tag, ok, detail):
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


# ----------------------------------------------------------------- fixtures


@pytest.fixture(scope="session")
def desk_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_corpus")
    return generate_dataset(PhantomSpec(), DESK_MIX, str(out), DESK_SEED)


@pytest.fixture(scope="session")
def eval_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("eval_corpus")
    mix = {"normal": 50, "lung_opacity": 20, "diffuse_haze": 20,
           "focal_pneumonia": 20}
    return generate_dataset(PhantomSpec(), mix, str(out), EVAL_SEED)


@pytest.fixture(scope="session")
def trained(desk_manifest):
    """The one desk-scale staged training run; its CPU cost is part of P5."""
    cpu0, wall0 = time.process_time(), time.time()
    ckpt = train(desk_manifest, TrainConfig(desk_factor=DESK_FACTOR,
                                            seed=TRAIN_SEED))
    return ckpt, time.process_time() - cpu0, time.time() - wall0


@pytest.fixture(scope="session")
def desk_codec(desk_manifest):
    imgs = np.stack([load_entry_image(desk_manifest, e)
                     for e in desk_manifest.entries]).astype(np.float32)[:, None]
    codec, _ = train_codec(imgs, SeededRng(3), steps=1500)
    return codec


@pytest.fixture(scope="session")
def suite_report(trained, eval_manifest, desk_codec, tmp_path_factory):
    """One evaluation pass over all held-out diseased phantoms at the pinned
    operating point, shared by the attribution-quality and FID criteria."""
    ckpt, _, _ = trained
    out = tmp_path_factory.mktemp("suite_report")
    return evaluate_suite(ckpt, eval_manifest, str(out), strength=0.85,
                          guidance=7.5, steps=EVAL_STEPS, seed=1000,
                          extractor=desk_codec)


@pytest.fixture(scope="session")
def healthy_runs(trained, eval_manifest):
    """Counterfactuals of held-out healthy scans at the pinned operating point."""
    ckpt, _, _ = trained
    results = []
    for i, e in enumerate(eval_manifest.by_class(CLASS_NORMAL)):
        img = load_entry_image(eval_manifest, e)
        roi = load_entry_roi(eval_manifest, e)
        cfg = GenerationConfig(prompt=CANONICAL_PROMPTS[CLASS_NORMAL],
                               strength=0.85, guidance=7.5, steps=EVAL_STEPS,
                               seed=2000 + i)
        results.append((counterfactual(ckpt, img, cfg), roi))
    return results


SMALL_TRAIN = TrainConfig(desk_factor=0.02, seed=7)
SMALL_NET = DenoiserConfig(widths=(4, 6, 8), cond_dim=8, time_dim=8)


def _small_train(manifest):
    return train(manifest, SMALL_TRAIN, denoiser_config=SMALL_NET,
                 sched=make_schedule(VE, T=40))


# --------------------------------------------------------- P1-P4 oracles


def test_p1_schedule_identities():
    t0 = time.time()
    vp = make_schedule(VP, T=1000)
    ve = make_schedule(VE, T=1000)
    vp_err = float(np.abs(vp.alpha ** 2 + vp.sigma ** 2 - 1.0).max())
    ve_ok = bool(np.all(ve.alpha == 1.0))
    dt = time.time() - t0
    criterion("P1", vp_err < 1e-12 and ve_ok and dt < 1.0,
              f"VP alpha^2+sigma^2 max err {vp_err:.1e} < 1e-12, "
              f"VE alpha == 1 exactly: {ve_ok} ({dt:.2f}s)")


def test_p2_forward_marginal_moments():
    n = 10_000
    rng = SeededRng(21)
    x0 = rng.uniform(0.2, 0.8, (1, 1, 2, 2)).astype(np.float32)
    worst_m, worst_v = 0.0, 0.0
    for kind in (VE, VP):
        sched = make_schedule(kind, T=100)
        for i in (25, 50, 90):
            z = rng.normal((n, 1, 2, 2), dtype=np.float32)
            xt = forward_marginal(np.repeat(x0, n, axis=0), i, z, sched)
            mean_err = np.abs(xt.mean(axis=0) - sched.alpha[i] * x0[0])
            tol_m = 3.0 * sched.sigma[i] / np.sqrt(n)
            worst_m = max(worst_m, float((mean_err / tol_m).max()))
            var_rel = np.abs(xt.var(axis=0) / sched.sigma[i] ** 2 - 1.0)
            worst_v = max(worst_v, float(var_rel.max()))
    criterion("P2", worst_m <= 1.0 and worst_v <= 0.05,
              f"per-pixel mean within {worst_m:.2f}x of 3 sigma/sqrt(1e4), "
              f"variance rel err {worst_v:.3f} <= 0.05, over 1e4 draws "
              f"(VE and VP, three noise levels each)")


def test_p3_gaussian_reverse_oracle():
    # target N(m, gamma^2 I): the score is analytic, so the sampler runs with
    # no trained model in the loop
    m, gamma = 0.4, 0.25
    sched = make_schedule(VE, T=200, sigma_min=0.01, sigma_max=3.0)
    n = 2000
    rng = SeededRng(17)

    def eps_fn(x, i):
        s = sched.sigma[i]
        return (s * (x - m) / (gamma ** 2 + s ** 2)).astype(np.float32)

    x_t = m + np.sqrt(gamma ** 2 + sched.sigma[sched.T] ** 2) * \
        rng.split(0).normal((n, 1, 4, 4), dtype=np.float32)
    x = reverse_from(x_t, sched.T, eps_fn, sched, rng, steps=200,
                     final_denoise=False)
    mean_err = abs(float(x.mean()) - m)
    var_rel = abs(float(x.var()) / gamma ** 2 - 1.0)
    criterion("P3", mean_err < 0.05 and var_rel < 0.10,
              f"200-step reverse SDE on an analytic Gaussian score: "
              f"|mean - {m}| = {mean_err:.4f} < 0.05, variance rel err "
              f"{var_rel:.3f} < 0.10 (16-dim, {n} samples)")


def test_p4_gradient_correctness():
    dcfg = DenoiserConfig(widths=(2, 2, 3), cond_dim=2, time_dim=2)
    # zero-init FiLM/out layers would make the check vacuous; randomize
    base = init_denoiser(dcfg, SeededRng(12))
    prng = SeededRng(13)
    params = {k: (0.3 * prng.normal(v.shape)) for k, v in base.items()}
    n_model = param_count(params)
    sched = make_schedule(VE, T=20)
    vocab = default_vocab()
    tp = init_text_params(vocab, SeededRng(15), dim=2)
    rng = SeededRng(14)
    x0 = rng.uniform(0, 1, (2, 1, 8, 8)).astype(np.float32)
    ids = [tokenize("lung opacity left", vocab),
           tokenize("diffuse haze", vocab)]
    xh = rng.uniform(0, 1, (2, 1, 8, 8)).astype(np.float32)
    ids_h = [tokenize("normal chest scan", vocab)] * 2

    def rel_err(analytic, fd):
        return float(np.abs(analytic - fd).max() / (np.abs(fd).max() + 1e-10))

    worst = 0.0
    # denoising objective: every parameter group
    _, grads, _ = loss_eps(params, dcfg, tp, sched, x0, ids, SeededRng(40))
    for name in sorted(params):
        def f(w, name=name):
            trial = {k: (w if k == name else v) for k, v in params.items()}
            l, _, _ = loss_eps(trial, dcfg, tp, sched, x0, ids, SeededRng(40))
            return l
        fd = finite_diff_grad(f, params[name].copy(), h=1e-4)
        worst = max(worst, rel_err(grads[name], fd))

    # prior-preserving composite, fused exactly as the trainer runs it: one
    # batch of disease plus healthy examples with a per-example weight vector
    x0c = np.concatenate([x0, xh])
    ids_c = ids + ids_h
    w_c = np.array([0.5, 0.5, 0.5, 0.5])
    _, cgrads, _ = loss_eps(params, dcfg, tp, sched, x0c, ids_c, SeededRng(42),
                            weights=w_c)
    for name in ("enc0.w", "film1.w", "out.b"):
        def f(w, name=name):
            trial = {k: (w if k == name else v) for k, v in params.items()}
            l, _, _ = loss_eps(trial, dcfg, tp, sched, x0c, ids_c,
                               SeededRng(42), weights=w_c)
            return l
        fd = finite_diff_grad(f, params[name].copy(), h=1e-4)
        worst = max(worst, rel_err(cgrads[name], fd))

    # codec reconstruction objective
    ccfg = CodecConfig(kind="learned", latent_channels=2, widths=(2, 3))
    codec = init_learned_codec(SeededRng(16), ccfg)
    codec.params = {k: v.astype(np.float64) for k, v in codec.params.items()}
    n_codec = sum(v.size for v in codec.params.values())
    xc = SeededRng(18).uniform(0, 1, (2, 1, 8, 8)).astype(np.float32)
    _, kgrads = reconstruction_loss(codec, xc)
    for name in ("e0.w", "e2.b", "d1.w", "d3.b"):
        def f(w, name=name):
            trial = Codec(config=ccfg,
                          params={k: (w if k == name else v)
                                  for k, v in codec.params.items()})
            l, _ = reconstruction_loss(trial, xc)
            return l
        fd = finite_diff_grad(f, codec.params[name].copy(), h=1e-5)
        worst = max(worst, rel_err(kgrads[name], fd))

    criterion("P4", worst < 1e-3 and n_model <= 500 and n_codec <= 500,
              f"max rel err {worst:.1e} < 1e-3 vs central differences, all "
              f"three objectives ({n_model}-param denoiser, {n_codec}-param codec)")


# ----------------------------------------------- P5-P9 trained-model gate


def test_p5_training_smoke(trained, desk_manifest):
    ckpt, cpu, wall = trained
    counts = desk_manifest.class_counts
    healthy = counts[CLASS_NORMAL]
    diseased = sum(v for k, v in counts.items() if k != CLASS_NORMAL)
    tr = ckpt.loss_trace
    start, end = float(tr[:100].mean()), float(tr[-100:].mean())
    reduction = 1.0 - end / start
    criterion("P5", reduction >= 0.5 and cpu <= 1800
              and healthy == 400 and diseased == 450,
              f"smoothed eps-loss {start:.4f} -> {end:.4f} "
              f"({reduction:.1%} >= 50%), {cpu:.0f}s CPU <= 1800s "
              f"(wall {wall:.0f}s) on {healthy}+{diseased} phantoms")


def test_p6_attribution_quality(suite_report, healthy_runs):
    classes = suite_report["classes"]
    n = sum(c["n"] for c in classes.values())
    loc = sum(c["mean_localization"] * c["n"] for c in classes.values()) / n
    sim = sum(c["mean_ssim"] * c["n"] for c in classes.values()) / n
    habs = float(np.mean([np.abs(masked_va(res.vamap, roi).m).mean()
                          for res, roi in healthy_runs]))
    criterion("P6", n >= 50 and loc >= 0.6 and sim >= 0.6 and habs <= 0.05,
              f"{n} held-out diseased at strength 0.85 guidance 7.5: mean "
              f"localization {loc:.3f} >= 0.6, mean ssim {sim:.3f} >= 0.6; "
              f"healthy mean|M| {habs:.4f} <= 0.05 ({len(healthy_runs)} scans)")


def test_p7_fid_directional(suite_report):
    classes = suite_report["classes"]
    parts, ok = [], True
    for cname, c in classes.items():
        better = c["fid_real_healthy_generated"] < c["fid_diseased_real_healthy"]
        ok = ok and better
        parts.append(f"{cname} {c['fid_real_healthy_generated']:.1f} vs "
                     f"{c['fid_diseased_real_healthy']:.1f}")
    ok = ok and suite_report["config"]["extractor"] == CODEC_ENCODER
    criterion("P7", ok,
              "FID(generated, real-healthy) < FID(diseased, real-healthy) per "
              f"class, codec features: {'; '.join(parts)}")


def test_p8_metric_golden_values():
    t0 = time.time()
    rng = SeededRng(31)
    x = rng.uniform(0, 1, (64, 64))
    y = rng.uniform(0, 1, (64, 64))
    self_err = abs(ssim(x, x) - 1.0)
    ms_eq = ms_ssim(x, y, MsSsimParams(levels=1)) == ssim(x, y)
    # 1-D Gaussians have the closed form d^2 = (mu1-mu2)^2 + (s1-s2)^2
    cases_err = 0.0
    for mu1, s1, mu2, s2 in ((0.0, 1.0, 0.0, 1.0), (1.0, 1.0, -1.0, 1.0),
                             (0.3, 0.5, -0.2, 1.5), (2.0, 0.1, 2.0, 2.0)):
        a = GaussianStats(mu=np.array([mu1]), sigma=np.array([[s1 ** 2]]), n=100)
        b = GaussianStats(mu=np.array([mu2]), sigma=np.array([[s2 ** 2]]), n=100)
        expect = (mu1 - mu2) ** 2 + (s1 - s2) ** 2
        cases_err = max(cases_err, abs(frechet(a, b) - expect))
    stats = gaussian_stats(rng.normal((40, 6)))
    self_fid = abs(frechet(stats, stats))
    dt = time.time() - t0
    criterion("P8", self_err <= 1e-9 and ms_eq and cases_err <= 1e-10
              and self_fid <= 1e-8 and dt < 5.0,
              f"ssim(x,x)-1 = {self_err:.1e} <= 1e-9; one-level MS-SSIM == "
              f"SSIM: {ms_eq}; 1-D frechet closed-form err {cases_err:.1e} "
              f"<= 1e-10; frechet(a,a) = {self_fid:.1e} <= 1e-8 ({dt:.2f}s)")


def test_p9_zero_shot(trained, eval_manifest):
    ckpt, _, _ = trained
    spec = eval_manifest.spec
    healthy = eval_manifest.by_class(CLASS_NORMAL)[:20]
    central = central_region_mask(spec)
    central_hits, central_fr = 0, []
    for i, e in enumerate(healthy):
        img = load_entry_image(eval_manifest, e)
        cfg = GenerationConfig(prompt=CANONICAL_PROMPTS[CLASS_ENLARGED],
                               strength=ZS_STRENGTH, guidance=ZS_GUIDANCE,
                               steps=EVAL_STEPS, seed=3000 + i)
        a = np.abs(induce(ckpt, img, cfg).vamap.m)
        frac = float(a[central].sum() / max(a.sum(), 1e-12))
        central_fr.append(frac)
        central_hits += frac >= 0.5

    side_hits, side_fr = 0, []
    for i, e in enumerate(healthy):
        side = "left" if i % 2 == 0 else "right"
        img = load_entry_image(eval_manifest, e)
        cfg = GenerationConfig(prompt=f"{side} opacity",
                               strength=SIDE_STRENGTH, guidance=SIDE_GUIDANCE,
                               steps=EVAL_STEPS, seed=4000 + i)
        a = np.abs(induce(ckpt, img, cfg).vamap.m)
        frac = float(a[side_mask(spec, side)].sum() / max(a.sum(), 1e-12))
        side_fr.append(frac)
        side_hits += frac >= 0.7

    criterion("P9", central_hits >= 14 and side_hits >= 16,
              f"'{CANONICAL_PROMPTS[CLASS_ENLARGED]}' >= 50% central mass on "
              f"{central_hits}/20 (need 14, median {np.median(central_fr):.2f}); "
              f"sided opacity >= 70% mass on the named side on {side_hits}/20 "
              f"(need 16, median {np.median(side_fr):.2f})")


# ---------------------------------------------- P10-P11 determinism gate


def test_p10_determinism_persistence(desk_manifest, tmp_path):
    ckpt_a = _small_train(desk_manifest)
    ckpt_b = _small_train(desk_manifest)
    pa, pb = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    ckpt_a.save(pa)
    ckpt_b.save(pb)
    with open(pa, "rb") as f:
        bytes_a = f.read()
    with open(pb, "rb") as f:
        same_train = f.read() == bytes_a

    loaded = Checkpoint.load(pa)
    pc = str(tmp_path / "c.ckpt")
    loaded.save(pc)
    with open(pc, "rb") as f:
        roundtrip = f.read() == bytes_a

    entry = desk_manifest.by_class("lung_opacity")[0]
    img = load_entry_image(desk_manifest, entry)
    gcfg = GenerationConfig(strength=0.5, guidance=4.0, steps=10, seed=9)
    r1 = counterfactual(ckpt_a, img, gcfg)
    r2 = counterfactual(loaded, img, gcfg)
    same_gen = (np.array_equal(r1.counter_raw, r2.counter_raw)
                and np.array_equal(r1.vamap.m, r2.vamap.m))

    roi = load_entry_roi(desk_manifest, entry)
    _, cf_png, ov_png = artifact_bytes(r1, roi)
    log = RunLog(str(tmp_path / "runs.jsonl"))
    rec = log.append("counterfactual", gcfg.to_dict(),
                     {"kind": "scan", "id": scan_id_of(entry)},
                     output_sha256={"counterfactual": sha256_hex(cf_png),
                                    "overlay": sha256_hex(ov_png)},
                     checkpoint_id=ckpt_a.checkpoint_id)
    replayed = replay(rec, ckpt_a, desk_manifest)

    criterion("P10", same_train and roundtrip and same_gen and replayed["match"],
              f"same-seed retrain byte-identical: {same_train}; save/load/save "
              f"byte-identical: {roundtrip}; same-seed maps bit-identical: "
              f"{same_gen}; run-record replay hashes match: {replayed['match']}")


def test_p11_decomposition_identity(trained, eval_manifest):
    ckpt, _, _ = trained
    checked, exact = 0, True
    for cname, seed0 in (("lung_opacity", 70), ("normal", 80)):
        e = eval_manifest.by_class(cname)[0]
        img = load_entry_image(eval_manifest, e)
        for op, prompt in ((counterfactual, CANONICAL_PROMPTS[CLASS_NORMAL]),
                           (induce, "diffuse haze")):
            cfg = GenerationConfig(prompt=prompt, strength=0.85, guidance=7.5,
                                   steps=20, seed=seed0 + checked)
            res = op(ckpt, img, cfg)
            exact = exact and np.array_equal(
                res.counter_raw.astype(np.float64) + res.vamap.m, res.original)
            checked += 1
    criterion("P11", exact and checked == 4,
              f"counterfactual + M == original bit-exact on {checked}/4 fresh "
              "runs (both edit directions, unclamped bookkeeping)")
