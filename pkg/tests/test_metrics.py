import json
import os

import numpy as np
import pytest

from vade.metrics import (
    FULL_SCALE_REFERENCE,
    GaussianStats,
    MsSsimParams,
    RAW_DOWNSAMPLE,
    SsimParams,
    evaluate_suite,
    feature_embed,
    frechet,
    gaussian_stats,
    ms_ssim,
    ssim,
)
from vade.numerics import SeededRng
from vade.phantoms import PhantomSpec, generate_sample


def naive_ssim(x, y, p=SsimParams()):
    """Loop-over-windows implementation straight from the formula."""
    half = (p.window - 1) / 2.0
    t = np.arange(p.window) - half
    g = np.exp(-(t ** 2) / (2 * p.sigma ** 2))
    g = np.outer(g, g)
    g /= g.sum()
    h, w = x.shape
    vals = []
    for i in range(h - p.window + 1):
        for j in range(w - p.window + 1):
            wx = x[i:i + p.window, j:j + p.window]
            wy = y[i:i + p.window, j:j + p.window]
            mx = (g * wx).sum()
            my = (g * wy).sum()
            vx = (g * wx * wx).sum() - mx * mx
            vy = (g * wy * wy).sum() - my * my
            cxy = (g * wx * wy).sum() - mx * my
            sx, sy = np.sqrt(max(vx, 0)), np.sqrt(max(vy, 0))
            lum = (2 * mx * my + p.c1) / (mx * mx + my * my + p.c1)
            con = (2 * sx * sy + p.c2) / (vx + vy + p.c2)
            st = (cxy + p.c3) / (sx * sy + p.c3)
            vals.append(lum * con * st)
    return float(np.mean(vals))


class TestSsim:
    def test_identity(self):
        x = SeededRng(0).uniform(0, 1, (16, 16))
        assert abs(ssim(x, x) - 1.0) < 1e-9

    def test_symmetry(self):
        r = SeededRng(1)
        x = r.uniform(0, 1, (16, 16))
        y = r.uniform(0, 1, (16, 16))
        assert abs(ssim(x, y) - ssim(y, x)) < 1e-12

    def test_constant_images_closed_form(self):
        # uniform windows: variances vanish, only luminance survives
        a, b = 0.3, 0.7
        p = SsimParams()
        x = np.full((11, 11), a)
        y = np.full((11, 11), b)
        expect = (2 * a * b + p.c1) / (a * a + b * b + p.c1)
        assert abs(ssim(x, y, p) - expect) < 1e-12

    def test_matches_naive_loop_implementation(self):
        r = SeededRng(2)
        x = r.uniform(0, 1, (14, 14))
        y = np.clip(x + 0.1 * r.normal((14, 14)), 0, 1)
        assert abs(ssim(x, y) - naive_ssim(x, y)) < 1e-10

    def test_inverted_binary_phantom_dissimilar(self):
        sample = generate_sample(PhantomSpec(), None, SeededRng(5))
        x = (sample.image > 0.5).astype(np.float64)
        assert ssim(x, 1.0 - x) < 0.2

    def test_too_small_image(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))


class TestMsSsim:
    def test_identity(self):
        x = SeededRng(3).uniform(0, 1, (64, 64))
        assert abs(ms_ssim(x, x) - 1.0) < 1e-9

    def test_single_level_equals_ssim_exactly(self):
        r = SeededRng(4)
        x = r.uniform(0, 1, (32, 32))
        y = np.clip(x + 0.2 * r.normal((32, 32)), 0, 1)
        assert ms_ssim(x, y, MsSsimParams(levels=1)) == ssim(x, y)

    def test_weights_renormalized(self):
        assert abs(MsSsimParams(levels=3).weights.sum() - 1.0) < 1e-12
        assert abs(MsSsimParams(levels=5).weights.sum() - 1.0) < 1e-12

    def test_monotone_decrease_under_noise(self):
        sample = generate_sample(PhantomSpec(), None, SeededRng(6))
        x = sample.image
        noise = SeededRng(7).normal(x.shape)
        scores = []
        for level in [0.0, 0.05, 0.1, 0.2, 0.4]:
            y = np.clip(x + level * noise, 0, 1)
            scores.append(ms_ssim(x, y))
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_too_small_for_levels(self):
        x = np.zeros((32, 32))
        with pytest.raises(ValueError):
            ms_ssim(x, x, MsSsimParams(levels=3))  # needs 44px

    def test_bad_level_count(self):
        x = np.zeros((64, 64))
        with pytest.raises(ValueError):
            ms_ssim(x, x, MsSsimParams(levels=6))


class TestFeatureEmbed:
    def test_shape_and_determinism(self):
        imgs = SeededRng(8).uniform(0, 1, (5, 64, 64))
        f1 = feature_embed(imgs)
        f2 = feature_embed(imgs)
        assert f1.shape == (5, 64)
        assert np.array_equal(f1, f2)

    def test_constant_batch_zero_variance(self):
        imgs = np.full((4, 64, 64), 0.6)
        f = feature_embed(imgs)
        assert np.allclose(f, 0.6, atol=1e-12)
        assert np.allclose(f.var(axis=0), 0.0)

    def test_permutation_permutes_rows(self):
        imgs = SeededRng(9).uniform(0, 1, (6, 64, 64))
        f = feature_embed(imgs)
        perm = [3, 1, 5, 0, 2, 4]
        fp = feature_embed(imgs[perm])
        assert np.array_equal(fp, f[perm])

    def test_raw_downsample_equals_block_mean_oracle(self):
        imgs = SeededRng(10).uniform(0, 1, (3, 64, 64))
        f = feature_embed(imgs, RAW_DOWNSAMPLE)
        oracle = imgs.reshape(3, 8, 8, 8, 8).mean(axis=(2, 4)).reshape(3, 64)
        assert np.allclose(f, oracle, atol=1e-12)

    def test_identity_codec_rejected(self):
        from vade.codec import identity_codec
        imgs = np.zeros((2, 64, 64))
        with pytest.raises(ValueError):
            feature_embed(imgs, identity_codec())

    def test_codec_extractor_dims(self):
        from vade.codec import init_learned_codec
        codec = init_learned_codec(SeededRng(11))
        imgs = SeededRng(12).uniform(0, 1, (3, 64, 64))
        f = feature_embed(imgs, codec)
        assert f.shape == (3, 64)


class TestGaussianStats:
    def test_hand_case(self):
        s = gaussian_stats(np.array([[0.0], [2.0]]))
        assert s.mu[0] == 1.0
        assert abs(s.sigma[0, 0] - 2.0) < 1e-12 or s.ridged
        assert s.n == 2

    def test_identical_vectors_ridged(self):
        s = gaussian_stats(np.tile([1.0, 2.0, 3.0], (2, 1)))
        assert s.ridged
        assert np.allclose(s.sigma, 1e-6 * np.eye(3))

    def test_two_pass_oracle(self):
        x = SeededRng(13).normal((200, 8))
        s = gaussian_stats(x)
        mu = x.mean(axis=0)
        cov = np.zeros((8, 8))
        for row in x:
            cov += np.outer(row - mu, row - mu)
        cov /= 199
        assert np.allclose(s.mu, mu, atol=1e-12)
        assert np.allclose(s.sigma, cov, atol=1e-10)
        assert not s.ridged

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            gaussian_stats(np.ones((1, 4)))


class TestFrechet:
    def test_self_distance_zero(self):
        s = gaussian_stats(SeededRng(14).normal((100, 6)))
        assert abs(frechet(s, s)) < 1e-8

    def test_one_dim_mean_shift(self):
        a = GaussianStats(mu=np.array([0.0]), sigma=np.array([[1.0]]), n=100)
        b = GaussianStats(mu=np.array([1.0]), sigma=np.array([[1.0]]), n=100)
        assert abs(frechet(a, b) - 1.0) < 1e-10

    def test_one_dim_variance_gap(self):
        # closed form d^2 + (s_a - s_b)^2 = 0 + (2-1)^2
        a = GaussianStats(mu=np.array([0.0]), sigma=np.array([[1.0]]), n=100)
        b = GaussianStats(mu=np.array([0.0]), sigma=np.array([[4.0]]), n=100)
        assert abs(frechet(a, b) - 1.0) < 1e-10

    def test_dim_mismatch(self):
        a = GaussianStats(mu=np.zeros(2), sigma=np.eye(2), n=10)
        b = GaussianStats(mu=np.zeros(3), sigma=np.eye(3), n=10)
        with pytest.raises(ValueError):
            frechet(a, b)

    def test_symmetry(self):
        a = gaussian_stats(SeededRng(15).normal((80, 5)))
        b = gaussian_stats(SeededRng(16).normal((80, 5)) + 0.3)
        assert abs(frechet(a, b) - frechet(b, a)) < 1e-8


class TestReferenceValues:
    def test_reference_block_is_labeled(self):
        assert "full_scale_reference" in FULL_SCALE_REFERENCE["note"]
        assert "not" in FULL_SCALE_REFERENCE["note"]
        t1 = FULL_SCALE_REFERENCE["table1_fid_vs_counterfactuals"]
        assert t1["lung_opacity"]["fid_diseased_generated"] == 27.8
        assert FULL_SCALE_REFERENCE["zero_shot_fid"]["real_vs_generated"] == 52.08


class TestEvaluateSuite:
    def test_report_schema_and_files(self, tmp_path):
        from tests.test_sampling import small_checkpoint
        from vade.phantoms import generate_dataset

        root = str(tmp_path / "data")
        manifest = generate_dataset(
            PhantomSpec(), {"normal": 4, "lung_opacity": 2, "diffuse_haze": 2,
                            "focal_pneumonia": 2}, root, seed=21)
        ckpt = small_checkpoint(randomize=True)
        out = str(tmp_path / "eval")
        report = evaluate_suite(ckpt, manifest, out, steps=6, max_per_class=2)
        assert os.path.isfile(os.path.join(out, "report.json"))
        assert os.path.isfile(os.path.join(out, "report.csv"))
        with open(os.path.join(out, "report.json")) as f:
            loaded = json.load(f)
        assert loaded["full_scale_reference"]["table2_fid_healthy_vs_generated"][
            "focal_pneumonia"] == 110.72
        for cname in ("lung_opacity", "diffuse_haze", "focal_pneumonia"):
            entry = loaded["classes"][cname]
            for key in ("fid_diseased_generated", "fid_diseased_real_healthy",
                        "abs_difference", "fid_real_healthy_generated",
                        "mean_ssim", "mean_ms_ssim", "mean_localization"):
                assert np.isfinite(entry[key]), (cname, key)
            assert entry["n"] == 2
        assert loaded["config"]["checkpoint_id"] == ckpt.checkpoint_id
