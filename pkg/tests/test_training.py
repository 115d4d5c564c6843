"""Training mechanics: objective value at init, identity-codec equivalence,
Adam behavior, staged-run bookkeeping, divergence abort."""

import numpy as np
import pytest

from vade.codec import identity_codec
from vade.denoiser import DenoiserConfig, init_denoiser
from vade.numerics import SeededRng
from vade.phantoms import CLASS_NORMAL, CLASS_OPACITY, PhantomSpec, generate_dataset, load_manifest
from vade.schedule import make_schedule
from vade.text import default_vocab, init_text_params, tokenize
from vade.training import (
    AdamState,
    DivergenceError,
    TrainConfig,
    adam_step,
    forward_marginal_batch,
    loss_eps,
    train,
)

SMALL_NET = DenoiserConfig(widths=(4, 8, 8))


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    spec = PhantomSpec()
    generate_dataset(spec, {CLASS_NORMAL: 12, CLASS_OPACITY: 6}, str(root), seed=5)
    return load_manifest(str(root / "manifest.json"))


def _batch(seed=3, n=2):
    rng = SeededRng(seed)
    x0 = rng.uniform(0, 1, (n, 1, 16, 16)).astype(np.float32)
    vocab = default_vocab()
    ids = [tokenize("lung opacity left", vocab), tokenize("normal chest scan", vocab)][:n]
    return x0, ids


class TestLossEps:
    def test_unit_loss_at_zero_init(self):
        # untrained model predicts eps=0, so the loss is E||z||^2 = 1 per pixel
        sched = make_schedule(T=50)
        params = init_denoiser(SMALL_NET, SeededRng(0))
        tparams = init_text_params(default_vocab(), SeededRng(1))
        x0, ids = _batch()
        losses = [loss_eps(params, SMALL_NET, tparams, sched, x0, ids, SeededRng(k))[0]
                  for k in range(8)]
        assert 0.85 < np.mean(losses) < 1.15

    def test_identity_codec_is_bitwise_noop(self):
        sched = make_schedule(T=50)
        params = init_denoiser(SMALL_NET, SeededRng(0))
        tparams = init_text_params(default_vocab(), SeededRng(1))
        x0, ids = _batch()
        l1, g1, t1 = loss_eps(params, SMALL_NET, tparams, sched, x0, ids, SeededRng(9))
        l2, g2, t2 = loss_eps(params, SMALL_NET, tparams, sched, x0, ids, SeededRng(9),
                              codec=identity_codec())
        assert l1 == l2
        for k in g1:
            assert np.array_equal(g1[k], g2[k]), k
        assert np.array_equal(t1.embedding, t2.embedding)

    def test_weights_scale_loss(self):
        sched = make_schedule(T=50)
        params = init_denoiser(SMALL_NET, SeededRng(0))
        tparams = init_text_params(default_vocab(), SeededRng(1))
        x0, ids = _batch()
        l1, _, _ = loss_eps(params, SMALL_NET, tparams, sched, x0, ids, SeededRng(9))
        l2, _, _ = loss_eps(params, SMALL_NET, tparams, sched, x0, ids, SeededRng(9),
                            weights=np.array([1.0, 1.0]))
        assert l2 == pytest.approx(2 * l1, rel=1e-6)


class TestForwardMarginalBatch:
    def test_matches_scalar_path(self):
        from vade.schedule import forward_marginal
        sched = make_schedule(T=50)
        rng = SeededRng(4)
        x0 = rng.normal((3, 1, 4, 4)).astype(np.float32)
        z = rng.normal((3, 1, 4, 4)).astype(np.float32)
        t = np.array([1, 25, 50])
        batch = forward_marginal_batch(x0, t, z, sched)
        for b in range(3):
            one = forward_marginal(x0[b], int(t[b]), z[b], sched)
            np.testing.assert_allclose(batch[b], one, rtol=1e-6)


class TestAdam:
    def test_converges_on_quadratic(self):
        params = {"x": np.array([5.0, -3.0], dtype=np.float32)}
        state = AdamState.for_params(params)
        for _ in range(2000):
            grads = {"x": 2 * params["x"]}
            adam_step(params, grads, state, lr=0.01)
        assert np.abs(params["x"]).max() < 0.05

    def test_skips_missing_grads(self):
        params = {"a": np.ones(2, dtype=np.float32), "b": np.ones(2, dtype=np.float32)}
        state = AdamState.for_params(params)
        adam_step(params, {"a": np.ones(2, dtype=np.float32)}, state, lr=0.1)
        assert np.array_equal(params["b"], np.ones(2))
        assert not np.array_equal(params["a"], np.ones(2))


class TestStagedTraining:
    def test_stages_and_trace_recorded(self, tiny_corpus):
        config = TrainConfig(steps_normal=30, steps_disease=10, desk_factor=1.0,
                             lr=1e-3, seed=11)
        ckpt = train(tiny_corpus, config, denoiser_config=SMALL_NET,
                     sched=make_schedule(T=50))
        names = [s[0] for s in ckpt.stages]
        assert names[0] == "normal"
        assert "lung_opacity" in names
        total = sum(s[2] for s in ckpt.stages)
        assert len(ckpt.loss_trace) == total == 40
        # disease stages report the fused objective (disease + prior terms), so
        # their trace values sit on a different scale than the normal stage;
        # sanity-check scale within each stage rather than across them
        normal = np.asarray(ckpt.loss_trace[:30])
        disease = np.asarray(ckpt.loss_trace[30:])
        assert 0.3 < normal.mean() < 1.5
        assert 0.6 < disease.mean() < 3.0

    def test_deterministic_given_seed(self, tiny_corpus):
        config = TrainConfig(steps_normal=8, steps_disease=4, lr=1e-3, seed=21)
        a = train(tiny_corpus, config, denoiser_config=SMALL_NET, sched=make_schedule(T=50))
        b = train(tiny_corpus, config, denoiser_config=SMALL_NET, sched=make_schedule(T=50))
        assert np.array_equal(a.loss_trace, b.loss_trace)
        for k in a.model_params:
            assert np.array_equal(a.model_params[k], b.model_params[k]), k

    def test_divergence_aborts(self, tiny_corpus):
        config = TrainConfig(steps_normal=400, steps_disease=1, lr=50.0, seed=3,
                             divergence_factor=20.0)
        with pytest.raises(DivergenceError):
            with np.errstate(over="ignore", invalid="ignore"):
                train(tiny_corpus, config, denoiser_config=SMALL_NET,
                      sched=make_schedule(T=50))
