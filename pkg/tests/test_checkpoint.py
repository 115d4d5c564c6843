import struct
import zlib

import numpy as np
import pytest

from vade.checkpoint import Checkpoint, CheckpointFormatError, MAGIC
from vade.codec import identity_codec
from vade.denoiser import DenoiserConfig, init_denoiser
from vade.numerics import SeededRng
from vade.schedule import make_schedule
from vade.text import default_vocab, init_text_params
from vade.training import TrainConfig


def tiny_checkpoint(seed=0):
    config = DenoiserConfig(widths=(2, 2, 3), cond_dim=4, time_dim=4)
    vocab = default_vocab()
    return Checkpoint(
        denoiser_config=config,
        model_params=init_denoiser(config, SeededRng(seed)),
        text_params=init_text_params(vocab, SeededRng(seed + 1)),
        vocab=vocab,
        sched=make_schedule(T=50),
        codec=identity_codec(),
        train_config=TrainConfig(steps_normal=10, steps_disease=5, seed=seed),
        stages=[("normal", 0, 10), ("lung_opacity", 10, 5)],
        loss_trace=np.linspace(1.0, 0.5, 15),
    )


class TestRoundTrip:
    def test_save_load_equality(self, tmp_path):
        ck = tiny_checkpoint()
        path = str(tmp_path / "m.ckpt")
        ck.save(path)
        lk = Checkpoint.load(path)
        assert lk.denoiser_config == ck.denoiser_config
        assert lk.vocab.tokens == ck.vocab.tokens
        assert lk.sched.kind == ck.sched.kind
        assert np.array_equal(lk.sched.sigma, ck.sched.sigma)
        assert lk.stages == ck.stages
        assert lk.train_config.to_dict() == ck.train_config.to_dict()
        assert set(lk.model_params) == set(ck.model_params)
        for k in ck.model_params:
            assert np.array_equal(lk.model_params[k], ck.model_params[k]), k
            assert lk.model_params[k].dtype == ck.model_params[k].dtype, k
        assert np.array_equal(lk.text_params.embedding, ck.text_params.embedding)
        assert np.array_equal(lk.loss_trace, ck.loss_trace)
        assert lk.codec.is_identity

    def test_resave_is_byte_identical(self, tmp_path):
        ck = tiny_checkpoint()
        first = ck.serialize()
        again = Checkpoint.deserialize(first).serialize()
        assert first == again

    def test_checkpoint_id_is_stable_and_content_sensitive(self):
        a = tiny_checkpoint(seed=0)
        b = tiny_checkpoint(seed=0)
        c = tiny_checkpoint(seed=9)
        assert a.checkpoint_id == b.checkpoint_id
        assert a.checkpoint_id != c.checkpoint_id
        assert len(a.checkpoint_id) == 16

    def test_save_returns_checkpoint_id(self, tmp_path):
        ck = tiny_checkpoint()
        assert ck.save(str(tmp_path / "x.ckpt")) == ck.checkpoint_id


class TestCorruption:
    def test_bad_magic(self):
        data = b"NOTACKPT" + tiny_checkpoint().serialize()[8:]
        with pytest.raises(CheckpointFormatError, match="magic"):
            Checkpoint.deserialize(data)

    def test_flipped_byte_fails_crc(self):
        data = bytearray(tiny_checkpoint().serialize())
        data[len(data) // 2] ^= 0xFF
        with pytest.raises(CheckpointFormatError, match="CRC"):
            Checkpoint.deserialize(bytes(data))

    def test_truncated_payload(self):
        data = tiny_checkpoint().serialize()
        cut = data[: len(data) - 64]
        # restore a valid CRC so the payload check is what trips
        fixed = cut[:-4] + struct.pack("<I", zlib.crc32(cut[:-4]) & 0xFFFFFFFF)
        with pytest.raises(CheckpointFormatError):
            Checkpoint.deserialize(fixed)

    def test_unsupported_version(self):
        data = bytearray(tiny_checkpoint().serialize())
        body = data[:-4]
        struct.pack_into("<I", body, 8, 99)
        body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
        with pytest.raises(CheckpointFormatError, match="version"):
            Checkpoint.deserialize(bytes(body))

    def test_not_a_file(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"hello world, definitely not a model")
        with pytest.raises(CheckpointFormatError):
            Checkpoint.load(str(p))

    def test_magic_constant(self):
        assert tiny_checkpoint().serialize()[:8] == MAGIC
