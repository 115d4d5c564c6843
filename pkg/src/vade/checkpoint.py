"""Single-file checkpoint container.

Layout: 8-byte magic, u32 version, u32 header length, JSON header (configs,
vocab, payload manifest), concatenated little-endian float32 payloads in
header order, u32 CRC32 footer over everything before it. Serialization is
canonical (sorted keys, fixed separators), so save -> load -> save is
byte-identical and the checkpoint id (sha256 prefix of the bytes) is stable.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .codec import Codec, CodecConfig
from .denoiser import DenoiserConfig
from .schedule import NoiseSchedule
from .text import TextParams, Vocab

MAGIC = b"VADECKPT"
VERSION = 1


class CheckpointFormatError(ValueError):
    """File is not a checkpoint, is an unsupported version, or is corrupt."""


@dataclass
class Checkpoint:
    denoiser_config: DenoiserConfig
    model_params: dict
    text_params: TextParams
    vocab: Vocab
    sched: NoiseSchedule
    codec: Codec
    train_config: object
    stages: list
    loss_trace: np.ndarray

    @property
    def checkpoint_id(self) -> str:
        return hashlib.sha256(self.serialize()).hexdigest()[:16]

    def _payloads(self) -> list:
        items = [(f"model.{k}", v) for k, v in sorted(self.model_params.items())]
        items += [("text.embedding", self.text_params.embedding),
                  ("text.proj", self.text_params.proj),
                  ("text.bias", self.text_params.bias)]
        items += [(f"codec.{k}", v) for k, v in sorted(self.codec.params.items())]
        items += [("loss_trace", self.loss_trace)]
        return items

    def serialize(self) -> bytes:
        payloads = self._payloads()
        header = {
            "denoiser": self.denoiser_config.to_dict(),
            "schedule": self.sched.to_dict(),
            "codec": self.codec.config.to_dict(),
            "train": self.train_config.to_dict() if hasattr(self.train_config, "to_dict")
                     else dict(self.train_config),
            "stages": [list(s) for s in self.stages],
            "vocab": list(self.vocab.tokens),
            "payloads": [
                {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)}
                for name, arr in payloads
            ],
        }
        hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        body = bytearray()
        body += MAGIC
        body += struct.pack("<II", VERSION, len(hbytes))
        body += hbytes
        for _, arr in payloads:
            body += np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
        body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
        return bytes(body)

    def save(self, path: str) -> str:
        data = self.serialize()
        with open(path, "wb") as f:
            f.write(data)
        return hashlib.sha256(data).hexdigest()[:16]

    @staticmethod
    def load(path: str) -> "Checkpoint":
        with open(path, "rb") as f:
            data = f.read()
        return Checkpoint.deserialize(data)

    @staticmethod
    def deserialize(data: bytes) -> "Checkpoint":
        from .training import TrainConfig  # runtime import; training imports this module

        if len(data) < 20 or data[:8] != MAGIC:
            raise CheckpointFormatError("not a checkpoint file (bad magic)")
        stored_crc = struct.unpack("<I", data[-4:])[0]
        if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
            raise CheckpointFormatError("corrupt checkpoint (CRC mismatch)")
        version, hlen = struct.unpack("<II", data[8:16])
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        try:
            header = json.loads(data[16:16 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointFormatError(f"unreadable checkpoint header: {e}") from e
        offset = 16 + hlen
        arrays = {}
        for meta in header["payloads"]:
            dtype = np.dtype(meta["dtype"]).newbyteorder("<")
            count = int(np.prod(meta["shape"])) if meta["shape"] else 1
            nbytes = dtype.itemsize * count
            if offset + nbytes > len(data) - 4:
                raise CheckpointFormatError("truncated checkpoint payload")
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
            arrays[meta["name"]] = arr.reshape(meta["shape"]).astype(np.dtype(meta["dtype"]))
            offset += nbytes
        if offset != len(data) - 4:
            raise CheckpointFormatError("checkpoint payload length mismatch")

        model_params = {k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")}
        codec_params = {k[len("codec."):]: v for k, v in arrays.items() if k.startswith("codec.")}
        return Checkpoint(
            denoiser_config=DenoiserConfig.from_dict(header["denoiser"]),
            model_params=model_params,
            text_params=TextParams(embedding=arrays["text.embedding"],
                                   proj=arrays["text.proj"], bias=arrays["text.bias"]),
            vocab=Vocab(tuple(header["vocab"])),
            sched=NoiseSchedule.from_dict(header["schedule"]),
            codec=Codec(CodecConfig.from_dict(header["codec"]), codec_params),
            train_config=TrainConfig.from_dict(header["train"]),
            stages=[tuple(s) for s in header["stages"]],
            loss_trace=arrays["loss_trace"],
        )
