"""Grayscale PNG IO. Scans are written as 16-bit grayscale so that small
additive lesion fields survive quantization; masks as 8-bit 0/255. The
*_bytes variants return encoded PNG bytes for wire transport."""

from __future__ import annotations

import io
import os

import numpy as np
from PIL import Image


def write_gray16(path: str, img: np.ndarray) -> None:
    """Write a [0,1] float image as 16-bit grayscale PNG."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image")
    if img.min() < -1e-9 or img.max() > 1 + 1e-9:
        raise ValueError(f"image values outside [0,1]: [{img.min():.4g}, {img.max():.4g}]")
    q = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(q).save(path)  # uint16 maps to 16-bit grayscale


def write_gray8(path: str, img: np.ndarray) -> None:
    """Write a [0,1] float image as 8-bit grayscale PNG (thumbnails, overlays)."""
    img = np.asarray(img, dtype=np.float64)
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(q, mode="L").save(path)


def read_gray(path: str) -> np.ndarray:
    """Read an 8- or 16-bit grayscale PNG to float64 in [0,1]."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected grayscale, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.int32):
        return arr.astype(np.float64) / 65535.0
    raise ValueError(f"{path}: unsupported PNG dtype {arr.dtype}")


def write_mask(path: str, mask: np.ndarray) -> None:
    """Write a {0,1} mask as 8-bit 0/255 PNG."""
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path)


def read_mask(path: str) -> np.ndarray:
    """Read a mask PNG back to a {0,1} uint8 array."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    return (arr > 127).astype(np.uint8)


def write_rgb8(path: str, arr: np.ndarray) -> None:
    """Write an [H,W,3] uint8 array as an RGB PNG."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError("expected [H,W,3] uint8")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(path)


def gray16_bytes(img: np.ndarray) -> bytes:
    """Encode a [0,1] float image as 16-bit grayscale PNG bytes."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image")
    q = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(q).save(buf, format="PNG")
    return buf.getvalue()


def gray8_bytes(img: np.ndarray) -> bytes:
    """Encode a [0,1] float image as 8-bit grayscale PNG bytes."""
    img = np.asarray(img, dtype=np.float64)
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(q, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def rgb8_bytes(arr: np.ndarray) -> bytes:
    """Encode an [H,W,3] uint8 array as RGB PNG bytes."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError("expected [H,W,3] uint8")
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_gray(data: bytes) -> np.ndarray:
    """Decode PNG bytes (8- or 16-bit grayscale) to float64 in [0,1]."""
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise ValueError(f"expected grayscale, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.int32):
        return arr.astype(np.float64) / 65535.0
    raise ValueError(f"unsupported PNG dtype {arr.dtype}")
