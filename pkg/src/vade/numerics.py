"""Dense-array numerics: seeded RNG streams, convolution, downsampling,
symmetric eigendecomposition, PSD square roots, finite differences.

Model math runs in float32 elsewhere; everything here defaults to float64
because these routines back the metric and oracle paths. Arrays are treated
as immutable once returned; nothing in this module writes to its inputs.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class NotPositiveSemidefiniteError(ValueError):
    """Raised when a matrix required to be PSD has a genuinely negative spectrum."""


class SeededRng:
    """Counter-based random stream keyed by (seed, stream_id).

    Wraps numpy's Philox generator. Streams with different ids are
    statistically independent, and a given (seed, stream_id) pair always
    replays the same sequence, so parallel call sites can be given stable
    substreams via split() without coordinating draw order.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        )

    def split(self, stream_id: int) -> "SeededRng":
        """Fresh independent stream under the same seed."""
        return SeededRng(self.seed, stream_id)

    def normal(self, shape, dtype=np.float64) -> np.ndarray:
        return gaussian_draw(self, shape, dtype=dtype)

    def uniform(self, low: float, high: float, shape=()) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def gaussian_draw(rng: SeededRng, shape, dtype=np.float64) -> np.ndarray:
    """Standard normal tensor of the given shape from the stream.

    Zero-sized shapes are rejected: silently returning empty tensors has
    hidden more than one broadcasting bug downstream.
    """
    shape = tuple(int(s) for s in (shape if np.iterable(shape) else (shape,)))
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ValueError(f"gaussian_draw requires a non-empty shape, got {shape}")
    return rng._gen.standard_normal(size=shape, dtype=np.float64).astype(dtype, copy=False)


def conv2d(img: np.ndarray, kernel: np.ndarray, stride: int = 1, pad: str = "same") -> np.ndarray:
    """2-D multi-channel correlation of img [H,W,Cin] with kernel [k,k,Cin,Cout].

    pad="same" zero-pads so that output spatial size is ceil(H/stride);
    pad="valid" keeps only fully covered windows. Equivalent to the naive
    quadruple loop (see tests); implemented with stride tricks + tensordot.
    """
    img = np.asarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if img.ndim != 3 or kernel.ndim != 4:
        raise ValueError("conv2d expects img [H,W,Cin] and kernel [k,k,Cin,Cout]")
    h, w, cin = img.shape
    k, k2, kcin, _cout = kernel.shape
    if k != k2:
        raise ValueError("kernel must be square")
    if kcin != cin:
        raise ValueError(f"kernel Cin {kcin} does not match image Cin {cin}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if pad == "same":
        out_h = -(-h // stride)
        out_w = -(-w // stride)
        pad_h = max((out_h - 1) * stride + k - h, 0)
        pad_w = max((out_w - 1) * stride + k - w, 0)
        top, left = pad_h // 2, pad_w // 2
        img = np.pad(img, ((top, pad_h - top), (left, pad_w - left), (0, 0)))
    elif pad == "valid":
        if k > h or k > w:
            raise ValueError(f"kernel {k} larger than image {h}x{w} with valid padding")
    else:
        raise ValueError(f"pad must be 'same' or 'valid', got {pad!r}")
    win = np.lib.stride_tricks.sliding_window_view(img, (k, k), axis=(0, 1))
    win = win[::stride, ::stride]  # [oh, ow, Cin, k, k]
    return np.tensordot(win, kernel, axes=([3, 4, 2], [0, 1, 2]))


_GAUSS5 = None


def _gauss5_kernel() -> np.ndarray:
    # 5-tap sigma=1 binomial-ish Gaussian, normalized to sum 1
    global _GAUSS5
    if _GAUSS5 is None:
        x = np.arange(-2, 3, dtype=np.float64)
        g = np.exp(-0.5 * x * x)
        g /= g.sum()
        _GAUSS5 = np.outer(g, g)
    return _GAUSS5


def downsample2x(img: np.ndarray, mode: str = "mean") -> np.ndarray:
    """Halve a [H,W] image: 2x2 mean pooling or Gaussian blur + stride 2.

    Odd trailing rows/cols are dropped (a 1-pixel crop), matching the usual
    multi-scale pyramid convention.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("downsample2x expects a 2-D image")
    h, w = img.shape
    if h < 2 or w < 2:
        raise ValueError("image too small to downsample")
    h2, w2 = h - h % 2, w - w % 2
    img = img[:h2, :w2]
    if mode == "mean":
        return img.reshape(h2 // 2, 2, w2 // 2, 2).mean(axis=(1, 3))
    if mode == "gauss":
        # reflect-pad so the sum-1 filter preserves constants at the borders
        padded = np.pad(img, 2, mode="reflect")
        blurred = conv2d(padded[:, :, None], _gauss5_kernel()[:, :, None, None], pad="valid")[:, :, 0]
        return blurred[::2, ::2]
    raise ValueError(f"mode must be 'mean' or 'gauss', got {mode!r}")


def jacobi_eigh(m: np.ndarray, tol: float = 1e-14, max_sweeps: int = 64):
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Returns (w, V) with eigenvalues ascending and columns of V the matching
    orthonormal eigenvectors, m ~= V @ diag(w) @ V.T. Intended for the small
    matrices used here (dim <= 128); cost is O(n^3) per sweep.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("jacobi_eigh expects a square matrix")
    n = m.shape[0]
    scale = np.max(np.abs(m)) if n else 0.0
    if scale > 0 and np.max(np.abs(m - m.T)) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")
    a = (m + m.T) / 2.0
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    norm = np.linalg.norm(a)
    thresh = tol * max(norm, 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(a.diagonal() ** 2), 0.0))
        if off <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= thresh / (n * n):
                    continue
                # classic 2x2 rotation: stable t = sign/( |theta| + sqrt(theta^2+1) )
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = a.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def psd_sqrt(m: np.ndarray, clamp_rel: float = 1e-8) -> np.ndarray:
    """Symmetric PSD square root via Jacobi eigendecomposition.

    Eigenvalues in [-clamp_rel * max_eig, 0) are treated as rounding noise
    and clamped to zero; anything more negative raises, because silently
    sqrt-ing an indefinite matrix corrupts Frechet distances downstream.
    """
    w, v = jacobi_eigh(m)
    top = max(float(w[-1]), 0.0)
    floor = -clamp_rel * max(top, 1e-300)
    if float(w[0]) < floor:
        raise NotPositiveSemidefiniteError(
            f"eigenvalue {w[0]:.3e} below PSD clamp floor {floor:.3e}"
        )
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return (root + root.T) / 2.0


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar f at x, elementwise.

    O(2n) evaluations of f; used as the independent oracle for hand-written
    backprop. Raises on non-finite f values rather than returning NaNs.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite objective at element {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
