"""Class-activation heatmaps from exported activation/gradient tensors.

Given the last convolutional layer's activations A (H, W, K) and the gradient
tensor of the class score with respect to them, the map is

    weight[k] = mean over (i,j) of grad[i,j,k]
    heat[i,j] = max(0, sum_k weight[k] * A[i,j,k])

followed by max-normalization, corner-aligned bilinear upsampling to the image
resolution, and an optional blue-to-red overlay blend. The channel sum runs as
an explicit fixed-order loop rather than a BLAS dot so results never depend on
BLAS threading.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

OVERLAY_BLEND = 0.4

# 256-entry blue->red map: entry i is (i, 0, 255-i)
_COLORMAP = np.stack(
    [np.arange(256), np.zeros(256, dtype=np.int64), 255 - np.arange(256)], axis=1
).astype(np.float64)


def _check_rank3(tensor: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be rank-3 (height, width, channels)")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"{name} dims must all be >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def channel_weights(grads: np.ndarray) -> np.ndarray:
    """Global average of the gradient over each channel's spatial extent."""
    arr = _check_rank3(grads, "gradient tensor")
    return arr.mean(axis=(0, 1))


def cam(activations: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Rectified weighted channel sum; the raw (pre-normalization) heatmap."""
    acts = _check_rank3(activations, "activation tensor")
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) != acts.shape[2]:
        raise ValueError(
            f"weights length {w.shape} does not match {acts.shape[2]} channels"
        )
    heat = np.zeros(acts.shape[:2], dtype=np.float64)
    for k in range(len(w)):
        heat += w[k] * acts[:, :, k]
    return np.maximum(heat, 0.0)


def _axis_positions(n_src: int, n_dst: int):
    if n_src == 1 or n_dst == 1:
        return np.zeros(n_dst, dtype=np.intp), np.zeros(n_dst)
    pos = np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))
    i0 = np.minimum(np.floor(pos).astype(np.intp), n_src - 2)
    return i0, pos - i0


def normalize_upsample(heatmap: np.ndarray, height: int, width: int) -> np.ndarray:
    """Divide by the max (no-op when all-zero), then corner-aligned bilinear
    interpolation to (height, width). Output clipped into [0, 1] to absorb
    interpolation rounding."""
    hm = np.asarray(heatmap, dtype=np.float64)
    if hm.ndim != 2:
        raise ValueError("heatmap must be 2-D")
    if np.any(hm < 0):
        raise ValueError("heatmap entries must be >= 0")
    src_h, src_w = hm.shape
    if height < src_h or width < src_w:
        raise ValueError("target size must be >= source size")
    peak = hm.max()
    if peak > 0:
        hm = hm / peak
    r0, rf = _axis_positions(src_h, height)
    c0, cf = _axis_positions(src_w, width)
    r1 = np.minimum(r0 + 1, src_h - 1)
    c1 = np.minimum(c0 + 1, src_w - 1)
    rf = rf[:, None]
    cf = cf[None, :]
    top = hm[np.ix_(r0, c0)] * (1 - cf) + hm[np.ix_(r0, c1)] * cf
    bottom = hm[np.ix_(r1, c0)] * (1 - cf) + hm[np.ix_(r1, c1)] * cf
    return np.clip(top * (1 - rf) + bottom * rf, 0.0, 1.0)


def overlay(heatmap: np.ndarray, image: np.ndarray, blend: float = OVERLAY_BLEND) -> np.ndarray:
    """Blend a normalized heatmap over an RGB image:
    out = (1-blend)*image + blend*colormap(heatmap), rounded and clamped."""
    hm = np.asarray(heatmap, dtype=np.float64)
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("image must be (height, width, 3)")
    if hm.shape != img.shape[:2]:
        raise ValueError(f"heatmap {hm.shape} does not match image {img.shape[:2]}")
    if np.any((hm < 0) | (hm > 1)):
        raise ValueError("heatmap must be normalized into [0, 1]")
    idx = np.clip(np.rint(hm * 255).astype(np.intp), 0, 255)
    colored = _COLORMAP[idx]
    mixed = (1.0 - blend) * img + blend * colored
    return np.clip(np.rint(mixed), 0, 255).astype(np.uint8)


def heatmap_from_tensors(activations: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Raw heatmap from matching activation/gradient tensors."""
    acts = _check_rank3(activations, "activation tensor")
    grd = _check_rank3(grads, "gradient tensor")
    if acts.shape != grd.shape:
        raise ValueError(
            f"activation dims {acts.shape} do not match gradient dims {grd.shape}"
        )
    return cam(acts, channel_weights(grd))


def read_image_rgb(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def write_image_rgb(image: np.ndarray, path: str) -> None:
    arr = np.asarray(image)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected a (height, width, 3) uint8 image")
    Image.fromarray(arr, mode="RGB").save(path)
