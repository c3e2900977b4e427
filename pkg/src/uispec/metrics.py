"""Render-fidelity metrics: pixel MSE and single-scale SSIM.

MSE is the mean squared difference over all pixels and RGB channels on the
0-255 scale.  SSIM follows the standard single-scale formulation on the
luma channel (0.299R + 0.587G + 0.114B): an 11x11 Gaussian window with
sigma 1.5, K1=0.01, K2=0.03, dynamic range 255, reported as the mean of
the local map computed with valid-mode convolution.  Images of different
sizes are reconciled by bilinearly resizing the second image to the first's
dimensions before either metric.

An embedding-similarity scorer (vision-language) can be plugged in through
`EmbeddingScorer`; none ships with the package.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

import numpy as np
from PIL import Image
from scipy.signal import convolve2d

from .errors import EmptyImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0

# Pipeline-level reference scores, kept for report context only; they depend
# on live models and full-resolution browser rendering and are not
# reproduced by this package's test suite.
REFERENCE_PIPELINE_MSE = 40.9930
REFERENCE_PIPELINE_SSIM = 0.854


@runtime_checkable
class EmbeddingScorer(Protocol):
    def score(self, render: np.ndarray, reference: np.ndarray) -> float:
        """Similarity in [-1, 1] between two images in an embedding space."""
        ...


@dataclass(frozen=True)
class MetricsRecord:
    mse: float
    ssim: float
    embed_sim: float | None = None

    def to_json_obj(self) -> dict:
        obj = {"mse": self.mse, "ssim": self.ssim}
        if self.embed_sim is not None:
            obj["embed_sim"] = self.embed_sim
        return obj


def _as_rgb(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.size == 0:
        raise EmptyImage("image has no pixels")
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] < 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    return arr[:, :, :3].astype(np.float64)


def _match_sizes(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a.shape[:2] == b.shape[:2]:
        return a, b
    target = Image.fromarray(np.clip(b, 0, 255).astype(np.uint8))
    resized = target.resize((a.shape[1], a.shape[0]), Image.BILINEAR)
    return a, np.asarray(resized).astype(np.float64)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error on the 0-255 scale; 0 for identical images."""
    fa, fb = _match_sizes(_as_rgb(a), _as_rgb(b))
    return float(np.mean((fa - fb) ** 2))


def _luma(rgb: np.ndarray) -> np.ndarray:
    return 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian kernel."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity on luma; 1.0 for identical images.

    Inputs smaller than the 11x11 window fall back to a window equal to the
    smaller dimension, clamped to an odd size.
    """
    fa, fb = _match_sizes(_as_rgb(a), _as_rgb(b))
    x = _luma(fa)
    y = _luma(fb)
    size = min(SSIM_WINDOW, x.shape[0], x.shape[1])
    if size % 2 == 0:
        size -= 1
    if size < 1:
        raise EmptyImage("image has no pixels")
    window = gaussian_window(size, SSIM_SIGMA)

    mu_x = convolve2d(x, window, mode="valid")
    mu_y = convolve2d(y, window, mode="valid")
    xx = convolve2d(x * x, window, mode="valid")
    yy = convolve2d(y * y, window, mode="valid")
    xy = convolve2d(x * y, window, mode="valid")
    var_x = xx - mu_x ** 2
    var_y = yy - mu_y ** 2
    cov = xy - mu_x * mu_y

    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))


def evaluate_fidelity(
    render: np.ndarray,
    reference: np.ndarray,
    scorer: EmbeddingScorer | None = None,
) -> MetricsRecord:
    """MSE and SSIM between a rendered page and its reference, plus the
    pluggable embedding similarity when a scorer is configured."""
    record = MetricsRecord(
        mse=mse(render, reference),
        ssim=ssim(render, reference),
        embed_sim=scorer.score(render, reference) if scorer is not None else None,
    )
    return record


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def write_csv(
    rows: Iterable[tuple[str, str, MetricsRecord]],
    out_path: str | Path,
) -> None:
    """Batch report: columns render, reference, mse, ssim, embed_sim."""
    with open(out_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["render", "reference", "mse", "ssim", "embed_sim"])
        for render_name, reference_name, record in rows:
            writer.writerow([
                render_name,
                reference_name,
                repr(record.mse),
                repr(record.ssim),
                "" if record.embed_sim is None else repr(record.embed_sim),
            ])
