"""Image-quality metrics for reconstruction evaluation: CC, RE, PSNR, SSIM.

Reported metrics are computed on min-max normalized image pairs, matching
the presentation convention of the reconstruction figures; the raw metric
functions themselves make no normalization assumptions beyond their stated
preconditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve

from .errors import ConstantImageError, ZeroReferenceError

SSIM_WINDOW = 7
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _flat(img) -> np.ndarray:
    pixels = getattr(img, "pixels", img)
    return np.asarray(pixels, dtype=float).ravel()


def _image(img) -> np.ndarray:
    pixels = getattr(img, "pixels", img)
    return np.asarray(pixels, dtype=float)


def normalize(img) -> np.ndarray:
    """Min-max normalization to [0, 1]; constant images map to zeros."""
    a = _image(img)
    lo, hi = a.min(), a.max()
    if hi - lo <= 0:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def cc(x, y) -> float:
    """Pearson correlation coefficient over flattened pixels."""
    a, b = _flat(x), _flat(y)
    da = a - a.mean()
    db = b - b.mean()
    na = np.linalg.norm(da)
    nb = np.linalg.norm(db)
    if na == 0 and nb == 0:
        raise ConstantImageError("both images are constant")
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(da, db) / (na * nb))


def re(x, y) -> float:
    """Relative image error ||x - y|| / ||y|| with y as the reference."""
    a, b = _flat(x), _flat(y)
    nb = np.linalg.norm(b)
    if nb == 0:
        raise ZeroReferenceError("reference image has zero norm")
    return float(np.linalg.norm(a - b) / nb)


relative_error = re


def psnr(x, y, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are equal."""
    a, b = _flat(x), _flat(y)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


_SSIM_KERNEL = _gaussian_kernel()


def ssim(x, y) -> float:
    """Mean local structural similarity (Gaussian 7x7 window, reflect edges).

    Inputs are expected on a common [0, 1] scale (dynamic range L = 1).
    """
    a, b = _image(x), _image(y)
    c1 = (SSIM_K1) ** 2
    c2 = (SSIM_K2) ** 2

    def blur(img):
        return convolve(img, _SSIM_KERNEL, mode="reflect")

    mu_a = blur(a)
    mu_b = blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    """All four metrics for one reconstruction/reference pair."""

    cc: float
    re: float
    psnr_db: float
    ssim: float

    @property
    def psnr_finite(self) -> bool:
        return math.isfinite(self.psnr_db)

    def as_dict(self) -> dict:
        return {"cc": self.cc, "re": self.re, "psnr_db": self.psnr_db,
                "ssim": self.ssim}


def evaluate(reconstruction, reference) -> MetricReport:
    """Metrics on the min-max normalized pair (reference normalized last)."""
    a = normalize(reconstruction)
    b = normalize(reference)
    return MetricReport(cc=cc(a, b), re=re(a, b), psnr_db=psnr(a, b, peak=1.0),
                        ssim=ssim(a, b))


def evaluate_batch(reconstructions, references) -> dict:
    """Per-sample reports plus the batch mean of each metric."""
    reports = [evaluate(x, y) for x, y in zip(reconstructions, references)]
    finite_psnr = [r.psnr_db for r in reports if r.psnr_finite]
    means = {
        "cc": float(np.mean([r.cc for r in reports])),
        "re": float(np.mean([r.re for r in reports])),
        "psnr_db": float(np.mean(finite_psnr)) if finite_psnr else math.inf,
        "ssim": float(np.mean([r.ssim for r in reports])),
    }
    return {"per_sample": reports, "mean": means}
