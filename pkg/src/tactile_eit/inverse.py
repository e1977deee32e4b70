"""Image reconstruction from boundary-voltage differences.

Two one-shot inverse operators on the 48x48 pixel basis:

* TikhonovSolver: regularized least squares
  ``dsigma = (J^T J + lambda * s * I)^-1 J^T dV`` with the trace-normalized
  factor ``s = trace(J^T J) / n_pixels``, solved in the equivalent dual
  (104 x 104) form and cached as a Cholesky factorization.
* LinearInverseMap: a data-fit affine map ``F dV + b`` obtained by
  closed-form ridge regression on simulated (dV, ground-truth) pairs --
  the smallest deterministic embodiment of a learned inverse operator.

Both are immutable after construction and safe to use concurrently.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import HashMismatchError, InsufficientDataError
from .geometry import RASTER_N, ReconstructionImage

DEFAULT_LAMBDA = 1e-2

_MAGIC = b"TEIT-INV-1\n"


def _as_dv(frame_or_values) -> np.ndarray:
    values = getattr(frame_or_values, "values", frame_or_values)
    return np.asarray(values, dtype=float).ravel()


class TikhonovSolver:
    """One-step Tikhonov inversion with a cached factorization."""

    def __init__(self, jacobian_raster: np.ndarray, lam: float = DEFAULT_LAMBDA,
                 geometry_hash: str = ""):
        if lam <= 0:
            raise ValueError("regularization factor must be positive")
        self.jacobian = np.asarray(jacobian_raster, dtype=float)
        self.lam = float(lam)
        self.geometry_hash = geometry_hash
        n_meas, n_pix = self.jacobian.shape
        gram = self.jacobian @ self.jacobian.T          # (n_meas, n_meas)
        self.trace_scale = np.trace(gram) / n_pix       # s = tr(J^T J) / n_pix
        self._factor = cho_factor(gram + self.lam * self.trace_scale * np.eye(n_meas))

    @cached_property
    def resolution_scale(self) -> np.ndarray:
        """sqrt of the diagonal of the model resolution matrix J^T C^-1 J.

        Dividing a reconstruction by this diagonal removes the spatially
        varying sensitivity gain of the regularized operator; for a point
        perturbation the compensated image peaks exactly at the source
        pixel (Cauchy-Schwarz in the C^-1 inner product).  Pixels outside
        the conductive region keep scale 1 (their values are exactly 0).
        """
        m_diag = np.einsum("mp,mp->p", self.jacobian,
                           cho_solve(self._factor, self.jacobian))
        active = m_diag > 1e-14 * m_diag.max()
        return np.where(active, np.sqrt(np.maximum(m_diag, 1e-300)), 1.0)

    def reconstruct(self, dv, geometry_hash: str | None = None,
                    compensate: bool = False) -> ReconstructionImage:
        """Solve for the conductivity-change image.

        ``compensate=True`` divides by resolution_scale, which sharpens
        peak localization but leaves the plain Tikhonov estimate untouched
        by default.
        """
        if geometry_hash is None:
            geometry_hash = getattr(dv, "geometry_hash", None)
        if geometry_hash and self.geometry_hash and geometry_hash != self.geometry_hash:
            raise HashMismatchError("frame and solver belong to different geometries")
        values = _as_dv(dv)
        x = self.jacobian.T @ cho_solve(self._factor, values)
        if compensate:
            x = x / self.resolution_scale
        return ReconstructionImage(x.reshape(RASTER_N, RASTER_N), self.geometry_hash)

    def normal_equation_residual(self, dv, image: ReconstructionImage) -> float:
        """Relative residual of (J^T J + lam*s*I) x = J^T dV (consistency check)."""
        values = _as_dv(dv)
        x = image.pixels.ravel()
        rhs = self.jacobian.T @ values
        lhs = self.jacobian.T @ (self.jacobian @ x) + self.lam * self.trace_scale * x
        return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))

    def save(self, path):
        _write_container(path, kind="tikhonov",
                         params={"lambda": self.lam,
                                 "geometry_hash": self.geometry_hash},
                         arrays={"jacobian": self.jacobian})

    @classmethod
    def load(cls, path) -> "TikhonovSolver":
        params, arrays = _read_container(path, expect_kind="tikhonov")
        return cls(arrays["jacobian"], lam=params["lambda"],
                   geometry_hash=params["geometry_hash"])


def tikhonov_reconstruct(solver: TikhonovSolver, dv, **kw) -> ReconstructionImage:
    return solver.reconstruct(dv, **kw)


@dataclass
class LinearInverseMap:
    """Affine inverse operator: image = F dV + b (ridge-regressed)."""

    matrix: np.ndarray            # (n_pixels, n_meas)
    bias: np.ndarray              # (n_pixels,)
    ridge: float
    geometry_hash: str = ""
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float).ravel()
        if not (np.all(np.isfinite(self.matrix)) and np.all(np.isfinite(self.bias))):
            raise ValueError("inverse map contains non-finite entries")

    def apply(self, dv, geometry_hash: str | None = None) -> ReconstructionImage:
        if geometry_hash is None:
            geometry_hash = getattr(dv, "geometry_hash", None)
        if geometry_hash and self.geometry_hash and geometry_hash != self.geometry_hash:
            raise HashMismatchError("frame and map belong to different geometries")
        x = self.matrix @ _as_dv(dv) + self.bias
        return ReconstructionImage(x.reshape(RASTER_N, RASTER_N), self.geometry_hash)

    def save(self, path):
        _write_container(path, kind="linear-map",
                         params={"ridge": self.ridge,
                                 "geometry_hash": self.geometry_hash,
                                 "training_meta": self.training_meta},
                         arrays={"matrix": self.matrix, "bias": self.bias})

    @classmethod
    def load(cls, path) -> "LinearInverseMap":
        params, arrays = _read_container(path, expect_kind="linear-map")
        return cls(arrays["matrix"], arrays["bias"], ridge=params["ridge"],
                   geometry_hash=params["geometry_hash"],
                   training_meta=params.get("training_meta", {}))


DEFAULT_RIDGE = 1e-4


def fit_linear_map(dvs: np.ndarray, images: np.ndarray, ridge: float = DEFAULT_RIDGE,
                   geometry_hash: str = "", min_samples: int = 500,
                   fit_intercept: bool = False,
                   training_meta: dict | None = None) -> LinearInverseMap:
    """Closed-form ridge fit of image = F dV + b.

    The penalty is ``ridge * s_x * ||F||_F^2`` with ``s_x`` the mean squared
    feature scale, so the parameter is dimensionless.  Deterministic: no
    iteration, fixed BLAS reductions.

    ``fit_intercept`` defaults to False: difference imaging must map a zero
    voltage change to the zero image, and a fitted intercept (the mean
    training image) badly degrades the correlation of weak-contrast
    reconstructions.  With ``fit_intercept=True`` the estimator is the
    plain centred ridge solution, whose large-ridge limit is F -> 0 and
    b -> mean target image.
    """
    x = np.asarray(dvs, dtype=float)
    y = np.asarray(images, dtype=float).reshape(len(x), -1)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("need matching (n, 104) inputs and (n, 2304) targets")
    if len(x) < min_samples:
        raise InsufficientDataError(f"need at least {min_samples} pairs, got {len(x)}")
    if fit_intercept:
        x_mean = x.mean(axis=0)
        y_mean = y.mean(axis=0)
    else:
        x_mean = np.zeros(x.shape[1])
        y_mean = np.zeros(y.shape[1])
    xc = x - x_mean
    yc = y - y_mean
    gram = xc.T @ xc
    s_x = np.trace(gram) / gram.shape[0]
    reg = ridge * s_x
    f_t = np.linalg.solve(gram + reg * np.eye(gram.shape[0]), xc.T @ yc)
    matrix = f_t.T
    bias = y_mean - matrix @ x_mean
    meta = {"n_samples": int(len(x)), "fit_intercept": fit_intercept,
            **(training_meta or {})}
    return LinearInverseMap(matrix, bias, ridge=ridge, geometry_hash=geometry_hash,
                            training_meta=meta)


def apply_linear_map(inv_map: LinearInverseMap, dv) -> ReconstructionImage:
    return inv_map.apply(dv)


# -- persistence --------------------------------------------------------------

def _write_container(path, kind: str, params: dict, arrays: dict):
    """Versioned binary container: magic, json header, raw float64 bodies."""
    header = {
        "kind": kind,
        "params": params,
        "arrays": {k: list(v.shape) for k, v in arrays.items()},
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for name in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def _read_container(path, expect_kind: str):
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError("not a tactile-eit inverse container")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        if header["kind"] != expect_kind:
            raise ValueError(f"container holds {header['kind']!r}, expected {expect_kind!r}")
        arrays = {}
        for name in sorted(header["arrays"]):
            shape = tuple(header["arrays"][name])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header["params"], arrays
