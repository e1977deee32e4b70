"""Touch phantoms: conductivity perturbations from circular contacts.

Two modes.  Contrast mode mirrors the dataset construction: channel
elements inside a touch disc get conductivity ``f * sigma_eff`` with a
dimensionless factor f.  Depth mode is the physical press model: the local
sheet is compressed, scaling conductivity by ``(t - d) / t``.  Matrix
(silicone) elements are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import OutOfDomainError
from .geometry import (CHANNEL, ConductivityField, Mesh, ReconstructionImage,
                       SensorGeometry, d4_apply, rasterize)

CONTRAST_RANGE = (0.05, 2.0)
CONTRAST_RADIUS_RANGE = (3.75, 13.75)   # diameters 7.5 .. 27.5 mm
DEPTH_RADIUS_RANGE = (6.25, 8.75)
DEPTH_RANGE_MM = (1.0, 5.0)


@dataclass(frozen=True)
class TouchPoint:
    """One circular contact; exactly one of contrast / press_depth is set."""

    center: tuple
    radius: float
    contrast: Optional[float] = None
    press_depth: Optional[float] = None

    def __post_init__(self):
        if (self.contrast is None) == (self.press_depth is None):
            raise ValueError("set exactly one of contrast or press_depth")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.contrast is not None and not (0.05 <= self.contrast <= 2.0):
            raise ValueError("contrast factor outside [0.05, 2.0]")


@dataclass(frozen=True)
class TouchPhantom:
    """A set of 1-5 touches sharing one mode."""

    touches: tuple
    mode: str  # "contrast" | "depth"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("contrast", "depth"):
            raise ValueError("mode must be 'contrast' or 'depth'")
        for t in self.touches:
            if self.mode == "contrast" and t.contrast is None:
                raise ValueError("contrast-mode phantom with depth touch")
            if self.mode == "depth" and t.press_depth is None:
                raise ValueError("depth-mode phantom with contrast touch")

    def to_text(self) -> str:
        lines = [f"phantom mode={self.mode} seed={self.seed if self.seed is not None else ''}"]
        for t in self.touches:
            val = t.contrast if self.mode == "contrast" else t.press_depth
            lines.append(f"touch {t.center[0]!r} {t.center[1]!r} {t.radius!r} {val!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TouchPhantom":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        head = dict(part.split("=", 1) for part in lines[0].split()[1:])
        mode = head["mode"]
        seed = int(head["seed"]) if head.get("seed") else None
        touches = []
        for ln in lines[1:]:
            _, x, y, r, v = ln.split()
            kw = {"contrast": float(v)} if mode == "contrast" else {"press_depth": float(v)}
            touches.append(TouchPoint(center=(float(x), float(y)), radius=float(r), **kw))
        return cls(touches=tuple(touches), mode=mode, seed=seed)

    def transformed(self, sym_id: int, side_length: float) -> "TouchPhantom":
        """The phantom moved by a symmetry of the square."""
        moved = []
        for t in self.touches:
            c = d4_apply(sym_id, np.array(t.center, dtype=float), side_length)
            moved.append(TouchPoint(center=(float(c[0]), float(c[1])), radius=t.radius,
                                    contrast=t.contrast, press_depth=t.press_depth))
        return TouchPhantom(tuple(moved), self.mode, self.seed)


def _check_inside(phantom: TouchPhantom, geom: SensorGeometry):
    L = geom.side_length
    for t in phantom.touches:
        x, y = t.center
        if not (t.radius - 1e-9 <= x <= L - t.radius + 1e-9
                and t.radius - 1e-9 <= y <= L - t.radius + 1e-9):
            raise OutOfDomainError(f"touch at {t.center} r={t.radius} leaves the domain")
        # depth 0 is the degenerate no-op press
        if t.press_depth is not None and not 0 <= t.press_depth < geom.layer_thickness:
            raise OutOfDomainError("press depth must lie in [0, layer thickness)")


def apply_phantom(baseline: ConductivityField, phantom: TouchPhantom,
                  mesh: Mesh) -> ConductivityField:
    """Perturbed conductivity field; overlapping discs resolve last-writer-wins."""
    geom = mesh.geom
    _check_inside(phantom, geom)
    values = baseline.values.copy()
    cents = mesh.centroids
    channel = mesh.element_region == CHANNEL
    t_layer = geom.layer_thickness
    for touch in phantom.touches:
        dx = cents[:, 0] - touch.center[0]
        dy = cents[:, 1] - touch.center[1]
        inside = (dx * dx + dy * dy <= touch.radius ** 2) & channel
        if touch.contrast is not None:
            values[inside] = touch.contrast * baseline.values[inside]
        else:
            values[inside] = baseline.values[inside] * (t_layer - touch.press_depth) / t_layer
    return ConductivityField(values, baseline.geometry_hash)


def random_phantom(n_touches: int, mode: str, rng: np.random.Generator,
                   geom: SensorGeometry, seed: Optional[int] = None) -> TouchPhantom:
    """Draw a phantom with the declared radius/intensity distributions.

    Centres are uniform over the domain inset by the touch radius, so every
    disc lies fully inside the sensing square.
    """
    if not 1 <= n_touches <= 5:
        raise ValueError("n_touches must be in [1, 5]")
    L = geom.side_length
    touches = []
    for _ in range(n_touches):
        if mode == "contrast":
            radius = rng.uniform(*CONTRAST_RADIUS_RANGE)
            intensity = {"contrast": float(rng.uniform(*CONTRAST_RANGE))}
        elif mode == "depth":
            radius = rng.uniform(*DEPTH_RADIUS_RANGE)
            d_hi = min(DEPTH_RANGE_MM[1], 0.9 * geom.layer_thickness)
            intensity = {"press_depth": float(rng.uniform(DEPTH_RANGE_MM[0], d_hi))}
        else:
            raise ValueError("mode must be 'contrast' or 'depth'")
        x = rng.uniform(radius, L - radius)
        y = rng.uniform(radius, L - radius)
        touches.append(TouchPoint(center=(float(x), float(y)), radius=float(radius),
                                  **intensity))
    return TouchPhantom(touches=tuple(touches), mode=mode, seed=seed)


def ground_truth_image(phantom: TouchPhantom, baseline: ConductivityField,
                       mesh: Mesh) -> ReconstructionImage:
    """Rasterized conductivity change produced by the phantom."""
    touched = apply_phantom(baseline, phantom, mesh)
    return rasterize(touched.values - baseline.values, mesh)
