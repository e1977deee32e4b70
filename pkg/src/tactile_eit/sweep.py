"""Design-space sweep: mean relative voltage change over lattice parameters.

For every (channel width, layer thickness) cell the same randomized batch
of depth-mode touch phantoms is replayed (common random numbers), the
reference and touched frames are simulated, and the per-phantom relative
voltage change is recorded.  The optimum is the cell maximizing the mean.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReferenceError
from .forward import ForwardSolver, MeasurementFrame, Protocol
from .geometry import SensorGeometry, baseline_field, generate_mesh
from .phantom import TouchPhantom, apply_phantom, random_phantom

REFERENCE_FLOOR_V = 1e-15


def v_rel(touch_frame: MeasurementFrame, ref_frame: MeasurementFrame) -> float:
    """Mean per-channel relative voltage change between touch and reference."""
    if touch_frame.protocol_version != ref_frame.protocol_version:
        raise ValueError("frames use different protocols")
    if touch_frame.geometry_hash != ref_frame.geometry_hash:
        raise ValueError("frames belong to different geometries")
    ref = ref_frame.values
    if np.any(np.abs(ref) < REFERENCE_FLOOR_V):
        raise DegenerateReferenceError("reference voltage magnitude below floor")
    return float(np.mean(np.abs(touch_frame.values - ref) / np.abs(ref)))


@dataclass(frozen=True)
class SweepConfig:
    widths: tuple = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    thicknesses: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    phantoms_per_condition: int = 10
    touch_counts: tuple = (1, 2, 3)
    master_seed: int = 0
    target_element_size: float = 2.0
    side_length: float = 100.0
    lattice_pitch: float = 12.5

    def __post_init__(self):
        if any(w < 0 for w in self.widths):
            raise ValueError("widths must be >= 0")
        if any(t <= 0 for t in self.thicknesses):
            raise ValueError("thicknesses must be > 0")
        if self.phantoms_per_condition <= 0 or not self.touch_counts:
            raise ValueError("need at least one phantom per condition")


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list = field(default_factory=list)  # dicts: w, t, mean, std, n, raw

    def cell(self, w: float, t: float) -> dict:
        for c in self.cells:
            if c["w"] == w and c["t"] == t:
                return c
        raise KeyError(f"no sweep cell ({w}, {t})")

    def table(self) -> str:
        """Delimiter-separated table: w, t, mean, std, n."""
        out = io.StringIO()
        out.write("w_mm,t_mm,mean_v_rel,std_v_rel,n\n")
        for c in self.cells:
            out.write(f"{c['w']!r},{c['t']!r},{c['mean']!r},{c['std']!r},{c['n']}\n")
        return out.getvalue()

    def report(self) -> str:
        w_star, t_star = select_optimum(self)
        lines = ["lattice sensitivity sweep",
                 f"phantoms per condition: {self.config.phantoms_per_condition}"
                 f" x {len(self.config.touch_counts)} touch conditions",
                 f"master seed: {self.config.master_seed}", ""]
        lines.append(f"{'w [mm]':>8} {'t [mm]':>8} {'mean V_rel':>12} {'std':>10} {'n':>5}")
        for c in self.cells:
            lines.append(f"{c['w']:>8.2f} {c['t']:>8.2f} {c['mean']:>12.6f}"
                         f" {c['std']:>10.6f} {c['n']:>5d}")
        lines.append("")
        lines.append(f"optimum: w = {w_star} mm, t = {t_star} mm")
        return "\n".join(lines) + "\n"


def _phantom_descriptors(config: SweepConfig) -> list:
    """Common-random-number phantom batch shared by all sweep cells.

    Depth draws use the full declared range; cells with thinner layers clip
    the press depth to 90% of their thickness when applying.
    """
    rng = np.random.default_rng(config.master_seed)
    ref_geom = SensorGeometry(side_length=config.side_length, channel_width=0.0,
                              layer_thickness=max(config.thicknesses),
                              lattice_pitch=config.lattice_pitch)
    descriptors = []
    for n_touches in config.touch_counts:
        for _ in range(config.phantoms_per_condition):
            descriptors.append(random_phantom(n_touches, "depth", rng, ref_geom))
    return descriptors


def _clip_depths(phantom: TouchPhantom, geom: SensorGeometry) -> TouchPhantom:
    from .phantom import TouchPoint
    d_max = 0.9 * geom.layer_thickness
    touches = tuple(
        TouchPoint(center=t.center, radius=t.radius,
                   press_depth=min(t.press_depth, d_max))
        for t in phantom.touches)
    return TouchPhantom(touches, phantom.mode, phantom.seed)


def run_sweep(config: SweepConfig) -> SweepResult:
    """Simulate every (w, t) cell over the shared phantom batch."""
    descriptors = _phantom_descriptors(config)
    protocol = Protocol()
    result = SweepResult(config=config)
    for w in config.widths:
        # narrow channels force a finer mesh (target must resolve w/2)
        target = config.target_element_size
        if 0.0 < w < config.lattice_pitch:
            target = min(target, w / 2.0)
        for t in config.thicknesses:
            geom = SensorGeometry(side_length=config.side_length,
                                  channel_width=w, layer_thickness=t,
                                  lattice_pitch=config.lattice_pitch)
            mesh = generate_mesh(geom, target)
            base = baseline_field(geom, mesh)
            solver = ForwardSolver(mesh, protocol)
            ref = solver.simulate_frame(base)
            raw = []
            for ph in descriptors:
                touched = apply_phantom(base, _clip_depths(ph, geom), mesh)
                raw.append(v_rel(solver.simulate_frame(touched), ref))
            raw = np.array(raw)
            result.cells.append({
                "w": w, "t": t,
                "mean": float(raw.mean()), "std": float(raw.std(ddof=0)),
                "n": len(raw), "raw": raw,
            })
    return result


def select_optimum(result: SweepResult) -> tuple:
    """Cell with the largest mean V_rel; ties prefer smaller w, then t."""
    if not result.cells:
        raise ValueError("empty sweep result")
    best = max(result.cells, key=lambda c: (c["mean"], -c["w"], -c["t"]))
    return best["w"], best["t"]
