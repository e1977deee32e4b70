"""Sensor domain, lattice mask, structured FEM mesh and the 48x48 raster basis.

The sensing sheet is a square of side L with 16 boundary electrodes and a
conductive lattice: horizontal and vertical strips of width ``w`` on a
uniform grid of pitch ``p`` anchored at the domain centre.  The mesh is a
structured triangulation whose breakpoints include every strip edge and
every electrode endpoint, with cell diagonals chosen per quadrant so that
the whole triangulation maps onto itself under all eight symmetries of the
square.  That exact dihedral symmetry is what downstream augmentation and
symmetry-oracle checks rely on.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import MeshResolutionError

# Output image basis: the sensing square rasterized to 48 x 48 pixels.
RASTER_N = 48

# Baseline conductive-layer conductivity (S/m) at the reference thickness.
SIGMA0_DEFAULT = 0.00312
THICKNESS_REF_MM = 3.0

MATRIX, CHANNEL = 0, 1

_COORD_DECIMALS = 6  # lookup tolerance for symmetric node matching (mm)


@dataclass(frozen=True)
class SensorGeometry:
    """Parameters of the square lattice sensor (all lengths in mm)."""

    side_length: float = 100.0
    channel_width: float = 4.0
    layer_thickness: float = 3.0
    electrode_count: int = 16
    electrode_width: float = 8.0
    lattice_pitch: float = 12.5

    def __post_init__(self):
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")
        if self.layer_thickness <= 0:
            raise ValueError("layer_thickness must be positive")
        if not 0 <= self.channel_width <= self.lattice_pitch:
            raise ValueError("need 0 <= channel_width <= lattice_pitch")
        if self.lattice_pitch <= 0:
            raise ValueError("lattice_pitch must be positive")
        if self.electrode_count < 4 or self.electrode_count % 4 != 0:
            raise ValueError("electrode_count must be a positive multiple of 4")
        spacing = 4.0 * self.side_length / self.electrode_count
        if not 0 < self.electrode_width <= spacing:
            raise ValueError("electrode_width must lie in (0, electrode spacing]")

    @property
    def electrode_spacing(self) -> float:
        """Arc-length distance between consecutive electrode centres."""
        return 4.0 * self.side_length / self.electrode_count

    def electrode_arc_centers(self) -> np.ndarray:
        """Arc-length positions of electrode centres along the boundary.

        The boundary is parameterized counter-clockwise from the origin:
        bottom, right, top, left.  Centres are offset by half a spacing so
        no electrode sits on a corner.
        """
        s = self.electrode_spacing
        return s / 2.0 + s * np.arange(self.electrode_count)

    def electrode_centers(self) -> np.ndarray:
        """Electrode centre points, shape (n_electrodes, 2)."""
        return arc_to_point(self.electrode_arc_centers(), self.side_length)

    def document(self) -> str:
        """Canonical key/value text serialization (lengths in mm)."""
        lines = [
            "tactile-eit geometry v1",
            f"side_length_mm = {self.side_length!r}",
            f"channel_width_mm = {self.channel_width!r}",
            f"layer_thickness_mm = {self.layer_thickness!r}",
            f"electrode_count = {self.electrode_count}",
            f"electrode_width_mm = {self.electrode_width!r}",
            f"lattice_pitch_mm = {self.lattice_pitch!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_document(cls, text: str) -> "SensorGeometry":
        kv = {}
        for line in text.strip().splitlines()[1:]:
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        return cls(
            side_length=float(kv["side_length_mm"]),
            channel_width=float(kv["channel_width_mm"]),
            layer_thickness=float(kv["layer_thickness_mm"]),
            electrode_count=int(kv["electrode_count"]),
            electrode_width=float(kv["electrode_width_mm"]),
            lattice_pitch=float(kv["lattice_pitch_mm"]),
        )


def arc_to_point(s, side_length: float) -> np.ndarray:
    """Map boundary arc-length (CCW from the origin) to (x, y) points."""
    s = np.atleast_1d(np.asarray(s, dtype=float)) % (4.0 * side_length)
    L = side_length
    x = np.empty_like(s)
    y = np.empty_like(s)
    bottom = s < L
    right = (s >= L) & (s < 2 * L)
    top = (s >= 2 * L) & (s < 3 * L)
    left = s >= 3 * L
    x[bottom], y[bottom] = s[bottom], 0.0
    x[right], y[right] = L, s[right] - L
    x[top], y[top] = 3 * L - s[top], L
    x[left], y[left] = 0.0, 4 * L - s[left]
    return np.column_stack([x, y])


def strip_centers(geom: SensorGeometry) -> np.ndarray:
    """Centre lines of the lattice strips along one axis.

    The grid is anchored at the domain centre and keeps only lines strictly
    inside the square: a strip whose centre lies on the boundary would form
    a conductive ring along the perimeter that shunts the adjacent-drive
    current away from the interior and kills touch sensitivity.  With the
    default pitch the electrode centres coincide with strip centres, so
    every electrode contacts the end of a perpendicular channel.
    """
    p = geom.lattice_pitch
    half_l = geom.side_length / 2.0
    k_max = int(math.floor((half_l - 1e-9) / p))
    return half_l + p * np.arange(-k_max, k_max + 1)


def build_lattice_mask(geom: SensorGeometry):
    """Return a vectorized point classifier: True on channel, False on matrix.

    The channel region is the union of horizontal and vertical strips of
    width ``channel_width`` on the centred grid of pitch ``lattice_pitch``
    (see strip_centers), symmetric under every symmetry of the square.
    ``w == 0`` and ``w >= p`` degenerate to a uniform conductive sheet.
    """
    w = geom.channel_width
    p = geom.lattice_pitch

    if w == 0.0 or w >= p:
        def uniform(x, y):
            return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=bool)
        return uniform

    centers = strip_centers(geom)

    def mask(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dx = np.min(np.abs(x[..., None] - centers), axis=-1)
        dy = np.min(np.abs(y[..., None] - centers), axis=-1)
        return (dx <= w / 2.0) | (dy <= w / 2.0)

    return mask


# ---------------------------------------------------------------------------
# Dihedral symmetries of the square
#
# Each of the 8 symmetries is stored as (axis permutation, flip flags):
# output coordinate i equals input coordinate perm[i], negated about the
# domain centre when flip[i] is set.  Using only "x" and "L - x" keeps the
# transformed coordinates exactly on the symmetric breakpoint grid.
# ---------------------------------------------------------------------------

D4_SYMMETRIES = (
    ((0, 1), (False, False)),  # 0: identity
    ((1, 0), (True, False)),   # 1: rotate 90 deg CCW   (x,y) -> (L-y, x)
    ((0, 1), (True, True)),    # 2: rotate 180 deg      (x,y) -> (L-x, L-y)
    ((1, 0), (False, True)),   # 3: rotate 270 deg      (x,y) -> (y, L-x)
    ((0, 1), (True, False)),   # 4: mirror x            (x,y) -> (L-x, y)
    ((0, 1), (False, True)),   # 5: mirror y            (x,y) -> (x, L-y)
    ((1, 0), (False, False)),  # 6: transpose           (x,y) -> (y, x)
    ((1, 0), (True, True)),    # 7: anti-transpose      (x,y) -> (L-y, L-x)
)


def d4_apply(sym_id: int, points: np.ndarray, side_length: float) -> np.ndarray:
    """Apply square symmetry ``sym_id`` (0..7) to points, shape (..., 2)."""
    perm, flip = D4_SYMMETRIES[sym_id]
    pts = np.asarray(points, dtype=float)
    out = np.empty_like(pts)
    for i in range(2):
        src = pts[..., perm[i]]
        out[..., i] = side_length - src if flip[i] else src
    return out


def d4_matrix(sym_id: int) -> np.ndarray:
    """Linear part of the symmetry in centred coordinates, 2x2 {-1,0,1}."""
    perm, flip = D4_SYMMETRIES[sym_id]
    m = np.zeros((2, 2), dtype=int)
    for i in range(2):
        m[i, perm[i]] = -1 if flip[i] else 1
    return m


def d4_compose(first: int, then: int) -> int:
    """Symmetry id of the composition (apply ``first``, then ``then``)."""
    target = d4_matrix(then) @ d4_matrix(first)
    for g in range(8):
        if np.array_equal(d4_matrix(g), target):
            return g
    raise AssertionError("D4 composition table is closed")


def electrode_permutation(geom: SensorGeometry, sym_id: int) -> np.ndarray:
    """Electrode relabeling induced by a square symmetry.

    Returns ``perm`` with ``perm[e]`` the index of the electrode whose
    centre is the image of electrode ``e``'s centre.
    """
    centers = geom.electrode_centers()
    moved = d4_apply(sym_id, centers, geom.side_length)
    perm = np.full(len(centers), -1, dtype=int)
    for e, q in enumerate(moved):
        d = np.linalg.norm(centers - q, axis=1)
        j = int(np.argmin(d))
        if d[j] > 1e-6:
            from .errors import AsymmetricLayoutError
            raise AsymmetricLayoutError(
                f"electrode {e} has no image under symmetry {sym_id}")
        perm[e] = j
    return perm


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------

def _axis_breakpoints(geom: SensorGeometry, target: float) -> np.ndarray:
    """Symmetric 1-D breakpoints shared by both axes.

    Raw breakpoints (domain edges, centre line, strip edges, electrode
    endpoints and centres) are folded into [0, L/2], subdivided to the
    target size, then mirrored, so the final set is exactly closed under
    x -> L - x in floating point.
    """
    L = geom.side_length
    raw = {0.0, L / 2.0}

    w, p = geom.channel_width, geom.lattice_pitch
    if 0.0 < w < p:
        for c in strip_centers(geom):
            for edge in (c - w / 2.0, c + w / 2.0):
                if 0.0 < edge < L:
                    raw.add(edge)

    per_side = geom.electrode_count // 4
    spacing = geom.electrode_spacing
    for i in range(per_side):
        c = spacing / 2.0 + i * spacing
        for b in (c - geom.electrode_width / 2.0, c, c + geom.electrode_width / 2.0):
            if 0.0 < b < L:
                raw.add(b)

    folded = sorted({min(b, L - b) for b in raw})
    # merge breakpoints closer than a tolerance to avoid sliver intervals
    half: list[float] = [folded[0]]
    for b in folded[1:]:
        if b - half[-1] > 1e-9 * L:
            half.append(b)

    fine: list[float] = [half[0]]
    for a, b in zip(half[:-1], half[1:]):
        n_sub = max(1, int(math.ceil((b - a) / target - 1e-12)))
        for i in range(1, n_sub + 1):
            fine.append(a + (b - a) * i / n_sub)

    mirrored = [L - v for v in fine if L - v > half[-1] + 1e-9 * L]
    return np.array(sorted(fine + mirrored))


@dataclass
class Mesh:
    """Conforming triangulation of the sensing square.

    ``elements`` are CCW node triples; ``element_region`` flags each element
    as CHANNEL (1) or MATRIX (0) from the lattice mask at its centroid;
    ``electrode_edges`` lists, per electrode, indices into
    ``boundary_edges``.
    """

    geom: SensorGeometry
    target_element_size: float
    nodes: np.ndarray           # (n_nodes, 2) float64, mm
    elements: np.ndarray        # (n_elements, 3) int32
    element_region: np.ndarray  # (n_elements,) uint8
    boundary_edges: np.ndarray  # (n_bedges, 2) int32
    electrode_edges: list       # n_electrodes arrays of edge indices
    geometry_hash: str

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def element_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @cached_property
    def grad_operator(self) -> np.ndarray:
        """Per-element gradient matrices B, shape (n_elements, 2, 3).

        For P1 elements the gradient of the interpolant is constant:
        ``grad u|_e = B_e @ u[elements[e]]``.
        """
        p = self.nodes[self.elements]
        x, y = p[..., 0], p[..., 1]
        two_a = 2.0 * self.element_areas
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([b, c], axis=1) / two_a[:, None, None]

    @cached_property
    def unit_stiffness(self) -> np.ndarray:
        """Element stiffness blocks for unit conductivity, (n_elements, 3, 3)."""
        B = self.grad_operator
        return self.element_areas[:, None, None] * np.einsum("eik,eij->ekj", B, B)

    @cached_property
    def center_node(self) -> int:
        """Node closest to the domain centre (used as the solver reference)."""
        c = np.array([self.geom.side_length / 2.0] * 2)
        return int(np.argmin(np.linalg.norm(self.nodes - c, axis=1)))

    @cached_property
    def _node_lookup(self) -> dict:
        return {
            (round(float(x), _COORD_DECIMALS), round(float(y), _COORD_DECIMALS)): i
            for i, (x, y) in enumerate(self.nodes)
        }

    def node_permutation(self, sym_id: int) -> np.ndarray:
        """perm[n] = index of the node at the image of node n."""
        moved = d4_apply(sym_id, self.nodes, self.geom.side_length)
        try:
            return np.array([
                self._node_lookup[(round(float(x), _COORD_DECIMALS),
                                   round(float(y), _COORD_DECIMALS))]
                for x, y in moved
            ], dtype=np.int64)
        except KeyError as exc:
            raise AssertionError(f"mesh is not symmetric under symmetry {sym_id}") from exc

    @cached_property
    def _element_lookup(self) -> dict:
        return {tuple(sorted(tri)): i for i, tri in enumerate(self.elements)}

    def element_permutation(self, sym_id: int) -> np.ndarray:
        """perm[e] = index of the element that is the image of element e."""
        node_perm = self.node_permutation(sym_id)
        mapped = node_perm[self.elements]
        return np.array([self._element_lookup[tuple(sorted(tri))] for tri in mapped],
                        dtype=np.int64)

    @cached_property
    def boundary_edge_element(self) -> np.ndarray:
        """Index of the (unique) element owning each boundary edge."""
        owner = {}
        for e, tri in enumerate(self.elements):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                owner.setdefault((min(a, b), max(a, b)), []).append(e)
        out = np.empty(len(self.boundary_edges), dtype=np.int64)
        for i, (a, b) in enumerate(self.boundary_edges):
            owners = owner[(min(a, b), max(a, b))]
            if len(owners) != 1:
                raise AssertionError("boundary edge owned by more than one element")
            out[i] = owners[0]
        return out

    @cached_property
    def raster_operator(self) -> "RasterOperator":
        return RasterOperator(self)

    def check_valid(self):
        """Assert structural invariants (positive areas, conforming boundary)."""
        if np.any(self.element_areas <= 0):
            raise AssertionError("non-positive element area")
        edge_count: dict = {}
        for tri in self.elements:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                edge_count[key] = edge_count.get(key, 0) + 1
        boundary = {k for k, v in edge_count.items() if v == 1}
        declared = {(min(a, b), max(a, b)) for a, b in self.boundary_edges}
        if boundary != declared:
            raise AssertionError("boundary edges do not match element incidence")
        seen: set = set()
        for edges in self.electrode_edges:
            if len(edges) < 2:
                raise AssertionError("electrode owns fewer than 2 boundary edges")
            s = set(int(i) for i in edges)
            if seen & s:
                raise AssertionError("electrode edge sets are not disjoint")
            seen |= s


def compute_geometry_hash(geom: SensorGeometry, target_element_size: float) -> str:
    payload = geom.document() + f"target_element_size_mm = {target_element_size!r}\n"
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def generate_mesh(geom: SensorGeometry, target_element_size: float = 2.0) -> Mesh:
    """Build the structured, exactly D4-symmetric triangulation.

    Raises MeshResolutionError if the target size cannot resolve the lattice
    channels (needs target <= w/2 when w > 0).
    """
    w = geom.channel_width
    if 0.0 < w < geom.lattice_pitch and target_element_size > w / 2.0 + 1e-12:
        raise MeshResolutionError(
            f"target size {target_element_size} mm cannot resolve {w} mm channels")
    if target_element_size <= 0:
        raise MeshResolutionError("target element size must be positive")

    L = geom.side_length
    axis = _axis_breakpoints(geom, target_element_size)
    n_ax = len(axis)

    xg, yg = np.meshgrid(axis, axis, indexing="ij")
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    def nid(ix, iy):
        return ix * n_ax + iy

    half_l = L / 2.0
    tris = []
    for ix in range(n_ax - 1):
        cx = 0.5 * (axis[ix] + axis[ix + 1])
        for iy in range(n_ax - 1):
            cy = 0.5 * (axis[iy] + axis[iy + 1])
            n00 = nid(ix, iy)
            n10 = nid(ix + 1, iy)
            n01 = nid(ix, iy + 1)
            n11 = nid(ix + 1, iy + 1)
            # Diagonals point "through" the centre in opposite quadrant
            # pairs; this makes the triangulation map onto itself under
            # every symmetry of the square.
            if (cx - half_l) * (cy - half_l) > 0:
                tris.append((n00, n10, n11))
                tris.append((n00, n11, n01))
            else:
                tris.append((n00, n10, n01))
                tris.append((n10, n11, n01))
    elements = np.asarray(tris, dtype=np.int32)

    mask = build_lattice_mask(geom)
    cents = nodes[elements].mean(axis=1)
    region = mask(cents[:, 0], cents[:, 1]).astype(np.uint8)

    boundary_edges = []
    side_of_edge = []
    edge_mid_arc = []
    for side in range(4):
        for k in range(n_ax - 1):
            a, b = axis[k], axis[k + 1]
            if side == 0:
                n1, n2 = nid(k, 0), nid(k + 1, 0)
                arc = 0.5 * (a + b)
            elif side == 1:
                n1, n2 = nid(n_ax - 1, k), nid(n_ax - 1, k + 1)
                arc = L + 0.5 * (a + b)
            elif side == 2:
                n1, n2 = nid(n_ax - 1 - k, n_ax - 1), nid(n_ax - 2 - k, n_ax - 1)
                arc = 2 * L + (L - 0.5 * (axis[n_ax - 1 - k] + axis[n_ax - 2 - k]))
            else:
                n1, n2 = nid(0, n_ax - 1 - k), nid(0, n_ax - 2 - k)
                arc = 3 * L + (L - 0.5 * (axis[n_ax - 1 - k] + axis[n_ax - 2 - k]))
            boundary_edges.append((n1, n2))
            side_of_edge.append(side)
            edge_mid_arc.append(arc)
    boundary_edges = np.asarray(boundary_edges, dtype=np.int32)
    edge_mid_arc = np.asarray(edge_mid_arc)

    half_w = geom.electrode_width / 2.0
    electrode_edges = []
    for s_c in geom.electrode_arc_centers():
        inside = np.abs(edge_mid_arc - s_c) < half_w - 1e-9
        idx = np.flatnonzero(inside)
        if len(idx) < 2:
            raise MeshResolutionError("electrode not resolved by at least 2 edges")
        electrode_edges.append(idx)

    return Mesh(
        geom=geom,
        target_element_size=target_element_size,
        nodes=nodes,
        elements=elements,
        element_region=region,
        boundary_edges=boundary_edges,
        electrode_edges=electrode_edges,
        geometry_hash=compute_geometry_hash(geom, target_element_size),
    )


# ---------------------------------------------------------------------------
# Conductivity fields
# ---------------------------------------------------------------------------

@dataclass
class ConductivityField:
    """Per-element conductivity (S/m) bound to a mesh by its geometry hash."""

    values: np.ndarray
    geometry_hash: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values <= 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("conductivities must be positive and finite")

    def copy(self) -> "ConductivityField":
        return ConductivityField(self.values.copy(), self.geometry_hash)


def baseline_field(geom: SensorGeometry, mesh: Mesh,
                   sigma0: float = SIGMA0_DEFAULT,
                   floor_ratio: float = 1e-6) -> ConductivityField:
    """Reference (no-touch) conductivity.

    Channel elements get the thickness-scaled conductivity
    ``sigma0 * t / t_ref``; matrix (silicone) elements get the small
    positive floor ``floor_ratio * sigma0`` that keeps the FEM system
    nonsingular.
    """
    sigma_eff = sigma0 * geom.layer_thickness / THICKNESS_REF_MM
    values = np.where(mesh.element_region == CHANNEL, sigma_eff, floor_ratio * sigma0)
    return ConductivityField(values, mesh.geometry_hash)


# ---------------------------------------------------------------------------
# Rasterization to the 48 x 48 image basis
# ---------------------------------------------------------------------------

@dataclass
class ReconstructionImage:
    """48 x 48 image of conductivity change on the pixel basis."""

    pixels: np.ndarray
    geometry_hash: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float).reshape(RASTER_N, RASTER_N)


def _clip_axis(poly, axis, bound, keep_low):
    """Sutherland-Hodgman clip of a polygon against an axis-aligned line."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        p_in = (p[axis] <= bound) if keep_low else (p[axis] >= bound)
        q_in = (q[axis] <= bound) if keep_low else (q[axis] >= bound)
        if p_in:
            out.append(p)
            if not q_in:
                t = (bound - p[axis]) / (q[axis] - p[axis])
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        elif q_in:
            t = (bound - p[axis]) / (q[axis] - p[axis])
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _poly_area(poly) -> float:
    a = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        a += x1 * y2 - x2 * y1
    return 0.5 * abs(a)


class RasterOperator:
    """Exact area-overlap map between mesh elements and the 48x48 pixel grid."""

    def __init__(self, mesh: Mesh):
        L = mesh.geom.side_length
        delta = L / RASTER_N
        self.pixel_size = delta
        self.geometry_hash = mesh.geometry_hash
        self._element_region = mesh.element_region
        self._element_areas = None  # set after weights are built
        rows, cols, areas = [], [], []
        verts = mesh.nodes[mesh.elements]
        for e in range(mesh.n_elements):
            tri = [tuple(pt) for pt in verts[e]]
            xs = [p[0] for p in tri]
            ys = [p[1] for p in tri]
            c0 = max(0, int(min(xs) / delta - 1e-9))
            c1 = min(RASTER_N - 1, int(max(xs) / delta + 1e-9))
            r0 = max(0, int(min(ys) / delta - 1e-9))
            r1 = min(RASTER_N - 1, int(max(ys) / delta + 1e-9))
            for r in range(r0, r1 + 1):
                for c in range(c0, c1 + 1):
                    poly = _clip_axis(tri, 0, c * delta, keep_low=False)
                    if poly:
                        poly = _clip_axis(poly, 0, (c + 1) * delta, keep_low=True)
                    if poly:
                        poly = _clip_axis(poly, 1, r * delta, keep_low=False)
                    if poly:
                        poly = _clip_axis(poly, 1, (r + 1) * delta, keep_low=True)
                    if len(poly) >= 3:
                        a = _poly_area(poly)
                        if a > 0:
                            rows.append(r * RASTER_N + c)
                            cols.append(e)
                            areas.append(a)
        self.weights = sparse.csr_array(
            (areas, (rows, cols)), shape=(RASTER_N * RASTER_N, mesh.n_elements))
        self._element_areas = mesh.element_areas
        # pixel value = overlap-area-weighted mean of element values
        self.pixel_mean = self.weights * (1.0 / (delta * delta))
        # fraction of each element covered by each pixel (for Jacobian folding)
        inv_area = 1.0 / np.maximum(mesh.element_areas, 1e-300)
        self.element_fraction = (self.weights.T).multiply(inv_area[:, None]).tocsr()

    def rasterize_values(self, values: np.ndarray) -> np.ndarray:
        img = self.pixel_mean @ np.asarray(values, dtype=float)
        return img.reshape(RASTER_N, RASTER_N)

    @cached_property
    def channel_basis(self):
        """Pixel basis functions on the channel region, (n_elements, n_pixels).

        Column p spreads a unit pixel value over the channel elements the
        pixel overlaps, scaled so that rasterizing the resulting element
        field returns (approximately) the unit pixel image: the pixel basis
        parameterizes conductivity change of the channel region, which is
        the only region touches ever modify.  Pixels with no channel
        overlap get an all-zero column.  On a uniform sheet (no lattice)
        this reduces to plain fraction-of-element aggregation.
        """
        ch = (self._element_region == CHANNEL).astype(float)
        w_ch = self.weights.multiply(ch[None, :]).tocsr()
        chan_area = np.asarray(w_ch.sum(axis=1)).ravel()
        scale = np.where(chan_area > 1e-12 * self.pixel_size ** 2,
                         self.pixel_size ** 2 / np.maximum(chan_area, 1e-300), 0.0)
        inv_area = 1.0 / np.maximum(self._element_areas, 1e-300)
        frac_ch = w_ch.T.multiply(inv_area[:, None]).tocsr()
        return frac_ch.multiply(scale[None, :]).tocsr()


def rasterize(values, mesh: Mesh) -> ReconstructionImage:
    """Area-weighted average of per-element values on the 48x48 pixel grid.

    Accepts a ConductivityField, a difference of fields, or a raw array of
    per-element values.
    """
    if isinstance(values, ConductivityField):
        values = values.values
    return ReconstructionImage(mesh.raster_operator.rasterize_values(values),
                               mesh.geometry_hash)


def pixel_transform(sym_id: int) -> tuple:
    """Index maps realizing a square symmetry on the 48x48 pixel grid.

    Returns (rows, cols) index arrays such that
    ``out[rows, cols] = img`` places pixel (r, c) of the input at the image
    pixel of the same physical cell.
    """
    n = RASTER_N
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    # pixel centre in units of pixels over [0, n]
    pts = np.stack([c + 0.5, r + 0.5], axis=-1).astype(float)
    moved = d4_apply(sym_id, pts.reshape(-1, 2), float(n)).reshape(n, n, 2)
    cols = np.floor(moved[..., 0]).astype(int)
    rows = np.floor(moved[..., 1]).astype(int)
    return rows, cols


def transform_image(img: np.ndarray, sym_id: int) -> np.ndarray:
    """Apply a square symmetry to a 48x48 image (physical-cell relabeling)."""
    rows, cols = pixel_transform(sym_id)
    out = np.empty_like(np.asarray(img))
    out[rows, cols] = img
    return out
