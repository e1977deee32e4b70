"""Forward electrical problem: assembly, injection solves, frames, Jacobian.

Current is injected through adjacent electrode pairs (gap model: uniform
current density along the electrode's boundary edges) and differential
voltages are read on the remaining adjacent pairs.  Measurements use the
same edge-length node weighting as the drive loads, i.e. the line-integral
mean of the potential along the electrode; with that pairing the discrete
transfer voltages are exactly reciprocal up to solver round-off.

All 16 adjacent-pair injections are solved against one sparse factorization
per conductivity field; the 104-channel frame and the sensitivity (adjoint)
Jacobian are assembled from those 16 nodal solutions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import (HashMismatchError, SingularSystemError,
                     SolverDivergenceError)
from .geometry import ConductivityField, Mesh

PROTOCOL_VERSION = "adjacent16-v1"
DEFAULT_CURRENT_A = 1e-3


@dataclass(frozen=True)
class Protocol:
    """Adjacent drive / adjacent measurement protocol for 16 electrodes.

    ``pairs[k] = (k, k+1 mod n)``; entry ``(k, j)`` in ``channels`` means
    drive pair k, measure pair j.  Reciprocal duplicates are dropped, which
    leaves 16 * 13 / 2 = 104 channels in a frozen canonical order.
    """

    n_electrodes: int = 16
    current_amplitude: float = DEFAULT_CURRENT_A
    version: str = PROTOCOL_VERSION

    @cached_property
    def pairs(self) -> np.ndarray:
        n = self.n_electrodes
        return np.array([(k, (k + 1) % n) for k in range(n)], dtype=np.int32)

    @cached_property
    def channels(self) -> np.ndarray:
        n = self.n_electrodes
        seen = set()
        entries = []
        for k in range(n):
            banned = {(k - 1) % n, k, (k + 1) % n}
            for j in range(n):
                if j in banned or (j, k) in seen:
                    continue
                seen.add((k, j))
                entries.append((k, j))
        return np.array(entries, dtype=np.int32)

    @cached_property
    def extended_channels(self) -> np.ndarray:
        """All 208 ordered (drive, measure) combinations, reciprocals kept."""
        n = self.n_electrodes
        entries = []
        for k in range(n):
            banned = {(k - 1) % n, k, (k + 1) % n}
            entries.extend((k, j) for j in range(n) if j not in banned)
        return np.array(entries, dtype=np.int32)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def channel_index(self, drive: int, meas: int) -> int:
        """Canonical index of the unordered {drive, measure} combination."""
        idx = self._channel_lookup.get((drive, meas))
        if idx is None:
            idx = self._channel_lookup.get((meas, drive))
        if idx is None:
            raise KeyError(f"no channel for drive pair {drive}, measure pair {meas}")
        return idx

    @cached_property
    def _channel_lookup(self) -> dict:
        return {(int(k), int(j)): i for i, (k, j) in enumerate(self.channels)}

    def table(self) -> str:
        """Machine-readable channel table (index, drive+, drive-, meas+, meas-)."""
        lines = [f"# protocol {self.version}",
                 "index,drive_pos,drive_neg,meas_pos,meas_neg"]
        for i, (k, j) in enumerate(self.channels):
            dp, dn = self.pairs[k]
            mp, mn = self.pairs[j]
            lines.append(f"{i},{dp},{dn},{mp},{mn}")
        return "\n".join(lines) + "\n"


@dataclass
class MeasurementFrame:
    """Ordered boundary voltage readings for one conductivity state."""

    values: np.ndarray
    protocol_version: str = PROTOCOL_VERSION
    geometry_hash: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("frame contains non-finite voltages")

    def to_bytes(self) -> bytes:
        head = self.protocol_version.encode() + b"\n" + self.geometry_hash.encode() + b"\n"
        return struct.pack("<I", len(head)) + head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MeasurementFrame":
        (hlen,) = struct.unpack_from("<I", blob, 0)
        head = blob[4:4 + hlen].decode().splitlines()
        values = np.frombuffer(blob[4 + hlen:], dtype="<f8")
        return cls(values.copy(), protocol_version=head[0], geometry_hash=head[1])


@dataclass
class StiffnessSystem:
    """Grounded sparse FEM system for one conductivity field."""

    matrix: sparse.csc_array
    reference_node: int
    geometry_hash: str
    _factor: object = field(default=None, repr=False)

    @property
    def factor(self):
        if self._factor is None:
            try:
                self._factor = splu(self.matrix)
            except RuntimeError as exc:
                raise SolverDivergenceError(str(exc)) from exc
        return self._factor

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.factor.solve(rhs)


class ForwardSolver:
    """Precomputed machinery for repeated solves on one mesh + protocol."""

    def __init__(self, mesh: Mesh, protocol: Protocol | None = None):
        self.mesh = mesh
        self.protocol = protocol or Protocol()
        if self.protocol.n_electrodes != mesh.geom.electrode_count:
            raise ValueError("protocol electrode count does not match geometry")
        self._build_assembly_pattern()
        self._build_electrode_loads()

    # -- assembly ----------------------------------------------------------

    def _build_assembly_pattern(self):
        mesh = self.mesh
        tri = mesh.elements
        rows = np.repeat(tri, 3, axis=1).ravel()          # i index of K_ij
        cols = np.tile(tri, (1, 3)).ravel()               # j index of K_ij
        order = np.lexsort((rows, cols))
        srows, scols = rows[order], cols[order]
        new_slot = np.empty(len(order), dtype=bool)
        new_slot[0] = True
        new_slot[1:] = (srows[1:] != srows[:-1]) | (scols[1:] != scols[:-1])
        self._seg_starts = np.flatnonzero(new_slot)
        self._order = order
        self._elem_of_triplet = (order // 9).astype(np.int64)
        self._unit_entries = mesh.unit_stiffness.reshape(mesh.n_elements, 9, order="C")
        # build csc structure once; entries are refilled per field
        n = mesh.n_nodes
        indices = srows[new_slot]
        counts = np.bincount(scols[new_slot], minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        self._csc_indices = indices.astype(np.int32)
        self._csc_indptr = indptr.astype(np.int32)
        nnz = len(indices)
        # slots touching the reference row/column, for grounding
        slot_row = indices
        slot_col = np.repeat(np.arange(n), np.diff(indptr))
        ref = mesh.center_node
        self._ground_mask = (slot_row == ref) | (slot_col == ref)
        diag = np.flatnonzero((slot_row == ref) & (slot_col == ref))
        self._ground_diag = int(diag[0])
        self._nnz = nnz

    def assemble(self, field: ConductivityField) -> StiffnessSystem:
        """Grounded stiffness matrix for the given per-element conductivity."""
        mesh = self.mesh
        if field.geometry_hash != mesh.geometry_hash:
            raise HashMismatchError("field does not belong to this mesh")
        sigma = field.values
        if len(sigma) != mesh.n_elements:
            raise SingularSystemError("field length does not match element count")
        if np.any(sigma <= 0):
            raise SingularSystemError("non-positive element conductivity")
        vals = (sigma[:, None] * self._unit_entries).ravel()[self._order]
        data = np.add.reduceat(vals, self._seg_starts)
        data[self._ground_mask] = 0.0
        data[self._ground_diag] = 1.0
        matrix = sparse.csc_array(
            (data, self._csc_indices, self._csc_indptr),
            shape=(mesh.n_nodes, mesh.n_nodes))
        return StiffnessSystem(matrix, mesh.center_node, mesh.geometry_hash)

    def assemble_raw(self, field: ConductivityField) -> sparse.csc_matrix:
        """Ungrounded (pure Neumann) stiffness matrix; null space = constants."""
        vals = (field.values[:, None] * self._unit_entries).ravel()[self._order]
        data = np.add.reduceat(vals, self._seg_starts)
        return sparse.csc_array(
            (data, self._csc_indices, self._csc_indptr),
            shape=(self.mesh.n_nodes, self.mesh.n_nodes))

    # -- electrode loads ----------------------------------------------------

    def _build_electrode_loads(self):
        """Per-electrode nodal weight vectors (edge-length trapezoid weights).

        The weights integrate a P1 function along the electrode's conductive
        contact: current density is uniform over the electrode edges whose
        owning element is in the channel region, and zero over silicone
        contact (current cannot enter the insulator; keeping floor-material
        contact in the load makes measurements depend on the conductivity
        floor).  The same weights serve as injection loads (scaled by the
        current) and as measurement functionals (the mean potential over
        the contact), which makes the discrete transfer voltages exactly
        reciprocal.
        """
        from .geometry import CHANNEL
        mesh = self.mesh
        n = mesh.n_nodes
        edge_region = mesh.element_region[mesh.boundary_edge_element]
        self._electrode_weights = np.zeros((mesh.geom.electrode_count, n))
        for e, edge_ids in enumerate(mesh.electrode_edges):
            conductive = [ei for ei in edge_ids if edge_region[ei] == CHANNEL]
            contact = conductive if conductive else list(edge_ids)
            w = np.zeros(n)
            total = 0.0
            for ei in contact:
                a, b = mesh.boundary_edges[ei]
                length = float(np.linalg.norm(mesh.nodes[a] - mesh.nodes[b]))
                w[a] += 0.5 * length
                w[b] += 0.5 * length
                total += length
            self._electrode_weights[e] = w / total
        ref = mesh.center_node
        amp = self.protocol.current_amplitude
        pair_loads = np.zeros((n, self.protocol.n_electrodes))
        for k, (ep, en) in enumerate(self.protocol.pairs):
            pair_loads[:, k] = amp * (self._electrode_weights[ep]
                                      - self._electrode_weights[en])
        pair_loads[ref, :] = 0.0  # grounded row
        self._pair_loads = pair_loads

    # -- solves and frames ---------------------------------------------------

    def solve_all_pairs(self, field: ConductivityField) -> np.ndarray:
        """Nodal potentials for all adjacent-pair injections, (n_nodes, n_pairs)."""
        system = self.assemble(field)
        return system.solve(self._pair_loads)

    def solve_injection(self, system: StiffnessSystem, pair_index: int) -> np.ndarray:
        """Potential for a single adjacent drive pair."""
        return system.solve(self._pair_loads[:, pair_index])

    def pair_voltages(self, field: ConductivityField) -> np.ndarray:
        """Transfer voltage matrix V[k, j]: drive pair k, measure pair j."""
        u = self.solve_all_pairs(field)
        return (u.T @ self._pair_loads) / self.protocol.current_amplitude

    def simulate_frame(self, field: ConductivityField) -> MeasurementFrame:
        """104-channel measurement frame under the canonical protocol."""
        v = self.pair_voltages(field)
        ch = self.protocol.channels
        return MeasurementFrame(v[ch[:, 0], ch[:, 1]].copy(),
                                protocol_version=self.protocol.version,
                                geometry_hash=self.mesh.geometry_hash)

    def extended_frame(self, field: ConductivityField) -> np.ndarray:
        """All 208 ordered measurements (reciprocal pairs kept), for checks."""
        v = self.pair_voltages(field)
        ch = self.protocol.extended_channels
        return v[ch[:, 0], ch[:, 1]].copy()

    # -- sensitivity ---------------------------------------------------------

    def jacobian(self, field: ConductivityField) -> np.ndarray:
        """Sensitivity of each channel to each element conductivity.

        Adjoint formula: dV(d,m)/dsigma_e = -int_e grad u_d . grad u_m dA / I
        with both potentials driven at the protocol current I.
        """
        mesh = self.mesh
        u = self.solve_all_pairs(field)                      # (n_nodes, 16)
        B = mesh.grad_operator                               # (n_e, 2, 3)
        u_elem = u[mesh.elements]                            # (n_e, 3, 16)
        grads = np.einsum("eci,eik->eck", B, u_elem)         # (n_e, 2, 16)
        gx, gy = grads[:, 0, :], grads[:, 1, :]
        area = mesh.element_areas
        amp = self.protocol.current_amplitude
        ch = self.protocol.channels
        jac = np.empty((len(ch), mesh.n_elements))
        for row, (k, j) in enumerate(ch):
            jac[row] = -(area * (gx[:, k] * gx[:, j] + gy[:, k] * gy[:, j])) / amp
        return jac

    def jacobian_raster(self, jac: np.ndarray) -> np.ndarray:
        """Fold element-basis Jacobian columns onto the 48x48 pixel basis.

        Columns give the sensitivity to the channel-region pixel basis (see
        RasterOperator.channel_basis), so predictions and rasterized ground
        truth share one convention.
        """
        return jac @ self.mesh.raster_operator.channel_basis

    def element_current_density(self, field: ConductivityField,
                                pair_index: int) -> np.ndarray:
        """|j| = sigma * |grad u| per element for one injection."""
        system = self.assemble(field)
        u = self.solve_injection(system, pair_index)
        B = self.mesh.grad_operator
        g = np.einsum("eci,ei->ec", B, u[self.mesh.elements])
        return field.values * np.hypot(g[:, 0], g[:, 1])


# -- module-level conveniences mirroring the operation contracts -------------

def build_protocol(n_electrodes: int = 16,
                   current_amplitude: float = DEFAULT_CURRENT_A) -> Protocol:
    return Protocol(n_electrodes=n_electrodes, current_amplitude=current_amplitude)


def assemble(mesh: Mesh, field: ConductivityField,
             protocol: Protocol | None = None) -> StiffnessSystem:
    return ForwardSolver(mesh, protocol).assemble(field)


def simulate_frame(mesh: Mesh, field: ConductivityField,
                   protocol: Protocol | None = None) -> MeasurementFrame:
    return ForwardSolver(mesh, protocol).simulate_frame(field)


def jacobian(mesh: Mesh, field: ConductivityField,
             protocol: Protocol | None = None) -> np.ndarray:
    return ForwardSolver(mesh, protocol).jacobian(field)


def jacobian_raster(jac: np.ndarray, mesh: Mesh) -> np.ndarray:
    return jac @ mesh.raster_operator.channel_basis
