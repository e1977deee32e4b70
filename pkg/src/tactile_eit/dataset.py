"""Reconstruction dataset: generation, dihedral augmentation, noise, splits.

Each base sample is one random contrast-mode phantom simulated on the
optimized sensor (w = 4 mm, t = 3 mm): a 104-channel difference frame plus
its rasterized ground-truth image.  Training-split samples are expanded 8x
by the square's symmetries: relabeling the electrodes under a symmetry
permutes the measurement channels, so one simulated frame yields eight
physically consistent readouts.  The seven non-identity variants carry
additive Gaussian noise at SNRs 35..65 dB; labels are transformed, never
noised.
"""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import AsymmetricLayoutError
from .forward import ForwardSolver, Protocol
from .geometry import (SensorGeometry, baseline_field, electrode_permutation,
                       generate_mesh, pixel_transform, transform_image)
from .phantom import TouchPhantom, apply_phantom, ground_truth_image, random_phantom

AUGMENT_SNR_DB = {k: 30.0 + 5.0 * k for k in range(1, 8)}  # sym 1..7 -> 35..65 dB

DEFAULT_GEOMETRY = SensorGeometry(channel_width=4.0, layer_thickness=3.0)
DEFAULT_TARGET_MM = 2.0


# ---------------------------------------------------------------------------
# Dihedral channel permutations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DihedralAugmentation:
    """Channel permutation + image transform realizing one square symmetry."""

    sym_id: int
    channel_perm: np.ndarray   # out[i] = sign[i] * frame[channel_perm[i]]
    channel_sign: np.ndarray
    pixel_rows: np.ndarray
    pixel_cols: np.ndarray

    def apply_frame(self, values: np.ndarray) -> np.ndarray:
        return self.channel_sign * np.asarray(values)[..., self.channel_perm]

    def apply_image(self, img: np.ndarray) -> np.ndarray:
        out = np.empty_like(np.asarray(img))
        out[..., self.pixel_rows, self.pixel_cols] = img
        return out


def symmetry_permutation(sym_id: int, geom: SensorGeometry,
                         protocol: Optional[Protocol] = None) -> DihedralAugmentation:
    """Channel permutation induced by relabeling electrodes under symmetry g.

    The frame measured after moving the physical field by g equals the
    permuted original frame: adjacent pairs map to adjacent pairs (possibly
    orientation-reversed, flipping the sign of drive and measurement
    consistently), and combinations that land on a dropped reciprocal entry
    resolve through reciprocity.
    """
    protocol = protocol or Protocol(n_electrodes=geom.electrode_count)
    try:
        eperm = electrode_permutation(geom, sym_id)
    except AsymmetricLayoutError:
        raise
    pairs = protocol.pairs
    pair_of = {tuple(sorted(map(int, p))): k for k, p in enumerate(pairs)}
    n = protocol.n_channels
    perm = np.empty(n, dtype=np.int64)
    sign = np.empty(n)
    for i, (k, j) in enumerate(protocol.channels):
        dp, dn = eperm[pairs[k]]
        mp, mn = eperm[pairs[j]]
        kk = pair_of[tuple(sorted((int(dp), int(dn))))]
        jj = pair_of[tuple(sorted((int(mp), int(mn))))]
        s_d = 1.0 if pairs[kk][0] == dp else -1.0
        s_m = 1.0 if pairs[jj][0] == mp else -1.0
        idx = protocol.channel_index(kk, jj)
        perm[idx] = i
        sign[idx] = s_d * s_m
    rows, cols = pixel_transform(sym_id)
    return DihedralAugmentation(sym_id=sym_id, channel_perm=perm,
                                channel_sign=sign, pixel_rows=rows,
                                pixel_cols=cols)


def all_augmentations(geom: SensorGeometry,
                      protocol: Optional[Protocol] = None) -> list:
    return [symmetry_permutation(g, geom, protocol) for g in range(8)]


# ---------------------------------------------------------------------------
# Samples and dataset containers
# ---------------------------------------------------------------------------

@dataclass
class Sample:
    """One training/evaluation record."""

    phantom_id: int
    phantom: TouchPhantom
    frame_delta: np.ndarray        # (104,) float64
    image: np.ndarray              # (48, 48) float32 ground truth
    sym_id: int = 0
    snr_db: Optional[float] = None

    @property
    def n_touches(self) -> int:
        return len(self.phantom.touches)


@dataclass
class DeskDataset:
    geom: SensorGeometry
    geometry_hash: str
    protocol_version: str
    master_seed: int
    samples: list = field(default_factory=list)

    @property
    def phantom_ids(self) -> list:
        seen: dict = {}
        for s in self.samples:
            seen.setdefault(s.phantom_id, None)
        return list(seen)

    def counts_by_touch_number(self) -> dict:
        counts: dict = {}
        for s in self.samples:
            if s.sym_id == 0:
                counts[s.n_touches] = counts.get(s.n_touches, 0) + 1
        return counts


def _simulate_phantom(solver: ForwardSolver, base, ref_values, phantom, mesh):
    touched = apply_phantom(base, phantom, mesh)
    dv = solver.simulate_frame(touched).values - ref_values
    image = ground_truth_image(phantom, base, mesh).pixels.astype(np.float32)
    return dv, image


_WORKER_CTX: dict = {}


def _worker_init(geom_doc: str, target: float):
    geom = SensorGeometry.from_document(geom_doc)
    mesh = generate_mesh(geom, target)
    base = baseline_field(geom, mesh)
    solver = ForwardSolver(mesh)
    ref = solver.simulate_frame(base).values
    _WORKER_CTX.update(mesh=mesh, base=base, solver=solver, ref=ref)


def _worker_run(args):
    index, phantom_text = args
    phantom = TouchPhantom.from_text(phantom_text)
    dv, image = _simulate_phantom(_WORKER_CTX["solver"], _WORKER_CTX["base"],
                                  _WORKER_CTX["ref"], phantom, _WORKER_CTX["mesh"])
    return index, dv, image


def generate(counts_per_touch_number: dict, master_seed: int,
             geom: SensorGeometry = DEFAULT_GEOMETRY,
             target_element_size: float = DEFAULT_TARGET_MM,
             n_jobs: int = 1) -> DeskDataset:
    """Simulate base samples for the requested touch-number counts.

    Deterministic for a fixed master seed: phantom draws and worker
    scheduling never depend on completion order.
    """
    for n, c in counts_per_touch_number.items():
        if not 1 <= int(n) <= 5:
            raise ValueError("touch numbers must be 1..5")
        if c < 0:
            raise ValueError("counts must be nonnegative")

    rng = np.random.default_rng(master_seed)
    phantoms = []
    for n_touches in sorted(counts_per_touch_number):
        for _ in range(counts_per_touch_number[n_touches]):
            phantoms.append(random_phantom(int(n_touches), "contrast", rng, geom))

    mesh = generate_mesh(geom, target_element_size)
    dataset = DeskDataset(geom=geom, geometry_hash=mesh.geometry_hash,
                          protocol_version=Protocol().version,
                          master_seed=master_seed)

    if n_jobs > 1 and len(phantoms) > 8:
        jobs = [(i, ph.to_text()) for i, ph in enumerate(phantoms)]
        results: dict = {}
        with ProcessPoolExecutor(max_workers=n_jobs, initializer=_worker_init,
                                 initargs=(geom.document(), target_element_size)) as ex:
            for index, dv, image in ex.map(_worker_run, jobs, chunksize=16):
                results[index] = (dv, image)
        ordered = [results[i] for i in range(len(phantoms))]
    else:
        base = baseline_field(geom, mesh)
        solver = ForwardSolver(mesh)
        ref = solver.simulate_frame(base).values
        ordered = [_simulate_phantom(solver, base, ref, ph, mesh) for ph in phantoms]

    for i, (ph, (dv, image)) in enumerate(zip(phantoms, ordered)):
        dataset.samples.append(Sample(phantom_id=i, phantom=ph, frame_delta=dv,
                                      image=image))
    return dataset


# ---------------------------------------------------------------------------
# Noise and augmentation
# ---------------------------------------------------------------------------

def add_noise(sample: Sample, snr_db: Optional[float],
              rng: np.random.Generator) -> Sample:
    """Additive Gaussian noise on the difference frame at the given SNR.

    The noise power is set against the sample's own signal power; an
    infinite/None SNR returns the sample unchanged.  Labels are never
    noised.
    """
    if snr_db is None or np.isinf(snr_db):
        return sample
    signal_rms = float(np.sqrt(np.mean(sample.frame_delta ** 2)))
    noise = rng.normal(size=sample.frame_delta.shape) * signal_rms * 10 ** (-snr_db / 20)
    return replace(sample, frame_delta=sample.frame_delta + noise, snr_db=snr_db)


def augment(sample: Sample, augmentations: list,
            rng: np.random.Generator) -> list:
    """Expand one sample into 8 symmetry variants.

    The identity stays clean; variants 1..7 get one distinct SNR each from
    35..65 dB, mirroring one noise level per augmented readout.
    """
    out = [sample]
    for aug in augmentations[1:]:
        variant = Sample(
            phantom_id=sample.phantom_id,
            phantom=sample.phantom,
            frame_delta=aug.apply_frame(sample.frame_delta),
            image=aug.apply_image(sample.image),
            sym_id=aug.sym_id,
        )
        out.append(add_noise(variant, AUGMENT_SNR_DB[aug.sym_id], rng))
    return out


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split(dataset: DeskDataset, seed: int = 0, ratios: tuple = (7, 2, 1),
          augment_train: bool = True) -> tuple:
    """Phantom-level 7:2:1 split; only the training split is augmented.

    No phantom contributes to two splits, so augmented copies of one
    measurement can never leak across the boundary.
    """
    ids = dataset.phantom_ids
    if len(ids) < 10:
        raise ValueError("need at least 10 base phantoms to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    total = sum(ratios)
    n_train = int(len(ids) * ratios[0] / total)
    n_val = int(len(ids) * ratios[1] / total)
    id_arr = np.array(ids)[order]
    train_ids = set(id_arr[:n_train].tolist())
    val_ids = set(id_arr[n_train:n_train + n_val].tolist())
    test_ids = set(id_arr[n_train + n_val:].tolist())

    base = {s.phantom_id: s for s in dataset.samples if s.sym_id == 0}
    train, val, test = [], [], []
    if augment_train:
        augs = all_augmentations(dataset.geom)
    for pid in sorted(base):
        s = base[pid]
        if pid in train_ids:
            if augment_train:
                noise_rng = np.random.default_rng(
                    np.random.SeedSequence([dataset.master_seed, seed, pid]))
                train.extend(augment(s, augs, noise_rng))
            else:
                train.append(s)
        elif pid in val_ids:
            val.append(s)
        else:
            test.append(s)
    return train, val, test


# ---------------------------------------------------------------------------
# Serialization: binary record blobs + manifest
# ---------------------------------------------------------------------------

def _sample_record(sample: Sample) -> bytes:
    meta = f"id={sample.phantom_id} sym={sample.sym_id} snr={sample.snr_db}\n"
    phantom_text = meta + sample.phantom.to_text()
    payload = phantom_text.encode()
    return (struct.pack("<B", sample.sym_id)
            + np.ascontiguousarray(sample.frame_delta, dtype="<f8").tobytes()
            + np.ascontiguousarray(sample.image, dtype="<f4").tobytes()
            + struct.pack("<I", len(payload)) + payload)


def _parse_record(buf: bytes, offset: int) -> tuple:
    sym_id = buf[offset]
    offset += 1
    dv = np.frombuffer(buf, dtype="<f8", count=104, offset=offset).copy()
    offset += 104 * 8
    image = np.frombuffer(buf, dtype="<f4", count=48 * 48, offset=offset).reshape(48, 48).copy()
    offset += 48 * 48 * 4
    (plen,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    text = buf[offset:offset + plen].decode()
    offset += plen
    meta_line, _, phantom_text = text.partition("\n")
    meta = dict(kv.split("=", 1) for kv in meta_line.split())
    snr = None if meta["snr"] == "None" else float(meta["snr"])
    sample = Sample(phantom_id=int(meta["id"]),
                    phantom=TouchPhantom.from_text(phantom_text),
                    frame_delta=dv, image=image, sym_id=sym_id, snr_db=snr)
    return sample, offset


def save_split(samples: list, path: Path) -> str:
    blob = b"".join(_sample_record(s) for s in samples)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_split(path: Path) -> list:
    buf = Path(path).read_bytes()
    samples = []
    offset = 0
    while offset < len(buf):
        sample, offset = _parse_record(buf, offset)
        samples.append(sample)
    return samples


def save_dataset(dataset: DeskDataset, out_dir, seed: int = 0,
                 augment_train: bool = True) -> dict:
    """Write train/val/test blobs plus a manifest documenting everything."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, val, test = split(dataset, seed=seed, augment_train=augment_train)
    manifest = {
        "format": "tactile-eit-dataset-v1",
        "master_seed": dataset.master_seed,
        "split_seed": seed,
        "split_ratios": [7, 2, 1],
        "geometry_hash": dataset.geometry_hash,
        "protocol_version": dataset.protocol_version,
        "geometry": dataset.geom.document(),
        "base_counts_by_touch_number": dataset.counts_by_touch_number(),
        "splits": {},
    }
    for name, subset in (("train", train), ("val", val), ("test", test)):
        checksum = save_split(subset, out / f"{name}.bin")
        manifest["splits"][name] = {
            "file": f"{name}.bin",
            "n_samples": len(subset),
            "n_phantoms": len({s.phantom_id for s in subset}),
            "sha256": checksum,
        }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
