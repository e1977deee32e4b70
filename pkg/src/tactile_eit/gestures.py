"""Touch-gesture synthesis and sequence classification.

Twelve interaction classes are defined as scripted 15-frame touch
trajectories (versioned data file ``data/gesture_scripts.json``), simulated
through the forward solver on the optimized sensor and lightly noised.
A single-hidden-layer softmax network on the flattened, per-channel
standardized 15 x 104 window classifies them; training is hand-rolled
mini-batch gradient descent with momentum, fully deterministic for a fixed
seed.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources

import numpy as np

from .errors import InsufficientDataError
from .forward import ForwardSolver
from .geometry import SensorGeometry, baseline_field, generate_mesh
from .phantom import TouchPhantom, TouchPoint, apply_phantom

N_FRAMES = 15
N_CHANNELS = 104
DEFAULT_SNR_DB = 40.0
# quiescent-noise floor: 40 dB below a nominal touch response of 1% of the
# reference frame, so "no contact" is noise, not exact zeros
NOISE_FLOOR_OF_REF = 1e-2


class GestureClass(IntEnum):
    NO_CONTACT = 0
    FINGER_PRESS = 1
    FOUR_FINGER_SCRATCH = 2
    FIST_PRESS = 3
    FINGER_DOUBLE_TAP = 4
    PALM_PAT = 5
    SWIPE_UP = 6
    SWIPE_DOWN = 7
    SWIPE_LEFT = 8
    SWIPE_RIGHT = 9
    ZOOM_IN = 10
    ZOOM_OUT = 11


CLASS_NAMES = {
    GestureClass.NO_CONTACT: "no-contact",
    GestureClass.FINGER_PRESS: "finger-press",
    GestureClass.FOUR_FINGER_SCRATCH: "four-finger-scratch",
    GestureClass.FIST_PRESS: "fist-press",
    GestureClass.FINGER_DOUBLE_TAP: "finger-double-tap",
    GestureClass.PALM_PAT: "palm-pat",
    GestureClass.SWIPE_UP: "swipe-up",
    GestureClass.SWIPE_DOWN: "swipe-down",
    GestureClass.SWIPE_LEFT: "swipe-left",
    GestureClass.SWIPE_RIGHT: "swipe-right",
    GestureClass.ZOOM_IN: "zoom-in",
    GestureClass.ZOOM_OUT: "zoom-out",
}


def load_scripts() -> dict:
    text = resources.files("tactile_eit").joinpath("data/gesture_scripts.json").read_text()
    return json.loads(text)


@dataclass
class GestureSample:
    frames: np.ndarray          # (15, 104) difference voltages
    label: GestureClass
    seed: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.shape != (N_FRAMES, N_CHANNELS):
            raise ValueError("gesture sample must be 15 x 104")


# ---------------------------------------------------------------------------
# Trajectory scripting
# ---------------------------------------------------------------------------

def _active_mask(spans, n=N_FRAMES) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for a, b in spans:
        mask[a:b + 1] = True
    return mask


def _frame_fraction(n=N_FRAMES) -> np.ndarray:
    return np.arange(n) / (n - 1.0)


def script_trajectory(name: str, spec: dict, rng: np.random.Generator,
                      geom: SensorGeometry) -> list:
    """Sample one randomized trajectory: a list of 15 touch tuples.

    Each frame is a tuple of (x, y, radius, depth) contacts; an empty tuple
    means no contact in that frame.
    """
    L = geom.side_length
    kind = spec["kind"]
    if kind == "none":
        return [() for _ in range(N_FRAMES)]

    depth = rng.uniform(*spec["depth"])

    if kind == "static":
        radius = rng.uniform(*spec["radius"])
        if "center_box" in spec:
            lo, hi = spec["center_box"]
            lo, hi = max(lo, radius), min(hi, L - radius)
        else:
            lo, hi = radius + 2.0, L - radius - 2.0
        x = rng.uniform(lo, hi)
        y = rng.uniform(lo, hi)
        mask = _active_mask(spec["active"])
        return [((x, y, radius, depth),) if on else () for on in mask]

    if kind == "swipe":
        radius = rng.uniform(*spec["radius"])
        lateral = rng.uniform(*spec["lateral"])
        a = rng.uniform(*spec["travel_from"])
        b = rng.uniform(*spec["travel_to"])
        frac = _frame_fraction()
        pos = a + (b - a) * frac
        direction = spec["direction"]
        if direction == "right":
            pts = [(p, lateral) for p in pos]
        elif direction == "left":
            pts = [(L - p, lateral) for p in pos]
        elif direction == "up":
            pts = [(lateral, p) for p in pos]
        else:
            pts = [(lateral, L - p) for p in pos]
        return [((x, y, radius, depth),) for x, y in pts]

    if kind == "scratch-strokes":
        # fingers in a row: one stroke out, lift briefly, stroke back; the
        # motion reversal plus the contact gap separates a scratch from
        # static presses, taps and monotone swipes
        radius = rng.uniform(*spec["radius"])
        spacing = rng.uniform(*spec["spacing"])
        n_discs = spec["discs"]
        strokes = spec["strokes"]
        for _ in range(64):
            travel = rng.uniform(*spec["travel"])
            theta = rng.uniform(0.0, 2 * np.pi)
            box = spec.get("center_box", [0.25 * L, 0.75 * L])
            cx = rng.uniform(*box)
            cy = rng.uniform(*box)
            drag = np.array([np.cos(theta), np.sin(theta)])
            line = np.array([-drag[1], drag[0]])
            offsets = (np.arange(n_discs) - (n_discs - 1) / 2.0) * spacing
            frames = [() for _ in range(N_FRAMES)]
            ok = True
            for s_idx, (a, b) in enumerate(strokes):
                span = max(b - a, 1)
                for k in range(a, b + 1):
                    f = (k - a) / span
                    disp = (f - 0.5) * travel
                    if s_idx % 2 == 1:
                        disp = -disp  # return stroke
                    pts = []
                    for off in offsets:
                        p = np.array([cx, cy]) + off * line + disp * drag
                        if not (radius <= p[0] <= L - radius
                                and radius <= p[1] <= L - radius):
                            ok = False
                            break
                        pts.append((float(p[0]), float(p[1]), radius, depth))
                    if not ok:
                        break
                    frames[k] = tuple(pts)
                if not ok:
                    break
            if ok:
                return frames
        raise RuntimeError(f"could not fit trajectory for {name}")

    if kind == "zoom":
        radius = rng.uniform(*spec["radius"])
        for _ in range(64):
            cx = rng.uniform(*spec["center_box"])
            cy = rng.uniform(*spec["center_box"])
            theta = rng.uniform(0.0, 2 * np.pi)
            axis = np.array([np.cos(theta), np.sin(theta)])
            wide = rng.uniform(*spec["sep_wide"])
            tight = rng.uniform(*spec["sep_tight"])
            s0, s1 = (wide, tight) if spec["mode"] == "in" else (tight, wide)
            frac = _frame_fraction()
            seps = s0 + (s1 - s0) * frac
            frames = []
            ok = True
            for sep in seps:
                pts = []
                for sgn in (-1.0, 1.0):
                    p = np.array([cx, cy]) + sgn * (sep / 2.0) * axis
                    if not (radius <= p[0] <= L - radius and radius <= p[1] <= L - radius):
                        ok = False
                        break
                    pts.append((float(p[0]), float(p[1]), radius, depth))
                if not ok:
                    break
                frames.append(tuple(pts))
            if ok:
                return frames
        raise RuntimeError(f"could not fit trajectory for {name}")

    raise ValueError(f"unknown script kind {kind!r}")


# ---------------------------------------------------------------------------
# Synthesis through the forward model
# ---------------------------------------------------------------------------

class GestureSynthesizer:
    """Simulates scripted trajectories into 15 x 104 difference frames.

    Static scripts repeat one phantom across frames, so identical contact
    states are solved once and reused.
    """

    def __init__(self, geom: SensorGeometry | None = None,
                 target_element_size: float = 2.0,
                 snr_db: float = DEFAULT_SNR_DB):
        self.geom = geom or SensorGeometry(channel_width=4.0, layer_thickness=3.0)
        self.mesh = generate_mesh(self.geom, target_element_size)
        self.baseline = baseline_field(self.geom, self.mesh)
        self.solver = ForwardSolver(self.mesh)
        self.reference = self.solver.simulate_frame(self.baseline).values
        self.snr_db = snr_db
        self.scripts = load_scripts()
        self._ref_rms = float(np.sqrt(np.mean(self.reference ** 2)))

    def _clean_frames(self, trajectory: list) -> np.ndarray:
        frames = np.zeros((N_FRAMES, N_CHANNELS))
        cache: dict = {}
        for i, contacts in enumerate(trajectory):
            if not contacts:
                continue
            key = tuple(np.round(np.asarray(contacts, dtype=float), 9).ravel())
            if key not in cache:
                touches = tuple(TouchPoint(center=(x, y), radius=r, press_depth=d)
                                for x, y, r, d in contacts)
                phantom = TouchPhantom(touches, "depth")
                touched = apply_phantom(self.baseline, phantom, self.mesh)
                cache[key] = self.solver.simulate_frame(touched).values - self.reference
            frames[i] = cache[key]
        return frames

    def synthesize(self, gesture: GestureClass,
                   rng: np.random.Generator, seed: int = 0) -> GestureSample:
        name = CLASS_NAMES[GestureClass(gesture)]
        spec = self.scripts["classes"][name]
        trajectory = script_trajectory(name, spec, rng, self.geom)
        frames = self._clean_frames(trajectory)
        contact = np.abs(frames).sum(axis=1) > 0
        signal_rms = (float(np.sqrt(np.mean(frames[contact] ** 2)))
                      if contact.any() else 0.0)
        scale = max(signal_rms, NOISE_FLOOR_OF_REF * self._ref_rms)
        sigma = scale * 10 ** (-self.snr_db / 20.0)
        frames = frames + rng.normal(size=frames.shape) * sigma
        return GestureSample(frames=frames, label=GestureClass(gesture), seed=seed)

    def balanced_dataset(self, per_class: int, master_seed: int,
                         n_jobs: int = 1) -> list:
        """Exactly balanced sample list, deterministic for the master seed."""
        jobs = [(int(cls), idx) for cls in GestureClass for idx in range(per_class)]
        if n_jobs > 1 and len(jobs) > 24:
            work = [(cls, idx, master_seed) for cls, idx in jobs]
            results: dict = {}
            with ProcessPoolExecutor(
                    max_workers=n_jobs, initializer=_synth_worker_init,
                    initargs=(self.geom.document(), self.mesh.target_element_size,
                              self.snr_db)) as ex:
                for key, frames in ex.map(_synth_worker_run, work, chunksize=8):
                    results[key] = frames
            return [GestureSample(frames=results[(cls, idx)],
                                  label=GestureClass(cls),
                                  seed=_sample_seed(master_seed, cls, idx))
                    for cls, idx in jobs]
        samples = []
        for cls, idx in jobs:
            seed = _sample_seed(master_seed, cls, idx)
            rng = np.random.default_rng(seed)
            samples.append(self.synthesize(GestureClass(cls), rng, seed=seed))
        return samples


def _sample_seed(master_seed: int, cls: int, idx: int) -> int:
    return int(np.random.SeedSequence([master_seed, cls, idx]).generate_state(1)[0])


_SYNTH_CTX: dict = {}


def _synth_worker_init(geom_doc: str, target: float, snr_db: float):
    geom = SensorGeometry.from_document(geom_doc)
    _SYNTH_CTX["synth"] = GestureSynthesizer(geom, target, snr_db)


def _synth_worker_run(args):
    cls, idx, master_seed = args
    seed = _sample_seed(master_seed, cls, idx)
    rng = np.random.default_rng(seed)
    sample = _SYNTH_CTX["synth"].synthesize(GestureClass(cls), rng, seed=seed)
    return (cls, idx), sample.frames


def synthesize_gesture(gesture: GestureClass, rng: np.random.Generator,
                       synthesizer: GestureSynthesizer) -> GestureSample:
    return synthesizer.synthesize(gesture, rng)


# ---------------------------------------------------------------------------
# Classifier
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    hidden: int = 128
    epochs: int = 120
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    val_fraction: float = 0.2
    seed: int = 0


@dataclass
class SequenceClassifier:
    """Flatten -> per-channel standardize -> dense ReLU -> 12-way softmax."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    channel_mean: np.ndarray    # (104,)
    channel_std: np.ndarray     # (104,)
    training_log: dict = field(default_factory=dict)

    def _features(self, frames: np.ndarray) -> np.ndarray:
        x = (frames - self.channel_mean) / self.channel_std
        return x.reshape(*frames.shape[:-2], N_FRAMES * N_CHANNELS)

    def predict_proba(self, frames: np.ndarray) -> np.ndarray:
        x = self._features(np.asarray(frames, dtype=float))
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        logits = h @ self.w2 + self.b2
        logits = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=-1, keepdims=True)

    def predict(self, frames: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(frames), axis=-1)

    def save(self, path):
        # custom container instead of npz: byte-identical for identical
        # weights (zip archives embed timestamps)
        from .inverse import _write_container
        _write_container(path, kind="gesture-classifier",
                         params={"training_log": self.training_log},
                         arrays={"w1": self.w1, "b1": self.b1, "w2": self.w2,
                                 "b2": self.b2, "channel_mean": self.channel_mean,
                                 "channel_std": self.channel_std})

    @classmethod
    def load(cls, path) -> "SequenceClassifier":
        from .inverse import _read_container
        params, data = _read_container(path, expect_kind="gesture-classifier")
        return cls(w1=data["w1"], b1=data["b1"], w2=data["w2"], b2=data["b2"],
                   channel_mean=data["channel_mean"], channel_std=data["channel_std"],
                   training_log=params.get("training_log", {}))

    def weights_checksum(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for arr in (self.w1, self.b1, self.w2, self.b2,
                    self.channel_mean, self.channel_std):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def train(samples: list, config: TrainConfig = TrainConfig()) -> SequenceClassifier:
    """Momentum SGD on cross-entropy; retains the best-validation model.

    Deterministic: seeded init, fixed shuffling, single-threaded updates.
    """
    by_class: dict = {}
    for s in samples:
        by_class.setdefault(int(s.label), []).append(s)
    n_classes = len(GestureClass)
    for cls in range(n_classes):
        if len(by_class.get(cls, [])) < 40:
            raise InsufficientDataError(
                f"class {cls} has fewer than 40 training samples")

    rng = np.random.default_rng(config.seed)
    train_set, val_set = [], []
    for cls in range(n_classes):
        group = by_class[cls]
        order = rng.permutation(len(group))
        n_val = max(1, int(round(config.val_fraction * len(group))))
        val_set.extend(group[i] for i in order[:n_val])
        train_set.extend(group[i] for i in order[n_val:])

    stack = np.stack([s.frames for s in train_set])      # (n, 15, 104)
    mean = stack.reshape(-1, N_CHANNELS).mean(axis=0)
    std = stack.reshape(-1, N_CHANNELS).std(axis=0)
    std = np.maximum(std, 1e-12)

    def features(batch):
        return ((batch - mean) / std).reshape(len(batch), -1)

    x_train = features(stack)
    y_train = np.array([int(s.label) for s in train_set])
    x_val = features(np.stack([s.frames for s in val_set]))
    y_val = np.array([int(s.label) for s in val_set])

    n_in = N_FRAMES * N_CHANNELS
    w1 = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, config.hidden))
    b1 = np.zeros(config.hidden)
    w2 = rng.normal(0.0, np.sqrt(2.0 / config.hidden), size=(config.hidden, n_classes))
    b2 = np.zeros(n_classes)
    vel = [np.zeros_like(p) for p in (w1, b1, w2, b2)]

    def val_accuracy():
        h = np.maximum(x_val @ w1 + b1, 0.0)
        pred = np.argmax(h @ w2 + b2, axis=1)
        return float(np.mean(pred == y_val))

    best = (-1.0, None)
    history = []
    n = len(x_train)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            h_lin = xb @ w1 + b1
            h = np.maximum(h_lin, 0.0)
            logits = h @ w2 + b2
            logits -= logits.max(axis=1, keepdims=True)
            e = np.exp(logits)
            p = e / e.sum(axis=1, keepdims=True)
            p[np.arange(len(yb)), yb] -= 1.0
            p /= len(yb)
            g_w2 = h.T @ p + config.weight_decay * w2
            g_b2 = p.sum(axis=0)
            dh = (p @ w2.T) * (h_lin > 0)
            g_w1 = xb.T @ dh + config.weight_decay * w1
            g_b1 = dh.sum(axis=0)
            for param, grad, v in zip((w1, b1, w2, b2),
                                      (g_w1, g_b1, g_w2, g_b2), vel):
                v *= config.momentum
                v -= config.learning_rate * grad
                param += v
        acc = val_accuracy()
        history.append(acc)
        if acc > best[0]:
            best = (acc, (w1.copy(), b1.copy(), w2.copy(), b2.copy(), epoch))
    w1, b1, w2, b2, best_epoch = best[1]
    log = {"val_accuracy": history, "best_epoch": best_epoch,
           "best_val_accuracy": best[0], "n_train": n, "n_val": len(x_val),
           "config": {"hidden": config.hidden, "epochs": config.epochs,
                      "batch_size": config.batch_size,
                      "learning_rate": config.learning_rate,
                      "momentum": config.momentum,
                      "weight_decay": config.weight_decay, "seed": config.seed}}
    return SequenceClassifier(w1=w1, b1=b1, w2=w2, b2=b2, channel_mean=mean,
                              channel_std=std, training_log=log)


def evaluate(classifier: SequenceClassifier, samples: list) -> tuple:
    """Overall accuracy and the row-normalized 12 x 12 confusion matrix."""
    frames = np.stack([s.frames for s in samples])
    labels = np.array([int(s.label) for s in samples])
    pred = classifier.predict(frames)
    n = len(GestureClass)
    confusion = np.zeros((n, n))
    for t, p in zip(labels, pred):
        confusion[t, p] += 1
    row_sums = confusion.sum(axis=1, keepdims=True)
    normalized = np.divide(confusion, row_sums, out=np.zeros_like(confusion),
                           where=row_sums > 0)
    accuracy = float(np.mean(pred == labels))
    return accuracy, normalized


def save_gesture_set(samples: list, path):
    """Deterministic binary bundle of gesture samples."""
    from .inverse import _write_container
    frames = np.stack([s.frames for s in samples])
    labels = np.array([int(s.label) for s in samples], dtype=float)
    seeds = np.array([s.seed for s in samples], dtype=float)
    _write_container(path, kind="gesture-set", params={"n": len(samples)},
                     arrays={"frames": frames, "labels": labels, "seeds": seeds})


def load_gesture_set(path) -> list:
    from .inverse import _read_container
    _, data = _read_container(path, expect_kind="gesture-set")
    return [GestureSample(frames=f, label=GestureClass(int(l)), seed=int(s))
            for f, l, s in zip(data["frames"], data["labels"], data["seeds"])]


def confusion_table(confusion: np.ndarray) -> str:
    names = [CLASS_NAMES[GestureClass(i)] for i in range(len(GestureClass))]
    width = max(len(n) for n in names)
    lines = [" " * width + "  " + " ".join(f"{n[:6]:>6}" for n in names)]
    for i, row in enumerate(confusion):
        lines.append(f"{names[i]:<{width}}  " + " ".join(f"{v:6.3f}" for v in row))
    return "\n".join(lines) + "\n"
