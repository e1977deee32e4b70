"""Gesture classification demo at reduced scale.

Synthesizes a small balanced gesture set, trains the sequence classifier
and prints the confusion table; also renders one reconstructed swipe as a
frame strip.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tactile_eit import metrics
from tactile_eit.forward import ForwardSolver
from tactile_eit.geometry import baseline_field, generate_mesh
from tactile_eit.gestures import (GestureClass, GestureSynthesizer,
                                  TrainConfig, confusion_table, evaluate,
                                  train)
from tactile_eit.inverse import TikhonovSolver

synth = GestureSynthesizer()
print("synthesizing 45 + 8 samples per class (few minutes) ...")
train_set = synth.balanced_dataset(per_class=45, master_seed=1, n_jobs=2)
test_set = synth.balanced_dataset(per_class=8, master_seed=2, n_jobs=2)

clf = train(train_set, TrainConfig(epochs=150, seed=0))
accuracy, confusion = evaluate(clf, test_set)
print(confusion_table(confusion))
print(f"test accuracy at demo scale: {accuracy:.3f}")

# visualize one swipe-right sample through the Tikhonov pipeline
sample = next(s for s in test_set if s.label == GestureClass.SWIPE_RIGHT)
jac = synth.solver.jacobian(synth.baseline)
tik = TikhonovSolver(synth.solver.jacobian_raster(jac))
fig, axes = plt.subplots(1, 5, figsize=(15, 3.2))
for ax, k in zip(axes, (0, 3, 7, 11, 14)):
    img = tik.reconstruct(sample.frames[k], geometry_hash=None).pixels
    ax.imshow(metrics.normalize(img), origin="lower", cmap="inferno")
    ax.set_title(f"frame {k}")
    ax.set_xticks([])
    ax.set_yticks([])
fig.suptitle("swipe-right, reconstructed frames")
fig.tight_layout()
fig.savefig("demo_gesture_frames.png", dpi=130)
print("wrote demo_gesture_frames.png")
