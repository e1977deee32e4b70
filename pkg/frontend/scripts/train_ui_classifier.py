"""Train (once) and cache the gesture classifier used by the UI tests."""

import sys
from pathlib import Path

CACHE = Path(__file__).resolve().parent.parent / ".cache" / "classifier.bin"


def main():
    if CACHE.exists():
        print(f"classifier cache present: {CACHE}")
        return 0
    from tactile_eit.gestures import GestureSynthesizer, TrainConfig, train
    CACHE.parent.mkdir(parents=True, exist_ok=True)
    synth = GestureSynthesizer()
    print("synthesizing training gestures (a few minutes) ...", flush=True)
    samples = synth.balanced_dataset(per_class=60, master_seed=404, n_jobs=2)
    clf = train(samples, TrainConfig(seed=0, epochs=200))
    clf.save(CACHE)
    print(f"trained: best val accuracy "
          f"{clf.training_log['best_val_accuracy']:.3f}; wrote {CACHE}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
