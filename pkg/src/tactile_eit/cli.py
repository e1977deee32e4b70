"""Command-line entry points: sweep, gen-data, reconstruct, train, eval, serve.

All commands are deterministic for a fixed seed and write no timestamps, so
reruns produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="lattice sensitivity sweep over (w, t)")
    p.add_argument("--widths", type=float, nargs="+",
                   default=[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    p.add_argument("--thicknesses", type=float, nargs="+",
                   default=[1.0, 2.0, 3.0, 4.0, 5.0])
    p.add_argument("--phantoms", type=int, default=10,
                   help="phantoms per touch condition")
    p.add_argument("--touch-counts", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True,
                   help="output path for the csv table (a .txt report is "
                        "written next to it)")


def _run_sweep(args):
    from .sweep import SweepConfig, run_sweep
    config = SweepConfig(widths=tuple(args.widths),
                         thicknesses=tuple(args.thicknesses),
                         phantoms_per_condition=args.phantoms,
                         touch_counts=tuple(args.touch_counts),
                         master_seed=args.seed)
    result = run_sweep(config)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(result.table())
    report_path = args.out.with_suffix(".txt")
    report_path.write_text(result.report())
    print(result.report())
    print(f"wrote {args.out} and {report_path}")


def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="generate the reconstruction dataset")
    p.add_argument("--per-class", type=int, default=200,
                   help="base phantoms per touch-number (1..5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--full-scale", action="store_true",
                   help="paper-scale 10,000 phantoms per touch-number")
    p.add_argument("--jobs", type=int, default=1)


def _run_gen_data(args):
    from .dataset import generate, save_dataset
    per = 10_000 if args.full_scale else args.per_class
    dataset = generate({k: per for k in range(1, 6)}, master_seed=args.seed,
                       n_jobs=args.jobs)
    manifest = save_dataset(dataset, args.out, seed=args.seed)
    print(json.dumps(manifest["splits"], indent=2, sort_keys=True))
    print(f"wrote dataset to {args.out}")


def _add_reconstruct(sub):
    p = sub.add_parser("reconstruct", help="reconstruct images from frames")
    p.add_argument("--method", choices=["tikhonov", "linear"], default="tikhonov")
    p.add_argument("--model", type=Path,
                   help="solver/map container (required for linear; optional "
                        "for tikhonov, else built from the default geometry)")
    p.add_argument("--frames", type=Path, required=True,
                   help="dataset split .bin with difference frames")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-2)


def _build_default_tikhonov(lam: float):
    from .dataset import DEFAULT_GEOMETRY, DEFAULT_TARGET_MM
    from .forward import ForwardSolver
    from .geometry import baseline_field, generate_mesh
    from .inverse import TikhonovSolver
    mesh = generate_mesh(DEFAULT_GEOMETRY, DEFAULT_TARGET_MM)
    solver = ForwardSolver(mesh)
    base = baseline_field(DEFAULT_GEOMETRY, mesh)
    jac = solver.jacobian(base)
    return TikhonovSolver(solver.jacobian_raster(jac), lam=lam,
                          geometry_hash=mesh.geometry_hash)


def _run_reconstruct(args):
    from .dataset import load_split
    from .inverse import LinearInverseMap, TikhonovSolver, _write_container
    samples = load_split(args.frames)
    if args.method == "linear":
        if not args.model:
            sys.exit("--model is required for the linear method")
        inverse = LinearInverseMap.load(args.model)
        images = [inverse.apply(s.frame_delta).pixels for s in samples]
    else:
        inverse = (TikhonovSolver.load(args.model) if args.model
                   else _build_default_tikhonov(args.lam))
        images = [inverse.reconstruct(s.frame_delta).pixels for s in samples]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    _write_container(args.out, kind="reconstructions",
                     params={"method": args.method, "n": len(images)},
                     arrays={"images": np.stack(images)})
    print(f"reconstructed {len(images)} frames -> {args.out}")


def _add_train(sub):
    p = sub.add_parser("train", help="train the gesture sequence classifier")
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--jobs", type=int, default=1)


def _run_train(args):
    from .gestures import GestureSynthesizer, TrainConfig, train
    synth = GestureSynthesizer()
    samples = synth.balanced_dataset(per_class=args.per_class,
                                     master_seed=args.seed, n_jobs=args.jobs)
    clf = train(samples, TrainConfig(seed=args.seed, epochs=args.epochs))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    clf.save(args.out)
    log = clf.training_log
    print(f"best val accuracy {log['best_val_accuracy']:.4f} "
          f"at epoch {log['best_epoch']}")
    print(f"wrote {args.out} (sha256 {clf.weights_checksum()[:16]})")


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a gesture model or reconstructions")
    p.add_argument("--model", type=Path, help="gesture classifier container")
    p.add_argument("--test", type=Path, help="gesture-set container to test on")
    p.add_argument("--per-class", type=int, default=20,
                   help="synthesize this many test samples per class when "
                        "--test is not given")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--reconstructions", type=Path,
                   help="reconstructions container to score against a dataset split")
    p.add_argument("--labels", type=Path, help="dataset split .bin with labels")
    p.add_argument("--jobs", type=int, default=1)


def _run_eval(args):
    if args.reconstructions:
        from .dataset import load_split
        from .inverse import _read_container
        from . import metrics
        _, arrays = _read_container(args.reconstructions, expect_kind="reconstructions")
        samples = load_split(args.labels)
        batch = metrics.evaluate_batch(arrays["images"],
                                       [s.image for s in samples])
        print("sample,cc,re,psnr_db,ssim")
        for i, rep in enumerate(batch["per_sample"]):
            print(f"{i},{rep.cc:.4f},{rep.re:.4f},{rep.psnr_db:.4f},{rep.ssim:.4f}")
        m = batch["mean"]
        print(f"mean,{m['cc']:.4f},{m['re']:.4f},{m['psnr_db']:.4f},{m['ssim']:.4f}")
        return
    from .gestures import (GestureSynthesizer, SequenceClassifier,
                           confusion_table, evaluate, load_gesture_set)
    if not args.model:
        sys.exit("--model is required for gesture evaluation")
    clf = SequenceClassifier.load(args.model)
    if args.test:
        samples = load_gesture_set(args.test)
    else:
        synth = GestureSynthesizer()
        samples = synth.balanced_dataset(per_class=args.per_class,
                                         master_seed=args.seed, n_jobs=args.jobs)
    acc, confusion = evaluate(clf, samples)
    print(confusion_table(confusion))
    print(f"accuracy: {acc:.4f}")


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the streaming session service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--geometry", type=Path, help="geometry document file")
    p.add_argument("--method", choices=["tikhonov", "linear"], default="tikhonov")
    p.add_argument("--classifier", type=Path)
    p.add_argument("--linear-map", type=Path)
    p.add_argument("--tick-hz", type=float, default=10.0)
    p.add_argument("--config", type=Path, help="json config overriding defaults")


def _run_serve(args):
    import uvicorn
    from .geometry import SensorGeometry
    from .service import create_app, rules_from_config

    config = {}
    if args.config:
        config = json.loads(args.config.read_text())
    geom = None
    geom_file = args.geometry or config.get("geometry_file")
    if geom_file:
        geom = SensorGeometry.from_document(Path(geom_file).read_text())
    rules = rules_from_config(config["rules"]) if "rules" in config else None
    port = args.port or config.get("port") or int(os.environ.get("TACTILE_EIT_PORT", 8787))
    app = create_app(
        default_geom=geom,
        classifier_path=str(args.classifier or config.get("classifier") or "") or None,
        method=config.get("method", args.method),
        linear_map_path=str(args.linear_map or config.get("linear_map") or "") or None,
        tick_hz=float(config.get("tick_hz", args.tick_hz)),
        rules=rules,
    )
    uvicorn.run(app, host=args.host, port=port, log_level="warning")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tactile-eit",
        description="simulation twin of a lattice-patterned EIT tactile sensor")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_sweep(sub)
    _add_gen_data(sub)
    _add_reconstruct(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)
    {
        "sweep": _run_sweep,
        "gen-data": _run_gen_data,
        "reconstruct": _run_reconstruct,
        "train": _run_train,
        "eval": _run_eval,
        "serve": _run_serve,
    }[args.command](args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
