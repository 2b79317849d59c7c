"""Command-line entry points.

Subcommands: generate-data, ingest, train, evaluate, grid, export-maps,
serve. Every subcommand takes ``--config FILE`` (JSON defaults, overridden
by explicit flags) and ``--seed``; commands that produce artifacts write
them into a run directory together with a config snapshot and a log.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data, harness
from .data import DatasetManifest, SyntheticShapeParams
from .guidance import ClickSizePolicy
from .weighting import WeightConfig


def _load_config(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _merge(file_cfg: dict, section: str, overrides: dict) -> dict:
    """File section first, explicit CLI values on top."""
    out = dict(file_cfg.get(section, {}))
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def _logger(run_dir: Path | None):
    handle = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        handle = open(run_dir / "run.log", "a")

    def log(msg: str):
        print(msg)
        if handle is not None:
            handle.write(msg + "\n")
            handle.flush()

    return log


def cmd_generate_data(args) -> int:
    cfg = _load_config(args.config)
    params_kw = _merge(cfg, "synthetic", {"seed": args.seed})
    params = SyntheticShapeParams(**params_kw)
    splits = {"train": args.train, "val": args.val, "test": args.test}
    splits = {k: v for k, v in splits.items() if v > 0}
    manifest = data.build_synthetic_manifest(params, splits)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest.save(out / "manifest.json")
    print(f"wrote {out / 'manifest.json'} "
          f"({sum(splits.values())} slices: {splits})")
    return 0


def cmd_ingest(args) -> int:
    path = Path(args.manifest)
    if path.exists():
        manifest = DatasetManifest.load(path)
    else:
        manifest = DatasetManifest(seed=args.seed or 0)
    data.add_volume_source(manifest, args.image, args.labels, args.roi_label,
                           args.split, window=(args.window_low, args.window_high))
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest.save(path)
    n = sum(1 for tag in manifest.splits.values() if tag == args.split)
    print(f"added {args.image} to split {args.split!r}; "
          f"manifest now has {n} {args.split} slices")
    return 0


def _train_config(args, cfg: dict) -> harness.TrainConfig:
    kw = _merge(cfg, "train", {
        "model": args.model, "loss": args.loss, "epochs": args.epochs,
        "batch_size": args.batch_size, "learning_rate": args.learning_rate,
        "seed": args.seed, "base_channels": args.base_channels,
        "threads": args.threads,
    })
    if "weight_config" in cfg:
        kw.setdefault("weight_config", cfg["weight_config"])
    if "click_policy" in cfg:
        kw.setdefault("click_policy", cfg["click_policy"])
    return harness.TrainConfig(**kw)


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    config = _train_config(args, cfg)
    manifest = DatasetManifest.load(args.manifest)
    run_dir = Path(args.out)
    log = _logger(run_dir)
    result = harness.train(config, manifest, out_dir=run_dir, log=log)
    log(f"final loss {result.loss_history[-1]:.4f}; "
        f"checkpoint at {result.checkpoint_path}")
    return 0


def _click_policy(args, cfg: dict) -> ClickSizePolicy:
    kw = _merge(cfg, "click_policy", {
        "mode": args.size_mode, "fixed_size_px": args.fixed_size,
        "alpha": args.alpha,
    })
    return ClickSizePolicy(**kw)


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    manifest = DatasetManifest.load(args.manifest)
    policy = _click_policy(args, cfg)
    report = harness.evaluate(
        args.checkpoint, manifest, policy, args.budget,
        seed=args.seed or 0, split=args.split, aggregate=args.aggregate,
        config_name=Path(args.checkpoint).stem, threads=args.threads)
    text = report.to_json()
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"wrote {out}")
    print(text)
    return 0


def cmd_grid(args) -> int:
    cfg = _load_config(args.config)
    kw = _merge(cfg, "grid", {
        "epochs": args.epochs, "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "base_channels": args.base_channels, "seed": args.seed,
        "threads": args.threads,
    })
    configs = harness.experiment_grid(**kw)
    if args.only:
        wanted = set(args.only.split(","))
        configs = [c for c in configs
                   if c.name in wanted or c.name.split("-")[0] in wanted]
    manifest = DatasetManifest.load(args.manifest)
    run_dir = Path(args.out)
    log = _logger(run_dir)
    rows = harness.run_grid(configs, manifest, out_dir=run_dir,
                            interaction_budget=args.budget, log=log)
    print(harness.format_grid_table(rows))
    failures = [r for r in rows if "error" in r]
    return 1 if failures else 0


def _to_png(path: Path, arr: np.ndarray) -> None:
    from PIL import Image

    lo, hi = float(arr.min()), float(arr.max())
    scaled = (arr - lo) / (hi - lo) if hi > lo else np.zeros_like(arr)
    Image.fromarray((scaled * 255).astype(np.uint8)).save(path)


def cmd_export_maps(args) -> int:
    from . import guidance, weighting

    manifest = DatasetManifest.load(args.manifest)
    slices = data.materialize(manifest, args.split)
    if not slices:
        print(f"split {args.split!r} is empty", file=sys.stderr)
        return 1
    s = slices[args.index]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _to_png(out / f"{s.slice_id}-image.png", s.image)
    if s.gt_mask is not None and s.gt_mask.any():
        _to_png(out / f"{s.slice_id}-mask.png", s.gt_mask.astype(float))
        policy = ClickSizePolicy()
        clicks = guidance.simulate_interaction(s.gt_mask, policy,
                                               rng_seed=[args.seed or 0])
        maps = guidance.render_guidance(clicks, *s.image.shape)
        _to_png(out / f"{s.slice_id}-guidance-fg.png", maps.fg_map)
        _to_png(out / f"{s.slice_id}-guidance-bg.png", maps.bg_map)
        wc = WeightConfig()
        boundary = weighting.gaussian_boundary_map(s.gt_mask, wc)
        clickw = weighting.click_weight_map(clicks, *s.image.shape, wc)
        fused = weighting.fuse_weight_maps(boundary, clickw)
        _to_png(out / f"{s.slice_id}-weights-boundary.png", boundary.weights)
        _to_png(out / f"{s.slice_id}-weights-fused.png", fused.weights)
    print(f"wrote debug maps for {s.slice_id} to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from . import service

    cfg = _load_config(args.config)
    settings = service.Settings.from_sources(
        _merge(cfg, "service", {
            "checkpoint_dir": args.checkpoint_dir,
            "session_ttl_s": args.session_ttl,
            "host": args.host,
            "port": args.port,
        }))
    app = service.create_app(settings)
    uvicorn.run(app, host=settings.host, port=settings.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="clickseg",
        description="Click-guided interactive segmentation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file with defaults")
        sp.add_argument("--seed", type=int, default=None)

    g = sub.add_parser("generate-data", help="build a synthetic manifest")
    common(g)
    g.add_argument("--out", required=True)
    g.add_argument("--train", type=int, default=400)
    g.add_argument("--val", type=int, default=0)
    g.add_argument("--test", type=int, default=100)
    g.set_defaults(func=cmd_generate_data)

    g = sub.add_parser("ingest", help="register a volume pair in a manifest")
    common(g)
    g.add_argument("--manifest", required=True)
    g.add_argument("--image", required=True)
    g.add_argument("--labels", required=True)
    g.add_argument("--roi-label", type=int, required=True)
    g.add_argument("--split", default="test")
    g.add_argument("--window-low", type=float, default=data.DEFAULT_WINDOW[0])
    g.add_argument("--window-high", type=float, default=data.DEFAULT_WINDOW[1])
    g.set_defaults(func=cmd_ingest)

    g = sub.add_parser("train", help="train one model")
    common(g)
    g.add_argument("--manifest", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--model", choices=["unet", "iunet"])
    g.add_argument("--loss", choices=["dice", "weighted_dice"])
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int, dest="batch_size")
    g.add_argument("--learning-rate", type=float, dest="learning_rate")
    g.add_argument("--base-channels", type=int, dest="base_channels")
    g.add_argument("--threads", type=int)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("evaluate", help="evaluate a checkpoint")
    common(g)
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--manifest", required=True)
    g.add_argument("--budget", type=int, default=1)
    g.add_argument("--split", default="test")
    g.add_argument("--aggregate", choices=["slice", "volume"], default="slice")
    g.add_argument("--size-mode", choices=["fixed", "dynamic"],
                   dest="size_mode")
    g.add_argument("--fixed-size", type=int, dest="fixed_size")
    g.add_argument("--alpha", type=float)
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--out")
    g.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("grid", help="run the 9-preset ablation grid")
    common(g)
    g.add_argument("--manifest", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--budget", type=int, default=1)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int, dest="batch_size")
    g.add_argument("--learning-rate", type=float, dest="learning_rate")
    g.add_argument("--base-channels", type=int, dest="base_channels")
    g.add_argument("--threads", type=int)
    g.add_argument("--only", help="comma-separated preset names or numbers")
    g.set_defaults(func=cmd_grid)

    g = sub.add_parser("export-maps", help="write debug PNGs of one slice")
    common(g)
    g.add_argument("--manifest", required=True)
    g.add_argument("--split", default="train")
    g.add_argument("--index", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_export_maps)

    g = sub.add_parser("serve", help="run the HTTP inference service")
    common(g)
    g.add_argument("--host", default=None)
    g.add_argument("--port", type=int, default=None)
    g.add_argument("--checkpoint-dir", dest="checkpoint_dir")
    g.add_argument("--session-ttl", type=float, dest="session_ttl")
    g.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
