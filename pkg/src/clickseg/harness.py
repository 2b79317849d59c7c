"""Training, evaluation and the ablation grid.

The harness drives the full loop: per-epoch click simulation, guidance
rendering, weight-map fusion, optimization, and a multi-round evaluation
protocol that refines predictions against error regions under a click
budget. A fixed (config, seed, manifest) triple reproduces every number
bit-for-bit in single-threaded mode.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import guidance, network, weighting
from .data import DatasetManifest, Slice, WeightMapCache, materialize, slice_rng_key
from .errors import EmptyTestSplit, InvalidParams, NonFiniteLoss
from .guidance import ClickSet, ClickSizePolicy, SizeMode
from .losses import LossConfig, binarize, dsc
from .network import NetworkSpec, SegmentationUNet
from .torchloss import weighted_dice_torch
from .weighting import ClickWeightMode, WeightConfig, WeightMap

#: Click budgets reported by default (when the evaluation budget allows).
DEFAULT_BUDGETS = (1, 2, 5, 10, 15)


@dataclass
class TrainConfig:
    """Everything that determines a training run."""

    model: str = "iunet"  # "unet" (image only) or "iunet" (image + guidance)
    loss: str = "weighted_dice"  # "dice" or "weighted_dice"
    weight_config: WeightConfig = field(default_factory=WeightConfig)
    click_policy: ClickSizePolicy = field(default_factory=ClickSizePolicy)
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    seed: int = 0
    base_channels: int = 32
    dropout_rate: float = 0.1
    threads: int = 1
    checkpoint_every: int = 0  # epochs between checkpoints; 0 = final only
    #: Upper bound for the per-slice interaction count drawn each epoch.
    #: 1 keeps the classic single-interaction protocol; larger values expose
    #: the network to the accumulated multi-click guidance it will see at
    #: evaluation time, so extra clicks refine instead of distract.
    max_train_interactions: int = 1
    name: str = ""

    def __post_init__(self):
        if self.model not in ("unet", "iunet"):
            raise InvalidParams(f"unknown model {self.model!r}")
        if self.loss not in ("dice", "weighted_dice"):
            raise InvalidParams(f"unknown loss {self.loss!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidParams(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1:
            raise InvalidParams("batch_size must be >= 1")
        if self.epochs < 1:
            raise InvalidParams("epochs must be >= 1")
        if self.max_train_interactions < 1:
            raise InvalidParams("max_train_interactions must be >= 1")
        if isinstance(self.weight_config, dict):
            self.weight_config = WeightConfig.from_dict(self.weight_config)
        if isinstance(self.click_policy, dict):
            self.click_policy = ClickSizePolicy.from_dict(self.click_policy)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["weight_config"] = self.weight_config.to_dict()
        d["click_policy"] = self.click_policy.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    @property
    def network_spec(self) -> NetworkSpec:
        return NetworkSpec(in_channels=1 if self.model == "unet" else 3,
                           base_channels=self.base_channels,
                           dropout_rate=self.dropout_rate)

    @property
    def needs_guidance(self) -> bool:
        return self.model == "iunet"

    @property
    def needs_weights(self) -> bool:
        return self.loss == "weighted_dice"

    @property
    def needs_clicks(self) -> bool:
        """Clicks feed guidance channels and/or click weight maps."""
        return self.needs_guidance or (
            self.needs_weights
            and self.weight_config.click_weight_mode is not ClickWeightMode.NONE)


@dataclass
class TrainResult:
    model: SegmentationUNet
    spec: NetworkSpec
    config: TrainConfig
    loss_history: list[float]
    checkpoint_path: Optional[str] = None


@dataclass
class EvalReport:
    """Mean DSC per click budget for one (config, seed, manifest) triple."""

    config_name: str
    config_hash: str
    seed: int
    budget_dsc: dict  # budget (int) -> mean DSC (float in [0, 100])
    n_slices: int
    runtime_s: float
    policy: dict
    aggregate: str = "slice"

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["budget_dsc"] = {str(k): v for k, v in self.budget_dsc.items()}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        d["budget_dsc"] = {int(k): v for k, v in d["budget_dsc"].items()}
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_json(Path(path).read_text())


def _pad_to_stride(arr: np.ndarray, stride: int) -> np.ndarray:
    h, w = arr.shape[-2:]
    ph = (-h) % stride
    pw = (-w) % stride
    if ph == 0 and pw == 0:
        return arr
    pad = [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(arr, pad)


def compose_channels(image: np.ndarray, clicks: Optional[ClickSet],
                     in_channels: int) -> np.ndarray:
    """Stack the network input: image alone, or image + FG/BG guidance."""
    if in_channels == 1:
        return image[None].astype(np.float32)
    h, w = image.shape
    if clicks is None or not clicks.clicks:
        fg = np.zeros((h, w), dtype=np.float32)
        bg = np.zeros((h, w), dtype=np.float32)
    else:
        maps = guidance.render_guidance(clicks, h, w)
        fg, bg = maps.fg_map, maps.bg_map
    return np.stack([image.astype(np.float32), fg, bg])


def infer_mask(model: SegmentationUNet, spec: NetworkSpec, image: np.ndarray,
               clicks: Optional[ClickSet] = None,
               threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Run one padded forward pass; returns (probabilities, binary mask)
    cropped back to the image size."""
    h, w = image.shape
    x = compose_channels(image, clicks, spec.in_channels)
    x = _pad_to_stride(x, spec.stride)[None]
    probs = network.predict(model, torch.from_numpy(x))[0, 0, :h, :w]
    return probs, binarize(probs, threshold)


def _slice_weight_map(s: Slice, config: TrainConfig,
                      clicks: Optional[ClickSet],
                      boundary_cache: dict,
                      disk_cache: Optional[WeightMapCache]) -> np.ndarray:
    """Fused per-pixel loss weights for one slice (boundary + FG clicks)."""
    wc = config.weight_config
    key = s.slice_id
    if key not in boundary_cache:
        if disk_cache is not None:
            try:
                boundary_cache[key] = disk_cache.load(s.slice_id, wc)
            except Exception:
                wm = weighting.gaussian_boundary_map(s.gt_mask, wc)
                disk_cache.store(s.slice_id, wc, wm)
                boundary_cache[key] = wm
        else:
            boundary_cache[key] = weighting.gaussian_boundary_map(s.gt_mask, wc)
    boundary: WeightMap = boundary_cache[key]
    if clicks is None or wc.click_weight_mode is ClickWeightMode.NONE:
        return boundary.weights
    h, w = s.image.shape
    cw = weighting.click_weight_map(clicks, h, w, wc)
    return weighting.fuse_weight_maps(boundary, cw).weights


def _batches(indices: list[int], slices: list[Slice], batch_size: int):
    """Chunk indices into batches of uniform spatial shape."""
    batch: list[int] = []
    shape = None
    for i in indices:
        s = slices[i].image.shape
        if batch and (s != shape or len(batch) >= batch_size):
            yield batch
            batch = []
        batch.append(i)
        shape = s
    if batch:
        yield batch


def train(config: TrainConfig, manifest: DatasetManifest,
          out_dir=None, cache: Optional[WeightMapCache] = None,
          log=None) -> TrainResult:
    """Train a model per ``config`` on the manifest's train split.

    Per epoch, every slice gets freshly simulated interactions (new seed per
    epoch; the count is drawn from [1, max_train_interactions]), guidance
    channels are rendered for the interactive model, and the weighted loss
    fuses the boundary map with FG click weights. Slices with an empty
    ground-truth mask are excluded (no click can be simulated and the
    boundary map is undefined).

    Raises:
        InvalidParams: empty train split.
        NonFiniteLoss: the loss became NaN/inf (aborts with diagnostics).
    """
    torch.set_num_threads(max(1, config.threads))
    torch.manual_seed(config.seed)

    slices = [s for s in materialize(manifest, "train")
              if s.gt_mask is not None and s.gt_mask.any()]
    if not slices:
        raise InvalidParams("train split has no usable (nonempty-mask) slices")

    spec = config.network_spec
    model = network.build_network(spec, seed=config.seed)
    if config.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    else:
        opt = torch.optim.SGD(model.parameters(), lr=config.learning_rate,
                              momentum=0.9)

    loss_cfg = LossConfig()
    boundary_cache: dict = {}
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / "config.json").write_text(
            json.dumps(config.to_dict(), indent=2, sort_keys=True))

    history: list[float] = []
    for epoch in range(config.epochs):
        model.train()
        order = np.random.default_rng([config.seed, epoch]).permutation(len(slices))
        epoch_losses: list[float] = []
        for batch_ids in _batches([int(i) for i in order], slices,
                                  config.batch_size):
            xs, gts, ws = [], [], []
            for i in batch_ids:
                s = slices[i]
                clicks = None
                if config.needs_clicks:
                    key = slice_rng_key(s.slice_id)
                    clicks = guidance.simulate_interaction(
                        s.gt_mask, config.click_policy,
                        rng_seed=[config.seed, epoch, key])
                    if config.max_train_interactions > 1:
                        # 40% of draws keep the single-interaction case sharp;
                        # the rest spread uniformly so large click budgets
                        # stay represented
                        u = np.random.default_rng(
                            [config.seed, epoch, key, 0]).random()
                        if u < 0.4:
                            n = 1
                        else:
                            n = 2 + int((u - 0.4) / 0.6
                                        * (config.max_train_interactions - 1))
                        for j in range(2, n + 1):
                            clicks = clicks.merged(guidance.simulate_interaction(
                                s.gt_mask, config.click_policy,
                                rng_seed=[config.seed, epoch, key, j]))
                xs.append(compose_channels(s.image, clicks, spec.in_channels))
                gts.append(s.gt_mask.astype(np.float32)[None])
                if config.needs_weights:
                    ws.append(_slice_weight_map(s, config, clicks,
                                                boundary_cache, cache)[None])
                else:
                    ws.append(np.ones_like(gts[-1]))
            h, w = slices[batch_ids[0]].image.shape
            x = torch.from_numpy(_pad_to_stride(np.stack(xs), spec.stride))
            g = torch.from_numpy(np.stack(gts))
            wt = torch.from_numpy(np.stack(ws).astype(np.float32))

            opt.zero_grad()
            probs = model(x)[:, :, :h, :w]
            loss = weighted_dice_torch(probs, g, wt, loss_cfg)
            val = float(loss.detach())
            if not np.isfinite(val):
                raise NonFiniteLoss(
                    f"loss {val} at epoch {epoch} batch of {len(batch_ids)} "
                    f"(lr={config.learning_rate}, model={config.model})")
            loss.backward()
            opt.step()
            epoch_losses.append(val)
        history.append(float(np.mean(epoch_losses)))
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} loss {history[-1]:.4f}")
        if (out_path is not None and config.checkpoint_every > 0
                and (epoch + 1) % config.checkpoint_every == 0
                and epoch + 1 < config.epochs):
            network.save_checkpoint(
                out_path / f"checkpoint-epoch{epoch + 1:04d}.npz", model,
                {"config": config.to_dict(), "epochs_run": epoch + 1})

    checkpoint_path = None
    if out_path is not None:
        checkpoint_path = str(out_path / "checkpoint.npz")
        network.save_checkpoint(checkpoint_path, model, {
            "config": config.to_dict(),
            "epochs_run": config.epochs,
            "final_loss": history[-1],
        })
        (out_path / "loss_history.json").write_text(json.dumps(history))
    return TrainResult(model=model, spec=spec, config=config,
                       loss_history=history, checkpoint_path=checkpoint_path)


def _round_size(policy: ClickSizePolicy, current_mask: np.ndarray) -> int:
    """Size for the next refinement click: dynamic policies derive it from
    the current predicted mask, falling back to the fixed size when empty."""
    if policy.mode is SizeMode.DYNAMIC:
        count = int(np.count_nonzero(current_mask))
        if count > 0:
            return guidance.compute_click_size(policy.alpha, count, policy)
    return policy.fixed_size_px


def evaluate_slice(model: SegmentationUNet, spec: NetworkSpec, s: Slice,
                   click_policy: ClickSizePolicy, interaction_budget: int,
                   seed: int, budgets=DEFAULT_BUDGETS) -> dict:
    """Run the multi-round protocol on one slice.

    Round 1 simulates an interaction from ground truth at the fixed size;
    dynamic policies then estimate the size from the first prediction,
    re-render the same clicks and re-run once. Rounds 2..k draw clicks from
    the error regions of the current prediction, sized off the current mask.
    Returns {budget: DSC} for the requested budgets up to the full budget.
    """
    milestones = sorted({b for b in budgets if b <= interaction_budget}
                        | {interaction_budget})
    if spec.in_channels == 1:
        _, mask = infer_mask(model, spec, s.image)
        score = dsc(mask, s.gt_mask)
        return {b: score for b in milestones}

    key = slice_rng_key(s.slice_id)
    clicks = guidance.simulate_interaction(
        s.gt_mask, click_policy, rng_seed=[seed, key, 1],
        size_px=click_policy.fixed_size_px)
    _, mask = infer_mask(model, spec, s.image, clicks)
    if click_policy.mode is SizeMode.DYNAMIC and mask.any():
        size = guidance.estimate_test_time_size(mask, click_policy)
        clicks = ClickSet([c.with_size(size) for c in clicks.clicks],
                          clicks.interaction_count)
        _, mask = infer_mask(model, spec, s.image, clicks)

    out: dict[int, float] = {}
    if 1 in milestones:
        out[1] = dsc(mask, s.gt_mask)
    for r in range(2, interaction_budget + 1):
        size = _round_size(click_policy, mask)
        step = guidance.simulate_interaction(
            s.gt_mask, click_policy, rng_seed=[seed, key, r],
            prior_prediction=mask, size_px=size)
        clicks = clicks.merged(step)
        _, mask = infer_mask(model, spec, s.image, clicks)
        if r in milestones:
            out[r] = dsc(mask, s.gt_mask)
    return out


def _volume_key(slice_id: str) -> str:
    stem, sep, tail = slice_id.rpartition("-z")
    if sep and tail.isdigit():
        return stem
    return slice_id


def evaluate(model_or_checkpoint, manifest: DatasetManifest,
             click_policy: ClickSizePolicy, interaction_budget: int,
             seed: int = 0, budgets=DEFAULT_BUDGETS, split: str = "test",
             aggregate: str = "slice", config_name: str = "",
             config_hash: str = "", threads: int = 1) -> EvalReport:
    """Evaluate a model over a split with the multi-round click protocol.

    ``aggregate`` is "slice" (mean DSC over nonempty-mask slices) or
    "volume" (3D DSC per volume from accumulated overlaps, then mean).

    Raises:
        EmptyTestSplit: the split has no slices with ground truth.
        InvalidParams: interaction_budget < 1.
    """
    if interaction_budget < 1:
        raise InvalidParams("interaction_budget must be >= 1")
    if aggregate not in ("slice", "volume"):
        raise InvalidParams(f"unknown aggregation {aggregate!r}")
    torch.set_num_threads(max(1, threads))
    if isinstance(model_or_checkpoint, (str, Path)):
        model, _ = network.load_checkpoint(model_or_checkpoint)
    else:
        model = model_or_checkpoint
    spec = model.spec

    slices = [s for s in materialize(manifest, split) if s.gt_mask is not None]
    usable = [s for s in slices if s.gt_mask.any()]
    if not usable:
        raise EmptyTestSplit(f"split {split!r} has no nonempty-mask slices")

    start = time.perf_counter()
    milestones = sorted({b for b in budgets if b <= interaction_budget}
                        | {interaction_budget})
    per_slice = {s.slice_id: evaluate_slice(model, spec, s, click_policy,
                                            interaction_budget, seed,
                                            budgets=milestones)
                 for s in usable}

    if aggregate == "slice":
        budget_dsc = {b: float(np.mean([per_slice[s.slice_id][b]
                                        for s in usable]))
                      for b in milestones}
        n = len(usable)
    else:
        budget_dsc = _volume_aggregate(model, spec, usable, click_policy,
                                       interaction_budget, seed, milestones)
        n = len({_volume_key(s.slice_id) for s in usable})
    runtime = time.perf_counter() - start
    return EvalReport(config_name=config_name, config_hash=config_hash,
                      seed=seed, budget_dsc=budget_dsc, n_slices=n,
                      runtime_s=round(runtime, 3),
                      policy=click_policy.to_dict(), aggregate=aggregate)


def _volume_aggregate(model, spec, slices, click_policy, interaction_budget,
                      seed, milestones) -> dict:
    """3D DSC per volume: overlaps accumulated across a volume's slices."""
    inter: dict = {}
    total: dict = {}
    for s in slices:
        vol = _volume_key(s.slice_id)
        key = slice_rng_key(s.slice_id)
        clicks = guidance.simulate_interaction(
            s.gt_mask, click_policy, rng_seed=[seed, key, 1],
            size_px=click_policy.fixed_size_px)
        _, mask = infer_mask(model, spec, s.image, clicks)
        if click_policy.mode is SizeMode.DYNAMIC and mask.any():
            size = guidance.estimate_test_time_size(mask, click_policy)
            clicks = ClickSet([c.with_size(size) for c in clicks.clicks],
                              clicks.interaction_count)
            _, mask = infer_mask(model, spec, s.image, clicks)
        for r in range(1, interaction_budget + 1):
            if r > 1:
                size = _round_size(click_policy, mask)
                step = guidance.simulate_interaction(
                    s.gt_mask, click_policy, rng_seed=[seed, key, r],
                    prior_prediction=mask, size_px=size)
                clicks = clicks.merged(step)
                _, mask = infer_mask(model, spec, s.image, clicks)
            if r in milestones:
                gt = s.gt_mask.astype(bool)
                inter.setdefault(r, {}).setdefault(vol, 0)
                total.setdefault(r, {}).setdefault(vol, 0)
                inter[r][vol] += int((mask.astype(bool) & gt).sum())
                total[r][vol] += int(mask.sum()) + int(gt.sum())
    out = {}
    for r in milestones:
        scores = [100.0 if total[r][v] == 0 else 100.0 * 2 * inter[r][v] / total[r][v]
                  for v in inter[r]]
        out[r] = float(np.mean(scores))
    return out


# ---------------------------------------------------------------------------
# The 9-preset ablation grid

def experiment_grid(epochs: int = 100, batch_size: int = 8,
                    learning_rate: float = 1e-4, base_channels: int = 32,
                    seed: int = 0, threads: int = 1,
                    max_train_interactions: int = 15) -> list[TrainConfig]:
    """The nine standard presets, in ascending order of machinery:

    1. plain U-Net + dice; 2. interactive U-Net + dice; 3. + weighted loss
    with the boundary map only; 4. + gaussian click weights; 5. + flat
    (equal) click weights; 6/7. flat weights with 2/10 px clicks; 8/9. flat
    weights with dynamic click size (alpha 1/500, 1/800).

    Interactive presets train on 1..max_train_interactions interactions per
    slice so multi-click evaluation budgets stay in distribution.
    """
    common = dict(epochs=epochs, batch_size=batch_size,
                  learning_rate=learning_rate, base_channels=base_channels,
                  seed=seed, threads=threads,
                  max_train_interactions=max_train_interactions)

    def wc(mode):
        return WeightConfig(click_weight_mode=mode)

    def pol(**kw):
        return ClickSizePolicy(**kw)

    return [
        TrainConfig(name="1-unet-dice", model="unet", loss="dice", **common),
        TrainConfig(name="2-iunet-dice", model="iunet", loss="dice", **common),
        TrainConfig(name="3-iunet-wdice-boundary", model="iunet",
                    loss="weighted_dice", weight_config=wc(ClickWeightMode.NONE),
                    **common),
        TrainConfig(name="4-iunet-wdice-gauss-clicks", model="iunet",
                    loss="weighted_dice",
                    weight_config=wc(ClickWeightMode.GAUSSIAN), **common),
        TrainConfig(name="5-iunet-wdice-equal-clicks", model="iunet",
                    loss="weighted_dice",
                    weight_config=wc(ClickWeightMode.EQUAL_WEIGHT), **common),
        TrainConfig(name="6-equal-2px", model="iunet", loss="weighted_dice",
                    weight_config=wc(ClickWeightMode.EQUAL_WEIGHT),
                    click_policy=pol(fixed_size_px=2), **common),
        TrainConfig(name="7-equal-10px", model="iunet", loss="weighted_dice",
                    weight_config=wc(ClickWeightMode.EQUAL_WEIGHT),
                    click_policy=pol(fixed_size_px=10), **common),
        TrainConfig(name="8-equal-dynamic-500", model="iunet",
                    loss="weighted_dice",
                    weight_config=wc(ClickWeightMode.EQUAL_WEIGHT),
                    click_policy=pol(mode=SizeMode.DYNAMIC, alpha=1 / 500),
                    **common),
        TrainConfig(name="9-equal-dynamic-800", model="iunet",
                    loss="weighted_dice",
                    weight_config=wc(ClickWeightMode.EQUAL_WEIGHT),
                    click_policy=pol(mode=SizeMode.DYNAMIC, alpha=1 / 800),
                    **common),
    ]


def run_grid(configs: list[TrainConfig], manifest: DatasetManifest,
             out_dir=None, interaction_budget: int = 1,
             budgets=DEFAULT_BUDGETS, log=None) -> list[dict]:
    """Train + evaluate every config; failures are recorded, not fatal.

    Returns one row per config: {"name", "report": EvalReport} on success or
    {"name", "error": str} on failure, in grid order.
    """
    rows = []
    out_path = Path(out_dir) if out_dir is not None else None
    for cfg in configs:
        run_dir = out_path / cfg.name if out_path is not None else None
        try:
            result = train(cfg, manifest, out_dir=run_dir, log=log)
            report = evaluate(result.model, manifest, cfg.click_policy,
                              interaction_budget, seed=cfg.seed,
                              budgets=budgets, config_name=cfg.name,
                              config_hash=cfg.config_hash(),
                              threads=cfg.threads)
            if run_dir is not None:
                report.save(run_dir / "report.json")
            rows.append({"name": cfg.name, "report": report})
            if log is not None:
                log(f"{cfg.name}: DSC {report.budget_dsc}")
        except Exception as exc:  # fault isolation across grid entries
            rows.append({"name": cfg.name, "error": f"{type(exc).__name__}: {exc}"})
            if log is not None:
                log(f"{cfg.name}: FAILED {exc}")
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        (out_path / "grid.json").write_text(grid_to_json(rows))
        (out_path / "grid.txt").write_text(format_grid_table(rows))
    return rows


def grid_to_json(rows: list[dict]) -> str:
    ser = []
    for row in rows:
        if "report" in row:
            ser.append({"name": row["name"],
                        "report": json.loads(row["report"].to_json())})
        else:
            ser.append(dict(row))
    return json.dumps(ser, indent=2, sort_keys=True)


def format_grid_table(rows: list[dict]) -> str:
    """Fixed-width comparison table, one row per grid entry."""
    budgets = sorted({b for row in rows if "report" in row
                      for b in row["report"].budget_dsc})
    header = ["experiment".ljust(28)] + [f"DSC@{b}".rjust(8) for b in budgets]
    lines = ["  ".join(header), "-" * (30 + 10 * len(budgets))]
    for row in rows:
        cells = [row["name"].ljust(28)]
        if "report" in row:
            for b in budgets:
                v = row["report"].budget_dsc.get(b)
                cells.append(("%.2f" % v).rjust(8) if v is not None
                             else " " * 8)
        else:
            cells.append("FAILED: " + row["error"])
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"
