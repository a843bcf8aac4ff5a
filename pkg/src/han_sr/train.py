"""Step-budget training loop: fixed patch pool, Adam, deterministic under seed.

The loop trains on a pool of `num_patches` aligned LR/HR crops sampled once up
front, cycling through it in reshuffled epochs. The loss log written next to
the checkpoint holds only (step, loss) so that two same-seed runs produce
byte-identical logs; wall time goes to stdout only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ops
from .checkpoint import save_checkpoint
from .config import RunConfig, config_text
from .data import DegradationSpec, Image, augment, decode_png, sample_patches
from .model import HanParams, han_forward, init_params
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor


class NumericalError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass
class TrainResult:
    steps: int
    final_loss: float
    checkpoint_path: str
    log_path: str


def degradation_spec(cfg: RunConfig) -> DegradationSpec:
    return DegradationSpec(kind=cfg.degradation, scale=cfg.scale,
                           blur_ksize=cfg.blur_ksize, blur_sigma=cfg.blur_sigma)


def load_hr_images(dataset_dir) -> list[tuple[str, Image]]:
    """All PNGs under <dir>/HR when that exists, else under <dir> itself."""
    root = Path(dataset_dir)
    hr_dir = root / "HR" if (root / "HR").is_dir() else root
    files = sorted(hr_dir.glob("*.png"))
    if not files:
        raise FileNotFoundError(f"no PNG files in {hr_dir}")
    return [(f.name, decode_png(f.read_bytes())) for f in files]


def build_patch_pool(images, spec: DegradationSpec, count: int, patch: int,
                     seed: int):
    """Round-robin over images; per-image sampling seeds derive from `seed`."""
    rng = np.random.default_rng(seed)
    per_image = [0] * len(images)
    for i in range(count):
        per_image[i % len(images)] += 1
    pool = []
    for (name, img), n in zip(images, per_image):
        if n == 0:
            continue
        pool.extend(sample_patches(img, spec, n, seed=int(rng.integers(2 ** 31)),
                                   patch=patch, image_id=name))
    return pool


def params_from_arrays(arrays: dict) -> HanParams:
    return HanParams({name: Tensor(arr, requires_grad=True)
                      for name, arr in arrays.items()})


def train(cfg: RunConfig, log=print) -> TrainResult:
    cfg.validate()
    model_cfg = cfg.model_config()
    spec = degradation_spec(cfg)
    images = load_hr_images(cfg.dataset_dir)
    pool = build_patch_pool(images, spec, cfg.num_patches, cfg.patch_size, cfg.seed)

    params = init_params(model_cfg, cfg.seed)
    adam = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                     epsilon=cfg.epsilon)
    rng = np.random.default_rng(cfg.seed + 1)

    order: list[int] = []

    def next_batch_indices():
        nonlocal order
        picked = []
        while len(picked) < min(cfg.batch_size, len(pool)):
            if not order:
                order = list(rng.permutation(len(pool)))
            picked.append(order.pop())
        return picked

    ckpt_path = Path(cfg.checkpoint)
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(cfg.loss_log) if cfg.loss_log else Path(f"{cfg.checkpoint}.loss.csv")
    log_lines = ["step,loss"]

    def save(path):
        save_checkpoint(path, [(n, t.data) for n, t in params.named()],
                        config_text(cfg))

    loss_value = float("nan")
    started = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        batch = [pool[i] for i in next_batch_indices()]
        if cfg.augment:
            batch = [augment(p, seed=int(rng.integers(2 ** 31))) for p in batch]
        lr_batch = Tensor(np.stack([p.lr for p in batch]))
        hr_batch = Tensor(np.stack([p.hr for p in batch]))

        with Tape() as tape:
            out = han_forward(lr_batch, params, model_cfg)
            loss = ops.l1_loss(out, hr_batch)
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise NumericalError(
                f"non-finite loss {loss_value} at step {step}; aborting")
        tape.backward(loss)
        tensors = params.tensors()
        adam_step(tensors, [t.grad for t in tensors], adam)
        params.zero_grad()

        log_lines.append(f"{step},{loss_value:.8f}")
        log(f"step {step}/{cfg.steps}  loss {loss_value:.6f}  "
            f"time {time.perf_counter() - started:.2f}s")
        if cfg.checkpoint_every > 0 and step % cfg.checkpoint_every == 0:
            save(ckpt_path)

    save(ckpt_path)
    log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return TrainResult(steps=cfg.steps, final_loss=loss_value,
                       checkpoint_path=str(ckpt_path), log_path=str(log_path))
