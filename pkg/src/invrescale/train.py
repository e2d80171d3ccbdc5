"""Seeded end-to-end training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TextIO

import numpy as np

from .backbone import DivergenceError
from .config import TrainConfig
from .losses import LossReport, combine, loss_d, loss_g, loss_i, loss_r
from .pipeline import RescalingModel
from .resample import ResampleMethod, ScalePair, output_size, resize
from .tensor import Tensor

logger = logging.getLogger(__name__)

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    return cfg.base_lr * 0.5 ** (iteration // cfg.lr_halving_period)


def sample_scale(rng: np.random.Generator, cfg: TrainConfig) -> ScalePair:
    if cfg.asymmetric:
        s_h, s_v = rng.uniform(cfg.scale_min, cfg.scale_max, size=2)
        return ScalePair(float(s_h), float(s_v))
    return ScalePair.symmetric(float(rng.uniform(cfg.scale_min, cfg.scale_max)))


@dataclass
class OptimizerState:
    """Adam moment buffers, one pair per parameter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def update(self, params: dict[str, Tensor], lr: float, clip: Optional[float]) -> float:
        """Apply one Adam step in place; returns the pre-clipping gradient norm."""
        grads = {k: p.grad for k, p in params.items() if p.grad is not None}
        norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
        factor = 1.0
        if clip is not None and clip > 0 and norm > clip:
            factor = clip / (norm + 1e-12)
        self.step += 1
        bc1 = 1.0 - BETA1**self.step
        bc2 = 1.0 - BETA2**self.step
        for k, g in grads.items():
            p = params[k]
            if factor != 1.0:
                g = g * p.dtype.type(factor)
            if k not in self.m:
                self.m[k] = np.zeros_like(p.data)
                self.v[k] = np.zeros_like(p.data)
            m, v = self.m[k], self.v[k]
            m *= BETA1
            m += (1 - BETA1) * g
            v *= BETA2
            v += (1 - BETA2) * g * g
            step = (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
            p.data -= (lr * step).astype(p.dtype)
        return norm


class PatchSampler:
    """Seeded random crops (with optional horizontal flips) from a list of images."""

    def __init__(self, images: Sequence[np.ndarray], cfg: TrainConfig, rng: np.random.Generator):
        if not images:
            raise ValueError("no training images")
        self.images = [np.asarray(im, dtype=np.float32) for im in images]
        for im in self.images:
            if im.ndim != 3 or im.shape[0] != 3:
                raise ValueError(f"training images must be [3, H, W], got {im.shape}")
            if min(im.shape[1:]) < cfg.patch_size:
                raise ValueError(f"image {im.shape[1:]} smaller than patch size {cfg.patch_size}")
        self.cfg = cfg
        self.rng = rng

    def batch(self) -> np.ndarray:
        cfg, rng, p = self.cfg, self.rng, self.cfg.patch_size
        out = np.empty((cfg.batch_size, 3, p, p), dtype=np.float32)
        for i in range(cfg.batch_size):
            im = self.images[int(rng.integers(len(self.images)))]
            top = int(rng.integers(im.shape[1] - p + 1))
            left = int(rng.integers(im.shape[2] - p + 1))
            patch = im[:, top : top + p, left : left + p]
            if cfg.hflip and rng.random() < 0.5:
                patch = patch[:, :, ::-1]
            out[i] = patch
        return out


def train_step(
    model: RescalingModel,
    batch: np.ndarray,
    scale: ScalePair,
    cfg: TrainConfig,
    opt: OptimizerState,
    lr: float,
    zhat: Optional[np.ndarray] = None,
) -> LossReport:
    """One optimisation step over ``batch`` at ``scale``; returns the loss terms."""
    cyc = model.cycle(batch, scale, zhat=zhat)
    y_ref = resize(cyc.x, cyc.lr_size, ResampleMethod.BICUBIC)
    total, report = combine(
        cfg.weights,
        loss_r(cyc.x_hat, cyc.x),
        loss_g(cyc.y_lr, y_ref),
        loss_d(cyc.z_hr),
        loss_i(cyc.y_hat_hr, cyc.y_hr),
    )
    if not all(math.isfinite(v) for v in report.as_tuple()):
        raise DivergenceError(f"non-finite loss {report} at scale {scale}")
    model.backbone.zero_grad()
    total.backward()
    opt.update(model.backbone.params, lr, cfg.grad_clip)
    return report


class Trainer:
    """Owns the model, optimizer and random streams for one training run.

    The seed is split into independent streams for parameter init, scale
    draws, patch crops and latent noise, so changing e.g. the batch size
    does not perturb the initial weights.
    """

    def __init__(self, cfg: TrainConfig, images: Sequence[np.ndarray], model: Optional[RescalingModel] = None):
        self.cfg = cfg
        init_ss, scale_ss, patch_ss, noise_ss = np.random.SeedSequence(cfg.seed).spawn(4)
        self.model = model or RescalingModel(cfg, rng=np.random.default_rng(init_ss))
        self.scale_rng = np.random.default_rng(scale_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.sampler = PatchSampler(images, cfg, np.random.default_rng(patch_ss))
        self.opt = OptimizerState()
        self.iteration = 0
        self.history: list[LossReport] = []

    def next_scale(self) -> ScalePair:
        p = self.cfg.patch_size
        while True:
            scale = sample_scale(self.scale_rng, self.cfg)
            if min(output_size(p, p, scale, "down")) >= self.cfg.min_lr_side:
                return scale

    def step(self) -> LossReport:
        scale = self.next_scale()
        batch = self.sampler.batch()
        lr = lr_at(self.iteration, self.cfg)
        zhat = None
        if self.cfg.zhat == "gaussian":
            zhat = self.noise_rng.standard_normal(batch.shape).astype(np.float32)
        try:
            report = train_step(self.model, batch, scale, self.cfg, self.opt, lr, zhat=zhat)
        except DivergenceError as exc:
            raise DivergenceError(f"iteration {self.iteration}, scale {scale}: {exc}") from exc
        self.history.append(report)
        self.iteration += 1
        return report

    def fit(
        self,
        iterations: Optional[int] = None,
        log: Optional[TextIO] = None,
        callback: Optional[Callable[[int, LossReport], None]] = None,
    ) -> list[LossReport]:
        n = self.cfg.iterations if iterations is None else iterations
        for _ in range(n):
            it = self.iteration
            lr = lr_at(it, self.cfg)
            r = self.step()
            if log is not None:
                log.write(f"{it} {lr:.6g} {r.total:.8g} {r.l_r:.8g} {r.l_g:.8g} {r.l_d:.8g} {r.l_i:.8g}\n")
            if callback is not None:
                callback(it, r)
            if it % 100 == 0:
                logger.info("iter %d lr %.3g total %.5f l_r %.5f", it, lr, r.total, r.l_r)
        return self.history
