"""Fixed-seed invariant checks bundled for the ``selfcheck`` command."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import checkpoint
from .backbone import Backbone, BackboneConfig, EncodingMode
from .config import TrainConfig
from .encoding import axis_distances, crop_consistency_check, encode
from .gradcheck import check_gradients
from .resample import ResampleMethod, ScalePair, output_size, resize
from .splitting import merge, split
from .tensor import Tensor, concat, conv2d, elementwise, resample_axis
from .resample import axis_taps


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def _brute_distances(n: int, s: float) -> np.ndarray:
    ks = np.arange(int(np.ceil(n / s)) + 2)[None, :]
    d = ks * s - np.arange(n)[:, None]
    return np.where(d >= 0, d, np.inf).min(axis=1)


def check_invertibility(wide: bool) -> tuple[bool, str]:
    dtype = np.float64 if wide else np.float32
    tol = 1e-10 if wide else 1e-4
    rng = np.random.default_rng(0)
    worst = 0.0
    for mode in EncodingMode:
        net = Backbone(BackboneConfig(num_blocks=4, feature_width=16, encoding_mode=mode), dtype=dtype)
        net.randomize_(rng, 0.05)
        lf = rng.random((1, 3, 16, 16)).astype(dtype)
        hf = (rng.random((1, 3, 16, 16)) - 0.5).astype(dtype)
        p = encode(16, 16, ScalePair(2.5, 1.5), dtype=dtype)
        y, z = net.forward(lf, hf, p)
        a, b = net.inverse(y, z, p)
        worst = max(worst, float(np.abs(a.data - lf).max()), float(np.abs(b.data - hf).max()))
    return worst <= tol, f"max error {worst:.3g} (tol {tol:g})"


def check_identity_at_zero(wide: bool) -> tuple[bool, str]:
    dtype = np.float64 if wide else np.float32
    net = Backbone(BackboneConfig(num_blocks=2, feature_width=8), dtype=dtype).fill_(0.0)
    rng = np.random.default_rng(1)
    lf, hf = rng.random((2, 1, 3, 12, 12)).astype(dtype)
    y, z = net.forward(lf, hf, encode(12, 12, ScalePair.symmetric(2.0), dtype=dtype))
    ok = np.array_equal(y.data, lf) and np.array_equal(z.data, hf)
    return ok, "bitwise identity" if ok else "zero network changed its input"


def check_splitting(wide: bool) -> tuple[bool, str]:
    dtype = np.float64 if wide else np.float32
    rng = np.random.default_rng(2)
    scales = [ScalePair.symmetric(s) for s in (1.3, 1.5, 2.0, 2.5, 3.3, 4.0)]
    scales += [ScalePair(float(a), float(b)) for a, b in rng.uniform(1.0, 4.0, (10, 2))]
    worst, idem = 0.0, True
    for i in range(100):
        size = int(rng.integers(8, 65))
        x = rng.random((3, size, size)).astype(dtype)
        s = scales[i % len(scales)]
        pair = split(x, s)
        worst = max(worst, float(np.abs(merge(pair) - x).max()))
        idem &= not split(pair.lf, s).hf.any()
    ok = worst <= 2.0**-20 and idem
    return ok, f"merge error {worst:.3g}, idempotent={idem}"


def check_encoding(wide: bool) -> tuple[bool, str]:
    ok = True
    for s in (1.0, 1.1, 1.5, 2.0, 2.5, 3.3, 4.0):
        for n in (1, 17, 64):
            ok &= np.array_equal(axis_distances(n, s), _brute_distances(n, s))
        big, small = encode(64, 48, ScalePair.symmetric(s)), encode(23, 31, ScalePair.symmetric(s))
        ok &= crop_consistency_check(big, small)
    ok &= np.array_equal(encode(2, 4, ScalePair.symmetric(2.0))[2, 0], [0, 0.5, 0, 0.5])
    return bool(ok), "brute-force and crop-consistency agree" if ok else "encoding mismatch"


def check_resampling(wide: bool) -> tuple[bool, str]:
    rng = np.random.default_rng(3)
    ok = True
    for method in ResampleMethod:
        x = np.full((3, 19, 13), 0.3)
        ok &= np.allclose(resize(x, (7, 29), method), 0.3, atol=1e-6)
    for _ in range(20):
        x = rng.random((3, 37, 41))
        s = ScalePair(float(rng.uniform(1, 4)), float(rng.uniform(1, 4)))
        lr = output_size(37, 41, s, "down")
        once = resize(resize(x, lr, "nearest"), (37, 41), "nearest")
        ok &= np.array_equal(resize(resize(once, lr, "nearest"), (37, 41), "nearest"), once)
    return bool(ok), "fixed points and NN idempotence hold" if ok else "resampling property violated"


def check_gradients_suite(wide: bool) -> tuple[bool, str]:
    dtype = np.float64 if wide else np.float32
    eps = 1e-6 if wide else 1e-3
    rng = np.random.default_rng(4)

    def t(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=dtype)

    taps = axis_taps(5, 8, ResampleMethod.BICUBIC)
    cases = {
        "mul": (lambda a, b: elementwise("mul", a, b), [t(3, 4), t(3, 4)]),
        "sigmoid": (lambda a: a.sigmoid(), [t(3, 4)]),
        "exp": (lambda a: a.exp(), [t(3, 4)]),
        "leaky_relu": (lambda a: a.leaky_relu(), [t(3, 4)]),
        "concat": (lambda a, b: concat([a, b], axis=1), [t(1, 2, 3), t(1, 1, 3)]),
        "resample": (lambda a: resample_axis(a, taps.index, taps.weight, axis=-1), [t(2, 5)]),
        "conv2d": (lambda x, w, b: conv2d(x, w, b, dilation=2), [t(1, 2, 5, 5), t(3, 2, 3, 3), t(3)]),
    }
    net = Backbone(BackboneConfig(num_blocks=1, feature_width=4), dtype=dtype).randomize_(rng, 0.05)
    p = encode(6, 6, ScalePair.symmetric(2.0), dtype=dtype)

    def pipeline(lf, hf, w):
        y, z = net.forward(lf, hf, p)
        return y * z + y

    cases["backbone"] = (pipeline, [t(1, 3, 6, 6), t(1, 3, 6, 6), net.params["blocks.0.eta.conv0.weight"]])
    failed = []
    for name, (fn, inputs) in cases.items():
        res = check_gradients(fn, inputs, eps=eps, max_coords=32)
        good = res.max_err <= 1e-5 if wide else res.passes(1e-3, 0.95)
        if not good:
            failed.append(f"{name} ({res.max_err:.2g})")
    return not failed, "all ops agree" if not failed else "failed: " + ", ".join(failed)


def check_checkpoint(wide: bool) -> tuple[bool, str]:
    cfg = TrainConfig(backbone=BackboneConfig(num_blocks=1, feature_width=4))
    net = Backbone(cfg.backbone).randomize_(np.random.default_rng(5))
    blob = checkpoint.dumps(cfg, net.state_dict())
    cfg2, params = checkpoint.loads(blob)
    same = cfg2 == cfg and all(np.array_equal(params[k], v) for k, v in net.state_dict().items())
    same &= checkpoint.dumps(cfg2, params) == blob
    bad = bytearray(blob)
    bad[len(bad) // 2] ^= 0xFF
    try:
        checkpoint.loads(bytes(bad))
        detected = False
    except checkpoint.CheckpointError:
        detected = True
    return same and detected, f"round trip exact={same}, corruption detected={detected}"


CHECKS: dict[str, Callable[[bool], tuple[bool, str]]] = {
    "invertibility": check_invertibility,
    "identity_at_zero": check_identity_at_zero,
    "splitting": check_splitting,
    "encoding": check_encoding,
    "resampling": check_resampling,
    "gradients": check_gradients_suite,
    "checkpoint": check_checkpoint,
}


def run_all(wide: bool = False) -> Iterator[CheckResult]:
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn(wide)
        except Exception as exc:  # a crash is a failed check, not a crashed report
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield CheckResult(name, bool(ok), detail, time.perf_counter() - t0)
