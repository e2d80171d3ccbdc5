"""Central finite-difference checks for the autodiff core."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad, record_kinks


@dataclass
class GradCheckResult:
    rel_err: np.ndarray  # one entry per checked coordinate
    skipped: int = 0  # coordinates whose difference interval crossed a kink

    def frac_within(self, tol: float) -> float:
        return float(np.mean(self.rel_err <= tol)) if self.rel_err.size else 1.0

    @property
    def max_err(self) -> float:
        return float(self.rel_err.max()) if self.rel_err.size else 0.0

    def passes(self, tol: float, frac: float = 0.95, max_tol: float | None = None) -> bool:
        ok = self.frac_within(tol) >= frac
        if max_tol is not None:
            ok = ok and self.max_err <= max_tol
        return ok


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps near-zero gradients from dominating."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-3,
    floor: float = 1e-2,
    max_coords: int = 64,
    seed: int = 0,
    fd_dtype=np.float64,
    skip_kinks: bool = False,
) -> GradCheckResult:
    """Compare backward() against central differences for a tensor-valued ``fn``.

    The output is reduced with a fixed random projection ``sum(out * r)``; the
    finite-difference side evaluates ``fn`` on ``fd_dtype`` copies of the
    (perturbed) inputs, so float32 rounding in the forward pass does not swamp
    the difference quotient. Pass ``fd_dtype=None`` to difference in the
    inputs' own precision. At most ``max_coords`` randomly chosen coordinates
    per input are perturbed.

    With ``skip_kinks`` a coordinate is dropped (and counted in ``skipped``)
    when either perturbed evaluation takes a different branch of a leaky ReLU
    or abs than the unperturbed one, since the difference quotient is then
    not an estimate of the derivative.
    """
    rng = np.random.default_rng(seed)
    out = fn(*inputs)
    proj = rng.standard_normal(out.shape)
    r = Tensor(proj, dtype=out.dtype)

    for t in inputs:
        t.grad = None
    (out * r).sum().backward()

    def objective() -> tuple[float, np.ndarray]:
        saved = [t.data for t in inputs]
        try:
            if fd_dtype is not None:
                for t in inputs:
                    t.data = t.data.astype(fd_dtype)
            with no_grad(), record_kinks() as kinks:
                value = float(np.sum(fn(*inputs).data.astype(np.float64) * proj))
            branches = np.concatenate([k.ravel() for k in kinks]) if kinks else np.zeros(0, bool)
            return value, branches
        finally:
            for t, d in zip(inputs, saved):
                t.data = d

    base_branches = objective()[1] if skip_kinks else None
    skipped = 0

    errs = []
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        numeric = np.empty(idx.size)
        smooth = np.ones(idx.size, bool)
        for j, i in enumerate(idx):
            orig = flat[i].copy()
            flat[i] = orig + eps
            hi = float(flat[i])
            up, up_br = objective()
            flat[i] = orig - eps
            lo = float(flat[i])
            down, down_br = objective()
            flat[i] = orig
            numeric[j] = (up - down) / (hi - lo)
            if skip_kinks:
                smooth[j] = np.array_equal(up_br, base_branches) and np.array_equal(down_br, base_branches)
        skipped += int((~smooth).sum())
        errs.append(relative_error(analytic.reshape(-1)[idx[smooth]], numeric[smooth], floor))
    return GradCheckResult(np.concatenate(errs) if errs else np.zeros(0), skipped)
