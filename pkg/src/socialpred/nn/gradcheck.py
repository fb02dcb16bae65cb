from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} max_rel_err={self.max_rel_error:.3e} over {self.n_checked} coords (worst {self.worst})"


def rel_error(a, n) -> np.ndarray:
    a, n = np.asarray(a), np.asarray(n)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)


def grad_check(
    model,
    x: np.ndarray,
    tolerance: float = 1e-4,
    loss_fn=None,
    n_coords: int = 200,
    step: float = 1e-5,
    seed: int = 0,
    train: bool = False,
    check_input: bool = False,
) -> GradCheckReport:
    """Compare backprop against central differences on a random coordinate subset.

    ``loss_fn(out) -> (loss, dout)`` defaults to a fixed random projection of
    the output. In train mode, dropout masks are frozen by re-seeding the
    generator on every evaluation. Relative errors use ``max(|a|, |n|, 1e-6)``
    as denominator.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    probe = model.forward(x, train=train, rng=np.random.default_rng(seed + 1))
    if loss_fn is None:
        R = rng.standard_normal(probe.shape) / np.sqrt(probe.size)

        def loss_fn(out):
            return float(np.sum(out * R)), R

    def evaluate():
        out = model.forward(x, train=train, rng=np.random.default_rng(seed + 1))
        return loss_fn(out)

    _, dout = evaluate()
    model.zero_grad()
    dx = model.backward(dout)
    params = model.named_params()
    analytic = {k: g.copy() for k, g in model.named_grads().items()}

    targets = [(name, params[name], analytic[name]) for name in sorted(params)]
    if check_input:
        targets.append(("input", x, dx))
    sizes = np.array([t[1].size for t in targets])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    offsets = np.cumsum(sizes) - sizes

    worst, worst_name = 0.0, ""
    for flat in np.sort(picks):
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, arr, grad = targets[i]
        j = np.unravel_index(flat - offsets[i], arr.shape)
        orig = arr[j]
        arr[j] = orig + step
        lp, _ = evaluate()
        arr[j] = orig - step
        lm, _ = evaluate()
        arr[j] = orig
        numeric = (lp - lm) / (2 * step)
        err = float(rel_error(grad[j], numeric))
        if err > worst or not worst_name:
            worst, worst_name = err, f"{name}{[int(v) for v in j]}"
    return GradCheckReport(worst, len(picks), worst_name, tolerance)
