"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Module
from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)

    def passes(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(module: Module, loss_fn, step: float = 1e-5,
               max_entries_per_param: int = 40,
               rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic parameter gradients of loss_fn(module) to central differences.

    loss_fn takes the module and returns a scalar Tensor; it must be
    deterministic (run modules in eval mode or with dropout 0).
    """
    rng = rng or np.random.default_rng(0)
    module.zero_grad()
    loss = loss_fn(module)
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in module.named_parameters()}

    report = GradCheckReport(max_rel_error=0.0)
    for name, p in module.named_parameters():
        flat = p.data.ravel()
        n = flat.size
        idxs = (np.arange(n) if n <= max_entries_per_param
                else rng.choice(n, size=max_entries_per_param, replace=False))
        worst = 0.0
        for k in idxs:
            orig = flat[k]
            flat[k] = orig + step
            lo_plus = float(loss_fn(module).data)
            flat[k] = orig - step
            lo_minus = float(loss_fn(module).data)
            flat[k] = orig
            numeric = (lo_plus - lo_minus) / (2 * step)
            a = analytic[name].ravel()[k]
            # the floor makes the comparison an absolute one for near-zero
            # gradients, where central differences are roundoff-dominated
            denom = max(abs(a), abs(numeric), 1e-4)
            worst = max(worst, abs(a - numeric) / denom)
        report.per_param[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
