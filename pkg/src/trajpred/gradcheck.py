"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, backward, zero_grad


@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    max_rel_error: float
    worst_param: str | None
    per_param: dict[str, float]

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"gradcheck {status}: max rel error {self.max_rel_error:.3e} "
                f"(tol {self.tol:.1e}, worst: {self.worst_param})")


def finite_diff_check(f: Callable[[], Tensor], params: dict[str, Tensor],
                      h: float = 1e-5, tol: float = 1e-4,
                      atol: float = 1e-8) -> GradCheckReport:
    """Compare backward() gradients of ``f`` against central differences.

    ``f`` must be deterministic and rebuild its graph from the current
    parameter values on every call. The per-parameter relative error is the
    max absolute deviation normalized by the larger gradient magnitude of
    that parameter. Deviations below ``atol`` count as zero: parameters with
    structurally zero gradient (e.g. a bias that cancels inside a softmax)
    otherwise divide finite-difference noise by a near-zero scale.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step size h={h} outside [1e-7, 1e-3]")

    zero_grad(params.values())
    loss = f()
    backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items() if p.requires_grad}

    per_param: dict[str, float] = {}
    for name, p in params.items():
        if not p.requires_grad:
            continue
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f().item()
            flat[i] = orig - h
            lo = f().item()
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2.0 * h)
        a = analytic[name]
        abs_err = float(np.abs(a - numeric).max(initial=0.0))
        if abs_err < atol:
            per_param[name] = 0.0
            continue
        scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), atol)
        per_param[name] = abs_err / scale

    worst = max(per_param, key=per_param.get) if per_param else None
    worst_err = per_param[worst] if worst is not None else 0.0
    return GradCheckReport(passed=worst_err < tol, tol=tol, max_rel_error=worst_err,
                           worst_param=worst, per_param=per_param)
