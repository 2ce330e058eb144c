"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .autodiff import Tape, Tensor
from .errors import NumericError


@dataclass
class GradReport:
    """Per-parameter-group maximum relative error of analytic vs numeric grads."""

    per_param: dict[str, float]

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    def worst(self) -> tuple[str, float]:
        name = max(self.per_param, key=self.per_param.get)
        return name, self.per_param[name]

    def format(self) -> str:
        lines = [f"  {name:<40s} {err:.3e}" for name, err in self.per_param.items()]
        lines.append(f"  {'max':<40s} {self.max_rel_error:.3e}")
        return "\n".join(lines)


def grad_check(
    loss_builder: Callable[[], Tensor],
    params: Iterable[tuple[str, Tensor]],
    epsilon: float = 1e-5,
) -> GradReport:
    """Compare tape gradients of a deterministic scalar loss against central
    differences (f(θ+ε) − f(θ−ε)) / 2ε, elementwise, for every parameter.

    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator. The
    numeric probes rerun `loss_builder` with no tape active, so they see the
    plain forward path.
    """
    params = list(params)

    with Tape() as tape:
        loss = loss_builder()
        if not np.isfinite(loss.data).all():
            raise NumericError("loss is not finite at the evaluation point")
        tape.backward(loss)

    analytic = {
        name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
        for name, p in params
    }
    for _, p in params:
        p.grad = None

    report: dict[str, float] = {}
    for name, p in params:
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(loss_builder().data)
            flat[i] = orig - epsilon
            lo = float(loss_builder().data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError(f"non-finite loss while probing {name}[{i}]")
            numeric = (hi - lo) / (2.0 * epsilon)
            a = analytic[name].reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        report[name] = worst
    return GradReport(per_param=report)
