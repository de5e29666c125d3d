"""Central finite-difference verification of the backward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tape, Tensor


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    n_checked: int
    passed: bool
    worst_index: tuple[int, ...] = ()


@dataclass
class GradCheckReport:
    tol: float
    step: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def failures(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if not e.passed]

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "step": self.step,
            "passed": self.passed,
            "max_rel_err": self.max_rel_err,
            "entries": [
                {
                    "name": e.name,
                    "max_rel_err": e.max_rel_err,
                    "n_checked": e.n_checked,
                    "passed": e.passed,
                }
                for e in self.entries
            ],
        }


def _rel_err(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(
    f,
    inputs: dict[str, Tensor],
    step: float = 1e-4,
    tol: float = 1e-3,
    max_per_tensor: int | None = None,
    floor: float = 1e-3,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of scalar ``f()`` against central differences.

    ``f`` is a deterministic closure over ``inputs`` (stochastic regularizers
    must be disabled). Each named tensor is perturbed elementwise; with
    ``max_per_tensor`` set, a deterministic random subset of entries is
    checked instead of every one. Relative error uses a floor so near-zero
    gradients are compared absolutely at ``floor`` scale.
    """
    for t in inputs.values():
        t.requires_grad = True
        t.zero_grad()
    with Tape() as tape:
        loss = f()
    tape.backward(loss)

    picker = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol, step=step)
    for name, t in inputs.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        n = flat.size
        if max_per_tensor is not None and n > max_per_tensor:
            idx = np.sort(picker.choice(n, size=max_per_tensor, replace=False))
        else:
            idx = np.arange(n)
        worst = 0.0
        worst_index: tuple[int, ...] = ()
        ana_flat = analytic.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f().data)
            flat[i] = orig - step
            f_minus = float(f().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = _rel_err(float(ana_flat[i]), numeric, floor)
            if err > worst:
                worst = err
                worst_index = np.unravel_index(int(i), t.shape)
        report.entries.append(
            GradCheckEntry(
                name=name,
                max_rel_err=worst,
                n_checked=len(idx),
                passed=worst < tol,
                worst_index=worst_index,
            )
        )
    return report
