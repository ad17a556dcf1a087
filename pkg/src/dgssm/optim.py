"""AdamW with decoupled weight decay, and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import ParameterSet, Tensor


class AdamW:
    """Adam with bias correction and weight decay applied outside the
    adaptive step: p <- p - lr*wd*p, then p <- p - lr * m_hat / (sqrt(v_hat)+eps).
    """

    def __init__(
        self,
        params: ParameterSet,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for name, t in self.params.items():
            if t.grad is None:
                raise ValueError(f"adamw: parameter {name!r} has no gradient")
            g = t.grad
            if self.weight_decay:
                t.data -= self.lr * self.weight_decay * t.data
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            t.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Optimizer state as named arrays (for checkpointing)."""
        out: dict[str, np.ndarray] = {"step": np.array([self.step_count], dtype=np.float64)}
        for name in self.params.names():
            out[f"m.{name}"] = self._m[name]
            out[f"v.{name}"] = self._v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["step"][0])
        for name in self.params.names():
            self._m[name] = np.array(arrays[f"m.{name}"])
            self._v[name] = np.array(arrays[f"v.{name}"])


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_name: str
    worst_index: tuple
    passed: bool

    def __str__(self):
        return (
            f"grad check: max rel err {self.max_rel_err:.3e} at "
            f"{self.worst_name}{list(self.worst_index)} -> "
            f"{'PASS' if self.passed else 'FAIL'}"
        )


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    # Unit floor: behaves like absolute error below magnitude 1, relative above.
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return np.abs(analytic - numeric) / denom


def _central_diff(f: Callable[[], Tensor], arr: np.ndarray, eps: float) -> np.ndarray:
    num = np.zeros_like(arr)
    flat = arr.ravel()
    out = num.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f().data)
        flat[i] = orig - eps
        fm = float(f().data)
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * eps)
    return num


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-4,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f(x)`` with central differences."""
    x.requires_grad = True
    x.zero_grad()
    loss = f(x)
    loss.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    numeric = _central_diff(lambda: f(x), x.data, eps)
    errs = _relative_error(analytic, numeric)
    idx = np.unravel_index(np.argmax(errs), errs.shape) if errs.size else ()
    worst = float(errs[idx]) if errs.size else 0.0
    return GradCheckReport(worst, "x", idx, worst <= tol)


def grad_check_params(
    f: Callable[[], Tensor],
    params: ParameterSet,
    eps: float = 1e-4,
    tol: float = 1e-3,
) -> GradCheckReport:
    """Gradient check of scalar ``f()`` against every tensor in ``params``."""
    params.zero_grad()
    f().backward()
    worst, worst_name, worst_idx = 0.0, "", ()
    for name, t in params.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = _central_diff(f, t.data, eps)
        errs = _relative_error(analytic, numeric)
        if errs.size == 0:
            continue
        idx = np.unravel_index(np.argmax(errs), errs.shape)
        if errs[idx] >= worst:
            worst, worst_name, worst_idx = float(errs[idx]), name, idx
    return GradCheckReport(worst, worst_name, worst_idx, worst <= tol)
