"""Dense counterfactual perturbation by first-order descent.

Minimizes, over the perturbation ``delta``::

    lam * CE(F(x + w * delta), target_dist) + ||delta||_1

where ``F`` is the model's class distribution and ``w`` the 0/1 mask of
modifiable features.  Masked coordinates are pinned at exactly zero.

Two treatments of the L1 term are available:

``subgradient`` (default)
    plain gradient descent with ``sign(delta)`` as the L1 derivative.
    Coordinates with weak influence hover around zero at the scale of the
    step size instead of vanishing, so the returned solution is dense.
    This is the behaviour the sparsity algorithm is designed to clean up.
``prox``
    proximal gradient (ISTA): a soft-threshold step after each smooth
    step.  Produces exact zeros and a monotone objective for small steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DivergenceError
from .model import (
    MlpModel, cross_entropy, forward_probs, loss_and_input_gradient, one_hot, predict_class,
)

L1_MODES = ("subgradient", "prox")
TARGET_MODES = ("one_hot", "at_or_better")


def target_distribution(target_ordinal: int, n_classes: int, mode: str = "one_hot"):
    """Ideal output distribution for target ``y'``.

    ``one_hot`` puts all mass on ``y'``; ``at_or_better`` spreads it evenly
    over classes ``1..y'``.
    """
    if mode == "one_hot":
        return one_hot(target_ordinal, n_classes)
    if mode == "at_or_better":
        t = np.zeros(n_classes)
        t[:target_ordinal] = 1.0 / target_ordinal
        return t
    raise ContractError(f"unknown target mode {mode!r}")


@dataclass(frozen=True)
class CfProblem:
    """One counterfactual query.

    ``x`` is in model units.  ``x_reference`` and ``unit_scale`` describe the
    same row in original units (``delta_original = delta * unit_scale``);
    they default to ``x`` and ones, i.e. data that was never rescaled.
    """

    x: np.ndarray
    w: np.ndarray
    target_ordinal: int
    model: MlpModel
    target_dist: Optional[np.ndarray] = None
    x_reference: Optional[np.ndarray] = None
    unit_scale: Optional[np.ndarray] = None
    original_ordinal: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        n = self.model.n_features
        x = np.array(self.x, dtype=np.float64)
        w = np.array(self.w, dtype=np.float64)
        if x.shape != (n,) or w.shape != (n,):
            raise ContractError(f"x and w must both have length {n}")
        if not np.all((w == 0) | (w == 1)):
            raise ContractError("mask entries must be 0 or 1")
        if not np.all(np.isfinite(x)):
            raise ContractError("x must be finite")
        current = predict_class(self.model, x)
        if not 1 <= self.target_ordinal < current:
            raise ContractError(f"target {self.target_ordinal} is not a strict improvement on predicted class {current}")
        dist = self.target_dist
        if dist is None:
            dist = one_hot(self.target_ordinal, self.model.n_classes)
        dist = np.array(dist, dtype=np.float64)
        if dist.shape != (self.model.n_classes,) or np.any(dist < 0) or abs(dist.sum() - 1) > 1e-9:
            raise ContractError("target_dist must be a probability vector over the model's classes")
        ref = x if self.x_reference is None else np.array(self.x_reference, dtype=np.float64)
        scale = np.ones(n) if self.unit_scale is None else np.array(self.unit_scale, dtype=np.float64)
        if ref.shape != (n,) or scale.shape != (n,) or not np.all(scale > 0):
            raise ContractError("x_reference / unit_scale must have length n_features; scale > 0")
        for a in (x, w, dist, ref, scale):
            a.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "target_dist", dist)
        object.__setattr__(self, "x_reference", ref)
        object.__setattr__(self, "unit_scale", scale)
        object.__setattr__(self, "original_ordinal", current)

    def counterfactual(self, delta):
        return self.x + self.w * delta


def make_problem(model: MlpModel, x, w=None, target: Optional[int] = None, *,
                 target_mode: str = "one_hot", x_reference=None, unit_scale=None) -> CfProblem:
    """Build a problem; the target defaults to one notch better than the
    current prediction and the mask to all-modifiable."""
    x = np.asarray(x, dtype=np.float64)
    if w is None:
        w = np.ones(model.n_features)
    if target is None:
        target = predict_class(model, x) - 1
    dist = target_distribution(target, model.n_classes, target_mode) if target >= 1 else None
    return CfProblem(x, w, target, model, dist, x_reference, unit_scale)


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1.0
    step_size: float = 0.01
    max_iters: int = 2000
    grad_tol: float = 1e-6
    # δ starts at zero, so the solver is deterministic; kept for config symmetry
    seed: int = 0
    l1_mode: str = "subgradient"
    record_trace: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ContractError("lam must be >= 0")
        if not self.step_size > 0:
            raise ContractError("step_size must be > 0")
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ContractError("grad_tol must be > 0")
        if self.l1_mode not in L1_MODES:
            raise ContractError(f"l1_mode must be one of {L1_MODES}")


@dataclass(frozen=True)
class DenseSolution:
    delta: np.ndarray
    iterations_used: int
    final_objective: float
    objective_trace: tuple = ()


def soft_threshold(v, tau):
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def objective(problem: CfProblem, delta, lam: float) -> float:
    """``lam * CE(F(x + w*delta), Y') + ||delta||_1`` for a single instance."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != problem.x.shape:
        raise ContractError(f"delta has shape {delta.shape}, expected {problem.x.shape}")
    if not np.all(np.isfinite(delta)):
        raise ContractError("delta must be finite")
    p = forward_probs(problem.model, problem.counterfactual(delta))
    return lam * cross_entropy(p, problem.target_dist) + float(np.sum(np.abs(delta)))


def solve_gd(problem: CfProblem, config: SolverConfig) -> DenseSolution:
    return solve_gd_batch([problem], config)[0]


def solve_gd_batch(problems: Sequence[CfProblem], config: SolverConfig, lams=None) -> list:
    """Solve several problems sharing one model in a single vectorized loop.

    Rows are independent: each stops on its own convergence test.  ``lams``
    optionally overrides ``config.lam`` per problem.
    """
    if not problems:
        return []
    model = problems[0].model
    if any(p.model is not model for p in problems):
        raise ContractError("batched problems must share one model")
    X = np.stack([p.x for p in problems])
    W = np.stack([p.w for p in problems])
    T = np.stack([p.target_dist for p in problems])
    lam = np.full(len(problems), float(config.lam)) if lams is None else np.asarray(lams, dtype=np.float64)
    if lam.shape != (len(problems),) or np.any(lam < 0):
        raise ContractError("lams must give one nonnegative value per problem")

    delta, iters, final_obj, traces = _descend(model, X, W, T, lam, config)
    out = []
    for i in range(len(problems)):
        d = delta[i].copy()
        d.setflags(write=False)
        out.append(DenseSolution(d, int(iters[i]), float(final_obj[i]),
                                 tuple(traces[i]) if traces is not None else ()))
    return out


def _descend(model, X, W, T, lam, cfg: SolverConfig):
    B, n = X.shape
    eta = cfg.step_size
    modifiable = W > 0
    delta = np.zeros((B, n))
    iters = np.zeros(B, dtype=int)
    # rows with nothing to move are done before the first step
    running = modifiable.any(axis=1)
    traces = [[] for _ in range(B)] if cfg.record_trace else None
    lam_col = lam[:, None]

    for it in range(cfg.max_iters):
        idx = np.flatnonzero(running)
        if idx.size == 0:
            break
        d = delta[idx]
        ce, g = loss_and_input_gradient(model, X[idx] + W[idx] * d, T[idx])
        obj = lam[idx] * ce + np.abs(d).sum(axis=1)
        if not np.all(np.isfinite(obj)) or not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite objective during descent; reduce step_size")
        if traces is not None:
            for j, v in zip(idx, obj):
                traces[j].append(float(v))
        # chain rule through x + w*delta, then pin masked coordinates
        smooth = lam_col[idx] * g * W[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            if cfg.l1_mode == "prox":
                new = soft_threshold(d - eta * smooth, eta)
            else:
                new = d - eta * (smooth + np.sign(d))
        new = np.where(modifiable[idx], new, 0.0)
        if not np.all(np.isfinite(new)):
            raise DivergenceError("perturbation overflowed during descent; reduce step_size")
        move = np.sqrt(np.sum((new - d) ** 2, axis=1)) / eta
        delta[idx] = new
        iters[idx] = it + 1
        running[idx[move < cfg.grad_tol]] = False

    ce, _ = loss_and_input_gradient(model, X + W * delta, T)
    final = lam * ce + np.abs(delta).sum(axis=1)
    if not np.all(np.isfinite(final)):
        raise DivergenceError("non-finite final objective; reduce step_size")
    if traces is not None:
        for j in range(B):
            traces[j].append(float(final[j]))
    return delta, iters, final, traces
