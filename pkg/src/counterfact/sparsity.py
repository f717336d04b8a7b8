"""Sparse counterfactual search over a dense descent solution.

For each weight ``lam`` on an increasing ladder the dense problem is solved
from scratch.  The coordinates of the dense perturbation are ranked by
their change relative to the original value, and nested candidates keeping
the top 1, 2, ..., k coordinates are checked against the classifier.  The
first rung that yields any qualifying candidate wins; among its qualifying
candidates a tie-break policy picks the final answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError
from .model import class_from_probs, forward_probs
from .solver import CfProblem, SolverConfig, objective, solve_gd_batch

DEFAULT_LADDER = (0.1, 5.0, 10.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 10000.0, 100000.0)
ZERO_HANDLING = ("ceiling_one", "ignore_zero")
TIE_BREAKS = ("fewest_nonzeros", "min_objective")

SOLVED = "solved"
NO_SOLUTION = "no_solution"


@dataclass(frozen=True)
class SparsityConfig:
    k: int = 10
    lambda_ladder: tuple = DEFAULT_LADDER
    zero_handling: str = "ceiling_one"
    tie_break: str = "fewest_nonzeros"
    nonzero_tol: float = 1e-8

    def __post_init__(self):
        ladder = tuple(float(v) for v in self.lambda_ladder)
        object.__setattr__(self, "lambda_ladder", ladder)
        if self.k < 1:
            raise ContractError("k must be >= 1")
        if not ladder or any(v <= 0 for v in ladder) or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ContractError("lambda_ladder must be a non-empty, strictly increasing list of positive values")
        if self.zero_handling not in ZERO_HANDLING:
            raise ContractError(f"zero_handling must be one of {ZERO_HANDLING}")
        if self.tie_break not in TIE_BREAKS:
            raise ContractError(f"tie_break must be one of {TIE_BREAKS}")
        if not self.nonzero_tol > 0:
            raise ContractError("nonzero_tol must be > 0")


@dataclass(frozen=True)
class CandidateSolution:
    delta: np.ndarray
    sparsity_level: int
    l0: int
    l1: float
    l2: float
    qualifies: bool
    predicted_ordinal: int
    output_probs: np.ndarray
    objective_value: float


@dataclass(frozen=True)
class RoundSummary:
    lam: float
    dense_delta: np.ndarray
    dense_l0: int
    n_distinct_supports: int
    repeated_support: bool
    n_qualifying: int
    iterations_used: int


@dataclass(frozen=True)
class SparsityResult:
    outcome: str
    lambda_used: float
    rounds_used: int
    chosen: Optional[CandidateSolution] = None
    all_qualifying: tuple = ()
    trace: tuple = field(default=(), repr=False)

    @property
    def solved(self) -> bool:
        return self.outcome == SOLVED


def relative_change(delta, x, zero_handling: str = "ceiling_one"):
    """``|delta / x|`` per coordinate.

    Where ``x`` is zero the ratio is 1 (``ceiling_one``) or 0
    (``ignore_zero``); unchanged coordinates always get 0.
    """
    delta = np.asarray(delta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if delta.shape != x.shape:
        raise ContractError(f"delta {delta.shape} and x {x.shape} differ in shape")
    if zero_handling not in ZERO_HANDLING:
        raise ContractError(f"zero_handling must be one of {ZERO_HANDLING}")
    zero = x == 0
    out = np.zeros_like(delta)
    np.divide(np.abs(delta), np.abs(x), out=out, where=~zero)
    if zero_handling == "ceiling_one":
        out[zero] = 1.0
    out[delta == 0] = 0.0
    return out


def _ranking(ratios):
    # stable sort on the negated ratio: larger first, lower index on ties
    order = np.argsort(-ratios, kind="stable")
    n_pos = int(np.count_nonzero(ratios > 0))
    return order, n_pos


def build_candidates(delta, ratios, k: int) -> list:
    """Nested candidates: candidate i keeps ``delta`` on the i top-ranked
    coordinates.  Once the positive ratios run out, the last distinct
    support repeats."""
    delta = np.asarray(delta, dtype=np.float64)
    ratios = np.asarray(ratios, dtype=np.float64)
    if delta.shape != ratios.shape:
        raise ContractError("delta and ratios differ in shape")
    if k < 1:
        raise ContractError("k must be >= 1")
    order, n_pos = _ranking(ratios)
    out = []
    for i in range(1, k + 1):
        keep = order[:min(i, n_pos)]
        cand = np.zeros_like(delta)
        cand[keep] = delta[keep]
        out.append(cand)
    return out


def select_final(qualifying: Sequence[CandidateSolution], policy: str = "fewest_nonzeros") -> CandidateSolution:
    if not qualifying:
        raise ContractError("select_final needs at least one qualifying candidate")
    if policy == "fewest_nonzeros":
        key = lambda c: (c.l0, c.objective_value, c.sparsity_level)  # noqa: E731
    elif policy == "min_objective":
        key = lambda c: (c.objective_value, c.l0, c.sparsity_level)  # noqa: E731
    else:
        raise ContractError(f"unknown tie-break policy {policy!r}")
    return min(qualifying, key=key)


def evaluate_candidate(problem: CfProblem, delta, level: int, lam: float, nonzero_tol: float) -> CandidateSolution:
    probs = forward_probs(problem.model, problem.counterfactual(delta))
    return _make_candidate(problem, delta, level, lam, nonzero_tol, probs)


def _make_candidate(problem, delta, level, lam, tol, probs):
    pred = int(class_from_probs(probs))
    orig = delta * problem.unit_scale
    delta = delta.copy()
    delta.setflags(write=False)
    return CandidateSolution(
        delta=delta,
        sparsity_level=level,
        l0=int(np.count_nonzero(np.abs(delta) > tol)),
        l1=float(np.sum(np.abs(orig))),
        l2=float(np.sqrt(np.sum(orig ** 2))),
        qualifies=pred <= problem.target_ordinal,
        predicted_ordinal=pred,
        output_probs=probs,
        objective_value=objective(problem, delta, lam),
    )


def _sparse_round(problem, dense, lam, sp_cfg):
    ratios = relative_change(dense * problem.unit_scale, problem.x_reference, sp_cfg.zero_handling)
    cands = build_candidates(dense, ratios, sp_cfg.k)
    probs = forward_probs(problem.model, problem.x + problem.w * np.stack(cands))
    evaluated = [_make_candidate(problem, c, i + 1, lam, sp_cfg.nonzero_tol, probs[i])
                 for i, c in enumerate(cands)]
    n_distinct = min(sp_cfg.k, int(np.count_nonzero(ratios > 0)))
    return evaluated, n_distinct


def _dense_round(problem, dense, lam, sp_cfg):
    level = int(problem.w.sum())
    return [evaluate_candidate(problem, dense, level, lam, sp_cfg.nonzero_tol)], 1


def _escalate(problems, solver_cfg, sp_cfg, round_fn) -> list:
    ladder = sp_cfg.lambda_ladder
    results = [None] * len(problems)
    traces = [[] for _ in problems]
    pending = []
    for i, p in enumerate(problems):
        if not np.any(p.w):
            # nothing may change: no rung can help
            dense = np.zeros_like(p.x)
            dense.setflags(write=False)
            traces[i].append(RoundSummary(ladder[0], dense, 0, 0, False, 0, 0))
            results[i] = SparsityResult(NO_SOLUTION, ladder[0], 1, trace=tuple(traces[i]))
        else:
            pending.append(i)

    for t, lam in enumerate(ladder, start=1):
        if not pending:
            break
        sols = solve_gd_batch([problems[i] for i in pending], solver_cfg, lams=np.full(len(pending), lam))
        still = []
        for i, sol in zip(pending, sols):
            p = problems[i]
            cands, n_distinct = round_fn(p, sol.delta, lam, sp_cfg)
            qualifying = tuple(c for c in cands if c.qualifies)
            traces[i].append(RoundSummary(
                lam=lam,
                dense_delta=sol.delta,
                dense_l0=int(np.count_nonzero(np.abs(sol.delta) > sp_cfg.nonzero_tol)),
                n_distinct_supports=n_distinct,
                repeated_support=n_distinct < len(cands),
                n_qualifying=len(qualifying),
                iterations_used=sol.iterations_used,
            ))
            if qualifying:
                chosen = select_final(qualifying, sp_cfg.tie_break)
                results[i] = SparsityResult(SOLVED, lam, t, chosen, qualifying, tuple(traces[i]))
            elif t == len(ladder):
                results[i] = SparsityResult(NO_SOLUTION, lam, t, trace=tuple(traces[i]))
            else:
                still.append(i)
        pending = still
    return results


def run_sparsity(problem: CfProblem, solver_cfg: SolverConfig, sp_cfg: SparsityConfig) -> SparsityResult:
    """Sparse counterfactual for one problem.  ``solver_cfg.lam`` is ignored;
    the ladder in ``sp_cfg`` supplies every weight."""
    return run_sparsity_batch([problem], solver_cfg, sp_cfg)[0]


def run_sparsity_batch(problems: Sequence[CfProblem], solver_cfg: SolverConfig, sp_cfg: SparsityConfig) -> list:
    """Vectorized :func:`run_sparsity` over problems sharing one model.

    Each rung solves all still-open problems together; results come back in
    input order.
    """
    return _escalate(list(problems), solver_cfg, sp_cfg, _sparse_round)


def run_gradient_descent(problem: CfProblem, solver_cfg: SolverConfig, sp_cfg: SparsityConfig) -> SparsityResult:
    """Baseline: escalate the same ladder but return the dense solution itself."""
    return run_gradient_descent_batch([problem], solver_cfg, sp_cfg)[0]


def run_gradient_descent_batch(problems: Sequence[CfProblem], solver_cfg: SolverConfig,
                               sp_cfg: SparsityConfig) -> list:
    return _escalate(list(problems), solver_cfg, sp_cfg, _dense_round)
