"""Joint (c, mu) continuation toward target parameters.

The number of stages is the larger order of magnitude of 1/c and 1/mu
(at least the targets themselves); with two or more stages both
parameters start at 1e-1 and move log-linearly, each stage warm-started
with the previous stage's full primal-dual state.  Preconditioning is
worth its cost only once mu is small, so it is switched on at the stage
where mu crosses ``precond_enable_mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .smoothing import SmoothedObjective
from .solver import SolverConfig, SolverState, project_linf, solve_subproblem

__all__ = ["ContinuationSchedule", "make_schedule", "run_continuation", "StageError"]


class StageError(RuntimeError):
    """A subproblem aborted; carries the continuation stage index."""

    def __init__(self, stage: int, cause: Exception):
        super().__init__(f"continuation stage {stage} aborted: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class ContinuationSchedule:
    stages: Tuple[Tuple[float, float], ...]
    vartheta: int
    precond_enable_mu: float = 1.0e-4


def _order_of_magnitude(target: float) -> int:
    # ceil with a guard so exact powers of ten do not round up from
    # binary representation error (1/1e-1 = 10.000000000000002)
    return math.ceil(-math.log10(target) - 1e-9)


def make_schedule(
    c_target: float, mu_target: float, precond_enable_mu: float = 1.0e-4
) -> ContinuationSchedule:
    """Log-equispaced stages from (1e-1, 1e-1) down to the targets.

    The final pair is assigned exactly, never accumulated.  Fewer than
    two stages collapses to a single solve at the targets.
    """
    if c_target <= 0 or mu_target <= 0:
        raise ValueError("continuation targets must be positive")
    vartheta = max(_order_of_magnitude(c_target), _order_of_magnitude(mu_target))
    if vartheta < 2:
        return ContinuationSchedule(((c_target, mu_target),), vartheta, precond_enable_mu)
    lc = np.linspace(-1.0, math.log10(c_target), vartheta + 1)
    lm = np.linspace(-1.0, math.log10(mu_target), vartheta + 1)
    stages = [(10.0**a, 10.0**b) for a, b in zip(lc, lm)]
    stages[0] = (1.0e-1, 1.0e-1)
    stages[-1] = (c_target, mu_target)
    return ContinuationSchedule(tuple(stages), vartheta, precond_enable_mu)


def run_continuation(
    obj_targets: SmoothedObjective,
    config: SolverConfig,
    schedule: ContinuationSchedule,
    init: Optional[SolverState] = None,
) -> SolverState:
    """Solve every stage, warm-starting each from the previous solution.

    ``obj_targets`` carries the problem data; its (c, mu) are overridden
    stage by stage.  Early stages run with a 10x looser gradient
    tolerance since they only seed the next warm start.  The returned
    state holds the concatenated trace with a stage column.
    """
    state = init
    last = len(schedule.stages) - 1
    for j, (c_j, mu_j) in enumerate(schedule.stages):
        obj_j = replace(obj_targets, c=c_j, mu=mu_j)
        mode = config.precond_mode if mu_j <= schedule.precond_enable_mu else "none"
        tol = config.grad_tol if j == last else 10.0 * config.grad_tol
        config_j = replace(config, precond_mode=mode, grad_tol=tol)
        if state is not None:
            g = project_linf(state.g_re + 1j * state.g_im)
            state.g_re, state.g_im = np.real(g), np.imag(g)
            state.outer_iter = 0
        try:
            state = solve_subproblem(obj_j, config_j, init=state, stage=j)
        except Exception as exc:  # noqa: BLE001 - annotate and re-raise
            raise StageError(j, exc) from exc
    return state
