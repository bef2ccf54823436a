"""Surrogate search stage: Gaussian candidate cloud scored by a lower confidence bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted
from .mesh import DUPLICATE_TOL, MeshState, remove_duplicates, snap_to_mesh


@dataclass
class SearchState:
    consecutive_search_failures: int = 0
    search_radius_scale: float = 1.0
    candidates_per_proposal: int = 512

    def __post_init__(self):
        if self.search_radius_scale <= 0:
            raise ValueError("search_radius_scale must be positive")
        if self.candidates_per_proposal < 1:
            raise ValueError("candidates_per_proposal must be >= 1")


@dataclass
class SearchOutcome:
    improved: bool
    evals_used: int


def lcb(mean, sd, kappa):
    """Lower confidence bound ``mean - kappa * sd``; small is promising."""
    return mean - kappa * sd


def draw_candidates(incumbent, mesh: MeshState, state: SearchState, rng, unit_lower, unit_upper):
    """Mesh-snapped Gaussian draws around the incumbent, clamped to the box.

    The result may contain repeats and already-evaluated points.
    """
    incumbent = np.asarray(incumbent, dtype=float)
    sd = state.search_radius_scale * mesh.poll_size
    draws = incumbent + sd * rng.standard_normal((state.candidates_per_proposal, incumbent.size))
    cand = snap_to_mesh(draws, incumbent, mesh.mesh_size)
    return np.clip(cand, unit_lower, unit_upper)


def propose_candidates(incumbent, mesh: MeshState, state: SearchState, rng, unit_lower, unit_upper, evaluated=None):
    """Draw mesh-snapped candidates and drop repeats and known points, keeping order."""
    incumbent = np.asarray(incumbent, dtype=float)
    cand = draw_candidates(incumbent, mesh, state, rng, unit_lower, unit_upper)
    known = incumbent[None, :] if evaluated is None else np.vstack([incumbent, evaluated])
    return remove_duplicates(cand, known)


def _first_unseen(candidates, order, known, tol=DUPLICATE_TOL, block=32):
    """First index in ``order`` whose candidate is farther than ``tol`` from every known point."""
    for start in range(0, len(order), block):
        idx = order[start:start + block]
        d2 = ((candidates[idx, None, :] - known[None, :, :]) ** 2).sum(-1).min(axis=1)
        hits = np.flatnonzero(d2 > tol * tol)
        if hits.size:
            return int(idx[hits[0]])
    return None


def select_by_lcb(candidates, gp, kappa):
    """Index of the candidate with the lowest LCB (first one on ties)."""
    mean, sd = gp.predict(candidates)
    return int(np.argmin(lcb(mean, sd, kappa)))


def run_search(ctx) -> SearchOutcome:
    """One search step: evaluate the LCB-best candidate on the true objective.

    Skipped (no evaluation) when no surrogate is available or when every
    proposal collapses onto already-evaluated points.
    """
    state = ctx.search_state
    if ctx.gp is None:
        return SearchOutcome(False, 0)
    inc = ctx.incumbent.unit_point
    cand = draw_candidates(inc, ctx.mesh, state, ctx.rng, ctx.problem.unit_lower, ctx.problem.unit_upper)
    # scoring every draw and skipping known points in score order picks the
    # same point as deduplicating first, at a fraction of the cost
    mean, sd = ctx.gp.predict(cand)
    order = np.argsort(lcb(mean, sd, ctx.options.kappa), kind="stable")
    pick = _first_unseen(cand, order, np.vstack([inc, ctx.evaluated_points()]))
    if pick is None:
        state.consecutive_search_failures += 1
        return SearchOutcome(False, 0)
    if ctx.evaluations_left() <= 0:
        raise BudgetExhausted("evaluation budget exhausted during search")
    best = cand[pick]
    before = ctx._comparison_value()
    record = ctx.evaluate(best, "search")
    if ctx.consider(record):
        # a negligible gain still moves the incumbent but does not keep the
        # search loop alive, otherwise a gentle slope can eat the whole budget
        if before - ctx._comparison_value() > ctx.options.stall_rel_tol * abs(before):
            state.consecutive_search_failures = 0
            return SearchOutcome(True, 1)
    state.consecutive_search_failures += 1
    return SearchOutcome(False, 1)
