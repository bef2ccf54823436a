"""Mesh state, poll directions and the poll stage of the direct search."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import BudgetExhausted

# Unit-space distance under which two points are considered identical.
DUPLICATE_TOL = 1e-10


@dataclass(frozen=True)
class MeshState:
    """Poll size and the coupled mesh size.

    ``mesh_size`` is always ``min(poll_size, poll_size**2)``, so the mesh
    refines quadratically faster than the poll step once ``poll_size < 1``.
    """

    poll_size: float = 0.25
    poll_size_min: float = 1e-6
    poll_size_max: float = 1.0
    consecutive_successes: int = 0
    consecutive_failures: int = 0

    def __post_init__(self):
        if not (0 < self.poll_size_min <= self.poll_size_max):
            raise ValueError("need 0 < poll_size_min <= poll_size_max")
        if not (self.poll_size_min <= self.poll_size <= self.poll_size_max):
            raise ValueError(
                f"poll_size={self.poll_size} outside [{self.poll_size_min}, {self.poll_size_max}]"
            )

    @property
    def mesh_size(self) -> float:
        return min(self.poll_size, self.poll_size * self.poll_size)


def update_poll_size(state: MeshState, success: bool) -> MeshState:
    """Double the poll size on success, halve it on failure (within caps)."""
    if success:
        return replace(
            state,
            poll_size=min(2.0 * state.poll_size, state.poll_size_max),
            consecutive_successes=state.consecutive_successes + 1,
            consecutive_failures=0,
        )
    return replace(
        state,
        poll_size=max(0.5 * state.poll_size, state.poll_size_min),
        consecutive_successes=0,
        consecutive_failures=state.consecutive_failures + 1,
    )


def generate_directions(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random orthonormal basis and its negation, as a ``(2*dim, dim)`` array.

    The basis is the Q factor of a standard-Gaussian matrix with the signs
    of R's diagonal folded in, which makes Q Haar-distributed.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    basis = q.T
    return np.vstack([basis, -basis])


def is_positive_spanning(directions: np.ndarray, rng: np.random.Generator, n_probe: int = 10_000) -> bool:
    """Brute-force check that every random probe vector has a direction with positive projection."""
    dim = directions.shape[1]
    v = rng.standard_normal((n_probe, dim))
    return bool(np.all((v @ directions.T).max(axis=1) > 0))


def snap_to_mesh(points, anchor, mesh_size):
    """Round ``points`` onto the lattice of spacing ``mesh_size`` through ``anchor``."""
    steps = np.round((np.asarray(points) - anchor) / mesh_size)
    return anchor + steps * mesh_size


def remove_duplicates(candidates: np.ndarray, evaluated: np.ndarray, tol: float = DUPLICATE_TOL) -> np.ndarray:
    """Drop candidates within ``tol`` of an evaluated point or of an earlier candidate.

    Order of the surviving candidates is preserved.
    """
    if candidates.size == 0:
        return candidates
    # snapped candidates are usually bit-identical copies; drop those cheaply first
    order = np.lexsort(candidates.T[::-1])
    srt = candidates[order]
    first = np.r_[True, np.any(srt[1:] != srt[:-1], axis=1)]
    keep = np.zeros(len(candidates), dtype=bool)
    keep[order[first]] = True  # lexsort is stable, so this is the earliest copy
    if evaluated is not None and len(evaluated):
        dist, _ = cKDTree(evaluated).query(candidates, k=1)
        keep &= dist > tol
    idx = np.flatnonzero(keep)
    pairs = cKDTree(candidates[idx]).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        keep[idx[pairs.max(axis=1)]] = False
    return candidates[keep]


def poll_candidates(incumbent, state: MeshState, directions, unit_lower, unit_upper, evaluated=None):
    """Mesh points around the incumbent, in generation order.

    Each candidate is ``incumbent + poll_size * d`` snapped to the mesh
    lattice anchored at the incumbent and clamped to the unit bounds.
    Points already in ``evaluated`` (and the incumbent itself) are removed.
    """
    incumbent = np.asarray(incumbent, dtype=float)
    raw = incumbent + state.poll_size * np.asarray(directions)
    cand = snap_to_mesh(raw, incumbent, state.mesh_size)
    cand = np.clip(cand, unit_lower, unit_upper)
    known = incumbent[None, :] if evaluated is None else np.vstack([incumbent, evaluated])
    return remove_duplicates(cand, known)


def rank_by_surrogate(candidates: np.ndarray, gp, kappa: float) -> np.ndarray:
    """Reorder candidates by ascending lower confidence bound (stable)."""
    from .search import lcb

    if gp is None or len(candidates) < 2:
        return candidates
    mean, sd = gp.predict(candidates)
    order = np.argsort(lcb(mean, sd, kappa), kind="stable")
    return candidates[order]


@dataclass
class PollOutcome:
    improved: bool
    evals_used: int


def run_poll(ctx) -> PollOutcome:
    """One opportunistic poll pass around the current incumbent.

    ``ctx`` is the running optimizer (see :mod:`bads.optimizer`). Candidates
    are evaluated in order until one is accepted as an improvement; the mesh
    is then updated with the outcome. If the budget runs out mid-poll the
    :class:`BudgetExhausted` error propagates and the mesh is left untouched.
    """
    dirs = generate_directions(ctx.problem.dim, ctx.rng)
    cand = poll_candidates(
        ctx.incumbent.unit_point,
        ctx.mesh,
        dirs,
        ctx.problem.unit_lower,
        ctx.problem.unit_upper,
        ctx.evaluated_points(),
    )
    if ctx.options.rank_poll:
        cand = rank_by_surrogate(cand, ctx.gp, ctx.options.kappa)

    used = 0
    improved = False
    for u in cand:
        if ctx.evaluations_left() <= 0:
            raise BudgetExhausted("evaluation budget exhausted during poll")
        record = ctx.evaluate(u, "poll")
        used += 1
        if ctx.consider(record):
            improved = True
            break
    ctx.mesh = update_poll_size(ctx.mesh, improved)
    return PollOutcome(improved=improved, evals_used=used)
