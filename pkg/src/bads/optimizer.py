"""Main optimization loop alternating surrogate search and mesh polling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import gp as gplib
from .errors import BudgetExhausted, FitFailed, NonPositiveDefinite, ObjectiveRaised
from .mesh import MeshState, run_poll, update_poll_size
from .problem import ValidatedProblem, from_unit, to_unit
from .search import SearchState, run_search

_log = logging.getLogger(__name__)

STAGES = ("initial", "poll", "search", "reassess")
TERMINATION_REASONS = ("MeshTolerance", "MaxEvaluations", "MaxIterations", "Stalled")


@dataclass
class EvaluationRecord:
    """One call of the user objective."""

    index: int
    unit_point: np.ndarray
    original_point: np.ndarray
    value: float
    noise_sd: Optional[float]
    stage: str
    iteration: int
    failed: bool = False

    @property
    def comparable_value(self) -> float:
        return np.inf if self.failed else self.value


@dataclass
class Incumbent:
    unit_point: np.ndarray
    observed_value: float
    estimated_value: float
    estimated_sd: float
    record_index: int


@dataclass
class Options:
    """Optimizer settings. ``None`` entries get dimension-dependent defaults.

    ``max_evaluations`` defaults to ``100 * D``, ``max_iterations`` to
    ``200 * D``, ``reassess_interval`` and ``full_refit_interval`` to
    ``2 * D`` and ``stall_iterations`` to ``4 * D``.
    """

    max_evaluations: Optional[int] = None
    max_iterations: Optional[int] = None
    poll_size_init: float = 0.25
    poll_size_min: float = 1e-6
    poll_size_max: float = 1.0
    kappa: float = 2.0
    search_fail_switch: int = 2
    sufficient_decrease_factor: float = 0.1
    seed: int = 0
    reassess_interval: Optional[int] = None
    relocation_threshold: float = 3.0
    stall_rel_tol: float = 1e-9
    stall_iterations: Optional[int] = None
    use_search: bool = True
    rank_poll: bool = True
    search_success_expands: bool = True
    search_candidates: int = 512
    search_radius_scale: float = 1.0
    subset_min_points: int = 20
    subset_n_max: Optional[int] = None
    subset_radius_factor: float = 5.0
    full_refit_interval: Optional[int] = None
    gp_maxiter: int = 30

    def __post_init__(self):
        for name in (
            "max_evaluations", "max_iterations", "reassess_interval",
            "stall_iterations", "subset_n_max", "full_refit_interval",
        ):
            val = getattr(self, name)
            if val is not None and (int(val) != val or val < 1):
                raise ValueError(f"{name} must be a positive integer, got {val!r}")
        for name in (
            "poll_size_init", "poll_size_min", "poll_size_max", "kappa",
            "search_radius_scale", "subset_radius_factor", "relocation_threshold",
        ):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")
        if not self.poll_size_min <= self.poll_size_init <= self.poll_size_max:
            raise ValueError("need poll_size_min <= poll_size_init <= poll_size_max")
        if self.search_fail_switch < 1 or self.search_candidates < 1 or self.subset_min_points < 1:
            raise ValueError("counts must be >= 1")
        if self.sufficient_decrease_factor < 0 or self.stall_rel_tol < 0 or self.gp_maxiter < 1:
            raise ValueError("tolerances must be nonnegative")

    def resolve(self, dim: int) -> "Options":
        """Copy with every dimension-dependent default filled in."""
        return replace(
            self,
            max_evaluations=self.max_evaluations or 100 * dim,
            max_iterations=self.max_iterations or 200 * dim,
            reassess_interval=self.reassess_interval or 2 * dim,
            stall_iterations=self.stall_iterations or 4 * dim,
            subset_n_max=self.subset_n_max or 50 + 10 * dim,
            full_refit_interval=self.full_refit_interval or 2 * dim,
        )


@dataclass
class TraceRow:
    iteration: int
    evaluations: int
    stage: str
    poll_size: float
    f_best: float
    x: np.ndarray


@dataclass
class OptimizationResult:
    x_best: np.ndarray
    f_best: float
    f_sd: float
    total_evaluations: int
    total_iterations: int
    termination_reason: str
    trace: list = field(repr=False)
    seed: int
    history: list = field(repr=False)

    def best_so_far(self) -> np.ndarray:
        """Running minimum of observed values, one entry per evaluation."""
        vals = np.array([r.comparable_value for r in self.history])
        return np.minimum.accumulate(vals) if vals.size else vals


class OptimizerRun:
    """Mutable state of one optimization run.

    The poll and search stages receive this object and use ``problem``,
    ``options``, ``rng``, ``mesh``, ``gp``, ``incumbent``, ``search_state``
    and the ``evaluate`` / ``consider`` / ``evaluated_points`` /
    ``evaluations_left`` methods.
    """

    def __init__(self, problem: ValidatedProblem, options: Options | None = None):
        self.problem = problem
        self.options = (options or Options()).resolve(problem.dim)
        self.rng = np.random.default_rng(self.options.seed)
        self.mesh = MeshState(
            poll_size=self.options.poll_size_init,
            poll_size_min=self.options.poll_size_min,
            poll_size_max=self.options.poll_size_max,
        )
        self.search_state = SearchState(
            search_radius_scale=self.options.search_radius_scale,
            candidates_per_proposal=self.options.search_candidates,
        )
        self.history: list[EvaluationRecord] = []
        self._points = np.empty((64, problem.dim))
        self.incumbent: Incumbent | None = None
        self.gp: gplib.GpModel | None = None
        self._hp: gplib.GpHyperparams | None = None
        self._subset_key: tuple | None = None
        self.iteration = 0
        self.trace: list[TraceRow] = []
        self.stall_count = 0
        self.last_reassess = 0
        self._moved_by: str | None = None
        self._gain = 0.0
        self._need_gp = self.options.use_search or self.options.rank_poll or problem.noisy

    # -- bookkeeping used by the stages ------------------------------------

    def evaluations_left(self) -> int:
        return self.options.max_evaluations - len(self.history)

    def evaluated_points(self) -> np.ndarray:
        return self._points[: len(self.history)]

    def evaluate(self, unit_point, stage: str) -> EvaluationRecord:
        """Call the objective once at ``unit_point`` and log the result."""
        if self.evaluations_left() <= 0:
            raise BudgetExhausted("evaluation budget exhausted")
        u = np.clip(np.asarray(unit_point, dtype=float), self.problem.unit_lower, self.problem.unit_upper)
        x = from_unit(u, self.problem)
        try:
            out = self.problem.objective(x.copy())
        except Exception as exc:
            raise ObjectiveRaised(f"objective raised at x={x}: {exc!r}") from exc
        value, noise_sd = _parse_output(out)
        failed = not np.isfinite(value)
        rec = EvaluationRecord(
            index=len(self.history),
            unit_point=u,
            original_point=x,
            value=value,
            noise_sd=noise_sd,
            stage=stage,
            iteration=self.iteration,
            failed=failed,
        )
        if rec.index >= len(self._points):
            self._points = np.vstack([self._points, np.empty_like(self._points)])
        self._points[rec.index] = u
        self.history.append(rec)
        if self.gp is not None:
            self._condition_gp(rec)
        return rec

    def consider(self, record: EvaluationRecord) -> bool:
        """Move the incumbent to ``record`` if it is an improvement."""
        inc = self.incumbent
        if record.failed:
            return False
        if not self.problem.noisy:
            if record.value < inc.observed_value:
                self._gain += inc.observed_value - record.value
                self._move(record, record.value, 0.0)
                return True
            return False

        if self.gp is not None:
            mu_new, sd_new = self.gp.predict(record.unit_point, include_mean_uncertainty=True)
            mu_inc, _ = self.gp.predict(inc.unit_point, include_mean_uncertainty=True)
            noise = np.sqrt(self.gp.hyperparams.noise_var + (record.noise_sd or 0.0) ** 2)
        else:
            mu_new, sd_new = record.value, record.noise_sd or 0.0
            mu_inc = inc.estimated_value
            noise = record.noise_sd or self.problem.noise_scale_hint or 0.0
        if mu_new < mu_inc - self.options.sufficient_decrease_factor * noise:
            self._gain += mu_inc - mu_new
            self._move(record, mu_new, sd_new)
            return True
        return False

    def _move(self, record, estimate, sd, stage=None):
        self.incumbent = Incumbent(
            unit_point=record.unit_point.copy(),
            observed_value=record.comparable_value,
            estimated_value=float(estimate),
            estimated_sd=float(sd),
            record_index=record.index,
        )
        self._moved_by = stage or record.stage

    # -- surrogate ----------------------------------------------------------

    def _training_data(self, idx):
        recs = [self.history[i] for i in idx]
        values = np.array([r.value for r in recs])
        failed = np.array([r.failed for r in recs])
        if failed.all():
            return None
        if failed.any():
            values[failed] = values[~failed].max()
        noise = np.array([r.noise_sd or 0.0 for r in recs])
        return self.evaluated_points()[idx], values, noise

    def _noise_floor(self, noise):
        if not self.problem.noisy or np.any(noise > 0):
            return None
        return self.problem.noise_scale_hint

    def refit_gp(self, full: bool = False):
        """Reselect the local training set and refit hyperparameters if it changed."""
        if not self._need_gp or len(self.history) < 2:
            return
        idx = gplib.select_training_subset(
            self.evaluated_points(),
            self.incumbent.unit_point,
            self.mesh.poll_size,
            incumbent_index=self.incumbent.record_index,
            min_points=self.options.subset_min_points,
            n_max=self.options.subset_n_max,
            radius_factor=self.options.subset_radius_factor,
        )
        data = self._training_data(idx)
        if data is None:
            self.gp = None
            return
        x, y, noise = data
        key = tuple(sorted(int(i) for i in idx))
        full = full or self._hp is None
        if key == self._subset_key and not full:
            self.gp = self._safe_model(self._hp, x, y, noise)
            return
        self._subset_key = key
        try:
            model = gplib.fit(
                x, y, noise,
                previous_hp=self._hp,
                rng=self.rng,
                noisy=self.problem.noisy,
                noise_floor=self._noise_floor(noise),
                heuristic_start=full,
                maxiter=self.options.gp_maxiter,
            )
        except (FitFailed, NonPositiveDefinite) as exc:
            _log.debug("GP fit failed (%s); keeping previous hyperparameters", exc)
            model = self._safe_model(self._hp, x, y, noise) if self._hp is not None else None
        self.gp = model
        if model is not None:
            self._hp = model.hyperparams

    def _safe_model(self, hp, x, y, noise):
        try:
            return gplib.GpModel(hp, x, y, noise)
        except NonPositiveDefinite:
            return None

    def _condition_gp(self, rec):
        value = rec.value
        if rec.failed:
            value = float(self.gp.train_values.max())
        try:
            self.gp = self.gp.condition(rec.unit_point, value, rec.noise_sd or 0.0)
        except NonPositiveDefinite:
            pass

    # -- noisy-mode incumbent handling -------------------------------------

    def reassess_incumbent(self):
        """Refresh the incumbent estimate from the GP; maybe re-measure or relocate."""
        if not self.problem.noisy or self.gp is None:
            return self.incumbent
        opts = self.options
        if self.iteration - self.last_reassess >= opts.reassess_interval and self.evaluations_left() > 0:
            self.evaluate(self.incumbent.unit_point, "reassess")
            self.last_reassess = self.iteration
            self.refit_gp()
            if self.gp is None:
                return self.incumbent
        inc = self.incumbent
        mu, sd = self.gp.predict(inc.unit_point, include_mean_uncertainty=True)
        inc.estimated_value, inc.estimated_sd = float(mu), float(sd)

        pts = self.gp.train_inputs
        mus, sds = self.gp.predict(pts, include_mean_uncertainty=True)
        margin = opts.relocation_threshold * np.sqrt(sds**2 + sd**2)
        better = np.flatnonzero(mu - mus > margin)
        if better.size:
            j = better[np.argmin(mus[better])]
            target = self._record_at(pts[j])
            if target is not None and not target.failed:
                self._gain += mu - mus[j]
                self._move(target, mus[j], sds[j], stage="reassess")
        return self.incumbent

    def _record_at(self, u):
        d2 = ((self.evaluated_points() - u) ** 2).sum(-1)
        hits = np.flatnonzero(d2 <= 1e-20)
        return self.history[hits[-1]] if hits.size else None

    # -- main loop ------------------------------------------------------------

    def check_termination(self) -> str | None:
        opts = self.options
        if len(self.history) >= opts.max_evaluations:
            return "MaxEvaluations"
        if self.iteration >= opts.max_iterations:
            return "MaxIterations"
        if self.mesh.poll_size <= opts.poll_size_min:
            return "MeshTolerance"
        if self.stall_count >= opts.stall_iterations:
            return "Stalled"
        return None

    def _iterate(self):
        opts = self.options
        if opts.use_search and self.gp is not None:
            self.search_state.consecutive_search_failures = 0
            while self.search_state.consecutive_search_failures < opts.search_fail_switch:
                out = run_search(self)
                if out.improved and opts.search_success_expands:
                    self.mesh = update_poll_size(self.mesh, True)
        run_poll(self)
        full = self.iteration % opts.full_refit_interval == 0
        self.refit_gp(full=full)
        self.reassess_incumbent()

    def _close_iteration(self, f_start):
        if self._moved_by is not None:
            scale = abs(f_start) if np.isfinite(f_start) else np.inf
            if self._gain > self.options.stall_rel_tol * scale:
                self.stall_count = 0
            else:
                self.stall_count += 1
        inc = self.incumbent
        self.trace.append(
            TraceRow(
                iteration=self.iteration,
                evaluations=len(self.history),
                stage=self._moved_by or "none",
                poll_size=self.mesh.poll_size,
                f_best=inc.estimated_value,
                x=from_unit(inc.unit_point, self.problem),
            )
        )

    def run(self) -> OptimizationResult:
        try:
            return self._run()
        except ObjectiveRaised as exc:
            exc.partial_result = self._result("ObjectiveRaised") if self.incumbent else None
            raise

    def start(self) -> EvaluationRecord:
        """Evaluate the starting point and make it the incumbent."""
        rec = self.evaluate(to_unit(self.problem.x0, self.problem), "initial")
        self._move(rec, rec.comparable_value, 0.0)
        return rec

    def _run(self) -> OptimizationResult:
        self.start()
        reason = None
        while reason is None:
            reason = self.check_termination()
            if reason is not None:
                break
            self.iteration += 1
            self._moved_by = None
            self._gain = 0.0
            f_start = self._comparison_value()
            try:
                self._iterate()
            except BudgetExhausted:
                reason = "MaxEvaluations"
            self._close_iteration(f_start)
        if self.problem.noisy:
            self._finalize_noisy()
        return self._result(reason)

    def _comparison_value(self):
        inc = self.incumbent
        return inc.estimated_value if self.problem.noisy else inc.observed_value

    def _finalize_noisy(self):
        """Report the argmin of the GP posterior mean over the local training set."""
        if (
            self.iteration - self.last_reassess > self.options.reassess_interval
            and self.evaluations_left() > 0
        ):
            self.evaluate(self.incumbent.unit_point, "reassess")
            self.last_reassess = self.iteration
        self._need_gp = True
        self.refit_gp(full=True)
        if self.gp is None:
            return
        pts = self.gp.train_inputs
        mus, sds = self.gp.predict(pts, include_mean_uncertainty=True)
        j = int(np.argmin(mus))
        target = self._record_at(pts[j])
        if target is None:
            return
        self._move(target, mus[j], sds[j], stage=self._moved_by)

    def _result(self, reason) -> OptimizationResult:
        inc = self.incumbent
        noisy = self.problem.noisy
        return OptimizationResult(
            x_best=from_unit(inc.unit_point, self.problem),
            f_best=inc.estimated_value if noisy else inc.observed_value,
            f_sd=inc.estimated_sd if noisy else 0.0,
            total_evaluations=len(self.history),
            total_iterations=self.iteration,
            termination_reason=reason,
            trace=list(self.trace),
            seed=self.options.seed,
            history=list(self.history),
        )


def _parse_output(out):
    """Split an objective return into ``(value, noise_sd or None)``."""
    noise_sd = None
    if isinstance(out, (tuple, list)) or (isinstance(out, np.ndarray) and out.size == 2):
        seq = list(np.ravel(out)) if isinstance(out, np.ndarray) else list(out)
        value = seq[0]
        if len(seq) > 1 and seq[1] is not None:
            noise_sd = float(seq[1])
            if not np.isfinite(noise_sd) or noise_sd < 0:
                noise_sd = None
    else:
        value = out
    try:
        value = float(np.asarray(value, dtype=float).reshape(()))
    except (TypeError, ValueError):
        value = np.nan
    return value, noise_sd


def optimize(problem: ValidatedProblem, options: Options | None = None) -> OptimizationResult:
    """Minimize ``problem.objective``.

    Each iteration runs search steps on the GP surrogate until
    ``options.search_fail_switch`` consecutive failures, then one
    opportunistic poll pass, then refits the surrogate (and in noisy mode
    reassesses the incumbent). Fully deterministic for a deterministic
    objective given ``options.seed``.

    Raises
    ------
    ObjectiveRaised
        If the objective raises; ``exc.partial_result`` carries the run so far.
    """
    return OptimizerRun(problem, options).run()
