"""Feature pruning: correlation filtering, sequential backward elimination
with optional floating re-inclusion, and cross-fold consensus.

The correlation filter walks columns in a priority order (non-derivative
signals first, then schema order) and keeps a column only when its absolute
Pearson correlation with every already-kept column stays at or below the
threshold. The sequential searches score candidate subsets by seeded k-fold
cross-validated mean MSE under one model spec; ties always resolve to the
lowest schema index, so results are exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _cd, models
from .errors import (
    DegenerateDataError,
    InvalidConfigError,
    InvalidInputError,
    TooShortError,
)
from .features import ACCEL_SIGNALS, VELOCITY_SIGNALS
from .folds import SeedLike, make_folds
from .matrix import FeatureMatrix

# A floating re-inclusion must beat the best score recorded at the target
# subset size by more than this.
FLOAT_IMPROVEMENT = 1e-12

# Total scoring budget for the floating search, in units of one plain
# backward pass (p*(p+1)/2 subset evaluations).
EVAL_BUDGET_PASSES = 3

# Coordinate-descent tolerance while scoring candidate subsets. Subsets are
# compared on CV MSE, where differences near this resolution are noise; the
# winning subset is refit at the estimation tolerance by the caller.
SCORING_TOL = 1e-5


def derivative_level(name: str) -> int:
    """0 for angle/temporal columns, 1 for velocities, 2 for accelerations."""
    parts = name.split("|")
    signal = parts[1] if len(parts) > 1 else name
    if signal in VELOCITY_SIGNALS:
        return 1
    if signal in ACCEL_SIGNALS:
        return 2
    return 0


def correlation_filter(
    m: FeatureMatrix,
    threshold: float = 0.8,
    priority: Sequence[str] | None = None,
) -> list[str]:
    """Greedy redundancy filter on pairwise Pearson correlation.

    Zero-variance columns are dropped outright. Remaining columns are
    visited in priority order; a column is kept unless its |r| with an
    already-kept column exceeds the threshold. By default priority is
    (derivative level, schema index), so angle and temporal features win
    over the velocity and acceleration features derived from them.

    Args:
        m: feature matrix with at least 2 rows.
        threshold: keep boundary in (0, 1]; |r| strictly above it rejects.
        priority: optional names to visit first, in the given order.

    Returns:
        Retained column names in schema order.
    """
    if not (0.0 < threshold <= 1.0):
        raise InvalidConfigError("correlation threshold must be in (0, 1]")
    if m.n_rows < 2:
        raise TooShortError("need at least 2 rows to measure correlation")

    values = m.values
    mu = values.mean(axis=0)
    sd = np.sqrt(np.mean((values - mu) ** 2, axis=0))
    usable = sd > 0.0

    order = sorted(
        range(m.n_columns), key=lambda j: (derivative_level(m.columns[j]), j)
    )
    if priority is not None:
        first = [m.column_index(name) for name in priority]
        seen = set(first)
        order = first + [j for j in order if j not in seen]

    zscores = (values - mu) / np.where(usable, sd, 1.0)
    n = m.n_rows
    kept: list[int] = []
    kept_z: list[np.ndarray] = []
    for j in order:
        if not usable[j]:
            continue
        zj = zscores[:, j]
        if kept_z:
            r = np.asarray(kept_z) @ zj / n
            if np.max(np.abs(r)) > threshold:
                continue
        kept.append(j)
        kept_z.append(zj)
    return [m.columns[j] for j in sorted(kept)]


@dataclass(frozen=True)
class SelectionStep:
    """One visited subset along a sequential search path."""

    size: int
    names: tuple[str, ...]
    score: float
    removed: str | None = None
    added: str | None = None


@dataclass(frozen=True)
class SelectionPath:
    """Every step of one sequential search plus the winning subset."""

    steps: tuple[SelectionStep, ...]
    best_names: tuple[str, ...]
    best_score: float
    n_evaluations: int
    degenerate_folds: int

    @property
    def best_size(self) -> int:
        return len(self.best_names)


def _check_sfs_inputs(
    m: FeatureMatrix, y: np.ndarray, inner_folds: int
) -> np.ndarray:
    yv = np.ascontiguousarray(y, dtype=np.float64)
    if yv.ndim != 1 or yv.size != m.n_rows:
        raise InvalidInputError("y must be 1-D with one entry per matrix row")
    if not np.all(np.isfinite(yv)):
        raise InvalidInputError("y must be finite")
    if m.n_columns < 2:
        raise TooShortError("sequential selection needs at least 2 features")
    if m.n_rows < inner_folds:
        raise TooShortError(
            f"{m.n_rows} rows cannot be scored with {inner_folds} inner folds"
        )
    if np.ptp(yv) == 0.0:
        raise DegenerateDataError("target is constant; nothing to select for")
    return yv


class _SubsetScorer:
    """Seeded k-fold CV mean MSE over batches of candidate column subsets.

    Folds are split and standardized once per search. For the
    coordinate-descent families every candidate is warm-started, per fold,
    from the last committed subset's coefficients; a search commits its
    current set after every accepted move, so each candidate starts one
    column away from its own solution. Closed-form families ignore the warm
    starts. Fold handling (standardization, degenerate constant-target
    folds, mean aggregation) matches _cd.kfold_cv_mse.

    Every scored subset is cached. A warm start leaves a tolerance-sized
    imprint of the parent on the score, so re-scoring a subset along a
    different path would return a slightly different number; the floating
    search's strict-improvement bookkeeping needs revisited subsets to
    score identically, or numerical jitter can masquerade as improvement
    indefinitely. First-visit scores are therefore authoritative.
    """

    def __init__(
        self,
        m: FeatureMatrix,
        y: np.ndarray,
        spec: models.ModelSpec,
        inner_folds: int,
        seed: SeedLike,
        tol: float,
        max_sweeps: int,
    ) -> None:
        x = np.ascontiguousarray(m.values)
        fold_ids = make_folds(m.n_rows, inner_folds, seed)
        self._prep = _cd.fold_prepare(x, y, fold_ids, inner_folds)
        self._family, self._l1, self._l2 = spec.penalties()
        self._warm = np.zeros((inner_folds, m.n_columns))
        self._tol = float(tol)
        self._max_sweeps = int(max_sweeps)
        self._cache: dict[bytes, tuple[float, int]] = {}

    def _with_cache(
        self, cand: np.ndarray, runner, bound: float = np.inf
    ) -> tuple[np.ndarray, int]:
        """Serve cached rows of cand; let runner score the rest.

        runner(misses, best) gets the miss row indices and the best cached
        score in this batch (the abandonment bound) and returns per-miss
        (scores, degenerate, fully_scored). Abandoned candidates (provably
        above the batch minimum) come back infinite and stay uncached.
        A caller that only consumes scores at or below some threshold can
        tighten the bound with it; scores above the bound then surface as
        inf rather than their exact values.
        """
        scores = np.empty(cand.shape[0])
        degenerate = 0
        misses: list[int] = []
        best = bound
        for i in range(cand.shape[0]):
            hit = self._cache.get(cand[i].tobytes())
            if hit is None:
                misses.append(i)
            else:
                scores[i] = hit[0]
                degenerate += hit[1]
                if hit[0] < best:
                    best = hit[0]
        if misses:
            got, deg, full = runner(misses, best)
            for r, i in enumerate(misses):
                if full[r]:
                    self._cache[cand[i].tobytes()] = (float(got[r]), int(deg[r]))
                scores[i] = float(got[r])
                degenerate += int(deg[r])
        return scores, degenerate

    def batch(self, cand: np.ndarray) -> tuple[np.ndarray, int]:
        def runner(misses: list[int], best: float):
            fresh = np.ascontiguousarray(cand[np.asarray(misses)])
            return _cd.batch_fold_scores(
                *self._prep,
                fresh,
                self._warm,
                self._family,
                self._l1,
                self._l2,
                self._tol,
                self._max_sweeps,
                best,
            )

        return self._with_cache(cand, runner)

    def batch_remove(self, current: Sequence[int]) -> tuple[np.ndarray, int]:
        """Score every drop-one-column edit of current (a sorted list)."""
        cand = _removal_candidates(current)
        if self._family != _cd.FAMILY_CD:
            return self.batch(cand)
        _, _, _, xte_t, yte, n_te, ymean, _, y_const, valid, base_mse, gram, xy = (
            self._prep
        )

        def runner(misses: list[int], best: float):
            return _cd.sfs_remove_scores(
                gram,
                xy,
                xte_t,
                yte,
                n_te,
                ymean,
                y_const,
                valid,
                base_mse,
                np.asarray(current, dtype=np.int64),
                np.asarray(misses, dtype=np.int64),
                self._warm,
                self._l1,
                self._l2,
                self._tol,
                self._max_sweeps,
                best,
            )

        return self._with_cache(cand, runner)

    def batch_add(
        self,
        current: Sequence[int],
        excluded: Sequence[int],
        bound: float = np.inf,
    ) -> tuple[np.ndarray, int]:
        """Score every add-one-column edit of current, in excluded order."""
        cand, _ = _addition_candidates(current, excluded)
        if self._family != _cd.FAMILY_CD:
            return self.batch(cand)
        _, _, _, xte_t, yte, n_te, ymean, _, y_const, valid, base_mse, gram, xy = (
            self._prep
        )
        excl = np.asarray(excluded, dtype=np.int64)

        def runner(misses: list[int], best: float):
            return _cd.sfs_add_scores(
                gram,
                xy,
                xte_t,
                yte,
                n_te,
                ymean,
                y_const,
                valid,
                base_mse,
                np.asarray(current, dtype=np.int64),
                excl[np.asarray(misses)],
                self._warm,
                self._l1,
                self._l2,
                self._tol,
                self._max_sweeps,
                best,
            )

        return self._with_cache(cand, runner, bound)

    def commit(self, cols: Sequence[int]) -> None:
        if self._family != _cd.FAMILY_CD:
            return
        y_const, valid, _, gram, xy = self._prep[8:]
        _cd.refit_warm(
            gram,
            xy,
            y_const,
            valid,
            np.asarray(cols, dtype=np.int64),
            self._warm,
            self._l1,
            self._l2,
            self._tol,
            self._max_sweeps,
        )


def _removal_candidates(current: Sequence[int]) -> np.ndarray:
    """All size s-1 subsets of current; row i removes current[i]."""
    cur = np.asarray(current, dtype=np.int64)
    s = cur.size
    cand = np.empty((s, s - 1), dtype=np.int64)
    for i in range(s):
        cand[i, :i] = cur[:i]
        cand[i, i:] = cur[i + 1 :]
    return cand


def _addition_candidates(
    current: Sequence[int], excluded: Sequence[int]
) -> tuple[np.ndarray, Sequence[int]]:
    """One candidate per excluded column, in the given order."""
    cand = np.empty((len(excluded), len(current) + 1), dtype=np.int64)
    for i, j in enumerate(excluded):
        cand[i] = sorted([*current, j])
    return cand, excluded


def _best_step(steps: Iterable[SelectionStep]) -> SelectionStep:
    best = None
    for step in steps:
        if (
            best is None
            or step.score < best.score
            or (step.score == best.score and step.size < best.size)
        ):
            best = step
    assert best is not None
    return best


def sfs_backward(
    m: FeatureMatrix,
    y: np.ndarray,
    spec: models.ModelSpec,
    inner_folds: int = 5,
    seed: SeedLike = 0,
    tol: float = SCORING_TOL,
    max_sweeps: int = models.DEFAULT_MAX_SWEEPS,
) -> SelectionPath:
    """Sequential backward elimination down to a single feature.

    Starting from the full set, each step removes the feature whose
    removal gives the lowest inner-CV mean MSE (ties to the lowest schema
    index). The path records every visited size from p down to 1; the best
    subset is the lowest-scoring step, ties to the smaller size.
    """
    yv = _check_sfs_inputs(m, y, inner_folds)
    scorer = _SubsetScorer(m, yv, spec, inner_folds, seed, tol, max_sweeps)
    columns = m.columns

    current = list(range(m.n_columns))
    scores, deg = scorer.batch(np.asarray([current], dtype=np.int64))
    s0 = float(scores[0])
    scorer.commit(current)
    steps = [SelectionStep(len(current), tuple(columns[j] for j in current), s0)]
    n_evals = 1
    degenerate = deg
    while len(current) > 1:
        # Candidate i removes current[i]; argmin's first-hit rule keeps
        # ties on the lowest schema index because current stays sorted.
        scores, dg = scorer.batch_remove(current)
        n_evals += len(current)
        degenerate += dg
        i = int(np.argmin(scores))
        best_sc = float(scores[i])
        removed = current.pop(i)
        scorer.commit(current)
        steps.append(
            SelectionStep(
                size=len(current),
                names=tuple(columns[j] for j in current),
                score=best_sc,
                removed=columns[removed],
            )
        )
    best = _best_step(steps)
    return SelectionPath(
        steps=tuple(steps),
        best_names=best.names,
        best_score=best.score,
        n_evaluations=n_evals,
        degenerate_folds=degenerate,
    )


def sfs_floating(
    m: FeatureMatrix,
    y: np.ndarray,
    spec: models.ModelSpec,
    inner_folds: int = 5,
    seed: SeedLike = 0,
    tol: float = SCORING_TOL,
    max_sweeps: int = models.DEFAULT_MAX_SWEEPS,
) -> SelectionPath:
    """Backward elimination with conditional floating re-inclusion.

    After every removal, previously removed features are re-added one at a
    time as long as the addition beats the best score already recorded at
    the resulting size by more than FLOAT_IMPROVEMENT. The strict
    improvement requirement makes the search terminate. Re-inclusion is
    consulted only while the working set is smaller than the inner
    training row count (larger fits interpolate, so their score
    differences are fold noise that can stall the walk), and a scoring
    budget of three backward passes bounds the total work, returning the
    best subset found so far if micro-improvements keep the walk alive.
    """
    yv = _check_sfs_inputs(m, y, inner_folds)
    scorer = _SubsetScorer(m, yv, spec, inner_folds, seed, tol, max_sweeps)
    columns = m.columns
    p = m.n_columns

    current = list(range(p))
    scores, deg = scorer.batch(np.asarray([current], dtype=np.int64))
    s0 = float(scores[0])
    scorer.commit(current)
    steps = [SelectionStep(p, tuple(columns[j] for j in current), s0)]
    n_evals = 1
    degenerate = deg
    best_by_size: dict[int, float] = {p: s0}
    # Near-tied scores can keep the float phase finding real but worthless
    # improvements; cap total scoring at a few plain backward passes.
    eval_budget = int(EVAL_BUDGET_PASSES * (p * (p + 1) // 2))
    # Largest training split any inner fold sees. Subsets at or above it
    # give interpolating fits, so re-inclusion is not consulted there.
    float_cap = yv.size - yv.size // inner_folds

    while len(current) > 1 and n_evals < eval_budget:
        scores, dg = scorer.batch_remove(current)
        n_evals += len(current)
        degenerate += dg
        i = int(np.argmin(scores))
        best_sc = float(scores[i])
        removed = current.pop(i)
        scorer.commit(current)
        size = len(current)
        if best_sc < best_by_size.get(size, np.inf):
            best_by_size[size] = best_sc
        steps.append(
            SelectionStep(
                size=size,
                names=tuple(columns[j] for j in current),
                score=best_sc,
                removed=columns[removed],
            )
        )

        while len(current) < min(p, float_cap) and n_evals < eval_budget:
            in_current = set(current)
            excluded = [j for j in range(p) if j not in in_current]
            # A rejected scan records nothing, so candidates provably at or
            # above the acceptance target can stop early.
            target = best_by_size.get(len(current) + 1, np.inf)
            scores, dg = scorer.batch_add(current, excluded, bound=target)
            n_evals += len(excluded)
            degenerate += dg
            i = int(np.argmin(scores))
            best_add_sc = float(scores[i])
            if best_add_sc < target - FLOAT_IMPROVEMENT:
                current = sorted([*current, excluded[i]])
                scorer.commit(current)
                best_by_size[len(current)] = best_add_sc
                steps.append(
                    SelectionStep(
                        size=len(current),
                        names=tuple(columns[j] for j in current),
                        score=best_add_sc,
                        added=columns[excluded[i]],
                    )
                )
            else:
                break

    best = _best_step(steps)
    return SelectionPath(
        steps=tuple(steps),
        best_names=best.names,
        best_score=best.score,
        n_evaluations=n_evals,
        degenerate_folds=degenerate,
    )


def subset_fold_mses(
    m: FeatureMatrix,
    y: np.ndarray,
    spec: models.ModelSpec,
    names: Sequence[str],
    inner_folds: int = 5,
    seed: SeedLike = 0,
    tol: float = SCORING_TOL,
    max_sweeps: int = models.DEFAULT_MAX_SWEEPS,
) -> np.ndarray:
    """Per-fold inner-CV test MSEs of one named column subset.

    Same fold split, standardization, and solver settings as the
    sequential searches, so the returned vector decomposes the score a
    search would report for this subset into its fold components. Folds
    with an empty train or test split are omitted.
    """
    yv = np.ascontiguousarray(y, dtype=np.float64)
    if yv.ndim != 1 or yv.size != m.n_rows:
        raise InvalidInputError("y must be 1-D with one entry per matrix row")
    if not np.all(np.isfinite(yv)):
        raise InvalidInputError("y must be finite")
    if m.n_rows < inner_folds:
        raise TooShortError(
            f"{m.n_rows} rows cannot be scored with {inner_folds} inner folds"
        )
    if not names:
        raise InvalidInputError("need at least one column name")
    lookup = {name: j for j, name in enumerate(m.columns)}
    try:
        cols = np.asarray([lookup[nm] for nm in names], dtype=np.int64)
    except KeyError as exc:
        raise InvalidInputError(f"unknown column {exc.args[0]!r}") from None
    fold_ids = make_folds(m.n_rows, inner_folds, seed)
    family, l1, l2 = spec.penalties()
    x = np.ascontiguousarray(m.values)
    mses, scored, _ = _cd.kfold_cv_fold_mses(
        x, yv, fold_ids, inner_folds, cols, family, l1, l2, tol, max_sweeps
    )
    return mses[scored == 1]


@dataclass(frozen=True)
class ConsensusResult:
    """Cross-fold vote over per-fold selected feature lists."""

    fold_lists: tuple[tuple[str, ...], ...]
    frequencies: dict[str, int]
    min_count: int
    selected: tuple[str, ...]

    @property
    def empty(self) -> bool:
        return len(self.selected) == 0


def consensus_select(
    fold_lists: Sequence[Sequence[str]],
    min_count: int,
    schema: Sequence[str] | None = None,
) -> ConsensusResult:
    """Keep features selected in at least min_count folds.

    Args:
        fold_lists: one selected-name list per fold; names unique per list.
        min_count: vote threshold, between 1 and the number of folds.
        schema: optional full column order; the result follows it. Without
            a schema, names keep their first-appearance order.

    Returns:
        ConsensusResult; the selected tuple may be empty.
    """
    lists = tuple(tuple(fl) for fl in fold_lists)
    if len(lists) == 0:
        raise InvalidInputError("need at least one fold list")
    if not (1 <= min_count <= len(lists)):
        raise InvalidConfigError(
            f"min_count must be in [1, {len(lists)}], got {min_count}"
        )
    frequencies: dict[str, int] = {}
    for fl in lists:
        if len(set(fl)) != len(fl):
            raise InvalidInputError("a fold list contains duplicate names")
        for name in fl:
            frequencies[name] = frequencies.get(name, 0) + 1
    if schema is not None:
        schema_order = list(schema)
        unknown = set(frequencies) - set(schema_order)
        if unknown:
            raise InvalidInputError(
                f"fold lists contain names outside the schema: {sorted(unknown)[:3]}"
            )
        ordered = [n for n in schema_order if frequencies.get(n, 0) >= min_count]
    else:
        ordered = [n for n in frequencies if frequencies[n] >= min_count]
    return ConsensusResult(
        fold_lists=lists,
        frequencies=frequencies,
        min_count=min_count,
        selected=tuple(ordered),
    )
