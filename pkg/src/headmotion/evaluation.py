"""Metrics and the nested cross-validation protocol.

run_cv is the honest estimate: per outer fold, the correlation filter and
sequential search run on the training rows only, a model is fit on the
fold's selected features, and held-out predictions are pooled across folds
for the aggregate MAE / R2 / accuracy / confusion matrix. A consensus
feature set (features picked in at least min_count folds) is refit on all
rows as the reportable final model.

Severity classes are integers 0..4; continuous predictions are converted
by rounding half away from zero and clamping into range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import models, selection
from .errors import (
    DegenerateDataError,
    InvalidConfigError,
    InvalidInputError,
)
from .folds import make_folds, make_stratified_folds
from .matrix import FeatureMatrix

N_CLASSES = 5

SELECTION_MODES = ("exclusion", "floating", "none")


def mae(y: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean absolute error."""
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape or a.size == 0:
        raise InvalidInputError("mae needs two equal-length non-empty 1-D arrays")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("mae inputs must be finite")
    return float(np.mean(np.abs(a - b)))


def r2(y: np.ndarray, y_pred: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    a = np.asarray(y, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape or a.size == 0:
        raise InvalidInputError("r2 needs two equal-length non-empty 1-D arrays")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("r2 inputs must be finite")
    ss_tot = float(np.sum((a - np.mean(a)) ** 2))
    if ss_tot == 0.0:
        raise DegenerateDataError("r2 is undefined for a constant target")
    ss_res = float(np.sum((a - b) ** 2))
    return 1.0 - ss_res / ss_tot


def to_class(value: float) -> int:
    """Round half away from zero, then clamp into [0, 4]."""
    v = float(value)
    if not np.isfinite(v):
        raise InvalidInputError("prediction must be finite")
    c = int(np.floor(abs(v) + 0.5))
    if v < 0.0:
        c = -c
    return min(max(c, 0), N_CLASSES - 1)


def to_classes(values: np.ndarray) -> np.ndarray:
    """Vectorized to_class."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("predictions must be finite")
    c = np.floor(np.abs(v) + 0.5) * np.sign(v)
    return np.clip(c, 0, N_CLASSES - 1).astype(np.int64)


def confusion(
    actual: np.ndarray, predicted: np.ndarray
) -> tuple[np.ndarray, float]:
    """5x5 confusion matrix (rows actual, columns predicted) and accuracy."""
    a = np.asarray(actual)
    p = np.asarray(predicted)
    if a.ndim != 1 or a.shape != p.shape or a.size == 0:
        raise InvalidInputError("confusion needs equal-length non-empty arrays")
    a = a.astype(np.int64)
    p = p.astype(np.int64)
    for name, arr in (("actual", a), ("predicted", p)):
        if arr.min() < 0 or arr.max() >= N_CLASSES:
            raise InvalidInputError(f"{name} classes must lie in [0, {N_CLASSES - 1}]")
    mat = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(mat, (a, p), 1)
    accuracy = float(np.trace(mat)) / a.size
    return mat, accuracy


@dataclass(frozen=True)
class CVConfig:
    """Everything run_cv needs besides the data."""

    model: models.ModelSpec
    selection: str = "floating"
    folds: int = 10
    inner_folds: int = 5
    consensus_min: int = 5
    correlation_threshold: float | None = 0.8
    seed: int = 0
    stratified: bool = False
    # Convergence settings for the per-fold and consensus model fits. The
    # inner subset search scores candidates at selection.SCORING_TOL.
    tol: float = models.DEFAULT_TOL
    max_sweeps: int = models.DEFAULT_MAX_SWEEPS

    def __post_init__(self) -> None:
        if self.selection not in SELECTION_MODES:
            raise InvalidConfigError(
                f"selection must be one of {SELECTION_MODES}, got {self.selection!r}"
            )
        if self.folds < 2:
            raise InvalidConfigError("need at least 2 outer folds")
        if self.inner_folds < 2:
            raise InvalidConfigError("need at least 2 inner folds")
        if not (1 <= self.consensus_min <= self.folds):
            raise InvalidConfigError(
                f"consensus_min must be in [1, {self.folds}]"
            )
        if self.correlation_threshold is not None and not (
            0.0 < self.correlation_threshold <= 1.0
        ):
            raise InvalidConfigError("correlation_threshold must be in (0, 1]")

    def to_dict(self) -> dict[str, object]:
        return {
            "model": self.model.to_dict(),
            "selection": self.selection,
            "folds": self.folds,
            "inner_folds": self.inner_folds,
            "consensus_min": self.consensus_min,
            "correlation_threshold": self.correlation_threshold,
            "seed": self.seed,
            "stratified": self.stratified,
        }

    @staticmethod
    def from_dict(d: dict) -> "CVConfig":
        return CVConfig(
            model=models.ModelSpec.from_dict(d["model"]),
            selection=str(d.get("selection", "floating")),
            folds=int(d.get("folds", 10)),
            inner_folds=int(d.get("inner_folds", 5)),
            consensus_min=int(d.get("consensus_min", 5)),
            correlation_threshold=(
                None
                if d.get("correlation_threshold") is None
                else float(d["correlation_threshold"])
            ),
            seed=int(d.get("seed", 0)),
            stratified=bool(d.get("stratified", False)),
        )


@dataclass(frozen=True)
class FoldRecord:
    """Held-out results of one outer fold."""

    fold: int
    test_index: tuple[int, ...]
    selected: tuple[str, ...]
    mae: float
    r2: float | None
    accuracy: float
    path: selection.SelectionPath | None = field(repr=False, default=None)


@dataclass(frozen=True)
class CVReport:
    """Pooled nested-CV results plus the consensus refit."""

    config: CVConfig
    ids: tuple[str, ...]
    fold_ids: np.ndarray              # (n,) outer-fold assignment
    folds: tuple[FoldRecord, ...]
    consensus: selection.ConsensusResult
    final_model: models.FittedModel
    predictions: np.ndarray           # (n,) pooled out-of-fold predictions
    actual: np.ndarray                # (n,) targets
    pooled_mae: float
    pooled_r2: float
    pooled_accuracy: float
    confusion_matrix: np.ndarray      # (5, 5)
    notes: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return int(self.actual.size)

    def to_dict(self) -> dict[str, object]:
        return {
            "config": self.config.to_dict(),
            "n_rows": self.n_rows,
            "pooled": {
                "mae": self.pooled_mae,
                "r2": self.pooled_r2,
                "accuracy": self.pooled_accuracy,
            },
            "confusion": self.confusion_matrix.tolist(),
            "folds": [
                {
                    "fold": f.fold,
                    "test_index": list(f.test_index),
                    "selected": list(f.selected),
                    "n_selected": len(f.selected),
                    "mae": f.mae,
                    "r2": f.r2,
                    "accuracy": f.accuracy,
                }
                for f in self.folds
            ],
            "consensus": {
                "min_count": self.consensus.min_count,
                "frequencies": dict(sorted(self.consensus.frequencies.items())),
                "selected": list(self.consensus.selected),
            },
            "final_model": {
                "spec": self.final_model.spec.to_dict(),
                "intercept": self.final_model.intercept,
                "coefficients": dict(
                    zip(
                        self.final_model.feature_names,
                        self.final_model.coef.tolist(),
                    )
                ),
                "x_mean": self.final_model.x_mean.tolist(),
                "x_std": self.final_model.x_std.tolist(),
                "n_sweeps": self.final_model.n_sweeps,
                "converged": self.final_model.converged,
                "final_objective": self.final_model.final_objective,
            },
            "predictions": {
                "id": list(self.ids),
                "fold": self.fold_ids.tolist(),
                "actual": self.actual.tolist(),
                "predicted": self.predictions.tolist(),
                "predicted_class": to_classes(self.predictions).tolist(),
                "actual_class": to_classes(self.actual).tolist(),
            },
            "notes": list(self.notes),
        }


def _one_se_names(
    path: selection.SelectionPath,
    m_sel: FeatureMatrix,
    y_train: np.ndarray,
    config: CVConfig,
    fold: int,
) -> tuple[str, ...]:
    """Smallest path subset scoring within one standard error of the minimum.

    The path minimum is an argmin over thousands of noisy CV scores, so it
    overfits the inner folds; with more candidate features than training
    rows it tends to land on large subsets whose extra columns are inner
    noise. The usual one-standard-error rule picks the most parsimonious
    subset whose score is statistically indistinguishable from the
    minimum, which is what the fold's model is fit on.
    """
    fold_mses = selection.subset_fold_mses(
        m_sel,
        y_train,
        config.model,
        path.best_names,
        inner_folds=config.inner_folds,
        seed=(config.seed, fold),
    )
    if fold_mses.size < 2:
        return path.best_names
    threshold = path.best_score + float(
        np.std(fold_mses, ddof=1) / np.sqrt(fold_mses.size)
    )
    names = path.best_names
    size = len(names)
    score = path.best_score
    for step in path.steps:
        if step.score <= threshold and (
            step.size < size or (step.size == size and step.score < score)
        ):
            names, size, score = step.names, step.size, step.score
    return names


def _select_for_fold(
    m_train: FeatureMatrix,
    y_train: np.ndarray,
    config: CVConfig,
    fold: int,
) -> tuple[tuple[str, ...], selection.SelectionPath | None]:
    if config.correlation_threshold is not None:
        kept = selection.correlation_filter(m_train, config.correlation_threshold)
    else:
        kept = list(m_train.columns)
    if config.selection == "none" or len(kept) < 2:
        return tuple(kept), None
    search = (
        selection.sfs_backward
        if config.selection == "exclusion"
        else selection.sfs_floating
    )
    m_sel = m_train.select_columns(kept)
    path = search(
        m_sel,
        y_train,
        config.model,
        inner_folds=config.inner_folds,
        seed=(config.seed, fold),
    )
    return _one_se_names(path, m_sel, y_train, config, fold), path


def run_cv(m: FeatureMatrix, y: np.ndarray, config: CVConfig) -> CVReport:
    """Nested cross-validation over a feature matrix.

    Args:
        m: (n, p) named feature matrix, one row per recording.
        y: (n,) severity targets in [0, 4].
        config: protocol settings.

    Returns:
        CVReport with pooled out-of-fold metrics, per-fold selections,
        the consensus set, and the consensus model refit on all rows.
    """
    yv = np.ascontiguousarray(y, dtype=np.float64)
    if yv.ndim != 1 or yv.size != m.n_rows:
        raise InvalidInputError("y must be 1-D with one entry per matrix row")
    if not np.all(np.isfinite(yv)):
        raise InvalidInputError("y must be finite")
    if m.n_rows < config.folds:
        raise InvalidConfigError(
            f"{m.n_rows} rows cannot fill {config.folds} folds"
        )
    if np.ptp(yv) == 0.0:
        raise DegenerateDataError("target is constant across all rows")

    actual_classes = to_classes(yv)
    if config.stratified:
        fold_ids = make_stratified_folds(actual_classes, config.folds, config.seed)
    else:
        fold_ids = make_folds(m.n_rows, config.folds, config.seed)

    notes: list[str] = []
    records: list[FoldRecord] = []
    pooled_pred = np.empty(m.n_rows)
    for f in range(config.folds):
        test_mask = fold_ids == f
        train_idx = np.flatnonzero(~test_mask)
        test_idx = np.flatnonzero(test_mask)
        m_train = m.take_rows(train_idx)
        y_train = yv[train_idx]
        selected, path = _select_for_fold(m_train, y_train, config, f)
        fitted = models.fit(
            config.model,
            m_train.select_columns(selected),
            y_train,
            tol=config.tol,
            max_sweeps=config.max_sweeps,
        )
        pred = models.predict(fitted, m.take_rows(test_idx).select_columns(selected))
        pooled_pred[test_idx] = pred
        y_test = yv[test_idx]
        if y_test.size >= 2 and np.ptp(y_test) > 0.0:
            fold_r2 = r2(y_test, pred)
        else:
            fold_r2 = None
            notes.append(f"fold {f}: constant held-out target, r2 omitted")
        fold_acc = float(
            np.mean(to_classes(pred) == actual_classes[test_idx])
        )
        records.append(
            FoldRecord(
                fold=f,
                test_index=tuple(int(i) for i in test_idx),
                selected=selected,
                mae=mae(y_test, pred),
                r2=fold_r2,
                accuracy=fold_acc,
                path=path,
            )
        )

    consensus = selection.consensus_select(
        [rec.selected for rec in records],
        min_count=config.consensus_min,
        schema=m.columns,
    )
    if consensus.empty:
        notes.append("consensus set is empty; final model is intercept-only")
    final_model = models.fit(
        config.model,
        m.select_columns(consensus.selected),
        yv,
        tol=config.tol,
        max_sweeps=config.max_sweeps,
    )
    conf, accuracy = confusion(actual_classes, to_classes(pooled_pred))
    return CVReport(
        config=config,
        ids=m.ids,
        fold_ids=fold_ids,
        folds=tuple(records),
        consensus=consensus,
        final_model=final_model,
        predictions=pooled_pred,
        actual=yv,
        pooled_mae=mae(yv, pooled_pred),
        pooled_r2=r2(yv, pooled_pred),
        pooled_accuracy=accuracy,
        confusion_matrix=conf,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class AblationCell:
    """One grid cell: selection mode x segmentation on/off x model."""

    selection: str
    segmented: bool
    spec: models.ModelSpec

    def __post_init__(self) -> None:
        if self.selection not in SELECTION_MODES:
            raise InvalidConfigError(
                f"selection must be one of {SELECTION_MODES}"
            )

    @property
    def name(self) -> str:
        alpha = f"{self.spec.alpha:g}" if self.spec.family != "ols" else "na"
        seg = "seg" if self.segmented else "raw"
        return f"{seg}-{self.selection}-{self.spec.family}-{alpha}"


@dataclass(frozen=True)
class AblationGrid:
    """All cell reports from one shared-fold ablation run."""

    cells: tuple[AblationCell, ...]
    reports: tuple[CVReport, ...]
    folds: int
    seed: int

    def format_table(self) -> str:
        header = (
            f"{'cell':<34} {'features':>8} {'mae':>8} {'r2':>8} {'accuracy':>8}"
        )
        lines = [header, "-" * len(header)]
        for cell, report in zip(self.cells, self.reports):
            lines.append(
                f"{cell.name:<34} {len(report.consensus.selected):>8d} "
                f"{report.pooled_mae:>8.3f} {report.pooled_r2:>8.3f} "
                f"{report.pooled_accuracy:>8.3f}"
            )
        return "\n".join(lines)


def run_ablation(
    m_segmented: FeatureMatrix,
    m_raw: FeatureMatrix,
    y: np.ndarray,
    cells: Sequence[AblationCell],
    folds: int = 10,
    inner_folds: int = 5,
    consensus_min: int = 5,
    correlation_threshold: float | None = 0.8,
    seed: int = 0,
    stratified: bool = False,
) -> AblationGrid:
    """Run every grid cell under one shared fold assignment.

    Cells with segmented=True score the full segmented feature matrix;
    the rest score the unsegmented baseline matrix. Cells with selection
    "none" skip the correlation filter as well, so they see every column.
    """
    if len(cells) == 0:
        raise InvalidConfigError("ablation grid needs at least one cell")
    if m_segmented.ids != m_raw.ids:
        raise InvalidInputError(
            "segmented and raw matrices must describe the same recordings"
        )
    reports = []
    for cell in cells:
        config = CVConfig(
            model=cell.spec,
            selection=cell.selection,
            folds=folds,
            inner_folds=inner_folds,
            consensus_min=consensus_min,
            correlation_threshold=(
                None if cell.selection == "none" else correlation_threshold
            ),
            seed=seed,
            stratified=stratified,
        )
        matrix = m_segmented if cell.segmented else m_raw
        reports.append(run_cv(matrix, y, config))
    return AblationGrid(
        cells=tuple(cells), reports=tuple(reports), folds=folds, seed=seed
    )
