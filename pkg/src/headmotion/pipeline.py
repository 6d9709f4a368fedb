"""In-memory orchestration from pose series to feature matrices.

The CLI drives the same steps through file handoffs; this module is the
direct path for library users and the synthetic benchmarks: derive
kinematics, segment, extract the 283-feature vector per recording, and
stack rows into a named matrix. The 54-feature unsegmented variant feeds
the segmentation ablation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import (
    FEATURE_NAMES,
    RAW_FEATURE_NAMES,
    FeatureVector,
    feature_vector,
    unsegmented_features,
)
from .kinematics import KinematicSeries, PoseSeries, compute_kinematics
from .matrix import FeatureMatrix
from .segmentation import GmmModel, Segmentation, segment_recording
from .synth import PlantedDataset


@dataclass(frozen=True)
class RecordingResult:
    """Everything derived from one recording."""

    kinematics: KinematicSeries
    segmentation: Segmentation
    gmm: GmmModel
    vector: FeatureVector


def process_recording(
    series: PoseSeries,
    seed: int = 0,
    smooth_window: int | None = None,
) -> RecordingResult:
    """Kinematics, segmentation, and features for one recording."""
    kin = compute_kinematics(series)
    seg, gmm = segment_recording(kin, seed=seed, smooth_window=smooth_window)
    vec = feature_vector(kin, seg)
    return RecordingResult(
        kinematics=kin, segmentation=seg, gmm=gmm, vector=vec
    )


def feature_matrix(
    series_list: Sequence[PoseSeries],
    seed: int = 0,
    smooth_window: int | None = None,
) -> FeatureMatrix:
    """Segmented 283-column feature matrix, one row per recording."""
    ids = []
    rows = []
    for series in series_list:
        result = process_recording(series, seed=seed, smooth_window=smooth_window)
        ids.append(series.recording_id)
        rows.append(result.vector.values)
    return FeatureMatrix.from_rows(ids=ids, columns=FEATURE_NAMES, rows=rows)


def raw_feature_matrix(series_list: Sequence[PoseSeries]) -> FeatureMatrix:
    """Unsegmented 54-column baseline matrix, one row per recording."""
    ids = []
    rows = []
    for series in series_list:
        kin = compute_kinematics(series)
        vals = unsegmented_features(kin)
        ids.append(series.recording_id)
        rows.append(np.array([vals[name] for name in RAW_FEATURE_NAMES]))
    return FeatureMatrix.from_rows(ids=ids, columns=RAW_FEATURE_NAMES, rows=rows)


def dataset_matrices(
    dataset: PlantedDataset,
    seed: int = 0,
    smooth_window: int | None = None,
) -> tuple[FeatureMatrix, FeatureMatrix, np.ndarray]:
    """Segmented matrix, unsegmented matrix, and targets for a cohort."""
    series_list = [s.series for s in dataset.subjects]
    segmented = feature_matrix(series_list, seed=seed, smooth_window=smooth_window)
    raw = raw_feature_matrix(series_list)
    return segmented, raw, dataset.targets
