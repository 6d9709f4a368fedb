"""File formats shared by the pipeline stages.

CSV artifacts carry `# key=value` metadata lines before the header row;
JSON artifacts carry the same keys inline. Every artifact embeds the
config_hash of the configuration that produced it, and stages verify that
chained inputs agree on that hash. All writes go through a temp file plus
rename, so interrupted runs never leave partial artifacts visible.

Numbers are serialized with shortest-round-trip formatting, which makes
every artifact byte-identical across repeat runs with the same inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import models, selection
from .errors import ChainMismatchError, InvalidInputError
from .features import FLAG_NAMES
from .kinematics import KinematicSeries, PoseSeries
from .matrix import FeatureMatrix
from .segmentation import (
    LABEL_CODES,
    LABEL_NAMES,
    GmmModel,
    Segmentation,
    extract_segments,
)

FORMAT_POSE = "headmotion.pose.v1"
FORMAT_LABELS = "headmotion.labels.v1"
FORMAT_KINEMATICS = "headmotion.kinematics.v1"
FORMAT_SEGMENTATION = "headmotion.segmentation.v1"
FORMAT_FEATURES = "headmotion.features.v1"
FORMAT_SELECTION_PATH = "headmotion.selection_path.v1"
FORMAT_MANIFEST = "headmotion.manifest.v1"

ANGLE_UNITS = ("rad", "deg")

# Config keys that hold filesystem paths; excluded from the config hash so
# the same logical run hashes identically regardless of where it lives.
PATH_KEYS = ("manifest", "out_dir", "config")


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write text to path via a same-directory temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(
        prefix=f".{path.name}.", suffix=".tmp", dir=path.parent
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str | Path, obj: object) -> None:
    atomic_write_text(
        path, json.dumps(obj, indent=2, allow_nan=False, ensure_ascii=False) + "\n"
    )


def read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def config_hash(config: Mapping[str, object]) -> str:
    """Stable hash of a configuration mapping, ignoring path-valued keys."""
    reduced = {k: v for k, v in config.items() if k not in PATH_KEYS}
    canonical = json.dumps(
        reduced, sort_keys=True, separators=(",", ":"), allow_nan=False
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def require_matching_hash(
    metas: Iterable[Mapping[str, object]], what: str
) -> str | None:
    """The single config_hash shared by chained inputs, or None if unset."""
    hashes = sorted(
        {str(m["config_hash"]) for m in metas if m.get("config_hash")}
    )
    if len(hashes) > 1:
        raise ChainMismatchError(
            f"{what} inputs were produced by different configurations: "
            + ", ".join(hashes)
        )
    return hashes[0] if hashes else None


def _fmt(value: float) -> str:
    """Shortest round-trip decimal form of one numeric cell."""
    return str(float(value))


def _meta_block(meta: Mapping[str, object]) -> list[str]:
    return [f"# {k}={v}" for k, v in meta.items() if v is not None]


def read_csv_with_meta(
    path: str | Path,
) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Parse a metadata-enveloped CSV into (meta, header, rows)."""
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[str]] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    if header is None:
        raise InvalidInputError(f"{path} has no header row")
    return meta, header, rows


def _check_format(meta: Mapping[str, str], expected: str, path: str | Path) -> None:
    found = meta.get("format")
    if found is not None and found != expected:
        raise InvalidInputError(
            f"{path} declares format {found!r}, expected {expected!r}"
        )


def _angles_out(angles: np.ndarray, unit: str) -> np.ndarray:
    if unit not in ANGLE_UNITS:
        raise InvalidInputError(f"angle unit must be one of {ANGLE_UNITS}")
    return np.degrees(angles) if unit == "deg" else angles


def _angles_in(angles: np.ndarray, unit: str) -> np.ndarray:
    if unit not in ANGLE_UNITS:
        raise InvalidInputError(f"angle unit must be one of {ANGLE_UNITS}")
    return np.radians(angles) if unit == "deg" else angles


def write_pose_csv(
    series: PoseSeries,
    path: str | Path,
    angle_unit: str = "rad",
    meta: Mapping[str, object] | None = None,
) -> None:
    out = _angles_out(series.angles, angle_unit)
    lines = _meta_block(
        {
            "format": FORMAT_POSE,
            "recording_id": series.recording_id,
            "angle_unit": angle_unit,
            **(meta or {}),
        }
    )
    lines.append("t,pitch,yaw,roll")
    for i in range(len(series)):
        lines.append(
            f"{_fmt(series.t[i])},{_fmt(out[i, 0])},{_fmt(out[i, 1])},{_fmt(out[i, 2])}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_pose_csv(
    path: str | Path, default_unit: str = "rad"
) -> tuple[PoseSeries, dict[str, str]]:
    meta, header, rows = read_csv_with_meta(path)
    _check_format(meta, FORMAT_POSE, path)
    if header != ["t", "pitch", "yaw", "roll"]:
        raise InvalidInputError(f"{path} has unexpected pose columns {header}")
    unit = meta.get("angle_unit", default_unit)
    data = np.array([[float(v) for v in row] for row in rows])
    if data.size == 0:
        raise InvalidInputError(f"{path} contains no pose rows")
    series = PoseSeries(
        recording_id=meta.get("recording_id", Path(path).stem),
        t=data[:, 0],
        angles=_angles_in(data[:, 1:4], unit),
    )
    return series, meta


def write_labels_csv(
    labels: np.ndarray,
    recording_id: str,
    path: str | Path,
    meta: Mapping[str, object] | None = None,
) -> None:
    lines = _meta_block(
        {"format": FORMAT_LABELS, "recording_id": recording_id, **(meta or {})}
    )
    lines.append("frame,label")
    for i, code in enumerate(np.asarray(labels)):
        lines.append(f"{i},{LABEL_NAMES[int(code)]}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labels_csv(path: str | Path) -> tuple[str, np.ndarray]:
    meta, header, rows = read_csv_with_meta(path)
    _check_format(meta, FORMAT_LABELS, path)
    if header != ["frame", "label"]:
        raise InvalidInputError(f"{path} has unexpected label columns {header}")
    codes = np.array([LABEL_CODES[row[1]] for row in rows], dtype=np.int8)
    return meta.get("recording_id", Path(path).stem), codes


def write_kinematics_csv(
    kin: KinematicSeries,
    path: str | Path,
    meta: Mapping[str, object] | None = None,
) -> None:
    """One row per pose; velocity and acceleration cells are empty where the
    shorter derivative series has ended."""
    lines = _meta_block(
        {
            "format": FORMAT_KINEMATICS,
            "recording_id": kin.recording_id,
            **(meta or {}),
        }
    )
    lines.append("t,pitch,yaw,roll,t_velocity,wx,wy,wz,t_acceleration,ax,ay,az")
    n = kin.angles.shape[0]
    n_vel = kin.velocity.shape[0]
    n_acc = kin.acceleration.shape[0]
    for i in range(n):
        cells = [
            _fmt(kin.t[i]),
            _fmt(kin.angles[i, 0]),
            _fmt(kin.angles[i, 1]),
            _fmt(kin.angles[i, 2]),
        ]
        if i < n_vel:
            cells += [
                _fmt(kin.t_velocity[i]),
                _fmt(kin.velocity[i, 0]),
                _fmt(kin.velocity[i, 1]),
                _fmt(kin.velocity[i, 2]),
            ]
        else:
            cells += ["", "", "", ""]
        if i < n_acc:
            cells += [
                _fmt(kin.t_acceleration[i]),
                _fmt(kin.acceleration[i, 0]),
                _fmt(kin.acceleration[i, 1]),
                _fmt(kin.acceleration[i, 2]),
            ]
        else:
            cells += ["", "", "", ""]
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_kinematics_csv(
    path: str | Path,
) -> tuple[KinematicSeries, dict[str, str]]:
    meta, header, rows = read_csv_with_meta(path)
    _check_format(meta, FORMAT_KINEMATICS, path)
    expected = "t,pitch,yaw,roll,t_velocity,wx,wy,wz,t_acceleration,ax,ay,az"
    if header != expected.split(","):
        raise InvalidInputError(f"{path} has unexpected kinematics columns")
    t, angles = [], []
    t_vel, vel = [], []
    t_acc, acc = [], []
    for row in rows:
        t.append(float(row[0]))
        angles.append([float(v) for v in row[1:4]])
        if row[4] != "":
            t_vel.append(float(row[4]))
            vel.append([float(v) for v in row[5:8]])
        if row[8] != "":
            t_acc.append(float(row[8]))
            acc.append([float(v) for v in row[9:12]])
    kin = KinematicSeries(
        recording_id=meta.get("recording_id", Path(path).stem),
        t=np.array(t),
        angles=np.array(angles),
        t_velocity=np.array(t_vel),
        velocity=np.array(vel) if vel else np.empty((0, 3)),
        t_acceleration=np.array(t_acc),
        acceleration=np.array(acc) if acc else np.empty((0, 3)),
    )
    return kin, meta


def write_segmentation_csv(
    seg: Segmentation,
    recording_id: str,
    path: str | Path,
    meta: Mapping[str, object] | None = None,
) -> None:
    lines = _meta_block(
        {
            "format": FORMAT_SEGMENTATION,
            "recording_id": recording_id,
            "end_time": _fmt(seg.end_time),
            **(meta or {}),
        }
    )
    lines.append("t,label")
    for i in range(seg.n_frames):
        lines.append(f"{_fmt(seg.times[i])},{LABEL_NAMES[int(seg.labels[i])]}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_segmentation_csv(
    path: str | Path,
) -> tuple[str, Segmentation, dict[str, str]]:
    """Rebuild a Segmentation; segments are re-derived from the labels."""
    meta, header, rows = read_csv_with_meta(path)
    _check_format(meta, FORMAT_SEGMENTATION, path)
    if header != ["t", "label"]:
        raise InvalidInputError(f"{path} has unexpected segmentation columns")
    if "end_time" not in meta:
        raise InvalidInputError(f"{path} is missing the end_time metadata")
    times = np.array([float(row[0]) for row in rows])
    labels = np.array([LABEL_CODES[row[1]] for row in rows], dtype=np.int8)
    seg = extract_segments(labels, times, end_time=float(meta["end_time"]))
    return meta.get("recording_id", Path(path).stem), seg, meta


def gmm_to_dict(model: GmmModel) -> dict[str, object]:
    return {
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
        "log_likelihood": model.log_likelihood,
        "n_iter": model.n_iter,
        "converged": model.converged,
        "seed": model.seed,
        "ll_history": model.ll_history.tolist(),
    }


def gmm_from_dict(d: Mapping[str, object]) -> GmmModel:
    return GmmModel(
        weights=np.array(d["weights"]),
        means=np.array(d["means"]),
        variances=np.array(d["variances"]),
        log_likelihood=float(d["log_likelihood"]),
        n_iter=int(d["n_iter"]),
        converged=bool(d["converged"]),
        seed=int(d["seed"]),
        ll_history=np.array(d["ll_history"]),
    )


def write_feature_csv(
    matrix: FeatureMatrix,
    path: str | Path,
    flags: Mapping[str, Mapping[str, bool]] | None = None,
    meta: Mapping[str, object] | None = None,
) -> None:
    """Feature matrix with optional per-recording flag columns appended."""
    flag_cols = list(FLAG_NAMES) if flags is not None else []
    lines = _meta_block(
        {
            "format": FORMAT_FEATURES,
            "feature_count": matrix.n_columns,
            **(meta or {}),
        }
    )
    lines.append(",".join(["id", *matrix.columns, *flag_cols]))
    for i, rid in enumerate(matrix.ids):
        cells = [rid] + [_fmt(v) for v in matrix.values[i]]
        if flags is not None:
            row_flags = flags.get(rid, {})
            cells += ["1" if row_flags.get(f, False) else "0" for f in flag_cols]
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_feature_csv(
    path: str | Path,
) -> tuple[FeatureMatrix, dict[str, dict[str, bool]], dict[str, str]]:
    meta, header, rows = read_csv_with_meta(path)
    _check_format(meta, FORMAT_FEATURES, path)
    if not header or header[0] != "id":
        raise InvalidInputError(f"{path} must start with an id column")
    names = header[1:]
    flag_cols = [n for n in names if n in FLAG_NAMES]
    n_features = len(names) - len(flag_cols)
    if any(n in FLAG_NAMES for n in names[:n_features]):
        raise InvalidInputError(f"{path} mixes flag and feature columns")
    ids = []
    values = []
    flags: dict[str, dict[str, bool]] = {}
    for row in rows:
        rid = row[0]
        ids.append(rid)
        values.append([float(v) for v in row[1 : 1 + n_features]])
        if flag_cols:
            flags[rid] = {
                f: row[1 + n_features + j] == "1"
                for j, f in enumerate(flag_cols)
            }
    matrix = FeatureMatrix(
        ids=tuple(ids),
        columns=tuple(names[:n_features]),
        values=np.array(values) if values else np.empty((0, n_features)),
    )
    return matrix, flags, meta


def write_selection_path_csv(
    path_obj: selection.SelectionPath,
    path: str | Path,
    meta: Mapping[str, object] | None = None,
) -> None:
    lines = _meta_block(
        {
            "format": FORMAT_SELECTION_PATH,
            "best_size": len(path_obj.best_names),
            "best_score": _fmt(path_obj.best_score),
            "best_names": ";".join(path_obj.best_names),
            "n_evaluations": path_obj.n_evaluations,
            "degenerate_folds": path_obj.degenerate_folds,
            **(meta or {}),
        }
    )
    lines.append("step,size,score,removed,added,names")
    for i, step in enumerate(path_obj.steps):
        lines.append(
            ",".join(
                [
                    str(i),
                    str(step.size),
                    _fmt(step.score),
                    step.removed or "",
                    step.added or "",
                    ";".join(step.names),
                ]
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_selection_path_csv(
    path: str | Path,
) -> tuple[selection.SelectionPath, dict[str, str]]:
    meta, header, rows = read_csv_with_meta(path)
    _check_format(meta, FORMAT_SELECTION_PATH, path)
    if header != ["step", "size", "score", "removed", "added", "names"]:
        raise InvalidInputError(f"{path} has unexpected selection columns")
    steps = tuple(
        selection.SelectionStep(
            size=int(row[1]),
            names=tuple(row[5].split(";")) if row[5] else (),
            score=float(row[2]),
            removed=row[3] or None,
            added=row[4] or None,
        )
        for row in rows
    )
    best_names = (
        tuple(meta["best_names"].split(";")) if meta.get("best_names") else ()
    )
    path_obj = selection.SelectionPath(
        steps=steps,
        best_names=best_names,
        best_score=float(meta["best_score"]),
        n_evaluations=int(meta.get("n_evaluations", 0)),
        degenerate_folds=int(meta.get("degenerate_folds", 0)),
    )
    return path_obj, meta


def consensus_to_dict(result: selection.ConsensusResult) -> dict[str, object]:
    return {
        "min_count": result.min_count,
        "fold_lists": [list(lst) for lst in result.fold_lists],
        "frequencies": dict(sorted(result.frequencies.items())),
        "selected": list(result.selected),
    }


def consensus_from_dict(d: Mapping[str, object]) -> selection.ConsensusResult:
    return selection.ConsensusResult(
        fold_lists=tuple(tuple(lst) for lst in d["fold_lists"]),
        frequencies={str(k): int(v) for k, v in dict(d["frequencies"]).items()},
        min_count=int(d["min_count"]),
        selected=tuple(d["selected"]),
    )


def model_to_dict(fitted: models.FittedModel) -> dict[str, object]:
    return {
        "spec": fitted.spec.to_dict(),
        "feature_names": list(fitted.feature_names),
        "coef": fitted.coef.tolist(),
        "intercept": fitted.intercept,
        "x_mean": fitted.x_mean.tolist(),
        "x_std": fitted.x_std.tolist(),
        "n_sweeps": fitted.n_sweeps,
        "converged": fitted.converged,
        "final_objective": fitted.final_objective,
    }


def model_from_dict(d: Mapping[str, object]) -> models.FittedModel:
    return models.FittedModel(
        spec=models.ModelSpec.from_dict(dict(d["spec"])),
        feature_names=tuple(d["feature_names"]),
        coef=np.array(d["coef"]),
        intercept=float(d["intercept"]),
        x_mean=np.array(d["x_mean"]),
        x_std=np.array(d["x_std"]),
        n_sweeps=int(d["n_sweeps"]),
        converged=bool(d["converged"]),
        final_objective=float(d["final_objective"]),
        objective_history=None,
    )
