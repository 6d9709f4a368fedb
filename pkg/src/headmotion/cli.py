"""Command-line orchestrator for the batch pipeline.

Each subcommand runs one stage over a declarative JSON config plus flag
overrides (flags win). Stages hand off through files under the output
directory, so any stage can be re-run in isolation:

    synth       -> poses/*.csv, labels/*.csv, manifest.json
    kinematics  -> kinematics/*.csv
    segment     -> segmentation/*.csv, gmm/*.json
    features    -> features.csv, features_raw.csv
    select      -> selection/fold-*.csv, consensus.json
    train       -> model.json
    evaluate    -> report.json
    ablate      -> ablation.json, ablation.txt

Every artifact embeds the hash of the config that produced it; stages
refuse chained inputs whose hashes disagree. Each run also writes
logs/<stage>.log.json with the config echo, versions, warnings, and
timings (the one artifact class that is not byte-reproducible).

Exit codes: 0 success, 2 missing input, 3 invalid config, 4 config-hash
chain mismatch, 1 any other failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, evaluation, io, models, pipeline, selection, synth
from .errors import ChainMismatchError, HeadMotionError, InvalidConfigError
from .kinematics import compute_kinematics
from .segmentation import segment_recording

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MISSING_INPUT = 2
EXIT_INVALID_CONFIG = 3
EXIT_CHAIN_MISMATCH = 4

STAGES = (
    "synth",
    "kinematics",
    "segment",
    "features",
    "select",
    "train",
    "evaluate",
    "ablate",
)

DEFAULTS: dict[str, object] = {
    "manifest": None,
    "out_dir": None,
    "angle_unit": "rad",
    "smooth_window": None,
    "correlation_threshold": 0.8,
    "selection": "floating",
    "model": {"family": "lasso", "alpha": 0.01},
    "families": ["lasso"],
    "alpha_grid": [0.01],
    "variants": ["exclusion", "floating", "floating_raw"],
    "l1_ratio": 0.5,
    "folds": 10,
    "inner_folds": 5,
    "consensus_min": 5,
    "stratified": False,
    "seed": 0,
    "n_subjects": 40,
    "noise_std": 0.3,
    "frame_rate_hz": 30.0,
    "duration_s": 240.0,
    "relation": None,
}

# Flags that override config keys of the same name.
_OVERRIDE_KEYS = (
    "manifest",
    "out_dir",
    "angle_unit",
    "smooth_window",
    "correlation_threshold",
    "selection",
    "folds",
    "inner_folds",
    "consensus_min",
    "seed",
    "n_subjects",
    "noise_std",
    "frame_rate_hz",
    "duration_s",
)


def _threshold(text: str) -> float | None:
    if text.strip().lower() in ("none", "off"):
        return None
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="headmotion",
        description="Head-motion severity pipeline: synthesize, extract, select, evaluate.",
    )
    parser.add_argument(
        "--version", action="version", version=f"headmotion {__version__}"
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--manifest", help="dataset manifest path")
        p.add_argument("--out-dir", dest="out_dir", help="artifact directory")
        p.add_argument("--angle-unit", dest="angle_unit", choices=io.ANGLE_UNITS)
        p.add_argument("--smooth-window", dest="smooth_window", type=int)
        p.add_argument(
            "--correlation-threshold",
            dest="correlation_threshold",
            type=_threshold,
            help="|r| cutoff for the redundancy filter, or 'none'",
        )
        p.add_argument(
            "--selection", choices=evaluation.SELECTION_MODES
        )
        p.add_argument("--family", choices=models.FAMILIES)
        p.add_argument("--alpha", type=float)
        p.add_argument("--folds", type=int)
        p.add_argument("--inner-folds", dest="inner_folds", type=int)
        p.add_argument("--consensus-min", dest="consensus_min", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--n-subjects", dest="n_subjects", type=int)
        p.add_argument("--noise-std", dest="noise_std", type=float)
        p.add_argument("--frame-rate-hz", dest="frame_rate_hz", type=float)
        p.add_argument("--duration-s", dest="duration_s", type=float)
    return parser


def load_config(args: argparse.Namespace) -> dict:
    """Config file merged under flag overrides, with defaults underneath."""
    cfg = json.loads(json.dumps(DEFAULTS))  # deep copy
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise InvalidConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise InvalidConfigError("config root must be a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {unknown}")
        cfg.update(loaded)
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    family = getattr(args, "family", None)
    alpha = getattr(args, "alpha", None)
    if family is not None or alpha is not None:
        model = dict(cfg["model"])
        if family is not None:
            model["family"] = family
        if alpha is not None:
            model["alpha"] = alpha
        cfg["model"] = model
    if cfg["out_dir"] is None:
        raise InvalidConfigError("out_dir is required (config key or --out-dir)")
    return cfg


def _model_spec(cfg: dict) -> models.ModelSpec:
    model = dict(cfg["model"])
    if model.get("family") == "enet" and "l1_ratio" not in model:
        model["l1_ratio"] = cfg["l1_ratio"]
    if model.get("family") == "ols":
        model.setdefault("alpha", 0.0)
    return models.ModelSpec.from_dict(model)


def _cv_config(cfg: dict) -> evaluation.CVConfig:
    return evaluation.CVConfig(
        model=_model_spec(cfg),
        selection=str(cfg["selection"]),
        folds=int(cfg["folds"]),
        inner_folds=int(cfg["inner_folds"]),
        consensus_min=int(cfg["consensus_min"]),
        correlation_threshold=(
            None
            if cfg["correlation_threshold"] is None
            else float(cfg["correlation_threshold"])
        ),
        seed=int(cfg["seed"]),
        stratified=bool(cfg["stratified"]),
    )


def _relation(cfg: dict) -> synth.PlantedRelation:
    spec = cfg["relation"]
    if spec is None:
        return synth.default_relation(noise_std=float(cfg["noise_std"]))
    if not isinstance(spec, dict) or "drivers" not in spec:
        raise InvalidConfigError("relation must be an object with a drivers list")
    drivers = tuple(
        synth.Driver(knob=str(d["knob"]), weight=float(d["weight"]))
        for d in spec["drivers"]
    )
    return synth.PlantedRelation(
        drivers=drivers,
        noise_std=float(spec.get("noise_std", cfg["noise_std"])),
        intercept=float(spec.get("intercept", 2.0)),
    )


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _read_manifest(cfg: dict) -> tuple[dict, Path]:
    if not cfg["manifest"]:
        raise InvalidConfigError("manifest is required (config key or --manifest)")
    path = _require(Path(cfg["manifest"]), "manifest")
    manifest = io.read_json(path)
    if "subjects" not in manifest:
        raise InvalidConfigError(f"{path} has no subjects list")
    return manifest, path.parent


def _targets_for(matrix_ids, manifest: dict) -> np.ndarray:
    by_id = {s["id"]: float(s["target"]) for s in manifest["subjects"]}
    missing = [rid for rid in matrix_ids if rid not in by_id]
    if missing:
        raise InvalidConfigError(
            f"manifest lacks targets for recordings: {missing[:5]}"
        )
    return np.array([by_id[rid] for rid in matrix_ids])


def _stage_synth(cfg: dict, out: Path) -> list[str]:
    relation = _relation(cfg)
    dataset = synth.generate_dataset(
        n=int(cfg["n_subjects"]),
        relation=relation,
        seed=int(cfg["seed"]),
        frame_rate_hz=float(cfg["frame_rate_hz"]),
        duration_s=float(cfg["duration_s"]),
    )
    chash = io.config_hash(cfg)
    artifacts = []
    subjects = []
    for subject in dataset.subjects:
        rid = subject.series.recording_id
        pose_rel = f"poses/{rid}.csv"
        labels_rel = f"labels/{rid}.csv"
        io.write_pose_csv(
            subject.series, out / pose_rel, meta={"config_hash": chash}
        )
        io.write_labels_csv(
            subject.labels, rid, out / labels_rel, meta={"config_hash": chash}
        )
        artifacts += [pose_rel, labels_rel]
        subjects.append(
            {
                "id": rid,
                "pose_path": pose_rel,
                "labels_path": labels_rel,
                "target": subject.target,
                "latents": subject.latents,
                "params": subject.params.to_dict(),
            }
        )
    manifest = {
        "format": io.FORMAT_MANIFEST,
        "config_hash": chash,
        "seed": dataset.seed,
        "frame_rate_hz": dataset.frame_rate_hz,
        "duration_s": dataset.duration_s,
        "relation": relation.describe(),
        "subjects": subjects,
    }
    io.atomic_write_json(out / "manifest.json", manifest)
    artifacts.append("manifest.json")
    if not cfg["manifest"]:
        cfg["manifest"] = str(out / "manifest.json")
    return artifacts


def _stage_kinematics(cfg: dict, out: Path) -> list[str]:
    manifest, base = _read_manifest(cfg)
    chash = io.config_hash(cfg)
    artifacts = []
    metas = []
    for subject in manifest["subjects"]:
        pose_path = _require(base / subject["pose_path"], "pose file")
        series, meta = io.read_pose_csv(pose_path, default_unit=str(cfg["angle_unit"]))
        metas.append(meta)
        kin = compute_kinematics(series)
        rel = f"kinematics/{subject['id']}.csv"
        io.write_kinematics_csv(
            kin,
            out / rel,
            meta={
                "config_hash": chash,
                "upstream_hash": meta.get("config_hash"),
            },
        )
        artifacts.append(rel)
    io.require_matching_hash(metas, "pose")
    return artifacts


def _stage_segment(cfg: dict, out: Path) -> list[str]:
    manifest, _ = _read_manifest(cfg)
    chash = io.config_hash(cfg)
    smooth = cfg["smooth_window"]
    artifacts = []
    metas = []
    for subject in manifest["subjects"]:
        rid = subject["id"]
        kin_path = _require(out / f"kinematics/{rid}.csv", "kinematics file")
        kin, meta = io.read_kinematics_csv(kin_path)
        metas.append(meta)
        seg, gmm = segment_recording(
            kin,
            seed=int(cfg["seed"]),
            smooth_window=None if smooth is None else int(smooth),
        )
        seg_rel = f"segmentation/{rid}.csv"
        gmm_rel = f"gmm/{rid}.json"
        io.write_segmentation_csv(
            seg,
            rid,
            out / seg_rel,
            meta={"config_hash": chash, "upstream_hash": meta.get("config_hash")},
        )
        io.atomic_write_json(
            out / gmm_rel,
            {"config_hash": chash, "recording_id": rid, **io.gmm_to_dict(gmm)},
        )
        artifacts += [seg_rel, gmm_rel]
    io.require_matching_hash(metas, "kinematics")
    return artifacts


def _stage_features(cfg: dict, out: Path) -> list[str]:
    from .features import FEATURE_NAMES, RAW_FEATURE_NAMES, feature_vector
    from .features import unsegmented_features
    from .matrix import FeatureMatrix

    manifest, _ = _read_manifest(cfg)
    chash = io.config_hash(cfg)
    kin_metas = []
    seg_metas = []
    ids = []
    rows = []
    raw_rows = []
    flags = {}
    for subject in manifest["subjects"]:
        rid = subject["id"]
        kin_path = _require(out / f"kinematics/{rid}.csv", "kinematics file")
        seg_path = _require(out / f"segmentation/{rid}.csv", "segmentation file")
        kin, kin_meta = io.read_kinematics_csv(kin_path)
        _, seg, seg_meta = io.read_segmentation_csv(seg_path)
        kin_metas.append(kin_meta)
        seg_metas.append(seg_meta)
        vec = feature_vector(kin, seg)
        ids.append(rid)
        rows.append(vec.values)
        flags[rid] = vec.flags
        raw_vals = unsegmented_features(kin)
        raw_rows.append(np.array([raw_vals[n] for n in RAW_FEATURE_NAMES]))
    kin_hash = io.require_matching_hash(kin_metas, "kinematics")
    seg_hash = io.require_matching_hash(seg_metas, "segmentation")
    matrix = FeatureMatrix.from_rows(ids=ids, columns=FEATURE_NAMES, rows=rows)
    raw = FeatureMatrix.from_rows(ids=ids, columns=RAW_FEATURE_NAMES, rows=raw_rows)
    common = {
        "config_hash": chash,
        "upstream_kinematics": kin_hash,
        "upstream_segmentation": seg_hash,
    }
    io.write_feature_csv(matrix, out / "features.csv", flags=flags, meta=common)
    io.write_feature_csv(raw, out / "features_raw.csv", meta=common)
    return ["features.csv", "features_raw.csv"]


def _load_features(cfg: dict, out: Path, raw: bool = False):
    name = "features_raw.csv" if raw else "features.csv"
    path = _require(out / name, name)
    matrix, _, meta = io.read_feature_csv(path)
    return matrix, meta


def _stage_select(cfg: dict, out: Path) -> list[str]:
    manifest, _ = _read_manifest(cfg)
    matrix, fmeta = _load_features(cfg, out)
    y = _targets_for(matrix.ids, manifest)
    report = evaluation.run_cv(matrix, y, _cv_config(cfg))
    chash = io.config_hash(cfg)
    common = {"config_hash": chash, "upstream_hash": fmeta.get("config_hash")}
    artifacts = []
    for record in report.folds:
        if record.path is None:
            continue
        rel = f"selection/fold-{record.fold:02d}.csv"
        io.write_selection_path_csv(
            record.path, out / rel, meta={**common, "fold": record.fold}
        )
        artifacts.append(rel)
    io.atomic_write_json(
        out / "consensus.json",
        {**common, **io.consensus_to_dict(report.consensus)},
    )
    artifacts.append("consensus.json")
    return artifacts


def _stage_train(cfg: dict, out: Path) -> list[str]:
    manifest, _ = _read_manifest(cfg)
    matrix, fmeta = _load_features(cfg, out)
    y = _targets_for(matrix.ids, manifest)
    consensus_path = out / "consensus.json"
    columns = list(matrix.columns)
    consensus_hash = None
    if consensus_path.exists():
        consensus = io.read_json(consensus_path)
        consensus_hash = consensus.get("config_hash")
        columns = list(consensus["selected"])
    fitted = models.fit(_model_spec(cfg), matrix.select_columns(columns), y)
    io.atomic_write_json(
        out / "model.json",
        {
            "config_hash": io.config_hash(cfg),
            "upstream_hash": fmeta.get("config_hash"),
            "consensus_hash": consensus_hash,
            **io.model_to_dict(fitted),
        },
    )
    return ["model.json"]


def _stage_evaluate(cfg: dict, out: Path) -> list[str]:
    manifest, _ = _read_manifest(cfg)
    matrix, fmeta = _load_features(cfg, out)
    y = _targets_for(matrix.ids, manifest)
    report = evaluation.run_cv(matrix, y, _cv_config(cfg))
    io.atomic_write_json(
        out / "report.json",
        {
            "config_hash": io.config_hash(cfg),
            "upstream_hash": fmeta.get("config_hash"),
            **report.to_dict(),
        },
    )
    return ["report.json"]


def _parse_variant(name: str) -> tuple[str, bool]:
    base = name[: -len("_raw")] if name.endswith("_raw") else name
    if base not in evaluation.SELECTION_MODES:
        raise InvalidConfigError(
            f"unknown ablation variant {name!r}; use a selection mode with "
            "an optional _raw suffix"
        )
    return base, not name.endswith("_raw")


def _stage_ablate(cfg: dict, out: Path) -> list[str]:
    manifest, _ = _read_manifest(cfg)
    matrix, fmeta = _load_features(cfg, out)
    raw_matrix, rmeta = _load_features(cfg, out, raw=True)
    io.require_matching_hash([fmeta, rmeta], "feature")
    y = _targets_for(matrix.ids, manifest)
    cells = []
    for variant in cfg["variants"]:
        sel, segmented = _parse_variant(str(variant))
        for family in cfg["families"]:
            alphas = [0.0] if family == "ols" else list(cfg["alpha_grid"])
            for alpha in alphas:
                spec = models.ModelSpec(
                    family=str(family),
                    alpha=float(alpha),
                    l1_ratio=float(cfg["l1_ratio"]) if family == "enet" else None,
                )
                cells.append(
                    evaluation.AblationCell(
                        selection=sel, segmented=segmented, spec=spec
                    )
                )
    grid = evaluation.run_ablation(
        matrix,
        raw_matrix,
        y,
        cells,
        folds=int(cfg["folds"]),
        inner_folds=int(cfg["inner_folds"]),
        consensus_min=int(cfg["consensus_min"]),
        correlation_threshold=(
            None
            if cfg["correlation_threshold"] is None
            else float(cfg["correlation_threshold"])
        ),
        seed=int(cfg["seed"]),
        stratified=bool(cfg["stratified"]),
    )
    payload = {
        "config_hash": io.config_hash(cfg),
        "upstream_hash": fmeta.get("config_hash"),
        "folds": grid.folds,
        "seed": grid.seed,
        "cells": [
            {
                "name": cell.name,
                "selection": cell.selection,
                "segmented": cell.segmented,
                "model": cell.spec.to_dict(),
                "n_consensus": len(report.consensus.selected),
                "consensus": list(report.consensus.selected),
                "pooled": {
                    "mae": report.pooled_mae,
                    "r2": report.pooled_r2,
                    "accuracy": report.pooled_accuracy,
                },
            }
            for cell, report in zip(grid.cells, grid.reports)
        ],
    }
    io.atomic_write_json(out / "ablation.json", payload)
    io.atomic_write_text(out / "ablation.txt", grid.format_table() + "\n")
    return ["ablation.json", "ablation.txt"]


_STAGE_FUNCS = {
    "synth": _stage_synth,
    "kinematics": _stage_kinematics,
    "segment": _stage_segment,
    "features": _stage_features,
    "select": _stage_select,
    "train": _stage_train,
    "evaluate": _stage_evaluate,
    "ablate": _stage_ablate,
}


def run_stage(stage: str, cfg: dict) -> list[str]:
    """Run one pipeline stage; returns the artifact paths it wrote."""
    out = Path(str(cfg["out_dir"]))
    out.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        artifacts = _STAGE_FUNCS[stage](cfg, out)
    elapsed = time.monotonic() - started
    try:
        import numba

        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    log = {
        "stage": stage,
        "config": cfg,
        "config_hash": io.config_hash(cfg),
        "versions": {
            "headmotion": __version__,
            "numpy": np.__version__,
            "numba": numba_version,
        },
        "seed": cfg["seed"],
        "elapsed_s": elapsed,
        "warnings": [
            f"{w.category.__name__}: {w.message}" for w in caught
        ],
        "artifacts": artifacts,
    }
    io.atomic_write_json(out / f"logs/{stage}.log.json", log)
    return artifacts


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        artifacts = run_stage(args.stage, cfg)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ChainMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHAIN_MISMATCH
    except InvalidConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except HeadMotionError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"{args.stage}: wrote {len(artifacts)} artifact(s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
