"""Statistical feature extraction over segmented head-motion recordings.

Every feature has a stable pipe-delimited name, <family>|<signal>|<stat>|<state>,
and the full vector always has the same 283 entries in the same order:

* global (126): 7 statistics x 9 signals x 2 states, pooling every frame of
  a state across the whole recording.
* sequence (144): the same 7 x 9 statistics computed per segment and averaged
  over segments of a state (126), plus the per-segment cumulative sum of
  absolute values of each signal averaged the same way (18).
* temporal (13): 6 segment-duration statistics per state plus the overall
  transition rate per minute.

Angle signals are expressed in degrees (the trailing _deg in their names);
velocities and accelerations stay in rad/s and rad/s^2. Frame alignment
follows the left-endpoint convention: label i covers the interval between
poses i and i+1, so angles contribute their first N-1 samples and
accelerations (N-2 samples) use the first N-2 labels.

A recording that never visits one state gets zeros for that state's
features and an imputation flag, so the schema never changes shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .kinematics import KinematicSeries
from .segmentation import MOVING, STEADY, Segmentation

ANGLE_SIGNALS = ("pitch_deg", "yaw_deg", "roll_deg")
VELOCITY_SIGNALS = ("wx_rad_s", "wy_rad_s", "wz_rad_s")
ACCEL_SIGNALS = ("ax_rad_s2", "ay_rad_s2", "az_rad_s2")
SIGNALS = ANGLE_SIGNALS + VELOCITY_SIGNALS + ACCEL_SIGNALS

STATS = ("mean", "median", "range", "mad", "skewness", "kurtosis", "std")
# The unsegmented variant uses the same list minus MAD.
RAW_STATS = ("mean", "median", "range", "skewness", "kurtosis", "std")

STATES = ("moving", "steady")
_STATE_CODES = {"moving": MOVING, "steady": STEADY}

DURATION_STATS = ("mean", "median", "std", "skewness", "range", "time_ratio")

FLAG_NAMES = (
    "imputed_moving",
    "imputed_steady",
    "duration_skew_zeroed_moving",
    "duration_skew_zeroed_steady",
)


def _build_names() -> tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
    global_names = [
        f"global|{sig}|{stat}|{state}"
        for state in STATES
        for sig in SIGNALS
        for stat in STATS
    ]
    sequence_names = [
        f"sequence|{sig}|{stat}|{state}"
        for state in STATES
        for sig in SIGNALS
        for stat in STATS
    ] + [f"sequence|{sig}|cumabs|{state}" for state in STATES for sig in SIGNALS]
    temporal_names = [
        f"temporal|duration|{stat}|{state}" for state in STATES for stat in DURATION_STATS
    ] + ["temporal|transitions|per_minute|all"]
    return tuple(global_names), tuple(sequence_names), tuple(temporal_names)


GLOBAL_NAMES, SEQUENCE_NAMES, TEMPORAL_NAMES = _build_names()
FEATURE_NAMES: tuple[str, ...] = GLOBAL_NAMES + SEQUENCE_NAMES + TEMPORAL_NAMES

RAW_FEATURE_NAMES: tuple[str, ...] = tuple(
    f"raw|{sig}|{stat}|all" for sig in SIGNALS for stat in RAW_STATS
)


@dataclass(frozen=True)
class StatSummary:
    """The seven summary statistics used throughout the feature families.

    Conventions: std uses the n-1 denominator and is 0 for n < 2; skewness
    and excess kurtosis are the moment ratios g1 = m3/m2^1.5 and
    g2 = m4/m2^2 - 3 (population moments) and are both 0 when the variance
    is exactly zero.
    """

    mean: float
    median: float
    range: float
    mad: float
    skewness: float
    kurtosis: float
    std: float

    def as_tuple(self) -> tuple[float, ...]:
        return (
            self.mean,
            self.median,
            self.range,
            self.mad,
            self.skewness,
            self.kurtosis,
            self.std,
        )


def summary_stats(values: np.ndarray) -> StatSummary:
    """Compute the seven-statistic summary of a non-empty 1-D sample."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("summary_stats needs a non-empty 1-D array")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("summary_stats input must be finite")
    mean = float(np.mean(x))
    median = float(np.median(x))
    rng = float(np.ptp(x))
    mad = float(np.median(np.abs(x - median)))
    d = x - mean
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        skew = 0.0
        kurt = 0.0
    else:
        m3 = float(np.mean(d * d * d))
        m4 = float(np.mean(d * d * d * d))
        skew = m3 / m2**1.5
        kurt = m4 / m2**2 - 3.0
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return StatSummary(
        mean=mean, median=median, range=rng, mad=mad,
        skewness=skew, kurtosis=kurt, std=std,
    )


def signal_arrays(kin: KinematicSeries) -> dict[str, np.ndarray]:
    """The nine named signal arrays of a recording, angles in degrees.

    Lengths differ by derivative order: angles N, velocities N-1,
    accelerations N-2.
    """
    out: dict[str, np.ndarray] = {}
    deg = np.degrees(kin.angles)
    for j, name in enumerate(ANGLE_SIGNALS):
        out[name] = deg[:, j]
    for j, name in enumerate(VELOCITY_SIGNALS):
        out[name] = kin.velocity[:, j]
    for j, name in enumerate(ACCEL_SIGNALS):
        out[name] = kin.acceleration[:, j]
    return out


def _check_alignment(kin: KinematicSeries, seg: Segmentation) -> None:
    if seg.n_frames != kin.velocity.shape[0]:
        raise InvalidInputError(
            f"segmentation has {seg.n_frames} frames but the recording has "
            f"{kin.velocity.shape[0]} velocity samples"
        )


def _pooled(
    sig: np.ndarray, labels: np.ndarray, code: int
) -> np.ndarray:
    """Samples of one signal belonging to one state, left-endpoint aligned."""
    n = min(sig.size, labels.size)
    return sig[:n][labels[:n] == code]


def global_features(
    kin: KinematicSeries, seg: Segmentation
) -> tuple[dict[str, float], set[str]]:
    """Whole-recording per-state statistics (126 features)."""
    _check_alignment(kin, seg)
    sigs = signal_arrays(kin)
    values: dict[str, float] = {}
    flags: set[str] = set()
    for state in STATES:
        code = _STATE_CODES[state]
        for name in SIGNALS:
            pooled = _pooled(sigs[name], seg.labels, code)
            if pooled.size == 0:
                flags.add(f"imputed_{state}")
                stats = StatSummary(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
            else:
                stats = summary_stats(pooled)
            for stat, val in zip(STATS, stats.as_tuple()):
                values[f"global|{name}|{stat}|{state}"] = val
    return values, flags


def sequence_features(
    kin: KinematicSeries, seg: Segmentation
) -> tuple[dict[str, float], set[str]]:
    """Per-segment statistics averaged within each state (144 features)."""
    _check_alignment(kin, seg)
    sigs = signal_arrays(kin)
    values: dict[str, float] = {}
    flags: set[str] = set()
    cumabs: dict[tuple[str, str], float] = {}
    for state in STATES:
        code = _STATE_CODES[state]
        segments = [s for s in seg.segments if s.label == code]
        for name in SIGNALS:
            arr = sigs[name]
            per_seg: list[tuple[float, ...]] = []
            per_seg_cum: list[float] = []
            for s in segments:
                hi = min(s.end, arr.size - 1)
                if hi < s.start:
                    continue  # segment lies past this signal's shorter range
                chunk = arr[s.start : hi + 1]
                per_seg.append(summary_stats(chunk).as_tuple())
                per_seg_cum.append(float(np.sum(np.abs(chunk))))
            if not per_seg:
                flags.add(f"imputed_{state}")
                avg = (0.0,) * len(STATS)
                cum = 0.0
            else:
                avg = tuple(np.mean(np.asarray(per_seg), axis=0))
                cum = float(np.mean(per_seg_cum))
            for stat, val in zip(STATS, avg):
                values[f"sequence|{name}|{stat}|{state}"] = float(val)
            cumabs[(state, name)] = cum
    for state in STATES:
        for name in SIGNALS:
            values[f"sequence|{name}|cumabs|{state}"] = cumabs[(state, name)]
    return values, flags


def temporal_features(
    seg: Segmentation, total_duration: float | None = None
) -> tuple[dict[str, float], set[str]]:
    """Segment-duration statistics and the transition rate (13 features).

    total_duration defaults to the sum of all segment durations, which makes
    the two state time-ratios sum to exactly 1.
    """
    if total_duration is None:
        total_duration = seg.total_duration
    total_duration = float(total_duration)
    if not (np.isfinite(total_duration) and total_duration > 0.0):
        raise InvalidInputError("total duration must be positive")
    values: dict[str, float] = {}
    flags: set[str] = set()
    for state in STATES:
        code = _STATE_CODES[state]
        durs = seg.durations(code)
        if durs.size == 0:
            flags.add(f"imputed_{state}")
            flags.add(f"duration_skew_zeroed_{state}")
            stat_vals = dict.fromkeys(DURATION_STATS, 0.0)
        else:
            s = summary_stats(durs)
            skew = s.skewness
            if durs.size < 3:
                skew = 0.0
                flags.add(f"duration_skew_zeroed_{state}")
            stat_vals = {
                "mean": s.mean,
                "median": s.median,
                "std": s.std,
                "skewness": skew,
                "range": s.range,
                "time_ratio": float(durs.sum()) / total_duration,
            }
        for stat in DURATION_STATS:
            values[f"temporal|duration|{stat}|{state}"] = stat_vals[stat]
    rate = (len(seg.segments) - 1) / (total_duration / 60.0)
    values["temporal|transitions|per_minute|all"] = float(rate)
    return values, flags


@dataclass(frozen=True)
class FeatureVector:
    """One recording's 283 named features plus imputation flags."""

    recording_id: str
    values: np.ndarray  # (283,) ordered like FEATURE_NAMES
    flags: dict[str, bool]

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != (len(FEATURE_NAMES),):
            raise InvalidInputError(
                f"feature vector must have {len(FEATURE_NAMES)} entries"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("feature values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(
            self, "flags", {name: bool(self.flags.get(name, False)) for name in FLAG_NAMES}
        )

    @property
    def names(self) -> tuple[str, ...]:
        return FEATURE_NAMES

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])


def feature_vector(kin: KinematicSeries, seg: Segmentation) -> FeatureVector:
    """Extract the full 283-entry feature vector for one recording."""
    g_vals, g_flags = global_features(kin, seg)
    s_vals, s_flags = sequence_features(kin, seg)
    t_vals, t_flags = temporal_features(seg)
    merged = {**g_vals, **s_vals, **t_vals}
    flags = g_flags | s_flags | t_flags
    values = np.array([merged[name] for name in FEATURE_NAMES])
    return FeatureVector(
        recording_id=kin.recording_id,
        values=values,
        flags={name: name in flags for name in FLAG_NAMES},
    )


def unsegmented_features(kin: KinematicSeries) -> dict[str, float]:
    """The 54-feature whole-recording summary used when segmentation is off.

    Six statistics (no MAD) over each full signal array, ignoring states.
    """
    sigs = signal_arrays(kin)
    out: dict[str, float] = {}
    for name in SIGNALS:
        s = summary_stats(sigs[name])
        vals = {
            "mean": s.mean,
            "median": s.median,
            "range": s.range,
            "skewness": s.skewness,
            "kurtosis": s.kurtosis,
            "std": s.std,
        }
        for stat in RAW_STATS:
            out[f"raw|{name}|{stat}|all"] = vals[stat]
    return out


def _unit_for(signal: str, stat: str) -> str:
    if signal == "duration":
        return "" if stat == "time_ratio" else "s"
    if signal == "transitions":
        return "1/min"
    if signal.endswith("_deg"):
        return "deg"
    if signal.endswith("_rad_s"):
        return "rad/s"
    if signal.endswith("_rad_s2"):
        return "rad/s^2"
    return ""


def feature_schema() -> list[dict[str, object]]:
    """Self-describing schema rows for every feature column, in order."""
    rows = []
    for i, name in enumerate(FEATURE_NAMES):
        family, signal, stat, state = name.split("|")
        rows.append(
            {
                "index": i,
                "name": name,
                "family": family,
                "signal": signal,
                "stat": stat,
                "state": state,
                "unit": _unit_for(signal, stat),
            }
        )
    return rows
