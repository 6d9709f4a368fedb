"""Synthetic head-pose recordings with plantable feature-target relations.

Traces are simulated at the velocity level and integrated into Euler angles,
so the ground-truth kinematics are known exactly. A two-state Markov chain
switches between a slow "steady" regime and a fast "moving" regime; within
each regime the angular velocity is a constant-magnitude random direction
plus a damped pull toward the regime's baseline pose, which keeps the angle
wander bounded without disturbing the speed distribution the segmenter sees.

Datasets plant a monotone relation between subject-level latent variables
and specific named features (PLANTED_KNOBS), then build the severity target
as a weighted sum of those latents plus Gaussian label noise, clipped to the
valid [0, 4] range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .features import FEATURE_NAMES
from .folds import SeedLike
from .kinematics import PoseSeries, euler_to_rotation
from .segmentation import MOVING, STEADY

TARGET_MIN = 0.0
TARGET_MAX = 4.0

# Calibration of the planted-dataset generator. The two speeds keep the GMM
# clusters far apart; the damping rates bound the angle wander; the occupancy
# map keeps the moving time-ratio roughly linear in its latent.
_STEADY_SPEED = 0.4        # rad/s
_MOVING_SPEED = 1.4        # rad/s
_P_SWITCH = 0.015          # per frame, geometric mean of both switch rates
_OCC_BASE = 0.30           # moving-state occupancy at latent 0
_OCC_SPAN = 0.20
# Occupancy is steered by moving BOTH switch probabilities: each dwell time
# depends on the occupancy odds only through a square root, and a per-subject
# cycle scale spreads the dwell times further. Steering only one probability
# would make every length-proportional statistic (segment durations, per-
# segment cumulative paths) a near-deterministic image of the occupancy.
_CYCLE_SCALE_LO = 0.45
_CYCLE_SCALE_HI = 2.2
_PITCH_SPAN = 0.21         # rad, steady baseline pitch at latent +/-1
_DECOY_SPAN = 0.45         # rad, independent moving-state pitch offset
_YAW_DAMPING_BASE = 4.0    # 1/s; steady yaw spread scales with 1/sqrt(damping)
_YAW_SPREAD_SPAN = 0.45


@dataclass(frozen=True)
class StateMotion:
    """Angular-velocity distribution of one regime.

    Each frame's velocity is mean_speed (jittered) along a uniformly random
    direction, minus axis_damping * (angle deviation from the regime
    baseline), plus independent per-axis noise of scale axis_std.
    """

    mean_speed: float
    axis_std: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis_damping: tuple[float, float, float] = (0.0, 0.0, 0.0)
    speed_jitter: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.mean_speed) and self.mean_speed > 0.0):
            raise InvalidConfigError("mean_speed must be positive and finite")
        for name in ("axis_std", "axis_damping"):
            v = getattr(self, name)
            if len(v) != 3 or any(not np.isfinite(x) or x < 0.0 for x in v):
                raise InvalidConfigError(
                    f"{name} must be three finite non-negative values"
                )
            object.__setattr__(self, name, tuple(float(x) for x in v))
        if not (np.isfinite(self.speed_jitter) and 0.0 <= self.speed_jitter < 1.0):
            raise InvalidConfigError("speed_jitter must lie in [0, 1)")


_DEFAULT_STEADY = StateMotion(
    mean_speed=0.3,
    axis_std=(0.02, 0.02, 0.02),
    axis_damping=(5.0, 5.0, 5.0),
    speed_jitter=0.03,
)
_DEFAULT_MOVING = StateMotion(
    mean_speed=1.5,
    axis_std=(0.05, 0.05, 0.05),
    axis_damping=(5.0, 5.0, 5.0),
    speed_jitter=0.04,
)


@dataclass(frozen=True)
class TraceParams:
    """Everything that determines one synthetic recording.

    Transition probabilities are per frame; either may be 0, which freezes
    the chain in whichever state it starts in. noise_std adds observation
    noise to the stored angles; finite differencing amplifies it by
    sqrt(2)/dt, so keep it tiny (or zero) when clean speed clusters matter.
    """

    recording_id: str = "trace"
    frame_rate_hz: float = 30.0
    duration_s: float = 120.0
    p_steady_to_moving: float = 0.01
    p_moving_to_steady: float = 0.02
    steady: StateMotion = _DEFAULT_STEADY
    moving: StateMotion = _DEFAULT_MOVING
    base_angles: tuple[float, float, float] = (0.0, 0.0, 0.0)
    moving_pitch_offset: float = 0.0
    noise_std: float = 0.0
    seed: SeedLike = 0

    def __post_init__(self) -> None:
        if not self.recording_id:
            raise InvalidConfigError("recording_id must be non-empty")
        if not (np.isfinite(self.frame_rate_hz) and self.frame_rate_hz > 0.0):
            raise InvalidConfigError("frame rate must be positive")
        if not (np.isfinite(self.duration_s) and self.duration_s > 0.0):
            raise InvalidConfigError("duration must be positive")
        if self.n_poses < 3:
            raise InvalidConfigError(
                "duration x frame rate must yield at least 3 poses"
            )
        for name in ("p_steady_to_moving", "p_moving_to_steady"):
            p = getattr(self, name)
            if not (np.isfinite(p) and 0.0 <= p <= 1.0):
                raise InvalidConfigError(f"{name} must lie in [0, 1]")
        if self.moving.mean_speed <= self.steady.mean_speed:
            raise InvalidConfigError(
                "moving mean speed must exceed steady mean speed"
            )
        if len(self.base_angles) != 3 or any(
            not np.isfinite(a) for a in self.base_angles
        ):
            raise InvalidConfigError("base_angles must be three finite radians")
        # The Euler chart degenerates at |yaw| = pi/2; keep the wander's
        # center well clear of it.
        if abs(self.base_angles[1]) > 1.2:
            raise InvalidConfigError("baseline yaw must stay within +/-1.2 rad")
        object.__setattr__(
            self, "base_angles", tuple(float(a) for a in self.base_angles)
        )
        if not np.isfinite(self.moving_pitch_offset) or abs(
            self.moving_pitch_offset
        ) >= math.pi / 2:
            raise InvalidConfigError(
                "moving_pitch_offset must be finite and below pi/2"
            )
        if not (np.isfinite(self.noise_std) and self.noise_std >= 0.0):
            raise InvalidConfigError("noise_std must be non-negative")

    @property
    def n_poses(self) -> int:
        return int(round(self.duration_s * self.frame_rate_hz)) + 1

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate_hz

    def to_dict(self) -> dict[str, object]:
        return {
            "recording_id": self.recording_id,
            "frame_rate_hz": self.frame_rate_hz,
            "duration_s": self.duration_s,
            "p_steady_to_moving": self.p_steady_to_moving,
            "p_moving_to_steady": self.p_moving_to_steady,
            "steady": vars(self.steady).copy(),
            "moving": vars(self.moving).copy(),
            "base_angles": list(self.base_angles),
            "moving_pitch_offset": self.moving_pitch_offset,
            "noise_std": self.noise_std,
            "seed": list(self.seed) if isinstance(self.seed, tuple) else self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "TraceParams":
        def motion(m: dict) -> StateMotion:
            return StateMotion(
                mean_speed=float(m["mean_speed"]),
                axis_std=tuple(m["axis_std"]),
                axis_damping=tuple(m["axis_damping"]),
                speed_jitter=float(m["speed_jitter"]),
            )

        seed = d["seed"]
        return TraceParams(
            recording_id=str(d["recording_id"]),
            frame_rate_hz=float(d["frame_rate_hz"]),
            duration_s=float(d["duration_s"]),
            p_steady_to_moving=float(d["p_steady_to_moving"]),
            p_moving_to_steady=float(d["p_moving_to_steady"]),
            steady=motion(d["steady"]),
            moving=motion(d["moving"]),
            base_angles=tuple(d["base_angles"]),
            moving_pitch_offset=float(d["moving_pitch_offset"]),
            noise_std=float(d["noise_std"]),
            seed=tuple(int(s) for s in seed) if isinstance(seed, list) else int(seed),
        )


def _euler_fast(r: np.ndarray) -> np.ndarray:
    """rotation_to_euler without validation, for the integration hot loop."""
    sy = -r[2, 0]
    if abs(sy) < 1.0 - 1e-9:
        return np.array(
            [
                math.atan2(r[2, 1], r[2, 2]),
                math.asin(sy),
                math.atan2(r[1, 0], r[0, 0]),
            ]
        )
    return np.array(
        [math.atan2(-r[1, 2], r[1, 1]), math.asin(max(-1.0, min(1.0, sy))), 0.0]
    )


def _rot_step(w: np.ndarray, dt: float) -> np.ndarray:
    """rodrigues(w * dt) with scalar math, for the integration hot loop."""
    vx, vy, vz = w[0] * dt, w[1] * dt, w[2] * dt
    theta = math.sqrt(vx * vx + vy * vy + vz * vz)
    if theta == 0.0:
        return np.eye(3)
    x, y, z = vx / theta, vy / theta, vz / theta
    s, c1 = math.sin(theta), 1.0 - math.cos(theta)
    return np.array(
        [
            [
                1.0 + c1 * (x * x - 1.0),
                -s * z + c1 * x * y,
                s * y + c1 * x * z,
            ],
            [
                s * z + c1 * x * y,
                1.0 + c1 * (y * y - 1.0),
                -s * x + c1 * y * z,
            ],
            [
                -s * y + c1 * x * z,
                s * x + c1 * y * z,
                1.0 + c1 * (z * z - 1.0),
            ],
        ]
    )


def simulate_states(params: TraceParams, rng: np.random.Generator) -> np.ndarray:
    """Simulate the per-frame state chain (one entry per frame interval).

    The first frame is drawn from the stationary distribution (a fair coin
    when both transition probabilities are 0, after which the chain never
    leaves its initial state).
    """
    n_frames = params.n_poses - 1
    p_sm = params.p_steady_to_moving
    p_ms = params.p_moving_to_steady
    total = p_sm + p_ms
    p_move_init = 0.5 if total == 0.0 else p_sm / total
    u = rng.random(n_frames)
    states = np.empty(n_frames, dtype=np.int8)
    s = MOVING if u[0] < p_move_init else STEADY
    states[0] = s
    for i in range(1, n_frames):
        if s == MOVING:
            if u[i] < p_ms:
                s = STEADY
        elif u[i] < p_sm:
            s = MOVING
        states[i] = s
    return states


def generate_trace(params: TraceParams) -> tuple[PoseSeries, np.ndarray]:
    """Simulate one recording.

    Returns:
        (PoseSeries, labels): the pose series with n_poses samples and the
        ground-truth state labels, one per frame interval (n_poses - 1).
        Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(params.seed)
    n_poses = params.n_poses
    n_frames = n_poses - 1
    dt = params.dt

    states = simulate_states(params, rng)
    unit_raw = rng.standard_normal((n_frames, 3))
    jitter = rng.standard_normal(n_frames)
    axis_noise = rng.standard_normal((n_frames, 3))

    base = np.asarray(params.base_angles, dtype=np.float64)
    baseline = {
        STEADY: base,
        MOVING: base + np.array([params.moving_pitch_offset, 0.0, 0.0]),
    }
    motion = {STEADY: params.steady, MOVING: params.moving}
    damping = {s: np.asarray(m.axis_damping) for s, m in motion.items()}
    axis_std = {s: np.asarray(m.axis_std) for s, m in motion.items()}

    angles = np.empty((n_poses, 3))
    r = euler_to_rotation(*base)
    e = _euler_fast(r)
    angles[0] = e
    for i in range(n_frames):
        s = int(states[i])
        m = motion[s]
        direction = unit_raw[i]
        norm = math.sqrt(float(direction @ direction))
        if norm > 1e-12:
            direction = direction / norm
        else:
            direction = np.array([1.0, 0.0, 0.0])
        speed = m.mean_speed * (1.0 + m.speed_jitter * jitter[i])
        w = (
            -damping[s] * (e - baseline[s])
            + speed * direction
            + axis_std[s] * axis_noise[i]
        )
        r = _rot_step(w, dt) @ r
        e = _euler_fast(r)
        angles[i + 1] = e

    if params.noise_std > 0.0:
        angles = angles + params.noise_std * rng.standard_normal(angles.shape)
    t = np.arange(n_poses, dtype=np.float64) * dt
    series = PoseSeries(
        recording_id=params.recording_id, t=t, angles=angles
    )
    return series, states


# Plantable subject-level knobs and the named feature each one manifests in.
# The yaw spread lands in the MAD rather than the range: segment boundaries
# carry decaying excursions from the other state, and the range statistic is
# dominated by those few extreme frames while the MAD ignores them.
PLANTED_KNOBS: dict[str, str] = {
    "steady_pitch_level": "global|pitch_deg|mean|steady",
    "moving_occupancy": "temporal|duration|time_ratio|moving",
    "steady_yaw_spread": "global|yaw_deg|mad|steady",
}
_KNOB_ORDER = ("steady_pitch_level", "moving_occupancy", "steady_yaw_spread")

assert all(f in FEATURE_NAMES for f in PLANTED_KNOBS.values())


@dataclass(frozen=True)
class Driver:
    """One planted dependency: target gains weight * latent (latent in [-1, 1])."""

    knob: str
    weight: float

    def __post_init__(self) -> None:
        if self.knob not in PLANTED_KNOBS:
            raise InvalidConfigError(
                f"unknown knob {self.knob!r}; choose from {sorted(PLANTED_KNOBS)}"
            )
        if not np.isfinite(self.weight):
            raise InvalidConfigError("driver weight must be finite")

    @property
    def feature(self) -> str:
        return PLANTED_KNOBS[self.knob]


@dataclass(frozen=True)
class PlantedRelation:
    """The target-generating model: intercept + sum of driver terms + noise."""

    drivers: tuple[Driver, ...]
    noise_std: float = 0.3
    intercept: float = 2.0

    def __post_init__(self) -> None:
        if len(self.drivers) == 0:
            raise InvalidConfigError("a planted relation needs at least one driver")
        knobs = [d.knob for d in self.drivers]
        if len(set(knobs)) != len(knobs):
            raise InvalidConfigError("driver knobs must be unique")
        if not (np.isfinite(self.noise_std) and self.noise_std >= 0.0):
            raise InvalidConfigError("noise_std must be non-negative")
        if not np.isfinite(self.intercept):
            raise InvalidConfigError("intercept must be finite")
        object.__setattr__(self, "drivers", tuple(self.drivers))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(d.feature for d in self.drivers)

    def describe(self) -> dict[str, object]:
        return {
            "intercept": self.intercept,
            "noise_std": self.noise_std,
            "drivers": [
                {"knob": d.knob, "feature": d.feature, "weight": d.weight}
                for d in self.drivers
            ],
        }


def default_relation(noise_std: float = 0.3) -> PlantedRelation:
    """The standard three-driver relation used by the planted benchmarks.

    The heaviest weight sits on the steady yaw spread, which is invisible to
    unsegmented features, so segmentation-on models should beat
    segmentation-off models on datasets generated from this relation.
    """
    return PlantedRelation(
        drivers=(
            Driver("steady_pitch_level", 1.0),
            Driver("moving_occupancy", 0.9),
            Driver("steady_yaw_spread", 1.2),
        ),
        noise_std=noise_std,
    )


@dataclass(frozen=True)
class PlantedSubject:
    """One generated recording with its ground truth."""

    series: PoseSeries
    labels: np.ndarray          # (n_poses - 1,) true state per frame
    target: float
    params: TraceParams
    latents: dict[str, float]   # knob -> latent in [-1, 1]


@dataclass(frozen=True)
class PlantedDataset:
    """A reproducible cohort of synthetic subjects."""

    subjects: tuple[PlantedSubject, ...]
    relation: PlantedRelation
    seed: int
    frame_rate_hz: float
    duration_s: float

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.series.recording_id for s in self.subjects)

    @property
    def targets(self) -> np.ndarray:
        return np.array([s.target for s in self.subjects])

    def describe(self) -> dict[str, object]:
        return {
            "n": self.n,
            "seed": self.seed,
            "frame_rate_hz": self.frame_rate_hz,
            "duration_s": self.duration_s,
            "relation": self.relation.describe(),
            "targets": self.targets.tolist(),
            "ids": list(self.ids),
        }


def _subject_params(
    index: int,
    latents: dict[str, float],
    rng: np.random.Generator,
    seed: int,
    frame_rate_hz: float,
    duration_s: float,
) -> TraceParams:
    """Map one subject's latents plus nuisance draws to trace parameters.

    Nuisance variation (decoy pitch offset, per-axis noise scales, damping
    and speed scales) decorrelates features that would otherwise ride along
    with the planted ones.
    """
    z_pitch = latents["steady_pitch_level"]
    z_occ = latents["moving_occupancy"]
    z_spread = latents["steady_yaw_spread"]
    decoy = rng.uniform(-_DECOY_SPAN, _DECOY_SPAN)
    f_pitch = rng.uniform(0.8, 1.2)
    f_roll = rng.uniform(0.8, 1.2)
    g_moving = rng.uniform(0.7, 1.3)
    s_steady = rng.uniform(0.8, 1.2)
    s_moving = rng.uniform(0.8, 1.2)
    cycle_scale = rng.uniform(_CYCLE_SCALE_LO, _CYCLE_SCALE_HI)

    occupancy = _OCC_BASE + _OCC_SPAN * z_occ
    root_odds = math.sqrt(occupancy / (1.0 - occupancy))
    p_sm = _P_SWITCH / cycle_scale * root_odds
    p_ms = _P_SWITCH / cycle_scale / root_odds
    yaw_damping = _YAW_DAMPING_BASE / (1.0 + _YAW_SPREAD_SPAN * z_spread) ** 2
    # Strong pitch damping keeps the return from the moving-state pitch
    # offset short, so the steady pools stay clean near every switch.
    steady = StateMotion(
        mean_speed=_STEADY_SPEED * s_steady,
        axis_std=(0.02 * f_pitch, 0.02, 0.02 * f_roll),
        axis_damping=(12.0, yaw_damping, 6.0),
        speed_jitter=0.03,
    )
    moving = StateMotion(
        mean_speed=_MOVING_SPEED * s_moving,
        axis_std=(0.05, 0.05, 0.05),
        axis_damping=(5.0 * g_moving, 5.0 * g_moving, 5.0 * g_moving),
        speed_jitter=0.04,
    )
    return TraceParams(
        recording_id=f"subj-{index:03d}",
        frame_rate_hz=frame_rate_hz,
        duration_s=duration_s,
        p_steady_to_moving=p_sm,
        p_moving_to_steady=p_ms,
        steady=steady,
        moving=moving,
        base_angles=(_PITCH_SPAN * z_pitch, 0.0, 0.0),
        moving_pitch_offset=decoy,
        noise_std=0.0,
        seed=(seed, index),
    )


def generate_dataset(
    n: int,
    relation: PlantedRelation | None = None,
    seed: int = 0,
    frame_rate_hz: float = 30.0,
    duration_s: float = 240.0,
) -> PlantedDataset:
    """Generate a cohort with the given planted relation.

    Args:
        n: number of subjects, at least 10.
        relation: planted target model; defaults to default_relation().
        seed: master seed; every subject derives its own stream from it.
        frame_rate_hz: sampling rate of every recording.
        duration_s: length of every recording.

    Returns:
        PlantedDataset, byte-reproducible for fixed arguments.
    """
    if n < 10:
        raise InvalidConfigError("a planted dataset needs at least 10 subjects")
    if relation is None:
        relation = default_relation()
    rng = np.random.default_rng(seed)
    weights = {d.knob: d.weight for d in relation.drivers}
    subjects = []
    for i in range(n):
        u = rng.random(len(_KNOB_ORDER))
        latents = {
            knob: 2.0 * u[k] - 1.0 for k, knob in enumerate(_KNOB_ORDER)
        }
        params = _subject_params(
            i, latents, rng, seed, frame_rate_hz, duration_s
        )
        noise = rng.standard_normal()
        raw = relation.intercept + sum(
            w * latents[knob] for knob, w in weights.items()
        )
        target = float(np.clip(raw + relation.noise_std * noise, TARGET_MIN, TARGET_MAX))
        series, labels = generate_trace(params)
        subjects.append(
            PlantedSubject(
                series=series,
                labels=labels,
                target=target,
                params=params,
                latents=latents,
            )
        )
    return PlantedDataset(
        subjects=tuple(subjects),
        relation=relation,
        seed=seed,
        frame_rate_hz=frame_rate_hz,
        duration_s=duration_s,
    )
