"""Two-state motion segmentation of head-speed series.

A one-dimensional two-component Gaussian mixture is fit to the angular
speed magnitude by expectation-maximization. The component with the larger
mean is the Moving state; frames are labeled by posterior responsibility,
ties going to Steady. Contiguous label runs become segments with positive
durations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDataError,
    InvalidInputError,
    TooShortError,
)
from .kinematics import KinematicSeries

MOVING = 1
STEADY = 0

LABEL_NAMES = {MOVING: "moving", STEADY: "steady"}
LABEL_CODES = {"moving": MOVING, "steady": STEADY}

VARIANCE_FLOOR = 1e-8
# Relative slack when checking that EM log-likelihood never decreases.
_LL_SLACK = 1e-9


def speed_magnitude(kin: KinematicSeries) -> np.ndarray:
    """Euclidean speed |w| per velocity frame, rad/s."""
    if kin.velocity.shape[0] == 0:
        raise TooShortError("kinematic series has no velocity samples")
    return np.sqrt(np.sum(kin.velocity * kin.velocity, axis=1))


@dataclass(frozen=True)
class GmmModel:
    """Fitted two-component 1-D Gaussian mixture.

    Components are stored in ascending order of mean, so index 1 is the
    Moving component. ll_history holds the log-likelihood after every EM
    iteration, starting with the value under the initial parameters.
    """

    weights: np.ndarray    # (2,), sums to 1
    means: np.ndarray      # (2,)
    variances: np.ndarray  # (2,), >= VARIANCE_FLOOR
    log_likelihood: float
    n_iter: int
    converged: bool
    seed: int
    ll_history: np.ndarray = field(repr=False)

    @property
    def moving_component(self) -> int:
        return int(np.argmax(self.means))


def _log_gauss(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def _log_resp(
    x: np.ndarray, weights: np.ndarray, means: np.ndarray, variances: np.ndarray
) -> tuple[np.ndarray, float]:
    """Per-sample log responsibilities (n, 2) and total log-likelihood."""
    lp = np.stack(
        [
            np.log(weights[k]) + _log_gauss(x, means[k], variances[k])
            for k in range(2)
        ],
        axis=1,
    )
    m = np.max(lp, axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(lp - m), axis=1))
    return lp - lse[:, None], float(np.sum(lse))


def fit_gmm(
    values: np.ndarray,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> GmmModel:
    """Fit a two-component 1-D Gaussian mixture to speed magnitudes by EM.

    Initialization is deterministic: component means start at the 25th and
    75th percentiles (falling back to min/max when those coincide), both
    variances start at the sample variance, weights at 0.5. The seed does
    not affect the fit; it is recorded so downstream artifacts can carry it.

    Args:
        values: 1-D array of speeds, finite and non-negative, >= 10 samples.
        seed: recorded provenance seed.
        tol: stop when log-likelihood improves by less than this.
        max_iter: EM iteration cap.

    Returns:
        GmmModel with components sorted by ascending mean.
    """
    x = np.ascontiguousarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("values must be a 1-D array")
    if x.size < 10:
        raise TooShortError(f"need at least 10 samples to fit a mixture, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0):
        raise InvalidInputError("speed values must be finite and non-negative")
    if np.ptp(x) == 0.0:
        raise DegenerateDataError("all speed values are identical")

    means = np.percentile(x, [25.0, 75.0]).astype(np.float64)
    if means[0] == means[1]:
        means = np.array([x.min(), x.max()], dtype=np.float64)
    shared_var = max(float(np.var(x)), VARIANCE_FLOOR)
    variances = np.array([shared_var, shared_var])
    weights = np.array([0.5, 0.5])

    _, ll = _log_resp(x, weights, means, variances)
    history = [ll]
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        log_r, _ = _log_resp(x, weights, means, variances)
        resp = np.exp(log_r)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        weights = nk / x.size
        means = (resp * x[:, None]).sum(axis=0) / nk
        diff = x[:, None] - means[None, :]
        variances = (resp * diff * diff).sum(axis=0) / nk
        variances = np.maximum(variances, VARIANCE_FLOOR)
        _, ll_new = _log_resp(x, weights, means, variances)
        if ll_new < ll - _LL_SLACK * max(1.0, abs(ll)):
            raise AssertionError(
                f"EM log-likelihood decreased: {ll} -> {ll_new} at iteration {n_iter}"
            )
        history.append(ll_new)
        improvement = ll_new - ll
        ll = ll_new
        if improvement < tol:
            converged = True
            break

    order = np.argsort(means, kind="stable")
    return GmmModel(
        weights=weights[order],
        means=means[order],
        variances=variances[order],
        log_likelihood=ll,
        n_iter=n_iter,
        converged=converged,
        seed=int(seed),
        ll_history=np.asarray(history),
    )


def label_frames(model: GmmModel, values: np.ndarray) -> np.ndarray:
    """Label each speed sample MOVING or STEADY by posterior responsibility.

    The component with the larger mean is Moving regardless of storage
    order. Equal posteriors go to Steady.
    """
    x = np.ascontiguousarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("values must be a non-empty 1-D array")
    if not np.all(np.isfinite(x)) or np.any(x < 0.0):
        raise InvalidInputError("speed values must be finite and non-negative")
    log_r, _ = _log_resp(x, model.weights, model.means, model.variances)
    mov = model.moving_component
    labels = np.where(log_r[:, mov] > log_r[:, 1 - mov], MOVING, STEADY)
    return labels.astype(np.int8)


@dataclass(frozen=True)
class Segment:
    """One maximal run of identically labeled frames."""

    label: int        # MOVING or STEADY
    start: int        # first frame index, inclusive
    end: int          # last frame index, inclusive
    start_time: float
    end_time: float

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time

    @property
    def n_frames(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class Segmentation:
    """Frame labels plus the segment tiling they induce."""

    labels: np.ndarray          # (n_frames,) int8
    times: np.ndarray           # (n_frames,) left-endpoint timestamps
    segments: tuple[Segment, ...]
    end_time: float             # right edge of the final frame interval

    @property
    def n_frames(self) -> int:
        return int(self.labels.size)

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def durations(self, label: int) -> np.ndarray:
        return np.array([s.duration for s in self.segments if s.label == label])


def smooth_labels(labels: np.ndarray, window: int) -> np.ndarray:
    """Majority-filter a binary label sequence with an odd window.

    The window shrinks at the edges. Ties go to STEADY, matching the
    posterior tie rule.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidInputError("smoothing window must be odd and positive")
    lab = np.asarray(labels, dtype=np.int8)
    if window == 1:
        return lab.copy()
    half = window // 2
    n = lab.size
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n, i + half + 1)
        votes = int(lab[lo:hi].sum())
        out[i] = MOVING if 2 * votes > hi - lo else STEADY
    return out


def extract_segments(
    labels: np.ndarray,
    times: np.ndarray,
    end_time: float | None = None,
    smooth_window: int | None = None,
) -> Segmentation:
    """Turn per-frame labels into a gap-free segment tiling.

    Frame i covers [times[i], times[i+1]); the final frame ends at
    end_time, which defaults to extrapolating the last inter-frame
    interval. Segment durations are therefore strictly positive.

    Args:
        labels: per-frame MOVING/STEADY codes.
        times: left-endpoint timestamps, strictly increasing, same length.
        end_time: right edge of the final frame, > times[-1].
        smooth_window: optional odd majority-filter width applied first.
    """
    lab = np.asarray(labels)
    t = np.asarray(times, dtype=np.float64)
    if lab.ndim != 1 or t.ndim != 1 or lab.size != t.size:
        raise InvalidInputError("labels and times must be 1-D arrays of equal length")
    if lab.size == 0:
        raise TooShortError("cannot segment an empty label series")
    if not np.all(np.isin(lab, (MOVING, STEADY))):
        raise InvalidInputError("labels must contain only moving/steady codes")
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("times must be finite")
    if t.size > 1 and not np.all(np.diff(t) > 0.0):
        raise InvalidInputError("times must be strictly increasing")
    if end_time is None:
        if t.size < 2:
            raise InvalidInputError(
                "end_time is required for a single-frame series"
            )
        end_time = float(t[-1] + (t[-1] - t[-2]))
    else:
        end_time = float(end_time)
        if not (np.isfinite(end_time) and end_time > t[-1]):
            raise InvalidInputError("end_time must lie beyond the last timestamp")

    lab = lab.astype(np.int8)
    if smooth_window is not None:
        lab = smooth_labels(lab, smooth_window)

    boundaries = np.flatnonzero(np.diff(lab) != 0)
    starts = np.concatenate(([0], boundaries + 1))
    ends = np.concatenate((boundaries, [lab.size - 1]))
    segments = []
    for s, e in zip(starts, ends):
        seg_end = float(t[e + 1]) if e + 1 < t.size else end_time
        segments.append(
            Segment(
                label=int(lab[s]),
                start=int(s),
                end=int(e),
                start_time=float(t[s]),
                end_time=seg_end,
            )
        )
    return Segmentation(
        labels=lab, times=t, segments=tuple(segments), end_time=end_time
    )


def segment_recording(
    kin: KinematicSeries,
    seed: int = 0,
    smooth_window: int | None = None,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> tuple[Segmentation, GmmModel]:
    """Full segmentation of one recording: speed -> GMM -> labels -> segments.

    The final frame interval ends at the recording's last pose timestamp,
    so segment durations tile the full recorded duration.
    """
    speeds = speed_magnitude(kin)
    model = fit_gmm(speeds, seed=seed, tol=tol, max_iter=max_iter)
    labels = label_frames(model, speeds)
    seg = extract_segments(
        labels,
        kin.t_velocity,
        end_time=float(kin.t[-1]),
        smooth_window=smooth_window,
    )
    return seg, model
