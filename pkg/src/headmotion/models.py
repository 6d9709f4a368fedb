"""Penalized linear regression on standardized features.

All families minimize variants of

    (1/(2n)) ||y - X b||^2 + alpha * l1 * ||b||_1 + (alpha * l2 / 2) * ||b||^2

on features standardized to zero mean and unit population variance, with a
centered target; the intercept is never penalized. Weight pairs (l1, l2):
lasso (1, 0), elasticnet (l1_ratio, 1 - l1_ratio), ridge (0, 1) solved in
closed form, ols unpenalized via minimum-norm least squares. Lasso and
elastic net use cyclic coordinate descent with soft-threshold updates.

Zero-variance columns keep a stored scale of 1 and a coefficient of exactly
zero. Fitting is deterministic: identical inputs give identical coefficients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _cd
from .errors import (
    ConvergenceWarning,
    DegenerateDataError,
    InvalidConfigError,
    InvalidInputError,
    SchemaMismatchError,
    TooShortError,
)
from .matrix import FeatureMatrix

FAMILIES = ("ols", "ridge", "lasso", "elasticnet")

DEFAULT_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model choice: family, penalty strength, l1/l2 mix."""

    family: str
    alpha: float = 0.0
    l1_ratio: float | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidConfigError(
                f"unknown model family {self.family!r}; expected one of {FAMILIES}"
            )
        if not (np.isfinite(self.alpha) and self.alpha >= 0.0):
            raise InvalidConfigError("alpha must be finite and >= 0")
        if self.family == "ols" and self.alpha != 0.0:
            raise InvalidConfigError("ols takes no penalty; alpha must be 0")
        if self.family == "elasticnet":
            if self.l1_ratio is None or not (0.0 <= self.l1_ratio <= 1.0):
                raise InvalidConfigError("elasticnet requires l1_ratio in [0, 1]")
        elif self.l1_ratio is not None:
            raise InvalidConfigError(f"{self.family} does not take l1_ratio")

    def penalties(self) -> tuple[int, float, float]:
        """(family code for the kernels, l1 weight, l2 weight)."""
        if self.family == "ols":
            return _cd.FAMILY_OLS, 0.0, 0.0
        if self.family == "ridge":
            return _cd.FAMILY_RIDGE, 0.0, self.alpha
        if self.family == "lasso":
            return _cd.FAMILY_CD, self.alpha, 0.0
        return (
            _cd.FAMILY_CD,
            self.alpha * self.l1_ratio,
            self.alpha * (1.0 - self.l1_ratio),
        )

    def to_dict(self) -> dict[str, object]:
        return {"family": self.family, "alpha": self.alpha, "l1_ratio": self.l1_ratio}

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        return ModelSpec(
            family=str(d["family"]),
            alpha=float(d.get("alpha", 0.0) or 0.0),
            l1_ratio=None if d.get("l1_ratio") is None else float(d["l1_ratio"]),
        )


@dataclass(frozen=True)
class FittedModel:
    """Coefficients plus the standardization needed to apply them.

    Predictions are intercept + sum_j coef[j] * (x_j - x_mean[j]) / x_std[j].
    """

    spec: ModelSpec
    feature_names: tuple[str, ...]
    coef: np.ndarray      # (p,) on the standardized scale
    intercept: float      # training-target mean
    x_mean: np.ndarray    # (p,)
    x_std: np.ndarray     # (p,), 1.0 where the training column had no variance
    n_sweeps: int
    converged: bool
    final_objective: float
    objective_history: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.coef))


def _as_values(
    x: FeatureMatrix | np.ndarray, feature_names: Sequence[str] | None
) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(x, FeatureMatrix):
        return x.values, x.columns
    values = np.ascontiguousarray(x, dtype=np.float64)
    if values.ndim != 2:
        raise InvalidInputError("feature values must be a 2-D array")
    if feature_names is None:
        names = tuple(f"x{j}" for j in range(values.shape[1]))
    else:
        names = tuple(feature_names)
        if len(names) != values.shape[1]:
            raise InvalidInputError("feature_names length must match columns")
    return values, names


def fit(
    spec: ModelSpec,
    x: FeatureMatrix | np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str] | None = None,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> FittedModel:
    """Fit one model on (x, y).

    Args:
        spec: model family and penalties.
        x: (n, p) features; p may be 0, giving an intercept-only model.
        y: (n,) target, finite.
        feature_names: names for a plain array input.
        tol: coordinate-descent stopping tolerance (max coef change).
        max_sweeps: coordinate-descent sweep cap; hitting it emits a
            ConvergenceWarning instead of raising.

    Returns:
        FittedModel.
    """
    values, names = _as_values(x, feature_names)
    yv = np.ascontiguousarray(y, dtype=np.float64)
    if yv.ndim != 1 or yv.size != values.shape[0]:
        raise InvalidInputError("y must be 1-D with one entry per row of x")
    if values.shape[0] == 0:
        raise InvalidInputError("cannot fit on an empty matrix")
    if values.shape[0] < 2:
        raise TooShortError("need at least 2 rows to fit")
    if not np.all(np.isfinite(yv)) or not np.all(np.isfinite(values)):
        raise InvalidInputError("features and target must be finite")
    if np.ptp(yv) == 0.0 and spec.family != "ols":
        raise DegenerateDataError(
            "target is constant; only ols accepts a constant target"
        )

    n, p = values.shape
    ymean = float(np.mean(yv))
    yc = yv - ymean
    mu = values.mean(axis=0)
    sd = np.sqrt(np.mean((values - mu) ** 2, axis=0))
    constant = sd == 0.0
    sd = np.where(constant, 1.0, sd)
    xs = (values - mu) / sd

    history: np.ndarray | None = None
    n_sweeps = 0
    converged = True
    if p == 0:
        beta = np.zeros(0)
    else:
        code, l1, l2 = spec.penalties()
        if code == _cd.FAMILY_OLS:
            beta = np.linalg.lstsq(xs, yc, rcond=None)[0]
        elif code == _cd.FAMILY_RIDGE:
            g = xs.T @ xs / n + l2 * np.eye(p)
            beta = np.linalg.solve(g, xs.T @ yc / n)
        else:
            beta, n_sweeps, converged, history = _cd.cd_solve(
                xs, yc, l1, l2, tol, max_sweeps, True
            )
            drift = np.diff(history)
            slack = 1e-12 * np.maximum(1.0, np.abs(history[:-1]))
            if np.any(drift > slack):
                raise AssertionError(
                    "coordinate-descent objective increased between sweeps"
                )
            if not converged:
                warnings.warn(
                    f"coordinate descent stopped at {max_sweeps} sweeps "
                    f"without reaching tol={tol}",
                    ConvergenceWarning,
                    stacklevel=2,
                )
        beta = np.asarray(beta, dtype=np.float64)
        beta[constant] = 0.0

    resid = yc - xs @ beta if p else yc
    _, l1, l2 = spec.penalties()
    objective = float(
        0.5 * np.mean(resid**2)
        + l1 * np.sum(np.abs(beta))
        + 0.5 * l2 * np.sum(beta**2)
    )
    return FittedModel(
        spec=spec,
        feature_names=names,
        coef=beta,
        intercept=ymean,
        x_mean=np.asarray(mu, dtype=np.float64),
        x_std=np.asarray(sd, dtype=np.float64),
        n_sweeps=int(n_sweeps),
        converged=bool(converged),
        final_objective=objective,
        objective_history=history,
    )


def predict(
    model: FittedModel,
    x: FeatureMatrix | np.ndarray,
    feature_names: Sequence[str] | None = None,
) -> np.ndarray:
    """Apply a fitted model; columns are matched to the training schema by name."""
    if isinstance(x, FeatureMatrix):
        values = x.select_columns(model.feature_names).values
    else:
        values = np.ascontiguousarray(x, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidInputError("feature values must be a 2-D array")
        names = (
            tuple(feature_names)
            if feature_names is not None
            else model.feature_names
        )
        if names != model.feature_names:
            raise SchemaMismatchError(
                "feature names do not match the training schema"
            )
        if values.shape[1] != len(model.feature_names):
            raise SchemaMismatchError(
                f"expected {len(model.feature_names)} columns, got {values.shape[1]}"
            )
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("features must be finite")
    if len(model.feature_names) == 0:
        return np.full(values.shape[0], model.intercept)
    xs = (values - model.x_mean) / model.x_std
    return model.intercept + xs @ model.coef
