"""Signal conditioning cascade: scaling, intensity normalization, duplication.

Three sklearn-style transformers applied in a fixed order turn statistically
diverse sensor inputs into the regularized form the core spiking network is
tuned for. All randomness is drawn once at fit time and frozen, so a fitted
cascade is an immutable, serializable state that conditions training and test
data identically across runs.
"""
from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import as_matrix, as_vector, check_interval, spawn_seeds

__all__ = [
    "SensorScaler",
    "IntensityNormalizer",
    "HeterogeneousDuplicator",
    "ConditioningCascade",
    "goodness_of_preprocessing",
    "STAGES",
]

STAGES = ("raw", "scaled", "normalized", "duplicated")


def goodness_of_preprocessing(counts) -> float:
    """Score the uniformity of interneuron recruitment across samples.

    Given the integer spike counts recruited by each presented sample,
    returns ``min(min(v), 1) * sum_i(v_i / max(v)) / len(v)``. The first
    factor zeroes the score when any sample fails to recruit a single
    interneuron; the second is the mean recruitment level relative to the
    most strongly recruiting sample. The result lies in [0, 1], reaching 1
    only when all counts are equal and nonzero.
    """
    v = [int(c) for c in np.asarray(counts).ravel()]
    if not v:
        raise ValueError("empty recruitment vector")
    if any(c < 0 for c in v):
        raise ValueError("recruitment counts must be non-negative")
    vmax = max(v)
    if min(v) == 0 or vmax == 0:
        # The no-spike penalty forces the product to zero before the
        # division by max(v) is ever needed.
        return 0.0
    total = 0.0
    for c in v:
        total += c / vmax
    return total / len(v)


class SensorScaler(BaseEstimator, TransformerMixin):
    """Per-sensor range scaling with a frozen random modulation vector.

    ``fit`` estimates each sensor's maximum from a validation sample and
    draws a per-sensor modulation factor uniformly from [0.5, 1.0] (ones
    when ``heterogeneous`` is off). ``transform`` divides by the maxima and
    multiplies by the modulation; outputs may exceed the modulation value
    because test data can exceed the validation maxima.

    Parameters
    ----------
    heterogeneous : draw the random modulation vector; otherwise use ones.
    fixed_max : known per-sensor maximum (scalar or length-D array) used
        instead of validation estimates, for inputs with a known range.
    epsilon : floor applied to the estimated maxima.
    seed : seed for the modulation draw.
    """

    def __init__(self, heterogeneous: bool = True, fixed_max=None,
                 epsilon: float = 1e-9, seed: int = 0):
        self.heterogeneous = heterogeneous
        self.fixed_max = fixed_max
        self.epsilon = epsilon
        self.seed = seed

    def fit(self, X, y=None):
        X = as_matrix(X, name="validation")
        d = X.shape[1]
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.fixed_max is not None:
            fixed = np.broadcast_to(np.asarray(self.fixed_max, dtype=np.float64), (d,)).copy()
            if (fixed <= 0).any():
                raise ValueError("fixed_max entries must be > 0")
            self.per_sensor_max_ = fixed
            self.flat_sensors_ = np.array([], dtype=np.intp)
        else:
            maxima = X.max(axis=0)
            flat = np.nonzero(maxima <= self.epsilon)[0]
            if flat.size:
                warnings.warn(
                    f"{flat.size} sensor(s) constantly ~zero in validation; "
                    f"scaling floor {self.epsilon} applied", stacklevel=2)
            self.per_sensor_max_ = np.maximum(maxima, self.epsilon)
            self.flat_sensors_ = flat
        rng = np.random.default_rng(self.seed)
        if self.heterogeneous:
            self.v_uni_ = rng.uniform(0.5, 1.0, size=d)
        else:
            self.v_uni_ = np.ones(d)
        self.n_features_in_ = d
        return self

    def transform(self, X):
        self._check_fitted()
        X = as_matrix(X, n_features=self.n_features_in_)
        return (X / self.per_sensor_max_) * self.v_uni_

    def _check_fitted(self):
        if not hasattr(self, "per_sensor_max_"):
            raise NotFittedError("SensorScaler is not fitted")


class IntensityNormalizer(BaseEstimator, TransformerMixin):
    """Divisive normalization of each sample to a common mean activation.

    Each row is rescaled so its mean equals ``target_mean``, preserving
    relative proportions exactly. Rows whose mean does not exceed
    ``epsilon`` are returned unchanged (and counted in a warning): an
    all-zero input correctly yields zero recruitment downstream.
    """

    def __init__(self, target_mean: float = 0.4, epsilon: float = 1e-9):
        self.target_mean = target_mean
        self.epsilon = epsilon

    def fit(self, X=None, y=None):
        if self.target_mean <= 0:
            raise ValueError("target_mean must be > 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        return self

    def transform(self, X):
        X = as_matrix(X)
        if (X < 0).any():
            raise ValueError("intensity normalization expects non-negative inputs")
        means = X.mean(axis=1)
        silent = means <= self.epsilon
        if silent.any():
            warnings.warn(f"{int(silent.sum())} all-zero sample(s) left unnormalized", stacklevel=2)
        factors = np.where(silent, 1.0, self.target_mean / np.maximum(means, self.epsilon))
        return X * factors[:, None]


class HeterogeneousDuplicator(BaseEstimator, TransformerMixin):
    """Fan each sensor out over gain-jittered copies and random projections.

    Every input sensor drives ``m`` feedforward units with gains drawn from
    ``gain_range`` at fit time; each of the sensor's ``n`` output channels
    averages a random subset of those units (edges kept with probability
    ``density``, resampled so no channel is left isolated). Output length is
    D*n, ordered channel-major within each sensor block. The transform is
    linear in the input with frozen coefficients.
    """

    def __init__(self, m: int = 5, n: int = 5, density: float = 0.7,
                 gain_range=(0.7, 1.3), heterogeneous: bool = True, seed: int = 0):
        self.m = m
        self.n = n
        self.density = density
        self.gain_range = gain_range
        self.heterogeneous = heterogeneous
        self.seed = seed

    def fit(self, X, y=None):
        X = as_matrix(X)
        d = X.shape[1]
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be >= 1")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        lo, hi = check_interval(self.gain_range, "gain_range", lo_gt=0.0)
        rng = np.random.default_rng(self.seed)
        if self.heterogeneous:
            self.gains_ = rng.uniform(lo, hi, size=(d, self.m))
        else:
            self.gains_ = np.full((d, self.m), (lo + hi) / 2.0)
        projection = rng.random((d, self.n, self.m)) < self.density
        # Resample any output channel with no incoming edge; iteration in
        # fixed (sensor, channel) order keeps the draw deterministic.
        for s in range(d):
            for i in range(self.n):
                while not projection[s, i].any():
                    projection[s, i] = rng.random(self.m) < self.density
        self.projection_ = projection
        counts = projection.sum(axis=2)
        self.coefficients_ = (self.gains_[:, None, :] * projection).sum(axis=2) / counts
        self.n_features_in_ = d
        return self

    def transform(self, X):
        if not hasattr(self, "coefficients_"):
            raise NotFittedError("HeterogeneousDuplicator is not fitted")
        X = as_matrix(X, n_features=self.n_features_in_)
        # out[:, s*n + i] = X[:, s] * coefficients_[s, i]
        expanded = X[:, :, None] * self.coefficients_[None, :, :]
        return expanded.reshape(X.shape[0], self.n_features_in_ * self.n)

    @property
    def output_dim_(self) -> int:
        return self.n_features_in_ * self.n


class ConditioningCascade(BaseEstimator, TransformerMixin):
    """The full conditioning pipeline, applicable up to any stage.

    Stages compose cumulatively in the fixed order raw -> scaled ->
    normalized -> duplicated, where "raw" only applies ``raw_scale`` (an
    ablation mode for feeding unconditioned data to the network). Fitting
    freezes all randomness; the fitted state round-trips exactly through
    :meth:`to_dict`/:meth:`from_dict` and :meth:`save`/:meth:`load`.
    """

    def __init__(self, stage: str = "duplicated", raw_scale: float = 1.0,
                 heterogeneous: bool = True, target_mean: float = 0.4,
                 fixed_sensor_max=None, m: int = 5, n: int = 5,
                 density: float = 0.7, gain_range=(0.7, 1.3),
                 epsilon: float = 1e-9, seed: int = 0):
        self.stage = stage
        self.raw_scale = raw_scale
        self.heterogeneous = heterogeneous
        self.target_mean = target_mean
        self.fixed_sensor_max = fixed_sensor_max
        self.m = m
        self.n = n
        self.density = density
        self.gain_range = gain_range
        self.epsilon = epsilon
        self.seed = seed

    def fit(self, X, y=None):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        X = as_matrix(X, name="validation")
        scaler_seed, dup_seed = spawn_seeds(self.seed, 2)
        self.scaler_ = SensorScaler(
            heterogeneous=self.heterogeneous, fixed_max=self.fixed_sensor_max,
            epsilon=self.epsilon, seed=scaler_seed).fit(X)
        self.normalizer_ = IntensityNormalizer(
            target_mean=self.target_mean, epsilon=self.epsilon).fit()
        self.duplicator_ = HeterogeneousDuplicator(
            m=self.m, n=self.n, density=self.density, gain_range=self.gain_range,
            heterogeneous=self.heterogeneous, seed=dup_seed).fit(X)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "scaler_"):
            raise NotFittedError("ConditioningCascade is not fitted")

    def transform(self, X, stage: str | None = None):
        self._check_fitted()
        stage = self.stage if stage is None else stage
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
        X = as_matrix(X, n_features=self.n_features_in_)
        if stage == "raw":
            return X * self.raw_scale
        out = self.scaler_.transform(X)
        if stage == "scaled":
            return out
        out = self.normalizer_.transform(out)
        if stage == "normalized":
            return out
        return self.duplicator_.transform(out)

    def transform_sample(self, x, stage: str | None = None) -> np.ndarray:
        """Condition a single feature vector."""
        x = as_vector(x)
        return self.transform(x[None, :], stage=stage)[0]

    def output_dim(self, stage: str | None = None) -> int:
        self._check_fitted()
        stage = self.stage if stage is None else stage
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        return self.n_features_in_ * self.n if stage == "duplicated" else self.n_features_in_

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "schema": "eplff-conditioning/1",
            "params": {
                "stage": self.stage,
                "raw_scale": self.raw_scale,
                "heterogeneous": self.heterogeneous,
                "target_mean": self.target_mean,
                "fixed_sensor_max": self.fixed_sensor_max,
                "m": self.m,
                "n": self.n,
                "density": self.density,
                "gain_range": list(self.gain_range),
                "epsilon": self.epsilon,
                "seed": self.seed,
            },
            "dimension": self.n_features_in_,
            "per_sensor_max": self.scaler_.per_sensor_max_.tolist(),
            "v_uni": self.scaler_.v_uni_.tolist(),
            "flat_sensors": self.scaler_.flat_sensors_.tolist(),
            "gains": self.duplicator_.gains_.tolist(),
            "projection": self.duplicator_.projection_.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ConditioningCascade":
        if payload.get("schema") != "eplff-conditioning/1":
            raise ValueError(f"unsupported conditioning snapshot: {payload.get('schema')!r}")
        params = dict(payload["params"])
        params["gain_range"] = tuple(params["gain_range"])
        obj = cls(**params)
        d = int(payload["dimension"])
        obj.n_features_in_ = d

        scaler_seed, dup_seed = spawn_seeds(obj.seed, 2)
        scaler = SensorScaler(heterogeneous=obj.heterogeneous, fixed_max=obj.fixed_sensor_max,
                              epsilon=obj.epsilon, seed=scaler_seed)
        scaler.per_sensor_max_ = np.array(payload["per_sensor_max"], dtype=np.float64)
        scaler.v_uni_ = np.array(payload["v_uni"], dtype=np.float64)
        scaler.flat_sensors_ = np.array(payload["flat_sensors"], dtype=np.intp)
        scaler.n_features_in_ = d
        obj.scaler_ = scaler

        obj.normalizer_ = IntensityNormalizer(target_mean=obj.target_mean, epsilon=obj.epsilon).fit()

        dup = HeterogeneousDuplicator(m=obj.m, n=obj.n, density=obj.density,
                                      gain_range=obj.gain_range,
                                      heterogeneous=obj.heterogeneous, seed=dup_seed)
        dup.gains_ = np.array(payload["gains"], dtype=np.float64)
        dup.projection_ = np.array(payload["projection"]).astype(bool)
        counts = dup.projection_.sum(axis=2)
        dup.coefficients_ = (dup.gains_[:, None, :] * dup.projection_).sum(axis=2) / counts
        dup.n_features_in_ = d
        obj.duplicator_ = dup
        return obj

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ConditioningCascade":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def condition(x, stage: str, state: ConditioningCascade) -> np.ndarray:
    """Condition one sample up to ``stage`` with a fitted cascade."""
    return state.transform_sample(x, stage=stage)
