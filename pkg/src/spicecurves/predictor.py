"""Black-box prediction contract, baseline regressors and evaluation metrics.

A predictor maps a float feature matrix (columns in schema order,
categorical features as integer level codes) to one prediction per row.
"""

from __future__ import annotations

import json
import shlex
import logging
import math
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset

logger = logging.getLogger(__name__)


class PredictorError(RuntimeError):
    """Raised when a predictor cannot be fitted or fails to predict."""


class ExternalPredictorError(PredictorError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(f"{message}; raw reply: {raw!r}")
        self.raw = raw


class Predictor(ABC):
    name: str = "predictor"

    @abstractmethod
    def predict(self, X: np.ndarray) -> np.ndarray:
        """Predictions for the rows of ``X``."""

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.predict(X)


class ConstantPredictor(Predictor):
    def __init__(self, value: float):
        self.value = float(value)
        self.name = f"constant({self.value:g})"

    def predict(self, X):
        return np.full(len(X), self.value)


class KNNPredictor(Predictor):
    """Mean response of the ``k`` nearest training rows.

    Numeric features are standardized by the training mean and standard
    deviation; each categorical mismatch adds 1 to the squared distance.
    Equidistant neighbours are taken in training-row order.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, categorical: Sequence[bool], k: int = 10):
        self.k = int(k)
        self.name = f"knn(k={self.k})"
        self.categorical = np.asarray(categorical, dtype=bool)
        numeric = ~self.categorical
        self.mean = X[:, numeric].mean(axis=0)
        sd = X[:, numeric].std(axis=0)
        self.sd = np.where(sd > 0, sd, 1.0)
        self.Z = (X[:, numeric] - self.mean) / self.sd
        self.C = X[:, self.categorical]
        self.y = np.asarray(y, dtype=float)

    def _sq_distances(self, X: np.ndarray) -> np.ndarray:
        Z = (X[:, ~self.categorical] - self.mean) / self.sd
        d2 = np.zeros((len(X), len(self.Z)))
        for j in range(Z.shape[1]):
            d2 += (Z[:, j, None] - self.Z[None, :, j]) ** 2
        for j in range(self.C.shape[1]):
            d2 += X[:, self.categorical][:, j, None] != self.C[None, :, j]
        return d2

    def _nearest(self, d2: np.ndarray) -> np.ndarray:
        """Indices of the k smallest entries per row, ties filled in column order."""
        k = self.k
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1 : k]
        closer = d2 < kth
        tied = d2 == kth
        need = k - closer.sum(axis=1, keepdims=True)
        chosen = closer | (tied & (np.cumsum(tied, axis=1) <= need))
        return np.nonzero(chosen)[1].reshape(len(d2), k)

    def predict(self, X, chunk: int = 512):
        X = np.asarray(X, dtype=float)
        out = np.empty(len(X))
        for start in range(0, len(X), chunk):
            d2 = self._sq_distances(X[start : start + chunk])
            out[start : start + chunk] = self.y[self._nearest(d2)].mean(axis=1)
        return out


class LinearPredictor(Predictor):
    """Ordinary least squares on numeric features plus one-hot categoricals."""

    def __init__(self, intercept: float, coef: np.ndarray, levels: Mapping[int, int]):
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)
        self.levels = dict(levels)
        self.name = "linear"

    @staticmethod
    def design(X: np.ndarray, levels: Mapping[int, int]) -> np.ndarray:
        """Numeric columns as-is; categorical column ``j`` expands to dummies for levels 1..L-1."""
        parts = []
        for j in range(X.shape[1]):
            if j in levels:
                codes = X[:, j].astype(int)
                parts.append((codes[:, None] == np.arange(1, levels[j])[None, :]).astype(float))
            else:
                parts.append(X[:, j : j + 1])
        return np.hstack(parts)

    def predict(self, X):
        return self.intercept + self.design(np.asarray(X, dtype=float), self.levels) @ self.coef


class ExternalPredictor(Predictor):
    """Serves predictions from a child process over a JSON line protocol.

    Each request is one line ``{"rows": [[...], ...]}`` on the child's stdin;
    the child answers with one line ``{"predictions": [...]}``. Categorical
    values are sent as their level strings. Requests are serialized.
    """

    def __init__(self, command: Sequence[str] | str, categorical_levels: Mapping[int, Sequence[str]] | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.categorical_levels = {int(k): list(v) for k, v in (categorical_levels or {}).items()}
        self.name = f"external({' '.join(self.command)})"
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ExternalPredictorError(f"cannot start {self.command!r}: {exc}") from exc

    def _encode(self, X: np.ndarray) -> str:
        rows = []
        for x in X:
            row = []
            for j, v in enumerate(x):
                if j in self.categorical_levels:
                    row.append(self.categorical_levels[j][int(v)])
                else:
                    row.append(float(v))
            rows.append(row)
        return json.dumps({"rows": rows})

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        request = self._encode(X)
        with self._lock:
            if self._proc.poll() is not None:
                raise ExternalPredictorError(f"process exited with code {self._proc.returncode}")
            try:
                self._proc.stdin.write(request + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ExternalPredictorError(f"cannot write request: {exc}") from exc
            raw = self._proc.stdout.readline()
        if not raw:
            code = self._proc.poll()
            raise ExternalPredictorError(f"process closed its output (exit code {code})", raw)
        try:
            reply = json.loads(raw)
            preds = reply["predictions"]
            values = np.array([float(p) for p in preds], dtype=float)
        except (ValueError, KeyError, TypeError) as exc:
            raise ExternalPredictorError(f"malformed reply ({exc})", raw) from None
        if len(values) != len(X):
            raise ExternalPredictorError(f"length mismatch: sent {len(X)} rows, got {len(values)} predictions", raw)
        return values

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._proc.stdout.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def knn_fit(train: Dataset, k: int = 10) -> KNNPredictor:
    if train.n == 0:
        raise PredictorError("empty training set")
    if not 1 <= k <= train.n:
        raise PredictorError(f"k must lie in [1, {train.n}], got {k}")
    categorical = [f.kind == "categorical" for f in train.schema.features]
    return KNNPredictor(train.feature_matrix(), train.response, categorical, k)


def linear_fit(train: Dataset) -> LinearPredictor:
    levels = {j: len(lv) for j, lv in train.categorical_levels().items()}
    A = LinearPredictor.design(train.feature_matrix(), levels)
    A = np.hstack([np.ones((len(A), 1)), A])
    if train.n <= A.shape[1]:
        raise PredictorError(f"need more than {A.shape[1]} rows to fit {A.shape[1]} coefficients")
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise PredictorError("singular design matrix")
    beta, *_ = np.linalg.lstsq(A, train.response, rcond=None)
    return LinearPredictor(beta[0], beta[1:], levels)


def external_predictor(command, categorical_levels=None) -> ExternalPredictor:
    return ExternalPredictor(command, categorical_levels)


@dataclass(frozen=True)
class Metrics:
    rmse: float
    r2: float
    mae_orig: float
    mape_orig: float
    r2_defined: bool = True

    def as_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "r2": self.r2 if self.r2_defined else None,
            "mae_orig": self.mae_orig,
            "mape_orig": self.mape_orig,
        }


def evaluate(truth, pred, response_is_log: bool = True) -> Metrics:
    """RMSE and R² on the given scale; MAE and MAPE (percent) on the original scale.

    With ``response_is_log`` both vectors are exponentiated before the
    original-scale errors. Rows whose original-scale truth is zero are left
    out of MAPE. A constant ``truth`` leaves R² undefined: it is returned as
    NaN with ``r2_defined=False``.
    """
    truth = np.asarray(truth, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError("truth and pred must be 1-d arrays of equal length")
    if len(truth) < 2:
        raise ValueError("need at least 2 values to evaluate")
    resid = truth - pred
    rmse = math.sqrt(float(np.mean(resid**2)))
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    r2_defined = ss_tot > 0
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if r2_defined else math.nan
    t_orig, p_orig = (np.exp(truth), np.exp(pred)) if response_is_log else (truth, pred)
    abs_err = np.abs(t_orig - p_orig)
    mae = float(np.mean(abs_err))
    nonzero = t_orig != 0
    if not nonzero.all():
        logger.info("MAPE: excluded %d row(s) with zero truth", int((~nonzero).sum()))
    mape = 100.0 * float(np.mean(abs_err[nonzero] / np.abs(t_orig[nonzero]))) if nonzero.any() else math.nan
    return Metrics(rmse, r2, mae, mape, r2_defined)
