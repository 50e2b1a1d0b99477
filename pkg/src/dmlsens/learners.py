"""Pluggable nuisance learners with a uniform fit/predict contract.

Three built-in families: ridge regression, histogram gradient-boosted trees
and penalised logistic regression. Internals delegate to scikit-learn;
determinism is guaranteed given (data, config, seed). Additional families
can be registered via :func:`register_family`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from sklearn.ensemble import (
    HistGradientBoostingClassifier,
    HistGradientBoostingRegressor,
)
from sklearn.linear_model import LogisticRegression, Ridge

from .errors import (
    DegenerateInput,
    InvalidConfig,
    InvalidEps,
    InvalidHyperparameter,
    NonFiniteValue,
)

RIDGE = "ridge"
BOOSTED_TREES = "boosted_trees"
LOGISTIC = "logistic"

# probabilities from fitted classifiers are floored away from {0, 1} so that
# downstream odds and log-loss computations stay finite
_PROB_FLOOR = 1e-12


def clip_probability(p, eps: float):
    """Clamp probabilities into [eps, 1 - eps]; scalar in, scalar out."""
    if not (0.0 < eps < 0.5):
        raise InvalidEps(f"eps must lie strictly in (0, 0.5), got {eps}")
    clipped = np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)
    if np.isscalar(p) or getattr(p, "ndim", 0) == 0:
        return float(clipped)
    return clipped


_HYPER_SPECS: dict[str, dict[str, tuple[float, Callable[[float], bool]]]] = {
    RIDGE: {"alpha": (1.0, lambda v: v >= 0)},
    BOOSTED_TREES: {
        "n_trees": (200, lambda v: v >= 1 and float(v).is_integer()),
        "depth": (3, lambda v: v >= 1 and float(v).is_integer()),
        "learning_rate": (0.1, lambda v: 0.0 < v <= 1.0),
        "min_leaf": (20, lambda v: v >= 1 and float(v).is_integer()),
    },
    LOGISTIC: {"penalty": (1e-6, lambda v: v >= 0)},
}
_REGRESSOR_BUILDERS: dict[str, Callable] = {}
_CLASSIFIER_BUILDERS: dict[str, Callable] = {}


def register_family(name, hyperparameters, build_regressor=None, build_classifier=None):
    """Register a learner family.

    ``hyperparameters`` maps names to (default, validator). The builders take
    ``(resolved_params, seed)`` and return an unfitted sklearn-style model.
    """
    if build_regressor is None and build_classifier is None:
        raise InvalidConfig("a registered family needs at least one builder")
    _HYPER_SPECS[name] = dict(hyperparameters)
    if build_regressor is not None:
        _REGRESSOR_BUILDERS[name] = build_regressor
    if build_classifier is not None:
        _CLASSIFIER_BUILDERS[name] = build_classifier


@dataclass(frozen=True)
class LearnerConfig:
    """Learner family plus validated family-specific hyperparameters."""

    family: str
    params: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in _HYPER_SPECS:
            raise InvalidHyperparameter(
                f"unknown learner family {self.family!r}; expected one of {sorted(_HYPER_SPECS)}"
            )
        spec = _HYPER_SPECS[self.family]
        unknown = set(self.params) - set(spec)
        if unknown:
            raise InvalidHyperparameter(
                f"unknown hyperparameters for {self.family}: {sorted(unknown)}"
            )
        for key, value in self.params.items():
            _, ok = spec[key]
            if not np.isfinite(value) or not ok(float(value)):
                raise InvalidHyperparameter(f"{self.family}.{key}={value} outside its valid range")
        object.__setattr__(self, "params", dict(self.params))

    def resolved(self) -> dict[str, float]:
        """Hyperparameters with family defaults filled in."""
        out = {k: default for k, (default, _) in _HYPER_SPECS[self.family].items()}
        out.update(self.params)
        return out


class FittedRegressor:
    """Opaque fitted regression model; ``predict`` is pure."""

    def __init__(self, model):
        self._model = model

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        return np.asarray(self._model.predict(x), dtype=float)


class FittedClassifier:
    """Opaque fitted probabilistic classifier; outputs lie strictly in (0, 1)."""

    def __init__(self, model):
        self._model = model

    def predict_proba(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if hasattr(self._model, "predict_proba"):
            p = np.asarray(self._model.predict_proba(x)[:, 1], dtype=float)
        else:
            p = np.asarray(self._model.predict(x), dtype=float)
        return np.clip(p, _PROB_FLOOR, 1.0 - _PROB_FLOOR)


class _ConstantClassifier:
    def __init__(self, rate: float):
        self.rate = rate

    def predict(self, x):
        return np.full(np.asarray(x).shape[0], self.rate)


def _check_training_input(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise DegenerateInput(f"training matrix has shape {x.shape}")
    if x.shape[0] < 2:
        raise DegenerateInput(f"need at least 2 training rows, got {x.shape[0]}")
    if y.shape != (x.shape[0],):
        raise DegenerateInput(f"target length {y.shape} does not match {x.shape[0]} rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteValue("training data contains NaN or infinite values")
    return x, y


def _boosted_kwargs(hp: dict[str, float], seed: int) -> dict:
    return dict(
        max_iter=int(hp["n_trees"]),
        max_depth=int(hp["depth"]),
        learning_rate=float(hp["learning_rate"]),
        min_samples_leaf=int(hp["min_leaf"]),
        max_bins=255,
        early_stopping=False,
        random_state=seed,
    )


def _build_regressor(cfg: LearnerConfig):
    hp = cfg.resolved()
    if cfg.family == RIDGE:
        return Ridge(alpha=float(hp["alpha"]))
    if cfg.family == BOOSTED_TREES:
        return HistGradientBoostingRegressor(**_boosted_kwargs(hp, cfg.seed))
    if cfg.family in _REGRESSOR_BUILDERS:
        return _REGRESSOR_BUILDERS[cfg.family](hp, cfg.seed)
    raise InvalidHyperparameter(f"{cfg.family} is not a regression family")


def _build_classifier(cfg: LearnerConfig):
    hp = cfg.resolved()
    if cfg.family == LOGISTIC:
        penalty = float(hp["penalty"])
        if penalty == 0.0:
            return LogisticRegression(penalty=None, solver="lbfgs", max_iter=2000)
        return LogisticRegression(C=1.0 / penalty, solver="lbfgs", max_iter=2000)
    if cfg.family == BOOSTED_TREES:
        return HistGradientBoostingClassifier(**_boosted_kwargs(hp, cfg.seed))
    if cfg.family == RIDGE:
        # linear probability model, clipped into (0, 1) at prediction time
        return Ridge(alpha=float(hp["alpha"]))
    if cfg.family in _CLASSIFIER_BUILDERS:
        return _CLASSIFIER_BUILDERS[cfg.family](hp, cfg.seed)
    raise InvalidHyperparameter(f"{cfg.family} is not a classification family")


def fit_regressor(x, y, cfg: LearnerConfig) -> FittedRegressor:
    """Fit a regression learner for a conditional mean."""
    x, y = _check_training_input(x, y)
    model = _build_regressor(cfg)
    model.fit(x, y)
    return FittedRegressor(model)


def fit_classifier(x, labels, cfg: LearnerConfig, eps: float = 0.01) -> FittedClassifier:
    """Fit a probabilistic classifier for a binary label.

    If only one class is present a warning is issued and a constant model at
    the eps-clipped empirical rate is returned instead of failing.
    """
    x, labels = _check_training_input(x, labels)
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise DegenerateInput("classifier labels must be 0/1")
    if np.unique(labels).size < 2:
        warnings.warn(
            f"single-class training data (all labels == {int(labels[0])}); "
            "falling back to a constant model",
            RuntimeWarning,
            stacklevel=2,
        )
        return FittedClassifier(_ConstantClassifier(clip_probability(float(np.mean(labels)), eps)))
    model = _build_classifier(cfg)
    model.fit(x, labels)
    return FittedClassifier(model)


def _squared_loss(y_true: np.ndarray, pred: np.ndarray) -> float:
    return float(np.mean((y_true - pred) ** 2))


def _log_loss(labels: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)))


def tune_by_cv(x, y, candidates, k: int = 5, seed: int = 0, task: str = "regression") -> LearnerConfig:
    """Pick the candidate config with the lowest mean out-of-fold loss.

    Loss is squared error for regression and log loss for classification.
    Ties are broken by candidate order, so the result is deterministic.
    """
    candidates = list(candidates)
    if not candidates:
        raise InvalidConfig("tune_by_cv needs at least one candidate config")
    if task not in ("regression", "classification"):
        raise InvalidConfig(f"task must be 'regression' or 'classification', got {task!r}")
    x, y = _check_training_input(x, y)

    from .engine import make_folds  # deferred: engine imports this module

    folds = make_folds(x.shape[0], k, seed)
    best_cfg, best_loss = None, np.inf
    for cfg in candidates:
        losses = []
        for fold in range(folds.n_folds):
            test = folds.fold_of == fold
            train = ~test
            if task == "regression":
                model = fit_regressor(x[train], y[train], cfg)
                losses.append(_squared_loss(y[test], model.predict(x[test])))
            else:
                model = fit_classifier(x[train], y[train], cfg)
                losses.append(_log_loss(y[test], model.predict_proba(x[test])))
        loss = float(np.mean(losses))
        if loss < best_loss:
            best_cfg, best_loss = cfg, loss
    return best_cfg
