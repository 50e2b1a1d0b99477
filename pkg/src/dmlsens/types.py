"""Shared domain types: datasets, estimand descriptors and result records.

Every type validates its own invariants at construction and is immutable
afterwards, so instances can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    DuplicateName,
    EmptyArm,
    InvalidConfig,
    InvalidEps,
    NonBinaryTreatment,
    NonFiniteValue,
)

ATT = "att"
ATE = "ate"


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _require_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains NaN or infinite values")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome vector, binary treatment vector and named covariate matrix.

    Construction rejects non-finite values, non-binary treatment, empty
    treatment arms and duplicated covariate names. Prefer the
    :func:`validate_dataset` factory, which also normalises raw columns.
    """

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen_array(self.y))
        object.__setattr__(self, "d", _frozen_array(self.d))
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", tuple(str(c) for c in self.covariate_names))

        n = self.y.shape[0]
        if n < 1:
            raise EmptyArm("dataset is empty")
        if self.d.shape != (n,) or self.x.shape[0] != n:
            raise InvalidConfig(
                f"inconsistent lengths: y={n}, d={self.d.shape[0]}, x rows={self.x.shape[0]}"
            )
        if len(self.covariate_names) != self.x.shape[1]:
            raise InvalidConfig(
                f"{len(self.covariate_names)} covariate names for {self.x.shape[1]} columns"
            )
        _require_finite("y", self.y)
        _require_finite("d", self.d)
        _require_finite("x", self.x)
        if not np.all((self.d == 0.0) | (self.d == 1.0)):
            bad = np.unique(self.d[(self.d != 0.0) & (self.d != 1.0)])[:5]
            raise NonBinaryTreatment(f"treatment must be 0/1, found values like {bad.tolist()}")
        if self.n_treated == 0:
            raise EmptyArm("no treated units (d == 1)")
        if self.n_control == 0:
            raise EmptyArm("no control units (d == 0)")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            dupes = sorted({c for c in self.covariate_names if self.covariate_names.count(c) > 1})
            raise DuplicateName(f"duplicated covariate names: {dupes}")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_treated(self) -> int:
        return int(np.sum(self.d == 1.0))

    @property
    def n_control(self) -> int:
        return int(np.sum(self.d == 0.0))

    def select_covariates(self, names) -> "Dataset":
        """Dataset restricted to the given covariate columns (order preserved)."""
        keep = [self.covariate_names.index(nm) for nm in names]
        return Dataset(self.y, self.d, self.x[:, keep], tuple(names))

    def with_covariate(self, name: str, column) -> "Dataset":
        """Dataset with one extra covariate column appended."""
        col = np.asarray(column, dtype=float).reshape(-1, 1)
        return Dataset(self.y, self.d, np.hstack([self.x, col]), self.covariate_names + (name,))


def validate_dataset(y, d, x, covariate_names=None) -> Dataset:
    """Build a validated :class:`Dataset` from raw columns.

    ``x`` may be a 2-d array, a sequence of rows, or a pandas DataFrame
    (column names are taken from the frame when ``covariate_names`` is
    omitted). Missing names default to ``x1 .. xp``.
    """
    if hasattr(x, "columns") and hasattr(x, "to_numpy"):
        if covariate_names is None:
            covariate_names = tuple(str(c) for c in x.columns)
        x = x.to_numpy(dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if covariate_names is None:
        covariate_names = tuple(f"x{j + 1}" for j in range(x.shape[1]))
    return Dataset(np.asarray(y, dtype=float), np.asarray(d, dtype=float), x, tuple(covariate_names))


@dataclass(frozen=True)
class Estimand:
    """Which average effect to target, the null value and the CI level."""

    kind: str = ATT
    h0: float = 0.0
    level: float = 0.95

    def __post_init__(self):
        if self.kind not in (ATT, ATE):
            raise InvalidConfig(f"estimand kind must be '{ATT}' or '{ATE}', got {self.kind!r}")
        if not (0.0 < self.level < 1.0):
            raise InvalidConfig(f"level must lie strictly in (0, 1), got {self.level}")


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Point estimate with per-observation orthogonal-score values.

    ``psi`` is the score evaluated at ``theta_hat``; both supported scores
    have unit mean derivative magnitude in theta, so ``se`` equals
    ``sd(psi) / sqrt(n)``.
    """

    theta_hat: float
    se: float
    psi: np.ndarray
    p_hat: float
    ci: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "psi", _frozen_array(self.psi))
        object.__setattr__(self, "ci", (float(self.ci[0]), float(self.ci[1])))
        if self.se < 0:
            raise InvalidConfig(f"standard error must be >= 0, got {self.se}")
        if not (0.0 < self.p_hat < 1.0):
            raise InvalidConfig(f"treated share must lie in (0, 1), got {self.p_hat}")
        mean = float(np.mean(self.psi))
        sd = float(np.std(self.psi))
        scale = float(np.mean(np.abs(self.psi))) + abs(self.theta_hat)
        if abs(mean) > 1e-10 * sd + 1e-12 * (scale + 1.0):
            raise InvalidConfig(f"psi is not centred: mean={mean:.3e}, sd={sd:.3e}")
        if not (self.ci[0] <= self.theta_hat <= self.ci[1]):
            raise InvalidConfig(f"theta_hat {self.theta_hat} outside CI {self.ci}")

    @property
    def n(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True, eq=False)
class SensitivityInput:
    """Scale estimates feeding the bias bound: sigma2 = E[(Y - g(D,X))^2],
    nu2 = E[alpha^2], each with centred per-observation scores."""

    sigma2: float
    nu2: float
    psi_sigma2: np.ndarray
    psi_nu2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "psi_sigma2", _frozen_array(self.psi_sigma2))
        object.__setattr__(self, "psi_nu2", _frozen_array(self.psi_nu2))
        if self.sigma2 < 0 or self.nu2 < 0:
            raise InvalidConfig(f"sigma2 and nu2 must be >= 0, got {self.sigma2}, {self.nu2}")
        if self.psi_sigma2.shape != self.psi_nu2.shape:
            raise InvalidConfig("psi_sigma2 and psi_nu2 must have equal length")
        for name, psi, value in (
            ("psi_sigma2", self.psi_sigma2, self.sigma2),
            ("psi_nu2", self.psi_nu2, self.nu2),
        ):
            mean = float(np.mean(psi))
            if abs(mean) > 1e-10 * max(value, float(np.std(psi)), 1e-300):
                raise InvalidConfig(f"{name} is not centred: mean={mean:.3e}")

    @property
    def n(self) -> int:
        return self.psi_sigma2.shape[0]


@dataclass(frozen=True)
class SensitivityParams:
    """Confounding strength scenario (cf_y, cf_d, rho).

    ``cf_d`` must stay below 1 so the implied odds ratio, and with it the
    bias bound, remains finite.
    """

    cf_y: float
    cf_d: float
    rho: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.cf_y <= 1.0):
            raise DomainError(f"cf_y must lie in [0, 1], got {self.cf_y}")
        if not (0.0 <= self.cf_d < 1.0):
            raise DomainError(f"cf_d must lie in [0, 1), got {self.cf_d}")
        if not (-1.0 <= self.rho <= 1.0):
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")


@dataclass(frozen=True)
class SensitivityResult:
    """Bias bound, theta bounds, one-sided CI bounds and robustness values
    for one confounding scenario."""

    params: SensitivityParams
    bias: float
    theta_lower: float
    theta_upper: float
    ci_lower: float
    ci_upper: float
    rv: float
    rva: float

    def __post_init__(self):
        if self.bias < 0:
            raise InvalidConfig(f"bias bound must be >= 0, got {self.bias}")
        ordered = self.ci_lower <= self.theta_lower <= self.theta_upper <= self.ci_upper
        if not ordered:
            raise InvalidConfig(
                "bounds out of order: "
                f"ci_lower={self.ci_lower}, theta_lower={self.theta_lower}, "
                f"theta_upper={self.theta_upper}, ci_upper={self.ci_upper}"
            )
        half = 0.5 * (self.theta_upper - self.theta_lower)
        tol = 1e-12 * max(1.0, abs(self.theta_lower), abs(self.theta_upper))
        if abs(half - self.bias) > tol:
            raise InvalidConfig(f"bounds are not theta_hat +- bias: half-width={half}, bias={self.bias}")
        for name, value in (("rv", self.rv), ("rva", self.rva)):
            if not (0.0 <= value < 1.0):
                raise InvalidConfig(f"{name} must lie in [0, 1), got {value}")
        if self.rva > self.rv:
            raise InvalidConfig(f"rva={self.rva} exceeds rv={self.rv}")

    @property
    def theta(self) -> float:
        """Midpoint of the bounds, i.e. the underlying point estimate."""
        return 0.5 * (self.theta_lower + self.theta_upper)


@dataclass(frozen=True)
class OverlapSummary:
    """Descriptive summary of estimated propensities vs. the clip band."""

    min: float
    max: float
    share_outside: float
    eps: float


def overlap_diagnostics(m_hat, eps: float = 0.01) -> OverlapSummary:
    """Summarise how close estimated propensities come to 0 or 1.

    ``share_outside`` is the fraction of values strictly outside
    ``[eps, 1 - eps]``. Diagnostic only; nothing is mutated or rejected.
    """
    if not (0.0 < eps < 0.5):
        raise InvalidEps(f"eps must lie strictly in (0, 0.5), got {eps}")
    m = np.asarray(m_hat, dtype=float)
    if m.size == 0 or not np.all((m > 0.0) & (m < 1.0)):
        raise DomainError("propensities must be non-empty and strictly inside (0, 1)")
    outside = (m < eps) | (m > 1.0 - eps)
    return OverlapSummary(
        min=float(np.min(m)),
        max=float(np.max(m)),
        share_outside=float(np.mean(outside)),
        eps=float(eps),
    )
