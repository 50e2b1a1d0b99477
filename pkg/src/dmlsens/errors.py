"""Exception hierarchy.

Three branches matter operationally: configuration problems (CLI exit 2),
data problems (exit 3) and estimation problems (exit 4). ``NoFiniteRV`` is
special-cased by the CLI as a per-scenario failure (exit 5).
"""


class DmlsensError(Exception):
    """Base class for all package errors."""


class ConfigError(DmlsensError):
    """Invalid configuration or invalid user-supplied parameters."""


class DataError(DmlsensError):
    """Input data violates a structural precondition."""


class EstimationError(DmlsensError):
    """A numerical operation left its valid domain or failed to converge."""


# -- data errors ---------------------------------------------------------

class NonBinaryTreatment(DataError):
    """Treatment column contains values other than 0 and 1."""


class EmptyArm(DataError):
    """No treated units or no control units."""


class NonFiniteValue(DataError):
    """NaN or infinity found where a finite value is required."""


class DuplicateName(DataError):
    """Covariate names are not unique."""


class DegenerateInput(DataError):
    """Training matrix has too few rows or no columns."""


class EmptyArmInFold(DataError):
    """A cross-fitting training complement lacks treated or control rows."""


# -- config errors -------------------------------------------------------

class InvalidHyperparameter(ConfigError):
    """A learner hyperparameter is outside its documented range."""


class InvalidEps(ConfigError):
    """Probability clipping constant must lie strictly in (0, 0.5)."""


class InvalidFoldCount(ConfigError):
    """Fold count must satisfy 2 <= L <= n."""


class InvalidConfig(ConfigError):
    """Structured configuration is inconsistent or incomplete."""


class UnknownVariable(ConfigError):
    """A referenced covariate name does not exist in the dataset."""


class DegenerateShortModel(ConfigError):
    """Omitting the benchmark variables leaves no covariates."""


# -- estimation errors ---------------------------------------------------

class DomainError(EstimationError):
    """Argument outside the mathematical domain of a formula."""


class NoFiniteRV(EstimationError):
    """No robustness value below 1 exists for the requested configuration."""
