from dataclasses import dataclass, field

import numpy as np


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class FitResult:
    """Point estimates with their covariance.

    ``info`` carries estimator-specific diagnostics (iterations, gradient norm,
    warning flags).
    """

    names: tuple
    coefficients: np.ndarray
    covariance: np.ndarray
    n: int
    loglik: float = None
    converged: bool = True
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        coef = np.asarray(self.coefficients, dtype=float)
        cov = symmetrize(self.covariance)
        if coef.shape != (len(self.names),) or cov.shape != (coef.size, coef.size):
            raise ValueError("names, coefficients and covariance do not conform")
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "covariance", cov)

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def index(self, name):
        return self.names.index(name)

    def __getitem__(self, name):
        return float(self.coefficients[self.index(name)])

    def se_of(self, name):
        return float(self.se[self.index(name)])

    def as_dict(self):
        return dict(zip(self.names, self.coefficients.tolist()))

    def sub_covariance(self, names):
        idx = [self.index(k) for k in names]
        return self.covariance[np.ix_(idx, idx)]


@dataclass(frozen=True)
class SmoothFit:
    grid: np.ndarray
    fitted: np.ndarray
    derivative: np.ndarray
    bandwidth: float
    kernel: str
    degree: int
    n_local: np.ndarray

    @property
    def defined(self):
        return np.isfinite(self.fitted)
