"""Exponential-family response models with canonical links.

Means are kept on the natural mean scale of each family: the identity for
Gaussian responses, counts for Poisson, and success *proportions* for the
binomial (so binomial means lie in (0, 1) and the per-row trial counts act as
precision weights).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from compatkit.errors import InvalidInputError

__all__ = ["GlmFamily"]

_KINDS = ("gaussian", "poisson", "binomial")


@dataclass(frozen=True, eq=False)
class GlmFamily:
    """Distributional part of a GLM.

    Use the :meth:`gaussian`, :meth:`poisson` and :meth:`binomial`
    constructors rather than the raw initializer.
    """

    kind: str
    covariance: np.ndarray | None = None
    trials: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidInputError(f"unknown family {self.kind!r}; expected one of {_KINDS}")
        if self.kind == "gaussian":
            if self.covariance is None:
                raise InvalidInputError("gaussian family needs a known covariance matrix")
            cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
            if cov.shape[0] != cov.shape[1]:
                raise InvalidInputError(f"covariance must be square, got shape {cov.shape}")
            object.__setattr__(self, "covariance", cov)
        if self.kind == "binomial":
            if self.trials is None:
                raise InvalidInputError("binomial family needs trials per row")
            t = np.atleast_1d(np.asarray(self.trials, dtype=float))
            if np.any(t < 1) or np.any(t != np.round(t)):
                raise InvalidInputError("binomial trials must be integers >= 1")
            object.__setattr__(self, "trials", t)

    @classmethod
    def gaussian(cls, covariance) -> "GlmFamily":
        return cls("gaussian", covariance=covariance)

    @classmethod
    def poisson(cls) -> "GlmFamily":
        return cls("poisson")

    @classmethod
    def binomial(cls, trials) -> "GlmFamily":
        return cls("binomial", trials=trials)

    @property
    def diagonal(self) -> bool:
        """True when cov(Y; mu) is diagonal (independent rows)."""
        return self.kind != "gaussian"

    def weights(self, n: int) -> np.ndarray:
        if self.kind == "binomial":
            self.check_length(n)
            return self.trials
        return np.ones(n)

    def check_length(self, n: int) -> None:
        if self.kind == "gaussian" and self.covariance.shape[0] != n:
            raise InvalidInputError(
                f"covariance is {self.covariance.shape[0]}x{self.covariance.shape[0]} "
                f"but the mean vector has length {n}"
            )
        if self.kind == "binomial" and self.trials.shape[0] != n:
            raise InvalidInputError(
                f"trials has length {self.trials.shape[0]} but the mean vector has length {n}"
            )

    def validate_mean(self, mu, name: str = "mean") -> np.ndarray:
        """Return ``mu`` as a float array after checking it lies in the mean space."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.ndim != 1:
            raise InvalidInputError(f"{name} must be one-dimensional")
        if not np.all(np.isfinite(mu)):
            raise InvalidInputError(f"{name} has non-finite entries")
        self.check_length(mu.shape[0])
        if self.kind == "poisson" and np.any(mu <= 0):
            raise InvalidInputError(f"poisson {name} must be strictly positive")
        if self.kind == "binomial" and np.any((mu <= 0) | (mu >= 1)):
            raise InvalidInputError(f"binomial {name} must lie strictly inside (0, 1)")
        return mu

    # unit variance function V(mu) and its derivatives; var(Y_i) = V(mu_i) / w_i
    def unit_variance(self, mu: np.ndarray) -> np.ndarray:
        if self.kind == "poisson":
            return mu.copy()
        if self.kind == "binomial":
            return mu * (1.0 - mu)
        return np.ones_like(mu)

    def unit_variance_deriv(self, mu: np.ndarray) -> np.ndarray:
        if self.kind == "poisson":
            return np.ones_like(mu)
        if self.kind == "binomial":
            return 1.0 - 2.0 * mu
        return np.zeros_like(mu)

    def unit_variance_deriv2(self, mu: np.ndarray) -> np.ndarray:
        if self.kind == "binomial":
            return np.full_like(mu, -2.0)
        return np.zeros_like(mu)

    def variances(self, mu: np.ndarray) -> np.ndarray:
        """Diagonal of cov(Y; mu) for the independent-row families."""
        return self.unit_variance(mu) / self.weights(mu.shape[0])

    def covariance_at(self, mu) -> np.ndarray:
        """cov(Y; mu) as a full matrix."""
        mu = np.asarray(mu, dtype=float)
        if self.kind == "gaussian":
            self.check_length(mu.shape[0])
            return self.covariance
        return np.diag(self.variances(mu))

    # canonical links
    def link(self, mu: np.ndarray) -> np.ndarray:
        if self.kind == "poisson":
            return np.log(mu)
        if self.kind == "binomial":
            return np.log(mu) - np.log1p(-mu)
        return mu.copy()

    def inverse_link(self, eta: np.ndarray) -> np.ndarray:
        if self.kind == "poisson":
            return np.exp(eta)
        if self.kind == "binomial":
            return 0.5 * (1.0 + np.tanh(0.5 * eta))
        return eta.copy()

    def dmu_deta(self, mu: np.ndarray) -> np.ndarray:
        # canonical link: dmu/deta equals the unit variance
        return self.unit_variance(mu)

    def d2mu_deta2(self, mu: np.ndarray) -> np.ndarray:
        return self.unit_variance(mu) * self.unit_variance_deriv(mu)

    def initial_mean(self, y: np.ndarray) -> np.ndarray:
        """Starting means for iterative fits, pulled inside the mean space."""
        if self.kind == "poisson":
            return np.maximum(y, 0.0) + 0.5
        if self.kind == "binomial":
            t = self.weights(y.shape[0])
            return (t * y + 0.5) / (t + 1.0)
        return y.copy()
