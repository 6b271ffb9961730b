"""Working CDFs used to model untreated-outcome distribution functions.

All functions are vectorised over numpy arrays and return arrays of the
same shape (0-d inputs give Python floats). The three unbounded links
accept ``±inf`` and return the limits; ``quantile`` returns ``∓inf`` at
0 and 1 for those links.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError


class Link(enum.Enum):
    NORMAL = "normal"
    LOGISTIC = "logistic"
    CAUCHY = "cauchy"
    UNIFORM = "uniform"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, name: "str | Link") -> "Link":
        if isinstance(name, Link):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown link {name!r}; valid links: {valid}") from None

    @property
    def unbounded(self) -> bool:
        """True for links mapping the whole real line onto (0, 1)."""
        return self in (Link.NORMAL, Link.LOGISTIC, Link.CAUCHY)

    def cdf(self, x):
        return cdf(self, x)

    def quantile(self, p):
        return quantile(self, p)

    def density(self, x):
        return density(self, x)

    def __str__(self) -> str:
        return self.value


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


def _cdf(link: Link, x: np.ndarray) -> np.ndarray:
    if link is Link.NORMAL:
        return special.ndtr(x)
    if link is Link.LOGISTIC:
        return special.expit(x)
    if link is Link.CAUCHY:
        # atan2 keeps full relative precision in the lower tail
        return np.arctan2(1.0, -x) / np.pi
    if link is Link.UNIFORM:
        return np.clip(x, 0.0, 1.0)
    return np.array(x, dtype=float, copy=True)


def _quantile(link: Link, p: np.ndarray) -> np.ndarray:
    if link is Link.NORMAL:
        return special.ndtri(p)
    if link is Link.LOGISTIC:
        return special.logit(p)
    if link is Link.CAUCHY:
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.tan(np.pi * (p - 0.5))
        return np.where(p <= 0.0, -np.inf, np.where(p >= 1.0, np.inf, q))
    return np.array(p, dtype=float, copy=True)


def cdf(link: Link, x):
    """Evaluate the working CDF.

    Raises
    ------
    DomainError
        For infinite arguments to the Uniform and Identity links.
    """
    link = Link.parse(link)
    x = np.asarray(x, dtype=float)
    if np.isnan(x).any():
        raise DomainError("cdf argument is NaN")
    if not link.unbounded and np.isinf(x).any():
        raise DomainError(f"{link} link is undefined at infinite arguments")
    return _out(_cdf(link, x))


def quantile(link: Link, p):
    """Left inverse of ``cdf`` on [0, 1]."""
    link = Link.parse(link)
    p = np.asarray(p, dtype=float)
    if np.isnan(p).any() or (p < 0.0).any() or (p > 1.0).any():
        raise DomainError("quantile argument must lie in [0, 1]")
    return _out(_quantile(link, p))


def density(link: Link, x):
    """Derivative of ``cdf``; one-sided value 1 at the Uniform kinks."""
    link = Link.parse(link)
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise DomainError("density requires finite arguments")
    if link is Link.NORMAL:
        d = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    elif link is Link.LOGISTIC:
        s = special.expit(x)
        d = s * (1.0 - s)
    elif link is Link.CAUCHY:
        d = 1.0 / (np.pi * (1.0 + x * x))
    elif link is Link.UNIFORM:
        d = ((x >= 0.0) & (x <= 1.0)).astype(float)
    else:
        d = np.ones_like(x)
    return _out(d)


def density_derivative(link: Link, x: np.ndarray) -> np.ndarray:
    """Second derivative of ``cdf`` (used for exact QMLE Hessians)."""
    x = np.asarray(x, dtype=float)
    if link is Link.NORMAL:
        return -x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    if link is Link.LOGISTIC:
        s = special.expit(x)
        return s * (1.0 - s) * (1.0 - 2.0 * s)
    if link is Link.CAUCHY:
        return -2.0 * x / (np.pi * (1.0 + x * x) ** 2)
    return np.zeros_like(x)
