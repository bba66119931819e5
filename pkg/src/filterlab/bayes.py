"""Classical Bayesian estimation on 1-D grids.

Grid densities use the uniform midpoint rule: cell i has midpoint
``lo + (i + 1/2) dx`` and the integral is ``sum(values) * dx``.  Gaussian
factors are truncated at +-8 sigma when supports are built (mass loss below
1e-15).  Also contains the von Neumann measurement model recast as an
estimation problem: the pointer reading updates an a-priori wave function to
an a-posteriori one exactly as Bayes rule updates a density.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import PreconditionError, ZeroProbabilityError

TOL_INT = 1e-6
P_FLOOR = 1e-12
DEFAULT_N = 2048


@dataclass(frozen=True)
class GridDensity:
    """Nonnegative function sampled at midpoints of a uniform grid on [lo, hi]."""

    lo: float
    hi: float
    values: np.ndarray
    is_normalized: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.hi <= self.lo:
            raise PreconditionError("grid needs hi > lo")
        if np.any(v < 0):
            raise PreconditionError("density values must be nonnegative")
        if self.is_normalized and abs(self.integral() - 1.0) > TOL_INT:
            raise PreconditionError("density flagged normalized does not integrate to 1")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.dx

    def integral(self) -> float:
        return float(np.sum(self.values) * self.dx)

    def normalized(self) -> "GridDensity":
        z = self.integral()
        if z <= 0:
            raise ZeroProbabilityError("cannot normalize a zero density")
        return GridDensity(self.lo, self.hi, self.values / z, is_normalized=True)


@dataclass(frozen=True)
class ComplexGridFunction:
    """Complex function on the same uniform midpoint grid layout."""

    lo: float
    hi: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.hi <= self.lo:
            raise PreconditionError("grid needs hi > lo")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("grid values must be finite")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.dx

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.dx)

    def interp(self, xq: np.ndarray) -> np.ndarray:
        """Linear interpolation, zero outside the support."""
        re = np.interp(xq, self.x, self.values.real, left=0.0, right=0.0)
        im = np.interp(xq, self.x, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im


@dataclass(frozen=True)
class Likelihood:
    """Conditional density lambda(y|x) viewed as a function of x for fixed y."""

    fn: Callable
    description: str = ""

    def __call__(self, y, x):
        return self.fn(y, x)


def uniform_density(lo: float, hi: float, n: int = DEFAULT_N) -> GridDensity:
    return GridDensity(lo, hi, np.full(n, 1.0 / (hi - lo)), is_normalized=True)


def gaussian_density(mean: float, var: float, n: int = DEFAULT_N) -> GridDensity:
    """Gaussian on a +-8 sigma support around the mean."""
    if var <= 0:
        raise PreconditionError("variance must be positive")
    s = np.sqrt(var)
    d = GridDensity(mean - 8 * s, mean + 8 * s, np.zeros(n))
    vals = np.exp(-((d.x - mean) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
    return GridDensity(d.lo, d.hi, vals).normalized()


def function_density(lo: float, hi: float, f: Callable, n: int = DEFAULT_N) -> GridDensity:
    d = GridDensity(lo, hi, np.zeros(n))
    return GridDensity(lo, hi, np.asarray(f(d.x), dtype=float)).normalized()


def posterior_grid(prior: GridDensity, lik: Likelihood, y) -> GridDensity:
    """Bayes update: posterior proportional to lambda(y|x) * prior(x)."""
    if not prior.is_normalized:
        raise PreconditionError("prior must be normalized")
    lam = np.asarray(lik(y, prior.x), dtype=float)
    unnorm = lam * prior.values
    evidence = float(np.sum(unnorm) * prior.dx)
    if evidence <= P_FLOOR:
        raise ZeroProbabilityError("observation has no support under the prior")
    return GridDensity(prior.lo, prior.hi, unnorm / evidence, is_normalized=True)


def coin_likelihood(sequence) -> Likelihood:
    """Likelihood of a heads/tails sequence for heads-probability x in [0, 1].

    lambda(seq|x) = x^(#H) (1-x)^(#T).  The observation argument of the
    returned likelihood is ignored; the sequence is baked in.
    """
    seq = [s.upper() for s in sequence]
    if any(s not in ("H", "T") for s in seq):
        raise PreconditionError("sequence entries must be 'H' or 'T'")
    n_h = sum(1 for s in seq if s == "H")
    n_t = len(seq) - n_h

    def fn(_y, x):
        x = np.asarray(x, dtype=float)
        return x ** n_h * (1.0 - x) ** n_t

    return Likelihood(fn, description=f"coin sequence {''.join(seq)}")


def gaussian_likelihood(var_noise: float) -> Likelihood:
    """Observation y = x + noise with Gaussian noise of variance var_noise."""
    if var_noise <= 0:
        raise PreconditionError("noise variance must be positive")

    def fn(y, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-((y - x) ** 2) / (2 * var_noise)) / np.sqrt(2 * np.pi * var_noise)

    return Likelihood(fn, description=f"gaussian noise var={var_noise}")


def gaussian_update(mu0: float, var0: float, var_noise: float, y: float):
    """Closed-form conjugate update for a Gaussian prior and Gaussian noise.

    Returns (mu1, var1) with 1/var1 = 1/var0 + 1/var_noise and
    mu1 = (var1/var0) mu0 + (var1/var_noise) y.
    """
    if var0 <= 0 or var_noise <= 0:
        raise PreconditionError("variances must be positive")
    var1 = 1.0 / (1.0 / var0 + 1.0 / var_noise)
    mu1 = (var1 / var0) * mu0 + (var1 / var_noise) * y
    return mu1, var1


def density_stats(d: GridDensity) -> dict:
    """Mean, variance and mode of a grid density.

    The mode is the midpoint of the cell with the largest value; ties break
    toward the lowest x.
    """
    rho = d.values / d.integral()
    x = d.x
    mean = float(np.sum(x * rho) * d.dx)
    var = float(np.sum((x - mean) ** 2 * rho) * d.dx)
    mode = float(x[int(np.argmax(d.values))])
    return {"mean": mean, "variance": var, "mode": mode}


def von_neumann_posterior(psi_prior: ComplexGridFunction, phi: ComplexGridFunction,
                          mu: float, y: float):
    """Pointer-measurement update of an a-priori wave function.

    After coupling, the joint amplitude is psi_prior(x) phi(y - mu x); reading
    the pointer at y gives psi_post(x|y) = psi_prior(x) phi(y - mu x) /
    sqrt(rho_Y(y)) with rho_Y(y) the marginal pointer density.

    Returns (psi_post, rho_Y(y)).
    """
    if abs(psi_prior.norm_sq() - 1.0) > TOL_INT or abs(phi.norm_sq() - 1.0) > TOL_INT:
        raise PreconditionError("psi_prior and phi must be square-normalized")
    x = psi_prior.x
    amp = psi_prior.values * phi.interp(y - mu * x)
    rho_y = float(np.sum(np.abs(amp) ** 2) * psi_prior.dx)
    if rho_y < P_FLOOR:
        raise ZeroProbabilityError(f"pointer density {rho_y:.3e} below floor at y={y}")
    return ComplexGridFunction(psi_prior.lo, psi_prior.hi, amp / np.sqrt(rho_y)), rho_y
