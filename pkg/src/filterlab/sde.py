"""Seeded stochastic-process toolkit.

Wiener paths, Euler-Maruyama diffusions, Ito integrals, diffusion generators,
Fokker-Planck grid evolution and Chapman-Kolmogorov checks.

Reproducibility: every sampling routine takes an ``RngStream``.  Normal
variates come from numpy's PCG64 ``Generator.standard_normal`` (ziggurat),
drawn as a single vectorized block in time order, so identical (seed, index)
pairs give bitwise-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _integrate

from .bayes import GridDensity
from .errors import ConfigError, PreconditionError
from .seeds import RngStream

__all__ = [
    "Path", "DiffusionSpec", "RngStream", "wiener_path", "random_walk",
    "euler_maruyama", "ito_integral", "generator_apply", "stable_fp_dt",
    "fokker_planck_evolve", "chapman_kolmogorov_check",
]

TOL_MASS = 1e-8
NEG_CLIP = 1e-12


@dataclass(frozen=True)
class Path:
    """Uniformly sampled scalar path x_0 .. x_N."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.dt <= 0:
            raise PreconditionError("dt must be positive")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("path values must be finite")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.shape[0])


@dataclass(frozen=True)
class DiffusionSpec:
    """Scalar diffusion dX = v(X) dt + sigma(X) dW started at x0."""

    drift: Callable
    diffusion: Callable
    x0: float = 0.0


def _n_steps(T: float, dt: float) -> int:
    if dt <= 0 or T < dt:
        raise PreconditionError("need dt > 0 and T >= dt")
    return int(round(T / dt))


def wiener_path(T: float, dt: float, rng: RngStream) -> Path:
    """Standard Wiener path on [0, T]: W(0) = 0, increments N(0, dt).

    Consumes exactly N = round(T/dt) normals, in time order.
    """
    n = _n_steps(T, dt)
    xi = rng.generator().standard_normal(n)
    w = np.empty(n + 1)
    w[0] = 0.0
    np.cumsum(xi * np.sqrt(dt), out=w[1:])
    return Path(0.0, dt, w)


def random_walk(n: int, rng: RngStream) -> np.ndarray:
    """Plus-minus-one random walk X_0=0, X_k = xi_1 + ... + xi_k."""
    if n < 0:
        raise PreconditionError("n must be nonnegative")
    steps = rng.generator().integers(0, 2, size=n) * 2 - 1
    out = np.empty(n + 1, dtype=int)
    out[0] = 0
    np.cumsum(steps, out=out[1:])
    return out


def euler_maruyama(spec: DiffusionSpec, T: float, dt: float, rng: RngStream) -> Path:
    """Euler-Maruyama scheme X_{k+1} = X_k + v(X_k) dt + sigma(X_k) sqrt(dt) xi_{k+1}.

    The noise is the *future* increment xi_{k+1}; with v=0, sigma=1 this
    reproduces ``wiener_path`` on the same stream bitwise.
    """
    n = _n_steps(T, dt)
    xi = rng.generator().standard_normal(n)
    sq = np.sqrt(dt)
    x = np.empty(n + 1)
    x[0] = spec.x0
    v, s = spec.drift, spec.diffusion
    for k in range(n):
        x[k + 1] = x[k] + v(x[k]) * dt + s(x[k]) * sq * xi[k]
    return Path(0.0, dt, x)


def ito_integral(W: Path) -> float:
    """Left-point Ito sum  sum_k W_k (W_{k+1} - W_k)."""
    w = W.values
    return float(np.sum(w[:-1] * np.diff(w)))


def generator_apply(spec: DiffusionSpec, g: Callable, x: float,
                    dg: Callable | None = None, d2g: Callable | None = None) -> float:
    """Diffusion generator  (L g)(x) = v(x) g'(x) + (1/2) sigma(x)^2 g''(x).

    Derivatives are taken analytically when supplied, else by central
    differences with h = 1e-5 * (1 + |x|).
    """
    if dg is None or d2g is None:
        h = 1e-5 * (1.0 + abs(x))
        gp = (g(x + h) - g(x - h)) / (2 * h)
        gpp = (g(x + h) - 2 * g(x) + g(x - h)) / h ** 2
    else:
        gp, gpp = dg(x), d2g(x)
    return float(spec.drift(x) * gp + 0.5 * spec.diffusion(x) ** 2 * gpp)


def _eval_field(f: Callable, x: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field over a grid, vectorized when possible."""
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.asarray([f(xi) for xi in x], dtype=float)
    return y


def _fp_edge_fields(spec: DiffusionSpec, lo: float, hi: float, n: int):
    """Velocities at interior edges and diffusivities at midpoints."""
    dx = (hi - lo) / n
    x_mid = lo + (np.arange(n) + 0.5) * dx
    x_edge = lo + np.arange(1, n) * dx
    v_edge = _eval_field(spec.drift, x_edge)
    d_mid = 0.5 * _eval_field(spec.diffusion, x_mid) ** 2
    return dx, v_edge, d_mid


def stable_fp_dt(spec: DiffusionSpec, lo: float, hi: float, n: int,
                 safety: float = 0.5) -> float:
    """Largest explicit-Euler step the scheme accepts, times ``safety``."""
    dx, v_edge, d_mid = _fp_edge_fields(spec, lo, hi, n)
    rate = 2.0 * np.max(d_mid) / dx ** 2
    if v_edge.size:
        rate += np.max(np.abs(v_edge)) / dx
    if rate <= 0:
        return np.inf
    return safety / rate


def _fp_step(rho: np.ndarray, dt: float, dx: float,
             v_edge: np.ndarray, d_mid: np.ndarray) -> np.ndarray:
    """One conservative explicit step; operates on the last axis of ``rho``.

    Upwind advective flux plus central diffusive flux, zero-flux boundaries,
    so total mass is conserved to rounding.
    """
    up = np.where(v_edge > 0, rho[..., :-1], rho[..., 1:])
    flux = v_edge * up - (d_mid[1:] * rho[..., 1:] - d_mid[:-1] * rho[..., :-1]) / dx
    out = rho.copy()
    out[..., :-1] -= dt / dx * flux
    out[..., 1:] += dt / dx * flux
    return out


def fokker_planck_evolve(rho0: GridDensity, spec: DiffusionSpec, T: float,
                         dt_pde: float) -> GridDensity:
    """Evolve a grid density under the Fokker-Planck equation for time T.

    Central-difference diffusion, upwind advection, explicit Euler in time
    with zero-flux boundaries.  Raises ``ConfigError`` if dt_pde violates the
    stability bound.  Values below zero (rounding) are clipped at -1e-12.
    """
    dx, v_edge, d_mid = _fp_edge_fields(spec, rho0.lo, rho0.hi, rho0.n)
    bound = stable_fp_dt(spec, rho0.lo, rho0.hi, rho0.n, safety=1.0)
    if dt_pde > bound:
        raise ConfigError(f"dt_pde={dt_pde:.3e} exceeds stability bound {bound:.3e}")
    n_sub = max(1, int(np.ceil(T / dt_pde)))
    dt = T / n_sub
    rho = rho0.values.astype(float)
    mass0 = rho.sum() * dx
    for _ in range(n_sub):
        rho = _fp_step(rho, dt, dx, v_edge, d_mid)
    if np.min(rho) < -NEG_CLIP:
        raise ConfigError(f"negative density {np.min(rho):.3e} beyond clip threshold")
    rho = np.clip(rho, 0.0, None)
    if abs(rho.sum() * dx - mass0) > TOL_MASS * max(1.0, mass0):
        raise ConfigError("Fokker-Planck step failed to conserve mass")
    return GridDensity(rho0.lo, rho0.hi, rho, is_normalized=False)


def heat_kernel(x, t, x0, t0) -> np.ndarray:
    """Wiener transition density T(x, t | x0, t0)."""
    s = t - t0
    return np.exp(-((np.asarray(x) - x0) ** 2) / (2 * s)) / np.sqrt(2 * np.pi * s)


def chapman_kolmogorov_check(t: float, t1: float, t0: float, x: float, x0: float) -> float:
    """Quadrature defect of the Chapman-Kolmogorov identity for the heat kernel.

    Returns |int T(x,t|x1,t1) T(x1,t1|x0,t0) dx1  -  T(x,t|x0,t0)|, with the
    intermediate integral taken over +-10 sqrt(t - t0) around the endpoints.
    """
    if not t > t1 >= t0:
        raise PreconditionError("need t > t1 >= t0")
    direct = heat_kernel(x, t, x0, t0)
    if t1 == t0:
        # T(x1, t0 | x0, t0) is a delta at x0
        return float(abs(direct - direct))
    half = 10.0 * np.sqrt(t - t0)
    lo, hi = min(x, x0) - half, max(x, x0) + half
    val, _ = _integrate.quad(
        lambda x1: heat_kernel(x, t, x1, t1) * heat_kernel(x1, t1, x0, t0),
        lo, hi, limit=200)
    return float(abs(val - direct))
