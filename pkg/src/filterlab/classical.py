"""Classical continuous-time filtering on a grid.

Twin-experiment simulation (truth plus noisy observation record), the
unnormalized observation-driven grid filter, the normalized innovations-driven
filter, pathwise likelihood weights, and a linear-Gaussian closed-form filter
used as an oracle.

Discretization choices (the continuum equations fix none of this):
prediction-then-correction splitting per step; the observation update is the
multiplicative Euler factor ``1 + h dY`` with negative values clipped at zero
(an exponential variant ``exp(h dY - h^2 dt / 2)`` is available behind a
flag); the prediction substep reuses the Fokker-Planck scheme from ``sde``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .bayes import GridDensity
from .errors import FilterCollapseError, PreconditionError
from .sde import (DiffusionSpec, Path, _eval_field, _fp_edge_fields, _fp_step,
                  euler_maruyama, stable_fp_dt)
from .seeds import RngStream

MASS_FLOOR = 1e-250


@dataclass(frozen=True)
class ObservationModel:
    """Observation drift h in dY = h(X) dt + dZ."""

    h: Callable


@dataclass(frozen=True)
class FilterState:
    """Unnormalized conditional density sigma_t on a grid."""

    sigma: GridDensity
    t: float

    def __post_init__(self):
        if self.sigma.integral() <= 0:
            raise PreconditionError("filter state needs positive total mass")


@dataclass
class TrajectoryRecord:
    """Observation increments plus per-step filter output along one run."""

    dt: float
    times: np.ndarray
    dY: np.ndarray
    pi: dict = field(default_factory=dict)
    dI: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.dY = np.asarray(self.dY, dtype=float)
        if self.times.shape[0] != self.dY.shape[0] + 1:
            raise PreconditionError("times must have one more entry than dY")
        for name, vals in self.pi.items():
            if np.asarray(vals).shape[0] != self.times.shape[0]:
                raise PreconditionError(f"pi[{name!r}] length mismatch")
        if self.dI is not None and np.asarray(self.dI).shape != self.dY.shape:
            raise PreconditionError("dI must match dY in length")


def simulate_truth_and_observation(spec: DiffusionSpec, obs: ObservationModel,
                                   T: float, dt: float, rng: RngStream):
    """Simulate the signal X and the observation increments dY = h(X) dt + dZ.

    The dynamical noise W uses ``rng`` itself; the observational noise Z uses
    the next stream index, so the two are independent by construction.
    """
    X = euler_maruyama(spec, T, dt, rng)
    n = X.values.shape[0] - 1
    dZ = rng.child(rng.stream_index + 1).generator().standard_normal(n) * np.sqrt(dt)
    h_x = _eval_field(obs.h, X.values[:-1])
    dY = h_x * dt + dZ
    rec = TrajectoryRecord(dt=dt, times=X.times, dY=dY)
    return X, rec


@lru_cache(maxsize=64)
def _grid_fields(spec: DiffusionSpec, lo: float, hi: float, n: int):
    dx, v_edge, d_mid = _fp_edge_fields(spec, lo, hi, n)
    bound = stable_fp_dt(spec, lo, hi, n, safety=0.5)
    return dx, v_edge, d_mid, bound


def _predict(values: np.ndarray, spec: DiffusionSpec, lo: float, hi: float,
             n: int, dt: float) -> np.ndarray:
    """Fokker-Planck prediction over one filter step, substepping for stability."""
    dx, v_edge, d_mid, bound = _grid_fields(spec, lo, hi, n)
    n_sub = max(1, int(np.ceil(dt / bound)))
    dt_sub = dt / n_sub
    for _ in range(n_sub):
        values = _fp_step(values, dt_sub, dx, v_edge, d_mid)
    return values


def dmz_step(fs: FilterState, dY_k: float, spec: DiffusionSpec,
             obs: ObservationModel, dt: float, exponential: bool = False) -> FilterState:
    """One unnormalized filter step: predict, then observation update.

    The update multiplies by ``1 + h dY`` (clipped at zero) or, with
    ``exponential=True``, by ``exp(h dY - h^2 dt / 2)``.
    """
    g = fs.sigma
    vals = _predict(g.values.astype(float), spec, g.lo, g.hi, g.n, dt)
    h = _eval_field(obs.h, g.x)
    if exponential:
        vals = vals * np.exp(h * dY_k - 0.5 * h ** 2 * dt)
    else:
        vals = np.clip(vals * (1.0 + h * dY_k), 0.0, None)
    mass = vals.sum() * g.dx
    if not np.isfinite(mass) or mass < MASS_FLOOR:
        raise FilterCollapseError(f"filter mass {mass:.3e} underflowed at t={fs.t}")
    return FilterState(GridDensity(g.lo, g.hi, vals), fs.t + dt)


def normalize(fs: FilterState) -> GridDensity:
    """Normalized conditional density; invariant under scaling of sigma."""
    return fs.sigma.normalized()


def pi_of(d: GridDensity, f: Callable) -> float:
    """Quadrature expectation of f under a (normalized) grid density."""
    rho = d.values / d.integral()
    return float(np.sum(_eval_field(f, d.x) * rho) * d.dx)


def dmz_run(prior: GridDensity, spec: DiffusionSpec, obs: ObservationModel,
            record: TrajectoryRecord, f_dict: dict | None = None,
            exponential: bool = False) -> TrajectoryRecord:
    """Run the unnormalized filter along a record; returns normalized outputs."""
    f_dict = f_dict or {}
    fs = FilterState(prior, float(record.times[0]))
    pi = {name: [pi_of(prior, f)] for name, f in f_dict.items()}
    dI = np.empty_like(record.dY)
    h = _eval_field(obs.h, prior.x)
    for k, dy in enumerate(record.dY):
        rho = fs.sigma.values / fs.sigma.integral()
        dI[k] = dy - float(np.sum(h * rho) * fs.sigma.dx) * record.dt
        fs = dmz_step(fs, dy, spec, obs, record.dt, exponential=exponential)
        d = fs.sigma
        for name, f in f_dict.items():
            pi[name].append(pi_of(d, f))
    return TrajectoryRecord(record.dt, record.times, record.dY,
                            pi={k: np.asarray(v) for k, v in pi.items()}, dI=dI)


def kushner_run(prior: GridDensity, spec: DiffusionSpec, obs: ObservationModel,
                record: TrajectoryRecord, f_dict: dict) -> TrajectoryRecord:
    """Normalized filter driven by the innovations dI = dY - pi(h) dt.

    Integrates the conditional density with the same prediction substep as the
    unnormalized filter and the correction factor ``1 + (h - pi(h)) dI``,
    renormalizing each step; pi(1) = 1 holds exactly by construction.
    """
    if not prior.is_normalized:
        raise PreconditionError("kushner_run needs a normalized prior")
    g = prior
    rho = g.values.astype(float)
    h = _eval_field(obs.h, g.x)
    fx = {name: _eval_field(f, g.x) for name, f in f_dict.items()}
    pi = {name: [float(np.sum(v * rho) * g.dx)] for name, v in fx.items()}
    dI = np.empty_like(record.dY)
    dt = record.dt
    for k, dy in enumerate(record.dY):
        rho = _predict(rho, spec, g.lo, g.hi, g.n, dt)
        rho /= rho.sum() * g.dx
        pi_h = float(np.sum(h * rho) * g.dx)
        dI[k] = dy - pi_h * dt
        rho = np.clip(rho * (1.0 + (h - pi_h) * dI[k]), 0.0, None)
        mass = rho.sum() * g.dx
        if not np.isfinite(mass) or mass < MASS_FLOOR:
            raise FilterCollapseError(f"normalized filter collapsed at step {k}")
        rho /= mass
        for name, v in fx.items():
            pi[name].append(float(np.sum(v * rho) * g.dx))
    return TrajectoryRecord(dt, record.times, record.dY,
                            pi={k: np.asarray(v) for k, v in pi.items()}, dI=dI)


def ks_log_weight(x_path: Path, record: TrajectoryRecord, obs: ObservationModel) -> float:
    """Discrete pathwise log-likelihood  sum_k [h(x_k) dY_k - h(x_k)^2 dt / 2].

    This is the log of the exponential weight relating the observation law to
    the reference Wiener measure.
    """
    h_x = _eval_field(obs.h, x_path.values[:-1])
    return float(np.sum(h_x * record.dY - 0.5 * h_x ** 2 * record.dt))


def kalman_bucy_reference(a: float, c: float, sig: float, prior_mean: float,
                          prior_var: float, record: TrajectoryRecord):
    """Closed-form linear-Gaussian filter for v = -a x, h = c x, sigma = sig.

    Euler integration of dm = -a m dt + P c (dY - c m dt) and
    dP/dt = -2 a P + sig^2 - c^2 P^2.  Returns (mean path, variance path).
    """
    n = record.dY.shape[0]
    dt = record.dt
    m = np.empty(n + 1)
    P = np.empty(n + 1)
    m[0], P[0] = prior_mean, prior_var
    for k in range(n):
        dI = record.dY[k] - c * m[k] * dt
        m[k + 1] = m[k] - a * m[k] * dt + P[k] * c * dI
        P[k + 1] = P[k] + (-2 * a * P[k] + sig ** 2 - c ** 2 * P[k] ** 2) * dt
    return m, P
