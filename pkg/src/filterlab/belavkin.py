"""Quantum filtering for single-channel homodyne detection (no scattering).

The conditioned state is propagated in two equivalent forms: the linear
(unnormalized) ket equation driven by the raw record, and the normalized
density-matrix filter driven by the innovations.  Records are sampled in the
normalized picture: the innovations are drawn as fresh Wiener increments and
the observation increments are reconstructed as dY = dI + pi(L + L*) dt,
which samples the physical output law.  The two pictures are connected by the
norm-martingale check (the squared ket norm is the likelihood ratio between
the physical record law and the reference Wiener measure).

Also contains the deterministic master-equation oracle and the classically
driven evolutions (Wiener-conjugation and Poisson-kick) with their
matrix-exponential oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import FilterCollapseError, PreconditionError, StructureError
from .operators import Ket, _as_matrix, lindblad_adjoint_apply, max_abs
from .seeds import RngStream

TOL_POS = 1e-9
NORM_RESCALE_FLOOR = 1e-100


@dataclass(frozen=True)
class EmissionAbsorptionModel:
    """Coupling operator L and Hamiltonian H of the measured system."""

    L: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L, dtype=complex)
        H = np.asarray(self.H, dtype=complex)
        if L.shape != H.shape or L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise StructureError("L and H must be square matrices of one dimension")
        if max_abs(H - H.conj().T) > 1e-10:
            raise StructureError("H must be hermitian")
        for name, m in (("L", L), ("H", H)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def drift(self) -> np.ndarray:
        """-(L*L/2 + iH), the deterministic part of the linear equation."""
        return -(0.5 * self.L.conj().T @ self.L + 1j * self.H)

    @property
    def l_sum(self) -> np.ndarray:
        """L + L*, the measured quadrature's system operator."""
        return self.L + self.L.conj().T


@dataclass(frozen=True)
class ConditionedKet:
    """Unnormalized conditioned ket with separately tracked log norm.

    The physically meaningful squared norm is  exp(log_norm_sq) * <chi|chi>;
    the split guards against underflow on long records.
    """

    chi: np.ndarray
    t: float
    log_norm_sq: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.chi, dtype=complex).ravel()
        if np.linalg.norm(v) <= 0:
            raise PreconditionError("conditioned ket must have positive norm")
        v.setflags(write=False)
        object.__setattr__(self, "chi", v)

    def norm_sq(self) -> float:
        """Stored-part squared norm (without the exp(log_norm_sq) factor)."""
        return float(np.linalg.norm(self.chi) ** 2)

    def total_log_norm_sq(self) -> float:
        return self.log_norm_sq + float(np.log(self.norm_sq()))

    def expectation(self, X) -> complex:
        """Normalized expectation <chi|X|chi> / <chi|chi>."""
        x = _as_matrix(X)
        return complex(self.chi.conj() @ x @ self.chi) / self.norm_sq()


@dataclass(frozen=True)
class ConditionedDensity:
    """Normalized conditioned density matrix."""

    rho: np.ndarray
    t: float

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=complex)
        if abs(np.trace(r) - 1.0) > 1e-8:
            raise PreconditionError("conditioned density must have unit trace")
        r.setflags(write=False)
        object.__setattr__(self, "rho", r)

    def expectation(self, X) -> complex:
        return complex(np.trace(_as_matrix(X) @ self.rho))

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))


@dataclass
class QuantumRecord:
    """Measured quadrature increments with filter output along one run."""

    dt: float
    times: np.ndarray
    dY: np.ndarray
    dI: np.ndarray
    pi: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.dY = np.asarray(self.dY, dtype=float)
        self.dI = np.asarray(self.dI, dtype=float)
        if self.times.shape[0] != self.dY.shape[0] + 1:
            raise PreconditionError("times must have one more entry than dY")
        if self.dI.shape != self.dY.shape:
            raise PreconditionError("dI must match dY in length")


def bz_step(ck: ConditionedKet, dy: float, model: EmissionAbsorptionModel,
            dt: float) -> ConditionedKet:
    """One Euler step of the linear conditioned-ket equation.

    chi <- chi - (L*L/2 + iH) chi dt + L chi dy, with no normalization.  If
    the stored norm underflows, the ket is rescaled and the factor moved into
    ``log_norm_sq`` (never silently dropped).
    """
    chi = ck.chi + (model.drift @ ck.chi) * dt + (model.L @ ck.chi) * dy
    log_shift = ck.log_norm_sq
    nsq = float(np.linalg.norm(chi) ** 2)
    if nsq <= 0:
        raise FilterCollapseError(f"conditioned ket vanished at t={ck.t}")
    if nsq < NORM_RESCALE_FLOOR:
        log_shift += np.log(nsq)
        chi = chi / np.sqrt(nsq)
    return ConditionedKet(chi, ck.t + dt, log_shift)


def qdmz_expectation(path, X) -> np.ndarray:
    """Unnormalized expectations <chi_t|X|chi_t> along a conditioned-ket path.

    Rescaling factors accumulated in ``log_norm_sq`` are reapplied, so the
    values are comparable across the whole path.
    """
    x = _as_matrix(X)
    out = np.empty(len(path), dtype=complex)
    for i, ck in enumerate(path):
        out[i] = (ck.chi.conj() @ x @ ck.chi) * np.exp(ck.log_norm_sq)
    return out


def _clip_positive(rho: np.ndarray, tol: float = TOL_POS):
    """Project onto the positive cone if an eigenvalue dips below -tol.

    Returns (rho, clipped_flag); clipping renormalizes the trace.
    """
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w[0] >= -tol:
        return rho, False
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    tr = np.trace(out).real
    if tr <= 0:
        raise FilterCollapseError("density lost all mass during positivity clip")
    return out / tr, True


def filter_step(cd: ConditionedDensity, dy: float, model: EmissionAbsorptionModel,
                dt: float, clip_log: list | None = None) -> ConditionedDensity:
    """One Euler step of the normalized density filter.

    d(rho) = Lindblad*(rho) dt + (L rho + rho L* - tr[(L+L*) rho] rho) dI with
    dI = dy - tr[(L+L*) rho] dt; the trace is renormalized each step (removes
    the O(dt^2) drift of the Euler scheme) and eigenvalues below -1e-9 are
    clipped with the event recorded in ``clip_log``.
    """
    rho = cd.rho
    L, Ld = model.L, model.L.conj().T
    e = float(np.real(np.trace(model.l_sum @ rho)))
    dI = dy - e * dt
    drho = (lindblad_adjoint_apply([L], model.H, rho).matrix * dt
            + (L @ rho + rho @ Ld - e * rho) * dI)
    rho = rho + drho
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.real(np.trace(rho)))
    if not np.isfinite(tr) or tr <= 0:
        raise FilterCollapseError(f"filter trace collapsed at t={cd.t}")
    rho = rho / tr
    rho, clipped = _clip_positive(rho)
    if clipped and clip_log is not None:
        clip_log.append(cd.t + dt)
    return ConditionedDensity(rho, cd.t + dt)


CLIP_EVERY = 25


def _model_mats(model: EmissionAbsorptionModel):
    L = model.L
    Ld = L.conj().T
    return L, Ld, model.H, Ld @ L, model.l_sum


def _stack_step(rho: np.ndarray, dI: np.ndarray, mats, dt: float):
    """Shared Euler step of the normalized filter on an (M, d, d) stack.

    Single trajectories run through the same code with M = 1, so ensemble
    members and individually sampled records are bitwise-identical given the
    same stream.  Returns (new stack, quadrature expectations before the step).
    """
    L, Ld, H, ldl, lsum = mats
    e = np.real(np.einsum("ij,mji->m", lsum, rho))
    lind = (L @ rho @ Ld - 0.5 * (ldl @ rho + rho @ ldl)
            - 1j * (H @ rho - rho @ H))
    inno = L @ rho + rho @ Ld - e[:, None, None] * rho
    rho = rho + lind * dt + inno * dI[:, None, None]
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, 1, 2)))
    tr = np.real(np.einsum("mii->m", rho))
    if not np.all(np.isfinite(tr)) or np.any(tr <= 0):
        raise FilterCollapseError("filter trace collapsed")
    rho = rho / tr[:, None, None]
    return rho, e


def _clip_stack(rho: np.ndarray):
    """Project stack members with an eigenvalue below -TOL_POS; counts events."""
    w, v = np.linalg.eigh(rho)
    bad = w[:, 0] < -TOL_POS
    nbad = int(np.sum(bad))
    if nbad:
        wc = np.clip(w[bad], 0.0, None)
        fixed = np.einsum("mik,mk,mjk->mij", v[bad], wc, np.conj(v[bad]))
        fixed /= np.real(np.einsum("mii->m", fixed))[:, None, None]
        rho[bad] = fixed
    return rho, nbad


def _pure_stack(psi0: Ket, M: int) -> np.ndarray:
    psi = psi0.amplitudes / np.linalg.norm(psi0.amplitudes)
    d = psi.shape[0]
    return np.broadcast_to(np.outer(psi, psi.conj()), (M, d, d)).copy()


def generate_record(psi0: Ket, model: EmissionAbsorptionModel, T: float, dt: float,
                    rng: RngStream, observables: dict | None = None,
                    record_every: int = 1):
    """Sample one physical measurement record and the conditioned state path.

    The normalized filter is driven by fresh Wiener innovations and the
    observation increments are reconstructed as dY = dI + pi(L+L*) dt.
    Consumes exactly round(T/dt) normals, in time order, drawn as one block.
    Expectations are recorded every step; states every ``record_every`` steps.
    Positivity is enforced every CLIP_EVERY steps with events logged.
    """
    observables = observables or {}
    n = int(round(T / dt))
    if n < 1 or dt <= 0:
        raise PreconditionError("need dt > 0 and T >= dt")
    dI = rng.generator().standard_normal(n) * np.sqrt(dt)
    rho = _pure_stack(psi0, 1)
    mats = _model_mats(model)
    lsum = mats[4]
    obs_mats = {name: _as_matrix(X) for name, X in observables.items()}
    clip_log: list = []
    dY = np.empty(n)
    pi = {name: [float(np.real(np.einsum("ij,mji->m", m, rho)[0]))]
          for name, m in obs_mats.items()}
    states = [ConditionedDensity(rho[0].copy(), 0.0)]
    for k in range(n):
        # round-trip dI through dY so that replaying the stored record
        # reproduces the state path bitwise
        e = np.real(np.einsum("ij,mji->m", lsum, rho))
        dY[k] = dI[k] + e[0] * dt
        rho, _ = _stack_step(rho, dY[k:k + 1] - e * dt, mats, dt)
        if (k + 1) % CLIP_EVERY == 0:
            rho, nbad = _clip_stack(rho)
            if nbad:
                clip_log.append((k + 1) * dt)
        for name, m in obs_mats.items():
            pi[name].append(float(np.real(np.einsum("ij,mji->m", m, rho)[0])))
        if (k + 1) % record_every == 0:
            states.append(ConditionedDensity(rho[0].copy(), (k + 1) * dt))
    record = QuantumRecord(dt, np.arange(n + 1) * dt, dY, dI,
                           pi={k: np.asarray(v) for k, v in pi.items()})
    record.clip_events = clip_log
    return record, states


def replay_record(psi0: Ket, model: EmissionAbsorptionModel, dY: np.ndarray,
                  dt: float, observables: dict):
    """Run the filter as a deterministic functional of a stored record.

    Replaying the same dY sequence yields bitwise-identical expectation paths;
    the record is ordinary classical data once measured.
    """
    dY = np.asarray(dY, dtype=float)
    rho = _pure_stack(psi0, 1)
    mats = _model_mats(model)
    lsum = mats[4]
    obs_mats = {name: _as_matrix(X) for name, X in observables.items()}
    pi = {name: [float(np.real(np.einsum("ij,mji->m", m, rho)[0]))]
          for name, m in obs_mats.items()}
    for k in range(dY.shape[0]):
        e = np.real(np.einsum("ij,mji->m", lsum, rho))
        dI = dY[k:k + 1] - e * dt
        rho, _ = _stack_step(rho, dI, mats, dt)
        if (k + 1) % CLIP_EVERY == 0:
            rho, _ = _clip_stack(rho)
        for name, m in obs_mats.items():
            pi[name].append(float(np.real(np.einsum("ij,mji->m", m, rho)[0])))
    return {k: np.asarray(v) for k, v in pi.items()}


def master_equation_solve(rho0, model: EmissionAbsorptionModel, T: float,
                          dt_ode: float):
    """Classical RK4 integration of d(rho)/dt = Lindblad*(rho).

    Returns (times, rho path).  Trace drift beyond 1e-9 raises.
    """
    rho = np.asarray(rho0, dtype=complex)
    n = int(round(T / dt_ode))
    L, H = model.L, model.H

    def rhs(r):
        return lindblad_adjoint_apply([L], H, r).matrix

    out = np.empty((n + 1,) + rho.shape, dtype=complex)
    out[0] = rho
    for k in range(n):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt_ode * k1)
        k3 = rhs(rho + 0.5 * dt_ode * k2)
        k4 = rhs(rho + dt_ode * k3)
        rho = rho + dt_ode / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = rho
        if abs(np.trace(rho).real - 1.0) > 1e-9:
            raise FilterCollapseError("master equation lost trace normalization")
    return np.arange(n + 1) * dt_ode, out


def _ensemble_filter(model: EmissionAbsorptionModel, psi0: Ket, T: float, dt: float,
                     M: int, master_seed: int, observables: dict,
                     record_every: int, chunk: int = 256):
    """Vectorized normalized filter over M independently seeded records.

    Trajectory m consumes the noise stream keyed by stream index m under the
    master seed, so any single member can be reproduced in isolation and the
    result is independent of chunking.  Returns (recorded times,
    {name: (n_rec, M) expectation array}, clip event count).
    """
    n = int(round(T / dt))
    mats = _model_mats(model)
    lsum = mats[4]
    sq = np.sqrt(dt)
    obs_names = list(observables)
    obs_mats = [np.asarray(_as_matrix(observables[k])) for k in obs_names]
    n_rec = 1 + n // record_every
    rec_times = np.empty(n_rec)
    samples = {k: np.empty((n_rec, M)) for k in obs_names}
    clip_events = 0
    for start in range(0, M, chunk):
        ms = range(start, min(start + chunk, M))
        Mc = len(ms)
        dI = np.empty((Mc, n))
        for i, m in enumerate(ms):
            dI[i] = RngStream(master_seed, m).generator().standard_normal(n) * sq
        rho = _pure_stack(psi0, Mc)
        rec_times[0] = 0.0
        for name, mat in zip(obs_names, obs_mats):
            samples[name][0, start:start + Mc] = np.real(
                np.einsum("ij,mji->m", mat, rho))
        r = 1
        for k in range(n):
            # same dY round-trip as generate_record, so member m is bitwise
            # reproducible from its own stream
            e = np.real(np.einsum("ij,mji->m", lsum, rho))
            dY = dI[:, k] + e * dt
            rho, _ = _stack_step(rho, dY - e * dt, mats, dt)
            if (k + 1) % CLIP_EVERY == 0:
                rho, nbad = _clip_stack(rho)
                clip_events += nbad
            if (k + 1) % record_every == 0:
                rec_times[r] = (k + 1) * dt
                for name, mat in zip(obs_names, obs_mats):
                    samples[name][r, start:start + Mc] = np.real(
                        np.einsum("ij,mji->m", mat, rho))
                r += 1
    return rec_times, samples, clip_events


@dataclass
class EnsembleResult:
    times: np.ndarray
    mean: dict
    se: dict
    master: dict
    sup_deviation: dict
    clip_events: int
    M: int


def ensemble_average(model: EmissionAbsorptionModel, psi0: Ket, T: float, dt: float,
                     M: int, observables: dict, master_seed: int,
                     record_every: int = 10, dt_master: float = 1e-3) -> EnsembleResult:
    """Ensemble mean of conditioned expectations versus the master equation.

    Averaging the filter over records reproduces the unconditional dynamics;
    the result reports the sup-t deviation from the deterministic solve and
    the Monte Carlo standard error per observable.
    """
    times, samples, clips = _ensemble_filter(
        model, psi0, T, dt, M, master_seed, observables, record_every)
    psi = psi0.amplitudes / np.linalg.norm(psi0.amplitudes)
    mt, mrho = master_equation_solve(np.outer(psi, psi.conj()), model, T, dt_master)
    mean, se, master, supdev = {}, {}, {}, {}
    for name, X in observables.items():
        arr = samples[name]
        mean[name] = arr.mean(axis=1)
        if arr.shape[1] > 1:
            se[name] = arr.std(axis=1, ddof=1) / np.sqrt(arr.shape[1])
        else:
            se[name] = np.zeros(arr.shape[0])
        x = _as_matrix(X)
        m_full = np.real(np.einsum("ij,tji->t", x, mrho))
        master[name] = np.interp(times, mt, m_full)
        supdev[name] = float(np.max(np.abs(mean[name] - master[name])))
    return EnsembleResult(times, mean, se, master, supdev, clips, M)


def norm_martingale_check(model: EmissionAbsorptionModel, psi0: Ket, T: float,
                          dt: float, M: int, seed: int) -> dict:
    """Drive the linear ket with raw Wiener increments and average its norm.

    Under the reference measure the squared norm is a mean-one martingale
    (it is the likelihood ratio of the physical record law); returns the
    ensemble mean, its standard error and the deviation in SE units.
    """
    n = int(round(T / dt))
    gen = RngStream(seed, 0).generator()
    psi = psi0.amplitudes / np.linalg.norm(psi0.amplitudes)
    chi = np.broadcast_to(psi, (M, model.dim)).copy()
    A, L = model.drift, model.L
    sq = np.sqrt(dt)
    for _ in range(n):
        dy = sq * gen.standard_normal(M)
        chi = chi + (chi @ A.T) * dt + (chi @ L.T) * dy[:, None]
    nsq = np.sum(np.abs(chi) ** 2, axis=1)
    mean = float(nsq.mean())
    se = float(nsq.std(ddof=1) / np.sqrt(M))
    return {"mean": mean, "se": se,
            "deviation_sigmas": abs(mean - 1.0) / se if se > 0 else 0.0}


def _batched_expm_hermitian_times(K: np.ndarray) -> np.ndarray:
    """exp(-i K) for a stack of hermitian matrices, via batched eigh."""
    w, v = np.linalg.eigh(K)
    phase = np.exp(-1j * w)
    return np.einsum("mik,mk,mjk->mij", v, phase, np.conj(v))


def _superop_expm_apply(mat: np.ndarray, T: float, X: np.ndarray) -> np.ndarray:
    """Apply exp(T * mat) to vec(X) and reshape back (column-major vec)."""
    d = X.shape[0]
    vec = X.reshape(d * d, order="F")
    out = expm(T * mat) @ vec
    return out.reshape(d, d, order="F")


def _superop_left_right(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix of X -> A X B under column-major vec: kron(B^T, A)."""
    return np.kron(B.T, A)


def classical_wiener_unitary(H, R, X, T: float, dt: float, M: int, seed: int) -> dict:
    """Ensemble check of the Wiener-conjugation evolution against its generator.

    Composes exact exponentials exp(-i H dt - i R dW) step by step over M
    sample paths, averages U* X U at time T, and compares with exp(T G) X
    where G X = -i[X, H] - (1/2)[[X, R], R] (dense superoperator
    exponential).  Returns mean, oracle and per-entry standard error.
    """
    H = _as_matrix(H)
    R = _as_matrix(R)
    X = _as_matrix(X)
    if max_abs(H - H.conj().T) > 1e-10 or max_abs(R - R.conj().T) > 1e-10:
        raise StructureError("H and R must be hermitian")
    d = H.shape[0]
    n = int(round(T / dt))
    gen = RngStream(seed, 0).generator()
    U = np.broadcast_to(np.eye(d, dtype=complex), (M, d, d)).copy()
    sq = np.sqrt(dt)
    for _ in range(n):
        dW = sq * gen.standard_normal(M)
        K = H[None, :, :] * dt + R[None, :, :] * dW[:, None, None]
        U = _batched_expm_hermitian_times(K) @ U
    samples = np.conj(np.swapaxes(U, 1, 2)) @ X @ U
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(M)
    eye = np.eye(d)
    R2 = R @ R
    # G X = -i(XH - HX) - (1/2)(X R^2 - 2 R X R + R^2 X)
    gmat = (-1j * (_superop_left_right(eye, H) - _superop_left_right(H, eye))
            - 0.5 * (_superop_left_right(eye, R2)
                     - 2.0 * _superop_left_right(R, R)
                     + _superop_left_right(R2, eye)))
    oracle = _superop_expm_apply(gmat, T, X)
    return {"mean": mean, "oracle": oracle, "se": np.abs(se),
            "max_error": max_abs(mean - oracle)}


def poisson_kick_evolution(S, nu: float, X, T: float, dt: float, M: int,
                           seed: int) -> dict:
    """Ensemble check of the Poisson unitary-kick evolution.

    Kick counts over [0, T] are sampled exactly as Poisson(nu T) per
    trajectory (``dt`` only sets the oracle's reporting grid); the ensemble
    mean of S*^N X S^N is compared with exp(T nu (S* X S - X)) via a dense
    superoperator exponential.
    """
    S = _as_matrix(S)
    X = _as_matrix(X)
    if max_abs(S.conj().T @ S - np.eye(S.shape[0])) > 1e-10:
        raise StructureError("S must be unitary")
    if nu < 0:
        raise PreconditionError("rate must be nonnegative")
    gen = RngStream(seed, 0).generator()
    counts = gen.poisson(nu * T, size=M)
    d = S.shape[0]
    samples = np.empty((M,) + X.shape, dtype=complex)
    cache = {}
    for i, c in enumerate(counts):
        c = int(c)
        if c not in cache:
            Sc = np.linalg.matrix_power(S, c)
            cache[c] = Sc.conj().T @ X @ Sc
        samples[i] = cache[c]
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(M)
    gmat = nu * (_superop_left_right(S.conj().T, S) - np.eye(d * d))
    oracle = _superop_expm_apply(gmat, T, X)
    return {"mean": mean, "oracle": oracle, "se": np.abs(se),
            "max_error": max_abs(mean - oracle)}
