"""Exact symbolic quantum Ito calculus.

Formal sums  sum_beta C_beta (x) d(beta)  over the basis increments
{dt, dB_k, dB*_k, dLambda_jk} with dense-matrix coefficients.  The
multiplication table (single channel)

    dB dB* = dt,   dB dLambda = dB,   dLambda dB* = dB*,   dLambda dLambda = dLambda,

all other products zero, extends to n channels by index contraction:
dB_j dB*_k = delta_jk dt, dB_j dLambda_kl = delta_jk dB_l,
dLambda_jk dB*_l = delta_kl dB*_j, dLambda_jk dLambda_lm = delta_kl dLambda_jm.

Coefficients are concrete finite matrices; adaptedness is modeled by the
Wick-ordered normal form the expression represents, so increments commute
with coefficients and products only pick up the table contraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError
from .operators import Operator, _as_matrix, lindblad_apply, max_abs

DT = "dt"
DB = "dB"
DBDAG = "dBdag"
DLAMBDA = "dLambda"


@dataclass(frozen=True)
class IncrementBasis:
    """One basis increment: dt, dB_j, dB*_j or dLambda_jk (0-based channels)."""

    kind: str
    j: int = 0
    k: int = 0

    def __post_init__(self):
        if self.kind not in (DT, DB, DBDAG, DLAMBDA):
            raise StructureError(f"unknown increment kind {self.kind!r}")

    def conj(self) -> "IncrementBasis":
        if self.kind == DB:
            return IncrementBasis(DBDAG, self.j)
        if self.kind == DBDAG:
            return IncrementBasis(DB, self.j)
        if self.kind == DLAMBDA:
            return IncrementBasis(DLAMBDA, self.k, self.j)
        return self

    def __str__(self):
        if self.kind == DT:
            return "dt"
        if self.kind == DB:
            return f"dB[{self.j}]"
        if self.kind == DBDAG:
            return f"dB*[{self.j}]"
        return f"dLambda[{self.j},{self.k}]"


def dt_inc() -> IncrementBasis:
    return IncrementBasis(DT)


def db(j: int = 0) -> IncrementBasis:
    return IncrementBasis(DB, j)


def dbdag(j: int = 0) -> IncrementBasis:
    return IncrementBasis(DBDAG, j)


def dlam(j: int = 0, k: int | None = None) -> IncrementBasis:
    return IncrementBasis(DLAMBDA, j, j if k is None else k)


def _mul_basis(u: IncrementBasis, v: IncrementBasis) -> IncrementBasis | None:
    """Quantum Ito table for a pair of basis increments (None means zero)."""
    if u.kind == DB and v.kind == DBDAG and u.j == v.j:
        return dt_inc()
    if u.kind == DB and v.kind == DLAMBDA and u.j == v.j:
        return db(v.k)
    if u.kind == DLAMBDA and v.kind == DBDAG and u.k == v.j:
        return dbdag(u.j)
    if u.kind == DLAMBDA and v.kind == DLAMBDA and u.k == v.j:
        return IncrementBasis(DLAMBDA, u.j, v.k)
    return None


@dataclass(frozen=True)
class ItoExpr:
    """Formal increment  sum_beta C_beta (x) d(beta), plus an optional
    non-differential operator summand (the integrated initial part)."""

    n_channels: int
    dim: int
    terms: dict = field(default_factory=dict)
    initial: np.ndarray | None = None

    def __post_init__(self):
        clean = {}
        for basis, coeff in self.terms.items():
            m = np.asarray(coeff, dtype=complex)
            if m.shape != (self.dim, self.dim):
                raise StructureError(f"coefficient of {basis} has shape {m.shape}")
            if basis.kind in (DB, DBDAG) and not 0 <= basis.j < self.n_channels:
                raise StructureError(f"channel index out of range in {basis}")
            if basis.kind == DLAMBDA and not (
                    0 <= basis.j < self.n_channels and 0 <= basis.k < self.n_channels):
                raise StructureError(f"channel index out of range in {basis}")
            if max_abs(m) > 0:
                clean[basis] = m
        object.__setattr__(self, "terms", clean)
        if self.initial is not None:
            m = np.asarray(self.initial, dtype=complex)
            if m.shape != (self.dim, self.dim):
                raise StructureError("initial part has wrong shape")
            object.__setattr__(self, "initial", m)

    def coefficient(self, basis: IncrementBasis) -> np.ndarray:
        return self.terms.get(basis, np.zeros((self.dim, self.dim), dtype=complex))

    def __add__(self, other: "ItoExpr") -> "ItoExpr":
        self._check_compat(other)
        terms = dict(self.terms)
        for b, c in other.terms.items():
            terms[b] = terms[b] + c if b in terms else c
        init = None
        if self.initial is not None or other.initial is not None:
            init = ((self.initial if self.initial is not None else 0)
                    + (other.initial if other.initial is not None else 0))
        return ItoExpr(self.n_channels, self.dim, terms, init)

    def __sub__(self, other: "ItoExpr") -> "ItoExpr":
        return self + other.scale(-1.0)

    def scale(self, c: complex) -> "ItoExpr":
        return ItoExpr(self.n_channels, self.dim,
                       {b: c * m for b, m in self.terms.items()},
                       None if self.initial is None else c * self.initial)

    def lmul(self, A) -> "ItoExpr":
        """Multiply every coefficient by the operator A on the left."""
        a = _as_matrix(A)
        return ItoExpr(self.n_channels, self.dim,
                       {b: a @ m for b, m in self.terms.items()},
                       None if self.initial is None else a @ self.initial)

    def rmul(self, A) -> "ItoExpr":
        """Multiply every coefficient by the operator A on the right."""
        a = _as_matrix(A)
        return ItoExpr(self.n_channels, self.dim,
                       {b: m @ a for b, m in self.terms.items()},
                       None if self.initial is None else self.initial @ a)

    def dagger(self) -> "ItoExpr":
        """Formal adjoint: coefficients are conjugated and dB <-> dB*,
        dLambda_jk -> dLambda_kj."""
        return ItoExpr(self.n_channels, self.dim,
                       {b.conj(): m.conj().T for b, m in self.terms.items()},
                       None if self.initial is None else self.initial.conj().T)

    def max_coeff_norm(self) -> float:
        if not self.terms:
            return 0.0
        return max(max_abs(m) for m in self.terms.values())

    def _check_compat(self, other: "ItoExpr"):
        if self.n_channels != other.n_channels or self.dim != other.dim:
            raise StructureError("channel count or dimension mismatch")


def zero_expr(n_channels: int, dim: int) -> ItoExpr:
    return ItoExpr(n_channels, dim, {})


def ito_mul(a: ItoExpr, b: ItoExpr) -> ItoExpr:
    """Product of two increments under the quantum Ito table.

    Bilinear extension; coefficients multiply as operators in order (a's
    coefficient times b's).  Non-differential parts do not contribute.
    """
    a._check_compat(b)
    terms: dict = {}
    for ub, uc in a.terms.items():
        for vb, vc in b.terms.items():
            w = _mul_basis(ub, vb)
            if w is None:
                continue
            prod = uc @ vc
            terms[w] = terms[w] + prod if w in terms else prod
    return ItoExpr(a.n_channels, a.dim, terms)


def ito_product(X, dX: ItoExpr, Y, dY: ItoExpr) -> ItoExpr:
    """Increment of a product:  d(XY) = (dX) Y + X (dY) + (dX)(dY).

    Operator order is preserved throughout.
    """
    return dX.rmul(Y) + dY.lmul(X) + ito_mul(dX, dY)


@dataclass(frozen=True)
class SLHTriple:
    """Scattering matrix, coupling column and Hamiltonian of one open system.

    S is stored as an (n, n, d, d) block array and must be unitary as an
    (n d, n d) matrix; L is (n, d, d); H is a hermitian (d, d) matrix.
    """

    S: np.ndarray
    L: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=complex)
        L = np.asarray(self.L, dtype=complex)
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise StructureError("H must be square")
        d = H.shape[0]
        if L.ndim == 2:
            L = L[None, :, :]
        n = L.shape[0]
        if L.shape != (n, d, d):
            raise StructureError("L must be an (n, d, d) stack")
        if S.ndim == 2:
            S = S[None, None, :, :]
        if S.shape != (n, n, d, d):
            raise StructureError("S must be an (n, n, d, d) block array")
        big = S.transpose(0, 2, 1, 3).reshape(n * d, n * d)
        if max_abs(big.conj().T @ big - np.eye(n * d)) > 1e-10:
            raise StructureError("S is not unitary")
        if max_abs(H - H.conj().T) > 1e-10:
            raise StructureError("H is not hermitian")
        for name, m in (("S", S), ("L", L), ("H", H)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n_channels(self) -> int:
        return self.L.shape[0]

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def slh(L, H, S=None) -> SLHTriple:
    """Build an SLHTriple; S defaults to the identity (no scattering)."""
    H = np.asarray(H, dtype=complex)
    d = H.shape[0]
    L = np.asarray(L, dtype=complex)
    if L.ndim == 2:
        L = L[None, :, :]
    n = L.shape[0]
    if S is None:
        S = np.zeros((n, n, d, d), dtype=complex)
        for j in range(n):
            S[j, j] = np.eye(d)
    return SLHTriple(S, L, H)


def hp_increment(triple: SLHTriple) -> ItoExpr:
    """Coefficients Theta of the unitary QSDE  dU = Theta U.

    dLambda_jk: S_jk - delta_jk;  dB*_j: L_j;  dB_k: -sum_j L_j* S_jk;
    dt: -(1/2 sum_k L_k* L_k + i H).
    """
    n, d = triple.n_channels, triple.dim
    S, L, H = triple.S, triple.L, triple.H
    eye = np.eye(d)
    terms = {}
    for j in range(n):
        for k in range(n):
            terms[dlam(j, k)] = S[j, k] - (eye if j == k else 0)
    for j in range(n):
        terms[dbdag(j)] = L[j]
    for k in range(n):
        terms[db(k)] = -sum(L[j].conj().T @ S[j, k] for j in range(n))
    ll = sum(L[k].conj().T @ L[k] for k in range(n))
    terms[dt_inc()] = -(0.5 * ll + 1j * H)
    return ItoExpr(n, d, terms)


def heisenberg_increment(triple: SLHTriple, X) -> ItoExpr:
    """Increment of the Heisenberg flow j_t(X) for the given (S, L, H).

    dLambda_jk: sum_l S*_lj X S_lk - delta_jk X;
    dB*_j: sum_l S*_lj [X, L_l];  dB_k: sum_l [L*_l, X] S_lk;
    dt: the Lindblad generator.  For S = I this reduces to
    L(X) dt + [X, L] dB* + [L*, X] dB.
    """
    x = _as_matrix(X)
    n, d = triple.n_channels, triple.dim
    if x.shape != (d, d):
        raise StructureError("X dimension does not match the SLH triple")
    S, L, H = triple.S, triple.L, triple.H
    terms = {}
    for j in range(n):
        for k in range(n):
            c = sum(S[l, j].conj().T @ x @ S[l, k] for l in range(n))
            if j == k:
                c = c - x
            terms[dlam(j, k)] = c
    for j in range(n):
        terms[dbdag(j)] = sum(
            S[l, j].conj().T @ (x @ L[l] - L[l] @ x) for l in range(n))
    for k in range(n):
        terms[db(k)] = sum(
            (L[l].conj().T @ x - x @ L[l].conj().T) @ S[l, k] for l in range(n))
    terms[dt_inc()] = lindblad_apply(list(L), H, x).matrix
    return ItoExpr(n, d, terms)


def unitarity_defect(triple: SLHTriple) -> float:
    """Symbolic check that d(U* U) = 0 under the Ito table.

    Builds Theta with dU = Theta U, forms Theta* + Theta + Theta* Theta (the
    sandwiched coefficients of d(U* U)) and returns the largest coefficient
    norm over all basis increments.
    """
    theta = hp_increment(triple)
    defect = theta.dagger() + theta + ito_mul(theta.dagger(), theta)
    return defect.max_coeff_norm()


def output_increment(triple: SLHTriple) -> list[ItoExpr]:
    """Output-field increments  dB_out_j = sum_k S_jk dB_k + L_j dt."""
    n, d = triple.n_channels, triple.dim
    out = []
    for j in range(n):
        terms = {db(k): np.array(triple.S[j, k]) for k in range(n)}
        terms[dt_inc()] = np.array(triple.L[j])
        out.append(ItoExpr(n, d, terms))
    return out


def scattering_from_E(E) -> Operator:
    """Cayley transform  S = (I + iE/2)(I - iE/2)^(-1) of a hermitian E."""
    e = _as_matrix(E)
    if max_abs(e - e.conj().T) > 1e-10:
        raise StructureError("E must be hermitian")
    eye = np.eye(e.shape[0])
    s = np.linalg.solve((eye - 0.5j * e).T, (eye + 0.5j * e).T).T
    return Operator(s, frozenset({"unitary"}))


def annihilation_commutator(t: float, s: float) -> float:
    """Integrated singular commutator  [B(t), B*(s)] = min(t, s)."""
    return float(min(t, s))


def quadrature_commutator(t: float, s: float) -> complex:
    """Commutator [Q(t), P(s)] of the conjugate quadrature processes.

    Q = B + B*, P = (B - B*)/i, so [Q(t), P(s)] = 2i min(t, s), assembled from
    the integrated commutator [B(t), B*(s)] = min(t, s).
    """
    m_ts = annihilation_commutator(t, s)
    m_st = annihilation_commutator(s, t)
    return (1.0 / 1j) * (-m_ts - m_st)


def exp_vector_inner(alpha, beta) -> complex:
    """Inner product of exponential vectors,  exp(<alpha|beta>), by quadrature.

    alpha and beta are ComplexGridFunction amplitudes on a common grid; the
    vacuum corresponds to the zero amplitude.
    """
    if alpha.n != beta.n or alpha.lo != beta.lo or alpha.hi != beta.hi:
        raise StructureError("alpha and beta must share one grid")
    inner = np.sum(np.conj(alpha.values) * beta.values) * alpha.dx
    return complex(np.exp(inner))


def quadrature_expr(dim: int = 1, n_channels: int = 1, channel: int = 0) -> ItoExpr:
    """The increment dQ = dB + dB* with identity coefficients."""
    eye = np.eye(dim)
    return ItoExpr(n_channels, dim, {db(channel): eye, dbdag(channel): eye})


def poisson_expr(nu: float, dim: int = 1, n_channels: int = 1, channel: int = 0) -> ItoExpr:
    """The increment dN = dLambda + sqrt(nu) dB* + sqrt(nu) dB + nu dt."""
    eye = np.eye(dim)
    rt = np.sqrt(nu)
    return ItoExpr(n_channels, dim, {
        dlam(channel, channel): eye,
        dbdag(channel): rt * eye,
        db(channel): rt * eye,
        dt_inc(): nu * eye,
    })
