"""Finite-dimensional complex operator algebra.

Dense complex matrices with structural tags, spectral decompositions,
measurement postulates, commutators and Lindblad generators.  This is the
shared substrate for the quantum modules.

Basis convention for the qubit: index 0 is the excited state |e>, index 1 the
ground state |g>, so ``sigma_z = diag(+1, -1)`` satisfies sigma_z|e> = +|e>
and the lowering operator is ``sigma_minus = |g><e|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, StructureError, ZeroProbabilityError

TOL_HERM = 1e-10
TOL_NORM = 1e-10
TOL_SPEC = 1e-8
P_FLOOR = 1e-12

_VALID_TAGS = {"hermitian", "unitary", "projection"}


def _as_matrix(A) -> np.ndarray:
    m = A.matrix if isinstance(A, Operator) else np.asarray(A, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise StructureError(f"expected a square matrix, got shape {m.shape}")
    return m


def max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


@dataclass(frozen=True)
class Operator:
    """Dense complex square matrix with optional structural tags.

    Tags are verified at construction time; instances are immutable value
    types and safe to share between workers.
    """

    matrix: np.ndarray
    tags: frozenset = frozenset()

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StructureError(f"operator must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        tags = frozenset(self.tags)
        object.__setattr__(self, "tags", tags)
        bad = tags - _VALID_TAGS
        if bad:
            raise StructureError(f"unknown tags {sorted(bad)}")
        if "hermitian" in tags or "projection" in tags:
            if max_abs(m - m.conj().T) > TOL_HERM:
                raise StructureError("matrix tagged hermitian is not hermitian")
        if "projection" in tags:
            if max_abs(m @ m - m) > TOL_HERM:
                raise StructureError("matrix tagged projection is not idempotent")
        if "unitary" in tags:
            if max_abs(m.conj().T @ m - np.eye(m.shape[0])) > TOL_HERM:
                raise StructureError("matrix tagged unitary is not unitary")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T)

    def is_tagged(self, tag: str) -> bool:
        return tag in self.tags


def hermitian(matrix) -> Operator:
    return Operator(matrix, frozenset({"hermitian"}))


def projection(matrix) -> Operator:
    return Operator(matrix, frozenset({"projection", "hermitian"}))


def unitary(matrix) -> Operator:
    return Operator(matrix, frozenset({"unitary"}))


def identity(dim: int) -> Operator:
    return Operator(np.eye(dim), frozenset({"hermitian", "unitary", "projection"}))


# Pauli matrices and ladder operators in the (e, g) basis.
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)


@dataclass(frozen=True)
class Ket:
    """Complex state vector, optionally flagged as normalized."""

    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        v = np.array(self.amplitudes, dtype=complex).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)
        if self.normalized and abs(np.linalg.norm(v) - 1.0) > TOL_NORM:
            raise PreconditionError("ket flagged normalized has |norm - 1| > tol")

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct eigenvalues with their (possibly degenerate) eigenprojections."""

    eigenvalues: tuple
    projections: tuple

    def reconstruct(self) -> np.ndarray:
        return sum(a * P.matrix for a, P in zip(self.eigenvalues, self.projections))


def spectral_decompose(A: Operator, degeneracy_tol: float | None = None) -> SpectralDecomposition:
    """Spectral decomposition of a hermitian operator.

    Eigenvalues within ``degeneracy_tol`` of each other are merged into a
    single degenerate eigenspace.  Default tolerance is 1e-8 * ||A||.
    """
    if not isinstance(A, Operator) or not A.is_tagged("hermitian"):
        raise StructureError("spectral_decompose requires a hermitian-tagged Operator")
    m = A.matrix
    if degeneracy_tol is None:
        degeneracy_tol = 1e-8 * max(1.0, float(np.linalg.norm(m, 2)))
    w, v = np.linalg.eigh(m)
    eigenvalues = []
    projections = []
    i = 0
    n = len(w)
    while i < n:
        j = i + 1
        while j < n and w[j] - w[j - 1] <= degeneracy_tol:
            j += 1
        block = v[:, i:j]
        P = block @ block.conj().T
        P = 0.5 * (P + P.conj().T)
        eigenvalues.append(float(np.mean(w[i:j])))
        projections.append(projection(P))
        i = j
    return SpectralDecomposition(tuple(eigenvalues), tuple(projections))


def measurement_probabilities(A: Operator, psi: Ket) -> dict:
    """Outcome probabilities p_a = ||P_a psi||^2 for measuring A in state psi."""
    if not psi.normalized or abs(psi.norm() - 1.0) > TOL_NORM:
        raise PreconditionError("measurement requires a normalized ket")
    dec = spectral_decompose(A)
    probs = {}
    for a, P in zip(dec.eigenvalues, dec.projections):
        p = float(np.linalg.norm(P.matrix @ psi.amplitudes) ** 2)
        probs[a] = p
    return probs


def project_postulate(psi: Ket, P_a: Operator) -> Ket:
    """Project-and-normalize update after measuring the outcome of P_a."""
    if not psi.normalized or abs(psi.norm() - 1.0) > TOL_NORM:
        raise PreconditionError("projection postulate requires a normalized ket")
    if not P_a.is_tagged("projection"):
        raise StructureError("P_a must be a projection-tagged Operator")
    v = P_a.matrix @ psi.amplitudes
    p = float(np.linalg.norm(v) ** 2)
    if p < P_FLOOR:
        raise ZeroProbabilityError(f"outcome probability {p:.3e} below floor")
    return Ket(v / np.sqrt(p), normalized=True)


def commutator(A, B) -> Operator:
    """AB - BA, computed exactly (no tolerance)."""
    a, b = _as_matrix(A), _as_matrix(B)
    if a.shape != b.shape:
        raise StructureError(f"dimension mismatch {a.shape} vs {b.shape}")
    return Operator(a @ b - b @ a)


def is_compatible(A, B, tol: float = TOL_HERM) -> bool:
    """True iff the max-entry norm of [A, B] is below tol."""
    return max_abs(commutator(A, B).matrix) <= tol


def lindblad_apply(L_list, H, X) -> Operator:
    """Heisenberg-picture Lindblad generator.

    L(X) = sum_k ( (1/2) Lk* [X, Lk] + (1/2) [Lk*, X] Lk ) - i [X, H].
    """
    h = _as_matrix(H)
    x = _as_matrix(X)
    if h.shape != x.shape:
        raise StructureError("dimension mismatch between H and X")
    out = -1j * (x @ h - h @ x)
    for L in L_list:
        l = _as_matrix(L)
        if l.shape != x.shape:
            raise StructureError("dimension mismatch between L and X")
        ld = l.conj().T
        out = out + 0.5 * ld @ (x @ l - l @ x) + 0.5 * (ld @ x - x @ ld) @ l
    return Operator(out)


def lindblad_adjoint_apply(L_list, H, rho) -> Operator:
    """Schroedinger-picture (predual) Lindblad generator.

    L*(rho) = sum_k ( Lk rho Lk* - (1/2){Lk* Lk, rho} ) - i [H, rho].
    Trace-preserving by construction; dual to ``lindblad_apply``.
    """
    h = _as_matrix(H)
    r = _as_matrix(rho)
    if h.shape != r.shape:
        raise StructureError("dimension mismatch between H and rho")
    out = -1j * (h @ r - r @ h)
    for L in L_list:
        l = _as_matrix(L)
        ld = l.conj().T
        ldl = ld @ l
        out = out + l @ r @ ld - 0.5 * (ldl @ r + r @ ldl)
    return Operator(out)
