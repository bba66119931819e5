import numpy as np
import pytest

from filterlab.bayes import ComplexGridFunction, GridDensity
from filterlab.errors import StructureError
from filterlab.operators import (SIGMA_MINUS, SIGMA_X, SIGMA_Z,
                                 lindblad_apply, max_abs)
from filterlab.qsc import (ItoExpr, SLHTriple, db, dbdag, dlam, dt_inc,
                           exp_vector_inner, heisenberg_increment,
                           hp_increment, ito_mul, ito_product,
                           output_increment, poisson_expr,
                           quadrature_commutator, quadrature_expr,
                           scattering_from_E, slh, unitarity_defect,
                           zero_expr)


def random_slh(rng, d, n):
    L = rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))
    a = rng.standard_normal((n * d, n * d)) + 1j * rng.standard_normal((n * d, n * d))
    E = a + a.conj().T
    big = scattering_from_E(E).matrix
    S = big.reshape(n, d, n, d).transpose(0, 2, 1, 3)
    h = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return SLHTriple(S, L, h + h.conj().T)


def random_expr(rng, d, n_channels=1):
    terms = {}
    for basis in [dt_inc(), db(0), dbdag(0), dlam(0, 0)]:
        terms[basis] = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return ItoExpr(n_channels, d, terms)


class TestItoTable:
    def test_db_dbdag_is_dt(self):
        a = ItoExpr(1, 1, {db(0): np.eye(1)})
        b = ItoExpr(1, 1, {dbdag(0): np.eye(1)})
        prod = ito_mul(a, b)
        assert set(prod.terms) == {dt_inc()}
        assert prod.coefficient(dt_inc())[0, 0] == 1.0

    def test_dbdag_db_is_zero(self):
        a = ItoExpr(1, 1, {dbdag(0): np.eye(1)})
        b = ItoExpr(1, 1, {db(0): np.eye(1)})
        assert ito_mul(a, b).terms == {}

    def test_dlambda_squared(self):
        a = ItoExpr(1, 1, {dlam(0): np.eye(1)})
        prod = ito_mul(a, a)
        assert set(prod.terms) == {dlam(0)}

    def test_multichannel_contraction(self):
        a = ItoExpr(2, 1, {db(0): np.eye(1)})
        b = ItoExpr(2, 1, {dbdag(1): np.eye(1)})
        assert ito_mul(a, b).terms == {}
        c = ItoExpr(2, 1, {dlam(0, 1): np.eye(1)})
        d = ItoExpr(2, 1, {dlam(1, 0): np.eye(1)})
        prod = ito_mul(c, d)
        assert set(prod.terms) == {dlam(0, 0)}

    def test_associativity_random(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b, c = (random_expr(rng, 2) for _ in range(3))
            left = ito_mul(ito_mul(a, b), c)
            right = ito_mul(a, ito_mul(b, c))
            diff = left - right
            assert diff.max_coeff_norm() < 1e-12

    def test_channel_mismatch_rejected(self):
        with pytest.raises(StructureError):
            ito_mul(ItoExpr(1, 2, {db(0): np.eye(2)}),
                    ItoExpr(2, 2, {db(0): np.eye(2)}))


class TestClassicalEmbeddings:
    def test_quadrature_squares_to_dt(self):
        q = quadrature_expr()
        prod = ito_mul(q, q)
        assert set(prod.terms) == {dt_inc()}
        assert max_abs(prod.coefficient(dt_inc()) - np.eye(1)) == 0

    def test_poisson_squares_to_itself(self):
        n = poisson_expr(0.37)
        diff = ito_mul(n, n) - n
        assert diff.max_coeff_norm() < 1e-14

    def test_zero_increment_product(self):
        z = zero_expr(1, 2)
        prod = ito_product(np.eye(2), z, np.eye(2), z)
        assert prod.terms == {}


class TestHudsonParthasarathy:
    def test_emission_absorption_coefficients(self):
        L = SIGMA_MINUS
        H = 0.3 * SIGMA_Z
        theta = hp_increment(slh(L, H))
        assert max_abs(theta.coefficient(dbdag(0)) - L) == 0
        assert max_abs(theta.coefficient(db(0)) + L.conj().T) == 0
        drift = -(0.5 * L.conj().T @ L + 1j * H)
        assert max_abs(theta.coefficient(dt_inc()) - drift) < 1e-14
        assert dlam(0, 0) not in theta.terms  # S = I contributes nothing

    def test_scattering_only(self):
        S = scattering_from_E(SIGMA_X).matrix
        theta = hp_increment(slh(np.zeros((2, 2)), np.zeros((2, 2)), S))
        assert set(theta.terms) == {dlam(0, 0)}
        assert max_abs(theta.coefficient(dlam(0, 0)) - (S - np.eye(2))) < 1e-14

    def test_pure_hamiltonian(self):
        H = SIGMA_X
        theta = hp_increment(slh(np.zeros((2, 2)), H))
        assert set(theta.terms) == {dt_inc()}
        assert max_abs(theta.coefficient(dt_inc()) + 1j * H) == 0


class TestHeisenbergFlow:
    def test_identity_invariant(self):
        rng = np.random.default_rng(1)
        triple = random_slh(rng, 2, 1)
        flow = heisenberg_increment(triple, np.eye(2))
        assert flow.max_coeff_norm() < 1e-12

    def test_qubit_decay_coefficients(self):
        triple = slh(SIGMA_MINUS, np.zeros((2, 2)))
        flow = heisenberg_increment(triple, SIGMA_Z)
        assert max_abs(flow.coefficient(dt_inc()) + (SIGMA_Z + np.eye(2))) < 1e-14
        comm = SIGMA_Z @ SIGMA_MINUS - SIGMA_MINUS @ SIGMA_Z
        assert max_abs(flow.coefficient(dbdag(0)) - comm) < 1e-14

    def test_scattering_only_flow(self):
        S = scattering_from_E(0.8 * SIGMA_X).matrix
        triple = slh(np.zeros((2, 2)), np.zeros((2, 2)), S)
        X = SIGMA_Z
        flow = heisenberg_increment(triple, X)
        assert set(flow.terms) == {dlam(0, 0)}
        expected = S.conj().T @ X @ S - X
        assert max_abs(flow.coefficient(dlam(0, 0)) - expected) < 1e-13

    def test_dt_coefficient_is_lindblad(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            L = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            H = h + h.conj().T
            X = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            flow = heisenberg_increment(slh(L, H), X)
            oracle = lindblad_apply([L], H, X).matrix
            assert max_abs(flow.coefficient(dt_inc()) - oracle) < 1e-12

    def test_leibniz_consistency(self):
        # increment of a product equals the Ito product of the increments
        rng = np.random.default_rng(3)
        for _ in range(10):
            triple = random_slh(rng, 2, 1)
            X = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            Y = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            direct = heisenberg_increment(triple, X @ Y)
            dX = heisenberg_increment(triple, X)
            dY = heisenberg_increment(triple, Y)
            composed = ito_product(X, dX, Y, dY)
            assert (direct - composed).max_coeff_norm() < 1e-10


class TestUnitarity:
    def test_random_triples(self):
        rng = np.random.default_rng(4)
        for i in range(30):
            d = 2 + i % 3
            n = 1 + i % 2
            assert unitarity_defect(random_slh(rng, d, n)) <= 1e-10

    def test_corrupted_drift_detected(self):
        triple = slh(SIGMA_MINUS, np.zeros((2, 2)))
        theta = hp_increment(triple)
        eps = 1e-3
        terms = dict(theta.terms)
        terms[dt_inc()] = terms[dt_inc()] + eps * np.eye(2)
        bad = ItoExpr(1, 2, terms)
        defect = (bad.dagger() + bad + ito_mul(bad.dagger(), bad)).max_coeff_norm()
        assert defect == pytest.approx(2 * eps, rel=0.3)


class TestOutputFields:
    def test_no_coupling_passthrough(self):
        out = output_increment(slh(np.zeros((2, 2)), np.zeros((2, 2))))
        assert len(out) == 1
        assert set(out[0].terms) == {db(0)}
        assert max_abs(out[0].coefficient(db(0)) - np.eye(2)) == 0

    def test_scattering_rotates_input(self):
        S = scattering_from_E(1.1 * SIGMA_Z).matrix
        out = output_increment(slh(np.zeros((2, 2)), np.zeros((2, 2)), S))
        assert max_abs(out[0].coefficient(db(0)) - S) < 1e-14

    def test_quadrature_of_output(self):
        # dB_out + dB_out* = dQ + (L + L*) dt for S = I
        L = SIGMA_MINUS
        out = output_increment(slh(L, np.zeros((2, 2))))[0]
        q_out = out + out.dagger()
        assert max_abs(q_out.coefficient(dt_inc()) - (L + L.conj().T)) < 1e-14
        assert max_abs(q_out.coefficient(db(0)) - np.eye(2)) == 0
        assert max_abs(q_out.coefficient(dbdag(0)) - np.eye(2)) == 0


class TestScattering:
    def test_zero_gives_identity(self):
        assert max_abs(scattering_from_E(np.zeros((2, 2))).matrix - np.eye(2)) == 0

    def test_unitarity(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        S = scattering_from_E(a + a.conj().T).matrix
        assert max_abs(S.conj().T @ S - np.eye(3)) < 1e-12

    def test_scalar_value(self):
        S = scattering_from_E(np.array([[2.0]])).matrix
        assert S[0, 0] == pytest.approx(1j)

    def test_non_hermitian_rejected(self):
        with pytest.raises(StructureError):
            scattering_from_E([[0, 1], [0, 0]])


class TestFieldKinematics:
    def test_quadrature_commutator_value(self):
        assert quadrature_commutator(1.0, 1.0) == pytest.approx(2j)

    def test_zero_time(self):
        assert quadrature_commutator(3.0, 0.0) == 0

    def test_symmetry(self):
        assert quadrature_commutator(2.0, 5.0) == quadrature_commutator(5.0, 2.0)

    def test_vacuum_inner_product(self):
        shell = GridDensity(0, 1, np.zeros(64))
        vac = ComplexGridFunction(0, 1, np.zeros(64, dtype=complex))
        assert exp_vector_inner(vac, vac) == pytest.approx(1.0)
        beta = ComplexGridFunction(0, 1, np.full(64, 0.3 + 0.1j))
        assert exp_vector_inner(vac, beta) == pytest.approx(1.0)

    def test_gaussian_amplitudes_vs_closed_form(self):
        n = 4096
        shell = GridDensity(-8, 8, np.zeros(n))
        x = shell.x
        alpha = ComplexGridFunction(-8, 8, np.exp(-x ** 2) * (1 + 0.5j))
        beta = ComplexGridFunction(-8, 8, np.exp(-(x - 0.3) ** 2) * 0.7)
        got = exp_vector_inner(alpha, beta)
        # overlap of two Gaussians has a closed form
        inner = (1 - 0.5j) * 0.7 * np.sqrt(np.pi / 2) * np.exp(-0.3 ** 2 / 2)
        assert got == pytest.approx(np.exp(inner), rel=1e-6)
