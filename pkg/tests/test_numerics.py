import numpy as np
import pytest

from dereverb.errors import ArgumentError, SingularBandError
from dereverb.numerics import (NormalEquations, accumulate_batch,
                               accumulate_normal_equations, solve_hpd)


def _random_terms(rng, count, dim):
    terms = []
    for _ in range(count):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        t = complex(rng.standard_normal() + 1j * rng.standard_normal())
        w = float(rng.uniform(0.1, 2.0))
        terms.append((v, t, w))
    return terms


def _gaussian_elimination(A, b):
    """Independent complex solver: partial-pivot elimination."""
    A = np.array(A, dtype=np.complex128)
    b = np.array(b, dtype=np.complex128)
    n = len(b)
    for col in range(n):
        pivot = col + np.argmax(np.abs(A[col:, col]))
        A[[col, pivot]] = A[[pivot, col]]
        b[[col, pivot]] = b[[pivot, col]]
        for row in range(col + 1, n):
            factor = A[row, col] / A[col, col]
            A[row, col:] -= factor * A[col, col:]
            b[row] -= factor * b[col]
    x = np.zeros(n, dtype=np.complex128)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - A[row, row + 1:] @ x[row + 1:]) / A[row, row]
    return x


def test_single_term_expansion():
    ne = accumulate_normal_equations([(np.array([1.0, 1j]), 2.0, 1.0)])
    assert np.allclose(ne.Z, [[1.0, -1j], [1j, 1.0]])
    # q_m = v_m * conj(target): the second entry is i * 2 = 2i
    assert np.allclose(ne.q, [2.0, 2j])


def test_empty_sequence():
    ne = accumulate_normal_equations([], size=3)
    assert np.all(ne.Z == 0) and np.all(ne.q == 0)


def test_accumulate_matches_extended_precision_sum():
    rng = np.random.default_rng(0)
    dim = 4
    terms = _random_terms(rng, 100, dim)
    ne = accumulate_normal_equations(terms)
    Z = np.zeros((dim, dim), dtype=np.complex256)
    q = np.zeros(dim, dtype=np.complex256)
    for v, t, w in terms:
        v = v.astype(np.complex256)
        Z += np.outer(v, v.conj()) / w
        q += v * np.conj(t) / w
    assert np.max(np.abs(ne.Z - Z.astype(np.complex128))) < 1e-12 * np.max(np.abs(Z))
    assert np.max(np.abs(ne.q - q.astype(np.complex128))) < 1e-12 * np.max(np.abs(q))


def test_batch_matches_sequence_path():
    rng = np.random.default_rng(1)
    terms = _random_terms(rng, 30, 5)
    seq = accumulate_normal_equations(terms)
    vectors = np.stack([t[0] for t in terms])
    targets = np.array([t[1] for t in terms])
    weights = np.array([t[2] for t in terms])
    batch = accumulate_batch(vectors, targets, weights)
    assert np.allclose(seq.Z, batch.Z, rtol=1e-12, atol=1e-12)
    assert np.allclose(seq.q, batch.q, rtol=1e-12, atol=1e-12)


def test_zero_weight_rejected():
    with pytest.raises(ArgumentError):
        accumulate_normal_equations([(np.array([1.0]), 1.0, 0.0)])
    with pytest.raises(ArgumentError):
        accumulate_normal_equations([(np.array([1.0]), 1.0, -1.0)])


def test_solve_identity_system():
    ne = NormalEquations(np.eye(2), np.array([3.0, 4j]))
    w = solve_hpd(ne, loading=0.0)
    assert np.allclose(w, [3.0, 4j])


def test_solve_diagonal_system():
    ne = NormalEquations(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
    w = solve_hpd(ne, loading=0.0)
    assert np.allclose(w, [1.0, 1.0])


def test_solve_random_hpd_vs_elimination_oracle():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    Z = A @ A.conj().T + 8 * np.eye(8)
    Z = 0.5 * (Z + Z.conj().T)
    q = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    w = solve_hpd(NormalEquations(Z, q), loading=0.0)
    assert np.linalg.norm(Z @ w - q) / np.linalg.norm(q) < 1e-10
    oracle = _gaussian_elimination(Z, q)
    assert np.allclose(w, oracle, rtol=1e-8, atol=1e-10)


def test_zero_system_returns_zero():
    ne = accumulate_normal_equations([], size=4)
    assert np.all(solve_hpd(ne) == 0)


def test_zero_matrix_nonzero_rhs_raises():
    ne = NormalEquations(np.zeros((2, 2)), np.array([1.0, 0.0]))
    with pytest.raises(SingularBandError):
        solve_hpd(ne)


def test_minimizer_property():
    rng = np.random.default_rng(3)
    terms = _random_terms(rng, 40, 3)
    ne = accumulate_normal_equations(terms)
    w_star = solve_hpd(ne, loading=0.0)

    def cost(w):
        return sum(abs(t - np.vdot(w, v)) ** 2 / lam for v, t, lam in terms)

    base = cost(w_star)
    for _ in range(20):
        dw = 0.1 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
        assert cost(w_star + dw) >= base - 1e-10


def test_permutation_invariance():
    rng = np.random.default_rng(4)
    terms = _random_terms(rng, 25, 4)
    w1 = solve_hpd(accumulate_normal_equations(terms))
    rng.shuffle(terms)
    w2 = solve_hpd(accumulate_normal_equations(terms))
    assert np.allclose(w1, w2, rtol=1e-10, atol=1e-12)


def test_hermitian_enforced():
    rng = np.random.default_rng(5)
    terms = _random_terms(rng, 50, 6)
    ne = accumulate_normal_equations(terms)
    assert np.max(np.abs(ne.Z - ne.Z.conj().T)) == 0.0
