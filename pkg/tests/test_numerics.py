from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detsample import numerics
from detsample.errors import IllConditioned, InvalidModel, SingularBlock, SingularMatrix
from detsample.numerics import (
    EnsembleMatrix,
    MarginalKernel,
    char_poly_coeffs,
    classify_matrix,
    det,
    ensemble_from_kernel,
    kernel_from_ensemble,
    read_matrix,
    schur_complement,
    write_matrix,
)

from conftest import random_npsd, random_psd


def test_classify_symmetric_psd():
    assert classify_matrix([[2.0, 1.0], [1.0, 2.0]]) == numerics.KIND_SYMMETRIC


def test_classify_nonsymmetric_psd():
    # symmetric part is I which is PSD
    assert classify_matrix([[1.0, 1.0], [-1.0, 1.0]]) == numerics.KIND_NONSYMMETRIC


def test_classify_indefinite():
    assert classify_matrix([[0.0, 2.0], [2.0, 0.0]]) == numerics.KIND_UNCLASSIFIED


def test_classify_empty():
    assert classify_matrix(np.zeros((0, 0))) == numerics.KIND_SYMMETRIC


def test_from_array_rejects_bad_shapes():
    with pytest.raises(InvalidModel):
        EnsembleMatrix.from_array(np.zeros((2, 3)))
    with pytest.raises(InvalidModel):
        EnsembleMatrix.from_array([[np.nan, 0.0], [0.0, 1.0]])


def test_from_array_rejects_wrong_declared_kind():
    with pytest.raises(InvalidModel):
        EnsembleMatrix.from_array([[1.0, 1.0], [-1.0, 1.0]], kind=numerics.KIND_SYMMETRIC)


def test_entries_read_only(small_ensemble):
    with pytest.raises(ValueError):
        small_ensemble.entries[0, 0] = 9.0


def test_det_known_value(small_ensemble):
    # det [[2,1],[1,2]] = 3
    assert det(small_ensemble.entries) == pytest.approx(3.0, rel=1e-12)
    assert det(np.zeros((0, 0))) == 1.0


def test_kernel_from_ensemble_known_value(small_ensemble):
    # L = [[2,1],[1,2]] has I+L = [[3,1],[1,3]], det 8,
    # K = L (I+L)^{-1} = [[5/8, 1/8], [1/8, 5/8]]
    k = kernel_from_ensemble(small_ensemble)
    assert np.allclose(k.entries, [[0.625, 0.125], [0.125, 0.625]], atol=1e-12)


def test_kernel_ensemble_round_trip():
    for seed in range(4):
        l0 = random_psd(6, seed)
        ens = EnsembleMatrix.from_array(l0)
        back = ensemble_from_kernel(kernel_from_ensemble(ens))
        assert np.allclose(back.entries, l0, atol=1e-8)


def test_kernel_round_trip_nonsymmetric():
    l0 = random_npsd(5, 3)
    ens = EnsembleMatrix.from_array(l0)
    assert ens.kind == numerics.KIND_NONSYMMETRIC
    back = ensemble_from_kernel(kernel_from_ensemble(ens))
    assert np.allclose(back.entries, l0, atol=1e-8)


def test_ensemble_from_kernel_singular():
    k = MarginalKernel(entries=np.array([[1.0, 0.0], [0.0, 0.5]]))
    with pytest.raises(SingularMatrix):
        ensemble_from_kernel(k)


def test_schur_complement_known_value(small_ensemble):
    # Conditioning [[2,1],[1,2]] on the second element: 2 - 1*(1/2)*1 = 1.5
    cond = schur_complement(small_ensemble, [1])
    assert cond.entries.shape == (1, 1)
    assert cond.entries[0, 0] == pytest.approx(1.5, rel=1e-12)
    assert cond.kind == numerics.KIND_SYMMETRIC


def test_schur_complement_empty_set(small_ensemble):
    assert schur_complement(small_ensemble, []) is small_ensemble


def test_schur_complement_singular_block():
    ens = EnsembleMatrix.from_array([[0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(SingularBlock):
        schur_complement(ens, [0])


def test_schur_determinant_factorization():
    # det(L_{T u A, T u A}) = det(L_TT) * det((L^T)_{A,A}) for disjoint T, A
    l0 = random_psd(7, 11)
    ens = EnsembleMatrix.from_array(l0)
    t = [1, 4]
    cond = schur_complement(ens, t)
    rest = [i for i in range(7) if i not in t]
    for a_rest in ([0, 2], [3], [0, 1, 2, 3, 4]):
        a = [rest[i] for i in a_rest]
        lhs = det(l0[np.ix_(t + a, t + a)])
        rhs = det(l0[np.ix_(t, t)]) * det(cond.entries[np.ix_(a_rest, a_rest)])
        assert lhs == pytest.approx(rhs, rel=1e-9)


def test_schur_nonsymmetric_preserves_kind():
    l0 = random_npsd(6, 5)
    cond = schur_complement(EnsembleMatrix.from_array(l0), [0, 3])
    assert cond.kind == numerics.KIND_NONSYMMETRIC
    # principal minors of the conditioned matrix stay nonnegative
    e = char_poly_coeffs(cond.entries)
    assert np.all(e >= -numerics.MINOR_TOL * max(1.0, np.abs(e).max()))


def test_char_poly_diagonal_known():
    # diag(1,2,3): e = (1, 6, 11, 6)
    e = char_poly_coeffs(np.diag([1.0, 2.0, 3.0]))
    assert np.allclose(e, [1.0, 6.0, 11.0, 6.0], atol=1e-9)


def test_char_poly_identity_counts_subsets():
    e = char_poly_coeffs(np.eye(5))
    assert np.allclose(e, [math.comb(5, j) for j in range(6)], atol=1e-8)


def test_char_poly_sum_is_det_identity_plus():
    for seed in range(3):
        l0 = random_psd(8, seed + 20)
        e = char_poly_coeffs(l0)
        assert e.sum() == pytest.approx(det(np.eye(8) + l0), rel=1e-9)


def test_char_poly_nonsymmetric_real():
    l0 = random_npsd(6, 9)
    e = char_poly_coeffs(l0)
    assert e[0] == pytest.approx(1.0, abs=1e-9)
    assert e[1] == pytest.approx(np.trace(l0), rel=1e-9)
    assert e[-1] == pytest.approx(det(l0), rel=1e-6, abs=1e-9)


def test_char_poly_large_uses_spectral_path():
    # Big enough that node evaluations would overflow or cancel.
    l0 = random_psd(60, 2, scale=2.0)
    e = char_poly_coeffs(l0)
    assert e.sum() == pytest.approx(det(np.eye(60) + l0), rel=1e-8)
    lam = np.linalg.eigvalsh(l0)
    assert e[1] == pytest.approx(lam.sum(), rel=1e-9)
    assert e[-1] == pytest.approx(np.prod(lam), rel=1e-6)


def test_char_poly_empty():
    assert char_poly_coeffs(np.zeros((0, 0))).tolist() == [1.0]


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=7), st.integers(min_value=0, max_value=10_000))
def test_char_poly_matches_brute_minors(n, seed):
    l0 = random_psd(n, seed)
    e = char_poly_coeffs(l0)
    # brute-force each coefficient as a sum over subsets
    import itertools

    for j in range(n + 1):
        brute = sum(
            det(l0[np.ix_(s, s)]) for s in itertools.combinations(range(n), j)
        )
        assert e[j] == pytest.approx(brute, rel=1e-8, abs=1e-12)


def test_matrix_file_round_trip(tmp_path):
    path = tmp_path / "m.txt"
    m = random_npsd(4, 1)
    write_matrix(path, m)
    back = read_matrix(path)
    assert np.array_equal(back, m)


def test_read_matrix_comments_and_errors(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# header\n2\n1.0 0.5  # row one\n0.5 1.0\n")
    m = read_matrix(path)
    assert np.allclose(m, [[1.0, 0.5], [0.5, 1.0]])
    bad = tmp_path / "bad.txt"
    bad.write_text("2\n1.0 0.5\n")
    with pytest.raises(InvalidModel):
        read_matrix(bad)
