import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaosmoments import Tensor
from chaosmoments.norms import (
    BudgetError,
    SolverConfig,
    compute_norm_table,
    grouped_norm,
    injective_norm_oracle,
    lift_certificate,
    multilinear_form,
    partition_norm,
    s_k,
)
from chaosmoments.partitions import Partition, all_partitions, parse_partition, refines
from chaosmoments.tensor import unfold_array

from conftest import rank_one

SQRT2 = math.sqrt(2)


def circle_oracle_222(arr, step=0.01):
    """Independent brute force for a 2x2x2 injective norm.

    Sweeps the first two unit vectors over circles with the given angular
    step; the best third vector is the normalized contraction.
    """
    a = np.arange(0.0, math.pi + step, step)
    X = np.stack([np.cos(a), np.sin(a)], axis=1)
    best = 0.0
    for x in X:
        M = np.einsum("i,ijk->jk", x, arr)
        best = max(best, float(np.linalg.norm(X @ M, axis=1).max()))
    return best


def test_identity_frobenius():
    r = partition_norm(Tensor.from_array(np.eye(2)), "1,2")
    assert r.method == "frobenius"
    assert math.isclose(r.value, 1.41421356, rel_tol=1e-8)


def test_identity_spectral():
    r = partition_norm(Tensor.from_array(np.eye(2)), "1|2")
    assert r.method == "spectral" and math.isclose(r.value, 1.0, rel_tol=1e-12)


def test_rank_one_all_partitions(ones222):
    for P in all_partitions(3):
        assert math.isclose(partition_norm(ones222, P).value, 2 * SQRT2, rel_tol=1e-10)


def test_diagonal_against_brute_force(diag222):
    oracle = circle_oracle_222(diag222.array)
    assert abs(oracle - 1.0) < 1e-3
    assert math.isclose(partition_norm(diag222, "1|2|3").value, 1.0, rel_tol=1e-10)
    svd = np.linalg.svd(unfold_array(diag222.array, [(0,), (1, 2)]), compute_uv=False)[0]
    assert math.isclose(partition_norm(diag222, "1|2,3").value, svd, rel_tol=1e-12)
    assert math.isclose(svd, 1.0, rel_tol=1e-12)
    assert math.isclose(partition_norm(diag222, "1,2,3").value, SQRT2, rel_tol=1e-12)


def test_zero_tensor():
    Z = Tensor.from_array(np.zeros((2, 3, 2)))
    for P in all_partitions(3):
        r = partition_norm(Z, P)
        assert r.value == 0.0 and r.converged
        assert all(v[0] == 1.0 and np.count_nonzero(v) == 1 for v in r.certificate)


def test_unit_dimension_sign_convention():
    A = Tensor.from_array(-np.ones((1, 2, 2)))
    r = partition_norm(A, "1|2|3")
    assert r.certificate[0].tolist() in ([1.0], [-1.0])
    assert math.isclose(r.value, 2.0, rel_tol=1e-10)
    assert multilinear_form(unfold_array(A.array, [(0,), (1,), (2,)]), r.certificate) >= 0


def random_tensor(rng, shape):
    return Tensor.from_array(rng.standard_normal(shape))


def check_certificate(A, r):
    assert all(abs(np.linalg.norm(v) - 1) < 1e-10 for v in r.certificate)
    B = unfold_array(A.array, r.partition.blocks)
    form = multilinear_form(B, r.certificate)
    assert math.isclose(form, r.value, rel_tol=1e-8, abs_tol=1e-12)
    assert 0 <= r.value <= A.frobenius() + 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_certificate_invariants(d, seed):
    rng = np.random.default_rng(seed)
    A = random_tensor(rng, tuple(rng.integers(1, 4, size=d)))
    for P in all_partitions(d):
        check_certificate(A, partition_norm(A, P))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5).filter(lambda x: abs(x) > 1e-3))
def test_homogeneity(seed, lam):
    rng = np.random.default_rng(seed)
    A = random_tensor(rng, (3, 2, 3))
    for P in all_partitions(3):
        a = partition_norm(A, P).value
        b = partition_norm(A.scaled(lam), P).value
        assert math.isclose(b, abs(lam) * a, rel_tol=1e-8)


@pytest.mark.parametrize("d", [3, 4])
def test_refinement_monotone_table(d):
    rng = np.random.default_rng(d)
    for _ in range(4):
        A = random_tensor(rng, tuple(rng.integers(2, 4, size=d)))
        table = compute_norm_table(A)
        for P, Q in itertools.product(table, repeat=2):
            if refines(P, Q):
                assert table[P].value <= table[Q].value + 1e-8
        values = [r.value for r in table.values()]
        assert table[Partition.singletons(d)].value == pytest.approx(min(values), abs=1e-8)
        assert table[Partition.whole(d)].value == pytest.approx(max(values), rel=1e-12)


@pytest.mark.parametrize("shape", [(3, 5), (64, 7), (2, 3, 4), (4, 1, 6), (5, 64)])
def test_bipartition_matches_eigen_route(shape):
    rng = np.random.default_rng(len(shape))
    A = random_tensor(rng, shape)
    d = len(shape)
    for P in all_partitions(d):
        if P.k != 2:
            continue
        M = unfold_array(A.array, P.blocks)
        G = M @ M.T if M.shape[0] <= M.shape[1] else M.T @ M
        expected = math.sqrt(np.linalg.eigvalsh(G)[-1])
        assert math.isclose(partition_norm(A, P).value, expected, rel_tol=1e-8)


def test_als_soundness_and_probes():
    rng = np.random.default_rng(7)
    A = random_tensor(rng, (3, 4, 3))
    r = partition_norm(A, "1|2|3")
    check_certificate(A, r)
    hist = np.array(r.history)
    assert np.all(np.diff(hist) >= -1e-12 * abs(hist[-1]))
    probes = [rng.standard_normal((1000, n)) for n in A.shape]
    probes = [p / np.linalg.norm(p, axis=1, keepdims=True) for p in probes]
    vals = np.einsum("ijk,ni,nj,nk->n", A.array, *probes)
    assert r.value >= vals.max()


def test_oracle_agreement_small_dims():
    rng = np.random.default_rng(11)
    for _ in range(8):
        shape = tuple(rng.integers(2, 4, size=3))
        A = random_tensor(rng, shape)
        est = partition_norm(A, "1|2|3").value
        oracle = injective_norm_oracle(A, 0.01)
        assert abs(est - oracle) <= 0.02
        assert oracle <= est + 1e-9


def test_oracle_examples(ones222, diag222):
    assert abs(injective_norm_oracle(ones222, 0.01) - 2 * SQRT2) <= 0.01
    assert abs(injective_norm_oracle(diag222, 0.01) - 1.0) <= 0.01
    assert injective_norm_oracle(Tensor.from_array(np.zeros((2, 2, 2))), 0.01) == 0.0


def test_oracle_independent_of_circle_sweep():
    rng = np.random.default_rng(3)
    arr = rng.standard_normal((2, 2, 2))
    assert abs(injective_norm_oracle(Tensor.from_array(arr), 0.01) - circle_oracle_222(arr)) < 1e-3


def test_oracle_limits():
    A = Tensor.from_array(np.ones((5, 2, 2)))
    with pytest.raises(BudgetError):
        injective_norm_oracle(A, 0.01)
    with pytest.raises(ValueError):
        injective_norm_oracle(Tensor.from_array(np.ones((2, 2, 2))), 0.5)
    with pytest.raises(BudgetError):
        injective_norm_oracle(Tensor.from_array(np.ones((4, 4, 2, 2))), 0.01)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(3)))
def test_permutation_equivariance(seed, perm):
    rng = np.random.default_rng(seed)
    A = random_tensor(rng, (2, 3, 4))
    At = A.transpose(perm)
    for P in all_partitions(3):
        # axis j of At is axis perm[j] of A
        Q = Partition.from_blocks([[perm.index(j) for j in b] for b in P.blocks], 3)
        a, b = partition_norm(A, P).value, partition_norm(At, Q).value
        tol = 1e-10 if P.k <= 2 else 1e-8
        assert math.isclose(a, b, rel_tol=tol)


def test_restarts_deterministic():
    rng = np.random.default_rng(5)
    A = random_tensor(rng, (3, 3, 3, 2))
    cfg = SolverConfig(restarts=8, seed=42)
    r1 = partition_norm(A, "1|2|3|4", cfg)
    r2 = partition_norm(A, "1|2|3|4", cfg)
    assert r1.value == r2.value
    assert all(np.array_equal(u, v) for u, v in zip(r1.certificate, r2.certificate))
    # HOSVD start, one sequential start per axis, then the random ones
    assert r1.restarts_used == 1 + 4 + 8


def test_budget_exhaustion_is_reported():
    rng = np.random.default_rng(0)
    A = random_tensor(rng, (4, 4, 4))
    r = partition_norm(A, "1|2|3", SolverConfig(restarts=2, max_iters=1, tol=1e-16))
    assert r.iterations == 1
    assert not r.converged
    check_certificate(A, r)


def test_lift_certificate_is_feasible():
    rng = np.random.default_rng(2)
    A = random_tensor(rng, (2, 3, 2, 3))
    P, Q = parse_partition("1|2|3|4"), parse_partition("1,3|2|4")
    r = partition_norm(A, P)
    lifted = lift_certificate(r.certificate, P, Q, A.shape)
    assert all(math.isclose(np.linalg.norm(v), 1.0, rel_tol=1e-12) for v in lifted)
    B = unfold_array(A.array, Q.blocks)
    assert math.isclose(multilinear_form(B, lifted), r.value, rel_tol=1e-10)


def test_s_k_examples(unit_rank_one3):
    A2 = Tensor.from_array(np.arange(6.0).reshape(2, 3))
    assert s_k(A2, 1) == pytest.approx(A2.frobenius(), rel=1e-12)
    u = np.ones(2)
    A = rank_one(u, u, u)
    assert s_k(A, 2) == pytest.approx(4 * SQRT2, rel=1e-10)
    assert s_k(unit_rank_one3, 2) == pytest.approx(2.0, rel=1e-10)
    assert s_k(Tensor.from_array(np.zeros((2, 2, 2, 2))), 2) == 0.0
    with pytest.raises(ValueError):
        s_k(A, 3)


def test_s_k_full_sum_for_small_k():
    rng = np.random.default_rng(4)
    A = random_tensor(rng, (2, 2, 2, 2))
    table = compute_norm_table(A)
    expected = sum(r.value for P, r in table.items() if P.k == 2)
    assert s_k(A, 2, table=table) == pytest.approx(expected, rel=1e-12)


def test_grouped_norm_serialization():
    r = grouped_norm(np.eye(3))
    d = r.to_dict()
    assert d["value"] == pytest.approx(1.0) and d["method"] == "spectral"
    assert len(d["certificate"]) == 2
