import math

import numpy as np
import pytest

from chaosmoments import Tensor, make_tensor
from chaosmoments.harness import (
    FamilySpec,
    generate_family,
    probe_conjecture,
    verify_sandwich,
    verify_tail,
    verify_thm2,
)
from chaosmoments.model import gaussian_abs_moment
from chaosmoments.tensor import TensorError

D1 = FamilySpec("user-file", count=1)


def test_rank_one_family_is_unit():
    spec = FamilySpec("rank-one", (2, 2, 2), count=4, seed=3)
    for A in generate_family(spec):
        assert A.frobenius() == pytest.approx(1.0, rel=1e-12)
        assert np.linalg.matrix_rank(A.array.reshape(2, 4)) == 1


def test_diagonal_family():
    (A,) = generate_family(FamilySpec("diagonal", (4, 4, 4)))
    assert A.frobenius() == pytest.approx(2.0)
    with pytest.raises(TensorError):
        generate_family(FamilySpec("diagonal", (3, 4)))


def test_gaussian_family_deterministic():
    spec = FamilySpec("gaussian-iid", (3, 2), count=3, seed=9)
    a, b = generate_family(spec), generate_family(spec)
    assert a == b
    assert a[0] != a[1]
    assert generate_family(FamilySpec("gaussian-iid", (3, 2), count=3, seed=10)) != a


def test_sparse_family():
    for A in generate_family(FamilySpec("sparse", (3, 3, 3), count=5, seed=1, sparsity=0.1)):
        assert A.frobenius() == pytest.approx(1.0)
        assert np.count_nonzero(A.array) >= 1


def test_family_rejects():
    with pytest.raises(ValueError):
        generate_family(FamilySpec("cauchy", (2,)))
    with pytest.raises(TensorError):
        generate_family(FamilySpec("gaussian-iid", (2, 0)))
    with pytest.raises(ValueError):
        generate_family(FamilySpec("gaussian-iid", (2,), count=0))
    with pytest.raises(ValueError):
        generate_family(FamilySpec("sparse", (2,), sparsity=0))


def test_user_file_family(tmp_path):
    from chaosmoments import save_tensor

    A = make_tensor([2], [3, 4])
    save_tensor(A, tmp_path / "a.json")
    assert generate_family(FamilySpec("user-file", path=str(tmp_path / "a.json"))) == [A]


def test_sandwich_d1_matches_gaussian_moments():
    ps = (2, 4, 8)
    rep = verify_sandwich(D1, ps, N=200_000, seed=1, tensors=[make_tensor([2], [3, 4])])
    assert rep.passed
    for r in rep.rows:
        target = gaussian_abs_moment(r["p"]) / math.sqrt(r["p"])
        assert r["m_p"] == pytest.approx(5 * math.sqrt(r["p"]), rel=1e-14)
        assert r["ratio_lo"] <= target <= r["ratio_hi"]
    assert rep.summary["d=1"]["c_lo"] == min(r["ratio"] for r in rep.rows)
    assert rep.summary["d=1"]["c_hi"] == max(r["ratio"] for r in rep.rows)


def test_sandwich_identity_matrix():
    A = Tensor.from_array(np.eye(9))
    rep = verify_sandwich(D1, (2, 4), N=100_000, seed=2, tensors=[A])
    r2 = rep.rows[0]
    assert r2["m_p"] == pytest.approx(3 * math.sqrt(2) + 2, rel=1e-12)
    assert r2["ratio_lo"] <= 3 / (3 * math.sqrt(2) + 2) <= r2["ratio_hi"]
    # d = 2 moment functional is the closed form sqrt(p)*HS + p*op
    assert rep.rows[1]["m_p"] == pytest.approx(2 * 3 + 4, rel=1e-12)


def test_sandwich_degenerate_and_violation():
    Z = Tensor.from_array(np.zeros((2, 2)))
    rep = verify_sandwich(D1, (2,), N=1000, tensors=[Z])
    assert rep.passed and rep.rows[0]["flag"] == "degenerate"
    A = Tensor.from_array(np.eye(3))
    tight = verify_sandwich(D1, (2,), N=20_000, tensors=[A], bracket=(0.9, 20))
    assert not tight.passed
    with pytest.raises(ValueError):
        verify_sandwich(D1, (1,), N=10, tensors=[A])


def test_sandwich_rows_carry_seeds():
    spec = FamilySpec("gaussian-iid", (2, 3), count=2, seed=4)
    rep = verify_sandwich(spec, (2,), N=5000, seed=7)
    seeds = {r["sample_seed"] for r in rep.rows}
    assert len(seeds) == 2
    assert rep.config["seed"] == 7 and rep.config["N"] == 5000
    again = verify_sandwich(spec, (2,), N=5000, seed=7, threads=2)
    assert again.rows == rep.rows


def test_tail_d1_fitted_constant():
    ts = np.linspace(0, 3, 31)
    rep = verify_tail(D1, ts, N=1_000_000, seed=3, tensors=[make_tensor([1], [1])])
    assert rep.passed
    assert 0 < rep.summary["d=1"]["c_u"] <= 2


def test_tail_uninformative_points():
    rep = verify_tail(D1, [0.5, 50.0], N=10_000, tensors=[Tensor.from_array(np.eye(2))])
    assert rep.rows[-1]["flag"] == "uninformative"
    assert rep.rows[0]["flag"] == ""
    assert math.isfinite(rep.summary["d=2"]["c_u"])


def test_tail_degenerate():
    rep = verify_tail(D1, [1.0], N=100, tensors=[Tensor.from_array(np.zeros(3))])
    assert rep.passed and rep.rows[0]["flag"] == "degenerate"


def test_thm2_identity():
    rep = verify_thm2(D1, M=3000, seed=5, tensors=[Tensor.from_array(np.eye(2))])
    (r,) = rep.rows
    assert r["lhs_lo"] <= math.sqrt(math.pi / 2) <= r["lhs_hi"]
    assert r["rhs_min"] == pytest.approx(2 * math.sqrt(2), rel=1e-12)
    assert r["argmin_p"] == 2
    assert rep.passed


def test_thm2_rank_one():
    # contracting one unit factor leaves |<w, g>| times a unit rank-one tensor
    A = generate_family(FamilySpec("rank-one", (2, 2, 2), seed=1))[0]
    rep = verify_thm2(D1, M=3000, seed=6, tensors=[A])
    (r,) = rep.rows
    assert r["lhs_lo"] <= math.sqrt(2 / math.pi) <= r["lhs_hi"]
    assert r["rhs_min"] == pytest.approx(2 ** -0.5 + 3 + 2 ** 0.5, rel=1e-8)


def test_thm2_degenerate_and_rejects():
    rep = verify_thm2(D1, M=10, tensors=[Tensor.from_array(np.zeros((2, 2)))])
    assert rep.passed and rep.rows[0]["flag"] == "degenerate"
    with pytest.raises(ValueError):
        verify_thm2(D1, M=10, tensors=[make_tensor([2], [1, 1])])


def test_conjecture_probe():
    A = generate_family(FamilySpec("rank-one", (2, 2, 2), seed=2))[0]
    rep = probe_conjecture(D1, M=200, tensors=[A, Tensor.from_array(np.zeros((2, 2, 2)))])
    assert rep.passed
    assert rep.rows[0]["conjecture_rhs"] == pytest.approx(3.0, rel=1e-8)
    assert rep.rows[1]["flag"] == "degenerate"
    assert rep.summary["ratio_min"] == rep.summary["ratio_max"] == rep.rows[0]["ratio"]


@pytest.mark.slow
def test_conjecture_histogram_d4():
    spec = FamilySpec("gaussian-iid", (3, 3, 3, 3), count=3, seed=1)
    rep = probe_conjecture(spec, M=10, bins=4)
    hist = rep.summary["histogram"]
    assert sum(hist["counts"]) == 3 and len(hist["edges"]) == 5
