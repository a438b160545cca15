"""Partition norms ``||A||_{I_1,...,I_k}``.

The norm is the supremum of the multilinear form of the unfolded tensor
over one unit vector per grouped axis. One block gives the Frobenius norm
and two blocks the top singular value of the unfolding; both are exact.
For three or more blocks the value comes from multi-start alternating
maximization (the higher-order power method) and is a certified lower
bound: the returned unit vectors attain it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _rng
from .partitions import Partition, PartitionError, all_partitions, enumerate_partitions, parse_partition, refines
from .tensor import Tensor, contract_array, unfold_array

_LETTERS = "abcdefgh"


class BudgetError(ValueError):
    """Raised when a brute-force grid would exceed its point budget."""


@dataclass(frozen=True)
class SolverConfig:
    restarts: int = 16
    max_iters: int = 500
    tol: float = 1e-10
    seed: int = 0

    def with_seed(self, seed: int) -> "SolverConfig":
        return SolverConfig(self.restarts, self.max_iters, self.tol, seed)


@dataclass(frozen=True)
class NormResult:
    value: float
    certificate: tuple[np.ndarray, ...]
    method: str
    restarts_used: int
    iterations: int
    converged: bool
    residual: float
    partition: Partition | None = None
    # objective after every sweep of the winning start (ALS only)
    history: tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "partition": str(self.partition) if self.partition is not None else None,
            "k": len(self.certificate),
            "value": self.value,
            "method": self.method,
            "restarts_used": self.restarts_used,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual": self.residual,
            "certificate": [v.tolist() for v in self.certificate],
        }


def multilinear_form(B: np.ndarray, vectors: Sequence[np.ndarray]) -> float:
    out = B
    for v in reversed(vectors):
        out = out @ v
    return float(out)


def _as_partition(P, d: int) -> Partition:
    if isinstance(P, str):
        P = parse_partition(P, d)
    if not isinstance(P, Partition):
        P = Partition.from_blocks(P, d)
    if P.d != d:
        raise PartitionError(f"partition of {P.d} axes used on a tensor of order {d}")
    return P


def _fix_sign(u: np.ndarray) -> float:
    i = int(np.argmax(np.abs(u)))
    return -1.0 if u[i] < 0 else 1.0


def _unit_basis(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[0] = 1.0
    return e


def _leading_left_vector(M: np.ndarray) -> np.ndarray:
    if M.shape[0] <= M.shape[1]:
        w, V = np.linalg.eigh(M @ M.T)
        u = V[:, -1]
    else:
        u = np.linalg.svd(M, full_matrices=False)[0][:, 0]
    return u * _fix_sign(u)


def _hosvd_start(B: np.ndarray) -> list[np.ndarray]:
    return [
        _leading_left_vector(np.moveaxis(B, l, 0).reshape(B.shape[l], -1))
        for l in range(B.ndim)
    ]


def _sequential_rank_one(T: np.ndarray) -> list[np.ndarray]:
    """Peel off axis 0 by a top singular pair, then recurse on the right factor."""
    if T.ndim == 1:
        n = np.linalg.norm(T)
        return [T / n if n > 0 else _unit_basis(T.size)]
    U, s, Vt = np.linalg.svd(T.reshape(T.shape[0], -1), full_matrices=False)
    return [U[:, 0]] + _sequential_rank_one(Vt[0].reshape(T.shape[1:]))


def _sequential_starts(B: np.ndarray) -> list[list[np.ndarray]]:
    """One start per axis, taken first in the peeling order."""
    starts = []
    k = B.ndim
    for l in range(k):
        order = [l] + [m for m in range(k) if m != l]
        vecs = _sequential_rank_one(np.transpose(B, order))
        start = [None] * k
        for m, v in zip(order, vecs):
            start[m] = v
        starts.append(start)
    return starts


class _Contractor:
    """Batched contraction of ``B`` with all but one of R vector tuples."""

    def __init__(self, B: np.ndarray, R: int):
        k = B.ndim
        self.B = B
        self.exprs = []
        dummy = [np.empty((R, n)) for n in B.shape]
        for l in range(k):
            ops = [_LETTERS[:k]] + ["z" + _LETTERS[m] for m in range(k) if m != l]
            expr = ",".join(ops) + "->z" + _LETTERS[l]
            args = [B] + [dummy[m] for m in range(k) if m != l]
            path = np.einsum_path(expr, *args, optimize="greedy")[0]
            self.exprs.append((expr, path))

    def __call__(self, X: list[np.ndarray], l: int) -> np.ndarray:
        expr, path = self.exprs[l]
        args = [self.B] + [X[m] for m in range(len(X)) if m != l]
        return np.einsum(expr, *args, optimize=path)


def _update_orders(k: int) -> list[tuple[int, ...]]:
    """Cyclic shifts of the axis order and their reversals.

    Basins of attraction depend on the order in which axes are updated, so
    starts cycle through these orders.
    """
    shifts = [tuple((s + m) % k for m in range(k)) for s in range(k)]
    return shifts + [tuple(reversed(o)) for o in shifts]


def _als(B: np.ndarray, starts: list[list[np.ndarray]], tol: float, max_iters: int):
    k = B.ndim
    R = len(starts)
    X = []
    for l in range(k):
        Xl = np.array([s[l] for s in starts], dtype=float)
        norms = np.linalg.norm(Xl, axis=1)
        bad = norms == 0
        Xl[bad] = _unit_basis(B.shape[l])
        norms[bad] = 1.0
        X.append(Xl / norms[:, None])
    orders = _update_orders(k)
    order = np.array([orders[r % len(orders)] for r in range(R)])
    contract = _Contractor(B, R)
    val = np.einsum("zi,zi->z", contract(X, k - 1), X[k - 1])
    active = np.ones(R, dtype=bool)
    converged = np.zeros(R, dtype=bool)
    iterations = np.zeros(R, dtype=int)
    residual = np.full(R, np.inf)
    history = [val.copy()]
    tiny = np.finfo(float).tiny
    for it in range(1, max_iters + 1):
        prev = val.copy()
        for step in range(k):
            for l in range(k):
                rows = np.flatnonzero(active & (order[:, step] == l))
                if rows.size == 0:
                    continue
                c = contract([x[rows] for x in X], l)
                nc = np.linalg.norm(c, axis=1)
                cur = np.einsum("zi,zi->z", c, X[l][rows])
                # keep the previous iterate unless the exact update is a real gain
                upd = (nc > 0) & (nc - cur > tol * np.maximum(nc, tiny))
                X[l][rows[upd]] = c[upd] / nc[upd, None]
                val[rows] = np.where(upd, nc, cur)
        rel = np.abs(val - prev) / np.maximum(np.abs(val), tiny)
        residual = np.where(active, rel, residual)
        iterations[active] = it
        done = active & (rel < tol)
        converged |= done
        active &= ~done
        history.append(val.copy())
        if not active.any():
            break
    best = int(np.argmax(val))
    hist = tuple(float(h[best]) for h in history[: iterations[best] + 1])
    cert = [X[l][best].copy() for l in range(k)]
    return cert, bool(converged[best]), int(iterations[best]), float(residual[best]), hist


def _exact_result(B: np.ndarray, P: Partition | None) -> NormResult:
    if B.ndim == 1:
        value = float(np.linalg.norm(B))
        cert = (B / value,) if value > 0 else (_unit_basis(B.size),)
        return NormResult(value, cert, "frobenius", 0, 0, True, 0.0, P)
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    u, v = U[:, 0], Vt[0]
    sign = _fix_sign(u)
    return NormResult(float(s[0]), (u * sign, v * sign), "spectral", 0, 0, True, 0.0, P)


def grouped_norm(
    B: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    extra_starts: Sequence[Sequence[np.ndarray]] = (),
    partition: Partition | None = None,
) -> NormResult:
    """Norm of an already-unfolded array over its own axes."""
    B = np.asarray(B, dtype=float)
    k = B.ndim
    if not np.any(B):
        cert = tuple(_unit_basis(n) for n in B.shape)
        method = {1: "frobenius", 2: "spectral"}.get(k, "als")
        return NormResult(0.0, cert, method, 0, 0, True, 0.0, partition)
    if k <= 2:
        return _exact_result(B, partition)

    starts = [_hosvd_start(B)] + _sequential_starts(B)
    starts += [[np.asarray(v, dtype=float) for v in s] for s in extra_starts]
    for r in range(cfg.restarts):
        rng = _rng.substream(cfg.seed, _rng.RESTART, r)
        starts.append([rng.standard_normal(n) for n in B.shape])
    cert, converged, iters, resid, hist = _als(B, starts, cfg.tol, cfg.max_iters)

    for l, n in enumerate(B.shape):
        if n == 1:
            others = [m for m in range(k) if m != l]
            c = contract_array(B, others, [cert[m] for m in others])
            cert[l] = np.array([1.0 if c[0] >= 0 else -1.0])
    value = multilinear_form(B, cert)
    if value < 0:
        cert[0] = -cert[0]
        value = -value
    return NormResult(value, tuple(cert), "als", len(starts), iters, converged, resid, partition, hist)


def partition_norm(
    A: Tensor,
    P,
    cfg: SolverConfig = SolverConfig(),
    extra_starts: Sequence[Sequence[np.ndarray]] = (),
) -> NormResult:
    """Compute ``||A||_P`` for a partition ``P`` of the axes of ``A``.

    ``P`` may be a :class:`Partition`, a ``"1|2,3"`` string, or 0-based
    blocks. ``extra_starts`` are additional ALS starting points given as
    grouped vectors (ignored on the exact paths).
    """
    P = _as_partition(P, A.order)
    B = unfold_array(A.array, P.blocks)
    return grouped_norm(B, cfg, extra_starts, P)


def lift_certificate(cert: Sequence[np.ndarray], P: Partition, Q: Partition, shape) -> list[np.ndarray]:
    """Turn a certificate for ``P`` into a feasible point for a coarser ``Q``.

    Each block of ``Q`` receives the tensor product of the vectors of the
    ``P`` blocks it contains, flattened in row-major order.
    """
    if not refines(P, Q):
        raise PartitionError(f"{P} does not refine {Q}")
    out = []
    for qb in Q.blocks:
        parts = [(pb, v) for pb, v in zip(P.blocks, cert) if pb[0] in qb]
        arr = np.ones(())
        axes: list[int] = []
        for pb, v in parts:
            arr = np.multiply.outer(arr, np.reshape(v, [shape[j] for j in pb]))
            axes.extend(pb)
        arr = np.transpose(arr, np.argsort(axes))
        out.append(arr.ravel())
    return out


def compute_norm_table(A: Tensor, cfg: SolverConfig = SolverConfig()) -> dict[Partition, NormResult]:
    """Norms for every partition of ``{1..d}``, in table order.

    Partitions with three or more blocks are solved finest first, and every
    already-solved refinement is lifted into an extra ALS start. The table
    is therefore monotone under refinement by construction.
    """
    d = A.order
    solved: dict[Partition, NormResult] = {}
    for k in range(d, 0, -1):
        for Q in enumerate_partitions(d, k):
            extra = []
            if k >= 3:
                extra = [
                    lift_certificate(res.certificate, P, Q, A.shape)
                    for P, res in solved.items()
                    if P.k > k and refines(P, Q)
                ]
            solved[Q] = partition_norm(A, Q, cfg, extra)
    return {P: solved[P] for P in all_partitions(d)}


def s_k_partitions(d: int, k: int) -> list[Partition]:
    """Partitions entering the partial sum ``s_k``.

    For ``k <= d-2`` every partition into ``k`` blocks. For ``k = d-1`` only
    the ``d-1`` partitions pairing some ``j < d`` with the last axis, all
    other axes singletons.
    """
    if d < 2 or not 1 <= k <= d - 1:
        raise PartitionError(f"s_k needs d >= 2 and 1 <= k <= d-1, got d={d}, k={k}")
    if k < d - 1:
        return enumerate_partitions(d, k)
    parts = []
    for j in range(d - 1):
        blocks = [(j, d - 1)] + [(l,) for l in range(d - 1) if l != j]
        parts.append(Partition.from_blocks(blocks, d))
    return parts


def s_k(A: Tensor, k: int, cfg: SolverConfig = SolverConfig(), table=None) -> float:
    """Sum of ``||A||_P`` over :func:`s_k_partitions`.

    Norms are read from ``table`` when given, otherwise computed.
    """
    parts = s_k_partitions(A.order, k)
    if table is not None:
        return float(sum(table[P].value for P in parts))
    return float(sum(partition_norm(A, P, cfg).value for P in parts))


def _sphere_grid(n: int, resolution: float) -> np.ndarray:
    """Unit vectors covering the sphere in R^n up to sign.

    Hyperspherical angles on a uniform grid with the given step; the last
    angle only spans [0, pi] because the form is odd in each vector.
    """
    if n == 1:
        return np.ones((1, 1))
    m = int(math.ceil(math.pi / resolution)) + 1
    theta = np.linspace(0.0, math.pi, m)
    grids = np.meshgrid(*([theta] * (n - 1)), indexing="ij")
    angles = np.stack([g.ravel() for g in grids], axis=1)
    pts = np.ones((angles.shape[0], n))
    sin_prod = np.ones(angles.shape[0])
    for i in range(n - 1):
        pts[:, i] = sin_prod * np.cos(angles[:, i])
        sin_prod = sin_prod * np.sin(angles[:, i])
    pts[:, n - 1] = sin_prod
    return pts


def injective_norm_oracle(
    A: Tensor,
    resolution: float = 0.01,
    partition=None,
    budget: int = 4_000_000,
) -> float:
    """Brute-force value of the partition norm (all singletons by default).

    Every grouped axis but the last two is swept over a deterministic
    spherical grid; the last two are maximized in closed form by the top
    singular value of the remaining matrix. The result is within
    O(resolution) below the true supremum.
    """
    if not 0 < resolution <= 0.1:
        raise ValueError(f"resolution must lie in (0, 0.1], got {resolution}")
    P = Partition.singletons(A.order) if partition is None else _as_partition(partition, A.order)
    B = unfold_array(A.array, P.blocks)
    k = B.ndim
    if k == 1:
        return float(np.linalg.norm(B))
    if k == 2:
        return float(np.linalg.svd(B, compute_uv=False)[0])
    if max(B.shape) > 4:
        raise BudgetError(f"grouped dimensions {B.shape} exceed 4")
    per_angle = int(math.ceil(math.pi / resolution)) + 1
    total = math.prod(per_angle ** (n - 1) for n in B.shape[: k - 2])
    if total > budget:
        raise BudgetError(f"grid of {total} points exceeds the budget {budget}")
    grids = [_sphere_grid(n, resolution) for n in B.shape[: k - 2]]

    best = 0.0
    first = grids[0]
    for lo in range(0, first.shape[0], 4096):
        C = np.tensordot(first[lo : lo + 4096], B, axes=([1], [0]))
        for g in grids[1:]:
            C = np.tensordot(C, g, axes=([1], [1]))
            C = np.moveaxis(C, -1, 1).reshape((-1,) + C.shape[1:-1])
        s = np.linalg.svd(C, compute_uv=False)[:, 0]
        best = max(best, float(s.max()))
    return best
