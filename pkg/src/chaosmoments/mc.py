"""Monte Carlo sampling of Gaussian chaoses and empirical moment/tail estimates.

Samples are generated in fixed chunks of 4096 draws. Chunk ``c`` always
uses the substream keyed by ``(seed, c)``, so the sample vector is
bit-identical for any thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import _rng
from .norms import NormResult, SolverConfig, grouped_norm
from .partitions import Partition, PartitionError, parse_partition
from .tensor import Tensor, TensorError, contract_array, unfold_array

# cap on the intermediate array held while contracting one chunk
_MAX_WORK = 1 << 24


class SupportError(ValueError):
    """Coupled sampling needs a tensor supported on i_1 < ... < i_d."""


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _evaluate(arr: np.ndarray, gs: list[np.ndarray]) -> np.ndarray:
    """Row b of the result is the form of ``arr`` at ``(gs[0][b], ..., gs[-1][b])``."""
    shape = arr.shape
    B = gs[0].shape[0]
    prefix = math.prod(shape[:-1])
    step = max(1, _MAX_WORK // max(prefix, 1))
    out = np.empty(B)
    flat = arr.reshape(-1, shape[-1])
    for lo in range(0, B, step):
        hi = min(lo + step, B)
        X = flat @ gs[-1][lo:hi].T
        for j in range(len(shape) - 2, -1, -1):
            X = X.reshape(-1, shape[j], hi - lo)
            X = np.einsum("ajb,bj->ab", X, gs[j][lo:hi])
        out[lo:hi] = X.reshape(hi - lo)
    return out


def sample_decoupled(A: Tensor, N: int, seed: int = 0, threads: int = 1) -> np.ndarray:
    """``N`` draws of ``sum_i a_i g^(1)_{i_1} ... g^(d)_{i_d}``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    arr = A.array

    def chunk(bounds):
        lo, hi = bounds
        rng = _rng.substream(seed, _rng.SAMPLE, lo // _rng.CHUNK)
        gs = [rng.standard_normal((hi - lo, n)) for n in arr.shape]
        return _evaluate(arr, gs)

    return np.concatenate(_map(chunk, _rng.chunk_bounds(N), threads))


def check_coupled_support(A: Tensor) -> None:
    n = A.shape[0]
    if any(m != n for m in A.shape):
        raise SupportError(f"coupled chaos needs equal axis lengths, got {A.shape}")
    idx = np.indices(A.shape)
    increasing = np.ones(A.shape, dtype=bool)
    for j in range(A.order - 1):
        increasing &= idx[j] < idx[j + 1]
    if np.any(A.array[~increasing]):
        bad = tuple(int(i) + 1 for i in np.argwhere((A.array != 0) & ~increasing)[0])
        raise SupportError(f"nonzero coefficient off the increasing support at {bad}")


def sample_coupled(A: Tensor, N: int, seed: int = 0, threads: int = 1) -> np.ndarray:
    """``N`` draws of ``sum_{i_1<...<i_d} a_i g_{i_1} ... g_{i_d}`` (one Gaussian vector)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    check_coupled_support(A)
    arr = A.array

    def chunk(bounds):
        lo, hi = bounds
        rng = _rng.substream(seed, _rng.SAMPLE, lo // _rng.CHUNK)
        g = rng.standard_normal((hi - lo, arr.shape[0]))
        return _evaluate(arr, [g] * arr.ndim)

    return np.concatenate(_map(chunk, _rng.chunk_bounds(N), threads))


@dataclass(frozen=True)
class PNormEstimate:
    p: float
    value: float
    ci_lo: float
    ci_hi: float
    se: float
    degenerate: bool = False
    # the largest |S_n|^p carries more than half of the moment sum
    dominated: bool = False


def _log_pnorms(logabs: np.ndarray, ps: np.ndarray) -> np.ndarray:
    n = logabs.shape[-1]
    return np.array([(logsumexp(p * logabs, axis=-1) - math.log(n)) / p for p in ps])


def empirical_pnorm(
    samples,
    ps: Sequence[float],
    n_boot: int = 200,
    seed: int = 0,
    level: float = 0.95,
) -> list[PNormEstimate]:
    """``((1/N) sum |S_n|^p)^(1/p)`` per ``p`` with percentile bootstrap intervals.

    Moments are accumulated as log-sum-exp of ``p log|S_n|``. All-zero
    samples give 0 with ``degenerate=True``.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("no samples")
    ps = np.asarray(ps, dtype=float)
    if np.any(ps < 1):
        raise ValueError("p must be >= 1")
    if not np.any(s):
        return [PNormEstimate(float(p), 0.0, 0.0, 0.0, 0.0, degenerate=True) for p in ps]
    with np.errstate(divide="ignore"):
        logabs = np.log(np.abs(s))
    point = np.exp(_log_pnorms(logabs, ps))
    top = logabs.max()
    share = np.array([math.exp(p * top - logsumexp(p * logabs)) for p in ps])

    rng = _rng.substream(seed, _rng.BOOTSTRAP)
    boot = np.empty((n_boot, ps.size))
    for b in range(n_boot):
        idx = rng.integers(0, s.size, s.size)
        boot[b] = np.exp(_log_pnorms(logabs[idx], ps))
    alpha = (1 - level) / 2
    lo, hi = np.quantile(boot, [alpha, 1 - alpha], axis=0)
    # rescale before squaring so huge samples do not overflow
    se = (boot / point).std(axis=0, ddof=1) * point if n_boot > 1 else np.zeros(ps.size)
    return [
        PNormEstimate(float(p), float(v), float(a), float(b), float(e), False, bool(sh > 0.5))
        for p, v, a, b, e, sh in zip(ps, point, lo, hi, se, share)
    ]


@dataclass(frozen=True)
class TailPoint:
    t: float
    prob: float
    ci_lo: float
    ci_hi: float
    count: int
    informative: bool


def empirical_tail(samples, ts: Sequence[float], min_count: int = 20) -> list[TailPoint]:
    """``P(|S| >= t)`` on a grid with Wilson 95% intervals.

    A point is informative when at least ``min_count`` samples exceed it.
    """
    from statsmodels.stats.proportion import proportion_confint

    a = np.sort(np.abs(np.asarray(samples, dtype=float).ravel()))
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0) or np.any(np.diff(ts) < 0):
        raise ValueError("t-grid must be nonnegative and ascending")
    n = a.size
    counts = n - np.searchsorted(a, ts, side="left")
    lo, hi = proportion_confint(counts, n, alpha=0.05, method="wilson")
    lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
    return [
        TailPoint(float(t), float(c / n), float(l), float(h), int(c), bool(c >= min_count))
        for t, c, l, h in zip(ts, counts, lo, hi)
    ]


@dataclass
class McReport:
    N: int
    seed: int
    mode: str
    pnorms: list[PNormEstimate]
    tail: list[TailPoint] = field(default_factory=list)

    COLUMNS = ("quantity", "x", "value", "ci_lo", "ci_hi", "se", "flag", "mode", "N", "seed")

    def rows(self) -> list[dict]:
        out = []
        for e in self.pnorms:
            flag = "degenerate" if e.degenerate else ("dominated" if e.dominated else "")
            out.append(dict(quantity="pnorm", x=e.p, value=e.value, ci_lo=e.ci_lo, ci_hi=e.ci_hi,
                            se=e.se, flag=flag, mode=self.mode, N=self.N, seed=self.seed))
        for q in self.tail:
            out.append(dict(quantity="tail", x=q.t, value=q.prob, ci_lo=q.ci_lo, ci_hi=q.ci_hi,
                            se="", flag="" if q.informative else "uninformative",
                            mode=self.mode, N=self.N, seed=self.seed))
        return out


def run_mc(
    A: Tensor,
    N: int,
    seed: int,
    ps: Sequence[float],
    ts: Sequence[float] = (),
    coupled: bool = False,
    threads: int = 1,
    n_boot: int = 200,
) -> McReport:
    sampler = sample_coupled if coupled else sample_decoupled
    s = sampler(A, N, seed, threads)
    pn = empirical_pnorm(s, ps, n_boot=n_boot, seed=seed)
    tail = empirical_tail(s, ts) if len(ts) else []
    return McReport(N, seed, "coupled" if coupled else "decoupled", pn, tail)


@dataclass(frozen=True)
class ExpectedNormEstimate:
    M: int
    values: np.ndarray = field(repr=False)
    mean: float
    ci_lo: float
    ci_hi: float
    se: float
    contracted: tuple[int, ...]
    partition: Partition | None
    nonconverged: int = 0

    def to_dict(self) -> dict:
        return {
            "contract": ",".join(str(j + 1) for j in self.contracted),
            "partition": str(self.partition) if self.partition is not None else "",
            "M": self.M,
            "mean": self.mean,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "se": self.se,
            "min": float(self.values.min()),
            "max": float(self.values.max()),
            "nonconverged": self.nonconverged,
        }


def expected_contracted_norm(
    A: Tensor,
    contract: Sequence[int],
    partition=None,
    M: int = 500,
    seed: int = 0,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
) -> ExpectedNormEstimate:
    """Monte Carlo mean of ``||(sum_{i_J} a_i prod_{j in J} g^(j)_{i_j})||_P``.

    ``contract`` lists 0-based axes contracted with fresh Gaussian vectors;
    ``partition`` groups the remaining axes, renumbered in their original
    order (all singletons when omitted). Contracting every axis estimates
    ``E|S|`` of the full chaos.
    """
    J = sorted(int(j) for j in contract)
    if not J:
        raise TensorError("at least one axis must be contracted")
    if len(set(J)) != len(J) or J[0] < 0 or J[-1] >= A.order:
        raise TensorError(f"invalid contracted axes {[j + 1 for j in J]} for order {A.order}")
    r = A.order - len(J)
    if r == 0:
        P = None
    elif partition is None:
        P = Partition.singletons(r)
    elif isinstance(partition, str):
        P = parse_partition(partition, r)
    else:
        P = partition
    if P is not None and P.d != r:
        raise PartitionError(f"partition must cover the {r} residual axes")
    arr = A.array
    M = int(M)
    if M < 1:
        raise ValueError("M must be >= 1")

    def draw(m: int):
        rng = _rng.substream(seed, _rng.ENORM, m)
        vecs = [rng.standard_normal(arr.shape[j]) for j in J]
        R = contract_array(arr, J, vecs)
        if P is None:
            return abs(float(R)), True
        res = grouped_norm(unfold_array(R, P.blocks), cfg, partition=P)
        return res.value, res.converged

    out = _map(draw, range(M), threads)
    values = np.array([v for v, _ in out])
    nonconv = sum(1 for _, c in out if not c)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return ExpectedNormEstimate(M, values, mean, mean - 1.96 * se, mean + 1.96 * se, se,
                                tuple(J), P, nonconv)
