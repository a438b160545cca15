"""End-to-end verification experiments over families of test tensors.

Each experiment returns a :class:`Report`: flat rows with fixed columns, a
summary of fitted constants, and the configuration that reproduces it.
Per-tensor work runs in a thread pool; rows are assembled in tensor order
and every random step is keyed off the master seed, so reports do not
depend on the thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import _rng
from .mc import empirical_pnorm, empirical_tail, expected_contracted_norm, sample_decoupled
from .model import conjecture_rhs, envelope_lower, envelope_upper, moment_profile, mp, tail_exponent
from .norms import SolverConfig, compute_norm_table
from .partitions import Partition
from .tensor import Tensor, TensorError, load_tensor

KINDS = ("gaussian-iid", "rank-one", "diagonal", "sparse", "user-file")

DEFAULT_BRACKET = (0.05, 20.0)
DEFAULT_THM2_BOUND = 20.0
MIN_TAIL_COUNT = 20
MAX_P = 64


@dataclass(frozen=True)
class FamilySpec:
    kind: str
    shape: tuple[int, ...] = ()
    count: int = 1
    seed: int = 0
    sparsity: float = 0.5
    path: str | None = None

    @property
    def d(self) -> int:
        return len(self.shape)

    def describe(self) -> str:
        if self.kind == "user-file":
            return f"user-file:{self.path}"
        dims = "x".join(str(n) for n in self.shape)
        extra = f":q={self.sparsity}" if self.kind == "sparse" else ""
        return f"{self.kind}:{dims}{extra}"


def _generate_one(spec: FamilySpec, i: int) -> Tensor:
    shape = tuple(spec.shape)
    rng = _rng.substream(spec.seed, _rng.FAMILY, i)
    if spec.kind == "gaussian-iid":
        return Tensor(shape, rng.standard_normal(shape))
    if spec.kind == "rank-one":
        factors = [rng.standard_normal(n) for n in shape]
        arr = np.ones(())
        for f in factors:
            arr = np.multiply.outer(arr, f / np.linalg.norm(f))
        return Tensor(shape, arr)
    if spec.kind == "diagonal":
        if len(set(shape)) != 1:
            raise TensorError(f"diagonal family needs equal dimensions, got {shape}")
        arr = np.zeros(shape)
        for j in range(shape[0]):
            arr[(j,) * len(shape)] = 1.0
        return Tensor(shape, arr)
    if spec.kind == "sparse":
        if not 0 < spec.sparsity <= 1:
            raise ValueError("sparsity must lie in (0, 1]")
        vals = rng.standard_normal(shape)
        keep = rng.random(shape) < spec.sparsity
        if not keep.any():
            keep.flat[int(np.argmax(np.abs(vals)))] = True
        arr = np.where(keep, vals, 0.0)
        return Tensor(shape, arr / np.linalg.norm(arr))
    raise ValueError(f"unknown family kind {spec.kind!r}")


def generate_family(spec: FamilySpec) -> list[Tensor]:
    """Deterministic list of ``spec.count`` tensors."""
    if spec.kind not in KINDS:
        raise ValueError(f"unknown family kind {spec.kind!r}; choose from {KINDS}")
    if spec.count < 1:
        raise ValueError("count must be >= 1")
    if spec.kind == "user-file":
        if not spec.path:
            raise ValueError("user-file family needs a path")
        A = load_tensor(spec.path)
        return [A] * spec.count
    if not spec.shape or any(n < 1 for n in spec.shape):
        raise TensorError(f"invalid shape {spec.shape}")
    return [_generate_one(spec, i) for i in range(spec.count)]


@dataclass
class Report:
    kind: str
    columns: tuple[str, ...]
    rows: list[dict]
    summary: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    passed: bool = True


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _shape_str(A: Tensor) -> str:
    return "x".join(str(n) for n in A.shape)


def _base_config(family: FamilySpec, seed: int, cfg: SolverConfig, **extra) -> dict:
    return {"family": asdict(family), "seed": seed, "solver": asdict(cfg), **extra}


SANDWICH_COLUMNS = (
    "tensor", "family", "d", "shape", "p", "m_p", "emp_norm", "emp_lo", "emp_hi",
    "ratio", "ratio_lo", "ratio_hi", "flag", "sample_seed", "N",
)


def verify_sandwich(
    family: FamilySpec,
    ps: Sequence[float] = (2, 4, 8, 16),
    N: int = 200_000,
    seed: int = 0,
    cfg: SolverConfig = SolverConfig(),
    bracket: tuple[float, float] = DEFAULT_BRACKET,
    threads: int = 1,
    tensors: Sequence[Tensor] | None = None,
) -> Report:
    """Ratios of empirical chaos p-norms to the moment functional.

    A row fails when its bootstrap interval lies entirely outside
    ``bracket``. Rows for zero tensors or unconverged norm solves are
    flagged and excluded from the verdict.
    """
    if any(p < 2 or p > MAX_P for p in ps):
        raise ValueError(f"p-grid must lie in [2, {MAX_P}]")
    tensors = generate_family(family) if tensors is None else list(tensors)

    def one(item):
        i, A = item
        s_seed = _rng.derive_seed(seed, _rng.SAMPLE, i)
        base = dict(tensor=i, family=family.describe(), d=A.order, shape=_shape_str(A),
                    sample_seed=s_seed, N=N)
        if A.is_zero():
            return [dict(base, p=p, m_p=0.0, emp_norm=0.0, emp_lo=0.0, emp_hi=0.0, ratio="",
                         ratio_lo="", ratio_hi="", flag="degenerate") for p in ps]
        table = compute_norm_table(A, cfg)
        flag = "" if all(r.converged for r in table.values()) else "nonconverged"
        prof = moment_profile(table, ps)
        samples = sample_decoupled(A, N, s_seed)
        est = empirical_pnorm(samples, ps, seed=s_seed)
        rows = []
        for m, e in zip(prof.values, est):
            rows.append(dict(base, p=e.p, m_p=m, emp_norm=e.value, emp_lo=e.ci_lo, emp_hi=e.ci_hi,
                             ratio=e.value / m, ratio_lo=e.ci_lo / m, ratio_hi=e.ci_hi / m,
                             flag=flag or ("dominated" if e.dominated else "")))
        return rows

    rows = [r for block in _pmap(one, enumerate(tensors), threads) for r in block]
    lo, hi = bracket
    passed = True
    fitted: dict[int, dict] = {}
    for r in rows:
        if r["flag"] == "degenerate":
            continue
        f = fitted.setdefault(r["d"], {"c_lo": math.inf, "c_hi": 0.0})
        f["c_lo"] = min(f["c_lo"], r["ratio"])
        f["c_hi"] = max(f["c_hi"], r["ratio"])
        if r["flag"] in ("", "dominated") and (r["ratio_hi"] < lo or r["ratio_lo"] > hi):
            passed = False
    summary = {f"d={d}": v for d, v in sorted(fitted.items())}
    summary["bracket"] = list(bracket)
    config = _base_config(family, seed, cfg, ps=list(ps), N=N)
    return Report("sandwich", SANDWICH_COLUMNS, rows, summary, config, passed)


def _min_c_upper(E: float, q: float) -> float:
    """Smallest c with min(1, c*exp(-E/c)) >= q."""
    if q <= 0:
        return 0.0
    return math.exp(brentq(lambda u: u - E * math.exp(-u) - math.log(q), -60.0, 60.0))


def _min_c_lower(E: float, q: float) -> float:
    """Smallest c with exp(-c*E)/c <= q."""
    return math.exp(brentq(lambda u: -E * math.exp(u) - u - math.log(q), -60.0, 60.0))


TAIL_COLUMNS = (
    "tensor", "family", "d", "shape", "t", "exponent", "witness", "p_hat", "ci_lo", "ci_hi",
    "upper", "lower", "cu_needed", "cl_needed", "flag", "sample_seed", "N",
)


def verify_tail(
    family: FamilySpec,
    ts: Sequence[float],
    N: int = 1_000_000,
    c_u: float = 10.0,
    c_l: float = 10.0,
    seed: int = 0,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    tensors: Sequence[Tensor] | None = None,
) -> Report:
    """Empirical tails against the two-sided envelope.

    Only grid points with at least 20 exceedances enter the fit and the
    verdict. For those, the row records the smallest constants that make
    the upper curve dominate and the lower curve sit under ``p_hat``; the
    summary reports the maximum over points (the fitted constants).
    """
    tensors = generate_family(family) if tensors is None else list(tensors)

    def one(item):
        i, A = item
        s_seed = _rng.derive_seed(seed, _rng.SAMPLE, i)
        base = dict(tensor=i, family=family.describe(), d=A.order, shape=_shape_str(A),
                    sample_seed=s_seed, N=N)
        if A.is_zero():
            return [dict(base, t=t, exponent="", witness="", p_hat=0.0, ci_lo=0.0, ci_hi=0.0,
                         upper="", lower="", cu_needed="", cl_needed="", flag="degenerate")
                    for t in ts]
        table = compute_norm_table(A, cfg)
        samples = sample_decoupled(A, N, s_seed)
        rows = []
        for pt in empirical_tail(samples, ts, MIN_TAIL_COUNT):
            E, w = tail_exponent(pt.t, table)
            row = dict(base, t=pt.t, exponent=E, witness=str(w), p_hat=pt.prob, ci_lo=pt.ci_lo,
                       ci_hi=pt.ci_hi, upper=float(envelope_upper(E, c_u)),
                       lower=float(envelope_lower(E, c_l)), cu_needed="", cl_needed="", flag="")
            if pt.informative:
                row["cu_needed"] = _min_c_upper(E, pt.prob)
                row["cl_needed"] = _min_c_lower(E, pt.prob)
            else:
                row["flag"] = "uninformative"
            rows.append(row)
        return rows

    rows = [r for block in _pmap(one, enumerate(tensors), threads) for r in block]
    passed = True
    fitted: dict[int, dict] = {}
    for r in rows:
        if r["flag"]:
            continue
        f = fitted.setdefault(r["d"], {"c_u": 0.0, "c_l": 0.0})
        f["c_u"] = max(f["c_u"], r["cu_needed"])
        f["c_l"] = max(f["c_l"], r["cl_needed"])
        if r["upper"] < r["ci_lo"] or r["lower"] > r["ci_hi"]:
            passed = False
    summary = {f"d={d}": v for d, v in sorted(fitted.items())}
    summary["c_u"], summary["c_l"] = c_u, c_l
    config = _base_config(family, seed, cfg, ts=list(ts), N=N, c_u=c_u, c_l=c_l)
    return Report("tail", TAIL_COLUMNS, rows, summary, config, passed)


def _rhs_min(table, ps: Sequence[float], d: int) -> tuple[float, float]:
    vals = [(p ** ((1 - d) / 2) * mp(table, p), p) for p in ps]
    return min(vals)


THM2_COLUMNS = (
    "tensor", "family", "d", "shape", "lhs", "lhs_lo", "lhs_hi", "rhs_min", "argmin_p",
    "ratio", "flag", "enorm_seed", "M",
)


def _contracted_lhs(A: Tensor, M: int, e_seed: int, cfg: SolverConfig):
    d = A.order
    return expected_contracted_norm(A, [d - 1], Partition.singletons(d - 1), M, e_seed, cfg)


def verify_thm2(
    family: FamilySpec,
    ps: Sequence[float] = (2, 4, 8, 16, 32),
    M: int = 500,
    seed: int = 0,
    cfg: SolverConfig = SolverConfig(),
    bound: float = DEFAULT_THM2_BOUND,
    threads: int = 1,
    tensors: Sequence[Tensor] | None = None,
) -> Report:
    """Expected injective norm after contracting the last axis, against
    ``bound * min_p p**((1-d)/2) m_p(A)``.

    A row fails when the lower end of the Monte Carlo interval exceeds the
    bound.
    """
    tensors = generate_family(family) if tensors is None else list(tensors)
    if any(A.order < 2 for A in tensors):
        raise ValueError("the contracted-norm check needs d >= 2")

    def one(item):
        i, A = item
        e_seed = _rng.derive_seed(seed, _rng.ENORM, i)
        base = dict(tensor=i, family=family.describe(), d=A.order, shape=_shape_str(A),
                    enorm_seed=e_seed, M=M)
        if A.is_zero():
            return dict(base, lhs=0.0, lhs_lo=0.0, lhs_hi=0.0, rhs_min=0.0, argmin_p="",
                        ratio="", flag="degenerate")
        table = compute_norm_table(A, cfg)
        est = _contracted_lhs(A, M, e_seed, cfg)
        rhs, p_star = _rhs_min(table, ps, A.order)
        flag = "nonconverged" if est.nonconverged else ""
        return dict(base, lhs=est.mean, lhs_lo=est.ci_lo, lhs_hi=est.ci_hi, rhs_min=rhs,
                    argmin_p=p_star, ratio=est.mean / rhs, flag=flag)

    rows = _pmap(one, enumerate(tensors), threads)
    passed = all(r["flag"] == "degenerate" or r["lhs_lo"] <= bound * r["rhs_min"] for r in rows)
    fitted: dict[int, float] = {}
    for r in rows:
        if r["flag"] != "degenerate":
            fitted[r["d"]] = max(fitted.get(r["d"], 0.0), r["ratio"])
    summary = {f"d={d}": {"C_hat": v} for d, v in sorted(fitted.items())}
    summary["bound"] = bound
    config = _base_config(family, seed, cfg, ps=list(ps), M=M, bound=bound)
    return Report("thm2", THM2_COLUMNS, rows, summary, config, passed)


CONJECTURE_COLUMNS = (
    "tensor", "family", "d", "shape", "lhs", "lhs_lo", "lhs_hi", "conjecture_rhs", "ratio",
    "flag", "enorm_seed", "M",
)


def probe_conjecture(
    family: FamilySpec,
    M: int = 500,
    seed: int = 0,
    cfg: SolverConfig = SolverConfig(),
    threads: int = 1,
    bins: int = 10,
    tensors: Sequence[Tensor] | None = None,
) -> Report:
    """Record the contracted-norm estimate next to the conjectured bound.

    Exploratory: the report always passes and carries a histogram of the
    ratios in its summary.
    """
    tensors = generate_family(family) if tensors is None else list(tensors)
    if any(A.order < 2 for A in tensors):
        raise ValueError("the conjecture probe needs d >= 2")

    def one(item):
        i, A = item
        e_seed = _rng.derive_seed(seed, _rng.ENORM, i)
        base = dict(tensor=i, family=family.describe(), d=A.order, shape=_shape_str(A),
                    enorm_seed=e_seed, M=M)
        if A.is_zero():
            return dict(base, lhs=0.0, lhs_lo=0.0, lhs_hi=0.0, conjecture_rhs=0.0, ratio="",
                        flag="degenerate")
        table = compute_norm_table(A, cfg)
        est = _contracted_lhs(A, M, e_seed, cfg)
        rhs = conjecture_rhs(table)
        return dict(base, lhs=est.mean, lhs_lo=est.ci_lo, lhs_hi=est.ci_hi, conjecture_rhs=rhs,
                    ratio=est.mean / rhs, flag="nonconverged" if est.nonconverged else "")

    rows = _pmap(one, enumerate(tensors), threads)
    ratios = np.array([r["ratio"] for r in rows if r["flag"] != "degenerate"])
    summary: dict = {}
    if ratios.size:
        counts, edges = np.histogram(ratios, bins=bins)
        summary = {
            "ratio_min": float(ratios.min()),
            "ratio_max": float(ratios.max()),
            "ratio_mean": float(ratios.mean()),
            "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
        }
    config = _base_config(family, seed, cfg, M=M)
    return Report("conjecture", CONJECTURE_COLUMNS, rows, summary, config, True)
