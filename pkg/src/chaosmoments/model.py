"""Deterministic functionals built on a table of partition norms.

``m_p(A)`` weights every partition into ``k`` blocks by ``p**(k/2)``. The
tail exponent takes the smallest ``(t / ||A||_P)**(2/k)`` over partitions,
and the envelope turns it into upper and lower probability curves with
user-supplied constants (the theory leaves them unspecified).

The moment functional accepts ``p >= 1``; the two-sided comparison with
chaos moments is only claimed for ``p >= 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .norms import NormResult, s_k_partitions
from .partitions import Partition, all_partitions


class TableError(ValueError):
    pass


class DegenerateTensorError(ValueError):
    """Raised when the tail envelope is undefined (all norms vanish)."""


def _values(table: Mapping[Partition, NormResult | float]) -> dict[Partition, float]:
    out = {}
    for P, r in table.items():
        out[P] = float(r.value if isinstance(r, NormResult) else r)
    return out


def _check_complete(table, d: int | None = None) -> int:
    if not table:
        raise TableError("empty norm table")
    if d is None:
        d = next(iter(table)).d
    missing = [P for P in all_partitions(d) if P not in table]
    if missing:
        raise TableError(f"norm table misses {len(missing)} partitions, e.g. {missing[0]}")
    return d


def mp(table: Mapping[Partition, NormResult | float], p: float) -> float:
    """Moment functional ``sum_k p**(k/2) * sum_{P in S(k,d)} ||A||_P``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    _check_complete(table)
    vals = _values(table)
    return float(math.fsum(p ** (P.k / 2) * v for P, v in vals.items()))


@dataclass(frozen=True)
class MomentProfile:
    ps: tuple[float, ...]
    values: tuple[float, ...]
    contributions: tuple[dict[Partition, float], ...]
    norms: dict[Partition, float]

    def top_contribution(self, i: int) -> tuple[Partition, float]:
        """Largest single term at ``ps[i]`` (first in table order on ties)."""
        c = self.contributions[i]
        P = max(c, key=lambda q: (c[q], -all_partitions(q.d).index(q)))
        return P, c[P]

    def rows(self) -> list[dict]:
        out = []
        for i, p in enumerate(self.ps):
            P, c = self.top_contribution(i)
            out.append({"p": p, "m_p": self.values[i], "top_contribution": c, "witness": str(P)})
        return out


def moment_profile(table, ps: Sequence[float]) -> MomentProfile:
    _check_complete(table)
    vals = _values(table)
    contributions, values = [], []
    for p in ps:
        if p < 1:
            raise ValueError(f"p must be >= 1, got {p}")
        c = {P: p ** (P.k / 2) * v for P, v in vals.items()}
        contributions.append(c)
        values.append(math.fsum(c.values()))
    return MomentProfile(tuple(float(p) for p in ps), tuple(values), tuple(contributions), vals)


def tail_exponent(t: float, table) -> tuple[float, Partition]:
    """Smallest ``(t / ||A||_P)**(2/k)`` over partitions with nonzero norm.

    Ties go to the first partition in table order (block count ascending,
    then lexicographic).
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    d = _check_complete(table)
    vals = _values(table)
    best, witness = math.inf, None
    for P in all_partitions(d):
        v = vals[P]
        if v <= 0:
            continue
        e = (t / v) ** (2.0 / P.k)
        if e < best:
            best, witness = e, P
    if witness is None:
        raise DegenerateTensorError("all partition norms vanish; the tail is identically 0")
    return float(best), witness


@dataclass(frozen=True)
class TailEnvelope:
    ts: tuple[float, ...]
    exponent: tuple[float, ...]
    witness: tuple[Partition, ...]
    upper: tuple[float, ...]
    lower: tuple[float, ...]
    c_u: float
    c_l: float

    def rows(self) -> list[dict]:
        return [
            {"t": t, "exponent": e, "witness": str(w), "upper": u, "lower": l}
            for t, e, w, u, l in zip(self.ts, self.exponent, self.witness, self.upper, self.lower)
        ]


def envelope_upper(E, c_u: float):
    return np.minimum(1.0, c_u * np.exp(-np.asarray(E) / c_u))


def envelope_lower(E, c_l: float):
    return np.exp(-c_l * np.asarray(E)) / c_l


def tail_envelope(ts: Sequence[float], table, c_u: float = 1.0, c_l: float = 1.0) -> TailEnvelope:
    if c_u <= 0 or c_l <= 0:
        raise ValueError("envelope constants must be positive")
    pairs = [tail_exponent(t, table) for t in ts]
    E = np.array([e for e, _ in pairs])
    return TailEnvelope(
        tuple(float(t) for t in ts),
        tuple(E.tolist()),
        tuple(w for _, w in pairs),
        tuple(envelope_upper(E, c_u).tolist()),
        tuple(envelope_lower(E, c_l).tolist()),
        c_u,
        c_l,
    )


def gaussian_abs_moment(p: float) -> float:
    """``||g||_p = (E|g|^p)**(1/p)`` for a standard normal ``g``."""
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    log_moment = (p / 2) * math.log(2.0) + gammaln((p + 1) / 2) - gammaln(0.5)
    return float(math.exp(log_moment / p))


def conjecture_rhs(table) -> float:
    """Constant-free right side of the conjectured contracted-norm bound.

    ``s_{d-1}(A) + ||A||_{1|...|d}**((d-2)/(d-1)) * ||A||_F**(1/(d-1))``
    """
    d = _check_complete(table)
    if d < 2:
        raise ValueError("the conjectured bound needs d >= 2")
    vals = _values(table)
    s = s_k_from_table(table, d - 1)
    inj = vals[Partition.singletons(d)]
    fro = vals[Partition.whole(d)]
    # 0**0 = 1 keeps the d=2 case equal to s_1 + ||A||_F
    return float(s + inj ** ((d - 2) / (d - 1)) * fro ** (1 / (d - 1)))


def s_k_from_table(table, k: int) -> float:
    d = _check_complete(table)
    vals = _values(table)
    return float(sum(vals[P] for P in s_k_partitions(d, k)))
