"""Information-set construction and the successive-cancellation union bound."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .channels import Bdmc, ChannelPair
from .codec import PolarCode, iter_genie_chunks
from .polarize import MergePolicy, PairLike, evolve_all

CLAMP_BITS = 40.0


@dataclass(frozen=True, eq=False)
class McEstimate:
    """Per-index Monte Carlo estimates of I(W_N^(i), V_N^(i))."""

    mean: np.ndarray
    stderr: np.ndarray
    clamped: np.ndarray
    trials: int
    seed: int


def estimate_indices_mc(
    w: Bdmc, v: Bdmc, n: int, trials: int, seed: int, workers: int | None = None
) -> McEstimate:
    """Estimate every synthesized pair's I(W, V) by genie-aided decoding.

    Each trial sends uniform bits through ``w``, runs the SC recursion with
    metric ``v`` while feeding in the true bits, and scores index ``i`` with
    ``log2(1 + (-1)**u_i * Delta_i)``. Arguments below ``2**-40`` score
    ``-40`` and set the index's clamp flag.
    """
    if trials < 100:
        raise ValueError("at least 100 trials are needed for a meaningful stderr")
    N = 1 << n
    total = np.zeros(N)
    total_sq = np.zeros(N)
    clamped = np.zeros(N, dtype=bool)
    for chunk in iter_genie_chunks(w, v, n, trials, seed, workers):
        z = 1.0 + (1.0 - 2.0 * chunk.u) * chunk.delta
        low = z < 2.0**-CLAMP_BITS
        terms = np.where(low, -CLAMP_BITS, np.log2(np.where(low, 1.0, z)))
        clamped |= low.any(axis=0)
        total += terms.sum(axis=0)
        total_sq += (terms**2).sum(axis=0)
    mean = total / trials
    var = np.maximum(total_sq / trials - mean**2, 0.0) * trials / (trials - 1)
    return McEstimate(mean, np.sqrt(var / trials), clamped, trials, seed)


def exact_indices(x: PairLike, n: int, policy: MergePolicy, workers: int | None = None) -> np.ndarray:
    """I(W_N^(i), V_N^(i)) for all indices, from density evolution."""
    return np.array([r.I_wv for r in evolve_all(x, n, policy, workers)])


def epsilon_schedule(N: int) -> float:
    """Threshold slack 2**(-sqrt(N))."""
    return 2.0 ** (-math.sqrt(N))


@dataclass
class InformationSet:
    """Selected (1-based) indices plus everything needed to audit the choice."""

    n: int
    indices: list[int]
    per_index: np.ndarray
    selection: dict
    source: dict
    stderr: np.ndarray | None = None
    clamped: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        N = 1 << self.n
        self.indices = sorted(int(i) for i in self.indices)
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("information indices must be distinct")
        if self.indices and (self.indices[0] < 1 or self.indices[-1] > N):
            raise ValueError(f"information indices must lie in 1..{N}")
        self.per_index = np.asarray(self.per_index, dtype=float)
        if self.per_index.size != N:
            raise ValueError("per-index values must cover all N indices")

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def size(self) -> int:
        return len(self.indices)

    def code(self) -> PolarCode:
        return PolarCode.from_info_indices(self.n, self.indices)

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "indices": self.indices,
            "selection": self.selection,
            "source": self.source,
            "per_index": [_encode_float(x) for x in self.per_index],
        }
        if self.stderr is not None:
            out["stderr"] = [float(x) for x in self.stderr]
        if self.clamped is not None:
            out["clamped"] = [bool(x) for x in self.clamped]
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "InformationSet":
        known = {"n", "indices", "selection", "source", "per_index", "stderr", "clamped"}
        return cls(
            n=int(data["n"]),
            indices=list(data["indices"]),
            per_index=np.array([_decode_float(x) for x in data["per_index"]]),
            selection=dict(data["selection"]),
            source=dict(data["source"]),
            stderr=np.array(data["stderr"]) if "stderr" in data else None,
            clamped=np.array(data["clamped"], dtype=bool) if "clamped" in data else None,
            extra={k: v for k, v in data.items() if k not in known},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "InformationSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _encode_float(x: float):
    x = float(x)
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return x


def _decode_float(x) -> float:
    return float(x)


def select_info_set(
    per_index: Sequence[float],
    eps: float | None = None,
    k: int | None = None,
    source: dict | None = None,
    stderr=None,
    clamped=None,
) -> InformationSet:
    """Pick indices by threshold (``I >= 1 - eps``) or as the ``k`` best.

    Top-``k`` ties go to the smaller index. Exactly one of ``eps`` and ``k``
    must be given.
    """
    values = np.asarray(per_index, dtype=float)
    N = values.size
    if N == 0 or N & (N - 1):
        raise ValueError("number of per-index values must be a power of two")
    n = N.bit_length() - 1
    if (eps is None) == (k is None):
        raise ValueError("give exactly one of eps or k")
    if eps is not None:
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        chosen = np.flatnonzero(values >= 1 - eps) + 1
        selection = {"mode": "threshold", "eps": float(eps)}
    else:
        if not 0 <= k <= N:
            raise ValueError(f"K={k} must lie in 0..{N}")
        order = np.lexsort((np.arange(N), -values))
        chosen = np.sort(order[:k]) + 1
        selection = {"mode": "top-k", "k": int(k)}
    return InformationSet(
        n=n,
        indices=chosen.tolist(),
        per_index=values,
        selection=selection,
        source=source or {"kind": "given"},
        stderr=None if stderr is None else np.asarray(stderr, dtype=float),
        clamped=None if clamped is None else np.asarray(clamped, dtype=bool),
    )


def rate_to_k(rate: float, N: int) -> int:
    """Number of information bits for a target rate, ``ceil(N * rate)``."""
    if not 0 <= rate <= 1:
        raise ValueError("rate must lie in [0, 1]")
    return min(N, math.ceil(round(N * rate, 9)))


@dataclass(frozen=True)
class UnionBound:
    value: float

    @property
    def clipped(self) -> float:
        return min(1.0, self.value)


def scd_union_bound(per_index: Sequence[float], info_set: InformationSet | Sequence[int]) -> UnionBound:
    """Sum over the information set of ``1 - I_i``; may exceed 1."""
    values = np.asarray(per_index, dtype=float)
    indices = info_set.indices if isinstance(info_set, InformationSet) else list(info_set)
    idx = np.asarray(indices, dtype=int) - 1
    if idx.size and (idx.min() < 0 or idx.max() >= values.size):
        raise ValueError("information set refers to indices without values")
    return UnionBound(float(np.sum(1.0 - values[idx])) if idx.size else 0.0)


def construct_exact(
    pair: ChannelPair, n: int, policy: MergePolicy, eps=None, rate=None, workers=None
) -> InformationSet:
    values = exact_indices(pair, n, policy, workers)
    k = None if rate is None else rate_to_k(rate, 1 << n)
    source = {"kind": "exact", "mode": policy.mode, "max_atoms": policy.max_atoms, "grid": policy.grid}
    return select_info_set(values, eps=eps, k=k, source=source)


def construct_mc(
    w: Bdmc, v: Bdmc, n: int, trials: int, seed: int, eps=None, rate=None, workers=None
) -> InformationSet:
    est = estimate_indices_mc(w, v, n, trials, seed, workers)
    k = None if rate is None else rate_to_k(rate, 1 << n)
    source = {"kind": "monte-carlo", "trials": trials, "seed": seed}
    return select_info_set(est.mean, eps=eps, k=k, source=source, stderr=est.stderr, clamped=est.clamped)
