"""Minus/plus polarization of channel pairs and exact or quantized evolution.

A channel pair is tracked through the joint law of ``(Delta_W(Y), Delta_V(Y))``
under ``q_W``: a list of atoms ``(mass, dw, dv)``. Every quantity used
downstream (I(W,V), I(W), E sqrt|Delta_V|) is a function of this law only,
so atoms with equal statistics can be merged without loss.

Atoms are stored as log-likelihood ratios ``l = log((1+Delta)/(1-Delta))``
rather than as ``Delta`` itself. Near ``Delta = +-1`` the difference form
rounds away exactly the small complement ``1 - |Delta|`` that the
information terms need when W puts mass on the side V considers unlikely.
``dw`` and ``dv`` are exposed as derived views.

Flipping the sign of both coordinates of an atom is also lossless: the
transforms map a flipped atom to flipped children, and the per-atom
information terms are invariant. :func:`reduce` therefore folds every atom
to ``dw > 0`` (or ``dw == 0, dv >= 0``) before merging.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np
from scipy.special import expit, log_expit

from .channels import Bdmc, ChannelError, ChannelPair, ZeroMassSymbolWarning

SATURATION = 1.0 - 1e-9
# grid half-width in llr units, 2 * arctanh(SATURATION)
_L_MAX = float(2 * np.arctanh(SATURATION))
_LN2 = float(np.log(2.0))
_BELOW_ONE = float(np.nextafter(1.0, 0.0))


class CapacityExceededError(RuntimeError):
    """Atom count exceeds the merge policy's limit."""


@dataclass(frozen=True)
class MergePolicy:
    """How densities are kept small between transform steps.

    ``exact`` merges only atoms with identical statistics and raises
    :class:`CapacityExceededError` above ``max_atoms``. ``quantized`` first
    tries an exact merge; if that leaves more than ``max_atoms`` atoms, they
    are binned on a uniform grid in arctanh coordinates with ``grid`` bins
    per axis, halving the grid until the limit is met.
    """

    mode: str = "quantized"
    max_atoms: int = 65536
    grid: int = 4096

    def __post_init__(self):
        if self.mode not in ("exact", "quantized"):
            raise ValueError(f"unknown merge mode {self.mode!r}")
        if self.max_atoms < 2:
            raise ValueError("max_atoms must be at least 2")
        if self.grid <= 0 or self.grid & (self.grid - 1):
            raise ValueError("grid must be a positive power of two")

    @classmethod
    def exact(cls, max_atoms: int = 1 << 20) -> "MergePolicy":
        return cls("exact", max_atoms, 4096)


def delta_to_llr(d):
    """``log((1+d)/(1-d))``; +-1 map to +-inf and NaN stays NaN."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log1p(d) - np.log1p(-d)


def llr_to_delta(l):
    return np.tanh(np.asarray(l, dtype=float) / 2)


def _log2_half_plus(l):
    # log2(1 + Delta) = log2(2 * sigmoid(l)), accurate for any l
    return 1.0 + log_expit(l) / _LN2


@dataclass(frozen=True, eq=False)
class PairDensity:
    """Joint law of the two posterior differences under ``q_W``.

    ``lw`` and ``lv`` hold log-likelihood ratios; ``NaN`` in ``lv`` marks an
    output the metric never produces.
    """

    mass: np.ndarray
    lw: np.ndarray
    lv: np.ndarray
    degenerate: int = field(default=0)

    def __post_init__(self):
        for name in ("mass", "lw", "lv"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.mass.shape == self.lw.shape == self.lv.shape):
            raise ValueError("atom arrays must have equal length")

    @classmethod
    def from_deltas(cls, mass, dw, dv, degenerate: int = 0) -> "PairDensity":
        return cls(mass, delta_to_llr(dw), delta_to_llr(dv), degenerate)

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, float, float]]) -> "PairDensity":
        """Build from ``(mass, dw, dv)`` triples."""
        arr = np.asarray(atoms, dtype=float).reshape(-1, 3)
        return cls.from_deltas(arr[:, 0], arr[:, 1], arr[:, 2])

    @classmethod
    def from_pair(cls, pair: ChannelPair) -> "PairDensity":
        keep = pair.w.q > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            lw = np.log(pair.w.p0[keep]) - np.log(pair.w.p1[keep])
            # outputs V never produces get NaN: the metric is blind there
            lv = np.log(pair.v.p0[keep]) - np.log(pair.v.p1[keep])
        return cls(pair.w.q[keep], lw, lv)

    def __len__(self):
        return int(self.mass.size)

    @property
    def dw(self) -> np.ndarray:
        return llr_to_delta(self.lw)

    @property
    def dv(self) -> np.ndarray:
        return llr_to_delta(self.lv)

    @property
    def atoms(self) -> np.ndarray:
        return np.column_stack([self.mass, self.dw, self.dv])

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def info(self) -> float:
        """I(W, V) in bits; ``-inf`` when W reaches outputs V rules out."""
        return _info(self.mass, self.lw, self.lv)

    def info_w(self) -> float:
        """Symmetric capacity I(W) of the true-channel marginal."""
        return max(0.0, _info(self.mass, self.lw, self.lw))

    def _terms(self):
        c0 = self.mass * expit(self.lw)
        c1 = self.mass * expit(-self.lw)
        with np.errstate(invalid="ignore"):
            t0 = np.where(c0 > 0, _log2_half_plus(self.lv), 0.0)
            t1 = np.where(c1 > 0, _log2_half_plus(-self.lv), 0.0)
        return c0, c1, t0, t1

    def log_term_variance(self) -> float:
        """Variance of log2(1 + (-1)**U Delta_V) for U uniform and Y through W.

        This is the per-sample variance of the genie-aided Monte Carlo
        estimator of :meth:`info`.
        """
        if np.isneginf(self.info()):
            return float("inf")
        c0, c1, t0, t1 = self._terms()
        second = float(np.sum(c0 * t0**2 + c1 * t1**2))
        return max(0.0, second - self.info() ** 2)

    def mu(self) -> float:
        """E[sqrt|Delta_V|] under q_W; metric-blind atoms count as 0."""
        return float(np.sum(self.mass * np.sqrt(np.abs(np.nan_to_num(self.dv)))))

    def to_pair(self) -> ChannelPair:
        """A symmetric channel pair with this (folded) density.

        Each atom becomes two mirrored outputs carrying half its mass, so the
        V rows are normalized even though the density does not record q_V.
        """
        if np.isnan(self.lv).any():
            raise ChannelError("cannot reconstruct a pair with metric-blind atoms")
        m = np.concatenate([self.mass, self.mass])
        lw = np.concatenate([self.lw, -self.lw])
        lv = np.concatenate([self.lv, -self.lv])
        w = Bdmc(m * expit(lw), m * expit(-lw))
        v = Bdmc(m * expit(lv), m * expit(-lv))
        return ChannelPair(w, v)


def _info(mass, lw, lv) -> float:
    if mass.size == 0:
        return 0.0
    if np.any(np.isnan(lv) & (mass > 0)):
        return float("-inf")
    c0 = mass * expit(lw)
    c1 = mass * expit(-lw)
    t = np.zeros_like(mass)
    with np.errstate(invalid="ignore"):
        pos = c0 > 0
        t[pos] += c0[pos] * _log2_half_plus(lv[pos])
        pos = c1 > 0
        t[pos] += c1[pos] * _log2_half_plus(-lv[pos])
    return float(min(1.0, t.sum()))


PairLike = Union[ChannelPair, PairDensity]


def as_density(x: PairLike) -> PairDensity:
    if isinstance(x, PairDensity):
        return x
    if isinstance(x, ChannelPair):
        return PairDensity.from_pair(x)
    if isinstance(x, Bdmc):
        return PairDensity.from_pair(_quiet_pair(x, x))
    raise TypeError(f"expected ChannelPair or PairDensity, got {type(x).__name__}")


# -- single-step transforms ------------------------------------------------------


def _quiet_pair(w: Bdmc, v: Bdmc) -> ChannelPair:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroMassSymbolWarning)
        return ChannelPair(w, v)


def _minus_channel(ch: Bdmc) -> Bdmc:
    a0, a1 = ch.p0, ch.p1
    p0 = 0.5 * (np.outer(a0, a0) + np.outer(a1, a1))
    p1 = 0.5 * (np.outer(a1, a0) + np.outer(a0, a1))
    labels = [f"({x},{y})" for x in ch.labels for y in ch.labels]
    return Bdmc(p0.ravel(), p1.ravel(), labels)


def _plus_channel(ch: Bdmc) -> Bdmc:
    a0, a1 = ch.p0, ch.p1
    # W+(y1 y2 u1 | u2) = 1/2 W(y1 | u1 ^ u2) W(y2 | u2)
    p0 = np.concatenate([0.5 * np.outer(a0, a0).ravel(), 0.5 * np.outer(a1, a0).ravel()])
    p1 = np.concatenate([0.5 * np.outer(a1, a1).ravel(), 0.5 * np.outer(a0, a1).ravel()])
    labels = [f"({x},{y},{u})" for u in (0, 1) for x in ch.labels for y in ch.labels]
    return Bdmc(p0, p1, labels)


def boxplus(a, b):
    """LLR of the XOR of two bits: ``2 artanh(tanh(a/2) tanh(b/2))``.

    Computed as a magnitude times the product of signs, so the result is
    exactly odd in each argument and folded atoms merge bit-for-bit.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, y = np.abs(a), np.abs(b)
    with np.errstate(invalid="ignore", divide="ignore"):
        prod = np.tanh(x / 2) * np.tanh(y / 2)
        direct = np.log1p(prod) - np.log1p(-prod)
        # near 1 the product loses the complement; use the log-domain form
        tail = np.minimum(x, y) + np.log1p(np.exp(-(x + y))) - np.log1p(np.exp(-np.abs(x - y)))
        mag = np.where(prod < 0.5, direct, tail)
        mag = np.where(np.isinf(x) & np.isinf(y), np.inf, mag)
        return np.sign(a) * np.sign(b) * mag


def pair_minus(x: PairLike) -> PairLike:
    """Minus transform. Density atoms multiply: ``dw = dw1*dw2``, ``dv = dv1*dv2``."""
    if isinstance(x, ChannelPair):
        return _quiet_pair(_minus_channel(x.w), _minus_channel(x.v))
    d = as_density(x)
    mass = np.outer(d.mass, d.mass).ravel()
    lw = boxplus(np.repeat(d.lw, len(d)), np.tile(d.lw, len(d)))
    lv = boxplus(np.repeat(d.lv, len(d)), np.tile(d.lv, len(d)))
    keep = mass > 0
    mass = mass[keep]
    return PairDensity(mass / mass.sum(), lw[keep], lv[keep], d.degenerate)


def plus_delta(d1, d2, s):
    """Posterior difference after the plus step: (d1 + s d2) / (1 + s d1 d2).

    A result is exactly +-1 only when an input is; rounding to +-1 from
    interior inputs is pulled back to the nearest interior double.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (d1 + s * d2) / (1 + s * d1 * d2)
    genuine = (np.abs(d1) == 1.0) | (np.abs(d2) == 1.0)
    return np.where(genuine, out, np.clip(out, -_BELOW_ONE, _BELOW_ONE))


def pair_plus(x: PairLike) -> PairLike:
    """Plus transform.

    For each ordered atom pair and each known bit ``u1`` (``s = (-1)**u1``)
    the child has mass ``m1*m2*(1 + s*dw1*dw2)/2`` and posterior differences
    ``(d1 + s*d2)/(1 + s*d1*d2)`` on both coordinates, i.e. ``l1 + s*l2`` in
    llr form. Children with zero W-mass are dropped; a vanishing V
    denominator at positive W-mass sets ``dv = 0`` and increments
    ``degenerate``.
    """
    if isinstance(x, ChannelPair):
        return _quiet_pair(_plus_channel(x.w), _plus_channel(x.v))
    d = as_density(x)
    m12 = np.outer(d.mass, d.mass).ravel()
    a1 = np.repeat(d.lw, len(d))
    a2 = np.tile(d.lw, len(d))
    b1 = np.repeat(d.lv, len(d))
    b2 = np.tile(d.lv, len(d))
    masses, lws, lvs = [], [], []
    degenerate = d.degenerate
    for s in (1.0, -1.0):
        # (1 + s dw1 dw2) / 2 as a sum of positive terms
        mass = m12 * (expit(a1) * expit(s * a2) + expit(-a1) * expit(-s * a2))
        keep = mass > 0
        p1, p2 = b1[keep], s * b2[keep]
        with np.errstate(invalid="ignore"):
            lv = p1 + p2
        bad = np.isinf(p1) & np.isinf(p2) & (p1 != p2)
        if bad.any():
            degenerate += int(bad.sum())
            lv = np.where(bad, 0.0, lv)
        masses.append(mass[keep])
        lws.append(a1[keep] + s * a2[keep])
        lvs.append(lv)
    mass = np.concatenate(masses)
    return PairDensity(mass / mass.sum(), np.concatenate(lws), np.concatenate(lvs), degenerate)


# -- merging -------------------------------------------------------------------------


def fold(d: PairDensity) -> PairDensity:
    """Mirror atoms so that dw > 0, or dw == 0 and dv >= 0."""
    sign = np.where(d.lw > 0, 1.0, np.where(d.lw < 0, -1.0, np.where(d.lv < 0, -1.0, 1.0)))
    return PairDensity(d.mass, d.lw * sign + 0.0, d.lv * sign + 0.0, d.degenerate)


def _segments(order_keys: tuple[np.ndarray, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Sort order and segment starts for rows equal on every key."""
    order = np.lexsort(order_keys[::-1])
    change = np.zeros(order.size, dtype=bool)
    change[:1] = True
    for k in order_keys:
        s = k[order]
        change[1:] |= s[1:] != s[:-1]
    return order, np.flatnonzero(change)


def merge_exact(d: PairDensity) -> PairDensity:
    """Fold, then add up atoms with identical statistics."""
    d = fold(d)
    keep = d.mass > 0
    mass, lw, lv = d.mass[keep], d.lw[keep], d.lv[keep]
    if mass.size == 0:
        return PairDensity(mass, lw, lv, d.degenerate)
    blind = np.isnan(lv)
    order, starts = _segments((lw, blind, np.where(blind, 0.0, lv)))
    return PairDensity(
        np.add.reduceat(mass[order], starts), lw[order][starts], lv[order][starts], d.degenerate
    )


def _axis_bins(l: np.ndarray, grid: int) -> np.ndarray:
    """Bin index in llr: regular bins 1..grid, -inf -> 0, +inf -> grid+1, NaN -> grid+2."""
    t = np.clip(np.nan_to_num(l, nan=0.0, posinf=0.0, neginf=0.0), -_L_MAX, _L_MAX)
    idx = np.floor((t + _L_MAX) / (2 * _L_MAX) * grid).astype(np.int64)
    idx = np.clip(idx, 0, grid - 1) + 1
    idx[l == -np.inf] = 0
    idx[l == np.inf] = grid + 1
    idx[np.isnan(l)] = grid + 2
    return idx


def _coarsen(idx: np.ndarray, fine: int, shift: int) -> np.ndarray:
    regular = (idx >= 1) & (idx <= fine)
    coarse = fine >> shift
    out = np.where(regular, ((idx - 1) >> shift) + 1, idx)
    out = np.where(idx == fine + 1, coarse + 1, out)
    return np.where(idx == fine + 2, coarse + 2, out)


def _log_sum(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-segment log-sum-exp of already sorted log values."""
    peak = np.maximum.reduceat(values, starts)
    safe = np.where(np.isfinite(peak), peak, 0.0)
    counts = np.diff(np.append(starts, values.size))
    with np.errstate(divide="ignore"):
        return safe + np.log(np.add.reduceat(np.exp(values - np.repeat(safe, counts)), starts))


def _centroid(log_mass: np.ndarray, l: np.ndarray, starts: np.ndarray) -> np.ndarray:
    # mass-weighted mean of Delta, returned as an llr: log(sum m s(l)) - log(sum m s(-l))
    with np.errstate(invalid="ignore"):
        return _log_sum(log_mass + log_expit(l), starts) - _log_sum(log_mass + log_expit(-l), starts)


def quantize(d: PairDensity, grid: int, max_atoms: int) -> PairDensity:
    """Bin a folded density on the arctanh grid, coarsening until it fits.

    Each bin is replaced by one atom at the mass-weighted mean of ``Delta``
    on both axes. Exact certainties (+-inf) and blind atoms keep their own
    bins.
    """
    iw = _axis_bins(d.lw, grid)
    iv = _axis_bins(d.lv, grid)

    def keys_at(shift):
        g = grid >> shift
        return _coarsen(iw, grid, shift) * (g + 3) + _coarsen(iv, grid, shift)

    levels = grid.bit_length() - 1
    lo, hi = 0, levels
    if np.unique(keys_at(hi)).size > max_atoms:
        raise CapacityExceededError(
            f"cannot quantize below {max_atoms} atoms even on a single-bin grid"
        )
    while lo < hi:
        mid = (lo + hi) // 2
        if np.unique(keys_at(mid)).size <= max_atoms:
            hi = mid
        else:
            lo = mid + 1
    order, starts = _segments((keys_at(lo),))
    mass = d.mass[order]
    log_mass = np.log(mass)
    lw = _centroid(log_mass, d.lw[order], starts)
    blind = np.isnan(d.lv[order])
    lv = _centroid(log_mass, np.where(blind, 0.0, d.lv[order]), starts)
    lv = np.where(blind[starts], np.nan, lv)
    return PairDensity(np.add.reduceat(mass, starts), lw, lv, d.degenerate)


def reduce(d: PairDensity, policy: MergePolicy) -> PairDensity:
    """Fold and merge atoms so that at most ``policy.max_atoms`` remain."""
    out = merge_exact(d)
    if len(out) <= policy.max_atoms:
        return out
    if policy.mode == "exact":
        raise CapacityExceededError(
            f"exact merge leaves {len(out)} atoms, limit is {policy.max_atoms}"
        )
    return quantize(out, policy.grid, policy.max_atoms)


# -- branches and evolution --------------------------------------------------------

Branch = Sequence[int]


def parse_branch(branch: Union[str, Branch]) -> tuple[int, ...]:
    """``"-+"`` or ``(0, 1)`` -> ``(0, 1)``; minus is 0, plus is 1."""
    if isinstance(branch, str):
        table = {"-": 0, "+": 1, "0": 0, "1": 1}
        try:
            return tuple(table[c] for c in branch)
        except KeyError:
            raise ValueError(f"bad branch string {branch!r}") from None
    out = tuple(int(b) for b in branch)
    if any(b not in (0, 1) for b in out):
        raise ValueError(f"branch entries must be 0 or 1, got {out}")
    return out


def branch_of(index: int, n: int) -> tuple[int, ...]:
    """Branch for 1-based index ``index`` at level ``n`` (most significant bit first)."""
    if not 1 <= index <= 1 << n:
        raise ValueError(f"index {index} outside 1..{1 << n}")
    return tuple(((index - 1) >> (n - 1 - k)) & 1 for k in range(n))


def branch_str(branch: Branch) -> str:
    return "".join("+" if b else "-" for b in branch)


def step(d: PairDensity, bit: int, policy: MergePolicy) -> PairDensity:
    return reduce(pair_plus(d) if bit else pair_minus(d), policy)


def synthesize(x: PairLike, branch: Union[str, Branch], policy: MergePolicy) -> PairDensity:
    d = as_density(x)
    for bit in parse_branch(branch):
        d = step(d, bit, policy)
    return d


def default_workers() -> int:
    env = os.environ.get("POLARMM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def evolve_levels(
    x: PairLike, n: int, policy: MergePolicy, workers: int | None = None
) -> Iterator[list[PairDensity]]:
    """Yield the list of all 2**k densities for k = 0..n, in index order."""
    if n < 0:
        raise ValueError("n must be non-negative")
    level = [reduce(as_density(x), policy)]
    yield level
    workers = workers or default_workers()

    def children(d):
        return step(d, 0, policy), step(d, 1, policy)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for _ in range(n):
            pairs = list(pool.map(children, level)) if workers > 1 else [children(d) for d in level]
            level = [c for pair in pairs for c in pair]
            yield level


@dataclass(frozen=True)
class IndexRecord:
    index: int
    branch: str
    I_wv: float
    I_w: float
    mu: float
    atoms: int

    @property
    def minus_inf(self) -> bool:
        return self.I_wv == float("-inf")


def records_for(level: list[PairDensity]) -> list[IndexRecord]:
    n = len(level).bit_length() - 1
    return [
        IndexRecord(i + 1, branch_str(branch_of(i + 1, n)), d.info(), d.info_w(), d.mu(), len(d))
        for i, d in enumerate(level)
    ]


def evolve_all(
    x: PairLike, n: int, policy: MergePolicy, workers: int | None = None
) -> list[IndexRecord]:
    """Per-index records for all 2**n synthesized pairs at level ``n``."""
    level = None
    for level in evolve_levels(x, n, policy, workers):
        pass
    return records_for(level)


def bec_analytic(eps: float, branch: Union[str, Branch]) -> float:
    """Erasure probability of the BEC synthesized along ``branch``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    for bit in parse_branch(branch):
        eps = eps * eps if bit else 2 * eps - eps * eps
    return eps


def bec_erasures(eps: float, n: int) -> np.ndarray:
    """Erasure probabilities of all 2**n synthesized BECs, in index order."""
    e = np.array([float(eps)])
    for _ in range(n):
        e = np.column_stack([2 * e - e * e, e * e]).ravel()
    return e
