"""Binary-input discrete memoryless channels and (W, V) channel pairs.

All information quantities are in bits and assume uniformly distributed
inputs. A channel is stored as two probability rows over a shared output
alphabet: ``p0[y] = W(y|0)`` and ``p1[y] = W(y|1)``.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

ATOL = 1e-12


class ChannelError(ValueError):
    """Raised for invalid channel parameters or channel files."""


class ZeroMassSymbolError(ChannelError):
    """Raised when the posterior difference is requested at a zero-mass output."""


class ZeroMassSymbolWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Bdmc:
    """A binary-input channel with a finite output alphabet.

    Construction does not enforce the probability invariants so that
    :func:`validate` can report on malformed channels. Use
    :meth:`Bdmc.checked` (or the JSON loaders) for validated construction.
    """

    p0: np.ndarray
    p1: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        p0 = np.array(self.p0, dtype=float).ravel()
        p1 = np.array(self.p1, dtype=float).ravel()
        if p0.shape != p1.shape:
            raise ChannelError(f"row lengths differ: {p0.size} vs {p1.size}")
        p0.setflags(write=False)
        p1.setflags(write=False)
        labels = tuple(self.labels) if self.labels else tuple(str(i) for i in range(p0.size))
        if len(labels) != p0.size:
            raise ChannelError("one label per output symbol is required")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def checked(cls, p0, p1, labels: Sequence[str] = ()) -> "Bdmc":
        ch = cls(p0, p1, tuple(labels))
        problems = validate(ch)
        if problems:
            raise ChannelError("; ".join(problems))
        return ch

    @property
    def size(self) -> int:
        return int(self.p0.size)

    @property
    def q(self) -> np.ndarray:
        """Output distribution under uniform inputs."""
        return 0.5 * (self.p0 + self.p1)

    @property
    def delta(self) -> np.ndarray:
        """Posterior difference W(0|y) - W(1|y); NaN on zero-mass symbols."""
        s = self.p0 + self.p1
        with np.errstate(invalid="ignore", divide="ignore"):
            d = (self.p0 - self.p1) / s
        return np.where(s > 0, np.clip(d, -1.0, 1.0), np.nan)

    def __repr__(self):
        rows = ", ".join(f"{l}:({a:.6g},{b:.6g})" for l, a, b in zip(self.labels, self.p0, self.p1))
        return f"Bdmc({rows})"

    def same_as(self, other: "Bdmc", atol: float = ATOL) -> bool:
        return (
            self.size == other.size
            and np.allclose(self.p0, other.p0, rtol=0, atol=atol)
            and np.allclose(self.p1, other.p1, rtol=0, atol=atol)
        )


def bsc(p: float) -> Bdmc:
    return standard_channel("BSC", p)


def bec(eps: float) -> Bdmc:
    return standard_channel("BEC", eps)


def standard_channel(kind: str, param: float) -> Bdmc:
    """Build a binary symmetric (``BSC``) or binary erasure (``BEC``) channel.

    The BEC alphabet is ordered ``0, e, 1``.
    """
    param = float(param)
    if not 0.0 <= param <= 1.0:
        raise ChannelError(f"{kind} parameter must lie in [0, 1], got {param}")
    kind = kind.upper()
    if kind == "BSC":
        return Bdmc([1 - param, param], [param, 1 - param], ("0", "1"))
    if kind == "BEC":
        return Bdmc([1 - param, param, 0.0], [0.0, param, 1 - param], ("0", "e", "1"))
    raise ChannelError(f"unknown channel kind {kind!r}")


def validate(ch: Bdmc, atol: float = ATOL) -> list[str]:
    """Return a list of invariant violations; an empty list means the channel is valid."""
    problems = []
    if ch.size == 0:
        problems.append("channel has no output symbols")
        return problems
    for x, row in ((0, ch.p0), (1, ch.p1)):
        for y, p in enumerate(row):
            if not np.isfinite(p):
                problems.append(f"row-{x} symbol {ch.labels[y]!r} is not finite")
            elif p < 0:
                problems.append(f"row-{x} symbol {ch.labels[y]!r} is negative ({p:g})")
            elif p > 1:
                problems.append(f"row-{x} symbol {ch.labels[y]!r} exceeds 1 ({p:g})")
        total = float(np.sum(row))
        if abs(total - 1.0) > atol:
            problems.append(f"row-{x} sums to {total:.15g}")
    return problems


def stats(ch: Bdmc, y: int) -> tuple[float, float]:
    """Return ``(q_W(y), Delta_W(y))`` for output symbol index ``y``."""
    a, b = float(ch.p0[y]), float(ch.p1[y])
    q = 0.5 * (a + b)
    if q <= 0:
        raise ZeroMassSymbolError(f"symbol {ch.labels[y]!r} has zero output mass")
    return q, min(1.0, max(-1.0, (a - b) / (a + b)))


def _xlogy_ratio(w: np.ndarray, num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # w * log2(num/den) with the 0 * log(.) = 0 convention
    out = np.zeros_like(w)
    pos = w > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[pos] = w[pos] * (np.log2(num[pos]) - np.log2(den[pos]))
    # mass on a symbol the metric gives zero probability
    out[pos & (num == 0)] = -np.inf
    return out


def symmetric_capacity(ch: Bdmc) -> float:
    """Mutual information I(W) between a uniform input and the output, in bits."""
    q = ch.q
    total = 0.5 * (_xlogy_ratio(ch.p0, ch.p0, q).sum() + _xlogy_ratio(ch.p1, ch.p1, q).sum())
    return float(min(1.0, max(0.0, total)))


@dataclass(frozen=True, eq=False)
class ChannelPair:
    """A true channel ``w`` and a decoding-metric channel ``v`` on one alphabet.

    Output symbols carrying no mass under either channel are dropped (with a
    :class:`ZeroMassSymbolWarning`) so that every retained symbol has
    ``q_W(y) > 0`` or ``q_V(y) > 0``.
    """

    w: Bdmc
    v: Bdmc

    def __post_init__(self):
        if self.w.size != self.v.size:
            raise ChannelError(
                f"alphabet sizes differ: w has {self.w.size}, v has {self.v.size}"
            )
        for name, ch in (("w", self.w), ("v", self.v)):
            problems = validate(ch)
            if problems:
                raise ChannelError(f"{name}: " + "; ".join(problems))
        keep = (self.w.q > 0) | (self.v.q > 0)
        if not keep.all():
            dropped = [l for l, k in zip(self.w.labels, keep) if not k]
            warnings.warn(
                f"dropping zero-mass output symbols {dropped}", ZeroMassSymbolWarning, stacklevel=3
            )
            labels = tuple(l for l, k in zip(self.w.labels, keep) if k)
            object.__setattr__(self, "w", Bdmc(self.w.p0[keep], self.w.p1[keep], labels))
            object.__setattr__(self, "v", Bdmc(self.v.p0[keep], self.v.p1[keep], labels))

    @classmethod
    def matched(cls, ch: Bdmc) -> "ChannelPair":
        return cls(ch, ch)

    @property
    def size(self) -> int:
        return self.w.size


def mismatched_info_definition(pair: ChannelPair) -> float:
    """sum_y sum_x 1/2 W(y|x) log2(V(y|x) / q_V(y))."""
    w, v = pair.w, pair.v
    qv = v.q
    t0 = _xlogy_ratio(w.p0, v.p0, qv)
    t1 = _xlogy_ratio(w.p1, v.p1, qv)
    return float(0.5 * (t0.sum() + t1.sum()))


def mismatched_info_posterior(pair: ChannelPair) -> float:
    """The same quantity written through the metric posterior difference.

    1/2 sum_y W(y|0) log2(1 + Delta_V(y)) + 1/2 sum_y W(y|1) log2(1 - Delta_V(y)).
    """
    w = pair.w
    dv = pair.v.delta
    blind = np.isnan(dv)
    if np.any(blind & (w.q > 0)):
        return float("-inf")
    dv = np.where(blind, 0.0, dv)
    one = np.ones_like(dv)
    t0 = _xlogy_ratio(w.p0, one + dv, one)
    t1 = _xlogy_ratio(w.p1, one - dv, one)
    return float(0.5 * (t0.sum() + t1.sum()))


def mismatched_info(pair: ChannelPair, atol: float = ATOL) -> float:
    """Mismatched (generalized) mutual information I(W, V) in bits.

    The value is computed twice, once from the definition and once from the
    posterior-difference representation, and the two must agree to ``atol``.
    Returns ``-inf`` when W puts mass on an output that V rules out for the
    same input.
    """
    direct = mismatched_info_definition(pair)
    posterior = mismatched_info_posterior(pair)
    if np.isneginf(direct) or np.isneginf(posterior):
        if not (np.isneginf(direct) and np.isneginf(posterior)):
            raise ArithmeticError(f"I(W,V) forms disagree: {direct} vs {posterior}")
        return float("-inf")
    if abs(direct - posterior) > atol:
        raise ArithmeticError(f"I(W,V) forms disagree: {direct!r} vs {posterior!r}")
    return min(direct, 1.0)


def pe_single_use(pair: ChannelPair) -> float:
    """Exact error probability of one use of W decoded by ML with respect to V.

    Decide 0 when Delta_V(y) > 0 and 1 when Delta_V(y) < 0; at Delta_V(y) = 0
    (or where V gives the symbol no mass) a fair coin decides.
    """
    w = pair.w
    dv = pair.v.delta
    err = np.where(dv > 0, w.p1, np.where(dv < 0, w.p0, 0.5 * (w.p0 + w.p1)))
    return float(min(1.0, max(0.0, 0.5 * err.sum())))


def check_common_symmetry(pair: ChannelPair, atol: float = ATOL) -> tuple[int, ...] | None:
    """Find an involutive output permutation making both channels symmetric.

    Returns ``perm`` with ``W(y|1) = W(perm[y]|0)`` and ``V(y|1) = V(perm[y]|0)``
    for every ``y``, or ``None`` when no such permutation exists.
    """
    w, v = pair.w, pair.v
    n = pair.size

    def fits(y, z):
        return (
            abs(w.p1[y] - w.p0[z]) <= atol
            and abs(v.p1[y] - v.p0[z]) <= atol
            and abs(w.p1[z] - w.p0[y]) <= atol
            and abs(v.p1[z] - v.p0[y]) <= atol
        )

    candidates = [[z for z in range(n) if fits(y, z)] for y in range(n)]
    perm = [-1] * n

    def search(y):
        while y < n and perm[y] >= 0:
            y += 1
        if y == n:
            return True
        for z in candidates[y]:
            if perm[z] >= 0:
                continue
            perm[y], perm[z] = z, y
            if search(y + 1):
                return True
            perm[y] = perm[z] = -1
        return False

    return tuple(perm) if search(0) else None


def is_symmetric(ch: Bdmc) -> bool:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroMassSymbolWarning)
        return check_common_symmetry(ChannelPair(ch, ch)) is not None


def brute_force_symmetry(pair: ChannelPair, atol: float = ATOL) -> tuple[int, ...] | None:
    """Exhaustive search over all permutations (small alphabets only)."""
    w, v = pair.w, pair.v
    for perm in itertools.permutations(range(pair.size)):
        if any(perm[perm[y]] != y for y in range(pair.size)):
            continue
        idx = list(perm)
        if np.allclose(w.p1, w.p0[idx], rtol=0, atol=atol) and np.allclose(
            v.p1, v.p0[idx], rtol=0, atol=atol
        ):
            return perm
    return None


def random_channel(rng: np.random.Generator, size: int | None = None) -> Bdmc:
    """Random channel with rows drawn from the flat Dirichlet distribution."""
    if size is None:
        size = int(rng.integers(2, 9))
    p0 = rng.dirichlet(np.ones(size))
    p1 = rng.dirichlet(np.ones(size))
    return Bdmc(p0 / p0.sum(), p1 / p1.sum())


def random_pair(rng: np.random.Generator, size: int | None = None) -> ChannelPair:
    if size is None:
        size = int(rng.integers(2, 9))
    return ChannelPair(random_channel(rng, size), random_channel(rng, size))


# -- JSON ----------------------------------------------------------------------


def channel_to_dict(ch: Bdmc) -> dict:
    return {
        "outputs": [
            {"label": l, "w": [float(a), float(b)]} for l, a, b in zip(ch.labels, ch.p0, ch.p1)
        ]
    }


def pair_to_dict(pair: ChannelPair) -> dict:
    return {
        "outputs": [
            {"label": l, "w": [float(a), float(b)], "v": [float(c), float(d)]}
            for l, a, b, c, d in zip(pair.w.labels, pair.w.p0, pair.w.p1, pair.v.p0, pair.v.p1)
        ]
    }


def _rows(outputs, key):
    try:
        p0 = [float(o[key][0]) for o in outputs]
        p1 = [float(o[key][1]) for o in outputs]
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ChannelError(f"malformed channel file: bad {key!r} entry ({exc})") from None
    labels = [str(o.get("label", i)) for i, o in enumerate(outputs)]
    return Bdmc.checked(p0, p1, labels)


def channel_from_dict(data: dict) -> Bdmc:
    outputs = data.get("outputs") if isinstance(data, dict) else None
    if not outputs:
        raise ChannelError("channel file must contain a non-empty 'outputs' list")
    return _rows(outputs, "w")


def pair_from_dict(data: dict) -> ChannelPair:
    outputs = data.get("outputs") if isinstance(data, dict) else None
    if not outputs:
        raise ChannelError("pair file must contain a non-empty 'outputs' list")
    return ChannelPair(_rows(outputs, "w"), _rows(outputs, "v"))


def load_channel(path: str | Path) -> Bdmc:
    return channel_from_dict(_read_json(path))


def load_pair(path: str | Path) -> ChannelPair:
    return pair_from_dict(_read_json(path))


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ChannelError(f"{path}: not valid JSON ({exc})") from None
