"""Polar encoder and a mismatched successive-cancellation decoder.

Codewords are ``x = u F^{(x)n}`` with ``F = [[1, 0], [1, 1]]`` and no bit
reversal, so index ``i`` (1-based) is the synthesized channel whose branch
is the binary expansion of ``i - 1``, most significant bit first.

The decoder works on posterior differences ``Delta = V(0|y) - V(1|y)``
computed from the metric channel only. Combining two halves ``a`` (the
``u1 ^ u2`` copy) and ``b`` (the ``u2`` copy):

* towards ``u1``: ``a * b``
* towards ``u2`` given ``u1``: ``(b + s a) / (1 + s a b)``, ``s = (-1)**u1``
"""

from __future__ import annotations

import base64
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .channels import Bdmc
from .polarize import default_workers
from .rng import stream

CHUNK = 256
_BELOW_ONE = float(np.nextafter(1.0, 0.0))


class DecodeInputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PolarCode:
    n: int
    frozen_mask: np.ndarray
    frozen_values: np.ndarray = None

    def __post_init__(self):
        mask = np.asarray(self.frozen_mask, dtype=bool).ravel().copy()
        if mask.size != 1 << self.n:
            raise ValueError(f"frozen mask has length {mask.size}, expected {1 << self.n}")
        if self.frozen_values is None:
            values = np.zeros(mask.size, dtype=np.uint8)
        else:
            values = np.asarray(self.frozen_values, dtype=np.uint8).ravel().copy()
            if values.size != mask.size:
                raise ValueError("frozen_values must have one entry per position")
            values[~mask] = 0
        mask.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "frozen_mask", mask)
        object.__setattr__(self, "frozen_values", values)
        object.__setattr__(self, "_frozen_count", np.concatenate([[0], np.cumsum(mask)]))

    @classmethod
    def from_info_indices(cls, n: int, indices: Sequence[int]) -> "PolarCode":
        """Build a code from 1-based information indices, freezing the rest to zero."""
        mask = np.ones(1 << n, dtype=bool)
        idx = np.asarray(list(indices), dtype=int)
        if idx.size and (idx.min() < 1 or idx.max() > 1 << n):
            raise ValueError("information indices must lie in 1..N")
        mask[idx - 1] = False
        return cls(n, mask)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def K(self) -> int:
        return int(self.N - self.frozen_mask.sum())

    @property
    def info_positions(self) -> np.ndarray:
        """0-based positions of the information bits."""
        return np.flatnonzero(~self.frozen_mask)

    @property
    def rate(self) -> float:
        return self.K / self.N

    def all_frozen(self, lo: int, length: int) -> bool:
        return self._frozen_count[lo + length] - self._frozen_count[lo] == length

    # -- JSON ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "frozen_mask": _pack(self.frozen_mask),
            "frozen_values": _pack(self.frozen_values),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolarCode":
        n = int(data["n"])
        mask = _unpack(data["frozen_mask"], 1 << n).astype(bool)
        values = _unpack(data.get("frozen_values", ""), 1 << n) if data.get("frozen_values") else None
        return cls(n, mask, values)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PolarCode":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _pack(bits: np.ndarray) -> str:
    return base64.b64encode(np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()).decode()


def _unpack(text: str, length: int) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(text), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")
    if bits.size < length:
        raise ValueError("bitset shorter than the code length")
    return bits[:length]


def polar_transform(u: np.ndarray) -> np.ndarray:
    """Apply ``F^{(x)n}`` over GF(2) along the last axis (batched)."""
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    if N & (N - 1):
        raise ValueError("length must be a power of two")
    lead = x.shape[:-1]
    h = 1
    while h < N:
        v = x.reshape(lead + (N // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def encode(code: PolarCode, info_bits) -> np.ndarray:
    """Place ``info_bits`` (shape ``(K,)`` or ``(B, K)``) on the unfrozen positions and transform."""
    bits = np.asarray(info_bits, dtype=np.uint8)
    if bits.shape[-1] != code.K:
        raise ValueError(f"expected {code.K} information bits, got {bits.shape[-1]}")
    u = np.broadcast_to(code.frozen_values, bits.shape[:-1] + (code.N,)).copy()
    u[..., code.info_positions] = bits
    return polar_transform(u)


@dataclass(frozen=True, eq=False)
class MetricTable:
    """Per-output-symbol posterior differences of the decoding metric V."""

    delta: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float).ravel().copy()
        if np.any(np.abs(d) > 1):
            raise ValueError("metric values must lie in [-1, 1]")
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(d.size)))

    @classmethod
    def from_channel(cls, v: Bdmc) -> "MetricTable":
        # outputs V never produces carry no metric information
        return cls(np.nan_to_num(v.delta, nan=0.0), v.labels)

    @property
    def size(self) -> int:
        return int(self.delta.size)

    def lookup(self, y) -> np.ndarray:
        y = np.asarray(y)
        if y.dtype.kind in "US":
            index = {l: i for i, l in enumerate(self.labels)}
            try:
                y = np.array([index[s] for s in y.ravel()]).reshape(y.shape)
            except KeyError as exc:
                raise DecodeInputError(f"unknown output symbol {exc.args[0]!r}") from None
        y = y.astype(np.int64)
        if y.size and (y.min() < 0 or y.max() >= self.size):
            raise DecodeInputError("received symbol index outside the metric alphabet")
        return self.delta[y]


def _plus(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = 1.0 - 2.0 * x
    num = b + s * a
    den = 1.0 + s * a * b
    tiny = np.abs(den) < 1e-300
    out = np.where(tiny, np.sign(num), num / np.where(tiny, 1.0, den))
    genuine = (np.abs(a) == 1.0) | (np.abs(b) == 1.0)
    return np.where(genuine, out, np.clip(out, -_BELOW_ONE, _BELOW_ONE))


class _Run:
    def __init__(self, code, batch, genie=None, record=False):
        self.code = code
        self.genie = genie
        self.u = np.zeros((batch, code.N), dtype=np.uint8)
        self.record = np.zeros((batch, code.N)) if record else None

    def node(self, delta: np.ndarray, lo: int) -> np.ndarray:
        L = delta.shape[1]
        code = self.code
        if self.genie is None and code.all_frozen(lo, L):
            vals = code.frozen_values[lo : lo + L]
            self.u[:, lo : lo + L] = vals
            return np.broadcast_to(polar_transform(vals), delta.shape)
        if L == 1:
            d = delta[:, 0]
            if self.record is not None:
                self.record[:, lo] = d
            if self.genie is not None:
                bit = self.genie[:, lo]
            elif code.frozen_mask[lo]:
                bit = np.full(d.shape, code.frozen_values[lo], dtype=np.uint8)
            else:
                bit = (d < 0).astype(np.uint8)
            self.u[:, lo] = bit
            return bit[:, None]
        h = L // 2
        a, b = delta[:, :h], delta[:, h:]
        left = self.node(a * b, lo)
        right = self.node(_plus(a, b, left), lo + h)
        return np.concatenate([left ^ right, right], axis=1)


def sc_decode_batch(code: PolarCode, leaf_delta: np.ndarray) -> np.ndarray:
    """Decode a batch of frames given leaf posterior differences of shape ``(B, N)``."""
    leaf_delta = np.atleast_2d(np.asarray(leaf_delta, dtype=float))
    if leaf_delta.shape[1] != code.N:
        raise DecodeInputError(f"expected {code.N} received symbols, got {leaf_delta.shape[1]}")
    run = _Run(code, leaf_delta.shape[0])
    run.node(leaf_delta, 0)
    return run.u


def sc_decode(code: PolarCode, metric: MetricTable, y) -> tuple[np.ndarray, np.ndarray]:
    """Successive-cancellation decoding of one received word with metric ``metric``.

    Returns ``(u_hat, info_hat)``. Ties (``Delta == 0``) decide 0.
    """
    y = np.asarray(y)
    if y.ndim != 1 or y.size != code.N:
        raise DecodeInputError(f"expected {code.N} received symbols")
    u = sc_decode_batch(code, metric.lookup(y)[None, :])[0]
    return u, u[code.info_positions]


def sample_outputs(w: Bdmc, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw output symbol indices of W for inputs ``x`` (any shape)."""
    cdf = np.cumsum(np.vstack([w.p0, w.p1]), axis=1)
    r = rng.random(x.shape)
    y = np.where(
        x == 0,
        np.searchsorted(cdf[0], r, side="right"),
        np.searchsorted(cdf[1], r, side="right"),
    )
    return np.minimum(y, w.size - 1)


@dataclass(frozen=True)
class FrameResult:
    info_bit_errors: int
    frame_error: bool
    first_error_index: int | None


@dataclass
class SimulationResult:
    frames: int
    frame_errors: int
    bit_errors: int
    K: int
    seed: int
    results: list[FrameResult] = field(default_factory=list, repr=False)

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.K) if self.K else 0.0

    @property
    def ci95(self) -> float:
        """Normal-approximation 95% half-width of the FER."""
        p = self.fer
        return 1.96 * math.sqrt(p * (1 - p) / self.frames)

    @property
    def sigma(self) -> float:
        p = self.fer
        return math.sqrt(p * (1 - p) / self.frames)


def _chunks(total: int, size: int = CHUNK) -> list[tuple[int, int]]:
    return [(k, min(size, total - k * size)) for k in range(math.ceil(total / size))]


def simulate_frames(
    w: Bdmc,
    code: PolarCode,
    metric: MetricTable,
    frames: int,
    seed: int,
    workers: int | None = None,
    keep_frames: bool = True,
) -> SimulationResult:
    """Transmit random frames through ``w`` and decode them with ``metric``.

    Frames are drawn in fixed chunks whose random streams depend only on
    ``(seed, chunk index)``, so results do not depend on ``workers``.
    """
    if frames < 1:
        raise ValueError("frames must be at least 1")
    if w.size != metric.size:
        raise ValueError(f"channel has {w.size} outputs but metric has {metric.size}")
    info = code.info_positions

    def run(chunk):
        k, size = chunk
        if code.K == 0:
            return np.zeros(size, dtype=np.int64), np.full(size, -1)
        rng = stream(seed, "simulate", k)
        bits = rng.integers(0, 2, size=(size, code.K), dtype=np.uint8)
        y = sample_outputs(w, encode(code, bits), rng)
        u = sc_decode_batch(code, metric.delta[y])
        wrong = u[:, info] != bits
        first = np.where(wrong.any(axis=1), info[np.argmax(wrong, axis=1)] + 1, -1)
        return wrong.sum(axis=1), first

    workers = workers or default_workers()
    chunks = _chunks(frames)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    errors = np.concatenate([p[0] for p in parts])
    first = np.concatenate([p[1] for p in parts])
    results = []
    if keep_frames:
        results = [
            FrameResult(int(e), bool(e > 0), int(f) if f > 0 else None) for e, f in zip(errors, first)
        ]
    return SimulationResult(
        frames=frames,
        frame_errors=int(np.count_nonzero(errors)),
        bit_errors=int(errors.sum()),
        K=code.K,
        seed=seed,
        results=results,
    )


# -- genie-aided trajectories ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GenieSamples:
    """Per-trial transmitted bits ``u`` and the decoder's ``Delta`` at every index."""

    u: np.ndarray
    delta: np.ndarray

    def log_terms(self) -> np.ndarray:
        """Samples of log2(1 + (-1)**u * Delta), whose mean is I(W_N^(i), V_N^(i))."""
        z = 1.0 + (1.0 - 2.0 * self.u) * self.delta
        with np.errstate(divide="ignore"):
            return np.log2(np.maximum(z, 0.0))


def _genie_chunk(w: Bdmc, metric: MetricTable, n: int, seed: int, k: int, size: int) -> GenieSamples:
    N = 1 << n
    rng = stream(seed, "genie", k)
    u = rng.integers(0, 2, size=(size, N), dtype=np.uint8)
    y = sample_outputs(w, polar_transform(u), rng)
    run = _Run(PolarCode(n, np.zeros(N, dtype=bool)), size, genie=u, record=True)
    run.node(metric.delta[y], 0)
    return GenieSamples(u, run.record)


def iter_genie_chunks(
    w: Bdmc, v: Bdmc, n: int, trials: int, seed: int, workers: int | None = None
) -> Iterator[GenieSamples]:
    """Yield genie-aided samples in fixed-size chunks, in chunk order."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if w.size != v.size:
        raise ValueError("w and v must share an output alphabet")
    metric = MetricTable.from_channel(v)
    chunks = _chunks(trials)
    workers = workers or default_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # bounded look-ahead keeps memory flat for long runs
            for start in range(0, len(chunks), 4 * workers):
                batch = chunks[start : start + 4 * workers]
                yield from pool.map(lambda c: _genie_chunk(w, metric, n, seed, *c), batch)
    else:
        for c in chunks:
            yield _genie_chunk(w, metric, n, seed, *c)


def genie_trajectories(w: Bdmc, v: Bdmc, n: int, trials: int, seed: int, workers: int | None = None) -> GenieSamples:
    """Run SC with metric V on outputs of W, feeding the true bits into every update.

    Returns ``u`` and ``delta`` arrays of shape ``(trials, 2**n)``.
    """
    parts = list(iter_genie_chunks(w, v, n, trials, seed, workers))
    return GenieSamples(np.concatenate([p.u for p in parts]), np.concatenate([p.delta for p in parts]))
