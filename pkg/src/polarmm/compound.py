"""Channel families, worst-channel search, one-sidedness, and compound runs.

A compound run fixes a single decoding metric, the family's least capable
member V, and then for every member W builds an information set for the
pair (W, V) and measures the frame error rate of SC decoding with V.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channels import (
    Bdmc,
    ChannelError,
    ChannelPair,
    is_symmetric,
    mismatched_info,
    standard_channel,
    symmetric_capacity,
)
from .codec import MetricTable, simulate_frames
from .construct import construct_exact, construct_mc, scd_union_bound
from .polarize import MergePolicy
from .rng import sub_seed

log = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5) - 1) / 2


class AmbiguousMinimizerError(ValueError):
    def __init__(self, first: Bdmc, second: Bdmc, capacity: float):
        super().__init__(f"capacity minimizer is not unique: {first!r} and {second!r} ({capacity:.12g} bits)")
        self.members = (first, second)


class CompoundRateWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ChannelFamily:
    """A class of symmetric channels: a BSC/BEC parameter grid or an explicit list."""

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    step: float = 0.0
    members: tuple[Bdmc, ...] = ()

    def __post_init__(self):
        if self.kind not in ("bsc-interval", "bec-interval", "explicit-list"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        if self.kind == "explicit-list":
            if not self.members:
                raise ValueError("family is empty")
            for ch in self.members:
                if not is_symmetric(ch):
                    raise ChannelError(f"family member {ch!r} is not symmetric")
        else:
            if not 0 <= self.lo <= self.hi <= 1:
                raise ValueError("interval endpoints must satisfy 0 <= lo <= hi <= 1")
            if self.step < 0 or (self.step == 0 and self.hi > self.lo):
                raise ValueError("grid step must be positive")

    @classmethod
    def parse(cls, text: str) -> "ChannelFamily":
        """Parse ``"bsc:lo:hi:step"`` or ``"bec:lo:hi:step"``."""
        parts = text.strip().split(":")
        if len(parts) != 4 or parts[0].lower() not in ("bsc", "bec"):
            raise ValueError(f"family spec must look like 'bsc:0.05:0.11:0.01', got {text!r}")
        lo, hi, step = (float(p) for p in parts[1:])
        return cls(f"{parts[0].lower()}-interval", lo, hi, step)

    @property
    def channel_kind(self) -> str | None:
        return {"bsc-interval": "BSC", "bec-interval": "BEC"}.get(self.kind)

    def spec(self) -> str:
        if self.channel_kind is None:
            return f"explicit:{len(self.members)}"
        return f"{self.channel_kind.lower()}:{self.lo:g}:{self.hi:g}:{self.step:g}"

    def params(self) -> list[float]:
        """Grid parameters for interval families (sorted)."""
        if self.channel_kind is None:
            return []
        if self.hi == self.lo:
            return [self.lo]
        count = int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1
        return [round(self.lo + k * self.step, 12) for k in range(count)]

    def channel(self, param: float) -> Bdmc:
        return standard_channel(self.channel_kind, param)

    def grid(self) -> list[tuple[float | None, Bdmc]]:
        """``(parameter, channel)`` for every grid member; parameter is None for lists."""
        if self.channel_kind is None:
            return [(None, ch) for ch in self.members]
        return [(p, self.channel(p)) for p in self.params()]


def _golden_min(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2


@dataclass(frozen=True)
class FamilyMinimum:
    channel: Bdmc
    capacity: float
    param: float | None = None


def family_min_channel(fam: ChannelFamily, tol: float = 1e-9) -> FamilyMinimum:
    """The least capable member of the family's closure, with its capacity.

    Interval families are searched over the continuous parameter with
    golden-section search; endpoints are checked explicitly so a monotone
    family returns its endpoint exactly. Explicit lists are scanned and two
    members within ``tol`` of the minimum raise :class:`AmbiguousMinimizerError`.
    """
    if fam.channel_kind is not None:
        cap = lambda p: symmetric_capacity(fam.channel(p))
        candidates = [fam.lo, fam.hi]
        if fam.hi > fam.lo:
            candidates.append(_golden_min(cap, fam.lo, fam.hi, tol))
        best = min(candidates, key=lambda p: (cap(p), candidates.index(p)))
        return FamilyMinimum(fam.channel(best), cap(best), best)
    caps = np.array([symmetric_capacity(ch) for ch in fam.members])
    order = np.argsort(caps, kind="stable")
    if len(order) > 1 and caps[order[1]] - caps[order[0]] <= tol:
        raise AmbiguousMinimizerError(fam.members[order[0]], fam.members[order[1]], caps[order[0]])
    return FamilyMinimum(fam.members[order[0]], float(caps[order[0]]))


@dataclass(frozen=True)
class OneSidedCertificate:
    minimizer: Bdmc
    min_capacity: float
    worst_violation: float
    tested_grid: str
    margins: tuple[float, ...] = ()

    @property
    def valid(self) -> bool:
        return self.worst_violation >= -1e-9


def one_sided_check(fam: ChannelFamily, v: Bdmc, grid: int = 101) -> OneSidedCertificate:
    """Check I(W, V) >= I(V) over ``grid`` members of an interval family, or all list members.

    Members must share V's output alphabet; cross-kind pairs are rejected.
    """
    if fam.channel_kind is not None:
        params = np.linspace(fam.lo, fam.hi, max(grid, 1)) if fam.hi > fam.lo else [fam.lo]
        members = [fam.channel(p) for p in params]
        desc = f"{fam.spec()} sampled at {len(members)} points"
    else:
        members = list(fam.members)
        desc = f"explicit list of {len(members)}"
    i_v = symmetric_capacity(v)
    margins = []
    for w in members:
        if w.size != v.size:
            raise ChannelError(
                f"member {w!r} and metric {v!r} have different alphabets; supply a shared-alphabet pair"
            )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            margins.append(mismatched_info(ChannelPair(w, v)) - i_v)
    return OneSidedCertificate(v, i_v, float(min(margins)), desc, tuple(margins))


# -- compound experiment --------------------------------------------------------------


@dataclass
class ReportRow:
    param: float | None
    I_W: float
    I_WV: float
    set_size: int
    rate: float
    fer: float
    ci95: float
    union_bound: float | None = None
    frame_errors: int = 0
    frames: int = 0


CSV_COLUMNS = ("param", "I_W", "I_WV", "set_size", "rate", "fer", "ci95", "union_bound")


def fmt(x) -> str:
    """17-significant-digit rendering used in every CSV artifact."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class ExperimentReport:
    family: str
    metric: Bdmc
    metric_capacity: float
    n: int
    rate: float
    seed: int
    rows: list[ReportRow] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def metric_table(self) -> MetricTable:
        return MetricTable.from_channel(self.metric)

    def median_fer(self) -> float:
        return float(np.median([r.fer for r in self.rows]))

    def csv_body(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_csv(self) -> str:
        header = "# " + json.dumps(self.config, sort_keys=True) + "\n"
        return header + self.csv_body()

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "family": self.family,
            "metric": [list(map(float, self.metric.p0)), list(map(float, self.metric.p1))],
            "metric_capacity": self.metric_capacity,
            "n": self.n,
            "rate": self.rate,
            "seed": self.seed,
            "rows": [asdict(r) for r in self.rows],
        }


def compound_run(
    fam: ChannelFamily,
    rate: float,
    n: int,
    trials: int = 10_000,
    frames: int = 1_000,
    seed: int = 0,
    construction: str = "mc",
    policy: MergePolicy | None = None,
    workers: int | None = None,
) -> ExperimentReport:
    """Run the compound experiment: one metric V for the whole family.

    For each member W the top ``ceil(N * rate)`` indices of I(W_N^(i), V_N^(i))
    (Monte Carlo or exact) form the information set; frames sent through W
    are decoded with V. Rows are ordered by family parameter.
    """
    minimum = family_min_channel(fam)
    v = minimum.channel
    if rate >= minimum.capacity:
        warnings.warn(
            f"rate {rate} is not below the compound capacity {minimum.capacity:.6g}",
            CompoundRateWarning,
            stacklevel=2,
        )
    metric = MetricTable.from_channel(v)
    policy = policy or MergePolicy()
    rows = []
    grid = fam.grid()
    if fam.channel_kind is not None:
        grid.sort(key=lambda t: t[0])
    for k, (param, w) in enumerate(grid):
        if w.size != v.size:
            raise ChannelError("family members must share the metric's output alphabet")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pair = ChannelPair(w, v)
        bound = None
        if construction == "exact":
            info = construct_exact(pair, n, policy, rate=rate, workers=workers)
            bound = scd_union_bound(info.per_index, info).value
        elif construction == "mc":
            info = construct_mc(w, v, n, trials, sub_seed(seed, "construct", k), rate=rate, workers=workers)
        else:
            raise ValueError(f"unknown construction {construction!r}")
        sim = simulate_frames(
            w, info.code(), metric, frames, sub_seed(seed, "simulate", k), workers=workers, keep_frames=False
        )
        log.info("member %s: |A|=%d FER=%.4g", param, info.size, sim.fer)
        rows.append(
            ReportRow(
                param=param,
                I_W=symmetric_capacity(w),
                I_WV=mismatched_info(pair),
                set_size=info.size,
                rate=info.size / (1 << n),
                fer=sim.fer,
                ci95=sim.ci95,
                union_bound=bound,
                frame_errors=sim.frame_errors,
                frames=frames,
            )
        )
    config = {
        "family": fam.spec(),
        "rate": rate,
        "n": n,
        "trials": trials,
        "frames": frames,
        "seed": seed,
        "construction": construction,
    }
    return ExperimentReport(fam.spec(), v, minimum.capacity, n, rate, seed, rows, config)
