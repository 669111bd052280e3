"""Executable checks of the polarization process claims.

Every check reduces to a worst-case residual compared with a fixed
tolerance, so a failure can be read as numerical slack or as a bug.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .channels import (
    ChannelPair,
    bec,
    bsc,
    mismatched_info,
    mismatched_info_definition,
    mismatched_info_posterior,
    pe_single_use,
    random_pair,
)
from .polarize import (
    MergePolicy,
    PairDensity,
    PairLike,
    as_density,
    bec_erasures,
    evolve_levels,
    merge_exact,
    pair_minus,
    pair_plus,
    reduce,
)

MARTINGALE_TOL = 1e-10
SUPER_TOL = 1e-12
LEMMA2_TOL = 1e-12


@dataclass
class Check:
    name: str
    instances: int
    worst_residual: float
    tolerance: float
    passed: bool
    note: str = ""
    advisory: bool = False


@dataclass
class PropertyReport:
    seed: int
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.advisory)

    def add(self, name, instances, worst, tol, note="", advisory=False) -> Check:
        check = Check(name, int(instances), float(worst), float(tol), bool(worst <= tol), note, advisory)
        self.checks.append(check)
        return check

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "tolerances": {c.name: c.tolerance for c in self.checks},
            "checks": [asdict(c) for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)

    def table(self) -> str:
        width = max([len(c.name) for c in self.checks] + [5])
        lines = [f"{'check':<{width}}  {'n':>8}  {'worst':>12}  {'tol':>8}  result"]
        for c in self.checks:
            lines.append(
                f"{c.name:<{width}}  {c.instances:>8}  {c.worst_residual:>12.3e}  {c.tolerance:>8.0e}  "
                f"{'PASS' if c.passed else 'FAIL'}{' (advisory)' if c.advisory else ''}"
                f"{'  ' + c.note if c.note else ''}"
            )
        return "\n".join(lines)


# -- one-step checks ----------------------------------------------------------------


def martingale_residual(x: PairLike) -> float | None:
    """|(I(minus) + I(plus)) / 2 - I|, or None when I(W, V) is -inf."""
    d = as_density(x)
    i0 = d.info()
    if not np.isfinite(i0):
        return None
    return abs(0.5 * (pair_minus(d).info() + pair_plus(d).info()) - i0)


def supermartingale_slack(x: PairLike) -> float:
    """mu - (mu(minus) + mu(plus)) / 2 with mu = E sqrt|Delta_V|; never negative in theory."""
    d = as_density(x)
    return d.mu() - 0.5 * (pair_minus(d).mu() + pair_plus(d).mu())


def minus_mu_residual(x: PairLike) -> float:
    d = as_density(x)
    return abs(pair_minus(d).mu() - d.mu() ** 2)


def plus_mu_excess(x: PairLike) -> float:
    """mu(plus) - (2 mu - mu^2); at most 0 in theory."""
    d = as_density(x)
    mu = d.mu()
    return pair_plus(d).mu() - (2 * mu - mu * mu)


def _lemma2_sides(d1, d2):
    r1, r2 = np.sqrt(np.abs(d1)), np.sqrt(np.abs(d2))
    rhs = r1 + r2 - r1 * r2
    out = []
    for s in (1.0, -1.0):
        den = 1 + s * d1 * d2
        ok = den != 0
        lhs = np.sqrt(np.abs((d1[ok] + s * d2[ok]) / den[ok]))
        out.append(lhs - rhs[ok])
    return out


def lemma2_pointwise(d1, d2) -> float:
    """Largest value of sqrt|(d1 +- d2)/(1 +- d1 d2)| - (sqrt|d1| + sqrt|d2| - sqrt|d1 d2|).

    Pairs with a vanishing denominator are skipped for that sign.
    Returns ``-inf`` if nothing was evaluated.
    """
    d1 = np.atleast_1d(np.asarray(d1, dtype=float))
    d2 = np.atleast_1d(np.asarray(d2, dtype=float))
    worst = -np.inf
    for diff in _lemma2_sides(d1, d2):
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst


def lemma2_samples(count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    grid = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
    g1, g2 = np.meshgrid(grid, grid)
    d1 = np.concatenate([rng.uniform(-1, 1, count), g1.ravel()])
    d2 = np.concatenate([rng.uniform(-1, 1, count), g2.ravel()])
    return d1, d2


# -- sweeps ------------------------------------------------------------------------------


def random_pairs(count: int, seed: int) -> list[ChannelPair]:
    rng = np.random.default_rng(seed)
    return [random_pair(rng) for _ in range(count)]


def dual_formula_sweep(count: int = 100, seed: int = 0) -> float:
    """Worst disagreement between the two I(W, V) formulas over random pairs."""
    worst = 0.0
    for pair in random_pairs(count, seed):
        a, b = mismatched_info_definition(pair), mismatched_info_posterior(pair)
        if np.isneginf(a) and np.isneginf(b):
            continue
        worst = max(worst, abs(a - b))
    return worst


def tree_residuals(x: PairLike, depth: int, policy: MergePolicy) -> dict[str, float]:
    """Worst one-step residuals over every internal node of a depth-``depth`` evolution."""
    worst = {"martingale": 0.0, "supermartingale": 0.0, "minus_mu": 0.0, "plus_mu": -np.inf}
    level = [reduce(as_density(x), policy)]
    for k in range(depth):
        nxt = []
        for d in level:
            # the raw children serve all four residuals and, reduced, the next level
            lo, hi = pair_minus(d), pair_plus(d)
            i0, mu = d.info(), d.mu()
            mu_lo, mu_hi = lo.mu(), hi.mu()
            if np.isfinite(i0):
                r = abs(0.5 * (lo.info() + hi.info()) - i0)
                worst["martingale"] = max(worst["martingale"], r)
            worst["supermartingale"] = max(worst["supermartingale"], 0.5 * (mu_lo + mu_hi) - mu)
            worst["minus_mu"] = max(worst["minus_mu"], abs(mu_lo - mu * mu))
            worst["plus_mu"] = max(worst["plus_mu"], mu_hi - (2 * mu - mu * mu))
            if k + 1 < depth:
                nxt += [reduce(lo, policy), reduce(hi, policy)]
        level = nxt
    return worst


TREE_POLICY = MergePolicy("quantized", max_atoms=64, grid=4096)


def tree_sweep(count: int = 100, depth: int = 4, seed: int = 0, policy: MergePolicy = TREE_POLICY) -> dict[str, float]:
    total = {"martingale": 0.0, "supermartingale": 0.0, "minus_mu": 0.0, "plus_mu": -np.inf}
    for pair in random_pairs(count, seed):
        for key, value in tree_residuals(pair, depth, policy).items():
            total[key] = max(total[key], value)
    return total


def pe_bound_violations(pairs) -> tuple[int, float, int]:
    """(violations, worst excess of Pe over 1 - I(W,V), pairs with finite I)."""
    violations, worst, finite = 0, -np.inf, 0
    for pair in pairs:
        i = mismatched_info(pair)
        if not np.isfinite(i):
            continue
        finite += 1
        excess = pe_single_use(pair) - (1 - i)
        worst = max(worst, excess)
        violations += excess > 0
    return violations, worst, finite


def pe_bound_sweep(count: int = 1000, seed: int = 42) -> PropertyReport:
    """Single-use error probability against 1 - I(W, V) on random pairs."""
    report = PropertyReport(seed)
    violations, worst, finite = pe_bound_violations(random_pairs(count, seed))
    report.add("pe_bound", finite, max(worst, 0.0) if violations else 0.0, 0.0, f"{violations} violations")
    return report


def bec_oracle_residual(eps: float, n: int) -> float:
    """Largest gap between exact pair evolution and the erasure recursion at level n."""
    ch = bec(eps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pair = ChannelPair(ch, ch)
    level = None
    for level in evolve_levels(pair, n, MergePolicy.exact(16), workers=1):
        pass
    got = np.array([d.info() for d in level])
    return float(np.max(np.abs(got - (1 - bec_erasures(eps, n)))))


# -- polarization profiles ---------------------------------------------------------------

PROFILE_EPS = (1e-1, 1e-2, 1e-3)


@dataclass
class LevelProfile:
    level: int
    histogram: list[int]
    minus_inf: int
    fractions: dict[float, float]
    middle: dict[float, float]
    mean: float


def _profile(level: int, values: np.ndarray, eps_list) -> LevelProfile:
    finite = values[np.isfinite(values)]
    hist, _ = np.histogram(np.clip(finite, 0, 1), bins=10, range=(0, 1))
    total = values.size
    fractions = {e: float(np.count_nonzero(values >= 1 - e)) / total for e in eps_list}
    middle = {e: float(np.count_nonzero((values > e) & (values < 1 - e))) / total for e in eps_list}
    return LevelProfile(level, hist.tolist(), int(total - finite.size), fractions, middle, float(np.mean(values)))


def _bec_erasure(d: PairDensity) -> float | None:
    d = merge_exact(d)
    matched = np.array_equal(d.dw, d.dv)
    if matched and np.all(np.isin(d.dw, (0.0, 1.0))):
        return float(d.mass[d.dw == 0.0].sum())
    return None


def polarization_profile(
    x: PairLike,
    n_max: int,
    policy: MergePolicy,
    eps_list=PROFILE_EPS,
    workers: int | None = None,
) -> list[LevelProfile]:
    """Per-level histograms of I(W_N^(i), V_N^(i)) and fractions above 1 - eps.

    Matched erasure channels are evolved with the scalar erasure recursion,
    which reaches much deeper levels than density evolution.
    """
    d = as_density(x)
    if not np.isfinite(d.info()):
        raise ValueError("profile needs I(W, V) > -inf")
    eps = _bec_erasure(d)
    out = []
    if eps is not None:
        for k in range(n_max + 1):
            out.append(_profile(k, 1 - bec_erasures(eps, k), eps_list))
        return out
    for k, level in enumerate(evolve_levels(d, n_max, policy, workers)):
        out.append(_profile(k, np.array([p.info() for p in level]), eps_list))
    return out


def is_nondecreasing(seq, slack: float = 0.0) -> bool:
    return all(b >= a - slack for a, b in zip(seq, seq[1:]))


# -- aggregate report ---------------------------------------------------------------------


def check_all(seed: int = 0, quick: bool = False, which: str = "all") -> PropertyReport:
    """Run the property suite; ``which`` selects one group or ``all``."""
    report = PropertyReport(seed)
    pairs = 20 if quick else 100
    run = lambda name: which in ("all", name)
    if run("dual"):
        report.add("dual_formula", pairs, dual_formula_sweep(pairs, seed), 1e-12)
    if run("martingale") or run("supermartingale"):
        worst = tree_sweep(pairs, 4, seed)
        if run("martingale"):
            report.add("martingale", pairs, worst["martingale"], MARTINGALE_TOL, "every node, depth 4")
        if run("supermartingale"):
            report.add("supermartingale", pairs, worst["supermartingale"], SUPER_TOL, "negative slack")
            report.add("minus_mu_square", pairs, worst["minus_mu"], MARTINGALE_TOL)
            report.add("plus_mu_bound", pairs, max(worst["plus_mu"], 0.0), SUPER_TOL)
            bec_gap = max(abs(supermartingale_slack(bec(e))) for e in np.linspace(0, 1, 11))
            report.add("bec_mu_equality", 11, bec_gap, MARTINGALE_TOL)
    if run("lemma2"):
        count = 10**5 if quick else 10**6
        d1, d2 = lemma2_samples(count, seed)
        report.add("lemma2", d1.size, max(lemma2_pointwise(d1, d2), 0.0), LEMMA2_TOL)
    if run("pebound"):
        violations, worst, finite = pe_bound_violations(random_pairs(10 * pairs, seed))
        report.add("pe_bound", finite, max(worst, 0.0) if violations else 0.0, 0.0, f"{violations} violations")
    if run("bec"):
        n = 6 if quick else 10
        report.add("bec_oracle", 1 << n, bec_oracle_residual(0.3, n), 1e-12)
        prof = polarization_profile(bec(0.5), 20, MergePolicy())
        gap = abs(prof[-1].fractions[1e-3] - 0.5)
        report.add("bec_profile_n20", 1 << 20, gap, 0.05, "fraction(I>=0.999) vs capacity")
    if run("profile"):
        n = 8 if quick else 14
        prof = polarization_profile(
            ChannelPair(bsc(0.1), bsc(0.2)), n, MergePolicy("quantized", 32, 4096)
        )
        fr = [p.fractions[1e-2] for p in prof[6:]]
        i_wv = mismatched_info(ChannelPair(bsc(0.1), bsc(0.2)))
        report.add(
            "profile_monotone", len(fr), max([a - b for a, b in zip(fr, fr[1:])] + [0.0]), 0.0,
            "fraction(I>=0.99), levels 6..",
        )
        report.add(
            "profile_rate", 1 << n, max(0.0, (i_wv - 0.15) - fr[-1]), 0.0,
            f"fraction {fr[-1]:.4f} at n={n}",
            advisory=quick,
        )
        report.add(
            "profile_middle_mass", 1 << n, max(0.0, prof[-1].middle[1e-2] - 0.05), 0.0,
            f"middle mass {prof[-1].middle[1e-2]:.4f} at n={n}",
            advisory=True,
        )
    return report
