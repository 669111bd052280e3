import math
import warnings

import numpy as np
import pytest

from polarmm.channels import Bdmc, ChannelError, bec, bsc, symmetric_capacity
from polarmm.compound import (
    CSV_COLUMNS,
    AmbiguousMinimizerError,
    ChannelFamily,
    CompoundRateWarning,
    compound_run,
    family_min_channel,
    fmt,
    one_sided_check,
)


def bsc3(p):
    """BSC embedded on the three-symbol BEC alphabet (erasure never produced)."""
    return Bdmc(np.array([1 - p, 0.0, p]), np.array([p, 0.0, 1 - p]), ("0", "e", "1"))


# -- families ---------------------------------------------------------------------------


def test_parse_family():
    fam = ChannelFamily.parse("bsc:0.05:0.11:0.01")
    assert fam.kind == "bsc-interval"
    np.testing.assert_allclose(fam.params(), [0.05, 0.06, 0.07, 0.08, 0.09, 0.10, 0.11])
    assert fam.spec() == "bsc:0.05:0.11:0.01"


@pytest.mark.parametrize("text", ["bsc:0.1", "awgn:0:1:0.1", "bsc:0.3:0.1:0.1", "bec:0.1:0.2:0"])
def test_parse_errors(text):
    with pytest.raises(ValueError):
        ChannelFamily.parse(text)


def test_explicit_members_must_be_symmetric():
    z = Bdmc(np.array([1.0, 0.0]), np.array([0.3, 0.7]))
    with pytest.raises(ChannelError):
        ChannelFamily("explicit-list", members=(bsc(0.1), z))
    with pytest.raises(ValueError):
        ChannelFamily("explicit-list", members=())


def test_min_bsc_interval():
    m = family_min_channel(ChannelFamily.parse("bsc:0.05:0.11:0.01"))
    assert m.param == 0.11
    assert m.channel.same_as(bsc(0.11))
    assert m.capacity == pytest.approx(0.500084041835472, abs=1e-12)


def test_min_bec_interval():
    m = family_min_channel(ChannelFamily.parse("bec:0.1:0.4:0.1"))
    assert m.channel.same_as(bec(0.4))
    assert m.capacity == pytest.approx(0.6, abs=1e-12)


def test_min_interior_bsc():
    # capacity is smallest at p = 1/2 when the interval straddles it
    m = family_min_channel(ChannelFamily.parse("bsc:0.3:0.8:0.1"))
    assert m.param == pytest.approx(0.5, abs=1e-6)
    assert m.capacity == pytest.approx(0.0, abs=1e-9)


def test_ambiguous_minimizer():
    fam = ChannelFamily("explicit-list", members=(bsc(0.1), bsc(0.1)))
    with pytest.raises(AmbiguousMinimizerError) as info:
        family_min_channel(fam)
    assert len(info.value.members) == 2


# -- one-sidedness ------------------------------------------------------------------------------


def test_convex_bsc_interval_certificate():
    cert = one_sided_check(ChannelFamily.parse("bsc:0.05:0.11:0.01"), bsc(0.11))
    assert cert.valid
    assert cert.min_capacity == pytest.approx(symmetric_capacity(bsc(0.11)))


def test_matched_singleton_margin_zero():
    cert = one_sided_check(ChannelFamily("explicit-list", members=(bec(0.3),)), bec(0.3))
    assert cert.worst_violation == 0.0 and cert.valid


def test_random_intervals_are_one_sided():
    rng = np.random.default_rng(12)
    for k in range(20):
        kind = "bsc" if k % 2 else "bec"
        top = 0.5 if kind == "bsc" else 1.0
        lo, hi = np.sort(rng.uniform(0, top, 2))
        fam = ChannelFamily.parse(f"{kind}:{lo:.4f}:{hi:.4f}:{max((hi - lo) / 5, 1e-4):.6f}")
        v = family_min_channel(fam).channel
        assert one_sided_check(fam, v, grid=51).valid


def test_adversarial_list_margin():
    # BEC(0.05) erases, but the metric BSC(0.4) never produces an erasure
    fam = ChannelFamily("explicit-list", members=(bsc3(0.4), bec(0.05)))
    v = family_min_channel(fam).channel
    assert v.same_as(bsc3(0.4))
    cert = one_sided_check(fam, v)
    assert cert.worst_violation == -math.inf
    assert not cert.valid


def test_cross_alphabet_rejected():
    fam = ChannelFamily("explicit-list", members=(bsc(0.4), bec(0.05)))
    with pytest.raises(ChannelError):
        one_sided_check(fam, bsc(0.4))


# -- compound experiment --------------------------------------------------------------------------


def test_noiseless_singleton():
    fam = ChannelFamily("explicit-list", members=(bsc(0.0),))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CompoundRateWarning)
        for rate in (0.5, 1.0):
            report = compound_run(fam, rate, 5, trials=200, frames=200, seed=1)
            assert [r.fer for r in report.rows] == [0.0]


def test_rate_warning():
    fam = ChannelFamily.parse("bsc:0.1:0.11:0.01")
    with pytest.warns(CompoundRateWarning):
        compound_run(fam, 0.6, 3, trials=200, frames=10, seed=0)


def test_report_shape_and_csv():
    fam = ChannelFamily.parse("bsc:0.05:0.11:0.01")
    report = compound_run(fam, 0.3, 5, trials=500, frames=100, seed=7, construction="exact")
    assert len(report.rows) == 7
    assert [r.param for r in report.rows] == fam.params()
    assert all(r.union_bound is not None for r in report.rows)
    lines = report.to_csv().splitlines()
    assert lines[0].startswith("# {")
    assert lines[1] == ",".join(CSV_COLUMNS)
    assert len(lines) == 9
    assert report.metric.same_as(bsc(0.11))


def test_rate_monotonicity():
    fam = ChannelFamily.parse("bsc:0.05:0.11:0.02")
    lo = compound_run(fam, 0.3, 8, trials=4000, frames=500, seed=3)
    hi = compound_run(fam, 0.45, 8, trials=4000, frames=500, seed=3)
    for a, b in zip(lo.rows, hi.rows):
        assert b.fer >= a.fer - 3 * math.sqrt(max(a.fer * (1 - a.fer), 1 / a.frames) / a.frames)


def test_compound_reproducible_across_workers():
    fam = ChannelFamily.parse("bsc:0.08:0.11:0.03")
    a = compound_run(fam, 0.3, 6, trials=1000, frames=300, seed=5, workers=1)
    b = compound_run(fam, 0.3, 6, trials=1000, frames=300, seed=5, workers=4)
    assert a.to_csv() == b.to_csv()


def test_fmt():
    assert fmt(None) == ""
    assert fmt(3) == "3"
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(1 / 3)) == 1 / 3
    assert fmt(-math.inf) == "-inf"
