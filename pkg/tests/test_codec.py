import numpy as np
import pytest

from polarmm.channels import ChannelPair, bec, bsc
from polarmm.codec import (
    DecodeInputError,
    MetricTable,
    PolarCode,
    encode,
    genie_trajectories,
    polar_transform,
    sc_decode,
    sc_decode_batch,
    simulate_frames,
)
from polarmm.construct import rate_to_k, select_info_set
from polarmm.polarize import MergePolicy, as_density, bec_erasures, evolve_all, synthesize

EXACT = MergePolicy.exact()


def open_code(n):
    return PolarCode(n, np.zeros(1 << n, dtype=bool))


# -- encoder -----------------------------------------------------------------------------


@pytest.mark.parametrize("u,x", [((1, 0), (1, 0)), ((1, 1), (0, 1)), ((0, 1), (1, 1))])
def test_encode_n1(u, x):
    np.testing.assert_array_equal(encode(open_code(1), u), x)


def test_encode_zero():
    np.testing.assert_array_equal(encode(open_code(2), [0, 0, 0, 0]), [0, 0, 0, 0])


def test_encode_length_mismatch():
    with pytest.raises(ValueError):
        encode(PolarCode.from_info_indices(2, [4]), [1, 0])


def test_encode_linear_and_involution():
    rng = np.random.default_rng(0)
    code = open_code(6)
    a = rng.integers(0, 2, 64)
    b = rng.integers(0, 2, 64)
    np.testing.assert_array_equal(encode(code, a ^ b), encode(code, a) ^ encode(code, b))
    np.testing.assert_array_equal(encode(code, encode(code, a)), a)


def test_transform_batched():
    rng = np.random.default_rng(1)
    u = rng.integers(0, 2, size=(5, 16))
    rows = np.array([polar_transform(r) for r in u])
    np.testing.assert_array_equal(polar_transform(u), rows)


def test_code_json_round_trip(tmp_path):
    code = PolarCode(3, [True, True, False, True, False, False, True, False], [1, 0, 0, 1, 0, 0, 0, 0])
    back = PolarCode.from_dict(code.to_dict())
    np.testing.assert_array_equal(back.frozen_mask, code.frozen_mask)
    np.testing.assert_array_equal(back.frozen_values, code.frozen_values)
    code.save(tmp_path / "c.json")
    assert PolarCode.load(tmp_path / "c.json").K == code.K == 4


# -- decoder ------------------------------------------------------------------------------


def test_noiseless_recovery():
    rng = np.random.default_rng(2)
    code = PolarCode.from_info_indices(5, rng.choice(np.arange(1, 33), 20, replace=False))
    metric = MetricTable.from_channel(bsc(0.0))
    for _ in range(20):
        info = rng.integers(0, 2, code.K)
        u_hat, info_hat = sc_decode(code, metric, encode(code, info))
        np.testing.assert_array_equal(info_hat, info)


def test_plus_update_example():
    # frozen u1 = 0, leaf values 0.8 and 0.5: the plus value 1.3/1.4 decides u2 = 0
    code = PolarCode(1, [True, False])
    u = sc_decode_batch(code, np.array([[0.8, 0.5]]))
    np.testing.assert_array_equal(u, [[0, 0]])
    # flipping the sign of the second leaf gives (0.8 - 0.5)/(1 - 0.4) > 0 as well
    np.testing.assert_array_equal(sc_decode_batch(code, np.array([[0.8, -0.5]]))[0], [0, 0])
    # but negative leaves overall decide 1
    np.testing.assert_array_equal(sc_decode_batch(code, np.array([[-0.8, -0.5]]))[0], [0, 1])


def test_all_erased_ties_to_zero():
    code = PolarCode(3, np.ones(8, dtype=bool))
    metric = MetricTable.from_channel(bec(0.5))
    u, info = sc_decode(code, metric, np.array(["e"] * 8))
    np.testing.assert_array_equal(u, np.zeros(8))
    assert info.size == 0
    # same with no frozen bits: every decision is a tie
    u, _ = sc_decode(open_code(3), metric, np.array(["e"] * 8))
    np.testing.assert_array_equal(u, np.zeros(8))


def test_unknown_symbol():
    metric = MetricTable.from_channel(bsc(0.1))
    with pytest.raises(DecodeInputError):
        sc_decode(open_code(1), metric, np.array(["0", "x"]))
    with pytest.raises(DecodeInputError):
        sc_decode(open_code(1), metric, np.array([0, 5]))


def test_decoder_deterministic():
    rng = np.random.default_rng(3)
    code = PolarCode.from_info_indices(6, range(33, 65))
    leaves = np.tanh(rng.normal(size=(50, 64)))
    np.testing.assert_array_equal(sc_decode_batch(code, leaves), sc_decode_batch(code, leaves))


# -- simulation --------------------------------------------------------------------------------


def test_noiseless_fer_zero():
    code = PolarCode.from_info_indices(6, range(1, 65))
    sim = simulate_frames(bsc(0.0), code, MetricTable.from_channel(bsc(0.0)), 300, 1)
    assert sim.fer == 0 and sim.ber == 0


def test_rate_zero_fer_zero():
    code = PolarCode(4, np.ones(16, dtype=bool))
    sim = simulate_frames(bsc(0.4), code, MetricTable.from_channel(bsc(0.4)), 100, 1)
    assert sim.fer == 0 and sim.K == 0 and sim.ber == 0


def test_simulation_reproducible_across_workers():
    info = select_info_set(1 - bec_erasures(0.4, 7), k=50)
    metric = MetricTable.from_channel(bec(0.4))
    a = simulate_frames(bec(0.4), info.code(), metric, 700, 11, workers=1)
    b = simulate_frames(bec(0.4), info.code(), metric, 700, 11, workers=4)
    assert a.results == b.results and a.frame_errors == b.frame_errors


def test_frame_results_consistent():
    info = select_info_set(1 - bec_erasures(0.5, 6), k=40)
    sim = simulate_frames(bec(0.5), info.code(), MetricTable.from_channel(bec(0.5)), 300, 2)
    assert sum(r.frame_error for r in sim.results) == sim.frame_errors
    for r in sim.results:
        assert r.info_bit_errors <= sim.K
        assert (r.first_error_index is None) == (not r.frame_error)


def test_union_bound_bec():
    values = 1 - bec_erasures(0.3, 8)
    info = select_info_set(values, eps=0.01)
    bound = float(np.sum(1 - values[np.array(info.indices) - 1]))
    sim = simulate_frames(bec(0.3), info.code(), MetricTable.from_channel(bec(0.3)), 4000, 5)
    assert sim.fer <= bound + 3 * np.sqrt(max(bound, 1e-12) * (1 - min(bound, 1)) / sim.frames)


def test_fer_decreases_with_blocklength():
    fers = {}
    for n in (8, 11):
        info = select_info_set(1 - bec_erasures(0.3, n), k=rate_to_k(0.5, 1 << n))
        fers[n] = simulate_frames(bec(0.3), info.code(), MetricTable.from_channel(bec(0.3)), 2000, 9)
    sigma = fers[8].sigma
    assert fers[11].fer <= fers[8].fer + 3 * sigma


# -- genie-aided trajectories ----------------------------------------------------------------


def test_genie_level_zero_reproduces_single_use():
    s = genie_trajectories(bsc(0.1), bsc(0.2), 0, 20000, 1)
    assert s.delta.shape == (20000, 1)
    np.testing.assert_allclose(np.unique(np.abs(s.delta)), [0.6])
    # Delta agrees with the transmitted bit with probability 0.9
    agree = np.mean((s.delta[:, 0] > 0) == (s.u[:, 0] == 0))
    assert agree == pytest.approx(0.9, abs=3 * np.sqrt(0.09 / 20000))


def test_genie_bec_certain_fraction():
    trials = 20000
    s = genie_trajectories(bec(0.5), bec(0.5), 2, trials, 4)
    frac = np.mean(np.abs(s.delta[:, 3]) == 1.0)
    p = 1 - 0.0625
    assert abs(frac - p) <= 3 * np.sqrt(p * (1 - p) / trials)


def test_genie_matches_exact_evolution():
    pair = ChannelPair(bsc(0.1), bsc(0.2))
    trials = 10**5
    s = genie_trajectories(bsc(0.1), bsc(0.2), 4, trials, 21)
    means = s.log_terms().mean(axis=0)
    for i, rec in enumerate(evolve_all(pair, 4, EXACT)):
        d = synthesize(pair, rec.branch, EXACT)
        sigma = np.sqrt(d.log_term_variance() / trials)
        assert abs(means[i] - rec.I_wv) <= 3 * sigma


def test_genie_unbiased_over_repetitions():
    pair = ChannelPair(bsc(0.1), bsc(0.2))
    n, trials, reps = 5, 5000, 8
    exact = [synthesize(pair, r.branch, EXACT) for r in evolve_all(pair, n, EXACT)]
    values = np.array([d.info() for d in exact])
    sigma = np.sqrt(np.array([d.log_term_variance() for d in exact]) / trials)
    inside = 0
    for rep in range(reps):
        means = genie_trajectories(bsc(0.1), bsc(0.2), n, trials, 100 + rep).log_terms().mean(axis=0)
        inside += int(np.sum(np.abs(means - values) <= 4 * sigma + 1e-15))
    assert inside >= 0.99 * reps * (1 << n)


def test_genie_workers_independent():
    a = genie_trajectories(bsc(0.1), bsc(0.2), 3, 1000, 5, workers=1)
    b = genie_trajectories(bsc(0.1), bsc(0.2), 3, 1000, 5, workers=3)
    np.testing.assert_array_equal(a.delta, b.delta)
    np.testing.assert_array_equal(a.u, b.u)
