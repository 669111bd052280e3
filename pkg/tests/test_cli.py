import json

import numpy as np
import pytest

from polarmm.channels import bsc, load_channel
from polarmm.cli import EXIT_CAPACITY, EXIT_DATA, EXIT_USAGE, load_code, main
from polarmm.construct import InformationSet


def body(text):
    """CSV text without the config comment line."""
    lines = text.splitlines()
    assert lines[0].startswith("# {")
    return "\n".join(lines[1:])


@pytest.fixture
def channels(tmp_path):
    w, v = tmp_path / "w.json", tmp_path / "v.json"
    assert main(["channel", "make", "--bsc", "0.1", "-o", str(w)]) == 0
    assert main(["channel", "make", "--bsc", "0.2", "-o", str(v)]) == 0
    return str(w), str(v)


# -- channel ---------------------------------------------------------------------------


def test_channel_make_round_trip(channels):
    assert load_channel(channels[0]).same_as(bsc(0.1))


def test_channel_inspect(channels, capsys):
    assert main(["channel", "inspect", channels[0]]) == 0
    out = capsys.readouterr().out
    assert "symmetric: True" in out and "capacity_bits: 0.53100440641071889" in out
    assert main(["channel", "inspect", channels[0], "--v", channels[1]]) == 0
    fields = dict(line.split(": ", 1) for line in capsys.readouterr().out.splitlines())
    assert float(fields["I_WV"]) == pytest.approx(0.47807190511263775, abs=1e-12)


def test_channel_make_needs_one_kind():
    assert main(["channel", "make", "--bsc", "0.1", "--bec", "0.2"]) == EXIT_USAGE


# -- polarize ---------------------------------------------------------------------------


def test_polarize_csv(channels, tmp_path):
    out = tmp_path / "p.csv"
    assert main(["polarize", "--w", channels[0], "--v", channels[1], "-n", "3", "--exact", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    config = json.loads(lines[0][2:])
    assert config["n"] == 3 and "threads" not in config
    assert lines[1] == "index,branch,I_wv,I_w,mu,atoms"
    assert len(lines) == 2 + 8
    values = [float(line.split(",")[2]) for line in lines[2:]]
    assert np.mean(values) == pytest.approx(0.47807190511263775, abs=1e-12)


def test_polarize_capacity_exit(channels):
    assert main(["polarize", "--w", channels[0], "-n", "8", "--exact", "--merge-limit", "100"]) == EXIT_CAPACITY


# -- construct / simulate ------------------------------------------------------------------


def test_construct_and_simulate(channels, tmp_path):
    info_path, code_path = tmp_path / "info.json", tmp_path / "code.json"
    args = ["construct", "mc", "--w", channels[0], "--v", channels[1], "-n", "8", "--trials", "2000"]
    assert main(args + ["--rate", "0.3", "--seed", "7", "-o", str(info_path), "--code-out", str(code_path)]) == 0
    info = InformationSet.load(info_path)
    assert info.size == 77
    assert info.extra["config"]["trials"] == 2000
    np.testing.assert_array_equal(load_code(str(info_path)).frozen_mask, load_code(str(code_path)).frozen_mask)

    outs = []
    for path in (info_path, code_path):
        out = tmp_path / f"sim-{path.stem}.csv"
        sim = ["simulate", "--code", str(path), "--w", channels[0], "--v", channels[1]]
        assert main(sim + ["--frames", "300", "--seed", "3", "-o", str(out)]) == 0
        outs.append(body(out.read_text()))
    assert outs[0] == outs[1]
    assert outs[0].splitlines()[0] == "seed,frames,fer,ber,ci95"


def test_construct_exact_shorthand(tmp_path, capsys):
    assert main(["construct", "exact", "--w", "bec:0.3", "-n", "6", "--eps", "0.01", "--exact"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["source"]["kind"] == "exact"
    assert data["n"] == 6 and len(data["per_index"]) == 64


def test_construct_rate_xor_eps(channels):
    assert main(["construct", "mc", "--w", channels[0], "-n", "3"]) == EXIT_USAGE
    assert main(["construct", "mc", "--w", channels[0], "-n", "3", "--rate", "0.5", "--eps", "0.1"]) == EXIT_USAGE


def test_missing_file_is_data_error(tmp_path):
    assert main(["construct", "mc", "--w", str(tmp_path / "nope.json"), "-n", "3", "--rate", "0.5"]) == EXIT_DATA


def test_bad_code_file(tmp_path, channels):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["simulate", "--code", str(bad), "--w", channels[0]]) == EXIT_DATA


@pytest.mark.parametrize(
    "argv",
    [["frobnicate"], ["polarize", "--w", "bsc:0.1"], ["--threads", "0", "check", "dual"], ["polarize", "-n", "2"]],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert "polarmm: error[usage]:" in capsys.readouterr().err


# -- reproducibility --------------------------------------------------------------------------


def test_simulate_identical_across_threads(channels, tmp_path):
    info_path = tmp_path / "info.json"
    main(["construct", "mc", "--w", channels[0], "--v", channels[1], "-n", "7", "--trials", "500", "--rate", "0.3", "-o", str(info_path)])
    bodies = []
    for threads in ("1", "3"):
        out = tmp_path / f"s{threads}.csv"
        sim = ["--threads", threads, "simulate", "--code", str(info_path), "--w", channels[0], "--v", channels[1]]
        assert main(sim + ["--frames", "500", "--seed", "11", "-o", str(out)]) == 0
        bodies.append(out.read_text())
    assert bodies[0] == bodies[1]


def test_compound_csv(tmp_path):
    outs = []
    for threads in ("1", "2"):
        out = tmp_path / f"c{threads}.csv"
        argv = ["--threads", threads, "compound", "--family", "bsc:0.05:0.11:0.01", "--rate", "0.3", "-n", "5"]
        assert main(argv + ["--trials", "300", "--frames", "100", "-o", str(out)]) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    assert len(outs[0].splitlines()) == 9


# -- check -----------------------------------------------------------------------------------


def test_check_writes_json(tmp_path, capsys):
    out = tmp_path / "check.json"
    code = main(["check", "lemma2", "--quick", "-o", str(out)])
    data = json.loads(out.read_text())
    assert [c["name"] for c in data["checks"]] == ["lemma2"]
    assert code == 0 and data["checks"][0]["passed"]
    assert "lemma2" in capsys.readouterr().out
