import csv
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conicsca.bench import channels
from conicsca.bench.cli import ConfigError, main, read_config
from conicsca.bench.experiments import (
    SUMMARY_HEADER, TRACE_HEADER, ExperimentConfig, run_experiment, run_trial,
)


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------
def test_unit_conversions():
    assert channels.db_to_lin(10.0) == pytest.approx(10.0)
    assert channels.dbm_to_watt(30.0) == pytest.approx(1.0)
    assert channels.dbm_to_watt(-30.0) == pytest.approx(1e-6)


def test_rayleigh_statistics_and_seeding():
    x = channels.gen_rayleigh(0, 200_000)
    assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0, abs=0.01)
    assert np.var(x.real) == pytest.approx(0.5, abs=0.01)
    np.testing.assert_array_equal(channels.gen_rayleigh(5, (3, 2)),
                                  channels.gen_rayleigh(5, (3, 2)))
    with pytest.raises(ValueError):
        channels.gen_rayleigh(0, (0, 2))


def test_line_geometry_distances():
    d = channels.link_distances(3)
    np.testing.assert_allclose(np.diag(d), 10.0)
    assert d[0, 2] == pytest.approx(np.hypot(2.0, 10.0))
    np.testing.assert_allclose(d, d.T)


def test_multicarrier_gain_mean():
    # E|DFT tap sum|^2 equals the total tap variance, shadowing off
    G = np.stack([channels.gen_multicarrier(s, 1, 4, shadow_std=0.0) for s in range(4000)])
    expected = channels.TAP_VARIANCES.sum() * 10.0 ** -3
    assert G.mean() == pytest.approx(expected, rel=0.03)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_shadowing_scales_share_draws(seed):
    db = channels.gen_multicarrier(seed, 2, 3, shadow_scale="db")
    nat = channels.gen_multicarrier(seed, 2, 3, shadow_scale="natural")
    assert db.shape == nat.shape == (2, 2, 3)
    assert np.all(db > 0) and np.all(nat > 0)
    # only the per-link shadowing map differs, so the log ratio is flat across carriers
    ratio = np.log(db / nat)
    np.testing.assert_allclose(ratio, ratio[:, :, :1] * np.ones(3), atol=1e-10)


def test_multicarrier_rejects_bad_scale():
    with pytest.raises(ValueError):
        channels.gen_multicarrier(0, 2, 2, shadow_scale="linear")


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------
def _read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(app="nope")
    with pytest.raises(ValueError):
        ExperimentConfig(app="mc-wsr", params={"Q": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(app="mc-wsr", trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(app="mc-wsr", params={"formulation": "ee"})
    with pytest.raises(ValueError):
        ExperimentConfig(app="secure-relay", params={"K": 0})


def test_experiment_writes_ordered_csv(tmp_path):
    cfg = ExperimentConfig(app="mc-wsr", trials=2, seed=3, out=str(tmp_path), max_iter=5,
                           timing=False, params={"K": 2, "N": 2})
    results, trace, summary = run_experiment(cfg)
    rows = _read(trace)
    assert tuple(rows[0]) == TRACE_HEADER
    keys = [(int(r[0]), int(r[1])) for r in rows[1:]]
    assert keys == sorted(keys)
    assert all(r[-1] == "" for r in rows[1:])
    # bits column is the nats column over ln 2
    for r in rows[1:]:
        assert float(r[3]) == pytest.approx(float(r[2]) / np.log(2.0))
    srows = _read(summary)
    assert tuple(srows[0]) == SUMMARY_HEADER and len(srows) == 3
    assert srows[1][1] == rows[keys.index((0, max(k[1] for k in keys if k[0] == 0))) + 1][2]


def test_parallel_matches_serial(tmp_path):
    base = dict(app="secure-relay", trials=3, seed=1, max_iter=4, timing=False)
    run_experiment(ExperimentConfig(out=str(tmp_path / "a"), **base))
    run_experiment(ExperimentConfig(out=str(tmp_path / "b"), jobs=2, **base))
    for name in ("secure-relay_trace.csv", "secure-relay_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cognitive_trial_records_phase_one_slack():
    cfg = ExperimentConfig(app="cog-multicast", seed=0, max_iter=5, timing=False)
    res = run_trial(cfg, 0)
    assert not res.failed
    slacks = [r.slack_q for r in res.records if r.slack_q is not None]
    assert slacks and slacks[-1] <= 1e-6
    assert [r.iteration for r in res.records] == list(range(len(res.records)))


def test_failed_trial_is_recorded(tmp_path):
    # with one antenna the two groups need |x1/x2|^2 > 10 and |x2/x1|^2 > 10 at once
    cfg = ExperimentConfig(app="cog-multicast", seed=0, max_iter=3, timing=False,
                           out=str(tmp_path), params={"N": 1, "users_per_group": 4})
    results, trace, summary = run_experiment(cfg)
    assert results[0].failed
    assert _read(summary)[1][-1] == "failed"


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------
def test_cli_reruns_are_byte_identical(tmp_path, capsys):
    args = ["mc-ee", "--trials", "2", "--seed", "4", "--max-iter", "6", "--no-timing",
            "--K", "2", "--N", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("mc-ee_trace.csv", "mc-ee_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "trials ok" in capsys.readouterr().out


def test_cli_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\ntrials = 2\nmax-iter = 3\nK = 2\nN = 2\ntiming = false\n")
    out = tmp_path / "o"
    assert main(["mc-wsr", "--config", str(cfg), "--trials", "1", "--out", str(out)]) == 0
    rows = _read(out / "mc-wsr_summary.csv")
    assert len(rows) == 2                  # the flag beat the file
    assert int(rows[1][3]) <= 3


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("trials = 2\nwidth = 3\n")
    assert main(["mc-wsr", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:2" in err and "width" in err
    cfg.write_text("trials = many\n")
    assert main(["mc-wsr", "--config", str(cfg)]) == 2
    assert main(["mc-wsr", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["mc-wsr", "--trials", "0", "--out", str(tmp_path)]) == 2


def test_read_config_parses_types(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 7  # comment\n\nshadow-scale = natural\n")
    assert read_config(str(p), {"seed": int, "shadow_scale": str}) == \
        {"seed": 7, "shadow_scale": "natural"}
    p.write_text("seed\n")
    with pytest.raises(ConfigError):
        read_config(str(p), {"seed": int})


def test_cli_surrogate_check(tmp_path, capsys):
    assert main(["check-surrogates", "--trials", "3", "--samples", "20", "--kinds", "app1,app6",
                 "--out", str(tmp_path)]) == 0
    rows = _read(tmp_path / "surrogate_check.csv")
    assert len(rows) == 7 and all(r[-1] == "1" for r in rows[1:])
    assert main(["check-surrogates", "--kinds", "app9", "--out", str(tmp_path)]) == 2


def test_cli_failed_trial_exit_code(tmp_path):
    assert main(["cog-multicast", "--N", "1", "--max-iter", "3", "--no-timing",
                 "--out", str(tmp_path)]) == 1
    assert os.path.exists(tmp_path / "cog-multicast_trace.csv")


def test_cli_formulations_agree_on_the_same_seed(tmp_path):
    finals = {}
    for fm in ("wsr-qp", "wsr-socp"):
        out = tmp_path / fm
        assert main(["mc-wsr", "--K", "3", "--N", "8", "--formulation", fm, "--seed", "0",
                     "--no-timing", "--out", str(out)]) == 0
        finals[fm] = float(_read(out / "mc-wsr_summary.csv")[1][1])
    assert finals["wsr-qp"] == pytest.approx(finals["wsr-socp"], rel=0.02), finals


def test_secure_relay_restarts_keep_the_instance_and_never_lose(tmp_path):
    base = dict(app="secure-relay", seed=3, max_iter=30, timing=False)
    one = run_trial(ExperimentConfig(**base, params={"K": 4}), 0)
    again = run_trial(ExperimentConfig(**base, params={"K": 4, "restarts": 1}), 0)
    many = run_trial(ExperimentConfig(**base, params={"K": 4, "restarts": 3}), 0)
    assert [r.row() for r in one.records] == [r.row() for r in again.records]
    assert many.records[-1].objective >= one.records[-1].objective
    with pytest.raises(ValueError):
        ExperimentConfig(app="secure-relay", params={"restarts": 0})
    assert main(["secure-relay", "--restarts", "2", "--max-iter", "3", "--no-timing",
                 "--out", str(tmp_path)]) == 0
