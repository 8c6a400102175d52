import csv
import dataclasses
import math

import numpy as np
import pytest

from discrete_precoding import cli, harness
from discrete_precoding.harness import ExperimentConfig, ExperimentResult, load_config
from discrete_precoding.network_model import ScenarioParams, load_realization
from discrete_precoding.rate_model import QosDomain

FAST = ExperimentConfig(algorithms=("maxsinr", "tdma"), tx_powers_dbm=(10.0, 30.0),
                        n_realizations=3, master_seed=5)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_cardinality_and_pairing():
    res = harness.run_experiment(FAST)
    assert len(res.records) == 12
    keys = {(r.realization_idx, r.algorithm, r.tx_power_dbm) for r in res.records}
    assert len(keys) == 12
    assert all(r.error == "" for r in res.records)
    assert all(r.weighted_discrete_rate >= 0 for r in res.records)
    assert all(0 <= f <= 1 + 1e-9 for r in res.records for f in r.power_fraction)


def test_realizations_use_own_streams():
    a = harness.realization_rng(1, 4).random(3)
    b = harness.realization_rng(1, 4).random(3)
    c = harness.realization_rng(1, 5).random(3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_same_seed_same_bytes(tmp_path):
    for name in ("a", "b"):
        harness.write_outputs(harness.run_experiment(FAST), tmp_path / name)
    for f in ("summary.csv", "trace.csv", "plotdata.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_empty_records_header_only(tmp_path):
    paths = harness.write_outputs(ExperimentResult(), tmp_path)
    assert paths["summary"].read_text().strip() == ",".join(harness.SUMMARY_FIELDS)
    assert paths["plotdata"].read_text().strip() == ",".join(harness.PLOT_FIELDS)


def test_plotdata_mean_recomputed(tmp_path):
    cfg = dataclasses.replace(FAST, n_realizations=5)
    paths = harness.write_outputs(harness.run_experiment(cfg), tmp_path)
    summary = _rows(paths["summary"])
    for row in _rows(paths["plotdata"]):
        vals = [float(r["weighted_discrete_rate"]) for r in summary
                if r["algorithm"] == row["algorithm"] and r["tx_power_dbm"] == row["tx_power_dbm"]]
        assert int(row["n"]) == len(vals) == 5
        assert float(row["mean_discrete_rate"]) == pytest.approx(np.mean(vals), rel=1e-15)
        sem = np.std(vals, ddof=1) / math.sqrt(5)
        assert float(row["sem_discrete_rate"]) == pytest.approx(sem, rel=1e-12)


def test_full_precision_floats(tmp_path):
    paths = harness.write_outputs(harness.run_experiment(FAST), tmp_path)
    row = _rows(paths["summary"])[0]
    assert float(row["weighted_continuous_rate"]) == harness.run_experiment(FAST).records[0].weighted_continuous_rate


def test_failed_cell_is_recorded(monkeypatch):
    def boom(*a, **k):
        raise FloatingPointError("synthetic")

    monkeypatch.setattr(harness.bl, "tdma_run", boom)
    res = harness.run_experiment(dataclasses.replace(FAST, n_realizations=1))
    bad = [r for r in res.records if r.algorithm == "tdma"]
    good = [r for r in res.records if r.algorithm == "maxsinr"]
    assert len(bad) == 2 and all("synthetic" in r.error for r in bad)
    assert all(math.isnan(r.weighted_discrete_rate) for r in bad)
    assert all(r.error == "" for r in good)
    rows = harness.plot_rows(res.records)
    assert {r[0] for r in rows} == {"maxsinr"}


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(SystemExit):
        harness.write_outputs(ExperimentResult(), blocker / "sub")


def test_qmax_sweep_uses_grid_sets():
    cfg = ExperimentConfig(algorithms=("tdma",), tx_powers_dbm=(21.0,), q_max_values=tuple(range(1, 9)),
                           n_realizations=2)
    sets = cfg.rate_sets()
    assert [q for q, _ in sets] == list(range(1, 9))
    assert all(rs.values.tolist() == list(range(q + 1)) for q, rs in sets)
    res = harness.run_experiment(cfg)
    assert len(res.records) == 16
    by_q = {}
    for r in res.records:
        by_q.setdefault(r.q_max, []).append(r.weighted_discrete_rate)
    means = [np.mean(by_q[q]) for q in range(1, 9)]
    assert np.all(np.diff(means) >= 0)    # more rates never hurt TDMA


@pytest.mark.parametrize("bad", [dict(tx_powers_dbm=()), dict(n_realizations=0),
                                 dict(q_max_values=()), dict(algorithms=("magic",)),
                                 dict(qos_domains=())])
def test_config_invariants(bad):
    with pytest.raises(ValueError):
        ExperimentConfig(**bad)


INI = """
[scenario]
n_bs = 2
users_per_bs = 1
streams = 1
user_weights = 1, 2

[rates]
set = 0, 1, 2
margin = 3
margin_db = true

[algorithm.proposed]
domains = rate, sinr
rel_tolerance = 1e-4

[algorithm.baselines]
enabled = tdma
wmmse_max_iterations = 7

[experiment]
n_realizations = 4
master_seed = 9
tx_power_dbm = 0:9:3
q_max = 1, 2

[output]
dir = out_here
"""


def test_load_config():
    cfg = load_config(INI)
    assert cfg.scenario == ScenarioParams(n_bs=2, users_per_bs=1, streams=1, user_weights=(1.0, 2.0))
    assert cfg.tx_powers_dbm == (0.0, 3.0, 6.0, 9.0)
    assert cfg.q_max_values == (1, 2)
    assert cfg.algorithms == ("proposed", "tdma")
    assert cfg.qos_domains == (QosDomain.CONTINUOUS_RATE, QosDomain.SINR)
    assert cfg.bcd.rel_tolerance == 1e-4
    assert cfg.baselines.wmmse_max_iterations == 7
    assert cfg.out_dir == "out_here"
    _, rs = cfg.rate_sets()[0]
    assert rs.margin == pytest.approx(10 ** 0.3)


def test_overrides():
    cfg = load_config(INI, ["experiment.n_realizations=2", "algorithm.proposed.enabled=false",
                            "scenario.shadowing=yes"])
    assert cfg.n_realizations == 2
    assert cfg.algorithms == ("tdma",)
    assert cfg.scenario.shadowing
    with pytest.raises(ValueError):
        load_config(INI, ["no_dot=1"])


# -- CLI --------------------------------------------------------------------------------

def _write_cfg(tmp_path, text=INI):
    p = tmp_path / "cfg.ini"
    p.write_text(text)
    return p


def test_cli_single_run(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    dump = tmp_path / "drop.bin"
    code = cli.main(["single-run", "--config", str(cfg), "--out", str(tmp_path / "o"),
                     "--seed", "3", "--power", "20", "--dump-realization", str(dump)])
    assert code == 0
    out = capsys.readouterr().out
    assert "proposed" in out and "tdma" in out
    rows = _rows(tmp_path / "o" / "summary.csv")
    assert {r["realization_idx"] for r in rows} == {"0"}
    assert {r["q_max"] for r in rows} == {""}
    assert load_realization(dump).H.shape == (2, 1, 2, 2, 4)
    assert len(_rows(tmp_path / "o" / "trace.csv")) > 0


def test_cli_sweep_qmax_defaults(tmp_path):
    text = INI.replace("q_max = 1, 2\n", "").replace("domains = rate, sinr", "enabled = false")
    cfg = _write_cfg(tmp_path, text)
    assert cli.main(["sweep-qmax", "--config", str(cfg), "--out", str(tmp_path / "q"),
                     "--realizations", "1"]) == 0
    rows = _rows(tmp_path / "q" / "summary.csv")
    assert sorted({int(r["q_max"]) for r in rows}) == list(range(1, 9))
    assert {r["tx_power_dbm"] for r in rows} == {"21"}


def test_cli_convergence_records_traces(tmp_path):
    cfg = _write_cfg(tmp_path, INI.replace("enabled = tdma", "enabled = wmmse"))
    assert cli.main(["convergence", "--config", str(cfg), "--out", str(tmp_path / "c"),
                     "--realizations", "1"]) == 0
    trace = _rows(tmp_path / "c" / "trace.csv")
    assert {r["algorithm"] for r in trace} == {"proposed", "wmmse"}
    assert {r["tx_power_dbm"] for r in trace} == {"0"}


def test_cli_bad_config(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, INI.replace("n_realizations = 4", "n_realizations = 0"))
    assert cli.main(["sweep-power", "--config", str(cfg)]) != 0
    assert "bad config" in capsys.readouterr().err


def test_cli_missing_subcommand():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code != 0
