import dataclasses
import json

import numpy as np
import pytest

from fjcontrol import (
    ConfigError,
    CostParams,
    eligible,
    load_config,
    mitigation_cost,
    run_scenario,
    run_sweep,
    validate_scenario,
)
from fjcontrol.cli import main
from fjcontrol.harness import (
    CorpusSpec,
    NetworkSpec,
    ScenarioConfig,
    materialize_corpus,
    materialize_network,
    parse_config,
    rho_grid,
    _with_rho,
)
from fjcontrol.network import RADICAL_USER


def _cfg_doc(**overrides):
    doc = {
        "schema_version": 1,
        "network": {"type": "a", "n": 100},
        "controller": "mf",
        "mode": "discrete",
        "cost": {"rho": 2.5, "delta_novelty": 0.0, "window_z": 5},
        "tau": 100,
        "corpus": {"size": 4000},
        "seed": 19,
        "output_dir": "out",
    }
    doc.update(overrides)
    return doc


def _small_cfg(**overrides):
    doc = _cfg_doc(
        network={"type": "a", "n": 30},
        tau=30,
        corpus={"size": 600},
    )
    doc.update(overrides)
    return parse_config(doc)


# --- config parsing ----------------------------------------------------------


def test_parse_round_trip():
    cfg = parse_config(_cfg_doc())
    assert cfg.controller == "mf"
    assert cfg.cost.rho == 2.5
    assert cfg.corpus.size == 4000
    assert cfg.seed == 19


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config(_cfg_doc(extra_knob=1))


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config(_cfg_doc(cost={"rho": 1.0, "rho_typo": 2.0}))


def test_schema_version_required():
    doc = _cfg_doc()
    del doc["schema_version"]
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config(doc)


def test_discrete_requires_corpus():
    doc = _cfg_doc()
    del doc["corpus"]
    with pytest.raises(ConfigError, match="corpus"):
        parse_config(doc)


def test_baseline_forces_rho_zero():
    cfg = parse_config(_cfg_doc(controller="baseline"))
    assert cfg.cost.rho == 2.5          # stored as written
    assert cfg.effective_rho == 0.0     # applied as engagement-only
    assert cfg.effective_cost.rho == 0.0


def test_load_config_reports_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_cfg_doc(mode="nonsense")))
    with pytest.raises(ConfigError, match="mode"):
        load_config(path)


def test_rho_grid_counts():
    assert len(rho_grid(0.0, 5.5, 0.1)) == 56
    assert rho_grid(1.0, 1.0, 0.1) == [1.0]
    assert rho_grid(0.0, 1.0, 0.5) == [0.0, 0.5, 1.0]


# --- closed-loop runs ----------------------------------------------------------


def test_radical_user_constant_for_every_controller():
    for controller in ("baseline", "mf", "mb"):
        cfg = ScenarioConfig(
            network=NetworkSpec(kind="b"), controller=controller, mode="discrete",
            cost=CostParams(rho=1.0), tau=20,
            corpus=CorpusSpec(kind="synthetic", size=400), seed=3, output_dir="out",
        )
        result = run_scenario(cfg)
        assert np.all(result.trajectory.states[:, RADICAL_USER] == 1.0)


def test_continuous_baseline_drifts_above_mitigated_run():
    base = _small_cfg(controller="baseline", mode="continuous")
    mitigated = _small_cfg(controller="mf", mode="continuous")
    net = materialize_network(base)
    r_base = run_scenario(base, net=net)
    r_mit = run_scenario(mitigated, net=net)
    assert (
        r_base.trajectory.states[-1].mean() > r_mit.trajectory.states[-1].mean()
    )


def test_mf_and_mb_settle_close_together():
    mf = _small_cfg(controller="mf", mode="continuous", tau=100)
    mb = _small_cfg(controller="mb", mode="continuous", tau=100)
    net = materialize_network(mf)
    r_mf = run_scenario(mf, net=net)
    r_mb = run_scenario(mb, net=net)
    gap = np.max(np.abs(r_mf.trajectory.states[-1] - r_mb.trajectory.states[-1]))
    assert gap <= 0.05


def test_discrete_run_selection_is_stepwise_optimal():
    cfg = ScenarioConfig(
        network=NetworkSpec(kind="b"), controller="mf", mode="discrete",
        cost=CostParams(rho=1.0), tau=50,
        corpus=CorpusSpec(kind="synthetic", size=4000), seed=7, output_dir="out",
    )
    net = materialize_network(cfg)
    corpus = materialize_corpus(cfg)
    result = run_scenario(cfg, net=net, corpus=corpus)
    traj = result.trajectory
    params = cfg.effective_cost
    for t in range(traj.tau):
        candidates = eligible(corpus, t, params.window_z)
        cid = traj.content_ids[t]
        if cid is None:
            assert not candidates
            continue
        chosen_cost = mitigation_cost(
            traj.states[t], corpus.item_by_id(cid).score, t,
            corpus.item_by_id(cid).t_c, params,
        )
        for cand in candidates:
            other = mitigation_cost(traj.states[t], cand.score, t, cand.t_c, params)
            assert chosen_cost <= other + 1e-12


def test_discrete_control_is_selected_item_score():
    cfg = _small_cfg()
    net = materialize_network(cfg)
    corpus = materialize_corpus(cfg)
    result = run_scenario(cfg, net=net, corpus=corpus)
    traj = result.trajectory
    for t, cid in enumerate(traj.content_ids):
        if cid is not None:
            assert traj.controls[t] == corpus.item_by_id(cid).score


def test_empty_content_policies():
    # Schedule everything late so early steps have no eligible items.
    base = ScenarioConfig(
        network=NetworkSpec(kind="a", params={"n": 10}), controller="mf",
        mode="discrete", cost=CostParams(rho=0.5), tau=10,
        corpus=CorpusSpec(kind="file", path="unused"), seed=1, output_dir="out",
    )
    from fjcontrol.content import ContentItem, Corpus

    late = Corpus(items=(
        ContentItem(id="only", label="true", dims=None, score=0.4, t_c=5),
    ))
    net = materialize_network(base)
    r_hold = run_scenario(base, net=net, corpus=late)
    assert r_hold.trajectory.content_ids[:5] == (None,) * 5
    assert np.all(r_hold.trajectory.controls[:5] == 0.0)  # u(-1) = 0 held
    assert r_hold.trajectory.content_ids[5] == "only"
    # after the item expires (age > z), hold keeps its score
    assert np.all(r_hold.trajectory.controls[5:] == 0.4)

    zero = dataclasses.replace(base, empty_content_policy="zero")
    r_zero = run_scenario(zero, net=net, corpus=late)
    assert np.all(r_zero.trajectory.controls[:5] == 0.0)
    expired = r_zero.trajectory.controls[5 + base.cost.window_z + 1:]
    assert np.all(expired == 0.0)


def test_metrics_only_in_discrete_mode():
    cont = _small_cfg(mode="continuous")
    doc_cont = run_scenario(cont)
    assert doc_cont.metrics.misinformation is None
    disc = _small_cfg()
    assert run_scenario(disc).metrics.misinformation is not None


def test_run_wraps_errors_with_time_step():
    from fjcontrol.harness import ScenarioRunError

    cfg = _small_cfg(mpc={"horizon": 5, "max_iterations": 1, "kkt_tolerance": 1e-16},
                     controller="mb")
    with pytest.raises(ScenarioRunError, match="t=0"):
        run_scenario(cfg)


# --- sweeps --------------------------------------------------------------------


def test_sweep_orders_entries_and_freezes_inputs():
    cfg = _small_cfg()
    report = run_sweep(cfg, 0.0, 1.0, 0.5)
    assert [e.rho for e in report.entries] == [0.0, 0.5, 1.0]
    assert all(e.error is None for e in report.entries)
    assert report.pareto is not None
    # identical reruns
    report2 = run_sweep(cfg, 0.0, 1.0, 0.5)
    for a, b in zip(report.entries, report2.entries):
        assert a.metrics == b.metrics


def test_sweep_parallel_equals_serial():
    cfg = _small_cfg()
    serial = run_sweep(cfg, 0.0, 1.0, 0.5, jobs=1)
    parallel = run_sweep(cfg, 0.0, 1.0, 0.5, jobs=4)
    for a, b in zip(serial.entries, parallel.entries):
        assert a.metrics == b.metrics


def test_sweep_records_failures_without_aborting():
    cfg = _small_cfg(controller="mb",
                     mpc={"horizon": 5, "max_iterations": 1, "kkt_tolerance": 1e-16})
    report = run_sweep(cfg, 0.0, 0.5, 0.5)
    assert all(e.error is not None for e in report.entries)
    assert all(e.metrics is None for e in report.entries)


def test_sweep_misinformation_decreases_with_penalty():
    from fjcontrol.harness import DEFAULT_SEEDS

    wins = 0
    for seed in DEFAULT_SEEDS:
        cfg = parse_config(_cfg_doc(seed=seed))
        net = materialize_network(cfg)
        corpus = materialize_corpus(cfg)
        m0 = run_scenario(_with_rho(cfg, 0.0), net=net, corpus=corpus).metrics
        m25 = run_scenario(_with_rho(cfg, 2.5), net=net, corpus=corpus).metrics
        wins += m25.misinformation < m0.misinformation
    assert wins >= 9


# --- validation ----------------------------------------------------------------


def test_validate_scenario_clean_config():
    report = validate_scenario(_small_cfg())
    assert report["ok"]
    assert report["violations"] == []
    assert report["corpus"]["false_count"] == 300


def test_validate_scenario_flags_rho_zero_certificate():
    report = validate_scenario(_small_cfg(cost={"rho": 0.0}))
    assert any("positive semidefinite only" in w for w in report["warnings"])


def test_validate_scenario_flags_inverted_corpus():
    cfg = _small_cfg(corpus={"size": 600, "false_mean": 0.3, "true_mean": 0.6})
    report = validate_scenario(cfg)
    assert any("separation" in w for w in report["warnings"])


# --- CLI and file outputs --------------------------------------------------------


def _write_config(tmp_path, **overrides):
    doc = _cfg_doc(
        network={"type": "a", "n": 30},
        tau=30,
        corpus={"size": 600},
        output_dir=str(tmp_path / "out"),
    )
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_cli_simulate_writes_outputs(tmp_path):
    cfg_path = _write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg_path)]) == 0
    run_dir = tmp_path / "out" / "mf-discrete-rho2.5-seed19"
    for name in ("trajectory.csv", "metrics.json", "validation.json", "trajectory.png"):
        assert (run_dir / name).exists()
    doc = json.loads((run_dir / "metrics.json").read_text())
    assert doc["provenance"]["controller"] == "mf"
    assert 0.0 <= doc["misinformation"] <= 1.0


def test_cli_simulate_is_byte_deterministic(tmp_path):
    cfg_path = _write_config(tmp_path)
    main(["simulate", "--config", str(cfg_path), "--no-figures"])
    run_dir = tmp_path / "out" / "mf-discrete-rho2.5-seed19"
    first = {
        name: (run_dir / name).read_bytes()
        for name in ("trajectory.csv", "metrics.json")
    }
    main(["simulate", "--config", str(cfg_path), "--no-figures"])
    for name, blob in first.items():
        assert (run_dir / name).read_bytes() == blob


def test_cli_rho_and_seed_overrides(tmp_path):
    cfg_path = _write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg_path), "--rho", "0.5",
                 "--seed", "4", "--no-figures"]) == 0
    assert (tmp_path / "out" / "mf-discrete-rho0.5-seed4").is_dir()


def test_cli_sweep_outputs_and_jobs_determinism(tmp_path):
    cfg_path = _write_config(tmp_path)
    assert main(["sweep", "--config", str(cfg_path), "--rho-min", "0",
                 "--rho-max", "1", "--rho-step", "0.5", "--no-figures"]) == 0
    sweep_dir = tmp_path / "out" / "sweep-mf-discrete-seed19"
    blob = (sweep_dir / "sweep.csv").read_bytes()
    assert (sweep_dir / "pareto.csv").exists()
    assert (sweep_dir / "mf-discrete-rho0.5-seed19" / "trajectory.csv").exists()
    assert main(["sweep", "--config", str(cfg_path), "--rho-min", "0",
                 "--rho-max", "1", "--rho-step", "0.5", "--jobs", "4",
                 "--no-figures"]) == 0
    assert (sweep_dir / "sweep.csv").read_bytes() == blob
    header = blob.decode().splitlines()[0]
    assert header.startswith("rho,misinformation,engagement_cost_mean")


def test_cli_gen_network_and_file_config(tmp_path):
    net_path = tmp_path / "net.json"
    assert main(["gen-network", "--type", "a", "--n", "20", "--seed", "5",
                 "--out", str(net_path)]) == 0
    doc = json.loads(net_path.read_text())
    assert doc["metadata"]["seed"] == 5
    cfg_path = _write_config(tmp_path, network={"path": str(net_path)})
    assert main(["simulate", "--config", str(cfg_path), "--no-figures"]) == 0


def test_cli_gen_corpus_and_file_config(tmp_path):
    corpus_path = tmp_path / "corpus.csv"
    assert main(["gen-corpus", "--out", str(corpus_path), "--size", "400",
                 "--seed", "2"]) == 0
    cfg_path = _write_config(tmp_path, corpus={"path": str(corpus_path)})
    assert main(["simulate", "--config", str(cfg_path), "--no-figures"]) == 0


def test_cli_validate_exit_codes(tmp_path):
    cfg_path = _write_config(tmp_path)
    assert main(["validate", "--config", str(cfg_path)]) == 0
    bad = _write_config(tmp_path, cost={"rho": 1.0, "bogus": 2})
    assert main(["validate", "--config", str(bad)]) == 1


def test_cli_runtime_error_exit_code(tmp_path):
    cfg_path = _write_config(
        tmp_path, controller="mb",
        mpc={"horizon": 5, "max_iterations": 1, "kkt_tolerance": 1e-16},
    )
    assert main(["simulate", "--config", str(cfg_path), "--no-figures"]) == 2
