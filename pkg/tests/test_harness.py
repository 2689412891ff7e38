"""Config validation, seeding, the run engine, CSV output, and the CLI."""

import csv
import json

import numpy as np
import pytest

from payband.cli import main
from payband.environment import FixedSequenceSpec
from payband.harness import (
    SEED_ENV_VAR,
    TRACE_COLUMNS,
    child_seed_sequence,
    load_config_file,
    preset_config_path,
    run_experiment,
    run_single,
    spawn_streams,
    validate_config_data,
)
from payband.model import InstanceSpec
from payband.policies import PolicyConfig


def base_config():
    return {
        "instance": {
            "n_arms": 2,
            "dim": 2,
            "horizon": 12,
            "master_seed": 3,
            "noise_std": 0.1,
            "init_explore_m": 4,
            "context_source": {"kind": "gaussian_iid", "mean": [0.2, 0.1], "std": 0.5},
            "true_attrs": [[0.5, 0.0], [0.0, 0.5]],
        },
        "policies": [{"kind": "no_payments"}],
        "n_runs": 2,
    }


def errors_of(diags):
    return [d for d in diags if d.severity == "error"]


def fields_of(diags):
    return {d.fieldname for d in diags}


def test_valid_config_has_no_diagnostics():
    assert validate_config_data(base_config()) == []


def test_bundled_presets_validate_cleanly():
    for name in ("fig1", "fig2_like"):
        path = preset_config_path(name.replace("_", "-") if name == "fig2_like" else name)
        data = json.loads(path.read_text())
        diags = validate_config_data(data, base_dir=path.parent)
        assert errors_of(diags) == [], (name, diags)


def test_attr_norm_violation_is_reported():
    cfg = base_config()
    cfg["instance"]["true_attrs"][0] = [1.2, 0.9]
    diags = validate_config_data(cfg)
    assert any("true_attrs[0]" in d.fieldname and "norm" in d.constraint for d in diags)


def test_m_exceeding_horizon_is_reported():
    cfg = base_config()
    cfg["instance"]["init_explore_m"] = 99
    assert any("init_explore_m" in f for f in fields_of(errors_of(validate_config_data(cfg))))


def test_short_initial_exploration_is_a_warning_not_an_error():
    cfg = base_config()
    cfg["instance"]["init_explore_m"] = 1  # below n_arms * dim = 4
    diags = validate_config_data(cfg)
    assert errors_of(diags) == []
    assert any(d.severity == "warning" for d in diags)


def test_budget_on_wrong_policy_kind_is_reported():
    cfg = base_config()
    cfg["policies"] = [{"kind": "no_payments", "budget": 1.0}]
    assert any("policies[0]" in f for f in fields_of(errors_of(validate_config_data(cfg))))


def test_unknown_policy_field_is_reported():
    cfg = base_config()
    cfg["policies"] = [{"kind": "no_payments", "siverity": 2}]
    diags = errors_of(validate_config_data(cfg))
    assert diags and "siverity" in diags[0].actual


def test_unknown_context_kind_is_reported():
    cfg = base_config()
    cfg["instance"]["context_source"] = {"kind": "oracle"}
    assert any("context_source.kind" in f for f in fields_of(validate_config_data(cfg)))


def test_fixed_sequence_must_cover_horizon_unless_cycling():
    cfg = base_config()
    cfg["instance"]["context_source"] = {
        "kind": "fixed_sequence",
        "contexts": [[1.0, 0.0], [0.0, 1.0]],
    }
    diags = errors_of(validate_config_data(cfg))
    assert any("contexts" in f for f in fields_of(diags))
    cfg["instance"]["context_source"]["cycle"] = True
    assert validate_config_data(cfg) == []


def test_missing_dataset_file_is_reported(tmp_path):
    cfg = base_config()
    cfg["instance"]["context_source"] = {"kind": "dataset_replay", "path": "nope.csv"}
    diags = errors_of(validate_config_data(cfg, base_dir=tmp_path))
    assert any("path" in f for f in fields_of(diags))


def test_dataset_dimension_mismatch_is_reported(tmp_path):
    data = tmp_path / "toy.csv"
    data.write_text("0.1,0.2,0.3,0\n0.2,0.1,0.0,1\n")  # 3 features
    cfg = base_config()  # dim = 2
    cfg["instance"]["horizon"] = 2
    cfg["instance"]["init_explore_m"] = 2
    cfg["instance"]["context_source"] = {"kind": "dataset_replay", "path": "toy.csv"}
    del cfg["instance"]["true_attrs"]
    diags = errors_of(validate_config_data(cfg, base_dir=tmp_path))
    assert any("dimension" in d.constraint for d in diags)


def test_diagnostics_render_field_constraint_and_actual():
    cfg = base_config()
    cfg["n_runs"] = 0
    (diag,) = errors_of(validate_config_data(cfg))
    text = str(diag)
    assert "n_runs" in text and "1" in text and "0" in text


# -- seeding -----------------------------------------------------------------

def test_child_seeds_are_unique_across_the_grid():
    keys = {
        child_seed_sequence(9, pi, ri).spawn_key
        for pi in range(10)
        for ri in range(10)
    }
    assert len(keys) == 100


def test_child_seed_depends_on_master():
    a = spawn_streams(child_seed_sequence(1, 0, 0))[0].standard_normal(4)
    b = spawn_streams(child_seed_sequence(2, 0, 0))[0].standard_normal(4)
    assert not np.array_equal(a, b)


def test_spawn_streams_idempotent_and_distinct():
    seed = child_seed_sequence(5, 1, 2)
    first = [g.standard_normal(6) for g in spawn_streams(seed)]
    second = [g.standard_normal(6) for g in spawn_streams(seed)]
    for a, b in zip(first, second):
        assert np.array_equal(a, b)
    assert not np.array_equal(first[0], first[1])
    assert not np.array_equal(first[1], first[2])
    # plain integers are accepted too
    spawn_streams(123)


def small_instance(horizon=20):
    attrs = np.array([[0.6, 0.0], [0.0, 0.6]])
    spec = FixedSequenceSpec(
        contexts=(np.array([0.8, 0.6]), np.array([0.6, -0.8])), cycle=True
    )
    return InstanceSpec(2, 2, horizon, attrs, 0.1, spec, 4, 3)


def test_run_single_is_deterministic_per_seed():
    inst = small_instance()
    cfg = PolicyConfig(kind="perturbation_payments", sigma_pay=0.5)
    a = run_single(inst, cfg, child_seed_sequence(3, 0, 0))
    b = run_single(inst, cfg, child_seed_sequence(3, 0, 0))
    c = run_single(inst, cfg, child_seed_sequence(3, 0, 1))
    for ra, rb in zip(a.records, b.records):
        assert ra.chosen_arm == rb.chosen_arm
        assert ra.observed_reward == rb.observed_reward
        assert np.array_equal(ra.payments, rb.payments)
    assert any(
        ra.observed_reward != rc.observed_reward for ra, rc in zip(a.records, c.records)
    )


def test_run_single_respects_policy_level_exploration_override():
    inst = small_instance()
    cfg = PolicyConfig(kind="no_payments", init_explore_m=8)
    tr = run_single(inst, cfg, child_seed_sequence(3, 0, 0))
    assert [r.chosen_arm for r in tr.records[:8]] == [0, 1, 0, 1, 0, 1, 0, 1]
    assert all(np.all(r.payments == 0.0) for r in tr.records[:8])


# -- config file loading -----------------------------------------------------

def test_load_config_file_round_trip(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(base_config()))
    config, diags = load_config_file(p)
    assert diags == []
    assert config.instance.n_arms == 2
    assert config.instance.master_seed == 3
    assert config.n_runs == 2


def test_env_var_overrides_master_seed(tmp_path, monkeypatch):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(base_config()))
    monkeypatch.setenv(SEED_ENV_VAR, "991")
    config, _ = load_config_file(p)
    assert config.instance.master_seed == 991


def test_non_integer_env_seed_is_rejected(tmp_path, monkeypatch):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(base_config()))
    monkeypatch.setenv(SEED_ENV_VAR, "not-a-seed")
    config, diags = load_config_file(p)
    assert config is None
    assert any(SEED_ENV_VAR in d.fieldname for d in diags)


def test_malformed_json_reports_a_diagnostic(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{ nope")
    config, diags = load_config_file(p)
    assert config is None and diags


# -- the run engine and CSV output -------------------------------------------

def run_config(tmp_path):
    data = base_config()
    data["policies"] = [
        {"kind": "no_payments"},
        {"kind": "chained_restricted", "budget": 1.0},
    ]
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    config, diags = load_config_file(p)
    assert diags == []
    return config


def test_run_experiment_writes_expected_files(tmp_path):
    config = run_config(tmp_path)
    manifest = run_experiment(config, out_dir=tmp_path / "out")
    assert len(manifest["policies"]) == 2
    for entry in manifest["policies"]:
        agg = tmp_path / "out" / (entry["label"] + "_aggregate.csv")
        trace = tmp_path / "out" / (entry["label"] + "_trace.csv")
        assert agg.exists() and trace.exists()
        with open(trace) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == config.n_runs * config.instance.horizon
        with open(agg) as fh:
            arows = list(csv.DictReader(fh))
        assert len(arows) == config.instance.horizon


def test_trace_budget_column_only_for_budgeted_strategies(tmp_path):
    config = run_config(tmp_path)
    run_experiment(config, out_dir=tmp_path / "out")
    with open(tmp_path / "out" / "p0_no_payments_trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["budget_remaining"] == "" for r in rows)
    with open(tmp_path / "out" / "p1_chained_restricted_trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    remaining = [float(r["budget_remaining"]) for r in rows]
    assert all(b >= 0.0 for b in remaining)
    assert remaining[0] <= 1.0


def test_trace_floats_round_trip_exactly(tmp_path):
    config = run_config(tmp_path)
    manifest = run_experiment(config, out_dir=tmp_path / "out")
    inst = config.instance
    tr = run_single(inst, config.policies[0], child_seed_sequence(inst.master_seed, 0, 0))
    with open(manifest["policies"][0]["trace"]) as fh:
        rows = [r for r in csv.DictReader(fh) if r["run"] == "0"]
    assert len(rows) == inst.horizon
    for row, rec in zip(rows, tr.records):
        assert float(row["inst_regret"]) == rec.inst_regret
        assert float(row["inst_payment_disbursed"]) == rec.payment_paid
    assert list(rows[0].keys()) == TRACE_COLUMNS


def test_parallel_run_byte_identical_to_serial(tmp_path):
    config = run_config(tmp_path)
    run_experiment(config, jobs=1, out_dir=tmp_path / "serial")
    run_experiment(config, jobs=2, out_dir=tmp_path / "parallel")
    for entry in ("p0_no_payments", "p1_chained_restricted"):
        for suffix in ("_aggregate.csv", "_trace.csv"):
            a = (tmp_path / "serial" / (entry + suffix)).read_bytes()
            b = (tmp_path / "parallel" / (entry + suffix)).read_bytes()
            assert a == b, entry + suffix


# -- CLI ---------------------------------------------------------------------

def test_cli_validate_ok(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(base_config()))
    assert main(["validate", "--config", str(p)]) == 0


def test_cli_validate_bad_config_exits_2(tmp_path, capsys):
    data = base_config()
    data["n_runs"] = -1
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    assert main(["validate", "--config", str(p)]) == 2
    assert "n_runs" in capsys.readouterr().err


def test_cli_missing_config_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2


def test_cli_run_writes_outputs(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(base_config()))
    out = tmp_path / "results"
    assert main(["run", "--config", str(p), "--out", str(out)]) == 0
    assert (out / "p0_no_payments_aggregate.csv").exists()


def test_cli_import_prints_summary(tmp_path, capsys):
    data = tmp_path / "toy.csv"
    data.write_text("0.1,0.2,0\n0.3,0.4,1\n0.5,0.6,1\n")
    assert main(["import", "--csv", str(data), "--classes", "2"]) == 0
    out = capsys.readouterr().out
    assert "rows: 3" in out
    assert "features: 2" in out


def test_cli_import_bad_file_exits_3(tmp_path, capsys):
    data = tmp_path / "toy.csv"
    data.write_text("0.1,zap,0\n")
    assert main(["import", "--csv", str(data), "--classes", "2"]) == 3
