import csv
import json

import numpy as np
import pytest

import dpgcn.harness as harness_mod
from dpgcn.accounting import AccountantLedger, calibrate_noise, privacy_spent
from dpgcn.data import SynthSpec, generate_synthetic
from dpgcn.harness import (ConfigError, ExperimentConfig, ResultsRecord,
                           SeedOutcome, TrainingDiverged, early_stop_check,
                           emit_results, hard_case_overlap, parse_config_text,
                           resolve_sigma, run_experiment)


@pytest.fixture(scope="module")
def sbm():
    return generate_synthetic(
        SynthSpec((50, 50), 0.15, 0.02, feature_dim=8, feature_shift=2.0, seed=1))


def cfg_a(**kw):
    base = dict(kind="A", optimizer="adam", max_epochs=30, seeds=(0, 1))
    base.update(kw)
    return ExperimentConfig(**base)


# ---- config parsing ----

def test_parse_full_config():
    cfg = parse_config_text(
        "# experiment settings\n"
        "dataset = data/cora\n"
        "kind = B\n"
        "optimizer = sgd-dp   # trailing comment\n"
        "lr = 0.1\n"
        "max_epochs = 100\n"
        "early_stopping = off\n"
        "sigma = 56\n"
        "seeds = 3,1,4\n")
    assert cfg.dataset == "data/cora"
    assert cfg.kind == "B" and cfg.optimizer == "sgd-dp"
    assert cfg.lr == 0.1 and cfg.max_epochs == 100
    assert cfg.early_stopping is False
    assert cfg.sigma == 56.0
    assert cfg.seeds == (3, 1, 4)


def test_parse_bool_tokens():
    assert parse_config_text("early_stopping = on").early_stopping is True
    assert parse_config_text("early_stopping = False").early_stopping is False


@pytest.mark.parametrize("text", [
    "mystery = 1",
    "lr = 0.1\nlr = 0.2",
    "just a line",
    "lr = fast",
    "early_stopping = maybe",
    "seeds = 1,two",
    "max_epochs = 1.5",
])
def test_parse_rejects_bad_text(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_parse_empty_text_gives_defaults():
    cfg = parse_config_text("\n# nothing here\n")
    assert cfg == ExperimentConfig()


# ---- finalized defaults and validation ----

def test_finalized_epoch_defaults():
    assert ExperimentConfig(optimizer="sgd").finalized().max_epochs == 2000
    assert ExperimentConfig(optimizer="adam").finalized().max_epochs == 500
    assert ExperimentConfig(kind="B", optimizer="sgd-dp",
                            sigma=2.0).finalized().max_epochs == 2000


def test_finalized_early_stopping_defaults():
    assert ExperimentConfig(optimizer="adam").finalized().early_stopping is True
    dp = ExperimentConfig(kind="B", optimizer="adam-dp", sigma=2.0).finalized()
    assert dp.early_stopping is False
    forced = ExperimentConfig(kind="B", optimizer="adam-dp", sigma=2.0,
                              early_stopping=True).finalized()
    assert forced.early_stopping is True


def test_finalized_lot_size_defaults_to_s():
    cfg = ExperimentConfig(kind="C", optimizer="adam-dp", s=8,
                           sigma=2.0).finalized()
    assert cfg.lot_size == 8


@pytest.mark.parametrize("kw", [
    dict(kind="D"),
    dict(optimizer="rmsprop"),
    dict(kind="A", optimizer="adam-dp", sigma=2.0),
    dict(kind="B", optimizer="adam"),
    dict(kind="B", optimizer="adam-dp", sigma=2.0, s=2),
    dict(kind="C", optimizer="adam", s=1),
    dict(kind="B", optimizer="adam-dp"),                       # neither
    dict(kind="B", optimizer="adam-dp", sigma=2.0, target_epsilon=1.0),
    dict(kind="B", optimizer="adam-dp", sigma=-1.0),
    dict(kind="B", optimizer="adam-dp", target_epsilon=0.0),
    dict(optimizer="adam", sigma=2.0),                         # non-DP sigma
    dict(lr=0.0),
    dict(max_epochs=0),
    dict(patience=0),
    dict(hidden=0),
    dict(dropout=1.0),
    dict(dropout=-0.1),
    dict(clip_norm=0.0),
    dict(train_fraction=0.0),
    dict(train_fraction=1.5),
    dict(kind="C", optimizer="adam-dp", s=4, lot_size=5, sigma=2.0),
    dict(kind="C", optimizer="adam-dp", s=4, lot_size=0, sigma=2.0),
    dict(delta=1.0),
    dict(seeds=()),
])
def test_finalized_rejects_inconsistent(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw).finalized()


def test_steps_per_epoch():
    def c(lot):
        return ExperimentConfig(kind="C", optimizer="adam-dp", s=10,
                                lot_size=lot, sigma=2.0).finalized()
    assert c(1).steps_per_epoch == 10
    assert c(3).steps_per_epoch == 3
    assert c(10).steps_per_epoch == 1
    b = ExperimentConfig(kind="B", optimizer="adam-dp", sigma=2.0).finalized()
    assert b.steps_per_epoch == 1


# ---- early_stop_check ----

def test_early_stop_rising_never_stops():
    history = []
    for epoch in range(1, 101):
        history.append(epoch / 100.0)
        stop, best = early_stop_check(history, 20)
        assert not stop and best == epoch


def test_early_stop_flat_history():
    history = [0.5] * 20
    assert early_stop_check(history, 20) == (False, 1)
    history.append(0.5)
    assert early_stop_check(history, 20) == (True, 1)


def test_early_stop_peak_then_decline():
    rise = [0.1, 0.2, 0.3, 0.4, 0.5]
    for extra in range(1, 20):
        stop, best = early_stop_check(rise + [0.45] * extra, 20)
        assert not stop and best == 5
    stop, best = early_stop_check(rise + [0.45] * 20, 20)
    assert stop and best == 5  # stops at epoch 25


def test_early_stop_tie_keeps_first():
    stop, best = early_stop_check([0.3, 0.7, 0.7, 0.7], 20)
    assert best == 2


def test_early_stop_empty_history():
    with pytest.raises(ValueError):
        early_stop_check([], 20)


# ---- hard_case_overlap ----

def test_overlap_identical():
    assert hard_case_overlap({3, 5, 9}, {3, 5, 9}) == 1.0


def test_overlap_disjoint():
    assert hard_case_overlap({1, 2}, {3, 4}) == 0.0


def test_overlap_half():
    baseline = set(range(1, 11))
    errors = set(range(1, 6)) | set(range(90, 100))
    assert hard_case_overlap(errors, baseline) == 0.5


def test_overlap_empty_baseline():
    with pytest.raises(ValueError):
        hard_case_overlap({1}, set())


# ---- emit_results ----

def fake_record(dp=True):
    seeds = []
    for seed in range(5):
        seeds.append(SeedOutcome(
            seed=seed, f1_micro=0.5 + 0.01 * seed, f1_macro=0.4 + 0.01 * seed,
            epsilon=1.9876543210123 if dp else None,
            moment_order=12 if dp else None,
            epochs=100 + seed, seconds=0.25, final_loss=0.9,
            errors=[seed, seed + 10]))
    agg = {"f1_micro_mean": 0.52, "f1_micro_std": 0.0158,
           "f1_macro_mean": 0.42, "f1_macro_std": 0.0158,
           "epsilon": 1.9876543210123 if dp else None, "seeds_failed": 0}
    return ResultsRecord({"kind": "B"}, seeds, agg, {"sigma": 2.0})


def test_emit_csv_shape(tmp_path):
    emit_results(fake_record(), str(tmp_path))
    rows = (tmp_path / "results.csv").read_text().splitlines()
    assert rows[0] == "seed,f1_micro,f1_macro,epsilon,epochs,seconds"
    assert len(rows) == 6
    parsed = list(csv.DictReader(rows))
    assert parsed[2]["seed"] == "2"
    assert float(parsed[2]["epsilon"]) == 1.9876543210123


def test_emit_csv_empty_epsilon_for_non_dp(tmp_path):
    emit_results(fake_record(dp=False), str(tmp_path))
    parsed = list(csv.DictReader(
        (tmp_path / "results.csv").read_text().splitlines()))
    assert all(row["epsilon"] == "" for row in parsed)


def test_emit_json_round_trip(tmp_path):
    record = fake_record()
    emit_results(record, str(tmp_path))
    loaded = json.loads((tmp_path / "results.json").read_text())
    assert loaded["config"] == {"kind": "B"}
    for want, got in zip(record.seeds, loaded["seeds"]):
        assert got["f1_micro"] == want.f1_micro  # exact, not approximate
        assert got["epsilon"] == want.epsilon
        assert got["errors"] == want.errors
    assert loaded["aggregate"]["epsilon"] == record.aggregate["epsilon"]


# ---- resolve_sigma ----

def test_resolve_sigma_non_dp_none():
    assert resolve_sigma(cfg_a().finalized()) is None


def test_resolve_sigma_passthrough():
    cfg = ExperimentConfig(kind="B", optimizer="adam-dp", sigma=7.25).finalized()
    assert resolve_sigma(cfg) == 7.25


def test_resolve_sigma_calibrates_with_lot_ratio():
    cfg = ExperimentConfig(kind="C", optimizer="adam-dp", s=4, lot_size=1,
                           target_epsilon=4.0, max_epochs=5).finalized()
    want = calibrate_noise(4.0, cfg.delta, 0.25, 5 * 4)
    assert resolve_sigma(cfg) == want


def test_resolve_sigma_full_graph_ratio_is_one():
    cfg = ExperimentConfig(kind="B", optimizer="adam-dp", target_epsilon=2.0,
                           max_epochs=100).finalized()
    want = calibrate_noise(2.0, cfg.delta, 1.0, 100)
    assert resolve_sigma(cfg) == want


# ---- run_experiment ----

def test_run_a_trains_and_reports(sbm):
    record = run_experiment(cfg_a(), dataset=sbm)
    assert record.aggregate["seeds_failed"] == 0
    assert record.aggregate["epsilon"] is None
    assert record.metadata["test_metric_at"] == "best_val"
    assert record.aggregate["f1_micro_mean"] > 0.8  # well-separated blocks
    for o in record.seeds:
        assert o.epsilon is None and o.moment_order is None
        assert 0.0 <= o.f1_micro <= 1.0
        assert o.epochs <= 30


def test_run_aggregate_recomputable(sbm):
    record = run_experiment(cfg_a(seeds=(0, 1, 2)), dataset=sbm)
    micros = np.array([o.f1_micro for o in record.seeds])
    assert record.aggregate["f1_micro_mean"] == float(micros.mean())
    assert record.aggregate["f1_micro_std"] == float(micros.std(ddof=1))
    macros = np.array([o.f1_macro for o in record.seeds])
    assert record.aggregate["f1_macro_mean"] == float(macros.mean())


def test_run_b_epsilon_matches_accountant_exactly(sbm):
    cfg = ExperimentConfig(kind="B", optimizer="adam-dp", sigma=2.0,
                           max_epochs=10, seeds=(0, 1))
    record = run_experiment(cfg, dataset=sbm)
    ledger = AccountantLedger()
    ledger.append(q=1.0, sigma=2.0, steps=10)
    want_eps, want_order = privacy_spent(ledger, 1e-5)
    for o in record.seeds:
        assert o.epsilon == want_eps
        assert o.moment_order == want_order
    assert record.aggregate["epsilon"] == want_eps
    assert record.metadata["test_metric_at"] == "final_epoch"
    assert record.metadata["sigma"] == 2.0


def test_run_c_non_dp(sbm):
    cfg = ExperimentConfig(kind="C", optimizer="adam", s=4, max_epochs=10,
                           seeds=(0,))
    record = run_experiment(cfg, dataset=sbm)
    assert record.aggregate["seeds_failed"] == 0
    assert record.aggregate["epsilon"] is None


def test_run_c_dp_with_target_epsilon(sbm):
    cfg = ExperimentConfig(kind="C", optimizer="adam-dp", s=4, lot_size=1,
                           target_epsilon=4.0, max_epochs=5, seeds=(0,))
    record = run_experiment(cfg, dataset=sbm)
    assert record.aggregate["seeds_failed"] == 0
    assert record.aggregate["epsilon"] is not None
    assert record.aggregate["epsilon"] <= 4.0
    assert record.metadata["sigma"] == pytest.approx(
        calibrate_noise(4.0, 1e-5, 0.25, 20))


def test_run_rerun_bitwise_identical(sbm):
    cfg = ExperimentConfig(kind="B", optimizer="sgd-dp", sigma=4.0, lr=0.5,
                           max_epochs=15, seeds=(0, 1, 2))
    a = run_experiment(cfg, dataset=sbm)
    b = run_experiment(cfg, dataset=sbm)
    for oa, ob in zip(a.seeds, b.seeds):
        assert oa.f1_micro == ob.f1_micro
        assert oa.f1_macro == ob.f1_macro
        assert oa.epsilon == ob.epsilon
        assert oa.final_loss == ob.final_loss
        assert oa.epochs == ob.epochs
        assert oa.errors == ob.errors
    for key in ("f1_micro_mean", "f1_micro_std", "epsilon"):
        assert a.aggregate[key] == b.aggregate[key]


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_run_divergence_is_recorded_not_raised(sbm):
    cfg = ExperimentConfig(kind="A", optimizer="sgd", lr=1e8, dropout=0.0,
                           max_epochs=50, early_stopping=False, seeds=(0, 1))
    record = run_experiment(cfg, dataset=sbm)
    assert record.aggregate["seeds_failed"] == 2
    for o in record.seeds:
        assert o.failed and o.reason
        assert o.f1_micro is None
    assert record.aggregate["f1_micro_mean"] is None


def test_run_seed_isolation(sbm, monkeypatch):
    cfg = cfg_a(max_epochs=10, seeds=(0, 1, 2))
    clean = run_experiment(cfg, dataset=sbm)
    original = harness_mod._train_single_seed

    def sabotaged(dataset, config, seed, sigma):
        if seed == 1:
            raise TrainingDiverged("injected failure")
        return original(dataset, config, seed, sigma)

    monkeypatch.setattr(harness_mod, "_train_single_seed", sabotaged)
    record = run_experiment(cfg, dataset=sbm)
    assert record.aggregate["seeds_failed"] == 1
    by_seed = {o.seed: o for o in record.seeds}
    assert by_seed[1].failed
    for seed in (0, 2):
        clean_o = next(o for o in clean.seeds if o.seed == seed)
        assert by_seed[seed].f1_micro == clean_o.f1_micro
        assert by_seed[seed].errors == clean_o.errors


def test_run_c_rejects_oversized_s(sbm):
    cfg = ExperimentConfig(kind="C", optimizer="adam", s=61, max_epochs=5)
    with pytest.raises(ConfigError):
        run_experiment(cfg, dataset=sbm)  # only 60 training nodes


def test_train_fraction_subsamples_only_train(sbm):
    cfg = cfg_a(train_fraction=0.5, seeds=(0,)).finalized()
    trainer = harness_mod._Trainer(sbm, cfg, seed=0, sigma=None)
    assert trainer.train_nodes.size == 30
    assert np.isin(trainer.train_nodes, sbm.train_nodes).all()
    record = run_experiment(cfg_a(train_fraction=0.5, seeds=(0,)), dataset=sbm)
    assert record.aggregate["seeds_failed"] == 0


def test_trainer_ledger_counts_noise_steps(sbm):
    cfg = ExperimentConfig(kind="B", optimizer="adam-dp", sigma=2.0,
                           max_epochs=10, seeds=(0,)).finalized()
    trainer = harness_mod._Trainer(sbm, cfg, seed=0, sigma=2.0)
    for epoch in range(1, 4):
        trainer.run_epoch(epoch)
    assert trainer.ledger.total_steps == 3
    assert len(trainer.ledger.records) == 1
    assert trainer.ledger.records[0].q == 1.0

    cfg_c = ExperimentConfig(kind="C", optimizer="adam-dp", s=4, lot_size=2,
                             sigma=2.0, max_epochs=10, seeds=(0,)).finalized()
    trainer_c = harness_mod._Trainer(sbm, cfg_c, seed=0, sigma=2.0)
    trainer_c.run_epoch(1)
    trainer_c.run_epoch(2)
    # two lots of 2 subgraphs per epoch, each lot one noise draw
    assert trainer_c.ledger.total_steps == 4
    assert trainer_c.ledger.records[0].q == 0.5


def test_trainer_non_dp_keeps_empty_ledger(sbm):
    cfg = cfg_a(seeds=(0,)).finalized()
    trainer = harness_mod._Trainer(sbm, cfg, seed=0, sigma=None)
    trainer.run_epoch(1)
    assert trainer.ledger.total_steps == 0
