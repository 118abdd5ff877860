"""Run configs, the training harness, and CSV/report emission."""

import csv
import json
import os
from dataclasses import replace

import numpy as np
import pytest

from stable16 import data, experiment as E
from stable16.optim import HyperParams


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    data.generate_synthetic(root, train_n=600, test_n=200, seed=7)
    return data.load_split(root, "train"), data.load_split(root, "test")


TINY = dict(precision="fp64", optimizer="adam", epsilon=1e-7, eta=1e-2,
            batch_size=128, epochs=2, seed=5, dims=(784, 32, 10))


class TestRunConfig:
    def test_defaults_follow_full_scale_net(self):
        cfg = E.RunConfig()
        assert cfg.dims == (784, 2048, 2048, 10)
        assert cfg.eta == 1e-3
        assert cfg.train_limit == 0

    def test_beta2_resolves_per_optimizer(self):
        assert E.RunConfig(optimizer="adam").hyperparams().beta2 == 0.999
        assert E.RunConfig(optimizer="rmsprop").hyperparams().beta2 == 0.9
        assert E.RunConfig(optimizer="rmsprop", beta2=0.5).hyperparams().beta2 == 0.5

    def test_hyperparams_carry_guard(self):
        hp = E.RunConfig(guard=True, guard_floor=1e-4, epsilon=1e-7).hyperparams()
        assert hp.guard and hp.floor == 1e-4
        hp = E.RunConfig(guard=True, epsilon=1e-7).hyperparams()
        assert hp.floor == 1e-7

    def test_desk_config_recipe(self):
        cfg = E.desk_config(optimizer="rmsprop", guard=True)
        assert cfg.dims == (784, 256, 256, 10)
        assert cfg.train_limit == 10000
        assert cfg.epochs == 5
        assert cfg.batch_size == 512
        assert cfg.eta == 0.1
        assert cfg.optimizer == "rmsprop" and cfg.guard

    def test_dict_roundtrip(self):
        cfg = E.desk_config(precision="fp16", epsilon=1e-4, beta2=0.95)
        back = E.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            E.RunConfig.from_dict({"learning_rate": 0.1})

    @pytest.mark.parametrize("bad", [
        dict(precision="fp8"),
        dict(optimizer="adagrad"),
        dict(batch_size=0),
        dict(epochs=0),
        dict(train_limit=-1),
        dict(dims=(784,)),
        dict(dims=(784, 0, 10)),
        dict(eta=-1.0),
        dict(epsilon=0.0),
        dict(loss_scale=0.5),
    ])
    def test_validation_rejects(self, bad):
        with pytest.raises(ValueError):
            E.validate_config(E.RunConfig(**bad))


class TestCsvFormat:
    def test_six_significant_digits(self):
        assert E._fmt6(0.123456789) == "0.123457"
        assert E._fmt6(1e-7) == "1e-07"
        assert E._fmt6(float("nan")) == "nan"
        assert E._fmt6(float("inf")) == "inf"
        assert E._fmt6(None) == "nan"
        assert E._fmt6(True) == "on" and E._fmt6(False) == "off"
        assert E._fmt6(3) == "3"

    def test_column_set_is_stable(self):
        assert E.CSV_COLUMNS == (
            "precision", "optimizer", "guard", "epsilon", "epoch",
            "train_loss", "test_accuracy", "nan_count", "inf_count",
            "grad_abs_max", "grad_abs_min_nonzero", "wall_time_s")


class TestRunTraining:
    def test_loss_falls_and_accuracy_rises(self, corpus):
        train, test = corpus
        res = E.run_training(E.RunConfig(**TINY), train, test)
        assert len(res.records) == 2
        assert res.records[1].train_loss < res.records[0].train_loss
        assert res.records[1].test_accuracy > 0.5
        assert res.report.nan_created == 0

    def test_rows_reproduce_except_wall_time(self, corpus):
        train, test = corpus
        cfg = E.RunConfig(**TINY)
        a = E.run_training(cfg, train, test)
        b = E.run_training(cfg, train, test)
        for ra, rb in zip(a.records, b.records):
            assert ra.csv_row()[:-1] == rb.csv_row()[:-1]

    def test_seed_changes_rows(self, corpus):
        train, test = corpus
        a = E.run_training(E.RunConfig(**TINY), train, test)
        b = E.run_training(replace(E.RunConfig(**TINY), seed=6), train, test)
        assert a.records[-1].csv_row()[:-1] != b.records[-1].csv_row()[:-1]

    def test_train_limit_subsets(self, corpus):
        train, test = corpus
        cfg = replace(E.RunConfig(**TINY), train_limit=256, epochs=1)
        res = E.run_training(cfg, train, test, collect_grad_series=True)
        # 256 examples at batch 128 -> 2 optimizer steps
        assert len(res.grad_series) == 2

    def test_grad_series_rows(self, corpus):
        train, test = corpus
        cfg = replace(E.RunConfig(**TINY), epochs=1)
        res = E.run_training(cfg, train, test, collect_grad_series=True)
        steps = [s for s, *_ in res.grad_series]
        assert steps == list(range(1, len(steps) + 1))
        _, epoch, loss, gmax, gmin = res.grad_series[0]
        assert epoch == 1 and np.isfinite(loss) and gmax > gmin > 0

    def test_writes_csv_and_report(self, corpus, tmp_path):
        train, test = corpus
        out = tmp_path / "run.csv"
        cfg = replace(E.RunConfig(**TINY), epochs=1, out_path=str(out))
        res = E.run_training(cfg, train, test)
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(E.CSV_COLUMNS)
        assert len(rows) == 2
        assert rows[1][:5] == ["fp64", "adam", "off", "1e-07", "1"]
        rpath = E.report_path_for(out)
        assert os.path.exists(rpath)
        blob = json.load(open(rpath))
        assert blob["optimizer"] == "adam"
        assert blob["per_epoch"][0]["epoch"] == 1
        assert res.records[0].wall_time_s > 0

    def test_loss_scale_changes_nothing_in_f64(self, corpus):
        train, test = corpus
        cfg = replace(E.RunConfig(**TINY), epochs=1)
        a = E.run_training(cfg, train, test)
        b = E.run_training(replace(cfg, loss_scale=1024.0), train, test)
        # 1024 is a power of two: f64 grads match to rounding noise
        assert abs(a.records[0].test_accuracy - b.records[0].test_accuracy) < 0.02

    def test_input_width_mismatch(self, corpus):
        train, test = corpus
        with pytest.raises(ValueError, match="input width"):
            E.run_training(replace(E.RunConfig(**TINY), dims=(100, 8, 10)),
                           train, test)

    def test_collapse_is_recorded_not_raised(self, corpus):
        # fp16 adam, tiny epsilon, hot eta: the epsilon kick must blow up
        # and the loop must still complete all epochs
        train, test = corpus
        cfg = E.RunConfig(precision="fp16", optimizer="adam", epsilon=1e-7,
                          eta=0.1, batch_size=128, epochs=2, seed=5,
                          dims=(784, 32, 10))
        res = E.run_training(cfg, train, test)
        assert len(res.records) == 2
        assert res.report.first_nan_step is not None
        assert res.records[-1].test_accuracy <= 0.15
        assert res.report.first_violation is not None
        assert res.report.first_violation["assumption"] == "A3.3"
        # collapsed loss serializes as nan, not an exception
        assert res.records[-1].csv_row()[5] == "nan"


class TestSweep:
    def test_configs_cover_product_and_validate_first(self):
        base = E.desk_config()
        combos = E.sweep_configs(base, [1e-1, 1e-7], [False, True], ["fp16"])
        assert len(combos) == 4
        assert {(c.guard, c.epsilon) for c in combos} == {
            (False, 1e-1), (False, 1e-7), (True, 1e-1), (True, 1e-7)}
        with pytest.raises(ValueError):
            E.sweep_configs(base, [1e-1, -1.0], [False], ["fp16"])
        with pytest.raises(ValueError):
            E.sweep_configs(base, [1e-1], [False], ["fp128"])

    def test_merged_rows_sorted(self, corpus, tmp_path):
        train, test = corpus
        base = E.RunConfig(**TINY)
        out = tmp_path / "sweep.csv"
        recs, results = E.run_sweep(
            replace(base, epochs=1), [1e-1, 1e-7], [True, False], ["fp64"],
            train, test, out_path=str(out))
        assert len(recs) == 4
        keys = [E.record_sort_key(r) for r in recs]
        assert keys == sorted(keys)
        assert [(r.guard, r.epsilon) for r in recs] == [
            (False, 1e-7), (False, 0.1), (True, 1e-7), (True, 0.1)]
        bundle = json.load(open(E.reports_path_for(out)))
        assert len(bundle) == 4
        assert [b["config"]["epsilon"] for b in bundle] == [1e-7, 0.1, 1e-7, 0.1]
        assert bundle[0]["report"]["precision"] == "fp64"

    def test_sweep_rerun_identical_accuracy(self, corpus):
        train, test = corpus
        base = replace(E.RunConfig(**TINY), epochs=1)
        a, _ = E.run_sweep(base, [1e-3], [False], ["fp64"], train, test)
        b, _ = E.run_sweep(base, [1e-3], [False], ["fp64"], train, test)
        assert [r.test_accuracy for r in a] == [r.test_accuracy for r in b]
        assert [r.train_loss for r in a] == [r.train_loss for r in b]
