import csv

import numpy as np
import pytest

from biascrowd.errors import ConfigError
from biascrowd.harness import (
    ExperimentConfig,
    ResultRecord,
    default_injection_counts,
    emit_results,
    emit_worker_correlation,
    read_records,
    run_injection,
    run_real_subsample,
    run_synthetic_sweep,
    run_worker_correlation,
    summarize,
    table_pivot,
    write_records,
)
from biascrowd.simulate import SynthConfig, generate_synthetic

SMALL_SWEEP = ExperimentConfig(
    experiment="synthetic-sweep",
    methods=("mv", "ips-mv"),
    reps=3,
    seed=0,
    rhos=(-1.0, 0.0, 1.0),
)


def standin_dataset():
    ds, _ = generate_synthetic(
        SynthConfig(n_workers=25, n_tasks=40, mean_propensity=0.4, mean_correct=0.7,
                    rho=-0.5, seed=77)
    )
    return ds


class TestConfigValidation:
    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="nope")

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="real-subsample", methods=("mv", "magic"))

    def test_sweep_restricted_to_voting(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="synthetic-sweep", methods=("mv", "ds"))

    def test_ips_needs_gammas(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="real-subsample", methods=("ips-mv",), gammas=())

    def test_reps_positive(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(experiment="real-subsample", reps=0)


class TestSyntheticSweep:
    def test_deterministic_records(self):
        first = run_synthetic_sweep(SMALL_SWEEP)
        second = run_synthetic_sweep(SMALL_SWEEP)
        strip = lambda rs: [(r.method, r.axis_value, r.seed, r.accuracy) for r in rs]
        assert strip(first) == strip(second)

    def test_record_shape(self):
        records = run_synthetic_sweep(SMALL_SWEEP)
        assert len(records) == 3 * 3 * 2
        assert {r.axis for r in records} == {"rho"}
        assert all(0.0 <= r.accuracy <= 1.0 for r in records)
        assert all(r.gamma is None for r in records)


class TestRealSubsample:
    def test_pivot_is_twelve_by_three(self):
        ds = standin_dataset()
        cfg = ExperimentConfig(experiment="real-subsample", labels_per_task=(2, 5, 8), reps=1, seed=1)
        records = run_real_subsample(cfg, ds, "standin")
        header, body = table_pivot(records, "standin")
        assert header == [
            "method",
            "labels_per_task=2",
            "labels_per_task=5",
            "labels_per_task=8",
        ]
        assert len(body) == 12
        assert [row[0] for row in body[:2]] == ["MV", "IPS-MV (gamma=0.1)"]
        assert all(len(row) == 4 and all(cell for cell in row) for row in body)

    def test_summary_mean_matches_records(self):
        ds = standin_dataset()
        cfg = ExperimentConfig(
            experiment="real-subsample", methods=("mv",), labels_per_task=(2,), reps=3, seed=5
        )
        records = run_real_subsample(cfg, ds, "standin")
        (row,) = summarize(records)
        assert row["mean_accuracy"] == pytest.approx(
            np.mean([r.accuracy for r in records]), abs=1e-12
        )
        assert row["n_seeds"] == 3

    def test_gold_required(self):
        ds = standin_dataset()
        stripped = ds.__class__(
            n_workers=ds.n_workers,
            n_tasks=ds.n_tasks,
            n_classes=ds.n_classes,
            workers=ds.workers,
            tasks=ds.tasks,
            labels=ds.labels,
        )
        cfg = ExperimentConfig(experiment="real-subsample", methods=("mv",), reps=1)
        with pytest.raises(ConfigError):
            run_real_subsample(cfg, stripped, "x")


class TestInjection:
    def test_zero_injection_matches_full_subsample(self):
        ds = standin_dataset()
        methods = ("mv", "ips-mv", "ds")
        inj_cfg = ExperimentConfig(
            experiment="spam-robustness", methods=methods, gammas=(1.0,),
            reps=2, seed=3, inject_counts=(0,),
        )
        inj_records = run_injection(inj_cfg, ds, "standin")
        full = int(np.bincount(ds.tasks).max())
        sub_cfg = ExperimentConfig(
            experiment="real-subsample", methods=methods, gammas=(1.0,),
            labels_per_task=(full,), reps=2, seed=3,
        )
        sub_records = run_real_subsample(sub_cfg, ds, "standin")
        inj_acc = {(r.method, r.gamma, r.seed): r.accuracy for r in inj_records}
        sub_acc = {(r.method, r.gamma, r.seed): r.accuracy for r in sub_records}
        assert inj_acc == sub_acc

    def test_counts_and_fraction_recorded(self):
        ds = standin_dataset()
        cfg = ExperimentConfig(
            experiment="collusion-robustness", methods=("mv",), reps=1, seed=3,
            inject_counts=(0, 4),
        )
        records = run_injection(cfg, ds, "standin")
        by_count = {r.axis_value: r for r in records}
        assert by_count[0.0].malicious_fraction == 0.0
        expected = 4 * ds.n_tasks / (4 * ds.n_tasks + ds.n_labels)
        assert by_count[4.0].malicious_fraction == pytest.approx(expected)

    def test_default_counts_reach_cap(self):
        ds = standin_dataset()
        counts = default_injection_counts(ds, points=6)
        assert counts[0] == 0
        cap = ds.n_labels // ds.n_tasks
        assert counts[-1] == cap
        assert list(counts) == sorted(set(counts))


class TestWorkerCorrelation:
    def test_result_fields(self, tmp_path):
        ds = standin_dataset()
        result = run_worker_correlation(ds, "standin")
        assert -1.0 <= result.pearson <= 1.0
        assert result.n_workers_used <= ds.n_workers
        paths = emit_worker_correlation(result, tmp_path, plots=True)
        for p in paths:
            assert p.exists() and p.stat().st_size > 0
        names = {p.name for p in paths}
        assert "correlation_standin.csv" in names
        assert "fig_worker_scatter_standin.png" in names


class TestEmission:
    def test_empty_records_header_only(self, tmp_path):
        paths = emit_results([], tmp_path)
        long_csv = tmp_path / "results_long.csv"
        assert long_csv in paths
        with open(long_csv) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1
        assert rows[0][0] == "experiment"
        with open(tmp_path / "summary.csv") as fh:
            assert len(list(csv.reader(fh))) == 1

    def test_round_trip(self, tmp_path):
        records = run_synthetic_sweep(SMALL_SWEEP)
        path = tmp_path / "records.csv"
        write_records(records, path)
        reloaded = read_records(path)
        assert sorted(reloaded, key=ResultRecord.key) == sorted(records, key=ResultRecord.key)

    def test_full_emission_with_figures(self, tmp_path):
        ds = standin_dataset()
        sweep = run_synthetic_sweep(SMALL_SWEEP)
        sub = run_real_subsample(
            ExperimentConfig(
                experiment="real-subsample", methods=("mv", "ips-mv"), gammas=(1.0,),
                labels_per_task=(2,), reps=1, seed=2,
            ),
            ds,
            "standin",
        )
        spam = run_injection(
            ExperimentConfig(
                experiment="spam-robustness", methods=("mv",), reps=1, seed=2,
                inject_counts=(0, 3),
            ),
            ds,
            "standin",
        )
        paths = emit_results(sweep + sub + spam, tmp_path, plots=True)
        names = {p.name for p in paths}
        assert {
            "results_long.csv",
            "summary.csv",
            "table_accuracy_standin.csv",
            "fig_synthetic_sweep.csv",
            "fig_synthetic_sweep.png",
            "fig_spam_standin.csv",
            "fig_spam_standin.png",
        } <= names
        for p in paths:
            assert p.exists() and p.stat().st_size > 0

    def test_records_reproducible_from_key(self):
        # same (experiment, method, axis value, seed) regenerates the same accuracy
        cfg = ExperimentConfig(
            experiment="synthetic-sweep", methods=("ips-mv",), reps=1, seed=9, rhos=(-0.5,)
        )
        a = run_synthetic_sweep(cfg)[0]
        b = run_synthetic_sweep(cfg)[0]
        assert a.key() == b.key()
        assert a.accuracy == b.accuracy
