import numpy as np
import pytest
from hypothesis import given, strategies as st

from biascrowd.data import (
    LabelDataset,
    accuracy,
    convert_tsv,
    load_dataset,
    pearson_correlation,
    save_dataset,
    worker_stats,
)
from biascrowd.errors import (
    CoverageError,
    DomainError,
    DuplicateObservationError,
    MissingGoldError,
    ParseError,
    ZeroVarianceError,
)

from conftest import make_dataset


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadDataset:
    def test_three_row_file(self, tmp_path):
        labels = write(tmp_path / "l.csv", "worker,task,label\n0,0,1\n1,0,0\n0,1,1\n")
        ds = load_dataset(labels, None, 2)
        assert (ds.n_workers, ds.n_tasks, ds.n_classes, ds.n_labels) == (2, 2, 2, 3)

    def test_duplicate_pair_rejected(self, tmp_path):
        labels = write(
            tmp_path / "l.csv", "worker,task,label\n0,0,1\n1,0,0\n0,1,1\n0,0,0\n"
        )
        with pytest.raises(DuplicateObservationError):
            load_dataset(labels, None, 2)

    def test_malformed_row(self, tmp_path):
        labels = write(tmp_path / "l.csv", "worker,task,label\n0,0\n")
        with pytest.raises(ParseError):
            load_dataset(labels, None, 2)

    def test_too_many_classes(self, tmp_path):
        labels = write(tmp_path / "l.csv", "worker,task,label\n0,0,a\n0,1,b\n0,2,c\n")
        with pytest.raises(DomainError):
            load_dataset(labels, None, 2)

    def test_class_mapping_order_gold_first(self, tmp_path):
        labels = write(tmp_path / "l.csv", "worker,task,label\nw1,t1,no\nw2,t2,yes\n")
        gold = write(tmp_path / "g.csv", "task,label\nt1,yes\nt2,no\n")
        ds = load_dataset(labels, gold, 2)
        # gold file scanned first: "yes" appears before "no"
        assert ds.class_names == ("yes", "no")
        assert ds.gold == {0: 0, 1: 1}

    def test_real_rte_shape(self):
        from conftest import real_dataset

        ds = real_dataset("RTE")
        assert (ds.n_workers, ds.n_tasks, ds.n_classes) == (164, 800, 2)
        assert ds.n_labels / ds.n_tasks == pytest.approx(10, abs=0.5)


class TestRoundTrip:
    @given(st.data())
    def test_save_load_preserves_token_triples(self, tmp_path_factory, data):
        n_workers = data.draw(st.integers(1, 5))
        n_tasks = data.draw(st.integers(1, 5))
        n_classes = data.draw(st.integers(2, 3))
        pairs = data.draw(
            st.sets(
                st.tuples(st.integers(0, n_workers - 1), st.integers(0, n_tasks - 1)),
                min_size=1,
                max_size=12,
            )
        )
        triples = [
            (w, t, data.draw(st.integers(0, n_classes - 1), label="lab"))
            for w, t in sorted(pairs)
        ]
        gold = {t: data.draw(st.integers(0, n_classes - 1), label="gold") for t in range(n_tasks)}
        ds = make_dataset(
            triples, n_classes=n_classes, gold=gold, n_workers=n_workers, n_tasks=n_tasks
        )
        out = tmp_path_factory.mktemp("roundtrip")
        save_dataset(ds, out / "l.csv", out / "g.csv")
        reloaded = load_dataset(out / "l.csv", out / "g.csv", n_classes)
        assert reloaded.token_triples() == ds.token_triples()
        gold_tokens = {
            (ds.task_names or tuple(map(str, range(ds.n_tasks))))[t]: str(z)
            for t, z in gold.items()
        }
        reloaded_gold = {
            reloaded.task_names[t]: reloaded.class_names[z] for t, z in reloaded.gold.items()
        }
        assert reloaded_gold == gold_tokens

    def test_convert_tsv(self, tmp_path):
        tsv = write(tmp_path / "in.tsv", "w1\tt1\tyes\nw2\tt1\tno\n")
        gold_tsv = write(tmp_path / "g.tsv", "t1\tyes\n")
        convert_tsv(tsv, tmp_path / "l.csv", gold_tsv, tmp_path / "g.csv")
        ds = load_dataset(tmp_path / "l.csv", tmp_path / "g.csv", 2)
        assert ds.n_labels == 2
        assert ds.gold == {0: 0}


class TestInvariants:
    def test_duplicate_triple_constructor(self):
        with pytest.raises(DuplicateObservationError):
            make_dataset([(0, 0, 1), (0, 0, 0)])

    def test_label_out_of_range(self):
        with pytest.raises(DomainError):
            make_dataset([(0, 0, 2)], n_classes=2)

    def test_needs_two_classes(self):
        with pytest.raises(DomainError):
            make_dataset([(0, 0, 0)], n_classes=1)

    def test_propensity_total_recovers_label_count(self):
        ds = make_dataset(
            [(0, 0, 1), (0, 1, 0), (1, 2, 1), (2, 0, 0), (2, 1, 1), (2, 2, 0)],
            gold={0: 1, 1: 0, 2: 1},
        )
        stats = worker_stats(ds)
        assert stats.propensity.sum() * ds.n_tasks == pytest.approx(ds.n_labels)


class TestWorkerStats:
    def test_half_coverage_all_correct(self):
        ds = make_dataset(
            [(0, 0, 1), (0, 1, 0), (1, 0, 1), (1, 1, 0), (1, 2, 0), (1, 3, 1)],
            gold={0: 1, 1: 0, 2: 1, 3: 1},
            n_tasks=4,
        )
        stats = worker_stats(ds)
        assert stats.propensity[0] == pytest.approx(0.5)
        assert stats.accuracy[0] == pytest.approx(1.0)

    def test_zero_label_worker_undefined(self):
        ds = make_dataset([(0, 0, 1)], gold={0: 1}, n_workers=2)
        stats = worker_stats(ds)
        assert np.isnan(stats.accuracy[1])
        assert stats.defined.tolist() == [True, False]

    def test_missing_gold(self):
        ds = make_dataset([(0, 0, 1)])
        with pytest.raises(MissingGoldError):
            worker_stats(ds)


class TestPearson:
    def test_perfect(self):
        assert pearson_correlation(np.array([1.0, 2, 3]), np.array([1.0, 2, 3])) == pytest.approx(1.0)

    def test_zero_variance(self):
        with pytest.raises(ZeroVarianceError):
            pearson_correlation(np.array([1.0, 1, 1]), np.array([1.0, 2, 3]))

    @given(
        st.lists(st.floats(-50, 50), min_size=3, max_size=20),
        st.floats(0.1, 10),
        st.floats(-5, 5),
    )
    def test_symmetric_and_affine_invariant(self, values, scale, shift):
        x = np.array(values)
        y = np.sin(x) + 0.1 * x  # deterministic partner with generic variance
        if np.ptp(x) < 1e-6 or np.ptp(y) < 1e-12:
            return
        base = pearson_correlation(x, y)
        assert pearson_correlation(y, x) == pytest.approx(base, abs=1e-12)
        assert pearson_correlation(scale * x + shift, y) == pytest.approx(base, abs=1e-7)


class TestAccuracy:
    def test_all_match(self):
        assert accuracy({0: 1, 1: 0}, {0: 1, 1: 0}) == 1.0

    def test_three_of_four(self):
        preds = {0: 1, 1: 0, 2: 1, 3: 1}
        gold = {0: 1, 1: 0, 2: 1, 3: 0}
        assert accuracy(preds, gold) == pytest.approx(0.75)

    def test_array_predictions(self):
        assert accuracy(np.array([1, 0, 1, 1]), {0: 1, 3: 0}) == pytest.approx(0.5)

    def test_coverage_error(self):
        with pytest.raises(CoverageError):
            accuracy({0: 1}, {0: 1, 1: 0})
