import itertools

import numpy as np
import pytest

from biascrowd.data import LabelPosterior, PropensityMatrix
from biascrowd.dawid_skene import DSParams, ds_e_step, ds_lower_bound, ds_m_step, ds_run
from biascrowd.em import EMOptions
from biascrowd.simulate import SynthConfig, generate_synthetic

from conftest import make_dataset


def single_worker_ds():
    return make_dataset([(0, 0, 0)], n_classes=2, n_tasks=2)


def params_2x2(p00=0.8, p10=0.3):
    conf = np.array([[[p00, 1 - p00], [p10, 1 - p10]]])
    return DSParams(confusions=conf, prior=np.array([0.5, 0.5]))


class TestEStep:
    def test_single_observation(self):
        post = ds_e_step(single_worker_ds(), params_2x2())
        assert post.probs[0] == pytest.approx([0.8 / 1.1, 0.3 / 1.1], abs=1e-12)

    def test_weight_two_squares_likelihood(self):
        post = ds_e_step(single_worker_ds(), params_2x2(), weights=np.array([2.0]))
        expected = np.array([0.64, 0.09])
        assert post.probs[0] == pytest.approx(expected / expected.sum(), abs=1e-12)

    def test_unobserved_task_gets_prior(self):
        params = DSParams(
            confusions=np.array([[[0.8, 0.2], [0.3, 0.7]]]), prior=np.array([0.6, 0.4])
        )
        post = ds_e_step(single_worker_ds(), params)
        assert post.probs[1] == pytest.approx([0.6, 0.4], abs=1e-12)

    def test_rows_normalized(self):
        ds, _ = generate_synthetic(SynthConfig(seed=3))
        result = ds_run(ds)
        assert np.abs(result.posterior.probs.sum(axis=1) - 1.0).max() < 1e-9


class TestMStep:
    def test_hard_counts(self):
        # one worker, two tasks of true class 0, answers (0, 1)
        ds = make_dataset([(0, 0, 0), (0, 1, 1)])
        hard = LabelPosterior(probs=np.array([[1.0, 0.0], [1.0, 0.0]]), prior=np.array([0.5, 0.5]))
        params = ds_m_step(ds, hard, smoothing=0.0)
        assert params.confusions[0, 0] == pytest.approx([0.5, 0.5])

    def test_weighted_counts(self):
        ds = make_dataset([(0, 0, 0), (0, 1, 1)])
        hard = LabelPosterior(probs=np.array([[1.0, 0.0], [1.0, 0.0]]), prior=np.array([0.5, 0.5]))
        params = ds_m_step(ds, hard, weights=np.array([3.0, 1.0]), smoothing=0.0)
        assert params.confusions[0, 0] == pytest.approx([0.75, 0.25])

    def test_uniform_posterior_gives_uniform_prior(self):
        ds = make_dataset([(0, 0, 0), (0, 1, 1)])
        flat = LabelPosterior(probs=np.full((2, 2), 0.5), prior=np.array([0.5, 0.5]))
        params = ds_m_step(ds, flat)
        assert params.prior == pytest.approx([0.5, 0.5])

    def test_prior_update_ignores_weights(self):
        ds = make_dataset([(0, 0, 0), (0, 1, 1)])
        post = LabelPosterior(probs=np.array([[0.9, 0.1], [0.2, 0.8]]), prior=np.array([0.5, 0.5]))
        light = ds_m_step(ds, post, weights=np.array([1.0, 1.0]))
        heavy = ds_m_step(ds, post, weights=np.array([50.0, 0.1]))
        assert np.array_equal(light.prior, heavy.prior)


class TestRun:
    def test_noiseless_consensus_recovers_gold(self):
        gold = {j: j % 2 for j in range(10)}
        triples = [(w, j, gold[j]) for w in range(3) for j in range(10)]
        ds = make_dataset(triples, gold=gold)
        result = ds_run(ds)
        assert np.array_equal(result.predictions, ds.gold_array())
        diag = result.params.confusions.diagonal(axis1=1, axis2=2)
        assert diag.min() > 0.95

    def test_trace_monotone_default_opts_smoke(self):
        ds, e = generate_synthetic(SynthConfig(seed=4))
        result = ds_run(ds, e)
        assert result.trace.size >= 1
        assert result.converged or result.trace.size == 100

    def test_all_ones_propensity_bit_for_bit(self):
        ds, _ = generate_synthetic(SynthConfig(seed=8))
        ones = PropensityMatrix(np.ones((ds.n_workers, ds.n_tasks)))
        plain = ds_run(ds)
        weighted = ds_run(ds, ones)
        assert np.array_equal(plain.posterior.probs, weighted.posterior.probs)
        assert np.array_equal(plain.params.confusions, weighted.params.confusions)
        assert np.array_equal(plain.trace, weighted.trace)

    def test_class_permutation_equivariance(self):
        ds, _ = generate_synthetic(SynthConfig(n_classes=3, mean_propensity=0.4, seed=9))
        perm = np.array([2, 0, 1])
        permuted = make_dataset(
            list(zip(ds.workers.tolist(), ds.tasks.tolist(), perm[ds.labels].tolist())),
            n_classes=3,
            n_workers=ds.n_workers,
            n_tasks=ds.n_tasks,
        )
        base = ds_run(ds)
        mapped = ds_run(permuted)
        assert np.allclose(mapped.posterior.probs[:, perm], base.posterior.probs, atol=1e-9)
        assert np.allclose(
            mapped.params.confusions[:, perm][:, :, perm], base.params.confusions, atol=1e-9
        )
        assert np.array_equal(perm[base.predictions], mapped.predictions)


def best_hard_labeling_bound(ds, weights=None):
    """Brute force: exact M-step bound maximized over all hard labelings."""
    k, m = ds.n_classes, ds.n_tasks
    w = np.ones(ds.n_labels) if weights is None else np.asarray(weights, float)
    best = -np.inf
    for assignment in itertools.product(range(k), repeat=m):
        z = np.array(assignment)
        counts = np.zeros((ds.n_workers, k, k))
        np.add.at(counts, (ds.workers, z[ds.tasks], ds.labels), w)
        rows = counts.sum(axis=2, keepdims=True)
        conf = np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), 1.0 / k)
        prior = np.bincount(z, minlength=k) / m
        loglik = float((w * np.log(conf[ds.workers, z[ds.tasks], ds.labels])).sum())
        best = max(best, loglik + float(np.log(prior[z]).sum()))
    return best


class TestBruteForceOracle:
    def test_four_task_instance_reaches_grid_max(self):
        # two perfect workers plus one dissenting label; K^m = 16 labelings
        triples = [
            (0, 0, 0), (1, 0, 0), (2, 0, 0),
            (0, 1, 1), (1, 1, 1), (2, 1, 1),
            (0, 2, 0), (1, 2, 0), (2, 2, 1),
            (0, 3, 1), (1, 3, 1),
        ]
        ds = make_dataset(triples, n_tasks=4)
        oracle = best_hard_labeling_bound(ds)
        result = ds_run(ds, opts=EMOptions(smoothing=0.0))
        assert result.trace[-1] == pytest.approx(oracle, abs=1e-6)

    def test_weighted_instance_reaches_grid_max(self):
        triples = [
            (0, 0, 0), (1, 0, 0), (2, 0, 1),
            (0, 1, 1), (1, 1, 1),
            (0, 2, 0), (1, 2, 0),
            (0, 3, 1), (1, 3, 1), (2, 3, 1),
        ]
        ds = make_dataset(triples, n_tasks=4)
        e = PropensityMatrix(np.full((3, 4), 0.5))
        oracle = best_hard_labeling_bound(ds, weights=np.full(len(triples), 2.0))
        result = ds_run(ds, e, opts=EMOptions(smoothing=0.0))
        assert result.trace[-1] == pytest.approx(oracle, abs=1e-6)


class TestLowerBound:
    def test_zero_entropy_at_hard_posterior(self):
        ds = make_dataset([(0, 0, 0)])
        params = params_2x2()
        hard = LabelPosterior(probs=np.array([[1.0, 0.0]]), prior=np.array([0.5, 0.5]))
        value = ds_lower_bound(ds, hard, params)
        assert value == pytest.approx(np.log(0.8) + np.log(0.5), abs=1e-12)
