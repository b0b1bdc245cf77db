import numpy as np
import pytest

import tart
from tart import harness as hn
from tart.model import EncoderConfig


def brute_force_tau_b(x, y):
    """Independent O(n^2) pair enumeration oracle for tau_b."""
    n = len(x)
    concordant = discordant = tied_x_only = tied_y_only = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = int(x[i] > x[j]) - int(x[i] < x[j])
            dy = int(y[i] > y[j]) - int(y[i] < y[j])
            if dx * dy > 0:
                concordant += 1
            elif dx * dy < 0:
                discordant += 1
            elif dx == 0 and dy != 0:
                tied_x_only += 1
            elif dy == 0 and dx != 0:
                tied_y_only += 1
    return (concordant - discordant) / np.sqrt(
        (concordant + discordant + tied_x_only) * (concordant + discordant + tied_y_only))


def small_split(count=24, seed=0, n_train=16):
    records = tart.generate_synthetic(count, 8, 0.4, 0.05, seed=seed)
    return tart.split_dataset(records, n_train, seed=seed)


def tiny_train_config(**overrides):
    base = dict(
        epochs=1, batch_size=8, seed=0, lr=1e-3, mode="tart",
        model=EncoderConfig(n_layer=1, d_model=8, n_heads=2, d_ff=16,
                            dropout_p=0.0, input_width=11))
    base.update(overrides)
    return hn.TrainConfig(**base)


class TestKendallTau:
    def test_identical_ranking(self):
        assert hn.kendall_tau_b([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]) == pytest.approx(1.0)

    def test_reversed_ranking(self):
        x = [3.0, 1.0, 4.0, 1.5, 9.0]
        assert hn.kendall_tau_b(x, [-v for v in x]) == pytest.approx(-1.0)

    def test_hand_case(self):
        # pairs of [1,2,3,4] vs [1,3,2,4]: C=5, D=1, tau = 4/6
        assert hn.kendall_tau_b([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(4 / 6, abs=1e-12)

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(2, 60))
            # coarse quantization forces ties
            x = np.round(rng.normal(size=n) * 2) / 2
            y = np.round(rng.normal(size=n) * 2) / 2
            if np.all(x == x[0]) or np.all(y == y[0]):
                continue
            assert hn.kendall_tau_b(x, y) == brute_force_tau_b(x, y)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=40)
        y = rng.normal(size=40)
        base = hn.kendall_tau_b(x, y)
        assert hn.kendall_tau_b(np.exp(x), y) == base
        assert hn.kendall_tau_b(3.0 * x + 7.0, y) == base
        assert hn.kendall_tau_b(x, np.exp(y)) == base

    def test_symmetry_and_negation(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=30)
        y = rng.normal(size=30)
        assert hn.kendall_tau_b(x, y) == hn.kendall_tau_b(y, x)
        assert hn.kendall_tau_b(x, -y) == pytest.approx(-hn.kendall_tau_b(x, y), abs=1e-15)

    def test_degenerate_inputs(self):
        with pytest.raises(hn.DegenerateInput):
            hn.kendall_tau_b([1, 1, 1], [1, 2, 3])
        with pytest.raises(hn.DegenerateInput):
            hn.kendall_tau_b([1, 2, 3], [5, 5, 5])
        with pytest.raises(hn.DegenerateInput):
            hn.kendall_tau_b([1], [2])

    def test_length_mismatch(self):
        with pytest.raises(hn.LengthMismatch):
            hn.kendall_tau_b([1, 2], [1, 2, 3])


class TestTauTable:
    def test_oracle_predictions(self):
        rng = np.random.default_rng(3)
        targets = rng.normal(size=(20, 4))
        table = hn.tau_table(targets.copy(), targets)
        assert all(v == pytest.approx(1.0) for v in table.values())

    def test_anti_oracle(self):
        rng = np.random.default_rng(4)
        targets = rng.normal(size=(20, 4))
        table = hn.tau_table(-targets, targets)
        assert all(v == pytest.approx(-1.0) for v in table.values())

    def test_constant_predictions_degenerate(self):
        rng = np.random.default_rng(5)
        targets = rng.normal(size=(20, 4))
        with pytest.raises(hn.DegenerateInput):
            hn.tau_table(np.zeros((20, 4)), targets)


class TestTrainPredictor:
    def test_history_length_matches_epochs(self):
        split = small_split()
        _, history = tart.train_predictor(split, tiny_train_config())
        assert len(history) == 1
        assert "loss" in history[0] and "tau" in history[0]

    def test_deterministic_history(self):
        split = small_split()
        _, h1 = tart.train_predictor(split, tiny_train_config(epochs=2))
        _, h2 = tart.train_predictor(split, tiny_train_config(epochs=2))
        assert h1 == h2

    def test_test_labels_never_touch_parameters(self):
        split = small_split()
        stripped = tart.DatasetSplit(
            train=split.train,
            test=tuple(tart.LabeledGraph(graph=r.graph, targets=None, id=r.id)
                       for r in split.test))
        m1, _ = tart.train_predictor(split, tiny_train_config(epochs=2))
        m2, _ = tart.train_predictor(stripped, tiny_train_config(epochs=2))
        for name in m1.params:
            assert np.array_equal(m1.params[name].value, m2.params[name].value)

    def test_pure_mode_is_edge_blind(self):
        split = small_split()
        rewired = tart.DatasetSplit(
            train=tuple(
                tart.LabeledGraph(
                    graph=tart.make_graph(r.graph.num_nodes, r.graph.node_ops, []),
                    targets=r.targets, id=r.id)
                for r in split.train),
            test=tuple(
                tart.LabeledGraph(
                    graph=tart.make_graph(r.graph.num_nodes, r.graph.node_ops, []),
                    targets=r.targets, id=r.id)
                for r in split.test))
        cfg = tiny_train_config(mode="pure", epochs=2)
        m1, h1 = tart.train_predictor(split, cfg)
        m2, h2 = tart.train_predictor(rewired, cfg)
        for name in m1.params:
            assert np.array_equal(m1.params[name].value, m2.params[name].value)
        assert h1 == h2

    def test_unlabeled_train_rejected(self):
        split = small_split()
        broken = tart.DatasetSplit(
            train=tuple(tart.LabeledGraph(graph=r.graph, targets=None, id=r.id)
                        for r in split.train),
            test=split.test)
        with pytest.raises(hn.HarnessError):
            tart.train_predictor(broken, tiny_train_config())


class TestRunExperiment:
    def test_trial_count_and_mean(self):
        split = small_split()
        report = tart.run_experiment(split, tiny_train_config(), n_trials=3, base_seed=5)
        assert len(report.per_seed) == 3
        assert [t["seed"] for t in report.per_seed] == [5, 6, 7]
        for name, mean in report.mean_tau.items():
            values = [t["tau"][name] for t in report.per_seed]
            assert mean == pytest.approx(np.mean(values))

    def test_single_trial_mean_equals_trial(self):
        split = small_split()
        report = tart.run_experiment(split, tiny_train_config(), n_trials=1, base_seed=2)
        assert report.mean_tau == report.per_seed[0]["tau"]

    def test_deterministic_report(self):
        split = small_split()
        a = tart.run_experiment(split, tiny_train_config(), n_trials=2, base_seed=1)
        b = tart.run_experiment(split, tiny_train_config(), n_trials=2, base_seed=1)
        assert a.to_json() == b.to_json()


class TestCompareModes:
    def test_identical_configs_zero_difference(self):
        split = small_split()
        cfg = tiny_train_config()
        comparison = hn.compare_modes(split, cfg, cfg, n_trials=1, base_seed=0)
        for name, p in comparison.pure.mean_tau.items():
            assert comparison.tart.mean_tau[name] == p

    def test_csv_row_count(self):
        split = small_split()
        comparison = hn.compare_modes(split, tiny_train_config(mode="pure"),
                                      tiny_train_config(mode="tart"),
                                      n_trials=2, base_seed=0)
        lines = comparison.to_csv().strip().split("\n")
        assert lines[0] == "target,mode,seed,tau"
        assert len(lines) == 1 + 2 * 2 * 4  # modes x seeds x targets

    def test_unequal_epochs_rejected(self):
        split = small_split()
        with pytest.raises(hn.HarnessError):
            hn.compare_modes(split, tiny_train_config(epochs=1),
                             tiny_train_config(epochs=2), n_trials=1)

    def test_text_table_mentions_reference_results(self):
        split = small_split()
        cfg = tiny_train_config()
        comparison = hn.compare_modes(split, cfg, cfg, n_trials=1, base_seed=0)
        text = comparison.to_text()
        assert "not reproduced" in text
        assert "0.266" in text and "0.210" in text
