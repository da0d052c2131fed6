import numpy as np
import pytest

from goodie import autodiff as ad
from goodie.baselines import GCN, BaselineKind, baseline_features, lp_only_predict, neighbor_mean_impute
from goodie.data import SyntheticSpec, generate_synthetic
from goodie.graph import build_graph, normalize_sym
from goodie.masking import MaskedFeatures, make_splits, mask_features
from goodie.propagation import label_propagate
from goodie.training import TrainingError, node_validator, predict, train_loop


@pytest.fixture(scope="module")
def small():
    ds = generate_synthetic(SyntheticSpec(n_nodes=160, feature_dim=8, seed=3))
    return ds, normalize_sym(ds.graph), make_splits(ds.labels, 10, 40, 0)


class TestNeighborMean:
    def test_star(self):
        g = build_graph([(0, 1), (0, 2), (0, 3)], 4)
        vals = np.array([[0.0, 9.0], [2.0, 1.0], [4.0, 0.0], [0.0, 5.0]])
        obs = np.array([[False, True], [True, True], [True, False], [False, True]])
        out = neighbor_mean_impute(g, MaskedFeatures(vals, obs, "uniform", 0.3, 0))
        # centre: mean of leaves 1 and 2 for channel 0; leaves 1 and 3 observe channel 1 -> untouched
        assert out[0, 0] == 3.0 and out[0, 1] == 9.0
        # leaf 3 channel 0: its only neighbour does not observe it
        assert out[3, 0] == 0.0
        # leaf 2 channel 1: centre observes 9
        assert out[2, 1] == 9.0
        np.testing.assert_array_equal(out[obs], vals[obs])

    def test_nothing_missing(self, small):
        ds, _, _ = small
        f = mask_features(ds.features, "uniform", 0.0, 0)
        np.testing.assert_array_equal(neighbor_mean_impute(ds.graph, f), ds.features)


class TestBaselineFeatures:
    def test_zero_impute_keeps_zeros(self, small):
        ds, adj, _ = small
        f = mask_features(ds.features, "structural", 0.5, 1)
        x = baseline_features("gcn_zero", ds.graph, adj, f)
        assert (x[~f.observed] == 0).all()

    def test_all_feature_baselines_agree_at_mr_zero(self, small):
        ds, adj, _ = small
        f = mask_features(ds.features, "structural", 0.0, 1)
        outs = [baseline_features(k, ds.graph, adj, f) for k in ("gcn_zero", "gcn_nm", "fp_gcn")]
        for o in outs[1:]:
            np.testing.assert_array_equal(o, outs[0])

    def test_lp_only_rejected(self, small):
        ds, adj, _ = small
        with pytest.raises(ValueError):
            baseline_features(BaselineKind.LP_ONLY, ds.graph, adj, mask_features(ds.features, "uniform", 0, 0))


def test_lp_only_matches_propagation(small):
    ds, adj, t = small
    np.testing.assert_array_equal(lp_only_predict(adj, t), label_propagate(adj, t).pseudo_labels)
    assert (lp_only_predict(adj, t)[t.train_idx] == ds.labels[t.train_idx]).all()


class TestGCN:
    def test_gradients(self):
        ds = generate_synthetic(SyntheticSpec(n_nodes=12, n_classes=2, feature_dim=3, p_intra=0.5, p_inter=0.1))
        t = make_splits(ds.labels, 2, 2, 0)
        model = GCN(normalize_sym(ds.graph), ds.features, t, hidden=4, dropout=0.0, seed=1)
        assert ad.grad_check(lambda: model.loss(model.forward())[0], model.tensors) < 1e-4

    def test_training_reduces_loss_and_is_deterministic(self, small):
        ds, adj, t = small

        def run():
            m = GCN(adj, ds.features, t, hidden=16, seed=2)
            out = train_loop(m, node_validator(m, t), patience=20, max_epochs=150, seed=3)
            return out, predict(m)
        a, pa = run()
        b, pb = run()
        assert a.history["loss"][-1] < a.history["loss"][0]
        assert a.history == b.history and (pa == pb).all()
        assert np.mean(pa[t.test_idx] == ds.labels[t.test_idx]) > 0.7


class TestTrainLoop:
    class Flat:
        """A model whose validation score is scripted."""

        def __init__(self, scores):
            self.w = ad.parameter(np.zeros((1, 1)))
            self.scores = list(scores)
            self.calls = 0

        @property
        def tensors(self):
            return [self.w]

        def training_loss(self, rng):
            return ad.sum_all(ad.mul(ad.add(self.w, ad.constant([[1.0]])), ad.add(self.w, ad.constant([[1.0]]))))

        def validate(self):
            s = self.scores[min(self.calls, len(self.scores) - 1)]
            self.calls += 1
            return {"val_score": s}

    def test_patience_zero_stops_at_first_stall(self):
        m = self.Flat([0.1, 0.2, 0.2, 0.9])
        out = train_loop(m, m.validate, patience=0, max_epochs=50)
        assert (out.epochs, out.best_epoch, out.best_score) == (3, 2, 0.2)

    def test_ties_do_not_reset_patience(self):
        m = self.Flat([0.5, 0.5, 0.5, 0.5, 0.5])
        out = train_loop(m, m.validate, patience=2, max_epochs=50)
        assert (out.epochs, out.best_epoch) == (4, 1)

    def test_best_parameters_restored(self):
        m = self.Flat([0.9, 0.1, 0.1, 0.1])
        train_loop(m, m.validate, lr=0.1, patience=2, max_epochs=50)
        # one Adam step of size lr away from the start in the loss-decreasing direction
        assert m.w.item() == pytest.approx(-0.1, rel=1e-6)

    def test_max_epochs(self):
        m = self.Flat([i / 100 for i in range(100)])
        assert train_loop(m, m.validate, max_epochs=7).epochs == 7

    def test_non_finite_loss(self):
        m = self.Flat([0.0])
        m.training_loss = lambda rng: ad.constant([[np.nan]])
        with pytest.raises(TrainingError):
            train_loop(m, m.validate)
