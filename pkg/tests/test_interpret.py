import math

import numpy as np
import pytest

import dlbac as d
from dlbac.interpret import attribution_to_csv, flip_curve_to_csv
from dlbac.errors import ConfigError


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def linear_net(weights_row):
    """1-hidden-unit network computing sigmoid(w . x) for non-negative w.x."""
    w = np.asarray(weights_row, dtype=float)
    cfg = d.NetworkConfig(input_width=len(w), num_ops=1, hidden_layers=(1,))
    net = d.init_network(cfg)
    net.weights[0][:, 0] = w
    net.weights[1][:] = 1.0
    net.biases[0][:] = 0.0
    net.biases[1][:] = 0.0
    return net


@pytest.fixture(scope="module")
def trained():
    cfg = d.SynthConfig(
        num_users=120, num_resources=120, num_user_meta=4, num_res_meta=4,
        num_rules=3, num_ops=2, value_set_sizes=(6,) * 8, seed=21,
        visible_user_meta=4, visible_res_meta=4, neg_ratio=1.0,
    )
    dset, *_ = d.synthesize(cfg)
    enc = d.build_encoder(dset)
    net = d.init_network(d.NetworkConfig(enc.width, 2, (32, 16), init_seed=0))
    tc = d.TrainConfig(lr0=0.01, lr_decay_epochs=20, epochs=30, val_fraction=0.0)
    net, _ = d.train(net, dset, enc, tc)
    return net, enc, dset


class TestIntegratedGradients:
    def test_single_step_is_endpoint_gradient_times_diff(self):
        # one right-Riemann step evaluates the gradient at x itself
        net = linear_net([1.0])
        x = np.array([1.0])
        got = d.integrated_gradients(net, x, np.zeros(1), 0, steps=1)
        s = sigmoid(1.0)
        assert got[0] == pytest.approx(s * (1 - s) * 1.0, abs=1e-12)

    def test_completeness_at_many_steps(self):
        net = linear_net([0.7, 0.3, 1.1])
        x = np.array([1.0, 1.0, 1.0])
        scores = d.integrated_gradients(net, x, np.zeros(3), 0, steps=2048)
        gap = abs(scores.sum() - (sigmoid(2.1) - sigmoid(0.0)))
        assert gap < 1e-3

    def test_error_shrinks_when_steps_double(self):
        net = linear_net([0.7, 0.3, 1.1])
        x = np.array([1.0, 1.0, 1.0])
        target = sigmoid(2.1) - sigmoid(0.0)

        def gap(steps):
            return abs(
                d.integrated_gradients(net, x, np.zeros(3), 0, steps).sum() - target
            )

        assert gap(256) < gap(128) < gap(64)

    def test_input_equal_to_baseline_gives_zero(self):
        net = linear_net([0.5, 0.5])
        x = np.array([0.3, 0.9])
        scores = d.integrated_gradients(net, x, x, 0, steps=16)
        assert np.all(scores == 0.0)

    def test_zero_weight_feature_gets_zero_score(self):
        net = linear_net([1.0, 0.0])
        scores = d.integrated_gradients(
            net, np.array([1.0, 1.0]), np.zeros(2), 0, steps=64
        )
        assert scores[1] == 0.0
        assert scores[0] != 0.0

    def test_batch_rows_match_single_calls(self, trained):
        net, enc, dset = trained
        X = d.encode_dataset(enc, dset)[:5]
        B = np.zeros_like(X)
        batch = d.integrated_gradients(net, X, B, 0, steps=8)
        for i in range(5):
            single = d.integrated_gradients(net, X[i], B[i], 0, steps=8)
            assert np.allclose(batch[i], single, atol=1e-12)

    def test_invalid_steps(self):
        net = linear_net([1.0])
        with pytest.raises(ConfigError):
            d.integrated_gradients(net, np.ones(1), np.zeros(1), 0, steps=0)


class TestAggregate:
    def make_encoder(self):
        tuples = (
            d.AuthorizationTuple(0, 0, (0, 5), (2,), (1,)),
            d.AuthorizationTuple(1, 1, (1, 6), (3,), (1,)),
        )
        return d.build_encoder(d.Dataset(2, 1, 1, tuples))

    def test_blocks_sum_absolute_values_and_peak_is_one(self):
        enc = self.make_encoder()  # widths (3, 3, 3)
        f = np.array([0.5, -0.5, 0.0, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0])
        scores = d.aggregate(f, enc)
        assert scores == pytest.approx([1.0, 0.2, 0.0])

    def test_zero_block_stays_exactly_zero(self):
        enc = self.make_encoder()
        scores = d.aggregate(np.zeros(9), enc)
        assert np.all(scores == 0.0)

    def test_width_mismatch(self):
        with pytest.raises(ConfigError):
            d.aggregate(np.zeros(4), self.make_encoder())


class TestExplain:
    def test_local_scores_normalized(self, trained):
        net, enc, dset = trained
        store = d.build_store(dset)
        t = dset.tuples[0]
        attr = d.local_explain(net, enc, store, t.uid, t.rid, 0, steps=32)
        assert attr.metadata_scores.max() == pytest.approx(1.0)
        assert np.all(attr.metadata_scores >= 0.0)
        assert attr.metadata_names == ("umeta0", "umeta1", "umeta2", "umeta3",
                                       "rmeta0", "rmeta1", "rmeta2", "rmeta3")
        assert attr.baseline == "zero"

    def test_global_deterministic(self, trained):
        net, enc, dset = trained
        a = d.global_explain(net, enc, dset, 0, sample_n=20, seed=3, steps=16)
        b = d.global_explain(net, enc, dset, 0, sample_n=20, seed=3, steps=16)
        assert np.array_equal(a.metadata_scores, b.metadata_scores)

    def test_global_insufficient_class_members(self, trained):
        net, enc, dset = trained
        with pytest.raises(ConfigError, match="available"):
            d.global_explain(net, enc, dset, 0, sample_n=10 ** 6)

    def test_significance_order_sorted_descending(self, trained):
        net, enc, dset = trained
        attr = d.global_explain(net, enc, dset, 0, sample_n=20, steps=16)
        order = d.significance_order(attr)
        by_name = dict(zip(attr.metadata_names, attr.metadata_scores))
        ranked = [by_name[n] for n in order]
        assert ranked == sorted(ranked, reverse=True)
        assert sorted(order) == sorted(attr.metadata_names)


def network_grants(net, enc, t, op, threshold=0.5):
    return float(d.forward(net, d.encode_pair(enc, t.umeta, t.rmeta))[op]) > threshold


def pick_donor(net, enc, dset, op):
    for t in dset.tuples:
        if network_grants(net, enc, t, op):
            return t
    raise AssertionError("no granted tuple in fixture dataset")


class TestFlipStudy:
    def test_first_entry_zero_and_curve_in_unit_interval(self, trained):
        net, enc, dset = trained
        donor = pick_donor(net, enc, dset, 0)
        attr = d.global_explain(net, enc, dset, 0, sample_n=20, steps=16)
        curve = d.flip_study(net, enc, dset, 0, donor, d.significance_order(attr))
        assert curve.fractions[0] == 0.0
        assert all(0.0 <= f <= 1.0 for f in curve.fractions)
        assert len(curve.fractions) == len(curve.replaced) + 1

    def test_replacing_everything_reaches_one(self, trained):
        # after every column holds the donor's values, all rows equal the
        # donor row, which is granted by construction
        net, enc, dset = trained
        donor = pick_donor(net, enc, dset, 0)
        order = list(enc.names)
        curve = d.flip_study(net, enc, dset, 0, donor, order)
        assert curve.fractions[-1] == 1.0

    def test_denied_donor_rejected(self, trained):
        net, enc, dset = trained
        denied = next(
            t for t in dset.tuples if not network_grants(net, enc, t, 0)
        )
        with pytest.raises(ConfigError, match="donor"):
            d.flip_study(net, enc, dset, 0, denied, list(enc.names))


class TestInsignificance:
    def test_replacing_nothing_keeps_decision(self, trained):
        # score_threshold 0 replaces no metadata at all
        net, enc, dset = trained
        donor = pick_donor(net, enc, dset, 0)
        t = dset.tuples[0]
        assert d.insignificance_check(
            net, enc, t, donor, 0, score_threshold=0.0, steps=8
        )

    def test_full_replacement_moves_to_donor_decision(self, trained):
        # threshold above 1 replaces every column with the donor's values
        net, enc, dset = trained
        donor = pick_donor(net, enc, dset, 0)
        denied = next(t for t in dset.tuples if not network_grants(net, enc, t, 0))
        changed = not d.insignificance_check(
            net, enc, denied, donor, 0, score_threshold=1.1, steps=8
        )
        assert changed


class TestCsv:
    def test_attribution_csv(self, trained):
        net, enc, dset = trained
        store = d.build_store(dset)
        t = dset.tuples[0]
        attr = d.local_explain(net, enc, store, t.uid, t.rid, 0, steps=8)
        lines = attribution_to_csv(attr).strip().split("\n")
        assert lines[0] == "metadata_name,normalized_score"
        assert len(lines) == 1 + len(attr.metadata_names)
        name, score = lines[1].split(",")
        assert name == "umeta0"
        float(score)

    def test_flip_curve_csv(self):
        curve = d.FlipCurve(replaced=("umeta1", "rmeta0"), fractions=(0.0, 0.25, 1.0))
        text = flip_curve_to_csv(curve)
        assert text == (
            "step,metadata_replaced,fraction_granted\n"
            "0,,0.000000\n"
            "1,umeta1,0.250000\n"
            "2,rmeta0,1.000000\n"
        )
