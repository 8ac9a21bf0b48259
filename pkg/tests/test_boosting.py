"""The training loop, ensemble prediction, and the model document format."""

import json
import math

import numpy as np
import pytest

from mvsboost.boosting import (
    BoostParams,
    Ensemble,
    TrainEvent,
    load_model,
    model_from_text,
    model_to_text,
    predict,
    save_model,
    train,
)
from mvsboost.errors import (
    ModelFormatError,
    MVSBoostError,
    UnsupportedModelVersion,
)
from mvsboost.losses import LOGLOSS, SQUARED_ERROR, derivatives, mean_loss
from mvsboost.sampling import SamplingConfig
from mvsboost.tree import TreeParams

from conftest import binned_of, make_classification_data, make_regression_data
from oracles import predict_tree_by_dict


def small_params(**kwargs):
    defaults = dict(loss_kind=SQUARED_ERROR, n_iterations=10,
                    learning_rate=0.3, tree=TreeParams(max_depth=3),
                    sampling=SamplingConfig(strategy="mvs", sample_rate=0.7))
    defaults.update(kwargs)
    return BoostParams(**defaults)


class TestBoostParams:
    @pytest.mark.parametrize("field, value", [
        ("loss_kind", "hinge"),
        ("n_iterations", 0),
        ("learning_rate", 0.0),
        ("learning_rate", 1.5),
        ("order", "third"),
    ])
    def test_bad_values_rejected(self, field, value):
        params = small_params(**{field: value})
        with pytest.raises(MVSBoostError):
            params.validate()

    def test_nested_configs_validated(self):
        params = small_params(sampling=SamplingConfig(sample_rate=2.0))
        with pytest.raises(MVSBoostError):
            params.validate()


class TestTrain:
    def test_training_reduces_loss(self):
        X, y = make_regression_data()
        binned = binned_of(X, y)
        params = small_params(n_iterations=30)
        losses = []
        train(binned, y, params, seed=0,
              observer=lambda e: losses.append(e.info["train_loss"])
              if e.stage == "iteration_end" else None)
        assert losses[-1] < 0.5 * losses[0]

    def test_target_shape_checked(self):
        X, y = make_regression_data(n_rows=50)
        binned = binned_of(X, y)
        with pytest.raises(MVSBoostError, match="shape"):
            train(binned, y[:-1], small_params())

    def test_logloss_requires_binary_targets(self):
        X, y = make_regression_data(n_rows=50)
        binned = binned_of(X, y)
        with pytest.raises(MVSBoostError, match="targets"):
            train(binned, y, small_params(loss_kind=LOGLOSS))

    def test_stage_sequence_per_iteration(self):
        """Each iteration reports every pipeline stage, in pipeline order."""
        X, y = make_classification_data(n_rows=120)
        binned = binned_of(X, y)
        events = []
        params = small_params(loss_kind=LOGLOSS, n_iterations=3)
        train(binned, y, params, seed=1, observer=events.append)

        expected_stages = ["predictions", "derivatives",
                           "regularized_gradients", "threshold",
                           "probabilities", "weights", "select",
                           "train_tree", "append", "iteration_end"]
        for m in range(3):
            stages = [e.stage for e in events if e.iteration == m]
            assert stages == expected_stages

        end = [e for e in events if e.stage == "iteration_end"][0]
        assert set(end.info) == {"n_sampled", "sampled_fraction", "mu", "lam",
                                 "train_loss"}
        assert 0 < end.info["sampled_fraction"] <= 1.0
        assert end.info["mu"] > 0
        assert end.info["lam"] == pytest.approx(0.1)

    def test_sampling_free_strategies_skip_threshold_stages(self):
        X, y = make_regression_data(n_rows=100)
        binned = binned_of(X, y)
        events = []
        params = small_params(n_iterations=2,
                              sampling=SamplingConfig(strategy="sgb",
                                                      sample_rate=0.5))
        train(binned, y, params, seed=0, observer=events.append)
        stages = {e.stage for e in events}
        assert "threshold" not in stages
        assert "select" in stages

    def test_first_order_mode_uses_unit_hessians(self):
        """order="first" must behave as if every hessian were one."""
        X, y = make_classification_data(n_rows=200, seed=5)
        binned = binned_of(X, y)
        params = small_params(loss_kind=LOGLOSS, n_iterations=5, order="first")
        first = train(binned, y, params, seed=3)

        # reference: a squared-error-style run cannot reproduce logloss
        # derivatives, so check directly that hessian-driven quantities match
        # the unit-hessian formula on the first iteration's root leaf
        mus = []
        params_probe = small_params(loss_kind=LOGLOSS, n_iterations=1,
                                    order="first",
                                    sampling=SamplingConfig(strategy="mvs",
                                                            sample_rate=0.7,
                                                            mvs_lambda=0.3))
        train(binned, y, params_probe, seed=3,
              observer=lambda e: mus.append(e.info["mu"])
              if e.stage == "iteration_end" else None)
        gh = derivatives(LOGLOSS, y, np.full(y.size, first.initial))
        from mvsboost.sampling import threshold_by_sort
        expected_ghat = np.hypot(gh.g, math.sqrt(0.3) * np.ones(y.size))
        expected_mu = threshold_by_sort(expected_ghat, 0.7)
        assert mus[0] == pytest.approx(expected_mu, rel=1e-9)

    def test_incremental_predictions_match_final_model(self):
        X, y = make_regression_data(n_rows=150)
        binned = binned_of(X, y)
        params = small_params(n_iterations=8)
        ensemble = train(binned, y, params, seed=2)
        final_loss = mean_loss(SQUARED_ERROR, y, predict(ensemble, X))

        reported = []
        train(binned, y, params, seed=2,
              observer=lambda e: reported.append(e.info["train_loss"])
              if e.stage == "iteration_end" else None)
        assert reported[-1] == pytest.approx(final_loss, rel=1e-12)

    def test_deterministic_given_seed(self):
        X, y = make_classification_data()
        binned = binned_of(X, y)
        params = small_params(loss_kind=LOGLOSS)
        a = train(binned, y, params, seed=11)
        b = train(binned, y, params, seed=11)
        assert model_to_text(a) == model_to_text(b)

    def test_different_seeds_differ(self):
        X, y = make_classification_data()
        binned = binned_of(X, y)
        params = small_params(loss_kind=LOGLOSS)
        a = train(binned, y, params, seed=1)
        b = train(binned, y, params, seed=2)
        assert model_to_text(a) != model_to_text(b)


class TestPredict:
    def setup_method(self):
        self.X, self.y = make_regression_data(n_rows=120)
        self.ensemble = train(binned_of(self.X, self.y), self.y,
                              small_params(), seed=0)

    def test_dimension_checks(self):
        with pytest.raises(MVSBoostError, match="2-d"):
            predict(self.ensemble, np.zeros(5))
        with pytest.raises(MVSBoostError, match="mismatch"):
            predict(self.ensemble, np.zeros((5, 99)))

    def test_probability_output_requires_logloss(self):
        with pytest.raises(MVSBoostError, match="logloss"):
            predict(self.ensemble, self.X, output="prob")
        with pytest.raises(MVSBoostError, match="output"):
            predict(self.ensemble, self.X, output="scores")

    def test_probability_is_sigmoid_of_raw(self):
        X, y = make_classification_data(n_rows=100)
        ensemble = train(binned_of(X, y), y,
                         small_params(loss_kind=LOGLOSS), seed=0)
        raw = predict(ensemble, X)
        prob = predict(ensemble, X, output="prob")
        np.testing.assert_allclose(prob, 1.0 / (1.0 + np.exp(-raw)), rtol=1e-12)
        assert ((prob > 0) & (prob < 1)).all()


class TestModelFormat:
    def trained(self):
        X, y = make_regression_data(n_rows=80, n_features=3)
        return X, train(binned_of(X, y), y, small_params(n_iterations=4), seed=0)

    def test_roundtrip_preserves_predictions_exactly(self):
        X, ensemble = self.trained()
        clone = model_from_text(model_to_text(ensemble))
        np.testing.assert_array_equal(predict(ensemble, X), predict(clone, X))

    def test_serialization_is_stable(self):
        _, ensemble = self.trained()
        assert model_to_text(ensemble) == model_to_text(ensemble)

    def test_document_fields(self):
        _, ensemble = self.trained()
        doc = json.loads(model_to_text(ensemble))
        assert set(doc) == {"version", "loss", "alpha", "initial",
                            "bin_edges", "trees"}
        assert doc["version"] == 1
        assert doc["loss"] == SQUARED_ERROR
        assert len(doc["trees"]) == 4
        assert len(doc["bin_edges"]) == 3

    def test_tree_documents_evaluate_like_the_model(self):
        """Walking the serialized document reproduces ensemble scores."""
        X, ensemble = self.trained()
        doc = json.loads(model_to_text(ensemble))
        from mvsboost.data import bin_matrix
        bins = bin_matrix(X, ensemble.bin_edges)
        for i in range(0, X.shape[0], 7):
            row = [int(bins[j][i]) for j in range(len(bins))]
            total = doc["initial"] + doc["alpha"] * sum(
                predict_tree_by_dict(t, row) for t in doc["trees"])
            assert total == pytest.approx(predict(ensemble, X[i:i + 1])[0],
                                          rel=1e-12)

    def test_save_load_files(self, tmp_path):
        X, ensemble = self.trained()
        path = tmp_path / "model.json"
        save_model(ensemble, path)
        np.testing.assert_array_equal(predict(load_model(path), X),
                                      predict(ensemble, X))

    def test_malformed_document_names_offset(self):
        with pytest.raises(ModelFormatError, match="offset"):
            model_from_text("{not json")

    def test_wrong_version_rejected(self):
        _, ensemble = self.trained()
        doc = json.loads(model_to_text(ensemble))
        doc["version"] = 2
        with pytest.raises(UnsupportedModelVersion):
            model_from_text(json.dumps(doc))

    def test_missing_fields_rejected(self):
        with pytest.raises(ModelFormatError, match="missing"):
            model_from_text(json.dumps({"version": 1}))

    def test_non_object_document_rejected(self):
        with pytest.raises(ModelFormatError, match="object"):
            model_from_text("[1, 2]")

    def test_unknown_loss_rejected(self):
        _, ensemble = self.trained()
        doc = json.loads(model_to_text(ensemble))
        doc["loss"] = "hinge"
        with pytest.raises(ModelFormatError, match="loss"):
            model_from_text(json.dumps(doc))

    def test_corrupt_tree_nodes_rejected(self):
        base = {"version": 1, "loss": "squared_error", "alpha": 0.1,
                "initial": 0.0, "bin_edges": [[0.5]]}
        with pytest.raises(ModelFormatError, match="missing fields"):
            model_from_text(json.dumps({**base, "trees": [{"feature": 0}]}))
        with pytest.raises(ModelFormatError, match="unexpected fields"):
            model_from_text(json.dumps(
                {**base, "trees": [{"value": 1.0, "extra": 2}]}))

    def test_missing_model_file(self, tmp_path):
        with pytest.raises(ModelFormatError, match="cannot read"):
            load_model(tmp_path / "absent.json")
