import json
import math
import zipfile

import numpy as np
import pytest

from hatedetect.classifier import (
    HateClassifier,
    ModelConfig,
    TrainHistory,
    batch_loss,
    loss_and_grads,
    train,
)
from hatedetect.corpus import HATE, NON_HATE, split
from hatedetect.neural import AdamState, adam_step
from hatedetect.textprep import PipelineConfig

from conftest import FILLER_TOKENS, TRIGGER_TOKENS, make_keyword_examples, make_random_matrix


def small_config(**overrides):
    defaults = dict(
        embedding_dim=8,
        max_len=12,
        hidden_size=6,
        dense1_size=4,
        batch_size=16,
        epochs=2,
        learning_rate=3e-3,
        seed=0,
        pipeline=PipelineConfig(stopwords=frozenset(), max_len=12),
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


def small_model(seed=0, **overrides):
    config = small_config(seed=seed, **overrides)
    matrix = make_random_matrix([f"tok{i}" for i in range(10)], dim=8, seed=seed)
    return HateClassifier.build(config, matrix)


class TestBuild:
    def test_parameter_shapes_from_layer_arithmetic(self):
        config = ModelConfig(
            embedding_dim=300,
            max_len=50,
            hidden_size=128,
            dense1_size=64,
            pipeline=PipelineConfig(max_len=50),
        )
        matrix = make_random_matrix(["a", "b", "c"], dim=300, seed=0)
        model = HateClassifier.build(config, matrix)
        for direction in ("fwd", "bwd"):
            assert model.params[f"{direction}_w_in"].shape == (512, 300)
            assert model.params[f"{direction}_w_rec"].shape == (512, 128)
            assert model.params[f"{direction}_bias"].shape == (512,)
        assert model.params["dense1_weights"].shape == (64, 256)
        assert model.params["dense2_weights"].shape == (1, 64)
        assert model.params["embedding"].shape == (5, 300)

    def test_dimension_mismatch(self):
        config = small_config(embedding_dim=300)
        matrix = make_random_matrix(["a", "b"], dim=200, seed=0)
        with pytest.raises(ValueError, match="200"):
            HateClassifier.build(config, matrix)

    def test_equal_seed_equal_initial_weights(self):
        first = small_model(seed=4)
        second = small_model(seed=4)
        for name in first.params:
            assert np.array_equal(first.params[name], second.params[name])

    def test_different_seed_differs(self):
        first = small_model(seed=4)
        second = small_model(seed=5)
        assert not np.array_equal(first.params["fwd_w_in"], second.params["fwd_w_in"])


class TestPredict:
    def test_zeroed_output_layer_gives_exactly_half(self):
        model = small_model()
        model.params["dense2_weights"][:] = 0.0
        model.params["dense2_bias"][:] = 0.0
        probs = model.predict(["tok1 tok2", "", "unseen words"])
        assert np.all(probs == 0.5)

    def test_repeatable(self):
        model = small_model()
        a = model.predict(["tok1 tok2 tok3"])
        b = model.predict(["tok1 tok2 tok3"])
        assert np.array_equal(a, b)

    def test_batch_size_independent(self):
        model = small_model(seed=9)
        texts = [f"tok{i % 10} tok{(i + 3) % 10} tok{(i + 7) % 10}" for i in range(256)]
        batched = model.predict(texts)
        single = np.array([model.predict([t])[0] for t in texts[:16]])
        assert np.max(np.abs(batched[:16] - single)) < 1e-6

    def test_open_interval(self):
        model = small_model()
        probs = model.predict(["tok1", "tok2 tok3 tok4"])
        assert np.all((probs > 0.0) & (probs < 1.0))

    def test_empty_input(self):
        assert small_model().predict([]).shape == (0,)

    def test_flatten_sequence_representation(self):
        model = small_model(seed=6, sequence_repr="flatten")
        assert model.params["dense1_weights"].shape == (4, 2 * 6 * 12)
        probs = model.predict(["tok1 tok2", "tok3"])
        assert probs.shape == (2,)
        assert np.all((probs > 0.0) & (probs < 1.0))


class TestClassify:
    def with_fixed_probability(self, p):
        model = small_model()
        model.params["dense1_weights"][:] = 0.0
        model.params["dense1_bias"][:] = 0.0
        model.params["dense2_weights"][:] = 0.0
        model.params["dense2_bias"][:] = math.log(p / (1.0 - p))
        return model

    def test_boundary_is_hate(self):
        model = self.with_fixed_probability(0.5)
        assert model.predict(["whatever"])[0] == 0.5
        assert model.classify(["whatever"]) == [HATE]

    def test_below_threshold(self):
        model = self.with_fixed_probability(0.49)
        assert model.classify(["x"]) == [NON_HATE]

    def test_high_threshold(self):
        model = self.with_fixed_probability(0.8)
        assert model.classify(["x"], threshold=0.9) == [NON_HATE]
        assert model.classify(["x"], threshold=0.5) == [HATE]

    def test_threshold_validation(self):
        model = small_model()
        with pytest.raises(ValueError):
            model.classify(["x"], threshold=1.0)

    def test_raising_threshold_never_adds_hate(self):
        model = small_model(seed=2)
        texts = [f"tok{i % 10} tok{(i * 3) % 10}" for i in range(40)]
        previous_hate = None
        for threshold in (0.2, 0.4, 0.6, 0.8):
            hate_ids = {
                i for i, label in enumerate(model.classify(texts, threshold=threshold))
                if label == HATE
            }
            if previous_hate is not None:
                assert hate_ids <= previous_hate
            previous_hate = hate_ids


@pytest.fixture(scope="module")
def trained_setup():
    examples = make_keyword_examples(600, seed=8)
    pipeline = PipelineConfig(stopwords=frozenset(), max_len=20)
    matrix = make_random_matrix(
        list(FILLER_TOKENS) + list(TRIGGER_TOKENS), dim=8, seed=1
    )
    config = ModelConfig(
        embedding_dim=8,
        max_len=20,
        hidden_size=8,
        dense1_size=6,
        batch_size=32,
        epochs=6,
        learning_rate=5e-3,
        embeddings_trainable=True,
        seed=3,
        pipeline=pipeline,
    )
    bundle = split(examples, seed=3)
    model = HateClassifier.build(config, matrix)
    history, best = train(model, bundle)
    return bundle, config, matrix, history, best


class TestTrain:
    def test_history_length_matches_epochs(self, trained_setup):
        _, config, _, history, _ = trained_setup
        assert len(history.records) == config.epochs
        assert [r.epoch for r in history.records] == list(range(config.epochs))

    def test_learns_separable_data(self, trained_setup):
        bundle, _, _, history, best = trained_setup
        assert history.records[-1].validation_weighted_f1 >= 0.95
        texts = [e.text for e in bundle.test]
        predicted = best.classify(texts)
        actual = [e.binary_label for e in bundle.test]
        accuracy = sum(p == a for p, a in zip(predicted, actual)) / len(actual)
        assert accuracy >= 0.95

    def test_selected_epoch_minimizes_validation_loss(self, trained_setup):
        _, _, _, history, _ = trained_setup
        losses = [r.validation_loss for r in history.records]
        assert losses[history.selected_epoch] == min(losses)

    def test_identical_seeds_identical_checkpoints(self, tmp_path, trained_setup):
        bundle, config, matrix, _, first_best = trained_setup
        model = HateClassifier.build(config, matrix)
        _, second_best = train(model, bundle)
        for name in first_best.params:
            assert np.array_equal(first_best.params[name], second_best.params[name])
        first_best.save(tmp_path / "a.ckpt")
        second_best.save(tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_frozen_embeddings_unchanged(self):
        examples = make_keyword_examples(120, seed=1)
        matrix = make_random_matrix(list(FILLER_TOKENS) + list(TRIGGER_TOKENS), dim=8, seed=2)
        config = small_config(max_len=20, epochs=1, embeddings_trainable=False,
                              pipeline=PipelineConfig(stopwords=frozenset(), max_len=20))
        model = HateClassifier.build(config, matrix)
        before = model.params["embedding"].copy()
        train(model, split(examples, seed=0))
        assert np.array_equal(model.params["embedding"], before)

    def test_first_batch_loss_decreases_after_one_step(self):
        examples = make_keyword_examples(64, seed=6)
        for seed in range(10):
            model = small_model(seed=seed, max_len=20,
                                pipeline=PipelineConfig(stopwords=frozenset(), max_len=20))
            token_ids = model.encode_texts([e.text for e in examples])
            labels = np.array(
                [1.0 if e.binary_label == HATE else 0.0 for e in examples], dtype=np.float32
            )
            before = batch_loss(model.params, token_ids, labels, model.config)
            loss, grads = loss_and_grads(model.params, token_ids, labels, model.config)
            adam_step(model.params, grads, AdamState(learning_rate=model.config.learning_rate))
            after = batch_loss(model.params, token_ids, labels, model.config)
            assert after < before

    def test_empty_training_split_rejected(self, trained_setup):
        bundle, config, matrix, _, _ = trained_setup
        model = HateClassifier.build(config, matrix)
        empty = type(bundle)(
            train=[], validation=bundle.validation, test=bundle.test,
            ratios=bundle.ratios, seed=bundle.seed, stratified=bundle.stratified,
        )
        with pytest.raises(ValueError, match="training"):
            train(model, empty)


class TestCheckpoint:
    def test_roundtrip_predictions_bitwise(self, tmp_path, trained_setup):
        _, _, _, _, best = trained_setup
        texts = ["scum w00 w01", "w02 w03", "", "vermin trash"]
        before = best.predict(texts)
        path = tmp_path / "model.ckpt"
        best.save(path)
        loaded = HateClassifier.load(path)
        after = loaded.predict(texts)
        assert np.array_equal(before, after)
        assert loaded.config == best.config
        assert loaded.history == best.history

    def test_truncated_file_is_corrupt(self, tmp_path, trained_setup):
        _, _, _, _, best = trained_setup
        path = tmp_path / "model.ckpt"
        best.save(path)
        data = path.read_bytes()
        (tmp_path / "cut.ckpt").write_bytes(data[: len(data) // 2])
        with pytest.raises(ValueError, match="corrupt"):
            HateClassifier.load(tmp_path / "cut.ckpt")

    def test_garbage_file_is_corrupt(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"this is not an archive")
        with pytest.raises(ValueError, match="corrupt"):
            HateClassifier.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            HateClassifier.load(tmp_path / "absent.ckpt")

    def test_newer_major_version_refused(self, tmp_path, trained_setup):
        _, _, _, _, best = trained_setup
        path = tmp_path / "model.ckpt"
        best.save(path)
        with zipfile.ZipFile(path) as archive:
            manifest = json.loads(archive.read("manifest.json"))
            blob = archive.read("params.bin")
        manifest["format_version"] = "2.0"
        doctored = tmp_path / "future.ckpt"
        with zipfile.ZipFile(doctored, "w") as archive:
            archive.writestr("manifest.json", json.dumps(manifest))
            archive.writestr("params.bin", blob)
        with pytest.raises(ValueError, match="newer"):
            HateClassifier.load(doctored)

    def test_vocabulary_embedding_mismatch_rejected(self):
        model = small_model()
        params = {n: t.copy() for n, t in model.params.items()}
        params["embedding"] = params["embedding"][:-1]
        with pytest.raises(ValueError, match="inconsistency"):
            HateClassifier(model.config, model.vocab, params)


class TestModelConfig:
    def test_roundtrip(self):
        config = small_config(hidden_size=5, threshold=0.7)
        assert ModelConfig.from_dict(config.to_dict()) == config

    def test_validation(self):
        with pytest.raises(ValueError):
            small_config(threshold=0.0)
        with pytest.raises(ValueError):
            small_config(hidden_size=0)
        with pytest.raises(ValueError):
            small_config(dense1_activation="softmax")
        with pytest.raises(ValueError):
            small_config(sequence_repr="mean")

    def test_history_roundtrip(self, trained_setup):
        _, _, _, history, _ = trained_setup
        assert TrainHistory.from_dict(history.to_dict()) == history
