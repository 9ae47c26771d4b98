import numpy as np
import pytest

from rctsne.core import (
    DataMatrix,
    EmbedConfig,
    Embedding,
    LabelVector,
    SparseAffinity,
    ValidationError,
    validate_inputs,
)


def test_validate_ok():
    x = np.random.default_rng(0).normal(size=(10, 3))
    bundle = validate_inputs(x, np.arange(10) % 2, EmbedConfig(perplexity=3))
    assert bundle.data.n == 10
    assert bundle.labels.class_counts.tolist() == [5, 5]


def test_perplexity_too_large():
    x = np.zeros((10, 2)) + np.arange(10)[:, None]
    with pytest.raises(ValidationError, match="perplexity too large"):
        validate_inputs(x, None, EmbedConfig(perplexity=4))


def test_labels_required():
    x = np.arange(20.0).reshape(10, 2)
    with pytest.raises(ValidationError, match="labels required"):
        validate_inputs(x, None, EmbedConfig(method="rctsne", perplexity=3))
    with pytest.raises(ValidationError, match="labels required"):
        validate_inputs(x, None, EmbedConfig(method="ctsne", perplexity=3))


def test_dimension_mismatch():
    with pytest.raises(ValidationError, match="dimension mismatch"):
        validate_inputs(np.ones((10, 2)) * np.arange(10)[:, None], np.zeros(9, int), EmbedConfig(perplexity=3))


def test_non_finite():
    x = np.ones((5, 2))
    x[2, 1] = np.nan
    with pytest.raises(ValidationError, match="non-finite"):
        DataMatrix(x)


def test_label_out_of_range():
    with pytest.raises(ValidationError, match="label out of range"):
        LabelVector([0, 2, 2])
    with pytest.raises(ValidationError, match="label out of range"):
        LabelVector([-1, 0])


def test_validate_is_pure():
    x = np.random.default_rng(1).normal(size=(12, 2))
    cfg = EmbedConfig(perplexity=3)
    a = validate_inputs(x, None, cfg)
    b = validate_inputs(x, None, cfg)
    np.testing.assert_array_equal(a.data.values, b.data.values)
    assert a.config == b.config


def test_containers_are_immutable():
    d = DataMatrix(np.ones((3, 2)) * np.arange(3)[:, None])
    with pytest.raises(ValueError):
        d.values[0, 0] = 5.0
    with pytest.raises(Exception):
        d.values = np.zeros((3, 2))


def test_labels_from_values_first_appearance():
    lv = LabelVector.from_values(["b", "a", "b", "c"])
    assert lv.labels.tolist() == [0, 1, 0, 2]
    assert lv.names == ("b", "a", "c")


@pytest.mark.parametrize("bad", [dict(beta=0.0), dict(beta=1.5), dict(theta=-0.1),
                                 dict(method="umap"), dict(variance_mode="on_q"),
                                 dict(out_dim=3, theta=0.5), dict(epochs=0)])
def test_config_rejects(bad):
    with pytest.raises(ValidationError):
        EmbedConfig(**bad)


def test_config_round_trip():
    cfg = EmbedConfig(method="rctsne", beta=1e-20, theta=0.2, seed=7)
    assert EmbedConfig.from_dict(cfg.to_dict()) == cfg


def test_sparse_affinity_check():
    m = SparseAffinity(np.array([0, 1, 2]), np.array([1, 0]), np.array([0.5, 0.5]), 2)
    m.check()
    bad = SparseAffinity(np.array([0, 1, 2]), np.array([1, 0]), np.array([0.7, 0.3]), 2)
    with pytest.raises(ValidationError):
        bad.check()


def test_embedding_rejects_nan():
    with pytest.raises(ValidationError):
        Embedding(np.array([[0.0, np.inf]]))
