import logging

import numpy as np
import pytest

from src.model_io import (
    ModelFormatError,
    ModelMismatchError,
    load_model,
    model_from_bytes,
    model_to_bytes,
    save_model,
)
from src.tensor_nn import Conv1D, Deconv1D, Dense, LayerGraph, MaxPool1D, ReLU, Sigmoid


@pytest.fixture
def model():
    layers = [Conv1D(4, 3), ReLU(), MaxPool1D(2, 2), Deconv1D(1, 3, 2), Sigmoid(), Dense(2, bias_init=0.25)]
    meta = {"role": "softdec", "file_type": "html", "k": 12, "p_dnn": 0.008}
    return LayerGraph(layers, (12, 1), init_seed=7, metadata=meta)


def test_save_and_load_preserve_outputs(tmp_path, model):
    path = save_model(model, tmp_path / "sub" / "m.nrnn")
    loaded = load_model(path)
    assert loaded.describe() == model.describe()
    assert loaded.metadata == model.metadata
    assert loaded.input_shape == model.input_shape
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert np.array_equal(a, b)
    x = np.random.default_rng(0).normal(size=(5, 12, 1))
    assert np.array_equal(model.predict(x), loaded.predict(x))


def test_bytes_are_stable(model):
    assert model_to_bytes(model) == model_to_bytes(model)


def test_corrupted_payload_is_rejected(model):
    data = bytearray(model_to_bytes(model))
    data[-40] ^= 0x01
    with pytest.raises(ModelFormatError, match="checksum"):
        model_from_bytes(bytes(data))


@pytest.mark.parametrize("data", [b"", b"XXXX" + b"\0" * 64])
def test_garbage_is_rejected(data):
    with pytest.raises(ModelFormatError):
        model_from_bytes(data)


def test_metadata_mismatch(tmp_path, model):
    path = save_model(model, tmp_path / "m.nrnn")
    with pytest.raises(ModelMismatchError, match="file_type"):
        load_model(path, expect={"file_type": "pdf"})
    with pytest.raises(ModelMismatchError, match="p_dnn"):
        load_model(path, expect={"p_dnn": 0.004})
    # None means "do not check"; floats compare with a tolerance
    load_model(path, expect={"file_type": None, "p_dnn": 0.008 + 1e-14, "k": 12})


def test_force_downgrades_mismatch_to_warning(tmp_path, model, caplog):
    path = save_model(model, tmp_path / "m.nrnn")
    with caplog.at_level(logging.WARNING):
        loaded = load_model(path, expect={"k": 4095}, force=True)
    assert loaded.metadata["k"] == 12
    assert "forzato" in caplog.text


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "none.nrnn")
