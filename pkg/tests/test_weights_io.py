"""Weights container format tests."""

import numpy as np
import pytest

from maskbench.net.models import build_unet33
from maskbench.net.training import toy_net_config
from maskbench.net.weights_io import MAGIC, WeightsFormatError, load_weights, save_weights


class TestContainer:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        tensors = {
            "a.weight": rng.standard_normal((3, 2, 3, 3)).astype(np.float32),
            "a.bias": rng.standard_normal(3).astype(np.float32),
            "scalar": np.float32(2.5).reshape(()),
        }
        path = tmp_path / "w.mbwt"
        save_weights(path, tensors)
        loaded = load_weights(path)
        assert list(loaded) == list(tensors)
        for name in tensors:
            assert loaded[name].shape == np.asarray(tensors[name]).shape
            np.testing.assert_array_equal(loaded[name], np.asarray(tensors[name], dtype=np.float32))

    def test_file_layout(self, tmp_path):
        path = tmp_path / "w.mbwt"
        save_weights(path, {"x": np.zeros(2, dtype=np.float32)})
        raw = path.read_bytes()
        assert raw[:4] == MAGIC
        assert raw[4:8] == b"\x01\x00\x00\x00"  # version 1, little-endian

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.mbwt"
        path.write_bytes(b"WXYZ" + b"\x00" * 16)
        with pytest.raises(WeightsFormatError, match="magic"):
            load_weights(path)

    def test_truncated_tensor(self, tmp_path):
        path = tmp_path / "trunc.mbwt"
        save_weights(path, {"x": np.ones((4, 4), dtype=np.float32)})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(WeightsFormatError, match="truncated"):
            load_weights(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v9.mbwt"
        save_weights(path, {})
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(WeightsFormatError, match="version"):
            load_weights(path)


class TestModelStateRoundTrip:
    def test_model_state_through_file(self, tmp_path):
        model = build_unet33(toy_net_config(seed=0))
        path = tmp_path / "model.mbwt"
        save_weights(path, model.state_tensors())
        fresh = build_unet33(toy_net_config(seed=9))
        fresh.load_state_tensors(load_weights(path))
        for (_, a), (_, b) in zip(model.state_tensors().items(), fresh.state_tensors().items()):
            np.testing.assert_array_equal(a, b)

    def test_missing_tensor_rejected(self, tmp_path):
        model = build_unet33(toy_net_config(seed=0))
        state = model.state_tensors()
        state.popitem()
        path = tmp_path / "partial.mbwt"
        save_weights(path, state)
        with pytest.raises(ValueError, match="missing"):
            model.load_state_tensors(load_weights(path))

    def test_shape_mismatch_rejected(self, tmp_path):
        model = build_unet33(toy_net_config(seed=0))
        state = dict(model.state_tensors())
        first = next(iter(state))
        state[first] = np.zeros((1, 1), dtype=np.float32)
        with pytest.raises(ValueError, match="shape"):
            model.load_state_tensors(state)
