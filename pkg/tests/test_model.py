import json

import numpy as np
import pytest

from errors import DataError, NumericalError, ShapeError
from learning.checkpoint import load_checkpoint, save_checkpoint
from learning.model import Adam, ModelParams, add_grads, backward, forward, init_params


def _zero_params(p, hidden, m):
    layers, width = [], p
    for size in hidden:
        layers.append((np.zeros((width, size)), np.zeros(size)))
        width = size
    return ModelParams(extractor=layers, predictor=(np.zeros((width, m)), np.zeros(m)))


class TestForward:
    def test_zero_params(self, rng):
        params = _zero_params(3, [4, 2], 1)
        Z, yhat = forward(params, rng.standard_normal((5, 3)))
        np.testing.assert_array_equal(Z, np.zeros((5, 2)))
        np.testing.assert_array_equal(yhat, np.zeros((5, 1)))

    def test_empty_extractor_is_affine(self, rng):
        W, b = rng.standard_normal((3, 2)), rng.standard_normal(2)
        params = ModelParams(extractor=[], predictor=(W, b))
        X = rng.standard_normal((6, 3))
        Z, yhat = forward(params, X)
        np.testing.assert_array_equal(Z, X)
        np.testing.assert_allclose(yhat, X @ W + b)

    def test_layer_by_layer(self, rng):
        params = init_params(3, [5, 4], 2, rng)
        X = rng.standard_normal((7, 3))
        h = X
        for W, b in params.extractor:
            h = np.tanh(h @ W + b)
        Z, yhat = forward(params, X)
        np.testing.assert_allclose(Z, h)
        np.testing.assert_allclose(yhat, h @ params.predictor[0] + params.predictor[1])

    def test_wrong_width(self, rng):
        params = init_params(3, [4], 1, rng)
        with pytest.raises(ShapeError):
            forward(params, rng.standard_normal((5, 2)))


class TestParams:
    def test_dims(self, rng):
        params = init_params(3, [6, 4], 2, rng)
        assert (params.input_dim, params.representation_dim, params.output_dim) == (3, 4, 2)
        assert [name for name, _ in params.named()] == [
            'extractor.0.W', 'extractor.0.b', 'extractor.1.W', 'extractor.1.b',
            'predictor.W', 'predictor.b',
        ]

    def test_init_is_seeded(self):
        a = init_params(3, [4], 1, np.random.default_rng(5))
        b = init_params(3, [4], 1, np.random.default_rng(5))
        for (_, x), (_, y) in zip(a.named(), b.named()):
            np.testing.assert_array_equal(x, y)

    def test_mismatched_layers(self):
        with pytest.raises(ShapeError):
            ModelParams(extractor=[(np.zeros((3, 4)), np.zeros(4))], predictor=(np.zeros((5, 1)), np.zeros(1)))

    def test_nonfinite(self):
        with pytest.raises(NumericalError):
            ModelParams(extractor=[], predictor=(np.full((2, 1), np.nan), np.zeros(1)))


class TestBackward:
    def test_matches_finite_differences(self, rng):
        params = init_params(3, [4, 3], 2, rng)
        X = rng.standard_normal((5, 3))
        target = rng.standard_normal((5, 2))
        # an extra representation term exercises the d_Z path
        C = rng.standard_normal((5, 3))

        def loss(p):
            Z, yhat = forward(p, X)
            return 0.5 * np.sum((yhat - target) ** 2) + np.sum(C * Z)

        Z, yhat, acts = forward(params, X, return_cache=True)
        grads = backward(params, acts, yhat - target, C)

        h = 1e-6
        arrays = params.to_dict()
        for name, arr in arrays.items():
            for idx in np.ndindex(arr.shape):
                plus = {k: v.copy() for k, v in arrays.items()}
                minus = {k: v.copy() for k, v in arrays.items()}
                plus[name][idx] += h
                minus[name][idx] -= h
                numeric = (loss(ModelParams.from_dict(plus)) - loss(ModelParams.from_dict(minus))) / (2 * h)
                assert grads[name][idx] == pytest.approx(numeric, rel=1e-5, abs=1e-7), name

    def test_no_upstream_gives_zero(self, rng):
        params = init_params(2, [3], 1, rng)
        _, _, acts = forward(params, rng.standard_normal((4, 2)), return_cache=True)
        for g in backward(params, acts, None, None).values():
            assert not g.any()

    def test_add_grads(self):
        a = {'w': np.ones(2)}
        b = {'w': np.full(2, 2.0)}
        np.testing.assert_array_equal(add_grads(a, b)['w'], [3.0, 3.0])
        np.testing.assert_array_equal(a['w'], [1.0, 1.0])


class TestAdam:
    def test_first_step_moves_by_lr(self):
        params = ModelParams(extractor=[], predictor=(np.array([[1.0], [-1.0]]), np.array([0.5])))
        opt = Adam(params, lr=0.1)
        grads = {'predictor.W': np.array([[2.0], [-3.0]]), 'predictor.b': np.array([0.0])}
        updated = opt.step(params, grads)
        # bias-corrected first step is lr * sign(g)
        np.testing.assert_allclose(updated.predictor[0], [[0.9], [-0.9]], atol=1e-6)
        np.testing.assert_allclose(updated.predictor[1], [0.5])
        np.testing.assert_array_equal(params.predictor[0], [[1.0], [-1.0]])

    def test_minimizes_quadratic(self):
        params = ModelParams(extractor=[], predictor=(np.array([[3.0]]), np.array([-2.0])))
        opt = Adam(params, lr=0.05)
        for _ in range(2000):
            W, b = params.predictor
            params = opt.step(params, {'predictor.W': 2 * W, 'predictor.b': 2 * b})
        assert abs(params.predictor[0][0, 0]) < 0.1
        assert abs(params.predictor[1][0]) < 0.1


class TestCheckpoint:
    def test_round_trip(self, rng, tmp_path):
        params = init_params(3, [4], 2, rng)
        path = tmp_path / 'run' / 'checkpoint.json'
        std = {'x': {'mean': [0.0, 1.0, 2.0], 'scale': [1.0, 1.0, 1.0]}}
        save_checkpoint(path, params, {'train': {'epochs': 1}}, standardization=std, seed=7)
        loaded, data = load_checkpoint(path)
        for (name, a), (_, b) in zip(params.named(), loaded.named()):
            np.testing.assert_array_equal(a, b, err_msg=name)
        assert data['seed'] == 7
        assert data['standardization'] == std
        assert data['config'] == {'train': {'epochs': 1}}

    def test_missing(self, tmp_path):
        with pytest.raises(DataError, match='not found'):
            load_checkpoint(tmp_path / 'nope.json')

    def test_wrong_format(self, tmp_path):
        path = tmp_path / 'other.json'
        path.write_text(json.dumps({'format': 'something-else', 'version': 1}))
        with pytest.raises(DataError, match='not a checkpoint'):
            load_checkpoint(path)

    def test_shape_mismatch(self, rng, tmp_path):
        path = tmp_path / 'checkpoint.json'
        save_checkpoint(path, init_params(2, [], 1, rng), {})
        data = json.loads(path.read_text())
        data['params']['predictor.W']['shape'] = [3, 1]
        path.write_text(json.dumps(data))
        with pytest.raises(DataError, match='predictor.W'):
            load_checkpoint(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'checkpoint.json'
        path.write_text('{not json')
        with pytest.raises(DataError):
            load_checkpoint(path)
