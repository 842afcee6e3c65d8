"""Transformer policy: forward contract, analytic gradients, serialization."""

import numpy as np
import pytest

from consultnav.domain import StateActionPair
from consultnav.errors import ConfigError, ParseError, UnsupportedVersionError
from consultnav.policy import (
    PolicyConfig,
    init_policy,
    forward,
    load_checkpoint,
    log_prob_and_grad,
    save_checkpoint,
    top_actions,
    trainable_names,
)

from fd_utils import fd_gradients, float64_params, max_relative_error

TOY = PolicyConfig(n_symbols=5, embed_dim=8, n_layers=1, n_heads=2, ff_dim=16, max_window=4, seed=7)


def random_batch(rng, cfg, size=3):
    batch = []
    for _ in range(size):
        length = int(rng.integers(1, cfg.max_window + 1))
        state = tuple(int(s) for s in rng.integers(0, cfg.n_symbols, size=length))
        batch.append(StateActionPair(state, int(rng.integers(0, cfg.n_symbols)), "c", 0))
    return batch


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_policy(TOY)
        b = init_policy(TOY)
        assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)

    def test_different_seed_differs(self):
        a = init_policy(TOY)
        b = init_policy(PolicyConfig(**{**TOY.to_dict(), "seed": 8}))
        assert any(not np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)

    def test_head_dim_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            PolicyConfig(n_symbols=5, embed_dim=6, n_heads=4)

    def test_norm_layers_start_at_identity(self):
        params = init_policy(TOY)
        assert np.all(params.tensors["layers.0.attn_norm_scale"] == 1)
        assert np.all(params.tensors["layers.0.ff_norm_offset"] == 0)


class TestForward:
    def test_distribution_sums_to_one(self):
        params = init_policy(TOY)
        rng = np.random.default_rng(0)
        for _ in range(20):
            state = [int(s) for s in rng.integers(0, 5, size=int(rng.integers(1, 5)))]
            probs = forward(params, state)
            assert probs.shape == (5,)
            assert np.all(probs > 0)
            assert probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_zeroed_classifier_gives_exact_uniform(self):
        params = init_policy(TOY)
        params.tensors["head_weight"][:] = 0
        params.tensors["head_bias"][:] = 0
        assert np.array_equal(forward(params, [3]), np.full(5, 0.2))

    def test_input_validation(self):
        params = init_policy(TOY)
        with pytest.raises(ValueError):
            forward(params, [])
        with pytest.raises(ValueError):
            forward(params, [5])
        with pytest.raises(ValueError):
            forward(params, [0, 1, 2, 3, 4])

    def test_deterministic(self):
        params = init_policy(TOY)
        assert np.array_equal(forward(params, [1, 2]), forward(params, [1, 2]))


class TestPadInvariance:
    def test_output_independent_of_window_length(self):
        # Same seed => identical trainable weights; only the pad amount differs.
        short = init_policy(TOY)
        long = init_policy(PolicyConfig(**{**TOY.to_dict(), "max_window": 8}))
        for name in trainable_names(TOY):
            assert np.array_equal(short.tensors[name], long.tensors[name])
        rng = np.random.default_rng(1)
        for _ in range(20):
            state = [int(s) for s in rng.integers(0, 5, size=int(rng.integers(1, 5)))]
            np.testing.assert_allclose(forward(short, state), forward(long, state), atol=1e-12)

    def test_single_symptom_matches_unpadded_reference(self):
        # max_window=1 admits no padding at all: the unpadded reference model.
        reference = init_policy(PolicyConfig(**{**TOY.to_dict(), "max_window": 1}))
        padded = init_policy(TOY)
        for s in range(5):
            np.testing.assert_allclose(forward(reference, [s]), forward(padded, [s]), atol=1e-12)


class TestLogProbAndGrad:
    def test_uniform_policy_loss_is_log_n(self):
        cfg = PolicyConfig(n_symbols=83, embed_dim=8, n_layers=1, n_heads=2, ff_dim=16, max_window=4)
        params = init_policy(cfg)
        params.tensors["head_weight"][:] = 0
        params.tensors["head_bias"][:] = 0
        batch = [StateActionPair((1, 2), 3, "c", 0), StateActionPair((4,), 7, "c", 0)]
        loss, _ = log_prob_and_grad(params, batch, np.ones(2))
        assert loss == pytest.approx(np.log(83), abs=1e-12)

    def test_zero_weights_annihilate(self):
        params = init_policy(TOY)
        batch = random_batch(np.random.default_rng(2), TOY)
        loss, grads = log_prob_and_grad(params, batch, np.zeros(len(batch)))
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads.values())

    def test_nonfinite_weight_rejected(self):
        params = init_policy(TOY)
        batch = random_batch(np.random.default_rng(3), TOY)
        with pytest.raises(ValueError):
            log_prob_and_grad(params, batch, [1.0, np.inf, 1.0])

    def test_empty_batch_rejected(self):
        params = init_policy(TOY)
        with pytest.raises(ValueError):
            log_prob_and_grad(params, [], [])

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        for trial in range(5):
            cfg = PolicyConfig(
                n_symbols=5, embed_dim=8, n_layers=1, n_heads=2, ff_dim=8,
                max_window=3, seed=trial,
            )
            params = float64_params(cfg)
            batch = random_batch(rng, cfg)
            weights = rng.uniform(0.1, 2.0, size=len(batch))
            _, analytic = log_prob_and_grad(params, batch, weights)
            numeric = fd_gradients(lambda p: log_prob_and_grad(p, batch, weights)[0], params)
            assert max_relative_error(analytic, numeric) < 1e-6


class TestTopActions:
    def test_ties_broken_by_lower_index(self):
        probs = np.array([0.2, 0.3, 0.2, 0.3])
        assert top_actions(probs, 3) == [1, 3, 0]

    def test_k_larger_than_n(self):
        probs = np.array([0.5, 0.5])
        assert top_actions(probs, 5) == [0, 1]


class TestCheckpoint:
    def test_roundtrip_bit_exact_and_forward_identical(self, tmp_path):
        params = init_policy(TOY)
        path = tmp_path / "p.ckpt"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.config == TOY
        assert all(np.array_equal(params.tensors[k], loaded.tensors[k]) for k in params.tensors)
        assert np.array_equal(forward(params, [1, 2, 3]), forward(loaded, [1, 2, 3]))

    def test_double_roundtrip_identical_bytes(self, tmp_path):
        params = init_policy(TOY)
        first = tmp_path / "a.ckpt"
        second = tmp_path / "b.ckpt"
        save_checkpoint(params, first)
        save_checkpoint(load_checkpoint(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_unsupported_version_rejected(self, tmp_path):
        params = init_policy(TOY)
        path = tmp_path / "v99.ckpt"
        save_checkpoint(params, path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedVersionError):
            load_checkpoint(path)

    def test_truncated_file_rejected(self, tmp_path):
        params = init_policy(TOY)
        path = tmp_path / "t.ckpt"
        save_checkpoint(params, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        params = init_policy(TOY)
        path = tmp_path / "x.ckpt"
        save_checkpoint(params, path)
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(ParseError):
            load_checkpoint(path)
