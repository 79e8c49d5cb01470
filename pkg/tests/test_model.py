import numpy as np
import pytest

from i2drnn.model import (ARCH_I2DRNN, ARCH_STACKED, ModelConfig, ModelParams,
                          assemble_input, encode_fine, forward_sample,
                          forward_sequence, forward_step, init_params,
                          load_params, save_params, stacked_forward_step,
                          zero_state)
from i2drnn.numerics import Rng


def hier_params(dims=(2, 2), input_dim=2, output_dim=1, seed=0):
    cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=dims, input_dim=input_dim,
                      output_dim=output_dim)
    return init_params(cfg, Rng(seed).split("init"))


def fill_constant(params, value):
    for _, arr in params.named_arrays():
        arr[...] = value
    return params


class TestConfigValidation:
    def test_rejects_unknown_arch(self):
        with pytest.raises(ValueError):
            ModelConfig(arch="GRU", layer_dims=(3,), input_dim=2, output_dim=1)

    def test_rejects_empty_layers(self):
        with pytest.raises(ValueError):
            ModelConfig(arch=ARCH_I2DRNN, layer_dims=(), input_dim=2,
                        output_dim=1)

    def test_rejects_encoder_without_fine(self):
        with pytest.raises(ValueError):
            ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3,), input_dim=4,
                        output_dim=1, encoder_dim=2, fine_dim=0)

    def test_layer_dims_coerced_to_ints(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3.0, 2.0),
                          input_dim=2, output_dim=1)
        assert cfg.layer_dims == (3, 2)
        assert cfg.num_layers == 2


class TestInit:
    def test_shapes_hierarchical(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(4, 3, 2), input_dim=5,
                          output_dim=6)
        p = init_params(cfg, Rng(1))
        assert p.feed[1].shape == (4, 5)
        assert p.feed[2].shape == (3, 4)
        assert p.feed[3].shape == (2, 3)
        # feedback from every layer i >= j
        assert set(p.rec) == {(1, 1), (2, 1), (3, 1), (2, 2), (3, 2), (3, 3)}
        assert p.rec[(3, 1)].shape == (4, 2)
        # every layer read out
        assert set(p.out) == {1, 2, 3}
        assert p.out[2].shape == (6, 3)

    def test_shapes_stacked(self):
        cfg = ModelConfig(arch=ARCH_STACKED, layer_dims=(4, 3), input_dim=5,
                          output_dim=2)
        p = init_params(cfg, Rng(1))
        assert set(p.rec) == {(1, 1), (2, 2)}
        assert set(p.out) == {2}

    def test_recurrent_spectral_radius(self):
        p = hier_params(dims=(5, 4))
        for (i, j), m in p.rec.items():
            s = float(np.linalg.svd(m, compute_uv=False)[0])
            want = 0.9 if i == j else 0.45
            assert s == pytest.approx(want, abs=1e-5)

    def test_biases_start_at_zero(self):
        p = hier_params()
        for b in p.bias.values():
            assert np.all(b == 0.0)

    def test_deterministic_per_seed(self):
        a = hier_params(seed=3)
        b = hier_params(seed=3)
        for (n1, x), (n2, y) in zip(a.named_arrays(), b.named_arrays()):
            assert n1 == n2
            np.testing.assert_array_equal(x, y)


class TestForwardStep:
    def test_hand_unrolled_two_layers(self):
        """Independent recomputation of two hierarchical steps."""
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2, 2), input_dim=2,
                          output_dim=1)
        p = ModelParams(cfg)
        F1 = np.array([[0.5, 0.0], [0.0, 0.5]])
        F2 = np.array([[0.3, 0.1], [0.0, 0.2]])
        W11 = np.array([[0.4, 0.0], [0.0, 0.4]])
        W21 = np.array([[0.1, 0.0], [0.0, 0.1]])
        W22 = np.array([[0.6, 0.0], [0.0, 0.6]])
        V1 = np.array([[1.0, -1.0]])
        V2 = np.array([[0.5, 0.5]])
        b1 = np.array([0.01, -0.02])
        b2 = np.array([0.0, 0.03])
        p.feed = {1: F1, 2: F2}
        p.rec = {(1, 1): W11, (2, 1): W21, (2, 2): W22}
        p.out = {1: V1, 2: V2}
        p.bias = {1: b1, 2: b2}

        x0 = np.array([1.0, -1.0])
        x1 = np.array([0.5, 0.5])
        h1_prev = np.zeros(2)
        h2_prev = np.zeros(2)
        for x in (x0, x1):
            h1 = np.tanh(F1 @ x + W11 @ h1_prev + W21 @ h2_prev + b1)
            h2 = np.tanh(F2 @ h1 + W22 @ h2_prev + b2)
            o = V1 @ h1 + V2 @ h2
            state, out = forward_step(p, x, [h1_prev, h2_prev])
            np.testing.assert_allclose(state[0], h1, atol=1e-14)
            np.testing.assert_allclose(state[1], h2, atol=1e-14)
            np.testing.assert_allclose(out, o, atol=1e-14)
            h1_prev, h2_prev = h1, h2

    def test_hand_unrolled_stacked(self):
        cfg = ModelConfig(arch=ARCH_STACKED, layer_dims=(2, 2), input_dim=2,
                          output_dim=2)
        p = ModelParams(cfg)
        F1 = np.array([[0.2, -0.1], [0.3, 0.0]])
        F2 = np.array([[0.1, 0.1], [-0.2, 0.4]])
        W11 = 0.5 * np.eye(2)
        W22 = 0.7 * np.eye(2)
        V2 = np.array([[1.0, 0.0], [0.0, 2.0]])
        p.feed = {1: F1, 2: F2}
        p.rec = {(1, 1): W11, (2, 2): W22}
        p.out = {2: V2}
        p.bias = {1: np.zeros(2), 2: np.zeros(2)}
        x = np.array([1.0, 2.0])
        s0 = [np.array([0.1, 0.2]), np.array([-0.1, 0.3])]
        h1 = np.tanh(F1 @ x + W11 @ s0[0])
        h2 = np.tanh(F2 @ h1 + W22 @ s0[1])
        state, out = stacked_forward_step(p, x, s0)
        np.testing.assert_allclose(state[0], h1, atol=1e-14)
        np.testing.assert_allclose(state[1], h2, atol=1e-14)
        np.testing.assert_allclose(out, V2 @ h2, atol=1e-14)

    def test_arch_mismatch_rejected(self):
        p = hier_params()
        with pytest.raises(ValueError):
            stacked_forward_step(p, np.zeros(2), zero_state(p.config))

    def test_input_shape_checked(self):
        p = hier_params()
        with pytest.raises(ValueError):
            forward_step(p, np.zeros(3), zero_state(p.config))


class TestForwardSequence:
    def test_matches_stepwise_composition(self):
        p = hier_params(dims=(3, 2), input_dim=2, output_dim=2, seed=9)
        X = Rng(4).normal((6, 2))
        trace = forward_sequence(p, X)
        state = zero_state(p.config)
        for t in range(6):
            state, o = forward_step(p, X[t], state)
            np.testing.assert_allclose(trace.outputs[t], o, atol=1e-14)
            for l in range(2):
                np.testing.assert_allclose(trace.h[l][t], state[l], atol=1e-14)

    def test_init_state_respected_and_copied(self):
        p = hier_params()
        X = np.zeros((2, 2))
        init = [np.full(2, 0.5), np.full(2, -0.5)]
        trace = forward_sequence(p, X, init=init)
        np.testing.assert_array_equal(trace.init[0], [0.5, 0.5])
        init[0][:] = 99.0  # mutating the caller's state must not leak
        np.testing.assert_array_equal(trace.init[0], [0.5, 0.5])
        zero_trace = forward_sequence(p, X)
        assert not np.allclose(trace.outputs[0], zero_trace.outputs[0])


class TestStructuralContainment:
    def test_zeroed_hierarchy_equals_stacked(self):
        """Cross-layer feedback and non-top readouts zeroed, both nets agree."""
        gen = Rng(77)
        for case in range(10):
            dims = tuple(int(d) for d in gen.split(f"d{case}").integers(2, 4, 2))
            hier_cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=dims,
                                   input_dim=3, output_dim=2)
            hier = init_params(hier_cfg, gen.split(f"p{case}"))
            for (i, j) in list(hier.rec):
                if i != j:
                    hier.rec[(i, j)][...] = 0.0
            for l in list(hier.out):
                if l != len(dims):
                    hier.out[l][...] = 0.0

            stack_cfg = ModelConfig(arch=ARCH_STACKED, layer_dims=dims,
                                    input_dim=3, output_dim=2)
            stack = ModelParams(stack_cfg)
            stack.feed = {j: hier.feed[j].copy() for j in hier.feed}
            stack.bias = {j: hier.bias[j].copy() for j in hier.bias}
            stack.rec = {(j, j): hier.rec[(j, j)].copy()
                         for j in range(1, len(dims) + 1)}
            stack.out = {len(dims): hier.out[len(dims)].copy()}

            X = gen.split(f"x{case}").normal((7, 3))
            a = forward_sequence(hier, X)
            b = forward_sequence(stack, X)
            np.testing.assert_allclose(a.outputs, b.outputs, atol=1e-15)
            for l in range(len(dims)):
                np.testing.assert_allclose(a.h[l], b.h[l], atol=1e-15)


class TestEncoder:
    def enc_params(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3,), input_dim=4,
                          output_dim=1, encoder_dim=2, fine_dim=3)
        return init_params(cfg, Rng(2))

    def test_encode_fine_hand_unrolled(self):
        p = self.enc_params()
        block = Rng(6).normal((4, 3))
        e = np.zeros(2)
        for s in range(4):
            e = np.tanh(p.enc_feed @ block[s] + p.enc_rec @ e + p.enc_bias)
        np.testing.assert_allclose(encode_fine(p, block), e, atol=1e-14)

    def test_encoder_absent_raises(self):
        p = hier_params()
        with pytest.raises(ValueError):
            encode_fine(p, np.zeros((2, 3)))

    def test_forward_sample_assembles_context(self):
        p = self.enc_params()
        T = 3
        same = Rng(1).normal((T, 1))
        coarse = Rng(2).normal((T, 1))
        fine = Rng(3).normal((T, 5, 3))
        trace = forward_sample(p, same, coarse, fine)
        for t in range(T):
            ctx = encode_fine(p, fine[t])
            want = np.concatenate([ctx, coarse[t], same[t]])
            np.testing.assert_allclose(trace.x[t], want, atol=1e-14)

    def test_forward_sample_requires_fine(self):
        p = self.enc_params()
        with pytest.raises(ValueError):
            forward_sample(p, np.zeros((3, 1)), np.zeros((3, 1)), None)


class TestAssembleInput:
    def test_order_context_coarse_same(self):
        x = assemble_input(np.array([1.0]), np.array([2.0, 3.0]),
                           np.array([4.0]), 4)
        np.testing.assert_array_equal(x, [1.0, 2.0, 3.0, 4.0])

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            assemble_input(None, None, np.zeros(3), 4)


class TestSerialization:
    def test_roundtrip_bitwise(self, tmp_path):
        for arch, dims in ((ARCH_I2DRNN, (3, 2)), (ARCH_STACKED, (2, 2, 2))):
            cfg = ModelConfig(arch=arch, layer_dims=dims, input_dim=2,
                              output_dim=2, encoder_dim=0)
            p = init_params(cfg, Rng(5))
            path = tmp_path / f"{arch}.json"
            save_params(p, path)
            q = load_params(path)
            assert q.config == p.config
            for (n1, a), (n2, b) in zip(p.named_arrays(), q.named_arrays()):
                assert n1 == n2
                np.testing.assert_array_equal(a, b)

    def test_roundtrip_with_encoder(self, tmp_path):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3,), input_dim=4,
                          output_dim=1, encoder_dim=2, fine_dim=3)
        p = init_params(cfg, Rng(2))
        save_params(p, tmp_path / "m.json")
        q = load_params(tmp_path / "m.json")
        np.testing.assert_array_equal(p.enc_feed, q.enc_feed)
        np.testing.assert_array_equal(p.enc_rec, q.enc_rec)

    def test_save_is_deterministic(self, tmp_path):
        p = hier_params(seed=4)
        save_params(p, tmp_path / "a.json")
        save_params(p, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestNamedArrays:
    def test_every_weight_listed_once(self):
        p = hier_params(dims=(2, 3))
        names = [n for n, _ in p.named_arrays()]
        assert len(names) == len(set(names))
        assert set(names) == {"feed_1", "feed_2", "rec_1_1", "rec_2_1",
                              "rec_2_2", "out_1", "out_2", "bias_1", "bias_2"}

    def test_zeros_like_matches_shapes(self):
        p = hier_params()
        z = p.zeros_like()
        for (n1, a), (n2, b) in zip(p.named_arrays(), z.named_arrays()):
            assert n1 == n2 and a.shape == b.shape
            assert np.all(b == 0.0)
