"""Model-level contracts: skip paths, attention identities, shapes, init."""

import numpy as np
import pytest

from han_sr import ops
from han_sr.model import (ConfigError, ModelConfig, csam_forward, han_forward,
                          init_params, lam_forward, layer_correlation,
                          rcab_forward, residual_group_forward, super_resolve)
from han_sr.optim import AdamState, adam_step
from han_sr.tensor import Tape, Tensor

from gradcheck import check_gradients

TOY = ModelConfig(n_groups=2, n_blocks=2, channels=16, reduction=4, scale=2)


def toy_params(seed=0, dtype=np.float64, cfg=TOY):
    return init_params(cfg, seed, dtype=dtype)


def zero_convs(params, prefix):
    for name, tensor in params.named():
        if name.startswith(prefix) and (name.endswith(".w") or name.endswith(".b")):
            tensor.data[:] = 0.0


class TestRcab:
    def test_zero_weights_is_identity(self, rng):
        params = toy_params()
        zero_convs(params, "rg0.rcab0")
        x = Tensor(rng.random((2, 16, 6, 6)))
        out = rcab_forward(x, params, "rg0.rcab0")
        np.testing.assert_array_equal(out.data, x.data)

    def test_channel_gate_in_unit_interval(self, rng):
        params = toy_params(seed=3)
        x = Tensor(rng.random((1, 16, 6, 6)))
        body = ops.relu(ops.conv2d(x, params["rg0.rcab0.conv1.w"],
                                   params["rg0.rcab0.conv1.b"], padding=1))
        gate = ops.global_avg_pool(body)
        gate = ops.relu(ops.conv2d(gate, params["rg0.rcab0.ca1.w"],
                                   params["rg0.rcab0.ca1.b"]))
        gate = ops.sigmoid(ops.conv2d(gate, params["rg0.rcab0.ca2.w"],
                                      params["rg0.rcab0.ca2.b"]))
        assert np.all(gate.data > 0.0) and np.all(gate.data < 1.0)

    def test_gradients(self):
        rng = np.random.default_rng(0)
        cfg = ModelConfig(n_groups=1, n_blocks=1, channels=4, reduction=2, scale=2)
        params = toy_params(cfg=cfg)
        names = ["rg0.rcab0.conv1.w", "rg0.rcab0.conv1.b",
                 "rg0.rcab0.conv2.w", "rg0.rcab0.conv2.b",
                 "rg0.rcab0.ca1.w", "rg0.rcab0.ca1.b",
                 "rg0.rcab0.ca2.w", "rg0.rcab0.ca2.b"]

        def op(x, *tensors):
            return rcab_forward(x, _DictParams(dict(zip(names, tensors))),
                                "rg0.rcab0")

        arrays = [rng.standard_normal((1, 4, 5, 5))] + \
            [params[n].data.copy() for n in names]
        check_gradients(op, arrays, tol=1e-4)


class _DictParams:
    def __init__(self, tensors):
        self._tensors = tensors

    def __getitem__(self, name):
        return self._tensors[name]


class TestResidualGroup:
    def test_zero_weights_is_identity(self, rng):
        params = toy_params()
        zero_convs(params, "rg1")
        x = Tensor(rng.random((1, 16, 8, 8)))
        out = residual_group_forward(x, params, "rg1", TOY.n_blocks)
        np.testing.assert_array_equal(out.data, x.data)

    @pytest.mark.parametrize("hw", [(8, 8), (9, 13)])
    def test_shape_preserved(self, rng, hw):
        params = toy_params()
        x = Tensor(rng.random((2, 16, *hw)))
        out = residual_group_forward(x, params, "rg0", TOY.n_blocks)
        assert out.shape == x.shape

    def test_sequential_groups_build_the_stack(self, rng):
        params = toy_params()
        f = Tensor(rng.random((2, 16, 8, 8)))
        feats = []
        for i in range(TOY.n_groups):
            f = residual_group_forward(f, params, f"rg{i}", TOY.n_blocks)
            feats.append(f)
        stacked = ops.permute(ops.stack(feats), (1, 0, 2, 3, 4))
        assert stacked.shape == (2, TOY.n_groups, 16, 8, 8)


class TestLam:
    def test_alpha_zero_is_identity(self, rng):
        stack = Tensor(rng.random((2, 3, 4, 5, 6)).astype(np.float32))
        out = lam_forward(stack, Tensor(np.zeros(1, np.float32)))
        assert np.array_equal(out.data, stack.data)

    def test_single_group_scales_by_one_plus_alpha(self, rng):
        stack = Tensor(rng.random((1, 1, 3, 4, 4)))
        alpha = Tensor(np.array([0.5]))
        out = lam_forward(stack, alpha)
        np.testing.assert_allclose(out.data, 1.5 * stack.data, rtol=1e-12)

    def test_correlation_rows_sum_to_one(self, rng):
        m = Tensor(rng.standard_normal((5, 24)))
        corr = layer_correlation(m)
        assert corr.shape == (5, 5)
        np.testing.assert_allclose(corr.data.sum(axis=1), 1.0, atol=1e-6)

    def test_gradients(self):
        rng = np.random.default_rng(0)
        check_gradients(
            lambda s, a: lam_forward(s, a),
            [rng.standard_normal((1, 3, 2, 3, 3)), np.array([0.3])],
            tol=1e-4)


class TestCsam:
    def test_beta_zero_is_identity(self, rng):
        params = toy_params(dtype=np.float32)
        x = Tensor(rng.random((2, 16, 5, 5)).astype(np.float32))
        out = csam_forward(x, Tensor(np.zeros(1, np.float32)),
                           params["csam0.conv.w"], params["csam0.conv.b"])
        assert np.array_equal(out.data, x.data)

    def test_attention_in_unit_interval(self, rng):
        params = toy_params()
        x = Tensor(rng.random((1, 16, 5, 5)))
        vol = ops.reshape(x, (1, 1, 16, 5, 5))
        att = ops.sigmoid(ops.conv3d(vol, params["csam0.conv.w"],
                                     params["csam0.conv.b"], padding=1))
        assert np.all(att.data > 0.0) and np.all(att.data < 1.0)

    def test_gradients(self):
        rng = np.random.default_rng(1)
        check_gradients(
            csam_forward,
            [rng.standard_normal((1, 4, 4, 4)), np.array([0.2]),
             rng.standard_normal((1, 1, 3, 3, 3)) * 0.3,
             rng.standard_normal(1) * 0.1],
            tol=1e-4)


class TestHanForward:
    @pytest.mark.parametrize("scale", [2, 3, 4, 8])
    @pytest.mark.parametrize("hw", [(8, 8), (16, 12)])
    def test_output_shape(self, rng, scale, hw):
        cfg = ModelConfig(n_groups=2, n_blocks=1, channels=8, reduction=4,
                          scale=scale)
        params = init_params(cfg, 0)
        x = Tensor(rng.random((2, 3, *hw)).astype(np.float32))
        out = han_forward(x, params, cfg)
        assert out.shape == (2, 3, scale * hw[0], scale * hw[1])

    def test_identity_at_init_matches_ablated_network(self, rng):
        params = init_params(TOY, 5)
        x = Tensor(rng.random((2, 3, 10, 10)).astype(np.float32))
        full = han_forward(x, params, TOY)
        for use_lam, use_csam in [(False, True), (True, False), (False, False)]:
            cfg = ModelConfig(n_groups=2, n_blocks=2, channels=16, reduction=4,
                              scale=2, use_lam=use_lam, use_csam=use_csam)
            ablated = han_forward(x, params, cfg)
            assert np.array_equal(full.data, ablated.data), \
                f"init output differs with use_lam={use_lam}, use_csam={use_csam}"

    def test_csam_count_gates_trailing_groups(self, rng):
        cfg = ModelConfig(n_groups=3, n_blocks=1, channels=8, reduction=4,
                          scale=2, csam_count=2)
        params = init_params(cfg, 2)
        x = Tensor(rng.random((1, 3, 8, 8)).astype(np.float32))
        out = han_forward(x, params, cfg)
        assert out.shape == (1, 3, 16, 16)
        assert "csam1.beta" in params and "csam2.beta" not in params

    def test_unsupported_scale_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig(scale=5).validate()

    def test_small_input_rejected(self, rng):
        params = init_params(TOY, 0)
        with pytest.raises(ValueError):
            han_forward(Tensor(rng.random((1, 3, 4, 4)).astype(np.float32)),
                        params, TOY)

    def test_super_resolve_clips_to_unit_interval(self, rng):
        params = init_params(TOY, 0)
        out = super_resolve(params, TOY, rng.random((3, 9, 9)).astype(np.float32))
        assert out.shape == (3, 18, 18)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestInitParams:
    def test_deterministic_under_seed(self):
        a = init_params(TOY, 42)
        b = init_params(TOY, 42)
        for (name, ta), (_, tb) in zip(a.named(), b.named()):
            assert np.array_equal(ta.data, tb.data), name

    def test_different_seed_differs(self):
        a = init_params(TOY, 0)
        b = init_params(TOY, 1)
        assert not np.array_equal(a["head.w"].data, b["head.w"].data)

    def test_attention_gates_start_at_zero(self):
        params = init_params(TOY, 9)
        assert params["lam.alpha"].data[0] == 0.0
        assert params["csam0.beta"].data[0] == 0.0

    def test_parameter_count_closed_form(self):
        n, b, c, r = 2, 2, 16, 4
        head = 3 * c * 9 + c
        rcab = 2 * (c * c * 9 + c) + (c * (c // r) + c // r) + ((c // r) * c + c)
        group = b * rcab + (c * c * 9 + c)
        upsample = c * (c * 4) * 9 + c * 4          # one x2 stage
        tail = c * 3 * 9 + 3
        expected = head + n * group + 1 + (1 + 27 + 1) + upsample + tail
        assert init_params(TOY, 0).count() == expected

    def test_count_scales_with_csam_count(self):
        cfg1 = ModelConfig(n_groups=3, n_blocks=1, channels=8, reduction=4,
                           scale=2, csam_count=1)
        cfg3 = ModelConfig(n_groups=3, n_blocks=1, channels=8, reduction=4,
                           scale=2, csam_count=3)
        assert init_params(cfg3, 0).count() - init_params(cfg1, 0).count() == 2 * 29


class TestTraining:
    def test_loss_decreases_over_five_small_steps(self, rng):
        cfg = ModelConfig(n_groups=2, n_blocks=1, channels=8, reduction=4, scale=2)
        params = init_params(cfg, 7)
        x = Tensor(rng.random((2, 3, 10, 10)).astype(np.float32))
        target = Tensor(rng.random((2, 3, 20, 20)).astype(np.float32))
        state = AdamState(lr=1e-5)
        losses = []
        for _ in range(5):
            with Tape() as tape:
                loss = ops.l1_loss(han_forward(x, params, cfg), target)
            tape.backward(loss)
            tensors = params.tensors()
            adam_step(tensors, [t.grad for t in tensors], state)
            params.zero_grad()
            losses.append(loss.item())
        assert all(b < a for a, b in zip(losses, losses[1:])), losses
