# Third-party
from astropy.utils.exceptions import AstropyUserWarning
import numpy as np
import pytest

# Project
from .. import numcore as nc
from ..config import ExperimentConfig
from ..numcore import Tensor, backward, gradcheck, DimensionError
from ..nnblocks import (Block, Linear, MultiHeadSelfAttention,
                        TransformerStack, position_table, position_embed,
                        BinaryQuantizer, ConvEncoder, ConvCodec)


def _zero_residual_branches(stack):
    for layer in stack.layers:
        layer.attn.w_o.zero_()
        layer.mlp.fc2.zero_()


def test_position_table():
    table = position_table(8, 6)
    assert table.shape == (8, 6)
    assert np.array_equal(table[0], [0., 1., 0., 1., 0., 1.])
    assert np.isclose(table[3, 0], np.sin(3.))
    assert np.isclose(table[3, 3], np.cos(3. / 10000**(2 / 6)))

    with pytest.raises(ValueError):
        table[0, 0] = 1.

    seq = np.zeros((2, 8, 6))
    assert np.array_equal(position_embed(seq).value[1], table)


def test_zeroed_stack_is_identity():
    rng = np.random.default_rng(0)
    stack = TransformerStack(d_model=8, U=3, n_heads=2, d_ff=16, rng=rng)
    _zero_residual_branches(stack)
    x = rng.standard_normal((2, 5, 8))
    assert np.array_equal(stack(x).value, x)


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(1)
    attn = MultiHeadSelfAttention(8, 4, rng)
    w = attn.attention_weights(rng.standard_normal((3, 6, 8)))
    assert w.shape == (3, 4, 6, 6)
    assert np.all(w >= 0)
    assert np.allclose(w.sum(axis=-1), 1., rtol=0, atol=1e-12)


@pytest.mark.parametrize('seed', range(3))
def test_stack_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    stack = TransformerStack(d_model=8, U=2, n_heads=2, d_ff=16, rng=rng)
    x = rng.standard_normal((2, 5, 8))
    perm = rng.permutation(5)
    out = stack(x).value
    out_perm = stack(x[:, perm]).value
    assert np.allclose(out[:, perm], out_perm, rtol=0, atol=1e-12)


def test_stack_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(DimensionError):
        TransformerStack(d_model=6, U=1, n_heads=4, d_ff=8, rng=rng)

    stack = TransformerStack(d_model=8, U=1, n_heads=2, d_ff=8, rng=rng)
    with pytest.raises(DimensionError):
        stack(np.zeros((1, 3, 4)))


def test_stack_gradcheck():
    rng = np.random.default_rng(2)
    stack = TransformerStack(d_model=4, U=1, n_heads=2, d_ff=6, rng=rng)
    w = rng.standard_normal((3, 4))

    def func(x):
        return nc.sum(nc.mul(stack(x), w))

    result = gradcheck(func, [rng.standard_normal((3, 4))], atol=1e-6)
    assert result.passed


def test_parameters_and_loading():
    rng = np.random.default_rng(0)
    stack = TransformerStack(d_model=4, U=2, n_heads=2, d_ff=6, rng=rng)
    params = stack.parameters()
    assert 'layer0.attn.w_q.weight' in params
    assert 'layer1.mlp.fc2.bias' in params
    assert 'layer0.norm1.gamma' in params

    values = {k: np.full(p.shape, 0.5) for k, p in params.items()}
    stack.load_parameters(values)
    assert np.all(stack.parameters()['layer1.mlp.fc1.weight'].value == 0.5)

    del values['layer0.norm1.beta']
    with pytest.raises(KeyError):
        stack.load_parameters(values)
    stack.load_parameters(values, strict=False)

    with pytest.raises(DimensionError):
        stack.load_parameters({'layer0.norm1.beta': np.zeros(3)},
                              strict=False)

    with pytest.raises(TypeError):
        Block().add_block('x', object())


def test_linear():
    rng = np.random.default_rng(0)
    lin = Linear(3, 2, rng)
    x = rng.standard_normal(3)
    expected = x @ lin.weight.value + lin.bias.value
    assert np.allclose(lin(x).value, expected)
    assert lin(np.ones((4, 5, 3))).shape == (4, 5, 2)

    with pytest.raises(DimensionError):
        lin(np.ones(4))


def test_quantizer():
    q = BinaryQuantizer(2)
    bits = q.quantize(Tensor([0.7, 0.3]))
    assert np.array_equal(bits.value, [1., 0.])
    assert np.array_equal(BinaryQuantizer.dequantize(bits).value, [1., -1.])

    rng = np.random.default_rng(3)
    c = Tensor(rng.uniform(0, 1, (4, 2)), requires_grad=True)
    w = rng.standard_normal((4, 2))
    grads_q = backward(nc.sum(nc.mul(q.quantize(c), w)), wrt=[c])
    grads_id = backward(nc.sum(nc.mul(c, w)), wrt=[c])
    assert np.array_equal(grads_q[c], grads_id[c])

    with pytest.raises(DimensionError):
        q.quantize(np.ones(3))


def test_encoder_shapes():
    rng = np.random.default_rng(0)
    enc = ConvEncoder(3, 8, 16, 3, rng, image_size=(32, 32))
    assert enc(np.zeros((2, 3, 32, 32))).shape == (2, 16, 4, 4)

    with pytest.raises(DimensionError):
        enc(np.zeros((2, 1, 32, 32)))

    with pytest.raises(DimensionError):
        enc(np.zeros((2, 3, 16, 16)))


def test_codec_shapes_and_uniform_loss():
    config = ExperimentConfig()
    rng = np.random.default_rng(0)
    codec = ConvCodec(3, config, rng)
    img = rng.uniform(0, 1, (2, 3, config.H, config.W))
    feature = codec.encode(img)
    assert feature.shape == (2, config.d_s, config.H_s, config.W_s)
    logits = codec.decode(feature)
    assert logits.shape == (2, config.C, config.H, config.W)

    codec.zero_()
    logp = nc.log_softmax(codec(img), axis=1)
    assert np.allclose(-logp.value, np.log(config.C))


def test_codec_rejects_unsupported_geometry():
    with pytest.warns(AstropyUserWarning):
        config = ExperimentConfig(H_s=3, W_s=3)
    with pytest.raises(DimensionError):
        ConvCodec(3, config, np.random.default_rng(0))
