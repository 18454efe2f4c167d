"""
Neural building blocks on top of `semlink.numcore`: parameter containers,
linear and normalization layers, a pre-norm Transformer encoder, the binary
feedback quantizer and a small strided convolutional codec.
"""

# Standard library
from collections import OrderedDict
from functools import lru_cache

# Third-party
import numpy as np

# Project
from . import numcore as nc
from .numcore import DimensionError, Tensor

__all__ = ['Block', 'Linear', 'LayerNorm', 'FeedForward',
           'MultiHeadSelfAttention', 'TransformerLayer', 'TransformerStack',
           'position_table', 'position_embed', 'BinaryQuantizer',
           'ConvEncoder', 'ConvDecoder', 'ConvCodec']


class Block:
    """Container of named trainable tensors and nested blocks."""

    def __init__(self):
        self._params = OrderedDict()
        self._blocks = OrderedDict()

    def add_parameter(self, name, value):
        param = Tensor(value, requires_grad=True, name=name)
        self._params[name] = param
        return param

    def add_block(self, name, block):
        if not isinstance(block, Block):
            raise TypeError("add_block expects a Block, got {0}"
                            .format(type(block)))
        self._blocks[name] = block
        return block

    def parameters(self, prefix=''):
        """All trainable tensors keyed by dotted path, in creation order."""
        out = OrderedDict()
        for name, param in self._params.items():
            out[prefix + name] = param
        for name, block in self._blocks.items():
            out.update(block.parameters(prefix + name + '.'))
        return out

    def load_parameters(self, values, strict=True):
        """Replace parameter values from a name-to-array mapping.

        Parameters
        ----------
        values : dict
            Keys as produced by `parameters`.
        strict : bool (optional)
            Require every parameter of this block to be present.
        """
        params = self.parameters()
        if strict:
            missing = [n for n in params if n not in values]
            if missing:
                raise KeyError("Missing parameters: {0}"
                               .format(', '.join(missing)))
        for name, value in values.items():
            if name not in params:
                if strict:
                    raise KeyError("Unexpected parameter {0!r}".format(name))
                continue
            value = np.asarray(value)
            if value.shape != params[name].shape:
                raise DimensionError("Parameter {0!r} has shape {1}, got {2}"
                                     .format(name, params[name].shape,
                                             value.shape))
            params[name].value = np.array(value, dtype=params[name].value.dtype)

    def zero_(self):
        for param in self.parameters().values():
            param.value = np.zeros_like(param.value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError()


def _uniform(rng, fan_in, shape):
    bound = 1. / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Block):

    def __init__(self, n_in, n_out, rng, bias=True):
        super().__init__()
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.weight = self.add_parameter('weight',
                                         _uniform(rng, n_in, (n_in, n_out)))
        self.bias = (self.add_parameter('bias', _uniform(rng, n_in, (n_out, )))
                     if bias else None)

    def forward(self, x):
        x = nc.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise DimensionError("Linear expects width {0}, got shape {1}"
                                 .format(self.n_in, x.shape))
        flat = x.ndim == 1
        if flat:
            x = nc.reshape(x, (1, self.n_in))
        out = nc.matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        if flat:
            out = nc.reshape(out, (self.n_out, ))
        return out


class LayerNorm(Block):

    def __init__(self, d):
        super().__init__()
        self.gamma = self.add_parameter('gamma', np.ones(d))
        self.beta = self.add_parameter('beta', np.zeros(d))

    def forward(self, x):
        return nc.layer_norm(x) * self.gamma + self.beta


class FeedForward(Block):

    def __init__(self, d_model, d_ff, rng):
        super().__init__()
        self.fc1 = self.add_block('fc1', Linear(d_model, d_ff, rng))
        self.fc2 = self.add_block('fc2', Linear(d_ff, d_model, rng))

    def forward(self, x):
        return self.fc2(nc.relu(self.fc1(x)))


class MultiHeadSelfAttention(Block):

    def __init__(self, d_model, n_heads, rng):
        super().__init__()
        if d_model % n_heads != 0:
            raise DimensionError("d_model={0} is not divisible by n_heads={1}"
                                 .format(d_model, n_heads))
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.w_q = self.add_block('w_q', Linear(d_model, d_model, rng))
        self.w_k = self.add_block('w_k', Linear(d_model, d_model, rng))
        self.w_v = self.add_block('w_v', Linear(d_model, d_model, rng))
        self.w_o = self.add_block('w_o', Linear(d_model, d_model, rng))

    def _heads(self, x):
        b, s, _ = x.shape
        return nc.transpose(nc.reshape(x, (b, s, self.n_heads, self.d_head)),
                            (0, 2, 1, 3))

    def _weights(self, x):
        q = self._heads(self.w_q(x))
        k = self._heads(self.w_k(x))
        scores = nc.matmul(q, nc.transpose(k, (0, 1, 3, 2)))
        return nc.softmax(nc.scale(scores, 1. / np.sqrt(self.d_head)),
                          axis=-1)

    def attention_weights(self, x):
        """Row-stochastic attention weights ``[batch, heads, seq, seq]``."""
        with nc.no_grad():
            return self._weights(self._batched(x)).value

    def _batched(self, x):
        x = nc.as_tensor(x)
        if x.ndim == 2:
            x = nc.reshape(x, (1, ) + x.shape)
        if x.ndim != 3 or x.shape[-1] != self.d_model:
            raise DimensionError("Attention expects [batch, seq, {0}], got {1}"
                                 .format(self.d_model, x.shape))
        return x

    def forward(self, x):
        x = nc.as_tensor(x)
        squeeze = x.ndim == 2
        x = self._batched(x)
        b, s, _ = x.shape
        attn = self._weights(x)
        heads = nc.matmul(attn, self._heads(self.w_v(x)))
        merged = nc.reshape(nc.transpose(heads, (0, 2, 1, 3)),
                            (b, s, self.d_model))
        out = self.w_o(merged)
        if squeeze:
            out = nc.reshape(out, (s, self.d_model))
        return out


class TransformerLayer(Block):

    def __init__(self, d_model, n_heads, d_ff, rng):
        super().__init__()
        self.norm1 = self.add_block('norm1', LayerNorm(d_model))
        self.attn = self.add_block('attn',
                                   MultiHeadSelfAttention(d_model, n_heads,
                                                          rng))
        self.norm2 = self.add_block('norm2', LayerNorm(d_model))
        self.mlp = self.add_block('mlp', FeedForward(d_model, d_ff, rng))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class TransformerStack(Block):

    def __init__(self, d_model=32, U=2, n_heads=4, d_ff=64, rng=None):
        """``U`` identical pre-norm encoder layers.

        Each layer applies ``x + MHSA(LN(x))`` then ``x + MLP(LN(x))``, so a
        stack whose attention output projections and MLPs are zero is the
        identity map.

        Parameters
        ----------
        d_model : int
            Embedding width, divisible by ``n_heads``.
        U : int
            Number of layers.
        n_heads : int
        d_ff : int
            Hidden width of the MLP sublayer.
        rng : `numpy.random.Generator`
            Source of the initial weights.
        """
        super().__init__()
        if rng is None:
            rng = np.random.default_rng(0)
        self.d_model = d_model
        self.layers = [self.add_block('layer{0}'.format(i),
                                      TransformerLayer(d_model, n_heads, d_ff,
                                                       rng))
                       for i in range(U)]

    def forward(self, seq):
        seq = nc.as_tensor(seq)
        if seq.shape[-1] != self.d_model:
            raise DimensionError("Transformer expects width {0}, got shape {1}"
                                 .format(self.d_model, seq.shape))
        for layer in self.layers:
            seq = layer(seq)
        return seq


@lru_cache(maxsize=32)
def _position_table(length, d_model):
    pos = np.arange(length)[:, None]
    i = np.arange(0, d_model, 2)[None, :]
    angle = pos / 10000.**(i / d_model)
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    table.setflags(write=False)
    return table


def position_table(length, d_model):
    """Sinusoidal table with ``PE[pos, 2i] = sin(pos / 10000^(2i/d))`` and
    ``PE[pos, 2i+1] = cos(pos / 10000^(2i/d))``."""
    return _position_table(int(length), int(d_model))


def position_embed(seq):
    """Add the sinusoidal position table to ``seq [..., length, d_model]``."""
    seq = nc.as_tensor(seq)
    if seq.ndim < 2:
        raise DimensionError("position_embed expects [..., length, d_model], "
                             "got {0}".format(seq.shape))
    return seq + position_table(*seq.shape[-2:])


class BinaryQuantizer:

    def __init__(self, B):
        """Hard 0/1 quantizer of ``B`` sigmoid outputs with a straight-through
        backward pass."""
        self.B = int(B)

    def quantize(self, c):
        c = nc.as_tensor(c)
        if c.shape[-1] != self.B:
            raise DimensionError("Quantizer expects {0} values, got shape {1}"
                                 .format(self.B, c.shape))
        return nc.straight_through(c, (c.value >= 0.5).astype(np.float64))

    @staticmethod
    def dequantize(bits):
        """Map bits ``{0, 1}`` to ``{-1, +1}``."""
        return nc.scale(bits, 2.) - 1.


def _conv_weight(rng, c_out, c_in, k=3):
    return _uniform(rng, c_in * k * k, (c_out, c_in, k, k))


class ConvEncoder(Block):

    def __init__(self, in_channels, width, d_s, n_blocks, rng,
                 image_size=None):
        """``n_blocks`` stride-2 3x3 conv + ReLU stages mapping
        ``[B, in_channels, H, W]`` to ``[B, d_s, H/2^n, W/2^n]``."""
        super().__init__()
        if n_blocks < 1:
            raise DimensionError("ConvEncoder needs at least one block.")
        self.in_channels = in_channels
        self.n_blocks = n_blocks
        self.image_size = image_size
        chans = [in_channels] + [width] * (n_blocks - 1) + [d_s]
        self.convs = []
        for i in range(n_blocks):
            w = self.add_parameter('conv{0}.weight'.format(i),
                                   _conv_weight(rng, chans[i + 1], chans[i]))
            b = self.add_parameter('conv{0}.bias'.format(i),
                                   np.zeros(chans[i + 1]))
            self.convs.append((w, b))

    def forward(self, img):
        img = nc.as_tensor(img)
        if img.ndim != 4 or img.shape[1] != self.in_channels:
            raise DimensionError("ConvEncoder expects [batch, {0}, H, W], got "
                                 "{1}".format(self.in_channels, img.shape))
        if (self.image_size is not None and
                tuple(img.shape[2:]) != tuple(self.image_size)):
            raise DimensionError("ConvEncoder configured for {0} images, got "
                                 "{1}".format(tuple(self.image_size),
                                              img.shape[2:]))
        x = img
        for w, b in self.convs:
            x = nc.relu(nc.conv2d(x, w, b, stride=2, padding=1))
        return x


class ConvDecoder(Block):

    def __init__(self, d_s, width, n_classes, n_blocks, rng):
        """``n_blocks`` nearest-neighbor x2 upsample + 3x3 conv + ReLU stages,
        then a 3x3 conv emitting ``n_classes`` logits."""
        super().__init__()
        chans = [d_s] + [width] * n_blocks
        self.convs = []
        for i in range(n_blocks):
            w = self.add_parameter('conv{0}.weight'.format(i),
                                   _conv_weight(rng, chans[i + 1], chans[i]))
            b = self.add_parameter('conv{0}.bias'.format(i),
                                   np.zeros(chans[i + 1]))
            self.convs.append((w, b))
        self.head_weight = self.add_parameter(
            'head.weight', _conv_weight(rng, n_classes, width))
        self.head_bias = self.add_parameter('head.bias', np.zeros(n_classes))

    def forward(self, feature):
        x = nc.as_tensor(feature)
        for w, b in self.convs:
            x = nc.relu(nc.conv2d(nc.upsample_nearest(x, 2), w, b,
                                  padding=1))
        return nc.conv2d(x, self.head_weight, self.head_bias, padding=1)


class ConvCodec(Block):

    def __init__(self, in_channels, config, rng):
        """Encoder/decoder pair sized from an
        `~semlink.config.ExperimentConfig`; on its own it is the
        single-modality segmentation model."""
        super().__init__()
        if not config.codec_supported:
            raise DimensionError("Cannot reduce {0}x{1} images to {2}x{3} "
                                 "features with stride-2 blocks"
                                 .format(config.H, config.W, config.H_s,
                                         config.W_s))
        n = config.n_enc_blocks
        self.encoder = self.add_block(
            'encoder', ConvEncoder(in_channels, config.enc_width, config.d_s,
                                   n, rng, image_size=(config.H, config.W)))
        self.decoder = self.add_block(
            'decoder', ConvDecoder(config.d_s, config.enc_width, config.C, n,
                                   rng))

    def encode(self, img):
        return self.encoder(img)

    def decode(self, feature):
        return self.decoder(feature)

    def forward(self, img):
        return self.decode(self.encode(img))
