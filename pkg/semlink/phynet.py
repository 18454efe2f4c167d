"""
Physical-layer networks: learnable CSI-RS at the BS, channel-semantic
extraction and feedback at the UEs, the BS combiner network, and the
spectral-efficiency objective they are pretrained on.

Shapes carry a leading batch axis ``b``. Channels are
``[b, K, L + Q, N_c, N_r, N_t]``; the CSI-RS (downlink) phase sees the
transpose ``H^T`` (TDD reciprocity).
"""

# Standard library
from collections import namedtuple

# Third-party
import numpy as np

# Project
from . import numcore as nc
from .numcore import DimensionError, NumericError, Tensor
from .nnblocks import (Block, Linear, TransformerStack, BinaryQuantizer,
                       position_embed)
from .channel import add_awgn

__all__ = ['BsCsiRsNet', 'UeCsaNet', 'BsCsaNet', 'PhysicalLayer',
           'PhyOutput', 'effective_channel', 'spectral_efficiency']

PhyOutput = namedtuple('PhyOutput', ['Y_p', 'bits', 'F_RF', 'S_UE', 'W_RF',
                                     'S_BS'])


class BsCsiRsNet(Block):

    def __init__(self, config, rng):
        """Trainable CSI-RS: baseband pilots ``x_BB [L, N_c, N_RF_r]``, BS
        transmit phases ``P_RF [L, N_r, N_RF_r]`` and per-user UE combining
        phases ``Q_RF [K, L, N_RF_t, N_t]``.

        Phases start uniform in ``(-pi, pi)``; the pilots start as unit
        circularly-symmetric Gaussian draws.
        """
        super().__init__()
        self.config = config
        L, N_c = config.L, config.N_c
        x_bb = (rng.standard_normal((L, N_c, config.N_RF_r)) +
                1j * rng.standard_normal((L, N_c, config.N_RF_r))) / np.sqrt(2)
        self.x_bb = self.add_parameter('x_bb', x_bb)
        self.P_RF = self.add_parameter(
            'P_RF', rng.uniform(-np.pi, np.pi, (L, config.N_r, config.N_RF_r)))
        self.Q_RF = self.add_parameter(
            'Q_RF', rng.uniform(-np.pi, np.pi,
                                (config.K, L, config.N_RF_t, config.N_t)))

    @property
    def X_RF(self):
        return nc.complex_exp_phase(self.P_RF)

    @property
    def V_RF(self):
        return nc.complex_exp_phase(self.Q_RF)

    def pilot(self):
        """Transmitted CSI-RS ``X_RF[l] x_BB[l, n]`` rescaled to power
        ``P_t`` on every ``(l, n)``; shape ``[L, N_c, N_r]``."""
        p = nc.einsum('lra,lna->lnr', self.X_RF, self.x_bb)
        norm = nc.frobenius_norm(p, axis=-1, keepdims=True)
        return nc.scale(nc.div(p, norm), np.sqrt(self.config.P_t))

    def forward(self, H_pilot, sigma2=0., rng=None):
        """Received CSI-RS per user.

        Parameters
        ----------
        H_pilot : array_like
            Uplink channels on the CSI-RS symbols, ``[b, K, L, N_c, N_r,
            N_t]``.
        sigma2 : float (optional)
            Noise variance per received entry.
        rng : `numpy.random.Generator` (optional)
            Noise source, required when ``sigma2 > 0``.

        Returns
        -------
        Y_p : `~semlink.numcore.Tensor`
            ``[b, K, N_c, N_RF_t, L]``.
        """
        c = self.config
        H_pilot = np.asarray(H_pilot)
        expected = (c.K, c.L, c.N_c, c.N_r, c.N_t)
        if H_pilot.ndim != 6 or H_pilot.shape[1:] != expected:
            raise DimensionError("CSI-RS channels must be [batch, {0}], got {1}"
                                 .format(', '.join(map(str, expected)),
                                         H_pilot.shape))
        if sigma2 < 0:
            raise ValueError("Noise variance must be non-negative, got {0}"
                             .format(sigma2))
        Y = nc.einsum('klat,bklnrt,lnr->bklna', self.V_RF, H_pilot,
                      self.pilot())
        if sigma2 > 0:
            if rng is None:
                raise ValueError("A noise generator is required when "
                                 "sigma2 > 0.")
            Y = add_awgn(Y, sigma2, rng)
        return nc.transpose(Y, (0, 1, 3, 4, 2))


def _split_complex(z):
    """Concatenate real and imaginary parts along the last axis."""
    return nc.concat([nc.real(z), nc.imag(z)], axis=-1)


class _Branch(Block):

    def __init__(self, config, n_out, rng):
        super().__init__()
        self.lift = self.add_block('lift', Linear(config.d_CSI, config.d_model,
                                                  rng))
        self.encoder = self.add_block(
            'encoder', TransformerStack(config.d_model, config.U,
                                        config.n_heads, config.d_ff, rng))
        self.head = self.add_block(
            'head', Linear(config.N_c * config.d_model, n_out, rng))

    def forward(self, S):
        seq = self.encoder(self.lift(S))
        b, n, d = seq.shape
        return self.head(nc.reshape(seq, (b, n * d)))


class UeCsaNet(Block):

    def __init__(self, config, rng):
        """UE channel-semantic network, shared by all users.

        The ``N_c`` subcarriers form the Transformer sequence. A trunk maps
        the received CSI-RS to the channel semantic feature
        ``S_CSI,UE [N_c, d_CSI]``; one branch turns it into the analog
        precoder phases, another into ``B`` feedback bits.
        """
        super().__init__()
        self.config = config
        c = config
        width = 2 * c.N_RF_t * c.L
        self.embed = self.add_block('embed', Linear(width, c.d_model, rng))
        self.trunk = self.add_block(
            'trunk', TransformerStack(c.d_model, c.U, c.n_heads, c.d_ff, rng))
        self.head = self.add_block('head', Linear(c.d_model, c.d_CSI, rng))
        self.precoder = self.add_block(
            'precoder', _Branch(c, c.N_t * c.N_RF_t, rng))
        self.feedback = self.add_block('feedback', _Branch(c, c.B, rng))
        self.quantizer = BinaryQuantizer(c.B)

    def forward(self, Y_p):
        """
        Parameters
        ----------
        Y_p : `~semlink.numcore.Tensor`
            ``[b, K, N_c, N_RF_t, L]`` received CSI-RS.

        Returns
        -------
        bits : `~semlink.numcore.Tensor`
            ``[b, K, B]`` entries in ``{0, 1}``.
        F_RF : `~semlink.numcore.Tensor`
            ``[b, K, N_t, N_RF_t]`` unit-modulus precoders.
        S_UE : `~semlink.numcore.Tensor`
            ``[b, K, N_c, d_CSI]``.
        """
        c = self.config
        Y_p = nc.as_tensor(Y_p)
        if Y_p.ndim != 5 or Y_p.shape[1:] != (c.K, c.N_c, c.N_RF_t, c.L):
            raise DimensionError("UE-CSANet expects [batch, {0}, {1}, {2}, "
                                 "{3}], got {4}".format(c.K, c.N_c, c.N_RF_t,
                                                        c.L, Y_p.shape))
        b = Y_p.shape[0]
        seq = nc.reshape(Y_p, (b * c.K, c.N_c, c.N_RF_t * c.L))
        seq = position_embed(self.embed(_split_complex(seq)))
        S = self.head(self.trunk(seq))

        theta = nc.reshape(self.precoder(S), (b, c.K, c.N_t, c.N_RF_t))
        F_RF = nc.complex_exp_phase(theta)
        soft = nc.sigmoid(self.feedback(S))
        bits = nc.reshape(self.quantizer.quantize(soft), (b, c.K, c.B))
        return bits, F_RF, nc.reshape(S, (b, c.K, c.N_c, c.d_CSI))


class BsCsaNet(Block):

    def __init__(self, config, rng):
        """BS channel-semantic network: ``K`` feedback vectors to the analog
        combiner ``W_RF`` and the BS-side feature ``S_CSI,BS``."""
        super().__init__()
        self.config = config
        c = config
        self.expand = self.add_block(
            'expand', Linear(c.K * c.B, c.N_c * c.d_model, rng))
        self.trunk = self.add_block(
            'trunk', TransformerStack(c.d_model, c.U, c.n_heads, c.d_ff, rng))
        self.head = self.add_block('head', Linear(c.d_model, c.d_CSI, rng))
        self.combiner = self.add_block(
            'combiner', _Branch(c, c.N_RF_r * c.N_r, rng))

    def forward(self, bits):
        c = self.config
        bits = nc.as_tensor(bits)
        if bits.ndim != 3 or bits.shape[1:] != (c.K, c.B):
            raise DimensionError("BS-CSANet expects {0} bit vectors of length "
                                 "{1}, got shape {2}"
                                 .format(c.K, c.B, bits.shape))
        b = bits.shape[0]
        x = BinaryQuantizer.dequantize(nc.reshape(bits, (b, c.K * c.B)))
        seq = nc.reshape(self.expand(x), (b, c.N_c, c.d_model))
        S = self.head(self.trunk(position_embed(seq)))
        phi = nc.reshape(self.combiner(S), (b, c.N_RF_r, c.N_r))
        return nc.complex_exp_phase(phi), S


class PhysicalLayer(Block):

    def __init__(self, config, rng):
        super().__init__()
        self.config = config
        self.csirs = self.add_block('csirs', BsCsiRsNet(config, rng))
        self.ue = self.add_block('ue', UeCsaNet(config, rng))
        self.bs = self.add_block('bs', BsCsaNet(config, rng))

    def forward(self, H, rng=None, sigma2=None):
        """Run CSI-RS reception, UE extraction, feedback and the BS network.

        Parameters
        ----------
        H : array_like
            ``[b, K, L + Q, N_c, N_r, N_t]``; the first ``L`` symbols carry
            CSI-RS.
        rng : `numpy.random.Generator` (optional)
            CSI-RS noise source.
        sigma2 : float (optional)
            Defaults to the configured CSI-RS noise variance.

        Returns
        -------
        out : `PhyOutput`
        """
        if sigma2 is None:
            sigma2 = self.config.csirs_sigma2
        H = np.asarray(H)
        Y_p = self.csirs(H[:, :, :self.config.L], sigma2, rng)
        bits, F_RF, S_UE = self.ue(Y_p)
        W_RF, S_BS = self.bs(bits)
        return PhyOutput(Y_p, bits, F_RF, S_UE, W_RF, S_BS)

    def spectral_efficiency(self, H, rng=None):
        """Per-sample spectral efficiency on the data symbols of ``H``."""
        c = self.config
        out = self(H, rng)
        return spectral_efficiency(out.W_RF, out.F_RF,
                                   np.asarray(H)[:, :, c.L:], c.P_t, c.sigma2)


def effective_channel(W_RF, H, F_RF):
    """Low-dimensional equivalent channel ``W_RF H F_RF``.

    Works on single matrices and on any batch shape that broadcasts under
    matrix multiplication.
    """
    W_RF, H, F_RF = nc.as_tensor(W_RF), nc.as_tensor(H), nc.as_tensor(F_RF)
    for t in (W_RF, H, F_RF):
        if not t.is_complex:
            raise DimensionError("effective_channel expects complex matrices.")
    return nc.matmul(nc.matmul(W_RF, H), F_RF)


def spectral_efficiency(W_RF, F_RF, H_data, P_t, sigma2):
    """Sum of ``log2 det(I + (P_t / sigma2) M M^H)`` over users, data
    symbols and subcarriers, with ``M = W_RF H[k, q, n] F_RF[k]``.

    Inter-user interference is not counted.

    Parameters
    ----------
    W_RF : array_like or `~semlink.numcore.Tensor`
        ``[N_RF_r, N_r]`` or batched ``[b, N_RF_r, N_r]``.
    F_RF : array_like or `~semlink.numcore.Tensor`
        ``[K, N_t, N_RF_t]`` or ``[b, K, N_t, N_RF_t]``.
    H_data : array_like
        ``[K, Q, N_c, N_r, N_t]`` or ``[b, K, Q, N_c, N_r, N_t]``.
    P_t, sigma2 : float
        Transmit power and noise variance, ``sigma2 > 0``.

    Returns
    -------
    eta : `~semlink.numcore.Tensor`
        Scalar, or ``[b]`` for batched input, in bit/s/Hz.
    """
    if sigma2 <= 0:
        raise ValueError("Noise variance must be positive, got {0}"
                         .format(sigma2))
    W_RF, F_RF, H_data = (nc.as_tensor(W_RF), nc.as_tensor(F_RF),
                          nc.as_tensor(H_data))
    batched = H_data.ndim == 6
    if not batched:
        if W_RF.ndim != 2 or F_RF.ndim != 3 or H_data.ndim != 5:
            raise DimensionError("Unbatched spectral_efficiency expects W "
                                 "[N_RF_r, N_r], F [K, N_t, N_RF_t] and H "
                                 "[K, Q, N_c, N_r, N_t]")
        W_RF = nc.reshape(W_RF, (1, ) + W_RF.shape)
        F_RF = nc.reshape(F_RF, (1, ) + F_RF.shape)
        H_data = nc.reshape(H_data, (1, ) + H_data.shape)
    elif W_RF.ndim != 3 or F_RF.ndim != 4:
        raise DimensionError("Batched spectral_efficiency expects W [b, "
                             "N_RF_r, N_r] and F [b, K, N_t, N_RF_t], got {0} "
                             "and {1}".format(W_RF.shape, F_RF.shape))

    M = nc.einsum('bar,bkqnrt,bkts->bkqnas', W_RF, H_data, F_RF)
    gram = nc.einsum('bkqnas,bkqncs->bkqnac', M, nc.conj(M))
    n = gram.shape[-1]
    eye = np.eye(n)
    logdet = nc.logdet_hpd(nc.scale(gram, P_t / sigma2) + eye)
    eta = nc.scale(nc.sum(logdet, axis=(1, 2, 3)), 1. / np.log(2.))
    if not np.all(np.isfinite(eta.value)):
        raise NumericError("Spectral efficiency is not finite.")
    if not batched:
        eta = nc.reshape(eta, ())
    return eta
