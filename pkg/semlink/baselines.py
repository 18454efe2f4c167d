"""
Reference schemes: PCA analog beamforming from perfect or estimated CSI,
random phases, the fully-digital SVD bound, and the separated design with
explicit DMRS, least-squares channel estimation, interpolation and
zero-forcing detection.
"""

# Standard library
import warnings

# Third-party
from astropy.utils.exceptions import AstropyUserWarning
import numpy as np

# Project
from . import numcore as nc
from .numcore import DimensionError, NumericError, Tensor
from .nnblocks import Block
from .phynet import BsCsiRsNet
from .semnet import (ResourceShare, UeMsfNet, BsMsfNet, identity_superpose,
                     transmit_superpose, MODALITY_CHANNELS)

__all__ = ['pca_precoder', 'pca_combiner', 'pca_beamformers',
           'random_phase_beamformers', 'svd_bound', 'analog_array_gain',
           'quantize_phase', 'ClassicalCsiRs', 'estimated_beamformers',
           'DmrsGrid', 'ls_estimate', 'zf_equalize', 'dmrs_chain',
           'SeparatedBaseline', 'orthogonal_variant']

# condition number above which ZF falls back to a ridge-regularized inverse
ZF_MAX_CONDITION = 1e8
ZF_RIDGE = 1e-6


def _top_eigenvectors(R, n):
    from scipy.linalg import eigh, LinAlgError

    try:
        _, vecs = eigh(R)
    except (LinAlgError, ValueError) as e:
        raise NumericError("Eigen-decomposition failed: {0}".format(e))
    return vecs[:, ::-1][:, :n]


def _as_matrices(H):
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim < 2:
        raise DimensionError("Expected channel matrices [..., N_r, N_t], got "
                             "{0}".format(H.shape))
    return H.reshape((-1, ) + H.shape[-2:])


def pca_precoder(H_hat, n_rf):
    """Analog precoder ``[N_t, n_rf]`` whose columns carry the phases of
    the dominant eigenvectors of ``sum H^H H`` over all leading axes."""
    mats = _as_matrices(H_hat)
    R = np.einsum('mrt,mru->tu', mats.conj(), mats)
    return np.exp(1j * np.angle(_top_eigenvectors(R, n_rf)))


def pca_combiner(H_hat, n_rf):
    """Analog combiner ``[n_rf, N_r]`` from the dominant eigenvectors of
    ``sum H H^H``."""
    mats = _as_matrices(H_hat)
    R = np.einsum('mrt,mst->rs', mats, mats.conj())
    return np.exp(-1j * np.angle(_top_eigenvectors(R, n_rf))).T


def quantize_phase(phase, bits):
    """Round phases to the nearest of ``2**bits`` uniform levels on the
    circle; zero bits maps everything to phase 0."""
    phase = np.asarray(phase, dtype=np.float64)
    if bits < 0:
        raise ValueError("Bit width must be non-negative, got {0}"
                         .format(bits))
    if bits == 0:
        return np.zeros_like(phase)
    step = 2 * np.pi / 2**bits
    q = np.round(phase / step) * step
    return np.angle(np.exp(1j * q))


def pca_beamformers(H, config, feedback_bits=None):
    """PCA precoders for every user and the BS combiner.

    Parameters
    ----------
    H : array_like
        One realization's channels ``[K, ..., N_r, N_t]`` (true or
        estimated).
    config : `~semlink.config.ExperimentConfig`
    feedback_bits : int (optional)
        When given, each UE feeds back the phases of its dominant receive
        eigenvectors with ``feedback_bits // (N_RF_r N_r)`` bits per phase
        and the BS builds its combiner from these; otherwise the BS sees
        ``H`` directly.

    Returns
    -------
    W_RF : `~numpy.ndarray`
        ``[N_RF_r, N_r]``.
    F_RF : `~numpy.ndarray`
        ``[K, N_t, N_RF_t]``.
    """
    H = np.asarray(H)
    c = config
    F_RF = np.stack([pca_precoder(H[k], c.N_RF_t) for k in range(len(H))])
    if feedback_bits is None:
        return pca_combiner(H, c.N_RF_r), F_RF

    bits = int(feedback_bits) // (c.N_RF_r * c.N_r)
    R = np.zeros((c.N_r, c.N_r), dtype=np.complex128)
    for k in range(len(H)):
        mats = _as_matrices(H[k])
        U = _top_eigenvectors(np.einsum('mrt,mst->rs', mats, mats.conj()),
                              c.N_RF_r)
        U_hat = np.exp(1j * quantize_phase(np.angle(U), bits)) / np.sqrt(c.N_r)
        R += U_hat @ U_hat.conj().T
    W_RF = np.exp(-1j * np.angle(_top_eigenvectors(R, c.N_RF_r))).T
    return W_RF, F_RF


def random_phase_beamformers(config, rng, size=None):
    """Unit-modulus beamformers with phases uniform in ``(-pi, pi)``;
    ``size`` prepends batch axes."""
    c = config
    lead = () if size is None else tuple(np.atleast_1d(size))
    W = np.exp(1j * rng.uniform(-np.pi, np.pi, lead + (c.N_RF_r, c.N_r)))
    F = np.exp(1j * rng.uniform(-np.pi, np.pi,
                                lead + (c.K, c.N_t, c.N_RF_t)))
    return W, F


def analog_array_gain(config):
    """Largest power gain unit-modulus ``W_RF`` and ``F_RF`` can add to a
    channel singular value, ``N_RF_r N_r N_RF_t N_t``."""
    return config.N_RF_r * config.N_r * config.N_RF_t * config.N_t


def svd_bound(H, P_t, sigma2, n_streams=None, array_gain=1.):
    """Fully-digital upper bound ``sum log2(1 + rho g s_i^2)`` over the top
    ``n_streams`` singular values of each channel matrix.

    Parameters
    ----------
    H : array_like
        ``[N_r, N_t]``, ``[K, Q, N_c, N_r, N_t]`` or batched
        ``[b, K, Q, N_c, N_r, N_t]``.
    P_t, sigma2 : float
    n_streams : int (optional)
        Default ``min(N_r, N_t)``.
    array_gain : float (optional)
        Power gain ``g`` applied to every singular value; use
        `analog_array_gain` to bound unit-modulus analog beamformers.

    Returns
    -------
    eta : float or `~numpy.ndarray`
        A float, or one value per batch entry for 6-d input.

    Notes
    -----
    With the default ``array_gain=1`` this is the plain fully-digital bound
    of the channel matrices. ``semlink baseline svd-bound`` passes
    `analog_array_gain`, so the numbers it writes include the combining and
    precoding gain of the analog arrays and are larger than the plain bound.
    """
    if sigma2 <= 0:
        raise ValueError("Noise variance must be positive, got {0}"
                         .format(sigma2))
    H = np.asarray(H, dtype=np.complex128)
    s = np.linalg.svd(H, compute_uv=False)
    if n_streams is not None:
        s = s[..., :n_streams]
    terms = np.log2(1. + (P_t / sigma2) * array_gain * s**2).sum(axis=-1)
    if H.ndim == 6:
        return terms.sum(axis=(1, 2, 3))
    return float(terms.sum())


class ClassicalCsiRs:

    def __init__(self, config, rng):
        """Fixed random unit-modulus CSI-RS with a per-subcarrier
        minimum-norm least-squares channel estimator at each UE.

        Parameters
        ----------
        config : `~semlink.config.ExperimentConfig`
        rng : `numpy.random.Generator`
            Draws the pilots and phases once.
        """
        from scipy.linalg import pinv

        self.config = config
        self.net = BsCsiRsNet(config, rng)
        with nc.no_grad():
            pilot = self.net.pilot().value           # [L, N_c, N_r]
            V = self.net.V_RF.value                  # [K, L, N_RF_t, N_t]
        c = config
        # y[k, n, (l, a)] = sum_{r, t} V[k, l, a, t] p[l, n, r] H[k, n, r, t]
        A = np.einsum('klat,lnr->knlart', V, pilot)
        A = A.reshape(c.K, c.N_c, c.L * c.N_RF_t, c.N_r * c.N_t)
        self.pinv = np.stack([[pinv(A[k, n]) for n in range(c.N_c)]
                              for k in range(c.K)])

    def receive(self, H_pilot, sigma2, rng=None):
        """Received CSI-RS ``[b, K, N_c, N_RF_t, L]`` as an array."""
        with nc.no_grad():
            return self.net(H_pilot, sigma2, rng).value

    def estimate(self, Y_p):
        """Least-squares channel estimate ``[b, K, N_c, N_r, N_t]`` from
        ``Y_p [b, K, N_c, N_RF_t, L]``, shared by all symbols."""
        c = self.config
        Y_p = np.asarray(Y_p)
        b = Y_p.shape[0]
        y = np.swapaxes(Y_p, -1, -2).reshape(b, c.K, c.N_c, c.L * c.N_RF_t)
        g = np.einsum('knij,bknj->bkni', self.pinv, y)
        return g.reshape(b, c.K, c.N_c, c.N_r, c.N_t)


def estimated_beamformers(H, config, csirs=None, rng=None, perfect=False):
    """PCA beamformers for a batch of realizations.

    Parameters
    ----------
    H : array_like
        ``[b, K, L + Q, N_c, N_r, N_t]``.
    config : `~semlink.config.ExperimentConfig`
    csirs : `ClassicalCsiRs` (optional)
        Required unless ``perfect``.
    rng : `numpy.random.Generator` (optional)
        CSI-RS noise.
    perfect : bool (optional)
        Use the true CSI-RS-phase channels and unquantized feedback.

    Returns
    -------
    W_RF : `~numpy.ndarray`
        ``[b, N_RF_r, N_r]``.
    F_RF : `~numpy.ndarray`
        ``[b, K, N_t, N_RF_t]``.
    """
    H = np.asarray(H)
    L = config.L
    if perfect:
        pairs = [pca_beamformers(H[i, :, :L], config) for i in range(len(H))]
    else:
        if csirs is None:
            raise ValueError("Estimated-CSI beamforming needs a CSI-RS "
                             "estimator.")
        H_hat = csirs.estimate(csirs.receive(H[:, :, :L],
                                             config.csirs_sigma2, rng))
        pairs = [pca_beamformers(H_hat[i], config, feedback_bits=config.B)
                 for i in range(len(H))]
    return (np.stack([p[0] for p in pairs]),
            np.stack([p[1] for p in pairs]))


class DmrsGrid:

    def __init__(self, share, n_streams, rng):
        """Demodulation reference signals inside one user's rectangular
        resource share.

        A quarter of the share's resource elements carry DMRS: every second
        subcarrier of every second symbol when both share dimensions are
        even, otherwise every fourth element in row-major order. Each DMRS
        element sounds one stream (round-robin) with a unit-modulus QPSK
        symbol.

        Parameters
        ----------
        share : `~semlink.semnet.ResourceShare`
        n_streams : int
        rng : `numpy.random.Generator`
        """
        rows = np.flatnonzero(share.mask.any(axis=1))
        cols = np.flatnonzero(share.mask.any(axis=0))
        if not np.array_equal(share.mask, np.outer(share.mask.any(axis=1),
                                                   share.mask.any(axis=0))):
            raise ValueError("DMRS grids need a rectangular resource share.")
        self.rows, self.cols = rows, cols
        Q_u, N_u = len(rows), len(cols)
        local = np.zeros((Q_u, N_u), dtype=bool)
        if Q_u % 2 == 0 and N_u % 2 == 0:
            local[::2, ::2] = True
        else:
            local.reshape(-1)[::4] = True
        count = int(np.count_nonzero(local))
        if count != -(-Q_u * N_u // 4):
            raise ValueError("DMRS lattice marks {0} elements, expected {1}"
                             .format(count, -(-Q_u * N_u // 4)))
        if count < n_streams:
            raise ValueError("{0} DMRS elements cannot sound {1} streams"
                             .format(count, n_streams))

        self.share = share
        self.n_streams = n_streams
        self.local_mask = local
        self.local_positions = np.argwhere(local)
        self.stream = np.arange(count) % n_streams
        self.pilots = np.exp(1j * (np.pi / 4 + np.pi / 2 *
                                   rng.integers(0, 4, count)))
        self.mask = np.zeros_like(share.mask)
        self.mask[np.ix_(rows, cols)] = local
        self.data_mask = share.mask & ~self.mask
        self.data_share = ResourceShare(self.data_mask)

    def __repr__(self):
        return '<DmrsGrid {0} DMRS / {1} data REs>'.format(
            len(self.stream), self.data_share.n_re)

    @property
    def positions(self):
        """Grid ``(q, n)`` of every DMRS element, row-major."""
        return np.column_stack([self.rows[self.local_positions[:, 0]],
                                self.cols[self.local_positions[:, 1]]])

    def transmit_grid(self, s_data):
        """Place data ``[n_data, n_streams]`` and DMRS on the full
        ``[Q, N_c, n_streams]`` grid."""
        Q, N_c = self.mask.shape
        grid = np.zeros((Q, N_c, self.n_streams), dtype=np.complex128)
        grid[self.data_mask] = s_data
        pos = self.positions
        grid[pos[:, 0], pos[:, 1], self.stream] = self.pilots
        return grid

    def interpolate(self, h_points):
        """Spread per-element estimates ``[count, N_RF_r]`` of each stream's
        effective channel column over the share.

        Interpolation is linear along subcarriers within each sounded
        symbol and then linear across symbols, holding edge values.

        Returns
        -------
        H_equ : `~numpy.ndarray`
            ``[Q_u, N_u, N_RF_r, n_streams]`` over the share block.
        """
        Q_u, N_u = self.local_mask.shape
        out = np.zeros((Q_u, N_u, h_points.shape[-1], self.n_streams),
                       dtype=np.complex128)
        q_all, n_all = np.arange(Q_u), np.arange(N_u)
        for s in range(self.n_streams):
            pos = self.local_positions[self.stream == s]
            vals = h_points[self.stream == s]
            q_known = np.unique(pos[:, 0])
            rows = np.stack([_interp_axis(pos[pos[:, 0] == q, 1],
                                          vals[pos[:, 0] == q], n_all)
                             for q in q_known])
            out[..., s] = _interp_axis(q_known, rows, q_all)
        return out


def _interp_axis(x_known, y_known, x_new):
    """Linear interpolation along axis 0 with edge hold; complex values are
    handled part by part."""
    from scipy.interpolate import interp1d

    y_known = np.asarray(y_known)
    if len(x_known) == 1:
        return np.repeat(y_known[:1], len(x_new), axis=0)
    parts = []
    for part in (y_known.real, y_known.imag):
        f = interp1d(x_known, part, axis=0, bounds_error=False,
                     fill_value=(part[0], part[-1]), assume_sorted=True)
        parts.append(f(x_new))
    return parts[0] + 1j * parts[1]


def ls_estimate(y, x):
    """Least-squares estimate ``y x^*`` of the channel seen by a
    unit-modulus reference symbol ``x``."""
    return np.asarray(y) * np.conj(x)


def zf_equalize(H_equ, y):
    """Zero-forcing detection ``pinv(H_equ) y`` per resource element.

    Ill-conditioned matrices use a ridge-regularized inverse and trigger a
    warning.

    Parameters
    ----------
    H_equ : array_like
        ``[..., N_RF_r, n_streams]``.
    y : array_like
        ``[..., N_RF_r]``.
    """
    H_equ = np.asarray(H_equ)
    y = np.asarray(y)
    s = np.linalg.svd(H_equ, compute_uv=False)
    s_min = s[..., -1]
    cond = np.where(s_min > 0, s[..., 0] / np.where(s_min > 0, s_min, 1.),
                    np.inf)
    inv = np.linalg.pinv(H_equ)
    bad = ~(cond <= ZF_MAX_CONDITION)
    if np.any(bad):
        warnings.warn("{0} ill-conditioned effective channel(s); using a "
                      "ridge-regularized inverse".format(int(bad.sum())),
                      AstropyUserWarning)
        Hb = H_equ[bad]
        Hh = np.conj(np.swapaxes(Hb, -1, -2))
        n = Hb.shape[-1]
        ridge = ZF_RIDGE * np.maximum(s[bad][..., :1, None]**2, 1e-30)
        inv[bad] = np.linalg.solve(Hh @ Hb + ridge * np.eye(n), Hh)
    return np.einsum('...sr,...r->...s', inv, y)


def dmrs_chain(s_data, H_data, W_RF, F_RF, grids, sigma2=0., rng=None):
    """Separated-design link for one realization.

    Users transmit data plus DMRS on disjoint shares; the BS combines with
    ``W_RF``, estimates each user's effective channel by LS at the DMRS
    elements, interpolates it and equalizes the data elements by ZF.

    Parameters
    ----------
    s_data : list of array_like
        Per user ``[n_data, N_RF_t]`` data symbols in row-major order of the
        user's data elements.
    H_data : array_like
        ``[K, Q, N_c, N_r, N_t]``.
    W_RF : array_like
        ``[N_RF_r, N_r]``.
    F_RF : array_like
        ``[K, N_t, N_RF_t]``.
    grids : list of `DmrsGrid`
    sigma2 : float (optional)
    rng : `numpy.random.Generator` (optional)

    Returns
    -------
    s_hat : list of `~numpy.ndarray`
        Equalized ``[n_data, N_RF_t]`` per user.
    """
    H_data = np.asarray(H_data)
    W_RF = np.asarray(W_RF)
    F_RF = np.asarray(F_RF)
    X = np.stack([g.transmit_grid(s) for g, s in zip(grids, s_data)])
    y = np.einsum('kqnrt,kts,kqns->qnr', H_data, F_RF, X)
    if sigma2 > 0:
        if rng is None:
            raise ValueError("A noise generator is required when sigma2 > 0.")
        y = y + np.sqrt(sigma2 / 2.) * (rng.standard_normal(y.shape) +
                                        1j * rng.standard_normal(y.shape))
    y_bb = np.einsum('ar,qnr->qna', W_RF, y)

    s_hat = []
    for grid in grids:
        pos = grid.positions
        h_points = ls_estimate(y_bb[pos[:, 0], pos[:, 1]],
                               grid.pilots[:, None])
        H_block = grid.interpolate(h_points)
        H_full = np.zeros(grid.mask.shape + H_block.shape[2:],
                          dtype=np.complex128)
        H_full[np.ix_(grid.rows, grid.cols)] = H_block
        s_hat.append(zf_equalize(H_full[grid.data_mask],
                                 y_bb[grid.data_mask]))
    return s_hat


class SeparatedBaseline(Block):

    def __init__(self, config, rng, grid_rng=None):
        """Separated source-channel design on orthogonal halves of the grid.

        Each UE encodes its modality without channel-feature fusion onto the
        data elements of its share; the BS runs `dmrs_chain` and a fusion
        decoder on the equalized features. Gradients treat the receiver as
        the identity plus a constant equalization error.
        """
        super().__init__()
        if config.K != 2:
            raise ValueError("The separated baseline supports K = 2, got {0}"
                             .format(config.K))
        self.config = config.replace(transmission='orthogonal')
        c = self.config
        grid_rng = rng if grid_rng is None else grid_rng
        self.shares = ResourceShare.for_config(c)
        self.grids = [DmrsGrid(share, c.N_RF_t, grid_rng)
                      for share in self.shares]
        self.ue = [self.add_block('ue{0}'.format(k),
                                  UeMsfNet(MODALITY_CHANNELS[k], c, rng,
                                           share=self.grids[k].data_share))
                   for k in range(c.K)]
        self.bs = self.add_block('bs', BsMsfNet(c, rng))

    def forward(self, images, H_data, W_RF, F_RF, sigma2=0., rng=None):
        """
        Parameters
        ----------
        images : sequence of array_like
            Per-user modality batches.
        H_data : array_like
            ``[b, K, Q, N_c, N_r, N_t]``.
        W_RF, F_RF : array_like
            Fixed beamformers ``[b, N_RF_r, N_r]`` and
            ``[b, K, N_t, N_RF_t]``.

        Returns
        -------
        R : `~semlink.numcore.Tensor`
            Logits ``[b, C, H, W]``.
        """
        H_data = np.asarray(H_data)
        F_RF = np.asarray(F_RF)
        S = nc.stack([ue(img, None, Tensor(F_RF[:, k]))
                      for k, (ue, img) in enumerate(zip(self.ue, images))],
                     axis=1)
        S_eq = np.zeros_like(S.value)
        for i in range(S.shape[0]):
            s_data = [S.value[i, k][g.data_mask]
                      for k, g in enumerate(self.grids)]
            s_hat = dmrs_chain(s_data, H_data[i], W_RF[i], F_RF[i],
                               self.grids, sigma2, rng)
            for k, g in enumerate(self.grids):
                S_eq[i, k][g.data_mask] = s_hat[k]
        S_hat = S + Tensor(S_eq - S.value)
        return self.bs(identity_superpose(S_hat))


def orthogonal_variant(S_BB, F_RF, W_RF, H_data, shares, sigma2=0.,
                       rng=None):
    """Received features of users transmitting on disjoint shares.

    Parameters
    ----------
    S_BB : `~semlink.numcore.Tensor`
        ``[b, 2, Q, N_c, N_RF_t]`` with user ``k`` zero outside
        ``shares[k]``.
    shares : list of `~semlink.semnet.ResourceShare`

    Returns
    -------
    features : list of `~semlink.numcore.Tensor`
        Per user ``[b, n_re, N_RF_r]`` gathered from the user's share.
    """
    S_BB = nc.as_tensor(S_BB)
    if S_BB.ndim != 5 or S_BB.shape[1] != 2 or len(shares) != 2:
        raise ValueError("Orthogonal transmission supports exactly two "
                         "users.")
    overlap = shares[0].mask & shares[1].mask
    if overlap.any():
        raise ValueError("Orthogonal shares overlap on {0} resource elements"
                         .format(int(overlap.sum())))
    Y = transmit_superpose(S_BB, F_RF, W_RF, H_data, sigma2, rng)
    grid = nc.transpose(Y, (0, 3, 1, 2))
    return [share.gather(grid) for share in shares]
