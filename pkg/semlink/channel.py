# Standard library
from collections import OrderedDict

# Third-party
from astropy.constants import c
import astropy.units as u
from astropy.utils.decorators import lazyproperty
import numpy as np

# Project
from .numcore import Tensor, add, DimensionError
from .storage import write_bundle, read_bundle
from .utils import parallel_map

__all__ = ['OfdmConfig', 'PathSet', 'ChannelSet', 'steering_vector',
           'steering_tx', 'steering_rx', 'max_doppler', 'sample_paths',
           'assemble_channel', 'generate_channels', 'add_awgn']


class OfdmConfig:

    @u.quantity_input(delta_f=u.Hz, f_c=u.Hz)
    def __init__(self, N_c, delta_f=120*u.kHz, f_c=28*u.GHz, N_cp=None):
        """OFDM numerology.

        Parameters
        ----------
        N_c : int
            Number of subcarriers.
        delta_f : quantity_like [frequency] (optional)
            Subcarrier spacing. Default 120 kHz.
        f_c : quantity_like [frequency] (optional)
            Carrier frequency. Default 28 GHz.
        N_cp : int (optional)
            Cyclic-prefix length in samples. Default ``N_c // 4``.
        """
        if N_c < 1:
            raise ValueError("Number of subcarriers must be positive, got {0}"
                             .format(N_c))
        if delta_f <= 0 * u.Hz or f_c <= 0 * u.Hz:
            raise ValueError("delta_f and f_c must be positive.")
        self.N_c = int(N_c)
        self.N_cp = self.N_c // 4 if N_cp is None else int(N_cp)
        if self.N_cp < 0:
            raise ValueError("Cyclic prefix length must be non-negative.")
        self.delta_f = delta_f
        self.f_c = f_c

    @lazyproperty
    def T_s(self):
        """Sampling interval ``1 / (N_c delta_f)``."""
        return (1 / (self.N_c * self.delta_f)).to(u.s)

    @lazyproperty
    def T_I(self):
        """OFDM symbol interval including the cyclic prefix."""
        return ((self.N_c + self.N_cp) * self.T_s).to(u.s)

    def __repr__(self):
        return ('<OfdmConfig N_c={0} N_cp={1} delta_f={2} f_c={3}>'
                .format(self.N_c, self.N_cp, self.delta_f, self.f_c))


def steering_vector(theta, N):
    """Half-wavelength ULA response ``exp(j pi (m-1) sin(theta)) / sqrt(N)``.

    Parameters
    ----------
    theta : numeric, array_like
        Angle(s) in radians.
    N : int
        Number of antennas.

    Returns
    -------
    a : `~numpy.ndarray`
        Complex array of shape ``theta.shape + (N,)`` with unit norm along
        the last axis.
    """
    if N < 1:
        raise ValueError("Array size must be positive, got {0}".format(N))
    theta = np.asarray(theta, dtype=np.float64)
    m = np.arange(N)
    return np.exp(1j * np.pi * m * np.sin(theta)[..., None]) / np.sqrt(N)


steering_tx = steering_vector
steering_rx = steering_vector


@u.quantity_input(v=u.m/u.s, f_c=u.Hz)
def max_doppler(v, f_c):
    """Largest Doppler shift ``v f_c / c`` seen by a UE moving at ``v``."""
    return (v * f_c / c).to(u.Hz)


class PathSet:

    def __init__(self, gain, theta_t, theta_r, tau, f_d, n_paths):
        """Multipath parameters of ``K`` users, padded to the largest path
        count.

        Parameters
        ----------
        gain : array_like
            Complex path gains, shape ``[K, P]``. Padding entries are zero.
        theta_t, theta_r : array_like
            Departure (UE) and arrival (BS) angles in radians, ``[K, P]``.
        tau : quantity_like [time]
            Path delays, ``[K, P]``.
        f_d : quantity_like [frequency]
            Doppler shifts, ``[K, P]``.
        n_paths : array_like
            Number of real paths per user, ``[K]``.
        """
        self.gain = np.asarray(gain, dtype=np.complex128)
        self.theta_t = np.asarray(theta_t, dtype=np.float64)
        self.theta_r = np.asarray(theta_r, dtype=np.float64)
        self.tau = u.Quantity(tau, u.s)
        self.f_d = u.Quantity(f_d, u.Hz)
        self.n_paths = np.asarray(n_paths, dtype=int)

        shape = self.gain.shape
        for name in ['theta_t', 'theta_r', 'tau', 'f_d']:
            if getattr(self, name).shape != shape:
                raise DimensionError("PathSet field {0} has shape {1}, "
                                     "expected {2}"
                                     .format(name, getattr(self, name).shape,
                                             shape))
        if self.n_paths.shape != shape[:1]:
            raise DimensionError("n_paths must have shape {0}"
                                 .format(shape[:1]))
        if np.any(np.abs(self.theta_t) > np.pi) or \
                np.any(np.abs(self.theta_r) > np.pi):
            raise ValueError("Path angles must lie in [-pi, pi].")
        if np.any(self.tau < 0 * u.s):
            raise ValueError("Path delays must be non-negative.")

    @property
    def K(self):
        return self.gain.shape[0]

    @property
    def mask(self):
        """Boolean ``[K, P]`` marking real (non-padding) paths."""
        return np.arange(self.gain.shape[1])[None, :] < self.n_paths[:, None]


def sample_paths(config, rng):
    """Draw a `PathSet` for all users of ``config``.

    Each user gets ``L_p ~ U{L_p_min, ..., L_p_max}`` paths with unit-variance
    circularly-symmetric complex Gaussian gains, angles uniform in
    ``(-pi, pi)``, delays uniform in ``[0, tau_max T_s]`` and Doppler shifts
    ``v f_c cos(psi) / c`` with the user speed ``v ~ U(0, v_max)`` and
    per-path ``psi ~ U(0, 2 pi)``.

    Parameters
    ----------
    config : `~semlink.config.ExperimentConfig`
    rng : `numpy.random.Generator`
    """
    K = config.K
    P = config.L_p_max
    T_s = config.ofdm.T_s.to_value(u.s)
    f_dmax = max_doppler(config.v_max, config.f_c).to_value(u.Hz)

    gain = np.zeros((K, P), dtype=np.complex128)
    theta_t = np.zeros((K, P))
    theta_r = np.zeros((K, P))
    tau = np.zeros((K, P))
    f_d = np.zeros((K, P))
    n_paths = np.zeros(K, dtype=int)
    for k in range(K):
        n = int(rng.integers(config.L_p_min, config.L_p_max + 1))
        n_paths[k] = n
        gain[k, :n] = (rng.standard_normal(n) +
                       1j * rng.standard_normal(n)) / np.sqrt(2)
        theta_t[k, :n] = rng.uniform(-np.pi, np.pi, n)
        theta_r[k, :n] = rng.uniform(-np.pi, np.pi, n)
        tau[k, :n] = rng.uniform(0, config.tau_max * T_s, n)
        v = rng.uniform(0, 1.)
        psi = rng.uniform(0, 2 * np.pi, n)
        f_d[k, :n] = v * f_dmax * np.cos(psi)

    return PathSet(gain, theta_t, theta_r, tau * u.s, f_d * u.Hz, n_paths)


def assemble_channel(paths, config, q_index=None, n_index=None):
    """Frequency-selective, time-varying channel matrices.

    ``H[k, q, n] = sum_l alpha a_r(theta_r) a_t(theta_t)^H
    exp(-j 2 pi n tau / (N_c T_s)) exp(j 2 pi f_d q T_I) / sqrt(L_p)``

    Parameters
    ----------
    paths : `PathSet`
    config : `~semlink.config.ExperimentConfig`
    q_index : array_like (optional)
        OFDM symbol indices. Default ``1, ..., L + Q``: the first ``L``
        carry CSI-RS, the rest data, on one Doppler trajectory.
    n_index : array_like (optional)
        Subcarrier indices. Default ``1, ..., N_c``.

    Returns
    -------
    channels : `ChannelSet`
        ``H`` has shape ``[K, len(q_index), len(n_index), N_r, N_t]``.
    """
    ofdm = config.ofdm
    if q_index is None:
        q_index = np.arange(1, config.n_symbols + 1)
    if n_index is None:
        n_index = np.arange(1, config.N_c + 1)
    q_index = np.asarray(q_index, dtype=np.float64)
    n_index = np.asarray(n_index, dtype=np.float64)

    T_I = ofdm.T_I.to_value(u.s)
    T_s = ofdm.T_s.to_value(u.s)
    tau = paths.tau.to_value(u.s)
    f_d = paths.f_d.to_value(u.Hz)

    a_r = steering_rx(paths.theta_r, config.N_r)  # [K, P, N_r]
    a_t = steering_tx(paths.theta_t, config.N_t)  # [K, P, N_t]
    delay = np.exp(-2j * np.pi * n_index[None, None, :] * tau[..., None] /
                   (ofdm.N_c * T_s))
    doppler = np.exp(2j * np.pi * f_d[..., None] * q_index[None, None, :] *
                     T_I)
    weight = paths.gain * paths.mask / np.sqrt(paths.n_paths)[:, None]
    coef = (weight[..., None, None] * doppler[..., :, None] *
            delay[..., None, :])
    H = np.einsum('kpqn,kpr,kpt->kqnrt', coef, a_r, np.conj(a_t),
                  optimize=True)

    L = config.L if len(q_index) == config.n_symbols else 0
    return ChannelSet(H, L=L)


def add_awgn(signal, sigma2, rng):
    """Add circularly-symmetric complex Gaussian noise of variance ``sigma2``
    per entry. Works on arrays and on `~semlink.numcore.Tensor` (noise is a
    constant in the graph)."""
    if sigma2 < 0:
        raise ValueError("Noise variance must be non-negative, got {0}"
                         .format(sigma2))
    if sigma2 == 0:
        return signal
    shape = signal.shape
    noise = np.sqrt(sigma2 / 2.) * (rng.standard_normal(shape) +
                                    1j * rng.standard_normal(shape))
    if isinstance(signal, Tensor):
        return add(signal, noise)
    return np.asarray(signal) + noise


class ChannelSet:

    def __init__(self, H, L, noise_var=None, seed=None):
        """Channel realizations for all users, symbols and subcarriers.

        Parameters
        ----------
        H : array_like
            Complex, shape ``[..., K, L + Q, N_c, N_r, N_t]``; leading axes
            index independent realizations.
        L : int
            Number of leading CSI-RS symbols along the symbol axis.
        noise_var : float (optional)
            Noise variance the set was generated for.
        seed : int (optional)
            Master seed of the generating run.
        """
        H = np.asarray(H, dtype=np.complex128)
        if H.ndim < 5:
            raise DimensionError("ChannelSet needs [..., K, symbols, N_c, N_r, "
                                 "N_t], got {0}".format(H.shape))
        if not 0 <= L <= H.shape[-4]:
            raise DimensionError("L={0} exceeds the {1} symbols available"
                                 .format(L, H.shape[-4]))
        if not np.all(np.isfinite(H)):
            raise ValueError("Channel coefficients must be finite.")
        self.H = H
        self.L = int(L)
        self.noise_var = noise_var
        self.seed = seed

    def __repr__(self):
        return '<ChannelSet shape={0} L={1}>'.format(self.H.shape, self.L)

    @property
    def batch_shape(self):
        return self.H.shape[:-5]

    @property
    def K(self):
        return self.H.shape[-5]

    @property
    def n_symbols(self):
        return self.H.shape[-4]

    @property
    def Q(self):
        return self.n_symbols - self.L

    @property
    def N_c(self):
        return self.H.shape[-3]

    @property
    def N_r(self):
        return self.H.shape[-2]

    @property
    def N_t(self):
        return self.H.shape[-1]

    @property
    def pilot(self):
        """Channels seen by the ``L`` CSI-RS symbols."""
        return self.H[..., :self.L, :, :, :]

    @property
    def data(self):
        """Channels seen by the ``Q`` data symbols."""
        return self.H[..., self.L:, :, :, :]

    def __len__(self):
        if not self.batch_shape:
            raise TypeError("Unbatched ChannelSet has no length.")
        return self.batch_shape[0]

    def __getitem__(self, index):
        if not self.batch_shape:
            raise TypeError("Unbatched ChannelSet cannot be indexed.")
        H = self.H[index]
        if H.ndim == self.H.ndim - 1:
            H = H[None]
        return ChannelSet(H, self.L, noise_var=self.noise_var, seed=self.seed)

    @classmethod
    def stack(cls, sets):
        sets = list(sets)
        if not sets:
            raise ValueError("Cannot stack an empty list of ChannelSets.")
        L = sets[0].L
        if any(s.L != L for s in sets):
            raise ValueError("Cannot stack ChannelSets with different L.")
        return cls(np.stack([s.H for s in sets]), L,
                   noise_var=sets[0].noise_var, seed=sets[0].seed)

    def write(self, path, config=None):
        """Write ``H`` as interleaved little-endian float64 plus a manifest
        holding the dimensions, seed and (optionally) the configuration."""
        meta = OrderedDict([('kind', 'channels'),
                            ('dims', list(self.H.shape)),
                            ('L', self.L),
                            ('seed', self.seed),
                            ('noise_var', self.noise_var)])
        if config is not None:
            meta['config'] = config.to_dict()
        write_bundle(path, OrderedDict([('H', self.H)]), **meta)

    @classmethod
    def read(cls, path):
        arrays, meta = read_bundle(path, required=('dims', 'L', 'seed'))
        if 'H' not in arrays:
            raise ValueError("Manifest field 'arrays.H' is missing in {0}"
                             .format(path))
        H = arrays['H']
        dims = meta['dims']
        if not isinstance(dims, list) or list(H.shape) != dims:
            raise ValueError("Manifest field 'dims' ({0}) does not match the "
                             "stored array shape {1}"
                             .format(dims, list(H.shape)))
        if not isinstance(meta['L'], int) or not 0 <= meta['L'] <= H.shape[-4]:
            raise ValueError("Manifest field 'L' is invalid: {0!r}"
                             .format(meta['L']))
        return cls(H, meta['L'], noise_var=meta.get('noise_var'),
                   seed=meta['seed'])


def generate_channels(config, n, streams, offset=0):
    """Draw ``n`` independent channel realizations in parallel.

    Realization ``i`` uses the sub-stream ``('channel', offset + i)``, so
    results do not depend on the worker count.
    """
    def draw(i):
        rng = streams.generator('channel', offset + i)
        return assemble_channel(sample_paths(config, rng), config).H

    H = np.stack(parallel_map(draw, range(n)))
    return ChannelSet(H, config.L, noise_var=config.sigma2,
                      seed=streams.seed)
