"""
Semantic layer: a synthetic two-modality segmentation task, the UE and BS
multimodal semantic fusion networks, the semantic fusion attention (SFA)
gate, over-the-air superposition of the users' transmit features, and the
segmentation loss and metrics.
"""

# Standard library
from collections import OrderedDict, namedtuple

# Third-party
import numpy as np

# Project
from . import numcore as nc
from .numcore import DimensionError, NumericError, Tensor
from .nnblocks import Block, Linear, ConvEncoder, ConvDecoder
from .channel import add_awgn
from .storage import write_bundle, read_bundle
from .utils import parallel_map

__all__ = ['SourceSample', 'MultimodalDataset', 'gen_multimodal_sample',
           'SfaModule', 'ResourceShare', 'UeMsfNet', 'BsMsfNet',
           'transmit_superpose', 'identity_superpose', 'received_features',
           'seg_loss', 'predict', 'miou', 'per_class_iou', 'pixel_accuracy',
           'MODALITY_CHANNELS']

SourceSample = namedtuple('SourceSample', ['modA', 'modB', 'label'])

# input channels of the modality carried by each user
MODALITY_CHANNELS = (3, 1)

BACKGROUND = 0.45

# class -> per-channel intensity; background level hides a class
_INTENSITY_A = {1: (0.95, 0.95, 0.0),
                2: (0.0, 0.9, 0.95),
                3: (BACKGROUND, BACKGROUND, BACKGROUND)}
_INTENSITY_B = {1: (0.95, ),
                2: (BACKGROUND, ),
                3: (0.0, )}


def _shape_mask(kind, cy, cx, r, H, W):
    yy, xx = np.mgrid[:H, :W]
    dy, dx = np.abs(yy - cy), np.abs(xx - cx)
    if kind == 1:  # rectangle
        return (dy <= r) & (dx <= max(1, (2 * r) // 3))
    elif kind == 2:  # disk
        return dy**2 + dx**2 <= r**2
    # cross
    arm = max(1, r // 3)
    return ((dy <= r) & (dx <= arm)) | ((dx <= r) & (dy <= arm))


def gen_multimodal_sample(rng, config, n_shapes=None):
    """Draw one aligned two-modality image pair with its label mask.

    Shapes are rectangles (class 1), disks (class 2) and crosses (class 3)
    on a class-0 background. Modality A (three channels) shows classes 1
    and 2 but renders crosses at background level; modality B (one
    channel) shows classes 1 and 3 but hides disks. Only the fused pair
    identifies every class.

    Parameters
    ----------
    rng : `numpy.random.Generator`
    config : `~semlink.config.ExperimentConfig`
        Uses ``H``, ``W``, ``C``, ``min_shapes``, ``max_shapes`` and
        ``pixel_noise``.
    n_shapes : int (optional)
        Override the number of shapes drawn.

    Returns
    -------
    sample : `SourceSample`
    """
    if config.C < 4:
        raise ValueError("The synthetic task needs at least 4 classes, got "
                         "C={0}".format(config.C))
    H, W = config.H, config.W
    if n_shapes is None:
        n_shapes = int(rng.integers(config.min_shapes, config.max_shapes + 1))

    label = np.zeros((H, W), dtype=int)
    r_min = max(2, min(H, W) // 8)
    r_max = max(r_min, min(H, W) // 4)
    for _ in range(n_shapes):
        for _attempt in range(50):
            kind = int(rng.integers(1, 4))
            r = int(rng.integers(r_min, r_max + 1))
            cy = int(rng.integers(r, H - r))
            cx = int(rng.integers(r, W - r))
            mask = _shape_mask(kind, cy, cx, r, H, W)
            # one-pixel gap between shapes
            grown = mask.copy()
            grown[1:] |= mask[:-1]
            grown[:-1] |= mask[1:]
            grown[:, 1:] |= mask[:, :-1]
            grown[:, :-1] |= mask[:, 1:]
            if not np.any(label[grown]):
                label[mask] = kind
                break

    modA = np.full((3, H, W), BACKGROUND)
    modB = np.full((1, H, W), BACKGROUND)
    for cls in (1, 2, 3):
        where = label == cls
        modA[:, where] = np.array(_INTENSITY_A[cls])[:, None]
        modB[:, where] = np.array(_INTENSITY_B[cls])[:, None]

    sigma = config.pixel_noise
    modA = np.clip(modA + sigma * rng.standard_normal(modA.shape), 0., 1.)
    modB = np.clip(modB + sigma * rng.standard_normal(modB.shape), 0., 1.)
    return SourceSample(modA, modB, label)


class MultimodalDataset:

    def __init__(self, modA, modB, labels, seed=None):
        """Aligned image pairs and label masks.

        Parameters
        ----------
        modA : array_like
            ``[n, 3, H, W]``.
        modB : array_like
            ``[n, 1, H, W]``.
        labels : array_like
            Integer ``[n, H, W]``.
        seed : int (optional)
            Master seed the data were generated from.
        """
        self.modA = np.asarray(modA, dtype=np.float64)
        self.modB = np.asarray(modB, dtype=np.float64)
        self.labels = np.asarray(labels).astype(int)
        self.seed = seed
        n = len(self.labels)
        if (self.modA.ndim != 4 or self.modB.ndim != 4 or
                self.labels.ndim != 3 or len(self.modA) != n or
                len(self.modB) != n):
            raise DimensionError("Dataset arrays must be [n, 3, H, W], "
                                 "[n, 1, H, W] and [n, H, W]; got {0}, {1}, "
                                 "{2}".format(self.modA.shape,
                                              self.modB.shape,
                                              self.labels.shape))
        if (self.modA.shape[2:] != self.labels.shape[1:] or
                self.modB.shape[2:] != self.labels.shape[1:]):
            raise DimensionError("Image and label sizes disagree.")

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, index):
        if np.isscalar(index):
            index = [index]
        return MultimodalDataset(self.modA[index], self.modB[index],
                                 self.labels[index], seed=self.seed)

    def __repr__(self):
        return '<MultimodalDataset n={0} size={1}x{2}>'.format(
            len(self), *self.labels.shape[1:])

    @classmethod
    def generate(cls, config, streams, n=None):
        """Draw ``n`` (default ``config.n_samples``) samples in parallel;
        sample ``i`` uses the sub-stream ``('dataset', i)``."""
        n = config.n_samples if n is None else int(n)

        def draw(i):
            return gen_multimodal_sample(streams.generator('dataset', i),
                                         config)

        samples = parallel_map(draw, range(n))
        return cls(np.stack([s.modA for s in samples]),
                   np.stack([s.modB for s in samples]),
                   np.stack([s.label for s in samples]), seed=streams.seed)

    def split(self, fractions=(0.8, 0.1, 0.1)):
        """Contiguous train/validation/test partition of the sample
        indices."""
        fractions = np.asarray(fractions, dtype=float)
        if fractions.shape != (3, ) or np.any(fractions < 0) or \
                not np.isclose(fractions.sum(), 1.):
            raise ValueError("Split fractions must be three non-negative "
                             "numbers summing to 1, got {0}"
                             .format(list(fractions)))
        n = len(self)
        stops = np.round(np.cumsum(fractions) * n).astype(int)
        stops[-1] = n
        bounds = [0] + list(stops)
        return tuple(self[np.arange(bounds[i], bounds[i + 1])]
                     for i in range(3))

    def batches(self, batch_size, rng=None):
        """Yield index arrays of at most ``batch_size`` samples; shuffled
        when ``rng`` is given."""
        if batch_size < 1:
            raise ValueError("Batch size must be positive, got {0}"
                             .format(batch_size))
        order = np.arange(len(self))
        if rng is not None:
            order = rng.permutation(order)
        for start in range(0, len(order), batch_size):
            yield order[start:start + batch_size]

    def write(self, path, config=None):
        meta = OrderedDict([('kind', 'dataset'),
                            ('dims', list(self.labels.shape)),
                            ('seed', self.seed)])
        if config is not None:
            meta['config'] = config.to_dict()
        arrays = OrderedDict([('modA', self.modA), ('modB', self.modB),
                              ('labels', self.labels.astype(np.float64))])
        write_bundle(path, arrays, **meta)

    @classmethod
    def read(cls, path):
        arrays, meta = read_bundle(path, required=('dims', 'seed'))
        for name in ('modA', 'modB', 'labels'):
            if name not in arrays:
                raise ValueError("Manifest field 'arrays.{0}' is missing in "
                                 "{1}".format(name, path))
        if list(arrays['labels'].shape) != meta['dims']:
            raise ValueError("Manifest field 'dims' ({0}) does not match the "
                             "stored labels {1}"
                             .format(meta['dims'],
                                     list(arrays['labels'].shape)))
        return cls(arrays['modA'], arrays['modB'], arrays['labels'],
                   seed=meta['seed'])


class SfaModule(Block):

    def __init__(self, d_s, N_c, d_CSI, d_c, d_sfa, rng):
        """Semantic fusion attention.

        Channel-wise means of the source feature are concatenated with a
        ``d_c``-dimensional embedding of the flattened channel semantic
        feature; a two-layer network predicts one gate in ``(0, 1)`` per
        source channel.
        """
        super().__init__()
        self.d_s = d_s
        self.csi_width = N_c * d_CSI
        self.fc_csi = self.add_block('fc_csi', Linear(self.csi_width, d_c,
                                                      rng))
        self.fc1 = self.add_block('fc1', Linear(d_s + d_c, d_sfa, rng))
        self.fc2 = self.add_block('fc2', Linear(d_sfa, d_s, rng))

    def gates(self, F_s, F_csi=None):
        F_s = nc.as_tensor(F_s)
        if F_s.ndim != 4 or F_s.shape[1] != self.d_s:
            raise DimensionError("SFA expects [batch, {0}, H_s, W_s], got {1}"
                                 .format(self.d_s, F_s.shape))
        b = F_s.shape[0]
        pooled = nc.mean(F_s, axis=(2, 3))
        if F_csi is None:
            flat = Tensor(np.zeros((b, self.csi_width)))
        else:
            F_csi = nc.as_tensor(F_csi)
            if F_csi.size != b * self.csi_width:
                raise DimensionError("SFA channel feature must hold {0} values "
                                     "per sample, got shape {1}"
                                     .format(self.csi_width, F_csi.shape))
            flat = nc.reshape(F_csi, (b, self.csi_width))
        context = nc.concat([pooled, self.fc_csi(flat)], axis=-1)
        return nc.sigmoid(self.fc2(nc.relu(self.fc1(context))))

    def forward(self, F_s, F_csi=None):
        F_s = nc.as_tensor(F_s)
        G = self.gates(F_s, F_csi)
        return F_s * nc.reshape(G, G.shape + (1, 1))


class ResourceShare:

    def __init__(self, mask):
        """Resource elements ``[Q, N_c]`` a user transmits on.

        The user's compact feature of ``n_re`` entries is placed on the
        marked elements in row-major (symbol, subcarrier) order.
        """
        self.mask = np.asarray(mask, dtype=bool)
        if self.mask.ndim != 2:
            raise DimensionError("Resource mask must be [Q, N_c].")
        if not self.mask.any():
            raise ValueError("Resource share is empty.")
        flat = np.flatnonzero(self.mask)
        self.placement = np.zeros((self.mask.size, flat.size))
        self.placement[flat, np.arange(flat.size)] = 1.

    def __repr__(self):
        return '<ResourceShare {0}/{1} REs>'.format(self.n_re, self.mask.size)

    @property
    def n_re(self):
        return self.placement.shape[1]

    @property
    def Q(self):
        return self.mask.shape[0]

    @property
    def N_c(self):
        return self.mask.shape[1]

    @classmethod
    def full(cls, Q, N_c):
        return cls(np.ones((Q, N_c), dtype=bool))

    @classmethod
    def orthogonal(cls, Q, N_c, user):
        """Half of the grid for ``user`` in ``{0, 1}``: split by OFDM
        symbols when ``Q`` is even, otherwise by subcarriers."""
        if user not in (0, 1):
            raise ValueError("Orthogonal shares exist for two users, got "
                             "user={0}".format(user))
        mask = np.zeros((Q, N_c), dtype=bool)
        if Q % 2 == 0:
            half = Q // 2
            mask[user * half:(user + 1) * half] = True
        else:
            half = N_c // 2
            if half == 0:
                raise ValueError("Cannot split a single subcarrier between "
                                 "two users.")
            if user == 0:
                mask[:, :half] = True
            else:
                mask[:, half:] = True
        return cls(mask)

    @classmethod
    def for_config(cls, config):
        """Per-user shares of the configured transmission scheme."""
        if config.transmission == 'orthogonal':
            return [cls.orthogonal(config.Q, config.N_c, k)
                    for k in range(config.K)]
        return [cls.full(config.Q, config.N_c)] * config.K

    def scatter(self, compact):
        """``[b, n_re, s]`` to the grid ``[b, Q, N_c, s]`` (zeros
        elsewhere)."""
        compact = nc.as_tensor(compact)
        b, _, s = compact.shape
        P = self.placement + 0j if compact.is_complex else self.placement
        grid = nc.einsum('gm,bms->bgs', Tensor(P), compact)
        return nc.reshape(grid, (b, self.Q, self.N_c, s))

    def gather(self, grid):
        """``[b, Q, N_c, s]`` to ``[b, n_re, s]``."""
        grid = nc.as_tensor(grid)
        b, _, _, s = grid.shape
        flat = nc.reshape(grid, (b, self.mask.size, s))
        P = self.placement + 0j if grid.is_complex else self.placement
        return nc.einsum('gm,bgs->bms', Tensor(P), flat)


def _power_normalize(S, F_RF, target):
    """Scale ``S [b, Q, N_c, N_RF_t]`` so that ``||F_RF S||_F^2 = target``
    per batch element."""
    if F_RF is None:
        norm = nc.frobenius_norm(S, axis=(1, 2, 3))
    else:
        FS = nc.einsum('bts,bqns->bqnt', F_RF, S)
        norm = nc.frobenius_norm(FS, axis=(1, 2, 3))
    if np.any(norm.value == 0):
        raise NumericError("Cannot normalize a zero transmit feature.")
    b = S.shape[0]
    return nc.scale(nc.div(S, nc.reshape(norm, (b, 1, 1, 1))),
                    np.sqrt(target))


class UeMsfNet(Block):

    def __init__(self, in_channels, config, rng, share=None):
        """UE multimodal semantic fusion network.

        Encodes the source image, fuses it with the UE channel semantic
        feature through SFA, and maps the result to the complex baseband
        feature on the user's resource share with the transmit power fixed
        to ``P_t`` per occupied resource element.

        Parameters
        ----------
        in_channels : int
            Channels of this user's modality.
        config : `~semlink.config.ExperimentConfig`
        rng : `numpy.random.Generator`
        share : `ResourceShare` (optional)
            Defaults to the full ``Q x N_c`` grid.
        """
        super().__init__()
        c = config
        if not c.codec_supported:
            raise DimensionError("Cannot reduce {0}x{1} images to {2}x{3} "
                                 "features with stride-2 blocks"
                                 .format(c.H, c.W, c.H_s, c.W_s))
        self.config = config
        self.share = ResourceShare.full(c.Q, c.N_c) if share is None else share
        self.encoder = self.add_block(
            'encoder', ConvEncoder(in_channels, c.enc_width, c.d_s,
                                   c.n_enc_blocks, rng,
                                   image_size=(c.H, c.W)))
        self.sfa = self.add_block('sfa', SfaModule(c.d_s, c.N_c, c.d_CSI,
                                                   c.d_c, c.d_sfa, rng))
        self.n_out = self.share.n_re * c.N_RF_t
        self.fc = self.add_block(
            'fc', Linear(c.d_s * c.H_s * c.W_s, 2 * self.n_out, rng))

    def forward(self, img, S_csi=None, F_RF=None):
        """
        Parameters
        ----------
        img : array_like
            ``[b, in_channels, H, W]``.
        S_csi : `~semlink.numcore.Tensor` (optional)
            ``[b, N_c, d_CSI]``; omitted means a zero channel feature.
        F_RF : `~semlink.numcore.Tensor` (optional)
            ``[b, N_t, N_RF_t]``; omitted normalizes ``S`` itself.

        Returns
        -------
        S_BB : `~semlink.numcore.Tensor`
            Complex ``[b, Q, N_c, N_RF_t]``.
        """
        c = self.config
        feature = self.sfa(self.encoder(img), S_csi)
        b = feature.shape[0]
        flat = nc.reshape(feature, (b, c.d_s * c.H_s * c.W_s))
        out = self.fc(flat)
        S = nc.complex_from_parts(out[:, :self.n_out], out[:, self.n_out:])
        S = self.share.scatter(nc.reshape(S, (b, self.share.n_re, c.N_RF_t)))
        return _power_normalize(S, F_RF, c.P_t * self.share.n_re)


def transmit_superpose(S_BB, F_RF, W_RF, H_data, sigma2=0., rng=None):
    """Non-orthogonal superposition at the BS antennas and analog combining.

    ``y[q, n] = sum_k H[k, q, n] F_RF[k] s[k, q, n] + noise`` and the BS
    keeps ``W_RF y[q, n]``.

    Parameters
    ----------
    S_BB : `~semlink.numcore.Tensor`
        ``[b, K, Q, N_c, N_RF_t]``.
    F_RF : `~semlink.numcore.Tensor`
        ``[b, K, N_t, N_RF_t]``.
    W_RF : `~semlink.numcore.Tensor`
        ``[b, N_RF_r, N_r]``.
    H_data : array_like
        Data-symbol channels ``[b, K, Q, N_c, N_r, N_t]``.

    Returns
    -------
    Y_BB : `~semlink.numcore.Tensor`
        ``[b, N_c, N_RF_r, Q]``.
    """
    S_BB, F_RF, W_RF = (nc.as_tensor(S_BB), nc.as_tensor(F_RF),
                        nc.as_tensor(W_RF))
    H_data = nc.as_tensor(H_data)
    if H_data.ndim != 6 or S_BB.ndim != 5:
        raise DimensionError("transmit_superpose expects S [b, K, Q, N_c, "
                             "N_RF_t] and H [b, K, Q, N_c, N_r, N_t], got {0} "
                             "and {1}".format(S_BB.shape, H_data.shape))
    y = nc.einsum('bkqnrt,bkts,bkqns->bqnr', H_data, F_RF, S_BB)
    if sigma2 > 0:
        if rng is None:
            raise ValueError("A noise generator is required when sigma2 > 0.")
        y = add_awgn(y, sigma2, rng)
    elif sigma2 < 0:
        raise ValueError("Noise variance must be non-negative, got {0}"
                         .format(sigma2))
    return nc.einsum('bar,bqnr->bnaq', W_RF, y)


def identity_superpose(S_BB):
    """Noiseless identity-channel reception ``sum_k S_BB[k]``, arranged as
    ``[b, N_c, N_RF, Q]``."""
    S_BB = nc.as_tensor(S_BB)
    if S_BB.ndim != 5:
        raise DimensionError("identity_superpose expects [b, K, Q, N_c, "
                             "N_RF], got {0}".format(S_BB.shape))
    return nc.transpose(nc.sum(S_BB, axis=1), (0, 2, 3, 1))


def received_features(Y_BB, shares=None):
    """Real feature vector ``[b, 2 * N_c * N_RF_r * Q]`` from the received
    grid, after per-sample gain normalization to unit RMS.

    With per-user ``shares`` the users' resource elements are gathered
    separately and concatenated.

    Notes
    -----
    The unit-RMS normalization acts as automatic gain control at the BS: the
    features, and so the BS-MSFNet logits, do not change when ``Y_BB`` is
    multiplied by a positive constant.
    """
    Y_BB = nc.as_tensor(Y_BB)
    b = Y_BB.shape[0]
    count = Y_BB.size // b
    rms = nc.scale(nc.frobenius_norm(Y_BB, axis=(1, 2, 3)),
                   1. / np.sqrt(count))
    Y = nc.div(Y_BB, nc.reshape(rms + 1e-12, (b, 1, 1, 1)))
    if shares is None:
        flat = nc.reshape(Y, (b, count))
    else:
        grid = nc.transpose(Y, (0, 3, 1, 2))
        parts = [nc.reshape(share.gather(grid), (b, -1)) for share in shares]
        flat = nc.concat(parts, axis=-1)
    return nc.concat([nc.real(flat), nc.imag(flat)], axis=-1)


class BsMsfNet(Block):

    def __init__(self, config, rng):
        """BS multimodal semantic fusion network: received feature to
        ``d_s x H_s x W_s``, SFA with the BS channel feature, conv decoder
        to ``C`` class logits. No channel estimation or per-user detection
        takes place."""
        super().__init__()
        c = config
        self.config = config
        self.shares = (ResourceShare.for_config(c)
                       if c.transmission == 'orthogonal' else None)
        width = 2 * c.N_c * c.N_RF_r * c.Q
        self.fc_in = self.add_block(
            'fc_in', Linear(width, c.d_s * c.H_s * c.W_s, rng))
        self.sfa = self.add_block('sfa', SfaModule(c.d_s, c.N_c, c.d_CSI,
                                                   c.d_c, c.d_sfa, rng))
        self.decoder = self.add_block(
            'decoder', ConvDecoder(c.d_s, c.enc_width, c.C, c.n_enc_blocks,
                                   rng))

    def forward(self, Y_BB, S_csi=None):
        c = self.config
        Y_BB = nc.as_tensor(Y_BB)
        if Y_BB.ndim != 4 or Y_BB.shape[1:] != (c.N_c, c.N_RF_r, c.Q):
            raise DimensionError("BS-MSFNet expects [batch, {0}, {1}, {2}], "
                                 "got {3}".format(c.N_c, c.N_RF_r, c.Q,
                                                  Y_BB.shape))
        b = Y_BB.shape[0]
        x = self.fc_in(received_features(Y_BB, self.shares))
        feature = nc.reshape(x, (b, c.d_s, c.H_s, c.W_s))
        return self.decoder(self.sfa(feature, S_csi))


def _check_labels(label, n_classes):
    label = np.asarray(label)
    if not np.issubdtype(label.dtype, np.integer):
        if not np.all(np.mod(label, 1) == 0):
            raise ValueError("Labels must be integers.")
        label = label.astype(int)
    if label.size and (label.min() < 0 or label.max() >= n_classes):
        raise ValueError("Label values must lie in [0, {0}), got range "
                         "[{1}, {2}]".format(n_classes, label.min(),
                                             label.max()))
    return label


def seg_loss(R, label):
    """Pixel-mean cross-entropy of logits ``R [b, C, H, W]`` (or
    ``[C, H, W]``) against integer labels."""
    R = nc.as_tensor(R)
    if R.ndim == 3:
        R = nc.reshape(R, (1, ) + R.shape)
        label = np.asarray(label)[None]
    n_classes = R.shape[1]
    label = _check_labels(label, n_classes)
    if label.shape != (R.shape[0], ) + R.shape[2:]:
        raise DimensionError("Labels {0} do not match logits {1}"
                             .format(label.shape, R.shape))
    onehot = (label[:, None] == np.arange(n_classes)[None, :, None, None])
    logp = nc.log_softmax(R, axis=1)
    total = nc.sum(logp * onehot.astype(np.float64))
    return nc.scale(total, -1. / label.size)


def predict(R):
    """Arg-max class per pixel of logits with the class axis third from
    last."""
    value = R.value if isinstance(R, Tensor) else np.asarray(R)
    return np.argmax(value, axis=-3)


def _as_prediction(R, label):
    label = np.asarray(label)
    value = R.value if isinstance(R, Tensor) else np.asarray(R)
    if value.ndim == label.ndim + 1:
        return predict(value), value.shape[-3]
    return value.astype(int), None


def per_class_iou(R, label, n_classes=None):
    """Intersection-over-union of each class pooled over all pixels; NaN for
    classes absent from both prediction and truth."""
    pred, n_logit_classes = _as_prediction(R, label)
    label = np.asarray(label).astype(int)
    if pred.shape != label.shape:
        raise DimensionError("Prediction {0} and label {1} shapes differ"
                             .format(pred.shape, label.shape))
    if n_classes is None:
        n_classes = n_logit_classes or int(max(pred.max(), label.max())) + 1
    label = _check_labels(label, n_classes)
    iou = np.full(n_classes, np.nan)
    for c in range(n_classes):
        p, g = pred == c, label == c
        union = np.count_nonzero(p | g)
        if union:
            iou[c] = np.count_nonzero(p & g) / union
    return iou


def miou(R, label, n_classes=None):
    """Mean IoU over the classes present in prediction or truth.

    ``R`` is either logits (class axis third from last) or an integer
    prediction mask of the label's shape.
    """
    iou = per_class_iou(R, label, n_classes)
    if np.all(np.isnan(iou)):
        return np.nan
    return float(np.nanmean(iou))


def pixel_accuracy(R, label):
    pred, _ = _as_prediction(R, label)
    return float(np.mean(pred == np.asarray(label)))
