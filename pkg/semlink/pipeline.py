"""
The end-to-end link: learnable CSI-RS, channel-semantic feedback, analog
beamforming, UE fusion encoders, over-the-air superposition and the BS
fusion decoder, grouped into the ``physical`` and ``semantic`` parameter
sets trained by the three stages.
"""

# Standard library
from collections import OrderedDict

# Third-party
import numpy as np

# Project
from . import numcore as nc
from .nnblocks import Block
from .phynet import PhysicalLayer, spectral_efficiency
from .semnet import (ResourceShare, UeMsfNet, BsMsfNet, transmit_superpose,
                     identity_superpose, MODALITY_CHANNELS)

__all__ = ['CscSaNet', 'GROUPS']

GROUPS = ('semantic', 'physical')


class CscSaNet(Block):

    def __init__(self, config, rng):
        """Channel-semantic-aware multimodal link.

        Parameters
        ----------
        config : `~semlink.config.ExperimentConfig`
            ``transmission`` selects non-orthogonal (shared grid) or
            orthogonal (disjoint halves) user resources.
        rng : `numpy.random.Generator`
            Initial weights.
        """
        super().__init__()
        if config.K != len(MODALITY_CHANNELS):
            raise ValueError("The multimodal link needs K = {0} users, got {1}"
                             .format(len(MODALITY_CHANNELS), config.K))
        self.config = config
        self.shares = ResourceShare.for_config(config)
        self.phy = self.add_block('phy', PhysicalLayer(config, rng))
        self.ue = [self.add_block('ue{0}'.format(k),
                                  UeMsfNet(MODALITY_CHANNELS[k], config, rng,
                                           share=self.shares[k]))
                   for k in range(config.K)]
        self.bs = self.add_block('bs', BsMsfNet(config, rng))

    def parameters(self, prefix='', group=None):
        """Trainable tensors, optionally restricted to one group."""
        params = super().parameters(prefix)
        if group is None:
            return params
        if group not in GROUPS:
            raise ValueError("Unknown parameter group {0!r}; expected one of "
                             "{1}".format(group, GROUPS))
        phy = prefix + 'phy.'
        keep = (lambda name: name.startswith(phy)) if group == 'physical' \
            else (lambda name: not name.startswith(phy))
        return OrderedDict((n, p) for n, p in params.items() if keep(n))

    def group_parameters(self, groups):
        out = OrderedDict()
        for group in groups:
            out.update(self.parameters(group=group))
        return out

    def forward_identity(self, images):
        """Stage-1 path: no channel features, noiseless identity channel."""
        S = nc.stack([ue(img) for ue, img in zip(self.ue, images)], axis=1)
        return self.bs(identity_superpose(S))

    def forward_phy(self, H, rng=None):
        """Physical-layer outputs and per-sample spectral efficiency on the
        data symbols of ``H [b, K, L + Q, N_c, N_r, N_t]``."""
        c = self.config
        out = self.phy(np.asarray(H), rng)
        eta = spectral_efficiency(out.W_RF, out.F_RF,
                                  np.asarray(H)[:, :, c.L:], c.P_t, c.sigma2)
        return out, eta

    def forward(self, images, H, rng=None):
        """Full link from the users' modality batches to BS logits.

        Parameters
        ----------
        images : sequence of array_like
            ``[b, 3, H, W]`` and ``[b, 1, H, W]``.
        H : array_like
            ``[b, K, L + Q, N_c, N_r, N_t]``.
        rng : `numpy.random.Generator` (optional)
            Noise for CSI-RS and data reception.
        """
        c = self.config
        H = np.asarray(H)
        out = self.phy(H, rng)
        S = nc.stack([ue(img, out.S_UE[:, k], out.F_RF[:, k])
                      for k, (ue, img) in enumerate(zip(self.ue, images))],
                     axis=1)
        Y = transmit_superpose(S, out.F_RF, out.W_RF, H[:, :, c.L:],
                               c.sigma2, rng)
        return self.bs(Y, out.S_BS)
