"""
Three-stage training: semantic pretraining on a noiseless identity channel,
physical-layer pretraining on spectral efficiency, and joint end-to-end
training on segmentation through the simulated channel. Also trains the
separated DMRS baseline with the same budget and the single-modality
segmentation model used to show that fusion is needed.
"""

# Standard library
from collections import OrderedDict
import os
import time

# Third-party
from astropy import log
from astropy.table import Table
import numpy as np

# Project
from . import numcore as nc
from .numcore import NumericError
from .config import STAGES
from .nnblocks import ConvCodec
from .pipeline import CscSaNet
from .semnet import seg_loss, predict, per_class_iou, MODALITY_CHANNELS
from .baselines import (SeparatedBaseline, ClassicalCsiRs,
                        estimated_beamformers)
from .storage import write_bundle, read_bundle
from .utils import RandomStreams

__all__ = ['Trainer', 'MetricsLog', 'Checkpoint', 'TrainingDivergedError',
           'METRIC_COLUMNS']

METRIC_COLUMNS = ('stage', 'epoch', 'loss', 'miou', 'eta', 'seed',
                  'wallclock_s')

# sub-stream indices of the 'noise' stream reserved for validation/evaluation
_VALIDATION_NOISE = 1000
_EVALUATION_NOISE = 1001


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss or forward pass becomes non-finite."""


class MetricsLog:

    def __init__(self, rows=None):
        """Append-only table of per-epoch metrics."""
        self.rows = []
        for row in rows or []:
            self.append(**dict(zip(METRIC_COLUMNS, row)))

    def __len__(self):
        return len(self.rows)

    def append(self, stage, epoch, loss, miou=np.nan, eta=np.nan, seed=0,
               wallclock_s=0.):
        self.rows.append((str(stage), int(epoch), float(loss), float(miou),
                          float(eta), int(seed), float(wallclock_s)))

    def stage_rows(self, stage):
        return [r for r in self.rows if r[0] == stage]

    def best(self, stage, column):
        """Row of ``stage`` with the largest finite value in ``column``."""
        i = METRIC_COLUMNS.index(column)
        rows = [r for r in self.stage_rows(stage) if np.isfinite(r[i])]
        if not rows:
            return None
        return max(rows, key=lambda r: r[i])

    def to_table(self):
        dtype = [str, int, float, float, float, int, float]
        if not self.rows:
            return Table(names=METRIC_COLUMNS, dtype=dtype)
        return Table(rows=self.rows, names=METRIC_COLUMNS, dtype=dtype)

    def write(self, filename):
        self.to_table().write(filename, format='ascii.csv', overwrite=True)

    @classmethod
    def read(cls, filename):
        if not os.path.isfile(filename):
            raise OSError("Metrics file {0} does not exist".format(filename))
        tbl = Table.read(filename, format='ascii.csv')
        if tuple(tbl.colnames) != METRIC_COLUMNS:
            raise ValueError("Metrics file {0} has columns {1}, expected {2}"
                             .format(filename, tbl.colnames,
                                     list(METRIC_COLUMNS)))
        return cls([tuple(row) for row in tbl])


class Checkpoint:

    def __init__(self, params, stage, epoch, metric, hashes, config=None):
        """Named parameter arrays of a model at one point of training.

        Parameters
        ----------
        params : dict
            Parameter name to array.
        stage : str
        epoch : int
        metric : float
            Validation metric of the stage when the arrays were captured.
        hashes : dict
            ``section_hash`` of the ``semantic`` and ``physical`` sections of
            the configuration the model was built from.
        config : dict (optional)
            Serialized configuration.
        """
        self.params = OrderedDict((n, np.array(v)) for n, v in params.items())
        self.stage = stage
        self.epoch = int(epoch)
        self.metric = float(metric)
        self.hashes = dict(hashes)
        self.config = config

    def __repr__(self):
        return ('<Checkpoint stage={0} epoch={1} metric={2:.4f} '
                '({3} arrays)>'.format(self.stage, self.epoch, self.metric,
                                       len(self.params)))

    @classmethod
    def from_model(cls, model, stage, epoch, metric, config):
        params = OrderedDict((n, p.value) for n, p in
                             model.parameters().items())
        hashes = {s: config.section_hash(s) for s in ('semantic', 'physical')}
        return cls(params, stage, epoch, metric, hashes, config.to_dict())

    def apply(self, model, group=None):
        """Load the arrays into ``model``; with ``group``, only that
        parameter group of a `~semlink.pipeline.CscSaNet` is replaced."""
        if group is None:
            model.load_parameters(self.params)
            return
        names = model.parameters(group=group)
        missing = [n for n in names if n not in self.params]
        if missing:
            raise KeyError("Checkpoint of stage {0!r} lacks parameters: {1}"
                           .format(self.stage, ', '.join(missing)))
        model.load_parameters(OrderedDict((n, self.params[n]) for n in names),
                              strict=False)

    def save(self, path):
        write_bundle(path, self.params, kind='checkpoint', stage=self.stage,
                     epoch=self.epoch, metric=self.metric, hashes=self.hashes,
                     config=self.config)

    @classmethod
    def load(cls, path):
        arrays, meta = read_bundle(path,
                                   required=('stage', 'epoch', 'hashes'))
        if not isinstance(meta['hashes'], dict):
            raise ValueError("Manifest field 'hashes' must be an object.")
        return cls(arrays, meta['stage'], meta['epoch'],
                   meta.get('metric', np.nan), meta['hashes'],
                   meta.get('config'))


class Trainer:

    def __init__(self, config, streams=None, clock=None, out_dir=None):
        """Drive the training stages of one experiment.

        Parameters
        ----------
        config : `~semlink.config.ExperimentConfig`
        streams : `~semlink.utils.RandomStreams` (optional)
            Defaults to streams of ``config.seed``.
        clock : callable (optional)
            Returns seconds; ``wallclock_s`` in the metrics is measured with
            it. Defaults to `time.perf_counter`.
        out_dir : str (optional)
            If given, the best checkpoint of each stage is saved to
            ``out_dir/<stage>``.
        """
        self.config = config
        self.streams = RandomStreams(config.seed) if streams is None \
            else streams
        self.clock = time.perf_counter if clock is None else clock
        self.out_dir = out_dir
        self.model = CscSaNet(config, self.streams.generator('init'))
        self.metrics = MetricsLog()

    # ------------------------------------------------------------------------
    # Generic loop
    #
    def _fit(self, stage, model, params, n_train, step_loss, validate,
             label=None):
        c = self.config
        label = stage if label is None else label
        sched = c.schedule(stage)
        stage_index = STAGES.index(stage) + (10 if label != stage else 0)
        opt = nc.Adam(params, lr=sched.lr)
        best, best_ckpt, stale = -np.inf, None, 0
        start = self.clock()

        for epoch in range(1, sched.epochs + 1):
            order = self.streams.generator('shuffle', stage_index,
                                           epoch).permutation(n_train)
            losses = []
            for step, i0 in enumerate(range(0, n_train, sched.batch_size)):
                idx = order[i0:i0 + sched.batch_size]
                rng = self.streams.generator('noise', stage_index, epoch, step)
                try:
                    loss = step_loss(idx, rng)
                    value = loss.item()
                    if not np.isfinite(value):
                        raise NumericError("loss is {0}".format(value))
                    grads = nc.backward(loss, wrt=list(params.values()))
                    named = OrderedDict((n, grads[p])
                                        for n, p in params.items())
                    named, _ = nc.clip_grad_norm(named, c.clip_norm)
                except NumericError as e:
                    raise TrainingDivergedError(
                        "Training diverged in stage {0}, epoch {1}, step {2}: "
                        "{3}".format(label, epoch, step, e))
                opt.step(named)
                losses.append(value)

            metric, miou, eta = validate()
            self.metrics.append(label, epoch, np.mean(losses), miou, eta,
                                self.streams.seed, self.clock() - start)
            log.info("[{0}] epoch {1}/{2}: loss={3:.4f} miou={4:.4f} "
                     "eta={5:.3f}".format(label, epoch, sched.epochs,
                                          np.mean(losses), miou, eta))

            score = metric if np.isfinite(metric) else -np.inf
            if best_ckpt is None or score > best:
                best = score
                best_ckpt = Checkpoint.from_model(model, label, epoch, metric,
                                                  c)
                stale = 0
            else:
                stale += 1
                if stale >= c.patience:
                    log.warning("[{0}] no improvement for {1} epochs, stopping "
                                "at epoch {2}".format(label, stale, epoch))
                    break

        best_ckpt.apply(model)
        if self.out_dir is not None:
            path = os.path.join(self.out_dir, label)
            best_ckpt.save(path)
            log.info("[{0}] saved best checkpoint (epoch {1}) to {2}"
                     .format(label, best_ckpt.epoch, path))
        return best_ckpt

    def _eval_batches(self, forward, dataset, batch_size=None):
        """Predictions of ``forward(idx, rng)`` over ``dataset`` in order,
        with a fixed noise stream."""
        if batch_size is None:
            batch_size = self.config.schedule('joint').batch_size
        preds = []
        with nc.no_grad():
            for step, idx in enumerate(dataset.batches(batch_size)):
                rng = self.streams.generator('noise', _EVALUATION_NOISE, step)
                preds.append(predict(forward(idx, rng)))
        return np.concatenate(preds)

    @staticmethod
    def _segmentation_metrics(pred, labels, n_classes):
        iou = per_class_iou(pred, labels, n_classes)
        miou = float(np.nanmean(iou)) if not np.all(np.isnan(iou)) else np.nan
        return miou, float(np.mean(pred == labels)), iou

    def _mean_eta(self, channels, batch_size=None, noise_index=_EVALUATION_NOISE):
        if batch_size is None:
            batch_size = self.config.schedule('phys_pretrain').batch_size
        etas = []
        with nc.no_grad():
            for step, i0 in enumerate(range(0, len(channels), batch_size)):
                rng = self.streams.generator('noise', noise_index, step)
                _, eta = self.model.forward_phy(
                    channels.H[i0:i0 + batch_size], rng)
                etas.append(np.atleast_1d(eta.value))
        return float(np.mean(np.concatenate(etas)))

    @staticmethod
    def _split_channels(channels):
        n_val = max(1, len(channels) // 10)
        if len(channels) <= n_val:
            raise ValueError("Need at least two channel realizations to "
                             "split off a validation set, got {0}"
                             .format(len(channels)))
        n = len(channels) - n_val
        return channels[np.arange(n)], channels[np.arange(n, len(channels))]

    def _link_forward(self, dataset, channels):
        """Forward of the full link where sample ``i`` of ``dataset`` sees
        realization ``i mod len(channels)``."""
        def forward(idx, rng):
            H = channels.H[np.asarray(idx) % len(channels)]
            return self.model([dataset.modA[idx], dataset.modB[idx]], H, rng)
        return forward

    # ------------------------------------------------------------------------
    # Stages
    #
    def stage1_semantic(self, dataset, init=None):
        """Pretrain both MSFNets through the noiseless identity channel and
        return the best-validation-mIoU checkpoint."""
        if init is not None:
            init.apply(self.model, group='semantic')
        train, val, _ = dataset.split()
        C = self.config.C

        def step_loss(idx, rng):
            logits = self.model.forward_identity([train.modA[idx],
                                                  train.modB[idx]])
            return seg_loss(logits, train.labels[idx])

        def validate():
            pred = self._eval_batches(
                lambda idx, rng: self.model.forward_identity(
                    [val.modA[idx], val.modB[idx]]), val)
            miou = self._segmentation_metrics(pred, val.labels, C)[0]
            return miou, miou, np.nan

        params = self.model.group_parameters(
            self.config.schedule('semantic_pretrain').groups)
        return self._fit('semantic_pretrain', self.model, params, len(train),
                         step_loss, validate)

    def stage2_phys(self, channels, init=None):
        """Pretrain the CSI-RS and both CSANets on ``-eta`` and return the
        best-validation-eta checkpoint."""
        if init is not None:
            init.apply(self.model, group='physical')
        train, val = self._split_channels(channels)

        def step_loss(idx, rng):
            _, eta = self.model.forward_phy(train.H[idx], rng)
            return -nc.mean(eta)

        def validate():
            eta = self._mean_eta(val, noise_index=_VALIDATION_NOISE)
            return eta, np.nan, eta

        params = self.model.group_parameters(
            self.config.schedule('phys_pretrain').groups)
        return self._fit('phys_pretrain', self.model, params, len(train),
                         step_loss, validate)

    def check_pretrained(self, semantic_ckpt, physical_ckpt):
        """Refuse checkpoints whose stage or configuration section differs
        from this trainer's configuration."""
        for ckpt, stage, section in ((semantic_ckpt, 'semantic_pretrain',
                                      'semantic'),
                                     (physical_ckpt, 'phys_pretrain',
                                      'physical')):
            if ckpt is None:
                raise ValueError("Joint training needs the {0} checkpoint."
                                 .format(stage))
            if ckpt.stage != stage:
                raise ValueError("Expected a {0} checkpoint, got stage {1!r}"
                                 .format(stage, ckpt.stage))
            expected = self.config.section_hash(section)
            if ckpt.hashes.get(section) != expected:
                raise ValueError("The {0} checkpoint was built with a different "
                                 "{1} configuration (hash {2} != {3})"
                                 .format(stage, section,
                                         ckpt.hashes.get(section), expected))

    def stage3_joint(self, dataset, channels, semantic_ckpt, physical_ckpt,
                     init=None):
        """Train every network on the segmentation loss through the full
        link, starting from the two pretrained checkpoints (or from a
        previous joint checkpoint ``init``, after the same compatibility
        checks)."""
        self.check_pretrained(semantic_ckpt, physical_ckpt)
        semantic_ckpt.apply(self.model, group='semantic')
        physical_ckpt.apply(self.model, group='physical')
        if init is not None:
            init.apply(self.model)

        train, val, _ = dataset.split()
        train_ch, val_ch = self._split_channels(channels)
        C = self.config.C

        def step_loss(idx, rng):
            pick = rng.integers(0, len(train_ch), size=len(idx))
            logits = self.model([train.modA[idx], train.modB[idx]],
                                train_ch.H[pick], rng)
            return seg_loss(logits, train.labels[idx])

        def validate():
            pred = self._eval_batches(self._link_forward(val, val_ch), val)
            miou = self._segmentation_metrics(pred, val.labels, C)[0]
            return miou, miou, self._mean_eta(val_ch,
                                              noise_index=_VALIDATION_NOISE)

        params = self.model.group_parameters(
            self.config.schedule('joint').groups)
        return self._fit('joint', self.model, params, len(train), step_loss,
                         validate)

    def run_all(self, dataset, channels):
        """All three stages in order; returns the joint checkpoint."""
        semantic = self.stage1_semantic(dataset)
        physical = self.stage2_phys(channels)
        return self.stage3_joint(dataset, channels, semantic, physical)

    # ------------------------------------------------------------------------
    # Evaluation
    #
    def evaluate(self, dataset, channels=None, checkpoint=None):
        """Segmentation and link metrics without changing any parameter.

        Sample ``i`` sees channel realization ``i mod len(channels)``; noise
        comes from a fixed sub-stream, so repeated calls agree. Without
        ``channels`` the identity path is evaluated and ``eta`` is NaN.

        Returns
        -------
        metrics : `~collections.OrderedDict`
            ``miou``, ``pixel_acc``, ``eta`` and ``per_class_iou``.
        """
        saved = None
        if checkpoint is not None:
            saved = OrderedDict((n, p.value) for n, p in
                                self.model.parameters().items())
            checkpoint.apply(self.model)
        try:
            if channels is None:
                forward = (lambda idx, rng: self.model.forward_identity(
                    [dataset.modA[idx], dataset.modB[idx]]))
                eta = np.nan
            else:
                forward = self._link_forward(dataset, channels)
                eta = self._mean_eta(channels)
            pred = self._eval_batches(forward, dataset)
            miou, acc, iou = self._segmentation_metrics(
                pred, dataset.labels, self.config.C)
        finally:
            if saved is not None:
                self.model.load_parameters(saved)
        return OrderedDict([('miou', miou), ('pixel_acc', acc), ('eta', eta),
                            ('per_class_iou', iou)])

    # ------------------------------------------------------------------------
    # Separated baseline
    #
    def build_baseline(self):
        """Separated-design model and its fixed classical CSI-RS."""
        model = SeparatedBaseline(self.config, self.streams.generator('init',
                                                                      1),
                                  grid_rng=self.streams.generator('baseline',
                                                                  0))
        csirs = ClassicalCsiRs(self.config,
                               self.streams.generator('baseline', 1))
        return model, csirs

    def _baseline_forward(self, model, csirs, dataset, channels, pick=None):
        c = self.config

        def forward(idx, rng):
            rows = np.asarray(idx) % len(channels) if pick is None \
                else pick(idx, rng)
            H = channels.H[rows]
            W, F = estimated_beamformers(H, c, csirs, rng)
            return model([dataset.modA[idx], dataset.modB[idx]],
                         H[:, :, c.L:], W, F, c.sigma2, rng)
        return forward

    def train_baseline(self, dataset, channels, model=None, csirs=None):
        """Train the separated baseline's encoders and decoder on the
        segmentation loss with the joint-stage budget.

        Returns
        -------
        checkpoint : `Checkpoint`
        model : `~semlink.baselines.SeparatedBaseline`
        csirs : `~semlink.baselines.ClassicalCsiRs`
        """
        if model is None or csirs is None:
            model, csirs = self.build_baseline()
        train, val, _ = dataset.split()
        train_ch, val_ch = self._split_channels(channels)
        C = self.config.C
        forward = self._baseline_forward(
            model, csirs, train, train_ch,
            pick=lambda idx, rng: rng.integers(0, len(train_ch),
                                               size=len(idx)))

        def step_loss(idx, rng):
            return seg_loss(forward(idx, rng), train.labels[idx])

        def validate():
            pred = self._eval_batches(
                self._baseline_forward(model, csirs, val, val_ch), val)
            miou = self._segmentation_metrics(pred, val.labels, C)[0]
            return miou, miou, np.nan

        ckpt = self._fit('joint', model, model.parameters(), len(train),
                         step_loss, validate, label='dmrs_baseline')
        return ckpt, model, csirs

    def evaluate_baseline(self, model, csirs, dataset, channels):
        pred = self._eval_batches(
            self._baseline_forward(model, csirs, dataset, channels), dataset)
        miou, acc, iou = self._segmentation_metrics(pred, dataset.labels,
                                                    self.config.C)
        return OrderedDict([('miou', miou), ('pixel_acc', acc),
                            ('eta', np.nan), ('per_class_iou', iou)])

    # ------------------------------------------------------------------------
    # Single-modality ablation
    #
    @staticmethod
    def _modality(dataset, modality):
        if modality not in range(len(MODALITY_CHANNELS)):
            raise ValueError("Modality must be one of {0}, got {1!r}"
                             .format(list(range(len(MODALITY_CHANNELS))),
                                     modality))
        return (dataset.modA, dataset.modB)[modality]

    def train_single_modality(self, dataset, modality=0):
        """Train a `~semlink.nnblocks.ConvCodec` on one modality alone with
        the semantic-pretraining budget.

        Parameters
        ----------
        dataset : `~semlink.semnet.MultimodalDataset`
        modality : int (optional)
            0 for modality A (three channels), 1 for modality B.

        Returns
        -------
        checkpoint : `Checkpoint`
        model : `~semlink.nnblocks.ConvCodec`
        """
        train, val, _ = dataset.split()
        images = self._modality(train, modality)
        val_images = self._modality(val, modality)
        model = ConvCodec(MODALITY_CHANNELS[modality], self.config,
                          self.streams.generator('init', 2, modality))
        C = self.config.C

        def step_loss(idx, rng):
            return seg_loss(model(images[idx]), train.labels[idx])

        def validate():
            pred = self._eval_batches(
                lambda idx, rng: model(val_images[idx]), val)
            miou = self._segmentation_metrics(pred, val.labels, C)[0]
            return miou, miou, np.nan

        ckpt = self._fit('semantic_pretrain', model, model.parameters(),
                         len(train), step_loss, validate,
                         label='single_modality_{0}'.format('AB'[modality]))
        return ckpt, model

    def evaluate_single_modality(self, model, dataset, modality=0):
        images = self._modality(dataset, modality)
        pred = self._eval_batches(lambda idx, rng: model(images[idx]),
                                  dataset)
        miou, acc, iou = self._segmentation_metrics(pred, dataset.labels,
                                                    self.config.C)
        return OrderedDict([('miou', miou), ('pixel_acc', acc),
                            ('eta', np.nan), ('per_class_iou', iou)])
