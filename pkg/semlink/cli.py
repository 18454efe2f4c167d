"""
Command-line harness: ``semlink <command>`` for data generation, the three
training stages, evaluation, reference schemes and parameter sweeps.
"""

# Standard library
import argparse
from collections import OrderedDict
import json
import os

# Third-party
from astropy import log
from astropy.table import Table
import numpy as np

# Project
from . import numcore as nc
from .config import ExperimentConfig, PRESETS
from .channel import ChannelSet, generate_channels
from .semnet import MultimodalDataset
from .phynet import spectral_efficiency
from .baselines import (svd_bound, analog_array_gain, estimated_beamformers,
                        random_phase_beamformers, ClassicalCsiRs)
from .storage import MANIFEST_NAME
from .trainer import Trainer, Checkpoint, MetricsLog
from .utils import RandomStreams

__all__ = ['main', 'build_parser', 'SWEEP_COLUMNS', 'SWEEP_AXES']

SWEEP_COLUMNS = ('axis', 'value', 'scheme', 'seed', 'miou', 'pixel_acc',
                 'eta', 'status')

# sweep axis -> (config field, value type)
SWEEP_AXES = OrderedDict([('L', ('L', int)),
                          ('B', ('B', int)),
                          ('Q', ('Q', int)),
                          ('snr', ('snr_db', float))])

SCHEMES = ('nonorthogonal', 'orthogonal', 'dmrs')

BASELINES = ('pca', 'pca-perfect', 'dmrs', 'svd-bound', 'orthogonal',
             'random', 'single-modality')

STAGE_DIRS = {1: 'semantic_pretrain', 2: 'phys_pretrain', 3: 'joint'}


class _Context:

    def __init__(self, args):
        config = (ExperimentConfig.read(args.config) if args.config
                  else ExperimentConfig.from_preset(args.preset))
        changes = {}
        for item in args.set or []:
            key, sep, value = item.partition('=')
            if not sep:
                raise ValueError("--set expects KEY=VALUE, got {0!r}"
                                 .format(item))
            try:
                changes[key] = json.loads(value)
            except ValueError:
                changes[key] = value
        if args.seed is not None:
            changes['seed'] = args.seed
        self.config = config.replace(**changes) if changes else config
        self.out = args.out if args.out is not None else self.config.out_dir
        self.clock = (lambda: 0.) if args.frozen_clock else None
        os.makedirs(self.out, exist_ok=True)

    @property
    def streams(self):
        return RandomStreams(self.config.seed)

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def dataset(self):
        path = self.path('dataset')
        if os.path.isfile(os.path.join(path, MANIFEST_NAME)):
            return MultimodalDataset.read(path)
        data = MultimodalDataset.generate(self.config, self.streams)
        data.write(path, self.config)
        log.info("Wrote {0} samples to {1}".format(len(data), path))
        return data

    def channels(self, config=None):
        config = self.config if config is None else config
        path = self.path('channels')
        if config is self.config and \
                os.path.isfile(os.path.join(path, MANIFEST_NAME)):
            channels = ChannelSet.read(path)
            if channels.H.shape[1:] == (config.K, config.n_symbols,
                                        config.N_c, config.N_r, config.N_t):
                return channels
            log.warning("Stored channels in {0} do not match the "
                        "configuration; regenerating".format(path))
        channels = generate_channels(config, config.n_channels, self.streams)
        if config is self.config:
            channels.write(path, config)
            log.info("Wrote {0} channel realizations to {1}"
                     .format(len(channels), path))
        return channels

    def trainer(self, config=None, out_dir=None):
        config = self.config if config is None else config
        return Trainer(config, RandomStreams(config.seed), clock=self.clock,
                       out_dir=out_dir)

    def metrics(self):
        path = self.path('metrics.csv')
        return MetricsLog.read(path) if os.path.isfile(path) else MetricsLog()


def _write_rows(filename, names, rows):
    if rows:
        tbl = Table(rows=rows, names=names)
    else:
        tbl = Table(names=names)
    tbl.write(filename, format='ascii.csv', overwrite=True)
    log.info("Wrote {0}".format(filename))


def _metric_row(metrics):
    return ([metrics['miou'], metrics['pixel_acc'], metrics['eta']] +
            list(metrics['per_class_iou']))


def _metric_names(n_classes):
    return ['miou', 'pixel_acc', 'eta'] + ['iou_{0}'.format(c)
                                           for c in range(n_classes)]


# ----------------------------------------------------------------------------
# Commands
#
def cmd_presets(ctx, args):
    for name in PRESETS:
        print(name)


def cmd_gen_channels(ctx, args):
    config = ctx.config
    channels = generate_channels(config, config.n_channels, ctx.streams)
    path = ctx.path('channels')
    channels.write(path, config)
    log.info("Wrote {0} channel realizations to {1}"
             .format(len(channels), path))


def cmd_gen_dataset(ctx, args):
    data = MultimodalDataset.generate(ctx.config, ctx.streams)
    path = ctx.path('dataset')
    data.write(path, ctx.config)
    log.info("Wrote {0} samples to {1}".format(len(data), path))


def _load_stage(ctx, stage):
    path = ctx.path(STAGE_DIRS[stage])
    if not os.path.isfile(os.path.join(path, MANIFEST_NAME)):
        return None
    return Checkpoint.load(path)


def cmd_train(ctx, args):
    stage = args.stage
    trainer = ctx.trainer(out_dir=ctx.out)
    trainer.metrics = ctx.metrics()

    if stage == 3:
        missing = [s for s in (1, 2) if _load_stage(ctx, s) is None]
        if missing:
            raise ValueError("Stage 3 needs the stage {0} checkpoint(s) in {1}; "
                             "run 'semlink train --stage {2}' first"
                             .format(' and '.join(map(str, missing)), ctx.out,
                                     missing[0]))

    init = _load_stage(ctx, stage) if args.resume else None
    if args.resume and init is None:
        log.warning("No stage {0} checkpoint to resume from; starting fresh"
                    .format(stage))

    if stage == 1:
        trainer.stage1_semantic(ctx.dataset(), init=init)
    elif stage == 2:
        trainer.stage2_phys(ctx.channels(), init=init)
    else:
        semantic, physical = _load_stage(ctx, 1), _load_stage(ctx, 2)
        trainer.stage3_joint(ctx.dataset(), ctx.channels(), semantic, physical,
                             init=init)
    trainer.metrics.write(ctx.path('metrics.csv'))


def cmd_eval(ctx, args):
    checkpoint = Checkpoint.load(args.checkpoint)
    trainer = ctx.trainer()
    _, _, test = ctx.dataset().split()
    channels = None if args.identity else ctx.channels()
    metrics = trainer.evaluate(test, channels, checkpoint=checkpoint)
    log.info("miou={0:.4f} pixel_acc={1:.4f} eta={2:.3f}"
             .format(metrics['miou'], metrics['pixel_acc'], metrics['eta']))
    _write_rows(ctx.path('eval.csv'), _metric_names(ctx.config.C),
                [_metric_row(metrics)])


def _eta_rows(values):
    return [(i, float(v)) for i, v in enumerate(np.atleast_1d(values))]


def cmd_baseline(ctx, args):
    config = ctx.config
    name = args.scheme
    filename = ctx.path('baseline_{0}.csv'.format(name.replace('-', '_')))

    if name in ('svd-bound', 'pca', 'pca-perfect', 'random'):
        channels = ctx.channels()
        H_data = channels.data
        if name == 'svd-bound':
            eta = svd_bound(H_data, config.P_t, config.sigma2,
                            n_streams=min(config.N_RF_r, config.N_RF_t),
                            array_gain=analog_array_gain(config))
        else:
            rng = ctx.streams.generator('baseline', 2)
            if name == 'random':
                W, F = random_phase_beamformers(config, rng, size=len(channels))
            else:
                csirs = ClassicalCsiRs(config,
                                       ctx.streams.generator('baseline', 1))
                W, F = estimated_beamformers(channels.H, config, csirs, rng,
                                             perfect=name == 'pca-perfect')
            with nc.no_grad():
                eta = spectral_efficiency(W, F, H_data, config.P_t,
                                          config.sigma2).value
        log.info("{0}: mean eta={1:.3f} over {2} realizations"
                 .format(name, float(np.mean(eta)), len(channels)))
        _write_rows(filename, ['sample', 'eta'], _eta_rows(eta))
        return

    dataset = ctx.dataset()
    _, _, test = dataset.split()
    if name == 'dmrs':
        trainer = ctx.trainer(out_dir=ctx.out)
        channels = ctx.channels()
        _, model, csirs = trainer.train_baseline(dataset, channels)
        metrics = trainer.evaluate_baseline(model, csirs, test, channels)
    elif name == 'single-modality':
        trainer = ctx.trainer(out_dir=ctx.out)
        _, model = trainer.train_single_modality(dataset, args.modality)
        metrics = trainer.evaluate_single_modality(model, test,
                                                   args.modality)
    else:
        config = config.replace(transmission='orthogonal')
        trainer = ctx.trainer(config)
        channels = ctx.channels(config)
        trainer.run_all(dataset, channels)
        metrics = trainer.evaluate(test, channels)
    log.info("{0}: miou={1:.4f}".format(name, metrics['miou']))
    _write_rows(filename, _metric_names(config.C), [_metric_row(metrics)])


def _parse_values(axis, text):
    field, kind = SWEEP_AXES[axis]
    try:
        return [kind(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ValueError("Invalid value list {0!r} for axis {1}"
                         .format(text, axis))


def _run_point(ctx, config, scheme, dataset, pretrained, reuse):
    channels = generate_channels(config, config.n_channels,
                                 RandomStreams(config.seed))
    _, _, test = dataset.split()
    if scheme == 'dmrs':
        trainer = ctx.trainer(config)
        _, model, csirs = trainer.train_baseline(dataset, channels)
        return trainer.evaluate_baseline(model, csirs, test, channels)

    if scheme == 'orthogonal':
        config = config.replace(transmission='orthogonal')
    trainer = ctx.trainer(config)
    key = config.section_hash('semantic')
    semantic = pretrained.get(key) if reuse else None
    if semantic is None:
        semantic = trainer.stage1_semantic(dataset)
        pretrained[key] = semantic
    physical = trainer.stage2_phys(channels)
    trainer.stage3_joint(dataset, channels, semantic, physical)
    return trainer.evaluate(test, channels)


def cmd_sweep(ctx, args):
    axis = args.axis
    field, _ = SWEEP_AXES[axis]
    values = _parse_values(axis, args.values)
    schemes = [s.strip() for s in args.schemes.split(',') if s.strip()]
    unknown = [s for s in schemes if s not in SCHEMES]
    if unknown:
        raise ValueError("Unknown scheme(s) {0}; expected any of {1}"
                         .format(', '.join(unknown), ', '.join(SCHEMES)))

    dataset = ctx.dataset()
    pretrained = {}
    rows = []
    filename = ctx.path('sweep_{0}.csv'.format(axis))
    for value in values:
        for scheme in schemes:
            try:
                config = ctx.config.replace(**{field: value})
                metrics = _run_point(ctx, config, scheme, dataset, pretrained,
                                     args.reuse_pretrained)
                row = (axis, float(value), scheme, ctx.config.seed,
                       metrics['miou'], metrics['pixel_acc'], metrics['eta'],
                       'ok')
            except Exception as e:
                log.warning("Sweep point {0}={1} ({2}) failed: {3}"
                            .format(axis, value, scheme, e))
                row = (axis, float(value), scheme, ctx.config.seed, np.nan,
                       np.nan, np.nan, 'failed: {0}'.format(e))
            rows.append(row)
            _write_rows(filename, SWEEP_COLUMNS, rows)


# ----------------------------------------------------------------------------
# Entry point
#
def build_parser():
    parser = argparse.ArgumentParser(
        prog='semlink',
        description="Differentiable multi-user semantic link simulator.")
    parser.add_argument('--config', help="experiment configuration (JSON)")
    parser.add_argument('--preset', default='desk', choices=PRESETS,
                        help="shipped configuration used without --config")
    parser.add_argument('--seed', type=int, help="master seed override")
    parser.add_argument('--out', help="output directory")
    parser.add_argument('--set', action='append', metavar='KEY=VALUE',
                        help="override a configuration field (repeatable)")
    parser.add_argument('--frozen-clock', action='store_true',
                        help="record zero wall-clock time in metrics")
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('presets', help="list shipped presets")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser('gen-channels', help="generate channel realizations")
    p.set_defaults(func=cmd_gen_channels)

    p = sub.add_parser('gen-dataset', help="generate the synthetic dataset")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser('train', help="run one training stage")
    p.add_argument('--stage', type=int, choices=(1, 2, 3), required=True)
    p.add_argument('--resume', action='store_true',
                   help="start from this stage's saved checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help="evaluate a checkpoint on the test split")
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--identity', action='store_true',
                   help="evaluate through the noiseless identity channel")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('baseline', help="run a reference scheme")
    p.add_argument('scheme', choices=BASELINES)
    p.add_argument('--modality', type=int, choices=(0, 1), default=0,
                   help="input of the single-modality model (0: A, 1: B)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser('sweep', help="train and evaluate over one axis")
    p.add_argument('--axis', choices=list(SWEEP_AXES), required=True)
    p.add_argument('--values', required=True,
                   help="comma-separated axis values")
    p.add_argument('--schemes', default='nonorthogonal',
                   help="comma-separated subset of {0}"
                   .format(', '.join(SCHEMES)))
    p.add_argument('--reuse-pretrained', action='store_true',
                   help="share stage-1 checkpoints between points with the "
                   "same semantic configuration")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    """Run the command line; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        ctx = _Context(args)
        args.func(ctx, args)
    except Exception as e:
        log.error("{0}: {1}".format(type(e).__name__, e))
        return 1
    return 0
