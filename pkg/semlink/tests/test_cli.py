# Standard library
import os

# Third-party
from astropy.table import Table
import numpy as np
import pytest

# Project
from ..baselines import svd_bound, analog_array_gain
from ..channel import ChannelSet
from ..cli import main, build_parser, SWEEP_COLUMNS
from ..config import ExperimentConfig, PRESETS
from ..semnet import MultimodalDataset
from ..trainer import MetricsLog

LONG = pytest.mark.skipif(os.environ.get('SEMLINK_LONG_TESTS') != '1',
                          reason="set SEMLINK_LONG_TESTS=1 to run")


@pytest.fixture
def config_file(tmp_path):
    stage = {'epochs': 1, 'batch_size': 4, 'lr': 1e-2}
    config = ExperimentConfig(N_t=2, N_r=4, N_c=8, L=1, Q=2, B=8, H=8, W=8,
                              H_s=2, W_s=2, d_s=4, enc_width=4, d_CSI=4,
                              d_c=4, d_sfa=4, d_model=8, n_heads=2, d_ff=16,
                              U=1, n_samples=10, n_channels=10,
                              schedules={'semantic_pretrain': stage,
                                         'phys_pretrain': stage,
                                         'joint': stage})
    filename = str(tmp_path / 'config.json')
    config.write(filename)
    return filename


def _run(config_file, out, *args):
    return main(['--config', config_file, '--out', str(out),
                 '--frozen-clock'] + list(args))


def test_presets(tmp_path, capsys):
    assert main(['--out', str(tmp_path), 'presets']) == 0
    assert capsys.readouterr().out.split() == list(PRESETS)


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])

    with pytest.raises(SystemExit):
        build_parser().parse_args(['train'])


def test_bad_overrides_fail(tmp_path):
    assert main(['--out', str(tmp_path), '--set', 'N_t', 'presets']) == 1
    assert main(['--out', str(tmp_path), '--set', 'shoe_size=3',
                 'presets']) == 1
    assert main(['--out', str(tmp_path), '--set', 'N_RF_t=7',
                 'presets']) == 1


def test_gen_dataset_is_deterministic(tmp_path):
    args = ['--set', 'n_samples=4', '--set', 'H=8', '--set', 'W=8',
            '--set', 'H_s=2', '--set', 'W_s=2', 'gen-dataset']
    for name in ('a', 'b'):
        assert main(['--out', str(tmp_path / name)] + args) == 0
    assert main(['--out', str(tmp_path / 'c'), '--seed', '1'] + args) == 0

    a = MultimodalDataset.read(str(tmp_path / 'a' / 'dataset'))
    b = MultimodalDataset.read(str(tmp_path / 'b' / 'dataset'))
    c = MultimodalDataset.read(str(tmp_path / 'c' / 'dataset'))
    assert len(a) == 4
    assert a.labels.shape == (4, 8, 8)
    assert np.array_equal(a.modA, b.modA)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.modA, c.modA)


def test_gen_channels(config_file, tmp_path):
    assert _run(config_file, tmp_path, 'gen-channels') == 0
    channels = ChannelSet.read(str(tmp_path / 'channels'))
    assert channels.H.shape == (10, 2, 3, 8, 4, 2)
    assert channels.L == 1


def test_joint_stage_needs_pretrained_checkpoints(config_file, tmp_path):
    assert _run(config_file, tmp_path, 'train', '--stage', '3') == 1
    assert not os.path.exists(str(tmp_path / 'joint'))


def test_sweep_rejects_unknown_scheme(config_file, tmp_path):
    assert _run(config_file, tmp_path, 'sweep', '--axis', 'snr', '--values',
                '0', '--schemes', 'carrier-pigeon') == 1
    assert _run(config_file, tmp_path, 'sweep', '--axis', 'L', '--values',
                'one,two') == 1


@pytest.mark.parametrize('scheme', ['svd-bound', 'random', 'pca-perfect',
                                    'pca'])
def test_link_baselines(config_file, tmp_path, scheme):
    assert _run(config_file, tmp_path, 'baseline', scheme) == 0
    filename = tmp_path / 'baseline_{0}.csv'.format(scheme.replace('-', '_'))
    with open(str(filename)) as f:
        assert f.readline().strip() == 'sample,eta'
    tbl = Table.read(str(filename), format='ascii.csv')
    assert len(tbl) == 10
    assert np.all(tbl['eta'] >= 0)


def test_bound_exceeds_random(config_file, tmp_path):
    for scheme in ('svd-bound', 'random'):
        assert _run(config_file, tmp_path, 'baseline', scheme) == 0
    bound = Table.read(str(tmp_path / 'baseline_svd_bound.csv'),
                       format='ascii.csv')
    rnd = Table.read(str(tmp_path / 'baseline_random.csv'),
                     format='ascii.csv')
    assert np.all(rnd['eta'] <= bound['eta'] + 1e-9)


def test_bound_includes_array_gain(config_file, tmp_path):
    assert _run(config_file, tmp_path, 'baseline', 'svd-bound') == 0
    tbl = Table.read(str(tmp_path / 'baseline_svd_bound.csv'),
                     format='ascii.csv')
    config = ExperimentConfig.read(config_file)
    H_data = ChannelSet.read(str(tmp_path / 'channels')).data
    n_streams = min(config.N_RF_r, config.N_RF_t)
    plain = svd_bound(H_data, config.P_t, config.sigma2, n_streams=n_streams)
    scaled = svd_bound(H_data, config.P_t, config.sigma2, n_streams=n_streams,
                       array_gain=analog_array_gain(config))
    assert np.allclose(tbl['eta'], scaled)
    assert np.all(scaled > plain)


def test_single_modality_baseline(config_file, tmp_path):
    for modality in ('0', '1'):
        assert _run(config_file, tmp_path, 'baseline', 'single-modality',
                    '--modality', modality) == 0
        tbl = Table.read(str(tmp_path / 'baseline_single_modality.csv'),
                         format='ascii.csv')
        assert tbl.colnames[:3] == ['miou', 'pixel_acc', 'eta']
        assert len(tbl) == 1
    assert os.path.isdir(str(tmp_path / 'single_modality_A'))
    assert os.path.isdir(str(tmp_path / 'single_modality_B'))


def test_train_physical_stage(config_file, tmp_path):
    assert _run(config_file, tmp_path, 'train', '--stage', '2') == 0
    assert os.path.isdir(str(tmp_path / 'phys_pretrain'))
    assert os.path.isdir(str(tmp_path / 'channels'))

    log = MetricsLog.read(str(tmp_path / 'metrics.csv'))
    assert [row[0] for row in log.rows] == ['phys_pretrain']
    assert log.rows[0][-1] == 0.

    # resuming appends to the same log
    assert _run(config_file, tmp_path, 'train', '--stage', '2',
                '--resume') == 0
    log = MetricsLog.read(str(tmp_path / 'metrics.csv'))
    assert len(log) == 2


@LONG
def test_full_pipeline(config_file, tmp_path):
    for stage in ('1', '2', '3'):
        assert _run(config_file, tmp_path, 'train', '--stage', stage) == 0
    assert _run(config_file, tmp_path, 'eval', '--checkpoint',
                str(tmp_path / 'joint')) == 0
    tbl = Table.read(str(tmp_path / 'eval.csv'), format='ascii.csv')
    assert tbl.colnames[:3] == ['miou', 'pixel_acc', 'eta']
    assert len(tbl) == 1

    assert _run(config_file, tmp_path, 'eval', '--identity', '--checkpoint',
                str(tmp_path / 'semantic_pretrain')) == 0


@LONG
def test_sweep(config_file, tmp_path):
    assert _run(config_file, tmp_path, 'sweep', '--axis', 'snr',
                '--values=-5,5', '--schemes', 'nonorthogonal,orthogonal',
                '--reuse-pretrained') == 0
    tbl = Table.read(str(tmp_path / 'sweep_snr.csv'), format='ascii.csv')
    assert tuple(tbl.colnames) == SWEEP_COLUMNS
    assert len(tbl) == 4
    assert list(tbl['status']) == ['ok'] * 4


# ----------------------------------------------------------------------------
# Trends at desk scale over three seeds
#
def _desk_sweep(tmp_path, seed, axis, values, schemes):
    out = tmp_path / 'seed{0}'.format(seed)
    assert main(['--preset', 'desk', '--seed', str(seed), '--out', str(out),
                 '--frozen-clock', 'sweep', '--axis', axis,
                 '--values={0}'.format(values), '--schemes', schemes,
                 '--reuse-pretrained']) == 0
    tbl = Table.read(str(out / 'sweep_{0}.csv'.format(axis)),
                     format='ascii.csv')
    assert list(tbl['status']) == ['ok'] * len(tbl)
    return {(row['scheme'], row['value']): row['miou'] for row in tbl}


def _non_decreasing(miou, scheme, values, tol=0.01):
    return all(miou[scheme, b] >= miou[scheme, a] - tol
               for a, b in zip(values[:-1], values[1:]))


@LONG
def test_pilot_length_trends(tmp_path):
    """More CSI-RS symbols never hurt, and with a single one the learned
    link beats the separated DMRS design."""
    values = (1, 2, 4, 8)
    grows, beats_dmrs = 0, 0
    for seed in range(3):
        miou = _desk_sweep(tmp_path, seed, 'L', ','.join(map(str, values)),
                           'nonorthogonal,dmrs')
        grows += _non_decreasing(miou, 'nonorthogonal', values)
        beats_dmrs += miou['nonorthogonal', 1] > miou['dmrs', 1]
    assert grows >= 2
    assert beats_dmrs >= 2


@LONG
def test_symbol_count_trends(tmp_path):
    """More data symbols help, and sharing the grid beats splitting it when
    there is only one symbol."""
    values = (1, 2, 4)
    grows, shared_wins = 0, 0
    for seed in range(3):
        miou = _desk_sweep(tmp_path, seed, 'Q', ','.join(map(str, values)),
                           'nonorthogonal,orthogonal')
        grows += _non_decreasing(miou, 'nonorthogonal', values, tol=0.)
        shared_wins += miou['nonorthogonal', 1] >= miou['orthogonal', 1]
    assert grows >= 2
    assert shared_wins >= 2
