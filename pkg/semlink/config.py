# Standard library
import abc
from collections import OrderedDict, namedtuple
import copy
import hashlib
import json
import os
import warnings

# Third-party
import astropy.units as u
from astropy.utils.data import get_pkg_data_filename
from astropy.utils.exceptions import AstropyUserWarning
import numpy as np

__all__ = ['ExperimentConfig', 'StageSchedule', 'PRESETS']

PRESETS = ('desk', 'full')

STAGES = ('semantic_pretrain', 'phys_pretrain', 'joint')

TRANSMISSIONS = ('nonorthogonal', 'orthogonal')

Field = namedtuple('Field', ['default', 'kind', 'sections'])

_PHY = ('physical', )
_SEM = ('semantic', )
_BOTH = ('physical', 'semantic')

# name -> (default, kind, hashed sections). Defaults are the desk preset.
FIELDS = OrderedDict([
    # array and resource dimensions
    ('N_t', Field(4, 'dim', _PHY)),
    ('N_r', Field(16, 'dim', _PHY)),
    ('N_RF_t', Field(2, 'dim', _BOTH)),
    ('N_RF_r', Field(2, 'dim', _BOTH)),
    ('N_c', Field(16, 'dim', _BOTH)),
    ('L', Field(4, 'dim', _PHY)),
    ('B', Field(64, 'dim', _PHY)),
    ('Q', Field(2, 'dim', _SEM)),
    ('K', Field(2, 'dim', _BOTH)),
    # semantic task and networks
    ('H', Field(32, 'dim', _SEM)),
    ('W', Field(32, 'dim', _SEM)),
    ('C', Field(4, 'dim', _SEM)),
    ('d_s', Field(16, 'dim', _SEM)),
    ('H_s', Field(4, 'dim', _SEM)),
    ('W_s', Field(4, 'dim', _SEM)),
    ('d_c', Field(8, 'dim', _SEM)),
    ('d_sfa', Field(16, 'dim', _SEM)),
    ('enc_width', Field(16, 'dim', _SEM)),
    ('transmission', Field('nonorthogonal', 'choice', _SEM)),
    # channel-semantic networks
    ('d_CSI', Field(8, 'dim', _BOTH)),
    ('d_model', Field(32, 'dim', _PHY)),
    ('U', Field(2, 'dim', _PHY)),
    ('n_heads', Field(4, 'dim', _PHY)),
    ('d_ff', Field(64, 'dim', _PHY)),
    # physics
    ('f_c', Field(28 * u.GHz, u.Hz, _PHY)),
    ('delta_f', Field(120 * u.kHz, u.Hz, _PHY)),
    ('v_max', Field(120 * u.km / u.h, u.m / u.s, _PHY)),
    ('tau_max', Field(16., 'float', _PHY)),
    ('L_p_min', Field(3, 'dim', _PHY)),
    ('L_p_max', Field(6, 'dim', _PHY)),
    ('snr_db', Field(0., 'float', _PHY)),
    ('csirs_snr_db', Field(None, 'optional_float', _PHY)),
    ('P_t', Field(1., 'float', _PHY)),
    # synthetic data
    ('n_samples', Field(1000, 'dim', ())),
    ('n_channels', Field(2000, 'dim', ())),
    ('min_shapes', Field(1, 'count', ())),
    ('max_shapes', Field(3, 'count', ())),
    ('pixel_noise', Field(0.05, 'float', ())),
    # training
    ('schedules', Field(OrderedDict([
        ('semantic_pretrain', OrderedDict([('epochs', 30),
                                           ('batch_size', 16),
                                           ('lr', 1e-3)])),
        ('phys_pretrain', OrderedDict([('epochs', 30),
                                       ('batch_size', 128),
                                       ('lr', 3e-3)])),
        ('joint', OrderedDict([('epochs', 10),
                               ('batch_size', 16),
                               ('lr', 3e-4)]))]), 'schedules', ())),
    ('patience', Field(10, 'dim', ())),
    ('clip_norm', Field(1., 'float', ())),
    ('seed', Field(0, 'count', ())),
    ('out_dir', Field('runs', 'path', ())),
])


class StageSchedule(namedtuple('StageSchedule',
                               ['stage', 'epochs', 'batch_size', 'lr'])):
    """Epoch budget, batch size and learning rate of one training stage."""

    __slots__ = ()

    @property
    def groups(self):
        """Parameter groups trained in this stage."""
        return {'semantic_pretrain': ('semantic', ),
                'phys_pretrain': ('physical', ),
                'joint': ('semantic', 'physical')}[self.stage]


class ConfigMeta(abc.ABCMeta):

    def __new__(mcls, name, bases, members):

        if 'names' not in members:
            raise ValueError('Config subclasses must contain a defined class '
                             'attribute "names" that specifies the string '
                             'names of the fields.')

        for name_ in members['names']:
            mcls.readonly_prop_factory(members, name_)

        return super().__new__(mcls, name, bases, members)

    @staticmethod
    def readonly_prop_factory(members, attr_name):
        def getter(self):
            return getattr(self, '_' + attr_name)
        members[attr_name] = property(getter)


def _coerce(name, value, field):
    kind = field.kind

    if isinstance(kind, u.UnitBase):
        try:
            q = u.Quantity(value)
        except (TypeError, ValueError) as e:
            raise ValueError("Field {0!r} must be a quantity, got {1!r}: {2}"
                             .format(name, value, e))
        if q.unit == u.dimensionless_unscaled:
            raise ValueError("Field {0!r} needs units convertible to {1}, "
                             "got {2!r}".format(name, kind, value))
        try:
            q.to(kind)
        except u.UnitsError:
            raise ValueError("Field {0!r} needs units convertible to {1}, "
                             "got {2}".format(name, kind, q.unit))
        if not np.isscalar(q.value) or not np.isfinite(q.value) or q.value < 0:
            raise ValueError("Field {0!r} must be a finite, non-negative "
                             "scalar, got {1}".format(name, q))
        return q

    if kind in ('dim', 'count'):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ValueError("Field {0!r} must be an integer, got {1!r}"
                             .format(name, value))
        value = int(value)
        if kind == 'dim' and value <= 0:
            raise ValueError("Field {0!r} must be positive, got {1}"
                             .format(name, value))
        if kind == 'count' and value < 0:
            raise ValueError("Field {0!r} must be non-negative, got {1}"
                             .format(name, value))
        return value

    if kind == 'float' or (kind == 'optional_float' and value is not None):
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ValueError("Field {0!r} must be a number, got {1!r}"
                             .format(name, value))
        if not np.isfinite(value):
            raise ValueError("Field {0!r} must be finite.".format(name))
        return value

    if kind == 'optional_float':
        return None

    if kind == 'choice':
        if value not in TRANSMISSIONS:
            raise ValueError("Field {0!r} must be one of {1}, got {2!r}"
                             .format(name, TRANSMISSIONS, value))
        return value

    if kind == 'path':
        return str(value)

    if kind == 'schedules':
        return _coerce_schedules(value)

    raise ValueError("Unknown field kind for {0!r}".format(name))


def _coerce_schedules(value):
    if not isinstance(value, dict):
        raise ValueError("Field 'schedules' must be an object.")
    unknown = set(value) - set(STAGES)
    if unknown:
        raise ValueError("Field 'schedules' has unknown stages {0}"
                         .format(sorted(unknown)))
    defaults = FIELDS['schedules'].default
    out = OrderedDict()
    for stage in STAGES:
        entry = value.get(stage, defaults[stage])
        if not isinstance(entry, dict):
            raise ValueError("Field 'schedules.{0}' must be an object."
                             .format(stage))
        bad = set(entry) - {'epochs', 'batch_size', 'lr'}
        if bad:
            raise ValueError("Field 'schedules.{0}' has unknown keys {1}"
                             .format(stage, sorted(bad)))
        merged = OrderedDict(defaults[stage])
        merged.update(entry)
        for key in ('epochs', 'batch_size'):
            v = merged[key]
            if isinstance(v, bool) or not float(v).is_integer() or v <= 0:
                raise ValueError("Field 'schedules.{0}.{1}' must be a positive "
                                 "integer, got {2!r}".format(stage, key, v))
            merged[key] = int(v)
        lr = float(merged['lr'])
        if not np.isfinite(lr) or lr <= 0:
            raise ValueError("Field 'schedules.{0}.lr' must be positive, got "
                             "{1!r}".format(stage, merged['lr']))
        merged['lr'] = lr
        out[stage] = merged
    return out


def _serialize(value):
    if isinstance(value, u.Quantity):
        return '{0!r} {1}'.format(float(value.value), value.unit.to_string())
    if isinstance(value, dict):
        return OrderedDict((k, _serialize(v)) for k, v in value.items())
    return value


class ExperimentConfig(metaclass=ConfigMeta):
    """
    All dimensions, physics, data sizes, schedules and seeds of one run.

    Field names mirror the physical symbols (``N_t``, ``N_RF_r``, ``d_CSI``,
    ...). Instances are read-only; use `replace` to derive a variant.
    Unknown keyword arguments raise `ValueError`.

    Examples
    --------
    Load the desk-scale preset and shrink the pilot budget::

        config = ExperimentConfig.from_preset('desk').replace(L=1)
    """

    names = list(FIELDS)

    def __init__(self, **kwargs):
        unknown = [k for k in kwargs if k not in FIELDS]
        if unknown:
            raise ValueError("Unknown configuration field(s): {0}"
                             .format(', '.join(sorted(unknown))))

        for name, field in FIELDS.items():
            value = kwargs.get(name, copy.deepcopy(field.default))
            setattr(self, '_' + name, _coerce(name, value, field))

        self._validate()

    def _validate(self):
        if self.K != 2:
            raise ValueError("The multimodal task needs K = 2 users, got "
                             "K={0}".format(self.K))

        if self.N_RF_t != self.N_RF_r:
            raise ValueError("The identity-channel pretraining needs "
                             "N_RF_t == N_RF_r, got {0} and {1}"
                             .format(self.N_RF_t, self.N_RF_r))

        if self.N_RF_t > self.N_t or self.N_RF_r > self.N_r:
            raise ValueError("RF chains cannot exceed antennas: N_RF_t={0}, "
                             "N_t={1}, N_RF_r={2}, N_r={3}"
                             .format(self.N_RF_t, self.N_t, self.N_RF_r,
                                     self.N_r))

        if self.N_RF_r > 8:
            raise ValueError("N_RF_r must be at most 8, got {0}"
                             .format(self.N_RF_r))

        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model={0} is not divisible by n_heads={1}"
                             .format(self.d_model, self.n_heads))

        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even for the sinusoidal "
                             "position embedding, got {0}"
                             .format(self.d_model))

        if not self.codec_supported:
            warnings.warn("Image size {0}x{1} with feature size {2}x{3} cannot "
                          "be built by the strided conv codec, which needs "
                          "equal power-of-two reductions."
                          .format(self.H, self.W, self.H_s, self.W_s),
                          AstropyUserWarning)

        if self.L_p_min > self.L_p_max:
            raise ValueError("L_p_min={0} exceeds L_p_max={1}"
                             .format(self.L_p_min, self.L_p_max))

        if self.min_shapes > self.max_shapes:
            raise ValueError("min_shapes={0} exceeds max_shapes={1}"
                             .format(self.min_shapes, self.max_shapes))

        if self.tau_max < 0 or self.pixel_noise < 0:
            raise ValueError("tau_max and pixel_noise must be non-negative.")

        if self.P_t <= 0:
            raise ValueError("Transmit power P_t must be positive, got {0}"
                             .format(self.P_t))

        if self.transmission == 'orthogonal' and self.Q * self.N_c < 2:
            raise ValueError("Orthogonal transmission needs at least two "
                             "resource elements per frame.")

    # ------------------------------------------------------------------------
    # Derived quantities
    #
    @property
    def n_symbols(self):
        """OFDM symbols per frame: ``L`` CSI-RS symbols then ``Q`` data."""
        return self.L + self.Q

    @property
    def codec_supported(self):
        """Whether H x W reduces to H_s x W_s by stride-2 blocks."""
        if self.H % self.H_s or self.W % self.W_s:
            return False
        ratio = self.H // self.H_s
        return (ratio >= 2 and ratio & (ratio - 1) == 0 and
                ratio == self.W // self.W_s)

    @property
    def n_enc_blocks(self):
        return int(np.log2(self.H // self.H_s))

    @property
    def sigma2(self):
        """Data noise variance ``P_t / SNR``."""
        return self.P_t / 10**(self.snr_db / 10.)

    @property
    def csirs_sigma2(self):
        """CSI-RS noise variance; equals `sigma2` unless ``csirs_snr_db``
        is set."""
        snr = self.snr_db if self.csirs_snr_db is None else self.csirs_snr_db
        return self.P_t / 10**(snr / 10.)

    @property
    def ofdm(self):
        from .channel import OfdmConfig
        return OfdmConfig(N_c=self.N_c, delta_f=self.delta_f, f_c=self.f_c)

    def schedule(self, stage):
        if stage not in STAGES:
            raise ValueError("Unknown stage {0!r}; expected one of {1}"
                             .format(stage, STAGES))
        entry = self.schedules[stage]
        return StageSchedule(stage, entry['epochs'], entry['batch_size'],
                             entry['lr'])

    # ------------------------------------------------------------------------
    # Comparison, copying, hashing
    #
    def __eq__(self, other):
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        for name in self.names:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, u.Quantity):
                if not (a.unit.is_equivalent(b.unit) and a == b):
                    return False
            elif a != b:
                return False
        return True

    def __hash__(self):
        return hash(self.fingerprint())

    def __repr__(self):
        changed = [n for n in self.names
                   if _serialize(getattr(self, n)) !=
                   _serialize(FIELDS[n].default)]
        body = ', '.join('{0}={1!r}'.format(n, _serialize(getattr(self, n)))
                         for n in changed)
        return '<ExperimentConfig {0}>'.format(body or 'desk defaults')

    def replace(self, **changes):
        """Return a validated copy with ``changes`` applied."""
        kwargs = OrderedDict((n, getattr(self, n)) for n in self.names)
        unknown = [k for k in changes if k not in FIELDS]
        if unknown:
            raise ValueError("Unknown configuration field(s): {0}"
                             .format(', '.join(sorted(unknown))))
        kwargs.update(changes)
        return self.__class__(**kwargs)

    def to_dict(self):
        return OrderedDict((n, _serialize(getattr(self, n)))
                           for n in self.names)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ValueError("Configuration must be a JSON object.")
        return cls(**data)

    def section(self, name):
        """Serialized fields that belong to the ``'physical'`` or
        ``'semantic'`` parameter group."""
        if name not in ('physical', 'semantic'):
            raise ValueError("Unknown section {0!r}".format(name))
        return OrderedDict((n, _serialize(getattr(self, n)))
                           for n, f in FIELDS.items() if name in f.sections)

    def section_hash(self, name):
        """SHA-256 fingerprint of a section, recorded in checkpoints so that
        incompatible pretrained parameters are refused."""
        blob = json.dumps(self.section(name), sort_keys=True)
        return hashlib.sha256(blob.encode('utf-8')).hexdigest()

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode('utf-8')).hexdigest()

    # ------------------------------------------------------------------------
    # IO
    #
    def write(self, filename):
        with open(filename, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write('\n')

    @classmethod
    def read(cls, filename):
        if not os.path.isfile(filename):
            raise OSError("Configuration file {0} does not exist"
                          .format(filename))
        with open(filename) as f:
            try:
                data = json.load(f, object_pairs_hook=OrderedDict)
            except ValueError as e:
                raise ValueError("Configuration file {0} is not valid JSON: "
                                 "{1}".format(filename, e))
        return cls.from_dict(data)

    @classmethod
    def from_preset(cls, name):
        """Load a configuration preset shipped with the package."""
        if name not in PRESETS:
            raise ValueError("Unknown preset {0!r}; expected one of {1}"
                             .format(name, PRESETS))
        return cls.read(get_pkg_data_filename(
            os.path.join('data', name + '.json')))
