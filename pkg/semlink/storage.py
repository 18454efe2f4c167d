"""
Raw little-endian array bundles with a JSON manifest.

A bundle is a directory holding ``manifest.json`` and one ``<name>.bin`` file
per array. Real arrays are stored as 8-byte floats, complex arrays as
interleaved real/imaginary 8-byte floats, both in row-major order.
"""

# Standard library
from collections import OrderedDict
import json
import os

# Third-party
import numpy as np

__all__ = ['write_bundle', 'read_bundle', 'read_manifest', 'MANIFEST_NAME']

MANIFEST_NAME = 'manifest.json'

_DTYPES = {'float64': '<f8', 'complex128': '<c16'}


def _dtype_name(arr):
    return 'complex128' if np.iscomplexobj(arr) else 'float64'


def write_bundle(path, arrays, **meta):
    """Write named arrays and metadata to the directory ``path``.

    Parameters
    ----------
    path : str
        Output directory, created if missing.
    arrays : dict
        Name to array. Insertion order is kept in the manifest.
    **meta
        JSON-serializable metadata stored alongside the array table.
    """
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise OSError("Cannot create output directory {0}: {1}"
                      .format(path, e))

    table = OrderedDict()
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = _dtype_name(arr)
        filename = name + '.bin'
        data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
        try:
            data.tofile(os.path.join(path, filename))
        except OSError as e:
            raise OSError("Cannot write {0}: {1}"
                          .format(os.path.join(path, filename), e))
        table[name] = OrderedDict([('shape', list(arr.shape)),
                                   ('dtype', dtype),
                                   ('file', filename)])

    manifest = OrderedDict(meta)
    manifest['arrays'] = table
    with open(os.path.join(path, MANIFEST_NAME), 'w') as f:
        json.dump(manifest, f, indent=2)
        f.write('\n')


def read_manifest(path):
    filename = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(filename):
        raise OSError("No {0} found in {1}".format(MANIFEST_NAME, path))
    with open(filename) as f:
        try:
            manifest = json.load(f, object_pairs_hook=OrderedDict)
        except ValueError as e:
            raise ValueError("Manifest {0} is not valid JSON: {1}"
                             .format(filename, e))
    if not isinstance(manifest, dict):
        raise ValueError("Manifest {0} must hold a JSON object."
                         .format(filename))
    return manifest


def _check_entry(name, entry):
    prefix = 'arrays.{0}'.format(name)
    if not isinstance(entry, dict):
        raise ValueError("Manifest field {0!r} must be an object."
                         .format(prefix))
    for key in ('shape', 'dtype', 'file'):
        if key not in entry:
            raise ValueError("Manifest field {0!r} is missing."
                             .format(prefix + '.' + key))
    shape = entry['shape']
    if (not isinstance(shape, list) or
            not all(isinstance(n, int) and n >= 0 for n in shape)):
        raise ValueError("Manifest field {0!r} must be a list of "
                         "non-negative integers, got {1!r}"
                         .format(prefix + '.shape', shape))
    if entry['dtype'] not in _DTYPES:
        raise ValueError("Manifest field {0!r} must be one of {1}, got {2!r}"
                         .format(prefix + '.dtype', sorted(_DTYPES),
                                 entry['dtype']))
    if not isinstance(entry['file'], str) or os.sep in entry['file']:
        raise ValueError("Manifest field {0!r} must be a plain file name."
                         .format(prefix + '.file'))


def read_bundle(path, required=()):
    """Read a bundle written by `write_bundle`.

    Parameters
    ----------
    path : str
        Bundle directory.
    required : iterable of str (optional)
        Metadata keys that must be present.

    Returns
    -------
    arrays : `~collections.OrderedDict`
    meta : `~collections.OrderedDict`
        Manifest contents without the array table.
    """
    manifest = read_manifest(path)
    for key in list(required) + ['arrays']:
        if key not in manifest:
            raise ValueError("Manifest field {0!r} is missing in {1}"
                             .format(key, path))

    table = manifest.pop('arrays')
    if not isinstance(table, dict):
        raise ValueError("Manifest field 'arrays' must be an object.")

    arrays = OrderedDict()
    for name, entry in table.items():
        _check_entry(name, entry)
        filename = os.path.join(path, entry['file'])
        if not os.path.isfile(filename):
            raise OSError("Array file {0} listed in the manifest does not "
                          "exist".format(filename))
        data = np.fromfile(filename, dtype=_DTYPES[entry['dtype']])
        expected = int(np.prod(entry['shape']))
        if data.size != expected:
            raise ValueError("Manifest field 'arrays.{0}.shape' expects {1} "
                             "values but {2} holds {3}"
                             .format(name, expected, filename, data.size))
        arrays[name] = data.reshape(entry['shape']).astype(
            entry['dtype'], copy=False)
    return arrays, manifest
