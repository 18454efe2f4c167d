"""
Reverse-mode automatic differentiation over real and complex arrays.

Complex gradients follow the real-pair convention: for a real scalar loss
:math:`\\mathcal{L}` and a complex tensor :math:`z = x + jy`, the stored
gradient is :math:`\\partial\\mathcal{L}/\\partial x + j\\,\\partial
\\mathcal{L}/\\partial y`. With this convention a holomorphic op
:math:`w = f(z)` back-propagates the upstream gradient :math:`g` as
:math:`g\\,\\overline{f'(z)}`.
"""

# Standard library
from collections import OrderedDict, namedtuple
from contextlib import contextmanager
import threading

# Third-party
import numpy as np

# Project
from . import conf

__all__ = ['DimensionError', 'DTypeError', 'NumericError', 'UsageError',
           'Tensor', 'Node', 'Graph', 'no_grad', 'is_grad_enabled',
           'as_tensor', 'backward',
           'add', 'sub', 'mul', 'div', 'scale', 'neg', 'sqrt', 'relu',
           'sigmoid', 'softmax', 'log_softmax', 'sum', 'mean', 'layer_norm',
           'concat', 'stack', 'reshape', 'transpose', 'getitem', 'conj',
           'hermitian', 'abs2', 'frobenius_norm', 'real', 'imag',
           'complex_from_parts', 'complex_exp_phase', 'matmul', 'einsum',
           'logdet_hpd', 'conv2d', 'upsample_nearest', 'straight_through',
           'numerical_gradient', 'gradcheck', 'clip_grad_norm', 'adam_step',
           'Adam', 'OPS']


class DimensionError(ValueError):
    """Raised when tensor shapes or axes do not conform."""


class DTypeError(TypeError):
    """Raised on a real/complex mismatch."""


class NumericError(ArithmeticError):
    """Raised when a forward op produces non-finite values or a matrix
    fails a definiteness check."""


class UsageError(RuntimeError):
    """Raised when the differentiation API is misused."""


_state = threading.local()


def is_grad_enabled():
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad():
    """Context manager that disables graph recording in the current thread."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _as_array(value):
    arr = np.asarray(value)
    if np.iscomplexobj(arr):
        return arr.astype(np.complex128, copy=False)
    return arr.astype(np.float64, copy=False)


Node = namedtuple('Node', ['op', 'inputs', 'backward'])


class Tensor:

    __array_priority__ = 1000

    def __init__(self, value, requires_grad=False, name=None):
        """A real or complex array that may record the ops applied to it.

        Parameters
        ----------
        value : array_like
            Stored as ``float64`` or ``complex128``.
        requires_grad : bool (optional)
            Mark this tensor as a leaf whose gradient `backward` reports.
        name : str (optional)
            Label used in error messages and checkpoints.
        """
        if isinstance(value, Tensor):
            value = value.value
        self.value = _as_array(value)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._node = None

    def __repr__(self):
        label = '' if self.name is None else ' {0!r}'.format(self.name)
        kind = 'complex' if self.is_complex else 'real'
        return '<Tensor{0} {1} shape={2}{3}>'.format(
            label, kind, self.shape,
            ' requires_grad' if self.requires_grad else '')

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def is_complex(self):
        return np.iscomplexobj(self.value)

    @property
    def is_leaf(self):
        return self._node is None

    def numpy(self):
        return self.value

    def item(self):
        if self.size != 1:
            raise DimensionError("item() requires a single-element tensor, "
                                 "got shape {0}".format(self.shape))
        return self.value.reshape(()).item()

    def detach(self):
        """Return a graph-free tensor sharing this tensor's values."""
        return Tensor(self.value, name=self.name)

    # Operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(other, self)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1. / other)
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and not np.isscalar(shape[0]):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and not np.isscalar(axes[0]):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def conj(self):
        return conj(self)

    @property
    def real(self):
        return real(self)

    @property
    def imag(self):
        return imag(self)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


# ----------------------------------------------------------------------------
# Op plumbing
#
OPS = OrderedDict()


def _register(name):
    """Record an op in `OPS` under ``name``."""
    def decorator(func):
        OPS[name] = func
        return func
    return decorator


def _make(value, op, inputs, backward_fn):
    value = _as_array(value)
    if conf.check_finite and not np.all(np.isfinite(value)):
        raise NumericError("Op '{0}' produced non-finite values."
                           .format(op))
    out = Tensor(value)
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = Node(op, tuple(inputs), backward_fn)
    return out


def _unbroadcast(grad, shape, is_complex):
    """Reduce a broadcast gradient back to ``shape`` and drop the imaginary
    part for real targets."""
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    if not is_complex:
        grad = np.real(grad)
    return np.broadcast_to(grad, shape)


def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if np.isscalar(axis):
        axis = (axis, )
    out = []
    for ax in axis:
        ax = int(ax)
        if not -ndim <= ax < ndim:
            raise DimensionError("Axis {0} is out of range for a tensor "
                                 "with {1} dimensions.".format(ax, ndim))
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise DimensionError("Repeated axis in {0}".format(axis))
    return tuple(sorted(out))


def _broadcast_shape(*shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise DimensionError("Shapes are not broadcastable: {0}"
                             .format(list(shapes)))


def _require_real(t, op):
    if t.is_complex:
        raise DTypeError("Op '{0}' requires a real tensor.".format(op))


# ----------------------------------------------------------------------------
# Elementwise
#
@_register('add')
def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    return _make(a.value + b.value, 'add', (a, b),
                 lambda g: (g, g))


@_register('sub')
def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    return _make(a.value - b.value, 'sub', (a, b),
                 lambda g: (g, -g))


@_register('mul')
def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    av, bv = a.value, b.value
    return _make(av * bv, 'mul', (a, b),
                 lambda g: (g * np.conj(bv), g * np.conj(av)))


@_register('div')
def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    av, bv = a.value, b.value
    out = av / bv

    def backward_fn(g):
        ga = g / np.conj(bv)
        return ga, -ga * np.conj(out)

    return _make(out, 'div', (a, b), backward_fn)


@_register('scale')
def scale(a, s):
    """Multiply by a constant (possibly complex) scalar."""
    a = as_tensor(a)
    return _make(a.value * s, 'scale', (a, ),
                 lambda g: (g * np.conj(s), ))


@_register('neg')
def neg(a):
    a = as_tensor(a)
    return _make(-a.value, 'neg', (a, ), lambda g: (-g, ))


@_register('sqrt')
def sqrt(a):
    a = as_tensor(a)
    _require_real(a, 'sqrt')
    out = np.sqrt(a.value)
    return _make(out, 'sqrt', (a, ), lambda g: (g / (2 * out), ))


@_register('relu')
def relu(a):
    a = as_tensor(a)
    _require_real(a, 'relu')
    mask = a.value > 0
    return _make(a.value * mask, 'relu', (a, ), lambda g: (g * mask, ))


@_register('sigmoid')
def sigmoid(a):
    a = as_tensor(a)
    _require_real(a, 'sigmoid')
    # split by sign to avoid overflow in exp
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1. / (1. + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1. + ex)
    return _make(out, 'sigmoid', (a, ),
                 lambda g: (g * out * (1. - out), ))


def _softmax_values(x, axis):
    shifted = x - x.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=axis, keepdims=True)


@_register('softmax')
def softmax(a, axis=-1):
    a = as_tensor(a)
    _require_real(a, 'softmax')
    axis = _normalize_axes(axis, a.ndim)[0]
    out = _softmax_values(a.value, axis)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)), )

    return _make(out, 'softmax', (a, ), backward_fn)


@_register('log_softmax')
def log_softmax(a, axis=-1):
    a = as_tensor(a)
    _require_real(a, 'log_softmax')
    axis = _normalize_axes(axis, a.ndim)[0]
    x = a.value
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward_fn(g):
        return (g - probs * g.sum(axis=axis, keepdims=True), )

    return _make(out, 'log_softmax', (a, ), backward_fn)


@_register('sum')
def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    shape = a.shape

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape), )

    return _make(a.value.sum(axis=axes, keepdims=keepdims), 'sum', (a, ),
                 backward_fn)


@_register('mean')
def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(sum(a, axis=axes, keepdims=keepdims), 1. / count)


@_register('layer_norm')
def layer_norm(a, eps=1e-5):
    """Normalize over the last axis to zero mean and unit variance."""
    a = as_tensor(a)
    _require_real(a, 'layer_norm')
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    inv_std = 1. / np.sqrt(x.var(axis=-1, keepdims=True) + eps)
    xhat = (x - mu) * inv_std

    def backward_fn(g):
        gm = g.mean(axis=-1, keepdims=True)
        gxm = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv_std * (g - gm - xhat * gxm), )

    return _make(xhat, 'layer_norm', (a, ), backward_fn)


@_register('abs2')
def abs2(a):
    a = as_tensor(a)
    av = a.value
    return _make(np.real(av * np.conj(av)), 'abs2', (a, ),
                 lambda g: (2 * g * av, ))


@_register('frobenius_norm')
def frobenius_norm(a, axis=None, keepdims=False):
    """Square root of the summed squared magnitudes over ``axis``."""
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    av = a.value
    out = np.sqrt(np.real(av * np.conj(av)).sum(axis=axes, keepdims=True))

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        safe = np.where(out > 0, out, 1.)
        return (np.where(out > 0, g / safe, 0.) * av, )

    value = out if keepdims else np.squeeze(out, axis=axes)
    return _make(value, 'frobenius_norm', (a, ), backward_fn)


# ----------------------------------------------------------------------------
# Complex plumbing
#
@_register('conj')
def conj(a):
    a = as_tensor(a)
    return _make(np.conj(a.value), 'conj', (a, ), lambda g: (np.conj(g), ))


@_register('real')
def real(a):
    a = as_tensor(a)
    return _make(np.real(a.value), 'real', (a, ), lambda g: (g, ))


@_register('imag')
def imag(a):
    a = as_tensor(a)
    return _make(np.imag(a.value), 'imag', (a, ), lambda g: (1j * g, ))


@_register('complex_from_parts')
def complex_from_parts(re, im=None):
    """Assemble ``re + j im`` from two real tensors."""
    re = as_tensor(re)
    _require_real(re, 'complex_from_parts')
    if im is None:
        return _make(re.value + 0j, 'complex_from_parts', (re, ),
                     lambda g: (np.real(g), ))
    im = as_tensor(im)
    _require_real(im, 'complex_from_parts')
    _broadcast_shape(re.shape, im.shape)
    return _make(re.value + 1j * im.value, 'complex_from_parts', (re, im),
                 lambda g: (np.real(g), np.imag(g)))


@_register('complex_exp_phase')
def complex_exp_phase(theta):
    """Map real phases to unit-modulus entries ``cos(theta) + j sin(theta)``.

    Parameters
    ----------
    theta : `Tensor`
        Real phases in radians.

    Returns
    -------
    out : `Tensor`
        Complex tensor with ``|out| == 1`` entrywise.
    """
    theta = as_tensor(theta)
    if theta.is_complex:
        raise DTypeError("complex_exp_phase requires real phases.")
    out = np.exp(1j * theta.value)
    return _make(out, 'complex_exp_phase', (theta, ),
                 lambda g: (np.real(g * np.conj(1j * out)), ))


# ----------------------------------------------------------------------------
# Shape ops
#
@_register('reshape')
def reshape(a, shape):
    a = as_tensor(a)
    in_shape = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise DimensionError("Cannot reshape {0} into {1}"
                             .format(in_shape, shape))
    return _make(out, 'reshape', (a, ),
                 lambda g: (np.reshape(g, in_shape), ))


@_register('transpose')
def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise DimensionError("Invalid permutation {0} for {1} dimensions"
                             .format(axes, a.ndim))
    inverse = np.argsort([ax % a.ndim for ax in axes])
    return _make(np.transpose(a.value, axes), 'transpose', (a, ),
                 lambda g: (np.transpose(g, inverse), ))


def hermitian(a):
    """Conjugate transpose of the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise DimensionError("hermitian requires at least 2 dimensions.")
    axes = list(range(a.ndim))
    axes[-2], axes[-1] = axes[-1], axes[-2]
    return conj(transpose(a, tuple(axes)))


OPS['hermitian'] = hermitian


@_register('getitem')
def getitem(a, index):
    a = as_tensor(a)
    shape = a.shape

    def backward_fn(g):
        out = np.zeros(shape, dtype=np.result_type(g, np.float64))
        np.add.at(out, index, g)
        return (out, )

    try:
        value = a.value[index]
    except IndexError as e:
        raise DimensionError(str(e))
    return _make(value, 'getitem', (a, ), backward_fn)


@_register('concat')
def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat needs at least one tensor.")
    axis = _normalize_axes(axis, tensors[0].ndim)[0]
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(str(e))
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, 'concat', tensors,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


@_register('stack')
def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("stack needs at least one tensor.")
    try:
        out = np.stack([t.value for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(str(e))
    axis = axis % out.ndim
    return _make(out, 'stack', tensors,
                 lambda g: tuple(np.moveaxis(g, axis, 0)))


# ----------------------------------------------------------------------------
# Linear algebra
#
@_register('matmul')
def matmul(a, b):
    """(Batched) matrix product ``a @ b``.

    Both operands need at least two dimensions and the same kind (both real
    or both complex). Leading batch dimensions broadcast.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.is_complex != b.is_complex:
        raise DTypeError("matmul operands must be both real or both complex, "
                         "got {0} and {1}".format(a.value.dtype,
                                                  b.value.dtype))
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul requires at least 2-d operands, got "
                             "shapes {0} and {1}".format(a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul inner dimensions disagree: {0} @ {1}"
                             .format(a.shape, b.shape))
    _broadcast_shape(a.shape[:-2], b.shape[:-2])
    av, bv = a.value, b.value

    def backward_fn(g):
        return (g @ np.conj(np.swapaxes(bv, -1, -2)),
                np.conj(np.swapaxes(av, -1, -2)) @ g)

    return _make(av @ bv, 'matmul', (a, b), backward_fn)


def _parse_subscripts(subscripts, n_operands):
    if '...' in subscripts:
        raise DimensionError("einsum ellipsis is not supported.")
    if '->' not in subscripts:
        raise DimensionError("einsum requires explicit output subscripts.")
    lhs, out = subscripts.replace(' ', '').split('->')
    ins = lhs.split(',')
    if len(ins) != n_operands:
        raise DimensionError("einsum got {0} operands for {1} subscripts"
                             .format(n_operands, len(ins)))
    for sub in ins:
        if len(set(sub)) != len(sub):
            raise DimensionError("einsum repeated index within operand {0!r} "
                                 "is not supported".format(sub))
    return ins, out


@_register('einsum')
def einsum(subscripts, *operands):
    """Differentiable `numpy.einsum` with explicit output subscripts.

    Every operand is treated as a multilinear (holomorphic) argument, so the
    gradient for operand ``i`` contracts the upstream gradient with the
    conjugates of the remaining operands.
    """
    operands = [as_tensor(t) for t in operands]
    ins, out_sub = _parse_subscripts(subscripts, len(operands))
    sizes = {}
    for sub, t in zip(ins, operands):
        if len(sub) != t.ndim:
            raise DimensionError("einsum subscript {0!r} does not match shape "
                                 "{1}".format(sub, t.shape))
        for ch, n in zip(sub, t.shape):
            if sizes.setdefault(ch, n) != n:
                raise DimensionError("einsum index {0!r} has conflicting "
                                     "sizes {1} and {2}"
                                     .format(ch, sizes[ch], n))
    values = [t.value for t in operands]
    value = np.einsum(subscripts, *values)

    def backward_fn(g):
        grads = []
        for i, sub in enumerate(ins):
            others = [j for j in range(len(ins)) if j != i]
            available = set(out_sub).union(*[ins[j] for j in others])
            kept = ''.join(ch for ch in sub if ch in available)
            spec = ','.join([out_sub] + [ins[j] for j in others])
            partial = np.einsum(spec + '->' + kept, g,
                                *[np.conj(values[j]) for j in others])
            # indices summed only inside operand i broadcast back
            for axis, ch in enumerate(sub):
                if ch not in available:
                    partial = np.expand_dims(partial, axis)
            grads.append(np.broadcast_to(partial, values[i].shape))
        return tuple(grads)

    return _make(value, 'einsum', operands, backward_fn)


@_register('logdet_hpd')
def logdet_hpd(a):
    """Natural-log determinant of (batched) Hermitian positive definite
    matrices via Cholesky factorization.

    Only the Hermitian part ``(A + A^H)/2`` enters the factorization, so the
    gradient ``A^{-H}`` is consistent with perturbations of every entry.

    Parameters
    ----------
    a : `Tensor`
        Shape ``[..., n, n]`` with ``n <= 8``.

    Returns
    -------
    logdet : `Tensor`
        Real tensor of shape ``[...]``.
    """
    a = as_tensor(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError("logdet_hpd requires square matrices, got {0}"
                             .format(a.shape))
    n = a.shape[-1]
    if n > 8:
        raise DimensionError("logdet_hpd supports matrices up to 8x8, got "
                             "{0}x{0}".format(n))
    herm = 0.5 * (a.value + np.conj(np.swapaxes(a.value, -1, -2)))
    try:
        chol = np.linalg.cholesky(herm)
    except np.linalg.LinAlgError:
        raise NumericError(_first_bad_pivot(herm))
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NumericError(_first_bad_pivot(herm))
    value = 2. * np.log(diag).sum(axis=-1)

    def backward_fn(g):
        # Hermitian part, so A^{-H} = A^{-1}
        inv = np.linalg.inv(herm)
        return (np.asarray(g)[..., None, None] * inv, )

    return _make(value, 'logdet_hpd', (a, ), backward_fn)


def _first_bad_pivot(herm):
    """Locate the first non-positive pivot of an LDL^H sweep."""
    flat = herm.reshape((-1, ) + herm.shape[-2:])
    for b, mat in enumerate(flat):
        work = np.array(mat, dtype=np.complex128)
        n = work.shape[0]
        for k in range(n):
            pivot = np.real(work[k, k])
            if not pivot > 0:
                index = np.unravel_index(b, herm.shape[:-2]) if herm.ndim > 2 \
                    else ()
                return ("Matrix is not positive definite: pivot ({0}, {0}) "
                        "of batch entry {1} is {2:.3e}"
                        .format(k, tuple(int(i) for i in index), pivot))
            col = work[k + 1:, k] / pivot
            work[k + 1:, k + 1:] -= np.outer(col, work[k, k + 1:])
    return "Matrix is not positive definite."


# ----------------------------------------------------------------------------
# Convolution
#
@_register('conv2d')
def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-d cross-correlation of ``x [B, C_in, H, W]`` with
    ``weight [C_out, C_in, k, k]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    _require_real(x, 'conv2d')
    _require_real(weight, 'conv2d')
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError("conv2d expects 4-d input and weight, got {0} "
                             "and {1}".format(x.shape, weight.shape))
    if x.shape[1] != weight.shape[1]:
        raise DimensionError("conv2d input has {0} channels, weight expects "
                             "{1}".format(x.shape[1], weight.shape[1]))
    k = weight.shape[-1]
    B, C, H, W = x.shape
    xp = np.pad(x.value, ((0, 0), (0, 0), (padding, padding),
                          (padding, padding)))
    if xp.shape[2] < k or xp.shape[3] < k:
        raise DimensionError("conv2d kernel {0} larger than padded input {1}"
                             .format(k, xp.shape[2:]))
    windows = np.lib.stride_tricks.sliding_window_view(
        xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = windows.shape[2:4]
    wv = weight.value
    out = np.einsum('bchwij,ocij->bohw', windows, wv, optimize=True)
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.value[None, :, None, None]
        inputs.append(bias)

    def backward_fn(g):
        gw = np.einsum('bohw,bchwij->ocij', g, windows, optimize=True)
        gxp = np.zeros(xp.shape)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + stride * Ho:stride,
                    j:j + stride * Wo:stride] += np.einsum(
                        'bohw,oc->bchw', g, wv[:, :, i, j])
        gx = gxp[:, :, padding:padding + H, padding:padding + W]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _make(out, 'conv2d', inputs, backward_fn)


@_register('upsample_nearest')
def upsample_nearest(x, factor=2):
    """Repeat each pixel of the last two axes ``factor`` times."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError("upsample_nearest needs at least 2 dimensions.")
    out = np.repeat(np.repeat(x.value, factor, axis=-2), factor, axis=-1)
    shape = x.shape

    def backward_fn(g):
        g = g.reshape(shape[:-2] + (shape[-2], factor, shape[-1], factor))
        return (g.sum(axis=(-3, -1)), )

    return _make(out, 'upsample_nearest', (x, ), backward_fn)


@_register('straight_through')
def straight_through(x, forward_value):
    """Forward ``forward_value`` but pass the upstream gradient to ``x``
    unchanged."""
    x = as_tensor(x)
    forward_value = np.asarray(forward_value)
    if forward_value.shape != x.shape:
        raise DimensionError("straight_through value shape {0} differs from "
                             "input shape {1}"
                             .format(forward_value.shape, x.shape))
    return _make(forward_value, 'straight_through', (x, ), lambda g: (g, ))


# ----------------------------------------------------------------------------
# Backward pass
#
class Graph:

    def __init__(self, nodes):
        """Tensors reachable from an output, in topological order (inputs
        before the tensors computed from them)."""
        self.nodes = nodes

    @classmethod
    def from_output(cls, output):
        order = []
        visited = set()
        stack = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                for parent in tensor._node.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    @property
    def leaves(self):
        return [t for t in self.nodes if t.is_leaf and t.requires_grad]

    def __len__(self):
        return len(self.nodes)


def backward(loss, wrt=None):
    """Back-propagate a real scalar loss.

    Parameters
    ----------
    loss : `Tensor`
        Real, single-element output of a recorded graph.
    wrt : iterable of `Tensor` (optional)
        Leaves to report. Leaves not reachable from ``loss`` receive zeros.
        Defaults to every leaf in the graph.

    Returns
    -------
    grads : dict
        Maps each leaf `Tensor` to a gradient array of the leaf's shape and
        dtype. Gradients from separate branches are summed.
    """
    if not isinstance(loss, Tensor):
        raise UsageError("backward expects a Tensor loss.")
    if loss.is_complex:
        raise UsageError("backward requires a real loss, got complex.")
    if loss.size != 1:
        raise UsageError("backward requires a scalar loss, got shape {0}"
                         .format(loss.shape))

    graph = Graph.from_output(loss) if loss.requires_grad else Graph([])
    grads = {id(loss): np.ones(loss.shape)}
    for tensor in reversed(graph.nodes):
        g = grads.pop(id(tensor), None) if not tensor.is_leaf \
            else grads.get(id(tensor))
        if g is None or tensor._node is None:
            continue
        parents = tensor._node.inputs
        for parent, pg in zip(parents, tensor._node.backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            pg = _unbroadcast(pg, parent.shape, parent.is_complex)
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = np.array(pg)

    leaves = graph.leaves if wrt is None else list(wrt)
    result = OrderedDict()
    for leaf in leaves:
        g = grads.get(id(leaf))
        if g is None:
            g = np.zeros_like(leaf.value)
        result[leaf] = g
    return result


# ----------------------------------------------------------------------------
# Finite differences
#
GradcheckResult = namedtuple('GradcheckResult',
                             ['analytic', 'numeric', 'max_error', 'passed'])


def numerical_gradient(func, values, h=1e-5):
    """Central finite differences of a real scalar ``func`` w.r.t. each array
    in ``values``; complex arrays are perturbed in Re and Im separately."""
    values = [_as_array(v).copy() for v in values]

    def evaluate():
        with no_grad():
            return float(np.real(
                func(*[Tensor(v) for v in values]).item()))

    grads = []
    for v in values:
        grad = np.zeros_like(v)
        flat = v.reshape(-1)
        gflat = grad.reshape(-1)
        steps = [1.] + ([1j] if np.iscomplexobj(v) else [])
        for idx in range(flat.size):
            orig = flat[idx]
            for step in steps:
                flat[idx] = orig + h * step
                fp = evaluate()
                flat[idx] = orig - h * step
                fm = evaluate()
                flat[idx] = orig
                gflat[idx] += step * (fp - fm) / (2 * h)
        grads.append(grad)
    return grads


def gradcheck(func, values, h=1e-5, rtol=1e-4, atol=1e-8):
    """Compare `backward` against `numerical_gradient`.

    Returns
    -------
    result : `GradcheckResult`
        ``max_error`` is the largest ``|analytic - numeric|`` scaled by
        ``atol + rtol * |numeric|``; the check passes when it is at most 1.
    """
    leaves = [Tensor(v, requires_grad=True) for v in values]
    loss = func(*leaves)
    grads = backward(loss, wrt=leaves)
    analytic = [np.array(grads[leaf]) for leaf in leaves]
    numeric = numerical_gradient(func, values, h=h)
    max_error = 0.
    for a, n in zip(analytic, numeric):
        if a.size:
            err = np.abs(a - n) / (atol + rtol * np.abs(n))
            max_error = max(max_error, float(err.max()))
    return GradcheckResult(analytic, numeric, max_error, max_error <= 1.)


# ----------------------------------------------------------------------------
# Optimization
#
def clip_grad_norm(grads, max_norm):
    """Rescale a name-to-gradient mapping so its global 2-norm is at most
    ``max_norm``. Returns the clipped mapping and the norm before clipping."""
    total = np.sqrt(np.sum([np.sum(np.abs(g)**2) for g in grads.values()]))
    if not np.isfinite(total):
        raise NumericError("Gradient norm is not finite.")
    factor = 1. if total <= max_norm or total == 0 else max_norm / total
    return OrderedDict((k, g * factor) for k, g in grads.items()), total


def adam_step(params, grads, state, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update with bias correction.

    Parameters
    ----------
    params : dict
        Name to `Tensor`. Each tensor's ``value`` is replaced (never mutated
        in place).
    grads : dict
        Name to gradient array. Names missing here are left untouched.
    state : dict
        Optimizer state from a previous call, or empty. Holds the step
        count ``'t'`` and first/second moment dicts ``'m'``, ``'v'``.

    Returns
    -------
    params : dict
    state : dict
    """
    b1, b2 = betas
    t = state.get('t', 0) + 1
    m = dict(state.get('m', {}))
    v = dict(state.get('v', {}))
    for name, g in grads.items():
        param = params[name]
        g = np.asarray(g)
        if g.shape != param.shape:
            raise DimensionError("Gradient for {0!r} has shape {1}, parameter "
                                 "has {2}".format(name, g.shape, param.shape))
        m_prev = m.get(name, np.zeros_like(param.value))
        v_prev = v.get(name, np.zeros_like(param.value))
        if m_prev.shape != g.shape or v_prev.shape != g.shape:
            raise DimensionError("Optimizer state for {0!r} does not match "
                                 "the parameter shape".format(name))
        m[name] = b1 * m_prev + (1 - b1) * g
        v[name] = b2 * v_prev + (1 - b2) * np.abs(g)**2
        m_hat = m[name] / (1 - b1**t)
        v_hat = v[name] / (1 - b2**t)
        param.value = param.value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, {'t': t, 'm': m, 'v': v}


class Adam:

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = {}

    def step(self, grads):
        _, self.state = adam_step(self.params, grads, self.state, lr=self.lr,
                                  betas=self.betas, eps=self.eps)
