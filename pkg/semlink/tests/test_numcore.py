# Third-party
import numpy as np
import pytest

# Project
from .. import conf
from .. import numcore as nc
from ..numcore import (Tensor, backward, gradcheck, DimensionError,
                       DTypeError, NumericError, UsageError)


def _weights(shape, is_complex=False, seed=123):
    rnd = np.random.default_rng(seed)
    w = rnd.standard_normal(shape)
    if is_complex:
        w = w + 1j * rnd.standard_normal(shape)
    return w


def _reduce(t):
    """Real scalar depending on every entry of ``t``."""
    w = _weights(t.shape, t.is_complex)
    if t.is_complex:
        return nc.sum(nc.real(nc.mul(t, w)))
    return nc.sum(nc.mul(t, w))


def _cplx(rnd, *shape):
    return rnd.standard_normal(shape) + 1j * rnd.standard_normal(shape)


def _away_from_zero(rnd, *shape):
    return np.sign(rnd.standard_normal(shape)) * rnd.uniform(0.1, 1., shape)


def _hpd(A):
    n = A.shape[-1]
    return nc.matmul(A, nc.hermitian(A)) + np.eye(n)


# name -> rnd -> (func, values); the op name is the part before '-'
CASES = {
    'add': lambda r: (lambda a, b: _reduce(nc.add(a, b)),
                      [r.standard_normal((3, 4)), r.standard_normal(4)]),
    'add-complex': lambda r: (lambda a, b: _reduce(a + b),
                              [_cplx(r, 3, 4), _cplx(r, 3, 4)]),
    'sub': lambda r: (lambda a, b: _reduce(nc.sub(a, b)),
                      [_cplx(r, 2, 3), r.standard_normal((1, 3))]),
    'mul': lambda r: (lambda a, b: _reduce(nc.mul(a, b)),
                      [_cplx(r, 2, 3), _cplx(r, 3)]),
    'mul-real': lambda r: (lambda a, b: _reduce(a * b),
                           [r.standard_normal((2, 3)),
                            r.standard_normal((2, 1))]),
    'div': lambda r: (lambda a, b: _reduce(nc.div(a, b)),
                      [_cplx(r, 2, 3),
                       r.uniform(1., 2., (2, 3)) *
                       np.exp(1j * r.uniform(-np.pi, np.pi, (2, 3)))]),
    'scale': lambda r: (lambda a: _reduce(nc.scale(a, 0.3 - 1.2j)),
                        [_cplx(r, 4)]),
    'neg': lambda r: (lambda a: _reduce(-a), [_cplx(r, 2, 2)]),
    'sqrt': lambda r: (lambda a: _reduce(nc.sqrt(a)),
                       [r.uniform(0.5, 2., (3, 4))]),
    'relu': lambda r: (lambda a: _reduce(nc.relu(a)),
                       [_away_from_zero(r, 3, 4)]),
    'sigmoid': lambda r: (lambda a: _reduce(nc.sigmoid(a)),
                          [3 * r.standard_normal((3, 4))]),
    'softmax': lambda r: (lambda a: _reduce(nc.softmax(a, axis=0)),
                          [r.standard_normal((4, 3))]),
    'softmax-last': lambda r: (lambda a: _reduce(nc.softmax(a, axis=-1)),
                               [r.standard_normal((2, 5))]),
    'log_softmax': lambda r: (lambda a: _reduce(nc.log_softmax(a, axis=1)),
                              [r.standard_normal((2, 4, 3))]),
    'sum': lambda r: (lambda a: _reduce(nc.sum(a, axis=(0, 2),
                                               keepdims=True)),
                      [_cplx(r, 2, 3, 4)]),
    'sum-all': lambda r: (lambda a: _reduce(nc.sum(a)),
                          [r.standard_normal((2, 3))]),
    'mean': lambda r: (lambda a: _reduce(nc.mean(a, axis=1)),
                       [r.standard_normal((3, 4))]),
    'layer_norm': lambda r: (lambda a: _reduce(nc.layer_norm(a)),
                             [r.standard_normal((3, 6))]),
    'abs2': lambda r: (lambda a: _reduce(nc.abs2(a)), [_cplx(r, 3, 2)]),
    'frobenius_norm': lambda r: (
        lambda a: _reduce(nc.frobenius_norm(a, axis=-1)), [_cplx(r, 3, 4)]),
    'frobenius_norm-all': lambda r: (
        lambda a: nc.frobenius_norm(a), [r.standard_normal((2, 3))]),
    'conj': lambda r: (lambda a: _reduce(nc.conj(a)), [_cplx(r, 3)]),
    'real': lambda r: (lambda a: _reduce(nc.real(a)), [_cplx(r, 3)]),
    'imag': lambda r: (lambda a: _reduce(nc.imag(a)), [_cplx(r, 3)]),
    'complex_from_parts': lambda r: (
        lambda a, b: _reduce(nc.complex_from_parts(a, b)),
        [r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
    'complex_exp_phase': lambda r: (
        lambda a: _reduce(nc.complex_exp_phase(a)),
        [r.uniform(-np.pi, np.pi, (3, 2))]),
    'reshape': lambda r: (lambda a: _reduce(nc.reshape(a, (3, 4))),
                          [_cplx(r, 2, 6)]),
    'transpose': lambda r: (lambda a: _reduce(nc.transpose(a, (2, 0, 1))),
                            [r.standard_normal((2, 3, 4))]),
    'hermitian': lambda r: (lambda a: _reduce(nc.hermitian(a)),
                            [_cplx(r, 2, 3, 4)]),
    'getitem': lambda r: (lambda a: _reduce(a[1:, ::2]), [_cplx(r, 3, 5)]),
    'concat': lambda r: (lambda a, b: _reduce(nc.concat([a, b], axis=1)),
                         [r.standard_normal((2, 3)),
                          r.standard_normal((2, 2))]),
    'stack': lambda r: (lambda a, b: _reduce(nc.stack([a, b], axis=-1)),
                        [_cplx(r, 2, 3), _cplx(r, 2, 3)]),
    'matmul': lambda r: (lambda a, b: _reduce(nc.matmul(a, b)),
                         [_cplx(r, 2, 3, 4), _cplx(r, 4, 2)]),
    'matmul-real': lambda r: (lambda a, b: _reduce(a @ b),
                              [r.standard_normal((3, 3)),
                               r.standard_normal((3, 2))]),
    'einsum': lambda r: (lambda a, b: _reduce(nc.einsum('bij,bj->bi', a, b)),
                         [_cplx(r, 2, 3, 4), _cplx(r, 2, 4)]),
    'einsum-three': lambda r: (
        lambda a, b, c: _reduce(nc.einsum('ar,krt,kts->kas', a, b, c)),
        [_cplx(r, 2, 3), _cplx(r, 2, 3, 4), _cplx(r, 2, 4, 2)]),
    'einsum-private-index': lambda r: (
        lambda a, b: _reduce(nc.einsum('ij,k->ik', a, b)),
        [r.standard_normal((2, 3)), r.standard_normal(4)]),
    'logdet_hpd': lambda r: (lambda a: nc.sum(nc.logdet_hpd(_hpd(a))),
                             [_cplx(r, 2, 2, 2)]),
    'conv2d': lambda r: (
        lambda x, w, b: _reduce(nc.conv2d(x, w, b, stride=2, padding=1)),
        [r.standard_normal((1, 2, 5, 5)), r.standard_normal((3, 2, 3, 3)),
         r.standard_normal(3)]),
    'conv2d-unit-stride': lambda r: (
        lambda x, w: _reduce(nc.conv2d(x, w, padding=1)),
        [r.standard_normal((2, 1, 4, 4)), r.standard_normal((2, 1, 3, 3))]),
    'upsample_nearest': lambda r: (
        lambda a: _reduce(nc.upsample_nearest(a, 2)),
        [r.standard_normal((1, 2, 2, 3))]),
}


def test_cases_cover_registered_ops():
    covered = {name.split('-')[0] for name in CASES}
    # straight_through has a non-smooth forward; tested separately
    missing = set(nc.OPS) - covered - {'straight_through'}
    assert not missing


@pytest.mark.parametrize('name', sorted(CASES))
@pytest.mark.parametrize('seed', range(10))
def test_gradcheck(name, seed):
    func, values = CASES[name](np.random.default_rng(seed))
    result = gradcheck(func, values, atol=1e-6)
    assert result.passed, (name, result.max_error)


def test_matmul_examples():
    rnd = np.random.default_rng(42)
    M = _cplx(rnd, 2, 2)
    assert np.allclose(nc.matmul(np.eye(2) + 0j, M).value, M, rtol=0,
                       atol=1e-15)

    swap = Tensor([[0., 1.], [1., 0.]])
    out = nc.matmul(swap, Tensor([[3.], [7.]]))
    assert np.array_equal(out.value, [[7.], [3.]])

    a, b = _cplx(rnd, 3, 3), _cplx(rnd, 3, 3)
    oracle = np.zeros((3, 3), dtype=complex)
    for i in range(3):
        for j in range(3):
            for k in range(3):
                oracle[i, j] += a[i, k] * b[k, j]
    assert np.allclose(nc.matmul(a, b).value, oracle, rtol=0, atol=1e-12)


@pytest.mark.parametrize('seed', range(5))
def test_matmul_associative(seed):
    rnd = np.random.default_rng(seed)
    a, b, c = _cplx(rnd, 3, 4), _cplx(rnd, 4, 2), _cplx(rnd, 2, 5)
    left = nc.matmul(nc.matmul(a, b), c).value
    right = nc.matmul(a, nc.matmul(b, c)).value
    assert np.allclose(left, right, rtol=0, atol=1e-10)


def test_matmul_errors():
    with pytest.raises(DimensionError):
        nc.matmul(np.ones((2, 3)), np.ones((2, 3)))

    with pytest.raises(DTypeError):
        nc.matmul(np.ones((2, 2)), np.ones((2, 2)) + 0j)

    with pytest.raises(DimensionError):
        nc.matmul(np.ones(3), np.ones((3, 1)))


def test_complex_exp_phase():
    out = nc.complex_exp_phase(Tensor([0., np.pi / 2])).value
    assert np.allclose(out, [1., 1j], rtol=0, atol=1e-12)

    rnd = np.random.default_rng(7)
    theta = rnd.uniform(-10, 10, (50, 4))
    out = nc.complex_exp_phase(theta).value
    assert np.max(np.abs(np.abs(out) - 1)) < 1e-12

    # d Re / d theta = -sin(theta)
    t = Tensor(theta, requires_grad=True)
    grads = backward(nc.sum(nc.real(nc.complex_exp_phase(t))))
    assert np.allclose(grads[t], -np.sin(theta), rtol=0, atol=1e-12)
    numeric = nc.numerical_gradient(
        lambda x: nc.sum(nc.real(nc.complex_exp_phase(x))), [theta])[0]
    assert np.allclose(numeric, -np.sin(theta), rtol=0, atol=1e-6)

    with pytest.raises(DTypeError):
        nc.complex_exp_phase(Tensor([1j]))


def test_logdet_examples():
    assert nc.logdet_hpd(np.eye(2) + 0j).item() == 0.
    assert np.isclose(nc.logdet_hpd(np.diag([2., 3.]) + 0j).item(),
                      np.log(6.), rtol=0, atol=1e-14)

    rnd = np.random.default_rng(11)
    for _ in range(20):
        A = _cplx(rnd, 2, 2)
        M = A @ A.conj().T + 0.1 * np.eye(2)
        det = np.real(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
        assert np.isclose(nc.logdet_hpd(M).item(), np.log(det), rtol=0,
                          atol=1e-10)

        result = gradcheck(lambda m: nc.logdet_hpd(m), [M], atol=1e-6,
                           rtol=1e-5)
        assert result.passed


def test_logdet_errors():
    bad = np.array([[[1., 0.], [0., 1.]], [[1., 2.], [2., 1.]]]) + 0j
    with pytest.raises(NumericError, match=r'pivot \(1, 1\) of batch entry '
                                           r'\(1,\)'):
        nc.logdet_hpd(bad)

    with pytest.raises(DimensionError):
        nc.logdet_hpd(np.eye(9) + 0j)

    with pytest.raises(DimensionError):
        nc.logdet_hpd(np.ones((2, 3)) + 0j)


def test_backward_examples():
    rnd = np.random.default_rng(3)
    x = Tensor(rnd.standard_normal((3, 2)), requires_grad=True)
    grads = backward(nc.sum(x))
    assert np.array_equal(grads[x], np.ones((3, 2)))

    z = Tensor(_cplx(rnd, 4), requires_grad=True)
    grads = backward(nc.sum(nc.abs2(z)))
    assert np.allclose(grads[z], 2 * z.value, rtol=0, atol=1e-14)

    grads = backward(nc.frobenius_norm(x) * nc.frobenius_norm(x))
    assert np.allclose(grads[x], 2 * x.value, rtol=0, atol=1e-12)


def test_backward_accumulates_branches():
    rnd = np.random.default_rng(5)
    values = [rnd.standard_normal(4)]

    def func(x):
        return nc.sum(nc.sigmoid(x) * x) + nc.sum(nc.scale(x, 3.))

    result = gradcheck(func, values)
    assert result.passed

    x = Tensor(values[0], requires_grad=True)
    grads = backward(nc.sum(x) + nc.sum(x))
    assert np.array_equal(grads[x], 2 * np.ones(4))


def test_backward_unreachable_leaf():
    x = Tensor(np.ones(3), requires_grad=True)
    y = Tensor(np.ones(2) + 1j, requires_grad=True)
    grads = backward(nc.sum(x), wrt=[x, y])
    assert np.array_equal(grads[y], np.zeros(2))
    assert grads[y].dtype == np.complex128


def test_backward_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(UsageError):
        backward(x)

    z = Tensor(np.ones(1) + 1j, requires_grad=True)
    with pytest.raises(UsageError):
        backward(nc.sum(z))

    with pytest.raises(UsageError):
        backward(np.float64(1.))


def test_no_grad():
    x = Tensor(np.ones(3), requires_grad=True)
    with nc.no_grad():
        assert not nc.is_grad_enabled()
        y = nc.sum(x * x)
    assert nc.is_grad_enabled()
    assert not y.requires_grad
    assert y.is_leaf

    d = (x * 2).detach()
    assert d.is_leaf and not d.requires_grad


def test_check_finite():
    with np.errstate(all='ignore'):
        with pytest.raises(NumericError, match='scale'):
            nc.scale(Tensor([1e308]), 10.)

        with conf.set_temp('check_finite', False):
            out = nc.scale(Tensor([1e308]), 10.)
        assert np.isinf(out.value[0])


def test_dtype_and_axis_errors():
    with pytest.raises(DTypeError):
        nc.relu(Tensor([1j]))

    with pytest.raises(DimensionError):
        nc.sum(Tensor(np.ones((2, 2))), axis=2)

    with pytest.raises(DimensionError):
        nc.einsum('ij,jk', np.ones((2, 2)), np.ones((2, 2)))

    with pytest.raises(DimensionError):
        nc.einsum('ij,jk->ik', np.ones((2, 3)), np.ones((2, 2)))

    with pytest.raises(DimensionError):
        nc.reshape(Tensor(np.ones(6)), (4, 2))


def test_simple_values():
    assert np.array_equal(nc.relu(Tensor([-1., 2.])).value, [0., 2.])
    assert np.allclose(nc.softmax(Tensor(np.zeros(4))).value, 0.25)

    t = Tensor(np.arange(6.)).reshape(2, -1)
    assert t.shape == (2, 3)
    assert (t * 2).value[1, 2] == 10.


def test_straight_through():
    rnd = np.random.default_rng(1)
    x = Tensor(rnd.uniform(0, 1, 5), requires_grad=True)
    hard = (x.value >= 0.5).astype(float)
    w = rnd.standard_normal(5)
    out = nc.straight_through(x, hard)
    assert np.array_equal(out.value, hard)
    grads = backward(nc.sum(out * w))
    assert np.array_equal(grads[x], w)

    with pytest.raises(DimensionError):
        nc.straight_through(x, np.ones(3))


def test_clip_grad_norm():
    grads = {'a': np.array([3., 0.]), 'b': np.array([0., 4j])}
    clipped, total = nc.clip_grad_norm(grads, 1.)
    assert np.isclose(total, 5.)
    norm = np.sqrt(sum(np.sum(np.abs(g)**2) for g in clipped.values()))
    assert np.isclose(norm, 1.)

    clipped, _ = nc.clip_grad_norm(grads, 10.)
    assert np.array_equal(clipped['a'], grads['a'])

    with pytest.raises(NumericError):
        nc.clip_grad_norm({'a': np.array([np.nan])}, 1.)


def test_adam_zero_gradient():
    params = {'w': Tensor(np.array([1., -2.]))}
    params, state = nc.adam_step(params, {'w': np.zeros(2)}, {})
    assert np.array_equal(params['w'].value, [1., -2.])
    assert state['t'] == 1


def test_adam_matches_reference():
    w0, lr, b1, b2, eps = 1., 0.1, 0.9, 0.999, 1e-8
    params = {'w': Tensor(np.array([w0]))}
    state = {}
    w, m, v = w0, 0., 0.
    for t in range(1, 6):
        g = 2 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        params, state = nc.adam_step(
            params, {'w': 2 * params['w'].value}, state, lr=lr)
        assert np.isclose(params['w'].value[0], w, rtol=0, atol=1e-14)
    assert w < w0


def test_adam_converges_on_quadratic():
    w = Tensor(np.array([0.5, -0.5]), requires_grad=True)
    opt = nc.Adam({'w': w}, lr=0.05)
    scales = np.array([1., 2.])
    for _ in range(200):
        loss = nc.sum(nc.mul(nc.mul(w, w), scales))
        opt.step({'w': backward(loss, wrt=[w])[w]})
    assert np.linalg.norm(w.value) < 1e-2


def test_adam_complex_parameter():
    z = Tensor(np.array([1. + 1j]), requires_grad=True)
    opt = nc.Adam({'z': z}, lr=0.05)
    for _ in range(200):
        opt.step({'z': backward(nc.sum(nc.abs2(z)), wrt=[z])[z]})
    assert np.abs(z.value[0]) < 1e-2


def test_adam_shape_mismatch():
    with pytest.raises(DimensionError):
        nc.adam_step({'w': Tensor(np.ones(2))}, {'w': np.ones(3)}, {})
