import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from amr.engine import Recording, Tensor, grad_check, grad_check_params, ops
from amr.errors import DegenerateMaskError, DimensionError
from amr.layers import (
    FORGET_BIAS,
    BiLstmParams,
    LinearParams,
    LstmParams,
    bilstm_forward,
    linear,
    lstm_step,
)


def _zeros_lstm(in_dim, d):
    return LstmParams(Tensor(np.zeros((in_dim, 4 * d))), Tensor(np.zeros((d, 4 * d))), Tensor(np.zeros(4 * d)))


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


# ==================== lstm_step ====================

def test_lstm_step_zero_fixed_point():
    h, c = lstm_step(_zeros_lstm(3, 2), Tensor(np.zeros(3)), Tensor(np.zeros(2)), Tensor(np.zeros(2)))
    assert_array_equal(h.data, np.zeros(2))
    assert_array_equal(c.data, np.zeros(2))


def test_lstm_step_saturated_forget_gate_keeps_cell():
    p = _zeros_lstm(2, 2)
    bias = np.zeros(8)
    bias[0:2] = -50.0   # i -> 0
    bias[2:4] = 50.0    # f -> 1
    p.bias = Tensor(bias)
    c_prev = np.array([0.7, -1.3])
    _, c = lstm_step(p, Tensor([0.4, -0.2]), Tensor([0.1, 0.2]), Tensor(c_prev))
    assert_allclose(c.data, c_prev, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_lstm_step_matches_hand_recurrence(seed):
    rng = np.random.default_rng(seed)
    p = LstmParams.init(2, 2, rng)
    p.bias = Tensor(rng.normal(size=8))
    x, h_prev, c_prev = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)

    z = x @ p.w_ih.data + h_prev @ p.w_hh.data + p.bias.data
    i, f, g, o = _sig(z[0:2]), _sig(z[2:4]), np.tanh(z[4:6]), _sig(z[6:8])
    c_expected = f * c_prev + i * g
    h_expected = o * np.tanh(c_expected)

    h, c = lstm_step(p, Tensor(x), Tensor(h_prev), Tensor(c_prev))
    assert_allclose(c.data, c_expected, rtol=1e-10)
    assert_allclose(h.data, h_expected, rtol=1e-10)


def test_lstm_step_shape_mismatch():
    p = LstmParams.init(3, 2, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        lstm_step(p, Tensor(np.zeros(2)), Tensor(np.zeros(2)), Tensor(np.zeros(2)))


def test_lstm_init_forget_bias():
    p = LstmParams.init(3, 4, np.random.default_rng(0))
    assert_array_equal(p.bias.data[4:8], np.full(4, FORGET_BIAS))
    assert_array_equal(np.delete(p.bias.data, range(4, 8)), np.zeros(12))
    limit = np.sqrt(6.0 / (3 + 16))
    assert np.all(np.abs(p.w_ih.data) <= limit)


@pytest.mark.parametrize("seed", range(3))
def test_lstm_step_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = LstmParams.init(3, 4, rng)
    h_prev, c_prev = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))

    def f(x):
        h, c = lstm_step(p, x, h_prev, c_prev)
        return ops.sum_all(ops.mul(ops.add(h, c), ops.add(h, c)))

    assert grad_check(f, rng.normal(size=3)).passed


# ==================== bilstm_forward ====================

def test_bilstm_single_step_concatenates_directions():
    rng = np.random.default_rng(1)
    p = BiLstmParams.init(3, 2, rng)
    x = rng.normal(size=3)
    out = bilstm_forward(p, Tensor(x[None, :]), [True])
    zero = Tensor(np.zeros(2))
    h_fwd, _ = lstm_step(p.forward, Tensor(x), zero, zero)
    h_bwd, _ = lstm_step(p.backward, Tensor(x), zero, zero)
    assert_allclose(out.data[0], np.concatenate([h_fwd.data, h_bwd.data]), rtol=1e-10)


def test_bilstm_palindrome_with_tied_directions():
    rng = np.random.default_rng(2)
    single = LstmParams.init(3, 2, rng)
    p = BiLstmParams(single, single)
    a, b = rng.normal(size=3), rng.normal(size=3)
    out = bilstm_forward(p, Tensor(np.stack([a, b, a])), [True, True, True]).data
    swapped = np.concatenate([out[:, 2:], out[:, :2]], axis=1)
    assert_allclose(out, swapped[::-1], rtol=1e-10)


def test_bilstm_masked_rows_are_zero_and_inert():
    rng = np.random.default_rng(3)
    p = BiLstmParams.init(3, 4, rng)
    mask = np.array([True, True, True, False, False])
    seq = rng.normal(size=(5, 3))
    with Recording() as rec:
        x = Tensor(seq, requires_grad=True)
        out = bilstm_forward(p, x, mask)
        loss = ops.sum_all(ops.mul(out, out))
    assert_array_equal(out.data[3:], np.zeros((2, 8)))
    assert_array_equal(rec.backward(loss)[x][3:], np.zeros((2, 3)))

    noisy = seq.copy()
    noisy[3:] = rng.normal(size=(2, 3)) * 100.0
    assert_allclose(bilstm_forward(p, Tensor(noisy), mask).data, out.data, rtol=1e-10)


def test_bilstm_matches_unpadded_run():
    rng = np.random.default_rng(4)
    p = BiLstmParams.init(3, 2, rng)
    seq = rng.normal(size=(4, 3))
    short = bilstm_forward(p, Tensor(seq[:2]), [True, True]).data
    padded = bilstm_forward(p, Tensor(seq), [True, True, False, False]).data
    assert_allclose(padded[:2], short, rtol=1e-10)


def test_bilstm_direction_sensitivity():
    rng = np.random.default_rng(5)
    p = BiLstmParams.init(3, 4, rng)
    seq = rng.normal(size=(5, 3))
    mask = [True] * 5
    base = bilstm_forward(p, Tensor(seq), mask).data
    step = 2
    bumped = seq.copy()
    bumped[step] += 1.0
    moved = bilstm_forward(p, Tensor(bumped), mask).data
    # 正向前半只依赖 ≤ t 的输入，反向后半只依赖 ≥ t 的输入
    assert_allclose(moved[:step, :4], base[:step, :4], rtol=1e-10)
    assert_allclose(moved[step + 1:, 4:], base[step + 1:, 4:], rtol=1e-10)
    assert not np.allclose(moved[step:, :4], base[step:, :4])
    assert not np.allclose(moved[:step + 1, 4:], base[:step + 1, 4:])


def test_bilstm_rejects_bad_inputs():
    p = BiLstmParams.init(3, 2, np.random.default_rng(0))
    with pytest.raises(DegenerateMaskError):
        bilstm_forward(p, Tensor(np.zeros((2, 3))), [False, False])
    with pytest.raises(DimensionError):
        bilstm_forward(p, Tensor(np.zeros((2, 4))), [True, True])
    with pytest.raises(DimensionError):
        bilstm_forward(p, Tensor(np.zeros((2, 3))), [True])
    with pytest.raises(ValueError):
        bilstm_forward(p, Tensor(np.zeros((3, 3))), [True, False, True])


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("length", [5, 3])
def test_bilstm_finite_differences(seed, length):
    rng = np.random.default_rng(seed)
    p = BiLstmParams.init(3, 4, rng)
    mask = np.arange(5) < length
    weights = Tensor(rng.normal(size=(5, 8)))

    def f(x):
        return ops.sum_all(ops.mul(bilstm_forward(p, x, mask), weights))

    assert grad_check(f, rng.normal(size=(5, 3))).passed


def test_bilstm_parameter_gradients():
    rng = np.random.default_rng(7)
    p = BiLstmParams.init(3, 4, rng)
    seq = Tensor(rng.normal(size=(5, 3)))
    weights = Tensor(rng.normal(size=(5, 8)))

    def loss():
        return ops.sum_all(ops.mul(bilstm_forward(p, seq, [True] * 5), weights))

    report = grad_check_params(loss, p.named_tensors("encoder"))
    assert report.passed, report.failures()
    assert len(report.reports) == 6


# ==================== linear ====================

def test_linear_examples():
    identity = LinearParams(Tensor(np.eye(2)), Tensor(np.zeros(2)))
    assert_array_equal(linear(identity, Tensor([3.0, -4.0])).data, [3.0, -4.0])

    p = LinearParams(Tensor([[1.0, 0.0], [0.0, 2.0]]), Tensor([1.0, 1.0]))
    assert_array_equal(linear(p, Tensor([0.0, 0.0])).data, [1.0, 1.0])
    assert_array_equal(linear(p, Tensor([1.0, 2.0])).data, [2.0, 5.0])

    with pytest.raises(DimensionError):
        linear(p, Tensor([1.0, 2.0, 3.0]))


def test_linear_init_zero_bias():
    p = LinearParams.init(6, 2, np.random.default_rng(0))
    assert p.weight.shape == (6, 2)
    assert_array_equal(p.bias.data, [0.0, 0.0])
