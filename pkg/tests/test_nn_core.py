import numpy as np
import pytest

from aucap.errors import GraphStateError, ShapeError
from aucap.nn import tensor as T
from aucap.nn.gradcheck import max_relative_error
from aucap.nn.layers import (
    BatchNorm,
    BiGRU,
    Dense,
    GRUCellParams,
    bigru_forward,
    gru_cell_step,
    gru_forward,
    orthogonal,
)
from aucap.nn.optim import AdamState, adam_step
from aucap.nn.tensor import Parameter, Tensor


def zero_cell(input_dim, hidden, bias=True):
    cell = GRUCellParams.create(input_dim, hidden, np.random.RandomState(0), bias=bias)
    for p in cell.parameters():
        p.data[...] = 0.0
    return cell


class TestGRUAnalytic:
    def test_zero_weights_zero_state(self):
        cell = zero_cell(4, 3)
        x = Tensor(np.random.RandomState(1).standard_normal((1, 4)))
        h = Tensor(np.zeros((1, 3)))
        out = gru_cell_step(x, h, cell)
        assert np.array_equal(out.data, np.zeros((1, 3)))

    def test_zero_weights_halve_state(self):
        # z = r = 0.5, h_hat = 0 => h_t = 0.5 * h_prev, exactly
        cell = zero_cell(4, 3)
        v = np.array([[0.8, -0.2, 0.35]])
        out = gru_cell_step(Tensor(np.ones((1, 4))), Tensor(v), cell)
        assert np.array_equal(out.data, 0.5 * v)

    def test_output_bounded(self):
        rng = np.random.RandomState(2)
        cell = GRUCellParams.create(3, 3, rng)
        for _ in range(50):
            x = Tensor(rng.standard_normal((1, 3)) * 3)
            h = Tensor(rng.uniform(-1, 1, (1, 3)))
            out = gru_cell_step(x, h, cell)
            assert np.all(np.abs(out.data) < 1.0)

    def test_shape_mismatch(self):
        cell = zero_cell(4, 3)
        with pytest.raises(ShapeError):
            gru_cell_step(Tensor(np.zeros((1, 5))), Tensor(np.zeros((1, 3))), cell)


class TestGRUForward:
    def test_t1_equals_single_step(self):
        rng = np.random.RandomState(3)
        cell = GRUCellParams.create(4, 3, rng)
        seq = Tensor(rng.standard_normal((1, 4)))
        via_forward = gru_forward(seq, cell)
        via_step = gru_cell_step(Tensor(seq.data[0:1]), Tensor(np.zeros((1, 3))), cell)
        assert np.allclose(via_forward.data, via_step.data)

    def test_zero_weights_zero_final(self):
        cell = zero_cell(4, 3)
        seq = Tensor(np.random.RandomState(4).standard_normal((6, 4)))
        assert np.array_equal(gru_forward(seq, cell).data, np.zeros((1, 3)))

    def test_sequence_last_row_matches_final(self):
        rng = np.random.RandomState(5)
        cell = GRUCellParams.create(4, 3, rng)
        seq = Tensor(rng.standard_normal((5, 4)))
        states = gru_forward(seq, cell, return_sequence=True)
        final = gru_forward(seq, cell)
        assert states.data.shape == (5, 3)
        assert np.allclose(states.data[-1], final.data[0])

    def test_empty_sequence(self):
        cell = zero_cell(4, 3)
        with pytest.raises(ShapeError):
            gru_forward(Tensor(np.zeros((0, 4))), cell)


class TestBiGRU:
    def test_palindrome_symmetry(self):
        rng = np.random.RandomState(6)
        cell = GRUCellParams.create(4, 3, rng)
        half = rng.standard_normal((3, 4))
        seq = Tensor(np.vstack([half, half[::-1]]))  # palindromic in time
        out = bigru_forward(seq, cell, cell).data
        fwd, bwd = out[:, :3], out[:, 3:]
        assert np.allclose(fwd, bwd[::-1])

    def test_t1_halves_equal_cells(self):
        rng = np.random.RandomState(7)
        p_f = GRUCellParams.create(4, 3, rng)
        p_b = GRUCellParams.create(4, 3, rng)
        seq = Tensor(rng.standard_normal((1, 4)))
        out = bigru_forward(seq, p_f, p_b).data
        h0 = Tensor(np.zeros((1, 3)))
        assert np.allclose(out[:, :3], gru_cell_step(Tensor(seq.data), h0, p_f).data)
        assert np.allclose(out[:, 3:], gru_cell_step(Tensor(seq.data), h0, p_b).data)

    def test_output_width(self):
        rng = np.random.RandomState(8)
        out = bigru_forward(Tensor(rng.standard_normal((5, 4))),
                            GRUCellParams.create(4, 6, rng),
                            GRUCellParams.create(4, 6, rng))
        assert out.data.shape == (5, 12)


class TestActivations:
    def test_leaky_relu_values(self):
        out = T.leaky_relu(Tensor(np.array([[2.0, -1.0, 0.0]])))
        assert np.allclose(out.data, [[2.0, -0.3, 0.0]])

    def test_relu_sigmoid_tanh(self):
        x = Tensor(np.array([[-1.0, 0.0, 2.0]]))
        assert np.allclose(T.relu(x).data, [[0.0, 0.0, 2.0]])
        assert np.allclose(T.sigmoid(Tensor(np.zeros((1, 1)))).data, 0.5)
        assert np.allclose(T.tanh(Tensor(np.zeros((1, 1)))).data, 0.0)

    def test_softmax_symmetry(self):
        assert np.allclose(T.softmax(Tensor(np.zeros((1, 2)))).data, [[0.5, 0.5]])

    def test_softmax_stable_for_huge_logits(self):
        out = T.softmax(Tensor(np.array([[1000.0, 1000.0]])))
        assert np.allclose(out.data, [[0.5, 0.5]])
        assert np.all(np.isfinite(out.data))

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.RandomState(9)
        out = T.softmax(Tensor(rng.standard_normal((20, 30)) * 10))
        assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-9)
        assert np.all((out.data > 0) & (out.data < 1))


class TestBatchNorm:
    def test_train_normalizes(self):
        rng = np.random.RandomState(10)
        bn = BatchNorm(5)
        x = Tensor(rng.standard_normal((64, 5)) * 4 + 3)
        out = bn(x, mode="train").data  # gamma=1, beta=0 at init
        assert np.all(np.abs(out.mean(axis=0)) < 1e-6)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 1e-4)

    def test_constant_column_zeros(self):
        bn = BatchNorm(3)
        x = Tensor(np.full((8, 3), 2.5))
        assert np.allclose(bn(x, mode="train").data, 0.0, atol=1e-6)

    def test_infer_deterministic(self):
        rng = np.random.RandomState(11)
        bn = BatchNorm(4)
        bn(Tensor(rng.standard_normal((32, 4))), mode="train")
        x = Tensor(rng.standard_normal((5, 4)))
        a = bn(x, mode="infer").data
        b = bn(x, mode="infer").data
        assert np.array_equal(a, b)

    def test_batch_of_one_rejected(self):
        bn = BatchNorm(3)
        with pytest.raises(ShapeError):
            bn(Tensor(np.zeros((1, 3))), mode="train")

    def test_running_stats_update(self):
        bn = BatchNorm(2, momentum=0.5)
        x = Tensor(np.array([[0.0, 10.0], [2.0, 14.0]]))
        bn(x, mode="train")
        assert np.allclose(bn.running_mean, [0.5, 6.0])  # 0.5*0 + 0.5*batch_mean


class TestDropout:
    def test_infer_identity(self):
        x = Tensor(np.ones((4, 4)))
        assert T.dropout(x, 0.5, "infer", np.random.RandomState(0)) is x

    def test_rate_zero_identity(self):
        x = Tensor(np.ones((4, 4)))
        assert T.dropout(x, 0.0, "train", np.random.RandomState(0)) is x

    def test_expectation_preserved(self):
        rng = np.random.RandomState(12)
        x = Tensor(np.ones((100, 100)))
        total = 0.0
        for _ in range(10):
            total += T.dropout(x, 0.5, "train", rng).data.mean()
        assert abs(total / 10 - 1.0) < 0.02  # 1e5 Bernoulli draws, 2% band


class TestCrossEntropy:
    def test_one_hot_correct(self):
        probs = Tensor(np.array([[1e-9, 1.0 - 2e-9, 1e-9]]))
        loss = T.cross_entropy(probs, np.array([1]))
        assert float(loss.data) == pytest.approx(0.0, abs=1e-8)

    def test_uniform_analytic(self):
        probs = Tensor(np.full((3, 4), 0.25))
        loss = T.cross_entropy(probs, np.array([0, 1, 3]))
        assert float(loss.data) == pytest.approx(np.log(4.0), abs=1e-12)

    def test_zero_probability_floored(self):
        probs = Tensor(np.array([[0.0, 1.0]]))
        loss = T.cross_entropy(probs, np.array([0]))
        assert float(loss.data) == pytest.approx(-np.log(1e-12))

    def test_invalid_target(self):
        with pytest.raises(ShapeError):
            T.cross_entropy(Tensor(np.full((1, 2), 0.5)), np.array([5]))


class TestGradients:
    def test_dense_strict(self):
        rng = np.random.RandomState(13)
        layer = Dense(6, 4, rng)
        x = Tensor(rng.standard_normal((5, 6)))
        err = max_relative_error(
            lambda: T.mean_all(T.mul(layer(x), layer(x))), layer.parameters(),
            delta=1e-6, tiny=1e-8,
        )
        assert err < 1e-5

    def test_gru_cell_strict(self):
        rng = np.random.RandomState(14)
        cell = GRUCellParams.create(3, 3, rng)
        x = Tensor(rng.standard_normal((2, 3)))
        h = Tensor(rng.uniform(-0.8, 0.8, (2, 3)))
        err = max_relative_error(
            lambda: T.mean_all(T.mul(gru_cell_step(x, h, cell), gru_cell_step(x, h, cell))),
            cell.parameters(), delta=1e-6, tiny=1e-8,
        )
        assert err < 1e-5

    def test_input_gradients_flow(self):
        rng = np.random.RandomState(15)
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        w = Parameter(rng.standard_normal((2, 4)), "w")
        loss = T.mean_all(T.linear(x, w))
        T.backward(loss)
        assert x.grad is not None and x.grad.shape == (3, 4)

    def test_concat_and_slice_backward(self):
        a = Parameter(np.ones((2, 3)), "a")
        b = Parameter(np.ones((2, 2)), "b")
        out = T.concat([a, b], axis=1)
        sliced = T.row_slice(out, 0, 1)
        T.backward(T.sum_all(sliced))
        assert np.array_equal(a.grad, [[1, 1, 1], [0, 0, 0]])
        assert np.array_equal(b.grad, [[1, 1], [0, 0]])

    def test_grad_accumulates_across_uses(self):
        w = Parameter(np.array([[2.0]]), "w")
        x = Tensor(np.array([[3.0]]))
        y = T.add(T.mul(w, x), T.mul(w, x))  # dL/dw = 2x
        T.backward(T.sum_all(y))
        assert w.grad[0, 0] == pytest.approx(6.0)

    def test_backward_requires_scalar(self):
        w = Parameter(np.ones((2, 2)), "w")
        with pytest.raises(GraphStateError):
            T.backward(T.mul(w, w))


class TestAdam:
    def test_quadratic_convergence(self):
        w = Parameter(np.array([5.0]), "w")
        state = AdamState(learning_rate=1e-2)
        for _ in range(2000):
            loss = T.mean_all(T.mul(w, w))
            T.backward(loss)
            adam_step([w], state)
        assert abs(w.data[0]) < 0.1

    def test_first_step_magnitude(self):
        # bias correction makes the first step ~lr regardless of gradient scale
        for scale in (1e-3, 1.0, 1e3):
            w = Parameter(np.array([scale]), "w")
            state = AdamState(learning_rate=0.1)
            T.backward(T.sum_all(T.mul(w, Tensor(np.array([1.0])))))
            before = w.data.copy()
            adam_step([w], state)
            assert abs(abs(before[0] - w.data[0]) - 0.1) < 1e-3

    def test_step_before_backward_rejected(self):
        w = Parameter(np.ones(3), "w")
        with pytest.raises(GraphStateError):
            adam_step([w], AdamState())

    def test_grads_cleared_after_step(self):
        w = Parameter(np.array([1.0]), "w")
        state = AdamState()
        T.backward(T.sum_all(T.mul(w, w)))
        adam_step([w], state)
        assert np.all(w.grad == 0.0) and not w.grad_ready


class TestInits:
    def test_orthogonal(self):
        q = orthogonal(np.random.RandomState(16), 8)
        assert np.allclose(q @ q.T, np.eye(8), atol=1e-10)

    def test_deterministic(self):
        a = orthogonal(np.random.RandomState(5), 6)
        b = orthogonal(np.random.RandomState(5), 6)
        assert np.array_equal(a, b)


class TestMaskedRun:
    def test_masked_steps_keep_state(self):
        rng = np.random.RandomState(17)
        layer = BiGRU(3, 2, rng)
        cell = GRUCellParams.create(3, 4, rng)
        from aucap.nn.layers import run_gru

        steps = [Tensor(rng.standard_normal((2, 3))) for _ in range(4)]
        masks = [np.ones((2, 1)) for _ in range(4)]
        masks[2][1, 0] = 0.0  # row 1 stops after step 1
        masks[3][1, 0] = 0.0
        full = run_gru(steps, cell, masks=masks)
        short = run_gru(steps[:2], cell)
        assert np.allclose(full.data[1], short.data[1])
        assert layer.hidden == 2
