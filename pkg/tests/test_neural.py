import json

import numpy as np
import pytest

from flowsim.neural import (
    AdamState,
    BatchNorm,
    Dense,
    Dropout,
    MlpModel,
    PRelu,
    Relu,
    adam_step,
    gradient_check,
    lbfgs_fit,
    lbfgs_minimize,
    load_model,
    log_softmax,
    loss_and_grad,
    model_from_dict,
    model_to_dict,
    save_model,
    softmax,
    solution1_model,
    solution2_model,
)


def rng():
    return np.random.default_rng(1234)


# -- forward -----------------------------------------------------------------

def test_softmax_symmetric_logits():
    out = softmax(np.array([[0.0, 0.0]]))
    assert out[0] == pytest.approx([0.5, 0.5])


def test_softmax_rows_sum_to_one():
    z = rng().normal(size=(50, 9)) * 100
    assert softmax(z).sum(axis=1) == pytest.approx(np.ones(50), abs=1e-12)


def test_log_softmax_stable_for_huge_logits():
    z = np.array([[1e4, -1e4, 0.0], [-1e4, 1e4, 5.0]])
    lp = log_softmax(z)
    assert np.isfinite(lp).all()
    assert np.exp(lp).sum(axis=1) == pytest.approx(np.ones(2))


def test_prelu_definition():
    layer = PRelu(0.25)
    out = layer.forward(np.array([[-2.0, 3.0]]), train=True)
    assert out[0] == pytest.approx([-0.5, 3.0])


def test_eval_mode_dropout_is_identity():
    layer = Dropout(0.5, rng())
    x = rng().normal(size=(10, 4))
    assert np.array_equal(layer.forward(x, train=False), x)


def test_train_mode_dropout_rate_and_scaling():
    p = 0.2
    layer = Dropout(p, rng())
    x = np.ones((2000, 100))
    out = layer.forward(x, train=True)
    dropped = (out == 0.0).mean()
    assert abs(dropped - p) < 0.02
    survivors = out[out != 0.0]
    assert survivors == pytest.approx(np.full(survivors.shape, 1.0 / (1.0 - p)))


def test_batchnorm_train_statistics():
    layer = BatchNorm(6)
    x = rng().normal(3.0, 2.5, size=(512, 6))
    out = layer.forward(x, train=True)
    assert out.mean(axis=0) == pytest.approx(np.zeros(6), abs=1e-6)
    assert out.var(axis=0) == pytest.approx(np.ones(6), abs=1e-4)


def test_batchnorm_eval_uses_running_stats():
    layer = BatchNorm(3)
    x = rng().normal(5.0, 1.0, size=(256, 3))
    for _ in range(200):
        layer.forward(x, train=True)
    out = layer.forward(x, train=False)
    assert out.mean(axis=0) == pytest.approx(np.zeros(3), abs=1e-2)


def test_forward_eval_deterministic():
    model = solution2_model(rng(), hidden=16, class_count=5)
    x = np.linspace(-2, 2, 7).reshape(-1, 1)
    model.eval()
    a = model.forward(x)
    b = model.forward(x)
    assert np.array_equal(a, b)


def test_dimension_mismatch_rejected():
    model = solution1_model(rng(), hidden=8, class_count=4)
    with pytest.raises(ValueError):
        model.forward(np.zeros((3, 2)))


# -- loss --------------------------------------------------------------------

def test_uniform_output_nll_is_log_25():
    model = MlpModel(layers=[Dense(1, 25)], head="log_softmax", class_count=25)
    # zero weights emit uniform logits
    value, _ = loss_and_grad(model, np.ones((8, 1)), np.arange(8) % 25, "nll",
                             normalized=True)
    assert value == pytest.approx(np.log(25.0), abs=1e-12)


def test_perfect_prediction_loss_goes_to_zero():
    model = MlpModel(layers=[Dense(1, 2)], head="softmax", class_count=2)
    model.layers[0].w[...] = np.array([[100.0, -100.0]])
    value, _ = loss_and_grad(model, np.ones((4, 1)), np.zeros(4, dtype=int),
                             "cross_entropy", normalized=True)
    assert value < 1e-12


def test_invalid_label_rejected():
    model = solution1_model(rng(), hidden=4, class_count=3)
    with pytest.raises(ValueError):
        loss_and_grad(model, np.zeros((2, 1)), np.array([0, 3]))


# -- gradients ---------------------------------------------------------------

def test_gradient_dense_softmax_ce():
    model = MlpModel(layers=[Dense(3, 5, rng())], head="softmax", class_count=5)
    x = rng().normal(size=(12, 3))
    y = rng().integers(0, 5, size=12)
    assert gradient_check(model, x, y, "cross_entropy") < 1e-6


def test_gradient_solution1_reduced():
    model = solution1_model(rng(), hidden=8, class_count=6)
    x = rng().normal(size=(16, 1))
    y = rng().integers(0, 6, size=16)
    assert gradient_check(model, x, y, "cross_entropy") < 1e-4


def test_gradient_solution2_reduced_with_batchnorm_dropout():
    model = solution2_model(rng(), hidden=8, class_count=5)
    x = rng().normal(size=(16, 1))
    y = rng().integers(0, 5, size=16)
    assert gradient_check(model, x, y, "nll") < 1e-4


def test_gradient_check_guards_size():
    model = solution2_model(rng(), hidden=512, class_count=25)
    with pytest.raises(ValueError):
        gradient_check(model, np.zeros((2, 1)), np.zeros(2, dtype=int))


# -- adam --------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    params = [np.array([1.0, -2.0])]
    state = AdamState.for_params(params)
    adam_step(params, [np.zeros(2)], state, lr=0.1)
    assert state.t == 1
    assert params[0] == pytest.approx([1.0, -2.0])


def test_adam_first_step_magnitude_is_lr():
    params = [np.array([0.0])]
    state = AdamState.for_params(params)
    adam_step(params, [np.array([3.7])], state, lr=0.01)
    # bias correction makes m_hat/sqrt(v_hat) = sign(g) on the first step
    assert params[0][0] == pytest.approx(-0.01, rel=1e-6)


def test_adam_deterministic():
    def run():
        params = [np.array([0.5, 1.5])]
        state = AdamState.for_params(params)
        for g in ([0.1, -0.2], [0.3, 0.4], [-0.5, 0.6]):
            adam_step(params, [np.array(g)], state, lr=0.05)
        return params[0].copy()
    assert np.array_equal(run(), run())


def test_adam_shape_mismatch_rejected():
    params = [np.zeros(3)]
    state = AdamState.for_params(params)
    with pytest.raises(ValueError):
        adam_step(params, [np.zeros(4)], state)


# -- lbfgs -------------------------------------------------------------------

def test_lbfgs_quadratic_reaches_analytic_minimum():
    A = np.array([[3.0, 0.5], [0.5, 1.0]])
    b = np.array([1.0, -2.0])
    x_star = np.linalg.solve(A, b)

    def fun(x):
        return 0.5 * x @ A @ x - b @ x, A @ x - b

    x, report = lbfgs_minimize(fun, np.zeros(2), grad_tol=1e-12)
    assert report.iterations <= 20
    assert np.abs(x - x_star).max() < 1e-8
    assert report.stop_reason == "gradient"


def test_lbfgs_zero_iterations_at_optimum():
    def fun(x):
        return float(x @ x), 2.0 * x

    x, report = lbfgs_minimize(fun, np.zeros(3))
    assert report.iterations == 0
    assert report.stop_reason == "gradient"


def test_lbfgs_nonfinite_loss_aborts():
    def fun(x):
        return float("nan"), np.zeros(1)

    with pytest.raises(FloatingPointError):
        lbfgs_minimize(fun, np.zeros(1))


def test_lbfgs_separable_logistic_reaches_full_accuracy():
    r = rng()
    x = np.concatenate([r.normal(-3.0, 0.3, 60), r.normal(3.0, 0.3, 60)]).reshape(-1, 1)
    y = np.array([0] * 60 + [1] * 60)
    model = MlpModel(layers=[Dense(1, 2, r)], head="softmax", class_count=2)
    model, report = lbfgs_fit(model, x, y, normalized=True, max_iter=100)
    pred = model.probabilities(x, normalized=True).argmax(axis=1)
    assert (pred == y).mean() == 1.0


def test_lbfgs_objective_monotone_on_model_fit():
    r = rng()
    x = r.normal(size=(40, 1))
    y = (x[:, 0] > 0).astype(int)
    model = solution1_model(r, hidden=8, class_count=2)
    losses = []

    from flowsim import neural

    orig = neural.loss_and_grad

    model2, report = lbfgs_fit(model, x, y, normalized=True, max_iter=30)
    assert report.final_loss <= np.log(2.0) + 1e-9  # no worse than chance start


# -- serialization -----------------------------------------------------------

def test_model_round_trip_bit_exact(tmp_path):
    model = solution2_model(rng(), hidden=8, class_count=5,
                            class_names=[f"r{i}" for i in range(5)])
    model.normalization = (12.5, 3.25)
    # give batchnorm nontrivial buffers
    x = rng().normal(size=(32, 1))
    model.train()
    model.forward(x, normalized=True)
    model.eval()
    path = tmp_path / "model.json"
    save_model(model, path)
    again = load_model(path, rng())
    for a, b in zip(model.parameters(), again.parameters()):
        assert np.array_equal(a, b)
    for la, lb in zip(model.layers, again.layers):
        if isinstance(la, BatchNorm):
            assert np.array_equal(la.running_mean, lb.running_mean)
            assert np.array_equal(la.running_var, lb.running_var)
    assert again.normalization == model.normalization
    assert again.class_names == model.class_names
    x_eval = np.linspace(-1, 1, 5).reshape(-1, 1)
    assert np.array_equal(model.forward(x_eval), again.forward(x_eval))


def test_normalization_single_code_path():
    model = solution1_model(rng(), hidden=8, class_count=4)
    model.normalization = (10.0, 2.0)
    x = np.array([[14.0], [6.0]])
    direct = model.forward(x)
    bypass = model.forward((x - 10.0) / 2.0, normalized=True)
    assert np.array_equal(direct, bypass)


def test_training_reproducible_from_named_stream():
    from flowsim._rng import stream

    def build_and_train():
        r = stream(99, "ml_init")
        x = np.linspace(-1, 1, 64).reshape(-1, 1)
        y = (x[:, 0] > 0).astype(int)
        model = solution1_model(r, hidden=16, class_count=2)
        model, _ = lbfgs_fit(model, x, y, normalized=True, max_iter=50)
        return model

    m1, m2 = build_and_train(), build_and_train()
    for a, b in zip(m1.parameters(), m2.parameters()):
        assert np.array_equal(a, b)
