import numpy as np
import pytest

from uniprompt import autodiff as ad


def rel_err(got, want):
    scale = max(abs(got), abs(want), 1e-12)
    return abs(got - want) / scale


def check_gradient(graph, params, n_coords=10, seed=0, step=1e-5, inputs=None):
    """Reverse-mode vs central differences on random coordinates."""
    rng = np.random.default_rng(seed)
    grads = ad.grad_loss(graph, params, inputs)
    for name in params.names():
        size = params[name].values.size
        coords = rng.choice(size, size=min(n_coords, size), replace=False)
        for index in coords:
            fd = ad.finite_difference_gradient(graph, params, name, int(index), step, inputs)
            analytic = grads[name].flat[index]
            if abs(analytic) < 1e-3:
                assert abs(analytic - fd) < 1e-7, (name, index, analytic, fd)
            else:
                assert rel_err(analytic, fd) < 1e-4, (name, index, analytic, fd)


def make_params(seed=0, **shapes):
    rng = np.random.default_rng(seed)
    ps = ad.ParamSet()
    for name, shape in shapes.items():
        ps.add(name, ad.Tensor(rng.normal(size=shape)))
    return ps


def test_eval_loss_square():
    params = ad.ParamSet({"theta": ad.Tensor(3.0)})
    loss = ad.eval_loss(lambda p, _: p["theta"] * p["theta"], params)
    assert loss == 9.0


def test_eval_loss_constant():
    params = ad.ParamSet({"theta": ad.Tensor(7.0)})
    loss = ad.eval_loss(lambda p, _: ad.Tensor(5.0) + 0.0 * p["theta"], params)
    assert loss == 5.0


def test_grad_square():
    params = ad.ParamSet({"theta": ad.Tensor(3.0)})
    grads = ad.grad_loss(lambda p, _: p["theta"] * p["theta"], params)
    assert grads["theta"] == pytest.approx(6.0, abs=1e-12)


def test_grad_of_untouched_param_is_zero():
    params = ad.ParamSet({"used": ad.Tensor([1.0, 2.0]), "unused": ad.Tensor([4.0])})
    grads = ad.grad_loss(lambda p, _: ad.tensor_sum(p["used"] * p["used"]), params)
    assert np.array_equal(grads["unused"], np.zeros(1))
    assert np.allclose(grads["used"], [2.0, 4.0])


def test_frozen_tensors_get_no_gradient():
    frozen = ad.Tensor(np.ones(3))
    params = ad.ParamSet({"w": ad.Tensor(np.ones(3))})
    ad.grad_loss(lambda p, _: ad.tensor_sum(p["w"] * frozen), params)
    assert frozen.grad is None
    assert not frozen.requires_grad


def test_fd_quadratic_exact():
    params = ad.ParamSet({"theta": ad.Tensor(3.0)})
    fd = ad.finite_difference_gradient(
        lambda p, _: p["theta"] * p["theta"], params, "theta", 0, step=1e-5
    )
    assert abs(fd - 6.0) < 1e-8


def test_fd_linear_exact_any_step():
    params = ad.ParamSet({"theta": ad.Tensor(1.5)})
    for step in (1e-5, 1e-2, 1.0):
        fd = ad.finite_difference_gradient(
            lambda p, _: 2.0 * p["theta"], params, "theta", 0, step=step
        )
        assert fd == pytest.approx(2.0, abs=1e-9)


def test_fd_rejects_nonpositive_step():
    params = ad.ParamSet({"theta": ad.Tensor(1.0)})
    with pytest.raises(ValueError):
        ad.finite_difference_gradient(lambda p, _: p["theta"], params, "theta", 0, step=0.0)


def test_eval_loss_deterministic():
    params = make_params(3, w=(4, 4), b=(4,))

    def graph(p, _):
        h = ad.tanh(ad.Tensor(np.full((2, 4), 0.3)) @ p["w"] + p["b"])
        return ad.tensor_sum(ad.softmax(h) * h)

    first = ad.eval_loss(graph, params)
    second = ad.eval_loss(graph, params)
    assert first == second  # bit-identical


# one gradient check per primitive ----------------------------------------


def test_grad_add_sub_mul_div():
    params = make_params(1, a=(3, 4), b=(3, 4))
    check_gradient(
        lambda p, _: ad.tensor_sum((p["a"] + p["b"]) * p["a"] - p["a"] / (p["b"] * p["b"] + 3.0)),
        params,
    )


def test_grad_broadcast_bias():
    params = make_params(2, x=(2, 5, 4), b=(4,))
    check_gradient(lambda p, _: ad.tensor_sum(ad.tanh(p["x"] + p["b"])), params)


def test_grad_exp_log_pow():
    params = make_params(4, a=(6,))
    check_gradient(
        lambda p, _: ad.tensor_sum(ad.exp(p["a"]) + ad.log(p["a"] * p["a"] + 1.0) + p["a"] ** 3),
        params,
    )


def test_grad_matmul_2d_and_batched():
    params = make_params(5, a=(3, 4), b=(4, 2), c=(2, 3, 4))
    check_gradient(
        lambda p, _: ad.tensor_sum(p["a"] @ p["b"]) + ad.tensor_sum(p["c"] @ p["b"]),
        params,
    )


def test_grad_sum_mean_axes():
    params = make_params(6, x=(3, 4, 2))
    check_gradient(
        lambda p, _: ad.tensor_sum(ad.mean(p["x"], axis=1) * 2.0)
        + ad.mean(ad.tensor_sum(p["x"], axis=(0, 2))),
        params,
    )


def test_grad_relu_away_from_kink():
    params = ad.ParamSet({"x": ad.Tensor([-1.5, -0.3, 0.4, 2.0])})
    check_gradient(lambda p, _: ad.tensor_sum(ad.relu(p["x"]) * 3.0), params)


def test_relu_subgradient_zero_at_kink():
    params = ad.ParamSet({"x": ad.Tensor([0.0, 1.0])})
    grads = ad.grad_loss(lambda p, _: ad.tensor_sum(ad.relu(p["x"])), params)
    assert grads["x"][0] == 0.0
    assert grads["x"][1] == 1.0


def test_grad_softmax():
    params = make_params(7, x=(3, 5))
    weights = ad.Tensor(np.random.default_rng(0).normal(size=(3, 5)))
    check_gradient(
        lambda p, _: ad.tensor_sum(ad.softmax(p["x"]) * weights), params
    )


def test_grad_layer_norm():
    params = make_params(8, x=(4, 6))
    weights = ad.Tensor(np.random.default_rng(1).normal(size=(4, 6)))
    check_gradient(
        lambda p, _: ad.tensor_sum(ad.layer_norm(p["x"]) * weights), params
    )


def test_grad_l2_normalize():
    params = make_params(9, x=(3, 5))
    weights = ad.Tensor(np.random.default_rng(2).normal(size=(3, 5)))
    check_gradient(
        lambda p, _: ad.tensor_sum(ad.l2_normalize(p["x"]) * weights), params
    )


def test_l2_normalize_unit_norm():
    x = ad.l2_normalize(ad.Tensor(np.random.default_rng(0).normal(size=(10, 7))))
    norms = np.linalg.norm(x.values, axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-12)


def test_grad_cosine_similarity():
    params = make_params(10, a=(4,), b=(4,))
    check_gradient(lambda p, _: ad.cosine_similarity(p["a"], p["b"]), params)


def test_cosine_similarity_range():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=(2, 6))
        c = ad.cosine_similarity(ad.Tensor(a), ad.Tensor(b)).item()
        assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12


def test_grad_euclidean_distance():
    params = make_params(11, a=(2, 5), b=(2, 5))
    check_gradient(
        lambda p, _: ad.tensor_sum(ad.euclidean_distance(p["a"], p["b"])), params
    )


def test_euclidean_distance_zero_subgradient():
    params = ad.ParamSet({"a": ad.Tensor([1.0, 2.0])})
    grads = ad.grad_loss(
        lambda p, _: ad.euclidean_distance(p["a"], p["a"].detach()), params
    )
    assert np.array_equal(grads["a"], np.zeros(2))


def test_grad_logsumexp():
    params = make_params(12, x=(4, 6))
    check_gradient(lambda p, _: ad.tensor_sum(ad.logsumexp(p["x"])), params)


def test_logsumexp_matches_direct():
    x = np.random.default_rng(4).normal(size=(3, 5))
    got = ad.logsumexp(ad.Tensor(x)).values
    want = np.log(np.exp(x).sum(axis=-1))
    assert np.allclose(got, want, atol=1e-12)


def test_grad_concat_getitem_gather():
    params = make_params(13, a=(3, 4), b=(2, 4))

    def graph(p, _):
        joined = ad.concat([p["a"], p["b"]], axis=0)
        picked = ad.take_per_row(joined, [1, 3, 0, 2, 2])
        return ad.tensor_sum(picked * picked) + ad.tensor_sum(joined[1:3, ::2])

    check_gradient(graph, params)


def test_grad_reshape_transpose_tile_repeat():
    params = make_params(14, x=(3, 4))

    def graph(p, _):
        t = ad.transpose(ad.reshape(p["x"], (2, 6)), (1, 0))
        tiled = ad.tile_leading(p["x"], 3)
        reps = ad.repeat_rows(p["x"], 2)
        return ad.tensor_sum(ad.tanh(t)) + ad.tensor_sum(tiled * 0.5) + ad.tensor_sum(reps**2)

    check_gradient(graph, params)


def test_reused_node_accumulates():
    params = ad.ParamSet({"x": ad.Tensor(2.0)})

    def graph(p, _):
        y = p["x"] * p["x"]
        return y + y + p["x"]

    grads = ad.grad_loss(graph, params)
    assert grads["x"] == pytest.approx(9.0, abs=1e-12)


# errors -------------------------------------------------------------------


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ad.ShapeMismatchError) as info:
        ad.add(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((4, 5))))
    assert info.value.shapes == ((2, 3), (4, 5))
    assert "(2, 3)" in str(info.value) and "(4, 5)" in str(info.value)


def test_matmul_shape_mismatch():
    with pytest.raises(ad.ShapeMismatchError):
        ad.matmul(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((4, 2))))


def test_log_of_negative_names_primitive():
    with pytest.raises(ad.NonFiniteError) as info:
        ad.log(ad.Tensor([-1.0]))
    assert info.value.op == "log"


def test_exp_overflow_names_primitive():
    with pytest.raises(ad.NonFiniteError) as info:
        ad.exp(ad.Tensor([1e4]))
    assert info.value.op == "exp"


def test_div_by_zero_names_primitive():
    with pytest.raises(ad.NonFiniteError):
        ad.div(ad.Tensor([1.0]), ad.Tensor([0.0]))


def test_normalize_zero_vector_raises():
    with pytest.raises(ad.NonFiniteError):
        ad.l2_normalize(ad.Tensor(np.zeros(4)))


def test_eval_loss_rejects_nonscalar():
    params = ad.ParamSet({"x": ad.Tensor([1.0, 2.0])})
    with pytest.raises(ValueError):
        ad.eval_loss(lambda p, _: p["x"], params)


# ParamSet -----------------------------------------------------------------


def test_paramset_lexicographic_iteration():
    ps = ad.ParamSet()
    ps.add("zeta", ad.Tensor(1.0))
    ps.add("alpha", ad.Tensor(2.0))
    ps.add("mid", ad.Tensor(3.0))
    assert ps.names() == ["alpha", "mid", "zeta"]
    assert list(ps) == ["alpha", "mid", "zeta"]


def test_paramset_rejects_duplicates():
    ps = ad.ParamSet()
    ps.add("w", ad.Tensor(1.0))
    with pytest.raises(ValueError):
        ps.add("w", ad.Tensor(2.0))


def test_paramset_copy_is_deep():
    ps = ad.ParamSet({"w": ad.Tensor([1.0, 2.0])})
    clone = ps.copy()
    clone["w"].values[0] = 99.0
    assert ps["w"].values[0] == 1.0
