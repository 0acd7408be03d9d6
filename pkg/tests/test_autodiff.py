import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mvclust import autodiff as ad
from mvclust.autodiff import Tensor
from mvclust.errors import DomainError, ShapeError

from _oracles import central_diff, naive_sq_dists, rel_err


def grad_of(fn, x):
    t = Tensor(x, requires_grad=True)
    fn(t).backward()
    return t.grad


def check_grad(fn, x, tol=1e-5):
    analytic = grad_of(fn, x)
    numeric = central_diff(lambda v: fn(Tensor(v)).item(), x)
    assert rel_err(analytic, numeric) < tol


# -- elementwise -----------------------------------------------------------

def test_relu_values():
    assert ad.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]


def test_exp_zero():
    assert ad.exp(Tensor([0.0])).data.tolist() == [1.0]


def test_square_derivative_at_three():
    x = Tensor(3.0, requires_grad=True)
    ad.square(x).backward()
    assert x.grad == pytest.approx(6.0)


def test_log_of_exp_has_unit_gradient():
    x = Tensor([0.3, -1.2], requires_grad=True)
    ad.log(ad.exp(x)).sum().backward()
    np.testing.assert_allclose(x.grad, 1.0, rtol=1e-12)


def test_log_strict_raises_on_nonpositive():
    with pytest.raises(DomainError):
        ad.log(Tensor([1.0, 0.0]), strict=True)


def test_sqrt_strict_raises_on_negative():
    with pytest.raises(DomainError):
        ad.sqrt(Tensor([-1.0]), strict=True)


def test_log_clamps_by_default_and_flags():
    out = ad.log(Tensor([0.0, 1.0]))
    assert out.clamped
    assert out.data[0] == pytest.approx(np.log(1e-12))
    assert not ad.log(Tensor([2.0])).clamped


def test_incompatible_shapes_raise():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_scalar_broadcast_gradient():
    a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    b = Tensor(2.0, requires_grad=True)
    (a * b).sum().backward()
    assert b.grad == pytest.approx(15.0)
    np.testing.assert_allclose(a.grad, 2.0)


def test_elementwise_dispatch():
    a, b = Tensor([1.0, 4.0]), Tensor([2.0, 2.0])
    assert ad.elementwise("div", a, b).data.tolist() == [0.5, 2.0]
    assert ad.elementwise("sqrt", b * b).data.tolist() == [2.0, 2.0]
    assert ad.elementwise("scalar_mul", a, 3.0).data.tolist() == [3.0, 12.0]
    with pytest.raises(ValueError):
        ad.elementwise("tan", a)


UNARY_CASES = [
    ("exp", lambda t: ad.exp(t).sum(), (4,)),
    ("log", lambda t: ad.log(t).sum(), (4,)),
    ("sqrt", lambda t: ad.sqrt(t).sum(), (4,)),
    ("square", lambda t: ad.square(t).sum(), (4,)),
    ("relu", lambda t: (ad.relu(t) * Tensor([1.0, 2.0, 3.0, 4.0])).sum(), (4,)),
    ("negate", lambda t: (ad.negate(t) * t).sum(), (4,)),
    ("div", lambda t: (Tensor([1.0, 2.0, 3.0, 4.0]) / t).sum(), (4,)),
    ("row_softmax", lambda t: (ad.row_softmax(t) * Tensor(np.arange(6.0).reshape(2, 3))).sum(), (2, 3)),
    ("logsumexp", lambda t: ad.logsumexp(t, axis=1).sum(), (2, 3)),
    ("pairwise", lambda t: (ad.pairwise_sq_dists(t) * Tensor(np.arange(9.0).reshape(3, 3))).sum(), (3, 2)),
    ("mean", lambda t: t.mean(axis=0).square().sum(), (3, 2)),
    ("transpose", lambda t: (t.T @ Tensor(np.ones((3, 1)))).square().sum(), (3, 2)),
    ("getitem", lambda t: t[[0, 0, 2]].square().sum(), (3, 2)),
    ("take", lambda t: ad.take(t, [0, 5, 5, 1]).square().sum(), (3, 2)),
    ("stack", lambda t: ad.stack([t, t * t]).sum(), (3, 2)),
    ("concat", lambda t: ad.concat([t, t * t], axis=1).square().sum(), (3, 2)),
]


@pytest.mark.parametrize("name,fn,shape", UNARY_CASES, ids=[c[0] for c in UNARY_CASES])
def test_gradients_match_central_differences(name, fn, shape):
    rng = np.random.default_rng(7)
    for _ in range(100 // len(UNARY_CASES) + 1):
        x = rng.uniform(0.5, 2.0, size=shape)  # positive keeps log/sqrt/div smooth
        if name == "relu":
            x = rng.choice([-1, 1], size=shape) * rng.uniform(0.1, 2.0, size=shape)
        check_grad(fn, x)


# -- matmul ------------------------------------------------------------------

def test_matmul_identity_and_small_product():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((Tensor(np.eye(2)) @ m).data, m.data)
    assert (Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_gradient_finite_difference():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    check_grad(lambda t: (t @ Tensor(b)).sum(), a, tol=1e-6)
    check_grad(lambda t: (Tensor(a) @ t).sum(), b, tol=1e-6)


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 1))))


# -- softmax ------------------------------------------------------------------

def test_row_softmax_examples():
    np.testing.assert_allclose(ad.row_softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    big = ad.row_softmax(Tensor([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(big))
    assert big[0, 0] == pytest.approx(1.0) and big[0, 1] < 1e-300 + 1e-12


def test_row_softmax_rejects_non_finite():
    with pytest.raises(DomainError):
        ad.row_softmax(Tensor([[np.nan, 0.0]]))


def test_row_softmax_jvp_matches_finite_differences():
    rng = np.random.default_rng(3)
    x, v = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    w = rng.normal(size=(4, 5))
    f = lambda arr: float((ad.row_softmax(Tensor(arr)).data * w).sum())
    t = Tensor(x, requires_grad=True)
    (ad.row_softmax(t) * Tensor(w)).sum().backward()
    jvp = float((t.grad * v).sum())
    eps = 1e-6
    fd = (f(x + eps * v) - f(x - eps * v)) / (2 * eps)
    assert abs(jvp - fd) / max(abs(fd), 1e-8) < 1e-6


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_row_softmax_rows_are_distributions(x):
    out = ad.row_softmax(Tensor(x)).data
    assert np.all(out > 0)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


# -- reductions -----------------------------------------------------------------

def test_reduction_values():
    x = Tensor([1.0, 2.0, 3.0])
    assert x.sum().item() == 6.0
    assert x.mean().item() == 2.0
    assert x.max().item() == 3.0


def test_min_tie_routes_to_lowest_index():
    x = Tensor([0.3, 0.1, 0.1], requires_grad=True)
    m = x.min()
    assert m.item() == 0.1
    m.backward()
    assert x.grad.tolist() == [0.0, 1.0, 0.0]


def test_max_along_axis_ties():
    x = Tensor([[2.0, 2.0], [1.0, 3.0]], requires_grad=True)
    x.max(axis=1).sum().backward()
    assert x.grad.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_mean_gradient_is_one_over_n():
    x = np.random.default_rng(1).normal(size=7)
    g = grad_of(lambda t: t.mean(), x)
    np.testing.assert_allclose(g, 1 / 7)
    np.testing.assert_allclose(g, central_diff(lambda v: v.mean(), x), rtol=1e-6)


def test_invalid_axis_is_shape_error():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 2))).sum(axis=2)


# -- pairwise distances -----------------------------------------------------------

def test_pairwise_examples():
    d = ad.pairwise_sq_dists(Tensor([[0.0, 0.0], [3.0, 4.0]])).data
    assert d[0, 1] == pytest.approx(25.0) and d[1, 0] == pytest.approx(25.0)
    assert ad.pairwise_sq_dists(Tensor([[1.0, 2.0]])).data.tolist() == [[0.0]]


def test_pairwise_matches_naive_loop():
    h = np.random.default_rng(5).normal(size=(8, 3))
    np.testing.assert_allclose(ad.pairwise_sq_dists(Tensor(h)).data, naive_sq_dists(h), atol=1e-10)


@given(arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_pairwise_symmetric_nonnegative(h):
    d = ad.pairwise_sq_dists(Tensor(h)).data
    np.testing.assert_array_equal(d, d.T)
    assert np.all(np.diag(d) == 0) and np.all(d >= 0)


# -- backward / detach / clipping ---------------------------------------------------

def test_backward_of_sum_gives_ones():
    x = Tensor(np.zeros((2, 3)), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_repeated_backward_accumulates():
    x = Tensor([1.0, 2.0], requires_grad=True)
    ad.square(x).sum().backward()
    ad.square(x).sum().backward()
    np.testing.assert_allclose(x.grad, [4.0, 8.0])
    x.zero_grad()
    ad.square(x).sum().backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


def test_shared_subexpression_visited_once():
    x = Tensor(2.0, requires_grad=True)
    y = x * x
    z = y + y * y  # dz/dx = 2x + 4x^3 = 36
    z.backward()
    assert x.grad == pytest.approx(36.0)


def test_deep_chain_does_not_recurse():
    x = Tensor(1.0, requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0
    y.backward()
    assert x.grad == 1.0


def test_detach_stops_gradient():
    x = Tensor([1.5, -2.0], requires_grad=True)
    d = ad.detach(x)
    np.testing.assert_array_equal(d.data, x.data)
    assert d.is_leaf and not d.requires_grad
    (d * x).sum().backward()
    np.testing.assert_array_equal(x.grad, x.data)


def test_min_weight_gate_gradient():
    # g(w) = detach(min w) * L(w): only L's dependence on w is differentiated
    rng = np.random.default_rng(11)
    logits = rng.normal(size=3)
    target = rng.normal(size=3)

    def L(w):
        return ad.square(w - Tensor(target)).sum()

    t = Tensor(logits, requires_grad=True)
    w = ad.row_softmax(t.reshape(1, 3)).reshape(3)
    gate = ad.detach(w).min().item()
    ad.scalar_mul(L(w), gate).backward()

    def frozen(v):
        wv = ad.row_softmax(Tensor(v).reshape(1, 3)).reshape(3)
        return gate * L(wv).item()

    assert rel_err(t.grad, central_diff(frozen, logits)) < 1e-6

    def ungated(v):
        wv = ad.row_softmax(Tensor(v).reshape(1, 3)).reshape(3)
        return wv.data.min() * L(wv).item()

    assert rel_err(t.grad, central_diff(ungated, logits)) > 1e-3


def test_clip_global_norm_examples():
    g = [np.array([6.0, 8.0])]
    assert ad.clip_global_norm(g, 5.0) == pytest.approx(10.0)
    np.testing.assert_allclose(g[0], [3.0, 4.0])
    h = [np.array([3.0]), np.array([0.0])]
    assert ad.clip_global_norm(h, 5.0) == pytest.approx(3.0)
    assert h[0].tolist() == [3.0]


def test_clip_accepts_tensors_and_rejects_bad_norm():
    t = Tensor([1.0], requires_grad=True)
    t.grad = np.array([10.0])
    ad.clip_global_norm([t, Tensor(0.0)], 1.0)
    assert t.grad.tolist() == [1.0]
    with pytest.raises(ValueError):
        ad.clip_global_norm([], 0.0)


@given(st.lists(arrays(np.float64, st.integers(1, 5), elements=st.floats(-1e4, 1e4)), min_size=1, max_size=4),
       st.floats(1e-3, 100))
def test_clipped_norm_bounded(grads, max_norm):
    ad.clip_global_norm(grads, max_norm)
    total = np.sqrt(sum(float((g * g).sum()) for g in grads))
    assert total <= max_norm + 1e-12 * max(1.0, max_norm)


def test_graph_evaluation_is_deterministic():
    x = np.random.default_rng(2).normal(size=(5, 4))
    outs = [ad.row_softmax(ad.pairwise_sq_dists(Tensor(x))).data for _ in range(2)]
    assert outs[0].tobytes() == outs[1].tobytes()


def test_numeric_grad_helper():
    g = ad.numeric_grad(lambda v: float((v ** 3).sum()), np.array([1.0, 2.0]))
    np.testing.assert_allclose(g, [3.0, 12.0], rtol=1e-8)
