import numpy as np
import pytest

from gfsa_lab import autodiff as ad


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def check(build, *shapes, rng, positive=False):
    values = [rng.standard_normal(s) + (3.0 if positive else 0.0) for s in shapes]

    def loss_value():
        tape = ad.Tape()
        ts = [tape.param(v, f"p{i}") for i, v in enumerate(values)]
        out = build(*ts)
        return tape, ad.total(out * weights)

    tape = ad.Tape()
    probe = build(*[tape.param(v, f"p{i}") for i, v in enumerate(values)])
    weights = rng.standard_normal(probe.shape)
    tape, loss = loss_value()
    grads = ad.backward(tape, loss)
    for i, v in enumerate(values):
        fd = numeric_grad(lambda: float(loss_value()[1].value), v)
        np.testing.assert_allclose(grads[f"p{i}"], fd, rtol=1e-6, atol=1e-8)


def test_add_broadcast(rng):
    check(lambda a, b: a + b, (3, 4), (4,), rng=rng)


def test_sub_broadcast(rng):
    check(lambda a, b: a - b, (2, 3, 4), (3, 1), rng=rng)


def test_mul_broadcast(rng):
    check(lambda a, b: a * b, (2, 1, 1), (2, 3, 3), rng=rng)


def test_batched_matmul(rng):
    check(lambda a, b: a @ b, (2, 3, 4), (4, 5), rng=rng)


def test_transpose_reshape(rng):
    check(lambda a: ad.reshape(ad.transpose(a, (1, 0, 2)), (3, 8)), (4, 3, 2), rng=rng)


def test_take_row(rng):
    check(lambda a: a[1], (3, 4), rng=rng)


def test_softmax(rng):
    check(ad.softmax, (2, 3, 5), rng=rng)


def test_rms_norm(rng):
    check(ad.rms_norm, (3, 6), (6,), rng=rng)


def test_gelu(rng):
    check(ad.gelu, (4, 5), rng=rng)


def test_embed_repeated_ids(rng):
    ids = np.array([[0, 2, 2], [1, 0, 2]])
    check(lambda t: ad.embed(t, ids), (3, 4), rng=rng)


def test_cross_entropy(rng):
    targets = np.array([[0, 3], [2, 2]])
    values = rng.standard_normal((2, 2, 4))
    tape = ad.Tape()
    loss = ad.cross_entropy(tape.param(values, "z"), targets)
    g = ad.backward(tape, loss)["z"]

    def f():
        flat = values.reshape(-1, 4)
        lse = np.log(np.exp(flat).sum(axis=1))
        return float(np.mean(lse - flat[np.arange(4), targets.reshape(-1)]))

    assert float(loss.value) == pytest.approx(f(), abs=1e-14)
    np.testing.assert_allclose(g, numeric_grad(f, values), atol=1e-9)


def test_unused_param_gets_zero(rng):
    tape = ad.Tape()
    a = tape.param(rng.standard_normal(3), "a")
    tape.param(rng.standard_normal(3), "unused")
    g = ad.backward(tape, ad.total(a * a))
    assert np.array_equal(g["unused"], np.zeros(3))


def test_reused_tensor_accumulates(rng):
    tape = ad.Tape()
    v = rng.standard_normal(4)
    a = tape.param(v, "a")
    g = ad.backward(tape, ad.total(a * a + a))
    np.testing.assert_allclose(g["a"], 2 * v + 1, atol=1e-15)


def test_each_record_visited_once(rng, monkeypatch):
    tape = ad.Tape()
    a = tape.param(rng.standard_normal((2, 2)), "a")
    loss = ad.total(ad.softmax(a @ a) * a)
    calls = []
    tape.records = [(out, ins, (lambda fn, i: lambda g: (calls.append(i), fn(g))[1])(fn, i))
                    for i, (out, ins, fn) in enumerate(tape.records)]
    ad.backward(tape, loss)
    assert calls == list(range(len(tape.records) - 1, -1, -1))


def test_nan_gradient_names_parameter():
    tape = ad.Tape()
    a = tape.param(np.array([1.0]), "weird")
    loss = ad.total(ad.mul(a, np.array([np.nan])))
    with pytest.raises(ad.GradientError, match="weird"):
        ad.backward(tape, loss)


def test_loss_must_be_scalar_on_tape(rng):
    tape = ad.Tape()
    a = tape.param(rng.standard_normal(3), "a")
    with pytest.raises(ValueError):
        ad.backward(tape, a * 2.0)
    with pytest.raises(ValueError):
        ad.backward(ad.Tape(), ad.total(a))


def test_ndarray_on_left_defers_to_tensor(rng):
    tape = ad.Tape()
    a = tape.param(rng.standard_normal((2, 2)), "a")
    out = np.eye(2) * a
    assert isinstance(out, ad.Tensor)


def test_seed_scales_gradients_linearly(rng):
    v = rng.standard_normal((3, 3))

    def grads(seed):
        tape = ad.Tape()
        a = tape.param(v, "a")
        return ad.backward(tape, ad.total(ad.softmax(a @ a)), seed=seed)["a"]

    assert np.array_equal(grads(2.0), 2.0 * grads(1.0))
