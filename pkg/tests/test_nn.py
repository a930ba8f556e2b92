import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftcanon.canon import canonize_array, canonize_grad_array
from shiftcanon.data import Dataset, SyntheticSpec, generate_sinusoid_task, split
from shiftcanon.errors import DegenerateBatch, NonFiniteLoss, ShapeMismatch
from shiftcanon.nn import (
    LayerSpec,
    Network,
    Pipeline,
    TrainConfig,
    adam_step,
    backward,
    blurpool,
    build_pipeline_nets,
    conv,
    dense,
    forward,
    global_avg_pool,
    guidance_angle,
    guidance_features,
    guidance_specs,
    loss_classifier,
    loss_guidance,
    maxpool,
    relu,
    train_classifier,
    train_joint,
)
from shiftcanon.signal import TimeSeries, circular_shift


def set_params(net, values):
    for (_, p), v in zip(net.named_params(), values):
        p[...] = v


def numeric_grads(net, x, d_out, h=1e-6):
    """Central differences of sum(forward(x) * d_out) w.r.t. every parameter."""
    out = {}
    for name, p in net.named_params():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            fp = np.sum(net(x) * d_out)
            p[i] = old - h
            fm = np.sum(net(x) * d_out)
            p[i] = old
            g[i] = (fp - fm) / (2 * h)
        out[name] = g
    return out


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)


class TestForward:
    def test_dense_identity(self):
        net = Network([dense(3)], (3,))
        set_params(net, [np.eye(3), np.zeros(3)])
        x = np.array([[1.0, -2.0, 0.5]])
        np.testing.assert_array_equal(forward(net, x)[0], x)

    def test_unit_conv_identity(self):
        net = Network([conv(1, 1)], (1, 10))
        set_params(net, [np.ones((1, 1, 1)), np.zeros(1)])
        x = np.random.default_rng(0).normal(size=(2, 1, 10))
        np.testing.assert_array_equal(net(x), x)

    def test_hand_computed_two_layer(self):
        net = Network([dense(3), relu(), dense(1)], (2,))
        set_params(net, [np.array([[1, 2], [-1, 1], [0.5, 0.5]]), np.array([0, 1, -0.5]),
                         np.array([[1, 1, 1]]), np.array([0.1])])
        # hidden pre-activations [4, 0, 1] -> relu [4, 0, 1] -> 5 + 0.1
        assert net(np.array([[2.0, 1.0]]))[0, 0] == pytest.approx(5.1)

    def test_shape_mismatch(self):
        net = Network([dense(2)], (3,))
        with pytest.raises(ShapeMismatch):
            net(np.zeros((1, 4)))

    def test_static_shapes(self):
        net = Network([conv(4, 5), relu(), maxpool(2), conv(3, 3, stride=2), global_avg_pool(), dense(2)], (2, 21))
        assert net.output_shape == (2,)
        assert net(np.zeros((5, 2, 21))).shape == (5, 2)

    def test_blurpool_classifier_shapes(self):
        net = Network([conv(4, 5), maxpool(2, stride=1, padding="circular"), blurpool(5, 2),
                       global_avg_pool(), dense(2)], (1, 31))
        assert net(np.zeros((3, 1, 31))).shape == (3, 2)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            LayerSpec("lstm")


class TestBackward:
    def test_dense_closed_form(self):
        net = Network([dense(2)], (3,))
        x = np.array([[1.0, 2.0, 3.0]])
        dy = np.array([[0.5, -1.0]])
        grads, dx = backward(net, forward(net, x)[1], dy)
        np.testing.assert_allclose(grads["0.W"], np.outer(dy[0], x[0]))
        np.testing.assert_allclose(dx, dy @ net.layers[0].params["W"])

    def test_relu_blocks_negative(self):
        net = Network([relu()], (3,))
        x = np.array([[-1.0, 2.0, -0.1]])
        _, dx = backward(net, forward(net, x)[1], np.ones((1, 3)))
        np.testing.assert_array_equal(dx, [[0, 1, 0]])

    @pytest.mark.parametrize("specs, shape", [
        ([conv(3, 5), relu(), maxpool(2), conv(2, 3), relu(), global_avg_pool(), dense(2)], (2, 16)),
        ([conv(3, 4, padding="circular"), relu(), maxpool(2, stride=1, padding="circular"),
          blurpool(5, 2), conv(2, 3, stride=2), global_avg_pool(), dense(3)], (1, 15)),
        ([conv(2, 3, padding="valid"), maxpool(3, stride=2), global_avg_pool(), dense(2)], (2, 13)),
        ([dense(4), relu(), dense(1)], (7,)),
    ])
    def test_finite_differences(self, specs, shape):
        rng = np.random.default_rng(1)
        net = Network(specs, shape, seed=3)
        x = rng.normal(size=(3, *shape))
        out, cache = forward(net, x)
        d_out = rng.normal(size=out.shape)
        grads, dx = backward(net, cache, d_out)
        num = numeric_grads(net, x, d_out)
        for name in grads:
            assert np.max(rel_err(grads[name], num[name])) <= 1e-4, name
        # input gradient
        h = 1e-7
        num_dx = np.zeros_like(x)
        for i in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            num_dx[i] = (np.sum(net(xp) * d_out) - np.sum(net(xm) * d_out)) / (2 * h)
        assert np.max(rel_err(dx, num_dx)) <= 1e-4

    def test_foreign_cache(self):
        net = Network([dense(2), relu()], (2,))
        with pytest.raises(ShapeMismatch):
            backward(net, [None], np.zeros((1, 2)))


class TestGuidance:
    def test_shift_invariant(self):
        fG = Network(guidance_specs(), (2 * 17,), seed=0)
        x = TimeSeries(np.random.default_rng(0).normal(size=(2, 32)))
        a = guidance_angle(fG, x)
        for t in range(-5, 40, 7):
            assert guidance_angle(fG, circular_shift(x, t)) == pytest.approx(a, abs=1e-7)

    def _constant_net(self, bias):
        fG = Network(guidance_specs(), (17,), seed=0)
        for _, p in fG.named_params():
            p[...] = 0
        fG.layers[-1].params["b"][...] = bias
        return fG

    def test_wraps(self):
        assert guidance_angle(self._constant_net(3 * np.pi / 2), np.ones((1, 32))) == pytest.approx(-np.pi / 2)

    def test_zero_weights_give_bias(self):
        assert guidance_angle(self._constant_net(0.25), np.ones((1, 32))) == pytest.approx(0.25)

    def test_features_shape(self):
        assert guidance_features(np.zeros((4, 3, 10))).shape == (4, 18)


class TestLosses:
    def test_confident_correct(self):
        loss, _ = loss_classifier(np.array([[1e6, 0.0], [0.0, 1e6]]), [0, 1])
        assert loss == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("k", [2, 3, 10])
    def test_uniform(self, k):
        loss, _ = loss_classifier(np.zeros((4, k)), [0] * 4)
        assert loss == pytest.approx(np.log(k))

    def test_hand_value(self):
        loss, _ = loss_classifier(np.array([[1.0, 0.0]]), [0])
        assert loss == pytest.approx(np.log(1 + np.exp(-1)))
        assert loss == pytest.approx(0.3133, abs=1e-4)

    def test_onehot_labels(self):
        a, _ = loss_classifier(np.array([[0.3, -0.2, 1.0]]), [2])
        b, _ = loss_classifier(np.array([[0.3, -0.2, 1.0]]), np.array([[0, 0, 1]]))
        assert a == b

    def test_gradient(self):
        rng = np.random.default_rng(0)
        logits, labels = rng.normal(size=(5, 3)), rng.integers(0, 3, 5)
        _, d = loss_classifier(logits, labels)
        h = 1e-7
        for i in np.ndindex(logits.shape):
            lp, lm = logits.copy(), logits.copy()
            lp[i] += h
            lm[i] -= h
            fd = (loss_classifier(lp, labels)[0] - loss_classifier(lm, labels)[0]) / (2 * h)
            assert d[i] == pytest.approx(fd, abs=1e-8)

    def test_non_finite(self):
        with pytest.raises(NonFiniteLoss):
            loss_classifier(np.array([[np.nan, 0.0]]), [0])

    def test_equal_angles(self):
        lg, g = loss_guidance(0.7, [0.2, 0.2, 0.2], "ours")
        assert lg == 0.7 and np.all(g == 0)

    def test_std_term(self):
        lg, _ = loss_guidance(1.0, [0.0, np.pi], "ours")
        assert lg == pytest.approx(1.0 + np.pi / 2)
        lg, _ = loss_guidance(1.0, [0.0, np.pi], "neg_var")
        assert lg == pytest.approx(1.0 - np.pi / 2)

    def test_ce_only(self):
        lg, g = loss_guidance(0.4, [0.0, 1.0, 2.0], "ce_only")
        assert lg == 0.4 and np.all(g == 0)

    def test_std_gradient(self):
        a = np.array([0.1, -0.7, 1.3, 0.4])
        _, g = loss_guidance(0.0, a, "ours")
        h = 1e-7
        for i in range(4):
            ap, am = a.copy(), a.copy()
            ap[i] += h
            am[i] -= h
            assert g[i] == pytest.approx((ap.std() - am.std()) / (2 * h), abs=1e-7)

    def test_single_sample_batch(self):
        with pytest.raises(DegenerateBatch):
            loss_guidance(0.0, [1.0], "ours")

    @settings(max_examples=100)
    @given(l_c=st.floats(0, 10), a=st.lists(st.floats(-10, 10), min_size=2, max_size=64))
    def test_variant_algebra(self, l_c, a):
        ours, _ = loss_guidance(l_c, a, "ours")
        neg, _ = loss_guidance(l_c, a, "neg_var")
        assert abs(ours + neg - 2 * l_c) <= 1e-12


class TestAdam:
    def _scalar_net(self, w):
        net = Network([dense(1)], (1,))
        set_params(net, [np.array([[w]]), np.array([0.0])])
        return net

    def test_first_step_moves_by_lr(self):
        net = self._scalar_net(1.0)
        # f(w) = w^2 -> grad 2
        adam_step(net, {"0.W": np.array([[2.0]]), "0.b": np.array([0.0])}, lr=0.1)
        assert net.layers[0].params["W"][0, 0] == pytest.approx(0.9, abs=1e-8)

    def test_zero_gradient(self):
        net = self._scalar_net(1.0)
        adam_step(net, {"0.W": np.zeros((1, 1)), "0.b": np.zeros(1)}, lr=0.1)
        assert net.layers[0].params["W"][0, 0] == 1.0 and net.adam_t == 1

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            adam_step(self._scalar_net(1.0), {"0.W": np.zeros(2), "0.b": np.zeros(1)})

    def test_deterministic(self):
        def run():
            net = Network([conv(2, 3), relu(), global_avg_pool(), dense(2)], (1, 12), seed=5)
            x = np.random.default_rng(0).normal(size=(4, 1, 12))
            for _ in range(5):
                out, cache = net.forward(x)
                _, d = loss_classifier(out, [0, 1, 0, 1])
                net.zero_grad()
                net.backward(cache, d)
                adam_step(net, lr=0.01)
            return [p.copy() for _, p in net.named_params()]
        for a, b in zip(run(), run()):
            np.testing.assert_array_equal(a, b)


def test_checkpoint_round_trip():
    net = Network([conv(2, 3), relu(), maxpool(2), global_avg_pool(), dense(2)], (1, 12), seed=2)
    clone = Network.from_dict(net.to_dict())
    x = np.random.default_rng(0).normal(size=(3, 1, 12))
    np.testing.assert_array_equal(net(x), clone(x))


def _kink_aware_diff(f, a, i, h):
    # shrink the step while a ReLU / max-pool kink sits inside the stencil
    f0 = f(a)
    while True:
        e = np.zeros_like(a)
        e[i] = h
        fp, fm = f(a + e), f(a - e)
        if abs((fp - f0) - (f0 - fm)) <= 1e-3 * max(abs(fp - f0), abs(f0 - fm)) or h < 1e-11:
            return (fp - fm) / (2 * h)
        h /= 10


@pytest.fixture(scope="module")
def small_task():
    ds = generate_sinusoid_task(SyntheticSpec(per_class=60, seed=3))
    return split(ds, (0.6, 0.2, 0.2), seed=0)


class TestChainGradient:
    @pytest.mark.parametrize("seed", range(5))
    def test_guidance_chain_matches_finite_differences(self, small_task, seed):
        tr, _, _ = small_task
        X, y = tr.X[:8], tr.y[:8]
        fG, fC = build_pipeline_nets("guided", 2, 1, 300, seed=seed)
        a = fG(guidance_features(X))[:, 0]

        def loss_of(angles):
            logits = fC(canonize_array(X, angles)[0])
            return loss_classifier(logits, y)[0]

        xt, dxt, _ = canonize_grad_array(X, a)
        logits, cache = fC.forward(xt)
        _, d_logits = loss_classifier(logits, y)
        d_xt = fC.backward(cache, d_logits)
        analytic = np.sum(d_xt * dxt, axis=(1, 2))
        for i in range(len(a)):
            fd = _kink_aware_diff(loss_of, a, i, 1e-6)
            assert abs(analytic[i] - fd) <= 1e-4 * max(abs(fd), 1e-6)


class TestTraining:
    cfg = dict(lr=3e-3, batch_size=32, max_epochs=6, lr_patience=3, stop_patience=10, seed=0)

    def test_fixed_phi_above_chance_and_invariant(self, small_task):
        tr, va, _ = small_task
        _, fC = build_pipeline_nets("fixed", 2, 1, 300, seed=0)
        res = train_joint(None, fC, tr, va, TrainConfig(variant="fixed_phi", **self.cfg))
        assert res.pipeline.mode == "fixed"
        assert len(res.history) == 6
        assert np.all(np.isfinite([h["val_loss"] for h in res.history]))

    def test_ours_reduces_angle_spread(self, small_task):
        tr, va, _ = small_task
        fG, fC = build_pipeline_nets("guided", 2, 1, 300, seed=0)
        res = train_joint(fG, fC, tr, va, TrainConfig(variant="ours", **self.cfg))
        assert res.batch_angle_std[-1] < res.batch_angle_std[0]

    def test_deterministic(self, small_task):
        tr, va, _ = small_task
        traces = []
        for _ in range(2):
            fG, fC = build_pipeline_nets("guided", 2, 1, 300, seed=4)
            res = train_joint(fG, fC, tr, va, TrainConfig(variant="ours", **{**self.cfg, "max_epochs": 2}))
            traces.append((res.history, res.batch_angle_std))
        assert traces[0] == traces[1]

    def test_baseline_with_augmentation(self, small_task):
        tr, va, _ = small_task
        _, fC = build_pipeline_nets("plain", 2, 1, 300, seed=0)
        res = train_classifier(fC, tr, va, TrainConfig(**{**self.cfg, "max_epochs": 2}), augment=True)
        assert res.pipeline.mode == "plain" and len(res.history) == 2

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(variant="bogus")
        with pytest.raises(ValueError):
            TrainConfig(lr=0)


@pytest.mark.parametrize("seed", range(3))
def test_end_to_end_shift_invariance(seed):
    rng = np.random.default_rng(seed)
    fG, fC = build_pipeline_nets("guided", 3, 2, 40, seed=seed)
    pipe = Pipeline(fC, fG, "guided")
    X = rng.normal(size=(10, 2, 40))
    ref = pipe.predict(X)
    for t in range(40):
        np.testing.assert_array_equal(pipe.predict(np.roll(X, t, axis=-1)), ref)


def test_pipeline_round_trip():
    fG, fC = build_pipeline_nets("guided", 2, 1, 20, seed=0)
    pipe = Pipeline(fC, fG, "guided")
    clone = Pipeline.from_dict(pipe.to_dict())
    X = np.random.default_rng(0).normal(size=(4, 1, 20))
    np.testing.assert_array_equal(pipe.logits(X), clone.logits(X))


def test_empty_dataset_rejected_by_pipeline_mode():
    with pytest.raises(ValueError):
        Pipeline(Network([dense(1)], (1,)), None, "guided")


def test_dataset_object_sanity():
    ds = Dataset(np.zeros((2, 1, 8)), [0, 1])
    assert ds.ids == ["s000000", "s000001"]
