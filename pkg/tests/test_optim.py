"""Optimizer state transitions: exact S-arithmetic replication, the
epsilon-overflow mechanism, guard behavior, and loss scaling."""

import numpy as np
import pytest

from stable16 import binary16 as b16
from stable16 import nn, optim
from stable16 import tensor as T
from stable16.tensor import Kind

F16 = Kind.F16
F64 = Kind.F64


def mk(vals, kind=F16):
    return T.make(np.asarray(vals), kind)


def bits16(x):
    return int(np.float16(x).view(np.uint16))


class TestHyperParams:
    def test_defaults(self):
        hp = optim.HyperParams()
        assert hp.eta == 1e-3 and hp.epsilon == 1e-7
        assert hp.floor == hp.epsilon

    def test_guard_floor_overrides(self):
        hp = optim.HyperParams(guard=True, guard_floor=1e-4)
        assert hp.floor == 1e-4

    @pytest.mark.parametrize("kw", [
        {"eta": 0.0}, {"eta": -1.0}, {"beta1": 0.0}, {"beta1": 1.0},
        {"beta2": 1.5}, {"epsilon": 0.0}, {"loss_scale": 0.5},
        {"guard_floor": 0.0},
    ])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValueError):
            optim.HyperParams(**kw)


class TestInitState:
    def test_shapes_and_zeros(self):
        params = [mk(np.ones((3, 2))), mk(np.ones(2))]
        st = optim.init_state(params, "adam")
        assert st.t == 0
        assert all(np.all(v.data == 0) for v in st.v)
        assert all(m.shape == p.shape for m, p in zip(st.m, params))
        st2 = optim.init_state(params, "rmsprop")
        assert st2.m is None and st2.v is not None
        st3 = optim.init_state(params, "sgd")
        assert st3.m is None and st3.v is None

    def test_unknown_algo(self):
        with pytest.raises(ValueError):
            optim.init_state([mk([1.0])], "adagrad")


class TestBetaPower:
    def test_f64_matches_sequential(self):
        acc = 0.9
        for t in range(1, 12):
            assert optim.beta_power(F64, 0.9, t) == acc
            acc *= 0.9

    def test_f16_matches_sequential(self):
        b = np.float16(0.999)
        acc = b
        for t in range(1, 40):
            assert optim.beta_power(F16, 0.999, t) == float(acc)
            acc = np.float16(acc * b)

    def test_call_order_independent(self):
        late = optim.beta_power(F16, 0.87, 9)
        early = optim.beta_power(F16, 0.87, 3)
        acc = np.float16(0.87)
        for _ in range(2):
            acc = np.float16(acc * np.float16(0.87))
        assert early == float(acc)
        for _ in range(6):
            acc = np.float16(acc * np.float16(0.87))
        assert late == float(acc)

    def test_rejects_t_below_one(self):
        with pytest.raises(ValueError):
            optim.beta_power(F16, 0.9, 0)


def softfloat_sgd(w, g, eta):
    u = b16.mul(g, b16.from_real(eta))
    return b16.sub(w, u)


class TestSgd:
    def test_matches_softfloat_scalars(self):
        rng = np.random.default_rng(11)
        raw = rng.integers(0, 2**16, size=200, dtype=np.uint16)
        w = T.from_bits(raw[:100])
        g = T.from_bits(raw[100:])
        hp = optim.HyperParams(eta=0.37)
        (out,) = optim.sgd_step([w], [g], hp)
        for i in range(100):
            want = softfloat_sgd(int(raw[i]), int(raw[100 + i]), 0.37)
            got = int(out.data[i].view(np.uint16))
            if b16.is_nan(want):
                assert b16.is_nan(got)
            else:
                assert got == want, f"elem {i}"

    def test_step_increments_t_only(self):
        params = [mk([1.0, 2.0])]
        st = optim.init_state(params, "sgd")
        new_p, new_st = optim.step("sgd", params, [mk([0.5, 0.5])], st,
                                   optim.HyperParams(eta=1.0))
        assert new_st.t == 1 and new_st.m is None and new_st.v is None
        np.testing.assert_array_equal(new_p[0].data,
                                      np.array([0.5, 1.5], dtype=np.float16))


def manual_rmsprop(w, g, v, hp, dtype):
    beta = dtype(hp.beta2)
    om = dtype(dtype(1) - beta)
    with np.errstate(all="ignore"):
        g2 = g * g
        v1 = v * beta + g2 * om
        if hp.guard:
            den = np.sqrt(np.maximum(v1, dtype(hp.floor)))
        else:
            den = np.sqrt(v1) + dtype(hp.epsilon)
        q = g / den
        u = q * dtype(hp.eta)
        return w - u, v1


class TestRmsprop:
    def test_matches_manual_f16(self):
        rng = np.random.default_rng(5)
        w = mk(rng.normal(size=50))
        g = mk(rng.normal(size=50) * 0.1)
        v = mk(np.abs(rng.normal(size=50)) * 0.01)
        hp = optim.HyperParams(eta=0.01, beta2=0.9, epsilon=1e-3)
        (w1,), st1 = optim.rmsprop_step([w], [g], optim.OptimState(None, [v], 3), hp)
        want_w, want_v = manual_rmsprop(w.data, g.data, v.data, hp, np.float16)
        np.testing.assert_array_equal(w1.data, want_w)
        np.testing.assert_array_equal(st1.v[0].data, want_v)
        assert st1.t == 4

    def test_beta_read_from_beta2(self):
        # same state, two beta2 values -> different v decay
        v = mk([1.0])
        g = mk([0.0])
        for beta2, want in [(0.5, 0.5), (0.25, 0.25)]:
            hp = optim.HyperParams(eta=1.0, beta2=beta2, epsilon=1e-3)
            _, st1 = optim.rmsprop_step([mk([1.0])], [g],
                                        optim.OptimState(None, [v], 0), hp)
            assert st1.v[0].data[0] == np.float16(want)

    def test_guard_floors_flushed_v(self):
        # v stays 0 (g^2 flushes); guarded denominator is sqrt(floor)
        hp = optim.HyperParams(eta=0.01, beta2=0.9, epsilon=1e-4,
                               guard=True, guard_floor=1e-4)
        g = mk([1e-4])
        (w1,), st1 = optim.rmsprop_step([mk([1.0])], [g],
                                        optim.OptimState(None, [mk([0.0])], 0), hp)
        assert st1.v[0].data[0] == 0
        den = np.sqrt(np.float16(1e-4))
        want = np.float16(1.0) - np.float16(np.float16(g.data[0] / den) * np.float16(0.01))
        assert w1.data[0] == want

    def test_guard_propagates_nan_v(self):
        hp = optim.HyperParams(eta=0.01, guard=True)
        (w1,), st1 = optim.rmsprop_step(
            [mk([1.0])], [mk([0.0])],
            optim.OptimState(None, [T.from_bits([0x7E00])], 0), hp)
        assert np.isnan(st1.v[0].data[0])
        assert np.isnan(w1.data[0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            optim.rmsprop_step([mk([1.0])], [mk([1.0, 2.0])],
                               optim.OptimState(None, [mk([0.0])], 0),
                               optim.HyperParams())


def manual_adam(w, g, m, v, t, hp, dtype):
    with np.errstate(all="ignore"):
        b1, b2 = dtype(hp.beta1), dtype(hp.beta2)
        om1, om2 = dtype(dtype(1) - b1), dtype(dtype(1) - b2)
        m1 = m * b1 + g * om1
        v1 = v * b2 + (g * g) * om2
        bc1 = dtype(1) - dtype(optim.beta_power(Kind.F16 if dtype is np.float16 else Kind.F64, float(b1), t + 1))
        bc2 = dtype(1) - dtype(optim.beta_power(Kind.F16 if dtype is np.float16 else Kind.F64, float(b2), t + 1))
        m_hat = m1 / bc1
        v_hat = v1 / bc2
        if hp.guard:
            den = np.sqrt(np.maximum(v_hat, dtype(hp.floor)))
        else:
            den = np.sqrt(v_hat) + dtype(hp.epsilon)
        u = (m_hat / den) * dtype(hp.eta)
        return w - u, m1, v1


class TestAdam:
    def test_matches_manual_f16(self):
        rng = np.random.default_rng(17)
        w = mk(rng.normal(size=64))
        g = mk(rng.normal(size=64) * 0.05)
        m = mk(rng.normal(size=64) * 0.01)
        v = mk(np.abs(rng.normal(size=64)) * 0.001)
        hp = optim.HyperParams(eta=0.004, beta1=0.9, beta2=0.999, epsilon=1e-4)
        (w1,), st1 = optim.adam_step([w], [g], optim.OptimState([m], [v], 6), hp)
        want_w, want_m, want_v = manual_adam(w.data, g.data, m.data, v.data, 6, hp, np.float16)
        np.testing.assert_array_equal(w1.data, want_w)
        np.testing.assert_array_equal(st1.m[0].data, want_m)
        np.testing.assert_array_equal(st1.v[0].data, want_v)
        assert st1.t == 7

    def test_quotient_divides_before_eta(self):
        # m_hat/den overflows to inf; eta*(m_hat) first would stay finite.
        w, g = mk([1.0]), mk([1e-4])
        st = optim.OptimState([mk([0.01])], [mk([0.0])], 0)
        hp = optim.HyperParams(eta=0.01, epsilon=1e-7)
        (w1,), _ = optim.adam_step([w], [g], st, hp)
        assert np.isinf(w1.data[0]) and w1.data[0] < 0
        # the masked order: (m_hat*eta)/den is finite for the same state
        m_hat = np.float16(0.09)
        eps = np.float16(1e-7)
        assert np.isfinite(np.float16(m_hat * np.float16(0.01)) / eps)


class TestEpsilonOverflowMechanism:
    """Constructed states: the unguarded fp16 step turns an eps-dominated
    denominator into a quotient overflow (inf in one step), and applying
    that infinite update to an already-overflowed weight makes NaN."""

    HP = optim.HyperParams(eta=0.01, beta1=0.9, beta2=0.999, epsilon=1e-7)

    def crafted(self, w0):
        params = [mk([w0])]
        st = optim.OptimState([mk([0.01])], [mk([0.0])], 0)
        grads = [mk([1e-4])]
        return params, grads, st

    def test_inf_in_one_step(self):
        params, grads, st = self.crafted(1.0)
        moments, _ = optim._adam_moments(grads, st, self.HP, F16)
        m1, v1, m_hat, v_hat = moments[0]
        # mechanism, piece by piece: second moment flushed, denominator == eps
        assert v1[0] == 0 and v_hat[0] == 0
        with np.errstate(all="ignore"):
            den = np.sqrt(v_hat) + np.float16(self.HP.epsilon)
            q = m_hat / den
        assert bits16(den[0]) == bits16(np.float16(1e-7))
        assert np.isinf(q[0]) and q[0] > 0  # quotient overflow
        (w1,), st1 = optim.adam_step(params, grads, st, self.HP)
        assert np.isinf(w1.data[0]) and w1.data[0] < 0
        assert np.isfinite(st1.m[0].data[0])  # only the weight overflows

    def test_nan_in_two_steps(self):
        # step 1 overflows a weight; step 2 (same mechanism, weight now inf
        # with the update's own sign) yields inf - inf = NaN
        params, grads, st = self.crafted(np.inf)
        (w2,), _ = optim.adam_step(params, grads, st, self.HP)
        assert np.isnan(w2.data[0])

    def test_guard_prevents_both(self):
        hp = optim.HyperParams(eta=0.01, beta1=0.9, beta2=0.999,
                               epsilon=1e-7, guard=True, guard_floor=1e-4)
        for w0 in (1.0, np.inf):
            params, grads, st = self.crafted(w0)
            (w1,), st1 = optim.adam_step(params, grads, st, hp)
            assert not np.isnan(w1.data[0])
            if np.isfinite(w0):
                assert np.isfinite(w1.data[0])
        # bounded kick: |u| <= eta * |m_hat| / sqrt(floor)
        params, grads, st = self.crafted(1.0)
        moments, _ = optim._adam_moments(grads, st, hp, F16)
        m_hat = float(moments[0][2][0])
        (w1,), _ = optim.adam_step(params, grads, st, hp)
        u = 1.0 - float(w1.data[0])
        assert abs(u) <= 0.01 * abs(m_hat) / np.sqrt(1e-4) * (1 + 1e-2)


class TestGuardSafeBranch:
    def test_matches_unguarded_within_eps_factor_f64(self):
        # when v_hat >= floor the guarded update differs from the standard one
        # only by the denominator's +eps: ratio within (1, 1 + eps/sqrt(floor)]
        rng = np.random.default_rng(23)
        floor = 1e-4
        hp_u = optim.HyperParams(eta=0.3, epsilon=1e-7)
        hp_g = optim.HyperParams(eta=0.3, epsilon=1e-7, guard=True,
                                 guard_floor=floor)
        v_hat = floor + np.abs(rng.normal(size=500))
        m_hat = rng.normal(size=500)
        den_u = np.sqrt(v_hat) + hp_u.epsilon
        den_g = np.sqrt(np.maximum(v_hat, floor))
        ratio = den_u / den_g
        assert np.all(ratio >= 1.0)
        assert np.all(ratio <= 1.0 + hp_u.epsilon / np.sqrt(floor))
        u_u = (m_hat / den_u) * hp_u.eta
        u_g = (m_hat / den_g) * hp_g.eta
        nz = m_hat != 0
        assert np.all(np.abs(u_g[nz]) >= np.abs(u_u[nz]))


class TestStatePurity:
    def test_inputs_unchanged(self):
        rng = np.random.default_rng(3)
        params = [mk(rng.normal(size=(4, 3))), mk(rng.normal(size=3))]
        grads = [mk(rng.normal(size=(4, 3))), mk(rng.normal(size=3))]
        for algo in optim.ALGOS:
            st = optim.init_state(params, algo)
            before_p = [p.data.copy() for p in params]
            before_s = [] if st.v is None else [v.data.copy() for v in st.v]
            optim.step(algo, params, grads, st, optim.HyperParams())
            for p, b in zip(params, before_p):
                np.testing.assert_array_equal(p.data, b)
            if st.v is not None:
                for v, b in zip(st.v, before_s):
                    np.testing.assert_array_equal(v.data, b)

    def test_deterministic(self):
        params = [mk([[0.5, -0.25]]), mk([0.125])]
        grads = [mk([[0.1, 0.2]]), mk([0.3])]
        for algo in optim.ALGOS:
            st = optim.init_state(params, algo)
            hp = optim.HyperParams(eta=0.05, epsilon=1e-4)
            a1, s1 = optim.step(algo, params, grads, st, hp)
            a2, s2 = optim.step(algo, params, grads, st, hp)
            for x, y in zip(a1, a2):
                np.testing.assert_array_equal(x.data, y.data)
            assert s1.t == s2.t


class TestScaledBackward:
    def _setup(self, kind, n_in=4, m=32, seed=0):
        rng = np.random.default_rng(seed)
        x = T.make(rng.normal(size=(n_in, m)), kind)
        labels = (np.arange(m) % 3).astype(np.int64)
        model = nn.init_mlp([n_in, 8, 3], kind, seed=9)
        return model, x, labels

    def test_scale_one_is_identity(self):
        model, x, labels = self._setup(F16)
        la, ga = nn.loss_and_backward(model, x, labels)
        lb, gb = optim.scaled_backward(
            1.0, lambda s: nn.loss_and_backward(model, x, labels, loss_scale=s))
        assert la == lb
        for a, b in zip(ga.params(), gb.params()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_f64_scaled_matches_unscaled(self):
        model, x, labels = self._setup(F64)
        _, ga = nn.loss_and_backward(model, x, labels)
        _, gb = optim.scaled_backward(
            1024.0, lambda s: nn.loss_and_backward(model, x, labels, loss_scale=s))
        for a, b in zip(ga.params(), gb.params()):
            denom = np.maximum(np.abs(a.data), 1e-30)
            assert np.max(np.abs(a.data - b.data) / denom) < 1e-12

    def test_f16_rescues_flushed_gradients(self):
        # batch of 1024 inputs at 2^-23; per-example weight-gradient products
        # are 2^-34 unscaled (flush to zero) but 2^-24 when scaled by 1024,
        # and they accumulate to exactly 2^-14 before unscaling back to 2^-24.
        m = 1024
        x = T.from_bits(np.full((1, m), 0x0002, dtype=np.uint16))  # 2^-23
        labels = np.zeros(m, dtype=np.int64)
        model = nn.MlpModel((1, 2), [T.zeros((1, 2), F16)],
                            [T.zeros((2,), F16)], F16)
        _, plain = nn.loss_and_backward(model, x, labels)
        assert np.all(plain.weights[0].data == 0)
        _, rescued = optim.scaled_backward(
            1024.0, lambda s: nn.loss_and_backward(model, x, labels, loss_scale=s))
        gw = rescued.weights[0].data
        assert gw[0, 0] == -np.float16(2.0**-24)
        assert gw[0, 1] == +np.float16(2.0**-24)

    def test_rejects_scale_below_one(self):
        with pytest.raises(ValueError):
            optim.scaled_backward(0.5, lambda s: (0.0, None))
