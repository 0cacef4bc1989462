import time
import numpy as np
import numpy.testing as npt
import pytest
from oracle import (loop_kernel_attention, loop_matmul, loop_softmax_attention)
from thincloud.autodiff import ops
from thincloud.autodiff.gradcheck import (COMPOSITE_TOLERANCE, GradCheckCase, check_case, weighted_sum)
from thincloud.autodiff.monitor import OpMonitor
from thincloud.autodiff.tape import bind
from thincloud.autodiff.tensor import (Param, Tensor)
from thincloud.common.exception import (ConfigError, DimensionError, NumericalError, UsageError)
from thincloud.model.attention import (AttentionConfig, AttentionWeights, attention_block,
                                       brute_force_linear_attention, kernel_attention,
                                       linear_attention, multi_head_linear_attention,
                                       project_qkv, softmax_attention, softmax_attention_weights,
                                       taylor_features)


def t64(value):
    return Tensor(value, dtype=np.float64)


def random_qkv(rng, N, D_k, D_v, M=None):
    M = M or N
    return rng.normal(size=(N, D_k)), rng.normal(size=(M, D_k)), rng.normal(size=(M, D_v))


def identity_weights(C:int) -> AttentionWeights:
    eye = lambda name: Param(name, np.eye(C), dtype=np.float64)
    return AttentionWeights([eye('wq')], [eye('wk')], [eye('wv')], eye('wo'))


# ------------------------------
# config and projections
# ------------------------------
def test_config():
    cfg = AttentionConfig()
    assert cfg.heads==4
    cfg = AttentionConfig.for_width(32, heads=4)
    assert (cfg.head_key_dim, cfg.head_value_dim, cfg.concat_dim)==(8, 8, 32)
    with pytest.raises(ConfigError):
        AttentionConfig(heads=0).validate()
    with pytest.raises(ConfigError):
        AttentionConfig(eps=0.0).validate()


def test_weights_init(rng):
    cfg = AttentionConfig(heads=2, model_dim=6, head_key_dim=3, head_value_dim=2)
    w = AttentionWeights.init(cfg, rng, 'a', np.float64)
    assert [p.name for p in w.params][:3]==['a.h0.wq', 'a.h0.wk', 'a.h0.wv']
    assert w.wo.shape==(4, 6) and w.wq[1].shape==(6, 3) and w.wv[0].shape==(6, 2)
    w.check(cfg)
    with pytest.raises(DimensionError):
        w.check(AttentionConfig(heads=2, model_dim=6, head_key_dim=3, head_value_dim=3))


def test_project_qkv(rng):
    X = rng.normal(size=(5, 3))
    Q, K, V = project_qkv(t64(X), identity_weights(3), 0)
    for t in (Q, K, V): npt.assert_array_equal(t.data, X)

    Q, K, V = project_qkv(t64(np.zeros((5, 3))), identity_weights(3), 0)
    for t in (Q, K, V): npt.assert_array_equal(t.data, 0.0)

    w = AttentionWeights.init(AttentionConfig(heads=1, model_dim=3, head_key_dim=2, head_value_dim=4),
                              rng, dtype=np.float64)
    Q, K, V = project_qkv(t64(X), w, 0)
    npt.assert_allclose(Q.data, loop_matmul(X, w.wq[0].value), rtol=1e-12, atol=1e-12)
    npt.assert_allclose(V.data, loop_matmul(X, w.wv[0].value), rtol=1e-12, atol=1e-12)
    with pytest.raises(UsageError):
        project_qkv(t64(X), w, 1)


# ------------------------------
# softmax reference
# ------------------------------
def test_softmax_attention_examples(rng):
    V = rng.normal(size=(1, 3))
    npt.assert_allclose(softmax_attention(rng.normal(size=(1, 2)), rng.normal(size=(1, 2)), V).data,
                        V, rtol=1e-15)

    K = np.tile(rng.normal(size=(1, 2)), (4, 1))
    V = rng.normal(size=(4, 3))
    out = softmax_attention(rng.normal(size=(5, 2)), K, V).data
    npt.assert_allclose(out, np.tile(V.mean(axis=0), (5, 1)), rtol=1e-12, atol=1e-15)

    Q, K, V = random_qkv(rng, 4, 4, 4)
    npt.assert_allclose(softmax_attention(Q, K, V).data, loop_softmax_attention(Q, K, V),
                        rtol=1e-12, atol=1e-12)


def test_softmax_attention_shapes(rng):
    with pytest.raises(DimensionError):
        softmax_attention(rng.normal(size=(3, 2)), rng.normal(size=(3, 4)), rng.normal(size=(3, 2)))
    with pytest.raises(DimensionError):
        softmax_attention(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), rng.normal(size=(4, 2)))


# ------------------------------
# kernel and linear attention
# ------------------------------
def test_kernel_attention(rng):
    phi, psi = np.abs(rng.normal(size=(6, 3))), np.abs(rng.normal(size=(7, 3)))
    V = rng.normal(size=(7, 2))
    npt.assert_allclose(kernel_attention(phi, psi, V).data, loop_kernel_attention(phi, psi, V),
                        rtol=1e-10, atol=1e-12)

    e1 = np.zeros((5, 3))
    e1[:, 0] = 1.0
    V = rng.normal(size=(5, 2))
    npt.assert_allclose(kernel_attention(e1, e1, V).data, np.tile(V.sum(axis=0)/5, (5, 1)), rtol=1e-12)

    V = rng.normal(size=(1, 4))
    npt.assert_allclose(kernel_attention(np.array([[0.3, 2.0]]), np.array([[1.5, 0.1]]), V).data, V, rtol=1e-12)


def test_kernel_attention_clamps_degenerate_denominator():
    with OpMonitor() as monitor:
        out = kernel_attention(np.zeros((3, 2)), np.ones((4, 2)), np.ones((4, 2)), eps=1e-6)
    assert monitor.clamp_events==3
    npt.assert_array_equal(out.data, 0.0)


def test_opposite_query_and_key_give_zero_row():
    Q, K, V = np.array([[1.0, 0.0]]), np.array([[-1.0, 0.0]]), np.array([[2.0]])
    for attend in (linear_attention, brute_force_linear_attention):
        out = attend(Q, K, V)
        assert np.all(np.isfinite(out.data))
        npt.assert_array_equal(out.data, 0.0)

    with np.errstate(invalid='ignore'):
        for attend in (linear_attention, brute_force_linear_attention):
            with pytest.raises(NumericalError):
                attend(np.array([[np.inf, 0.0]]), K, V)


def test_linear_attention_examples(rng):
    V = rng.normal(size=(1, 3))
    npt.assert_allclose(linear_attention(rng.normal(size=(1, 4)), rng.normal(size=(1, 4)), V).data,
                        V, rtol=1e-12)

    Q = np.zeros((3, 3))
    Q[:, 0] = rng.uniform(0.5, 2.0, 3)
    K = np.zeros((5, 3))
    K[:, 1:] = rng.normal(size=(5, 2))
    V = rng.normal(size=(5, 2))
    npt.assert_allclose(linear_attention(Q, K, V).data, np.tile(V.mean(axis=0), (3, 1)), rtol=1e-12)

    Q, K, V = random_qkv(rng, 8, 4, 4)
    npt.assert_allclose(linear_attention(Q, K, V).data, brute_force_linear_attention(Q, K, V).data,
                        rtol=1e-10, atol=1e-12)


def test_linear_attention_is_kernel_attention_on_taylor_features(rng):
    Q, K, V = random_qkv(rng, 12, 5, 3)
    phi = taylor_features(t64(Q))
    assert phi.shape==(12, 6)
    npt.assert_allclose(phi.data[:, 0], 1.0)
    npt.assert_allclose(np.linalg.norm(phi.data[:, 1:], axis=1), 1.0, rtol=1e-12)
    npt.assert_allclose(linear_attention(Q, K, V).data,
                        kernel_attention(phi, taylor_features(t64(K)), V).data, rtol=1e-10, atol=1e-12)


def test_brute_force_weights_bounded(rng):
    Q, K, V = random_qkv(rng, 6, 3, 2)
    q_hat = Q / np.linalg.norm(Q, axis=1, keepdims=True)
    k_hat = K / np.linalg.norm(K, axis=1, keepdims=True)
    sims = 1.0 + q_hat @ k_hat.T
    assert np.all(sims>=-1e-12) and np.all(sims<=2.0+1e-12)
    npt.assert_allclose(brute_force_linear_attention(Q, K, V).data, sims @ V / sims.sum(axis=1, keepdims=True),
                        rtol=1e-10, atol=1e-12)
    npt.assert_allclose(brute_force_linear_attention(Q[:1], K[:1], V[:1]).data, V[:1], rtol=1e-12)


def test_oracle_equivalence_on_random_instances():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    for _ in range(100):
        N, M = int(rng.integers(1, 65)), int(rng.integers(1, 65))
        D_k, D_v = int(rng.integers(2, 17)), int(rng.integers(1, 17))
        Q, K, V = random_qkv(rng, N, D_k, D_v, M)
        npt.assert_allclose(linear_attention(Q, K, V).data, brute_force_linear_attention(Q, K, V).data,
                            rtol=1e-10, atol=1e-12)
        if N<=16 and M<=16:
            npt.assert_allclose(softmax_attention(Q, K, V).data, loop_softmax_attention(Q, K, V),
                                rtol=1e-12, atol=1e-12)
    assert time.perf_counter()-start < 30


def test_oracle_equivalence_32_bit():
    rng = np.random.default_rng(1)
    for _ in range(10):
        Q, K, V = (a.astype(np.float32) for a in random_qkv(rng, 32, 8, 8))
        out = linear_attention(Tensor(Q), Tensor(K), Tensor(V))
        assert out.dtype==np.float32
        npt.assert_allclose(out.data, brute_force_linear_attention(Q, K, V).data, rtol=1e-5, atol=1e-5)


# ------------------------------
# properties over seeded instances
# ------------------------------
KERNELS = (softmax_attention, linear_attention)


def instances(seed, count=50):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        N, D = int(rng.integers(2, 12)), int(rng.integers(2, 6))
        yield rng, random_qkv(rng, N, D, int(rng.integers(1, 6)))


@pytest.mark.parametrize('kernel', KERNELS)
def test_permutation_equivariance(kernel):
    for rng, (Q, K, V) in instances(10):
        out = kernel(Q, K, V).data
        p = rng.permutation(Q.shape[0])
        npt.assert_allclose(kernel(Q[p], K, V).data, out[p], rtol=1e-12, atol=1e-12)
        p = rng.permutation(K.shape[0])
        npt.assert_allclose(kernel(Q, K[p], V[p]).data, out, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize('kernel', KERNELS)
def test_convex_hull(kernel):
    for _, (Q, K, V) in instances(11):
        with OpMonitor() as monitor:
            out = kernel(Q, K, V).data
        if monitor.clamp_events: continue
        assert np.all(out>=V.min(axis=0) - 1e-9)
        assert np.all(out<=V.max(axis=0) + 1e-9)


def test_softmax_weights_row_stochastic():
    for _, (Q, K, _) in instances(12):
        weights = softmax_attention_weights(Q, K).data
        assert weights.shape==(Q.shape[0], K.shape[0])
        npt.assert_allclose(weights.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_linear_attention_scale_invariance():
    for rng, (Q, K, V) in instances(13):
        out = linear_attention(Q, K, V).data
        Q2, K2 = Q.copy(), K.copy()
        Q2[rng.integers(Q.shape[0])] *= rng.uniform(0.1, 10.0)
        K2[rng.integers(K.shape[0])] *= rng.uniform(0.1, 10.0)
        npt.assert_allclose(linear_attention(Q2, K2, V).data, out, rtol=1e-9, atol=1e-9)


def test_softmax_attention_is_not_scale_invariant(rng):
    Q, K, V = random_qkv(rng, 6, 3, 2)
    out = softmax_attention(Q, K, V).data
    assert np.abs(softmax_attention(Q * 3.0, K, V).data - out).max() > 1e-6


def test_memory_footprint(rng):
    D = 8
    peaks = {}
    for N in (64, 256):
        Q, K, V = (Tensor(a, dtype=np.float64) for a in random_qkv(rng, N, D, D))
        with OpMonitor() as lin:
            linear_attention(Q, K, V)
        with OpMonitor() as soft:
            softmax_attention(Q, K, V)
        assert soft.peak_elements>=N*N
        assert lin.peak_elements<=4*(N*D + D*D)
        peaks[N] = lin.peak_elements
    assert peaks[256] / peaks[64] <= 4.0


# ------------------------------
# multi-head wrapper and block
# ------------------------------
def test_single_head_with_identity_output(rng):
    cfg = AttentionConfig(heads=1, model_dim=4, head_key_dim=3, head_value_dim=4)
    w = AttentionWeights.init(cfg, rng, dtype=np.float64)
    w.wo.value = np.eye(4)
    X = rng.normal(size=(7, 4))
    expected = linear_attention(X @ w.wq[0].value, X @ w.wk[0].value, X @ w.wv[0].value)
    npt.assert_allclose(multi_head_linear_attention(X, w, cfg).data, expected.data, rtol=1e-12, atol=1e-12)


def test_two_heads_manual(rng):
    cfg = AttentionConfig(heads=2, model_dim=4, head_key_dim=2, head_value_dim=2)
    w = AttentionWeights.init(cfg, rng, dtype=np.float64)
    X = rng.normal(size=(6, 4))
    heads = [linear_attention(X @ w.wq[i].value, X @ w.wk[i].value, X @ w.wv[i].value).data
             for i in range(2)]
    expected = np.concatenate(heads, axis=1) @ w.wo.value
    npt.assert_allclose(multi_head_linear_attention(X, w, cfg).data, expected, rtol=1e-12, atol=1e-12)
    with pytest.raises(DimensionError):
        multi_head_linear_attention(rng.normal(size=(6, 5)), w, cfg)


def test_multi_head_gradients(rng):
    cfg = AttentionConfig(heads=2, model_dim=4, head_key_dim=3, head_value_dim=2)
    w = AttentionWeights.init(cfg, rng, 'mh', np.float64)
    x = Param('x', rng.normal(size=(5, 4)), dtype=np.float64)
    R = rng.normal(size=(5, 4))
    case = GradCheckCase('mhla', [x] + w.params, lambda tape:
                         weighted_sum(multi_head_linear_attention(bind(x, tape), w, cfg, tape), R))
    assert check_case(case).max_rel_err < COMPOSITE_TOLERANCE


def test_attention_block_zero_weights_is_identity(rng):
    cfg = AttentionConfig.for_width(8, heads=4)
    w = AttentionWeights.init(cfg, rng, dtype=np.float64)
    for p in w.params: p.value = np.zeros(p.shape)
    x = rng.normal(size=(8, 3, 5))
    npt.assert_array_equal(attention_block(x, w, cfg).data, x)


def test_attention_block_single_position(rng):
    cfg = AttentionConfig.for_width(6, heads=2)
    w = AttentionWeights.init(cfg, rng, dtype=np.float64)
    x = rng.normal(size=(6, 1, 1))
    row = x.reshape(1, 6)
    projected = np.concatenate([row @ w.wv[i].value for i in range(2)], axis=1) @ w.wo.value
    npt.assert_allclose(attention_block(x, w, cfg).data, x + projected.reshape(6, 1, 1),
                        rtol=1e-12, atol=1e-12)


def test_attention_block_equivariance(rng):
    cfg = AttentionConfig.for_width(4, heads=2)
    w = AttentionWeights.init(cfg, rng, dtype=np.float64)
    x = rng.normal(size=(4, 3, 3))
    out = attention_block(x, w, cfg).data.reshape(4, 9)
    p = rng.permutation(9)
    permuted = attention_block(x.reshape(4, 9)[:, p].reshape(4, 3, 3), w, cfg).data.reshape(4, 9)
    npt.assert_allclose(permuted, out[:, p], rtol=1e-12, atol=1e-12)
    with pytest.raises(DimensionError):
        attention_block(rng.normal(size=(4, 9)), w, cfg)
