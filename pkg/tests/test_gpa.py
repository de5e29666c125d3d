"""Propagation attention: hand cases, loop-oracle equivalence, properties."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from gptrans import tensor as T
from gptrans.gpa import (
    GPAParams,
    PathToggles,
    attention_bias,
    edge_to_node,
    gpa_forward,
    node_to_edge,
    node_to_node,
    scaled_dot_attention,
)
from gptrans.gradcheck import gradcheck

from oracles import gpa_loop

E = math.e


def make_params(rng, d1=8, d2=6, n_head=2, dtype=np.float32, scale=0.5):
    def w(*shape):
        return T.Tensor(rng.normal(scale=scale, size=shape), requires_grad=True, dtype=dtype)

    return GPAParams(
        w_q=w(d1, d1),
        w_k=w(d1, d1),
        w_v=w(d1, d1),
        w_o=w(d1, d1),
        w_reduce=w(d2, n_head),
        w_expand=w(n_head, d2),
        fuse_w=w(d2, d1),
        fuse_b=w(d1),
        n_head=n_head,
    )


def params_from_arrays(arrays, n_head, dtype=np.float32):
    return GPAParams(
        **{k: T.Tensor(v, requires_grad=True, dtype=dtype) for k, v in arrays.items()},
        n_head=n_head,
    )


# --- attention_bias -----------------------------------------------------------


def test_bias_zero_matrix_gives_zero():
    x_edge = T.Tensor(np.random.default_rng(0).normal(size=(1, 3, 3, 4)))
    phi = attention_bias(x_edge, T.Tensor(np.zeros((4, 2))))
    assert np.all(phi.data == 0.0)
    assert phi.shape == (1, 2, 3, 3)


def test_bias_identity_projection():
    x_edge = T.Tensor(np.random.default_rng(1).normal(size=(1, 3, 3, 1)))
    phi = attention_bias(x_edge, T.Tensor([[1.0]]))
    np.testing.assert_allclose(phi.data[0, 0], x_edge.data[0, :, :, 0], rtol=1e-6)


def test_bias_matches_triple_loop():
    rng = np.random.default_rng(2)
    x_edge = rng.normal(size=(1, 3, 3, 4))
    w = rng.normal(size=(4, 2))
    phi = attention_bias(T.Tensor(x_edge, dtype=np.float64), T.Tensor(w, dtype=np.float64)).data
    for h in range(2):
        for i in range(3):
            for j in range(3):
                expected = sum(x_edge[0, i, j, c] * w[c, h] for c in range(4))
                assert abs(phi[0, h, i, j] - expected) < 1e-12


# --- node_to_node --------------------------------------------------------------


def test_attention_two_token_hand_case():
    # d_head = 1: Q=[1,0], K=[1,0], V=[2,4] -> A=[[1,0],[0,0]]
    q = T.Tensor(np.array([1.0, 0.0]).reshape(1, 1, 2, 1))
    k = T.Tensor(np.array([1.0, 0.0]).reshape(1, 1, 2, 1))
    v = T.Tensor(np.array([2.0, 4.0]).reshape(1, 1, 2, 1))
    mixed, a = scaled_dot_attention(q, k, v, None, None)
    np.testing.assert_allclose(a.data[0, 0], [[1.0, 0.0], [0.0, 0.0]], atol=1e-7)
    expected = [(2 * E + 4) / (E + 1), 3.0]
    np.testing.assert_allclose(mixed.data[0, 0, :, 0], expected, rtol=1e-6)


def test_single_real_node_attends_uniformly_with_zero_qk():
    rng = np.random.default_rng(3)
    params = make_params(rng, d1=4, d2=3, n_head=1)
    params.w_q.data[...] = 0.0
    params.w_k.data[...] = 0.0
    x_node = T.Tensor(rng.normal(size=(1, 2, 4)))
    phi = T.Tensor(np.zeros((1, 1, 2, 2)))
    mask = np.array([[True, True]])
    x1, a = node_to_node(x_node, phi, params, mask)
    v = x_node.data @ params.w_v.data
    np.testing.assert_allclose(x1.data[0, 0], v[0].mean(axis=0), rtol=1e-5)
    np.testing.assert_allclose(x1.data[0, 1], v[0].mean(axis=0), rtol=1e-5)


def test_uniform_attention_returns_value_mean():
    rng = np.random.default_rng(4)
    params = make_params(rng, d1=6, d2=3, n_head=2)
    params.w_q.data[...] = 0.0
    params.w_k.data[...] = 0.0
    n = 5
    x_node = T.Tensor(rng.normal(size=(1, n, 6)))
    x1, _ = node_to_node(x_node, None, params, np.ones((1, n), dtype=bool))
    v = x_node.data @ params.w_v.data
    np.testing.assert_allclose(x1.data[0], np.broadcast_to(v[0].mean(axis=0), (n, 6)), rtol=1e-4)


def test_masked_keys_get_neg_surrogate_and_zero_weight():
    rng = np.random.default_rng(5)
    params = make_params(rng, d1=4, d2=3, n_head=1)
    x_node = T.Tensor(rng.normal(size=(1, 3, 4)))
    mask = np.array([[True, True, False]])
    x1, a = node_to_node(x_node, None, params, mask)
    assert np.all(a.data[:, :, :, 2] < -1e8)
    s = T.softmax(a, axis=-1, mask=mask[:, None, None, :]).data
    np.testing.assert_array_equal(s[:, :, :, 2], 0.0)
    np.testing.assert_allclose(s.sum(axis=-1), np.ones((1, 1, 3)), atol=1e-6)


# --- node_to_edge ---------------------------------------------------------------


def test_node_to_edge_zero_projection():
    a = T.Tensor(np.random.default_rng(6).normal(size=(1, 2, 3, 3)))
    out = node_to_edge(a, T.Tensor(np.zeros((2, 5))), None)
    assert np.all(out.data == 0.0)


def test_node_to_edge_uniform_case():
    a = T.Tensor(np.zeros((1, 1, 2, 2)))
    w = T.Tensor(np.ones((1, 4)))
    out = node_to_edge(a, w, np.ones((1, 2), dtype=bool))
    np.testing.assert_allclose(out.data, np.full((1, 2, 2, 4), 0.5), atol=1e-7)


def test_node_to_edge_matches_loop():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(1, 2, 3, 3))
    w = rng.normal(size=(2, 4))
    out = node_to_edge(T.Tensor(a, dtype=np.float64), T.Tensor(w, dtype=np.float64), None).data
    for i in range(3):
        for j in range(3):
            for c in range(4):
                s = 0.0
                for h in range(2):
                    row = a[0, h, i]
                    e = np.exp(row - row.max())
                    soft = e / e.sum()
                    s += (a[0, h, i, j] + soft[j]) * w[h, c]
                assert abs(out[0, i, j, c] - s) < 1e-12


# --- edge_to_node ---------------------------------------------------------------


def test_edge_to_node_constant_rows():
    # constant c over keys -> softmax uniform -> pooled value c
    c = 1.7
    x = T.Tensor(np.full((1, 3, 3, 4), c))
    fuse_w = T.Tensor(np.random.default_rng(8).normal(size=(4, 5)))
    fuse_b = T.Tensor(np.random.default_rng(9).normal(size=5))
    out = edge_to_node(x, fuse_w, fuse_b, np.ones((1, 3), dtype=bool))
    expected = np.full(4, c) @ fuse_w.data + fuse_b.data
    np.testing.assert_allclose(out.data[0, 0], expected, rtol=1e-5)
    # masking one key leaves the uniform pool of a constant row unchanged
    out2 = edge_to_node(x, fuse_w, fuse_b, np.array([[True, True, False]]))
    np.testing.assert_allclose(out2.data[0, 0], expected, rtol=1e-5)


def test_edge_to_node_zero_input_returns_bias():
    x = T.Tensor(np.zeros((1, 2, 2, 3)))
    fuse_w = T.Tensor(np.random.default_rng(10).normal(size=(3, 4)))
    fuse_b = T.Tensor(np.array([1.0, 2.0, 3.0, 4.0]))
    out = edge_to_node(x, fuse_w, fuse_b, None)
    np.testing.assert_allclose(out.data, np.broadcast_to(fuse_b.data, (1, 2, 4)), atol=1e-6)


def test_edge_to_node_hand_softmax_pool():
    # per-channel key row [0, ln 3] -> weighted sum 0.75*ln(3)
    x = np.zeros((1, 1, 2, 1))
    x[0, 0, 1, 0] = math.log(3.0)
    fuse_w = T.Tensor(np.eye(1))
    fuse_b = T.Tensor(np.zeros(1))
    out = edge_to_node(T.Tensor(x), fuse_w, fuse_b, None)
    np.testing.assert_allclose(out.data[0, 0, 0], 0.75 * math.log(3.0), rtol=1e-6)


# --- gpa_forward ----------------------------------------------------------------


def rand_instance(rng, n_nodes, d1=8, d2=6, n_head=2, dtype=np.float32):
    t = n_nodes + 1
    x_node = T.Tensor(rng.normal(size=(1, t, d1)), dtype=dtype)
    x_edge = T.Tensor(rng.normal(size=(1, t, t, d2)), dtype=dtype)
    params = make_params(rng, d1=d1, d2=d2, n_head=n_head, dtype=dtype)
    mask = np.ones((1, t), dtype=bool)
    return x_node, x_edge, params, mask


def test_gpa_forward_matches_scalar_oracle_100_instances():
    rng = np.random.default_rng(11)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 5))
        x_node, x_edge, params, mask = rand_instance(rng, n)
        out = gpa_forward(x_node, x_edge, params, mask)
        node_ref, edge_ref, attn_ref = gpa_loop(
            x_node.data[0].astype(np.float64),
            x_edge.data[0].astype(np.float64),
            params.w_q.data.astype(np.float64),
            params.w_k.data.astype(np.float64),
            params.w_v.data.astype(np.float64),
            params.w_o.data.astype(np.float64),
            params.w_reduce.data.astype(np.float64),
            params.w_expand.data.astype(np.float64),
            params.fuse_w.data.astype(np.float64),
            params.fuse_b.data.astype(np.float64),
            n_head=params.n_head,
        )
        worst = max(worst, np.max(np.abs(out.node_update.data[0] - node_ref)))
        worst = max(worst, np.max(np.abs(out.edge_update.data[0] - edge_ref)))
        worst = max(worst, np.max(np.abs(out.attention.data[0] - attn_ref)))
    assert worst < 1e-5, f"max abs deviation {worst}"


def test_gpa_both_toggles_off_is_biased_attention():
    rng = np.random.default_rng(12)
    x_node, x_edge, params, mask = rand_instance(rng, 3)
    out = gpa_forward(x_node, x_edge, params, mask, PathToggles(False, False))
    x1, a = node_to_node(x_node, attention_bias(x_edge, params.w_reduce), params, mask)
    np.testing.assert_array_equal(out.node_update.data, T.matmul(x1, params.w_o).data)
    assert np.all(out.edge_update.data == 0.0)


def test_gpa_zero_wo_zeroes_node_update():
    rng = np.random.default_rng(13)
    x_node, x_edge, params, mask = rand_instance(rng, 3)
    params.w_o.data[...] = 0.0
    out = gpa_forward(x_node, x_edge, params, mask)
    assert np.all(out.node_update.data == 0.0)


def test_toggle_consistency_bitwise():
    rng = np.random.default_rng(14)
    x_node, x_edge, params, mask = rand_instance(rng, 3)
    off = gpa_forward(x_node, x_edge, params, mask, PathToggles(False, False))
    params.w_expand.data[...] = 0.0
    zeroed = gpa_forward(x_node, x_edge, params, mask, PathToggles(True, False))
    np.testing.assert_array_equal(off.edge_update.data, zeroed.edge_update.data)
    np.testing.assert_array_equal(off.node_update.data, zeroed.node_update.data)
    # edge_to_node without node_to_edge degenerates to both-off
    both = gpa_forward(x_node, x_edge, params, mask, PathToggles(False, True))
    np.testing.assert_array_equal(off.node_update.data, both.node_update.data)


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_gpa_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    x_node, x_edge, params, mask = rand_instance(rng, n)
    perm = [0] + [1 + p for p in rng.permutation(n)]
    xp_node = T.Tensor(x_node.data[:, perm])
    xp_edge = T.Tensor(x_edge.data[:, perm][:, :, perm])
    out = gpa_forward(x_node, x_edge, params, mask)
    outp = gpa_forward(xp_node, xp_edge, params, mask)
    np.testing.assert_allclose(outp.node_update.data[0], out.node_update.data[0][perm], atol=1e-5)
    np.testing.assert_allclose(outp.edge_update.data[0], out.edge_update.data[0][np.ix_(perm, perm)], atol=1e-5)


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_gpa_mask_inertness(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    x_node, x_edge, params, mask = rand_instance(rng, n)
    out = gpa_forward(x_node, x_edge, params, mask)

    t = n + 1
    pad = 2
    xb_node = np.zeros((1, t + pad, x_node.shape[2]), dtype=np.float32)
    xb_node[:, :t] = x_node.data
    xb_edge = np.zeros((1, t + pad, t + pad, x_edge.shape[3]), dtype=np.float32)
    xb_edge[:, :t, :t] = x_edge.data
    maskb = np.zeros((1, t + pad), dtype=bool)
    maskb[:, :t] = True
    outb = gpa_forward(T.Tensor(xb_node), T.Tensor(xb_edge), params, maskb)

    assert np.max(np.abs(outb.node_update.data[:, :t] - out.node_update.data)) < 1e-6
    assert np.max(np.abs(outb.edge_update.data[:, :t, :t] - out.edge_update.data)) < 1e-6
    # padded positions contribute nothing to either stream
    assert np.all(outb.edge_update.data[:, t:, :] == 0.0)
    assert np.all(outb.edge_update.data[:, :, t:] == 0.0)
    assert np.all(outb.node_update.data[:, t:] == 0.0)


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_gpa_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    x_node, x_edge, params, mask = rand_instance(rng, n)
    mask[0, -1] = False  # mask one key
    out = gpa_forward(x_node, x_edge, params, mask)
    s = T.softmax(out.attention, axis=-1, mask=mask[:, None, None, :]).data
    sums = s[:, :, mask[0]].sum(axis=-1)
    np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-6)


def test_gpa_gradcheck_all_params():
    rng = np.random.default_rng(15)
    d1, d2, n_head, n = 8, 6, 2, 3
    t = n + 1
    x_node = T.Tensor(rng.normal(size=(1, t, d1)), requires_grad=True, dtype=np.float64)
    x_edge = T.Tensor(rng.normal(size=(1, t, t, d2)), requires_grad=True, dtype=np.float64)
    params = make_params(rng, d1=d1, d2=d2, n_head=n_head, dtype=np.float64)
    mask = np.ones((1, t), dtype=bool)
    coef_n = rng.normal(size=(1, t, d1))
    coef_e = rng.normal(size=(1, t, t, d2))

    def f():
        out = gpa_forward(x_node, x_edge, params, mask)
        return T.tsum(out.node_update * coef_n) + T.tsum(out.edge_update * coef_e)

    inputs = {
        "x_node": x_node,
        "x_edge": x_edge,
        "w_q": params.w_q,
        "w_k": params.w_k,
        "w_v": params.w_v,
        "w_o": params.w_o,
        "w_reduce": params.w_reduce,
        "w_expand": params.w_expand,
        "fuse_fc.weight": params.fuse_w,
        "fuse_fc.bias": params.fuse_b,
    }
    report = gradcheck(f, inputs, step=1e-4, tol=1e-3)
    assert report.passed, report.to_dict()
    assert report.max_rel_err < 1e-4  # comfortably under the stated tolerance
