"""Line-graph construction tests: topology counts, pair weights against the
weight-gradient structure, finite-difference checks of the interaction map,
and closed-form degrees against the explicit adjacency."""

import numpy as np
import pytest

from ncap import linegraph, mlp
from ncap.serialize import read_csv


def random_trace(layer_sizes, seed, x_scale=1.0):
    rng = np.random.default_rng(seed)
    model = mlp.init_kaiming_normal(mlp.MlpSpec(layer_sizes), seed)
    x = rng.normal(size=layer_sizes[0]) * x_scale
    y = np.zeros(layer_sizes[-1])
    y[rng.integers(layer_sizes[-1])] = 1.0
    return model, x, y, mlp.forward_backward(model, x, y[None, :])


def test_topology_counts_hand_example():
    # (2,2,2,2,2): 4 weight layers of 4 nodes each; each adjacent pair of
    # layers contributes 2*2*2 = 8 links
    topo = linegraph.build_topology(mlp.MlpSpec([2, 2, 2, 2, 2]))
    assert topo.n_nodes == 16
    assert topo.n_links == 24
    sources, targets = topo.links()
    assert len(sources) == len(targets) == 24


def test_topology_single_weight_layer_has_no_links():
    topo = linegraph.build_topology(mlp.MlpSpec([3, 2]))
    assert topo.n_nodes == 6
    assert topo.n_links == 0
    sources, targets = topo.links()
    assert len(sources) == 0


def test_node_id_round_trip():
    spec = mlp.MlpSpec([3, 4, 2, 5])
    topo = linegraph.build_topology(spec)
    seen = set()
    for l in range(1, spec.n_layers + 1):
        for i in range(spec.layer_sizes[l]):
            for j in range(spec.layer_sizes[l - 1]):
                node = topo.node_id(l, i, j)
                assert topo.node_coords(node) == (l, i, j)
                seen.add(node)
    assert seen == set(range(topo.n_nodes))
    with pytest.raises(IndexError):
        topo.node_id(0, 0, 0)
    with pytest.raises(IndexError):
        topo.node_coords(topo.n_nodes)


def test_links_connect_weights_sharing_a_neuron():
    spec = mlp.MlpSpec([2, 3, 2])
    topo = linegraph.build_topology(spec)
    sources, targets = topo.links()
    for s, t in zip(sources, targets):
        sl, si, sj = topo.node_coords(int(s))
        tl, ti, tj = topo.node_coords(int(t))
        assert sl == tl + 1  # directed from the higher layer down
        assert sj == ti  # source column is the shared neuron


def test_pair_weight_factors():
    model, x, y, trace = random_trace([3, 4, 4, 2], seed=0)
    # hidden source layer: z_j * mask_i * delta_k * mask_k
    l, k, i, j = 1, 2, 1, 0
    want = (
        trace.z[0][0, j]
        * trace.sigma_prime[1][0, i]
        * trace.delta[2][0, k]
        * trace.sigma_prime[2][0, k]
    )
    assert linegraph.pair_weight(trace, l, k, i, j) == pytest.approx(want, abs=1e-15)
    # output source layer: the delta factor collapses to the residual
    l, k, i, j = 2, 1, 2, 3
    want = trace.z[1][0, j] * trace.sigma_prime[2][0, i] * trace.residual[0, k]
    assert linegraph.pair_weight(trace, l, k, i, j) == pytest.approx(want, abs=1e-15)


def test_pair_weight_rejects_batches_and_incomplete_traces():
    model = mlp.init_kaiming_normal(mlp.MlpSpec([2, 3, 2]), seed=1)
    x = np.zeros((2, 2))
    y = np.tile([1.0, 0.0], (2, 1))
    batch = mlp.forward_backward(model, x, y)
    with pytest.raises(ValueError):
        linegraph.pair_weight(batch, 1, 0, 0, 0)
    fwd_only = mlp.forward(model, np.zeros(2))
    with pytest.raises(ValueError):
        linegraph.pair_weight(fwd_only, 1, 0, 0, 0)


def test_assemble_adjacency_matches_pair_weight():
    model, x, y, trace = random_trace([2, 3, 3, 2], seed=2)
    topo = linegraph.build_topology(model.spec)
    adj = linegraph.assemble_adjacency(topo, trace)
    assert adj.n_entries == topo.n_links
    rng = np.random.default_rng(3)
    for idx in rng.integers(0, adj.n_entries, size=20):
        t, s, v = adj.targets[idx], adj.sources[idx], adj.values[idx]
        tl, ti, tj = topo.node_coords(int(t))
        sl, si, sj = topo.node_coords(int(s))
        assert v == pytest.approx(linegraph.pair_weight(trace, tl, si, ti, tj), abs=1e-15)


def test_contraction_identity_against_backprop():
    # summing link weights times the upstream weight entries must reproduce
    # the exact loss gradient: sum_k p{w_ki^(l+1), w_ij^(l)} w_ki^(l+1)
    # = dC/dw_ij^(l)
    for seed in range(5):
        model, x, y, trace = random_trace([3, 4, 5, 4, 3], seed=seed)
        grads = trace.gradients()
        L = model.n_layers
        for l in range(1, L):
            src, mid, tgt = linegraph._layer_factors(trace, l)
            w_up = model.weight(l + 1)  # shape (n_{l+1}, n_l)
            contracted = (w_up * src[:, None]).sum(axis=0)  # over k, per i
            grad_from_links = np.outer(contracted * mid, tgt)
            assert np.allclose(grad_from_links, grads[l - 1], atol=1e-10)


def test_link_weights_match_finite_differences():
    # p{w_ki^(l+1), w_ij^(l)} is the sensitivity of the interaction map to the
    # upstream weight: perturb w_ki^(l+1), hold the trace state fixed, and the
    # map's (i, j) entry moves by p per unit perturbation. The map is linear
    # in that weight, so a large step avoids cancellation without truncation
    # error.
    h = 1e-3
    checked = 0
    rng = np.random.default_rng(4)
    for seed in range(5):
        model, x, y, trace = random_trace([3, 4, 4, 3], seed=10 + seed)
        topo = linegraph.build_topology(model.spec)
        adj = linegraph.assemble_adjacency(topo, trace)
        L = model.n_layers
        for l in range(1, L):
            src, mid, tgt = linegraph._layer_factors(trace, l)
            n_next, n_l, n_prev = (
                model.spec.layer_sizes[l + 1],
                model.spec.layer_sizes[l],
                model.spec.layer_sizes[l - 1],
            )
            for _ in range(12):
                k = int(rng.integers(n_next))
                i = int(rng.integers(n_l))
                j = int(rng.integers(n_prev))
                w_up = model.weight(l + 1)
                orig = w_up[k, i]
                w_up[k, i] = orig + h
                up = np.outer((w_up.T @ src) * mid, tgt)[i, j]
                w_up[k, i] = orig - h
                dn = np.outer((w_up.T @ src) * mid, tgt)[i, j]
                w_up[k, i] = orig
                fd = (up - dn) / (2 * h)
                p = linegraph.pair_weight(trace, l, k, i, j)
                assert abs(p - fd) <= max(1e-9, 1e-4 * max(abs(p), abs(fd)))
                checked += 1
    assert checked >= 100


def test_full_loss_mixed_partial_gap_is_small():
    # diagnostic, not exact: the link weight approximates the mixed partial
    # d2C/(dw_ki^(l+1) dw_ij^(l)) of the raw loss up to curvature terms from
    # the softmax and the dependence of delta on the perturbed weight
    h = 1e-5
    model, x, y, trace = random_trace([3, 4, 4, 3], seed=20)
    rng = np.random.default_rng(21)

    def grad_entry(l, i, j):
        return mlp.forward_backward(model, x, y).gradients()[l - 1][i, j]

    gaps = []
    for _ in range(10):
        l = int(rng.integers(1, model.n_layers))
        k = int(rng.integers(model.spec.layer_sizes[l + 1]))
        i = int(rng.integers(model.spec.layer_sizes[l]))
        j = int(rng.integers(model.spec.layer_sizes[l - 1]))
        w_up = model.weight(l + 1)
        orig = w_up[k, i]
        w_up[k, i] = orig + h
        up = grad_entry(l, i, j)
        w_up[k, i] = orig - h
        dn = grad_entry(l, i, j)
        w_up[k, i] = orig
        fd = (up - dn) / (2 * h)
        gaps.append(abs(linegraph.pair_weight(trace, l, k, i, j) - fd))
    assert max(gaps) < 1.0  # same order of magnitude, not machine precision


def test_converged_trace_gives_zero_adjacency():
    # zero residual propagates to zero deltas, so every link weight vanishes
    model, x, y, trace = random_trace([2, 3, 3, 2], seed=5)
    L = model.n_layers
    trace.residual = np.zeros_like(trace.residual)
    for l in range(1, L):
        trace.delta[l] = np.zeros_like(trace.delta[l])
    topo = linegraph.build_topology(model.spec)
    adj = linegraph.assemble_adjacency(topo, trace)
    assert np.all(adj.values == 0.0)
    assert np.all(adj.delta_in == 0.0) and np.all(adj.delta_out == 0.0)


def test_adjacency_from_dense_round_trip():
    P = np.array([[0.0, 2.0,  0.0], [1.0, 0.0, -3.0], [0.0, 0.5, 0.0]])
    adj = linegraph.WeightedAdjacency.from_dense(P)
    assert np.array_equal(adj.to_dense(), P)
    assert np.allclose(adj.delta_in, P.sum(axis=1))
    assert np.allclose(adj.delta_out, P.sum(axis=0))
    with pytest.raises(ValueError):
        linegraph.WeightedAdjacency.from_dense(np.zeros((2, 3)))


def test_closed_form_degrees_match_explicit():
    for seed in range(8):
        sizes_pool = ([2, 3, 4, 3, 2], [3, 4, 4, 2], [2, 2, 2, 2, 2], [4, 5, 3])
        sizes = sizes_pool[seed % len(sizes_pool)]
        model, x, y, trace = random_trace(list(sizes), seed=30 + seed)
        topo = linegraph.build_topology(model.spec)
        adj = linegraph.assemble_adjacency(topo, trace)
        din, dout = linegraph.closed_form_degrees(trace)
        scale = 1.0 + np.abs(adj.delta_in).max()
        assert np.abs(din - adj.delta_in).max() < 1e-10 * scale
        assert np.abs(dout - adj.delta_out).max() < 1e-10 * scale


def test_degree_boundary_zeros():
    model, x, y, trace = random_trace([3, 4, 4, 4, 3], seed=40)
    topo = linegraph.build_topology(model.spec)
    din, dout = linegraph.closed_form_degrees(trace)
    L = model.n_layers

    def block(l):
        return slice(int(topo.offsets[l - 1]), int(topo.offsets[l]))

    # no links point into the top two weight layers
    assert np.allclose(din[block(L)], 0.0, atol=1e-12)
    assert np.abs(din[block(L - 1)]).max() < 1e-12  # residual entries sum to 0
    # no links leave the bottom weight layer
    assert np.all(dout[block(1)] == 0.0)


def test_degree_conservation():
    # every link contributes its weight to exactly one in-degree entry and
    # one out-degree entry, so the totals agree
    for seed in range(5):
        model, x, y, trace = random_trace([3, 5, 4, 3, 2], seed=50 + seed)
        topo = linegraph.build_topology(model.spec)
        adj = linegraph.assemble_adjacency(topo, trace)
        total_in = adj.delta_in.sum()
        total_out = adj.delta_out.sum()
        assert abs(total_in - total_out) <= 1e-9 * (1.0 + abs(total_in))


def test_explicit_link_cap():
    spec = mlp.MlpSpec([128, 128, 128, 128])
    topo = linegraph.build_topology(spec)
    assert topo.n_links > linegraph.MAX_EXPLICIT_LINKS
    with pytest.raises(ValueError):
        topo.links()


def test_adjacency_csv_dump(tmp_path):
    model, x, y, trace = random_trace([2, 3, 2], seed=60)
    topo = linegraph.build_topology(model.spec)
    adj = linegraph.assemble_adjacency(topo, trace)
    path = tmp_path / "links.csv"
    linegraph.dump_adjacency_csv(topo, adj, str(path))
    header, rows = read_csv(str(path))
    assert header == [
        "target_layer",
        "target_row",
        "target_col",
        "source_layer",
        "source_row",
        "source_col",
        "weight",
    ]
    assert len(rows) == adj.n_entries
    # 17-digit floats round-trip exactly
    got = np.array([float(r[6]) for r in rows])
    assert np.array_equal(got, adj.values)
