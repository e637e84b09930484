"""Line graph over synaptic connections: one node per weight, links between
weights on consecutive layers that share a neuron, directed from the higher
layer to the lower one (reversed relative to forward propagation).

Link weights measure the interaction strength between the two weights under
the training dynamics; degree vectors come either from the explicit sparse
adjacency or from closed-form per-layer expressions, and the two paths are
cross-checked in the tests.
"""

import numpy as np

MAX_EXPLICIT_LINKS = 10**6


class LineGraphTopology:
    """Node indexing and link enumeration for an MLP's weight graph.

    Node ids are layer-major then row-major: node(l, i, j) maps weight
    w_ij^(l) (target neuron i, source neuron j) to
    offset(l) + i * n_{l-1} + j. Every pair (w_ki^(l+1), w_ij^(l)) sharing
    neuron i contributes one link directed source -> target, i.e. from the
    layer-(l+1) weight down to the layer-l weight.
    """

    def __init__(self, spec):
        self.spec = spec
        sizes = spec.layer_sizes
        self.layer_counts = [sizes[l] * sizes[l - 1] for l in range(1, len(sizes))]
        self.offsets = np.concatenate([[0], np.cumsum(self.layer_counts)]).astype(np.int64)
        self.n_nodes = int(self.offsets[-1])
        self.n_links = sum(
            sizes[l - 1] * sizes[l] * sizes[l + 1] for l in range(1, spec.n_layers)
        )
        self._links = None

    def node_id(self, l, i, j):
        sizes = self.spec.layer_sizes
        if not (1 <= l <= self.spec.n_layers):
            raise IndexError("weight layer %d out of range" % l)
        if not (0 <= i < sizes[l] and 0 <= j < sizes[l - 1]):
            raise IndexError("weight index (%d, %d) out of range for layer %d" % (i, j, l))
        return int(self.offsets[l - 1]) + i * sizes[l - 1] + j

    def node_coords(self, node):
        """Inverse of node_id: node -> (layer, row, col)."""
        if not (0 <= node < self.n_nodes):
            raise IndexError("node %d out of range" % node)
        l = int(np.searchsorted(self.offsets, node, side="right"))
        rem = node - int(self.offsets[l - 1])
        n_prev = self.spec.layer_sizes[l - 1]
        return l, rem // n_prev, rem % n_prev

    def links(self):
        """(sources, targets) int64 arrays enumerating every link.

        Enumeration order is target layer ascending, then (k, i, j) with k
        the source row, i the shared neuron, j the target column. Refuses to
        materialize above MAX_EXPLICIT_LINKS; large nets must use the
        closed-form degree path instead.
        """
        if self._links is not None:
            return self._links
        if self.n_links > MAX_EXPLICIT_LINKS:
            raise ValueError(
                "%d links exceed the explicit-adjacency cap %d; "
                "use closed_form_degrees" % (self.n_links, MAX_EXPLICIT_LINKS)
            )
        sizes = self.spec.layer_sizes
        src_parts, tgt_parts = [], []
        for l in range(1, self.spec.n_layers):  # target layer l, source layer l+1
            n_prev, n_l, n_next = sizes[l - 1], sizes[l], sizes[l + 1]
            k = np.arange(n_next)[:, None, None]
            i = np.arange(n_l)[None, :, None]
            j = np.arange(n_prev)[None, None, :]
            src = self.offsets[l] + k * n_l + i + 0 * j
            tgt = self.offsets[l - 1] + i * n_prev + j + 0 * k
            src_parts.append(src.ravel())
            tgt_parts.append(tgt.ravel())
        if src_parts:
            sources = np.concatenate(src_parts).astype(np.int64)
            targets = np.concatenate(tgt_parts).astype(np.int64)
        else:
            sources = np.zeros(0, dtype=np.int64)
            targets = np.zeros(0, dtype=np.int64)
        self._links = (sources, targets)
        return self._links


def build_topology(spec):
    return LineGraphTopology(spec)


class WeightedAdjacency:
    """Sparse P[target, source] over line-graph nodes plus degree vectors.

    delta_in = P . 1 (row sums, total inbound weight per node) and
    delta_out = 1^T P (column sums).
    """

    def __init__(self, n_nodes, targets, sources, values):
        self.n_nodes = int(n_nodes)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.sources = np.asarray(sources, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if not (len(self.targets) == len(self.sources) == len(self.values)):
            raise ValueError("entry arrays must have equal length")
        self.delta_in = np.bincount(self.targets, weights=self.values, minlength=self.n_nodes)
        self.delta_out = np.bincount(self.sources, weights=self.values, minlength=self.n_nodes)

    @classmethod
    def from_dense(cls, P):
        P = np.asarray(P, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("adjacency must be square")
        tgt, src = np.nonzero(P)
        return cls(P.shape[0], tgt, src, P[tgt, src])

    def to_dense(self):
        P = np.zeros((self.n_nodes, self.n_nodes))
        np.add.at(P, (self.targets, self.sources), self.values)
        return P

    @property
    def n_entries(self):
        return len(self.values)


def _require_single_sample(trace):
    if not trace.complete:
        raise ValueError("trace is missing the backward pass")
    if trace.n_samples != 1:
        raise ValueError(
            "per-sample construction needs a single-sample trace, got %d samples;"
            " batch aggregation lives in the capacitance module" % trace.n_samples
        )


def _layer_factors(trace, l):
    """(source factor over k, shared-neuron factor over i, target factor over j)
    for links from layer l+1 into layer l, single-sample trace."""
    L = trace.n_layers
    if l + 1 == L:
        src = trace.residual[0]
    else:
        src = trace.delta[l + 1][0] * trace.sigma_prime[l + 1][0]
    mid = trace.sigma_prime[l][0]
    tgt = trace.z[l - 1][0]
    return src, mid, tgt


def pair_weight(trace, l, k, i, j):
    """Interaction strength p{w_ki^(l+1), w_ij^(l)} from a single-sample trace.

    For a hidden source layer (l+1 < L):
        p = z_j^(l-1) * sigma'_l(a_i) * delta_k^(l+1) * sigma'_{l+1}(a_k)
    and for the output source layer (l+1 == L) the last two factors collapse
    to the residual z_k^(L) - y_k.
    """
    _require_single_sample(trace)
    L = trace.n_layers
    if not (1 <= l <= L - 1):
        raise IndexError("target layer %d out of range 1..%d" % (l, L - 1))
    sizes = trace.spec.layer_sizes
    if not (0 <= k < sizes[l + 1] and 0 <= i < sizes[l] and 0 <= j < sizes[l - 1]):
        raise IndexError("pair indices (%d, %d, %d) out of range at layer %d" % (k, i, j, l))
    src, mid, tgt = _layer_factors(trace, l)
    return float(src[k] * mid[i] * tgt[j])


def assemble_adjacency(topology, trace):
    """Explicit sparse adjacency: every topological link carries its pair weight."""
    _require_single_sample(trace)
    if topology.spec.layer_sizes != trace.spec.layer_sizes:
        raise ValueError("topology and trace disagree on layer sizes")
    sources, targets = topology.links()
    parts = []
    for l in range(1, trace.n_layers):
        src, mid, tgt = _layer_factors(trace, l)
        # value[k, i, j] = src_k * mid_i * tgt_j, flattened in link order
        parts.append(np.einsum("k,i,j->kij", src, mid, tgt).ravel())
    values = np.concatenate(parts) if parts else np.zeros(0)
    return WeightedAdjacency(topology.n_nodes, targets, sources, values)


def closed_form_degrees(trace):
    """Degree vectors straight from the per-layer formulas, no link enumeration.

    delta_in is nonzero only on layers 1..L-2 (inbound weight
    z_j^(l-1) sigma'_l(a_i) * sum_k delta_k^(l+1) sigma'_{l+1}(a_k)); it is
    identically zero on layers L-1 (the output probabilities sum to one, so
    the residual factors cancel) and L (no higher layer). delta_out is zero
    on layer 1 and equals [1^T z^(l-2)] sigma'_{l-1}(a_j) delta_i^(l)
    sigma'_l(a_i) on layers 2..L-1, with the delta factor replaced by the
    residual on layer L.
    """
    _require_single_sample(trace)
    L = trace.n_layers
    if L < 2:
        raise ValueError("need at least two weight layers")
    topo = LineGraphTopology(trace.spec)
    delta_in = np.zeros(topo.n_nodes)
    delta_out = np.zeros(topo.n_nodes)

    def block(l):
        return slice(int(topo.offsets[l - 1]), int(topo.offsets[l]))

    for l in range(1, L - 1):
        src, mid, tgt = _layer_factors(trace, l)
        delta_in[block(l)] = np.outer(mid * src.sum(), tgt).ravel()
    for l in range(2, L + 1):
        ones_z = trace.z[l - 2][0].sum()
        if l == L:
            di = trace.residual[0]
        else:
            di = trace.delta[l][0] * trace.sigma_prime[l][0]
        sj = trace.sigma_prime[l - 1][0]
        delta_out[block(l)] = ones_z * np.outer(di, sj).ravel()
    return delta_in, delta_out


def dump_adjacency_csv(topology, adjacency, path):
    """CSV dump with one row per link: target and source weight coordinates
    plus the link weight."""
    from .serialize import write_csv

    rows = []
    for t, s, v in zip(adjacency.targets, adjacency.sources, adjacency.values):
        tl, ti, tj = topology.node_coords(int(t))
        sl, si, sj = topology.node_coords(int(s))
        rows.append((tl, ti, tj, sl, si, sj, v))
    write_csv(
        path,
        (
            "target_layer",
            "target_row",
            "target_col",
            "source_layer",
            "source_row",
            "source_col",
            "weight",
        ),
        rows,
    )
