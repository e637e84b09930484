"""Bias-free ReLU/softmax multilayer perceptron with dense-form backprop.

The engine exposes the full per-sample internal trace (pre-activations,
activations, activation gradients, ReLU masks) because the line-graph and
capacitance modules consume those quantities directly, not just the weight
gradients.
"""

import numpy as np

LOG_CLAMP = 1e-15


class DivergenceError(RuntimeError):
    """Raised when a training run produces non-finite gradients or losses."""


class MlpSpec:
    """Architecture of a bias-free MLP: ReLU hidden layers, softmax output.

    Args:
        layer_sizes: [n_0, n_1, ..., n_L]; n_0 is the input width, n_L the
            number of classes. L = len(layer_sizes) - 1 weight layers.
        frozen: optional per-weight-layer flags (length L); frozen layers are
            never updated by sgd_step.
    """

    def __init__(self, layer_sizes, frozen=None):
        sizes = [int(n) for n in layer_sizes]
        if len(sizes) < 2:
            raise ValueError("need at least input and output layers")
        if any(n < 1 for n in sizes):
            raise ValueError("layer sizes must be >= 1, got %r" % (sizes,))
        self.layer_sizes = sizes
        self.n_layers = len(sizes) - 1  # L, number of weight layers
        if frozen is None:
            frozen = [False] * self.n_layers
        frozen = [bool(f) for f in frozen]
        if len(frozen) != self.n_layers:
            raise ValueError(
                "frozen flags length %d != %d weight layers" % (len(frozen), self.n_layers)
            )
        self.frozen = frozen

    def __eq__(self, other):
        return (
            isinstance(other, MlpSpec)
            and self.layer_sizes == other.layer_sizes
            and self.frozen == other.frozen
        )

    def __repr__(self):
        return "MlpSpec(%r, frozen=%r)" % (self.layer_sizes, self.frozen)


class MlpModel:
    """Weights W^(l) of shape (n_l, n_{l-1}) for l = 1..L, no bias terms."""

    def __init__(self, spec, weights):
        if len(weights) != spec.n_layers:
            raise ValueError("expected %d weight matrices, got %d" % (spec.n_layers, len(weights)))
        for l, w in enumerate(weights, start=1):
            want = (spec.layer_sizes[l], spec.layer_sizes[l - 1])
            if w.shape != want:
                raise ValueError("layer %d weight shape %r != %r" % (l, w.shape, want))
        self.spec = spec
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]

    @property
    def n_layers(self):
        return self.spec.n_layers

    def weight(self, l):
        """W^(l), 1-indexed by weight layer."""
        return self.weights[l - 1]

    def copy(self):
        return MlpModel(self.spec, [w.copy() for w in self.weights])


class ForwardBackwardTrace:
    """Per-sample internals of one forward (and optionally backward) pass.

    All arrays are batch-first. Layer lists are indexed so that entry l holds
    the layer-l quantity (index 0 is the input for z, None elsewhere):

        z[l]            activations, shape (B, n_l); z[0] is the input
        a[l]            pre-activations, l >= 1
        sigma_prime[l]  ReLU masks as float {0,1}, hidden layers 1..L-1 only
        delta[l]        dC/dz^(l), hidden layers 1..L-1, filled by backward
        residual        z^(L) - y, shape (B, n_L), filled by backward
        grad_w[l]       mean weight gradient, shape (n_l, n_{l-1}), 1-indexed
        loss            mean cross-entropy over the batch
    """

    def __init__(self, spec, z, a, sigma_prime):
        self.spec = spec
        self.z = z
        self.a = a
        self.sigma_prime = sigma_prime
        self.delta = [None] * (spec.n_layers + 1)
        self.residual = None
        self.grad_w = [None] * (spec.n_layers + 1)
        self.loss = None

    @property
    def n_samples(self):
        return self.z[0].shape[0]

    @property
    def n_layers(self):
        return self.spec.n_layers

    @property
    def complete(self):
        """True once backward() has filled gradients and residuals."""
        return self.residual is not None

    def gradients(self):
        """Mean weight gradients as a 1-indexed-compatible list [W1..WL]."""
        if not self.complete:
            raise ValueError("backward pass has not been run on this trace")
        return self.grad_w[1:]


def _softmax(a):
    # max-subtraction keeps exp() finite for any pre-activation scale
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model, x):
    """Run a forward pass and return a trace with a, z (and ReLU masks) filled.

    Accepts a single sample (n_0,) or a batch (B, n_0); the trace is always
    batch-first.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.spec.layer_sizes[0]:
        raise ValueError(
            "input width %r does not match n_0 = %d" % (x.shape, model.spec.layer_sizes[0])
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")

    L = model.n_layers
    z = [None] * (L + 1)
    a = [None] * (L + 1)
    sigma_prime = [None] * (L + 1)
    z[0] = x
    for l in range(1, L + 1):
        a[l] = z[l - 1] @ model.weight(l).T
        if l < L:
            mask = (a[l] > 0.0).astype(np.float64)  # derivative at exactly 0 is 0
            sigma_prime[l] = mask
            z[l] = a[l] * mask
        else:
            z[l] = _softmax(a[l])
    return ForwardBackwardTrace(model.spec, z, a, sigma_prime)


def loss_cross_entropy(z_L, y):
    """Cross entropy -sum(y*ln(z)) with z clamped at 1e-15; batch mean if 2-D."""
    z_L = np.asarray(z_L, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z_L.ndim == 1:
        z_L = z_L[None, :]
        y = y[None, :]
    if z_L.shape != y.shape:
        raise ValueError("shape mismatch %r vs %r" % (z_L.shape, y.shape))
    _check_one_hot(y)
    logs = np.log(np.clip(z_L, LOG_CLAMP, None))
    return float(-(y * logs).sum(axis=1).mean())


def _check_one_hot(y):
    is_01 = np.all((y == 0.0) | (y == 1.0))
    if not is_01 or not np.all(y.sum(axis=1) == 1.0):
        raise ValueError("labels must be one-hot rows")


def backward(model, trace, y):
    """Complete a forward trace with delta, residual, mean gradients, loss.

    Implements the dense-form recursion: residual r = z^(L) - y drives
    grad W^(L) = r^T z^(L-1) / B and delta^(L-1) = W^(L)^T r; below that
    delta^(l-1) = W^(l)^T (delta^(l) . sigma'_l) and
    grad W^(l) = (delta^(l) . sigma'_l)^T z^(l-1) / B.
    """
    if trace.z[0] is None or trace.z[trace.n_layers] is None:
        raise ValueError("forward trace missing")
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    L = model.n_layers
    if y.shape != trace.z[L].shape:
        raise ValueError("labels shape %r != output shape %r" % (y.shape, trace.z[L].shape))
    _check_one_hot(y)

    B = trace.n_samples
    r = trace.z[L] - y
    trace.residual = r
    trace.grad_w[L] = r.T @ trace.z[L - 1] / B
    if L >= 2:
        trace.delta[L - 1] = r @ model.weight(L)
    for l in range(L - 1, 0, -1):
        d = trace.delta[l] * trace.sigma_prime[l]
        trace.grad_w[l] = d.T @ trace.z[l - 1] / B
        if l >= 2:
            trace.delta[l - 1] = d @ model.weight(l)
    trace.loss = loss_cross_entropy(trace.z[L], y)
    return trace


def forward_backward(model, x, y):
    """Convenience: forward then backward, returning the completed trace."""
    return backward(model, forward(model, x), y)


def sgd_step(model, gradients, alpha):
    """One SGD update; returns a new model, frozen layers shared bit-for-bit."""
    if alpha < 0:
        raise ValueError("learning rate must be >= 0")
    new_weights = []
    for l in range(1, model.n_layers + 1):
        g = gradients[l - 1]
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient at layer %d" % l)
        if model.spec.frozen[l - 1]:
            new_weights.append(model.weight(l))  # same array object, untouched
        else:
            new_weights.append(model.weight(l) - alpha * g)
    return MlpModel(model.spec, new_weights)


def evaluate(model, x, y):
    """Mean cross-entropy loss and classification accuracy on (x, y)."""
    trace = forward(model, x)
    z_L = trace.z[model.n_layers]
    loss = loss_cross_entropy(z_L, y)
    acc = float((z_L.argmax(axis=1) == np.asarray(y).argmax(axis=1)).mean())
    return loss, acc


class LearningCurve:
    """Ordered per-epoch records. Epoch 0 is the pre-update evaluation."""

    FIELDS = ("epoch", "train_loss", "train_acc", "val_acc", "beta_eff")

    def __init__(self):
        self.records = []

    def append(self, epoch, train_loss, train_acc, val_acc, beta_eff=None):
        if self.records and epoch <= self.records[-1]["epoch"]:
            raise ValueError("epochs must be strictly increasing")
        if epoch < 0:
            raise ValueError("epoch must be >= 0")
        for name, v in (("train", train_acc), ("val", val_acc)):
            if not 0.0 <= v <= 1.0:
                raise ValueError("%s accuracy %r outside [0, 1]" % (name, v))
        self.records.append(
            {
                "epoch": int(epoch),
                "train_loss": float(train_loss),
                "train_acc": float(train_acc),
                "val_acc": float(val_acc),
                "beta_eff": None if beta_eff is None else float(beta_eff),
            }
        )

    def column(self, field):
        return [rec[field] for rec in self.records]

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def train(
    model,
    x_train,
    y_train,
    x_val,
    y_val,
    alpha,
    batch_size,
    epochs,
    seed,
    probe_hook=None,
):
    """SGD training loop; deterministic given the seed.

    Records an epoch-0 evaluation before any update, then one record per
    epoch. probe_hook(model) -> scalar is invoked at epoch 0 and after each
    epoch (the hook owns its fixed probe batch). Returns (final model, curve).
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("empty split")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")

    rng = np.random.default_rng(seed)
    curve = LearningCurve()

    def record(epoch):
        train_loss, train_acc = evaluate(model, x_train, y_train)
        if not np.isfinite(train_loss):
            raise DivergenceError("non-finite training loss at epoch %d" % epoch)
        val_loss, val_acc = evaluate(model, x_val, y_val)
        beta = probe_hook(model) if probe_hook is not None else None
        curve.append(epoch, train_loss, train_acc, val_acc, beta)

    record(0)
    n = len(x_train)
    for epoch in range(1, int(epochs) + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            trace = forward_backward(model, x_train[idx], y_train[idx])
            model = sgd_step(model, trace.gradients(), alpha)
        record(epoch)
    return model, curve


def init_kaiming_normal(spec, seed):
    """Kaiming-normal init: W^(l) entries ~ N(0, 2/n_{l-1})."""
    rng = np.random.default_rng(seed)
    weights = []
    for l in range(1, spec.n_layers + 1):
        fan_in = spec.layer_sizes[l - 1]
        std = np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, std, size=(spec.layer_sizes[l], fan_in)))
    return MlpModel(spec, weights)
