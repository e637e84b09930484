"""Neural capacitance beta_eff: the degree-weighted average of in-degrees,
computed either from an explicit weighted adjacency or directly from MLP
traces via the factored per-layer form.

beta_eff = (delta_out^T delta_in) / (1^T delta_in + eps) with eps = 1e-12.
It is a signed scalar that tends to zero as training converges.
"""

from dataclasses import dataclass

import numpy as np

from . import mlp

EPSILON = 1e-12
MIN_PROBE_LAYERS = 4  # three hidden layers + output


@dataclass
class BetaResult:
    beta_eff: float
    numerator: float
    denominator: float
    epsilon_used: float
    n_samples: int


def _ratio(num, den, n_samples):
    beta = num / (den + EPSILON)
    if not np.isfinite(beta):
        raise FloatingPointError("beta_eff is not finite: %r / %r" % (num, den))
    return BetaResult(
        beta_eff=float(beta),
        numerator=float(num),
        denominator=float(den),
        epsilon_used=EPSILON,
        n_samples=int(n_samples),
    )


def beta_general(adjacency):
    """beta_eff from an assembled adjacency's degree vectors."""
    num = float(adjacency.delta_out @ adjacency.delta_in)
    den = float(adjacency.delta_in.sum())
    return _ratio(num, den, 1)


def batch_terms(trace):
    """Per-sample (numerator, denominator) arrays from a completed trace.

    The factored form over layers, per sample:

        num = sum_{l=2}^{L-2} [1^T z^(l-2)] [1^T (z^(l-1).s'_{l-1})]
                              [1^T (d^(l).s'_l)] [1^T (d^(l+1).s'_{l+1})]
        den = sum_{l=2}^{L-1} [1^T z^(l-2)] [1^T s'_{l-1}] [1^T (d^(l).s'_l)]

    Both sums are empty (zero) for L < 4 and L < 3 respectively, so one- and
    two-hidden-layer networks always yield beta_eff = 0. Requires ReLU hidden
    layers (the factoring uses s'^2 = s').
    """
    if not trace.complete:
        raise ValueError("trace is missing the backward pass")
    L = trace.n_layers
    B = trace.n_samples
    # per-layer batch sums, shape (B,)
    z_sum = {l: trace.z[l].sum(axis=1) for l in range(0, L)}
    sp_sum = {l: trace.sigma_prime[l].sum(axis=1) for l in range(1, L)}
    zsp_sum = {l: (trace.z[l] * trace.sigma_prime[l]).sum(axis=1) for l in range(1, L)}
    dsp_sum = {l: (trace.delta[l] * trace.sigma_prime[l]).sum(axis=1) for l in range(1, L)}

    num = np.zeros(B)
    for l in range(2, L - 1):
        num += z_sum[l - 2] * zsp_sum[l - 1] * dsp_sum[l] * dsp_sum[l + 1]
    den = np.zeros(B)
    for l in range(2, L):
        den += z_sum[l - 2] * sp_sum[l - 1] * dsp_sum[l]
    return num, den


def beta_mlp(trace):
    """beta_eff from a completed trace (any batch size).

    Per-sample numerators and denominators are summed over the batch and the
    ratio is formed once with the eps guard; a single-sample trace reproduces
    the per-sample value.
    """
    if trace.n_layers < 2:
        raise ValueError("need at least two weight layers")
    num, den = batch_terms(trace)
    return _ratio(num.sum(), den.sum(), trace.n_samples)


def beta_probe(model, probe_x, probe_y):
    """Forward+backward on a fixed probe batch, then batch-aggregated beta_eff.

    The probed network must have at least three hidden layers; shallower
    networks have an identically zero numerator and carry no signal.
    """
    if model.n_layers < MIN_PROBE_LAYERS:
        raise ValueError(
            "probe network has %d weight layers; beta_eff needs at least %d "
            "(three hidden layers plus the output)" % (model.n_layers, MIN_PROBE_LAYERS)
        )
    trace = mlp.forward_backward(model, probe_x, probe_y)
    return beta_mlp(trace)
