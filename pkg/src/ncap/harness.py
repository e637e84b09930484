"""Desk-scale candidate-ranking experiment: pretrain a pool of MLP backbones
on a source split, attach a frozen randomly initialized probe head, fine-tune
the backbone on the target split while recording (beta_eff, val acc) per
epoch, then predict final accuracies from early prefixes and rank.

Candidate runs are independent (per-candidate seeds, no shared mutable
state), so they may fan out across threads; reports aggregate in model_id
order and are bit-identical for any thread count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import capacitance, mlp, predictor


class NcpSpec:
    """Frozen probe head: three ReLU hidden layers plus the output layer."""

    def __init__(self, hidden=(64, 32, 16), seed=0):
        hidden = tuple(int(h) for h in hidden)
        if len(hidden) < 3:
            raise ValueError(
                "probe needs at least three hidden layers for a well-defined beta_eff"
            )
        if any(h < 1 for h in hidden):
            raise ValueError("hidden widths must be >= 1")
        self.hidden = hidden
        self.seed = int(seed)

    @property
    def n_layers(self):
        return len(self.hidden) + 1


class CandidateModel:
    """A pretrained backbone plus bookkeeping.

    backbone includes its source-task output layer; attach_ncp removes it.
    """

    def __init__(self, model_id, backbone, seed, source_metrics):
        self.model_id = model_id
        self.backbone = backbone
        self.seed = seed
        self.source_metrics = dict(source_metrics)

    @property
    def architecture(self):
        return list(self.backbone.spec.layer_sizes)


def candidate_seeds(master_seed, n):
    """Per-candidate integer seeds, one master draw, stable in pool order."""
    rng = np.random.default_rng(master_seed)
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=n)]


def build_pool(architectures, dataset, pretrain_epochs, alpha, batch_size, seed):
    """Pretrain one backbone per architecture on the source split.

    architectures is a list of hidden-width tuples; each backbone is
    input -> hidden* -> n_classes. Returns CandidateModel list in input order.
    """
    if len(architectures) < 1:
        raise ValueError("empty architecture list")
    x_src, y_src = dataset.split("source")
    x_val, y_val = dataset.split("val")
    seeds = candidate_seeds(seed, len(architectures))
    pool = []
    for idx, hidden in enumerate(architectures):
        hidden = tuple(int(h) for h in hidden)
        if len(hidden) < 1:
            raise ValueError("backbone needs at least one hidden layer, got %r" % (hidden,))
        sizes = [dataset.n_features, *hidden, dataset.n_classes]
        spec = mlp.MlpSpec(sizes)
        model = mlp.init_kaiming_normal(spec, seeds[idx])
        model, curve = mlp.train(
            model, x_src, y_src, x_val, y_val, alpha, batch_size, pretrain_epochs, seeds[idx]
        )
        last = curve[-1]
        model_id = "mlp-%s-s%d" % ("x".join(str(h) for h in hidden), idx)
        pool.append(
            CandidateModel(
                model_id,
                model,
                seeds[idx],
                {
                    "source_train_loss": last["train_loss"],
                    "source_train_acc": last["train_acc"],
                    "source_val_acc": last["val_acc"],
                },
            )
        )
    return pool


def attach_ncp(candidate, ncp_spec, n_classes):
    """Composite = backbone hidden layers (trainable) + frozen probe head.

    The backbone's source output layer is removed; the probe's first layer
    reads the last backbone hidden width. Probe weights are Kaiming
    initialized under ncp_spec.seed and frozen.
    """
    backbone = candidate.backbone
    if backbone.n_layers < 2:
        raise ValueError("backbone %s has no hidden layer to keep" % candidate.model_id)
    kept_sizes = backbone.spec.layer_sizes[:-1]  # drop the source output width
    kept_weights = [w.copy() for w in backbone.weights[:-1]]

    probe_sizes = [kept_sizes[-1], *ncp_spec.hidden, n_classes]
    probe_spec = mlp.MlpSpec(probe_sizes)
    probe_init = mlp.init_kaiming_normal(probe_spec, ncp_spec.seed)

    sizes = kept_sizes + probe_sizes[1:]
    frozen = [False] * len(kept_weights) + [True] * probe_init.n_layers
    spec = mlp.MlpSpec(sizes, frozen=frozen)
    return mlp.MlpModel(spec, kept_weights + probe_init.weights)


def probe_subnetwork(composite, n_probe_layers):
    """The top n_probe_layers weight layers as a standalone model (shared arrays)."""
    L = composite.n_layers
    if n_probe_layers >= L:
        raise ValueError("probe covers the whole network; no backbone left")
    sizes = composite.spec.layer_sizes[L - n_probe_layers :]
    spec = mlp.MlpSpec(sizes, frozen=composite.spec.frozen[L - n_probe_layers :])
    return mlp.MlpModel(spec, composite.weights[L - n_probe_layers :])


def make_probe_hook(x_probe, y_probe, n_probe_layers):
    """Hook computing beta_eff of the top probe sub-network.

    The sub-network's input is the backbone activation of the fixed probe
    batch; activation gradients flow strictly top-down, so the standalone
    backward pass on the sub-network equals the composite backward pass
    restricted to probe layers.
    """

    def hook(model):
        boundary = model.n_layers - n_probe_layers
        z = x_probe
        if boundary > 0:
            trace = mlp.forward(model, x_probe)
            z = trace.z[boundary]
        sub = probe_subnetwork(model, n_probe_layers) if boundary > 0 else model
        return capacitance.beta_probe(sub, z, y_probe).beta_eff

    return hook


def finetune_and_observe(
    composite, dataset, alpha, batch_size, epochs, seed, probe_size, model_id, metadata=None
):
    """Fine-tune on the target train split, recording beta_eff and val acc.

    The probe batch is the first probe_size training samples (fixed for the
    whole run). Only non-frozen (backbone) layers are updated. Returns
    (final model, ObservationSeries).
    """
    x_train, y_train = dataset.split("train")
    x_val, y_val = dataset.split("val")
    n_probe = min(int(probe_size), len(x_train))
    hook = make_probe_hook(
        x_train[:n_probe], y_train[:n_probe], n_probe_layers=_probe_layers(composite)
    )
    final, curve = mlp.train(
        composite, x_train, y_train, x_val, y_val, alpha, batch_size, epochs, seed, probe_hook=hook
    )
    meta = {"seed": seed, "alpha": alpha, **(metadata or {})}
    return final, predictor.ObservationSeries.from_curve(model_id, curve, meta)


def _probe_layers(composite):
    """Number of trailing frozen layers, i.e. the attached probe depth."""
    n = 0
    for flag in reversed(composite.spec.frozen):
        if not flag:
            break
        n += 1
    if n < capacitance.MIN_PROBE_LAYERS:
        raise ValueError("composite lacks a frozen probe head of depth >= %d"
                         % capacitance.MIN_PROBE_LAYERS)
    return n


def rank_models(series_list, true_finals, llc, t0_candidates=None,
                methods=("ours", "lsv", "bsv")):
    """Truncate every series to its first llc epochs, predict, and rank.

    true_finals maps model_id -> accuracy at the full horizon. Returns a
    plain-dict report: per-model predictions per method plus Spearman rho of
    each method's predictions against the true finals.
    """
    if len(series_list) < 2:
        raise ValueError("ranking needs at least 2 candidates")
    llc = int(llc)
    per_model = []
    for series in series_list:
        observed = [r for r in series.records if 1 <= r["epoch"] <= llc]
        if len(observed) < llc:
            raise ValueError(
                "series %s has %d observed epochs, llc=%d" % (series.model_id, len(observed), llc)
            )
        accs = [r["val_acc"] for r in observed]
        entry = {"model_id": series.model_id, "true_final": float(true_finals[series.model_id])}
        if "ours" in methods:
            cands = t0_candidates if t0_candidates is not None else range(1, llc - 1)
            pred, fits = predictor.predict_series(series, cands, llc)
            entry["ours"] = pred.i_star
            entry["ours_std"] = pred.std
            entry["t0"] = pred.t0_used
            entry["bic_table"] = [
                {"t0": t0, "n": fits[t0]["n"], "bic": fits[t0]["bic"]} for t0 in sorted(fits)
            ]
        if "lsv" in methods:
            entry["lsv"] = predictor.baseline_lsv(accs)
        if "bsv" in methods:
            entry["bsv"] = predictor.baseline_bsv(accs)
        per_model.append(entry)

    per_model.sort(key=lambda e: e["model_id"])
    finals = [e["true_final"] for e in per_model]
    rho = {}
    for method in methods:
        rho[method] = predictor.spearman_rho([e[method] for e in per_model], finals)
    return {"llc": llc, "models": per_model, "rho": rho}


def run_candidates(jobs, worker, max_workers=None):
    """Run worker(job) for every job, optionally in parallel.

    max_workers defaults to the NC_THREADS env var (1 if unset). Results are
    returned in job order regardless of scheduling.
    """
    if max_workers is None:
        max_workers = int(os.environ.get("NC_THREADS", "1"))
    if max_workers <= 1:
        return [worker(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(worker, jobs))
