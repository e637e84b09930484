"""Command-line surface: gen-data, pretrain, finetune, beta, fit-predict,
rank, simulate, report.

Commands share one --out directory and hand artifacts to each other as JSON
and CSV files only; every artifact records the config digest and downstream
commands reject mismatches. Exit code 0 on success; failures print one
machine-readable JSON error line to stderr and exit 1.
"""

import argparse
import os
import sys
import warnings

import numpy as np

from . import capacitance, data, harness, meanfield, mlp, predictor, serialize
from .config import load_config

REFERENCE_SCALE = {
    "note": "full-scale benchmark context, not asserted at desk scale",
    "llc": 5,
    "rho_ours": 0.93,
    "rho_best_baseline": 0.86,
}


def _dataset_paths(out):
    return os.path.join(out, "data.csv"), os.path.join(out, "dataset.json")


def cmd_gen_data(cfg, out):
    spec = cfg.dataset
    if spec.source == "synthetic-blobs":
        dataset = data.generate_blobs(spec)
        standardized = False
    else:
        dataset = data.load_csv(spec.path, spec.label_col, spec=spec)
        standardized = True
    csv_path, meta_path = _dataset_paths(out)
    data.export_csv(dataset, csv_path)
    serialize.dump(
        {
            "config_digest": cfg.digest,
            "spec": spec.to_dict(),
            "standardized": standardized,
            "splits": {k: v.tolist() for k, v in dataset.splits.items()},
        },
        meta_path,
    )
    return {"written": [csv_path, meta_path], "n_samples": len(dataset.x)}


def _load_dataset(cfg, out):
    csv_path, meta_path = _dataset_paths(out)
    if not (os.path.exists(csv_path) and os.path.exists(meta_path)):
        raise FileNotFoundError("dataset artifacts missing in %s; run gen-data first" % out)
    meta = serialize.load(meta_path)
    serialize.check_digest(meta, cfg.digest, "dataset")
    loaded = data.load_csv(csv_path, "label", standardize_features=False)
    splits = {k: np.asarray(v, dtype=np.int64) for k, v in meta["splits"].items()}
    return data.Dataset(loaded.x, loaded.y, splits)


def cmd_pretrain(cfg, out):
    dataset = _load_dataset(cfg, out)
    pool = harness.build_pool(
        cfg.architectures, dataset, cfg.pretrain_epochs, cfg.pretrain_alpha,
        cfg.pretrain_batch, cfg.seed,
    )
    pool_dir = os.path.join(out, "pool")
    os.makedirs(pool_dir, exist_ok=True)
    index = []
    for cand in pool:
        path = os.path.join(pool_dir, "%s.json" % cand.model_id)
        serialize.save_checkpoint(cand.backbone, path, seed=cand.seed, epoch=cfg.pretrain_epochs)
        index.append(
            {
                "model_id": cand.model_id,
                "path": os.path.basename(path),
                "seed": cand.seed,
                "architecture": cand.architecture,
                "source_metrics": cand.source_metrics,
            }
        )
    serialize.dump({"config_digest": cfg.digest, "models": index},
                   os.path.join(out, "pool.json"))
    return {"written": [os.path.join(out, "pool.json")], "n_models": len(index)}


def _load_pool(cfg, out):
    pool_path = os.path.join(out, "pool.json")
    if not os.path.exists(pool_path):
        raise FileNotFoundError("pool.json missing in %s; run pretrain first" % out)
    doc = serialize.load(pool_path)
    serialize.check_digest(doc, cfg.digest, "pool")
    pool = []
    for entry in doc["models"]:
        model, seed, _ = serialize.load_checkpoint(os.path.join(out, "pool", entry["path"]))
        pool.append(
            harness.CandidateModel(entry["model_id"], model, seed, entry["source_metrics"])
        )
    return pool


def cmd_finetune(cfg, out):
    dataset = _load_dataset(cfg, out)
    pool = _load_pool(cfg, out)
    ncp = harness.NcpSpec(cfg.ncp_hidden, cfg.ncp_seed)

    def worker(cand):
        composite = harness.attach_ncp(cand, ncp, dataset.n_classes)
        _, series = harness.finetune_and_observe(
            composite, dataset, cfg.finetune_alpha, cfg.finetune_batch, cfg.epochs,
            cand.seed, cfg.probe_size, cand.model_id,
        )
        return series

    series_list = harness.run_candidates(pool, worker)
    rows = []
    finals = {}
    for series in series_list:
        for rec in series.records:
            rows.append(
                (series.model_id, rec["epoch"], rec["beta_eff"], rec["train_loss"],
                 rec["train_acc"], rec["val_acc"])
            )
        finals[series.model_id] = series.records[-1]["val_acc"]
    obs_path = os.path.join(out, "observations.csv")
    serialize.write_csv(
        obs_path, ("model_id", "epoch", "beta_eff", "train_loss", "train_acc", "val_acc"), rows
    )
    serialize.dump(
        {
            "config_digest": cfg.digest,
            "epochs": cfg.epochs,
            "true_finals": finals,
            "model_ids": sorted(finals),
        },
        os.path.join(out, "finetune.json"),
    )
    return {"written": [obs_path, os.path.join(out, "finetune.json")]}


def _load_observations(cfg, out):
    obs_path = os.path.join(out, "observations.csv")
    meta_path = os.path.join(out, "finetune.json")
    if not (os.path.exists(obs_path) and os.path.exists(meta_path)):
        raise FileNotFoundError("observations missing in %s; run finetune first" % out)
    meta = serialize.load(meta_path)
    serialize.check_digest(meta, cfg.digest, "observations")
    header, rows = serialize.read_csv(obs_path)
    col = {name: header.index(name) for name in header}
    by_model = {}
    for row in rows:
        by_model.setdefault(row[col["model_id"]], []).append(row)
    series_list = []
    for model_id in sorted(by_model):
        series = predictor.ObservationSeries(model_id)
        for row in sorted(by_model[model_id], key=lambda r: int(r[col["epoch"]])):
            series.append(
                int(row[col["epoch"]]),
                float(row[col["beta_eff"]]),
                float(row[col["val_acc"]]),
                train_loss=float(row[col["train_loss"]]),
                train_acc=float(row[col["train_acc"]]),
            )
        series_list.append(series)
    return series_list, meta


def cmd_beta(cfg, out, checkpoint):
    if checkpoint is None:
        raise ValueError("beta needs --checkpoint pointing at a model JSON")
    model, _, _ = serialize.load_checkpoint(checkpoint)
    dataset = _load_dataset(cfg, out)
    x_train, y_train = dataset.split("train")
    n_probe = min(cfg.probe_size, len(x_train))
    if x_train.shape[1] != model.spec.layer_sizes[0]:
        raise ValueError(
            "checkpoint expects %d features, dataset has %d"
            % (model.spec.layer_sizes[0], x_train.shape[1])
        )
    warn = None
    if model.n_layers < capacitance.MIN_PROBE_LAYERS:
        warn = (
            "network has %d weight layers (< %d): beta_eff is identically zero "
            "below three hidden layers" % (model.n_layers, capacitance.MIN_PROBE_LAYERS)
        )
        print("warning: %s" % warn, file=sys.stderr)
    trace = mlp.forward_backward(model, x_train[:n_probe], y_train[:n_probe])
    result = capacitance.beta_mlp(trace)
    doc = {
        "config_digest": cfg.digest,
        "checkpoint": os.path.basename(checkpoint),
        "beta_eff": result.beta_eff,
        "numerator": result.numerator,
        "denominator": result.denominator,
        "epsilon": result.epsilon_used,
        "n_samples": result.n_samples,
        "warning": warn,
    }
    serialize.dump(doc, os.path.join(out, "beta.json"))
    return doc


def _ranking_blocks(cfg, series_list, meta, llc_values):
    finals = meta["true_finals"]
    blocks = []
    for llc in llc_values:
        blocks.append(
            harness.rank_models(series_list, finals, llc, t0_candidates=cfg.t0_candidates)
        )
    return blocks


def cmd_fit_predict(cfg, out, llc_values=None):
    series_list, meta = _load_observations(cfg, out)
    llc_values = llc_values or cfg.llc_values
    written = []
    for llc in llc_values:
        reports = []
        for series in series_list:
            cands = cfg.t0_candidates if cfg.t0_candidates is not None else range(1, llc - 1)
            pred, fits = predictor.predict_series(series, cands, llc)
            post = fits[pred.t0_used]["fit"]
            reports.append(
                {
                    "model_id": series.model_id,
                    "t0": pred.t0_used,
                    "theta": post.theta,
                    "lambda": post.lam,
                    "tau": post.tau,
                    "sigma": post.sigma,
                    "i_star": pred.i_star,
                    "std": pred.std,
                    "bic_table": [
                        {"t0": t0, "n": fits[t0]["n"], "bic": fits[t0]["bic"]}
                        for t0 in sorted(fits)
                    ],
                }
            )
        path = os.path.join(out, "fits_llc%d.json" % llc)
        serialize.dump({"config_digest": cfg.digest, "llc": llc, "fits": reports}, path)
        written.append(path)
    return {"written": written}


def cmd_rank(cfg, out, llc_values=None):
    if not os.path.exists(os.path.join(out, "observations.csv")):
        # convenience: run the upstream stages on a fresh out directory
        cmd_gen_data(cfg, out)
        cmd_pretrain(cfg, out)
        cmd_finetune(cfg, out)
    series_list, meta = _load_observations(cfg, out)
    llc_values = list(llc_values or cfg.llc_values)
    if meta["epochs"] not in llc_values:
        llc_values.append(meta["epochs"])  # full-curve block for the sanity bound
    doc = {
        "config_digest": cfg.digest,
        "epochs": meta["epochs"],
        "seed": cfg.seed,
        "rankings": _ranking_blocks(cfg, series_list, meta, llc_values),
        "reference_scale": REFERENCE_SCALE,
    }
    path = os.path.join(out, "ranking.json")
    serialize.dump(doc, path)
    return {"written": [path], "rho": {"llc=%d" % b["llc"]: b["rho"] for b in doc["rankings"]}}


def cmd_simulate(cfg, out):
    sim = cfg.simulate
    if sim is None:
        raise ValueError("config has no simulate section")
    graph = sim["graph"]
    if graph["kind"] == "k_regular":
        P = meanfield.make_k_regular(int(graph["n"]), int(graph["k"]), float(graph["weight"]))
    elif graph["kind"] == "random":
        rng = np.random.default_rng(cfg.seed)
        n = int(graph["n"])
        P = rng.uniform(0.0, float(graph.get("weight_scale", 1.0)), size=(n, n))
        P *= rng.random((n, n)) < float(graph.get("density", 0.5))
        np.fill_diagonal(P, 0.0)
    else:
        raise ValueError("unknown graph kind %r" % graph["kind"])
    system = meanfield.NetworkedSystem(
        P, sim["f"]["name"], sim["f"].get("params"),
        sim["g"]["name"], sim["g"].get("params"),
    )
    x0 = np.full(system.n, float(sim["x0"]))
    traj = meanfield.simulate(system, x0, sim["dt"], sim["t_max"], sim["tol"])
    beta, reduced, x_eff = meanfield.reduce_mean_field(
        system, float(sim["x0"]), sim["dt"], sim["t_max"], sim["tol"]
    )
    serialize.write_csv(
        os.path.join(out, "trajectory.csv"),
        ("t",) + tuple("x%d" % i for i in range(system.n)),
        [(t,) + tuple(row) for t, row in zip(traj.times, traj.states)],
    )
    serialize.write_csv(
        os.path.join(out, "trajectory_reduced.csv"),
        ("t", "x_av"),
        list(zip(reduced.times, reduced.states)),
    )
    doc = {
        "config_digest": cfg.digest,
        "beta_eff": beta,
        "x_eff": x_eff,
        "converged": traj.converged and reduced.converged,
        "x_final_mean": float(traj.x_final.mean()),
        "n_nodes": system.n,
    }
    serialize.dump(doc, os.path.join(out, "simulate.json"))
    return doc


def cmd_report(cfg, out):
    from . import report as report_mod

    report_dir = os.path.join(out, "report")
    os.makedirs(report_dir, exist_ok=True)
    written = []

    series_list, meta = _load_observations(cfg, out)
    observations = []
    for series in series_list:
        for rec in series.records:
            observations.append(
                {
                    "model_id": series.model_id,
                    "epoch": rec["epoch"],
                    "beta_eff": rec["beta_eff"],
                    "val_acc": rec["val_acc"],
                }
            )
    written += report_mod.write_curve_csvs(observations, report_dir)
    written += report_mod.render_curve_figures(observations, report_dir)

    rank_path = os.path.join(out, "ranking.json")
    if os.path.exists(rank_path):
        ranking = serialize.load(rank_path)
        serialize.check_digest(ranking, cfg.digest, "ranking report")
        written += report_mod.write_prediction_csv(ranking, report_dir)
        written += report_mod.render_ranking_figures(ranking, report_dir)

    traj_path = os.path.join(out, "trajectory.csv")
    if os.path.exists(traj_path):
        header, rows = serialize.read_csv(traj_path)
        times = np.array([float(r[0]) for r in rows])
        states = np.array([[float(v) for v in r[1:]] for r in rows])
        rheader, rrows = serialize.read_csv(os.path.join(out, "trajectory_reduced.csv"))
        rt = np.array([float(r[0]) for r in rrows])
        rx = np.array([float(r[1]) for r in rrows])
        written += report_mod.render_trajectory_figure(times, states, rt, rx, report_dir)

    return {"written": written}


COMMANDS = {
    "gen-data": lambda cfg, args: cmd_gen_data(cfg, args.out),
    "pretrain": lambda cfg, args: cmd_pretrain(cfg, args.out),
    "finetune": lambda cfg, args: cmd_finetune(cfg, args.out),
    "beta": lambda cfg, args: cmd_beta(cfg, args.out, args.checkpoint),
    "fit-predict": lambda cfg, args: cmd_fit_predict(cfg, args.out, args.llc),
    "rank": lambda cfg, args: cmd_rank(cfg, args.out, args.llc),
    "simulate": lambda cfg, args: cmd_simulate(cfg, args.out),
    "report": lambda cfg, args: cmd_report(cfg, args.out),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ncap",
        description="Early-training beta_eff traces for accuracy prediction and model ranking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="config JSON path, or 'demo' for the bundled demo")
        p.add_argument("--out", required=True, help="shared artifact directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name in ("fit-predict", "rank"):
            p.add_argument("--llc", type=lambda s: [int(v) for v in s.split(",")],
                           default=None, help="comma-separated curve prefix lengths")
        if name == "beta":
            p.add_argument("--checkpoint", required=True, help="model checkpoint JSON")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        os.makedirs(args.out, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            result = COMMANDS[args.command](cfg, args)
        sys.stdout.write(serialize.dumps(result))
        return 0
    except Exception as exc:  # argparse handles usage errors before this
        err = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(serialize.dumps(err))
        return 1


if __name__ == "__main__":
    sys.exit(main())
