"""Command-line front end: simulate, rank, select, fit, experiment, design, report.

Every command reads an experiment config (``--config`` or the CAFIM_CONFIG
environment variable), runs one module pipeline, and writes a report JSON
embedding the resolved config.  Reports are byte-identical across reruns with
the same seeds except for the timestamp field.  Exit codes: 0 success, 1
invalid inputs, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io as cafim_io
from .contact_model import ContactParams
from .curate import info_orthogonal_select, random_select, rank
from .design import DesignSettings, fit_initial_distribution, generate_dataset
from .dynamics import Trajectory, rollout
from .errors import NumericalError, ValidationError
from .estimate import curation_experiment, eval_metrics, fit
from .fisher import empirical_fim, reduce_fim
from .loss import score_dataset

_METHOD_ALIASES = {"info-orth": "info_orthogonal", "info_orthogonal": "info_orthogonal"}


def _method(name: str) -> str:
    return _METHOD_ALIASES.get(name, name)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x != ""]
    except ValueError as err:
        raise ValidationError(f"expected a comma-separated integer list, got {text!r}") from err


def _load_config(args) -> cafim_io.ExperimentConfig:
    path = args.config or os.environ.get("CAFIM_CONFIG")
    if not path:
        raise ValidationError("no config given: pass --config or set CAFIM_CONFIG")
    return cafim_io.load_config(path)


def _params_for(args, config) -> ContactParams:
    if getattr(args, "params", None):
        return cafim_io.load_params(args.params, vertex_bound=config.fit.vertex_bound)
    return config.params


def _fim_summary(scores) -> dict:
    fim = empirical_fim(scores, "mean")
    return {
        "trace": reduce_fim(fim, "trace"),
        "mineig": reduce_fim(fim, "mineig"),
        "logdet": reduce_fim(fim, "logdet"),
        "n_samples": fim.n_samples,
    }


def cmd_simulate(args) -> int:
    config = _load_config(args)
    seed = args.seed if args.seed is not None else config.seed
    trajectories = []
    for i in range(args.n):
        rng = np.random.default_rng(cafim_io.child_seed(seed, cafim_io.STREAM_SIMULATE, i))
        x0 = config.sim.toss.sample(rng)
        traj = rollout(
            x0,
            config.params,
            config.sim.dt,
            config.sim.horizon,
            config.world,
            config.solver,
            traj_id=f"toss_{i:03d}",
        )
        trajectories.append(traj)
    manifest_path = cafim_io.write_dataset(trajectories, config.world, args.out)
    report_path = os.path.join(args.out, "simulate_report.json")
    cafim_io.write_report(
        report_path,
        "simulate",
        config,
        {
            "seed": seed,
            "n": args.n,
            "manifest": str(manifest_path),
            "ids": [t.id for t in trajectories],
        },
    )
    print(f"wrote {args.n} trajectories and manifest to {args.out}")
    return 0


def cmd_rank(args) -> int:
    config = _load_config(args)
    dataset, world, _ = cafim_io.load_dataset(args.manifest)
    params = _params_for(args, config)
    method = _method(args.method or config.reduction)
    k = args.k or config.k_thresh
    scores = score_dataset(dataset, params, world, config.loss, threads=args.threads)
    if method == "info_orthogonal":
        raise ValidationError("rank expects a matrix reduction; use `select` for info-orth")
    from .curate import rank_from_scores

    result = rank_from_scores(scores, method, k)
    results = {
        "method": result.method,
        "phi_fallback": result.phi_fallback,
        "k_thresh": result.k_thresh,
        "indices": result.ordered_indices,
        "ids": [dataset[i].id for i in result.ordered_indices],
        "values": result.values,
        "fim_summary": _fim_summary(scores),
    }
    cafim_io.write_report(args.out, "rank", config, results)
    print(f"ranked top {k} of {len(dataset)} trajectories by {method} -> {args.out}")
    return 0


def cmd_select(args) -> int:
    config = _load_config(args)
    dataset, world, _ = cafim_io.load_dataset(args.manifest)
    params = _params_for(args, config)
    method = _method(args.method)
    k = args.k or config.k_thresh
    seed = args.seed if args.seed is not None else config.seed
    if method == "random":
        result = random_select(len(dataset), k, cafim_io.child_seed(seed, cafim_io.STREAM_SELECT))
    elif method == "info_orthogonal":
        result = info_orthogonal_select(dataset, params, k, world, config.loss, threads=args.threads)
    else:
        result = rank(dataset, params, method, k, world, config.loss, threads=args.threads)
    results = {
        "method": result.method,
        "k": k,
        "seed": seed,
        "indices": result.ordered_indices,
        "ids": [dataset[i].id for i in result.ordered_indices],
        "values": result.values,
    }
    cafim_io.write_report(args.out, "select", config, results)
    print(f"selected {k} of {len(dataset)} trajectories via {method} -> {args.out}")
    return 0


def cmd_fit(args) -> int:
    config = _load_config(args)
    dataset, world, _ = cafim_io.load_dataset(args.manifest)
    theta0 = _params_for(args, config)
    if args.indices:
        subset = [dataset[i] for i in _int_list(args.indices)]
    elif args.method:
        method = _method(args.method)
        k = args.k or config.k_thresh
        if method == "random":
            seed = args.seed if args.seed is not None else config.seed
            picks = random_select(len(dataset), k, cafim_io.child_seed(seed, cafim_io.STREAM_SELECT))
        elif method == "info_orthogonal":
            picks = info_orthogonal_select(dataset, theta0, k, world, config.loss)
        else:
            picks = rank(dataset, theta0, method, k, world, config.loss)
        subset = [dataset[i] for i in picks.ordered_indices]
    else:
        subset = dataset
    report = fit(subset, theta0, config.fit, world, config.loss)
    metrics = eval_metrics(report.theta_hat, subset, world, config.solver)
    if args.out_params:
        cafim_io.save_params(report.theta_hat, args.out_params)
    results = {
        "n_subset": len(subset),
        "loss_history": report.loss_history,
        "final_loss": report.loss_history[-1],
        "theta_hat": [float(x) for x in report.theta_hat.flatten()],
        "train_metrics": metrics.as_dict(),
    }
    cafim_io.write_report(args.out, "fit", config, results)
    print(f"fitted on {len(subset)} trajectories; final loss {report.loss_history[-1]:.3e}")
    return 0


def _split_dataset(dataset, seed: int, train_frac: float = 0.8):
    rng = np.random.default_rng(cafim_io.child_seed(seed, cafim_io.STREAM_EXPERIMENT))
    order = rng.permutation(len(dataset))
    n_train = max(1, int(round(train_frac * len(dataset))))
    n_train = min(n_train, len(dataset) - 1)
    train = [dataset[i] for i in order[:n_train]]
    test = [dataset[i] for i in order[n_train:]]
    return train, test


def cmd_experiment(args) -> int:
    config = _load_config(args)
    dataset, world, _ = cafim_io.load_dataset(args.manifest)
    theta0 = _params_for(args, config)
    sizes = _int_list(args.sizes)
    methods = [_method(m) for m in args.methods.split(",") if m]
    seeds = _int_list(args.seeds)
    train, test = _split_dataset(dataset, config.seed)
    truth = config.params if args.truth_from_config else None
    table = curation_experiment(
        train,
        test,
        theta0,
        sizes,
        methods,
        seeds,
        world,
        config.fit,
        config.loss,
        truth=truth,
        solver=config.solver,
    )
    cells = [
        {
            "size": c.size,
            "method": c.method,
            "seed": c.seed,
            "selected_indices": c.selected_indices,
            "vertex_rmse": c.vertex_rmse,
            "final_loss": c.final_loss,
            **c.metrics.as_dict(),
        }
        for c in table.cells
    ]
    aggregates = table.aggregate()
    cafim_io.write_report(
        args.out, "experiment", config, {"cells": cells, "aggregates": aggregates}
    )
    if args.out_csv:
        header = list(cells[0].keys()) if cells else []
        header = [h for h in header if h != "selected_indices"]
        rows = [[c[h] if c[h] is not None else "" for h in header] for c in cells]
        cafim_io.write_csv(args.out_csv, header, rows)
    print(f"experiment table with {len(cells)} cells -> {args.out}")
    return 0


def cmd_design(args) -> int:
    config = _load_config(args)
    theta = _params_for(args, config)
    if args.manifest:
        dataset, world, _ = cafim_io.load_dataset(args.manifest)
        dist = fit_initial_distribution(dataset)
    else:
        world = config.world
        dist = config.sim.toss
    design = config.design
    if args.n_candidates:
        design = DesignSettings(
            n_candidates=args.n_candidates,
            horizon=design.horizon,
            dt=design.dt,
            phi_kind=design.phi_kind,
            cem_rounds=design.cem_rounds,
            cem_top_frac=design.cem_top_frac,
            refit_between=design.refit_between,
        )
    seed = args.seed if args.seed is not None else config.seed
    trajectories = generate_dataset(
        args.n_exp,
        dist,
        theta,
        design,
        world,
        config.solver,
        config.loss,
        seed=cafim_io.child_seed(seed, cafim_io.STREAM_DESIGN),
    )
    manifest_path = cafim_io.write_dataset(trajectories, world, args.out)
    audit = [
        {"id": t.id, **{k: v for k, v in t.meta.items()}}
        for t in trajectories
    ]
    cafim_io.write_report(
        os.path.join(args.out, "design_report.json"),
        "design",
        config,
        {"seed": seed, "n_exp": args.n_exp, "manifest": str(manifest_path), "designs": audit},
    )
    print(f"designed {args.n_exp} tosses -> {args.out}")
    return 0


def cmd_report(args) -> int:
    payload = cafim_io.load_report(args.report)
    command = payload["command"]
    results = payload["results"]
    print(f"report: {command} ({payload['timestamp']})")
    if command == "experiment":
        header = ["size", "method", "n_seeds", "traj_pos_error_mean", "traj_pos_error_var"]
        print("  ".join(f"{h:>22}" for h in header))
        for row in results["aggregates"]:
            print("  ".join(f"{row.get(h, ''):>22}" for h in header))
        if args.out_csv:
            agg = results["aggregates"]
            cols = sorted({k for row in agg for k in row})
            rows = [[row.get(c, "") for c in cols] for row in agg]
            cafim_io.write_csv(args.out_csv, cols, rows)
            print(f"plot-ready CSV -> {args.out_csv}")
    elif command in ("rank", "select"):
        for idx, value, tid in zip(results["indices"], results["values"], results["ids"]):
            print(f"{idx:>6} {tid:>16} {value:.6e}")
        if args.out_csv:
            cafim_io.write_csv(
                args.out_csv,
                ["index", "id", "value"],
                list(map(list, zip(results["indices"], results["ids"], results["values"]))),
            )
    else:
        for key, value in results.items():
            if not isinstance(value, (list, dict)):
                print(f"{key}: {value}")
        if args.out_csv and command == "fit":
            cafim_io.write_csv(
                args.out_csv,
                ["epoch", "loss"],
                [[i, v] for i, v in enumerate(results["loss_history"])],
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cafim",
        description="Rank, curate and design contact-trajectory datasets by Fisher information.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest=True):
        p.add_argument("--config", help="experiment config JSON (or CAFIM_CONFIG env var)")
        p.add_argument("--threads", type=int, default=1, help="worker cap for score evaluation")
        if manifest:
            p.add_argument("--manifest", required=True, help="dataset manifest JSON")

    p = sub.add_parser("simulate", help="generate synthetic tosses and a manifest")
    add_common(p, manifest=False)
    p.add_argument("--n", type=int, required=True, help="number of tosses")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rank", help="rank a dataset by per-toss information")
    add_common(p)
    p.add_argument("--method", choices=["trace", "logdet", "mineig", "det"], default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--params", help="parameter JSON to rank at (defaults to config params)")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("select", help="select a subset (info-orth or random baseline)")
    add_common(p)
    p.add_argument(
        "--method",
        choices=["trace", "logdet", "mineig", "info-orth", "random"],
        required=True,
    )
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--params", help="parameter JSON to score at")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("fit", help="fit parameters on a (curated) dataset")
    add_common(p)
    p.add_argument("--indices", help="explicit comma-separated subset indices")
    p.add_argument("--method", choices=["trace", "logdet", "mineig", "info-orth", "random"])
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--params", help="initial parameter JSON (defaults to config params)")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--out-params", help="write the fitted parameter JSON here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", help="size x method x seed curation study")
    add_common(p)
    p.add_argument("--sizes", required=True, help="comma-separated subset sizes")
    p.add_argument("--methods", required=True, help="comma-separated methods")
    p.add_argument("--seeds", required=True, help="comma-separated seeds")
    p.add_argument("--params", help="initial parameter JSON (defaults to config params)")
    p.add_argument(
        "--truth-from-config",
        action="store_true",
        help="treat the config params as ground truth for vertex RMSE",
    )
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--out-csv", help="also write the per-cell table as CSV")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("design", help="optimize initial tosses and execute them")
    p.add_argument("--config", help="experiment config JSON (or CAFIM_CONFIG env var)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--manifest", help="fit the toss distribution from this dataset")
    p.add_argument("--n-exp", type=int, required=True, help="number of designed tosses")
    p.add_argument("--n-candidates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--params", help="parameter JSON to design at")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("report", help="render an existing report")
    p.add_argument("report", help="report JSON path")
    p.add_argument("--out-csv", help="plot-ready CSV output path")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
