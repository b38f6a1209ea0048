"""Command-line driver: dataset generation, training, evaluation, sweeps,
and plotting.

Subcommands: gen | train | eval | sweep | plot.  Exit codes: 0 ok,
1 usage/config error, 2 numerical failure, 3 missing artifact.  Every
command is deterministic given its config and seed; result CSVs carry a
run id derived from both and are appended to, never overwritten.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np
import torch
import yaml

from . import profiles
from .baselines import build_model, random_beamformer, reference_beamformer
from .channel import PerturbationSpec, load_dataset, perturb, save_dataset, synth_channels
from .errors import CoisacError, ConfigError, MissingCheckpoint, NonFiniteLoss
from .scenario import ScenarioConfig, load_scenario
from .training import (TrainConfig, default_gamma, evaluate_beams,
                       load_model_checkpoint, model_beams,
                       save_model_checkpoint, train)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_MISSING = 3

LEARNED_METHODS = ("lhgnn", "lhgnn_no_attention", "homo_gnn", "naive_conv")
STATIC_METHODS = ("reference", "random")
ALL_METHODS = LEARNED_METHODS + STATIC_METHODS

RESULT_COLUMNS = ("run_id", "method", "axis", "value", "seed",
                  "mean_sum_rate", "mean_speb", "viol_speb_frac")


def _resolve_scenario(args) -> ScenarioConfig:
    if getattr(args, "config", None):
        return load_scenario(args.config)
    return profiles.scenario_profile(args.profile)


def _resolve_train_config(args) -> TrainConfig:
    tcfg = profiles.train_profile(args.profile)
    if getattr(args, "epochs", None) is not None:
        tcfg.epochs = args.epochs
    if getattr(args, "seed", None) is not None:
        tcfg.seed = args.seed
    return tcfg


def cmd_gen(args) -> int:
    cfg = _resolve_scenario(args)
    n = args.n if args.n is not None else profiles.dataset_size(args.profile)
    samples = synth_channels(cfg, n, seed=args.seed or 0)
    save_dataset(args.out, samples, cfg)
    print(f"wrote {args.out}: n_bs={cfg.n_bs} n_users={cfg.n_users} "
          f"n_targets={cfg.n_targets} n_antennas={cfg.n_antennas} samples={n}")
    return EXIT_OK


def _train_one(cfg, samples, method, tcfg, schedule, out_dir, tag="",
               head_width=None):
    torch.manual_seed(tcfg.seed)
    model = build_model(method, cfg, schedule=schedule, head_width=head_width)
    model, report = train(model, samples, cfg, tcfg)
    os.makedirs(out_dir, exist_ok=True)
    stem = f"{method}{tag}_s{tcfg.seed}"
    ckpt = os.path.join(out_dir, stem + ".ckpt")
    save_model_checkpoint(ckpt, model, optimizer=report.optimizer,
                          extra={"epoch": tcfg.epochs, "seed": tcfg.seed,
                                 "gamma": report.meta["gamma"]})
    report.write_csv(os.path.join(out_dir, stem + "_report.csv"))
    return model, report, ckpt


def cmd_train(args) -> int:
    cfg = _resolve_scenario(args)
    samples = load_dataset(args.dataset, cfg)
    tcfg = _resolve_train_config(args)
    if args.csi_snr_db is not None or args.pos_err is not None:
        lo, hi = args.pos_err or (0.0, 0.0)
        tcfg.perturbation = PerturbationSpec(
            csi_snr_db=args.csi_snr_db if args.csi_snr_db is not None else np.inf,
            pos_err_lo=lo, pos_err_hi=hi, seed=tcfg.seed + 1)
    schedule = profiles.PROFILES[args.profile]["schedule"]
    head_width = profiles.PROFILES[args.profile]["head_width"]
    if args.resume:
        model, header, opt_tensors = load_model_checkpoint(args.resume)
        from .training import resume_optimizer
        optimizer = resume_optimizer(model, opt_tensors, tcfg)
        start = header.get("extra", {}).get("epoch", 0) + 1
        model, report = train(model, samples, cfg, tcfg,
                              optimizer=optimizer, start_epoch=start)
        os.makedirs(args.out, exist_ok=True)
        stem = f"{args.method}_s{tcfg.seed}"
        save_model_checkpoint(os.path.join(args.out, stem + ".ckpt"), model,
                              optimizer=report.optimizer,
                              extra={"epoch": tcfg.epochs, "seed": tcfg.seed,
                                     "gamma": report.meta["gamma"]})
        report.write_csv(os.path.join(args.out, stem + "_report.csv"))
    else:
        model, report, ckpt = _train_one(cfg, samples, args.method, tcfg,
                                         schedule, args.out,
                                         head_width=head_width)
        print(f"checkpoint: {ckpt}")
    last = report.records[-1] if report.records else {}
    print(f"trained {args.method}: epochs={tcfg.epochs} "
          f"final_loss={last.get('loss', float('nan')):.4f} "
          f"mean_rate={last.get('mean_rate', float('nan')):.4f}")
    return EXIT_OK


def _beams_for_method(method, samples, cfg, seed, ckpt_path=None,
                      feature_samples=None):
    """Beams per sample; ``feature_samples`` (noisy twins) are what any
    method gets to see, metrics downstream still use the clean samples."""
    inputs = feature_samples if feature_samples is not None else samples
    if method == "reference":
        return np.stack([reference_beamformer(s, cfg) for s in inputs])
    if method == "random":
        rng_beams = random_beamformer(seed, cfg)
        return np.repeat(rng_beams[None], len(samples), axis=0)
    if ckpt_path is None or not os.path.exists(ckpt_path or ""):
        raise MissingCheckpoint(f"({method}) needs a checkpoint: {ckpt_path}")
    model, _, _ = load_model_checkpoint(ckpt_path)
    return model_beams(model, samples, cfg, feature_samples=feature_samples)


def cmd_eval(args) -> int:
    cfg = _resolve_scenario(args)
    samples = load_dataset(args.dataset, cfg)
    gamma = args.gamma if args.gamma is not None else default_gamma(
        cfg, samples[:max(16, min(64, len(samples)))])
    beams = _beams_for_method(args.method, samples, cfg, args.seed or 0,
                              ckpt_path=args.checkpoint)
    metrics = evaluate_beams(beams, samples, cfg, gamma=gamma)
    metrics["gamma"] = gamma
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _load_sweep_spec(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        spec = yaml.safe_load(fh)
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: sweep spec must be a mapping")
    for key in ("methods", "axis", "values"):
        if key not in spec:
            raise ConfigError(f"{path}: sweep spec missing {key!r}")
    if spec["axis"] not in ("power_dbm", "csi_snr_db", "pos_err_m"):
        raise ConfigError(f"{path}: unknown sweep axis {spec['axis']!r}")
    if not spec["methods"] or not spec["values"]:
        raise ConfigError(f"{path}: methods and values must be nonempty")
    unknown = set(spec["methods"]) - set(ALL_METHODS)
    if unknown:
        raise ConfigError(f"{path}: unknown methods {sorted(unknown)}")
    spec.setdefault("profile", "smoke")
    spec.setdefault("seeds", 1)
    spec.setdefault("out", "sweep_out")
    spec.setdefault("n_eval", 64)
    spec.setdefault("n_train", None)
    spec.setdefault("master_seed", 0)
    spec.setdefault("epochs", None)    # overrides the profile for inline training
    return spec


def _run_id(spec: dict) -> str:
    payload = json.dumps(spec, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def _point_config(cfg, axis, value):
    if axis == "power_dbm":
        return cfg.with_power_dbm(float(value))
    return cfg   # csi/pos-error axes perturb inputs, not the scenario


def _point_perturbation(axis, value, seed):
    if axis == "csi_snr_db":
        return PerturbationSpec(csi_snr_db=float(value), pos_err_lo=2.0,
                                pos_err_hi=3.0, seed=seed)
    if axis == "pos_err_m":
        return PerturbationSpec(csi_snr_db=20.0, pos_err_lo=float(value),
                                pos_err_hi=float(value) + 1.0, seed=seed)
    return None


def _sweep_checkpoint_path(out, method, axis, value, seed):
    return os.path.join(out, "checkpoints", f"{method}_{axis}{value:g}_s{seed}.ckpt")


def cmd_sweep(args) -> int:
    spec = _load_sweep_spec(args.spec)
    run_id = _run_id(spec)
    cfg0 = load_scenario(spec["scenario"]) if "scenario" in spec \
        else profiles.scenario_profile(spec["profile"])
    out = spec["out"]
    os.makedirs(out, exist_ok=True)

    n_train = spec["n_train"] or profiles.dataset_size(spec["profile"])
    train_samples = synth_channels(cfg0, n_train, seed=spec["master_seed"])
    eval_samples = synth_channels(cfg0, spec["n_eval"],
                                  seed=spec["master_seed"] + 7919)
    gamma0 = default_gamma(cfg0, train_samples[:max(16, min(64, n_train))])

    missing = []
    if not args.train_inline:
        for method in spec["methods"]:
            if method in STATIC_METHODS:
                continue
            for value in spec["values"]:
                for s_off in range(spec["seeds"]):
                    path = _sweep_checkpoint_path(out, method, spec["axis"],
                                                  value, spec["master_seed"] + s_off)
                    if not os.path.exists(path):
                        missing.append((method, value, s_off))
        if missing:
            raise MissingCheckpoint(
                "missing checkpoints (run with --train-inline or train first): "
                + ", ".join(f"{m}@{v}/seed+{s}" for m, v, s in missing))

    rows = []
    for value in spec["values"]:
        cfg = _point_config(cfg0, spec["axis"], value)
        gamma = gamma0 if spec["axis"] != "power_dbm" else default_gamma(
            cfg, train_samples[:max(16, min(64, n_train))])
        for method in spec["methods"]:
            for s_off in range(spec["seeds"]):
                seed = spec["master_seed"] + s_off
                pert = _point_perturbation(spec["axis"], value, seed + 13)
                feature_samples = ([perturb(s, pert, cfg) for s in eval_samples]
                                   if pert else None)
                if method in STATIC_METHODS:
                    beams = _beams_for_method(method, eval_samples, cfg, seed,
                                              feature_samples=feature_samples)
                else:
                    ckpt = _sweep_checkpoint_path(out, method, spec["axis"],
                                                  value, seed)
                    if args.train_inline and not os.path.exists(ckpt):
                        tcfg = profiles.train_profile(spec["profile"])
                        if spec["epochs"]:
                            tcfg.epochs = int(spec["epochs"])
                        tcfg.seed = seed
                        tcfg.speb_limit = gamma
                        tcfg.perturbation = pert
                        torch.manual_seed(seed)
                        model = build_model(
                            method, cfg,
                            schedule=profiles.PROFILES[spec["profile"]]["schedule"],
                            head_width=profiles.PROFILES[spec["profile"]]["head_width"])
                        model, _ = train(model, train_samples, cfg, tcfg)
                        os.makedirs(os.path.dirname(ckpt), exist_ok=True)
                        save_model_checkpoint(ckpt, model,
                                              extra={"seed": seed, "gamma": gamma,
                                                     "axis": spec["axis"],
                                                     "value": value})
                    beams = _beams_for_method(method, eval_samples, cfg, seed,
                                              ckpt_path=ckpt,
                                              feature_samples=feature_samples)
                metrics = evaluate_beams(beams, eval_samples, cfg, gamma=gamma)
                rows.append({
                    "run_id": run_id, "method": method, "axis": spec["axis"],
                    "value": value, "seed": seed,
                    "mean_sum_rate": metrics["mean_sum_rate"],
                    "mean_speb": metrics["mean_speb"],
                    "viol_speb_frac": metrics["viol_speb_frac"],
                })
    rows.sort(key=lambda r: (r["method"], r["value"], r["seed"]))
    csv_path = os.path.join(out, "results.csv")
    new_file = not os.path.exists(csv_path)
    with open(csv_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        if new_file:
            writer.writeheader()
        writer.writerows(rows)
    print(f"appended {len(rows)} rows to {csv_path} (run_id {run_id})")
    if getattr(args, "plot", False):
        _safe_plot(csv_path, out)
    return EXIT_OK


def _safe_plot(csv_path, out_dir):
    try:
        _plot_results(csv_path, out_dir)
    except Exception as exc:   # plotting is best-effort by contract
        print(f"plotting skipped: {exc}", file=sys.stderr)


def _plot_results(csv_path, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("no rows to plot")
    axis = rows[0]["axis"]
    for metric, fname in (("mean_sum_rate", "rate"), ("mean_speb", "speb")):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for method in sorted({r["method"] for r in rows}):
            pts = {}
            for r in rows:
                if r["method"] != method:
                    continue
                pts.setdefault(float(r["value"]), []).append(float(r[metric]))
            xs = sorted(pts)
            ys = [np.mean(pts[x]) for x in xs]
            ax.plot(xs, ys, marker="o", label=method)
        ax.set_xlabel(axis)
        ax.set_ylabel(metric)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{fname}_vs_{axis}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        print(f"wrote {path}")


def cmd_plot(args) -> int:
    if not os.path.exists(args.results):
        raise MissingCheckpoint(f"results file not found: {args.results}")
    os.makedirs(args.out, exist_ok=True)
    _safe_plot(args.results, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coisac",
        description="Cooperative ISAC beamforming experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="scenario YAML (overrides --profile)")
        p.add_argument("--profile", choices=sorted(profiles.PROFILES),
                       default="smoke", help="built-in scenario profile")
        p.add_argument("--seed", type=int, default=None, help="master seed")

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset")
    add_common(p_gen)
    p_gen.add_argument("--out", required=True, help="output dataset path")
    p_gen.add_argument("--n", type=int, default=None, help="sample count")
    p_gen.set_defaults(func=cmd_gen)

    p_train = sub.add_parser("train", help="train one method")
    add_common(p_train)
    p_train.add_argument("--dataset", required=True)
    p_train.add_argument("--method", choices=LEARNED_METHODS, default="lhgnn")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--resume", help="checkpoint to resume from")
    p_train.add_argument("--csi-snr-db", type=float, default=None,
                         help="train with noisy channel inputs at this SNR")
    p_train.add_argument("--pos-err", type=float, nargs=2, metavar=("LO", "HI"),
                         default=None, help="train with noisy target position")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate one method on a dataset")
    add_common(p_eval)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--method", choices=ALL_METHODS, required=True)
    p_eval.add_argument("--checkpoint", help="checkpoint for learned methods")
    p_eval.add_argument("--gamma", type=float, default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="run a sweep experiment spec")
    p_sweep.add_argument("--spec", required=True, help="sweep YAML")
    p_sweep.add_argument("--train-inline", action="store_true",
                         help="train missing checkpoints on the fly")
    p_sweep.add_argument("--plot", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_plot = sub.add_parser("plot", help="plot a results CSV")
    p_plot.add_argument("--results", required=True)
    p_plot.add_argument("--out", default=".")
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (NonFiniteLoss,) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MissingCheckpoint as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, CoisacError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
