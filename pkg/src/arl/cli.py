"""Seeded experiment runner and figure-data emitters.

Subcommands: ``train`` (one adaptive run with artifacts), ``ablate``
(fixed / opt1 / opt2 / adaptive comparison), ``losscurve`` (sample a
learned loss on a grid), ``verify-bounds`` (risk-gap sandwich report),
``gen-data`` (write a synthetic dataset to CSV).

Exit codes: 0 success, 2 config error, 3 numeric error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, config as config_mod, data as data_mod, losses, meta, model, theory
from .errors import ConfigError, DataFormatError, DomainError, NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

# cross-validation grids for the fixed-hyperparameter ablation mode;
# lam entries are multiples of log(c)
FIXED_GRIDS = {
    "gce": {"q": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]},
    "sl": {"gamma1": [0.1, 1.0, 10.0], "gamma2": [0.1, 1.0, 10.0]},
    "bi_tempered": {"t1": [0.2, 0.5, 0.8], "t2": [1.2, 1.5, 2.0]},
    "polysoft": {"lam_scale": [0.5, 1.0, 2.0, 4.0], "d": [2.0, 3.0, 5.0]},
}


def _config_hash(raw):
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_json(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def losscurve_table(hyper, num_classes, points=500):
    """Sample the learned loss next to CE and 0-1 reference columns.

    For the probability-based families the x axis is the correct-class
    probability (residual mass spread uniformly); for the soft-weighting
    loss it is the cross-entropy value on [0, 3*lam].
    """
    variant = hyper.variant
    rows = []
    if variant == "polysoft":
        xs = np.linspace(0.0, 3.0 * hyper.lam, points)
        for x in xs:
            learned = losses.polysoft(float(x), hyper.lam, hyper.d).value
            zero_one = 1.0 if x > math.log(2.0) else 0.0
            rows.append((x, zero_one, x, learned))
        return ["x", "zero_one", "ce", "learned"], rows

    xs = np.linspace(0.001, 1.0, points)
    for p in xs:
        ce_ref = -math.log(p)
        zero_one = 1.0 if p < 0.5 else 0.0
        if variant == "ce":
            learned = ce_ref
        elif variant == "gce":
            learned = (1.0 - p**hyper.q) / hyper.q
        elif variant == "sl":
            learned = hyper.gamma1 * ce_ref + hyper.gamma2 * (-hyper.rce_a) * (1.0 - p)
        elif variant == "bi_tempered":
            u = np.full(num_classes, (1.0 - p) / (num_classes - 1))
            u[0] = p
            learned = float(theory.loss_on_simplex("bi_tempered", hyper, u, 0)[0])
        else:
            raise DomainError(f"no loss curve for variant {variant!r}")
        rows.append((p, zero_one, ce_ref, learned))
    return ["x", "zero_one", "ce", "learned"], rows


def emit_losscurve(hyper, num_classes, path, points=500):
    header, rows = losscurve_table(hyper, num_classes, points)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


def _dataset_summary(split, noise):
    return {
        "n_train": len(split.train),
        "n_meta": len(split.meta),
        "n_test": len(split.test),
        "classes": split.train.c,
        "noise": noise["type"],
        "eta": noise["eta"],
        "observed_flip_fraction": float(split.train.flip_mask.mean()),
    }


def run_experiment(exp, out_dir):
    """Train once and write metrics.csv, checkpoint, and manifest.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    split = config_mod.build_datasets(exp)
    tc = config_mod.build_train_config(exp, split.train.c)
    state, rows = meta.arl_train(split.train, split.meta, split.test, tc)

    metrics_path = out_dir / "metrics.csv"
    meta.write_metrics_csv(rows, metrics_path)
    ckpt_path = out_dir / "checkpoint.bin"
    model.save_checkpoint(state.params, ckpt_path)

    artifacts = ["metrics.csv", "checkpoint.bin", "checkpoint.bin.json", "manifest.json"]
    if exp.emit["weights"] and exp.loss["variant"] == "polysoft":
        weights = meta.compute_sample_weights(state.params, state.hyper, split.train)
        meta.write_weights_csv(weights, split.train.flip_mask, out_dir / "weights.csv")
        artifacts.append("weights.csv")
    if exp.emit["losscurve"]:
        emit_losscurve(state.hyper, split.train.c, out_dir / "losscurve.csv")
        artifacts.append("losscurve.csv")

    names = state.hyper.learnable_names
    manifest = {
        "config": exp.raw,
        "config_sha256": _config_hash(exp.raw),
        "seed": exp.seed,
        "versions": {
            "arl": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "variant": exp.loss["variant"],
        "classes": split.train.c,
        "hyper_names": list(names),
        "hyper_initial": list(map(float, tc.init_hyper.learnable_values())),
        "hyper_final": list(map(float, state.hyper.learnable_values())),
        "rce_a": exp.loss["rce_a"],
        "dataset": _dataset_summary(split, exp.noise),
        "final_test_acc": rows[-1].test_acc if rows else None,
        "artifacts": artifacts,
    }
    _write_json(manifest, out_dir / "manifest.json")
    return manifest


def _fixed_grid_hypers(exp, num_classes):
    variant = exp.loss["variant"]
    if variant == "ce":
        raise ConfigError("the ablation needs a loss variant with hyperparameters")
    grid_cfg = exp.ablation.get("grid")
    base = config_mod.initial_hyper(exp, num_classes)
    if grid_cfg:
        names = list(grid_cfg)
        allowed = set(losses.LEARNABLE[variant])
        unknown = set(names) - allowed
        if unknown:
            raise ConfigError(f"ablation.grid keys {sorted(unknown)} not hyperparameters of {variant}")
        combos = itertools.product(*(grid_cfg[n] for n in names))
        return [replace(base, **dict(zip(names, combo))) for combo in combos]
    spec = FIXED_GRIDS[variant]
    if variant == "polysoft":
        return [
            replace(base, lam=s * math.log(num_classes), d=d)
            for s in spec["lam_scale"]
            for d in spec["d"]
        ]
    names = list(spec)
    return [
        replace(base, **dict(zip(names, combo)))
        for combo in itertools.product(*(spec[n] for n in names))
    ]


def run_ablation(exp, modes, out_dir):
    """Compare hyperparameter strategies on one dataset and seed.

    fixed: grid search with the meta set as validation; opt1: retrain
    from scratch with the adaptive run's final hyperparameters; opt2:
    continue conventionally from each adaptive snapshot; adaptive: the
    bilevel run itself.
    """
    known = ("fixed", "opt1", "opt2", "adaptive")
    for mode in modes:
        if mode not in known:
            raise ConfigError(f"unknown ablation mode {mode!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    split = config_mod.build_datasets(exp)
    tc = config_mod.build_train_config(exp, split.train.c)
    total = tc.max_iters

    curves = {}
    summary = {}

    need_adaptive = bool({"adaptive", "opt1", "opt2"} & set(modes))
    snapshots = []
    if need_adaptive:
        state, rows = meta.arl_train(
            split.train, split.meta, split.test, tc,
            snapshot_hook=lambda t, p, h: snapshots.append((t, p, h)),
        )
        if "adaptive" in modes:
            curves["adaptive"] = [(r.iteration, r.test_acc) for r in rows]
            summary["adaptive"] = {
                "final_acc": rows[-1].test_acc,
                "hyper": list(map(float, state.hyper.learnable_values())),
            }

    if "opt1" in modes:
        _, rows1 = meta.conventional_train(split.train, split.test, tc, state.hyper)
        curves["opt1"] = [(r.iteration, r.test_acc) for r in rows1]
        summary["opt1"] = {
            "final_acc": rows1[-1].test_acc,
            "hyper": list(map(float, state.hyper.learnable_values())),
        }

    if "opt2" in modes:
        curve = []
        for t, params, hyper in snapshots:
            if t >= total:
                continue
            _, rows2 = meta.conventional_train(
                split.train, split.test, tc, hyper,
                init_params=params, start_iter=t, num_iters=total - t,
            )
            curve.append((t, rows2[-1].test_acc))
        curves["opt2"] = curve
        summary["opt2"] = {"final_acc": curve[-1][1], "hyper": None}

    if "fixed" in modes:
        best_acc, best_hyper, best_rows = -1.0, None, None
        for cand in _fixed_grid_hypers(exp, split.train.c):
            st, rows_f = meta.conventional_train(split.train, split.test, tc, cand)
            val_acc = model.accuracy(st.params, split.meta.X, split.meta.y)
            if val_acc > best_acc:
                best_acc, best_hyper, best_rows = val_acc, cand, rows_f
        curves["fixed"] = [(r.iteration, r.test_acc) for r in best_rows]
        summary["fixed"] = {
            "final_acc": best_rows[-1].test_acc,
            "hyper": list(map(float, best_hyper.learnable_values())),
            "validation_acc": best_acc,
        }

    _write_ablation_csv(curves, modes, out_dir / "ablation.csv")
    payload = {
        "config_sha256": _config_hash(exp.raw),
        "seed": exp.seed,
        "modes": {m: summary[m] for m in modes},
    }
    _write_json(payload, out_dir / "ablation_summary.json")
    return payload


def _write_ablation_csv(curves, modes, path):
    iters = sorted({t for mode in modes for t, _ in curves[mode]})
    lookup = {mode: dict(curves[mode]) for mode in modes}
    with open(path, "w") as fh:
        fh.write(",".join(["iter", *modes]) + "\n")
        for t in iters:
            cells = [str(t)]
            for mode in modes:
                value = lookup[mode].get(t)
                cells.append("" if value is None else f"{value:.9g}")
            fh.write(",".join(cells) + "\n")


def verify_bounds(exp, out_path=None):
    """Risk-gap sandwich reports for the configured noise rates."""
    t = exp.theory
    c = t.get("classes", 3)
    delta = t.get("delta", 0.02)
    etas = t.get("etas", [0.1, 0.3, 0.6])
    labels = t.get("world_labels", [k % c for k in range(4)])
    variant = t.get("variant", "polysoft")
    hyper_fields = t.get("hyper", {})
    base = losses.default_hyper(variant, c) if variant in ("polysoft", "bi_tempered") else None
    if base is None:
        raise ConfigError(f"verify-bounds supports polysoft and bi_tempered, not {variant!r}")
    hyper = replace(base, **hyper_fields)

    reports = {}
    all_ok = True
    for eta in etas:
        world = theory.FiniteWorld(labels=labels, c=c, delta=delta, eta=eta)
        report = theory.riskgap_verify(world, variant, hyper)
        reports[f"eta={eta:g}"] = report.as_dict()
        all_ok = all_ok and report.noisy_sandwich_ok and report.clean_sandwich_ok
    payload = {
        "variant": variant,
        "classes": c,
        "delta": delta,
        "world_labels": list(map(int, labels)),
        "hyper": {n: getattr(hyper, n) for n in hyper.learnable_names},
        "reports": reports,
        "all_inequalities_hold": bool(all_ok),
    }
    if out_path is not None:
        _write_json(payload, out_path)
    return payload


def gen_data(exp, out_dir):
    """Write the configured dataset (with any noise) to CSV plus manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    ds_cfg = exp.dataset
    if "csv" in ds_cfg:
        clean = data_mod.load_csv(ds_cfg["csv"])
    else:
        clean = data_mod.gen_blobs(
            ds_cfg["n"], ds_cfg["classes"], ds_cfg["dim"], ds_cfg["spread"], ds_cfg["seed"]
        )
    noisy = config_mod._apply_noise(clean, exp.noise) if exp.noise["type"] != "none" else clean
    data_mod.write_csv(noisy, out_dir / "dataset.csv")
    manifest = {
        "count": len(clean),
        "classes": clean.c,
        "noise": exp.noise["type"],
        "eta": exp.noise["eta"],
        "seed": ds_cfg["seed"],
        "noise_seed": exp.noise["seed"],
    }
    if exp.noise["type"] != "none":
        with open(out_dir / "clean_labels.csv", "w") as fh:
            fh.write("sample_id,clean_label\n")
            for i, label in enumerate(noisy.y_clean):
                fh.write(f"{i},{int(label)}\n")
        manifest["observed_flip_fraction"] = float(noisy.flip_mask.mean())
    _write_json(manifest, out_dir / "manifest.json")
    return manifest


def _build_parser():
    parser = argparse.ArgumentParser(prog="arl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one adaptive training experiment")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", default="runs/train")

    p_abl = sub.add_parser("ablate", help="compare hyperparameter strategies")
    p_abl.add_argument("--config", required=True)
    p_abl.add_argument("--modes", default="fixed,opt1,opt2,adaptive")
    p_abl.add_argument("--seed", type=int, default=None)
    p_abl.add_argument("--out", default="runs/ablation")

    p_curve = sub.add_parser("losscurve", help="sample a trained loss on a grid")
    p_curve.add_argument("--checkpoint", required=True,
                         help="run directory or manifest.json of a training run")
    p_curve.add_argument("--out", required=True)

    p_verify = sub.add_parser("verify-bounds", help="check the risk-gap sandwich bounds")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--out", default=None)

    p_gen = sub.add_parser("gen-data", help="generate a dataset CSV")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out", default="runs/data")
    return parser


def _cmd_train(args):
    exp = config_mod.load_config(args.config, args.seed)
    _require_files(exp)
    manifest = run_experiment(exp, Path(args.out))
    print(f"final test accuracy {manifest['final_test_acc']:.4f} -> {args.out}")
    return EXIT_OK


def _require_files(exp):
    csv = exp.dataset.get("csv")
    if csv is not None and not Path(csv).exists():
        raise ConfigError(f"dataset csv not found: {csv}")


def _cmd_ablate(args):
    exp = config_mod.load_config(args.config, args.seed)
    _require_files(exp)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    if not modes:
        raise ConfigError("no ablation modes given")
    payload = run_ablation(exp, modes, Path(args.out))
    for mode in modes:
        print(f"{mode}: final accuracy {payload['modes'][mode]['final_acc']:.4f}")
    return EXIT_OK


def _cmd_losscurve(args):
    path = Path(args.checkpoint)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    variant = manifest["variant"]
    base = losses.default_hyper(variant, manifest["classes"]) if variant != "ce" else losses.HyperParams("ce")
    fields = dict(zip(manifest["hyper_names"], manifest["hyper_final"]))
    fields["rce_a"] = manifest.get("rce_a", -4.0)
    hyper = replace(base, **fields)
    emit_losscurve(hyper, manifest["classes"], args.out)
    print(f"loss curve -> {args.out}")
    return EXIT_OK


def _cmd_verify(args):
    exp = config_mod.load_config(args.config)
    payload = verify_bounds(exp, args.out)
    print(json.dumps(payload, indent=1, sort_keys=True))
    return EXIT_OK if payload["all_inequalities_hold"] else EXIT_NUMERIC


def _cmd_gen_data(args):
    exp = config_mod.load_config(args.config)
    _require_files(exp)
    manifest = gen_data(exp, Path(args.out))
    print(f"wrote {manifest['count']} samples ({manifest['classes']} classes) -> {args.out}")
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "ablate": _cmd_ablate,
        "losscurve": _cmd_losscurve,
        "verify-bounds": _cmd_verify,
        "gen-data": _cmd_gen_data,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
