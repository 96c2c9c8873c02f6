"""``lapembed`` command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 I/O or config error,
3 numerical divergence during training.
"""

import argparse
import json
import os
import sys

from . import config, verify
from .data import LabeledDataset, gen_synth, load_dataset, save_dataset, split_identities
from .linalg import InvalidInput, pairwise_sq_dist
from .net import MODE_LABELS, intra_inter_ratio, load_checkpoint, save_checkpoint
from .retrieval import evaluate, load_features_binary
from .trainer import DivergenceError, embed, epoch_means, feature_ratio, train, write_log

EXIT_OK, EXIT_VERIFY, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _prepare(args, command):
    overrides = [
        ("run", "seed", args.seed),
        ("paths", "out", args.out),
        ("paths", "dataset", args.dataset),
        ("paths", "checkpoint", args.checkpoint),
        ("paths", "features", getattr(args, "features", None)),
        ("train", "mode", args.mode),
    ]
    for item in args.set or ():
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise config.ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides.append((section.strip(), name.strip(), value.strip()))
    cp = config.load(args.config, overrides)
    out = cp.get("paths", "out")
    os.makedirs(out, exist_ok=True)
    _write(os.path.join(out, f"{command}.config.ini"), config.dumps(cp))
    return cp, out


def _path(cp, key, out, default_name):
    return cp.get("paths", key) or os.path.join(out, default_name)


def cmd_gen_data(args):
    cp, out = _prepare(args, "gen-data")
    cfg = config.synth_config(cp)
    ds = gen_synth(cfg)
    path = _path(cp, "dataset", out, "dataset.csv")
    save_dataset(ds, path, cfg)
    print(f"identities={len(ds.identities)} samples={len(ds)} dim={ds.dim} -> {path}")
    return EXIT_OK


def cmd_train(args):
    cp, out = _prepare(args, "train")
    cfg = config.train_config(cp)
    ds = load_dataset(_path(cp, "dataset", out, "dataset.csv")).validate()
    train_ds, _ = split_identities(ds, config.n_test_identities(cp))
    log_path = os.path.join(out, "train_log.csv")
    try:
        params, log = train(train_ds, cfg)
    except DivergenceError as exc:
        write_log(exc.log, log_path)
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_log(log, log_path)
    ckpt = _path(cp, "checkpoint", out, "checkpoint.bin")
    save_checkpoint(params, ckpt)
    last = [row for row in log if row["epoch"] == log[-1]["epoch"]]
    summary = {
        "mode": cfg.mode,
        "mode_label": MODE_LABELS[cfg.mode],
        "iterations": len(log),
        "final_total_loss": sum(r["total_loss"] for r in last) / len(last),
        "final_softmax_loss": sum(r["softmax_loss"] for r in last) / len(last),
        "final_laplacian_loss": sum(r["laplacian_loss"] for r in last) / len(last),
        "train_intra_inter_ratio": feature_ratio(params, train_ds),
        "epoch_total_loss": epoch_means(log),
        "checkpoint": ckpt,
    }
    _write(os.path.join(out, "train_summary.json"), _dump_json(summary))
    print(f"[{MODE_LABELS[cfg.mode]}] {len(log)} iterations, final loss {summary['final_total_loss']:.4f} -> {ckpt}")
    return EXIT_OK


def _eval_features(cp, out):
    feats_path = cp.get("paths", "features")
    if feats_path:
        if feats_path.endswith(".csv"):
            return load_dataset(feats_path)
        return load_features_binary(feats_path)
    ds = load_dataset(_path(cp, "dataset", out, "dataset.csv")).validate()
    _, test_ds = split_identities(ds, config.n_test_identities(cp))
    params = load_checkpoint(_path(cp, "checkpoint", out, "checkpoint.bin"))
    return LabeledDataset(embed(params, test_ds.features), test_ds.labels, test_ds.views)


def cmd_eval(args):
    cp, out = _prepare(args, "eval")
    opts = config.eval_options(cp)
    feats = _eval_features(cp, out)
    report = evaluate(feats.features, feats.labels, feats.views, opts["trials"], opts["seed"], opts["ranks"])
    report.extra["intra_inter_ratio"] = intra_inter_ratio(pairwise_sq_dist(feats.features.T), feats.labels)
    report.extra["gallery_identities"] = int(len(feats.identities))
    _write(os.path.join(out, "eval_report.json"), report.to_json())
    _write(os.path.join(out, "cmc.csv"), report.curve_csv())
    cols = "  ".join(f"rank{r}={v:.4f}" for r, v in report.cmc.items())
    print(f"{cols}  mAP={report.map:.4f}")
    return EXIT_OK


def cmd_check(args):
    cp, out = _prepare(args, "check")
    results = verify.run_all(seed=config.seed(cp, required=False), _fault=args.inject_fault)
    lines = [r.line() for r in results]
    ok = all(r.passed for r in results)
    lines.append(f"{'ALL PASS' if ok else 'FAILED'}: {sum(r.passed for r in results)}/{len(results)} properties")
    text = "\n".join(lines) + "\n"
    _write(os.path.join(out, "check_report.txt"), text)
    print(text, end="")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser():
    parser = argparse.ArgumentParser(prog="lapembed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-data": (cmd_gen_data, "generate a synthetic identity-cluster dataset"),
        "train": (cmd_train, "train the embedding network"),
        "eval": (cmd_eval, "single-shot CMC / mAP evaluation"),
        "check": (cmd_check, "run the oracle verification suite"),
    }
    for name, (func, help_text) in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--mode", choices=sorted(MODE_LABELS))
        p.add_argument("--dataset", help="dataset CSV path")
        p.add_argument("--checkpoint", help="checkpoint path")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        if name == "eval":
            p.add_argument("--features", help="precomputed feature file (.csv or binary) instead of a checkpoint")
        if name == "check":
            p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInput, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
