"""NoisyKit command line: synth, inject, estimate-t, train, compare.

Exit codes: 0 success, 1 runtime or trial failure, 2 usage/validation error.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
from datetime import datetime, timezone
from typing import List, Optional

import numpy as np
import pandas as pd

import database as db
import dataset
import estimator
import settings
import trainer
import transition
from trainer import TrainConfig, TSource

logger = logging.getLogger("noisykit")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

TRAIN_KEYS = ("method", "epochs", "lr", "momentum", "batch_size", "hidden_dims", "seed",
              "trials", "split_fraction", "revision_epochs")

BAR_COLORS = {"baseline": "#9CA3AF", "forward": "#4F46E5", "reweight": "#7C3AED",
              "revision": "#EC4899"}


# ---- Output helpers ----

def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _atomic_write(path: str, writer) -> None:
    """Call writer(tmp_path), then move the finished file into place."""
    directory = os.path.dirname(os.path.abspath(path))
    if os.path.isdir(path):
        raise IsADirectoryError(f"output path {path} is a directory")
    fd, tmp = tempfile.mkstemp(prefix=".noisykit-", dir=directory)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def _write_text(path: str, text: str) -> None:
    def writer(tmp):
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    _atomic_write(path, writer)


def dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def manifest_path(output: str) -> str:
    return output + ".manifest.json"


def sibling_paths(output: str, suffixes) -> list:
    """Paths next to `output` sharing its stem; none may coincide with another output."""
    stem = os.path.splitext(output)[0]
    paths = [stem + suffix for suffix in suffixes]
    taken = {os.path.abspath(output), os.path.abspath(manifest_path(output))}
    for path in paths:
        if os.path.abspath(path) in taken:
            raise ValueError(f"-o {output} collides with the sibling output {path}; "
                             f"use a name with a different extension, e.g. {stem}.json")
        taken.add(os.path.abspath(path))
    return paths


def write_manifest(command: str, args: argparse.Namespace, inputs: List[str],
                   outputs: List[str], config: dict = None) -> dict:
    """RunManifest next to the primary output; the only place timestamps live."""
    manifest = {
        "command": command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "handler"},
        "config": config,
        "inputs": {p: sha256_file(p) for p in inputs},
        "outputs": outputs,
        "tool_version": settings.VERSION,
        "rng": settings.RNG_ALGORITHM,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    _write_text(manifest_path(outputs[0]), dump_json(manifest))
    return manifest


def render_bar_svg(summary: List[dict], title: str = "Top-1 accuracy by method") -> str:
    """Bar chart of mean accuracy with +/- std whiskers, one bar per method."""
    width, height = 480, 320
    left, right, top, bottom = 56, 16, 40, 48
    plot_w, plot_h = width - left - right, height - top - bottom
    slot = plot_w / max(len(summary), 1)
    bar_w = slot * 0.6

    def y(value: float) -> float:
        return top + plot_h * (1.0 - min(max(value, 0.0), 1.0))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#374151"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="#374151"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{left - 6}" y="{y(tick) + 4:.1f}" text-anchor="end">{tick:.2f}</text>')
        parts.append(f'<line x1="{left}" y1="{y(tick):.1f}" x2="{left + plot_w}" y2="{y(tick):.1f}" '
                     f'stroke="#E5E7EB"/>')
    for i, row in enumerate(summary):
        cx = left + slot * (i + 0.5)
        mean = row.get("mean_accuracy")
        std = row.get("std_accuracy") or 0.0
        color = BAR_COLORS.get(row["method"], "#4F46E5")
        parts.append(f'<text x="{cx:.1f}" y="{top + plot_h + 18}" text-anchor="middle">{row["method"]}</text>')
        if mean is None:
            parts.append(f'<text x="{cx:.1f}" y="{top + plot_h - 6}" text-anchor="middle">failed</text>')
            continue
        parts.append(f'<rect x="{cx - bar_w / 2:.1f}" y="{y(mean):.1f}" width="{bar_w:.1f}" '
                     f'height="{top + plot_h - y(mean):.1f}" fill="{color}"/>')
        parts.append(f'<line x1="{cx:.1f}" y1="{y(mean + std):.1f}" x2="{cx:.1f}" '
                     f'y2="{y(mean - std):.1f}" stroke="#111827" stroke-width="1.5"/>')
        for edge in (mean + std, mean - std):
            parts.append(f'<line x1="{cx - 6:.1f}" y1="{y(edge):.1f}" x2="{cx + 6:.1f}" '
                         f'y2="{y(edge):.1f}" stroke="#111827" stroke-width="1.5"/>')
        parts.append(f'<text x="{cx:.1f}" y="{y(mean + std) - 6:.1f}" text-anchor="middle">{mean:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---- Argument resolution ----

def _add_matrix_flags(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--t-known", metavar="NAME",
                       help="named matrix: fashion05, fashion06 or identity")
    group.add_argument("--t-file", metavar="PATH", help="matrix JSON file {size, rows}")
    group.add_argument("--t-inline", metavar="JSON", help="matrix rows as inline JSON")
    group.add_argument("--t-symmetric", metavar="RATE", type=float,
                       help="uniform flips with the given total rate")
    group.add_argument("--t-pair", metavar="RATE", type=float,
                       help="flip each class to the next with the given rate")


def _add_train_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--momentum", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--hidden", dest="hidden_dims", type=int, nargs="+", metavar="N")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--split-fraction", dest="split_fraction", type=float)
    parser.add_argument("--revision-epochs", dest="revision_epochs", type=int)
    parser.add_argument("--t-source", choices=trainer.T_SOURCE_KINDS)
    parser.add_argument("--top-k", dest="top_k", type=int)
    parser.add_argument("--t-true", metavar="PATH",
                        help="true matrix JSON, used to score estimated matrices")


def _has_matrix_flags(args) -> bool:
    return any(getattr(args, k, None) is not None
               for k in ("t_known", "t_file", "t_inline", "t_symmetric", "t_pair"))


def resolve_matrix(args, num_classes: int) -> Optional[transition.TransitionMatrix]:
    if getattr(args, "t_known", None):
        return transition.known(args.t_known, size=num_classes)
    if getattr(args, "t_file", None):
        T = transition.load_json(args.t_file)
    elif getattr(args, "t_inline", None):
        try:
            rows = json.loads(args.t_inline)
        except json.JSONDecodeError as e:
            raise transition.TransitionError(f"--t-inline is not valid JSON ({e})")
        T = transition.make(rows)
    elif getattr(args, "t_symmetric", None) is not None:
        T = transition.symmetric(num_classes, args.t_symmetric)
    elif getattr(args, "t_pair", None) is not None:
        T = transition.pair_flip(num_classes, args.t_pair)
    else:
        return None
    if T.size != num_classes:
        raise transition.TransitionError(f"matrix is {T.size}x{T.size}, data has {num_classes} classes")
    return T


def _read_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"config {path} is not valid JSON ({e})")
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must hold a JSON object")
    return data


def train_config(args, num_classes: int, method: str = None) -> TrainConfig:
    """Defaults, overridden by --config, overridden by flags."""
    data = TrainConfig().to_dict()
    if getattr(args, "config", None):
        data.update(_read_config(args.config))
    for key in TRAIN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if method is not None:
        data["method"] = method

    source = data.get("t_source") or {}
    if not isinstance(source, dict):
        raise ValueError(f"t_source must be an object, got {source!r}")
    source = dict(source)
    T = resolve_matrix(args, num_classes)
    if getattr(args, "t_known", None):
        source = {"kind": "known", "name": args.t_known}
    elif T is not None:
        source = {"kind": "provided", "matrix": T.entries.tolist()}
    if getattr(args, "t_source", None):
        source["kind"] = args.t_source
    if getattr(args, "top_k", None) is not None:
        source["top_k"] = args.top_k
    data["t_source"] = source
    return TrainConfig.from_dict(data)


def _load_pair(args):
    pool = dataset.load_csv(args.input)
    test = dataset.load_csv(args.test)
    if pool.dim != test.dim:
        raise dataset.DatasetError(f"{args.input} has {pool.dim} features, {args.test} has {test.dim}")
    return pool, test, max(pool.num_classes, test.num_classes)


def _t_true(args, num_classes: int):
    if getattr(args, "t_true", None):
        T = transition.load_json(args.t_true)
        if T.size != num_classes:
            raise transition.TransitionError(f"--t-true is {T.size}x{T.size}, data has {num_classes} classes")
        return T
    return None


def _record(args, command: str, method: str, config: dict, manifest: dict, trials: list,
            mean, std, failed: int):
    path = settings.registry_path(getattr(args, "db", None))
    if not path:
        return
    db.init_db(path)
    run_id = db.create_run(command, method, config, manifest, db_path=path)
    db.save_trials(run_id, trials, db_path=path)
    db.complete_run(run_id, mean, std, failed, db_path=path)
    db.log_activity(f"{command} finished", "run",
                    f"method={method} mean={mean} failed={failed}", run_id=run_id, db_path=path)
    if failed:
        db.log_activity(f"{failed} trial(s) failed", "error", run_id=run_id, db_path=path)
    logger.info("recorded run %d in %s", run_id, path)


def _progress(args) -> bool:
    return not getattr(args, "quiet", False) and sys.stderr.isatty()


# ---- Commands ----

def cmd_synth(args) -> int:
    spec = dataset.SyntheticSpec(
        num_classes=args.classes, dim=args.dim, samples_per_class=args.per_class,
        class_separation=args.sep, noise_sigma=args.sigma, seed=args.seed,
    )
    ds = dataset.synthesize(spec)
    _atomic_write(args.output, lambda tmp: dataset.save_csv(ds, tmp))
    write_manifest("synth", args, [], [args.output])
    logger.info("wrote %d rows to %s", ds.n, args.output)
    return EXIT_OK


def cmd_inject(args) -> int:
    ds = dataset.load_csv(args.input)
    T = resolve_matrix(args, ds.num_classes)
    if T is None:
        raise ValueError("inject needs a transition matrix (--t-known, --t-file, --t-inline, "
                         "--t-symmetric or --t-pair)")
    noisy = dataset.inject_noise(ds, T, args.seed)
    _atomic_write(args.output, lambda tmp: dataset.save_csv(noisy, tmp))
    write_manifest("inject", args, [args.input], [args.output], {"T": T.to_json()})
    logger.info("flipped %.4f of labels", float(np.mean(noisy.labels != ds.labels)))
    return EXIT_OK


def cmd_estimate_t(args) -> int:
    ds = dataset.load_csv(args.input)
    cfg = train_config(args, ds.num_classes, method="baseline")
    top_k = args.top_k or 1
    result = estimator.estimate_transition(ds, cfg, top_k)
    metadata = {"top_k": top_k, "probe_seed": result.probe_seed,
                "validity": result.report.to_dict(),
                "manifest": os.path.basename(manifest_path(args.output))}
    T_true = _t_true(args, ds.num_classes)
    if T_true is not None:
        metadata["sum_average_error"] = transition.sum_average_error(T_true, result.matrix)
    _atomic_write(args.output,
                  lambda tmp: transition.save_json(result.matrix, tmp, {"metadata": metadata}))
    write_manifest("estimate-t", args, [args.input], [args.output], cfg.to_dict())
    return EXIT_OK


def cmd_train(args) -> int:
    csv_path = sibling_paths(args.output, [".csv"])[0]
    pool, test, num_classes = _load_pair(args)
    cfg = train_config(args, num_classes)
    if cfg.method == "baseline" and (_has_matrix_flags(args) or args.t_source):
        logger.warning("method 'baseline' ignores the transition matrix")
    T_true = _t_true(args, num_classes)
    report = trainer.run_trials(pool, test, T_true, cfg, progress=_progress(args))
    report.metadata["manifest"] = os.path.basename(manifest_path(args.output))

    _write_text(args.output, report.to_json())
    _atomic_write(csv_path, lambda tmp: report.to_frame().to_csv(tmp, index=False, lineterminator="\n"))
    manifest = write_manifest("train", args, [args.input, args.test], [args.output, csv_path],
                              cfg.to_dict())
    _record(args, "train", cfg.method, cfg.to_dict(), manifest,
            [t.to_dict() for t in report.trials], report.mean_accuracy, report.std_accuracy,
            report.failed_trials)
    print(f"{cfg.method}: mean {_fmt(report.mean_accuracy)} std {_fmt(report.std_accuracy)} "
          f"({report.failed_trials} failed)")
    return EXIT_FAILURE if report.failed_trials else EXIT_OK


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def cmd_compare(args) -> int:
    if args.score_t:
        estimate = transition.load_raw_json(args.score_t)
        truth = resolve_matrix(args, estimate.shape[0])
        if truth is None:
            raise ValueError("--score-t needs the true matrix (--t-known, --t-file, ...)")
        print(f"{transition.sum_average_error(truth, estimate):.6f}")
        if not args.input:
            return EXIT_OK
    if not (args.input and args.test and args.output):
        raise ValueError("compare needs -i/--input, --test and -o/--output")
    csv_path, summary_path, svg_path = sibling_paths(args.output, [".csv", ".summary.csv", ".svg"])

    pool, test, num_classes = _load_pair(args)
    cfg = train_config(args, num_classes)
    T = resolve_matrix(args, num_classes)
    if T is None and cfg.t_source.kind in ("known", "provided"):
        T = trainer.resolve_known(cfg.replace(method="forward"), num_classes)
    T_true = _t_true(args, num_classes)
    if T_true is None:
        T_true = T
    comparison = trainer.compare_methods(pool, test, T, cfg, progress=_progress(args))

    payload = comparison.to_dict()
    payload["metadata"] = {"manifest": os.path.basename(manifest_path(args.output)),
                           "tool_version": settings.VERSION, "rng": settings.RNG_ALGORITHM}
    if T_true is not None:
        payload["true_T"] = T_true.to_json()
    _write_text(args.output, dump_json(payload))
    _atomic_write(csv_path, lambda tmp: comparison.to_frame().to_csv(tmp, index=False, lineterminator="\n"))
    summary = comparison.summary()
    _atomic_write(summary_path, lambda tmp: pd.DataFrame(summary).to_csv(tmp, index=False, lineterminator="\n"))
    _write_text(svg_path, render_bar_svg(summary))
    manifest = write_manifest("compare", args, [args.input, args.test],
                              [args.output, csv_path, summary_path, svg_path], cfg.to_dict())
    trials = [t.to_dict() for r in comparison.reports.values() for t in r.trials]
    accs = [t["test_accuracy"] for t in trials if t["error"] is None]
    _record(args, "compare", None, cfg.to_dict(), manifest, trials,
            float(np.mean(accs)) if accs else None, float(np.std(accs)) if accs else None,
            comparison.failed_trials)
    for row in summary:
        print(f"{row['method']:>9}: mean {_fmt(row['mean_accuracy'])} std {_fmt(row['std_accuracy'])}")
    return EXIT_FAILURE if comparison.failed_trials else EXIT_OK


# ---- Parser ----

def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool = True):
    """Accepted before or after the command name. The subcommand copies only
    set an attribute when the flag is given."""
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--log-level", default=default(None), help="DEBUG, INFO, WARNING, ERROR")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False),
                        help="shortcut for --log-level DEBUG")
    parser.add_argument("-q", "--quiet", action="store_true", default=default(False),
                        help="warnings only, no progress bars")
    parser.add_argument("--db", default=default(None), help="run registry path (overrides NOISYKIT_DB)")
    parser.add_argument("--config", default=default(None), help="JSON file with training defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisykit", description=__doc__.splitlines()[0])
    _add_global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate Gaussian class data")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--per-class", dest="per_class", type=int, required=True)
    p.add_argument("--sep", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    _add_global_flags(p)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("inject", help="flip labels with a transition matrix")
    p.add_argument("-i", "--input", required=True)
    _add_matrix_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    _add_global_flags(p)
    p.set_defaults(handler=cmd_inject)

    p = sub.add_parser("estimate-t", help="anchor-point estimate of T from noisy data")
    p.add_argument("-i", "--input", required=True)
    _add_train_flags(p)
    p.add_argument("-o", "--output", required=True)
    _add_global_flags(p)
    p.set_defaults(handler=cmd_estimate_t)

    p = sub.add_parser("train", help="seeded trials of one method")
    p.add_argument("-i", "--input", required=True, help="noisy training pool CSV")
    p.add_argument("--test", required=True, help="clean test CSV")
    p.add_argument("--method", choices=trainer.METHODS)
    _add_matrix_flags(p)
    _add_train_flags(p)
    p.add_argument("-o", "--output", required=True)
    _add_global_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("compare", help="all four methods side by side")
    p.add_argument("-i", "--input", help="noisy training pool CSV")
    p.add_argument("--test", help="clean test CSV")
    _add_matrix_flags(p)
    _add_train_flags(p)
    p.add_argument("--score-t", metavar="PATH", help="print sum-average error of this estimate")
    p.add_argument("-o", "--output")
    _add_global_flags(p)
    p.set_defaults(handler=cmd_compare)
    return parser


def _configure_logging(args):
    if args.verbose:
        level = "DEBUG"
    elif args.quiet:
        level = "WARNING"
    else:
        level = (args.log_level or settings.LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    _configure_logging(args)
    try:
        return args.handler(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ArithmeticError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
