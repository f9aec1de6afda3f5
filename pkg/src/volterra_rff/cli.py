"""``rff`` command line: corpus generation through cross-validation.

Every subcommand writes ``resolved_config.json`` into its output directory.
Exit codes: 0 success, 2 configuration or usage error, 3 I/O error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, load_config, write_resolved
from .cvnn.network import load_checkpoint, save_checkpoint
from .cvnn.training import check_classes, evaluate, kfold, train
from .errors import ConfigError, NumericalError, PersistenceError, RFFError
from .ingest import import_iq, load_layout
from .iq import load_iq, normalize_power, read_manifest, save_iq
from .lora import synthesize_preamble
from .txsim import generate_corpus
from .volterra.featio import FeatureSet, read_features, write_features
from .volterra.model import Extractor
from .volterra.pca import pca_project, separability

log = logging.getLogger("rff")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PersistenceError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write_json(path: Path, obj) -> None:
    try:
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def _write_csv(path: Path, header: list[str] | None, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if header:
                w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def _n_classes(cfg: PipelineConfig, fs: FeatureSet) -> int:
    n = cfg.net.n_classes or int(fs.labels.max()) + 1
    check_classes(fs.labels, n, "feature set")
    return n


# --- subcommands ------------------------------------------------------------

def cmd_synth_ref(cfg: PipelineConfig, args) -> int:
    out = _out_dir(args)
    u = synthesize_preamble(cfg.lora.params())
    save_iq(u, out / "reference.rfiq")
    write_resolved(cfg, out)
    print(f"reference: {len(u)} samples at {u.sample_rate_hz:g} Hz -> {out / 'reference.rfiq'}")
    return EXIT_OK


def cmd_gen_dataset(cfg: PipelineConfig, args) -> int:
    if args.channel:
        cfg = cfg.model_copy(update={"sim": cfg.sim.model_copy(update={"channel": args.channel})})
    out = _out_dir(args)
    sim = cfg.sim
    manifest = generate_corpus(sim.n_devices, sim.n_signals, sim.seed, sim.channel_model(),
                               cfg.lora.params(), out, sim.sampler.ranges(), sim.workers)
    write_resolved(cfg, out)
    print(f"corpus: {sim.n_devices} devices x {sim.n_signals} signals = {len(manifest)} records, "
          f"channel={sim.channel}, snr_db={sim.snr_db}")
    print(f"manifest: {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_import_iq(cfg: PipelineConfig, args) -> int:
    out = _out_dir(args)
    layout = load_layout(args.layout)
    manifest = import_iq(args.src, layout, out)
    write_resolved(cfg, out)
    print(f"imported {len(manifest)} records in {manifest.n_classes} classes; manifest: {out / 'manifest.csv'}")
    return EXIT_OK


def cmd_extract(cfg: PipelineConfig, args) -> int:
    out = _out_dir(args)
    manifest = read_manifest(args.manifest, check_files=False)
    u = synthesize_preamble(cfg.lora.params())
    lam = cfg.ridge.lam
    extractor = Extractor(u, cfg.basis.spec(), lam, cfg.ridge.lambda_rel, cfg.basis.exclude_warmup,
                          cfg.basis.boundary)
    normalize = cfg.extract.normalize
    total = len(manifest)

    def work(i):
        entry = manifest.entries[i]
        try:
            y = load_iq(manifest.resolve(entry))
            if normalize:
                y = normalize_power(y)
            return extractor.extract(y)
        except RFFError as exc:
            return exc

    step = max(total // 10, 1)
    results = []
    indices = range(total)
    if cfg.extract.workers > 1:
        with ThreadPoolExecutor(cfg.extract.workers) as pool:
            stream = pool.map(work, indices)
            for i, r in enumerate(stream):
                results.append(r)
                if (i + 1) % step == 0:
                    log.info("extracted %d/%d", i + 1, total)
    else:
        for i in indices:
            results.append(work(i))
            if (i + 1) % step == 0:
                log.info("extracted %d/%d", i + 1, total)

    theta, labels, nmse, failures, rows = [], [], [], [], []
    for entry, r in zip(manifest.entries, results):
        if isinstance(r, Exception):
            log.warning("skipping %s: %s", entry.path, r)
            failures.append({"path": entry.path, "error": str(r)})
            continue
        log.debug("%s nmse_db=%.2f", entry.path, r.nmse_db)
        theta.append(r.theta)
        labels.append(entry.label)
        nmse.append(r.nmse_db)
        rows.append((entry.path, entry.label, f"{r.nmse_db:.6f}"))
    if not theta:
        raise NumericalError(f"all {total} records failed to extract")

    fs = FeatureSet(np.array(theta), labels, nmse)
    write_features(fs, out / "features.feat")
    _write_csv(out / "nmse.csv", ["path", "label", "nmse_db"], rows)
    nm = np.asarray(nmse)
    p5, p50, p95 = np.percentile(nm, [5, 50, 95])
    summary = {
        "records": total, "extracted": len(fs), "failed": len(failures), "failures": failures,
        "dimension": fs.dim, "lambda": extractor.lam, "basis": cfg.basis.spec().digest(),
        "nmse_db": {"mean": float(nm.mean()), "min": float(nm.min()), "max": float(nm.max()),
                    "p5": float(p5), "median": float(p50), "p95": float(p95)},
    }
    _write_json(out / "extract_summary.json", summary)
    write_resolved(cfg, out)
    print(f"features: {len(fs)}/{total} records, D={fs.dim}, NMSE mean {nm.mean():.2f} dB "
          f"(median {p50:.2f}, p95 {p95:.2f}) -> {out / 'features.feat'}")
    if len(failures) > cfg.extract.max_failure_fraction * total:
        log.error("%d of %d records failed, above the %.1f%% ceiling", len(failures), total,
                  100 * cfg.extract.max_failure_fraction)
        return EXIT_NUMERIC
    return EXIT_OK


def _confusion_rows(cm: np.ndarray):
    return [[str(v) for v in row] for row in cm]


def cmd_train(cfg: PipelineConfig, args) -> int:
    out = _out_dir(args)
    fs = read_features(args.features)
    net_cfg = cfg.net.network(fs.dim, _n_classes(cfg, fs))
    result = train(fs, net_cfg, cfg.train.train_config())
    save_checkpoint(result.params, out / "model.cvnn")
    try:
        with open(out / "metrics.jsonl", "w") as fh:
            for row in result.history:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    except OSError as exc:
        raise PersistenceError(f"cannot write metrics: {exc}") from exc
    ev = evaluate(result.params, fs.theta[result.val_index], fs.labels[result.val_index])
    _write_csv(out / "confusion.csv", None, _confusion_rows(ev.confusion))
    _write_json(out / "train_summary.json", {
        "final": result.history[-1], "val_accuracy": ev.accuracy,
        "n_train": int(result.train_index.size), "n_val": int(result.val_index.size),
    })
    write_resolved(cfg, out)
    print(f"trained {cfg.train.epochs} epochs; validation accuracy {ev.accuracy:.4f} -> {out / 'model.cvnn'}")
    return EXIT_OK


def cmd_eval(cfg: PipelineConfig, args) -> int:
    out = _out_dir(args)
    fs = read_features(args.features)
    net = load_checkpoint(args.checkpoint)
    if fs.labels.max() >= net.config.n_classes:
        raise ConfigError(f"features have label {fs.labels.max()}, checkpoint has {net.config.n_classes} classes")
    ev = evaluate(net, fs.theta, fs.labels)
    _write_csv(out / "confusion.csv", None, _confusion_rows(ev.confusion))
    _write_json(out / "eval.json", {"accuracy": ev.accuracy, "loss": ev.loss, "count": len(fs)})
    write_resolved(cfg, out)
    print(f"accuracy {ev.accuracy:.4f} on {len(fs)} records")
    return EXIT_OK


def cmd_crossval(cfg: PipelineConfig, args) -> int:
    out = _out_dir(args)
    fs = read_features(args.features)
    k = args.k or cfg.train.k_folds
    net_cfg = cfg.net.network(fs.dim, _n_classes(cfg, fs))
    res = kfold(fs, k, net_cfg, cfg.train.train_config())
    _write_json(out / "crossval.json", {"k": k, "accuracies": res.accuracies, "summary": res.summary})
    _write_csv(out / "confusion.csv", None, _confusion_rows(res.confusion))
    write_resolved(cfg, out)
    s = res.summary
    print(f"{k}-fold accuracy: mean {s['mean']:.4f}, min {s['min']:.4f}, max {s['max']:.4f}")
    return EXIT_OK


def cmd_pca_export(cfg: PipelineConfig, args) -> int:
    out = _out_dir(args)
    fs = read_features(args.features)
    k = args.k or cfg.pca.k
    res = pca_project(fs.theta, k)
    header = ["label"] + [f"pc{i + 1}" for i in range(k)]
    rows = [[str(lab)] + [repr(float(v)) for v in row] for lab, row in zip(fs.labels, res.scores)]
    _write_csv(out / "pca.csv", header, rows)
    sep = None
    if not res.degenerate and np.unique(fs.labels).size >= 2:
        sep = separability(res.scores, fs.labels)
    _write_json(out / "pca.json", {
        "k": k, "explained_variance_ratio": res.explained_variance_ratio.tolist(),
        "degenerate": res.degenerate, "separability": sep,
    })
    write_resolved(cfg, out)
    if sep is not None:
        log.info("separability (centroid distance / within-class scatter): %.4f", sep)
    print(f"pca: {len(fs)} rows, k={k}, separability {sep} -> {out / 'pca.csv'}")
    return EXIT_OK


COMMANDS = {
    "synth-ref": cmd_synth_ref,
    "gen-dataset": cmd_gen_dataset,
    "import-iq": cmd_import_iq,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "crossval": cmd_crossval,
    "pca-export": cmd_pca_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline JSON config (defaults used when omitted)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for per-record detail")

    parser = argparse.ArgumentParser(prog="rff", description="Volterra-kernel RF fingerprinting pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("synth-ref", parents=[common], help="write the ideal reference preamble")
    p = sub.add_parser("gen-dataset", parents=[common], help="synthesize a labelled corpus")
    p.add_argument("--channel", choices=["static", "multipath", "multipath-doppler"],
                   help="override sim.channel")
    p = sub.add_parser("import-iq", parents=[common], help="convert external captures to RFIQ")
    p.add_argument("--src", required=True, help="capture file or directory")
    p.add_argument("--layout", required=True, help="layout descriptor JSON")
    p = sub.add_parser("extract", parents=[common], help="fit one fingerprint per manifest record")
    p.add_argument("--manifest", required=True)
    p = sub.add_parser("train", parents=[common], help="train the classifier on a feature file")
    p.add_argument("--features", required=True)
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--checkpoint", required=True)
    p = sub.add_parser("crossval", parents=[common], help="stratified k-fold cross-validation")
    p.add_argument("--features", required=True)
    p.add_argument("-k", type=int, help="fold count (default: train.k_folds)")
    p = sub.add_parser("pca-export", parents=[common], help="export principal-component scores")
    p.add_argument("--features", required=True)
    p.add_argument("-k", type=int, help="number of components (default: pca.k)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except RFFError as exc:
        print(f"rff {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"rff {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
