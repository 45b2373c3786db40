"""Command-line driver.

Every subcommand writes its artifacts plus ``manifest.json`` into ``--out``.
The manifest records the merged configuration, the seeds and the SHA-256 of
every input and output; passing it back with ``--config`` repeats the run
byte for byte. Exit codes: 0 success, 2 usage error, 3 pipeline failure.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .datagen import SwimmerSpec, SyntheticSpec, generate_swimmer, generate_synthetic, swimmer_topic_names
from .errors import GeoNMFError, ShapeMismatch
from .evaluate import cluster_purity, matched_error
from .io import (
    PruneRules,
    Vocabulary,
    load_stopwords,
    prune,
    read_labels,
    read_matrix,
    read_uci_bow,
    topic_names,
    write_labels,
    write_matrix,
    write_topics,
    write_uci_bow,
)
from .pipeline import DiscoverParams, discover
from .sweep import run_sweep

REQUIRED = object()


class UsageError(Exception):
    pass


def _int_list(s):
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    try:
        vals = [int(v) for v in str(s).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _bool(s):
    if isinstance(s, bool):
        return s
    if str(s).lower() in ("1", "true", "yes", "on"):
        return True
    if str(s).lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def _opt_int(s):
    return None if s is None or str(s).lower() == "none" else int(s)


# name -> (type, default, help)
SYNTH_OPTS = {
    "W": (int, 500, "vocabulary size"),
    "K": (int, REQUIRED, "number of topics"),
    "M": (int, 500, "number of documents"),
    "N": (int, 50, "words per document"),
    "rho": (float, 0.2, "fraction of novel words"),
    "alpha": (float, 0.1, "Dirichlet concentration of the topic weights"),
    "seed": (int, 0, "master seed"),
}

SWIMMER_OPTS = {
    "N": (int, 200, "pixels drawn per image"),
    "body_value": (float, 10.0, "intensity of torso and limb pixels"),
    "background_value": (float, 1.0, "intensity of background pixels"),
    "seed": (int, 0, "master seed"),
}


def _algo_opts():
    helps = {
        "P": "random projections (default 100*K)",
        "delta": "L1 radius around each extreme point",
        "lambda1": "subspace-clustering lasso weight (dimensionless)",
        "gamma": "outlier threshold on the code L1 norm, relative to the median",
        "lambda2": "group-sparsity weight of the regression",
        "min_candidate_count": "words with fewer occurrences are not candidates",
        "min_cluster_share": "minimum code mass a clustered word keeps in its own cluster",
        "seed": "master seed",
    }
    opts = {}
    for f in dataclasses.fields(DiscoverParams):
        typ = _opt_int if f.name == "P" else type(f.default)
        opts[f.name] = (typ, f.default, helps.get(f.name, f.name.replace("_", " ")))
    return opts


ALGO_OPTS = _algo_opts()

PRUNE_OPTS = {
    "prune": (_bool, False, "prune the vocabulary before discovery"),
    "stopwords": (str, "english", "'english' for the bundled list, 'none', or a file with one word per line"),
    "min_term_count": (int, 5, "drop words with fewer total occurrences when pruning"),
    "min_doc_count": (int, 5, "drop words found in fewer documents when pruning"),
}

DISCOVER_OPTS = {
    "corpus": (str, REQUIRED, "UCI docword file"),
    "vocab": (str, None, "UCI vocabulary file"),
    "K": (int, REQUIRED, "number of topics"),
    "top_n": (int, 10, "words per topic in the summary"),
    **PRUNE_OPTS,
    **ALGO_OPTS,
}

EVAL_OPTS = {
    "beta_hat": (str, REQUIRED, "estimated topic TSV"),
    "beta": (str, REQUIRED, "ground-truth topic TSV"),
    "novel": (str, None, "ground-truth novel-word labels, for purity"),
    "clusters": (str, None, "estimated cluster labels, for purity"),
    "cos_threshold": (float, 0.8, "cosine at or above which a topic counts as recovered"),
}

SWEEP_OPTS = {
    "vary": (str, REQUIRED, "'M' or 'N'"),
    "values": (_int_list, REQUIRED, "comma-separated grid values"),
    "trials": (int, 10, "seeded trials per grid value"),
    **{k: v for k, v in SYNTH_OPTS.items() if k != "seed"},
    **ALGO_OPTS,
}

COMMANDS = {
    "gen-synth": (SYNTH_OPTS, "generate a synthetic separable corpus"),
    "gen-swimmer": (SWIMMER_OPTS, "generate the swimmer image corpus"),
    "discover": (DISCOVER_OPTS, "estimate topics from a UCI corpus"),
    "eval": (EVAL_OPTS, "compare an estimate with the ground truth"),
    "sweep": (SWEEP_OPTS, "mean error over a grid of M or N values"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="geonmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (opts, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config or manifest; flags override it")
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--threads", type=int, help="worker threads (default: available CPUs)")
        for key, (typ, default, h) in opts.items():
            shown = "required" if default is REQUIRED else f"default {default}"
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, help=f"{h} ({shown})")
    return parser


def load_config(path):
    """Flat option mapping from a config file or a previous run's manifest."""
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    if "config" in cfg and "artifacts" in cfg:
        cfg = cfg["config"]
    return cfg


def merge_config(command, ns):
    """Defaults, then the config file, then explicit flags."""
    opts = COMMANDS[command][0]
    given = {k: v for k, v in vars(ns).items() if k in opts}
    file_cfg = load_config(ns.config) if getattr(ns, "config", None) else {}
    unknown = sorted(set(file_cfg) - set(opts))
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for key, (typ, default, _) in opts.items():
        if key in given:
            cfg[key] = given[key]
        elif key in file_cfg:
            try:
                v = file_cfg[key]
                cfg[key] = v if v is None else typ(v)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"bad config value for {key}: {exc}") from exc
        elif default is REQUIRED:
            raise UsageError(f"--{key.replace('_', '-')} is required")
        else:
            cfg[key] = default
    return cfg


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")


def write_manifest(out, command, cfg, artifacts, inputs=(), seeds=None):
    """Record config, seeds and hashes; paths are relative to ``out``."""
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "seeds": seeds if seeds is not None else {"master": cfg.get("seed")},
        "inputs": {str(p): sha256(p) for p in inputs},
        "artifacts": {Path(p).name: sha256(p) for p in artifacts},
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def _write_truth(out, gt, X, vocab, topic_cols):
    files = [out / "corpus.docword.txt", out / "corpus.vocab.txt", out / "beta.tsv", out / "theta.tsv", out / "novel.tsv"]
    write_uci_bow(X, files[0], vocab, files[1])
    write_matrix(files[2], gt.beta, vocab.terms, topic_cols)
    write_matrix(files[3], gt.theta, topic_cols, [f"doc_{d}" for d in range(gt.M)], corner="topic")
    write_labels(files[4], gt.labels(), header=("word", "topic"))
    return files


def cmd_gen_synth(cfg, out, threads):
    spec = SyntheticSpec(**{k: cfg[k] for k in SYNTH_OPTS})
    gt, X = generate_synthetic(spec)
    gt.validate()
    files = _write_truth(out, gt, X, Vocabulary.default(spec.W), topic_names(spec.K))
    write_manifest(out, "gen-synth", cfg, files)


def cmd_gen_swimmer(cfg, out, threads):
    spec = SwimmerSpec(**{k: cfg[k] for k in SWIMMER_OPTS})
    gt, X, _ = generate_swimmer(spec)
    gt.validate()
    S = spec.image_side
    vocab = Vocabulary(tuple(f"px_{r}_{c}" for r in range(S) for c in range(S)))
    files = _write_truth(out, gt, X, vocab, swimmer_topic_names())
    write_manifest(out, "gen-swimmer", cfg, files)


def _stopwords(arg):
    if arg == "english":
        return load_stopwords()
    if arg == "none":
        return frozenset()
    try:
        with open(arg, encoding="utf-8") as f:
            return frozenset(w.strip() for w in f if w.strip())
    except OSError as exc:
        raise UsageError(f"cannot read stopword file {arg}: {exc}") from exc


def cmd_discover(cfg, out, threads):
    X, vocab = read_uci_bow(cfg["corpus"], cfg["vocab"])
    inputs = [cfg["corpus"]] + ([cfg["vocab"]] if cfg["vocab"] else [])
    artifacts = []
    if cfg["prune"]:
        rules = PruneRules(
            stopwords=_stopwords(cfg["stopwords"]),
            min_term_count=cfg["min_term_count"],
            min_doc_count=cfg["min_doc_count"],
            drop_numeric_and_single_char=True,
        )
        X, vocab, report = prune(X, vocab, rules)
        write_json(out / "prune.json", report.to_dict())
        artifacts.append(out / "prune.json")
    params = DiscoverParams(**{k: cfg[k] for k in ALGO_OPTS})
    res = discover(X, cfg["K"], params, threads=threads)
    paths = write_topics(res.estimate, vocab, out / "beta_hat.tsv", top_n=cfg["top_n"])
    labels = res.clustering.labels(X.W)
    labels[res.clustering.outliers] = -2
    write_labels(out / "clusters.tsv", labels, header=("word", "cluster"))
    diag = {
        **res.diagnostics(),
        "params": res.estimate.params_used,
        "provenance": {
            "novel": int((res.estimate.provenance >= 0).sum()),
            "regressed": int((res.estimate.provenance == -1).sum()),
            "outlier_regressed": int((res.estimate.provenance == -2).sum()),
        },
    }
    write_json(out / "diagnostics.json", diag)
    artifacts += [*paths, out / "clusters.tsv", out / "diagnostics.json"]
    write_manifest(out, "discover", cfg, artifacts, inputs=inputs)


def cmd_eval(cfg, out, threads):
    beta_hat, rows_hat, _ = read_matrix(cfg["beta_hat"])
    beta, rows, _ = read_matrix(cfg["beta"])
    if rows_hat != rows:
        raise ShapeMismatch("estimate and truth list different words")
    rep = matched_error(beta_hat, beta, cfg["cos_threshold"])
    inputs = [cfg["beta_hat"], cfg["beta"]]
    if cfg["novel"] and cfg["clusters"]:
        truth = read_labels(cfg["novel"])
        est = read_labels(cfg["clusters"])
        K = beta.shape[1]
        clusters = [np.flatnonzero(est == k) for k in range(int(est.max()) + 1)]
        purity = cluster_purity([c for c in clusters if c.size], [np.flatnonzero(truth == k) for k in range(K)])
        rep = dataclasses.replace(rep, purity=purity)
        inputs += [cfg["novel"], cfg["clusters"]]
    path = out / "report.json"
    write_json(path, rep.to_dict())
    print(rep.to_json())
    write_manifest(out, "eval", cfg, [path], inputs=inputs)


def cmd_sweep(cfg, out, threads):
    base = SyntheticSpec(**{k: cfg[k] for k in SYNTH_OPTS if k != "seed"}, seed=cfg["seed"])
    params = DiscoverParams(**{k: cfg[k] for k in ALGO_OPTS})
    rows = run_sweep(base, cfg["vary"], cfg["values"], cfg["trials"], params, seed=cfg["seed"], threads=threads)
    path = out / "sweep.tsv"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("vary\tvalue\ttrials\tfailed\tmean_error\tstd_error\tfailures\n")
        for r in rows:
            fails = ",".join(r.failures) or "-"
            f.write(
                f"{r.vary}\t{r.value}\t{len(r.errors)}\t{len(r.failures)}\t{r.mean_error!r}\t{r.std_error!r}\t{fails}\n"
            )
    write_manifest(out, "sweep", cfg, [path])


HANDLERS = {
    "gen-synth": cmd_gen_synth,
    "gen-swimmer": cmd_gen_swimmer,
    "discover": cmd_discover,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv=None):
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        cfg = merge_config(ns.command, ns)
        if ns.command == "sweep" and cfg["vary"] not in ("M", "N"):
            raise UsageError("--vary must be M or N")
        threads = getattr(ns, "threads", None) or os.cpu_count() or 1
        if threads < 1:
            raise UsageError("--threads must be positive")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"geonmf: error: {exc}", file=sys.stderr)
        return 2
    out = Path(getattr(ns, "out", None) or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
        # BLAS stays single threaded so results never depend on --threads.
        with threadpool_limits(limits=1):
            HANDLERS[ns.command](cfg, out, threads)
    except GeoNMFError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: IoFailure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, UsageError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
