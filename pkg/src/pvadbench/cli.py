"""``pvadbench`` command line: synth, train, eval, compare, plot.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import corpus as corpus_mod
from . import metrics, plots, training
from .models import UsageError, Variant, build_model

log = logging.getLogger("pvadbench")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
RETENTION_TOL = 1e-9
ENCODER_CKPT = "encoder.ckpt"
VAD_CKPT = "vad.ckpt"
ENROLLMENTS = "enrollments.jsonl"


class DataError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# configuration


def resolve_seed(cli_seed):
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("PVAD_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"PVAD_SEED must be an integer, got {env!r}") from None


def train_settings(config_path):
    """Optional ``[train]`` section: epochs, encoder_epochs, lr."""
    settings = {"epochs": 30, "encoder_epochs": 10, "lr": 1e-3}
    if config_path:
        parser = configparser.ConfigParser()
        if not parser.read(config_path):
            raise DataError(f"cannot read config file {config_path}")
        if parser.has_section("train"):
            for key, cast in (("epochs", int), ("encoder_epochs", int), ("lr", float)):
                if parser.has_option("train", key):
                    settings[key] = cast(parser.get("train", key))
    return settings


def parse_variants(text):
    if not text:
        raise UsageError("--variant is required")
    try:
        return [Variant.parse(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_durations(text):
    if text is None:
        return list(metrics.DEFAULT_DURATIONS_MS)
    if text.strip() == "":
        return []
    try:
        values = [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--durations must be a comma-separated list of integers, got {text!r}") from None
    if any(v <= 0 for v in values) or values != sorted(values):
        raise UsageError("--durations must be positive and ascending")
    return values


def _dump(obj):
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args):
    cfg = corpus_mod.load_config(args.config) if args.config else corpus_mod.CorpusConfig()
    seed = resolve_seed(args.seed)
    if seed is not None:
        cfg.seed = seed
    out = Path(_require(args.out, "--out"))
    corpus = corpus_mod.generate_corpus(cfg)
    try:
        corpus_mod.write_corpus(corpus, out)
    except OSError as exc:
        raise DataError(f"cannot write corpus to {out}: {exc}") from None
    summary = corpus_mod.summarize(corpus)
    summary["manifest_sha256"] = corpus_mod.file_sha256(out / "manifest.jsonl")
    print(_dump(summary), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _require(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _load_corpus(path):
    path = Path(_require(path, "--corpus"))
    if not path.is_dir():
        raise DataError(f"corpus directory {path} does not exist")
    return corpus_mod.load_corpus(path)


def _cached(path, seed):
    """Return a cached sub-model checkpoint if it was trained with ``seed``."""
    if path.exists():
        ckpt = training.read_checkpoint(path)
        if ckpt.header.get("seed") == seed:
            return ckpt.params
    return None


def _encoder(corpus, run, seed, settings):
    path = run / ENCODER_CKPT
    params = _cached(path, seed)
    if params is None:
        cfg = training.TrainConfig(training.SPEAKER_ENCODER, epochs=settings["encoder_epochs"],
                                   lr=settings["lr"], seed=seed)
        res = training.train_speaker_encoder(corpus.split("train"), corpus.split("val"), corpus.train_speakers, cfg)
        training.save_checkpoint(path, training.SPEAKER_ENCODER, res.params, seed=seed,
                                 train_loss=res.final_train_loss, val_loss=res.best_val_loss)
        training.write_loss_csv(run / "encoder_loss.csv", res.history)
        params = res.params
    return params


def _vad(corpus, run, seed, settings):
    path = run / VAD_CKPT
    params = _cached(path, seed)
    if params is None:
        cfg = training.TrainConfig(training.VAD, epochs=settings["epochs"], lr=settings["lr"], seed=seed)
        res = training.train_vad(corpus.split("train"), corpus.split("val"), cfg)
        training.save_checkpoint(path, training.VAD, res.params, seed=seed,
                                 train_loss=res.final_train_loss, val_loss=res.best_val_loss)
        training.write_loss_csv(run / "vad_loss.csv", res.history)
        params = res.params
    return params


def write_enrollments(corpus, path):
    lines = [
        json.dumps({"id": u.id, "enrollment": corpus_mod.encode_embedding(u.enrollment)}, sort_keys=True)
        for u in corpus.utterances
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_enrollments(path):
    table = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                table[rec["id"]] = corpus_mod.decode_embedding(rec["enrollment"])
    return table


def cmd_train(args):
    variants = parse_variants(args.variant)
    corpus = _load_corpus(args.corpus)
    run = Path(_require(args.out, "--out"))
    run.mkdir(parents=True, exist_ok=True)
    settings = train_settings(args.config)
    seed = resolve_seed(args.seed)
    seed = 0 if seed is None else seed

    enc = _encoder(corpus, run, seed, settings)
    training.attach_enrollments(corpus, enc)
    write_enrollments(corpus, run / ENROLLMENTS)
    for variant in variants:
        if variant is Variant.DSC:
            vad = _vad(corpus, run, seed, settings)
            model = training.dsc_model(vad, enc)
            path = training.save_checkpoint(run / "DSC.ckpt", Variant.DSC, model.params, model.dims, seed=seed)
        else:
            model = build_model(variant, seed)
            cfg = training.TrainConfig(variant.value, epochs=settings["epochs"], lr=settings["lr"], seed=seed)
            res = training.train_pvad(model, corpus.split("train"), corpus.split("val"), cfg)
            path = training.save_checkpoint(run / f"{variant.value}.ckpt", variant, res.params, model.dims, seed=seed,
                                            train_loss=res.final_train_loss, val_loss=res.best_val_loss)
            training.write_loss_csv(run / f"{variant.value}_loss.csv", res.history)
        print(f"{variant.value}: {path} ({model.parameter_count()} parameters)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _attach_saved_enrollments(corpus, ckpt_path):
    side = Path(ckpt_path).parent / ENROLLMENTS
    table = read_enrollments(side) if side.exists() else {}
    for u in corpus.split("test"):
        if u.id in table:
            u.enrollment = table[u.id]
        elif u.enrollment is None:
            raise DataError(f"no enrollment embedding for {u.id}: expected {side} or embeddings in the manifest")


def cmd_eval(args):
    ckpt_path = Path(_require(args.checkpoint, "--checkpoint"))
    durations = parse_durations(args.durations)
    corpus = _load_corpus(args.corpus)
    out = Path(_require(args.out, "--out"))
    model = training.load_checkpoint(ckpt_path)
    _attach_saved_enrollments(corpus, ckpt_path)
    provenance = {
        "toolkit_version": __version__,
        "corpus_seed": corpus.config.seed,
        "corpus_manifest_sha256": corpus_mod.file_sha256(corpus.root / "manifest.jsonl"),
        "checkpoint": ckpt_path.name,
        "checkpoint_sha256": corpus_mod.file_sha256(ckpt_path),
    }
    report = metrics.evaluate_suite(model, corpus.split("test"), durations, provenance)
    paths = write_report(report, out)
    summary = {k: report.to_dict()[k] for k in ("variant", "feer_pvad", "feer_vad", "ueer", "median_latency_ms",
                                                 "median_accuracy")}
    print(_dump(summary), end="")
    for p in paths:
        print(p)
    return EXIT_OK


def write_report(report: metrics.MetricsReport, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    name = report.variant
    paths = [out / f"{name}_report.json", out / f"{name}_users.csv"]
    paths[0].write_text(_dump(report.to_dict()))
    rows = ["variant,user_id,n_target_utterances,misses,accuracy,median_latency_ms,latencies_ms"]
    for u in report.users:
        med = "" if u.median_latency_ms is None else f"{u.median_latency_ms:g}"
        lat = " ".join(str(x) for x in u.latencies_ms)
        rows.append(f"{name},{u.user_id},{u.n_target_utterances},{u.misses},{u.accuracy:.10g},{med},{lat}")
    paths[1].write_text("\n".join(rows) + "\n")
    for key, curve in sorted(report.det.items()):
        p = out / f"{name}_det_{key}.csv"
        lines = ["threshold,fpr,fnr"] + [f"{t!r},{a!r},{b!r}" for t, a, b in curve.points()]
        p.write_text("\n".join(lines) + "\n")
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# compare


def _load_report(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from None


def _paired(values_a, values_b, higher_is_better):
    """Per-user improvement of A over B; positive means A is better."""
    diffs = {}
    for uid in sorted(values_a):
        a, b = values_a[uid], values_b[uid]
        if a is None or b is None:
            continue
        diffs[uid] = (a - b) if higher_is_better else (b - a)
    return diffs


def _test(diffs):
    d = np.array(list(diffs.values()), dtype=float)
    n = d.size
    improved = int(np.sum(d >= RETENTION_TOL))
    regressed = int(np.sum(d <= -RETENTION_TOL))
    retained = n - improved - regressed
    out = {
        "n_users": n,
        "improved": improved,
        "retained": retained,
        "regressed": regressed,
        "improved_k_of_n": f"{improved} out of {n}",
        "improved_or_retained_k_of_n": f"{improved + retained} out of {n}",
    }
    try:
        two = metrics.wilcoxon_signed_rank(d, "two-sided")
        one = metrics.wilcoxon_signed_rank(d, "greater")
        out.update(degenerate=False, statistic=two.statistic, n_effective=two.n_effective, exact=two.exact,
                   p_two_sided=two.p_value, p_one_sided=one.p_value)
    except metrics.DegenerateError:
        out.update(degenerate=True, statistic=None, n_effective=0, exact=None, p_two_sided=None, p_one_sided=None)
    return out


def compare_reports(reports):
    if len(reports) < 2:
        raise UsageError("compare needs at least two reports")
    users = [sorted(u["user_id"] for u in r["users"]) for r in reports]
    if any(u != users[0] for u in users):
        raise DataError("reports cover different user sets")
    names = [r["variant"] for r in reports]
    if len(set(names)) != len(names):
        names = [f"{n}#{i}" for i, n in enumerate(names)]
    lat = [{u["user_id"]: u["median_latency_ms"] for u in r["users"]} for r in reports]
    acc = [{u["user_id"]: u["accuracy"] for u in r["users"]} for r in reports]
    pairs = []
    for i in range(len(reports)):
        for j in range(len(reports)):
            if i == j:
                continue
            pairs.append({
                "a": names[i],
                "b": names[j],
                "latency": _test(_paired(lat[i], lat[j], higher_is_better=False)),
                "accuracy": _test(_paired(acc[i], acc[j], higher_is_better=True)),
            })
    winners = {}
    for key, better in (("feer_pvad", min), ("feer_vad", min), ("ueer", min),
                        ("median_latency_ms", min), ("median_accuracy", max)):
        vals = [(r[key], n) for r, n in zip(reports, names) if r.get(key) is not None]
        if vals:
            best = better(v for v, _ in vals)
            winners[key] = {"value": best, "variants": [n for v, n in vals if v == best]}
    return {"variants": names, "users": users[0], "pairs": pairs, "winners": winners}


def cmd_compare(args):
    if not args.reports:
        raise UsageError("compare needs report paths")
    result = compare_reports([_load_report(p) for p in args.reports])
    text = _dump(result)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot


def _num(x):
    return {"inf": float("inf"), "-inf": float("-inf")}.get(x, x) if isinstance(x, str) else x


def render_plots(reports):
    """Map file name to SVG text; plots whose series are all missing are skipped."""
    out = {}
    det = {}
    for r in reports:
        pts = r.get("det", {}).get("pvad_frame")
        if pts:
            det[r["variant"]] = [(p[1], p[2]) for p in pts]
    if det:
        out["det_pvad_frame.svg"] = plots.line_plot(det, "Frame-level DET (PVAD)", "false positive rate",
                                                    "false negative rate", (0.0, 1.0), (0.0, 1.0))
    else:
        log.warning("no DET series in the reports; skipping DET plot")
    avd = {r["variant"]: [tuple(p) for p in r["accuracy_vs_duration"]] for r in reports if r.get("accuracy_vs_duration")}
    if avd:
        out["accuracy_vs_duration.svg"] = plots.line_plot(avd, "Detection accuracy vs audio duration",
                                                          "duration after onset (ms)", "accuracy",
                                                          yrange=(0.0, 1.0))
    else:
        log.warning("no accuracy-vs-duration series in the reports; skipping that plot")
    users = {}
    for r in reports:
        pts = [(u["median_latency_ms"], u["accuracy"]) for u in r.get("users", []) if u["median_latency_ms"] is not None]
        if pts:
            users[r["variant"]] = pts
    if users:
        out["users.svg"] = plots.scatter_plot(users, "Per-user latency and accuracy", "median latency (ms)",
                                              "detection accuracy")
    else:
        log.warning("no per-user series in the reports; skipping scatter plot")
    return out


def cmd_plot(args):
    if not args.reports:
        raise UsageError("plot needs report paths")
    out = Path(_require(args.out, "--out"))
    out.mkdir(parents=True, exist_ok=True)
    for name, svg in render_plots([_load_report(p) for p in args.reports]).items():
        (out / name).write_text(svg)
        print(out / name)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI file with [corpus] and [train] sections")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed override (falls back to $PVAD_SEED)")
    common.add_argument("--variant", help="comma-separated subset of DSC,EF,LF,CLF,DCLF")
    common.add_argument("--checkpoint", help="checkpoint file")
    common.add_argument("--corpus", help="corpus directory")
    common.add_argument("--durations", help="comma-separated durations in ms for accuracy-vs-duration")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="pvadbench", description="Personalized VAD benchmarking toolkit")
    parser.add_argument("--version", action="version", version=f"pvadbench {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="synthesize a corpus")
    sub.add_parser("train", parents=[common], help="train one or more systems")
    sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    for name, helptext in (("compare", "pairwise per-user statistics"), ("plot", "SVG plots from reports")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("reports", nargs="*")
    return parser


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "compare": cmd_compare, "plot": cmd_plot}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: synth, train, eval, compare or plot")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except training.NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, corpus_mod.CorpusError, training.CheckpointError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
