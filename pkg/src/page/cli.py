"""Command-line entry point: ``page {train,eval,synth,sweep,export-graph}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus import (
    CorpusError,
    SyntheticSpec,
    corpus_checksum,
    corpus_stats,
    generate_synthetic,
    parse_corpus,
    split_conversations,
    write_corpus,
)
from .encoder import EncoderConfig
from .harness import (
    METRICS_CSV_HEADER,
    MetricsReport,
    TrainConfig,
    TrainingDiverged,
    evaluate,
    f1_scores,
    sweep_csv,
    train,
    window_sweep,
)
from .model import ModelConfig, PageModel, PairPrediction
from .posgraph import build_graph, conversation_graph, export_dot

log = logging.getLogger("page")

DEFAULTS = {
    "format": "native",
    "seed": 0,
    "d_u": 300,
    "d_e": 100,
    "heads": 6,
    "encoder": "hash",
    "buckets": 16384,
    "base_dim": 128,
    "mlp_hidden": None,     # falls back to d_u
    "learned_qkv": False,
    "window": 3,
    "layers": 1,
    "c_norm": "2",
    "cls_hidden": 300,
    "epochs": 50,
    "batch": 4,
    "lr": 1e-3,
    "optimizer": "adam",
    "pos_weight": 1.0,
    "patience": 10,
    "val_fraction": 0.15,
    "threshold": 0.5,
    "ablate_pag": False,
}


class UsageError(Exception):
    pass


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--d-u", type=int, help="utterance dimension (default 300)")
    g.add_argument("--d-e", type=int, help="emotion embedding dimension (default 100)")
    g.add_argument("--heads", type=int, help="attention heads (default 6)")
    g.add_argument("--encoder", choices=["hash", "precomputed"], help="base encoder (default hash)")
    g.add_argument("--buckets", type=int, help="hash buckets (default 16384)")
    g.add_argument("--base-dim", type=int, help="hash embedding width (default 128)")
    g.add_argument("--mlp-hidden", type=int, help="residual MLP hidden size (default d_u)")
    g.add_argument("--learned-qkv", action="store_true", default=None,
                   help="learn query/key/value maps instead of using h_c directly")
    g.add_argument("--window", type=int, help="position window w (default 3)")
    g.add_argument("--layers", type=int, help="R-GCN layers (default 1)")
    g.add_argument("--c-norm", help="'degree' or a positive constant (default 2)")
    g.add_argument("--cls-hidden", type=int, help="classifier hidden size (default 300)")
    g.add_argument("--ablate-pag", action="store_true", default=None,
                   help="drop the position-aware graph stage")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch", type=int, help="conversations per optimizer step (default 4)")
    g.add_argument("--lr", type=float, help="learning rate (default 1e-3)")
    g.add_argument("--optimizer", choices=["adam", "sgd"])
    g.add_argument("--pos-weight", type=float, help="weight on positive-pair loss (default 1)")
    g.add_argument("--patience", type=int, help="early-stop patience in epochs (default 10)")
    g.add_argument("--val-fraction", type=float, help="validation split (default 0.15)")
    g.add_argument("--threshold", type=float, help="decision threshold (default 0.5)")


def _add_common(p: argparse.ArgumentParser, data_required: bool = True) -> None:
    p.add_argument("--data", required=data_required, help="corpus file")
    p.add_argument("--format", choices=["native", "reccon"], help="corpus format (default native)")
    p.add_argument("--seed", type=int, help="the only source of randomness (default 0)")
    p.add_argument("--config", help="JSON file of defaults; flags override it")
    p.add_argument("--out", help="output directory or file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="page", description=__doc__)
    parser.add_argument("--version", action="version", version=f"page {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint, log, metrics, manifest")
    _add_common(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--val-data", help="explicit validation corpus (otherwise a seeded split)")

    p = sub.add_parser("eval", help="score a checkpoint on a corpus, or score a predictions CSV")
    _add_common(p, data_required=False)
    p.add_argument("--checkpoint")
    p.add_argument("--predictions", help="score an existing predictions CSV instead of a model")
    p.add_argument("--d-u", type=int, help="expected d_u; mismatch with the checkpoint is an error")
    p.add_argument("--window", type=int, help="expected window; mismatch with the checkpoint is an error")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("synth", help="write a synthetic planted-cause corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="corpus JSON path")
    spec_defaults = SyntheticSpec()
    for f in dataclasses.fields(SyntheticSpec):
        if f.name == "seed":
            continue
        flag = "--" + f.name.replace("_", "-")
        default = getattr(spec_defaults, f.name)
        if isinstance(default, tuple):
            p.add_argument(flag, default=",".join(map(str, default)),
                           help=f"comma-separated (default {','.join(map(str, default))})")
        else:
            p.add_argument(flag, type=type(default), default=default, help=f"(default {default})")

    p = sub.add_parser("sweep", help="train/evaluate once per window size and seed")
    _add_common(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--w", default="1,2,3,4,5", help="comma-separated window sizes")
    p.add_argument("--seeds", type=int, default=1, help="number of seeds (seed, seed+1, ...)")
    p.add_argument("--test-data", help="score on this corpus instead of the validation split")

    p = sub.add_parser("export-graph", help="write the position-aware graph of a conversation as DOT")
    p.add_argument("--data", help="corpus file (or give --speakers)")
    p.add_argument("--format", choices=["native", "reccon"], default="native")
    p.add_argument("--conv-id", help="conversation id (default: first)")
    p.add_argument("--speakers", help="comma-separated speaker sequence, e.g. A,B,A,B,A")
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--out", help="DOT path (default stdout)")
    return parser


# ---------------------------------------------------------------- config resolution

def resolve(args: argparse.Namespace) -> dict:
    """Flags > config file > defaults, with every default materialised."""
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else file_cfg.get(key, default)
    if out["mlp_hidden"] is None:
        out["mlp_hidden"] = out["d_u"]
    return out


def _c_norm(value) -> tuple[str, float]:
    if str(value) == "degree":
        return "degree", 2.0
    try:
        c = float(value)
    except ValueError:
        raise UsageError(f"--c-norm must be 'degree' or a number, got {value!r}") from None
    if c <= 0:
        raise UsageError("--c-norm constant must be positive")
    return "fixed", c


def train_config(r: dict, base_dim: int | None = None) -> TrainConfig:
    c_mode, c_value = _c_norm(r["c_norm"])
    enc = EncoderConfig(d_u=r["d_u"], d_e=r["d_e"], heads=r["heads"], mode=r["encoder"],
                        buckets=r["buckets"], base_dim=base_dim or r["base_dim"],
                        mlp_hidden=r["mlp_hidden"], learned_qkv=bool(r["learned_qkv"]))
    model = ModelConfig(encoder=enc, window=r["window"], layers=r["layers"], c_mode=c_mode,
                        c_value=c_value, cls_hidden=r["cls_hidden"], ablate_pag=bool(r["ablate_pag"]))
    cfg = TrainConfig(model=model, epochs=r["epochs"], batch_size=r["batch"], lr=r["lr"],
                      optimizer=r["optimizer"], seed=r["seed"], patience=r["patience"],
                      pos_weight=r["pos_weight"], threshold=r["threshold"],
                      val_fraction=r["val_fraction"])
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _precomputed_dim(convs) -> int | None:
    for c in convs:
        for u in c.utterances:
            if u.vector is not None:
                return len(u.vector)
    return None


# ---------------------------------------------------------------- output helpers

def metrics_csv(reports: list[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_CSV_HEADER)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def predictions_csv(preds: list[PairPrediction]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["conv_id", "o", "t", "p", "label"])
    for p in preds:
        w.writerow([p.conv_id, p.o, p.t, repr(p.prob), int(bool(p.label))])
    return buf.getvalue()


def read_predictions(path) -> list[PairPrediction]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(PairPrediction(row["conv_id"], int(row["o"]), int(row["t"]),
                                          float(row["p"]), bool(int(row["label"]))))
            except (KeyError, ValueError) as exc:
                raise CorpusError(f"{path}: malformed prediction row {row}: {exc!r}") from exc
    return out


def _outdir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(path: Path, resolved: dict, cfg: TrainConfig | None, convs, artifacts: dict,
                   command: str) -> None:
    manifest = {
        "tool": "page",
        "version": __version__,
        "command": command,
        "seed": resolved.get("seed"),
        "resolved": resolved,
        "train_config": cfg.to_dict() if cfg else None,
        "corpus_checksum": corpus_checksum(convs) if convs is not None else None,
        "artifacts": artifacts,
    }
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    r = resolve(args)
    convs = parse_corpus(args.data, r["format"])
    if not convs:
        raise CorpusError(f"{args.data}: no conversations")
    base_dim = _precomputed_dim(convs) if r["encoder"] == "precomputed" else None
    cfg = train_config(r, base_dim)
    if args.val_data:
        train_convs, val_convs = convs, parse_corpus(args.val_data, r["format"])
    else:
        train_convs, val_convs = split_conversations(convs, cfg.val_fraction, cfg.seed)
    out = _outdir(args, "runs/train")
    artifacts = {"checkpoint": str(out / "model.npz"), "log": str(out / "train_log.tsv"),
                 "metrics": str(out / "metrics.csv"), "manifest": str(out / "manifest.json")}
    write_manifest(out / "manifest.json", {**r, "data": args.data, "val_data": args.val_data},
                   cfg, convs, artifacts, "train")
    log_path = out / "train_log.tsv"
    log_path.write_text("", encoding="utf-8")

    def on_epoch(line):
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        log.info(line)

    result = train(train_convs, cfg, val_convs or None, on_epoch=on_epoch)
    log_path.write_text("\n".join(result.log) + "\n", encoding="utf-8")
    result.model.save(out / "model.npz", {"seed": cfg.seed, "best_epoch": result.best_epoch})
    reports = [evaluate(result.model, train_convs, cfg.threshold, "train")[0]]
    if val_convs:
        reports.append(evaluate(result.model, val_convs, cfg.threshold, "val")[0])
    (out / "metrics.csv").write_text(metrics_csv(reports), encoding="utf-8")
    for rep in reports:
        print(f"{rep.name:>5}: {rep.summary()}")
    return 0


def cmd_eval(args) -> int:
    threshold = args.threshold if args.threshold is not None else DEFAULTS["threshold"]
    out = _outdir(args, "runs/eval")
    if args.predictions:
        preds = read_predictions(args.predictions)
        if not preds:
            raise CorpusError(f"{args.predictions}: no predictions")
        rep = f1_scores([p.hard(threshold) for p in preds], [p.label for p in preds], "predictions")
    else:
        if not args.checkpoint or not args.data:
            raise UsageError("eval needs --checkpoint and --data (or --predictions)")
        model = PageModel.load(args.checkpoint)
        for field, expected, actual in (("d_u", args.d_u, model.cfg.encoder.d_u),
                                        ("window", args.window, model.cfg.window)):
            if expected is not None and expected != actual:
                raise CorpusError(f"config mismatch on {field}: requested {expected}, checkpoint has {actual}")
        convs = parse_corpus(args.data, args.format or DEFAULTS["format"])
        rep, preds = evaluate(model, convs, threshold, "eval")
        (out / "predictions.csv").write_text(predictions_csv(preds), encoding="utf-8")
    (out / "metrics.csv").write_text(metrics_csv([rep]), encoding="utf-8")
    print("Neg F1\tPos F1\tMacro F1")
    print(f"{100 * rep.neg_f1:.2f}\t{100 * rep.pos_f1:.2f}\t{100 * rep.macro_f1:.2f}")
    return 0


def _int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(s).split(",") if x.strip())


def _float_tuple(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(s).split(",") if x.strip())


def cmd_synth(args) -> int:
    kw = {}
    for f in dataclasses.fields(SyntheticSpec):
        value = getattr(args, f.name)
        if f.name == "cause_distances":
            value = _int_tuple(value)
        elif f.name == "distance_weights":
            value = _float_tuple(value)
        kw[f.name] = value
    try:
        spec = SyntheticSpec(**kw)
        convs = generate_synthetic(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_corpus(args.out, convs)
    s = corpus_stats(convs)
    print(f"{s.conversations} conversations, {s.utterances} utterances, "
          f"{s.positive_pairs} positive / {s.negative_pairs} negative pairs")
    return 0


def cmd_sweep(args) -> int:
    r = resolve(args)
    try:
        w_values = _int_tuple(args.w)
    except ValueError:
        raise UsageError(f"--w must be comma-separated integers, got {args.w!r}") from None
    if not w_values or args.seeds < 1:
        raise UsageError("need at least one window and one seed")
    convs = parse_corpus(args.data, r["format"])
    test = parse_corpus(args.test_data, r["format"]) if args.test_data else None
    base_dim = _precomputed_dim(convs) if r["encoder"] == "precomputed" else None
    cfg = train_config(r, base_dim)
    out = _outdir(args, "runs/sweep")
    write_manifest(out / "manifest.json", {**r, "data": args.data, "w": list(w_values),
                                           "seeds": args.seeds, "test_data": args.test_data},
                   cfg, convs, {"sweep": str(out / "sweep.csv")}, "sweep")
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    rows = window_sweep(convs, cfg, w_values, seeds=seeds, test_convs=test)
    text = sweep_csv(rows)
    (out / "sweep.csv").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_export_graph(args) -> int:
    if args.speakers:
        speakers = [s.strip() for s in args.speakers.split(",") if s.strip()]
        graph = build_graph(speakers, args.window, labels=speakers)
        name = "conversation"
    elif args.data:
        convs = parse_corpus(args.data, args.format)
        if not convs:
            raise CorpusError(f"{args.data}: no conversations")
        conv = convs[0] if args.conv_id is None else next((c for c in convs if c.id == args.conv_id), None)
        if conv is None:
            raise CorpusError(f"no conversation with id {args.conv_id!r}")
        graph = conversation_graph(conv, args.window)
        name = conv.id
    else:
        raise UsageError("export-graph needs --data or --speakers")
    text = export_dot(graph, name)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "sweep": cmd_sweep,
    "export-graph": cmd_export_graph,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"page: error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, TrainingDiverged, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"page: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
