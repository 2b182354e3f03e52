"""Command-line entry point for reproducible experiment runs.

Commands: preprocess, filter, synth, train, cotrain, evaluate. Every
command is deterministic given its config; all randomness flows from the
global seed. Exit codes: 0 success, 1 usage/config error, 2 data/format
error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from adrx.confidence import GEOMETRIC_MEAN, NORMALIZATIONS
from adrx.corpus import (
    AnnotatedSequence,
    Label,
    lexicon_filter,
    load_labeled,
    load_lexicon,
    load_unlabeled,
    pad,
    preprocess,
)
from adrx.cotrain import CotrainConfig, format_log_table, run_cotraining
from adrx.embedding import (
    EmbeddingTable,
    RANDOM_SOURCE,
    ViewSpec,
    load_embedding_table,
    peek_embedding_dim,
)
from adrx.errors import ConfigError, DataFormatError
from adrx.evaluation import (
    FoldSummary,
    MatchReport,
    corpus_report,
    dump_predictions,
    format_fold_table,
    format_report,
    kfold_split,
)
from adrx.fileio import atomic_write_text
from adrx.seeding import derived_seed
from adrx.synth import SynthConfig, generate, write_synth
from adrx.transducer import (
    TrainConfig,
    fit,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

_INT_FIELDS = {
    "seed",
    "folds",
    "jobs",
    "hidden_dim",
    "view1_dim",
    "view1_oov_seed",
    "view2_dim",
    "view2_oov_seed",
    "batch_size",
    "max_epochs",
    "patience",
    "max_iter",
}
_FLOAT_FIELDS = {
    "learning_rate",
    "validation_fraction",
    "grad_clip",
    "tau",
}
_BOOL_FIELDS = {"reinit_each_iteration"}
_BOOL_VALUES = {
    "true": True,
    "false": False,
    "yes": True,
    "no": False,
    "1": True,
    "0": False,
}


@dataclass(frozen=True)
class RunConfig:
    """All knobs of a train/cotrain run; mirrors the manifest file."""

    labeled: str = ""
    pool: str = ""
    out: str = ""
    seed: int = 0
    folds: int = 10
    jobs: int = 1
    hidden_dim: int = 500
    view1_emb: str = RANDOM_SOURCE
    view1_dim: int = 400
    view1_oov_seed: int = -1  # -1 derives a seed from the global seed
    view2_emb: str = RANDOM_SOURCE
    view2_dim: int = 300
    view2_oov_seed: int = -1
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 25
    patience: int = 3
    validation_fraction: float = 0.1
    grad_clip: float = 5.0
    tau: float = 0.5
    max_iter: int = 5
    score_normalization: str = GEOMETRIC_MEAN
    reinit_each_iteration: bool = False

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        values: dict[str, object] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, raw, f"{path}:{lineno}")
        return cls(**values)

    def manifest(self) -> str:
        lines = [
            f"{field.name} = {getattr(self, field.name)}"
            for field in dataclasses.fields(self)
        ]
        return "\n".join(lines) + "\n"

    def view1_spec(self) -> ViewSpec:
        oov = (
            self.view1_oov_seed
            if self.view1_oov_seed >= 0
            else derived_seed(self.seed, 11)
        )
        return ViewSpec.view1(self.view1_emb, self.view1_dim, oov)

    def view2_spec(self) -> ViewSpec:
        oov = (
            self.view2_oov_seed
            if self.view2_oov_seed >= 0
            else derived_seed(self.seed, 12)
        )
        return ViewSpec.view2(self.view2_emb, self.view2_dim, oov)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_patience=self.patience,
            validation_fraction=self.validation_fraction,
            grad_clip=self.grad_clip,
            seed=seed,
        )


def _coerce(key: str, raw: str, where: str) -> object:
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        if key in _BOOL_FIELDS:
            return _BOOL_VALUES[raw.lower()]
    except (ValueError, KeyError):
        raise ConfigError(f"{where}: bad value {raw!r} for {key}") from None
    return raw


def _require_file(path: str, what: str) -> Path:
    if not path:
        raise ConfigError(f"{what} path is required")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {p}")
    return p


def _validate_embedding(spec: ViewSpec) -> None:
    if spec.embedding_source == RANDOM_SOURCE:
        return
    path = _require_file(spec.embedding_source, f"{spec.name} embedding")
    found = peek_embedding_dim(path)
    if found != spec.embedding_dim:
        raise ConfigError(
            f"{spec.name}: configured dim {spec.embedding_dim} but "
            f"{path} declares {found}"
        )


def _load_run_config(args: argparse.Namespace, cotrain: bool) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {
        name: value
        for name, value in vars(args).items()
        if name in {f.name for f in dataclasses.fields(RunConfig)}
        and value is not None
    }
    cfg = dataclasses.replace(cfg, **overrides)
    # Fail fast: constructing probe configs rejects bad knobs before any
    # corpus is read or training starts.
    cfg.train_config(seed=0)
    if cotrain:
        CotrainConfig(
            tau=cfg.tau,
            max_iterations=cfg.max_iter,
            seed=0,
            score_normalization=cfg.score_normalization,
            reinit_each_iteration=cfg.reinit_each_iteration,
        )
    if cfg.folds < 2:
        raise ConfigError("folds must be >= 2")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg.hidden_dim < 1:
        raise ConfigError("hidden_dim must be >= 1")
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("an output directory is required (--out)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fold_jobs(jobs: int, worker, payloads: list) -> list:
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if jobs == 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
        return list(pool.map(worker, payloads))


def _train_fold(payload):
    cfg, table, spec, fold_index, train_corpus, test_corpus = payload
    params = init_params(
        spec.cell_kind,
        table.dim,
        cfg.hidden_dim,
        derived_seed(cfg.seed, 100, fold_index, 0),
    )
    result = fit(
        params,
        table,
        train_corpus,
        cfg.train_config(derived_seed(cfg.seed, 100, fold_index, 1)),
    )
    report = corpus_report(result.params, table, test_corpus)
    return fold_index, result.params, report


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args, cotrain=False)
    labeled_path = _require_file(cfg.labeled, "labeled corpus")
    spec = cfg.view1_spec()
    _validate_embedding(spec)
    out = _out_dir(cfg)

    corpus = load_labeled(labeled_path)
    if len(corpus) < cfg.folds:
        raise ConfigError(
            f"{cfg.folds} folds need at least {cfg.folds} examples, "
            f"corpus has {len(corpus)}"
        )
    table = spec.load_table()
    padded = pad(corpus.examples, corpus.max_length)
    folds = kfold_split(padded, cfg.folds, cfg.seed)

    payloads = [
        (cfg, table, spec, i, train_corpus, test_corpus)
        for i, (train_corpus, test_corpus) in enumerate(folds)
    ]
    results = _fold_jobs(cfg.jobs, _train_fold, payloads)

    reports = []
    for fold_index, params, report in results:
        save_checkpoint(params, out / f"fold_{fold_index:02d}.npz")
        dump_predictions(
            params,
            table,
            folds[fold_index][1],
            out / f"fold_{fold_index:02d}_predictions.tsv",
        )
        reports.append(report)
    summary = FoldSummary.from_reports(reports)
    atomic_write_text(out / "folds.tsv", format_fold_table(summary))
    atomic_write_text(
        out / "report.tsv", format_report([("baseline_view1", summary)])
    )
    atomic_write_text(out / "manifest.txt", cfg.manifest())
    print(
        f"baseline_view1 f1 {summary.mean_f1:.4f}±{summary.std_f1:.4f} "
        f"over {cfg.folds} folds -> {out}"
    )
    return 0


def _cotrain_fold(payload):
    cfg, view1, view2, fold_index, train_corpus, test_corpus, unlabeled = payload
    result = run_cotraining(
        train_corpus,
        unlabeled,
        view1,
        view2,
        CotrainConfig(
            tau=cfg.tau,
            max_iterations=cfg.max_iter,
            seed=derived_seed(cfg.seed, 200, fold_index),
            score_normalization=cfg.score_normalization,
            reinit_each_iteration=cfg.reinit_each_iteration,
        ),
        cfg.train_config(derived_seed(cfg.seed, 201, fold_index)),
        hidden_dim=cfg.hidden_dim,
    )
    table1 = view1.load_table()
    table2 = view2.load_table()
    report1 = corpus_report(result.params1, table1, test_corpus)
    report2 = corpus_report(result.params2, table2, test_corpus)
    return fold_index, result.params1, result.params2, result.log, report1, report2


def cmd_cotrain(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args, cotrain=True)
    labeled_path = _require_file(cfg.labeled, "labeled corpus")
    pool_path = _require_file(cfg.pool, "unlabeled pool")
    view1 = cfg.view1_spec()
    view2 = cfg.view2_spec()
    _validate_embedding(view1)
    _validate_embedding(view2)
    out = _out_dir(cfg)

    corpus = load_labeled(labeled_path)
    if len(corpus) < cfg.folds:
        raise ConfigError(
            f"{cfg.folds} folds need at least {cfg.folds} examples, "
            f"corpus has {len(corpus)}"
        )
    unlabeled = load_unlabeled(pool_path)
    if not unlabeled:
        print(
            "warning: unlabeled pool is empty; co-training degenerates to "
            "one supervised round per view",
            file=sys.stderr,
        )
    padded = pad(corpus.examples, corpus.max_length)
    folds = kfold_split(padded, cfg.folds, cfg.seed)

    payloads = [
        (cfg, view1, view2, i, train_corpus, test_corpus, unlabeled)
        for i, (train_corpus, test_corpus) in enumerate(folds)
    ]
    results = _fold_jobs(cfg.jobs, _cotrain_fold, payloads)

    reports1, reports2 = [], []
    for fold_index, params1, params2, log, report1, report2 in results:
        fold_dir = out / f"fold_{fold_index:02d}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(params1, fold_dir / "view1.npz")
        save_checkpoint(params2, fold_dir / "view2.npz")
        atomic_write_text(fold_dir / "iterations.tsv", format_log_table(log))
        reports1.append(report1)
        reports2.append(report2)
    summary1 = FoldSummary.from_reports(reports1)
    summary2 = FoldSummary.from_reports(reports2)
    atomic_write_text(out / "folds_view1.tsv", format_fold_table(summary1))
    atomic_write_text(out / "folds_view2.tsv", format_fold_table(summary2))
    atomic_write_text(
        out / "report.tsv",
        format_report([("cotrain_view1", summary1), ("cotrain_view2", summary2)]),
    )
    atomic_write_text(out / "manifest.txt", cfg.manifest())
    print(
        f"cotrain_view1 f1 {summary1.mean_f1:.4f}±{summary1.std_f1:.4f}, "
        f"cotrain_view2 f1 {summary2.mean_f1:.4f}±{summary2.std_f1:.4f} -> {out}"
    )
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    in_path = _require_file(args.input, "input")
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    with open(in_path, encoding="utf-8") as handle:
        for line in handle:
            tokens = preprocess(line)
            if tokens:
                lines.append(" ".join(tokens))
    atomic_write_text(out_path, "\n".join(lines) + "\n" if lines else "")
    print(f"wrote {len(lines)} sequences to {out_path}")
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    in_path = _require_file(args.input, "unlabeled pool")
    lexicon = load_lexicon(
        _require_file(args.drug_lexicon, "drug lexicon"),
        _require_file(args.adr_lexicon, "ADR lexicon"),
    )
    out_path = Path(args.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    raw_lines: list[str] = []
    sequences: list[AnnotatedSequence] = []
    with open(in_path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            tokens = preprocess(line)
            if not tokens:
                continue
            sequences.append(
                AnnotatedSequence(
                    tokens,
                    [Label.O] * len(tokens),
                    len(tokens),
                    str(len(raw_lines)),
                )
            )
            raw_lines.append(line)
    kept = lexicon_filter(sequences, lexicon)
    out_lines = [raw_lines[int(seq.source_id)] for seq in kept]
    atomic_write_text(out_path, "\n".join(out_lines) + "\n" if out_lines else "")
    print(f"kept {len(out_lines)} of {len(raw_lines)} sequences -> {out_path}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        n_labeled=args.n_labeled,
        n_unlabeled=args.n_unlabeled,
        background_vocab=args.background_vocab,
        adr_vocab=args.adr_vocab,
        n_adr_phrases=args.adr_phrases,
        n_drugs=args.drugs,
        other_vocab=args.other_vocab,
        n_other_phrases=args.other_phrases,
        len_min=args.len_min,
        len_max=args.len_max,
        decoy_rate=args.decoy_rate,
        extra_adr_rate=args.extra_adr_rate,
        other_rate=args.other_rate,
        seed=args.seed if args.seed is not None else 0,
    )
    if not args.out:
        raise ConfigError("an output directory is required (--out)")
    paths = write_synth(generate(cfg), args.out)
    print(
        f"wrote {cfg.n_labeled} labeled / {cfg.n_unlabeled} unlabeled "
        f"sequences to {Path(args.out)}"
    )
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    params = load_checkpoint(_require_file(args.model, "model checkpoint"))
    if args.emb == RANDOM_SOURCE:
        table = EmbeddingTable.random(params.embed_dim, args.oov_seed)
    else:
        emb_path = _require_file(args.emb, "embedding")
        found = peek_embedding_dim(emb_path)
        if found != params.embed_dim:
            raise ConfigError(
                f"checkpoint expects dim {params.embed_dim} but {emb_path} "
                f"declares {found}"
            )
        table = load_embedding_table(emb_path, params.embed_dim, args.oov_seed)
    corpus = load_labeled(_require_file(args.data, "labeled corpus"))
    if not corpus.examples:
        raise ConfigError("labeled corpus is empty")
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    padded = pad(corpus.examples, corpus.max_length)
    report = corpus_report(params, table, padded)
    dump_predictions(params, table, padded, out / "predictions.tsv")
    atomic_write_text(out / "report.tsv", _single_report_table(report))
    print(
        f"precision {report.precision:.4f} recall {report.recall:.4f} "
        f"f1 {report.f1:.4f} -> {out}"
    )
    return 0


def _single_report_table(report: MatchReport) -> str:
    header = (
        "precision\trecall\tf1\tmatched_predicted\tmatched_gold"
        "\tpredicted_total\tgold_total"
    )
    row = (
        f"{report.precision:.6f}\t{report.recall:.6f}\t{report.f1:.6f}"
        f"\t{report.matched_predicted}\t{report.matched_gold}"
        f"\t{report.predicted_total}\t{report.gold_total}"
    )
    return header + "\n" + row + "\n"


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit 1 instead of 2."""

    def error(self, message: str):
        raise ConfigError(message)


def _add_run_flags(parser: argparse.ArgumentParser, cotrain: bool) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--labeled", help="labeled corpus path")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int, help="parallel fold workers")
    parser.add_argument("--folds", type=int)
    parser.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    parser.add_argument("--view1-emb", dest="view1_emb", help="path or 'random'")
    parser.add_argument("--view1-dim", type=int, dest="view1_dim")
    parser.add_argument("--view1-oov-seed", type=int, dest="view1_oov_seed")
    parser.add_argument("--epochs", type=int, dest="max_epochs")
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--patience", type=int)
    parser.add_argument(
        "--validation-fraction", type=float, dest="validation_fraction"
    )
    if cotrain:
        parser.add_argument("--pool", help="unlabeled pool path")
        parser.add_argument("--tau", type=float)
        parser.add_argument("--max-iter", type=int, dest="max_iter")
        parser.add_argument("--view2-emb", dest="view2_emb", help="path or 'random'")
        parser.add_argument("--view2-dim", type=int, dest="view2_dim")
        parser.add_argument("--view2-oov-seed", type=int, dest="view2_oov_seed")
        parser.add_argument(
            "--score-normalization",
            dest="score_normalization",
            choices=NORMALIZATIONS,
        )
        parser.add_argument(
            "--reinit-each-iteration",
            dest="reinit_each_iteration",
            action="store_const",
            const=True,
            default=None,
        )


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="adrx",
        description="Co-training toolkit for ADR mention extraction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="normalize raw posts into token lines")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser(
        "filter", help="keep pool lines containing a drug name and an ADR phrase"
    )
    p.add_argument("input")
    p.add_argument("drug_lexicon")
    p.add_argument("adr_lexicon")
    p.add_argument("output")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("synth", help="generate a synthetic corpus plus lexicons")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-labeled", type=int, default=50, dest="n_labeled")
    p.add_argument("--n-unlabeled", type=int, default=2000, dest="n_unlabeled")
    p.add_argument(
        "--background-vocab", type=int, default=120, dest="background_vocab"
    )
    p.add_argument("--adr-vocab", type=int, default=16, dest="adr_vocab")
    p.add_argument("--adr-phrases", type=int, default=24, dest="adr_phrases")
    p.add_argument("--drugs", type=int, default=6)
    p.add_argument("--other-vocab", type=int, default=8, dest="other_vocab")
    p.add_argument("--other-phrases", type=int, default=6, dest="other_phrases")
    p.add_argument("--len-min", type=int, default=8, dest="len_min")
    p.add_argument("--len-max", type=int, default=16, dest="len_max")
    p.add_argument("--decoy-rate", type=float, default=0.35, dest="decoy_rate")
    p.add_argument(
        "--extra-adr-rate", type=float, default=0.30, dest="extra_adr_rate"
    )
    p.add_argument("--other-rate", type=float, default=0.30, dest="other_rate")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="k-fold supervised baseline on view 1")
    _add_run_flags(p, cotrain=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cotrain", help="k-fold two-view co-training")
    _add_run_flags(p, cotrain=True)
    p.set_defaults(func=cmd_cotrain)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--emb", default=RANDOM_SOURCE, help="path or 'random'")
    p.add_argument("--oov-seed", type=int, default=0, dest="oov_seed")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure contract of the CLI
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
