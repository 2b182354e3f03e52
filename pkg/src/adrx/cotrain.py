"""Two-view co-training loop with confidence-based pseudo-label exchange.

Each iteration trains both transducers on their current training sets,
then scans the unlabeled pool in ingestion order: a sample the view-1
model accepts (score >= tau) moves with its view-1 pseudo-labels into the
view-2 training set, otherwise a sample the view-2 model accepts moves
into the view-1 training set. Accepted pseudo-labels are frozen; samples
never return to the pool.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from adrx.confidence import GEOMETRIC_MEAN, NORMALIZATIONS, score_pool
from adrx.corpus import AnnotatedSequence, Corpus, pad
from adrx.embedding import ViewSpec
from adrx.errors import ConfigError
from adrx.seeding import derived_seed
from adrx.transducer import TrainConfig, TransducerParams, fit, init_params

LOG_COLUMNS = (
    "iteration",
    "accepted_t1",
    "accepted_t2",
    "pool_remaining",
    "train_loss_1",
    "train_loss_2",
    "val_loss_1",
    "val_loss_2",
)


@dataclass(frozen=True)
class CotrainConfig:
    tau: float = 0.5
    max_iterations: int = 5
    seed: int = 0
    score_normalization: str = GEOMETRIC_MEAN
    # Algorithm fidelity keeps one initialization outside the loop; the
    # reinit flag exists for ablation only.
    reinit_each_iteration: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.score_normalization not in NORMALIZATIONS:
            raise ConfigError(
                f"score_normalization must be one of {NORMALIZATIONS}"
            )
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class IterationRecord:
    """Ledger entry for one co-training iteration.

    The accepted_* lists carry the source ids of exchanged pool samples,
    giving per-sample provenance (accepted_into_t2 came from the view-1
    model and vice versa). Reported losses are the best-epoch values of
    that iteration's training runs.
    """

    iteration: int
    accepted_into_t1: list[str]
    accepted_into_t2: list[str]
    pool_remaining: int
    train_loss_1: float
    train_loss_2: float
    val_loss_1: float
    val_loss_2: float


@dataclass
class CotrainState:
    """Mutable loop state with conservation and monotonicity checks."""

    t1: list[AnnotatedSequence]
    t2: list[AnnotatedSequence]
    pool: list[AnnotatedSequence]
    params1: TransducerParams
    params2: TransducerParams
    iteration: int = 0
    log: list[IterationRecord] = field(default_factory=list)
    initial_pool_size: int = 0
    initial_t1_size: int = 0
    initial_t2_size: int = 0

    def check_invariants(self) -> None:
        accepted_t1 = [sid for rec in self.log for sid in rec.accepted_into_t1]
        accepted_t2 = [sid for rec in self.log for sid in rec.accepted_into_t2]
        if self.initial_pool_size != len(self.pool) + len(accepted_t1) + len(
            accepted_t2
        ):
            raise AssertionError("pool conservation violated")
        if len(self.t1) != self.initial_t1_size + len(accepted_t1):
            raise AssertionError("t1 grew inconsistently with the log")
        if len(self.t2) != self.initial_t2_size + len(accepted_t2):
            raise AssertionError("t2 grew inconsistently with the log")
        # Cross-exchange provenance: logged ids match the appended samples.
        t1_tail = [seq.source_id for seq in self.t1[self.initial_t1_size :]]
        t2_tail = [seq.source_id for seq in self.t2[self.initial_t2_size :]]
        if t1_tail != accepted_t1 or t2_tail != accepted_t2:
            raise AssertionError("exchange provenance mismatch")
        pool_ids = {seq.source_id for seq in self.pool}
        if pool_ids & set(accepted_t1) or pool_ids & set(accepted_t2):
            raise AssertionError("sample present in both pool and a training set")
        if set(accepted_t1) & set(accepted_t2):
            raise AssertionError("sample accepted into both training sets")


@dataclass
class CotrainResult:
    params1: TransducerParams
    params2: TransducerParams
    log: list[IterationRecord]
    state: CotrainState


def _shared_padding_length(
    labeled: Corpus, unlabeled: Sequence[AnnotatedSequence]
) -> int:
    longest = max(
        (seq.original_length for seq in labeled.examples),
        default=labeled.max_length,
    )
    for seq in unlabeled:
        longest = max(longest, seq.original_length)
    return max(longest, 1)


def run_cotraining(
    labeled: Corpus,
    unlabeled: Iterable[AnnotatedSequence],
    view1: ViewSpec,
    view2: ViewSpec,
    cfg: CotrainConfig,
    train_cfg: TrainConfig,
    hidden_dim: int = 500,
) -> CotrainResult:
    """Run the co-training loop and return both models plus the iteration log.

    Both training sets start as the labeled data rendered under each view's
    embedding table; parameters are initialized once, before the loop, and
    warm-start every iteration. The loop stops when the iteration budget is
    exhausted, the pool empties, or an iteration accepts nothing.
    """
    if not labeled.examples:
        raise ConfigError("co-training requires a non-empty labeled corpus")
    if view1.name == view2.name:
        raise ConfigError("the two views must differ")
    table1 = view1.load_table()
    table2 = view2.load_table()

    pool_raw = list(unlabeled)
    length = _shared_padding_length(labeled, pool_raw)
    t1 = list(pad(labeled.examples, length).examples)
    t2 = list(pad(labeled.examples, length).examples)
    pool = list(pad(pool_raw, length).examples) if pool_raw else []

    params1 = init_params(
        view1.cell_kind, table1.dim, hidden_dim, derived_seed(cfg.seed, 1)
    )
    params2 = init_params(
        view2.cell_kind, table2.dim, hidden_dim, derived_seed(cfg.seed, 2)
    )
    state = CotrainState(
        t1,
        t2,
        pool,
        params1,
        params2,
        initial_pool_size=len(pool),
        initial_t1_size=len(t1),
        initial_t2_size=len(t2),
    )

    for iteration in range(1, cfg.max_iterations + 1):
        state.iteration = iteration
        if cfg.reinit_each_iteration and iteration > 1:
            state.params1 = init_params(
                view1.cell_kind, table1.dim, hidden_dim,
                derived_seed(cfg.seed, 1, iteration),
            )
            state.params2 = init_params(
                view2.cell_kind, table2.dim, hidden_dim,
                derived_seed(cfg.seed, 2, iteration),
            )

        cfg1 = dataclasses.replace(
            train_cfg, seed=derived_seed(train_cfg.seed, iteration, 1)
        )
        cfg2 = dataclasses.replace(
            train_cfg, seed=derived_seed(train_cfg.seed, iteration, 2)
        )
        result1 = fit(state.params1, table1, Corpus(state.t1, length), cfg1)
        result2 = fit(state.params2, table2, Corpus(state.t2, length), cfg2)
        state.params1 = result1.params
        state.params2 = result2.params

        scores1 = score_pool(
            state.params1, table1, state.pool, cfg.tau, cfg.score_normalization
        )
        scores2 = score_pool(
            state.params2, table2, state.pool, cfg.tau, cfg.score_normalization
        )
        accepted_t1: list[str] = []
        accepted_t2: list[str] = []
        remaining: list[AnnotatedSequence] = []
        for seq, s1, s2 in zip(state.pool, scores1, scores2):
            # The view-1 model is consulted first; a sample it accepts is
            # removed before the view-2 model could claim it.
            if s1 is not None and s1.score >= cfg.tau:
                state.t2.append(s1.sequence)
                accepted_t2.append(seq.source_id)
            elif s2 is not None and s2.score >= cfg.tau:
                state.t1.append(s2.sequence)
                accepted_t1.append(seq.source_id)
            else:
                remaining.append(seq)
        state.pool = remaining

        best1 = result1.best_epoch - 1
        best2 = result2.best_epoch - 1
        state.log.append(
            IterationRecord(
                iteration,
                accepted_t1,
                accepted_t2,
                len(state.pool),
                result1.train_losses[best1],
                result2.train_losses[best2],
                result1.val_losses[best1],
                result2.val_losses[best2],
            )
        )
        state.check_invariants()
        if not state.pool or (not accepted_t1 and not accepted_t2):
            break

    return CotrainResult(state.params1, state.params2, state.log, state)


def format_log_table(log: Sequence[IterationRecord]) -> str:
    """Render the iteration log as the tab-delimited run ledger."""
    lines = ["\t".join(LOG_COLUMNS)]
    for rec in log:
        lines.append(
            "\t".join(
                [
                    str(rec.iteration),
                    str(len(rec.accepted_into_t1)),
                    str(len(rec.accepted_into_t2)),
                    str(rec.pool_remaining),
                    f"{rec.train_loss_1:.6f}",
                    f"{rec.train_loss_2:.6f}",
                    f"{rec.val_loss_1:.6f}",
                    f"{rec.val_loss_2:.6f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"
