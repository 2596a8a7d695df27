"""Staged distillation driver.

A run builds a small bilingual student in four stages: the assistant learns
the teacher's space on anchor sentences (1), the student's embedding path
learns to mimic the assistant's embedding layer (2), the whole student
imitates the assistant (3), and finally the student trains against the
teacher with a contrastive plus distillation objective (4). Single-stage
baselines reuse the same machinery for comparison runs.

Every random draw flows from the run seed through labeled streams, so a
config plus seed pins the final checkpoint bytes on one platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, backward, zero_grads
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    OracleSemantics,
    ParallelBatch,
    ParallelPair,
    VocabSpec,
    batch_pairs,
    load_sts_tsv,
    oracle_embed_batch,
    read_parallel_tsv,
)
from .encoder import EncoderConfig, SentenceEncoder, init_student_from_assistant
from .errors import ConfigError, ContractError, NumericError
from .evaluate import EvalReport, retrieval_accuracy, sts_evaluate
from .losses import CeLossConfig, loss_anchor_align, loss_pairwise_align, loss_stage4
from .optim import AdamW
from .rng import stream

STAGE_TRAINABLE_ROLE = {1: "assistant", 2: "student", 3: "student", 4: "student"}
STAGE_FROZEN_ROLES = {1: (), 2: ("assistant",), 3: ("assistant",), 4: ("assistant",)}
STAGE_LOSS_NAME = {
    1: "anchor_align",
    2: "embedding_align",
    3: "pairwise_align",
    4: "contrastive_plus_kd",
}

# parameters the embedding-alignment stage is allowed to move
EMBEDDING_PATH_KEYS = (
    "embedding.word",
    "embedding.factor",
    "embedding.proj",
    "embedding.ln.scale",
    "embedding.ln.shift",
)


def derive_seed(seed: int, label: str) -> int:
    """Stable sub-seed for one named purpose within a run."""
    return int(stream(seed, label).integers(0, 2**31 - 1))


@dataclass(frozen=True)
class OptimizerPlan:
    lr: float = 2e-3
    weight_decay: float = 0.01
    warmup_fraction: float = 0.1

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "warmup_fraction": self.warmup_fraction,
        }


@dataclass(frozen=True)
class StagePlan:
    """One stage's schedule. Roles and loss are fixed by the stage number."""

    stage: int
    epochs: int
    batch_size: int = 64
    optimizer: OptimizerPlan = field(default_factory=OptimizerPlan)

    def __post_init__(self):
        if self.stage not in (1, 2, 3, 4):
            raise ConfigError(f"stage must be 1..4, got {self.stage}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")

    @property
    def trainable_role(self) -> str:
        return STAGE_TRAINABLE_ROLE[self.stage]

    @property
    def frozen_roles(self) -> tuple[str, ...]:
        return STAGE_FROZEN_ROLES[self.stage]

    @property
    def loss_name(self) -> str:
        return STAGE_LOSS_NAME[self.stage]

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "StagePlan":
        opt = OptimizerPlan(**raw.get("optimizer", {}))
        return cls(
            stage=raw["stage"], epochs=raw["epochs"],
            batch_size=raw.get("batch_size", 64), optimizer=opt,
        )


@dataclass
class PipelineConfig:
    """Everything a run needs: data locations, model shapes, and schedules."""

    corpus_dir: str
    out_dir: str
    assistant: EncoderConfig
    student: EncoderConfig
    sts_path: str | None = None
    seed: int = 0
    teacher_dim: int = 64
    teacher_seed: int = 0
    max_seq_len: int = 16
    variant: str = "mcl"
    ce_temperature: float = 0.05
    stages: tuple[StagePlan, ...] = ()
    eval_every_epoch: bool = True

    def __post_init__(self):
        if not self.stages:
            self.stages = default_stage_plans()
        self.stages = tuple(self.stages)
        if [p.stage for p in self.stages] != [1, 2, 3, 4]:
            raise ConfigError("stages must cover 1, 2, 3, 4 exactly once, in order")
        if self.variant not in ("mcl", "bool", "ce", "none"):
            raise ConfigError(f"unknown contrastive variant {self.variant!r}")
        if self.ce_temperature <= 0:
            raise ConfigError("ce_temperature must be positive")
        if self.teacher_dim != self.assistant.hidden:
            raise ConfigError(
                f"teacher_dim {self.teacher_dim} must equal assistant hidden "
                f"{self.assistant.hidden} so alignment losses compare like with like"
            )
        if self.student.hidden != self.assistant.hidden:
            raise ConfigError("student and assistant hidden sizes must match")
        if self.max_seq_len > min(self.assistant.max_positions, self.student.max_positions):
            raise ConfigError("max_seq_len exceeds an encoder's position table")

    def plan(self, stage: int) -> StagePlan:
        return self.stages[stage - 1]

    def to_dict(self) -> dict:
        return {
            "corpus_dir": self.corpus_dir,
            "out_dir": self.out_dir,
            "assistant": self.assistant.to_dict(),
            "student": self.student.to_dict(),
            "sts_path": self.sts_path,
            "seed": self.seed,
            "teacher_dim": self.teacher_dim,
            "teacher_seed": self.teacher_seed,
            "max_seq_len": self.max_seq_len,
            "variant": self.variant,
            "ce_temperature": self.ce_temperature,
            "stages": [p.to_dict() for p in self.stages],
            "eval_every_epoch": self.eval_every_epoch,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        try:
            assistant = EncoderConfig.from_dict(raw.pop("assistant"))
            student = EncoderConfig.from_dict(raw.pop("student"))
            stages = tuple(StagePlan.from_dict(p) for p in raw.pop("stages", []))
        except KeyError as exc:
            raise ConfigError(f"config missing required field {exc}") from exc
        known = {
            "corpus_dir", "out_dir", "sts_path", "seed", "teacher_dim",
            "teacher_seed", "max_seq_len", "variant", "ce_temperature",
            "eval_every_epoch",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(assistant=assistant, student=student, stages=stages, **raw)


def default_stage_plans(
    epochs: tuple[int, int, int, int] = (5, 5, 5, 15),
    batch_size: int = 64,
    lr: float = 2e-3,
) -> tuple[StagePlan, ...]:
    """Desk-scale schedule keeping the 1:3 ratio of early-stage to final-stage epochs."""
    opt = OptimizerPlan(lr=lr)
    return tuple(
        StagePlan(stage=k, epochs=epochs[k - 1], batch_size=batch_size, optimizer=opt)
        for k in (1, 2, 3, 4)
    )


def toy_config(corpus_dir, out_dir, sts_path=None, seed: int = 42) -> PipelineConfig:
    """Default small-world setup used by the end-to-end checks."""
    vocab_size = 4 + 2 * 512
    assistant = EncoderConfig(
        vocab_size=vocab_size, hidden=64, ffn_size=128, heads=4,
        distinct_layers=4, recurrence_count=1, max_positions=16,
    )
    student = EncoderConfig(
        vocab_size=vocab_size, hidden=64, ffn_size=128, heads=4,
        distinct_layers=2, recurrence_count=2,
        bottleneck_enabled=True, bottleneck_size=16, max_positions=16,
    )
    return PipelineConfig(
        corpus_dir=str(corpus_dir), out_dir=str(out_dir),
        assistant=assistant, student=student,
        sts_path=None if sts_path is None else str(sts_path),
        seed=seed, teacher_dim=64, teacher_seed=0,
    )


# -- metrics ----------------------------------------------------------------


class MetricsLog:
    """Append-only line-delimited JSON training log.

    One record per (stage, epoch); epoch numbers strictly increase within a
    stage. Records carry no wall-clock fields so identical runs write
    identical files.
    """

    def __init__(self, path, fresh: bool = True):
        self.path = Path(path)
        self.records: list[dict] = []
        self._last_epoch: dict = {}
        if fresh:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")
        elif self.path.exists():
            for record in self.read(self.path).records:
                self._admit(record)

    def _admit(self, record: dict) -> None:
        stage, epoch = record["stage"], record["epoch"]
        last = self._last_epoch.get(stage)
        if last is not None and epoch <= last:
            raise ContractError(
                f"metrics for stage {stage!r} must advance: epoch {epoch} after {last}"
            )
        self._last_epoch[stage] = epoch
        self.records.append(record)

    def append(
        self, stage, epoch: int, loss: float,
        loss_components: dict | None = None, eval_snapshot: dict | None = None,
    ) -> dict:
        record = {
            "stage": stage,
            "epoch": epoch,
            "loss": float(loss),
            "loss_components": dict(loss_components or {}),
            "eval": eval_snapshot,
        }
        self._admit(record)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        return record

    def stage_losses(self, stage) -> list[float]:
        return [r["loss"] for r in self.records if r["stage"] == stage]

    @classmethod
    def read(cls, path) -> "MetricsLog":
        log = cls.__new__(cls)
        log.path = Path(path)
        log.records = []
        log._last_epoch = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    log._admit(json.loads(line))
        return log


# -- data loading -----------------------------------------------------------


@dataclass
class CorpusBundle:
    """Loaded data world: vocabulary, teacher table, splits, and similarity set."""

    vocab: VocabSpec
    oracle: OracleSemantics
    train_pairs: list[ParallelPair]
    dev_pairs: list[ParallelPair]
    test_pairs: list[ParallelPair]
    sts_examples: list | None


def load_corpus(cfg: PipelineConfig) -> CorpusBundle:
    corpus_dir = Path(cfg.corpus_dir)
    manifest = corpus_dir / "vocab.json"
    if not manifest.exists():
        raise ConfigError(f"no vocabulary manifest at {manifest}")
    vocab = VocabSpec.from_manifest(manifest)
    if vocab.vocab_size != cfg.assistant.vocab_size:
        raise ConfigError(
            f"corpus vocabulary has {vocab.vocab_size} ids but the assistant "
            f"expects {cfg.assistant.vocab_size}"
        )
    oracle = OracleSemantics.create(vocab, dim=cfg.teacher_dim, seed=cfg.teacher_seed)
    splits = {}
    for name in ("train", "dev", "test"):
        path = corpus_dir / f"{name}.tsv"
        if not path.exists():
            raise ConfigError(f"missing corpus split {path}")
        splits[name] = read_parallel_tsv(path, vocab)
    sts = None
    if cfg.sts_path is not None:
        sts = load_sts_tsv(cfg.sts_path, vocab)
    return CorpusBundle(
        vocab=vocab, oracle=oracle,
        train_pairs=splits["train"], dev_pairs=splits["dev"],
        test_pairs=splits["test"], sts_examples=sts,
    )


# -- training core ----------------------------------------------------------


def _teacher_anchor(batch: ParallelBatch, oracle: OracleSemantics, dtype) -> Tensor:
    vectors = oracle_embed_batch(batch.source_ids, batch.source_mask, oracle)
    return Tensor(vectors.astype(dtype))


def _batch_loss(
    stage: int, batch: ParallelBatch, models: dict, oracle: OracleSemantics,
    variant: str, ce_cfg: CeLossConfig,
):
    if stage == 1:
        assistant = models["assistant"]
        anchor = _teacher_anchor(batch, oracle, assistant.dtype)
        out_src = assistant.encode(batch.source_ids, batch.source_mask)
        out_tgt = assistant.encode(batch.target_ids, batch.target_mask)
        return loss_anchor_align(anchor, out_src, out_tgt)
    if stage == 2:
        assistant, student = models["assistant"], models["student"]
        ref_src = assistant.embedding_output(batch.source_ids, batch.source_mask)
        ref_tgt = assistant.embedding_output(batch.target_ids, batch.target_mask)
        out_src = student.embedding_output(batch.source_ids, batch.source_mask)
        out_tgt = student.embedding_output(batch.target_ids, batch.target_mask)
        return loss_pairwise_align(ref_src, out_src, ref_tgt, out_tgt)
    if stage == 3:
        assistant, student = models["assistant"], models["student"]
        ref_src = assistant.encode(batch.source_ids, batch.source_mask)
        ref_tgt = assistant.encode(batch.target_ids, batch.target_mask)
        out_src = student.encode(batch.source_ids, batch.source_mask)
        out_tgt = student.encode(batch.target_ids, batch.target_mask)
        return loss_pairwise_align(ref_src, out_src, ref_tgt, out_tgt)
    if stage == 4:
        student = models["student"]
        anchor = _teacher_anchor(batch, oracle, student.dtype)
        out_src = student.encode(batch.source_ids, batch.source_mask)
        out_tgt = student.encode(batch.target_ids, batch.target_mask)
        return loss_stage4(anchor, out_src, out_tgt, variant=variant, ce_cfg=ce_cfg)
    raise ConfigError(f"no loss wiring for stage {stage}")


def _trainable_subset(plan: StagePlan, model: SentenceEncoder) -> dict[str, Tensor]:
    if plan.stage == 2:
        subset = {k: v for k, v in model.params.items() if k in EMBEDDING_PATH_KEYS}
        if not subset:
            raise ContractError("stage 2 found no embedding-path parameters")
        return subset
    return dict(model.params)


def _tensor_digests(encoder: SentenceEncoder, names) -> dict[str, bytes]:
    return {name: encoder.params[name].data.tobytes() for name in names}


def _eval_snapshot(model: SentenceEncoder, bundle: CorpusBundle) -> dict | None:
    snapshot = {}
    if len(bundle.dev_pairs) >= 64:
        snapshot["retrieval_acc"] = retrieval_accuracy(model, bundle.dev_pairs)
    if bundle.sts_examples:
        snapshot["spearman"] = sts_evaluate(model, bundle.sts_examples).spearman_rho
    return snapshot or None


def run_stage(
    cfg: PipelineConfig,
    plan: StagePlan,
    models: dict,
    bundle: CorpusBundle,
    log: MetricsLog,
    stage_label=None,
    checkpoint_name: str | None = None,
    loss_override=None,
) -> SentenceEncoder:
    """Train one stage in place and append per-epoch records.

    The designated trainable model changes; every other parameter in play is
    verified bitwise unchanged afterward. The stage checkpoint is rewritten
    after each epoch, so on a numeric abort the file still holds the last
    finite state.
    """
    trainable = models[plan.trainable_role]
    label = plan.stage if stage_label is None else stage_label
    name = checkpoint_name or f"stage{plan.stage}.xdst"
    out_path = Path(cfg.out_dir) / name
    out_path.parent.mkdir(parents=True, exist_ok=True)

    subset = _trainable_subset(plan, trainable)
    held_names = [k for k in trainable.params if k not in subset]
    held_before = _tensor_digests(trainable, held_names)
    frozen_before = {
        role: models[role].checksum() for role in plan.frozen_roles if role in models
    }
    for role in plan.frozen_roles:
        if role in models:
            models[role].freeze()
    ce_cfg = CeLossConfig(temperature=cfg.ce_temperature)

    save_checkpoint(trainable, out_path)
    if plan.epochs > 0:
        n_batches = (len(bundle.train_pairs) + plan.batch_size - 1) // plan.batch_size
        optimizer = AdamW(
            params=subset,
            lr=plan.optimizer.lr,
            weight_decay=plan.optimizer.weight_decay,
            warmup_fraction=plan.optimizer.warmup_fraction,
            total_steps=plan.epochs * n_batches,
        )
        all_params = list(trainable.params.values())
        for epoch in range(1, plan.epochs + 1):
            shuffle_seed = derive_seed(cfg.seed, f"shuffle-{label}-epoch{epoch}")
            batches = batch_pairs(
                bundle.train_pairs, cfg.max_seq_len, plan.batch_size, shuffle_seed
            )
            total, total_components = 0.0, {}
            for batch in batches:
                loss = (loss_override or _batch_loss)(
                    plan.stage, batch, models, bundle.oracle, cfg.variant, ce_cfg
                )
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(
                        f"stage {label} epoch {epoch}: non-finite loss {value}; "
                        f"last good checkpoint retained at {out_path}"
                    )
                backward(loss.value, params=list(subset.values()))
                optimizer.step()
                zero_grads(all_params)
                total += value * batch.size
                for key, part in loss.components.items():
                    total_components[key] = total_components.get(key, 0.0) + part * batch.size
            n = len(bundle.train_pairs)
            snapshot = _eval_snapshot(trainable, bundle) if cfg.eval_every_epoch else None
            log.append(
                stage=label, epoch=epoch, loss=total / n,
                loss_components={k: v / n for k, v in total_components.items()},
                eval_snapshot=snapshot,
            )
            save_checkpoint(trainable, out_path)

    held_after = _tensor_digests(trainable, held_names)
    changed = [k for k in held_names if held_before[k] != held_after[k]]
    if changed:
        raise ContractError(
            f"stage {label} moved parameters outside its trainable set: {changed}"
        )
    for role, checksum in frozen_before.items():
        if models[role].checksum() != checksum:
            raise ContractError(f"stage {label} modified frozen role {role!r}")
    return trainable


# -- run entry points -------------------------------------------------------


@dataclass
class PipelineResult:
    student: SentenceEncoder
    checkpoint_path: Path
    log: MetricsLog
    sts_report: EvalReport | None
    retrieval_report: EvalReport | None


def _final_reports(student: SentenceEncoder, bundle: CorpusBundle):
    sts_report = None
    if bundle.sts_examples:
        sts_report = sts_evaluate(student, bundle.sts_examples)
    retrieval_report = None
    if len(bundle.test_pairs) >= 64:
        acc = retrieval_accuracy(student, bundle.test_pairs)
        retrieval_report = EvalReport(
            task="retrieval", n_examples=len(bundle.test_pairs),
            retrieval_accuracy=acc, config=student.config.to_dict(),
        )
    return sts_report, retrieval_report


def run_pipeline(cfg: PipelineConfig, log_name: str = "metrics.jsonl") -> PipelineResult:
    """Stages 1 to 4 in order, fresh models, one checkpoint per stage."""
    bundle = load_corpus(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = MetricsLog(out_dir / log_name)

    assistant = SentenceEncoder.init(cfg.assistant, seed=derive_seed(cfg.seed, "assistant-init"))
    models = {"assistant": assistant}
    run_stage(cfg, cfg.plan(1), models, bundle, log)

    assistant.freeze()
    student = init_student_from_assistant(
        assistant, cfg.student, seed=derive_seed(cfg.seed, "student-init")
    )
    models["student"] = student
    for stage in (2, 3, 4):
        run_stage(cfg, cfg.plan(stage), models, bundle, log)

    sts_report, retrieval_report = _final_reports(student, bundle)
    return PipelineResult(
        student=student, checkpoint_path=out_dir / "stage4.xdst", log=log,
        sts_report=sts_report, retrieval_report=retrieval_report,
    )


def resume_stage(cfg: PipelineConfig, stage: int, log_name: str | None = None) -> PipelineResult:
    """Run one numbered stage, loading its prerequisites from earlier checkpoints."""
    if stage not in (1, 2, 3, 4):
        raise ConfigError(f"stage must be 1..4, got {stage}")
    bundle = load_corpus(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = MetricsLog(out_dir / (log_name or f"metrics_stage{stage}.jsonl"))

    def _require(name: str) -> SentenceEncoder:
        path = out_dir / name
        if not path.exists():
            raise ConfigError(
                f"stage {stage} needs the checkpoint {path} from the previous stage"
            )
        return load_checkpoint(path)

    if stage == 1:
        models = {
            "assistant": SentenceEncoder.init(
                cfg.assistant, seed=derive_seed(cfg.seed, "assistant-init")
            )
        }
    else:
        assistant = _require("stage1.xdst").freeze()
        if stage == 2:
            student = init_student_from_assistant(
                assistant, cfg.student, seed=derive_seed(cfg.seed, "student-init")
            )
        else:
            student = _require(f"stage{stage - 1}.xdst").unfreeze()
        models = {"assistant": assistant, "student": student}

    trained = run_stage(cfg, cfg.plan(stage), models, bundle, log)
    sts_report, retrieval_report = (None, None)
    if stage != 1:
        sts_report, retrieval_report = _final_reports(trained, bundle)
    return PipelineResult(
        student=trained, checkpoint_path=out_dir / f"stage{stage}.xdst", log=log,
        sts_report=sts_report, retrieval_report=retrieval_report,
    )


def _single_stage_loss_direct(stage, batch, models, oracle, variant, ce_cfg):
    # direct teacher alignment regardless of the nominal stage number
    student = models["student"]
    anchor = _teacher_anchor(batch, oracle, student.dtype)
    out_src = student.encode(batch.source_ids, batch.source_mask)
    out_tgt = student.encode(batch.target_ids, batch.target_mask)
    return loss_anchor_align(anchor, out_src, out_tgt)


def run_single_stage(
    cfg: PipelineConfig,
    mode: str,
    seed: int | None = None,
    student_depth_override: int | None = None,
) -> PipelineResult:
    """Comparison baselines that skip the staged curriculum.

    "random_init": a freshly initialized student trains directly against the
    teacher for the full epoch budget of all four stages. With the bottleneck
    off and no recurrence this is the classic direct cross-lingual
    distillation shape. "pre_distill": the student starts from the trained
    assistant (running stage 1 first if its checkpoint is absent), imitates
    the assistant, then aligns to the teacher.
    """
    if mode not in ("random_init", "pre_distill"):
        raise ConfigError(f"unknown single-stage mode {mode!r}")
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    student_cfg = cfg.student
    if student_depth_override is not None:
        student_cfg = replace(
            cfg.student,
            distinct_layers=student_depth_override, recurrence_count=1,
            bottleneck_enabled=False, bottleneck_size=None,
        )
    bundle = load_corpus(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = "" if student_depth_override is None else f"_d{student_depth_override}"
    log = MetricsLog(out_dir / f"metrics_{mode}{suffix}.jsonl")
    total_epochs = sum(p.epochs for p in cfg.stages)
    base = cfg.plan(4)

    if mode == "random_init":
        student = SentenceEncoder.init(
            student_cfg, seed=derive_seed(cfg.seed, "single-random-init")
        )
        models = {"student": student}
        plan = replace(base, epochs=total_epochs)
        run_stage(
            cfg, plan, models, bundle, log,
            stage_label="random_init", checkpoint_name=f"single_random{suffix}.xdst",
            loss_override=_single_stage_loss_direct,
        )
        final_name = f"single_random{suffix}.xdst"
    else:
        stage1_path = out_dir / "stage1.xdst"
        if stage1_path.exists():
            assistant = load_checkpoint(stage1_path)
        else:
            assistant = SentenceEncoder.init(
                cfg.assistant, seed=derive_seed(cfg.seed, "assistant-init")
            )
            run_stage(
                cfg, cfg.plan(1), {"assistant": assistant}, bundle, log,
                stage_label="pre_distill:assistant",
            )
        assistant.freeze()
        student = init_student_from_assistant(
            assistant, student_cfg, seed=derive_seed(cfg.seed, "student-init")
        )
        models = {"assistant": assistant, "student": student}
        imitate = replace(cfg.plan(3), epochs=cfg.plan(2).epochs + cfg.plan(3).epochs)
        run_stage(
            cfg, imitate, models, bundle, log,
            stage_label="pre_distill:imitate", checkpoint_name="single_predistill.xdst",
        )
        run_stage(
            cfg, base, models, bundle, log,
            stage_label="pre_distill:align", checkpoint_name="single_predistill.xdst",
            loss_override=_single_stage_loss_direct,
        )
        final_name = "single_predistill.xdst"

    sts_report, retrieval_report = _final_reports(student, bundle)
    return PipelineResult(
        student=student, checkpoint_path=out_dir / final_name, log=log,
        sts_report=sts_report, retrieval_report=retrieval_report,
    )
