"""Scoring harness: Spearman correlation, STS evaluation, block retrieval.

Embedding providers can be either a SentenceEncoder or any callable mapping a
1-D content-id array to a vector, so the corpus oracle can stand in as a
perfect encoder when calibrating expectations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import BOS, EOS, PAD, ParallelPair, StsExample
from .encoder import SentenceEncoder
from .errors import ContractError


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    n = values.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Pearson correlation of average ranks."""
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    ys = np.asarray(ys, dtype=np.float64).reshape(-1)
    if xs.shape != ys.shape:
        raise ContractError(f"length mismatch: {xs.shape[0]} vs {ys.shape[0]}")
    if xs.shape[0] < 2:
        raise ContractError("spearman needs at least 2 observations")
    if (xs == xs[0]).all() or (ys == ys[0]).all():
        raise ContractError("correlation undefined for a constant input")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    return float((dx * dy).sum() / np.sqrt((dx * dx).sum() * (dy * dy).sum()))


@dataclass
class EvalReport:
    """One scored task, with the correlation kept both raw and ×100."""

    task: str
    n_examples: int
    spearman_rho: float | None = None
    retrieval_accuracy: float | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.spearman_rho is not None and not -1.0 <= self.spearman_rho <= 1.0:
            raise ContractError(f"rho {self.spearman_rho} outside [-1, 1]")
        if self.retrieval_accuracy is not None and not 0.0 <= self.retrieval_accuracy <= 1.0:
            raise ContractError(f"accuracy {self.retrieval_accuracy} outside [0, 1]")

    @property
    def rho_x100(self) -> float | None:
        return None if self.spearman_rho is None else 100.0 * self.spearman_rho

    def summary(self) -> str:
        parts = [f"task={self.task}", f"n={self.n_examples}"]
        if self.spearman_rho is not None:
            parts.append(f"spearman_x100={self.rho_x100:.1f}")
        if self.retrieval_accuracy is not None:
            parts.append(f"retrieval_acc={self.retrieval_accuracy:.4f}")
        return " ".join(parts)

    def to_json(self) -> str:
        payload = {
            "task": self.task,
            "n_examples": self.n_examples,
            "spearman_rho": self.spearman_rho,
            "spearman_rho_x100": self.rho_x100,
            "retrieval_accuracy": self.retrieval_accuracy,
            "config": self.config,
        }
        return json.dumps(payload, sort_keys=True)


def _frame_rows(sentences: list[np.ndarray], max_seq_len: int):
    framed = [
        np.concatenate(([BOS], s[: max_seq_len - 2], [EOS])).astype(np.int64)
        for s in sentences
    ]
    width = max(len(f) for f in framed)
    ids = np.full((len(framed), width), PAD, dtype=np.int64)
    mask = np.zeros((len(framed), width), dtype=np.uint8)
    for row, f in enumerate(framed):
        ids[row, : len(f)] = f
        mask[row, : len(f)] = 1
    return ids, mask


def embed_sentences(encoder, sentences: list[np.ndarray], batch_size: int = 64) -> np.ndarray:
    """Stack embeddings for content-id sentences; batches transformer encoders."""
    if not sentences:
        raise ContractError("no sentences to embed")
    if isinstance(encoder, SentenceEncoder):
        rows = []
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start:start + batch_size]
            ids, mask = _frame_rows(chunk, encoder.config.max_positions)
            rows.append(encoder.encode(ids, mask).data)
        return np.concatenate(rows, axis=0)
    return np.stack([np.asarray(encoder(s), dtype=np.float64) for s in sentences])


def _row_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.maximum(np.linalg.norm(a, axis=-1), 1e-12)
    nb = np.maximum(np.linalg.norm(b, axis=-1), 1e-12)
    return (a * b).sum(axis=-1) / (na * nb)


def sts_evaluate(encoder, examples: list[StsExample], batch_size: int = 64) -> EvalReport:
    """Spearman correlation between embedding cosines and gold scores."""
    if len(examples) < 2:
        raise ContractError("sts_evaluate needs at least 2 examples")
    va = embed_sentences(encoder, [e.sentence_a for e in examples], batch_size)
    vb = embed_sentences(encoder, [e.sentence_b for e in examples], batch_size)
    predicted = _row_cosine(va.astype(np.float64), vb.astype(np.float64))
    gold = np.array([e.gold_score for e in examples], dtype=np.float64)
    rho = spearman(predicted, gold)
    config = encoder.config.to_dict() if isinstance(encoder, SentenceEncoder) else {}
    return EvalReport(
        task="sts", n_examples=len(examples), spearman_rho=rho, config=config,
    )


def retrieval_accuracy(
    encoder, pairs: list[ParallelPair], block_size: int = 64,
    target_encoder=None,
) -> float:
    """Within-block nearest-neighbor translation retrieval.

    For each block of `block_size` pairs, each source row retrieves its
    nearest target row by cosine; the score is the fraction retrieving their
    own translation. Trailing pairs short of a full block are dropped.
    `target_encoder` lets the two sides use different embedding providers.
    """
    if len(pairs) < block_size:
        raise ContractError(
            f"retrieval needs at least one full block of {block_size}, got {len(pairs)}"
        )
    src = embed_sentences(encoder, [p.source_ids for p in pairs]).astype(np.float64)
    tgt = embed_sentences(
        target_encoder or encoder, [p.target_ids for p in pairs]
    ).astype(np.float64)
    n_blocks = len(pairs) // block_size
    hits = 0
    for b in range(n_blocks):
        lo, hi = b * block_size, (b + 1) * block_size
        s = src[lo:hi] / np.maximum(np.linalg.norm(src[lo:hi], axis=1, keepdims=True), 1e-12)
        t = tgt[lo:hi] / np.maximum(np.linalg.norm(tgt[lo:hi], axis=1, keepdims=True), 1e-12)
        grid = s @ t.T
        hits += int((grid.argmax(axis=1) == np.arange(block_size)).sum())
    return hits / (n_blocks * block_size)


@dataclass
class DepthPoint:
    """Sweep sample: one trained baseline at a given layer count."""

    depth: int
    sts: EvalReport
    retrieval: EvalReport


def depth_sweep(pipeline_cfg, depths: list[int], seed: int = 0) -> list[DepthPoint]:
    """Train the direct-distillation baseline at each depth and score both tasks.

    Each depth trains an otherwise identical student with that many distinct
    layers (no recurrence) under the same seed, then reports monolingual STS
    and cross-lingual retrieval.
    """
    from .pipeline import run_single_stage  # deferred: pipeline imports this module

    if not depths:
        raise ContractError("depth_sweep needs at least one depth")
    points = []
    for depth in depths:
        result = run_single_stage(
            pipeline_cfg, mode="random_init", seed=seed,
            student_depth_override=depth,
        )
        points.append(
            DepthPoint(depth=depth, sts=result.sts_report, retrieval=result.retrieval_report)
        )
    return points
