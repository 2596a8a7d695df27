"""Artifact validators: corpus directories and training-run outputs.

These re-check on disk what the generators and the training driver promise
in memory, so a corrupted or hand-edited artifact fails loudly before it
poisons a run.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .corpus import VocabSpec, read_parallel_tsv
from .errors import ConfigError, ContractError
from .pipeline import MetricsLog

SPLIT_NAMES = ("train", "dev", "test")


def validate_corpus_dir(corpus_dir) -> dict:
    """Check a generated corpus directory end to end.

    Verifies the manifest loads, every split parses, splits are disjoint,
    and each target sentence is the exact cipher image of its source.
    Returns per-split pair counts and the observed length range.
    """
    corpus_dir = Path(corpus_dir)
    manifest = corpus_dir / "vocab.json"
    if not manifest.exists():
        raise ConfigError(f"no vocabulary manifest at {manifest}")
    vocab = VocabSpec.from_manifest(manifest)

    counts: dict[str, int] = {}
    seen: dict[tuple, str] = {}
    lengths: list[int] = []
    for name in SPLIT_NAMES:
        path = corpus_dir / f"{name}.tsv"
        if not path.exists():
            raise ConfigError(f"missing corpus split {path}")
        pairs = read_parallel_tsv(path, vocab)
        counts[name] = len(pairs)
        for row, pair in enumerate(pairs, start=1):
            key = tuple(pair.source_ids.tolist())
            if key in seen:
                raise ContractError(
                    f"sentence {row} of {name} duplicates one in {seen[key]}; "
                    "splits must be disjoint"
                )
            seen[key] = name
            expected = vocab.cipher_ids(pair.source_ids)
            if not np.array_equal(pair.target_ids, expected):
                raise ContractError(
                    f"pair {row} of {name}: target is not the cipher image of its source"
                )
            lengths.append(len(pair.source_ids))
    return {
        "vocab_size": vocab.vocab_size,
        "pairs": counts,
        "length_range": (min(lengths), max(lengths)),
    }


def validate_run_artifacts(out_dir, stages=(1, 2, 3, 4)) -> dict:
    """Check a finished training run's directory.

    Every expected stage checkpoint must load cleanly; the metrics log must
    parse with strictly advancing epochs and finite losses. Returns
    checkpoint digests and per-stage record counts.
    """
    out_dir = Path(out_dir)
    digests: dict[str, str] = {}
    for stage in stages:
        path = out_dir / f"stage{stage}.xdst"
        if not path.exists():
            raise ConfigError(f"missing checkpoint {path}")
        digests[f"stage{stage}"] = load_checkpoint(path).checksum()

    metrics_path = out_dir / "metrics.jsonl"
    if not metrics_path.exists():
        raise ConfigError(f"missing metrics log {metrics_path}")
    log = MetricsLog.read(metrics_path)
    bad = [r for r in log.records if not np.isfinite(r["loss"])]
    if bad:
        raise ContractError(
            f"metrics log holds a non-finite loss at stage {bad[0]['stage']} "
            f"epoch {bad[0]['epoch']}"
        )
    per_stage: dict = {}
    for record in log.records:
        per_stage[record["stage"]] = per_stage.get(record["stage"], 0) + 1
    return {"checkpoints": digests, "records": len(log.records), "per_stage": per_stage}
