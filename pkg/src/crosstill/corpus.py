"""Synthetic bilingual corpus: cipher languages, oracle semantics, TSV I/O.

The two "languages" are disjoint id ranges over a shared vocabulary, linked
by a seeded token-for-token bijection (the cipher). Translation is therefore
exact by construction, and a fixed Gaussian concept table over language-1
tokens plays the role of a frozen monolingual teacher: the embedding of a
sentence is the mean of its content-token concept vectors.

File formats:
  parallel TSV  `src tokens<TAB>tgt tokens`, tokens space-separated, either
                surface strings `l1_<k>`/`l2_<k>` or decimal global ids
  STS TSV       `sentence_a<TAB>sentence_b<TAB>score` with score in [0, 5]
  vocab manifest JSON {tokens_per_language, seed, cipher: [...]}
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError
from .rng import stream

PAD, BOS, EOS, UNK = 0, 1, 2, 3
N_SPECIALS = 4

_SPECIAL_SURFACE = {PAD: "<pad>", BOS: "<bos>", EOS: "<eos>", UNK: "<unk>"}
_SURFACE_SPECIAL = {v: k for k, v in _SPECIAL_SURFACE.items()}


class _UnknownCounter:
    def __init__(self):
        self.count = 0


_unknown = _UnknownCounter()


def unknown_token_count() -> int:
    return _unknown.count


def reset_unknown_token_count() -> None:
    _unknown.count = 0


# -- vocabulary and cipher -------------------------------------------------


@dataclass
class VocabSpec:
    """Two disjoint token ranges plus the bijection between them.

    Global ids: specials 0..3, language-1 tokens 4..4+K-1, language-2 tokens
    4+K..4+2K-1. `cipher[i] = j` maps language-1 index i to language-2 index j.
    """

    tokens_per_language: int
    seed: int
    cipher: np.ndarray

    def __post_init__(self):
        if self.tokens_per_language < 1:
            raise ContractError("tokens_per_language must be positive")
        self.cipher = np.asarray(self.cipher, dtype=np.int64)
        k = self.tokens_per_language
        if self.cipher.shape != (k,) or not np.array_equal(
            np.sort(self.cipher), np.arange(k)
        ):
            raise ContractError("cipher must be a permutation of language indices")
        self._inverse = np.empty(k, dtype=np.int64)
        self._inverse[self.cipher] = np.arange(k)

    @classmethod
    def create(cls, tokens_per_language: int = 512, seed: int = 0) -> "VocabSpec":
        rng = stream(seed, "cipher")
        return cls(
            tokens_per_language=tokens_per_language,
            seed=seed,
            cipher=rng.permutation(tokens_per_language),
        )

    @property
    def vocab_size(self) -> int:
        return N_SPECIALS + 2 * self.tokens_per_language

    @property
    def lang1_start(self) -> int:
        return N_SPECIALS

    @property
    def lang2_start(self) -> int:
        return N_SPECIALS + self.tokens_per_language

    def cipher_ids(self, ids) -> np.ndarray:
        """Translate language-1 content ids into language-2; specials pass through."""
        ids = np.asarray(ids, dtype=np.int64)
        out = ids.copy()
        lang1 = (ids >= self.lang1_start) & (ids < self.lang2_start)
        bad = (ids >= self.lang2_start) | (ids < 0) | (ids >= self.vocab_size)
        if bad.any():
            raise ContractError("cipher_ids: input must contain only specials and language-1 ids")
        out[lang1] = self.lang2_start + self.cipher[ids[lang1] - self.lang1_start]
        return out

    def decipher_ids(self, ids) -> np.ndarray:
        """Inverse cipher: language-2 content ids back to language-1."""
        ids = np.asarray(ids, dtype=np.int64)
        out = ids.copy()
        lang2 = (ids >= self.lang2_start) & (ids < self.vocab_size)
        bad = ((ids >= self.lang1_start) & (ids < self.lang2_start)) | (ids < 0) | (
            ids >= self.vocab_size
        )
        if bad.any():
            raise ContractError("decipher_ids: input must contain only specials and language-2 ids")
        out[lang2] = self.lang1_start + self._inverse[ids[lang2] - self.lang2_start]
        return out

    def to_lang1_ids(self, ids) -> np.ndarray:
        """Normalize mixed content to language 1 (specials untouched)."""
        ids = np.asarray(ids, dtype=np.int64)
        if ((ids < 0) | (ids >= self.vocab_size)).any():
            raise ContractError("to_lang1_ids: id outside vocabulary")
        out = ids.copy()
        lang2 = ids >= self.lang2_start
        out[lang2] = self.lang1_start + self._inverse[ids[lang2] - self.lang2_start]
        return out

    def surface(self, token_id: int) -> str:
        token_id = int(token_id)
        if token_id in _SPECIAL_SURFACE:
            return _SPECIAL_SURFACE[token_id]
        if self.lang1_start <= token_id < self.lang2_start:
            return f"l1_{token_id - self.lang1_start}"
        if self.lang2_start <= token_id < self.vocab_size:
            return f"l2_{token_id - self.lang2_start}"
        raise ContractError(f"id {token_id} outside vocabulary")

    def parse_token(self, text: str) -> tuple[int, bool]:
        """Map one surface token to an id; second value flags an unknown."""
        if text in _SURFACE_SPECIAL:
            return _SURFACE_SPECIAL[text], False
        for prefix, start in (("l1_", self.lang1_start), ("l2_", self.lang2_start)):
            if text.startswith(prefix):
                tail = text[len(prefix):]
                if tail.isdigit() and int(tail) < self.tokens_per_language:
                    return start + int(tail), False
                return UNK, True
        if text.isdigit():
            token_id = int(text)
            if token_id < self.vocab_size:
                return token_id, False
        return UNK, True

    def save_manifest(self, path) -> None:
        payload = {
            "tokens_per_language": self.tokens_per_language,
            "seed": self.seed,
            "cipher": self.cipher.tolist(),
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_manifest(cls, path) -> "VocabSpec":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            tokens_per_language=int(raw["tokens_per_language"]),
            seed=int(raw["seed"]),
            cipher=np.asarray(raw["cipher"], dtype=np.int64),
        )


# -- data shapes -----------------------------------------------------------


@dataclass
class ParallelPair:
    """One sentence and its token-for-token cipher image, as content ids."""

    source_ids: np.ndarray
    target_ids: np.ndarray

    def __post_init__(self):
        self.source_ids = np.asarray(self.source_ids, dtype=np.int64)
        self.target_ids = np.asarray(self.target_ids, dtype=np.int64)
        if self.source_ids.shape != self.target_ids.shape:
            raise ContractError(
                f"parallel pair length mismatch: {len(self.source_ids)} vs "
                f"{len(self.target_ids)}"
            )


@dataclass
class ParallelBatch:
    """Framed, padded id matrices with {0,1} masks; PAD everywhere the mask is 0."""

    source_ids: np.ndarray
    target_ids: np.ndarray
    source_mask: np.ndarray
    target_mask: np.ndarray

    def __post_init__(self):
        for ids, mask in ((self.source_ids, self.source_mask),
                          (self.target_ids, self.target_mask)):
            if ids.shape != mask.shape:
                raise ContractError("batch ids and mask shapes differ")
            if (ids[mask == 0] != PAD).any():
                raise ContractError("masked positions must hold PAD")

    @property
    def size(self) -> int:
        return self.source_ids.shape[0]


@dataclass
class StsExample:
    """Two content-id sentences and a gold similarity in [0, 5]."""

    sentence_a: np.ndarray
    sentence_b: np.ndarray
    gold_score: float

    def __post_init__(self):
        self.sentence_a = np.asarray(self.sentence_a, dtype=np.int64)
        self.sentence_b = np.asarray(self.sentence_b, dtype=np.int64)
        if not 0.0 <= self.gold_score <= 5.0:
            raise ContractError(f"gold score {self.gold_score} outside [0, 5]")


# -- oracle semantics ------------------------------------------------------


@dataclass
class OracleSemantics:
    """Fixed concept vector per language-1 token; the frozen teacher."""

    concept_vectors: np.ndarray
    vocab: VocabSpec
    seed: int

    @classmethod
    def create(cls, vocab: VocabSpec, dim: int = 64, seed: int = 0) -> "OracleSemantics":
        rng = stream(seed, "oracle-concepts")
        table = rng.standard_normal((vocab.tokens_per_language, dim))
        return cls(concept_vectors=table, vocab=vocab, seed=seed)

    @property
    def dim(self) -> int:
        return self.concept_vectors.shape[1]


def oracle_embed(sentence_ids, oracle: OracleSemantics) -> np.ndarray:
    """Mean concept vector of the content tokens, language-normalized."""
    ids = oracle.vocab.to_lang1_ids(np.asarray(sentence_ids, dtype=np.int64).reshape(-1))
    content = ids[ids >= N_SPECIALS]
    if content.size == 0:
        raise ContractError("oracle_embed: sentence has no content tokens")
    return oracle.concept_vectors[content - N_SPECIALS].mean(axis=0)


def oracle_embed_batch(ids: np.ndarray, mask: np.ndarray, oracle: OracleSemantics) -> np.ndarray:
    """Row-wise oracle embeddings for a framed, padded id matrix."""
    ids = np.asarray(ids, dtype=np.int64)
    flat = oracle.vocab.to_lang1_ids(ids.reshape(-1)).reshape(ids.shape)
    content = (np.asarray(mask) != 0) & (flat >= N_SPECIALS)
    counts = content.sum(axis=1)
    if (counts == 0).any():
        raise ContractError("oracle_embed_batch: a row has no content tokens")
    gathered = oracle.concept_vectors[np.where(content, flat - N_SPECIALS, 0)]
    sums = (gathered * content[:, :, None]).sum(axis=1)
    return sums / counts[:, None]


# -- generation ------------------------------------------------------------


def _zipf_probs(k: int) -> np.ndarray:
    weights = 1.0 / np.arange(1, k + 1, dtype=np.float64)
    return weights / weights.sum()


def _draw_sentences(rng, vocab: VocabSpec, n: int, length_range: tuple[int, int]):
    """Distinct language-1 content sentences with Zipf(1.0) token frequencies."""
    lo, hi = length_range
    if lo < 3:
        raise ContractError(f"minimum sentence length is 3, got {lo}")
    if hi < lo:
        raise ContractError(f"empty length range ({lo}, {hi})")
    probs = _zipf_probs(vocab.tokens_per_language)
    seen: set[tuple[int, ...]] = set()
    out: list[np.ndarray] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 50 * n + 100:
            raise ContractError(
                f"could not draw {n} distinct sentences; vocabulary or length range too small"
            )
        length = int(rng.integers(lo, hi + 1))
        tokens = rng.choice(vocab.tokens_per_language, size=length, p=probs)
        key = tuple(int(t) for t in tokens)
        if key in seen:
            continue
        seen.add(key)
        out.append(vocab.lang1_start + tokens.astype(np.int64))
    return out


def _format_sentence(ids, vocab: VocabSpec) -> str:
    return " ".join(vocab.surface(t) for t in ids)


def gen_parallel_corpus(
    seed: int,
    n_pairs: int,
    vocab: VocabSpec,
    length_range: tuple[int, int] = (3, 12),
    out_dir=".",
    splits: tuple[float, float, float] = (0.9, 0.05, 0.05),
) -> dict[str, Path]:
    """Write train/dev/test parallel TSVs plus the vocab manifest.

    Sentences are distinct, so the splits are disjoint. Targets are the exact
    cipher image of their sources.
    """
    if n_pairs < 1:
        raise ContractError("n_pairs must be at least 1")
    if len(splits) != 3 or any(s < 0 for s in splits) or abs(sum(splits) - 1.0) > 1e-9:
        raise ContractError(f"splits must be three non-negative fractions summing to 1, got {splits}")
    rng = stream(seed, "parallel-corpus")
    sentences = _draw_sentences(rng, vocab, n_pairs, length_range)

    n_train = int(n_pairs * splits[0])
    n_dev = int(n_pairs * splits[1])
    bounds = {
        "train": sentences[:n_train],
        "dev": sentences[n_train:n_train + n_dev],
        "test": sentences[n_train + n_dev:],
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    for name, split_sentences in bounds.items():
        path = out_dir / f"{name}.tsv"
        lines = []
        for src in split_sentences:
            tgt = vocab.cipher_ids(src)
            lines.append(f"{_format_sentence(src, vocab)}\t{_format_sentence(tgt, vocab)}")
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        paths[name] = path
    vocab.save_manifest(out_dir / "vocab.json")
    paths["vocab"] = out_dir / "vocab.json"
    return paths


def gen_sts_set(
    seed: int,
    n_examples: int,
    oracle: OracleSemantics,
    out_path="sts.tsv",
    length_range: tuple[int, int] = (3, 12),
) -> Path:
    """Write an STS TSV whose gold score is the oracle cosine mapped to [0, 5].

    Pairs cycle through token-overlap levels, from identical (score 5)
    through disjoint (score near 2.5) down to anti-selected token sets, so
    the score distribution is wide rather than clustered.
    """
    if n_examples < 1:
        raise ContractError("n_examples must be at least 1")
    vocab = oracle.vocab
    rng = stream(seed, "sts-set")
    probs = _zipf_probs(vocab.tokens_per_language)
    lo, hi = length_range
    if lo < 1 or hi < lo:
        raise ContractError(f"bad length range ({lo}, {hi})")
    overlap_levels = (1.0, 0.75, 0.5, 0.25, 0.0, -1.0)  # -1 marks anti-selection

    lines = []
    for i in range(n_examples):
        level = overlap_levels[i % len(overlap_levels)]
        length = int(rng.integers(lo, hi + 1))
        a_tokens = rng.choice(vocab.tokens_per_language, size=length, p=probs)
        if level == 1.0:
            b_tokens = rng.permutation(a_tokens)
        elif level < 0.0:
            # pick tokens whose concepts point away from A's embedding
            a_vec = oracle.concept_vectors[a_tokens].mean(axis=0)
            pool_size = min(64, vocab.tokens_per_language)
            pool = rng.choice(vocab.tokens_per_language, size=pool_size, replace=False)
            scores = oracle.concept_vectors[pool] @ a_vec
            ranked = pool[np.argsort(scores)]
            b_tokens = np.resize(ranked, length)
        else:
            keep = int(round(level * length))
            b_tokens = a_tokens.copy()
            redraw = rng.choice(length, size=length - keep, replace=False)
            b_tokens[redraw] = rng.choice(
                vocab.tokens_per_language, size=length - keep, p=probs
            )
        a_ids = vocab.lang1_start + a_tokens.astype(np.int64)
        b_ids = vocab.lang1_start + b_tokens.astype(np.int64)
        va = oracle_embed(a_ids, oracle)
        vb = oracle_embed(b_ids, oracle)
        cos = float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))
        score = float(np.clip(2.5 * (1.0 + cos), 0.0, 5.0))
        lines.append(
            f"{_format_sentence(a_ids, vocab)}\t{_format_sentence(b_ids, vocab)}\t{score:.6f}"
        )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_path


# -- loading ---------------------------------------------------------------


def _parse_sentence(text: str, vocab: VocabSpec, line_no: int) -> tuple[np.ndarray, int]:
    tokens = text.split()
    if not tokens:
        raise ParseError("empty sentence", line=line_no)
    ids = np.empty(len(tokens), dtype=np.int64)
    unknowns = 0
    for i, tok in enumerate(tokens):
        ids[i], was_unknown = vocab.parse_token(tok)
        unknowns += int(was_unknown)
    return ids, unknowns


def _finish_unknowns(unknowns: int, path) -> None:
    if unknowns > 0:
        _unknown.count += unknowns
        warnings.warn(
            f"{path}: {unknowns} unknown token(s) mapped to <unk>", RuntimeWarning,
            stacklevel=3,
        )


def read_parallel_tsv(path, vocab: VocabSpec) -> list[ParallelPair]:
    """Parse a parallel TSV into content-id pairs."""
    pairs: list[ParallelPair] = []
    unknowns = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(
                    f"expected 2 tab-separated fields, found {len(fields)}", line=line_no
                )
            src, n_src = _parse_sentence(fields[0], vocab, line_no)
            tgt, n_tgt = _parse_sentence(fields[1], vocab, line_no)
            unknowns += n_src + n_tgt
            if src.shape != tgt.shape:
                raise ParseError(
                    f"source has {len(src)} tokens but target has {len(tgt)}", line=line_no
                )
            pairs.append(ParallelPair(source_ids=src, target_ids=tgt))
    _finish_unknowns(unknowns, path)
    return pairs


def _frame(ids: np.ndarray, max_seq_len: int) -> np.ndarray:
    content = ids[: max_seq_len - 2]
    return np.concatenate(([BOS], content, [EOS])).astype(np.int64)


def batch_pairs(
    pairs: list[ParallelPair],
    max_seq_len: int,
    batch_size: int,
    shuffle_seed: int | None = None,
) -> list[ParallelBatch]:
    """Frame with BOS/EOS, truncate, pad per batch, and optionally shuffle."""
    if max_seq_len < 3:
        raise ContractError("max_seq_len must be at least 3 to fit BOS, EOS and content")
    if batch_size < 1:
        raise ContractError("batch_size must be positive")
    order = np.arange(len(pairs))
    if shuffle_seed is not None:
        order = stream(shuffle_seed, "batch-shuffle").permutation(order)
    batches: list[ParallelBatch] = []
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start:start + batch_size]]
        framed_src = [_frame(p.source_ids, max_seq_len) for p in chunk]
        framed_tgt = [_frame(p.target_ids, max_seq_len) for p in chunk]
        width = max(len(s) for s in framed_src + framed_tgt)
        n = len(chunk)
        src = np.full((n, width), PAD, dtype=np.int64)
        tgt = np.full((n, width), PAD, dtype=np.int64)
        src_mask = np.zeros((n, width), dtype=np.uint8)
        tgt_mask = np.zeros((n, width), dtype=np.uint8)
        for row, (fs, ft) in enumerate(zip(framed_src, framed_tgt)):
            src[row, : len(fs)] = fs
            src_mask[row, : len(fs)] = 1
            tgt[row, : len(ft)] = ft
            tgt_mask[row, : len(ft)] = 1
        batches.append(
            ParallelBatch(
                source_ids=src, target_ids=tgt,
                source_mask=src_mask, target_mask=tgt_mask,
            )
        )
    return batches


def load_parallel_tsv(
    path,
    vocab: VocabSpec,
    max_seq_len: int,
    batch_size: int,
    shuffle_seed: int | None = None,
) -> list[ParallelBatch]:
    """Read a parallel TSV straight into framed, padded batches."""
    return batch_pairs(
        read_parallel_tsv(path, vocab), max_seq_len, batch_size, shuffle_seed
    )


def load_sts_tsv(path, vocab: VocabSpec) -> list[StsExample]:
    """Parse an STS TSV; scores outside [0, 5] are rejected with the line number."""
    examples: list[StsExample] = []
    unknowns = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(
                    f"expected 3 tab-separated fields, found {len(fields)}", line=line_no
                )
            a, n_a = _parse_sentence(fields[0], vocab, line_no)
            b, n_b = _parse_sentence(fields[1], vocab, line_no)
            unknowns += n_a + n_b
            try:
                score = float(fields[2])
            except ValueError:
                raise ParseError(f"unparseable score {fields[2]!r}", line=line_no) from None
            if not np.isfinite(score) or not 0.0 <= score <= 5.0:
                raise ParseError(f"score {fields[2]} outside [0, 5]", line=line_no)
            examples.append(StsExample(sentence_a=a, sentence_b=b, gold_score=score))
    _finish_unknowns(unknowns, path)
    return examples


def write_sts_tsv(path, examples: list[StsExample], vocab: VocabSpec) -> None:
    lines = [
        f"{_format_sentence(ex.sentence_a, vocab)}\t"
        f"{_format_sentence(ex.sentence_b, vocab)}\t{ex.gold_score:.6f}"
        for ex in examples
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
