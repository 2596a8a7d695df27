"""Command-line entry point.

One executable, seven subcommands: corpus and similarity-set generation,
staged training, checkpoint evaluation, parameter accounting, gradient
verification, and the depth sweep. Machine-readable results go to standard
output; diagnostics go to standard error. Exit codes: 0 success, 1 for
contract or configuration violations, 2 for I/O and format problems.

Training commands read a JSON config file mirroring PipelineConfig; any
field can be overridden on the command line with a dotted flag, e.g.
`--student.bottleneck_size 16` or `--stages.3.epochs 30`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .checkpoint import load_checkpoint
from .corpus import OracleSemantics, VocabSpec, gen_parallel_corpus, gen_sts_set, load_sts_tsv, read_parallel_tsv
from .errors import AuditError, ConfigError, ContractError, CrosstillError, FormatError, NumericError, ParseError
from .evaluate import EvalReport, depth_sweep, retrieval_accuracy, sts_evaluate
from .gradcheck import finite_diff_check
from .losses import (
    CeLossConfig,
    loss_anchor_align,
    loss_bool,
    loss_ce,
    loss_mcl,
    loss_pairwise_align,
    loss_stage4,
)
from .pipeline import PipelineConfig, resume_stage, run_pipeline, run_single_stage
from .rng import stream
from .sizes import PRESETS, audit_registry, model_report, preset_from_config
from .encoder import SentenceEncoder

GRAD_TOLERANCE = 1e-6
SEED_ENV_VAR = "CROSSTILL_SEED"


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def resolve_seed(flag_value: int | None, fallback: int = 0) -> int:
    """Explicit flag wins, then the environment, then the fallback."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return fallback


# -- dotted config overrides ------------------------------------------------


def apply_overrides(raw: dict, tokens: list[str]) -> dict:
    """Apply `--a.b value` (or `--a.b=value`) pairs to a nested config dict.

    Values parse as JSON when possible, otherwise stay strings. List
    sections accept integer path components. A dotless `--name value` sets a
    top-level field; names the config schema does not know are rejected when
    the config is validated.
    """
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or token == "--":
            raise FormatError(f"unknown flag {token!r}")
        if "=" in token:
            dotted, value = token[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise FormatError(f"override {token!r} needs a value")
            dotted, value = token[2:], tokens[i + 1]
            i += 2
        parts = dotted.split(".")
        node = raw
        for depth, part in enumerate(parts[:-1]):
            if isinstance(node, list):
                try:
                    node = node[int(part)]
                except (ValueError, IndexError):
                    raise ConfigError(f"bad list index {part!r} in override {dotted!r}")
            elif part in node:
                node = node[part]
            else:
                raise ConfigError(f"no config section {'.'.join(parts[:depth + 1])!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        leaf = parts[-1]
        if isinstance(node, list):
            try:
                node[int(leaf)] = parsed
            except (ValueError, IndexError):
                raise ConfigError(f"bad list index {leaf!r} in override {dotted!r}")
        else:
            node[leaf] = parsed
    return raw


def _load_config(path: str, extras: list[str], seed_flag: int | None) -> PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path} is not valid JSON: {exc}")
    raw = apply_overrides(raw, extras)
    cfg = PipelineConfig.from_dict(raw)
    if seed_flag is not None or os.environ.get(SEED_ENV_VAR) is not None:
        cfg = replace(cfg, seed=resolve_seed(seed_flag))
    return cfg


# -- subcommand handlers ----------------------------------------------------


def _cmd_gen_corpus(args, extras) -> int:
    _forbid_extras(extras)
    seed = resolve_seed(args.seed)
    vocab = VocabSpec.create(tokens_per_language=args.tokens_per_language, seed=seed)
    splits = tuple(float(s) for s in args.splits.split(","))
    paths = gen_parallel_corpus(
        seed=seed, n_pairs=args.pairs, vocab=vocab,
        length_range=(args.min_len, args.max_len),
        out_dir=args.out, splits=splits,
    )
    counts = {
        name: sum(1 for line in path.read_text(encoding="utf-8").splitlines() if line)
        for name, path in paths.items() if name != "vocab"
    }
    _say(f"corpus written to {args.out}")
    _emit({"out": str(args.out), "vocab_size": vocab.vocab_size, **counts})
    return 0


def _cmd_gen_sts(args, extras) -> int:
    _forbid_extras(extras)
    seed = resolve_seed(args.seed)
    vocab = VocabSpec.from_manifest(args.vocab)
    oracle = OracleSemantics.create(vocab, dim=args.dim, seed=args.oracle_seed)
    path = gen_sts_set(
        seed=seed, n_examples=args.examples, oracle=oracle,
        out_path=args.out, length_range=(args.min_len, args.max_len),
    )
    _say(f"similarity set written to {path}")
    _emit({"out": str(path), "examples": args.examples, "dim": args.dim})
    return 0


def _checkpoint_digest(path: Path) -> str:
    import hashlib

    return hashlib.sha256(path.read_bytes()).hexdigest()


def _cmd_train(args, extras) -> int:
    cfg = _load_config(args.config, extras, args.seed)
    stage = args.stage
    if stage == "all":
        result = run_pipeline(cfg)
    elif stage in ("1", "2", "3", "4"):
        result = resume_stage(cfg, int(stage))
    elif stage in ("random_init", "pre_distill"):
        result = run_single_stage(cfg, stage)
    else:
        raise ConfigError(f"unknown stage {stage!r}")
    _say(f"training finished; checkpoint at {result.checkpoint_path}")
    _emit({
        "checkpoint": str(result.checkpoint_path),
        "checkpoint_sha256": _checkpoint_digest(result.checkpoint_path),
        "metrics": str(result.log.path),
        "records": len(result.log.records),
        "sts_rho": None if result.sts_report is None else result.sts_report.spearman_rho,
        "retrieval_acc": (
            None if result.retrieval_report is None
            else result.retrieval_report.retrieval_accuracy
        ),
    })
    return 0


def _cmd_eval(args, extras) -> int:
    _forbid_extras(extras)
    encoder = load_checkpoint(args.checkpoint)
    corpus_dir = Path(args.corpus)
    vocab = VocabSpec.from_manifest(corpus_dir / "vocab.json")
    if vocab.vocab_size != encoder.config.vocab_size:
        raise ConfigError(
            f"checkpoint expects vocab {encoder.config.vocab_size}, corpus has {vocab.vocab_size}"
        )
    pairs = read_parallel_tsv(corpus_dir / f"{args.split}.tsv", vocab)
    reports = []
    if len(pairs) >= args.block_size:
        acc = retrieval_accuracy(encoder, pairs, block_size=args.block_size)
        reports.append(EvalReport(
            task="retrieval", n_examples=len(pairs), retrieval_accuracy=acc,
            config=encoder.config.to_dict(),
        ))
    else:
        _say(f"skipping retrieval: {len(pairs)} pairs < one block of {args.block_size}")
    if args.sts is not None:
        reports.append(sts_evaluate(encoder, load_sts_tsv(args.sts, vocab)))
    for report in reports:
        print(report.to_json())
        _say(report.summary())
    return 0


def _cmd_count_params(args, extras) -> int:
    _forbid_extras(extras)
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {args.preset!r}; available: {', '.join(sorted(PRESETS))}"
            )
        names = [args.preset]
    else:
        names = list(PRESETS)
    for name in names:
        preset = PRESETS[name]
        encoder = None
        if args.audit:
            approx = 8 * preset.vocab_size * preset.hidden
            if approx > 200_000_000:
                raise ConfigError(
                    f"preset {name!r} is too large to instantiate for an audit; "
                    "use a toy preset"
                )
            cfg = _preset_encoder_config(preset)
            encoder = SentenceEncoder.init(cfg, seed=0)
        report = model_report(preset, encoder=encoder)
        print(report.tsv_row())
    return 0


def _preset_encoder_config(preset):
    from .encoder import EncoderConfig

    return EncoderConfig(
        vocab_size=preset.vocab_size, hidden=preset.hidden,
        ffn_size=preset.ffn_size, heads=max(1, preset.hidden // 64),
        distinct_layers=preset.layers, recurrence_count=1,
        bottleneck_enabled=preset.bottleneck is not None,
        bottleneck_size=preset.bottleneck, max_positions=preset.max_positions,
    )


def _grad_check_cases(name: str, n: int, dim: int, seed: int, dtype):
    """Loss closures over fresh random inputs; every tensor is a checked input."""
    rng = stream(seed, f"grad-check-{name}")

    def tensor():
        return Tensor(rng.normal(size=(n, dim)).astype(dtype), requires_grad=True)

    if name == "anchor":
        anchor, out_src, out_tgt = tensor(), tensor(), tensor()
        params = {"anchor": anchor, "out_src": out_src, "out_tgt": out_tgt}
        return lambda: loss_anchor_align(anchor, out_src, out_tgt).value, params
    if name == "pairwise":
        ref_src, out_src, ref_tgt, out_tgt = tensor(), tensor(), tensor(), tensor()
        params = {"ref_src": ref_src, "out_src": out_src,
                  "ref_tgt": ref_tgt, "out_tgt": out_tgt}
        return lambda: loss_pairwise_align(ref_src, out_src, ref_tgt, out_tgt).value, params
    if name == "mcl":
        teacher, stu_src, stu_tgt = tensor(), tensor(), tensor()
        params = {"teacher": teacher, "student_src": stu_src, "student_tgt": stu_tgt}
        return lambda: loss_mcl(teacher, stu_src, stu_tgt).value, params
    if name == "bool":
        stu_src, stu_tgt = tensor(), tensor()
        params = {"student_src": stu_src, "student_tgt": stu_tgt}
        return lambda: loss_bool(None, stu_src, stu_tgt).value, params
    if name == "ce":
        teacher, stu_src, stu_tgt = tensor(), tensor(), tensor()
        params = {"teacher": teacher, "student_src": stu_src, "student_tgt": stu_tgt}
        cfg = CeLossConfig()
        return lambda: loss_ce(teacher, stu_src, stu_tgt, cfg).value, params
    if name == "stage4":
        teacher, stu_src, stu_tgt = tensor(), tensor(), tensor()
        params = {"teacher": teacher, "student_src": stu_src, "student_tgt": stu_tgt}
        return lambda: loss_stage4(teacher, stu_src, stu_tgt).value, params
    raise ConfigError(f"unknown loss {name!r}")


GRAD_CHECK_LOSSES = ("anchor", "pairwise", "mcl", "bool", "ce", "stage4")


def _cmd_grad_check(args, extras) -> int:
    _forbid_extras(extras)
    seed = resolve_seed(args.seed)
    dtype = np.float64 if args.width == "64bit" else np.float32
    names = GRAD_CHECK_LOSSES if args.loss == "all" else (args.loss,)
    worst = 0.0
    for name in names:
        loss_fn, params = _grad_check_cases(name, args.batch, args.dim, seed, dtype)
        report = finite_diff_check(
            loss_fn, params, allow_float32=(args.width == "32bit")
        )
        worst = max(worst, report.max_rel_error)
        _emit({
            "loss": name,
            "max_rel_error": report.max_rel_error,
            "coords": sum(report.coords_checked.values()),
            "pass": report.max_rel_error <= GRAD_TOLERANCE,
        })
    _say(f"max relative error {worst:.3e} over {len(names)} losses "
         f"(tolerance {GRAD_TOLERANCE:.0e})")
    return 0 if worst <= GRAD_TOLERANCE else 1


def _cmd_sweep_depth(args, extras) -> int:
    cfg = _load_config(args.config, extras, args.seed)
    try:
        depths = [int(d) for d in args.depths.split(",") if d.strip()]
    except ValueError:
        raise ConfigError(f"depths must be comma-separated integers, got {args.depths!r}")
    points = depth_sweep(cfg, depths, seed=resolve_seed(args.seed, cfg.seed))
    for point in points:
        _emit({
            "depth": point.depth,
            "sts_rho": None if point.sts is None else point.sts.spearman_rho,
            "retrieval_acc": (
                None if point.retrieval is None else point.retrieval.retrieval_accuracy
            ),
        })
    return 0


def _forbid_extras(extras: list[str]) -> None:
    if extras:
        raise FormatError(f"unknown flag {extras[0]!r}")


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crosstill",
        description="Staged cross-lingual distillation of compact sentence encoders.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-corpus", help="generate a paired two-language corpus")
    p.add_argument("--out", required=True, help="directory for train/dev/test TSVs and vocab.json")
    p.add_argument("--seed", type=int, default=None, help="generation seed (default: env or 0)")
    p.add_argument("--pairs", type=int, default=3000, help="number of sentence pairs")
    p.add_argument("--tokens-per-language", type=int, default=512, help="vocabulary size per language")
    p.add_argument("--min-len", type=int, default=3, help="minimum sentence length")
    p.add_argument("--max-len", type=int, default=12, help="maximum sentence length")
    p.add_argument("--splits", default="0.9,0.05,0.05", help="train,dev,test fractions")
    p.set_defaults(handler=_cmd_gen_corpus, allow_overrides=False)

    p = sub.add_parser("gen-sts", help="generate a scored sentence-similarity set")
    p.add_argument("--vocab", required=True, help="path to a corpus vocab.json manifest")
    p.add_argument("--out", required=True, help="output TSV path")
    p.add_argument("--seed", type=int, default=None, help="generation seed (default: env or 0)")
    p.add_argument("--examples", type=int, default=128, help="number of scored pairs")
    p.add_argument("--dim", type=int, default=64, help="scoring-table embedding width")
    p.add_argument("--oracle-seed", type=int, default=0, help="scoring-table seed; must match training teacher_seed")
    p.add_argument("--min-len", type=int, default=3, help="minimum sentence length")
    p.add_argument("--max-len", type=int, default=12, help="maximum sentence length")
    p.set_defaults(handler=_cmd_gen_sts, allow_overrides=False)

    p = sub.add_parser("train", help="run staged or single-stage training")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--stage", default="all",
                   choices=["all", "1", "2", "3", "4", "random_init", "pre_distill"],
                   help="which stage or baseline mode to run")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(handler=_cmd_train, allow_overrides=True)

    p = sub.add_parser("eval", help="score a checkpoint on retrieval and similarity")
    p.add_argument("--checkpoint", required=True, help="encoder checkpoint path")
    p.add_argument("--corpus", required=True, help="corpus directory with vocab.json and splits")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"],
                   help="which split to use for retrieval")
    p.add_argument("--sts", default=None, help="optional similarity TSV to score")
    p.add_argument("--block-size", type=int, default=64, help="retrieval block size")
    p.set_defaults(handler=_cmd_eval, allow_overrides=False)

    p = sub.add_parser("count-params", help="print exact and rounded parameter counts")
    p.add_argument("--preset", default=None, help="one preset name (default: all presets)")
    p.add_argument("--audit", action="store_true",
                   help="instantiate the model and verify the formula against real tensors")
    p.set_defaults(handler=_cmd_count_params, allow_overrides=False)

    p = sub.add_parser("grad-check", help="verify loss gradients by central differences")
    p.add_argument("--loss", default="all", choices=list(GRAD_CHECK_LOSSES) + ["all"],
                   help="which loss to check")
    p.add_argument("--width", default="64bit", choices=["32bit", "64bit"],
                   help="float width for the check")
    p.add_argument("--batch", type=int, default=4, help="rows per input tensor")
    p.add_argument("--dim", type=int, default=8, help="columns per input tensor")
    p.add_argument("--seed", type=int, default=None, help="input sampling seed (default: env or 0)")
    p.set_defaults(handler=_cmd_grad_check, allow_overrides=False)

    p = sub.add_parser("sweep-depth", help="train the direct baseline at several depths")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--depths", default="1,2,4", help="comma-separated layer counts")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(handler=_cmd_sweep_depth, allow_overrides=True)

    return parser


def parse_and_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if not args.allow_overrides:
            _forbid_extras(extras)
            extras = []
        return args.handler(args, extras)
    except (ParseError, FormatError) as exc:
        _say(f"error: {exc}")
        return 2
    except OSError as exc:
        _say(f"error: {exc}")
        return 2
    except (ConfigError, ContractError, AuditError, NumericError, CrosstillError) as exc:
        _say(f"error: {exc}")
        return 1


def main(argv: list[str] | None = None) -> int:
    return parse_and_dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
