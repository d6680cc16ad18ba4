"""Command-line surface: tokenize, maskviz, decode, eval, bench, pipeline.

All outputs are machine-readable JSON (``--pretty`` indents them); every
subcommand is deterministic under a fixed ``--seed``.  The seed falls back
to the ``WOW_SEED`` environment variable, and a ``--config`` file of
``key = value`` lines supplies defaults that explicit flags override.

Exit codes: 0 success, 2 input error (single-line diagnostic on stderr),
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import attnmask, decoder, harness, maskio, metrics, prompt
from .attnmask import CascadeConfig, build_cascade_mask, dump_attention_mask
from .encoder import EncoderParams
from .harness import AlwaysYesOracle, ScriptedOracle, bench_decoder_params, run_filter_pipeline, run_scaling_bench, synthesize_mask_corpus
from .prompt import build_prompt_batch, dump_token_set, token_budget

_VARIANTS = {
    "cascade": CascadeConfig.full_cascade,
    "region": CascadeConfig.region_variant,
    "output": CascadeConfig.output_variant,
    "causal": CascadeConfig.plain_causal,
}

# the two-object worked example: image, text, two mask segments, two
# single-token output chunks, separators between same-kind neighbours
FIG4_PRESET = "image:2 text:1 mask0:2 sep:1 mask1:2 out0:1 sep:1 out1:1"


def _emit(args, text: str) -> None:
    if args.pretty and text.startswith("{"):
        text = json.dumps(json.loads(text), indent=2, sort_keys=True)
    out = sys.stdout
    out.write(text)
    if not text.endswith("\n"):
        out.write("\n")


def _coerce(value: str):
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _read_config(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config error at line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = _coerce(value)
    return values


def _cmd_tokenize(args) -> int:
    image = maskio.read_pgm(args.image)
    records = maskio.read_records(args.masks)
    if len(records) > args.max_masks:
        raise ValueError(f"capacity error: {len(records)} masks exceeds max_masks={args.max_masks}")
    params = EncoderParams.seeded(args.seed, dim=args.enc_dim)
    batch = build_prompt_batch(
        image,
        [r.mask for r in records],
        params,
        scale=args.scale,
        max_masks=args.max_masks,
        grid=args.grid,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for ts in batch.mask_token_sets:
        dump_token_set(ts, out_dir / f"mask_{ts.mask_index:03d}.json", out_dir / f"mask_{ts.mask_index:03d}.f32")
    budget = token_budget(batch, text_len=args.text_len)
    _emit(
        args,
        json.dumps(
            {
                "masks": batch.num_masks,
                "token_counts": [ts.count for ts in batch.mask_token_sets],
                "image_tokens": budget.image_tokens,
                "total_sequence": budget.total,
            },
            sort_keys=True,
        ),
    )
    return 0


def _cmd_maskviz(args) -> int:
    if args.layout:
        layout = attnmask.parse_layout_header(args.layout)
    elif args.preset == "fig4":
        layout = attnmask.parse_layout_header(FIG4_PRESET)
    else:
        raise ValueError(f"unknown preset {args.preset!r}")
    config = _VARIANTS[args.variant]()
    mask = build_cascade_mask(layout, config)
    _emit(args, dump_attention_mask(mask, layout))
    return 0


def _cmd_decode(args) -> int:
    image = maskio.read_pgm(args.image)
    records = maskio.read_records(args.masks)
    enc = EncoderParams.seeded(args.seed, dim=args.enc_dim)
    batch = build_prompt_batch(image, [r.mask for r in records], enc, scale=args.scale)
    if args.params and args.vocab:
        params = decoder.load_decoder_params(args.params, args.vocab)
    else:
        words = sorted(
            ({w for w in args.text.split()} | {f"w{i}" for i in range(60)}) - set(decoder.SPECIALS)
        )
        params = decoder.DecoderParams.seeded(
            args.seed, decoder.make_vocab(words), enc_dim=args.enc_dim
        )
    text_ids = [params.token_id(w) for w in args.text.split()]
    result = decoder.decode_objects(
        batch, text_ids, params, config=_VARIANTS[args.variant](), max_label_len=args.max_label_len
    )
    _emit(args, result.to_json())
    return 0


def _cmd_eval(args) -> int:
    pairs = metrics.read_predictions(args.pred)
    provider = metrics.TrigramHashProvider(dim=args.provider_dim)
    if args.vocab_file:
        vocabulary = [ln.strip() for ln in Path(args.vocab_file).read_text().splitlines() if ln.strip()]
        pairs = [(p, g, vocabulary) for p, g in pairs]
    report = metrics.evaluate(pairs, provider)
    _emit(args, report.to_json())
    return 0


def _cmd_bench(args) -> int:
    k_values = [int(v) for v in args.k_values.split(",") if v]
    image, masks = synthesize_mask_corpus(max(k_values), seed=args.seed)
    enc = EncoderParams.seeded(args.seed, dim=args.enc_dim)
    dec = bench_decoder_params(seed=args.seed, enc_dim=args.enc_dim)
    report = run_scaling_bench(
        k_values,
        image,
        masks,
        enc,
        dec,
        text_len=args.text_len,
        repeats=args.repeats,
        parallel=args.parallel,
    )
    include_timing = not args.flops_only
    if args.csv:
        Path(args.csv).write_text(report.to_csv(include_timing=include_timing))
    _emit(args, report.to_json(include_timing=include_timing))
    return 0


def _cmd_pipeline(args) -> int:
    records = maskio.read_records(args.records)
    if args.oracle == "always-yes":
        oracle = AlwaysYesOracle()
    elif args.oracle.startswith("file:"):
        table = json.loads(Path(args.oracle[5:]).read_text())
        oracle = ScriptedOracle(
            {(row["image_id"], row.get("label", "")): row["answer"] for row in table}
        )
    else:
        raise ValueError(f"unknown oracle {args.oracle!r} (use always-yes or file:PATH)")
    report = run_filter_pipeline(
        records, oracle, min_ratio=args.min_ratio, head_threshold=args.head_threshold
    )
    if args.out_records:
        maskio.write_records(report.kept_records, args.out_records)
    _emit(args, report.to_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regionrec",
        description="Word-free region recognition core: tokenize masks, build "
        "cascade attention masks, decode labels, evaluate, benchmark, filter.",
    )
    parser.add_argument("--config", help="key = value defaults file; explicit flags win")
    parser.add_argument("--seed", type=int, default=None, help="PRNG seed (default: WOW_SEED env var or 0)")
    parser.add_argument("--pretty", action="store_true", help="indent JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="convert masks to token sets")
    p.add_argument("--image", required=True, help="PGM image")
    p.add_argument("--masks", required=True, help="JSON-lines mask records")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scale", type=float, default=prompt.CONTEXT_SCALE, help="context scale (default 2)")
    p.add_argument("--grid", type=int, default=16, help="token grid side (default 16)")
    p.add_argument("--max-masks", type=int, default=prompt.MAX_MASKS, help="per-sample cap (default 30)")
    p.add_argument("--enc-dim", type=int, default=16)
    p.add_argument("--text-len", type=int, default=4)
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("maskviz", help="render a cascade attention mask as ASCII")
    p.add_argument("--preset", default="fig4")
    p.add_argument("--layout", help="layout header, e.g. 'image:2 text:1 mask0:2 sep:1 out0:1'")
    p.add_argument("--variant", choices=sorted(_VARIANTS), default="cascade")
    p.set_defaults(func=_cmd_maskviz)

    p = sub.add_parser("decode", help="greedy multi-mask label decoding")
    p.add_argument("--image", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--text", default="<start>")
    p.add_argument("--params", help="decoder weight blob")
    p.add_argument("--vocab", help="vocabulary JSON array")
    p.add_argument("--scale", type=float, default=prompt.CONTEXT_SCALE)
    p.add_argument("--enc-dim", type=int, default=16)
    p.add_argument("--max-label-len", type=int, default=prompt.OUTPUT_SLOTS)
    p.add_argument("--variant", choices=sorted(_VARIANTS), default="cascade")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--pred", required=True, help="JSON-lines predictions")
    p.add_argument("--vocab-file", help="newline-delimited category vocabulary")
    p.add_argument("--provider-dim", type=int, default=256)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="instance-scaling cost benchmark")
    p.add_argument("--k-values", default="1,2,4,8,16,32")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--text-len", type=int, default=harness.BENCH_TEXT_LEN)
    p.add_argument("--enc-dim", type=int, default=16)
    p.add_argument("--csv", help="also write rows as CSV")
    p.add_argument("--flops-only", action="store_true", help="omit wall times for reproducible output")
    p.add_argument("--parallel", action="store_true", help="encode crops in parallel")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("pipeline", help="area-ratio filter plus oracle re-query")
    p.add_argument("--records", required=True)
    p.add_argument("--oracle", default="always-yes", help="'always-yes' or 'file:answers.json'")
    p.add_argument("--min-ratio", type=float, default=harness.MIN_AREA_RATIO)
    p.add_argument("--head-threshold", type=int, default=harness.HEAD_THRESHOLD)
    p.add_argument("--out-records", help="write surviving records here")
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
        if pre.config:
            parser.set_defaults(**_read_config(pre.config))
        args = parser.parse_args(argv)
        if args.seed is None:
            args.seed = int(os.environ.get("WOW_SEED", "0"))
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, IndexError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # invariant violations are bugs; surface loudly
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
