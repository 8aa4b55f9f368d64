"""Command-line entry point: ``ndssm <subcommand> ...`` or ``python -m ndssm``.

Subcommands: ``pad-calc``, ``flops``, ``bench``, ``run``, ``export``, ``import``.
Shapes are comma-separated spatial extents (``--shape 129,127``); the spatial
rank is their count unless ``--rank`` says otherwise.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import analysis, io
from .align import plan
from .pipeline import forward, init_random
from .ssd import Mamba2Config

THREADS_ENV = "NDBM2_THREADS"


class UsageError(ValueError):
    pass


def parse_shape(text: str) -> tuple:
    try:
        shape = tuple(int(part) for part in text.replace("x", ",").split(",") if part.strip())
    except ValueError:
        raise UsageError(f"bad shape {text!r}: expected comma-separated integers") from None
    if not shape or any(n < 1 for n in shape):
        raise UsageError(f"bad shape {text!r}: extents must be integers >= 1")
    return shape


def _spatial(args) -> list:
    shapes = [parse_shape(s) for s in args.shape]
    for shape in shapes:
        if args.rank is not None and len(shape) != args.rank:
            raise UsageError(f"shape {shape} has {len(shape)} extents but --rank is {args.rank}")
        if len(shape) not in (1, 2, 3):
            raise UsageError(f"shape {shape}: spatial rank must be 1, 2 or 3")
    return shapes


def _fmt_shape(shape) -> str:
    return "x".join(str(n) for n in shape)


def _config(args) -> Mamba2Config:
    return Mamba2Config(
        d_model=args.d_model, expand=args.expand, d_state=args.d_state,
        headdim=args.headdim, d_conv=args.d_conv, chunk=args.chunk,
    )


def _model(args, rank: int):
    return init_random(_config(args), args.c_in, args.c_out, rank, not args.uni, args.seed)


def _thread_count(args) -> int:
    if args.threads is not None:
        n = args.threads
    elif os.environ.get(THREADS_ENV):
        try:
            n = int(os.environ[THREADS_ENV])
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _summary(model) -> str:
    cfg = model.cfg
    params = analysis.count_params(model).params_total
    lines = [
        f"c_in={model.c_in} c_out={model.c_out} spatial_rank={model.spatial_rank}",
        f"bidirectional={model.bidirectional} premix={model.premix is not None}",
        "mamba2: " + " ".join(f"{k}={v}" for k, v in cfg.to_dict().items()),
        f"params={params} ({params / 1e3:.2f}k)",
    ]
    return "\n".join(lines)


def cmd_pad_calc(args) -> None:
    rows = []
    for shape in _spatial(args):
        rec = plan(shape)
        rows.append((len(shape), _fmt_shape(shape), _fmt_shape(rec.padded_shape), rec.tokens,
                     "TRUE" if rec.unchanged else "FALSE"))
    if args.format == "tsv":
        for row in rows:
            print("\t".join(str(v) for v in row))
        return
    print(f"{'Dim':<4}{'Input':>14}{'Auto-Padding':>16}{'Tokens':>9}{'Equal':>7}")
    for dim, inp, padded, tokens, equal in rows:
        print(f"{str(dim) + 'D':<4}{inp:>14}{padded:>16}{tokens:>9}{equal:>7}")


def cmd_flops(args) -> None:
    rows = []
    for shape in _spatial(args):
        model = _model(args, len(shape))
        report = analysis.count_macs(model, (args.batch, args.c_in, *shape), include_scan=args.include_scan)
        rows.append((model.bidirectional, shape, report))
    if args.format == "tsv":
        print("#bi\tsize\ttokens\tparams\tmacs")
        for bi, shape, r in rows:
            print(f"{int(bi)}\t{_fmt_shape(shape)}\t{r.tokens}\t{r.params_total}\t{r.macs_total}")
        if args.layers:
            for _, _, r in rows:
                sys.stdout.write(analysis.format_report(r, "tsv"))
        return
    print(f"{'Bi.':<5}{'Size':>12}{'Tokens':>9}{'GMac':>9}{'Params (k)':>12}")
    for bi, shape, r in rows:
        print(f"{'Yes' if bi else 'No':<5}{_fmt_shape(shape):>12}{r.tokens:>9}{r.gmacs:>9.3f}{r.params_total / 1e3:>12.2f}")
    if args.layers:
        for _, shape, r in rows:
            print(f"\n[{_fmt_shape(shape)}]")
            sys.stdout.write(analysis.format_report(r, "table"))


def cmd_bench(args) -> None:
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    if args.warmup < 0:
        raise UsageError("--warmup must be >= 0")
    rows = []
    for shape in _spatial(args):
        model = _model(args, len(shape))
        r = analysis.bench(model, (args.batch, args.c_in, *shape), args.repeats, args.warmup, args.seed)
        rows.append((model.bidirectional, shape, r))
    if args.format == "tsv":
        print("#bi\tsize\ttokens\tms\tthreads")
        for bi, shape, r in rows:
            print(f"{int(bi)}\t{_fmt_shape(shape)}\t{r.tokens}\t{r.wall_ms:.4f}\t{r.threads}")
        return
    print(f"{'Bi.':<5}{'Size':>12}{'Tokens':>9}{'Time (ms)':>12}{'Threads':>9}")
    for bi, shape, r in rows:
        print(f"{'Yes' if bi else 'No':<5}{_fmt_shape(shape):>12}{r.tokens:>9}{r.wall_ms:>12.3f}{r.threads:>9}")


def cmd_run(args) -> None:
    if args.input:
        x = io.load_tensor(args.input)
        print(f"input: {args.input} shape={x.shape}")
    else:
        if not args.shape:
            raise UsageError("run needs --input FILE or --shape")
        shape = _spatial(args)[0]
        rng = np.random.default_rng(args.input_seed)
        x = rng.standard_normal((args.batch, args.c_in, *shape)).astype(np.float32)
        print(f"input: random seed={args.input_seed} shape={x.shape}")
    if x.ndim < 3 or x.ndim > 5:
        raise UsageError(f"input tensor must be (B, C, 1-3 spatial axes), got shape {x.shape}")
    if args.model:
        model = io.load(args.model)
        print(f"model: {args.model}")
    else:
        model = _model(args, x.ndim - 2)
        print(f"model: random seed={args.seed}")
    y = forward(model, x)
    io.save_tensor(y, args.output, name="output")
    print(f"output: {args.output} shape={y.shape}")


def cmd_export(args) -> None:
    model = _model(args, args.rank or 1)
    io.save(model, args.output)
    print(f"exported to {args.output} (seed={args.seed})")
    print(_summary(model))


def cmd_import(args) -> None:
    model = io.load(args.model)
    print(f"loaded {args.model}")
    print(_summary(model))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help=f"cap on BLAS threads (default ${THREADS_ENV} or all cores)")

    shapes = argparse.ArgumentParser(add_help=False)
    shapes.add_argument("--shape", action="append", default=[], help="spatial extents, e.g. 129,127 (repeatable)")
    shapes.add_argument("--rank", type=int, choices=(1, 2, 3), default=None)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--c-in", type=int, default=64)
    model.add_argument("--c-out", type=int, default=64)
    model.add_argument("--d-model", type=int, default=128)
    model.add_argument("--expand", type=int, default=2)
    model.add_argument("--d-state", type=int, default=128)
    model.add_argument("--headdim", type=int, default=64)
    model.add_argument("--d-conv", type=int, default=4)
    model.add_argument("--chunk", type=int, default=64)
    model.add_argument("--uni", action="store_true", help="unidirectional model (forward core only)")
    model.add_argument("--seed", type=int, default=0, help="weight seed")
    model.add_argument("--batch", type=int, default=1)

    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=("table", "tsv"), default="table")

    parser = argparse.ArgumentParser(prog="ndssm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pad-calc", parents=[common, shapes, fmt], help="show alignment padding")
    p.set_defaults(func=cmd_pad_calc, needs_shape=True)

    p = sub.add_parser("flops", parents=[common, shapes, model, fmt], help="parameter and MAC counts")
    p.add_argument("--include-scan", action="store_true", help="count scan MACs too")
    p.add_argument("--layers", action="store_true", help="also print per-layer rows")
    p.set_defaults(func=cmd_flops, needs_shape=True)

    p = sub.add_parser("bench", parents=[common, shapes, model, fmt], help="median forward wall time")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.set_defaults(func=cmd_bench, needs_shape=True)

    p = sub.add_parser("run", parents=[common, shapes, model], help="run a forward pass")
    p.add_argument("--model", help="model file (default: random model from --seed)")
    p.add_argument("--input", help="input tensor file (default: random input of --shape)")
    p.add_argument("--input-seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_run, needs_shape=False)

    p = sub.add_parser("export", parents=[common, model], help="write a seeded model file")
    p.add_argument("--rank", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_export, needs_shape=False)

    p = sub.add_parser("import", parents=[common], help="read and validate a model file")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_import, needs_shape=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.needs_shape and not args.shape:
            raise UsageError("at least one --shape is required")
        threads = _thread_count(args)
        with threadpool_limits(limits=threads):
            args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
