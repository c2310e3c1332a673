"""Command-line entry point: ``randembed <subcommand> ...``.

Exit status is 0 on success, 1 on a domain failure (including a suite
verdict of Failure) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import secrets
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, analyze, bitio, channel, embed, rbg
from .errors import RandEmbedError
from .nist.suite import SuiteConfig, SuiteReport, default_threads, run_suite


def parse_count(text: str) -> int:
    """Integers, with ``10^8`` and ``1e6`` shorthands."""
    t = text.strip().replace("_", "")
    try:
        if "^" in t:
            base, exp = t.split("^", 1)
            return int(base) ** int(exp)
        if "e" in t.lower():
            value = float(t)
            if value != int(value):
                raise ValueError
            return int(value)
        return int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer count: {text!r}") from None


def parse_int_list(text: str) -> list[int]:
    if not text.strip():
        return []
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from None


def new_seed() -> int:
    return secrets.randbits(63)


def threads_from(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    return default_threads()


def suite_config(args, block_len: int) -> SuiteConfig:
    base = SuiteConfig() if block_len == bitio.MEGABIT else SuiteConfig.for_block_len(block_len)
    return base.with_(alpha=args.alpha, threads=threads_from(args))


def load_seq(path: str, fmt: str | None) -> bitio.BitSequence:
    return bitio.load(path, fmt)


def limit_blocks(seq: bitio.BitSequence, block_len: int, blocks: int | None) -> bitio.BitSequence:
    available = seq.length // block_len
    if available < 1:
        raise RandEmbedError(f"input holds {seq.length} bits, less than one block of {block_len}")
    if blocks is None:
        return seq
    if blocks > available:
        raise RandEmbedError(f"asked for {blocks} blocks but the input holds {available}")
    return bitio.BitSequence.from_bits(seq.bits()[: blocks * block_len])


def read_message(path: str) -> bitio.BitSequence:
    p = Path(path)
    if p.suffix == ".bits":
        return bitio.read_bits_file(p)
    if p.suffix == ".txt":
        return bitio.read_ascii_file(p)
    data = p.read_bytes()
    return bitio.BitSequence(data, 8 * len(data))


def write_message(seq: bitio.BitSequence, path: str | Path) -> None:
    p = Path(path)
    if p.suffix == ".bits":
        bitio.write_bits_file(seq, p)
    elif p.suffix == ".txt":
        bitio.write_ascii_file(seq, p)
    else:
        if seq.length % 8:
            raise RandEmbedError(f"{seq.length} bits do not fill whole bytes; use a .bits or .txt output")
        p.write_bytes(seq.tobytes())


def write_json(path: str | Path | None, doc: dict[str, Any]) -> None:
    if not path:
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def envelope(command: str, args, seeds: dict[str, Any] | None = None, **extra) -> dict[str, Any]:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "command") and v is not None}
    return {"command": command, "version": __version__, "config": cfg, "seeds": seeds or {}, **extra}


def write_csv(path: str | None, rows: list[list[Any]]) -> None:
    if not path:
        return
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def info(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- subcommands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else new_seed()
    if args.source == "pseudorandom":
        source: rbg.Source = rbg.PseudorandomSource(seed)
    elif args.source == "chaotic":
        source = rbg.ChaoticSource(seed)
    else:
        if not args.sample_file:
            raise RandEmbedError("--source file needs --sample-file")
        source = rbg.SampleFileSource(args.sample_file, args.sample_width)
    config = rbg.RbgConfig(source, args.adc_bits, args.derivative, args.lsbs, args.bits)
    seq = rbg.generate(config)
    bitio.save(seq, args.out, args.format)
    info(f"wrote {seq.length} bits to {args.out}")
    write_json(args.report, envelope("generate", args, {"source": seed}, bits_written=seq.length))
    return 0


def cmd_keygen(args) -> int:
    seed = args.seed if args.seed is not None else new_seed()
    if args.mask == "full":
        key = embed.EmbedKey.scheme1(args.K, args.G, seed)
    elif args.mask:
        key = embed.EmbedKey(embed.SegmentGeometry(args.K, args.G), tuple(parse_int_list(args.mask)), seed)
    else:
        key = embed.keygen(args.K, args.G, seed)
    embed.save_key(key, args.out)
    info(f"wrote key K={key.K} G={key.G} |mask|={len(key.mask)} to {args.out}")
    write_json(args.report, envelope("keygen", args, {"key": seed}, key_space=str(embed.key_space(args.K)),
                                     mask=list(key.mask)))
    return 0


def cmd_embed(args) -> int:
    key = embed.load_key(args.key)
    carrier = load_seq(args.input, args.format)
    if args.message:
        message = read_message(args.message)
        out = embed.embed_message(carrier, key, message, args.skip, args.block)
        bits = message.length
    else:
        out = embed.embed_fixed(carrier, key, args.skip, args.block)
        bits = 0
    bitio.save(out, args.out, args.format)
    cap = embed.capacity(carrier.length, key, args.skip, args.block)
    info(f"embedded {bits} message bits (capacity {cap}) into {args.out}")
    write_json(args.report, envelope("embed", args, {"filler": key.filler_seed()}, message_bits=bits,
                                     capacity=cap, ratio=float(embed.ratio(key))))
    return 0


def cmd_extract(args) -> int:
    key = embed.load_key(args.key)
    seq = load_seq(args.input, args.format)
    msg = embed.extract_message(seq, key, args.skip, args.block, args.count)
    write_message(msg, args.out)
    info(f"extracted {msg.length} bits to {args.out}")
    write_json(args.report, envelope("extract", args, bits=msg.length))
    return 0


def emit_suite(report: SuiteReport, args, command: str, **extra) -> None:
    print(report.to_text())
    doc = envelope(command, args, suite=report.to_dict(include_p_values=getattr(args, "p_values", False)), **extra)
    write_json(args.report, doc)
    write_csv(getattr(args, "csv", None), report.to_csv_rows())
    if getattr(args, "figures", None):
        from .plotting import suite_figures
        for p in suite_figures(report, args.figures, command):
            info(f"figure: {p}")


def cmd_test(args) -> int:
    seq = limit_blocks(load_seq(args.input, args.format), args.block_len, args.blocks)
    config = suite_config(args, args.block_len)
    report = run_suite(seq, config)
    emit_suite(report, args, "test")
    return 0 if report.passed else 1


def cmd_score(args) -> int:
    seq = limit_blocks(load_seq(args.input, args.format), args.block_len, args.blocks)
    config = suite_config(args, args.block_len)
    seed = args.seed if args.seed is not None else new_seed()
    report = analyze.strength_sweep(seq, args.grid, args.g, args.family, config, args.trials, seed,
                                    progress=lambda p: info(f"K={p.K} trial={p.trial} {p.verdict} "
                                                            f"removed={p.removed_blocks}"))
    print(report.to_text())
    write_json(args.report, envelope("score", args, {"keys": seed}, strength=report.to_dict()))
    if args.figures:
        from .plotting import strength_curve
        Path(args.figures).mkdir(parents=True, exist_ok=True)
        info(f"figure: {strength_curve(report, Path(args.figures) / 'strength.png')}")
    return 0


def _failing_from_report(path: str) -> tuple[SuiteReport, list[int]]:
    doc = json.loads(Path(path).read_text())
    report = SuiteReport.from_dict(doc.get("suite", doc))
    return report, analyze.attributed_blocks(report)


def cmd_repair(args) -> int:
    carrier = load_seq(args.carrier, args.format)
    report, failing = _failing_from_report(args.suite_report)
    block_len = report.config.block_len
    if args.mode == "skip":
        if not args.key:
            raise RandEmbedError("repair --mode skip needs --key")
        key = embed.load_key(args.key)
        out = embed.embed_fixed(carrier, key, failing, block_len)
        bitio.save(out, args.out, args.format)
        info(f"re-embedded with {len(failing)} skipped blocks: {failing}")
        if args.verify:
            config = report.config.with_(threads=threads_from(args))
            check = analyze.certify(out, config, failing)
            emit_suite(check, args, "repair", skip=failing)
            return 0 if check.passed else 1
        write_json(args.report, envelope("repair", args, skip=failing))
        return 0
    # replace
    if args.fresh:
        fresh = load_seq(args.fresh, args.format)
        seeds = {}
    else:
        seed = args.fresh_seed if args.fresh_seed is not None else new_seed()
        fresh = rbg.generate(rbg.RbgConfig(rbg.PseudorandomSource(seed), output_bits=max(1, len(failing) * block_len)))
        seeds = {"fresh": seed}
    out = analyze.repair_replace(carrier, failing, fresh, block_len)
    bitio.save(out, args.out, args.format)
    info(f"replaced {len(failing)} blocks: {failing}")
    write_json(args.report, envelope("repair", args, seeds, replaced=failing, bits=out.length))
    return 0


def cmd_send(args) -> int:
    key = embed.load_key(args.key)
    seed = args.carrier_seed if args.carrier_seed is not None else new_seed()
    session = channel.ChannelSession(key, rbg.RbgConfig(rbg.PseudorandomSource(seed)), args.block)
    messages = [read_message(m) for m in args.message]
    length = channel.write_stream(args.out, session, messages, args.length, args.lead_in)
    info(f"wrote {length}-bit stream with {len(messages)} frames to {args.out}")
    extra: dict[str, Any] = {"bits": length, "frames": len(messages)}
    if args.check:
        config = suite_config(args, args.block)
        report = channel.eavesdrop_check(bitio.read_bits_file(args.out), config)
        emit_suite(report, args, "send", seeds={"carrier": seed}, **extra)
        return 0 if report.passed else 1
    write_json(args.report, envelope("send", args, {"carrier": seed}, **extra))
    return 0


def cmd_recv(args) -> int:
    key = embed.load_key(args.key)
    session = channel.ChannelSession(key, block_len=args.block)
    dec = channel.decode_file(args.input, session)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, payload in enumerate(dec.payloads):
        name = outdir / (f"msg{i:04d}.bin" if payload.length % 8 == 0 else f"msg{i:04d}.bits")
        write_message(payload, name)
        names.append(name.name)
    d = dec.diagnostics
    info(f"recovered {len(names)} frames ({d.crc_failures} CRC failures, {d.truncated} truncated)")
    write_json(args.report, envelope("recv", args, files=names, diagnostics=vars(d)))
    return 0


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--report", help="write a JSON report to this path")
    common.add_argument("--format", choices=("packed", "ascii"), help="bit file format (default: by extension)")
    common.add_argument("--threads", type=int, help="worker processes (default: RANDEMBED_THREADS or CPU count)")

    suite_opts = argparse.ArgumentParser(add_help=False)
    suite_opts.add_argument("--alpha", type=float, default=0.01)
    suite_opts.add_argument("--figures", help="directory for PNG figures")
    suite_opts.add_argument("--csv", help="per-sub-statistic table as CSV")
    suite_opts.add_argument("--p-values", action="store_true", help="include per-block p-values in the report")

    p = argparse.ArgumentParser(prog="randembed", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"randembed {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="produce a carrier bit sequence")
    g.add_argument("--out", required=True)
    g.add_argument("--bits", type=parse_count, default=bitio.MEGABIT)
    g.add_argument("--source", choices=("pseudorandom", "chaotic", "file"), default="pseudorandom")
    g.add_argument("--seed", type=int)
    g.add_argument("--sample-file")
    g.add_argument("--sample-width", type=int, choices=(1, 2), default=1)
    g.add_argument("--adc-bits", type=int, default=8)
    g.add_argument("--derivative", type=int, default=3)
    g.add_argument("--lsbs", type=int, default=5)
    g.set_defaults(func=cmd_generate)

    k = sub.add_parser("keygen", parents=[common], help="draw an embedding key")
    k.add_argument("--K", type=int, required=True)
    k.add_argument("--G", type=int, default=0)
    k.add_argument("--mask", help="'full' or comma-separated offsets (default: random)")
    k.add_argument("--seed", type=int)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_keygen)

    for name, func, help_ in (("embed", cmd_embed, "embed a fixed scheme or a message"),
                              ("extract", cmd_extract, "recover embedded message bits")):
        e = sub.add_parser(name, parents=[common], help=help_)
        e.add_argument("--key", required=True)
        e.add_argument("--in", dest="input", required=True)
        e.add_argument("--out", required=True)
        e.add_argument("--block", type=parse_count, default=bitio.MEGABIT)
        e.add_argument("--skip", type=parse_int_list, default=[])
        if name == "embed":
            e.add_argument("--message", help="payload file (.bits, .txt or raw bytes); omit for a fixed scheme")
        else:
            e.add_argument("--count", type=parse_count, help="message bits to read (default: full capacity)")
        e.set_defaults(func=func)

    t = sub.add_parser("test", parents=[common, suite_opts], help="run the statistical suite")
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--blocks", type=parse_count)
    t.add_argument("--block-len", type=parse_count, default=bitio.MEGABIT)
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("score", parents=[common, suite_opts], help="minimal-K strength sweep")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--g", type=int, default=5)
    s.add_argument("--grid", type=parse_int_list)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--family", choices=("scheme1", "random"), default="scheme1")
    s.add_argument("--seed", type=int)
    s.add_argument("--blocks", type=parse_count)
    s.add_argument("--block-len", type=parse_count, default=bitio.MEGABIT)
    s.set_defaults(func=cmd_score)

    r = sub.add_parser("repair", parents=[common, suite_opts], help="skip or replace failing blocks")
    r.add_argument("--mode", choices=("skip", "replace"), default="skip")
    r.add_argument("--carrier", required=True, help="the original (unembedded) carrier")
    r.add_argument("--suite-report", required=True, help="JSON report of the failing run")
    r.add_argument("--key")
    r.add_argument("--fresh", help="file of fresh random bits (replace mode)")
    r.add_argument("--fresh-seed", type=int)
    r.add_argument("--verify", action="store_true", help="re-run the suite on the non-skipped blocks")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_repair)

    se = sub.add_parser("send", parents=[common, suite_opts], help="encode messages into a covert stream")
    se.add_argument("--key", required=True)
    se.add_argument("--message", action="append", default=[])
    se.add_argument("--out", required=True)
    se.add_argument("--length", type=parse_count)
    se.add_argument("--block", type=parse_count, default=bitio.MEGABIT)
    se.add_argument("--lead-in", type=int, default=0, help="filler bits before the first frame")
    se.add_argument("--carrier-seed", type=int)
    se.add_argument("--check", action="store_true", help="run the suite on the stream (eavesdropper view)")
    se.set_defaults(func=cmd_send)

    rc = sub.add_parser("recv", parents=[common], help="decode messages from a covert stream")
    rc.add_argument("--key", required=True)
    rc.add_argument("--in", dest="input", required=True)
    rc.add_argument("--out", required=True, help="directory for recovered payloads")
    rc.add_argument("--block", type=parse_count, default=bitio.MEGABIT)
    rc.set_defaults(func=cmd_recv)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if getattr(args, "threads", None) is None and os.environ.get("RANDEMBED_THREADS"):
        args.threads = int(os.environ["RANDEMBED_THREADS"])
    try:
        return args.func(args)
    except (RandEmbedError, OSError, ValueError) as exc:
        info(f"randembed {args.command}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
