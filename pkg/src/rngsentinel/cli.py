"""Command-line entry point: ``rngsentinel {monitor,analyze,tables,sensitivity}``.

Exit status: 0 healthy, 2 alarm raised by ``monitor``, 1 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
from contextlib import contextmanager
from typing import Sequence

import numpy as np

from . import __version__
from .bitstream import BiasModel, BitSource, SeededSource, StreamSource, SymbolStream, open_source
from .health_tests import (
    AdaptiveProportionTest,
    AptConfig,
    RctConfig,
    RepetitionCountTest,
    RunsConfig,
    apt_fail_prob,
    monobit_rows,
    monobit_threshold,
    rct_cutoff,
    runs_fail_rows,
    runs_rows,
)
from .isn_entropy import (
    InsufficientFailures,
    IsnHistogram,
    entropy_from_apt,
    apt_scan,
    entropy_from_rct,
    expected_isn_rct,
    isn_conformance,
    rct_gap_survival,
)
from .sensitivity import monobit_single_seq_power, power_curve
from .series_monitor import TESTS, Monitor, MonitorSettings, SeriesConfig
from .statkit import gauss_two_tail

log = logging.getLogger("rngsentinel")

EXIT_OK, EXIT_ERROR, EXIT_ALARM = 0, 1, 2
SEED_ENV = "RNGSENTINEL_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2, reserved for alarms
        raise UsageError(message)


def parse_alpha(text: str) -> float:
    m = re.fullmatch(r"\s*2\s*(?:\^|\*\*)\s*(-?\d+(?:\.\d+)?)\s*", text)
    value = 2.0 ** float(m.group(1)) if m else float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return value


def parse_inject(text: str) -> tuple[int, int]:
    try:
        j, f = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("--inject expects j,f") from None
    return j, f


def parse_int_list(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def parse_float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def parse_seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def resolve_seed(seed: int | None) -> int | None:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    return parse_seed(env) if env else None


def _input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", metavar="PATH|-", help="raw binary input (bits LSB-first); '-' for stdin")
    p.add_argument("--seed", type=parse_seed, help=f"seed of the built-in generator (fallback ${SEED_ENV})")
    p.add_argument("--bits", type=int, help="number of bits to draw (required for the generator)")
    p.add_argument("--buffer-size", type=int, default=1 << 20, help="read buffer in bytes")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rngsentinel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    mon = sub.add_parser("monitor", help="on-line series monitoring of a bit stream")
    _input_args(mon)
    mon.add_argument("--n", type=int, default=32, help="bits per sequence")
    mon.add_argument("--N", type=int, default=2**17, help="sequences per series")
    mon.add_argument("--k", type=float, default=3.0, help="warning threshold in sigma")
    mon.add_argument("--consecutive", type=int, default=2, help="warnings in a row that raise an alarm")
    mon.add_argument("--alpha", type=parse_alpha, default=2.0**-20)
    mon.add_argument("--symbol-bits", type=int, default=4)
    mon.add_argument("--window", type=int, default=512)
    mon.add_argument("--cutoff", type=int, help="override RCT cutoff / APT upper cutoff")
    mon.add_argument("--tests", default="monobit,runs", help=f"comma list from {','.join(TESTS)}")
    mon.add_argument("--inject", type=parse_inject, metavar="j,f", help="force j bits to 1 every f sequences")
    mon.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")

    ana = sub.add_parser("analyze", help="retrospective ISN and entropy analysis")
    _input_args(ana)
    ana.add_argument("--test", choices=TESTS, default="rct")
    ana.add_argument("--tests", dest="test", choices=TESTS, help=argparse.SUPPRESS)
    ana.add_argument("--n", type=int, default=32)
    ana.add_argument("--k", type=float, default=1.0, help="per-sequence threshold for monobit/runs")
    ana.add_argument("--alpha", type=parse_alpha, default=2.0**-20)
    ana.add_argument("--symbol-bits", type=int, default=4)
    ana.add_argument("--window", type=int, default=512)
    ana.add_argument("--cutoff", type=int, help="RCT cutoff / APT upper cutoff")
    ana.add_argument("--lower-cutoff", type=int, help="APT lower cutoff")
    ana.add_argument("--scan", help="APT upper-cutoff scan, e.g. 36-62")
    ana.add_argument("--scan-lower", help="APT lower-cutoff scan, e.g. 8-28")
    ana.add_argument("--failures", metavar="PATH", help="recorded failure positions, one integer per line")
    ana.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")

    tab = sub.add_parser("tables", help="print the threshold tables")
    tab.add_argument("--k", type=parse_float_list, default=[1.0, 3.0, 5.0, 7.0])
    tab.add_argument("--m", type=int, default=16)
    tab.add_argument("--H", type=parse_float_list, default=[2.0, 4.0])
    tab.add_argument("--alpha", type=lambda s: [parse_alpha(a) for a in s.split(",")],
                     default=[2.0**-20, 2.0**-40])
    tab.add_argument("--out", metavar="PATH")
    tab.add_argument("--format", choices=("text", "jsonl", "csv"), default="text")

    sen = sub.add_parser("sensitivity", help="Monobit bias-detection power curves")
    sen.add_argument("--n", type=int, default=32)
    sen.add_argument("--N", type=int, default=2**5)
    sen.add_argument("--j", type=parse_int_list, default=list(range(1, 11)), help="forced bits, e.g. 1-10")
    sen.add_argument("--f", type=parse_int_list, default=[1, 10, 100], help="tamper periods")
    sen.add_argument("--k", type=float, default=3.0)
    sen.add_argument("--trials", type=int, default=10_000)
    sen.add_argument("--seed", type=parse_seed)
    sen.add_argument("--out", metavar="PATH")
    sen.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    return parser


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=False, separators=(",", ":"))


def manifest(command: str, config: dict, seed: int | None, source: BitSource | None) -> dict:
    return {
        "type": "manifest",
        "command": command,
        "config": config,
        "seed": seed,
        "input": None if source is None else source.identity(),
        "version": __version__,
    }


def _open_input(args) -> tuple[BitSource, int | None]:
    seed = resolve_seed(args.seed)
    if args.input is None and seed is None:
        raise UsageError(f"give --input PATH|- or --seed (or set ${SEED_ENV})")
    if args.input is None and args.bits is None:
        raise UsageError("the seeded generator needs --bits")
    src = open_source(args.input, seed if args.input is None else None, args.buffer_size)
    return src, (seed if args.input is None else None)


class _Limited(BitSource):
    """Caps another source at ``limit`` bits."""

    def __init__(self, inner: BitSource, limit: int) -> None:
        super().__init__()
        self.inner = inner
        self.left = limit
        self.kind = inner.kind

    def read_bits(self, count: int) -> np.ndarray:
        bits = self.inner.read_bits(min(count, self.left))
        self.left -= bits.size
        self.bits_read += bits.size
        return bits

    def next_bits(self, count: int) -> np.ndarray:
        bits = self.read_bits(count)
        if bits.size < count:
            from .bitstream import EndOfStream

            raise EndOfStream(f"requested {count} bits, {bits.size} remain")
        return bits

    def identity(self) -> dict:
        return self.inner.identity()


def _limit(src: BitSource, bits: int | None) -> BitSource:
    return src if bits is None else _Limited(src, bits)


def _stream_stats(src: BitSource) -> dict:
    inner = getattr(src, "inner", src)
    if isinstance(inner, StreamSource):
        return {"bytes_read": inner.bytes_read, "sha256": inner.sha256}
    return {}


# ------------------------------------------------------------------ monitor


def cmd_monitor(args) -> int:
    tests = tuple(t.strip() for t in args.tests.split(",") if t.strip())
    bias = None
    if args.inject is not None:
        bias = BiasModel(args.inject[0], args.inject[1], args.n)
    settings = MonitorSettings(
        n=args.n,
        series=SeriesConfig(args.N, args.k, args.consecutive),
        tests=tests,
        symbol_bits=args.symbol_bits,
        window=args.window,
        alpha=args.alpha,
        cutoff=args.cutoff,
        bias=bias,
    )
    src, seed = _open_input(args)
    monitor = Monitor(settings)
    head = manifest("monitor", settings.echo(), seed, src)
    with src, _output(args.out) as out:
        stream = _limit(src, args.bits)
        if args.format == "jsonl":
            out.write(_dump(head) + "\n")
            for rep in monitor.run(stream):
                out.write(_dump(rep.record()) + "\n")
        else:
            out.write("# " + _dump(head) + "\n")
            writer = None
            for rep in monitor.run(stream):
                rec = rep.record()
                if writer is None:
                    writer = csv.DictWriter(out, fieldnames=list(rec), lineterminator="\n")
                    writer.writeheader()
                writer.writerow(rec)
        summary = {
            "type": "summary",
            "series": monitor.series_done,
            "bits_used": monitor.bits_used,
            "trailing_bits": monitor.trailing_bits,
            "warnings": monitor.warnings,
            "alarms": monitor.alarms,
            **_stream_stats(stream),
        }
        out.write(("" if args.format == "jsonl" else "# ") + _dump(summary) + "\n")
    return EXIT_ALARM if any(monitor.alarms.values()) else EXIT_OK


# ------------------------------------------------------------------ analyze

CHUNK_BITS = 1 << 22


def _sequence_failures(stream: BitSource, n: int, k: float, test: str) -> tuple[np.ndarray, int]:
    positions = []
    seen = 0
    per = (CHUNK_BITS // n) * n
    carry = np.empty(0, dtype=np.uint8)
    t = monobit_threshold(n, k)
    runs_cfg = RunsConfig(n, k) if test == "runs" else None
    for chunk in stream.chunks(per):
        bits = np.concatenate([carry, chunk])
        full = bits.size // n
        carry = bits[full * n:]
        rows = bits[: full * n].reshape(full, n)
        s = monobit_rows(rows)
        if test == "monobit":
            failed = np.abs(s) >= t
        else:
            failed = runs_fail_rows(runs_rows(rows), (s + n) // 2, runs_cfg)
        positions.append(seen + np.flatnonzero(failed))
        seen += full
    return (np.concatenate(positions) if positions else np.empty(0, dtype=np.int64)), seen


def _rct_failures(stream: BitSource, config: RctConfig, symbol_bits: int) -> tuple[np.ndarray, int]:
    rct = RepetitionCountTest(config)
    symbols = SymbolStream(stream, symbol_bits)
    per = CHUNK_BITS // symbol_bits
    out = []
    while True:
        chunk = symbols.read_symbols(per)
        if chunk.size == 0:
            break
        out.append(rct.feed(chunk))
    return (np.concatenate(out) if out else np.empty(0, dtype=np.int64)), rct.position


def _apt_counts(stream: BitSource, config: AptConfig, symbol_bits: int) -> np.ndarray:
    apt = AdaptiveProportionTest(config)
    symbols = SymbolStream(stream, symbol_bits)
    per = CHUNK_BITS // symbol_bits
    out = []
    while True:
        chunk = symbols.read_symbols(per)
        if chunk.size == 0:
            break
        out.append(apt.feed_counts(chunk))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def run_analysis(args) -> list[dict]:
    records: list[dict] = []
    m = 1 << args.symbol_bits
    if args.failures:
        with open(args.failures) as fh:
            positions = np.array([int(x) for x in fh.read().split()], dtype=np.int64)
        hist = IsnHistogram.from_positions(positions)
        records.append({"type": "isn", **hist.summary()})
        if args.test == "rct":
            cutoff = args.cutoff or rct_cutoff(m, float(args.symbol_bits), args.alpha)
            records.extend(_rct_records(hist, cutoff, m, args.symbol_bits))
        else:
            expected = gauss_two_tail(args.k)
            records.append(isn_conformance(hist, "geometric", expected).record())
        return records

    src, _ = _open_input(args)
    with src:
        stream = _limit(src, args.bits)
        if args.test in ("monobit", "runs"):
            positions, seen = _sequence_failures(stream, args.n, args.k, args.test)
            hist = IsnHistogram.from_positions(positions)
            rec = {"type": "isn", "test": args.test, "sequences": seen, "failed": int(positions.size),
                   **hist.summary(), "expected_gauss": gauss_two_tail(args.k)}
            if args.test == "monobit":
                rec["expected_exact"] = monobit_single_seq_power(args.n, args.k, 0)[1]
            records.append(rec)
            records.append(isn_conformance(hist, "geometric", gauss_two_tail(args.k)).record())
        elif args.test == "rct":
            config = RctConfig(m=m, h=float(args.symbol_bits), alpha=args.alpha, cutoff=args.cutoff)
            positions, seen = _rct_failures(stream, config, args.symbol_bits)
            hist = IsnHistogram.from_positions(positions)
            records.append({"type": "isn", "test": "rct", "symbols": seen, "failed": int(positions.size),
                            **hist.summary()})
            records.extend(_rct_records(hist, config.C, m, args.symbol_bits))
        else:
            config = AptConfig(m=m, window=args.window, alpha=args.alpha, c_hi=args.cutoff,
                               c_lo=args.lower_cutoff)
            counts = _apt_counts(stream, config, args.symbol_bits)
            if counts.size == 0:
                raise InsufficientFailures(0, 1, "complete windows")
            failed = int(np.count_nonzero((counts >= config.upper) | (counts <= config.lower)))
            records.append({"type": "apt", "windows": int(counts.size), "failed": failed,
                            "c_lo": config.lower, "c_hi": config.upper,
                            "predicted_rate": apt_fail_prob(1.0 / m, config)})
            if args.scan or args.scan_lower:
                records.extend(apt_scan(counts, config, parse_int_list(args.scan or ""),
                                        parse_int_list(args.scan_lower or "")))
            records.append(entropy_from_apt(failed, int(counts.size), config).record())
    return records


def _rct_records(hist: IsnHistogram, cutoff: int, m: int, symbol_bits: int) -> list[dict]:
    entropy = entropy_from_rct(hist, cutoff, m)  # strictest minimum, checked first
    expected = expected_isn_rct(m, float(symbol_bits), cutoff)
    fit = isn_conformance(hist.scaled(expected), "exponential", 1.0,
                          survival=lambda upto: rct_gap_survival(m, cutoff, upto))
    return [fit.record() | {"scale": expected}, entropy.record()]


def cmd_analyze(args) -> int:
    records = run_analysis(args)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "out", "buffer_size", "command")}
    head = {"type": "manifest", "command": "analyze", "config": config, "version": __version__}
    with _output(args.out) as out:
        if args.format == "jsonl":
            for rec in [head, *records]:
                out.write(_dump(rec) + "\n")
        else:
            out.write("# " + _dump(head) + "\n")
            for rec in records:
                out.write(",".join(f"{k}={v}" for k, v in rec.items()) + "\n")
    return EXIT_OK


# ------------------------------------------------------------------- tables


def table_one(ks: Sequence[float]) -> list[dict]:
    return [{"k": k, "two_tailed": gauss_two_tail(k), "expected_isn": 1.0 / gauss_two_tail(k)} for k in ks]


def table_two(m: int, hs: Sequence[float], alphas: Sequence[float]) -> list[dict]:
    return [{"H": h, "alpha": a, "log2_alpha": math.log2(a), "C": rct_cutoff(m, h, a)}
            for h in hs for a in alphas]


def render_tables(t1: list[dict], t2: list[dict], m: int, fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "jsonl":
        for r in t1:
            buf.write(_dump({"type": "table1", **r}) + "\n")
        for r in t2:
            buf.write(_dump({"type": "table2", "m": m, **r}) + "\n")
    elif fmt == "csv":
        buf.write("table,k,two_tailed,expected_isn,H,alpha,C\n")
        for r in t1:
            buf.write(f"1,{r['k']:g},{r['two_tailed']:.6g},{r['expected_isn']:.6g},,,\n")
        for r in t2:
            buf.write(f"2,,,,{r['H']:g},2^{r['log2_alpha']:g},{r['C']}\n")
    else:
        buf.write("Expected ISN for a k-sigma two-tailed threshold\n")
        buf.write(f"{'k':>4}  {'P(|Z|>=k)':>12}  {'ISN':>12}\n")
        for r in t1:
            buf.write(f"{r['k']:>4g}  {r['two_tailed']:>12.3g}  {r['expected_isn']:>12.4g}\n")
        buf.write(f"\nRCT cutoffs for m = {m}\n")
        buf.write(f"{'H':>4}  {'alpha':>8}  {'C':>4}\n")
        for r in t2:
            buf.write(f"{r['H']:>4g}  {'2^' + format(r['log2_alpha'], 'g'):>8}  {r['C']:>4}\n")
    return buf.getvalue()


def cmd_tables(args) -> int:
    text = render_tables(table_one(args.k), table_two(args.m, args.H, args.alpha), args.m, args.format)
    with _output(args.out) as out:
        out.write(text)
    return EXIT_OK


# -------------------------------------------------------------- sensitivity

POWER_FIELDS = ("j", "f", "k", "n", "N", "tpp", "fpp", "pull_shift", "pull_tail", "trials")


def cmd_sensitivity(args) -> int:
    seed = resolve_seed(args.seed) or 0
    rows = power_curve(args.n, args.N, args.j, args.f, args.k, args.trials, seed)
    with _output(args.out) as out:
        if args.format == "csv":
            writer = csv.DictWriter(out, fieldnames=POWER_FIELDS, lineterminator="\n")
            writer.writeheader()
            for r in rows:
                writer.writerow(r.record())
        else:
            for r in rows:
                out.write(_dump(r.record()) + "\n")
    return EXIT_OK


COMMANDS = {
    "monitor": cmd_monitor,
    "analyze": cmd_analyze,
    "tables": cmd_tables,
    "sensitivity": cmd_sensitivity,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rngsentinel: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except InsufficientFailures as exc:
        print(f"rngsentinel: insufficient data: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"rngsentinel: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
