"""Command-line front end.

Every command prints one result record (JSON with ``--json``) and exits with

* 0 -- ACCEPT, DUPLICATE, NO-DUPLICATE or ZERO
* 3 -- FAIL
* 1 -- usage error or parameter out of range
* 2 -- malformed input

Stream files hold a ``n=<dimension>`` header and one ``index delta`` update
per line; ``#`` starts a comment and blank lines are ignored.  Duplicate
streams (``dups``) hold whitespace-separated symbols instead.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .countsketch import CountSketch
from .dupfinder import (
    find_duplicate_full,
    find_duplicate_long,
    find_duplicate_short,
    full_repetitions,
    short_repetitions,
    stream_vector,
)
from .l0sampler import L0Sampler
from .lpsampler import LpSampler, SamplerConfig
from .normest import NormEstimator
from .oracle import DenseReference, exact_lp_distribution, lp_norm
from .results import Verdict
from .sparserecovery import SparseRecovery
from .universal import ur_one_round, ur_symmetrize, ur_two_round

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_FAIL = 0, 1, 2, 3

RECORD_KEYS = (
    "command", "verdict", "index", "estimate", "p", "eps", "delta", "seed",
    "counters_used", "transcript_bytes", "elapsed_ms",
)


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- input ---------------------------------------------------------------------


def _read_text(path):
    if path is None:
        raise UsageError("--input is required")
    try:
        if path == "-":
            return sys.stdin.read()
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _header(line, lineno):
    try:
        n = int(line[2:].strip())
    except ValueError:
        raise InputError(f"line {lineno}: bad header {line!r}") from None
    if n < 1:
        raise InputError(f"line {lineno}: dimension must be positive")
    return n


def _resolve_n(header_n, flag_n):
    if header_n is not None and flag_n is not None and header_n != flag_n:
        raise InputError(f"header n={header_n} disagrees with --n {flag_n}")
    n = header_n if header_n is not None else flag_n
    if n is None:
        raise InputError("dimension unknown: add an 'n=' header or pass --n")
    return n


def parse_stream(text, n=None, max_magnitude=None):
    """Parse a stream file into ``(n, indices, deltas)``.

    Raises :class:`InputError` for malformed lines, indices outside ``[n]``
    or a coordinate whose running value exceeds ``M`` (``n**2`` by default).
    """
    header_n, rows = None, []
    for lineno, line in _content_lines(text):
        if line.startswith("n="):
            if header_n is not None or rows:
                raise InputError(f"line {lineno}: header must come first and only once")
            header_n = _header(line, lineno)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InputError(f"line {lineno}: expected 'index delta', got {line!r}")
        try:
            rows.append((int(parts[0]), int(parts[1]), lineno))
        except ValueError:
            raise InputError(f"line {lineno}: non-integer field in {line!r}") from None
    n = _resolve_n(header_n, n)
    bound = n**2 if max_magnitude is None else max_magnitude
    running = {}
    for i, d, lineno in rows:
        if not 1 <= i <= n:
            raise InputError(f"line {lineno}: index {i} outside [1, {n}]")
        running[i] = running.get(i, 0) + d
        if abs(running[i]) > bound:
            raise InputError(f"line {lineno}: |x_{i}| exceeds the magnitude bound {bound}")
    idx = np.array([r[0] for r in rows], dtype=np.int64)
    delta = np.array([r[1] for r in rows], dtype=np.int64)
    return n, idx, delta


def parse_symbols(text, n=None):
    """Parse a duplicate-stream file into ``(n, symbols)``."""
    header_n, symbols = None, []
    for lineno, line in _content_lines(text):
        if line.startswith("n="):
            if header_n is not None or symbols:
                raise InputError(f"line {lineno}: header must come first and only once")
            header_n = _header(line, lineno)
            continue
        for tok in line.split():
            try:
                symbols.append((int(tok), lineno))
            except ValueError:
                raise InputError(f"line {lineno}: non-integer symbol {tok!r}") from None
    n = _resolve_n(header_n, n)
    for a, lineno in symbols:
        if not 1 <= a <= n:
            raise InputError(f"line {lineno}: symbol {a} outside [1, {n}]")
    return n, np.array([a for a, _ in symbols], dtype=np.int64)


def parse_bits(text):
    """Two lines of 0/1 characters (``x`` then ``y``); optional ``x=``/``y=`` prefixes."""
    lines = [line for _, line in _content_lines(text)]
    if len(lines) != 2:
        raise InputError("expected exactly two bit strings")
    out = []
    for line in lines:
        if line[:2] in ("x=", "y="):
            line = line[2:].strip()
        if not line or set(line) - {"0", "1"}:
            raise InputError(f"not a bit string: {line!r}")
        out.append(np.frombuffer(line.encode(), dtype=np.uint8) - ord("0"))
    if out[0].size != out[1].size:
        raise InputError("bit strings differ in length")
    return out[0].astype(np.int64), out[1].astype(np.int64)


# -- commands ------------------------------------------------------------------


def _record(args, command, verdict, **extra):
    rec = {k: None for k in RECORD_KEYS}
    rec.update(command=command, verdict=str(verdict), seed=args.seed)
    for key in ("p", "eps", "delta"):
        rec[key] = getattr(args, key, None)
    rec.update(extra)
    return rec


def _dense(n, idx, delta):
    return DenseReference(n).replay((idx, delta)).x


def cmd_sample(args):
    n, idx, delta = parse_stream(_read_text(args.input), args.n)
    sampler = LpSampler(p=args.p, eps=args.eps, delta=args.delta, n=n, seed=args.seed)
    res = sampler.fit((idx, delta)).sample()
    rec = _record(args, "sample", res.verdict, index=res.index, estimate=res.estimate,
                  counters_used=sampler.counters_used, n=n, space_bits=sampler.space_bits)
    if args.verify:
        x = _dense(n, idx, delta)
        dist = exact_lp_distribution(x, args.p)
        rec["verify"] = {
            "exact_mass": None if dist is Verdict.ZERO or res.index is None else float(dist[res.index - 1]),
            "true_value": None if res.index is None else int(x[res.index - 1]),
            "norm": lp_norm(x, args.p),
        }
    return rec


def cmd_l0sample(args):
    n, idx, delta = parse_stream(_read_text(args.input), args.n)
    sampler = L0Sampler(n=n, delta=args.delta, seed=args.seed)
    res = sampler.fit((idx, delta)).sample()
    rec = _record(args, "l0sample", res.verdict, index=res.index, estimate=res.estimate,
                  counters_used=sampler.counters_used, n=n)
    if args.verify:
        x = _dense(n, idx, delta)
        support = int(np.count_nonzero(x))
        rec["verify"] = {
            "support_size": support,
            "in_support": None if res.index is None else bool(x[res.index - 1] != 0),
            "exact_mass": None if res.index is None or support == 0 else 1.0 / support,
        }
    return rec


def cmd_dups(args):
    n, a = parse_symbols(_read_text(args.input), args.n)
    mode = args.mode
    if mode == "full":
        if a.size != n + 1:
            raise InputError(f"full mode needs n+1={n + 1} symbols, got {a.size}")
        run = lambda: find_duplicate_full(a, n, args.delta, args.seed)  # noqa: E731
        cfg = SamplerConfig.from_params(1.0, 0.5, 0.5, n)
        counters = full_repetitions(args.delta) * cfg.v * cfg.counters_per_round
        s = None
    else:
        s = args.s if args.s is not None else abs(a.size - n)
        expected = n - s if mode == "short" else n + s
        if a.size != expected:
            raise InputError(f"{mode} mode with s={s} needs {expected} symbols, got {a.size}")
        if mode == "short":
            run = lambda: find_duplicate_short(a, n, s, args.delta, args.seed)  # noqa: E731
            cfg = SamplerConfig.from_params(1.0, 0.5, 0.5, n)
            rec_counters = SparseRecovery(s=5 * s, n=n, seed=0).fit([]).n_counters
            counters = short_repetitions(args.delta) * cfg.v * cfg.counters_per_round + rec_counters
        else:
            run = lambda: find_duplicate_long(a, n, s, args.delta, args.seed)  # noqa: E731
            counters = None
    verdict = run()
    if counters is None:
        size = verdict.info.get("reservoir")
        if size is not None:
            counters = 2 * size
        else:
            cfg = SamplerConfig.from_params(1.0, 0.5, 0.5, n)
            counters = full_repetitions(args.delta) * cfg.v * cfg.counters_per_round
    rec = _record(args, "dups", verdict.kind, index=verdict.index, counters_used=counters,
                  n=n, mode=mode, s=s, path=verdict.info.get("path"))
    if args.verify:
        x = stream_vector(a, n)
        rec["verify"] = {
            "occurrences": None if verdict.index is None else int(x[verdict.index - 1] + 1),
            "has_duplicate": bool((x > 0).any()),
        }
    return rec


def cmd_heavy(args):
    n, idx, delta = parse_stream(_read_text(args.input), args.n)
    m = math.ceil(args.phi ** (-args.p) - 1e-12)
    cs = CountSketch(m=m, n=n, seed=args.seed).fit((idx, delta))
    ne = NormEstimator(p=args.p, n=n, seed=args.seed).fit((idx, delta))
    r = ne.estimate()
    hh = cs.heavy_hitters(args.phi, args.p, r)
    rec = _record(args, "heavy", Verdict.ACCEPT, estimate=r,
                  counters_used=int(cs.counters_.size + ne.n_rows_), n=n,
                  phi=args.phi, m=m, heavy_hitters=[int(i) for i in hh])
    if args.verify:
        x = _dense(n, idx, delta)
        norm = lp_norm(x, args.p)
        a = np.abs(x)
        rec["verify"] = {
            "norm": norm,
            "must_include": [int(i) + 1 for i in np.flatnonzero(a >= args.phi * norm)] if norm else [],
            "must_exclude_violations": [int(i) for i in hh if a[i - 1] <= args.phi / 2 * norm],
        }
    return rec


def cmd_estnorm(args):
    n, idx, delta = parse_stream(_read_text(args.input), args.n)
    ne = NormEstimator(p=args.p, n=n, seed=args.seed).fit((idx, delta))
    r = ne.estimate()
    rec = _record(args, "estnorm", Verdict.ACCEPT, estimate=r, counters_used=int(ne.n_rows_), n=n)
    if args.verify:
        norm = lp_norm(_dense(n, idx, delta), args.p)
        rec["verify"] = {"norm": norm, "in_sandwich": bool(norm <= r <= 2 * norm)}
    return rec


def cmd_ur(args):
    if args.input is not None:
        x, y = parse_bits(_read_text(args.input))
        if args.n is not None and args.n != x.size:
            raise InputError(f"bit strings have length {x.size}, --n is {args.n}")
    else:
        if args.n is None:
            raise UsageError("ur needs --input or --n")
        rng = np.random.default_rng(args.seed)
        x = rng.integers(0, 2, args.n)
        y = x.copy()
        flip = rng.choice(args.n, size=min(args.distance, args.n), replace=False)
        y[flip] ^= 1
    protocol = ur_one_round if args.rounds == 1 else ur_two_round
    if args.symmetrize:
        protocol = ur_symmetrize(protocol)
    res = protocol(x, y, delta=args.delta, seed=args.seed)
    rec = _record(args, "ur", res.verdict, index=res.index,
                  transcript_bytes=res.transcript.total_bytes, n=int(x.size), rounds=args.rounds,
                  messages=[{"sender": m.sender, "label": m.label, "bytes": m.n_bytes}
                            for m in res.transcript.messages])
    if args.verify:
        rec["verify"] = {
            "hamming_distance": int(np.count_nonzero(x != y)),
            "differs": None if res.index is None else bool(x[res.index - 1] != y[res.index - 1]),
        }
    return rec


def _fit_exponent(ns, values):
    """Slope of ``log(value)`` against ``log(log2 n)``."""
    lx = np.log(np.log2(np.asarray(ns, dtype=np.float64)))
    ly = np.log(np.asarray(values, dtype=np.float64))
    return float(np.polyfit(lx, ly, 1)[0])


def bench_rows(ns, p, eps, delta, seed):
    """Space of the L_p sampler and one-round UR transcript for each ``n``."""
    rows = []
    for n in ns:
        sampler = LpSampler(p=p, eps=eps, delta=delta, n=n, seed=seed).fit([])
        l0 = L0Sampler(n=n, delta=delta, seed=seed).fit([])
        rows.append({
            "n": n,
            "counters_used": sampler.counters_used,
            "space_bits": sampler.space_bits,
            "ur_transcript_bytes": len(l0.to_bytes()),
        })
    return rows


def cmd_bench(args):
    try:
        ns = [int(v) for v in args.n_list.split(",")]
    except ValueError:
        raise UsageError(f"--n must be a comma-separated list of integers, got {args.n_list!r}") from None
    if len(ns) < 2 or min(ns) < 4:
        raise UsageError("bench needs at least two dimensions, each at least 4")
    rows = bench_rows(ns, args.p, args.eps, args.delta, args.seed)
    exps = {
        "space_bits": _fit_exponent(ns, [r["space_bits"] for r in rows]),
        "counters_used": _fit_exponent(ns, [r["counters_used"] for r in rows]),
        "ur_transcript_bytes": _fit_exponent(ns, [r["ur_transcript_bytes"] for r in rows]),
    }
    return _record(args, "bench", Verdict.ACCEPT, counters_used=rows[-1]["counters_used"],
                   transcript_bytes=rows[-1]["ur_transcript_bytes"], rows=rows,
                   log_exponents=exps)


# -- parser --------------------------------------------------------------------


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--input", help="input file, or '-' for stdin")
    common.add_argument("--verify", action="store_true", help="compare with the exact oracle")
    common.add_argument("--json", action="store_true", help="print the record as JSON")

    with_n = _Parser(add_help=False, parents=[common])
    with_n.add_argument("--n", type=int, help="dimension; must match an 'n=' header if both are given")

    parser = _Parser(prog="lpsketch", description="Linear sketches for turnstile streams.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("sample", parents=[with_n], help="L_p sample from a stream")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--delta", type=float, default=0.1)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("l0sample", parents=[with_n], help="uniform sample from the support")
    p.add_argument("--delta", type=float, default=0.1)
    p.set_defaults(func=cmd_l0sample)

    p = sub.add_parser("dups", parents=[with_n], help="find a duplicate symbol")
    p.add_argument("--mode", choices=("full", "short", "long"), default="full")
    p.add_argument("--s", type=int, help="length offset s (default |length - n|)")
    p.add_argument("--delta", type=float, default=0.1)
    p.set_defaults(func=cmd_dups)

    p = sub.add_parser("heavy", parents=[with_n], help="heavy hitters")
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--p", type=float, default=1.0)
    p.set_defaults(func=cmd_heavy)

    p = sub.add_parser("estnorm", parents=[with_n], help="constant-factor L_p norm")
    p.add_argument("--p", type=float, default=1.0)
    p.set_defaults(func=cmd_estnorm)

    p = sub.add_parser("ur", parents=[with_n], help="universal relation protocol demo")
    p.add_argument("--rounds", type=int, choices=(1, 2), default=1)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--distance", type=int, default=1, help="Hamming distance of a random instance")
    p.add_argument("--symmetrize", action="store_true", help="wrap the protocol to equalise outputs")
    p.set_defaults(func=cmd_ur)

    p = sub.add_parser("bench", parents=[common], help="space scaling over several n")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--n", dest="n_list", default="256,1024,4096", help="comma-separated dimensions")
    p.set_defaults(func=cmd_bench)
    return parser


def format_record(rec, as_json):
    if as_json:
        return json.dumps(rec, sort_keys=False)
    return "\n".join(f"{k}: {json.dumps(v) if isinstance(v, (list, dict)) else v}" for k, v in rec.items())


def main(argv=None):
    parser = build_parser()
    start = time.perf_counter()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        rec = args.func(args)
    except (UsageError, ValueError, OverflowError) as exc:
        # parameter errors from the estimators are usage errors
        print(f"lpsketch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"lpsketch: malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rec["elapsed_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
    print(format_record(rec, args.json))
    return EXIT_FAIL if rec["verdict"] == Verdict.FAIL.value else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
