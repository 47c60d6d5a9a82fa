"""Command-line entry points: cost, simulate, verify, sweep, check, export."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .costmodel import MB_BINARY, MB_DECIMAL, ArchConfig, UnsupportedLayerError, layer_cost, network_cost, select_mode
from .netmodel import BUILTINS, ConvLayerConfig, LayerShapeError, NetworkModel, builtin_network
from .oracle import FilterBank, conv_direct, load_tensor, random_tensors, save_tensor
from .report import cost_report, mismatches, sim_report
from .simulator import TRACE_FIELDS, LayerSim, NetworkSim, simulate_layer
from .verify import run_all

log = logging.getLogger("convsim")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _mb_base(text: str) -> int:
    if text in ("1e6", "1000000"):
        return MB_DECIMAL
    if text in ("2^20", "2**20", "1048576"):
        return MB_BINARY
    raise argparse.ArgumentTypeError("--mb-base must be 1e6 or 2^20")


def _add_arch_flags(p: argparse.ArgumentParser, grid: bool = False) -> None:
    """Architecture overrides; with ``grid`` the swept flags take comma lists."""
    d = ArchConfig()
    num = _int_list if grid else int
    wrap = (lambda v: [v]) if grid else (lambda v: v)
    g = p.add_argument_group("architecture")
    g.add_argument("--u", type=num, default=wrap(d.u), help="CUs excluding the last one")
    g.add_argument("--n", type=num, default=wrap(d.n), help="PEs per regular CU")
    g.add_argument("--last-cu-pes", type=int, default=d.last_cu_pes)
    g.add_argument("--sram-words", "--sram", type=num, default=wrap(d.sram_words))
    g.add_argument("--read-buses", "--buses", type=num, default=wrap(d.read_buses),
                   help="DRAM words readable per cycle (7 = 112-bit path, 4 = 64-bit)")
    g.add_argument("--clock-mhz", type=float, default=d.clock_hz / 1e6)
    g.add_argument("--word-bits", type=int, default=d.word_bits)
    g.add_argument("--mb-base", type=_mb_base, default=d.mb_base, help="1e6 or 2^20")


def _add_network_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", choices=sorted(BUILTINS))
    src.add_argument("--network", metavar="FILE", help="network JSON document")
    p.add_argument("--pruned", action="store_true", help="apply the built-in channel-pruning spec")
    p.add_argument("--with-shortcuts", action="store_true", help="add ResNet projection shortcuts")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--output", help="write the report here instead of stdout")


def _arch(args) -> ArchConfig:
    first = lambda v: v[0] if isinstance(v, list) else v
    return ArchConfig(u=first(args.u), n=first(args.n), last_cu_pes=args.last_cu_pes,
                      sram_words=first(args.sram_words), read_buses=first(args.read_buses),
                      word_bits=args.word_bits,
                      clock_hz=args.clock_mhz * 1e6, mb_base=args.mb_base)


def _network(args) -> NetworkModel:
    if args.network:
        if args.pruned or args.with_shortcuts:
            raise SystemExit("--pruned/--with-shortcuts apply to builtin networks only")
        return NetworkModel.load(args.network)
    return builtin_network(args.builtin, pruned=args.pruned, with_shortcuts=args.with_shortcuts)


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_cost(args) -> int:
    report = cost_report(network_cost(_network(args), _arch(args)))
    _emit(report.render(args.format), args.output)
    print(report.summary(), file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    net, arch = _network(args), _arch(args)
    rng = np.random.default_rng(args.seed)
    seeds = rng.integers(0, 2**31, size=len(net.layers))
    tracing = args.trace is not None

    def run(i: int):
        layer = net.layers[i]
        records = [] if tracing else None
        x = f = None
        if not args.counters_only:
            x, f = random_tensors(layer, np.random.default_rng(int(seeds[i])), arch.word_bits)
        out, ctr = simulate_layer(layer, arch, x, f, functional=not args.counters_only,
                                  acc_bits=arch.acc_bits if args.acc_check else None,
                                  trace=records.append if tracing else None)
        if args.check_oracle and out is not None:
            if not np.array_equal(out, conv_direct(layer, x, f).output):
                raise AssertionError(f"{layer.name}: output differs from direct convolution")
        return LayerSim(layer, select_mode(layer, arch), ctr), records

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(run, range(len(net.layers))))
    ns = NetworkSim(net.name, arch, args.seed, [r[0] for r in results])
    report = sim_report(ns, [layer_cost(l, arch) for l in net.layers])
    _emit(report.render(args.format), args.output)
    if tracing:
        with open(args.trace, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["layer"] + TRACE_FIELDS)
            for layer, (_, records) in zip(net.layers, results):
                for rec in records:
                    w.writerow([layer.name] + [getattr(rec, k) for k in TRACE_FIELDS])
    print(report.summary(), file=sys.stderr)
    bad = mismatches(report)
    if bad:
        print(f"measured != analytical on {len(bad)} layers: {', '.join(bad)}", file=sys.stderr)
        return 1
    print("measured counters equal the analytical model on every layer", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    arch = _arch(args)
    results = run_all(args.trials, args.seed, arch, args.equivalence_trials)
    for r in results:
        print(r.line())
        for f in r.failures:
            print(f"    {f}")
    return 0 if all(r.ok for r in results) else 1


SWEEP_FIELDS = ("u", "n", "sram_words", "read_buses", "total_pes", "cycles", "latency_ms",
                "dram_mb", "puf", "error")


def cmd_sweep(args) -> int:
    base = _arch(args)
    net = _network(args)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    grid = itertools.product(args.u, args.n, args.sram_words, args.read_buses)
    failed = 0
    for u, n, sram, buses in grid:
        arch = replace(base, u=u, n=n, sram_words=sram, read_buses=buses)
        row = {"u": u, "n": n, "sram_words": sram, "read_buses": buses, "total_pes": arch.total_pes}
        try:
            nc = network_cost(net, arch)
            row |= {"cycles": nc.cycles, "latency_ms": nc.latency_s * 1e3, "dram_mb": nc.dram_mb,
                    "puf": nc.macs / (arch.total_pes * nc.cycles), "error": ""}
        except (UnsupportedLayerError, LayerShapeError) as e:
            failed += 1
            row |= {"cycles": "", "latency_ms": "", "dram_mb": "", "puf": "", "error": str(e)}
        w.writerow(row)
    _emit(buf.getvalue(), args.output)
    if failed:
        print(f"{failed} grid points unsupported", file=sys.stderr)
    return 0


def cmd_check(args) -> int:
    """Run one layer from tensor files through the simulator and the oracle."""
    x = load_tensor(args.input)
    w = load_tensor(args.filters)
    bias = load_tensor(args.bias) if args.bias else None
    k, ic, fl, _ = w.shape
    layer = ConvLayerConfig("check", il=x.shape[1], ic=ic, fl=fl, k=k, s=args.stride, z=args.pad)
    fb = FilterBank(w, bias)
    arch = _arch(args)
    out, ctr = simulate_layer(layer, arch, x, fb)
    ref = conv_direct(layer, x, fb)
    if args.save:
        save_tensor(args.save, out)
    same = np.array_equal(out, ref.output)
    print(f"{'PASS' if same else 'FAIL'} output {out.shape} vs oracle; cycles={ctr.cycles} "
          f"dram_in={ctr.dram_in_reads} dram_w={ctr.dram_w_reads} dram_out={ctr.dram_out_writes}")
    return 0 if same else 1


def cmd_export(args) -> int:
    net = builtin_network(args.builtin, pruned=args.pruned, with_shortcuts=args.with_shortcuts)
    _emit(net.to_json() + "\n", args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="convsim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", help="analytical per-layer report")
    _add_network_flags(p)
    _add_arch_flags(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("simulate", help="pass-level simulation with measured counters")
    _add_network_flags(p)
    _add_arch_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counters-only", action="store_true", help="skip the arithmetic")
    p.add_argument("--check-oracle", action="store_true", help="compare every output with direct convolution")
    p.add_argument("--acc-check", action="store_true", help="fail on 24-bit accumulator overflow")
    p.add_argument("--trace", metavar="PATH", help="write one CSV line per pass")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="randomized oracle-equivalence suite")
    _add_arch_flags(p)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--equivalence-trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="network cost over an architecture grid (CSV)")
    _add_network_flags(p)
    _add_arch_flags(p, grid=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="simulate one layer from tensor files (.npy or .json)")
    _add_arch_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--filters", required=True)
    p.add_argument("--bias")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--pad", type=int, default=0)
    p.add_argument("--save", help="write the simulated output tensor")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("export", help="write a builtin network as JSON")
    p.add_argument("--builtin", choices=sorted(BUILTINS), required=True)
    p.add_argument("--pruned", action="store_true")
    p.add_argument("--with-shortcuts", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UnsupportedLayerError, LayerShapeError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
