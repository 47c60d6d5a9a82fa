"""Per-layer run reports and their CSV / JSON encodings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

from . import __version__
from .costmodel import ArchConfig, LayerCost, NetworkCost
from .simulator import NetworkSim

COUNTER_FIELDS = ("cycles", "stall_cycles", "dram_in_reads", "dram_w_reads", "dram_out_writes", "macs")

ROW_FIELDS = ("name", "mode", "cycles", "stall_cycles", "dram_in_reads", "dram_w_reads",
              "dram_out_writes", "dram_bytes", "dram_mb", "macs", "puf_eq5", "puf_closed",
              "latency_s", "latency_ms", "partitions")


def _row_from_cost(lc: LayerCost) -> dict:
    d = lc.to_dict()
    d["latency_ms"] = lc.latency_s * 1e3
    return {k: d[k] for k in ROW_FIELDS}


@dataclass
class RunReport:
    kind: str                      # "cost" or "simulate"
    network: str
    arch: ArchConfig
    rows: list[dict]
    seed: int | None = None
    extra_fields: tuple[str, ...] = ()
    notes: list[str] = field(default_factory=list)

    @property
    def fields(self) -> tuple[str, ...]:
        return ROW_FIELDS + self.extra_fields

    def totals(self) -> dict:
        t = {"name": "TOTAL", "mode": ""}
        for k in COUNTER_FIELDS + ("dram_bytes", "partitions"):
            t[k] = sum(r[k] for r in self.rows)
        t["dram_mb"] = t["dram_bytes"] / self.arch.mb_base
        t["latency_s"] = t["cycles"] / self.arch.clock_hz
        t["latency_ms"] = t["cycles"] * 1000 / self.arch.clock_hz
        t["puf_eq5"] = t["macs"] / (self.arch.total_pes * t["cycles"]) if t["cycles"] else 0.0
        t["puf_closed"] = ""
        for k in self.extra_fields:
            vals = [r[k] for r in self.rows]
            t[k] = all(vals) if vals and isinstance(vals[0], bool) else sum(vals)
        return t

    def by_mode(self) -> dict:
        out: dict[str, dict] = {}
        for r in self.rows:
            m = out.setdefault(r["mode"], {"layers": 0, "cycles": 0, "latency_ms": 0.0, "dram_mb": 0.0})
            m["layers"] += 1
            m["cycles"] += r["cycles"]
            m["dram_mb"] += r["dram_mb"]
        for m in out.values():
            m["latency_ms"] = m["cycles"] * 1000 / self.arch.clock_hz
        return out

    def provenance(self) -> dict:
        return {"tool": "convsim", "version": __version__, "kind": self.kind, "seed": self.seed}

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance(),
            "network": self.network,
            "arch": asdict(self.arch) | {"total_pes": self.arch.total_pes},
            "layers": [{k: r[k] for k in self.fields} for r in self.rows],
            "totals": {k: self.totals()[k] for k in self.fields},
            "by_mode": self.by_mode(),
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(self.fields), lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: r[k] for k in self.fields})
        w.writerow(self.totals())
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown format {fmt!r}")

    def summary(self) -> str:
        t = self.totals()
        lines = [f"{self.network} [{self.kind}] {len(self.rows)} layers: "
                 f"{t['cycles']} cycles, {t['latency_ms']:.2f} ms, {t['dram_mb']:.2f} MB DRAM, "
                 f"PUF {100 * t['puf_eq5']:.2f}%"]
        for mode, m in self.by_mode().items():
            lines.append(f"  {mode:<16} {m['layers']:>3} layers {m['latency_ms']:9.3f} ms {m['dram_mb']:8.2f} MB")
        return "\n".join(lines)


def cost_report(nc: NetworkCost) -> RunReport:
    return RunReport("cost", nc.network, nc.arch, [_row_from_cost(l) for l in nc.layers])


def sim_report(ns: NetworkSim, costs: Sequence[LayerCost]) -> RunReport:
    """Measured counters, with an exact-match flag against the analytical model."""
    arch = ns.arch
    rows = []
    for ls, lc in zip(ns.layers, costs):
        c = ls.counters
        words = c.dram_total
        dram_bytes = words * arch.word_bits / 8
        measured = (c.cycles, c.stall_cycles, c.dram_in_reads, c.dram_w_reads, c.dram_out_writes)
        expected = (lc.cycles, lc.stall_cycles, lc.dram_in_reads, lc.dram_w_reads, lc.dram_out_writes)
        rows.append({
            "name": ls.layer.name, "mode": ls.mode.value, "cycles": c.cycles,
            "stall_cycles": c.stall_cycles, "dram_in_reads": c.dram_in_reads,
            "dram_w_reads": c.dram_w_reads, "dram_out_writes": c.dram_out_writes,
            "dram_bytes": dram_bytes, "dram_mb": dram_bytes / arch.mb_base,
            "macs": c.active_mac_cycles,
            "puf_eq5": c.active_mac_cycles / (arch.total_pes * c.cycles),
            "puf_closed": lc.puf_closed,
            "latency_s": c.cycles / arch.clock_hz, "latency_ms": c.cycles * 1000 / arch.clock_hz,
            "partitions": lc.partitions,
            "drain_stall_cycles": c.drain_stall_cycles,
            "exact_match": measured == expected,
        })
    return RunReport("simulate", ns.network, arch, rows, seed=ns.seed,
                     extra_fields=("drain_stall_cycles", "exact_match"))


def mismatches(report: RunReport) -> list[str]:
    return [r["name"] for r in report.rows if r.get("exact_match") is False]
