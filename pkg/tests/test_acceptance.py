"""Acceptance criteria, one test per (sub)criterion, each at its stated tolerance.

Every check appends one PASS/FAIL line to RESULTS; conftest prints them at the
end of the session.
"""

import time
from dataclasses import replace

import pytest

from convsim.costmodel import (Mode, cycles_1x1, cycles_3x3, dram_in_1x1, dram_in_3x3, dram_out,
                               dram_w_1x1, dram_w_3x3, layer_cost, network_cost, partitions_3x3,
                               puf_closed_1x1, puf_closed_3x3)
from convsim.netmodel import census, output_length
from convsim.simulator import simulate_3x3, simulate_layer, simulate_network
from convsim.verify import mac_grid, mac_suite, mode_equivalence_suite, oracle_suite

RESULTS: list[str] = []


def check(label, ok, detail):
    RESULTS.append(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    print(RESULTS[-1])
    assert ok, f"{label}: {detail}"


def within(value, target, rel):
    return abs(value - target) <= rel * target


@pytest.fixture(scope="module")
def sims(arch, resnet, resnet_sparse, vgg):
    return {n.name: simulate_network(n, arch, seed=0, functional=False) for n in (resnet, resnet_sparse, vgg)}


# ---------------------------------------------------------------- 1. VGG-16 latency

def test_c1_vgg_latency(arch, vgg):
    t0 = time.perf_counter()
    nc = network_cost(vgg, arch)
    analytic_s = time.perf_counter() - t0
    eq2 = sum(cycles_3x3(l.ol, l.z, l.ic, l.k, arch.u) for l in vgg.layers) / arch.clock_hz * 1e3
    ms = nc.latency_s * 1e3
    check("C1 VGG-16 latency 396.9 ms +-2%", within(ms, 396.9, 0.02) and ms == pytest.approx(eq2),
          f"{ms:.2f} ms (closed-form sum {eq2:.2f} ms), {100 * (ms / 396.9 - 1):+.2f}%")
    check("C1 VGG-16 analytical runtime < 1 s", analytic_s < 1.0, f"{analytic_s * 1e3:.1f} ms")


def test_c1_vgg_simulated_runtime(arch, vgg):
    t0 = time.perf_counter()
    ns = simulate_network(vgg, arch, functional=False)
    dt = time.perf_counter() - t0
    check("C1 VGG-16 counters-only simulation < 180 s", dt < 180 and ns.totals.cycles == network_cost(vgg, arch).cycles,
          f"{dt:.1f} s, {ns.totals.cycles} cycles")


# ---------------------------------------------------------------- 2. ResNet-50 latency

def test_c2_resnet_dense(arch, resnet):
    ms = network_cost(resnet, arch).latency_s * 1e3
    check("C2 ResNet-50 dense 92.7 ms +-10%", within(ms, 92.7, 0.10), f"{ms:.2f} ms ({100 * (ms / 92.7 - 1):+.2f}%)")


def test_c2_resnet_sparse(arch, resnet_sparse):
    ms = network_cost(resnet_sparse, arch).latency_s * 1e3
    check("C2 ResNet-50 sparse 42.5 ms +-10%", within(ms, 42.5, 0.10), f"{ms:.2f} ms ({100 * (ms / 42.5 - 1):+.2f}%)")


def test_c2_resnet_four_buses(arch, resnet):
    nc = network_cost(resnet, replace(arch, read_buses=4))
    ms = nc.latency_s * 1e3
    check("C2 ResNet-50 4-bus 98.2 ms +-10%", within(ms, 98.2, 0.10), f"{ms:.2f} ms ({100 * (ms / 98.2 - 1):+.2f}%)")


def test_c2_breakdown(arch, resnet):
    from convsim.report import cost_report
    rep = cost_report(network_cost(resnet, arch))
    modes = rep.by_mode()
    ok = len(rep.rows) == 49 and sum(m["cycles"] for m in modes.values()) == rep.totals()["cycles"]
    check("C2 per-layer breakdown present", ok,
          ", ".join(f"{k} {v['latency_ms']:.2f} ms" for k, v in modes.items()))


# ---------------------------------------------------------------- 3. DRAM totals

@pytest.mark.parametrize("net,target", [("vgg", 258.2), ("resnet", 124.0), ("resnet_sparse", 63.3)])
def test_c3_dram(arch, request, net, target):
    model = request.getfixturevalue(net)
    mb = network_cost(model, arch).dram_mb
    check(f"C3 {model.name} DRAM {target} MB +-10%", within(mb, target, 0.10),
          f"{mb:.2f} MB ({100 * (mb / target - 1):+.2f}%)")


# ---------------------------------------------------------------- 4. worked example

def test_c4_worked_example(arch):
    from convsim.netmodel import ConvLayerConfig
    layer = ConvLayerConfig("worked", il=56, ic=64, fl=3, k=64, s=1, z=1)
    _, c = simulate_3x3(layer, arch, functional=False)
    first = c.partition_cycles[0]
    decomposition = 2 * 616 * 64 + 12 * 672 * 64
    ok = (first == 39_424 and c.cycles == 594_944 == cycles_3x3(56, 1, 64, 64, 64) == decomposition
          and sorted(c.partition_cycles) == sorted([616 * 64] * 2 + [672 * 64] * 12))
    check("C4 worked example exact", ok, f"first partition {first}, total {c.cycles}, decomposition {decomposition}")


# ---------------------------------------------------------------- 5. formula == simulator

def _closed(layer, arch):
    ol, ic, k, u = layer.ol, layer.ic, layer.k, arch.u
    if layer.fl == 3:
        p = partitions_3x3(ol, arch.sram_words).p
        return (cycles_3x3(ol, layer.z, ic, k, u), dram_in_3x3(layer.il, p, layer.z, ic, k, u),
                dram_w_3x3(ic, k, u, p), dram_out(ol, k))
    p = -(-ol * ol // arch.total_pes)
    return cycles_1x1(u, ic, p, k), dram_in_1x1(ol, ic, k, u), dram_w_1x1(u, ic, p, k), dram_out(ol, k)


@pytest.mark.parametrize("net", ["resnet", "vgg"])
def test_c5_formula_equals_simulator(arch, request, sims, net):
    model = request.getfixturevalue(net)
    bad, n = [], 0
    for ls in sims[model.name].layers:
        if ls.mode not in (Mode.CONV3X3, Mode.CONV1X1_STANDARD):
            continue
        n += 1
        c = ls.counters
        got = (c.cycles, c.dram_in_reads, c.dram_w_reads, c.dram_out_writes)
        if got != _closed(ls.layer, arch):
            bad.append(ls.layer.name)
    check(f"C5 {model.name} 3x3/standard-1x1 counters == closed forms", n > 0 and not bad,
          f"{n - len(bad)}/{n} layers exact" + (f"; mismatched {bad}" if bad else ""))


# ---------------------------------------------------------------- 6. PUF

def test_c6_closed_forms(arch):
    a, b = puf_closed_3x3(64, arch.u), puf_closed_1x1(arch.u)
    check("C6 closed-form PUF 98.46%", round(100 * a, 2) == 98.46 and round(100 * b, 2) == 98.46,
          f"3x3 {100 * a:.2f}%, 1x1 {100 * b:.2f}%")


@pytest.mark.parametrize("mode", [Mode.CONV3X3, Mode.CONV1X1_STANDARD])
def test_c6_measured_puf(arch, sims, mode):
    low = []
    n = 0
    for sim in sims.values():
        if sim.network == "resnet50-sparse":
            continue
        for ls in sim.layers:
            if ls.mode is mode:
                n += 1
                p = ls.counters.active_mac_cycles / (arch.total_pes * ls.counters.cycles)
                if p < 0.96:
                    low.append(f"{sim.network}:{ls.layer.name}={100 * p:.1f}%")
    check(f"C6 measured PUF >= 96% ({mode.value})", n > 0 and not low,
          f"{n - len(low)}/{n} layers >= 96%" + (f"; below: {', '.join(low[:8])}{' ...' if len(low) > 8 else ''}"
                                                 if low else ""))


def test_c6_resident_conv5(arch, sims):
    vals = {ls.layer.name: ls.counters.active_mac_cycles / (arch.total_pes * ls.counters.cycles)
            for ls in sims["resnet50"].layers if ls.mode is Mode.CONV1X1_RESIDENT}
    ok = bool(vals) and all(0.60 <= v <= 1.0 for v in vals.values())
    check("C6 resident Conv5 PUF in [60%, 100%]", ok,
          f"{len(vals)} layers, range {100 * min(vals.values()):.1f}%..{100 * max(vals.values()):.1f}% "
          f"(reference points 87.1%/94.5% not reproduced)")


def test_c6_conv1(arch, sims):
    ls = sims["resnet50"].layers[0]
    p = ls.counters.active_mac_cycles / (arch.total_pes * ls.counters.cycles)
    check("C6 Conv1 PUF in [30%, 60%]", 0.30 <= p <= 0.60, f"{100 * p:.1f}% (reference 45%)")


# ---------------------------------------------------------------- 7. oracle equivalence

@pytest.mark.parametrize("mode", list(Mode))
def test_c7_oracle(arch, mode):
    r = oracle_suite(mode, 500, 7, arch)
    check(f"C7 oracle bit-exact {mode.value} (500 random layers)", r.ok and r.trials >= 500,
          f"{r.passed}/{r.trials}" + (f"; first failure {r.failures[0]}" if r.failures else ""))


def test_c7_mode_equivalence(arch):
    r = mode_equivalence_suite(100, 7, arch)
    check("C7 standard vs resident 1x1 outputs identical", r.ok and r.trials >= 100, f"{r.passed}/{r.trials}")


def test_c7_mac_grid():
    r = mac_suite(7)
    check("C7 closed-form MACs == oracle non-pad MACs", r.ok and len(mac_grid()) >= 50 and r.trials >= 50,
          f"{r.passed}/{r.trials} grid points")


# ---------------------------------------------------------------- 8. pruned speedup

def test_c8_pruned_speedup(sims):
    dense, sparse = sims["resnet50"].layers, sims["resnet50-sparse"].layers
    ratios = {d.layer.name: d.counters.cycles / s.counters.cycles for d, s in zip(dense, sparse)}
    out = {k: v for k, v in ratios.items() if not 1.9 <= v <= 4.1}
    check("C8 dense/sparse cycle ratio in [1.9, 4.1] for every layer", not out,
          f"{len(ratios) - len(out)}/{len(ratios)} layers in range"
          + (f"; outside: {', '.join(f'{k}={v:.2f}' for k, v in out.items())}" if out else ""))


# ---------------------------------------------------------------- 9. layer table

TABLE = {  # group: (output size, [(filter size, filters, sparse filters)] per bottleneck, blocks)
    "conv2": (56, [(1, 64, 32), (3, 64, 32), (1, 256, 256)], 3),
    "conv3": (28, [(1, 128, 64), (3, 128, 64), (1, 512, 512)], 4),
    "conv4": (14, [(1, 256, 128), (3, 256, 128), (1, 1024, 1024)], 6),
    "conv5": (7, [(1, 512, 256), (3, 512, 256), (1, 2048, 2048)], 3),
}


def test_c9_layer_table(resnet, resnet_sparse):
    bad = []
    c1, s1 = resnet.layers[0], resnet_sparse.layers[0]
    if (c1.ol, c1.fl, c1.k, s1.k) != (112, 7, 64, 64):
        bad.append("conv1")
    for group, (size, cells, blocks) in TABLE.items():
        idx = [i for i, l in enumerate(resnet.layers) if l.name.startswith(group)]
        if len(idx) != 3 * blocks:
            bad.append(f"{group} count")
        for j, i in enumerate(idx):
            l, s = resnet.layers[i], resnet_sparse.layers[i]
            fl, k, ks = cells[j % 3]
            if (l.ol, l.fl, l.k, s.k) != (size, fl, k, ks) or output_length(l.il, l.fl, l.z, l.s) != size:
                bad.append(l.name)
    cen = census(resnet.layers)
    ok = not bad and cen == {1: 32, 3: 16, 7: 1} and len(resnet.layers) == 49
    check("C9 layer table cells and census", ok, f"census {dict(sorted(cen.items()))}" + (f"; bad {bad}" if bad else ""))
