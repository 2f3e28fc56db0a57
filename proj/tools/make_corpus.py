#!/usr/bin/env python3
"""Writes the synthetic positive-sequence cases of data/cases.

Every case is a function of its parameters and seed, so rerunning the script
reproduces the shipped files byte for byte.
"""

import argparse
import json
import pathlib
import random


def fmt(x):
    return f"{x:.6g}"


def make_case(name, buses, seed, *, load_scale=1.0, generators=3, transformers=2, extra_edges=None,
              radial=False, shunts=1, impedance_scale=1.0, long_edges=0.2, note=""):
    rng = random.Random(seed)
    edges = []
    for i in range(2, buses + 1):
        j = rng.randint(max(1, i - 4), i - 1)
        edges.append((j, i))
    if not radial:
        count = extra_edges if extra_edges is not None else buses // 3
        existing = set(edges)
        while count > 0:
            a = rng.randint(1, buses)
            reach = buses if rng.random() < long_edges else 6
            b = rng.randint(max(1, a - reach), min(buses, a + reach))
            key = (min(a, b), max(a, b))
            if a == b or key in existing:
                continue
            existing.add(key)
            edges.append(key)
            count -= 1

    tx_edges = set(rng.sample(range(len(edges)), min(transformers, len(edges))))

    loads = {}
    for i in range(2, buses + 1):
        if rng.random() < 0.75:
            p = rng.uniform(5.0, 35.0) * load_scale
            loads[i] = (p, p * rng.uniform(0.1, 0.45))
    total_load = sum(p for p, _ in loads.values())

    gen_buses = sorted(rng.sample(range(2, buses + 1), min(generators, buses - 1)))
    gens = [(1, 0.0, 1.04)]
    share = 0.9 * total_load / max(1, len(gen_buses))
    for g in gen_buses:
        gens.append((g, round(share * rng.uniform(0.7, 1.3), 3), round(rng.uniform(1.0, 1.05), 4)))

    shunt_buses = rng.sample(range(2, buses + 1), min(shunts, buses - 1))

    lines = [f"# Synthetic {buses}-bus network (seed {seed}). {note}".rstrip(), f"CASE {name}", "BASEMVA 100", "",
             "BUS", "# id type Pd Qd Gs Bs Vm Va baseKV"]
    for i in range(1, buses + 1):
        kind = 3 if i == 1 else (2 if i in gen_buses else 1)
        pd, qd = loads.get(i, (0.0, 0.0))
        bs = 15.0 if i in shunt_buses else 0.0
        lines.append(f"{i} {kind} {fmt(pd)} {fmt(qd)} 0 {fmt(bs)} 1 0 138")
    lines += ["END", "", "GEN", "# bus Pg Qg Qmax Qmin Vg status"]
    for bus, pg, vg in gens:
        lines.append(f"{bus} {fmt(pg)} 0 900 -900 {fmt(vg)} 1")
    lines += ["END", "", "BRANCH", "# from to r x b status rating"]
    tx_lines = ["TRANSFORMER", "# from to r x b tap shift status"]
    for k, (a, b) in enumerate(edges):
        r = rng.uniform(0.004, 0.03) * impedance_scale
        x = r * rng.uniform(3.0, 7.0)
        if k in tx_edges:
            tap = rng.choice([0.95, 0.975, 1.0, 1.025])
            shift = rng.choice([0.0, 0.0, 2.0])
            tx_lines.append(f"{a} {b} 0 {fmt(x)} 0 {fmt(tap)} {fmt(shift)} 1")
        else:
            bc = rng.uniform(0.0, 0.04)
            lines.append(f"{a} {b} {fmt(r)} {fmt(x)} {fmt(bc)} 1 {fmt(rng.choice([100, 150, 250]))}")
    lines += ["END", ""] + tx_lines + ["END", ""]
    return "\n".join(lines)


def invert3(m):
    a = [row[:] + [1.0 if i == j else 0.0 for j in range(3)] for i, row in enumerate(m)]
    for c in range(3):
        pivot = max(range(c, 3), key=lambda r: abs(a[r][c]))
        a[c], a[pivot] = a[pivot], a[c]
        scale = a[c][c]
        a[c] = [v / scale for v in a[c]]
        for r in range(3):
            if r != c:
                f = a[r][c]
                a[r] = [v - f * w for v, w in zip(a[r], a[c])]
    return [row[3:] for row in a]


def rounded(x):
    return float(f"{x:.10g}")


def make_feeder(name, seed):
    """Unbalanced radial three-phase feeder behind a substation transformer."""
    rng = random.Random(seed)
    buses = 13
    parents = {2: 1, 3: 2}
    for i in range(4, buses + 1):
        parents[i] = rng.randint(max(3, i - 3), i - 1)

    def section(length):
        self_z = complex(0.012, 0.036) * length
        mutual_z = complex(0.004, 0.014) * length
        z = [[self_z if r == c else mutual_z for c in range(3)] for r in range(3)]
        y = invert3(z)
        return {"y_real": [[rounded(v.real) for v in row] for row in y],
                "y_imag": [[rounded(v.imag) for v in row] for row in y],
                "b_charging": [[rounded(0.002 * length if r == c else -0.0005 * length) for c in range(3)]
                               for r in range(3)]}

    doc = {"name": name, "phases": 3, "units": "pu", "base_mva": 10.0, "buses": [], "generators": [],
           "loads": [], "branches": [], "transformers": [], "shunts": []}
    for i in range(1, buses + 1):
        bus = {"id": i, "base_kv": 115.0 if i == 1 else 12.47}
        if i == 1:
            bus.update({"slack": True, "v_set": 1.0, "angle_deg": 0.0})
        doc["buses"].append(bus)

    zt = complex(0.01, 0.08)
    doc["transformers"].append({"id": 1, "from": 1, "to": 2,
                                "y_real": [[rounded((1 / zt).real) if r == c else 0.0 for c in range(3)]
                                           for r in range(3)],
                                "y_imag": [[rounded((1 / zt).imag) if r == c else 0.0 for c in range(3)]
                                           for r in range(3)],
                                "tap": [0.975, 0.975, 0.975]})
    for k, i in enumerate(range(3, buses + 1), start=1):
        entry = {"id": k, "from": parents[i], "to": i}
        entry.update(section(rng.uniform(0.5, 1.5)))
        doc["branches"].append(entry)

    load_id = 1
    for i in range(4, buses + 1):
        if rng.random() < 0.25:
            continue
        delta = rng.random() < 0.35
        parts = {"y": rng.uniform(0.1, 0.3), "i": rng.uniform(0.1, 0.3)}
        parts["s"] = 1.0 - parts["y"] - parts["i"]
        load = {"id": load_id, "bus": i, "model": "zip", "connection": "delta" if delta else "wye"}
        p = [rng.uniform(0.03, 0.15) if rng.random() < 0.8 else 0.0 for _ in range(3)]
        pf = rng.uniform(0.85, 0.97)
        q = [v * (1 - pf * pf) ** 0.5 / pf for v in p]
        scale = 3 ** 0.5 if delta else 1.0
        load["y_real"] = [rounded(parts["y"] * v / scale ** 2) for v in p]
        load["y_imag"] = [rounded(-parts["y"] * v / scale ** 2) for v in q]
        load["i_real"] = [rounded(parts["i"] * v / scale) for v in p]
        load["i_imag"] = [rounded(parts["i"] * v / scale) for v in q]
        load["s_real"] = [rounded(parts["s"] * v) for v in p]
        load["s_imag"] = [rounded(parts["s"] * v) for v in q]
        doc["loads"].append(load)
        load_id += 1
    doc["shunts"].append({"id": 1, "bus": buses, "g": 0.0, "b": [0.01, 0.01, 0.01]})
    return json.dumps(doc, indent=1) + "\n"


CORPUS = [
    dict(name="case5_syn", buses=5, seed=5, generators=1, transformers=1),
    dict(name="case24_radial", buses=24, seed=24, generators=3, transformers=2, radial=True, load_scale=0.5),
    dict(name="case30_syn", buses=30, seed=30, generators=5, transformers=3, shunts=2),
    dict(name="case40_mesh", buses=40, seed=40, generators=6, transformers=3, extra_edges=25, shunts=2),
    dict(name="case57_syn", buses=57, seed=57, generators=7, transformers=5, shunts=3),
    dict(name="case118_syn", buses=118, seed=118, generators=20, transformers=9, shunts=5, extra_edges=60,
         impedance_scale=0.4),
    dict(name="case200_syn", buses=200, seed=200, generators=30, transformers=12, shunts=6, extra_edges=100,
         impedance_scale=0.4),
    dict(name="case145_stressed", buses=145, seed=145, generators=20, transformers=9, shunts=5, load_scale=0.5,
         long_edges=0.0, note="Long weak corridors; plain Newton fails from flat start."),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "cases"))
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for spec in CORPUS:
        spec = dict(spec)
        name = spec.pop("name")
        text = make_case(name, spec.pop("buses"), spec.pop("seed"), **spec)
        (out / f"{name}.net").write_text(text)
        print(f"wrote {name}.net")
    (out / "feeder13_unbalanced.json").write_text(make_feeder("feeder13_unbalanced", 13))
    print("wrote feeder13_unbalanced.json")


if __name__ == "__main__":
    main()
