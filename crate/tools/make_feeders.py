#!/usr/bin/env python3
"""Deterministic generator for the bundled feeder fixtures.

Regenerate with:  python3 tools/make_feeders.py
Outputs feeders/*.json. All randomness is seeded, so the files are stable.
"""

import json
import random
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "feeders")


def zmat(n, zs, zm):
    """Symmetric n x n impedance matrix with common self/mutual terms."""
    m = []
    for r in range(n):
        for c in range(n):
            z = zs if r == c else zm
            m.append([z[0], z[1]])
    return m


def shunt(n, b):
    m = []
    for r in range(n):
        for c in range(n):
            m.append([0.0, b if r == c else 0.0])
    return m


class Feeder:
    def __init__(self, kv, kva, source_vpu=1.0):
        self.base = {"kv": kv, "kva": kva, "source_bus": "src", "source_vpu": source_vpu}
        self.buses = []
        self.lines = []
        self.switches = []
        self.loads = []
        self._bus_phases = {}
        self.add_bus("src", "abc", "source")

    def add_bus(self, bid, phases, kind="junction"):
        self.buses.append({"id": bid, "phases": phases, "kind": kind})
        self._bus_phases[bid] = phases
        return bid

    def add_line(self, lid, f, t, phases, zs, zm, sh=0.0, switch=None):
        n = len(phases)
        line = {
            "id": lid,
            "from_bus": f,
            "to_bus": t,
            "phases": phases,
            "series_impedance": zmat(n, zs, zm),
            "shunt_admittance": shunt(n, sh),
        }
        if switch is not None:
            sid = "sw%02d" % switch
            line["switch_id"] = sid
            self.switches.append(
                {"id": sid, "index": switch, "line_id": lid, "default_status": "closed"}
            )
        self.lines.append(line)

    def add_load(self, lid, bus, phases, p_per_phase, pf_q=0.45, metered=False):
        ps = [round(p, 3) for p in p_per_phase]
        qs = [round(p * pf_q, 3) for p in p_per_phase]
        self.loads.append(
            {
                "id": lid,
                "bus_id": bus,
                "phases": phases,
                "nominal_p": ps,
                "nominal_q": qs,
                "metered": metered,
            }
        )

    def write(self, name):
        doc = {
            "base": self.base,
            "buses": self.buses,
            "lines": self.lines,
            "switches": self.switches,
            "loads": self.loads,
        }
        path = os.path.join(OUT, name)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        total_p = sum(sum(l["nominal_p"]) for l in self.loads)
        print(
            "%-24s buses=%-5d lines=%-5d switches=%-3d loads=%-4d  P=%.0f kW"
            % (name, len(self.buses), len(self.lines), len(self.switches), len(self.loads), total_p)
        )


# ---------------------------------------------------------------- toy feeders


def make_toy4():
    f = Feeder(kv=4.16, kva=2000.0)
    f.add_bus("b1", "abc")
    f.add_bus("b2", "abc", "load")
    f.add_bus("b3", "a", "load")
    zs3, zm3 = (0.04, 0.09), (0.012, 0.03)
    f.add_line("l1", "src", "b1", "abc", zs3, zm3, sh=2e-6)
    f.add_line("l2", "b1", "b2", "abc", zs3, zm3, switch=0)
    f.add_line("l3", "b1", "b3", "a", (0.10, 0.12), (0.0, 0.0), switch=1)
    f.add_load("d01", "b1", "abc", [40.0, 35.0, 45.0], metered=True)
    f.add_load("d02", "b2", "abc", [60.0, 55.0, 50.0])
    f.add_load("d03", "b3", "a", [70.0])
    f.write("toy4.json")


def make_toy6():
    rng = random.Random(61)
    f = Feeder(kv=4.16, kva=3000.0)
    zs3, zm3 = (0.03, 0.07), (0.009, 0.022)
    z1 = (0.08, 0.10)
    # radial tree: three switched branches off b1, sub-switches inside two
    for b in ["b1", "b2", "b3", "b4", "b5", "b6", "b7", "b8"]:
        f.add_bus(b, "abc", "load")
    f.add_bus("b9", "a", "load")
    f.add_line("l01", "src", "b1", "abc", zs3, zm3, sh=2e-6)
    f.add_line("l02", "b1", "b2", "abc", zs3, zm3, switch=0)
    f.add_line("l03", "b2", "b3", "abc", zs3, zm3, switch=1)
    f.add_line("l04", "b1", "b4", "abc", zs3, zm3, switch=2)
    f.add_line("l05", "b4", "b5", "abc", zs3, zm3, switch=3)
    f.add_line("l06", "b1", "b6", "abc", zs3, zm3, switch=4)
    f.add_line("l07", "b6", "b7", "abc", zs3, zm3, switch=5)
    f.add_line("l08", "b2", "b8", "abc", zs3, zm3)
    f.add_line("l09", "b4", "b9", "a", z1, (0.0, 0.0))
    for i, (bus, phases) in enumerate(
        [
            ("b1", "abc"),
            ("b2", "abc"),
            ("b3", "abc"),
            ("b4", "abc"),
            ("b5", "abc"),
            ("b6", "abc"),
            ("b7", "abc"),
            ("b8", "abc"),
            ("b9", "a"),
        ]
    ):
        p = [rng.uniform(35.0, 80.0) for _ in phases]
        f.add_load("d%02d" % (i + 1), bus, phases, p)
    f.write("toy6.json")


# ------------------------------------------------------- 123-bus-analog family

TRUTH_123 = [1, 1, 0, 1, 0, 0, 1, 0, 0, 1, 1, 0, 1]


def build_123(loops=0):
    """123 buses (src included), 13 switches, 91 loads.

    Switch plan against the truth vector [1,1,0,1,0,0,1,0,0,1,1,0,1]:
      sw00 closed  trunk t05-t06
      sw01 closed  trunk t12-t13
      sw02 open    root of lateral A  (outage region A)
      sw03 closed  root of branch  B
      sw04 open    root of branch  C  (outage region C)
      sw05 open    inside branch   C  -> de-energized, inestimable
      sw06 closed  root of branch  D
      sw07 open    root of lateral E  (outage region E)
      sw08 open    root of lateral F  (outage region F)
      sw09 closed  root of lateral G
      sw10 closed  inside branch   D
      sw11 open    root of lateral H  (outage region H)
      sw12 closed  root of lateral I
    """
    rng = random.Random(123)
    f = Feeder(kv=4.16, kva=5000.0, source_vpu=1.02)
    zs3, zm3 = (0.012, 0.030), (0.004, 0.010)  # trunk, per segment
    zs3b, zm3b = (0.018, 0.040), (0.006, 0.013)  # branch 3-phase
    z1 = (0.050, 0.065)  # single-phase lateral
    z2s, z2m = (0.035, 0.055), (0.008, 0.016)  # two-phase lateral

    nbus = 0
    nline = 0
    nload = 0

    def bus(phases, kind="junction"):
        nonlocal nbus
        nbus += 1
        return f.add_bus("b%03d" % nbus, phases, kind)

    def line(a, b, phases, zs, zm, sh=0.0, switch=None):
        nonlocal nline
        nline += 1
        f.add_line("l%03d" % nline, a, b, phases, zs, zm, sh=sh, switch=switch)

    def load(busid, phases, scale=1.0, pweights=None, qfrac=0.45):
        nonlocal nload
        nload += 1
        w = pweights or [1.0] * len(phases)
        p = [rng.uniform(10.0, 25.0) * scale * wk for wk in w]
        f.add_load("d%03d" % nload, busid, phases, p, pf_q=qfrac)

    # trunk t01..t30, three-phase
    trunk = []
    prev = "src"
    for i in range(1, 31):
        b = bus("abc")
        sw = {6: 0, 13: 1}.get(i)  # sw00 on t05-t06, sw01 on t12-t13
        line(prev, b, "abc", zs3, zm3, sh=1.5e-6, switch=sw)
        trunk.append(b)
        prev = b

    def chain(root, n, phases, zs, zm, first_switch=None, mid_switch=None, load_scale=1.0,
              pweights=None, qfrac=0.45):
        """Chain of n buses off `root`; returns the bus list."""
        out = []
        prev = root
        for k in range(n):
            b = bus(phases, "load")
            sw = first_switch if k == 0 else (mid_switch if k == n // 2 else None)
            line(prev, b, phases, zs, zm, switch=sw)
            out.append(b)
            load(b, phases, load_scale, pweights, qfrac)
            prev = b
        return out

    # Every switched region gets a distinctive load magnitude, phase signature
    # and power factor so the per-phase feeder-head P AND Q flows identify
    # which region is connected. Magnitude/phase weights alone are not enough:
    # subset sums of several regions can cancel against another region on
    # every phase, but a distinctive Q fraction breaks such P coincidences.
    # Live (truly closed) switched regions carry many loads so that a random
    # 30% meter draw almost surely places a meter behind the switch: a metered
    # load predicted de-energized is a huge residual, which forbids falsely
    # opening live regions. De-energized regions stay small; falsely closing
    # one adds its full pseudo load to the head flow on its signature phases.
    # Outage (truly open) regions carry enough loads that even when most of a
    # region's loads happen to be metered (reading zero under the outage), the
    # remaining pseudo-metered load stays well above the head-meter noise —
    # falsely closing the region is then always expensive. High Q fractions
    # help because the head Q flows are smaller, so their 1% sigma is tighter.
    # outage region A: 6 single-phase buses off t08 behind sw02
    chain(trunk[7], 6, "a", z1, (0.0, 0.0), first_switch=2, load_scale=1.8, qfrac=0.50)
    # branch B (energized): 8 three-phase buses off t10 behind sw03
    branch_b = chain(trunk[9], 8, "abc", zs3b, zm3b, first_switch=3, load_scale=0.7,
                     pweights=[1.7, 0.6, 0.7], qfrac=0.55)
    # outage region C: 8 three-phase buses off t15 behind sw04, sw05 inside
    chain(trunk[14], 8, "abc", zs3b, zm3b, first_switch=4, mid_switch=5, load_scale=1.1,
          pweights=[0.5, 1.1, 1.9], qfrac=0.32)
    # branch D (energized): 14 three-phase buses off t18 behind sw06, sw10 inside
    branch_d = chain(trunk[17], 14, "abc", zs3b, zm3b, first_switch=6, mid_switch=10,
                     load_scale=0.5, pweights=[0.8, 1.8, 0.6], qfrac=0.72)
    # outage region E: 6 two-phase buses off t22 behind sw07
    chain(trunk[21], 6, "ab", z2s, z2m, first_switch=7, load_scale=1.3,
          pweights=[1.5, 0.6], qfrac=0.75)
    # outage region F: 6 single-phase buses off t25 behind sw08
    chain(trunk[24], 6, "b", z1, (0.0, 0.0), first_switch=8, load_scale=1.2, qfrac=0.62)
    # branch G (energized): 8 buses off t26 behind sw09
    chain(trunk[25], 8, "c", z1, (0.0, 0.0), first_switch=9, load_scale=1.2, qfrac=0.26)
    # outage region H: 5 single-phase buses off t28 behind sw11
    chain(trunk[27], 5, "c", z1, (0.0, 0.0), first_switch=11, load_scale=1.0, qfrac=0.85)
    # branch I (energized): 8 buses off t29 behind sw12
    chain(trunk[28], 8, "a", z1, (0.0, 0.0), first_switch=12, load_scale=0.8, qfrac=0.40)

    # unswitched spur laterals along the trunk until 122 buses / 91 loads
    spur_phase = ["a", "b", "c", "ab", "bc", "abc"]
    si = 0
    while nbus < 122:
        root = trunk[si % 28]
        ph = spur_phase[si % len(spur_phase)]
        n = 2 if nbus < 118 else 1
        n = min(n, 122 - nbus)
        if ph in ("a", "b", "c"):
            chain(root, n, ph, z1, (0.0, 0.0))
        elif len(ph) == 2:
            chain(root, n, ph, z2s, z2m)
        else:
            chain(root, n, ph, zs3b, zm3b)
        si += 3

    # trim or top up loads to exactly 91 by adding trunk loads
    ti = 0
    while nload < 91:
        load(trunk[(ti * 5 + 2) % 30], "abc", 0.6)
        ti += 1

    # loop ties: none bridge a switch, so outage regions stay outages
    if loops >= 1:
        line(trunk[13], trunk[19], "abc", zs3b, zm3b)  # t14 - t20
        line(trunk[5], trunk[8], "a", z1, (0.0, 0.0))  # t06 - t09
        line(branch_d[1], branch_d[3], "a", z1, (0.0, 0.0))
    if loops >= 2:
        line(trunk[14], trunk[24], "abc", zs3b, zm3b)  # t15 - t25
        line(trunk[20], trunk[27], "abc", zs3b, zm3b)  # t21 - t28
        line(trunk[1], trunk[3], "abc", zs3b, zm3b)  # t02 - t04
        line(branch_b[0], branch_b[2], "abc", zs3b, zm3b)

    return f


# ----------------------------------------------------------- 1282-bus analog


def build_1282():
    """1282 buses, 20 switches (8 open in the reference truth vector)."""
    rng = random.Random(1282)
    f = Feeder(kv=13.0, kva=15000.0, source_vpu=1.02)
    zs3, zm3 = (0.028, 0.075), (0.009, 0.024)
    zs3b, zm3b = (0.045, 0.105), (0.014, 0.033)
    z1 = (0.130, 0.155)

    nbus = 0
    nline = 0
    nload = 0

    def bus(phases, kind="junction"):
        nonlocal nbus
        nbus += 1
        return f.add_bus("b%04d" % nbus, phases, kind)

    def line(a, b, phases, zs, zm, sh=0.0, switch=None):
        nonlocal nline
        nline += 1
        f.add_line("l%04d" % nline, a, b, phases, zs, zm, sh=sh, switch=switch)

    def load(busid, phases, scale=1.0, pweights=None, qfrac=0.45):
        nonlocal nload
        nload += 1
        w = pweights or [1.0] * len(phases)
        p = [rng.uniform(5.0, 13.0) * scale * wk for wk in w]
        f.add_load("d%04d" % nload, busid, phases, p, pf_q=qfrac)

    # trunk: 80 three-phase buses
    trunk = []
    prev = "src"
    trunk_switches = {20: 0, 45: 1, 65: 2}  # closed trunk sectionalizers
    for i in range(1, 81):
        b = bus("abc")
        line(prev, b, "abc", zs3, zm3, sh=1e-6, switch=trunk_switches.get(i))
        trunk.append(b)
        prev = b

    def chain(root, n, phases, zs, zm, first_switch=None, mid_switch=None, load_scale=1.0,
              load_every=1, pweights=None, qfrac=0.45):
        out = []
        prev = root
        for k in range(n):
            b = bus(phases, "load")
            sw = first_switch if k == 0 else (mid_switch if k == n // 2 else None)
            line(prev, b, phases, zs, zm, switch=sw)
            out.append(b)
            if k % load_every == 0:
                load(b, phases, load_scale, pweights, qfrac)
            prev = b
        return out

    # 20 switches total: 3 trunk (closed) + 17 branch roots / interiors.
    # Truth: switches 3,5,8,10,12,15,17 open at branch roots, 19 open inside
    # the region behind 17 (inestimable). Others closed. Each switched branch
    # gets a distinctive load magnitude and phase signature so the feeder-head
    # phase flows can tell the regions apart.
    branch_plan = [
        # (trunk pos, size, switch, load_scale, phase weights, Q fraction)
        (8, 24, 4, 1.0, [1.8, 0.6, 0.6], 0.20),    # closed
        (14, 18, 3, 0.8, [0.5, 1.7, 0.8], 0.62),   # OPEN  region R1
        (22, 20, 6, 1.3, [0.7, 0.7, 1.6], 0.35),   # closed
        (28, 16, 5, 1.7, [1.4, 1.1, 0.5], 0.76),   # OPEN  region R2
        (34, 22, 7, 0.7, [0.9, 1.6, 0.5], 0.12),   # closed
        (40, 14, 8, 2.1, [0.6, 0.9, 1.5], 0.50),   # OPEN  region R3
        (48, 20, 9, 1.1, [1.5, 0.4, 1.1], 0.28),   # closed
        (52, 15, 10, 0.6, [0.8, 1.3, 0.9], 0.88),  # OPEN  region R4
        (57, 18, 11, 1.6, [0.4, 1.2, 1.4], 0.42),  # closed
        (60, 14, 12, 1.2, [1.9, 0.8, 0.3], 0.16),  # OPEN  region R5
        (66, 16, 13, 0.9, [1.1, 0.5, 1.4], 0.68),  # closed
        (70, 13, 15, 1.9, [0.7, 1.5, 0.8], 0.33),  # OPEN  region R6
        (74, 16, 14, 1.4, [1.2, 1.0, 0.8], 0.57),  # closed
        (76, 14, 17, 1.0, [0.3, 0.9, 1.8], 0.08),  # OPEN  region R7, sw19 inside
        (78, 16, 16, 0.8, [1.6, 1.2, 0.4], 0.80),  # closed
    ]
    for pos, size, sw, scale, pw, qf in branch_plan:
        mid = 19 if sw == 17 else (18 if sw == 16 else None)
        chain(trunk[pos - 1], size, "abc", zs3b, zm3b, first_switch=sw, mid_switch=mid,
              load_scale=scale, load_every=2, pweights=pw, qfrac=qf)

    # single-phase laterals to reach 1282 buses and ~500 loads
    phases = ["a", "b", "c"]
    si = 0
    while nbus < 1281:
        root = trunk[(si * 7) % 80]
        ph = phases[si % 3]
        n = min(4, 1281 - nbus)
        chain(root, n, ph, z1, (0.0, 0.0), load_every=2)
        si += 1

    while nload < 500:
        load(trunk[(nload * 11) % 80], "abc", 0.5)

    return f


TRUTH_1282 = [1] * 20
for _i in (3, 5, 8, 10, 12, 15, 17, 19):
    TRUTH_1282[_i] = 0


def main():
    os.makedirs(OUT, exist_ok=True)
    make_toy4()
    make_toy6()
    build_123(loops=0).write("ieee123_analog.json")
    build_123(loops=1).write("ieee123_loop1.json")
    build_123(loops=2).write("ieee123_loop2.json")
    build_1282().write("large1282_analog.json")
    print("truth 123:", "".join(str(b) for b in TRUTH_123))
    print("truth 1282:", "".join(str(b) for b in TRUTH_1282))


if __name__ == "__main__":
    main()
