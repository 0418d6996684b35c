#!/usr/bin/env python3
"""Regenerates the City-1 style fixture bundle under fixtures/city1/.

Two model families simulate readings of one eligibility/consent narrative:

* original/  100 models drawn from competing AND/OR readings of both
             decisions (low consistency),
* repaired/  100 models where all but six follow the disambiguated reading
             (very high consistency).

The script also evaluates every model with its own small interpreter and
writes the expected KPI vectors for the first 20 original models on the
20-case population, which the Rust acceptance test compares against.

Usage: python3 fixtures/generate_city1.py  (idempotent, fixed seeds)
"""

import csv
import json
import math
import random
from decimal import Decimal
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

OUT = Path(__file__).resolve().parent / "city1"
D = Decimal

CAPACITY = D(50)
ALPHA = D("0.5")
RATE = D("0.30")
COST = D(1000)

FBG = "Fasting_Blood_Glucose"
A1C = "HbA1c"
RENAL = "Renal_Function_Impaired"
TREAT = "Diabetes_Under_Treatment"
WANTS = "Health_Guidance"
CONSENT = "Consent_Submitted"


def glyc(c):
    return c[FBG] >= 126 or c[A1C] >= D("6.5")


# Each reading: condition text variants (operand orders of one formula) and
# the predicate they denote.
ELIGIBILITY = {
    "E1": (
        [f"({FBG} >= 126 OR {A1C} >= 6.5) AND {RENAL} == 1",
         f"{RENAL} == 1 AND ({A1C} >= 6.5 OR {FBG} >= 126)"],
        lambda c: glyc(c) and c[RENAL] == 1,
    ),
    "E2": (
        [f"{FBG} >= 126 OR {A1C} >= 6.5 OR {RENAL} == 1",
         f"{RENAL} == 1 OR {FBG} >= 126 OR {A1C} >= 6.5"],
        lambda c: glyc(c) or c[RENAL] == 1,
    ),
    "E3": (
        [f"{FBG} >= 126 AND {A1C} >= 6.5 AND {RENAL} == 1"],
        lambda c: c[FBG] >= 126 and c[A1C] >= D("6.5") and c[RENAL] == 1,
    ),
    "E4": (
        [f"{FBG} >= 126 OR ({A1C} >= 6.5 AND {RENAL} == 1)"],
        lambda c: c[FBG] >= 126 or (c[A1C] >= D("6.5") and c[RENAL] == 1),
    ),
    "E5": (
        [f"({TREAT} == 1 OR {FBG} >= 126 OR {A1C} >= 6.5) AND {RENAL} == 1",
         f"{RENAL} == 1 AND ({FBG} >= 126 OR {A1C} >= 6.5 OR {TREAT} == 1)"],
        lambda c: (c[TREAT] == 1 or glyc(c)) and c[RENAL] == 1,
    ),
    "E6": (
        [f"{TREAT} == 1 OR ({FBG} >= 126 OR {A1C} >= 6.5) AND {RENAL} == 1"],
        lambda c: c[TREAT] == 1 or (glyc(c) and c[RENAL] == 1),
    ),
    "E7": (
        [f"{FBG} >= 126 OR {A1C} >= 6.5 OR {TREAT} == 1"],
        lambda c: glyc(c) or c[TREAT] == 1,
    ),
}

ACCEPTANCE = {
    "A1": (
        [f"{WANTS} == 1 AND {CONSENT} == 1", f"{CONSENT} == 1 AND {WANTS} == 1"],
        lambda c: c[WANTS] == 1 and c[CONSENT] == 1,
    ),
    "A2": ([f"{CONSENT} == 1"], lambda c: c[CONSENT] == 1),
    "A3": ([f"{WANTS} == 1"], lambda c: c[WANTS] == 1),
    "A4": ([f"{WANTS} == 1 OR {CONSENT} == 1"], lambda c: c[WANTS] == 1 or c[CONSENT] == 1),
}

ELIG_LABELS = ["Check Clinical Eligibility", "Check Inclusion Eligibility", "Assess Eligibility Criteria"]
ACC_LABELS = ["Check Health Guidance Acceptance", "Confirm Guidance Consent"]


def population(n, seed):
    rng = random.Random(seed)
    rows = []
    for i in range(n):
        rows.append({
            "case_id": f"c{i + 1:03d}",
            "Age": rng.randint(40, 74),
            FBG: rng.randint(95, 170),
            A1C: D(rng.randint(52, 84)) / 10,
            RENAL: int(rng.random() < 0.5),
            TREAT: int(rng.random() < 0.5),
            WANTS: int(rng.random() < 0.6),
            CONSENT: int(rng.random() < 0.6),
        })
    return rows


def write_population(path, rows):
    cols = ["case_id", "Age", FBG, A1C, RENAL, TREAT, WANTS, CONSENT]
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([str(r[c]) for c in cols])


class Model:
    def __init__(self, model_id, family, elig, acc, rng, fixed=None):
        self.model_id = model_id
        self.family = family
        self.elig, self.acc = elig, acc
        fixed = fixed or {}
        self.elig_label = fixed.get("elig_label") or rng.choice(ELIG_LABELS)
        self.acc_label = fixed.get("acc_label") or rng.choice(ACC_LABELS)
        self.elig_text = fixed.get("elig_text") or rng.choice(ELIGIBILITY[elig][0])
        self.acc_text = fixed.get("acc_text") or rng.choice(ACCEPTANCE[acc][0])
        self.record_task = fixed.get("record_task", rng.random() < 0.5)

    def nodes_and_flows(self):
        nodes = [("startEvent", "start", "Referral Received", "")]
        flows = []
        first = "g_elig"
        if self.record_task:
            nodes.append(("task", "record", "Record Checkup Results", ""))
            flows.append(("f_start", "start", "record", None))
            flows.append(("f_record", "record", "g_elig", None))
        else:
            flows.append(("f_start", "start", first, None))
        nodes += [
            ("exclusiveGateway", "g_elig", self.elig_label, ""),
            ("task", "notify", "Send Recommendation Notification", "NC"),
            ("exclusiveGateway", "g_acc", self.acc_label, ""),
            ("task", "guide", "Provide Health Guidance", "HC"),
            ("endEvent", "end", "Done", ""),
        ]
        flows += [
            ("f_elig_yes", "g_elig", "notify", self.elig_text),
            ("f_elig_no", "g_elig", "end", "default"),
            ("f_notify", "notify", "g_acc", None),
            ("f_acc_yes", "g_acc", "guide", self.acc_text),
            ("f_acc_no", "g_acc", "end", "default"),
            ("f_guide", "guide", "end", None),
        ]
        return nodes, flows

    def xml(self):
        nodes, flows = self.nodes_and_flows()
        defaults = {src: fid for fid, src, _, c in flows if c == "default"}
        out = ['<?xml version="1.0" encoding="UTF-8"?>',
               '<bpmn:definitions xmlns:bpmn="http://www.omg.org/spec/BPMN/20100524/MODEL"'
               ' xmlns:kpi="urn:ambiguity:kpi:1.0" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"'
               f' id="Definitions_{self.model_id}" targetNamespace="urn:ambiguity:models">',
               f'  <bpmn:process id="{self.model_id}" isExecutable="true">',
               '    <bpmn:extensionElements>',
               f'      <kpi:meta name="family" value="{self.family}"/>',
               '    </bpmn:extensionElements>']
        for kind, nid, label, kpis in nodes:
            attrs = f'id="{nid}" name={quoteattr(label)}'
            if kpis:
                attrs += f' kpi:outputs="{kpis}"'
            if nid in defaults:
                attrs += f' default="{defaults[nid]}"'
            out.append(f"    <bpmn:{kind} {attrs}/>")
        for fid, src, tgt, cond in flows:
            head = f'    <bpmn:sequenceFlow id="{fid}" sourceRef="{src}" targetRef="{tgt}"'
            if cond is None or cond == "default":
                out.append(head + "/>")
            else:
                out.append(head + ">")
                out.append('      <bpmn:conditionExpression xsi:type="bpmn:tFormalExpression">'
                           f"{escape(cond)}</bpmn:conditionExpression>")
                out.append("    </bpmn:sequenceFlow>")
        out += ["  </bpmn:process>", "</bpmn:definitions>", ""]
        return "\n".join(out)

    def emissions(self, case):
        """(task, kpi) pairs of one case, by walking the process."""
        out = []
        if ELIGIBILITY[self.elig][1](case):
            out.append(("notify", "NC"))
            if ACCEPTANCE[self.acc][1](case):
                out.append(("guide", "HC"))
        return out


def kpis(model, cases):
    nc = 0
    hc_cases = set()
    for c in cases:
        for task, kpi in model.emissions(c):
            if kpi == "NC":
                nc += 1
            elif kpi == "HC":
                hc_cases.add(c["case_id"])
    hc = D(len(hc_cases))
    load = hc / CAPACITY
    ru = load if load <= 1 else max(D(0), 1 - ALPHA * (load - 1))
    hi = hc * RATE / D(len(cases))
    cs = hc * RATE * COST
    return {k: str(v.normalize()) if v != 0 else "0"
            for k, v in [("NC", D(nc)), ("HC", hc), ("RU", ru), ("HI", hi), ("CS", cs)]}


def h_norm(vectors):
    counts = {}
    for v in vectors:
        key = json.dumps(v, sort_keys=True)
        counts[key] = counts.get(key, 0) + 1
    k = len(counts)
    if k <= 1:
        return 0.0
    n = len(vectors)
    h = -sum(c / n * math.log2(c / n) for c in counts.values())
    return h / math.log2(k)


def write_family(name, models):
    d = OUT / name
    d.mkdir(parents=True, exist_ok=True)
    for old in d.glob("*.bpmn"):
        old.unlink()
    for m in models:
        (d / f"{m.model_id}.bpmn").write_text(m.xml())


def original_family(rng):
    elig_w = {"E1": 3, "E2": 2, "E3": 2, "E4": 2, "E5": 2, "E6": 2, "E7": 2}
    acc_w = {"A1": 3, "A2": 2, "A3": 2, "A4": 2}
    models = []
    for i in range(100):
        e = rng.choices(list(elig_w), weights=list(elig_w.values()))[0]
        a = rng.choices(list(acc_w), weights=list(acc_w.values()))[0]
        models.append(Model(f"orig_{i + 1:03d}", "original", e, a, rng))
    return models


def repaired_family(rng):
    deviants = [("E1", "A2"), ("E5", "A1"), ("E1", "A3"), ("E3", "A1"), ("E2", "A1"), ("E4", "A1")]
    slots = rng.sample(range(100), len(deviants))
    models = []
    for i in range(100):
        e, a = deviants[slots.index(i)] if i in slots else ("E1", "A1")
        models.append(Model(f"rep_{i + 1:03d}", "repaired", e, a, rng))
    return models


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    pop100 = population(100, 2024)
    pop20 = population(20, 7)
    write_population(OUT / "population_100.csv", pop100)
    write_population(OUT / "population_20.csv", pop20)

    rng = random.Random(11)
    original = original_family(rng)
    repaired = repaired_family(rng)
    write_family("original", original)
    write_family("repaired", repaired)

    pair = [
        Model("city1_reference", "pair", "E1", "A1", rng, {
            "elig_label": "Check Clinical Eligibility", "acc_label": "Check Health Guidance Acceptance",
            "elig_text": ELIGIBILITY["E1"][0][0], "acc_text": ACCEPTANCE["A1"][0][0], "record_task": False}),
        Model("city1_target", "pair", "E7", "A2", rng, {
            "elig_label": "Check Inclusion Eligibility", "acc_label": "Check Health Guidance Acceptance",
            "elig_text": ELIGIBILITY["E7"][0][0], "acc_text": ACCEPTANCE["A2"][0][0], "record_task": True}),
    ]
    write_family("pair", pair)

    h_orig = h_norm([kpis(m, pop100) for m in original])
    h_rep = h_norm([kpis(m, pop100) for m in repaired])
    assert h_orig > 0.70, h_orig
    assert h_rep <= 0.30, h_rep

    expected = {m.model_id: kpis(m, pop20) for m in original[:20]}
    (OUT / "expected_kpis_20.json").write_text(json.dumps(expected, indent=2, sort_keys=True) + "\n")
    readings = {m.model_id: f"{m.elig}/{m.acc}" for m in original + repaired + pair}
    (OUT / "readings.json").write_text(json.dumps(readings, indent=2, sort_keys=True) + "\n")
    print(f"original H_norm={h_orig:.4f}  repaired H_norm={h_rep:.4f}")


if __name__ == "__main__":
    main()
