"""Instance files, matching literals and report serialization.

The instance format is line oriented; `#` starts a comment and blank lines
are ignored.  Sections come in a fixed order:

    students: i1 i2 i3 i4
    schools: s1 s2 s3
    quota s1 = 2
    quota s2 = 1
    quota s3 = 1
    pref i1: s1 s2 s3
    pref i4: s1 s3 s2
    priority s1: i1 i3 i4 i2
    priority s3: i2 i3 i4 i1

A preference line lists acceptable schools, most preferred first; omitted
schools are unacceptable.  A priority line must list every student, highest
priority first.  Matchings are written as comma-separated `student->school`
terms with `self` for staying unmatched, e.g.

    i1->s1, i2->s1, i3->s2, i4->self
"""
from __future__ import annotations

import json
import re

from .model import SELF, Matching, Problem, SchoolChoiceError, validate_problem
from .farsight import (
    FARSIGHTED,
    Coalition,
    MoveStep,
    PathCertificate,
    StableSetReport,
)
from .mechanisms import MechanismTrace


class InstanceParseError(SchoolChoiceError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


_SECTIONS = ("students", "schools", "quota", "pref", "priority")


def parse_instance(text: str) -> Problem:
    """Parse an instance document; raises InstanceParseError on any defect."""
    diags: list[str] = []
    students: list[str] = []
    schools: list[str] = []
    quotas: dict = {}
    prefs: dict = {}
    prios: dict = {}
    stage = -1  # index into _SECTIONS of the last section seen

    def advance(kind: str, lineno: int) -> None:
        nonlocal stage
        want = _SECTIONS.index(kind)
        if want < stage:
            diags.append(
                f"line {lineno}: {kind} section out of order "
                f"(expected {_SECTIONS[stage]} lines or later sections)"
            )
        stage = max(stage, want)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("students:"):
            advance("students", lineno)
            if students:
                diags.append(f"line {lineno}: duplicate students section")
            students = line[len("students:"):].split()
            if not students:
                diags.append(f"line {lineno}: students section is empty")
        elif line.startswith("schools:"):
            advance("schools", lineno)
            if schools:
                diags.append(f"line {lineno}: duplicate schools section")
            schools = line[len("schools:"):].split()
            if not schools:
                diags.append(f"line {lineno}: schools section is empty")
        elif line.startswith("quota"):
            advance("quota", lineno)
            m = re.fullmatch(r"quota\s+(\S+)\s*=\s*(-?\d+)", line)
            if not m:
                diags.append(f"line {lineno}: malformed quota line {line!r}")
                continue
            s, q = m.group(1), int(m.group(2))
            if s in quotas:
                diags.append(f"line {lineno}: duplicate quota for {s!r}")
            quotas[s] = q
        elif line.startswith("pref"):
            advance("pref", lineno)
            m = re.fullmatch(r"pref\s+(\S+)\s*:(.*)", line)
            if not m:
                diags.append(f"line {lineno}: malformed pref line {line!r}")
                continue
            i = m.group(1)
            if i in prefs:
                diags.append(f"line {lineno}: duplicate pref line for {i!r}")
            prefs[i] = tuple(m.group(2).split())
        elif line.startswith("priority"):
            advance("priority", lineno)
            m = re.fullmatch(r"priority\s+(\S+)\s*:(.*)", line)
            if not m:
                diags.append(f"line {lineno}: malformed priority line {line!r}")
                continue
            s = m.group(1)
            if s in prios:
                diags.append(f"line {lineno}: duplicate priority line for {s!r}")
            prios[s] = tuple(m.group(2).split())
        else:
            diags.append(f"line {lineno}: unrecognised line {line!r}")
    if not students:
        diags.append("missing students section")
    if not schools:
        diags.append("missing schools section")
    if diags:
        raise InstanceParseError(diags)
    for i in students:
        prefs.setdefault(i, ())
    problem = Problem(tuple(students), tuple(schools), quotas, prefs, prios)
    semantic = validate_problem(problem)
    if semantic:
        raise InstanceParseError(semantic)
    return problem


def serialize_instance(problem: Problem) -> str:
    """Canonical instance document; parse(serialize(p)) reproduces p."""
    lines = [
        "students: " + " ".join(problem.students),
        "schools: " + " ".join(problem.schools),
    ]
    for s in problem.schools:
        lines.append(f"quota {s} = {problem.quota(s)}")
    for i in problem.students:
        lines.append(f"pref {i}: " + " ".join(problem.preferences[i]))
    for s in problem.schools:
        lines.append(f"priority {s}: " + " ".join(problem.priorities[s]))
    return "\n".join(lines) + "\n"


def parse_matching(problem: Problem, literal: str) -> Matching:
    """Parse a `student->school` matching literal against a problem."""
    diags = []
    assignment: dict = {}
    for term in literal.split(","):
        term = term.strip()
        if not term:
            continue
        m = re.fullmatch(r"(\S+)\s*->\s*(\S+)", term)
        if not m:
            diags.append(f"malformed term {term!r}")
            continue
        i, target = m.group(1), m.group(2)
        if i not in problem._sidx:
            diags.append(f"unknown student {i!r}")
            continue
        if i in assignment:
            diags.append(f"student {i!r} assigned twice")
            continue
        if target.lower() == "self":
            assignment[i] = SELF
        elif target in problem._cidx:
            assignment[i] = target
        else:
            diags.append(f"unknown school {target!r}")
    missing = [i for i in problem.students if i not in assignment]
    if missing:
        diags.append(f"students missing from literal: {', '.join(missing)}")
    if diags:
        raise InstanceParseError(diags)
    return problem.matching(assignment)


# --------------------------------------------------------------------------
# Certificates
# --------------------------------------------------------------------------

def certificate_to_dict(cert: PathCertificate) -> dict:
    return {
        "horizon": cert.horizon,
        "matchings": [mu.literal() for mu in cert.matchings],
        "steps": [
            {
                "coalition": {
                    "students": sorted(st.coalition.students),
                    "schools": sorted(st.coalition.schools),
                }
            }
            for st in cert.steps
        ],
    }


def certificate_from_dict(problem: Problem, data: dict) -> PathCertificate:
    horizon = data.get("horizon", FARSIGHTED)
    if horizon != FARSIGHTED:
        horizon = int(horizon)
    matchings = [parse_matching(problem, lit) for lit in data["matchings"]]
    raw_steps = data.get("steps", [])
    if len(raw_steps) != max(len(matchings) - 1, 0):
        raise InstanceParseError(
            [f"{len(raw_steps)} steps for {len(matchings)} matchings"]
        )
    steps = []
    for k, st in enumerate(raw_steps):
        co = st["coalition"]
        steps.append(
            MoveStep(
                matchings[k],
                matchings[k + 1],
                Coalition(frozenset(co.get("students", ())), frozenset(co.get("schools", ()))),
            )
        )
    return PathCertificate(tuple(matchings), tuple(steps), horizon)


def load_certificate(problem: Problem, text: str) -> PathCertificate:
    return certificate_from_dict(problem, json.loads(text))


def dump_certificate(cert: PathCertificate) -> str:
    return json.dumps(certificate_to_dict(cert), indent=2) + "\n"


# --------------------------------------------------------------------------
# Report rendering
# --------------------------------------------------------------------------

def trace_to_dict(trace: MechanismTrace) -> dict:
    out = {"mechanism": trace.mechanism, "steps": []}
    if trace.guarantees_initial:
        out["guarantees"] = {s: list(g) for s, g in trace.guarantees_initial.items()}
    for st in trace.steps:
        entry = {
            "step": st.step,
            "capacities": dict(st.capacities),
            "cycles": [str(c) for c in st.cycles],
            "matches": {
                i: ("self" if a is SELF else a) for i, a in sorted(st.matches.items())
            },
        }
        if st.clinch_rounds:
            entry["clinch_rounds"] = [
                {"round": r.round, "clinches": [list(c) for c in r.clinches]}
                for r in st.clinch_rounds
            ]
        if st.excluded:
            entry["held_back"] = list(st.excluded)
        if st.pairs:
            entry["seat_endowments"] = [list(p) for p in st.pairs]
            entry["seat_cycles"] = [
                ["(%s,%s)" % p for p in cyc] for cyc in st.pair_cycles
            ]
        out["steps"].append(entry)
    return out


def trace_to_text(trace: MechanismTrace) -> str:
    lines = []
    for st in trace.steps:
        caps = " ".join(f"{s}={q}" for s, q in sorted(st.capacities.items()))
        lines.append(f"step {st.step} (capacity {caps})")
        for r in st.clinch_rounds:
            if r.clinches:
                terms = ", ".join(f"{i}->{s}" for i, s in r.clinches)
                lines.append(f"  clinch round {r.round}: {terms}")
        if st.excluded:
            lines.append("  held back from clinching: " + " ".join(st.excluded))
        if st.pairs:
            lines.append(
                "  seat endowments: " + " ".join("(%s,%s)" % p for p in st.pairs)
            )
            for cyc in st.pair_cycles:
                lines.append(
                    "  seat cycle: " + " -> ".join("(%s,%s)" % p for p in cyc)
                )
        for c in st.cycles:
            lines.append(f"  cycle {c}")
        if st.matches:
            terms = ", ".join(
                f"{i}->{'self' if a is SELF else a}" for i, a in sorted(st.matches.items())
            )
            lines.append(f"  matched: {terms}")
    return "\n".join(lines)


def stable_set_report_to_dict(report: StableSetReport) -> dict:
    return {
        "candidate": [mu.literal() for mu in report.candidate],
        "verdict": report.verdict,
        "partial": report.partial,
        "internal_violations": [
            {"from": a.literal(), "to": b.literal()}
            for a, b in report.internal_violations
        ],
        "external_violations": [mu.literal() for mu in report.external_violations],
    }
