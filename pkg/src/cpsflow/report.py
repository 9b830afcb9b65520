"""Per-attacker analysis reports and their table / CSV / JSON-lines renderings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional, Sequence

from .attacker import AttackerSpec, assignment_repr
from .errors import BudgetExceeded
from .fixtures import Scenario
from .model import CpsModel, CpsState, Kind, Trace
from .reach import (Budget, IntegrityVerdict, Projection, ReachResult, Vulnerability,
                    integrity_verdict, project_all, reach, vulnerability_report)

EXIT_OK = 0
EXIT_VIOLATED = 2
EXIT_BUDGET = 3

MARK = {True: "✓", False: "✗"}
WORD = {True: "yes", False: "no"}


@dataclass(frozen=True)
class VariableReport:
    name: str
    projection: Projection

    @property
    def values(self) -> list:
        return sorted(v[0] for v in self.projection.values)

    @property
    def hull(self) -> tuple:
        return self.projection.hull[0]


@dataclass(frozen=True, eq=False)
class AttackerReport:
    attacker: AttackerSpec
    result: ReachResult
    variables: tuple
    verdict: IntegrityVerdict
    vulnerabilities: dict
    budget_exhausted: bool = False

    @property
    def name(self) -> str:
        return self.attacker.name

    def row(self) -> dict:
        return {name: vul.reachable for name, vul in self.vulnerabilities.items()}


@dataclass(frozen=True, eq=False)
class AnalysisReport:
    scenario: Scenario
    k: object
    attackers: tuple
    predicates: tuple

    @property
    def model(self) -> CpsModel:
        return self.scenario.model

    @property
    def exit_code(self) -> int:
        if any(r.verdict.status == "violated" for r in self.attackers):
            return EXIT_VIOLATED
        if any(r.budget_exhausted for r in self.attackers):
            return EXIT_BUDGET
        return EXIT_OK


def analyze_attacker(scenario: Scenario, attacker: AttackerSpec, k="auto",
                     budget: Optional[Budget] = None, k_max: int = 1000,
                     predicates: Optional[Sequence] = None) -> AttackerReport:
    """Explore, then quantify every observed variable over all layers."""
    model = scenario.model
    predicates = scenario.predicates if predicates is None else predicates
    exhausted = False
    try:
        result = reach(model, attacker, scenario.sigma0, k, budget, k_max)
    except BudgetExceeded as exc:
        result, exhausted = exc.partial, True
    variables = tuple(VariableReport(model.name_of(cid), project_all(result, [cid]))
                      for cid in model.components([Kind.OBSERVATION]))
    verdict = integrity_verdict(result)
    if exhausted and verdict.status != "violated":
        target = k_max if k == "auto" else int(k)
        verdict = IntegrityVerdict("unknown", target, layer_reached=result.k)
    return AttackerReport(attacker, result, variables, verdict,
                          vulnerability_report(result, predicates), exhausted)


def analyze(scenario: Scenario, attackers: Sequence[AttackerSpec], k="auto",
            budget: Optional[Budget] = None, k_max: int = 1000,
            predicates: Optional[Sequence] = None) -> AnalysisReport:
    predicates = tuple(scenario.predicates if predicates is None else predicates)
    rows = tuple(analyze_attacker(scenario, a, k, budget, k_max, predicates) for a in attackers)
    return AnalysisReport(scenario, k, rows, predicates)


# -- serialisation helpers ---------------------------------------------------------

def state_json(model: CpsModel, state: CpsState) -> dict:
    out = {}
    for cid in model.components():
        out[model.name_of(cid)] = state.get(cid)
    return out


def trace_json(model: CpsModel, trace: Trace) -> dict:
    return {
        "states": [state_json(model, s) for s in trace.states],
        "attacks": [assignment_repr(model, a) if a else {} for a in trace.attacks],
    }


def verdict_json(model: CpsModel, verdict: IntegrityVerdict) -> dict:
    out = {"status": verdict.status, "k": verdict.k, "layer": verdict.layer_reached}
    if verdict.witness is not None:
        w = verdict.witness
        out["witness"] = {"cycle": w.cycle, "first": trace_json(model, w.first),
                          "second": trace_json(model, w.second)}
    return out


def vulnerability_json(model: CpsModel, vul: Vulnerability) -> dict:
    out = {"reachable": WORD[vul.reachable]}
    if vul.reachable:
        out["layer"] = vul.layer
        out["state"] = state_json(model, vul.state)
        out["trace"] = trace_json(model, vul.trace)
    return out


def _hull_text(hull) -> str:
    return f"[{hull[0]}, {hull[1]}]"


def _verdict_text(verdict: IntegrityVerdict) -> str:
    if verdict.status == "violated":
        return f"violated@{verdict.witness.cycle}" if verdict.witness else "violated"
    return verdict.status


def _loop_text(result: ReachResult) -> str:
    return f"{result.loop[0]}->{result.loop[1]}" if result.loop else "-"


def _predicate_names(report: AnalysisReport) -> list:
    return [p.name for p in report.predicates]


def _variable_names(report: AnalysisReport) -> list:
    return [report.model.name_of(c) for c in report.model.components([Kind.OBSERVATION])]


# -- renderers -------------------------------------------------------------------

def _align(rows: list) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def render_table(report: AnalysisReport) -> str:
    preds = _predicate_names(report)
    header = ["attacker", "k", "loop"] + _variable_names(report) + preds + ["integrity"]
    rows = [header]
    for r in report.attackers:
        row = [r.name, str(r.result.k) + ("+" if r.budget_exhausted else ""), _loop_text(r.result)]
        row += [_hull_text(v.hull) for v in r.variables]
        row += [MARK[r.vulnerabilities[p].reachable] for p in preds]
        row.append(_verdict_text(r.verdict))
        rows.append(row)
    head = f"model {report.model.name}  k={report.k}  sigma0: {report.scenario.sigma0.describe()}\n"
    return head + _align(rows)


def render_csv(report: AnalysisReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    preds = _predicate_names(report)
    header = ["attacker", "k", "complete", "loop_start", "loop_end"]
    for v in _variable_names(report):
        header += [f"{v}_lo", f"{v}_hi", f"{v}_count"]
    header += preds + ["integrity", "violation_cycle"]
    w.writerow(header)
    for r in report.attackers:
        loop = r.result.loop or ("", "")
        row = [r.name, r.result.k, WORD[not r.budget_exhausted], loop[0], loop[1]]
        for v in r.variables:
            row += [v.hull[0], v.hull[1], len(v.values)]
        row += [WORD[r.vulnerabilities[p].reachable] for p in preds]
        cycle = r.verdict.witness.cycle if r.verdict.witness else ""
        row += [r.verdict.status, cycle]
        w.writerow(row)
    return buf.getvalue()


def report_records(report: AnalysisReport) -> list:
    """One record per (attacker, observed variable).

    Predicates that look at a single variable are attached to its record;
    any other predicate is reported under the pseudo-variable ``"y"``.
    """
    model = report.model
    names = _variable_names(report)
    records = []
    for r in report.attackers:
        verdict = verdict_json(model, r.verdict)
        buckets = {v: [] for v in names}
        extra = []
        for p in report.predicates:
            (buckets[p.variable] if p.variable in buckets else extra).append(p.name)
        entries = [(v, buckets[v]) for v in names]
        if extra:
            entries.append(("y", extra))
        by_name = {v.name: v for v in r.variables}
        for var, preds in entries:
            rec = {"attacker": r.name, "model": model.name, "variable": var,
                   "k": r.result.k, "complete": WORD[not r.budget_exhausted],
                   "loop": list(r.result.loop) if r.result.loop else None}
            if var in by_name:
                rec["values"] = by_name[var].values
                rec["hull"] = list(by_name[var].hull)
            rec["integrity"] = verdict
            rec["vulnerabilities"] = {p: vulnerability_json(model, r.vulnerabilities[p]) for p in preds}
            records.append(rec)
    return records


def render_json_lines(report: AnalysisReport) -> str:
    return "".join(json.dumps(rec, separators=(",", ":")) + "\n" for rec in report_records(report))


RENDERERS = {"table": render_table, "csv": render_csv, "json-lines": render_json_lines}


def render(report: AnalysisReport, fmt: str = "table") -> str:
    return RENDERERS[fmt](report)


# -- comparison --------------------------------------------------------------------

@dataclass(frozen=True)
class CellDiff:
    attacker: str
    item: str
    before: object
    after: object
    reduced: bool  # strictly less attacker power after the change


def _strictly_inside(inner: tuple, outer: tuple) -> bool:
    return outer[0] <= inner[0] and inner[1] <= outer[1] and inner != outer


def compare_reports(before: AnalysisReport, after: AnalysisReport) -> list:
    """Differences in hulls and vulnerability cells, attacker by attacker."""
    diffs = []
    after_rows = {r.name: r for r in after.attackers}
    for a in before.attackers:
        b = after_rows.get(a.name)
        if b is None:
            continue
        for va, vb in zip(a.variables, b.variables):
            if va.hull != vb.hull:
                diffs.append(CellDiff(a.name, va.name, va.hull, vb.hull, _strictly_inside(vb.hull, va.hull)))
        for p, vul in a.vulnerabilities.items():
            if p in b.vulnerabilities and vul.reachable != b.vulnerabilities[p].reachable:
                diffs.append(CellDiff(a.name, p, vul.reachable, b.vulnerabilities[p].reachable,
                                      vul.reachable and not b.vulnerabilities[p].reachable))
    return diffs


def _cell_text(value) -> str:
    return _hull_text(value) if isinstance(value, tuple) else MARK[bool(value)]


def _cell_word(value) -> str:
    return _hull_text(value) if isinstance(value, tuple) else WORD[bool(value)]


def render_compare(before: AnalysisReport, after: AnalysisReport, fmt: str = "table") -> str:
    diffs = compare_reports(before, after)
    if fmt == "json-lines":
        return "".join(json.dumps({
            "attacker": d.attacker, "item": d.item,
            "before": list(d.before) if isinstance(d.before, tuple) else WORD[d.before],
            "after": list(d.after) if isinstance(d.after, tuple) else WORD[d.after],
            "reduced": WORD[d.reduced]}, separators=(",", ":")) + "\n" for d in diffs)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["attacker", "item", before.model.name, after.model.name, "reduced"])
        for d in diffs:
            w.writerow([d.attacker, d.item, _cell_word(d.before), _cell_word(d.after), WORD[d.reduced]])
        return buf.getvalue()
    out = render_table(before) + "\n" + render_table(after) + "\n"
    if not diffs:
        return out + "no differences\n"
    rows = [["attacker", "item", before.model.name, after.model.name, ""]]
    for d in diffs:
        rows.append([d.attacker, d.item, _cell_text(d.before), _cell_text(d.after),
                     "strict reduction" if d.reduced else ""])
    return out + _align(rows)
