__author__ = "Thorin Schiffer"

import json
from dataclasses import asdict, dataclass, field
from itertools import islice
from typing import Dict, List, Optional

from django_reach import settings


@dataclass
class Finding:
    count: int
    witnesses: List[str]


@dataclass
class Summary:
    """
    Everything a run reports, independent of the strategy that produced it
    """

    model: str
    strategy: str
    order: List[str]
    states: int
    calls: Dict[str, int]
    iterations: int
    levels: List[int]
    wall_ms: int
    deadlocks: Optional[Finding] = None
    invariant: Optional[Finding] = None
    metrics: Dict[str, Dict[str, int]] = field(default_factory=dict)

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())

    @property
    def violated(self) -> bool:
        return any(f is not None and f.count for f in (self.deadlocks, self.invariant))


def _finding(states, count: int, render, limit: int) -> Finding:
    return Finding(count=count, witnesses=[render(s) for s in islice(states, limit)])


def summarize_symbolic(report, name: str, violations=None, witness_limit: Optional[int] = None) -> Summary:
    """
    Builds the summary of a symbolic run
    @param report: ReachReport, deadlocks and violations filled in when they were checked
    @param name: machine name
    @param violations: invariant violating states, None when not checked
    @param witness_limit: witnesses listed per finding, defaults to REACH_WITNESS_LIMIT
    """
    limit = witness_limit or settings.WITNESS_LIMIT
    info, store = report.info, report.store
    summary = Summary(
        model=name,
        strategy=report.strategy,
        order=list(info.variables),
        states=report.state_count,
        calls=dict(zip(info.groups, report.calls)),
        iterations=report.iterations,
        levels=list(report.levels),
        wall_ms=int(report.wall_time * 1000),
    )
    if report.deadlocks is not None:
        summary.deadlocks = _finding(store.enumerate(report.deadlocks), report.deadlock_count, info.render, limit)
    if violations is not None:
        summary.invariant = _finding(violations, len(violations), info.render, limit)
    return summary


def summarize_explicit(result, em, check_deadlocks=True, violations=None, witness_limit=None) -> Summary:
    limit = witness_limit or settings.WITNESS_LIMIT
    per_group = len(result.states) if em.M else 0
    summary = Summary(
        model=em.name,
        strategy="explicit",
        order=list(em.variables),
        states=len(result.states),
        calls={name: per_group for name in em.group_names},
        iterations=result.levels,
        levels=[],
        wall_ms=int(result.wall_time * 1000),
    )
    if check_deadlocks:
        summary.deadlocks = _finding(sorted(result.deadlocks), len(result.deadlocks), em.render, limit)
    if violations is not None:
        summary.invariant = _finding(violations, len(violations), em.render, limit)
    return summary


def _finding_lines(label: str, finding: Finding) -> List[str]:
    lines = [f"{label}: {finding.count}"]
    lines.extend(f"  {w}" for w in finding.witnesses)
    if finding.count > len(finding.witnesses):
        lines.append(f"  ... {finding.count - len(finding.witnesses)} more")
    return lines


def format_text(summary: Summary) -> str:
    lines = [
        f"model: {summary.model}",
        f"strategy: {summary.strategy}",
        f"order: {' '.join(summary.order)}",
        f"states: {summary.states}",
        f"iterations: {summary.iterations}",
        f"calls: {summary.total_calls}",
    ]
    width = max((len(g) for g in summary.calls), default=0)
    lines.extend(f"  {g}:{' ' * (width - len(g))} {n}" for g, n in summary.calls.items())
    for label, m in summary.metrics.items():
        lines.append(f"{label}: bandwidth={m['bandwidth']} event_span={m['total_event_span']}")
    if summary.deadlocks is not None:
        lines.extend(_finding_lines("deadlocks", summary.deadlocks))
    if summary.invariant is not None:
        lines.extend(_finding_lines("invariant violations", summary.invariant))
    lines.append(f"wall: {summary.wall_ms} ms")
    return "\n".join(lines) + "\n"


def format_stats(summary: Summary) -> str:
    parts = [f"states={summary.states}", f"calls={summary.total_calls}"]
    if summary.deadlocks is not None:
        parts.append(f"deadlocks={summary.deadlocks.count}")
    if summary.invariant is not None:
        parts.append(f"violations={summary.invariant.count}")
    return " ".join(parts) + "\n"


def format_machine(summary: Summary) -> str:
    """
    Single JSON object with sorted keys; only wall_ms depends on timing
    """
    data = asdict(summary)
    data["total_calls"] = summary.total_calls
    return json.dumps(data, sort_keys=True) + "\n"
