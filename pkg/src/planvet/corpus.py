"""Canonical incident packages: the public, auditable evidence surface.

One JSON file per incident, filename ``<incident_id>.json``. Packages are
immutable after load; loading is order-deterministic (lexicographic
incident id) and records per-file SHA-256 digests for manifests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

from .catalog import ActionCatalog
from .errors import DuplicateIncidentId, ParseError, SchemaError
from .plans import ARM_NONE, SOURCE_BASELINE, ProposedPlan
from .util import sha256_file

# Approval evidence derived from the task-to-action contract rather than
# from recorded approval logs. The verifier accepts it; the release gate
# treats it as historical absence when suggesting candidate rules.
PROXY_APPROVAL_SOURCE = "mapping_contract_proxy"

COMPLETE_PHASE = "Complete"


@dataclass(frozen=True)
class TelemetryEvent:
    event_type: str
    command: str = ""
    indicators: tuple[str, ...] = ()
    labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class ApprovalEvidence:
    action_id: str
    source: str
    note: str = ""


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    text: str
    order_index: int


@dataclass(frozen=True)
class IncidentPackage:
    incident_id: str
    category: str
    severity: str
    asset_criticality: str  # proxy field, reporting context only
    phase_id: str
    telemetry: tuple[TelemetryEvent, ...]
    case_metadata: Mapping[str, str]
    mapped_human_actions: tuple[str, ...]
    approvals: tuple[ApprovalEvidence, ...]
    extracted_tasks: tuple[TaskRecord, ...] = ()
    quality_trace: Mapping | None = None

    def approved_actions(self) -> frozenset[str]:
        return frozenset(ev.action_id for ev in self.approvals)


@dataclass(frozen=True)
class Corpus:
    """Loaded corpus: packages in incident-id order plus per-file digests."""

    packages: tuple[IncidentPackage, ...]
    digests: Mapping[str, str] = field(default_factory=dict)  # filename -> sha256

    def __iter__(self) -> Iterator[IncidentPackage]:
        return iter(self.packages)

    def __len__(self) -> int:
        return len(self.packages)

    def get(self, incident_id: str) -> IncidentPackage:
        for pkg in self.packages:
            if pkg.incident_id == incident_id:
                return pkg
        raise KeyError(incident_id)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def load_corpus(directory: Path | str, catalog: ActionCatalog) -> Corpus:
    """Load every package in lexicographic incident-id order.

    All invariants are checked here so downstream code never revalidates:
    phase gate, catalog resolution of baseline actions and approvals,
    approval-gate consistency, task ordering. Raises ``ParseError``,
    ``SchemaError`` or ``DuplicateIncidentId``.
    """
    directory = Path(directory)
    packages: list[IncidentPackage] = []
    digests: dict[str, str] = {}
    seen_ids: set[str] = set()
    for path in sorted(directory.glob("*.json")):
        digests[path.name] = sha256_file(path)
        pkg = _parse_package(path, catalog)
        if pkg.incident_id in seen_ids:
            raise DuplicateIncidentId(f"{path.name}: incident id {pkg.incident_id!r} repeats")
        seen_ids.add(pkg.incident_id)
        packages.append(pkg)
    packages.sort(key=lambda p: p.incident_id)
    return Corpus(packages=tuple(packages), digests=digests)


def _parse_package(path: Path, catalog: ActionCatalog) -> IncidentPackage:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"{path.name}: package must be a JSON object")

    def need(key: str, kind: type) -> object:
        if key not in obj:
            raise ParseError(f"{path.name}: missing field {key!r}")
        value = obj[key]
        if not isinstance(value, kind):
            raise ParseError(f"{path.name}: field {key!r} has wrong type")
        return value

    incident_id = need("incident_id", str)
    if path.stem != incident_id:
        raise SchemaError(
            f"{path.name}: filename must be <incident_id>.json (id is {incident_id!r})"
        )

    phase_id = need("phase_id", str)
    if phase_id != COMPLETE_PHASE:
        raise SchemaError(
            f"{incident_id}: phase gate requires phase_id {COMPLETE_PHASE!r}, got {phase_id!r}"
        )

    telemetry = []
    for idx, ev in enumerate(need("telemetry", list)):
        event_type = ev.get("event_type", "")
        if not event_type:
            raise SchemaError(f"{incident_id}: telemetry[{idx}] has empty event_type")
        telemetry.append(
            TelemetryEvent(
                event_type=event_type,
                command=ev.get("command", "") or "",
                indicators=tuple(ev.get("indicators", ())),
                labels=tuple(ev.get("labels", ())),
            )
        )

    mapped = tuple(need("mapped_human_actions", list))
    for action in mapped:
        if action not in catalog:
            raise SchemaError(
                f"{incident_id}: mapped action {action!r} does not resolve to the catalog"
            )

    approvals = []
    for ev in need("approvals", list):
        action = ev.get("action_id", "")
        if action not in catalog:
            raise SchemaError(
                f"{incident_id}: approval evidence names unknown action {action!r}"
            )
        if not catalog.get(action).approval_gate:
            raise SchemaError(
                f"{incident_id}: approval evidence for {action!r} but the action "
                "is not approval-gated"
            )
        approvals.append(
            ApprovalEvidence(
                action_id=action,
                source=ev.get("source", ""),
                note=ev.get("note", ""),
            )
        )

    tasks = []
    last_order = -1
    for task in obj.get("extracted_tasks", ()):
        order_index = task.get("order_index", 0)
        if order_index <= last_order:
            raise SchemaError(
                f"{incident_id}: extracted task order_index must be strictly increasing"
            )
        last_order = order_index
        tasks.append(
            TaskRecord(
                task_id=task.get("task_id", ""),
                text=task.get("text", ""),
                order_index=order_index,
            )
        )

    return IncidentPackage(
        incident_id=incident_id,
        category=need("category", str),
        severity=need("severity", str),
        asset_criticality=need("asset_criticality", str),
        phase_id=phase_id,
        telemetry=tuple(telemetry),
        case_metadata=dict(need("case_metadata", dict)),
        mapped_human_actions=mapped,
        approvals=tuple(approvals),
        extracted_tasks=tuple(tasks),
        quality_trace=obj.get("quality_trace"),
    )


# ---------------------------------------------------------------------------
# Baseline projection
# ---------------------------------------------------------------------------

def baseline_plan(incident: IncidentPackage) -> ProposedPlan:
    """Project the mapped human actions onto a plan, order and multiplicity intact."""
    return ProposedPlan(
        incident_id=incident.incident_id,
        source=SOURCE_BASELINE,
        model_id="",
        arm=ARM_NONE,
        actions=tuple(incident.mapped_human_actions),
        out_of_catalog=(),
    )
