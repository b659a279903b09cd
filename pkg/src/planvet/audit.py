"""Release gates, rule-activation checks, and hash manifests.

The privacy scanner is exactly that: a scanner that reports findings with
masked excerpts. Tokenization and anonymization happen on the private side
of the release boundary and are out of scope here.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import jsonschema

from . import __version__ as _tool_version
from .catalog import ActionCatalog, ValidatedPolicy
from .corpus import PROXY_APPROVAL_SOURCE, Corpus
from .engine import MODE_DEFER, MODE_REMOVE, enforce, order_chain_depth
from .errors import IoError
from .mapping import MappingRule, map_tasks
from .plans import ProposedPlan
from .util import canonical_json, sha256_file, sha256_text

# Declared baseline pattern set, versioned and hash-tracked. Hostname and
# user-id shapes are necessarily heuristic; the pattern file is an input,
# not ground truth.
DEFAULT_PRIVACY_PATTERNS: dict[str, str] = {
    "email": r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}",
    "ipv4": r"\b(?:\d{1,3}\.){3}\d{1,3}\b",
    "ipv6": r"\b(?:[0-9A-Fa-f]{1,4}:){2,7}[0-9A-Fa-f]{1,4}\b",
    "phone": r"\+\d{7,15}\b|\b\d{3}[-.]\d{3}[-.]\d{4}\b",
    "hostname": r"\b[a-z0-9][a-z0-9-]*(?:\.[a-z0-9][a-z0-9-]*)+\.(?:com|net|org|io|corp|local|internal|example|lan)\b",
    "user_id": r"\b(?:uid|user)[-_]\d{3,}\b",
}

PRIVACY_KINDS = ("email", "ipv4", "ipv6", "phone", "hostname", "user_id", "forbidden_term")


@dataclass(frozen=True)
class PrivacyFinding:
    document_ref: str
    kind: str
    excerpt: str  # masked so findings never re-leak
    position: int

    def to_json_obj(self) -> dict:
        return {
            "document_ref": self.document_ref,
            "kind": self.kind,
            "excerpt": self.excerpt,
            "position": self.position,
        }


@dataclass
class GateReport:
    privacy_pass: bool
    privacy_finding_count: int
    parseability_pass: bool
    parse_failures: list[str]
    mapping_pass: bool
    unmatched_tasks: int
    ambiguous_tasks: int
    approval_gaps: list[dict]
    empty_corpus: bool = False

    @property
    def overall_pass(self) -> bool:
        return self.privacy_pass and self.parseability_pass and self.mapping_pass

    def to_json_obj(self) -> dict:
        return {
            "privacy_pass": self.privacy_pass,
            "privacy_finding_count": self.privacy_finding_count,
            "parseability_pass": self.parseability_pass,
            "parse_failures": list(self.parse_failures),
            "mapping_pass": self.mapping_pass,
            "unmatched_tasks": self.unmatched_tasks,
            "ambiguous_tasks": self.ambiguous_tasks,
            "approval_gaps": list(self.approval_gaps),
            "empty_corpus": self.empty_corpus,
            "overall_pass": self.overall_pass,
        }


@dataclass
class ActivationReport:
    candidate_actions: int
    candidate_rules: int
    activated_rules: tuple[str, ...]
    repair_mode_coverage: tuple[str, ...]
    max_chain_depth: int
    plans_checked: int = 0

    def to_json_obj(self) -> dict:
        return {
            "candidate_actions": self.candidate_actions,
            "candidate_rules": self.candidate_rules,
            "activated_rules": list(self.activated_rules),
            "repair_mode_coverage": list(self.repair_mode_coverage),
            "max_chain_depth": self.max_chain_depth,
            "plans_checked": self.plans_checked,
        }


# ---------------------------------------------------------------------------
# Privacy scanning
# ---------------------------------------------------------------------------

def mask_excerpt(text: str) -> str:
    if len(text) <= 4:
        return "*" * len(text)
    return text[:2] + "*" * (len(text) - 4) + text[-2:]


def _iter_strings(obj, path: str):
    if isinstance(obj, str):
        yield path, obj
    elif isinstance(obj, Mapping):
        for key in obj:
            yield from _iter_strings(obj[key], f"{path}.{key}")
    elif isinstance(obj, (list, tuple)):
        for idx, item in enumerate(obj):
            yield from _iter_strings(item, f"{path}[{idx}]")


def privacy_scan(
    documents: Iterable[tuple[str, object]],
    forbidden_terms: Sequence[str] = (),
    patterns: Mapping[str, str] | None = None,
) -> list[PrivacyFinding]:
    """Scan every text field of every document; deterministic finding order.

    ``documents`` is an iterable of (document_ref, parsed JSON object).
    Findings, not errors: an empty list means the scan passed.
    """
    if patterns is None:
        patterns = DEFAULT_PRIVACY_PATTERNS
    compiled = [(kind, re.compile(expr)) for kind, expr in sorted(patterns.items())]
    findings: list[PrivacyFinding] = []
    for document_ref, obj in documents:
        for path, text in _iter_strings(obj, document_ref):
            for kind, regex in compiled:
                for match in regex.finditer(text):
                    findings.append(
                        PrivacyFinding(
                            document_ref=path,
                            kind=kind,
                            excerpt=mask_excerpt(match.group(0)),
                            position=match.start(),
                        )
                    )
            lowered = text.lower()
            for term in forbidden_terms:
                start = 0
                needle = term.lower()
                while needle:
                    found = lowered.find(needle, start)
                    if found < 0:
                        break
                    findings.append(
                        PrivacyFinding(
                            document_ref=path,
                            kind="forbidden_term",
                            excerpt=mask_excerpt(text[found : found + len(term)]),
                            position=found,
                        )
                    )
                    start = found + 1
    findings.sort(key=lambda f: (f.document_ref, f.position, f.kind))
    return findings


# ---------------------------------------------------------------------------
# Release gate
# ---------------------------------------------------------------------------

def load_package_schema() -> dict:
    from importlib import resources

    with resources.files("planvet").joinpath("schema/incident_package.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return json.load(fh)


def release_gate(
    corpus_dir: Path | str,
    catalog: ActionCatalog,
    mapping_rules: Sequence[MappingRule],
    *,
    forbidden_terms: Sequence[str] = (),
    patterns: Mapping[str, str] | None = None,
) -> GateReport:
    """Run the privacy, parseability, and mapping gates over a corpus directory.

    Also surfaces approval-gap suggestions: approval-gated catalog actions
    executed in some baseline whose only approval evidence is the mapping
    contract proxy (or none at all). Suggestions are candidates for manual
    review, never auto-activated, and do not fail the gate.
    """
    corpus_dir = Path(corpus_dir)
    files = sorted(corpus_dir.glob("*.json"))
    schema = load_package_schema()
    validator = jsonschema.Draft7Validator(schema)

    documents: list[tuple[str, object]] = []
    parse_failures: list[str] = []
    packages: list[dict] = []
    for path in files:
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            parse_failures.append(f"{path.name}: invalid JSON: {exc}")
            continue
        documents.append((path.name, obj))
        errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
        if errors:
            first = errors[0]
            location = "/".join(str(p) for p in first.absolute_path) or "<root>"
            parse_failures.append(f"{path.name}: {location}: {first.message}")
            continue
        packages.append(obj)

    findings = privacy_scan(documents, forbidden_terms, patterns)

    unmatched = 0
    ambiguous = 0
    from .corpus import TaskRecord  # local import keeps module edges one-way

    for pkg in packages:
        tasks = [
            TaskRecord(t.get("task_id", ""), t.get("text", ""), t.get("order_index", 0))
            for t in pkg.get("extracted_tasks", ())
        ]
        if not tasks:
            continue
        result = map_tasks(tasks, mapping_rules, catalog)
        unmatched += len(result.unmatched)
        ambiguous += len(result.ambiguous)

    approval_gaps = _approval_gaps(packages, catalog)

    return GateReport(
        privacy_pass=not findings,
        privacy_finding_count=len(findings),
        parseability_pass=not parse_failures,
        parse_failures=parse_failures,
        mapping_pass=(unmatched == 0 and ambiguous == 0),
        unmatched_tasks=unmatched,
        ambiguous_tasks=ambiguous,
        approval_gaps=approval_gaps,
        empty_corpus=not files,
    )


def _approval_gaps(packages: Sequence[dict], catalog: ActionCatalog) -> list[dict]:
    """Gated actions appearing in baselines without recorded (non-proxy) approval."""
    gaps: dict[str, int] = {}
    for pkg in packages:
        recorded = {
            ev.get("action_id")
            for ev in pkg.get("approvals", ())
            if ev.get("source") != PROXY_APPROVAL_SOURCE
        }
        for action in pkg.get("mapped_human_actions", ()):
            if action in catalog and catalog.get(action).approval_gate and action not in recorded:
                gaps[action] = gaps.get(action, 0) + 1
    return [
        {
            "action_id": action,
            "suggestion": f"require_approval({action})",
            "baseline_occurrences": count,
            "note": "historical gap: baseline support carries no recorded approval evidence",
        }
        for action, count in sorted(gaps.items())
    ]


# ---------------------------------------------------------------------------
# Activation check
# ---------------------------------------------------------------------------

def activation_check(
    corpus: Corpus,
    policy: ValidatedPolicy,
    plans: Sequence[ProposedPlan],
) -> ActivationReport:
    """Enforce every plan under a candidate policy and report which rules fire.

    Each plan is enforced under both approval treatments so the report
    covers every supported repair operator; pass 1 and pass 2 behave
    identically in both, so chain depth is measured once.
    """
    activated: set[str] = set()
    operators: set[str] = set()
    max_depth = 0
    by_id = {pkg.incident_id: pkg for pkg in corpus}
    repair_to_operator = {"insert": "insert", "insert_before": "insert_before",
                          "remove": "remove", "defer": "defer_to_human_approval"}
    for plan in plans:
        incident = by_id[plan.incident_id]
        for mode in (MODE_REMOVE, MODE_DEFER):
            result = enforce(plan, policy, incident, mode)
            for violation in result.violations:
                activated.add(violation.rule_id)
                operators.add(repair_to_operator[violation.repair])
            if mode == MODE_REMOVE:
                max_depth = max(max_depth, order_chain_depth(result, policy))
    return ActivationReport(
        candidate_actions=len(policy.catalog),
        candidate_rules=len(policy.rules),
        activated_rules=tuple(sorted(activated)),
        repair_mode_coverage=tuple(sorted(operators)),
        max_chain_depth=max_depth,
        plans_checked=len(plans),
    )


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

def build_manifest(paths: Sequence[Path | str], *, extra: Mapping | None = None) -> dict:
    """Filename -> SHA-256 manifest with a content digest.

    The timestamp is a sidecar field excluded from the content digest, so
    manifests of identical inputs compare equal where it matters.
    """
    files: dict[str, str] = {}
    for path in paths:
        path = Path(path)
        try:
            files[path.name] = sha256_file(path)
        except OSError as exc:
            raise IoError(f"cannot hash {path}: {exc}") from exc
    body = {"files": files, "tool_version": _tool_version}
    if extra:
        body.update(extra)
    content_sha = sha256_text(canonical_json(body))
    manifest = dict(body)
    manifest["content_sha256"] = content_sha
    manifest["generated_at"] = datetime.now(timezone.utc).isoformat()
    return manifest
