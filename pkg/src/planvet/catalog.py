"""Action catalog and typed policy surface.

The catalog is the closed vocabulary of response actions; the policy is a
set of typed rules over those actions. ``validate_policy`` is the single
entry point that turns raw rule documents into a ``ValidatedPolicy`` every
other module can trust: all structural defects raise, nothing is repaired.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    CatalogError,
    CyclicPolicy,
    DuplicateRuleId,
    FamilyFieldMismatch,
    PolicyValidationError,
    SelfDependency,
    UnknownActionReference,
)
from .util import canonical_json, sha256_file

# Rule families
MANDATORY = "mandatory"
PROHIBIT_BEFORE = "prohibit_before"
REQUIRE_APPROVAL = "require_approval"
FAMILIES = (MANDATORY, PROHIBIT_BEFORE, REQUIRE_APPROVAL)

SEVERITIES = ("hard", "soft")

# Repair operators, keyed by the family allowed to declare them.
OPERATORS_BY_FAMILY = {
    MANDATORY: ("insert",),
    PROHIBIT_BEFORE: ("insert_before",),
    REQUIRE_APPROVAL: ("remove", "defer_to_human_approval"),
}

_ACTION_ID_RE = re.compile(r"^[a-z][a-z0-9]*(_[a-z0-9]+)*$")


@dataclass(frozen=True)
class ActionEntry:
    """One catalog row: identifier plus approval-gate and reversibility metadata."""

    action_id: str
    display_name: str
    approval_gate: bool
    reversible: bool
    baseline_support: bool


@dataclass(frozen=True)
class ActionCatalog:
    entries: tuple[ActionEntry, ...]
    source_sha256: str = ""

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for entry in self.entries:
            if not _ACTION_ID_RE.match(entry.action_id):
                raise CatalogError(
                    f"action id {entry.action_id!r} is not a lowercase snake-case token"
                )
            if entry.action_id in seen:
                raise CatalogError(f"duplicate action id {entry.action_id!r}")
            seen.add(entry.action_id)

    def action_ids(self) -> tuple[str, ...]:
        return tuple(e.action_id for e in self.entries)

    def __contains__(self, action_id: str) -> bool:
        return any(e.action_id == action_id for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, action_id: str) -> ActionEntry:
        for entry in self.entries:
            if entry.action_id == action_id:
                return entry
        raise KeyError(action_id)


@dataclass(frozen=True)
class ScopePredicate:
    """Telemetry scope for mandatory rules.

    ``event_type_contains`` and any listed command substring must hit the
    same event; an empty ``command_contains`` matches any command.
    Matching is case-sensitive exact substring, by design.
    """

    event_type_contains: str
    command_contains: tuple[str, ...] = ()


@dataclass(frozen=True)
class PolicyRule:
    rule_id: str
    family: str
    target_action: str
    severity: str
    repair_operator: str
    rationale: str = ""
    prerequisite_action: str | None = None
    scope: ScopePredicate | None = None


@dataclass(frozen=True)
class ValidatedPolicy:
    """Catalog + rules with the prerequisite graph materialized and checked."""

    catalog: ActionCatalog
    rules: tuple[PolicyRule, ...]
    prerequisite_edges: tuple[tuple[str, str], ...]  # (prerequisite, target)
    source_sha256: str = ""

    def rules_in_family(self, family: str) -> tuple[PolicyRule, ...]:
        return tuple(r for r in self.rules if r.family == family)

    def to_json_obj(self) -> dict:
        return {
            "catalog": [vars(e) for e in self.catalog.entries],
            "rules": [_rule_to_obj(r) for r in self.rules],
            "prerequisite_edges": [list(e) for e in self.prerequisite_edges],
        }

    def canonical(self) -> str:
        return canonical_json(self.to_json_obj())


def _rule_to_obj(rule: PolicyRule) -> dict:
    obj = {
        "rule_id": rule.rule_id,
        "family": rule.family,
        "target_action": rule.target_action,
        "severity": rule.severity,
        "repair_operator": rule.repair_operator,
        "rationale": rule.rationale,
        "prerequisite_action": rule.prerequisite_action,
        "scope": None,
    }
    if rule.scope is not None:
        obj["scope"] = {
            "event_type_contains": rule.scope.event_type_contains,
            "command_contains": list(rule.scope.command_contains),
        }
    return obj


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_policy(
    catalog: ActionCatalog,
    rules: Sequence[PolicyRule],
    *,
    source_sha256: str = "",
) -> ValidatedPolicy:
    """Check every structural invariant and materialize the prerequisite graph.

    Raises ``DuplicateRuleId``, ``FamilyFieldMismatch``, ``UnknownActionReference``,
    ``SelfDependency`` or ``CyclicPolicy`` (naming the cycle). Validation is
    total: a policy that comes back is safe to enforce with.
    """
    seen_ids: set[str] = set()
    edges: list[tuple[str, str]] = []
    for rule in rules:
        if rule.rule_id in seen_ids:
            raise DuplicateRuleId(f"rule id {rule.rule_id!r} declared twice")
        seen_ids.add(rule.rule_id)
        _check_rule_shape(rule)
        if rule.target_action not in catalog:
            raise UnknownActionReference(
                f"rule {rule.rule_id}: target action {rule.target_action!r} not in catalog"
            )
        if rule.family == PROHIBIT_BEFORE:
            prereq = rule.prerequisite_action
            assert prereq is not None  # guaranteed by _check_rule_shape
            if prereq not in catalog:
                raise UnknownActionReference(
                    f"rule {rule.rule_id}: prerequisite action {prereq!r} not in catalog"
                )
            if prereq == rule.target_action:
                raise SelfDependency(
                    f"rule {rule.rule_id}: {prereq!r} cannot be its own prerequisite"
                )
            edges.append((prereq, rule.target_action))

    cycle = _find_cycle(edges)
    if cycle:
        raise CyclicPolicy(
            "prerequisite graph contains a cycle: " + " -> ".join(cycle),
            cycle=tuple(cycle),
        )

    return ValidatedPolicy(
        catalog=catalog,
        rules=tuple(rules),
        prerequisite_edges=tuple(edges),
        source_sha256=source_sha256,
    )


def _check_rule_shape(rule: PolicyRule) -> None:
    if rule.family not in FAMILIES:
        raise FamilyFieldMismatch(f"rule {rule.rule_id}: unknown family {rule.family!r}")
    if rule.severity not in SEVERITIES:
        raise PolicyValidationError(
            f"rule {rule.rule_id}: unknown severity {rule.severity!r}"
        )
    if rule.repair_operator not in OPERATORS_BY_FAMILY[rule.family]:
        raise FamilyFieldMismatch(
            f"rule {rule.rule_id}: family {rule.family} cannot use "
            f"repair operator {rule.repair_operator!r}"
        )
    if rule.family == MANDATORY:
        if rule.scope is None:
            raise FamilyFieldMismatch(f"rule {rule.rule_id}: mandatory rule needs a scope")
        if rule.prerequisite_action is not None:
            raise FamilyFieldMismatch(
                f"rule {rule.rule_id}: mandatory rule cannot name a prerequisite"
            )
        if not rule.scope.event_type_contains:
            raise PolicyValidationError(
                f"rule {rule.rule_id}: scope event_type_contains must be non-empty"
            )
    elif rule.family == PROHIBIT_BEFORE:
        if rule.prerequisite_action is None:
            raise FamilyFieldMismatch(
                f"rule {rule.rule_id}: prohibit_before rule needs a prerequisite_action"
            )
        if rule.scope is not None:
            raise FamilyFieldMismatch(
                f"rule {rule.rule_id}: prohibit_before rule cannot carry a scope"
            )
    else:  # require_approval
        if rule.prerequisite_action is not None or rule.scope is not None:
            raise FamilyFieldMismatch(
                f"rule {rule.rule_id}: require_approval rule carries no optional fields"
            )


def _find_cycle(edges: Iterable[tuple[str, str]]) -> list[str]:
    """Return one cycle as a node path (first node repeated), or []."""
    adjacency: dict[str, list[str]] = {}
    for src, dst in edges:
        adjacency.setdefault(src, []).append(dst)
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(node: str) -> list[str]:
        color[node] = GRAY
        stack.append(node)
        for nxt in adjacency.get(node, ()):
            state = color.get(nxt, WHITE)
            if state == GRAY:
                start = stack.index(nxt)
                return stack[start:] + [nxt]
            if state == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[node] = BLACK
        return []

    for node in sorted(adjacency):
        if color.get(node, WHITE) == WHITE:
            found = visit(node)
            if found:
                return found
    return []


# ---------------------------------------------------------------------------
# Scope matching
# ---------------------------------------------------------------------------

def scope_matches(rule: PolicyRule, telemetry: Iterable) -> bool:
    """True iff some single event satisfies the rule's scope predicate.

    The event type must contain ``event_type_contains`` and, when
    ``command_contains`` is non-empty, the same event's command must contain
    at least one of the listed substrings. Missing commands count as empty
    text. Monotone in telemetry: adding events never flips True to False.
    """
    if rule.family != MANDATORY or rule.scope is None:
        raise ValueError(f"scope_matches requires a mandatory rule, got {rule.family}")
    scope = rule.scope
    for event in telemetry:
        if scope.event_type_contains not in event.event_type:
            continue
        command = event.command or ""
        if not scope.command_contains or any(s in command for s in scope.command_contains):
            return True
    return False


# ---------------------------------------------------------------------------
# Document loading
# ---------------------------------------------------------------------------

def load_catalog(path: Path | str) -> ActionCatalog:
    """Read ``catalog.json`` (array of action entries); records the file digest."""
    import json

    path = Path(path)
    digest = sha256_file(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path.name}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise CatalogError(f"{path.name}: expected a JSON array of action entries")
    entries = []
    for idx, obj in enumerate(raw):
        try:
            entries.append(
                ActionEntry(
                    action_id=obj["action_id"],
                    display_name=obj["display_name"],
                    approval_gate=_require_bool(obj, "approval_gate", idx),
                    reversible=_require_bool(obj, "reversible", idx),
                    baseline_support=_require_bool(obj, "baseline_support", idx),
                )
            )
        except KeyError as exc:
            raise CatalogError(f"{path.name}: entry {idx} missing field {exc}") from exc
    return ActionCatalog(entries=tuple(entries), source_sha256=digest)


def _require_bool(obj: dict, key: str, idx: int):
    value = obj[key]  # no defaulting: gates and reversibility must be explicit
    if not isinstance(value, bool):
        raise CatalogError(f"entry {idx}: field {key!r} must be a boolean")
    return value


def load_policy_rules(path: Path | str) -> tuple[tuple[PolicyRule, ...], str]:
    """Read ``policy.json``; returns the rules plus the raw document digest."""
    import json

    path = Path(path)
    digest = sha256_file(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PolicyValidationError(f"{path.name}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise PolicyValidationError(f"{path.name}: expected a JSON array of rules")
    rules = []
    for idx, obj in enumerate(raw):
        scope = None
        scope_obj = obj.get("scope")
        if scope_obj is not None:
            scope = ScopePredicate(
                event_type_contains=scope_obj.get("event_type_contains", ""),
                command_contains=tuple(scope_obj.get("command_contains", ())),
            )
        try:
            rules.append(
                PolicyRule(
                    rule_id=obj["rule_id"],
                    family=obj["family"],
                    target_action=obj["target_action"],
                    severity=obj["severity"],
                    repair_operator=obj["repair_operator"],
                    rationale=obj.get("rationale", ""),
                    prerequisite_action=obj.get("prerequisite_action"),
                    scope=scope,
                )
            )
        except KeyError as exc:
            raise PolicyValidationError(f"{path.name}: rule {idx} missing field {exc}") from exc
    return tuple(rules), digest


def load_policy(catalog_path: Path | str, policy_path: Path | str) -> ValidatedPolicy:
    """Load and validate catalog + policy documents in one step."""
    catalog = load_catalog(catalog_path)
    rules, digest = load_policy_rules(policy_path)
    return validate_policy(catalog, rules, source_sha256=digest)
