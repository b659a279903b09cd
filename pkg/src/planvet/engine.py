"""Deterministic three-pass repair engine over action sequences.

Pass 1 appends missing mandatory actions (once per rule, ascending rule id)
when telemetry matches the rule scope. Pass 2 repairs ordering constraints
to a fixed point, always fixing the leftmost violation first and inserting
a fresh prerequisite instance; the engine never reorders. Pass 3 treats
unapproved approval-gated occurrences left to right: removed in the primary
mode, kept and recorded in defer mode.

For fixed inputs the enforced sequence and the full violation trace are
byte-identical across runs. Reapplying remove-mode enforcement to its own
output modifies nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .catalog import (
    MANDATORY,
    PROHIBIT_BEFORE,
    REQUIRE_APPROVAL,
    PolicyRule,
    ValidatedPolicy,
    scope_matches,
)
from .corpus import IncidentPackage
from .errors import InternalBoundExceeded
from .plans import ProposedPlan
from .util import canonical_json

# Approval treatment modes (run-level; rule operators are declarative).
MODE_REMOVE = "remove"
MODE_DEFER = "defer_to_human_approval"
APPROVAL_MODES = (MODE_REMOVE, MODE_DEFER)

# Edit operators recorded per run. ``reorder`` stays 0 under current
# semantics; the counter exists because run accounting tracks it.
EDIT_OPERATORS = ("insert", "insert_before", "remove", "reorder", "defer")

VIOLATION_TYPE_BY_FAMILY = {
    MANDATORY: "missing_mandatory",
    PROHIBIT_BEFORE: "order_violation",
    REQUIRE_APPROVAL: "approval_required",
}


@dataclass(frozen=True)
class ViolationRecord:
    rule_id: str
    family: str
    violation_type: str
    action_id: str
    position: int  # index in the working plan at detection time
    repair: str    # insert | insert_before | remove | defer
    severity: str

    def to_json_obj(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "family": self.family,
            "violation_type": self.violation_type,
            "action_id": self.action_id,
            "position": self.position,
            "repair": self.repair,
            "severity": self.severity,
        }


@dataclass(frozen=True)
class EnforcementResult:
    enforced_actions: tuple[str, ...]
    violations: tuple[ViolationRecord, ...]
    modified: bool
    edit_counts: Mapping[str, int]
    approval_mode: str
    deferred_actions: tuple[str, ...] = ()

    def hard_violations(self) -> int:
        return sum(1 for v in self.violations if v.severity == "hard")

    def to_json_obj(self, *, policy_sha256: str = "") -> dict:
        return {
            "enforced_actions": list(self.enforced_actions),
            "violations": [v.to_json_obj() for v in self.violations],
            "modified": self.modified,
            "edit_counts": dict(self.edit_counts),
            "approval_mode": self.approval_mode,
            "deferred_actions": list(self.deferred_actions),
            "policy_sha256": policy_sha256,
        }

    def canonical(self) -> str:
        return canonical_json(self.to_json_obj())


# ---------------------------------------------------------------------------
# Enforcement
# ---------------------------------------------------------------------------

def enforce(
    plan: ProposedPlan,
    policy: ValidatedPolicy,
    incident: IncidentPackage,
    mode: str = MODE_REMOVE,
) -> EnforcementResult:
    """Transform a proposed plan into the policy-treated sequence plus trace."""
    return enforce_actions(plan.actions, policy, incident, mode)


def enforce_actions(
    actions: Sequence[str],
    policy: ValidatedPolicy,
    incident: IncidentPackage,
    mode: str = MODE_REMOVE,
) -> EnforcementResult:
    if mode not in APPROVAL_MODES:
        raise ValueError(f"unknown approval mode {mode!r}")

    # Working plan carries stable occurrence tags so the termination
    # instrumentation can assert "one insertion per (rule, occurrence)".
    tag_counter = iter(range(10**9))
    working: list[tuple[str, int]] = [(a, next(tag_counter)) for a in actions]
    violations: list[ViolationRecord] = []
    edit_counts: dict[str, int] = {op: 0 for op in EDIT_OPERATORS}
    deferred: list[str] = []

    _pass_mandatory(working, policy, incident, violations, edit_counts, tag_counter)
    _pass_ordering(working, policy, violations, edit_counts, tag_counter)
    _pass_approval(working, policy, incident, mode, violations, edit_counts, deferred)

    return EnforcementResult(
        enforced_actions=tuple(action for action, _ in working),
        violations=tuple(violations),
        modified=sum(edit_counts.values()) >= 1,
        edit_counts=edit_counts,
        approval_mode=mode,
        deferred_actions=tuple(deferred),
    )


def is_fixed_point(
    actions: Sequence[str],
    policy: ValidatedPolicy,
    incident: IncidentPackage,
    mode: str = MODE_REMOVE,
) -> bool:
    """True iff enforcing this sequence applies no repair."""
    return not enforce_actions(actions, policy, incident, mode).modified


# -- pass 1: mandatory insertion --------------------------------------------

def _pass_mandatory(working, policy, incident, violations, edit_counts, tag_counter):
    for rule in sorted(policy.rules_in_family(MANDATORY), key=lambda r: r.rule_id):
        if not scope_matches(rule, incident.telemetry):
            continue
        if any(action == rule.target_action for action, _ in working):
            continue
        working.append((rule.target_action, next(tag_counter)))
        violations.append(
            ViolationRecord(
                rule_id=rule.rule_id,
                family=MANDATORY,
                violation_type="missing_mandatory",
                action_id=rule.target_action,
                position=len(working) - 1,
                repair="insert",
                severity=rule.severity,
            )
        )
        edit_counts["insert"] += 1


# -- pass 2: ordering repair to a fixed point --------------------------------

def _pass_ordering(working, policy, violations, edit_counts, tag_counter):
    rules_by_target: dict[str, list[PolicyRule]] = {}
    for rule in sorted(policy.rules_in_family(PROHIBIT_BEFORE), key=lambda r: r.rule_id):
        rules_by_target.setdefault(rule.target_action, []).append(rule)
    if not rules_by_target:
        return

    # Cap signals an engine bug, never a data condition: legitimate work on
    # an acyclic graph stays far below length * rules * catalog.
    cap = (
        max(1, len(working))
        * max(1, len(policy.rules))
        * max(1, len(policy.catalog))
    )
    fired: set[tuple[str, int]] = set()
    iterations = 0
    while True:
        iterations += 1
        if iterations > cap + 1:
            raise InternalBoundExceeded(
                f"ordering repair exceeded {cap} iterations; engine bug"
            )
        found = _leftmost_order_violation(working, rules_by_target)
        if found is None:
            return
        index, rule, tag = found
        pair = (rule.rule_id, tag)
        if pair in fired:
            raise InternalBoundExceeded(
                f"rule {rule.rule_id} fired twice for one occurrence; engine bug"
            )
        fired.add(pair)
        working.insert(index, (rule.prerequisite_action, next(tag_counter)))
        violations.append(
            ViolationRecord(
                rule_id=rule.rule_id,
                family=PROHIBIT_BEFORE,
                violation_type="order_violation",
                action_id=rule.prerequisite_action,
                position=index,
                repair="insert_before",
                severity=rule.severity,
            )
        )
        edit_counts["insert_before"] += 1


def _leftmost_order_violation(working, rules_by_target):
    """Earliest (index, rule, occurrence tag) lacking its prerequisite, or None.

    A later occurrence of the prerequisite does not satisfy the rule; rules
    targeting the same occurrence are arbitrated by ascending rule id.
    """
    seen: set[str] = set()
    for index, (action, tag) in enumerate(working):
        for rule in rules_by_target.get(action, ()):
            if rule.prerequisite_action not in seen:
                return index, rule, tag
        seen.add(action)
    return None


# -- pass 3: approval treatment ----------------------------------------------

def _pass_approval(working, policy, incident, mode, violations, edit_counts, deferred):
    # One repair per occurrence: when several approval rules target the same
    # action the lowest rule id carries the record.
    rule_by_action: dict[str, PolicyRule] = {}
    for rule in sorted(policy.rules_in_family(REQUIRE_APPROVAL), key=lambda r: r.rule_id):
        rule_by_action.setdefault(rule.target_action, rule)
    if not rule_by_action:
        return
    approved = incident.approved_actions()

    index = 0
    while index < len(working):
        action, _tag = working[index]
        rule = rule_by_action.get(action)
        if rule is None or action in approved:
            index += 1
            continue
        if mode == MODE_REMOVE:
            violations.append(
                ViolationRecord(
                    rule_id=rule.rule_id,
                    family=REQUIRE_APPROVAL,
                    violation_type="approval_required",
                    action_id=action,
                    position=index,
                    repair="remove",
                    severity=rule.severity,
                )
            )
            edit_counts["remove"] += 1
            del working[index]
        else:
            violations.append(
                ViolationRecord(
                    rule_id=rule.rule_id,
                    family=REQUIRE_APPROVAL,
                    violation_type="approval_required",
                    action_id=action,
                    position=index,
                    repair="defer",
                    severity=rule.severity,
                )
            )
            edit_counts["defer"] += 1
            deferred.append(action)
            index += 1


# ---------------------------------------------------------------------------
# Trace helpers
# ---------------------------------------------------------------------------

def fired_order_edges(
    result: EnforcementResult, policy: ValidatedPolicy
) -> tuple[tuple[str, str], ...]:
    """(prerequisite, target) edge per ordering repair in the trace."""
    by_rule = {r.rule_id: r for r in policy.rules}
    edges = []
    for violation in result.violations:
        if violation.violation_type != "order_violation":
            continue
        rule = by_rule[violation.rule_id]
        edges.append((rule.prerequisite_action, rule.target_action))
    return tuple(edges)


def order_chain_depth(result: EnforcementResult, policy: ValidatedPolicy) -> int:
    """Longest dependent-repair chain in one run: the longest path through
    the prerequisite edges that actually fired (acyclic by validation)."""
    edges = set(fired_order_edges(result, policy))
    if not edges:
        return 0
    children: dict[str, list[str]] = {}
    for prereq, target in edges:
        children.setdefault(prereq, []).append(target)

    depth: dict[str, int] = {}

    def longest_from(node: str) -> int:
        if node in depth:
            return depth[node]
        best = 0
        for nxt in children.get(node, ()):
            best = max(best, 1 + longest_from(nxt))
        depth[node] = best
        return best

    return max(longest_from(prereq) for prereq, _ in edges)
