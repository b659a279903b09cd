"""Deterministic task-to-action mapping under a hash-tracked rule contract.

A task matches a rule's keyword set iff every keyword in that set occurs in
the task text (case-insensitive substring). The winning (action, set) pair
has the largest set, ties broken by higher priority; when two distinct
actions tie on both, the task is ambiguous rather than arbitrarily
assigned. Tasks matching nothing are unmatched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .catalog import ActionCatalog
from .corpus import Corpus, TaskRecord
from .errors import ParseError, UnknownActionInRule
from .util import sha256_file


@dataclass(frozen=True)
class MappingRule:
    action_id: str
    keyword_sets: tuple[tuple[str, ...], ...]  # each inner tuple is conjunctive
    priority: int = 0


@dataclass(frozen=True)
class MappedTask:
    task_id: str
    action_id: str
    matched_set_size: int


@dataclass
class ActionSupport:
    cases: int = 0
    matches: int = 0
    single_keyword_matches: int = 0

    @property
    def single_keyword_unique_fraction(self) -> float:
        if self.matches == 0:
            return 0.0
        return self.single_keyword_matches / self.matches


@dataclass
class MappingSupportManifest:
    per_action: dict[str, ActionSupport] = field(default_factory=dict)
    mapped_tasks: int = 0
    total_tasks: int = 0

    def to_json_obj(self) -> dict:
        return {
            "per_action": {
                action: {
                    "cases": s.cases,
                    "matches": s.matches,
                    "single_keyword_matches": s.single_keyword_matches,
                    "single_keyword_unique_fraction": s.single_keyword_unique_fraction,
                }
                for action, s in sorted(self.per_action.items())
            },
            "mapped_tasks": self.mapped_tasks,
            "total_tasks": self.total_tasks,
        }


@dataclass
class MappingResult:
    mapped: tuple[MappedTask, ...]
    unmatched: tuple[str, ...]
    ambiguous: tuple[tuple[str, tuple[str, ...]], ...]  # (task_id, candidates)
    support: MappingSupportManifest

    def mapped_actions(self) -> tuple[str, ...]:
        return tuple(m.action_id for m in self.mapped)


@dataclass
class CoverageStats:
    catalog_coverage: float
    weighted_coverage: float
    single_keyword_fraction: float


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------

def map_tasks(
    tasks: Sequence[TaskRecord],
    rules: Sequence[MappingRule],
    catalog: ActionCatalog,
) -> MappingResult:
    """Map every task; mapped/unmatched/ambiguous partition the input."""
    for rule in rules:
        if rule.action_id not in catalog:
            raise UnknownActionInRule(
                f"mapping rule names unknown action {rule.action_id!r}"
            )

    mapped: list[MappedTask] = []
    unmatched: list[str] = []
    ambiguous: list[tuple[str, tuple[str, ...]]] = []
    support = MappingSupportManifest(total_tasks=len(tasks))
    seen_case_actions: set[str] = set()

    for task in tasks:
        candidates = _matching_pairs(task.text, rules)
        if not candidates:
            unmatched.append(task.task_id)
            continue
        best_size = max(size for _, size, _ in candidates)
        at_size = [c for c in candidates if c[1] == best_size]
        best_priority = max(priority for _, _, priority in at_size)
        winners = sorted({action for action, _, priority in at_size if priority == best_priority})
        if len(winners) > 1:
            ambiguous.append((task.task_id, tuple(winners)))
            continue
        action = winners[0]
        mapped.append(MappedTask(task.task_id, action, best_size))
        entry = support.per_action.setdefault(action, ActionSupport())
        entry.matches += 1
        if best_size == 1:
            entry.single_keyword_matches += 1
        if action not in seen_case_actions:
            seen_case_actions.add(action)
            entry.cases += 1

    support.mapped_tasks = len(mapped)
    return MappingResult(
        mapped=tuple(mapped),
        unmatched=tuple(unmatched),
        ambiguous=tuple(ambiguous),
        support=support,
    )


def _matching_pairs(text: str, rules: Sequence[MappingRule]) -> list[tuple[str, int, int]]:
    """All (action, set size, priority) whose keyword set fully hits the text."""
    lowered = text.lower()
    pairs = []
    for rule in rules:
        for keyword_set in rule.keyword_sets:
            if all(keyword.lower() in lowered for keyword in keyword_set):
                pairs.append((rule.action_id, len(keyword_set), rule.priority))
    return pairs


def map_corpus(
    corpus: Corpus | Iterable,
    rules: Sequence[MappingRule],
    catalog: ActionCatalog,
) -> MappingResult:
    """Run the mapper per incident and merge into one corpus-level result.

    ``cases`` counts incidents with at least one match per action; match
    totals and the partition aggregate across incidents.
    """
    mapped: list[MappedTask] = []
    unmatched: list[str] = []
    ambiguous: list[tuple[str, tuple[str, ...]]] = []
    support = MappingSupportManifest()
    for incident in corpus:
        result = map_tasks(incident.extracted_tasks, rules, catalog)
        mapped.extend(result.mapped)
        unmatched.extend(result.unmatched)
        ambiguous.extend(result.ambiguous)
        support.total_tasks += result.support.total_tasks
        support.mapped_tasks += result.support.mapped_tasks
        for action, part in result.support.per_action.items():
            entry = support.per_action.setdefault(action, ActionSupport())
            entry.matches += part.matches
            entry.single_keyword_matches += part.single_keyword_matches
            entry.cases += part.cases
    return MappingResult(
        mapped=tuple(mapped),
        unmatched=tuple(unmatched),
        ambiguous=tuple(ambiguous),
        support=support,
    )


def mapping_coverage(result: MappingResult, catalog: ActionCatalog) -> CoverageStats:
    """Catalog coverage, task-weighted coverage, and single-keyword reliance.

    Weighted coverage over zero tasks is 1.0 by convention (vacuously
    complete); the single-keyword fraction over zero mapped tasks is 0.0.
    """
    touched = sum(1 for action in catalog.action_ids() if action in result.support.per_action)
    catalog_coverage = touched / len(catalog) if len(catalog) else 0.0
    total = result.support.total_tasks
    weighted = result.support.mapped_tasks / total if total else 1.0
    mapped_count = result.support.mapped_tasks
    singles = sum(s.single_keyword_matches for s in result.support.per_action.values())
    single_fraction = singles / mapped_count if mapped_count else 0.0
    return CoverageStats(
        catalog_coverage=catalog_coverage,
        weighted_coverage=weighted,
        single_keyword_fraction=single_fraction,
    )


# ---------------------------------------------------------------------------
# Document loading
# ---------------------------------------------------------------------------

def load_mapping_rules(path: Path | str) -> tuple[tuple[MappingRule, ...], str]:
    """Read ``mapping_rules.json``; returns rules plus the raw document digest."""
    path = Path(path)
    digest = sha256_file(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: not valid JSON: {exc}") from exc
    rules = []
    for obj in raw:
        keyword_sets = tuple(tuple(ks) for ks in obj["keyword_sets"])
        if not keyword_sets or any(not ks or any(not kw for kw in ks) for ks in keyword_sets):
            raise ParseError(
                f"{path.name}: rule for {obj.get('action_id')!r} has an empty keyword set"
            )
        rules.append(
            MappingRule(
                action_id=obj["action_id"],
                keyword_sets=keyword_sets,
                priority=obj.get("priority", 0),
            )
        )
    return tuple(rules), digest
