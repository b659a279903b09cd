"""End-to-end corpus evaluation: enforce, measure, aggregate, persist.

The pipeline is the binding layer under the CLI. One evaluation run loads
the declared inputs, gates the corpus, enforces every stored proposal plus
every paired baseline, and writes the full output bundle: per-run metric
lines, cell summaries, paired contrasts, rerun-stability bands, hash
manifests, and per-run enforcement traces. Outputs carry no timestamps
except the manifest sidecar field, so identical inputs give identical
bytes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .audit import build_manifest, release_gate
from .catalog import ActionCatalog, ValidatedPolicy, load_catalog, load_policy_rules, validate_policy
from .corpus import Corpus, baseline_plan, load_corpus
from .engine import MODE_REMOVE, enforce
from .errors import EmptyEvaluation, ReleaseGateFailed
from .metrics import (
    CellSummary,
    ContrastResult,
    RunMetrics,
    aggregate,
    holm_adjust,
    paired_contrast,
    run_metrics,
    stability_report,
)
from .plans import ProposedPlan, load_proposals
from .util import read_json, write_json

log = logging.getLogger(__name__)

BASELINE_CELL = ("", "none")
BASELINE_LABEL = "human_baseline"

CellKey = tuple[str, str]


@dataclass
class RunConfig:
    corpus_dir: Path
    catalog_path: Path
    policy_path: Path
    mapping_rules_path: Path
    proposals_dir: Path
    output_dir: Path
    approval_mode: str = MODE_REMOVE  # primary endpoint treatment
    confidence: float = 0.95
    contrast_family: tuple[tuple[CellKey, CellKey], ...] = ()
    rerun_label: str = "r1"
    skip_gates: bool = False
    privacy_patterns_path: Path | None = None
    forbidden_terms_path: Path | None = None

    @classmethod
    def from_json(cls, path: Path | str, **overrides) -> "RunConfig":
        """Load a config document; relative paths resolve against its directory.

        Keyword overrides replace document values; ``None`` overrides are
        ignored so CLI flags only bite when actually given.
        """
        path = Path(path)
        obj = dict(read_json(path))
        obj.update({k: v for k, v in overrides.items() if v is not None})
        base = path.parent

        def resolve(key):
            value = obj.get(key)
            if value is None:
                return None
            value = Path(value)
            return value if value.is_absolute() else base / value

        family = tuple(
            ((a[0], a[1]), (b[0], b[1])) for a, b in obj.get("contrast_family", ())
        )
        return cls(
            corpus_dir=resolve("corpus_dir"),
            catalog_path=resolve("catalog_path"),
            policy_path=resolve("policy_path"),
            mapping_rules_path=resolve("mapping_rules_path"),
            proposals_dir=resolve("proposals_dir"),
            output_dir=resolve("output_dir"),
            approval_mode=obj.get("approval_mode", MODE_REMOVE),
            confidence=float(obj.get("confidence", 0.95)),
            contrast_family=family,
            rerun_label=obj.get("rerun_label", "r1"),
            skip_gates=bool(obj.get("skip_gates", False)),
            privacy_patterns_path=resolve("privacy_patterns_path"),
            forbidden_terms_path=resolve("forbidden_terms_path"),
        )


@dataclass
class EvaluationResult:
    config: RunConfig
    policy: ValidatedPolicy
    cells: dict[CellKey, CellSummary]
    baseline_cell: CellSummary
    contrasts: list[ContrastResult]
    runs: list[RunMetrics]
    baseline_runs: list[RunMetrics]
    planned: int
    completed: int
    failures: list[dict] = field(default_factory=list)
    coverage_loss_runs: int = 0
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Gate + input loading
# ---------------------------------------------------------------------------

def _load_gate_inputs(config: RunConfig):
    patterns = None
    if config.privacy_patterns_path:
        patterns = read_json(config.privacy_patterns_path)
    terms: tuple[str, ...] = ()
    if config.forbidden_terms_path:
        text = Path(config.forbidden_terms_path).read_text(encoding="utf-8")
        terms = tuple(line.strip() for line in text.splitlines() if line.strip())
    return patterns, terms


def run_gates(config: RunConfig, catalog: ActionCatalog, mapping_rules) -> None:
    if config.skip_gates:
        log.warning("release gates skipped by configuration; corpus is ungated")
        return
    patterns, terms = _load_gate_inputs(config)
    report = release_gate(
        config.corpus_dir,
        catalog,
        mapping_rules,
        forbidden_terms=terms,
        patterns=patterns,
    )
    if not report.overall_pass:
        raise ReleaseGateFailed(
            "release gate failed: "
            f"privacy={report.privacy_pass} parseability={report.parseability_pass} "
            f"mapping={report.mapping_pass}"
        )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate(config: RunConfig) -> EvaluationResult:
    """Run the declared evaluation and write the output bundle."""
    from .mapping import load_mapping_rules

    catalog = load_catalog(config.catalog_path)
    rules, policy_sha = load_policy_rules(config.policy_path)
    policy = validate_policy(catalog, rules, source_sha256=policy_sha)
    mapping_rules, _mapping_sha = load_mapping_rules(config.mapping_rules_path)

    run_gates(config, catalog, mapping_rules)

    corpus = load_corpus(config.corpus_dir, catalog)
    proposals = load_proposals(config.proposals_dir, catalog)
    if not proposals:
        raise EmptyEvaluation(f"no proposal documents under {config.proposals_dir}")

    output_dir = Path(config.output_dir)
    enforced_dir = output_dir / "enforced"
    enforced_dir.mkdir(parents=True, exist_ok=True)

    baselines = {pkg.incident_id: baseline_plan(pkg) for pkg in corpus}

    runs: list[RunMetrics] = []
    failures: list[dict] = []
    coverage_loss = 0
    planned = len(proposals)
    # Deterministic merge order regardless of any future parallel execution.
    for plan in sorted(proposals, key=lambda p: (p.incident_id, p.model_id, p.arm)):
        try:
            incident = corpus.get(plan.incident_id)
            result = enforce(plan, policy, incident, config.approval_mode)
            metrics = run_metrics(plan, result, baselines[plan.incident_id])
        except Exception as exc:  # never silently dropped: counted and logged
            log.error("run failed: %s/%s/%s: %s", plan.incident_id, plan.model_id, plan.arm, exc)
            failures.append(
                {
                    "incident_id": plan.incident_id,
                    "model_id": plan.model_id,
                    "arm": plan.arm,
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
            continue
        runs.append(metrics)
        if _lost_coverage(plan, result, baselines[plan.incident_id]):
            coverage_loss += 1
        name = f"{plan.incident_id}__{plan.model_id}__{plan.arm}.json"
        write_json(enforced_dir / name, result.to_json_obj(policy_sha256=policy_sha), rounded=False)

    baseline_runs: list[RunMetrics] = []
    for incident_id in sorted(baselines):
        plan = baselines[incident_id]
        result = enforce(plan, policy, corpus.get(incident_id), config.approval_mode)
        baseline_runs.append(run_metrics(plan, result, plan))
        name = f"{incident_id}__{BASELINE_LABEL}__none.json"
        write_json(enforced_dir / name, result.to_json_obj(policy_sha256=policy_sha), rounded=False)

    cells = _aggregate_cells(runs, config.confidence)
    baseline_cell = aggregate(baseline_runs, config.confidence)

    contrasts = compute_contrasts(runs, config.contrast_family)

    summary = _corpus_summary(config.rerun_label, cells, runs, coverage_loss)
    _write_outputs(
        config, corpus, cells, baseline_cell, contrasts, runs, baseline_runs,
        summary, planned, failures, policy_sha,
    )

    return EvaluationResult(
        config=config,
        policy=policy,
        cells=cells,
        baseline_cell=baseline_cell,
        contrasts=contrasts,
        runs=runs,
        baseline_runs=baseline_runs,
        planned=planned,
        completed=len(runs),
        failures=failures,
        coverage_loss_runs=coverage_loss,
        summary=summary,
    )


def _lost_coverage(plan: ProposedPlan, result, baseline: ProposedPlan) -> bool:
    base = set(baseline.actions)
    if not base:
        return False
    raw_cov = len(set(plan.actions) & base) / len(base)
    enforced_cov = len(set(result.enforced_actions) & base) / len(base)
    return enforced_cov < raw_cov


def _aggregate_cells(runs: Sequence[RunMetrics], confidence: float) -> dict[CellKey, CellSummary]:
    grouped: dict[CellKey, list[RunMetrics]] = {}
    for run in runs:
        grouped.setdefault((run.model_id, run.arm), []).append(run)
    return {key: aggregate(group, confidence) for key, group in sorted(grouped.items())}


def compute_contrasts(
    runs: Sequence[RunMetrics],
    family: Sequence[tuple[CellKey, CellKey]],
) -> list[ContrastResult]:
    """Paired contrasts over the declared family, Holm-adjusted once across it."""
    outcomes: dict[CellKey, dict[str, bool]] = {}
    for run in runs:
        outcomes.setdefault((run.model_id, run.arm), {})[run.incident_id] = run.violated
    contrasts = [
        paired_contrast(outcomes[cell_a], outcomes[cell_b], cell_a, cell_b)
        for cell_a, cell_b in family
    ]
    if contrasts:
        adjusted = holm_adjust([c.mcnemar_p for c in contrasts])
        for contrast, holm_p in zip(contrasts, adjusted):
            contrast.holm_p = holm_p
    return contrasts


def _corpus_summary(
    label: str,
    cells: Mapping[CellKey, CellSummary],
    runs: Sequence[RunMetrics],
    coverage_loss: int,
) -> dict:
    rule_totals: dict[str, int] = {}
    for cell in cells.values():
        for rule, count in cell.rule_counts.items():
            rule_totals[rule] = rule_totals.get(rule, 0) + count
    n = len(runs)
    return {
        "rerun_label": label,
        "cells": {
            f"{model}|{arm}": {
                "violation_rate": cell.violation_rate,
                "edit_rate": cell.edit_rate,
                "hard_per_run": cell.hard_per_run,
            }
            for (model, arm), cell in sorted(cells.items())
        },
        "rule_totals": dict(sorted(rule_totals.items())),
        "llm_runs": n,
        "llm_edit_rate": (sum(1 for r in runs if r.modified) / n) if n else 0.0,
        "removed_total": sum(r.edit_counts.get("remove", 0) for r in runs),
        "deferred_total": sum(r.edit_counts.get("defer", 0) for r in runs),
        "coverage_loss_runs": coverage_loss,
    }


# ---------------------------------------------------------------------------
# Output bundle
# ---------------------------------------------------------------------------

def _write_outputs(
    config: RunConfig,
    corpus: Corpus,
    cells: Mapping[CellKey, CellSummary],
    baseline_cell: CellSummary,
    contrasts: Sequence[ContrastResult],
    runs: Sequence[RunMetrics],
    baseline_runs: Sequence[RunMetrics],
    summary: dict,
    planned: int,
    failures: list[dict],
    policy_sha: str,
) -> None:
    from .util import present

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    with open(output_dir / "metrics_runs.jsonl", "w", encoding="utf-8") as fh:
        for run in list(runs) + list(baseline_runs):
            fh.write(json.dumps(present(run.to_json_obj()), sort_keys=True) + "\n")

    cell_objs = [cells[key].to_json_obj() for key in sorted(cells)]
    baseline_obj = baseline_cell.to_json_obj()
    baseline_obj["label"] = BASELINE_LABEL
    write_json(output_dir / "cell_summaries.json", {"cells": cell_objs, "baseline": baseline_obj})

    write_json(output_dir / "contrasts.json", {"contrasts": [c.to_json_obj() for c in contrasts]})

    write_json(output_dir / f"summary_{config.rerun_label}.json", summary)

    # Stability bands cover every labeled rerun present in the output dir,
    # including the one just written.
    summary_files = sorted(output_dir.glob("summary_*.json"))
    summaries = [read_json(p) for p in summary_files]
    labels = [p.stem.removeprefix("summary_") for p in summary_files]
    report = stability_report(summaries, labels)
    write_json(output_dir / "stability.json", report.to_json_obj())

    write_json(output_dir / "corpus_manifest.json", dict(sorted(corpus.digests.items())), rounded=False)

    manifest = build_manifest(
        [config.catalog_path, config.policy_path, config.mapping_rules_path],
        extra={
            "corpus_files": len(corpus.digests),
            "policy_sha256": policy_sha,
            "approval_mode": config.approval_mode,
            "confidence": config.confidence,
            "rerun_label": config.rerun_label,
            "run_accounting": {
                "planned_llm_runs": planned,
                "completed_llm_runs": len(runs),
                "failed_llm_runs": len(failures),
                "failures": failures,
                "planned_baselines": len(baseline_runs),
                "completed_baselines": len(baseline_runs),
            },
        },
    )
    write_json(output_dir / "manifest.json", manifest, rounded=False)
