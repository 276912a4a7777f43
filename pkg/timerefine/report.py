"""
Run reports for timerefine.

A run report is a JSON document describing one CLI invocation: the
configuration it ran with, what the pipeline found for every label and,
for ``refine``, the chosen plan and the entropy before and after. The
schema is versioned by ``schema_version``; keys are sorted and floats are
rounded so identical runs produce identical bytes.

``format_candidates`` renders the per-label summary that ``analyze``
prints.
"""

from __future__ import annotations

import json
import math
from typing import Any, Dict, List, Optional, Sequence

from .circstats import TestResult
from .config import RefinementConfig
from .search import RefinementCandidate, RefinementPlan, plan_to_dict

SCHEMA_VERSION = 1
FLOAT_DIGITS = 10


def _stable(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return None
        return float(f"{value:.{FLOAT_DIGITS}g}")
    if isinstance(value, dict):
        return {str(k): _stable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_stable(v) for v in value]
    if hasattr(value, "item"):
        return _stable(value.item())
    return value


def _test(result: Optional[TestResult]) -> Optional[Dict[str, Any]]:
    if result is None:
        return None
    out = {
        "statistic": result.statistic,
        "p_value": result.p_value,
        "critical_value": result.critical_value,
        "reject": result.reject,
        "n": result.n,
    }
    if result.statistic_degrees is not None:
        out["statistic_degrees"] = result.statistic_degrees
    return out


def candidate_summary(c: RefinementCandidate) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "label": c.label,
        "n_events": c.n_events,
        "stage": c.stage.value,
        "eligible": c.eligible,
        "error": c.error,
        "rao": _test(c.rao),
        "dip": _test(c.dip),
    }
    if c.model_selection is not None:
        out["bic"] = [
            {"m": e.m, "bic": e.bic, "log_likelihood": e.log_likelihood, "n_parameters": e.n_parameters, "n": e.n}
            for e in c.model_selection.entries
        ]
        out["chosen_m"] = c.model_selection.chosen
        out["components"] = [
            {"weight": comp.weight, "mu": comp.mu, "mu_hours": comp.mu_hours, "kappa": comp.kappa}
            for comp in c.model.components
        ]
    if c.assignment is not None:
        out["hour_ranges"] = [None if r is None else list(r) for r in c.assignment.hour_ranges()]
        out["cluster_sizes"] = c.assignment.sizes()
    if c.watson:
        out["watson"] = [_test(w) for w in c.watson]
    if c.relabeling is not None:
        out["refined_labels"] = c.relabeling.refined_labels
    if c.verdict is not None:
        out["information_gain"] = c.verdict.information_gain
        out["significant_activities"] = [
            {"label": label, "p_value": p} for label, p in c.verdict.p_values if p < c.verdict.alpha
        ]
        out["control_flow_passed"] = c.verdict.passed
    return out


def build_report(
    command: str,
    config: RefinementConfig,
    inputs: Dict[str, Any],
    candidates: Sequence[RefinementCandidate],
    plan: Optional[RefinementPlan] = None,
    outputs: Optional[Dict[str, str]] = None,
) -> Dict[str, Any]:
    report: Dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config.to_dict(),
        "inputs": dict(inputs),
        "candidates": [candidate_summary(c) for c in candidates],
        "outputs": dict(outputs or {}),
    }
    if plan is not None:
        report["plan"] = plan_to_dict(plan)
        report["entropy"] = {"before": plan.entropy_before, "after": plan.entropy_after}
    return _stable(report)


def to_json(report: Dict[str, Any]) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _fmt_p(result: Optional[TestResult]) -> str:
    if result is None or result.p_value is None:
        return "-"
    return f"{result.p_value:.4f}"


def format_candidates(candidates: Sequence[RefinementCandidate]) -> str:
    """Human-readable per-label summary."""
    if not candidates:
        return "No labels to analyse."
    lines: List[str] = []
    for c in candidates:
        lines.append(f"{c.label} ({c.n_events} events): {c.stage.value}")
        if c.error:
            lines.append(f"  error: {c.error}")
        if c.rao is not None:
            lines.append(f"  Rao U = {c.rao.statistic_degrees:.2f} deg, p = {_fmt_p(c.rao)}")
        if c.dip is not None:
            lines.append(f"  dip = {c.dip.statistic:.4f}, p = {_fmt_p(c.dip)}")
        if c.model_selection is not None:
            sweep = ", ".join(f"m={e.m}: {e.bic:.2f}" for e in c.model_selection.entries)
            lines.append(f"  BIC {sweep} -> m = {c.model_selection.chosen}")
        if c.model is not None and c.model_selection.chosen >= 2:
            ranges = c.assignment.hour_ranges() if c.assignment is not None else []
            for k, comp in enumerate(c.model.components):
                span = ranges[k] if k < len(ranges) and ranges[k] is not None else None
                span_text = f", hours [{span[0]:.2f}-{span[1]:.2f}]" if span else ""
                lines.append(
                    f"  cluster {k + 1}: alpha = {comp.weight:.2f}, mu = {comp.mu:.2f}, kappa = {comp.kappa:.2f}{span_text}"
                )
        for k, w in enumerate(c.watson, start=1):
            lines.append(f"  Watson U2 cluster {k}: {w.statistic:.4f}")
        if c.verdict is not None:
            lines.append(
                f"  IG = {c.verdict.information_gain:.4f}, "
                f"{len(c.verdict.significant_activities)} significantly different activities"
            )
    return "\n".join(lines)


def format_plan(plan: RefinementPlan) -> str:
    lines = [f"Strategy {plan.strategy.value}, k = {plan.k}:"]
    if not plan.steps:
        lines.append("  no refinement applied")
    for i, step in enumerate(plan.steps, start=1):
        ranges = ", ".join(f"[{r[0]:.2f}-{r[1]:.2f}]" for r in step.hour_ranges if r is not None)
        lines.append(f"  {i}. {step.label} -> {', '.join(step.relabeling.refined_labels)} {ranges} (gain {step.gain:.4f})")
    lines.append(f"Entropy {plan.entropy_before:.3f} -> {plan.entropy_after:.3f} bits, "
                 f"cumulative gain {plan.cumulative_gain:.4f}")
    if plan.stopped_early:
        lines.append("Stopped early: no remaining refinement has positive gain.")
    return "\n".join(lines)
