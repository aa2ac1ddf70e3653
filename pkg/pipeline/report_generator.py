"""
Text report generator for verifier runs.
"""

from typing import List

from wkam.verifier import StageRecord, Verdict, VerifierReport

VERDICT_ICONS = {
    Verdict.GRAPH: "✅",
    Verdict.NOT_GRAPH: "❌",
    Verdict.NOT_EXACT: "❌",
    Verdict.NOT_INVARIANT: "❌",
    Verdict.INCONCLUSIVE: "❔",
}


def _number(value) -> str:
    return "n/a" if value is None else f"{value:.6g}"


class ReportGenerator:
    """Verifier report generator."""

    def __init__(self, report: VerifierReport):
        self.report = report

    def generate_summary_report(self) -> str:
        """Verdict, levels and the stage that decided it."""
        report = self.report
        lines = []
        lines.append("=" * 70)
        lines.append("🧭 GRAPH VERIFIER - SUMMARY")
        lines.append("=" * 70)
        lines.append(f"{VERDICT_ICONS[report.verdict]} Verdict: {report.verdict.value} (exit {report.exit_code})")
        lines.append(f"📐 Grid size n: {report.n}")
        lines.append(f"⚡ Energy level k: {_number(report.k_level)}")
        lines.append(f"📉 Critical value c: {_number(report.c_value)}")
        lines.append(f"📏 Hausdorff distance graph vs curve: {_number(report.hausdorff_graph_vs_curve)}")
        if report.failed_stage:
            lines.append(f"🚧 Failed stage: {report.failed_stage}")
        for note in report.notes:
            lines.append(f"📝 {note}")
        lines.append("=" * 70)
        return "\n".join(lines)

    def _format_stage(self, stage: StageRecord) -> str:
        mark = "✅" if stage.passed else ("❌" if stage.mandatory else "⚠️ ")
        margin = "" if stage.margin is None else f"  margin {stage.margin:+.3e}"
        suffix = "" if stage.mandatory else "  (informational)"
        return f"{mark} {stage.name:<24}{margin}{suffix}"

    def generate_stage_report(self) -> str:
        """One line per stage, plus the error message of a stage that raised."""
        lines = []
        lines.append("\n" + "=" * 70)
        lines.append("🔬 STAGES")
        lines.append("=" * 70)
        for stage in self.report.stages:
            lines.append(self._format_stage(stage))
            if "error" in stage.details:
                lines.append(f"      └─ {stage.details['error']}: {stage.details.get('message', '')}")
        lines.append("=" * 70)
        return "\n".join(lines)

    def generate_full_report(self) -> str:
        parts: List[str] = [self.generate_summary_report(), self.generate_stage_report()]
        return "\n".join(parts) + "\n"
