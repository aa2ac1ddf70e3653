"""
JSON-lines form of a VerifierReport.

One object per stage, each with a "stage" field, then a closing "verdict" line.
"""

import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from wkam.verifier import StageRecord, Verdict, VerifierReport

VERDICT_LINE = "verdict"


def plain(value: Any) -> Any:
    """Convert numpy scalars and arrays, tuples and enums to JSON types. Non-finite floats stay as Infinity or NaN."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def report_to_records(report: VerifierReport) -> List[Dict[str, Any]]:
    records = [
        {"stage": s.name, "passed": bool(s.passed), "margin": plain(s.margin), "mandatory": bool(s.mandatory),
         "details": plain(s.details)}
        for s in report.stages
    ]
    records.append({
        "stage": VERDICT_LINE,
        "verdict": report.verdict.value,
        "k_level": plain(report.k_level),
        "c_value": plain(report.c_value),
        "hausdorff_graph_vs_curve": plain(report.hausdorff_graph_vs_curve),
        "n": report.n,
        "failed_stage": report.failed_stage,
        "notes": list(report.notes),
    })
    return records


def write_report_jsonl(path: Union[str, Path], report: VerifierReport) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as f:
        for record in report_to_records(report):
            f.write(json.dumps(record) + "\n")
    return path


def read_report_jsonl(path: Union[str, Path]) -> VerifierReport:
    with open(path) as f:
        records = [json.loads(line) for line in f if line.strip()]
    if not records or records[-1].get("stage") != VERDICT_LINE:
        raise ValueError(f"{path}: missing closing verdict line")
    final = records[-1]
    stages = [StageRecord(r["stage"], r["passed"], r["margin"], r["details"], r["mandatory"]) for r in records[:-1]]
    return VerifierReport(
        verdict=Verdict(final["verdict"]),
        stages=stages,
        k_level=final["k_level"],
        c_value=final["c_value"],
        hausdorff_graph_vs_curve=final["hausdorff_graph_vs_curve"],
        n=final["n"],
        failed_stage=final["failed_stage"],
        notes=final["notes"],
    )
