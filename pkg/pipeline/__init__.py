"""Batch front-end: run configuration, artifacts and verifier reports."""

from pipeline.config_file import RunConfig, load_run_config
from pipeline.report_generator import ReportGenerator
from pipeline.report_io import read_report_jsonl, write_report_jsonl

__all__ = ['RunConfig', 'load_run_config', 'ReportGenerator', 'read_report_jsonl', 'write_report_jsonl']
