#!/usr/bin/env python3
"""
Script for weak KAM runs.
Usage: python run_wkam.py <command> --config <run.ini> [--out DIR] [--plot]
"""

from pipeline.cli import main

if __name__ == "__main__":
    main()
