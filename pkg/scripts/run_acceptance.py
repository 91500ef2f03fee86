#!/usr/bin/env python3
"""Run the acceptance gates and show one verdict line per criterion."""

import pathlib
import sys

import pytest

if __name__ == "__main__":
    target = pathlib.Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
    sys.exit(pytest.main([str(target), "-v", *sys.argv[1:]]))
