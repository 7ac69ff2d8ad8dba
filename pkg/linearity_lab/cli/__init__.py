"""Scenario runners and the ``linearity-lab`` command line."""

from linearity_lab.cli.main import main, run
from linearity_lab.cli.scenarios import (
    run_particle3d,
    run_projection_demo,
    run_scenario,
    verify_run_report,
)

__all__ = [
    "main",
    "run",
    "run_particle3d",
    "run_projection_demo",
    "run_scenario",
    "verify_run_report",
]
