"""sandiag: integrated database and SAN root-cause diagnosis.

Builds annotated plan graphs from monitoring data, detects query slowdowns
against run history, drills down to degraded operators and the SAN
components they depend on, matches a symptoms database against the
evidence, and rolls impact back up into a ranked cause report.  A bundled
fault-injection simulator provides datasets with known ground truth.
"""

from .engine import DiagnosisReport, EngineConfig, diagnose, render_report
from .errors import SanDiagError
from .model import AnnotatedPlanGraph, build_apg, dependency_closure, plan_fingerprint

__version__ = "0.1.0"

__all__ = [
    "AnnotatedPlanGraph",
    "DiagnosisReport",
    "EngineConfig",
    "SanDiagError",
    "build_apg",
    "dependency_closure",
    "diagnose",
    "plan_fingerprint",
    "render_report",
    "__version__",
]
