"""Activity diagram virtual machine.

Parses a textual activity-diagram format, validates it against the supported
subset, compiles it into queues, paths and token engines, and runs it with a
deterministic scheduler. A second, offer-based interpreter is included for
cross-checking execution traces.
"""

from .model import ActivityModel, Diagram, parse_activity
from .validate import ValidationReport, validate
from .compiler import ActivityFactory, ActivityRuntime, dump_runtime
from .runtime import RunResult, VirtualMachine, run_activity
from .oracle import oracle_run
from .equivalence import compare_essential_traces

__all__ = [
    "ActivityFactory",
    "ActivityModel",
    "ActivityRuntime",
    "Diagram",
    "RunResult",
    "ValidationReport",
    "VirtualMachine",
    "compare_essential_traces",
    "dump_runtime",
    "oracle_run",
    "parse_activity",
    "run_activity",
    "validate",
]
