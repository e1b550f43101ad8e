"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class AdvmError(Exception):
    """Base class for every error raised by the package."""


class ParseError(AdvmError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        super().__init__(f"{where}{message}")


class ExprSyntaxError(AdvmError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"at {position}: {message}")


class EvaluationError(AdvmError):
    """Raised while evaluating a guard, join specification or join criteria."""


class GuardOnControlToken(EvaluationError):
    pass


class FieldMissing(EvaluationError):
    pass


class TypeMismatch(EvaluationError):
    pass


class CompileError(AdvmError):
    pass


class ExecutionError(AdvmError):
    """Any failure during a run; surfaced as an ExecutionError trace event."""


class AlreadyActive(ExecutionError):
    pass


class NotActive(ExecutionError):
    pass


class ArityMismatch(ExecutionError):
    pass


class ArgumentTypeMismatch(ExecutionError):
    pass


class BehaviorUnbound(ExecutionError):
    pass


class BehaviorArityMismatch(ExecutionError):
    pass


class ExclusivityViolated(ExecutionError):
    pass


class RaceDetected(ExecutionError):
    pass
