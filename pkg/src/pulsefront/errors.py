"""Exception hierarchy shared across the toolkit.

Configuration problems derive from ScenarioError (CLI exit code 1),
numerical failures from SolverError (CLI exit code 2).
"""


class PulsefrontError(Exception):
    pass


class ScenarioError(PulsefrontError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BadPeriod(ScenarioError):
    pass


class PositivityViolation(ScenarioError):
    pass


class SolverError(PulsefrontError):
    pass


class NoConvergence(SolverError):
    pass


class PositivityLoss(SolverError):
    pass


class NotPropagating(SolverError):
    pass


class BracketFailure(SolverError):
    pass


class QuadratureUnderResolved(SolverError):
    pass


class StencilNotMonotone(SolverError):
    pass


class IterationStalled(SolverError):
    pass


class MonotonicityBroken(SolverError):
    pass


class NotConverged(SolverError):
    pass


class CollapsedToZero(SolverError):
    pass


class JacobianSingular(SolverError):
    pass


class Diverged(SolverError):
    pass


class BranchLost(SolverError):
    pass


class BlowUp(SolverError):
    pass


class BoundaryContamination(SolverError):
    pass


class NoFront(SolverError):
    pass


class FitRejected(SolverError):
    pass


class ProbeOutOfRange(SolverError):
    pass


class NeverCrossed(SolverError):
    pass


class WindowTooShort(SolverError):
    pass


class SimulationUnconverged(SolverError):
    pass
