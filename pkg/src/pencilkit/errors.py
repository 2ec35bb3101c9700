"""Exception hierarchy shared by every module."""


class PencilkitError(Exception):
    pass


class ExprSyntaxError(PencilkitError, SyntaxError):
    """Malformed expression text.

    Carries the offending character offset and the tokens that would have
    been accepted there.
    """

    def __init__(self, message, text="", position=0, expected=()):
        self.text = text
        self.position = position
        self.expected = tuple(expected)
        detail = message
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        detail += f" at position {position}"
        if text:
            detail += f"\n  {text}\n  {' ' * position}^"
        super().__init__(detail)


class UnknownIdentifier(PencilkitError, KeyError):
    def __init__(self, name, known=()):
        self.name = name
        self.known = tuple(known)
        super().__init__(name)

    def __str__(self):
        if self.known:
            return f"unknown identifier {self.name!r}; known: {', '.join(self.known)}"
        return f"unknown identifier {self.name!r}"


class EvalDomainError(PencilkitError, ArithmeticError):
    """Division by zero, log of a non-positive number or sqrt of a negative one."""

    def __init__(self, point, message="expression not defined at point"):
        self.point = tuple(float(v) for v in point)
        super().__init__(f"{message}: {self.point}")


class SingularMetric(PencilkitError):
    def __init__(self, witness=None, message="metric is degenerate"):
        self.witness = None if witness is None else tuple(float(v) for v in witness)
        if self.witness is not None:
            message = f"{message} at {self.witness}"
        super().__init__(message)


class SingularPencil(SingularMetric):
    pass


class SingularInducedMetric(SingularMetric):
    pass


class DimensionError(PencilkitError, ValueError):
    pass


class PreconditionFailed(PencilkitError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class NotAutomorphism(PencilkitError):
    def __init__(self, witness=None, min_det=None):
        self.witness = witness
        self.min_det = min_det
        super().__init__(f"T operator is not invertible (min |det T| = {min_det}) at {witness}")


class NoUnity(PencilkitError):
    pass


class NotInvertibleEulerMultiplication(PencilkitError):
    pass


class AsymmetryDetected(PencilkitError):
    pass


class MissingPotential(PencilkitError):
    pass


class RankDeficient(PencilkitError):
    pass


class NotDistinguished(PencilkitError):
    def __init__(self, witness=None, residual=None):
        self.witness = witness
        self.residual = residual
        super().__init__(f"submanifold is not distinguished (residual {residual}) at {witness}")


class ClosureFailed(PencilkitError):
    def __init__(self, hypothesis, witness=None, residual=None):
        self.hypothesis = hypothesis
        self.witness = witness
        self.residual = residual
        super().__init__(f"closure hypothesis {hypothesis} failed (residual {residual}) at {witness}")


class ConfigError(PencilkitError):
    pass
