from typing import Dict, List, Optional, Sequence


class PoissonSaturationError(Exception):
    """Base class of all errors raised by ``poisson_saturation``."""


class ExpressionSyntaxError(PoissonSaturationError, ValueError):
    """An expression could not be parsed.

    Attributes:
        position: 0-based character offset of the offending token.
        text: the full expression text.
    """
    def __init__(self, message: str, position: int, text: str):
        super().__init__(f'{message} at position {position}: {text!r}')
        self.position = position
        self.text = text


class UnknownIdentifierError(ExpressionSyntaxError):
    """An identifier is neither a variable, a function nor a constant."""


class ExpressionEvalError(PoissonSaturationError, ArithmeticError):
    """Evaluation produced a non-finite value."""
    def __init__(self, message: str, point: Sequence[float]):
        super().__init__(f'{message} at point {tuple(float(p) for p in point)}')
        self.point = tuple(float(p) for p in point)


class RankDefectError(PoissonSaturationError):
    """A rank differs from the value required for a smooth construction."""
    def __init__(self, message: str, expected: Optional[int] = None, found: Optional[int] = None):
        super().__init__(message)
        self.expected = expected
        self.found = found


class NotPoissonError(PoissonSaturationError):
    """A Dirac space is not the graph of a bivector: it meets ``V ⊕ 0`` in ``defect`` dimensions."""
    def __init__(self, defect: int):
        super().__init__(f'Dirac space meets the tangent block in dimension {defect}')
        self.defect = defect


class ImmersionError(RankDefectError):
    """A chart Jacobian is not injective."""


class NotRegularError(RankDefectError):
    """The π-orthogonal of a submanifold does not have constant rank on the sampled set."""
    def __init__(self, message: str, witnesses: Optional[Dict[int, List[tuple]]] = None):
        super().__init__(message)
        self.witnesses = witnesses or {}


class PrerequisiteError(PoissonSaturationError):
    """The input does not satisfy the prerequisites of the requested construction."""


class SceneError(PoissonSaturationError, ValueError):
    """A scene file is malformed."""
    def __init__(self, message: str, line: Optional[int] = None, position: Optional[int] = None):
        loc = '' if line is None else f' (line {line})'
        super().__init__(f'{message}{loc}')
        self.line = line
        self.position = position
