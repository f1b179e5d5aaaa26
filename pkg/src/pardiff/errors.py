"""Exception hierarchy shared by every module.

Each error carries a stable ``exit_code`` so the command line front end can
map failures onto its exit-code contract without string matching.
"""

from __future__ import annotations


class PardiffError(Exception):
    """Base class for all package errors."""

    exit_code = 4


# symbol-core
class NonUnitDirection(PardiffError):
    """Direction vector passed where a unit vector is required."""


class SingularZ(PardiffError):
    """The reduced diffusion block Z(omega) is not invertible."""


class SingularS0(PardiffError):
    """The symmetrizer S0 at the reference state is singular."""


class DomainViolation(PardiffError):
    """A state sample lies outside the admissible set."""


class SystemShapeError(PardiffError):
    """A system description has inconsistent dimensions."""


class AssumptionFailure(PardiffError):
    """A structural assumption required by an operation does not hold."""


# sk-kalman
class ShapeMismatch(PardiffError):
    """Matrix arguments have incompatible shapes."""


class EigenFailure(PardiffError):
    """An eigenvalue computation did not produce usable output."""


class HypothesisViolation(PardiffError):
    """A hypothesis of the block reduction check does not hold."""

    def __init__(self, hypothesis: str, detail: str = ""):
        self.hypothesis = hypothesis
        super().__init__(f"hypothesis '{hypothesis}' violated" + (f": {detail}" if detail else ""))


# lyapunov
class SkFails(PardiffError):
    """The SK condition fails, so no dissipative functional exists."""

    exit_code = 1


class NoFeasibleEpsilons(PardiffError):
    """Weight bisection was exhausted without certification."""

    def __init__(self, rho: float, reason: str):
        self.rho = rho
        self.reason = reason
        super().__init__(f"no feasible weights: {reason} at rho={rho:.6g}")


class NonPositiveRho(PardiffError):
    """A frequency radius must be strictly positive."""


class InsufficientGrid(PardiffError):
    """The frequency grid is too small for the requested fit."""


# littlewood-paley
class BlockOutOfRange(PardiffError):
    """Requested dyadic block index is outside the resolvable range."""


class FieldFormatError(PardiffError):
    """A serialized field could not be decoded."""


# spectral-sim
class DegenerateWindow(PardiffError):
    """The fit window contains too few usable samples."""

    exit_code = 5


class CflViolation(PardiffError):
    """Time step exceeds the stability limit of the explicit terms."""

    exit_code = 6


class BlowupDetected(PardiffError):
    """Solution norm grew beyond the allowed factor."""

    exit_code = 7


# model-zoo
class ParameterViolation(PardiffError):
    """Model parameters violate the structural inequalities."""


class AssumptionGViolation(PardiffError):
    """Thermodynamic or transport inequalities fail for the MHD model."""

    def __init__(self, item: str, detail: str = ""):
        self.item = item
        super().__init__(f"{item} fails" + (f": {detail}" if detail else ""))


# cli
class ConfigParseError(PardiffError):
    """A configuration document is malformed or has invalid values."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class ModelUnknown(PardiffError):
    """A configuration names a model that is not registered."""

    exit_code = 3
