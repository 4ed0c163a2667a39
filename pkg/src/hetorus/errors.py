"""Exception hierarchy shared by every module of the package."""


class HetorusError(Exception):
    """Base class for all package errors."""


class DegreeOverflow(HetorusError):
    pass


class BidegreeMismatch(HetorusError):
    pass


class ZeroVolumeForm(HetorusError):
    pass


class DegenerateMetric(HetorusError):
    pass


class RankMismatch(HetorusError):
    pass


class ShapeMismatch(HetorusError):
    pass


class GridMismatch(HetorusError):
    pass


class NonFiniteInput(HetorusError):
    pass


class NotPositiveDefinite(HetorusError):
    def __init__(self, point, min_eigenvalue):
        self.point = point
        self.min_eigenvalue = min_eigenvalue
        super().__init__(f"form not positive definite at grid point {point} "
                         f"(min eigenvalue {min_eigenvalue:.3e})")


class NotDdbarClosed(HetorusError):
    def __init__(self, residual, tolerance):
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(f"sup|ddbar Omega| = {residual:.3e} exceeds {tolerance:.3e}")


class NotWeaklyPositive(HetorusError):
    def __init__(self, witness, density=None):
        self.witness = witness
        self.density = density
        super().__init__(f"weak positivity violated (density {density})")


class PositivityLostAtEpsilon(HetorusError):
    pass


class InvalidAuxiliaryPotential(HetorusError):
    pass


class IncompatibleRightHandSide(HetorusError):
    pass


class SolverDiverged(HetorusError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"solver stopped after {iterations} iterations "
                         f"with sup residual {residual:.3e}")


class InvalidSpec(HetorusError):
    pass


class NotDdbarClosedBetaStar(HetorusError):
    pass


class InvalidPower(HetorusError):
    pass


class NotWeaklyHE(HetorusError):
    pass


class NotHermiteEinstein(HetorusError):
    pass


class NonHolomorphicSection(HetorusError):
    pass


class AmbientNotHE(HetorusError):
    pass


class NotASubobject(HetorusError):
    pass


class ZeroRank(HetorusError):
    pass


class ConfigError(HetorusError):
    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(path, reason)

    def __str__(self):
        return f"{self.path}: {self.reason}"
