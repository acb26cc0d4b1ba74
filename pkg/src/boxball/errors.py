"""Exception types shared by all modules."""


class BoxBallError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BoxBallError, ValueError):
    """A parameter lies outside the domain of the requested quantity."""


class CarrierNonConvergent(BoxBallError, RuntimeError):
    """The periodic carrier fixed-point iteration did not settle."""


class NonSaturatedSpectrum(BoxBallError, ValueError):
    """An energy spectrum was cut before the largest soliton size."""


class UndefinedPseudoenergy(BoxBallError, ValueError):
    """A pseudoenergy needs a soliton species that is absent from the state."""


class InvalidTemperature(BoxBallError, ValueError):
    """Two-temperature parameters that do not describe a density below 1/2."""


class DivergentQuantity(BoxBallError, ArithmeticError):
    """A series or closed form diverges at the requested parameters."""


class SingularSystem(BoxBallError, ArithmeticError):
    """A linear solve failed."""


class RootNotBracketed(BoxBallError, ArithmeticError):
    """A monotone root search could not bracket its target."""


class DegenerateLeadingEigenvalue(BoxBallError, ArithmeticError):
    """The leading eigenvalue of a transfer matrix is not isolated."""


class ExcessExclusions(BoxBallError, RuntimeError):
    """Too many Monte Carlo samples had to be excluded."""


class OutsideScgfDomain(DivergentQuantity, DomainError):
    """The counting field pushes the fugacity to or past the divergence at 1."""
