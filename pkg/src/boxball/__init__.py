"""Box-ball system dynamics, exact hydrodynamic predictions and Monte Carlo estimators."""

from ._backend import BACKEND
from .dynamics import Configuration, energies, evolve, evolve_periodic
from .errors import BoxBallError, DomainError

__version__ = "0.1.0"

__all__ = ["BACKEND", "Configuration", "energies", "evolve", "evolve_periodic",
           "BoxBallError", "DomainError", "__version__"]
