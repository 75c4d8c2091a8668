"""Sequential monitoring of parameter changes in AR, GARCH(1,1) and mean-shift models."""

from .errors import InvalidArgument, NumericalError
from .models import AR, GARCH11, ChangeScenario, MeanShift, ModelSpec, simulate
from .qmle import FitResult, Window, fit, loglik, q_term

__all__ = [
    "AR", "GARCH11", "MeanShift", "ModelSpec", "ChangeScenario", "simulate",
    "Window", "FitResult", "fit", "loglik", "q_term",
    "InvalidArgument", "NumericalError",
]
__version__ = "0.1.0"
