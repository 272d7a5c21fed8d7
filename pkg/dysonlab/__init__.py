__version__ = "0.1.0"

from dysonlab.model import ModelSpec, model_from_dict  # noqa: E402
from dysonlab.solver import boundary_value, solve_at  # noqa: E402
from dysonlab.density import scan  # noqa: E402

__all__ = ["ModelSpec", "model_from_dict", "solve_at", "boundary_value", "scan"]
