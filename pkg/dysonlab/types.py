from typing import Callable

import numpy as np

# Maps the (real) eigenvalues of a Hermitian element to function values
ScalarFunction = Callable[[np.ndarray], np.ndarray]
