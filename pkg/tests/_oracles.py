"""Independent reference computations used by the tests.

Everything here is built from scipy special functions and smooth
fixed-order quadrature after an exact change of variables, so no code
path is shared with the package's cell-based rules.
"""

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import roots_legendre


def c_h_oracle(H: float) -> float:
    """Kernel constant through the Gamma-function identity for Beta."""
    beta = gamma_fn(2 - 2 * H) * gamma_fn(H - 0.5) / gamma_fn(1.5 - H)
    return float(np.sqrt(H * (2 * H - 1) / beta))


def kernel_oracle(H: float, t: float, s: float, n_quad: int = 200) -> float:
    """K_H(t, s) with the r-integral made smooth by v = (r - s)^{H - 1/2}.

    The substitution removes the endpoint singularity exactly, leaving a
    C^inf integrand for Gauss-Legendre.
    """
    if t <= s:
        return 0.0
    p = H - 0.5
    vmax = (t - s) ** p
    x, w = roots_legendre(n_quad)
    v = 0.5 * vmax * (x + 1.0)
    integrand = (s + v ** (1.0 / p)) ** p
    inner = 0.5 * vmax * np.sum(w * integrand) / p
    return c_h_oracle(H) * s ** (0.5 - H) * inner


def sup_deviation(paths: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-path sup-norm distance to a reference path."""
    return np.max(np.linalg.norm(paths - reference[None, :, :], axis=2), axis=1)
