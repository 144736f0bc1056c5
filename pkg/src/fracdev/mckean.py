"""Mean-field dynamics with small fractional noise.

Implements the interacting-particle Euler scheme for

    dX_t = b(t, X_t, law(X_t)) dt + eps^H sigma(t, law(X_t)) dB^H_t,

its deterministic limit ODE, the controlled (shifted) equation with the
measure frozen at the uncontrolled law, Wiener integrals against fBm,
empirical Wasserstein distances, and exponential Girsanov weights.

Coefficient conventions: ``b(t, x, mu)`` accepts a batch ``x`` of shape
(N, d) and an :class:`EmpiricalMeasure`; ``sigma(t, mu)`` is a (d, d)
matrix depending on time and the measure only, never the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _rng
from .errors import DivergenceError, UnsupportedModelError
from .fbm import FbmBundle, FbmEnsemble, check_hurst, sample_volterra, volterra_map
from .grids import SamplePath, TimeGrid
from .rkhs import ControlL2, rh_density

__all__ = [
    "EmpiricalMeasure",
    "CoefficientModel",
    "EnsembleResult",
    "ex_clt_model",
    "pure_noise_model",
    "linear_meanfield_model",
    "make_model",
    "MODEL_FACTORIES",
    "limit_ode",
    "wiener_integral",
    "solve_mckean",
    "solve_controlled",
    "empirical_wasserstein",
    "girsanov_weight",
    "girsanov_log_weights",
    "shift_ensemble",
]


@dataclass
class EmpiricalMeasure:
    """Equal-weight atom cloud standing in for a law."""

    atoms: np.ndarray  # (N, d)

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    def mean_of(self, fn: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
        """Atom average of ``fn`` (identity when ``fn`` is None)."""
        vals = self.atoms if fn is None else fn(self.atoms)
        return np.mean(vals, axis=0)


@dataclass
class CoefficientModel:
    """Drift/diffusion pair with the metadata the asymptotics need.

    ``lip_bound(t)`` is the declared non-decreasing Lipschitz bound for
    both coefficients; ``grad_b`` and ``lions_b`` are the closed-form
    state and measure derivatives when the family provides them.
    ``zero_drift`` promises b = 0 with a law-independent sigma, which
    unlocks vectorized solves and closed-form endpoint rates.
    """

    name: str
    dim: int
    b: Callable
    sigma: Callable
    grad_b: Callable | None = None
    lions_b: Callable | None = None
    lip_bound: Callable[[float], float] = lambda t: 1.0
    sigma_holder: float = 1.0
    wasserstein_order: float = 2.0
    zero_drift: bool = False

    def require_gradients(self, lions: bool = False) -> None:
        if self.grad_b is None:
            raise UnsupportedModelError(f"model '{self.name}' does not define grad_b")
        if lions and self.lions_b is None:
            raise UnsupportedModelError(f"model '{self.name}' does not define lions_b")


@dataclass
class EnsembleResult:
    """Simulated particle system plus the noise that drove it."""

    grid: TimeGrid
    eps: float
    model: CoefficientModel
    paths: np.ndarray        # (N, n_steps + 1, d)
    noise: FbmEnsemble

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def path(self, i: int) -> SamplePath:
        return SamplePath(self.grid, self.paths[i])

    def bundle(self, i: int) -> FbmBundle:
        return self.noise.bundle(i)

    def law(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.paths[:, k, :])

    @property
    def empirical_law_per_step(self) -> list[EmpiricalMeasure]:
        return [self.law(k) for k in range(self.grid.n_steps + 1)]


# --------------------------------------------------------------------------
# model families
# --------------------------------------------------------------------------


def ex_clt_model(
    f: Callable,
    phi: Callable,
    grad_f: Callable,
    grad_phi: Callable,
    dim: int = 1,
    lip_bound: Callable[[float], float] = lambda t: 1.0,
    sigma0: float = 1.0,
    name: str = "ex_clt",
) -> CoefficientModel:
    """Drift family b(t, x, mu) = f(t, x + \\int phi d mu) with closed-form
    state gradient ``grad f`` and measure (Lions) derivative
    ``grad f . grad phi``; constant diffusion ``sigma0 * I``.

    ``f(t, y)`` and ``phi(u)`` must be vectorized over row batches;
    ``grad_f(t, y)`` and ``grad_phi(u)`` return (d, d) matrices for a
    single point.
    """
    sig = sigma0 * np.eye(dim)

    def b(t, x, mu):
        shift = mu.mean_of(phi)
        return f(t, np.atleast_2d(x) + shift)

    def sigma(t, mu):
        return sig

    def grad_b(t, x, mu):
        return grad_f(t, x + mu.mean_of(phi))

    def lions_b(t, x, mu, y):
        return grad_f(t, x + mu.mean_of(phi)) @ grad_phi(y)

    return CoefficientModel(
        name=name,
        dim=dim,
        b=b,
        sigma=sigma,
        grad_b=grad_b,
        lions_b=lions_b,
        lip_bound=lip_bound,
    )


def pure_noise_model(dim: int = 1, sigma0: float = 1.0) -> CoefficientModel:
    """b = 0, sigma = sigma0 * I; the Gaussian reference system."""
    sig = sigma0 * np.eye(dim)
    zero = np.zeros((dim, dim))
    return CoefficientModel(
        name="pure_noise",
        dim=dim,
        b=lambda t, x, mu: np.zeros_like(np.atleast_2d(x)),
        sigma=lambda t, mu: sig,
        grad_b=lambda t, x, mu: zero,
        lions_b=lambda t, x, mu, y: zero,
        lip_bound=lambda t: max(1.0, sigma0),
        zero_drift=True,
    )


def linear_meanfield_model(
    beta: float = -1.0, alpha: float = 0.1, sigma0: float = 1.0, dim: int = 1
) -> CoefficientModel:
    """b(t, x, mu) = beta * (x + alpha * mean(mu)), sigma = sigma0 * I."""
    model = ex_clt_model(
        f=lambda t, y: beta * y,
        phi=lambda u: alpha * u,
        grad_f=lambda t, y: beta * np.eye(dim),
        grad_phi=lambda u: alpha * np.eye(dim),
        dim=dim,
        lip_bound=lambda t: max(abs(beta) * max(1.0, alpha), sigma0),
        sigma0=sigma0,
        name="linear_meanfield",
    )
    return model


def _sin_ex_clt_model(
    fa: float = -1.0, fb: float = 0.0, alpha: float = 0.1, sigma0: float = 1.0
) -> CoefficientModel:
    """Scalar family f(t, y) = fa*y + fb*sin(y), phi(u) = alpha*u.

    With fb = 0 this is the linear mean-field model; fb != 0 switches on
    the curvature that makes the Gaussian-limit coupling error visible.
    """
    return ex_clt_model(
        f=lambda t, y: fa * y + fb * np.sin(y),
        phi=lambda u: alpha * u,
        grad_f=lambda t, y: np.atleast_2d(fa + fb * np.cos(np.sum(y))),
        grad_phi=lambda u: np.atleast_2d(alpha),
        dim=1,
        lip_bound=lambda t: max((abs(fa) + abs(fb)) * max(1.0, alpha), sigma0),
        sigma0=sigma0,
        name="ex_clt",
    )


MODEL_FACTORIES: dict[str, Callable[..., CoefficientModel]] = {
    "pure_noise": pure_noise_model,
    "linear_meanfield": linear_meanfield_model,
    "ex_clt": _sin_ex_clt_model,
}


def make_model(name: str, **params) -> CoefficientModel:
    if name not in MODEL_FACTORIES:
        raise ValueError(f"unknown model '{name}'; known: {sorted(MODEL_FACTORIES)}")
    return MODEL_FACTORIES[name](**params)


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------


def _check_finite(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(step)


def limit_ode(model: CoefficientModel, x0, grid: TimeGrid) -> SamplePath:
    """Explicit Euler solution of the noiseless limit, law = point mass."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes
    out = np.empty((n + 1, model.dim))
    out[0] = x0
    for k in range(n):
        mu = EmpiricalMeasure(out[k][None, :])
        out[k + 1] = out[k] + dt * model.b(nodes[k], out[k][None, :], mu)[0]
        _check_finite(out[k + 1], k)
    return SamplePath(grid, out)


def wiener_integral(sigma_path: np.ndarray, fbm_path: SamplePath) -> SamplePath:
    """Forward Riemann-Stieltjes sums of \\int sigma(t) dB^H.

    ``sigma_path`` holds one (d, d) matrix per grid cell (left endpoint).
    """
    sigma_path = np.asarray(sigma_path, dtype=float)
    n = fbm_path.grid.n_steps
    if sigma_path.shape != (n, fbm_path.dim, fbm_path.dim):
        raise ValueError("sigma_path must be (n_steps, d, d)")
    db = fbm_path.increments()
    steps = np.einsum("kij,kj->ki", sigma_path, db)
    vals = np.concatenate([np.zeros((1, fbm_path.dim)), np.cumsum(steps, axis=0)], axis=0)
    return SamplePath(fbm_path.grid, vals)


def solve_mckean(
    model: CoefficientModel,
    x0,
    eps: float,
    H: float,
    grid: TimeGrid,
    n_particles: int,
    seed: int,
    path_offset: int = 0,
) -> EnsembleResult:
    """Interacting-particle Euler scheme for the small-noise dynamics.

    Per step: X_{k+1}^i = X_k^i + b(t_k, X_k^i, cloud_k) dt
    + eps^H sigma(t_k, cloud_k) (B_{k+1}^i - B_k^i), with per-particle
    independent fBm and the particle cloud standing in for the law.
    With eps = 0 every particle reproduces the limit ODE exactly.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    check_hurst(H)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    noise = sample_volterra(H, grid, model.dim, n_particles, seed, path_offset)
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes
    amp = eps ** H
    if model.zero_drift:
        # the Euler recursion telescopes when b = 0 and sigma ignores the
        # law: X_k = x0 + eps^H * sum_{j<k} sigma(t_j) dB_j, one shot
        point = EmpiricalMeasure(x0[None, :])
        sig = np.stack([model.sigma(nodes[k], point) for k in range(n)])
        if np.ptp(sig, axis=0).max() == 0.0:
            X = amp * np.einsum("ij,pkj->pki", sig[0], noise.values)
        else:
            steps = np.einsum("kij,pkj->pki", sig, np.diff(noise.values, axis=1))
            X = np.concatenate(
                [np.zeros((n_particles, 1, model.dim)), amp * np.cumsum(steps, axis=1)], axis=1
            )
        X += x0
        if not np.all(np.isfinite(X[:, -1])):
            raise DivergenceError(n - 1)
        return EnsembleResult(grid, eps, model, X, noise)
    db = np.diff(noise.values, axis=1)
    X = np.empty((n_particles, n + 1, model.dim))
    X[:, 0] = x0
    for k in range(n):
        mu = EmpiricalMeasure(X[:, k])
        drift = model.b(nodes[k], X[:, k], mu)
        sig = model.sigma(nodes[k], mu)
        X[:, k + 1] = X[:, k] + dt * drift + amp * db[:, k] @ sig.T
        _check_finite(X[:, k + 1], k)
    return EnsembleResult(grid, eps, model, X, noise)


def solve_controlled(
    model: CoefficientModel,
    x0,
    eps: float,
    H: float,
    ctrl: ControlL2,
    frozen_law: Sequence[EmpiricalMeasure] | EnsembleResult,
    grid: TimeGrid,
    n_particles: int,
    seed: int,
    path_offset: int = 0,
) -> EnsembleResult:
    """Shifted dynamics with the measure frozen at the uncontrolled law.

    Both coefficients read the supplied per-step law, not the controlled
    cloud; the shift enters as the extra drift sigma(t_k, law_k) u(t_k) dt
    with u the density of R_H h.  With a zero control and the law produced
    by ``solve_mckean`` under the same seed, the output matches
    ``solve_mckean`` exactly.
    """
    if isinstance(frozen_law, EnsembleResult):
        if frozen_law.grid != grid:
            raise ValueError("frozen law was produced on a different grid")
        laws = frozen_law.empirical_law_per_step
    else:
        laws = list(frozen_law)
    if len(laws) < grid.n_steps:
        raise ValueError("frozen_law must supply a measure per step")
    if ctrl.grid != grid:
        raise ValueError("control lives on a different grid")
    check_hurst(H)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    u = rh_density(H, ctrl).density
    noise = sample_volterra(H, grid, model.dim, n_particles, seed, path_offset)
    db = np.diff(noise.values, axis=1)
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes
    amp = eps ** H
    X = np.empty((n_particles, n + 1, model.dim))
    X[:, 0] = x0
    for k in range(n):
        mu = laws[k]
        drift = model.b(nodes[k], X[:, k], mu)
        sig = model.sigma(nodes[k], mu)
        X[:, k + 1] = X[:, k] + dt * (drift + u[k] @ sig.T) + amp * db[:, k] @ sig.T
        _check_finite(X[:, k + 1], k)
    return EnsembleResult(grid, eps, model, X, noise)


# --------------------------------------------------------------------------
# empirical distances and change of measure
# --------------------------------------------------------------------------

_ASSIGNMENT_LIMIT = 2048


def _wasserstein_sorted(a: np.ndarray, b: np.ndarray, theta: float) -> float:
    """Exact 1-d W_theta by quantile coupling; sizes may differ."""
    a = np.sort(a)
    b = np.sort(b)
    n, m = a.size, b.size
    if n == m:
        return float(np.mean(np.abs(a - b) ** theta) ** (1.0 / theta))
    qs = np.union1d(np.arange(1, n) / n, np.arange(1, m) / m)
    edges = np.concatenate([[0.0], qs, [1.0]])
    lengths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    av = a[np.minimum((mids * n).astype(int), n - 1)]
    bv = b[np.minimum((mids * m).astype(int), m - 1)]
    return float(np.sum(lengths * np.abs(av - bv) ** theta) ** (1.0 / theta))


def _wasserstein_assignment(a: np.ndarray, b: np.ndarray, theta: float) -> float:
    """Exact W_theta between equal-size clouds via optimal assignment."""
    if a.shape[0] != b.shape[0]:
        raise ValueError("assignment route needs equal-size clouds")
    if a.shape[0] > _ASSIGNMENT_LIMIT:
        raise ValueError(f"assignment route limited to {_ASSIGNMENT_LIMIT} atoms")
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2) ** theta
    rows, cols = linear_sum_assignment(cost)
    return float(np.mean(cost[rows, cols]) ** (1.0 / theta))


def empirical_wasserstein(a, b, theta: float = 2.0, method: str = "auto") -> float:
    """W_theta between two atom clouds (rows are atoms).

    One-dimensional clouds use the exact sorted/quantile coupling and may
    have different sizes; higher dimensions solve the optimal assignment
    and require equal sizes of at most 2048 atoms.
    """
    if not 1.0 <= theta <= 2.0:
        raise ValueError("theta must lie in [1, 2]")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("clouds have different dimensions")
    d = a.shape[1]
    if method == "sorted" or (method == "auto" and d == 1):
        if d != 1:
            raise ValueError("sorted coupling is one-dimensional only")
        return _wasserstein_sorted(a[:, 0], b[:, 0], theta)
    return _wasserstein_assignment(a, b, theta)


def girsanov_log_weights(ctrl: ControlL2, wiener_increments: np.ndarray) -> np.ndarray:
    """log theta_T per path for a batch of Wiener increments (..., n, d)."""
    dw = np.asarray(wiener_increments, dtype=float)
    stoch = np.einsum("kd,...kd->...", ctrl.g, dw)
    return -stoch - 0.5 * ctrl.norm_sq()


def girsanov_weight(ctrl: ControlL2, bundle: FbmBundle) -> float:
    """Exponential change-of-measure weight

    theta_T = exp(- \\int <(K_H* h)(s), dW_s> - 1/2 \\int |(K_H* h)(s)|^2 ds)

    evaluated from the bundle's Wiener increments; strictly positive, and
    exactly 1 for the zero control.
    """
    return float(np.exp(girsanov_log_weights(ctrl, bundle.wiener_increments)))


def shift_ensemble(H: float, noise: FbmEnsemble, ctrl: ControlL2) -> FbmEnsemble:
    """Shift every path by the control: dW -> dW + g dt through the same map.

    This is the discrete version of B + R_H h and keeps the bundle
    self-consistent, so reweighting by ``girsanov_weight`` undoes the
    shift in distribution exactly at the discrete level.
    """
    if noise.wiener is None:
        raise ValueError("shift needs Wiener increments; use the Volterra sampler")
    if ctrl.grid != noise.grid:
        raise ValueError("control lives on a different grid")
    dw = noise.wiener + ctrl.g[None, :, :] * noise.grid.dt
    return FbmEnsemble(noise.grid, volterra_map(H, noise.grid, dw), dw)
