"""Skeleton equations, variational rate functions, and limit processes.

The deterministic skeletons replace the noise by a Cameron-Martin shift
R_H h around the limit path; their quadratic cost ``||h||_H^2 / 2`` is the
rate function surface.  The Gaussian-limit process solves the linear
equation whose drift combines the state gradient of b with its measure
(Lions) derivative paired against the mean of the limit process itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import UnsupportedModelError
from .fbm import FbmEnsemble, check_hurst
from .grids import SamplePath, TimeGrid
from .mckean import CoefficientModel, EmpiricalMeasure, EnsembleResult, limit_ode, solve_mckean
from .rkhs import ControlL2, density_matrix, rh_density, rh_invert

__all__ = [
    "SkeletonSolution",
    "CltEnsemble",
    "MdpConfig",
    "make_kappa",
    "skeleton_ldp",
    "skeleton_mdp",
    "rate_ldp_path",
    "rate_endpoint",
    "clt_limit",
    "mdp_paths",
]


@dataclass
class SkeletonSolution:
    """A controlled deterministic path with its quadratic cost."""

    path: SamplePath
    ctrl: ControlL2
    cost: float


@dataclass
class CltEnsemble:
    """Gaussian-limit paths coupled to a noise ensemble, plus their mean."""

    z_paths: np.ndarray      # (N, n_steps + 1, d)
    mean_path: SamplePath
    model: CoefficientModel

    @property
    def n_paths(self) -> int:
        return self.z_paths.shape[0]


@dataclass
class MdpConfig:
    """Intermediate-scale rescaling: kappa grows while eps^H kappa vanishes.

    Admissibility is checked numerically on ``eps_list`` (given in
    decreasing order): kappa must increase and eps^H * kappa decrease as
    eps decreases.
    """

    kappa: Callable[[float], float]
    eps_list: Sequence[float]
    H: float

    def __post_init__(self):
        check_hurst(self.H)
        eps = np.asarray(self.eps_list, dtype=float)
        if eps.size < 1 or np.any(eps <= 0):
            raise ValueError("eps_list must hold positive values")
        if np.any(np.diff(eps) >= 0):
            raise ValueError("eps_list must be strictly decreasing")
        k = np.array([self.kappa(e) for e in eps])
        if np.any(np.diff(k) <= 0):
            raise ValueError("kappa must increase as eps decreases")
        scaled = eps ** self.H * k
        if np.any(np.diff(scaled) >= 0):
            raise ValueError("eps^H * kappa must decrease as eps decreases")


def make_kappa(kind: str, H: float | None = None, exponent: float | None = None):
    """Named rescaling families: 'power' uses eps^exponent (default -H/2),
    'log' uses log(1/eps)."""
    if kind == "power":
        if exponent is None:
            if H is None:
                raise ValueError("power kappa needs an exponent or H")
            exponent = -H / 2.0
        e = float(exponent)
        return lambda eps: eps ** e
    if kind == "log":
        return lambda eps: math.log(1.0 / eps)
    raise ValueError(f"unknown kappa kind '{kind}'")


# --------------------------------------------------------------------------
# skeletons
# --------------------------------------------------------------------------


def _frozen_limit(model: CoefficientModel, x0, grid: TimeGrid):
    base = limit_ode(model, x0, grid)
    laws = [EmpiricalMeasure(base.values[k][None, :]) for k in range(grid.n_steps + 1)]
    return base, laws


def skeleton_ldp(
    model: CoefficientModel, x0, H: float, ctrl: ControlL2, grid: TimeGrid
) -> SkeletonSolution:
    """Controlled ODE around the limit path:

    Y_{k+1} = Y_k + [b(t_k, Y_k, law(X0_k)) + sigma(t_k, law(X0_k)) u_k] dt

    with u the density of R_H h and the measure frozen at the limit law.
    The zero control returns the limit path exactly.
    """
    if ctrl.grid != grid:
        raise ValueError("control lives on a different grid")
    check_hurst(H)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    _, laws = _frozen_limit(model, x0, grid)
    u = rh_density(H, ctrl).density
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes
    out = np.empty((n + 1, model.dim))
    out[0] = x0
    for k in range(n):
        sig = model.sigma(nodes[k], laws[k])
        drift = model.b(nodes[k], out[k][None, :], laws[k])[0]
        out[k + 1] = out[k] + dt * (drift + sig @ u[k])
    return SkeletonSolution(SamplePath(grid, out), ctrl, 0.5 * ctrl.norm_sq())


def skeleton_mdp(
    model: CoefficientModel, x0, H: float, ctrl: ControlL2, grid: TimeGrid
) -> SkeletonSolution:
    """Linearized skeleton from zero:

    Xi_{k+1} = Xi_k + [grad_b(t_k, X0_k) Xi_k + sigma(t_k, law(X0_k)) u_k] dt.
    """
    model.require_gradients()
    if ctrl.grid != grid:
        raise ValueError("control lives on a different grid")
    check_hurst(H)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    base, laws = _frozen_limit(model, x0, grid)
    u = rh_density(H, ctrl).density
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes
    out = np.zeros((n + 1, model.dim))
    for k in range(n):
        G = np.atleast_2d(model.grad_b(nodes[k], base.values[k], laws[k]))
        sig = model.sigma(nodes[k], laws[k])
        out[k + 1] = out[k] + dt * (G @ out[k] + sig @ u[k])
    return SkeletonSolution(SamplePath(grid, out), ctrl, 0.5 * ctrl.norm_sq())


# --------------------------------------------------------------------------
# rate functions
# --------------------------------------------------------------------------


def rate_ldp_path(model: CoefficientModel, x0, H: float, f: SamplePath) -> float:
    """Quadratic cost of the unique control reproducing the path ``f``.

    Inverts the forward Euler map cell by cell (forward differences),
    then the triangular kernel operator; returns ``inf`` for paths that
    do not start at the initial condition.  Requires an invertible
    diffusion along the limit law.
    """
    check_hurst(H)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    grid = f.grid
    if not np.allclose(f.values[0], x0, rtol=0.0, atol=1e-12):
        return math.inf
    _, laws = _frozen_limit(model, x0, grid)
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes
    u = np.empty((n, model.dim))
    for k in range(n):
        sig = model.sigma(nodes[k], laws[k])
        if abs(np.linalg.det(sig)) < 1e-12:
            raise UnsupportedModelError("diffusion is singular along the limit path")
        rhs = (f.values[k + 1] - f.values[k]) / dt - model.b(nodes[k], f.values[k][None, :], laws[k])[0]
        u[k] = np.linalg.solve(sig, rhs)
    g = rh_invert(H, grid, u)
    return 0.5 * g.norm_sq()


def rate_endpoint(
    model: CoefficientModel,
    x0,
    H: float,
    grid: TimeGrid,
    a: float,
    regime: str = "ldp",
    coordinate: int = 0,
) -> float:
    """Minimum cost of hitting deviation level ``a`` at the horizon.

    Solves min ||g||_{L^2}^2 / 2 subject to the affine terminal
    constraint of the discrete forward map (the minimizer is the
    representer of the constraint functional).  Supported where that map
    is affine in the control: the zero-drift regime for 'ldp' and every
    model with gradients for 'mdp'.
    """
    check_hurst(H)
    if regime not in ("ldp", "mdp"):
        raise ValueError("regime must be 'ldp' or 'mdp'")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if regime == "ldp" and not model.zero_drift:
        raise UnsupportedModelError(
            "endpoint rate needs an affine forward map; use rate_ldp_path for drifted models"
        )
    if regime == "mdp":
        model.require_gradients()
    if a == 0:
        return 0.0
    base, laws = _frozen_limit(model, x0, grid)
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes
    d = model.dim
    e = np.zeros(d)
    e[coordinate] = 1.0
    # backward transpose propagation of the terminal functional
    w = e.copy()
    c = np.empty((n, d))
    for k in range(n - 1, -1, -1):
        sig = model.sigma(nodes[k], laws[k])
        c[k] = dt * sig.T @ w
        if regime == "mdp":
            G = np.atleast_2d(model.grad_b(nodes[k], base.values[k], laws[k]))
            w = w + dt * G.T @ w
    r = density_matrix(H, grid).T @ c
    nrm = float(np.sum(r * r))
    if nrm <= 0:
        raise UnsupportedModelError("terminal constraint is degenerate")
    return 0.5 * dt * a ** 2 / nrm


# --------------------------------------------------------------------------
# limit processes
# --------------------------------------------------------------------------


def clt_limit(
    model: CoefficientModel, x0, noise: FbmEnsemble, grid: TimeGrid
) -> CltEnsemble:
    """Gaussian-limit paths driven by the supplied fBm ensemble.

    First solves the deterministic mean ODE
    ``m' = [grad_b + lions_b] m, m(0) = 0`` (the stochastic integral is
    centered, so this is the mean of the limit process; from zero it
    stays zero), then the per-path linear recursion

    Z_{k+1} = Z_k + [grad_b Z_k + lions_b m_k] dt + sigma dB_k,

    with all coefficients evaluated along the limit path.
    """
    model.require_gradients(lions=True)
    if noise.grid != grid:
        raise ValueError("noise lives on a different grid")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    base, laws = _frozen_limit(model, x0, grid)
    n, dt = grid.n_steps, grid.dt
    nodes = grid.nodes
    d = model.dim
    G = np.empty((n, d, d))
    D = np.empty((n, d, d))
    S = np.empty((n, d, d))
    for k in range(n):
        G[k] = np.atleast_2d(model.grad_b(nodes[k], base.values[k], laws[k]))
        D[k] = np.atleast_2d(model.lions_b(nodes[k], base.values[k], laws[k], base.values[k]))
        S[k] = model.sigma(nodes[k], laws[k])
    m = np.zeros((n + 1, d))
    for k in range(n):
        m[k + 1] = m[k] + dt * (G[k] + D[k]) @ m[k]
    db = np.diff(noise.values, axis=1)
    Z = np.zeros((noise.n_paths, n + 1, d))
    for k in range(n):
        Z[:, k + 1] = Z[:, k] + dt * (Z[:, k] @ G[k].T + m[k] @ D[k].T) + db[:, k] @ S[k].T
    return CltEnsemble(Z, SamplePath(grid, m), model)


def mdp_paths(
    model: CoefficientModel,
    x0,
    eps: float,
    H: float,
    mdp_cfg: MdpConfig,
    grid: TimeGrid,
    n_particles: int,
    seed: int,
    path_offset: int = 0,
) -> EnsembleResult:
    """Rescaled deviations Y = (X^eps - X^0) / (eps^H kappa(eps))."""
    ens = solve_mckean(model, x0, eps, H, grid, n_particles, seed, path_offset)
    base = limit_ode(model, x0, grid)
    scale = eps ** H * mdp_cfg.kappa(eps)
    Y = (ens.paths - base.values[None, :, :]) / scale
    return EnsembleResult(grid, eps, model, Y, ens.noise)
