"""Reproducing-kernel operators of the fBm Cameron-Martin space.

A deterministic shift h of the noise is stored through its isometric
coordinate ``g = K_H* h`` in L^2([0, T], R^d), so that

    ||h||_H^2 = ||g||_{L^2}^2,

and the shift enters paths through R_H h = K_H (K_H* h), an absolutely
continuous path with density

    u(s) = \\int_0^s dK_H/ds(s, r) g(r) dr.

Discretely, ``g`` is piecewise constant on grid cells, ``u`` is sampled at
cell midpoints through a lower-triangular matrix ``L`` (``u = L g``), and
the adjoint ``K_H*`` acting on cell-frozen paths is exactly ``L^T``.  All
singular factors ``(s - r)^{H-3/2}`` are integrated in closed form inside
each cell while the smooth factor ``(s/r)^{H-1/2}`` is frozen at cell
midpoints; with that convention the transpose identity is exact, the
diagonal of ``L`` is a positive constant, and first-kind inversion is a
plain triangular solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import SingularOperatorError
from .fbm import c_h, check_hurst
from .grids import SamplePath, TimeGrid

__all__ = [
    "ControlL2",
    "CameronMartinPath",
    "density_matrix",
    "adjoint_matrix",
    "apply_k_star",
    "h_inner_weighted",
    "h_norm_sq",
    "rh_density",
    "rh_invert",
]


@dataclass
class ControlL2:
    """A Cameron-Martin control in its L^2 coordinate.

    ``g[j]`` is the (vector) value of K_H* h on cell j; the squared
    Cameron-Martin norm is ``sum_j |g[j]|^2 dt``.
    """

    grid: TimeGrid
    g: np.ndarray  # (n_steps, d)

    def __post_init__(self):
        self.g = np.atleast_2d(np.asarray(self.g, dtype=float))
        if self.g.shape[0] != self.grid.n_steps:
            raise ValueError("g must have one row per grid cell")

    @property
    def dim(self) -> int:
        return self.g.shape[1]

    def norm_sq(self) -> float:
        return float(np.sum(self.g ** 2) * self.grid.dt)

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int = 1) -> "ControlL2":
        return cls(grid, np.zeros((grid.n_steps, dim)))


@dataclass
class CameronMartinPath:
    """R_H h on the grid: node values plus the midpoint density u."""

    grid: TimeGrid
    values: np.ndarray   # (n_steps + 1, d)
    density: np.ndarray  # (n_steps, d) at cell midpoints


_DENSITY_CACHE: dict = {}


def density_matrix(H: float, grid: TimeGrid) -> np.ndarray:
    """Lower-triangular matrix taking cell controls g to u at midpoints.

    Entry (i, j) integrates dK_H/ds(m_i, r) over cell j (up to m_i on the
    diagonal cell): the (m_i - r)^{H-3/2} factor exactly, the (m_i/r)^{H-1/2}
    factor frozen at the cell midpoint m_j.  Cached per (H, grid).
    """
    key = (round(float(H), 12), grid.key())
    L = _DENSITY_CACHE.get(key)
    if L is not None:
        return L
    check_hurst(H)
    n = grid.n_steps
    dt = grid.dt
    mids = grid.cell_midpoints
    lo = grid.nodes[:-1]
    hi = grid.nodes[1:]
    p = H - 0.5
    s = mids[:, None]
    a = np.minimum(lo[None, :], s)
    b = np.minimum(hi[None, :], s)
    E = ((s - a) ** p - (s - b) ** p) / p
    L = c_h(H) * (s / mids[None, :]) ** p * E
    L[np.triu_indices(n, 1)] = 0.0
    L.setflags(write=False)
    _DENSITY_CACHE[key] = L
    return L


def adjoint_matrix(H: float, grid: TimeGrid) -> np.ndarray:
    """Matrix of K_H* on cell-frozen paths; the transpose of ``density_matrix``."""
    return density_matrix(H, grid).T


def apply_k_star(H: float, psi: SamplePath) -> ControlL2:
    """Adjoint image (K_H* psi)(t) = int_t^T psi(s) dK_H/ds(s, t) ds.

    ``psi`` is frozen on each cell at the average of its node values
    before the cell-exact rule is applied.
    """
    A = adjoint_matrix(H, psi.grid)
    cells = psi.cell_averages()
    return ControlL2(psi.grid, A @ cells)


def _fgn_toeplitz(H: float, grid: TimeGrid) -> np.ndarray:
    """Exact cell-pair integrals of H(2H-1)|t-s|^{2H-2} (Toeplitz in |i-j|)."""
    n = grid.n_steps
    m = np.arange(n, dtype=float)
    col = 0.5 * grid.dt ** (2 * H) * ((m + 1) ** (2 * H) - 2 * m ** (2 * H) + np.abs(m - 1) ** (2 * H))
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    return col[idx]


def h_inner_weighted(H: float, psi: SamplePath, phi: SamplePath) -> float:
    """Inner product H(2H-1) \\int\\int |t-s|^{2H-2} <psi(s), phi(t)> ds dt.

    The singular weight is integrated exactly over every cell pair; the
    paths are frozen at cell averages.
    """
    if psi.grid != phi.grid:
        raise ValueError("paths must share one grid")
    check_hurst(H)
    Wm = _fgn_toeplitz(H, psi.grid)
    pc = psi.cell_averages()
    qc = phi.cell_averages()
    return float(np.einsum("ij,id,jd->", Wm, pc, qc))


def h_norm_sq(ctrl: ControlL2) -> float:
    """Squared Cameron-Martin norm through the isometry, ||g||_{L^2}^2."""
    return ctrl.norm_sq()


def rh_density(H: float, ctrl: ControlL2) -> CameronMartinPath:
    """R_H h from the control's L^2 coordinate: u = L g, values by midpoint rule."""
    L = density_matrix(H, ctrl.grid)
    u = L @ ctrl.g
    values = np.concatenate(
        [np.zeros((1, ctrl.dim)), np.cumsum(u, axis=0) * ctrl.grid.dt], axis=0
    )
    return CameronMartinPath(ctrl.grid, values, u)


def rh_invert(H: float, grid: TimeGrid, density: np.ndarray) -> ControlL2:
    """Solve the first-kind equation u = L g by forward substitution.

    ``density`` holds u at cell midpoints, shape (n_steps, d).  Exact up
    to roundoff; raises if the discrete operator degenerates.
    """
    L = density_matrix(H, grid)
    if float(np.min(np.diag(L))) < 1e-14:
        raise SingularOperatorError("discrete kernel operator has a vanishing diagonal")
    u = np.atleast_2d(np.asarray(density, dtype=float))
    if u.shape[0] != grid.n_steps:
        raise ValueError("density must have one row per grid cell")
    g = solve_triangular(L, u, lower=True)
    return ControlL2(grid, g)
