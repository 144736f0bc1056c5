"""Fractional Brownian motion for H in (1/2, 1): covariance, Volterra
kernel, and two exact-in-law path samplers.

The process is the centered Gaussian vector with covariance

    R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2,

which factors through the square-integrable Volterra kernel

    K_H(t, s) = C_H s^{1/2-H} \\int_s^t (r - s)^{H-3/2} r^{H-1/2} dr,   t > s,

with K_H(t, s) = 0 for t <= s, so that B_t = \\int_0^t K_H(t, s) dW_s for a
standard Wiener process W.  ``sample_cholesky`` draws the Gaussian vector
directly; ``sample_volterra`` discretizes the kernel map and keeps the
underlying Wiener increments, which is what every change-of-measure
computation downstream needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import hyp2f1, roots_jacobi, roots_legendre

from . import _rng
from .errors import NumericalError
from .grids import SamplePath, TimeGrid

__all__ = [
    "check_hurst",
    "cov",
    "c_h",
    "kernel_K",
    "kernel_K_ds",
    "kernel_exact",
    "volterra_weights",
    "covariance_matrix",
    "cholesky_factor",
    "FbmBundle",
    "FbmEnsemble",
    "sample_cholesky",
    "sample_volterra",
    "volterra_map",
]


def check_hurst(H: float) -> float:
    """Validate H strictly inside (1/2, 1); the endpoint formulas differ."""
    H = float(H)
    if not 0.5 < H < 1.0:
        raise ValueError("H: must satisfy 1/2 < H < 1 (strict)")
    return H


def cov(H: float, s: float, t: float) -> float:
    """Covariance R_H(t, s) of one fBm coordinate."""
    check_hurst(H)
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    return 0.5 * (t ** (2 * H) + s ** (2 * H) - abs(t - s) ** (2 * H))


def c_h(H: float) -> float:
    """Normalizing constant C_H = sqrt(H(2H-1) / B(2-2H, H-1/2))."""
    check_hurst(H)
    return float(np.sqrt(H * (2 * H - 1) / beta_fn(2 - 2 * H, H - 0.5)))


def kernel_K(H: float, t: float, s: float, n_cells: int = 256) -> float:
    """Volterra kernel K_H(t, s) by composite singular quadrature.

    The inner integral over ``r`` is split into ``n_cells`` uniform cells;
    in each cell the singular factor ``(r - s)^{H-3/2}`` is integrated in
    closed form and the smooth factor ``r^{H-1/2}`` is frozen at the cell
    midpoint.  First-order accurate uniformly in the singularity.
    """
    check_hurst(H)
    if s <= 0:
        if t <= s:
            return 0.0
        raise ValueError("s: kernel second argument must be positive")
    if t <= s:
        return 0.0
    p = H - 0.5
    edges = np.linspace(s, t, n_cells + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    pieces = ((edges[1:] - s) ** p - (edges[:-1] - s) ** p) / p
    return c_h(H) * s ** (0.5 - H) * float(np.sum(mids ** p * pieces))


def kernel_K_ds(H: float, s: float, r: float) -> float:
    """Closed-form kernel derivative dK_H(s, r)/ds = C_H (s/r)^{H-1/2} (s-r)^{H-3/2}."""
    check_hurst(H)
    if r <= 0 or r >= s:
        raise ValueError("require 0 < r < s")
    return c_h(H) * (s / r) ** (H - 0.5) * (s - r) ** (H - 1.5)


def kernel_exact(H: float, t, s):
    """K_H(t, s) through the Gauss hypergeometric closed form (vectorized).

    Machine-precision evaluation used for quadrature-free cross checks and
    for assembling sampler weights; zero where t <= s.
    """
    check_hurst(H)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    tt, ss = np.broadcast_arrays(t, s)
    out = np.zeros(tt.shape)
    mask = tt > ss
    if np.any(ss[mask] <= 0):
        raise ValueError("s: kernel second argument must be positive")
    tm, sm = tt[mask], ss[mask]
    p = H - 0.5
    psi = (tm - sm) ** p * sm ** p * hyp2f1(0.5 - H, p, H + 0.5, -(tm - sm) / sm) / p
    out[mask] = c_h(H) * sm ** (0.5 - H) * psi
    if out.ndim == 0:
        return float(out)
    return out


# --------------------------------------------------------------------------
# discrete Volterra map
# --------------------------------------------------------------------------

_WEIGHT_CACHE: dict = {}
_CHOL_CACHE: dict = {}
_QUAD_POINTS = 12


def _cell_sq_integrals(H: float, grid: TimeGrid) -> np.ndarray:
    """I[k-1, j] = integral of K_H(t_k, s)^2 over cell j, for j < k.

    Per cell, the integrable endpoint behaviors s^{1-2H} (left edge of the
    first cell) and (t_k - s)^{2H-1} (diagonal cell) are absorbed into
    Gauss-Jacobi weights; the remaining smooth factor is evaluated through
    the hypergeometric closed form.
    """
    n = grid.n_steps
    nodes = grid.nodes
    b0 = 1.0 - 2 * H       # s-exponent at the origin, from s^{2(1/2-H)}
    bd = 2 * H - 1.0       # (t-s)-exponent on the diagonal
    xl, wl = roots_legendre(_QUAD_POINTS)
    xj0, wj0 = roots_jacobi(_QUAD_POINTS, 0.0, b0)
    xjd, wjd = roots_jacobi(_QUAD_POINTS, bd, 0.0)
    xjb, wjb = roots_jacobi(_QUAD_POINTS, bd, b0)

    I = np.zeros((n, n))
    for k in range(1, n + 1):
        t = nodes[k]
        js = np.arange(k)
        a = nodes[js]
        h2 = 0.5 * grid.dt
        if k == 1:
            spts = a[0] + h2 * (xjb + 1.0)
            f = kernel_exact(H, t, spts) ** 2 / (spts ** b0 * (t - spts) ** bd)
            I[0, 0] = h2 ** (b0 + bd + 1.0) * np.sum(wjb * f)
            continue
        # first cell: singular weight at s = 0
        spts = a[0] + h2 * (xj0 + 1.0)
        f = kernel_exact(H, t, spts) ** 2 / spts ** b0
        I[k - 1, 0] = h2 ** (b0 + 1.0) * np.sum(wj0 * f)
        # diagonal cell: vanishing weight at s = t
        spts = a[-1] + h2 * (xjd + 1.0)
        f = kernel_exact(H, t, spts) ** 2 / (t - spts) ** bd
        I[k - 1, k - 1] = h2 ** (bd + 1.0) * np.sum(wjd * f)
        # interior cells: plain Gauss-Legendre, batched
        if k > 2:
            inner = a[1:-1]
            spts = inner[:, None] + h2 * (xl[None, :] + 1.0)
            f = kernel_exact(H, t, spts) ** 2
            I[k - 1, 1:k - 1] = h2 * f @ wl
    return I


def volterra_weights(H: float, grid: TimeGrid) -> np.ndarray:
    """Lower-triangular weight matrix W of the discrete Volterra map.

    ``W[k-1, j]`` is the root-mean-square cell average of ``K_H(t_k, .)``
    on cell j, with each row rescaled so that the discrete node variance
    ``sum_j W[k-1, j]^2 dt`` equals ``t_k^{2H}`` exactly.  A plain mean
    average would bias the first node variances low by Jensen's
    inequality, visibly against the Gaussian law at modest grid sizes.
    Cached per (H, grid).
    """
    key = (round(float(H), 12), grid.key())
    W = _WEIGHT_CACHE.get(key)
    if W is not None:
        return W
    check_hurst(H)
    I = _cell_sq_integrals(H, grid)
    W = np.sqrt(I / grid.dt)
    nodes = grid.nodes[1:]
    rowvar = (W ** 2).sum(axis=1) * grid.dt
    W *= (nodes ** (2 * H) / rowvar)[:, None] ** 0.5
    W.setflags(write=False)
    _WEIGHT_CACHE[key] = W
    return W


def covariance_matrix(H: float, grid: TimeGrid) -> np.ndarray:
    """Covariance matrix [R_H(t_i, t_j)] on the interior nodes t_1..t_n."""
    check_hurst(H)
    t = grid.nodes[1:]
    return 0.5 * (
        t[:, None] ** (2 * H) + t[None, :] ** (2 * H) - np.abs(t[:, None] - t[None, :]) ** (2 * H)
    )


def cholesky_factor(H: float, grid: TimeGrid) -> np.ndarray:
    """Lower Cholesky factor of the node covariance, with one jitter retry."""
    key = (round(float(H), 12), grid.key())
    L = _CHOL_CACHE.get(key)
    if L is not None:
        return L
    R = covariance_matrix(H, grid)
    try:
        L = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(np.max(np.diag(R)))
        try:
            L = np.linalg.cholesky(R + jitter * np.eye(R.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("covariance matrix not positive definite after jitter") from exc
    L.setflags(write=False)
    _CHOL_CACHE[key] = L
    return L


# --------------------------------------------------------------------------
# samplers
# --------------------------------------------------------------------------


@dataclass
class FbmBundle:
    """One fBm path together with the Wiener increments that built it."""

    fbm: SamplePath
    wiener_increments: np.ndarray  # (n_steps, d), each ~ N(0, dt I) in law


@dataclass
class FbmEnsemble:
    """A batch of fBm paths with optional Wiener increments.

    ``values`` has shape (n_paths, n_steps + 1, d).  ``wiener`` is present
    for Volterra-sampled ensembles and None for Cholesky-sampled ones.
    """

    grid: TimeGrid
    values: np.ndarray
    wiener: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def path(self, i: int) -> SamplePath:
        return SamplePath(self.grid, self.values[i])

    def bundle(self, i: int) -> FbmBundle:
        if self.wiener is None:
            raise ValueError("ensemble carries no Wiener increments")
        return FbmBundle(self.path(i), self.wiener[i])


def volterra_map(H: float, grid: TimeGrid, wiener_increments: np.ndarray) -> np.ndarray:
    """Apply the discrete Volterra map to Wiener increments.

    ``wiener_increments`` has shape (..., n_steps, d); the result appends
    the node axis, shape (..., n_steps + 1, d), starting at zero.
    """
    W = volterra_weights(H, grid)
    dw = np.asarray(wiener_increments, dtype=float)
    lead = dw.shape[:-2]
    n, d = dw.shape[-2], dw.shape[-1]
    out = np.zeros((*lead, n + 1, d))
    # einsum keeps a fixed reduction order, so path values are bitwise
    # independent of the batch size (BLAS kernels are not)
    np.einsum("kj,...jd->...kd", W, dw, out=out[..., 1:, :])
    return out


def sample_volterra(
    H: float,
    grid: TimeGrid,
    dim: int,
    n_paths: int,
    seed: int,
    path_offset: int = 0,
    stream: int = _rng.STREAM_WIENER,
) -> FbmEnsemble:
    """Sample fBm through the discrete Volterra map, keeping the increments.

    Deterministic in (H, grid, dim, seed, stream, absolute path index);
    the ``path_offset`` lets chunked runs reproduce a monolithic one.
    """
    check_hurst(H)
    seed = _rng.validate_seed(seed)
    dw = _rng.standard_normal_paths(seed, stream, path_offset, n_paths, (grid.n_steps, dim))
    dw *= np.sqrt(grid.dt)
    values = volterra_map(H, grid, dw)
    return FbmEnsemble(grid, values, dw)


def sample_cholesky(
    H: float, grid: TimeGrid, dim: int, n_paths: int, seed: int, path_offset: int = 0
) -> FbmEnsemble:
    """Sample fBm exactly from the Cholesky factor of the node covariance."""
    check_hurst(H)
    seed = _rng.validate_seed(seed)
    L = cholesky_factor(H, grid)
    z = _rng.standard_normal_paths(
        seed, _rng.STREAM_CHOLESKY, path_offset, n_paths, (grid.n_steps, dim)
    )
    vals = np.einsum("kj,pjd->pkd", L, z)
    pad = np.zeros((n_paths, 1, dim))
    return FbmEnsemble(grid, np.concatenate([pad, vals], axis=1), None)
