"""Monte Carlo experiment harness: moment estimators, log-log scaling
regressions, and endpoint tail-probability reports for the three
deviation regimes.

Tail events are endpoint events (functions of the terminal state), so
every report carries a closed-form variational prediction to compare the
scaled log-probability against.  Cells with fewer than 20 hits are
flagged unreliable and excluded from acceptance statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import t as student_t

from .asymptotics import MdpConfig, clt_limit, mdp_paths, rate_endpoint
from .fbm import check_hurst, sample_volterra
from .grids import SamplePath, TimeGrid
from . import _rng
from .mckean import CoefficientModel, EnsembleResult, limit_ode, solve_mckean

__all__ = [
    "ScalingReport",
    "TailReport",
    "moment_sup",
    "scaling_exponent",
    "ldp_consistency",
    "mdp_consistency",
    "clt_error_curve",
]

RELIABLE_HITS = 20
_TAIL_CHUNK = 1 << 19


@dataclass
class ScalingReport:
    """Log-log OLS fit of estimates against eps."""

    eps_list: list[float]
    estimates: list[tuple[float, float]]   # (mean, SE) per eps
    slope: float
    slope_ci: tuple[float, float]
    expected_slope: float | None = None

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.slope)


@dataclass
class TailReport:
    """One endpoint tail cell: p_hat with its deviation-scaled logarithm."""

    eps: float
    threshold: float
    hit_count: int
    n_paths: int
    p_hat: float
    log_p_scaled: float        # speed * log(p_hat), negative when p_hat < 1
    rate_prediction: float
    speed: float
    reliable: bool


def moment_sup(ensemble: EnsembleResult, reference: SamplePath, p: float):
    """Mean and standard error of sup-norm deviations to the p-th power.

    The deviation of each path is the maximum over nodes of the Euclidean
    distance to the reference path.
    """
    if ensemble.grid != reference.grid:
        raise ValueError("ensemble and reference live on different grids")
    if ensemble.n_paths == 0:
        raise ValueError("empty ensemble")
    dev = ensemble.paths - reference.values[None, :, :]
    sup = np.max(np.linalg.norm(dev, axis=2), axis=1)
    vals = sup ** p
    n = vals.size
    se = float(np.std(vals, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(vals)), se


def scaling_exponent(
    pairs: Sequence[tuple[float, float]], expected_slope: float | None = None
) -> ScalingReport:
    """Ordinary least squares of log(estimate) on log(eps).

    The confidence interval is the 95% band from the regression
    residuals.  Estimates must be positive; the geometry of the eps
    ladder is the caller's business.
    """
    eps = np.array([e for e, _ in pairs], dtype=float)
    est = np.array([v for _, v in pairs], dtype=float)
    if eps.size < 3:
        raise ValueError("need at least 3 eps values")
    if np.any(est <= 0):
        raise ValueError("estimates must be positive for a log-log fit")
    x = np.log(eps)
    y = np.log(est)
    xc = x - x.mean()
    sxx = float(np.sum(xc ** 2))
    slope = float(np.sum(xc * (y - y.mean())) / sxx)
    resid = y - (y.mean() + slope * xc)
    dof = eps.size - 2
    s2 = float(np.sum(resid ** 2) / dof) if dof > 0 else 0.0
    se_slope = math.sqrt(s2 / sxx)
    half = float(student_t.ppf(0.975, dof)) * se_slope if dof > 0 else 0.0
    return ScalingReport(
        eps_list=list(eps),
        estimates=[(float(v), 0.0) for v in est],
        slope=slope,
        slope_ci=(slope - half, slope + half),
        expected_slope=expected_slope,
    )


# --------------------------------------------------------------------------
# endpoint tails
# --------------------------------------------------------------------------


def _endpoint_hits(
    model: CoefficientModel,
    x0,
    eps: float,
    H: float,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    base_offset: int,
    threshold: float,
    coordinate: int,
) -> int:
    """Count paths with X_T - X0_T >= threshold along one coordinate.

    Zero-drift models stream in fixed chunks (law-free, so chunking is
    exact); interacting models run as a single particle system so the
    mean-field coupling sees all N particles.
    """
    base = limit_ode(model, x0, grid)
    ref = base.values[-1, coordinate]
    chunk = _TAIL_CHUNK if model.zero_drift else n_paths
    hits = 0
    done = 0
    while done < n_paths:
        take = min(chunk, n_paths - done)
        ens = solve_mckean(model, x0, eps, H, grid, take, seed, base_offset + done)
        endpoints = ens.paths[:, -1, coordinate]
        hits += int(np.count_nonzero(endpoints - ref >= threshold))
        done += take
    return hits


def _tail_report(eps, a, hits, n_paths, speed, rate) -> TailReport:
    p_hat = hits / n_paths
    log_scaled = speed * math.log(p_hat) if hits > 0 else -math.inf
    return TailReport(
        eps=eps,
        threshold=a,
        hit_count=hits,
        n_paths=n_paths,
        p_hat=p_hat,
        log_p_scaled=log_scaled,
        rate_prediction=rate,
        speed=speed,
        reliable=hits >= RELIABLE_HITS,
    )


def ldp_consistency(
    model: CoefficientModel,
    x0,
    a: float,
    eps_list: Sequence[float],
    H: float,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    coordinate: int = 0,
) -> list[TailReport]:
    """Per-eps reports of -eps^{2H} log P(X_T - X0_T >= a) against the
    endpoint rate.  Cells use disjoint path-index ranges of one seed, so
    they are independent and embarrassingly parallel."""
    check_hurst(H)
    rate = rate_endpoint(model, x0, H, grid, a, "ldp", coordinate)
    reports = []
    for i, eps in enumerate(eps_list):
        hits = _endpoint_hits(
            model, x0, eps, H, grid, n_paths, seed, i * n_paths, a, coordinate
        )
        reports.append(_tail_report(eps, a, hits, n_paths, eps ** (2 * H), rate))
    return reports


def mdp_consistency(
    model: CoefficientModel,
    x0,
    a: float,
    mdp_cfg: MdpConfig,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    coordinate: int = 0,
) -> list[TailReport]:
    """Per-eps reports of -kappa^{-2} log P(Y_T >= a) against the
    linearized endpoint rate, Y the moderate-deviation rescaling."""
    H = mdp_cfg.H
    rate = rate_endpoint(model, x0, H, grid, a, "mdp", coordinate)
    base = limit_ode(model, x0, grid)
    ref = base.values[-1, coordinate]
    reports = []
    for i, eps in enumerate(mdp_cfg.eps_list):
        kappa = mdp_cfg.kappa(eps)
        scale = eps ** H * kappa
        # endpoint of Y is (X_T - X0_T) / scale, so compare X against a*scale
        hits = _endpoint_hits(
            model, x0, eps, H, grid, n_paths, seed, i * n_paths, a * scale, coordinate
        )
        reports.append(_tail_report(eps, a, hits, n_paths, kappa ** -2, rate))
    return reports


# --------------------------------------------------------------------------
# Gaussian-limit error curve
# --------------------------------------------------------------------------


def clt_error_curve(
    model: CoefficientModel,
    x0,
    eps_list: Sequence[float],
    p: float,
    H: float,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    couple: bool = True,
    degenerate_tol: float = 1e-24,
) -> ScalingReport:
    """Decay of E sup_t |(X^eps - X^0)/eps^H - Z|^p against eps.

    ``couple=True`` drives the limit process with the same fBm bundles as
    the particle system (the regime the p*H exponent describes);
    ``couple=False`` is the negative control with independent bundles,
    whose error does not decay.  Families whose rescaled deviation equals
    the limit process exactly leave only roundoff; estimates at or below
    ``degenerate_tol`` are treated as identically zero and reported with
    a NaN slope instead of fitting noise.
    """
    check_hurst(H)
    base = limit_ode(model, x0, grid)
    estimates = []
    for i, eps in enumerate(eps_list):
        ens = solve_mckean(model, x0, eps, H, grid, n_paths, seed, i * n_paths)
        z_noise = ens.noise
        if not couple:
            z_noise = sample_volterra(
                H, grid, model.dim, n_paths, seed, i * n_paths, stream=_rng.STREAM_DECOUPLED
            )
        zl = clt_limit(model, x0, z_noise, grid)
        dev = (ens.paths - base.values[None, :, :]) / eps ** H - zl.z_paths
        sup = np.max(np.linalg.norm(dev, axis=2), axis=1)
        vals = sup ** p
        estimates.append((float(np.mean(vals)), float(np.std(vals, ddof=1) / np.sqrt(vals.size))))
    if all(m > 0 for m, _ in estimates):
        rep = scaling_exponent(
            [(e, m) for e, (m, _) in zip(eps_list, estimates)], expected_slope=p * H
        )
        rep.estimates = [(m, s) for m, s in estimates]
        return rep
    return ScalingReport(
        eps_list=list(eps_list),
        estimates=estimates,
        slope=math.nan,
        slope_ci=(math.nan, math.nan),
        expected_slope=p * H,
    )
