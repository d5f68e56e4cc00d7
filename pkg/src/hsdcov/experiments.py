"""Monte-Carlo runners: central-limit verification (standardized statistics
against normal quantiles) and power / power-universality tables, plus the
Kolmogorov-Smirnov and quantile utilities they report through.

Replications are pure functions of (master seed, replication index), so the
runners may fan out over threads without changing any output; aggregation is
a deterministic fold in replication order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dcovstats import (
    BandwidthSpec,
    KernelSpec,
    identity_kernel,
    u_center,
)
from .matcore import frobenius_norm_sq, pairwise_sq_distances
from .simgen import NoiseDist, SimScenario, derive_stream, sample_factor, sample_gaussian
from .testkit import normal_cdf, normal_quantile
from .theory import CovarianceBlocks, mean_expansion, sigma_bar_sq, tau_sq, theoretical_power, varrho

QUANTILE_PROBS = tuple(round(0.01 * i, 2) for i in range(1, 100))


class ReplicationError(Exception):
    """A statistic failed inside one replication; carries the index."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"replication {index} failed: {cause}")
        self.index = index


def ks_distance(xs: Sequence[float]) -> float:
    """Sup distance between the empirical CDF of ``xs`` and the standard
    normal CDF: max over order statistics of
    max(i/B - Phi(x_(i)), Phi(x_(i)) - (i-1)/B)."""
    arr = np.asarray(xs, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("ks_distance needs at least one value")
    if not np.all(np.isfinite(arr)):
        raise ValueError("ks_distance requires finite values")
    arr = np.sort(arr)
    b = arr.size
    best = 0.0
    for i, x in enumerate(arr, start=1):
        phi = normal_cdf(float(x))
        best = max(best, i / b - phi, phi - (i - 1) / b)
    return best


def empirical_quantiles(xs: Sequence[float], probs: Sequence[float]) -> list[float]:
    """Order-statistic quantiles with linear interpolation at position
    p (B - 1) + 1 of the sorted sample."""
    arr = np.asarray(xs, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empirical_quantiles needs at least one value")
    return [float(v) for v in np.quantile(arr, list(probs), method="linear")]


def _ordered_map(fn: Callable[[int], object], count: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _resolve_gamma_from_distance(
    dist: np.ndarray, spec: BandwidthSpec, tau: Optional[float]
) -> float:
    """Bandwidth resolution given a precomputed distance matrix."""
    if spec.policy == "fixed":
        return float(spec.gamma)
    n = dist.shape[0]
    upper = dist[np.triu_indices(n, k=1)]
    if spec.policy == "median":
        if np.all(upper == 0.0):
            raise ValueError("all pairwise distances are zero")
        upper = np.sort(upper)
        return float(upper[(upper.size - 1) // 2])
    t = float(tau) if tau is not None else math.sqrt(float(np.mean(upper * upper)))
    return t / float(spec.rho_target)


def _kernel_centered(dist: np.ndarray, kernel: KernelSpec, gamma: float) -> np.ndarray:
    k = np.asarray(kernel.f(dist / gamma), dtype=np.float64)
    np.fill_diagonal(k, 0.0)
    return u_center(k)


@dataclass(frozen=True)
class CltConfig:
    """One CLT verification run.

    Data comes from either a factor-model scenario or explicit Gaussian
    blocks with a sample size. Standardization modes: ``theory`` divides the
    kernel statistic by the kernel scaling and standardizes with the
    closed-form mean/variance; ``null`` applies the local standardization
    n (tau_x tau_y v - |S_xy|_F^2) / (sqrt(2) |S_x|_F |S_y|_F); ``empirical``
    centers and scales by the replication sample mean and SD.
    """

    reps: int
    seed: int
    scenario: Optional[SimScenario] = None
    blocks: Optional[CovarianceBlocks] = None
    n: Optional[int] = None
    kernels: tuple[KernelSpec, KernelSpec] = (identity_kernel(), identity_kernel())
    bandwidths: tuple[BandwidthSpec, BandwidthSpec] = (
        BandwidthSpec.fixed(1.0),
        BandwidthSpec.fixed(1.0),
    )
    standardize: str = "empirical"
    center: str = "theory"
    threads: int = 1

    def __post_init__(self):
        if self.reps < 2:
            raise ValueError("need at least 2 replications")
        if (self.scenario is None) == (self.blocks is None):
            raise ValueError("provide exactly one of scenario or blocks")
        if self.blocks is not None and self.n is None:
            raise ValueError("blocks require an explicit sample size n")
        if self.standardize not in ("theory", "null", "empirical"):
            raise ValueError(f"unknown standardization {self.standardize!r}")
        if self.center not in ("theory", "empirical"):
            raise ValueError(f"unknown centering {self.center!r}")

    def effective_blocks(self) -> CovarianceBlocks:
        return self.blocks if self.blocks is not None else self.scenario.implied_blocks()

    def effective_n(self) -> int:
        return self.n if self.n is not None else self.scenario.n


@dataclass
class CltResult:
    standardized: list[float]
    probs: list[float]
    sample_quantiles: list[float]
    normal_quantiles: list[float]
    ks_distance: float
    raw: list[float] = field(default_factory=list)


def _clt_replication(cfg: CltConfig, blocks: CovarianceBlocks, index: int):
    stream = derive_stream(cfg.seed, index)
    if cfg.scenario is not None:
        sample = sample_factor(cfg.scenario, stream)
        tau_pop = (cfg.scenario.population_tau(), cfg.scenario.population_tau())
    else:
        sample = sample_gaussian(blocks, cfg.n, stream)
        tau_pop = (
            math.sqrt(tau_sq(blocks.sigma_x)),
            math.sqrt(tau_sq(blocks.sigma_y)),
        )
    dist_x = np.sqrt(pairwise_sq_distances(sample.x))
    dist_y = np.sqrt(pairwise_sq_distances(sample.y))
    gamma_x = _resolve_gamma_from_distance(dist_x, cfg.bandwidths[0], tau_pop[0])
    gamma_y = _resolve_gamma_from_distance(dist_y, cfg.bandwidths[1], tau_pop[1])
    a_star = _kernel_centered(dist_x, cfg.kernels[0], gamma_x)
    b_star = _kernel_centered(dist_y, cfg.kernels[1], gamma_y)
    n = sample.n
    value = float(np.sum(a_star * b_star)) / (n * (n - 3))
    return value, gamma_x, gamma_y


def run_clt(cfg: CltConfig) -> CltResult:
    """Run the configured replications and standardize the statistics."""
    blocks = cfg.effective_blocks()
    n = cfg.effective_n()

    def worker(i: int):
        try:
            return _clt_replication(cfg, blocks, i)
        except Exception as exc:  # attach the replication index
            raise ReplicationError(i, exc) from exc

    results = _ordered_map(worker, cfg.reps, cfg.threads)
    values = np.array([r[0] for r in results])

    if cfg.standardize == "empirical":
        sd = float(values.std(ddof=1))
        standardized = (values - values.mean()) / sd if sd > 0 else np.zeros_like(values)
    else:
        scalings = np.array(
            [varrho(cfg.kernels, (gx, gy), blocks) for _, gx, gy in results]
        )
        rescaled = values / scalings
        if cfg.standardize == "null":
            tau_prod = math.sqrt(tau_sq(blocks.sigma_x) * tau_sq(blocks.sigma_y))
            f2 = frobenius_norm_sq(blocks.sigma_xy)
            denom = math.sqrt(2.0) * math.sqrt(
                frobenius_norm_sq(blocks.sigma_x) * frobenius_norm_sq(blocks.sigma_y)
            )
            standardized = n * (tau_prod * rescaled - f2) / denom
        else:
            centre = (
                mean_expansion(blocks)
                if cfg.center == "theory"
                else float(rescaled.mean())
            )
            scale = math.sqrt(sigma_bar_sq(blocks, n).total)
            standardized = (rescaled - centre) / scale

    probs = list(QUANTILE_PROBS)
    return CltResult(
        standardized=[float(v) for v in standardized],
        probs=probs,
        sample_quantiles=empirical_quantiles(standardized, probs),
        normal_quantiles=[normal_quantile(1.0 - p) for p in probs],
        ks_distance=ks_distance(standardized),
        raw=[float(v) for v in values],
    )


@dataclass(frozen=True)
class PowerConfig:
    """Power grid: every kernel is paired with every bandwidth policy, both
    applied to the two data blocks symmetrically."""

    n: int
    p: int
    rho_grid: tuple[float, ...]
    kernels: tuple[KernelSpec, ...] = (identity_kernel(),)
    bandwidths: tuple[BandwidthSpec, ...] = (BandwidthSpec.fixed(1.0),)
    alpha: float = 0.05
    reps: int = 500
    seed: int = 0
    dist: NoiseDist = NoiseDist.STD_NORMAL
    threads: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("need at least one replication")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0,1)")
        if not self.rho_grid:
            raise ValueError("rho grid must be nonempty")


@dataclass
class PowerCell:
    kernel: str
    bandwidth: str
    rho: float
    empirical_power: float
    theoretical_power: float
    std_err: float


@dataclass
class PowerResult:
    cells: list[PowerCell]


def _power_replication(cfg: PowerConfig, rho_index: int, rep: int) -> list[bool]:
    """One dataset, evaluated across every (kernel, bandwidth) cell; the
    distance matrices are shared so universality comparisons are paired."""
    rho = cfg.rho_grid[rho_index]
    scenario = SimScenario(n=cfg.n, p=cfg.p, rho=rho, dist=cfg.dist)
    stream = derive_stream(cfg.seed, rho_index * cfg.reps + rep)
    sample = sample_factor(scenario, stream)
    dist_x = np.sqrt(pairwise_sq_distances(sample.x))
    dist_y = np.sqrt(pairwise_sq_distances(sample.y))
    tau_pop = scenario.population_tau()
    threshold = normal_quantile(cfg.alpha / 2.0)

    centered: dict[tuple[str, str, int], tuple[np.ndarray, float]] = {}
    for kernel in cfg.kernels:
        for bw in cfg.bandwidths:
            for which, dist in ((0, dist_x), (1, dist_y)):
                key = (kernel.kind, bw.label(), which)
                if key in centered:
                    continue
                gamma = _resolve_gamma_from_distance(dist, bw, tau_pop)
                star = _kernel_centered(dist, kernel, gamma)
                centered[key] = (star, float(np.sum(star * star)))

    n = cfg.n
    rejections = []
    for kernel in cfg.kernels:
        for bw in cfg.bandwidths:
            a_star, v_x = centered[(kernel.kind, bw.label(), 0)]
            b_star, v_y = centered[(kernel.kind, bw.label(), 1)]
            v_xy = float(np.sum(a_star * b_star)) / (n * (n - 3))
            denom_sq = 2.0 * v_x * v_y / (n * (n - 3)) ** 2
            if denom_sq <= 0.0:
                rejections.append(False)
                continue
            stat = n * v_xy / math.sqrt(denom_sq)
            rejections.append(abs(stat) > threshold)
    return rejections


def run_power(cfg: PowerConfig) -> PowerResult:
    """Empirical rejection rate per (kernel, bandwidth, rho) cell alongside
    the closed-form power prediction."""
    n_cells = len(cfg.kernels) * len(cfg.bandwidths)
    rates = np.zeros((len(cfg.rho_grid), n_cells))
    for r_idx in range(len(cfg.rho_grid)):

        def worker(rep: int, _r=r_idx):
            try:
                return _power_replication(cfg, _r, rep)
            except Exception as exc:
                raise ReplicationError(rep, exc) from exc

        flags = _ordered_map(worker, cfg.reps, cfg.threads)
        rates[r_idx] = np.mean(np.asarray(flags, dtype=float), axis=0)

    cells = []
    for c_idx, kernel in enumerate(cfg.kernels):
        for b_idx, bw in enumerate(cfg.bandwidths):
            col = c_idx * len(cfg.bandwidths) + b_idx
            for r_idx, rho in enumerate(cfg.rho_grid):
                blocks = CovarianceBlocks.identity_blocks(cfg.p, cfg.p, rho)
                rate = float(rates[r_idx, col])
                cells.append(
                    PowerCell(
                        kernel=kernel.kind,
                        bandwidth=bw.label(),
                        rho=rho,
                        empirical_power=rate,
                        theoretical_power=theoretical_power(blocks, cfg.n, cfg.alpha),
                        std_err=math.sqrt(rate * (1.0 - rate) / cfg.reps),
                    )
                )
    return PowerResult(cells=cells)
