"""Sample-level statistics: kernelized distance matrices, U-centering,
bias-corrected (kernel) distance covariance and correlation, the brute-force
U-statistic oracle, and the truncated-statistic cross-check pair."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Callable, Optional

import numpy as np

from .matcore import Matrix, as_matrix, check_symmetric, pairwise_sq_distances

ORACLE_MAX_N = 12

# degenerate-denominator guard for distance correlation ratios
_DENOM_FLOOR = 1e-300


class SampleTooSmall(Exception):
    """Fewer observations than the estimator's denominators allow."""


class DegenerateSample(Exception):
    """All pairwise distances vanish; data-driven bandwidths are undefined."""


@dataclass(frozen=True)
class PairedSample:
    """Aligned observation matrices: x is n x p, y is n x q."""

    x: Matrix
    y: Matrix

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        y = as_matrix(self.y, "y")
        if x.shape[0] != y.shape[0]:
            raise ValueError(
                f"row counts differ: x has {x.shape[0]}, y has {y.shape[0]}"
            )
        if x.shape[0] < 1:
            raise ValueError("need at least one observation")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel f applied to distance/bandwidth ratios, with derivative.

    Built-ins: identity f(w)=w, gaussian f(w)=exp(-w^2/2), laplace
    f(w)=exp(-w). Custom kernels must supply f_prime explicitly; no numerical
    differentiation happens downstream.
    """

    kind: str
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[float], float]


def identity_kernel() -> KernelSpec:
    return KernelSpec("identity", lambda w: w, lambda w: 1.0)


def gaussian_kernel() -> KernelSpec:
    return KernelSpec(
        "gaussian",
        lambda w: np.exp(-0.5 * np.square(w)),
        lambda w: -w * math.exp(-0.5 * w * w),
    )


def laplace_kernel() -> KernelSpec:
    return KernelSpec("laplace", lambda w: np.exp(-w), lambda w: -math.exp(-w))


def custom_kernel(f, f_prime) -> KernelSpec:
    return KernelSpec("custom", f, f_prime)


_KERNELS = {
    "identity": identity_kernel,
    "gaussian": gaussian_kernel,
    "laplace": laplace_kernel,
}


def kernel_by_name(name: str) -> KernelSpec:
    try:
        return _KERNELS[name]()
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; expected one of {sorted(_KERNELS)}"
        ) from None


@dataclass(frozen=True)
class BandwidthSpec:
    """Bandwidth policy: fixed gamma, median pairwise distance, or a target
    ratio rho = tau/gamma inverted against the (population or estimated) tau."""

    policy: str
    gamma: Optional[float] = None
    rho_target: Optional[float] = None

    def __post_init__(self):
        if self.policy == "fixed":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("fixed bandwidth requires gamma > 0")
        elif self.policy == "rho":
            if self.rho_target is None or not self.rho_target > 0:
                raise ValueError("rho bandwidth requires rho_target > 0")
        elif self.policy != "median":
            raise ValueError(f"unknown bandwidth policy {self.policy!r}")

    @classmethod
    def fixed(cls, gamma: float) -> "BandwidthSpec":
        return cls("fixed", gamma=float(gamma))

    @classmethod
    def median(cls) -> "BandwidthSpec":
        return cls("median")

    @classmethod
    def rho(cls, rho_target: float) -> "BandwidthSpec":
        return cls("rho", rho_target=float(rho_target))

    @classmethod
    def parse(cls, text: str) -> "BandwidthSpec":
        """Grammar: ``fixed:<gamma>``, ``median``, ``rho:<rho_target>``."""
        if text == "median":
            return cls.median()
        head, sep, value = text.partition(":")
        if sep and head == "fixed":
            return cls.fixed(float(value))
        if sep and head == "rho":
            return cls.rho(float(value))
        raise ValueError(f"cannot parse bandwidth spec {text!r}")

    def label(self) -> str:
        if self.policy == "fixed":
            return f"fixed:{self.gamma!r}"
        if self.policy == "rho":
            return f"rho:{self.rho_target!r}"
        return "median"


def kernel_matrix(x, kernel: KernelSpec, gamma: float) -> Matrix:
    """Entry (k,l) = f(|X_k - X_l| / gamma) off the diagonal, 0 on it.

    The zero diagonal applies to every kernel, identity included; for the
    identity kernel the result is the plain distance matrix over gamma.
    """
    if not gamma > 0:
        raise ValueError(f"bandwidth must be positive, got {gamma}")
    d = np.sqrt(pairwise_sq_distances(x)) / gamma
    k = kernel.f(d)
    k = np.asarray(k, dtype=np.float64)
    np.fill_diagonal(k, 0.0)
    if not np.all(np.isfinite(k)):
        raise ValueError(f"{kernel.kind} kernel produced non-finite values")
    return k


def u_center(a) -> Matrix:
    """U-centered version of a symmetric zero-diagonal matrix.

    A* = A - (11'A + A11')/(n-2) + 11'A11'/((n-1)(n-2)), diagonal forced to
    zero. Off-diagonal row sums of the result vanish. Requires n >= 4.
    """
    m = check_symmetric(a, "u_center input")
    n = m.shape[0]
    if n < 4:
        raise SampleTooSmall(f"u_center needs n >= 4, got {n}")
    row = m.sum(axis=1, keepdims=True)
    col = m.sum(axis=0, keepdims=True)
    total = float(m.sum())
    out = m - (row + col) / (n - 2) + total / ((n - 1) * (n - 2))
    np.fill_diagonal(out, 0.0)
    return out


def _u_inner(a_star: Matrix, b_star: Matrix) -> float:
    n = a_star.shape[0]
    return float(np.sum(a_star * b_star)) / (n * (n - 3))


def dcov_star(sample: PairedSample) -> float:
    """Bias-corrected sample distance covariance (identity kernel).

    (1/(n(n-3))) sum_{k != l} A*_{kl} B*_{kl}; may be negative.
    """
    a = u_center(kernel_matrix(sample.x, identity_kernel(), 1.0))
    b = u_center(kernel_matrix(sample.y, identity_kernel(), 1.0))
    return _u_inner(a, b)


def dcov_star_marginal(x) -> float:
    """dcov_star of a block with itself; a sum of squares, hence >= 0."""
    a = u_center(kernel_matrix(x, identity_kernel(), 1.0))
    return _u_inner(a, a)


def dcov_star_kernel(
    sample: PairedSample,
    kernels: tuple[KernelSpec, KernelSpec],
    gamma: tuple[float, float],
) -> float:
    """Generalized sample distance covariance with per-block kernels and
    bandwidths, built on zero-diagonal kernel matrices."""
    kx, ky = kernels
    gx, gy = gamma
    a = u_center(kernel_matrix(sample.x, kx, gx))
    b = u_center(kernel_matrix(sample.y, ky, gy))
    return _u_inner(a, b)


def dcov_star_kernel_marginal(x, kernel: KernelSpec, gamma: float) -> float:
    a = u_center(kernel_matrix(x, kernel, gamma))
    return _u_inner(a, a)


def dcor_star(
    sample: PairedSample,
    kernels: tuple[KernelSpec, KernelSpec] = (identity_kernel(), identity_kernel()),
    gamma: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Kernelized distance correlation with the 0/0 -> 0 convention.

    Finite-sample marginals are sums of squares, so a denominator product
    <= 0 can only arise through round-off; it is treated as the degenerate
    case and maps to 0.
    """
    v_xy = dcov_star_kernel(sample, kernels, gamma)
    v_x = dcov_star_kernel_marginal(sample.x, kernels[0], gamma[0])
    v_y = dcov_star_kernel_marginal(sample.y, kernels[1], gamma[1])
    denom_sq = v_x * v_y
    if denom_sq <= 0.0 or denom_sq < _DENOM_FLOOR:
        return 0.0
    return v_xy / math.sqrt(denom_sq)


def pairwise_distance_median(x) -> float:
    """Median over {|X_s - X_t| : s < t}, lower-median for even counts."""
    d = np.sqrt(pairwise_sq_distances(x))
    n = d.shape[0]
    if n < 2:
        raise SampleTooSmall("median bandwidth needs n >= 2")
    upper = d[np.triu_indices(n, k=1)]
    if np.all(upper == 0.0):
        raise DegenerateSample("all pairwise distances are zero")
    upper.sort()
    return float(upper[(upper.size - 1) // 2])


def estimate_tau(x) -> float:
    """sqrt of the mean squared pairwise distance over distinct pairs."""
    d2 = pairwise_sq_distances(x)
    n = d2.shape[0]
    if n < 2:
        raise SampleTooSmall("tau estimation needs n >= 2")
    return math.sqrt(float(d2[np.triu_indices(n, k=1)].mean()))


def resolve_bandwidth(x, spec: BandwidthSpec, tau: Optional[float] = None) -> float:
    """Resolve a bandwidth policy to a concrete gamma for one data block.

    ``tau`` supplies the population value for the rho policy; when None the
    value is estimated from the data.
    """
    if spec.policy == "fixed":
        return float(spec.gamma)
    if spec.policy == "median":
        return pairwise_distance_median(x)
    t = float(tau) if tau is not None else estimate_tau(x)
    return t / float(spec.rho_target)


def dcov_ustat_oracle(sample: PairedSample) -> float:
    """Brute-force 4th-order U-statistic evaluation of the sample distance
    covariance: mean of the symmetrized kernel over all 4-subsets and all 24
    orderings. Combinatorial cost caps n at 12."""
    n = sample.n
    if not 4 <= n <= ORACLE_MAX_N:
        raise ValueError(f"oracle supports 4 <= n <= {ORACLE_MAX_N}, got {n}")
    a = np.sqrt(pairwise_sq_distances(sample.x))
    b = np.sqrt(pairwise_sq_distances(sample.y))
    total = 0.0
    for quad in combinations(range(n), 4):
        acc = 0.0
        for i1, i2, i3, i4 in permutations(quad):
            acc += (
                a[i1, i2] * b[i1, i2]
                + a[i1, i2] * b[i3, i4]
                - 2.0 * a[i1, i2] * b[i1, i3]
            )
        total += acc / 24.0
    return total / math.comb(n, 4)


def _check_blocks_shape(sample: PairedSample, blocks) -> None:
    p, q = sample.x.shape[1], sample.y.shape[1]
    if blocks.p != p or blocks.q != q:
        raise ValueError(
            f"covariance blocks are ({blocks.p},{blocks.q}) "
            f"but data is ({p},{q})"
        )


def tbar_fluctuation(sample: PairedSample, blocks) -> float:
    """Fluctuation of the truncated statistic around its constant term,
    computed through the three aggregate sums of its closed-form
    representation (ordered distinct pairs throughout):

        psi1 = sum_{i != j} (X_i'X_j Y_i'Y_j - |S_xy|_F^2)
        psi2 = sum_{i != j} (X_i'S_xy Y_j + X_j'S_xy Y_i)
        psi3 = sum_i [ (|S_xy|_F^2/tau_x^2)(|X_i|^2 - tr S_x)
                     + (|S_xy|_F^2/tau_y^2)(|Y_i|^2 - tr S_y) ]

    returning (psi1 - psi2)/(tau_x tau_y 2 C(n,2)) - psi3/(tau_x tau_y n).
    Agrees with ``hoeffding_sum`` exactly.
    """
    _check_blocks_shape(sample, blocks)
    x, y = sample.x, sample.y
    n = sample.n
    if n < 2:
        raise SampleTooSmall("tbar_fluctuation needs n >= 2")
    sxy = blocks.sigma_xy
    f2 = float(np.sum(sxy * sxy))
    tau_x_sq = 2.0 * float(np.trace(blocks.sigma_x))
    tau_y_sq = 2.0 * float(np.trace(blocks.sigma_y))
    tau_prod = math.sqrt(tau_x_sq * tau_y_sq)

    cross = (x @ x.T) * (y @ y.T)
    psi1 = float(cross.sum() - np.trace(cross)) - n * (n - 1) * f2

    g = x @ sxy
    diag_gy = np.einsum("ij,ij->i", g, y)
    psi2 = 2.0 * (float(g.sum(axis=0) @ y.sum(axis=0)) - float(diag_gy.sum()))

    dev_x = np.sum(x * x, axis=1) - float(np.trace(blocks.sigma_x))
    dev_y = np.sum(y * y, axis=1) - float(np.trace(blocks.sigma_y))
    psi3 = f2 / tau_x_sq * float(dev_x.sum()) + f2 / tau_y_sq * float(dev_y.sum())

    return (psi1 - psi2) / (tau_prod * n * (n - 1)) - psi3 / (tau_prod * n)


def hoeffding_sum(sample: PairedSample, blocks) -> float:
    """Same fluctuation via the first- and second-order main-term kernels:
    4 U_n(g1) + 6 U_n(g2), with the unknown constant term dropped
    symmetrically with ``tbar_fluctuation``."""
    _check_blocks_shape(sample, blocks)
    x, y = sample.x, sample.y
    n = sample.n
    if n < 2:
        raise SampleTooSmall("hoeffding_sum needs n >= 2")
    sxy = blocks.sigma_xy
    f2 = float(np.sum(sxy * sxy))
    tr_x = float(np.trace(blocks.sigma_x))
    tr_y = float(np.trace(blocks.sigma_y))
    tau_x_sq, tau_y_sq = 2.0 * tr_x, 2.0 * tr_y
    tau_prod = math.sqrt(tau_x_sq * tau_y_sq)

    d = np.einsum("ij,ij->i", x @ sxy, y)  # d_i = X_i' S_xy Y_i
    dev_x = np.sum(x * x, axis=1) - tr_x
    dev_y = np.sum(y * y, axis=1) - tr_y
    g1 = (
        d - f2 - f2 / (2.0 * tau_x_sq) * dev_x - f2 / (2.0 * tau_y_sq) * dev_y
    ) / (2.0 * tau_prod)
    u1 = float(g1.mean())

    cross = (x @ x.T) * (y @ y.T)  # cross[i,j] = X_i'X_j Y_i'Y_j
    e = x @ sxy @ y.T  # e[i,j] = X_i' S_xy Y_j
    iu = np.triu_indices(n, k=1)
    pair_vals = (
        cross[iu] - d[iu[0]] - d[iu[1]] + f2 - e[iu] - e.T[iu]
    ) / (6.0 * tau_prod)
    u2 = float(pair_vals.mean())

    return 4.0 * u1 + 6.0 * u2
