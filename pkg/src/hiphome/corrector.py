"""High-order homogenisation correctors on the rescaled transverse fibre.

The correctors solve, for ``i >= 1``,

    D chi_i'' = fluct(u_f chi_{i-1} - D chi_{i-2})  on (-Y, Y),
    D chi_i'(+-Y) = 0,   chi_i(0) = 0,

with ``chi_0 = 1``, ``chi_{-1} = 0`` and ``u_f = fluct(u_hat)``. Here ``fluct``
always means the deviation from the transverse average, never a derivative.

They are computed from the closed-form double antiderivative (running
integrals based at ``y = 0``); :func:`oracle_corrector_bvp` solves the same
two-point problem by finite differences and serves only as a cross-check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ResolutionError, SolverError
from .geometry import ChannelDomain, VelocityProfile, rescaled_velocity


def _check_samples(samples):
    g = np.asarray(samples, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise ValueError("need at least two grid samples")
    return g


def _simpson_weights(n_nodes: int) -> np.ndarray:
    """Composite Simpson weights (in units of the spacing) for an odd node count."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("composite Simpson needs an odd number (>= 3) of nodes")
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def cumulative_simpson(g, spacing: float) -> np.ndarray:
    """Running integral ``int_{y_0}^{y_j} g`` on a uniform grid (odd node count).

    Each pair of intervals uses the parabola through its three nodes, so the
    value at every even node is exactly the composite Simpson sum.
    """
    g = _check_samples(g)
    n = g.size
    if n % 2 == 0:
        raise ValueError("cumulative Simpson needs an odd number of nodes")
    f0, f1, f2 = g[0:-2:2], g[1:-1:2], g[2::2]
    left = spacing * (5.0 * f0 + 8.0 * f1 - f2) / 12.0
    right = spacing * (-f0 + 8.0 * f1 + 5.0 * f2) / 12.0
    pieces = np.empty(n - 1)
    pieces[0::2] = left
    pieces[1::2] = right
    out = np.zeros(n)
    np.cumsum(pieces, out=out[1:])
    return out


def centred_cumulative_simpson(g, spacing: float) -> np.ndarray:
    """Running integral ``int_0^{y_j} g`` based at the centre node.

    Each half is accumulated outward from the centre, so mirror-symmetric
    input gives mirror-symmetric (or antisymmetric) output bit for bit and
    roundoff only builds up over half the grid. Needs ``(n - 1) / 2`` even.
    """
    g = _check_samples(g)
    n = g.size
    if n % 2 == 0 or (n // 2) % 2:
        raise ValueError("centred cumulative Simpson needs (n - 1) divisible by 4")
    c = n // 2
    right = cumulative_simpson(g[c:], spacing)
    left = -cumulative_simpson(g[c::-1], spacing)[::-1]
    return np.concatenate([left[:-1], right])


def transverse_average(samples, half_width: float | None = None) -> float:
    """Mean of grid samples over ``[-Y, Y]`` by composite Simpson.

    The spacing cancels, so ``half_width`` is accepted only for symmetry with
    the other helpers. Even node counts fall back to the trapezoidal rule.
    A constant input returns that constant exactly.
    """
    g = _check_samples(samples)
    base = g[0]
    dev = g - base
    n = g.size
    if n % 2 == 1:
        w = _simpson_weights(n)
    else:
        w = np.ones(n)
        w[[0, -1]] = 0.5
    return float(base + np.dot(w, dev) / (n - 1))


def fluctuation(samples, half_width: float | None = None) -> np.ndarray:
    g = _check_samples(samples)
    return g - transverse_average(g)


@dataclass(frozen=True)
class CorrectorSet:
    """Correctors ``chi_0..chi_k`` sampled on ``N_y + 1`` uniform nodes.

    Row ``i`` of ``values`` is ``chi_i``; row ``i - 1`` of ``phi``, ``Phi`` and
    entry ``i - 1`` of ``phi_mean`` hold the source and its running integral
    for order ``i``.
    """

    order: int
    y: np.ndarray
    values: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    phi_mean: np.ndarray
    velocity: np.ndarray
    diffusion: float
    half_width: float

    @property
    def spacing(self) -> float:
        return float(self.y[1] - self.y[0])

    def derivative(self, i: int) -> np.ndarray:
        """``chi_i'`` from the running integral (exact at the discrete level)."""
        if i == 0:
            return np.zeros_like(self.y)
        Y = self.half_width
        Phi = self.Phi[i - 1]
        return (Phi - Phi[0] - (Y + self.y) * self.phi_mean[i - 1]) / self.diffusion

    def neumann_residual(self, i: int) -> float:
        dchi = self.derivative(i)
        return float(self.diffusion * max(abs(dchi[0]), abs(dchi[-1])))

    def to_csv(self, path) -> Path:
        """Write ``y, chi_1..chi_k, phi_1..phi_k`` columns."""
        path = Path(path)
        k = self.order
        header = ["y"] + [f"chi_{i}" for i in range(1, k + 1)] + [f"phi_{i}" for i in range(1, k + 1)]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for j, yj in enumerate(self.y):
                row = [yj] + [self.values[i, j] for i in range(1, k + 1)]
                row += [self.phi[i, j] for i in range(k)]
                w.writerow([f"{v:.17g}" for v in row])
        return path


def _recursion(u_hat, y, D, k_max):
    n = y.size
    h = y[1] - y[0]
    Y = -y[0]
    u_f = fluctuation(u_hat)
    values = np.zeros((k_max + 1, n))
    values[0] = 1.0
    phi = np.zeros((k_max, n))
    Phi = np.zeros((k_max, n))
    phi_mean = np.zeros(k_max)
    for i in range(1, k_max + 1):
        prev2 = values[i - 2] if i >= 2 else 0.0
        phi_i = u_f * values[i - 1] - D * prev2
        Phi_i = centred_cumulative_simpson(phi_i, h)
        Psi_i = centred_cumulative_simpson(Phi_i, h)
        # mean and linear term from the same half-sums, so that an even
        # source gives an exactly even corrector
        mean_i = (Phi_i[-1] - Phi_i[0]) / (2.0 * Y)
        slope_i = 0.5 * (Phi_i[-1] + Phi_i[0])
        values[i] = (Psi_i - slope_i * y - 0.5 * y**2 * mean_i) / D
        phi[i - 1] = phi_i
        Phi[i - 1] = Phi_i
        phi_mean[i - 1] = mean_i
    return values, phi, Phi, phi_mean


def compute_correctors(
    profile: VelocityProfile,
    domain: ChannelDomain,
    D: float,
    k_max: int,
    n_y: int = 2048,
    tol_bc: float = 1e-8,
    tol_resolution: float = 1e-8,
) -> CorrectorSet:
    """Correctors up to order ``k_max`` on a uniform ``n_y``-interval grid.

    Parameters
    ----------
    profile, domain
        Velocity profile and channel; the grid spans ``[-Y, Y]`` with
        ``Y = l / (2 eps)``.
    D : float
        Order-one diffusion scale.
    k_max : int
        Highest corrector index; ``0`` returns only ``chi_0 = 1``.
    n_y : int
        Number of grid intervals, a multiple of 8 and at least 64, so that
        both halves of the grid and of the half-resolution check grid hold an
        even number of Simpson intervals.

    Raises
    ------
    ResolutionError
        If the Neumann residual exceeds ``tol_bc * max(1, |phi_i|_inf)`` or the
        half-grid recomputation differs by more than
        ``tol_resolution * max(1, |chi_i|_inf)``.
    """
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    if D <= 0:
        raise ValueError("D must be positive")
    if n_y < 64 or n_y % 8:
        raise ValueError("n_y must be a multiple of 8 and at least 64")
    Y = domain.half_width_rescaled
    # k / half is exactly antisymmetric in floating point, unlike linspace
    half = n_y // 2
    y = Y * (np.arange(-half, half + 1) / half)
    u_hat = rescaled_velocity(profile, domain, y)
    values, phi, Phi, phi_mean = _recursion(u_hat, y, D, k_max)
    cs = CorrectorSet(k_max, y, values, phi, Phi, phi_mean, u_hat, float(D), Y)

    if k_max > 0:
        coarse, _, _, _ = _recursion(u_hat[::2], y[::2], D, k_max)
        for i in range(1, k_max + 1):
            res = cs.neumann_residual(i)
            if res > tol_bc * max(1.0, float(np.max(np.abs(phi[i - 1])))):
                raise ResolutionError(f"Neumann condition violated for chi_{i}", res)
            gap = float(np.max(np.abs(coarse[i] - values[i, ::2])))
            if gap > tol_resolution * max(1.0, float(np.max(np.abs(values[i])))):
                raise ResolutionError(f"grid too coarse for chi_{i}; raise n_y", gap)
    return cs


@dataclass(frozen=True)
class EffectiveCoefficients:
    mean_velocity: float
    dispersion: float
    enhancement: float


def taylor_dispersion(
    correctors: CorrectorSet,
    profile: VelocityProfile,
    domain: ChannelDomain,
    D: float,
    epsilon: float,
) -> EffectiveCoefficients:
    """Mean velocity and Taylor dispersion coefficient from ``chi_1``.

    ``D_eff = eps D [1 + (u_mean mean(chi_1) - mean(u chi_1)) / D]``.
    """
    if correctors.order < 1:
        raise ValueError("Taylor dispersion needs correctors of order >= 1")
    u_hat = correctors.velocity
    chi1 = correctors.values[1]
    u_mean = transverse_average(u_hat)
    gain = (u_mean * transverse_average(chi1) - transverse_average(u_hat * chi1)) / D
    d_eff = epsilon * D * (1.0 + gain)
    return EffectiveCoefficients(u_mean, d_eff, d_eff / (epsilon * D))


def oracle_corrector_bvp(
    profile: VelocityProfile,
    domain: ChannelDomain,
    D: float,
    i: int,
    lower,
    n_y: int,
) -> np.ndarray:
    """Finite-difference solution of the order-``i`` corrector problem.

    ``lower`` holds ``chi_{i-2}`` and ``chi_{i-1}`` sampled on the same
    ``n_y + 1`` node grid (any longer sequence is accepted, the last two rows
    are used; ``chi_{-1}`` is taken as zero for ``i = 1``). Second-order
    central differences with ghost-node Neumann rows; the trapezoidal mean is
    removed from the source to make the singular system consistent, and the
    centre row is replaced by the pin ``chi(0) = 0``.
    """
    if i < 1:
        raise ValueError("oracle is defined for i >= 1")
    Y = domain.half_width_rescaled
    if n_y < 4 or n_y % 2:
        raise ValueError("oracle grid needs an even number of intervals")
    y = Y * (np.arange(-(n_y // 2), n_y // 2 + 1) / (n_y // 2))
    n = y.size
    h = y[1] - y[0]
    lower = [np.asarray(v, dtype=float) for v in lower]
    chi_m1 = lower[-1]
    chi_m2 = lower[-2] if i >= 2 else np.zeros(n)

    trap = np.full(n, h)
    trap[[0, -1]] = 0.5 * h
    u = rescaled_velocity(profile, domain, y)
    u_f = u - np.dot(trap, u) / (2.0 * Y)
    b = (u_f * chi_m1 - D * chi_m2) / D
    b = b - np.dot(trap, b) / (2.0 * Y)

    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower_d = np.ones(n - 1)
    upper[0] = 2.0
    lower_d[-1] = 2.0
    A = sp.diags([lower_d, main, upper], [-1, 0, 1], format="lil") / h**2
    c = n // 2
    A[c, :] = 0.0
    A[c, c] = 1.0
    b[c] = 0.0
    try:
        chi = spla.spsolve(A.tocsc(), b)
    except RuntimeError as exc:
        raise SolverError(f"oracle system singular: {exc}") from exc
    if not np.all(np.isfinite(chi)):
        raise SolverError("oracle system singular after pinning")
    return chi
