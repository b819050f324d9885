"""Error norms, QoI errors and convergence rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ChannelDomain

DEFAULT_LATTICE = (801, 81)


def _simpson_1d(n: int, a: float, b: float) -> np.ndarray:
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson lattice needs an odd number of points >= 3")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (b - a) / (3.0 * (n - 1))


def lattice(domain: ChannelDomain, nx: int, nz: int):
    """Evaluation lattice and tensor Simpson weights over the channel."""
    if nx < 8 or nz < 8:
        raise ValueError("evaluation lattice must be at least 8 x 8")
    half = 0.5 * domain.width
    xs = np.linspace(0.0, domain.length, nx)
    zs = np.linspace(-half, half, nz)
    W = np.outer(_simpson_1d(nx, 0.0, domain.length), _simpson_1d(nz, -half, half))
    return xs, zs, W


def l2_norm(field, domain: ChannelDomain, nx: int = DEFAULT_LATTICE[0], nz: int = DEFAULT_LATTICE[1]) -> float:
    """``||field||_{L^2}`` over the physical channel by tensor Simpson.

    ``field(xs, zs)`` must return values on the lattice, shape ``(nx, nz)``.
    """
    xs, zs, W = lattice(domain, nx, nz)
    v = np.asarray(field(xs, zs), dtype=float)
    return float(np.sqrt(np.sum(W * v * v)))


def difference(a, b):
    """Lattice evaluator of ``a - b``."""
    return lambda xs, zs: np.asarray(a(xs, zs)) - np.asarray(b(xs, zs))


def qoi_error(ref, red, domain: ChannelDomain, nx: int = DEFAULT_LATTICE[0], nz: int = DEFAULT_LATTICE[1]) -> float:
    """``| ||ref|| - ||red|| |`` in ``L^2`` over the channel."""
    return abs(l2_norm(ref, domain, nx, nz) - l2_norm(red, domain, nx, nz))


def errors_on_lattice(ref, red, domain: ChannelDomain, nx: int = DEFAULT_LATTICE[0], nz: int = DEFAULT_LATTICE[1]):
    """``(l2 error, QoI error)`` evaluating both fields once."""
    xs, zs, W = lattice(domain, nx, nz)
    r = np.asarray(ref(xs, zs), dtype=float)
    c = np.asarray(red(xs, zs), dtype=float)
    e = float(np.sqrt(np.sum(W * (r - c) ** 2)))
    J = abs(float(np.sqrt(np.sum(W * r * r))) - float(np.sqrt(np.sum(W * c * c))))
    return e, J


def eoc(errors, params) -> np.ndarray:
    """Pairwise rates ``log(e_i / e_{i+1}) / log(p_i / p_{i+1})``."""
    e = np.asarray(errors, dtype=float)
    p = np.asarray(params, dtype=float)
    if e.shape != p.shape or e.size < 2:
        raise ValueError("need matching sequences of at least two entries")
    if np.any(e <= 0):
        raise ValueError("errors must be positive")
    if np.any(p <= 0):
        raise ValueError("parameters must be positive")
    dp = np.diff(p)
    if not (np.all(dp > 0) or np.all(dp < 0)):
        raise ValueError("parameters must be strictly monotone")
    return np.log(e[:-1] / e[1:]) / np.log(p[:-1] / p[1:])


def pre_plateau(errors, rel_change: float = 0.05) -> int:
    """Length of the leading stretch before successive errors stall.

    Stops at the first index whose error changes by less than ``rel_change``
    relative to its predecessor.
    """
    e = np.asarray(errors, dtype=float)
    for i in range(1, e.size):
        if abs(e[i - 1] - e[i]) < rel_change * e[i - 1]:
            return i
    return e.size


def fitted_slope(errors, params, rel_change: float = 0.05) -> float:
    """Least-squares log-log slope over the pre-plateau range."""
    e = np.asarray(errors, dtype=float)
    p = np.asarray(params, dtype=float)
    n = pre_plateau(e, rel_change)
    if n < 2:
        raise ValueError("fewer than two pre-plateau points")
    slope, _ = np.polyfit(np.log(p[:n]), np.log(e[:n]), 1)
    return float(slope)


@dataclass(frozen=True)
class ErrorRecord:
    family: str
    m: int
    h: float
    l2_error: float
    qoi_error: float
    dt: float | None = None
    t: float | None = None
    wall_ms: float | None = None
    config: str = ""

    def __post_init__(self):
        if not self.l2_error >= 0:
            raise ValueError("L2 error must be non-negative")
        # reverse triangle inequality, up to lattice round-off
        if self.qoi_error > self.l2_error * (1 + 1e-9) + 1e-15:
            raise ValueError(f"QoI error {self.qoi_error} exceeds L2 error {self.l2_error}")
