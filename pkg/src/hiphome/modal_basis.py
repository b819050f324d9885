"""Orthonormal transverse bases on the reference fibre ``[0, 1]``.

Two families compete:

* ``hiphome``: Gram-Schmidt orthonormalised homogenisation correctors;
* ``educated``: Neumann eigenfunctions ``1, sqrt(2) cos(k pi zh)`` of ``-d^2/dzh^2``.

A ``legendre`` family (orthonormalised monomials) is also available.
Every basis stores values and first derivatives at a fixed composite
Gauss-Legendre rule and can evaluate its modes anywhere on ``[0, 1]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .corrector import CorrectorSet
from .errors import DegeneracyError, DomainError
from .geometry import ChannelDomain, VelocityProfile, fibre_map_psi_inverse

FAMILIES = ("hiphome", "educated", "legendre")

TOL_ORTH = 1e-10
TOL_DEGENERATE = 1e-12


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values) -> np.ndarray:
        return np.asarray(values) @ self.weights


def gauss_panels(panels: int = 256, order: int = 4) -> Quadrature:
    """Composite Gauss-Legendre rule on ``[0, 1]``."""
    xi, wi = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
    weights = (half[:, None] * wi[None, :]).ravel()
    return Quadrature(nodes, weights)


class _CorrectorTraces:
    """Cubic-spline traces of ``chi_i^*(y(zh))`` on ``[0, 1]``."""

    def __init__(self, correctors: CorrectorSet, count: int):
        zh = (correctors.y - correctors.y[0]) / (correctors.y[-1] - correctors.y[0])
        self.splines = [CubicSpline(zh, correctors.values[i]) for i in range(count)]

    def values(self, zh, derivative=0):
        return np.array([s(zh, derivative) for s in self.splines])


class _Monomials:
    def __init__(self, count: int):
        self.count = count

    def values(self, zh, derivative=0):
        zh = np.asarray(zh, dtype=float)
        out = np.zeros((self.count, zh.size))
        for k in range(self.count):
            if derivative == 0:
                out[k] = zh**k
            elif k >= 1:
                out[k] = k * zh ** (k - 1)
        return out


@dataclass(frozen=True)
class ModalBasis:
    """``m`` orthonormal modes on ``[0, 1]``.

    ``values[k, q]`` and ``derivs[k, q]`` are mode ``k`` and its derivative at
    quadrature node ``q``. For the Gram-Schmidt families, ``transform`` maps
    the raw inputs to the modes (``modes = transform @ raw``) and ``p``/``a``
    hold the projection coefficients and residual norms.
    """

    family: str
    values: np.ndarray
    derivs: np.ndarray
    quadrature: Quadrature
    p: np.ndarray | None = None
    a: np.ndarray | None = None
    transform: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    _raw: object = field(default=None, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def evaluate(self, zh, derivative: int = 0) -> np.ndarray:
        """Mode values (or first derivatives) at arbitrary points, shape ``(m, n)``."""
        zh = np.atleast_1d(np.asarray(zh, dtype=float))
        if np.any(zh < -1e-12) or np.any(zh > 1 + 1e-12):
            raise DomainError("reference coordinate outside [0, 1]")
        zh = np.clip(zh, 0.0, 1.0)
        if self.family == "educated":
            return _cosines(self.size, zh, derivative)
        if self._raw is None:
            raise DomainError("basis built from bare samples cannot be evaluated off its nodes")
        raw = self._raw.values(zh, derivative)[: self.transform.shape[1]]
        return self.transform @ raw

    def gram(self) -> np.ndarray:
        return (self.values * self.quadrature.weights) @ self.values.T

    def gram_defect(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.size))))

    def truncate(self, m: int) -> "ModalBasis":
        """First ``m`` modes (nested hierarchy)."""
        if not 1 <= m <= self.size:
            raise ValueError(f"cannot take {m} modes from a basis of {self.size}")
        return ModalBasis(
            self.family,
            self.values[:m],
            self.derivs[:m],
            self.quadrature,
            None if self.p is None else self.p[:m, :m],
            None if self.a is None else self.a[:m],
            None if self.transform is None else self.transform[:m, :m],
            None if self.eigenvalues is None else self.eigenvalues[:m],
            self._raw,
        )

    def to_csv(self, path, n_points: int = 1001) -> Path:
        """Write mode traces on a uniform grid: ``zhat, mode_0, ..., mode_{m-1}``."""
        path = Path(path)
        zh = np.linspace(0.0, 1.0, n_points)
        vals = self.evaluate(zh)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["zhat"] + [f"mode_{k}" for k in range(self.size)])
            for q in range(n_points):
                w.writerow([f"{zh[q]:.17g}"] + [f"{vals[k, q]:.17g}" for k in range(self.size)])
        return path


def _cosines(m, zh, derivative=0):
    k = np.arange(m)[:, None]
    scale = np.where(k == 0, 1.0, np.sqrt(2.0))
    if derivative == 0:
        return scale * np.cos(k * np.pi * zh[None, :])
    return -scale * k * np.pi * np.sin(k * np.pi * zh[None, :])


def educated_basis(m: int, D: float = 1.0, quadrature: Quadrature | None = None) -> ModalBasis:
    """Cosine eigenfunctions of ``-phi'' = lambda phi`` with Neumann ends.

    Reported eigenvalues are ``D (k pi)^2``.
    """
    if m < 1:
        raise ValueError("need at least one mode")
    q = quadrature or gauss_panels()
    vals = _cosines(m, q.nodes)
    ders = _cosines(m, q.nodes, derivative=1)
    lam = D * (np.arange(m) * np.pi) ** 2
    return ModalBasis("educated", vals, ders, q, eigenvalues=lam)


def gram_schmidt(
    raw_values,
    m: int,
    quadrature: Quadrature,
    raw_derivs=None,
    family: str = "hiphome",
    raw=None,
) -> ModalBasis:
    """Orthonormalise the first ``m`` rows of ``raw_values`` in ``L^2(0, 1)``.

    Modified Gram-Schmidt with one reorthogonalisation pass. Row 0 must be the
    constant 1. Each output mode is signed so that its value at ``zh = 1`` is
    non-negative (ties broken at ``zh = 0``), which requires ``raw`` for
    endpoint evaluation; without it the sign of the last quadrature node is
    used instead.

    Raises
    ------
    DegeneracyError
        If a residual norm ``a_i`` falls below ``1e-12 * |raw_i|``.
    """
    V = np.asarray(raw_values, dtype=float)
    if V.ndim != 2 or V.shape[0] < m or V.shape[1] != quadrature.size:
        raise ValueError("raw functions must have shape (>= m, quadrature size)")
    if not np.allclose(V[0], 1.0, rtol=0, atol=1e-12):
        raise ValueError("raw function 0 must be the constant 1")
    w = quadrature.weights
    T = np.eye(m)
    modes = np.zeros((m, V.shape[1]))
    p = np.zeros((m, m))
    a = np.zeros(m)
    for i in range(m):
        v = V[i].copy()
        t = np.zeros(m)
        t[i] = 1.0
        raw_norm = np.sqrt(np.dot(w, V[i] ** 2))
        for _ in range(2):
            for j in range(i):
                c = np.dot(w, v * modes[j])
                v -= c * modes[j]
                t -= c * T[j]
                p[i, j] += c
        norm = np.sqrt(np.dot(w, v**2))
        if norm <= TOL_DEGENERATE * raw_norm or norm == 0.0:
            raise DegeneracyError(i, norm)
        a[i] = norm
        modes[i] = v / norm
        T[i] = t / norm
    if raw is not None:
        ends = T @ raw.values(np.array([1.0, 0.0]))[:m]
    else:
        ends = modes[:, [-1, 0]]
    for i in range(m):
        hi, lo = ends[i]
        flip = hi < 0 or (hi == 0 and lo < 0)
        if abs(hi) <= 1e-14 * max(1.0, np.max(np.abs(modes[i]))):
            flip = lo < 0
        if flip:
            modes[i] *= -1.0
            T[i] *= -1.0
    derivs = T @ np.asarray(raw_derivs, dtype=float)[:m] if raw_derivs is not None else np.zeros_like(modes)
    basis = ModalBasis(family, modes, derivs, quadrature, p, a, T, None, raw)
    defect = basis.gram_defect()
    if defect > TOL_ORTH:
        raise DegeneracyError(int(np.argmax(np.max(np.abs(basis.gram() - np.eye(m)), axis=1))), defect)
    return basis


def hiphome_basis(correctors: CorrectorSet, m: int, quadrature: Quadrature | None = None) -> ModalBasis:
    """Orthonormalised correctors ``chi_0..chi_{m-1}`` on the reference fibre."""
    if correctors.order < m - 1:
        raise ValueError(f"need correctors up to order {m - 1}, have {correctors.order}")
    q = quadrature or gauss_panels()
    raw = _CorrectorTraces(correctors, m)
    return gram_schmidt(raw.values(q.nodes), m, q, raw.values(q.nodes, 1), "hiphome", raw)


def legendre_basis(m: int, quadrature: Quadrature | None = None) -> ModalBasis:
    """Shifted orthonormal Legendre polynomials via Gram-Schmidt of monomials."""
    q = quadrature or gauss_panels()
    raw = _Monomials(m)
    return gram_schmidt(raw.values(q.nodes), m, q, raw.values(q.nodes, 1), "legendre", raw)


@dataclass(frozen=True)
class Couplings:
    mass: np.ndarray
    stiffness: np.ndarray
    advection: np.ndarray
    mean_mode: np.ndarray


def coupling_integrals(basis: ModalBasis, profile: VelocityProfile, domain: ChannelDomain) -> Couplings:
    """Transverse integrals over the reference fibre.

    ``mass[j, k] = int chi_j chi_k``, ``stiffness[j, k] = int chi_j' chi_k'``,
    ``advection[j, k] = int u(z(zh)) chi_j chi_k`` and ``mean_mode[k] = int chi_k``.
    """
    q = basis.quadrature
    if basis.values.shape[1] != q.size:
        raise ValueError("basis samples do not match its quadrature nodes")
    w = q.weights
    u = profile(fibre_map_psi_inverse(domain, q.nodes))
    V, dV = basis.values, basis.derivs
    M = (V * w) @ V.T
    K = (dV * w) @ dV.T
    A = (V * (w * u)) @ V.T
    return Couplings(M, K, A, V @ w)
