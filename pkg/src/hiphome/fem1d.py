"""Linear finite elements on the supporting fibre and a block-tridiagonal solver."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import PecletError, SolverError

PECLET_LIMIT = 2.0


@dataclass(frozen=True)
class Mesh1D:
    nodes: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def h(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def length(self) -> float:
        return float(self.nodes[-1])

    def interpolate(self, coeffs, x) -> np.ndarray:
        """P1 interpolation of nodal ``coeffs`` (last axis = node) at points ``x``."""
        x = np.asarray(x, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        h = self.h
        s = np.clip(np.floor(x / h).astype(int), 0, self.size - 2)
        t = (x - self.nodes[s]) / h
        return coeffs[..., s] * (1.0 - t) + coeffs[..., s + 1] * t


def build_mesh(length: float, h: float) -> Mesh1D:
    """Uniform mesh of ``[0, length]`` with ``round(length / h) + 1`` nodes."""
    if not (h > 0) or not (length > 0):
        raise ValueError("mesh size and length must be positive")
    if h >= length:
        raise ValueError("mesh size must be smaller than the length")
    n = int(round(length / h)) + 1
    if n < 3:
        raise ValueError("mesh needs at least three nodes")
    if abs((length / (n - 1)) - h) > 1e-9 * h:
        raise ValueError(f"h = {h} does not divide L = {length}")
    return Mesh1D(np.linspace(0.0, length, n))


@dataclass(frozen=True)
class Tridiagonal:
    """Tridiagonal ``N x N`` matrix as three diagonals."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def matvec(self, v) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.lower * v[:-1]
        out[:-1] += self.upper * v[1:]
        return out

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)


@dataclass(frozen=True)
class Operators1D:
    mass: Tridiagonal
    stiffness: Tridiagonal
    convection: Tridiagonal
    load: np.ndarray


def assemble_operators(mesh: Mesh1D) -> Operators1D:
    """Exact P1 mass, stiffness and convection matrices on a uniform mesh.

    ``convection[r, s] = int theta_r theta_s'`` (row = test, column = trial);
    ``load[r] = int theta_r``.
    """
    n, h = mesh.size, mesh.h
    ones = np.ones(n - 1)

    m_diag = np.full(n, 2.0 * h / 3.0)
    m_diag[[0, -1]] = h / 3.0
    mass = Tridiagonal(ones * h / 6.0, m_diag, ones * h / 6.0)

    s_diag = np.full(n, 2.0 / h)
    s_diag[[0, -1]] = 1.0 / h
    stiff = Tridiagonal(-ones / h, s_diag, -ones / h)

    c_diag = np.zeros(n)
    c_diag[0], c_diag[-1] = -0.5, 0.5
    conv = Tridiagonal(-0.5 * ones, c_diag, 0.5 * ones)

    load = np.full(n, h)
    load[[0, -1]] = 0.5 * h
    return Operators1D(mass, stiff, conv, load)


def mesh_peclet(speed: float, h: float, diffusion: float) -> float:
    return abs(speed) * h / (2.0 * diffusion)


def check_peclet(speed: float, h: float, diffusion: float, limit: float = PECLET_LIMIT) -> float:
    pe = mesh_peclet(speed, h, diffusion)
    if pe >= limit:
        raise PecletError(pe, limit)
    return pe


@dataclass
class BlockTridiagonal:
    """Block-tridiagonal matrix with ``N`` diagonal blocks of size ``m x m``.

    Row block ``s`` couples to blocks ``s - 1`` (``lower[s - 1]``), ``s``
    (``diag[s]``) and ``s + 1`` (``upper[s]``). Unknowns are node-major.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def nblocks(self) -> int:
        return self.diag.shape[0]

    @property
    def blocksize(self) -> int:
        return self.diag.shape[1]

    @classmethod
    def kron(cls, terms) -> "BlockTridiagonal":
        """Sum of Kronecker products ``sum_i T_i (x) B_i`` for tridiagonal ``T_i``."""
        lower = diag = upper = 0.0
        for tri, block in terms:
            lower = lower + tri.lower[:, None, None] * block[None]
            diag = diag + tri.diag[:, None, None] * block[None]
            upper = upper + tri.upper[:, None, None] * block[None]
        return cls(np.array(lower), np.array(diag), np.array(upper))

    def copy(self) -> "BlockTridiagonal":
        return BlockTridiagonal(self.lower.copy(), self.diag.copy(), self.upper.copy())

    def scaled_add(self, alpha: float, other: "BlockTridiagonal", beta: float = 1.0) -> "BlockTridiagonal":
        """``alpha * self + beta * other``."""
        return BlockTridiagonal(
            alpha * self.lower + beta * other.lower,
            alpha * self.diag + beta * other.diag,
            alpha * self.upper + beta * other.upper,
        )

    def matvec(self, v) -> np.ndarray:
        x = np.asarray(v).reshape(self.nblocks, self.blocksize)
        out = np.einsum("sij,sj->si", self.diag, x)
        out[1:] += np.einsum("sij,sj->si", self.lower, x[:-1])
        out[:-1] += np.einsum("sij,sj->si", self.upper, x[1:])
        return out.ravel()

    def pin_block_rows(self, s: int) -> None:
        """Turn the rows of block ``s`` into identity rows (essential condition)."""
        m = self.blocksize
        self.diag[s] = np.eye(m)
        if s > 0:
            self.lower[s - 1] = 0.0
        if s < self.nblocks - 1:
            self.upper[s] = 0.0

    def dense(self) -> np.ndarray:
        n, m = self.nblocks, self.blocksize
        out = np.zeros((n * m, n * m))
        for s in range(n):
            out[s * m:(s + 1) * m, s * m:(s + 1) * m] = self.diag[s]
            if s > 0:
                out[s * m:(s + 1) * m, (s - 1) * m:s * m] = self.lower[s - 1]
            if s < n - 1:
                out[s * m:(s + 1) * m, (s + 1) * m:(s + 2) * m] = self.upper[s]
        return out

    def factorize(self) -> "BlockLU":
        return BlockLU(self)


class BlockLU:
    """Block Thomas factorisation (no pivoting across blocks).

    Forward sweep: ``S_0 = D_0``, ``S_s = D_s - L_{s-1} S_{s-1}^{-1} U_{s-1}``;
    each Schur block is LU-factorised with partial pivoting.
    """

    def __init__(self, A: BlockTridiagonal):
        n = A.nblocks
        self.A = A
        self.schur = []
        self.gain = np.zeros_like(A.upper)  # S_s^{-1} U_s
        try:
            S = A.diag[0]
            for s in range(n):
                if s > 0:
                    S = A.diag[s] - A.lower[s - 1] @ self.gain[s - 1]
                with warnings.catch_warnings():
                    # a zero pivot is reported below as a SolverError
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    lu = sla.lu_factor(S, check_finite=True)
                if np.any(np.diag(lu[0]) == 0.0):
                    raise SolverError(f"singular Schur block at node {s}")
                self.schur.append(lu)
                if s < n - 1:
                    self.gain[s] = sla.lu_solve(lu, A.upper[s])
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SolverError(f"block factorisation failed: {exc}") from exc

    def solve(self, rhs) -> np.ndarray:
        A = self.A
        n, m = A.nblocks, A.blocksize
        b = np.asarray(rhs, dtype=float).reshape(n, m)
        y = np.empty((n, m))
        y[0] = sla.lu_solve(self.schur[0], b[0])
        for s in range(1, n):
            y[s] = sla.lu_solve(self.schur[s], b[s] - A.lower[s - 1] @ y[s - 1])
        x = np.empty((n, m))
        x[-1] = y[-1]
        for s in range(n - 2, -1, -1):
            x[s] = y[s] - self.gain[s] @ x[s + 1]
        return x.ravel()


def solve_adr_1d(
    mesh: Mesh1D,
    velocity: float,
    diffusion: float,
    reaction: float,
    forcing: float,
    inlet: float,
    source=None,
    check: bool = True,
) -> np.ndarray:
    """Steady 1D ADR solve with Dirichlet inlet and natural outflow.

    ``source`` optionally adds a spatially varying forcing ``g(x)``,
    integrated with 3-point Gauss per element (used for manufactured tests).
    """
    if check:
        check_peclet(velocity, mesh.h, diffusion)
    ops = assemble_operators(mesh)
    one = np.ones((1, 1))
    A = BlockTridiagonal.kron(
        [
            (ops.stiffness, diffusion * one),
            (ops.convection, velocity * one),
            (ops.mass, reaction * one),
        ]
    )
    b = forcing * ops.load
    if source is not None:
        b = b + load_vector(mesh, source)
    A.pin_block_rows(0)
    b[0] = inlet
    return A.factorize().solve(b)


def load_vector(mesh: Mesh1D, g) -> np.ndarray:
    """``int g theta_r`` with 3-point Gauss quadrature on each element."""
    xi, wi = np.polynomial.legendre.leggauss(3)
    x0 = mesh.nodes[:-1]
    h = mesh.h
    pts = x0[:, None] + 0.5 * h * (xi[None, :] + 1.0)
    lam = 0.5 * (xi + 1.0)
    gv = g(pts) * (0.5 * h * wi)[None, :]
    b = np.zeros(mesh.size)
    b[:-1] += gv @ (1.0 - lam)
    b[1:] += gv @ lam
    return b
