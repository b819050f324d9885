"""Full-order and homogenised baselines.

* :func:`solve_reference_2d` -- P1 Galerkin on a structured triangulation of
  the channel (each lattice cell split along its rising diagonal);
* :func:`solve_leading_order` -- pure advection-reaction with first-order
  upwinding (artificial diffusion ``u_mean h / 2``);
* :func:`solve_effective` -- 1D ADR with the Taylor dispersion coefficient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .corrector import EffectiveCoefficients
from .errors import BlowUpError, DomainError, SolverError
from .fem1d import BlockTridiagonal, Mesh1D, assemble_operators, check_peclet
from .geometry import ChannelDomain, ProblemData, VelocityProfile, max_speed


@dataclass(frozen=True)
class TimeSpec:
    dt: float
    theta: float
    t_end: float
    snapshots: tuple = ()

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def wanted(self) -> dict:
        """``{step index: requested time}`` including the final time."""
        out = {int(round(t / self.dt)): float(t) for t in self.snapshots}
        out[self.steps] = float(self.t_end)
        return out


@dataclass(frozen=True)
class ReferenceField2D:
    """Nodal values ``values[i, j]`` at ``(xs[i], zs[j])``."""

    xs: np.ndarray
    zs: np.ndarray
    values: np.ndarray
    t: float = np.inf

    def evaluate(self, x, z) -> np.ndarray:
        """P1 interpolation at matching points (exact at lattice nodes)."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        x0, z0 = self.xs[0], self.zs[0]
        dx, dz = self.xs[1] - x0, self.zs[1] - z0
        tol = 1e-12
        if (np.any(x < x0 - tol) or np.any(x > self.xs[-1] + tol)
                or np.any(z < z0 - tol) or np.any(z > self.zs[-1] + tol)):
            raise DomainError("point outside the reference lattice")
        fi = (x - x0) / dx
        fj = (z - z0) / dz
        i = np.clip(np.floor(fi).astype(int), 0, self.xs.size - 2)
        j = np.clip(np.floor(fj).astype(int), 0, self.zs.size - 2)
        s = np.clip(fi - i, 0.0, 1.0)
        r = np.clip(fj - j, 0.0, 1.0)
        v = self.values
        v00, v10, v01, v11 = v[i, j], v[i + 1, j], v[i, j + 1], v[i + 1, j + 1]
        lower = v00 + s * (v10 - v00) + r * (v11 - v10)
        upper = v00 + r * (v01 - v00) + s * (v11 - v01)
        return np.where(s >= r, lower, upper)

    def evaluate_grid(self, xs, zs) -> np.ndarray:
        X, Z = np.meshgrid(np.asarray(xs, float), np.asarray(zs, float), indexing="ij")
        return self.evaluate(X, Z)

    __call__ = evaluate_grid

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "z", "c"])
            for i, xi in enumerate(self.xs):
                for j, zj in enumerate(self.zs):
                    w.writerow([f"{xi:.17g}", f"{zj:.17g}", f"{self.values[i, j]:.17g}"])
        return path


def _lattice_triangles(nx, nz):
    idx = np.arange(nx * nz).reshape(nx, nz)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def assemble_2d(problem: ProblemData, profile: VelocityProfile, domain: ChannelDomain, nx: int, nz: int, source=None):
    """Sparse P1 operators ``(A, M, b, xs, zs)`` before boundary conditions."""
    xs = np.linspace(0.0, domain.length, nx)
    zs = np.linspace(-0.5 * domain.width, 0.5 * domain.width, nz)
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    px, pz = X.ravel(), Z.ravel()
    tri = _lattice_triangles(nx, nz)
    x = px[tri]
    z = pz[tri]
    # barycentric gradients: grad(lambda_a) = (z_b - z_c, x_c - x_b) / (2 area)
    det = (x[:, 1] - x[:, 0]) * (z[:, 2] - z[:, 0]) - (x[:, 2] - x[:, 0]) * (z[:, 1] - z[:, 0])
    area = 0.5 * np.abs(det)
    gx = np.stack([z[:, 1] - z[:, 2], z[:, 2] - z[:, 0], z[:, 0] - z[:, 1]], 1) / det[:, None]
    gz = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], 1) / det[:, None]

    d_eps = problem.diffusion_eps
    K = d_eps * area[:, None, None] * (gx[:, :, None] * gx[:, None, :] + gz[:, :, None] * gz[:, None, :])
    Mloc = area[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12.0
    # edge-midpoint rule for int u lambda_a; midpoint m_ab has lambda_a = lambda_b = 1/2
    zm = 0.5 * (z[:, [0, 1, 2]] + z[:, [1, 2, 0]])  # midpoints of edges 01, 12, 20
    um = profile(zm)
    ul = np.stack([um[:, 0] + um[:, 2], um[:, 0] + um[:, 1], um[:, 1] + um[:, 2]], 1) * (area / 6.0)[:, None]
    C = ul[:, :, None] * gx[:, None, :]
    local = K + C + problem.reaction * Mloc

    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = nx * nz
    A = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((Mloc.ravel(), (rows, cols)), shape=(n, n))
    b = np.zeros(n)
    np.add.at(b, tri.ravel(), np.repeat(problem.forcing * area / 3.0, 3))
    if source is not None:
        xm = 0.5 * (x[:, [0, 1, 2]] + x[:, [1, 2, 0]])
        gm = source(xm, zm)
        gl = np.stack([gm[:, 0] + gm[:, 2], gm[:, 0] + gm[:, 1], gm[:, 1] + gm[:, 2]], 1) * (area / 6.0)[:, None]
        np.add.at(b, tri.ravel(), gl.ravel())
    return A, M, b, xs, zs


def _pin_rows(A, rows):
    A = A.tolil()
    for r in rows:
        A.rows[r] = [r]
        A.data[r] = [1.0]
    return A.tocsc()


def solve_reference_2d(
    problem: ProblemData,
    profile: VelocityProfile,
    domain: ChannelDomain,
    nx: int,
    nz: int,
    time: TimeSpec | None = None,
    source=None,
    inlet=None,
):
    """Full P1 solution on an ``nx x nz`` node lattice.

    Steady when ``time`` is None (returns a :class:`ReferenceField2D`);
    otherwise a theta-method trajectory ``{t: ReferenceField2D}`` at the
    requested snapshot times. ``source(x, z)`` and ``inlet(z)`` override the
    constant forcing / inlet data (used by manufactured-solution tests).
    """
    dx = domain.length / (nx - 1)
    d_eps = problem.diffusion_eps
    check_peclet(max_speed(profile, domain), dx, d_eps)
    A, M, b, xs, zs = assemble_2d(problem, profile, domain, nx, nz, source)
    inlet_rows = np.arange(nz)
    g = np.full(nz, problem.inlet) if inlet is None else np.asarray(inlet(zs), dtype=float)

    if time is None:
        Ap = _pin_rows(A, inlet_rows)
        rhs = b.copy()
        rhs[inlet_rows] = g
        try:
            c = spla.splu(Ap).solve(rhs)
        except RuntimeError as exc:
            raise SolverError(f"2D reference solve failed: {exc}") from exc
        if not np.all(np.isfinite(c)):
            raise SolverError("2D reference solve produced non-finite values")
        return ReferenceField2D(xs, zs, c.reshape(nx, nz))

    dt, theta = time.dt, time.theta
    lhs = _pin_rows((M / dt + theta * A).tocsr(), inlet_rows)
    lu = spla.splu(lhs)
    explicit = (M / dt - (1.0 - theta) * A).tocsr()
    # the inlet rows take the boundary data from the first step on
    c = np.full(nx * nz, problem.initial, dtype=float)
    wanted = time.wanted()
    out = {}
    if 0 in wanted:
        out[wanted[0]] = ReferenceField2D(xs, zs, c.reshape(nx, nz).copy(), 0.0)
    for n in range(1, time.steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = explicit @ c + b
            rhs[inlet_rows] = g
            if not np.all(np.isfinite(rhs)):
                raise BlowUpError(n)
            c = lu.solve(rhs)
        if not np.all(np.isfinite(c)):
            raise BlowUpError(n)
        if n in wanted:
            out[wanted[n]] = ReferenceField2D(xs, zs, c.reshape(nx, nz).copy(), n * dt)
    return out


@dataclass(frozen=True)
class EffectiveField1D:
    """Nodal 1D field, extended constantly across the channel on evaluation."""

    mesh: Mesh1D
    values: np.ndarray
    velocity: float
    diffusion: float
    reaction: float
    forcing: float
    mesh_peclet: float
    t: float = np.inf

    def evaluate_grid(self, xs, zs) -> np.ndarray:
        col = self.mesh.interpolate(self.values, xs)
        return np.repeat(col[:, None], np.size(zs), axis=1)

    __call__ = evaluate_grid


def _solve_1d(mesh, velocity, diffusion, problem: ProblemData, time: TimeSpec | None, pe):
    ops = assemble_operators(mesh)
    one = np.ones((1, 1))
    A = BlockTridiagonal.kron(
        [
            (ops.stiffness, diffusion * one),
            (ops.convection, velocity * one),
            (ops.mass, problem.reaction * one),
        ]
    )
    b = problem.forcing * ops.load
    make = lambda vals, t: EffectiveField1D(  # noqa: E731
        mesh, vals, velocity, diffusion, problem.reaction, problem.forcing, pe, t
    )
    if time is None:
        Ap = A.copy()
        Ap.pin_block_rows(0)
        rhs = b.copy()
        rhs[0] = problem.inlet
        return make(Ap.factorize().solve(rhs), np.inf)

    M = BlockTridiagonal.kron([(ops.mass, one)])
    dt, theta = time.dt, time.theta
    lhs = M.scaled_add(1.0 / dt, A, theta)
    lhs.pin_block_rows(0)
    lu = lhs.factorize()
    c = np.full(mesh.size, float(problem.initial))
    wanted = time.wanted()
    out = {}
    if 0 in wanted:
        out[wanted[0]] = make(c.copy(), 0.0)
    for n in range(1, time.steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = M.matvec(c) / dt + b
            if theta < 1.0:
                rhs -= (1.0 - theta) * A.matvec(c)
            rhs[0] = problem.inlet
            if not np.all(np.isfinite(rhs)):
                raise BlowUpError(n)
            c = lu.solve(rhs)
        if not np.all(np.isfinite(c)):
            raise BlowUpError(n)
        if n in wanted:
            out[wanted[n]] = make(c.copy(), n * dt)
    return out


def solve_leading_order(
    problem: ProblemData, mean_velocity: float, mesh: Mesh1D, time: TimeSpec | None = None
):
    """``c_t + u_mean c_x + sigma c = f`` with first-order upwinding."""
    if mean_velocity <= 0:
        raise ValueError("leading-order model needs a positive mean velocity")
    artificial = 0.5 * mean_velocity * mesh.h
    return _solve_1d(mesh, mean_velocity, artificial, problem, time, 1.0)


def solve_effective(
    problem: ProblemData,
    coefficients: EffectiveCoefficients,
    mesh: Mesh1D,
    time: TimeSpec | None = None,
):
    """Homogenised 1D ADR with ``(u_mean, D_eff, sigma, f)``."""
    d_eff = coefficients.dispersion
    if d_eff < problem.diffusion_eps * (1 - 1e-12):
        raise ValueError("D_eff below eps D")
    pe = check_peclet(coefficients.mean_velocity, mesh.h, d_eff)
    return _solve_1d(mesh, coefficients.mean_velocity, d_eff, problem, time, pe)

