"""Hierarchical (1D FEM x transverse modes) Galerkin solver.

The same code runs HiMod (educated cosine modes) and HiPhomε (orthonormalised
correctors): only the :class:`ModalBasis` differs. With the affine fibre map
the transverse measure is the constant width ``l``, so the weak form splits
into Kronecker products of 1D P1 operators and transverse coupling matrices:

    A = D_eps l (S (x) M) + (D_eps / l) (Mx (x) K) + l (C (x) Adv) + sigma l (Mx (x) M)

Unknowns are node-major (all modes of node ``s`` contiguous), which makes the
system block-tridiagonal with ``m x m`` blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, DomainError, SolverError
from .fem1d import BlockTridiagonal, Mesh1D, assemble_operators, check_peclet, PECLET_LIMIT
from .geometry import ChannelDomain, ProblemData, VelocityProfile, fibre_map_psi, max_speed
from .modal_basis import ModalBasis, coupling_integrals


@dataclass
class ReducedSystem:
    stiffness: BlockTridiagonal
    mass: BlockTridiagonal
    load: np.ndarray
    dirichlet: np.ndarray
    basis: ModalBasis
    mesh: Mesh1D
    problem: ProblemData
    domain: ChannelDomain
    mesh_peclet: float
    _factors: dict = field(default_factory=dict, repr=False)

    @property
    def modes(self) -> int:
        return self.basis.size

    def steady_matrix(self) -> BlockTridiagonal:
        A = self.stiffness.copy()
        A.pin_block_rows(0)
        return A

    def steady_rhs(self) -> np.ndarray:
        b = self.load.copy()
        b[: self.modes] = self.dirichlet
        return b

    def theta_factor(self, dt: float, theta: float):
        key = (float(dt), float(theta))
        if key not in self._factors:
            lhs = self.mass.scaled_add(1.0 / dt, self.stiffness, theta)
            lhs.pin_block_rows(0)
            self._factors[key] = lhs.factorize()
        return self._factors[key]

    def initial_state(self, t: float = 0.0) -> "ReducedSolution":
        """Constant initial value projected on the modes.

        The inlet rows are not pinned here; each time step imposes them.
        """
        c = np.repeat((self.problem.initial * self.dirichlet_profile())[:, None], self.mesh.size, axis=1)
        return ReducedSolution(c, self, t)

    def dirichlet_profile(self) -> np.ndarray:
        """Modal coordinates of the unit constant, ``int chi_k``."""
        return self.basis.quadrature.integrate(self.basis.values)


@dataclass(frozen=True)
class ReducedSolution:
    """Modal coefficients ``coeffs[k, s]`` (mode ``k``, mesh node ``s``) at time ``t``."""

    coeffs: np.ndarray
    system: ReducedSystem
    t: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.ascontiguousarray(self.coeffs.T).ravel()

    def _check(self, x, z):
        dom = self.system.domain
        x = np.asarray(x, dtype=float)
        if np.any(x < -1e-12 * dom.length) or np.any(x > dom.length * (1 + 1e-12)):
            raise DomainError("x outside the supporting fibre")
        return np.clip(x, 0.0, dom.length), fibre_map_psi(dom, z)

    def evaluate(self, x, z) -> np.ndarray:
        """``sum_k c_k(x) chi_k(psi(z))`` at matching points ``x``, ``z``."""
        x, zh = self._check(x, z)
        shape = np.broadcast(x, zh).shape
        x, zh = np.broadcast_to(x, shape).ravel(), np.broadcast_to(zh, shape).ravel()
        ck = self.system.mesh.interpolate(self.coeffs, x)
        modes = self.system.basis.evaluate(zh)
        return np.sum(ck * modes, axis=0).reshape(shape)

    def evaluate_grid(self, xs, zs) -> np.ndarray:
        """Values on the tensor lattice ``xs x zs``, shape ``(len(xs), len(zs))``."""
        xs, zh = self._check(xs, zs)
        ck = self.system.mesh.interpolate(self.coeffs, xs)
        return ck.T @ self.system.basis.evaluate(zh)

    __call__ = evaluate_grid

    def inlet_trace(self, zh) -> np.ndarray:
        return self.coeffs[:, 0] @ self.system.basis.evaluate(zh)


def assemble(
    problem: ProblemData,
    basis: ModalBasis,
    mesh: Mesh1D,
    profile: VelocityProfile,
    domain: ChannelDomain,
    peclet_limit: float = PECLET_LIMIT,
) -> ReducedSystem:
    """Build the block system for a basis, mesh and problem.

    Raises
    ------
    PecletError
        If ``max|u| h / (2 D_eps) >= peclet_limit``.
    ValueError
        If the mesh does not span ``[0, L]`` or the problem's ``epsilon`` does
        not match the domain.
    """
    if abs(mesh.length - domain.length) > 1e-12 * domain.length:
        raise ValueError("mesh does not span the channel length")
    if abs(problem.epsilon - domain.epsilon) > 1e-14:
        raise ValueError("problem and domain disagree on epsilon")
    d_eps = problem.diffusion_eps
    pe = check_peclet(max_speed(profile, domain), mesh.h, d_eps, peclet_limit)
    ops = assemble_operators(mesh)
    cp = coupling_integrals(basis, profile, domain)
    l = domain.width
    A = BlockTridiagonal.kron(
        [
            (ops.stiffness, d_eps * l * cp.mass),
            (ops.mass, (d_eps / l) * cp.stiffness + problem.reaction * l * cp.mass),
            (ops.convection, l * cp.advection),
        ]
    )
    Mt = BlockTridiagonal.kron([(ops.mass, l * cp.mass)])
    load = problem.forcing * l * np.outer(ops.load, cp.mean_mode).ravel()
    g = problem.inlet * cp.mean_mode
    return ReducedSystem(A, Mt, load, g, basis, mesh, problem, domain, pe)


def _residual(A: BlockTridiagonal, x, b) -> float:
    r = np.linalg.norm(A.matvec(x) - b)
    nb = np.linalg.norm(b)
    return float(r / nb) if nb > 0 else float(r)


def solve_steady(system: ReducedSystem, tol: float = 1e-10) -> ReducedSolution:
    A = system.steady_matrix()
    b = system.steady_rhs()
    x = A.factorize().solve(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("steady solve produced non-finite values")
    res = _residual(A, x, b)
    if res > tol:
        raise SolverError(f"steady residual {res:.3e} above {tol:g}")
    return ReducedSolution(x.reshape(system.mesh.size, system.modes).T.copy(), system, np.inf)


def step_theta(system: ReducedSystem, state: ReducedSolution, dt: float, theta: float, step: int = 0) -> ReducedSolution:
    """One theta-method step with the inlet rows pinned to the Dirichlet data."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    factor = system.theta_factor(dt, theta)
    c = state.vector
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = system.mass.matvec(c) / dt + system.load
        if theta < 1.0:
            rhs -= (1.0 - theta) * system.stiffness.matvec(c)
        rhs[: system.modes] = system.dirichlet
        if not np.all(np.isfinite(rhs)):
            raise BlowUpError(step)
        new = factor.solve(rhs)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(step)
    return ReducedSolution(new.reshape(system.mesh.size, system.modes).T.copy(), system, state.t + dt)


def integrate(
    system: ReducedSystem,
    dt: float,
    theta: float,
    t_end: float,
    snapshots=(),
    state: ReducedSolution | None = None,
) -> dict:
    """March from ``state`` (default: the initial condition) to ``t_end``.

    Returns ``{t: ReducedSolution}`` for each requested snapshot time (matched
    to the nearest step) plus the final time.
    """
    nsteps = int(round(t_end / dt))
    wanted = {int(round(t / dt)): t for t in snapshots}
    wanted[nsteps] = t_end
    state = state or system.initial_state()
    out = {}
    if 0 in wanted:
        out[wanted[0]] = state
    for n in range(1, nsteps + 1):
        state = step_theta(system, state, dt, theta, step=n)
        if n in wanted:
            out[wanted[n]] = ReducedSolution(state.coeffs, system, n * dt)
    return out
