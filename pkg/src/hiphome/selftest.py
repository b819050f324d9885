"""Invariant suite run by ``hiphome selftest``.

Each check yields a measured value, a tolerance and a verdict. The suite is
cheap (a few seconds) and fully deterministic, so its CSV doubles as a
reproducibility fingerprint.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .corrector import compute_correctors, cumulative_simpson, oracle_corrector_bvp, taylor_dispersion, transverse_average
from .errors import DegeneracyError
from .fem1d import assemble_operators, build_mesh, solve_adr_1d
from .geometry import ChannelDomain, ProblemData, VelocityProfile
from .metrics import eoc, l2_norm
from .modal_basis import educated_basis, hiphome_basis
from .reduced_solver import assemble, solve_steady
from .reference_models import solve_effective, solve_reference_2d

# exact Poiseuille dispersion for u = 20 (1 - y^2), Y = 1/2, D = 1, eps = 0.2
POISEUILLE_DISPERSION = 0.2 * 199.0 / 189.0


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool


def _le(name, value, tol) -> Check:
    value = float(value)
    return Check(name, value, float(tol), bool(value <= tol))


def _channel_domain() -> ChannelDomain:
    return ChannelDomain(2.0, 0.2, 0.2)


def corrector_checks() -> list:
    out = []
    y = np.linspace(-0.5, 0.5, 10001)
    out.append(_le("average_y2", abs(transverse_average(y**2) - 1.0 / 12.0), 1e-10))
    g = 3 * y**3 - y + 2
    exact = 0.75 * (y**4 - 0.0625) - 0.5 * (y**2 - 0.25) + 2 * (y + 0.5)
    out.append(_le("cumulative_simpson_cubic", np.max(np.abs(cumulative_simpson(g, y[1] - y[0])[::2] - exact[::2])), 1e-12))

    dom = _channel_domain()
    for name, prof in (("poiseuille", VelocityProfile.poiseuille(10.0, 0.2)), ("loglaw", VelocityProfile.loglaw(0.2))):
        cs = compute_correctors(prof, dom, 1.0, 4, n_y=4096)
        gap = 0.0
        for i in range(1, 5):
            fd = oracle_corrector_bvp(prof, dom, 1.0, i, cs.values[max(0, i - 2):i], 4096)
            gap = max(gap, float(np.max(np.abs(fd - cs.values[i]))))
        out.append(_le(f"oracle_gap_{name}", gap, 1e-6))

    shear_dom = ChannelDomain(2.0, 0.1, 0.1)
    cs = compute_correctors(VelocityProfile.linear_shear(1.0, 0.1), shear_dom, 1.0, 1)
    closed = cs.y**3 / 6.0 - 0.25 * cs.y / 2.0
    out.append(_le("linear_shear_chi1", np.max(np.abs(cs.values[1] - closed)), 1e-8))
    eff = taylor_dispersion(cs, VelocityProfile.linear_shear(1.0, 0.1), shear_dom, 1.0, 0.1)
    out.append(_le("linear_shear_dispersion", abs(eff.dispersion - 0.1 * (1 + 1 / 120)), 1e-8))

    prof = VelocityProfile.poiseuille(10.0, 0.2)
    eff = taylor_dispersion(compute_correctors(prof, dom, 1.0, 1), prof, dom, 1.0, 0.2)
    out.append(_le("poiseuille_dispersion", abs(eff.dispersion - POISEUILLE_DISPERSION), 1e-10))
    return out


def basis_checks() -> list:
    out = []
    dom = _channel_domain()
    out.append(_le("gram_educated_m12", educated_basis(12).gram_defect(), 1e-10))
    ll = VelocityProfile.loglaw(0.2)
    out.append(_le("gram_hiphome_loglaw_m12", hiphome_basis(compute_correctors(ll, dom, 1.0, 11), 12).gram_defect(), 1e-10))
    pois = VelocityProfile.poiseuille(10.0, 0.2)
    basis = hiphome_basis(compute_correctors(pois, dom, 1.0, 6), 7)
    out.append(_le("gram_hiphome_poiseuille_m7", basis.gram_defect(), 1e-10))
    zh = np.linspace(0.0, 1.0, 1001)
    v = basis.evaluate(zh)
    out.append(_le("symmetry_hiphome_poiseuille_m7", np.max(np.abs(v - v[:, ::-1])), 1e-8))
    e = educated_basis(8).evaluate(zh)
    parity = np.where(np.arange(8)[:, None] % 2 == 0, e - e[:, ::-1], e + e[:, ::-1])
    out.append(_le("parity_educated_m8", np.max(np.abs(parity)), 1e-12))
    return out


def degenerate_checks() -> list:
    out = []
    dom = _channel_domain()
    const = VelocityProfile.constant(5.0)
    cs = compute_correctors(const, dom, 1.0, 4)
    out.append(_le("constant_correctors_vanish", np.max(np.abs(cs.values[1:])), 0.0))
    eff = taylor_dispersion(cs, const, dom, 1.0, 0.2)
    out.append(_le("constant_dispersion", abs(eff.dispersion - 0.2), 0.0))
    try:
        hiphome_basis(cs, 2)
        raised = 0.0
    except DegeneracyError as exc:
        raised = 1.0 if exc.index == 1 else 0.5
    out.append(Check("constant_degeneracy_raised", raised, 1.0, raised == 1.0))

    problem = ProblemData(1.0, 0.2, reaction=1.0, inlet=1.0)
    mesh = build_mesh(2.0, 0.0125)
    red = solve_steady(assemble(problem, hiphome_basis(cs, 1), mesh, const, dom))
    ref = solve_effective(problem, eff, mesh)
    out.append(_le("constant_m1_vs_effective", np.max(np.abs(red.coeffs[0] - ref.values)), 1e-10))
    return out


def solver_checks() -> list:
    out = []
    dom = _channel_domain()
    const = VelocityProfile.constant(3.0)
    problem = ProblemData(1.0, 0.2, reaction=0.0, forcing=0.0, inlet=1.0)
    mesh = build_mesh(2.0, 0.05)
    red = solve_steady(assemble(problem, educated_basis(3), mesh, const, dom))
    target = np.zeros_like(red.coeffs)
    target[0] = 1.0
    out.append(_le("patch_reduced_constant", np.max(np.abs(red.coeffs - target)), 1e-12))
    ref = solve_reference_2d(problem, const, dom, 41, 9)
    out.append(_le("patch_reference_constant", np.max(np.abs(ref.values - 1.0)), 1e-12))

    # 1D manufactured solution with a natural outflow: c = sin(pi x / (2 L))
    L, a, d, s = 2.0, 1.0, 0.5, 1.0
    k = np.pi / (2 * L)

    def exact(x):
        return np.sin(k * x)

    def source(x):
        return a * k * np.cos(k * x) + (d * k**2 + s) * np.sin(k * x)

    errs, hs = [], [0.1, 0.05, 0.025]
    for h in hs:
        m1 = build_mesh(L, h)
        c = solve_adr_1d(m1, a, d, s, 0.0, 0.0, source=source)
        xf = np.linspace(0, L, 4001)
        errs.append(float(np.sqrt(trapezoid((m1.interpolate(c, xf) - exact(xf)) ** 2, xf))))
    rates = eoc(errs, hs)
    out.append(_le("mms_1d_rate_gap", float(np.max(np.abs(rates - 2.0))), 0.1))

    ops = assemble_operators(build_mesh(1.0, 0.25))
    out.append(_le("mass_total", abs(ops.mass.matvec(np.ones(5)).sum() - 1.0), 1e-14))
    out.append(_le("l2_norm_constant", abs(l2_norm(lambda x, z: np.ones((x.size, z.size)), dom, 801, 81) - np.sqrt(0.4)), 1e-12))
    out.append(_le("eoc_quadratic", abs(eoc([1e-2, 2.5e-3], [0.1, 0.05])[0] - 2.0), 1e-12))
    return out


def run_selftest() -> list:
    return corrector_checks() + basis_checks() + degenerate_checks() + solver_checks()


def write_selftest_csv(path, checks) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "value", "tolerance", "passed"])
        for c in checks:
            w.writerow([c.name, repr(c.value), repr(c.tolerance), int(c.passed)])
    return path
