"""Channel geometry, fibre maps and axial velocity profiles.

Three transverse coordinates are in play:

* ``z``  physical, on the fibre ``[-l/2, l/2]``;
* ``y``  rescaled (fast) variable ``y = z / eps`` on ``[-Y, Y]`` with ``Y = l / (2 eps)``;
* ``zh`` reference coordinate on ``[0, 1]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError

PROFILE_KINDS = ("constant", "linear_shear", "poiseuille", "loglaw", "tabulated")

# slack for round-off when checking that a coordinate lies on a closed interval
_EDGE_TOL = 1e-12


def _check_interval(values, lo, hi, what):
    arr = np.asarray(values, dtype=float)
    span = hi - lo
    if np.any(~np.isfinite(arr)) or np.any(arr < lo - _EDGE_TOL * span) or np.any(
        arr > hi + _EDGE_TOL * span
    ):
        raise DomainError(f"{what} outside [{lo:g}, {hi:g}]")
    return np.clip(arr, lo, hi)


@dataclass(frozen=True)
class ChannelDomain:
    """Thin rectangle ``(0, L) x (-l/2, l/2)`` with scale parameter ``epsilon``.

    ``epsilon`` defaults to ``l / L`` but can be set independently, which the
    Poiseuille benchmark needs (it uses ``epsilon = 0.2`` on a ``2 x 0.2`` box).
    """

    length: float
    width: float
    epsilon: float | None = None

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("length and width must be positive")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.width / self.length)
        if not (0 < self.epsilon < 1):
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @property
    def half_width_rescaled(self) -> float:
        return self.width / (2.0 * self.epsilon)

    @property
    def area(self) -> float:
        return self.length * self.width


def fibre_map_psi(domain: ChannelDomain, z):
    """Physical transverse coordinate -> reference coordinate on ``[0, 1]``."""
    half = 0.5 * domain.width
    z = _check_interval(z, -half, half, "z")
    return (z + half) / domain.width


def fibre_map_psi_inverse(domain: ChannelDomain, zh):
    zh = _check_interval(zh, 0.0, 1.0, "reference coordinate")
    return domain.width * zh - 0.5 * domain.width


def fibre_map_theta(domain: ChannelDomain, y):
    """Rescaled coordinate on ``[-Y, Y]`` -> reference coordinate on ``[0, 1]``."""
    Y = domain.half_width_rescaled
    y = _check_interval(y, -Y, Y, "y")
    return (y + Y) / (2.0 * Y)


def fibre_map_theta_inverse(domain: ChannelDomain, zh):
    Y = domain.half_width_rescaled
    zh = _check_interval(zh, 0.0, 1.0, "reference coordinate")
    return 2.0 * Y * zh - Y


@dataclass(frozen=True)
class VelocityProfile:
    """Axial speed ``u(z)`` on the physical fibre.

    Build instances with the preset constructors (:meth:`poiseuille`,
    :meth:`loglaw`, ...). Profiles are plain data so they pickle cleanly
    into worker processes.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full_like(z, p["vbar"], dtype=float)
        if self.kind == "linear_shear":
            # u_hat(y) = s y with y = z / eps
            return p["shear"] * z / p["epsilon"]
        if self.kind == "poiseuille":
            return 2.0 * p["vbar"] * (1.0 - (z / p["epsilon"]) ** 2)
        if self.kind == "loglaw":
            arg = z + p["epsilon"] + p["d"]
            if np.any(arg <= 0):
                raise DomainError("log-law argument z + eps + d must stay positive")
            return np.log(arg) / p["kappa"] + p["C"]
        zn, un = p["z"], p["u"]
        if np.any(z < zn[0] - _EDGE_TOL) or np.any(z > zn[-1] + _EDGE_TOL):
            raise DomainError("tabulated profile evaluated outside its table")
        return np.interp(z, zn, un)

    @property
    def is_even(self) -> bool:
        return self.kind in ("constant", "poiseuille")

    @classmethod
    def constant(cls, vbar: float) -> "VelocityProfile":
        return cls("constant", {"vbar": float(vbar)})

    @classmethod
    def linear_shear(cls, shear: float, epsilon: float) -> "VelocityProfile":
        return cls("linear_shear", {"shear": float(shear), "epsilon": float(epsilon)})

    @classmethod
    def poiseuille(cls, vbar: float, epsilon: float) -> "VelocityProfile":
        return cls("poiseuille", {"vbar": float(vbar), "epsilon": float(epsilon)})

    @classmethod
    def loglaw(
        cls,
        epsilon: float,
        kappa: float = 0.41,
        d: float = 0.001,
        C: float | None = None,
    ) -> "VelocityProfile":
        if C is None:
            C = -math.log(d) / kappa
        return cls(
            "loglaw",
            {"kappa": float(kappa), "d": float(d), "C": float(C), "epsilon": float(epsilon)},
        )

    @classmethod
    def tabulated(cls, z_nodes, u_nodes) -> "VelocityProfile":
        zn = np.asarray(z_nodes, dtype=float)
        un = np.asarray(u_nodes, dtype=float)
        if zn.ndim != 1 or zn.shape != un.shape or zn.size < 2:
            raise ValueError("tabulated profile needs two equal-length 1D arrays")
        if np.any(np.diff(zn) <= 0):
            raise ValueError("tabulated z nodes must be strictly increasing")
        return cls("tabulated", {"z": zn, "u": un})

    @classmethod
    def from_csv(cls, path) -> "VelocityProfile":
        """Read a two-column ``z,u`` CSV with a header row."""
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(a), float(b)] for a, b in rows[1:] if a.strip()])
        return cls.tabulated(data[:, 0], data[:, 1])

    def scaled(self, factor: float) -> "VelocityProfile":
        """Profile ``factor * u``; only the polynomial presets support this."""
        if self.kind == "constant":
            return VelocityProfile.constant(factor * self.params["vbar"])
        if self.kind == "linear_shear":
            return VelocityProfile.linear_shear(factor * self.params["shear"], self.params["epsilon"])
        if self.kind == "poiseuille":
            return VelocityProfile.poiseuille(factor * self.params["vbar"], self.params["epsilon"])
        raise NotImplementedError(f"scaling not provided for {self.kind}")

    def check_covers(self, domain: ChannelDomain) -> None:
        """Raise if ``u`` is not finite on the closed fibre of ``domain``."""
        z = np.linspace(-0.5 * domain.width, 0.5 * domain.width, 257)
        if not np.all(np.isfinite(self(z))):
            raise DomainError(f"{self.kind} profile is not finite on the fibre")


def make_profile(spec: dict, domain: ChannelDomain) -> VelocityProfile:
    """Build a profile from a config mapping ``{"kind": ..., <params>}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    eps = domain.epsilon
    if kind == "constant":
        return VelocityProfile.constant(spec["vbar"])
    if kind == "linear_shear":
        return VelocityProfile.linear_shear(spec["shear"], eps)
    if kind == "poiseuille":
        return VelocityProfile.poiseuille(spec["vbar"], eps)
    if kind == "loglaw":
        return VelocityProfile.loglaw(
            eps, kappa=spec.get("kappa", 0.41), d=spec.get("d", 0.001), C=spec.get("C")
        )
    if kind == "tabulated":
        if "csv" in spec:
            return VelocityProfile.from_csv(spec["csv"])
        return VelocityProfile.tabulated(spec["z"], spec["u"])
    raise ValueError(f"unknown profile kind {kind!r}")


def rescaled_velocity(profile: VelocityProfile, domain: ChannelDomain, y):
    """``u_hat(y) = u(eps * y)`` for ``y`` on the rescaled fibre."""
    Y = domain.half_width_rescaled
    y = _check_interval(y, -Y, Y, "y")
    return profile(domain.epsilon * y)


@dataclass(frozen=True)
class ProblemData:
    """Coefficients of the advection-diffusion-reaction problem.

    ``diffusion`` is the order-one scale ``D``; the physical diffusivity is
    ``D_eps = epsilon * D``.
    """

    diffusion: float
    epsilon: float
    reaction: float = 0.0
    forcing: float = 0.0
    inlet: float = 1.0
    initial: float = 0.0

    def __post_init__(self):
        if self.diffusion <= 0:
            raise ValueError("diffusion must be positive")
        if self.reaction < 0:
            raise ValueError("reaction must be non-negative")

    @property
    def diffusion_eps(self) -> float:
        return self.epsilon * self.diffusion

    def peclet(self, mean_velocity: float, length: float) -> float:
        """Global Peclet number ``u_mean L / (2 D_eps)``."""
        return mean_velocity * length / (2.0 * self.diffusion_eps)


def max_speed(profile: VelocityProfile, domain: ChannelDomain, n: int = 1025) -> float:
    z = np.linspace(-0.5 * domain.width, 0.5 * domain.width, n)
    return float(np.max(np.abs(profile(z))))
