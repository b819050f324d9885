"""Experiment presets, parameter sweeps and report emission.

A run is described by one JSON document (see ``presets/*.json``). Every
sweep point ``(family, h, m)`` builds a basis, assembles and solves the
reduced problem, and is compared with a single 2D reference solution on the
metrics lattice. Results go to ``errors.csv`` and ``summary.json``.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from importlib import resources
from pathlib import Path

import numpy as np

from .corrector import compute_correctors, taylor_dispersion
from .errors import ConfigError, DegeneracyError, HiphomeError
from .fem1d import build_mesh
from .geometry import ChannelDomain, ProblemData, make_profile
from .metrics import ErrorRecord, eoc, fitted_slope, lattice, pre_plateau
from .modal_basis import FAMILIES, educated_basis, gauss_panels, hiphome_basis, legendre_basis
from .reduced_solver import assemble, integrate, solve_steady
from .reference_models import TimeSpec, solve_reference_2d

log = logging.getLogger(__name__)

PRESETS = ("poiseuille-steady", "loglaw-steady", "loglaw-unsteady")
CSV_HEADER = ("family", "m", "h", "dt", "t", "l2_error", "qoi_error", "wall_ms")
PLATEAU_FACTOR = 2.0

_TOP_KEYS = {
    "preset", "domain", "profile", "problem", "discretisation", "time",
    "families", "reference", "lattice", "output",
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))  # shortest string that round-trips


def _section(doc: dict, key: str, keys: set) -> dict:
    sec = doc.get(key)
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {key!r} missing or not an object")
    unknown = set(sec) - keys
    if unknown:
        raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
    return sec


def _number_list(values, what, kind=float):
    if not isinstance(values, (list, tuple)) or len(values) == 0:
        raise ConfigError(f"{what} must be a non-empty list")
    try:
        out = tuple(kind(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: {exc}") from exc
    if len(set(out)) != len(out):
        raise ConfigError(f"{what} contains duplicates")
    return out


@dataclass(frozen=True)
class TimeBlock:
    theta: float
    dt: float
    t_end: float
    snapshots: tuple

    def spec(self) -> TimeSpec:
        return TimeSpec(self.dt, self.theta, self.t_end, self.snapshots)

    @property
    def times(self) -> tuple:
        return tuple(sorted(set(self.snapshots) | {self.t_end}))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description. ``raw`` keeps the JSON document."""

    preset: str
    length: float
    width: float
    epsilon: float
    profile: dict
    diffusion: float
    reaction: float
    forcing: float
    inlet: float
    initial: float
    h: tuple
    m: tuple
    n_y: int
    panels: int
    families: tuple
    reference: tuple
    lattice: tuple
    time: TimeBlock | None
    out: str
    dump_fields: bool
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        preset = doc.get("preset", "custom")
        if preset not in PRESETS + ("custom",):
            raise ConfigError(f"unknown preset name {preset!r}")
        dom = _section(doc, "domain", {"length", "width", "epsilon"})
        prob = _section(doc, "problem", {"diffusion", "reaction", "forcing", "inlet", "initial"})
        disc = _section(doc, "discretisation", {"h", "m", "n_y", "panels"})
        ref = _section(doc, "reference", {"nx", "nz"})
        lat = doc.get("lattice", {"nx": 801, "nz": 81})
        out = doc.get("output", {})
        profile = doc.get("profile")
        if not isinstance(profile, dict) or "kind" not in profile:
            raise ConfigError("profile must be an object with a 'kind'")

        families = doc.get("families", ["hiphome", "educated"])
        if isinstance(families, str):
            families = [families]
        families = tuple(families)
        if not families or any(f not in FAMILIES for f in families):
            raise ConfigError(f"families must be a non-empty subset of {FAMILIES}")
        if len(set(families)) != len(families):
            raise ConfigError("families contains duplicates")

        h = _number_list(disc.get("h"), "discretisation.h")
        m = _number_list(disc.get("m"), "discretisation.m", int)
        if any(v <= 0 for v in h):
            raise ConfigError("mesh sizes must be positive")
        if any(v < 1 for v in m):
            raise ConfigError("modal indices must be at least 1")

        tb = doc.get("time")
        if tb is not None:
            if not isinstance(tb, dict) or set(tb) - {"theta", "dt", "t_end", "snapshots"}:
                raise ConfigError("time block must hold theta, dt, t_end, snapshots")
            try:
                snaps = tuple(float(s) for s in tb.get("snapshots", []))
                tb = TimeBlock(float(tb["theta"]), float(tb["dt"]), float(tb["t_end"]), snaps)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad time block: {exc}") from exc
            if not 0.0 <= tb.theta <= 1.0 or tb.dt <= 0 or tb.t_end <= 0:
                raise ConfigError("time block needs theta in [0, 1] and positive dt, t_end")
            if any(not 0 < s <= tb.t_end for s in tb.snapshots):
                raise ConfigError("snapshot times must lie in (0, t_end]")

        try:
            cfg = cls(
                preset=preset,
                length=float(dom["length"]),
                width=float(dom["width"]),
                epsilon=float(dom.get("epsilon", float(dom["width"]) / float(dom["length"]))),
                profile=dict(profile),
                diffusion=float(prob["diffusion"]),
                reaction=float(prob.get("reaction", 0.0)),
                forcing=float(prob.get("forcing", 0.0)),
                inlet=float(prob.get("inlet", 1.0)),
                initial=float(prob.get("initial", 0.0)),
                h=h,
                m=m,
                n_y=int(disc.get("n_y", 2048)),
                panels=int(disc.get("panels", 256)),
                families=families,
                reference=(int(ref["nx"]), int(ref["nz"])),
                lattice=(int(lat["nx"]), int(lat["nz"])),
                time=tb,
                out=str(out.get("dir", "out")),
                dump_fields=bool(out.get("fields", False)),
                raw=copy.deepcopy(doc),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.n_y < 64 or self.n_y % 8:
            raise ConfigError("n_y must be a multiple of 8 and at least 64")
        if self.panels < 1:
            raise ConfigError("quadrature panels must be positive")
        if min(self.reference) < 3:
            raise ConfigError("reference lattice needs at least 3 x 3 nodes")
        if min(self.lattice) < 9 or any(n % 2 == 0 for n in self.lattice):
            raise ConfigError("evaluation lattice sizes must be odd and at least 9")
        try:
            self.domain()
            self.problem()
            self.velocity()
            for h in self.h:
                build_mesh(self.length, h)
        except KeyError as exc:
            raise ConfigError(f"missing parameter {exc} in {self.profile.get('kind')!r} profile") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def domain(self) -> ChannelDomain:
        return ChannelDomain(self.length, self.width, self.epsilon)

    def problem(self) -> ProblemData:
        return ProblemData(self.diffusion, self.epsilon, self.reaction, self.forcing, self.inlet, self.initial)

    def velocity(self):
        return make_profile(self.profile, self.domain())

    def to_dict(self) -> dict:
        """Normalised JSON document (what the run actually used)."""
        doc = {
            "preset": self.preset,
            "domain": {"length": self.length, "width": self.width, "epsilon": self.epsilon},
            "profile": dict(self.profile),
            "problem": {
                "diffusion": self.diffusion,
                "reaction": self.reaction,
                "forcing": self.forcing,
                "inlet": self.inlet,
                "initial": self.initial,
            },
            "discretisation": {"h": list(self.h), "m": list(self.m), "n_y": self.n_y, "panels": self.panels},
            "time": None
            if self.time is None
            else {
                "theta": self.time.theta,
                "dt": self.time.dt,
                "t_end": self.time.t_end,
                "snapshots": list(self.time.snapshots),
            },
            "families": list(self.families),
            "reference": {"nx": self.reference[0], "nz": self.reference[1]},
            "lattice": {"nx": self.lattice[0], "nz": self.lattice[1]},
            "output": {"dir": self.out, "fields": self.dump_fields},
        }
        return doc

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with CLI overrides (``m``, ``h``, ``families``, ``out``) applied."""
        doc = self.to_dict()
        if kw.get("m") is not None:
            doc["discretisation"]["m"] = list(kw["m"])
        if kw.get("h") is not None:
            doc["discretisation"]["h"] = list(kw["h"])
        if kw.get("families") is not None:
            doc["families"] = list(kw["families"])
        if kw.get("out") is not None:
            doc["output"]["dir"] = str(kw["out"])
        if kw.get("fields") is not None:
            doc["output"]["fields"] = bool(kw["fields"])
        return ExperimentConfig.from_dict(doc)


def preset_document(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("hiphome").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def load_config(path=None, preset: str | None = None) -> ExperimentConfig:
    """Read a config file, a shipped preset, or a preset patched by a file.

    With both, the file's top-level sections replace the preset's.
    """
    if path is None and preset is None:
        raise ConfigError("give a config file or a preset name")
    doc = preset_document(preset) if preset else {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        doc.update(user)
    return ExperimentConfig.from_dict(doc)


# -- sweep -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    family: str
    h: float
    m: int


@dataclass
class PointResult:
    point: SweepPoint
    records: list
    fields: dict = field(default_factory=dict)
    error: str | None = None


def build_bases(config: ExperimentConfig) -> tuple[dict, dict]:
    """Largest requested basis per family, plus ``{family: message}`` for
    families that degenerate before the largest ``m`` (the basis is then cut
    at the last admissible mode)."""
    m_max = max(config.m)
    quad = gauss_panels(config.panels)
    bases, problems = {}, {}
    for fam in config.families:
        if fam == "educated":
            bases[fam] = educated_basis(m_max, config.diffusion, quad)
            continue
        if fam == "legendre":
            build = partial(legendre_basis, quadrature=quad)
        else:
            cs = compute_correctors(config.velocity(), config.domain(), config.diffusion, m_max - 1, config.n_y)
            build = partial(hiphome_basis, cs, quadrature=quad)
        try:
            bases[fam] = build(m_max)
        except DegeneracyError as exc:
            problems[fam] = str(exc)
            if exc.index >= 1:
                bases[fam] = build(exc.index)
    return bases, problems


_SHARED: dict = {}


def _init_worker(shared: dict) -> None:
    _SHARED.clear()
    _SHARED.update(shared)


def _evaluate(point: SweepPoint, shared: dict | None = None) -> PointResult:
    s = shared if shared is not None else _SHARED
    cfg: ExperimentConfig = s["config"]
    basis = s["bases"].get(point.family)
    if basis is None or basis.size < point.m:
        msg = s["problems"].get(point.family, "basis unavailable")
        return PointResult(point, [], error=f"{point.family} m={point.m} h={point.h:g}: {msg}")
    domain, problem, profile = s["domain"], s["problem"], s["profile"]
    nx, nz = cfg.lattice
    xs, zs, W = lattice(domain, nx, nz)
    records, fields = [], {}
    try:
        t0 = time.perf_counter()
        system = assemble(problem, basis.truncate(point.m), build_mesh(cfg.length, point.h), profile, domain)
        if cfg.time is None:
            sols = {None: solve_steady(system)}
        else:
            tb = cfg.time
            traj = integrate(system, tb.dt, tb.theta, tb.t_end, tb.snapshots)
            sols = {t: traj[t] for t in tb.times}
        wall = 1e3 * (time.perf_counter() - t0)
        for t, sol in sols.items():
            r = s["reference"][t]
            c = sol.evaluate_grid(xs, zs)
            e = float(np.sqrt(np.sum(W * (r - c) ** 2)))
            J = abs(float(np.sqrt(np.sum(W * r * r))) - float(np.sqrt(np.sum(W * c * c))))
            records.append(
                ErrorRecord(
                    point.family, point.m, point.h, e, J,
                    dt=None if cfg.time is None else cfg.time.dt,
                    t=t,
                    wall_ms=wall if s["timing"] else None,
                    config=cfg.preset,
                )
            )
            if cfg.dump_fields:
                fields[t] = c
    except (HiphomeError, ValueError) as exc:
        return PointResult(point, records, error=f"{point.family} m={point.m} h={point.h:g}: {exc}")
    return PointResult(point, records, fields)


def reference_on_lattice(config: ExperimentConfig) -> dict:
    """``{t: values}`` of the 2D reference on the evaluation lattice (``t = None`` when steady)."""
    domain, problem, profile = config.domain(), config.problem(), config.velocity()
    nx, nz = config.reference
    xs, zs, _ = lattice(domain, *config.lattice)
    if config.time is None:
        ref = solve_reference_2d(problem, profile, domain, nx, nz)
        return {None: ref(xs, zs)}
    traj = solve_reference_2d(problem, profile, domain, nx, nz, time=config.time.spec())
    return {t: traj[t](xs, zs) for t in config.time.times}


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    failures: list
    summary: dict
    invariants: list
    reference: dict = field(default_factory=dict, repr=False)
    fields: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return not self.failures and all(c["passed"] for c in self.invariants)

    def write(self, out=None) -> list:
        out = Path(out or self.config.out)
        out.mkdir(parents=True, exist_ok=True)
        paths = [write_error_csv(out / "errors.csv", self.records)]
        summary = dict(self.summary)
        summary["config"] = self.config.to_dict()
        summary["failures"] = list(self.failures)
        summary["invariants"] = list(self.invariants)
        p = out / "summary.json"
        p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        paths.append(p)
        if self.config.dump_fields:
            xs, zs, _ = lattice(self.config.domain(), *self.config.lattice)
            for t, vals in self.reference.items():
                name = "ref.csv" if t is None else f"ref_t{t:g}.csv"
                paths.append(write_lattice_csv(out / name, xs, zs, vals))
            for (fam, h, m, t), vals in sorted(self.fields.items(), key=lambda kv: _key(kv[0])):
                name = f"field_{fam}_m{m}_h{h:g}" + ("" if t is None else f"_t{t:g}") + ".csv"
                paths.append(write_lattice_csv(out / name, xs, zs, vals))
        return paths


def _key(k):
    fam, h, m, t = k
    return (fam, -h, m, -1.0 if t is None else t)


def write_error_csv(path, records) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.family, _fmt(r.m), _fmt(r.h), _fmt(r.dt), _fmt(r.t), _fmt(r.l2_error), _fmt(r.qoi_error), _fmt(r.wall_ms)])
    return path


def write_lattice_csv(path, xs, zs, values) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "z", "c"])
        for i, xi in enumerate(xs):
            for j, zj in enumerate(zs):
                w.writerow([_fmt(xi), _fmt(zj), _fmt(values[i, j])])
    return path


def _rates(errors, params, rel_change=0.05) -> dict:
    errors = [float(e) for e in errors]
    out = {"params": list(params), "errors": errors, "pre_plateau": None, "slope": None, "eoc": None}
    if len(errors) < 2 or min(errors) <= 0:
        return out
    out["eoc"] = [float(r) for r in eoc(errors, params)]
    n = pre_plateau(errors, rel_change)
    out["pre_plateau"] = int(n)
    if n >= 2:
        out["slope"] = fitted_slope(errors, params, rel_change)
    return out


def summarise(config: ExperimentConfig, records: list) -> tuple[dict, list]:
    """Fitted modal and mesh rates plus the invariant checks."""
    table = {(r.family, r.h, r.m, r.t): r for r in records}
    times = [None] if config.time is None else list(config.time.times)
    modal, mesh_rates, checks = [], [], []
    for fam in config.families:
        for t in times:
            for h in config.h:
                pts = [(m, table[(fam, h, m, t)]) for m in sorted(config.m) if (fam, h, m, t) in table]
                if len(pts) >= 2:
                    ms = [m for m, _ in pts]
                    modal.append({"family": fam, "h": h, "t": t, **_rates([r.l2_error for _, r in pts], ms)})
            for m in config.m:
                pts = [(h, table[(fam, h, m, t)]) for h in sorted(config.h, reverse=True) if (fam, h, m, t) in table]
                if len(pts) >= 2:
                    hs = [h for h, _ in pts]
                    entry = {"family": fam, "m": m, "t": t}
                    entry["l2"] = _rates([r.l2_error for _, r in pts], hs)
                    entry["qoi"] = _rates([r.qoi_error for _, r in pts], hs)
                    mesh_rates.append(entry)

    checks.append({"check": "qoi_below_l2", "passed": all(r.qoi_error <= r.l2_error * (1 + 1e-9) + 1e-15 for r in records)})
    if config.time is None and {"hiphome", "educated"} <= set(config.families):
        m_top = max(config.m)
        for h in config.h:
            a, b = table.get(("hiphome", h, m_top, None)), table.get(("educated", h, m_top, None))
            if a is None or b is None:
                continue
            ratio = max(a.l2_error, b.l2_error) / max(min(a.l2_error, b.l2_error), 1e-300)
            checks.append({"check": f"plateau_consistency_h{h:g}", "value": ratio, "passed": bool(ratio <= PLATEAU_FACTOR)})
    return {"modal_rates": modal, "mesh_rates": mesh_rates}, checks


def run(config: ExperimentConfig, jobs: int | None = None, timing: bool = False) -> ExperimentReport:
    """Execute every sweep point of ``config`` and collect the report.

    Module errors at a sweep point are caught, named after the point and
    listed in ``report.failures``; the remaining points still run.
    """
    jobs = jobs or os.cpu_count() or 1
    domain, problem, profile = config.domain(), config.problem(), config.velocity()
    failures = []
    log.info("reference solve %dx%d", *config.reference)
    try:
        reference = reference_on_lattice(config)
    except HiphomeError as exc:
        log.error("reference solve failed: %s", exc)
        raise
    bases, problems = build_bases(config)
    for fam, msg in problems.items():
        log.warning("%s basis: %s", fam, msg)

    points = [SweepPoint(f, h, m) for f in config.families for h in config.h for m in sorted(config.m)]
    shared = {
        "config": config, "domain": domain, "problem": problem, "profile": profile,
        "bases": bases, "problems": problems, "reference": reference, "timing": timing,
    }
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(shared,)) as pool:
            results = list(pool.map(_evaluate, points))
    else:
        results = [_evaluate(p, shared) for p in points]

    records, fields = [], {}
    for res in results:
        records.extend(res.records)
        if res.error:
            failures.append(res.error)
            log.error(res.error)
        for t, vals in res.fields.items():
            fields[(res.point.family, res.point.h, res.point.m, t)] = vals
    summary, checks = summarise(config, records)
    return ExperimentReport(config, records, failures, summary, checks, reference, fields)


# -- dumps -----------------------------------------------------------------


def dump_basis(config: ExperimentConfig, out=None, n_points: int = 1001) -> tuple[list, str | None]:
    """Write ``basis_<family>.csv`` mode traces for the largest requested ``m``.

    Returns the written paths and the degeneracy message, if any; on
    degeneracy the dump holds only the admissible leading modes.
    """
    out = Path(out or config.out)
    out.mkdir(parents=True, exist_ok=True)
    bases, problems = build_bases(config)
    paths = []
    for fam in config.families:
        if fam in bases:
            paths.append(bases[fam].to_csv(out / f"basis_{fam}.csv", n_points))
    message = "; ".join(f"{k}: {v}" for k, v in problems.items()) or None
    return paths, message


def dump_correctors(config: ExperimentConfig, out=None) -> list:
    """Corrector samples plus the effective 1D coefficients."""
    out = Path(out or config.out)
    out.mkdir(parents=True, exist_ok=True)
    domain, profile = config.domain(), config.velocity()
    order = max(1, max(config.m) - 1)
    cs = compute_correctors(profile, domain, config.diffusion, order, config.n_y)
    eff = taylor_dispersion(cs, profile, domain, config.diffusion, config.epsilon)
    p1 = cs.to_csv(out / "correctors.csv")
    p2 = out / "effective.json"
    p2.write_text(
        json.dumps(
            {
                "mean_velocity": eff.mean_velocity,
                "dispersion": eff.dispersion,
                "enhancement": eff.enhancement,
                "order": order,
                "n_y": config.n_y,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    return [p1, p2]
