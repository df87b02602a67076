"""
Experiment orchestration: configuration, initial data, runs, checks and output.

An experiment is described by a JSON-serialisable :class:`ExperimentConfig`.
:func:`run_experiment` builds the grid and the data, integrates, applies the
enabled checks from :mod:`viscous_hj.estimates` and returns a :class:`Report`;
when an output root is known it also writes ``config.json``,
``trajectory.csv`` and ``report.json`` into a per-experiment directory.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import estimates as est
from . import grid
from .grid import Domain, FloatArray
from .hamiltonian import HamiltonianSpec
from .semigroup import SpectralPlan, smoothing_sequence
from .solver import BlowUpError, SolverConfig, Trajectory, cole_hopf_oracle, run

logger = logging.getLogger(__name__)

OUTPUT_ENV = "VISCOUS_HJ_OUT"
CSV_HEADER = ("t", "M", "m", "osc", "grad_sup", "grad_q")
GENERATORS = ("cosine_poly", "piecewise_linear", "constant", "file")
RANDOM_GENERATORS = ("cosine_poly", "piecewise_linear")
NEUMANN_GENERATORS = ("cosine_poly", "constant")
CHECKS = (
    "check_gradient_bounds",
    "bernstein_diagnostic",
    "extinction",
    "y_functional",
    "window_decay_check",
    "empirical_envelope",
    "fit_decay_rate",
)
EXTINCTION_OSC = 1e-6


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class InitialData:
    """Named generator plus its parameters.

    ``amplitude`` is the target oscillation for the random generators.
    ``smoothing_n`` controls the pre-smoothing of data that are not
    Neumann-compatible; ``presmooth=False`` keeps the raw data.
    """

    generator: str = "cosine_poly"
    seed: int | None = None
    amplitude: float = 2.0
    modes: int = 4
    value: float = 0.0
    path: str | None = None
    presmooth: bool = True
    smoothing_n: int = 6

    def __post_init__(self) -> None:
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}; choose from {GENERATORS}")
        if self.generator in RANDOM_GENERATORS and self.seed is None:
            raise ValueError(f"generator {self.generator!r} needs a seed")
        if self.generator == "file" and not self.path:
            raise ValueError("generator 'file' needs a path")
        if self.modes < 1:
            raise ValueError("modes must be >= 1")
        if not self.amplitude >= 0:
            raise ValueError("amplitude must be nonnegative")


@dataclass(frozen=True)
class ExperimentConfig:
    id: str
    a: float
    p: float
    lengths: tuple[float, ...] = (1.0,)
    cells: tuple[int, ...] = (257,)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(t_end=1.0))
    initial: InitialData = field(default_factory=lambda: InitialData(seed=0))
    checks: tuple[str, ...] | None = None
    tolerance: float = est.DEFAULT_TOL
    beta: float | None = None
    bernstein_delta: float | None = None
    snapshots: int = 16
    out_dir: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "cells", tuple(int(v) for v in self.cells))
        if self.checks is not None:
            object.__setattr__(self, "checks", tuple(self.checks))
            unknown = set(self.checks) - set(CHECKS)
            if unknown:
                raise ValueError(f"unknown checks {sorted(unknown)}; choose from {CHECKS}")
        if not self.tolerance >= 0:
            raise ValueError("tolerance must be nonnegative")
        if self.snapshots < 0:
            raise ValueError("snapshots must be nonnegative")
        self.domain()
        self.hamiltonian()

    def domain(self) -> Domain:
        return Domain(self.lengths, self.cells)

    def hamiltonian(self) -> HamiltonianSpec:
        return HamiltonianSpec(self.a, self.p)

    def enabled_checks(self) -> tuple[str, ...]:
        if self.checks is not None:
            return self.checks
        if self.p < 1:
            return ("check_gradient_bounds", "bernstein_diagnostic", "extinction")
        return (
            "check_gradient_bounds",
            "bernstein_diagnostic",
            "y_functional",
            "window_decay_check",
            "empirical_envelope",
            "fit_decay_rate",
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lengths"] = list(self.lengths)
        d["cells"] = list(self.cells)
        if self.checks is not None:
            d["checks"] = list(self.checks)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        raw = dict(raw)
        if "domain" in raw:
            dom = raw.pop("domain")
            raw.setdefault("lengths", dom.get("lengths", (1.0,)))
            raw.setdefault("cells", dom.get("cells", (257,)))
        solver = raw.pop("solver", None) or {}
        if "t_end" not in solver:
            solver = {**solver, "t_end": 1.0}
        initial = raw.pop("initial", None) or {"seed": 0}
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(solver=SolverConfig(**solver), initial=InitialData(**initial), **raw)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


def load_configs(path: str | os.PathLike) -> list[ExperimentConfig]:
    """One config object, a list of them, or {"experiments": [...]} in a JSON file."""
    with open(path) as fh:
        raw = json.load(fh)
    if isinstance(raw, dict) and "experiments" in raw:
        raw = raw["experiments"]
    if isinstance(raw, dict):
        raw = [raw]
    return [ExperimentConfig.from_dict(item) for item in raw]


# ---------------------------------------------------------------------------
# initial data


def _scale_to(f: FloatArray, amplitude: float) -> FloatArray:
    osc = grid.oscillation(f)
    if osc == 0 or amplitude == 0:
        return np.zeros_like(f)
    f = f * (amplitude / osc)
    # rounding may overshoot the target by an ulp
    while grid.oscillation(f) > amplitude:
        f = f * (1.0 - 2.0**-52)
    return f


def _cosine_poly(spec: InitialData, d: Domain, rng: np.random.Generator) -> FloatArray:
    X = d.mesh()
    K = spec.modes
    f = np.zeros(d.shape)
    for k in np.ndindex(*([K + 1] * d.dimension)):
        if not any(k):
            continue
        c = rng.normal() / (1.0 + sum(k)) ** 2
        term = np.ones(d.shape)
        for ki, x, L in zip(k, X, d.lengths):
            term = term * np.cos(ki * np.pi * x / L)
        f += c * term
    return _scale_to(f, spec.amplitude)


def _piecewise_linear(spec: InitialData, d: Domain, rng: np.random.Generator) -> FloatArray:
    f = np.zeros(d.shape)
    for axis, (x, L) in enumerate(zip(d.axes(), d.lengths)):
        knots = np.linspace(0.0, L, spec.modes + 2)
        vals = rng.uniform(-1.0, 1.0, size=knots.size)
        shape = [1] * d.dimension
        shape[axis] = -1
        f = f + np.interp(x, knots, vals).reshape(shape)
    return _scale_to(f, spec.amplitude)


def _from_file(spec: InitialData, d: Domain) -> FloatArray:
    path = Path(spec.path)
    try:
        if path.suffix == ".npy":
            arr = np.load(path)
        else:
            arr = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read initial data from {path}: {exc}") from exc
    return d.check(np.asarray(arr, dtype=float).reshape(d.shape) if arr.size == d.size else arr)


def generate_initial_data(spec: InitialData, d: Domain, seed: int | None = None) -> FloatArray:
    """Raw field for ``spec``; ``seed`` overrides ``spec.seed``."""
    seed = spec.seed if seed is None else seed
    if spec.generator == "constant":
        return np.full(d.shape, float(spec.value))
    if spec.generator == "file":
        return _from_file(spec, d)
    if seed is None:
        raise ValueError(f"generator {spec.generator!r} needs a seed")
    rng = np.random.default_rng(seed)
    if spec.generator == "cosine_poly":
        return _cosine_poly(spec, d, rng)
    return _piecewise_linear(spec, d, rng)


def prepare_initial_data(
    spec: InitialData, d: Domain, plan: SpectralPlan, seed: int | None = None
) -> tuple[FloatArray, list[str]]:
    """Generated field, pre-smoothed when the generator is not Neumann-compatible."""
    mu0 = generate_initial_data(spec, d, seed)
    notes: list[str] = []
    if spec.generator in NEUMANN_GENERATORS:
        return mu0, notes
    if spec.presmooth:
        mu0, t_n = smoothing_sequence(mu0, spec.smoothing_n, plan)
        notes.append(f"pre-smoothed with n={spec.smoothing_n}, t_n={t_n:.6g}")
    else:
        msg = f"raw {spec.generator} data used without pre-smoothing"
        logger.warning(msg)
        notes.append(msg)
    return mu0, notes


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    id: str
    config: dict
    status: str = "PENDING"
    checks: dict[str, dict] = field(default_factory=dict)
    rates: dict[str, dict] = field(default_factory=dict)
    t_star: float | None = None
    steps: int = 0
    samples: int = 0
    wall_clock: float = 0.0
    notes: list[str] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == "PASSED"

    def to_dict(self, include_timing: bool = True) -> dict:
        d = dataclasses.asdict(self)
        if not include_timing:
            d.pop("wall_clock")
        return d


def _failed(name: str, message: str, tol: float) -> dict:
    rec = est.CheckRecord(name, -math.inf, None, tol, False, message)
    return est.BoundReport([rec]).to_dict()


def _extinction_report(traj: Trajectory, tol: float) -> est.BoundReport:
    if traj.t_star is None:
        return est.BoundReport(
            [est.CheckRecord("extinction", -math.inf, None, tol, False, "no extinction detected")]
        )
    after = traj.times >= traj.t_star
    worst = float(np.max(traj.osc[after]))
    margin = (EXTINCTION_OSC - worst) / EXTINCTION_OSC
    rec = est.CheckRecord(
        "extinction",
        margin,
        float(traj.t_star),
        0.0,
        worst < EXTINCTION_OSC,
        f"max osc after t_star = {worst:.3g}",
    )
    return est.BoundReport([rec])


def apply_checks(
    traj: Trajectory,
    cfg: ExperimentConfig,
    d: Domain | None,
    checks: Sequence[str] | None = None,
) -> tuple[dict[str, dict], dict[str, dict]]:
    """Run the named checks; every name gets exactly one entry.

    A check that cannot be evaluated (for example y on an undecayed run)
    is recorded as failed with the reason.
    """
    checks = tuple(checks) if checks is not None else cfg.enabled_checks()
    tol = cfg.tolerance
    out: dict[str, dict] = {}
    rates: dict[str, dict] = {}
    params = None
    yf = None

    def need_y():
        nonlocal params, yf
        if params is None:
            N = d.dimension if d is not None else len(cfg.lengths)
            params = est.decay_params(N, cfg.p, cfg.beta)
            yf = est.y_functional(traj, params.gamma)
        return params, yf

    for name in checks:
        try:
            if name == "check_gradient_bounds":
                rep = est.check_gradient_bounds(traj, cfg.a, cfg.p, tol)
            elif name == "bernstein_diagnostic":
                if d is None:
                    raise ValueError("needs the domain and snapshots")
                rep = est.bernstein_diagnostic(traj, d, cfg.a, cfg.p, "sqrt", cfg.bernstein_delta, tol)
                if cfg.p != 1 and cfg.a != 0:
                    rep.extend(
                        est.bernstein_diagnostic(traj, d, cfg.a, cfg.p, "power", cfg.bernstein_delta, tol)
                    )
            elif name == "extinction":
                rep = _extinction_report(traj, tol)
            elif name == "y_functional":
                prm, y = need_y()
                rep = _y_shape_report(y, tol)
            elif name == "window_decay_check":
                prm, y = need_y()
                rep = est.window_decay_check(traj, prm.gamma, tol, y=y)
            elif name == "empirical_envelope":
                prm, y = need_y()
                C, _, rep = est.empirical_envelope(traj, prm, tol, y=y)
                rates["empirical_envelope"] = {"C_emp": C, "beta": prm.beta, "alpha": prm.alpha}
            elif name == "fit_decay_rate":
                rep = _fit_report(traj, cfg.p, rates)
            else:
                raise ValueError(f"unknown check {name!r}")
            out[name] = rep.to_dict()
        except (ValueError, ArithmeticError) as exc:
            out[name] = _failed(name, f"{type(exc).__name__}: {exc}", tol)
    return out, rates


def _fit_report(traj: Trajectory, p: float, rates: dict, min_r2: float = 0.99) -> est.BoundReport:
    """p = 1: exponential fit with R^2 >= min_r2.  p > 1: decay of either shape.

    For p > 1 only "algebraic or better" is claimed, so both fits are
    reported and the check asks for a positive rate.
    """
    fits = {m: est.fit_decay_rate(traj, m, 0.5) for m in ("exponential", "algebraic")}
    rates["fit_decay_rate"] = {m: {"rate": r, "r_squared": r2} for m, (r, r2) in fits.items()}
    if p == 1:
        rate, r2 = fits["exponential"]
        rec = est.CheckRecord("fit_decay_rate", r2 - min_r2, "exponential", 0.0, bool(rate > 0 and r2 >= min_r2))
    else:
        rate = max(r for r, _ in fits.values())
        rec = est.CheckRecord("fit_decay_rate", rate, "best", 0.0, bool(rate > 0))
    return est.BoundReport([rec])


def _y_shape_report(y: est.YFunctional, tol: float, rel: float = 1e-8) -> est.BoundReport:
    """Discrete y nonincreasing and convex on the sample grid."""
    t, v = y.times, y.values
    scale = max(float(v[0]), np.finfo(float).tiny)
    inc = np.diff(v)
    worst_inc = float(np.max(inc)) if inc.size else 0.0
    recs = [
        est.CheckRecord(
            "y_nonincreasing",
            -worst_inc / scale,
            float(t[int(np.argmax(inc))]) if inc.size else None,
            rel,
            worst_inc <= rel * scale,
        )
    ]
    if len(t) >= 3:
        slopes = np.diff(v) / np.diff(t)
        curv = np.diff(slopes)
        slope_scale = max(float(np.max(np.abs(slopes))), np.finfo(float).tiny)
        worst = float(np.min(curv))
        recs.append(
            est.CheckRecord(
                "y_convex",
                worst / slope_scale,
                float(t[int(np.argmin(curv)) + 1]),
                rel,
                worst >= -rel * slope_scale,
            )
        )
    recs.append(
        est.CheckRecord("y_tail", 0.0, float(t[-1]), tol, math.isfinite(y.tail_bound), f"tail_bound={y.tail_bound:.3g}")
    )
    return est.BoundReport(recs)


# ---------------------------------------------------------------------------
# csv / json


def write_trajectory_csv(traj: Trajectory, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row in zip(traj.times, traj.M, traj.m, traj.osc, traj.grad_sup, traj.grad_q):
            w.writerow([f"{float(v):.17g}" for v in row])


def read_trajectory_csv(path: str | os.PathLike, q: float = 2.0) -> Trajectory:
    """Trajectory without fields: ``final`` is empty and there are no snapshots."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected header {header}; expected {list(CSV_HEADER)}")
        rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
    if rows.size == 0:
        raise ValueError("trajectory file has no samples")
    return Trajectory(
        times=rows[:, 0],
        M=rows[:, 1],
        m=rows[:, 2],
        grad_sup=rows[:, 4],
        grad_q=rows[:, 5],
        q=q,
        final=np.empty(0),
    )


def output_root(explicit: str | os.PathLike | None = None) -> Path | None:
    """Explicit directory, else the environment override, else None (no files)."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(OUTPUT_ENV)
    return Path(env) if env else None


def _write_artifacts(root: Path, cfg: ExperimentConfig, traj: Trajectory | None, report: Report) -> None:
    target = root / cfg.id
    target.mkdir(parents=True, exist_ok=True)
    (target / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, default=_json_default))
    if traj is not None:
        write_trajectory_csv(traj, target / "trajectory.csv")
    (target / "report.json").write_text(json.dumps(report.to_dict(), indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# ---------------------------------------------------------------------------
# runs


def _solver_config(cfg: ExperimentConfig) -> SolverConfig:
    sc = cfg.solver
    if cfg.snapshots and sc.snapshot_every is None:
        sc = dataclasses.replace(sc, snapshot_every=1, max_snapshots=cfg.snapshots)
    if cfg.p < 1 and sc.extinction_horizon is None and "extinction" in cfg.enabled_checks():
        sc = dataclasses.replace(sc, extinction_horizon=2.0)
    return sc


def simulate(cfg: ExperimentConfig) -> tuple[Trajectory, Domain, list[str]]:
    d = cfg.domain()
    plan = SpectralPlan(d)
    mu0, notes = prepare_initial_data(cfg.initial, d, plan)
    traj = run(mu0, cfg.hamiltonian(), _solver_config(cfg), d, plan)
    return traj, d, notes + list(traj.warnings)


def run_experiment(cfg: ExperimentConfig, out_root: str | os.PathLike | None = None) -> Report:
    """Simulate, check and (if an output root is known) write artifacts.

    Solver failures never propagate: a blow-up yields status
    ``FAILED(blow-up)`` and any other error ``ERROR(<type>)``.
    """
    report = Report(id=cfg.id, config=cfg.to_dict())
    t0 = time.perf_counter()
    traj = None
    try:
        traj, d, notes = simulate(cfg)
        report.notes.extend(notes)
        report.t_star = traj.t_star
        report.steps = traj.steps
        report.samples = len(traj)
        if cfg.a < 0:
            report.notes.append("bounds applied with |a| through the u -> -u symmetry")
        report.checks, report.rates = apply_checks(traj, cfg, d)
        report.status = "PASSED" if all(c["passed"] for c in report.checks.values()) else "FAILED"
    except BlowUpError as exc:
        report.status = "FAILED(blow-up)"
        report.error = str(exc)
    except Exception as exc:  # fault isolation for batches
        report.status = f"ERROR({type(exc).__name__})"
        report.error = str(exc)
    report.wall_clock = time.perf_counter() - t0
    root = output_root(out_root if out_root is not None else cfg.out_dir)
    if root is not None:
        _write_artifacts(root, cfg, traj, report)
    return report


def run_batch(
    configs: Iterable[ExperimentConfig],
    parallelism: int = 1,
    out_root: str | os.PathLike | None = None,
    executor: str = "thread",
) -> list[Report]:
    """Independent experiments, optionally concurrent; reports come back in input order."""
    configs = list(configs)
    ids = [c.id for c in configs]
    if len(set(ids)) != len(ids):
        raise ValueError("experiment ids must be unique within a batch")
    if parallelism <= 1 or len(configs) <= 1:
        return [run_experiment(c, out_root) for c in configs]
    pool_cls = ProcessPoolExecutor if executor == "process" else ThreadPoolExecutor
    with pool_cls(max_workers=parallelism) as pool:
        futures = [pool.submit(run_experiment, c, out_root) for c in configs]
        return [f.result() for f in futures]


def oracle_compare(cfg: ExperimentConfig, halvings: int = 1) -> dict[str, Any]:
    """Sup-norm error against the Cole-Hopf solution at t_end (p = 2 only).

    Uses the configured fixed dt, then the same run with dt halved
    ``halvings`` times; the ratios of consecutive errors are reported.
    """
    if cfg.p != 2:
        raise ValueError("the Cole-Hopf oracle exists only for p = 2")
    if cfg.solver.dt is None:
        raise ValueError("oracle comparison needs a fixed dt")
    d = cfg.domain()
    plan = SpectralPlan(d)
    mu0, _ = prepare_initial_data(cfg.initial, d, plan)
    exact = cole_hopf_oracle(mu0, cfg.a, cfg.solver.t_end, plan)
    errors, dts = [], []
    dt = cfg.solver.dt
    for _ in range(halvings + 1):
        sc = dataclasses.replace(cfg.solver, dt=dt, record_stride=10**9, snapshot_every=None)
        traj = run(mu0, cfg.hamiltonian(), sc, d, plan)
        errors.append(grid.sup_norm(traj.final - exact))
        dts.append(dt)
        dt *= 0.5
    ratios = [errors[i] / errors[i + 1] if errors[i + 1] > 0 else math.inf for i in range(halvings)]
    return {"id": cfg.id, "dt": dts, "errors": errors, "ratios": ratios}
