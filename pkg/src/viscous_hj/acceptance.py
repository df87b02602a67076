"""
The acceptance suite: thirteen end-to-end criteria at desk scale.

Each ``criterion_k`` returns a :class:`CriterionResult`; :func:`run_all`
evaluates every criterion and :func:`format_line` renders the one-line
summary printed by the CLI and the test-suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import estimates as est
from . import grid
from .grid import Domain
from .hamiltonian import Branch, HamiltonianSpec, f_eps, holder_gap, structural_defect
from .harness import InitialData, generate_initial_data
from .semigroup import SpectralPlan, heat_apply, smoothing_sequence
from .solver import SolverConfig, Trajectory, cole_hopf_oracle, run, run_pair

TOL = 0.05
SEEDS = range(5)
SUITE_P = (0.5, 1.0, 2.0, 3.0)
SIGNS = (1.0, -1.0)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0


def format_line(r: CriterionResult) -> str:
    tag = "PASS" if r.passed else "FAIL"
    return f"[{tag}] criterion {r.number:2d} {r.title}: {r.detail} ({r.seconds:.1f}s)"


# ---------------------------------------------------------------------------
# shared fixtures


def line(cells: int = 257) -> Domain:
    return Domain.interval(1.0, cells)


def square(cells: int = 129) -> Domain:
    return Domain.rectangle((1.0, 1.0), (cells, cells))


def cosine_mode(d: Domain, amplitude: float = 1.0) -> np.ndarray:
    """amplitude * prod_i cos(pi x_i / L_i)."""
    f = np.ones(d.shape)
    for x, L in zip(d.mesh(), d.lengths):
        f = f * np.cos(np.pi * x / L)
    return amplitude * f


def seeded_cosine(d: Domain, seed: int, amplitude: float = 2.0) -> np.ndarray:
    return generate_initial_data(InitialData("cosine_poly", seed=seed, amplitude=amplitude), d)


@lru_cache(maxsize=None)
def suite_run(p: float, a: float, seed: int) -> Trajectory:
    """1D seeded cosine data with oscillation 2, run to t = 1."""
    d = line()
    cfg = SolverConfig(t_end=1.0, record_stride=5)
    return run(seeded_cosine(d, seed), HamiltonianSpec(a, p), cfg, d)


@lru_cache(maxsize=None)
def mode_run(p: float, a: float, t_end: float, snapshots: int = 0) -> Trajectory:
    """1D run from cos(pi x)."""
    d = line()
    cfg = SolverConfig(
        t_end=t_end,
        record_stride=5,
        snapshot_every=1 if snapshots else None,
        max_snapshots=snapshots or None,
    )
    return run(cosine_mode(d), HamiltonianSpec(a, p), cfg, d)


def _timed(number: int, title: str, body: Callable[[], tuple[bool, str]]) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        ok, detail = body()
    except Exception as exc:  # a crash is a failed criterion, not an aborted suite
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return CriterionResult(number, title, bool(ok), detail, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# criteria


def criterion_1() -> CriterionResult:
    def body():
        d = line()
        plan = SpectralPlan(d)
        mu0 = cosine_mode(d, 0.5)
        parts, ok = [], True
        for a in SIGNS:
            exact = cole_hopf_oracle(mu0, a, 0.5, plan)
            errs = []
            for dt in (1e-4, 5e-5):
                cfg = SolverConfig(t_end=0.5, dt=dt, record_stride=10**9)
                errs.append(grid.sup_norm(run(mu0, HamiltonianSpec(a, 2.0), cfg, d, plan).final - exact))
            ratio = errs[0] / errs[1]
            ok &= errs[0] <= 1e-3 and ratio >= 1.8
            parts.append(f"a={a:+g} err={errs[0]:.3g} ratio={ratio:.3f}")
        return ok, "; ".join(parts)

    return _timed(1, "Cole-Hopf oracle equivalence", body)


def _suite_margins(name: str, ps) -> tuple[bool, str]:
    worst = math.inf
    where = None
    ok = True
    for p in ps:
        for a in SIGNS:
            for seed in SEEDS:
                rep = est.check_gradient_bounds(suite_run(p, a, seed), a, p, TOL)
                rec = rep[name]
                ok &= rec.passed
                if rec.margin < worst:
                    worst, where = rec.margin, (p, a, seed)
    return ok, f"worst margin {worst:.4f} at (p, a, seed)={where}"


def criterion_2() -> CriterionResult:
    return _timed(2, "sqrt gradient bound", lambda: _suite_margins("gradient_bound_sqrt", SUITE_P))


def criterion_3() -> CriterionResult:
    ps = tuple(p for p in SUITE_P if p != 1)
    return _timed(3, "power gradient bound", lambda: _suite_margins("gradient_bound_power", ps))


def criterion_4() -> CriterionResult:
    def body():
        parts, ok = [], True
        for d in (line(), square()):
            mu0 = cosine_mode(d)
            mu0 = mu0 * (2.0 / grid.oscillation(mu0))
            for a in SIGNS:
                cfg = SolverConfig(t_end=50.0, extinction_horizon=2.0, record_stride=5)
                tr = run(mu0, HamiltonianSpec(a, 0.5), cfg, d)
                if tr.t_star is None:
                    ok = False
                    parts.append(f"N={d.dimension} a={a:+g} no t_star")
                    continue
                after = tr.times >= tr.t_star
                worst = float(np.max(tr.osc[after]))
                reached = tr.times[-1] >= 2.0 * tr.t_star * (1 - 1e-12)
                ok &= tr.t_star <= 50 and worst < 1e-6 and reached
                parts.append(f"N={d.dimension} a={a:+g} t*={tr.t_star:.4f} osc_after={worst:.1e}")
        return ok, "; ".join(parts)

    return _timed(4, "finite-time extinction", body)


def criterion_5() -> CriterionResult:
    def body():
        parts, ok = [], True
        for a in SIGNS:
            rate, r2 = est.fit_decay_rate(mode_run(1.0, a, 1.5), "exponential", 0.5)
            ok &= rate > 0 and r2 >= 0.99
            parts.append(f"a={a:+g} rate={rate:.4f} R2={r2:.6f}")
        return ok, "; ".join(parts)

    return _timed(5, "exponential decay p=1", body)


def criterion_6() -> CriterionResult:
    def body():
        tr = mode_run(2.0, 1.0, 1.5)
        osc = tr.osc
        rise = float(np.max(np.diff(osc)))
        mono = rise <= 1e-10 * osc[0]
        params = est.decay_params(1, 2.0)
        y = est.y_functional(tr, params.gamma)
        win = est.window_decay_check(tr, params.gamma, TOL, y=y)
        C, _, env = est.empirical_envelope(tr, params, TOL, y=y)
        ok = mono and win.passed and math.isfinite(C) and C > 0 and env["envelope_y"].passed
        return ok, (
            f"max osc rise {rise:.2e}; window margin {win['window_decay'].margin:.4f}; "
            f"C_emp={C:.4g}; envelope margin {env['envelope_y'].margin:.4f}"
        )

    return _timed(6, "algebraic-or-better decay p=2", body)


def criterion_7() -> CriterionResult:
    def body():
        runs = [(p, suite_run(p, a, s)) for p in SUITE_P if p >= 1 for a in SIGNS for s in SEEDS]
        runs += [(1.0, mode_run(1.0, a, 1.5)) for a in SIGNS] + [(2.0, mode_run(2.0, 1.0, 1.5))]
        worst_inc, worst_curv, ok = -math.inf, math.inf, True
        for p, tr in runs:
            y = est.y_functional(tr, est.decay_params(1, p).gamma)
            v, t = y.values, y.times
            inc = float(np.max(np.diff(v))) / v[0]
            slopes = np.diff(v) / np.diff(t)
            curv = float(np.min(np.diff(slopes))) / float(np.max(np.abs(slopes)))
            worst_inc, worst_curv = max(worst_inc, inc), min(worst_curv, curv)
            ok &= inc <= 1e-8 and curv >= -1e-8 and math.isfinite(v[0])
        return ok, f"{len(runs)} runs; max rel increase {worst_inc:.2e}; min rel curvature {worst_curv:.2e}"

    return _timed(7, "y-functional shape", body)


def criterion_8() -> CriterionResult:
    def body():
        d = line()
        parts, ok = [], True
        for p in (0.5, 1.0):
            for a in SIGNS:
                tr = mode_run(p, a, 1.0, 16)
                delta = 0.01 * float(tr.osc[0])
                cases = ("sqrt", "power") if p != 1 else ("sqrt",)
                for case in cases:
                    rec = est.bernstein_diagnostic(tr, d, a, p, case, delta, TOL).records[0]
                    ok &= rec.passed
                    parts.append(f"p={p:g} a={a:+g} {case} margin={rec.margin:.3f}")
        return ok, "; ".join(parts)

    return _timed(8, "Bernstein pointwise diagnostic", body)


def hamiltonian_sweep(n: int = 10_000, seed: int = 0) -> dict[str, float]:
    """Worst values of the three structural properties per branch."""
    rng = np.random.default_rng(seed)
    ranges = {
        Branch.SUBLINEAR: (0.05, 1.0),
        Branch.SUBQUADRATIC: (1.0 + 1e-6, 2.0 - 1e-6),
        Branch.SUPERQUADRATIC: (2.0, 4.0),
    }
    out: dict[str, float] = {}
    for branch, (lo, hi) in ranges.items():
        holder, defect, mono = math.inf, -math.inf, -math.inf
        for j in range(20):
            # the sublinear branch includes its endpoint p = 1
            p = 1.0 if (branch is Branch.SUBLINEAR and j == 0) else float(rng.uniform(lo, hi))
            a = float(rng.uniform(0.1, 3.0))
            eps = float(rng.uniform(0.0, 0.99))
            spec = HamiltonianSpec(a, p, eps)
            k = n // 20
            rho = float(rng.uniform(0.1, 10.0))
            r1, r2 = rng.uniform(0, rho, k), rng.uniform(0, rho, k)
            holder = min(holder, float(np.min(holder_gap(r1**2, r2**2, rho, spec))))
            s = rng.uniform(0, 100.0, k)
            sign = -1.0 if p <= 1 else 1.0
            defect = max(defect, float(np.max(-sign * structural_defect(s, spec))))
            e1 = rng.uniform(0, 0.99, k)
            e2 = np.minimum(e1 + rng.uniform(0, 0.5, k), 0.99)
            f1 = np.array([f_eps(si, spec.with_eps(ei)) for si, ei in zip(s[:50], e1[:50])])
            f2 = np.array([f_eps(si, spec.with_eps(ei)) for si, ei in zip(s[:50], e2[:50])])
            # nondecreasing in eps for p <= 1, nonincreasing for p > 1
            diff = (f1 - f2) if p <= 1 else (f2 - f1)
            mono = max(mono, float(np.max(diff)))
        out[branch.value] = {"holder_gap_min": holder, "defect_wrong_sign_max": defect, "eps_monotone_violation_max": mono}
    return out


def criterion_9() -> CriterionResult:
    def body():
        res = hamiltonian_sweep()
        ok = all(
            v["holder_gap_min"] >= -1e-12 and v["defect_wrong_sign_max"] <= 1e-12 and v["eps_monotone_violation_max"] <= 1e-12
            for v in res.values()
        )
        detail = "; ".join(
            f"{b}: holder {v['holder_gap_min']:.2e}, defect {v['defect_wrong_sign_max']:.2e}, eps {v['eps_monotone_violation_max']:.2e}"
            for b, v in res.items()
        )
        return ok, detail

    return _timed(9, "Hamiltonian properties", body)


def criterion_10() -> CriterionResult:
    def body():
        worst, ok = -math.inf, True
        for d, q in ((line(), 2.0), (square(65), 3.0)):
            for seed in range(100):
                f = seeded_cosine(d, 10_000 + seed, amplitude=1.0)
                lhs, rhs = est.poincare_check(f, q, d)
                ok &= lhs <= rhs
                worst = max(worst, lhs / rhs)
        return ok, f"max lhs/rhs = {worst:.4f} over 200 fields"

    return _timed(10, "Poincare inequality", body)


def criterion_11() -> CriterionResult:
    def body():
        ok, parts = True, []
        for d in (line(), square(65)):
            plan = SpectralPlan(d)
            mu0 = generate_initial_data(InitialData("piecewise_linear", seed=7, modes=5), d)
            prev = None
            worst_gap = math.inf
            for n in range(1, 9):
                u, t_n = smoothing_sequence(mu0, n, plan)
                v = mu0 + 2.0**-n
                band = grid.sup_norm(heat_apply(v, t_n, plan) - v)
                ok &= 2.0 ** -(n + 3) < band < 2.0 ** -(n + 2)
                ok &= bool(np.all(u - mu0 >= 2.0 ** -(n + 1)) and np.all(u - mu0 <= 2.0 ** -(n - 1)))
                ok &= bool(np.all(u >= mu0.min() + 2.0 ** -(n + 1)) and np.all(u <= mu0.max() + 2.0 ** -(n - 1)))
                if prev is not None:
                    gap = float(np.min(prev - u))
                    # u_(n-1) - u_n against 2^-((n-1)+3)
                    worst_gap = min(worst_gap, gap / 2.0 ** -(n + 2))
                    ok &= gap >= 2.0 ** -(n + 2)
                prev = u
            parts.append(f"N={d.dimension} min (u_n - u_(n+1)) / 2^-(n+3) = {worst_gap:.3f}")
        return ok, "; ".join(parts)

    return _timed(11, "smoothing sequence", body)


def ordered_pair(d: Domain, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    low = seeded_cosine(d, seed)
    bump = seeded_cosine(d, seed + 5000, amplitude=float(rng.uniform(0.1, 1.0)))
    bump = bump - bump.min() + float(rng.uniform(0.0, 0.05))
    return low, low + bump


def criterion_12() -> CriterionResult:
    def body():
        worst, ok = 0.0, True
        for k in range(20):
            p = (0.5, 1.0, 2.0)[k % 3]
            a = SIGNS[k % 2]
            d = line() if k % 4 < 2 else square(65)
            low, high = ordered_pair(d, 100 + k)
            cfg = SolverConfig(t_end=0.5, sigma=0.25, record_stride=50)
            _, _, v = run_pair(low, high, HamiltonianSpec(a, p), cfg, d)
            worst = max(worst, v)
            ok &= v <= 1e-8
        return ok, f"max violation {worst:.2e} over 20 pairs"

    return _timed(12, "comparison principle", body)


def _same(t1: Trajectory, t2: Trajectory) -> bool:
    return all(
        np.array_equal(getattr(t1, f), getattr(t2, f))
        for f in ("times", "M", "m", "grad_sup", "grad_q", "final")
    ) and t1.t_star == t2.t_star


def criterion_13() -> CriterionResult:
    def body():
        d = line(129)
        mu0 = seeded_cosine(d, 3)
        ok, parts = True, []
        for p in (0.5, 1.0, 2.0):
            cfg = SolverConfig(t_end=0.3, record_stride=3)
            r1 = run(mu0, HamiltonianSpec(1.0, p), cfg, d)
            r2 = run(mu0, HamiltonianSpec(1.0, p), cfg, d)
            neg = run(-mu0, HamiltonianSpec(-1.0, p), cfg, d)
            same = _same(r1, r2)
            sym = (
                np.array_equal(r1.final, -neg.final)
                and np.array_equal(r1.M, -neg.m)
                and np.array_equal(r1.m, -neg.M)
                and np.array_equal(r1.grad_sup, neg.grad_sup)
            )
            ok &= same and sym
            parts.append(f"p={p:g} rerun={'identical' if same else 'DIFFERENT'} symmetry={'exact' if sym else 'BROKEN'}")
        return ok, "; ".join(parts)

    return _timed(13, "determinism and symmetry", body)


CRITERIA: tuple[Callable[[], CriterionResult], ...] = (
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
    criterion_11,
    criterion_12,
    criterion_13,
)


def run_all(echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    results = []
    for crit in CRITERIA:
        r = crit()
        results.append(r)
        if echo is not None:
            echo(format_line(r))
    return results
