"""
Quantitative checks on recorded trajectories.

Two families of a-priori gradient bounds are evaluated over every pair of
samples, a pointwise Bernstein-type diagnostic is evaluated on snapshots, and
the oscillation history is turned into the weighted tail integral

    y(t) = int_t^inf (s - t) osc(s)^gamma ds,

whose differential inequality y' + y^alpha / C <= 0 governs the large-time
decay.  Non-explicit constants are estimated from the data.

Every check produces :class:`CheckRecord` entries whose ``margin`` is the
relative slack of value against bound: positive means satisfied, and a
record passes when ``value <= bound (1 + tolerance) + atol``.  The absolute
slack ``atol`` is folded into the margin, (bound + atol - value) / bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

import numpy as np

from . import grid
from .grid import Domain, FloatArray
from .solver import Trajectory

DEFAULT_TOL = 0.05
DEFAULT_ATOL = 1e-12


class InsufficientDecayError(ValueError):
    """The trajectory has not decayed enough for the truncated tail integral."""


# ---------------------------------------------------------------------------
# exponent bookkeeping


def admissibility_threshold(N: int, p: float) -> float:
    """((2p + 1 - N) / N)_+; beta must exceed it strictly."""
    return max((2.0 * p + 1.0 - N) / N, 0.0)


def default_beta(N: int, p: float) -> float:
    return 1.25 * admissibility_threshold(N, p) + 0.5


@dataclass(frozen=True)
class DecayParams:
    N: int
    p: float
    beta: float
    gamma: float
    eta: float
    alpha: float

    @property
    def regime(self) -> str:
        if self.p < 1:
            return "extinction"
        return "exponential" if self.p == 1 else "algebraic"


def decay_params(N: int, p: float, beta: float | None = None) -> DecayParams:
    """Exponents gamma = N(beta+1), eta = gamma - p, alpha = (1+eta)/(2+eta-p).

    ``beta=None`` picks :func:`default_beta`.

    Raises:
        ValueError: if N is not 1 or 2, p <= 0, or beta is not strictly admissible.
    """
    if N not in (1, 2):
        raise ValueError(f"N must be 1 or 2, got {N}")
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    if beta is None:
        beta = default_beta(N, p)
    threshold = admissibility_threshold(N, p)
    if not beta > threshold:
        raise ValueError(f"beta={beta} is not admissible: need beta > {threshold}")
    gamma = N * (beta + 1.0)
    eta = gamma - p
    alpha = (1.0 + eta) / (2.0 + eta - p)
    return DecayParams(N=N, p=float(p), beta=float(beta), gamma=gamma, eta=eta, alpha=alpha)


# ---------------------------------------------------------------------------
# gradient bounds


def bound_sqrt(osc0: float, dt: float):
    """(1/2)^(1/2) osc0 dt^(-1/2); broadcasts over arrays."""
    dt_arr = np.asarray(dt, dtype=float)
    if np.any(dt_arr <= 0):
        raise ValueError("dt must be positive")
    if np.any(np.asarray(osc0) < 0):
        raise ValueError("osc0 must be nonnegative")
    out = math.sqrt(0.5) * np.asarray(osc0, dtype=float) / np.sqrt(dt_arr)
    return float(out) if np.ndim(out) == 0 else out


def power_constant(a: float, p: float) -> float:
    """(max{p,2} / (a p |1-p|))^(1/p)."""
    if p == 1:
        raise ValueError("the power bound is not defined for p = 1")
    if not (a > 0 and p > 0):
        raise ValueError("need a > 0 and p > 0")
    return (max(p, 2.0) / (a * p * abs(1.0 - p))) ** (1.0 / p)


def bound_power(osc0: float, dt: float, a: float, p: float):
    """(max{p,2}/(a p |1-p|))^(1/p) osc0^(1/p) dt^(-1/p); broadcasts over arrays."""
    c = power_constant(a, p)
    dt_arr = np.asarray(dt, dtype=float)
    if np.any(dt_arr <= 0):
        raise ValueError("dt must be positive")
    osc_arr = np.asarray(osc0, dtype=float)
    if np.any(osc_arr < 0):
        raise ValueError("osc0 must be nonnegative")
    out = c * osc_arr ** (1.0 / p) * dt_arr ** (-1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class CheckRecord:
    name: str
    margin: float
    location: Any
    tolerance: float
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        loc = self.location
        if isinstance(loc, tuple):
            loc = [v if isinstance(v, (int, float)) else list(v) for v in loc]
        return {
            "name": self.name,
            "margin": self.margin,
            "location": loc,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "note": self.note,
        }


@dataclass
class BoundReport:
    records: list[CheckRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def __getitem__(self, name: str) -> CheckRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def names(self) -> list[str]:
        return [r.name for r in self.records]

    def extend(self, other: BoundReport) -> None:
        self.records.extend(other.records)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "records": [r.to_dict() for r in self.records]}


def _worst(
    name: str,
    value: np.ndarray,
    bound: np.ndarray,
    locations,
    tol: float,
    atol: float,
    note: str = "",
) -> CheckRecord:
    """Record for value <= bound (1 + tol) + atol over flattened candidates."""
    value = np.asarray(value, dtype=float).ravel()
    bound = np.asarray(bound, dtype=float).ravel()
    if value.size == 0:
        return CheckRecord(name, math.inf, None, tol, True, note or "no samples")
    scale = np.where(bound > 0, bound, 1.0)
    # a denormal bound can overflow the ratio; +-inf is the right margin then
    with np.errstate(over="ignore"):
        margins = (bound + atol - value) / scale
    ok = value <= bound * (1.0 + tol) + atol
    i = int(np.argmin(margins))
    return CheckRecord(name, float(margins[i]), locations(i), tol, bool(np.all(ok)), note)


def check_gradient_bounds(
    traj: Trajectory,
    a: float,
    p: float,
    tol: float = DEFAULT_TOL,
    atol: float = DEFAULT_ATOL,
) -> BoundReport:
    """Both gradient bounds over every sample pair s < t.

    The power bound is skipped for p = 1 and a = 0.  Negative ``a`` enters
    through |a|: both bounds depend on the data only through M - m, which is
    invariant under u -> -u.
    """
    report = BoundReport()
    n = len(traj.times)
    if n < 2:
        return report
    t = np.asarray(traj.times)
    osc = np.asarray(traj.osc)
    g = np.asarray(traj.grad_sup)
    dt = t[None, :] - t[:, None]
    s_idx, t_idx = np.nonzero(dt > 0)
    lag = dt[s_idx, t_idx]
    values = g[t_idx]
    note = "a < 0 handled through |a|" if a < 0 else ""

    def where(k: int) -> tuple[float, float]:
        return (float(t[s_idx[k]]), float(t[t_idx[k]]))

    report.records.append(
        _worst(
            "gradient_bound_sqrt",
            values,
            bound_sqrt(osc[s_idx], lag),
            where,
            tol,
            atol,
            note,
        )
    )
    if p != 1 and a != 0:
        report.records.append(
            _worst(
                "gradient_bound_power",
                values,
                bound_power(osc[s_idx], lag, abs(a), p),
                where,
                tol,
                atol,
                note,
            )
        )
    return report


# ---------------------------------------------------------------------------
# Poincare


def poincare_constant(d: Domain, q: float) -> float:
    """(2 diam / |Omega|^(1/q)) (q / (q - N))."""
    N = d.dimension
    if not q > N:
        raise ValueError(f"q must exceed the dimension {N}, got {q}")
    return (2.0 * d.diameter / d.volume ** (1.0 / q)) * (q / (q - N))


def poincare_check(f: np.ndarray, q: float, d: Domain) -> tuple[float, float]:
    """(oscillation(f), C_q ||grad f||_q) for the explicit constant C_q."""
    c = poincare_constant(d, q)
    f = d.check(f)
    lhs = grid.oscillation(f)
    rhs = c * grid.q_norm(grid.gradient_magnitude(f, d), q, d)
    return lhs, rhs


# ---------------------------------------------------------------------------
# Bernstein diagnostic

BernsteinCase = Literal["sqrt", "power"]


def bernstein_theta(
    xi,
    M0: float,
    m0: float,
    delta: float,
    a: float,
    p: float,
    case: BernsteinCase,
):
    """Weight theta(xi) for w = |grad u|^2 / theta(u), stated for a > 0.

    ``delta`` is the positive margin keeping theta away from zero on [m0, M0].
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    xi = np.clip(np.asarray(xi, dtype=float), m0, M0)
    span = M0 - m0 + delta
    if case == "sqrt":
        if p <= 1:
            val = 0.5 * span**2 - 0.5 * (M0 - xi) ** 2
        else:
            val = 0.5 * span**2 - 0.5 * (xi - m0) ** 2
    elif case == "power":
        if p == 1:
            raise ValueError("no power-case weight for p = 1")
        if not a > 0:
            raise ValueError("the power-case weight needs a > 0")
        if p < 1:
            val = (2.0 / (a * p * (1.0 - p))) ** (2.0 / p) * span ** ((2.0 - p) / p) * (xi - m0 + delta)
        elif p < 2:
            val = (2.0 / (a * p * (p - 1.0))) ** (2.0 / p) * span ** ((2.0 - p) / p) * (M0 - xi + delta)
        else:
            val = ((M0 - xi + delta) / (a * (p - 1.0))) ** (2.0 / p)
    else:
        raise ValueError(f"unknown case {case!r}")
    return float(val) if np.ndim(val) == 0 else val


def bernstein_diagnostic(
    traj: Trajectory,
    d: Domain,
    a: float,
    p: float,
    case: BernsteinCase = "sqrt",
    delta: float | None = None,
    tol: float = DEFAULT_TOL,
    atol: float = DEFAULT_ATOL,
) -> BoundReport:
    """Pointwise |grad u(t,x)|^2 <= theta(u(t,x)) t^(-k) on every snapshot.

    k = 1 in the sqrt case and 2/p in the power case.  M0, m0 are taken from
    the first sample; ``delta`` defaults to 1% of the initial oscillation.
    For a < 0 the fields are negated and |a| is used.

    Raises:
        ValueError: if the trajectory carries no snapshots.
    """
    if not traj.snapshots:
        raise ValueError("bernstein_diagnostic needs snapshots")
    M0, m0 = float(traj.M[0]), float(traj.m[0])
    sign = 1.0
    if a < 0:
        sign = -1.0
        M0, m0 = -m0, -M0
    if delta is None:
        delta = 0.01 * (M0 - m0)
    if not delta > 0:
        # constant data: any positive margin works
        delta = 1.0
    power = 1.0 if case == "sqrt" else 2.0 / p
    values, bounds, where = [], [], []
    for t, u in traj.snapshots:
        if t <= 0:
            continue
        v = sign * np.asarray(u)
        g2 = grid.gradient_squared(v, d)
        theta = bernstein_theta(v, M0, m0, delta, abs(a), p, case)
        values.append(g2.ravel())
        bounds.append((np.asarray(theta) * t ** (-power)).ravel())
        where.extend((float(t), idx) for idx in np.ndindex(v.shape))
    name = f"bernstein_{case}"
    if not values:
        return BoundReport([CheckRecord(name, math.inf, None, tol, True, "no snapshots with t > 0")])
    # squared quantities: the relative tolerance applies to |grad u|
    tol2 = (1.0 + tol) ** 2 - 1.0
    rec = _worst(
        name,
        np.concatenate(values),
        np.concatenate(bounds),
        lambda i: where[i],
        tol2,
        atol,
        f"delta={delta:.6g}",
    )
    return BoundReport([rec])


# ---------------------------------------------------------------------------
# tail integral y(t)


@dataclass(frozen=True)
class YFunctional:
    """y and y' sampled on ``times`` plus an estimate of the truncated tail at t = 0."""

    times: FloatArray
    values: FloatArray
    tail_bound: float
    derivative: FloatArray

    def __iter__(self):
        yield self.values
        yield self.tail_bound

    def at(self, t) -> FloatArray:
        """Linear interpolation; y is convex so the chord is an upper bound."""
        return np.interp(t, self.times, self.values)


def _sampled_y(times: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """y(t_i) = int_{t_i}^T (s - t_i) g(s) ds and y'(t_i) = -int_{t_i}^T g(s) ds.

    g is taken linear between samples.  Both are built backwards from
    nonnegative pieces, so no cancellation occurs and y is exactly
    nonincreasing.
    """
    n = len(times)
    y = np.zeros(n)
    mass = np.zeros(n)
    for i in range(n - 2, -1, -1):
        h = times[i + 1] - times[i]
        y[i] = y[i + 1] + h * mass[i + 1] + h * h * (g[i] / 6.0 + g[i + 1] / 3.0)
        mass[i] = mass[i + 1] + 0.5 * h * (g[i] + g[i + 1])
    return y, -mass


def _tail_rate(times: np.ndarray, g: np.ndarray) -> float:
    """Exponential rate of g over the last quarter of positive samples."""
    pos = g > 0
    k = max(int(0.25 * np.count_nonzero(pos)), 2)
    ts, gs = times[pos][-k:], g[pos][-k:]
    if len(ts) < 2 or ts[-1] == ts[0]:
        return 0.0
    slope = np.polyfit(ts, np.log(gs), 1)[0]
    return float(-slope)


def y_functional(traj: Trajectory, gamma: float, max_residual: float = 0.01) -> YFunctional:
    """Sampled y with the infinite upper limit truncated at the last sample.

    ``tail_bound`` extrapolates osc^gamma exponentially beyond t_end and
    integrates the remainder for t = 0; it is infinite when no decay is seen.

    Raises:
        InsufficientDecayError: if osc(t_end) > max_residual * osc(0).
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    times = np.asarray(traj.times, dtype=float)
    osc = np.clip(np.asarray(traj.osc, dtype=float), 0.0, None)
    if osc[-1] > max_residual * osc[0]:
        raise InsufficientDecayError(
            f"osc(t_end)={osc[-1]:.3g} exceeds {max_residual:g} * osc(0)={osc[0]:.3g}"
        )
    g = osc**gamma
    values, deriv = _sampled_y(times, g)
    if g[-1] == 0:
        tail = 0.0
    else:
        lam = _tail_rate(times, g)
        T = times[-1]
        tail = g[-1] * (T / lam + 1.0 / lam**2) if lam > 0 else math.inf
    return YFunctional(times, values, tail, deriv)


def window_decay_check(
    traj: Trajectory,
    gamma: float,
    tol: float = DEFAULT_TOL,
    atol: float = DEFAULT_ATOL,
    y: YFunctional | None = None,
) -> BoundReport:
    """osc(t) <= (8 y(t/2) / t^2)^(1/gamma) at every sample t > 0.

    This follows from monotonicity of osc alone, so it cannot fail on a
    nonincreasing oscillation history.
    """
    y = y if y is not None else y_functional(traj, gamma)
    t = y.times
    keep = t > 0
    tt = t[keep]
    osc = np.clip(np.asarray(traj.osc)[keep], 0.0, None)
    rhs = (8.0 * y.at(0.5 * tt) / tt**2) ** (1.0 / gamma)
    rec = _worst("window_decay", osc, rhs, lambda i: float(tt[i]), tol, atol)
    return BoundReport([rec])


def _envelope(times: np.ndarray, y0: float, C: float, params: DecayParams) -> np.ndarray:
    if params.p == 1:
        return y0 * np.exp(-times / C)
    am1 = params.alpha - 1.0
    return (y0 ** (-am1) + am1 * times / C) ** (-1.0 / am1)


def empirical_envelope(
    traj: Trajectory,
    params: DecayParams,
    tol: float = DEFAULT_TOL,
    atol: float = DEFAULT_ATOL,
    y: YFunctional | None = None,
) -> tuple[float, FloatArray, BoundReport]:
    """Smallest C with y' + y^alpha / C <= 0 on interior samples, and its envelope.

    y' is the exact derivative of the sampled y, -int_t^T osc^gamma.

    Returns (C_emp, f sampled on traj.times, report).  The report checks
    y <= f and osc(t) <= (8 f(t/2) / t^2)^(1/gamma).

    Raises:
        ValueError: for p < 1 or when y fails to decrease on an interior sample.
    """
    if params.p < 1:
        raise ValueError("the envelope is defined for p >= 1")
    y = y if y is not None else y_functional(traj, params.gamma)
    t, yv = y.times, y.values
    if len(t) < 3:
        raise ValueError("need at least three samples")
    # y is integrated exactly from the sampled osc^gamma, so y' is exact too;
    # central differences of a fast exponential bias C_emp low on coarse grids
    dy = y.derivative[1:-1]
    yi = yv[1:-1]
    live = yi > 0
    if np.any(dy[live] >= 0):
        raise ValueError("y is not decreasing on the sample grid; refine the recording")
    C = float(np.max(yi[live] ** params.alpha / (-dy[live]))) if np.any(live) else 0.0
    y0 = float(yv[0])
    if C == 0.0 or y0 == 0.0:
        f = np.zeros_like(t)
    else:
        f = _envelope(t, y0, C, params)
    report = BoundReport()
    report.records.append(_worst("envelope_y", yv, f, lambda i: float(t[i]), tol, atol, f"C_emp={C:.6g}"))
    keep = t > 0
    tt = t[keep]
    f_half = _envelope(0.5 * tt, y0, C, params) if C > 0 and y0 > 0 else np.zeros_like(tt)
    osc = np.clip(np.asarray(traj.osc)[keep], 0.0, None)
    rhs = (8.0 * f_half / tt**2) ** (1.0 / params.gamma)
    report.records.append(_worst("envelope_window", osc, rhs, lambda i: float(tt[i]), tol, atol))
    return C, f, report


def search_beta(
    traj: Trajectory,
    N: int,
    p: float,
    t_ref: float,
    betas: Sequence[float] | None = None,
) -> tuple[float, float]:
    """Beta on a grid minimising the envelope window bound at ``t_ref``.

    Returns (beta, bound).  Betas whose envelope cannot be formed are skipped.
    """
    lo = admissibility_threshold(N, p)
    if betas is None:
        betas = lo + np.geomspace(0.05, 10.0, 24)
    best = (math.nan, math.inf)
    for beta in betas:
        if not beta > lo:
            continue
        params = decay_params(N, p, beta)
        try:
            C, _, _ = empirical_envelope(traj, params)
        except ValueError:
            continue
        y0 = float(y_functional(traj, params.gamma).values[0])
        if C == 0 or y0 == 0:
            return float(beta), 0.0
        f_half = float(_envelope(np.array([0.5 * t_ref]), y0, C, params)[0])
        bound = (8.0 * f_half / t_ref**2) ** (1.0 / params.gamma)
        if bound < best[1]:
            best = (float(beta), bound)
    if math.isnan(best[0]):
        raise ValueError("no admissible beta produced an envelope")
    return best


# ---------------------------------------------------------------------------
# rate fitting

DecayModel = Literal["exponential", "algebraic"]


def fit_decay_rate(
    traj, model: DecayModel = "exponential", window: float = 0.5
) -> tuple[float, float]:
    """Least-squares decay rate of osc over the trailing ``window`` of samples.

    ``traj`` needs ``times`` and ``osc``.  Returns (rate, R^2) where rate is
    the negated slope of log osc against t (exponential) or log t (algebraic).

    Raises:
        ValueError: if osc vanishes in the window, which signals extinction.
    """
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    times = np.asarray(traj.times, dtype=float)
    osc = np.asarray(traj.osc, dtype=float)
    k = max(int(round(window * len(times))), 2)
    ts, os_ = times[-k:], osc[-k:]
    if np.any(os_ <= 0):
        raise ValueError("oscillation vanishes inside the fit window (extinction)")
    if model == "exponential":
        x = ts
    elif model == "algebraic":
        if np.any(ts <= 0):
            raise ValueError("algebraic fit needs t > 0 on the window")
        x = np.log(ts)
    else:
        raise ValueError(f"unknown model {model!r}")
    yv = np.log(os_)
    slope, intercept = np.polyfit(x, yv, 1)
    resid = yv - (slope * x + intercept)
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2
