"""
The gradient nonlinearity a|xi|^p and its smooth regularisation F_eps.

Everything here is radial, so functions take ``s = |xi|^2`` (scalar or array)
instead of the vector xi.  The regularised family is

    0 < p <= 1 :  a (eps + s)^(p/2)
    1 < p <  2 :  a (s - eps) (eps + s)^((p-2)/2)
    p >= 2     :  a s^(p/2)

which reduces to a s^(p/2) for eps = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np


class Branch(str, Enum):
    SUBLINEAR = "sublinear"  # 0 < p <= 1
    SUBQUADRATIC = "subquadratic"  # 1 < p < 2
    SUPERQUADRATIC = "superquadratic"  # p >= 2


@dataclass(frozen=True)
class HamiltonianSpec:
    """Coefficient ``a``, exponent ``p`` and regularisation ``eps``."""

    a: float
    p: float
    eps: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.a) and np.isfinite(self.p)):
            raise ValueError("a and p must be finite")
        if not self.p > 0:
            raise ValueError(f"p must be positive, got {self.p}")
        if not 0.0 <= self.eps < 1.0:
            raise ValueError(f"eps must lie in [0, 1), got {self.eps}")

    @property
    def branch(self) -> Branch:
        if self.p <= 1.0:
            return Branch.SUBLINEAR
        if self.p < 2.0:
            return Branch.SUBQUADRATIC
        return Branch.SUPERQUADRATIC

    @property
    def holder_constant(self) -> float:
        """Per-branch constant K of the local Hoelder bound (requires a > 0)."""
        return {
            Branch.SUBLINEAR: self.a,
            Branch.SUBQUADRATIC: 4.0 * self.a,
            Branch.SUPERQUADRATIC: self.a * self.p,
        }[self.branch]

    def with_eps(self, eps: float) -> HamiltonianSpec:
        return replace(self, eps=float(eps))

    def flipped(self) -> HamiltonianSpec:
        return replace(self, a=-self.a)


def _as_s(s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("s = |xi|^2 must be finite and nonnegative")
    return arr


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


def h_exact(s, spec: HamiltonianSpec):
    """a |xi|^p evaluated on s = |xi|^2."""
    arr = _as_s(s)
    return _out(spec.a * arr ** (0.5 * spec.p), s)


def f_eps(s, spec: HamiltonianSpec):
    """Regularised nonlinearity F_eps on s = |xi|^2."""
    arr = _as_s(s)
    a, p, eps = spec.a, spec.p, spec.eps
    if eps == 0.0 or spec.branch is Branch.SUPERQUADRATIC:
        val = a * arr ** (0.5 * p)
    elif spec.branch is Branch.SUBLINEAR:
        val = a * (eps + arr) ** (0.5 * p)
    else:
        val = a * (arr - eps) * (eps + arr) ** (0.5 * (p - 2.0))
    return _out(val, s)


def radial_flux(s, spec: HamiltonianSpec):
    """(grad F_eps)(xi) . xi, i.e. 2 s dF/ds, from the closed-form derivatives."""
    arr = _as_s(s)
    a, p, eps = spec.a, spec.p, spec.eps
    if spec.branch is Branch.SUPERQUADRATIC:
        val = a * p * arr ** (0.5 * p)
    else:
        base = eps + arr
        with np.errstate(divide="ignore", invalid="ignore"):
            if spec.branch is Branch.SUBLINEAR:
                val = a * p * (arr / base) * base ** (0.5 * p)
            else:
                val = a * (arr / base) * ((2.0 * (2.0 - 0.5 * p) * eps + p * arr) / base) * base ** (0.5 * p)
        val = np.where(base > 0, val, 0.0)
    return _out(val, s)


def structural_defect(s, spec: HamiltonianSpec):
    """(grad F_eps).xi - F_eps - a(p-1)|xi|^p.

    Nonpositive for 0 < p <= 1 and nonnegative for p > 1 whenever a > 0.
    Identically zero on the superquadratic branch.
    """
    if not spec.a > 0:
        raise ValueError("structural inequalities are stated for a > 0")
    arr = _as_s(s)
    a, p, eps = spec.a, spec.p, spec.eps
    if spec.branch is Branch.SUPERQUADRATIC:
        return _out(np.zeros_like(arr), s)
    base = eps + arr
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.branch is Branch.SUBLINEAR:
            # ratios are bounded, so denormal eps cannot overflow
            lhs = a * (((p - 1.0) * arr - eps) / base) * base ** (0.5 * p)
        else:
            ratio = (p - 1.0) + (2.0 - p) * (eps / base) * ((3.0 * arr + eps) / base)
            lhs = a * ratio * base ** (0.5 * p)
    lhs = np.where(base > 0, lhs, 0.0)
    val = lhs - a * (p - 1.0) * arr ** (0.5 * p)
    return _out(val, s)


def holder_gap(s1, s2, rho: float, spec: HamiltonianSpec):
    """Slack in |F(xi1) - F(xi2)| <= K rho^max(p-1,0) |xi1 - xi2|^min(p,1).

    xi1 and xi2 are taken collinear and equally oriented, which makes
    |xi1 - xi2| = | |xi1| - |xi2| | as small as the magnitudes allow.
    """
    if not spec.a > 0:
        raise ValueError("the Hoelder bound is stated for a > 0")
    if not rho > 0:
        raise ValueError("rho must be positive")
    r1 = np.sqrt(_as_s(s1))
    r2 = np.sqrt(_as_s(s2))
    if np.any(r1 > rho) or np.any(r2 > rho):
        raise ValueError("|xi| exceeds rho")
    p = spec.p
    rhs = spec.holder_constant * rho ** max(p - 1.0, 0.0) * np.abs(r1 - r2) ** min(p, 1.0)
    lhs = np.abs(np.asarray(f_eps(s1, spec)) - np.asarray(f_eps(s2, spec)))
    return _out(rhs - lhs, rhs)
