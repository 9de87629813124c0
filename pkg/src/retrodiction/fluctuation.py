"""f-families, omega variables and the fluctuation relations they satisfy.

For an invertible ``f`` on the positive reals, ``omega_F = f(r)`` and
``omega_R = f(1/r)`` are linked by ``omega_R = g(omega_F)`` with
``g(u) = f(1 / f^{-1}(u))``.  On a finite alphabet the laws of ``omega``
are purely atomic and the density relation loses its Jacobian: an atom of
forward weight ``w_F`` at ``omega`` is mirrored by a reverse atom at
``g(omega)`` of weight ``f^{-1}(g(omega)) * w_F``.  Summing that over atoms
gives ``<f^{-1}(g(omega))>_F = 1``, i.e. normalization of the reverse process.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import (
    DivergenceInfinite,
    DomainError,
    MissingReverseAtom,
    NonInvertibleCustom,
    NotNormalized,
    ZeroParameter,
)
from .prob_core import TOL_NORM, JointProcess, RatioTable

MERGE_TOL = 1e-9
FAMILY_TOL = 1e-10
_GRID = np.logspace(-6, 6, 1000)

Func = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FFamily:
    """An invertible ``f`` together with ``f^{-1}``, ``g`` and ``g'``.

    ``f_reciprocal(r)`` evaluates ``f(1/r)``; families override it when a
    closed form is more accurate (for the log family it is exact negation).
    """

    kind: str
    parameter: Optional[float]
    f: Func
    f_inverse: Func
    g: Func
    g_prime: Func
    f_reciprocal: Func

    @property
    def name(self) -> str:
        if self.parameter is None:
            return self.kind
        return f"{self.kind}({self.parameter:g})"

    def spec(self) -> dict:
        return {"kind": self.kind, "parameter": self.parameter}


def _vector(fn):
    def wrapped(x):
        with np.errstate(all="ignore"):
            return fn(np.asarray(x, dtype=float))
    return wrapped


def _exp_g(kappa):
    def g(w):
        lw = np.log(w)
        if np.any(lw == 0) or np.any(~np.isfinite(lw)):
            raise DomainError("exp family: g is undefined at omega <= 0 or omega = 1")
        return np.exp(kappa ** 2 / lw)

    def g_prime(w):
        lw = np.log(w)
        if np.any(lw == 0) or np.any(~np.isfinite(lw)):
            raise DomainError("exp family: g' is undefined at omega <= 0 or omega = 1")
        return -np.exp(kappa ** 2 / lw) * kappa ** 2 / (lw ** 2 * w)

    return g, g_prime


def make_f_family(kind: str, parameter: Optional[float] = None, *,
                  f: Optional[Func] = None, f_inverse: Optional[Func] = None,
                  g: Optional[Func] = None, g_prime: Optional[Func] = None) -> FFamily:
    """Build one of the standard families or validate a custom one.

    ``log(z)``: ``f(r) = ln(r) / z``, ``g(w) = -w``.
    ``power(alpha)``: ``f(r) = r**alpha``, ``g(w) = 1/w``.
    ``exp(kappa)``: ``f(r) = exp(kappa r)``, ``g(w) = exp(kappa**2 / ln w)``.
    ``custom``: the four callables are supplied and checked on a log grid
    over ``[1e-6, 1e6]`` (strict monotonicity, inversion, and the defining
    property of ``g``).
    """
    if kind == "custom":
        if f is None or f_inverse is None or g is None:
            raise ValueError("a custom family needs f, f_inverse and g")
        fam = FFamily("custom", None, _vector(f), _vector(f_inverse), _vector(g),
                      _vector(g_prime) if g_prime is not None else _numeric_derivative(g),
                      _vector(lambda r: f(1.0 / r)))
        validate_family(fam)
        return fam

    if parameter is None:
        raise ValueError(f"family {kind!r} needs a parameter")
    parameter = float(parameter)
    if not math.isfinite(parameter):
        raise ValueError(f"family parameter must be finite, got {parameter!r}")
    if parameter == 0:
        raise ZeroParameter(f"family {kind!r} needs a nonzero parameter")

    if kind == "log":
        z = parameter
        return FFamily("log", z,
                       f=_vector(lambda r: np.log(r) / z),
                       f_inverse=_vector(lambda w: np.exp(z * w)),
                       g=_vector(lambda w: -w),
                       g_prime=_vector(lambda w: -np.ones_like(w)),
                       f_reciprocal=_vector(lambda r: -(np.log(r) / z)))
    if kind == "power":
        a = parameter
        return FFamily("power", a,
                       f=_vector(lambda r: r ** a),
                       f_inverse=_vector(lambda w: w ** (1.0 / a)),
                       g=_vector(lambda w: 1.0 / w),
                       g_prime=_vector(lambda w: -1.0 / w ** 2),
                       f_reciprocal=_vector(lambda r: r ** (-a)))
    if kind == "exp":
        k = parameter
        g_fn, gp_fn = _exp_g(k)
        return FFamily("exp", k,
                       f=_vector(lambda r: np.exp(k * r)),
                       f_inverse=_vector(lambda w: np.log(w) / k),
                       g=_vector(g_fn),
                       g_prime=_vector(gp_fn),
                       f_reciprocal=_vector(lambda r: np.exp(k / r)))
    raise ValueError(f"unknown family kind {kind!r}")


def _numeric_derivative(g):
    g = _vector(g)

    def g_prime(w):
        w = np.asarray(w, dtype=float)
        h = 1e-6 * np.maximum(np.abs(w), 1.0)
        return (g(w + h) - g(w - h)) / (2 * h)
    return g_prime


def _close(a, b, rtol=FAMILY_TOL):
    return np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b)) + 1e-300


def validate_family(family: FFamily, grid: np.ndarray = _GRID) -> None:
    """Raise :class:`NonInvertibleCustom` unless ``family`` is consistent on ``grid``.

    Grid points where ``f`` overflows are skipped.
    """
    values = family.f(grid)
    ok = np.isfinite(values)
    if ok.sum() < 2:
        raise NonInvertibleCustom(f"{family.name}: f is not finite on the test grid")
    r, values = grid[ok], values[ok]
    steps = np.diff(values)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise NonInvertibleCustom(f"{family.name}: f is not strictly monotone")
    try:
        back = family.f_inverse(values)
        mirrored = family.g(values)
    except DomainError as exc:
        raise NonInvertibleCustom(f"{family.name}: {exc}") from None
    if not np.all(_close(back, r)):
        raise NonInvertibleCustom(f"{family.name}: f_inverse(f(r)) != r")
    if not np.all(_close(mirrored, family.f(1.0 / r))):
        raise NonInvertibleCustom(f"{family.name}: g(f(r)) != f(1/r)")


# ---------------------------------------------------------------------------
# omega variables and their laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OmegaTable:
    support: tuple
    omega_f: np.ndarray
    omega_r: np.ndarray
    family: FFamily

    def forward(self) -> dict:
        return dict(zip(self.support, self.omega_f.tolist()))

    def reverse(self) -> dict:
        return dict(zip(self.support, self.omega_r.tolist()))


def omega_variables(ratios: RatioTable, family: FFamily) -> OmegaTable:
    """``omega_F = f(r)`` and ``omega_R = f(1/r)`` on the ratio support."""
    r = np.asarray(ratios.ratio, dtype=float)
    if r.size and not np.all(r > 0):
        raise DomainError("ratios must be strictly positive")
    omega_f = family.f(r)
    omega_r = family.f_reciprocal(r)
    if not (np.all(np.isfinite(omega_f)) and np.all(np.isfinite(omega_r))):
        raise DomainError(f"{family.name}: f is not finite at some ratio")
    if r.size:
        mirrored = family.g(omega_f)
        if not np.all(np.abs(mirrored - omega_r) <= FAMILY_TOL * np.maximum(1.0, np.abs(omega_r))):
            raise DomainError(f"{family.name}: omega_R != g(omega_F)")
    return OmegaTable(ratios.support, omega_f, omega_r, family)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Atomic law of a real random variable.

    ``mass`` is the total weight; it is one except for measures built with
    ``restrict=True`` from a process whose mass partly lies off the support.
    """

    values: np.ndarray
    weights: np.ndarray
    merge_tol: float = MERGE_TOL
    mass: float = 1.0

    def __post_init__(self):
        if len(self.values) != len(self.weights):
            raise ValueError("values and weights differ in length")
        if np.any(np.diff(self.values) <= self.merge_tol):
            raise ValueError("atoms closer than the merge tolerance")
        if np.any(np.asarray(self.weights) < 0):
            raise ValueError("negative atom weight")
        if abs(float(np.sum(self.weights)) - self.mass) > TOL_NORM:
            raise NotNormalized("atom weights do not add up to the measure mass")

    def __len__(self) -> int:
        return len(self.values)

    def atoms(self) -> list:
        return list(zip(self.values.tolist(), self.weights.tolist()))


def cluster_values(values, weights, merge_tol: float = MERGE_TOL):
    """Single-linkage clustering of 1-D points; returns (atom values, atom weights).

    Consecutive sorted values no more than ``merge_tol`` apart share an
    atom, whose position is the weight-averaged position of its members.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(v) > merge_tol) + 1))
    ends = np.concatenate((starts[1:], [v.size]))
    atom_v, atom_w = [], []
    for s, e in zip(starts, ends):
        total = math.fsum(w[s:e])
        centre = math.fsum(v[s:e] * w[s:e]) / total if total > 0 else float(np.mean(v[s:e]))
        atom_v.append(centre)
        atom_w.append(total)
    return np.array(atom_v), np.array(atom_w)


def measure_of(joint: JointProcess, omega_values: Mapping, merge_tol: float = MERGE_TOL, *,
               restrict: bool = False) -> DiscreteMeasure:
    """Law of ``omega`` under ``joint``.

    ``omega_values`` maps ``(x, y)`` pairs to reals.  Every pair carrying
    joint mass must have a value, unless ``restrict`` is set, in which case
    such pairs are left out and the measure is sub-normalized.
    """
    vals, weights = [], []
    for pair, m in joint.as_dict().items():
        if pair in omega_values:
            vals.append(omega_values[pair])
            weights.append(m)
        elif not restrict:
            raise DomainError(f"no omega value for pair {pair!r} with mass {m!r}")
    atom_v, atom_w = cluster_values(vals, weights, merge_tol)
    return DiscreteMeasure(atom_v, atom_w, merge_tol, math.fsum(weights))


# ---------------------------------------------------------------------------
# relations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrooksResidual:
    omega: float
    weight_forward: float
    omega_reverse: float
    weight_reverse: float
    predicted: float
    residual: float


def _find_atom(values: np.ndarray, target: float, tol: float) -> Optional[int]:
    if values.size == 0:
        return None
    k = int(np.searchsorted(values, target))
    best = min((i for i in (k - 1, k) if 0 <= i < values.size),
               key=lambda i: abs(values[i] - target))
    return best if abs(values[best] - target) <= tol else None


def crooks_residuals(mu_f: DiscreteMeasure, mu_r: DiscreteMeasure,
                     family: FFamily) -> list:
    """Atom-by-atom check of ``w_R(g(omega)) = f^{-1}(g(omega)) w_F(omega)``.

    A reverse atom is matched to ``g(omega)`` within the merge tolerance
    (scaled by ``|g(omega)|`` when that exceeds one).  Reverse atoms left
    unmatched are reported with zero forward weight, so their whole weight
    counts as residual.
    """
    used = set()
    rows = []
    for omega, w_f in zip(mu_f.values.tolist(), mu_f.weights.tolist()):
        if w_f == 0:
            continue
        target = float(family.g(omega))
        tol = mu_r.merge_tol * max(1.0, abs(target))
        k = _find_atom(mu_r.values, target, tol)
        if k is None:
            raise MissingReverseAtom(
                f"{family.name}: no reverse atom at g({omega!r}) = {target!r}")
        used.add(k)
        w_r = float(mu_r.weights[k])
        predicted = float(family.f_inverse(target)) * w_f
        rows.append(CrooksResidual(omega, w_f, float(mu_r.values[k]), w_r, predicted,
                                   abs(w_r - predicted)))
    for k, (v, w_r) in enumerate(zip(mu_r.values.tolist(), mu_r.weights.tolist())):
        if k not in used and w_r > 0:
            rows.append(CrooksResidual(math.nan, 0.0, v, w_r, 0.0, w_r))
    return rows


def max_residual(rows) -> float:
    return max((row.residual for row in rows), default=0.0)


def jarzynski_average(pf: JointProcess, omega_f: Mapping, family: FFamily) -> float:
    """``<f^{-1}(g(omega))>_F`` summed exactly over the forward table."""
    terms = []
    for pair, m in pf.as_dict().items():
        if pair not in omega_f:
            raise DomainError(f"no omega value for forward pair {pair!r}")
        terms.append(m * float(family.f_inverse(family.g(omega_f[pair]))))
    total = math.fsum(terms)
    if not math.isfinite(total):
        raise DomainError(f"{family.name}: non-finite Jarzynski average")
    return total


def f_divergence(pf: JointProcess, pr: JointProcess, f: Callable, *,
                 raise_on_infinite: bool = False) -> float:
    """``sum_{x,y} P_F f(P_F / P_R)``.

    Returns ``inf`` when ``P_F > 0`` somewhere ``P_R = 0`` (or raises
    :class:`DivergenceInfinite` if asked to).
    """
    forward = pf.table
    reverse = pr.embed(pf.x_alphabet, pf.y_alphabet)
    live = forward > 0
    if np.any(live & (reverse == 0)):
        if raise_on_infinite:
            raise DivergenceInfinite("P_F is not absolutely continuous w.r.t. P_R")
        return math.inf
    r = forward[live] / reverse[live]
    with np.errstate(all="ignore"):
        vals = np.asarray(f(r), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DomainError("f is not finite at some ratio")
    return math.fsum(forward[live] * vals)


@dataclass(frozen=True, eq=False)
class FamilyReport:
    """All relations for one family on one forward/reverse pair."""

    family: FFamily
    omega: OmegaTable
    mu_f: DiscreteMeasure
    mu_r: DiscreteMeasure
    jarzynski_average: float
    reverse_mass: float
    crooks: list
    f_divergence: float

    @property
    def jarzynski_residual(self) -> float:
        return abs(self.jarzynski_average - self.reverse_mass)

    @property
    def max_crooks_residual(self) -> float:
        return max_residual(self.crooks)


def evaluate_family(pf: JointProcess, pr: JointProcess, ratios: RatioTable,
                    family: FFamily, merge_tol: float = MERGE_TOL) -> FamilyReport:
    """Omega tables, both laws, and the Jarzynski/Crooks/divergence checks.

    The Jarzynski target is the reverse mass on the ratio support, which is
    one whenever the two processes share their support.
    """
    omega = omega_variables(ratios, family)
    restrict = bool(ratios.reverse_only)
    mu_f = measure_of(pf, omega.forward(), merge_tol)
    mu_r = measure_of(pr, omega.reverse(), merge_tol, restrict=restrict)
    avg = jarzynski_average(pf, omega.forward(), family)
    rows = crooks_residuals(mu_f, mu_r, family)
    div = f_divergence(pf, pr, family.f)
    return FamilyReport(family, omega, mu_f, mu_r, avg, ratios.reverse_mass, rows, div)
