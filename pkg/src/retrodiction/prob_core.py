"""Finite-alphabet probability objects and Bayesian channel reversal.

Conventions
-----------
A :class:`StochasticChannel` stores ``table[i, j] = phi(output_j | input_i)``,
so every row is a distribution.  A :class:`JointProcess` stores
``table[i, j] = P(x_i, y_j)`` where ``x`` is the initial-time label and ``y``
the final-time label, whatever the direction of the process.

The reverse of a channel ``phi`` with respect to an invariant distribution
``gamma`` is the channel ``phi_hat`` (input ``y``, output ``x``) with::

    gamma(y) phi_hat(x|y) = gamma(x) phi(y|x)

restricted to the labels where ``gamma`` is strictly positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    AlphabetMismatch,
    EmptySupport,
    NegativeMass,
    NotInvariant,
    NotNormalized,
    NotSquare,
    PriorOutsideSupport,
    SupportMismatch,
)

TOL_NORM = 1e-12
TOL_FIX = 1e-10

Label = Hashable
Pair = tuple


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_alphabet(alphabet: Optional[Iterable[Label]], n: int) -> tuple:
    if alphabet is None:
        return tuple(range(n))
    alphabet = tuple(alphabet)
    if len(alphabet) != n:
        raise AlphabetMismatch(f"alphabet has {len(alphabet)} labels for {n} masses")
    if len(set(alphabet)) != n:
        raise AlphabetMismatch(f"alphabet contains duplicate labels: {alphabet!r}")
    return alphabet


def first_label(labels: Iterable[Label]) -> Label:
    """Smallest label in natural order, falling back to ``repr`` order."""
    labels = list(labels)
    try:
        return min(labels)
    except TypeError:
        return min(labels, key=repr)


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector over an ordered alphabet.

    Build instances through :func:`validate_distribution`; the constructor
    itself only freezes the arrays.
    """

    alphabet: tuple
    mass: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        object.__setattr__(self, "mass", _frozen(self.mass))

    def __len__(self) -> int:
        return len(self.alphabet)

    def __getitem__(self, label: Label) -> float:
        return float(self.mass[self.index(label)])

    def index(self, label: Label) -> int:
        return self.alphabet.index(label)

    def support(self) -> tuple:
        return tuple(a for a, m in zip(self.alphabet, self.mass) if m > 0)

    def as_dict(self) -> dict:
        return dict(zip(self.alphabet, self.mass.tolist()))

    def restrict(self, labels: Sequence[Label], tol: float = TOL_NORM) -> "Distribution":
        """Drop every label not in ``labels``; the dropped mass must be zero."""
        idx = [self.index(a) for a in labels]
        return validate_distribution(self.mass[idx], labels, tol=tol)

    def __repr__(self) -> str:
        return f"Distribution({self.as_dict()!r})"


def validate_distribution(mass, alphabet: Optional[Iterable[Label]] = None,
                          tol: float = TOL_NORM) -> Distribution:
    """Check a mass vector and wrap it as a :class:`Distribution`.

    Entries in ``[-tol, 0)`` are treated as rounding noise and set to zero.
    The vector is rescaled to unit sum only when its sum is already within
    ``tol`` of one; larger deviations raise :class:`NotNormalized`.
    """
    arr = np.array(mass, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("a distribution needs at least one label")
    if not np.all(np.isfinite(arr)):
        raise NotNormalized(f"non-finite mass in {arr.tolist()}")
    if arr.min() < -tol:
        raise NegativeMass(f"negative mass {arr.min():.3e} in {arr.tolist()}")
    arr = np.where(arr < 0, 0.0, arr)
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise NotNormalized(f"masses sum to {total!r}, not 1")
    if total != 1.0:
        arr = arr / total
    return Distribution(_check_alphabet(alphabet, arr.size), arr)


def uniform(alphabet: Sequence[Label]) -> Distribution:
    n = len(alphabet)
    return Distribution(_check_alphabet(alphabet, n), np.full(n, 1.0 / n))


def point_mass(alphabet: Sequence[Label], label: Label) -> Distribution:
    alphabet = tuple(alphabet)
    mass = np.zeros(len(alphabet))
    mass[alphabet.index(label)] = 1.0
    return Distribution(_check_alphabet(alphabet, len(alphabet)), mass)


@dataclass(frozen=True, eq=False)
class StochasticChannel:
    """Conditional table ``phi(output | input)``, one row per input label."""

    input_alphabet: tuple
    output_alphabet: tuple
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "input_alphabet", tuple(self.input_alphabet))
        object.__setattr__(self, "output_alphabet", tuple(self.output_alphabet))
        object.__setattr__(self, "table", _frozen(self.table))

    @property
    def is_square(self) -> bool:
        return self.input_alphabet == self.output_alphabet

    def prob(self, output: Label, given: Label) -> float:
        """``phi(output | given)``."""
        i = self.input_alphabet.index(given)
        j = self.output_alphabet.index(output)
        return float(self.table[i, j])

    def row(self, given: Label) -> Distribution:
        i = self.input_alphabet.index(given)
        return Distribution(self.output_alphabet, self.table[i])

    def propagate(self, prior: Distribution) -> Distribution:
        if prior.alphabet != self.input_alphabet:
            raise AlphabetMismatch("prior alphabet differs from channel input alphabet")
        return validate_distribution(prior.mass @ self.table, self.output_alphabet)

    def column_sums(self) -> np.ndarray:
        return self.table.sum(axis=0)

    def __repr__(self) -> str:
        return (f"StochasticChannel(inputs={self.input_alphabet!r}, "
                f"outputs={self.output_alphabet!r}, table={self.table.tolist()!r})")


def make_channel(table, input_alphabet: Optional[Iterable[Label]] = None,
                 output_alphabet: Optional[Iterable[Label]] = None,
                 tol: float = TOL_NORM) -> StochasticChannel:
    """Validate a row-stochastic matrix and wrap it as a channel."""
    arr = np.array(table, dtype=float)
    if arr.ndim != 2 or 0 in arr.shape:
        raise ValueError(f"channel table must be a nonempty matrix, got shape {arr.shape}")
    n_in, n_out = arr.shape
    inputs = _check_alphabet(input_alphabet, n_in)
    outputs = _check_alphabet(output_alphabet, n_out)
    rows = []
    for label, row in zip(inputs, arr):
        try:
            rows.append(validate_distribution(row, outputs, tol=tol).mass)
        except (NegativeMass, NotNormalized) as exc:
            raise type(exc)(f"row for input {label!r}: {exc}") from None
    return StochasticChannel(inputs, outputs, np.array(rows))


def is_doubly_stochastic(channel: StochasticChannel, tol: float = TOL_FIX) -> bool:
    return bool(channel.is_square and np.abs(channel.column_sums() - 1.0).max() <= tol)


# ---------------------------------------------------------------------------
# steady states
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SteadyState:
    gamma: Distribution
    unique: bool
    residual: float


def invariance_residual(channel: StochasticChannel, gamma: Distribution) -> float:
    """``|| gamma phi - gamma ||_1``."""
    return float(np.abs(gamma.mass @ channel.table - gamma.mass).sum())


def closed_classes(table: np.ndarray) -> list:
    """Recurrent communicating classes of a transition matrix.

    A class is recurrent iff no positive entry leaves it.  Classes are
    returned as sorted index arrays, ordered by their smallest index.
    """
    adjacency = csr_matrix(np.asarray(table) > 0)
    n_comp, comp = connected_components(adjacency, directed=True, connection="strong")
    leaves = np.zeros(n_comp, dtype=bool)
    rows, cols = adjacency.nonzero()
    leaves[comp[rows][comp[rows] != comp[cols]]] = True
    classes = [np.flatnonzero(comp == c) for c in range(n_comp) if not leaves[c]]
    return sorted(classes, key=lambda idx: idx[0])


def _class_stationary(sub: np.ndarray, tol: float) -> np.ndarray:
    # sub is the (stochastic) restriction to one irreducible closed class
    vals, vecs = np.linalg.eig(sub.T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    v = vecs[:, k]
    v = (v / v.sum()).real
    v = np.clip(v, 0.0, None)
    v /= v.sum()
    if np.abs(v @ sub - v).sum() <= tol:
        return v
    # lazy chain removes periodicity; same stationary vector
    lazy = 0.5 * (sub + np.eye(len(sub)))
    v = np.full(len(sub), 1.0 / len(sub))
    for _ in range(100_000):
        nxt = v @ lazy
        if np.abs(nxt - v).sum() <= 1e-3 * tol:
            v = nxt
            break
        v = nxt
    return v / v.sum()


def steady_state(channel: StochasticChannel, seed_dist: Optional[Distribution] = None,
                 tol: float = TOL_FIX) -> SteadyState:
    """Invariant distribution of a square channel.

    Uniqueness is decided combinatorially: the invariant distribution is
    unique iff the positivity digraph has exactly one closed strongly
    connected class.  Without uniqueness, ``seed_dist`` selects the limit of
    the seed under the chain (absorption into each closed class weighted by
    that class's stationary vector); with no seed, the closed class holding
    the smallest recurrent label is used.
    """
    if not channel.is_square:
        raise NotSquare("steady states need input alphabet == output alphabet")
    table = channel.table
    n = len(table)
    classes = closed_classes(table)
    unique = len(classes) == 1
    stationary = [_class_stationary(table[np.ix_(c, c)], tol) for c in classes]

    gamma = np.zeros(n)
    if unique or seed_dist is None:
        if unique:
            k = 0
        else:
            labels = channel.input_alphabet
            first = first_label(labels[i] for c in classes for i in c)
            k = next(j for j, c in enumerate(classes) if labels.index(first) in c)
        gamma[classes[k]] = stationary[k]
    else:
        if seed_dist.alphabet != channel.input_alphabet:
            raise AlphabetMismatch("seed distribution alphabet differs from channel alphabet")
        recurrent = np.concatenate(classes)
        transient = np.setdiff1d(np.arange(n), recurrent)
        seed = seed_dist.mass
        if transient.size:
            q = table[np.ix_(transient, transient)]
            fundamental = np.linalg.inv(np.eye(transient.size) - q)
        for c, pi in zip(classes, stationary):
            weight = seed[c].sum()
            if transient.size:
                absorb = fundamental @ table[np.ix_(transient, c)].sum(axis=1)
                weight += seed[transient] @ absorb
            gamma[c] += weight * pi
    dist = validate_distribution(gamma, channel.input_alphabet, tol=max(TOL_NORM, tol))
    return SteadyState(dist, unique, invariance_residual(channel, dist))


# ---------------------------------------------------------------------------
# reversal
# ---------------------------------------------------------------------------

def bayes_reverse_channel(channel: StochasticChannel, gamma: Distribution,
                          tol: float = TOL_FIX) -> StochasticChannel:
    """Bayesian inverse of ``channel`` with respect to the invariant ``gamma``.

    Labels with ``gamma = 0`` are removed from both alphabets first.  The
    denominator is the propagated weight ``sum_x gamma(x) phi(y|x)``, which
    equals ``gamma(y)`` up to the invariance residual and makes every row of
    the result sum to one to rounding.
    """
    if not channel.is_square:
        raise NotSquare("reversal with respect to a steady state needs a square channel")
    if gamma.alphabet != channel.input_alphabet:
        raise AlphabetMismatch("gamma alphabet differs from channel alphabet")
    residual = invariance_residual(channel, gamma)
    if residual > tol:
        raise NotInvariant(f"gamma is not invariant: residual {residual:.3e} > {tol:.1e}")
    keep = np.flatnonzero(gamma.mass > 0)
    if keep.size == 0:
        raise EmptySupport("gamma has empty support")
    labels = tuple(gamma.alphabet[i] for i in keep)
    g = gamma.mass[keep]
    joint = g[:, None] * channel.table[np.ix_(keep, keep)]
    inflow = joint.sum(axis=0)
    if np.any(inflow <= 0):
        raise NotInvariant("a supported label receives no probability from the support")
    return make_channel((joint / inflow[None, :]).T, labels, labels)


# ---------------------------------------------------------------------------
# joint processes
# ---------------------------------------------------------------------------

FORWARD = "forward"
REVERSE = "reverse"


@dataclass(frozen=True, eq=False)
class JointProcess:
    """Joint table ``P(x, y)`` with ``x`` at time 0 and ``y`` at time tau."""

    x_alphabet: tuple
    y_alphabet: tuple
    table: np.ndarray
    direction: str

    def __post_init__(self):
        object.__setattr__(self, "x_alphabet", tuple(self.x_alphabet))
        object.__setattr__(self, "y_alphabet", tuple(self.y_alphabet))
        object.__setattr__(self, "table", _frozen(self.table))
        if self.direction not in (FORWARD, REVERSE):
            raise ValueError(f"direction must be {FORWARD!r} or {REVERSE!r}")
        if self.table.shape != (len(self.x_alphabet), len(self.y_alphabet)):
            raise AlphabetMismatch("table shape does not match alphabets")
        if self.table.min() < 0:
            raise NegativeMass("joint table has a negative entry")
        total = self.table.sum()
        if abs(total - 1.0) > TOL_NORM:
            raise NotNormalized(f"joint table sums to {total!r}")

    def prob(self, x: Label, y: Label) -> float:
        return float(self.table[self.x_alphabet.index(x), self.y_alphabet.index(y)])

    def marginal_x(self) -> Distribution:
        return validate_distribution(self.table.sum(axis=1), self.x_alphabet)

    def marginal_y(self) -> Distribution:
        return validate_distribution(self.table.sum(axis=0), self.y_alphabet)

    def as_dict(self) -> dict:
        """Nonzero entries keyed by ``(x, y)``."""
        return {(x, y): float(self.table[i, j])
                for i, x in enumerate(self.x_alphabet)
                for j, y in enumerate(self.y_alphabet) if self.table[i, j] > 0}

    def embed(self, x_alphabet: Sequence[Label], y_alphabet: Sequence[Label]) -> np.ndarray:
        """This table laid out on larger alphabets (missing pairs are zero)."""
        x_alphabet, y_alphabet = tuple(x_alphabet), tuple(y_alphabet)
        try:
            xi = [x_alphabet.index(x) for x in self.x_alphabet]
            yi = [y_alphabet.index(y) for y in self.y_alphabet]
        except ValueError:
            raise AlphabetMismatch("process alphabet is not contained in the target") from None
        out = np.zeros((len(x_alphabet), len(y_alphabet)))
        out[np.ix_(xi, yi)] = self.table
        return out


def jeffrey_update(conditional: StochasticChannel, soft_evidence: Distribution) -> JointProcess:
    """``P'(x, y) = P(x|y) P'(y)``.

    ``conditional`` maps the conditioning variable ``y`` (its inputs) to
    ``x`` (its outputs).  A point-mass ``soft_evidence`` gives the
    Bayes-Laplace update.
    """
    if soft_evidence.alphabet != conditional.input_alphabet:
        raise AlphabetMismatch("soft evidence must live on the conditioning alphabet")
    table = (conditional.table * soft_evidence.mass[:, None]).T
    return JointProcess(conditional.output_alphabet, conditional.input_alphabet,
                        table, REVERSE)


def forward_process(prior: Distribution, channel: StochasticChannel) -> JointProcess:
    """``P_F(x, y) = p(x) phi(y|x)``."""
    if prior.alphabet != channel.input_alphabet:
        raise AlphabetMismatch("prior alphabet differs from channel input alphabet")
    return JointProcess(channel.input_alphabet, channel.output_alphabet,
                        prior.mass[:, None] * channel.table, FORWARD)


def reverse_process(prior: Distribution, reverse_channel: StochasticChannel) -> JointProcess:
    """``P_R(x, y) = q(y) phi_hat(x|y)``.

    ``prior`` may be given on the full final-time alphabet; it is then
    restricted to the inputs of ``reverse_channel`` (the support of the
    steady state), provided it puts no mass outside them.
    """
    inputs = reverse_channel.input_alphabet
    if prior.alphabet != inputs:
        if not set(inputs) <= set(prior.alphabet):
            raise AlphabetMismatch("prior does not cover the reverse channel inputs")
        outside = [a for a in prior.alphabet if a not in inputs and prior[a] > 0]
        if outside:
            raise PriorOutsideSupport(
                f"prior puts mass on labels outside the steady-state support: {outside!r}")
        prior = prior.restrict(inputs)
    return jeffrey_update(reverse_channel, prior)


# ---------------------------------------------------------------------------
# forward-reverse ratio
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RatioTable:
    """``r(x, y) = P_F(x, y) / P_R(x, y)`` on the pairs where both are positive.

    ``reverse_only`` lists pairs with ``P_R > 0 = P_F``; they never enter a
    forward average.  ``reverse_mass`` is the reverse probability carried by
    ``support``, which is one unless ``reverse_only`` is nonempty.
    """

    x_alphabet: tuple
    y_alphabet: tuple
    support: tuple
    ratio: np.ndarray
    reverse_only: tuple = ()
    reverse_mass: float = 1.0
    index: tuple = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "ratio", _frozen(self.ratio))

    def __len__(self) -> int:
        return len(self.support)

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.ratio.tolist()))


def forward_reverse_ratio(pf: JointProcess, pr: JointProcess, *,
                          allow_reverse_only: bool = False) -> RatioTable:
    """Pairwise ratio of a forward and a reverse process.

    Both tables are aligned on the forward alphabets (the reverse process may
    live on a subset, e.g. a steady-state support).  A pair with ``P_F > 0``
    and ``P_R = 0`` always raises :class:`SupportMismatch`; the converse
    raises too unless ``allow_reverse_only`` is set.
    """
    forward = pf.table
    reverse = pr.embed(pf.x_alphabet, pf.y_alphabet)
    forward_only = (forward > 0) & (reverse == 0)
    if forward_only.any():
        pairs = [(pf.x_alphabet[i], pf.y_alphabet[j]) for i, j in zip(*np.nonzero(forward_only))]
        raise SupportMismatch(f"P_F > 0 but P_R = 0 at {pairs!r}")
    rev_only = (reverse > 0) & (forward == 0)
    rev_pairs = tuple((pf.x_alphabet[i], pf.y_alphabet[j]) for i, j in zip(*np.nonzero(rev_only)))
    if rev_pairs and not allow_reverse_only:
        raise SupportMismatch(f"P_R > 0 but P_F = 0 at {list(rev_pairs)!r}")
    ii, jj = np.nonzero((forward > 0) & (reverse > 0))
    support = tuple((pf.x_alphabet[i], pf.y_alphabet[j]) for i, j in zip(ii, jj))
    ratio = forward[ii, jj] / reverse[ii, jj]
    return RatioTable(pf.x_alphabet, pf.y_alphabet, support, ratio, rev_pairs,
                      float(reverse[ii, jj].sum()), (ii, jj))


def steady_state_ratio(p: Distribution, q: Distribution, gamma: Distribution,
                       pairs: Iterable[Pair]) -> dict:
    """Closed form ``p(x) gamma(y) / (q(y) gamma(x))`` for each ``(x, y)``.

    Valid for processes built from a common steady state; the channel itself
    drops out.
    """
    return {(x, y): p[x] * gamma[y] / (q[y] * gamma[x]) for x, y in pairs}


def joint_from_mapping(values: Mapping[Pair, float], x_alphabet: Sequence[Label],
                       y_alphabet: Sequence[Label], direction: str) -> JointProcess:
    """Assemble a joint table from a sparse ``{(x, y): mass}`` mapping."""
    x_alphabet, y_alphabet = tuple(x_alphabet), tuple(y_alphabet)
    table = np.zeros((len(x_alphabet), len(y_alphabet)))
    for (x, y), v in values.items():
        table[x_alphabet.index(x), y_alphabet.index(y)] += v
    return JointProcess(x_alphabet, y_alphabet, table, direction)
