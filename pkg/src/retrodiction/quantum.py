"""Quantum realizations of stochastic channels and their retrodiction.

A :class:`QuantumProcess` prepares ``rho_x`` for each label ``x``, sends it
through a Kraus channel ``E`` and measures a POVM ``{Pi_y}``, giving the
classical transition ``phi(y|x) = Tr[Pi_y E(rho_x)]``.  Given weights
``gamma`` invariant for ``phi`` and the reference state
``gamma0 = sum_x gamma(x) rho_x``, the retrodiction is assembled from

* the POVM ``Theta_x = gamma(x) gamma0^{-1/2} rho_x gamma0^{-1/2}``,
* the states ``sigma_y = E(gamma0)^{1/2} Pi_y E(gamma0)^{1/2} / gamma(y)``,
* the Petz map ``E_hat(X) = gamma0^{1/2} E^dag[E(gamma0)^{-1/2} X E(gamma0)^{-1/2}] gamma0^{1/2}``,

and ``Tr[Theta_x E_hat(sigma_y)]`` reproduces the classical Bayes inverse.

Inverse square roots are taken on the support: eigenvalues below
``EIG_CUTOFF`` times the largest one count as zero.

Choi matrices use input-first ordering, ``C[(i, a), (j, b)] = E(|i><j|)[a, b]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidOperator,
    NonUniqueSteadyState,
    NotCPTP,
    NotInvariant,
    SingularReference,
    ZeroOutcomeWeight,
)
from .prob_core import (
    TOL_FIX,
    Distribution,
    StochasticChannel,
    invariance_residual,
    make_channel,
    steady_state,
)

TOL_HERM = 1e-12
TOL_TRACE = 1e-12
TOL_PSD = 1e-12
TOL_POVM = 1e-10
TOL_CPTP = 1e-10
EIG_CUTOFF = 1e-12
MAX_DIM = 64


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(a))


def hermitian(a, tol: float = TOL_HERM) -> np.ndarray:
    """Validate Hermiticity (max entry of ``|A - A^dag|``) and symmetrize."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    dev = np.abs(a - dagger(a)).max()
    if dev > tol:
        raise InvalidOperator(f"matrix is not Hermitian (deviation {dev:.3e})")
    return 0.5 * (a + dagger(a))


def psd_eigh(a: np.ndarray, cutoff: float = EIG_CUTOFF):
    """Eigenpairs of a PSD matrix restricted to its numerical support."""
    w, v = np.linalg.eigh(a)
    top = max(float(w.max()), 0.0)
    keep = w > cutoff * top
    return w[keep], v[:, keep]


def psd_power(a: np.ndarray, power: float, cutoff: float = EIG_CUTOFF) -> np.ndarray:
    """``a**power`` on the support of ``a`` (zero on its kernel)."""
    w, v = psd_eigh(a, cutoff)
    return (v * w ** power) @ dagger(v)


def support_projector(a: np.ndarray, cutoff: float = EIG_CUTOFF) -> np.ndarray:
    _, v = psd_eigh(a, cutoff)
    return v @ dagger(v)


# ---------------------------------------------------------------------------
# states, measurements, channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def density_matrix(a, tol: float = TOL_PSD) -> DensityMatrix:
    """Validate a state: Hermitian, eigenvalues >= -tol (clipped), unit trace."""
    a = hermitian(a)
    if a.shape[0] > MAX_DIM:
        raise DimensionMismatch(f"dimension {a.shape[0]} exceeds the cap {MAX_DIM}")
    w, v = np.linalg.eigh(a)
    if w.min() < -tol:
        raise InvalidOperator(f"state has eigenvalue {w.min():.3e} < 0")
    if w.min() < 0:
        a = (v * np.clip(w, 0.0, None)) @ dagger(v)
    tr = np.trace(a).real
    if abs(tr - 1.0) > TOL_TRACE:
        raise InvalidOperator(f"state has trace {tr!r}")
    return DensityMatrix(a)


def pure_state(vector) -> DensityMatrix:
    v = np.asarray(vector, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return density_matrix(np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class Povm:
    elements: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(_frozen(e) for e in self.elements))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def total(self) -> np.ndarray:
        return sum(self.elements)

    def __getitem__(self, label) -> np.ndarray:
        return self.elements[self.labels.index(label)]


def povm(elements: Sequence, labels: Optional[Sequence] = None,
         identity: Optional[np.ndarray] = None, tol: float = TOL_POVM) -> Povm:
    """Validate POVM elements: each PSD, summing to ``identity`` (default I)."""
    elements = [hermitian(e) for e in elements]
    if not elements:
        raise DimensionMismatch("a POVM needs at least one element")
    d = elements[0].shape[0]
    if any(e.shape != (d, d) for e in elements):
        raise DimensionMismatch("POVM elements differ in dimension")
    for k, e in enumerate(elements):
        lo = np.linalg.eigvalsh(e).min()
        if lo < -TOL_PSD:
            raise InvalidOperator(f"POVM element {k} has eigenvalue {lo:.3e} < 0")
    target = np.eye(d) if identity is None else identity
    dev = np.abs(sum(elements) - target).max()
    if dev > tol:
        raise InvalidOperator(f"POVM elements do not sum to the identity (deviation {dev:.3e})")
    labels = tuple(range(len(elements))) if labels is None else tuple(labels)
    if len(labels) != len(elements):
        raise DimensionMismatch("one label per POVM element is required")
    return Povm(tuple(elements), labels)


def basis_povm(basis: np.ndarray, labels: Optional[Sequence] = None) -> Povm:
    """Rank-one projective measurement on the columns of a unitary."""
    basis = np.asarray(basis, dtype=complex)
    return povm([np.outer(basis[:, k], basis[:, k].conj()) for k in range(basis.shape[1])],
                labels)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """Linear map ``X -> sum_k K X K^dag`` with ``d_out x d_in`` operators.

    ``domain`` optionally records the input subspace (as a projector) on
    which the map is trace preserving; ``None`` means everywhere.
    """

    operators: tuple
    domain: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        ops = tuple(_frozen(np.atleast_2d(k)) for k in self.operators)
        if not ops:
            raise DimensionMismatch("a channel needs at least one Kraus operator")
        if any(k.shape != ops[0].shape for k in ops):
            raise DimensionMismatch("Kraus operators differ in shape")
        object.__setattr__(self, "operators", ops)
        if self.domain is not None:
            object.__setattr__(self, "domain", _frozen(self.domain))

    @property
    def d_in(self) -> int:
        return self.operators[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.operators[0].shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.d_in, self.d_in):
            raise DimensionMismatch(f"operator of shape {x.shape} fed to a map on dimension {self.d_in}")
        return sum(k @ x @ dagger(k) for k in self.operators)


def choi_matrix(channel: KrausChannel) -> np.ndarray:
    vecs = [k.T.reshape(-1) for k in channel.operators]
    return sum(np.outer(v, v.conj()) for v in vecs)


def kraus_from_choi(choi: np.ndarray, d_in: int, d_out: int,
                    tol: float = TOL_CPTP) -> list:
    """Kraus operators from a PSD Choi matrix; eigenvalues in ``[-tol, 0)`` are clipped."""
    w, v = np.linalg.eigh(hermitian(choi, tol=tol))
    if w.min() < -tol:
        raise NotCPTP(f"Choi matrix has eigenvalue {w.min():.3e}; map is not completely positive")
    top = max(float(w.max()), 0.0)
    ops = [np.sqrt(lam) * v[:, k].reshape(d_in, d_out).T
           for k, lam in enumerate(w) if lam > EIG_CUTOFF * top]
    return ops or [np.zeros((d_out, d_in), dtype=complex)]


def choi_min_eigenvalue(channel: KrausChannel) -> float:
    return float(np.linalg.eigvalsh(choi_matrix(channel)).min())


def trace_preservation_residual(channel: KrausChannel,
                                projector: Optional[np.ndarray] = None) -> float:
    """Max entry of ``|sum_k K^dag K - P|`` with ``P`` the channel domain (or I)."""
    if projector is None:
        projector = channel.domain if channel.domain is not None else np.eye(channel.d_in)
    gram = sum(dagger(k) @ k for k in channel.operators)
    return float(np.abs(gram - projector).max())


def kraus_channel(operators: Sequence, tol: float = TOL_CPTP) -> KrausChannel:
    """Build a channel and check it is CPTP within ``tol``."""
    ch = KrausChannel(tuple(np.asarray(k, dtype=complex) for k in operators))
    if max(ch.d_in, ch.d_out) > MAX_DIM:
        raise DimensionMismatch(f"dimension exceeds the cap {MAX_DIM}")
    res = trace_preservation_residual(ch)
    if res > tol:
        raise NotCPTP(f"Kraus operators are not trace preserving (residual {res:.3e})")
    if choi_min_eigenvalue(ch) < -tol:
        raise NotCPTP("Choi matrix is not positive semidefinite")
    return ch


def unitary_channel(u: np.ndarray) -> KrausChannel:
    return kraus_channel([u])


def amplitude_damping(eta: float) -> KrausChannel:
    """Qubit decay ``|1> -> |0>`` with probability ``eta``."""
    return kraus_channel([np.array([[1, 0], [0, np.sqrt(1 - eta)]]),
                          np.array([[0, np.sqrt(eta)], [0, 0]])])


def depolarizing(d: int, p: float = 1.0) -> KrausChannel:
    """``rho -> (1 - p) rho + p Tr[rho] I/d`` in Kraus form (Weyl operators)."""
    omega = np.exp(2j * np.pi / d)
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(omega ** np.arange(d))
    weyl = [np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b)
            for a in range(d) for b in range(d)]
    ops = [np.sqrt(1 - p + p / d ** 2) * weyl[0]]
    ops += [np.sqrt(p) / d * w for w in weyl[1:]]
    return kraus_channel(ops)


def apply_channel(channel: KrausChannel, rho: Union[DensityMatrix, np.ndarray]) -> DensityMatrix:
    """``sum_k K rho K^dag`` as a validated state."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if mat.shape != (channel.d_in, channel.d_in):
        raise DimensionMismatch(f"state of dimension {mat.shape[0]} fed to a channel on {channel.d_in}")
    return density_matrix(channel(mat))


def adjoint_channel(channel: KrausChannel) -> KrausChannel:
    """Trace dual ``X -> sum_k K^dag X K``; unital rather than trace preserving."""
    return KrausChannel(tuple(dagger(k) for k in channel.operators))


def petz_reverse(channel: KrausChannel, gamma0: Union[DensityMatrix, np.ndarray],
                 tol: float = TOL_CPTP) -> KrausChannel:
    """Petz recovery map of ``channel`` with respect to ``gamma0``.

    The map has Kraus operators ``gamma0^{1/2} K^dag E(gamma0)^{-1/2}``; it is
    materialized as a Choi matrix, checked for positivity and refactored.
    It is trace preserving on the support of ``E(gamma0)``, recorded as the
    returned channel's ``domain``.
    """
    g0 = gamma0.matrix if isinstance(gamma0, DensityMatrix) else hermitian(gamma0)
    if g0.shape != (channel.d_in, channel.d_in):
        raise DimensionMismatch("reference state does not match the channel input")
    if psd_eigh(g0)[0].size == 0:
        raise SingularReference("reference state is zero")
    image = channel(g0)
    if psd_eigh(image)[0].size == 0:
        raise SingularReference("channel output of the reference state is zero")
    root = psd_power(g0, 0.5)
    inv_root_image = psd_power(image, -0.5)
    raw = KrausChannel(tuple(root @ dagger(k) @ inv_root_image for k in channel.operators))
    choi = choi_matrix(raw)
    lo = float(np.linalg.eigvalsh(choi).min())
    if lo < -tol:
        raise NotCPTP(f"Petz map Choi eigenvalue {lo:.3e} < -{tol:.0e}")
    domain = support_projector(image)
    ops = kraus_from_choi(choi, raw.d_in, raw.d_out, tol=tol)
    reverse = KrausChannel(tuple(ops), domain)
    res = trace_preservation_residual(reverse)
    if res > tol:
        raise NotCPTP(f"Petz map trace-preservation residual {res:.3e} > {tol:.0e}")
    return reverse


# ---------------------------------------------------------------------------
# processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuantumProcess:
    """Preparations, channel and measurement sharing one label alphabet."""

    preparations: tuple
    channel: KrausChannel
    measurement: Povm
    gamma: Distribution

    @property
    def labels(self) -> tuple:
        return self.gamma.alphabet

    @property
    def gamma0(self) -> np.ndarray:
        return sum(g * rho.matrix for g, rho in zip(self.gamma.mass, self.preparations))


def _transition_table(preparations, channel, measurement) -> np.ndarray:
    outs = [channel(rho.matrix) for rho in preparations]
    return np.array([[np.trace(pi @ out).real for pi in measurement.elements] for out in outs])


def quantum_process(preparations: Sequence, channel: KrausChannel, measurement: Povm,
                    gamma: Optional[Distribution] = None, tol: float = TOL_FIX) -> QuantumProcess:
    """Assemble and validate a process; ``gamma`` defaults to the unique steady state."""
    preps = tuple(p if isinstance(p, DensityMatrix) else density_matrix(p) for p in preparations)
    labels = measurement.labels
    if len(preps) != len(labels):
        raise DimensionMismatch(f"{len(preps)} preparations but {len(labels)} outcomes")
    if any(p.dim != channel.d_in for p in preps):
        raise DimensionMismatch("preparation dimension differs from channel input")
    if measurement.dim != channel.d_out:
        raise DimensionMismatch("measurement dimension differs from channel output")
    phi = make_channel(_transition_table(preps, channel, measurement), labels, labels)
    if gamma is None:
        ss = steady_state(phi, tol=tol)
        if not ss.unique:
            raise NonUniqueSteadyState("induced transition has several steady states; pass gamma")
        gamma = ss.gamma
    elif gamma.alphabet != labels:
        raise DimensionMismatch("gamma alphabet differs from the outcome labels")
    res = invariance_residual(phi, gamma)
    if res > tol:
        raise NotInvariant(f"gamma is not invariant for the induced transition ({res:.3e})")
    return QuantumProcess(preps, channel, measurement, gamma)


def induced_transition(qp: QuantumProcess) -> StochasticChannel:
    """``phi(y|x) = Tr[Pi_y E(rho_x)]``."""
    return make_channel(_transition_table(qp.preparations, qp.channel, qp.measurement),
                        qp.labels, qp.labels)


def retrodictive_povm(qp: QuantumProcess) -> Povm:
    """``Theta_x = gamma(x) gamma0^{-1/2} rho_x gamma0^{-1/2}``; sums to the support projector of gamma0."""
    g0 = qp.gamma0
    if psd_eigh(g0)[0].size == 0:
        raise SingularReference("reference state gamma0 is zero")
    inv_root = psd_power(g0, -0.5)
    elements = [g * inv_root @ rho.matrix @ inv_root
                for g, rho in zip(qp.gamma.mass, qp.preparations)]
    return povm(elements, qp.labels, identity=support_projector(g0))


def retrodictive_states(qp: QuantumProcess, tol: float = TOL_FIX) -> dict:
    """``sigma_y`` for every outcome in the support of gamma, keyed by label.

    The normalization ``Tr[Pi_y E(gamma0)]`` must agree with the classical
    ``gamma(y)`` within ``tol``.
    """
    image = qp.channel(qp.gamma0)
    root = psd_power(image, 0.5)
    states = {}
    for y, pi, g in zip(qp.labels, qp.measurement.elements, qp.gamma.mass):
        if g <= 0:
            continue
        weight = np.trace(pi @ image).real
        if abs(weight - g) > tol:
            raise NotInvariant(f"Tr[Pi_y E(gamma0)] = {weight!r} but gamma({y!r}) = {g!r}")
        if weight <= 0:
            raise ZeroOutcomeWeight(f"outcome {y!r} has zero weight under E(gamma0)")
        states[y] = density_matrix(root @ pi @ root / weight)
    return states


def quantum_retrodicted_transition(qp: QuantumProcess) -> StochasticChannel:
    """``phi_hat(x|y) = Tr[Theta_x E_hat(sigma_y)]`` on the support of gamma."""
    theta = retrodictive_povm(qp)
    sigma = retrodictive_states(qp)
    reverse = petz_reverse(qp.channel, qp.gamma0)
    support = tuple(sigma)
    table = [[np.trace(theta[x] @ reverse(sigma[y].matrix)).real for x in support]
             for y in support]
    return make_channel(table, support, support, tol=TOL_POVM)


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def haar_unitary(d: int, seed=None) -> np.ndarray:
    """Haar-random ``d x d`` unitary: QR of a complex Ginibre matrix with R's diagonal phases removed."""
    if d < 1:
        raise ValueError("dimension must be positive")
    rng = _rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    phases = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * phases


def random_isometry(d_in: int, d_out: int, seed=None) -> np.ndarray:
    return haar_unitary(d_out, seed)[:, :d_in]


def random_kraus(d_in: int, d_out: int, n_kraus: int, seed=None) -> KrausChannel:
    """Random channel from a truncated Haar isometry (Stinespring dilation)."""
    if d_out * n_kraus < d_in:
        raise DimensionMismatch("environment too small for an isometry")
    v = random_isometry(d_in, d_out * n_kraus, seed)
    return kraus_channel([v[k * d_out:(k + 1) * d_out] for k in range(n_kraus)])


def random_density_matrix(d: int, rank: Optional[int] = None, seed=None) -> DensityMatrix:
    rng = _rng(seed)
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ dagger(g)
    return density_matrix(rho / np.trace(rho).real)


def random_povm(d: int, n_outcomes: int, rank: int = 1, seed=None,
                labels: Optional[Sequence] = None) -> Povm:
    """Random POVM ``Pi_y = V_y^dag V_y`` from blocks of a Haar isometry."""
    if n_outcomes * rank < d:
        raise DimensionMismatch("too few outcomes to resolve the identity")
    v = random_isometry(d, n_outcomes * rank, seed)
    blocks = [v[k * rank:(k + 1) * rank] for k in range(n_outcomes)]
    return povm([dagger(b) @ b for b in blocks], labels)
