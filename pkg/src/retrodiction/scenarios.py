"""Worked thermodynamic scenarios built on Bayesian reversal.

Every constructor returns a :class:`ScenarioRun`: the forward and reverse
joint processes, their ratio table, physical per-pair labels and the closed
form each scenario predicts for ``ln r``.  Units: ``k_B = 1``, so entropies
are dimensionless and temperature enters only through ``beta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DimensionMismatch,
    EmptyShell,
    NonUniqueSteadyState,
    NotBijective,
    NotInvariant,
    SingularSteadyState,
)
from .fluctuation import MERGE_TOL, cluster_values
from .prob_core import (
    FORWARD,
    REVERSE,
    TOL_FIX,
    Distribution,
    JointProcess,
    RatioTable,
    StochasticChannel,
    bayes_reverse_channel,
    forward_process,
    forward_reverse_ratio,
    invariance_residual,
    joint_from_mapping,
    make_channel,
    reverse_process,
    steady_state,
    uniform,
    validate_distribution,
)
from .quantum import (
    KrausChannel,
    _transition_table,
    QuantumProcess,
    basis_povm,
    haar_unitary,
    induced_transition,
    kraus_channel,
    pure_state,
    quantum_process,
    quantum_retrodicted_transition,
    random_density_matrix,
    random_kraus,
    random_povm,
    unitary_channel,
)


@dataclass(frozen=True)
class ThermalSpec:
    """Gibbs distribution ``exp(-beta E) / Z`` over labelled energy levels."""

    energies: tuple
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta!r}")

    @property
    def log_partition(self) -> float:
        return float(logsumexp(-self.beta * np.array(self.energies)))

    @property
    def free_energy(self) -> float:
        return -self.log_partition / self.beta

    def distribution(self, alphabet: Optional[Sequence] = None) -> Distribution:
        logp = -self.beta * np.array(self.energies) - self.log_partition
        return validate_distribution(np.exp(logp), alphabet)


def thermal(energies: Sequence[float], beta: float, alphabet=None) -> Distribution:
    return ThermalSpec(tuple(energies), beta).distribution(alphabet)


@dataclass(frozen=True, eq=False)
class ScenarioRun:
    """Forward/reverse pair plus what the scenario says about it.

    ``expected_log_ratio`` holds the closed-form ``ln r`` per support pair
    (``beta (W - dF)``, ``Sigma``, ``dS`` ...), to be compared with the
    log-family omega.  ``checks`` holds scenario-specific residuals.
    """

    kind: str
    forward: JointProcess
    reverse: JointProcess
    ratio: RatioTable
    forward_channel: StochasticChannel
    reverse_channel: StochasticChannel
    gamma: Optional[Distribution] = None
    labels: dict = field(default_factory=dict)
    expected_log_ratio: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def log_ratio_residual(self) -> float:
        """Max ``|ln r - expected|`` over the support."""
        r = self.ratio.as_dict()
        return max((abs(math.log(r[pair]) - v) for pair, v in self.expected_log_ratio.items()
                    if pair in r), default=0.0)


def _pairs(x_alphabet, y_alphabet):
    return [(x, y) for x in x_alphabet for y in y_alphabet]


def classical_scenario(channel: StochasticChannel, p: Distribution, q: Distribution,
                       gamma: Optional[Distribution] = None, *,
                       allow_reverse_only: bool = False, kind: str = "classical") -> ScenarioRun:
    """Generic run: steady state, Bayes reverse, both processes, ratio.

    ``gamma`` defaults to the steady state, which must then be unique.
    """
    if gamma is None:
        ss = steady_state(channel)
        if not ss.unique:
            raise NonUniqueSteadyState("channel has several steady states; pass gamma explicitly")
        gamma = ss.gamma
    reverse_channel = bayes_reverse_channel(channel, gamma)
    pf = forward_process(p, channel)
    pr = reverse_process(q, reverse_channel)
    ratio = forward_reverse_ratio(pf, pr, allow_reverse_only=allow_reverse_only)
    expected = {(x, y): math.log(p[x]) + math.log(gamma[y]) - math.log(q[y]) - math.log(gamma[x])
                for x, y in ratio.support}
    closed = {pair: math.exp(v) for pair, v in expected.items()}
    dev = max((abs(r / closed[pair] - 1.0) for pair, r in ratio.as_dict().items()), default=0.0)
    return ScenarioRun(kind, pf, pr, ratio, channel, reverse_channel, gamma,
                       expected_log_ratio=expected,
                       checks={"closed_form_ratio_relative": dev,
                               "invariance_residual": invariance_residual(channel, gamma)})


# ---------------------------------------------------------------------------
# closed driven quantum system
# ---------------------------------------------------------------------------

def _basis(basis, d):
    if basis is None:
        return np.eye(d, dtype=complex)
    basis = np.asarray(basis, dtype=complex)
    if basis.shape != (d, d):
        raise DimensionMismatch(f"basis must be {d}x{d}")
    return basis


def tasaki_scenario(eps: Sequence[float], eta: Sequence[float], unitary: np.ndarray,
                    beta: float, eps_basis=None, eta_basis=None) -> ScenarioRun:
    """Two energy measurements around a unitary drive.

    ``phi(y|x) = |<eta_y| U |eps_x>|^2`` is doubly stochastic, so the uniform
    distribution is invariant and the reverse transition is the transpose.
    Priors are Gibbs states of both Hamiltonians at the same ``beta``, and
    ``ln r = beta (W - dF)`` with ``W = eta_y - eps_x``.
    """
    u = np.asarray(unitary, dtype=complex)
    d = len(eps)
    if len(eta) != d or u.shape != (d, d):
        raise DimensionMismatch("eps, eta and the unitary must share one dimension")
    eb, hb = _basis(eps_basis, d), _basis(eta_basis, d)
    labels = tuple(range(d))
    gamma = uniform(labels)
    qp = quantum_process([pure_state(eb[:, x]) for x in range(d)], unitary_channel(u),
                         basis_povm(hb, labels), gamma=gamma)
    phi = induced_transition(qp)
    phi_hat = bayes_reverse_channel(phi, gamma)
    initial, final = ThermalSpec(tuple(eps), beta), ThermalSpec(tuple(eta), beta)
    p, q = initial.distribution(labels), final.distribution(labels)
    pf, pr = forward_process(p, phi), reverse_process(q, phi_hat)
    ratio = forward_reverse_ratio(pf, pr)
    delta_f = final.free_energy - initial.free_energy
    work = {(x, y): eta[y] - eps[x] for x, y in _pairs(labels, labels)}
    expected = {pair: beta * (work[pair] - delta_f) for pair in ratio.support}
    return ScenarioRun(
        "tasaki", pf, pr, ratio, phi, phi_hat, gamma,
        labels={"W": work},
        expected_log_ratio=expected,
        metadata={"beta": beta, "delta_F": delta_f},
        checks={"column_sum_residual": float(np.abs(phi.column_sums() - 1).max()),
                "reverse_minus_transpose": float(np.abs(phi_hat.table - phi.table.T).max())})


# ---------------------------------------------------------------------------
# deterministic (Hamiltonian) dynamics
# ---------------------------------------------------------------------------

def _check_permutation(perm: Sequence[int], n: Optional[int] = None) -> list:
    perm = [int(k) for k in perm]
    if n is not None and len(perm) != n:
        raise NotBijective(f"permutation has {len(perm)} entries for {n} states")
    if sorted(perm) != list(range(len(perm))):
        raise NotBijective(f"{perm!r} is not a permutation of 0..{len(perm) - 1}")
    return perm


def permutation_channel(perm: Sequence[int], labels: Optional[Sequence] = None) -> StochasticChannel:
    perm = _check_permutation(perm)
    table = np.zeros((len(perm), len(perm)))
    table[np.arange(len(perm)), perm] = 1.0
    return make_channel(table, labels, labels)


def _shell(energies, level, tol):
    members = [k for k, e in enumerate(energies) if abs(e - level) <= tol]
    if not members:
        raise EmptyShell(f"no state has energy {level!r}")
    return members


def deterministic_hamiltonian_scenario(perm: Sequence[int], energies: Sequence[float], *,
                                       prior: str = "thermal", beta: Optional[float] = None,
                                       final_energies: Optional[Sequence[float]] = None,
                                       initial_shell: Optional[float] = None,
                                       final_shell: Optional[float] = None,
                                       shell_tol: float = 1e-12) -> ScenarioRun:
    """Bijective dynamics ``x -> perm[x]`` with thermal or microcanonical priors.

    Thermal priors use ``energies`` at time 0 and ``final_energies`` (default:
    the same Hamiltonian) at the end; then
    ``ln r(x, x') = beta (H_1(x') - H_0(x)) - beta dF``, which for a single
    Hamiltonian is ``beta E(x, x')`` with ``E = H_0(x') - H_0(x)``.
    Microcanonical priors are uniform on the shells ``initial_shell`` and
    ``final_shell``; then ``r = N(E') / N(E)`` on every support pair.
    Reverse-only pairs (larger final shell) are allowed in that case.
    """
    n = len(energies)
    perm = _check_permutation(perm, n)
    labels = tuple(range(n))
    phi = permutation_channel(perm, labels)
    gamma = uniform(labels)
    phi_hat = bayes_reverse_channel(phi, gamma)
    h0 = [float(e) for e in energies]
    h1 = h0 if final_energies is None else [float(e) for e in final_energies]
    if len(h1) != n:
        raise DimensionMismatch("final energies must match the number of states")
    moves = [(x, perm[x]) for x in labels]

    if prior == "thermal":
        if beta is None:
            raise ValueError("thermal priors need beta")
        initial, final = ThermalSpec(tuple(h0), beta), ThermalSpec(tuple(h1), beta)
        p, q = initial.distribution(labels), final.distribution(labels)
        delta_f = final.free_energy - initial.free_energy
        pf, pr = forward_process(p, phi), reverse_process(q, phi_hat)
        ratio = forward_reverse_ratio(pf, pr)
        energy_change = {(x, y): h1[y] - h0[x] for x, y in moves}
        expected = {pair: beta * (energy_change[pair] - delta_f) for pair in ratio.support}
        return ScenarioRun("deterministic-thermal", pf, pr, ratio, phi, phi_hat, gamma,
                           labels={"E": energy_change}, expected_log_ratio=expected,
                           metadata={"beta": beta, "delta_F": delta_f})

    if prior == "microcanonical":
        if initial_shell is None or final_shell is None:
            raise ValueError("microcanonical priors need initial_shell and final_shell")
        start = _shell(h0, initial_shell, shell_tol)
        end = _shell(h1, final_shell, shell_tol)
        p_mass, q_mass = np.zeros(n), np.zeros(n)
        p_mass[start] = 1.0 / len(start)
        q_mass[end] = 1.0 / len(end)
        p = validate_distribution(p_mass, labels)
        q = validate_distribution(q_mass, labels)
        pf, pr = forward_process(p, phi), reverse_process(q, phi_hat)
        ratio = forward_reverse_ratio(pf, pr, allow_reverse_only=True)
        entropy = math.log(len(end)) - math.log(len(start))
        d_s = {pair: entropy for pair in ratio.support}
        return ScenarioRun("deterministic-microcanonical", pf, pr, ratio, phi, phi_hat, gamma,
                           labels={"dS": d_s}, expected_log_ratio=dict(d_s),
                           metadata={"N_initial": len(start), "N_final": len(end),
                                     "delta_S": entropy})
    raise ValueError(f"unknown prior {prior!r}")


# ---------------------------------------------------------------------------
# system + heat reservoir, coarse-grained over the reservoir
# ---------------------------------------------------------------------------

def _flatten_perm(perm, n_sys, n_res):
    size = n_sys * n_res
    flat = []
    for entry in perm:
        if isinstance(entry, (tuple, list)):
            x, w = entry
            flat.append(int(x) * n_res + int(w))
        else:
            flat.append(int(entry))
    return _check_permutation(flat, size)


def jarz2000_scenario(perm: Sequence, reservoir_energies: Sequence[float], beta: float,
                      p: Distribution, q: Distribution,
                      merge_tol: float = MERGE_TOL) -> ScenarioRun:
    """Deterministic system-reservoir dynamics seen through the system only.

    ``perm`` maps joint state ``(x, w)`` (flat index ``x * |W| + w``, or an
    explicit ``(x', w')`` pair) to its image.  With Gibbs reservoir priors the
    entropy ``dS = beta (E_w' - E_w)`` becomes an output of the coarse-grained
    forward channel ``phi(x', dS | x)``.  The hybrid reverse
    ``phi_hat(x, -dS | x')`` is summed from the Bayes inverse of the full
    joint dynamics, so the identity
    ``phi(x', dS | x) = exp(dS) phi_hat(x, -dS | x')`` is a genuine check;
    its worst violation is ``checks["hybrid_identity"]``.

    Joint processes use ``y = (x', dS)``; the reverse table at that pair is
    ``q(x') phi_hat(x, -dS | x')``.
    """
    sys_labels = p.alphabet
    if q.alphabet != sys_labels:
        raise DimensionMismatch("p and q must share the system alphabet")
    n_sys, n_res = len(sys_labels), len(reservoir_energies)
    flat = _flatten_perm(perm, n_sys, n_res)
    joint_labels = tuple((x, w) for x in range(n_sys) for w in range(n_res))
    dynamics = permutation_channel(flat, joint_labels)
    dynamics_hat = bayes_reverse_channel(dynamics, uniform(joint_labels))

    bath = ThermalSpec(tuple(reservoir_energies), beta)
    res_prior = bath.distribution().mass
    e_w = np.array(bath.energies)
    entropy = beta * (e_w[None, :] - e_w[:, None])          # [w, w']
    levels, _ = cluster_values(entropy.ravel(), np.ones(entropy.size), merge_tol)
    level_of = np.abs(entropy[..., None] - levels).argmin(axis=-1)
    n_lev = len(levels)

    fwd = np.zeros((n_sys, n_sys, n_lev))                   # [x, x', k]
    rev = np.zeros((n_sys, n_sys, n_lev))                   # [x', x, k]
    for x in range(n_sys):
        for w in range(n_res):
            for x2 in range(n_sys):
                for w2 in range(n_res):
                    k = level_of[w, w2]
                    fwd[x, x2, k] += dynamics.table[x * n_res + w, x2 * n_res + w2] * res_prior[w]
                    rev[x2, x, k] += dynamics_hat.table[x2 * n_res + w2, x * n_res + w] * res_prior[w2]

    s_labels = [float(s) for s in levels]
    fwd_out = tuple((sys_labels[x2], s) for x2 in range(n_sys) for s in s_labels)
    rev_out = tuple((sys_labels[x], -s) for x in range(n_sys) for s in s_labels)
    phi = make_channel(fwd.reshape(n_sys, -1), sys_labels, fwd_out)
    phi_hat = make_channel(rev.reshape(n_sys, -1), sys_labels, rev_out)

    identity = np.abs(fwd - np.exp(levels)[None, None, :] * np.transpose(rev, (1, 0, 2)))
    marginal = (dynamics.table.reshape(n_sys, n_res, n_sys, n_res)
                * res_prior[None, :, None, None]).sum(axis=(1, 3))
    marginal_dev = float(np.abs(fwd.sum(axis=2) - marginal).max())

    forward_mass, reverse_mass = {}, {}
    for x in range(n_sys):
        for x2 in range(n_sys):
            for k, s in enumerate(s_labels):
                pair = (sys_labels[x], (sys_labels[x2], s))
                if fwd[x, x2, k] > 0:
                    forward_mass[pair] = p.mass[x] * fwd[x, x2, k]
                if rev[x2, x, k] > 0:
                    reverse_mass[pair] = q.mass[x2] * rev[x2, x, k]
    pf = joint_from_mapping(forward_mass, sys_labels, fwd_out, FORWARD)
    pr = joint_from_mapping(reverse_mass, sys_labels, fwd_out, REVERSE)
    ratio = forward_reverse_ratio(pf, pr)
    d_s = {(x, y): y[1] for x, y in ratio.support}
    expected = {(x, y): math.log(p[x]) - math.log(q[y[0]]) + y[1] for x, y in ratio.support}
    return ScenarioRun(
        "jarz2000", pf, pr, ratio, phi, phi_hat, None,
        labels={"dS": d_s}, expected_log_ratio=expected,
        metadata={"beta": beta, "entropy_levels": s_labels},
        checks={"hybrid_identity": float(identity.max()), "system_marginal": marginal_dev})


# ---------------------------------------------------------------------------
# work step + relaxation step
# ---------------------------------------------------------------------------

def thermalization_channel(gamma: Distribution, lam: float) -> StochasticChannel:
    """``(1 - lam) delta_xy + lam gamma(y)``; leaves ``gamma`` invariant."""
    if not 0 <= lam <= 1:
        raise ValueError("lam must lie in [0, 1]")
    n = len(gamma)
    table = (1 - lam) * np.eye(n) + lam * np.tile(gamma.mass, (n, 1))
    return make_channel(table, gamma.alphabet, gamma.alphabet)


def crooks_work_relaxation_scenario(e_pre: Sequence[float], e_post: Sequence[float],
                                    relax: Union[StochasticChannel, float], beta: float,
                                    tol: float = TOL_FIX) -> ScenarioRun:
    """Deterministic work step ``E_x -> E'_x`` then a relaxation ``phi(y|x)``.

    ``relax`` must leave the Gibbs state of ``E'`` invariant (a float is
    read as the ``lam`` of :func:`thermalization_channel`).  Then
    ``ln r = beta (W - dF)`` with ``W = E'_x - E_x``.
    """
    n = len(e_pre)
    if len(e_post) != n:
        raise DimensionMismatch("pre- and post-drive energies differ in length")
    labels = tuple(range(n))
    before, after = ThermalSpec(tuple(e_pre), beta), ThermalSpec(tuple(e_post), beta)
    gamma = after.distribution(labels)
    if not isinstance(relax, StochasticChannel):
        relax = thermalization_channel(gamma, float(relax))
    if relax.input_alphabet != labels or relax.output_alphabet != labels:
        raise DimensionMismatch("relaxation channel must act on the same states")
    res = invariance_residual(relax, gamma)
    if res > tol:
        raise NotInvariant(f"relaxation does not preserve the thermal state (residual {res:.3e})")
    phi_hat = bayes_reverse_channel(relax, gamma, tol=tol)
    e_post_arr = np.array(after.energies)
    closed = np.exp(beta * (e_post_arr[:, None] - e_post_arr[None, :])) * relax.table.T
    p, q = before.distribution(labels), gamma
    pf, pr = forward_process(p, relax), reverse_process(q, phi_hat)
    ratio = forward_reverse_ratio(pf, pr)
    delta_f = after.free_energy - before.free_energy
    work = {(x, y): e_post[x] - e_pre[x] for x, y in _pairs(labels, labels)}
    expected = {pair: beta * (work[pair] - delta_f) for pair in ratio.support}
    return ScenarioRun(
        "crooks-relaxation", pf, pr, ratio, relax, phi_hat, gamma,
        labels={"W": work}, expected_log_ratio=expected,
        metadata={"beta": beta, "delta_F": delta_f},
        checks={"reverse_closed_form": float(np.abs(phi_hat.table - closed).max())})


# ---------------------------------------------------------------------------
# two energy measurements around an arbitrary channel
# ---------------------------------------------------------------------------

def general_two_measurement_scenario(channel: Union[KrausChannel, Sequence[np.ndarray]],
                                     eps: Sequence[float], eta: Sequence[float], beta: float,
                                     eps_basis=None, eta_basis=None,
                                     gamma: Optional[Distribution] = None) -> ScenarioRun:
    """Energy measurement, CPTP evolution, energy measurement.

    The steady state ``gamma`` of the induced transition defines the
    nonequilibrium potential ``Phi_x = -ln(gamma(x)) / beta`` and the
    entropy production ``Sigma = beta (dE - dPhi - dF)``, which is exactly
    ``ln r``.  Also reported: the efficacy ``sum_{x,y} phi(y|x) q(y)`` of the
    unnormalized transpose "reverse", and the largest deviation between the
    classical and the quantum (Petz) retrodiction.
    """
    if not isinstance(channel, KrausChannel):
        channel = kraus_channel(channel)
    d = channel.d_in
    if channel.d_out != d or len(eps) != d or len(eta) != d:
        raise DimensionMismatch("eps, eta and the channel must share one dimension")
    eb, hb = _basis(eps_basis, d), _basis(eta_basis, d)
    labels = tuple(range(d))
    preps = [pure_state(eb[:, x]) for x in range(d)]
    meas = basis_povm(hb, labels)
    if gamma is None:
        ss = steady_state(make_channel(_transition_table(preps, channel, meas), labels, labels))
        if not ss.unique:
            raise NonUniqueSteadyState("induced transition has several steady states; pass gamma")
        gamma = ss.gamma
    if np.any(gamma.mass <= 0):
        raise SingularSteadyState(f"steady state vanishes on {[x for x in labels if gamma[x] <= 0]!r}")
    qp = quantum_process(preps, channel, meas, gamma=gamma)
    phi = induced_transition(qp)
    phi_hat = bayes_reverse_channel(phi, gamma)
    quantum_dev = float(np.abs(quantum_retrodicted_transition(qp).table - phi_hat.table).max())

    initial, final = ThermalSpec(tuple(eps), beta), ThermalSpec(tuple(eta), beta)
    p, q = initial.distribution(labels), final.distribution(labels)
    pf, pr = forward_process(p, phi), reverse_process(q, phi_hat)
    ratio = forward_reverse_ratio(pf, pr)
    delta_f = final.free_energy - initial.free_energy
    potential = {x: -math.log(gamma[x]) / beta for x in labels}
    pairs = _pairs(labels, labels)
    d_e = {(x, y): eta[y] - eps[x] for x, y in pairs}
    d_phi = {(x, y): potential[y] - potential[x] for x, y in pairs}
    sigma = {pair: beta * (d_e[pair] - d_phi[pair] - delta_f) for pair in pairs}
    efficacy = math.fsum(phi.table[x, y] * q.mass[y] for x, y in pairs)
    return ScenarioRun(
        "two-measurement", pf, pr, ratio, phi, phi_hat, gamma,
        labels={"W": d_e, "dPhi": d_phi, "Sigma": sigma},
        expected_log_ratio={pair: sigma[pair] for pair in ratio.support},
        metadata={"beta": beta, "delta_F": delta_f, "efficacy": efficacy,
                  "potential": [potential[x] for x in labels]},
        checks={"quantum_classical_deviation": quantum_dev})


def rotated_qubit_basis(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]], dtype=complex)


def amplitude_damping_scenario(eta_damp: float, beta: float, energies=(0.0, 1.0),
                               basis_angle: float = math.pi / 8) -> ScenarioRun:
    """Qubit amplitude damping between two energy measurements.

    Both Hamiltonians share the eigenbasis rotated by ``basis_angle`` from
    the damping basis; at angle zero the excited level is transient and the
    steady state is singular.
    """
    from .quantum import amplitude_damping
    basis = rotated_qubit_basis(basis_angle)
    return general_two_measurement_scenario(amplitude_damping(eta_damp), energies, energies,
                                            beta, basis, basis)


# ---------------------------------------------------------------------------
# quantum process with arbitrary priors
# ---------------------------------------------------------------------------

def quantum_process_scenario(qp: QuantumProcess, p: Distribution, q: Distribution) -> ScenarioRun:
    """Forward from the induced transition, reverse from the quantum retrodiction."""
    phi = induced_transition(qp)
    phi_hat = quantum_retrodicted_transition(qp)
    classical = bayes_reverse_channel(phi, qp.gamma)
    pf, pr = forward_process(p, phi), reverse_process(q, phi_hat)
    ratio = forward_reverse_ratio(pf, pr)
    g = qp.gamma
    expected = {(x, y): math.log(p[x]) + math.log(g[y]) - math.log(q[y]) - math.log(g[x])
                for x, y in ratio.support}
    return ScenarioRun(
        "quantum-process", pf, pr, ratio, phi, phi_hat, g,
        expected_log_ratio=expected,
        checks={"quantum_classical_deviation": float(np.abs(phi_hat.table - classical.table).max())})


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScenarioInputs:
    """Seeded inputs for one scenario constructor; ``run()`` builds the scenario."""

    kind: str
    seed: int
    params: dict
    builder: Callable = field(repr=False)

    def run(self) -> ScenarioRun:
        return self.builder(**self.params)


def _random_distribution(rng, n) -> Distribution:
    w = rng.random(n) + 0.05
    return validate_distribution(w / w.sum())


def random_channel(n: int, rng, sparse: bool = False) -> StochasticChannel:
    """Positive random rows; ``sparse`` zeroes some entries but keeps the cycle ``x -> x+1``."""
    table = rng.random((n, n)) + 1e-3
    if sparse and n > 2:
        mask = rng.random((n, n)) < 0.4
        mask[np.arange(n), (np.arange(n) + 1) % n] = False
        table[mask] = 0.0
    return make_channel(table / table.sum(axis=1, keepdims=True))


def random_doubly_stochastic(n: int, rng, n_perms: int = 4) -> StochasticChannel:
    """Convex mixture of permutation matrices, including the cyclic shift (irreducible)."""
    perms = [np.roll(np.arange(n), 1)] + [rng.permutation(n) for _ in range(n_perms - 1)]
    w = rng.random(n_perms) + 0.1
    w /= w.sum()
    table = np.zeros((n, n))
    for weight, perm in zip(w, perms):
        table[np.arange(n), perm] += weight
    return make_channel(table)


def random_scenario(kind: str, dims, seed: int) -> ScenarioInputs:
    """Reproducible random inputs.

    kinds: ``classical-channel`` (dims = n), ``doubly-stochastic`` (n),
    ``quantum-process`` ((d, n_labels)), ``two-measurement`` (d) and
    ``reservoir`` ((n_system, n_reservoir)).
    """
    rng = np.random.default_rng(seed)
    if kind == "classical-channel":
        n = int(dims)
        channel = random_channel(n, rng, sparse=bool(rng.random() < 0.3))
        params = {"channel": channel, "p": _random_distribution(rng, n),
                  "q": _random_distribution(rng, n)}
        return ScenarioInputs(kind, seed, params, classical_scenario)
    if kind == "doubly-stochastic":
        n = int(dims)
        params = {"channel": random_doubly_stochastic(n, rng), "p": _random_distribution(rng, n),
                  "q": _random_distribution(rng, n)}
        return ScenarioInputs(kind, seed, params, classical_scenario)
    if kind == "quantum-process":
        d, n = dims
        preps = [random_density_matrix(d, rank=int(rng.integers(1, d + 1)), seed=rng)
                 for _ in range(n)]
        channel = random_kraus(d, d, int(rng.integers(1, 4)), seed=rng)
        rank = max(1, -(-d // n))
        meas = random_povm(d, n, rank=rank, seed=rng)
        qp = quantum_process(preps, channel, meas)
        params = {"qp": qp, "p": _random_distribution(rng, n), "q": _random_distribution(rng, n)}
        return ScenarioInputs(kind, seed, params, quantum_process_scenario)
    if kind == "two-measurement":
        d = int(dims)
        params = {"channel": random_kraus(d, d, int(rng.integers(1, 4)), seed=rng),
                  "eps": sorted(rng.uniform(0, 2, d).tolist()),
                  "eta": sorted(rng.uniform(0, 2, d).tolist()),
                  "beta": float(rng.uniform(0.5, 2.0)),
                  "eps_basis": haar_unitary(d, rng), "eta_basis": haar_unitary(d, rng)}
        return ScenarioInputs(kind, seed, params, general_two_measurement_scenario)
    if kind == "reservoir":
        n_sys, n_res = dims
        params = {"perm": rng.permutation(n_sys * n_res).tolist(),
                  "reservoir_energies": rng.uniform(0, 2, n_res).tolist(),
                  "beta": float(rng.uniform(0.5, 2.0)),
                  "p": _random_distribution(rng, n_sys), "q": _random_distribution(rng, n_sys)}
        return ScenarioInputs(kind, seed, params, jarz2000_scenario)
    raise ValueError(f"unknown random scenario kind {kind!r}")
