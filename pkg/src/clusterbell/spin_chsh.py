"""Two-qubit spin algebra: Pauli observables, the singlet, CHSH values and
local hidden variable (LHV) models.

Basis convention: ``|ij> = |i> (x) |j>`` with flat index ``2*i + j``, where
``|0>, |1>`` are the +1/-1 eigenvectors of sigma_z.

The CHSH combination pairs ``a1`` with ``b1 + b2`` and ``a2`` with
``b1 - b2``::

    S = E(a1, b1) + E(a1, b2) + E(a2, b1) - E(a2, b2)

Other sign/pairing conventions are equivalent up to relabelling.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NORM_TOL = 1e-6
POSITIVITY_FLOOR = -1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)

for _m in PAULIS + (IDENTITY2,):
    _m.setflags(write=False)


@dataclass(frozen=True)
class SpinDirection:
    """Unit vector in R^3.

    Inputs within ``tol`` of unit norm are renormalised; anything further off
    raises ``ValueError``.
    """

    components: tuple[float, float, float]
    tol: float = field(default=NORM_TOL, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.components, dtype=float).reshape(-1)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError(f"direction needs 3 finite components, got {self.components!r}")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > self.tol:
            raise ValueError(f"direction {tuple(v)} has norm {norm:.9g}, not 1 within {self.tol:g}")
        v = v / norm
        object.__setattr__(self, "components", (float(v[0]), float(v[1]), float(v[2])))

    @classmethod
    def of(cls, x: float, y: float, z: float, tol: float = NORM_TOL) -> "SpinDirection":
        return cls((x, y, z), tol=tol)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.components)

    def dot(self, other: "SpinDirection") -> float:
        return float(self.vector @ other.vector)

    def rotated(self, rotation: np.ndarray) -> "SpinDirection":
        return SpinDirection(tuple(np.asarray(rotation) @ self.vector), tol=1e-9)


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    """4x4 density matrix; Hermitian, unit trace, positive semidefinite."""

    matrix: np.ndarray

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError(f"two-qubit state must be 4x4, got shape {rho.shape}")
        if not np.allclose(rho, rho.conj().T, rtol=0.0, atol=1e-12):
            raise ValueError("state is not Hermitian")
        tr = np.trace(rho)
        if abs(tr - 1.0) > 1e-12:
            raise ValueError(f"state trace is {tr}, expected 1")
        lowest = float(np.linalg.eigvalsh(rho)[0])
        if lowest < POSITIVITY_FLOOR:
            raise ValueError(f"state has negative eigenvalue {lowest:.3g}")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    def expectation(self, observable: np.ndarray) -> complex:
        return complex(np.trace(self.matrix @ observable))


@dataclass(frozen=True)
class ChshSetting:
    a1: SpinDirection
    a2: SpinDirection
    b1: SpinDirection
    b2: SpinDirection

    def pairs(self) -> list[tuple[SpinDirection, SpinDirection]]:
        """Direction pairs in CHSH order (a1b1, a1b2, a2b1, a2b2)."""
        return [(self.a1, self.b1), (self.a1, self.b2), (self.a2, self.b1), (self.a2, self.b2)]


# sign of each correlator in S, matching ChshSetting.pairs order
CHSH_SIGNS = (1, 1, 1, -1)


def tsirelson_setting() -> ChshSetting:
    """Directions that give the maximal singlet violation 2*sqrt(2)."""
    r = 1 / np.sqrt(2)
    return ChshSetting(
        a1=SpinDirection.of(0, 0, 1),
        a2=SpinDirection.of(1, 0, 0),
        b1=SpinDirection.of(-r, 0, -r),
        b2=SpinDirection.of(r, 0, -r),
    )


def pauli_observable(a: SpinDirection) -> np.ndarray:
    """Return ``a . sigma`` as a 2x2 complex matrix."""
    if not isinstance(a, SpinDirection):
        a = SpinDirection(tuple(a))
    ax, ay, az = a.components
    return ax * SIGMA_X + ay * SIGMA_Y + az * SIGMA_Z


def singlet_vector() -> np.ndarray:
    psi = np.zeros(4, dtype=complex)
    psi[0b01] = 1 / np.sqrt(2)
    psi[0b10] = -1 / np.sqrt(2)
    return psi


def singlet_projector_pauli() -> np.ndarray:
    """(I(x)I - XX - YY - ZZ)/4, built from the Pauli expansion."""
    rho = np.kron(IDENTITY2, IDENTITY2)
    for s in PAULIS:
        rho = rho - np.kron(s, s)
    return rho / 4


def singlet_state() -> TwoQubitState:
    return TwoQubitState(singlet_projector_pauli())


def spin_correlator(state: TwoQubitState, a: SpinDirection, b: SpinDirection) -> float:
    """Tr(rho (a.sigma)(x)(b.sigma)); equals -a.b on the singlet."""
    if not isinstance(state, TwoQubitState):
        state = TwoQubitState(state)
    obs = np.kron(pauli_observable(a), pauli_observable(b))
    return float(state.expectation(obs).real)


def chsh_value(state: TwoQubitState, s: ChshSetting) -> float:
    return sum(sign * spin_correlator(state, a, b) for sign, (a, b) in zip(CHSH_SIGNS, s.pairs()))


def singlet_chsh_closed_form(s: ChshSetting) -> float:
    """-a1.(b1+b2) - a2.(b1-b2)."""
    a1, a2, b1, b2 = (d.vector for d in (s.a1, s.a2, s.b1, s.b2))
    return float(-a1 @ (b1 + b2) - a2 @ (b1 - b2))


@dataclass(frozen=True, eq=False)
class LhvModel:
    """Finite hidden-variable model.

    ``weights[k]`` is p(lambda_k); ``assignments[k]`` holds the +-1 outcomes
    (a1, a2, b1, b2) that lambda_k predetermines.
    """

    weights: np.ndarray
    assignments: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        asg = np.array(self.assignments).reshape(-1, 4)
        if len(w) != len(asg) or len(w) == 0:
            raise ValueError("need one assignment row of 4 outcomes per weight")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        if not np.all(np.abs(asg) == 1):
            raise ValueError("assignments must be exactly +1 or -1")
        asg = asg.astype(np.int8)
        w.setflags(write=False)
        asg.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "assignments", asg)

    @classmethod
    def deterministic(cls, a1: int, a2: int, b1: int, b2: int) -> "LhvModel":
        return cls(np.ones(1), np.array([[a1, a2, b1, b2]]))

    def sign_flipped(self, parties: str = "a") -> "LhvModel":
        """Negate the outcomes of party ``"a"``, ``"b"`` or both (``"ab"``).

        A one-party flip negates every correlator and hence S; flipping both
        parties leaves S unchanged.
        """
        flip = np.ones(4, dtype=int)
        if "a" in parties:
            flip[:2] = -1
        if "b" in parties:
            flip[2:] = -1
        return LhvModel(self.weights, self.assignments.astype(int) * flip)

    def mixed_with(self, other: "LhvModel", p: float = 0.5) -> "LhvModel":
        w = np.concatenate([p * self.weights, (1 - p) * other.weights])
        return LhvModel(w / w.sum(), np.vstack([self.assignments, other.assignments]))

    def correlator(self, i: int, j: int) -> float:
        """E(a_i, b_j) for i, j in {0, 1}."""
        a = self.assignments[:, i].astype(float)
        b = self.assignments[:, 2 + j].astype(float)
        return float(np.sum(self.weights * a * b))


def _chsh_of_assignments(asg: np.ndarray) -> np.ndarray:
    a1, a2, b1, b2 = (asg[..., k].astype(float) for k in range(4))
    return a1 * (b1 + b2) + a2 * (b1 - b2)


def lhv_chsh_value(model: LhvModel) -> float:
    return float(np.sum(model.weights * _chsh_of_assignments(model.assignments)))


def lhv_chsh_values(weights: np.ndarray, assignments: np.ndarray) -> np.ndarray:
    """Batched CHSH values.

    weights: (n_models, k) rows summing to one; assignments: (n_models, k, 4).
    No per-model validation, this is for bulk sampling.
    """
    return np.sum(np.asarray(weights) * _chsh_of_assignments(np.asarray(assignments)), axis=-1)


def random_lhv_models(rng: np.random.Generator, n_models: int, support: int = 4):
    """Random finite models as (weights, assignments) arrays."""
    w = rng.dirichlet(np.ones(support), size=n_models)
    asg = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_models, support, 4))
    return w, asg


def lhv_extremal_scan() -> list[tuple[tuple[int, int, int, int], float]]:
    """CHSH value of each of the 16 deterministic strategies."""
    out = []
    for pattern in itertools.product((1, -1), repeat=4):
        out.append((pattern, lhv_chsh_value(LhvModel.deterministic(*pattern))))
    return out


def directions_from(vectors: Sequence[Sequence[float]], tol: float = NORM_TOL) -> ChshSetting:
    a1, a2, b1, b2 = (SpinDirection(tuple(v), tol=tol) for v in vectors)
    return ChshSetting(a1, a2, b1, b2)
