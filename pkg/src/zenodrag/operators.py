"""Measurement-axis operators for k-SAT Zeno dragging.

Conventions, used consistently across the package:

  * qubit k corresponds to boolean variable k; qubit 1 is the most significant
    bit of the tensor-product basis index, |0> = False, |1> = True;
  * the drag rotation about y is R(phi) = exp(-i phi sigma_y / 2);
  * the symmetric initial state |+> = (|1> + |0>)/sqrt(2);
  * a literal with sign l in {+1,-1} at axis angle theta contributes the
    single-qubit projector onto R(pi + l*theta)|+>, the direction that
    *violates* the literal.  At theta = 0 every such direction is |->; at
    theta = pi/2 it is the computational basis state of the violating value.

The clause projector is the tensor product of its literals' violating-state
projectors, acting as identity on the remaining qubits: its +1 eigenspace is
"every literal of the clause violated at angle theta".  The cost operator is
the uniform clause average, and its zero eigenspace at theta in (0, pi/2]
encodes the SAT solutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sat import Clause, SatInstance, assignment_to_index, enumerate_solutions

ZERO_TOL = 1e-9  # eigenvalue threshold separating the solution space from the rest
_VALIDATE_DIM_LIMIT = 512

SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
PLUS = np.array([1.0, 1.0]) / np.sqrt(2.0)  # (|1> + |0>)/sqrt(2)


def drag_rotation(phi: float) -> np.ndarray:
    """R(phi) = exp(-i phi sigma_y / 2), real-valued in this basis."""
    c, s = np.cos(phi / 2.0), np.sin(phi / 2.0)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def make_axis(theta, n: int, validate: bool = True) -> np.ndarray:
    """Per-qubit axis angles as a float vector of length n.

    Scalars broadcast to a shared global angle. With validate, angles must lie
    in [0, pi/2] up to 1e-12 slack (the optimizer may disable its clamp, in
    which case callers pass validate=False).
    """
    axis = np.asarray(theta, dtype=float)
    if axis.ndim == 0:
        axis = np.full(n, float(axis))
    if axis.shape != (n,):
        raise ValueError(f"axis shape {axis.shape} incompatible with n={n}")
    if validate and ((axis < -1e-12).any() or (axis > np.pi / 2 + 1e-12).any()):
        raise ValueError(f"axis angles outside [0, pi/2]: {axis}")
    return axis


def violating_state(theta: float, sign: bool) -> np.ndarray:
    """Single-qubit state whose occupation signals a violated literal."""
    l = 1.0 if sign else -1.0
    return drag_rotation(np.pi + l * theta) @ PLUS


def violating_state_derivative(theta: float, sign: bool) -> np.ndarray:
    """d/dtheta of violating_state."""
    l = 1.0 if sign else -1.0
    return l * (-0.5j) * (SIGMA_Y @ violating_state(theta, sign))


def _literal_projector(theta: float, sign: bool) -> np.ndarray:
    v = violating_state(theta, sign)
    return np.outer(v, v.conj())


def _literal_projector_derivative(theta: float, sign: bool) -> np.ndarray:
    v = violating_state(theta, sign)
    dv = violating_state_derivative(theta, sign)
    return np.outer(dv, v.conj()) + np.outer(v, dv.conj())


def _embed(factors: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Kron together per-qubit 2x2 factors (identity where absent), qubit 1 leftmost."""
    out = np.array([[1.0 + 0.0j]])
    eye = np.eye(2, dtype=np.complex128)
    for qubit in range(1, n + 1):
        out = np.kron(out, factors.get(qubit, eye))
    return out


def clause_projector(clause: Clause, axis: np.ndarray, n: int) -> np.ndarray:
    """Projector onto "all literals of the clause violated" at the given axis."""
    factors = {var: _literal_projector(axis[var - 1], sign) for var, sign in clause}
    return _embed(factors, n)


def clause_projector_derivative(
    clause: Clause, axis: np.ndarray, n: int, qubit: int
) -> np.ndarray:
    """d/dtheta_qubit of clause_projector; zero when the qubit is not in the clause."""
    signs = {var: sign for var, sign in clause}
    if qubit not in signs:
        d = 1 << n
        return np.zeros((d, d), dtype=np.complex128)
    factors = {}
    for var, sign in clause:
        if var == qubit:
            factors[var] = _literal_projector_derivative(axis[var - 1], sign)
        else:
            factors[var] = _literal_projector(axis[var - 1], sign)
    return _embed(factors, n)


@dataclass(frozen=True)
class ProjectorSet:
    """Stacked clause projectors at a fixed axis: projectors[a] acts for clause a."""

    axis: np.ndarray
    projectors: np.ndarray  # (m, d, d)

    def __post_init__(self) -> None:
        m, d, d2 = self.projectors.shape
        if d != d2:
            raise ValueError("projectors must be square")
        if d <= _VALIDATE_DIM_LIMIT:
            for P in self.projectors:
                if np.abs(P - P.conj().T).max() > 1e-12:
                    raise ValueError("clause projector not Hermitian")
                if np.abs(P @ P - P).max() > 1e-12:
                    raise ValueError("clause projector not idempotent")

    @property
    def n_clauses(self) -> int:
        return self.projectors.shape[0]

    @property
    def dim(self) -> int:
        return self.projectors.shape[1]


def projector_set(instance: SatInstance, axis) -> ProjectorSet:
    axis = make_axis(axis, instance.n_vars, validate=False)
    stack = np.stack(
        [clause_projector(c, axis, instance.n_vars) for c in instance.clauses]
    )
    return ProjectorSet(axis=axis, projectors=stack)


@dataclass(frozen=True)
class CostOperator:
    """Clause-averaged violation operator with its spectral data."""

    matrix: np.ndarray
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns
    ground_projector: np.ndarray
    ground_dim: int
    gap: float


def cost_operator(instance: SatInstance, axis) -> CostOperator:
    """Average of the clause projectors, eigendecomposed.

    The ground space collects eigenvalues below ZERO_TOL; the gap is the
    smallest eigenvalue above it.  Unsatisfiable instances at theta > 0 have an
    empty ground space and the gap degenerates to the smallest eigenvalue.
    """
    pset = projector_set(instance, axis)
    matrix = pset.projectors.mean(axis=0)
    matrix = 0.5 * (matrix + matrix.conj().T)
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    ground = eigenvalues < ZERO_TOL
    ground_dim = int(ground.sum())
    V = eigenvectors[:, ground]
    ground_projector = V @ V.conj().T
    excited = eigenvalues[~ground]
    gap = float(excited[0]) if excited.size else float("inf")
    return CostOperator(
        matrix=matrix,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        ground_projector=ground_projector,
        ground_dim=ground_dim,
        gap=gap,
    )


def ground_projector(instance: SatInstance, axis) -> np.ndarray:
    return cost_operator(instance, axis).ground_projector


def spectral_gap(instance: SatInstance, axis) -> float:
    return cost_operator(instance, axis).gap


def solution_basis_projector(instance: SatInstance) -> np.ndarray:
    """Projector onto the computational basis states of the SAT solutions.

    Equals the ground projector at axis pi/2; kept as an exact independent
    construction (used for terminal conditions and as a cross-check).
    """
    d = 1 << instance.n_vars
    diag = np.zeros(d)
    for assignment in enumerate_solutions(instance):
        diag[assignment_to_index(assignment)] = 1.0
    return np.diag(diag).astype(np.complex128)


def groundspace_overlap(instance: SatInstance, axis_a, axis_b) -> float:
    """Worst-case overlap delta between ground spaces at two axes.

    The smallest eigenvalue of Pi0(b) compressed to the range of Pi0(a);
    requires equal ground dimensions.
    """
    ca = cost_operator(instance, axis_a)
    cb = cost_operator(instance, axis_b)
    if ca.ground_dim != cb.ground_dim:
        raise ValueError(
            f"ground dimensions differ: {ca.ground_dim} vs {cb.ground_dim}"
        )
    if ca.ground_dim == 0:
        raise ValueError("empty ground space")
    V = ca.eigenvectors[:, ca.eigenvalues < ZERO_TOL]
    compressed = V.conj().T @ cb.ground_projector @ V
    vals = np.linalg.eigvalsh(0.5 * (compressed + compressed.conj().T))
    return float(vals[0])
