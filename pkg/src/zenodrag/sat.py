"""Boolean k-SAT instances: representation, DIMACS I/O, generators, brute-force tools.

A literal is a pair (variable, sign): variables are numbered 1..n and sign True
means the plain variable (satisfied by True), sign False the negation. An
assignment is a tuple of n booleans, index 0 holding variable 1. Assignment
order everywhere is lexicographic with False < True, which coincides with the
integer order used for tensor-product basis indexing elsewhere in the package
(variable 1 is the most significant bit).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Literal = tuple[int, bool]
Clause = tuple[Literal, ...]
Assignment = tuple[bool, ...]

ENUMERATION_LIMIT = 24


@dataclass(frozen=True)
class SatInstance:
    """A k-SAT formula: conjunction of disjunctive clauses over n variables."""

    n_vars: int
    clauses: tuple[Clause, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.n_vars <= 0:
            raise ValueError(f"need at least one variable, got n_vars={self.n_vars}")
        if not self.clauses:
            raise ValueError("instance has no clauses")
        clauses = tuple(tuple(lit) for lit in map(tuple, self.clauses))
        object.__setattr__(self, "clauses", clauses)
        for clause in clauses:
            if not clause:
                raise ValueError("empty clause")
            seen = set()
            for var, sign in clause:
                if not 1 <= var <= self.n_vars:
                    raise ValueError(f"literal variable {var} outside 1..{self.n_vars}")
                if not isinstance(sign, (bool, np.bool_)):
                    raise ValueError(f"literal sign must be bool, got {sign!r}")
                if var in seen:
                    raise ValueError(f"variable {var} repeated within a clause")
                seen.add(var)

    @property
    def n_clauses(self) -> int:
        return len(self.clauses)


def evaluate(instance: SatInstance, assignment: Assignment) -> bool:
    """True iff the assignment satisfies every clause."""
    if len(assignment) != instance.n_vars:
        raise ValueError(
            f"assignment length {len(assignment)} != n_vars {instance.n_vars}"
        )
    return all(
        any(bool(assignment[var - 1]) == sign for var, sign in clause)
        for clause in instance.clauses
    )


def enumerate_solutions(instance: SatInstance) -> list[Assignment]:
    """All satisfying assignments in lexicographic order (False < True).

    Brute force over 2^n assignments; refuses n above ENUMERATION_LIMIT.
    """
    n = instance.n_vars
    if n > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration limited to n <= {ENUMERATION_LIMIT}, got {n}")
    out = []
    for a in range(1 << n):
        # bit (n - k) of a is variable k, so ascending a is lexicographic order
        assignment = tuple(bool((a >> (n - k)) & 1) for k in range(1, n + 1))
        if evaluate(instance, assignment):
            out.append(assignment)
    return out


def assignment_to_index(assignment: Assignment) -> int:
    """Tensor-basis index of a computational state: variable 1 is the MSB, True = 1."""
    idx = 0
    for b in assignment:
        idx = (idx << 1) | int(bool(b))
    return idx


# ---------------------------------------------------------------------------
# generators


def ring2sat(n: int) -> SatInstance:
    """Ring of implications (b_i or not b_{i+1 mod n}); solutions all-True, all-False."""
    if n < 2:
        raise ValueError(f"ring needs n >= 2, got {n}")
    clauses = tuple(
        ((i, True), (i % n + 1, False)) for i in range(1, n + 1)
    )
    return SatInstance(n, clauses)


def single_solution_ring(n: int) -> SatInstance:
    """The implication ring plus (b_1 or b_2), leaving all-True as the unique solution."""
    ring = ring2sat(n)
    return SatInstance(n, ring.clauses + (((1, True), (2, True)),))


def random3sat(n: int, seed: int, max_retries: int = 10_000) -> SatInstance:
    """Random 3-SAT with ceil(4.26 n) distinct clauses and exactly one solution.

    Rejection-sampled: whole instances are redrawn until the solution count is
    exactly 1. Deterministic in (n, seed).  The clause count is capped one
    below the full set of distinct 3-clauses; the cap binds only at n = 3,
    where uniqueness forces exactly 7 of the 8 possible clauses.
    """
    if n < 3:
        raise ValueError(f"3-SAT generator needs n >= 3, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    n_possible = _count_3clauses(n)
    m = min(int(np.ceil(4.26 * n)), n_possible - 1)
    for _ in range(max_retries):
        seen: set[Clause] = set()
        while len(seen) < m:
            variables = rng.choice(n, size=3, replace=False) + 1
            signs = rng.integers(0, 2, size=3).astype(bool)
            clause = tuple(sorted(zip(variables.tolist(), signs.tolist())))
            seen.add(clause)
        instance = SatInstance(n, tuple(sorted(seen)))
        if len(enumerate_solutions(instance)) == 1:
            return instance
    raise RuntimeError(
        f"no uniquely-satisfiable instance found in {max_retries} draws (n={n}, seed={seed})"
    )


def _count_3clauses(n: int) -> int:
    return (n * (n - 1) * (n - 2) // 6) * 8


# ---------------------------------------------------------------------------
# DIMACS CNF I/O


def parse_dimacs(text: str) -> SatInstance:
    """Parse DIMACS CNF. Requires a 'p cnf n m' header and exactly m clauses."""
    n_vars = None
    declared = None
    literals: list[int] = []
    clauses: list[Clause] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            if n_vars is not None:
                raise ValueError(f"line {lineno}: duplicate problem header")
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"line {lineno}: malformed header {line!r}")
            try:
                n_vars, declared = int(parts[2]), int(parts[3])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: malformed header {line!r}") from exc
            continue
        if n_vars is None:
            raise ValueError(f"line {lineno}: clause before 'p cnf' header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad literal {tok!r}") from exc
            if lit == 0:
                clauses.append(tuple((abs(v), v > 0) for v in literals))
                literals = []
            else:
                literals.append(lit)
    if n_vars is None:
        raise ValueError("missing 'p cnf' header")
    if literals:
        raise ValueError("trailing literals without terminating 0")
    if len(clauses) != declared:
        raise ValueError(f"header declares {declared} clauses, found {len(clauses)}")
    return SatInstance(n_vars, tuple(clauses))


def render_dimacs(instance: SatInstance) -> str:
    lines = [f"p cnf {instance.n_vars} {instance.n_clauses}"]
    for clause in instance.clauses:
        lits = " ".join(str(var if sign else -var) for var, sign in clause)
        lines.append(f"{lits} 0")
    return "\n".join(lines) + "\n"
