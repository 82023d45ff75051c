"""Instance construction, evaluation, enumeration, and DIMACS round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zenodrag.sat import (
    SatInstance,
    assignment_to_index,
    enumerate_solutions,
    evaluate,
    parse_dimacs,
    random3sat,
    render_dimacs,
    ring2sat,
    single_solution_ring,
)


def test_instance_validation():
    SatInstance(2, (((1, True), (2, False)),))
    with pytest.raises(ValueError):
        SatInstance(0, (((1, True),),))
    with pytest.raises(ValueError):
        SatInstance(2, ())
    with pytest.raises(ValueError):
        SatInstance(2, (((3, True),),))  # variable out of range
    with pytest.raises(ValueError):
        SatInstance(2, (((1, True), (1, False)),))  # repeated variable


def test_evaluate_single_clause():
    # (b1 or not b2): only b1=F, b2=T violates
    inst = SatInstance(2, (((1, True), (2, False)),))
    assert evaluate(inst, (True, True))
    assert evaluate(inst, (True, False))
    assert not evaluate(inst, (False, True))
    assert evaluate(inst, (False, False))


def test_enumerate_solutions_order():
    inst = SatInstance(2, (((1, True), (2, False)),))
    sols = enumerate_solutions(inst)
    assert sols == [(False, False), (True, False), (True, True)]


def test_assignment_to_index_msb():
    # variable 1 is the most significant bit
    assert assignment_to_index((True, False, False)) == 4
    assert assignment_to_index((False, False, True)) == 1
    assert assignment_to_index((True, True, True)) == 7


def test_ring2sat_solutions():
    for n in (2, 3, 5):
        inst = ring2sat(n)
        assert inst.n_clauses == n
        sols = enumerate_solutions(inst)
        assert set(sols) == {(False,) * n, (True,) * n}


def test_single_solution_ring():
    for n in (2, 3, 4):
        inst = single_solution_ring(n)
        assert inst.n_clauses == n + 1
        assert enumerate_solutions(inst) == [(True,) * n]


def test_random3sat_unique_solution():
    inst = random3sat(4, seed=7)
    assert inst.n_vars == 4
    assert inst.n_clauses == int(np.ceil(4.26 * 4))
    assert len(enumerate_solutions(inst)) == 1
    assert len(set(inst.clauses)) == inst.n_clauses
    for clause in inst.clauses:
        assert len(clause) == 3


def test_random3sat_smallest_case():
    # only 8 distinct 3-clauses exist over 3 variables; a unique solution
    # needs exactly 7 of them
    inst = random3sat(3, seed=1)
    assert inst.n_clauses == 7
    assert len(enumerate_solutions(inst)) == 1


def test_random3sat_reproducible():
    a = random3sat(3, seed=11)
    b = random3sat(3, seed=11)
    assert a == b


def test_dimacs_roundtrip():
    inst = single_solution_ring(3)
    text = render_dimacs(inst)
    back = parse_dimacs(text)
    assert back == inst


def test_dimacs_parse_errors():
    with pytest.raises(ValueError):
        parse_dimacs("1 2 0\n")  # clause before header
    with pytest.raises(ValueError):
        parse_dimacs("p cnf 2 1\n1 3 0\n")  # literal out of range
    with pytest.raises(ValueError):
        parse_dimacs("p cnf 2 2\n1 2 0\n")  # declared count mismatch
    with pytest.raises(ValueError):
        parse_dimacs("p cnf 2 1\n1 2\n")  # unterminated clause


@st.composite
def instances(draw):
    n = draw(st.integers(min_value=1, max_value=5))
    m = draw(st.integers(min_value=1, max_value=8))
    clauses = []
    for _ in range(m):
        k = draw(st.integers(min_value=1, max_value=min(3, n)))
        variables = draw(
            st.lists(
                st.integers(min_value=1, max_value=n),
                min_size=k,
                max_size=k,
                unique=True,
            )
        )
        signs = draw(st.lists(st.booleans(), min_size=k, max_size=k))
        clauses.append(tuple(zip(variables, signs)))
    return SatInstance(n, tuple(clauses))


@given(instances())
@settings(max_examples=50, deadline=None)
def test_dimacs_roundtrip_property(inst):
    assert parse_dimacs(render_dimacs(inst)) == inst


@given(instances())
@settings(max_examples=50, deadline=None)
def test_solutions_satisfy(inst):
    sols = enumerate_solutions(inst)
    for s in sols:
        assert evaluate(inst, s)
    # complement check on a few non-solutions
    sol_set = set(sols)
    for idx in range(min(1 << inst.n_vars, 8)):
        bits = tuple(bool((idx >> (inst.n_vars - 1 - k)) & 1) for k in range(inst.n_vars))
        assert (bits in sol_set) == evaluate(inst, bits)
