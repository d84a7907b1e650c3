import itertools

import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as nps

from radarfuse.assign import FORBIDDEN, solve_assignment, total_cost


def brute_force(C):
    """Best total over all injections of the smaller side into the larger."""
    M, N = C.shape
    best = np.inf
    if M <= N:
        for cols in itertools.permutations(range(N), M):
            best = min(best, sum(C[i, c] for i, c in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(M), N):
            best = min(best, sum(C[r, j] for j, r in enumerate(rows)))
    return best


def test_zero_diagonal():
    C = np.ones((3, 3)) - np.eye(3)
    assert solve_assignment(C) == [(0, 0), (1, 1), (2, 2)]


def test_hand_example():
    C = np.array([[4, 1, 3], [2, 0, 5], [3, 2, 2]], dtype=float)
    pairs = solve_assignment(C)
    assert total_cost(C, pairs) == 5
    assert brute_force(C) == 5


def test_rectangular_2x3(rng):
    C = rng.uniform(0, 10, (2, 3))
    pairs = solve_assignment(C)
    assert len(pairs) == 2
    assert np.isclose(total_cost(C, pairs), brute_force(C))


def test_empty_and_all_forbidden():
    assert solve_assignment(np.zeros((0, 3))) == []
    assert solve_assignment(np.full((2, 2), FORBIDDEN)) == []


def test_forbidden_pairs_never_returned():
    C = np.array([[0.0, FORBIDDEN], [FORBIDDEN, FORBIDDEN]])
    assert solve_assignment(C) == [(0, 0)]


def test_forbidden_does_not_displace_real_pairs():
    # the only complete matching uses a forbidden cell; the real pair must survive
    C = np.array([[1.0, 2.0], [FORBIDDEN, FORBIDDEN]])
    assert solve_assignment(C) == [(0, 0)]


def test_matches_exhaustive_on_random_matrices():
    r = np.random.default_rng(7)
    for _ in range(500):
        M, N = r.integers(1, 7, size=2)
        C = r.uniform(-5, 20, (M, N))
        pairs = solve_assignment(C)
        assert len(pairs) == min(M, N)
        assert np.isclose(total_cost(C, pairs), brute_force(C), rtol=0, atol=1e-9)


mats = st.tuples(st.integers(1, 5), st.integers(1, 5)).flatmap(
    lambda s: nps.arrays(np.float64, s, elements=st.floats(-100, 100, allow_nan=False)))


@given(mats, st.floats(-50, 50))
def test_constant_offset_keeps_optimum(C, k):
    a = total_cost(C, solve_assignment(C))
    pairs = solve_assignment(C + k)
    assert np.isclose(total_cost(C, pairs), a, atol=1e-7)


@given(mats, st.randoms())
def test_row_permutation_is_consistent(C, rnd):
    perm = list(range(C.shape[0]))
    rnd.shuffle(perm)
    base = total_cost(C, solve_assignment(C))
    P = C[perm]
    assert np.isclose(total_cost(P, solve_assignment(P)), base, atol=1e-7)


@given(mats)
def test_one_to_one(C):
    pairs = solve_assignment(C)
    rows = [r for r, _ in pairs]
    cols = [c for _, c in pairs]
    assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
    assert rows == sorted(rows)
