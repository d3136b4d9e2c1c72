import random

import pytest

from schoolchoice import Problem, SELF
from schoolchoice.farsight import _EdgeOracle
from schoolchoice.model import enumerate_matchings


@pytest.fixture(scope="session")
def trading_instance():
    """Four students, three schools; one seat trade happens under TTC."""
    return Problem(
        ("i1", "i2", "i3", "i4"),
        ("s1", "s2", "s3"),
        {"s1": 2, "s2": 1, "s3": 1},
        {
            "i1": ("s1", "s2", "s3"),
            "i2": ("s1", "s2", "s3"),
            "i3": ("s2", "s1", "s3"),
            "i4": ("s1", "s3", "s2"),
        },
        {
            "s1": ("i1", "i3", "i4", "i2"),
            "s2": ("i1", "i2", "i4", "i3"),
            "s3": ("i2", "i3", "i4", "i1"),
        },
    )


@pytest.fixture(scope="session")
def clinch_small_instance():
    """Three students, two schools; clinching blocks one priority trade."""
    return Problem(
        ("i1", "i2", "i3"),
        ("s1", "s2"),
        {"s1": 2, "s2": 1},
        {"i1": ("s2", "s1"), "i2": ("s1", "s2"), "i3": ("s2", "s1")},
        {"s1": ("i1", "i2", "i3"), "s2": ("i2", "i3", "i1")},
    )


@pytest.fixture(scope="session")
def iterated_clinch_instance():
    """Clinching cascades over several rounds before any trade.

    The third school ranks only one student in the source tables; the
    priority order is completed with the remaining students in declared
    order, which no computation on this instance ever consults.
    """
    return Problem(
        ("i1", "i2", "i3", "i4"),
        ("s1", "s2", "s3"),
        {"s1": 2, "s2": 1, "s3": 1},
        {"i1": ("s2", "s1"), "i2": ("s1", "s2"), "i3": ("s2", "s1"), "i4": ("s3",)},
        {
            "s1": ("i4", "i1", "i2", "i3"),
            "s2": ("i2", "i3", "i1", "i4"),
            "s3": ("i4", "i1", "i2", "i3"),
        },
    )


@pytest.fixture(scope="session")
def seat_endowment_instance():
    """Pairwise seat trading differs from plain trading cycles here."""
    return Problem(
        ("i1", "i2", "i3", "i4"),
        ("s1", "s2", "s3"),
        {"s1": 2, "s2": 1, "s3": 1},
        {
            "i1": ("s1", "s2", "s3"),
            "i2": ("s3", "s1", "s2"),
            "i3": ("s2", "s1", "s3"),
            "i4": ("s2", "s3", "s1"),
        },
        {
            "s1": ("i2", "i4", "i1", "i3"),
            "s2": ("i1", "i2", "i3", "i4"),
            "s3": ("i1", "i4", "i2", "i3"),
        },
    )


def matching_of(problem, **assignment):
    return problem.matching(
        {i: (SELF if s == "self" else s) for i, s in assignment.items()}
    )


@pytest.fixture(scope="session")
def trading_goldens(trading_instance):
    p = trading_instance
    return {
        "ttc": matching_of(p, i1="s1", i2="s1", i3="s2", i4="s3"),
        "da": matching_of(p, i1="s1", i2="s2", i3="s1", i4="s3"),
        "ia": matching_of(p, i1="s1", i2="s3", i3="s2", i4="s1"),
        "detour1": matching_of(p, i1="s1", i2="self", i3="s2", i4="s1"),
        "detour2": matching_of(p, i1="s1", i2="s3", i3="s2", i4="s1"),
        "detour3": matching_of(p, i1="s1", i2="s2", i3="self", i4="s1"),
        "detour4": matching_of(p, i1="s1", i2="s2", i3="s3", i4="s1"),
        "detour5": matching_of(p, i1="s1", i2="s2", i3="s1", i4="self"),
        "walkthrough_start": matching_of(p, i1="s1", i2="s2", i3="s3", i4="s1"),
    }


@pytest.fixture(scope="session")
def trading_universe(trading_instance):
    return enumerate_matchings(trading_instance)


@pytest.fixture(scope="session")
def trading_reachability(trading_instance, trading_universe):
    """Full reachability map of the trading instance, computed once."""
    import numpy as np

    oracle = _EdgeOracle(trading_instance, trading_universe)
    n = len(trading_universe)
    R = np.zeros((n, n), dtype=bool)
    for t in range(n):
        for x in oracle.sources_reaching(t):
            R[x, t] = True
    index = {mu: k for k, mu in enumerate(trading_universe)}
    return R, index


def random_problem(rng: random.Random, max_students=5, max_schools=4, full_prefs=False):
    n = rng.randint(1, max_students)
    m = rng.randint(1, max_schools)
    students = [f"i{k}" for k in range(1, n + 1)]
    schools = [f"s{k}" for k in range(1, m + 1)]
    quotas = {s: rng.randint(1, 3) for s in schools}
    prefs = {}
    for i in students:
        listed = list(schools) if full_prefs else [s for s in schools if rng.random() < 0.8]
        rng.shuffle(listed)
        prefs[i] = tuple(listed)
    prios = {}
    for s in schools:
        order = list(students)
        rng.shuffle(order)
        prios[s] = tuple(order)
    return Problem(tuple(students), tuple(schools), quotas, prefs, prios)
