"""Problem and matching data model, feasibility and welfare predicates.

A problem bundles students, schools, quotas, student preference lists and
school priority orders.  A matching assigns every student to one school or
to herself (the SELF sentinel), never exceeding any school quota.  All
types are immutable after construction; predicates are pure functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence


class SchoolChoiceError(Exception):
    pass


class ValidationError(SchoolChoiceError):
    """A matching or problem violates a structural invariant."""


class CapacityError(SchoolChoiceError):
    """An exhaustive computation would exceed its configured cap."""


class _SelfToken:
    """Sentinel for 'matched to herself' (unassigned)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "SELF"

    def __deepcopy__(self, memo):
        return self


SELF = _SelfToken()

#: Default cap on exhaustive matching enumeration.
DEFAULT_ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class Problem:
    """A school choice problem.

    students/schools are ordered; iteration order everywhere in the library
    follows the declared order, which makes every computation deterministic.
    Preference lists contain only acceptable schools, best first; schools
    missing from a list are unacceptable (ranked below staying unmatched).
    Priorities must be full orderings of all students, highest first.
    """

    students: tuple[str, ...]
    schools: tuple[str, ...]
    quotas: Mapping[str, int]
    preferences: Mapping[str, tuple[str, ...]]
    priorities: Mapping[str, tuple[str, ...]]

    # derived lookup tables, filled in __post_init__
    _sidx: dict = field(init=False, repr=False, compare=False)
    _cidx: dict = field(init=False, repr=False, compare=False)
    _pref_rank: tuple = field(init=False, repr=False, compare=False)
    _prio_rank: tuple = field(init=False, repr=False, compare=False)
    _quota_vec: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "students", tuple(self.students))
        object.__setattr__(self, "schools", tuple(self.schools))
        object.__setattr__(self, "quotas", dict(self.quotas))
        object.__setattr__(
            self, "preferences", {i: tuple(p) for i, p in self.preferences.items()}
        )
        object.__setattr__(
            self, "priorities", {s: tuple(f) for s, f in self.priorities.items()}
        )
        sidx = {i: k for k, i in enumerate(self.students)}
        cidx = {s: k for k, s in enumerate(self.schools)}
        object.__setattr__(self, "_sidx", sidx)
        object.__setattr__(self, "_cidx", cidx)
        n, m = len(self.students), len(self.schools)
        # rank over schools + SELF: listed school -> its position, SELF -> number
        # listed, any unlisted school -> one past SELF (all unlisted tie).
        pref_rank = []
        for i in self.students:
            prefs = self.preferences.get(i, ())
            row = [len(prefs) + 1] * (m + 1)
            row[m] = len(prefs)
            for pos, s in enumerate(prefs):
                if s in cidx:
                    row[cidx[s]] = pos
            pref_rank.append(tuple(row))
        object.__setattr__(self, "_pref_rank", tuple(pref_rank))
        prio_rank = []
        for s in self.schools:
            order = self.priorities.get(s, ())
            row = [n] * n
            for pos, i in enumerate(order):
                if i in sidx:
                    row[sidx[i]] = pos
            prio_rank.append(tuple(row))
        object.__setattr__(self, "_prio_rank", tuple(prio_rank))
        object.__setattr__(
            self, "_quota_vec", tuple(int(self.quotas.get(s, 0)) for s in self.schools)
        )

    # --- lookups -----------------------------------------------------------

    def student_index(self, i: str) -> int:
        return self._sidx[i]

    def school_index(self, s: str) -> int:
        return self._cidx[s]

    def quota(self, s: str) -> int:
        return self.quotas[s]

    def pref_rank(self, i: str, assignment) -> int:
        """Rank of an assignment (school or SELF) for student i; lower is better."""
        col = len(self.schools) if assignment is SELF else self._cidx[assignment]
        return self._pref_rank[self._sidx[i]][col]

    def prefers(self, i: str, a, b) -> bool:
        """True iff student i strictly prefers assignment a to b."""
        return self.pref_rank(i, a) < self.pref_rank(i, b)

    def weakly_prefers(self, i: str, a, b) -> bool:
        return self.pref_rank(i, a) <= self.pref_rank(i, b)

    def acceptable(self, i: str, s: str) -> bool:
        return s in self.preferences.get(i, ())

    def priority_rank(self, s: str, i: str) -> int:
        """1-based priority rank of student i at school s (1 = highest)."""
        return self._prio_rank[self._cidx[s]][self._sidx[i]] + 1

    def higher_priority(self, s: str, i: str, j: str) -> bool:
        """True iff i has higher priority than j at s."""
        return self.priority_rank(s, i) < self.priority_rank(s, j)

    def matching(self, assignment: Mapping[str, object]) -> "Matching":
        return Matching(self, assignment)

    def empty_matching(self) -> "Matching":
        return Matching(self, {i: SELF for i in self.students})


def validate_problem(problem: Problem) -> list[str]:
    """Return human-readable diagnostics for every violated invariant.

    An empty list means the problem is well formed.
    """
    diags = []
    seen = set()
    for i in problem.students:
        if i in seen:
            diags.append(f"duplicate student identifier {i!r}")
        seen.add(i)
    seen = set()
    for s in problem.schools:
        if s in seen:
            diags.append(f"duplicate school identifier {s!r}")
        seen.add(s)
    overlap = set(problem.students) & set(problem.schools)
    for name in sorted(overlap):
        diags.append(f"identifier {name!r} used for both a student and a school")
    for s in problem.schools:
        q = problem.quotas.get(s)
        if q is None:
            diags.append(f"no quota given for school {s!r}")
        elif q < 1:
            diags.append(f"quota of school {s!r} must be >= 1, got {q}")
    for s in problem.quotas:
        if s not in problem._cidx:
            diags.append(f"quota given for unknown school {s!r}")
    student_set = set(problem.students)
    school_set = set(problem.schools)
    for i in problem.students:
        prefs = problem.preferences.get(i)
        if prefs is None:
            diags.append(f"no preference list for student {i!r}")
            continue
        seen = set()
        for s in prefs:
            if s not in school_set:
                diags.append(f"preference of {i!r} lists unknown school {s!r}")
            if s in seen:
                diags.append(f"preference of {i!r} lists school {s!r} twice")
            seen.add(s)
    for i in problem.preferences:
        if i not in student_set:
            diags.append(f"preference list for unknown student {i!r}")
    for s in problem.schools:
        order = problem.priorities.get(s)
        if order is None:
            diags.append(f"no priority order for school {s!r}")
            continue
        if sorted(order) != sorted(problem.students):
            diags.append(f"priority of {s!r} is not a permutation of the students")
    for s in problem.priorities:
        if s not in school_set:
            diags.append(f"priority order for unknown school {s!r}")
    return diags


class Matching:
    """An assignment of every student to a school or to SELF.

    Feasibility (quota bounds, assignment/roster consistency) is checked on
    construction, so any Matching in circulation is feasible.  Instances are
    immutable and hashable.
    """

    __slots__ = ("problem", "_assign", "_hash")

    def __init__(self, problem: Problem, assignment: Mapping[str, object]):
        extra = set(assignment) - set(problem.students)
        if extra:
            raise ValidationError(f"assignment mentions unknown students {sorted(extra)}")
        vec = []
        m = len(problem.schools)
        counts = [0] * m
        for i in problem.students:
            if i not in assignment:
                raise ValidationError(f"student {i!r} missing from assignment")
            a = assignment[i]
            if a is SELF or a is None:
                vec.append(m)
            else:
                if a not in problem._cidx:
                    raise ValidationError(f"student {i!r} assigned to unknown school {a!r}")
                k = problem._cidx[a]
                counts[k] += 1
                vec.append(k)
        for k, s in enumerate(problem.schools):
            if counts[k] > problem._quota_vec[k]:
                raise ValidationError(
                    f"school {s!r} holds {counts[k]} students, quota is {problem._quota_vec[k]}"
                )
        self.problem = problem
        self._assign = tuple(vec)
        self._hash = hash(self._assign)

    @classmethod
    def _from_vector(cls, problem: Problem, vec: tuple[int, ...]) -> "Matching":
        obj = object.__new__(cls)
        obj.problem = problem
        obj._assign = vec
        obj._hash = hash(vec)
        return obj

    # --- views -------------------------------------------------------------

    def school_of(self, i: str):
        k = self._assign[self.problem._sidx[i]]
        return SELF if k == len(self.problem.schools) else self.problem.schools[k]

    @property
    def assignment(self) -> dict:
        return {i: self.school_of(i) for i in self.problem.students}

    def roster(self, s: str) -> frozenset:
        k = self.problem._cidx[s]
        return frozenset(
            i for i, a in zip(self.problem.students, self._assign) if a == k
        )

    @property
    def rosters(self) -> dict:
        out = {s: set() for s in self.problem.schools}
        m = len(self.problem.schools)
        for i, a in zip(self.problem.students, self._assign):
            if a != m:
                out[self.problem.schools[a]].add(i)
        return {s: frozenset(v) for s, v in out.items()}

    def matched_pairs(self) -> set:
        m = len(self.problem.schools)
        return {
            (i, self.problem.schools[a])
            for i, a in zip(self.problem.students, self._assign)
            if a != m
        }

    def reassign(self, changes: Mapping[str, object]) -> "Matching":
        """New matching with the given students reassigned (validated)."""
        new = self.assignment
        new.update(changes)
        return Matching(self.problem, new)

    def literal(self) -> str:
        parts = []
        for i in self.problem.students:
            a = self.school_of(i)
            parts.append(f"{i}->{'self' if a is SELF else a}")
        return ", ".join(parts)

    # --- protocol ----------------------------------------------------------

    def __eq__(self, other):
        return isinstance(other, Matching) and self._assign == other._assign

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"<Matching {self.literal()}>"


def sort_matchings(matchings: Iterable[Matching]) -> list[Matching]:
    """Canonical report order: lexicographic by matching literal."""
    return sorted(matchings, key=lambda mu: mu.literal())


def enumerate_matchings(
    problem: Problem, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[Matching]:
    """All feasible matchings, in a fixed deterministic order.

    Every student may be assigned to any school with a free seat or to SELF,
    regardless of her preferences; individual rationality is a separate
    predicate.  Raises CapacityError once more than `cap` matchings exist.
    """
    out = list(iter_matchings(problem, cap=cap))
    return out


def iter_matchings(
    problem: Problem, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[Matching]:
    n = len(problem.students)
    m = len(problem.schools)
    remaining = list(problem._quota_vec)
    vec = [m] * n
    produced = 0

    def rec(k: int):
        nonlocal produced
        if k == n:
            produced += 1
            if produced > cap:
                raise CapacityError(
                    f"more than {cap} matchings; raise the cap to enumerate this instance"
                )
            yield Matching._from_vector(problem, tuple(vec))
            return
        for c in range(m):
            if remaining[c] > 0:
                remaining[c] -= 1
                vec[k] = c
                yield from rec(k + 1)
                remaining[c] += 1
        vec[k] = m
        yield from rec(k + 1)

    yield from rec(0)


def is_individually_rational(problem: Problem, mu: Matching) -> bool:
    """True iff every matched student finds her school acceptable."""
    for i in problem.students:
        a = mu.school_of(i)
        if a is not SELF and not problem.acceptable(i, a):
            return False
    return True


def is_non_wasteful(problem: Problem, mu: Matching) -> bool:
    """True iff no student prefers a school with a free seat to her assignment."""
    rosters = mu.rosters
    for i in problem.students:
        own = mu.school_of(i)
        for s in problem.schools:
            if problem.prefers(i, s, own) and len(rosters[s]) < problem.quota(s):
                return False
    return True


def has_no_justified_envy(problem: Problem, mu: Matching) -> bool:
    """True iff every student envied at a school has higher priority there.

    Student i justifiably envies j at school s when j holds a seat at s,
    i prefers s to her own assignment, and i has higher priority at s.
    """
    for i in problem.students:
        own = mu.school_of(i)
        for j in problem.students:
            s = mu.school_of(j)
            if s is SELF or j == i:
                continue
            if problem.prefers(i, s, own) and problem.higher_priority(s, i, j):
                return False
    return True


def justified_envy_witnesses(problem: Problem, mu: Matching) -> list[tuple[str, str, str]]:
    """All (envious student, occupant, school) triples witnessing justified envy."""
    out = []
    for i in problem.students:
        own = mu.school_of(i)
        for j in problem.students:
            s = mu.school_of(j)
            if s is SELF or j == i:
                continue
            if problem.prefers(i, s, own) and problem.higher_priority(s, i, j):
                out.append((i, j, s))
    return out


def is_stable(problem: Problem, mu: Matching) -> bool:
    return (
        is_individually_rational(problem, mu)
        and is_non_wasteful(problem, mu)
        and has_no_justified_envy(problem, mu)
    )


def pareto_dominates(problem: Problem, mu_new: Matching, mu_old: Matching) -> bool:
    """True iff every student weakly prefers mu_new and someone strictly does."""
    strict = False
    for i in problem.students:
        a, b = mu_new.school_of(i), mu_old.school_of(i)
        if problem.prefers(i, b, a):
            return False
        if problem.prefers(i, a, b):
            strict = True
    return strict


def is_pareto_efficient(
    problem: Problem,
    mu: Matching,
    universe: Sequence[Matching] | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> bool:
    """Exhaustive check that no feasible matching Pareto dominates mu."""
    if universe is None:
        universe = iter_matchings(problem, cap=cap)
    for other in universe:
        if pareto_dominates(problem, other, mu):
            return False
    return True
