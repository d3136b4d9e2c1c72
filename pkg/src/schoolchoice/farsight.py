"""Coalition enforcement, farsighted improving paths and stable sets.

Two layers live here and they are deliberately not identical:

* The *certificate checkers* (`can_enforce`, `validate_path`,
  `validate_path_horizon`) verify a given sequence of matchings plus
  coalitions against the enforcement and improvement conditions exactly as
  stated: coalition students must weakly prefer the relevant lookahead
  matching with at least one strict improver, and a school in the coalition
  whose gains push it past capacity must replace each departing student
  with a higher-priority newcomer.  A coalition may carry members whose own
  assignment does not change; they are harmless as long as they satisfy the
  improvement condition.

* The *search* (`find_enforcing_coalition`, `phi`, `phi_horizon`,
  `reachability_matrix`) decides whether an improving path exists.  The
  search builds coalitions out of the agents actually touched by a move:
  students joining a school, students giving up a seat without being
  replaced, and the gaining schools.  Schools never destroy matches on
  their own: they only accept newcomers, or replace a leaver with a
  higher-priority newcomer.  Students move under two behavioural rules:

  - voluntary departure: a student gives up a seat (without being replaced)
    only when the lookahead matching strictly improves on her current seat;
  - anchored joining: a student claims a seat at a school mid-path only
    when the lookahead matching seats her there, or seats someone she
    outranks (so her claim is consistent with where the path is heading).

  Both rules are restrictions the checkers do not impose; they pin down
  which of the many formally enforceable moves self-interested students
  actually take, and they reproduce the worked reachability sets exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import (
    SELF,
    CapacityError,
    Matching,
    Problem,
    enumerate_matchings,
    sort_matchings,
)

FARSIGHTED = "farsighted"

#: Default depth cap for the horizon-k path search.
DEFAULT_DEPTH_CAP = 12

#: Expansion budget for the horizon-k depth-first search; when exhausted the
#: result is flagged partial rather than wrong.
DEFAULT_NODE_BUDGET = 2_000_000


@dataclass(frozen=True)
class Coalition:
    students: frozenset
    schools: frozenset

    def __post_init__(self):
        object.__setattr__(self, "students", frozenset(self.students))
        object.__setattr__(self, "schools", frozenset(self.schools))

    def __iter__(self):
        return iter(sorted(self.students) + sorted(self.schools))

    def is_empty(self) -> bool:
        return not self.students and not self.schools


@dataclass(frozen=True)
class MoveStep:
    source: Matching
    target: Matching
    coalition: Coalition


@dataclass(frozen=True)
class PathCertificate:
    """A farsighted improving path: matchings plus the coalition per move.

    horizon is FARSIGHTED for full lookahead or an integer k >= 1 when the
    moving students only compare against the matching k steps ahead.
    """

    matchings: tuple
    steps: tuple
    horizon: object = FARSIGHTED

    def __post_init__(self):
        object.__setattr__(self, "matchings", tuple(self.matchings))
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def start(self) -> Matching:
        return self.matchings[0]

    @property
    def end(self) -> Matching:
        return self.matchings[-1]

    def __len__(self):
        return len(self.steps)


@dataclass
class StableSetReport:
    candidate: list
    internal_violations: list  # (mu, mu_prime) with mu_prime in phi(mu)
    external_violations: list  # mu outside with phi(mu) disjoint from the set
    verdict: str  # "stable" | "unstable" | "inconclusive"
    partial: bool = False


# --------------------------------------------------------------------------
# Move anatomy
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MoveAnatomy:
    """Derived facts about a single transition between two matchings."""

    joiners: tuple  # students newly holding a school seat
    leavers_unreplaced: tuple  # students losing a seat outside any replacement
    gaining_schools: tuple
    shrinking_schools: tuple  # schools losing students and gaining none
    replacement_ok: bool  # every over-capacity gain replaces leavers upward

    @property
    def movers(self) -> tuple:
        return self.joiners + self.leavers_unreplaced


def _move_anatomy(problem: Problem, a: Matching, b: Matching) -> MoveAnatomy:
    joiners = []
    movers = []
    for i in problem.students:
        xa, xb = a.school_of(i), b.school_of(i)
        if xa != xb:
            movers.append(i)
            if xb is not SELF:
                joiners.append(i)
    gains: dict = {}
    losses: dict = {}
    for i in movers:
        xa, xb = a.school_of(i), b.school_of(i)
        if xa is not SELF:
            losses.setdefault(xa, []).append(i)
        if xb is not SELF:
            gains.setdefault(xb, []).append(i)
    replacement_ok = True
    replaced: set = set()
    for s, new in gains.items():
        if len(a.roster(s)) + len(new) > problem.quota(s):
            left = losses.get(s, [])
            if _replacement_injection(problem, s, new, left):
                replaced.update(left)
            else:
                replacement_ok = False
    leavers_unreplaced = tuple(
        i
        for s, left in sorted(losses.items())
        for i in left
        if i not in replaced
    )
    shrinking = tuple(s for s in losses if s not in gains)
    return MoveAnatomy(
        joiners=tuple(joiners),
        leavers_unreplaced=leavers_unreplaced,
        gaining_schools=tuple(sorted(gains, key=problem.school_index)),
        shrinking_schools=tuple(sorted(shrinking, key=problem.school_index)),
        replacement_ok=replacement_ok,
    )


def _replacement_injection(
    problem: Problem, s: str, joiners: Sequence[str], leavers: Sequence[str]
) -> bool:
    """Each leaver matched to a distinct higher-priority joiner (greedy)."""
    if len(leavers) > len(joiners):
        return False
    left = sorted(leavers, key=lambda j: problem.priority_rank(s, j))
    joined = sorted(joiners, key=lambda j: problem.priority_rank(s, j))
    return all(
        problem.priority_rank(s, joined[t]) < problem.priority_rank(s, left[t])
        for t in range(len(left))
    )


def school_move_admissible(problem: Problem, s: str, a: Matching, b: Matching) -> bool:
    """Whether school s can accept its newcomers in the move a -> b.

    True outright when the old roster plus the newcomers fit the quota;
    otherwise every departing student must be replaced by a distinct
    newcomer with higher priority.
    """
    old, new = a.roster(s), b.roster(s)
    joiners = [i for i in new if i not in old]
    if len(old) + len(joiners) <= problem.quota(s):
        return True
    leavers = [i for i in old if i not in new]
    return _replacement_injection(problem, s, joiners, leavers)


def can_enforce(
    problem: Problem, a: Matching, b: Matching, coalition: Coalition
) -> bool:
    """Whether the coalition can transform matching a into matching b.

    For every school gaining a newcomer, the school and all its newcomers
    must be in the coalition.  For every school whose roster only shrinks,
    the school itself or all of its departing students must be in it.
    Extra members are permitted.
    """
    if a == b or coalition.is_empty():
        return False
    for s in problem.schools:
        old, new = a.roster(s), b.roster(s)
        if old == new:
            continue
        joiners = new - old
        if joiners:
            if s not in coalition.schools or not joiners <= coalition.students:
                return False
        else:
            leavers = old - new
            if s not in coalition.schools and not leavers <= coalition.students:
                return False
    return True


def _anchored_join_ok(problem: Problem, i: str, s: str, ref: Matching) -> bool:
    """Joining s is consistent with the lookahead matching ref for student i."""
    roster = ref.roster(s)
    if i in roster:
        return True
    return any(problem.higher_priority(s, i, j) for j in roster)


def find_enforcing_coalition(
    problem: Problem, a: Matching, b: Matching, ref: Matching
) -> Coalition | None:
    """A coalition of moving agents willing to enforce b over a, given ref.

    Returns None when no admissible move exists.  Every joiner must weakly
    prefer ref to her current seat and her new school must be anchored in
    ref (she holds a seat there in ref, or outranks someone who does);
    every unreplaced leaver must strictly prefer ref to the seat she gives
    up; some moving student must strictly prefer ref; and every
    over-capacity gain must replace each departing student with a
    higher-priority newcomer.
    """
    if a == b:
        return None
    anatomy = _move_anatomy(problem, a, b)
    if not anatomy.replacement_ok or not anatomy.movers:
        return None
    strict = False
    for i in anatomy.joiners:
        ra = problem.pref_rank(i, ref.school_of(i))
        rb = problem.pref_rank(i, a.school_of(i))
        if ra > rb:
            return None
        if ra < rb:
            strict = True
        if not _anchored_join_ok(problem, i, b.school_of(i), ref):
            return None
    for i in anatomy.leavers_unreplaced:
        ra = problem.pref_rank(i, ref.school_of(i))
        rb = problem.pref_rank(i, a.school_of(i))
        if ra >= rb:
            return None
        strict = True
    if not strict:
        return None
    students = frozenset(anatomy.joiners) | frozenset(anatomy.leavers_unreplaced)
    return Coalition(students=students, schools=frozenset(anatomy.gaining_schools))


# --------------------------------------------------------------------------
# Certificate validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PathViolation:
    step: int  # index of the offending move, -1 for structural problems
    condition: str

    def __str__(self):
        if self.step < 0:
            return self.condition
        return f"step {self.step}: {self.condition}"


def _validate(problem: Problem, cert: PathCertificate, k: int | None) -> PathViolation | None:
    mus = cert.matchings
    if len(mus) < 2:
        return PathViolation(-1, "path must contain at least two matchings")
    if len(set(mus)) != len(mus):
        return PathViolation(-1, "matchings not distinct")
    if len(cert.steps) != len(mus) - 1:
        return PathViolation(-1, "step count does not match matching count")
    last = len(mus) - 1
    for l, step in enumerate(cert.steps):
        if step.source != mus[l] or step.target != mus[l + 1]:
            return PathViolation(l, "step endpoints disagree with the matching sequence")
        coalition = step.coalition
        if not coalition.students:
            return PathViolation(l, "coalition has no student")
        if not can_enforce(problem, mus[l], mus[l + 1], coalition):
            return PathViolation(l, "coalition cannot enforce the move")
        look = mus[last] if k is None else mus[min(l + k, last)]
        strict = False
        for i in sorted(coalition.students):
            ra = problem.pref_rank(i, look.school_of(i))
            rb = problem.pref_rank(i, mus[l].school_of(i))
            if ra > rb:
                return PathViolation(l, f"student {i} does not weakly improve")
            if ra < rb:
                strict = True
        if not strict:
            return PathViolation(l, "no strict improver in the coalition")
        for s in sorted(coalition.schools):
            if not school_move_admissible(problem, s, mus[l], mus[l + 1]):
                return PathViolation(l, f"school {s} cannot admit its newcomers")
    return None


def validate_path(problem: Problem, cert: PathCertificate) -> PathViolation | None:
    """Check a full-lookahead certificate; None means it is valid."""
    return _validate(problem, cert, None)


def validate_path_horizon(problem: Problem, cert: PathCertificate) -> PathViolation | None:
    """Check a horizon-k certificate (students compare k steps ahead)."""
    k = cert.horizon
    if k == FARSIGHTED:
        return _validate(problem, cert, None)
    if not isinstance(k, int) or k < 1:
        return PathViolation(-1, f"invalid horizon {k!r}")
    return _validate(problem, cert, k)


# --------------------------------------------------------------------------
# Reachability search (full farsightedness)
# --------------------------------------------------------------------------

class _EdgeOracle:
    """Memoised per-move anatomy for fast edge tests against many targets.

    For a fixed lookahead matching the validity of a move depends only on
    its endpoints, so reachability equals plain graph reachability and any
    walk can be shortened to a sequence of distinct matchings.
    """

    def __init__(self, problem: Problem, universe: Sequence[Matching]):
        self.problem = problem
        self.universe = list(universe)
        self.index = {mu: k for k, mu in enumerate(self.universe)}
        self._rank = problem._pref_rank
        self._prio = problem._prio_rank
        self._vecs = [mu._assign for mu in self.universe]
        self._m = len(problem.schools)
        self._cache: dict = {}

    def _anatomy(self, xa: int, xb: int):
        key = (xa, xb)
        got = self._cache.get(key)
        if got is None:
            a, b = self.universe[xa], self.universe[xb]
            anatomy = _move_anatomy(self.problem, a, b)
            joiners = []
            leavers = []
            if anatomy.replacement_ok:
                va, vb = self._vecs[xa], self._vecs[xb]
                sidx = self.problem._sidx
                joiners = [
                    (sidx[i], vb[sidx[i]], va[sidx[i]]) for i in anatomy.joiners
                ]
                leavers = [(sidx[i], va[sidx[i]]) for i in anatomy.leavers_unreplaced]
            got = (anatomy.replacement_ok, tuple(joiners), tuple(leavers))
            self._cache[key] = got
        return got

    def ref_profile(self, ref_vec: tuple):
        """Per-school worst (largest) priority rank among ref's roster."""
        worst = [-1] * self._m
        for si, col in enumerate(ref_vec):
            if col < self._m:
                r = self._prio[col][si]
                if r > worst[col]:
                    worst[col] = r
        return worst

    def edge_ok(self, xa: int, xb: int, ref_vec: tuple, worst) -> bool:
        ok, joiners, leavers = self._anatomy(xa, xb)
        if not ok or not (joiners or leavers):
            return False
        rank = self._rank
        prio = self._prio
        strict = bool(leavers)
        for si, school, cur in joiners:
            row = rank[si]
            ra, rc = row[ref_vec[si]], row[cur]
            if ra > rc:
                return False
            if ra < rc:
                strict = True
            if ref_vec[si] != school and prio[school][si] >= worst[school]:
                return False
        for si, cur in leavers:
            row = rank[si]
            if row[ref_vec[si]] >= row[cur]:
                return False
        return strict

    def sources_reaching(self, target_idx: int) -> set[int]:
        """All universe indices from which the target is reachable."""
        ref_vec = self._vecs[target_idx]
        worst = self.ref_profile(ref_vec)
        n = len(self.universe)
        reached = {target_idx}
        frontier = [target_idx]
        while frontier:
            nxt = []
            for y in frontier:
                for x in range(n):
                    if x not in reached and self.edge_ok(x, y, ref_vec, worst):
                        reached.add(x)
                        nxt.append(x)
            frontier = nxt
        reached.discard(target_idx)
        return reached


def _universe(problem: Problem, universe, cap) -> list[Matching]:
    if universe is None:
        return enumerate_matchings(problem, cap=cap)
    return list(universe)


def phi(
    problem: Problem,
    mu: Matching,
    universe: Sequence[Matching] | None = None,
    cap: int = 10**5,
) -> set[Matching]:
    """All matchings reachable from mu by a farsighted improving path."""
    uni = _universe(problem, universe, cap)
    oracle = _EdgeOracle(problem, uni)
    if mu not in oracle.index:
        raise ValueError("matching not in the enumerated universe")
    src = oracle.index[mu]
    out = set()
    for t, target in enumerate(uni):
        if t == src:
            continue
        if src in oracle.sources_reaching(t):
            out.add(target)
    return out


def reachability_matrix(
    problem: Problem,
    universe: Sequence[Matching] | None = None,
    cap: int = 10**5,
):
    """numpy bool matrix R with R[x, t] true iff target t is in phi(x)."""
    import numpy as np

    uni = _universe(problem, universe, cap)
    oracle = _EdgeOracle(problem, uni)
    n = len(uni)
    R = np.zeros((n, n), dtype=bool)
    for t in range(n):
        for x in oracle.sources_reaching(t):
            R[x, t] = True
    return R, uni


# --------------------------------------------------------------------------
# Horizon-k reachability
# --------------------------------------------------------------------------

@dataclass
class HorizonResult:
    reachable: set
    partial: bool


def phi_horizon(
    problem: Problem,
    mu: Matching,
    k: int,
    depth_cap: int | None = None,
    universe: Sequence[Matching] | None = None,
    cap: int = 10**5,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> HorizonResult:
    """Matchings reachable by a horizon-k improving path of length <= depth_cap.

    Depth-first search over sequences of distinct matchings.  A move's
    student condition is settled only once the matching k steps later is
    appended (or the sequence ends), so conditions are re-checked lazily.
    The result is flagged partial when the depth cap or the node budget cut
    any branch.
    """
    if k < 1:
        raise ValueError("horizon must be >= 1")
    uni = _universe(problem, universe, cap)
    oracle = _EdgeOracle(problem, uni)
    if mu not in oracle.index:
        raise ValueError("matching not in the enumerated universe")
    if depth_cap is None:
        depth_cap = min(len(uni), DEFAULT_DEPTH_CAP)
    n = len(uni)
    vecs = oracle._vecs
    src = oracle.index[mu]
    reachable: set[int] = set()
    partial = False
    budget = node_budget
    profiles: dict = {}

    def movers_ok(xa: int, xb: int, look: int) -> bool:
        worst = profiles.get(look)
        if worst is None:
            worst = oracle.ref_profile(vecs[look])
            profiles[look] = worst
        return oracle.edge_ok(xa, xb, vecs[look], worst)

    def window_ok(path: list[int], final: bool) -> bool:
        # check every move whose lookahead window closed; when `final`,
        # remaining moves compare against the last matching
        L = len(path) - 1
        start = max(0, L - k) if not final else 0
        for l in range(start, L):
            look = path[min(l + k, L)]
            if not final and l + k > L:
                continue
            if not movers_ok(path[l], path[l + 1], look):
                return False
        return True

    def dfs(path: list[int], onpath: set[int]):
        nonlocal partial, budget
        if budget <= 0:
            partial = True
            return
        budget -= 1
        # certify the current endpoint as a target if all pending windows
        # close successfully against it
        if len(path) >= 2 and window_ok(path, final=True):
            reachable.add(path[-1])
        if len(path) - 1 >= depth_cap:
            partial = True  # a longer path might certify more targets
            return
        cur = path[-1]
        for y in range(n):
            if y in onpath:
                continue
            # the newest move's window is open; it is only screened against
            # feasibility of the move structure itself
            ok, joiners, leavers = oracle._anatomy(cur, y)
            if not ok or not (joiners or leavers):
                continue
            path.append(y)
            onpath.add(y)
            # moves whose window closes with this extension must hold
            L = len(path) - 1
            l = L - k
            if l < 0 or movers_ok(path[l], path[l + 1], path[L]):
                dfs(path, onpath)
            path.pop()
            onpath.discard(y)

    dfs([src], {src})
    return HorizonResult(
        reachable={uni[t] for t in reachable}, partial=partial
    )


# --------------------------------------------------------------------------
# Stable sets
# --------------------------------------------------------------------------

def check_stable_set(
    problem: Problem,
    candidate: Iterable[Matching],
    horizon=FARSIGHTED,
    universe: Sequence[Matching] | None = None,
    cap: int = 10**5,
    depth_cap: int | None = None,
) -> StableSetReport:
    """Internal/external stability report for a candidate set of matchings."""
    cand = sort_matchings(set(candidate))
    if not cand:
        raise ValueError("candidate set must be nonempty")
    uni = _universe(problem, universe, cap)
    partial = False
    if horizon == FARSIGHTED:
        phis = {}
        oracle = _EdgeOracle(problem, uni)
        reach_to: dict = {}
        for mu in cand:
            t = oracle.index[mu]
            reach_to[mu] = oracle.sources_reaching(t)
        internal = [
            (a, b)
            for a in cand
            for b in cand
            if a != b and oracle.index[a] in reach_to[b]
        ]
        cand_set = set(cand)
        external = []
        for x, mu in enumerate(uni):
            if mu in cand_set:
                continue
            if not any(x in reach_to[v] for v in cand):
                external.append(mu)
    else:
        k = int(horizon)
        results = {mu: phi_horizon(problem, mu, k, depth_cap, universe=uni) for mu in uni}
        partial = any(r.partial for r in results.values())
        cand_set = set(cand)
        internal = [
            (a, b) for a in cand for b in cand if a != b and b in results[a].reachable
        ]
        external = [
            mu
            for mu in uni
            if mu not in cand_set and not (results[mu].reachable & cand_set)
        ]
    ok = not internal and not external
    if ok and partial:
        verdict = "inconclusive"
    elif ok:
        verdict = "stable"
    else:
        verdict = "unstable"
    return StableSetReport(
        candidate=cand,
        internal_violations=internal,
        external_violations=sort_matchings(external),
        verdict=verdict,
        partial=partial,
    )


def find_singleton_stable_sets(
    problem: Problem,
    horizon=FARSIGHTED,
    universe: Sequence[Matching] | None = None,
    cap: int = 10**5,
) -> list[Matching]:
    """All matchings mu with {mu} a (horizon-k) farsighted stable set."""
    uni = _universe(problem, universe, cap)
    if horizon == FARSIGHTED:
        oracle = _EdgeOracle(problem, uni)
        out = []
        for t, mu in enumerate(uni):
            sources = oracle.sources_reaching(t)
            if len(sources) == len(uni) - 1:
                out.append(mu)
        return sort_matchings(out)
    out = []
    for mu in uni:
        if check_stable_set(problem, [mu], horizon, universe=uni).verdict == "stable":
            out.append(mu)
    return sort_matchings(out)


def find_stable_sets(
    problem: Problem,
    max_size: int = 3,
    horizon=FARSIGHTED,
    universe: Sequence[Matching] | None = None,
    cap: int = 10**5,
    subset_cap: int = 10**7,
) -> list[list[Matching]]:
    """All farsighted stable sets of size <= max_size (exhaustive search).

    Internal stability prunes the subset lattice: any pair connected by an
    improving path rules out every superset containing both.
    """
    import numpy as np
    from itertools import combinations
    from math import comb

    uni = _universe(problem, universe, cap)
    n = len(uni)
    total = sum(comb(n, r) for r in range(1, max_size + 1))
    if total > subset_cap:
        raise CapacityError(
            f"{total} candidate subsets exceed the cap of {subset_cap}"
        )
    R, _ = reachability_matrix(problem, universe=uni)
    order = sorted(range(n), key=lambda x: uni[x].literal())
    compatible = {
        (x, y)
        for x in range(n)
        for y in range(n)
        if x != y and not R[x, y] and not R[y, x]
    }
    results = []
    idx = np.arange(n)
    for size in range(1, max_size + 1):
        for combo in combinations(order, size):
            if any(
                (a, b) not in compatible
                for a, b in combinations(combo, 2)
            ):
                continue
            inside = np.zeros(n, dtype=bool)
            inside[list(combo)] = True
            covered = R[:, list(combo)].any(axis=1) | inside
            if covered.all():
                results.append([uni[x] for x in combo])
    return results
