import random

import pytest

from schoolchoice import (
    FARSIGHTED,
    Coalition,
    PathCertificate,
    Problem,
    SELF,
    can_enforce,
    check_stable_set,
    enumerate_matchings,
    find_enforcing_coalition,
    find_singleton_stable_sets,
    find_stable_sets,
    phi,
    phi_horizon,
    run_ct,
    run_ttc,
    school_move_admissible,
    sort_matchings,
    validate_path,
    validate_path_horizon,
)
from schoolchoice.farsight import MoveStep

from conftest import matching_of, random_problem


@pytest.fixture(scope="module")
def walkthrough(trading_instance, trading_goldens):
    """The five-matching improving path of the trading instance."""
    p = trading_instance
    mus = [
        trading_goldens["walkthrough_start"],
        matching_of(p, i1="s1", i2="s2", i3="s1", i4="self"),
        matching_of(p, i1="s1", i2="self", i3="self", i4="self"),
        matching_of(p, i1="s1", i2="s1", i3="s2", i4="self"),
        trading_goldens["ttc"],
    ]
    coalitions = [
        Coalition({"i2", "i3"}, {"s1", "s2"}),
        Coalition({"i2", "i3"}, set()),
        Coalition({"i2", "i3"}, {"s1", "s2"}),
        Coalition({"i4"}, {"s3"}),
    ]
    steps = tuple(
        MoveStep(mus[k], mus[k + 1], coalitions[k]) for k in range(4)
    )
    return PathCertificate(tuple(mus), steps, FARSIGHTED)


class TestCanEnforce:
    def test_walkthrough_first_move(self, trading_instance, walkthrough):
        # i4 is pushed out without belonging to the coalition
        step = walkthrough.steps[0]
        assert can_enforce(trading_instance, step.source, step.target, step.coalition)

    def test_leavers_alone_can_destroy_their_matches(self, trading_instance, walkthrough):
        step = walkthrough.steps[1]
        assert can_enforce(trading_instance, step.source, step.target, step.coalition)

    def test_missing_mandatory_members(self, trading_instance, walkthrough):
        step = walkthrough.steps[0]
        assert not can_enforce(
            trading_instance, step.source, step.target, Coalition({"i2"}, set())
        )

    def test_gaining_school_must_join(self, trading_instance, walkthrough):
        step = walkthrough.steps[0]
        assert not can_enforce(
            trading_instance, step.source, step.target,
            Coalition({"i2", "i3"}, {"s2"}),
        )


class TestSchoolMoveAdmissible:
    def test_replacement_by_higher_priority(self, trading_instance, trading_goldens):
        a = trading_goldens["ttc"]  # s1 holds i1, i2
        b = matching_of(trading_instance, i1="s1", i2="self", i3="s1", i4="s3")
        assert school_move_admissible(trading_instance, "s1", a, b)

    def test_spare_capacity(self, trading_instance):
        a = matching_of(trading_instance, i1="s1", i2="self", i3="self", i4="self")
        b = matching_of(trading_instance, i1="s1", i2="s1", i3="self", i4="self")
        assert school_move_admissible(trading_instance, "s1", a, b)

    def test_lower_priority_newcomer_rejected(self, trading_instance):
        a = matching_of(trading_instance, i1="s1", i2="self", i3="s1", i4="self")
        b = matching_of(trading_instance, i1="s1", i2="s1", i3="self", i4="self")
        # i2 (rank 4 at s1) cannot replace i3 (rank 2)
        assert not school_move_admissible(trading_instance, "s1", a, b)


class TestFindEnforcingCoalition:
    def test_walkthrough_first_move(self, trading_instance, trading_goldens, walkthrough):
        step = walkthrough.steps[0]
        found = find_enforcing_coalition(
            trading_instance, step.source, step.target, trading_goldens["ttc"]
        )
        assert found is not None
        assert can_enforce(trading_instance, step.source, step.target, found)
        # every member willing: weak improvement toward the end, one strict
        ranks = [
            (
                trading_instance.pref_rank(i, trading_goldens["ttc"].school_of(i)),
                trading_instance.pref_rank(i, step.source.school_of(i)),
            )
            for i in found.students
        ]
        assert all(ra <= rc for ra, rc in ranks)
        assert any(ra < rc for ra, rc in ranks)

    def test_no_strict_improver(self, trading_instance, trading_goldens, walkthrough):
        step = walkthrough.steps[0]
        assert (
            find_enforcing_coalition(
                trading_instance, step.source, step.target, step.source
            )
            is None
        )

    def test_nobody_volunteers_to_lose_a_seat(self, trading_instance, trading_goldens):
        mu5 = matching_of(trading_instance, i1="s1", i2="s2", i3="s1", i4="self")
        assert (
            find_enforcing_coalition(
                trading_instance, trading_goldens["ttc"], mu5, mu5
            )
            is None
        )


class TestPhi:
    def test_deferred_acceptance_reaches_only_trading_outcome(
        self, trading_instance, trading_goldens, trading_universe
    ):
        result = phi(trading_instance, trading_goldens["da"], universe=trading_universe)
        assert result == {trading_goldens["ttc"]}

    def test_trading_outcome_reaches_exactly_four(
        self, trading_instance, trading_goldens, trading_universe
    ):
        result = phi(trading_instance, trading_goldens["ttc"], universe=trading_universe)
        assert result == {
            trading_goldens["detour1"],
            trading_goldens["detour2"],
            trading_goldens["detour3"],
            trading_goldens["detour4"],
        }
        assert trading_goldens["detour5"] not in result

    def test_never_contains_the_source(self, trading_instance, trading_goldens, trading_universe):
        for key in ("ttc", "da", "ia"):
            mu = trading_goldens[key]
            assert mu not in phi(trading_instance, mu, universe=trading_universe)

    def test_detours_reach_deferred_acceptance(
        self, trading_instance, trading_goldens, trading_reachability
    ):
        R, index = trading_reachability
        da = index[trading_goldens["da"]]
        for key in ("detour1", "detour2", "detour3", "detour4", "detour5"):
            assert R[index[trading_goldens[key]], da]

    def test_relabeling_invariance(self, trading_instance, trading_goldens):
        p = trading_instance
        smap = {"i1": "a", "i2": "b", "i3": "c", "i4": "d"}
        cmap = {"s1": "x", "s2": "y", "s3": "z"}
        q = Problem(
            tuple(smap[i] for i in p.students),
            tuple(cmap[s] for s in p.schools),
            {cmap[s]: p.quota(s) for s in p.schools},
            {smap[i]: tuple(cmap[s] for s in p.preferences[i]) for i in p.students},
            {cmap[s]: tuple(smap[i] for i in p.priorities[s]) for s in p.schools},
        )
        mu = trading_goldens["da"]
        mu_q = q.matching(
            {smap[i]: (SELF if mu.school_of(i) is SELF else cmap[mu.school_of(i)]) for i in p.students}
        )
        relabeled = {
            frozenset(
                (i, "self" if m.school_of(i) is SELF else m.school_of(i))
                for i in q.students
            )
            for m in phi(q, mu_q)
        }
        expected = {
            frozenset(
                (smap[i], "self" if m.school_of(i) is SELF else cmap[m.school_of(i)])
                for i in p.students
            )
            for m in phi(p, mu)
        }
        assert relabeled == expected


class TestValidatePath:
    def test_walkthrough_accepted(self, trading_instance, walkthrough):
        assert validate_path(trading_instance, walkthrough) is None

    def test_reversed_path_rejected(self, trading_instance, walkthrough):
        mus = tuple(reversed(walkthrough.matchings))
        steps = tuple(
            MoveStep(mus[k], mus[k + 1], walkthrough.steps[-1 - k].coalition)
            for k in range(len(mus) - 1)
        )
        cert = PathCertificate(mus, steps, FARSIGHTED)
        violation = validate_path(trading_instance, cert)
        assert violation is not None
        assert "improve" in violation.condition or "enforce" in violation.condition

    def test_repeated_matching_rejected(self, trading_instance, walkthrough):
        mus = walkthrough.matchings + (walkthrough.matchings[0],)
        steps = walkthrough.steps + (
            MoveStep(mus[-2], mus[-1], Coalition({"i2"}, set())),
        )
        cert = PathCertificate(mus, steps, FARSIGHTED)
        violation = validate_path(trading_instance, cert)
        assert violation is not None
        assert "distinct" in violation.condition


class TestValidatePathHorizon:
    def test_three_ahead_suffices(self, trading_instance, walkthrough):
        cert = PathCertificate(walkthrough.matchings, walkthrough.steps, 3)
        assert validate_path_horizon(trading_instance, cert) is None

    def test_one_ahead_fails_at_the_vacate_move(self, trading_instance, walkthrough):
        cert = PathCertificate(walkthrough.matchings, walkthrough.steps, 1)
        violation = validate_path_horizon(trading_instance, cert)
        assert violation is not None
        assert violation.step == 1

    def test_long_horizon_reduces_to_full_lookahead(self, trading_instance, walkthrough):
        cert = PathCertificate(walkthrough.matchings, walkthrough.steps, 99)
        assert validate_path_horizon(trading_instance, cert) is None


class TestPhiHorizon:
    def test_three_ahead_reaches_trading_outcome(
        self, trading_instance, trading_goldens, trading_universe
    ):
        result = phi_horizon(
            trading_instance, trading_goldens["da"], 3,
            depth_cap=12, universe=trading_universe, node_budget=200_000,
        )
        assert trading_goldens["ttc"] in result.reachable

    def test_huge_horizon_equals_full_lookahead(self):
        p = Problem(
            ("i1", "i2"), ("s1",), {"s1": 1},
            {"i1": ("s1",), "i2": ("s1",)},
            {"s1": ("i2", "i1")},
        )
        universe = enumerate_matchings(p)
        for mu in universe:
            full = phi(p, mu, universe=universe)
            res = phi_horizon(p, mu, k=len(universe), universe=universe)
            assert not res.partial
            assert res.reachable == full

    def test_depth_cap_one_is_myopic(self, trading_instance, trading_goldens, trading_universe):
        res = phi_horizon(
            trading_instance, trading_goldens["da"], 1,
            depth_cap=1, universe=trading_universe,
        )
        for mu in res.reachable:
            assert (
                find_enforcing_coalition(
                    trading_instance, trading_goldens["da"], mu, mu
                )
                is not None
            )


class TestStableSets:
    def test_singleton_trading_outcome_stable(
        self, trading_instance, trading_goldens, trading_universe
    ):
        report = check_stable_set(
            trading_instance, [trading_goldens["ttc"]], universe=trading_universe
        )
        assert report.verdict == "stable"

    def test_deferred_acceptance_singleton_fails_externally(
        self, trading_instance, trading_goldens, trading_universe
    ):
        report = check_stable_set(
            trading_instance, [trading_goldens["da"]], universe=trading_universe
        )
        assert report.verdict == "unstable"
        assert trading_goldens["ttc"] in report.external_violations
        assert not report.internal_violations

    def test_immediate_acceptance_singleton_fails_externally(
        self, trading_instance, trading_goldens, trading_universe
    ):
        report = check_stable_set(
            trading_instance, [trading_goldens["ia"]], universe=trading_universe
        )
        assert report.verdict == "unstable"
        assert trading_goldens["da"] in report.external_violations

    def test_find_singletons(self, trading_instance, trading_goldens, trading_universe):
        found = find_singleton_stable_sets(trading_instance, universe=trading_universe)
        assert found == [trading_goldens["ttc"]]

    def test_iterated_clinch_outcome_is_singleton_stable(self, iterated_clinch_instance):
        mu, _ = run_ct(iterated_clinch_instance)
        found = find_singleton_stable_sets(iterated_clinch_instance)
        assert mu in found

    def test_two_agent_instance(self):
        p = Problem(("i1",), ("s1",), {"s1": 1}, {"i1": ("s1",)}, {"s1": ("i1",)})
        found = find_singleton_stable_sets(p)
        assert [m.literal() for m in found] == ["i1->s1"]

    def test_find_sets_up_to_three(
        self, trading_instance, trading_goldens, trading_universe
    ):
        found = find_stable_sets(trading_instance, max_size=3, universe=trading_universe)
        assert [trading_goldens["ttc"]] in found
        assert all(trading_goldens["da"] not in group for group in found)
        assert all(
            not {trading_goldens["da"], trading_goldens["ia"]} <= set(group)
            for group in found
        )


# ---------------------------------------------------------------------------
# Independent reachability oracle: depth-first enumeration of simple paths,
# re-deriving every move condition from scratch.
# ---------------------------------------------------------------------------

def oracle_edge(problem, a, b, ref):
    if a == b:
        return False
    joiners, gains, losses = [], {}, {}
    for i in problem.students:
        xa, xb = a.school_of(i), b.school_of(i)
        if xa == xb:
            continue
        if xb is not SELF:
            joiners.append(i)
            gains.setdefault(xb, []).append(i)
        if xa is not SELF:
            losses.setdefault(xa, []).append(i)
    replaced = set()
    for s, incoming in gains.items():
        old = a.roster(s)
        if len(old) + len(incoming) > problem.quota(s):
            left = sorted(losses.get(s, []), key=lambda j: problem.priority_rank(s, j))
            come = sorted(incoming, key=lambda j: problem.priority_rank(s, j))
            if len(left) > len(come):
                return False
            for t in range(len(left)):
                if problem.priority_rank(s, come[t]) >= problem.priority_rank(s, left[t]):
                    return False
            replaced.update(left)
    strict = False
    for i in joiners:
        ra = problem.pref_rank(i, ref.school_of(i))
        rc = problem.pref_rank(i, a.school_of(i))
        if ra > rc:
            return False
        if ra < rc:
            strict = True
        s = b.school_of(i)
        roster = ref.roster(s)
        if i not in roster and not any(
            problem.higher_priority(s, i, j) for j in roster
        ):
            return False
    for s, left in losses.items():
        # anyone giving up a seat without being replaced acts voluntarily,
        # which takes a strict gain at the end relative to the seat lost
        for i in left:
            if i in replaced:
                continue
            ra = problem.pref_rank(i, ref.school_of(i))
            rc = problem.pref_rank(i, a.school_of(i))
            if ra >= rc:
                return False
            strict = True
    return strict


def oracle_phi(problem, universe, mu):
    out = set()
    for ref in universe:
        if ref == mu:
            continue
        stack = [(mu, frozenset([mu]))]
        found = False
        while stack and not found:
            cur, seen = stack.pop()
            for nxt in universe:
                if nxt in seen or not oracle_edge(problem, cur, nxt, ref):
                    continue
                if nxt == ref:
                    found = True
                    break
                stack.append((nxt, seen | {nxt}))
        if found:
            out.add(ref)
    return out


class TestReachabilityOracle:
    def test_search_matches_simple_path_enumeration(self):
        rng = random.Random(61)
        instances = 0
        while instances < 50:
            p = random_problem(rng, max_students=3, max_schools=3)
            universe = enumerate_matchings(p, cap=100)
            if len(universe) > 8:
                continue
            instances += 1
            for mu in universe:
                assert phi(p, mu, universe=universe) == oracle_phi(p, universe, mu)

    def test_trading_instance_spotcheck(self, trading_instance, trading_goldens, trading_universe):
        # spot-check one edge of the walkthrough against the raw conditions
        start = trading_goldens["walkthrough_start"]
        nxt = matching_of(trading_instance, i1="s1", i2="s2", i3="s1", i4="self")
        assert oracle_edge(trading_instance, start, nxt, trading_goldens["ttc"])
