import random

import pytest

from schoolchoice import (
    FARSIGHTED,
    PathCertificate,
    build_path_to_ct,
    build_path_to_ettc,
    build_path_to_fct,
    build_path_to_ttc,
    enumerate_matchings,
    run_ct,
    run_ettc,
    run_fct,
    run_mechanism,
    run_ttc,
    validate_path,
    validate_path_horizon,
)
from schoolchoice.model import SELF
from schoolchoice.paths import ConstructionLog, IdentityError

from conftest import matching_of, random_problem

BUILDERS = {
    "ttc": (build_path_to_ttc, run_ttc),
    "fct": (build_path_to_fct, run_fct),
    "ct": (build_path_to_ct, run_ct),
    "ettc": (build_path_to_ettc, run_ettc),
}


class TestWalkthroughSequences:
    def test_trading_path(self, trading_instance, trading_goldens):
        cert = build_path_to_ttc(trading_instance, trading_goldens["walkthrough_start"])
        assert [m.literal() for m in cert.matchings] == [
            "i1->s1, i2->s2, i3->s3, i4->s1",
            "i1->s1, i2->s2, i3->s1, i4->self",
            "i1->s1, i2->self, i3->self, i4->self",
            "i1->s1, i2->s1, i3->s2, i4->self",
            "i1->s1, i2->s1, i3->s2, i4->s3",
        ]
        coalitions = [
            (sorted(st.coalition.students), sorted(st.coalition.schools))
            for st in cert.steps
        ]
        assert coalitions == [
            (["i2", "i3"], ["s1", "s2"]),
            (["i2", "i3"], []),
            (["i2", "i3"], ["s1", "s2"]),
            (["i4"], ["s3"]),
        ]

    def test_clinch_path(self, clinch_small_instance):
        start = matching_of(clinch_small_instance, i1="s2", i2="s1", i3="s1")
        cert = build_path_to_fct(clinch_small_instance, start)
        assert [m.literal() for m in cert.matchings] == [
            "i1->s2, i2->s1, i3->s1",
            "i1->self, i2->s1, i3->s2",
            "i1->s1, i2->s1, i3->s2",
        ]
        coalitions = [
            (sorted(st.coalition.students), sorted(st.coalition.schools))
            for st in cert.steps
        ]
        assert coalitions == [(["i3"], ["s2"]), (["i1"], ["s1"])]

    def test_iterated_clinch_path(self, iterated_clinch_instance):
        start = matching_of(iterated_clinch_instance, i1="s2", i2="s1", i3="s1", i4="s3")
        cert = build_path_to_ct(iterated_clinch_instance, start)
        assert [m.literal() for m in cert.matchings] == [
            "i1->s2, i2->s1, i3->s1, i4->s3",
            "i1->self, i2->s1, i3->s2, i4->s3",
            "i1->s1, i2->s1, i3->s2, i4->s3",
        ]

    def test_seat_endowment_path(self, seat_endowment_instance):
        start = matching_of(seat_endowment_instance, i1="s1", i2="s3", i3="s2", i4="s1")
        cert = build_path_to_ettc(seat_endowment_instance, start)
        assert [m.literal() for m in cert.matchings] == [
            "i1->s1, i2->s3, i3->s2, i4->s1",
            "i1->s2, i2->s1, i3->self, i4->s1",
            "i1->self, i2->self, i3->self, i4->self",
            "i1->s1, i2->s3, i3->s1, i4->s2",
        ]
        coalitions = [
            (sorted(st.coalition.students), sorted(st.coalition.schools))
            for st in cert.steps
        ]
        assert coalitions == [
            (["i1", "i2", "i4"], ["s1", "s2"]),
            (["i1", "i2", "i4"], []),
            (["i1", "i2", "i3", "i4"], ["s1", "s2", "s3"]),
        ]


class TestBuilderBasics:
    def test_identity_rejected(self, trading_instance):
        target, _ = run_ttc(trading_instance)
        with pytest.raises(IdentityError):
            build_path_to_ttc(trading_instance, target)

    def test_single_alignment_move(self, clinch_small_instance):
        target, _ = run_fct(clinch_small_instance)
        start = target.reassign({"i1": SELF})
        cert = build_path_to_fct(clinch_small_instance, start)
        assert len(cert.steps) == 1
        assert cert.end == target

    def test_single_completion_move(self, seat_endowment_instance):
        target, _ = run_ettc(seat_endowment_instance)
        start = target.reassign({"i3": SELF})
        cert = build_path_to_ettc(seat_endowment_instance, start)
        assert len(cert.steps) == 1
        assert sorted(cert.steps[0].coalition.students) == ["i3"]
        assert sorted(cert.steps[0].coalition.schools) == ["s1"]

    def test_log_moves_appear_in_order(self, trading_instance, trading_goldens):
        log = ConstructionLog()
        cert = build_path_to_ttc(
            trading_instance, trading_goldens["walkthrough_start"], log
        )
        logged = [m for _, _, m in log.entries]
        pos = 0
        for mu in cert.matchings[1:]:
            pos = logged.index(mu, pos) + 1  # raises if out of order


def exhaustive_instance_check(problem, universe):
    for name, (builder, runner) in BUILDERS.items():
        target, trace = runner(problem)
        n_cycles = sum(
            len(st.cycles) + len(st.pair_cycles) for st in trace.steps
        )
        n_alignments = sum(len(st.clinch_rounds) for st in trace.steps)
        bound = 3 * n_cycles + n_alignments + 1
        for mu in universe:
            if mu == target:
                continue
            cert = builder(problem, mu)
            assert cert.end == target, (name, mu.literal())
            assert validate_path(problem, cert) is None, (name, mu.literal())
            assert len(cert.steps) <= bound, (name, mu.literal())


class TestExhaustiveOverWorkedInstances:
    def test_trading_instance(self, trading_instance, trading_universe):
        exhaustive_instance_check(trading_instance, trading_universe)

    def test_clinch_small_instance(self, clinch_small_instance):
        exhaustive_instance_check(
            clinch_small_instance, enumerate_matchings(clinch_small_instance)
        )

    def test_iterated_clinch_instance(self, iterated_clinch_instance):
        exhaustive_instance_check(
            iterated_clinch_instance, enumerate_matchings(iterated_clinch_instance)
        )

    def test_seat_endowment_instance(self, seat_endowment_instance):
        exhaustive_instance_check(
            seat_endowment_instance, enumerate_matchings(seat_endowment_instance)
        )


class TestHorizonProperties:
    def test_trading_paths_validate_three_ahead(self, trading_instance, trading_universe):
        target, _ = run_ttc(trading_instance)
        for mu in trading_universe:
            if mu == target:
                continue
            cert = build_path_to_ttc(trading_instance, mu)
            bounded = PathCertificate(cert.matchings, cert.steps, 3)
            assert validate_path_horizon(trading_instance, bounded) is None

    def test_one_ahead_fails_on_the_walkthrough(self, trading_instance, trading_goldens):
        cert = build_path_to_ttc(trading_instance, trading_goldens["walkthrough_start"])
        bounded = PathCertificate(cert.matchings, cert.steps, 1)
        assert validate_path_horizon(trading_instance, bounded) is not None


class TestRandomInstances:
    def test_builders_on_sampled_instances(self):
        rng = random.Random(4242)
        checked = 0
        while checked < 25:
            p = random_problem(rng, max_students=4, max_schools=3)
            universe = enumerate_matchings(p, cap=3000)
            if len(universe) > 130:
                continue
            checked += 1
            for name, (builder, runner) in BUILDERS.items():
                target, _ = runner(p)
                for mu in universe:
                    if mu == target:
                        continue
                    cert = builder(p, mu)
                    assert cert.end == target, (name, p, mu.literal())
                    assert validate_path(p, cert) is None, (name, p, mu.literal())
