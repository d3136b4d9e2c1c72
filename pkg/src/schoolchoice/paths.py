"""Constructive farsighted improving paths toward mechanism outcomes.

Each builder replays the trace of its mechanism, converting every trading
cycle (and, where applicable, every clinch round) into a short block of
enforceable moves:

* cycle insertion: cycle students grab a seat at the school pointing at
  them inside the cycle, evicting the lowest-priority occupant of a full
  school that holds none of them;
* vacate: the cycle students give those seats up together;
* rematch: they join the schools they point at, which now hold free seats.

Already-realised matches are skipped and no-op moves are elided.  A move
that would revisit an earlier matching truncates the loop instead, so the
emitted sequence always consists of distinct matchings.  Students whose
blocks have already been replayed are settled; evictions prefer unsettled
squatters so realised matches stay put.  When a simultaneous block move is
not enforceable (for instance a school losing two cycle students while
admitting one cannot satisfy the replacement condition), the builder falls
back to vacating the movers first, which restores one-in-one-out moves.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .model import SELF, Matching, Problem, SchoolChoiceError
from .mechanisms import Cycle, run_ct, run_ettc, run_fct, run_ttc
from .farsight import (
    FARSIGHTED,
    Coalition,
    MoveStep,
    PathCertificate,
    can_enforce,
    school_move_admissible,
)


class IdentityError(SchoolChoiceError):
    """The start matching already equals the construction target."""


class ConstructionError(SchoolChoiceError):
    """The replay could not complete an enforceable move sequence."""


@dataclass
class ConstructionLog:
    """Chronological record of the moves a builder emitted."""

    entries: list = field(default_factory=list)  # (phase, detail, matching)

    def add(self, phase: str, detail: str, mu: Matching):
        self.entries.append((phase, detail, mu))


class _PathAccumulator:
    def __init__(self, problem: Problem, start: Matching, final: Matching, log: ConstructionLog):
        self.problem = problem
        self.final = final
        self.matchings = [start]
        self.steps: list[MoveStep] = []
        self.positions = {start: 0}
        self.settled: set = set()
        self.log = log

    @property
    def current(self) -> Matching:
        return self.matchings[-1]

    def move_valid(self, target: Matching, students, schools) -> bool:
        """Would the validator accept this single move toward the target?"""
        problem = self.problem
        cur = self.current
        if target == cur:
            return True
        coalition = Coalition(frozenset(students), frozenset(schools))
        if not coalition.students or not can_enforce(problem, cur, target, coalition):
            return False
        strict = False
        for i in coalition.students:
            ra = problem.pref_rank(i, self.final.school_of(i))
            rc = problem.pref_rank(i, cur.school_of(i))
            if ra > rc:
                return False
            if ra < rc:
                strict = True
        if not strict:
            return False
        return all(
            school_move_admissible(problem, s, cur, target) for s in coalition.schools
        )

    def emit(self, target: Matching, students, schools, phase: str, detail: str = ""):
        cur = self.current
        if target == cur:
            return
        if target in self.positions:
            # the intervening moves form a loop; drop them
            pos = self.positions[target]
            for mu in self.matchings[pos + 1 :]:
                del self.positions[mu]
            del self.matchings[pos + 1 :]
            del self.steps[pos:]
            return
        coalition = Coalition(frozenset(students), frozenset(schools))
        self.steps.append(MoveStep(cur, target, coalition))
        self.matchings.append(target)
        self.positions[target] = len(self.matchings) - 1
        self.log.add(phase, detail, target)

    def shed_candidates(self, roster, s: str, count: int) -> list:
        """Occupants to evict from s, unsettled squatters first, each group
        lowest priority first."""

        def key(j):
            return (j in self.settled, -self.problem.priority_rank(s, j))

        return sorted(roster, key=key)[:count]

    def join_changes(self, moves: dict) -> dict:
        """Reassignments realising `moves` (student -> school), shedding
        occupants of any school pushed past quota."""
        cur = self.current
        changes = dict(moves)
        movers = set(moves)
        for s in set(moves.values()):
            staying = [j for j in cur.roster(s) if j not in movers]
            entering = sum(1 for i, t in moves.items() if t == s)
            need = entering + len(staying) - self.problem.quota(s)
            if need > 0:
                for j in self.shed_candidates(staying, s, need):
                    changes[j] = SELF
        return changes

    def certificate(self, horizon=FARSIGHTED) -> PathCertificate:
        return PathCertificate(tuple(self.matchings), tuple(self.steps), horizon)


def _vacate_self_bound(acc: _PathAccumulator, students, label: str):
    """Students destined to end unmatched give up their current seats."""
    for j in students:
        if acc.current.school_of(j) is not SELF:
            acc.emit(
                acc.current.reassign({j: SELF}), {j}, set(), label, f"unmatched {j}"
            )
        acc.settled.add(j)


def _cycle_block(acc: _PathAccumulator, cyc: Cycle, label: str):
    """Emit the insertion / vacate / rematch moves realising one cycle."""
    problem = acc.problem
    students = list(cyc.students)
    if cyc.is_self_cycle:
        _vacate_self_bound(acc, students, label)
        return
    targets = cyc.assignments()
    if all(acc.current.school_of(i) == targets[i] for i in students):
        acc.settled.update(students)
        return
    schools = set(cyc.schools)
    if len(students) == 1:
        # the school pointing at the student is the one she points back to
        i = students[0]
        s = targets[i]
        changes = acc.join_changes({i: s})
        acc.emit(acc.current.reassign(changes), {i}, {s}, label, f"cycle {cyc}")
        acc.settled.add(i)
        return
    inbound = cyc.inbound()

    def insertion() -> Matching:
        cur = acc.current
        changes = {i: inbound[i] for i in students}
        for s in cyc.schools:
            roster = cur.roster(s)
            if not (roster & set(students)) and len(roster) == problem.quota(s):
                worst = acc.shed_candidates(roster, s, 1)
                changes[worst[0]] = SELF
        return cur.reassign(changes)

    # insertion: everyone in the cycle takes the seat of the school pointing
    # at her; a full cycle school holding no cycle student sheds its
    # lowest-priority occupant
    mu1 = insertion()
    if acc.move_valid(mu1, set(students), schools):
        acc.emit(mu1, set(students), schools, label, f"insert {cyc}")
    else:
        # one school would lose several cycle students at once; let the
        # movers give up their seats first, then take the pointed-at seats
        acc.emit(
            acc.current.reassign({i: SELF for i in students}),
            set(students),
            set(),
            label,
            f"clear {cyc}",
        )
        acc.emit(insertion(), set(students), schools, label, f"insert {cyc}")
    # vacate: the cycle students free all their freshly taken seats at once
    acc.emit(
        acc.current.reassign({i: SELF for i in students}),
        set(students),
        set(),
        label,
        f"vacate {cyc}",
    )
    # rematch: everyone joins the school she points at inside the cycle
    changes = acc.join_changes({i: targets[i] for i in students})
    acc.emit(acc.current.reassign(changes), set(students), schools, label, f"rematch {cyc}")
    acc.settled.update(students)


def _alignment_block(acc: _PathAccumulator, clinches, label: str):
    """Moves aligning all unrealised clinched matches of a round."""
    todo = {i: s for i, s in clinches if acc.current.school_of(i) != s}
    if not todo:
        acc.settled.update(i for i, _ in clinches)
        return
    cur = acc.current
    mu1 = cur.reassign(acc.join_changes(todo))
    movers = set(todo)
    schools = set(todo.values())
    if acc.move_valid(mu1, movers, schools):
        acc.emit(mu1, movers, schools, label, f"clinch {sorted(todo.items())}")
    else:
        # a clincher leaving one clinch school for another can block the
        # one-move alignment; vacating the movers first restores it
        acc.emit(
            cur.reassign({i: SELF for i in todo}),
            movers,
            set(),
            label,
            f"clear {sorted(todo)}",
        )
        acc.emit(
            acc.current.reassign(acc.join_changes(todo)),
            movers,
            schools,
            label,
            f"clinch {sorted(todo.items())}",
        )
    acc.settled.update(i for i, _ in clinches)


def _finish(acc: _PathAccumulator, target: Matching, horizon=FARSIGHTED) -> PathCertificate:
    if acc.current != target:
        raise ConstructionError(
            f"replay ended at {acc.current.literal()!r} instead of the mechanism outcome"
        )
    return acc.certificate(horizon)


def build_path_to_ttc(
    problem: Problem, mu: Matching, log: ConstructionLog | None = None
) -> PathCertificate:
    """Improving path from mu to the top trading cycles outcome."""
    target, trace = run_ttc(problem)
    if mu == target:
        raise IdentityError("matching already equals the trading outcome")
    acc = _PathAccumulator(problem, mu, target, log or ConstructionLog())
    for step in trace.steps:
        for cyc in step.cycles:
            _cycle_block(acc, cyc, f"step {step.step}")
    return _finish(acc, target)


def build_path_to_fct(
    problem: Problem, mu: Matching, log: ConstructionLog | None = None
) -> PathCertificate:
    """Improving path from mu to the first clinch and trade outcome."""
    target, trace = run_fct(problem)
    if mu == target:
        raise IdentityError("matching already equals the clinch and trade outcome")
    acc = _PathAccumulator(problem, mu, target, log or ConstructionLog())
    for step in trace.steps:
        for rnd in step.clinch_rounds:
            _alignment_block(acc, rnd.clinches, f"step {step.step}")
        for cyc in step.cycles:
            _cycle_block(acc, cyc, f"step {step.step}")
    return _finish(acc, target)


def build_path_to_ct(
    problem: Problem, mu: Matching, log: ConstructionLog | None = None
) -> PathCertificate:
    """Improving path from mu to the clinch and trade outcome."""
    target, trace = run_ct(problem)
    if mu == target:
        raise IdentityError("matching already equals the clinch and trade outcome")
    acc = _PathAccumulator(problem, mu, target, log or ConstructionLog())
    for step in trace.steps:
        for rnd in step.clinch_rounds:
            _alignment_block(acc, rnd.clinches, f"step {step.step}")
        for cyc in step.cycles:
            _cycle_block(acc, cyc, f"step {step.step}")
    return _finish(acc, target)


def build_path_to_ettc(
    problem: Problem, mu: Matching, log: ConstructionLog | None = None
) -> PathCertificate:
    """Improving path from mu to the equitable top trading cycles outcome."""
    target, trace = run_ettc(problem)
    if mu == target:
        raise IdentityError("matching already equals the pairwise trading outcome")
    acc = _PathAccumulator(problem, mu, target, log or ConstructionLog())
    pending: dict = {}  # student -> final school, joined in one deferred move

    def fits_with_pending(i: str, s: str) -> bool:
        taken = len(acc.current.roster(s)) + sum(1 for t in pending.values() if t == s)
        return taken < problem.quota(s)

    def flush(label: str):
        todo = {i: s for i, s in pending.items() if acc.current.school_of(i) != s}
        acc.settled.update(pending)
        pending.clear()
        if not todo:
            return
        acc.emit(
            acc.current.reassign(acc.join_changes(todo)),
            set(todo),
            set(todo.values()),
            label,
            f"rematch {sorted(todo.items())}",
        )

    for step in trace.steps:
        label = f"step {step.step}"
        # students the round leaves unmatched give up any seat they hold
        self_bound = sorted(
            (i for i, a in step.matches.items() if a is SELF),
            key=problem.student_index,
        )
        if self_bound:
            flush(label)
            _vacate_self_bound(acc, self_bound, label)
        for pcyc in step.pair_cycles:
            # a student appearing in several cycles of one step is matched
            # once; later cycles only dissolve her remaining seats
            cyc_students = [
                i
                for i in dict.fromkeys(i for i, _ in pcyc)
                if i not in acc.settled and i not in pending
            ]
            if not cyc_students:
                continue
            finals = {i: step.matches[i] for i in cyc_students}
            if all(acc.current.school_of(i) == finals[i] for i in cyc_students):
                acc.settled.update(cyc_students)
                continue
            held: dict = {}
            for i, s in pcyc:
                held.setdefault(i, [])
                if s not in held[i]:
                    held[i].append(s)
            for i in held:
                held[i].sort(key=problem.school_index)
            first_seat = {i: held[i][0] for i in cyc_students}
            if (
                len(pcyc) == 1
                and first_seat[cyc_students[0]] == finals[cyc_students[0]]
                and acc.current.school_of(cyc_students[0]) is SELF
                and fits_with_pending(cyc_students[0], finals[cyc_students[0]])
            ):
                # a lone self-resolving pair folds into the deferred rematch
                pending[cyc_students[0]] = finals[cyc_students[0]]
                continue
            flush(label)
            # seat-taking move: each cycle student occupies the first school
            # of her held seats, full schools shedding enough low-priority
            # outside occupants
            moves = {i: first_seat[i] for i in cyc_students}
            movers = set(cyc_students)
            schools = set(first_seat.values())
            mu1 = acc.current.reassign(acc.join_changes(moves))
            if acc.move_valid(mu1, movers, schools):
                acc.emit(mu1, movers, schools, label, f"seat {sorted(moves.items())}")
            else:
                acc.emit(
                    acc.current.reassign({i: SELF for i in cyc_students}),
                    movers,
                    set(),
                    label,
                    "clear",
                )
                acc.emit(
                    acc.current.reassign(acc.join_changes(moves)),
                    movers,
                    schools,
                    label,
                    f"seat {sorted(moves.items())}",
                )
            if all(acc.current.school_of(i) == finals[i] for i in cyc_students):
                acc.settled.update(cyc_students)
                continue
            # vacate together
            acc.emit(
                acc.current.reassign({i: SELF for i in cyc_students}),
                set(cyc_students),
                set(),
                label,
                "vacate",
            )
            # students holding several seats free the remaining ones: a full
            # school is entered (displacing its weakest occupant) and left
            # again, except that a student reaching her own final school
            # simply stays
            seated = set()
            for i in cyc_students:
                for s in held[i][1:]:
                    roster = acc.current.roster(s)
                    if len(roster) < problem.quota(s):
                        continue
                    worst = acc.shed_candidates(roster, s, 1)[0]
                    acc.emit(
                        acc.current.reassign({i: s, worst: SELF}),
                        {i},
                        {s},
                        label,
                        f"hop {i}->{s}",
                    )
                    if s == finals[i]:
                        seated.add(i)
                        acc.settled.add(i)
                        break
                    acc.emit(
                        acc.current.reassign({i: SELF}),
                        {i},
                        set(),
                        label,
                        f"hop {i}<-{s}",
                    )
            for i in cyc_students:
                if i not in seated:
                    pending[i] = finals[i]
    flush("final")
    return _finish(acc, target)
