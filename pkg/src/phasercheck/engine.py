"""Backward reachability engine.

``check`` saturates the predecessor relation from a set of target
constraints, pruning with entailment (a kept constraint whose models cover
a candidate makes the candidate redundant; a candidate covering kept
constraints evicts them).  Strategies make the run terminate:

* control reachability: targets must be free (no finite upper bounds);
  constraints over more than ``k`` phasers are dropped.  Sound and
  complete for deciding reachability of control targets that never need
  more than ``k`` simultaneously tracked phasers.
* plain reachability: targets must be ``b``-good (every gap free or with
  uppers at most ``b``); drops constraints over more than ``k`` phasers
  or that are not ``b``-good.
* unrestricted: no pruning, but gives up after a budget of processed
  constraints with a distinct inconclusive verdict.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .concrete import Configuration, initial_config, step_choices, enabled_steps, apply_step
from .control import start_distances
from .pre import AtomicUnsupported, pre, program_suffixes
from .symbolic import (
    Constraint,
    constraint_order_key,
    entails,
    is_b_good,
    is_free,
    minimize,
    models,
    _seq_multiset,
)


@dataclass(frozen=True)
class ControlReachability:
    k: int


@dataclass(frozen=True)
class PlainReachability:
    k: int
    b: int


@dataclass(frozen=True)
class Unrestricted:
    budget: int = 100000


@dataclass(frozen=True)
class Trace:
    """Forward witness: constraints[0] is modeled by the initial
    configuration, constraints[-1] is a target, and stmts[i] steps from
    models of constraints[i] into models of constraints[i+1]."""

    constraints: tuple
    stmts: tuple


@dataclass(frozen=True)
class Reachable:
    trace: Trace


@dataclass(frozen=True)
class Unreachable:
    processed: int


@dataclass(frozen=True)
class BudgetExhausted:
    processed: int


def static_task_bound(program):
    """Upper bound on concurrently existing tasks, or None if unbounded
    (spawn sites under loops, or recursive spawning)."""
    from .syntax import Asynch, If, NextBlock, While

    def sites(seq, looped):
        out = []
        for s in seq:
            if isinstance(s, Asynch):
                out.append((s.task, looped))
            elif isinstance(s, While):
                out.extend(sites(s.body, True))
            elif isinstance(s, (If, NextBlock)):
                out.extend(sites(s.body, looped))
        return out

    memo = {}
    active = set()

    def total(name):
        if name in memo:
            return memo[name]
        if name in active:
            return None  # recursive spawning
        active.add(name)
        n = 1
        for callee, looped in sites(program.task(name).body, False):
            if looped:
                active.discard(name)
                return None
            sub = total(callee)
            if sub is None:
                active.discard(name)
                return None
            n += sub
        active.discard(name)
        memo[name] = n
        return n

    return total("main")


def static_phaser_bound(program):
    """Upper bound on phasers any run can create (columns never disappear),
    or None if unbounded (creation sites under loops or recursion)."""
    from .syntax import Asynch, If, NewPhaser, NextBlock, While

    def sites(seq, looped):
        out = []
        for s in seq:
            if isinstance(s, NewPhaser):
                out.append((None, looped))
            elif isinstance(s, Asynch):
                out.append((s.task, looped))
            elif isinstance(s, While):
                out.extend(sites(s.body, True))
            elif isinstance(s, (If, NextBlock)):
                out.extend(sites(s.body, looped))
        return out

    memo = {}
    active = set()

    def total(name):
        if name in memo:
            return memo[name]
        if name in active:
            return None  # recursive spawning: give up on a bound
        active.add(name)
        n = 0
        for callee, looped in sites(program.task(name).body, False):
            if callee is None:
                if looped:
                    active.discard(name)
                    return None
                n += 1
                continue
            sub = total(callee)
            if sub is None or (looped and sub > 0):
                active.discard(name)
                return None
            n += 0 if looped else sub
        active.discard(name)
        memo[name] = n
        return n

    return total("main")


def _keep(strategy, phi: Constraint) -> bool:
    if isinstance(strategy, ControlReachability):
        return phi.dimension() <= strategy.k
    if isinstance(strategy, PlainReachability):
        return phi.dimension() <= strategy.k and is_b_good(phi, strategy.b)
    return True


def check(program, targets, strategy, progress=None):
    """Decide whether any target constraint has a reachable model.

    Returns Reachable (with a trace), Unreachable, or BudgetExhausted
    (unrestricted strategy only).  Raises AtomicUnsupported for programs
    with barrier-body statements and ValueError when the targets do not
    satisfy the strategy's requirements.
    """
    if program.is_atomic():
        raise AtomicUnsupported("program contains a barrier block body")
    if program.uses_modes():
        raise ValueError(
            "symbolic checking requires SIG_WAIT-only registrations; "
            "rewrite SIG/WAIT modes or use the concrete explorer"
        )
    if isinstance(strategy, ControlReachability):
        bad = [phi for phi in targets if not is_free(phi)]
        if bad:
            raise ValueError("control reachability requires free targets")
    if isinstance(strategy, PlainReachability):
        bad = [phi for phi in targets if not is_b_good(phi, strategy.b)]
        if bad:
            raise ValueError(
                f"plain reachability requires {strategy.b}-good targets"
            )
    suffixes = program_suffixes(program)
    init = initial_config(program)
    task_bound = static_task_bound(program)
    phaser_bound = static_phaser_bound(program)
    start_dist = start_distances(program)

    def within_static(phi: Constraint) -> bool:
        # constraints needing more concurrent tasks or created phasers
        # than any run of the program can have are unsatisfiable
        if task_bound is not None and phi.n_tasks > task_bound:
            return False
        return phaser_bound is None or phi.n_phasers <= phaser_bound

    def forward_work(phi: Constraint) -> int:
        # total forward control steps still separating the constraint's
        # pinned sequences from task starts; 0 iff every pinned sequence
        # is a task body, which is where the initial configuration lives
        return sum(
            start_dist.get(s, 10**6) for s in phi.seqs if s is not None
        )
    budget = strategy.budget if isinstance(strategy, Unrestricted) else None

    # best-first toward the initial configuration: constraints whose
    # pinned sequences need the least forward work are popped first, with
    # smaller, more general constraints breaking ties
    working = []  # heap of (priority, tiebreak, item); items may be stale
    queued = set()  # constraints currently scheduled
    counter = 0
    n_visited = 0

    # the kept antichain, bucketed by the set of pinned control sequences:
    # a covering constraint can only live in a bucket whose sequence set is
    # a subset of the candidate's, so most buckets are skipped wholesale
    buckets: dict = {}

    def covered(phi) -> bool:
        sset = _seq_multiset(phi)
        nt, np_ = phi.n_tasks, phi.n_phasers
        for key, items in buckets.items():
            if not key <= sset:
                continue
            for psi, pt, pp, _, _ in items:
                if pt <= nt and pp <= np_ and entails(psi, phi):
                    return True
        return False

    # constraints ever inserted or found covered: the store only ever gets
    # weaker (evictions replace items by covering ones), so an exact
    # repeat can be skipped without scanning the store again
    settled = set()

    def insert(phi, tc, ts):
        nonlocal counter, n_visited
        if phi in settled:
            return
        settled.add(phi)
        if covered(phi):
            return
        sset = _seq_multiset(phi)
        nt, np_ = phi.n_tasks, phi.n_phasers
        for key, items in buckets.items():
            if not sset <= key:
                continue
            kept = [
                it
                for it in items
                if not (nt <= it[1] and np_ <= it[2] and entails(phi, it[0]))
            ]
            if len(kept) != len(items):
                queued.difference_update(
                    it[0] for it in items if it[0] not in {k[0] for k in kept}
                )
                n_visited -= len(items) - len(kept)
                items[:] = kept
        item = (phi, nt, np_, tc, ts)
        buckets.setdefault(sset, []).append(item)
        n_visited += 1
        queued.add(phi)
        counter += 1
        heapq.heappush(
            working,
            (
                (forward_work(phi), nt, phi.dimension(), counter),
                counter,
                (phi, tc, ts),
            ),
        )

    for phi in sorted(targets, key=constraint_order_key):
        if not within_static(phi):
            continue
        insert(phi, (phi,), ())
    processed = 0
    while working:
        _, _, (phi, tc, ts) = heapq.heappop(working)
        if phi not in queued:
            continue  # evicted while scheduled
        queued.discard(phi)
        processed += 1
        if progress is not None:
            progress(
                {
                    "event": "pop",
                    "processed": processed,
                    "working": len(queued),
                    "visited": n_visited,
                    "dimension": phi.dimension(),
                }
            )
        if budget is not None and processed > budget:
            return BudgetExhausted(processed)
        if models(init, phi):
            return Reachable(Trace(tc, ts))
        preds = sorted(
            pre(phi, program, suffixes),
            key=lambda sp: (str(sp[0]), constraint_order_key(sp[1])),
        )
        # most environment-role predecessors are already covered by the
        # popped constraint itself; discard them before the global store
        preds = [
            (s, psi)
            for s, psi in preds
            if _keep(strategy, psi)
            and within_static(psi)
            and not entails(phi, psi)
        ]
        # local antichain reduction before touching the global store
        kept_cs = set(minimize([psi for _, psi in preds]))
        for stmt, psi in preds:
            if psi in kept_cs:
                insert(psi, (psi,) + tc, (stmt,) + ts)
    return Unreachable(processed)


# ---------------------------------------------------------------------------
# Trace replay


@dataclass
class TraceReport:
    ok: bool
    failed_stage: int = -1
    message: str = ""


def validate_trace(program, trace: Trace, max_stage_depth: int = 4) -> TraceReport:
    """Replay a trace concretely: starting from the initial configuration,
    each trace statement must be fireable (possibly a few times) so that
    some resulting configuration models the next trace constraint."""
    init = initial_config(program)
    if not models(init, trace.constraints[0]):
        return TraceReport(False, 0, "initial configuration does not model the first constraint")
    frontier = [init]
    for i, stmt in enumerate(trace.stmts):
        target = trace.constraints[i + 1]
        reached = []
        seen = set()
        layer = list(frontier)
        for _ in range(max_stage_depth):
            nxt = []
            for c in layer:
                for t, head in enabled_steps(c, program):
                    if head != stmt:
                        continue
                    for choice in step_choices(c, program, t, head):
                        out = apply_step(c, program, t, choice)
                        if not isinstance(out, Configuration):
                            continue
                        if out in seen:
                            continue
                        seen.add(out)
                        nxt.append(out)
                        if models(out, target):
                            reached.append(out)
            if reached:
                break
            layer = nxt
            if not layer:
                break
        if not reached:
            return TraceReport(
                False,
                i + 1,
                f"could not fire {stmt} into a model of constraint {i + 1}",
            )
        frontier = reached
    return TraceReport(True)
