"""Backward predecessor transformers over symbolic constraints.

``pre`` computes, for a constraint and every possible executing task (each
tracked task plus one fresh environment task), the constraints describing
the configurations that reach a model of the input in one statement step.
The union is exact up to transitive statement steps: it contains all
one-step predecessors and every model of an output reaches a model of the
input.

Atomic barrier bodies are rejected: their whole-body macro step cannot be
captured exactly by per-statement reversal.
"""

from __future__ import annotations

import itertools

from .control import head_successors, unrolled_suffixes
from .symbolic import (
    ANY,
    FREE_BOUNDS,
    INF,
    NO_VAR,
    OPT_FREE,
    Constraint,
    Gap,
    canonical_constraint,
    constraint_valid,
)
from .syntax import (
    Assert,
    Assign,
    Asynch,
    Drop,
    Exit,
    NewPhaser,
    NextBlock,
    Signal,
    Wait,
    While,
    If,
    cond_outcomes,
    cond_vars,
)


class AtomicUnsupported(Exception):
    """Raised when a barrier block statement is encountered: the atomic
    body step has no exact per-statement reversal."""


# ---------------------------------------------------------------------------
# Small structural helpers


def _with(phi: Constraint, seqs=None, gaps=None, egaps=None, bv=None) -> Constraint:
    return Constraint(
        bv=phi.bv if bv is None else tuple(bv),
        seqs=phi.seqs if seqs is None else tuple(seqs),
        gaps=phi.gaps if gaps is None else tuple(tuple(r) for r in gaps),
        egaps=phi.egaps if egaps is None else tuple(egaps),
    )


def _set_gap(gaps, t, p, g):
    rows = [list(r) for r in gaps]
    rows[t][p] = g
    return rows


def _pinned_columns(phi: Constraint, x: int, var: str) -> list:
    return [
        p for p in range(phi.n_phasers) if phi.gaps[x][p].var == var
    ]


def _registered_columns(phi: Constraint, x: int, var: str) -> list:
    """Columns on which x's command on ``var`` may act: a column pinning
    the variable wins; otherwise any registered wildcard column."""
    pinned = _pinned_columns(phi, x, var)
    if pinned:
        return [p for p in pinned if phi.gaps[x][p].bounds is not None]
    return [
        p
        for p in range(phi.n_phasers)
        if phi.gaps[x][p].var == ANY and phi.gaps[x][p].bounds is not None
    ]


def _untracked_allowed(phi: Constraint, x: int, var: str) -> bool:
    return not _pinned_columns(phi, x, var)


def _materialize_column(phi: Constraint, x: int, var: str):
    """Add a column for a phaser the constraint did not track: the
    executing task is registered freely, every other tracked task gets an
    optional free cell (registered or not, either way unconstrained) and
    the environment is unconstrained."""
    rows = [list(r) + [OPT_FREE] for r in phi.gaps]
    rows[x][-1] = Gap(var, FREE_BOUNDS)
    return [_with(phi, gaps=rows, egaps=phi.egaps + ((0, 0),))]


def _seq_set(phi: Constraint, x: int, seq) -> Constraint:
    seqs = list(phi.seqs)
    seqs[x] = seq
    return _with(phi, seqs=seqs)


# ---------------------------------------------------------------------------
# Per-statement backward transformers.  Each takes the post-state
# constraint (with the executing row's control already matched) and
# returns pre-state constraints *without* touching the control sequence;
# the driver installs the pre control sequence afterwards.


def _pre_signal(phi: Constraint, x: int, st: Signal) -> list:
    out = []
    for q in _registered_columns(phi, x, st.var):
        lw, ls, uw, us = phi.gaps[x][q].bounds
        # same level: the signal moved s from one below
        if us >= 1:
            g = Gap(st.var, (lw, max(ls - 1, 0), uw, us - 1))
            out.append(_with(phi, gaps=_set_gap(phi.gaps, x, q, g)))
        # shifted level: before the signal the level sat one lower
        if ls == 0:
            rows = [list(r) for r in phi.gaps]
            ok = True
            for t in range(phi.n_tasks):
                g = rows[t][q]
                if g.bounds is None:
                    continue
                glw, gls, guw, gus = g.bounds
                if guw - 1 < 0:
                    if t != x and g.opt:
                        # the registered branch dies under the shift;
                        # only the unregistered branch survives
                        rows[t][q] = Gap(g.var, None)
                        continue
                    ok = False
                    break
                if t == x:
                    rows[t][q] = Gap(st.var, (max(glw - 1, 0), gls, guw - 1, gus))
                else:
                    rows[t][q] = Gap(
                        g.var, (max(glw - 1, 0), gls + 1, guw - 1, gus + 1), g.opt
                    )
            if ok:
                ew, es = phi.egaps[q]
                egaps = list(phi.egaps)
                egaps[q] = (max(ew - 1, 0), es + 1)
                out.append(_with(phi, gaps=rows, egaps=egaps))
    if _untracked_allowed(phi, x, st.var):
        out.extend(_materialize_column(phi, x, st.var))
    return out


def _pre_wait(phi: Constraint, x: int, st: Wait) -> list:
    out = []
    for q in _registered_columns(phi, x, st.var):
        lw, ls, uw, us = phi.gaps[x][q].bounds
        g = Gap(st.var, (lw + 1, ls, uw + 1, us))
        out.append(_with(phi, gaps=_set_gap(phi.gaps, x, q, g)))
    if _untracked_allowed(phi, x, st.var):
        for psi in _materialize_column(phi, x, st.var):
            rows = _set_gap(psi.gaps, x, psi.n_phasers - 1, Gap(st.var, (1, 0, INF, INF)))
            out.append(_with(psi, gaps=rows))
    return out


def _pre_drop(phi: Constraint, x: int, st: Drop) -> list:
    out = []
    pinned = _pinned_columns(phi, x, st.var)
    for q in range(phi.n_phasers):
        g = phi.gaps[x][q]
        # the executor ends up unregistered: definite and optional cells
        # qualify, a certain registration does not
        if (g.bounds is not None and not g.opt) or g.var not in (st.var, ANY):
            continue
        if pinned and q not in pinned:
            continue
        base = _set_gap(phi.gaps, x, q, Gap(st.var, FREE_BOUNDS))
        out.append(_with(phi, gaps=base))
        # level shifted up: the dropped task's wait sat above every level
        # admissible for the remaining registrations
        delta_max = 0
        for t in range(phi.n_tasks):
            gb = phi.gaps[t][q].bounds
            if t == x or gb is None:
                continue
            delta_max = max(delta_max, gb[1])
            if gb[3] != INF:
                delta_max = max(delta_max, gb[3])
        delta_max = max(delta_max, phi.egaps[q][1])
        for delta in range(1, delta_max + 1):
            rows = [list(r) for r in phi.gaps]
            ok = True
            for t in range(phi.n_tasks):
                gt = rows[t][q]
                if gt.bounds is None:
                    continue
                glw, gls, guw, gus = gt.bounds
                if t == x:
                    continue
                if gus != INF and gus - delta < 0:
                    if gt.opt:
                        rows[t][q] = Gap(gt.var, None)
                        continue
                    ok = False
                    break
                rows[t][q] = Gap(
                    gt.var,
                    (glw + delta, max(gls - delta, 0), guw + delta, gus - delta),
                    gt.opt,
                )
            if not ok:
                continue
            rows[x][q] = Gap(st.var, FREE_BOUNDS)
            ew, es = phi.egaps[q]
            egaps = list(phi.egaps)
            egaps[q] = (ew + delta, max(es - delta, 0))
            out.append(_with(phi, gaps=rows, egaps=egaps))
    if _untracked_allowed(phi, x, st.var):
        out.extend(_materialize_column(phi, x, st.var))
    return out


def _rename_variants(phi: Constraint, x: int, var: str) -> list:
    """Backward renaming for a fresh-phaser step: a column showing the
    executing task unbound may have carried the rebound variable before."""
    out = [phi]
    for r in range(phi.n_phasers):
        g = phi.gaps[x][r]
        if g.var == NO_VAR:
            out.append(
                _with(
                    phi, gaps=_set_gap(phi.gaps, x, r, Gap(var, g.bounds, g.opt))
                )
            )
    return out


def _pre_newphaser(phi: Constraint, x: int, st: NewPhaser) -> list:
    out = []
    for q in range(phi.n_phasers):
        g = phi.gaps[x][q]
        if g.var not in (st.var, ANY) or g.bounds is None:
            continue
        lw, ls, uw, us = g.bounds
        if lw != 0 or ls != 0:
            continue  # fresh phaser starts with both distances pinned to 0
        if any(
            (phi.gaps[t][q].bounds is not None and not phi.gaps[t][q].opt)
            or phi.gaps[t][q].var not in (NO_VAR, ANY)
            for t in range(phi.n_tasks)
            if t != x
        ):
            # a fresh phaser has only its creator registered, and only the
            # creator's variable can name it
            continue
        if any(
            phi.gaps[x][r].var == st.var
            for r in range(phi.n_phasers)
            if r != q
        ):
            continue
        dropped = _with(
            phi,
            gaps=[
                [row[p] for p in range(phi.n_phasers) if p != q]
                for row in phi.gaps
            ],
            egaps=[phi.egaps[p] for p in range(phi.n_phasers) if p != q],
        )
        out.extend(_rename_variants(dropped, x, st.var))
    if _untracked_allowed(phi, x, st.var):
        out.extend(_rename_variants(phi, x, st.var))
    return out


def _merge_bounds(a, b):
    lw = max(a[0], b[0])
    ls = max(a[1], b[1])
    uw = min(a[2], b[2])
    us = min(a[3], b[3])
    if lw > uw or ls > us or (uw == INF) != (us == INF):
        return None
    return (lw, ls, uw, us)


def _arg_column_choices(phi: Constraint, x: int, args) -> list:
    """Per spawn argument, either a tracked column index or None for an
    untracked phaser; distinct arguments use distinct columns."""
    per_arg = []
    for v in args:
        cols = _registered_columns(phi, x, v)
        opts = [(v, q) for q in cols]
        if _untracked_allowed(phi, x, v):
            opts.append((v, None))
        if not opts:
            return []
        per_arg.append(opts)
    out = []
    for combo in itertools.product(*per_arg):
        used = [q for _, q in combo if q is not None]
        if len(set(used)) == len(used):
            out.append(combo)
    return out


def _pre_asynch(phi: Constraint, x: int, st: Asynch, program) -> list:
    callee = program.task(st.task)
    out = []
    for combo in _arg_column_choices(phi, x, st.args):
        # materialize untracked argument phasers first
        bases = [phi]
        cols = []
        for v, q in combo:
            if q is not None:
                cols.append(q)
                continue
            new_bases = []
            for b in bases:
                new_bases.extend(_materialize_column(b, x, v))
            bases = new_bases
            cols.append(-1)  # placeholder: filled per base below
        for base in bases:
            # untracked args occupy the freshly appended columns in order
            fresh = phi.n_phasers
            arg_cols = []
            for (v, q), c in zip(combo, cols):
                if c == -1:
                    arg_cols.append(fresh)
                    fresh += 1
                else:
                    arg_cols.append(c)
            out.extend(
                _pre_asynch_on(base, x, st, callee, arg_cols)
            )
    return out


def _pre_asynch_on(phi: Constraint, x: int, st: Asynch, callee, arg_cols) -> list:
    out = []
    # pin x's variable on each argument column
    pinned = [list(r) for r in phi.gaps]
    for v, q in zip(st.args, arg_cols):
        g = pinned[x][q]
        pinned[x][q] = Gap(v, g.bounds)
    phi = _with(phi, gaps=pinned)

    # case 1: the spawned task is a tracked row y
    for y in range(phi.n_tasks):
        if y == x:
            continue
        if phi.seqs[y] is not None and phi.seqs[y] != callee.body:
            continue
        rows = [list(r) for r in phi.gaps]
        ok = True
        for p in range(phi.n_phasers):
            gy = rows[y][p]
            if p in arg_cols:
                formal = callee.params[arg_cols.index(p)]
                if gy.bounds is None or gy.var not in (formal, ANY):
                    ok = False
                    break
                merged = _merge_bounds(rows[x][p].bounds, gy.bounds)
                if merged is None:
                    ok = False
                    break
                rows[x][p] = Gap(rows[x][p].var, merged)
            else:
                # the spawned task holds no registration beyond the
                # argument phasers; optional cells take their
                # unregistered branch
                if gy.bounds is not None and not gy.opt:
                    ok = False
                    break
                if gy.var not in (NO_VAR, ANY):
                    ok = False
                    break
        if not ok:
            continue
        psi = Constraint(
            bv=phi.bv,
            seqs=tuple(s for t, s in enumerate(phi.seqs) if t != y),
            gaps=tuple(tuple(rows[t]) for t in range(phi.n_tasks) if t != y),
            egaps=phi.egaps,
        )
        out.append((psi, x - 1 if y < x else x))

    # case 2: the spawned task is an environment task: the parent's phase
    # at spawn time must satisfy the environment lower bounds
    rows = [list(r) for r in phi.gaps]
    ok = True
    for p in arg_cols:
        gx = rows[x][p]
        ew, es = phi.egaps[p]
        merged = _merge_bounds(gx.bounds, (ew, es, INF, INF))
        if merged is None:
            ok = False
            break
        rows[x][p] = Gap(gx.var, merged)
    if ok:
        out.append((_with(phi, gaps=rows), x))
    return out


def _valuations(names):
    names = sorted(names)
    for bits in itertools.product((False, True), repeat=len(names)):
        yield dict(zip(names, bits))


def _bv_compatible(phi: Constraint, program, val: dict, skip=()) -> bool:
    for name, b in val.items():
        if name in skip:
            continue
        i = program.bool_vars.index(name)
        if phi.bv[i] is not None and phi.bv[i] != b:
            return False
    return True


def _bv_pinned(phi: Constraint, program, val: dict, clear=()) -> tuple:
    bv = list(phi.bv)
    for name, b in val.items():
        bv[program.bool_vars.index(name)] = b
    for name in clear:
        bv[program.bool_vars.index(name)] = None
    return tuple(bv)


def _pre_branch(phi: Constraint, program, cond, want: bool) -> list:
    """Condition heads (while/if guards and passing asserts) pin the
    variables the condition reads to valuations that can take the
    required value."""
    out = []
    for val in _valuations(cond_vars(cond)):
        if want not in cond_outcomes(cond, val):
            continue
        if not _bv_compatible(phi, program, val):
            continue
        out.append(_with(phi, bv=_bv_pinned(phi, program, val)))
    return out


def _pre_assign(phi: Constraint, program, st: Assign) -> list:
    out = []
    bi = program.bool_vars.index(st.var)
    for val in _valuations(cond_vars(st.cond)):
        if not _bv_compatible(phi, program, val, skip=(st.var,)):
            continue
        results = {
            r
            for r in cond_outcomes(st.cond, val)
            if phi.bv[bi] is None or phi.bv[bi] == r
        }
        if not results:
            continue
        clear = () if st.var in val else (st.var,)
        out.append(
            _with(phi, bv=_bv_pinned(phi, program, val, clear=clear))
        )
    return out


# ---------------------------------------------------------------------------
# Driver


_SUFFIX_CACHE: dict = {}


def program_suffixes(program) -> frozenset:
    # keyed by the program value, not id(): ids are reused after collection
    if program not in _SUFFIX_CACHE:
        _SUFFIX_CACHE[program] = unrolled_suffixes(program)
    return _SUFFIX_CACHE[program]


def _env_materializations(phi: Constraint, post_seq) -> list:
    """Extend the constraint with a row for a previously-untracked task.

    After the step the new task is either an environment task (per tracked
    phaser unregistered or satisfying the environment lower bounds, which
    an optional cell expresses directly), or it coincides with a tracked
    row: the task-to-row map may send several concrete tasks to the same
    row, so the executor can share a compatible row's constraints."""
    row = tuple(
        Gap(ANY, (phi.egaps[p][0], phi.egaps[p][1], INF, INF), True)
        for p in range(phi.n_phasers)
    )
    rows = [row]
    for y in range(phi.n_tasks):
        if phi.seqs[y] is None or phi.seqs[y] == post_seq:
            rows.append(phi.gaps[y])
    out = []
    seen = set()
    for r in rows:
        if r in seen:
            continue
        seen.add(r)
        out.append(
            Constraint(
                bv=phi.bv,
                seqs=phi.seqs + (post_seq,),
                gaps=phi.gaps + (r,),
                egaps=phi.egaps,
            )
        )
    return out


def pre_stmt(phi: Constraint, program, x: int, stmt, branch) -> list:
    """Backward transformer for one statement fired by tracked row ``x``
    (control sequences untouched).  Returns (constraint, executor row)
    pairs: spawning steps remove a row, shifting the executor's index."""
    if isinstance(stmt, NextBlock):
        raise AtomicUnsupported(str(stmt))
    if isinstance(stmt, Asynch):
        return _pre_asynch(phi, x, stmt, program)
    if isinstance(stmt, Signal):
        results = _pre_signal(phi, x, stmt)
    elif isinstance(stmt, Wait):
        results = _pre_wait(phi, x, stmt)
    elif isinstance(stmt, Drop):
        results = _pre_drop(phi, x, stmt)
    elif isinstance(stmt, NewPhaser):
        results = _pre_newphaser(phi, x, stmt)
    elif isinstance(stmt, Assign):
        results = _pre_assign(phi, program, stmt)
    elif isinstance(stmt, Assert):
        results = _pre_branch(phi, program, stmt.cond, True)
    elif isinstance(stmt, (While, If)):
        results = _pre_branch(phi, program, stmt.cond, branch)
    elif isinstance(stmt, Exit):
        results = [phi]
    else:
        raise TypeError(f"no backward transformer for {stmt!r}")
    return [(psi, x) for psi in results]


def pre(phi: Constraint, program, suffixes=None) -> list:
    """All (statement, predecessor constraint) pairs over every executing
    role: each tracked task plus a fresh environment task."""
    if suffixes is None:
        suffixes = program_suffixes(program)
    results = []
    seen = set()

    def emit(stmt, psi):
        if not constraint_valid(psi):
            return
        psi = canonical_constraint(psi)
        key = (str(stmt), psi)
        if key in seen:
            return
        seen.add(key)
        results.append((stmt, psi))

    ordered = sorted(suffixes, key=lambda s: (len(s), tuple(str(x) for x in s)))
    for s_pre in ordered:
        if not s_pre:
            continue
        for hs in head_successors(s_pre):
            if isinstance(hs.stmt, NextBlock):
                raise AtomicUnsupported(str(hs.stmt))
            # tracked roles
            for x in range(phi.n_tasks):
                if phi.seqs[x] is not None and phi.seqs[x] != hs.next_seq:
                    continue
                for psi, xr in pre_stmt(phi, program, x, hs.stmt, hs.branch):
                    emit(hs.stmt, _seq_set(psi, xr, s_pre))
            # environment role
            for ext in _env_materializations(phi, hs.next_seq):
                u = ext.n_tasks - 1
                for psi, ur in pre_stmt(ext, program, u, hs.stmt, hs.branch):
                    emit(hs.stmt, _seq_set(psi, ur, s_pre))
    return results


def preserves_freeness_check(phi: Constraint, program, suffixes=None) -> list:
    """For a free constraint, return the non-free predecessor constraints
    produced by ``pre`` (expected empty: backward steps keep freeness)."""
    from .symbolic import is_free

    assert is_free(phi)
    return [
        (stmt, psi) for stmt, psi in pre(phi, program, suffixes) if not is_free(psi)
    ]
