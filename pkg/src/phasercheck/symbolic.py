"""Symbolic constraints over phaser configurations.

A constraint describes an upward-closed-modulo-shift family of
configurations.  Per tracked task and tracked phaser it stores a *gap*:
either "not registered" or interval bounds on the distance between the
task's wait/signal values and a per-phaser existential level ``l``:

    lw <= l - w <= uw        ls <= s - l <= us

Upper bounds are either both finite or both infinite; a gap with infinite
uppers is *free*.  Tasks of a configuration not captured by the tracked
rows are environment tasks: per tracked phaser, ``egap = (ew, es)`` gives
lower bounds ``ew <= l - w`` and ``es <= s - l`` that every registered
environment task must satisfy.
"""

from __future__ import annotations

import itertools
import shlex
from dataclasses import dataclass

from .control import seq_order_key
from .syntax import ControlSeq, seq_to_str

INF = float("inf")
ANY = "*"
NO_VAR = "-"

FREE_BOUNDS = (0, 0, INF, INF)


@dataclass(frozen=True)
class Gap:
    """One (task, phaser) cell: variable name pattern plus either None
    (not registered) or interval bounds (lw, ls, uw, us).

    With ``opt`` set the cell is *optionally registered*: it denotes the
    union of "not registered" and "registered within bounds".  Optional
    cells arise when a backward step starts tracking a phaser the
    constraint knew nothing about: keeping the two registration outcomes
    in one cell avoids splitting the constraint per tracked task."""

    var: str
    bounds: object  # None | (lw, ls, uw, us)
    opt: bool = False

    def is_nreg(self) -> bool:
        return self.bounds is None

    def is_free(self) -> bool:
        return self.bounds is None or (
            self.bounds[2] == INF and self.bounds[3] == INF
        )

    def is_bounded(self, b) -> bool:
        return self.bounds is None or (
            self.bounds[2] <= b and self.bounds[3] <= b
        )


NREG = Gap(ANY, None)
FREE = Gap(ANY, FREE_BOUNDS)
OPT_FREE = Gap(ANY, FREE_BOUNDS, True)


def gap_valid(g: Gap) -> bool:
    if g.bounds is None:
        return not g.opt
    lw, ls, uw, us = g.bounds
    if lw < 0 or ls < 0:
        return False
    if (uw == INF) != (us == INF):
        return False
    return lw <= uw and ls <= us


@dataclass(frozen=True)
class Constraint:
    bv: tuple  # bool | None (= *) per program bool variable
    seqs: tuple  # ControlSeq | None (= *) per tracked task
    gaps: tuple  # gaps[task][phaser] -> Gap
    egaps: tuple  # (ew, es) per tracked phaser

    @property
    def n_tasks(self) -> int:
        return len(self.seqs)

    @property
    def n_phasers(self) -> int:
        return len(self.egaps)

    def dimension(self) -> int:
        return self.n_phasers


def _constraint_hash(self) -> int:
    h = self.__dict__.get("_hash")
    if h is None:
        h = hash((self.bv, self.seqs, self.gaps, self.egaps))
        object.__setattr__(self, "_hash", h)
    return h


# hashing a constraint walks every nested statement tuple; engine stores
# hash the same instances over and over, so cache per instance
Constraint.__hash__ = _constraint_hash


def constraint_valid(phi: Constraint) -> bool:
    if phi.n_tasks == 0:
        return False
    if len(phi.gaps) != phi.n_tasks:
        return False
    for row in phi.gaps:
        if len(row) != phi.n_phasers:
            return False
        if not all(gap_valid(g) for g in row):
            return False
    return all(ew >= 0 and es >= 0 for ew, es in phi.egaps)


def is_free(phi: Constraint) -> bool:
    return all(g.is_free() for row in phi.gaps for g in row)


def is_b_good(phi: Constraint, b) -> bool:
    return all(g.is_free() or g.is_bounded(b) for row in phi.gaps for g in row)


def classify(phi: Constraint, b) -> str:
    """"free", "bounded" (all non-free gaps within b), or "unbounded"."""
    if is_free(phi):
        return "free"
    if is_b_good(phi, b):
        return "bounded"
    return "unbounded"


# ---------------------------------------------------------------------------
# Membership: configuration models constraint


def models(c, phi: Constraint) -> bool:
    """Whether the concrete configuration satisfies the constraint."""
    for pb, cb in zip(phi.bv, c.bv):
        if pb is not None and pb != cb:
            return False
    n_tc, n_pc = c.n_tasks, c.n_phasers
    n_tp, n_pp = phi.n_tasks, phi.n_phasers
    if n_tc < n_tp or n_pc < n_pp:
        return False
    # candidate concrete tasks per tracked task (control-sequence match)
    options = []
    for t in range(n_tc):
        opts = [-1]  # environment role
        for j in range(n_tp):
            if phi.seqs[j] is None or phi.seqs[j] == c.seqs[t]:
                opts.append(j)
        options.append(opts)
    for pi_sel in itertools.permutations(range(n_pc), n_pp):
        for assign in itertools.product(*options):
            if set(a for a in assign if a >= 0) != set(range(n_tp)):
                continue  # surjectivity onto tracked tasks
            if _levels_ok(c, phi, pi_sel, assign):
                return True
    return False


def _levels_ok(c, phi: Constraint, pi_sel, assign) -> bool:
    for j in range(phi.n_phasers):
        p = pi_sel[j]
        lo, hi = 0, INF
        ew, es = phi.egaps[j]
        for t in range(c.n_tasks):
            var_c, reg = c.phases[t][p]
            a = assign[t]
            if a >= 0:
                g = phi.gaps[a][j]
                if g.var != ANY and g.var != var_c:
                    return False
                if reg is None:
                    if g.bounds is not None and not g.opt:
                        return False
                    continue
                if g.bounds is None:
                    return False
                lw, ls, uw, us = g.bounds
                if reg.wait is not None:
                    lo = max(lo, reg.wait + lw)
                    hi = min(hi, reg.wait + uw)
                if reg.sig is not None:
                    lo = max(lo, reg.sig - us)
                    hi = min(hi, reg.sig - ls)
            elif reg is not None:
                if reg.wait is not None:
                    lo = max(lo, reg.wait + ew)
                if reg.sig is not None:
                    hi = min(hi, reg.sig - es)
        if lo > hi:
            return False
    return True


# ---------------------------------------------------------------------------
# Entailment: entails(a, b) implies every model of b is a model of a


def gap_leq(ga: Gap, gb: Gap) -> bool:
    """Gap order: a is the weaker (wildcard-bearing) side."""
    if ga.var != gb.var and ga.var != ANY:
        return False
    if ga.bounds is None:
        # definitely-unregistered only covers definitely-unregistered
        return gb.bounds is None
    if ga.opt:
        # optional cell covers unregistered outright; registered models
        # must fit its bounds
        if gb.bounds is None:
            return True
    elif gb.bounds is None or gb.opt:
        # a certain registration never covers b's unregistered models
        return False
    lw_a, ls_a, uw_a, us_a = ga.bounds
    lw_b, ls_b, uw_b, us_b = gb.bounds
    return lw_a <= lw_b and ls_a <= ls_b and uw_b <= uw_a and us_b <= us_a


def _seq_multiset(phi: Constraint):
    hit = phi.__dict__.get("_seqset")
    if hit is None:
        hit = frozenset(s for s in phi.seqs if s is not None)
        object.__setattr__(phi, "_seqset", hit)
    return hit


def _entails_uncached(pa: Constraint, pb: Constraint) -> bool:
    for a, b in zip(pa.bv, pb.bv):
        if a is not None and a != b:
            return False
    n_ta, n_pa = pa.n_tasks, pa.n_phasers
    n_tb, n_pb = pb.n_tasks, pb.n_phasers
    if n_tb < n_ta or n_pb < n_pa:
        return False
    # necessary: every concrete control sequence pinned on the a side
    # must appear among b's pinned sequences
    if not _seq_multiset(pa) <= _seq_multiset(pb):
        return False
    for pi_sel in itertools.permutations(range(n_pb), n_pa):
        if any(
            pa.egaps[ja][0] > pb.egaps[pi_sel[ja]][0]
            or pa.egaps[ja][1] > pb.egaps[pi_sel[ja]][1]
            for ja in range(n_pa)
        ):
            continue
        # cell compatibility is independent per task pair, so the task
        # correspondence reduces to a small matching problem: pick one
        # distinct witness row of b per row of a (surjectivity), while
        # every other row of b must be coverable by some row of a or by
        # the environment bounds.
        compat = []
        env_ok = []
        for tb in range(n_tb):
            row = []
            for ta in range(n_ta):
                ok = pa.seqs[ta] is None or pa.seqs[ta] == pb.seqs[tb]
                if ok:
                    for ja in range(n_pa):
                        if not gap_leq(pa.gaps[ta][ja], pb.gaps[tb][pi_sel[ja]]):
                            ok = False
                            break
                row.append(ok)
            compat.append(row)
            ok = True
            for ja in range(n_pa):
                gb = pb.gaps[tb][pi_sel[ja]]
                if gb.bounds is None:
                    continue
                ew_a, es_a = pa.egaps[ja]
                if ew_a > gb.bounds[0] or es_a > gb.bounds[1]:
                    ok = False
                    break
            env_ok.append(ok)
        if any(not env_ok[tb] and not any(compat[tb]) for tb in range(n_tb)):
            continue
        if _surjection_exists(compat, env_ok, n_ta, n_tb):
            return True
    return False


def _surjection_exists(compat, env_ok, n_ta, n_tb) -> bool:
    # match each a-row to a distinct compatible b-row; unmatched b-rows
    # must individually be absorbable (already checked above)
    used = [False] * n_tb

    def match(ta: int) -> bool:
        if ta == n_ta:
            return True
        for tb in range(n_tb):
            if used[tb] or not compat[tb][ta]:
                continue
            used[tb] = True
            if match(ta + 1):
                return True
            used[tb] = False
        return False

    return match(0)


_ENTAILS_CACHE: dict = {}


def entails(pa: Constraint, pb: Constraint) -> bool:
    """True implies the models of ``pb`` are included in those of ``pa``."""
    if pa is pb or pa == pb:
        return True
    key = (pa, pb)
    hit = _ENTAILS_CACHE.get(key)
    if hit is None:
        hit = _ENTAILS_CACHE[key] = _entails_uncached(pa, pb)
        if len(_ENTAILS_CACHE) > 2_000_000:
            _ENTAILS_CACHE.clear()
    return hit


def minimize(constraints) -> list:
    """Antichain reduction: drop constraints whose models are covered by
    another kept constraint."""
    kept = []
    for phi in constraints:
        if any(entails(psi, phi) for psi in kept):
            continue
        kept = [psi for psi in kept if not entails(phi, psi)]
        kept.append(phi)
    return kept


# ---------------------------------------------------------------------------
# Encodings: fixed task/phaser orders, pointwise comparable


def encode(phi: Constraint) -> tuple:
    """(bv, per-task (seq, gap row), per-phaser egap) in declaration order."""
    acc = tuple(
        (phi.seqs[t], tuple(phi.gaps[t])) for t in range(phi.n_tasks)
    )
    return (phi.bv, acc, phi.egaps)


def encoding_entails(ea: tuple, eb: tuple) -> bool:
    """Pointwise entailment between encodings of the same dimension; a
    sufficient condition for ``entails`` on the encoded constraints."""
    bv_a, acc_a, env_a = ea
    bv_b, acc_b, env_b = eb
    if len(env_a) != len(env_b):
        return False
    for a, b in zip(bv_a, bv_b):
        if a is not None and a != b:
            return False
    for (ew_a, es_a), (ew_b, es_b) in zip(env_a, env_b):
        if ew_a > ew_b or es_a > es_b:
            return False
    if len(acc_b) < len(acc_a):
        return False

    def cell_leq(ca, cb) -> bool:
        seq_a, row_a = ca
        seq_b, row_b = cb
        if seq_a is not None and seq_a != seq_b:
            return False
        return all(gap_leq(ga, gb) for ga, gb in zip(row_a, row_b))

    # surjection from b's task indices onto a's with pointwise cell order
    for h in itertools.product(range(len(acc_a)), repeat=len(acc_b)):
        if set(h) != set(range(len(acc_a))):
            continue
        if all(cell_leq(acc_a[h[i]], acc_b[i]) for i in range(len(acc_b))):
            return True
    return False


def decode(e: tuple) -> Constraint:
    bv, acc, env = e
    return Constraint(
        bv,
        tuple(seq for seq, _ in acc),
        tuple(row for _, row in acc),
        env,
    )


# ---------------------------------------------------------------------------
# Deterministic ordering and canonical form


def _gap_key(g: Gap):
    if g.bounds is None:
        return (0, g.var, ())
    return (2 if g.opt else 1, g.var, g.bounds)


def constraint_order_key(phi: Constraint):
    return (
        phi.n_tasks,
        phi.n_phasers,
        tuple(-1 if b is None else int(b) for b in phi.bv),
        tuple(
            seq_order_key(s) if s is not None else (-1, ()) for s in phi.seqs
        ),
        tuple(tuple(_gap_key(g) for g in row) for row in phi.gaps),
        phi.egaps,
    )


_INTERN: dict = {}


def canonical_constraint(phi: Constraint) -> Constraint:
    """Sort tracked tasks and phasers into a deterministic order (sound:
    membership and entailment are invariant under row/column renaming).
    Results are interned so equal constraints share one instance."""
    porder = sorted(
        range(phi.n_phasers),
        key=lambda p: (
            tuple(sorted(_gap_key(row[p]) for row in phi.gaps)),
            phi.egaps[p],
            p,
        ),
    )
    torder = sorted(
        range(phi.n_tasks),
        key=lambda t: (
            seq_order_key(phi.seqs[t]) if phi.seqs[t] is not None else (-1, ()),
            tuple(_gap_key(phi.gaps[t][p]) for p in porder),
            t,
        ),
    )
    out = Constraint(
        phi.bv,
        tuple(phi.seqs[t] for t in torder),
        tuple(tuple(phi.gaps[t][p] for p in porder) for t in torder),
        tuple(phi.egaps[p] for p in porder),
    )
    if len(_INTERN) > 2_000_000:
        _INTERN.clear()
    return _INTERN.setdefault(out, out)


# ---------------------------------------------------------------------------
# Text serialization


def _num(x) -> str:
    return "inf" if x == INF else str(x)


def constraint_to_text(phi: Constraint, bool_vars) -> str:
    lines = ["constraint {"]
    for name, val in zip(bool_vars, phi.bv):
        v = "*" if val is None else ("true" if val else "false")
        lines.append(f"  bv {name}={v}")
    lines.append(f"  tasks {phi.n_tasks}")
    lines.append(f"  phasers {phi.n_phasers}")
    for t in range(phi.n_tasks):
        if phi.seqs[t] is None:
            lines.append(f"  seq t{t} *")
        else:
            lines.append(f'  seq t{t} "{seq_to_str(phi.seqs[t])}"')
    for t in range(phi.n_tasks):
        for p in range(phi.n_phasers):
            g = phi.gaps[t][p]
            if g.bounds is None:
                lines.append(f"  gap t{t} p{p} var={g.var} nreg")
            else:
                lw, ls, uw, us = g.bounds
                opt = " opt" if g.opt else ""
                lines.append(
                    f"  gap t{t} p{p} var={g.var}{opt} "
                    f"lw={_num(lw)} ls={_num(ls)} uw={_num(uw)} us={_num(us)}"
                )
    for p in range(phi.n_phasers):
        ew, es = phi.egaps[p]
        lines.append(f"  env p{p} ew={ew} es={es}")
    lines.append("}")
    return "\n".join(lines)


class ConstraintFormatError(ValueError):
    pass


def _parse_num(s: str):
    if s == "inf":
        return INF
    if not s.isdigit():
        raise ConstraintFormatError(f"expected a number, found {s!r}")
    return int(s)


def _kv(words, keys) -> dict:
    out = {}
    for w in words:
        if "=" not in w:
            raise ConstraintFormatError(f"expected key=value, found {w!r}")
        k, v = w.split("=", 1)
        if k not in keys:
            raise ConstraintFormatError(f"unknown key {k!r}")
        out[k] = v
    return out


def parse_constraints(text: str, bool_vars) -> list:
    """Parse one or more serialized constraint records."""
    from .parser import parse_seq  # deferred: parser imports are heavier

    out = []
    lines = [ln.strip() for ln in text.splitlines()]
    i = 0
    while i < len(lines):
        ln = lines[i]
        i += 1
        if not ln or ln.startswith("#"):
            continue
        if ln != "constraint {":
            raise ConstraintFormatError(f"expected 'constraint {{', found {ln!r}")
        bv = {name: None for name in bool_vars}
        n_tasks = n_phasers = None
        seqs, gaps, egaps = {}, {}, {}
        while i < len(lines):
            ln = lines[i]
            i += 1
            if not ln or ln.startswith("#"):
                continue
            if ln == "}":
                break
            words = shlex.split(ln)
            tag = words[0]
            if tag == "bv":
                for k, v in _kv(words[1:], set(bool_vars)).items():
                    bv[k] = None if v == "*" else v == "true"
            elif tag == "tasks":
                n_tasks = _parse_num(words[1])
            elif tag == "phasers":
                n_phasers = _parse_num(words[1])
            elif tag == "seq":
                t = int(words[1].lstrip("t"))
                seqs[t] = None if words[2] == "*" else parse_seq(words[2])
            elif tag == "gap":
                t = int(words[1].lstrip("t"))
                p = int(words[2].lstrip("p"))
                rest = words[3:]
                kv = _kv(
                    [w for w in rest if "=" in w],
                    {"var", "lw", "ls", "uw", "us"},
                )
                var = kv.get("var", ANY)
                if "nreg" in rest:
                    gaps[(t, p)] = Gap(var, None)
                else:
                    gaps[(t, p)] = Gap(
                        var,
                        (
                            _parse_num(kv["lw"]),
                            _parse_num(kv["ls"]),
                            _parse_num(kv["uw"]),
                            _parse_num(kv["us"]),
                        ),
                        "opt" in rest,
                    )
            elif tag == "env":
                p = int(words[1].lstrip("p"))
                kv = _kv(words[2:], {"ew", "es"})
                egaps[p] = (_parse_num(kv["ew"]), _parse_num(kv["es"]))
            else:
                raise ConstraintFormatError(f"unknown record line {ln!r}")
        else:
            raise ConstraintFormatError("unterminated constraint record")
        if n_tasks is None or n_phasers is None:
            raise ConstraintFormatError("missing 'tasks' or 'phasers' count")
        phi = Constraint(
            bv=tuple(bv[name] for name in bool_vars),
            seqs=tuple(seqs.get(t) for t in range(n_tasks)),
            gaps=tuple(
                tuple(gaps.get((t, p), OPT_FREE) for p in range(n_phasers))
                for t in range(n_tasks)
            ),
            egaps=tuple(egaps.get(p, (0, 0)) for p in range(n_phasers)),
        )
        if not constraint_valid(phi):
            raise ConstraintFormatError("invalid gap bounds in constraint")
        out.append(phi)
    if not out:
        raise ConstraintFormatError("no constraint records found")
    return out
