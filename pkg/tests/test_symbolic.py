import random

import pytest

from phasercheck.concrete import Configuration, Reg
from phasercheck.parser import parse, parse_seq
from phasercheck.symbolic import (
    ANY,
    FREE,
    FREE_BOUNDS,
    INF,
    NREG,
    OPT_FREE,
    Constraint,
    ConstraintFormatError,
    Gap,
    canonical_constraint,
    classify,
    constraint_to_text,
    decode,
    encode,
    encoding_entails,
    entails,
    gap_leq,
    gap_valid,
    is_b_good,
    is_free,
    minimize,
    models,
    parse_constraints,
)

from conftest import rand_constraint, rand_gap, sample_model, strengthen

POOL = (
    parse_seq("signal(p); wait(p);"),
    parse_seq("wait(p);"),
    parse_seq("drop(q);"),
    (),
)


# ---------------------------------------------------------------------------
# Gap order


def test_gap_valid_rejects_bad_bounds():
    assert gap_valid(NREG)
    assert gap_valid(FREE)
    assert gap_valid(OPT_FREE)
    assert not gap_valid(Gap(ANY, (2, 0, 1, 0)))  # lower above upper
    assert not gap_valid(Gap(ANY, (0, 0, INF, 3)))  # mixed finite/infinite uppers
    assert not gap_valid(Gap(ANY, None, True))  # optional cells carry bounds


def test_gap_leq_var_wildcard():
    assert gap_leq(Gap(ANY, FREE_BOUNDS), Gap("p", FREE_BOUNDS))
    assert not gap_leq(Gap("p", FREE_BOUNDS), Gap(ANY, FREE_BOUNDS))
    assert not gap_leq(Gap("p", FREE_BOUNDS), Gap("q", FREE_BOUNDS))


def test_gap_leq_bounds_widening():
    tight = Gap(ANY, (1, 1, 2, 2))
    loose = Gap(ANY, (0, 1, 3, 2))
    assert gap_leq(loose, tight)
    assert not gap_leq(tight, loose)
    assert gap_leq(FREE, tight)
    assert not gap_leq(tight, FREE)


def test_gap_leq_registration_status():
    assert gap_leq(NREG, NREG)
    assert not gap_leq(NREG, FREE)
    assert not gap_leq(FREE, NREG)
    # an optional cell covers both branches
    assert gap_leq(OPT_FREE, NREG)
    assert gap_leq(OPT_FREE, FREE)
    assert gap_leq(OPT_FREE, OPT_FREE)
    assert gap_leq(OPT_FREE, Gap(ANY, (1, 2, 3, 4)))
    # certain or unregistered cells never cover the optional union
    assert not gap_leq(FREE, OPT_FREE)
    assert not gap_leq(NREG, OPT_FREE)
    # optional bounds still need to widen the covered registered branch
    assert not gap_leq(Gap(ANY, (1, 0, 2, 2), True), FREE)


def test_classification():
    free = Constraint((), (None,), ((FREE, NREG),), ((0, 0), (0, 0)))
    assert is_free(free) and classify(free, 1) == "free"
    bounded = Constraint((), (None,), ((Gap(ANY, (0, 0, 1, 1)),),), ((0, 0),))
    assert not is_free(bounded)
    assert is_b_good(bounded, 1) and classify(bounded, 1) == "bounded"
    assert classify(bounded, 0) == "unbounded"
    opt_bounded = Constraint(
        (), (None,), ((Gap(ANY, (0, 0, 2, 2), True),),), ((0, 0),)
    )
    assert classify(opt_bounded, 2) == "bounded"


# ---------------------------------------------------------------------------
# Membership


def _cfg(cells, seqs=None, bv=()):
    return Configuration(
        bv=bv,
        seqs=seqs if seqs is not None else tuple(() for _ in cells),
        phases=tuple(cells),
    )


def test_models_interval_on_single_cell():
    c = _cfg([(("q", Reg("SIG_WAIT", 0, 1)),)])
    phi = Constraint((), (None,), ((Gap(ANY, (0, 1, 0, 1)),),), ((0, 0),))
    assert models(c, phi)  # level 0: l-w = 0, s-l = 1
    loose = Constraint((), (None,), ((Gap(ANY, (1, 0, 1, 0)),),), ((0, 0),))
    assert models(c, loose)  # level 1: l-w = 1, s-l = 0
    too_tight = Constraint((), (None,), ((Gap(ANY, (2, 0, 2, 0)),),), ((0, 0),))
    assert not models(c, too_tight)  # level 2 would put s below the level


def test_models_checks_variable_name_even_when_unregistered():
    c = _cfg([(("q", None),)])
    pinned = Constraint((), (None,), ((Gap("q", None),),), ((0, 0),))
    other = Constraint((), (None,), ((Gap("r", None),),), ((0, 0),))
    assert models(c, pinned)
    assert not models(c, other)


def test_models_optional_cell_accepts_both_statuses():
    phi = Constraint((), (None,), ((OPT_FREE,),), ((0, 0),))
    assert models(_cfg([(("q", None),)]), phi)
    assert models(_cfg([(("q", Reg("SIG_WAIT", 2, 5)),)]), phi)


def test_models_env_lower_bounds():
    # an untracked second task must satisfy the environment gap bounds;
    # pinned control sequences keep it from doubling up on the tracked row
    seq_a, seq_b = POOL[0], POOL[1]
    phi = Constraint(
        (), (seq_a,), ((Gap(ANY, (0, 0, 0, 0)),),), ((1, 0),)
    )
    ok = _cfg(
        [(("q", Reg("SIG_WAIT", 2, 2)),), (("r", Reg("SIG_WAIT", 1, 2)),)],
        seqs=(seq_a, seq_b),
    )
    assert models(ok, phi)  # level 2; env wait 1 <= 2 - 1
    bad = _cfg(
        [(("q", Reg("SIG_WAIT", 2, 2)),), (("r", Reg("SIG_WAIT", 2, 2)),)],
        seqs=(seq_a, seq_b),
    )
    assert not models(bad, phi)  # env wait at the level violates ew = 1


def test_sampled_configs_model_their_constraint(rng):
    hits = 0
    for _ in range(400):
        phi = rand_constraint(rng, POOL)
        c = sample_model(rng, phi, POOL)
        if c is None:
            continue
        hits += 1
        assert models(c, phi)
    assert hits > 100


# ---------------------------------------------------------------------------
# Entailment


def _strengthen(rng, phi):
    return strengthen(rng, phi, POOL)


def test_entails_accepts_shape_preserving_strengthenings(rng):
    for _ in range(300):
        pa = rand_constraint(rng, POOL)
        pb = _strengthen(rng, pa)
        assert entails(pa, pb)


def test_entails_soundness_on_samples(rng):
    checked = 0
    for _ in range(1500):
        pa = rand_constraint(rng, POOL)
        pb = _strengthen(rng, pa) if rng.random() < 0.6 else rand_constraint(rng, POOL)
        if not entails(pa, pb):
            continue
        for _ in range(4):
            c = sample_model(rng, pb, POOL)
            if c is None:
                continue
            checked += 1
            assert models(c, pa), (pa, pb, c)
    assert checked > 200


def test_entails_absorbs_env_compatible_extra_rows(rng):
    for _ in range(100):
        pa = rand_constraint(rng, POOL, max_tasks=2)
        ew_es = pa.egaps
        extra = tuple(
            Gap(ANY, (ew, es, INF, INF)) for ew, es in ew_es
        )
        pb = Constraint(
            pa.bv, pa.seqs + (None,), pa.gaps + (extra,), pa.egaps
        )
        assert entails(pa, pb)


def test_entails_rejects_unabsorbable_extra_row():
    row = Gap(ANY, (1, 0, INF, INF))
    pa = Constraint((), (None,), ((row,),), ((1, 0),))
    # the extra row's wait sits at the level, violating both the tracked
    # row's lower bound and the environment bound ew = 1
    pb = Constraint(
        (), (None, None), ((row,), (Gap(ANY, (0, 0, 0, 0)),)), ((1, 0),)
    )
    assert not entails(pa, pb)


def test_minimize_yields_an_antichain(rng):
    cs = [rand_constraint(rng, POOL) for _ in range(120)]
    kept = minimize(cs)
    for i, a in enumerate(kept):
        for j, b in enumerate(kept):
            if i != j:
                assert not entails(a, b)
    # coverage: every dropped constraint is entailed by a kept one
    for phi in cs:
        assert any(entails(psi, phi) for psi in kept)


# ---------------------------------------------------------------------------
# Encodings


def test_encode_decode_round_trip(rng):
    for _ in range(200):
        phi = rand_constraint(rng, POOL)
        assert decode(encode(phi)) == phi


def test_encoding_entails_implies_entails(rng):
    hits = 0
    for _ in range(2000):
        pa = rand_constraint(rng, POOL, max_tasks=2)
        pb = _strengthen(rng, pa) if rng.random() < 0.5 else rand_constraint(
            rng, POOL, max_tasks=2
        )
        if pa.n_phasers != pb.n_phasers:
            continue
        if encoding_entails(encode(pa), encode(pb)):
            hits += 1
            assert entails(pa, pb)
    assert hits > 100


# ---------------------------------------------------------------------------
# Canonical form and serialization


def test_canonical_constraint_preserves_meaning(rng):
    for _ in range(150):
        phi = rand_constraint(rng, POOL)
        canon = canonical_constraint(phi)
        assert entails(phi, canon) and entails(canon, phi)
        # idempotent and interning: same object on repeat
        assert canonical_constraint(canon) is canonical_constraint(phi)


def test_serialization_round_trip(rng):
    prog = parse("bool a, b; main(){ exit; }")
    for _ in range(150):
        phi = rand_constraint(rng, POOL, bool_count=2)
        text = constraint_to_text(phi, prog.bool_vars)
        [back] = parse_constraints(text, prog.bool_vars)
        assert back == phi


def test_serialization_keeps_optional_marker():
    phi = Constraint((), (None,), ((OPT_FREE, NREG),), ((0, 0), (1, 2)))
    text = constraint_to_text(phi, ())
    assert "opt" in text and "nreg" in text
    [back] = parse_constraints(text, ())
    assert back.gaps[0][0].opt
    assert back.gaps[0][1].bounds is None


def test_parse_constraints_rejects_malformed():
    with pytest.raises(ConstraintFormatError):
        parse_constraints("constraint {\n  tasks 1\n}", ())
    with pytest.raises(ConstraintFormatError):
        parse_constraints("constraint {\n  tasks 1\n  phasers 0\n", ())
    with pytest.raises(ConstraintFormatError):
        parse_constraints(
            "constraint {\n  tasks 1\n  phasers 1\n  gap t0 p0 var=* lw=2 ls=0 uw=1 us=0\n}",
            (),
        )


def test_unspecified_cells_parse_as_optional_free():
    [phi] = parse_constraints("constraint {\n  tasks 1\n  phasers 1\n}", ())
    assert phi.gaps[0][0] == OPT_FREE
