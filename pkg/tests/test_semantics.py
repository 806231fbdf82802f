"""Head rules, the labelled main relation, and the safety predicates."""

import pytest

from mdl.lang import (
    App,
    Assert,
    Cas,
    Fun,
    If,
    Let,
    Load,
    Pair,
    Par,
    Prim,
    Proj,
    RunPar,
    Store,
    Alloc,
    Length,
    Val,
    Var,
    VBool,
    VClosure,
    VInt,
    VLoc,
    VPair,
    VUnit,
    vbool,
    vint,
    vunit,
)
from mdl.semantics import (
    Config,
    StepLabel,
    StoreModel,
    empty_store,
    enabled_steps,
    head_step,
    notstuck,
    prim_eval,
    reducible,
    steps_and_stuckness,
    store_delta,
)


def run_to_value(e, store=None, limit=10_000):
    """Drive with the leftmost enabled step; return (value, store)."""
    cfg = Config(e, store or empty_store())
    for _ in range(limit):
        if isinstance(cfg.expr, Val):
            return cfg.expr.value, cfg.store
        steps = enabled_steps(cfg)
        assert steps, f"stuck at {cfg.expr!r}"
        cfg = steps[0][1]
    raise AssertionError("step limit hit")


# -- prim_eval --------------------------------------------------------------


def test_prim_eval_paper_sum():
    assert prim_eval("+", VInt(1802), VInt(42)) == VInt(1844)


def test_prim_eval_division_by_zero_stuck():
    assert prim_eval("/", VInt(5), VInt(0)) is None
    assert prim_eval("mod", VInt(5), VInt(0)) is None


def test_prim_eval_type_mismatch_stuck():
    assert prim_eval("<", VInt(1), VBool(True)) is None
    assert prim_eval("+", VBool(True), VBool(True)) is None
    assert prim_eval("==", VBool(True), VInt(1)) is None
    assert prim_eval("==", VUnit(), VUnit()) is None


def test_prim_eval_euclidean_division():
    # 0 <= r < |d| and a == d*q + r, for all sign combinations
    for a in (7, -7, 5, -5, 0):
        for d in (3, -3, 2, -2):
            q = prim_eval("/", VInt(a), VInt(d)).n
            r = prim_eval("mod", VInt(a), VInt(d)).n
            assert 0 <= r < abs(d)
            assert a == d * q + r


def test_prim_eval_equality():
    assert prim_eval("==", VInt(3), VInt(3)) == VBool(True)
    assert prim_eval("==", VLoc(0), VLoc(0)) == VBool(True)
    assert prim_eval("==", VLoc(0), VLoc(1)) == VBool(False)
    # int-vs-location comparison is defined and false (hash-set dummy slot)
    assert prim_eval("==", VInt(3), VLoc(3)) == VBool(False)
    assert prim_eval("==", VLoc(3), VInt(3)) == VBool(False)


def test_prim_eval_bool_ops_strict():
    assert prim_eval("||", VBool(False), VBool(True)) == VBool(True)
    assert prim_eval("&&", VBool(True), VBool(False)) == VBool(False)
    assert prim_eval("||", VBool(True), VInt(1)) is None


# -- head rules -------------------------------------------------------------


def test_head_assert():
    e, s, kind = head_step(Assert(vbool(True)), empty_store())
    assert (e, kind) == (vunit(), "Assert")
    assert head_step(Assert(vbool(False)), empty_store()) is None


def test_head_alloc_unit_initialized():
    st, loc = empty_store().alloc(2)
    assert st.array(0) == (VUnit(), VUnit())
    e, s2, kind = head_step(Alloc(vint(2)), empty_store())
    assert e == Val(VLoc(0)) and kind == "Alloc"
    assert s2.array(0) == (VUnit(), VUnit())
    assert head_step(Alloc(vint(-1)), empty_store()) is None


def test_head_load_store_bounds():
    s, _ = empty_store().alloc(1)
    s = s.set_cell(0, 0, VInt(7))
    e, _, _ = head_step(Load(Val(VLoc(0)), vint(0)), s)
    assert e == vint(7)
    assert head_step(Load(Val(VLoc(0)), vint(1)), s) is None
    assert head_step(Load(Val(VLoc(0)), vint(-1)), s) is None
    e2, s2, _ = head_step(Store(Val(VLoc(0)), vint(0), vint(9)), s)
    assert e2 == vunit() and s2.array(0) == (VInt(9),)
    assert head_step(Store(Val(VLoc(0)), vint(1), vint(9)), s) is None


def test_head_cas():
    s, _ = empty_store().alloc(1)
    s = s.set_cell(0, 0, VInt(0))
    e, s2, kind = head_step(Cas(Val(VLoc(0)), vint(0), vint(0), vint(7)), s)
    assert (e, kind) == (vbool(True), "CASSucc")
    assert s2.array(0) == (VInt(7),)
    e, s3, kind = head_step(Cas(Val(VLoc(0)), vint(0), vint(3), vint(9)), s)
    assert (e, kind) == (vbool(False), "CASFail")
    assert s3.array(0) == (VInt(0),)
    # comparing the dummy-location comparand against an integer cell fails
    e, _, kind = head_step(Cas(Val(VLoc(0)), vint(0), Val(VLoc(5)), vint(9)), s)
    assert (e, kind) == (vbool(False), "CASFail")
    # pair/function comparands are stuck
    bad = Val(VPair(VInt(1), VInt(2)))
    assert head_step(Cas(Val(VLoc(0)), vint(0), bad, vint(1)), s) is None
    assert head_step(Cas(Val(VLoc(0)), vint(0), vint(0), bad), s) is None


def test_head_call_substitutes_self_and_param():
    clo = VClosure("f", "x", Pair(Var("x"), Var("f")))
    e, _, kind = head_step(App(Val(clo), vint(3)), empty_store())
    assert kind == "Call"
    assert e == Pair(vint(3), Val(clo))


def test_head_fork_keeps_operands_unevaluated():
    e = Par(Prim("+", vint(1), vint(1)), Var("x"))
    e2, _, kind = head_step(e, empty_store())
    assert kind == "Fork"
    assert e2 == RunPar(Prim("+", vint(1), vint(1)), Var("x"))


def test_head_join():
    e, _, kind = head_step(RunPar(vint(3), vint(4)), empty_store())
    assert kind == "Join"
    assert e == Val(VPair(VInt(3), VInt(4)))


def test_head_proj_and_product():
    e, _, _ = head_step(Pair(vint(1), vint(2)), empty_store())
    assert e == Val(VPair(VInt(1), VInt(2)))
    e2, _, _ = head_step(Proj(2, e), empty_store())
    assert e2 == vint(2)


# -- main relation ----------------------------------------------------------


def test_enabled_steps_both_sides():
    cfg = Config(RunPar(Prim("+", vint(1), vint(1)), Prim("+", vint(2), vint(2))), empty_store())
    steps = enabled_steps(cfg)
    assert [label.task for label, _ in steps] == [(0,), (1,)]
    assert {label.kind for label, _ in steps} == {"CallPrim"}
    assert steps[0][1].expr == RunPar(vint(2), Prim("+", vint(2), vint(2)))
    assert steps[1][1].expr == RunPar(Prim("+", vint(1), vint(1)), vint(4))


def test_enabled_steps_value_and_stuck_side_is_empty():
    cfg = Config(RunPar(vint(3), Assert(vbool(False))), empty_store())
    assert enabled_steps(cfg) == []
    assert not reducible(cfg.expr, cfg.store)


def test_enabled_steps_value():
    assert enabled_steps(Config(vint(5), empty_store())) == []


def test_enabled_steps_under_context():
    # A RunPar nested under an evaluation context still exposes its tasks.
    e = Let("p", RunPar(Prim("+", vint(1), vint(1)), vint(9)), Var("p"))
    steps = enabled_steps(Config(e, empty_store()))
    assert [label.task for label, _ in steps] == [(0,)]
    assert steps[0][1].expr == Let("p", RunPar(vint(2), vint(9)), Var("p"))


def test_enabled_steps_join_under_context():
    e = Let("p", RunPar(vint(1), vint(2)), Var("p"))
    steps = enabled_steps(Config(e, empty_store()))
    assert len(steps) == 1
    label, cfg2 = steps[0]
    assert label == StepLabel((), "Join")
    assert cfg2.expr == Let("p", Val(VPair(VInt(1), VInt(2))), Var("p"))


def test_live_task_with_frozen_sibling_steps_but_is_stuck():
    # Enabled steps exist, yet the configuration is already stuck: the right
    # task is frozen at a failed assert and can never join.
    e = RunPar(Prim("+", vint(1), vint(1)), Assert(vbool(False)))
    cfg = Config(e, empty_store())
    steps, ok = steps_and_stuckness(cfg)
    assert len(steps) == 1 and steps[0][0].task == (0,)
    assert ok is False
    assert not notstuck(cfg.expr, cfg.store)


def test_steps_and_stuckness_matches_notstuck_predicate():
    cases = [
        vint(5),
        Assert(vbool(False)),
        Prim("+", vint(1), vint(1)),
        RunPar(vint(3), vint(4)),
        RunPar(vint(3), Assert(vbool(False))),
        RunPar(Prim("+", vint(1), vint(1)), Assert(vbool(False))),
        Let("x", Prim("/", vint(1), vint(0)), Var("x")),
        Par(Assert(vbool(False)), vint(1)),  # Fork itself is a step
    ]
    for e in cases:
        cfg = Config(e, empty_store())
        _, ok = steps_and_stuckness(cfg)
        assert ok == notstuck(e, empty_store()), e


def test_reducible_examples():
    s = empty_store()
    assert reducible(Prim("+", vint(1), vint(1)), s)
    assert not reducible(RunPar(vint(3), Assert(vbool(False))), s)
    assert not reducible(RunPar(Prim("+", vint(1), vint(1)), Assert(vbool(False))), s)
    assert reducible(RunPar(vint(3), vint(4)), s)  # join
    assert notstuck(vint(5), s)
    assert not notstuck(Assert(vbool(False)), s)
    assert notstuck(RunPar(vint(3), vint(4)), s)


def test_whole_program_evaluation():
    from mdl.surface import parse

    v, _ = run_to_value(parse("let x = 2 + 3 in x * x"))
    assert v == VInt(25)
    v, _ = run_to_value(parse("(fun x y -> x - y) 10 4"))
    assert v == VInt(6)
    v, _ = run_to_value(parse("let a = alloc 2 in store a 0 5; store a 1 7; load a 0 + load a 1"))
    assert v == VInt(12)
    fact = parse("mu f. fun n -> if n == 0 then 1 else n * f (n - 1)")
    v, _ = run_to_value(App(fact, vint(5)))
    assert v == VInt(120)
    v, _ = run_to_value(parse("fst (par (fun _ -> 1 + 1) (fun _ -> 2 + 2))"))
    assert v == VInt(2)


def test_padded_allocation_policy():
    s = empty_store("padded")
    s, loc = s.alloc(2)
    assert loc == VLoc(1)  # location 0 is a burned empty array
    assert s.array(0) == ()
    assert s.array(1) == (VUnit(), VUnit())


def test_store_delta():
    s0 = empty_store()
    s1, _ = s0.alloc(2)
    assert store_delta(s0, s1) == {"alloc": [{"loc": 0, "size": 2}]}
    s2 = s1.set_cell(0, 1, VInt(5))
    assert store_delta(s1, s2) == {"write": [{"loc": 0, "index": 1, "value": "5"}]}
    assert store_delta(s2, s2) == {}


def test_head_step_touches_at_most_one_location():
    # spot-check the frame property on a few mutating steps
    s, _ = empty_store().alloc(2)
    s, _ = s.alloc(3)
    cases = [
        Store(Val(VLoc(0)), vint(0), vint(1)),
        Cas(Val(VLoc(1)), vint(2), Val(VUnit()), vint(8)),
        Alloc(vint(1)),
    ]
    for e in cases:
        stepped = head_step(e, s)
        assert stepped is not None
        delta = store_delta(s, stepped[1])
        touched = {d["loc"] for d in delta.get("write", [])} | {
            d["loc"] for d in delta.get("alloc", [])
        }
        assert len(touched) <= 1


def test_array_lengths_invariant():
    from mdl.surface import parse

    e = parse("let a = alloc 2 in store a 0 1; store a 1 2; cas a 0 1 9; length a")
    v, store = run_to_value(e)
    assert v == VInt(2)
    assert [len(arr) for arr in store.cells] == [2]
