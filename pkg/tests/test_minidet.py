"""Tests for the MiniDet affine type checker.

Covers the type algebra (combine monoid, duplicability, phase updates),
the algorithmic judgement `check`, whole-program verdicts via
`check_program`, the library-combinator rules, every rejection kind, and
the pinned verdict for each shipped corpus program.
"""

from fractions import Fraction

import pytest

from mdl.detlib import (
    BINDING_SOURCES,
    corpus,
    corpus_source,
    hash_ast,
    load_manifest,
)
from mdl.lang import App, RunPar, vunit
from mdl.minidet import (
    BOOL_T,
    BOT,
    EMPTY,
    ERROR_KINDS,
    INT_T,
    LIBRARY_NAMES,
    UNIT_T,
    Arrow,
    IntArray,
    IntSet,
    PRead,
    PWrite,
    Prod,
    Ref,
    Rejected,
    TypeCheckError,
    WellTyped,
    check,
    check_program,
    duplicable,
    env_combine,
    phase_update,
    type_combine,
)
from mdl.surface import parse, parse_with_positions

HALF = Fraction(1, 2)
ONE = Fraction(1)
QUARTER = Fraction(1, 4)


def well(src):
    verdict = check_program(parse(src))
    assert isinstance(verdict, WellTyped), f"expected WellTyped, got {verdict}"
    return verdict.type


def rejected(src):
    verdict = check_program(parse(src))
    assert isinstance(verdict, Rejected), f"expected Rejected, got {verdict}"
    return verdict.error


# A small closed universe of types used for the monoid-law enumeration.
UNIVERSE = [
    BOT,
    EMPTY,
    UNIT_T,
    BOOL_T,
    INT_T,
    Arrow(INT_T, INT_T),
    Arrow(INT_T, BOOL_T),
    Prod(INT_T, INT_T),
    Prod(IntArray(HALF), IntArray(ONE)),
    Ref(INT_T),
    Ref(EMPTY),
    PWrite(HALF),
    PWrite(ONE),
    PRead(HALF),
    PRead(ONE),
    IntArray(QUARTER),
    IntArray(HALF),
    IntArray(ONE),
    IntSet(HALF),
    IntSet(ONE),
]


class TestTypeConstruction:
    def test_fraction_types_validate_range(self):
        for cls in (PWrite, PRead, IntArray, IntSet):
            with pytest.raises(ValueError):
                cls(Fraction(0))
            with pytest.raises(ValueError):
                cls(Fraction(3, 2))
            with pytest.raises(ValueError):
                cls(Fraction(-1, 2))

    def test_fraction_coercion(self):
        assert IntArray(1).q == ONE
        assert PWrite(Fraction(1, 2)).q == HALF

    def test_equality_and_hashing(self):
        assert IntArray(HALF) == IntArray(Fraction(2, 4))
        assert len({INT_T, INT_T, IntArray(ONE), IntArray(1)}) == 2
        assert Arrow(INT_T, INT_T) != Arrow(INT_T, BOOL_T)

    def test_renderings(self):
        assert str(INT_T) == "int"
        assert str(PWrite(HALF)) == "pwrite 1/2"
        assert str(IntArray(ONE)) == "intarray 1"
        assert str(Arrow(IntArray(HALF), Prod(IntArray(HALF), IntArray(ONE)))) == (
            "(intarray 1/2 → (intarray 1/2 × intarray 1))"
        )
        assert str(Ref(EMPTY)) == "ref empty"
        assert str(BOT) == "⊥"


class TestTypeCombine:
    def test_unboxed_idempotent(self):
        for t in (EMPTY, UNIT_T, BOOL_T, INT_T):
            assert type_combine(t, t) == t

    def test_arrows_combine_only_when_equal(self):
        a = Arrow(INT_T, INT_T)
        assert type_combine(a, a) == a
        assert type_combine(a, Arrow(INT_T, BOOL_T)) == BOT

    def test_refs_never_combine(self):
        assert type_combine(Ref(INT_T), Ref(INT_T)) == BOT
        assert type_combine(Ref(EMPTY), Ref(EMPTY)) == BOT

    def test_fractions_add(self):
        assert type_combine(PWrite(HALF), PWrite(HALF)) == PWrite(ONE)
        assert type_combine(IntArray(QUARTER), IntArray(QUARTER)) == IntArray(HALF)
        assert type_combine(IntSet(HALF), IntSet(HALF)) == IntSet(ONE)
        assert type_combine(PRead(HALF), PRead(QUARTER)) == PRead(Fraction(3, 4))

    def test_fraction_overflow_is_bot(self):
        assert type_combine(PWrite(Fraction(3, 4)), PWrite(HALF)) == BOT
        assert type_combine(IntArray(ONE), IntArray(QUARTER)) == BOT

    def test_cross_class_is_bot(self):
        assert type_combine(INT_T, BOOL_T) == BOT
        assert type_combine(PWrite(HALF), PRead(HALF)) == BOT
        assert type_combine(IntArray(HALF), IntSet(HALF)) == BOT

    def test_products_combine_pointwise(self):
        p = Prod(IntArray(HALF), IntArray(HALF))
        assert type_combine(p, p) == Prod(IntArray(ONE), IntArray(ONE))

    def test_product_with_bot_component_collapses(self):
        p = Prod(Ref(INT_T), INT_T)
        assert type_combine(p, p) == BOT

    def test_bot_absorbs_everything(self):
        for t in UNIVERSE:
            assert type_combine(BOT, t) == BOT
            assert type_combine(t, BOT) == BOT

    def test_commutative_over_universe(self):
        for a in UNIVERSE:
            for b in UNIVERSE:
                assert type_combine(a, b) == type_combine(b, a)

    def test_associative_over_universe(self):
        for a in UNIVERSE:
            for b in UNIVERSE:
                ab = type_combine(a, b)
                for c in UNIVERSE:
                    assert type_combine(ab, c) == type_combine(a, type_combine(b, c))


class TestEnvCombine:
    def test_disjoint_union(self):
        assert env_combine({"x": INT_T}, {"y": BOOL_T}) == {"x": INT_T, "y": BOOL_T}

    def test_shared_duplicable_binding(self):
        assert env_combine({"x": INT_T}, {"x": INT_T}) == {"x": INT_T}

    def test_shared_ref_becomes_bot_and_is_kept(self):
        assert env_combine({"r": Ref(INT_T)}, {"r": Ref(INT_T)}) == {"r": BOT}

    def test_fractions_recombine(self):
        merged = env_combine({"s": IntSet(HALF)}, {"s": IntSet(HALF)})
        assert merged == {"s": IntSet(ONE)}

    def test_empty_is_identity(self):
        env = {"x": INT_T, "a": IntArray(HALF)}
        assert env_combine(env, {}) == env
        assert env_combine({}, env) == env


class TestDuplicable:
    def test_examples(self):
        assert duplicable({}) is True
        assert duplicable({"x": INT_T, "f": Arrow(INT_T, INT_T)}) is True
        assert duplicable({"r": Ref(INT_T)}) is False
        assert duplicable({"s": IntSet(ONE)}) is False
        assert duplicable({"a": IntArray(HALF)}) is False
        assert duplicable({"x": INT_T, "p": PWrite(HALF)}) is False


class TestPhaseUpdate:
    def test_full_fractions_may_switch(self):
        assert phase_update(PRead(ONE)) == frozenset({PRead(ONE), PWrite(ONE)})
        assert phase_update(PWrite(ONE)) == frozenset({PWrite(ONE), PRead(ONE)})

    def test_partial_fractions_are_stuck(self):
        assert phase_update(PRead(HALF)) == frozenset({PRead(HALF)})
        assert phase_update(PWrite(HALF)) == frozenset({PWrite(HALF)})

    def test_non_phase_types_are_fixed(self):
        assert phase_update(INT_T) == frozenset({INT_T})
        assert phase_update(IntArray(ONE)) == frozenset({IntArray(ONE)})

    def test_products_update_componentwise(self):
        updates = phase_update(Prod(PWrite(ONE), INT_T))
        assert updates == frozenset(
            {Prod(PWrite(ONE), INT_T), Prod(PRead(ONE), INT_T)}
        )
        assert len(phase_update(Prod(PWrite(ONE), PRead(ONE)))) == 4


class TestCheckCore:
    def test_duplicable_var_keeps_maximal_residual(self):
        # One weakening step recovers the minimal (int, {}) form.
        assert check({"x": INT_T}, parse("x")) == (INT_T, {"x": INT_T})

    def test_frame_passes_untouched_bindings_through(self):
        gamma = {"x": INT_T, "z": Ref(INT_T)}
        assert check(gamma, parse("x + 1")) == (INT_T, gamma)

    def test_get_moves_contents_out(self):
        assert check({"r": Ref(INT_T)}, parse("get r")) == (INT_T, {"r": Ref(EMPTY)})

    def test_pwrite_preserves_partial_fraction(self):
        gamma = {"x": PWrite(HALF)}
        assert check(gamma, parse("pwrite x 3")) == (UNIT_T, gamma)

    def test_let_bound_lambda_applies(self):
        assert check({}, parse("let f = fun x -> x + 1 in f 2")) == (INT_T, {})

    def test_lambda_domain_inferred_from_usage(self):
        assert check({}, parse("fun a -> store a 0 1"))[0] == Arrow(IntArray(ONE), UNIT_T)
        assert check({}, parse("fun s -> hadd s 3"))[0] == Arrow(IntSet(HALF), UNIT_T)
        assert check({}, parse("fun p -> (pwrite p 1; pread p)"))[0] == Arrow(
            PWrite(ONE), INT_T
        )

    def test_unbound_variable_raises(self):
        with pytest.raises(TypeCheckError) as exc_info:
            check({}, parse("x"))
        assert exc_info.value.kind == "UnboundVariable"
        assert exc_info.value.subject == "x"

    def test_runpar_is_rejected_as_input(self):
        with pytest.raises(ValueError):
            check({}, RunPar(vunit(), vunit()))

    def test_deterministic(self):
        program = App(corpus("dedup"), hash_ast("h0"))
        first = check({}, program)
        second = check({}, program)
        assert first == second


class TestLibraryPositive:
    def test_ref_get_set_flow(self):
        assert well("let r = ref 7 in let v = get r in (set r (v + 1); get r)") == INT_T

    def test_second_get_yields_empty(self):
        assert well("let r = ref 7 in (get r; get r)") == EMPTY

    def test_par_of_priority_writes(self):
        src = "let r = palloc 0 in par (pwrite r 3) (pwrite r 5)"
        assert well(src) == Prod(UNIT_T, UNIT_T)

    def test_par_of_thunked_priority_writes(self):
        src = "let r = palloc 0 in par (fun _ -> pwrite r 3) (fun _ -> pwrite r 5)"
        assert well(src) == Prod(UNIT_T, UNIT_T)

    def test_phase_switch_then_parallel_reads(self):
        src = "let r = palloc 1 in (pwrite r 2; pread r; par (pread r) (pread r))"
        assert well(src) == Prod(INT_T, INT_T)

    def test_lazy_read_to_write_switch(self):
        assert well("let r = palloc 0 in (pread r; pwrite r 1)") == UNIT_T

    def test_array_store_load(self):
        assert well("let a = alloc_fill 2 0 in (store a 0 9; load a 0)") == INT_T

    def test_length_at_any_fraction(self):
        assert well("let a = alloc_fill 2 0 in length a") == INT_T
        assert check({"a": IntArray(HALF)}, parse("length a")) == (
            INT_T,
            {"a": IntArray(HALF)},
        )

    def test_hashset_pipeline(self):
        src = "let s = hinit (fun x -> x) 4 in (hadd s 1; helems s)"
        assert well(src) == IntArray(ONE)

    def test_parfor_with_borrowed_fractions(self):
        src = (
            "let a = alloc_fill 4 7 in let r = palloc 0 in "
            "let z = 0 in let n = 4 in "
            "(parfor z n (fun i -> pwrite r (load a i)); pread r)"
        )
        assert well(src) == INT_T

    def test_dedup_partial_application_arrow(self):
        arrow = Arrow(IntArray(HALF), Prod(IntArray(HALF), IntArray(ONE)))
        for name in ("h0", "h1"):
            assert check({}, App(corpus("dedup"), hash_ast(name))) == (arrow, {})

    def test_dedup_consumes_half_of_its_argument(self):
        result_type, residual = check({"a": IntArray(ONE)}, parse("dedup (fun x -> x) a"))
        assert result_type == Prod(IntArray(HALF), IntArray(ONE))
        assert residual == {"a": IntArray(HALF)}

    def test_let_alias_of_library_binding_is_blessed(self):
        src = f"let w = {BINDING_SOURCES['pwrite']} in let r = palloc 0 in w r 5"
        assert well(src) == UNIT_T

    def test_shadowing_library_name_uses_the_new_binding(self):
        assert well("let get = fun x -> x + 1 in get 3") == INT_T

    def test_assert_of_bool(self):
        assert well("assert (1 == 1)") == UNIT_T


class TestLibraryNegative:
    def test_store_needs_the_full_array(self):
        with pytest.raises(TypeCheckError) as exc_info:
            check({"a": IntArray(HALF)}, parse("store a 0 1"))
        assert exc_info.value.kind == "PhaseViolation"
        assert exc_info.value.subject == "a"

    def test_helems_needs_the_full_set(self):
        with pytest.raises(TypeCheckError) as exc_info:
            check({"s": IntSet(HALF)}, parse("helems s"))
        assert exc_info.value.kind == "PhaseViolation"
        assert exc_info.value.subject == "s"

    def test_phase_switch_needs_full_fraction(self):
        with pytest.raises(TypeCheckError) as exc_info:
            check({"x": PRead(HALF)}, parse("pwrite x 3"))
        assert exc_info.value.kind == "PhaseViolation"
        assert exc_info.value.subject == "x"

    def test_parallel_reads_without_prior_switch(self):
        err = rejected("let r = palloc 1 in (pwrite r 2; par (pread r) (pread r))")
        assert err.kind == "PhaseViolation"
        assert err.subject == "r"

    def test_set_requires_emptied_cell(self):
        err = rejected("let r = ref 1 in set r 2")
        assert err.kind == "Mismatch"
        assert err.subject == "r"

    def test_raw_alloc_has_no_rule(self):
        err = rejected("let a = alloc 3 in store a 0 1")
        assert err.kind == "Mismatch"

    def test_raw_cas_has_no_rule(self):
        err = rejected("let a = alloc_fill 3 0 in cas a 0 0 1")
        assert err.kind == "Mismatch"

    def test_unrecognized_hash_function(self):
        err = rejected("let s = hinit (fun x -> x + x) 4 in helems s")
        assert err.kind == "Mismatch"

    def test_parfor_bounds_must_be_variables(self):
        err = rejected("let a = alloc_fill 4 0 in parfor 0 4 (fun i -> store a i i)")
        assert err.kind == "Mismatch"

    def test_parfor_cannot_borrow_a_ref(self):
        err = rejected(
            "let r = ref 1 in let n = 2 in let z = 0 in parfor z n (fun i -> set r i)"
        )
        assert err.kind == "UnsplittableSharing"
        assert err.subject == "r"

    def test_parfor_body_must_be_a_literal_lambda(self):
        err = rejected("let n = 2 in let z = 0 in parfor z n 5")
        assert err.kind == "Mismatch"

    def test_if_branches_must_agree_on_the_environment(self):
        err = rejected("let r = ref 1 in if true then (let _ = get r in 0) else 0")
        assert err.kind == "Mismatch"
        assert err.subject == "r"

    def test_if_with_agreeing_branches_is_fine(self):
        assert well("let b = true in if b then 1 else 2") == INT_T

    def test_escaping_closure_over_a_ref(self):
        err = rejected("let r = ref 0 in let f = fun u -> set r u in f 1")
        assert err.kind == "NotDuplicableClosure"
        assert err.subject == "r"

    def test_recursion_is_not_inferred(self):
        err = rejected("(mu f. fun x -> f x) 0")
        assert err.kind == "Mismatch"

    def test_conflicting_usage_families_in_lambda(self):
        err = rejected("let f = fun x -> (store x 0 1; helems x) in 0")
        assert err.kind == "Mismatch"
        assert err.subject == "x"

    def test_free_variable_is_rejected_up_front(self):
        err = rejected("y + 1")
        assert err.kind == "UnboundVariable"
        assert err.subject == "y"

    def test_aadd_is_not_an_ambient_library_name(self):
        assert "aadd" not in LIBRARY_NAMES
        assert "dumas" not in LIBRARY_NAMES
        err = rejected("let r = ref 0 in aadd r 5")
        assert err.kind == "UnboundVariable"
        assert err.subject == "aadd"

    def test_shadowed_dependency_breaks_structural_blessing(self):
        # With `fill` rebound to an ordinary function, the alloc_fill payload
        # no longer matches the library and its raw `alloc` call surfaces.
        src = (
            "let fill = fun a -> fun v -> 0 in "
            f"let alloc_fill = {BINDING_SOURCES['alloc_fill']} in alloc_fill 2 7"
        )
        err = rejected(src)
        assert err.kind == "Mismatch"


class TestErrorApi:
    def test_six_closed_kinds(self):
        assert ERROR_KINDS == (
            "UnsplittableSharing",
            "PhaseViolation",
            "NotDuplicableClosure",
            "Mismatch",
            "UnboundVariable",
            "BotCombination",
        )

    def test_as_json_shape(self):
        err = rejected("let r = ref 1 in set r 2")
        payload = err.as_json()
        assert set(payload) == {"kind", "variable", "position", "message"}
        assert payload["kind"] == "Mismatch"
        assert payload["variable"] == "r"
        assert payload["position"] is None

    def test_positions_flow_from_the_parser(self):
        source = (
            "let r = ref true in (par (set r true) (set r false)); assert (get r)"
        )
        program, positions = parse_with_positions(source)
        verdict = check_program(program, positions)
        assert isinstance(verdict, Rejected)
        assert verdict.error.kind == "UnsplittableSharing"
        assert verdict.error.subject == "r"
        assert verdict.error.position == (1, 22)
        assert "1:22" in str(verdict.error)

    def test_str_includes_kind_and_subject(self):
        err = rejected("y + 1")
        assert str(err).startswith("UnboundVariable(y)")


# Pinned result type for every well-typed corpus program.
WELL_TYPED_RESULTS = {
    "ref_ops": INT_T,
    "palloc": INT_T,
    "pwrite": INT_T,
    "pread": INT_T,
    "alloc_fill": INT_T,
    "hashset_init": IntArray(ONE),
    "hashset_add": IntArray(ONE),
    "hashset_elems": IntArray(ONE),
    "parfor": INT_T,
    "dedup": Prod(IntArray(HALF), IntArray(ONE)),
}

# Honest rejection kinds for the corpus rows whose manifest leaves the kind
# open; the two pinned rows (unsafe, pwrite_pread_mixed) are asserted against
# the manifest itself.
REJECTED_KINDS = {
    "aadd": "NotDuplicableClosure",
    "dumas": "NotDuplicableClosure",
    "unsafe": "UnsplittableSharing",
    "pwrite_pread_mixed": "PhaseViolation",
    "fill": "Mismatch",
    "filter_compact": "Mismatch",
}


class TestCorpusVerdicts:
    @pytest.mark.parametrize("entry", load_manifest(), ids=lambda e: e.name)
    def test_manifest_row(self, entry):
        program, positions = parse_with_positions(corpus_source(entry.name))
        verdict = check_program(program, positions)
        if entry.typecheck == "well_typed":
            assert isinstance(verdict, WellTyped)
            assert verdict.type == WELL_TYPED_RESULTS[entry.name]
        else:
            assert isinstance(verdict, Rejected)
            assert verdict.error.kind == REJECTED_KINDS[entry.name]
            if entry.typecheck_error is not None:
                assert verdict.error.kind == entry.typecheck_error
            assert verdict.error.position is not None

    def test_closure_rejections_name_the_shared_cell(self):
        for name in ("aadd", "dumas", "unsafe", "pwrite_pread_mixed"):
            verdict = check_program(parse(corpus_source(name)))
            assert verdict.error.subject == "r"
