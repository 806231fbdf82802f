"""Tests for the corpus module: oracles, canonical ASTs, shipped files.

The oracle tests pin concrete input/output pairs that were computed by
hand, so a regression in the meta-level simulations cannot hide behind
the interpreter agreeing with itself.  The file tests guard the shipped
corpus against drift: every .mdl file must be byte-identical to its
renderer output, and every prelude binding embedded in a file must be
structurally identical to the canonical combinator AST.
"""

from __future__ import annotations

import itertools
import json

import pytest

from mdl.detlib import (
    BINDING_SOURCES,
    CORPUS_NAMES,
    HASH_SOURCES,
    UNSAFE_SOURCE,
    _FILE_SPECS,
    _NAME_TO_BINDING,
    CorpusEntry,
    corpus,
    corpus_program,
    corpus_source,
    hash_ast,
    load_manifest,
    oracle_dedup,
    oracle_hashset_elems,
    oracle_max,
    oracle_sequential_hashset,
    render_manifest,
    render_program,
)
from mdl.lang import Assert, Cas, Expr, Let, Pair, Par, walk
from mdl.surface import parse

H0 = lambda x: 0  # noqa: E731 - worst-case clustering hash
H1 = lambda x: x  # noqa: E731 - identity hash


def count_nodes(e: Expr, cls) -> int:
    return sum(1 for node in walk(e) if isinstance(node, cls))


# ---------------------------------------------------------------------------
# oracle_dedup
# ---------------------------------------------------------------------------


class TestOracleDedup:
    def test_drops_duplicates(self):
        assert oracle_dedup([3, 1, 3]) == frozenset({1, 3})

    def test_empty(self):
        assert oracle_dedup([]) == frozenset()

    def test_all_equal(self):
        assert oracle_dedup([5, 5, 5, 5]) == frozenset({5})

    def test_order_irrelevant(self):
        assert oracle_dedup([2, 9, 4]) == oracle_dedup([4, 2, 9])


# ---------------------------------------------------------------------------
# oracle_sequential_hashset
# ---------------------------------------------------------------------------


class TestOracleHashset:
    def test_clustered_pair_either_order(self):
        first = oracle_sequential_hashset(3, H0, [1, 2])
        second = oracle_sequential_hashset(3, H0, [2, 1])
        assert first == second == (2, 1, None)

    def test_single_insert(self):
        assert oracle_sequential_hashset(3, H0, [2]) == (2, None, None)

    def test_no_inserts(self):
        assert oracle_sequential_hashset(3, H0, []) == (None, None, None)

    def test_displacement_chain(self):
        # All three collide at slot 0; ordered probing keeps larger
        # elements earlier, displacing smaller occupants to the right.
        assert oracle_sequential_hashset(4, H0, [1, 2, 3]) == (3, 2, 1, None)

    def test_duplicate_inserts_are_absorbed(self):
        assert oracle_sequential_hashset(3, H0, [3, 3]) == (3, None, None)
        assert oracle_sequential_hashset(4, H1, [6, 6, 6]) == (
            None,
            None,
            6,
            None,
        )

    def test_identity_hash_spreads(self):
        assert oracle_sequential_hashset(4, H1, [5, 2]) == (None, 5, 2, None)

    def test_capacity_precondition(self):
        with pytest.raises(ValueError):
            oracle_sequential_hashset(3, H0, [1, 2, 3])
        with pytest.raises(ValueError):
            oracle_sequential_hashset(3, H1, [1, 1, 2, 2, 3, 3])

    @pytest.mark.parametrize("capacity", [3, 4])
    @pytest.mark.parametrize("hash_fn", [H0, H1], ids=["h0", "h1"])
    @pytest.mark.parametrize(
        "inserts", [(1, 2), (7, 3), (1, 2, 3), (2, 7, 3)], ids=repr
    )
    def test_layout_is_insertion_order_independent(
        self, capacity, hash_fn, inserts
    ):
        if len(set(inserts)) >= capacity:
            pytest.skip("would violate the capacity precondition")
        layouts = {
            oracle_sequential_hashset(capacity, hash_fn, perm)
            for perm in itertools.permutations(inserts)
        }
        assert len(layouts) == 1
        (layout,) = layouts
        assert frozenset(oracle_hashset_elems(layout)) == oracle_dedup(inserts)


# ---------------------------------------------------------------------------
# oracle_hashset_elems
# ---------------------------------------------------------------------------


class TestOracleElems:
    def test_skips_dummies_keeps_index_order(self):
        assert oracle_hashset_elems((3, None, 1)) == (3, 1)

    def test_empty(self):
        assert oracle_hashset_elems((None, None)) == ()

    def test_composes_with_hashset(self):
        layout = oracle_sequential_hashset(4, H0, [1, 2, 3])
        assert oracle_hashset_elems(layout) == (3, 2, 1)


# ---------------------------------------------------------------------------
# oracle_max
# ---------------------------------------------------------------------------


class TestOracleMax:
    def test_pair(self):
        assert oracle_max([3, 5]) == 5

    def test_singleton(self):
        assert oracle_max([7]) == 7

    def test_negatives(self):
        assert oracle_max([-1, -9]) == -1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            oracle_max([])


# ---------------------------------------------------------------------------
# Canonical ASTs
# ---------------------------------------------------------------------------


class TestCorpusAsts:
    def test_exactly_fifteen_names(self):
        assert len(CORPUS_NAMES) == 15
        assert len(set(CORPUS_NAMES)) == 15

    @pytest.mark.parametrize("name", CORPUS_NAMES)
    def test_every_name_parses(self, name):
        assert isinstance(corpus(name), Expr)

    def test_unknown_name_rejected(self):
        with pytest.raises(KeyError):
            corpus("no_such_combinator")

    def test_results_are_cached(self):
        assert corpus("dedup") is corpus("dedup")

    def test_ref_ops_is_a_triple(self):
        e = corpus("ref_ops")
        assert isinstance(e, Pair)
        assert isinstance(e.right, Pair)

    def test_unsafe_is_the_flag_race(self):
        assert corpus("unsafe") == parse(UNSAFE_SOURCE)
        assert count_nodes(corpus("unsafe"), Par) == 1
        assert count_nodes(corpus("unsafe"), Assert) == 1

    def test_hashset_add_has_exactly_two_cas(self):
        # One CAS claims a dummy slot, one swaps during displacement.
        assert count_nodes(corpus("hashset_add"), Cas) == 2

    def test_single_cas_retry_loops(self):
        assert count_nodes(corpus("aadd"), Cas) == 1
        assert count_nodes(corpus("pwrite"), Cas) == 1

    def test_parfor_has_exactly_one_par(self):
        assert count_nodes(corpus("parfor"), Par) == 1

    def test_dedup_parallelism_lives_in_its_deps(self):
        # dedup itself only wires parfor and hashset_add together.
        assert count_nodes(corpus("dedup"), Par) == 0
        assert count_nodes(corpus("dedup"), Cas) == 0

    def test_hash_functions(self):
        assert hash_ast("h0") == parse(HASH_SOURCES["h0"])
        assert hash_ast("h1") == parse(HASH_SOURCES["h1"])
        with pytest.raises(KeyError):
            hash_ast("h2")


# ---------------------------------------------------------------------------
# Shipped files and manifest
# ---------------------------------------------------------------------------


FILE_NAMES = tuple(_FILE_SPECS)


class TestShippedFiles:
    def test_manifest_matches_renderer(self):
        from mdl.detlib import _corpus_dir

        on_disk = json.loads((_corpus_dir() / "manifest.json").read_text())
        assert on_disk == render_manifest()

    def test_manifest_names(self):
        entries = load_manifest()
        assert tuple(e.name for e in entries) == FILE_NAMES
        assert all(isinstance(e, CorpusEntry) for e in entries)

    def test_unknown_file_rejected(self):
        with pytest.raises(KeyError):
            corpus_source("no_such_program")

    @pytest.mark.parametrize("name", FILE_NAMES)
    def test_file_matches_renderer(self, name):
        assert corpus_source(name) == render_program(name)

    @pytest.mark.parametrize("name", FILE_NAMES)
    def test_file_layout(self, name):
        text = corpus_source(name)
        spec = _FILE_SPECS[name]
        lines = text.splitlines()
        assert lines[0] == f"-- {name}: {spec['description']}"
        assert text.endswith("\n")

    @pytest.mark.parametrize("name", FILE_NAMES)
    def test_prelude_bindings_are_canonical(self, name):
        """Each embedded `let` binding equals the canonical combinator AST.

        This is what makes structural blessing in the type checker
        reliable: a file edited by hand would no longer check the same
        way, and this guard catches the drift first.
        """
        spec = _FILE_SPECS[name]
        e = corpus_program(name)
        binding_to_name = {v: k for k, v in _NAME_TO_BINDING.items()}
        for dep in spec["deps"]:
            assert isinstance(e, Let)
            assert e.name == dep
            assert e.bound == parse(BINDING_SOURCES[dep])
            if dep in binding_to_name:
                assert e.bound == corpus(binding_to_name[dep])
            e = e.body
        assert e == parse(spec["main"])

    @pytest.mark.parametrize("entry", load_manifest(), ids=lambda e: e.name)
    def test_manifest_row_shape(self, entry):
        assert entry.file == f"{entry.name}.mdl"
        assert entry.typecheck in ("well_typed", "rejected")
        # typecheck_error pins the expected error kind; rows that expect
        # rejection without pinning the kind leave it None.
        if entry.typecheck_error is not None:
            assert entry.typecheck == "rejected"
            assert entry.typecheck_error in (
                "UnsplittableSharing",
                "PhaseViolation",
                "NotDuplicableClosure",
                "Mismatch",
                "UnboundVariable",
                "BotCombination",
            )
        assert entry.sisafe in ("holds", "holds_vacuously", "fails")
        assert entry.deterministic is None or isinstance(
            entry.deterministic, bool
        )
        assert entry.arg is None or isinstance(entry.arg, int)
        assert entry.outcome is None or isinstance(entry.outcome, dict)
        assert set(entry.provenance) <= {"typecheck", "sisafe", "outcome"}
        assert {"typecheck", "sisafe"} <= set(entry.provenance)
        assert set(entry.provenance.values()) <= {
            "transcribed",
            "derived",
            "trivial",
        }

    def test_only_dumas_takes_an_argument(self):
        args = {e.name: e.arg for e in load_manifest()}
        assert args["dumas"] == 1844
        assert all(v is None for k, v in args.items() if k != "dumas")
