"""mdl: a workbench for a small parallel lambda language.

Subpackages and modules:

* :mod:`mdl.lang` — AST, values, substitution, evaluation contexts.
* :mod:`mdl.surface` — parser and pretty-printer for ``.mdl`` source text.
* :mod:`mdl.semantics` — stores, head reduction, and the labelled small-step
  relation with nondeterministic task interleaving.
* :mod:`mdl.explorer` — exhaustive interleaving exploration and the
  schedule-independent-safety decision procedure.
* :mod:`mdl.minidet` — the MiniDet affine type checker for deterministic
  parallelism.
* :mod:`mdl.detlib` — bundled corpus of programs with reference oracles.
* :mod:`mdl.gen` — random well-typed program generator for fuzzing.
* :mod:`mdl.cli` — the ``mdl`` command-line tool.
"""

__version__ = "0.1.0"
