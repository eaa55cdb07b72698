"""SystemVerilog assertion subset: parse, render, lint, correct, offline patterns."""
from .ast import (AssertionUnit, BooleanProp, ClockSpec, Edge, Implication, ImplOp, Port,
                  PropertyExpr, SeqTerm, Severity)
from .correct import Binding, Correction, UncorrectableError, correct, correct_detailed
from .lexer import SvaSyntaxError
from .lint import LintFinding, lint
from .parser import canonical_expr, parse_assertion, split_top_level
from .render import render_assertion
from .templates import NoTemplateError, flat_name, instantiate_template

__all__ = [
    "AssertionUnit", "BooleanProp", "ClockSpec", "Edge", "Implication", "ImplOp", "Port",
    "PropertyExpr", "SeqTerm", "Severity", "Binding", "Correction", "UncorrectableError",
    "correct", "correct_detailed", "SvaSyntaxError", "LintFinding", "lint", "canonical_expr",
    "parse_assertion", "split_top_level", "render_assertion", "NoTemplateError", "flat_name",
    "instantiate_template",
]
