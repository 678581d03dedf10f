"""Rule templates for collective classification and their text format.

A template is either a weighted implication::

    HasCat(A, C) & Link(A, B) -> HasCat(B, C)
    HasCat(A, 'c') & Link(A, B) -> HasCat(B, 'c')
    LR(A, 'c') -> HasCat(A, 'c')

or the hard per-node sum constraint ``HasCat(A, +C) = 1``.  Upper-case
identifiers are variables, quoted strings are category constants.

Model files hold one template per line: ``weight|HARD<TAB>rule<TAB>p``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

PREDICATES = {"HasCat": 2, "Link": 2, "LR": 2}


@dataclass(frozen=True)
class Term:
    name: str
    constant: bool = False
    summed: bool = False

    def __str__(self):
        if self.constant:
            return f"'{self.name}'"
        return ("+" if self.summed else "") + self.name


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[Term, ...]

    def __str__(self):
        return f"{self.predicate}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class RuleTemplate:
    """``weight is None`` marks a hard constraint."""

    weight: float | None
    body: tuple[Literal, ...]
    head: Literal
    exponent: int = 1
    sum_constraint: bool = False

    def __post_init__(self):
        if self.weight is not None and not self.weight >= 0:
            raise ValueError(f"rule weight must be nonnegative, got {self.weight}")
        if self.exponent not in (1, 2):
            raise ValueError(f"hinge exponent must be 1 or 2, got {self.exponent}")
        if self.sum_constraint and self.weight is not None:
            raise ValueError("sum constraints are always hard")
        _check_literals(self)

    @property
    def hard(self) -> bool:
        return self.weight is None

    @property
    def text(self) -> str:
        if self.sum_constraint:
            return f"{self.head} = 1"
        return " & ".join(str(b) for b in self.body) + f" -> {self.head}"

    def with_weight(self, weight: float | None) -> "RuleTemplate":
        return replace(self, weight=weight)


def _check_literals(rule: RuleTemplate) -> None:
    for lit in rule.body + (rule.head,):
        if lit.predicate not in PREDICATES:
            raise ValueError(f"unknown predicate {lit.predicate!r}")
        if len(lit.args) != PREDICATES[lit.predicate]:
            raise ValueError(f"{lit.predicate} takes {PREDICATES[lit.predicate]} arguments")
        if lit.predicate == "Link" and any(a.constant for a in lit.args):
            raise ValueError("Link arguments must be variables")
        if lit.args[0].constant:
            raise ValueError(f"node argument of {lit} must be a variable")
    if rule.head.predicate != "HasCat":
        raise ValueError("rule heads must be HasCat literals")
    if rule.sum_constraint:
        if rule.body or not rule.head.args[1].summed:
            raise ValueError("sum constraint must read HasCat(A, +C) = 1")
        return
    if not rule.body:
        raise ValueError("implications need a non-empty body")
    node_vars = {lit.args[0].name for lit in rule.body}
    node_vars |= {a.name for lit in rule.body if lit.predicate == "Link" for a in lit.args}
    if rule.head.args[0].name not in node_vars:
        raise ValueError(f"head variable {rule.head.args[0].name} does not occur in the body")
    cat_vars = {lit.args[1].name for lit in rule.body if lit.predicate != "Link" and not lit.args[1].constant}
    head_cat = rule.head.args[1]
    if not head_cat.constant and head_cat.name not in cat_vars:
        raise ValueError(f"head category variable {head_cat.name} does not occur in the body")


DEFAULT_WEIGHTS = {
    "propagate": 1.0,
    "propagate_category": 0.5,
    "prior": 2.0,
    "propagate_exponent": 1,
    "prior_exponent": 2,
}


def _per_category(value, kappa, key):
    if isinstance(value, (int, float)):
        return [float(value)] * kappa
    value = [float(v) for v in value]
    if len(value) != kappa:
        raise ValueError(f"{key} needs {kappa} weights, got {len(value)}")
    return value


def build_model(categories: int | Sequence[str], weights: Mapping | None = None) -> list[RuleTemplate]:
    """General propagation, one propagation and one prior rule per category, simplex.

    ``weights`` overrides entries of :data:`DEFAULT_WEIGHTS`; the per-category
    entries accept either a scalar or a list of length kappa.
    """
    names = [str(c) for c in range(categories)] if isinstance(categories, int) else list(categories)
    kappa = len(names)
    if kappa < 2:
        raise ValueError("need at least two categories")
    cfg = dict(DEFAULT_WEIGHTS)
    if weights:
        unknown = set(weights) - set(DEFAULT_WEIGHTS)
        if unknown:
            raise ValueError(f"unknown weight keys {sorted(unknown)}")
        cfg.update(weights)
    if cfg["propagate"] < 0:
        raise ValueError("negative weight for the propagation rule")
    per_cat = _per_category(cfg["propagate_category"], kappa, "propagate_category")
    prior = _per_category(cfg["prior"], kappa, "prior")
    if min(per_cat + prior) < 0:
        raise ValueError("negative rule weight in model config")

    A, B, C = Term("A"), Term("B"), Term("C")
    link = Literal("Link", (A, B))
    p_prop, p_prior = int(cfg["propagate_exponent"]), int(cfg["prior_exponent"])
    rules = [RuleTemplate(float(cfg["propagate"]), (Literal("HasCat", (A, C)), link),
                          Literal("HasCat", (B, C)), p_prop)]
    for name, w in zip(names, per_cat):
        c = Term(name, constant=True)
        rules.append(RuleTemplate(w, (Literal("HasCat", (A, c)), link), Literal("HasCat", (B, c)), p_prop))
    for name, w in zip(names, prior):
        c = Term(name, constant=True)
        rules.append(RuleTemplate(w, (Literal("LR", (A, c)),), Literal("HasCat", (A, c)), p_prior))
    rules.append(RuleTemplate(None, (), Literal("HasCat", (A, Term("C", summed=True))), 1, sum_constraint=True))
    return rules


_LITERAL = re.compile(r"\s*([A-Za-z]+)\s*\(([^()]*)\)\s*")


def _parse_term(text: str) -> Term:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return Term(text[1:-1], constant=True)
    if text.startswith("+") and re.fullmatch(r"[A-Z][A-Za-z0-9_]*", text[1:]):
        return Term(text[1:], summed=True)
    if re.fullmatch(r"[A-Z][A-Za-z0-9_]*", text):
        return Term(text)
    raise ValueError(f"cannot parse term {text!r}")


def _parse_literal(text: str) -> Literal:
    m = _LITERAL.fullmatch(text)
    if not m:
        raise ValueError(f"cannot parse literal {text!r}")
    return Literal(m.group(1), tuple(_parse_term(a) for a in m.group(2).split(",")))


def parse_rule(text: str, weight: float | None, exponent: int = 1) -> RuleTemplate:
    text = text.strip()
    if "=" in text and not re.search(r"(->|=>)", text):
        lhs, rhs = text.split("=", 1)
        if float(rhs) != 1.0:
            raise ValueError("only '= 1' sum constraints are supported")
        return RuleTemplate(None, (), _parse_literal(lhs), 1, sum_constraint=True)
    parts = re.split(r"->|=>|→", text)
    if len(parts) != 2:
        raise ValueError(f"expected exactly one implication arrow in {text!r}")
    body = tuple(_parse_literal(b) for b in re.split(r"&|\^|∧", parts[0]))
    return RuleTemplate(weight, body, _parse_literal(parts[1]), exponent)


def read_model(path: str | Path) -> list[RuleTemplate]:
    rules = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'weight|HARD<TAB>rule<TAB>p'")
            weight = None if cols[0].strip().upper() == "HARD" else float(cols[0])
            try:
                rules.append(parse_rule(cols[1], weight, int(cols[2])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rules


def write_model(rules: Sequence[RuleTemplate], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rules:
            w = "HARD" if r.hard else f"{r.weight:.17g}"
            fh.write(f"{w}\t{r.text}\t{r.exponent}\n")
