"""Grounding rule templates into hinge potentials over [0, 1] random variables.

Every unobserved ``(node, category)`` pair is one random variable (RV); RVs
are numbered in ``(node, category)`` order.  Observed atoms, links and
regression priors are folded into the constant of each potential, so a
ground rule stores only its RV coefficients::

    potential r:  w_r * max(0, sum_k coef_k * y[rv_k] + const_r) ** p_r

Hard constraints are groups of RVs whose values must sum to one.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ..data import AttributedGraph, ObservationSplit
from ..prior import PriorTable
from .model import Literal, RuleTemplate


@dataclass(frozen=True)
class Potential:
    weight: float
    rvs: tuple[int, ...]
    coefs: tuple[float, ...]
    const: float
    power: int = 1
    template: int = -1

    def linear(self, values: np.ndarray) -> float:
        return float(sum(c * values[i] for i, c in zip(self.rvs, self.coefs)) + self.const)


def _csr_ptr(owner: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(np.bincount(owner, minlength=n))]).astype(np.int64)


@dataclass
class GroundRuleSet:
    """Flat, immutable-by-convention container of ground potentials.

    Terms of potential ``r`` live in ``term_rv[pot_ptr[r]:pot_ptr[r+1]]``
    (likewise ``term_coef``).  Constraint group ``g`` covers
    ``con_rv[con_ptr[g]:con_ptr[g+1]]``.  ``inc_ptr``/``inc_pot`` list the
    potentials each RV participates in.
    """

    n_rv: int
    pot_ptr: np.ndarray
    term_rv: np.ndarray
    term_coef: np.ndarray
    pot_const: np.ndarray
    pot_weight: np.ndarray
    pot_power: np.ndarray
    pot_template: np.ndarray
    con_ptr: np.ndarray
    con_rv: np.ndarray
    rv_node: np.ndarray | None = None
    rv_cat: np.ndarray | None = None
    node_count: int = 0
    kappa: int = 0
    inc_ptr: np.ndarray = field(init=False, repr=False)
    inc_pot: np.ndarray = field(init=False, repr=False)
    rv_group: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.pot_ptr = np.asarray(self.pot_ptr, dtype=np.int64)
        self.term_rv = np.asarray(self.term_rv, dtype=np.int64)
        self.term_coef = np.asarray(self.term_coef, dtype=np.float64)
        self.pot_const = np.asarray(self.pot_const, dtype=np.float64)
        self.pot_weight = np.asarray(self.pot_weight, dtype=np.float64)
        self.pot_power = np.asarray(self.pot_power, dtype=np.int64)
        self.pot_template = np.asarray(self.pot_template, dtype=np.int64)
        self.con_ptr = np.asarray(self.con_ptr, dtype=np.int64)
        self.con_rv = np.asarray(self.con_rv, dtype=np.int64)
        m = len(self.pot_const)
        if not (len(self.pot_ptr) == m + 1 and len(self.pot_weight) == m
                and len(self.pot_power) == m and len(self.pot_template) == m):
            raise ValueError("inconsistent potential array lengths")
        if self.term_rv.size and (self.term_rv.min() < 0 or self.term_rv.max() >= self.n_rv):
            raise ValueError("potential references an invalid RV index")
        if np.any(self.pot_weight < 0):
            raise ValueError("potential weights must be nonnegative")
        if not np.all(np.isin(self.pot_power, (1, 2))):
            raise ValueError("hinge exponents must be 1 or 2")
        if self.con_rv.size and (self.con_rv.min() < 0 or self.con_rv.max() >= self.n_rv):
            raise ValueError("constraint references an invalid RV index")
        self.rv_group = np.full(self.n_rv, -1, dtype=np.int64)
        for g in range(self.n_constraints):
            members = self.con_rv[self.con_ptr[g]:self.con_ptr[g + 1]]
            if np.any(self.rv_group[members] >= 0) or len(set(members.tolist())) != len(members):
                raise ValueError("an RV may belong to at most one sum constraint")
            self.rv_group[members] = g

        term_pot = np.repeat(np.arange(m), np.diff(self.pot_ptr))
        order = np.lexsort((term_pot, self.term_rv))
        self.inc_ptr = _csr_ptr(self.term_rv, self.n_rv)
        self.inc_pot = term_pot[order]

    # construction -------------------------------------------------------

    @classmethod
    def from_potentials(
        cls,
        n_rv: int,
        potentials: Iterable[Potential | tuple],
        constraints: Iterable[Sequence[int]] = (),
    ) -> "GroundRuleSet":
        """Build from explicit potentials, e.g. ``(w, {rv: coef}, const, p)`` tuples."""
        ptr, rvs, coefs, const, weight, power, tmpl = [0], [], [], [], [], [], []
        for pot in potentials:
            if not isinstance(pot, Potential):
                w, terms, c, *rest = pot
                p = rest[0] if rest else 1
                t = rest[1] if len(rest) > 1 else -1
                pot = Potential(float(w), tuple(terms), tuple(terms.values()), float(c), int(p), int(t))
            rvs.extend(pot.rvs)
            coefs.extend(pot.coefs)
            ptr.append(len(rvs))
            const.append(pot.const)
            weight.append(pot.weight)
            power.append(pot.power)
            tmpl.append(pot.template)
        con_ptr, con_rv = [0], []
        for group in constraints:
            con_rv.extend(group)
            con_ptr.append(len(con_rv))
        return cls(n_rv, ptr, rvs, coefs, const, weight, power, tmpl, con_ptr, con_rv)

    # accessors ----------------------------------------------------------

    @property
    def n_potentials(self) -> int:
        return len(self.pot_const)

    @property
    def n_constraints(self) -> int:
        return len(self.con_ptr) - 1

    def potential(self, r: int) -> Potential:
        a, b = self.pot_ptr[r], self.pot_ptr[r + 1]
        return Potential(float(self.pot_weight[r]), tuple(self.term_rv[a:b].tolist()),
                         tuple(self.term_coef[a:b].tolist()), float(self.pot_const[r]),
                         int(self.pot_power[r]), int(self.pot_template[r]))

    def potentials(self) -> list[Potential]:
        return [self.potential(r) for r in range(self.n_potentials)]

    def constraint(self, g: int) -> np.ndarray:
        return self.con_rv[self.con_ptr[g]:self.con_ptr[g + 1]]

    def incident(self, rv: int) -> np.ndarray:
        return self.inc_pot[self.inc_ptr[rv]:self.inc_ptr[rv + 1]]

    @property
    def term_pot(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_potentials), np.diff(self.pot_ptr))

    @property
    def matrix(self) -> sp.csr_matrix:
        """Potentials x RVs coefficient matrix."""
        if not hasattr(self, "_matrix"):
            self._matrix = sp.csr_matrix((self.term_coef, self.term_rv, self.pot_ptr),
                                         shape=(self.n_potentials, self.n_rv))
        return self._matrix

    def linear_forms(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(values, dtype=np.float64) + self.pot_const

    def rv_index(self) -> np.ndarray:
        """``(node_count, kappa)`` table of RV indices, -1 for observed atoms."""
        table = np.full((self.node_count, self.kappa), -1, dtype=np.int64)
        if self.rv_node is not None and self.n_rv:
            table[self.rv_node, self.rv_cat] = np.arange(self.n_rv)
        return table

    def rv_names(self, graph: AttributedGraph | None = None) -> list[str]:
        if self.rv_node is None:
            return [str(i) for i in range(self.n_rv)]
        if graph is None:
            return [f"{n}:{c}" for n, c in zip(self.rv_node, self.rv_cat)]
        return [f"{graph.node_ids[n]}:{graph.categories.names[c]}" for n, c in zip(self.rv_node, self.rv_cat)]

    def reweighted(self, template_weights: Sequence[float | None]) -> "GroundRuleSet":
        """Copy with every potential's weight taken from its template."""
        w = np.array([np.nan if x is None else x for x in template_weights], dtype=np.float64)
        new_weight = w[self.pot_template]
        if np.isnan(new_weight).any():
            raise ValueError("soft potential refers to a hard or missing template")
        out = GroundRuleSet(self.n_rv, self.pot_ptr, self.term_rv, self.term_coef, self.pot_const,
                            new_weight, self.pot_power, self.pot_template, self.con_ptr, self.con_rv,
                            self.rv_node, self.rv_cat, self.node_count, self.kappa)
        return out

    # persistence --------------------------------------------------------

    _ARRAYS = ("pot_ptr", "term_rv", "term_coef", "pot_const", "pot_weight", "pot_power",
               "pot_template", "con_ptr", "con_rv", "rv_node", "rv_cat")

    def save(self, path: str | Path) -> None:
        """Write an ``.npz`` archive; fixed member timestamps keep it byte-stable."""
        arrays = {k: getattr(self, k) for k in self._ARRAYS if getattr(self, k) is not None}
        arrays.update(n_rv=self.n_rv, node_count=self.node_count, kappa=self.kappa)
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for key, value in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asarray(value), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(f"{key}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "GroundRuleSet":
        with np.load(path) as z:
            kw = {k: z[k] for k in cls._ARRAYS if k in z}
            return cls(int(z["n_rv"]), node_count=int(z["node_count"]), kappa=int(z["kappa"]), **kw)

    def dump(self, path: str | Path, names: Sequence[str] | None = None) -> None:
        """Human-readable listing: ``w<TAB>p<TAB>rv:coef,...<TAB>const``."""
        names = names or self.rv_names()
        with open(path, "w", encoding="utf-8") as fh:
            for r in range(self.n_potentials):
                a, b = self.pot_ptr[r], self.pot_ptr[r + 1]
                terms = ",".join(f"{names[i]}:{c:g}" for i, c in zip(self.term_rv[a:b], self.term_coef[a:b]))
                fh.write(f"{self.pot_weight[r]:.17g}\t{self.pot_power[r]}\t{terms}\t{self.pot_const[r]:.17g}\n")
            for g in range(self.n_constraints):
                fh.write("HARD\t-\t" + ",".join(f"{names[i]}:1" for i in self.constraint(g)) + "\t-1\n")


# --------------------------------------------------------------------------
# grounding


class _Chunks:
    """Accumulates groundings as dense (groundings x literal) term columns."""

    def __init__(self):
        self.const, self.rv, self.coef, self.weight, self.power, self.template = [], [], [], [], [], []

    def add(self, const, rv_cols, coef_cols, weight, power, template):
        rv = np.stack(rv_cols, axis=1)
        keep = (rv >= 0).any(axis=1)
        if not keep.any():
            return
        self.const.append(const[keep])
        self.rv.append(rv[keep])
        self.coef.append(np.stack(coef_cols, axis=1)[keep])
        k = int(keep.sum())
        self.weight.append(np.full(k, weight))
        self.power.append(np.full(k, power, dtype=np.int64))
        self.template.append(np.full(k, template, dtype=np.int64))

    def finish(self):
        if not self.const:
            return [0], [], [], [], [], [], []
        width = max(r.shape[1] for r in self.rv)
        pad = lambda a, fill: np.pad(a, ((0, 0), (0, width - a.shape[1])), constant_values=fill)
        rv = np.concatenate([pad(r, -1) for r in self.rv])
        coef = np.concatenate([pad(c, 0.0) for c in self.coef])
        # merge repeated RVs inside one grounding and drop vanished terms
        n = len(rv)
        pot = np.repeat(np.arange(n), width)
        flat_rv, flat_coef = rv.ravel(), coef.ravel()
        valid = flat_rv >= 0
        pot, flat_rv, flat_coef = pot[valid], flat_rv[valid], flat_coef[valid]
        keys, inverse = np.unique(np.stack([pot, flat_rv], axis=1), axis=0, return_inverse=True)
        merged = np.bincount(inverse.ravel(), weights=flat_coef, minlength=len(keys))
        nz = merged != 0.0
        keys, merged = keys[nz], merged[nz]
        alive = np.zeros(n, dtype=bool)
        alive[keys[:, 0]] = True
        remap = np.cumsum(alive) - 1
        ptr = _csr_ptr(remap[keys[:, 0]], int(alive.sum()))
        const = np.concatenate(self.const)[alive]
        weight = np.concatenate(self.weight)[alive]
        power = np.concatenate(self.power)[alive]
        template = np.concatenate(self.template)[alive]
        return ptr, keys[:, 1], merged, const, weight, power, template


def ground(
    templates: Sequence[RuleTemplate],
    graph: AttributedGraph,
    split: ObservationSplit,
    priors: PriorTable | None = None,
) -> GroundRuleSet:
    """Instantiate ``templates`` over ``graph``.

    Links are symmetric: a template containing ``Link(A, B)`` is grounded once
    per undirected edge and direction.  Groundings without any RV are
    constant and dropped.
    """
    kappa = graph.kappa
    n = graph.node_count
    observed = split.observed
    labels = split.true_labels
    unobs = split.unobserved_nodes
    rv_index = np.full((n, kappa), -1, dtype=np.int64)
    rv_index[unobs] = np.arange(len(unobs) * kappa).reshape(len(unobs), kappa)
    rv_node = np.repeat(unobs, kappa)
    rv_cat = np.tile(np.arange(kappa), len(unobs))
    names = graph.categories.names

    und = graph.undirected_edges
    src = np.concatenate([und[:, 0], und[:, 1]])
    dst = np.concatenate([und[:, 1], und[:, 0]])

    chunks = _Chunks()
    con_ptr, con_rv = [0], []
    for t, rule in enumerate(templates):
        if rule.sum_constraint:
            for node in unobs:
                con_rv.extend(rv_index[node].tolist())
                con_ptr.append(len(con_rv))
            continue
        if rule.hard:
            raise ValueError(f"hard implications are not supported: {rule.text}")
        links = [lit for lit in rule.body if lit.predicate == "Link"]
        node_vars = {lit.args[0].name for lit in rule.body + (rule.head,)}
        if len(links) > 1:
            raise ValueError(f"at most one Link literal per rule: {rule.text}")
        if links:
            x, y = links[0].args[0].name, links[0].args[1].name
            if x == y:
                raise ValueError("Link(A, A) never holds: graphs have no self-loops")
            if node_vars - {x, y}:
                raise ValueError(f"node variables {sorted(node_vars - {x, y})} are not bound by Link")
            binding = {x: src, y: dst}
        else:
            if len(node_vars) != 1:
                raise ValueError(f"rule without Link must use one node variable: {rule.text}")
            binding = {node_vars.pop(): np.arange(n)}
        size = len(next(iter(binding.values())))
        if size == 0:
            continue

        cat_vars = sorted({lit.args[1].name for lit in rule.body + (rule.head,)
                           if lit.predicate != "Link" and not lit.args[1].constant})
        if len(cat_vars) > 1:
            raise ValueError(f"at most one category variable per rule: {rule.text}")
        cat_values = range(kappa) if cat_vars else [None]

        for cval in cat_values:
            def cat_of(lit: Literal) -> int:
                arg = lit.args[1]
                if arg.constant:
                    if arg.name not in names:
                        raise ValueError(f"category constant {arg.name!r} not in the domain")
                    return names.index(arg.name)
                return cval

            const = np.full(size, -(len(rule.body) - 1), dtype=np.float64)
            rv_cols, coef_cols = [], []
            for lit, sign in [(b, 1.0) for b in rule.body] + [(rule.head, -1.0)]:
                if lit.predicate == "Link":
                    const += sign
                    continue
                nodes = binding[lit.args[0].name]
                c = cat_of(lit)
                if lit.predicate == "LR":
                    if priors is None:
                        raise ValueError("rules with LR literals need a prior table")
                    const += sign * priors.probs[nodes, c]
                    continue
                obs = observed[nodes]
                const += sign * np.where(obs, labels[nodes] == c, 0.0)
                rv_cols.append(np.where(obs, -1, rv_index[nodes, c]))
                coef_cols.append(np.full(size, sign))
            if not rv_cols:
                continue
            chunks.add(const, rv_cols, coef_cols, rule.weight, rule.exponent, t)

    ptr, rv, coef, const, weight, power, template = chunks.finish()
    return GroundRuleSet(len(rv_node), ptr, rv, coef, const, weight, power, template,
                         con_ptr, con_rv, rv_node, rv_cat, n, kappa)


def template_distances(rules: GroundRuleSet, values: np.ndarray, n_templates: int) -> np.ndarray:
    """Per-template sums of distances to satisfaction (unweighted)."""
    lin = rules.linear_forms(values)
    dist = np.maximum(lin, 0.0) ** rules.pot_power
    return np.bincount(rules.pot_template, weights=dist, minlength=n_templates)


def assignment_from_labels(rules: GroundRuleSet, labels: np.ndarray) -> np.ndarray:
    """One-hot RV values for per-node category labels."""
    labels = np.asarray(labels)
    node_labels = labels[rules.rv_node]
    if np.any(node_labels < 0):
        raise ValueError("ground truth is missing for some unobserved nodes")
    return (node_labels == rules.rv_cat).astype(np.float64)
