"""Discrete Bayesian networks: representation, validation, JSON round-trip, random generation.

A network is a DAG over finitely-valued variables with one conditional
probability table (CPT) per variable.  CPT rows are indexed row-major over the
parent domains with the *last* parent varying fastest; that convention is part
of the on-disk format contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

ROW_SUM_TOL = 1e-9


class NetworkFormatError(ValueError):
    """The input text is not a well-formed network document."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class NetworkValidationError(ValueError):
    """A structurally well-formed document violates a network invariant."""


class EvidenceError(ValueError):
    """An evidence document references unknown variables or values."""


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    domain: tuple[str, ...]

    @property
    def card(self) -> int:
        return len(self.domain)


@dataclass(frozen=True, eq=False)
class Cpt:
    child: int
    parents: tuple[int, ...]
    table: np.ndarray  # shape (n_rows, child_card), row-major over parents

    def row_index(self, parent_values: Iterable[int], cards: np.ndarray) -> int:
        idx = 0
        for p, v in zip(self.parents, parent_values):
            idx = idx * int(cards[p]) + int(v)
        return idx


# Evidence maps variable id to a value index within that variable's domain.
Evidence = Mapping[int, int]


@dataclass(frozen=True, eq=False)
class BayesNet:
    variables: tuple[Variable, ...]
    cpts: tuple[Cpt, ...]

    @property
    def n(self) -> int:
        return len(self.variables)

    @cached_property
    def cards(self) -> np.ndarray:
        return np.array([v.card for v in self.variables], dtype=np.int64)

    @cached_property
    def parents(self) -> tuple[tuple[int, ...], ...]:
        return tuple(c.parents for c in self.cpts)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in range(self.n)]
        for c in self.cpts:
            for p in c.parents:
                kids[p].append(c.child)
        return tuple(tuple(k) for k in kids)

    @cached_property
    def name_to_id(self) -> dict[str, int]:
        return {v.name: v.id for v in self.variables}

    def cpt_array(self, i: int) -> np.ndarray:
        """CPT of variable i reshaped to (*parent_cards, child_card)."""
        cpt = self.cpts[i]
        shape = tuple(int(self.cards[p]) for p in cpt.parents) + (int(self.cards[i]),)
        return cpt.table.reshape(shape)

    def state_space_size(self) -> int:
        return int(np.prod(self.cards, dtype=object))


def _kahn_cycle_check(n: int, parents: list[tuple[int, ...]]) -> None:
    indeg = [len(p) for p in parents]
    kids: list[list[int]] = [[] for _ in range(n)]
    for i, ps in enumerate(parents):
        for p in ps:
            kids[p].append(i)
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for w in kids[u]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    if seen != n:
        member = next(i for i in range(n) if indeg[i] > 0)
        raise NetworkValidationError(f"graph contains a directed cycle through variable index {member}")


def validate_network(net: BayesNet) -> None:
    """Raise NetworkValidationError on any violated invariant."""
    names = set()
    for i, v in enumerate(net.variables):
        if v.id != i:
            raise NetworkValidationError(f"variable '{v.name}' has id {v.id}, expected {i}")
        if not v.name:
            raise NetworkValidationError(f"variable {i} has an empty name")
        if v.name in names:
            raise NetworkValidationError(f"duplicate variable name '{v.name}'")
        names.add(v.name)
        if v.card < 1:
            raise NetworkValidationError(f"variable '{v.name}' has an empty domain")
        if len(set(v.domain)) != v.card:
            raise NetworkValidationError(f"variable '{v.name}' has duplicate value labels")
    if len(net.cpts) != net.n:
        raise NetworkValidationError(f"expected {net.n} CPTs, found {len(net.cpts)}")
    for i, cpt in enumerate(net.cpts):
        name = net.variables[i].name
        if cpt.child != i:
            raise NetworkValidationError(f"CPT at position {i} is for variable {cpt.child}")
        if len(set(cpt.parents)) != len(cpt.parents):
            raise NetworkValidationError(f"CPT of '{name}' lists a duplicate parent")
        for p in cpt.parents:
            if not (0 <= p < net.n):
                raise NetworkValidationError(f"CPT of '{name}' references unknown parent id {p}")
            if p == i:
                raise NetworkValidationError(f"CPT of '{name}' lists itself as a parent")
        n_rows = 1
        for p in cpt.parents:
            n_rows *= int(net.cards[p])
        if cpt.table.shape != (n_rows, int(net.cards[i])):
            raise NetworkValidationError(
                f"CPT of '{name}' has shape {cpt.table.shape}, expected {(n_rows, int(net.cards[i]))}"
            )
        if not np.all(np.isfinite(cpt.table)):
            raise NetworkValidationError(f"CPT of '{name}' contains non-finite entries")
        if np.any(cpt.table < 0.0) or np.any(cpt.table > 1.0):
            raise NetworkValidationError(f"CPT of '{name}' has entries outside [0, 1]")
        sums = cpt.table.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
        if bad.size:
            r = int(bad[0])
            raise NetworkValidationError(
                f"CPT row {r} of '{name}' sums to {sums[r]!r}, expected 1 within {ROW_SUM_TOL}"
            )
    _kahn_cycle_check(net.n, [c.parents for c in net.cpts])


def make_network(variables: Iterable[Variable], cpts: Iterable[Cpt]) -> BayesNet:
    """Assemble and validate a network."""
    net = BayesNet(tuple(variables), tuple(cpts))
    validate_network(net)
    return net


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def parse_network(text: str) -> BayesNet:
    """Parse the JSON network format into a validated BayesNet.

    Raises NetworkFormatError (with line/column for malformed JSON) or
    NetworkValidationError naming the offending element.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict):
        raise NetworkFormatError("top-level value must be an object")
    for key in ("variables", "cpts"):
        if key not in doc or not isinstance(doc[key], list):
            raise NetworkFormatError(f"missing or non-list field '{key}'")

    variables: list[Variable] = []
    for i, entry in enumerate(doc["variables"]):
        if not isinstance(entry, dict) or "name" not in entry or "values" not in entry:
            raise NetworkFormatError(f"variable entry {i} must have 'name' and 'values'")
        name = entry["name"]
        values = entry["values"]
        if not isinstance(name, str) or not isinstance(values, list) or not all(
            isinstance(v, str) for v in values
        ):
            raise NetworkFormatError(f"variable entry {i} has malformed name or values")
        variables.append(Variable(i, name, tuple(values)))
    ids = {v.name: v.id for v in variables}
    if len(ids) != len(variables):
        raise NetworkValidationError("duplicate variable name in 'variables'")

    cpts_by_child: dict[int, Cpt] = {}
    for j, entry in enumerate(doc["cpts"]):
        if not isinstance(entry, dict) or not {"child", "parents", "rows"} <= set(entry):
            raise NetworkFormatError(f"cpt entry {j} must have 'child', 'parents' and 'rows'")
        child_name = entry["child"]
        if child_name not in ids:
            raise NetworkValidationError(f"cpt entry {j} names unknown child '{child_name}'")
        child = ids[child_name]
        parent_ids = []
        for pname in entry["parents"]:
            if pname not in ids:
                raise NetworkValidationError(f"cpt of '{child_name}' names unknown parent '{pname}'")
            parent_ids.append(ids[pname])
        rows = entry["rows"]
        if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
            raise NetworkFormatError(f"cpt of '{child_name}' has malformed rows")
        try:
            table = np.asarray(rows, dtype=np.float64)
        except ValueError as exc:
            raise NetworkFormatError(f"cpt of '{child_name}' has ragged or non-numeric rows") from exc
        if table.ndim != 2:
            raise NetworkFormatError(f"cpt of '{child_name}' rows must form a 2-d table")
        if child in cpts_by_child:
            raise NetworkValidationError(f"variable '{child_name}' has more than one cpt")
        cpts_by_child[child] = Cpt(child, tuple(parent_ids), table)

    for v in variables:
        if v.id not in cpts_by_child:
            raise NetworkValidationError(f"variable '{v.name}' has no cpt")
    return make_network(variables, [cpts_by_child[i] for i in range(len(variables))])


def serialize_network(net: BayesNet) -> str:
    """Emit the JSON format; probabilities keep full round-trip precision."""
    doc = {
        "variables": [{"name": v.name, "values": list(v.domain)} for v in net.variables],
        "cpts": [
            {
                "child": net.variables[c.child].name,
                "parents": [net.variables[p].name for p in c.parents],
                "rows": [[float(x) for x in row] for row in c.table],
            }
            for c in net.cpts
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def networks_equal(a: BayesNet, b: BayesNet) -> bool:
    """Structural equality: names, domains, parent lists and exact table values."""
    if a.n != b.n:
        return False
    for va, vb in zip(a.variables, b.variables):
        if (va.name, va.domain) != (vb.name, vb.domain):
            return False
    for ca, cb in zip(a.cpts, b.cpts):
        if ca.parents != cb.parents or not np.array_equal(ca.table, cb.table):
            return False
    return True


def parse_evidence(text: str, net: BayesNet) -> dict[int, int]:
    """Parse an evidence document ({name: value-label}) against a network."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict):
        raise NetworkFormatError("evidence must be an object mapping names to value labels")
    ev: dict[int, int] = {}
    for name, label in doc.items():
        if name not in net.name_to_id:
            raise EvidenceError(f"evidence names unknown variable '{name}'")
        var = net.variables[net.name_to_id[name]]
        if label not in var.domain:
            raise EvidenceError(f"evidence value '{label}' not in domain of '{name}'")
        ev[var.id] = var.domain.index(label)
    return ev


def check_evidence(net: BayesNet, evidence: Evidence) -> None:
    for i, v in evidence.items():
        if not (0 <= i < net.n):
            raise EvidenceError(f"evidence references unknown variable id {i}")
        if not (0 <= v < int(net.cards[i])):
            raise EvidenceError(f"evidence value {v} out of range for variable id {i}")


# ---------------------------------------------------------------------------
# Random generation
# ---------------------------------------------------------------------------

def generate_random_network(
    n: int,
    max_parents: int = 3,
    max_card: int = 2,
    determinism: float = 0.0,
    seed: int | None = None,
) -> BayesNet:
    """Generate a random valid network.

    Roughly a `determinism` fraction of CPT rows are replaced by point masses,
    which makes every entry of those rows an exact 0 or 1.  Generation is
    deterministic per seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if max_parents >= n:
        raise ValueError("max_parents must be < n")
    if not (0.0 <= determinism <= 1.0):
        raise ValueError("determinism must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    order = rng.permutation(n)  # order[k] = id of the variable at topological position k
    cards = rng.integers(2, max_card + 1, size=n) if max_card >= 2 else np.ones(n, dtype=np.int64)
    parents: list[tuple[int, ...]] = [()] * n
    for pos in range(n):
        vid = int(order[pos])
        k = int(rng.integers(0, min(max_parents, pos) + 1))
        if k:
            chosen = rng.choice(order[:pos], size=k, replace=False)
            parents[vid] = tuple(sorted(int(p) for p in chosen))

    cpts = []
    for vid in range(n):
        card = int(cards[vid])
        n_rows = 1
        for p in parents[vid]:
            n_rows *= int(cards[p])
        # Dirichlet rows mixed with a uniform floor keep all entries well away
        # from 0, so Gibbs-style baselines remain applicable at determinism=0.
        table = 0.85 * rng.dirichlet(np.ones(card), size=n_rows) + 0.15 / card
        table /= table.sum(axis=1, keepdims=True)
        if determinism > 0.0:
            mask = rng.random(n_rows) < determinism
            points = rng.integers(0, card, size=n_rows)
            for r in np.nonzero(mask)[0]:
                table[r] = 0.0
                table[r, points[r]] = 1.0
        cpts.append(Cpt(vid, parents[vid], table))
    variables = [Variable(i, f"X{i}", tuple(str(v) for v in range(int(cards[i])))) for i in range(n)]
    return make_network(variables, cpts)
