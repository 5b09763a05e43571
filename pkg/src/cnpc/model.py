"""Discrete causal models over categorical variables.

A `CausalModel` is a DAG whose nodes carry conditional probability tables.
Exactly one variable plays the class role; the rest are attributes (units
of intervention) or auxiliary inputs used only in small verification
worlds. Models are immutable after construction and all operations here
are pure functions, so concurrent reads need no coordination.

CPD rows are indexed by the parent assignment in mixed-radix order with
the first parent most significant; columns follow the child's state order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .jsonio import dumps_canonical, sha256_hex

ROLE_ATTRIBUTE = "attribute"
ROLE_CLASS = "class"
ROLE_INPUT = "auxiliary-input"
_ROLES = (ROLE_ATTRIBUTE, ROLE_CLASS, ROLE_INPUT)

ROW_SUM_TOL = 1e-9


class ModelError(Exception):
    """A model violates a structural or numerical invariant."""


class FormatError(Exception):
    """A document cannot be parsed into a model or circuit."""


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]
    role: str = ROLE_ATTRIBUTE

    @property
    def card(self) -> int:
        return len(self.states)


@dataclass(frozen=True, eq=False)
class CpdTable:
    """Dense conditional table for one variable.

    `probabilities` has shape (prod of parent cardinalities, child
    cardinality); each row is a distribution over the child's states.
    """

    variable: str
    parent_order: tuple[str, ...]
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        if p.ndim != 2:
            raise ModelError(f"CPD for {self.variable} must be 2-D, got {p.ndim}-D")

    def __eq__(self, other) -> bool:
        if not isinstance(other, CpdTable):
            return NotImplemented
        return (
            self.variable == other.variable
            and self.parent_order == other.parent_order
            and self.probabilities.shape == other.probabilities.shape
            and np.array_equal(self.probabilities, other.probabilities)
        )


@dataclass(frozen=True)
class InterventionSet:
    """Forced values for a set of attribute variables (never the class)."""

    assignments: tuple[tuple[str, int], ...] = ()

    @classmethod
    def from_dict(cls, mapping: Mapping[str, int]) -> "InterventionSet":
        return cls(tuple(mapping.items()))

    def as_dict(self) -> dict[str, int]:
        return dict(self.assignments)

    def __len__(self) -> int:
        return len(self.assignments)

    def __bool__(self) -> bool:
        return bool(self.assignments)

    def validate_against(self, model: "CausalModel") -> None:
        seen = set()
        for name, state in self.assignments:
            if name in seen:
                raise ModelError(f"duplicate intervention target {name}")
            seen.add(name)
            var = model.variable(name)
            if var.role == ROLE_CLASS:
                raise ModelError("cannot intervene on the class variable")
            if var.role != ROLE_ATTRIBUTE:
                raise ModelError(f"intervention target {name} is not an attribute")
            if not 0 <= state < var.card:
                raise ModelError(f"state index {state} out of range for {name}")


@dataclass(frozen=True, eq=False)
class CausalModel:
    variables: tuple[Variable, ...]
    edges: tuple[tuple[str, str], ...]
    cpds: tuple[CpdTable, ...] | None = None

    # derived lookups, built once
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "edges", tuple((p, c) for p, c in self.edges))
        if self.cpds is not None:
            object.__setattr__(self, "cpds", tuple(self.cpds))
        idx = {v.name: i for i, v in enumerate(self.variables)}
        object.__setattr__(self, "_index", idx)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CausalModel):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.edges == other.edges
            and self.cpds == other.cpds
        )

    # -- lookups ---------------------------------------------------------

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def variable(self, name: str) -> Variable:
        try:
            return self.variables[self._index[name]]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def var_index(self, name: str) -> int:
        if name not in self._index:
            raise ModelError(f"unknown variable {name!r}")
        return self._index[name]

    def card(self, name: str) -> int:
        return self.variable(name).card

    def cards(self) -> list[int]:
        return [v.card for v in self.variables]

    def parents(self, name: str) -> list[str]:
        """Parents of `name` in variable declaration order."""
        self.variable(name)
        ps = {p for p, c in self.edges if c == name}
        return [v.name for v in self.variables if v.name in ps]

    def children(self, name: str) -> list[str]:
        cs = {c for p, c in self.edges if p == name}
        return [v.name for v in self.variables if v.name in cs]

    @property
    def class_variable(self) -> str:
        for v in self.variables:
            if v.role == ROLE_CLASS:
                return v.name
        raise ModelError("model has no class variable")

    @property
    def attributes(self) -> list[str]:
        return [v.name for v in self.variables if v.role == ROLE_ATTRIBUTE]

    def cpd(self, name: str) -> CpdTable:
        if self.cpds is None:
            raise ModelError("model has no CPDs")
        for t in self.cpds:
            if t.variable == name:
                return t
        raise ModelError(f"no CPD for variable {name!r}")

    def has_cpds(self) -> bool:
        return self.cpds is not None

    def topological_order(self) -> list[str]:
        """Variable names in a topological order (declaration order among
        ready nodes, so the result is deterministic)."""
        remaining_parents = {v.name: set(self.parents(v.name)) for v in self.variables}
        out: list[str] = []
        done: set[str] = set()
        while len(out) < len(self.variables):
            progressed = False
            for v in self.variables:
                if v.name in done:
                    continue
                if remaining_parents[v.name] <= done:
                    out.append(v.name)
                    done.add(v.name)
                    progressed = True
            if not progressed:
                raise ModelError("graph contains a cycle")
        return out

    def digest(self) -> str:
        return sha256_hex(serialize_model(self))

    def structure_digest(self) -> str:
        """Digest of variables and edges only; fitted and generator models
        of the same world share it."""
        return sha256_hex(serialize_model(CausalModel(self.variables, self.edges, None)))


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject}: {self.message}"


@dataclass(frozen=True)
class LabelTable:
    """Fully observed assignments: one column per variable, entries are
    state indices."""

    columns: tuple[str, ...]
    rows: np.ndarray  # (n, len(columns)) int

    @classmethod
    def from_labels(
        cls, model: CausalModel, columns: Sequence[str], label_rows: Iterable[Sequence[str]]
    ) -> "LabelTable":
        """Convert state labels to indices, rejecting unknown labels."""
        columns = tuple(columns)
        maps = []
        for c in columns:
            var = model.variable(c)
            maps.append({s: i for i, s in enumerate(var.states)})
        out = []
        for r, row in enumerate(label_rows):
            if len(row) != len(columns):
                raise FormatError(f"row {r} has {len(row)} cells, expected {len(columns)}")
            try:
                out.append([maps[j][row[j]] for j in range(len(columns))])
            except KeyError:
                for j, cell in enumerate(row):
                    if cell not in maps[j]:
                        raise FormatError(
                            f"unknown state label {cell!r} for {columns[j]} at row {r}"
                        ) from None
        return cls(columns, np.asarray(out, dtype=np.int64).reshape(len(out), len(columns)))

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def __len__(self) -> int:
        return len(self.rows)


# -- structural operations -------------------------------------------------


def validate(model: CausalModel) -> list[Violation]:
    """Check structure, CPD normalization, and the class-variable
    assumption (class parents are attributes; attributes are
    non-descendants of the class). Returns all violations found."""
    out: list[Violation] = []
    names = model.names
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        out.append(Violation("duplicate-name", ",".join(dupes), "variable names not unique"))
        return out

    for v in model.variables:
        if v.card < 2:
            out.append(Violation("arity", v.name, f"needs >= 2 states, has {v.card}"))
        if len(set(v.states)) != len(v.states):
            out.append(Violation("duplicate-state", v.name, "state labels not unique"))
        if v.role not in _ROLES:
            out.append(Violation("role", v.name, f"unknown role {v.role!r}"))

    class_vars = [v.name for v in model.variables if v.role == ROLE_CLASS]
    if len(class_vars) != 1:
        out.append(
            Violation("class-count", ",".join(class_vars) or "-",
                      f"expected exactly one class variable, found {len(class_vars)}")
        )

    for p, c in model.edges:
        for end in (p, c):
            if end not in model._index:
                out.append(Violation("edge-endpoint", end, "edge endpoint not declared"))

    if any(v.code == "edge-endpoint" for v in out):
        return out

    try:
        model.topological_order()
    except ModelError:
        out.append(Violation("cycle", "-", "graph is not acyclic"))
        return out

    if len(class_vars) == 1:
        y = class_vars[0]
        for p in model.parents(y):
            if model.variable(p).role != ROLE_ATTRIBUTE:
                out.append(
                    Violation("class-parent", p, "parent of class variable is not an attribute")
                )
        reach = _descendants(model, y)
        for a in model.attributes:
            if a in reach:
                out.append(
                    Violation("attribute-descendant", a,
                              f"attribute {a} is a descendant of class")
                )

    if model.cpds is not None:
        covered = {t.variable for t in model.cpds}
        for v in model.variables:
            if v.name not in covered:
                out.append(Violation("cpd-missing", v.name, "no CPD present"))
        for t in model.cpds:
            if t.variable not in model._index:
                out.append(Violation("cpd-unknown", t.variable, "CPD for undeclared variable"))
                continue
            if set(t.parent_order) != set(model.parents(t.variable)):
                out.append(
                    Violation("cpd-parents", t.variable,
                              f"parent_order {list(t.parent_order)} does not match graph "
                              f"parents {model.parents(t.variable)}")
                )
                continue
            rows = 1
            for p in t.parent_order:
                rows *= model.card(p)
            want = (rows, model.card(t.variable))
            if t.probabilities.shape != want:
                out.append(
                    Violation("cpd-shape", t.variable,
                              f"table shape {t.probabilities.shape}, expected {want}")
                )
                continue
            if np.any(t.probabilities < 0) or np.any(t.probabilities > 1):
                out.append(Violation("cpd-range", t.variable, "entries outside [0,1]"))
            sums = t.probabilities.sum(axis=1)
            bad = np.where(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
            for r in bad[:5]:
                out.append(
                    Violation("cpd-row-sum", t.variable,
                              f"row {int(r)} not normalized (sum={sums[r]!r})")
                )
    return out


def require_valid(model: CausalModel) -> None:
    violations = validate(model)
    if violations:
        raise ModelError("; ".join(str(v) for v in violations))


def _descendants(model: CausalModel, v: str) -> set[str]:
    out: set[str] = set()
    stack = [v]
    while stack:
        cur = stack.pop()
        for c in model.children(cur):
            if c not in out:
                out.add(c)
                stack.append(c)
    return out


def non_descendants(model: CausalModel, v: str) -> set[str]:
    """All variables not reachable from `v` by a directed path, excluding
    `v` itself."""
    model.variable(v)
    reach = _descendants(model, v)
    return {n for n in model.names if n != v and n not in reach}


def depth_order(model: CausalModel) -> list[str]:
    """Attributes sorted by depth (longest directed path from any root),
    ties broken by declaration order. The class variable and auxiliary
    inputs are excluded."""
    depth: dict[str, int] = {}
    for name in model.topological_order():
        ps = model.parents(name)
        depth[name] = 0 if not ps else 1 + max(depth[p] for p in ps)
    attrs = model.attributes
    order = {n: i for i, n in enumerate(model.names)}
    return sorted(attrs, key=lambda n: (depth[n], order[n]))


def mutilate(model: CausalModel, do: InterventionSet) -> CausalModel:
    """Remove incoming edges of every intervened variable and replace its
    CPD with a point mass on the forced state. Untouched mechanisms are
    preserved as-is."""
    do.validate_against(model)
    forced = do.as_dict()
    if not forced:
        return model
    edges = tuple((p, c) for p, c in model.edges if c not in forced)
    cpds = None
    if model.cpds is not None:
        new = []
        for t in model.cpds:
            if t.variable in forced:
                card = model.card(t.variable)
                row = np.zeros((1, card))
                row[0, forced[t.variable]] = 1.0
                new.append(CpdTable(t.variable, (), row))
            else:
                new.append(t)
        cpds = tuple(new)
    return CausalModel(model.variables, edges, cpds)


def fit_cpds(model: CausalModel, data: LabelTable, smoothing: float = 1.0) -> CausalModel:
    """Closed-form maximum-likelihood CPDs from fully observed rows, with
    additive smoothing: (count + s) / (parent count + s * card)."""
    if smoothing < 0:
        raise ModelError("smoothing must be nonnegative")
    missing = [n for n in model.names if n not in data.columns]
    if missing:
        raise ModelError(f"data missing columns: {missing}")
    tables = []
    for v in model.variables:
        parents = model.parents(v.name)
        child = data.column(v.name)
        if len(parents) == 0:
            counts = np.bincount(child, minlength=v.card).astype(float).reshape(1, v.card)
        else:
            radix = np.zeros(len(data), dtype=np.int64)
            for p in parents:
                radix = radix * model.card(p) + data.column(p)
            rows = int(np.prod([model.card(p) for p in parents]))
            counts = np.zeros((rows, v.card))
            np.add.at(counts, (radix, child), 1.0)
        counts += smoothing
        row_sums = counts.sum(axis=1, keepdims=True)
        table = np.where(row_sums > 0, counts / np.maximum(row_sums, 1e-300), 1.0 / v.card)
        tables.append(CpdTable(v.name, tuple(parents), table))
    return CausalModel(model.variables, model.edges, tuple(tables))


# -- serialization -----------------------------------------------------------


def serialize_model(model: CausalModel) -> str:
    doc: dict = {
        "variables": [
            {"name": v.name, "states": list(v.states), "role": v.role}
            for v in model.variables
        ],
        "edges": [[p, c] for p, c in model.edges],
    }
    if model.cpds is not None:
        doc["cpds"] = {
            t.variable: {
                "parents": list(t.parent_order),
                "table": [[float(x) for x in row] for row in t.probabilities],
            }
            for t in model.cpds
        }
    return dumps_canonical(doc)


def parse_model(text: str) -> CausalModel:
    import json

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict) or "variables" not in doc or "edges" not in doc:
        raise FormatError("model document needs 'variables' and 'edges'")
    try:
        variables = tuple(
            Variable(v["name"], tuple(v["states"]), v.get("role", ROLE_ATTRIBUTE))
            for v in doc["variables"]
        )
        edges = tuple((e[0], e[1]) for e in doc["edges"])
    except (KeyError, TypeError, IndexError) as e:
        raise FormatError(f"malformed model document: {e}") from None
    cpds = None
    if "cpds" in doc and doc["cpds"] is not None:
        tables = []
        for name, spec in doc["cpds"].items():
            try:
                tables.append(
                    CpdTable(name, tuple(spec["parents"]), np.asarray(spec["table"], dtype=float))
                )
            except (KeyError, TypeError, ValueError) as e:
                raise FormatError(f"malformed CPD for {name}: {e}") from None
        # keep declaration order of variables, not JSON key order
        by_name = {t.variable: t for t in tables}
        extra = [n for n in by_name if not any(v.name == n for v in variables)]
        if extra:
            raise FormatError(f"CPDs for undeclared variables: {extra}")
        cpds = tuple(by_name[v.name] for v in variables if v.name in by_name)
    model = CausalModel(variables, edges, cpds)
    violations = validate(model)
    if violations:
        raise FormatError("invalid model: " + "; ".join(str(v) for v in violations))
    return model
