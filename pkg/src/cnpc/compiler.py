"""Compilation of a causal model into an arithmetic circuit.

The circuit encodes the network polynomial: a multilinear form in the CPD
entries (parameter leaves) and per-state evidence indicators. Construction
runs variable elimination symbolically over one CPD factor and one
indicator factor per variable; each factor multiplication emits product
nodes entrywise and each sum-out emits one sum node per remaining-scope
assignment. Structurally identical nodes are emitted once.

Node indices are created children-first, so index order is a valid
evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as iter_product

from .model import CausalModel, FormatError, ModelError, require_valid
from .jsonio import dumps_canonical

KIND_SUM = "sum"
KIND_PRODUCT = "product"
KIND_PARAM = "param_leaf"
KIND_INDICATOR = "indicator_leaf"


@dataclass(frozen=True)
class Node:
    kind: str
    children: tuple[int, ...] = ()
    # (variable, state, parent states) for param leaves;
    # (variable, state) for indicator leaves; None for sum/product.
    binding: tuple | None = None


@dataclass(frozen=True, eq=False)
class Circuit:
    nodes: tuple[Node, ...]
    root: int
    eval_order: tuple[int, ...]
    model_digest: str

    _caches: dict = field(default_factory=dict, repr=False, compare=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.root == other.root
            and self.eval_order == other.eval_order
            and self.model_digest == other.model_digest
        )

    def __len__(self) -> int:
        return len(self.nodes)

    def param_leaves(self) -> dict[tuple, int]:
        """binding -> node index for every parameter leaf."""
        if "params" not in self._caches:
            self._caches["params"] = {
                n.binding: i for i, n in enumerate(self.nodes) if n.kind == KIND_PARAM
            }
        return self._caches["params"]

    def indicator_leaves(self) -> dict[tuple, int]:
        if "indicators" not in self._caches:
            self._caches["indicators"] = {
                n.binding: i for i, n in enumerate(self.nodes) if n.kind == KIND_INDICATOR
            }
        return self._caches["indicators"]

    def variable_states(self) -> dict[str, int]:
        """Cardinality of each variable, recovered from indicator leaves."""
        if "cards" not in self._caches:
            cards: dict[str, int] = {}
            for var, state in self.indicator_leaves():
                cards[var] = max(cards.get(var, 0), state + 1)
            self._caches["cards"] = cards
        return self._caches["cards"]

    def internal_node_count(self) -> int:
        return sum(1 for n in self.nodes if n.kind in (KIND_SUM, KIND_PRODUCT))


class _Builder:
    """Accumulates nodes with structural deduplication."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.dedup: dict[tuple, int] = {}

    def leaf(self, kind: str, binding: tuple) -> int:
        key = (kind, binding)
        if key not in self.dedup:
            self.dedup[key] = len(self.nodes)
            self.nodes.append(Node(kind, (), binding))
        return self.dedup[key]

    def op(self, kind: str, children: tuple[int, ...]) -> int:
        key = (kind, tuple(sorted(children)))
        if key not in self.dedup:
            self.dedup[key] = len(self.nodes)
            self.nodes.append(Node(kind, children, None))
        return self.dedup[key]


@dataclass(frozen=True)
class _Factor:
    """Symbolic factor: node index per assignment of its scope, mixed-radix
    with the first scope variable most significant."""

    scope: tuple[str, ...]
    entries: tuple[int, ...]

    def entry(self, assignment: dict[str, int], cards: dict[str, int]) -> int:
        idx = 0
        for v in self.scope:
            idx = idx * cards[v] + assignment[v]
        return self.entries[idx]


def minfill_order(model: CausalModel) -> list[str]:
    """Greedy elimination order on the interaction graph (every CPD scope
    becomes a clique). At each step the variable adding the fewest fill
    edges is eliminated; ties break by declaration order."""
    require_valid(model)
    names = model.names
    adj: dict[str, set[str]] = {n: set() for n in names}
    for v in model.variables:
        scope = model.parents(v.name) + [v.name]
        for a in scope:
            for b in scope:
                if a != b:
                    adj[a].add(b)
    remaining = list(names)
    order: list[str] = []
    while remaining:
        best = None
        best_fill = None
        for v in remaining:
            nbrs = [u for u in adj[v] if u in remaining and u != v]
            fill = 0
            for i in range(len(nbrs)):
                for j in range(i + 1, len(nbrs)):
                    if nbrs[j] not in adj[nbrs[i]]:
                        fill += 1
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
        assert best is not None
        nbrs = [u for u in adj[best] if u in remaining and u != best]
        for i in range(len(nbrs)):
            for j in range(i + 1, len(nbrs)):
                adj[nbrs[i]].add(nbrs[j])
                adj[nbrs[j]].add(nbrs[i])
        remaining.remove(best)
        order.append(best)
    return order


def compile(model: CausalModel, order: list[str] | None = None) -> Circuit:
    """Build the arithmetic circuit for `model` along the given elimination
    order (min-fill by default).

    Per variable there is one CPD factor over (parents, variable) whose
    entries are parameter leaves, and one indicator factor over the
    variable alone. Eliminating a variable multiplies every live factor
    mentioning it and sums the product over its states.
    """
    require_valid(model)
    if not model.has_cpds():
        raise ModelError("cannot compile a model without CPDs")
    if order is None:
        order = minfill_order(model)
    if sorted(order) != sorted(model.names):
        raise ModelError("elimination order must be a permutation of the model variables")

    cards = {v.name: v.card for v in model.variables}
    decl = {n: i for i, n in enumerate(model.names)}
    b = _Builder()

    factors: list[_Factor] = []
    for v in model.variables:
        cpd = model.cpd(v.name)
        scope = tuple(cpd.parent_order) + (v.name,)
        entries = []
        for combo in iter_product(*[range(cards[s]) for s in scope]):
            parent_states = combo[:-1]
            entries.append(b.leaf(KIND_PARAM, (v.name, combo[-1], parent_states)))
        factors.append(_Factor(scope, tuple(entries)))
        ind_entries = tuple(
            b.leaf(KIND_INDICATOR, (v.name, s)) for s in range(cards[v.name])
        )
        factors.append(_Factor((v.name,), ind_entries))

    for var in order:
        involved = [f for f in factors if var in f.scope]
        rest = [f for f in factors if var not in f.scope]
        union = sorted({s for f in involved for s in f.scope}, key=decl.__getitem__)
        keep = tuple(s for s in union if s != var)

        entries = []
        for combo in iter_product(*[range(cards[s]) for s in keep]):
            assignment = dict(zip(keep, combo))
            terms = []
            for state in range(cards[var]):
                assignment[var] = state
                children = tuple(f.entry(assignment, cards) for f in involved)
                terms.append(children[0] if len(children) == 1 else b.op(KIND_PRODUCT, children))
            del assignment[var]
            entries.append(b.op(KIND_SUM, tuple(terms)))
        rest.append(_Factor(keep, tuple(entries)))
        factors = rest

    # disconnected components leave several scalar factors behind
    finals = tuple(f.entries[0] for f in factors)
    root = finals[0] if len(finals) == 1 else b.op(KIND_PRODUCT, finals)

    return Circuit(
        nodes=tuple(b.nodes),
        root=root,
        eval_order=tuple(range(len(b.nodes))),
        model_digest=model.digest(),
    )


# -- serialization -----------------------------------------------------------


def serialize_circuit(circuit: Circuit, model: CausalModel) -> str:
    """Circuit file with bindings expressed as variable and state names;
    only interpretable together with the model whose digest is embedded."""
    nodes = []
    for n in circuit.nodes:
        entry: dict = {"kind": n.kind}
        if n.kind in (KIND_SUM, KIND_PRODUCT):
            entry["children"] = list(n.children)
        elif n.kind == KIND_PARAM:
            var, state, parent_states = n.binding
            parents = model.parents(var)
            entry["binding"] = {
                "variable": var,
                "state": model.variable(var).states[state],
                "parent_states": [
                    model.variable(p).states[s] for p, s in zip(parents, parent_states)
                ],
            }
        else:
            var, state = n.binding
            entry["binding"] = {
                "variable": var,
                "state": model.variable(var).states[state],
            }
        nodes.append(entry)
    return dumps_canonical(
        {
            "nodes": nodes,
            "root": circuit.root,
            "eval_order": list(circuit.eval_order),
            "model_digest": circuit.model_digest,
        }
    )


def parse_circuit(text: str, model: CausalModel) -> Circuit:
    import json

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"not valid JSON: {e}") from None
    for key in ("nodes", "root", "eval_order", "model_digest"):
        if key not in doc:
            raise FormatError(f"circuit document missing {key!r}")
    if doc["model_digest"] != model.digest():
        raise FormatError("circuit was compiled for a different model (digest mismatch)")

    state_index = {
        v.name: {s: i for i, s in enumerate(v.states)} for v in model.variables
    }
    nodes: list[Node] = []
    seen_param: set[tuple] = set()
    seen_ind: set[tuple] = set()
    for i, entry in enumerate(doc["nodes"]):
        kind = entry.get("kind")
        if kind in (KIND_SUM, KIND_PRODUCT):
            children = tuple(entry.get("children", ()))
            for c in children:
                if not isinstance(c, int) or not 0 <= c < len(doc["nodes"]):
                    raise FormatError(f"node {i}: child index {c!r} out of range")
                if c >= i:
                    raise FormatError(f"node {i}: child {c} does not precede it")
            nodes.append(Node(kind, children, None))
        elif kind == KIND_PARAM:
            bnd = entry["binding"]
            var = bnd["variable"]
            state = state_index[var][bnd["state"]]
            parents = model.parents(var)
            if len(bnd["parent_states"]) != len(parents):
                raise FormatError(f"node {i}: wrong parent count for {var}")
            parent_states = tuple(
                state_index[p][s] for p, s in zip(parents, bnd["parent_states"])
            )
            binding = (var, state, parent_states)
            if binding in seen_param:
                raise FormatError(f"duplicate parameter leaf binding {binding}")
            seen_param.add(binding)
            nodes.append(Node(kind, (), binding))
        elif kind == KIND_INDICATOR:
            bnd = entry["binding"]
            var = bnd["variable"]
            binding = (var, state_index[var][bnd["state"]])
            if binding in seen_ind:
                raise FormatError(f"duplicate indicator leaf binding {binding}")
            seen_ind.add(binding)
            nodes.append(Node(kind, (), binding))
        else:
            raise FormatError(f"node {i}: unknown kind {kind!r}")
    root = doc["root"]
    if not isinstance(root, int) or not 0 <= root < len(nodes):
        raise FormatError(f"root index {root!r} out of range")
    eval_order = tuple(doc["eval_order"])
    if sorted(eval_order) != list(range(len(nodes))):
        raise FormatError("eval_order is not a permutation of node indices")
    return Circuit(tuple(nodes), root, eval_order, doc["model_digest"])
