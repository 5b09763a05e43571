"""Circuit evaluation and query procedures.

One bottom-up pass over the node list answers any marginal; conditionals
take two passes. Interventional queries clamp the intervened variable's
parameter leaves to 1 via a non-destructive overlay and then run the same
indicator machinery, so the base parameter binding is never mutated.

Circuits and bindings are immutable; every evaluation allocates its own
scratch array, so concurrent queries over a shared circuit are safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iter_product

import numpy as np

from .compiler import KIND_INDICATOR, KIND_PARAM, KIND_PRODUCT, KIND_SUM, Circuit
from .model import CausalModel, InterventionSet, ModelError

ATTR_TABLE_CAP = 2 ** 20

Assignment = dict[str, int]


class _EvalCounter:
    """Counts forward passes; test instrumentation only."""

    def __init__(self):
        self.count = 0


eval_counter = _EvalCounter()


def reset_eval_counter() -> None:
    eval_counter.count = 0


@dataclass(frozen=True)
class ParamBinding:
    """Values for every parameter leaf, keyed by
    (variable, state, parent state tuple)."""

    values: dict

    @classmethod
    def from_model(cls, model: CausalModel) -> "ParamBinding":
        if not model.has_cpds():
            raise ModelError("model has no CPDs to bind")
        values: dict = {}
        for v in model.variables:
            cpd = model.cpd(v.name)
            parent_cards = [model.card(p) for p in cpd.parent_order]
            for row, combo in enumerate(iter_product(*[range(c) for c in parent_cards])):
                for state in range(v.card):
                    values[(v.name, state, combo)] = float(cpd.probabilities[row, state])
        return cls(values)


@dataclass(frozen=True)
class IndicatorState:
    """0/1 value for every indicator leaf, keyed by (variable, state)."""

    values: dict


def _compiled_ops(circuit: Circuit):
    """Per-node (kind code, children) in eval order, cached on the circuit."""
    caches = circuit._caches
    if "ops" not in caches:
        kind_code = {KIND_SUM: 0, KIND_PRODUCT: 1, KIND_PARAM: 2, KIND_INDICATOR: 3}
        caches["ops"] = [
            (kind_code[circuit.nodes[i].kind], circuit.nodes[i].children, i)
            for i in circuit.eval_order
        ]
    return caches["ops"]


def evaluate(circuit: Circuit, params: ParamBinding, indicators: IndicatorState) -> float:
    """One bottom-up pass; sum nodes add children, product nodes multiply."""
    eval_counter.count += 1
    values = [0.0] * len(circuit.nodes)
    pvals = params.values
    ivals = indicators.values
    for code, children, i in _compiled_ops(circuit):
        if code == 0:
            acc = 0.0
            for c in children:
                acc += values[c]
            values[i] = acc
        elif code == 1:
            acc = 1.0
            for c in children:
                acc *= values[c]
            values[i] = acc
        elif code == 2:
            try:
                values[i] = pvals[circuit.nodes[i].binding]
            except KeyError:
                raise ModelError(f"parameter binding missing {circuit.nodes[i].binding}") from None
        else:
            try:
                values[i] = ivals[circuit.nodes[i].binding]
            except KeyError:
                raise ModelError(f"indicator missing {circuit.nodes[i].binding}") from None
    return values[circuit.root]


def indicators_for_event(circuit: Circuit, event: Assignment) -> IndicatorState:
    """Indicators compatible with `event` set to 1, other states of event
    variables 0, unconstrained variables all 1."""
    cards = circuit.variable_states()
    for name, state in event.items():
        if name not in cards:
            raise ModelError(f"unknown variable {name!r} in event")
        if not 0 <= state < cards[name]:
            raise ModelError(f"state index {state} out of range for {name}")
    values = {}
    for (var, state) in circuit.indicator_leaves():
        if var in event:
            values[(var, state)] = 1.0 if event[var] == state else 0.0
        else:
            values[(var, state)] = 1.0
    return IndicatorState(values)


def query_marginal(circuit: Circuit, params: ParamBinding, event: Assignment) -> float:
    return evaluate(circuit, params, indicators_for_event(circuit, event))


def query_conditional(
    circuit: Circuit, params: ParamBinding, target: Assignment, evidence: Assignment
) -> float:
    for k in target:
        if k in evidence and evidence[k] != target[k]:
            return 0.0
    denom = query_marginal(circuit, params, evidence)
    if denom <= 0.0:
        raise ModelError("evidence has zero probability")
    merged = dict(evidence)
    merged.update(target)
    return query_marginal(circuit, params, merged) / denom


def _clamped_params(circuit: Circuit, params: ParamBinding, do: InterventionSet) -> ParamBinding:
    forced = do.as_dict()
    if not forced:
        return params
    overlay = dict(params.values)
    for binding in circuit.param_leaves():
        if binding[0] in forced:
            overlay[binding] = 1.0
    return ParamBinding(overlay)


def query_interventional(
    circuit: Circuit, params: ParamBinding, event: Assignment, do: InterventionSet
) -> float:
    """Two steps: clamp every parameter leaf of each intervened variable to
    1, then evaluate with indicators fixed by the union of the forced
    values and the event (a contradiction yields 0, not an error)."""
    forced = do.as_dict()
    for name, state in event.items():
        if name in forced and forced[name] != state:
            return 0.0
    merged = dict(forced)
    merged.update(event)
    return evaluate(
        circuit,
        _clamped_params(circuit, params, do),
        indicators_for_event(circuit, merged),
    )


def attribute_space(model: CausalModel) -> list[tuple[int, ...]]:
    """Joint attribute assignments in mixed-radix order (first attribute
    most significant)."""
    attrs = model.attributes
    total = 1
    for a in attrs:
        total *= model.card(a)
    if total > ATTR_TABLE_CAP:
        raise ModelError(
            f"joint attribute space has {total} states (> {ATTR_TABLE_CAP}); "
            "tables over it cannot be enumerated"
        )
    return list(iter_product(*[range(model.card(a)) for a in attrs]))


def interventional_attr_table(
    circuit: Circuit, model: CausalModel, params: ParamBinding, do: InterventionSet
) -> np.ndarray:
    """P^do over every joint attribute assignment, one pass per entry.
    Entries contradicting the intervention are exactly 0; the table sums
    to 1 up to float error (no renormalization)."""
    attrs = model.attributes
    clamped = _clamped_params(circuit, params, do)
    forced = do.as_dict()
    table = np.zeros(len(attribute_space(model)))
    for i, combo in enumerate(attribute_space(model)):
        if any(forced.get(a, s) != s for a, s in zip(attrs, combo)):
            continue
        event = dict(zip(attrs, combo))
        event.update(forced)
        table[i] = evaluate(circuit, clamped, indicators_for_event(circuit, event))
    return table


def class_conditional_table(
    circuit: Circuit, model: CausalModel, params: ParamBinding
) -> tuple[np.ndarray, np.ndarray]:
    """P(class | attributes) for every joint attribute assignment.

    Returns (table, flags): table has one normalized row per assignment;
    rows whose attribute assignment has zero mass are uniform and flagged.
    Computed once per model and reused by the fusion layer.
    """
    attrs = model.attributes
    y = model.class_variable
    y_card = model.card(y)
    space = attribute_space(model)
    table = np.empty((len(space), y_card))
    flags = np.zeros(len(space), dtype=bool)
    for i, combo in enumerate(space):
        event = dict(zip(attrs, combo))
        mass = query_marginal(circuit, params, event)
        if mass <= 0.0:
            table[i, :] = 1.0 / y_card
            flags[i] = True
            continue
        for s in range(y_card):
            table[i, s] = query_marginal(circuit, params, {**event, y: s}) / mass
        table[i, :] /= table[i, :].sum()
    return table, flags
