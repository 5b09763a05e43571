"""Brute-force inference by full joint enumeration.

This is the correctness authority for the compiled circuits and the fusion
rules: every probability here is a plain sum over the complete joint
table, in double precision and linear space. The joint-state cap keeps it
an internal test oracle; production queries belong to the circuit.

Assignments map variable names to state indices and may be partial.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .model import (
    ROLE_ATTRIBUTE,
    ROLE_INPUT,
    CausalModel,
    InterventionSet,
    ModelError,
    mutilate,
)

ENUMERATION_CAP = 2 ** 22

Assignment = dict[str, int]


class EnumerationCapError(ModelError):
    pass


def _check_cap(model: CausalModel) -> None:
    total = 1
    for c in model.cards():
        total *= c
    if total > ENUMERATION_CAP:
        raise EnumerationCapError(
            f"joint space has {total} states (> {ENUMERATION_CAP}); "
            "use the compiled circuit for models of this size"
        )


def _check_assignment(model: CausalModel, a: Assignment) -> None:
    for name, state in a.items():
        var = model.variable(name)
        if not 0 <= state < var.card:
            raise ModelError(f"state index {state} out of range for {name}")


def joint_table(model: CausalModel) -> np.ndarray:
    """Full joint as an ndarray with one axis per variable in declaration
    order."""
    if not model.has_cpds():
        raise ModelError("model has no CPDs")
    _check_cap(model)
    cards = model.cards()
    table = np.ones(cards)
    for v in model.variables:
        cpd = model.cpd(v.name)
        axes = [model.var_index(p) for p in cpd.parent_order] + [model.var_index(v.name)]
        shaped = cpd.probabilities.reshape(
            [model.card(p) for p in cpd.parent_order] + [v.card]
        )
        table = table * _broadcast_cpd(shaped, axes, cards)
    return table


def _broadcast_cpd(shaped: np.ndarray, axes: list[int], cards: list[int]) -> np.ndarray:
    out_shape = [1] * len(cards)
    order = np.argsort(axes)
    moved = np.transpose(shaped, order)
    for ax in axes:
        out_shape[ax] = cards[ax]
    return moved.reshape(out_shape)


def joint(model: CausalModel, full: Assignment) -> float:
    """Probability of one complete assignment (product of CPD entries)."""
    if set(full) != set(model.names):
        missing = sorted(set(model.names) - set(full))
        raise ModelError(f"assignment must cover every variable; missing {missing}")
    _check_assignment(model, full)
    value = 1.0
    for v in model.variables:
        cpd = model.cpd(v.name)
        row = 0
        for p in cpd.parent_order:
            row = row * model.card(p) + full[p]
        value *= float(cpd.probabilities[row, full[v.name]])
    return value


def marginal(model: CausalModel, partial: Assignment) -> float:
    """Probability of a partial assignment: sum of the joint over all
    completions."""
    _check_assignment(model, partial)
    table = joint_table(model)
    idx: list = []
    sum_axes = []
    for i, name in enumerate(model.names):
        if name in partial:
            idx.append(partial[name])
        else:
            idx.append(slice(None))
            sum_axes.append(i)
    sub = table[tuple(idx)]
    return float(np.sum(sub))


def conditional(model: CausalModel, target: Assignment, evidence: Assignment) -> float:
    for k in target:
        if k in evidence and evidence[k] != target[k]:
            return 0.0
    denom = marginal(model, evidence)
    if denom <= 0.0:
        raise ModelError("evidence has zero probability")
    merged = dict(evidence)
    merged.update(target)
    return marginal(model, merged) / denom


def interventional(model: CausalModel, query: Assignment, do: InterventionSet) -> float:
    """Marginal of `query` on the mutilated model; query coordinates that
    contradict the intervention get probability 0."""
    forced = do.as_dict()
    for name, state in query.items():
        if name in forced and forced[name] != state:
            return 0.0
    return marginal(mutilate(model, do), query)


@dataclass(frozen=True)
class ClassGivenInputResult:
    """Interventional class distribution given an input value, computed two
    ways: directly on the mutilated world, and as the composition
    sum_a P(Y|A=a) * P^do(A=a|X=x)."""

    direct: np.ndarray
    composed: np.ndarray

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.direct - self.composed)))


def _attribute_assignments(model: CausalModel) -> list[Assignment]:
    attrs = model.attributes
    out = []
    for combo in product(*[range(model.card(a)) for a in attrs]):
        out.append(dict(zip(attrs, combo)))
    return out


def _input_variable(world: CausalModel) -> str:
    inputs = [v.name for v in world.variables if v.role == ROLE_INPUT]
    if len(inputs) != 1:
        raise ModelError(f"world must have exactly one auxiliary-input variable, found {inputs}")
    return inputs[0]


def interventional_class_given_x(
    world: CausalModel, x: int, do: InterventionSet
) -> ClassGivenInputResult:
    """Both routes to P^do(Y | X=x). The composition route uses the
    observational class-given-attributes conditional, which interventions
    on attributes leave unchanged."""
    x_name = _input_variable(world)
    y_name = world.class_variable
    y_card = world.card(y_name)

    cut = mutilate(world, do)
    px = marginal(cut, {x_name: x})
    if px <= 0.0:
        raise ModelError(f"P^do({x_name}={x}) = 0; conditional undefined")
    direct = np.array(
        [marginal(cut, {x_name: x, y_name: y}) / px for y in range(y_card)]
    )

    composed = np.zeros(y_card)
    for a in _attribute_assignments(world):
        pa_do_x = marginal(cut, {**a, x_name: x}) / px
        if pa_do_x == 0.0:
            continue
        pa_obs = marginal(world, a)
        if pa_obs <= 0.0:
            continue
        for y in range(y_card):
            composed[y] += (marginal(world, {**a, y_name: y}) / pa_obs) * pa_do_x
    return ClassGivenInputResult(direct, composed)


@dataclass(frozen=True)
class SimplisticAttrResult:
    """Interventional attribute distribution given X=x via the reweighting
    P^do(a|x) proportional to [P^do(a)/P(a)] * P(a|x), against the
    mutilated-graph conditional. Valid only when the input's parents are
    exactly the attributes."""

    ratio_based: np.ndarray
    mutilated: np.ndarray
    assignments: tuple

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.ratio_based - self.mutilated)))


def simplistic_interventional_attr(
    world: CausalModel, x: int, do: InterventionSet
) -> SimplisticAttrResult:
    x_name = _input_variable(world)
    if set(world.parents(x_name)) != set(world.attributes):
        raise ModelError(
            f"precondition violated: parents of {x_name} are "
            f"{world.parents(x_name)}, not the full attribute set"
        )
    cut = mutilate(world, do)
    px_do = marginal(cut, {x_name: x})
    if px_do <= 0.0:
        raise ModelError(f"P^do({x_name}={x}) = 0")
    px_obs = marginal(world, {x_name: x})
    if px_obs <= 0.0:
        raise ModelError(f"P({x_name}={x}) = 0")

    assignments = _attribute_assignments(world)
    zero_mass = [a for a in assignments if marginal(world, a) <= 0.0]
    if zero_mass:
        raise ModelError(
            f"ratio undefined: {len(zero_mass)} attribute assignments have zero "
            f"observational mass, e.g. {zero_mass[0]}"
        )

    raw = np.empty(len(assignments))
    direct = np.empty(len(assignments))
    for i, a in enumerate(assignments):
        raw[i] = (marginal(cut, a) / marginal(world, a)) * (
            marginal(world, {**a, x_name: x}) / px_obs
        )
        direct[i] = marginal(cut, {**a, x_name: x}) / px_do
    total = raw.sum()
    if total <= 0.0:
        raise ModelError("ratio formula has empty support")
    return SimplisticAttrResult(raw / total, direct, tuple(tuple(sorted(a.items())) for a in assignments))
