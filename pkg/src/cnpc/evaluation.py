"""Intervention sweeps, accuracy metrics, and numerical verification of
the compositional KL error bounds.

Sweeps intervene on attributes in depth order with ground-truth values and
score both prediction variants at every budget. Bound verification builds
small fully discrete worlds (attributes, class, and a discrete input whose
parents are the attributes) so that every expectation is an exact finite
sum, then checks the upper bounds trial by trial.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as iter_product
from pathlib import Path

import numpy as np

from . import fusion, oracle, runtime
from .compiler import Circuit
from .datagen import Dataset
from .jsonio import format_float
from .model import (
    ROLE_ATTRIBUTE,
    ROLE_CLASS,
    ROLE_INPUT,
    CausalModel,
    CpdTable,
    InterventionSet,
    ModelError,
    Variable,
    depth_order,
    mutilate,
)
from .predictor import PredictorParams, clamp, forward_batch

KL_FLOOR = 1e-12
COROLLARY2_ALPHAS = (0.0, 0.3, 0.7, 1.0)


def kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence with 0*log(0) = 0 and the second argument floored."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ModelError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    mask = p > 0.0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], KL_FLOOR)))))


def metrics(
    pred_class: np.ndarray,
    pred_attrs: np.ndarray,
    true_class: np.ndarray,
    true_attrs: np.ndarray,
) -> tuple[float, float]:
    """(task accuracy, mean attribute accuracy): exact-match rates, with
    attribute accuracy averaged over attributes."""
    if len(pred_class) == 0:
        raise ModelError("empty prediction set")
    task = float(np.mean(np.asarray(pred_class) == np.asarray(true_class)))
    attr = float(np.mean(np.asarray(pred_attrs) == np.asarray(true_attrs), axis=0).mean())
    return task, attr


# -- intervention sweeps -----------------------------------------------------


@dataclass
class SweepCase:
    """One seed's worth of inputs: the (possibly corrupted) dataset plus
    the circuit and predictor trained for that seed. The circuit is
    compiled from the *fitted* model, which shares structure (not CPDs)
    with the dataset's generator model."""

    seed: int
    dataset: Dataset
    predictor: PredictorParams
    circuit: Circuit
    params: runtime.ParamBinding
    corruption: str = "none"
    fitted_model: CausalModel | None = None

    def model_for_queries(self) -> CausalModel:
        return self.fitted_model if self.fitted_model is not None else self.dataset.model


@dataclass(frozen=True)
class SweepRow:
    variant: str
    corruption: str
    alpha: float
    budget: int
    seed: int
    task_acc: float
    attr_acc: float


def _cached_class_table(case: SweepCase) -> np.ndarray:
    cache = case.circuit._caches
    if "class_table" not in cache:
        table, _ = runtime.class_conditional_table(
            case.circuit, case.model_for_queries(), case.params
        )
        cache["class_table"] = table
    return cache["class_table"]


def _interventional_table(case: SweepCase, do: InterventionSet) -> np.ndarray:
    cache = case.circuit._caches.setdefault("attr_tables", {})
    key = do.assignments
    if key not in cache:
        cache[key] = runtime.interventional_attr_table(
            case.circuit, case.model_for_queries(), case.params, do
        )
    return cache[key]


def run_sweep(
    cases: list[SweepCase],
    alpha: float,
    budgets: list[int] | None = None,
    split: str = "test",
    joint_argmax_attrs: bool = False,
) -> list[SweepRow]:
    """Score both variants at every intervention budget.

    Budget b forces the first b depth-order attributes to their
    ground-truth values per instance. With no intervention both variants
    share the observational prediction rule. Attribute accuracy scores the
    clamped per-head argmax for NPC and, for CNPC, the per-attribute
    marginals of the product-of-experts table (or its joint argmax with
    `joint_argmax_attrs`, a diagnostic mode).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ModelError(f"alpha must be in [0,1], got {alpha}")
    rows: list[SweepRow] = []
    for case in cases:
        model = case.dataset.model
        query_model = case.model_for_queries()
        if query_model.structure_digest() != model.structure_digest():
            raise ModelError("circuit/dataset model mismatch (structure digest check failed)")
        if case.circuit.model_digest != query_model.digest():
            raise ModelError("circuit/dataset model mismatch (digest check failed)")
        attrs = model.attributes
        cards = [model.card(a) for a in attrs]
        order = depth_order(model)
        k = len(order)
        budget_list = budgets if budgets is not None else list(range(k + 1))

        idx = case.dataset.split_rows(split)
        emb = case.dataset.embeddings[idx]
        true_attrs = case.dataset.attr_labels()[idx]
        true_class = case.dataset.class_labels()[idx]
        head_dists = forward_batch(case.predictor, emb)
        class_table = _cached_class_table(case)

        for b in budget_list:
            targets = order[:b]
            npc_class = np.empty(len(idx), dtype=np.int64)
            cnpc_class = np.empty(len(idx), dtype=np.int64)
            npc_attr = np.empty((len(idx), len(attrs)), dtype=np.int64)
            cnpc_attr = np.empty((len(idx), len(attrs)), dtype=np.int64)
            for i in range(len(idx)):
                dists = [d[i] for d in head_dists]
                do = InterventionSet.from_dict(
                    {t: int(true_attrs[i, attrs.index(t)]) for t in targets}
                )
                clamped = clamp(dists, do, attrs)
                npc_dist = fusion.npc_class_dist(clamped, class_table)
                npc_class[i] = int(np.argmax(npc_dist))
                npc_attr[i] = [int(np.argmax(d)) for d in clamped]
                if b == 0:
                    # observational path: both variants coincide
                    cnpc_class[i] = npc_class[i]
                    poe_table = fusion.joint_from_heads(clamped)
                else:
                    poe = fusion.poe_attribute_dist(
                        clamped, _interventional_table(case, do), alpha
                    )
                    cnpc_dist = fusion.cnpc_interventional(poe, class_table)
                    cnpc_class[i] = int(np.argmax(cnpc_dist))
                    poe_table = poe.table
                if joint_argmax_attrs:
                    cnpc_attr[i], _ = fusion.predict_labels(
                        poe_table, np.ones(class_table.shape[1]), cards
                    )
                else:
                    cnpc_attr[i] = [
                        int(np.argmax(m)) for m in fusion.attr_marginals(poe_table, cards)
                    ]
            task, attr = metrics(npc_class, npc_attr, true_class, true_attrs)
            rows.append(SweepRow("NPC", case.corruption, alpha, b, case.seed, task, attr))
            task, attr = metrics(cnpc_class, cnpc_attr, true_class, true_attrs)
            rows.append(SweepRow("CNPC", case.corruption, alpha, b, case.seed, task, attr))
    return rows


def ablate_alpha(
    cases: list[SweepCase], grid: list[float] | None = None
) -> list[SweepRow]:
    """Sweep report at every grid point (default 0.0 to 1.0, step 0.1)."""
    if grid is None:
        grid = [round(0.1 * i, 1) for i in range(11)]
    rows: list[SweepRow] = []
    for alpha in grid:
        rows.extend(run_sweep(cases, alpha))
    return rows


def select_alpha(
    cases: list[SweepCase],
    grid: list[float] | None = None,
    split: str = "val",
) -> float:
    """In-distribution protocol: the grid alpha maximizing mean CNPC task
    accuracy over nonzero budgets on the validation split (ties resolve to
    the smaller alpha). Out-of-distribution runs skip this and use the
    fixed default instead, since no OOD validation data exists."""
    if grid is None:
        grid = [round(0.1 * i, 1) for i in range(11)]
    k = len(depth_order(cases[0].dataset.model))
    budgets = list(range(1, k + 1))
    best_alpha = grid[0]
    best_score = -1.0
    for alpha in grid:
        rows = run_sweep(cases, alpha, budgets=budgets, split=split)
        score = float(np.mean([r.task_acc for r in rows if r.variant == "CNPC"]))
        if score > best_score + 1e-12:
            best_score = score
            best_alpha = alpha
    return best_alpha


def write_report_csv(rows: list[SweepRow], path: str | Path) -> None:
    ordered = sorted(
        rows, key=lambda r: (r.variant, r.corruption, r.alpha, r.budget, r.seed)
    )
    lines = ["variant,corruption,alpha,budget,seed,task_acc,attr_acc"]
    for r in ordered:
        lines.append(
            f"{r.variant},{r.corruption},{format_float(r.alpha)},{r.budget},"
            f"{r.seed},{format_float(r.task_acc)},{format_float(r.attr_acc)}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report_summary(rows: list[SweepRow], path: str | Path, config: dict | None = None) -> None:
    """JSON companion to the CSV: per-cell means over seeds plus a config
    echo, written canonically so identical runs give identical bytes."""
    from .jsonio import dumps_canonical

    cells: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        cells.setdefault((r.variant, r.corruption, r.alpha, r.budget), []).append(r)
    summary = []
    for (variant, corruption, alpha, budget) in sorted(cells):
        group = cells[(variant, corruption, alpha, budget)]
        summary.append(
            {
                "variant": variant,
                "corruption": corruption,
                "alpha": float(alpha),
                "budget": budget,
                "seeds": sorted(r.seed for r in group),
                "task_acc_mean": float(np.mean([r.task_acc for r in group])),
                "attr_acc_mean": float(np.mean([r.attr_acc for r in group])),
            }
        )
    doc = {"cells": summary, "config": config or {}}
    Path(path).write_text(dumps_canonical(doc), encoding="utf-8")


# -- bound verification -------------------------------------------------------


@dataclass(frozen=True)
class BoundRow:
    trial: int
    inequality: str  # theorem1 | corollary1 | corollary2 | bound_ordering
    alpha: float | None
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def write_bounds_csv(rows: list[BoundRow], path: str | Path) -> None:
    lines = ["trial,inequality,alpha,lhs,rhs,slack"]
    for r in rows:
        alpha = "" if r.alpha is None else format_float(r.alpha)
        lines.append(
            f"{r.trial},{r.inequality},{alpha},{format_float(r.lhs)},"
            f"{format_float(r.rhs)},{format_float(r.slack)}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def random_verification_world(
    rng: np.random.Generator, input_parents_all: bool = True
) -> CausalModel:
    """Small discrete world: 2-3 attributes (2-3 states), a class whose
    parents are attributes, and a discrete input X. X is a leaf whose
    parents are all attributes (or a random nonempty subset), which keeps
    the class and the input conditionally independent given attributes."""
    k = int(rng.integers(2, 4))
    attr_cards = [int(rng.integers(2, 4)) for _ in range(k)]
    y_card = int(rng.integers(2, 4))
    x_card = int(rng.integers(2, 5))

    attr_names = [f"A{i+1}" for i in range(k)]
    variables = [
        Variable(attr_names[i], tuple(f"s{j}" for j in range(attr_cards[i])), ROLE_ATTRIBUTE)
        for i in range(k)
    ]
    variables.append(Variable("Y", tuple(f"y{j}" for j in range(y_card)), ROLE_CLASS))
    variables.append(Variable("X", tuple(f"x{j}" for j in range(x_card)), ROLE_INPUT))

    edges = []
    for i in range(k):
        for j in range(i + 1, k):
            if rng.random() < 0.5:
                edges.append((attr_names[i], attr_names[j]))
    y_parents = [a for a in attr_names if rng.random() < 0.7]
    if not y_parents:
        y_parents = [attr_names[int(rng.integers(0, k))]]
    edges.extend((a, "Y") for a in y_parents)
    if input_parents_all:
        x_parents = list(attr_names)
    else:
        x_parents = [a for a in attr_names if rng.random() < 0.6]
        if not x_parents:
            x_parents = [attr_names[0]]
    edges.extend((a, "X") for a in x_parents)

    skeleton = CausalModel(tuple(variables), tuple(edges), None)
    tables = []
    for v in variables:
        rows = 1
        for p in skeleton.parents(v.name):
            rows *= skeleton.card(p)
        tables.append(
            CpdTable(v.name, tuple(skeleton.parents(v.name)), rng.dirichlet(np.ones(v.card), size=rows))
        )
    return CausalModel(tuple(variables), tuple(edges), tuple(tables))


def _without_input(world: CausalModel) -> CausalModel:
    """Drop the auxiliary input (a leaf) from a verification world."""
    keep = tuple(v for v in world.variables if v.role != ROLE_INPUT)
    names = {v.name for v in keep}
    edges = tuple((p, c) for p, c in world.edges if p in names and c in names)
    cpds = tuple(t for t in world.cpds if t.variable in names)
    return CausalModel(keep, edges, cpds)


def _perturb_cpds(model: CausalModel, rng: np.random.Generator, scale: float = 0.5) -> CausalModel:
    tables = []
    for t in model.cpds:
        noisy = t.probabilities * np.exp(scale * rng.standard_normal(t.probabilities.shape))
        noisy /= noisy.sum(axis=1, keepdims=True)
        tables.append(CpdTable(t.variable, t.parent_order, noisy))
    return CausalModel(model.variables, model.edges, tuple(tables))


def _attr_table(model: CausalModel) -> np.ndarray:
    """Joint attribute marginal as a flat table in mixed-radix order over
    the attributes (declaration order)."""
    table = oracle.joint_table(model)
    attr_axes = [model.var_index(a) for a in model.attributes]
    other = [i for i in range(len(model.names)) if i not in attr_axes]
    return np.transpose(table, attr_axes + other).reshape(
        int(np.prod([model.card(a) for a in model.attributes])), -1
    ).sum(axis=1)


def _conditional_attr_table(model: CausalModel, given: dict[str, int]) -> np.ndarray:
    """P(attributes | given) as a flat table; `given` must have positive
    mass."""
    denom = oracle.marginal(model, given)
    if denom <= 0.0:
        raise ModelError(f"conditioning event {given} has zero probability")
    attrs = model.attributes
    out = np.empty(int(np.prod([model.card(a) for a in attrs])))
    for i, combo in enumerate(iter_product(*[range(model.card(a)) for a in attrs])):
        out[i] = oracle.marginal(model, {**dict(zip(attrs, combo)), **given}) / denom
    return out


def _class_given_attrs(model: CausalModel) -> np.ndarray:
    """P(class | attributes) rows for every joint attribute assignment;
    zero-mass assignments get uniform rows (they never enter the
    expectations, which weight by attribute mass)."""
    attrs = model.attributes
    y = model.class_variable
    y_card = model.card(y)
    space = list(iter_product(*[range(model.card(a)) for a in attrs]))
    out = np.full((len(space), y_card), 1.0 / y_card)
    for i, combo in enumerate(space):
        ev = dict(zip(attrs, combo))
        mass = oracle.marginal(model, ev)
        if mass > 0.0:
            out[i] = [oracle.marginal(model, {**ev, y: s}) / mass for s in range(y_card)]
    return out


@dataclass
class _WorldSetup:
    world: CausalModel
    w_model: CausalModel
    theta_heads: list[np.ndarray]  # per head: (x_card, card_k)
    do: InterventionSet


def _setup_trial(rng: np.random.Generator) -> _WorldSetup:
    world = random_verification_world(rng, input_parents_all=True)
    attrs = world.attributes
    x_card = world.card("X")
    theta_heads = [
        rng.dirichlet(np.ones(world.card(a)), size=x_card) for a in attrs
    ]
    j = int(rng.integers(0, len(attrs)))
    value = int(rng.integers(0, world.card(attrs[j])))
    do = InterventionSet.from_dict({attrs[j]: value})
    w_model = _perturb_cpds(_without_input(world), rng)
    return _WorldSetup(world, w_model, theta_heads, do)


def _bound_terms(setup: _WorldSetup, intervened: bool):
    """Exact expectations for one trial. Returns the input weights, the
    per-input attribute KL terms for both models, the class-table KL term,
    and the per-input ground-truth and model class distributions."""
    world, w_model, do = setup.world, setup.w_model, setup.do
    attrs = world.attributes
    x_card = world.card("X")
    active_do = do if intervened else InterventionSet()
    cut = mutilate(world, active_do)

    weights = np.array([oracle.marginal(cut, {"X": x}) for x in range(x_card)])
    class_table_w = _class_given_attrs(w_model)
    pw_attr_do = _attr_table(mutilate(w_model, active_do))

    true_attr_given_x = [
        _conditional_attr_table(cut, {"X": x}) for x in range(x_card)
    ]
    true_class_given_x = [
        oracle.interventional_class_given_x(world, x, active_do).direct
        for x in range(x_card)
    ]
    theta_dists = [
        [setup.theta_heads[k][x] for k in range(len(attrs))] for x in range(x_card)
    ]
    if intervened:
        theta_dists = [clamp(d, active_do, attrs) for d in theta_dists]
    theta_joint = [fusion.joint_from_heads(d) for d in theta_dists]

    kl_theta = np.array(
        [kl(true_attr_given_x[x], theta_joint[x]) for x in range(x_card)]
    )
    kl_w = np.array([kl(true_attr_given_x[x], pw_attr_do) for x in range(x_card)])

    true_attr_marginal = _attr_table(cut)
    true_class_table = _class_given_attrs(_without_input(world))
    term_y = float(
        np.sum(
            [
                true_attr_marginal[i] * kl(true_class_table[i], class_table_w[i])
                for i in range(len(true_attr_marginal))
                if true_attr_marginal[i] > 0.0
            ]
        )
    )
    return (
        weights,
        kl_theta,
        kl_w,
        term_y,
        true_class_given_x,
        theta_dists,
        theta_joint,
        class_table_w,
        pw_attr_do,
    )


def verify_bounds(trials: int, seed: int, max_retries: int = 5) -> list[BoundRow]:
    """Check the compositional error bounds on random discrete worlds.

    Per trial: the observational bound, the interventional bound for the
    clamp-only variant, the weighted interventional bound for the
    product-of-experts variant at several alphas, and, whenever the
    pointwise premise holds, that the second bound is no larger than the
    first.
    """
    rows: list[BoundRow] = []
    for t in range(trials):
        setup = None
        for r in range(max_retries):
            try:
                setup = _setup_trial(np.random.default_rng(seed + 1009 * t + r))
                break
            except ModelError:
                continue
        if setup is None:
            raise ModelError(f"could not construct a verification world for trial {t}")

        # observational bound
        (weights, kl_theta, kl_w, term_y, true_cls, theta_dists, theta_joint,
         class_w, _) = _bound_terms(setup, intervened=False)
        lhs = 0.0
        for x in range(len(weights)):
            if weights[x] <= 0.0:
                continue
            model_cls = fusion.npc_class_dist(theta_dists[x], class_w)
            lhs += weights[x] * kl(true_cls[x], model_cls)
        rows.append(BoundRow(t, "theorem1", None, lhs, float(weights @ kl_theta) + term_y))

        # interventional bounds
        (weights, kl_theta, kl_w, term_y, true_cls, theta_dists, theta_joint,
         class_w, pw_attr_do) = _bound_terms(setup, intervened=True)
        term_theta = float(weights @ kl_theta)
        term_w = float(weights @ kl_w)

        lhs_npc = 0.0
        for x in range(len(weights)):
            if weights[x] <= 0.0:
                continue
            # heads are already clamped by _bound_terms
            model_cls = fusion.npc_class_dist(theta_dists[x], class_w)
            lhs_npc += weights[x] * kl(true_cls[x], model_cls)
        b_npc = term_theta + term_y
        rows.append(BoundRow(t, "corollary1", None, lhs_npc, b_npc))

        premise = all(
            kl_w[x] <= kl_theta[x] for x in range(len(weights)) if weights[x] > 0.0
        )
        for alpha in COROLLARY2_ALPHAS:
            lhs_cnpc = 0.0
            for x in range(len(weights)):
                if weights[x] <= 0.0:
                    continue
                poe = fusion.poe_attribute_dist(theta_dists[x], pw_attr_do, alpha)
                model_cls = fusion.cnpc_interventional(poe, class_w)
                lhs_cnpc += weights[x] * kl(true_cls[x], model_cls)
            b_cnpc = (1.0 - alpha) * term_theta + alpha * term_w + term_y
            rows.append(BoundRow(t, "corollary2", alpha, lhs_cnpc, b_cnpc))
            if premise:
                rows.append(BoundRow(t, "bound_ordering", alpha, b_cnpc, b_npc))
    return rows


def equality_trial(seed: int = 0) -> list[BoundRow]:
    """Perfect-model trial: the joint attribute conditional is taken
    verbatim from the ground truth and the circuit tables are exact, so
    both sides of the observational and clamp-variant bounds vanish."""
    rng = np.random.default_rng(seed)
    world = random_verification_world(rng, input_parents_all=True)
    attrs = world.attributes
    j = int(rng.integers(0, len(attrs)))
    value = int(rng.integers(0, world.card(attrs[j])))
    do = InterventionSet.from_dict({attrs[j]: value})
    true_sub = _without_input(world)
    class_table = _class_given_attrs(true_sub)

    rows: list[BoundRow] = []
    for name, active_do in (("theorem1", InterventionSet()), ("corollary1", do)):
        cut = mutilate(world, active_do)
        x_card = world.card("X")
        weights = np.array([oracle.marginal(cut, {"X": x}) for x in range(x_card)])
        lhs = 0.0
        rhs_theta = 0.0
        for x in range(x_card):
            if weights[x] <= 0.0:
                continue
            p_attr = _conditional_attr_table(cut, {"X": x})
            true_cls = oracle.interventional_class_given_x(world, x, active_do).direct
            model_cls = p_attr @ class_table
            model_cls = model_cls / model_cls.sum()
            lhs += weights[x] * kl(true_cls, model_cls)
            rhs_theta += weights[x] * kl(p_attr, p_attr)
        true_attr_marginal = _attr_table(cut)
        term_y = float(
            np.sum(
                [
                    true_attr_marginal[i] * kl(class_table[i], class_table[i])
                    for i in range(len(true_attr_marginal))
                ]
            )
        )
        rows.append(BoundRow(-1, name, None, lhs, rhs_theta + term_y))
    return rows
