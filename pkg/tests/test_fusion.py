import numpy as np
import pytest
from itertools import product

from cnpc import fusion, oracle, runtime
from cnpc.compiler import compile
from cnpc.datagen import random_model
from cnpc.evaluation import kl
from cnpc.model import InterventionSet, ModelError
from cnpc.predictor import clamp


def rand_heads(rng, cards):
    return [rng.dirichlet(np.ones(c)) for c in cards]


def test_npc_one_hot_heads_pick_row():
    rng = np.random.default_rng(0)
    class_table = rng.dirichlet(np.ones(3), size=4)
    heads = [np.array([0.0, 1.0]), np.array([1.0, 0.0])]
    out = fusion.npc_class_dist(heads, class_table)
    assert np.allclose(out, class_table[2] / class_table[2].sum(), atol=1e-12)


def test_npc_two_term_mixture():
    r0, r1 = np.array([0.9, 0.1]), np.array([0.2, 0.8])
    out = fusion.npc_class_dist([np.array([0.5, 0.5])], np.stack([r0, r1]))
    assert np.allclose(out, 0.5 * r0 + 0.5 * r1, atol=1e-12)


def test_npc_matches_enumeration_on_random_worlds():
    for seed in range(20):
        m = random_model(seed, n_vars=4)
        c = compile(m)
        pb = runtime.ParamBinding.from_model(m)
        class_table, _ = runtime.class_conditional_table(c, m, pb)
        rng = np.random.default_rng(seed)
        heads = rand_heads(rng, [m.card(a) for a in m.attributes])
        out = fusion.npc_class_dist(heads, class_table)
        want = np.zeros(m.card(m.class_variable))
        for i, combo in enumerate(product(*[range(m.card(a)) for a in m.attributes])):
            w = np.prod([heads[k][s] for k, s in enumerate(combo)])
            want += w * class_table[i]
        want /= want.sum()
        assert np.max(np.abs(out - want)) < 1e-12


def test_npc_interventional_paths():
    rng = np.random.default_rng(1)
    class_table = rng.dirichlet(np.ones(3), size=4)
    heads = [np.array([0.6, 0.4]), np.array([0.3, 0.7])]
    # empty do equals the plain rule
    out = fusion.npc_interventional(heads, InterventionSet(), ["A1", "A2"], class_table)
    assert np.allclose(out, fusion.npc_class_dist(heads, class_table), atol=1e-15)
    # full clamping collapses to the matching class row
    do = InterventionSet.from_dict({"A1": 1, "A2": 0})
    out = fusion.npc_interventional(heads, do, ["A1", "A2"], class_table)
    assert np.allclose(out, class_table[2] / class_table[2].sum(), atol=1e-12)


def test_poe_frozen_binary_example():
    res = fusion.poe_attribute_dist([np.array([0.8, 0.2])], np.array([0.5, 0.5]), 0.5)
    assert res.z_alpha == pytest.approx(0.9486832980505138, abs=1e-12)
    assert np.allclose(res.table, [2 / 3, 1 / 3], atol=1e-12)


def test_poe_alpha_zero_is_clamped_heads():
    rng = np.random.default_rng(2)
    heads = rand_heads(rng, [3, 2])
    table = rng.dirichlet(np.ones(6))
    res = fusion.poe_attribute_dist(heads, table, 0.0)
    assert np.allclose(res.table, fusion.joint_from_heads(heads), atol=1e-12)


def test_poe_alpha_one_is_interventional_table():
    rng = np.random.default_rng(3)
    heads = rand_heads(rng, [3, 2])
    table = rng.dirichlet(np.ones(6))
    res = fusion.poe_attribute_dist(heads, table, 1.0)
    assert np.allclose(res.table, table, atol=1e-12)


def test_poe_exponent_zero_beats_zero_value():
    # a zero in the inactive factor must not kill the assignment
    heads = [np.array([1.0, 0.0])]
    table = np.array([0.0, 1.0])
    res = fusion.poe_attribute_dist(heads, table, 0.0)
    assert np.allclose(res.table, [1.0, 0.0])
    res = fusion.poe_attribute_dist(heads, table, 1.0)
    assert np.allclose(res.table, [0.0, 1.0])


def test_poe_empty_support_is_fatal():
    heads = [np.array([1.0, 0.0])]
    table = np.array([0.0, 1.0])
    with pytest.raises(ModelError, match="support"):
        fusion.poe_attribute_dist(heads, table, 0.5)


def test_poe_holder_bound_and_linear_space_crosscheck():
    rng = np.random.default_rng(4)
    for _ in range(300):
        cards = [int(rng.integers(2, 5)) for _ in range(int(rng.integers(1, 3)))]
        heads = rand_heads(rng, cards)
        table = rng.dirichlet(np.ones(int(np.prod(cards))))
        alpha = float(rng.random())
        res = fusion.poe_attribute_dist(heads, table, alpha)
        assert res.z_alpha <= 1.0 + 1e-12
        # linear-space recomputation agrees with the log-space path
        lin = fusion.joint_from_heads(heads) ** (1 - alpha) * table**alpha
        assert res.z_alpha == pytest.approx(float(lin.sum()), rel=1e-10)
        assert np.allclose(res.table, lin / lin.sum(), atol=1e-10)
        assert res.table.sum() == pytest.approx(1.0, abs=1e-9)


def test_poe_support_respects_interventions():
    heads = [np.array([0.0, 1.0]), np.array([0.5, 0.5])]  # head 1 clamped to state 1
    table = np.array([0.1, 0.2, 0.3, 0.4])
    for alpha in (0.0, 0.3, 1.0):
        res = fusion.poe_attribute_dist(heads, table if alpha else table, alpha)
        if alpha > 0:
            continue
        assert res.table[0] == 0.0 and res.table[1] == 0.0


def test_poe_barycenter_optimality():
    """The product of experts minimizes the weighted reverse-KL objective
    against random simplex points and local perturbations."""
    rng = np.random.default_rng(5)
    for trial in range(10):
        cards = [2, int(rng.integers(2, 9))]  # joint space <= 16
        heads = rand_heads(rng, cards)
        table = rng.dirichlet(np.ones(int(np.prod(cards))))
        alpha = float(rng.random())
        res = fusion.poe_attribute_dist(heads, table, alpha)
        p_theta = fusion.joint_from_heads(heads)

        def objective(q):
            return (1 - alpha) * kl(q, p_theta) + alpha * kl(q, table)

        base = objective(res.table)
        for _ in range(100):
            q = rng.dirichlet(np.ones(len(p_theta)))
            assert base <= objective(q) + 1e-9
        for _ in range(10):
            q = res.table + rng.normal(scale=0.01, size=len(p_theta))
            q = np.maximum(q, 1e-9)
            q /= q.sum()
            assert base <= objective(q) + 1e-9


def test_poe_alpha_continuity():
    rng = np.random.default_rng(6)
    class_table = rng.dirichlet(np.ones(5), size=12)
    heads = rand_heads(rng, [3, 4])
    table = rng.dirichlet(np.ones(12))
    for alpha in (0.0, 0.25, 0.5, 0.9):
        a = fusion.cnpc_interventional(fusion.poe_attribute_dist(heads, table, alpha), class_table)
        b = fusion.cnpc_interventional(
            fusion.poe_attribute_dist(heads, table, alpha + 1e-6), class_table
        )
        assert 0.5 * np.abs(a - b).sum() < 1e-4


def test_cnpc_alpha_zero_equals_npc():
    rng = np.random.default_rng(7)
    for _ in range(30):
        cards = [3, 2]
        class_table = rng.dirichlet(np.ones(4), size=6)
        heads = rand_heads(rng, cards)
        do = InterventionSet.from_dict({"A1": int(rng.integers(0, 3))})
        clamped = clamp(heads, do, ["A1", "A2"])
        table = rng.dirichlet(np.ones(6))
        # zero out table entries contradicting the intervention
        shaped = table.reshape(3, 2).copy()
        for s in range(3):
            if s != do.as_dict()["A1"]:
                shaped[s] = 0.0
        table = (shaped / shaped.sum()).ravel()
        poe = fusion.poe_attribute_dist(clamped, table, 0.0)
        out = fusion.cnpc_interventional(poe, class_table)
        want = fusion.npc_class_dist(clamped, class_table)
        assert np.max(np.abs(out - want)) < 1e-12


def test_cnpc_one_hot_poe_picks_row():
    rng = np.random.default_rng(8)
    class_table = rng.dirichlet(np.ones(3), size=4)
    poe = fusion.PoeResult(np.array([0.0, 0.0, 1.0, 0.0]), 1.0, np.array([False, False, True, False]))
    out = fusion.cnpc_interventional(poe, class_table)
    assert np.allclose(out, class_table[2] / class_table[2].sum(), atol=1e-12)


def test_cnpc_matches_direct_summation():
    rng = np.random.default_rng(9)
    for seed in range(15):
        m = random_model(seed, n_vars=4)
        c = compile(m)
        pb = runtime.ParamBinding.from_model(m)
        class_table, _ = runtime.class_conditional_table(c, m, pb)
        heads = rand_heads(rng, [m.card(a) for a in m.attributes])
        attr = m.attributes[0]
        do = InterventionSet.from_dict({attr: int(rng.integers(0, m.card(attr)))})
        clamped = clamp(heads, do, m.attributes)
        table = runtime.interventional_attr_table(c, m, pb, do)
        alpha = float(rng.random())
        poe = fusion.poe_attribute_dist(clamped, table, alpha)
        out = fusion.cnpc_interventional(poe, class_table)
        want = np.zeros(m.card(m.class_variable))
        for i in range(len(poe.table)):
            want += class_table[i] * poe.table[i]
        want /= want.sum()
        assert np.max(np.abs(out - want)) < 1e-12


def test_equality_reduction_full_clamp():
    """With every attribute intervened the two variants coincide for any
    alpha: both collapse to the class row of the forced assignment."""
    rng = np.random.default_rng(10)
    m = random_model(3, n_vars=4)
    c = compile(m)
    pb = runtime.ParamBinding.from_model(m)
    class_table, _ = runtime.class_conditional_table(c, m, pb)
    heads = rand_heads(rng, [m.card(a) for a in m.attributes])
    forced = {a: int(rng.integers(0, m.card(a))) for a in m.attributes}
    do = InterventionSet.from_dict(forced)
    clamped = clamp(heads, do, m.attributes)
    table = runtime.interventional_attr_table(c, m, pb, do)
    npc = fusion.npc_class_dist(clamped, class_table)
    for alpha in (0.0, 0.3, 0.7, 1.0):
        poe = fusion.poe_attribute_dist(clamped, table, alpha)
        cnpc = fusion.cnpc_interventional(poe, class_table)
        assert np.max(np.abs(cnpc - npc)) < 1e-12


def test_predict_labels_basic_and_ties():
    table = np.array([0.1, 0.4, 0.4, 0.1])
    attrs, cls = fusion.predict_labels(table, np.array([0.2, 0.5, 0.3]), [2, 2])
    assert attrs == (0, 1)  # tie resolves to the lexicographically smaller
    assert cls == 1
    one_hot = np.array([0.0, 0.0, 0.0, 1.0])
    attrs, _ = fusion.predict_labels(one_hot, np.array([1.0]), [2, 2])
    assert attrs == (1, 1)


def test_predict_labels_respects_intervention_support():
    rng = np.random.default_rng(11)
    heads = [np.array([0.0, 1.0]), np.array([0.6, 0.4])]
    table = rng.dirichlet(np.ones(4))
    poe = fusion.poe_attribute_dist(heads, table, 0.0)
    attrs, _ = fusion.predict_labels(poe.table, np.array([1.0]), [2, 2])
    assert attrs[0] == 1  # the intervened attribute keeps its forced value


def test_attr_marginals():
    table = np.array([0.1, 0.2, 0.3, 0.4])
    m1, m2 = fusion.attr_marginals(table, [2, 2])
    assert np.allclose(m1, [0.3, 0.7]) and np.allclose(m2, [0.4, 0.6])
