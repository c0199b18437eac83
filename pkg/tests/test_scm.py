import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causal_recourse.builtins import FIG2_EDGES, builtin_examples, builtin_names, fig2, get_builtin, insurance
from causal_recourse.graph import CausalGraph
from causal_recourse.scm import (
    Action, Dataset, Instance, Noise, NonInvertibleError, Scm, ScmError, StructuralEquation, abduct,
    counterfactual, counterfactual_batch, interventional_sample, sample,
)

from oracles import linear_counterfactual, random_linear_scm


def implied_covariance(m: Scm) -> np.ndarray:
    """Closed-form covariance of a linear additive-noise model, in declaration order."""
    nodes = list(m.graph.nodes)
    idx = {v: i for i, v in enumerate(nodes)}
    W = np.zeros((len(nodes), len(nodes)))
    for v in nodes:
        for p, w in m.equations[v].coefficients.items():
            W[idx[v], idx[p]] = w
    A = np.linalg.inv(np.eye(len(nodes)) - W)
    D = np.diag([m.equations[v].noise.var for v in nodes])
    return A @ D @ A.T


def two_node():
    g = CausalGraph(("X1", "Y"), [("X1", "Y")], "Y")
    return Scm(g, [StructuralEquation("X1"), StructuralEquation("Y", {"X1": 2.0})])


# --- equations and validation ------------------------------------------------

def test_noise_validation():
    with pytest.raises(ScmError):
        Noise("gaussian", variance=0.0)
    with pytest.raises(ScmError):
        Noise("uniform", low=1.0, high=1.0)
    with pytest.raises(ScmError):
        Noise("laplace")
    assert Noise("none").var == 0.0
    assert Noise("uniform", low=0.0, high=1.0).mean == 0.5


def test_coefficients_must_match_parents():
    g = CausalGraph(("A", "Y"), [("A", "Y")], "Y")
    with pytest.raises(ScmError):
        Scm(g, [StructuralEquation("A"), StructuralEquation("Y")])
    with pytest.raises(ScmError):
        Scm(g, [StructuralEquation("A", {"Y": 1.0}), StructuralEquation("Y", {"A": 1.0})])


def test_every_node_needs_one_equation():
    g = CausalGraph(("A", "Y"), [("A", "Y")], "Y")
    with pytest.raises(ScmError):
        Scm(g, [StructuralEquation("Y", {"A": 1.0})])


def test_action_rendering():
    assert str(Action()) == "do()"
    assert str(Action.do(A=2)) == "do(A:=2)"
    assert Action().is_null and len(Action.do(A=1, B=2)) == 2


# --- sampling ------------------------------------------------------------------

def test_sample_covariance_two_node():
    d = sample(two_node(), 100_000, seed=3)
    assert np.cov(d["X1"], d["Y"])[0, 1] == pytest.approx(2.0, abs=0.05)


def test_sample_noise_mean():
    g = CausalGraph(("Y",), [], "Y")
    d = sample(Scm(g, [StructuralEquation("Y")]), 100_000, seed=4)
    assert abs(d["Y"].mean()) < 0.02


def test_sample_determinism():
    m = fig2()
    a, b = sample(m, 1, seed=9), sample(m, 1, seed=9)
    assert np.array_equal(a.values, b.values)
    c, d = sample(m, 500, seed=9), sample(m, 500, seed=9)
    assert c.to_csv() == d.to_csv()
    assert not np.array_equal(c.values, sample(m, 500, seed=10).values)


def test_sample_rejects_empty():
    with pytest.raises(ScmError):
        sample(fig2(), 0, seed=1)


def test_adding_a_node_keeps_other_draws():
    g = CausalGraph(("A", "Y"), [("A", "Y")], "Y")
    small = Scm(g, [StructuralEquation("A"), StructuralEquation("Y", {"A": 1.0})])
    g2 = CausalGraph(("A", "B", "Y"), [("A", "Y")], "Y")
    big = Scm(g2, [StructuralEquation("A"), StructuralEquation("B"), StructuralEquation("Y", {"A": 1.0})])
    s, b = sample(small, 50, 1), sample(big, 50, 1)
    assert np.array_equal(s["A"], b["A"]) and np.array_equal(s["Y"], b["Y"])


def test_columns_follow_topological_order():
    m = fig2()
    d = sample(m, 3, 0)
    pos = {c: i for i, c in enumerate(d.columns)}
    assert all(pos[p] < pos[c] for p, c in FIG2_EDGES)


def test_latent_columns_hidden_on_export():
    d = sample(insurance(), 10, 7)
    header = d.to_csv().splitlines()[0].split(",")
    assert sorted(header) == ["Y", "carowner", "minivan"]
    assert "defensiveness" in d.to_csv(include_latent=True).splitlines()[0]


def test_csv_round_trip_is_exact():
    d = sample(fig2(), 200, 2)
    back = Dataset.read_csv(io.StringIO(d.to_csv()))
    assert back.columns == d.columns
    assert np.array_equal(back.values, d.values)


def test_random_model_covariance_matches_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(5):
        m = random_linear_scm(rng, max_nodes=5)
        d = sample(m, 100_000, seed=1)
        emp = np.cov(np.column_stack([d[v] for v in m.graph.nodes]), rowvar=False)
        theory = implied_covariance(m)
        assert np.allclose(emp, theory, rtol=0.05, atol=0.05)


# --- abduction -----------------------------------------------------------------

def test_abduct_example(chain3):
    u = abduct(chain3, {"X1": 1.0, "X2": 1.0, "Y": 2.5})
    assert u == pytest.approx({"X1": 1.0, "X2": 0.5, "Y": 0.5}, abs=1e-12)


def test_abduct_zero(chain3):
    assert abduct(chain3, {"X1": 0.0, "X2": 0.0, "Y": 0.0}) == {"X1": 0.0, "X2": 0.0, "Y": 0.0}


def test_abduct_missing_value(chain3):
    with pytest.raises(ScmError, match="Y"):
        abduct(chain3, {"X1": 0.0, "X2": 0.0})


def test_abduct_threshold_with_parents_is_rejected():
    g = CausalGraph(("A", "B", "Y"), [("A", "B"), ("B", "Y")], "Y")
    m = Scm(g, [StructuralEquation("A"), StructuralEquation("B", {"A": 1.0}, threshold=0.0),
                StructuralEquation("Y", {"B": 1.0})])
    with pytest.raises(NonInvertibleError):
        abduct(m, {"A": 1.0, "B": 1.0, "Y": 1.0})


def test_abduct_binary_root_must_be_binary():
    with pytest.raises(NonInvertibleError):
        abduct(insurance(), {"carowner": 0.3, "defensiveness": 0.0, "minivan": 0.0, "Y": 0.0})


@pytest.mark.parametrize("name", builtin_names())
def test_round_trip_on_builtins(name):
    m = get_builtin(name)
    d = sample(m, 1000, seed=12)
    u = abduct(m, d.as_dict())
    again = m.evaluate(u)
    for v in m.graph.nodes:
        assert np.max(np.abs(again[v] - d[v])) < 1e-9


def test_instance_abducted(chain3):
    inst = Instance.abducted(chain3, {"X1": 1.0, "X2": 1.0, "Y": 2.5})
    assert inst.noise["X2"] == pytest.approx(0.5)
    assert inst.features(["X1"]) == {"X1": 1.0}


# --- counterfactuals -----------------------------------------------------------

def test_counterfactual_example(chain3):
    cf = counterfactual(chain3, {"X1": 1.0, "X2": 1.0, "Y": 2.5}, Action.do(X1=2.0))
    assert cf == pytest.approx({"X1": 2.0, "X2": 1.5, "Y": 4.0}, abs=1e-12)


def test_counterfactual_rejects_target(chain3):
    with pytest.raises(ScmError):
        counterfactual(chain3, {"X1": 1.0, "X2": 1.0, "Y": 2.5}, Action.do(Y=0.0))
    with pytest.raises(ScmError):
        counterfactual(chain3, {"X1": 1.0, "X2": 1.0, "Y": 2.5}, Action.do(Q=0.0))


def test_leaf_intervention_changes_only_the_leaf():
    m = fig2()
    x = sample(m, 1, 3).row(0)
    cf = counterfactual(m, x, Action.do(X1=5.0))
    assert {v for v in m.graph.nodes if cf[v] != x[v]} == {"X1"}


@pytest.mark.parametrize("name", builtin_names())
def test_null_action_and_factual_intervention_are_exact(name):
    m = get_builtin(name)
    d = sample(m, 200, seed=5)
    for i in range(len(d)):
        x = d.row(i)
        assert counterfactual(m, x, Action()) == x
        for v in m.graph.sort_nodes(m.graph.observed):
            assert counterfactual(m, x, Action({v: x[v]})) == x


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_counterfactual_matches_linear_algebra(seed):
    rng = np.random.default_rng(seed)
    m = random_linear_scm(rng, max_nodes=6, intercepts=True)
    x = sample(m, 1, seed).row(0)
    nodes = [v for v in m.graph.nodes if v != m.target]
    if not nodes:
        return
    chosen = rng.choice(nodes, size=int(rng.integers(1, len(nodes) + 1)), replace=False)
    action = {str(v): float(rng.normal()) for v in chosen}
    ours = counterfactual(m, x, Action(action))
    ref = linear_counterfactual(m, x, action)
    for v in m.graph.nodes:
        assert ours[v] == pytest.approx(ref[v], abs=1e-9)


def test_counterfactual_batch_matches_scalar():
    m = fig2()
    x = sample(m, 1, 8).row(0)
    vals = np.array([0.0, 1.0, -2.0, 3.0])
    mask = np.array([False, True, True, True])
    batch = counterfactual_batch(m, x, {"X3": (mask, vals)}, 4)
    for i in range(4):
        one = counterfactual(m, x, Action({"X3": vals[i]}) if mask[i] else Action())
        assert {v: float(batch[v][i]) for v in m.graph.nodes} == one


# --- interventional sampling --------------------------------------------------

def test_interventional_variance(chain3):
    d = interventional_sample(chain3, Action.do(X1=0.0), 100_000, seed=6)
    assert np.all(d["X1"] == 0.0)
    assert np.var(d["X2"]) == pytest.approx(1.0, abs=0.03)


def test_null_interventional_sample_equals_sample(chain3):
    assert np.array_equal(interventional_sample(chain3, Action(), 100, 1).values, sample(chain3, 100, 1).values)


def test_minivan_intervention_severs_confounding():
    m = insurance()
    d = interventional_sample(m, Action.do(minivan=1.0), 100_000, seed=2)
    assert abs(np.cov(d["minivan"], d["Y"])[0, 1]) < 0.03
    obs = sample(m, 100_000, seed=2)
    assert np.cov(obs["minivan"], obs["Y"])[0, 1] == pytest.approx(1.2 * 1.5, abs=0.05)


def test_interventional_sample_rejects_target():
    with pytest.raises(ScmError):
        interventional_sample(fig2(), Action.do(Y=1.0), 10, 0)


# --- bundled models -----------------------------------------------------------

def test_builtin_structures():
    models = builtin_examples()
    assert set(models) == {"insurance", "fig2"}
    ins = models["insurance"].graph
    assert ins.edges == {("carowner", "Y"), ("defensiveness", "Y"), ("defensiveness", "minivan")}
    assert ins.observed == {"carowner", "minivan"}
    assert models["fig2"].graph.edges == set(FIG2_EDGES)


def test_insurance_carowner_is_binary():
    d = sample(insurance(), 10_000, 1)
    assert set(np.unique(d["carowner"])) == {0.0, 1.0}
    assert d["carowner"].mean() == pytest.approx(0.5, abs=0.02)


def test_unknown_builtin():
    with pytest.raises(ScmError):
        get_builtin("nope")
