from fractions import Fraction
from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmcverify.model import (
    Component,
    ModelError,
    ObservationFunction,
    VerificationProblem,
    classify_edges,
    merge_observations,
    params_of_component,
    parse_model,
    print_model,
)
from pmcverify.props import parse_requirements


def data_text(name: str) -> str:
    return resources.files("pmcverify").joinpath("data", name).read_text()


MINIMAL = """
dtmc
param p;
state s0 init;
state s1;
state s2;
trans s0 -> s1 : p;
trans s0 -> s2 : 1 - p;
trans s1 -> s1 : 1;
trans s2 -> s2 : 1;
component c cost 1 states { s0 };
"""


class TestParsing:
    def test_tas_file(self):
        model, comps, obs = parse_model(data_text("tas.model"))
        assert len(model.states) == 10
        assert model.init == "s1"
        assert model.params == ("p_al", "p_ma", "p_ph")
        assert model.parametric_states == ("s2", "s5", "s6")
        assert [c.name for c in comps] == ["medicalAnalysis", "pharmacy", "alarm"]
        assert [c.cost for c in comps] == [1, 1, 2]
        assert [c.index for c in comps] == [1, 2, 3]
        assert obs.is_empty()

    def test_webapp_file(self):
        model, comps, obs = parse_model(data_text("webapp.model"))
        assert model.parametric_states == ("s0", "s10", "s11", "s12", "s14")
        # p_a drives two states of the same component
        auth = next(c for c in comps if c.name == "auth")
        assert auth.z_states == ("s0", "s14")
        assert params_of_component(model, auth) == {"p_a"}

    def test_round_trip(self):
        model, comps, obs = parse_model(data_text("tas.model"))
        text = print_model(model, comps, obs)
        model2, comps2, obs2 = parse_model(text)
        assert model2.states == model.states
        assert model2.init == model.init
        assert comps2 == comps
        assert obs2 == obs
        assert print_model(model2, comps2, obs2) == text

    def test_observe_lines_accumulate(self):
        text = MINIMAL + "observe s0 -> s1 : 3;\nobserve s0 -> s1 : 4;\nobserve s0 -> s2 : 5;\n"
        _, _, obs = parse_model(text)
        assert obs.get("s0", "s1") == 7
        assert obs.get("s0", "s2") == 5
        assert obs.total("s0") == 12

    def test_comments_and_blank_lines(self):
        text = "# header\n\n" + MINIMAL.replace(
            "trans s0 -> s1 : p;", "trans s0 -> s1 : p;  # comment"
        )
        model, _, _ = parse_model(text)
        assert model.init == "s0"

    @pytest.mark.parametrize(
        "mutate, message",
        [
            (lambda t: t.replace("dtmc", "mc"), "must start with a 'dtmc' line"),
            (lambda t: t.replace("trans s1 -> s1 : 1;", "trans s1 -> s1 : 1"), "missing ';'"),
            (lambda t: t.replace("state s2;", "state s2;\nstate s2;"), "duplicate state"),
            (lambda t: t.replace("param p;", "param p;\nparam p;"), "duplicate parameter"),
            (lambda t: t.replace("state s1;", "state s1 init;"), "second init"),
            (lambda t: t.replace(" init", ""), "no state is marked init"),
            (lambda t: t.replace("trans s0 ->", "trans sX ->"), "undeclared state"),
            (lambda t: t.replace(": p;", ": p +;"), "transition expression"),
            (lambda t: t + "trans s1 -> s1 : 1;", "duplicate transition"),
            (lambda t: t + "label sX \"a\";", "undeclared state"),
            (lambda t: t + "reward s1 : -1;", "negative reward"),
            (lambda t: t + "reward s1 -> s2 : 1;", "missing transition"),
            (lambda t: t + "frobnicate x;", "unknown statement"),
        ],
    )
    def test_rejects(self, mutate, message):
        with pytest.raises(ModelError, match=message):
            parse_model(mutate(MINIMAL))

    def test_error_carries_line_number(self):
        bad = MINIMAL.replace("trans s0 -> s1 : p;", "trans s0 -> s1 : q;")
        with pytest.raises(ModelError) as exc:
            parse_model(bad)
        assert exc.value.line == 7  # MINIMAL opens with a blank line

    def test_distribution_must_sum_to_one(self):
        with pytest.raises(ModelError, match="sum to"):
            parse_model(MINIMAL.replace("1 - p", "1 - p/2"))

    def test_constant_probability_range(self):
        bad = MINIMAL.replace("trans s1 -> s1 : 1;", "trans s1 -> s1 : 2;\n")
        with pytest.raises(ModelError, match="outside"):
            parse_model(bad)

    def test_state_needs_outgoing(self):
        bad = MINIMAL.replace("trans s1 -> s1 : 1;", "")
        with pytest.raises(ModelError, match="no outgoing"):
            parse_model(bad)


class TestComponents:
    def test_component_must_cover_z(self):
        with pytest.raises(ModelError, match="not covered"):
            parse_model(MINIMAL.replace("component c cost 1 states { s0 };", ""))

    def test_component_rejects_constant_state(self):
        bad = MINIMAL.replace("states { s0 }", "states { s0, s1 }")
        with pytest.raises(ModelError, match="no parametric transitions"):
            parse_model(bad)

    def test_components_disjoint(self):
        bad = MINIMAL + "component d cost 1 states { s0 };\n"
        with pytest.raises(ModelError, match="belongs to components"):
            parse_model(bad)

    def test_cost_positive(self):
        bad = MINIMAL.replace("cost 1", "cost 0")
        with pytest.raises(ModelError, match="cost must be positive"):
            parse_model(bad)

    def test_unused_parameter_rejected(self):
        bad = MINIMAL.replace("param p;", "param p;\nparam q;")
        with pytest.raises(ModelError, match="never used"):
            parse_model(bad)

    def test_parameter_spanning_two_components(self):
        text = """
dtmc
param p;
state s0 init;
state s1;
state s2;
trans s0 -> s1 : p;
trans s0 -> s2 : 1 - p;
trans s1 -> s0 : p;
trans s1 -> s2 : 1 - p;
trans s2 -> s2 : 1;
component a cost 1 states { s0 };
component b cost 1 states { s1 };
"""
        with pytest.raises(ModelError, match="used by components"):
            parse_model(text)


class TestEdgeShapes:
    def test_tas_shapes(self):
        model, _, _ = parse_model(data_text("tas.model"))
        shapes = classify_edges(model, "s2")
        assert [(e.kind, e.target) for e in shapes] == [("param", "s4"), ("derived", "s3")]
        assert shapes[0].param == "p_ma"

    def test_const_param_derived_mix(self):
        text = """
dtmc
param p;
param q;
state s0 init;
state s1;
state s2;
state s3;
state s4;
trans s0 -> s1 : 0.2;
trans s0 -> s2 : p;
trans s0 -> s3 : q;
trans s0 -> s4 : 0.8 - p - q;
trans s1 -> s1 : 1;
trans s2 -> s2 : 1;
trans s3 -> s3 : 1;
trans s4 -> s4 : 1;
component c cost 1 states { s0 };
"""
        model, _, _ = parse_model(text)
        shapes = classify_edges(model, "s0")
        assert [e.kind for e in shapes] == ["const", "param", "param", "derived"]
        assert shapes[0].const == Fraction(1, 5)

    def test_rejects_two_derived_edges(self):
        text = """
dtmc
param p;
state s0 init;
state s1;
state s2;
trans s0 -> s1 : p/2;
trans s0 -> s2 : 1 - p/2;
trans s1 -> s1 : 1;
trans s2 -> s2 : 1;
component c cost 1 states { s0 };
"""
        with pytest.raises(ModelError, match="more than one derived edge"):
            parse_model(text)

    def test_rejects_same_param_twice_in_state(self):
        text = """
dtmc
param p;
state s0 init;
state s1;
state s2;
state s3;
trans s0 -> s1 : p;
trans s0 -> s2 : p;
trans s0 -> s3 : 1 - 2*p;
trans s1 -> s1 : 1;
trans s2 -> s2 : 1;
trans s3 -> s3 : 1;
component c cost 1 states { s0 };
"""
        with pytest.raises(ModelError, match="more than one outgoing edge"):
            parse_model(text)

    def test_rejects_wrong_derived_polynomial(self):
        # sums to 1 + 1e-12, inside the numeric tolerance, so only the
        # structural comparison against 1 - p can reject it
        text = """
dtmc
param p;
state s0 init;
state s1;
state s2;
trans s0 -> s1 : p;
trans s0 -> s2 : 1 - p + 1/1000000000000;
trans s1 -> s1 : 1;
trans s2 -> s2 : 1;
component c cost 1 states { s0 };
"""
        with pytest.raises(ModelError, match="expected"):
            parse_model(text)

    def test_rejects_rational_probability(self):
        text = """
dtmc
param p;
state s0 init;
state s1;
state s2;
trans s0 -> s1 : 1/(2 - p);
trans s0 -> s2 : (1 - p)/(2 - p);
trans s1 -> s1 : 1;
trans s2 -> s2 : 1;
component c cost 1 states { s0 };
"""
        with pytest.raises(ModelError, match="non-polynomial"):
            parse_model(text)


class TestObservations:
    def test_negative_count_rejected(self):
        with pytest.raises(ModelError, match="negative"):
            ObservationFunction({("s0", "s1"): -1})

    def test_zero_counts_dropped(self):
        obs = ObservationFunction({("s0", "s1"): 0, ("s0", "s2"): 2})
        assert obs.counts == {("s0", "s2"): 2}
        assert not obs.is_empty()

    def test_copy_is_independent(self):
        obs = ObservationFunction({("s0", "s1"): 2})
        dup = obs.copy()
        dup.counts[("s0", "s1")] = 9
        assert obs.get("s0", "s1") == 2

    def test_observation_must_match_edge(self):
        with pytest.raises(ModelError, match="missing transition"):
            parse_model(MINIMAL + "observe s0 -> s0 : 1;\n")

    def test_observation_only_on_parametric_states(self):
        with pytest.raises(ModelError, match="not a parametric state"):
            parse_model(MINIMAL + "observe s1 -> s1 : 1;\n")

    counts = st.dictionaries(
        st.tuples(st.sampled_from(["z1", "z2"]), st.sampled_from(["a", "b", "c"])),
        st.integers(min_value=0, max_value=50),
    )

    @given(counts, counts)
    def test_merge_is_pointwise_sum(self, ca, cb):
        merged = merge_observations(ObservationFunction(ca), ObservationFunction(cb))
        keys = set(ca) | set(cb)
        for key in keys:
            assert merged.get(*key) == ca.get(key, 0) + cb.get(key, 0)

    @given(counts, counts)
    def test_merge_commutes(self, ca, cb):
        a, b = ObservationFunction(ca), ObservationFunction(cb)
        assert merge_observations(a, b) == merge_observations(b, a)


class TestProblem:
    def _problem(self, **kw):
        model, comps, obs = parse_model(data_text("tas.model"))
        reqs = parse_requirements(data_text("tas.props"))
        base = dict(
            model=model,
            components=comps,
            initial_obs=obs,
            requirements=reqs,
            alpha=0.95,
            budget=Fraction(150000),
            rbudget=Fraction(5000),
        )
        base.update(kw)
        return VerificationProblem(**base)

    def test_valid(self):
        problem = self._problem().validate()
        assert problem.min_round_cost() == 4

    def test_alpha_range(self):
        with pytest.raises(ModelError, match="alpha"):
            self._problem(alpha=1.0).validate()

    def test_round_budget_capped(self):
        with pytest.raises(ModelError, match="round budget"):
            self._problem(rbudget=Fraction(200000)).validate()

    def test_duplicate_requirement_ids(self):
        reqs = parse_requirements(data_text("tas.props"))
        with pytest.raises(ModelError, match="duplicate requirement"):
            self._problem(requirements=reqs + [reqs[0]]).validate()
