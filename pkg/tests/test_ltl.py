"""Formula parsing, printing, evaluation, and progression."""

import pytest
from hypothesis import given, settings, strategies as st

from hierltl import ltl
from hierltl.ltl import (FALSE, STEP, TRUE, And, Eventually, Next, Not, Or,
                         ParseError, Prop, Until)

from oracles import count_satisfying, naive_evaluate

PROPS = st.sampled_from(["a", "b", "c"])


def _node_count(f):
    # Iterative on purpose: the uncapped strategy below can stack unary
    # operators far past the recursion limit, which is what we reject.
    n, stack = 0, [f]
    while stack:
        g = stack.pop()
        n += 1
        if isinstance(g, (Not, Next, Eventually)):
            stack.append(g.operand)
        elif isinstance(g, (And, Or, Until)):
            stack.append(g.left)
            stack.append(g.right)
    return n


def formulas(max_depth: int = 4):
    atoms = st.one_of(
        PROPS.map(Prop),
        st.just(TRUE),
        PROPS.map(lambda p: Not(Prop(p))),
    )

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda t: And(*t)),
            st.tuples(children, children).map(lambda t: Or(*t)),
            children.map(Next),
            st.tuples(children, children).map(lambda t: Until(*t)),
            children.map(Eventually),
        )

    # max_leaves bounds leaves only; Next/Eventually chains add depth for
    # free, so cap total size to keep the recursive algorithms in bounds.
    return st.recursive(atoms, extend, max_leaves=max_depth).filter(
        lambda f: _node_count(f) <= 16)


def traces(max_len: int = 5):
    steps = st.frozensets(PROPS, max_size=3)
    return st.lists(steps, max_size=max_len).map(tuple)


class TestParsing:
    @pytest.mark.parametrize("text,expected", [
        ("T", TRUE),
        ("!T", FALSE),
        ("a", Prop("a")),
        ("! a", Not(Prop("a"))),
        ("a & b", And(Prop("a"), Prop("b"))),
        ("a | b & c", Or(Prop("a"), And(Prop("b"), Prop("c")))),
        ("! a & b", And(Not(Prop("a")), Prop("b"))),
        ("X a U b", Until(Next(Prop("a")), Prop("b"))),
        ("a U b U c", Until(Prop("a"), Until(Prop("b"), Prop("c")))),
        ("F a", Eventually(Prop("a"))),
        ("F(a & F b)", Eventually(And(Prop("a"), Eventually(Prop("b"))))),
        ("(a | b) & c", And(Or(Prop("a"), Prop("b")), Prop("c"))),
    ])
    def test_shapes(self, text, expected):
        assert ltl.parse(text) == expected

    def test_api_call_atoms(self):
        assert ltl.parse("Pickup(plate)") == Prop("pickup_plate")
        assert ltl.parse("Move(plate, lower_rack)") == \
            Prop("move_plate_lower_rack")

    def test_round_trip_is_stable(self):
        corpus = ["T", "!T", "a", "! a", "a & b & c", "a | b & c",
                  "F(a & F b)", "X(a U b)", "(a | b) U c",
                  "F pickup_plate & F move_plate_lower_rack"]
        for text in corpus:
            f = ltl.parse(text)
            printed = ltl.to_text(f)
            assert ltl.parse(printed) == f

    @pytest.mark.parametrize("bad", ["", "&", "a &", "(a", "a b", "U a",
                                     "a !", "F", "Pickup(", "1x"])
    def test_parse_errors(self, bad):
        with pytest.raises(ParseError) as err:
            ltl.parse(bad)
        assert err.value.offset >= 0
        assert err.value.expected

    def test_negation_beyond_atoms_parses_but_is_not_co_safe(self):
        f = ltl.parse("!(a & b)")
        assert f == Not(And(Prop("a"), Prop("b")))
        assert not ltl.is_sc_ltl(f)

    @given(formulas())
    @settings(max_examples=150, deadline=None)
    def test_print_parse_round_trip(self, f):
        assert ltl.parse(ltl.to_text(f)) == f

    @given(formulas())
    @settings(max_examples=100, deadline=None)
    def test_json_round_trip(self, f):
        assert ltl.formula_from_json(ltl.formula_to_json(f)) == f


class TestEvaluation:
    def test_matches_oracle_on_corpus(self):
        corpus = ["T", "!T", "a", "! a", "a & b", "a | b", "X a", "X T",
                  "a U b", "F a", "F(a & F b)", "F(a & X b)",
                  "(! a) U b", "F a & F b", "X X a", "T U a"]
        for text in corpus:
            f = ltl.parse(text)
            for trace in ltl.all_traces(["a", "b"], 4):
                assert ltl.evaluate(f, trace) == naive_evaluate(f, trace), \
                    (text, trace)

    def test_empty_trace(self):
        assert ltl.evaluate(TRUE, [])
        for text in ["a", "! a", "X T", "F a", "a U b", "T U T"]:
            assert not ltl.evaluate(ltl.parse(text), [])

    def test_next_is_strong(self):
        f = ltl.parse("X T")
        assert not ltl.evaluate(f, [set()])
        assert ltl.evaluate(f, [set(), set()])

    def test_frozen_count(self):
        # Independently recomputed; see the oracle module.
        f = ltl.parse("F(a & F b)")
        assert count_satisfying(f, ["a", "b"], 3) == 44
        vals = ltl.all_valuations(["a", "b"])
        import itertools
        package_count = sum(
            ltl.evaluate(f, tr) for tr in itertools.product(vals, repeat=3))
        assert package_count == 44

    @given(formulas(), traces())
    @settings(max_examples=300, deadline=None)
    def test_matches_oracle(self, f, trace):
        assert ltl.evaluate(f, trace) == naive_evaluate(f, trace)

    @given(formulas(), traces(3), traces(3))
    @settings(max_examples=200, deadline=None)
    def test_prefix_monotone(self, f, trace, extension):
        if ltl.evaluate(f, trace):
            assert ltl.evaluate(f, trace + extension)

    def test_eventually_equals_until_true(self):
        for text in ["a", "a & b", "X a"]:
            f = ltl.parse(text)
            assert ltl.equivalent_on_traces(Eventually(f), Until(TRUE, f))

    def test_rejects_non_co_safe(self):
        bad = Not(And(Prop("a"), Prop("b")))
        assert not ltl.is_sc_ltl(bad)
        with pytest.raises(ltl.NotCoSafeError):
            ltl.evaluate(bad, [{"a"}])


class TestProgression:
    @given(formulas(), traces())
    @settings(max_examples=300, deadline=None)
    def test_progression_equals_evaluation(self, f, trace):
        remaining = f
        for step in trace:
            remaining = ltl.progress(remaining, step)
        assert ltl.nullable(remaining) == ltl.evaluate(f, trace)

    def test_progress_to_true_is_absorbing(self):
        f = ltl.parse("F a")
        done = ltl.progress(f, {"a"})
        assert done == TRUE
        assert ltl.progress(done, set()) == TRUE

    def test_nullable_next_needs_a_step(self):
        # X over a formula satisfiable by the empty suffix still needs one
        # more position; the progressed form must not be declared done.
        f = Next(Or(TRUE, Prop("a")))
        assert not ltl.evaluate(f, [set()])
        progressed = ltl.progress(f, set())
        assert not ltl.nullable(progressed)
        for trace in ltl.all_traces(["a"], 3):
            remaining = f
            for step in trace:
                remaining = ltl.progress(remaining, step)
            assert ltl.nullable(remaining) == ltl.evaluate(f, trace)

    def test_nullable_is_empty_trace_evaluation(self):
        for text in ["T", "a", "F a", "X T"]:
            f = ltl.parse(text)
            assert ltl.nullable(f) == ltl.evaluate(f, [])
        assert ltl.nullable(Or(TRUE, Prop("a")))


class TestHelpers:
    def test_conj_flattens_and_dedupes(self):
        a, b = Prop("a"), Prop("b")
        assert ltl.conj([a, And(b, a)]) == And(a, b)
        assert ltl.conj([]) == TRUE
        assert ltl.conj([a]) == a
        assert ltl.conj([TRUE, a]) == a
        assert ltl.conj([FALSE, a]) == FALSE

    def test_disj(self):
        a, b = Prop("a"), Prop("b")
        assert ltl.disj([a, b, a]) == Or(a, b)
        assert ltl.disj([TRUE, a]) == TRUE
        assert ltl.disj([]) == FALSE

    @given(formulas())
    @settings(max_examples=150, deadline=None)
    def test_simplify_preserves_traces(self, f):
        g = ltl.simplify(f)
        for trace in ltl.all_traces(list(ltl.props(f))[:2], 3):
            assert ltl.evaluate(f, trace) == ltl.evaluate(g, trace)

    def test_props_first_occurrence_order(self):
        f = ltl.parse("F(b & F a) & F b")
        assert ltl.props(f) == ("b", "a")

    def test_rename(self):
        f = ltl.parse("F(a & F b)")
        g = ltl.rename_props(f, {"a": "x", "b": "y"})
        assert ltl.to_text(g) == "F(x & F y)"

    def test_step_consumes_exactly_one(self):
        assert not ltl.evaluate(STEP, [])
        assert ltl.evaluate(STEP, [set()])
        assert ltl.progress(STEP, set()) == TRUE
