"""Automaton compilation: acceptance, structure, and symbolic edges."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from hierltl import automata, ltl
from hierltl.errors import CapacityError

from test_ltl import formulas, traces


def _guard_literals(guard: str):
    pos, neg = set(), set()
    if guard == "T":
        return pos, neg
    for lit in guard.split(" & "):
        if lit.startswith("!"):
            neg.add(lit[1:])
        else:
            pos.add(lit)
    return pos, neg


class TestCompile:
    @pytest.mark.parametrize("text,states", [
        ("T", 1),
        ("F a", 2),
        ("F(a & F b)", 3),
        ("a U b", 3),
        ("F a & F b", 4),
    ])
    def test_state_counts(self, text, states):
        assert automata.compile_formula(ltl.parse(text)).state_count == states

    def test_accepting_is_absorbing(self):
        dfa = automata.compile_formula(ltl.parse("F(a & F b)"))
        for acc in dfa.accepting:
            for valuation in ltl.all_valuations(list(dfa.alphabet)):
                assert dfa.step(acc, valuation) in dfa.accepting

    def test_dead_state_cannot_recover(self):
        dfa = automata.compile_formula(ltl.parse("a U b"))
        assert dfa.dead is not None
        assert dfa.step(dfa.dead, frozenset({"a", "b"})) == dfa.dead
        assert dfa.distance_to_accept(dfa.dead) == math.inf

    def test_distances(self):
        # One symbol carrying both props satisfies F(a & F b) outright, so
        # the initial state is one step from acceptance.
        dfa = automata.compile_formula(ltl.parse("F(a & F b)"))
        assert [dfa.distance_to_accept(s)
                for s in range(dfa.state_count)] == [1, 1, 0]
        seq = automata.compile_formula(ltl.parse("F(a & X F b)"))
        assert seq.distance_to_accept(seq.initial) == 2

    def test_capacity_cap(self):
        with pytest.raises(CapacityError):
            automata.compile_formula(ltl.parse("F(a & F b)"), max_states=2)

    def test_rejects_non_co_safe(self):
        with pytest.raises(ltl.NotCoSafeError):
            automata.compile_formula(ltl.Not(ltl.And(ltl.Prop("a"),
                                                     ltl.Prop("b"))))

    def test_acceptance_matches_evaluation_corpus(self):
        corpus = ["T", "F a", "a U b", "F(a & F b)", "F a & F b",
                  "X a", "(! a) U b", "F(a & X b)", "a | b"]
        for text in corpus:
            f = ltl.parse(text)
            dfa = automata.compile_formula(f)
            for trace in ltl.all_traces(["a", "b"], 4):
                assert dfa.accepts(trace) == ltl.evaluate(f, trace), \
                    (text, trace)

    @given(formulas(), traces())
    @settings(max_examples=150, deadline=None)
    def test_acceptance_matches_evaluation(self, f, trace):
        if not ltl.is_sc_ltl(f):
            return
        dfa = automata.compile_formula(f)
        assert dfa.accepts(trace) == ltl.evaluate(f, trace)


class TestEdges:
    @pytest.mark.parametrize("text", ["F a", "a U b", "F(a & F b)",
                                      "F a & F b", "a & b | c"])
    def test_edges_partition_each_support(self, text):
        dfa = automata.compile_formula(ltl.parse(text))
        edges = dfa.edges()
        for src in range(dfa.state_count):
            sup = list(dfa._support[src])
            for valuation in ltl.all_valuations(sup):
                targets = set()
                for esrc, guard, dst in edges:
                    if esrc != src:
                        continue
                    pos, neg = _guard_literals(guard)
                    if pos <= valuation and not (neg & valuation):
                        targets.add(dst)
                assert targets == {dfa.step(src, valuation)}, \
                    (text, src, valuation)

    def test_json_and_dot(self):
        dfa = automata.compile_formula(ltl.parse("F(a & F b)"))
        data = dfa.to_json()
        assert data["format_version"] == 1
        assert len(data["states"]) == 3
        assert data["accepting"] == [dfa.state_count - 1] or data["accepting"]
        dot = dfa.to_dot()
        assert "doublecircle" in dot and "->" in dot
