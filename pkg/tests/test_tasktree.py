"""Task trees: structural validation, formula generation, assembly."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierltl import fixtures, hierarchy, ltl
from hierltl.errors import DomainError
from hierltl.tasktree import (ApiCall, TaskNode, TaskTree, action_formula,
                              construct, generate_ltl, validate_tree)


def mk_tree(nodes: dict[str, dict]) -> TaskTree:
    built = {nid: TaskNode(node_id=nid, **spec) for nid, spec in nodes.items()}
    return TaskTree("task_1", built)


LEAF = {"actions": (ApiCall("Pickup", ("plate",)),)}


def two_leaf_tree(**root_extra) -> TaskTree:
    return mk_tree({
        "task_1": {"children": ("task_1_1", "task_1_2"), **root_extra},
        "task_1_1": dict(LEAF),
        "task_1_2": {"actions": (ApiCall("Open", ("drawer",)),)},
    })


class TestValidateTree:
    def test_fixture_tree_is_clean(self):
        assert validate_tree(fixtures.dishwasher_tree()) == []

    def test_missing_child(self):
        tree = mk_tree({
            "task_1": {"children": ("task_1_1", "task_1_9")},
            "task_1_1": dict(LEAF),
        })
        assert any("missing child task_1_9" in p for p in validate_tree(tree))

    def test_child_id_must_extend_parent(self):
        tree = mk_tree({
            "task_1": {"children": ("task_1_1", "task_2_2")},
            "task_1_1": dict(LEAF),
            "task_2_2": dict(LEAF),
        })
        assert any("does not extend" in p for p in validate_tree(tree))

    def test_shared_child(self):
        tree = mk_tree({
            "task_1": {"children": ("task_1_1", "task_1_2")},
            "task_1_1": {"children": ("task_1_1_1",)},
            "task_1_2": {"children": ("task_1_1_1",)},
            "task_1_1_1": dict(LEAF),
        })
        problems = validate_tree(tree)
        assert any("two parents" in p for p in problems)

    def test_children_and_actions_exclusive(self):
        tree = mk_tree({
            "task_1": {"children": ("task_1_1",),
                       "actions": (ApiCall("Open", ("door",)),)},
            "task_1_1": dict(LEAF),
        })
        assert any("both children and actions" in p for p in validate_tree(tree))

    def test_empty_node(self):
        tree = mk_tree({
            "task_1": {"children": ("task_1_1",)},
            "task_1_1": {},
        })
        assert any("neither children nor actions" in p
                   for p in validate_tree(tree))

    def test_unknown_skill_and_arity(self):
        tree = mk_tree({
            "task_1": {"children": ("task_1_1", "task_1_2")},
            "task_1_1": {"actions": (ApiCall("Fly", ("plate",)),)},
            "task_1_2": {"actions": (ApiCall("Move", ("plate",)),)},
        })
        problems = validate_tree(tree)
        assert any("unknown skill Fly" in p for p in problems)
        assert any("needs 2" in p for p in problems)

    def test_relation_members_must_be_children(self):
        tree = two_leaf_tree(relations=(("task_1_1", "task_1_9"),))
        assert any("not both its children" in p for p in validate_tree(tree))

    def test_self_relation(self):
        tree = two_leaf_tree(relations=(("task_1_1", "task_1_1"),))
        assert any("to itself" in p for p in validate_tree(tree))

    def test_relation_cycle_names_the_cycle(self):
        tree = two_leaf_tree(relations=(("task_1_1", "task_1_2"),
                                        ("task_1_2", "task_1_1")))
        problems = validate_tree(tree)
        assert any("cycle" in p and "task_1_1" in p and "task_1_2" in p
                   for p in problems)

    def test_root_missing(self):
        tree = TaskTree("task_1", {"task_2": TaskNode("task_2", actions=LEAF["actions"])})
        assert validate_tree(tree) == ["root task_1 is not a node"]

    def test_unreachable_node(self):
        tree = mk_tree({
            "task_1": {"children": ("task_1_1",)},
            "task_1_1": dict(LEAF),
            "task_1_2": dict(LEAF),
        })
        assert any("unreachable" in p for p in validate_tree(tree))

    def test_bad_node_id_shape(self):
        tree = TaskTree("task_1", {
            "task_1": TaskNode("task_1", children=("task_1_1",)),
            "task_1_1": TaskNode("task_1_1", children=("chores",)),
            "chores": TaskNode("chores", actions=LEAF["actions"]),
        })
        problems = validate_tree(tree)
        assert any("not of the form" in p for p in problems)


class TestGenerateLtl:
    def test_singleton(self):
        assert generate_ltl(["a"], []) == ltl.parse("F a")

    def test_unrelated_children_fan_out(self):
        got = generate_ltl(["a", "b", "c"], [])
        assert got == ltl.parse("F a & F b & F c")

    def test_chain(self):
        assert generate_ltl(["a", "b"], [("a", "b")]) == ltl.parse("F(a & F b)")

    def test_single_source_fans_over_rest(self):
        got = generate_ltl(["p1", "p2", "p3", "p4"],
                           [("p1", "p2"), ("p1", "p3"), ("p1", "p4")])
        assert got == ltl.parse("F(p1 & F p2 & F p3 & F p4)")

    def test_diamond_keeps_longest_chain(self):
        got = generate_ltl(["a", "b", "c", "d"],
                           [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")])
        assert got == ltl.parse("F(a & F(b & F d) & F c)")

    def test_independent_components(self):
        got = generate_ltl(["a", "b", "c"], [("b", "c")])
        assert got == ltl.parse("F a & F(b & F c)")

    def test_cycle_raises(self):
        with pytest.raises(DomainError, match="cycle"):
            generate_ltl(["a", "b"], [("a", "b"), ("b", "a")])

    def test_relation_order_irrelevant(self):
        rels = [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]
        base = generate_ltl(["a", "b", "c", "d"], rels)
        rng = random.Random(7)
        for _ in range(10):
            rng.shuffle(rels)
            assert generate_ltl(["a", "b", "c", "d"], rels) == base

    @given(st.data())
    @settings(max_examples=120, deadline=None)
    def test_topological_runs_always_satisfy(self, data):
        n = data.draw(st.integers(min_value=1, max_value=5))
        names = [f"t{i}" for i in range(n)]
        order = data.draw(st.permutations(names))
        rels = []
        for i in range(n):
            for j in range(i + 1, n):
                if data.draw(st.booleans()):
                    rels.append((order[i], order[j]))
        formula = generate_ltl(names, rels)
        assert ltl.is_sc_ltl(formula)
        trace = [frozenset([name]) for name in order]
        assert ltl.evaluate(formula, trace)


class TestActionFormula:
    def test_sequence_nests_right(self):
        calls = [ApiCall("Pickup", ("plate",)),
                 ApiCall("Move", ("plate", "lower_rack"))]
        got = action_formula(calls)
        assert got == ltl.parse("F(pickup_plate & F move_plate_lower_rack)")

    def test_single_call(self):
        assert action_formula([ApiCall("Open", ("door",))]) == \
            ltl.parse("F open_door")

    def test_empty_leaf_rejected(self):
        with pytest.raises(DomainError, match="at least one"):
            action_formula([])

    def test_unknown_verb_rejected(self):
        with pytest.raises(DomainError, match="unknown skill"):
            action_formula([ApiCall("Teleport", ("plate",))])

    def test_custom_skills(self):
        got = action_formula([ApiCall("Scan", ("shelf",))], {"scan": 1})
        assert got == ltl.parse("F scan_shelf")


class TestConstruct:
    def spec_map(self, spec):
        return {n.name: n.formula for level in spec.levels for n in level}

    def test_dishwasher_levels_and_formulas(self):
        tree = fixtures.dishwasher_tree()
        spec = construct(tree)
        assert spec.depth == 3
        by_name = self.spec_map(spec)
        assert by_name["task_1"] == ltl.parse("F(task_1_1 & F task_1_2)")
        assert by_name["task_1_1"] == \
            ltl.parse("F task_1_1_1 & F task_1_1_2 & F task_1_1_3")
        assert by_name["task_1_2"] == ltl.parse("F(task_1_2_1 & F task_1_2_2)")
        assert by_name["task_1_1_1"] == \
            ltl.parse("F(pickup_plate & F move_plate_lower_rack)")
        assert by_name["task_1_2_2"] == \
            ltl.parse("F(pickup_cup & F move_cup_upper_rack)")
        assert hierarchy.validate(spec) == []

    def test_level_membership_follows_depth(self):
        tree = fixtures.dishwasher_tree()
        spec = construct(tree)
        assert [n.name for n in spec.levels[0]] == ["task_1"]
        assert [n.name for n in spec.levels[1]] == ["task_1_1", "task_1_2"]
        assert len(spec.levels[2]) == 5

    def test_invalid_tree_rejected(self):
        tree = two_leaf_tree(relations=(("task_1_1", "task_1_1"),))
        with pytest.raises(DomainError, match="invalid task tree"):
            construct(tree)

    def test_two_level_tree(self):
        spec = construct(two_leaf_tree())
        assert spec.depth == 2
        by_name = self.spec_map(spec)
        assert by_name["task_1"] == ltl.parse("F task_1_1 & F task_1_2")


class TestTreeMethods:
    def test_walk_document_order(self):
        tree = fixtures.dishwasher_tree()
        assert tree.walk() == ("task_1", "task_1_1", "task_1_1_1",
                               "task_1_1_2", "task_1_1_3", "task_1_2",
                               "task_1_2_1", "task_1_2_2")
        assert tree.leaves() == ("task_1_1_1", "task_1_1_2", "task_1_1_3",
                                 "task_1_2_1", "task_1_2_2")

    def test_depth_and_parent(self):
        tree = fixtures.dishwasher_tree()
        assert tree.depth_of("task_1") == 1
        assert tree.depth_of("task_1_2_1") == 3
        assert tree.parent_of("task_1_2_1") == "task_1_2"
        assert tree.parent_of("task_1") is None

    def test_objects(self):
        tree = fixtures.dishwasher_tree()
        objs = tree.objects()
        assert {"plate", "mug", "utensils", "saucer", "cup",
                "lower_rack", "upper_rack"} == set(objs)

    def test_json_round_trip(self):
        tree = fixtures.dishwasher_tree()
        again = TaskTree.from_json(tree.to_json())
        assert again.to_json() == tree.to_json()
        assert again.node("task_1_1_1").actions == \
            tree.node("task_1_1_1").actions

    def test_from_json_malformed(self):
        with pytest.raises(DomainError, match="malformed"):
            TaskTree.from_json({"nodes": {}})

    def test_unknown_node_lookup(self):
        with pytest.raises(DomainError, match="unknown task node"):
            fixtures.dishwasher_tree().node("task_9")

    def test_dot_shows_structure(self):
        dot = fixtures.dishwasher_tree().to_dot()
        assert '"task_1" -> "task_1_1"' in dot
        assert "style=dashed" in dot
        assert "pickup(plate)" in dot.lower() or "Pickup(plate)" in dot
