"""Instruction pipeline: providers, transcripts, auditing, diagnosis."""

import http.server
import json
import threading

import pytest

from hierltl import fixtures, hierarchy, ltl, pipeline, tasktree
from hierltl.errors import DomainError
from hierltl.pipeline import (FixtureProvider, HttpProvider, PatternProvider,
                              PipelineError, Provider, ProviderError,
                              RecordingProvider, ScriptedProvider, diagnose,
                              display_name, leaf_sentence, non_leaf_sentence,
                              pattern_translate, request_key, run_pipeline)
from hierltl.tasktree import ApiCall, TaskTree, construct


def scripted_run():
    tree = fixtures.dishwasher_tree()
    return run_pipeline(fixtures.dishwasher_instruction(),
                        ScriptedProvider(tree))


class TestRequestKey:
    def test_insensitive_to_dict_order(self):
        a = request_key("translate", {"sentence": "x", "n": 1})
        b = request_key("translate", {"n": 1, "sentence": "x"})
        assert a == b
        assert len(a) == 64

    def test_distinguishes_kind_and_payload(self):
        base = request_key("translate", {"sentence": "x"})
        assert request_key("complete", {"sentence": "x"}) != base
        assert request_key("translate", {"sentence": "y"}) != base


class TestScriptedPipeline:
    def test_call_count_and_result(self):
        result = scripted_run()
        n_nodes = len(result.tree.nodes)
        assert n_nodes == 8
        assert result.transcript.call_count == 2 * n_nodes + 1
        assert result.transcript.warnings == []
        assert result.tree.to_json() == fixtures.dishwasher_tree().to_json()
        assert hierarchy.validate(result.spec) == []

    def test_call_order(self):
        kinds = [e.kind for e in scripted_run().transcript.entries]
        assert kinds == (["decompose"] + ["relations"] * 3 +
                         ["complete"] * 5 + ["translate"] * 8)

    def test_single_leaf_instruction(self):
        tree = TaskTree("task_1", {
            "task_1": tasktree.TaskNode(
                "task_1", instruction="Open the cabinet.",
                actions=(ApiCall("Open", ("cabinet",)),)),
        })
        result = run_pipeline("Open the cabinet.", ScriptedProvider(tree))
        assert result.transcript.call_count == 3
        assert result.spec.depth == 1

    def test_empty_instruction(self):
        with pytest.raises(DomainError, match="empty instruction"):
            run_pipeline("  ", ScriptedProvider(fixtures.dishwasher_tree()))


class TestRecordReplay:
    def test_fixture_replay_is_identical(self):
        tree = fixtures.dishwasher_tree()
        recorder = RecordingProvider(ScriptedProvider(tree))
        first = run_pipeline(fixtures.dishwasher_instruction(), recorder)
        replay = run_pipeline(fixtures.dishwasher_instruction(),
                              FixtureProvider(recorder.fixture()))
        assert replay.tree.to_json() == first.tree.to_json()
        assert replay.spec.to_json() == first.spec.to_json()
        a = [(e.kind, e.payload, e.response)
             for e in first.transcript.entries]
        b = [(e.kind, e.payload, e.response)
             for e in replay.transcript.entries]
        assert a == b

    def test_bundled_fixture_replays(self):
        provider = FixtureProvider(fixtures.pipeline_fixture())
        result = run_pipeline(fixtures.dishwasher_instruction(), provider)
        assert result.transcript.call_count == 17
        assert result.transcript.warnings == []
        assert set(result.spec.names()) == set(fixtures.dishwasher_tree().walk())

    def test_fixture_miss(self):
        provider = FixtureProvider(fixtures.pipeline_fixture())
        with pytest.raises(PipelineError) as err:
            run_pipeline("Paint the fence.", provider)
        assert err.value.stage == "task decomposition"
        assert "no recorded decompose response" in str(err.value)

    def test_fixture_from_path(self, tmp_path):
        recorder = RecordingProvider(ScriptedProvider(fixtures.dishwasher_tree()))
        run_pipeline(fixtures.dishwasher_instruction(), recorder)
        path = tmp_path / "fix.json"
        path.write_text(json.dumps(recorder.fixture()))
        result = run_pipeline(fixtures.dishwasher_instruction(),
                              FixtureProvider(str(path)))
        assert result.transcript.call_count == 17


class _Broken(Provider):
    """Scripted provider with one response overridden."""

    def __init__(self, tree, kind, value):
        self.inner = ScriptedProvider(tree)
        self.kind = kind
        self.value = value

    def decompose(self, instruction):
        if self.kind == "decompose":
            return self.value
        return self.inner.decompose(instruction)

    def relations(self, parent, children):
        if self.kind == "relations" and parent == "task_1":
            return self.value
        return self.inner.relations(parent, children)

    def complete(self, instruction):
        if self.kind == "complete":
            return self.value
        return self.inner.complete(instruction)

    def translate(self, sentence):
        if self.kind == "translate":
            return self.value
        return self.inner.translate(sentence)


class TestMalformedResponses:
    def run_broken(self, kind, value):
        tree = fixtures.dishwasher_tree()
        with pytest.raises(PipelineError) as err:
            run_pipeline(fixtures.dishwasher_instruction(),
                         _Broken(tree, kind, value))
        return err.value

    def test_decompose_not_object(self):
        err = self.run_broken("decompose", [1, 2, 3])
        assert err.stage == "task decomposition"

    def test_decompose_missing_root(self):
        err = self.run_broken("decompose", {"nodes": {}})
        assert err.stage == "task decomposition"
        assert "missing root" in str(err)

    def test_relations_non_child(self):
        err = self.run_broken("relations", [["task_1_1", "task_9"]])
        assert err.stage == "temporal extraction"
        assert "non-child" in str(err)

    def test_relations_not_pairs(self):
        err = self.run_broken("relations", ["task_1_1"])
        assert err.stage == "temporal extraction"

    def test_complete_empty(self):
        err = self.run_broken("complete", [])
        assert err.stage == "action completion"

    def test_complete_bad_verb(self):
        err = self.run_broken("complete", [{"verb": "Fly", "args": ["x"]}])
        assert err.stage == "action completion"
        assert "does not fit the skill set" in str(err)

    def test_translate_not_a_formula(self):
        err = self.run_broken("translate", "this is ((( not LTL")
        assert err.stage == "LTL translation"

    def test_translate_divergence_warns(self):
        tree = fixtures.dishwasher_tree()
        result = run_pipeline(fixtures.dishwasher_instruction(),
                              _Broken(tree, "translate", "F stray_prop"))
        assert result.transcript.warnings
        assert all("divergence" in w for w in result.transcript.warnings)
        # Reference templates stay authoritative despite the divergence.
        assert result.spec.to_json() == construct(tree).to_json()

    def test_provider_error_carries_stage(self):
        class Dead(Provider):
            pass

        with pytest.raises(PipelineError) as err:
            run_pipeline("Do something.", Dead())
        assert err.value.stage == "task decomposition"
        assert err.value.transcript is not None


class TestSentences:
    def test_display_name(self):
        assert display_name("task_1_2_1") == "Task_1.2.1"
        assert display_name("task_1") == "Task_1"

    def test_non_leaf_sentence(self):
        text = non_leaf_sentence(
            ["task_1_1", "task_1_2"], [("task_1_1", "task_1_2")])
        assert text == ("Always Task_1.1 must precede Task_1.2 and "
                        "eventually Task_1.1 is executed and "
                        "eventually Task_1.2 is executed.")

    def test_leaf_sentence(self):
        text = leaf_sentence([ApiCall("Pickup", ("plate",)),
                              ApiCall("Move", ("plate", "lower_rack"))])
        assert text == "Execute Pickup(plate), then Move(plate, lower_rack)."

    def test_sentences_round_trip_through_pattern(self):
        children = ["task_1_1", "task_1_2", "task_1_3"]
        rels = [("task_1_1", "task_1_2")]
        sentence = non_leaf_sentence(children, rels)
        assert pattern_translate(sentence) == \
            tasktree.generate_ltl(children, rels)


class TestPatternTranslate:
    def test_precedence_sentence(self):
        f = pattern_translate(
            "Always Task_1.1 must precede Task_1.2 and eventually "
            "Task_1.1 must be executed.")
        assert f == ltl.parse("F(task_1_1 & F task_1_2)")

    def test_plain_eventualities(self):
        f = pattern_translate(
            "Eventually Task_1.1.1 is executed and eventually Task_1.1.2 "
            "is executed and eventually Task_1.1.3 is executed.")
        assert f == ltl.parse("F task_1_1_1 & F task_1_1_2 & F task_1_1_3")

    def test_precede_plus_eventualities(self):
        f = pattern_translate(
            "Always Task_1.2.1 precedes Task_1.2.2 and eventually "
            "Task_1.2.1 is executed and eventually Task_1.2.2 is executed.")
        assert f == ltl.parse("F(task_1_2_1 & F task_1_2_2)")

    def test_any_order_clause(self):
        f = pattern_translate(
            "Task_1.1, Task_1.2 and Task_1.3 can be completed in any order.")
        assert f == ltl.parse("F task_1_1 & F task_1_2 & F task_1_3")

    def test_then_and_after(self):
        assert pattern_translate("First Task_1.1, then Task_1.2.") == \
            ltl.parse("F(task_1_1 & F task_1_2)")
        assert pattern_translate("Do Task_1.2 after Task_1.1.") == \
            ltl.parse("F(task_1_1 & F task_1_2)")

    def test_api_calls(self):
        f = pattern_translate("Execute Pickup(cup), then Move(cup, sink).")
        assert f == ltl.parse("F(pickup_cup & F move_cup_sink)")

    def test_unmatched_sentence(self):
        with pytest.raises(pipeline.PatternError, match="no registered pattern"):
            pattern_translate("The weather is nice.")
        with pytest.raises(pipeline.PatternError, match="empty"):
            pattern_translate("   ")


class TestDiagnose:
    def reference(self):
        return construct(fixtures.dishwasher_tree())

    def test_match(self):
        tree = fixtures.dishwasher_tree()
        report = diagnose(tree, construct(tree), self.reference())
        assert report.matches
        assert report.failure_class is None

    def test_task_decomposition(self):
        tree = fixtures.dishwasher_tree()
        data = tree.to_json()
        del data["nodes"]["task_1_1"]["children"][2]
        del data["nodes"]["task_1_1_3"]
        mutated = TaskTree.from_json(data)
        report = diagnose(mutated, construct(mutated), self.reference())
        assert report.failure_class == "task decomposition"
        assert "task_1_1_3" in report.detail

    def test_temporal_extraction(self):
        tree = fixtures.dishwasher_tree()
        data = tree.to_json()
        data["nodes"]["task_1_2"]["relations"] = []
        mutated = TaskTree.from_json(data)
        report = diagnose(mutated, construct(mutated), self.reference())
        assert report.failure_class == "temporal extraction"
        assert report.node == "task_1_2"

    def test_action_completion(self):
        tree = fixtures.dishwasher_tree()
        data = tree.to_json()
        data["nodes"]["task_1_2_2"]["actions"] = [
            {"verb": "Pickup", "args": ["cup"]},
            {"verb": "Move", "args": ["cup", "lower_rack"]},
        ]
        mutated = TaskTree.from_json(data)
        report = diagnose(mutated, construct(mutated), self.reference())
        assert report.failure_class == "action completion"
        assert report.node == "task_1_2_2"

    def test_ltl_translation_via_grouped_tail(self):
        # Same ordering pairs as the reference fan-out, different meaning:
        # only a direct trace-equivalence check can notice that grouping
        # three subtasks inside one eventuality demands simultaneity.
        leaf_texts = ["F a1_x", "F a2_x", "F a3_x", "F a4_x"]
        reference = hierarchy.spec_from_texts(
            [["F(phi_2_1 & F phi_2_2 & F phi_2_3 & F phi_2_4)"], leaf_texts])
        wrong = hierarchy.spec_from_texts(
            [["F(phi_2_1 & F(phi_2_2 & (phi_2_3 & phi_2_4)))"], leaf_texts])
        tree = fixtures.dishwasher_tree()
        report = diagnose(tree, wrong, reference)
        assert report.failure_class == "LTL translation"
        assert report.node == "phi_1_1"

    def test_report_json(self):
        tree = fixtures.dishwasher_tree()
        report = diagnose(tree, construct(tree), self.reference())
        data = report.to_json()
        assert data["matches"] is True
        assert data["failure_class"] is None


class _Endpoint(http.server.BaseHTTPRequestHandler):
    tree = None

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        provider = ScriptedProvider(self.tree)
        kind, payload = body["kind"], body["payload"]
        if kind == "decompose":
            out = json.dumps(provider.decompose(payload["instruction"]))
        elif kind == "relations":
            out = json.dumps(provider.relations(payload["parent"],
                                                payload["children"]))
        elif kind == "complete":
            out = json.dumps(provider.complete(payload["instruction"]))
        else:
            out = provider.translate(payload["sentence"])
        data = json.dumps({"text": out}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class TestHttpProvider:
    def test_requires_endpoint(self, monkeypatch):
        monkeypatch.delenv(pipeline.ENV_URL, raising=False)
        with pytest.raises(DomainError, match="no endpoint"):
            HttpProvider()

    def test_round_trip_against_local_server(self):
        _Endpoint.tree = fixtures.dishwasher_tree()
        server = http.server.HTTPServer(("127.0.0.1", 0), _Endpoint)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}/"
            provider = HttpProvider(url=url, token="secret")
            result = run_pipeline(fixtures.dishwasher_instruction(), provider)
            assert result.transcript.call_count == 17
            assert result.spec.to_json() == \
                construct(fixtures.dishwasher_tree()).to_json()
        finally:
            server.shutdown()
            thread.join(timeout=5)

    def test_http_error_becomes_pipeline_error(self):
        class Deny(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                self.send_response(500)
                self.end_headers()

            def log_message(self, *args):
                pass

        server = http.server.HTTPServer(("127.0.0.1", 0), Deny)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}/"
            with pytest.raises(PipelineError) as err:
                run_pipeline("Anything.", HttpProvider(url=url))
            assert err.value.stage == "task decomposition"
            assert "HTTP 500" in str(err.value)
        finally:
            server.shutdown()
            thread.join(timeout=5)


class TestTranscript:
    def test_json_shape(self):
        result = scripted_run()
        data = result.transcript.to_json()
        assert len(data["entries"]) == 17
        assert data["warnings"] == []
        first = data["entries"][0]
        assert first["kind"] == "decompose"
        assert "key" in first and len(first["key"]) == 64

    def test_to_fixture_feeds_fixture_provider(self):
        result = scripted_run()
        provider = FixtureProvider(result.transcript.to_fixture())
        again = run_pipeline(fixtures.dishwasher_instruction(), provider)
        assert again.spec.to_json() == result.spec.to_json()
