"""Language front end behind a provider interface.

A provider answers four request kinds: Decompose (instruction to task-tree
skeleton), Relations (sibling precedence pairs), Complete (leaf instruction
to API calls), Translate (structured sentence to formula text).  Bundled
implementations: fixture replay from recorded JSON (keyed by request hash),
an HTTP client for a user-hosted endpoint, a deterministic pattern grammar,
and a scripted provider that answers from a golden tree.

run_pipeline drives one Decompose, one Relations per non-leaf, one Complete
per leaf, and one Translate per node, so a tree with n1 non-leaves and n2
leaves costs exactly 2*(n1+n2)+1 provider calls.  The template-generated
formula is authoritative; Translate output is audited against it and any
divergence is recorded as a translation warning, not an error.

HTTP endpoint configuration comes from the HLTL_PROVIDER_URL and
HLTL_PROVIDER_TOKEN environment variables unless given explicitly.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from . import hierarchy, ltl, tasktree
from .errors import DomainError
from .hierarchy import HierSpec
from .ltl import Formula
from .tasktree import ApiCall, TaskNode, TaskTree

ENV_URL = "HLTL_PROVIDER_URL"
ENV_TOKEN = "HLTL_PROVIDER_TOKEN"

FAILURE_CLASSES = (
    "task decomposition",
    "temporal extraction",
    "LTL translation",
    "action completion",
)


class ProviderError(DomainError):
    """The provider could not answer (transport, cache miss, bad payload)."""


class PatternError(DomainError):
    """Sentence outside the deterministic grammar."""


class PipelineError(DomainError):
    """Pipeline failure; names the failure class and keeps the transcript."""

    def __init__(self, message: str, stage: str | None = None,
                 transcript: "Transcript | None" = None):
        super().__init__(message)
        self.stage = stage
        self.transcript = transcript


def request_key(kind: str, payload: Mapping) -> str:
    """Stable fixture key: hash of the kind plus canonical payload JSON."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(f"{kind}:{canon}".encode()).hexdigest()


@dataclass(frozen=True)
class TranscriptEntry:
    kind: str
    payload: dict
    response: object
    timestamp: float

    @property
    def key(self) -> str:
        return request_key(self.kind, self.payload)


@dataclass
class Transcript:
    entries: list[TranscriptEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def call_count(self) -> int:
        return len(self.entries)

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "entries": [
                {"kind": e.kind, "payload": e.payload, "response": e.response,
                 "timestamp": e.timestamp, "key": e.key}
                for e in self.entries
            ],
            "warnings": list(self.warnings),
        }

    def to_fixture(self) -> dict:
        """Replayable fixture: request key to recorded response."""
        return {
            "format_version": 1,
            "entries": {e.key: e.response for e in self.entries},
        }


class Provider:
    """Interface: four request kinds, JSON-shaped payloads and responses."""

    name = "provider"

    def decompose(self, instruction: str) -> Mapping:
        raise ProviderError(f"{self.name} cannot decompose")

    def relations(self, parent: str,
                  children: Sequence[Mapping]) -> Sequence:
        raise ProviderError(f"{self.name} cannot extract relations")

    def complete(self, instruction: str) -> Sequence:
        raise ProviderError(f"{self.name} cannot complete actions")

    def translate(self, sentence: str) -> str:
        raise ProviderError(f"{self.name} cannot translate")


class FixtureProvider(Provider):
    """Replays recorded responses; a missing key is an explicit error."""

    name = "fixture"

    def __init__(self, fixture: Mapping | str):
        if isinstance(fixture, str):
            with open(fixture, encoding="utf-8") as fh:
                fixture = json.load(fh)
        entries = fixture.get("entries")
        if not isinstance(entries, Mapping):
            raise DomainError("fixture file has no entries map")
        self.entries = dict(entries)

    def _lookup(self, kind: str, payload: Mapping) -> object:
        key = request_key(kind, dict(payload))
        if key not in self.entries:
            raise ProviderError(
                f"fixture has no recorded {kind} response (key {key[:12]}...)")
        return self.entries[key]

    def decompose(self, instruction: str) -> Mapping:
        return self._lookup("decompose", {"instruction": instruction})

    def relations(self, parent: str, children: Sequence[Mapping]) -> Sequence:
        return self._lookup("relations",
                            {"parent": parent, "children": list(children)})

    def complete(self, instruction: str) -> Sequence:
        return self._lookup("complete", {"instruction": instruction})

    def translate(self, sentence: str) -> str:
        text = self._lookup("translate", {"sentence": sentence})
        if not isinstance(text, str):
            raise ProviderError("fixture translate response is not text")
        return text


DEFAULT_PROMPTS = {
    "decompose": "Decompose the instruction into a task tree JSON: {instruction}",
    "relations": "List precedence pairs among: {children}",
    "complete": "Expand into robot API calls: {instruction}",
    "translate": "Translate into co-safe LTL: {sentence}",
}


class HttpProvider(Provider):
    """POSTs each request to one endpoint; expects {"text": ...} back.

    Request body: {"kind": ..., "payload": {...}, "prompt_template": ...}.
    For decompose/relations/complete the text must parse as JSON.
    """

    name = "http"

    def __init__(self, url: str | None = None, token: str | None = None,
                 prompts: Mapping[str, str] | None = None,
                 timeout_s: float = 60.0):
        self.url = url or os.environ.get(ENV_URL)
        if not self.url:
            raise DomainError(
                f"no endpoint configured; set {ENV_URL} or pass url")
        self.token = token or os.environ.get(ENV_TOKEN)
        self.prompts = dict(DEFAULT_PROMPTS)
        if prompts:
            self.prompts.update(prompts)
        self.timeout_s = timeout_s

    def _post(self, kind: str, payload: Mapping) -> str:
        import requests

        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(
                self.url,
                json={"kind": kind, "payload": dict(payload),
                      "prompt_template": self.prompts[kind]},
                headers=headers, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ProviderError(f"endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"endpoint returned HTTP {resp.status_code}")
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError) as exc:
            raise ProviderError("endpoint response lacks a text field") from exc
        return text

    def _post_json(self, kind: str, payload: Mapping) -> object:
        text = self._post(kind, payload)
        try:
            return json.loads(text)
        except ValueError as exc:
            raise ProviderError(f"{kind} response is not JSON: {exc}") from exc

    def decompose(self, instruction: str) -> Mapping:
        return self._post_json("decompose", {"instruction": instruction})

    def relations(self, parent: str, children: Sequence[Mapping]) -> Sequence:
        return self._post_json("relations",
                               {"parent": parent, "children": list(children)})

    def complete(self, instruction: str) -> Sequence:
        return self._post_json("complete", {"instruction": instruction})

    def translate(self, sentence: str) -> str:
        return self._post("translate", {"sentence": sentence})


class PatternProvider(Provider):
    """Deterministic grammar; answers Translate and Relations only."""

    name = "pattern"

    def relations(self, parent: str, children: Sequence[Mapping]) -> Sequence:
        pairs: list[list[str]] = []
        for child in children:
            ids, found = _parse_task_clauses(str(child.get("instruction", "")))
            pairs.extend([a, b] for a, b in found)
        return pairs

    def translate(self, sentence: str) -> str:
        return ltl.to_text(pattern_translate(sentence))


class ScriptedProvider(Provider):
    """Answers from a golden tree; used to build and test fixtures."""

    name = "scripted"

    def __init__(self, tree: TaskTree):
        self.tree = tree
        self._by_instruction = {}
        for nid in tree.walk():
            node = tree.nodes[nid]
            if node.is_leaf:
                self._by_instruction.setdefault(node.instruction, node)

    def decompose(self, instruction: str) -> Mapping:
        nodes = {}
        for nid in self.tree.walk():
            node = self.tree.nodes[nid]
            entry: dict = {"instruction": node.instruction}
            if node.children:
                entry["children"] = list(node.children)
            nodes[nid] = entry
        return {"root": self.tree.root, "nodes": nodes}

    def relations(self, parent: str, children: Sequence[Mapping]) -> Sequence:
        return [list(r) for r in self.tree.node(parent).relations]

    def complete(self, instruction: str) -> Sequence:
        node = self._by_instruction.get(instruction)
        if node is None:
            raise ProviderError(f"no scripted leaf for {instruction!r}")
        return [{"verb": c.verb, "args": list(c.args)} for c in node.actions]

    def translate(self, sentence: str) -> str:
        return ltl.to_text(pattern_translate(sentence))


class RecordingProvider(Provider):
    """Wraps a provider and mirrors every exchange into a fixture dict."""

    name = "recording"

    def __init__(self, inner: Provider):
        self.inner = inner
        self.entries: dict[str, object] = {}

    def _record(self, kind: str, payload: dict, response: object) -> object:
        self.entries[request_key(kind, payload)] = response
        return response

    def decompose(self, instruction: str) -> Mapping:
        payload = {"instruction": instruction}
        return self._record("decompose", payload,
                            self.inner.decompose(instruction))

    def relations(self, parent: str, children: Sequence[Mapping]) -> Sequence:
        payload = {"parent": parent, "children": list(children)}
        return self._record("relations", payload,
                            self.inner.relations(parent, children))

    def complete(self, instruction: str) -> Sequence:
        payload = {"instruction": instruction}
        return self._record("complete", payload,
                            self.inner.complete(instruction))

    def translate(self, sentence: str) -> str:
        payload = {"sentence": sentence}
        return self._record("translate", payload,
                            self.inner.translate(sentence))

    def fixture(self) -> dict:
        return {"format_version": 1, "entries": dict(self.entries)}


# ---------------------------------------------------------------------------
# Sentences


def display_name(node_id: str) -> str:
    """task_1_2_1 -> Task_1.2.1 (the sentence-facing spelling)."""
    parts = node_id.split("_")
    return "Task_" + ".".join(parts[1:])


def non_leaf_sentence(children: Sequence[str],
                      relations: Sequence[tuple[str, str]]) -> str:
    clauses = [f"always {display_name(a)} must precede {display_name(b)}"
               for a, b in relations]
    clauses += [f"eventually {display_name(c)} is executed" for c in children]
    text = " and ".join(clauses)
    return text[0].upper() + text[1:] + "."


def leaf_sentence(calls: Sequence[ApiCall]) -> str:
    return "Execute " + ", then ".join(c.text for c in calls) + "."


# ---------------------------------------------------------------------------
# Pattern grammar

_TASK_RE = re.compile(r"[Tt]ask[_\s]*(\d+(?:\.\d+)*)")
_CALL_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\(([^()]*)\)")


def _task_id(dotted: str) -> str:
    return "task_" + dotted.replace(".", "_")


def _parse_task_clauses(sentence: str) -> tuple[list[str], list[tuple[str, str]]]:
    """Task ids in occurrence order plus precedence pairs from the clauses."""
    ids: list[str] = []
    for m in _TASK_RE.finditer(sentence):
        tid = _task_id(m.group(1))
        if tid not in ids:
            ids.append(tid)
    pairs: list[tuple[str, str]] = []
    for clause in re.split(r"\band\b|[;]", sentence):
        mentioned = [_task_id(m.group(1)) for m in _TASK_RE.finditer(clause)]
        low = clause.lower()
        if not mentioned:
            continue
        if "any order" in low or "any sequence" in low:
            continue
        if "precede" in low or "before" in low:
            for a, b in zip(mentioned, mentioned[1:]):
                pairs.append((a, b))
        elif "after" in low and len(mentioned) >= 2:
            for a, b in zip(mentioned, mentioned[1:]):
                pairs.append((b, a))
        elif "then" in low:
            for a, b in zip(mentioned, mentioned[1:]):
                pairs.append((a, b))
    uniq: dict[tuple[str, str], None] = {}
    for p in pairs:
        uniq.setdefault(p)
    return ids, list(uniq)


def pattern_translate(sentence: str) -> Formula:
    """Deterministic translation of structured English into a formula.

    Two sentence species: robot API calls joined by "then" become a nested
    eventuality chain; Task_i.j sentences with precede/before/after/then/
    any-order clauses become the ordering template over the task names.
    """
    if not sentence or sentence.isspace():
        raise PatternError("empty sentence")
    calls = []
    for verb, args in _CALL_RE.findall(sentence):
        if verb.lower() in tasktree.DEFAULT_SKILLS:
            calls.append(ApiCall(verb, tuple(
                a.strip() for a in args.split(",") if a.strip())))
    if calls:
        return tasktree.action_formula(calls)
    ids, pairs = _parse_task_clauses(sentence)
    if not ids:
        raise PatternError(
            f"sentence matches no registered pattern: {sentence!r}")
    return tasktree.generate_ltl(ids, pairs)


# ---------------------------------------------------------------------------
# Pipeline


@dataclass(frozen=True)
class PipelineResult:
    tree: TaskTree
    spec: HierSpec
    transcript: Transcript


def _call(provider: Provider, transcript: Transcript, stage: str,
          kind: str, payload: dict, fn: Callable[[], object]) -> object:
    try:
        response = fn()
    except ProviderError as exc:
        raise PipelineError(f"provider failed during {kind}: {exc}",
                            stage=stage, transcript=transcript) from exc
    transcript.entries.append(
        TranscriptEntry(kind, payload, _plain(response), time.time()))
    return response


def _plain(value: object) -> object:
    return json.loads(json.dumps(value))


def run_pipeline(instruction: str, provider: Provider, *,
                 skills: Mapping[str, int] | None = None) -> PipelineResult:
    """Instruction to (tree, spec, transcript) in 2*(n1+n2)+1 provider calls."""
    if not instruction or instruction.isspace():
        raise DomainError("empty instruction")
    skills = dict(skills or tasktree.DEFAULT_SKILLS)
    transcript = Transcript()

    skeleton = _call(provider, transcript, "task decomposition", "decompose",
                     {"instruction": instruction},
                     lambda: provider.decompose(instruction))
    root, draft = _parse_skeleton(skeleton, transcript)

    order = _document_order(root, draft, transcript)
    non_leaves = [nid for nid in order if draft[nid]["children"]]
    leaves = [nid for nid in order if not draft[nid]["children"]]

    relations: dict[str, list[tuple[str, str]]] = {}
    for nid in non_leaves:
        children = [{"id": c, "instruction": draft[c]["instruction"]}
                    for c in draft[nid]["children"]]
        raw = _call(provider, transcript, "temporal extraction", "relations",
                    {"parent": nid, "children": children},
                    lambda nid=nid, children=children:
                        provider.relations(nid, children))
        relations[nid] = _parse_relations(raw, draft[nid]["children"],
                                          nid, transcript)

    actions: dict[str, list[ApiCall]] = {}
    for nid in leaves:
        raw = _call(provider, transcript, "action completion", "complete",
                    {"instruction": draft[nid]["instruction"]},
                    lambda nid=nid:
                        provider.complete(draft[nid]["instruction"]))
        actions[nid] = _parse_actions(raw, nid, skills, transcript)

    nodes = {}
    for nid in order:
        nodes[nid] = TaskNode(
            node_id=nid,
            instruction=draft[nid]["instruction"],
            children=tuple(draft[nid]["children"]),
            relations=tuple(relations.get(nid, ())),
            actions=tuple(actions.get(nid, ())),
        )
    tree = TaskTree(root, nodes)
    problems = tasktree.validate_tree(tree, skills)
    if problems:
        raise PipelineError(
            "decomposed tree is invalid: " + "; ".join(problems),
            stage="task decomposition", transcript=transcript)
    spec = tasktree.construct(tree, skills)
    reference = spec.formula_map()

    for nid in order:
        node = nodes[nid]
        sentence = (leaf_sentence(node.actions) if node.is_leaf
                    else non_leaf_sentence(node.children, node.relations))
        text = _call(provider, transcript, "LTL translation", "translate",
                     {"sentence": sentence},
                     lambda sentence=sentence: provider.translate(sentence))
        _audit_translation(str(text), reference[nid], nid, transcript)

    return PipelineResult(tree, spec, transcript)


def _parse_skeleton(skeleton: object,
                    transcript: Transcript) -> tuple[str, dict]:
    def bad(why: str) -> PipelineError:
        return PipelineError(f"malformed decomposition: {why}",
                             stage="task decomposition", transcript=transcript)

    if not isinstance(skeleton, Mapping):
        raise bad("response is not an object")
    root = skeleton.get("root")
    nodes = skeleton.get("nodes")
    if not isinstance(root, str) or not isinstance(nodes, Mapping):
        raise bad("missing root or nodes")
    draft: dict[str, dict] = {}
    for nid, entry in nodes.items():
        if not isinstance(entry, Mapping):
            raise bad(f"node {nid} is not an object")
        children = entry.get("children", [])
        if not isinstance(children, (list, tuple)):
            raise bad(f"children of {nid} is not a list")
        draft[str(nid)] = {
            "instruction": str(entry.get("instruction", "")),
            "children": [str(c) for c in children],
        }
    if root not in draft:
        raise bad(f"root {root} not among nodes")
    return root, draft


def _document_order(root: str, draft: dict,
                    transcript: Transcript) -> list[str]:
    order: list[str] = []
    stack = [root]
    seen = set()
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise PipelineError(f"node {nid} repeats in the tree",
                                stage="task decomposition",
                                transcript=transcript)
        if nid not in draft:
            raise PipelineError(f"child {nid} has no node entry",
                                stage="task decomposition",
                                transcript=transcript)
        seen.add(nid)
        order.append(nid)
        for child in reversed(draft[nid]["children"]):
            stack.append(child)
    for nid in draft:
        if nid not in seen:
            raise PipelineError(f"node {nid} is unreachable from the root",
                                stage="task decomposition",
                                transcript=transcript)
    return order


def _parse_relations(raw: object, children: Sequence[str], parent: str,
                     transcript: Transcript) -> list[tuple[str, str]]:
    if not isinstance(raw, (list, tuple)):
        raise PipelineError(f"relations for {parent} are not a list",
                            stage="temporal extraction", transcript=transcript)
    out = []
    for item in raw:
        if (not isinstance(item, (list, tuple)) or len(item) != 2
                or not all(isinstance(x, str) for x in item)):
            raise PipelineError(
                f"relation {item!r} under {parent} is not a pair of ids",
                stage="temporal extraction", transcript=transcript)
        a, b = item
        if a not in children or b not in children:
            raise PipelineError(
                f"relation ({a}, {b}) under {parent} names a non-child",
                stage="temporal extraction", transcript=transcript)
        out.append((a, b))
    return out


def _parse_actions(raw: object, leaf: str, skills: Mapping[str, int],
                   transcript: Transcript) -> list[ApiCall]:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise PipelineError(f"completion for {leaf} is not a non-empty list",
                            stage="action completion", transcript=transcript)
    out = []
    for item in raw:
        if not isinstance(item, Mapping) or "verb" not in item:
            raise PipelineError(f"call {item!r} under {leaf} lacks a verb",
                                stage="action completion",
                                transcript=transcript)
        call = ApiCall(str(item["verb"]),
                       tuple(str(a) for a in item.get("args", ())))
        verb = call.verb.lower()
        if verb not in skills or len(call.args) != skills[verb]:
            raise PipelineError(
                f"call {call.text} under {leaf} does not fit the skill set",
                stage="action completion", transcript=transcript)
        out.append(call)
    return out


def _audit_translation(text: str, reference: Formula, nid: str,
                       transcript: Transcript) -> None:
    try:
        translated = ltl.parse(text)
    except DomainError as exc:
        raise PipelineError(
            f"translation for {nid} is not a formula: {exc}",
            stage="LTL translation", transcript=transcript) from exc
    n_props = len(ltl.props(reference))
    pulse = n_props > 2
    if not ltl.equivalent_on_traces(reference, translated,
                                    max_len=3 if n_props > 3 else 4,
                                    pulse=pulse):
        transcript.warnings.append(
            f"LTL translation divergence at {nid}: provider said "
            f"{ltl.to_text(translated)}, template says "
            f"{ltl.to_text(reference)}; the template is used")


# ---------------------------------------------------------------------------
# Failure diagnosis


@dataclass(frozen=True)
class FailureReport:
    failure_class: str | None
    node: str | None
    detail: str

    @property
    def matches(self) -> bool:
        return self.failure_class is None

    def to_json(self) -> dict:
        return {"format_version": 1, "matches": self.matches,
                "failure_class": self.failure_class, "node": self.node,
                "detail": self.detail}


def diagnose(tree: TaskTree, spec: HierSpec,
             reference: HierSpec) -> FailureReport:
    """Classify the first divergence from a golden spec into a failure class.

    Checks run coarsest first: node inventory (task decomposition), then per
    node the ordering constraints (temporal extraction), formula equivalence
    (LTL translation), and leaf action sequences (action completion).
    """
    from .planner import completion_order_pairs

    got_names = set(spec.names())
    want_names = set(reference.names())
    if got_names != want_names:
        missing = sorted(want_names - got_names)
        extra = sorted(got_names - want_names)
        bits = []
        if missing:
            bits.append("missing " + ", ".join(missing))
        if extra:
            bits.append("unexpected " + ", ".join(extra))
        return FailureReport("task decomposition", None, "; ".join(bits))

    got_map = spec.formula_map()
    want_map = reference.formula_map()
    ref_children = {n: reference.children_of(n) for n in reference.names()}

    for name in reference.names():
        got_f = got_map[name]
        want_f = want_map[name]
        if ref_children[name]:
            got_pairs = set(completion_order_pairs(got_f))
            want_pairs = set(completion_order_pairs(want_f))
            if got_pairs != want_pairs:
                return FailureReport(
                    "temporal extraction", name,
                    f"order constraints differ: got {sorted(got_pairs)}, "
                    f"expected {sorted(want_pairs)}")
            if not ltl.equivalent_on_traces(want_f, got_f, max_len=4,
                                            pulse=True):
                return FailureReport(
                    "LTL translation", name,
                    f"formulas disagree on some trace: got "
                    f"{ltl.to_text(got_f)}, expected {ltl.to_text(want_f)}")
        else:
            if ltl.props(got_f) != ltl.props(want_f) or \
                    not ltl.equivalent_on_traces(want_f, got_f, max_len=4):
                return FailureReport(
                    "action completion", name,
                    f"action sequence differs: got {ltl.to_text(got_f)}, "
                    f"expected {ltl.to_text(want_f)}")
    return FailureReport(None, None, "specifications agree")
