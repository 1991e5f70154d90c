import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratrec.dialogue import apply_system_turn, apply_user_turn, new_session
from stratrec.experts.actor import Actor
from stratrec.experts.backends import ExpertUnavailableError, MockBackend, RemoteBackend
from stratrec.experts.preference import PreferenceReasoner, parse_preference_reply
from stratrec.experts.prompts import (
    PromptTemplate,
    TemplateName,
    default_templates,
    load_templates,
)
from stratrec.experts.rewarder import Rewarder, ScoreParseError, judge_metric, parse_score
from stratrec.retrieval import FactBundle, KnowledgeTriple, retrieve_facts
from stratrec.strategies import default_catalog


@pytest.fixture(scope="module")
def templates():
    return default_templates()


# ---------------------------------------------------------------------------
# templates
# ---------------------------------------------------------------------------


def test_all_six_templates_bundled(templates):
    assert set(templates) == set(TemplateName)


def test_render_rejects_missing_placeholder():
    t = PromptTemplate(TemplateName.ACTOR, "play {strategy_name} on {transcript}")
    with pytest.raises(KeyError):
        t.render(strategy_name="Credibility")


def test_render_ignores_extra_inputs():
    t = PromptTemplate(TemplateName.JUDGE_WI, "judge {transcript}")
    assert t.render(transcript="abc", unused="zzz") == "judge abc"


def test_load_templates_missing_file_errors(tmp_path):
    (tmp_path / "actor.txt").write_text("x")
    with pytest.raises(FileNotFoundError):
        load_templates(tmp_path)


# ---------------------------------------------------------------------------
# preference reasoner
# ---------------------------------------------------------------------------


def test_mock_preference_echo(templates):
    backend = MockBackend(rules=[("comedy", "SUMMARY: wants comedy\nLIKES: comedy\nDISLIKES:\nHINTS:")])
    reasoner = PreferenceReasoner(backend, templates[TemplateName.PREFERENCE_REASONER])
    state = new_session("s", opening_user_text="I want a comedy")
    pref = reasoner.infer(state)
    assert "comedy" in pref.liked_aspects


def test_preference_requires_user_utterance(templates):
    reasoner = PreferenceReasoner(MockBackend(default="x"), templates[TemplateName.PREFERENCE_REASONER])
    with pytest.raises(ValueError):
        reasoner.infer(new_session("s"))


def test_preference_deterministic(templates):
    backend = MockBackend(default="SUMMARY: stable\nLIKES: a, b\nDISLIKES: c\nHINTS:")
    reasoner = PreferenceReasoner(backend, templates[TemplateName.PREFERENCE_REASONER])
    state = new_session("s", opening_user_text="anything")
    assert reasoner.infer(state) == reasoner.infer(state)


def test_preference_parse_failure_falls_back_to_raw(templates, caplog):
    backend = MockBackend(default="no structure at all")
    reasoner = PreferenceReasoner(backend, templates[TemplateName.PREFERENCE_REASONER])
    state = new_session("s", opening_user_text="hello")
    with caplog.at_level("WARNING"):
        pref = reasoner.infer(state)
    assert pref.text == "no structure at all"
    assert pref.liked_aspects == ()
    assert reasoner.parse_warnings == 1


def test_parse_preference_sections():
    parsed = parse_preference_reply("SUMMARY: s\nLIKES: x, y\nDISLIKES: z\nHINTS: h1, h2")
    assert parsed.liked_aspects == ("x", "y")
    assert parsed.disliked_aspects == ("z",)
    assert parsed.candidate_hints == ("h1", "h2")
    assert parse_preference_reply("LIKES: x") is None


# ---------------------------------------------------------------------------
# actor
# ---------------------------------------------------------------------------


def facts_one_triple():
    store = [KnowledgeTriple("My Favorite Year", "genre", "comedy-drama")]
    return retrieve_facts(store, [("My Favorite Year", 1.0)], 4)


def test_actor_template_wiring(templates):
    catalog = default_catalog()
    actor = Actor(MockBackend(echo=True), templates[TemplateName.ACTOR])
    state = new_session("s", opening_user_text="hi")
    pref = parse_preference_reply("SUMMARY: browsing\nLIKES:\nDISLIKES:\nHINTS:")
    reply = actor.respond(catalog.by_id(0), pref, facts_one_triple(), state)
    assert "Credibility" in reply
    assert catalog.by_id(0).instruction in reply


def test_actor_embeds_fact_entity(templates):
    catalog = default_catalog()
    actor = Actor(MockBackend(echo=True), templates[TemplateName.ACTOR], max_chars=5000)
    state = new_session("s", opening_user_text="hi")
    pref = parse_preference_reply("SUMMARY: browsing\nLIKES:\nDISLIKES:\nHINTS:")
    reply = actor.respond(catalog.by_id(0), pref, facts_one_triple(), state)
    assert "My Favorite Year" in reply


def test_actor_deterministic(templates):
    catalog = default_catalog()
    actor = Actor(MockBackend(default="Here you go."), templates[TemplateName.ACTOR])
    state = new_session("s", opening_user_text="hi")
    pref = parse_preference_reply("SUMMARY: s\nLIKES:\nDISLIKES:\nHINTS:")
    assert actor.respond(catalog.by_id(1), pref, facts_one_triple(), state) == actor.respond(
        catalog.by_id(1), pref, facts_one_triple(), state
    )


def test_actor_empty_reply_retried_then_fails(templates):
    catalog = default_catalog()
    backend = MockBackend(replies=["", ""])
    actor = Actor(backend, templates[TemplateName.ACTOR])
    state = new_session("s", opening_user_text="hi")
    pref = parse_preference_reply("SUMMARY: s\nLIKES:\nDISLIKES:\nHINTS:")
    with pytest.raises(ExpertUnavailableError):
        actor.respond(catalog.by_id(0), pref, facts_one_triple(), state)
    assert len(backend.calls) == 2


# ---------------------------------------------------------------------------
# rewarder / judges
# ---------------------------------------------------------------------------


def two_turn_state():
    state = new_session("s", opening_user_text="hi")
    state = apply_system_turn(state, 0, "hello there")
    return apply_user_turn(state, "ok")


def test_constant_judge_normalization(templates):
    rewarder = Rewarder(MockBackend(default="5"), templates[TemplateName.REWARDER])
    signal = rewarder.score(two_turn_state(), samples=3, tau=0.8)
    assert signal.mean_raw == 5.0
    assert signal.normalized == 1.0
    assert signal.terminate


def test_mean_of_mixed_scores(templates):
    # oracle: (3 + 4) / 2 = 3.5 raw, (3.5 - 1) / 4 = 0.625 normalized
    rewarder = Rewarder(MockBackend(replies=["3", "4"]), templates[TemplateName.REWARDER])
    signal = rewarder.score(two_turn_state(), samples=2, tau=0.8)
    assert signal.mean_raw == pytest.approx(3.5)
    assert signal.normalized == pytest.approx(0.625)
    assert not signal.terminate


def test_termination_is_strict_inequality(templates):
    # raw 4 -> normalized exactly 0.75; tau 0.75 must NOT terminate
    rewarder = Rewarder(MockBackend(default="4"), templates[TemplateName.REWARDER])
    signal = rewarder.score(two_turn_state(), samples=1, tau=0.75)
    assert signal.normalized == 0.75
    assert not signal.terminate


def test_majority_parse_failure_is_error(templates):
    rewarder = Rewarder(MockBackend(replies=["nope", "nah", "4"]), templates[TemplateName.REWARDER])
    with pytest.raises(ScoreParseError):
        rewarder.score(two_turn_state(), samples=3, tau=0.5)


def test_minority_parse_failure_tolerated(templates):
    rewarder = Rewarder(MockBackend(replies=["bad", "4", "2"]), templates[TemplateName.REWARDER])
    signal = rewarder.score(two_turn_state(), samples=3, tau=0.5)
    assert signal.mean_raw == pytest.approx(3.0)


def test_judge_metric_mean(templates):
    backend = MockBackend(replies=["2", "3", "4"])
    value = judge_metric(backend, templates[TemplateName.JUDGE_WI], "USER: hi", samples=3)
    assert value == pytest.approx(3.0)  # oracle: (2+3+4)/3


def test_judge_metric_constant(templates):
    assert judge_metric(MockBackend(default="4"), templates[TemplateName.JUDGE_WI], "t", 1) == 4.0


def test_judge_metric_unparseable_errors(templates):
    with pytest.raises(ScoreParseError):
        judge_metric(MockBackend(default="no score here"), templates[TemplateName.JUDGE_WI], "t", 2)


def test_parse_score_first_in_range():
    assert parse_score("I rate this 4 out of 5") == 4.0
    assert parse_score("Score: 3.5") == 3.5
    assert parse_score("10 out of 10, call it 5") == 5.0  # 10 skipped, 5 in range
    assert parse_score("none") is None
    assert parse_score("0.5 then nothing") is None


@given(
    st.integers(1, 5),
    st.sampled_from(["{n}", "Score: {n}.", "I give it {n}/5", "rating\n{n}\n", "({n})", "final: {n} pts"]),
)
@settings(max_examples=120, deadline=None)
def test_parse_score_shapes(n, shape):
    assert parse_score(shape.format(n=n)) == float(n)


@given(st.text(alphabet=st.characters(blacklist_categories=("Nd",)), max_size=80))
@settings(max_examples=120, deadline=None)
def test_parse_score_rejects_numberless(text):
    assert parse_score(text) is None


# ---------------------------------------------------------------------------
# remote backend
# ---------------------------------------------------------------------------


class FlakyHandler(BaseHTTPRequestHandler):
    failures_left = 0
    seen = 0

    def do_POST(self):
        type(self).seen += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if type(self).failures_left > 0:
            type(self).failures_left -= 1
            self.send_response(500)
            self.end_headers()
            return
        reply = {"choices": [{"message": {"content": f"echo:{body['messages'][0]['content']}"}}]}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def flaky_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), FlakyHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    FlakyHandler.seen = 0
    yield f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
    server.shutdown()


def test_remote_recovers_within_retry_budget(flaky_server):
    FlakyHandler.failures_left = 2
    backend = RemoteBackend(endpoint=flaky_server, model="m", max_retries=2, retry_backoff=0.0)
    assert backend.complete("hello") == "echo:hello"
    assert FlakyHandler.seen == 3


def test_remote_exhausts_retries(flaky_server):
    FlakyHandler.failures_left = 10**6
    backend = RemoteBackend(endpoint=flaky_server, model="m", max_retries=2, retry_backoff=0.0)
    with pytest.raises(ExpertUnavailableError):
        backend.complete("hello")
    assert FlakyHandler.seen == 3  # exactly retries + 1 attempts


def test_remote_auth_env_missing():
    backend = RemoteBackend(endpoint="http://127.0.0.1:9/x", model="m", auth_env="STRATREC_NO_SUCH_TOKEN")
    with pytest.raises(ExpertUnavailableError):
        backend.complete("hi")


def test_remote_validation():
    with pytest.raises(ValueError):
        RemoteBackend(endpoint="http://x", model="m", timeout=0)
    with pytest.raises(ValueError):
        RemoteBackend(endpoint="http://x", model="m", protocol="smoke-signals")
