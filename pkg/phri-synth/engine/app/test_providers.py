"""
Tests for scenario providers:
- Fixture replay keyed by prompt hash
- Procedural sampling
- Structured response parsing
- Remote endpoint retries over a mock transport
"""

import json

import httpx
import pytest

from app.errors import AuthFailure, FixtureMiss, MalformedResponse, ProviderTimeout, ProviderUnreachable
from app.providers import (
    extract_body_parts,
    fixture_file,
    generate_scenario,
    http_chat_call,
    parse_structured_response,
    procedural_scenario,
    serialize_scenario,
)
from app.schemas import PART_LABELS, ProviderConfig
from app.seeding import fnv1a64
from app.settings import ASSETS_DIR

SCENARIO = {
    "human_description": "An adult sitting on a chair.",
    "environment_description": "A living room with a chair.",
    "task_description": "Scratch the left forearm.",
    "posture": "sitting",
    "room_type": "living_room",
    "required_furniture": ["chair"],
    "relevant_body_parts": ["left_forearm"],
}


def _completion(content: str) -> dict:
    return {
        "id": "chatcmpl-test",
        "object": "chat.completion",
        "created": 0,
        "model": "test-model",
        "choices": [
            {"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}
        ],
    }


def _fenced(data: dict) -> str:
    return "Here you go.\n```json\n" + json.dumps(data) + "\n```\n"


@pytest.fixture
def http_config(monkeypatch):
    monkeypatch.setenv("PHRI_TEST_KEY", "sk-test")
    return ProviderConfig(
        kind="http",
        endpoint_url="http://provider.test/v1",
        model_name="test-model",
        api_key_env_var="PHRI_TEST_KEY",
        max_retries=2,
        timeout=5.0,
        backoff_base=0.5,
    )


def _client(handler) -> httpx.Client:
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_fnv_matches_reference_values():
    assert f"{fnv1a64(''):016x}" == "cbf29ce484222325"
    assert f"{fnv1a64('a'):016x}" == "af63dc4c8601ec8c"


def test_fixture_replay_returns_bundled_spec():
    config = ProviderConfig(kind="fixture", fixture_path=str(ASSETS_DIR / "scenarios"))
    prompt = "scratch someone's back"
    spec = generate_scenario(prompt, config, seed=99)
    bundled = parse_structured_response(fixture_file(config, prompt).read_text(encoding="utf-8"))
    assert spec == bundled
    assert spec.posture == "sitting"
    assert spec.relevant_body_parts == ["torso"]


def test_fixture_miss(tmp_path):
    config = ProviderConfig(kind="fixture", fixture_path=str(tmp_path))
    with pytest.raises(FixtureMiss):
        generate_scenario("an unknown prompt", config)


def test_fixture_config_requires_existing_directory(tmp_path):
    with pytest.raises(ValueError):
        ProviderConfig(kind="fixture", fixture_path=str(tmp_path / "missing"))


def test_procedural_is_pure_in_prompt_and_seed():
    prompt = "scratching a spot itch somewhere on a person's left forearm"
    first = procedural_scenario(prompt, 7)
    assert procedural_scenario(prompt, 7) == first
    assert first.seed == 7
    assert first.relevant_body_parts == ["left_forearm"]
    assert all(part in PART_LABELS for part in first.relevant_body_parts)


def test_procedural_respects_explicit_posture():
    for seed in range(10):
        spec = procedural_scenario("wash the arm of a person standing at the sink", seed)
        assert spec.posture == "standing"
        assert spec.required_furniture == []


def test_procedural_seated_specs_name_a_support():
    for seed in range(10):
        spec = procedural_scenario("scratch the back of a seated person", seed)
        assert spec.posture == "sitting"
        assert spec.required_furniture and spec.required_furniture[0] in ("chair", "couch", "stool")


def test_body_part_phrases_prefer_longest_match():
    assert extract_body_parts("bathe the left forearm") == ["left_forearm"]
    assert extract_body_parts("wipe the right arm") == ["right_upper_arm", "right_forearm"]
    assert extract_body_parts("scratch the back and the head") == ["torso", "head"]
    assert extract_body_parts("hold a cup") == []


def test_parse_accepts_bare_json_and_fenced_block():
    bare = parse_structured_response(json.dumps(SCENARIO))
    fenced = parse_structured_response(_fenced(SCENARIO))
    assert bare == fenced


def test_serialized_scenario_parses_back():
    spec = procedural_scenario("scratch the left forearm", 3)
    assert parse_structured_response(serialize_scenario(spec)) == spec


def test_parse_reports_field_and_offset():
    bad = dict(SCENARIO, posture="kneeling")
    raw = _fenced(bad)
    with pytest.raises(MalformedResponse) as info:
        parse_structured_response(raw)
    assert info.value.details["field"] == "posture"
    offset = info.value.details["offset"]
    assert raw.encode("utf-8")[offset:].startswith(b'"posture"')


def test_parse_rejects_unknown_part_label():
    with pytest.raises(MalformedResponse) as info:
        parse_structured_response(json.dumps(dict(SCENARIO, relevant_body_parts=["tail"])))
    assert info.value.details["field"] == "relevant_body_parts"


def test_parse_without_block_fails():
    with pytest.raises(MalformedResponse):
        parse_structured_response("I cannot help with that.")


def test_parse_invalid_json_reports_offset():
    raw = "```json\n{\"posture\": }\n```"
    with pytest.raises(MalformedResponse) as info:
        parse_structured_response(raw)
    assert 0 < info.value.details["offset"] <= len(raw.encode("utf-8"))


def test_http_scenario_over_mock_transport(http_config):
    seen = []

    def handler(request: httpx.Request) -> httpx.Response:
        seen.append(json.loads(request.content))
        return httpx.Response(200, json=_completion(_fenced(SCENARIO)))

    spec = generate_scenario(
        "scratch the left forearm of a person sitting down", http_config, seed=5, http_client=_client(handler)
    )
    assert spec.seed == 5
    assert spec.relevant_body_parts == ["left_forearm"]
    assert seen[0]["model"] == "test-model"
    assert seen[0]["messages"][0]["role"] == "system"


def test_http_retries_server_errors_with_backoff(http_config):
    calls = []
    delays = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        if len(calls) < 3:
            return httpx.Response(503, json={"error": {"message": "busy"}})
        return httpx.Response(200, json=_completion("ok"))

    text = http_chat_call(http_config, "system", "user", http_client=_client(handler), sleep=delays.append)
    assert text == "ok"
    assert len(calls) == 3
    assert delays == [0.5, 1.0]


def test_http_transport_failure_after_retries(http_config):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        raise httpx.ConnectError("connection refused", request=request)

    with pytest.raises(ProviderUnreachable):
        http_chat_call(http_config, "system", "user", http_client=_client(handler), sleep=lambda _: None)
    assert len(calls) == http_config.max_retries + 1


def test_http_timeout(http_config):
    def handler(request: httpx.Request) -> httpx.Response:
        raise httpx.ReadTimeout("too slow", request=request)

    with pytest.raises(ProviderTimeout):
        http_chat_call(http_config, "system", "user", http_client=_client(handler), sleep=lambda _: None)


def test_http_auth_failure_is_not_retried(http_config):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        return httpx.Response(401, json={"error": {"message": "bad key"}})

    with pytest.raises(AuthFailure):
        http_chat_call(http_config, "system", "user", http_client=_client(handler), sleep=lambda _: None)
    assert len(calls) == 1


def test_missing_api_key(http_config, monkeypatch):
    monkeypatch.delenv("PHRI_TEST_KEY")
    with pytest.raises(AuthFailure):
        http_chat_call(http_config, "system", "user")


def test_malformed_answers_are_requested_again_then_surface(http_config):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        return httpx.Response(200, json=_completion("no structure here"))

    with pytest.raises(MalformedResponse):
        generate_scenario("scratch the left forearm", http_config, http_client=_client(handler))
    assert len(calls) == http_config.max_retries + 1


def test_posture_contradicting_prompt_is_malformed(http_config):
    standing = dict(SCENARIO, posture="standing", required_furniture=[])

    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=_completion(_fenced(standing)))

    with pytest.raises(MalformedResponse) as info:
        generate_scenario("scratch a person sitting in a chair", http_config, http_client=_client(handler))
    assert info.value.details["field"] == "posture"
