import hashlib
import json

import httpx
import pytest

from cohortrag.errors import ConfigError, GenerationUnavailable, ProtocolError
from cohortrag.generation import (
    GenerationClient,
    GenerationConfig,
    copy_first_profile_tag,
    echo_prompt_hash,
    fixed_text,
)


def make_client(handler, **kwargs) -> GenerationClient:
    config = GenerationConfig(
        endpoint_url="http://mock/generate", backoff_base=0.0, **kwargs
    )
    return GenerationClient(config, transport=httpx.MockTransport(handler))


def test_wire_contract_and_echo():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        seen.update(body)
        return httpx.Response(200, json={"text": body["prompt"][::-1]})

    client = make_client(handler, max_output_tokens=64, beam_size=4)
    assert client.generate("hello") == "olleh"
    assert seen == {"prompt": "hello", "max_output_tokens": 64, "beam_size": 4}


def test_retry_then_success_after_two_500s():
    attempts = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        attempts["n"] += 1
        if attempts["n"] <= 2:
            return httpx.Response(500, text="boom")
        return httpx.Response(200, json={"text": "ok"})

    client = make_client(handler, max_retries=3)
    assert client.generate("x") == "ok"
    assert attempts["n"] == 3


def test_unreachable_raises_after_max_retries():
    attempts = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        attempts["n"] += 1
        raise httpx.ConnectError("no route to host")

    client = make_client(handler, max_retries=3)
    with pytest.raises(GenerationUnavailable, match="3 attempts"):
        client.generate("x")
    assert attempts["n"] == 3


def test_malformed_response_is_protocol_error():
    client = make_client(lambda request: httpx.Response(200, json={"nope": 1}))
    with pytest.raises(ProtocolError, match="text"):
        client.generate("x")


def test_non_json_response_is_protocol_error():
    client = make_client(lambda request: httpx.Response(200, text="<html>"))
    with pytest.raises(ProtocolError):
        client.generate("x")


def test_4xx_is_protocol_error_without_retry():
    attempts = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        attempts["n"] += 1
        return httpx.Response(400, json={"error": "bad"})

    client = make_client(handler)
    with pytest.raises(ProtocolError):
        client.generate("x")
    assert attempts["n"] == 1


def test_missing_endpoint_is_config_error():
    with pytest.raises(ConfigError):
        GenerationClient(GenerationConfig(endpoint_url=""))


def test_generate_many_preserves_order():
    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        return httpx.Response(200, json={"text": body["prompt"].upper()})

    client = make_client(handler, max_in_flight=4)
    prompts = [f"p{i}" for i in range(10)]
    assert client.generate_many(prompts) == [p.upper() for p in prompts]


# ── offline responders ──────────────────────────────────────────────

def test_echo_prompt_hash_is_deterministic():
    assert echo_prompt_hash("abc") == hashlib.sha256(b"abc").hexdigest()
    assert echo_prompt_hash("abc") == echo_prompt_hash("abc")


def test_fixed_text():
    assert fixed_text("anything") == "OK"


def test_copy_first_profile_tag_lamp2_style():
    prompt = (
        "Given the user previous movie tag pairs: The tag for the movie description: "
        "a grim tale of payback is violence, the tag for the movie description: "
        "laughing all day is comedy, which tag does the movie description: x relate to?"
    )
    assert copy_first_profile_tag(prompt) == "violence"


def test_copy_first_profile_tag_no_match():
    assert copy_first_profile_tag("nothing here") == ""


def test_copy_first_profile_tag_stops_at_question_mark():
    assert copy_first_profile_tag("this is fine? trailing") == "fine"
