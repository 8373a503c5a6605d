"""Client for the external text-generation endpoint, plus offline stand-ins.

Wire contract (JSON over HTTP): request ``{"prompt": str,
"max_output_tokens": int, "beam_size": int}``, response ``{"text": str}``.
Any server honoring this contract is compatible; the offline responders
below implement the same behaviors in-process so the whole evaluation
pipeline runs with zero network traffic.
"""

from __future__ import annotations

import hashlib
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import httpx

from .errors import ConfigError, GenerationUnavailable, ProtocolError


@dataclass
class GenerationConfig:
    endpoint_url: str = ""
    timeout: float = 10.0
    max_retries: int = 3
    max_output_tokens: int = 128
    beam_size: int = 4
    backoff_base: float = 0.2
    max_in_flight: int = 4


class GenerationClient:
    """POSTs prompts to the endpoint with retry + exponential backoff."""

    def __init__(self, config: GenerationConfig, transport: httpx.BaseTransport | None = None):
        if not config.endpoint_url:
            raise ConfigError("generation endpoint_url is not configured")
        self.config = config
        self._client = httpx.Client(
            timeout=config.timeout, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def generate(self, prompt: str) -> str:
        payload = {
            "prompt": prompt,
            "max_output_tokens": self.config.max_output_tokens,
            "beam_size": self.config.beam_size,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries):
            if attempt:
                time.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post(self.config.endpoint_url, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = ProtocolError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise ProtocolError(
                    f"endpoint rejected the request with status {response.status_code}"
                )
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolError(f"endpoint returned non-JSON body: {exc}") from exc
            if not isinstance(body, dict) or not isinstance(body.get("text"), str):
                raise ProtocolError("endpoint response is missing a string 'text' field")
            return body["text"]
        raise GenerationUnavailable(
            f"endpoint {self.config.endpoint_url} unavailable after "
            f"{self.config.max_retries} attempts: {last_error}"
        )

    def generate_many(self, prompts: list[str]) -> list[str]:
        workers = max(1, self.config.max_in_flight)
        if workers == 1 or len(prompts) <= 1:
            return [self.generate(p) for p in prompts]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self.generate, prompts))


# ── offline responders ──────────────────────────────────────────────
#
# "is <tag>" extraction: first occurrence of the word "is" followed by a
# span that runs up to the next comma or question mark. Profile items
# place each document's tag exactly there, so on tag-task prompts this
# returns the first included document's tag. The mock HTTP server ships
# the same rule; keep the two in sync.
FIRST_TAG_RE = re.compile(r"\bis ([^,?]+)")


def echo_prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def copy_first_profile_tag(prompt: str) -> str:
    match = FIRST_TAG_RE.search(prompt)
    if match is None:
        return ""
    return match.group(1).strip()


def fixed_text(prompt: str) -> str:
    return "OK"


OFFLINE_RESPONDERS = {
    "echo_prompt_hash": echo_prompt_hash,
    "copy_first_profile_tag": copy_first_profile_tag,
    "fixed_text": fixed_text,
}
