"""Minimal chat-completion client used by the remote planners."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import requests

logger = logging.getLogger(__name__)

API_KEY_ENV = "PLANNER_API_KEY"


class PlannerConfigError(RuntimeError):
    pass


class PlannerTransportError(RuntimeError):
    pass


class PlannerServiceError(RuntimeError):
    def __init__(self, status: int, body: str):
        super().__init__(f"planner endpoint returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body[:500]


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str = "gpt-4.1"
    timeout_s: float = 30.0
    max_transport_retries: int = 2
    temperature: float = 0.0
    backoff_base_s: float = 0.5
    api_key_env: str = API_KEY_ENV


class ChatCompletionClient:
    """POSTs ``{model, messages, temperature}`` and returns ``choices[0].message.content``.

    Connection failures, timeouts, 429 and 5xx responses are retried with
    exponential backoff, at most ``max_transport_retries`` times. Slept
    intervals are appended to ``backoffs``.
    """

    def __init__(self, config: EndpointConfig, session=None, sleep=time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self.sleep = sleep
        self.backoffs: list[float] = []
        self.requests_made = 0

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise PlannerConfigError(f"environment variable {self.config.api_key_env} is not set")
        return key

    def complete(self, messages: list[dict]) -> str:
        if not self.config.url:
            raise PlannerConfigError("planner.url is not configured")
        headers = {"Authorization": f"Bearer {self._api_key()}", "Content-Type": "application/json"}
        body = {"model": self.config.model, "messages": messages, "temperature": self.config.temperature}

        last_error: Exception | None = None
        for attempt in range(self.config.max_transport_retries + 1):
            if attempt:
                delay = self.config.backoff_base_s * 2 ** (attempt - 1)
                self.backoffs.append(delay)
                self.sleep(delay)
            self.requests_made += 1
            try:
                resp = self.session.post(self.config.url, json=body, headers=headers, timeout=self.config.timeout_s)
            except (requests.ConnectionError, requests.Timeout) as exc:
                logger.warning("planner request failed (attempt %d): %s", attempt + 1, exc)
                last_error = PlannerTransportError(str(exc))
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                logger.warning("planner endpoint returned %d (attempt %d)", resp.status_code, attempt + 1)
                last_error = PlannerServiceError(resp.status_code, resp.text)
                continue
            if resp.status_code >= 400:
                raise PlannerServiceError(resp.status_code, resp.text)
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise PlannerServiceError(resp.status_code, resp.text) from None
        raise last_error
