"""Thin client for the analysis service.

By default the client instantiates the service in-process over an ASGI
transport, so CLI runs need no server and stay pure functions of their
inputs; pass a base URL to talk to a remote instance instead.
"""

from typing import Any

import httpx


class ServiceError(RuntimeError):
    """Non-2xx response from the analysis service."""

    def __init__(self, status_code: int, detail: Any):
        super().__init__(f"service returned {status_code}: {detail}")
        self.status_code = status_code
        self.detail = detail


class ServiceClient:
    """POST/GET wrapper that raises ServiceError on failures."""

    def __init__(self, base_url: str | None = None, timeout: float = 3600.0):
        if base_url:
            self._client = httpx.Client(base_url=base_url, timeout=timeout)
        else:
            # in-process: the CLI default; imports deferred so remote-only
            # callers never pay for the service dependencies
            import warnings

            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", module="starlette.*")
                warnings.filterwarnings("ignore", message=".*httpx.*")
                from starlette.testclient import TestClient

                from .service import app

                self._client = TestClient(app, raise_server_exceptions=True)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _check(self, response) -> dict:
        if response.status_code >= 300:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise ServiceError(response.status_code, detail)
        return response.json()

    def get(self, path: str) -> dict:
        return self._check(self._client.get(path))

    def post(self, path: str, payload: dict) -> dict:
        return self._check(self._client.post(path, json=payload))
