from __future__ import annotations
from typing import ClassVar

import sys
import logging

import aiohttp
import requests

from .enums import CaseSource
from .errors import CaseFetchError

__all__: tuple[str, ...] = (
    "Route",
    "CaseHTTPClient",
    "AsyncCaseHTTPClient",
)

_log = logging.getLogger(__name__)


class Route:
    BASE_URL: ClassVar[str] = CaseSource.MATPOWER_DATA.value

    def __init__(self, method: str, path: str) -> None:
        self.path = path
        self.method = method
        if path.startswith(("http://", "https://")):
            self.url = path
        else:
            self.url = f"{self.BASE_URL}/{path.lstrip('/')}"


class _BaseCaseHTTPClient:
    _user_agent: str = (
        f"sparse-stealth 0.1.0 Python/{sys.version_info[0]}.{sys.version_info[1]} "
        f"requests/{requests.__version__}"
    )

    @property
    def headers(self) -> dict[str, str]:
        return {"User-Agent": self._user_agent}


class CaseHTTPClient(_BaseCaseHTTPClient):
    def __init__(self, *, timeout: float = 30.0) -> None:
        self.timeout = timeout

    def request(self, *, route: Route) -> str:
        _log.info("fetching case from %s", route.url)
        try:
            response = requests.request(method=route.method, url=route.url, headers=self.headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise CaseFetchError(0, route.url) from exc
        if not response.ok:
            raise CaseFetchError(response.status_code, route.url, response)
        return response.text

    def fetch_case_text(self, url: str) -> str:
        """Download the text of a MATPOWER case file.

        Raises
        ------
        CaseFetchError
            The request failed or returned a non 2xx status.
        """
        return self.request(route=Route("GET", url))


class AsyncCaseHTTPClient(_BaseCaseHTTPClient):
    def __init__(self, *, session: aiohttp.ClientSession | None = None) -> None:
        self._session = session
        self._owns_session = session is None

    @property
    def is_closed(self) -> bool:
        return self._session is None or self._session.closed

    async def request(self, *, route: Route) -> str:
        if self._session is None or self._session.closed:
            self._session = aiohttp.ClientSession(trust_env=True)
            self._owns_session = True
        _log.info("fetching case from %s", route.url)
        try:
            async with self._session.request(route.method, route.url, headers=self.headers) as resp:
                if resp.status >= 400:
                    raise CaseFetchError(resp.status, route.url, resp)
                return await resp.text()
        except aiohttp.ClientError as exc:
            raise CaseFetchError(0, route.url) from exc

    async def fetch_case_text(self, url: str) -> str:
        return await self.request(route=Route("GET", url))

    async def close(self) -> None:
        """Closes the aiohttp.ClientSession session if this client opened it."""
        if self._session is not None and self._owns_session:
            await self._session.close()
