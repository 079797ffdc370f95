"""
Async client for the piperate daemon
"""

from typing import Any, Dict, Optional

import httpx


class PiperateClient:
    """Client for communicating with the piperate daemon"""

    def __init__(
        self,
        base_url: str = "http://localhost:9876",
        timeout: float = 300.0,
        transport: Optional[httpx.AsyncBaseTransport] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._transport = transport

    def _client(self) -> httpx.AsyncClient:
        return httpx.AsyncClient(
            base_url=self.base_url, timeout=self.timeout, transport=self._transport
        )

    async def health_check(self) -> Dict[str, Any]:
        """Check if the daemon is healthy"""
        async with self._client() as client:
            response = await client.get("/health")
            response.raise_for_status()
            return response.json()

    async def validate(self, scenario: Dict[str, Any]) -> Dict[str, Any]:
        async with self._client() as client:
            response = await client.post("/validate", json={"scenario": scenario})
            response.raise_for_status()
            return response.json()

    async def run(
        self,
        scenario: Dict[str, Any],
        overrides: Optional[Dict[str, str]] = None,
        run_id: Optional[str] = None,
    ) -> Dict[str, Any]:
        """Submit a scenario and wait for the finished run"""
        payload: Dict[str, Any] = {"scenario": scenario, "overrides": overrides or {}}
        if run_id is not None:
            payload["run_id"] = run_id
        async with self._client() as client:
            response = await client.post("/runs", json=payload)
            response.raise_for_status()
            return response.json()

    async def compare(self, baseline: str, shaped: str) -> Dict[str, Any]:
        async with self._client() as client:
            response = await client.post(
                "/compare", json={"baseline": baseline, "shaped": shaped}
            )
            response.raise_for_status()
            return response.json()


def print_run_result(result: Dict[str, Any]) -> None:
    """Print a finished run in a short human-readable form"""
    print(f"✅ Run {result['run_id']} written to {result['run_dir']}")
    print(f"📈 {result['pipes']} pipes, {result['samples']} samples")
    for row in result.get("timeline", []):
        print(f"⏱️  {row['pipe']} ({row['container_id']}): T = {row['T']} s")
    for entry in result.get("never_controlled", []):
        print(f"⚠️  never controlled: {entry}")
    for cid in result.get("rejected", []):
        print(f"❌ rejected at admission: {cid}")
