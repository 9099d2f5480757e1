"""Transport adapters that execute the proxy pipeline's effects.

``MemoryLink`` drives the pipeline without sockets (tests, harness signaling):
effects run with real sleeps on the wall clock so fault-delay measurements
are honest. ``WsProxyListener`` is the live adapter: it terminates client
WebSocket connections, dials the (possibly rewritten) upstream, and pumps
frames through the same pipeline with per-direction FIFO sender queues.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Callable, Optional

from .proxy import Close, Effect, Forward, Reply, SignalProxy

log = logging.getLogger(__name__)

UPSTREAM_CONNECT_FAILED_CLOSE_CODE = 4502  # distinct application close code


class MemoryLink:
    """In-memory client<->upstream pair around one proxy session."""

    def __init__(self, proxy: SignalProxy, upstream_url: str = "ws://upstream.test/sig",
                 client_endpoint: str = "mem-client"):
        self.proxy = proxy
        self.session, open_effects = proxy.open_ws_session(client_endpoint, upstream_url)
        self.to_upstream: list = []   # payloads delivered upstream (c2s)
        self.to_client: list = []     # payloads delivered to the client (s2c)
        self.closed = False
        self._close_at = next((e.at_ms for e in open_effects if isinstance(e, Close)), None)

    # -- synchronous execution (virtual clock / no-delay paths) --------------

    def send(self, direction: str, payload) -> None:
        self._check_deadline()
        if self.closed:
            return
        for effect in self.proxy.on_message(self.session, direction, payload):
            self._apply(effect)

    def client_send(self, payload) -> None:
        self.send("c2s", payload)

    def upstream_send(self, payload) -> None:
        self.send("s2c", payload)

    def _apply(self, effect: Effect) -> None:
        if isinstance(effect, (Forward, Reply)):
            (self.to_upstream if effect.direction == "c2s" else self.to_client).append(effect.payload)
        elif isinstance(effect, Close):
            self.closed = True
            self.proxy.close_session(self.session)

    def _check_deadline(self) -> None:
        if self._close_at is not None and not self.closed \
                and self.proxy.clock.now_ms() >= self._close_at:
            self.closed = True
            self.proxy.close_session(self.session)

    # -- asynchronous execution (wall clock, honors effect times) -------------

    async def send_async(self, direction: str, payload,
                         deliver: Optional[Callable] = None) -> list:
        """Run one message through the pipeline and execute its effects with
        real sleeps; returns [(direction, payload, delivered_at_ms), ...]."""
        self._check_deadline()
        if self.closed:
            return []
        delivered = []
        for effect in self.proxy.on_message(self.session, direction, payload):
            if isinstance(effect, (Forward, Reply)):
                wait_ms = effect.at_ms - self.proxy.clock.now_ms()
                if wait_ms > 0:
                    await asyncio.sleep(wait_ms / 1000.0)
                self._apply(effect)
                record = (effect.direction, effect.payload, self.proxy.clock.now_ms())
                delivered.append(record)
                if deliver:
                    deliver(*record)
            else:
                self._apply(effect)
        return delivered

    async def watch_close(self) -> float:
        """Wait for the fault-policy close deadline; returns the close time."""
        if self._close_at is None:
            raise ValueError("no close_after_ms in the fault policy")
        wait_ms = self._close_at - self.proxy.clock.now_ms()
        if wait_ms > 0:
            await asyncio.sleep(wait_ms / 1000.0)
        self.closed = True
        self.proxy.close_session(self.session)
        return self.proxy.clock.now_ms()


class WsProxyListener:
    """Live WebSocket MITM built on the ``websockets`` package."""

    def __init__(self, proxy: SignalProxy, host: str, port: int, upstream_url: str,
                 ssl_context=None):
        self.proxy = proxy
        self.host = host
        self.port = port
        self.upstream_url = upstream_url
        self.ssl_context = ssl_context
        self._server = None

    async def start(self) -> None:
        import websockets
        self._server = await websockets.serve(self._handle, self.host, self.port,
                                              ssl=self.ssl_context)
        log.info("ws proxy listening on %s:%s -> %s", self.host, self.port,
                 self.upstream_url)

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    @property
    def bound_port(self) -> int:
        return self._server.sockets[0].getsockname()[1]

    async def _handle(self, client_ws) -> None:
        import websockets

        remote = getattr(client_ws, "remote_address", None)
        endpoint = f"{remote[0]}:{remote[1]}" if remote else "unknown"
        session, open_effects = self.proxy.open_ws_session(endpoint, self.upstream_url)

        try:
            upstream_ws = await websockets.connect(session.upstream_url)
        except Exception as exc:
            log.warning("upstream connect failed for %s: %s", session.id, exc)
            await client_ws.close(code=UPSTREAM_CONNECT_FAILED_CLOSE_CODE,
                                  reason="upstream connect failed")
            self.proxy.close_session(session, "upstream connect failed")
            return

        queues = {"c2s": asyncio.Queue(), "s2c": asyncio.Queue()}
        targets = {"c2s": upstream_ws, "s2c": client_ws}
        stop = asyncio.Event()

        async def sender(direction: str) -> None:
            queue, ws = queues[direction], targets[direction]
            while True:
                effect = await queue.get()
                if effect is None:
                    return
                wait_ms = effect.at_ms - self.proxy.clock.now_ms()
                if wait_ms > 0:
                    await asyncio.sleep(wait_ms / 1000.0)
                try:
                    await ws.send(effect.payload)
                except Exception:
                    stop.set()
                    return

        async def reader(direction: str, source) -> None:
            try:
                async for message in source:
                    for effect in self.proxy.on_message(session, direction, message):
                        if isinstance(effect, Close):
                            stop.set()
                        else:
                            await queues[effect.direction].put(effect)
            except Exception:
                pass
            finally:
                stop.set()

        async def deadline() -> None:
            close_at = next((e.at_ms for e in open_effects if isinstance(e, Close)), None)
            if close_at is None:
                await stop.wait()
                return
            wait_ms = close_at - self.proxy.clock.now_ms()
            try:
                await asyncio.wait_for(stop.wait(), timeout=max(0.0, wait_ms) / 1000.0)
            except asyncio.TimeoutError:
                stop.set()

        tasks = [asyncio.create_task(coro) for coro in (
            sender("c2s"), sender("s2c"),
            reader("c2s", client_ws), reader("s2c", upstream_ws), deadline())]
        await stop.wait()
        for queue in queues.values():
            queue.put_nowait(None)
        for ws in (client_ws, upstream_ws):
            try:
                await ws.close()
            except Exception:
                pass
        for task in tasks:
            task.cancel()
        await asyncio.gather(*tasks, return_exceptions=True)
        self.proxy.close_session(session)
