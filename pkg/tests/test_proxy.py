"""Proxy pipeline: transparency, header rules, faults, HTTP interception."""

from __future__ import annotations

import asyncio
import hashlib
import random

import pytest

from rtcwrench.catalog import default_catalog
from rtcwrench.clock import VirtualClock
from rtcwrench.controls import ControlsBus
from rtcwrench.engine import CategoryId, Engine, EngineSettings, TransformSpec
from rtcwrench.errors import InvalidValue, UnknownSession, UpstreamTimeout
from rtcwrench.proxy import (DelaySpec, FakeResponseRule, FaultPolicy, HeaderRule,
                             HttpRequest, HttpResponse, SignalProxy, UrlRewrite,
                             apply_header_rules)
from rtcwrench.transports import MemoryLink, WsProxyListener


def make_proxy(seed=1, policy=None, rules=None, clock=None, capacity=10_000):
    engine = Engine(default_catalog(), ControlsBus(), EngineSettings(seed=seed))
    return SignalProxy(engine, clock=clock or VirtualClock(),
                       fault_policy=policy, header_rules=rules,
                       record_capacity=capacity)


def fuzz_trace(n=200, seed=3):
    rng = random.Random(seed)
    trace = []
    for _ in range(n):
        direction = rng.choice(["c2s", "s2c"])
        if rng.random() < 0.5:
            payload = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 64)))
        else:
            payload = "".join(rng.choice("abcdefghijklmnop {}:,\"") for _ in range(rng.randint(1, 64)))
        trace.append((direction, payload))
    return trace


def checksums(messages):
    digest = hashlib.sha256()
    for m in messages:
        digest.update(m if isinstance(m, bytes) else m.encode())
    return digest.hexdigest()


# -- transparency ---------------------------------------------------------------

def test_transparent_passthrough_checksum_equal():
    proxy = make_proxy()
    link = MemoryLink(proxy)
    trace = fuzz_trace(300)
    for direction, payload in trace:
        link.send(direction, payload)
    direct_c2s = [p for d, p in trace if d == "c2s"]
    direct_s2c = [p for d, p in trace if d == "s2c"]
    assert checksums(link.to_upstream) == checksums(direct_c2s)
    assert checksums(link.to_client) == checksums(direct_s2c)
    session = link.session
    assert session.counters["msgs_c2s"] == len(direct_c2s)
    assert session.counters["modified_count"] == 0


def test_counter_coherence_forwarded_plus_dropped():
    proxy = make_proxy(policy=FaultPolicy(drop_prob=0.5))
    link = MemoryLink(proxy)
    for direction, payload in fuzz_trace(400):
        link.send(direction, payload)
    c = link.session.counters
    assert c["msgs_c2s"] == c["forwarded_c2s"] + c["dropped_c2s"]
    assert c["msgs_s2c"] == c["forwarded_s2c"] + c["dropped_s2c"]
    assert 0 < c["dropped_c2s"] + c["dropped_s2c"] < 400


# -- socket transforms -------------------------------------------------------------

def test_url_rewrite_transform_changes_upstream():
    proxy = make_proxy()
    proxy.engine.install_transform(CategoryId.SOCKET, TransformSpec(
        CategoryId.SOCKET, "rewrite_url",
        params={"match": "upstream.test", "replacement": "lab.example"}))
    link = MemoryLink(proxy, upstream_url="ws://upstream.test/sig")
    assert link.session.upstream_url == "ws://lab.example/sig"


def test_fault_policy_url_rewrite():
    proxy = make_proxy(policy=FaultPolicy(
        url_rewrite=UrlRewrite(r"^ws://upstream\.test", "ws://shadow.test")))
    link = MemoryLink(proxy, upstream_url="ws://upstream.test/sig")
    assert link.session.upstream_url == "ws://shadow.test/sig"


def test_consume_and_reply_upstream_never_sees():
    proxy = make_proxy()
    proxy.engine.install_transform(CategoryId.SOCKET, TransformSpec(
        CategoryId.SOCKET, "consume_and_reply",
        params={"match": "\"join\"", "reply": "{\"type\":\"joined\",\"fake\":true}"}))
    link = MemoryLink(proxy)
    link.client_send('{"type":"join","room":"a"}')
    link.client_send('{"type":"offer"}')
    assert link.to_upstream == ['{"type":"offer"}']
    assert link.to_client == ['{"type":"joined","fake":true}']
    records, _ = proxy.export_sequence(link.session.id)
    consumed = [r for r in records if r.note == "consumed"]
    assert len(consumed) == 1 and consumed[0].dropped


def test_transform_failure_forwards_original():
    proxy = make_proxy()
    from rtcwrench.catalog import CatalogEntry
    proxy.engine.catalog.register(CatalogEntry(
        CategoryId.SOCKET, "explode", lambda call: 1 / 0, "test"))
    proxy.engine.install_transform(CategoryId.SOCKET,
                                   TransformSpec(CategoryId.SOCKET, "explode"))
    link = MemoryLink(proxy)
    link.client_send("hello")
    assert link.to_upstream == ["hello"]


# -- header rules ------------------------------------------------------------------

def test_apply_header_rules_semantics():
    headers = [("Content-Security-Policy", "default-src 'self'"),
               ("X-Frame-Options", "DENY"), ("content-security-policy", "img-src *")]
    rules = [HeaderRule("response", "remove", "content-security-policy"),
             HeaderRule("response", "set", "X-Frame-Options", "ALLOWALL"),
             HeaderRule("response", "append", "X-Proxied", "1")]
    out = apply_header_rules(headers, rules, "response")
    names = [k.lower() for k, _ in out]
    assert "content-security-policy" not in names
    assert ("X-Frame-Options", "ALLOWALL") in out
    assert ("X-Proxied", "1") in out


def test_header_rules_empty_identity():
    headers = [("A", "1"), ("B", "2")]
    assert apply_header_rules(headers, []) == headers


def test_header_rule_validation():
    with pytest.raises(InvalidValue):
        HeaderRule("response", "remove", "x", "boom").validate()
    with pytest.raises(InvalidValue):
        HeaderRule("response", "set", "x").validate()
    with pytest.raises(InvalidValue):
        HeaderRule("sideways", "set", "x", "1").validate()


# -- fault policy -----------------------------------------------------------------

def test_drop_pattern_seed_deterministic():
    def run():
        proxy = make_proxy(seed=99, policy=FaultPolicy(drop_prob=0.5))
        link = MemoryLink(proxy)
        pattern = []
        for i in range(1000):
            before = link.session.counters["dropped_c2s"]
            link.client_send(f"m{i}")
            pattern.append(link.session.counters["dropped_c2s"] > before)
        return pattern

    one, two = run(), run()
    assert one == two
    assert 300 < sum(one) < 700


def test_drop_prob_one_drops_everything():
    proxy = make_proxy(policy=FaultPolicy(drop_prob=1.0))
    link = MemoryLink(proxy)
    for i in range(50):
        link.client_send(f"m{i}")
    assert link.to_upstream == []
    records, _ = proxy.export_sequence(link.session.id)
    assert all(r.dropped for r in records)


def test_fixed_delay_schedules_forward_time():
    clock = VirtualClock()
    proxy = make_proxy(policy=FaultPolicy(delay=DelaySpec(fixed_ms=500)), clock=clock)
    link = MemoryLink(proxy)
    effects = proxy.on_message(link.session, "c2s", "hello")
    assert len(effects) == 1
    assert effects[0].at_ms == pytest.approx(clock.now_ms() + 500)


def test_delays_never_reorder_within_direction():
    clock = VirtualClock()
    proxy = make_proxy(seed=5, policy=FaultPolicy(
        delay=DelaySpec(uniform_ms=(0, 400))), clock=clock)
    link = MemoryLink(proxy)
    times = []
    for i in range(100):
        clock.advance(10)
        effects = proxy.on_message(link.session, "c2s", f"m{i}")
        times.extend(e.at_ms for e in effects)
    assert times == sorted(times)


def test_close_after_deadline_closes_link():
    clock = VirtualClock()
    proxy = make_proxy(policy=FaultPolicy(close_after_ms=300), clock=clock)
    link = MemoryLink(proxy)
    link.client_send("before")
    clock.advance(301)
    link.client_send("after")
    assert link.to_upstream == ["before"]
    assert link.closed and link.session.closed


@pytest.mark.anyio
async def test_wall_clock_delay_within_contract():
    from rtcwrench.clock import WallClock
    proxy = make_proxy(policy=FaultPolicy(delay=DelaySpec(fixed_ms=120)),
                       clock=WallClock())
    link = MemoryLink(proxy)
    for i in range(3):
        sent_at = proxy.clock.now_ms()
        delivered = await link.send_async("c2s", f"m{i}")
        assert len(delivered) == 1
        latency = delivered[0][2] - sent_at
        assert 120 <= latency < 220


# -- export_sequence ---------------------------------------------------------------

def test_export_sequence_order_and_eviction():
    clock = VirtualClock()
    proxy = make_proxy(clock=clock, capacity=2)
    link = MemoryLink(proxy)
    for i in range(3):
        clock.advance(10)
        link.client_send(f"m{i}")
    records, evicted = proxy.export_sequence(link.session.id)
    assert len(records) == 2
    assert evicted == 1
    assert [r.seq for r in records] == sorted(r.seq for r in records)
    assert records[0].t_ms <= records[1].t_ms


def test_export_sequence_unknown_session():
    proxy = make_proxy()
    with pytest.raises(UnknownSession):
        proxy.export_sequence("nope")


# -- HTTP exchanges -----------------------------------------------------------------

def echo_upstream(request: HttpRequest) -> HttpResponse:
    return HttpResponse(200, [("content-type", "text/plain"), ("server", "échotest")],
                        b"echo:" + request.body)


def test_http_bitwise_passthrough():
    proxy = make_proxy()
    request = HttpRequest("POST", "http://api.test/v1/thing",
                          [("content-type", "application/json")], b'{"a":1}')
    result = proxy.proxy_http_exchange(request, echo_upstream)
    assert result.response.status == 200
    assert result.response.body == b'echo:{"a":1}'
    assert ("content-type", "text/plain") in result.response.headers


def test_http_correlation_state_shared():
    proxy = make_proxy()
    proxy.engine.install_transform(CategoryId.REQUEST, TransformSpec(
        CategoryId.REQUEST, "correlate", params={"header": "x-cid"}))
    captured = {}

    def upstream(request):
        captured["request_cid"] = dict(request.headers).get("x-cid")
        return HttpResponse(200, [], b"ok")

    result = proxy.proxy_http_exchange(
        HttpRequest("GET", "http://api.test/x", [], b""), upstream)
    response_cid = dict(result.response.headers).get("x-cid")
    assert captured["request_cid"] is not None
    assert response_cid == captured["request_cid"]


def test_http_fake_response_skips_upstream():
    proxy = make_proxy(policy=FaultPolicy(fake_response_rules=[
        FakeResponseRule(match="*/v1/flaky*", status=503, body="nope")]))
    hits = []

    def upstream(request):
        hits.append(request.url)
        return HttpResponse(200, [], b"real")

    result = proxy.proxy_http_exchange(
        HttpRequest("GET", "http://api.test/v1/flaky?x=1", [], b""), upstream)
    assert result.response.status == 503
    assert result.response.body == b"nope"
    assert hits == []
    passthru = proxy.proxy_http_exchange(
        HttpRequest("GET", "http://api.test/v1/solid", [], b""), upstream)
    assert passthru.response.body == b"real"


def test_http_short_circuit_via_transform():
    proxy = make_proxy()
    proxy.engine.install_transform(CategoryId.REQUEST, TransformSpec(
        CategoryId.REQUEST, "fake_response",
        params={"match": "*login*", "status": 200, "body": "{\"token\":\"fake\"}"}))
    hits = []
    result = proxy.proxy_http_exchange(
        HttpRequest("POST", "http://api.test/login", [], b""),
        lambda r: hits.append(r) or HttpResponse(200, [], b"real"))
    assert result.response.body == b'{"token":"fake"}'
    assert hits == []


def test_http_upstream_timeout_synthesizes_504():
    proxy = make_proxy()

    def upstream(request):
        raise UpstreamTimeout("slow")

    result = proxy.proxy_http_exchange(HttpRequest("GET", "http://api.test/x", [], b""),
                                       upstream)
    assert result.response.status == 504


def test_http_security_category_and_header_rules():
    proxy = make_proxy(rules=[HeaderRule("response", "append", "x-note", "proxied")])
    proxy.engine.install_transform(CategoryId.SECURITY, TransformSpec(
        CategoryId.SECURITY, "remove_header", params={"name": "content-security-policy"}))

    def upstream(request):
        return HttpResponse(200, [("Content-Security-Policy", "default-src 'none'"),
                                  ("x-keep", "1")], b"ok")

    result = proxy.proxy_http_exchange(HttpRequest("GET", "http://x/", [], b""), upstream)
    names = [k.lower() for k, _ in result.response.headers]
    assert "content-security-policy" not in names
    assert ("x-note", "proxied") in result.response.headers
    assert ("x-keep", "1") in result.response.headers


# -- live websocket listener ----------------------------------------------------------

@pytest.mark.anyio
async def test_live_ws_listener_end_to_end():
    import websockets

    received_upstream = []

    async def upstream_handler(ws):
        async for message in ws:
            received_upstream.append(message)
            await ws.send(f"ack:{message}")

    upstream_server = await websockets.serve(upstream_handler, "127.0.0.1", 0)
    upstream_port = upstream_server.sockets[0].getsockname()[1]

    from rtcwrench.clock import WallClock
    proxy = make_proxy(clock=WallClock())
    listener = WsProxyListener(proxy, "127.0.0.1", 0,
                               f"ws://127.0.0.1:{upstream_port}/")
    await listener.start()
    try:
        async with websockets.connect(f"ws://127.0.0.1:{listener.bound_port}/") as client:
            await client.send("hello")
            reply = await asyncio.wait_for(client.recv(), timeout=5)
            assert reply == "ack:hello"
            await client.send("again")
            assert await asyncio.wait_for(client.recv(), timeout=5) == "ack:again"
    finally:
        await listener.stop()
        upstream_server.close()
        await upstream_server.wait_closed()

    assert received_upstream == ["hello", "again"]
    sessions = proxy.sessions()
    assert len(sessions) == 1
    assert sessions[0].counters["msgs_c2s"] == 2
    assert sessions[0].counters["msgs_s2c"] == 2


@pytest.mark.anyio
async def test_live_ws_listener_upstream_connect_failed_close_code():
    import websockets
    from rtcwrench.clock import WallClock
    from rtcwrench.transports import UPSTREAM_CONNECT_FAILED_CLOSE_CODE

    proxy = make_proxy(clock=WallClock())
    listener = WsProxyListener(proxy, "127.0.0.1", 0, "ws://127.0.0.1:1/nowhere")
    await listener.start()
    try:
        async with websockets.connect(f"ws://127.0.0.1:{listener.bound_port}/") as client:
            with pytest.raises(websockets.exceptions.ConnectionClosed) as err:
                await asyncio.wait_for(client.recv(), timeout=5)
        assert err.value.rcvd is not None
        assert err.value.rcvd.code == UPSTREAM_CONNECT_FAILED_CLOSE_CODE
    finally:
        await listener.stop()
