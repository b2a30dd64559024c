"""Prompt construction, the mock chat backend, caching, and the remote client."""

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from drivestyle.errors import ConfigError, ResponseFormatError, TransportError
from drivestyle.semantics import (MockChatBackend, RemoteChatBackend,
                                  SemanticResult, batch_describe, build_prompt,
                                  describe, parse_response,
                                  read_semantic_results, write_semantic_results)

from synth import make_cf_segment, make_lc_segment

NUMBER = re.compile(r"-?\d+\.\d\d")


def test_prompt_structure_cf():
    seg = make_cf_segment(v=[30.0] * 10, a_lon=0.0, dd=55.0, dv=0.5)
    bundle = build_prompt(seg)
    for marker in ("Magnitude analysis", "Trend analysis", "Semantics generation"):
        assert marker in bundle.system_message
    lines = bundle.user_message.strip().splitlines()
    header_idx = lines.index("v,a_lon,dd,dv")
    assert len(lines) - header_idx - 1 == 10  # one data row per sample
    assert bundle.template_version.endswith("car_following")


def test_prompt_structure_lc():
    seg = make_lc_segment(dd=[20.0] * 7, dv=1.0, a_lat=0.1)
    bundle = build_prompt(seg)
    lines = bundle.user_message.strip().splitlines()
    header_idx = lines.index("dd,dv,a_lat")
    assert len(lines) - header_idx - 1 == 7


def test_prompt_determinism_and_version_sensitivity(monkeypatch):
    seg = make_cf_segment(v=25.0, a_lon=0.1, dd=40.0, dv=0.0)
    b1 = build_prompt(seg)
    b2 = build_prompt(seg)
    assert b1 == b2
    import drivestyle.semantics as sem
    monkeypatch.setattr(sem, "TEMPLATE_VERSION", "v2")
    b3 = build_prompt(seg)
    assert b3.system_message != b1.system_message


def test_scenario_mismatch_rejected():
    seg = make_cf_segment(v=25.0, a_lon=0.0, dd=40.0, dv=0.0)
    with pytest.raises(ConfigError):
        build_prompt(seg, scenario="lane_changing")


def test_mock_cf_reproduces_far_distance_narrative():
    # means mirror the published car-following walkthrough: 111 m gap,
    # 109 km/h travel speed
    seg = make_cf_segment(v=109.0 / 3.6, a_lon=0.05, dd=111.0, dv=-0.3)
    result = describe(build_prompt(seg), MockChatBackend())
    assert "relatively far distance" in result.semantics
    assert "111.00 m" in result.semantics
    assert "109.00 km/h" in result.semantics
    assert "high" in result.semantics
    assert "111.00" in result.reasoning


def test_mock_lc_flags_close_gap_and_overtaking():
    seg = make_lc_segment(dd=10.1, dv=5.5, a_lat=0.2)
    result = describe(build_prompt(seg), MockChatBackend())
    assert "relatively close" in result.semantics
    assert "overtaking" in result.semantics
    assert "10.10 m" in result.semantics
    assert "5.50 m/s" in result.semantics


def test_mock_is_deterministic():
    seg = make_lc_segment(dd=18.0, dv=-0.4, a_lat=0.7)
    r1 = describe(build_prompt(seg), MockChatBackend())
    r2 = describe(build_prompt(seg), MockChatBackend())
    assert r1 == r2


def test_mock_magnitudes_reparse_to_true_means():
    rng = np.random.default_rng(11)
    seg = make_cf_segment(
        v=rng.uniform(20, 30, 50), a_lon=rng.normal(0, 0.5, 50),
        dd=rng.uniform(30, 90, 50), dv=rng.normal(0, 1, 50))
    result = describe(build_prompt(seg), MockChatBackend())
    quoted = {float(m) for m in NUMBER.findall(result.semantics)}
    # prompt data is rendered at 2 decimals, so means match within 0.01
    for name in ("dd", "dv"):
        true_mean = float(np.mean(seg.channels[name]))
        assert any(abs(q - true_mean) < 0.02 for q in quoted), (name, true_mean, quoted)
    kmh = float(np.mean(seg.channels["v"])) * 3.6
    assert any(abs(q - kmh) < 0.05 for q in quoted)


def test_mock_trend_classification():
    n = 50
    ramp = np.linspace(20.0, 30.0, n)
    seg = make_cf_segment(v=ramp, a_lon=0.0, dd=np.linspace(80, 40, n), dv=1.0)
    result = describe(build_prompt(seg), MockChatBackend())
    assert "speed is gradually increasing" in result.semantics
    assert "relative distance is gradually decreasing" in result.semantics
    flat = make_cf_segment(v=25.0, a_lon=0.0, dd=50.0, dv=0.0)
    r2 = describe(build_prompt(flat), MockChatBackend())
    assert "remaining stable" in r2.semantics


def test_parse_response_requires_both_tags():
    with pytest.raises(ResponseFormatError):
        parse_response("SEMANTICS:\nonly half")
    with pytest.raises(ResponseFormatError):
        parse_response("no tags at all")
    s, r = parse_response("SEMANTICS:\n A \nREASONING:\n B ")
    assert (s, r) == ("A", "B")


def test_semantic_results_round_trip(tmp_path):
    seg = make_lc_segment(dd=30.0, dv=0.5, a_lat=0.1)
    result = describe(build_prompt(seg), MockChatBackend())
    path = tmp_path / "semantics.jsonl"
    write_semantic_results(path, [result])
    assert read_semantic_results(path) == [result]


def test_cached_replay_is_byte_identical(tmp_path):
    seg = make_lc_segment(dd=30.0, dv=0.5, a_lat=0.1)
    cache = tmp_path / "cache"
    first = batch_describe([seg], MockChatBackend(), cache_dir=cache)
    assert first.backend_calls == 1
    cached_file = next(cache.glob("*.json"))
    replay = SemanticResult.from_dict(json.loads(cached_file.read_text()))
    assert replay == first.results[0]
    second = batch_describe([seg], MockChatBackend(), cache_dir=cache)
    assert second.backend_calls == 0
    assert second.cache_hits == 1
    assert second.results == first.results


def test_batch_describe_cache_contract(tmp_path):
    segs = [make_cf_segment(v=20.0 + i, a_lon=0.0, dd=40.0, dv=0.0,
                            segment_id=f"cf-{i}") for i in range(10)]
    cache = tmp_path / "cache"
    batch_describe(segs[:3], MockChatBackend(), cache_dir=cache)
    out = batch_describe(segs, MockChatBackend(), cache_dir=cache)
    assert out.cache_hits == 3
    assert out.backend_calls == 7
    assert [r.segment_id for r in out.results] == [s.segment_id for s in segs]


class FlakyBackend:
    """Fails for one segment id, succeeds otherwise."""

    model_id = "flaky"

    def __init__(self, bad_id):
        self.bad_id = bad_id
        self.inner = MockChatBackend()

    def complete(self, bundle):
        if bundle.segment_id == self.bad_id:
            raise TransportError("persistent outage")
        return self.inner.complete(bundle)


def test_batch_partial_failure_reports_per_segment(tmp_path):
    segs = [make_cf_segment(v=20.0 + i, a_lon=0.0, dd=40.0, dv=0.0,
                            segment_id=f"cf-{i}") for i in range(10)]
    out = batch_describe(segs, FlakyBackend("cf-4"), cache_dir=tmp_path / "c")
    assert len(out.results) == 9
    assert list(out.failures) == ["cf-4"]
    assert "outage" in out.failures["cf-4"]


# --- remote client over a local stub ----------------------------------------

class _StubHandler(BaseHTTPRequestHandler):
    behavior = None  # list of status codes to emit, then success
    calls = None

    def log_message(self, fmt, *args):
        pass

    def do_POST(self):
        self.calls.append(self.path)
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        if self.behavior:
            status = self.behavior.pop(0)
            self.send_response(status)
            self.end_headers()
            return
        assert payload["temperature"] == 0
        assert [m["role"] for m in payload["messages"]] == ["system", "user"]
        body = json.dumps({"choices": [{"message": {"content":
            "SEMANTICS:\nsteady cruising\nREASONING:\nmeans computed"}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture
def stub_server():
    handler = type("Handler", (_StubHandler,), {"behavior": [], "calls": []})
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/v1/chat/completions", handler
    httpd.shutdown()


def test_remote_backend_parses_tagged_sections(stub_server):
    url, handler = stub_server
    backend = RemoteChatBackend(endpoint_url=url, model_id="test-model",
                                backoff_base_s=0.01)
    seg = make_cf_segment(v=25.0, a_lon=0.0, dd=40.0, dv=0.0)
    result = describe(build_prompt(seg), backend)
    assert result.semantics == "steady cruising"
    assert result.reasoning == "means computed"
    assert result.model_id == "test-model"


def test_remote_backend_retries_transient_errors(stub_server):
    url, handler = stub_server
    handler.behavior.extend([500, 429])
    backend = RemoteChatBackend(endpoint_url=url, model_id="m",
                                max_retries=4, backoff_base_s=0.01)
    seg = make_cf_segment(v=25.0, a_lon=0.0, dd=40.0, dv=0.0)
    result = describe(build_prompt(seg), backend)
    assert result.semantics == "steady cruising"
    assert len(handler.calls) == 3  # two failures then success


def test_remote_backend_gives_up_after_retries(stub_server):
    url, handler = stub_server
    handler.behavior.extend([500] * 10)
    backend = RemoteChatBackend(endpoint_url=url, model_id="m",
                                max_retries=3, backoff_base_s=0.01)
    seg = make_cf_segment(v=25.0, a_lon=0.0, dd=40.0, dv=0.0)
    with pytest.raises(TransportError):
        describe(build_prompt(seg), backend)
