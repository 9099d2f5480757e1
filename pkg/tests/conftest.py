import pytest


@pytest.fixture
def anyio_backend():
    return "asyncio"


# One pass/fail line per acceptance criterion at the end of the run.

ACCEPTANCE_LABELS = {
    "test_acceptance_identity_dispatch": "1a identity: dispatch byte-identity (100 payloads x 11 categories)",
    "test_acceptance_transparency_proxy": "1b transparency: proxy checksum-identical over 1000-message fuzz",
    "test_acceptance_sdp_corpus": "2  SDP corpus: round-trip + golden rewrites (exact)",
    "test_acceptance_candidate_policy_properties": "3  candidate policy: predicate/subsequence/idempotent (1000 lists)",
    "test_acceptance_filter_caveat_reproduction": "4  filtering reaches signaling only; host pair still selected",
    "test_acceptance_enterprise_policy": "5  enterprise relay: one approved server, relay-only end-to-end",
    "test_acceptance_stats_oracle": "6  stats oracle: bitrate 1%, loss 10%/20+, rtt exact, MOS 4.404±0.005 + monotone",
    "test_acceptance_fault_delay_wall_clock": "7a fault delay: 500 ms within [500, 600) on wall clock",
    "test_acceptance_fault_drop_determinism": "7b fault drops: seed-identical pattern over 1000 messages",
    "test_acceptance_fault_close_deadline": "7c fault close: within 100 ms of close_after deadline",
    "test_acceptance_controls_linearizability": "8  controls bus: 8 writers x 1000 ops, per-name versions strict",
    "test_acceptance_adaptive_loop": "9  adaptive loop: cpu 80% -> cpu.overload -> frame_rate.max 10",
    "test_acceptance_constraint_device_properties": "10 constraints/devices: tighten-only, id-stable, seeded labels",
}

_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    name = report.nodeid.split("::")[-1]
    if name in ACCEPTANCE_LABELS:
        _results[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in ACCEPTANCE_LABELS.items():
        if name in _results:
            terminalreporter.write_line(f"[{_results[name]}] {label}")
