"""End-to-end acceptance gate.

One test per shipped guarantee, each printing a single pass/fail line under
``pytest -v``. Scenario behaviour is exercised through the command line
entry point, the exhaustive guarantees through the library API.
"""

import time

import pytest

from enforcekit import (
    EventUniverse,
    Event,
    ModuleRegistry,
    MonitorAutomaton,
    PolicySpec,
    brute_force_verify,
    cli,
    enforce_trace,
    enumerate_traces,
    parse_document,
    parse_trace,
    serialize_monitor,
    serialize_policy,
)

from conftest import CATALOG, CATALOG_MONITORS, CATALOG_POLICIES, SCENARIOS, camera_alphabet

CAMERA_POLICY = str(CATALOG / "camera_release.policy")


def _simulate(capsys, scenario: str, out_file, *flags: str) -> tuple[int, list[str]]:
    argv = ["simulate", *flags, str(SCENARIOS / scenario), "-o", str(out_file)]
    code = cli.main(argv)
    return code, capsys.readouterr().out.splitlines()


def _policy(name: str) -> PolicySpec:
    return parse_document((CATALOG / name).read_text())


@pytest.fixture(scope="module")
def desk_scale_run():
    """One exhaustive scan shared by the soundness and transparency checks."""
    policy = _policy("camera_release.policy")
    monitor = parse_document((CATALOG / "camera.monitor").read_text())
    universe = EventUniverse(camera_alphabet(), 8)
    start = time.perf_counter()
    verdict = brute_force_verify(policy, monitor, universe)
    elapsed = time.perf_counter() - start
    return verdict, elapsed


def test_plumeria_leak_is_repaired_by_one_release_before_the_pause(capsys, tmp_path):
    start = time.perf_counter()
    code, lines = _simulate(capsys, "plumeria-leak.scn", tmp_path / "bare.trace")
    assert code == 3
    assert sum(l.startswith("baseline leak: ") for l in lines) == 1
    assert sum(l.startswith("baseline denied: ") for l in lines) >= 1

    code, lines = _simulate(
        capsys, "plumeria-leak.scn", tmp_path / "fixed.trace", "-p", CAMERA_POLICY
    )
    elapsed = time.perf_counter() - start
    assert code == 0
    assert not any(l.startswith("enforced leak: ") for l in lines)
    assert not any(l.startswith("enforced denied: ") for l in lines)
    enforced = parse_trace((tmp_path / "fixed.trace").read_text())
    synthetic = [e for e in enforced if e.synthetic]
    assert [e.literal() for e in synthetic] == ["!api:Camera.release@A1"]
    after = enforced.events[enforced.events.index(synthetic[0]) + 1]
    assert after.literal() == "cb:onPause@A1"
    assert elapsed < 1.0


def test_camera_policy_is_sound_over_all_87381_traces_up_to_length_8(desk_scale_run):
    verdict, elapsed = desk_scale_run
    assert verdict.traces_checked == 87381
    assert verdict.sound
    assert verdict.sound_counterexamples == []
    assert elapsed < 30.0


def test_camera_policy_is_transparent_over_the_same_universe(desk_scale_run):
    verdict, elapsed = desk_scale_run
    assert verdict.transparent
    assert verdict.transparent_counterexamples == []
    assert elapsed < 30.0


def test_enforcement_is_idempotent_for_all_traces_up_to_length_6():
    registry = ModuleRegistry.from_policies([_policy("camera_release.policy")])
    universe = EventUniverse(camera_alphabet(), 6)
    start = time.perf_counter()
    for trace in enumerate_traces(universe):
        registry.reset()
        once, _ = enforce_trace(registry, trace)
        registry.reset()
        twice, _ = enforce_trace(registry, once)
        assert twice.events == once.events
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0


def test_catalog_files_check_clean_and_round_trip_exactly(capsys):
    files = [str(CATALOG / name) for name in CATALOG_POLICIES + CATALOG_MONITORS]
    code = cli.main(["check", *files])
    out = capsys.readouterr().out
    assert code == 0
    for path in files:
        assert f"{path}: 0 errors" in out
    for name in CATALOG_POLICIES + CATALOG_MONITORS:
        document = parse_document((CATALOG / name).read_text())
        if isinstance(document, MonitorAutomaton):
            assert parse_document(serialize_monitor(document)) == document
        else:
            assert parse_document(serialize_policy(document)) == document


def test_bundle_stop_fans_out_unregisters_in_key_order(capsys, tmp_path):
    code, lines = _simulate(
        capsys,
        "osgi-stop-leak.scn",
        tmp_path / "osgi.trace",
        "-p",
        str(CATALOG / "osgi_unregister.policy"),
    )
    assert code == 0
    assert lines[-1] == "leaks: 2 -> 0"
    enforced = parse_trace((tmp_path / "osgi.trace").read_text())
    synthetic = [e for e in enforced if e.synthetic]
    assert [e.literal() for e in synthetic] == [
        "!api:unregisterService@B1{service=S1}",
        "!api:unregisterService@B1{service=S2}",
    ]
    stops = [e for e in enforced if e.name == "stop"]
    assert len(stops) == 1
    assert list(enforced.events[-3:]) == synthetic + stops


def test_timer_cleanup_inserts_one_clear_before_unmount(capsys, tmp_path):
    code, lines = _simulate(
        capsys,
        "react-timer-leak.scn",
        tmp_path / "react.trace",
        "-p",
        str(CATALOG / "react_cleanup.policy"),
    )
    assert code == 0
    assert lines[-1] == "leaks: 1 -> 0"
    enforced = parse_trace((tmp_path / "react.trace").read_text())
    synthetic = [e for e in enforced if e.synthetic]
    assert [e.literal() for e in synthetic] == ["!api:clearTimer@C1{timer=T1}"]
    after = enforced.events[enforced.events.index(synthetic[0]) + 1]
    assert after.literal() == "cb:componentWillUnmount@C1"


def test_deactivated_module_reproduces_the_unenforced_trace_byte_for_byte(
    capsys, tmp_path
):
    out_file = tmp_path / "plumeria.trace"
    code, _ = _simulate(
        capsys,
        "plumeria-leak.scn",
        out_file,
        "-p",
        CAMERA_POLICY,
        "--deactivate",
        "CameraRelease",
    )
    assert code == 3
    enforced = out_file.read_bytes()
    baseline = (tmp_path / "plumeria.trace.unenforced").read_bytes()
    assert enforced == baseline


def test_length_accounting_holds_across_the_whole_universe():
    osgi_alphabet = (
        Event.api("registerService", "B1", service="S1"),
        Event.api("unregisterService", "B1", service="S1"),
        Event.cb("stop", "B1"),
    )
    runs = (
        (_policy("camera_release.policy"), EventUniverse(camera_alphabet(), 6)),
        (_policy("osgi_unregister.policy"), EventUniverse(osgi_alphabet, 6)),
    )
    for policy, universe in runs:
        registry = ModuleRegistry.from_policies([policy])
        for trace in enumerate_traces(universe):
            registry.reset()
            out, report = enforce_trace(registry, trace)
            total = report.total
            assert len(out.events) - len(trace.events) == (
                total.inserted - total.suppressed
            )
