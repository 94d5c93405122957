"""Monitor replay, trace enumeration, and bounded exhaustive verification."""

import pytest
from hypothesis import given, strategies as st

from enforcekit import (
    EditAutomaton,
    Event,
    EventKind,
    EventPattern,
    EventUniverse,
    MonitorAutomaton,
    OutputTemplate,
    PolicySpec,
    Trace,
    Transition,
    Violation,
    brute_force_verify,
    check,
    enumerate_traces,
    parse_monitor,
)

from conftest import CATALOG, camera_alphabet

API = EventKind.API_CALL
CB = EventKind.CALLBACK

CAMERA_MONITOR = parse_monitor((CATALOG / "camera.monitor").read_text())

OPEN = Event.api("Camera.open", "A1")
RELEASE = Event.api("Camera.release", "A1")
PAUSE = Event.cb("onPause", "A1")
RESUME = Event.cb("onResume", "A1")


def _camera_patterns() -> tuple[EventPattern, ...]:
    return (
        EventPattern(API, "Camera.open"),
        EventPattern(API, "Camera.release"),
        EventPattern(CB, "onPause"),
    )


def _identity_policy() -> PolicySpec:
    """Observes the camera alphabet but never edits anything."""
    return PolicySpec(
        "Identity", EditAutomaton(("S",), "S"), alphabet=_camera_patterns()
    )


def _release_eater() -> PolicySpec:
    """Suppresses every Camera.release: unsound and opaque on purpose."""
    release = EventPattern(API, "Camera.release")
    automaton = EditAutomaton(
        ("S",), "S", (Transition("S", release, "S", OutputTemplate(())),)
    )
    return PolicySpec("ReleaseEater", automaton, alphabet=(release,))


class TestCheck:
    def test_pause_while_holding_the_camera_is_a_violation(self, camera_monitor):
        trace = Trace.renumbered([OPEN, PAUSE])
        assert check(trace, camera_monitor) == [Violation(2, ("A1",), "LEAKED")]

    def test_violation_message(self, camera_monitor):
        (violation,) = check(Trace.renumbered([OPEN, PAUSE]), camera_monitor)
        assert str(violation) == "seq 2: instance A1 entered error state LEAKED"

    def test_release_before_pause_is_clean(self, camera_monitor):
        assert check(Trace.renumbered([OPEN, RELEASE, PAUSE]), camera_monitor) == []

    def test_empty_trace_is_clean(self, camera_monitor):
        assert check(Trace(()), camera_monitor) == []

    def test_unmatched_alphabet_events_self_loop(self, camera_monitor):
        # A pause with no prior open stays in FREE, a release in FREE too.
        assert check(Trace.renumbered([PAUSE, RELEASE, PAUSE]), camera_monitor) == []

    def test_events_outside_the_alphabet_are_invisible(self, camera_monitor):
        trace = Trace.renumbered([OPEN, RESUME, RELEASE, PAUSE])
        assert check(trace, camera_monitor) == []

    def test_error_states_absorb(self, camera_monitor):
        trace = Trace.renumbered([OPEN, PAUSE, OPEN, PAUSE])
        assert check(trace, camera_monitor) == [Violation(2, ("A1",), "LEAKED")]

    def test_components_violate_independently(self, camera_monitor):
        trace = Trace.renumbered(
            [
                Event.api("Camera.open", "A1"),
                Event.api("Camera.open", "A2"),
                Event.cb("onPause", "A1"),
                Event.cb("onPause", "A2"),
            ]
        )
        assert check(trace, camera_monitor) == [
            Violation(3, ("A1",), "LEAKED"),
            Violation(4, ("A2",), "LEAKED"),
        ]

    def test_broadcast_checks_every_bound_instance(self, osgi_monitor):
        trace = Trace.renumbered(
            [
                Event.api("registerService", "B1", service="S2"),
                Event.api("registerService", "B1", service="S1"),
                Event.cb("stop", "B1"),
            ]
        )
        assert check(trace, osgi_monitor) == [
            Violation(3, ("B1", "S1"), "LEAKED"),
            Violation(3, ("B1", "S2"), "LEAKED"),
        ]

    def test_unkeyable_events_are_ignored(self, osgi_monitor):
        # registerService without its service attribute cannot be routed.
        trace = Trace.renumbered(
            [Event.api("registerService", "B1"), Event.cb("stop", "B1")]
        )
        assert check(trace, osgi_monitor) == []

    def test_singleton_key_prints_as_placeholder(self):
        boom = EventPattern(API, "boom")
        monitor = MonitorAutomaton(
            "Singleton",
            ("OK", "BAD"),
            "OK",
            error_states=frozenset({"BAD"}),
            transitions=(Transition("OK", boom, "BAD", None),),
            alphabet=(boom,),
        )
        (violation,) = check(Trace.renumbered([Event.api("boom", "C1")]), monitor)
        assert str(violation) == "seq 1: instance <singleton> entered error state BAD"


class TestMonitorStructure:
    def test_error_states_must_be_declared(self):
        with pytest.raises(ValueError, match="unknown state BAD"):
            MonitorAutomaton("M", ("OK",), "OK", error_states=frozenset({"BAD"}))

    def test_error_states_must_be_absorbing(self):
        boom = EventPattern(API, "boom")
        with pytest.raises(ValueError, match="must not have outgoing transitions"):
            MonitorAutomaton(
                "M",
                ("OK", "BAD"),
                "OK",
                error_states=frozenset({"BAD"}),
                transitions=(Transition("BAD", boom, "OK", None),),
                alphabet=(boom,),
            )

    def test_monitor_transitions_carry_no_outputs(self):
        boom = EventPattern(API, "boom")
        with pytest.raises(ValueError, match="must not carry outputs"):
            MonitorAutomaton(
                "M",
                ("OK",),
                "OK",
                transitions=(Transition("OK", boom, "OK", OutputTemplate(())),),
                alphabet=(boom,),
            )


class TestEnumeration:
    def test_size_counts_every_length_up_to_the_bound(self):
        universe = EventUniverse((OPEN, RELEASE), 8)
        assert universe.size() == sum(2**k for k in range(9))
        assert universe.size() == 511

    def test_acceptance_universe_holds_87381_traces(self):
        assert EventUniverse(camera_alphabet(), 8).size() == 87381

    def test_enumeration_matches_the_size(self):
        universe = EventUniverse((OPEN, RELEASE, PAUSE), 3)
        traces = list(enumerate_traces(universe))
        assert len(traces) == universe.size() == 40

    def test_shortest_first_then_declaration_order(self):
        a = Event.api("a", "C1")
        b = Event.api("b", "C1")
        traces = list(enumerate_traces(EventUniverse((a, b), 2)))
        assert [[e.literal() for e in t] for t in traces] == [
            [],
            ["api:a@C1"],
            ["api:b@C1"],
            ["api:a@C1", "api:a@C1"],
            ["api:a@C1", "api:b@C1"],
            ["api:b@C1", "api:a@C1"],
            ["api:b@C1", "api:b@C1"],
        ]

    def test_enumerated_traces_are_renumbered(self):
        universe = EventUniverse((OPEN, RELEASE), 3)
        for trace in enumerate_traces(universe):
            assert [e.seq for e in trace] == list(range(1, len(trace.events) + 1))

    def test_alphabet_must_be_distinct(self):
        with pytest.raises(ValueError, match="distinct"):
            EventUniverse((OPEN, Event.api("Camera.open", "A1")), 2)

    def test_alphabet_must_be_non_empty(self):
        with pytest.raises(ValueError, match="non-empty"):
            EventUniverse((), 2)

    def test_bound_must_be_at_least_one(self):
        with pytest.raises(ValueError, match="at least 1"):
            EventUniverse((OPEN,), 0)


class TestBruteForceVerify:
    def test_camera_policy_is_sound_and_transparent(
        self, camera_policy, camera_monitor, camera_universe_len3
    ):
        verdict = brute_force_verify(
            camera_policy, camera_monitor, camera_universe_len3
        )
        assert verdict.ok
        assert verdict.sound and verdict.transparent
        assert verdict.traces_checked == camera_universe_len3.size() == 85
        assert verdict.sound_counterexamples == []
        assert verdict.transparent_counterexamples == []

    def test_unregister_policy_is_sound_and_transparent(
        self, osgi_policy, osgi_monitor
    ):
        universe = EventUniverse(
            (
                Event.api("registerService", "B1", service="S1"),
                Event.api("unregisterService", "B1", service="S1"),
                Event.cb("stop", "B1"),
            ),
            3,
        )
        verdict = brute_force_verify(osgi_policy, osgi_monitor, universe)
        assert verdict.ok

    def test_doing_nothing_is_not_sound(self, camera_monitor, camera_universe_len3):
        verdict = brute_force_verify(
            _identity_policy(), camera_monitor, camera_universe_len3
        )
        assert not verdict.sound
        assert verdict.transparent  # identity never edits anything
        assert not verdict.ok
        first = verdict.sound_counterexamples[0]
        assert [e.literal() for e in first] == ["api:Camera.open@A1", "cb:onPause@A1"]

    def test_eating_releases_is_neither_sound_nor_transparent(
        self, camera_monitor, camera_universe_len3
    ):
        verdict = brute_force_verify(
            _release_eater(), camera_monitor, camera_universe_len3
        )
        assert not verdict.sound
        assert not verdict.transparent
        first = verdict.transparent_counterexamples[0]
        assert [e.literal() for e in first] == ["api:Camera.release@A1"]

    def test_counterexamples_are_capped_but_the_scan_is_not(
        self, camera_monitor, camera_universe_len3
    ):
        verdict = brute_force_verify(
            _identity_policy(),
            camera_monitor,
            camera_universe_len3,
            counterexample_limit=2,
        )
        assert len(verdict.sound_counterexamples) == 2
        assert verdict.traces_checked == 85


def _camera_reference_model(events) -> list[Violation]:
    """Boolean restatement of the camera monitor: held/leaked per component."""
    held: dict[str, bool] = {}
    leaked: dict[str, bool] = {}
    violations: list[Violation] = []
    for event in events:
        c = event.component
        if leaked.get(c):
            continue
        if event.name == "Camera.open":
            held[c] = True
        elif event.name == "Camera.release":
            held[c] = False
        elif event.name == "onPause" and held.get(c):
            leaked[c] = True
            violations.append(Violation(event.seq, (c,), "LEAKED"))
    return violations


_CAMERA_EVENTS = st.builds(
    lambda name, component: (
        Event.cb(name, component)
        if name in ("onPause", "onResume")
        else Event.api(name, component)
    ),
    st.sampled_from(["Camera.open", "Camera.release", "onPause", "onResume"]),
    st.sampled_from(["A1", "A2"]),
)


@given(st.lists(_CAMERA_EVENTS, max_size=14))
def test_check_agrees_with_the_reference_model(events):
    trace = Trace.renumbered(events)
    assert check(trace, CAMERA_MONITOR) == _camera_reference_model(trace.events)


@given(st.lists(_CAMERA_EVENTS, max_size=12), st.integers(min_value=0, max_value=12))
def test_violations_are_prefix_monotone(events, cut):
    trace = Trace.renumbered(events)
    cut = min(cut, len(trace.events))
    prefix = Trace(trace.events[:cut])
    full = check(trace, CAMERA_MONITOR)
    assert check(prefix, CAMERA_MONITOR) == [v for v in full if v.seq <= cut]
