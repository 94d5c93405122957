"""Independent checking of traces: safety monitors and brute-force search.

Monitors are plain acceptor automata, deliberately free of any edit or
output machinery, so they can serve as an oracle for the enforcement
pipeline: a monitor says whether a trace violates a property, and bounded
exhaustive enumeration over a concrete event universe establishes, up to
that bound, that enforcement output never violates the property (soundness)
and that compliant traces pass through untouched (transparency).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterator

from .enforcement import ModuleRegistry, enforce_trace
from .events import Event, Trace
from .policy import (
    Diagnostic,
    DispatchError,
    EventPattern,
    Instancing,
    PolicySpec,
    Transition,
    _check_states,
    _normalize_transitions,
    index_patterns,
    index_transitions,
    instance_key_for,
    nondeterminism_diagnostics,
    unreachable_diagnostics,
)

__all__ = [
    "MonitorAutomaton",
    "Violation",
    "EventUniverse",
    "Verdict",
    "check",
    "validate_monitor",
    "enumerate_traces",
    "brute_force_verify",
]


@dataclass(frozen=True)
class MonitorAutomaton:
    """Deterministic acceptor with absorbing error states.

    The monitor is total over its alphabet: an alphabet event with no
    matching transition self-loops. Events outside the alphabet are
    invisible. Instances are keyed exactly like policy instances.
    """

    name: str
    states: tuple[str, ...]
    initial: str
    error_states: frozenset[str] = frozenset()
    transitions: tuple[Transition, ...] = ()
    alphabet: tuple[EventPattern, ...] = ()
    instancing: Instancing = Instancing.SINGLETON
    binder_attr: str | None = None
    statement: str = ""

    def __post_init__(self):
        transitions = tuple(self.transitions)
        states = _check_states(self.states, self.initial, transitions)
        object.__setattr__(self, "states", states)
        object.__setattr__(
            self, "transitions", _normalize_transitions(states, transitions)
        )
        object.__setattr__(self, "error_states", frozenset(self.error_states))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        if "\n" in self.statement or "\r" in self.statement:
            raise ValueError("statement must be a single line")
        for state in self.error_states:
            if state not in states:
                raise ValueError(f"unknown state {state}")
        for t in self.transitions:
            if t.output is not None:
                raise ValueError("monitor transitions must not carry outputs")
            if t.source in self.error_states:
                raise ValueError(
                    f"error state {t.source} must not have outgoing transitions"
                )
            if t.pattern not in self.alphabet:
                raise ValueError(f"pattern '{t.pattern.text()}' is not in the alphabet")
        if self.instancing is Instancing.PER_BINDER:
            if not self.binder_attr:
                raise ValueError("per-binder instancing requires a binder attribute")
            binder_keys = {p.binder()[0] for p in self.alphabet if p.binder()}
            if not binder_keys:
                raise ValueError(
                    "per-binder instancing requires at least one alphabet "
                    "pattern with a binder"
                )
            stray = binder_keys - {self.binder_attr}
            if stray:
                raise ValueError(
                    f"binder on attribute {sorted(stray)[0]!r} does not match "
                    f"per-binder key {self.binder_attr!r}"
                )
        elif self.binder_attr is not None:
            raise ValueError("binder_attr is only meaningful with per-binder instancing")


@dataclass(frozen=True)
class Violation:
    """One transition into an error state while replaying a trace."""

    seq: int
    key: tuple[str, ...]
    state: str

    def __str__(self) -> str:
        where = ",".join(self.key) or "<singleton>"
        return f"seq {self.seq}: instance {where} entered error state {self.state}"


def validate_monitor(monitor: MonitorAutomaton) -> list[Diagnostic]:
    """Nondeterminism errors and unreachable-state warnings for a monitor."""
    diagnostics = nondeterminism_diagnostics(monitor.states, monitor.transitions)
    diagnostics += unreachable_diagnostics(
        monitor.states, monitor.initial, monitor.transitions
    )
    return diagnostics


def check(trace: Trace, monitor: MonitorAutomaton) -> list[Violation]:
    """Replay a trace against a monitor; one violation per error entry.

    The replay is deterministic and total: alphabet events with no matching
    transition self-loop, events outside the alphabet (or that cannot be
    keyed to an instance) are ignored, and error states absorb. Violations
    of a trace prefix are a prefix of the full trace's violations.
    """
    alpha_index = index_patterns(monitor.alphabet)
    trans_index = index_transitions(monitor.transitions)
    errors = monitor.error_states
    states: dict[tuple[str, ...], str] = {}
    violations: list[Violation] = []
    for event in trace:
        pattern = None
        for candidate in alpha_index.get((event.kind, event.name), ()):
            if candidate.matches(event):
                pattern = candidate
                break
        if pattern is None:
            continue
        try:
            key = instance_key_for(
                event, monitor.instancing, monitor.binder_attr, pattern
            )
        except DispatchError:
            continue
        if key is None:
            keys = sorted(k for k in states if k and k[0] == event.component)
        else:
            states.setdefault(key, monitor.initial)
            keys = [key]
        for instance_key in keys:
            current = states[instance_key]
            if current in errors:
                continue
            target = current
            for t in trans_index.get((current, event.kind, event.name), ()):
                if t.pattern.matches(event):
                    target = t.target
                    break
            states[instance_key] = target
            if target in errors:
                violations.append(Violation(event.seq, instance_key, target))
    return violations


@dataclass(frozen=True)
class EventUniverse:
    """A concrete alphabet of events plus a length bound for enumeration."""

    alphabet: tuple[Event, ...]
    max_len: int

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        if not self.alphabet:
            raise ValueError("the alphabet must be non-empty")
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")
        if len(set(e.literal() for e in self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet events must be distinct")

    def size(self) -> int:
        """Number of traces of length 0..max_len over the alphabet."""
        base = len(self.alphabet)
        return sum(base**k for k in range(self.max_len + 1))


def enumerate_traces(universe: EventUniverse) -> Iterator[Trace]:
    """Yield every trace over the universe, shortest first.

    Traces of equal length come in lexicographic order of the alphabet's
    declaration order; events are renumbered seq 1..n. The stream is
    generated lazily, so memory stays constant regardless of the bound.
    """
    yield Trace(())
    # Events are immutable, so the seq-numbered variants can be built once
    # and shared by every trace that uses them.
    variants = [
        tuple(replace(e, seq=pos) for e in universe.alphabet)
        for pos in range(1, universe.max_len + 1)
    ]
    indices = range(len(universe.alphabet))
    for length in range(1, universe.max_len + 1):
        for combo in itertools.product(indices, repeat=length):
            yield Trace(tuple(variants[pos][idx] for pos, idx in enumerate(combo)))


@dataclass
class Verdict:
    """Outcome of a bounded exhaustive verification run."""

    sound: bool
    transparent: bool
    sound_counterexamples: list[Trace] = field(default_factory=list)
    transparent_counterexamples: list[Trace] = field(default_factory=list)
    traces_checked: int = 0

    @property
    def ok(self) -> bool:
        return self.sound and self.transparent


def brute_force_verify(
    policy: PolicySpec,
    monitor: MonitorAutomaton,
    universe: EventUniverse,
    *,
    counterexample_limit: int = 10,
) -> Verdict:
    """Check soundness and transparency of a policy over a bounded universe.

    Sound: for every input trace, the enforced output has zero monitor
    violations. Transparent: every input the monitor already accepts is
    reproduced identically. The whole universe is always scanned; the first
    ``counterexample_limit`` failing inputs of each kind are kept.
    """
    registry = ModuleRegistry.from_policies([policy])
    verdict = Verdict(sound=True, transparent=True)
    for trace in enumerate_traces(universe):
        verdict.traces_checked += 1
        registry.reset()
        enforced, _report = enforce_trace(registry, trace)
        if check(enforced, monitor):
            verdict.sound = False
            if len(verdict.sound_counterexamples) < counterexample_limit:
                verdict.sound_counterexamples.append(trace)
        if enforced.events != trace.events and not check(trace, monitor):
            verdict.transparent = False
            if len(verdict.transparent_counterexamples) < counterexample_limit:
                verdict.transparent_counterexamples.append(trace)
    return verdict
