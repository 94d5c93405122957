"""Enforcement policies: event patterns, output templates, edit automata.

A policy describes a deterministic finite automaton whose transitions both
consume intercepted events and emit an output sequence: the event itself, a
replacement, nothing (suppression), or the event surrounded by synthesized
events (insertion). Instances of the automaton are keyed per policy: one
global instance, one per component, or one per bound attribute value.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

from .events import Event, EventKind, _check_ident

__all__ = [
    "Severity",
    "Diagnostic",
    "Literal",
    "Binder",
    "Constraint",
    "EventPattern",
    "InputRef",
    "INPUT",
    "SynthEvent",
    "OutputTemplate",
    "Transition",
    "DefaultAction",
    "EditAutomaton",
    "Instancing",
    "PolicySpec",
    "DispatchError",
    "patterns_overlap",
    "validate_policy",
    "instance_key_for",
]


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """One finding from a validator; errors make a spec unusable."""

    severity: Severity
    message: str

    def __str__(self) -> str:
        return f"{self.severity.value}: {self.message}"


class DispatchError(ValueError):
    """An event matched a pattern but cannot be routed to an instance."""


@dataclass(frozen=True)
class Literal:
    """Attribute constraint: the attribute must equal this value."""

    value: str


@dataclass(frozen=True)
class Binder:
    """Attribute constraint that captures the attribute value as ``$var``."""

    var: str


Constraint = Union[Literal, Binder]


def _constraint_text(key: str, constraint: Constraint) -> str:
    if isinstance(constraint, Binder):
        return f"{key}=${constraint.var}"
    return f"{key}={constraint.value}"


def _normalize_constraints(
    constraints, what: str
) -> tuple[tuple[str, Constraint], ...]:
    items = tuple(sorted(constraints, key=lambda kv: kv[0]))
    seen: set[str] = set()
    binders = 0
    for key, constraint in items:
        _check_ident(key, f"{what} attribute key")
        if key in seen:
            raise ValueError(f"duplicate attribute key {key!r} in {what}")
        seen.add(key)
        if isinstance(constraint, Binder):
            _check_ident(constraint.var, "binder name")
            binders += 1
        elif isinstance(constraint, Literal):
            _check_ident(constraint.value, f"literal value for {key!r}")
        else:
            raise TypeError(f"bad constraint for {key!r}: {constraint!r}")
    if binders > 1:
        raise ValueError(f"at most one binder is allowed per {what}")
    return items


@dataclass(frozen=True)
class EventPattern:
    """Matches events by exact kind and name plus attribute constraints.

    A literal constraint requires the attribute to be present with that
    value. A binder constraint does not restrict matching; it names the
    attribute whose value keys per-binder instances and feeds templates.
    """

    kind: EventKind
    name: str
    constraints: tuple[tuple[str, Constraint], ...] = ()

    def __post_init__(self):
        _check_ident(self.name, "pattern name")
        object.__setattr__(
            self, "constraints", _normalize_constraints(self.constraints, "pattern")
        )

    def binder(self) -> tuple[str, str] | None:
        """The (attribute key, binder var) pair, if this pattern has one."""
        for key, constraint in self.constraints:
            if isinstance(constraint, Binder):
                return key, constraint.var
        return None

    def matches(self, event: Event) -> bool:
        if event.kind is not self.kind or event.name != self.name:
            return False
        for key, constraint in self.constraints:
            if isinstance(constraint, Literal):
                if event.attrs.get(key) != constraint.value:
                    return False
        return True

    def bind(self, event: Event) -> dict[str, str]:
        """Binder variable assignment for a matching event.

        Raises :class:`DispatchError` if the event lacks the bound attribute.
        """
        bound = self.binder()
        if bound is None:
            return {}
        key, var = bound
        value = event.attrs.get(key)
        if value is None:
            raise DispatchError(
                f"event {event.literal()} matches pattern '{self.text()}' "
                f"but lacks binder attribute {key!r}"
            )
        return {var: value}

    def text(self) -> str:
        """Concrete syntax, e.g. ``api registerService{service=$s}``."""
        body = f"{self.kind.value} {self.name}"
        if self.constraints:
            inner = ", ".join(_constraint_text(k, c) for k, c in self.constraints)
            body += "{" + inner + "}"
        return body


@dataclass(frozen=True)
class InputRef:
    """The ``$in`` placeholder: the intercepted event itself."""


INPUT = InputRef()


@dataclass(frozen=True)
class SynthEvent:
    """Template for an event inserted by a transition.

    The synthesized event inherits the component of the triggering input;
    attribute values come from literals or from binder variables in scope.
    """

    kind: EventKind
    name: str
    attrs: tuple[tuple[str, Constraint], ...] = ()

    def __post_init__(self):
        _check_ident(self.name, "synthesized event name")
        object.__setattr__(
            self, "attrs", _normalize_constraints(self.attrs, "synthesized event")
        )

    def text(self) -> str:
        body = f"{self.kind.value} {self.name}"
        if self.attrs:
            inner = ", ".join(_constraint_text(k, c) for k, c in self.attrs)
            body += "{" + inner + "}"
        return body


TemplateItem = Union[InputRef, SynthEvent]


@dataclass(frozen=True)
class OutputTemplate:
    """Ordered output of a transition: synthesized events around ``$in``.

    An empty template suppresses the input; a template without ``$in`` but
    with synthesized events replaces it.
    """

    items: tuple[TemplateItem, ...] = ()

    def __post_init__(self):
        if not isinstance(self.items, tuple):
            object.__setattr__(self, "items", tuple(self.items))
        inputs = sum(1 for item in self.items if isinstance(item, InputRef))
        if inputs > 1:
            raise ValueError("the $in placeholder may appear at most once")

    @property
    def emits_input(self) -> bool:
        return any(isinstance(item, InputRef) for item in self.items)

    def text(self) -> str:
        rendered = [
            "$in" if isinstance(item, InputRef) else item.text() for item in self.items
        ]
        return "[" + ", ".join(rendered) + "]"


PASS = OutputTemplate((INPUT,))


@dataclass(frozen=True)
class Transition:
    """``source --pattern--> target`` with an output template.

    Monitor transitions carry no output (``output is None``).
    """

    source: str
    pattern: EventPattern
    target: str
    output: OutputTemplate | None = None


class DefaultAction(Enum):
    """Behavior for alphabet events with no matching transition."""

    ALLOW = "allow"
    SUPPRESS = "suppress"


def _normalize_transitions(
    states: tuple[str, ...], transitions
) -> tuple[Transition, ...]:
    """Stable-sort transitions by source state declaration order.

    This makes serialization (which groups transitions under their state
    block) a faithful round trip for programmatically built automata too.
    """
    order = {state: i for i, state in enumerate(states)}
    return tuple(
        sorted(transitions, key=lambda t: order.get(t.source, len(order)))
    )


def _check_states(states, initial: str, transitions) -> tuple[str, ...]:
    states = tuple(states)
    seen: set[str] = set()
    for state in states:
        _check_ident(state, "state name")
        if state in seen:
            raise ValueError(f"duplicate state {state}")
        seen.add(state)
    if initial not in seen:
        raise ValueError(f"unknown state {initial}")
    for t in transitions:
        if t.source not in seen:
            raise ValueError(f"unknown state {t.source}")
        if t.target not in seen:
            raise ValueError(f"unknown state {t.target}")
    return states


@dataclass(frozen=True)
class EditAutomaton:
    """Finite edit automaton: states, transitions with outputs, default."""

    states: tuple[str, ...]
    initial: str
    transitions: tuple[Transition, ...] = ()
    default: DefaultAction = DefaultAction.ALLOW

    def __post_init__(self):
        transitions = tuple(self.transitions)
        states = _check_states(self.states, self.initial, transitions)
        for t in transitions:
            if t.output is None:
                raise ValueError(
                    f"transition {t.source} -> {t.target} is missing an output template"
                )
        object.__setattr__(self, "states", states)
        object.__setattr__(
            self, "transitions", _normalize_transitions(states, transitions)
        )


class Instancing(Enum):
    """How automaton instances are keyed."""

    SINGLETON = "singleton"
    PER_COMPONENT = "per-component"
    PER_BINDER = "per-binder"


@dataclass(frozen=True)
class PolicySpec:
    """A named, instantiable enforcement policy.

    ``alphabet`` is the set of event patterns the policy observes; events
    matching no alphabet pattern pass through enforcement untouched. Every
    transition pattern must be one of the alphabet patterns.
    """

    name: str
    automaton: EditAutomaton
    alphabet: tuple[EventPattern, ...] = ()
    instancing: Instancing = Instancing.SINGLETON
    binder_attr: str | None = None
    statement: str = ""

    def __post_init__(self):
        _check_ident(self.name, "policy name")
        alphabet = tuple(self.alphabet)
        object.__setattr__(self, "alphabet", alphabet)
        if "\n" in self.statement or "\r" in self.statement:
            raise ValueError("statement must be a single line")
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("duplicate alphabet pattern")
        for t in self.automaton.transitions:
            if t.pattern not in alphabet:
                raise ValueError(f"pattern '{t.pattern.text()}' is not in the alphabet")
        if self.instancing is Instancing.PER_BINDER:
            if not self.binder_attr:
                raise ValueError("per-binder instancing requires a binder attribute")
            binder_keys = {p.binder()[0] for p in alphabet if p.binder()}
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


def patterns_overlap(a: EventPattern, b: EventPattern) -> bool:
    """True if some concrete event can match both patterns.

    Sound over-approximation: binders are treated as wildcards, so two
    patterns are disjoint only when they disagree on kind, name, or a
    literal constraint for a shared key.
    """
    if a.kind is not b.kind or a.name != b.name:
        return False
    lits_a = {k: c.value for k, c in a.constraints if isinstance(c, Literal)}
    lits_b = {k: c.value for k, c in b.constraints if isinstance(c, Literal)}
    return all(lits_a[k] == lits_b[k] for k in lits_a.keys() & lits_b.keys())


def _reachable(states, initial: str, transitions) -> set[str]:
    edges: dict[str, set[str]] = {s: set() for s in states}
    for t in transitions:
        edges[t.source].add(t.target)
    seen = {initial}
    stack = [initial]
    while stack:
        for nxt in edges[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def nondeterminism_diagnostics(states, transitions) -> list[Diagnostic]:
    """Pairs of same-state transitions that can match the same event."""
    out: list[Diagnostic] = []
    for state in states:
        outgoing = [t for t in transitions if t.source == state]
        for i, first in enumerate(outgoing):
            for second in outgoing[i + 1 :]:
                if patterns_overlap(first.pattern, second.pattern):
                    out.append(
                        Diagnostic(
                            Severity.ERROR,
                            f"state {state}: transitions on '{first.pattern.text()}' "
                            f"and '{second.pattern.text()}' can match the same event",
                        )
                    )
    return out


def unreachable_diagnostics(states, initial: str, transitions) -> list[Diagnostic]:
    reached = _reachable(states, initial, transitions)
    return [
        Diagnostic(
            Severity.WARNING,
            f"state {state} is unreachable from initial state {initial}",
        )
        for state in states
        if state not in reached
    ]


def validate_policy(spec: PolicySpec) -> list[Diagnostic]:
    """Semantic diagnostics for a structurally valid policy.

    Errors: nondeterminism (two same-state transitions that can match one
    concrete event). Warnings: unreachable states, synthesized events
    outside the policy's own alphabet (they may target downstream modules),
    and suppressed lifecycle callbacks.
    """
    automaton = spec.automaton
    diagnostics = nondeterminism_diagnostics(automaton.states, automaton.transitions)
    diagnostics += unreachable_diagnostics(
        automaton.states, automaton.initial, automaton.transitions
    )
    alphabet_names = {(p.kind, p.name) for p in spec.alphabet}
    for t in automaton.transitions:
        assert t.output is not None
        for item in t.output.items:
            if isinstance(item, SynthEvent) and (item.kind, item.name) not in alphabet_names:
                diagnostics.append(
                    Diagnostic(
                        Severity.WARNING,
                        f"transition {t.source} -> {t.target} inserts "
                        f"'{item.text()}' outside the policy alphabet",
                    )
                )
        if t.pattern.kind is EventKind.CALLBACK and not t.output.emits_input:
            diagnostics.append(
                Diagnostic(
                    Severity.WARNING,
                    f"transition {t.source} -> {t.target} suppresses lifecycle "
                    f"callback '{t.pattern.text()}'; suppressed callbacks can "
                    f"desynchronize the component lifecycle",
                )
            )
    return diagnostics


def instance_key_for(
    event: Event,
    instancing: Instancing,
    binder_attr: str | None,
    pattern: EventPattern,
) -> tuple[str, ...] | None:
    """Instance key selected by a matching event, or None for broadcast.

    Broadcast (None) happens only under per-binder instancing when the
    matched pattern carries no binder: the event then addresses every
    existing instance of its component.
    """
    if instancing is Instancing.SINGLETON:
        return ()
    if instancing is Instancing.PER_COMPONENT:
        return (event.component,)
    bound = pattern.binder()
    if bound is None:
        return None
    key_attr, _var = bound
    value = event.attrs.get(key_attr)
    if value is None:
        raise DispatchError(
            f"event {event.literal()} matches pattern '{pattern.text()}' "
            f"but lacks binder attribute {key_attr!r}"
        )
    return (event.component, value)


def index_patterns(
    patterns: tuple[EventPattern, ...]
) -> dict[tuple[EventKind, str], tuple[EventPattern, ...]]:
    """Group patterns by (kind, name) for fast alphabet lookups."""
    table: dict[tuple[EventKind, str], list[EventPattern]] = {}
    for pattern in patterns:
        table.setdefault((pattern.kind, pattern.name), []).append(pattern)
    return {key: tuple(group) for key, group in table.items()}


def index_transitions(
    transitions: tuple[Transition, ...]
) -> dict[tuple[str, EventKind, str], tuple[Transition, ...]]:
    """Group transitions by (source state, event kind, event name)."""
    table: dict[tuple[str, EventKind, str], list[Transition]] = {}
    for t in transitions:
        table.setdefault((t.source, t.pattern.kind, t.pattern.name), []).append(t)
    return {key: tuple(group) for key, group in table.items()}
