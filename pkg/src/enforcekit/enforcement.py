"""The policy enforcer: proactive modules and the event pipeline.

A registry holds proactive modules ordered by priority. Each intercepted
event flows through the active modules in priority order; a module may pass
it, suppress it, or surround it with synthesized events. Synthesized events
flow only downstream (to strictly lower-priority modules), never back into
the module that inserted them, and the total insertion depth is bounded.

The registry (module flags and instance states) is the only mutable state
in the toolkit; it is single-owner and not thread safe. Events and traces
stay immutable throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .events import Event, Trace
from .policy import (
    Binder,
    DefaultAction,
    DispatchError,
    EventPattern,
    InputRef,
    PolicySpec,
    Transition,
    index_patterns,
    index_transitions,
    instance_key_for,
)

__all__ = [
    "EnforcementError",
    "UnknownModuleError",
    "AutomatonInstance",
    "ProactiveModule",
    "ModuleRegistry",
    "ModuleCounts",
    "EditRecord",
    "EnforcementReport",
    "instance_key",
    "enforce_event",
    "enforce_trace",
]

INSERT = "insert"
SUPPRESS = "suppress"


class EnforcementError(RuntimeError):
    """Enforcement could not proceed (e.g. insertion depth exceeded)."""

    def __init__(self, message: str, seq: int | None = None):
        super().__init__(message)
        self.seq = seq


class UnknownModuleError(LookupError):
    """A module name that is not present in the registry."""


@dataclass
class AutomatonInstance:
    """One live automaton: a policy instance at a key, in some state.

    ``bindings`` accumulates binder variable values observed by this
    instance, so broadcast events (which carry no binder themselves) can
    still synthesize events that mention the bound value.
    """

    policy: PolicySpec
    key: tuple[str, ...]
    current: str
    bindings: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self._table = index_transitions(self.policy.automaton.transitions)

    def step(self, event: Event) -> list[Event]:
        """Consume one event; advance state and return the emitted events.

        With no matching transition the automaton's default applies: allow
        emits the event unchanged, suppress emits nothing. The state is
        unchanged in either case.
        """
        chosen: Transition | None = None
        for t in self._table.get((self.current, event.kind, event.name), ()):
            if t.pattern.matches(event):
                chosen = t
                break
        if chosen is None:
            if self.policy.automaton.default is DefaultAction.ALLOW:
                return [event]
            return []
        self.bindings.update(chosen.pattern.bind(event))
        self.current = chosen.target
        assert chosen.output is not None
        return _instantiate_template(chosen.output.items, event, self.bindings)


def _instantiate_template(
    items: Sequence, event: Event, bindings: dict[str, str]
) -> list[Event]:
    out: list[Event] = []
    for item in items:
        if isinstance(item, InputRef):
            out.append(event)
            continue
        attrs: dict[str, str] = {}
        for key, constraint in item.attrs:
            if isinstance(constraint, Binder):
                value = bindings.get(constraint.var)
                if value is None:
                    raise EnforcementError(
                        f"unbound binder '${constraint.var}' in synthesized "
                        f"event '{item.text()}'"
                    )
                attrs[key] = value
            else:
                attrs[key] = constraint.value
        out.append(
            Event(
                item.kind,
                item.name,
                event.component,
                seq=event.seq,
                synthetic=True,
                attrs=attrs,
            )
        )
    return out


@dataclass
class ProactiveModule:
    """A policy wired into the pipeline with an activation flag."""

    policy: PolicySpec
    priority: int = 0
    active: bool = True
    instances: dict[tuple[str, ...], AutomatonInstance] = field(default_factory=dict)

    def __post_init__(self):
        self._alpha_index = index_patterns(self.policy.alphabet)

    @property
    def name(self) -> str:
        return self.policy.name

    def alphabet_match(self, event: Event) -> EventPattern | None:
        """First alphabet pattern matching the event, or None."""
        for pattern in self._alpha_index.get((event.kind, event.name), ()):
            if pattern.matches(event):
                return pattern
        return None

    def reset(self) -> None:
        """Forget every instance; fresh ones start at the initial state."""
        self.instances.clear()

    def _select_instances(
        self, event: Event, pattern: EventPattern
    ) -> list[AutomatonInstance]:
        """Instances addressed by a matching event (created lazily).

        Under per-binder instancing, an event matching a binder-free pattern
        broadcasts to every existing instance of its component, in ascending
        key order. It creates none: with no instances it simply passes.
        """
        spec = self.policy
        key = instance_key_for(event, spec.instancing, spec.binder_attr, pattern)
        if key is None:
            keys = sorted(k for k in self.instances if k and k[0] == event.component)
            return [self.instances[k] for k in keys]
        instance = self.instances.get(key)
        if instance is None:
            instance = AutomatonInstance(spec, key, spec.automaton.initial)
            self.instances[key] = instance
        bound = pattern.binder()
        if bound is not None:
            instance.bindings[bound[1]] = event.attrs[bound[0]]
        return [instance]


@dataclass
class ModuleCounts:
    """Per-module event accounting."""

    inserted: int = 0
    suppressed: int = 0
    passed: int = 0


@dataclass(frozen=True)
class EditRecord:
    """One edit performed during a run, attributed to an input seq."""

    seq: int
    module: str
    action: str  # INSERT or SUPPRESS
    event: str  # compact event literal

    def __str__(self) -> str:
        return f"seq={self.seq} module={self.module} action={self.action} event={self.event}"


@dataclass
class EnforcementReport:
    """What each module did during a run.

    Invariant: ``len(output) - len(input)`` always equals total inserted
    minus total suppressed.
    """

    counts: dict[str, ModuleCounts] = field(default_factory=dict)
    records: list[EditRecord] = field(default_factory=list)

    @staticmethod
    def for_registry(registry: "ModuleRegistry") -> "EnforcementReport":
        return EnforcementReport({m.name: ModuleCounts() for m in registry.modules})

    @property
    def total(self) -> ModuleCounts:
        out = ModuleCounts()
        for counts in self.counts.values():
            out.inserted += counts.inserted
            out.suppressed += counts.suppressed
            out.passed += counts.passed
        return out

    @property
    def delta(self) -> int:
        """Net change in trace length implied by the counters."""
        total = self.total
        return total.inserted - total.suppressed


@dataclass
class ModuleRegistry:
    """Proactive modules ordered by priority, plus the insertion bound."""

    modules: list[ProactiveModule] = field(default_factory=list)
    insert_depth_limit: int = 16

    def __post_init__(self):
        if self.insert_depth_limit < 1:
            raise ValueError("insert_depth_limit must be a positive integer")
        self.modules = sorted(self.modules, key=lambda m: m.priority)
        priorities = [m.priority for m in self.modules]
        if len(set(priorities)) != len(priorities):
            raise ValueError("module priorities must be unique")
        names = [m.name for m in self.modules]
        if len(set(names)) != len(names):
            raise ValueError("module names must be unique")

    @classmethod
    def from_policies(
        cls, policies: Iterable[PolicySpec], *, insert_depth_limit: int = 16
    ) -> "ModuleRegistry":
        """Build a registry assigning priorities in the given order."""
        modules = [ProactiveModule(spec, priority=i) for i, spec in enumerate(policies)]
        return cls(modules, insert_depth_limit)

    def module(self, name: str) -> ProactiveModule:
        for module in self.modules:
            if module.name == name:
                return module
        raise UnknownModuleError(f"no module named {name!r} in the registry")

    def set_active(self, name: str, active: bool) -> None:
        """Flip a module's activation flag.

        Reactivating a module resets it: all instances are dropped, so fresh
        ones start at the initial state. A reactivated module has no memory
        of events it did not observe.
        """
        module = self.module(name)
        if active and not module.active:
            module.reset()
        module.active = active

    def reset(self) -> None:
        """Drop all instances of all modules (activation flags are kept)."""
        for module in self.modules:
            module.reset()


def instance_key(event: Event, spec: PolicySpec) -> tuple[str, ...] | None:
    """Instance key a matching event selects under the policy's instancing.

    Returns ``()`` for singleton, ``(component,)`` for per-component, and
    ``(component, value)`` for per-binder; ``None`` means broadcast (the
    matched pattern has no binder under per-binder instancing). Raises
    :class:`DispatchError` if the event matches no alphabet pattern or lacks
    the binder attribute the matched pattern requires.
    """
    for pattern in index_patterns(spec.alphabet).get((event.kind, event.name), ()):
        if pattern.matches(event):
            return instance_key_for(event, spec.instancing, spec.binder_attr, pattern)
    raise DispatchError(
        f"event {event.literal()} does not match the alphabet of policy {spec.name}"
    )


def _apply_module(
    module: ProactiveModule,
    event: Event,
    pattern: EventPattern,
    report: EnforcementReport | None,
    origin_seq: int,
) -> tuple[list[Event], bool, list[Event]]:
    """Step every addressed instance; combine per the fan-out rule.

    Returns (pre-insertions, emit-input, post-insertions): all pre-input
    insertions first in instance order, the input once unless any instance
    suppressed it, then all post-input insertions in instance order.
    """
    pre: list[Event] = []
    post: list[Event] = []
    suppressed = False
    for instance in module._select_instances(event, pattern):
        outputs = instance.step(event)
        for position, emitted in enumerate(outputs):
            if emitted is event:
                pre.extend(outputs[:position])
                post.extend(outputs[position + 1 :])
                break
        else:
            suppressed = True
            pre.extend(outputs)
    emit_input = not suppressed
    if report is not None:
        counts = report.counts.setdefault(module.name, ModuleCounts())
        counts.inserted += len(pre) + len(post)
        if emit_input:
            counts.passed += 1
        else:
            counts.suppressed += 1
            report.records.append(
                EditRecord(origin_seq, module.name, SUPPRESS, event.literal())
            )
        for synth in pre:
            report.records.append(
                EditRecord(origin_seq, module.name, INSERT, synth.literal())
            )
        for synth in post:
            report.records.append(
                EditRecord(origin_seq, module.name, INSERT, synth.literal())
            )
    return pre, emit_input, post


def _dispatch(
    registry: ModuleRegistry,
    event: Event,
    start: int,
    depth: int,
    chain: tuple[str, ...],
    report: EnforcementReport | None,
    origin_seq: int,
) -> list[Event]:
    modules = registry.modules
    for idx in range(start, len(modules)):
        module = modules[idx]
        if not module.active:
            continue
        pattern = module.alphabet_match(event)
        if pattern is None:
            continue
        pre, emit_input, post = _apply_module(module, event, pattern, report, origin_seq)
        limit = registry.insert_depth_limit
        next_chain = chain + (module.name,)
        if (pre or post) and depth + 1 > limit:
            raise EnforcementError(
                f"insertion depth limit {limit} exceeded "
                f"(module chain: {' -> '.join(next_chain)})",
                seq=origin_seq,
            )
        out: list[Event] = []
        for synth in pre:
            out.extend(
                _dispatch(registry, synth, idx + 1, depth + 1, next_chain, report, origin_seq)
            )
        if emit_input:
            out.extend(_dispatch(registry, event, idx + 1, depth, chain, report, origin_seq))
        for synth in post:
            out.extend(
                _dispatch(registry, synth, idx + 1, depth + 1, next_chain, report, origin_seq)
            )
        return out
    return [event]


def enforce_event(
    registry: ModuleRegistry, event: Event, report: EnforcementReport | None = None
) -> list[Event]:
    """Run one event through the pipeline and return the emitted sequence.

    Events matching no active module pass through unchanged. Synthesized
    events are processed only by modules downstream of the inserting one,
    recursively, up to the registry's insertion depth limit.
    """
    return _dispatch(registry, event, 0, 0, (), report, event.seq)


def enforce_trace(
    registry: ModuleRegistry, trace: Trace
) -> tuple[Trace, EnforcementReport]:
    """Enforce a whole trace, renumbering the output seq 1..n.

    Instances persist across the events of one call, so the registry
    carries history; callers wanting a fresh run should use a fresh
    registry or call ``registry.reset()`` first.
    """
    report = EnforcementReport.for_registry(registry)
    out: list[Event] = []
    for event in trace:
        try:
            out.extend(_dispatch(registry, event, 0, 0, (), report, event.seq))
        except DispatchError as err:
            raise EnforcementError(f"seq {event.seq}: {err}", seq=event.seq) from err
    return Trace.renumbered(out), report
