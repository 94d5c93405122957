"""Scripted lifecycle scenarios with resource tracking and leak reports.

A scenario drives components through a lifecycle model and issues API
calls. The simulator tracks exclusive resources (who holds the camera,
which services a bundle registered, which timers are live) and reports a
leak whenever a component reaches a suspended or terminal state while still
holding something. Wiring in a module registry routes every generated event
through enforcement first, so inserted events really do release resources.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

from .enforcement import EnforcementReport, ModuleRegistry, UnknownModuleError, enforce_event
from .events import Event, EventKind, LifecycleModel, Trace

__all__ = [
    "UnknownLifecycleError",
    "ScenarioParseError",
    "ScenarioError",
    "LifecycleStep",
    "ApiCallStep",
    "ToggleStep",
    "Scenario",
    "ResourceModel",
    "BUILTIN_RESOURCES",
    "LeakRecord",
    "DeniedAcquire",
    "LeakReport",
    "builtin_lifecycle",
    "inactive_states",
    "parse_scenario",
    "run_scenario",
]


class UnknownLifecycleError(LookupError):
    """A lifecycle model name with no built-in definition."""


class ScenarioParseError(ValueError):
    """Malformed scenario file; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ScenarioError(RuntimeError):
    """A scenario step that cannot be executed (carries the step number)."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


_BUILTIN_LIFECYCLES = {
    # An initial pseudo-state precedes "created" so that onCreate is a real
    # transition and cannot fire twice in a row.
    "activity": LifecycleModel(
        name="activity",
        states=frozenset({"initial", "created", "resumed", "paused", "destroyed"}),
        initial="initial",
        transitions=frozenset(
            {
                ("initial", "onCreate", "created"),
                ("created", "onResume", "resumed"),
                ("resumed", "onPause", "paused"),
                ("paused", "onResume", "resumed"),
                ("paused", "onDestroy", "destroyed"),
            }
        ),
    ),
    "osgi-bundle": LifecycleModel(
        name="osgi-bundle",
        states=frozenset({"installed", "started", "stopped"}),
        initial="installed",
        transitions=frozenset(
            {
                ("installed", "start", "started"),
                ("started", "stop", "stopped"),
                ("stopped", "start", "started"),
            }
        ),
    ),
    "react-component": LifecycleModel(
        name="react-component",
        states=frozenset({"unmounted", "mounted"}),
        initial="unmounted",
        transitions=frozenset(
            {
                ("unmounted", "componentDidMount", "mounted"),
                ("mounted", "componentWillUnmount", "unmounted"),
            }
        ),
    ),
}

# States in which holding an exclusive resource counts as a leak.
_INACTIVE_STATES = {
    "activity": frozenset({"paused", "destroyed"}),
    "osgi-bundle": frozenset({"stopped"}),
    "react-component": frozenset({"unmounted"}),
}


def builtin_lifecycle(name: str) -> LifecycleModel:
    """Look up one of the built-in lifecycle models by name."""
    try:
        return _BUILTIN_LIFECYCLES[name]
    except KeyError:
        known = ", ".join(sorted(_BUILTIN_LIFECYCLES))
        raise UnknownLifecycleError(
            f"unknown lifecycle model {name!r} (built-ins: {known})"
        ) from None


def inactive_states(model: LifecycleModel) -> frozenset[str]:
    """Suspended/terminal states of a model; leaks are checked on entry.

    Built-in models have curated sets; for custom models the terminal
    states (no outgoing transitions) are used.
    """
    curated = _INACTIVE_STATES.get(model.name)
    if curated is not None:
        return curated
    sources = {source for source, _cb, _target in model.transitions}
    return frozenset(model.states - sources)


@dataclass(frozen=True)
class LifecycleStep:
    component: str
    callback: str


@dataclass(frozen=True)
class ApiCallStep:
    component: str
    name: str
    attrs: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ToggleStep:
    module: str
    active: bool


Step = Union[LifecycleStep, ApiCallStep, ToggleStep]


@dataclass(frozen=True)
class Scenario:
    """A named script: declared components plus an ordered step list."""

    name: str
    lifecycle: LifecycleModel
    components: tuple[str, ...]
    steps: tuple[Step, ...] = ()

    def __post_init__(self):
        declared = set(self.components)
        if len(declared) != len(self.components):
            raise ValueError("duplicate component declaration")
        for step in self.steps:
            if isinstance(step, (LifecycleStep, ApiCallStep)):
                if step.component not in declared:
                    raise ValueError(f"undeclared component {step.component!r}")


@dataclass(frozen=True)
class ResourceModel:
    """An exclusive resource guarded by an acquire/release API pair.

    ``key_attr`` distinguishes instances of keyed resources (one per
    service id, one per timer id); unkeyed resources, like the camera, have
    a single instance.
    """

    name: str
    acquire: str
    release: str
    key_attr: str | None = None
    exclusive: bool = True


BUILTIN_RESOURCES: tuple[ResourceModel, ...] = (
    ResourceModel(name="Camera", acquire="Camera.open", release="Camera.release"),
    ResourceModel(
        name="service", acquire="registerService", release="unregisterService",
        key_attr="service",
    ),
    ResourceModel(name="timer", acquire="setTimer", release="clearTimer", key_attr="timer"),
)


@dataclass(frozen=True)
class LeakRecord:
    """A component entered an inactive state while holding a resource."""

    component: str
    state: str
    resource: str
    key: str | None
    seq: int

    def __str__(self) -> str:
        instance = f"{self.resource}[{self.key}]" if self.key else self.resource
        return (
            f"component={self.component} state={self.state} resource={instance} "
            f"at step seq {self.seq}"
        )


@dataclass(frozen=True)
class DeniedAcquire:
    """An acquire attempt rejected because the resource was already held."""

    component: str
    resource: str
    key: str | None
    holder: str
    seq: int

    def __str__(self) -> str:
        instance = f"{self.resource}[{self.key}]" if self.key else self.resource
        return (
            f"component={self.component} resource={instance} held by {self.holder} "
            f"at seq {self.seq}"
        )


@dataclass
class LeakReport:
    leaks: list[LeakRecord] = field(default_factory=list)
    denied: list[DeniedAcquire] = field(default_factory=list)


def parse_scenario(text: str, *, default_name: str = "scenario") -> Scenario:
    """Parse the line-oriented scenario format.

    Directives: ``scenario <name>``, ``lifecycle <model>``,
    ``component <id>``, ``lc <component> <callback>``,
    ``call <component> <api-name> [k=v ...]`` and ``toggle <module> on|off``.
    Components must be declared before use; blank lines and ``#`` comments
    are skipped.
    """
    name = default_name
    lifecycle: LifecycleModel | None = None
    components: list[str] = []
    steps: list[Step] = []

    def need(parts: list[str], count: int, usage: str, lineno: int) -> None:
        if len(parts) != count:
            raise ScenarioParseError(f"expected '{usage}'", lineno)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        directive = parts[0]
        if directive == "scenario":
            need(parts, 2, "scenario <name>", lineno)
            name = parts[1]
        elif directive == "lifecycle":
            need(parts, 2, "lifecycle <model>", lineno)
            try:
                lifecycle = builtin_lifecycle(parts[1])
            except UnknownLifecycleError as err:
                raise ScenarioParseError(str(err), lineno) from err
        elif directive == "component":
            need(parts, 2, "component <id>", lineno)
            if parts[1] in components:
                raise ScenarioParseError(f"duplicate component {parts[1]!r}", lineno)
            components.append(parts[1])
        elif directive == "lc":
            need(parts, 3, "lc <component> <callback>", lineno)
            if parts[1] not in components:
                raise ScenarioParseError(f"undeclared component {parts[1]!r}", lineno)
            steps.append(LifecycleStep(parts[1], parts[2]))
        elif directive == "call":
            if len(parts) < 3:
                raise ScenarioParseError(
                    "expected 'call <component> <api-name> [k=v ...]'", lineno
                )
            if parts[1] not in components:
                raise ScenarioParseError(f"undeclared component {parts[1]!r}", lineno)
            attrs: dict[str, str] = {}
            for token in parts[3:]:
                key, eq, value = token.partition("=")
                if not eq or not key:
                    raise ScenarioParseError(
                        f"expected attribute 'key=value', got {token!r}", lineno
                    )
                attrs[key] = value
            steps.append(ApiCallStep(parts[1], parts[2], attrs))
        elif directive == "toggle":
            need(parts, 3, "toggle <module> on|off", lineno)
            if parts[2] not in ("on", "off"):
                raise ScenarioParseError(
                    f"expected 'on' or 'off', got {parts[2]!r}", lineno
                )
            steps.append(ToggleStep(parts[1], parts[2] == "on"))
        else:
            raise ScenarioParseError(f"unknown directive {directive!r}", lineno)
    if lifecycle is None:
        raise ScenarioParseError("missing 'lifecycle <model>' declaration", 1)
    try:
        return Scenario(name, lifecycle, tuple(components), tuple(steps))
    except ValueError as err:
        raise ScenarioParseError(str(err), 1) from err


class _ResourceState:
    """Holder bookkeeping for one run: (resource, key) -> component."""

    def __init__(self, resources: tuple[ResourceModel, ...]):
        self.by_acquire = {r.acquire: r for r in resources}
        self.by_release = {r.release: r for r in resources}
        self.holdings: dict[tuple[str, str | None], str] = {}

    def _slot(
        self, resource: ResourceModel, event: Event, step_no: int
    ) -> tuple[str, str | None]:
        if resource.key_attr is None:
            return (resource.name, None)
        key = event.attrs.get(resource.key_attr)
        if key is None:
            raise ScenarioError(
                f"api call {event.name} lacks attribute {resource.key_attr!r}",
                step_no,
            )
        return (resource.name, key)

    def apply(
        self, event: Event, step_no: int, seq: int, denied: list[DeniedAcquire]
    ) -> None:
        """Update holdings for one (possibly synthesized) emitted event."""
        if event.kind is not EventKind.API_CALL:
            return
        resource = self.by_acquire.get(event.name)
        if resource is not None:
            slot = self._slot(resource, event, step_no)
            holder = self.holdings.get(slot)
            if holder is not None and resource.exclusive:
                denied.append(
                    DeniedAcquire(event.component, slot[0], slot[1], holder, seq)
                )
            else:
                self.holdings[slot] = event.component
            return
        resource = self.by_release.get(event.name)
        if resource is not None:
            slot = self._slot(resource, event, step_no)
            if self.holdings.get(slot) == event.component:
                del self.holdings[slot]

    def held_by(self, component: str) -> list[tuple[str, str | None]]:
        slots = [s for s, holder in self.holdings.items() if holder == component]
        return sorted(slots, key=lambda s: (s[0], s[1] or ""))


def run_scenario(
    scenario: Scenario,
    registry: ModuleRegistry | None = None,
    resources: tuple[ResourceModel, ...] = BUILTIN_RESOURCES,
) -> tuple[Trace, LeakReport]:
    """Execute a scenario and report resource leaks and denied acquires.

    Lifecycle steps must be enabled in the lifecycle model at execution
    time; the simulator refuses to emit an illegal callback sequence even
    for scenarios that misuse APIs. When a registry is given, every
    generated event runs through enforcement and the enforced output is
    what updates the resource state, so a synthesized release really frees
    the resource before the leak check fires.
    """
    model = scenario.lifecycle
    inactive = inactive_states(model)
    lifecycle_state = {c: model.initial for c in scenario.components}
    state = _ResourceState(resources)
    report = LeakReport()
    emitted: list[Event] = []
    seq = 0

    def process(event: Event, step_no: int) -> None:
        outputs = [event] if registry is None else enforce_event(registry, event)
        for out in outputs:
            state.apply(out, step_no, seq, report.denied)
        emitted.extend(outputs)

    for step_no, step in enumerate(scenario.steps, 1):
        if isinstance(step, ToggleStep):
            if registry is None:
                continue
            try:
                registry.set_active(step.module, step.active)
            except UnknownModuleError as err:
                raise ScenarioError(str(err), step_no) from err
            continue
        seq += 1
        if isinstance(step, LifecycleStep):
            current = lifecycle_state[step.component]
            target = model.target(current, step.callback)
            if target is None:
                raise ScenarioError(
                    f"{step.callback} not enabled in state {current} "
                    f"for component {step.component}",
                    step_no,
                )
            process(
                Event(EventKind.CALLBACK, step.callback, step.component, seq), step_no
            )
            lifecycle_state[step.component] = target
            if target in inactive:
                for resource, key in state.held_by(step.component):
                    report.leaks.append(
                        LeakRecord(step.component, target, resource, key, seq)
                    )
        else:
            process(
                Event(EventKind.API_CALL, step.name, step.component, seq, attrs=step.attrs),
                step_no,
            )
    return Trace.renumbered(emitted), report
