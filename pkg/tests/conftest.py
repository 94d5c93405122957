from pathlib import Path

import pytest

from enforcekit import (
    Event,
    EventUniverse,
    parse_monitor,
    parse_policy,
)

ROOT = Path(__file__).resolve().parent.parent
CATALOG = ROOT / "catalog"
SCENARIOS = ROOT / "scenarios"

CATALOG_POLICIES = ["camera_release.policy", "osgi_unregister.policy", "react_cleanup.policy"]
CATALOG_MONITORS = ["camera.monitor", "osgi.monitor", "react.monitor"]


@pytest.fixture(scope="session")
def camera_policy():
    return parse_policy((CATALOG / "camera_release.policy").read_text())


@pytest.fixture(scope="session")
def camera_monitor():
    return parse_monitor((CATALOG / "camera.monitor").read_text())


@pytest.fixture(scope="session")
def osgi_policy():
    return parse_policy((CATALOG / "osgi_unregister.policy").read_text())


@pytest.fixture(scope="session")
def osgi_monitor():
    return parse_monitor((CATALOG / "osgi.monitor").read_text())


@pytest.fixture(scope="session")
def react_policy():
    return parse_policy((CATALOG / "react_cleanup.policy").read_text())


@pytest.fixture(scope="session")
def react_monitor():
    return parse_monitor((CATALOG / "react.monitor").read_text())


def camera_alphabet() -> tuple[Event, ...]:
    """The concrete event universe used throughout the camera properties."""
    return (
        Event.api("Camera.open", "A1"),
        Event.api("Camera.release", "A1"),
        Event.cb("onPause", "A1"),
        Event.cb("onResume", "A1"),
    )


@pytest.fixture(scope="session")
def camera_universe_len3() -> EventUniverse:
    return EventUniverse(camera_alphabet(), max_len=3)
