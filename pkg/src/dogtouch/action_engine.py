"""Robot-dog action execution model.

Predicted action words become parameterized commands looked up in a
data-driven action table (the analog of per-action motor parameter
files). Dispatch enforces the safety gates: only the 32 performable
actions yield commands, one action runs at a time, and posture
compatibility is checked against the table. Time advances in 10 Hz
ticks via a pure state-transition function.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .taxonomy import Taxonomy

POSTURES = ("standing", "sitting", "lying", "crouching")
ACTION_TABLE_SCHEMA_VERSION = 1

REASON_NOT_PERFORMABLE = "not_performable"
REASON_POSTURE_CONFLICT = "posture_conflict"
REASON_BUSY = "busy"


class ActionTableError(ValueError):
    """Action table config fails validation."""


class UnknownActionError(KeyError):
    """Action name absent from the taxonomy (distinct from a Rejection)."""


@dataclass(frozen=True)
class ActionSpec:
    name: str
    duration_ticks: int
    valid_from: tuple
    resulting_posture: str | None  # None = keep current posture
    motor_params: tuple  # sorted (name, value) pairs


@dataclass(frozen=True)
class ActionCommand:
    action: str
    duration_ticks: int
    motor_params: tuple
    resulting_posture: str


@dataclass(frozen=True)
class Rejection:
    action: str
    reason: str


@dataclass(frozen=True)
class DogState:
    posture: str = "standing"
    command: ActionCommand | None = None
    remaining_ticks: int = 0
    pose_params: tuple = ()  # last completed action's motor params, for display

    @property
    def busy(self) -> bool:
        return self.command is not None

    @property
    def current_action(self) -> str | None:
        return self.command.action if self.command else None


class ActionTable:
    def __init__(self, specs, schema_version: int = ACTION_TABLE_SCHEMA_VERSION):
        self.schema_version = schema_version
        self.specs = {s.name: s for s in specs}

    def __len__(self) -> int:
        return len(self.specs)

    def spec(self, name: str) -> ActionSpec:
        return self.specs[name]


def load_action_table(source=None, taxonomy: Taxonomy | None = None) -> ActionTable:
    """Load and validate the action table against the taxonomy.

    Every performable action must have exactly one entry; entries for
    unknown or non-performable actions are rejected, as are durations
    below one tick and unknown postures.
    """
    if source is None:
        doc = json.loads(
            resources.files("dogtouch.data").joinpath("actions.json").read_text("utf-8")
        )
    elif isinstance(source, dict):
        doc = source
    elif isinstance(source, (str, Path)) and "\n" not in str(source) and Path(source).exists():
        doc = json.loads(Path(source).read_text("utf-8"))
    elif isinstance(source, str):
        doc = json.loads(source)
    else:
        raise ActionTableError(f"cannot load action table from {source!r}")

    if doc.get("schema_version") != ACTION_TABLE_SCHEMA_VERSION:
        raise ActionTableError(f"unsupported schema_version {doc.get('schema_version')!r}")

    specs = []
    for name, entry in doc["actions"].items():
        duration = int(entry["duration_ticks"])
        if duration < 1:
            raise ActionTableError(f"action {name!r}: duration_ticks must be >= 1")
        valid_from = tuple(entry["valid_from"])
        if not valid_from:
            raise ActionTableError(f"action {name!r}: needs at least one valid posture")
        for p in valid_from:
            if p not in POSTURES:
                raise ActionTableError(f"action {name!r}: unknown posture {p!r}")
        resulting = entry.get("resulting_posture")
        if resulting is not None and resulting not in POSTURES:
            raise ActionTableError(f"action {name!r}: unknown resulting posture {resulting!r}")
        params = entry.get("motor_params", {})
        if any(not isinstance(v, (int, float)) for v in params.values()):
            raise ActionTableError(f"action {name!r}: motor params must be numeric")
        specs.append(ActionSpec(
            name=name, duration_ticks=duration, valid_from=valid_from,
            resulting_posture=resulting, motor_params=tuple(sorted(params.items())),
        ))

    if taxonomy is not None:
        performable = {a.name for a in taxonomy.performable_actions}
        listed = {s.name for s in specs}
        missing = sorted(performable - listed)
        if missing:
            raise ActionTableError(f"action table is missing performable actions: {missing}")
        extra = sorted(listed - performable)
        if extra:
            raise ActionTableError(
                f"action table lists actions that are unknown or not performable: {extra}"
            )
    return ActionTable(specs, schema_version=doc["schema_version"])


def dispatch(state: DogState, action_name: str, table: ActionTable,
             taxonomy: Taxonomy):
    """Resolve an action word to a command or a machine-readable rejection.

    Unknown actions raise UnknownActionError; everything else is a
    normal outcome. While a command is executing every request is
    rejected as busy, mirroring a safety-first controller.
    """
    try:
        word = taxonomy.action(action_name)
    except Exception:
        raise UnknownActionError(action_name) from None
    if state.busy:
        return Rejection(action=action_name, reason=REASON_BUSY)
    if not word.performable:
        return Rejection(action=action_name, reason=REASON_NOT_PERFORMABLE)
    spec = table.spec(action_name)
    if state.posture not in spec.valid_from:
        return Rejection(action=action_name, reason=REASON_POSTURE_CONFLICT)
    return ActionCommand(
        action=action_name,
        duration_ticks=spec.duration_ticks,
        motor_params=spec.motor_params,
        resulting_posture=spec.resulting_posture or state.posture,
    )


def apply_command(state: DogState, command: ActionCommand) -> DogState:
    return replace(state, command=command, remaining_ticks=command.duration_ticks)


def step(state: DogState, ticks: int) -> DogState:
    """Advance time; pure and additive in ticks."""
    if ticks < 0:
        raise ValueError("ticks must be non-negative")
    if not state.busy or ticks == 0:
        return state
    if ticks < state.remaining_ticks:
        return replace(state, remaining_ticks=state.remaining_ticks - ticks)
    command = state.command
    return DogState(
        posture=command.resulting_posture,
        command=None,
        remaining_ticks=0,
        pose_params=command.motor_params,
    )
