import json
from importlib import resources

import pytest

from dogtouch.action_engine import (
    POSTURES,
    ActionCommand,
    ActionTableError,
    DogState,
    Rejection,
    UnknownActionError,
    apply_command,
    dispatch,
    load_action_table,
    step,
)
from dogtouch.taxonomy import load_taxonomy


@pytest.fixture(scope="module")
def taxonomy():
    return load_taxonomy()


@pytest.fixture(scope="module")
def table(taxonomy):
    return load_action_table(taxonomy=taxonomy)


def default_doc():
    raw = resources.files("dogtouch.data").joinpath("actions.json").read_text("utf-8")
    return json.loads(raw)


class TestActionTable:
    def test_default_has_32_entries(self, table):
        assert len(table) == 32

    def test_missing_entry_named(self, taxonomy):
        doc = default_doc()
        doc["actions"].pop("nod")
        with pytest.raises(ActionTableError, match="nod"):
            load_action_table(doc, taxonomy)

    def test_non_performable_entry_rejected(self, taxonomy):
        doc = default_doc()
        doc["actions"]["tumble"] = {"duration_ticks": 5, "valid_from": ["standing"],
                                    "resulting_posture": None}
        with pytest.raises(ActionTableError, match="tumble"):
            load_action_table(doc, taxonomy)

    def test_zero_duration_rejected(self, taxonomy):
        doc = default_doc()
        doc["actions"]["nod"]["duration_ticks"] = 0
        with pytest.raises(ActionTableError, match="duration"):
            load_action_table(doc, taxonomy)

    def test_unknown_posture_rejected(self, taxonomy):
        doc = default_doc()
        doc["actions"]["nod"]["valid_from"] = ["flying"]
        with pytest.raises(ActionTableError, match="flying"):
            load_action_table(doc, taxonomy)

    def test_every_performable_action_reachable(self, table, taxonomy):
        for action in taxonomy.performable_actions:
            spec = table.spec(action.name)
            assert spec.valid_from, action.name
            assert set(spec.valid_from) <= set(POSTURES)


class TestDispatch:
    def test_head_action_while_standing(self, table, taxonomy):
        cmd = dispatch(DogState(), "nod", table, taxonomy)
        assert isinstance(cmd, ActionCommand)
        assert cmd.duration_ticks == table.spec("nod").duration_ticks
        assert cmd.resulting_posture == "standing"  # null entry keeps posture
        assert dict(cmd.motor_params)["cycles"] == 2

    def test_non_performable_rejected(self, table, taxonomy):
        # tumble is modeled but the robot cannot press its back
        out = dispatch(DogState(), "tumble", table, taxonomy)
        assert out == Rejection(action="tumble", reason="not_performable")

    def test_busy_rejects_everything(self, table, taxonomy):
        cmd = dispatch(DogState(), "walk_forward", table, taxonomy)
        busy = apply_command(DogState(), cmd)
        for name in ("nod", "tumble", "sit"):
            out = dispatch(busy, name, table, taxonomy)
            assert out == Rejection(action=name, reason="busy")

    def test_posture_conflict(self, table, taxonomy):
        lying = DogState(posture="lying")
        out = dispatch(lying, "walk_forward", table, taxonomy)
        assert out == Rejection(action="walk_forward", reason="posture_conflict")

    def test_unknown_action_raises(self, table, taxonomy):
        with pytest.raises(UnknownActionError):
            dispatch(DogState(), "moonwalk", table, taxonomy)

    def test_never_commands_non_performable(self, table, taxonomy):
        # exhaustive: all 44 actions from all 4 postures, idle state
        for action in taxonomy.actions:
            for posture in POSTURES:
                out = dispatch(DogState(posture=posture), action.name, table, taxonomy)
                if isinstance(out, ActionCommand):
                    assert action.performable

    def test_every_performable_dispatchable_somewhere(self, table, taxonomy):
        for action in taxonomy.performable_actions:
            outcomes = [
                dispatch(DogState(posture=p), action.name, table, taxonomy)
                for p in POSTURES
            ]
            assert any(isinstance(o, ActionCommand) for o in outcomes), action.name


class TestStep:
    def test_idle_unchanged(self):
        s = DogState(posture="sitting")
        assert step(s, 100) == s

    def test_countdown_and_posture(self, table, taxonomy):
        cmd = dispatch(DogState(), "sit", table, taxonomy)
        s = apply_command(DogState(), cmd)
        s = step(s, cmd.duration_ticks)
        assert not s.busy
        assert s.posture == "sitting"
        assert s.pose_params == cmd.motor_params

    def test_partial_steps_additive(self, table, taxonomy):
        cmd = dispatch(DogState(), "lie_down", table, taxonomy)
        start = apply_command(DogState(), cmd)
        assert step(step(start, 3), 2) == step(start, 5)
        assert step(step(start, 7), 5) == step(start, 12)

    def test_mid_execution_keeps_action(self, table, taxonomy):
        cmd = dispatch(DogState(), "spin_in_place", table, taxonomy)
        s = step(apply_command(DogState(), cmd), 10)
        assert s.busy
        assert s.remaining_ticks == cmd.duration_ticks - 10
        assert s.current_action == "spin_in_place"

    def test_negative_ticks_rejected(self):
        with pytest.raises(ValueError):
            step(DogState(), -1)
