import json

import numpy as np
import pytest

from lfp.dataset import (
    DemoPlan, Demonstration, Sweep, TRAIN, VALIDATION, default_demo_plan, fnv1a64,
    generate_all, generate_expert_demos, generate_primitive_demos, load_dataset, save_dataset,
)
from lfp.grid import ACTIONS, Action, GridPos, TaskId, get_task, start_states
from lfp.render import RenderConfig, render

CFG = RenderConfig()


def test_fnv1a64_reference_vectors():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_expert_demo_examples():
    plan = DemoPlan(TaskId.MOVE_TO_POS, (GridPos(12, 8),), (GridPos(0, 0),))
    d = generate_expert_demos(TaskId.MOVE_TO_POS, plan, CFG)[0]
    assert d.states == [GridPos(12, 8), GridPos(13, 8), GridPos(14, 8)]
    assert all(np.array_equal(f, render(p, CFG)) for p, f in zip(d.states, d.frames))

    plan = DemoPlan(TaskId.PUSH_PULL, (GridPos(0, 6),), (GridPos(0, 7),))
    d = generate_expert_demos(TaskId.PUSH_PULL, plan, CFG)[0]
    assert d.states == [GridPos(x, 6) for x in range(15)]


def test_expert_demos_use_arm_flag():
    cfg = RenderConfig(arm_enabled=True)
    demos = generate_expert_demos(TaskId.PUSH_PULL, default_demo_plan(TaskId.PUSH_PULL), cfg)
    assert all(d.arm_visible for d in demos)
    assert np.array_equal(demos[0].frames[0], render(demos[0].states[0], cfg, True))
    prims = generate_primitive_demos(Action.UP, default_demo_plan(TaskId.PUSH_PULL), cfg)
    assert not any(d.arm_visible for d in prims)


def test_expert_demo_rejects_ineligible_start():
    plan = DemoPlan(TaskId.MOVE_TO_POS, (GridPos(1, 1),), (GridPos(0, 0),))
    with pytest.raises(ValueError):
        generate_expert_demos(TaskId.PUSH_PULL, plan, CFG)


def test_primitive_sweeps():
    plan = DemoPlan(TaskId.MOVE_TO_POS, (GridPos(0, 0),), (GridPos(0, 1),),
                    {Action.UP: (Sweep(GridPos(3, 0), Action.UP), Sweep(GridPos(9, 0), Action.UP))})
    demos = generate_primitive_demos(Action.UP, plan, CFG)
    assert len(demos) == 2
    assert demos[0].states == [GridPos(3, y) for y in range(9)]
    assert all(not d.arm_visible for d in demos)
    with pytest.raises(ValueError):
        generate_primitive_demos(Action.DOWN, plan, CFG)


@pytest.mark.parametrize("task", list(TaskId))
def test_default_plan_invariants(task):
    plan = default_demo_plan(task)
    assert not set(plan.train_starts) & set(plan.val_starts)
    assert set(plan.train_starts) | set(plan.val_starts) < get_task(task).starts
    for a in ACTIONS:
        demos = generate_primitive_demos(a, plan, CFG)
        assert len(demos) == 2
        assert all(d.label is a for d in demos)


def test_push_pull_plan_holds_out_rows_3_and_5():
    plan = default_demo_plan(TaskId.PUSH_PULL)
    demos = generate_expert_demos(TaskId.PUSH_PULL, plan, CFG)
    rows = {p.y for d in demos for p in d.states}
    assert rows == {0, 1, 2, 6, 7, 8}
    train_rows = {p.y for d in demos if d.role == TRAIN for p in d.states}
    val_rows = {p.y for d in demos if d.role == VALIDATION for p in d.states}
    assert train_rows == {0, 2, 6, 8} and val_rows == {1, 7}


def test_move_to_pos_plan_covers_the_turn():
    plan = default_demo_plan(TaskId.MOVE_TO_POS)
    demos = [d for d in generate_expert_demos(TaskId.MOVE_TO_POS, plan, CFG) if d.role == TRAIN]
    turns = [(a, b, c) for d in demos for a, b, c in zip(d.states, d.states[1:], d.states[2:])
             if b.x == 14 and a.x == 13 and c.y == b.y + 1]
    assert turns
    seen = {p for d in demos for p in d.states}
    assert len(seen) < len(start_states(get_task(TaskId.MOVE_TO_POS)))


def test_plan_validation():
    with pytest.raises(ValueError):
        DemoPlan(TaskId.MOVE_TO_POS, (GridPos(0, 0),), (GridPos(0, 0),))
    with pytest.raises(ValueError):
        DemoPlan(TaskId.PUSH_PULL, (GridPos(3, 4),), ())
    everything = tuple(start_states(get_task(TaskId.MOVE_TO_POS)))
    with pytest.raises(ValueError):
        DemoPlan(TaskId.MOVE_TO_POS, everything, ())


def test_plan_dict_round_trip():
    plan = default_demo_plan(TaskId.PUSH_PULL)
    assert DemoPlan.from_dict(json.loads(json.dumps(plan.to_dict()))) == plan


def test_demonstration_invariants():
    f = render(GridPos(0, 0), CFG)
    with pytest.raises(ValueError):
        Demonstration(Action.UP, [GridPos(0, 0)], [f])
    with pytest.raises(ValueError):
        Demonstration(Action.UP, [GridPos(0, 0), GridPos(0, 2)], [f, f])
    with pytest.raises(ValueError):
        Demonstration(Action.UP, [GridPos(0, 0), GridPos(0, 1)], [f])
    # a clamped repeat is a legal transition
    Demonstration(Action.UP, [GridPos(0, 8), GridPos(0, 8)], [f, f])


@pytest.fixture(scope="module")
def saved(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    plan = default_demo_plan(TaskId.MOVE_TO_POS)
    demos = generate_all(plan, CFG)
    save_dataset(demos, out, CFG, seed=7)
    return out, demos


def test_save_load_round_trip(saved):
    out, demos = saved
    ds = load_dataset(out)
    assert ds.seed == 7 and ds.render_config == CFG
    assert len(ds.demos) == len(demos)
    for a, b in zip(ds.demos, demos):
        assert (a.label, a.role, a.arm_visible, a.states) == (b.label, b.role, b.arm_visible, b.states)
        assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames))
    assert {d.label for d in ds.demos} == {TaskId.MOVE_TO_POS, *ACTIONS}


def test_manifest_schema(saved):
    out, _ = saved
    m = json.loads((out / "manifest.json").read_text())
    assert set(m) == {"render_config", "seed", "demos"}
    d = m["demos"][0]
    assert set(d) == {"label", "role", "arm_visible", "states", "frames"}
    assert set(d["frames"][0]) == {"path", "fnv1a64"}
    assert d["frames"][0]["path"].endswith("frame_0000.ppm")
    # no expert actions anywhere in the manifest
    assert "action" not in json.dumps(d)


def test_regeneration_is_byte_identical(saved, tmp_path):
    out, demos = saved
    save_dataset(generate_all(default_demo_plan(TaskId.MOVE_TO_POS), CFG), tmp_path, CFG, seed=7)
    assert (tmp_path / "manifest.json").read_bytes() == (out / "manifest.json").read_bytes()
    first = sorted(p.relative_to(out) for p in out.rglob("*.ppm"))
    assert first == sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*.ppm"))
    assert all((out / p).read_bytes() == (tmp_path / p).read_bytes() for p in first)


def _copy(src, dst):
    import shutil
    shutil.copytree(src, dst)
    return dst


def test_load_rejects_dangling_reference(saved, tmp_path):
    d = _copy(saved[0], tmp_path / "c")
    (d / "demo_000" / "frame_0001.ppm").unlink()
    with pytest.raises(FileNotFoundError):
        load_dataset(d)


def test_load_rejects_checksum_mismatch(saved, tmp_path):
    d = _copy(saved[0], tmp_path / "c")
    p = d / "demo_000" / "frame_0001.ppm"
    data = bytearray(p.read_bytes())
    data[-1] ^= 0xFF
    p.write_bytes(bytes(data))
    with pytest.raises(ValueError, match="checksum"):
        load_dataset(d)


def test_load_rejects_state_frame_mismatch(saved, tmp_path):
    d = _copy(saved[0], tmp_path / "c")
    m = json.loads((d / "manifest.json").read_text())
    m["demos"][0]["states"][0] = [5, 5]
    (d / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(ValueError):
        load_dataset(d)


def test_load_rejects_malformed_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(ValueError):
        load_dataset(tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"seed": 1}))
    with pytest.raises(ValueError):
        load_dataset(tmp_path)
