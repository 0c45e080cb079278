import numpy as np
import pytest

from dogtouch.frames import WINDOW_FRAMES, assemble_canvas
from dogtouch.simulate import (
    ZERO_NOISE,
    ActorProfile,
    NoiseModel,
    build_trajectory,
    DEFAULT_SCRIPTS,
    generate_dataset,
    scripted_stream,
    sensor_range_map,
    simulate_tick,
    split_dataset,
    synthesize_gesture,
)
from dogtouch.taxonomy import load_taxonomy


@pytest.fixture(scope="module")
def taxonomy():
    return load_taxonomy()


def region_mask(region):
    mask = np.zeros((64, 128), dtype=bool)
    mask[region.row : region.row + region.height, region.col : region.col + region.width] = True
    return mask


class TestSimulateTick:
    def test_empty_scene_zero_noise(self, taxonomy):
        boards = simulate_tick([], tick=3, noise=ZERO_NOISE, taxonomy=taxonomy)
        assert len(boards) == 8
        assert all(b.tick == 3 for b in boards)
        assert all(not b.samples.any() for b in boards)

    def test_head_press_touches_only_board_7(self, taxonomy):
        head = taxonomy.part("head")
        script = DEFAULT_SCRIPTS["press"]
        rng = np.random.default_rng(0)
        traj = build_trajectory(script, head, rng)
        scene = [(traj, 0)]
        active = [t for t in range(WINDOW_FRAMES)
                  if any(c.frame == t for c in traj.contact_path)]
        boards = simulate_tick(scene, tick=active[len(active) // 2], noise=ZERO_NOISE,
                               taxonomy=taxonomy)
        by_id = {b.board_id: b for b in boards}
        assert by_id[7].samples.any()
        for i in range(7):
            assert not by_id[i].samples.any()

    def test_broadcast_sync_and_determinism(self, taxonomy):
        rng = np.random.default_rng(1)
        traj = build_trajectory(DEFAULT_SCRIPTS["rub"], taxonomy.part("back_front"), rng)
        noise = NoiseModel(seed=99)
        a = simulate_tick([(traj, 0)], 5, noise, taxonomy)
        b = simulate_tick([(traj, 0)], 5, noise, taxonomy)
        assert a == b
        assert len({f.tick for f in a}) == 1

    def test_negative_tick_rejected(self, taxonomy):
        with pytest.raises(ValueError):
            simulate_tick([], -1, ZERO_NOISE, taxonomy)


class TestNoise:
    def test_deterministic_per_tick(self):
        n = NoiseModel(baseline_std=2.0, spike_probability=1e-3, seed=7)
        assert np.array_equal(n.field(4), n.field(4))
        assert not np.array_equal(n.field(4), n.field(5))

    def test_noise_stays_in_byte_range(self, taxonomy):
        noise = NoiseModel(baseline_std=50.0, spike_probability=0.5, seed=1)
        boards = simulate_tick([], 0, noise, taxonomy)
        canvas = assemble_canvas(boards)
        assert canvas.pixels.min() >= 0 and canvas.pixels.max() <= 255


class TestSynthesize:
    def test_none_class_is_silent(self, taxonomy):
        none_class = taxonomy.gesture_class_of("none", None)
        w = synthesize_gesture(none_class, seed=5, noise=ZERO_NOISE, taxonomy=taxonomy)
        assert not w.stack().any()
        assert w.label == none_class.class_id

    def test_deterministic(self, taxonomy):
        c = taxonomy.gesture_class_of("pat", "head")
        a = synthesize_gesture(c, seed=42, noise=NoiseModel(seed=3), taxonomy=taxonomy)
        b = synthesize_gesture(c, seed=42, noise=NoiseModel(seed=3), taxonomy=taxonomy)
        assert a == b

    def test_distinct_seeds_vary(self, taxonomy):
        c = taxonomy.gesture_class_of("stroke", "back_rear")
        a = synthesize_gesture(c, seed=1, noise=ZERO_NOISE, taxonomy=taxonomy)
        b = synthesize_gesture(c, seed=2, noise=ZERO_NOISE, taxonomy=taxonomy)
        assert a != b

    def test_window_shape_and_ticks(self, taxonomy):
        c = taxonomy.gesture_class_of("hug", "left_flank")
        w = synthesize_gesture(c, seed=9, noise=ZERO_NOISE, taxonomy=taxonomy)
        assert len(w.frames) == 20
        assert [f.tick for f in w.frames] == list(range(20))

    def test_contact_confined_to_part_region_all_classes(self, taxonomy):
        # exhaustive pixel-membership check over every class, noise-free
        for c in taxonomy.classes:
            w = synthesize_gesture(c, seed=c.class_id + 100, noise=ZERO_NOISE,
                                   taxonomy=taxonomy)
            touched = w.stack().max(axis=0) > 0
            if c.part is None:
                assert not touched.any()
                continue
            assert touched.any(), f"{c.token} produced no contact"
            outside = touched & ~region_mask(c.part.region)
            assert not outside.any(), f"{c.token} leaked outside its region"

    def test_different_parts_disjoint(self, taxonomy):
        a = synthesize_gesture(taxonomy.gesture_class_of("pat", "head"), 1, ZERO_NOISE, taxonomy)
        b = synthesize_gesture(taxonomy.gesture_class_of("pat", "chin"), 1, ZERO_NOISE, taxonomy)
        ta = a.stack().max(axis=0) > 0
        tb = b.stack().max(axis=0) > 0
        assert not (ta & tb).any()

    def test_actor_profile_changes_output(self, taxonomy):
        c = taxonomy.gesture_class_of("massage", "right_hip")
        base = synthesize_gesture(c, 7, ZERO_NOISE, taxonomy)
        jittered = synthesize_gesture(c, 7, ZERO_NOISE, taxonomy,
                                      actor=ActorProfile(speed=1.1, pressure=1.2, radius=1.1))
        assert base != jittered


class TestDataset:
    def test_paper_scale_counts(self, taxonomy):
        ds = generate_dataset(20, 9, seed=0, taxonomy=taxonomy)
        assert len(ds) == 14_580

    def test_empty(self, taxonomy):
        assert len(generate_dataset(0, 9, seed=0, taxonomy=taxonomy)) == 0

    def test_small_balanced(self, taxonomy):
        ds = generate_dataset(2, 1, seed=0, taxonomy=taxonomy)
        assert len(ds) == 162
        labels = ds.labels
        counts = np.bincount(labels, minlength=81)
        assert (counts == 2).all()

    def test_window_reproducible(self, taxonomy):
        ds = generate_dataset(1, 2, seed=3, taxonomy=taxonomy)
        i = 17
        assert ds.window(i) == ds.window(i)

    def test_manifest(self, taxonomy):
        ds = generate_dataset(2, 3, seed=11, taxonomy=taxonomy)
        m = ds.manifest()
        assert m["count"] == 486
        assert m["seed"] == 11
        assert m["per_class_counts"]["0"] == 6

    def test_split_paper_arithmetic(self, taxonomy):
        ds = generate_dataset(20, 9, seed=0, taxonomy=taxonomy)
        train, test = split_dataset(ds, 0.9, seed=1)
        assert len(train) == 13_122
        assert len(test) == 1_458

    def test_split_disjoint_exhaustive_stratified(self, taxonomy):
        ds = generate_dataset(4, 2, seed=5, taxonomy=taxonomy)
        train, test = split_dataset(ds, 0.75, seed=2)
        assert len(train) + len(test) == len(ds)
        train_items = {(i.class_id, i.actor, i.rep) for i in train.items}
        test_items = {(i.class_id, i.actor, i.rep) for i in test.items}
        assert not train_items & test_items
        train_counts = np.bincount(train.labels, minlength=81)
        assert (train_counts == 6).all()  # floor(8 * 0.75)

    def test_split_deterministic(self, taxonomy):
        ds = generate_dataset(2, 2, seed=5, taxonomy=taxonomy)
        a_train, a_test = split_dataset(ds, 0.5, seed=9)
        b_train, b_test = split_dataset(ds, 0.5, seed=9)
        assert [i.rep for i in a_train.items] == [i.rep for i in b_train.items]
        assert [i.rep for i in a_test.items] == [i.rep for i in b_test.items]

    def test_split_fraction_one(self, taxonomy):
        ds = generate_dataset(1, 1, seed=0, taxonomy=taxonomy)
        train, test = split_dataset(ds, 1.0, seed=0)
        assert len(test) == 0 and len(train) == 81


class TestScriptedStream:
    def test_bounded_stream_layout(self, taxonomy):
        events = 0
        ticks = []
        for canvas, label in scripted_stream(taxonomy, seed=4, noise=ZERO_NOISE, gestures=3):
            ticks.append(canvas.tick)
            if label is not None:
                events += 1
        assert events == 3
        assert ticks == list(range(len(ticks)))

    def test_foreleg_range_map(self, taxonomy):
        rm = sensor_range_map(taxonomy)
        fl = taxonomy.part("left_foreleg").region
        assert rm[fl.row, fl.col] == 25.0
        assert rm[0, 0] == 2.0
