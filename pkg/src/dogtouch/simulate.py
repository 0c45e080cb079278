"""Sensor-bus simulator and procedural gesture synthesis.

Stands in for the physical sensor rig and for human data collection: a
scene of touch trajectories is rasterized into kg-space contact stamps,
quantized per sensor range, perturbed by a seeded noise model and split
into the 8 broadcast-synchronized board frames per tick.

Each gesture kind carries a motion script (family + parameter ranges).
The scripts are tuned so that kinds sharing a family still differ in
contact size, rhythm, movement extent or on/off pattern; that
separation is what the classifier learns. Distinct seeds vary every
script parameter; actor indices add multiplicative jitter on top (a
cheap stand-in for different people touching differently).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .frames import (
    CANVAS_COLS,
    CANVAS_ROWS,
    GestureWindow,
    TactileCanvas,
    WINDOW_FRAMES,
    disassemble_canvas,
)
from .taxonomy import GestureClass, Region, Taxonomy, TaxonomyError

BODY_RANGE_KG = 2.0       # 32x32 body arrays and the 13x16 head/cheek/chin arrays
FORELEG_RANGE_KG = 25.0   # single-point foreleg sensors
FORELEG_PARTS = ("left_foreleg", "right_foreleg")

MOTION_FAMILIES = ("static_press", "linear_sweep", "oscillation", "multi_tap", "grip", "silence")


@dataclass(frozen=True)
class NoiseModel:
    """Residual sensor noise: per-pixel gaussian baseline plus rare spikes.

    Deterministic: the field at tick t is a pure function of (seed, t).
    """

    baseline_std: float = 2.0
    spike_probability: float = 1e-4
    seed: int = 0

    def field(self, tick: int) -> np.ndarray:
        """Signed noise image for one tick, int16 (64, 128)."""
        if self.baseline_std == 0 and self.spike_probability == 0:
            return np.zeros((CANVAS_ROWS, CANVAS_COLS), dtype=np.int16)
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, tick)))
        noise = np.zeros((CANVAS_ROWS, CANVAS_COLS), dtype=np.int16)
        if self.baseline_std > 0:
            noise += np.rint(
                rng.normal(0.0, self.baseline_std, size=noise.shape)
            ).astype(np.int16)
        if self.spike_probability > 0:
            spikes = rng.random(noise.shape) < self.spike_probability
            noise[spikes] += rng.integers(4, 13, size=int(spikes.sum()), dtype=np.int16)
        return noise


ZERO_NOISE = NoiseModel(baseline_std=0.0, spike_probability=0.0, seed=0)


@dataclass(frozen=True)
class ContactPoint:
    """One elliptical contact at one frame of a trajectory."""

    frame: int
    row: float
    col: float
    radius_r: float
    radius_c: float
    peak_kg: float


@dataclass(frozen=True)
class TouchTrajectory:
    """A scripted contact path confined to one body part region."""

    part: str | None  # None only for silence
    contact_path: tuple
    duration_frames: int

    def __post_init__(self):
        frames = [c.frame for c in self.contact_path]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("contact_path frame indices must be strictly increasing")


@dataclass(frozen=True)
class GestureScript:
    """Motion family and parameter ranges for one gesture kind.

    Ranges are (lo, hi) sampled uniformly per synthesis; units: pressure
    in kg, radius in pixels, cycles per window, amplitude as a fraction
    of the region half-extent, taps as counts, tap_len/duration in frames.
    """

    kind: str
    family: str
    pressure_kg: tuple = (0.4, 0.6)
    radius_px: tuple = (3.0, 4.0)
    aspect: tuple = (0.7, 1.4)          # radius_c / radius_r
    duration: tuple = (16, 20)
    cycles: tuple = (2.0, 3.0)          # oscillation only
    amplitude: tuple = (0.4, 0.7)       # oscillation only
    pressure_mod: float = 0.0           # oscillation: fraction of pressure that pulses
    center_jitter: float = 0.0          # per-frame random center wobble, px
    taps: tuple = (3, 5)                # multi_tap only
    tap_len: tuple = (1, 2)             # multi_tap only
    cover: tuple = (0.8, 1.1)           # grip only: radius as fraction of half-extent
    pulses: tuple = (0.0, 0.0)          # grip only: pressure pulsation cycles

    def __post_init__(self):
        if self.family not in MOTION_FAMILIES:
            raise ValueError(f"unknown motion family {self.family!r}")


# Script defaults per gesture kind. Kinds sharing a family are separated by
# pressure band, contact size, rhythm, or movement extent.
DEFAULT_SCRIPTS = {
    "none": GestureScript(kind="none", family="silence"),
    "stroke": GestureScript(
        kind="stroke", family="linear_sweep",
        pressure_kg=(0.30, 0.50), radius_px=(2.2, 3.2), duration=(14, 20),
    ),
    "pat": GestureScript(
        kind="pat", family="multi_tap",
        pressure_kg=(0.50, 0.80), radius_px=(3.0, 4.2), taps=(4, 6), tap_len=(2, 3),
    ),
    "rub": GestureScript(
        kind="rub", family="oscillation",
        pressure_kg=(0.45, 0.70), radius_px=(2.6, 3.6), cycles=(2.0, 3.0),
        amplitude=(0.45, 0.7),
    ),
    "scratch": GestureScript(
        kind="scratch", family="oscillation",
        pressure_kg=(0.22, 0.40), radius_px=(1.2, 2.0), cycles=(3.5, 4.5),
        amplitude=(0.25, 0.4),
    ),
    "massage": GestureScript(
        kind="massage", family="oscillation",
        pressure_kg=(0.95, 1.40), radius_px=(5.0, 6.5), cycles=(1.2, 2.2),
        amplitude=(0.25, 0.4),
    ),
    "squeeze": GestureScript(
        kind="squeeze", family="grip",
        pressure_kg=(1.20, 1.80), cover=(0.55, 0.75), pulses=(2.0, 3.0),
    ),
    "tickle": GestureScript(
        kind="tickle", family="oscillation",
        pressure_kg=(0.12, 0.22), radius_px=(1.4, 2.2), cycles=(6.5, 8.0),
        amplitude=(0.55, 0.75), center_jitter=1.0,
    ),
    "press": GestureScript(
        kind="press", family="static_press",
        pressure_kg=(1.30, 1.90), radius_px=(3.5, 5.0), duration=(15, 20),
    ),
    "poke": GestureScript(
        kind="poke", family="multi_tap",
        pressure_kg=(1.50, 2.00), radius_px=(1.0, 1.6), taps=(1, 2), tap_len=(2, 3),
    ),
    "hug": GestureScript(
        kind="hug", family="grip",
        pressure_kg=(0.90, 1.50), cover=(0.9, 1.2), pulses=(0.0, 0.0),
    ),
    "handshake": GestureScript(
        kind="handshake", family="oscillation",
        pressure_kg=(6.0, 14.0), radius_px=(1.0, 1.5), cycles=(3.0, 5.0),
        amplitude=(0.0, 0.1), pressure_mod=1.0,
    ),
    "handhold": GestureScript(
        kind="handhold", family="static_press",
        pressure_kg=(5.0, 10.0), radius_px=(1.0, 1.5), duration=(18, 20),
    ),
}


@dataclass(frozen=True)
class ActorProfile:
    """Per-actor multiplicative jitter applied to script parameters."""

    speed: float = 1.0
    pressure: float = 1.0
    radius: float = 1.0

    @classmethod
    def derive(cls, root_seed: int, actor: int) -> "ActorProfile":
        rng = np.random.default_rng(np.random.SeedSequence((root_seed, 0xAC, actor)))
        return cls(
            speed=float(rng.uniform(0.85, 1.15)),
            pressure=float(rng.uniform(0.80, 1.25)),
            radius=float(rng.uniform(0.90, 1.15)),
        )


def sensor_range_map(taxonomy: Taxonomy) -> np.ndarray:
    """Per-pixel full-scale force in kg (foreleg points read 25 kg sensors)."""
    ranges = np.full((CANVAS_ROWS, CANVAS_COLS), BODY_RANGE_KG, dtype=np.float32)
    for part in taxonomy.parts:
        if part.name in FORELEG_PARTS:
            r = part.region
            ranges[r.row : r.row + r.height, r.col : r.col + r.width] = FORELEG_RANGE_KG
    return ranges


def _quantize_canvas(kg: np.ndarray, range_map: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(kg / range_map * 255.0), 0, 255).astype(np.uint8)


def _stamp(kg: np.ndarray, region: Region, c: ContactPoint):
    """Add one elliptical contact, clipped to its part region."""
    rows = np.arange(region.row, region.row + region.height, dtype=np.float64)
    cols = np.arange(region.col, region.col + region.width, dtype=np.float64)
    dr = (rows - c.row) / max(c.radius_r, 1e-6)
    dc = (cols - c.col) / max(c.radius_c, 1e-6)
    d2 = dr[:, None] ** 2 + dc[None, :] ** 2
    g = c.peak_kg * np.exp(-0.5 * d2)
    g[d2 > 6.25] = 0.0  # hard support at 2.5 radii keeps stamps local
    kg[region.row : region.row + region.height, region.col : region.col + region.width] += g


def render_canvas(trajectories, tick: int, noise: NoiseModel, taxonomy: Taxonomy,
                  range_map: np.ndarray | None = None) -> TactileCanvas:
    """Rasterize every contact scheduled at `tick` into one canvas."""
    if range_map is None:
        range_map = sensor_range_map(taxonomy)
    kg = np.zeros((CANVAS_ROWS, CANVAS_COLS), dtype=np.float64)
    for traj, start in trajectories:
        if traj.part is None:
            continue
        region = taxonomy.part(traj.part).region
        for c in traj.contact_path:
            if start + c.frame == tick:
                _stamp(kg, region, c)
    quantized = _quantize_canvas(kg, range_map).astype(np.int16)
    quantized += noise.field(tick)
    return TactileCanvas(tick=tick, pixels=np.clip(quantized, 0, 255).astype(np.uint8))


def simulate_tick(trajectories, tick: int, noise: NoiseModel, taxonomy: Taxonomy,
                  range_map: np.ndarray | None = None) -> list:
    """One bus tick: 8 board frames, all stamped with the same tick.

    `trajectories` is the active scene: an iterable of
    (TouchTrajectory, start_tick) pairs.
    """
    if tick < 0:
        raise ValueError("tick must be non-negative")
    canvas = render_canvas(trajectories, tick, noise, taxonomy, range_map)
    return disassemble_canvas(canvas)


# --- trajectory construction -------------------------------------------------

def _region_center_bounds(region: Region, margin_r: float, margin_c: float):
    mr = min(margin_r, (region.height - 1) / 2)
    mc = min(margin_c, (region.width - 1) / 2)
    return (
        region.row + mr,
        region.row + region.height - 1 - mr,
        region.col + mc,
        region.col + region.width - 1 - mc,
    )


def _clip_center(region: Region, row: float, col: float):
    return (
        float(np.clip(row, region.row, region.row + region.height - 1)),
        float(np.clip(col, region.col, region.col + region.width - 1)),
    )


def _uniform(rng, bounds):
    lo, hi = bounds
    return float(rng.uniform(lo, hi))


def build_trajectory(script: GestureScript, part, rng,
                     actor: ActorProfile = ActorProfile(),
                     window: int = WINDOW_FRAMES) -> TouchTrajectory:
    """Sample one concrete trajectory from a script's parameter ranges."""
    if script.family == "silence":
        return TouchTrajectory(part=None, contact_path=(), duration_frames=window)
    assert part is not None
    region = part.region

    pressure = _uniform(rng, script.pressure_kg) * actor.pressure
    radius = _uniform(rng, script.radius_px) * actor.radius
    aspect = _uniform(rng, script.aspect)
    rr, rc = radius, radius * aspect
    path = []

    def add(frame, row, col, peak, jitter=0.0):
        if jitter > 0:
            row += rng.uniform(-jitter, jitter)
            col += rng.uniform(-jitter, jitter)
        row, col = _clip_center(region, row, col)
        path.append(ContactPoint(frame, row, col, rr, rc, max(peak, 0.0)))

    if script.family == "static_press":
        lo, hi = script.duration
        length = int(np.clip(round(_uniform(rng, (lo, hi)) / actor.speed), 4, window))
        start = int(rng.integers(0, window - length + 1))
        r0, r1, c0, c1 = _region_center_bounds(region, rr, rc)
        row, col = rng.uniform(r0, r1), rng.uniform(c0, c1)
        for i in range(length):
            ramp = min(1.0, (i + 1) / 3, (length - i) / 3)
            add(start + i, row, col, pressure * ramp)

    elif script.family == "linear_sweep":
        lo, hi = script.duration
        length = int(np.clip(round(_uniform(rng, (lo, hi)) / actor.speed), 6, window))
        start = int(rng.integers(0, window - length + 1))
        r0, r1, c0, c1 = _region_center_bounds(region, rr, rc)
        # sweep along the longer region axis, with a random minor-axis drift
        if region.width >= region.height:
            ca, cb = (c0, c1) if rng.random() < 0.5 else (c1, c0)
            ra, rb = rng.uniform(r0, r1), rng.uniform(r0, r1)
        else:
            ra, rb = (r0, r1) if rng.random() < 0.5 else (r1, r0)
            ca, cb = rng.uniform(c0, c1), rng.uniform(c0, c1)
        for i in range(length):
            u = i / max(length - 1, 1)
            env = math.sin(math.pi * min(1.0, max(u, 0.04)) * 0.92 + 0.08)
            add(start + i, ra + (rb - ra) * u, ca + (cb - ca) * u, pressure * max(env, 0.25))

    elif script.family == "oscillation":
        cycles = _uniform(rng, script.cycles) * actor.speed
        amp_frac = _uniform(rng, script.amplitude)
        phase = rng.uniform(0, 2 * math.pi)
        r0, r1, c0, c1 = _region_center_bounds(region, rr, rc)
        row, col = rng.uniform(r0, r1), rng.uniform(c0, c1)
        along_cols = region.width >= region.height
        half = ((c1 - c0) if along_cols else (r1 - r0)) / 2
        amp = amp_frac * half
        for i in range(window):
            theta = 2 * math.pi * cycles * i / window + phase
            offset = amp * math.sin(theta)
            peak = pressure * (1.0 - script.pressure_mod * 0.5 * (1 - math.sin(theta)))
            if along_cols:
                add(i, row, col + offset, peak, jitter=script.center_jitter)
            else:
                add(i, row + offset, col, peak, jitter=script.center_jitter)

    elif script.family == "multi_tap":
        lo, hi = script.taps
        n_taps = int(rng.integers(lo, hi + 1))
        tap_len = int(rng.integers(script.tap_len[0], script.tap_len[1] + 1))
        gap = max(1, round(rng.integers(1, 4) / actor.speed))
        r0, r1, c0, c1 = _region_center_bounds(region, rr, rc)
        row, col = rng.uniform(r0, r1), rng.uniform(c0, c1)
        span = n_taps * tap_len + (n_taps - 1) * gap
        span = min(span, window)
        start = int(rng.integers(0, window - span + 1))
        frame = start
        for _ in range(n_taps):
            for i in range(tap_len):
                if frame >= window:
                    break
                add(frame, row, col, pressure, jitter=1.0)
                frame += 1
            frame += gap

    elif script.family == "grip":
        cover = _uniform(rng, script.cover)
        rr = max(cover * region.height / 2, 0.8)
        rc = max(cover * region.width / 2, 0.8)
        pulses = _uniform(rng, script.pulses)
        row = region.row + (region.height - 1) / 2 + rng.uniform(-1, 1)
        col = region.col + (region.width - 1) / 2 + rng.uniform(-1, 1)
        row, col = _clip_center(region, row, col)
        for i in range(window):
            ramp = min(1.0, (i + 1) / 3, (window - i) / 3)
            mod = 1.0
            if pulses > 0:
                mod = 0.6 + 0.4 * abs(math.sin(math.pi * pulses * i / window))
            path.append(ContactPoint(i, row, col, rr, rc, pressure * ramp * mod))

    return TouchTrajectory(part=part.name, contact_path=tuple(path), duration_frames=window)


def synthesize_gesture(gesture_class: GestureClass, seed: int, noise: NoiseModel,
                       taxonomy: Taxonomy, actor: ActorProfile = ActorProfile(),
                       scripts: dict | None = None,
                       range_map: np.ndarray | None = None) -> GestureWindow:
    """Synthesize one labeled 20-frame window for a gesture class."""
    scripts = scripts or DEFAULT_SCRIPTS
    kind = gesture_class.kind.name
    if kind not in scripts:
        raise TaxonomyError(f"no gesture script for kind {kind!r}")
    if range_map is None:
        range_map = sensor_range_map(taxonomy)
    script = scripts[kind]
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    traj = build_trajectory(script, gesture_class.part, rng, actor)
    scene = [(traj, 0)]
    canvases = tuple(
        render_canvas(scene, t, noise, taxonomy, range_map) for t in range(WINDOW_FRAMES)
    )
    return GestureWindow(frames=canvases, label=gesture_class.class_id)


# --- dataset generation -------------------------------------------------------

@dataclass(frozen=True)
class DatasetItem:
    class_id: int
    actor: int
    rep: int


class GestureDataset:
    """Lazily synthesized labeled dataset; windows are derived from seeds.

    Items are (class, actor, repetition) descriptors; pixel data is
    produced on demand so paper-scale configurations stay cheap to
    enumerate. `materialize()` bakes everything into uint8 arrays for
    training.
    """

    def __init__(self, items, root_seed: int, taxonomy: Taxonomy, noise: NoiseModel,
                 scripts: dict | None = None):
        self.items = list(items)
        self.root_seed = root_seed
        self.taxonomy = taxonomy
        self.noise = noise
        self.scripts = scripts or DEFAULT_SCRIPTS
        self._range_map = sensor_range_map(taxonomy)
        self._actors = {}

    def __len__(self) -> int:
        return len(self.items)

    @property
    def labels(self) -> np.ndarray:
        return np.array([it.class_id for it in self.items], dtype=np.int64)

    def _actor_profile(self, actor: int) -> ActorProfile:
        if actor not in self._actors:
            self._actors[actor] = ActorProfile.derive(self.root_seed, actor)
        return self._actors[actor]

    def item_seeds(self, item: DatasetItem) -> tuple[int, int]:
        ss = np.random.SeedSequence((self.root_seed, item.class_id, item.actor, item.rep))
        traj_seed, noise_seed = (int(x) for x in ss.generate_state(2, dtype=np.uint64))
        return traj_seed, noise_seed

    def window(self, index: int) -> GestureWindow:
        item = self.items[index]
        traj_seed, noise_seed = self.item_seeds(item)
        noise = replace(self.noise, seed=noise_seed)
        return synthesize_gesture(
            self.taxonomy.class_by_id(item.class_id), traj_seed, noise, self.taxonomy,
            actor=self._actor_profile(item.actor), scripts=self.scripts,
            range_map=self._range_map,
        )

    def windows(self):
        for i in range(len(self)):
            yield self.window(i)

    def materialize(self) -> tuple[np.ndarray, np.ndarray]:
        """All windows as (n, 20, 64, 128) uint8 plus (n,) int64 labels."""
        x = np.empty((len(self), WINDOW_FRAMES, CANVAS_ROWS, CANVAS_COLS), dtype=np.uint8)
        for i in range(len(self)):
            x[i] = self.window(i).stack()
        return x, self.labels

    def subset(self, indices) -> "GestureDataset":
        ds = GestureDataset(
            [self.items[i] for i in indices], self.root_seed, self.taxonomy,
            self.noise, self.scripts,
        )
        return ds

    def manifest(self) -> dict:
        counts = {}
        for it in self.items:
            counts[it.class_id] = counts.get(it.class_id, 0) + 1
        return {
            "schema_version": 1,
            "seed": self.root_seed,
            "count": len(self),
            "actors": sorted({it.actor for it in self.items}),
            "per_class_counts": {str(k): v for k, v in sorted(counts.items())},
            "noise": {
                "baseline_std": self.noise.baseline_std,
                "spike_probability": self.noise.spike_probability,
            },
        }


def generate_dataset(per_class: int, actors: int, seed: int, taxonomy: Taxonomy,
                     noise: NoiseModel | None = None,
                     scripts: dict | None = None) -> GestureDataset:
    """Class-balanced dataset of per_class x actors windows per gesture class."""
    if per_class < 0 or actors < 0:
        raise ValueError("per_class and actors must be non-negative")
    noise = NoiseModel(seed=seed) if noise is None else noise
    items = [
        DatasetItem(class_id=c, actor=a, rep=r)
        for c in range(len(taxonomy.classes))
        for a in range(actors)
        for r in range(per_class)
    ]
    return GestureDataset(items, seed, taxonomy, noise, scripts)


def split_dataset(dataset: GestureDataset, train_fraction, seed: int):
    """Deterministic stratified split; train gets floor(n_c * fraction) per class."""
    frac = float(train_fraction)
    if not 0.0 <= frac <= 1.0:
        raise ValueError("train_fraction must be within [0, 1]")
    by_class: dict[int, list[int]] = {}
    for i, it in enumerate(dataset.items):
        by_class.setdefault(it.class_id, []).append(i)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5B)))
    train_idx, test_idx = [], []
    for class_id in sorted(by_class):
        idx = np.array(by_class[class_id])
        rng.shuffle(idx)
        # floor() via integer arithmetic to dodge float-boundary surprises
        n_train = int(len(idx) * frac + 1e-9)
        train_idx.extend(idx[:n_train].tolist())
        test_idx.extend(idx[n_train:].tolist())
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def scripted_stream(taxonomy: Taxonomy, seed: int, noise: NoiseModel | None = None,
                    gestures: int | None = None, gap_frames: tuple = (8, 16),
                    classes: list | None = None):
    """Endless (or bounded) canvas stream: synthesized gestures between silences.

    Yields (canvas, true_class_id_or_None) so tests can check segmentation
    against ground truth; class_id is reported on the gesture's first frame.
    """
    noise = NoiseModel(seed=seed) if noise is None else noise
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDE)))
    range_map = sensor_range_map(taxonomy)
    pool = classes or [c.class_id for c in taxonomy.classes if c.part is not None]
    tick = 0
    emitted = 0
    while gestures is None or emitted < gestures:
        for _ in range(int(rng.integers(*gap_frames))):
            yield render_canvas([], tick, noise, taxonomy, range_map), None
            tick += 1
        class_id = int(rng.choice(pool))
        window = synthesize_gesture(
            taxonomy.class_by_id(class_id), int(rng.integers(0, 2**63)),
            replace(noise, seed=int(rng.integers(0, 2**63))), taxonomy,
            range_map=range_map,
        )
        for i, frame in enumerate(window.frames):
            yield TactileCanvas(tick=tick, pixels=frame.pixels), class_id if i == 0 else None
            tick += 1
        emitted += 1
