"""Gesture/action vocabularies and the gesture-by-part validity matrix.

Everything here is load-time data: which gesture kinds exist, which body
parts they may target, and the dog action inventory. The counts are hard
contracts checked at load: 13 gesture kinds, 11 body parts, 81 gesture
classes, 44 actions of which 32 are performable and 40 belong to the
translation vocabulary. The shipped default lives in data/taxonomy.json
(schema documented in docs/config-schemas.md).
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .frames import CANVAS_COLS, CANVAS_ROWS

EXPECTED_KINDS = 13
EXPECTED_PARTS = 11
EXPECTED_CLASSES = 81
EXPECTED_ACTIONS = 44
EXPECTED_PERFORMABLE = 32
EXPECTED_TRANSLATION_VOCAB = 40

SCHEMA_VERSION = 1

PAD_ID, BOS_ID, EOS_ID = 0, 1, 2
PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"
SPECIALS = (PAD, BOS, EOS)

ACTION_CATEGORIES = ("whole_body", "forelimbs", "hindlimbs", "head")


class TaxonomyError(ValueError):
    """Config fails a structural or count invariant."""


class VocabularyError(KeyError):
    """Unknown token or out-of-range id."""


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle in canvas coordinates."""

    row: int
    col: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise TaxonomyError(f"degenerate region {self}")
        if self.row < 0 or self.col < 0:
            raise TaxonomyError(f"region origin out of canvas: {self}")
        if self.row + self.height > CANVAS_ROWS or self.col + self.width > CANVAS_COLS:
            raise TaxonomyError(f"region exceeds {CANVAS_ROWS}x{CANVAS_COLS} canvas: {self}")

    def contains(self, row: int, col: int) -> bool:
        return self.row <= row < self.row + self.height and self.col <= col < self.col + self.width

    def overlaps(self, other: "Region") -> bool:
        return not (
            self.row + self.height <= other.row
            or other.row + other.height <= self.row
            or self.col + self.width <= other.col
            or other.col + other.width <= self.col
        )


@dataclass(frozen=True)
class GestureKind:
    name: str
    requires_part: bool = True


@dataclass(frozen=True)
class BodyPart:
    name: str
    region: Region


@dataclass(frozen=True)
class GestureClass:
    kind: GestureKind
    part: BodyPart | None
    class_id: int

    @property
    def token(self) -> str:
        """Vocabulary word for this class, e.g. 'stroke_head'."""
        if self.part is None:
            return self.kind.name
        return f"{self.kind.name}_{self.part.name}"


@dataclass(frozen=True)
class ActionWord:
    name: str
    category: str
    performable: bool
    in_translation_vocab: bool


class Vocabulary:
    """Bijective token<->id map with fixed special ids PAD=0, BOS=1, EOS=2."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens):
            raise TaxonomyError("vocabulary tokens must be unique")
        if any(t in SPECIALS for t in tokens):
            raise TaxonomyError("content tokens may not collide with special tokens")
        self._tokens = list(SPECIALS) + tokens
        self._ids = {t: i for i, t in enumerate(self._tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    @property
    def tokens(self) -> tuple:
        return tuple(self._tokens)

    @property
    def content_tokens(self) -> tuple:
        return tuple(self._tokens[len(SPECIALS):])

    def encode(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise VocabularyError(f"unknown token {token!r}") from None

    def decode(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise VocabularyError(f"token id {token_id} outside [0, {len(self._tokens)})")
        return self._tokens[token_id]


class Taxonomy:
    """Immutable view over the loaded vocabularies and validity matrix."""

    def __init__(self, kinds, parts, classes, actions, schema_version=SCHEMA_VERSION):
        self.schema_version = schema_version
        self.kinds = tuple(kinds)
        self.parts = tuple(parts)
        self.classes = tuple(classes)
        self.actions = tuple(actions)
        self._kind_by_name = {k.name: k for k in self.kinds}
        self._part_by_name = {p.name: p for p in self.parts}
        self._action_by_name = {a.name: a for a in self.actions}
        self._class_by_pair = {
            (c.kind.name, c.part.name if c.part else None): c for c in self.classes
        }
        self.gesture_vocab = Vocabulary([c.token for c in self.classes])
        self.action_vocab = Vocabulary(
            [a.name for a in self.actions if a.in_translation_vocab]
        )

    def kind(self, name: str) -> GestureKind:
        try:
            return self._kind_by_name[name]
        except KeyError:
            raise TaxonomyError(f"unknown gesture kind {name!r}") from None

    def part(self, name: str) -> BodyPart:
        try:
            return self._part_by_name[name]
        except KeyError:
            raise TaxonomyError(f"unknown body part {name!r}") from None

    def action(self, name: str) -> ActionWord:
        try:
            return self._action_by_name[name]
        except KeyError:
            raise TaxonomyError(f"unknown action {name!r}") from None

    @property
    def performable_actions(self) -> tuple:
        return tuple(a for a in self.actions if a.performable)

    def gesture_class_of(self, kind_name: str, part_name: str | None) -> GestureClass:
        """The unique class for a (kind, part) pair admitted by the matrix."""
        self.kind(kind_name)
        if part_name is not None:
            self.part(part_name)
        try:
            return self._class_by_pair[(kind_name, part_name)]
        except KeyError:
            raise TaxonomyError(
                f"pair ({kind_name!r}, {part_name!r}) is not admitted by the validity matrix"
            ) from None

    def class_by_id(self, class_id: int) -> GestureClass:
        if not 0 <= class_id < len(self.classes):
            raise TaxonomyError(f"class id {class_id} outside [0, {len(self.classes)})")
        return self.classes[class_id]

    def class_by_token(self, token: str) -> GestureClass:
        for c in self.classes:
            if c.token == token:
                return c
        raise TaxonomyError(f"unknown gesture token {token!r}")

    def part_geometry(self) -> list[dict]:
        """Part regions in a wire-friendly shape, ordered as loaded."""
        return [
            {"name": p.name, "region": [p.region.row, p.region.col, p.region.height, p.region.width]}
            for p in self.parts
        ]

    def geometry_checksum(self) -> int:
        """CRC32 over the canonical part geometry; lets clients verify zones."""
        blob = json.dumps(self.part_geometry(), sort_keys=True, separators=(",", ":"))
        return zlib.crc32(blob.encode("utf-8"))

    def fingerprint(self) -> int:
        """CRC32 over vocabularies and geometry; model checkpoints pin this."""
        payload = {
            "gesture_tokens": list(self.gesture_vocab.tokens),
            "action_tokens": list(self.action_vocab.tokens),
            "parts": self.part_geometry(),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return zlib.crc32(blob.encode("utf-8"))


def _require(condition: bool, message: str):
    if not condition:
        raise TaxonomyError(message)


def _check_unique(names, what: str):
    seen = set()
    for n in names:
        if n in seen:
            raise TaxonomyError(f"duplicate {what} name {n!r}")
        seen.add(n)


def load_taxonomy(source=None) -> Taxonomy:
    """Load and validate a taxonomy.

    `source` may be None (shipped default), a dict, a JSON string, or a
    path to a JSON file. Every count and flag invariant is enforced here
    so the rest of the system can trust the loaded object.
    """
    if source is None:
        raw = resources.files("dogtouch.data").joinpath("taxonomy.json").read_text("utf-8")
        doc = json.loads(raw)
    elif isinstance(source, dict):
        doc = source
    elif isinstance(source, (str, Path)) and "\n" not in str(source) and Path(source).exists():
        doc = json.loads(Path(source).read_text("utf-8"))
    elif isinstance(source, str):
        doc = json.loads(source)
    else:
        raise TaxonomyError(f"cannot load taxonomy from {source!r}")

    if doc.get("schema_version") != SCHEMA_VERSION:
        raise TaxonomyError(f"unsupported schema_version {doc.get('schema_version')!r}")

    kinds = [
        GestureKind(name=k["name"], requires_part=bool(k.get("requires_part", True)))
        for k in doc["gesture_kinds"]
    ]
    _check_unique([k.name for k in kinds], "gesture kind")
    _require(
        len(kinds) == EXPECTED_KINDS,
        f"expected {EXPECTED_KINDS} gesture kinds, got {len(kinds)}",
    )
    partless = [k for k in kinds if not k.requires_part]
    _require(
        len(partless) == 1,
        f"exactly one gesture kind must not require a part, got {len(partless)}",
    )

    parts = [
        BodyPart(name=p["name"], region=Region(*p["region"])) for p in doc["body_parts"]
    ]
    _check_unique([p.name for p in parts], "body part")
    _require(
        len(parts) == EXPECTED_PARTS,
        f"expected {EXPECTED_PARTS} body parts, got {len(parts)}",
    )
    for i, a in enumerate(parts):
        for b in parts[i + 1 :]:
            _require(
                not a.region.overlaps(b.region),
                f"part regions {a.name!r} and {b.name!r} overlap",
            )

    part_by_name = {p.name: p for p in parts}
    validity = doc["gesture_validity"]
    classes: list[GestureClass] = []
    for kind in kinds:
        if not kind.requires_part:
            _require(
                kind.name not in validity or not validity[kind.name],
                f"partless kind {kind.name!r} must not list parts",
            )
            classes.append(GestureClass(kind=kind, part=None, class_id=len(classes)))
            continue
        listed = validity.get(kind.name, [])
        _require(bool(listed), f"kind {kind.name!r} admits no parts")
        _check_unique(listed, f"validity entry for {kind.name!r}")
        for part_name in listed:
            _require(part_name in part_by_name, f"validity matrix names unknown part {part_name!r}")
            classes.append(
                GestureClass(kind=kind, part=part_by_name[part_name], class_id=len(classes))
            )
    _require(
        len(classes) == EXPECTED_CLASSES,
        f"validity matrix admits {len(classes)} gesture classes, expected {EXPECTED_CLASSES}",
    )

    actions = [
        ActionWord(
            name=a["name"],
            category=a["category"],
            performable=bool(a["performable"]),
            in_translation_vocab=bool(a["in_translation_vocab"]),
        )
        for a in doc["actions"]
    ]
    _check_unique([a.name for a in actions], "action")
    for a in actions:
        _require(a.category in ACTION_CATEGORIES, f"unknown action category {a.category!r}")
    _require(
        len(actions) == EXPECTED_ACTIONS,
        f"expected {EXPECTED_ACTIONS} actions, got {len(actions)}",
    )
    n_perf = sum(a.performable for a in actions)
    _require(
        n_perf == EXPECTED_PERFORMABLE,
        f"expected {EXPECTED_PERFORMABLE} performable actions, got {n_perf}",
    )
    n_vocab = sum(a.in_translation_vocab for a in actions)
    _require(
        n_vocab == EXPECTED_TRANSLATION_VOCAB,
        f"expected {EXPECTED_TRANSLATION_VOCAB} translation-vocabulary actions, got {n_vocab}",
    )

    return Taxonomy(kinds, parts, classes, actions, schema_version=doc["schema_version"])
