"""Regenerate the cross-language codec fixtures used by the vitest suite.

Run from the repository root:  python3 frontend/scripts/gen_fixtures.py
The Python test suite asserts these stay in sync (tests/test_frontend_fixtures.py).
"""
import json
from pathlib import Path

import numpy as np

from dogtouch.frames import BoardFrame, encode_frame
from dogtouch.service import MSG_CONTROL, MSG_FRAME, pack_json, pack_message
from dogtouch.taxonomy import load_taxonomy

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures.json"


def main():
    rng = np.random.default_rng(31415)
    frames = []
    for board_id in (0, 7):
        samples = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
        frame = BoardFrame(board_id=board_id, tick=123456789, samples=samples)
        frames.append({
            "board_id": board_id,
            "tick": frame.tick,
            "samples": samples.flatten().tolist(),
            "encoded_hex": encode_frame(frame).hex(),
        })
    zero = BoardFrame(board_id=3, tick=0, samples=np.zeros((32, 32), np.uint8))
    frames.append({
        "board_id": 3,
        "tick": 0,
        "samples": [0] * 1024,
        "encoded_hex": encode_frame(zero).hex(),
    })

    taxonomy = load_taxonomy()
    fixture = {
        "frames": frames,
        "message_frame_hex": pack_message(MSG_FRAME, encode_frame(zero)).hex(),
        "message_hello_hex": pack_json(MSG_CONTROL, {"op": "hello"}).hex(),
        "parts": taxonomy.part_geometry(),
        "geometry_checksum": taxonomy.geometry_checksum(),
    }
    OUT.write_text(json.dumps(fixture, indent=1), "utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
