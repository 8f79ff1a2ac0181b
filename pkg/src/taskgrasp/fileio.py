"""On-disk formats: 16-bit PGM depth, 8-bit PGM masks, JSON sidecars.

A frame on disk is ``<stem>_depth.pgm`` (16-bit, millimetres, 0 =
invalid), ``<stem>_mask.pgm`` (0/255) and ``<stem>.json`` holding the
camera pose (4x4 row-major, world <- camera) and the intrinsics
document. JSON is always written with sorted keys and no timestamps so
identical inputs reproduce identical bytes.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .fusion import DepthFrame
from .sensor import CameraIntrinsics
from .skeleton import KeypointObservation


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonify)
        fh.write("\n")


def _jsonify(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    raise TypeError(f"cannot serialize {type(value)!r}")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_pgm16(path, values) -> None:
    """16-bit binary PGM, big-endian samples per the format."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise InvalidInputError("PGM image must be 2-D")
    if np.any(arr < 0) or np.any(arr > 65535):
        raise InvalidInputError("16-bit PGM values must lie in [0, 65535]")
    data = np.rint(arr).astype(">u2")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def write_pgm8(path, values) -> None:
    arr = np.asarray(values)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    data = np.clip(np.rint(arr), 0, 255).astype("u1")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary PGM reader; returns uint8 or uint16 (big-endian decoded)."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise InvalidInputError(f"{path}: only binary (P5) PGM is supported")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    pos += 1  # single whitespace after maxval
    dtype = ">u2" if maxval > 255 else "u1"
    img = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    return img.reshape(h, w).astype(np.uint16 if maxval > 255 else np.uint8)


def save_frame(frame: DepthFrame, directory, stem: str) -> None:
    """Write one frame as <stem>_depth.pgm + <stem>_mask.pgm + <stem>.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    depth = np.clip(np.asarray(frame.depth, dtype=float), 0, 65535)
    write_pgm16(directory / f"{stem}_depth.pgm", depth)
    write_pgm8(directory / f"{stem}_mask.pgm", np.asarray(frame.mask, dtype=bool))
    dump_json({
        "pose": np.asarray(frame.pose, dtype=float).reshape(-1).tolist(),
        "intrinsics": frame.intrinsics.to_dict(),
    }, directory / f"{stem}.json")


def load_frame(directory, stem: str) -> DepthFrame:
    directory = Path(directory)
    depth = read_pgm(directory / f"{stem}_depth.pgm").astype(float)
    mask = read_pgm(directory / f"{stem}_mask.pgm") > 127
    sidecar = load_json(directory / f"{stem}.json")
    return DepthFrame(
        depth=depth,
        mask=mask,
        pose=np.asarray(sidecar["pose"], dtype=float).reshape(4, 4),
        intrinsics=CameraIntrinsics.from_dict(sidecar["intrinsics"]),
    ).validate()


def frame_stems(directory) -> list:
    """Sorted stems of all frames stored in a directory."""
    directory = Path(directory)
    stems = []
    for name in sorted(os.listdir(directory)):
        if name.endswith("_depth.pgm"):
            stems.append(name[:-len("_depth.pgm")])
    return stems


def load_frames(directory) -> list:
    stems = frame_stems(directory)
    if not stems:
        raise InvalidInputError(f"no frames (*_depth.pgm) found in {directory}")
    return [load_frame(directory, stem) for stem in stems]


def save_observations(observations, path) -> None:
    """Keypoint observations as JSON lines, one record per (view, keypoint)."""
    with open(path, "w") as fh:
        for obs in observations:
            rec = {
                "view": int(obs.view),
                "keypoint": int(obs.keypoint),
                "pixel": np.asarray(obs.pixel, dtype=float).tolist(),
                "pose": np.asarray(obs.pose, dtype=float).reshape(-1).tolist(),
                "intrinsics": obs.intrinsics.to_dict(),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_observations(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(KeypointObservation(
                view=int(rec["view"]),
                keypoint=int(rec["keypoint"]),
                pixel=np.asarray(rec["pixel"], dtype=float),
                pose=np.asarray(rec["pose"], dtype=float).reshape(4, 4),
                intrinsics=CameraIntrinsics.from_dict(rec["intrinsics"]),
            ))
    return out
