"""Motion file formats.

Two encodings of the same header/payload layout:

JSON::

    {"format": "mvkit-motion", "version": 1,
     "header": {"fps", "joint_count", "representation", "frame_count",
                "has_betas", "has_translation", "name"},
     "payload": {"rotations": [[...] per frame],      # joint_count * k reals
                 "betas": [[10 reals] per frame],     # if has_betas
                 "root_translation": [[3 reals] ...]}} # if has_translation

Binary (little-endian)::

    magic "MVKT" | u16 version
    header: f64 fps | u32 joint_count | u8 representation | u32 frame_count
            | u8 flags (bit0 betas, bit1 translation) | u8 payload_bits (32|64)
            | u16 name length | name (UTF-8)
    payload: frame-major floats; per frame the rotations, then betas, then
             translation.

Representation codes: 0 axis_angle, 1 quaternion, 2 sixd. Axis-angle is the
default on-disk representation.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .rotations import RotationError, from_quat, to_quat
from .sequence import NUM_BETAS, MotionSequence, SequenceError

FORMAT_VERSION = 1
MAGIC = b"MVKT"
FILE_REPRESENTATIONS = ("axis_angle", "quaternion", "sixd")
_REP_SIZE = {"axis_angle": 3, "quaternion": 4, "sixd": 6}
_HEADER = struct.Struct("<dIBIBBH")


class MotionFileError(ValueError):
    pass


class VersionError(MotionFileError):
    pass


class TruncatedFileError(MotionFileError):
    def __init__(self, path, offset: int, needed: int):
        super().__init__(f"{path}: truncated at byte offset {offset} (needed {needed} more bytes)")
        self.offset = offset


class MotionFormatError(MotionFileError):
    pass


def _encode_rotations(seq: MotionSequence, representation: str) -> np.ndarray:
    if representation not in FILE_REPRESENTATIONS:
        raise MotionFileError(f"representation must be one of {FILE_REPRESENTATIONS}, got {representation!r}")
    vals = from_quat(seq.quats, representation)
    return vals.reshape(seq.num_frames, -1)


def _build(path, header: dict, rotations, betas, trans) -> MotionSequence:
    rep = header["representation"]
    J = header["joint_count"]
    T = header["frame_count"]
    rot = np.asarray(rotations, dtype=np.float64)
    if rot.shape != (T, J * _REP_SIZE[rep]):
        raise MotionFormatError(f"{path}: rotations payload shape {rot.shape}, header implies {(T, J * _REP_SIZE[rep])}")
    try:
        quats = to_quat(rot.reshape(T, J, _REP_SIZE[rep]), rep)
        return MotionSequence(
            quats=quats,
            fps=header["fps"],
            name=header.get("name", ""),
            betas=None if betas is None else np.asarray(betas, dtype=np.float64),
            root_translation=None if trans is None else np.asarray(trans, dtype=np.float64),
        )
    except (RotationError, SequenceError) as exc:
        raise MotionFormatError(f"{path}: {exc}") from None


# JSON


def motion_to_json(seq: MotionSequence, representation: str = "axis_angle") -> dict:
    rot = _encode_rotations(seq, representation)
    payload = {"rotations": rot.tolist()}
    if seq.betas is not None:
        payload["betas"] = seq.betas.tolist()
    if seq.root_translation is not None:
        payload["root_translation"] = seq.root_translation.tolist()
    return {
        "format": "mvkit-motion",
        "version": FORMAT_VERSION,
        "header": {
            "fps": seq.fps,
            "joint_count": seq.joint_count,
            "representation": representation,
            "frame_count": seq.num_frames,
            "has_betas": seq.betas is not None,
            "has_translation": seq.root_translation is not None,
            "name": seq.name,
        },
        "payload": payload,
    }


def motion_from_json(doc: dict, path="<json>") -> MotionSequence:
    if not isinstance(doc, dict) or doc.get("format") != "mvkit-motion":
        raise MotionFormatError(f"{path}: not an mvkit motion document")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported version {doc.get('version')!r} (expected {FORMAT_VERSION})")
    header = doc.get("header")
    payload = doc.get("payload")
    if not isinstance(header, dict) or not isinstance(payload, dict):
        raise MotionFormatError(f"{path}: missing header or payload")
    required = ("fps", "joint_count", "representation", "frame_count", "has_betas", "has_translation")
    for key in required:
        if key not in header:
            raise MotionFormatError(f"{path}: header.{key} missing")
    unknown = set(header) - set(required) - {"name"}
    if unknown:
        raise MotionFormatError(f"{path}: unknown header fields {sorted(unknown)}")
    if header["representation"] not in FILE_REPRESENTATIONS:
        raise MotionFormatError(f"{path}: header.representation {header['representation']!r} not recognised")
    for flag, key in (("has_betas", "betas"), ("has_translation", "root_translation")):
        if bool(header[flag]) != (key in payload):
            raise MotionFormatError(f"{path}: header.{flag} disagrees with payload.{key}")
    if "rotations" not in payload:
        raise MotionFormatError(f"{path}: payload.rotations missing")
    T = header["frame_count"]
    for key in ("rotations", "betas", "root_translation"):
        if key in payload and len(payload[key]) != T:
            raise MotionFormatError(f"{path}: payload.{key} has {len(payload[key])} frames, header says {T}")
    try:
        return _build(path, header, payload["rotations"], payload.get("betas"), payload.get("root_translation"))
    except ValueError as exc:
        if isinstance(exc, MotionFileError):
            raise
        raise MotionFormatError(f"{path}: {exc}") from None


# binary


def motion_to_bytes(seq: MotionSequence, representation: str = "axis_angle", precision: int = 32) -> bytes:
    if precision not in (32, 64):
        raise MotionFileError(f"precision must be 32 or 64, got {precision}")
    rot = _encode_rotations(seq, representation)
    cols = [rot]
    if seq.betas is not None:
        cols.append(seq.betas)
    if seq.root_translation is not None:
        cols.append(seq.root_translation)
    payload = np.ascontiguousarray(np.concatenate(cols, axis=1), dtype="<f4" if precision == 32 else "<f8")
    name = seq.name.encode("utf-8")[:65535]
    flags = (seq.betas is not None) | ((seq.root_translation is not None) << 1)
    header = _HEADER.pack(
        seq.fps, seq.joint_count, FILE_REPRESENTATIONS.index(representation), seq.num_frames, flags, precision, len(name)
    )
    return MAGIC + struct.pack("<H", FORMAT_VERSION) + header + name + payload.tobytes()


def motion_from_bytes(data: bytes, path="<bytes>") -> MotionSequence:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFileError(path, len(data), pos + n - len(data))
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise MotionFormatError(f"{path}: bad magic (not an MVKT file)")
    (version,) = struct.unpack("<H", take(2))
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported version {version} (expected {FORMAT_VERSION})")
    fps, J, rep_code, T, flags, bits, name_len = _HEADER.unpack(take(_HEADER.size))
    if rep_code >= len(FILE_REPRESENTATIONS):
        raise MotionFormatError(f"{path}: unknown representation code {rep_code}")
    if bits not in (32, 64):
        raise MotionFormatError(f"{path}: payload_bits {bits} not 32 or 64")
    if flags & ~0b11:
        raise MotionFormatError(f"{path}: unknown flag bits {flags:#x}")
    try:
        name = take(name_len).decode("utf-8")
    except UnicodeDecodeError:
        raise MotionFormatError(f"{path}: name is not UTF-8") from None
    rep = FILE_REPRESENTATIONS[rep_code]
    has_b, has_t = bool(flags & 1), bool(flags & 2)
    width = J * _REP_SIZE[rep] + NUM_BETAS * has_b + 3 * has_t
    itemsize = bits // 8
    raw = take(T * width * itemsize)
    if pos != len(data):
        raise MotionFormatError(f"{path}: {len(data) - pos} trailing bytes after payload")
    arr = np.frombuffer(raw, dtype="<f4" if bits == 32 else "<f8").astype(np.float64).reshape(T, width)
    if not np.all(np.isfinite(arr)):
        raise MotionFormatError(f"{path}: non-finite payload values")
    c = J * _REP_SIZE[rep]
    betas = arr[:, c : c + NUM_BETAS] if has_b else None
    trans = arr[:, c + NUM_BETAS * has_b :] if has_t else None
    header = dict(fps=fps, joint_count=J, representation=rep, frame_count=T, name=name)
    return _build(path, header, arr[:, :c], betas, trans)


# files


def _format_for(path: Path, fmt: Optional[str]) -> str:
    if fmt is not None:
        if fmt not in ("json", "bin"):
            raise MotionFileError(f"format must be 'json' or 'bin', got {fmt!r}")
        return fmt
    return "json" if path.suffix.lower() == ".json" else "bin"


def write_motion(
    seq: MotionSequence, path, fmt: Optional[str] = None, representation: str = "axis_angle", precision: int = 32
) -> None:
    """Write ``seq``; the format follows the extension (``.json`` or binary) unless given."""
    path = Path(path)
    if _format_for(path, fmt) == "json":
        path.write_text(json.dumps(motion_to_json(seq, representation)), encoding="utf-8")
    else:
        path.write_bytes(motion_to_bytes(seq, representation, precision))


def read_motion(path) -> MotionSequence:
    """Read either encoding, detected from the leading bytes."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == MAGIC:
        return motion_from_bytes(data, path)
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MotionFormatError(f"{path}: neither MVKT binary nor JSON ({exc})") from None
    return motion_from_json(doc, path)
