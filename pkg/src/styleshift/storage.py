"""Bit-exact persistence: tensor archives, codebook files, PNG glue.

The archive layout is documented byte-exact in docs/formats.md. In short:
magic ``SAMST1``, a one-byte little-endian tag, a reserved byte, a u32
manifest length, a canonical JSON manifest (tensors sorted by name), then
the raw payload. The digest of manifest + payload doubles as the network
fingerprint that binds codebooks to the weights they were trained with.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile

import numpy as np
from PIL import Image, UnidentifiedImageError

from .codebook import IDENTITY_ID, StyleCodebook, StyleRepresentation
from .errors import ArchiveError, CodebookError, ImageCodecError

MAGIC = b"SAMST1"
ENDIAN_TAG = 0x01  # little-endian payload
CODEBOOK_FORMAT = "samst-codebook"
CODEBOOK_VERSION = 1
ARCHIVE_VERSION = 1


def _atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# tensor archives
# ---------------------------------------------------------------------------

def _build_archive(tensors: dict[str, np.ndarray], metadata: dict[str, str]):
    if not tensors:
        raise ArchiveError("archive needs at least one tensor")
    meta = {str(k): str(v) for k, v in (metadata or {}).items()}
    entries = []
    payload = io.BytesIO()
    offset = 0
    downcast = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        if arr.dtype == np.float64:
            downcast.append(name)
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = arr.tobytes()
        entries.append({
            "name": name,
            "dtype": "f4",
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        payload.write(raw)
        offset += len(raw)
    if downcast:
        meta.setdefault("downcast", "float64->float32:" + ",".join(downcast))
    manifest = {"version": ARCHIVE_VERSION, "tensors": entries, "metadata": meta}
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return manifest_bytes, payload.getvalue()


def archive_digest(tensors: dict[str, np.ndarray], metadata: dict[str, str] | None = None) -> str:
    """Fingerprint of the archive that save_archive(...) would write."""
    manifest_bytes, payload = _build_archive(tensors, metadata or {})
    return hashlib.sha256(manifest_bytes + payload).hexdigest()


def save_archive(tensors: dict[str, np.ndarray], path,
                 metadata: dict[str, str] | None = None) -> str:
    """Write tensors to ``path`` atomically; returns the digest."""
    manifest_bytes, payload = _build_archive(tensors, metadata or {})
    header = MAGIC + bytes([ENDIAN_TAG, 0]) + struct.pack("<I", len(manifest_bytes))
    _atomic_write(path, header + manifest_bytes + payload)
    return hashlib.sha256(manifest_bytes + payload).hexdigest()


def load_archive(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Read an archive back; round-trips are bit-identical."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise ArchiveError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[:6] != MAGIC:
        raise ArchiveError(f"{path}: bad magic {blob[:6]!r} at offset 0")
    if blob[6] != ENDIAN_TAG:
        raise ArchiveError(f"{path}: unsupported endianness tag {blob[6]:#x} at offset 6")
    (manifest_len,) = struct.unpack_from("<I", blob, 8)
    manifest_end = 12 + manifest_len
    if manifest_end > len(blob):
        raise ArchiveError(f"{path}: manifest of {manifest_len} bytes overruns file at offset 12")
    try:
        manifest = json.loads(blob[12:manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: manifest is not valid JSON at offset 12: {exc}") from None
    if manifest.get("version") != ARCHIVE_VERSION:
        raise ArchiveError(f"{path}: unsupported archive version {manifest.get('version')!r}")
    payload = blob[manifest_end:]
    tensors: dict[str, np.ndarray] = {}
    prev_end = 0
    for entry in manifest["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        offset, nbytes = entry["offset"], entry["nbytes"]
        if name in tensors:
            raise ArchiveError(f"{path}: duplicate tensor name {name!r}")
        if entry["dtype"] != "f4":
            raise ArchiveError(f"{path}: tensor {name!r} has unsupported dtype {entry['dtype']!r}")
        if offset != prev_end:
            raise ArchiveError(
                f"{path}: tensor {name!r} at payload offset {offset}, expected {prev_end} (overlap or gap)")
        if offset + nbytes > len(payload):
            raise ArchiveError(
                f"{path}: tensor {name!r} [{offset}:{offset + nbytes}] overruns payload of {len(payload)} bytes")
        count = int(np.prod(shape)) if shape else 1
        if count * 4 != nbytes:
            raise ArchiveError(f"{path}: tensor {name!r} shape {shape} does not match {nbytes} bytes")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(shape)
        tensors[name] = arr.copy()
        prev_end = offset + nbytes
    if prev_end != len(payload):
        raise ArchiveError(f"{path}: {len(payload) - prev_end} trailing payload bytes after offset {prev_end}")
    return tensors, dict(manifest.get("metadata", {}))


def archive_fingerprint(path) -> str:
    """Digest of an archive on disk, as save_archive reported it."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:6] != MAGIC or len(blob) < 12:
        raise ArchiveError(f"{path}: not a tensor archive")
    (manifest_len,) = struct.unpack_from("<I", blob, 8)
    return hashlib.sha256(blob[12:]).hexdigest()


# ---------------------------------------------------------------------------
# codebook files
# ---------------------------------------------------------------------------

def save_codebook(cb: StyleCodebook, path) -> None:
    """Human-auditable JSON; float values round-trip bit-exactly."""
    entries = []
    for rep in cb.entries():
        entries.append({
            "id": rep.id,
            "name": rep.name,
            "identity": rep.id == IDENTITY_ID,
            "values": [float(v) for v in rep.values],
        })
    doc = {
        "format": CODEBOOK_FORMAT,
        "version": CODEBOOK_VERSION,
        "style_dim": cb.style_dim,
        "network_fingerprint": cb.network_fingerprint,
        "entries": entries,
    }
    _atomic_write(path, (json.dumps(doc, indent=2) + "\n").encode("utf-8"))


def load_codebook(path) -> StyleCodebook:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CodebookError(f"{path}: not valid JSON: {exc}") from None
    if doc.get("format") != CODEBOOK_FORMAT:
        raise CodebookError(f"{path}: not a codebook file (format={doc.get('format')!r})")
    if doc.get("version") != CODEBOOK_VERSION:
        raise CodebookError(f"{path}: unsupported codebook version {doc.get('version')!r}")
    cb = StyleCodebook(int(doc["style_dim"]), doc.get("network_fingerprint", ""))
    identity_seen = 0
    for entry in doc["entries"]:
        rep = StyleRepresentation(entry["id"], entry["name"],
                                  np.array(entry["values"], dtype=np.float32))
        if entry.get("identity"):
            identity_seen += 1
            if rep.id != IDENTITY_ID:
                raise CodebookError(f"{path}: identity entry must use id {IDENTITY_ID!r}")
            cb.replace(rep)
        else:
            cb.add(rep)
    if identity_seen != 1:
        raise CodebookError(f"{path}: expected exactly one identity entry, found {identity_seen}")
    return cb


def merge_codebooks(a: StyleCodebook, b: StyleCodebook) -> StyleCodebook:
    """Disjoint union of entries; identity comes from ``a``.

    Both books must carry the same network fingerprint, otherwise their
    representations mean different things to the generator.
    """
    if a.network_fingerprint != b.network_fingerprint:
        raise CodebookError(
            "cannot merge codebooks trained against different networks: "
            f"{a.network_fingerprint[:12]!r} vs {b.network_fingerprint[:12]!r}")
    if a.style_dim != b.style_dim:
        raise CodebookError(f"style_dim mismatch: {a.style_dim} vs {b.style_dim}")
    merged = a.copy()
    clashes = [rep.id for rep in b.entries()
               if rep.id != IDENTITY_ID and rep.id in merged]
    if clashes:
        raise CodebookError(f"duplicate style ids in merge: {sorted(clashes)}")
    for rep in b.entries():
        if rep.id != IDENTITY_ID:
            merged.add(rep.copy())
    return merged


# ---------------------------------------------------------------------------
# PNG codec
# ---------------------------------------------------------------------------

def _png_header_info(data: bytes):
    # PNG signature (8) + IHDR chunk: len(4) type(4) w(4) h(4) depth(1) color(1)
    sig = b"\x89PNG\r\n\x1a\n"
    if len(data) < 33 or data[:8] != sig or data[12:16] != b"IHDR":
        raise ImageCodecError("not a PNG stream")
    depth = data[24]
    color_type = data[25]
    return depth, color_type


def decode_image(data: bytes) -> np.ndarray:
    """PNG bytes -> (3, h, w) float32 in [0, 1]. 8-bit RGB/RGBA only."""
    depth, color_type = _png_header_info(data)
    if depth != 8:
        raise ImageCodecError(f"unsupported PNG bit depth {depth}; only 8-bit is supported")
    if color_type not in (2, 6):
        raise ImageCodecError(f"unsupported PNG color type {color_type}; need RGB or RGBA")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageCodecError(f"corrupt PNG stream: {exc}") from None
    if img.mode == "RGBA":
        img = img.convert("RGB")  # alpha dropped
    arr = np.asarray(img, dtype=np.uint8)
    return (arr.astype(np.float32) / 255.0).transpose(2, 0, 1).copy()


def encode_image(image: np.ndarray) -> bytes:
    """(3, h, w) float image in [0, 1] -> PNG bytes (8-bit RGB)."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ImageCodecError(f"expected a (3, h, w) image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ImageCodecError("image contains non-finite values")
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def save_image(path, image: np.ndarray) -> None:
    _atomic_write(path, encode_image(image))
