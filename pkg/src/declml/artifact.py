"""Model artifact directory: save, verify, load, and raw-row prediction.

Layout::

    config.cfg.json       canonical config render
    metadata.json         fitted per-feature metadata
    weights.bin           named float32 arrays (format below)
    training_report.json  per-epoch history and test metrics
    MANIFEST              format version, per-file sha256, creation fingerprint

weights.bin: the 8-byte magic ``DECLWTS\\0``, a little-endian uint32 format
version, a uint32 header length, a UTF-8 JSON header listing
``{name, dtype, shape, offset}`` per array, then the payload. Every array
starts on a 64-byte boundary measured from the start of the file and is
stored as little-endian float32.

MANIFEST is one canonical JSON line followed by ``sha256:<hex>`` of that line,
so tampering with the manifest itself is detected too.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from declml.config import canonical_render, compile_config, parse_document
from declml.data.metadata import metadata_from_dict, metadata_to_dict
from declml.errors import ArtifactIOError, CorruptArtifact, MissingFile, ShapeMismatch, VersionMismatch
from declml.model import build_model
from declml.pipeline import Pipeline, predict_rows
from declml.train import TrainingReport

FORMAT_VERSION = 1
WEIGHTS_MAGIC = b"DECLWTS\0"
ALIGN = 64
CONFIG_FILE = "config.cfg.json"
METADATA_FILE = "metadata.json"
WEIGHTS_FILE = "weights.bin"
REPORT_FILE = "training_report.json"
MANIFEST_FILE = "MANIFEST"
CONTENT_FILES = (CONFIG_FILE, METADATA_FILE, WEIGHTS_FILE, REPORT_FILE)


def _json_text(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _pad(n: int) -> int:
    return (-n) % ALIGN


def encode_weights(state: Mapping[str, np.ndarray]) -> bytes:
    """Serialize named arrays in the given order."""
    arrays = [(name, np.ascontiguousarray(arr, dtype="<f4")) for name, arr in state.items()]
    # Offsets depend on header length, which depends on offsets; iterate to a fixed point.
    header_len = 0
    while True:
        offset = len(WEIGHTS_MAGIC) + 8 + header_len
        offset += _pad(offset)
        entries = []
        for name, arr in arrays:
            entries.append({"name": name, "dtype": "float32", "shape": list(arr.shape), "offset": offset})
            offset += arr.nbytes
            offset += _pad(offset)
        header = json.dumps({"arrays": entries}, sort_keys=True, separators=(",", ":")).encode("utf-8")
        if len(header) == header_len:
            break
        header_len = len(header)
    out = bytearray(WEIGHTS_MAGIC)
    out += struct.pack("<II", FORMAT_VERSION, len(header))
    out += header
    for entry, (_, arr) in zip(entries, arrays):
        out += b"\0" * (entry["offset"] - len(out))
        out += arr.tobytes()
    out += b"\0" * _pad(len(out))
    return bytes(out)


def decode_weights(blob: bytes, filename: str = WEIGHTS_FILE) -> dict[str, np.ndarray]:
    head = len(WEIGHTS_MAGIC) + 8
    if len(blob) < head or blob[: len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
        raise CorruptArtifact(filename, "bad magic")
    version, header_len = struct.unpack("<II", blob[len(WEIGHTS_MAGIC) : head])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{filename}: weights format version {version}, supported {FORMAT_VERSION}")
    try:
        header = json.loads(blob[head : head + header_len].decode("utf-8"))
        out = {}
        for e in header["arrays"]:
            if e["dtype"] != "float32":
                raise ValueError(f"unsupported dtype {e['dtype']}")
            shape = tuple(e["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            end = e["offset"] + 4 * count
            if e["offset"] % ALIGN or end > len(blob):
                raise ValueError(f"array {e['name']} out of bounds")
            out[e["name"]] = np.frombuffer(blob, dtype="<f4", count=count, offset=e["offset"]).reshape(shape).astype(np.float32)
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise CorruptArtifact(filename, str(exc)) from None
    return out


def _render_manifest(body: Mapping[str, Any]) -> bytes:
    line = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return f"{line}\nsha256:{_sha256(line.encode('utf-8'))}\n".encode("utf-8")


def artifact_files(pipeline: Pipeline, report: TrainingReport | None) -> dict[str, bytes]:
    """The exact bytes of every artifact file, manifest last."""
    config = pipeline.config
    meta = {name: metadata_to_dict(m) for name, m in pipeline.metadata.items()}
    report_dict = report.to_dict() if report is not None else None
    files = {
        CONFIG_FILE: canonical_render(config).encode("utf-8"),
        METADATA_FILE: _json_text(meta).encode("utf-8"),
        WEIGHTS_FILE: encode_weights(pipeline.model.state_dict()),
        REPORT_FILE: _json_text(report_dict).encode("utf-8"),
    }
    body = {
        "format_version": FORMAT_VERSION,
        "files": {name: _sha256(data) for name, data in files.items()},
        "fingerprint": {"config_sha256": config.fingerprint(), "seed": pipeline.model.seed},
        "weights": [
            {"name": p.name, "shape": list(p.shape)} for p in pipeline.model.parameters()
        ],
    }
    files[MANIFEST_FILE] = _render_manifest(body)
    return files


def save_artifact(pipeline: Pipeline, directory: str | os.PathLike, report: TrainingReport | None = None) -> dict[str, Any]:
    """Write the artifact directory; returns the manifest body."""
    root = Path(directory)
    files = artifact_files(pipeline, report)
    try:
        root.mkdir(parents=True, exist_ok=True)
        for name, data in files.items():
            tmp = root / f".{name}.tmp"
            tmp.write_bytes(data)
            os.replace(tmp, root / name)
    except OSError as exc:
        raise ArtifactIOError(str(root), exc.strerror or str(exc)) from None
    return json.loads(files[MANIFEST_FILE].split(b"\n", 1)[0])


def _read(root: Path, name: str) -> bytes:
    path = root / name
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise MissingFile(f"artifact file not found: {path}") from None
    except OSError as exc:
        raise ArtifactIOError(str(path), exc.strerror or str(exc)) from None


def read_manifest(directory: str | os.PathLike) -> dict[str, Any]:
    """Parse and self-verify MANIFEST; the version gate runs before the hash check."""
    raw = _read(Path(directory), MANIFEST_FILE)
    try:
        text = raw.decode("utf-8")
        line, rest = text.split("\n", 1)
        body = json.loads(line)
        version = body.get("format_version")
    except (UnicodeDecodeError, ValueError, AttributeError):
        raise CorruptArtifact(MANIFEST_FILE, "unreadable manifest") from None
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"artifact format version {version!r}, supported {FORMAT_VERSION}")
    if rest != f"sha256:{_sha256(line.encode('utf-8'))}\n":
        raise CorruptArtifact(MANIFEST_FILE, "manifest self-hash mismatch")
    return body


def load_artifact(directory: str | os.PathLike) -> tuple[Pipeline, TrainingReport | None]:
    """Verify every content hash, then rebuild the pipeline and its report."""
    root = Path(directory)
    if not root.is_dir():
        raise MissingFile(f"artifact directory not found: {root}")
    manifest = read_manifest(root)
    blobs = {}
    for name in CONTENT_FILES:
        data = _read(root, name)
        expected = manifest.get("files", {}).get(name)
        if expected != _sha256(data):
            raise CorruptArtifact(name, "content hash mismatch")
        blobs[name] = data
    try:
        config = compile_config(parse_document(blobs[CONFIG_FILE].decode("utf-8"), "json"))
        meta = {k: metadata_from_dict(v) for k, v in json.loads(blobs[METADATA_FILE]).items()}
        report_raw = json.loads(blobs[REPORT_FILE])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptArtifact(CONFIG_FILE, f"cannot rebuild pipeline: {exc}") from None
    state = decode_weights(blobs[WEIGHTS_FILE])
    model = build_model(config, meta, manifest["fingerprint"]["seed"])
    try:
        model.load_state_dict(state)
    except ShapeMismatch as exc:
        raise CorruptArtifact(WEIGHTS_FILE, str(exc)) from None
    report = TrainingReport.from_dict(report_raw) if report_raw is not None else None
    return Pipeline(config, meta, model), report


def predict_raw(pipeline: Pipeline, rows) -> list[dict[str, Any]]:
    """Raw rows in, raw-space predictions (plus probabilities) out, order preserved."""
    return predict_rows(pipeline, rows)
