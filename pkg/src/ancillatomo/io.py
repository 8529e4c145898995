"""Artifact persistence: array containers, CSV tables, manifests and the map cache."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import struct
import zlib
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .recovery import RecoveryMap
from .scrambling import QuenchConfig, ScramblingMap, build_scrambling_map

MAGIC = b"ATAR"
VERSION = 1
CACHE_ENV = "ANCILLATOMO_CACHE"


class ArtifactError(ValueError):
    """Unreadable, mismatched or incomplete artifact."""


# ---------------------------------------------------------------------------
# atomic text/bytes
# ---------------------------------------------------------------------------

def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    tmp.replace(path)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    atomic_write_bytes(path, text.encode())


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def rows_to_csv_text(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    """RFC-4180 text; floats use repr so the output is reproducible bit for bit."""
    if columns is None:
        columns = list(rows[0]) if rows else []
        for r in rows:
            columns += [k for k in r if k not in columns]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> None:
    atomic_write_bytes(path, rows_to_csv_text(rows, columns).encode())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------------------
# array container
# ---------------------------------------------------------------------------

def write_container(path, kind: str, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """magic, version, header length, JSON header, then raw row-major arrays."""
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        b = a.tobytes()
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset,
                        "nbytes": len(b)})
        chunks.append(b)
        offset += len(b)
    payload = b"".join(chunks)
    head = {"kind": kind, "arrays": entries, "crc32": zlib.crc32(payload), **_jsonable(header)}
    hb = json.dumps(head, sort_keys=True).encode()
    atomic_write_bytes(path, MAGIC + struct.pack("<HI", VERSION, len(hb)) + hb + payload)


def read_container(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < 10 or data[:4] != MAGIC:
        raise ArtifactError(f"{path} is not an artifact container")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise ArtifactError(f"unsupported container version {version}")
    try:
        head = json.loads(data[10:10 + hlen])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArtifactError("corrupted container header") from exc
    if kind is not None and head.get("kind") != kind:
        raise ArtifactError(f"expected a {kind} container, found {head.get('kind')}")
    payload = data[10 + hlen:]
    if zlib.crc32(payload) != head.get("crc32"):
        raise ArtifactError("container payload checksum mismatch")
    arrays = {}
    for e in head["arrays"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return head, arrays


def save_map(path, smap: ScramblingMap, precision: str = "complex128") -> None:
    arrays = {"columns": np.asarray(smap.columns, dtype=np.int64)}
    if smap.amplitudes is not None:
        arrays["amplitudes"] = smap.amplitudes.astype(precision)
    else:
        arrays["dense"] = smap.dense.astype(precision)
    header = {"config_hash": smap.config_hash, "d_sys": smap.d_sys, "d_ext": smap.d_ext,
              "meta": smap.meta}
    write_container(path, "scrambling-map", header, arrays)


def load_map(path, expect_hash: str | None = None) -> ScramblingMap:
    head, arr = read_container(path, "scrambling-map")
    if expect_hash is not None and head["config_hash"] != expect_hash:
        raise ArtifactError("map belongs to a different configuration")
    return ScramblingMap(head["d_sys"], head["d_ext"], arr["columns"], amplitudes=arr.get("amplitudes"),
                         dense=arr.get("dense"), config_hash=head["config_hash"], meta=head.get("meta", {}))


def save_recovery(path, rec: RecoveryMap) -> None:
    arrays = {"q": rec.q, "t": rec.t, "sqrt_weights": rec.sqrt_weights}
    if rec.reference is not None:
        arrays["reference"] = np.asarray(rec.reference)
    header = {"flavor": rec.flavor, "config_hash": rec.smap.config_hash, "sigma_max": rec.sigma_max,
              "sigma_min": rec.sigma_min, "meta": rec.meta}
    write_container(path, "recovery-map", header, arrays)


def load_recovery(path, smap: ScramblingMap) -> RecoveryMap:
    head, arr = read_container(path, "recovery-map")
    if head["config_hash"] != smap.config_hash:
        raise ArtifactError("recovery map was built for a different scrambling map")
    return RecoveryMap(head["flavor"], smap, arr["q"], arr["t"], arr["sqrt_weights"], head["sigma_max"],
                       head["sigma_min"], arr.get("reference"), head.get("meta", {}))


def estimator_table_rows(o: np.ndarray) -> list[dict]:
    o = np.asarray(o)
    return [{"z": z, "re_o": float(v.real), "im_o": float(np.imag(v))} for z, v in enumerate(o)]


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_manifest(root, files: Iterable[str], provenance: dict) -> dict:
    """Hash chain over artifacts in the given order: link_i = sha256(link_{i-1} + name + sha_i)."""
    root = Path(root)
    link = hashlib.sha256(json.dumps(_jsonable(provenance), sort_keys=True).encode()).hexdigest()
    entries = []
    for name in files:
        digest = file_sha256(root / name)
        link = hashlib.sha256((link + name + digest).encode()).hexdigest()
        entries.append({"name": name, "sha256": digest, "chain": link})
    return {"provenance": provenance, "artifacts": entries, "head": link}


def verify_manifest(root, manifest: dict | None = None) -> list[str]:
    """Names of artifacts whose content or chain link no longer matches."""
    root = Path(root)
    manifest = read_json(root / "manifest.json") if manifest is None else manifest
    link = hashlib.sha256(json.dumps(manifest["provenance"], sort_keys=True).encode()).hexdigest()
    bad = []
    for e in manifest["artifacts"]:
        path = root / e["name"]
        digest = file_sha256(path) if path.exists() else ""
        link = hashlib.sha256((link + e["name"] + digest).encode()).hexdigest()
        if digest != e["sha256"] or link != e["chain"]:
            bad.append(e["name"])
    return bad


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def cache_dir() -> Path:
    root = os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "ancillatomo")
    return Path(root)


def cached_map(config: QuenchConfig, budget_mb: float | None = None, use_cache: bool = True
               ) -> tuple[ScramblingMap, bool]:
    """Load the map for ``config`` from the cache or build and store it.  Returns (map, hit)."""
    digest = config.digest()
    path = cache_dir() / f"map-{digest}.atar"
    if use_cache and path.exists():
        try:
            smap = load_map(path, digest)
            smap.ext = config.ext
            return smap, True
        except ArtifactError:
            pass
    smap = build_scrambling_map(config, budget_mb)
    if use_cache:
        save_map(path, smap)
    return smap, False
