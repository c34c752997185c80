"""Artifact writing: atomic files, metadata-stamped CSV/JSON, stage manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .states import STATE_ORDER_VERSION


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else (str(v) if math.isinf(v) else v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj, meta: dict | None = None) -> Path:
    if meta:
        obj = {**obj, "_meta": meta}
    return atomic_write(path, dumps(obj))


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return repr(v)
    return v


def write_csv(path, header, rows, meta: dict | None = None) -> Path:
    """CSV with optional ``# key=value`` metadata lines before the header."""
    buf = io.StringIO()
    for k, v in sorted((meta or {}).items()):
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return atomic_write(path, buf.getvalue())


def read_csv(path) -> tuple[list[dict], dict]:
    """Rows as dicts plus the metadata block."""
    meta = {}
    lines = []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            else:
                lines.append(line)
    return list(csv.DictReader(lines)), meta


def artifact_meta(config_hash: str, profile: str) -> dict:
    return {"config_hash": config_hash, "state_order": STATE_ORDER_VERSION, "profile": profile}


MANIFEST = "manifest.json"


def stage_manifest(stage: str, config_hash: str, profile: str, seed: int, inputs: dict, out_dir: Path, outputs) -> dict:
    out_dir = Path(out_dir)
    return {
        "stage": stage,
        "config_hash": config_hash,
        "state_order": STATE_ORDER_VERSION,
        "profile": profile,
        "seed": seed,
        "inputs": dict(sorted(inputs.items())),
        "outputs": {str(Path(p).relative_to(out_dir)): file_sha256(p) for p in sorted(map(str, outputs))},
    }


def manifest_is_current(path, config_hash: str, inputs: dict) -> bool:
    path = Path(path)
    if not path.exists():
        return False
    m = read_json(path)
    if m.get("config_hash") != config_hash or m.get("inputs") != dict(sorted(inputs.items())):
        return False
    root = path.parent.parent
    for rel, digest in m.get("outputs", {}).items():
        f = root / rel
        if not f.exists() or file_sha256(f) != digest:
            return False
    return True
