"""Named-tensor archives with a JSON manifest.

Layout: an ASCII magic line, a fixed-width header length line, the JSON
manifest (sorted keys), then raw little-endian float64 buffers in
manifest order. Writing the same tensors and metadata twice yields
byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"KGXTENSORS1\n"


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"dtype": "<f8", "tensors": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(b"%016d\n" % len(header))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path} is not a tensor archive")
    pos = len(MAGIC)
    n = int(raw[pos : pos + 16])
    pos += 17
    header = json.loads(raw[pos : pos + n].decode("utf-8"))
    base = pos + n
    out = {}
    for e in header["tensors"]:
        buf = raw[base + e["offset"] : base + e["offset"] + e["nbytes"]]
        out[e["name"]] = np.frombuffer(buf, dtype="<f8").reshape(e["shape"]).astype(np.float64)
    return out, header["meta"]
