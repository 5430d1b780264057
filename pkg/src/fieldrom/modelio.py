"""Network and basis files: a JSON manifest next to a flat float64 blob.

A saved net is two files, ``<stem>.json`` and ``<stem>.f64``.  The manifest
carries the topology (layer shapes, activation, omega0), hyperparameters and
standardization statistics; the blob holds every parameter array in layer
order, weights row-major then bias, little-endian float64.  Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoder import CONV_KERNEL, CONV_STRIDE, ConvEncoder
from .mlp import Mlp

FORMAT_TAG = "fieldrom-net-v1"


def _write_blob(path: Path, arrays) -> None:
    with open(path, "wb") as fh:
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_blob(path: Path, shapes) -> list[np.ndarray]:
    raw = np.fromfile(path, dtype="<f8")
    expected = sum(int(np.prod(shape, dtype=np.int64)) if shape else 1 for shape in shapes)
    if expected != raw.size:
        raise ValueError(
            f"{path}: blob has {raw.size} values, manifest expects {expected}"
        )
    arrays, ofs = [], 0
    for shape in shapes:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arrays.append(raw[ofs : ofs + n].reshape(shape).astype(np.float64))
        ofs += n
    return arrays


def save_mlp(stem, net: Mlp, meta: dict | None = None) -> None:
    stem = Path(stem)
    manifest = {
        "format": FORMAT_TAG,
        "kind": "mlp",
        "byte_order": "little",
        "activation": net.activation,
        "omega0": net.omega0,
        "layer_dims": [int(net.weights[0].shape[0])]
        + [int(w.shape[1]) for w in net.weights],
        "meta": meta or {},
    }
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2))
    arrays = []
    for w, b in zip(net.weights, net.biases):
        arrays.extend([w, b])
    _write_blob(stem.with_suffix(".f64"), arrays)


def load_mlp(stem):
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    if manifest.get("kind") != "mlp":
        raise ValueError(f"{stem}: not an mlp file")
    dims = manifest["layer_dims"]
    shapes = []
    for i in range(len(dims) - 1):
        shapes.extend([(dims[i], dims[i + 1]), (dims[i + 1],)])
    arrays = _read_blob(stem.with_suffix(".f64"), shapes)
    net = Mlp(arrays[0::2], arrays[1::2], manifest["activation"], manifest["omega0"])
    return net, manifest.get("meta", {})


def save_encoder(stem, enc: ConvEncoder, meta: dict | None = None) -> None:
    stem = Path(stem)
    manifest = {
        "format": FORMAT_TAG,
        "kind": "conv_encoder",
        "byte_order": "little",
        "p": int(enc.p),
        "d": int(enc.d),
        "kernel": CONV_KERNEL,
        "stride": CONV_STRIDE,
        "n_conv": len(enc.conv_weights),
        "head_dims": [int(enc.head.weights[0].shape[0])]
        + [int(w.shape[1]) for w in enc.head.weights],
        "meta": meta or {},
    }
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2))
    arrays = []
    for w, b in zip(enc.conv_weights, enc.conv_biases):
        arrays.extend([w, b])
    for w, b in zip(enc.head.weights, enc.head.biases):
        arrays.extend([w, b])
    _write_blob(stem.with_suffix(".f64"), arrays)


def load_encoder(stem):
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    if manifest.get("kind") != "conv_encoder":
        raise ValueError(f"{stem}: not a conv_encoder file")
    d = manifest["d"]
    shapes = []
    for _ in range(manifest["n_conv"]):
        shapes.extend([(CONV_KERNEL, d, d), (d,)])
    dims = manifest["head_dims"]
    for i in range(len(dims) - 1):
        shapes.extend([(dims[i], dims[i + 1]), (dims[i + 1],)])
    arrays = _read_blob(stem.with_suffix(".f64"), shapes)
    n_conv = manifest["n_conv"]
    conv = arrays[: 2 * n_conv]
    dense = arrays[2 * n_conv :]
    head = Mlp(dense[0::2], dense[1::2], "elu")
    enc = ConvEncoder(manifest["p"], d, conv[0::2], conv[1::2], head)
    return enc, manifest.get("meta", {})


def save_arrays(stem, named_arrays: dict, kind: str, meta: dict | None = None) -> None:
    """Generic container used for POD bases: named float64 arrays + manifest."""
    stem = Path(stem)
    manifest = {
        "format": FORMAT_TAG,
        "kind": kind,
        "byte_order": "little",
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in named_arrays.items()],
        "meta": meta or {},
    }
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2))
    _write_blob(stem.with_suffix(".f64"), list(named_arrays.values()))


def load_arrays(stem, kind: str):
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    if manifest.get("kind") != kind:
        raise ValueError(f"{stem}: expected kind {kind!r}, found {manifest.get('kind')!r}")
    shapes = [tuple(entry["shape"]) for entry in manifest["arrays"]]
    arrays = _read_blob(stem.with_suffix(".f64"), shapes)
    named = {entry["name"]: a for entry, a in zip(manifest["arrays"], arrays)}
    return named, manifest.get("meta", {})
