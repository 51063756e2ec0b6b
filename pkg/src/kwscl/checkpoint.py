"""Binary containers for models, class artifacts, feature buffers and CL state.

Everything is little-endian. See docs/formats.md for the byte layouts.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .features import KIND_LOGMEL, KIND_MFCC, MAP_RECORD_SIZE, PROVENANCES, pack_map, unpack_map
from .nn import KwsModel, param_shapes
from .prototypes import ClassArtifacts
from .quant import FixedMultiplier, QuantizedModel, QuantParams, _layer_io, quantize_model

MODEL_MAGIC = b"KWSM"
ARTIFACT_MAGIC = b"KWSA"
BUFFER_MAGIC = b"KWSB"
FORMAT_VERSION = 1

KIND_FLOAT, KIND_QUANT = 0, 1
DTYPES = {0: "<f4", 1: "i1", 2: "<i4"}
DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("int8"): 1, np.dtype("int32"): 2}

_HEAD = struct.Struct("<4sHB")
_QP = struct.Struct("<di")


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, fmt: str):
        s = struct.Struct(fmt)
        if self.pos + s.size > len(self.buf):
            raise CheckpointError("truncated file")
        out = s.unpack_from(self.buf, self.pos)
        self.pos += s.size
        return out if len(out) > 1 else out[0]

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def string(self) -> str:
        return self.raw(self.take("<H")).decode("utf-8")


def _string(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def _tensor(name: str, arr: np.ndarray, qp: QuantParams | None = None) -> bytes:
    arr = np.ascontiguousarray(arr)
    code = DTYPE_CODES[arr.dtype]
    out = _string(name) + struct.pack("<BB", code, arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    out += struct.pack("<B", qp is not None)
    if qp is not None:
        out += _QP.pack(qp.scale, qp.zero_point)
    return out + arr.astype(DTYPES[code]).tobytes()


def _read_tensor(r: _Reader):
    name = r.string()
    code, ndim = r.take("<BB")
    if code not in DTYPES:
        raise CheckpointError(f"unknown dtype code {code}")
    shape = tuple(struct.unpack(f"<{ndim}I", r.raw(4 * ndim)))
    qp = QuantParams(*r.take("<di")) if r.take("<B") else None
    dt = np.dtype(DTYPES[code])
    n = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(r.raw(n * dt.itemsize), dtype=dt).reshape(shape)
    return name, arr.astype(dt.newbyteorder("=")), qp


def _header(r: _Reader, magic: bytes):
    got, version, kind = r.take("<4sHB")
    if got != magic:
        raise CheckpointError(f"bad magic {got!r}")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    return kind


# ---------------------------------------------------------------------------
# models


def model_to_bytes(model: KwsModel) -> bytes:
    out = _HEAD.pack(MODEL_MAGIC, FORMAT_VERSION, KIND_FLOAT) + _string(model.arch)
    names = list(param_shapes(model.arch))
    out += struct.pack("<I", len(names))
    for name in names:
        out += _tensor(name, model.params[name].astype(np.float32))
    return out


def qmodel_to_bytes(qm: QuantizedModel) -> bytes:
    out = _HEAD.pack(MODEL_MAGIC, FORMAT_VERSION, KIND_QUANT) + _string(qm.arch)
    layers = [layer for layer, _, _ in _layer_io(qm.paths)]
    out += struct.pack("<I", 2 * len(layers))
    for layer in layers:
        out += _tensor(f"{layer}.weight", qm.weights[layer], qm.weight_params[layer])
        out += _tensor(f"{layer}.bias", qm.biases[layer])
    out += struct.pack("<I", len(qm.act_params))
    for site, qp in qm.act_params.items():
        out += _string(site) + _QP.pack(qp.scale, qp.zero_point)
    return out


def model_from_bytes(buf: bytes):
    """Decode either container kind; returns KwsModel or QuantizedModel."""
    r = _Reader(buf)
    kind = _header(r, MODEL_MAGIC)
    arch = r.string()
    if arch not in ("dual", "single"):
        raise CheckpointError(f"unknown architecture {arch!r}")
    records = [_read_tensor(r) for _ in range(r.take("<I"))]
    if kind == KIND_FLOAT:
        shapes = param_shapes(arch)
        params = {name: arr.astype(np.float64) for name, arr, _ in records}
        if set(params) != set(shapes) or any(params[k].shape != s for k, s in shapes.items()):
            raise CheckpointError("parameter records do not match the architecture")
        return KwsModel(arch, params)
    if kind != KIND_QUANT:
        raise CheckpointError(f"unknown container kind {kind}")
    sites = {}
    for _ in range(r.take("<I")):
        site = r.string()
        sites[site] = QuantParams(*r.take("<di"))
    return _rebuild_qmodel(arch, records, sites)


def _rebuild_qmodel(arch, records, sites) -> QuantizedModel:
    # rebuild through quantize_model so multipliers and the sigmoid table are derived identically
    from .nn import ARCH_PATHS
    paths = ARCH_PATHS[arch]
    weights, wparams, biases = {}, {}, {}
    for name, arr, qp in records:
        layer, what = name.rsplit(".", 1)
        if what == "weight":
            weights[layer], wparams[layer] = arr, qp
        else:
            biases[layer] = arr
    mults = {}
    for layer, src, dst in _layer_io(paths):
        mults[layer] = FixedMultiplier.from_real(sites[src].scale * wparams[layer].scale / sites[dst].scale)
    template = quantize_model(_zero_model(arch), sites)
    return QuantizedModel(arch, paths, weights, wparams, biases, sites, mults, template.sigmoid_lut)


def _zero_model(arch) -> KwsModel:
    return KwsModel(arch, {k: np.zeros(s) for k, s in param_shapes(arch).items()})


# ---------------------------------------------------------------------------
# artifacts


def artifacts_to_bytes(artifacts: dict[int, ClassArtifacts]) -> bytes:
    out = _HEAD.pack(ARTIFACT_MAGIC, FORMAT_VERSION, 0) + struct.pack("<I", len(artifacts))
    for c in sorted(artifacts):
        a = artifacts[c]
        proto = np.ascontiguousarray(a.prototype, dtype="<f8")
        out += struct.pack("<bdddI", c, a.mean_dist, a.std_dist, a.n_sigma, len(proto))
        out += proto.tobytes()
    return out


def artifacts_from_bytes(buf: bytes) -> dict[int, ClassArtifacts]:
    r = _Reader(buf)
    _header(r, ARTIFACT_MAGIC)
    out = {}
    for _ in range(r.take("<I")):
        c, mu, sd, ns, n = r.take("<bdddI")
        proto = np.frombuffer(r.raw(8 * n), dtype="<f8").astype(np.float64)
        out[c] = ClassArtifacts(c, proto, mu, sd, ns)
    return out


# ---------------------------------------------------------------------------
# feature buffers


def pairs_to_bytes(mfcc, logmel, labels, provenance: str = "rehearsal") -> bytes:
    out = _HEAD.pack(BUFFER_MAGIC, FORMAT_VERSION, 0) + struct.pack("<I", len(labels))
    prov = PROVENANCES.index(provenance)
    for m, l, y in zip(mfcc, logmel, labels):
        out += struct.pack("<bB", int(y), prov) + pack_map(KIND_MFCC, m) + pack_map(KIND_LOGMEL, l)
    return out


def pairs_from_bytes(buf: bytes):
    r = _Reader(buf)
    _header(r, BUFFER_MAGIC)
    n = r.take("<I")
    mfcc, logmel, labels = [], [], []
    for _ in range(n):
        y, _prov = r.take("<bB")
        k1, m = unpack_map(r.raw(MAP_RECORD_SIZE))
        k2, l = unpack_map(r.raw(MAP_RECORD_SIZE))
        if (k1, k2) != (KIND_MFCC, KIND_LOGMEL):
            raise CheckpointError("buffer entries must be (MFCC, LogMel) pairs")
        mfcc.append(m)
        logmel.append(l)
        labels.append(y)
    shape = (0, 20, 16)
    return (np.array(mfcc).reshape(shape if n == 0 else (n, 20, 16)),
            np.array(logmel).reshape(shape if n == 0 else (n, 20, 16)),
            np.array(labels, dtype=np.int64))


# ---------------------------------------------------------------------------
# files


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_model(path, model) -> None:
    data = qmodel_to_bytes(model) if isinstance(model, QuantizedModel) else model_to_bytes(model)
    _atomic_write(Path(path), data)


def load_model(path):
    return model_from_bytes(Path(path).read_bytes())


STATE_VERSION = 1


def save_state(directory, state, meta: dict | None = None) -> None:
    """Write a CL state snapshot taken right after an update.

    The effective-sample list is empty at that point, so only the rehearsal
    buffer is stored.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if state.model is not None:
        save_model(d / "model.kws", state.model)
    save_model(d / "qmodel.kws", state.qm)
    _atomic_write(d / "artifacts.bin", artifacts_to_bytes(state.artifacts))
    rb = state.rehearsal
    _atomic_write(d / "rehearsal.buf", pairs_to_bytes(rb.mfcc, rb.logmel, rb.labels))
    info = {"state_version": STATE_VERSION, "updates": state.updates}
    info.update(meta or {})
    _atomic_write(d / "meta.json", json.dumps(info, indent=2, sort_keys=True).encode())


def load_state(directory):
    from .cl import CLState, RehearsalBuffer
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    if meta.get("state_version") != STATE_VERSION:
        raise CheckpointError(f"unsupported state version {meta.get('state_version')}")
    model = load_model(d / "model.kws") if (d / "model.kws").exists() else None
    qm = load_model(d / "qmodel.kws")
    artifacts = artifacts_from_bytes((d / "artifacts.bin").read_bytes())
    rehearsal = RehearsalBuffer(*pairs_from_bytes((d / "rehearsal.buf").read_bytes()))
    state = CLState(qm, artifacts, rehearsal, model, [], meta["updates"])
    return state, meta
