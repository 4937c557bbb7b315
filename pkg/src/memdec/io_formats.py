"""Binary and text persistence for datasets, checkpoints, fault maps, and
evaluation reports.

Binary files are little-endian with a 4-byte magic and a u16 format version;
loads are bit-exact round trips. Reports are JSON with sorted keys so equal
runs produce byte-identical files.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .analog_model import FaultMap
from .errors import CorruptFileError, UpgradeNeededError
from .rnn_decoder import DecoderParams
from .surface_code_sim import Dataset

DATASET_MAGIC = b"MDDS"
CHECKPOINT_MAGIC = b"MDCK"
FAULTMAP_MAGIC = b"MDFM"
FORMAT_VERSION = 1

_SPLIT_TAGS = ("train", "validation", "test")


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptFileError(f"truncated file while reading {what}")
    return data


def _check_header(fh, magic: bytes, what: str) -> None:
    got = _read_exact(fh, 4, f"{what} magic")
    if got != magic:
        raise CorruptFileError(f"bad magic {got!r} for {what} (expected {magic!r})")
    (version,) = struct.unpack("<H", _read_exact(fh, 2, f"{what} version"))
    if version != FORMAT_VERSION:
        raise UpgradeNeededError(
            f"{what} format version {version} needs a converter (supported: {FORMAT_VERSION})")


def save_dataset(dataset: Dataset, path) -> None:
    n = len(dataset)
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    buf.write(struct.pack("<HQB", dataset.rounds, dataset.seed & (2**64 - 1),
                          _SPLIT_TAGS.index(dataset.split_tag)))
    buf.write(struct.pack("<H", len(dataset.p_values)))
    buf.write(np.asarray(dataset.p_values, dtype="<f8").tobytes())
    buf.write(struct.pack("<Q", n))
    buf.write(dataset.p_index.astype("<u2").tobytes())
    buf.write(np.packbits(dataset.events.reshape(n, -1), axis=None).tobytes())
    buf.write(np.packbits(dataset.labels).tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        _check_header(fh, DATASET_MAGIC, "dataset")
        rounds, seed, tag = struct.unpack("<HQB", _read_exact(fh, 11, "dataset header"))
        if tag >= len(_SPLIT_TAGS):
            raise CorruptFileError(f"unknown split tag {tag}")
        (n_p,) = struct.unpack("<H", _read_exact(fh, 2, "p count"))
        p_values = np.frombuffer(_read_exact(fh, 8 * n_p, "p values"), dtype="<f8")
        (n,) = struct.unpack("<Q", _read_exact(fh, 8, "sample count"))
        p_index = np.frombuffer(_read_exact(fh, 2 * n, "p index"), dtype="<u2")
        bits_per_sample = (rounds + 1) * 4
        ev_bytes = (n * bits_per_sample + 7) // 8
        events = np.unpackbits(
            np.frombuffer(_read_exact(fh, ev_bytes, "events"), dtype=np.uint8),
            count=n * bits_per_sample).reshape(n, rounds + 1, 4)
        lab_bytes = (n + 7) // 8
        labels = np.unpackbits(
            np.frombuffer(_read_exact(fh, lab_bytes, "labels"), dtype=np.uint8),
            count=n)
        if fh.read(1):
            raise CorruptFileError("trailing bytes after dataset payload")
    return Dataset(events, labels, p_index.copy(), tuple(float(p) for p in p_values),
                   rounds, seed, _SPLIT_TAGS[tag])


def save_checkpoint(params: DecoderParams, path, metadata: dict | None = None) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    for tensor in params.tensors():
        shape = tensor.shape if tensor.ndim == 2 else (tensor.shape[0], 0)
        buf.write(struct.pack("<HH", *shape))
        buf.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[DecoderParams, dict]:
    tensors = []
    with open(path, "rb") as fh:
        _check_header(fh, CHECKPOINT_MAGIC, "checkpoint")
        for _ in range(4):
            rows, cols = struct.unpack("<HH", _read_exact(fh, 4, "tensor shape"))
            count = rows * (cols if cols else 1)
            data = np.frombuffer(_read_exact(fh, 8 * count, "tensor data"), dtype="<f8")
            tensors.append(data.reshape(rows, cols) if cols else data.copy())
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        meta = json.loads(_read_exact(fh, meta_len, "metadata") or b"{}")
        if fh.read(1):
            raise CorruptFileError("trailing bytes after checkpoint payload")
    return DecoderParams(*tensors), meta


def save_fault_map(fmap: FaultMap, path) -> None:
    buf = io.BytesIO()
    buf.write(FAULTMAP_MAGIC)
    buf.write(struct.pack("<H", FORMAT_VERSION))
    buf.write(struct.pack("<B", 2))
    for unit in (fmap.recurrent, fmap.evaluation):
        buf.write(struct.pack("<HH", *unit.shape))
        buf.write(np.packbits(unit.astype(np.uint8)).tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_fault_map(path) -> FaultMap:
    units = []
    with open(path, "rb") as fh:
        _check_header(fh, FAULTMAP_MAGIC, "fault map")
        (n_units,) = struct.unpack("<B", _read_exact(fh, 1, "unit count"))
        if n_units != 2:
            raise CorruptFileError(f"expected 2 units, got {n_units}")
        for _ in range(n_units):
            rows, cols = struct.unpack("<HH", _read_exact(fh, 4, "unit shape"))
            nbytes = (rows * cols + 7) // 8
            bits = np.unpackbits(
                np.frombuffer(_read_exact(fh, nbytes, "unit bits"), dtype=np.uint8),
                count=rows * cols)
            units.append(bits.reshape(rows, cols).astype(bool))
        if fh.read(1):
            raise CorruptFileError("trailing bytes after fault map payload")
    return FaultMap(units[0], units[1])


def save_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")


def load_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"report is not valid JSON: {exc}") from exc


def export_dataset_csv(dataset: Dataset, path) -> None:
    """One row per sample: p, the (rounds+1)*4 event bits (the final four are
    the perfect round), and the label."""
    rounds = dataset.rounds
    cols = [f"e{t}_{k}" for t in range(rounds + 1) for k in range(4)]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["p"] + cols + ["label"]) + "\n")
        flat = dataset.events.reshape(len(dataset), -1)
        for i in range(len(dataset)):
            p = dataset.p_values[dataset.p_index[i]]
            bits = ",".join(str(int(b)) for b in flat[i])
            fh.write(f"{p:.10g},{bits},{int(dataset.labels[i])}\n")


def export_curve_csv(report: dict, path) -> None:
    """CSV of curve points (p, lfr_mean, lfr_std) from a report dict."""
    with open(path, "w", newline="") as fh:
        fh.write("p,lfr_mean,lfr_std\n")
        for p, m, s in zip(report["p_values"], report["lfr_mean"], report["lfr_std"]):
            fh.write(f"{p:.10g},{m:.10g},{s:.10g}\n")
