"""RIRD binary corpus format and its JSON sidecar manifest.

Layout (little-endian, no padding):
    header  magic "RIRD" | version u16 | fs u32 | rir_len u32 | record_count u64 | mode u8
    record  dims 3xf64 | label 3xf64 | beta 6xf64 | rt60_target f64 (NaN in fixed mode)
            | source 3xf64 | receiver 3xf64 | samples rir_len x f32
"""
import hashlib
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from loguru import logger

from ..core.exceptions import DatasetFormatException
from .schemas import DatasetManifest, DatasetMode, DatasetSpec

MAGIC = b"RIRD"
FORMAT_VERSION = 1

HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("version", "<u2"),
    ("fs", "<u4"),
    ("rir_len", "<u4"),
    ("record_count", "<u8"),
    ("mode", "u1"),
])

PathLike = Union[str, Path]


def record_dtype(rir_len: int) -> np.dtype:
    return np.dtype([
        ("dims", "<f8", (3,)),
        ("label", "<f8", (3,)),
        ("beta", "<f8", (6,)),
        ("rt60_target", "<f8"),
        ("source", "<f8", (3,)),
        ("receiver", "<f8", (3,)),
        ("samples", "<f4", (rir_len,)),
    ])


@dataclass
class RirDataset:
    """A loaded DatasetFile: header fields plus the structured record array."""

    fs: int
    rir_len: int
    mode: DatasetMode
    records: np.ndarray
    path: Optional[Path] = None

    def __len__(self) -> int:
        return int(self.records.shape[0])

    @property
    def samples(self) -> np.ndarray:
        return self.records["samples"]

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self.records["label"], dtype=np.float64)

    @property
    def dims(self) -> np.ndarray:
        return np.asarray(self.records["dims"], dtype=np.float64)

    def room_ids(self) -> np.ndarray:
        """Room index of every record; records sharing dims belong to one room."""
        _, inverse = np.unique(self.dims, axis=0, return_inverse=True)
        return inverse.reshape(-1)

    @property
    def room_count(self) -> int:
        return int(np.unique(self.dims, axis=0).shape[0]) if len(self) else 0


def make_header(fs: int, rir_len: int, record_count: int, mode: DatasetMode) -> np.ndarray:
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = FORMAT_VERSION
    header["fs"] = fs
    header["rir_len"] = rir_len
    header["record_count"] = record_count
    header["mode"] = mode.code
    return header


def write_dataset(path: PathLike, dataset: RirDataset) -> Path:
    path = Path(path)
    records = np.ascontiguousarray(dataset.records, dtype=record_dtype(dataset.rir_len))
    with open(path, "wb") as f:
        make_header(dataset.fs, dataset.rir_len, len(records), dataset.mode).tofile(f)
        records.tofile(f)
    logger.info(f"Wrote {len(records)} records to {path}")
    return path


def read_header(path: PathLike) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DatasetFormatException(f"Dataset file not found: {path}")
    header = np.fromfile(path, dtype=HEADER_DTYPE, count=1)
    if header.shape[0] != 1 or header["magic"][0] != MAGIC:
        raise DatasetFormatException(f"{path} is not an RIRD dataset file")
    if int(header["version"][0]) != FORMAT_VERSION:
        raise DatasetFormatException(f"Unsupported RIRD version {int(header['version'][0])} in {path}")
    return header[0]


def read_dataset(path: PathLike, mmap: bool = True) -> RirDataset:
    path = Path(path)
    header = read_header(path)
    rir_len = int(header["rir_len"])
    count = int(header["record_count"])
    dtype = record_dtype(rir_len)

    expected = HEADER_DTYPE.itemsize + count * dtype.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise DatasetFormatException(
            f"{path} declares {count} records ({expected} bytes) but holds {actual} bytes"
        )

    if count == 0:
        records = np.zeros(0, dtype=dtype)
    elif mmap:
        records = np.memmap(path, dtype=dtype, mode="r", offset=HEADER_DTYPE.itemsize, shape=(count,))
    else:
        records = np.fromfile(path, dtype=dtype, count=count, offset=HEADER_DTYPE.itemsize)

    return RirDataset(
        fs=int(header["fs"]),
        rir_len=rir_len,
        mode=DatasetMode.from_code(int(header["mode"])),
        records=records,
        path=path,
    )


def is_dataset_file(path: PathLike) -> bool:
    with open(path, "rb") as f:
        return f.read(len(MAGIC)) == MAGIC


def read_raw_rir(path: PathLike, rir_len: int) -> np.ndarray:
    """A bare little-endian f32 sample dump, exactly rir_len values long."""
    raw = np.fromfile(Path(path), dtype="<f4")
    if raw.shape[0] != rir_len:
        raise DatasetFormatException(f"Raw RIR file {path} holds {raw.shape[0]} samples, expected {rir_len}")
    return raw.astype(np.float64)


def file_checksum(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def generator_version() -> str:
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, check=True
        )
        return result.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def manifest_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_manifest(path: PathLike, dataset: RirDataset, spec: Optional[DatasetSpec] = None) -> Path:
    manifest = DatasetManifest(
        spec=spec.model_dump(mode="json") if spec is not None else None,
        generator=generator_version(),
        checksum=file_checksum(path),
        record_count=len(dataset),
        rir_length=dataset.rir_len,
        sample_rate=dataset.fs,
    )
    target = manifest_path(path)
    target.write_text(manifest.model_dump_json(indent=2))
    return target


def read_manifest(path: PathLike) -> Optional[DatasetManifest]:
    target = manifest_path(path)
    if not target.exists():
        return None
    return DatasetManifest.model_validate_json(target.read_text())
