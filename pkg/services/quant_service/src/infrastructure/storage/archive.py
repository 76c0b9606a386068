"""
Binary archive container shared by every on-disk artifact.

Layout (little-endian):
    8 bytes   magic
    u32       format version
    u32       header length in bytes
    header    UTF-8 JSON, keys sorted; `arrays` lists name/dtype/shape/offset/length
    blob      float64 values; complex arrays are stored as interleaved (re, im)
"""

import json
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from src.config.logger_config import log
from src.core.exceptions import FormatError, StorageError, VersionError

PREAMBLE = struct.Struct("<8sII")
VALUE_DTYPE = np.dtype("<f8")
SUPPORTED_DTYPES = ("float64", "complex128")

Header = Dict[str, Any]
Arrays = Dict[str, np.ndarray]


class ArchiveCodec:
    """Encode and decode one archive kind, identified by its 8-byte magic."""

    def __init__(self, magic: bytes, version: int = 1):
        if len(magic) != 8:
            raise ValueError(f"Archive magic must be 8 bytes, got {magic!r}")
        self.magic = magic
        self.version = version

    @property
    def kind(self) -> str:
        return self.magic.rstrip(b"\0").decode("ascii")

    def encode(self, header: Header, arrays: Arrays) -> bytes:
        entries = []
        chunks = []
        offset = 0
        for name, array in arrays.items():
            array = np.asarray(array)
            if np.iscomplexobj(array):
                dtype = "complex128"
                values = np.ascontiguousarray(array, dtype=np.complex128).view(np.float64)
            else:
                dtype = "float64"
                values = np.ascontiguousarray(array, dtype=np.float64)
            raw = values.astype(VALUE_DTYPE, copy=False).tobytes()
            entries.append(
                {
                    "name": name,
                    "dtype": dtype,
                    "shape": list(array.shape),
                    "offset": offset,
                    "length": len(raw),
                }
            )
            chunks.append(raw)
            offset += len(raw)
        blob = b"".join(chunks)
        full_header = {
            **header,
            "arrays": entries,
            "blob_length": len(blob),
            "blob_crc32": zlib.crc32(blob),
        }
        header_bytes = json.dumps(full_header, sort_keys=True, separators=(",", ":")).encode(
            "utf-8"
        )
        return PREAMBLE.pack(self.magic, self.version, len(header_bytes)) + header_bytes + blob

    def decode(self, data: bytes) -> Tuple[int, Header, Arrays]:
        """
        Returns:
            (version, header, arrays)
        Raises:
            FormatError: On a wrong magic, truncation, a bad header or a corrupted blob.
            VersionError: If the version is newer than this codec.
        """
        if len(data) < PREAMBLE.size:
            raise FormatError(f"{self.kind} archive is truncated", offset=len(data))
        magic, version, header_length = PREAMBLE.unpack_from(data, 0)
        if magic != self.magic:
            raise FormatError(
                f"Not a {self.kind} archive (magic {magic!r})", offset=0
            )
        if version < 1 or version > self.version:
            raise VersionError(
                f"{self.kind} archive version {version} is not supported "
                f"(this build reads up to {self.version})"
            )

        header_end = PREAMBLE.size + header_length
        if len(data) < header_end:
            raise FormatError(f"{self.kind} header is truncated", offset=len(data))
        try:
            header = json.loads(data[PREAMBLE.size : header_end].decode("utf-8"))
        except UnicodeDecodeError as e:
            raise FormatError(
                f"{self.kind} header is not UTF-8", offset=PREAMBLE.size + e.start
            ) from e
        except json.JSONDecodeError as e:
            raise FormatError(
                f"{self.kind} header is not valid JSON: {e.msg}",
                offset=PREAMBLE.size + e.pos,
            ) from e
        if not isinstance(header, dict) or "arrays" not in header:
            raise FormatError(f"{self.kind} header lacks an array table", offset=PREAMBLE.size)

        blob = data[header_end:]
        if len(blob) != header.get("blob_length"):
            raise FormatError(
                f"{self.kind} blob holds {len(blob)} bytes, header declares "
                f"{header.get('blob_length')}",
                offset=header_end,
            )
        if zlib.crc32(blob) != header.get("blob_crc32"):
            raise FormatError(f"{self.kind} blob checksum mismatch", offset=header_end)

        arrays = {entry["name"]: self._array(entry, blob, header_end) for entry in header["arrays"]}
        return version, header, arrays

    def _array(self, entry: Dict[str, Any], blob: bytes, blob_start: int) -> np.ndarray:
        try:
            name, dtype, shape = entry["name"], entry["dtype"], tuple(entry["shape"])
            offset, length = int(entry["offset"]), int(entry["length"])
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"Malformed array entry {entry!r}", offset=blob_start) from e
        if dtype not in SUPPORTED_DTYPES:
            raise FormatError(f"Array {name} has unsupported dtype {dtype}", offset=blob_start)
        if offset < 0 or offset + length > len(blob) or length % VALUE_DTYPE.itemsize:
            raise FormatError(
                f"Array {name} lies outside the blob", offset=blob_start + max(offset, 0)
            )
        values = np.frombuffer(
            blob, dtype=VALUE_DTYPE, count=length // VALUE_DTYPE.itemsize, offset=offset
        ).astype(np.float64)
        if dtype == "complex128":
            values = values.view(np.complex128)
        expected = int(np.prod(shape)) if shape else 1
        if values.size != expected:
            raise FormatError(
                f"Array {name} holds {values.size} values for shape {shape}",
                offset=blob_start + offset,
            )
        return values.reshape(shape)

    def write(self, path: Union[str, Path], header: Header, arrays: Arrays) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(self.encode(header, arrays))
        except OSError as e:
            log.error("Failed to write archive", kind=self.kind, path=str(path), error=str(e))
            raise StorageError(f"Cannot write {path}: {e.strerror}", original_exception=e) from e
        log.debug("Archive written", kind=self.kind, path=str(path), arrays=len(arrays))
        return path

    def read(self, path: Union[str, Path]) -> Tuple[int, Header, Arrays]:
        path = Path(path)
        try:
            data = path.read_bytes()
        except FileNotFoundError as e:
            raise StorageError(f"File not found: {path}", original_exception=e) from e
        except OSError as e:
            raise StorageError(f"Cannot read {path}: {e.strerror}", original_exception=e) from e
        try:
            return self.decode(data)
        except (FormatError, VersionError) as e:
            log.warning("Rejected archive", kind=self.kind, path=str(path), error=e.message)
            raise
