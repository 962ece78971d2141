"""
File formats for fields, orderings, measurements and remainders.

- CGO1 field files: 4-byte magic b"CGO1", little-endian u32 d, u32 n, then n^d complex
  samples as interleaved float64 (re, im) in row-major node order
- Ordering CSV: columns l, k_1, ..., k_d
- Measurement JSON: MeasurementVector.to_dict()
- Remainder export: CGO1 file for r plus a JSON sidecar
"""

import json
import logging
import struct
from typing import Any, Dict

import numpy as np
import pandas as pd

from .cgo import RemainderSolution
from .errors import FormatError
from .spectral import Field, FreqOrdering, TorusGrid
from .transform import MeasurementVector

logger = logging.getLogger(__name__)

FIELD_MAGIC = b"CGO1"
_HEADER = struct.Struct("<4sII")


def save_field(f: Field, output_file: str) -> str:
    """
    Write a field as a CGO1 file.

    Args:
        f: Field to save
        output_file: destination path

    Returns:
        Path to the saved file
    """
    samples = np.empty(f.values.size * 2, dtype="<f8")
    flat = f.values.ravel(order="C")
    samples[0::2] = flat.real
    samples[1::2] = flat.imag
    with open(output_file, "wb") as handle:
        handle.write(_HEADER.pack(FIELD_MAGIC, f.grid.d, f.grid.n))
        handle.write(samples.tobytes())
    logger.info("Saved %d^%d field to %s", f.grid.n, f.grid.d, output_file)
    return output_file


def read_field(input_file: str) -> Field:
    """
    Read a CGO1 field file.

    Raises:
        FormatError: bad magic, truncated payload or invalid grid header
    """
    with open(input_file, "rb") as handle:
        header = handle.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FormatError(f"{input_file}: file too short for a CGO1 header")
        magic, d, n = _HEADER.unpack(header)
        if magic != FIELD_MAGIC:
            raise FormatError(f"{input_file}: expected magic {FIELD_MAGIC!r}, found {magic!r}")
        payload = handle.read()
    try:
        grid = TorusGrid(d=d, n=n)
    except ValueError as e:
        raise FormatError(f"{input_file}: {e}") from e
    samples = np.frombuffer(payload, dtype="<f8")
    if samples.size != 2 * grid.size:
        raise FormatError(f"{input_file}: expected {2 * grid.size} float64 values, found {samples.size}")
    values = (samples[0::2] + 1j * samples[1::2]).reshape(grid.shape, order="C")
    return Field(grid, values)


def save_ordering_csv(ordering: FreqOrdering, output_file: str) -> str:
    ordering.to_frame().to_csv(output_file, index=False)
    logger.info("Saved %d %s frequencies to %s", len(ordering), ordering.kind, output_file)
    return output_file


def read_ordering_csv(input_file: str, kind: str) -> FreqOrdering:
    frame = pd.read_csv(input_file)
    columns = [c for c in frame.columns if c.startswith("k_")]
    if "l" not in frame.columns or not columns:
        raise FormatError(f"{input_file}: ordering CSV needs columns l, k_1, ..., k_d")
    frame = frame.sort_values("l")
    return FreqOrdering(kind, frame[columns].to_numpy(dtype=int))


def save_json(data: Dict[str, Any], output_file: str) -> str:
    with open(output_file, "w") as f:
        json.dump(data, f, indent=2)
    return output_file


def read_json(input_file: str) -> Dict[str, Any]:
    try:
        with open(input_file, "r") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{input_file}: invalid JSON ({e})") from e


def save_measurement(y: MeasurementVector, output_file: str) -> str:
    save_json(y.to_dict(), output_file)
    logger.info("Saved %d measurements to %s", y.N, output_file)
    return output_file


def read_measurement(input_file: str) -> MeasurementVector:
    data = read_json(input_file)
    try:
        return MeasurementVector.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{input_file}: malformed measurement file ({e})") from e


def save_remainder(solution: RemainderSolution, output_prefix: str) -> Dict[str, str]:
    """Write r as <prefix>.cgo1 and its metadata as <prefix>.json."""
    field_file = save_field(solution.r, f"{output_prefix}.cgo1")
    sidecar_file = save_json(solution.to_sidecar(), f"{output_prefix}.json")
    return {"field": field_file, "sidecar": sidecar_file}
