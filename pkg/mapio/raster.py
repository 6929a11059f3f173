"""
GRASS-compatible ASCII rasters.

    north: 100
    south: 0
    east: 200
    west: 0
    rows: 2
    cols: 2
    1 2
    3 *

Values are written with 6 significant digits; "*" marks a null cell, held as NaN
in memory.
"""

import logging
import os
from dataclasses import dataclass
from typing import Union

import numpy as np

from errors import RasterFormatError

logger = logging.getLogger(__name__)

HEADER_KEYS = ("north", "south", "east", "west", "rows", "cols")
NULL_TOKEN = "*"
VALUE_FORMAT = "%.6g"


@dataclass
class AsciiRaster:
    north: float
    south: float
    east: float
    west: float
    values: np.ndarray  # (rows, cols) float, NaN = null

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or 0 in self.values.shape:
            raise RasterFormatError(f"Raster values must be a non-empty 2-D grid, got shape {self.values.shape}")
        ns = (self.north - self.south) / self.rows
        ew = (self.east - self.west) / self.cols
        if ns <= 0 or ew <= 0 or not np.isclose(ns, ew, rtol=1e-9):
            raise RasterFormatError(
                f"Cells must be square: (north-south)/rows={ns:g}, (east-west)/cols={ew:g}")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def cell_side(self) -> float:
        return (self.east - self.west) / self.cols

    @property
    def cell_area(self) -> float:
        return self.cell_side ** 2

    @property
    def null_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    @classmethod
    def like(cls, geom, values, west: float = 0.0, south: float = 0.0) -> "AsciiRaster":
        """Raster on a landscape geometry with its south-west corner at (west, south)."""
        side = geom.cell_side
        return cls(north=south + geom.rows * side, south=south,
                   east=west + geom.cols * side, west=west, values=values)

    def same_extent(self, other: "AsciiRaster") -> bool:
        return (self.values.shape == other.values.shape
                and np.allclose([self.north, self.south, self.east, self.west],
                                [other.north, other.south, other.east, other.west]))

    def equals(self, other: "AsciiRaster") -> bool:
        """Bit-exact comparison, nulls matching nulls."""
        return (self.same_extent(other)
                and np.array_equal(self.values, other.values, equal_nan=True))


def _format_coordinate(value: float) -> str:
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def _format_value(value: float) -> str:
    if np.isnan(value):
        return NULL_TOKEN
    return VALUE_FORMAT % value


def _parse_token(token: str, path, line_no: int) -> float:
    if token == NULL_TOKEN:
        return np.nan
    try:
        value = float(token)
    except ValueError:
        raise RasterFormatError(f"{path}:{line_no}: non-numeric cell value {token!r}")
    if not np.isfinite(value):
        raise RasterFormatError(f"{path}:{line_no}: non-finite cell value {token!r}")
    return value


def read_raster(path: Union[str, os.PathLike]) -> AsciiRaster:
    """
    Parse an ASCII raster.

    Raises:
        FileNotFoundError: path does not exist
        RasterFormatError: malformed header, wrong number of rows or cells, bad token
    """
    with open(path, "r") as fid:
        lines = fid.read().splitlines()

    header = {}
    for line_no, line in enumerate(lines[:len(HEADER_KEYS)], start=1):
        key, sep, value = line.partition(":")
        key = key.strip().lower()
        if not sep or key not in HEADER_KEYS or key in header:
            raise RasterFormatError(f"{path}:{line_no}: expected one of {', '.join(HEADER_KEYS)}, got {line!r}")
        header[key] = value.strip()
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise RasterFormatError(f"{path}: header is missing {', '.join(missing)}")

    try:
        rows, cols = int(header["rows"]), int(header["cols"])
        bounds = {k: float(header[k]) for k in ("north", "south", "east", "west")}
    except ValueError as e:
        raise RasterFormatError(f"{path}: malformed header value ({e})")
    if rows <= 0 or cols <= 0:
        raise RasterFormatError(f"{path}: rows and cols must be positive")

    body = [(i, line.split()) for i, line in enumerate(lines[len(HEADER_KEYS):], start=len(HEADER_KEYS) + 1)]
    body = [(i, tokens) for i, tokens in body if tokens]
    if len(body) != rows:
        raise RasterFormatError(f"{path}: header declares {rows} rows, found {len(body)}")

    values = np.empty((rows, cols))
    for r, (line_no, tokens) in enumerate(body):
        if len(tokens) != cols:
            raise RasterFormatError(f"{path}:{line_no}: expected {cols} values, found {len(tokens)}")
        values[r] = [_parse_token(t, path, line_no) for t in tokens]

    return AsciiRaster(values=values, **bounds)


def write_raster(raster: AsciiRaster, path: Union[str, os.PathLike]) -> None:
    """Write `raster` to `path`; the parent directory must exist."""
    with open(path, "w") as fid:
        for key in HEADER_KEYS[:4]:
            fid.write(f"{key}: {_format_coordinate(getattr(raster, key))}\n")
        fid.write(f"rows: {raster.rows}\n")
        fid.write(f"cols: {raster.cols}\n")
        for row in raster.values:
            fid.write(" ".join(_format_value(v) for v in row))
            fid.write("\n")
