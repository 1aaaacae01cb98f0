"""Converter from the tabular cell-benchmark archive to the portable container."""

from .archive import ARCH_COUNT, DATASETS, OP_NAMES, ConversionError, convert, parse_arch_index
from .container import read, write
from .verify import verify

__all__ = [
    "ARCH_COUNT",
    "DATASETS",
    "OP_NAMES",
    "ConversionError",
    "convert",
    "parse_arch_index",
    "read",
    "write",
    "verify",
]
