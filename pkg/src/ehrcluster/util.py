"""Small shared helpers: deterministic seed derivation and CSV writing."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Mix integer parts into one 64-bit seed, deterministically.

    Used wherever a sub-seed must depend only on the base seed plus stable
    structural indices (restart number, embedding dimension, cohort index),
    never on execution order.
    """
    state = 0x9E3779B97F4A7C15
    for p in parts:
        state = _splitmix64((state + 0x9E3779B97F4A7C15 + (int(p) & _MASK64)) & _MASK64)
    return state


def rng_from(*parts: int) -> np.random.Generator:
    """Seeded generator keyed on ``derive_seed(*parts)``."""
    return np.random.default_rng(derive_seed(*parts))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write rows with a fixed header; '\\n' line endings for byte-stable output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(c) for c in row])


def _format_cell(value) -> str:
    # repr of a float is its shortest round-trip form, so identical floats
    # always serialize to identical bytes.
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)
