"""JSON encoding helpers: complex matrices as nested [re, im] pairs."""

from __future__ import annotations

import numpy as np


def complex_matrix_to_json(a: np.ndarray) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def complex_matrix_from_json(rows) -> np.ndarray:
    try:
        return np.array([[complex(c[0], c[1]) for c in row] for row in rows], dtype=complex)
    except (TypeError, IndexError) as exc:
        raise ValueError(f"malformed complex matrix payload: {exc}") from exc
