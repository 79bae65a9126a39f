"""Canonical JSON emission helpers.

Serialized artifacts must be byte-identical across runs, so floats are
formatted explicitly (17 significant digits, enough to round-trip any
finite double) instead of relying on ``json.dumps`` float repr.
"""

import json

import numpy as np


def fmt_float(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError(f"non-finite float cannot be serialized: {x}")
    return f"{float(x):.17g}"


def fmt_str(s: str) -> str:
    return json.dumps(s, ensure_ascii=False)


def fmt_float_list(xs) -> str:
    return "[" + ", ".join(fmt_float(x) for x in xs) + "]"


def fmt_float_matrix(rows) -> str:
    return "[" + ", ".join(fmt_float_list(row) for row in rows) + "]"
